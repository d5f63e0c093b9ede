#pragma once

#include <Eigen/Dense>
#include <atomic>
#include <span>
#include <unordered_map>

#include "pairloc/graph.hpp"
#include "pairloc/scoring.hpp"

namespace pairloc {

/// Weight of the class-generic (transferred) scores: lambda1 for pairwise,
/// lambda2 for unary.
struct BlendWeights {
  double lambda1 = 0.5;
  double lambda2 = 0.5;

  void validate() const;
};

/// (1 - lambda2) psi_U_c(e) + lambda2 psi_U(e). A branch whose weight is zero
/// is not evaluated.
double blended_unary(const ScoringModel& model, const ClassId& cls, const Proposal& e,
                     const BlendWeights& weights);

/// (1 - lambda1) psi_P_c(e, e') + lambda1 psi_P(e, e').
double blended_pairwise(const ScoringModel& model, const ClassId& cls, const Proposal& e,
                        const Proposal& e2, const BlendWeights& weights);

/// Blended scores of one class. The embedding projections W_left e and
/// W_right e of every proposal in `bags` are computed once, so a pairwise
/// score costs O(d). Proposals outside `bags` take the direct path.
class BlendedScorer : public BagScorer {
 public:
  BlendedScorer(const ScoringModel& model, ClassId cls, const BlendWeights& weights,
                std::span<const Bag* const> bags);

  double unary(const Bag& bag, std::size_t index) const override;
  double pairwise(const Bag& a, std::size_t i, const Bag& b, std::size_t j) const override;

  /// Forward evaluations of the class-specific and class-generic branches.
  std::uint64_t specific_calls() const { return specific_calls_.load(); }
  std::uint64_t generic_calls() const { return generic_calls_.load(); }

 private:
  struct Projected {
    Eigen::MatrixXd x, left1, right1, left2, right2;
  };
  double cached_pairwise(const Projected& p, const Embedding& emb, const PairwiseHead& head,
                         std::size_t a, std::size_t b) const;

  const ScoringModel& model_;
  ClassId cls_;
  BlendWeights weights_;
  const PairwiseHead* head_ = nullptr;
  std::unordered_map<const Proposal*, std::size_t> slot_;
  Projected specific_, generic_;
  mutable std::atomic<std::uint64_t> specific_calls_{0};
  mutable std::atomic<std::uint64_t> generic_calls_{0};
};

}  // namespace pairloc
