#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "pairloc/data.hpp"

namespace pairloc {

/// One label (proposal index) per node.
using Labeling = std::vector<std::size_t>;

/// Scores of one class over bags. Pairwise scores are ordered: pairwise(a, i,
/// b, j) scores (a[i], b[j]) and need not equal pairwise(b, j, a, i).
class BagScorer {
 public:
  virtual ~BagScorer() = default;
  virtual double unary(const Bag& bag, std::size_t index) const = 0;
  virtual double pairwise(const Bag& a, std::size_t i, const Bag& b, std::size_t j) const = 0;
};

/// Ordered score callbacks over node indices.
struct NodeScores {
  std::function<double(std::size_t node, std::size_t label)> unary;
  std::function<double(std::size_t a, std::size_t la, std::size_t b, std::size_t lb)> pairwise;
};

enum class BuildMode { eager, lazy };

struct EvalCounts {
  std::uint64_t pairwise_evals = 0;
  std::uint64_t unary_evals = 0;
};

/// Re-localization of one class as a labeling problem on a complete graph.
///
/// Nodes are positive bags and labels their proposals. Potentials are
///   unary(i, x)          = -unary_score(i, x)
///   edge(i, x, j, y)     = -alpha * (pairwise(i, x, j, y) + pairwise(j, y, i, x))
/// so the energy of a labeling equals -alpha r^T psi_P - y^T psi_U restricted
/// to the positive bags.
///
/// Eager problems hold every edge entry. Lazy problems evaluate an edge on
/// first use and memoize it; memo hits are not counted. Edge queries are safe
/// to issue from several threads. A lazy problem keeps the score callbacks,
/// so whatever they reference must outlive it.
class GraphProblem {
 public:
  GraphProblem() = default;

  std::size_t size() const { return labels_.size(); }
  std::size_t labels(std::size_t node) const { return labels_[node]; }
  std::size_t max_labels() const { return max_labels_; }
  double alpha() const { return alpha_; }
  bool lazy() const { return mode_ == BuildMode::lazy; }

  double unary(std::size_t node, std::size_t label) const;
  /// Symmetric: edge(i, x, j, y) == edge(j, y, i, x). Requires i != j.
  double edge(std::size_t i, std::size_t x, std::size_t j, std::size_t y) const;

  /// Bag ids of the nodes (empty strings for problems built from tables).
  const std::vector<BagId>& node_ids() const { return ids_; }
  /// Label of the whole-image proposal of each node, when known.
  const std::vector<std::optional<std::size_t>>& full_image_labels() const { return full_image_; }

  /// Score evaluations so far, including those made through sub-problems.
  EvalCounts counts() const;

  /// Eager problem over a subset of nodes; edge entries come from this
  /// problem (and its memo and counters).
  GraphProblem subproblem(std::span<const std::size_t> nodes) const;

  Selection to_selection(const ClassId& cls, const Labeling& labeling) const;
  Labeling from_selection(const Selection& selection) const;

  friend GraphProblem build_graph(std::vector<BagId>, std::vector<std::size_t>, NodeScores,
                                  double, BuildMode);
  friend GraphProblem build_graph(std::span<const Bag* const>, const BagScorer&, double,
                                  BuildMode);
  friend GraphProblem problem_from_tables(std::vector<std::vector<double>>,
                                          std::vector<std::vector<double>>);

 private:
  struct Lazy;

  std::size_t pair_offset(std::size_t i, std::size_t j) const;
  double evaluate_edge(std::size_t i, std::size_t x, std::size_t j, std::size_t y) const;

  std::vector<BagId> ids_;
  std::vector<std::size_t> labels_;
  std::vector<std::optional<std::size_t>> full_image_;
  std::size_t max_labels_ = 0;
  double alpha_ = 0;
  BuildMode mode_ = BuildMode::eager;
  std::vector<std::vector<double>> unary_;
  // Eager storage: for i < j, entries of (i, j) start at offsets_[i][j] and
  // are laid out row-major over (x_i, x_j).
  std::vector<std::vector<std::size_t>> offsets_;
  std::vector<double> edges_;
  EvalCounts eager_counts_;
  std::shared_ptr<Lazy> lazy_;
};

/// Builds the problem of one class from node scores. Unary scores are always
/// evaluated up front; pairwise scores up front (eager) or on demand (lazy).
/// alpha == 0 gives an all-zero edge set without any pairwise evaluation.
GraphProblem build_graph(std::vector<BagId> ids, std::vector<std::size_t> label_counts,
                         NodeScores scores, double alpha, BuildMode mode);

/// Problem over the given positive bags. `bags` and `scorer` must outlive a
/// lazy problem.
GraphProblem build_graph(std::span<const Bag* const> bags, const BagScorer& scorer, double alpha,
                         BuildMode mode);

/// Eager problem given raw potentials. `edges` holds one row-major table per
/// node pair (i < j) in lexicographic pair order.
GraphProblem problem_from_tables(std::vector<std::vector<double>> unary,
                                 std::vector<std::vector<double>> edges);

/// Sum of unary potentials plus edge potentials over i < j.
double energy(const GraphProblem& problem, const Labeling& labeling);
double energy(const GraphProblem& problem, const Selection& selection);

/// Energy change when `node` switches to `new_label`, using O(M) edge queries.
double delta_energy(const GraphProblem& problem, const Labeling& labeling, std::size_t node,
                    std::size_t new_label);

/// unary(node, x) plus edges to every other node at its current label.
double conditional_energy(const GraphProblem& problem, const Labeling& labeling,
                          std::size_t node, std::size_t label);

struct BruteForceResult {
  Labeling labeling;
  double energy = 0;
};

/// Exhaustive minimum; ties go to the lexicographically smallest labeling.
/// Throws std::invalid_argument when the labeling space exceeds `limit`.
BruteForceResult brute_force(const GraphProblem& problem, std::uint64_t limit = 1000000);

}  // namespace pairloc
