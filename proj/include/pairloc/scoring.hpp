#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "pairloc/data.hpp"
#include "pairloc/losses.hpp"

namespace pairloc {

/// Which scoring function to evaluate: a target class, or the class-generic
/// function learned on the source set (std::nullopt).
using Target = std::optional<ClassId>;
inline const Target kGeneric = std::nullopt;

/// psi(e) = w^T e + b
struct LinearUnary {
  Eigen::VectorXd weight;
  double bias = 0;

  double forward(const Eigen::Ref<const Eigen::VectorXd>& e) const;
};

/// Gated joint embedding of an ordered proposal pair:
///   E(e, e') = tanh(W1 [e, e'] + b1) * sigmoid(W2 [e, e'] + b2) + (e + e') / 2
/// W1, W2 are d x 2d, b1, b2 have length d.
struct Embedding {
  Eigen::MatrixXd w1, w2;
  Eigen::VectorXd b1, b2;

  std::size_t dim() const { return static_cast<std::size_t>(b1.size()); }
  Eigen::VectorXd forward(const Eigen::Ref<const Eigen::VectorXd>& e,
                          const Eigen::Ref<const Eigen::VectorXd>& e2) const;
};

/// Linear head over an embedding: s = w^T E + b.
struct PairwiseHead {
  Eigen::VectorXd weight;
  double bias = 0;
};

struct RelationPairwise {
  Embedding embedding;
  PairwiseHead head;

  double forward(const Eigen::Ref<const Eigen::VectorXd>& e,
                 const Eigen::Ref<const Eigen::VectorXd>& e2) const;
};

/// All scoring parameters: a linear unary per target class, per-class pairwise
/// heads over one shared embedding, and the class-generic counterparts.
///
/// Gradients and optimizer velocity use the same type, so every parameter
/// block has a matching block in them.
class ScoringModel {
 public:
  ScoringModel() = default;

  /// Weights uniform in +-1/sqrt(fan_in), biases zero.
  static ScoringModel initialized(std::size_t dim, std::size_t generic_dim,
                                  const std::vector<ClassId>& classes, std::uint64_t seed);
  static ScoringModel zeros_like(const ScoringModel& other);

  std::size_t dim() const { return dim_; }
  std::size_t generic_dim() const { return generic_dim_; }
  const std::vector<ClassId>& classes() const { return classes_; }
  bool has_class(const ClassId& c) const { return unary.count(c) != 0; }

  double unary_forward(const Target& target, const Proposal& e) const;
  Eigen::VectorXd embed(const Target& target, const Proposal& e, const Proposal& e2) const;
  double pairwise_forward(const Target& target, const Proposal& e, const Proposal& e2) const;

  const LinearUnary& unary_for(const Target& target) const;
  const PairwiseHead& head_for(const Target& target) const;
  const Embedding& embedding_for(const Target& target) const;

  /// Every parameter block in a fixed order (generic first, then shared
  /// embedding, then classes in sorted order).
  std::vector<std::span<double>> parameter_blocks();
  std::vector<std::span<const double>> parameter_blocks() const;
  std::size_t parameter_count() const;

  LinearUnary generic_unary;
  RelationPairwise generic_pairwise;
  Embedding embedding;
  std::map<ClassId, LinearUnary> unary;
  std::map<ClassId, PairwiseHead> heads;

 private:
  friend ScoringModel model_from_parts(std::size_t, std::size_t, std::vector<ClassId>);
  std::size_t dim_ = 0;
  std::size_t generic_dim_ = 0;
  std::vector<ClassId> classes_;
};

/// Empty-parameter model with the given shape; used by deserialization.
ScoringModel model_from_parts(std::size_t dim, std::size_t generic_dim,
                              std::vector<ClassId> classes);

/// Feature block a target reads from a proposal.
std::span<const double> features_for(const Target& target, const Proposal& p);

struct UnaryTerm {
  const Proposal* proposal = nullptr;
  Target target;
  double label = 0;
};

struct PairTerm {
  const Proposal* first = nullptr;
  const Proposal* second = nullptr;
  Target target;
  double label = 0;
};

/// Labeled terms; loss = unary_weight * sum(unary ce) + pairwise_weight * sum(pair ce).
struct Minibatch {
  std::vector<UnaryTerm> unary;
  std::vector<PairTerm> pairwise;
  double unary_weight = 1.0;
  double pairwise_weight = 1.0;
};

/// Loss by direct forward evaluation of every term.
double minibatch_loss(const ScoringModel& model, const Minibatch& batch);

/// Writes the exact gradient of minibatch_loss into `grad` (overwritten) and
/// returns the loss. Consecutive pair terms over the same ordered pair share
/// one embedding evaluation.
double gradients(const ScoringModel& model, const Minibatch& batch, ScoringModel& grad);

struct TrainConfig {
  double learning_rate = 1e-2;
  double momentum = 0.9;
  int iterations = 200;
  int fg_per_bag = 3;
  int bg_per_bag = 7;
  // Bags per step are drawn class-stratified: classes_per_step classes, then
  // bags_per_step / classes_per_step positive bags of each.
  int bags_per_step = 8;
  int classes_per_step = 4;
  std::uint64_t seed = 0;

  void validate() const;
};

/// v <- momentum * v - learning_rate * g;  theta <- theta + v
void sgd_step(ScoringModel& model, const ScoringModel& grad, const TrainConfig& config,
              ScoringModel& velocity);

/// Builds the minibatch of one re-training step from pseudo labels. Each
/// sampled bag contributes fg_per_bag proposals labeled 1 and bg_per_bag
/// labeled 0; unary terms cover every class and pairwise terms cover every
/// class over all ordered cross-bag sample pairs. Terms are averaged per kind
/// (unary mean + alpha * pairwise mean).
class RetrainSampler {
 public:
  RetrainSampler(const Dataset& dataset, const Selections& selections,
                 const LossWeights& weights, const TrainConfig& config);
  Minibatch next(std::mt19937_64& rng) const;

 private:
  const Dataset& dataset_;
  LossWeights weights_;
  TrainConfig config_;
  std::vector<ClassId> classes_;
  std::vector<const Selection*> selections_;
  std::vector<std::vector<std::size_t>> positives_;
};

/// Minibatches for the class-generic functions: objectness label (any
/// non-background class) and the same-class relation.
class SourceSampler {
 public:
  SourceSampler(const Dataset& source, const LossWeights& weights, const TrainConfig& config);
  Minibatch next(std::mt19937_64& rng) const;

 private:
  const Dataset& source_;
  LossWeights weights_;
  TrainConfig config_;
  std::vector<std::vector<std::size_t>> positives_;
};

/// Per-step minibatch losses of a training run.
using LossTrace = std::vector<double>;

/// Trains the class-specific functions on pseudo labels (see RetrainSampler).
LossTrace retrain(ScoringModel& model, const Dataset& dataset, const Selections& selections,
                  const LossWeights& weights, const TrainConfig& config);

/// Trains the class-generic functions on a fully labeled source set.
LossTrace train_source(ScoringModel& model, const Dataset& source, const LossWeights& weights,
                       const TrainConfig& config);

}  // namespace pairloc
