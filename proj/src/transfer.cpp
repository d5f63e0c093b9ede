#include "pairloc/transfer.hpp"

#include <stdexcept>

namespace pairloc {

using Eigen::MatrixXd;
using Eigen::VectorXd;

void BlendWeights::validate() const {
  if (!(lambda1 >= 0 && lambda1 <= 1) || !(lambda2 >= 0 && lambda2 <= 1)) {
    throw std::invalid_argument("blend weights must lie in [0, 1]");
  }
}

double blended_unary(const ScoringModel& model, const ClassId& cls, const Proposal& e,
                     const BlendWeights& weights) {
  weights.validate();
  double s = 0;
  if (weights.lambda2 < 1) s += (1 - weights.lambda2) * model.unary_forward(cls, e);
  if (weights.lambda2 > 0) s += weights.lambda2 * model.unary_forward(kGeneric, e);
  return s;
}

double blended_pairwise(const ScoringModel& model, const ClassId& cls, const Proposal& e,
                        const Proposal& e2, const BlendWeights& weights) {
  weights.validate();
  double s = 0;
  if (weights.lambda1 < 1) s += (1 - weights.lambda1) * model.pairwise_forward(cls, e, e2);
  if (weights.lambda1 > 0) s += weights.lambda1 * model.pairwise_forward(kGeneric, e, e2);
  return s;
}

BlendedScorer::BlendedScorer(const ScoringModel& model, ClassId cls, const BlendWeights& weights,
                             std::span<const Bag* const> bags)
    : model_(model), cls_(std::move(cls)), weights_(weights) {
  weights_.validate();
  std::vector<const Proposal*> props;
  for (const Bag* b : bags) {
    for (const Proposal& p : b->proposals) {
      if (slot_.emplace(&p, props.size()).second) props.push_back(&p);
    }
  }
  const auto count = static_cast<Eigen::Index>(props.size());
  auto project = [&](const Target& target, Projected& out) {
    const Embedding& emb = model_.embedding_for(target);
    const auto d = static_cast<Eigen::Index>(emb.dim());
    out.x.resize(d, count);
    for (Eigen::Index k = 0; k < count; ++k) {
      const auto f = features_for(target, *props[static_cast<std::size_t>(k)]);
      if (static_cast<Eigen::Index>(f.size()) != d) {
        throw std::invalid_argument("scorer: feature dimension does not match the model");
      }
      out.x.col(k) = Eigen::Map<const VectorXd>(f.data(), d);
    }
    out.left1 = emb.w1.leftCols(d) * out.x;
    out.right1 = emb.w1.rightCols(d) * out.x;
    out.left2 = emb.w2.leftCols(d) * out.x;
    out.right2 = emb.w2.rightCols(d) * out.x;
  };
  if (weights_.lambda1 < 1) {
    head_ = &model_.head_for(cls_);
    project(cls_, specific_);
  }
  if (weights_.lambda1 > 0) project(kGeneric, generic_);
}

double BlendedScorer::cached_pairwise(const Projected& p, const Embedding& emb,
                                      const PairwiseHead& head, std::size_t a,
                                      std::size_t b) const {
  const auto ia = static_cast<Eigen::Index>(a), ib = static_cast<Eigen::Index>(b);
  double s = head.bias;
  for (Eigen::Index r = 0; r < p.x.rows(); ++r) {
    const double t = std::tanh(p.left1(r, ia) + p.right1(r, ib) + emb.b1(r));
    const double g = sigmoid(p.left2(r, ia) + p.right2(r, ib) + emb.b2(r));
    s += head.weight(r) * (t * g + 0.5 * (p.x(r, ia) + p.x(r, ib)));
  }
  return s;
}

double BlendedScorer::unary(const Bag& bag, std::size_t index) const {
  const Proposal& e = bag.proposals.at(index);
  double s = 0;
  if (weights_.lambda2 < 1) {
    specific_calls_.fetch_add(1, std::memory_order_relaxed);
    s += (1 - weights_.lambda2) * model_.unary_forward(cls_, e);
  }
  if (weights_.lambda2 > 0) {
    generic_calls_.fetch_add(1, std::memory_order_relaxed);
    s += weights_.lambda2 * model_.unary_forward(kGeneric, e);
  }
  return s;
}

double BlendedScorer::pairwise(const Bag& a, std::size_t i, const Bag& b, std::size_t j) const {
  const Proposal& e = a.proposals.at(i);
  const Proposal& e2 = b.proposals.at(j);
  auto sa = slot_.find(&e), sb = slot_.find(&e2);
  const bool cached = sa != slot_.end() && sb != slot_.end();
  double s = 0;
  if (weights_.lambda1 < 1) {
    specific_calls_.fetch_add(1, std::memory_order_relaxed);
    const double v = cached ? cached_pairwise(specific_, model_.embedding, *head_,
                                              sa->second, sb->second)
                            : model_.pairwise_forward(cls_, e, e2);
    s += (1 - weights_.lambda1) * v;
  }
  if (weights_.lambda1 > 0) {
    generic_calls_.fetch_add(1, std::memory_order_relaxed);
    const double v =
        cached ? cached_pairwise(generic_, model_.generic_pairwise.embedding,
                                 model_.generic_pairwise.head, sa->second, sb->second)
               : model_.pairwise_forward(kGeneric, e, e2);
    s += weights_.lambda1 * v;
  }
  return s;
}

}  // namespace pairloc
