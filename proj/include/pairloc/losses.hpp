#pragma once

#include <span>
#include <vector>

#include "pairloc/data.hpp"

namespace pairloc {

struct LossWeights {
  double alpha = 1.0;  // weight of the pairwise loss, >= 0
};

/// Logistic function, evaluated without overflow for any finite x.
double sigmoid(double x);

/// Sigmoid cross entropy of logit x against a soft label y in [0, 1]:
///   -(1 - y) log(1 - sigmoid(x)) - y log(sigmoid(x))
/// computed as max(x, 0) - x y + log(1 + exp(-|x|)).
double sigmoid_ce(double x, double y);

/// Per-bag unary logits, aligned with the bag's proposals.
using UnaryScores = std::vector<std::vector<double>>;

/// Sum of sigmoid_ce over every proposal of `bags` against the unary labels
/// induced by `selection`. `scores[k][i]` belongs to bags[k].proposals[i].
double unary_loss(const UnaryScores& scores, const Selection& selection,
                  std::span<const Bag* const> bags);

/// Ordered cross-bag pair with its logit.
struct PairScore {
  std::size_t bag_a = 0, index_a = 0;  // positions in `bags`
  std::size_t bag_b = 0, index_b = 0;
  double score = 0;
};

/// Sum of sigmoid_ce over the given ordered pairs against the induced pairwise
/// labels. Pairs within one bag are rejected.
double pairwise_loss(std::span<const PairScore> scores, const Selection& selection,
                     std::span<const Bag* const> bags);

/// alpha * pairwise + unary.
double combined_loss(double unary_part, double pairwise_part, const LossWeights& weights);

/// Sum of the per-class combined losses.
double total_loss(std::span<const double> per_class);

}  // namespace pairloc
