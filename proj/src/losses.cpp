#include "pairloc/losses.hpp"

#include <cmath>
#include <numeric>

namespace pairloc {

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double z = std::exp(x);
  return z / (1.0 + z);
}

double sigmoid_ce(double x, double y) {
  if (!(y >= 0.0 && y <= 1.0)) throw std::invalid_argument("sigmoid_ce: label outside [0, 1]");
  return std::max(x, 0.0) - x * y + std::log1p(std::exp(-std::abs(x)));
}

double unary_loss(const UnaryScores& scores, const Selection& selection,
                  std::span<const Bag* const> bags) {
  if (scores.size() != bags.size()) throw DataError("unary_loss: score table does not match bags");
  double total = 0;
  for (std::size_t k = 0; k < bags.size(); ++k) {
    const Bag& bag = *bags[k];
    if (scores[k].size() != bag.size()) {
      throw DataError("unary_loss: missing scores for bag '" + bag.id + "'");
    }
    for (std::size_t i = 0; i < bag.size(); ++i) {
      total += sigmoid_ce(scores[k][i], unary_label(selection, bag, i));
    }
  }
  return total;
}

double pairwise_loss(std::span<const PairScore> scores, const Selection& selection,
                     std::span<const Bag* const> bags) {
  double total = 0;
  for (const PairScore& p : scores) {
    if (p.bag_a >= bags.size() || p.bag_b >= bags.size()) {
      throw DataError("pairwise_loss: bag index out of range");
    }
    const Bag& a = *bags[p.bag_a];
    const Bag& b = *bags[p.bag_b];
    if (p.bag_a == p.bag_b) throw DataError("pairwise_loss: same-bag pair");
    if (p.index_a >= a.size() || p.index_b >= b.size()) {
      throw DataError("pairwise_loss: proposal index out of range");
    }
    total += sigmoid_ce(p.score, induced_pairwise(selection, a, p.index_a, b, p.index_b));
  }
  return total;
}

double combined_loss(double unary_part, double pairwise_part, const LossWeights& weights) {
  if (weights.alpha < 0) throw std::invalid_argument("combined_loss: alpha must be >= 0");
  return weights.alpha * pairwise_part + unary_part;
}

double total_loss(std::span<const double> per_class) {
  return std::accumulate(per_class.begin(), per_class.end(), 0.0);
}

}  // namespace pairloc
