#pragma once

#include <random>
#include <string>
#include <vector>

#include "pairloc/data.hpp"
#include "pairloc/graph.hpp"

namespace pairloc::testing {

inline Proposal make_proposal(std::vector<double> features) {
  Proposal p;
  p.features = std::move(features);
  return p;
}

inline Bag make_bag(const std::string& id, std::size_t proposals, std::set<ClassId> labels,
                    std::size_t dim = 2) {
  Bag bag;
  bag.id = id;
  bag.labels = std::move(labels);
  for (std::size_t i = 0; i < proposals; ++i) {
    bag.proposals.push_back(make_proposal(std::vector<double>(dim, static_cast<double>(i))));
  }
  return bag;
}

/// Bags with Gaussian features; bag k is labeled with classes[k % classes.size()].
inline Dataset random_dataset(std::size_t bags, std::size_t proposals, std::size_t dim,
                              const std::vector<ClassId>& classes, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01;
  std::vector<Bag> out;
  for (std::size_t b = 0; b < bags; ++b) {
    Bag bag;
    bag.id = "b" + std::to_string(b);
    bag.labels = {classes[b % classes.size()]};
    for (std::size_t i = 0; i < proposals; ++i) {
      Proposal p;
      for (std::size_t k = 0; k < dim; ++k) p.features.push_back(n01(rng));
      bag.proposals.push_back(std::move(p));
    }
    out.push_back(std::move(bag));
  }
  return Dataset(std::move(out));
}

/// Feasible selection choosing proposal `index % size` in each positive bag.
inline Selection select_fixed(const Dataset& d, const ClassId& c, std::size_t index = 0) {
  Selection s{c, {}};
  for (const Bag& bag : d.bags()) {
    if (bag.has_label(c)) s.chosen[bag.id] = index % bag.size();
  }
  return s;
}

/// Raw potentials of a random labeling problem, N(0, 1) entries.
struct RandomTables {
  std::vector<std::vector<double>> unary;
  std::vector<std::vector<double>> edges;  // per pair i < j, row-major

  GraphProblem problem() const { return problem_from_tables(unary, edges); }
};

inline RandomTables random_tables(std::size_t m, std::size_t b, std::uint64_t seed,
                                  double edge_scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01;
  RandomTables t;
  for (std::size_t i = 0; i < m; ++i) {
    t.unary.emplace_back();
    for (std::size_t x = 0; x < b; ++x) t.unary.back().push_back(n01(rng));
  }
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = i + 1; j < m; ++j) {
      t.edges.emplace_back();
      for (std::size_t k = 0; k < b * b; ++k) t.edges.back().push_back(edge_scale * n01(rng));
    }
  }
  return t;
}

}  // namespace pairloc::testing
