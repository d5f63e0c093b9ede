#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <random>
#include <thread>

#include "doctest.h"
#include "helpers.hpp"
#include "pairloc/graph.hpp"
#include "pairloc/losses.hpp"

using namespace pairloc;
using namespace pairloc::testing;

namespace {

// Random score tables keyed by bag position in the dataset.
class TableScorer : public BagScorer {
 public:
  TableScorer(const Dataset& d, std::uint64_t seed) : d_(d) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n01;
    for (const Bag& b : d.bags()) {
      for (std::size_t i = 0; i < b.size(); ++i) unary_[{&b, i}] = n01(rng);
    }
    for (const Bag& a : d.bags()) {
      for (const Bag& b : d.bags()) {
        for (std::size_t i = 0; i < a.size(); ++i) {
          for (std::size_t j = 0; j < b.size(); ++j) pair_[{&a, i, &b, j}] = n01(rng);
        }
      }
    }
  }
  double unary(const Bag& bag, std::size_t i) const override { return unary_.at({&bag, i}); }
  double pairwise(const Bag& a, std::size_t i, const Bag& b, std::size_t j) const override {
    ++calls;
    return pair_.at({&a, i, &b, j});
  }
  mutable std::size_t calls = 0;

 private:
  const Dataset& d_;
  std::map<std::pair<const Bag*, std::size_t>, double> unary_;
  std::map<std::tuple<const Bag*, std::size_t, const Bag*, std::size_t>, double> pair_;
};

std::vector<const Bag*> positives(const Dataset& d, const ClassId& c) {
  std::vector<const Bag*> out;
  for (std::size_t i : positive_negative_split(d, c).positive) out.push_back(&d.bags()[i]);
  return out;
}

// Independent enumerator over raw tables.
double table_energy(const RandomTables& t, const Labeling& l) {
  double e = 0;
  const std::size_t m = t.unary.size();
  for (std::size_t i = 0; i < m; ++i) e += t.unary[i][l[i]];
  std::size_t k = 0;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = i + 1; j < m; ++j, ++k) e += t.edges[k][l[i] * t.unary[j].size() + l[j]];
  }
  return e;
}

void enumerate(const RandomTables& t, Labeling& l, std::size_t pos,
               const std::function<void(const Labeling&)>& visit) {
  if (pos == l.size()) {
    visit(l);
    return;
  }
  for (std::size_t x = 0; x < t.unary[pos].size(); ++x) {
    l[pos] = x;
    enumerate(t, l, pos + 1, visit);
  }
}

}  // namespace

TEST_CASE("graph construction counts") {
  Dataset d({make_bag("1", 2, {"c"}), make_bag("2", 2, {"c"}), make_bag("3", 2, {"c"}),
             make_bag("4", 2, {"o"})});
  TableScorer scorer(d, 1);
  auto bags = positives(d, "c");

  SUBCASE("eager") {
    GraphProblem g = build_graph(bags, scorer, 1.0, BuildMode::eager);
    CHECK(g.size() == 3);
    CHECK(g.counts().pairwise_evals == 2 * 4 * 3);  // 2 B^2 M(M-1)/2
    CHECK(g.counts().unary_evals == 6);
    CHECK(scorer.calls == 24);
    std::size_t entries = 0;
    for (std::size_t i = 0; i < 3; ++i) {
      for (std::size_t j = i + 1; j < 3; ++j) entries += g.labels(i) * g.labels(j);
    }
    CHECK(entries == 12);
  }
  SUBCASE("lazy counts first use only") {
    GraphProblem g = build_graph(bags, scorer, 1.0, BuildMode::lazy);
    CHECK(g.counts().pairwise_evals == 0);
    g.edge(0, 1, 2, 0);
    CHECK(g.counts().pairwise_evals == 2);
    g.edge(2, 0, 0, 1);  // same unordered entry
    g.edge(0, 1, 2, 0);
    CHECK(g.counts().pairwise_evals == 2);
    g.edge(0, 0, 2, 0);
    CHECK(g.counts().pairwise_evals == 4);
  }
  SUBCASE("single bag has no edges") {
    std::vector<const Bag*> one{bags[0]};
    GraphProblem g = build_graph(one, scorer, 1.0, BuildMode::eager);
    CHECK(g.counts().pairwise_evals == 0);
    CHECK(energy(g, Labeling{1}) == doctest::Approx(-scorer.unary(*bags[0], 1)));
  }
  SUBCASE("alpha zero evaluates no pairs") {
    GraphProblem g = build_graph(bags, scorer, 0.0, BuildMode::lazy);
    CHECK(g.edge(0, 0, 1, 1) == 0.0);
    CHECK(g.counts().pairwise_evals == 0);
  }
  SUBCASE("empty") {
    std::vector<const Bag*> none;
    CHECK_THROWS(build_graph(none, scorer, 1.0, BuildMode::eager));
  }
}

TEST_CASE("energy examples") {
  RandomTables zero{{{0, 0}, {0, 0}}, {{0, 0, 0, 0}}};
  CHECK(energy(zero.problem(), Labeling{1, 0}) == 0.0);

  RandomTables single{{{1.5}, {-0.25}}, {{2.0}}};
  CHECK(energy(single.problem(), Labeling{0, 0}) == doctest::Approx(3.25));

  GraphProblem p = random_tables(3, 2, 4).problem();
  CHECK_THROWS(energy(p, Labeling{0, 0}));
  CHECK_THROWS(energy(p, Labeling{0, 0, 2}));
}

TEST_CASE("energy equals the loss difference and the vector form") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    // Five positive bags for "c" plus two negative bags.
    std::vector<Bag> bags;
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> size(2, 4);
    for (int k = 0; k < 7; ++k) {
      bags.push_back(make_bag("b" + std::to_string(k), size(rng), {k < 5 ? "c" : "o"}));
    }
    Dataset d(bags);
    TableScorer scorer(d, 50 + seed);
    const double alpha = 0.7;
    auto pos = positives(d, "c");
    GraphProblem eager = build_graph(pos, scorer, alpha, BuildMode::eager);
    GraphProblem lazy = build_graph(pos, scorer, alpha, BuildMode::lazy);

    std::vector<const Bag*> all;
    for (const Bag& b : d.bags()) all.push_back(&b);
    UnaryScores unary(all.size());
    std::vector<PairScore> pair;
    for (std::size_t a = 0; a < all.size(); ++a) {
      for (std::size_t i = 0; i < all[a]->size(); ++i) unary[a].push_back(scorer.unary(*all[a], i));
      for (std::size_t b = 0; b < all.size(); ++b) {
        if (a == b) continue;
        for (std::size_t i = 0; i < all[a]->size(); ++i) {
          for (std::size_t j = 0; j < all[b]->size(); ++j) {
            pair.push_back({a, i, b, j, scorer.pairwise(*all[a], i, *all[b], j)});
          }
        }
      }
    }
    const Selection none{"c", {}};
    const double base = combined_loss(unary_loss(unary, none, all), pairwise_loss(pair, none, all),
                                      {alpha});

    for (int trial = 0; trial < 20; ++trial) {
      Selection s{"c", {}};
      for (const Bag* b : pos) {
        s.chosen[b->id] = std::uniform_int_distribution<std::size_t>(0, b->size() - 1)(rng);
      }
      REQUIRE(is_feasible(s, d));
      const double loss = combined_loss(unary_loss(unary, s, all), pairwise_loss(pair, s, all),
                                        {alpha});
      // Vector form: -alpha r^T psi_P - y^T psi_U over the positive bags.
      double vec = 0;
      for (const Bag* a : pos) {
        vec -= scorer.unary(*a, s.chosen[a->id]);
        for (const Bag* b : pos) {
          if (a != b) vec -= alpha * scorer.pairwise(*a, s.chosen[a->id], *b, s.chosen[b->id]);
        }
      }
      const double e = energy(eager, s);
      CHECK(e == doctest::Approx(loss - base).epsilon(1e-9));
      CHECK(std::abs(e - vec) < 1e-9);
      CHECK(energy(lazy, s) == e);
    }
  }
}

TEST_CASE("edge symmetry and concurrent lazy queries") {
  Dataset d = random_dataset(6, 3, 2, {"c"}, 5);
  TableScorer scorer(d, 9);
  auto pos = positives(d, "c");
  GraphProblem lazy = build_graph(pos, scorer, 1.3, BuildMode::lazy);
  GraphProblem eager = build_graph(pos, scorer, 1.3, BuildMode::eager);
  for (std::size_t i = 0; i < 6; ++i) {
    for (std::size_t j = 0; j < 6; ++j) {
      if (i == j) continue;
      CHECK(eager.edge(i, 1, j, 2) == eager.edge(j, 2, i, 1));
    }
  }
  std::vector<Labeling> labelings;
  std::mt19937_64 rng(3);
  for (int k = 0; k < 64; ++k) {
    Labeling l(6);
    for (auto& x : l) x = std::uniform_int_distribution<std::size_t>(0, 2)(rng);
    labelings.push_back(l);
  }
  std::vector<double> parallel(labelings.size());
  std::vector<std::thread> threads;
  for (int t = 0; t < 4; ++t) {
    threads.emplace_back([&, t] {
      for (std::size_t k = static_cast<std::size_t>(t); k < labelings.size(); k += 4) {
        parallel[k] = energy(lazy, labelings[k]);
      }
    });
  }
  for (auto& th : threads) th.join();
  for (std::size_t k = 0; k < labelings.size(); ++k) CHECK(parallel[k] == energy(eager, labelings[k]));
  CHECK(lazy.counts().pairwise_evals <= eager.counts().pairwise_evals);
}

TEST_CASE("delta energy") {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    RandomTables t = random_tables(5, 4, seed);
    GraphProblem p = t.problem();
    Labeling l{0, 1, 2, 3, 0};
    for (std::size_t node = 0; node < 5; ++node) {
      for (std::size_t x = 0; x < 4; ++x) {
        Labeling moved = l;
        moved[node] = x;
        CHECK(std::abs(delta_energy(p, l, node, x) - (energy(p, moved) - energy(p, l))) < 1e-9);
      }
      CHECK(delta_energy(p, l, node, l[node]) == 0.0);
    }
    CHECK_THROWS(delta_energy(p, l, 0, 4));
  }
  RandomTables unary_only{{{1, 2, 3}, {0, 5, -1}}, {std::vector<double>(9, 0.0)}};
  CHECK(delta_energy(unary_only.problem(), {0, 0}, 1, 2) == -1.0);
}

TEST_CASE("brute force") {
  SUBCASE("single node") {
    RandomTables t{{{0.5, -2.0, 1.0}}, {}};
    BruteForceResult r = brute_force(t.problem());
    CHECK(r.labeling == Labeling{1});
    CHECK(r.energy == -2.0);
  }
  SUBCASE("all zero picks the smallest labeling") {
    RandomTables t{{{0, 0}, {0, 0}, {0, 0}}, {{0, 0, 0, 0}, {0, 0, 0, 0}, {0, 0, 0, 0}}};
    CHECK(brute_force(t.problem()).labeling == Labeling{0, 0, 0});
  }
  SUBCASE("random 4x3 vs independent enumeration") {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      RandomTables t = random_tables(4, 3, seed);
      BruteForceResult r = brute_force(t.problem());
      double best = std::numeric_limits<double>::infinity();
      Labeling arg, l(4);
      enumerate(t, l, 0, [&](const Labeling& cand) {
        const double e = table_energy(t, cand);
        if (e < best) {
          best = e;
          arg = cand;
        }
        CHECK(r.energy <= e + 1e-12);
      });
      CHECK(r.labeling == arg);
      CHECK(std::abs(r.energy - best) < 1e-12);
    }
  }
  SUBCASE("guard") {
    RandomTables t = random_tables(11, 4, 1);
    CHECK_THROWS_AS(brute_force(t.problem()), std::invalid_argument);
  }
}

TEST_CASE("sub-problems and selections") {
  Dataset d = random_dataset(5, 3, 2, {"c"}, 2);
  TableScorer scorer(d, 4);
  auto pos = positives(d, "c");
  GraphProblem lazy = build_graph(pos, scorer, 1.0, BuildMode::lazy);
  const std::vector<std::size_t> nodes{3, 1};
  GraphProblem sub = lazy.subproblem(nodes);
  CHECK(sub.size() == 2);
  CHECK(sub.node_ids() == std::vector<BagId>{"b3", "b1"});
  CHECK(lazy.counts().pairwise_evals == 2 * 9);
  CHECK(sub.edge(0, 2, 1, 1) == lazy.edge(3, 2, 1, 1));
  CHECK(sub.unary(0, 1) == lazy.unary(3, 1));

  Selection s = lazy.to_selection("c", {0, 1, 2, 0, 1});
  CHECK(is_feasible(s, d));
  CHECK(lazy.from_selection(s) == Labeling{0, 1, 2, 0, 1});
  s.chosen.erase("b0");
  CHECK_THROWS_AS(lazy.from_selection(s), DataError);
}
