#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "doctest.h"
#include "helpers.hpp"
#include "pairloc/inference.hpp"

using namespace pairloc;
using namespace pairloc::testing;

namespace {

Labeling per_node_argmin(const GraphProblem& p) {
  Labeling out(p.size(), 0);
  for (std::size_t i = 0; i < p.size(); ++i) {
    for (std::size_t x = 0; x < p.labels(i); ++x) {
      if (p.unary(i, x) < p.unary(i, out[i])) out[i] = x;
    }
  }
  return out;
}

RandomTables unary_only(std::size_t m, std::size_t b, std::uint64_t seed) {
  RandomTables t = random_tables(m, b, seed);
  for (auto& e : t.edges) std::fill(e.begin(), e.end(), 0.0);
  return t;
}

}  // namespace

TEST_CASE("icm node update") {
  SUBCASE("single node picks the unary argmin") {
    GraphProblem p = RandomTables{{{0.3, -1.0, 2.0}}, {}}.problem();
    Labeling l{0};
    CHECK(icm_node_update(p, l, 0) == doctest::Approx(-1.3));
    CHECK(l == Labeling{1});
    CHECK(icm_node_update(p, l, 0) == 0.0);
  }
  SUBCASE("ties keep the current label, then the smallest index") {
    GraphProblem p = RandomTables{{{1.0, 0.0, 0.0, 0.0}}, {}}.problem();
    Labeling l{2};
    CHECK(icm_node_update(p, l, 0) == 0.0);
    CHECK(l == Labeling{2});
    l = {0};
    icm_node_update(p, l, 0);
    CHECK(l == Labeling{1});
  }
  SUBCASE("delta matches delta_energy") {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      GraphProblem p = random_tables(5, 4, seed).problem();
      Labeling l{1, 2, 3, 0, 1};
      for (std::size_t node = 0; node < 5; ++node) {
        const Labeling before = l;
        const double d = icm_node_update(p, l, node);
        CHECK(d <= 0.0);
        CHECK(std::abs(d - delta_energy(p, before, node, l[node])) < 1e-9);
      }
    }
  }
}

TEST_CASE("icm run") {
  SUBCASE("zero epochs") {
    GraphProblem p = random_tables(4, 3, 1).problem();
    IcmResult r = icm_run(p, {2, 2, 2, 2}, {0, NodeOrder::fixed, 0});
    CHECK(r.labeling == Labeling{2, 2, 2, 2});
    CHECK(r.energy_trace.size() == 1);
  }
  SUBCASE("unary-only converges in one epoch") {
    GraphProblem p = unary_only(6, 5, 3).problem();
    IcmResult r = icm_run(p, Labeling(6, 0), {5, NodeOrder::fixed, 0});
    CHECK(r.labeling == per_node_argmin(p));
    REQUIRE(r.changes_per_epoch.size() == 2);
    CHECK(r.changes_per_epoch[1] == 0);
  }
  SUBCASE("monotone, never below the optimum") {
    int optimal = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      GraphProblem p = random_tables(5, 4, 1000 + seed).problem();
      const BruteForceResult best = brute_force(p);
      IcmResult r = icm_run(p, initialize(p, {InitScheme::Kind::random, 2, seed, {}}).labeling,
                            {10, NodeOrder::random, seed});
      for (std::size_t k = 1; k < r.energy_trace.size(); ++k) {
        CHECK(r.energy_trace[k] <= r.energy_trace[k - 1]);
      }
      CHECK(std::abs(r.energy_trace.back() - energy(p, r.labeling)) < 1e-9);
      CHECK(r.energy_trace.back() >= best.energy - 1e-9);
      if (r.energy_trace.back() <= best.energy + 1e-9) ++optimal;
    }
    MESSAGE("ICM from random init reached the optimum on " << optimal << "/100 instances");
    CHECK(optimal > 0);
  }
  SUBCASE("random order is seed-deterministic") {
    GraphProblem p = random_tables(8, 4, 7).problem();
    IcmResult a = icm_run(p, Labeling(8, 0), {3, NodeOrder::random, 11});
    IcmResult b = icm_run(p, Labeling(8, 0), {3, NodeOrder::random, 11});
    CHECK(a.labeling == b.labeling);
    CHECK(a.energy_trace == b.energy_trace);
  }
}

TEST_CASE("trws") {
  SUBCASE("single node") {
    GraphProblem p = RandomTables{{{0.5, -0.75, 0.1}}, {}}.problem();
    TrwsResult r = trws_solve(p, {});
    CHECK(r.labeling == Labeling{1});
    CHECK(r.lower_bound.back() == -0.75);
  }
  SUBCASE("two nodes are exact") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      GraphProblem p = random_tables(2, 4, seed).problem();
      const BruteForceResult best = brute_force(p);
      TrwsResult r = trws_solve(p, {});
      CHECK(std::abs(r.lower_bound.back() - best.energy) < 1e-6);
      CHECK(std::abs(r.energy - best.energy) < 1e-9);
    }
  }
  SUBCASE("chain-like sparse problems are exact") {
    // Edges only between consecutive nodes form a tree.
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      RandomTables t = random_tables(4, 3, seed);
      std::size_t k = 0;
      for (std::size_t i = 0; i < 4; ++i) {
        for (std::size_t j = i + 1; j < 4; ++j, ++k) {
          if (j != i + 1) std::fill(t.edges[k].begin(), t.edges[k].end(), 0.0);
        }
      }
      GraphProblem p = t.problem();
      TrwsResult r = trws_solve(p, {});
      CHECK(std::abs(r.lower_bound.back() - brute_force(p).energy) < 1e-6);
    }
  }
  SUBCASE("oracle sandwich on 6x4 instances") {
    double gap = 0;
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
      GraphProblem p = random_tables(6, 4, 200 + seed).problem();
      const BruteForceResult best = brute_force(p);
      TrwsResult r = trws_solve(p, {});
      for (std::size_t k = 1; k < r.lower_bound.size(); ++k) {
        CHECK(r.lower_bound[k] >= r.lower_bound[k - 1] - 1e-9);
      }
      CHECK(r.lower_bound.back() <= best.energy + 1e-6);
      CHECK(best.energy <= r.energy + 1e-9);
      CHECK(std::abs(r.energy - energy(p, r.labeling)) < 1e-9);
      gap += best.energy - r.lower_bound.back();
    }
    MESSAGE("mean lower-bound gap " << gap / 30);
  }
  SUBCASE("stopping rule") {
    GraphProblem p = random_tables(5, 3, 5).problem();
    TrwsResult r = trws_solve(p, {3, 1e-6, 10});
    CHECK(r.iterations == 3);
    CHECK_THROWS(trws_solve(p, {0, 1e-6, 10}));
  }
}

TEST_CASE("partition into mini-problems") {
  auto sizes = [](const std::vector<std::vector<std::size_t>>& g) {
    std::vector<std::size_t> s;
    for (const auto& x : g) s.push_back(x.size());
    return s;
  };
  CHECK(sizes(partition_mini_problems(9, 3, 1)) == std::vector<std::size_t>{3, 3, 3});
  CHECK(sizes(partition_mini_problems(10, 3, 1)) == std::vector<std::size_t>{3, 3, 4});
  CHECK(sizes(partition_mini_problems(3, 8, 1)) == std::vector<std::size_t>{3});
  CHECK(partition_mini_problems(20, 4, 5) == partition_mini_problems(20, 4, 5));
  CHECK(partition_mini_problems(20, 4, 5) != partition_mini_problems(20, 4, 6));
  CHECK_THROWS(partition_mini_problems(5, 1, 0));
  for (std::size_t n : {1, 2, 7, 13, 50}) {
    for (int k : {2, 3, 8}) {
      std::set<std::size_t> seen;
      for (const auto& g : partition_mini_problems(n, k, n)) {
        for (std::size_t v : g) CHECK(seen.insert(v).second);
      }
      CHECK(seen.size() == n);
    }
  }
}

TEST_CASE("initialization schemes") {
  SUBCASE("objectness is the ICM fixed point of a unary-only problem") {
    GraphProblem p = unary_only(7, 4, 2).problem();
    Labeling l = initialize(p, {InitScheme::Kind::objectness, 2, 0, {}}).labeling;
    IcmResult r = icm_run(p, l, {3, NodeOrder::fixed, 0});
    CHECK(r.labeling == l);
    CHECK(r.changes_per_epoch == std::vector<std::size_t>{0});
  }
  SUBCASE("K = |T_c| is one solve of the whole problem") {
    GraphProblem p = random_tables(6, 3, 8).problem();
    InitScheme s{InitScheme::Kind::mini_problems, 6, 4, {}};
    const auto groups = partition_mini_problems(6, 6, 4);
    REQUIRE(groups.size() == 1);
    TrwsResult whole = trws_solve(p.subproblem(groups[0]), s.trws);
    Labeling expected(6);
    for (std::size_t a = 0; a < 6; ++a) expected[groups[0][a]] = whole.labeling[a];
    CHECK(initialize(p, s).labeling == expected);
  }
  SUBCASE("full image needs a designated proposal") {
    GraphProblem p = random_tables(3, 3, 1).problem();
    CHECK_THROWS_AS(initialize(p, {InitScheme::Kind::full_image, 2, 0, {}}), DataError);
  }
  SUBCASE("random init is seed-deterministic and in range") {
    GraphProblem p = random_tables(10, 5, 1).problem();
    Labeling a = initialize(p, {InitScheme::Kind::random, 2, 3, {}}).labeling;
    CHECK(a == initialize(p, {InitScheme::Kind::random, 2, 3, {}}).labeling);
    for (std::size_t x : a) CHECK(x < 5);
  }
}

namespace {

// Deterministic smooth scores over proposal features for lazy-count tests.
class FeatureScorer : public BagScorer {
 public:
  double unary(const Bag& bag, std::size_t i) const override { return bag.proposals[i].features[0]; }
  double pairwise(const Bag& a, std::size_t i, const Bag& b, std::size_t j) const override {
    return std::sin(a.proposals[i].features[0] * 1.3 + b.proposals[j].features[1]);
  }
};

}  // namespace

TEST_CASE("lazy evaluation counts") {
  FeatureScorer scorer;
  for (std::size_t m : {8, 12}) {
    for (std::size_t b : {3, 5}) {
      Dataset d = random_dataset(m, b, 2, {"c"}, m * 10 + b);
      std::vector<const Bag*> bags;
      for (const Bag& bag : d.bags()) bags.push_back(&bag);
      for (int k : {2, 4}) {
        GraphProblem p = build_graph(bags, scorer, 1.0, BuildMode::lazy);
        const std::size_t groups = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(double(m) / k)));
        InitResult init = initialize(p, {InitScheme::Kind::mini_problems, k, 1, {}});
        std::uint64_t expected = 0;
        for (const auto& g : partition_mini_problems(m, k, 1)) expected += g.size() * (g.size() - 1) * b * b;
        CHECK(p.counts().pairwise_evals == expected);
        CHECK(p.counts().pairwise_evals <= groups * (k + 1) * (k + 1) * b * b);

        const std::uint64_t before = p.counts().pairwise_evals;
        IcmResult r = icm_run(p, init.labeling, {1, NodeOrder::fixed, 0});
        CHECK(p.counts().pairwise_evals - before <= 2 * m * (m - 1) * b);
        (void)r;
      }
    }
  }
}

namespace {

// Dataset where proposal 0 of every positive bag is the object.
Dataset planted_dataset() {
  std::vector<Bag> bags;
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0, 0.1);
  for (int k = 0; k < 6; ++k) {
    Bag b;
    b.id = "img" + std::to_string(k);
    b.labels = {k % 2 ? "dog" : "cat"};
    for (int i = 0; i < 4; ++i) {
      Proposal p;
      p.features = {n(rng), n(rng)};
      if (i == 0) p.features[k % 2] += 1.0;
      p.is_full_image = i == 3;
      b.proposals.push_back(p);
    }
    bags.push_back(b);
  }
  return Dataset(bags);
}

ScoringModel oriented_model() {
  ScoringModel m = ScoringModel::initialized(2, 2, {"cat", "dog"}, 1);
  m.unary["cat"].weight << 4, 0;
  m.unary["dog"].weight << 0, 4;
  m.generic_unary.weight << 1, 1;
  return m;
}

}  // namespace

TEST_CASE("relocalize") {
  Dataset d = planted_dataset();
  ScoringModel m = oriented_model();
  RelocalizeConfig cfg;
  cfg.init.k = 2;

  SUBCASE("recovers planted proposals and is feasible") {
    RelocalizeResult r = relocalize(d, m, cfg);
    for (const auto& [c, s] : r.selections) {
      CHECK(is_feasible(s, d));
      for (const auto& [bag, idx] : s.chosen) CHECK(idx == 0);
      CHECK(r.traces.at(c).final_energy <= r.traces.at(c).init_energy);
    }
  }
  SUBCASE("one positive bag per class reduces to the blended unary argmax") {
    Dataset small = d.subset({0, 1});
    RelocalizeResult r = relocalize(small, m, cfg);
    for (const auto& [c, s] : r.selections) {
      const Bag& bag = small.bag(s.chosen.begin()->first);
      std::size_t best = 0;
      for (std::size_t i = 1; i < bag.size(); ++i) {
        if (blended_unary(m, c, bag.proposals[i], cfg.blend) > blended_unary(m, c, bag.proposals[best], cfg.blend)) best = i;
      }
      CHECK(s.chosen.begin()->second == best);
    }
  }
  SUBCASE("E = 0 returns the initialization") {
    cfg.icm.epochs = 0;
    cfg.init.kind = InitScheme::Kind::full_image;
    RelocalizeResult r = relocalize(d, m, cfg);
    for (const auto& [c, s] : r.selections) {
      for (const auto& [bag, idx] : s.chosen) CHECK(idx == 3);
    }
  }
  SUBCASE("parallel classes give identical results") {
    RelocalizeResult serial = relocalize(d, m, cfg);
    cfg.parallel_classes = true;
    RelocalizeResult parallel = relocalize(d, m, cfg);
    CHECK(serial.selections == parallel.selections);
  }
  SUBCASE("class without positive bags") {
    Dataset extra(d.bags(), {"cat", "dog", "owl"});
    RelocalizeResult r = relocalize(extra, m, cfg);
    CHECK(r.selections.at("owl").chosen.empty());
    CHECK(is_feasible(r.selections.at("owl"), extra));
  }
}

TEST_CASE("blending and warm-up") {
  Dataset d = planted_dataset();
  ScoringModel m = oriented_model();
  const Proposal& e = d.bags()[0].proposals[0];
  const Proposal& e2 = d.bags()[2].proposals[1];
  const double u_c = m.unary_forward("cat", e), u_g = m.unary_forward(kGeneric, e);
  const double p_c = m.pairwise_forward("cat", e, e2), p_g = m.pairwise_forward(kGeneric, e, e2);
  CHECK(blended_unary(m, "cat", e, {0.3, 1.0}) == u_g);
  CHECK(blended_unary(m, "cat", e, {0.3, 0.0}) == u_c);
  CHECK(blended_unary(m, "cat", e, {0.3, 0.5}) == doctest::Approx(0.5 * (u_c + u_g)));
  CHECK(blended_pairwise(m, "cat", e, e2, {1.0, 0.2}) == p_g);
  CHECK(blended_pairwise(m, "cat", e, e2, {0.0, 0.2}) == p_c);
  CHECK(blended_pairwise(m, "cat", e, e2, {0.5, 0.2}) == doctest::Approx(0.5 * (p_c + p_g)));
  CHECK_THROWS(blended_unary(m, "cat", e, {0.5, 1.5}));
  for (double l : {0.1, 0.4, 0.9}) {
    const double v = blended_unary(m, "cat", e, {0.5, l});
    CHECK(v >= std::min(u_c, u_g) - 1e-12);
    CHECK(v <= std::max(u_c, u_g) + 1e-12);
  }

  SUBCASE("cached scorer agrees with direct evaluation") {
    std::vector<const Bag*> bags;
    for (const Bag& b : d.bags()) bags.push_back(&b);
    BlendedScorer s(m, "dog", {0.3, 0.6}, bags);
    for (std::size_t i = 0; i < 4; ++i) {
      CHECK(s.pairwise(d.bags()[1], i, d.bags()[4], 3 - i) ==
            doctest::Approx(blended_pairwise(m, "dog", d.bags()[1].proposals[i], d.bags()[4].proposals[3 - i], {0.3, 0.6})).epsilon(1e-12));
    }
  }
  SUBCASE("warm-up never reads class-specific parameters") {
    ScoringModel generic_only = ScoringModel::initialized(2, 2, {}, 3);
    RelocalizeConfig cfg;
    cfg.init.k = 2;
    RelocalizeResult r = warmup_relocalize(d, generic_only, cfg);
    CHECK(r.selections.size() == 2);
    std::vector<const Bag*> bags;
    for (const Bag& b : d.bags()) bags.push_back(&b);
    BlendedScorer s(generic_only, "cat", {1.0, 1.0}, bags);
    s.unary(d.bags()[0], 1);
    s.pairwise(d.bags()[0], 1, d.bags()[2], 0);
    CHECK(s.specific_calls() == 0);
    CHECK(s.generic_calls() == 2);

    cfg.blend = {1.0, 1.0};
    CHECK(relocalize(d, generic_only, cfg).selections == r.selections);
  }
  SUBCASE("constant shifts of unary scores do not change selections") {
    RelocalizeConfig cfg;
    cfg.init.k = 2;
    RelocalizeResult before = relocalize(d, m, cfg);
    ScoringModel shifted = m;
    shifted.unary["cat"].bias += 5.0;
    shifted.generic_unary.bias -= 2.0;
    CHECK(relocalize(d, shifted, cfg).selections == before.selections);
    cfg.init.kind = InitScheme::Kind::objectness;
    CHECK(relocalize(d, shifted, cfg).selections == relocalize(d, m, cfg).selections);
  }
}
