#include "pairloc/inference.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>
#include <thread>

namespace pairloc {

double icm_node_update(const GraphProblem& problem, Labeling& labeling, std::size_t node) {
  const std::size_t current = labeling[node];
  const std::size_t n = problem.labels(node);
  std::vector<double> cond(n);
  for (std::size_t x = 0; x < n; ++x) cond[x] = conditional_energy(problem, labeling, node, x);
  std::size_t best = current;
  for (std::size_t x = 0; x < n; ++x) {
    if (cond[x] < cond[best] || (cond[x] == cond[best] && best != current && x < best)) best = x;
  }
  if (cond[best] == cond[current]) return 0.0;
  labeling[node] = best;
  return cond[best] - cond[current];
}

IcmResult icm_run(const GraphProblem& problem, Labeling labeling, const IcmConfig& config) {
  if (config.epochs < 0) throw std::invalid_argument("icm: epochs must be >= 0");
  IcmResult result;
  const auto start = std::chrono::steady_clock::now();
  double e = energy(problem, labeling);
  result.energy_trace.push_back(e);
  std::vector<std::size_t> order(problem.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(config.seed);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    if (config.order == NodeOrder::random) std::shuffle(order.begin(), order.end(), rng);
    const std::uint64_t before = problem.counts().pairwise_evals;
    std::size_t changes = 0;
    for (std::size_t node : order) {
      const std::size_t old = labeling[node];
      e += icm_node_update(problem, labeling, node);
      if (labeling[node] != old) ++changes;
      result.energy_trace.push_back(e);
    }
    result.changes_per_epoch.push_back(changes);
    result.epoch_energy.push_back(e);
    result.evals_per_epoch.push_back(problem.counts().pairwise_evals - before);
    result.epoch_seconds.push_back(
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
    if (changes == 0) break;
  }
  result.labeling = std::move(labeling);
  return result;
}

namespace {

// Reparameterized copy of a problem: theta_i per node and theta_ij per pair
// (i < j, row-major over (x_i, x_j)).
struct Reparam {
  std::size_t m = 0;
  std::vector<std::size_t> labels;
  std::vector<std::vector<double>> node;
  std::vector<std::vector<std::vector<double>>> edge;  // edge[i][j], j > i

  explicit Reparam(const GraphProblem& p) : m(p.size()), labels(m), node(m), edge(m) {
    for (std::size_t i = 0; i < m; ++i) {
      labels[i] = p.labels(i);
      node[i].resize(labels[i]);
      for (std::size_t x = 0; x < labels[i]; ++x) node[i][x] = p.unary(i, x);
    }
    for (std::size_t i = 0; i < m; ++i) {
      edge[i].resize(m);
      for (std::size_t j = i + 1; j < m; ++j) {
        auto& t = edge[i][j];
        t.resize(labels[i] * labels[j]);
        for (std::size_t x = 0; x < labels[i]; ++x) {
          for (std::size_t y = 0; y < labels[j]; ++y) t[x * labels[j] + y] = p.edge(i, x, j, y);
        }
      }
    }
  }

  double at(std::size_t i, std::size_t x, std::size_t j, std::size_t y) const {
    return i < j ? edge[i][j][x * labels[j] + y] : edge[j][i][y * labels[i] + x];
  }

  // Moves min over the other endpoint of every incident edge into node i.
  void collect(std::size_t i) {
    std::vector<double> msg;
    for (std::size_t k = 0; k < m; ++k) {
      if (k == i) continue;
      msg.assign(labels[i], std::numeric_limits<double>::infinity());
      if (i < k) {
        auto& t = edge[i][k];
        for (std::size_t x = 0; x < labels[i]; ++x) {
          for (std::size_t y = 0; y < labels[k]; ++y) msg[x] = std::min(msg[x], t[x * labels[k] + y]);
          for (std::size_t y = 0; y < labels[k]; ++y) t[x * labels[k] + y] -= msg[x];
        }
      } else {
        auto& t = edge[k][i];
        for (std::size_t y = 0; y < labels[k]; ++y) {
          for (std::size_t x = 0; x < labels[i]; ++x) msg[x] = std::min(msg[x], t[y * labels[i] + x]);
        }
        for (std::size_t y = 0; y < labels[k]; ++y) {
          for (std::size_t x = 0; x < labels[i]; ++x) t[y * labels[i] + x] -= msg[x];
        }
      }
      for (std::size_t x = 0; x < labels[i]; ++x) node[i][x] += msg[x];
    }
  }

  // Hands a share gamma of theta_i to each edge towards `targets`.
  void distribute(std::size_t i, const std::vector<std::size_t>& targets) {
    if (targets.empty()) return;
    const std::size_t n_in = i, n_out = m - 1 - i;
    const double gamma = 1.0 / static_cast<double>(std::max(n_in, n_out));
    for (std::size_t k : targets) {
      if (i < k) {
        auto& t = edge[i][k];
        for (std::size_t x = 0; x < labels[i]; ++x) {
          for (std::size_t y = 0; y < labels[k]; ++y) t[x * labels[k] + y] += gamma * node[i][x];
        }
      } else {
        auto& t = edge[k][i];
        for (std::size_t y = 0; y < labels[k]; ++y) {
          for (std::size_t x = 0; x < labels[i]; ++x) t[y * labels[i] + x] += gamma * node[i][x];
        }
      }
    }
    const double keep = 1.0 - static_cast<double>(targets.size()) * gamma;
    for (double& v : node[i]) v *= keep;
  }

  double lower_bound() const {
    double lb = 0;
    for (std::size_t i = 0; i < m; ++i) lb += *std::min_element(node[i].begin(), node[i].end());
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = i + 1; j < m; ++j) {
        lb += *std::min_element(edge[i][j].begin(), edge[i][j].end());
      }
    }
    return lb;
  }

  // Nodes in order: argmin of theta_i + edges to fixed nodes + min over
  // edges to nodes not yet fixed.
  Labeling decode() const {
    Labeling out(m, 0);
    for (std::size_t i = 0; i < m; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t x = 0; x < labels[i]; ++x) {
        double v = node[i][x];
        for (std::size_t k = 0; k < i; ++k) v += at(k, out[k], i, x);
        for (std::size_t j = i + 1; j < m; ++j) {
          const double* row = edge[i][j].data() + x * labels[j];
          v += *std::min_element(row, row + labels[j]);
        }
        if (v < best) {
          best = v;
          out[i] = x;
        }
      }
    }
    return out;
  }
};

}  // namespace

TrwsResult trws_solve(const GraphProblem& problem, const TrwsConfig& config) {
  if (problem.size() == 0) throw std::invalid_argument("trws: empty problem");
  if (config.max_iters <= 0 || config.lb_patience <= 0 || !(config.lb_tolerance > 0)) {
    throw std::invalid_argument("trws: configuration values must be positive");
  }
  Reparam r(problem);
  const std::size_t m = r.m;
  TrwsResult result;
  if (m == 1) {
    const auto& u = r.node[0];
    const auto it = std::min_element(u.begin(), u.end());
    result.labeling = {static_cast<std::size_t>(it - u.begin())};
    result.energy = *it;
    result.lower_bound = {*it};
    result.iterations = 1;
    return result;
  }

  std::vector<std::vector<std::size_t>> later(m), earlier(m);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t k = 0; k < m; ++k) {
      if (k != i) (k > i ? later : earlier)[i].push_back(k);
    }
  }
  result.energy = std::numeric_limits<double>::infinity();
  int stalled = 0;
  for (int it = 0; it < config.max_iters; ++it) {
    auto consider = [&] {
      const Labeling candidate = r.decode();
      const double e = energy(problem, candidate);
      if (e < result.energy) {
        result.energy = e;
        result.labeling = candidate;
      }
    };
    for (std::size_t i = 0; i < m; ++i) {
      r.collect(i);
      r.distribute(i, later[i]);
    }
    consider();
    for (std::size_t i = m; i-- > 0;) {
      r.collect(i);
      r.distribute(i, earlier[i]);
    }
    consider();
    const double lb = r.lower_bound();
    const bool small = !result.lower_bound.empty() && lb - result.lower_bound.back() < config.lb_tolerance;
    result.lower_bound.push_back(lb);
    result.iterations = it + 1;
    stalled = small ? stalled + 1 : 0;
    if (stalled >= config.lb_patience) break;
  }
  return result;
}

std::vector<std::vector<std::size_t>> partition_mini_problems(std::size_t n, int k,
                                                              std::uint64_t seed) {
  if (k < 2) throw std::invalid_argument("mini-problem size K must be >= 2");
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  if (n == 0) return {};
  const auto groups = static_cast<std::size_t>(
      std::max<long>(1, std::lround(static_cast<double>(n) / static_cast<double>(k))));
  std::vector<std::vector<std::size_t>> out(groups);
  for (std::size_t idx = 0; idx < n; ++idx) {
    out[std::min(idx / static_cast<std::size_t>(k), groups - 1)].push_back(perm[idx]);
  }
  return out;
}

InitResult initialize(const GraphProblem& problem, const InitScheme& scheme) {
  const std::size_t m = problem.size();
  InitResult result;
  result.labeling.assign(m, 0);
  result.lower_bound = std::numeric_limits<double>::quiet_NaN();
  switch (scheme.kind) {
    case InitScheme::Kind::random: {
      std::mt19937_64 rng(scheme.seed);
      for (std::size_t i = 0; i < m; ++i) {
        std::uniform_int_distribution<std::size_t> pick(0, problem.labels(i) - 1);
        result.labeling[i] = pick(rng);
      }
      break;
    }
    case InitScheme::Kind::objectness:
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t x = 1; x < problem.labels(i); ++x) {
          if (problem.unary(i, x) < problem.unary(i, result.labeling[i])) result.labeling[i] = x;
        }
      }
      break;
    case InitScheme::Kind::full_image:
      for (std::size_t i = 0; i < m; ++i) {
        const auto& f = problem.full_image_labels()[i];
        if (!f) throw DataError("full-image initialization: bag without a full-image proposal");
        result.labeling[i] = *f;
      }
      break;
    case InitScheme::Kind::mini_problems: {
      result.lower_bound = 0;
      for (const auto& group : partition_mini_problems(m, scheme.k, scheme.seed)) {
        const GraphProblem sub = problem.subproblem(group);
        const TrwsResult solved = trws_solve(sub, scheme.trws);
        for (std::size_t a = 0; a < group.size(); ++a) result.labeling[group[a]] = solved.labeling[a];
        result.lower_bound += solved.lower_bound.back();
      }
      break;
    }
  }
  return result;
}

namespace {

std::uint64_t mix(std::uint64_t seed, const ClassId& cls) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : cls) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return seed ^ (h + 0x9e3779b97f4a7c15ULL + (seed << 6) + (seed >> 2));
}

struct ClassOutcome {
  Selection selection;
  ClassTrace trace;
};

ClassOutcome relocalize_class(const Dataset& dataset, const ScoringModel& model,
                              const RelocalizeConfig& config, const ClassId& cls) {
  const auto start = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  };
  ClassOutcome out;
  out.selection.cls = cls;
  std::vector<const Bag*> bags;
  for (std::size_t b : positive_negative_split(dataset, cls).positive) {
    bags.push_back(&dataset.bags()[b]);
  }
  if (bags.empty()) return out;

  const BlendedScorer scorer(model, cls, config.blend, bags);
  const GraphProblem problem = build_graph(bags, scorer, config.alpha, BuildMode::lazy);
  InitScheme init = config.init;
  init.seed = mix(init.seed, cls);
  const InitResult start_point = initialize(problem, init);
  const double init_seconds = elapsed();
  const double nan = std::numeric_limits<double>::quiet_NaN();

  IcmConfig icm = config.icm;
  icm.seed = mix(icm.seed, cls);
  const std::uint64_t init_evals = problem.counts().pairwise_evals;
  const IcmResult refined = icm_run(problem, start_point.labeling, icm);

  ClassTrace& t = out.trace;
  t.nodes = problem.size();
  t.init_energy = refined.energy_trace.front();
  t.final_energy = refined.energy_trace.back();
  t.init_evals = init_evals;
  t.total_evals = problem.counts().pairwise_evals;
  t.changes_per_epoch = refined.changes_per_epoch;
  std::uint64_t evals = init_evals;
  t.rows.push_back({init_seconds, "init", 0, t.init_energy, start_point.lower_bound, evals});
  for (std::size_t e = 0; e < refined.epoch_energy.size(); ++e) {
    evals += refined.evals_per_epoch[e];
    t.rows.push_back({init_seconds + refined.epoch_seconds[e], "icm", static_cast<int>(e + 1),
                      refined.epoch_energy[e], nan, evals});
  }
  out.selection = problem.to_selection(cls, refined.labeling);
  return out;
}

}  // namespace

RelocalizeResult relocalize(const Dataset& dataset, const ScoringModel& model,
                            const RelocalizeConfig& config) {
  config.blend.validate();
  if (!(config.alpha >= 0)) throw std::invalid_argument("alpha must be >= 0");
  const std::vector<ClassId> classes(dataset.classes().begin(), dataset.classes().end());
  std::vector<ClassOutcome> outcomes(classes.size());
  if (config.parallel_classes && classes.size() > 1) {
    const std::size_t workers =
        std::max<std::size_t>(1, std::min<std::size_t>(std::thread::hardware_concurrency(), classes.size()));
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t c = w; c < classes.size(); c += workers) {
            outcomes[c] = relocalize_class(dataset, model, config, classes[c]);
          }
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  } else {
    for (std::size_t c = 0; c < classes.size(); ++c) {
      outcomes[c] = relocalize_class(dataset, model, config, classes[c]);
    }
  }
  RelocalizeResult result;
  for (std::size_t c = 0; c < classes.size(); ++c) {
    result.selections[classes[c]] = std::move(outcomes[c].selection);
    result.traces[classes[c]] = std::move(outcomes[c].trace);
  }
  return result;
}

RelocalizeResult warmup_relocalize(const Dataset& dataset, const ScoringModel& generic_model,
                                   RelocalizeConfig config) {
  config.blend = {1.0, 1.0};
  return relocalize(dataset, generic_model, config);
}

}  // namespace pairloc
