#include "pairloc/graph.hpp"

#include <atomic>
#include <cmath>
#include <limits>
#include <mutex>
#include <stdexcept>
#include <string>
#include <unordered_map>

namespace pairloc {

struct GraphProblem::Lazy {
  NodeScores scores;
  std::mutex mutex;
  std::unordered_map<std::uint64_t, double> memo;
  std::atomic<std::uint64_t> pairwise_evals{0};
  std::uint64_t unary_evals = 0;
};

double GraphProblem::unary(std::size_t node, std::size_t label) const {
  return unary_[node][label];
}

std::size_t GraphProblem::pair_offset(std::size_t i, std::size_t j) const {
  return offsets_[i][j];
}

double GraphProblem::evaluate_edge(std::size_t i, std::size_t x, std::size_t j,
                                   std::size_t y) const {
  const NodeScores& s = lazy_->scores;
  const double forward = s.pairwise(i, x, j, y);
  const double backward = s.pairwise(j, y, i, x);
  lazy_->pairwise_evals.fetch_add(2, std::memory_order_relaxed);
  return -alpha_ * (forward + backward);
}

double GraphProblem::edge(std::size_t i, std::size_t x, std::size_t j, std::size_t y) const {
  if (i == j) throw std::invalid_argument("edge: a node has no edge to itself");
  if (j < i) {
    std::swap(i, j);
    std::swap(x, y);
  }
  if (alpha_ == 0) return 0.0;
  if (mode_ == BuildMode::eager) return edges_[pair_offset(i, j) + x * labels_[j] + y];

  const std::uint64_t m = size(), l = max_labels_;
  const std::uint64_t key = ((i * l + x) * m + j) * l + y;
  {
    std::lock_guard<std::mutex> lock(lazy_->mutex);
    auto it = lazy_->memo.find(key);
    if (it != lazy_->memo.end()) return it->second;
  }
  const double value = evaluate_edge(i, x, j, y);
  std::lock_guard<std::mutex> lock(lazy_->mutex);
  // Another thread may have filled the entry meanwhile; the value is identical.
  lazy_->memo.emplace(key, value);
  return value;
}

EvalCounts GraphProblem::counts() const {
  if (!lazy_) return eager_counts_;
  return {lazy_->pairwise_evals.load(), lazy_->unary_evals};
}

namespace {

void layout(std::vector<std::size_t>& labels, std::vector<std::vector<std::size_t>>& offsets,
            std::size_t& total) {
  const std::size_t m = labels.size();
  offsets.assign(m, std::vector<std::size_t>(m, 0));
  total = 0;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = i + 1; j < m; ++j) {
      offsets[i][j] = total;
      total += labels[i] * labels[j];
    }
  }
}

void check_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw std::invalid_argument(std::string(what) + " score is not finite");
}

}  // namespace

GraphProblem build_graph(std::vector<BagId> ids, std::vector<std::size_t> label_counts,
                         NodeScores scores, double alpha, BuildMode mode) {
  if (label_counts.empty()) throw std::invalid_argument("build_graph: no positive bags");
  if (ids.size() != label_counts.size()) throw std::invalid_argument("build_graph: id count");
  if (!(alpha >= 0)) throw std::invalid_argument("build_graph: alpha must be >= 0");
  GraphProblem g;
  g.ids_ = std::move(ids);
  g.labels_ = std::move(label_counts);
  g.full_image_.assign(g.labels_.size(), std::nullopt);
  g.alpha_ = alpha;
  g.mode_ = mode;
  for (std::size_t l : g.labels_) {
    if (l == 0) throw std::invalid_argument("build_graph: node without labels");
    g.max_labels_ = std::max(g.max_labels_, l);
  }

  EvalCounts counts;
  g.unary_.resize(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    g.unary_[i].resize(g.labels_[i]);
    for (std::size_t x = 0; x < g.labels_[i]; ++x) {
      const double s = scores.unary(i, x);
      check_finite(s, "unary");
      g.unary_[i][x] = -s;
    }
    counts.unary_evals += g.labels_[i];
  }

  if (mode == BuildMode::lazy) {
    g.lazy_ = std::make_shared<GraphProblem::Lazy>();
    g.lazy_->scores = std::move(scores);
    g.lazy_->unary_evals = counts.unary_evals;
    return g;
  }

  std::size_t total = 0;
  layout(g.labels_, g.offsets_, total);
  g.edges_.assign(alpha == 0 ? 0 : total, 0.0);
  if (alpha > 0) {
    for (std::size_t i = 0; i < g.size(); ++i) {
      for (std::size_t j = i + 1; j < g.size(); ++j) {
        double* out = g.edges_.data() + g.offsets_[i][j];
        for (std::size_t x = 0; x < g.labels_[i]; ++x) {
          for (std::size_t y = 0; y < g.labels_[j]; ++y) {
            const double f = scores.pairwise(i, x, j, y), b = scores.pairwise(j, y, i, x);
            check_finite(f, "pairwise");
            check_finite(b, "pairwise");
            out[x * g.labels_[j] + y] = -alpha * (f + b);
          }
        }
        counts.pairwise_evals += 2 * g.labels_[i] * g.labels_[j];
      }
    }
  }
  g.eager_counts_ = counts;
  return g;
}

GraphProblem build_graph(std::span<const Bag* const> bags, const BagScorer& scorer, double alpha,
                         BuildMode mode) {
  std::vector<const Bag*> nodes(bags.begin(), bags.end());
  std::vector<BagId> ids;
  std::vector<std::size_t> counts;
  std::vector<std::optional<std::size_t>> full;
  for (const Bag* b : nodes) {
    ids.push_back(b->id);
    counts.push_back(b->size());
    std::optional<std::size_t> f;
    for (std::size_t i = 0; i < b->size(); ++i) {
      if (b->proposals[i].is_full_image) {
        f = i;
        break;
      }
    }
    full.push_back(f);
  }
  NodeScores scores;
  scores.unary = [nodes, &scorer](std::size_t n, std::size_t x) {
    return scorer.unary(*nodes[n], x);
  };
  scores.pairwise = [nodes, &scorer](std::size_t a, std::size_t x, std::size_t b, std::size_t y) {
    return scorer.pairwise(*nodes[a], x, *nodes[b], y);
  };
  GraphProblem g = build_graph(std::move(ids), std::move(counts), std::move(scores), alpha, mode);
  g.full_image_ = std::move(full);
  return g;
}

GraphProblem problem_from_tables(std::vector<std::vector<double>> unary,
                                 std::vector<std::vector<double>> edges) {
  if (unary.empty()) throw std::invalid_argument("problem_from_tables: no nodes");
  GraphProblem g;
  g.alpha_ = 1.0;
  g.mode_ = BuildMode::eager;
  for (const auto& u : unary) {
    if (u.empty()) throw std::invalid_argument("problem_from_tables: node without labels");
    for (double v : u) check_finite(v, "unary");
    g.labels_.push_back(u.size());
    g.max_labels_ = std::max(g.max_labels_, u.size());
  }
  g.ids_.assign(unary.size(), BagId());
  g.full_image_.assign(unary.size(), std::nullopt);
  g.unary_ = std::move(unary);
  std::size_t total = 0;
  layout(g.labels_, g.offsets_, total);
  const std::size_t m = g.size();
  if (edges.size() != m * (m - 1) / 2) throw std::invalid_argument("problem_from_tables: edge count");
  g.edges_.reserve(total);
  std::size_t k = 0;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = i + 1; j < m; ++j, ++k) {
      if (edges[k].size() != g.labels_[i] * g.labels_[j]) {
        throw std::invalid_argument("problem_from_tables: edge table shape");
      }
      for (double v : edges[k]) check_finite(v, "edge");
      g.edges_.insert(g.edges_.end(), edges[k].begin(), edges[k].end());
    }
  }
  return g;
}

GraphProblem GraphProblem::subproblem(std::span<const std::size_t> nodes) const {
  if (nodes.empty()) throw std::invalid_argument("subproblem: no nodes");
  GraphProblem g;
  g.alpha_ = alpha_;
  g.mode_ = BuildMode::eager;
  for (std::size_t n : nodes) {
    if (n >= size()) throw std::out_of_range("subproblem: node out of range");
    g.ids_.push_back(ids_[n]);
    g.labels_.push_back(labels_[n]);
    g.full_image_.push_back(full_image_[n]);
    g.unary_.push_back(unary_[n]);
    g.max_labels_ = std::max(g.max_labels_, labels_[n]);
  }
  std::size_t total = 0;
  layout(g.labels_, g.offsets_, total);
  if (alpha_ == 0) return g;
  g.edges_.resize(total);
  for (std::size_t a = 0; a < nodes.size(); ++a) {
    for (std::size_t b = a + 1; b < nodes.size(); ++b) {
      double* out = g.edges_.data() + g.offsets_[a][b];
      for (std::size_t x = 0; x < g.labels_[a]; ++x) {
        for (std::size_t y = 0; y < g.labels_[b]; ++y) {
          out[x * g.labels_[b] + y] = edge(nodes[a], x, nodes[b], y);
        }
      }
    }
  }
  return g;
}

Selection GraphProblem::to_selection(const ClassId& cls, const Labeling& labeling) const {
  if (labeling.size() != size()) throw std::invalid_argument("to_selection: labeling size");
  Selection s{cls, {}};
  for (std::size_t i = 0; i < size(); ++i) {
    if (labeling[i] >= labels_[i]) throw std::out_of_range("to_selection: label out of range");
    s.chosen[ids_[i]] = labeling[i];
  }
  return s;
}

Labeling GraphProblem::from_selection(const Selection& selection) const {
  if (selection.chosen.size() != size()) {
    throw DataError("selection does not match the problem's bags");
  }
  Labeling out(size());
  for (std::size_t i = 0; i < size(); ++i) {
    auto it = selection.chosen.find(ids_[i]);
    if (it == selection.chosen.end() || it->second >= labels_[i]) {
      throw DataError("selection does not match the problem's bags");
    }
    out[i] = it->second;
  }
  return out;
}

namespace {

void check_labeling(const GraphProblem& p, const Labeling& l) {
  if (l.size() != p.size()) throw std::invalid_argument("labeling size does not match problem");
  for (std::size_t i = 0; i < l.size(); ++i) {
    if (l[i] >= p.labels(i)) throw std::out_of_range("label out of range");
  }
}

}  // namespace

double energy(const GraphProblem& problem, const Labeling& labeling) {
  check_labeling(problem, labeling);
  double e = 0;
  for (std::size_t i = 0; i < problem.size(); ++i) e += problem.unary(i, labeling[i]);
  for (std::size_t i = 0; i < problem.size(); ++i) {
    for (std::size_t j = i + 1; j < problem.size(); ++j) {
      e += problem.edge(i, labeling[i], j, labeling[j]);
    }
  }
  return e;
}

double energy(const GraphProblem& problem, const Selection& selection) {
  return energy(problem, problem.from_selection(selection));
}

double conditional_energy(const GraphProblem& problem, const Labeling& labeling,
                          std::size_t node, std::size_t label) {
  double e = problem.unary(node, label);
  for (std::size_t j = 0; j < problem.size(); ++j) {
    if (j != node) e += problem.edge(node, label, j, labeling[j]);
  }
  return e;
}

double delta_energy(const GraphProblem& problem, const Labeling& labeling, std::size_t node,
                    std::size_t new_label) {
  check_labeling(problem, labeling);
  if (node >= problem.size()) throw std::out_of_range("delta_energy: node out of range");
  if (new_label >= problem.labels(node)) throw std::out_of_range("delta_energy: label out of range");
  const std::size_t old = labeling[node];
  if (old == new_label) return 0.0;
  double d = problem.unary(node, new_label) - problem.unary(node, old);
  for (std::size_t j = 0; j < problem.size(); ++j) {
    if (j == node) continue;
    d += problem.edge(node, new_label, j, labeling[j]) - problem.edge(node, old, j, labeling[j]);
  }
  return d;
}

BruteForceResult brute_force(const GraphProblem& problem, std::uint64_t limit) {
  std::uint64_t space = 1;
  for (std::size_t i = 0; i < problem.size(); ++i) {
    space *= problem.labels(i);
    if (space > limit) throw std::invalid_argument("brute_force: labeling space too large");
  }
  const std::size_t m = problem.size();
  Labeling current(m, 0);
  BruteForceResult best{current, std::numeric_limits<double>::infinity()};
  // Odometer with the last node fastest enumerates labelings in lexicographic
  // order, so keeping strict improvements only yields the smallest tie.
  while (true) {
    const double e = energy(problem, current);
    if (e < best.energy) best = {current, e};
    std::size_t k = m;
    while (k > 0) {
      --k;
      if (++current[k] < problem.labels(k)) break;
      current[k] = 0;
      if (k == 0) return best;
    }
  }
}

}  // namespace pairloc
