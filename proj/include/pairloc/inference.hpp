#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "pairloc/graph.hpp"
#include "pairloc/scoring.hpp"
#include "pairloc/transfer.hpp"

namespace pairloc {

enum class NodeOrder { fixed, random };

struct IcmConfig {
  int epochs = 2;
  NodeOrder order = NodeOrder::fixed;
  std::uint64_t seed = 0;
};

struct TrwsConfig {
  int max_iters = 500;
  double lb_tolerance = 1e-6;
  int lb_patience = 10;
};

struct IcmResult {
  Labeling labeling;
  /// Energy before the first update, then after every node update.
  std::vector<double> energy_trace;
  /// Nodes whose label changed, per epoch run.
  std::vector<std::size_t> changes_per_epoch;
  /// Energy after each epoch run.
  std::vector<double> epoch_energy;
  /// Pairwise evaluations made during each epoch (lazy problems).
  std::vector<std::uint64_t> evals_per_epoch;
  /// Wall time since the run started, at the end of each epoch.
  std::vector<double> epoch_seconds;
};

struct TrwsResult {
  Labeling labeling;
  double energy = 0;
  /// Lower bound after each iteration (forward plus backward pass).
  std::vector<double> lower_bound;
  int iterations = 0;
};

/// Moves `node` to the argmin of its conditional energy. Keeps the current
/// label on ties, otherwise prefers the smallest index. Returns the energy
/// change (<= 0).
double icm_node_update(const GraphProblem& problem, Labeling& labeling, std::size_t node);

/// Up to `epochs` sweeps of node updates; stops early after a sweep that
/// changes nothing.
IcmResult icm_run(const GraphProblem& problem, Labeling labeling, const IcmConfig& config);

/// Sequential tree-reweighted message passing with a fixed node order. Keeps
/// the best labeling found (by energy) across iterations.
TrwsResult trws_solve(const GraphProblem& problem, const TrwsConfig& config);

/// Random permutation of 0..n-1 cut into max(1, round(n / K)) groups; the
/// first groups hold K nodes and the last holds the remainder.
std::vector<std::vector<std::size_t>> partition_mini_problems(std::size_t n, int k,
                                                              std::uint64_t seed);

struct InitScheme {
  enum class Kind { random, objectness, full_image, mini_problems };
  Kind kind = Kind::mini_problems;
  int k = 8;
  std::uint64_t seed = 0;
  TrwsConfig trws;
};

struct InitResult {
  Labeling labeling;
  /// Sum of mini-problem lower bounds (mini_problems only, else NaN).
  double lower_bound = 0;
};

InitResult initialize(const GraphProblem& problem, const InitScheme& scheme);

struct RelocalizeConfig {
  double alpha = 1.0;
  BlendWeights blend;
  InitScheme init;
  IcmConfig icm;
  /// Run classes on separate threads. Results do not depend on it.
  bool parallel_classes = false;
};

/// One row of a re-localization trace.
struct TraceRow {
  double seconds = 0;  // wall time since the class started
  const char* kind = "init";
  int epoch = 0;
  double energy = 0;
  double lower_bound = 0;  // NaN when not applicable
  std::uint64_t pairwise_evals = 0;
};

struct ClassTrace {
  std::size_t nodes = 0;
  double init_energy = 0;
  double final_energy = 0;
  std::uint64_t init_evals = 0;
  std::uint64_t total_evals = 0;
  std::vector<std::size_t> changes_per_epoch;
  std::vector<TraceRow> rows;
};

struct RelocalizeResult {
  Selections selections;
  std::map<ClassId, ClassTrace> traces;
};

/// Re-localizes every class of the dataset: lazy problem over its positive
/// bags with blended scores, the configured initializer, then ICM. Classes
/// without positive bags get an empty selection.
RelocalizeResult relocalize(const Dataset& dataset, const ScoringModel& model,
                            const RelocalizeConfig& config);

/// Re-localization with class-generic scores only (lambda1 = lambda2 = 1).
RelocalizeResult warmup_relocalize(const Dataset& dataset, const ScoringModel& generic_model,
                                   RelocalizeConfig config);

}  // namespace pairloc
