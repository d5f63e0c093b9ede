#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "pairloc/inference.hpp"
#include "pairloc/scoring.hpp"
#include "pairloc/transfer.hpp"

namespace pairloc {

enum class PipelineMode { full, unary_only, warmup_only, warmup_unary_only };

PipelineMode parse_mode(const std::string& name);
std::string to_string(PipelineMode mode);

struct PipelineConfig {
  int outer_iterations = 5;
  int folds = 10;
  PipelineMode mode = PipelineMode::full;
  TrainConfig source_train{0.3, 0.9, 1000};
  TrainConfig train;
  /// SGD steps of each fold model, starting from the current global model.
  int fold_iterations = 50;
  LossWeights weights;
  BlendWeights blend;
  int k = 8;
  int epochs = 2;
  InitScheme::Kind init = InitScheme::Kind::mini_problems;
  /// Stop once fewer than this fraction of selections change.
  double early_stop = 0.005;
  std::uint64_t seed = 0;
  bool parallel_classes = false;

  void validate() const;
  /// alpha as used by the mode (0 in the unary-only modes).
  double effective_alpha() const;
};

struct IterationMetrics {
  int iteration = 0;  // 0 is the warm-up
  /// Mean minibatch loss over the last tenth of the global re-training run.
  double train_loss = 0;
  /// Sum of the final re-localization energies over classes and folds.
  double energy = 0;
  /// Sum of the energies of the re-localization starting points.
  double init_energy = 0;
  double changed = 0;
  std::optional<double> accuracy;
  std::optional<double> corloc50, corloc70;
};

struct PipelineResult {
  ScoringModel model;
  Selections selections;
  std::vector<IterationMetrics> iterations;
  std::vector<std::string> warnings;
};

/// Fraction of the positive bags in `previous` whose chosen index differs in
/// `next`.
double convergence_check(const Selections& previous, const Selections& next);

/// Seed-deterministic partition of bag indices into `folds` groups, dealt
/// round-robin per class (bags keyed by their first label).
std::vector<std::vector<std::size_t>> fold_partition(const Dataset& dataset, int folds,
                                                     std::uint64_t seed);

struct MultifoldResult {
  Selections selections;
  double energy = 0;
  double init_energy = 0;
  std::vector<std::string> warnings;
};

/// Each fold is re-localized with a copy of `model` re-trained on the other
/// folds' current `selections`. folds = 1 is a plain re-localization with
/// `model`.
MultifoldResult multifold_relocalize(const Dataset& dataset, const ScoringModel& model,
                                     const Selections& selections, const PipelineConfig& config,
                                     std::uint64_t seed);

using IterationCallback =
    std::function<void(const IterationMetrics&, const ScoringModel&, const Selections&)>;

/// train_source, warm-up re-localization, then outer_iterations rounds of
/// {re-train, multi-fold re-localize}. `truth` (optional) adds selection
/// accuracy to the metrics; CorLoc is added when every target proposal has a
/// box.
PipelineResult run(const PipelineConfig& config, const Dataset& source, const Dataset& target,
                   const Selections* truth = nullptr, const IterationCallback& on_iteration = {});

/// Reproducible record of a run: config, seeds, dataset sizes and the
/// per-iteration metrics. Contains no timings.
nlohmann::json manifest(const PipelineConfig& config, const Dataset& source,
                        const Dataset& target, const PipelineResult& result);

nlohmann::json config_to_json(const PipelineConfig& config);

/// Derives an independent seed from a base seed and a stream index.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace pairloc
