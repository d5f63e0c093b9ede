#include "pairloc/pipeline.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <stdexcept>

#include "pairloc/metrics.hpp"

namespace pairloc {

using nlohmann::json;

PipelineMode parse_mode(const std::string& name) {
  if (name == "full") return PipelineMode::full;
  if (name == "unary_only") return PipelineMode::unary_only;
  if (name == "warmup_only") return PipelineMode::warmup_only;
  if (name == "warmup_unary_only") return PipelineMode::warmup_unary_only;
  throw std::invalid_argument("unknown pipeline mode '" + name + "'");
}

std::string to_string(PipelineMode mode) {
  switch (mode) {
    case PipelineMode::full: return "full";
    case PipelineMode::unary_only: return "unary_only";
    case PipelineMode::warmup_only: return "warmup_only";
    case PipelineMode::warmup_unary_only: return "warmup_unary_only";
  }
  return "full";
}

void PipelineConfig::validate() const {
  if (folds < 1) throw std::invalid_argument("folds must be >= 1");
  if (outer_iterations < 0) throw std::invalid_argument("outer_iterations must be >= 0");
  if (k < 1) throw std::invalid_argument("K must be >= 1");
  if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (fold_iterations < 0) throw std::invalid_argument("fold_iterations must be >= 0");
  if (!(weights.alpha >= 0)) throw std::invalid_argument("alpha must be >= 0");
  source_train.validate();
  train.validate();
  blend.validate();
}

double PipelineConfig::effective_alpha() const {
  return mode == PipelineMode::unary_only || mode == PipelineMode::warmup_unary_only
             ? 0.0
             : weights.alpha;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 finalizer over the combined words
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double convergence_check(const Selections& previous, const Selections& next) {
  return 1.0 - selection_accuracy(next, previous);
}

std::vector<std::vector<std::size_t>> fold_partition(const Dataset& dataset, int folds,
                                                     std::uint64_t seed) {
  if (folds < 1) throw std::invalid_argument("folds must be >= 1");
  std::map<ClassId, std::vector<std::size_t>> by_class;
  for (std::size_t b = 0; b < dataset.size(); ++b) {
    const Bag& bag = dataset.bags()[b];
    by_class[bag.labels.empty() ? ClassId{} : *bag.labels.begin()].push_back(b);
  }
  std::mt19937_64 rng(seed);
  std::vector<std::vector<std::size_t>> out(static_cast<std::size_t>(folds));
  std::size_t next = 0;
  for (auto& [c, bags] : by_class) {
    std::shuffle(bags.begin(), bags.end(), rng);
    for (std::size_t b : bags) out[next++ % out.size()].push_back(b);
  }
  for (auto& f : out) std::sort(f.begin(), f.end());
  return out;
}

namespace {

RelocalizeConfig relocalize_config(const PipelineConfig& config, std::uint64_t seed, bool warmup) {
  RelocalizeConfig rc;
  rc.alpha = config.effective_alpha();
  rc.blend = warmup ? BlendWeights{1.0, 1.0} : config.blend;
  rc.init.kind = config.effective_alpha() == 0 ? InitScheme::Kind::objectness : config.init;
  rc.init.k = config.k;
  rc.init.seed = derive_seed(seed, 1);
  rc.icm.epochs = config.epochs;
  rc.icm.seed = derive_seed(seed, 2);
  rc.parallel_classes = config.parallel_classes;
  return rc;
}

Selections restrict(const Selections& selections, const Dataset& subset) {
  Selections out;
  for (const ClassId& c : subset.classes()) {
    Selection& s = out[c];
    s.cls = c;
    auto it = selections.find(c);
    if (it == selections.end()) continue;
    for (const auto& [bag, index] : it->second.chosen) {
      if (subset.index_of(bag)) s.chosen[bag] = index;
    }
  }
  return out;
}

void accumulate(const RelocalizeResult& r, double& energy, double& init_energy) {
  for (const auto& [c, t] : r.traces) {
    if (t.nodes == 0) continue;
    energy += t.final_energy;
    init_energy += t.init_energy;
  }
}

double tail_mean(const LossTrace& trace) {
  if (trace.empty()) return 0;
  const std::size_t n = std::max<std::size_t>(1, trace.size() / 10);
  return std::accumulate(trace.end() - static_cast<std::ptrdiff_t>(n), trace.end(), 0.0) /
         static_cast<double>(n);
}

bool has_boxes(const Dataset& d) {
  for (const Bag& bag : d.bags()) {
    for (const Proposal& p : bag.proposals) {
      if (!p.box) return false;
    }
  }
  return !d.empty();
}

}  // namespace

MultifoldResult multifold_relocalize(const Dataset& dataset, const ScoringModel& model,
                                     const Selections& selections, const PipelineConfig& config,
                                     std::uint64_t seed) {
  MultifoldResult out;
  if (config.folds == 1) {
    const RelocalizeResult r = relocalize(dataset, model, relocalize_config(config, seed, false));
    out.selections = r.selections;
    accumulate(r, out.energy, out.init_energy);
    return out;
  }
  for (const ClassId& c : dataset.classes()) out.selections[c].cls = c;
  const auto folds = fold_partition(dataset, config.folds, derive_seed(seed, 3));
  for (std::size_t f = 0; f < folds.size(); ++f) {
    if (folds[f].empty()) continue;
    std::vector<std::size_t> rest;
    for (std::size_t g = 0; g < folds.size(); ++g) {
      if (g != f) rest.insert(rest.end(), folds[g].begin(), folds[g].end());
    }
    std::sort(rest.begin(), rest.end());
    const Dataset held = dataset.subset(folds[f]);
    ScoringModel fold_model = model;
    if (!rest.empty()) {
      const Dataset others = dataset.subset(rest);
      TrainConfig tc = config.train;
      tc.iterations = config.fold_iterations;
      tc.seed = derive_seed(seed, 100 + f);
      retrain(fold_model, others, restrict(selections, others), {config.effective_alpha()}, tc);
    }
    for (const ClassId& c : dataset.classes()) {
      if (positive_negative_split(held, c).positive.empty()) {
        out.warnings.push_back("fold " + std::to_string(f) + ": no positive bags for class '" +
                               c + "', skipped");
      }
    }
    const RelocalizeResult r =
        relocalize(held, fold_model, relocalize_config(config, derive_seed(seed, 200 + f), false));
    for (const auto& [c, s] : r.selections) {
      out.selections[c].chosen.insert(s.chosen.begin(), s.chosen.end());
    }
    accumulate(r, out.energy, out.init_energy);
  }
  return out;
}

PipelineResult run(const PipelineConfig& config, const Dataset& source, const Dataset& target,
                   const Selections* truth, const IterationCallback& on_iteration) {
  config.validate();
  if (!source.fully_labeled()) throw DataError("run: source dataset must be fully labeled");
  if (source.generic_dim() != target.generic_dim()) {
    throw DataError("run: source feature dimension does not match the target generic block");
  }
  const bool boxes = has_boxes(target);
  const double alpha = config.effective_alpha();

  PipelineResult result;
  result.model = ScoringModel::initialized(
      target.dim(), target.generic_dim(),
      std::vector<ClassId>(target.classes().begin(), target.classes().end()),
      derive_seed(config.seed, 10));

  auto record = [&](IterationMetrics m, const Selections* previous) {
    m.changed = previous ? convergence_check(*previous, result.selections) : 1.0;
    if (truth) m.accuracy = selection_accuracy(result.selections, *truth);
    if (boxes) {
      m.corloc50 = corloc(result.selections, target, 0.5).mean;
      m.corloc70 = corloc(result.selections, target, 0.7).mean;
    }
    result.iterations.push_back(m);
    if (on_iteration) on_iteration(result.iterations.back(), result.model, result.selections);
    return m.changed;
  };

  TrainConfig st = config.source_train;
  st.seed = derive_seed(config.seed, 11);
  IterationMetrics warm;
  warm.train_loss = tail_mean(train_source(result.model, source, {alpha}, st));
  const RelocalizeResult w =
      relocalize(target, result.model, relocalize_config(config, derive_seed(config.seed, 12), true));
  result.selections = w.selections;
  accumulate(w, warm.energy, warm.init_energy);
  record(warm, nullptr);

  const bool iterate = config.mode == PipelineMode::full || config.mode == PipelineMode::unary_only;
  for (int it = 1; iterate && it <= config.outer_iterations; ++it) {
    const std::uint64_t s = derive_seed(config.seed, 1000 + static_cast<std::uint64_t>(it));
    IterationMetrics m;
    m.iteration = it;
    TrainConfig tc = config.train;
    tc.seed = derive_seed(s, 0);
    m.train_loss = tail_mean(retrain(result.model, target, result.selections, {alpha}, tc));
    MultifoldResult mf = multifold_relocalize(target, result.model, result.selections, config, s);
    m.energy = mf.energy;
    m.init_energy = mf.init_energy;
    result.warnings.insert(result.warnings.end(), mf.warnings.begin(), mf.warnings.end());
    const Selections previous = std::move(result.selections);
    result.selections = std::move(mf.selections);
    if (record(m, &previous) < config.early_stop) break;
  }
  return result;
}

json config_to_json(const PipelineConfig& c) {
  auto train = [](const TrainConfig& t) {
    return json{{"learning_rate", t.learning_rate}, {"momentum", t.momentum},
                {"iterations", t.iterations},       {"fg_per_bag", t.fg_per_bag},
                {"bg_per_bag", t.bg_per_bag},       {"bags_per_step", t.bags_per_step},
                {"classes_per_step", t.classes_per_step}};
  };
  static const char* inits[] = {"random", "objectness", "full_image", "mini_problems"};
  return json{{"mode", to_string(c.mode)},
              {"outer_iterations", c.outer_iterations},
              {"folds", c.folds},
              {"fold_iterations", c.fold_iterations},
              {"alpha", c.weights.alpha},
              {"lambda1", c.blend.lambda1},
              {"lambda2", c.blend.lambda2},
              {"k", c.k},
              {"epochs", c.epochs},
              {"init", inits[static_cast<int>(c.init)]},
              {"early_stop", c.early_stop},
              {"seed", c.seed},
              {"source_train", train(c.source_train)},
              {"train", train(c.train)}};
}

json manifest(const PipelineConfig& config, const Dataset& source, const Dataset& target,
              const PipelineResult& result) {
  json iters = json::array();
  for (const IterationMetrics& m : result.iterations) {
    json j{{"iteration", m.iteration},
           {"train_loss", m.train_loss},
           {"energy", m.energy},
           {"init_energy", m.init_energy},
           {"changed", m.changed}};
    if (m.accuracy) j["selection_accuracy"] = *m.accuracy;
    if (m.corloc50) j["corloc50"] = *m.corloc50;
    if (m.corloc70) j["corloc70"] = *m.corloc70;
    iters.push_back(std::move(j));
  }
  return json{{"config", config_to_json(config)},
              {"seeds",
               {{"base", config.seed},
                {"model_init", derive_seed(config.seed, 10)},
                {"source_train", derive_seed(config.seed, 11)},
                {"warmup", derive_seed(config.seed, 12)}}},
              {"source", {{"bags", source.size()}, {"classes", source.classes().size()}}},
              {"target", {{"bags", target.size()}, {"classes", target.classes().size()}}},
              {"iterations", std::move(iters)},
              {"warnings", result.warnings}};
}

}  // namespace pairloc
