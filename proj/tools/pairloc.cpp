// Command line front end: synthetic data, training, re-localization, evaluation.

#include <CLI11.hpp>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "pairloc/io.hpp"
#include "pairloc/metrics.hpp"
#include "pairloc/pipeline.hpp"
#include "pairloc/synth.hpp"

namespace fs = std::filesystem;
using namespace pairloc;
using nlohmann::json;

namespace {

const std::map<std::string, InitScheme::Kind> kInitNames{
    {"random", InitScheme::Kind::random},
    {"objectness", InitScheme::Kind::objectness},
    {"full_image", InitScheme::Kind::full_image},
    {"mini_problems", InitScheme::Kind::mini_problems}};

const std::map<std::string, PipelineMode> kModeNames{
    {"full", PipelineMode::full},
    {"unary_only", PipelineMode::unary_only},
    {"warmup_only", PipelineMode::warmup_only},
    {"warmup_unary_only", PipelineMode::warmup_unary_only}};

void add_train_flags(CLI::App* cmd, TrainConfig& t, const std::string& prefix = "") {
  cmd->add_option("--" + prefix + "lr", t.learning_rate, "SGD learning rate")->capture_default_str();
  cmd->add_option("--" + prefix + "momentum", t.momentum, "SGD momentum")->capture_default_str();
  cmd->add_option("--" + prefix + "iterations", t.iterations, "SGD steps")->capture_default_str();
  if (!prefix.empty()) return;
  cmd->add_option("--fg-per-bag", t.fg_per_bag)->capture_default_str();
  cmd->add_option("--bg-per-bag", t.bg_per_bag)->capture_default_str();
  cmd->add_option("--bags-per-step", t.bags_per_step)->capture_default_str();
  cmd->add_option("--classes-per-step", t.classes_per_step)->capture_default_str();
}

void add_relocalize_flags(CLI::App* cmd, RelocalizeConfig& rc) {
  cmd->add_option("--alpha", rc.alpha, "pairwise weight")->capture_default_str();
  cmd->add_option("--init", rc.init.kind, "initializer")
      ->transform(CLI::CheckedTransformer(kInitNames, CLI::ignore_case))
      ->default_str("mini_problems");
  cmd->add_option("-K,--k", rc.init.k, "mini-problem size")->capture_default_str();
  cmd->add_option("-E,--epochs", rc.icm.epochs, "ICM epochs")->capture_default_str();
  cmd->add_option("--trws-iters", rc.init.trws.max_iters)->capture_default_str();
  cmd->add_flag("--random-order", [&rc](std::int64_t) { rc.icm.order = NodeOrder::random; },
                "visit ICM nodes in a random order");
  cmd->add_flag("--parallel-classes", rc.parallel_classes);
}

fs::path prepare(const std::string& out) {
  fs::path dir(out);
  fs::create_directories(dir);
  return dir;
}

std::vector<ClassId> class_list(const Dataset& d) { return {d.classes().begin(), d.classes().end()}; }

void write_selection_outputs(const fs::path& dir, const RelocalizeResult& r,
                             const Dataset& target) {
  write_json(selections_to_json(r.selections), dir / "selections.json");
  std::ofstream csv(dir / "traces.csv");
  write_traces_csv(r.traces, csv);
  json summary = json::object();
  double init_energy = 0, final_energy = 0;
  std::uint64_t init_evals = 0, total_evals = 0;
  for (const auto& [c, t] : r.traces) {
    summary["classes"][c] = {{"nodes", t.nodes},
                             {"init_energy", t.init_energy},
                             {"final_energy", t.final_energy},
                             {"init_evals", t.init_evals},
                             {"total_evals", t.total_evals},
                             {"changes_per_epoch", t.changes_per_epoch}};
    init_energy += t.init_energy;
    final_energy += t.final_energy;
    init_evals += t.init_evals;
    total_evals += t.total_evals;
  }
  summary["init_energy"] = init_energy;
  summary["final_energy"] = final_energy;
  summary["init_evals"] = init_evals;
  summary["total_evals"] = total_evals;
  summary["bags"] = target.size();
  write_json(summary, dir / "summary.json");
}

json evaluate(const Selections& s, const Dataset& target, const Selections* truth) {
  json j = json::object();
  if (truth) j["selection_accuracy"] = selection_accuracy(s, *truth);
  for (double th : {0.5, 0.7}) {
    try {
      const CorLocResult r = corloc(s, target, th);
      const std::string key = th == 0.5 ? "corloc50" : "corloc70";
      j[key] = {{"mean", r.mean}, {"per_class", r.per_class}};
    } catch (const DataError& e) {
      j["corloc_error"] = e.what();
    }
  }
  return j;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Weakly supervised localization with learned pairwise similarity"};
  app.require_subcommand(1);
  std::uint64_t seed = 0;
  std::string out = "out";

  // synth
  SynthConfig sc;
  auto* synth = app.add_subcommand("synth", "write a planted synthetic source/target pair");
  synth->add_option("--classes", sc.num_classes, "target classes")->capture_default_str();
  synth->add_option("--bags-per-class", sc.bags_per_class)->capture_default_str();
  synth->add_option("-B,--proposals", sc.proposals_per_bag)->capture_default_str();
  synth->add_option("-d,--dim", sc.feature_dim)->capture_default_str();
  synth->add_option("--separation", sc.cluster_separation)->capture_default_str();
  synth->add_option("--distractor-overlap", sc.distractor_overlap)->capture_default_str();
  synth->add_option("--noise", sc.noise_sigma)->capture_default_str();
  synth->add_option("--source-classes", sc.source_classes)->capture_default_str();
  synth->add_option("--source-bags-per-class", sc.source_bags_per_class)->capture_default_str();

  // train-source
  std::string source_path, target_path, model_path, truth_path, selections_path;
  LossWeights weights;
  PipelineConfig pc;
  auto* train = app.add_subcommand("train-source", "train the class-generic scores on a source set");
  train->add_option("--source", source_path)->required()->check(CLI::ExistingFile);
  train->add_option("--target", target_path, "target set fixing classes and dimensions")
      ->required()
      ->check(CLI::ExistingFile);
  train->add_option("--alpha", weights.alpha)->capture_default_str();
  add_train_flags(train, pc.source_train);

  // warmup and relocalize
  RelocalizeConfig rc;
  auto* warmup = app.add_subcommand("warmup", "re-localize with class-generic scores only");
  warmup->add_option("--model", model_path)->required()->check(CLI::ExistingFile);
  warmup->add_option("--target", target_path)->required()->check(CLI::ExistingFile);
  warmup->add_option("--truth", truth_path)->check(CLI::ExistingFile);
  add_relocalize_flags(warmup, rc);

  auto* reloc = app.add_subcommand("relocalize", "one re-localization step");
  reloc->add_option("--model", model_path)->required()->check(CLI::ExistingFile);
  reloc->add_option("--target", target_path)->required()->check(CLI::ExistingFile);
  reloc->add_option("--truth", truth_path)->check(CLI::ExistingFile);
  reloc->add_option("--lambda1", rc.blend.lambda1, "generic pairwise weight")->capture_default_str();
  reloc->add_option("--lambda2", rc.blend.lambda2, "generic unary weight")->capture_default_str();
  add_relocalize_flags(reloc, rc);

  // run
  std::string init_name = "mini_problems";
  auto* run_cmd = app.add_subcommand("run", "full alternating optimization");
  run_cmd->add_option("--source", source_path)->required()->check(CLI::ExistingFile);
  run_cmd->add_option("--target", target_path)->required()->check(CLI::ExistingFile);
  run_cmd->add_option("--truth", truth_path)->check(CLI::ExistingFile);
  run_cmd->add_option("--mode", pc.mode)
      ->transform(CLI::CheckedTransformer(kModeNames, CLI::ignore_case))
      ->default_str("full");
  run_cmd->add_option("--outer-iterations", pc.outer_iterations)->capture_default_str();
  run_cmd->add_option("--folds", pc.folds)->capture_default_str();
  run_cmd->add_option("--fold-iterations", pc.fold_iterations)->capture_default_str();
  run_cmd->add_option("--alpha", pc.weights.alpha)->capture_default_str();
  run_cmd->add_option("--lambda1", pc.blend.lambda1)->capture_default_str();
  run_cmd->add_option("--lambda2", pc.blend.lambda2)->capture_default_str();
  run_cmd->add_option("-K,--k", pc.k)->capture_default_str();
  run_cmd->add_option("-E,--epochs", pc.epochs)->capture_default_str();
  run_cmd->add_option("--init", pc.init)
      ->transform(CLI::CheckedTransformer(kInitNames, CLI::ignore_case))
      ->default_str("mini_problems");
  run_cmd->add_option("--early-stop", pc.early_stop)->capture_default_str();
  run_cmd->add_flag("--parallel-classes", pc.parallel_classes);
  add_train_flags(run_cmd, pc.train);
  add_train_flags(run_cmd, pc.source_train, "source-");

  // eval
  auto* eval = app.add_subcommand("eval", "CorLoc and selection accuracy");
  eval->add_option("--target", target_path)->required()->check(CLI::ExistingFile);
  eval->add_option("--selections", selections_path)->required()->check(CLI::ExistingFile);
  eval->add_option("--truth", truth_path)->check(CLI::ExistingFile);

  // bench
  std::vector<int> ks{2, 4, 8};
  auto* bench = app.add_subcommand("bench", "evaluation counts and wall time per initializer");
  bench->add_option("--model", model_path)->required()->check(CLI::ExistingFile);
  bench->add_option("--target", target_path)->required()->check(CLI::ExistingFile);
  bench->add_option("--truth", truth_path)->check(CLI::ExistingFile);
  bench->add_option("--ks", ks, "mini-problem sizes")->capture_default_str();
  bench->add_option("--alpha", rc.alpha)->capture_default_str();
  bench->add_option("-E,--epochs", rc.icm.epochs)->capture_default_str();

  for (CLI::App* cmd : {synth, train, warmup, reloc, run_cmd, eval, bench}) {
    cmd->add_option("--seed", seed, "random seed")->capture_default_str();
    cmd->add_option("-o,--out", out, "output directory")->capture_default_str();
  }
  CLI11_PARSE(app, argc, argv);

  try {
    const fs::path dir = prepare(out);
    std::optional<Selections> truth;
    if (!truth_path.empty()) truth = selections_from_json(read_json(truth_path));

    if (*synth) {
      sc.seed = seed;
      const SynthData data = generate(sc);
      save_dataset(data.source, dir / "source.jsonl");
      save_dataset(data.target, dir / "target.jsonl");
      write_json(selections_to_json(data.truth), dir / "truth.json");
    } else if (*train) {
      const Dataset source = load_dataset(source_path), target = load_dataset(target_path);
      ScoringModel model = ScoringModel::initialized(target.dim(), target.generic_dim(),
                                                     class_list(target), derive_seed(seed, 10));
      pc.source_train.seed = derive_seed(seed, 11);
      const LossTrace trace = train_source(model, source, weights, pc.source_train);
      write_json(model_to_json(model), dir / "model.json");
      std::ofstream csv(dir / "loss.csv");
      csv << "step,loss\n";
      for (std::size_t i = 0; i < trace.size(); ++i) csv << i << ',' << trace[i] << '\n';
    } else if (*warmup || *reloc) {
      const Dataset target = load_dataset(target_path);
      const ScoringModel model = model_from_json(read_json(model_path));
      rc.init.seed = derive_seed(seed, 1);
      rc.icm.seed = derive_seed(seed, 2);
      const RelocalizeResult r =
          *warmup ? warmup_relocalize(target, model, rc) : relocalize(target, model, rc);
      write_selection_outputs(dir, r, target);
      write_json(evaluate(r.selections, target, truth ? &*truth : nullptr), dir / "metrics.json");
    } else if (*run_cmd) {
      const Dataset source = load_dataset(source_path), target = load_dataset(target_path);
      pc.seed = seed;
      fs::create_directories(dir / "checkpoints");
      std::ofstream csv(dir / "metrics.csv");
      csv << "iteration,train_loss,energy,init_energy,changed,selection_accuracy,corloc50,corloc70\n";
      auto opt = [](const std::optional<double>& v) { return v ? std::to_string(*v) : std::string(); };
      const PipelineResult result = run(
          pc, source, target, truth ? &*truth : nullptr,
          [&](const IterationMetrics& m, const ScoringModel& model, const Selections& s) {
            csv << m.iteration << ',' << m.train_loss << ',' << m.energy << ',' << m.init_energy
                << ',' << m.changed << ',' << opt(m.accuracy) << ',' << opt(m.corloc50) << ','
                << opt(m.corloc70) << '\n';
            const std::string tag = "iter_" + std::to_string(m.iteration);
            write_json(model_to_json(model), dir / "checkpoints" / (tag + "_model.json"));
            write_json(selections_to_json(s), dir / "checkpoints" / (tag + "_selections.json"));
          });
      write_json(manifest(pc, source, target, result), dir / "manifest.json");
      write_json(model_to_json(result.model), dir / "model.json");
      write_json(selections_to_json(result.selections), dir / "selections.json");
      for (const std::string& w : result.warnings) std::cerr << "warning: " << w << '\n';
    } else if (*eval) {
      const Dataset target = load_dataset(target_path);
      const Selections s = selections_from_json(read_json(selections_path));
      const json j = evaluate(s, target, truth ? &*truth : nullptr);
      write_json(j, dir / "eval.json");
      std::cout << j.dump(2) << '\n';
    } else if (*bench) {
      const Dataset target = load_dataset(target_path);
      const ScoringModel model = model_from_json(read_json(model_path));
      std::ofstream traces(dir / "bench_traces.csv"), summary(dir / "bench_summary.csv");
      traces << "scheme,k,class,seconds,kind,epoch,energy,lower_bound,pairwise_evals\n";
      summary << "scheme,k,init_energy,final_energy,init_evals,total_evals,seconds,selection_accuracy\n";
      std::vector<std::pair<std::string, int>> schemes{{"random", 0}, {"objectness", 0}};
      bool has_full = true;
      for (const Bag& b : target.bags()) {
        bool found = false;
        for (const Proposal& p : b.proposals) found = found || p.is_full_image;
        has_full = has_full && found;
      }
      if (has_full) schemes.push_back({"full_image", 0});
      for (int k : ks) schemes.push_back({"mini_problems", k});
      for (const auto& [name, k] : schemes) {
        RelocalizeConfig cfg = rc;
        cfg.init.kind = kInitNames.at(name);
        if (k > 0) cfg.init.k = k;
        cfg.init.seed = derive_seed(seed, 1);
        cfg.icm.seed = derive_seed(seed, 2);
        const auto start = std::chrono::steady_clock::now();
        const RelocalizeResult r = warmup_relocalize(target, model, cfg);
        const double seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        double ie = 0, fe = 0;
        std::uint64_t iv = 0, tv = 0;
        for (const auto& [c, t] : r.traces) {
          ie += t.init_energy;
          fe += t.final_energy;
          iv += t.init_evals;
          tv += t.total_evals;
          for (const TraceRow& row : t.rows) {
            traces << name << ',' << k << ',' << c << ',' << row.seconds << ',' << row.kind << ','
                   << row.epoch << ',' << row.energy << ',';
            if (!std::isnan(row.lower_bound)) traces << row.lower_bound;
            traces << ',' << row.pairwise_evals << '\n';
          }
        }
        summary << name << ',' << k << ',' << ie << ',' << fe << ',' << iv << ',' << tv << ','
                << seconds << ',';
        if (truth) summary << selection_accuracy(r.selections, *truth);
        summary << '\n';
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
