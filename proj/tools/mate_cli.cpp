#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mate/config.hpp"
#include "mate/dataio.hpp"
#include "mate/errors.hpp"
#include "mate/eval.hpp"
#include "mate/report.hpp"
#include "mate/synthgen.hpp"
#include "mate/synthio.hpp"
#include "mate/trainer.hpp"

namespace fs = std::filesystem;
using namespace mate;

namespace {

struct ConfigArgs {
  std::string config;
  std::vector<std::string> sets;
};

void add_config_args(CLI::App* cmd, ConfigArgs& args) {
  cmd->add_option("--config", args.config, "TOML run configuration");
  cmd->add_option("--set", args.sets, "override a config value, e.g. --set train.epochs=10");
}

ExperimentConfig resolve(const ConfigArgs& args) {
  ExperimentConfig config = args.config.empty() ? ExperimentConfig{} : load_config(args.config);
  for (const auto& s : args.sets) apply_override(config, s);
  return config;
}

void prepare_output(const fs::path& out, bool force) {
  if (fs::exists(out)) {
    if (!force) throw UsageError("output " + out.string() + " already exists (use --force to overwrite)");
    fs::remove_all(out);
  }
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
}

dataio::MultiModalDataset load_data(const std::string& path) {
  if (path.empty()) throw ConfigError("no dataset given (use --data or train.data_path)");
  if (!fs::exists(path)) throw DataError("dataset not found: " + path);
  return dataio::load_dataset(path);
}

// Model and resolved config of a run directory.
struct Run {
  Checkpoint checkpoint;
  ExperimentConfig config;
};

Run open_run(const std::string& run_dir, const ConfigArgs& args) {
  const fs::path ckpt = fs::path(run_dir) / "checkpoint.pt";
  Run run{load_checkpoint(ckpt), {}};
  run.config = run.checkpoint.config;
  for (const auto& s : args.sets) apply_override(run.config, s);
  return run;
}

int cmd_generate(const ConfigArgs& args, const std::string& out, std::optional<std::uint64_t> seed, bool force) {
  auto config = resolve(args);
  if (seed) config.generation.seed = *seed;
  synthgen::validate(config.generation);
  prepare_output(out, force);
  const auto data = synthgen::generate_dataset(config.generation);
  write_generated_dataset(data, out, config.eval.test_fraction);
  write_text(fs::path(out) / "config.toml", to_toml(config));
  std::cout << (fs::path(out) / "manifest.json").string() << "\n";
  return 0;
}

int cmd_train(const ConfigArgs& args, std::string data_path, const std::string& out, std::optional<std::uint64_t> seed,
              const std::string& ablate, const std::string& resume_from, bool force) {
  if (!resume_from.empty()) {
    auto overrides = args.sets;
    if (seed) overrides.push_back("train.seed=" + std::to_string(*seed));
    auto ckpt = load_checkpoint(resume_from);
    if (data_path.empty()) data_path = ckpt.config.train.data_path;
    auto config = ckpt.config;
    for (const auto& o : overrides) apply_override(config, o);
    const auto split = report::split_dataset(load_data(data_path), config.eval);
    const auto report = resume(resume_from, overrides, split.train, out);
    std::cerr << "resumed at step " << report.first_step << ", now " << report.final_step << "/" << report.total_steps
              << "\n";
    std::cout << report.checkpoint.string() << "\n";
    return 0;
  }
  auto config = resolve(args);
  if (seed) config.train.seed = *seed;
  if (!ablate.empty()) apply_ablation(config.loss, ablate);
  if (!data_path.empty()) config.train.data_path = data_path;
  validate(config);
  // Without a separate test set the trailing windows are held out for eval.
  const auto split = report::split_dataset(load_data(config.train.data_path), config.eval);
  prepare_output(out, force);
  const auto report = train(config, split.train, out);
  std::cerr << "trained " << report.log.size() << " steps in " << report.seconds << " s\n";
  std::cout << report.checkpoint.string() << "\n";
  return 0;
}

fs::path report_path(const std::string& run, const std::string& out, const char* fallback, bool force) {
  const fs::path path = out.empty() ? fs::path(run) / fallback : fs::path(out);
  if (fs::exists(path) && !force) throw UsageError("output " + path.string() + " already exists (use --force to overwrite)");
  return path;
}

int cmd_eval(const ConfigArgs& args, const std::string& run_dir, const std::string& data_path,
             const std::string& metrics, const std::string& out, bool force) {
  auto run = open_run(run_dir, args);
  const auto selected = report::parse_metrics(metrics);
  const auto path = report_path(run_dir, out, "eval.json", force);
  const auto data = load_data(data_path.empty() ? run.config.train.data_path : data_path);
  const auto split = report::split_dataset(data, run.config.eval);
  const auto json = report::evaluate(run.checkpoint.model, run.config, split, selected);
  write_text(path, json.dump(2) + "\n");
  std::cout << json.dump(2) << "\n";
  return 0;
}

int cmd_probe(const ConfigArgs& args, const std::string& run_dir, const std::string& data_path,
              const std::string& ratios, const std::string& out, bool force) {
  auto run = open_run(run_dir, args);
  const auto list = ratios.empty() ? run.config.eval.ratios : report::parse_ratios(ratios);
  const auto path = report_path(run_dir, out, "probe.json", force);
  const auto data = load_data(data_path.empty() ? run.config.train.data_path : data_path);
  const auto split = report::split_dataset(data, run.config.eval);
  const auto result = report::probe(run.checkpoint.model, run.config, split, list);
  for (const auto& w : result.warnings) std::cerr << "warning: " << w << "\n";
  const auto json = report::probe_json(result);
  write_text(path, json.dump(2) + "\n");
  std::cout << json.dump(2) << "\n";
  return 0;
}

int cmd_plot(const ConfigArgs& args, const std::string& run_dir, const std::string& data_path, const std::string& kind,
             std::optional<std::uint64_t> seed, const std::string& out, bool force) {
  if (kind != "tsne") throw UsageError("unknown plot kind '" + kind + "' (valid kinds: tsne)");
  auto run = open_run(run_dir, args);
  const auto path = report_path(run_dir, out, "tsne.png", force);
  const auto data = load_data(data_path.empty() ? run.config.train.data_path : data_path);
  const auto split = report::split_dataset(data, run.config.eval);
  const auto latents = encode_dataset(run.checkpoint.model, split.test);
  eval::TsneOptions opts;
  opts.perplexity = run.config.eval.tsne_perplexity;
  opts.seed = seed ? *seed : run.config.eval.seed;
  const auto shared = report::flatten_time(latents.z_c.mean(1, true));
  eval::emit_tsne_plot(shared, split.test.labels, path, opts);
  std::cout << path.string() << "\n";
  return 0;
}

int cmd_ingest(const std::string& raw, const std::string& out, bool force) {
  prepare_output(out, force);
  const auto result = dataio::ingest_ucihar(raw, out);
  std::cout << result.train_manifest.string() << "\n" << result.test_manifest.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-modal temporal disentanglement: generate, train, evaluate"};
  app.require_subcommand(1);

  ConfigArgs args;
  std::string out, data, run, metrics = "mcc,r2,cls,knn", ratios, kind = "tsne", ablate, resume_from, raw;
  std::optional<std::uint64_t> seed;
  bool force = false;

  auto* gen = app.add_subcommand("generate", "synthesize a dependent-latent dataset");
  add_config_args(gen, args);
  gen->add_option("--out", out, "dataset directory")->required();
  gen->add_option("--seed", seed, "generation seed");
  gen->add_flag("--force", force, "replace an existing output");

  auto* tr = app.add_subcommand("train", "train a model into a run directory");
  add_config_args(tr, args);
  tr->add_option("--data", data, "dataset manifest");
  tr->add_option("--out", out, "run directory")->required();
  tr->add_option("--seed", seed, "training seed");
  tr->add_option("--ablate", ablate, "mate-p, mate-s, mate-r, mate-c, orthogonal or none");
  tr->add_option("--resume", resume_from, "continue from a checkpoint");
  tr->add_flag("--force", force, "replace an existing run directory");

  auto* ev = app.add_subcommand("eval", "identifiability and classification report");
  add_config_args(ev, args);
  ev->add_option("--run", run, "run directory")->required();
  ev->add_option("--data", data, "dataset manifest (default: the run's training data)");
  ev->add_option("--metrics", metrics, "comma list of mcc, r2, cls, knn");
  ev->add_option("--out", out, "report path (default: <run>/eval.json)");
  ev->add_flag("--force", force, "replace an existing report");

  auto* pr = app.add_subcommand("probe", "linear probing at several label ratios");
  add_config_args(pr, args);
  pr->add_option("--run", run, "run directory")->required();
  pr->add_option("--data", data, "dataset manifest (default: the run's training data)");
  pr->add_option("--ratios", ratios, "comma list of label ratios (default 1.0,0.1,0.05,0.01)");
  pr->add_option("--out", out, "report path (default: <run>/probe.json)");
  pr->add_flag("--force", force, "replace an existing report");

  auto* pl = app.add_subcommand("plot", "t-SNE of the shared latents");
  add_config_args(pl, args);
  pl->add_option("--run", run, "run directory")->required();
  pl->add_option("--data", data, "dataset manifest (default: the run's training data)");
  pl->add_option("--kind", kind, "plot kind (tsne)");
  pl->add_option("--seed", seed, "embedding seed");
  pl->add_option("--out", out, "image path (default: <run>/tsne.png)");
  pl->add_flag("--force", force, "replace an existing image");

  auto* in = app.add_subcommand("ingest", "convert the UCI-HAR release into MMTS manifests");
  in->add_option("--raw", raw, "extracted 'UCI HAR Dataset' directory")->required();
  in->add_option("--out", out, "output directory")->required();
  in->add_flag("--force", force, "replace an existing output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(ExitCode::kConfig);
  }

  try {
    if (gen->parsed()) return cmd_generate(args, out, seed, force);
    if (tr->parsed()) return cmd_train(args, data, out, seed, ablate, resume_from, force);
    if (ev->parsed()) return cmd_eval(args, run, data, metrics, out, force);
    if (pr->parsed()) return cmd_probe(args, run, data, ratios, out, force);
    if (pl->parsed()) return cmd_plot(args, run, data, kind, seed, out, force);
    if (in->parsed()) return cmd_ingest(raw, out, force);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(e.exit_code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::kRuntime);
  }
  return 0;
}
