// Command-line front end: replicated experiments, result summaries,
// dataset checks and synthetic dataset generation.

#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "pll/dataset_io.hpp"
#include "pll/experiment.hpp"

namespace {

std::vector<double> parse_fraction_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::size_t used = 0;
    const double v = std::stod(item, &used);
    if (used != item.size()) throw std::invalid_argument(fmt::format("invalid fraction '{}'", item));
    out.push_back(v);
  }
  return out;
}

std::vector<pll::Method> parse_method_list(const std::vector<std::string>& items) {
  std::vector<pll::Method> out;
  for (const auto& item : items) {
    std::stringstream ss(item);
    std::string m;
    while (std::getline(ss, m, ',')) {
      if (!m.empty()) out.push_back(pll::parse_method(m));
    }
  }
  return out;
}

int cmd_run(const std::string& config_path, const std::vector<std::string>& methods,
            std::optional<std::size_t> replicates, const std::string& drop, const std::string& out_dir,
            std::optional<std::size_t> workers, const std::string& data_dir) {
  std::ifstream in(config_path);
  if (!in) throw std::runtime_error(fmt::format("cannot open config '{}'", config_path));
  const auto j = nlohmann::json::parse(in);
  auto spec = pll::ExperimentSpec::from_json(j, std::filesystem::path(config_path).parent_path());
  if (!methods.empty()) spec.methods = parse_method_list(methods);
  if (replicates) spec.replicates = *replicates;
  if (!drop.empty()) spec.drop_fractions = parse_fraction_list(drop);
  if (!out_dir.empty()) spec.output_dir = out_dir;
  if (workers) spec.workers = *workers;
  if (!data_dir.empty()) spec.data_dir = data_dir;

  const auto outcome = pll::run_experiment(spec);
  std::cout << fmt::format("wrote {} result rows to {}\n", outcome.rows.size(), outcome.results_csv.string());
  for (const auto& r : pll::summarize(outcome.results_csv)) {
    std::cout << fmt::format("{:>3} drop={:<5} {:<12} n={} mean={:.4f} std={:.4f}\n", r.method, r.drop_fraction,
                             r.metric, r.values.size(), r.mean, r.std);
  }
  if (outcome.failed_runs > 0) std::cerr << fmt::format("{} run(s) failed\n", outcome.failed_runs);
  return outcome.exit_code();
}

int cmd_summarize(const std::string& in, const std::string& out, const std::string& plot_json) {
  const auto rows = pll::summarize(in);
  pll::write_summary_csv(out, rows);
  if (!plot_json.empty()) pll::write_plot_json(plot_json, rows);
  std::cout << fmt::format("{} groups written to {}\n", rows.size(), out);
  return 0;
}

int cmd_validate(const std::string& dir) {
  const auto rep = pll::validate_dataset_dir(dir);
  std::cout << fmt::format(
      "ok: {} clips ({} train, {} test), {} classes, dim {}, {} observed labels, coverage {:.5f}\n",
      rep.num_clips, rep.train_clips, rep.test_clips, rep.num_classes, rep.embed_dim, rep.observed_labels,
      rep.coverage);
  if (rep.fixed_validation_clips > 0) {
    std::cout << fmt::format("fixed validation list: {} clips\n", rep.fixed_validation_clips);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Training and evaluation for multi-label classification with missing labels"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "Run a replicated experiment from a JSON config");
  std::string config_path, drop, out_dir, data_dir;
  std::vector<std::string> methods;
  std::optional<std::size_t> replicates, workers;
  run->add_option("--config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  run->add_option("--methods", methods, "Methods to run (B0,B1,LE,MT)");
  run->add_option("--replicates", replicates, "Replicates per method and drop fraction");
  run->add_option("--drop", drop, "Comma-separated fractions of training labels to remove");
  run->add_option("--out", out_dir, "Output directory");
  run->add_option("--workers", workers, "Parallel run slots");
  run->add_option("--data", data_dir, "Dataset directory (overrides data_dir)");

  auto* summarize = app.add_subcommand("summarize", "Summarize a results.csv");
  std::string sum_in, sum_out, plot_json;
  summarize->add_option("--in", sum_in, "results.csv")->required()->check(CLI::ExistingFile);
  summarize->add_option("--out", sum_out, "summary.csv")->required();
  summarize->add_option("--plot-json", plot_json, "Also write per-group values as JSON");

  auto* validate = app.add_subcommand("ingest-validate", "Check the canonical dataset files in a directory");
  std::string val_dir;
  validate->add_option("--dir", val_dir, "Dataset directory")->required()->check(CLI::ExistingDirectory);

  auto* synth = app.add_subcommand("synth", "Write a synthetic dataset in the canonical formats");
  pll::SyntheticSpec spec;
  std::string synth_out;
  double prior = 0.3;
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--clips", spec.num_clips, "Number of clips")->capture_default_str();
  synth->add_option("--classes", spec.num_classes, "Number of classes")->capture_default_str();
  synth->add_option("--frames", spec.frames_per_clip, "Frames per clip")->capture_default_str();
  synth->add_option("--dim", spec.embed_dim, "Embedding dimension")->capture_default_str();
  synth->add_option("--prior", prior, "Positive probability per class")->capture_default_str();
  synth->add_option("--noise", spec.noise_std, "Gaussian noise std")->capture_default_str();
  synth->add_option("--scale", spec.prototype_scale, "Prototype norm")->capture_default_str();
  synth->add_option("--active", spec.active_frame_fraction, "Fraction of frames carrying a prototype")
      ->capture_default_str();
  synth->add_option("--test-fraction", spec.test_fraction, "Fraction of clips tagged test")->capture_default_str();
  synth->add_option("--seed", spec.seed, "Seed")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(config_path, methods, replicates, drop, out_dir, workers, data_dir);
    if (*summarize) return cmd_summarize(sum_in, sum_out, plot_json);
    if (*validate) return cmd_validate(val_dir);
    if (*synth) {
      spec.class_prior = {prior};
      const auto data = pll::generate_synthetic(spec);
      std::filesystem::create_directories(synth_out);
      pll::write_dataset(data.dataset, pll::DatasetPaths::in_directory(synth_out));
      std::cout << fmt::format("wrote {} clips to {}\n", data.dataset.num_clips(), synth_out);
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
