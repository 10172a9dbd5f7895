#include "pll/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <mutex>
#include <numeric>
#include <optional>
#include <thread>
#include <unordered_set>

#include <fmt/format.h>

#include "pll/dataset_io.hpp"
#include "pll/hashing.hpp"
#include "pll/io_util.hpp"
#include "pll/label_enhance.hpp"

namespace pll {

namespace {

std::string format_value(double v) { return std::isfinite(v) ? fmt::format("{:.17g}", v) : "nan"; }

std::string format_fraction(double f) { return fmt::format("{}", f); }

std::string label_checksum(const PartialLabelMatrix& labels) {
  const auto e = labels.entries();
  return sha1_hex(std::string_view(reinterpret_cast<const char*>(e.data()), e.size()));
}

std::ofstream open_text(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError(DataErrorKind::Io, fmt::format("cannot write '{}'", path.string()));
  return out;
}

struct RunTask {
  Method method;
  double drop_fraction;
  std::size_t replicate;
  std::uint64_t seed;
  std::string run_id;
};

struct RunOutput {
  bool ok = false;
  std::string error;
  EvalResult eval;
};

constexpr std::array<const char*, 3> kMetricNames{"macro_f1", "micro_auprc", "macro_auprc"};

void save_json(const std::filesystem::path& path, const nlohmann::json& j) {
  auto out = open_text(path);
  out << j.dump(2) << '\n';
}

nlohmann::json eval_to_json(const EvalResult& e) {
  nlohmann::json per_class = nlohmann::json::array();
  for (const auto& f : e.per_class_f1) per_class.push_back(f ? nlohmann::json(*f) : nlohmann::json());
  return {{"macro_f1", e.macro_f1},
          {"per_class_f1", per_class},
          {"micro_auprc", e.micro_auprc ? nlohmann::json(*e.micro_auprc) : nlohmann::json()},
          {"macro_auprc", e.macro_auprc ? nlohmann::json(*e.macro_auprc) : nlohmann::json()}};
}

void store_metrics(TrainReport& report, const EvalResult& e) {
  report.final_metrics["macro_f1"] = e.macro_f1;
  if (e.micro_auprc) report.final_metrics["micro_auprc"] = *e.micro_auprc;
  if (e.macro_auprc) report.final_metrics["macro_auprc"] = *e.macro_auprc;
}

RunOutput execute_run(const ExperimentSpec& spec, const RunTask& task, const Dataset& full,
                      const std::optional<std::vector<std::string>>& fixed_validation) {
  auto [train, val] = fixed_validation ? split_fixed_validation(full, *fixed_validation)
                                       : split_train_val(full, spec.val_fraction, task.seed);
  if (task.drop_fraction > 0.0) train.labels = drop_labels(train.labels, task.drop_fraction, task.seed);

  const Dataset test = full.with_tag(SplitTag::Test);
  TrainConfig cfg = spec.train;
  cfg.method = task.method;
  cfg.seed = task.seed;
  const MetricsSpec metrics{spec.f1_threshold};
  const auto run_dir = spec.output_dir / "runs" / task.run_id;
  if (spec.save_runs) std::filesystem::create_directories(run_dir);

  RunOutput out;
  nlohmann::json report_json;
  switch (task.method) {
    case Method::B0:
    case Method::B1: {
      auto model = train_baseline(cfg, train, val);
      out.eval = evaluate(model.params, test, metrics);
      store_metrics(model.report, out.eval);
      report_json = model.report.to_json();
      if (spec.save_runs) save_params(run_dir / "model.pllnet", model.params);
      break;
    }
    case Method::LE: {
      auto le = run_label_enhancing(LEConfig::from_train_config(cfg), train, val);
      out.eval = evaluate(le.student, test, metrics);
      store_metrics(le.student_report, out.eval);
      report_json = le.student_report.to_json();
      report_json["teacher_report"] = le.teacher_report.to_json();
      if (spec.save_runs) {
        save_params(run_dir / "model.pllnet", le.student);
        write_le_artifacts(run_dir / "label_enhance", le, train);
      }
      break;
    }
    case Method::MT: {
      auto mt = train_mean_teacher(cfg, train, val);
      out.eval = evaluate(mt.eval_params(cfg.eval_model), test, metrics);
      store_metrics(mt.report, out.eval);
      report_json = mt.report.to_json();
      const EvalModel other = cfg.eval_model == EvalModel::Teacher ? EvalModel::Student : EvalModel::Teacher;
      report_json["other_model"] = {
          {"model", to_string(other)},
          {"metrics", eval_to_json(evaluate(mt.eval_params(other), test, metrics))}};
      if (spec.save_runs) {
        save_params(run_dir / "student.pllnet", mt.student);
        save_params(run_dir / "teacher.pllnet", mt.teacher);
      }
      break;
    }
  }
  if (spec.save_runs) {
    nlohmann::json cfg_json = cfg;
    report_json["config"] = cfg_json;
    report_json["drop_fraction"] = task.drop_fraction;
    report_json["test_metrics"] = eval_to_json(out.eval);
    save_json(run_dir / "report.json", report_json);
  }
  out.ok = true;
  return out;
}

}  // namespace

void ExperimentSpec::validate() const {
  if (data_dir.empty()) throw std::invalid_argument("experiment: data_dir is required");
  if (methods.empty()) throw std::invalid_argument("experiment: no methods selected");
  if (replicates < 1) throw std::invalid_argument("experiment: replicates must be >= 1");
  for (double f : drop_fractions) {
    if (!(f >= 0.0 && f <= 1.0)) throw std::invalid_argument(fmt::format("experiment: drop fraction {} outside [0, 1]", f));
  }
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw std::invalid_argument("experiment: val_fraction must be in (0, 1)");
  if (workers < 1) throw std::invalid_argument("experiment: workers must be >= 1");
  train.validate();
}

std::vector<double> ExperimentSpec::effective_drop_fractions() const {
  return drop_fractions.empty() ? std::vector<double>{0.0} : drop_fractions;
}

ExperimentSpec ExperimentSpec::from_json(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  if (!j.is_object()) throw std::invalid_argument("experiment config must be a JSON object");
  ExperimentSpec s;
  auto resolve = [&](const std::string& p) {
    std::filesystem::path path(p);
    return path.is_relative() && !base_dir.empty() ? base_dir / path : path;
  };
  for (const auto& [key, value] : j.items()) {
    if (key == "data_dir") s.data_dir = resolve(value.get<std::string>());
    else if (key == "methods") {
      s.methods.clear();
      for (const auto& m : value) s.methods.push_back(parse_method(m.get<std::string>()));
    } else if (key == "replicates") s.replicates = value.get<std::size_t>();
    else if (key == "seed_base") s.seed_base = value.get<std::uint64_t>();
    else if (key == "drop_fractions") s.drop_fractions = value.get<std::vector<double>>();
    else if (key == "val_fraction") s.val_fraction = value.get<double>();
    else if (key == "output_dir") s.output_dir = resolve(value.get<std::string>());
    else if (key == "workers") s.workers = value.get<std::size_t>();
    else if (key == "save_runs") s.save_runs = value.get<bool>();
    else if (key == "f1_threshold") s.f1_threshold = value.get<double>();
    else if (key == "train") update_from_json(s.train, value);
    else throw std::invalid_argument(fmt::format("unknown experiment config key '{}'", key));
  }
  return s;
}

nlohmann::json ExperimentSpec::to_json() const {
  nlohmann::json methods_json = nlohmann::json::array();
  for (auto m : methods) methods_json.push_back(to_string(m));
  nlohmann::json train_json = train;
  return {{"data_dir", data_dir.string()},
          {"methods", methods_json},
          {"replicates", replicates},
          {"seed_base", seed_base},
          {"drop_fractions", drop_fractions},
          {"val_fraction", val_fraction},
          {"output_dir", output_dir.string()},
          {"workers", workers},
          {"save_runs", save_runs},
          {"f1_threshold", f1_threshold},
          {"train", train_json}};
}

std::string ExperimentSpec::config_hash() const {
  auto j = to_json();
  j.erase("data_dir");
  j.erase("output_dir");
  j.erase("workers");
  j.erase("save_runs");
  return sha1_hex(j.dump());
}

void write_results_csv(const std::filesystem::path& path, const std::vector<ResultRow>& rows) {
  auto out = open_text(path);
  out << kResultsHeader << '\n';
  for (const auto& r : rows) {
    out << fmt::format("{},{},{},{},{},{},{},{}\n", r.run_id, to_string(r.method),
                       format_fraction(r.drop_fraction), r.replicate, r.seed, r.metric,
                       format_value(r.value), r.status);
  }
}

ExperimentOutcome run_experiment(const ExperimentSpec& spec) {
  spec.validate();
  const auto paths = DatasetPaths::in_directory(spec.data_dir);
  const Dataset full = read_dataset(paths, ReadOptions{.allow_unlabeled_rows = true});
  std::optional<std::vector<std::string>> fixed_validation;
  if (const auto sidecar = spec.data_dir / kFixedValidationFile; std::filesystem::exists(sidecar)) {
    fixed_validation = read_clip_id_list(sidecar);
  }
  if (full.indices_with(SplitTag::Test).empty()) throw std::invalid_argument("experiment: dataset has no test clips");
  const std::string test_checksum = label_checksum(full.with_tag(SplitTag::Test).labels);

  std::filesystem::create_directories(spec.output_dir);
  const std::string cfg_hash = spec.config_hash();

  std::vector<RunTask> tasks;
  for (auto method : spec.methods) {
    for (double drop : spec.effective_drop_fractions()) {
      for (std::size_t rep = 0; rep < spec.replicates; ++rep) {
        RunTask t{method, drop, rep, spec.seed_base + rep, ""};
        t.run_id = fmt::format("{}-{}-d{}-r{}", cfg_hash.substr(0, 8), to_string(method),
                               format_fraction(drop), rep);
        tasks.push_back(std::move(t));
      }
    }
  }

  std::vector<RunOutput> outputs(tasks.size());
  std::atomic<std::size_t> next{0};
  std::mutex log_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < tasks.size(); i = next++) {
      try {
        outputs[i] = execute_run(spec, tasks[i], full, fixed_validation);
      } catch (const std::exception& e) {
        outputs[i].ok = false;
        outputs[i].error = e.what();
        std::lock_guard lock(log_mutex);
        std::cerr << fmt::format("run {} failed: {}\n", tasks[i].run_id, e.what());
      }
    }
  };
  {
    std::vector<std::jthread> pool;
    const std::size_t n_workers = std::min(spec.workers, std::max<std::size_t>(tasks.size(), 1));
    for (std::size_t w = 1; w < n_workers; ++w) pool.emplace_back(worker);
    worker();
  }

  if (label_checksum(full.with_tag(SplitTag::Test).labels) != test_checksum) {
    throw std::logic_error("test labels were modified during the experiment");
  }

  ExperimentOutcome outcome;
  nlohmann::json runs_json = nlohmann::json::array();
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const auto& t = tasks[i];
    const auto& o = outputs[i];
    if (!o.ok) ++outcome.failed_runs;
    const std::array<std::optional<double>, 3> values{o.eval.macro_f1, o.eval.micro_auprc, o.eval.macro_auprc};
    for (std::size_t m = 0; m < kMetricNames.size(); ++m) {
      ResultRow row{t.run_id, t.method, t.drop_fraction, t.replicate, t.seed, kMetricNames[m],
                    std::nan(""), "failed"};
      if (o.ok) {
        row.value = values[m].value_or(std::nan(""));
        row.status = values[m] ? "ok" : "na";
      }
      outcome.rows.push_back(std::move(row));
    }
    nlohmann::json run{{"run_id", t.run_id}, {"seed", t.seed}, {"status", o.ok ? "ok" : "failed"}};
    if (!o.ok) run["error"] = o.error;
    runs_json.push_back(std::move(run));
  }

  outcome.results_csv = spec.output_dir / "results.csv";
  write_results_csv(outcome.results_csv, outcome.rows);
  const auto summary = summarize(outcome.results_csv);
  write_summary_csv(spec.output_dir / "summary.csv", summary);
  write_plot_json(spec.output_dir / "plot_data.json", summary);

  nlohmann::json inputs;
  for (const auto& p : {paths.embeddings, paths.labels, paths.classes, paths.splits}) {
    inputs[p.filename().string()] = git_blob_hash(p);
  }
  if (fixed_validation) inputs[kFixedValidationFile] = git_blob_hash(spec.data_dir / kFixedValidationFile);
  save_json(spec.output_dir / "provenance.json",
            {{"config_hash", cfg_hash},
             {"config", spec.to_json()},
             {"inputs", inputs},
             {"test_labels_sha1", test_checksum},
             {"runs", runs_json}});
  return outcome;
}

SummaryRow summarize_values(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("summarize_values: no values");
  SummaryRow r;
  std::sort(values.begin(), values.end());
  const double n = static_cast<double>(values.size());
  r.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : values) ss += (v - r.mean) * (v - r.mean);
  r.std = values.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
  r.min = values.front();
  r.max = values.back();
  const std::size_t mid = values.size() / 2;
  r.median = values.size() % 2 == 1 ? values[mid] : 0.5 * (values[mid - 1] + values[mid]);
  r.values = std::move(values);
  return r;
}

std::vector<SummaryRow> summarize(const std::filesystem::path& results_csv) {
  const auto table = io::read_csv(
      results_csv, {"run_id", "method", "drop_fraction", "replicate", "seed", "metric", "value", "status"});
  struct Group {
    std::string method, drop, metric;
    std::vector<double> values;
  };
  std::vector<Group> groups;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    if (row[7] != "ok") continue;
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(row[6].data(), row[6].data() + row[6].size(), v);
    if (ec != std::errc{} || ptr != row[6].data() + row[6].size()) {
      throw DataError(DataErrorKind::MalformedCsv,
                      fmt::format("{}:{}: invalid value '{}'", results_csv.string(), table.line_numbers[r], row[6]));
    }
    auto it = std::find_if(groups.begin(), groups.end(), [&](const Group& g) {
      return g.method == row[1] && g.drop == row[2] && g.metric == row[5];
    });
    if (it == groups.end()) {
      groups.push_back({row[1], row[2], row[5], {}});
      it = std::prev(groups.end());
    }
    it->values.push_back(v);
  }
  std::vector<SummaryRow> out;
  for (auto& g : groups) {
    // Keep replicate order in the plot data; statistics sort a copy.
    auto s = summarize_values(g.values);
    s.values = std::move(g.values);
    s.method = g.method;
    s.drop_fraction = g.drop;
    s.metric = g.metric;
    out.push_back(std::move(s));
  }
  return out;
}

void write_summary_csv(const std::filesystem::path& path, const std::vector<SummaryRow>& rows) {
  auto out = open_text(path);
  out << "method,drop_fraction,metric,count,mean,std,min,median,max\n";
  for (const auto& r : rows) {
    out << fmt::format("{},{},{},{},{},{},{},{},{}\n", r.method, r.drop_fraction, r.metric,
                       r.values.size(), format_value(r.mean), format_value(r.std), format_value(r.min),
                       format_value(r.median), format_value(r.max));
  }
}

void write_plot_json(const std::filesystem::path& path, const std::vector<SummaryRow>& rows) {
  nlohmann::json groups = nlohmann::json::array();
  for (const auto& r : rows) {
    groups.push_back({{"method", r.method},
                      {"drop_fraction", r.drop_fraction},
                      {"metric", r.metric},
                      {"values", r.values}});
  }
  save_json(path, {{"groups", groups}});
}

ValidationReport validate_dataset_dir(const std::filesystem::path& dir) {
  const Dataset ds = read_dataset(DatasetPaths::in_directory(dir));
  ValidationReport rep;
  rep.num_clips = ds.num_clips();
  rep.num_classes = ds.num_classes();
  rep.embed_dim = ds.embed_dim();
  rep.train_clips = ds.indices_with(SplitTag::Train).size();
  rep.test_clips = ds.indices_with(SplitTag::Test).size();
  rep.observed_labels = ds.labels.observed_count();
  rep.coverage = label_coverage(ds.labels);
  if (const auto sidecar = dir / kFixedValidationFile; std::filesystem::exists(sidecar)) {
    const auto ids = read_clip_id_list(sidecar);
    std::unordered_set<std::string> train_ids;
    for (auto i : ds.indices_with(SplitTag::Train)) train_ids.insert(ds.embeddings[i].clip_id);
    std::unordered_set<std::string> seen;
    for (const auto& id : ids) {
      if (!train_ids.contains(id)) {
        throw DataError(DataErrorKind::UnknownClipId,
                        fmt::format("{}: unknown clip id '{}' (must be a train clip)", sidecar.string(), id));
      }
      if (!seen.insert(id).second) {
        throw DataError(DataErrorKind::DuplicateClipId, fmt::format("{}: duplicate clip id '{}'", sidecar.string(), id));
      }
    }
    rep.fixed_validation_clips = ids.size();
  }
  return rep;
}

}  // namespace pll
