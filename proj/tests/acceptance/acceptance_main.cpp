// Acceptance suite: one PASS/FAIL line per criterion, exit code 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "oracles.hpp"
#include "pll/dataset_io.hpp"
#include "pll/experiment.hpp"
#include "pll/label_enhance.hpp"
#include "pll/losses.hpp"
#include "pll/metrics.hpp"
#include "pll/optimizer.hpp"
#include "pll/trainers.hpp"

namespace fs = std::filesystem;
using namespace pll;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) {
  return std::chrono::duration<double>(Clock::now() - t).count();
}

// Gradient correctness ----------------------------------------------------

enum class Policy { B0, B1, LE, MT };

Verdict gradient_check() {
  const auto started = Clock::now();
  Rng rng(20240601);
  const std::vector<Policy> policies{Policy::B0, Policy::B1, Policy::LE, Policy::MT};
  const std::size_t configs = 24;
  double worst = 0.0;
  std::size_t checked = 0;
  std::size_t failing = 0;
  for (std::size_t cfg = 0; cfg < configs; ++cfg) {
    const Policy policy = policies[cfg % policies.size()];
    const NetworkShape shape{1 + rng.below(8), 1 + rng.below(3), 1 + rng.below(3), 1 + rng.below(8)};
    const std::size_t batch = 1 + rng.below(4);
    const auto params = oracle::random_params(rng, shape);
    std::vector<EmbeddingSequence> clips;
    std::vector<NoiseSpec> noise;
    for (std::size_t j = 0; j < batch; ++j) {
      clips.push_back(oracle::random_sequence(rng, 1 + rng.below(5), shape.embed_dim));
      noise.push_back({0.25, rng.next_u64()});
    }
    const auto labels = oracle::random_labels(rng, batch, shape.num_classes, 0.4);
    LossMask mask = default_mask(labels);
    if (policy == Policy::LE) {
      for (std::size_t i = 0; i < batch; ++i) {
        for (std::size_t k = 0; k < shape.num_classes; ++k) mask.set(i, k, rng.bernoulli(0.7));
      }
    }
    Matrix teacher_probs(batch, shape.num_classes);
    for (auto& v : teacher_probs.values()) v = rng.uniform(0.05, 0.95);
    const double beta = 3.0;

    auto evaluate_loss = [&](const AttentionMILParams& p, std::vector<ForwardTrace>* traces) {
      Matrix probs(batch, shape.num_classes);
      for (std::size_t j = 0; j < batch; ++j) {
        auto tr = forward(p, clips[j], noise[j], true);
        std::copy(tr.clip_probs.begin(), tr.clip_probs.end(), probs.row(j).begin());
        if (traces != nullptr) traces->push_back(std::move(tr));
      }
      switch (policy) {
        case Policy::B0:
          return bce_full(probs, labels);
        case Policy::B1:
        case Policy::LE:
          return bce_masked(probs, labels, mask);
        case Policy::MT: {
          auto sup = bce_masked(probs, labels, mask);
          const auto cons = consistency_mse(probs, teacher_probs);
          return LossValue{combined_loss(sup.loss, cons.loss, beta), combined_gradient(sup.grad, cons.grad, beta)};
        }
      }
      return LossValue{};
    };

    std::vector<ForwardTrace> traces;
    const auto loss = evaluate_loss(params, &traces);
    auto analytic = AttentionMILParams::zeros(shape);
    for (std::size_t j = 0; j < batch; ++j) backward_accumulate(params, traces[j], loss.grad.row(j), analytic);
    const auto numeric =
        oracle::finite_difference([&](const AttentionMILParams& p) { return evaluate_loss(p, nullptr).loss; }, params);
    std::size_t n = 0;
    const double err = oracle::max_relative_error(analytic, numeric, 1e-6, &n);
    checked += n;
    worst = std::max(worst, err);
    failing += err >= 1e-4;
  }
  const double secs = seconds_since(started);
  return {failing == 0 && secs < 60.0,
          fmt::format("{} configs, {} entries checked, max rel err {:.2e}, {:.1f}s", configs, checked, worst, secs)};
}

// Masking contract --------------------------------------------------------

Verdict masking_fuzz() {
  Rng rng(77);
  const std::size_t cases = 1000;
  std::size_t violations = 0;
  std::size_t metric_cases = 0;
  for (std::size_t c = 0; c < cases; ++c) {
    const std::size_t rows = 1 + rng.below(10), cols = 1 + rng.below(5);
    const auto labels = oracle::random_labels(rng, rows, cols, rng.uniform(0.1, 0.9));
    LossMask mask = default_mask(labels);
    if (c % 2 == 1) {
      for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t k = 0; k < cols; ++k) mask.set(i, k, rng.bernoulli(0.5));
      }
    }
    Matrix probs(rows, cols);
    for (auto& v : probs.values()) v = rng.uniform();
    Matrix perturbed = probs;
    for (std::size_t i = 0; i < rows; ++i) {
      for (std::size_t k = 0; k < cols; ++k) {
        if (mask(i, k) == 0) perturbed(i, k) = rng.uniform();
      }
    }
    const auto a = bce_masked(probs, labels, mask);
    const auto b = bce_masked(perturbed, labels, mask);
    violations += !(a.loss == b.loss && a.grad == b.grad);

    // Metrics: rescore every Missing entry.
    Matrix rescored = probs;
    for (std::size_t i = 0; i < rows; ++i) {
      for (std::size_t k = 0; k < cols; ++k) {
        if (!is_observed(labels(i, k))) rescored(i, k) = rng.uniform();
      }
    }
    if (labels.observed_count() == 0) continue;
    ++metric_cases;
    const EvalTable t1{probs, labels}, t2{rescored, labels};
    violations += macro_f1(t1).macro != macro_f1(t2).macro;
    for (auto mode : {AveragingMode::Micro, AveragingMode::Macro}) {
      std::optional<double> v1, v2;
      try {
        v1 = auprc(t1, mode).value;
      } catch (const std::invalid_argument&) {
      }
      try {
        v2 = auprc(t2, mode).value;
      } catch (const std::invalid_argument&) {
      }
      violations += v1 != v2;
    }
  }
  return {violations == 0,
          fmt::format("{} cases ({} with metrics), {} violations", cases, metric_cases, violations)};
}

// Threshold and mask fidelity ---------------------------------------------

// Sorted-order statistic at 1-based rank ceil(gamma * n / 100), at least 1.
double order_statistic(std::vector<double> values, int gamma) {
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  std::size_t rank = (static_cast<std::size_t>(gamma) * n + 99) / 100;
  rank = std::max<std::size_t>(rank, 1);
  return values[rank - 1];
}

Verdict threshold_fidelity() {
  Rng rng(95);
  std::size_t tables = 0, violations = 0;
  for (int gamma : {0, 10, 50, 95, 100}) {
    for (int trial = 0; trial < 200; ++trial, ++tables) {
      const std::size_t rows = 1 + rng.below(40), cols = 1 + rng.below(5);
      const auto labels = oracle::random_labels(rng, rows, cols, rng.uniform());
      Matrix scores(rows, cols);
      for (auto& v : scores.values()) v = trial % 3 == 0 ? rng.below(6) / 5.0 : rng.uniform();
      const auto tau = class_thresholds(scores, labels, gamma);
      const auto mask = enhance_mask(labels, scores, tau);
      for (std::size_t k = 0; k < cols; ++k) {
        std::vector<double> missing;
        for (std::size_t i = 0; i < rows; ++i) {
          if (!is_observed(labels(i, k))) missing.push_back(scores(i, k));
        }
        const double expected = missing.empty() ? kNoThreshold : order_statistic(missing, gamma);
        violations += tau[k] != expected;
        for (std::size_t i = 0; i < rows; ++i) {
          const bool zero = !is_observed(labels(i, k)) && scores(i, k) >= expected;
          violations += mask(i, k) != (zero ? 0 : 1);
        }
      }
    }
  }
  return {violations == 0, fmt::format("{} tables over 5 gamma values, {} violations", tables, violations)};
}

// Mean Teacher degeneration ------------------------------------------------

Dataset synthetic_train(std::size_t clips, std::uint64_t seed, Dataset* val) {
  SyntheticSpec spec;
  spec.num_clips = clips;
  spec.test_fraction = 0.0;
  spec.seed = seed;
  auto [train, v] = split_train_val(generate_synthetic(spec).dataset, 0.15, seed);
  train.labels = drop_labels(train.labels, 0.5, seed);
  *val = std::move(v);
  return train;
}

Verdict mt_degeneration() {
  Dataset val;
  const Dataset train = synthetic_train(300, 3, &val);
  TrainConfig cfg;
  cfg.epochs = 6;
  cfg.patience = 0;
  cfg.batch_size = 32;
  cfg.layers = 2;
  cfg.hidden = 16;
  cfg.dropout_rate = 0.3;
  cfg.seed = 42;

  std::vector<AttentionMILParams> trajectory;
  cfg.method = Method::B1;
  const auto b1 = train_baseline(cfg, train, val, {[&](std::size_t, const AttentionMILParams& p, const AttentionMILParams*) {
                                   trajectory.push_back(p);
                                 }});

  cfg.method = Method::MT;
  cfg.alpha = 0.0;
  cfg.beta = 0.0;
  std::size_t step = 0, mismatches = 0;
  const auto mt = train_mean_teacher(cfg, train, val, {[&](std::size_t, const AttentionMILParams& p, const AttentionMILParams*) {
                                       if (step >= trajectory.size() || !bitwise_equal(p, trajectory[step])) ++mismatches;
                                       ++step;
                                     }});
  const bool same_length = step == trajectory.size();
  const bool final_equal = bitwise_equal(mt.student, b1.params);
  return {mismatches == 0 && same_length && final_equal && mt.report.epochs.size() >= 5,
          fmt::format("{} epochs, {} steps compared, {} mismatches", mt.report.epochs.size(), step, mismatches)};
}

// EMA algebra -------------------------------------------------------------

Verdict ema_algebra() {
  Rng rng(999);
  const NetworkShape shape{8, 3, 2, 8};
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const auto student = oracle::random_params(rng, shape, 2.0);
    auto teacher = oracle::random_params(rng, shape, 2.0);
    const auto old = teacher;
    const double alpha = trial == 0 ? 0.0 : trial == 1 ? 1.0 : rng.uniform();
    ema_update(teacher, student, alpha);
    const auto s = student.tensors();
    const auto o = old.tensors();
    const auto n = teacher.tensors();
    for (std::size_t i = 0; i < s.size(); ++i) {
      for (std::size_t k = 0; k < s[i].size(); ++k) {
        worst = std::max(worst, std::abs(std::abs(n[i][k] - s[i][k]) - alpha * std::abs(o[i][k] - s[i][k])));
      }
    }
  }

  // Frozen student: the gap shrinks by alpha per step and halves every ln2/(1-alpha) steps.
  bool geometric = true;
  double half_life_error = 0.0;
  for (double alpha : {0.9, 0.99, 0.999}) {
    const auto student = oracle::random_params(rng, shape);
    auto teacher = oracle::random_params(rng, shape);
    const auto start = teacher;
    const std::size_t steps = static_cast<std::size_t>(std::llround(std::log(2.0) / (1.0 - alpha)));
    for (std::size_t t = 0; t < steps; ++t) ema_update(teacher, student, alpha);
    const auto s = student.tensors();
    const auto t0 = start.tensors();
    const auto t1 = teacher.tensors();
    const double expected_ratio = std::pow(alpha, static_cast<double>(steps));
    for (std::size_t i = 0; i < s.size(); ++i) {
      for (std::size_t k = 0; k < s[i].size(); ++k) {
        const double gap0 = t0[i][k] - s[i][k];
        if (std::abs(gap0) < 1e-3) continue;
        const double ratio = (t1[i][k] - s[i][k]) / gap0;
        geometric = geometric && std::abs(ratio - expected_ratio) < 1e-9;
        half_life_error = std::max(half_life_error, std::abs(ratio - 0.5));
      }
    }
  }
  geometric = geometric && half_life_error < 0.04;
  return {worst <= 1e-12 && geometric,
          fmt::format("max contraction error {:.1e}; half-life ratio within {:.3f} of 0.5", worst, half_life_error)};
}

// AUPRC oracle ------------------------------------------------------------

Verdict auprc_oracle() {
  Rng rng(12);
  std::size_t tables = 0, compared = 0, mismatches = 0;
  while (tables < 600) {
    const std::size_t entries = 1 + rng.below(12);
    const std::size_t cols = 1 + rng.below(std::min<std::size_t>(entries, 3));
    const std::size_t rows = entries / cols;
    const auto labels = oracle::random_labels(rng, rows, cols, tables % 4 == 0 ? 0.3 : 0.0);
    Matrix scores(rows, cols);
    const int levels = tables % 3 == 0 ? 3 : 0;
    for (auto& v : scores.values()) v = levels > 0 ? static_cast<double>(rng.below(levels)) / levels : rng.uniform();
    ++tables;
    const EvalTable table{scores, labels};

    // Micro: pool every observed entry.
    std::vector<double> s;
    std::vector<std::uint8_t> y;
    for (std::size_t i = 0; i < rows; ++i) {
      for (std::size_t k = 0; k < cols; ++k) {
        if (!is_observed(labels(i, k))) continue;
        s.push_back(scores(i, k));
        y.push_back(labels(i, k) == LabelState::Positive);
      }
    }
    if (std::count(y.begin(), y.end(), 1) > 0) {
      ++compared;
      mismatches += auprc(table, AveragingMode::Micro).value != oracle::brute_force_ap(s, y);
    }

    // Macro: mean of per-class oracle values over scoreable classes.
    double sum = 0.0;
    std::size_t counted = 0;
    for (std::size_t k = 0; k < cols; ++k) {
      std::vector<double> cs;
      std::vector<std::uint8_t> cy;
      for (std::size_t i = 0; i < rows; ++i) {
        if (!is_observed(labels(i, k))) continue;
        cs.push_back(scores(i, k));
        cy.push_back(labels(i, k) == LabelState::Positive);
      }
      const auto pos = std::count(cy.begin(), cy.end(), 1);
      if (pos == 0 || pos == static_cast<long>(cy.size())) continue;
      sum += oracle::brute_force_ap(cs, cy);
      ++counted;
    }
    if (counted > 0) {
      ++compared;
      mismatches += auprc(table, AveragingMode::Macro).value != sum / static_cast<double>(counted);
    }
  }
  return {mismatches == 0 && compared >= 500,
          fmt::format("{} tables, {} comparisons, {} mismatches", tables, compared, mismatches)};
}

// Ordering reproduction ---------------------------------------------------

ExperimentSpec ordering_spec(const fs::path& data_dir, const fs::path& out_dir) {
  ExperimentSpec spec;
  spec.data_dir = data_dir;
  spec.output_dir = out_dir;
  spec.replicates = 5;
  spec.seed_base = 0;
  spec.drop_fractions = {0.0, 0.8};
  spec.save_runs = false;
  spec.train.epochs = 40;
  spec.train.patience = 10;
  spec.train.batch_size = 32;
  spec.train.lr = 3e-3;
  spec.train.layers = 1;
  spec.train.hidden = 32;
  spec.train.dropout_rate = 0.2;
  spec.train.alpha = 0.99;
  spec.train.beta = 3.0;
  spec.train.gamma = 10.0;
  return spec;
}

Verdict ordering(const fs::path& work) {
  const auto started = Clock::now();
  SyntheticSpec data;
  data.num_clips = 1000;
  data.num_classes = 5;
  data.frames_per_clip = 5;
  data.embed_dim = 16;
  data.class_prior = {0.3};
  data.noise_std = 1.0;
  data.prototype_scale = 1.5;
  data.seed = 2024;
  const auto data_dir = work / "ordering_data";
  fs::create_directories(data_dir);
  write_dataset(generate_synthetic(data).dataset, DatasetPaths::in_directory(data_dir));

  const auto outcome = run_experiment(ordering_spec(data_dir, work / "ordering_results"));
  std::map<std::pair<Method, double>, std::vector<double>> f1;
  for (const auto& r : outcome.rows) {
    if (r.metric == "macro_f1" && r.status == "ok") f1[{r.method, r.drop_fraction}].push_back(r.value);
  }
  auto mean = [&](Method m, double d) {
    const auto& v = f1[{m, d}];
    return v.size() == 5 ? std::accumulate(v.begin(), v.end(), 0.0) / 5.0 : std::nan("");
  };
  const double b0_full = mean(Method::B0, 0.0), b0_drop = mean(Method::B0, 0.8);
  bool pass = outcome.failed_runs == 0;
  std::string detail;
  for (auto m : {Method::B0, Method::B1, Method::LE, Method::MT}) {
    const double full = mean(m, 0.0), drop = mean(m, 0.8);
    detail += fmt::format("{} {:.3f}->{:.3f}; ", to_string(m), full, drop);
    if (m == Method::B0) continue;
    pass = pass && drop > b0_drop && (b0_full - b0_drop) > (full - drop);
  }
  const double secs = seconds_since(started);
  pass = pass && secs < 900.0;
  return {pass, detail + fmt::format("{:.0f}s", secs)};
}

// End-to-end determinism --------------------------------------------------

Verdict determinism(const fs::path& work) {
  SyntheticSpec data;
  data.num_clips = 200;
  data.seed = 8;
  const auto data_dir = work / "determinism_data";
  fs::create_directories(data_dir);
  write_dataset(generate_synthetic(data).dataset, DatasetPaths::in_directory(data_dir));

  ExperimentSpec spec;
  spec.data_dir = data_dir;
  spec.output_dir = work / "determinism_results";
  spec.replicates = 2;
  spec.drop_fractions = {0.0, 0.5};
  spec.train.epochs = 3;
  spec.train.layers = 1;
  spec.train.hidden = 16;
  spec.train.batch_size = 32;

  auto read = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  run_experiment(spec);
  const auto first = read(spec.output_dir / "results.csv");
  fs::remove_all(spec.output_dir);
  run_experiment(spec);
  const auto second = read(spec.output_dir / "results.csv");
  const auto lines = std::count(first.begin(), first.end(), '\n');
  return {!first.empty() && first == second, fmt::format("{} lines, byte-identical: {}", lines, first == second)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::string work_dir = "acceptance_work";
  std::vector<std::string> only;
  app.add_option("--work-dir", work_dir, "Scratch directory")->capture_default_str();
  app.add_option("--only", only, "Run only the named criteria");
  CLI11_PARSE(app, argc, argv);

  const fs::path work(work_dir);
  fs::create_directories(work);

  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
      {"gradient_fd", gradient_check},
      {"masking_contract", masking_fuzz},
      {"threshold_mask_fidelity", threshold_fidelity},
      {"mt_degeneration", mt_degeneration},
      {"ema_algebra", ema_algebra},
      {"auprc_oracle", auprc_oracle},
      {"ordering_reproduction", [&] { return ordering(work); }},
      {"end_to_end_determinism", [&] { return determinism(work); }},
  };

  int failed = 0;
  for (const auto& [name, check] : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), name) == only.end()) continue;
    Verdict v;
    try {
      v = check();
    } catch (const std::exception& e) {
      v = {false, fmt::format("exception: {}", e.what())};
    }
    failed += !v.pass;
    std::cout << fmt::format("{} {}: {}", v.pass ? "PASS" : "FAIL", name, v.detail) << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
