#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "pll/data_model.hpp"
#include "pll/losses.hpp"
#include "pll/network.hpp"

namespace pll {

enum class Method { B0, B1, LE, MT };
enum class EvalModel { Student, Teacher };

std::string_view to_string(Method m);
Method parse_method(std::string_view text);
std::string_view to_string(EvalModel m);
EvalModel parse_eval_model(std::string_view text);

struct TrainConfig {
  Method method = Method::B1;
  std::size_t epochs = 100;
  std::size_t batch_size = 64;
  /// Stop after this many epochs without a new best validation loss; 0 disables.
  std::size_t patience = 20;
  double lr = 1e-3;
  double weight_decay = 1e-5;
  double dropout_rate = 0.6;
  std::size_t layers = 3;
  std::size_t hidden = 128;
  std::uint64_t seed = 0;
  // Mean Teacher
  double alpha = 0.999;
  double beta = 3.0;
  /// Sigmoid-shaped ramp of beta over this many epochs; 0 keeps beta constant.
  std::size_t beta_rampup_epochs = 0;
  EvalModel eval_model = EvalModel::Teacher;
  // Label Enhancing
  double gamma = 10.0;

  void validate() const;
  /// Consistency weight used during the given (0-based) epoch.
  double beta_at(std::size_t epoch) const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
/// Reads known keys over the defaults already in c; unknown keys are rejected.
void update_from_json(TrainConfig& c, const nlohmann::json& j);

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  /// Validation loss of the model used for selection.
  double val_loss = 0.0;
  // Mean Teacher logs both models.
  std::optional<double> student_val_loss;
  std::optional<double> teacher_val_loss;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  std::size_t selected = 0;
  double wall_ms = 0.0;
  std::map<std::string, double> final_metrics;

  double selected_val_loss() const { return epochs.at(selected).val_loss; }
  nlohmann::json to_json() const;
};

/// Raised when the training loss becomes non-finite.
class TrainingError : public std::runtime_error {
 public:
  TrainingError(std::size_t epoch, std::size_t batch, const std::string& what)
      : std::runtime_error(what), epoch_(epoch), batch_(batch) {}
  std::size_t epoch() const { return epoch_; }
  std::size_t batch() const { return batch_; }

 private:
  std::size_t epoch_;
  std::size_t batch_;
};

/// Called after every optimizer step (and EMA update, for Mean Teacher).
struct TrainHooks {
  std::function<void(std::size_t step, const AttentionMILParams& student,
                     const AttentionMILParams* teacher)>
      on_step;
};

struct TrainedModel {
  AttentionMILParams params;
  TrainReport report;
};

struct MeanTeacherModel {
  AttentionMILParams student;
  AttentionMILParams teacher;
  TrainReport report;

  const AttentionMILParams& eval_params(EvalModel m) const {
    return m == EvalModel::Teacher ? teacher : student;
  }
};

/// B0 (bce_full) or B1 (bce_masked with default_mask). Returns the parameters
/// of the best-validation epoch.
TrainedModel train_baseline(const TrainConfig& config, const Dataset& train, const Dataset& val,
                            const TrainHooks& hooks = {});

/// Masked training with an explicit per-clip mask over the train set (LE stage 2).
/// Validation uses masked BCE with the default mask.
TrainedModel train_with_mask(const TrainConfig& config, const Dataset& train, const LossMask& mask,
                             const Dataset& val, const TrainHooks& hooks = {});

MeanTeacherModel train_mean_teacher(const TrainConfig& config, const Dataset& train,
                                    const Dataset& val, const TrainHooks& hooks = {});

/// Inference-mode clip probabilities for every clip (N x C).
Matrix predict_all(const AttentionMILParams& params, const Dataset& dataset);

struct MetricsSpec {
  double f1_threshold = 0.5;
};

struct EvalResult {
  double macro_f1 = 0.0;
  std::vector<std::optional<double>> per_class_f1;
  /// Absent when no class is scoreable.
  std::optional<double> micro_auprc;
  std::optional<double> macro_auprc;
};

/// Scores only the observed label entries of the dataset.
EvalResult evaluate(const AttentionMILParams& params, const Dataset& dataset,
                    const MetricsSpec& spec = {});

}  // namespace pll
