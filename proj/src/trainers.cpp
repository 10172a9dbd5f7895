#include "pll/trainers.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

#include <fmt/format.h>

#include "pll/metrics.hpp"
#include "pll/optimizer.hpp"
#include "pll/random.hpp"

namespace pll {

std::string_view to_string(Method m) {
  switch (m) {
    case Method::B0: return "B0";
    case Method::B1: return "B1";
    case Method::LE: return "LE";
    case Method::MT: return "MT";
  }
  return "?";
}

Method parse_method(std::string_view text) {
  if (text == "B0") return Method::B0;
  if (text == "B1") return Method::B1;
  if (text == "LE") return Method::LE;
  if (text == "MT") return Method::MT;
  throw std::invalid_argument(fmt::format("unknown method '{}' (expected B0, B1, LE or MT)", text));
}

std::string_view to_string(EvalModel m) { return m == EvalModel::Teacher ? "teacher" : "student"; }

EvalModel parse_eval_model(std::string_view text) {
  if (text == "teacher") return EvalModel::Teacher;
  if (text == "student") return EvalModel::Student;
  throw std::invalid_argument(fmt::format("unknown eval_model '{}'", text));
}

void TrainConfig::validate() const {
  if (epochs < 1 || batch_size < 1 || layers < 1 || hidden < 1) {
    throw std::invalid_argument("train config: epochs, batch_size, layers and hidden must be >= 1");
  }
  if (!(lr > 0.0)) throw std::invalid_argument("train config: lr must be > 0");
  if (!(weight_decay >= 0.0)) throw std::invalid_argument("train config: weight_decay must be >= 0");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
    throw std::invalid_argument("train config: dropout_rate must be in [0, 1)");
  }
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("train config: alpha must be in [0, 1]");
  if (!(beta >= 0.0)) throw std::invalid_argument("train config: beta must be >= 0");
  if (!(gamma >= 0.0 && gamma <= 100.0)) throw std::invalid_argument("train config: gamma must be in [0, 100]");
}

double TrainConfig::beta_at(std::size_t epoch) const {
  if (beta_rampup_epochs == 0 || epoch >= beta_rampup_epochs) return beta;
  const double x = 1.0 - static_cast<double>(epoch) / static_cast<double>(beta_rampup_epochs);
  return beta * std::exp(-5.0 * x * x);
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{
      {"method", to_string(c.method)},
      {"epochs", c.epochs},
      {"batch_size", c.batch_size},
      {"patience", c.patience},
      {"lr", c.lr},
      {"weight_decay", c.weight_decay},
      {"dropout_rate", c.dropout_rate},
      {"layers", c.layers},
      {"hidden", c.hidden},
      {"seed", c.seed},
      {"alpha", c.alpha},
      {"beta", c.beta},
      {"beta_rampup_epochs", c.beta_rampup_epochs},
      {"eval_model", to_string(c.eval_model)},
      {"gamma", c.gamma},
  };
}

void update_from_json(TrainConfig& c, const nlohmann::json& j) {
  if (!j.is_object()) throw std::invalid_argument("train config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (key == "method") c.method = parse_method(value.get<std::string>());
    else if (key == "epochs") c.epochs = value.get<std::size_t>();
    else if (key == "batch_size") c.batch_size = value.get<std::size_t>();
    else if (key == "patience") c.patience = value.get<std::size_t>();
    else if (key == "lr") c.lr = value.get<double>();
    else if (key == "weight_decay") c.weight_decay = value.get<double>();
    else if (key == "dropout_rate") c.dropout_rate = value.get<double>();
    else if (key == "layers") c.layers = value.get<std::size_t>();
    else if (key == "hidden") c.hidden = value.get<std::size_t>();
    else if (key == "seed") c.seed = value.get<std::uint64_t>();
    else if (key == "alpha") c.alpha = value.get<double>();
    else if (key == "beta") c.beta = value.get<double>();
    else if (key == "beta_rampup_epochs") c.beta_rampup_epochs = value.get<std::size_t>();
    else if (key == "eval_model") c.eval_model = parse_eval_model(value.get<std::string>());
    else if (key == "gamma") c.gamma = value.get<double>();
    else throw std::invalid_argument(fmt::format("unknown train config key '{}'", key));
  }
}

nlohmann::json TrainReport::to_json() const {
  nlohmann::json epochs_json = nlohmann::json::array();
  for (const auto& e : epochs) {
    nlohmann::json row{{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_loss", e.val_loss}};
    if (e.student_val_loss) row["student_val_loss"] = *e.student_val_loss;
    if (e.teacher_val_loss) row["teacher_val_loss"] = *e.teacher_val_loss;
    epochs_json.push_back(std::move(row));
  }
  return nlohmann::json{{"epochs", std::move(epochs_json)},
                        {"selected", selected},
                        {"wall_ms", wall_ms},
                        {"final_metrics", final_metrics}};
}

Matrix predict_all(const AttentionMILParams& params, const Dataset& dataset) {
  Matrix out(dataset.num_clips(), params.shape().num_classes);
  for (std::size_t i = 0; i < dataset.num_clips(); ++i) {
    const auto p = predict(params, dataset.embeddings[i]);
    std::copy(p.begin(), p.end(), out.row(i).begin());
  }
  return out;
}

namespace {

enum class SupervisedLoss { Full, Masked };

struct LoopSetup {
  SupervisedLoss train_loss = SupervisedLoss::Masked;
  SupervisedLoss val_loss = SupervisedLoss::Masked;
  /// Train-set mask for masked training; default_mask of the batch when null.
  const LossMask* train_mask = nullptr;
  bool mean_teacher = false;
};

struct LoopResult {
  AttentionMILParams student;
  AttentionMILParams teacher;
  TrainReport report;
};

double validation_loss(const AttentionMILParams& params, const Dataset& val, SupervisedLoss kind) {
  const Matrix probs = predict_all(params, val);
  if (kind == SupervisedLoss::Full) return bce_full(probs, val.labels).loss;
  return bce_masked(probs, val.labels, default_mask(val.labels)).loss;
}

void check_inputs(const TrainConfig& config, const Dataset& train, const Dataset& val) {
  config.validate();
  if (train.num_clips() == 0) throw std::invalid_argument("training set is empty");
  if (val.num_clips() == 0) throw std::invalid_argument("validation set is empty");
  if (train.num_classes() != val.num_classes() || train.embed_dim() != val.embed_dim()) {
    throw std::invalid_argument("train and validation sets differ in classes or embedding dim");
  }
}

LoopResult training_loop(const TrainConfig& config, const Dataset& train, const Dataset& val,
                         const LoopSetup& setup, const TrainHooks& hooks) {
  check_inputs(config, train, val);
  const auto started = std::chrono::steady_clock::now();
  const std::size_t n = train.num_clips();
  const std::size_t c = train.num_classes();

  LoopResult out;
  auto& student = out.student;
  auto& teacher = out.teacher;
  student = init_params(train.embed_dim(), c, config.layers, config.hidden, config.seed);
  if (setup.mean_teacher) teacher = student;
  AdamState adam = AdamState::for_params(student, config.lr, config.weight_decay);

  AttentionMILParams best_student = student;
  AttentionMILParams best_teacher = teacher;
  double best_val = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;

  Rng shuffle_rng(derive_seed(config.seed, {stream::kShuffle}));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});

  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    shuffle_rng.shuffle(std::span(order));
    const double beta = config.beta_at(epoch);
    double loss_sum = 0.0;
    std::size_t batches = 0;

    for (std::size_t start = 0; start < n; start += config.batch_size, ++step, ++batches) {
      const std::size_t stop = std::min(n, start + config.batch_size);
      const std::span<const std::size_t> idx(order.data() + start, stop - start);
      const PartialLabelMatrix labels = train.labels.select_rows(idx);

      std::vector<ForwardTrace> traces;
      traces.reserve(idx.size());
      Matrix student_probs(idx.size(), c);
      for (std::size_t j = 0; j < idx.size(); ++j) {
        const NoiseSpec noise{config.dropout_rate, derive_seed(config.seed, {stream::kStudentNoise, step, j})};
        traces.push_back(forward(student, train.embeddings[idx[j]], noise, true));
        std::copy(traces.back().clip_probs.begin(), traces.back().clip_probs.end(),
                  student_probs.row(j).begin());
      }

      LossValue sup;
      if (setup.train_loss == SupervisedLoss::Full) {
        sup = bce_full(student_probs, labels);
      } else {
        const LossMask mask =
            setup.train_mask != nullptr ? setup.train_mask->select_rows(idx) : default_mask(labels);
        sup = bce_masked(student_probs, labels, mask);
      }

      double loss = sup.loss;
      Matrix grad = std::move(sup.grad);
      if (setup.mean_teacher) {
        Matrix teacher_probs(idx.size(), c);
        for (std::size_t j = 0; j < idx.size(); ++j) {
          const NoiseSpec noise{config.dropout_rate,
                                derive_seed(config.seed, {stream::kTeacherNoise, step, j})};
          const auto p = forward(teacher, train.embeddings[idx[j]], noise, true).clip_probs;
          std::copy(p.begin(), p.end(), teacher_probs.row(j).begin());
        }
        const LossValue cons = consistency_mse(student_probs, teacher_probs);
        loss = combined_loss(loss, cons.loss, beta);
        grad = combined_gradient(grad, cons.grad, beta);
      }
      if (!std::isfinite(loss)) {
        throw TrainingError(epoch, batches,
                            fmt::format("non-finite training loss at epoch {}, batch {}", epoch, batches));
      }

      auto param_grad = AttentionMILParams::zeros(student.shape());
      for (std::size_t j = 0; j < idx.size(); ++j) {
        backward_accumulate(student, traces[j], grad.row(j), param_grad);
      }
      adam_step(student, param_grad, adam);
      if (setup.mean_teacher) ema_update(teacher, student, config.alpha);
      if (hooks.on_step) hooks.on_step(step, student, setup.mean_teacher ? &teacher : nullptr);
      loss_sum += loss;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(batches);
    if (setup.mean_teacher) {
      rec.student_val_loss = validation_loss(student, val, setup.val_loss);
      rec.teacher_val_loss = validation_loss(teacher, val, setup.val_loss);
      rec.val_loss = config.eval_model == EvalModel::Teacher ? *rec.teacher_val_loss : *rec.student_val_loss;
    } else {
      rec.val_loss = validation_loss(student, val, setup.val_loss);
    }
    out.report.epochs.push_back(rec);

    if (rec.val_loss < best_val) {
      best_val = rec.val_loss;
      out.report.selected = epoch;
      best_student = student;
      if (setup.mean_teacher) best_teacher = teacher;
      since_best = 0;
    } else if (++since_best >= config.patience && config.patience > 0) {
      break;
    }
  }

  student = std::move(best_student);
  teacher = std::move(best_teacher);
  out.report.wall_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
  return out;
}

}  // namespace

TrainedModel train_baseline(const TrainConfig& config, const Dataset& train, const Dataset& val,
                            const TrainHooks& hooks) {
  if (config.method != Method::B0 && config.method != Method::B1) {
    throw std::invalid_argument("train_baseline: method must be B0 or B1");
  }
  LoopSetup setup;
  setup.train_loss = setup.val_loss = config.method == Method::B0 ? SupervisedLoss::Full : SupervisedLoss::Masked;
  auto r = training_loop(config, train, val, setup, hooks);
  return {std::move(r.student), std::move(r.report)};
}

TrainedModel train_with_mask(const TrainConfig& config, const Dataset& train, const LossMask& mask,
                             const Dataset& val, const TrainHooks& hooks) {
  if (mask.rows() != train.num_clips() || mask.cols() != train.num_classes()) {
    throw std::invalid_argument("train_with_mask: mask shape differs from training labels");
  }
  LoopSetup setup;
  setup.train_mask = &mask;
  auto r = training_loop(config, train, val, setup, hooks);
  return {std::move(r.student), std::move(r.report)};
}

MeanTeacherModel train_mean_teacher(const TrainConfig& config, const Dataset& train,
                                    const Dataset& val, const TrainHooks& hooks) {
  if (config.method != Method::MT) throw std::invalid_argument("train_mean_teacher: method must be MT");
  LoopSetup setup;
  setup.mean_teacher = true;
  auto r = training_loop(config, train, val, setup, hooks);
  return {std::move(r.student), std::move(r.teacher), std::move(r.report)};
}

EvalResult evaluate(const AttentionMILParams& params, const Dataset& dataset, const MetricsSpec& spec) {
  if (dataset.labels.observed_count() == 0) {
    throw std::invalid_argument("evaluate: dataset has no observed labels");
  }
  const EvalTable table{predict_all(params, dataset), dataset.labels};
  EvalResult out;
  const auto f1 = macro_f1(table, spec.f1_threshold);
  out.macro_f1 = f1.macro;
  out.per_class_f1 = f1.per_class;
  try {
    out.micro_auprc = auprc(table, AveragingMode::Micro).value;
  } catch (const std::invalid_argument&) {
  }
  try {
    out.macro_auprc = auprc(table, AveragingMode::Macro).value;
  } catch (const std::invalid_argument&) {
  }
  return out;
}

}  // namespace pll
