#include "pll/label_enhance.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <fmt/format.h>

#include "pll/random.hpp"

namespace pll {

LEConfig LEConfig::from_train_config(const TrainConfig& config) {
  LEConfig le;
  le.gamma = config.gamma;
  le.teacher = config;
  le.teacher.method = Method::B0;
  le.teacher.seed = derive_seed(config.seed, {stream::kTeacherInit});
  le.student = config;
  le.student.method = Method::LE;
  return le;
}

std::vector<double> class_thresholds(const Matrix& teacher_scores, const PartialLabelMatrix& labels,
                                     double gamma) {
  if (teacher_scores.rows() != labels.num_clips() || teacher_scores.cols() != labels.num_classes()) {
    throw std::invalid_argument("class_thresholds: scores and labels differ in shape");
  }
  if (!(gamma >= 0.0 && gamma <= 100.0)) throw std::invalid_argument("class_thresholds: gamma must be in [0, 100]");

  std::vector<double> tau(labels.num_classes(), kNoThreshold);
  std::vector<double> missing;
  for (std::size_t k = 0; k < labels.num_classes(); ++k) {
    missing.clear();
    for (std::size_t i = 0; i < labels.num_clips(); ++i) {
      if (labels(i, k) == LabelState::Missing) missing.push_back(teacher_scores(i, k));
    }
    if (missing.empty()) continue;
    std::sort(missing.begin(), missing.end());
    const double n = static_cast<double>(missing.size());
    const auto rank = static_cast<std::size_t>(std::ceil(gamma * n / 100.0));
    tau[k] = missing[std::clamp<std::size_t>(rank, 1, missing.size()) - 1];
  }
  return tau;
}

LossMask enhance_mask(const PartialLabelMatrix& labels, const Matrix& teacher_scores,
                      const std::vector<double>& tau) {
  if (teacher_scores.rows() != labels.num_clips() || teacher_scores.cols() != labels.num_classes() ||
      tau.size() != labels.num_classes()) {
    throw std::invalid_argument("enhance_mask: shape mismatch");
  }
  LossMask mask(labels.num_clips(), labels.num_classes(), 1);
  for (std::size_t i = 0; i < labels.num_clips(); ++i) {
    for (std::size_t k = 0; k < labels.num_classes(); ++k) {
      if (labels(i, k) == LabelState::Missing && teacher_scores(i, k) >= tau[k]) mask.set(i, k, false);
    }
  }
  return mask;
}

LEResult run_label_enhancing(const LEConfig& config, const Dataset& train, const Dataset& val) {
  LEResult out;
  TrainConfig teacher_cfg = config.teacher;
  teacher_cfg.method = Method::B0;
  auto teacher = train_baseline(teacher_cfg, train, val);
  out.teacher = std::move(teacher.params);
  out.teacher_report = std::move(teacher.report);

  out.teacher_scores = predict_all(out.teacher, train);
  out.tau = class_thresholds(out.teacher_scores, train.labels, config.gamma);
  out.mask = enhance_mask(train.labels, out.teacher_scores, out.tau);

  auto student = train_with_mask(config.student, train, out.mask, val);
  out.student = std::move(student.params);
  out.student_report = std::move(student.report);
  return out;
}

void write_le_artifacts(const std::filesystem::path& dir, const LEResult& result, const Dataset& train) {
  std::filesystem::create_directories(dir);
  save_params(dir / "teacher.pllnet", result.teacher);
  {
    std::ofstream out(dir / "tau.csv");
    if (!out) throw DataError(DataErrorKind::Io, fmt::format("cannot write '{}'", (dir / "tau.csv").string()));
    out << "class_index,tau\n";
    for (std::size_t k = 0; k < result.tau.size(); ++k) out << fmt::format("{},{}\n", k, result.tau[k]);
  }
  {
    std::ofstream out(dir / "mask.csv");
    if (!out) throw DataError(DataErrorKind::Io, fmt::format("cannot write '{}'", (dir / "mask.csv").string()));
    out << "clip_id,class_index,mask\n";
    for (std::size_t i = 0; i < result.mask.rows(); ++i) {
      for (std::size_t k = 0; k < result.mask.cols(); ++k) {
        out << train.embeddings[i].clip_id << ',' << k << ',' << int{result.mask(i, k)} << '\n';
      }
    }
  }
}

}  // namespace pll
