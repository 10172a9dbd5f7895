#include "pll/data_model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

#include <fmt/format.h>

#include "pll/random.hpp"

namespace pll {

std::string_view to_string(LabelState s) {
  switch (s) {
    case LabelState::Negative: return "negative";
    case LabelState::Positive: return "positive";
    case LabelState::Missing: return "missing";
  }
  return "?";
}

LabelState parse_label_state(std::string_view text) {
  if (text == "0" || text == "negative") return LabelState::Negative;
  if (text == "1" || text == "positive") return LabelState::Positive;
  if (text == "2" || text == "missing") return LabelState::Missing;
  throw std::invalid_argument(fmt::format("invalid label state '{}'", text));
}

std::string_view to_string(SplitTag t) {
  switch (t) {
    case SplitTag::Train: return "train";
    case SplitTag::Validation: return "validation";
    case SplitTag::Test: return "test";
  }
  return "?";
}

SplitTag parse_split_tag(std::string_view text) {
  if (text == "train") return SplitTag::Train;
  if (text == "validation") return SplitTag::Validation;
  if (text == "test") return SplitTag::Test;
  throw std::invalid_argument(fmt::format("invalid split tag '{}'", text));
}

PartialLabelMatrix::PartialLabelMatrix(std::size_t num_clips, std::size_t num_classes,
                                       LabelState fill, bool allow_unlabeled_rows)
    : num_clips_(num_clips),
      num_classes_(num_classes),
      entries_(num_clips * num_classes, fill),
      allow_unlabeled_rows_(allow_unlabeled_rows) {}

PartialLabelMatrix::PartialLabelMatrix(std::size_t num_clips, std::size_t num_classes,
                                       std::vector<LabelState> entries, bool allow_unlabeled_rows)
    : num_clips_(num_clips),
      num_classes_(num_classes),
      entries_(std::move(entries)),
      allow_unlabeled_rows_(allow_unlabeled_rows) {
  if (entries_.size() != num_clips_ * num_classes_) {
    throw std::invalid_argument(fmt::format("label entries: expected {}x{}={} values, got {}",
                                            num_clips_, num_classes_, num_clips_ * num_classes_,
                                            entries_.size()));
  }
  validate();
}

std::size_t PartialLabelMatrix::observed_count() const {
  return static_cast<std::size_t>(std::count_if(entries_.begin(), entries_.end(), is_observed));
}

void PartialLabelMatrix::validate() const {
  if (allow_unlabeled_rows_) return;
  for (std::size_t i = 0; i < num_clips_; ++i) {
    const auto r = row(i);
    if (std::none_of(r.begin(), r.end(), is_observed)) {
      throw std::invalid_argument(fmt::format("clip row {} has no observed label", i));
    }
  }
}

PartialLabelMatrix PartialLabelMatrix::select_rows(std::span<const std::size_t> rows) const {
  PartialLabelMatrix out(rows.size(), num_classes_, LabelState::Missing, allow_unlabeled_rows_);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto src = row(rows[i]);
    std::copy(src.begin(), src.end(), out.entries_.begin() + i * num_classes_);
  }
  return out;
}

std::vector<std::size_t> Dataset::indices_with(SplitTag tag) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < split_tags.size(); ++i) {
    if (split_tags[i] == tag) out.push_back(i);
  }
  return out;
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out;
  out.class_names = class_names;
  out.labels = labels.select_rows(indices);
  out.embeddings.reserve(indices.size());
  out.split_tags.reserve(indices.size());
  for (auto i : indices) {
    out.embeddings.push_back(embeddings[i]);
    out.split_tags.push_back(split_tags[i]);
  }
  return out;
}

Dataset Dataset::with_tag(SplitTag tag) const {
  const auto idx = indices_with(tag);
  return subset(idx);
}

void Dataset::validate() const {
  if (labels.num_clips() != embeddings.size()) {
    throw DataError(DataErrorKind::DimensionMismatch,
                    fmt::format("label rows ({}) != number of clips ({})", labels.num_clips(),
                                embeddings.size()));
  }
  if (labels.num_classes() != class_names.size()) {
    throw DataError(DataErrorKind::DimensionMismatch,
                    fmt::format("label columns ({}) != number of classes ({})",
                                labels.num_classes(), class_names.size()));
  }
  if (split_tags.size() != embeddings.size()) {
    throw DataError(DataErrorKind::DimensionMismatch, "split tag count != number of clips");
  }
  std::unordered_set<std::string_view> seen;
  const std::size_t dim = embed_dim();
  for (const auto& e : embeddings) {
    if (!seen.insert(e.clip_id).second) {
      throw DataError(DataErrorKind::DuplicateClipId, fmt::format("duplicate clip id '{}'", e.clip_id));
    }
    if (e.num_frames == 0 || e.dim != dim || e.frames.size() != e.num_frames * e.dim) {
      throw DataError(DataErrorKind::DimensionMismatch,
                      fmt::format("clip '{}' has shape {}x{}, dataset dim {}", e.clip_id,
                                  e.num_frames, e.dim, dim));
    }
    if (!std::all_of(e.frames.begin(), e.frames.end(), [](float v) { return std::isfinite(v); })) {
      throw DataError(DataErrorKind::NonFinite, fmt::format("clip '{}' has non-finite values", e.clip_id));
    }
  }
  try {
    labels.validate();
  } catch (const std::invalid_argument& e) {
    throw DataError(DataErrorKind::Invariant, e.what());
  }
}

double label_coverage(const PartialLabelMatrix& labels) {
  if (labels.size() == 0) throw std::invalid_argument("label_coverage: empty label matrix");
  return static_cast<double>(labels.observed_count()) / static_cast<double>(labels.size());
}

std::size_t rounded_count(double fraction, std::size_t count) {
  return static_cast<std::size_t>(std::round(fraction * static_cast<double>(count)));
}

std::pair<Dataset, Dataset> split_train_val(const Dataset& dataset, double val_fraction,
                                            std::uint64_t seed) {
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) {
    throw std::invalid_argument(fmt::format("val_fraction {} outside (0, 1)", val_fraction));
  }
  auto pool = dataset.indices_with(SplitTag::Train);
  if (pool.size() < 2) throw std::invalid_argument("split_train_val: need at least 2 train clips");

  const std::size_t n_val = std::clamp<std::size_t>(rounded_count(val_fraction, pool.size()), 1,
                                                    pool.size() - 1);
  std::vector<std::size_t> order(pool.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, {stream::kSplit}));
  rng.shuffle(std::span(order));

  std::vector<bool> is_val(pool.size(), false);
  for (std::size_t k = 0; k < n_val; ++k) is_val[order[k]] = true;

  std::vector<std::size_t> train_idx, val_idx;
  for (std::size_t k = 0; k < pool.size(); ++k) (is_val[k] ? val_idx : train_idx).push_back(pool[k]);

  Dataset train = dataset.subset(train_idx);
  Dataset val = dataset.subset(val_idx);
  std::fill(val.split_tags.begin(), val.split_tags.end(), SplitTag::Validation);
  return {std::move(train), std::move(val)};
}

std::pair<Dataset, Dataset> split_fixed_validation(const Dataset& dataset,
                                                   std::span<const std::string> validation_ids) {
  std::unordered_set<std::string_view> wanted(validation_ids.begin(), validation_ids.end());
  std::vector<std::size_t> train_idx, val_idx;
  for (auto i : dataset.indices_with(SplitTag::Train)) {
    const bool v = wanted.erase(dataset.embeddings[i].clip_id) > 0;
    (v ? val_idx : train_idx).push_back(i);
  }
  if (!wanted.empty()) {
    throw DataError(DataErrorKind::UnknownClipId,
                    fmt::format("unknown clip id '{}' in validation list", *wanted.begin()));
  }
  if (train_idx.empty() || val_idx.empty()) {
    throw std::invalid_argument("split_fixed_validation: empty train or validation part");
  }
  Dataset train = dataset.subset(train_idx);
  Dataset val = dataset.subset(val_idx);
  std::fill(val.split_tags.begin(), val.split_tags.end(), SplitTag::Validation);
  return {std::move(train), std::move(val)};
}

PartialLabelMatrix drop_labels(const PartialLabelMatrix& labels, double fraction,
                               std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) {
    throw std::invalid_argument(fmt::format("drop fraction {} outside [0, 1]", fraction));
  }
  std::vector<std::size_t> observed;
  const auto entries = labels.entries();
  for (std::size_t k = 0; k < entries.size(); ++k) {
    if (is_observed(entries[k])) observed.push_back(k);
  }
  const std::size_t n_drop = rounded_count(fraction, observed.size());

  // Partial Fisher-Yates: the first n_drop slots become a uniform sample.
  Rng rng(derive_seed(seed, {stream::kDrop}));
  for (std::size_t k = 0; k < n_drop; ++k) {
    const auto j = k + static_cast<std::size_t>(rng.below(observed.size() - k));
    std::swap(observed[k], observed[j]);
  }

  std::vector<LabelState> out(entries.begin(), entries.end());
  for (std::size_t k = 0; k < n_drop; ++k) out[observed[k]] = LabelState::Missing;
  return PartialLabelMatrix(labels.num_clips(), labels.num_classes(), std::move(out), true);
}

void SyntheticSpec::validate() const {
  if (num_clips < 1 || num_classes < 1 || frames_per_clip < 1 || embed_dim < 1) {
    throw std::invalid_argument("synthetic spec: all counts must be >= 1");
  }
  if (class_prior.size() != 1 && class_prior.size() != num_classes) {
    throw std::invalid_argument("synthetic spec: class_prior needs 1 or num_classes values");
  }
  for (double p : class_prior) {
    if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("synthetic spec: priors must be in (0, 1)");
  }
  if (!(noise_std >= 0.0)) throw std::invalid_argument("synthetic spec: noise_std must be >= 0");
  if (!(active_frame_fraction > 0.0 && active_frame_fraction <= 1.0)) {
    throw std::invalid_argument("synthetic spec: active_frame_fraction must be in (0, 1]");
  }
  if (!(test_fraction >= 0.0 && test_fraction < 1.0)) {
    throw std::invalid_argument("synthetic spec: test_fraction must be in [0, 1)");
  }
}

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  const std::size_t n = spec.num_clips;
  const std::size_t c = spec.num_classes;
  const std::size_t t = spec.frames_per_clip;
  const std::size_t d = spec.embed_dim;
  Rng rng(spec.seed);

  // Unit-norm random directions scaled by prototype_scale.
  std::vector<std::vector<double>> prototypes(c, std::vector<double>(d));
  for (auto& p : prototypes) {
    double norm = 0.0;
    while (norm == 0.0) {
      norm = 0.0;
      for (auto& v : p) {
        v = rng.normal();
        norm += v * v;
      }
      norm = std::sqrt(norm);
    }
    for (auto& v : p) v *= spec.prototype_scale / norm;
  }

  const std::size_t active =
      std::clamp<std::size_t>(rounded_count(spec.active_frame_fraction, t), 1, t);

  SyntheticData out;
  auto& ds = out.dataset;
  std::vector<LabelState> truth(n * c, LabelState::Negative);
  ds.embeddings.resize(n);
  ds.split_tags.assign(n, SplitTag::Train);
  for (std::size_t i = 0; i < n; ++i) {
    auto& seq = ds.embeddings[i];
    seq.clip_id = fmt::format("clip{:06d}", i);
    seq.num_frames = t;
    seq.dim = d;
    std::vector<double> frames(t * d);
    for (auto& v : frames) v = spec.noise_std * rng.normal();
    for (std::size_t k = 0; k < c; ++k) {
      const double prior = spec.class_prior.size() == 1 ? spec.class_prior[0] : spec.class_prior[k];
      if (!rng.bernoulli(prior)) continue;
      truth[i * c + k] = LabelState::Positive;
      std::vector<std::size_t> order(t);
      std::iota(order.begin(), order.end(), std::size_t{0});
      rng.shuffle(std::span(order));
      for (std::size_t a = 0; a < active; ++a) {
        for (std::size_t j = 0; j < d; ++j) frames[order[a] * d + j] += prototypes[k][j];
      }
    }
    seq.frames.assign(frames.begin(), frames.end());
  }

  // Test clips are a seeded random subset.
  const std::size_t n_test = rounded_count(spec.test_fraction, n);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(std::span(order));
  for (std::size_t k = 0; k < n_test; ++k) ds.split_tags[order[k]] = SplitTag::Test;

  ds.class_names.reserve(c);
  for (std::size_t k = 0; k < c; ++k) ds.class_names.push_back(fmt::format("class{}", k));
  out.ground_truth = PartialLabelMatrix(n, c, truth, true);
  ds.labels = out.ground_truth;
  return out;
}

}  // namespace pll
