#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace pll {

enum class LabelState : std::uint8_t { Negative = 0, Positive = 1, Missing = 2 };

std::string_view to_string(LabelState s);
/// Parses "negative"/"positive"/"missing" or the digit codes 0/1/2.
LabelState parse_label_state(std::string_view text);

inline bool is_observed(LabelState s) { return s != LabelState::Missing; }

/// N x C matrix of tri-state labels.
///
/// Every row must contain at least one observed entry unless the matrix
/// carries allow_unlabeled_rows (synthetic or ablated data).
class PartialLabelMatrix {
 public:
  PartialLabelMatrix() = default;
  PartialLabelMatrix(std::size_t num_clips, std::size_t num_classes,
                     LabelState fill = LabelState::Missing, bool allow_unlabeled_rows = true);
  PartialLabelMatrix(std::size_t num_clips, std::size_t num_classes,
                     std::vector<LabelState> entries, bool allow_unlabeled_rows);

  std::size_t num_clips() const { return num_clips_; }
  std::size_t num_classes() const { return num_classes_; }
  std::size_t size() const { return entries_.size(); }

  LabelState operator()(std::size_t clip, std::size_t cls) const {
    return entries_[clip * num_classes_ + cls];
  }
  void set(std::size_t clip, std::size_t cls, LabelState s) {
    entries_[clip * num_classes_ + cls] = s;
  }

  std::span<const LabelState> entries() const { return entries_; }
  std::span<const LabelState> row(std::size_t clip) const {
    return {entries_.data() + clip * num_classes_, num_classes_};
  }

  std::size_t observed_count() const;

  bool allow_unlabeled_rows() const { return allow_unlabeled_rows_; }
  void set_allow_unlabeled_rows(bool v) { allow_unlabeled_rows_ = v; }

  /// Throws std::invalid_argument if a row has no observed entry and the flag is off.
  void validate() const;

  PartialLabelMatrix select_rows(std::span<const std::size_t> rows) const;

  /// Compares shape and entries; the unlabeled-rows flag is not part of the value.
  friend bool operator==(const PartialLabelMatrix& a, const PartialLabelMatrix& b) {
    return a.num_clips_ == b.num_clips_ && a.num_classes_ == b.num_classes_ &&
           a.entries_ == b.entries_;
  }

 private:
  std::size_t num_clips_ = 0;
  std::size_t num_classes_ = 0;
  std::vector<LabelState> entries_;
  bool allow_unlabeled_rows_ = true;
};

/// T x D float32 frames of one clip, row-major.
struct EmbeddingSequence {
  std::string clip_id;
  std::size_t num_frames = 0;
  std::size_t dim = 0;
  std::vector<float> frames;

  std::span<const float> frame(std::size_t t) const { return {frames.data() + t * dim, dim}; }

  friend bool operator==(const EmbeddingSequence&, const EmbeddingSequence&) = default;
};

enum class SplitTag : std::uint8_t { Train, Validation, Test };

std::string_view to_string(SplitTag t);
SplitTag parse_split_tag(std::string_view text);

struct Dataset {
  std::vector<EmbeddingSequence> embeddings;
  PartialLabelMatrix labels;
  std::vector<std::string> class_names;
  std::vector<SplitTag> split_tags;

  std::size_t num_clips() const { return embeddings.size(); }
  std::size_t num_classes() const { return class_names.size(); }
  std::size_t embed_dim() const { return embeddings.empty() ? 0 : embeddings.front().dim; }

  /// Clip indices carrying the given tag, in dataset order.
  std::vector<std::size_t> indices_with(SplitTag tag) const;

  Dataset subset(std::span<const std::size_t> indices) const;
  Dataset with_tag(SplitTag tag) const;

  /// Checks every structural invariant; throws DataError on violation.
  void validate() const;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

enum class DataErrorKind {
  BadMagic,
  UnexpectedEof,
  DimensionMismatch,
  UnknownClipId,
  DuplicateClipId,
  MalformedCsv,
  NonFinite,
  Io,
  Invariant,
};

class DataError : public std::runtime_error {
 public:
  DataError(DataErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  DataErrorKind kind() const { return kind_; }

 private:
  DataErrorKind kind_;
};

/// Fraction of observed entries. Throws std::invalid_argument on an empty matrix.
double label_coverage(const PartialLabelMatrix& labels);

/// Half-away-from-zero rounding of fraction * count, used for all derived counts.
std::size_t rounded_count(double fraction, std::size_t count);

/// Partitions the train-tagged clips into (train, validation).
///
/// The validation part holds round(val_fraction * N_train) clips, clamped to
/// [1, N_train - 1]. Both outputs keep the original clip order.
std::pair<Dataset, Dataset> split_train_val(const Dataset& dataset, double val_fraction,
                                            std::uint64_t seed);

/// Uses a fixed list of clip ids as the validation set instead of random sampling.
std::pair<Dataset, Dataset> split_fixed_validation(const Dataset& dataset,
                                                   std::span<const std::string> validation_ids);

/// Turns exactly round(fraction * observed) observed entries, sampled
/// uniformly over all observed entries, into Missing.
PartialLabelMatrix drop_labels(const PartialLabelMatrix& labels, double fraction,
                               std::uint64_t seed);

struct SyntheticSpec {
  std::size_t num_clips = 1000;
  std::size_t num_classes = 5;
  std::size_t frames_per_clip = 5;
  std::size_t embed_dim = 16;
  /// Per-class positive probability; a single value is broadcast to all classes.
  std::vector<double> class_prior{0.3};
  double noise_std = 1.0;
  std::uint64_t seed = 0;
  /// Norm scale of the per-class prototype vectors.
  double prototype_scale = 1.0;
  /// Fraction of a positive clip's frames that carry the class prototype (at least one frame).
  double active_frame_fraction = 0.6;
  /// Fraction of clips tagged test; the rest are tagged train.
  double test_fraction = 0.2;

  void validate() const;
};

struct SyntheticData {
  Dataset dataset;
  PartialLabelMatrix ground_truth;
};

/// Clips whose frames mix per-class Gaussian prototypes with isotropic noise.
/// Dataset labels equal the fully observed ground truth.
SyntheticData generate_synthetic(const SyntheticSpec& spec);

}  // namespace pll
