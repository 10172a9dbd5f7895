#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "pll/data_model.hpp"

namespace pll {

/// Paths of the four canonical dataset files.
struct DatasetPaths {
  std::filesystem::path embeddings;
  std::filesystem::path labels;
  std::filesystem::path classes;
  std::filesystem::path splits;

  /// embeddings.bin, labels.csv, classes.csv and splits.csv inside dir.
  static DatasetPaths in_directory(const std::filesystem::path& dir);
};

/// Sidecar listing the published validation clips (header `clip_id`).
inline constexpr const char* kFixedValidationFile = "fixed_validation.csv";

struct ReadOptions {
  /// Accept label rows without any observed entry (ablated data).
  bool allow_unlabeled_rows = false;
};

Dataset read_dataset(const DatasetPaths& paths, const ReadOptions& options = {});

/// Writes all four files. Throws if any clip is tagged validation, since the
/// splits file only carries train/test.
void write_dataset(const Dataset& dataset, const DatasetPaths& paths);

// Individual formats, exposed for tooling and tests.
void write_embeddings(std::ostream& out, const std::vector<EmbeddingSequence>& embeddings);
std::vector<EmbeddingSequence> read_embeddings(std::istream& in);

std::vector<std::string> read_clip_id_list(const std::filesystem::path& path);
void write_clip_id_list(const std::filesystem::path& path, const std::vector<std::string>& ids);

}  // namespace pll
