#include "pll/dataset_io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <unordered_map>

#include <fmt/format.h>

#include "pll/io_util.hpp"

namespace pll {

namespace {

constexpr std::string_view kEmbeddingsMagic = "PLLEMB01";

std::size_t parse_index(const std::string& s, const std::filesystem::path& file, std::size_t line) {
  std::size_t v = 0;
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc{} || ptr != end || s.empty()) {
    throw DataError(DataErrorKind::MalformedCsv,
                    fmt::format("{}:{}: invalid integer '{}'", file.string(), line, s));
  }
  return v;
}

std::ofstream open_out(const std::filesystem::path& path, std::ios::openmode mode = std::ios::out) {
  std::ofstream out(path, mode | std::ios::trunc);
  if (!out) throw DataError(DataErrorKind::Io, fmt::format("cannot write '{}'", path.string()));
  return out;
}

}  // namespace

DatasetPaths DatasetPaths::in_directory(const std::filesystem::path& dir) {
  return {dir / "embeddings.bin", dir / "labels.csv", dir / "classes.csv", dir / "splits.csv"};
}

void write_embeddings(std::ostream& out, const std::vector<EmbeddingSequence>& embeddings) {
  io::write_magic(out, kEmbeddingsMagic);
  io::write_u32(out, io::checked_u32(embeddings.size(), "num_clips"));
  for (const auto& e : embeddings) {
    io::write_u32(out, io::checked_u32(e.clip_id.size(), "clip id length"));
    out.write(e.clip_id.data(), static_cast<std::streamsize>(e.clip_id.size()));
    io::write_u32(out, io::checked_u32(e.num_frames, "T"));
    io::write_u32(out, io::checked_u32(e.dim, "D"));
    for (float v : e.frames) io::write_f32(out, v);
  }
}

std::vector<EmbeddingSequence> read_embeddings(std::istream& in) {
  io::expect_magic(in, kEmbeddingsMagic);
  const std::uint32_t n = io::read_u32(in);
  std::vector<EmbeddingSequence> out;
  out.reserve(std::min<std::uint32_t>(n, 1u << 20));
  for (std::uint32_t i = 0; i < n; ++i) {
    EmbeddingSequence e;
    const std::uint32_t id_len = io::read_u32(in);
    e.clip_id.resize(id_len);
    io::read_exact(in, e.clip_id.data(), id_len);
    e.num_frames = io::read_u32(in);
    e.dim = io::read_u32(in);
    if (e.num_frames == 0 || e.dim == 0) {
      throw DataError(DataErrorKind::DimensionMismatch,
                      fmt::format("clip '{}' has empty shape {}x{}", e.clip_id, e.num_frames, e.dim));
    }
    if (!out.empty() && e.dim != out.front().dim) {
      throw DataError(DataErrorKind::DimensionMismatch,
                      fmt::format("clip '{}' has dim {}, expected {}", e.clip_id, e.dim,
                                  out.front().dim));
    }
    e.frames.resize(e.num_frames * e.dim);
    for (auto& v : e.frames) {
      v = io::read_f32(in);
      if (!std::isfinite(v)) {
        throw DataError(DataErrorKind::NonFinite, fmt::format("clip '{}' has non-finite values", e.clip_id));
      }
    }
    out.push_back(std::move(e));
  }
  return out;
}

Dataset read_dataset(const DatasetPaths& paths, const ReadOptions& options) {
  Dataset ds;
  {
    std::ifstream in(paths.embeddings, std::ios::binary);
    if (!in) throw DataError(DataErrorKind::Io, fmt::format("cannot open '{}'", paths.embeddings.string()));
    ds.embeddings = read_embeddings(in);
  }

  std::unordered_map<std::string, std::size_t> clip_index;
  for (std::size_t i = 0; i < ds.embeddings.size(); ++i) {
    if (!clip_index.emplace(ds.embeddings[i].clip_id, i).second) {
      throw DataError(DataErrorKind::DuplicateClipId,
                      fmt::format("duplicate clip id '{}'", ds.embeddings[i].clip_id));
    }
  }
  auto lookup = [&](const std::string& id, const std::filesystem::path& file, std::size_t line) {
    const auto it = clip_index.find(id);
    if (it == clip_index.end()) {
      throw DataError(DataErrorKind::UnknownClipId,
                      fmt::format("{}:{}: unknown clip id '{}'", file.string(), line, id));
    }
    return it->second;
  };

  const auto classes = io::read_csv(paths.classes, {"class_index", "class_name"});
  ds.class_names.resize(classes.rows.size());
  std::vector<bool> seen_class(classes.rows.size(), false);
  for (std::size_t r = 0; r < classes.rows.size(); ++r) {
    const auto line = classes.line_numbers[r];
    const auto idx = parse_index(classes.rows[r][0], paths.classes, line);
    if (idx >= ds.class_names.size() || seen_class[idx]) {
      throw DataError(DataErrorKind::MalformedCsv,
                      fmt::format("{}:{}: class indices must be 0..C-1 without repeats",
                                  paths.classes.string(), line));
    }
    seen_class[idx] = true;
    ds.class_names[idx] = classes.rows[r][1];
  }
  const std::size_t c = ds.class_names.size();

  PartialLabelMatrix labels(ds.embeddings.size(), c, LabelState::Missing, true);
  const auto label_rows = io::read_csv(paths.labels, {"clip_id", "class_index", "state"});
  for (std::size_t r = 0; r < label_rows.rows.size(); ++r) {
    const auto& row = label_rows.rows[r];
    const auto line = label_rows.line_numbers[r];
    const auto clip = lookup(row[0], paths.labels, line);
    const auto cls = parse_index(row[1], paths.labels, line);
    if (cls >= c) {
      throw DataError(DataErrorKind::DimensionMismatch,
                      fmt::format("{}:{}: class index {} >= {}", paths.labels.string(), line, cls, c));
    }
    if (row[2] != "0" && row[2] != "1") {
      throw DataError(DataErrorKind::MalformedCsv,
                      fmt::format("{}:{}: state must be 0 or 1", paths.labels.string(), line));
    }
    if (is_observed(labels(clip, cls))) {
      throw DataError(DataErrorKind::MalformedCsv,
                      fmt::format("{}:{}: repeated label for ({}, {})", paths.labels.string(), line,
                                  row[0], cls));
    }
    labels.set(clip, cls, row[2] == "1" ? LabelState::Positive : LabelState::Negative);
  }
  labels.set_allow_unlabeled_rows(options.allow_unlabeled_rows);
  ds.labels = std::move(labels);

  const auto splits = io::read_csv(paths.splits, {"clip_id", "split"});
  ds.split_tags.assign(ds.embeddings.size(), SplitTag::Train);
  std::vector<bool> has_split(ds.embeddings.size(), false);
  for (std::size_t r = 0; r < splits.rows.size(); ++r) {
    const auto line = splits.line_numbers[r];
    const auto clip = lookup(splits.rows[r][0], paths.splits, line);
    const auto& tag = splits.rows[r][1];
    if (tag != "train" && tag != "test") {
      throw DataError(DataErrorKind::MalformedCsv,
                      fmt::format("{}:{}: split must be train or test", paths.splits.string(), line));
    }
    if (has_split[clip]) {
      throw DataError(DataErrorKind::MalformedCsv,
                      fmt::format("{}:{}: repeated split for '{}'", paths.splits.string(), line,
                                  splits.rows[r][0]));
    }
    has_split[clip] = true;
    ds.split_tags[clip] = parse_split_tag(tag);
  }
  for (std::size_t i = 0; i < has_split.size(); ++i) {
    if (!has_split[i]) {
      throw DataError(DataErrorKind::MalformedCsv,
                      fmt::format("{}: no split for clip '{}'", paths.splits.string(),
                                  ds.embeddings[i].clip_id));
    }
  }

  ds.validate();
  return ds;
}

void write_dataset(const Dataset& dataset, const DatasetPaths& paths) {
  dataset.validate();
  for (auto t : dataset.split_tags) {
    if (t == SplitTag::Validation) {
      throw std::invalid_argument("write_dataset: validation-tagged clips cannot be written");
    }
  }
  for (const auto& e : dataset.embeddings) io::check_csv_field(e.clip_id);
  for (const auto& n : dataset.class_names) io::check_csv_field(n);

  {
    auto out = open_out(paths.embeddings, std::ios::out | std::ios::binary);
    write_embeddings(out, dataset.embeddings);
  }
  {
    auto out = open_out(paths.classes);
    out << "class_index,class_name\n";
    for (std::size_t k = 0; k < dataset.class_names.size(); ++k) {
      out << k << ',' << dataset.class_names[k] << '\n';
    }
  }
  {
    auto out = open_out(paths.labels);
    out << "clip_id,class_index,state\n";
    for (std::size_t i = 0; i < dataset.num_clips(); ++i) {
      for (std::size_t k = 0; k < dataset.num_classes(); ++k) {
        const auto s = dataset.labels(i, k);
        if (!is_observed(s)) continue;
        out << dataset.embeddings[i].clip_id << ',' << k << ','
            << (s == LabelState::Positive ? '1' : '0') << '\n';
      }
    }
  }
  {
    auto out = open_out(paths.splits);
    out << "clip_id,split\n";
    for (std::size_t i = 0; i < dataset.num_clips(); ++i) {
      out << dataset.embeddings[i].clip_id << ',' << to_string(dataset.split_tags[i]) << '\n';
    }
  }
}

std::vector<std::string> read_clip_id_list(const std::filesystem::path& path) {
  const auto table = io::read_csv(path, {"clip_id"});
  std::vector<std::string> out;
  out.reserve(table.rows.size());
  for (auto& r : table.rows) out.push_back(r[0]);
  return out;
}

void write_clip_id_list(const std::filesystem::path& path, const std::vector<std::string>& ids) {
  auto out = open_out(path);
  out << "clip_id\n";
  for (const auto& id : ids) {
    io::check_csv_field(id);
    out << id << '\n';
  }
}

}  // namespace pll
