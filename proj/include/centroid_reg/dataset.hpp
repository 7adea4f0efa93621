#pragma once

// Labelled embedding sets and their on-disk forms.
//
// EMBD v1 (little-endian):
//
//   header   "EMBD" | version u16 = 1 | dimension u32 | num_classes u32
//            | record_count u64 | payload_crc32 u32
//   classes  num_classes x (name_len u16 | UTF-8 name)
//   records  record_count x (id_len u16 | UTF-8 id | label u32 | text_count u8
//            | image vector: dimension x f32 | text_count x (dimension x f32))
//
// The CRC covers everything after the header (byte 26 to end of file).
//
// The JSON-lines form holds one record object per line with keys sample_id,
// label, image_embedding and text_embeddings. An optional first line
// {"dimension": D, "num_classes": K, "class_names": [...]} pins the header;
// without it D comes from the first record, K from the largest label, and
// classes are named class_0, class_1, ...

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "centroid_reg/binary_io.hpp"
#include "centroid_reg/errors.hpp"
#include "centroid_reg/numerics.hpp"

namespace centroid_reg {

using ClassIndex = std::uint32_t;

inline constexpr std::uint16_t kEmbdVersion = 1;
inline constexpr std::size_t kEmbdHeaderSize = 4 + 2 + 4 + 4 + 8 + 4;
inline constexpr std::size_t kMaxTextEmbeddings = 255;

struct EmbeddingRecord {
  std::string sample_id;
  ClassIndex label = 0;
  std::vector<double> image_embedding;
  std::vector<std::vector<double>> text_embeddings;

  friend bool operator==(const EmbeddingRecord&, const EmbeddingRecord&) = default;
};

struct EmbeddingDataset {
  std::size_t dimension = 0;
  std::size_t num_classes = 0;
  std::vector<std::string> class_names;
  std::vector<EmbeddingRecord> records;

  std::size_t size() const noexcept { return records.size(); }
  bool empty() const noexcept { return records.empty(); }

  /// Image embeddings stacked into a size() x dimension matrix.
  Matrix image_matrix() const {
    Matrix m(records.size(), dimension);
    for (std::size_t i = 0; i < records.size(); ++i) {
      std::copy(records[i].image_embedding.begin(), records[i].image_embedding.end(), m.row(i).begin());
    }
    return m;
  }

  std::vector<ClassIndex> labels() const {
    std::vector<ClassIndex> out;
    out.reserve(records.size());
    for (const auto& r : records) out.push_back(r.label);
    return out;
  }

  std::vector<std::size_t> class_counts() const {
    std::vector<std::size_t> counts(num_classes, 0);
    for (const auto& r : records) {
      if (r.label < num_classes) ++counts[r.label];
    }
    return counts;
  }

  std::vector<std::size_t> text_counts_per_class() const {
    std::vector<std::size_t> counts(num_classes, 0);
    for (const auto& r : records) {
      if (r.label < num_classes) counts[r.label] += r.text_embeddings.size();
    }
    return counts;
  }

  friend bool operator==(const EmbeddingDataset&, const EmbeddingDataset&) = default;
};

struct DatasetSplit {
  EmbeddingDataset train;
  EmbeddingDataset test;

  friend bool operator==(const DatasetSplit&, const DatasetSplit&) = default;
};

namespace detail {

inline bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

/// Index of the first record that breaks an invariant together with the
/// reason, or nullopt when the dataset is well formed.
struct Violation {
  std::optional<std::size_t> record;
  std::string reason;
};

inline std::optional<Violation> find_violation(const EmbeddingDataset& d) {
  if (d.dimension == 0) return Violation{std::nullopt, "dimension must be positive"};
  if (d.num_classes == 0) return Violation{std::nullopt, "num_classes must be positive"};
  if (d.class_names.size() != d.num_classes) {
    return Violation{std::nullopt, "class table has " + std::to_string(d.class_names.size()) +
                                       " names for " + std::to_string(d.num_classes) + " classes"};
  }
  std::unordered_set<std::string_view> ids;
  ids.reserve(d.records.size());
  for (std::size_t i = 0; i < d.records.size(); ++i) {
    const auto& r = d.records[i];
    auto fail = [&](const std::string& why) {
      return Violation{i, "record " + std::to_string(i) + " ('" + r.sample_id + "'): " + why};
    };
    if (r.sample_id.empty()) return fail("empty sample_id");
    if (!ids.insert(r.sample_id).second) return fail("duplicate sample_id");
    if (r.label >= d.num_classes) {
      return fail("label " + std::to_string(r.label) + " out of range for " +
                  std::to_string(d.num_classes) + " classes");
    }
    if (r.image_embedding.size() != d.dimension) {
      return fail("image embedding has length " + std::to_string(r.image_embedding.size()) +
                  ", expected " + std::to_string(d.dimension));
    }
    if (!all_finite(r.image_embedding)) return fail("non-finite value in image embedding");
    if (r.text_embeddings.size() > kMaxTextEmbeddings) {
      return fail(std::to_string(r.text_embeddings.size()) + " text embeddings exceeds the limit of " +
                  std::to_string(kMaxTextEmbeddings));
    }
    for (std::size_t j = 0; j < r.text_embeddings.size(); ++j) {
      if (r.text_embeddings[j].size() != d.dimension) {
        return fail("text embedding " + std::to_string(j) + " has length " +
                    std::to_string(r.text_embeddings[j].size()) + ", expected " +
                    std::to_string(d.dimension));
      }
      if (!all_finite(r.text_embeddings[j])) {
        return fail("non-finite value in text embedding " + std::to_string(j));
      }
    }
  }
  return std::nullopt;
}

inline void write_f32_vector(ByteWriter& w, std::span<const double> v) {
  for (double x : v) {
    const auto f = static_cast<float>(x);
    if (!std::isfinite(f)) throw ValidationError("value " + std::to_string(x) + " overflows a 32-bit float");
    w.f32(f);
  }
}

inline std::vector<double> read_f32_vector(ByteReader& r, std::size_t n, std::string_view what) {
  r.require(static_cast<std::uint64_t>(n) * 4, what);
  std::vector<double> v(n);
  for (auto& x : v) x = static_cast<double>(r.f32(what));
  return v;
}

}  // namespace detail

/// Throws ValidationError naming the offending record.
inline void validate(const EmbeddingDataset& d) {
  if (auto v = detail::find_violation(d)) throw ValidationError(v->reason);
}

/// Additionally requires every class to appear at least once, as training
/// data must.
inline void validate_for_training(const EmbeddingDataset& d) {
  validate(d);
  const auto counts = d.class_counts();
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (counts[c] == 0) {
      throw ValidationError("training set has no records for class " + std::to_string(c) + " ('" +
                            d.class_names[c] + "')");
    }
  }
}

inline void validate(const DatasetSplit& s) {
  validate(s.train);
  validate(s.test);
  if (s.train.dimension != s.test.dimension || s.train.num_classes != s.test.num_classes ||
      s.train.class_names != s.test.class_names) {
    throw ValidationError("train and test disagree on dimension, class count or class names");
  }
  std::unordered_set<std::string_view> train_ids;
  for (const auto& r : s.train.records) train_ids.insert(r.sample_id);
  for (const auto& r : s.test.records) {
    if (train_ids.contains(r.sample_id)) {
      throw ValidationError("sample_id '" + r.sample_id + "' appears in both train and test");
    }
  }
}

/// Serialises to EMBD v1 bytes. Throws ValidationError for invalid datasets,
/// including values that overflow 32-bit floats.
inline Bytes encode_embd(const EmbeddingDataset& d) {
  validate(d);
  if (d.dimension > UINT32_MAX || d.num_classes > UINT32_MAX) {
    throw ValidationError("dimension or class count does not fit the EMBD header");
  }
  ByteWriter w;
  w.raw(std::string_view("EMBD"));
  w.u16(kEmbdVersion);
  w.u32(static_cast<std::uint32_t>(d.dimension));
  w.u32(static_cast<std::uint32_t>(d.num_classes));
  w.u64(d.records.size());
  const std::size_t crc_at = w.size();
  w.u32(0);
  for (const auto& name : d.class_names) {
    if (name.size() > UINT16_MAX) throw ValidationError("class name longer than 65535 bytes");
    w.u16(static_cast<std::uint16_t>(name.size()));
    w.raw(name);
  }
  for (const auto& r : d.records) {
    if (r.sample_id.size() > UINT16_MAX) {
      throw ValidationError("sample_id '" + r.sample_id.substr(0, 32) + "...' longer than 65535 bytes");
    }
    w.u16(static_cast<std::uint16_t>(r.sample_id.size()));
    w.raw(r.sample_id);
    w.u32(r.label);
    w.u8(static_cast<std::uint8_t>(r.text_embeddings.size()));
    detail::write_f32_vector(w, r.image_embedding);
    for (const auto& t : r.text_embeddings) detail::write_f32_vector(w, t);
  }
  auto bytes = w.take();
  const auto crc = crc32_of(std::span<const std::uint8_t>(bytes).subspan(kEmbdHeaderSize));
  for (int i = 0; i < 4; ++i) bytes[crc_at + i] = static_cast<std::uint8_t>(crc >> (8 * i));
  return bytes;
}

/// Parses EMBD v1 bytes. Structure is checked first (truncation, trailing
/// bytes), then the CRC, then the dataset invariants.
inline EmbeddingDataset decode_embd(std::span<const std::uint8_t> bytes) {
  using Kind = FormatError::Kind;
  ByteReader r(bytes);
  expect_magic_and_version(r, "EMBD", kEmbdVersion);
  EmbeddingDataset d;
  d.dimension = r.u32("dimension");
  d.num_classes = r.u32("num_classes");
  const std::uint64_t record_count = r.u64("record_count");
  const std::size_t crc_field = r.offset();
  const std::uint32_t stored_crc = r.u32("payload_crc32");
  const std::size_t payload_start = r.offset();

  if (d.dimension == 0) throw FormatError(Kind::invariant_violation, "dimension is zero", 6);
  if (d.num_classes == 0) throw FormatError(Kind::invariant_violation, "num_classes is zero", 10);

  // Each class entry needs at least 2 bytes; checking up front keeps a
  // corrupted count from driving a huge allocation.
  r.require(static_cast<std::uint64_t>(d.num_classes) * 2, "class table");
  d.class_names.reserve(d.num_classes);
  for (std::size_t c = 0; c < d.num_classes; ++c) {
    const auto len = r.u16("class name length");
    d.class_names.push_back(r.text(len, "class name"));
  }

  const std::uint64_t min_record_bytes = 2 + 4 + 1 + static_cast<std::uint64_t>(d.dimension) * 4;
  if (record_count > r.remaining() / min_record_bytes) {
    throw FormatError(Kind::truncated,
                      "record_count " + std::to_string(record_count) +
                          " cannot fit in the remaining " + std::to_string(r.remaining()) + " bytes",
                      r.offset());
  }
  d.records.reserve(static_cast<std::size_t>(record_count));
  for (std::uint64_t i = 0; i < record_count; ++i) {
    EmbeddingRecord rec;
    const auto id_len = r.u16("sample_id length");
    rec.sample_id = r.text(id_len, "sample_id");
    rec.label = r.u32("label");
    const auto text_count = r.u8("text_count");
    rec.image_embedding = detail::read_f32_vector(r, d.dimension, "image embedding");
    rec.text_embeddings.reserve(text_count);
    for (std::size_t j = 0; j < text_count; ++j) {
      rec.text_embeddings.push_back(detail::read_f32_vector(r, d.dimension, "text embedding"));
    }
    d.records.push_back(std::move(rec));
  }
  if (!r.at_end()) {
    throw FormatError(Kind::trailing_bytes,
                      std::to_string(r.remaining()) + " unexpected bytes after the last record",
                      r.offset());
  }
  expect_crc(bytes, payload_start, stored_crc, crc_field);
  if (auto v = detail::find_violation(d)) {
    throw FormatError(Kind::invariant_violation, v->reason);
  }
  return d;
}

inline void write_embd(const EmbeddingDataset& d, const std::filesystem::path& path) {
  write_file_atomic(path, encode_embd(d));
}

inline EmbeddingDataset read_embd(const std::filesystem::path& path) {
  return decode_embd(read_file_bytes(path));
}

// ---------------------------------------------------------------------------
// JSON-lines form

inline std::string encode_jsonl(const EmbeddingDataset& d) {
  validate(d);
  std::ostringstream out;
  nlohmann::json header = {{"dimension", d.dimension},
                           {"num_classes", d.num_classes},
                           {"class_names", d.class_names}};
  out << header.dump() << '\n';
  for (const auto& r : d.records) {
    nlohmann::json rec = {{"sample_id", r.sample_id},
                          {"label", r.label},
                          {"image_embedding", r.image_embedding},
                          {"text_embeddings", r.text_embeddings}};
    out << rec.dump() << '\n';
  }
  return out.str();
}

inline EmbeddingDataset decode_jsonl(std::string_view text) {
  using Kind = FormatError::Kind;
  EmbeddingDataset d;
  bool have_header = false;
  bool seen_record = false;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto eol = text.find('\n', pos);
    const auto line = text.substr(pos, eol == std::string_view::npos ? std::string_view::npos : eol - pos);
    pos = eol == std::string_view::npos ? text.size() + 1 : eol + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    const auto where = "line " + std::to_string(line_no) + ": ";
    try {
      const auto obj = nlohmann::json::parse(line);
      if (!obj.is_object()) throw FormatError(Kind::malformed_text, where + "expected a JSON object");
      if (!obj.contains("sample_id")) {
        if (have_header || seen_record) {
          throw FormatError(Kind::malformed_text, where + "header must be the first line");
        }
        d.dimension = obj.at("dimension").get<std::size_t>();
        d.num_classes = obj.at("num_classes").get<std::size_t>();
        d.class_names = obj.at("class_names").get<std::vector<std::string>>();
        have_header = true;
        continue;
      }
      EmbeddingRecord rec;
      rec.sample_id = obj.at("sample_id").get<std::string>();
      rec.label = obj.at("label").get<ClassIndex>();
      rec.image_embedding = obj.at("image_embedding").get<std::vector<double>>();
      if (obj.contains("text_embeddings")) {
        rec.text_embeddings = obj.at("text_embeddings").get<std::vector<std::vector<double>>>();
      }
      seen_record = true;
      d.records.push_back(std::move(rec));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(Kind::malformed_text, where + e.what());
    }
  }
  if (!have_header) {
    if (d.records.empty()) throw FormatError(Kind::malformed_text, "no header and no records");
    d.dimension = d.records.front().image_embedding.size();
    ClassIndex top = 0;
    for (const auto& r : d.records) top = std::max(top, r.label);
    d.num_classes = static_cast<std::size_t>(top) + 1;
    for (std::size_t c = 0; c < d.num_classes; ++c) d.class_names.push_back("class_" + std::to_string(c));
  }
  if (auto v = detail::find_violation(d)) throw FormatError(Kind::invariant_violation, v->reason);
  return d;
}

inline void write_jsonl(const EmbeddingDataset& d, const std::filesystem::path& path) {
  write_file_atomic(path, encode_jsonl(d));
}

/// Reads either form, choosing by the leading magic bytes.
inline EmbeddingDataset load_dataset(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  if (bytes.size() >= 4 && std::equal(bytes.begin(), bytes.begin() + 4, "EMBD")) {
    return decode_embd(bytes);
  }
  return decode_jsonl(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

/// Writes JSON lines for a .jsonl extension, EMBD otherwise.
inline void save_dataset(const EmbeddingDataset& d, const std::filesystem::path& path) {
  if (path.extension() == ".jsonl") {
    write_jsonl(d, path);
  } else {
    write_embd(d, path);
  }
}

// ---------------------------------------------------------------------------

inline EmbeddingDataset empty_like(const EmbeddingDataset& d) {
  EmbeddingDataset out;
  out.dimension = d.dimension;
  out.num_classes = d.num_classes;
  out.class_names = d.class_names;
  return out;
}

/// Stratified split. For each class with n records, round(test_fraction * n)
/// of them (capped at n - 1) go to test, chosen by a seeded shuffle. Both
/// halves keep the input order.
inline DatasetSplit split_dataset(const EmbeddingDataset& d, double test_fraction, SeededRng& rng) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw ValidationError("test_fraction must lie in (0, 1), got " + std::to_string(test_fraction));
  }
  validate(d);
  std::vector<std::vector<std::size_t>> by_class(d.num_classes);
  for (std::size_t i = 0; i < d.records.size(); ++i) by_class[d.records[i].label].push_back(i);

  std::vector<bool> to_test(d.records.size(), false);
  for (std::size_t c = 0; c < d.num_classes; ++c) {
    auto& members = by_class[c];
    if (members.size() < 2) {
      throw ValidationError("class " + std::to_string(c) + " ('" + d.class_names[c] + "') has " +
                            std::to_string(members.size()) + " record(s); splitting needs at least 2");
    }
    const auto wanted = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(members.size())));
    const auto n_test = std::min(wanted, members.size() - 1);
    rng.shuffle(std::span<std::size_t>(members));
    for (std::size_t k = 0; k < n_test; ++k) to_test[members[k]] = true;
  }

  DatasetSplit split{empty_like(d), empty_like(d)};
  for (std::size_t i = 0; i < d.records.size(); ++i) {
    (to_test[i] ? split.test : split.train).records.push_back(d.records[i]);
  }
  return split;
}

}  // namespace centroid_reg
