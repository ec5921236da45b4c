#pragma once

// On-disk artifacts.
//
// Embedding container (little-endian):
//   "TMCE" | u32 version (=1) | u32 dim | u64 rows
//   rows * dim f32 payload
//   rows u64 FNV-1a hashes of the external row ids
// A plain-text "<file>.ids" sidecar lists the ids, one per line.
//
// Text artifacts (model metadata, reports, split manifests) are "key = value"
// lines, optionally followed by sections introduced by "[name]".

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "tmcdr/dataset.hpp"
#include "tmcdr/error.hpp"
#include "tmcdr/eval.hpp"
#include "tmcdr/linalg.hpp"
#include "tmcdr/meta.hpp"
#include "tmcdr/models.hpp"

namespace tmcdr {

inline constexpr char kEmbeddingMagic[4] = {'T', 'M', 'C', 'E'};
inline constexpr std::uint32_t kEmbeddingVersion = 1;
inline constexpr std::size_t kEmbeddingHeaderSize = 4 + 4 + 4 + 8;

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

struct EmbeddingTable {
  Matrix values;  // f32 payload widened to f64
  std::vector<std::string> ids;
  std::vector<std::uint64_t> id_hashes;
};

namespace detail {

template <typename T>
void put_le(std::string& out, T value) {
  using U = std::make_unsigned_t<T>;
  auto u = static_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((u >> (8 * i)) & 0xff));
}

template <typename T>
T get_le(std::string_view in, std::size_t offset) {
  T u = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    u |= static_cast<T>(static_cast<unsigned char>(in[offset + i])) << (8 * i);
  }
  return u;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("file not found: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace detail

/// Serializes rows as f32. ids must have one entry per row.
inline std::string encode_embeddings(const Matrix& values, const std::vector<std::string>& ids) {
  if (ids.size() != values.rows()) throw ArgumentError("encode_embeddings: one id per row required");
  if (values.cols() > std::numeric_limits<std::uint32_t>::max()) throw ArgumentError("encode_embeddings: dim too large");
  std::string out;
  out.reserve(kEmbeddingHeaderSize + values.data().size() * 4 + ids.size() * 8);
  out.append(kEmbeddingMagic, 4);
  detail::put_le<std::uint32_t>(out, kEmbeddingVersion);
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(values.cols()));
  detail::put_le<std::uint64_t>(out, values.rows());
  for (double x : values.data()) detail::put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(x)));
  for (const auto& id : ids) detail::put_le<std::uint64_t>(out, fnv1a64(id));
  return out;
}

/// Parses a container. ids are left empty; the caller attaches the sidecar.
inline EmbeddingTable decode_embeddings(std::string_view bytes, const std::string& name = "<buffer>") {
  if (bytes.size() < kEmbeddingHeaderSize || std::memcmp(bytes.data(), kEmbeddingMagic, 4) != 0) {
    throw DataError(name + ": not an embedding file (bad magic)");
  }
  const auto version = detail::get_le<std::uint32_t>(bytes, 4);
  if (version != kEmbeddingVersion) throw DataError(name + ": unsupported version " + std::to_string(version));
  const auto dim = detail::get_le<std::uint32_t>(bytes, 8);
  const auto rows = detail::get_le<std::uint64_t>(bytes, 12);
  const std::uint64_t body = bytes.size() - kEmbeddingHeaderSize;
  // rows * (dim * 4 + 8) must equal the body exactly; guard the multiplication.
  const std::uint64_t per_row = std::uint64_t{dim} * 4 + 8;
  if (rows != 0 && (body / rows != per_row || body % rows != 0)) {
    throw DataError(name + ": payload length does not match header (" + std::to_string(rows) + " rows, dim " +
                    std::to_string(dim) + ")");
  }
  if (rows == 0 && body != 0) throw DataError(name + ": trailing bytes after empty table");
  EmbeddingTable t;
  t.values = Matrix(rows, dim);
  std::size_t off = kEmbeddingHeaderSize;
  for (double& x : t.values.data()) {
    x = static_cast<double>(std::bit_cast<float>(detail::get_le<std::uint32_t>(bytes, off)));
    off += 4;
  }
  t.id_hashes.resize(rows);
  for (auto& h : t.id_hashes) {
    h = detail::get_le<std::uint64_t>(bytes, off);
    off += 8;
  }
  return t;
}

inline void save_embeddings(const std::string& path, const Matrix& values, const std::vector<std::string>& ids) {
  detail::write_file(path, encode_embeddings(values, ids));
  std::string text;
  for (const auto& id : ids) text += id + "\n";
  detail::write_file(path + ".ids", text);
}

inline EmbeddingTable load_embeddings(const std::string& path) {
  EmbeddingTable t = decode_embeddings(detail::read_file(path), path);
  const std::string ids_path = path + ".ids";
  if (std::filesystem::exists(ids_path)) {
    std::istringstream in(detail::read_file(ids_path));
    std::string line;
    while (std::getline(in, line)) t.ids.push_back(line);
    if (t.ids.size() != t.values.rows()) throw DataError(ids_path + ": id count does not match " + path);
    for (std::size_t i = 0; i < t.ids.size(); ++i) {
      if (fnv1a64(t.ids[i]) != t.id_hashes[i]) throw DataError(ids_path + ": id hash mismatch at row " + std::to_string(i));
    }
  }
  return t;
}

/// Rounds every entry through f32, the precision of persisted tables.
inline Matrix round_to_f32(const Matrix& m) {
  Matrix out = m;
  for (double& x : out.data()) x = static_cast<double>(static_cast<float>(x));
  return out;
}

// ---------------------------------------------------------------------------
// key = value documents

inline std::string format_double(double x) {
  std::ostringstream ss;
  ss << std::setprecision(17) << x;
  return ss.str();
}

inline std::string join_doubles(const std::vector<double>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ",";
    out += format_double(xs[i]);
  }
  return out;
}

/// Ordered key/value header plus named sections of raw lines.
struct KeyValueDoc {
  std::vector<std::pair<std::string, std::string>> entries;
  std::vector<std::pair<std::string, std::vector<std::string>>> sections;

  void set(std::string key, std::string value) { entries.emplace_back(std::move(key), std::move(value)); }

  const std::string* find(std::string_view key) const {
    for (const auto& [k, v] : entries) {
      if (k == key) return &v;
    }
    return nullptr;
  }

  const std::string& get(std::string_view key, const std::string& context) const {
    if (const auto* v = find(key)) return *v;
    throw DataError(context + ": missing key '" + std::string(key) + "'");
  }

  const std::vector<std::string>* section(std::string_view name) const {
    for (const auto& [n, lines] : sections) {
      if (n == name) return &lines;
    }
    return nullptr;
  }

  std::string str() const {
    std::string out;
    for (const auto& [k, v] : entries) out += k + " = " + v + "\n";
    for (const auto& [n, lines] : sections) {
      out += "[" + n + "]\n";
      for (const auto& l : lines) out += l + "\n";
    }
    return out;
  }

  static KeyValueDoc parse(std::string_view text, const std::string& context) {
    KeyValueDoc doc;
    std::istringstream in{std::string(text)};
    std::string line;
    std::vector<std::string>* current = nullptr;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.size() >= 2 && line.front() == '[' && line.back() == ']') {
        doc.sections.emplace_back(line.substr(1, line.size() - 2), std::vector<std::string>{});
        current = &doc.sections.back().second;
        continue;
      }
      if (current) {
        current->push_back(line);
        continue;
      }
      if (line.empty() || line.front() == '#') continue;
      const auto eq = line.find(" = ");
      if (eq == std::string::npos) throw ParseError(context, lineno, "expected 'key = value'");
      doc.set(line.substr(0, eq), line.substr(eq + 3));
    }
    return doc;
  }
};

inline void save_doc(const std::string& path, const KeyValueDoc& doc) { detail::write_file(path, doc.str()); }

inline KeyValueDoc load_doc(const std::string& path) { return KeyValueDoc::parse(detail::read_file(path), path); }

// ---------------------------------------------------------------------------
// Base models: <prefix>_users.tmce, <prefix>_items.tmce, <prefix>_model.txt

struct ModelArtifactInfo {
  std::uint64_t seed = 0;
  std::vector<double> loss_curve;
};

struct LoadedModel {
  BaseModel model;
  std::vector<std::string> user_ids;
  std::vector<std::string> item_ids;
  ModelArtifactInfo info;
};

inline std::string model_path(const std::filesystem::path& dir, const std::string& prefix, std::string_view what) {
  return (dir / (prefix + "_" + std::string(what))).string();
}

inline void save_model(const std::filesystem::path& dir, const std::string& prefix, const BaseModel& model,
                       const InteractionDataset& data, const ModelArtifactInfo& info) {
  if (model.user_embeddings.rows() != data.num_users() || model.item_embeddings.rows() != data.num_items()) {
    throw ArgumentError("save_model: model shape does not match dataset");
  }
  save_embeddings(model_path(dir, prefix, "users.tmce"), model.user_embeddings, data.users().ids());
  save_embeddings(model_path(dir, prefix, "items.tmce"), model.item_embeddings, data.items().ids());
  KeyValueDoc doc;
  doc.set("kind", std::string(to_string(model.spec.kind)));
  doc.set("margin", format_double(model.spec.margin));
  doc.set("dim", std::to_string(model.dim()));
  doc.set("seed", std::to_string(info.seed));
  doc.set("epochs", std::to_string(info.loss_curve.size()));
  doc.set("loss_curve", join_doubles(info.loss_curve));
  save_doc(model_path(dir, prefix, "model.txt"), doc);
}

inline std::vector<double> parse_doubles(const std::string& csv, const std::string& context) {
  std::vector<double> out;
  if (csv.empty()) return out;
  std::istringstream in(csv);
  std::string tok;
  while (std::getline(in, tok, ',')) {
    try {
      out.push_back(std::stod(tok));
    } catch (const std::exception&) {
      throw DataError(context + ": bad number '" + tok + "'");
    }
  }
  return out;
}

inline LoadedModel load_model(const std::filesystem::path& dir, const std::string& prefix) {
  const auto meta_path = model_path(dir, prefix, "model.txt");
  if (!std::filesystem::exists(meta_path)) {
    throw IoError("file not found: " + meta_path + " (run 'pretrain --domain " + prefix + "' first)");
  }
  const KeyValueDoc doc = load_doc(meta_path);
  LoadedModel out;
  out.model.spec.kind = parse_model_kind(doc.get("kind", meta_path));
  out.model.spec.margin = std::stod(doc.get("margin", meta_path));
  out.info.seed = std::stoull(doc.get("seed", meta_path));
  out.info.loss_curve = parse_doubles(doc.get("loss_curve", meta_path), meta_path);
  auto users = load_embeddings(model_path(dir, prefix, "users.tmce"));
  auto items = load_embeddings(model_path(dir, prefix, "items.tmce"));
  const auto dim = std::stoull(doc.get("dim", meta_path));
  if (users.values.cols() != dim || items.values.cols() != dim) {
    throw DataError(meta_path + ": embedding dims disagree with metadata");
  }
  out.model.user_embeddings = std::move(users.values);
  out.model.item_embeddings = std::move(items.values);
  out.user_ids = std::move(users.ids);
  out.item_ids = std::move(items.ids);
  return out;
}

// ---------------------------------------------------------------------------
// Affine networks: d + 1 rows of width d (rows of W, then b).

inline std::vector<std::string> affine_row_ids(std::size_t d) {
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < d; ++i) ids.push_back("W[" + std::to_string(i) + "]");
  ids.push_back("b");
  return ids;
}

inline Matrix affine_to_rows(const AffineMap& net) {
  const std::size_t d = net.dim;
  Matrix m(d + 1, d);
  std::copy(net.params.values().begin(), net.params.values().end(), m.data().begin());
  return m;
}

inline AffineMap affine_from_rows(const Matrix& m) {
  const std::size_t d = m.cols();
  if (m.rows() != d + 1) throw DataError("network file must have dim + 1 rows");
  AffineMap net = AffineMap::zeros(d);
  std::copy(m.data().begin(), m.data().end(), net.params.values().begin());
  return net;
}

inline void save_network(const std::string& path, const AffineMap& net, const KeyValueDoc& meta) {
  save_embeddings(path, affine_to_rows(net), affine_row_ids(net.dim));
  save_doc(path + ".txt", meta);
}

inline AffineMap load_network(const std::string& path) {
  if (!std::filesystem::exists(path)) throw IoError("file not found: " + path);
  return affine_from_rows(load_embeddings(path).values);
}

// ---------------------------------------------------------------------------
// Reports and split manifests

inline KeyValueDoc report_doc(const std::string& method, const EvalReport& report,
                              const std::vector<std::pair<std::string, std::string>>& extra) {
  KeyValueDoc doc;
  doc.set("method", method);
  for (const auto& [k, v] : extra) doc.set(k, v);
  doc.set("k", std::to_string(report.k));
  doc.set("auc", format_double(report.auc));
  doc.set("ndcg_at_k", format_double(report.ndcg_at_k));
  doc.set("num_users", std::to_string(report.num_users));
  doc.set("num_evaluated", std::to_string(report.per_user.size()));
  doc.set("num_skipped", std::to_string(report.num_skipped));
  std::vector<std::string> rows{"user\tauc\tndcg"};
  for (const auto& m : report.per_user) rows.push_back(m.user + "\t" + format_double(m.auc) + "\t" + format_double(m.ndcg));
  doc.sections.emplace_back("per_user", std::move(rows));
  if (!report.errors.empty()) doc.sections.emplace_back("errors", report.errors);
  return doc;
}

struct SplitManifest {
  double ratio = 0.0;
  std::uint64_t seed = 0;
  std::vector<std::string> train_ids;
  std::vector<std::string> test_ids;
};

inline KeyValueDoc manifest_doc(const ColdStartSplit& split) {
  KeyValueDoc doc;
  doc.set("ratio", format_double(split.ratio));
  doc.set("seed", std::to_string(split.seed));
  doc.set("num_train", std::to_string(split.train_overlap.size()));
  doc.set("num_test", std::to_string(split.test_overlap.size()));
  std::vector<std::string> train, test;
  for (const auto& u : split.train_overlap.users) train.push_back(u.external_id);
  for (const auto& u : split.test_overlap.users) test.push_back(u.external_id);
  doc.sections.emplace_back("train", std::move(train));
  doc.sections.emplace_back("test", std::move(test));
  return doc;
}

inline SplitManifest load_manifest(const std::string& path) {
  if (!std::filesystem::exists(path)) throw IoError("file not found: " + path + " (run 'split' first)");
  const KeyValueDoc doc = load_doc(path);
  SplitManifest m;
  m.ratio = std::stod(doc.get("ratio", path));
  m.seed = std::stoull(doc.get("seed", path));
  const auto* train = doc.section("train");
  const auto* test = doc.section("test");
  if (!train || !test) throw DataError(path + ": missing [train] or [test] section");
  for (const auto& l : *train) {
    if (!l.empty()) m.train_ids.push_back(l);
  }
  for (const auto& l : *test) {
    if (!l.empty()) m.test_ids.push_back(l);
  }
  return m;
}

}  // namespace tmcdr
