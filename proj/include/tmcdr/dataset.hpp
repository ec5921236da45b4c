#pragma once

// Two-domain implicit-feedback data: loading, dense indexing, overlap
// detection, cold-start splits and uniform negative sampling.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "tmcdr/error.hpp"

namespace tmcdr {

using Rng = std::mt19937_64;

/// Bidirectional map between external string ids and dense indices.
/// Indices are assigned in first-appearance order.
class IdIndex {
 public:
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  std::size_t get_or_insert(const std::string& id) {
    auto [it, inserted] = index_.try_emplace(id, ids_.size());
    if (inserted) ids_.push_back(id);
    return it->second;
  }

  std::size_t find(const std::string& id) const {
    auto it = index_.find(id);
    return it == index_.end() ? npos : it->second;
  }

  bool contains(const std::string& id) const { return index_.contains(id); }
  const std::string& id(std::size_t idx) const { return ids_.at(idx); }
  const std::vector<std::string>& ids() const noexcept { return ids_; }
  std::size_t size() const noexcept { return ids_.size(); }

  bool operator==(const IdIndex& other) const { return ids_ == other.ids_; }

 private:
  std::vector<std::string> ids_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct Interaction {
  std::size_t user;
  std::size_t item;
  bool operator==(const Interaction&) const = default;
};

/// One domain's binarized interactions. Immutable once built.
class InteractionDataset {
 public:
  InteractionDataset() = default;
  explicit InteractionDataset(std::string domain_id) : domain_id_(std::move(domain_id)) {}

  /// Adds a label-1 interaction; duplicates collapse. Returns false for a duplicate.
  bool add(const std::string& user_id, const std::string& item_id) {
    const std::size_t u = users_.get_or_insert(user_id);
    const std::size_t i = items_.get_or_insert(item_id);
    if (u >= per_user_.size()) per_user_.resize(u + 1);
    auto& row = per_user_[u];
    auto pos = std::lower_bound(row.begin(), row.end(), i);
    if (pos != row.end() && *pos == i) return false;
    row.insert(pos, i);
    interactions_.push_back({u, i});
    return true;
  }

  /// Registers a user without interactions (keeps its dense index reserved).
  std::size_t add_user(const std::string& user_id) {
    const std::size_t u = users_.get_or_insert(user_id);
    if (u >= per_user_.size()) per_user_.resize(u + 1);
    return u;
  }

  std::size_t add_item(const std::string& item_id) { return items_.get_or_insert(item_id); }

  const std::string& domain_id() const noexcept { return domain_id_; }
  const IdIndex& users() const noexcept { return users_; }
  const IdIndex& items() const noexcept { return items_; }
  const std::vector<Interaction>& interactions() const noexcept { return interactions_; }
  std::size_t num_users() const noexcept { return users_.size(); }
  std::size_t num_items() const noexcept { return items_.size(); }
  bool empty() const noexcept { return interactions_.empty(); }

  /// Sorted item indices the user interacted with.
  const std::vector<std::size_t>& user_items(std::size_t user) const { return per_user_.at(user); }

  bool has_interaction(std::size_t user, std::size_t item) const {
    const auto& row = per_user_.at(user);
    return std::binary_search(row.begin(), row.end(), item);
  }

  bool operator==(const InteractionDataset&) const = default;

 private:
  std::string domain_id_;
  IdIndex users_;
  IdIndex items_;
  std::vector<Interaction> interactions_;
  std::vector<std::vector<std::size_t>> per_user_;
};

enum class FileFormat { tsv, csv };

inline FileFormat format_from_path(std::string_view path) {
  if (path.size() >= 4 && path.substr(path.size() - 4) == ".csv") return FileFormat::csv;
  return FileFormat::tsv;
}

namespace detail {

inline std::vector<std::string_view> split_fields(std::string_view line, char delim) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(delim, start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? pos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::string_view trim(std::string_view s) {
  const auto ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

}  // namespace detail

/// Parses rows of (user_id, item_id, rating, [extra...]). Rows with rating > 0
/// become interactions; '#' lines and blank lines are skipped.
inline InteractionDataset read_interactions(std::istream& in, FileFormat format,
                                            std::string domain_id,
                                            const std::string& source_name = "<stream>") {
  const char delim = format == FileFormat::csv ? ',' : '\t';
  InteractionDataset ds(std::move(domain_id));
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view view = line;
    if (!view.empty() && view.back() == '\r') view.remove_suffix(1);
    if (detail::trim(view).empty() || view.front() == '#') continue;
    const auto fields = detail::split_fields(view, delim);
    if (fields.size() < 3) {
      throw ParseError(source_name, lineno, "expected at least 3 fields (user, item, rating)");
    }
    const auto user = detail::trim(fields[0]);
    const auto item = detail::trim(fields[1]);
    const std::string rating_str(detail::trim(fields[2]));
    if (user.empty() || item.empty()) throw ParseError(source_name, lineno, "empty user or item id");
    double rating = 0.0;
    std::size_t consumed = 0;
    try {
      rating = std::stod(rating_str, &consumed);
    } catch (const std::exception&) {
      throw ParseError(source_name, lineno, "rating is not a number: '" + rating_str + "'");
    }
    if (consumed != rating_str.size() || !std::isfinite(rating)) {
      throw ParseError(source_name, lineno, "rating is not a number: '" + rating_str + "'");
    }
    if (rating > 0.0) ds.add(std::string(user), std::string(item));
  }
  if (ds.empty()) throw EmptyDatasetError(source_name + ": no interactions");
  return ds;
}

inline InteractionDataset load_interactions(const std::string& path, FileFormat format,
                                            std::string domain_id = {}) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open interaction file: " + path);
  return read_interactions(in, format, domain_id.empty() ? path : std::move(domain_id), path);
}

/// Writes the dataset as binarized rows (user, item, 1) in interaction order.
inline void write_interactions(std::ostream& out, const InteractionDataset& ds, FileFormat format) {
  const char delim = format == FileFormat::csv ? ',' : '\t';
  for (const auto& x : ds.interactions()) {
    out << ds.users().id(x.user) << delim << ds.items().id(x.item) << delim << "1\n";
  }
}

inline void save_interactions(const std::string& path, const InteractionDataset& ds, FileFormat format) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write interaction file: " + path);
  write_interactions(out, ds, format);
  if (!out) throw IoError("write failed: " + path);
}

struct OverlapUser {
  std::size_t source_index;
  std::size_t target_index;
  std::string external_id;
  bool operator==(const OverlapUser&) const = default;
};

struct OverlapSet {
  std::vector<OverlapUser> users;

  std::size_t size() const noexcept { return users.size(); }
  bool empty() const noexcept { return users.empty(); }
  bool operator==(const OverlapSet&) const = default;
};

/// Users present in both domains, in source index order.
inline OverlapSet find_overlap(const InteractionDataset& source, const InteractionDataset& target) {
  OverlapSet out;
  for (std::size_t s = 0; s < source.num_users(); ++s) {
    const auto& id = source.users().id(s);
    const std::size_t t = target.users().find(id);
    if (t != IdIndex::npos) out.users.push_back({s, t, id});
  }
  if (out.empty()) {
    throw EmptyOverlapError("no overlapping users between '" + source.domain_id() + "' and '" +
                            target.domain_id() + "'");
  }
  return out;
}

/// Resolves a list of external ids against both domains. Unknown ids are lookup errors.
inline OverlapSet resolve_overlap(const std::vector<std::string>& ids, const InteractionDataset& source,
                                  const InteractionDataset& target) {
  OverlapSet out;
  for (const auto& id : ids) {
    const std::size_t s = source.users().find(id);
    const std::size_t t = target.users().find(id);
    if (s == IdIndex::npos || t == IdIndex::npos) {
      throw LookupError("user '" + id + "' is not present in both domains");
    }
    out.users.push_back({s, t, id});
  }
  return out;
}

struct ColdStartSplit {
  OverlapSet train_overlap;
  OverlapSet test_overlap;
  std::uint64_t seed = 0;
  double ratio = 0.0;
};

/// Round half up; 178.8 -> 179, 2.5 -> 3.
inline std::size_t round_half_up(double x) { return static_cast<std::size_t>(std::floor(x + 0.5)); }

inline ColdStartSplit split_cold_start(const OverlapSet& overlap, double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw ArgumentError("split ratio must lie in (0, 1)");
  if (overlap.size() < 2) throw SplitError("need at least 2 overlapping users to split");
  const std::size_t n = overlap.size();
  const std::size_t n_test = round_half_up(ratio * static_cast<double>(n));
  if (n_test == 0 || n_test >= n) {
    throw SplitError("split of " + std::to_string(n) + " users at ratio " + std::to_string(ratio) +
                     " leaves an empty side");
  }
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  ColdStartSplit split;
  split.seed = seed;
  split.ratio = ratio;
  // Each side keeps the input order so manifests are stable.
  std::vector<char> is_test(n, 0);
  for (std::size_t i = 0; i < n_test; ++i) is_test[order[i]] = 1;
  for (std::size_t i = 0; i < n; ++i) {
    (is_test[i] ? split.test_overlap : split.train_overlap).users.push_back(overlap.users[i]);
  }
  return split;
}

struct TrainingSample {
  std::size_t user;
  std::size_t pos_item;
  std::vector<std::size_t> neg_items;
  bool operator==(const TrainingSample&) const = default;
};

/// Draws k distinct items uniformly from the items the user has not interacted with.
inline std::vector<std::size_t> sample_negatives(const InteractionDataset& ds, std::size_t user,
                                                 std::size_t k, Rng& rng) {
  if (k == 0) throw ArgumentError("negative sample count must be >= 1");
  const auto& seen = ds.user_items(user);
  const std::size_t n_items = ds.num_items();
  const std::size_t n_candidates = n_items - seen.size();
  if (n_candidates == 0) {
    throw SamplingError("user '" + ds.users().id(user) + "' has no negative candidates");
  }
  if (n_candidates < k) {
    throw SamplingError("user '" + ds.users().id(user) + "' has " + std::to_string(n_candidates) +
                        " negative candidates, need " + std::to_string(k));
  }

  std::vector<std::size_t> out;
  out.reserve(k);
  if (n_candidates < 4 * k || seen.size() * 2 > n_items) {
    // Dense user: enumerate the complement and take a partial Fisher-Yates prefix.
    std::vector<std::size_t> pool;
    pool.reserve(n_candidates);
    for (std::size_t i = 0, j = 0; i < n_items; ++i) {
      if (j < seen.size() && seen[j] == i) {
        ++j;
        continue;
      }
      pool.push_back(i);
    }
    for (std::size_t i = 0; i < k; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
      std::swap(pool[i], pool[pick(rng)]);
      out.push_back(pool[i]);
    }
    return out;
  }
  std::uniform_int_distribution<std::size_t> pick(0, n_items - 1);
  while (out.size() < k) {
    const std::size_t cand = pick(rng);
    if (std::binary_search(seen.begin(), seen.end(), cand)) continue;
    if (std::find(out.begin(), out.end(), cand) != out.end()) continue;
    out.push_back(cand);
  }
  return out;
}

/// Copy of the dataset with every interaction of the given users removed. User
/// and item indices are preserved so embedding rows stay aligned.
inline InteractionDataset without_user_interactions(const InteractionDataset& ds,
                                                    const std::unordered_set<std::string>& drop) {
  InteractionDataset out(ds.domain_id());
  for (const auto& id : ds.users().ids()) out.add_user(id);
  for (const auto& id : ds.items().ids()) out.add_item(id);
  for (const auto& x : ds.interactions()) {
    const auto& uid = ds.users().id(x.user);
    if (!drop.contains(uid)) out.add(uid, ds.items().id(x.item));
  }
  return out;
}

}  // namespace tmcdr
