// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace dx {

using PathologyId = int;

/// Number of pathologies listed in data/vocabulary.tsv.
inline constexpr std::size_t kListedPathologyCount = 120;

struct PathologyEntry {
  PathologyId id = 0;
  std::string canonical_name;
  std::string category;
  std::vector<std::string> aliases;

  bool operator==(const PathologyEntry&) const = default;
};

/// Case-folds, trims, collapses whitespace runs and maps typographic
/// apostrophes/quotes to '\''. Idempotent.
std::string normalize(std::string_view raw);

/// Immutable after construction; safe for concurrent reads.
class Vocabulary {
 public:
  Vocabulary() = default;

  /// Validates uniqueness of names and aliases; throws DuplicateName or
  /// MalformedFile. Entries are kept in ascending id order.
  explicit Vocabulary(std::vector<PathologyEntry> entries);

  const std::vector<PathologyEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

  /// Exact match after normalization against canonical names and aliases.
  /// Returns nullptr for out-of-vocabulary names; never approximates.
  const PathologyEntry* lookup(std::string_view name) const;

  /// Entry by id; nullptr if unknown.
  const PathologyEntry* by_id(PathologyId id) const;

  /// Canonical names in id order.
  std::vector<std::string> canonical_names() const;

  bool operator==(const Vocabulary& other) const {
    return entries_ == other.entries_;
  }

 private:
  std::vector<PathologyEntry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
  std::unordered_map<PathologyId, std::size_t> by_id_;
};

struct VocabularyLoadOptions {
  /// When set, the entry count must equal this value (BadCount otherwise).
  std::optional<std::size_t> expected_count;
};

Vocabulary parse_vocabulary(std::string_view text,
                            const VocabularyLoadOptions& options = {});
Vocabulary load_vocabulary(const std::filesystem::path& path,
                           const VocabularyLoadOptions& options = {});

/// Renders the tab-separated file format; parse_vocabulary inverts it.
std::string serialize_vocabulary(const Vocabulary& vocab);

}  // namespace dx
