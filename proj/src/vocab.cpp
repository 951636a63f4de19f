// SPDX-License-Identifier: Apache-2.0

#include "dx/vocab.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <fstream>
#include <sstream>

#include "dx/error.hpp"

namespace dx {
namespace {

// UTF-8 sequences folded to an ASCII apostrophe.
constexpr std::array<std::string_view, 10> kQuoteLike = {
    "\xE2\x80\x98",  // U+2018 left single quotation mark
    "\xE2\x80\x99",  // U+2019 right single quotation mark
    "\xE2\x80\x9A",  // U+201A single low-9 quotation mark
    "\xE2\x80\x9B",  // U+201B single high-reversed-9 quotation mark
    "\xE2\x80\x9C",  // U+201C left double quotation mark
    "\xE2\x80\x9D",  // U+201D right double quotation mark
    "\xE2\x80\x9E",  // U+201E double low-9 quotation mark
    "\xE2\x80\xB2",  // U+2032 prime
    "\xCA\xBC",      // U+02BC modifier letter apostrophe
    "\xC2\xB4",      // U+00B4 acute accent
};

constexpr std::string_view kNoBreakSpace = "\xC2\xA0";

bool is_ascii_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' ||
         c == '\v';
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(s.substr(start));
      return out;
    }
    out.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

}  // namespace

std::string normalize(std::string_view raw) {
  std::string out;
  out.reserve(raw.size());
  bool pending_space = false;
  std::size_t i = 0;
  while (i < raw.size()) {
    const char c = raw[i];
    if (is_ascii_space(c)) {
      pending_space = true;
      ++i;
      continue;
    }
    if (raw.substr(i).starts_with(kNoBreakSpace)) {
      pending_space = true;
      i += kNoBreakSpace.size();
      continue;
    }
    char emit = c;
    std::size_t width = 1;
    for (const auto q : kQuoteLike) {
      if (raw.substr(i).starts_with(q)) {
        emit = '\'';
        width = q.size();
        break;
      }
    }
    if (width == 1 && c >= 'A' && c <= 'Z') emit = static_cast<char>(c - 'A' + 'a');
    if (pending_space && !out.empty()) out.push_back(' ');
    pending_space = false;
    if (width == 1) {
      out.push_back(emit);
    } else {
      out.push_back('\'');
    }
    i += width;
  }
  return out;
}

Vocabulary::Vocabulary(std::vector<PathologyEntry> entries)
    : entries_(std::move(entries)) {
  std::sort(entries_.begin(), entries_.end(),
            [](const auto& a, const auto& b) { return a.id < b.id; });
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    auto& e = entries_[i];
    if (e.id <= 0) {
      throw Error(ErrorCode::kMalformedFile,
                  "pathology id must be positive: " + std::to_string(e.id));
    }
    if (!by_id_.emplace(e.id, i).second) {
      throw Error(ErrorCode::kMalformedFile,
                  "duplicate pathology id " + std::to_string(e.id));
    }
    e.canonical_name = normalize(e.canonical_name);
    if (e.canonical_name.empty()) {
      throw Error(ErrorCode::kMalformedFile,
                  "empty canonical name for id " + std::to_string(e.id));
    }
    if (!index_.emplace(e.canonical_name, i).second) {
      throw Error(ErrorCode::kDuplicateName, e.canonical_name);
    }
  }
  // Aliases go in after every canonical name so that an alias shadowing a
  // later entry's canonical name is caught regardless of order.
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    for (auto& alias : entries_[i].aliases) {
      alias = normalize(alias);
      if (alias.empty()) continue;
      const auto [it, inserted] = index_.emplace(alias, i);
      if (!inserted && it->second != i) {
        throw Error(ErrorCode::kDuplicateName,
                    "alias '" + alias + "' already names " +
                        entries_[it->second].canonical_name);
      }
    }
    auto& aliases = entries_[i].aliases;
    std::erase_if(aliases, [&](const std::string& a) {
      return a.empty() || a == entries_[i].canonical_name;
    });
    std::sort(aliases.begin(), aliases.end());
    aliases.erase(std::unique(aliases.begin(), aliases.end()), aliases.end());
  }
}

const PathologyEntry* Vocabulary::lookup(std::string_view name) const {
  const auto it = index_.find(normalize(name));
  return it == index_.end() ? nullptr : &entries_[it->second];
}

const PathologyEntry* Vocabulary::by_id(PathologyId id) const {
  const auto it = by_id_.find(id);
  return it == by_id_.end() ? nullptr : &entries_[it->second];
}

std::vector<std::string> Vocabulary::canonical_names() const {
  std::vector<std::string> names;
  names.reserve(entries_.size());
  for (const auto& e : entries_) names.push_back(e.canonical_name);
  return names;
}

Vocabulary parse_vocabulary(std::string_view text,
                            const VocabularyLoadOptions& options) {
  std::vector<PathologyEntry> entries;
  std::size_t line_no = 0;
  for (auto line : split(text, '\n')) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty() || line.front() == '#') continue;
    const auto fields = split(line, '\t');
    if (fields.size() < 3 || fields.size() > 4) {
      throw Error(ErrorCode::kMalformedFile,
                  "line " + std::to_string(line_no) + ": expected 3 or 4 tab-separated fields");
    }
    PathologyEntry entry;
    const auto id_field = fields[0];
    const auto [ptr, ec] = std::from_chars(
        id_field.data(), id_field.data() + id_field.size(), entry.id);
    if (ec != std::errc{} || ptr != id_field.data() + id_field.size()) {
      throw Error(ErrorCode::kMalformedFile,
                  "line " + std::to_string(line_no) + ": bad id '" +
                      std::string(id_field) + "'");
    }
    entry.canonical_name = std::string(fields[1]);
    entry.category = std::string(fields[2]);
    if (fields.size() == 4 && !fields[3].empty()) {
      for (const auto alias : split(fields[3], '|')) {
        if (!alias.empty()) entry.aliases.emplace_back(alias);
      }
    }
    entries.push_back(std::move(entry));
  }
  Vocabulary vocab(std::move(entries));
  if (options.expected_count && vocab.size() != *options.expected_count) {
    throw Error(ErrorCode::kBadCount,
                "expected " + std::to_string(*options.expected_count) +
                    " entries, found " + std::to_string(vocab.size()));
  }
  return vocab;
}

Vocabulary load_vocabulary(const std::filesystem::path& path,
                           const VocabularyLoadOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorCode::kIoError, "cannot open " + path.string());
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_vocabulary(buf.str(), options);
}

std::string serialize_vocabulary(const Vocabulary& vocab) {
  std::string out = "# id\tcanonical_name\tcategory\taliases\n";
  for (const auto& e : vocab.entries()) {
    out += std::to_string(e.id);
    out += '\t';
    out += e.canonical_name;
    out += '\t';
    out += e.category;
    out += '\t';
    for (std::size_t i = 0; i < e.aliases.size(); ++i) {
      if (i) out += '|';
      out += e.aliases[i];
    }
    out += '\n';
  }
  return out;
}

}  // namespace dx
