#pragma once

// Offline assembly-to-source matching against a local corpus.
//
// Source files are tokenized C-style into string literals (STR), numeric
// constants (CONST) and identifiers (IDENT). Listings contribute STR from
// referenced strings, CONST from immediates and API from imported calls; an
// API feature is looked up as an identifier. Identifiers and API names are
// lowercased with a Windows ANSI/wide suffix removed ("CreateFileW" and
// "CreateFile" both become "createfile").

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "vtriage/asm_model.hpp"
#include "vtriage/parallel.hpp"

namespace vtriage {

enum class SourceFeatureKind { str, constant, api, ident };

inline std::string to_string(SourceFeatureKind k) {
  switch (k) {
    case SourceFeatureKind::str: return "STR";
    case SourceFeatureKind::constant: return "CONST";
    case SourceFeatureKind::api: return "API";
    case SourceFeatureKind::ident: return "IDENT";
  }
  return "?";
}

struct SourceFeature {
  SourceFeatureKind kind = SourceFeatureKind::ident;
  std::string value;

  auto operator<=>(const SourceFeature&) const = default;
  bool operator==(const SourceFeature&) const = default;
};

inline std::string to_string(const SourceFeature& f) {
  return to_string(f.kind) + ":" + (f.kind == SourceFeatureKind::str ? "\"" + detail::escape_literal(f.value) + "\"" : f.value);
}

using FeatureSet = std::set<SourceFeature>;

struct Posting {
  std::uint32_t file = 0;
  std::uint32_t count = 0;

  bool operator==(const Posting&) const = default;
};

struct CorpusIndex {
  std::vector<std::string> files;  // paths relative to the corpus root, sorted
  std::map<SourceFeature, std::vector<Posting>> postings;
  std::map<std::string, std::string> file_project;
  std::map<std::string, std::string> project_category;

  bool operator==(const CorpusIndex&) const = default;
};

struct FileScore {
  std::string file;
  double score = 0.0;

  bool operator==(const FileScore&) const = default;
};

struct MatchReport {
  std::map<std::string, std::vector<FileScore>> per_function;
  std::map<std::string, double> project_rollup;
  std::map<std::string, double> category_shares;

  bool empty() const { return per_function.empty(); }
};

enum class MatchScorer {
  idf,      // sum of log(1 + files / df) over shared features
  overlap,  // number of shared features
};

struct SourceMapping {
  std::map<std::string, std::string> file_project;
  std::map<std::string, std::string> project_category;
};

inline constexpr std::uint64_t kDefaultConstThreshold = 0x100;
inline constexpr const char* kUnknownProject = "unknown";
inline constexpr const char* kUncategorized = "uncategorized";

namespace detail {

inline std::string normalize_identifier(std::string_view name) {
  if (name.size() >= 2 && (name.back() == 'A' || name.back() == 'W') &&
      std::islower(static_cast<unsigned char>(name[name.size() - 2])))
    name.remove_suffix(1);
  return lowercase(name);
}

inline std::string canonical_constant(std::uint64_t v) {
  std::ostringstream os;
  os << "0x" << std::hex << v;
  return os.str();
}

inline bool is_ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
inline bool is_ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

inline bool is_keyword(std::string_view s) {
  static const std::set<std::string_view> words = {
      "auto",   "break",  "case",    "char",     "const",  "continue", "default", "do",     "double",
      "else",   "enum",   "extern",  "float",    "for",    "goto",     "if",      "int",    "long",
      "return", "short",  "signed",  "sizeof",   "static", "struct",   "switch",  "typedef", "union",
      "unsigned", "void", "volatile", "while",   "class",  "public",   "private", "protected", "namespace",
      "template", "typename", "include", "define", "ifdef", "ifndef", "endif", "pragma", "true", "false",
      "null",   "nullptr", "this",   "new",      "delete", "bool"};
  return words.count(s) != 0;
}

}  // namespace detail

/// Features of one source text with occurrence counts.
inline std::map<SourceFeature, std::uint32_t> tokenize_source(std::string_view text,
                                                              std::uint64_t const_threshold = kDefaultConstThreshold) {
  std::map<SourceFeature, std::uint32_t> out;
  std::size_t i = 0;
  const auto n = text.size();
  while (i < n) {
    const char c = text[i];
    if (c == '/' && i + 1 < n && text[i + 1] == '/') {
      while (i < n && text[i] != '\n') ++i;
    } else if (c == '/' && i + 1 < n && text[i + 1] == '*') {
      const auto end = text.find("*/", i + 2);
      i = end == std::string_view::npos ? n : end + 2;
    } else if (c == '"' || c == '\'') {
      std::string value;
      ++i;
      while (i < n && text[i] != c && text[i] != '\n') {
        if (text[i] == '\\' && i + 1 < n) {
          const char e = text[++i];
          switch (e) {
            case 'n': value += '\n'; break;
            case 't': value += '\t'; break;
            case 'r': value += '\r'; break;
            case '0': value += '\0'; break;
            case 'x': {
              std::size_t j = i + 1;
              while (j < n && j < i + 3 && std::isxdigit(static_cast<unsigned char>(text[j]))) ++j;
              value += static_cast<char>(detail::parse_hex(text.substr(i + 1, j - i - 1)).value_or(0));
              i = j - 1;
              break;
            }
            default: value += e;
          }
          ++i;
        } else {
          value += text[i++];
        }
      }
      if (i < n && text[i] == c) ++i;
      // Single-quoted one-character literals are C character constants.
      if (!value.empty() && (c == '"' || value.size() > 1)) ++out[{SourceFeatureKind::str, value}];
    } else if (std::isdigit(static_cast<unsigned char>(c))) {
      const auto start = i;
      while (i < n && (detail::is_ident_char(text[i]) || text[i] == '.')) ++i;
      auto tok = detail::lowercase(text.substr(start, i - start));
      if (tok.find('.') != std::string::npos) continue;  // floating point
      while (!tok.empty() && (tok.back() == 'u' || tok.back() == 'l')) tok.pop_back();
      const auto v = detail::parse_immediate(tok);
      if (v && *v >= const_threshold) ++out[{SourceFeatureKind::constant, detail::canonical_constant(*v)}];
    } else if (detail::is_ident_start(c)) {
      const auto start = i;
      while (i < n && detail::is_ident_char(text[i])) ++i;
      auto id = detail::normalize_identifier(text.substr(start, i - start));
      if (!detail::is_keyword(id)) ++out[{SourceFeatureKind::ident, id}];
    } else {
      ++i;
    }
  }
  return out;
}

/// Per-function features of a listing, keyed by function name.
inline std::map<std::string, FeatureSet> extract_asm_features(const Listing& l,
                                                              std::uint64_t const_threshold = kDefaultConstThreshold) {
  std::map<std::string, FeatureSet> out;
  for (const auto& f : l.functions) {
    auto& set = out[f.name];
    for (auto idx : f.string_refs) {
      auto it = l.strings.find(idx);
      if (it != l.strings.end()) set.insert({SourceFeatureKind::str, it->second});
    }
    for (const auto& ins : f.instructions)
      for (const auto& op : ins.operands)
        if (op.kind == OperandKind::imm && op.value && *op.value >= const_threshold)
          set.insert({SourceFeatureKind::constant, detail::canonical_constant(*op.value)});
    for (const auto& api : f.api_calls) set.insert({SourceFeatureKind::api, detail::normalize_identifier(api)});
  }
  return out;
}

/// Mapping document: `path -> project` and `project => category` lines,
/// '#' comments. Throws ParseError on malformed or conflicting lines.
inline SourceMapping parse_mapping(std::string_view text) {
  SourceMapping m;
  std::size_t line_no = 0, pos = 0;
  while (pos <= text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    auto line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    auto assign = [&](std::map<std::string, std::string>& into, std::string_view sep) {
      const auto at = line.find(sep);
      auto key = std::string(detail::trim(line.substr(0, at)));
      auto value = std::string(detail::trim(line.substr(at + sep.size())));
      if (key.empty() || value.empty()) throw ParseError(line_no, "empty name in mapping");
      auto [it, inserted] = into.emplace(key, value);
      if (!inserted && it->second != value) throw ParseError(line_no, "conflicting mapping for '" + key + "'");
    };
    if (line.find("->") != std::string_view::npos)
      assign(m.file_project, "->");
    else if (line.find("=>") != std::string_view::npos)
      assign(m.project_category, "=>");
    else
      throw ParseError(line_no, "expected 'path -> project' or 'project => category'");
  }
  return m;
}

/// Builds an index from in-memory sources (path -> text).
inline CorpusIndex build_index(const std::map<std::string, std::string>& sources, const SourceMapping& mapping,
                               unsigned threads = 1, std::uint64_t const_threshold = kDefaultConstThreshold) {
  CorpusIndex idx;
  std::vector<const std::string*> texts;
  for (const auto& [path, text] : sources) {
    idx.files.push_back(path);
    texts.push_back(&text);
  }
  std::vector<std::map<SourceFeature, std::uint32_t>> per_file(texts.size());
  parallel_for(texts.size(), threads, [&](unsigned, std::size_t i) { per_file[i] = tokenize_source(*texts[i], const_threshold); });
  for (std::uint32_t i = 0; i < per_file.size(); ++i)
    for (const auto& [feature, count] : per_file[i]) idx.postings[feature].push_back({i, count});
  for (const auto& path : idx.files) {
    auto it = mapping.file_project.find(path);
    idx.file_project[path] = it == mapping.file_project.end() ? kUnknownProject : it->second;
  }
  idx.project_category = mapping.project_category;
  return idx;
}

namespace detail {

inline bool looks_binary(const std::string& data) { return data.find('\0') != std::string::npos; }

}  // namespace detail

/// Builds an index from every text file under `root`. Unreadable and binary
/// files are skipped and reported through `warnings`.
inline CorpusIndex build_index(const std::filesystem::path& root, const SourceMapping& mapping,
                               std::vector<std::string>* warnings = nullptr, unsigned threads = 1,
                               std::uint64_t const_threshold = kDefaultConstThreshold) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(root)) throw std::runtime_error("corpus root is not a directory: " + root.string());
  std::vector<fs::path> paths;
  for (auto it = fs::recursive_directory_iterator(root, fs::directory_options::skip_permission_denied);
       it != fs::recursive_directory_iterator(); ++it)
    if (it->is_regular_file()) paths.push_back(it->path());
  std::map<std::string, std::string> sources;
  for (const auto& p : paths) {
    const auto rel = p.lexically_relative(root).generic_string();
    std::ifstream in(p, std::ios::binary);
    std::ostringstream buf;
    if (!in || !(buf << in.rdbuf())) {
      // Empty files also fail the stream copy; only report real failures.
      if (in && fs::file_size(p) == 0) {
        sources.emplace(rel, std::string());
        continue;
      }
      if (warnings) warnings->push_back("skipped unreadable file " + rel);
      continue;
    }
    auto text = buf.str();
    if (detail::looks_binary(text)) {
      if (warnings) warnings->push_back("skipped binary file " + rel);
      continue;
    }
    sources.emplace(rel, std::move(text));
  }
  return build_index(sources, mapping, threads, const_threshold);
}

namespace detail {

// Postings key used to look a listing feature up in the corpus.
inline SourceFeature corpus_key(const SourceFeature& f) {
  if (f.kind == SourceFeatureKind::api) return {SourceFeatureKind::ident, f.value};
  return f;
}

}  // namespace detail

/// Ranks corpus files per function and rolls the top-k scores up into
/// projects and categories. Functions with no shared feature are omitted.
inline MatchReport match(const std::map<std::string, FeatureSet>& features, const CorpusIndex& idx, std::size_t k,
                         MatchScorer scorer = MatchScorer::idf) {
  if (k == 0) throw std::invalid_argument("k must be at least 1");
  MatchReport report;
  const double total = static_cast<double>(idx.files.size());
  for (const auto& [fn, set] : features) {
    std::map<std::uint32_t, double> scores;
    std::set<SourceFeature> seen;
    for (const auto& f : set) {
      const auto key = detail::corpus_key(f);
      if (!seen.insert(key).second) continue;
      auto it = idx.postings.find(key);
      if (it == idx.postings.end() || it->second.empty()) continue;
      const double weight =
          scorer == MatchScorer::idf ? std::log(1.0 + total / static_cast<double>(it->second.size())) : 1.0;
      for (const auto& p : it->second) scores[p.file] += weight;
    }
    if (scores.empty()) continue;
    std::vector<FileScore> ranked;
    for (const auto& [file, score] : scores) ranked.push_back({idx.files[file], score});
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const FileScore& a, const FileScore& b) { return a.score > b.score; });
    if (ranked.size() > k) ranked.resize(k);
    for (const auto& r : ranked) {
      auto it = idx.file_project.find(r.file);
      report.project_rollup[it == idx.file_project.end() ? kUnknownProject : it->second] += r.score;
    }
    report.per_function.emplace(fn, std::move(ranked));
  }
  double sum = 0.0;
  for (const auto& [project, score] : report.project_rollup) {
    auto it = idx.project_category.find(project);
    report.category_shares[it == idx.project_category.end() ? kUncategorized : it->second] += score;
    sum += score;
  }
  if (sum > 0.0) {
    for (auto& [_, share] : report.category_shares) share /= sum;
  } else {
    report.category_shares.clear();
  }
  return report;
}

// ---------------------------------------------------------------- persistence

inline constexpr const char* kIndexFormat = "vtriage-source-index";
inline constexpr int kIndexVersion = 1;

inline std::string save_index(const CorpusIndex& idx) {
  using nlohmann::ordered_json;
  auto esc = [](std::string_view v) { return detail::escape_literal(v, true); };
  ordered_json j;
  j["format"] = kIndexFormat;
  j["version"] = kIndexVersion;
  j["files"] = ordered_json::array();
  for (const auto& f : idx.files) j["files"].push_back(esc(f));
  j["file_project"] = ordered_json::object();
  for (const auto& [f, p] : idx.file_project) j["file_project"][esc(f)] = esc(p);
  j["project_category"] = ordered_json::object();
  for (const auto& [p, c] : idx.project_category)
    j["project_category"][esc(p)] = esc(c);
  j["postings"] = ordered_json::array();
  for (const auto& [feature, list] : idx.postings) {
    ordered_json entry;
    entry["kind"] = to_string(feature.kind);
    entry["value"] = esc(feature.value);
    entry["files"] = ordered_json::array();
    for (const auto& p : list) entry["files"].push_back({p.file, p.count});
    j["postings"].push_back(std::move(entry));
  }
  return j.dump(1) + "\n";
}

inline CorpusIndex load_index(std::string_view text) {
  auto fail = [](const std::string& what) -> CorpusIndex { throw std::runtime_error("invalid source index: " + what); };
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    return fail(e.what());
  }
  if (!j.is_object() || j.value("format", "") != kIndexFormat) return fail("missing format header");
  if (j.value("version", 0) != kIndexVersion)
    return fail("unsupported version " + std::to_string(j.value("version", 0)));
  auto unescape = [&](const nlohmann::json& v) {
    auto s = detail::unescape_literal(v.get<std::string>());
    if (!s) fail("bad escape in '" + v.get<std::string>() + "'");
    return *s;
  };
  CorpusIndex idx;
  try {
    for (const auto& f : j.at("files")) idx.files.push_back(unescape(f));
    for (const auto& [f, p] : j.at("file_project").items()) idx.file_project[unescape(f)] = unescape(p);
    for (const auto& [p, c] : j.at("project_category").items()) idx.project_category[unescape(p)] = unescape(c);
    for (const auto& entry : j.at("postings")) {
      SourceFeature f;
      const auto kind = entry.at("kind").get<std::string>();
      if (kind == "STR") f.kind = SourceFeatureKind::str;
      else if (kind == "CONST") f.kind = SourceFeatureKind::constant;
      else if (kind == "IDENT") f.kind = SourceFeatureKind::ident;
      else if (kind == "API") f.kind = SourceFeatureKind::api;
      else fail("unknown feature kind " + kind);
      f.value = unescape(entry.at("value"));
      auto& list = idx.postings[f];
      for (const auto& p : entry.at("files")) {
        const auto file = p.at(0).get<std::uint32_t>();
        if (file >= idx.files.size()) fail("posting refers to file " + std::to_string(file));
        list.push_back({file, p.at(1).get<std::uint32_t>()});
      }
    }
  } catch (const nlohmann::json::exception& e) {
    return fail(e.what());
  }
  return idx;
}

}  // namespace vtriage
