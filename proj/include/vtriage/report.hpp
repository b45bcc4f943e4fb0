#pragma once

// Consolidated triage report: clone metrics, tag histograms, tag alignment,
// residue and, optionally, source matches. JSON is the machine interface; the
// plain-text summary is for terminals. Layout is described in
// docs/report-schema.md.

#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "vtriage/clonedetect.hpp"
#include "vtriage/sourcematch.hpp"
#include "vtriage/tagger.hpp"

namespace vtriage {

inline constexpr const char* kReportSchema = "vtriage-triage-report";
inline constexpr int kReportSchemaVersion = 1;

#ifndef VTRIAGE_VERSION
#define VTRIAGE_VERSION "0.0.0"
#endif

struct InputId {
  std::string binary_id;
  std::string digest;  // fnv1a-64 of the listing text, hex
  std::size_t functions = 0;
  std::size_t instructions = 0;
};

inline InputId identify(const Listing& l, std::string_view text) {
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << detail::fnv1a(text);
  return {l.binary_id, os.str(), l.functions.size(), l.instruction_count()};
}

struct TagParams {
  std::string dictionary = "default";  // "default", or the dictionary text itself
  std::size_t depth = 0;
};

struct SourceParams {
  std::size_t k = 5;
  MatchScorer scorer = MatchScorer::idf;
  std::uint64_t const_threshold = kDefaultConstThreshold;
  std::string index_digest;
};

/// Everything a report is built from. Optional sections are omitted when unset.
struct TriageReport {
  InputId reference;
  InputId target;
  CloneParams clone_params;
  SimilarityReport similarity;
  std::optional<std::vector<ClonePair>> clones;
  std::optional<TagParams> tag_params;
  std::map<std::string, std::size_t> reference_tags;
  std::map<std::string, std::size_t> target_tags;
  std::vector<TagAlignment> alignment;
  std::optional<std::vector<FunctionResidue>> residue;
  std::optional<SourceParams> source_params;
  std::optional<MatchReport> source_match;
};

namespace detail {

inline std::string hex0x(std::uint64_t v) { return "0x" + hex_address(v); }

inline nlohmann::json to_json(const InputId& id) {
  return {{"binary_id", id.binary_id}, {"digest", id.digest}, {"functions", id.functions},
          {"instructions", id.instructions}};
}

inline nlohmann::json to_json(const Region& r) {
  return {{"function", r.function}, {"start_index", r.start_index}, {"length", r.length}};
}

inline std::string to_string(MatchScorer s) { return s == MatchScorer::idf ? "idf" : "overlap"; }

}  // namespace detail

inline nlohmann::json to_json(const MatchReport& m) {
  nlohmann::json per = nlohmann::json::object();
  for (const auto& [fn, files] : m.per_function) {
    auto& arr = per[fn] = nlohmann::json::array();
    for (const auto& f : files) arr.push_back({{"file", f.file}, {"score", f.score}});
  }
  return {{"per_function", per}, {"project_rollup", m.project_rollup}, {"category_shares", m.category_shares}};
}

inline nlohmann::json to_json(const TriageReport& r) {
  using nlohmann::json;
  const auto& p = r.clone_params;
  json j;
  j["schema"] = kReportSchema;
  j["schema_version"] = kReportSchemaVersion;
  j["tool"] = {{"name", "vtriage"}, {"version", VTRIAGE_VERSION}};
  j["inputs"] = {{"reference", detail::to_json(r.reference)}, {"target", detail::to_json(r.target)}};
  j["params"]["clone"] = {{"window", p.window_size},
                          {"stride", p.stride},
                          {"threshold", p.threshold},
                          {"level", std::string(to_string(p.level))},
                          {"method", std::string(to_string(p.method))}};

  const auto& s = r.similarity;
  json per = json::object();
  for (const auto& [fn, c] : s.per_function)
    per[fn] = {{"cloned_windows", c.cloned_windows}, {"total_windows", c.total_windows}};
  j["similarity"] = {{"exact_count", s.exact_count},
                     {"inexact_count", s.inexact_count},
                     {"ref_in_target", s.ref_in_target},
                     {"target_coverage", s.target_coverage},
                     {"ref_windows", s.ref_windows},
                     {"ref_cloned_windows", s.ref_cloned_windows},
                     {"target_instructions", s.target_instructions},
                     {"target_covered_instructions", s.target_covered_instructions},
                     {"per_function", per}};

  if (r.clones) {
    auto& arr = j["clones"] = json::array();
    for (const auto& c : *r.clones)
      arr.push_back({{"kind", std::string(to_string(c.kind))},
                     {"reference", detail::to_json(c.ref_region)},
                     {"target", detail::to_json(c.target_region)},
                     {"similarity", c.similarity}});
  }

  if (r.tag_params) {
    j["params"]["tags"] = {{"dictionary", r.tag_params->dictionary}, {"depth", r.tag_params->depth}};
    j["tags"] = {{"reference", r.reference_tags}, {"target", r.target_tags}};
    auto& arr = j["alignment"] = json::array();
    for (const auto& a : r.alignment)
      arr.push_back({{"reference", a.a->name}, {"target", a.b->name}, {"score", a.score}});
  }

  if (r.residue) {
    auto& arr = j["residue"] = json::array();
    for (const auto& fr : *r.residue) {
      json ranges = json::array();
      for (const auto& rg : fr.ranges)
        ranges.push_back({{"first", rg.first},
                          {"last", rg.last},
                          {"first_address", detail::hex0x(rg.first_address)},
                          {"last_address", detail::hex0x(rg.last_address)}});
      arr.push_back({{"function", fr.function}, {"uncovered_instructions", fr.uncovered_instructions}, {"ranges", ranges}});
    }
  }

  if (r.source_params) {
    j["params"]["source"] = {{"k", r.source_params->k},
                             {"scorer", detail::to_string(r.source_params->scorer)},
                             {"const_threshold", detail::hex0x(r.source_params->const_threshold)},
                             {"index_digest", r.source_params->index_digest}};
  }
  if (r.source_match) j["source_match"] = to_json(*r.source_match);
  return j;
}

inline std::string render_json(const TriageReport& r) { return to_json(r).dump(2) + "\n"; }

/// Plain-text summary. Prints engine values only.
inline std::string render_summary(const TriageReport& r) {
  std::ostringstream os;
  const auto& s = r.similarity;
  os << "reference " << r.reference.binary_id << ": " << r.reference.functions << " functions, "
     << r.reference.instructions << " instructions\n";
  os << "target    " << r.target.binary_id << ": " << r.target.functions << " functions, " << r.target.instructions
     << " instructions\n";
  os << "exact clones    " << s.exact_count << "\n";
  os << "inexact clones  " << s.inexact_count << "\n";
  os << "ref in target   " << s.ref_cloned_windows << "/" << s.ref_windows << " windows (" << s.ref_in_target << ")\n";
  os << "target coverage " << s.target_covered_instructions << "/" << s.target_instructions << " instructions ("
     << s.target_coverage << ")\n";
  if (r.tag_params) {
    os << "tags (ref)      ";
    for (const auto& [t, n] : r.reference_tags) os << t << "=" << n << " ";
    os << "\ntags (target)   ";
    for (const auto& [t, n] : r.target_tags) os << t << "=" << n << " ";
    os << "\naligned pairs   " << r.alignment.size() << "\n";
  }
  if (r.residue) {
    std::size_t n = 0;
    for (const auto& fr : *r.residue) n += fr.uncovered_instructions;
    os << "residue         " << n << " instructions in " << r.residue->size() << " functions\n";
  }
  if (r.source_match) {
    os << "source projects ";
    for (const auto& [p, v] : r.source_match->project_rollup) os << p << "=" << v << " ";
    os << "\n";
  }
  return os.str();
}

}  // namespace vtriage
