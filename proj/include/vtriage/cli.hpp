#pragma once

// Subcommand front end. run_command is the whole program; tools/vtriage.cpp
// only forwards argv. Exit codes: 0 ok, 1 usage error, 2 input error.

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "vtriage/cryptolab.hpp"
#include "vtriage/report.hpp"

namespace vtriage {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitInput = 2;

class UsageError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

class InputError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// "0x..." is hex (an odd digit count gets a leading zero), anything else is
/// taken as the literal bytes of the string.
inline Bytes parse_key(std::string_view s) {
  if (s.empty()) throw UsageError("key must not be empty");
  if (s.size() >= 2 && s[0] == '0' && (s[1] == 'x' || s[1] == 'X')) {
    std::string digits(s.substr(2));
    if (digits.empty()) throw UsageError("key '" + std::string(s) + "' has no hex digits");
    if (digits.size() % 2) digits.insert(digits.begin(), '0');
    Bytes out;
    for (std::size_t i = 0; i < digits.size(); i += 2) {
      auto v = detail::parse_hex(std::string_view(digits).substr(i, 2));
      if (!v) throw UsageError("key '" + std::string(s) + "' is not valid hex");
      out.push_back(static_cast<std::uint8_t>(*v));
    }
    return out;
  }
  return to_bytes(s);
}

namespace cli {

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw InputError("cannot read '" + path + "'");
  return ss.str();
}

inline Bytes read_bytes(const std::string& path) { return to_bytes(read_file(path)); }

// "-" or empty means standard output.
inline void write_output(const std::string& path, std::string_view data, std::ostream& out) {
  if (path.empty() || path == "-") {
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot write '" + path + "'");
  f.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!f) throw InputError("cannot write '" + path + "'");
}

inline void write_output(const std::string& path, const Bytes& data, std::ostream& out) {
  write_output(path, std::string_view(reinterpret_cast<const char*>(data.data()), data.size()), out);
}

struct LoadedListing {
  Listing listing;
  std::string text;
};

inline LoadedListing load_listing(const std::string& path, std::ostream& err) {
  auto text = read_file(path);
  std::vector<Diagnostic> warnings;
  try {
    auto l = parse_listing(text, std::filesystem::path(path).stem().string(), &warnings);
    for (const auto& w : warnings) err << path << ":" << w.line << ": warning: " << w.message << "\n";
    return {std::move(l), std::move(text)};
  } catch (const ParseError& e) {
    throw InputError(path + ":" + std::to_string(e.line()) + ": " + e.what());
  }
}

inline std::string hex_bytes(std::span<const std::uint8_t> b) {
  std::ostringstream os;
  os << std::hex << std::setfill('0');
  for (auto c : b) os << std::setw(2) << int(c);
  return os.str();
}

struct Options {
  std::vector<std::string> files;
  std::string output;

  std::size_t window = 15;
  std::size_t stride = 1;
  double threshold = 0.8;
  std::string level = "L1";
  std::string method = "two-combination";
  unsigned threads = 0;
  bool pairs = false;

  std::string dict;
  std::size_t depth = 0;

  std::string mapping;
  std::string index;
  std::size_t k = 5;
  std::string scorer = "idf";
  std::string const_threshold = "0x100";

  std::string login_key;
  std::string rc4_key;
  std::string string_key;
  std::string aes_variant = "prose";
};

inline CloneParams clone_params(const Options& o) {
  CloneParams p;
  p.window_size = o.window;
  p.stride = o.stride;
  p.threshold = o.threshold;
  p.level = *parse_level(o.level);
  p.method = o.method == "exact" ? CloneMethod::exact_only : CloneMethod::two_combination;
  p.threads = o.threads;
  try {
    p.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  return p;
}

inline std::uint64_t const_threshold(const Options& o) {
  auto v = detail::parse_immediate(o.const_threshold);
  if (!v) throw UsageError("invalid --const-threshold '" + o.const_threshold + "'");
  return *v;
}

inline TagDictionary load_dict(const Options& o) {
  if (o.dict.empty()) return default_dictionary();
  try {
    return load_dictionary(read_file(o.dict));
  } catch (const ParseError& e) {
    throw InputError(o.dict + ":" + std::to_string(e.line()) + ": " + e.what());
  }
}

inline TagParams tag_params(const Options& o, const TagDictionary& d) {
  return {o.dict.empty() ? std::string("default") : serialize_dictionary(d), o.depth};
}

inline CryptoContext crypto_context(const Options& o) {
  CryptoContext ctx;
  ctx.login_key = parse_key(o.login_key);
  ctx.rc4_key_material = parse_key(o.rc4_key);
  if (o.aes_variant == "formula")
    ctx.aes_key_derivation = AesKeyDerivation::md5_xor_material;
  else if (o.aes_variant == "prose-lkey")
    ctx.aes_key_derivation = AesKeyDerivation::rc4_of_md5_lkey;
  return ctx;
}

struct SourceContext {
  CorpusIndex index;
  SourceParams params;
};

inline SourceContext load_source(const Options& o) {
  const auto text = read_file(o.index);
  SourceContext s;
  try {
    s.index = load_index(text);
  } catch (const std::runtime_error& e) {
    throw InputError(o.index + ": " + e.what());
  }
  s.params.k = o.k;
  s.params.scorer = o.scorer == "overlap" ? MatchScorer::overlap : MatchScorer::idf;
  s.params.const_threshold = const_threshold(o);
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << detail::fnv1a(text);
  s.params.index_digest = os.str();
  return s;
}

inline TriageReport clone_report(const LoadedListing& ref, const LoadedListing& tgt, const CloneParams& p,
                                 bool keep_pairs) {
  TriageReport r;
  r.reference = identify(ref.listing, ref.text);
  r.target = identify(tgt.listing, tgt.text);
  r.clone_params = p;
  auto clones = find_clones(ref.listing, tgt.listing, p);
  r.similarity = coverage_metrics(clones, ref.listing, tgt.listing, p);
  r.residue = residue(tgt.listing, clones);
  if (keep_pairs) r.clones = std::move(clones);
  return r;
}

inline void emit_report(const Options& o, const TriageReport& r, std::ostream& out) {
  if (o.output.empty()) {
    out << render_summary(r);
    return;
  }
  if (o.output != "-") out << render_summary(r);
  write_output(o.output, render_json(r), out);
}

inline std::string tag_list(const std::set<std::string>& tags) {
  std::string s;
  for (const auto& t : tags) s += (s.empty() ? "" : ",") + t;
  return s;
}

// ---------------------------------------------------------------- commands

inline void cmd_parse(const Options& o, std::ostream& out, std::ostream& err) {
  auto l = load_listing(o.files[0], err);
  write_output(o.output, serialize_listing(l.listing), out);
}

inline void cmd_stats(const Options& o, std::ostream& out, std::ostream& err) {
  for (const auto& f : o.files) {
    auto l = load_listing(f, err);
    auto s = listing_stats(l.listing);
    out << l.listing.binary_id << "\tfunctions=" << s.function_count << " imports=" << s.import_count
        << " strings=" << s.string_count << " instructions=" << l.listing.instruction_count() << "\n";
  }
}

inline void cmd_tags(const Options& o, std::ostream& out, std::ostream& err) {
  auto l = load_listing(o.files[0], err);
  auto d = load_dict(o);
  auto tags = tag_functions(l.listing, d, o.depth, o.threads);
  auto hist = tag_histogram(tags);
  nlohmann::json fns = nlohmann::json::array();
  for (const auto& ft : tags) {
    if (!ft.tags.empty()) out << ft.function->name << "\t" << tag_list(ft.tags) << "\n";
    fns.push_back({{"name", ft.function->name}, {"tags", ft.tags}, {"evidence", ft.evidence}});
  }
  for (const auto& [t, n] : hist) out << t << "\t" << n << "\n";
  if (!o.output.empty()) {
    nlohmann::json j{{"binary_id", l.listing.binary_id},
                     {"params", {{"dictionary", tag_params(o, d).dictionary}, {"depth", o.depth}}},
                     {"functions", fns},
                     {"histogram", hist}};
    write_output(o.output, j.dump(2) + "\n", out);
  }
}

inline void cmd_sync(const Options& o, std::ostream& out, std::ostream& err) {
  auto a = load_listing(o.files[0], err);
  auto b = load_listing(o.files[1], err);
  auto d = load_dict(o);
  auto ta = tag_functions(a.listing, d, o.depth, o.threads);
  auto tb = tag_functions(b.listing, d, o.depth, o.threads);
  auto pairs = align_by_tags(a.listing, b.listing, ta, tb);
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& p : pairs) {
    out << p.a->name << "\t" << p.b->name << "\t" << p.score << "\n";
    arr.push_back({{"a", p.a->name}, {"b", p.b->name}, {"score", p.score}});
  }
  if (!o.output.empty()) {
    nlohmann::json j{{"a", a.listing.binary_id},
                     {"b", b.listing.binary_id},
                     {"params", {{"dictionary", tag_params(o, d).dictionary}, {"depth", o.depth}}},
                     {"pairs", arr}};
    write_output(o.output, j.dump(2) + "\n", out);
  }
}

inline void cmd_clones(const Options& o, std::ostream& out, std::ostream& err) {
  auto p = clone_params(o);
  auto ref = load_listing(o.files[0], err);
  auto tgt = load_listing(o.files[1], err);
  auto r = clone_report(ref, tgt, p, o.pairs);
  r.residue.reset();
  emit_report(o, r, out);
}

inline void cmd_residue(const Options& o, std::ostream& out, std::ostream& err) {
  auto p = clone_params(o);
  auto ref = load_listing(o.files[0], err);
  auto tgt = load_listing(o.files[1], err);
  auto r = clone_report(ref, tgt, p, false);
  for (const auto& fr : *r.residue)
    for (const auto& rg : fr.ranges)
      out << fr.function << "\t" << rg.first << "-" << rg.last << "\t" << detail::hex0x(rg.first_address) << "-"
          << detail::hex0x(rg.last_address) << "\n";
  if (!o.output.empty()) write_output(o.output, render_json(r), out);
}

inline void cmd_source_index(const Options& o, std::ostream& out, std::ostream& err) {
  SourceMapping mapping;
  if (!o.mapping.empty()) {
    try {
      mapping = parse_mapping(read_file(o.mapping));
    } catch (const ParseError& e) {
      throw InputError(o.mapping + ":" + std::to_string(e.line()) + ": " + e.what());
    }
  }
  const auto threshold = const_threshold(o);
  if (!std::filesystem::is_directory(o.files[0])) throw InputError("'" + o.files[0] + "' is not a directory");
  std::vector<std::string> warnings;
  auto idx = build_index(o.files[0], mapping, &warnings, o.threads, threshold);
  for (const auto& w : warnings) err << "warning: " << w << "\n";
  write_output(o.output, save_index(idx), out);
  if (!o.output.empty() && o.output != "-") out << "indexed " << idx.files.size() << " files, " << idx.postings.size() << " features\n";
}

inline void cmd_source_match(const Options& o, std::ostream& out, std::ostream& err) {
  auto l = load_listing(o.files[0], err);
  auto src = load_source(o);
  auto m = match(extract_asm_features(l.listing, src.params.const_threshold), src.index, src.params.k,
                 src.params.scorer);
  for (const auto& [fn, files] : m.per_function)
    for (const auto& f : files) out << fn << "\t" << f.file << "\t" << f.score << "\n";
  for (const auto& [p, v] : m.project_rollup) out << "project\t" << p << "\t" << v << "\n";
  for (const auto& [c, v] : m.category_shares) out << "category\t" << c << "\t" << v << "\n";
  if (!o.output.empty()) {
    nlohmann::json j{{"binary_id", l.listing.binary_id},
                     {"params",
                      {{"k", src.params.k},
                       {"scorer", detail::to_string(src.params.scorer)},
                       {"const_threshold", detail::hex0x(src.params.const_threshold)},
                       {"index_digest", src.params.index_digest}}},
                     {"match", to_json(m)}};
    write_output(o.output, j.dump(2) + "\n", out);
  }
}

inline void cmd_strings_decrypt(const Options& o, std::ostream& out, std::ostream&) {
  const auto key = parse_key(o.string_key);
  const auto data = read_bytes(o.files[0]);
  write_output(o.output, key.size() == 1 ? decrypt_strings(data, key[0]) : decrypt_strings(data, key), out);
}

inline void cmd_config(const Options& o, std::ostream& out, bool encrypt) {
  const auto ctx = crypto_context(o);
  const auto data = read_bytes(o.files[0]);
  try {
    write_output(o.output, encrypt ? config_encrypt(data, ctx) : config_decrypt(data, ctx), out);
  } catch (const std::invalid_argument& e) {
    throw InputError(o.files[0] + ": " + e.what());
  }
}

inline void cmd_records(const Options& o, std::ostream& out, std::ostream&) {
  const auto data = read_bytes(o.files[0]);
  std::vector<PackedRecord> records;
  try {
    records = parse_packed_records(data);
  } catch (const RecordError& e) {
    throw InputError(o.files[0] + ": " + e.what());
  }
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : records) {
    out << "id=" << r.id << " flags=0x" << std::hex << r.flags << std::dec << " length=" << r.length
        << " payload=" << hex_bytes(r.payload) << "\n";
    arr.push_back({{"id", r.id}, {"flags", r.flags}, {"length", r.length}, {"reserved", r.reserved},
                   {"payload", hex_bytes(r.payload)}});
  }
  if (!o.output.empty()) write_output(o.output, arr.dump(2) + "\n", out);
}

inline void cmd_report(const Options& o, std::ostream& out, std::ostream& err) {
  auto p = clone_params(o);
  auto ref = load_listing(o.files[0], err);
  auto tgt = load_listing(o.files[1], err);
  auto d = load_dict(o);
  auto r = clone_report(ref, tgt, p, o.pairs);
  auto ta = tag_functions(ref.listing, d, o.depth, o.threads);
  auto tb = tag_functions(tgt.listing, d, o.depth, o.threads);
  r.tag_params = tag_params(o, d);
  r.reference_tags = tag_histogram(ta);
  r.target_tags = tag_histogram(tb);
  r.alignment = align_by_tags(ref.listing, tgt.listing, ta, tb);
  if (!o.index.empty()) {
    auto src = load_source(o);
    r.source_match = match(extract_asm_features(tgt.listing, src.params.const_threshold), src.index,
                           src.params.k, src.params.scorer);
    r.source_params = src.params;
  }
  emit_report(o, r, out);
}

}  // namespace cli

inline int run_command(int argc, const char* const* argv, std::ostream& out = std::cout,
                       std::ostream& err = std::cerr) {
  using namespace cli;
  Options o;
  CLI::App app{"Binary triage: listing clones, functionality tags, source matching and Citadel ciphers", "vtriage"};
  app.set_version_flag("--version", VTRIAGE_VERSION);
  app.require_subcommand(1);

  const std::vector<std::string> levels{"L0", "LX", "L1", "L2"};
  auto add_clone_flags = [&](CLI::App* s) {
    s->add_option("--window", o.window, "Window size in instructions")->capture_default_str();
    s->add_option("--stride", o.stride, "Window stride")->capture_default_str();
    s->add_option("--threshold", o.threshold, "Inexact similarity threshold in (0, 1]")->capture_default_str();
    s->add_option("--level", o.level, "Normalization level")->check(CLI::IsMember(levels))->capture_default_str();
    s->add_option("--method", o.method, "Clone method")
        ->check(CLI::IsMember({"exact", "two-combination"}))
        ->capture_default_str();
  };
  auto add_tag_flags = [&](CLI::App* s) {
    s->add_option("--dict", o.dict, "Tag dictionary file (default: built-in)");
    s->add_option("--depth", o.depth, "Transitive call depth for tagging")->capture_default_str();
  };
  auto add_match_flags = [&](CLI::App* s) {
    s->add_option("-k", o.k, "Files kept per function")->check(CLI::PositiveNumber)->capture_default_str();
    s->add_option("--scorer", o.scorer, "Match scorer")->check(CLI::IsMember({"idf", "overlap"}))->capture_default_str();
    s->add_option("--const-threshold", o.const_threshold, "Smallest immediate kept as a CONST feature")
        ->capture_default_str();
  };
  auto add_crypto_flags = [&](CLI::App* s) {
    s->add_option("--login-key", o.login_key, "Login key (0x-prefixed hex or literal string)")->required();
    s->add_option("--rc4-key", o.rc4_key, "RC4 key material (0x-prefixed hex or literal string)")->required();
    s->add_option("--aes-variant", o.aes_variant, "AES key derivation")
        ->check(CLI::IsMember({"prose", "formula", "prose-lkey"}))
        ->capture_default_str();
  };
  auto add_output = [&](CLI::App* s) { s->add_option("-o,--output", o.output, "Output file ('-' for stdout)"); };
  auto add_threads = [&](CLI::App* s) {
    s->add_option("--threads", o.threads, "Worker threads, 0 = all cores")->capture_default_str();
  };

  auto* parse = app.add_subcommand("parse", "Validate a listing and print its canonical form");
  parse->add_option("listing", o.files, "Listing file")->required()->expected(1);
  add_output(parse);

  auto* stats = app.add_subcommand("stats", "Function, import and string counts");
  stats->add_option("listings", o.files, "Listing files")->required();

  auto* tags = app.add_subcommand("tags", "Tag functions by API usage");
  tags->add_option("listing", o.files, "Listing file")->required()->expected(1);
  add_tag_flags(tags);
  add_threads(tags);
  add_output(tags);

  auto* sync = app.add_subcommand("sync", "Align the functions of two listings by tags");
  sync->add_option("listings", o.files, "Listing A and listing B")->required()->expected(2);
  add_tag_flags(sync);
  add_threads(sync);
  add_output(sync);

  auto* clones = app.add_subcommand("clones", "Exact and inexact clones between a reference and a target");
  clones->add_option("listings", o.files, "Reference and target listings")->required()->expected(2);
  add_clone_flags(clones);
  add_threads(clones);
  clones->add_flag("--pairs", o.pairs, "Include every clone pair in the report");
  add_output(clones);

  auto* res = app.add_subcommand("residue", "Target code left after exact clone elimination");
  res->add_option("listings", o.files, "Reference and target listings")->required()->expected(2);
  add_clone_flags(res);
  add_threads(res);
  add_output(res);

  auto* sidx = app.add_subcommand("source-index", "Index a local source corpus");
  sidx->add_option("corpus", o.files, "Corpus root directory")->required()->expected(1);
  sidx->add_option("--mapping", o.mapping, "Mapping document (file -> project, project => category)");
  sidx->add_option("--const-threshold", o.const_threshold, "Smallest constant kept as a CONST feature")
      ->capture_default_str();
  add_threads(sidx);
  add_output(sidx);

  auto* smatch = app.add_subcommand("source-match", "Rank corpus files against a listing's functions");
  smatch->add_option("listing", o.files, "Listing file")->required()->expected(1);
  smatch->add_option("--index", o.index, "Index written by source-index")->required();
  add_match_flags(smatch);
  add_output(smatch);

  auto* sdec = app.add_subcommand("strings-decrypt", "Decrypt packed strings: out[j] = in[j] ^ j ^ key");
  sdec->add_option("input", o.files, "Packed string bytes")->required()->expected(1);
  sdec->add_option("--key,--string-key", o.string_key, "One byte, or a multi-byte key indexed like the data")
      ->required();
  add_output(sdec);

  auto* cdec = app.add_subcommand("config-decrypt", "Decrypt a configuration blob");
  cdec->add_option("input", o.files, "Ciphertext")->required()->expected(1);
  add_crypto_flags(cdec);
  add_output(cdec);

  auto* cenc = app.add_subcommand("config-encrypt", "Encrypt a block-aligned configuration blob");
  cenc->add_option("input", o.files, "Plaintext")->required()->expected(1);
  add_crypto_flags(cenc);
  add_output(cenc);

  auto* recs = app.add_subcommand("records", "Parse packed records");
  recs->add_option("input", o.files, "Packed data")->required()->expected(1);
  add_output(recs);

  auto* report = app.add_subcommand("report", "Full triage report for a reference/target pair");
  report->add_option("listings", o.files, "Reference and target listings")->required()->expected(2);
  add_clone_flags(report);
  add_tag_flags(report);
  report->add_option("--index", o.index, "Source index; enables the source-match section");
  add_match_flags(report);
  add_threads(report);
  report->add_flag("--pairs", o.pairs, "Include every clone pair in the report");
  add_output(report);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (parse->parsed()) cmd_parse(o, out, err);
    else if (stats->parsed()) cmd_stats(o, out, err);
    else if (tags->parsed()) cmd_tags(o, out, err);
    else if (sync->parsed()) cmd_sync(o, out, err);
    else if (clones->parsed()) cmd_clones(o, out, err);
    else if (res->parsed()) cmd_residue(o, out, err);
    else if (sidx->parsed()) cmd_source_index(o, out, err);
    else if (smatch->parsed()) cmd_source_match(o, out, err);
    else if (sdec->parsed()) cmd_strings_decrypt(o, out, err);
    else if (cdec->parsed()) cmd_config(o, out, false);
    else if (cenc->parsed()) cmd_config(o, out, true);
    else if (recs->parsed()) cmd_records(o, out, err);
    else if (report->parsed()) cmd_report(o, out, err);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  }
  out.flush();
  return kExitOk;
}

inline int run_command(const std::vector<std::string>& args, std::ostream& out = std::cout,
                       std::ostream& err = std::cerr) {
  std::vector<const char*> argv{"vtriage"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run_command(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace vtriage
