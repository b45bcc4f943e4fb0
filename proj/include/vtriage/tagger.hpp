#pragma once

// Functionality tags from API calls.
//
// Dictionary format, one rule per line, '#' starts a comment:
//
//   NET: send, recv, socket*          simple rule: any listed pattern
//   PSJ := openprocess AND (writeprocessmemory OR ntwritevirtualmemory)
//
// Patterns are lowercase API names where '*' matches any run of characters.
// Composite terms are patterns or the code of a simple rule; AND binds
// tighter than OR.

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <deque>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "vtriage/asm_model.hpp"
#include "vtriage/parallel.hpp"

namespace vtriage {

struct TagExpr {
  enum class Op { pattern, tag, all_of, any_of };
  Op op = Op::pattern;
  std::string term;
  std::vector<TagExpr> children;

  bool operator==(const TagExpr&) const = default;
};

struct TagDictionary {
  std::map<std::string, std::vector<std::string>> simple_rules;
  std::map<std::string, TagExpr> composite_rules;

  bool empty() const { return simple_rules.empty() && composite_rules.empty(); }
  bool operator==(const TagDictionary&) const = default;
};

struct FunctionTags {
  const Function* function = nullptr;
  std::set<std::string> tags;
  std::map<std::string, std::vector<std::string>> evidence;
};

struct TagAlignment {
  const Function* a = nullptr;
  const Function* b = nullptr;
  double score = 0.0;
};

namespace detail {

inline bool valid_tag_code(std::string_view s) {
  return s.size() == 3 && std::all_of(s.begin(), s.end(), [](char c) { return c >= 'A' && c <= 'Z'; });
}

inline bool valid_pattern(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) {
           return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_' || c == '*';
         });
}

inline bool glob_match(std::string_view pattern, std::string_view text) {
  std::size_t p = 0, t = 0, star = std::string_view::npos, mark = 0;
  while (t < text.size()) {
    if (p < pattern.size() && pattern[p] == '*') {
      star = p++;
      mark = t;
    } else if (p < pattern.size() && pattern[p] == text[t]) {
      ++p;
      ++t;
    } else if (star != std::string_view::npos) {
      p = star + 1;
      t = ++mark;
    } else {
      return false;
    }
  }
  while (p < pattern.size() && pattern[p] == '*') ++p;
  return p == pattern.size();
}

// Lowercased name, and the same without a trailing ANSI/wide suffix.
inline std::vector<std::string> api_forms(std::string_view api) {
  std::vector<std::string> forms{lowercase(api)};
  const auto& l = forms.front();
  if (l.size() > 1 && (l.back() == 'a' || l.back() == 'w')) forms.push_back(l.substr(0, l.size() - 1));
  return forms;
}

inline bool api_matches(std::string_view pattern, std::string_view api) {
  for (const auto& form : api_forms(api))
    if (glob_match(pattern, form)) return true;
  return false;
}

class ExprParser {
 public:
  ExprParser(std::string_view text, std::size_t line) : line_(line) {
    std::size_t i = 0;
    while (i < text.size()) {
      const char c = text[i];
      if (std::isspace(static_cast<unsigned char>(c))) {
        ++i;
      } else if (c == '(' || c == ')') {
        tokens_.emplace_back(1, c);
        ++i;
      } else {
        const auto start = i;
        while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i])) && text[i] != '(' &&
               text[i] != ')')
          ++i;
        tokens_.emplace_back(text.substr(start, i - start));
      }
    }
  }

  TagExpr parse() {
    if (tokens_.empty()) fail("empty expression");
    auto e = parse_or();
    if (pos_ != tokens_.size()) fail("unexpected '" + tokens_[pos_] + "'");
    return e;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const { throw ParseError(line_, what); }

  bool accept(std::string_view word) {
    if (pos_ < tokens_.size() && tokens_[pos_] == word) {
      ++pos_;
      return true;
    }
    return false;
  }

  TagExpr parse_or() {
    TagExpr e = parse_and();
    if (pos_ < tokens_.size() && tokens_[pos_] == "OR") {
      TagExpr any{TagExpr::Op::any_of, {}, {std::move(e)}};
      while (accept("OR")) any.children.push_back(parse_and());
      return any;
    }
    return e;
  }

  TagExpr parse_and() {
    TagExpr e = parse_term();
    if (pos_ < tokens_.size() && tokens_[pos_] == "AND") {
      TagExpr all{TagExpr::Op::all_of, {}, {std::move(e)}};
      while (accept("AND")) all.children.push_back(parse_term());
      return all;
    }
    return e;
  }

  TagExpr parse_term() {
    if (pos_ >= tokens_.size()) fail("expression ends early");
    if (accept("(")) {
      auto e = parse_or();
      if (!accept(")")) fail("missing ')'");
      return e;
    }
    const auto& tok = tokens_[pos_++];
    if (tok == ")" || tok == "AND" || tok == "OR") fail("unexpected '" + tok + "'");
    if (valid_tag_code(tok)) return {TagExpr::Op::tag, tok, {}};
    auto pattern = lowercase(tok);
    if (!valid_pattern(pattern)) fail("malformed pattern '" + tok + "'");
    return {TagExpr::Op::pattern, pattern, {}};
  }

  std::vector<std::string> tokens_;
  std::size_t pos_ = 0;
  std::size_t line_;
};

inline void collect_tag_refs(const TagExpr& e, std::vector<std::string>& out) {
  if (e.op == TagExpr::Op::tag) out.push_back(e.term);
  for (const auto& c : e.children) collect_tag_refs(c, out);
}

}  // namespace detail

/// Parses a dictionary document. Throws ParseError on malformed lines,
/// patterns or codes, duplicate tags, and composite terms naming a code that
/// is not a simple rule.
inline TagDictionary load_dictionary(std::string_view text) {
  TagDictionary d;
  std::map<std::string, std::size_t> composite_lines;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    auto line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;

    const auto colon = line.find(':');
    if (colon == std::string_view::npos) throw ParseError(line_no, "expected 'TAG:' or 'TAG :='");
    const auto code = std::string(detail::trim(line.substr(0, colon)));
    if (!detail::valid_tag_code(code)) throw ParseError(line_no, "tag must be three uppercase letters: '" + code + "'");
    if (d.simple_rules.count(code) || d.composite_rules.count(code))
      throw ParseError(line_no, "duplicate tag '" + code + "'");

    if (colon + 1 < line.size() && line[colon + 1] == '=') {
      d.composite_rules[code] = detail::ExprParser(line.substr(colon + 2), line_no).parse();
      composite_lines[code] = line_no;
      continue;
    }
    std::vector<std::string> patterns;
    auto rest = line.substr(colon + 1);
    while (true) {
      const auto comma = rest.find(',');
      auto item = std::string(detail::trim(rest.substr(0, comma)));
      auto pattern = detail::lowercase(item);
      if (!detail::valid_pattern(pattern)) throw ParseError(line_no, "malformed pattern '" + item + "'");
      if (std::find(patterns.begin(), patterns.end(), pattern) == patterns.end()) patterns.push_back(pattern);
      if (comma == std::string_view::npos) break;
      rest = rest.substr(comma + 1);
    }
    d.simple_rules[code] = std::move(patterns);
  }
  for (const auto& [code, expr] : d.composite_rules) {
    std::vector<std::string> refs;
    detail::collect_tag_refs(expr, refs);
    for (const auto& r : refs)
      if (!d.simple_rules.count(r))
        throw ParseError(composite_lines[code], "'" + r + "' is not a simple tag");
  }
  return d;
}

inline std::string serialize_dictionary(const TagDictionary& d) {
  std::string out;
  for (const auto& [code, patterns] : d.simple_rules) {
    out += code + ":";
    for (std::size_t i = 0; i < patterns.size(); ++i) out += (i ? ", " : " ") + patterns[i];
    out += "\n";
  }
  auto render = [](auto&& self, const TagExpr& e, bool nested) -> std::string {
    if (e.op == TagExpr::Op::pattern || e.op == TagExpr::Op::tag) return e.term;
    const char* sep = e.op == TagExpr::Op::all_of ? " AND " : " OR ";
    std::string s;
    for (std::size_t i = 0; i < e.children.size(); ++i) s += (i ? sep : "") + self(self, e.children[i], true);
    return nested ? "(" + s + ")" : s;
  };
  for (const auto& [code, expr] : d.composite_rules) out += code + " := " + render(render, expr, false) + "\n";
  return out;
}

/// Shipped dictionary. API lists are a curated starting point; analysts are
/// expected to replace or extend them.
inline std::string_view default_dictionary_text() {
  return R"(# Low-level sockets
NET: socket, wsasocket, connect, wsaconnect, bind, listen, accept, send, wsasend, recv, wsarecv, sendto, recvfrom, closesocket, shutdown, select, ioctlsocket, getaddrinfo, gethostbyname, inet_addr, wsastartup, wsacleanup
# High-level internet APIs
WNT: internetopen, internetopenurl, internetconnect, internetreadfile, internetwritefile, internetclosehandle, internetsetoption, internetqueryoption, internetcrackurl, httpopenrequest, httpsendrequest, httpsendrequestex, httpqueryinfo, httpaddrequestheaders, urldownloadtofile, winhttp*
CRY: cryptacquirecontext, cryptreleasecontext, cryptgenkey, cryptderivekey, cryptimportkey, cryptexportkey, cryptdestroykey, cryptencrypt, cryptdecrypt, cryptgenrandom, cryptprotectdata, cryptunprotectdata, bcryptencrypt, bcryptdecrypt, bcryptgeneratesymmetrickey
HSH: cryptcreatehash, crypthashdata, cryptgethashparam, cryptdestroyhash, bcryptcreatehash, bcrypthashdata, bcryptfinishhash, rtlcomputecrc32
# Critical section objects
CRT: initializecriticalsection, initializecriticalsectionandspincount, entercriticalsection, tryentercriticalsection, leavecriticalsection, deletecriticalsection
FIL: createfile, readfile, writefile, deletefile, copyfile, movefile, movefileex, findfirstfile, findnextfile, findclose, getfilesize, getfilesizeex, setfilepointer, setfilepointerex, flushfilebuffers, getfileattributes, setfileattributes, createdirectory, removedirectory, gettemppath, gettempfilename
REG: regopenkey, regopenkeyex, regcreatekey, regcreatekeyex, regqueryvalueex, regsetvalueex, regdeletevalue, regdeletekey, regenumkey, regenumkeyex, regenumvalue, regclosekey
# Anti-debugging
ADB: isdebuggerpresent, checkremotedebuggerpresent, outputdebugstring, ntqueryinformationprocess, zwqueryinformationprocess, ntsetinformationthread, debugactiveprocess
# Anti-virtual-machine probes
AVM: getsystemfirmwaretable, enumsystemfirmwaretables, setupdigetclassdevs, setupdigetdeviceregistryproperty, getadaptersinfo
# Behavioural patterns
PSJ := openprocess AND (writeprocessmemory OR ntwritevirtualmemory) AND (createremotethread OR ntcreatethreadex OR rtlcreateuserthread)
LCH := (createprocess OR shellexecute OR shellexecuteex OR winexec) AND (FIL OR WNT)
DLI := virtualallocex AND writeprocessmemory AND createremotethread AND (loadlibrary OR getprocaddress)
PRP := createprocess AND (ntunmapviewofsection OR zwunmapviewofsection) AND writeprocessmemory AND setthreadcontext AND resumethread
HKI := setwindowshookex AND (loadlibrary OR getprocaddress)
APC := (openthread OR createprocess) AND queueuserapc
RSM := findresource AND loadresource AND (lockresource OR sizeofresource)
)";
}

inline const TagDictionary& default_dictionary() {
  static const TagDictionary d = load_dictionary(default_dictionary_text());
  return d;
}

namespace detail {

// Local call edges: call instructions whose target is another function.
inline std::vector<std::vector<std::size_t>> call_graph(const Listing& l) {
  std::unordered_map<std::string_view, std::size_t> by_name;
  for (std::size_t i = 0; i < l.functions.size(); ++i) by_name.emplace(l.functions[i].name, i);
  std::vector<std::vector<std::size_t>> out(l.functions.size());
  for (std::size_t i = 0; i < l.functions.size(); ++i)
    for (const auto& ins : l.functions[i].instructions) {
      if (ins.mnemonic != "call" || ins.operands.size() != 1 || ins.operands[0].kind != OperandKind::label) continue;
      auto it = by_name.find(ins.operands[0].raw);
      if (it != by_name.end() && it->second != i &&
          std::find(out[i].begin(), out[i].end(), it->second) == out[i].end())
        out[i].push_back(it->second);
    }
  return out;
}

// APIs of function `root` and of callees within `depth` edges, breadth first,
// each name once.
inline std::vector<std::string> reachable_apis(const Listing& l, const std::vector<std::vector<std::size_t>>& graph,
                                               std::size_t root, std::size_t depth) {
  std::vector<std::string> apis;
  std::vector<bool> seen(l.functions.size(), false);
  std::deque<std::pair<std::size_t, std::size_t>> queue{{root, 0}};
  seen[root] = true;
  while (!queue.empty()) {
    auto [f, d] = queue.front();
    queue.pop_front();
    for (const auto& api : l.functions[f].api_calls)
      if (std::find(apis.begin(), apis.end(), api) == apis.end()) apis.push_back(api);
    if (d == depth) continue;
    for (auto callee : graph[f])
      if (!seen[callee]) {
        seen[callee] = true;
        queue.emplace_back(callee, d + 1);
      }
  }
  return apis;
}

inline void add_evidence(std::vector<std::string>& out, const std::vector<std::string>& more) {
  for (const auto& api : more)
    if (std::find(out.begin(), out.end(), api) == out.end()) out.push_back(api);
}

// Evaluates `e`; on success appends the APIs that satisfied it.
inline bool evaluate(const TagExpr& e, const std::vector<std::string>& apis,
                     const std::map<std::string, std::vector<std::string>>& simple_evidence,
                     std::vector<std::string>& evidence) {
  switch (e.op) {
    case TagExpr::Op::pattern: {
      bool hit = false;
      for (const auto& api : apis)
        if (api_matches(e.term, api)) {
          hit = true;
          add_evidence(evidence, {api});
        }
      return hit;
    }
    case TagExpr::Op::tag: {
      auto it = simple_evidence.find(e.term);
      if (it == simple_evidence.end()) return false;
      add_evidence(evidence, it->second);
      return true;
    }
    case TagExpr::Op::all_of: {
      std::vector<std::string> local;
      for (const auto& c : e.children)
        if (!evaluate(c, apis, simple_evidence, local)) return false;
      add_evidence(evidence, local);
      return true;
    }
    case TagExpr::Op::any_of: {
      bool any = false;
      for (const auto& c : e.children) any = evaluate(c, apis, simple_evidence, evidence) || any;
      return any;
    }
  }
  return false;
}

}  // namespace detail

/// Tags for the APIs a single set of calls reaches.
inline FunctionTags tag_apis(const std::vector<std::string>& apis, const TagDictionary& d) {
  FunctionTags out;
  for (const auto& [code, patterns] : d.simple_rules) {
    std::vector<std::string> evidence;
    for (const auto& api : apis)
      for (const auto& pattern : patterns)
        if (detail::api_matches(pattern, api)) {
          evidence.push_back(api);
          break;
        }
    if (!evidence.empty()) out.evidence.emplace(code, std::move(evidence));
  }
  const auto simple = out.evidence;
  for (const auto& [code, expr] : d.composite_rules) {
    std::vector<std::string> evidence;
    if (detail::evaluate(expr, apis, simple, evidence) && !evidence.empty()) out.evidence.emplace(code, std::move(evidence));
  }
  for (const auto& [code, _] : out.evidence) out.tags.insert(code);
  return out;
}

/// One entry per function, in listing order. With transitive_depth k a
/// function also carries the APIs of local callees up to k call edges away.
inline std::vector<FunctionTags> tag_functions(const Listing& l, const TagDictionary& d, std::size_t transitive_depth,
                                               unsigned threads = 1) {
  const auto graph = detail::call_graph(l);
  std::vector<FunctionTags> out(l.functions.size());
  parallel_for(l.functions.size(), threads, [&](unsigned, std::size_t i) {
    out[i] = tag_apis(detail::reachable_apis(l, graph, i, transitive_depth), d);
    out[i].function = &l.functions[i];
  });
  return out;
}

/// Number of functions carrying each tag.
inline std::map<std::string, std::size_t> tag_histogram(const std::vector<FunctionTags>& tags) {
  std::map<std::string, std::size_t> out;
  for (const auto& ft : tags)
    for (const auto& t : ft.tags) ++out[t];
  return out;
}

inline double tag_jaccard(const std::set<std::string>& a, const std::set<std::string>& b) {
  if (a.empty() && b.empty()) return 0.0;
  std::size_t common = 0;
  for (const auto& t : a) common += b.count(t);
  return static_cast<double>(common) / static_cast<double>(a.size() + b.size() - common);
}

/// Greedy one-to-one pairing of functions by tag-set Jaccard score. Ties go
/// to the smaller instruction-count difference, then to name order. The
/// result does not depend on which listing is passed first, apart from
/// pair orientation.
inline std::vector<TagAlignment> align_by_tags(const Listing&, const Listing&, const std::vector<FunctionTags>& ta,
                                               const std::vector<FunctionTags>& tb) {
  struct Candidate {
    std::size_t i, j;
    std::size_t common, total;
    std::size_t size_diff;
    std::string_view lo, hi;  // function names, ordered
  };
  std::vector<Candidate> candidates;
  for (std::size_t i = 0; i < ta.size(); ++i)
    for (std::size_t j = 0; j < tb.size(); ++j) {
      std::size_t common = 0;
      for (const auto& t : ta[i].tags) common += tb[j].tags.count(t);
      if (common == 0) continue;
      const auto& fa = *ta[i].function;
      const auto& fb = *tb[j].function;
      const auto na = fa.instructions.size(), nb = fb.instructions.size();
      std::string_view x = fa.name, y = fb.name;
      candidates.push_back({i, j, common, ta[i].tags.size() + tb[j].tags.size() - common, na > nb ? na - nb : nb - na,
                            std::min(x, y), std::max(x, y)});
    }
  // Scores compared as exact fractions.
  std::sort(candidates.begin(), candidates.end(), [](const Candidate& x, const Candidate& y) {
    const auto lhs = x.common * y.total, rhs = y.common * x.total;
    if (lhs != rhs) return lhs > rhs;
    return std::tie(x.size_diff, x.lo, x.hi) < std::tie(y.size_diff, y.lo, y.hi);
  });
  std::vector<bool> used_a(ta.size(), false), used_b(tb.size(), false);
  std::vector<TagAlignment> out;
  for (const auto& c : candidates) {
    if (used_a[c.i] || used_b[c.j]) continue;
    used_a[c.i] = used_b[c.j] = true;
    out.push_back({ta[c.i].function, tb[c.j].function, static_cast<double>(c.common) / static_cast<double>(c.total)});
  }
  return out;
}

}  // namespace vtriage
