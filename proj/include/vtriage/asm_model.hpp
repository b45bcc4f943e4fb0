#pragma once

// Typed representation of a textual disassembly listing, plus the reader and
// writer for the line-oriented listing format:
//
//   BINARY <id>
//   IMPORT <api-name>
//   STRING <index> "<literal>"
//   FUNCTION <name> @ <hex-addr>
//   <hex-addr>  <mnemonic>  <operand>{, <operand>}
//
// '#' starts a comment (outside string literals). A LABEL operand of the form
// str_<index> records a reference to entry <index> of the string table.

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

namespace vtriage {

enum class OperandKind { reg, mem, imm, label };
enum class RegClass { gp8, gp16, gp32, seg, fpu, other };

inline std::string_view to_string(OperandKind k) {
  switch (k) {
    case OperandKind::reg: return "REG";
    case OperandKind::mem: return "MEM";
    case OperandKind::imm: return "IMM";
    case OperandKind::label: return "LABEL";
  }
  return "?";
}

inline std::string_view to_string(RegClass c) {
  switch (c) {
    case RegClass::gp8: return "GP8";
    case RegClass::gp16: return "GP16";
    case RegClass::gp32: return "GP32";
    case RegClass::seg: return "SEG";
    case RegClass::fpu: return "FPU";
    case RegClass::other: return "OTHER";
  }
  return "?";
}

struct Operand {
  OperandKind kind = OperandKind::label;
  std::string raw;
  std::optional<RegClass> reg_class;  // REG only
  std::optional<std::uint64_t> value;  // IMM only

  bool operator==(const Operand&) const = default;
};

struct Instruction {
  std::uint64_t address = 0;
  std::string mnemonic;
  std::vector<Operand> operands;

  bool operator==(const Instruction&) const = default;
};

struct Function {
  std::string name;
  std::uint64_t start = 0;
  std::vector<Instruction> instructions;
  std::vector<std::string> api_calls;    // first-occurrence order, no repeats
  std::vector<std::uint32_t> string_refs;  // first-occurrence order, no repeats

  bool operator==(const Function&) const = default;
};

struct Listing {
  std::string binary_id;
  std::vector<Function> functions;  // ascending start address
  std::set<std::string> imports;
  std::map<std::uint32_t, std::string> strings;

  bool operator==(const Listing&) const = default;

  const Function* find_function(std::string_view name) const {
    for (const auto& f : functions)
      if (f.name == name) return &f;
    return nullptr;
  }

  std::size_t instruction_count() const {
    std::size_t n = 0;
    for (const auto& f : functions) n += f.instructions.size();
    return n;
  }
};

struct Stats {
  std::size_t function_count = 0;
  std::size_t import_count = 0;
  std::size_t string_count = 0;

  bool operator==(const Stats&) const = default;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

struct Diagnostic {
  std::size_t line = 0;
  std::string message;
};

namespace detail {

inline std::string lowercase(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

inline std::string_view trim(std::string_view s) {
  auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; };
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

inline std::optional<std::uint64_t> parse_hex(std::string_view s) {
  if (s.size() > 2 && s[0] == '0' && (s[1] == 'x' || s[1] == 'X')) s.remove_prefix(2);
  if (s.empty()) return std::nullopt;
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v, 16);
  if (ec != std::errc{} || p != s.data() + s.size()) return std::nullopt;
  return v;
}

// Immediate grammar: 0x<hex> or [-]<decimal>. Negative values wrap to 64 bits.
inline std::optional<std::uint64_t> parse_immediate(std::string_view s) {
  bool negative = false;
  if (!s.empty() && (s[0] == '-' || s[0] == '+')) {
    negative = s[0] == '-';
    s.remove_prefix(1);
  }
  if (s.empty()) return std::nullopt;
  std::uint64_t v = 0;
  if (s.size() > 2 && s[0] == '0' && (s[1] == 'x' || s[1] == 'X')) {
    auto h = parse_hex(s);
    if (!h) return std::nullopt;
    v = *h;
  } else {
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v, 10);
    if (ec != std::errc{} || p != s.data() + s.size()) return std::nullopt;
  }
  return negative ? ~v + 1 : v;
}

inline std::optional<RegClass> register_class(std::string_view token) {
  static const std::unordered_map<std::string, RegClass> table = [] {
    std::unordered_map<std::string, RegClass> t;
    for (auto r : {"eax", "ebx", "ecx", "edx", "esi", "edi", "ebp", "esp"}) t[r] = RegClass::gp32;
    for (auto r : {"ax", "bx", "cx", "dx", "si", "di", "bp", "sp"}) t[r] = RegClass::gp16;
    for (auto r : {"al", "ah", "bl", "bh", "cl", "ch", "dl", "dh"}) t[r] = RegClass::gp8;
    for (auto r : {"cs", "ds", "es", "fs", "gs", "ss"}) t[r] = RegClass::seg;
    t["st"] = RegClass::fpu;
    for (int i = 0; i < 8; ++i) {
      t["st" + std::to_string(i)] = RegClass::fpu;
      t["st(" + std::to_string(i) + ")"] = RegClass::fpu;
      t["mm" + std::to_string(i)] = RegClass::other;
      t["cr" + std::to_string(i)] = RegClass::other;
      t["dr" + std::to_string(i)] = RegClass::other;
    }
    for (auto r : {"rax", "rbx", "rcx", "rdx", "rsi", "rdi", "rbp", "rsp", "rip", "eip", "ip",
                   "eflags", "flags", "sil", "dil", "bpl", "spl"})
      t[r] = RegClass::other;
    for (int i = 8; i < 16; ++i) {
      auto n = "r" + std::to_string(i);
      for (auto suffix : {"", "d", "w", "b"}) t[n + suffix] = RegClass::other;
    }
    for (int i = 0; i < 16; ++i) {
      t["xmm" + std::to_string(i)] = RegClass::other;
      t["ymm" + std::to_string(i)] = RegClass::other;
    }
    return t;
  }();
  auto it = table.find(lowercase(token));
  if (it == table.end()) return std::nullopt;
  return it->second;
}

inline std::optional<std::uint32_t> string_ref_index(std::string_view label) {
  constexpr std::string_view prefix = "str_";
  if (label.size() <= prefix.size() || label.substr(0, prefix.size()) != prefix) return std::nullopt;
  label.remove_prefix(prefix.size());
  std::uint32_t v = 0;
  auto [p, ec] = std::from_chars(label.data(), label.data() + label.size(), v, 10);
  if (ec != std::errc{} || p != label.data() + label.size()) return std::nullopt;
  return v;
}

// Strips a '#' comment, ignoring '#' inside double-quoted literals.
inline std::string_view strip_comment(std::string_view line) {
  bool in_quote = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (in_quote && c == '\\') {
      ++i;
    } else if (c == '"') {
      in_quote = !in_quote;
    } else if (c == '#' && !in_quote) {
      return line.substr(0, i);
    }
  }
  return line;
}

// With ascii_only, bytes >= 0x80 are escaped too.
inline std::string escape_literal(std::string_view s, bool ascii_only = false) {
  std::string out;
  out.reserve(s.size() + 2);
  static constexpr char hex[] = "0123456789abcdef";
  for (unsigned char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      case '\r': out += "\\r"; break;
      default:
        if (c < 0x20 || c == 0x7f || (ascii_only && c >= 0x80)) {
          out += "\\x";
          out += hex[c >> 4];
          out += hex[c & 0xf];
        } else {
          out += static_cast<char>(c);
        }
    }
  }
  return out;
}

inline std::optional<std::string> unescape_literal(std::string_view s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '\\') {
      if (s[i] == '"') return std::nullopt;
      out += s[i];
      continue;
    }
    if (++i >= s.size()) return std::nullopt;
    switch (s[i]) {
      case '"': out += '"'; break;
      case '\\': out += '\\'; break;
      case 'n': out += '\n'; break;
      case 't': out += '\t'; break;
      case 'r': out += '\r'; break;
      case 'x': {
        auto digits = s.substr(i + 1, 2);
        if (digits.size() != 2) return std::nullopt;
        auto v = parse_hex(digits);
        if (!v) return std::nullopt;
        out += static_cast<char>(*v);
        i += 2;
        break;
      }
      default: return std::nullopt;
    }
  }
  return out;
}

// Splits on commas outside brackets, parentheses and quotes.
inline std::vector<std::string_view> split_operands(std::string_view s) {
  std::vector<std::string_view> parts;
  int depth = 0;
  bool in_quote = false;
  std::size_t begin = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    char c = s[i];
    if (c == '"') in_quote = !in_quote;
    if (in_quote) continue;
    if (c == '[' || c == '(') ++depth;
    if (c == ']' || c == ')') --depth;
    if (c == ',' && depth == 0) {
      parts.push_back(trim(s.substr(begin, i - begin)));
      begin = i + 1;
    }
  }
  parts.push_back(trim(s.substr(begin)));
  return parts;
}

inline std::string hex_address(std::uint64_t a) {
  std::ostringstream os;
  os << std::hex;
  os.width(8);
  os.fill('0');
  os << a;
  return os.str();
}

inline std::pair<std::string_view, std::string_view> split_word(std::string_view s) {
  s = trim(s);
  auto pos = s.find_first_of(" \t");
  if (pos == std::string_view::npos) return {s, {}};
  return {s.substr(0, pos), trim(s.substr(pos))};
}

}  // namespace detail

/// Classifies one operand token: register names become REG, anything with
/// brackets MEM, 0x-prefixed or decimal numbers IMM, everything else LABEL.
inline Operand classify_operand(std::string_view token) {
  Operand op;
  op.raw = std::string(token);
  if (auto rc = detail::register_class(token)) {
    op.kind = OperandKind::reg;
    op.reg_class = rc;
  } else if (token.find('[') != std::string_view::npos) {
    op.kind = OperandKind::mem;
  } else if (auto v = detail::parse_immediate(token)) {
    op.kind = OperandKind::imm;
    op.value = v;
  } else {
    op.kind = OperandKind::label;
  }
  return op;
}

inline bool is_call(const Instruction& i) { return i.mnemonic == "call"; }

/// Parses a listing document. The BINARY header, when present, names the
/// listing; `binary_id` labels header-less (empty) documents. Calls to labels
/// that are neither imports nor local functions are reported through
/// `warnings` rather than rejected.
inline Listing parse_listing(std::string_view text, std::string_view binary_id = {},
                             std::vector<Diagnostic>* warnings = nullptr) {
  Listing listing;
  listing.binary_id = std::string(binary_id);

  struct PendingRef {
    std::size_t function;
    std::size_t line;
    std::uint32_t index;
  };
  struct PendingCall {
    std::size_t function;
    std::size_t line;
    std::string target;
  };
  std::vector<PendingRef> string_refs;
  std::vector<PendingCall> calls;
  std::vector<std::size_t> function_lines;
  std::unordered_set<std::string> seen_literals;

  bool seen_content = false;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    auto raw_line = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;

    auto line = detail::trim(detail::strip_comment(raw_line));
    if (line.empty()) continue;
    auto [keyword, rest] = detail::split_word(line);

    if (!seen_content) {
      seen_content = true;
      if (keyword != "BINARY") throw ParseError(line_no, "expected BINARY header");
      if (rest.empty()) throw ParseError(line_no, "BINARY header without id");
      listing.binary_id = std::string(rest);
      continue;
    }

    if (keyword == "BINARY") throw ParseError(line_no, "duplicate BINARY header");

    if (keyword == "IMPORT") {
      auto [name, extra] = detail::split_word(rest);
      if (name.empty() || !extra.empty()) throw ParseError(line_no, "malformed IMPORT");
      listing.imports.insert(std::string(name));
      continue;
    }

    if (keyword == "STRING") {
      auto [index_text, literal] = detail::split_word(rest);
      std::uint32_t index = 0;
      auto [p, ec] = std::from_chars(index_text.data(), index_text.data() + index_text.size(), index);
      if (ec != std::errc{} || p != index_text.data() + index_text.size())
        throw ParseError(line_no, "malformed STRING index");
      if (literal.size() < 2 || literal.front() != '"' || literal.back() != '"')
        throw ParseError(line_no, "STRING literal must be double-quoted");
      auto value = detail::unescape_literal(literal.substr(1, literal.size() - 2));
      if (!value) throw ParseError(line_no, "malformed escape in STRING literal");
      if (listing.strings.count(index)) throw ParseError(line_no, "duplicate STRING index " + std::to_string(index));
      if (!seen_literals.insert(*value).second) throw ParseError(line_no, "duplicate STRING literal");
      listing.strings.emplace(index, std::move(*value));
      continue;
    }

    if (keyword == "FUNCTION") {
      auto [name, tail] = detail::split_word(rest);
      auto [at, addr_text] = detail::split_word(tail);
      if (name.empty() || at != "@") throw ParseError(line_no, "expected FUNCTION <name> @ <addr>");
      auto addr = detail::parse_hex(addr_text);
      if (!addr) throw ParseError(line_no, "malformed function address");
      if (listing.find_function(name)) throw ParseError(line_no, "duplicate function name '" + std::string(name) + "'");
      Function f;
      f.name = std::string(name);
      f.start = *addr;
      listing.functions.push_back(std::move(f));
      function_lines.push_back(line_no);
      continue;
    }

    // Instruction line.
    if (listing.functions.empty()) throw ParseError(line_no, "instruction outside FUNCTION block");
    auto addr = detail::parse_hex(keyword);
    if (!addr) throw ParseError(line_no, "unknown directive or malformed address '" + std::string(keyword) + "'");
    auto [mnemonic, operand_text] = detail::split_word(rest);
    if (mnemonic.empty()) throw ParseError(line_no, "missing mnemonic");

    auto& fn = listing.functions.back();
    if (!fn.instructions.empty() && *addr <= fn.instructions.back().address)
      throw ParseError(line_no, "non-monotonic address at line " + std::to_string(line_no));

    Instruction ins;
    ins.address = *addr;
    ins.mnemonic = detail::lowercase(mnemonic);
    if (!operand_text.empty()) {
      auto parts = detail::split_operands(operand_text);
      if (parts.size() > 3) throw ParseError(line_no, "more than 3 operands");
      for (auto part : parts) {
        if (part.empty()) throw ParseError(line_no, "empty operand");
        ins.operands.push_back(classify_operand(part));
      }
    }
    std::size_t fidx = listing.functions.size() - 1;
    for (const auto& op : ins.operands) {
      if (op.kind != OperandKind::label) continue;
      if (auto idx = detail::string_ref_index(op.raw)) string_refs.push_back({fidx, line_no, *idx});
    }
    if (is_call(ins) && ins.operands.size() == 1 && ins.operands[0].kind == OperandKind::label)
      calls.push_back({fidx, line_no, ins.operands[0].raw});
    fn.instructions.push_back(std::move(ins));
  }

  for (std::size_t i = 0; i < listing.functions.size(); ++i)
    if (listing.functions[i].instructions.empty())
      throw ParseError(function_lines[i], "function '" + listing.functions[i].name + "' has no instructions");

  for (const auto& c : calls) {
    auto& fn = listing.functions[c.function];
    if (listing.imports.count(c.target)) {
      if (std::find(fn.api_calls.begin(), fn.api_calls.end(), c.target) == fn.api_calls.end())
        fn.api_calls.push_back(c.target);
    } else if (!listing.find_function(c.target) && warnings) {
      warnings->push_back({c.line, "call to undeclared import '" + c.target + "'"});
    }
  }
  for (const auto& r : string_refs) {
    if (!listing.strings.count(r.index))
      throw ParseError(r.line, "reference to undefined string " + std::to_string(r.index));
    auto& refs = listing.functions[r.function].string_refs;
    if (std::find(refs.begin(), refs.end(), r.index) == refs.end()) refs.push_back(r.index);
  }

  // Canonical order, then reject overlapping address ranges.
  std::vector<std::size_t> order(listing.functions.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return listing.functions[a].start < listing.functions[b].start;
  });
  std::vector<Function> sorted;
  sorted.reserve(order.size());
  for (auto i : order) sorted.push_back(std::move(listing.functions[i]));
  listing.functions = std::move(sorted);

  auto low = [](const Function& f) { return std::min(f.start, f.instructions.front().address); };
  auto high = [](const Function& f) { return std::max(f.start, f.instructions.back().address); };
  for (std::size_t i = 1; i < listing.functions.size(); ++i) {
    const auto& prev = listing.functions[i - 1];
    const auto& cur = listing.functions[i];
    if (low(cur) <= high(prev))
      throw ParseError(function_lines[order[i]], "function '" + cur.name + "' overlaps '" + prev.name + "'");
  }
  return listing;
}

/// Writes the canonical form: header, sorted imports, strings by index, then
/// functions in ascending start order with single-space-separated fields.
inline std::string serialize_listing(const Listing& l) {
  std::ostringstream os;
  os << "BINARY " << l.binary_id << '\n';
  for (const auto& imp : l.imports) os << "IMPORT " << imp << '\n';
  for (const auto& [index, literal] : l.strings) os << "STRING " << index << " \"" << detail::escape_literal(literal) << "\"\n";

  std::vector<const Function*> fns;
  for (const auto& f : l.functions) fns.push_back(&f);
  std::stable_sort(fns.begin(), fns.end(), [](auto* a, auto* b) { return a->start < b->start; });
  for (const auto* f : fns) {
    os << "FUNCTION " << f->name << " @ 0x" << detail::hex_address(f->start) << '\n';
    for (const auto& ins : f->instructions) {
      os << "  " << detail::hex_address(ins.address) << "  " << ins.mnemonic;
      for (std::size_t i = 0; i < ins.operands.size(); ++i) os << (i == 0 ? "  " : ", ") << ins.operands[i].raw;
      os << '\n';
    }
  }
  return os.str();
}

inline Stats listing_stats(const Listing& l) {
  return {l.functions.size(), l.imports.size(), l.strings.size()};
}

}  // namespace vtriage
