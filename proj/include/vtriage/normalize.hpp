#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "vtriage/asm_model.hpp"

namespace vtriage {

// Abstraction ladder, from least to most erasure: L0 < LX < L1 < L2.
//   L0  raw operand text
//   LX  registers and immediates verbatim, memory operands -> MEM
//   L1  registers -> class name, memory -> MEM, immediates verbatim
//   L2  registers -> REG, memory -> MEM, immediates -> VAL
// Labels are kept verbatim at every level.
enum class NormalizationLevel { l0, lx, l1, l2 };

inline std::string_view to_string(NormalizationLevel l) {
  switch (l) {
    case NormalizationLevel::l0: return "L0";
    case NormalizationLevel::lx: return "LX";
    case NormalizationLevel::l1: return "L1";
    case NormalizationLevel::l2: return "L2";
  }
  return "?";
}

inline std::optional<NormalizationLevel> parse_level(std::string_view s) {
  if (s == "L0") return NormalizationLevel::l0;
  if (s == "LX") return NormalizationLevel::lx;
  if (s == "L1") return NormalizationLevel::l1;
  if (s == "L2") return NormalizationLevel::l2;
  return std::nullopt;
}

inline std::string normalize_operand(const Operand& op, NormalizationLevel level) {
  if (level == NormalizationLevel::l0) return op.raw;
  switch (op.kind) {
    case OperandKind::mem: return "MEM";
    case OperandKind::label: return op.raw;
    case OperandKind::imm: return level == NormalizationLevel::l2 ? "VAL" : op.raw;
    case OperandKind::reg:
      switch (level) {
        case NormalizationLevel::lx: return detail::lowercase(op.raw);
        case NormalizationLevel::l1: return std::string(to_string(op.reg_class.value_or(RegClass::other)));
        default: return "REG";
      }
  }
  return op.raw;
}

inline std::vector<std::string> normalize_instruction(const Instruction& ins, NormalizationLevel level) {
  std::vector<std::string> tokens;
  tokens.reserve(1 + ins.operands.size());
  tokens.push_back(ins.mnemonic);
  for (const auto& op : ins.operands) tokens.push_back(normalize_operand(op, level));
  return tokens;
}

/// Single-string form of normalize_instruction. Token boundaries are encoded
/// with unit separators so distinct token sequences never collide.
inline std::string normalized_text(const Instruction& ins, NormalizationLevel level) {
  std::string out = ins.mnemonic;
  for (const auto& op : ins.operands) {
    out += '\x1f';
    out += normalize_operand(op, level);
  }
  return out;
}

namespace detail {

inline std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t mix64(std::uint64_t x) {
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebULL;
  x ^= x >> 31;
  return x;
}

}  // namespace detail

/// 64-bit digest of one instruction's LX tokens.
inline std::uint64_t instruction_digest(const Instruction& ins) {
  return detail::fnv1a(normalized_text(ins, NormalizationLevel::lx));
}

/// Default window hash: an order-sensitive fold over per-instruction digests.
struct WindowHasher {
  std::uint64_t operator()(std::span<const std::uint64_t> digests) const {
    std::uint64_t h = 0x6a09e667f3bcc909ULL ^ digests.size();
    for (auto d : digests) h = detail::mix64(h * 0x9e3779b97f4a7c15ULL + d);
    return h;
  }
};

using FeaturePair = std::pair<std::string, std::string>;

struct Window {
  const Function* function = nullptr;
  std::size_t start_index = 0;
  std::size_t length = 0;
  NormalizationLevel level = NormalizationLevel::l1;
  std::vector<std::vector<std::string>> tokens;  // one group per instruction
  std::uint64_t exact_hash = 0;
  std::vector<std::string> features;         // sorted, unique
  std::vector<FeaturePair> feature_pairs;    // sorted, first < second

  std::span<const Instruction> instructions() const {
    return std::span<const Instruction>(function->instructions).subspan(start_index, length);
  }
};

/// Atomic features of an instruction run: MNEM:<m> per distinct mnemonic,
/// OPK:<kind> per distinct operand kind, PAIR:<m>:<first-operand-kind>.
/// Presence only; the result is sorted and unique.
inline std::vector<std::string> extract_features(std::span<const Instruction> run) {
  std::vector<std::string> out;
  for (const auto& ins : run) {
    out.push_back("MNEM:" + ins.mnemonic);
    for (const auto& op : ins.operands) out.push_back("OPK:" + std::string(to_string(op.kind)));
    if (!ins.operands.empty()) out.push_back("PAIR:" + ins.mnemonic + ":" + std::string(to_string(ins.operands[0].kind)));
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

inline std::vector<std::string> extract_features(const Window& w) { return extract_features(w.instructions()); }

/// All 2-subsets of a sorted unique feature list.
inline std::vector<FeaturePair> feature_pairs(const std::vector<std::string>& features) {
  std::vector<FeaturePair> out;
  if (features.size() >= 2) out.reserve(features.size() * (features.size() - 1) / 2);
  for (std::size_t i = 0; i < features.size(); ++i)
    for (std::size_t j = i + 1; j < features.size(); ++j) out.emplace_back(features[i], features[j]);
  return out;
}

inline std::size_t window_count(std::size_t n, std::size_t size, std::size_t stride) {
  if (size == 0 || stride == 0 || n < size) return 0;
  return (n - size) / stride + 1;
}

/// Slices a function into fixed-size windows. The exact hash is always taken
/// at LX; tokens and features use `level`.
template <typename Hasher = WindowHasher>
std::vector<Window> windows(const Function& f, std::size_t size, std::size_t stride, NormalizationLevel level,
                            const Hasher& hasher = {}) {
  std::vector<Window> out;
  const std::size_t count = window_count(f.instructions.size(), size, stride);
  if (count == 0) return out;

  std::vector<std::uint64_t> digests;
  digests.reserve(f.instructions.size());
  for (const auto& ins : f.instructions) digests.push_back(instruction_digest(ins));

  out.reserve(count);
  for (std::size_t w = 0; w < count; ++w) {
    Window win;
    win.function = &f;
    win.start_index = w * stride;
    win.length = size;
    win.level = level;
    for (const auto& ins : win.instructions()) win.tokens.push_back(normalize_instruction(ins, level));
    win.exact_hash = hasher(std::span<const std::uint64_t>(digests).subspan(win.start_index, size));
    win.features = extract_features(win);
    win.feature_pairs = feature_pairs(win.features);
    out.push_back(std::move(win));
  }
  return out;
}

}  // namespace vtriage
