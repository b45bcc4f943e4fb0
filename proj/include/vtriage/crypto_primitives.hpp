#pragma once

// RC4, MD5 and AES-128 block primitives, plus the provider table the cipher
// pipelines call through so any primitive can be swapped out.

#include <array>
#include <cstdint>
#include <cstring>
#include <functional>
#include <span>
#include <string>
#include <stdexcept>
#include <string_view>
#include <vector>

namespace vtriage {

using Bytes = std::vector<std::uint8_t>;
using Rc4State = std::array<std::uint8_t, 256>;
using Md5Digest = std::array<std::uint8_t, 16>;
using AesBlock = std::array<std::uint8_t, 16>;
using AesKey = std::array<std::uint8_t, 16>;

inline Bytes to_bytes(std::string_view s) { return Bytes(s.begin(), s.end()); }

// ---------------------------------------------------------------- RC4

inline Rc4State rc4_ksa(std::span<const std::uint8_t> key) {
  if (key.empty()) throw std::invalid_argument("RC4 key must not be empty");
  Rc4State s;
  for (int i = 0; i < 256; ++i) s[i] = static_cast<std::uint8_t>(i);
  std::uint8_t j = 0;
  for (int i = 0; i < 256; ++i) {
    j = static_cast<std::uint8_t>(j + s[i] + key[i % key.size()]);
    std::swap(s[i], s[j]);
  }
  return s;
}

/// XORs `data` with the keystream of a fresh generator started from `state`.
inline Bytes rc4_apply(Rc4State state, std::span<const std::uint8_t> data) {
  Bytes out(data.begin(), data.end());
  std::uint8_t i = 0, j = 0;
  for (auto& b : out) {
    ++i;
    j = static_cast<std::uint8_t>(j + state[i]);
    std::swap(state[i], state[j]);
    b ^= state[static_cast<std::uint8_t>(state[i] + state[j])];
  }
  return out;
}

// ---------------------------------------------------------------- MD5

inline Md5Digest md5(std::span<const std::uint8_t> data) {
  static constexpr std::uint32_t k[64] = {
      0xd76aa478, 0xe8c7b756, 0x242070db, 0xc1bdceee, 0xf57c0faf, 0x4787c62a, 0xa8304613, 0xfd469501,
      0x698098d8, 0x8b44f7af, 0xffff5bb1, 0x895cd7be, 0x6b901122, 0xfd987193, 0xa679438e, 0x49b40821,
      0xf61e2562, 0xc040b340, 0x265e5a51, 0xe9b6c7aa, 0xd62f105d, 0x02441453, 0xd8a1e681, 0xe7d3fbc8,
      0x21e1cde6, 0xc33707d6, 0xf4d50d87, 0x455a14ed, 0xa9e3e905, 0xfcefa3f8, 0x676f02d9, 0x8d2a4c8a,
      0xfffa3942, 0x8771f681, 0x6d9d6122, 0xfde5380c, 0xa4beea44, 0x4bdecfa9, 0xf6bb4b60, 0xbebfbc70,
      0x289b7ec6, 0xeaa127fa, 0xd4ef3085, 0x04881d05, 0xd9d4d039, 0xe6db99e5, 0x1fa27cf8, 0xc4ac5665,
      0xf4292244, 0x432aff97, 0xab9423a7, 0xfc93a039, 0x655b59c3, 0x8f0ccc92, 0xffeff47d, 0x85845dd1,
      0x6fa87e4f, 0xfe2ce6e0, 0xa3014314, 0x4e0811a1, 0xf7537e82, 0xbd3af235, 0x2ad7d2bb, 0xeb86d391};
  static constexpr int r[64] = {7, 12, 17, 22, 7, 12, 17, 22, 7, 12, 17, 22, 7, 12, 17, 22,
                                5, 9,  14, 20, 5, 9,  14, 20, 5, 9,  14, 20, 5, 9,  14, 20,
                                4, 11, 16, 23, 4, 11, 16, 23, 4, 11, 16, 23, 4, 11, 16, 23,
                                6, 10, 15, 21, 6, 10, 15, 21, 6, 10, 15, 21, 6, 10, 15, 21};

  Bytes msg(data.begin(), data.end());
  const std::uint64_t bit_len = static_cast<std::uint64_t>(data.size()) * 8;
  msg.push_back(0x80);
  while (msg.size() % 64 != 56) msg.push_back(0);
  for (int i = 0; i < 8; ++i) msg.push_back(static_cast<std::uint8_t>(bit_len >> (8 * i)));

  std::uint32_t h[4] = {0x67452301, 0xefcdab89, 0x98badcfe, 0x10325476};
  for (std::size_t off = 0; off < msg.size(); off += 64) {
    std::uint32_t m[16];
    for (int i = 0; i < 16; ++i)
      m[i] = std::uint32_t(msg[off + 4 * i]) | std::uint32_t(msg[off + 4 * i + 1]) << 8 |
             std::uint32_t(msg[off + 4 * i + 2]) << 16 | std::uint32_t(msg[off + 4 * i + 3]) << 24;
    std::uint32_t a = h[0], b = h[1], c = h[2], d = h[3];
    for (int i = 0; i < 64; ++i) {
      std::uint32_t f;
      int g;
      if (i < 16) {
        f = (b & c) | (~b & d);
        g = i;
      } else if (i < 32) {
        f = (d & b) | (~d & c);
        g = (5 * i + 1) % 16;
      } else if (i < 48) {
        f = b ^ c ^ d;
        g = (3 * i + 5) % 16;
      } else {
        f = c ^ (b | ~d);
        g = (7 * i) % 16;
      }
      const std::uint32_t t = d;
      d = c;
      c = b;
      const std::uint32_t x = a + f + k[i] + m[g];
      b = b + ((x << r[i]) | (x >> (32 - r[i])));
      a = t;
    }
    h[0] += a;
    h[1] += b;
    h[2] += c;
    h[3] += d;
  }
  Md5Digest out;
  for (int i = 0; i < 16; ++i) out[i] = static_cast<std::uint8_t>(h[i / 4] >> (8 * (i % 4)));
  return out;
}

// ---------------------------------------------------------------- AES-128

namespace detail {

constexpr std::uint8_t gf_mul(std::uint8_t a, std::uint8_t b) {
  std::uint8_t p = 0;
  while (b) {
    if (b & 1) p ^= a;
    a = static_cast<std::uint8_t>((a << 1) ^ ((a & 0x80) ? 0x1b : 0));
    b >>= 1;
  }
  return p;
}

constexpr std::array<std::uint8_t, 256> make_sbox() {
  std::array<std::uint8_t, 256> s{};
  for (int x = 0; x < 256; ++x) {
    // Multiplicative inverse as x^254; 0 maps to 0.
    std::uint8_t inv = 1, base = static_cast<std::uint8_t>(x);
    for (int e = 254; e; e >>= 1) {
      if (e & 1) inv = gf_mul(inv, base);
      base = gf_mul(base, base);
    }
    if (x == 0) inv = 0;
    std::uint8_t y = inv;
    for (int k = 1; k <= 4; ++k) y ^= static_cast<std::uint8_t>((inv << k) | (inv >> (8 - k)));
    s[x] = static_cast<std::uint8_t>(y ^ 0x63);
  }
  return s;
}

constexpr std::array<std::uint8_t, 256> kSbox = make_sbox();

constexpr std::array<std::uint8_t, 256> make_inv_sbox() {
  std::array<std::uint8_t, 256> inv{};
  for (int x = 0; x < 256; ++x) inv[kSbox[x]] = static_cast<std::uint8_t>(x);
  return inv;
}

constexpr std::array<std::uint8_t, 256> kInvSbox = make_inv_sbox();

using RoundKeys = std::array<std::uint8_t, 176>;

inline RoundKeys expand_key(const AesKey& key) {
  RoundKeys w{};
  std::memcpy(w.data(), key.data(), 16);
  std::uint8_t rcon = 1;
  for (int i = 16; i < 176; i += 4) {
    std::uint8_t t[4] = {w[i - 4], w[i - 3], w[i - 2], w[i - 1]};
    if (i % 16 == 0) {
      const std::uint8_t first = t[0];
      t[0] = static_cast<std::uint8_t>(kSbox[t[1]] ^ rcon);
      t[1] = kSbox[t[2]];
      t[2] = kSbox[t[3]];
      t[3] = kSbox[first];
      rcon = gf_mul(rcon, 2);
    }
    for (int k = 0; k < 4; ++k) w[i + k] = w[i - 16 + k] ^ t[k];
  }
  return w;
}

inline void add_round_key(AesBlock& s, const RoundKeys& w, int round) {
  for (int i = 0; i < 16; ++i) s[i] ^= w[16 * round + i];
}

// State is column-major: byte (row r, column c) sits at 4c + r.
inline void shift_rows(AesBlock& s, bool inverse) {
  for (int r = 1; r < 4; ++r) {
    std::uint8_t row[4];
    for (int c = 0; c < 4; ++c) row[c] = s[4 * c + r];
    for (int c = 0; c < 4; ++c) s[4 * c + r] = inverse ? row[(c + 4 - r) % 4] : row[(c + r) % 4];
  }
}

constexpr std::array<std::uint8_t, 256> make_mul_table(std::uint8_t factor) {
  std::array<std::uint8_t, 256> t{};
  for (int x = 0; x < 256; ++x) t[x] = gf_mul(static_cast<std::uint8_t>(x), factor);
  return t;
}

constexpr auto kMul2 = make_mul_table(2), kMul3 = make_mul_table(3), kMul9 = make_mul_table(9),
               kMul11 = make_mul_table(11), kMul13 = make_mul_table(13), kMul14 = make_mul_table(14);

inline void mix_columns(AesBlock& s) {
  for (int c = 0; c < 16; c += 4) {
    const std::uint8_t a0 = s[c], a1 = s[c + 1], a2 = s[c + 2], a3 = s[c + 3];
    s[c] = kMul2[a0] ^ kMul3[a1] ^ a2 ^ a3;
    s[c + 1] = a0 ^ kMul2[a1] ^ kMul3[a2] ^ a3;
    s[c + 2] = a0 ^ a1 ^ kMul2[a2] ^ kMul3[a3];
    s[c + 3] = kMul3[a0] ^ a1 ^ a2 ^ kMul2[a3];
  }
}

inline void inv_mix_columns(AesBlock& s) {
  for (int c = 0; c < 16; c += 4) {
    const std::uint8_t a0 = s[c], a1 = s[c + 1], a2 = s[c + 2], a3 = s[c + 3];
    s[c] = kMul14[a0] ^ kMul11[a1] ^ kMul13[a2] ^ kMul9[a3];
    s[c + 1] = kMul9[a0] ^ kMul14[a1] ^ kMul11[a2] ^ kMul13[a3];
    s[c + 2] = kMul13[a0] ^ kMul9[a1] ^ kMul14[a2] ^ kMul11[a3];
    s[c + 3] = kMul11[a0] ^ kMul13[a1] ^ kMul9[a2] ^ kMul14[a3];
  }
}

inline AesBlock encrypt_block(const RoundKeys& w, const AesBlock& in) {
  AesBlock s = in;
  add_round_key(s, w, 0);
  for (int round = 1; round <= 10; ++round) {
    for (auto& b : s) b = kSbox[b];
    shift_rows(s, false);
    if (round != 10) mix_columns(s);
    add_round_key(s, w, round);
  }
  return s;
}

inline AesBlock decrypt_block(const RoundKeys& w, const AesBlock& in) {
  AesBlock s = in;
  add_round_key(s, w, 10);
  for (int round = 9; round >= 0; --round) {
    shift_rows(s, true);
    for (auto& b : s) b = kInvSbox[b];
    add_round_key(s, w, round);
    if (round != 0) inv_mix_columns(s);
  }
  return s;
}

template <typename BlockFn>
Bytes ecb(std::span<const std::uint8_t> in, BlockFn&& fn) {
  if (in.size() % 16 != 0)
    throw std::invalid_argument("AES input length " + std::to_string(in.size()) + " is not a multiple of 16");
  Bytes out(in.size());
  AesBlock block;
  for (std::size_t off = 0; off < in.size(); off += 16) {
    std::memcpy(block.data(), in.data() + off, 16);
    block = fn(block);
    std::memcpy(out.data() + off, block.data(), 16);
  }
  return out;
}

}  // namespace detail

inline AesBlock aes128_encrypt_block(const AesKey& key, const AesBlock& in) {
  return detail::encrypt_block(detail::expand_key(key), in);
}

inline AesBlock aes128_decrypt_block(const AesKey& key, const AesBlock& in) {
  return detail::decrypt_block(detail::expand_key(key), in);
}

/// ECB over a block-aligned buffer; the key schedule is expanded once.
inline Bytes aes128_ecb_encrypt(const AesKey& key, std::span<const std::uint8_t> in) {
  const auto w = detail::expand_key(key);
  return detail::ecb(in, [&](const AesBlock& b) { return detail::encrypt_block(w, b); });
}

inline Bytes aes128_ecb_decrypt(const AesKey& key, std::span<const std::uint8_t> in) {
  const auto w = detail::expand_key(key);
  return detail::ecb(in, [&](const AesBlock& b) { return detail::decrypt_block(w, b); });
}

// ---------------------------------------------------------------- provider

/// Primitive table used by the cipher pipelines. Replace rc4_ksa to model a
/// non-standard key schedule.
struct PrimitiveProvider {
  std::function<Rc4State(std::span<const std::uint8_t>)> rc4_ksa = vtriage::rc4_ksa;
  std::function<Bytes(const Rc4State&, std::span<const std::uint8_t>)> rc4_apply = vtriage::rc4_apply;
  std::function<Md5Digest(std::span<const std::uint8_t>)> md5 = vtriage::md5;
  std::function<Bytes(const AesKey&, std::span<const std::uint8_t>)> aes128_ecb_encrypt = vtriage::aes128_ecb_encrypt;
  std::function<Bytes(const AesKey&, std::span<const std::uint8_t>)> aes128_ecb_decrypt = vtriage::aes128_ecb_decrypt;
};

inline const PrimitiveProvider& builtin_primitives() {
  static const PrimitiveProvider p;
  return p;
}

}  // namespace vtriage
