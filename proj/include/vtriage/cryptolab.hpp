#pragma once

// Citadel cipher compositions.
//
//   message:  out = lkey ^ RC4(state, VE(in))
//   config:   out = VD(AES-128-ECB-decrypt(key, in)), key = RC4(state, MD5(lkey))
//   strings:  out[j] = in[j] ^ j ^ key
//
// VE/VD are the chained-XOR "visual" encoders. `state` is the RC4 permutation
// derived from the context's key material through the provider's KSA.

#include <algorithm>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "vtriage/crypto_primitives.hpp"

namespace vtriage {

enum class AesKeyDerivation {
  rc4_of_md5,        // RC4(state, MD5(lkey))
  md5_xor_material,  // MD5(lkey) ^ rc4_key_material, material repeated
  rc4_of_md5_lkey,   // RC4(state, MD5(lkey)) ^ lkey, lkey repeated
};

struct CryptoContext {
  Bytes login_key;
  Bytes rc4_key_material;
  std::uint8_t string_key = 0;
  AesKeyDerivation aes_key_derivation = AesKeyDerivation::rc4_of_md5;
};

struct PackedRecord {
  std::uint16_t id = 0;
  std::uint16_t flags = 0;
  std::uint16_t length = 0;
  std::uint16_t reserved = 0;
  Bytes payload;

  bool operator==(const PackedRecord&) const = default;
};

class RecordError : public std::runtime_error {
 public:
  RecordError(std::size_t offset, const std::string& what)
      : std::runtime_error("offset " + std::to_string(offset) + ": " + what), offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

inline Bytes visual_encrypt(std::span<const std::uint8_t> in) {
  Bytes out(in.begin(), in.end());
  for (std::size_t i = 1; i < out.size(); ++i) out[i] ^= out[i - 1];
  return out;
}

inline Bytes visual_decrypt(std::span<const std::uint8_t> in) {
  Bytes out(in.begin(), in.end());
  for (std::size_t i = out.size(); i-- > 1;) out[i] ^= out[i - 1];
  return out;
}

inline Bytes decrypt_strings(std::span<const std::uint8_t> packed, std::uint8_t key) {
  Bytes out(packed.begin(), packed.end());
  for (std::size_t j = 0; j < out.size(); ++j) out[j] ^= static_cast<std::uint8_t>(j & 0xff) ^ key;
  return out;
}

/// Variant with a multi-byte key indexed like the data: key[j mod |key|].
inline Bytes decrypt_strings(std::span<const std::uint8_t> packed, std::span<const std::uint8_t> key) {
  if (key.empty()) throw std::invalid_argument("string key must not be empty");
  Bytes out(packed.begin(), packed.end());
  for (std::size_t j = 0; j < out.size(); ++j) out[j] ^= static_cast<std::uint8_t>(j & 0xff) ^ key[j % key.size()];
  return out;
}

namespace detail {

inline void require_login_key(const CryptoContext& ctx) {
  if (ctx.login_key.empty()) throw std::invalid_argument("login key must not be empty");
}

inline void xor_cyclic(Bytes& data, std::span<const std::uint8_t> key) {
  for (std::size_t i = 0; i < data.size(); ++i) data[i] ^= key[i % key.size()];
}

}  // namespace detail

inline Rc4State derive_rc4_state(const CryptoContext& ctx, const PrimitiveProvider& p = builtin_primitives()) {
  if (ctx.rc4_key_material.empty()) throw std::invalid_argument("RC4 key material must not be empty");
  return p.rc4_ksa(ctx.rc4_key_material);
}

inline Bytes citadel_encrypt(std::span<const std::uint8_t> plain, const CryptoContext& ctx,
                             const PrimitiveProvider& p = builtin_primitives()) {
  detail::require_login_key(ctx);
  auto out = p.rc4_apply(derive_rc4_state(ctx, p), visual_encrypt(plain));
  detail::xor_cyclic(out, ctx.login_key);
  return out;
}

inline Bytes citadel_decrypt(std::span<const std::uint8_t> cipher, const CryptoContext& ctx,
                             const PrimitiveProvider& p = builtin_primitives()) {
  detail::require_login_key(ctx);
  Bytes masked(cipher.begin(), cipher.end());
  detail::xor_cyclic(masked, ctx.login_key);
  return visual_decrypt(p.rc4_apply(derive_rc4_state(ctx, p), masked));
}

inline AesKey derive_aes_key(const CryptoContext& ctx, const PrimitiveProvider& p = builtin_primitives()) {
  detail::require_login_key(ctx);
  const auto digest = p.md5(ctx.login_key);
  Bytes key;
  switch (ctx.aes_key_derivation) {
    case AesKeyDerivation::rc4_of_md5:
      key = p.rc4_apply(derive_rc4_state(ctx, p), digest);
      break;
    case AesKeyDerivation::md5_xor_material:
      if (ctx.rc4_key_material.empty()) throw std::invalid_argument("RC4 key material must not be empty");
      key.assign(digest.begin(), digest.end());
      detail::xor_cyclic(key, ctx.rc4_key_material);
      break;
    case AesKeyDerivation::rc4_of_md5_lkey:
      key = p.rc4_apply(derive_rc4_state(ctx, p), digest);
      detail::xor_cyclic(key, ctx.login_key);
      break;
  }
  if (key.size() != 16) throw std::logic_error("AES key derivation produced " + std::to_string(key.size()) + " bytes");
  AesKey out;
  std::copy(key.begin(), key.end(), out.begin());
  return out;
}

inline Bytes config_decrypt(std::span<const std::uint8_t> cipher, const CryptoContext& ctx,
                            const PrimitiveProvider& p = builtin_primitives()) {
  if (cipher.size() % 16 != 0)
    throw std::invalid_argument("ciphertext length " + std::to_string(cipher.size()) + " is not a multiple of 16");
  return visual_decrypt(p.aes128_ecb_decrypt(derive_aes_key(ctx, p), cipher));
}

/// Inverse of config_decrypt. Plaintext must be block aligned.
inline Bytes config_encrypt(std::span<const std::uint8_t> plain, const CryptoContext& ctx,
                            const PrimitiveProvider& p = builtin_primitives()) {
  if (plain.size() % 16 != 0)
    throw std::invalid_argument("plaintext length " + std::to_string(plain.size()) + " is not a multiple of 16");
  return p.aes128_ecb_encrypt(derive_aes_key(ctx, p), visual_encrypt(plain));
}

/// Consecutive records: an 8-byte little-endian header (id, flags, length,
/// reserved) followed by `length` payload bytes.
inline std::vector<PackedRecord> parse_packed_records(std::span<const std::uint8_t> data) {
  std::vector<PackedRecord> out;
  auto u16 = [&](std::size_t at) { return static_cast<std::uint16_t>(data[at] | data[at + 1] << 8); };
  std::size_t off = 0;
  while (off < data.size()) {
    if (data.size() - off < 8)
      throw RecordError(off, "truncated header: " + std::to_string(data.size() - off) + " of 8 bytes");
    PackedRecord r{u16(off), u16(off + 2), u16(off + 4), u16(off + 6), {}};
    const auto body = off + 8;
    if (data.size() - body < r.length)
      throw RecordError(body, "truncated payload: " + std::to_string(data.size() - body) + " of " +
                                  std::to_string(r.length) + " bytes");
    r.payload.assign(data.begin() + static_cast<std::ptrdiff_t>(body),
                     data.begin() + static_cast<std::ptrdiff_t>(body + r.length));
    out.push_back(std::move(r));
    off = body + out.back().length;
  }
  return out;
}

/// Inverse of parse_packed_records. Each record's length must match its payload.
inline Bytes serialize_packed_records(std::span<const PackedRecord> records) {
  Bytes out;
  for (const auto& r : records) {
    if (r.payload.size() != r.length) throw std::invalid_argument("record length does not match payload size");
    for (auto v : {r.id, r.flags, r.length, r.reserved}) {
      out.push_back(static_cast<std::uint8_t>(v & 0xff));
      out.push_back(static_cast<std::uint8_t>(v >> 8));
    }
    out.insert(out.end(), r.payload.begin(), r.payload.end());
  }
  return out;
}

}  // namespace vtriage
