#pragma once

#include "support/corpus.hpp"

namespace vtriage::testkit {

// Byte-oriented RC4 step loop in the shape of the older variant.
inline std::vector<AsmLine> rc4_reference_body() {
  return {
      {"push", {"ebp"}},
      {"mov", {"ebp", "esp"}},
      {"push", {"ebx"}},
      {"push", {"esi"}},
      {"mov", {"esi", "[ebp+0x8]"}},
      {"xor", {"ecx", "ecx"}},
      {"mov", {"cl", "[esi+0x100]"}},
      {"mov", {"dl", "[esi+0x101]"}},
      {"inc", {"cl"}},
      {"mov", {"al", "[esi+ecx]"}},
      {"add", {"dl", "al"}},
      {"movzx", {"ebx", "dl"}},
      {"mov", {"ah", "[esi+ebx]"}},
      {"mov", {"[esi+ecx]", "ah"}},
      {"mov", {"[esi+ebx]", "al"}},
      {"add", {"al", "ah"}},
  };
}

// Same loop with two extra instructions, as in the newer variant.
inline std::vector<AsmLine> rc4_variant_body() {
  auto body = rc4_reference_body();
  body.insert(body.begin() + 3, {"xor", {"eax", "eax"}});
  body.insert(body.begin() + 14, {"movzx", {"ecx", "cl"}});
  return body;
}

struct Rc4Fixture {
  Listing ref;
  Listing tgt;
};

inline Rc4Fixture rc4_fixture() {
  Rc4Fixture fx;
  fx.ref.binary_id = "zeus";
  fx.tgt.binary_id = "citadel";
  fx.ref.functions.push_back(make_function("rc4_crypt", 0, rc4_reference_body()));
  fx.tgt.functions.push_back(make_function("rc4_crypt", 0, rc4_variant_body()));
  layout(fx.ref, 0x401000);
  layout(fx.tgt, 0x402000);
  return fx;
}

}  // namespace vtriage::testkit
