#include <gtest/gtest.h>

#include <set>

#include "support/clone_oracle.hpp"
#include "support/corpus.hpp"
#include "support/fixtures.hpp"
#include "vtriage/clonedetect.hpp"

using namespace vtriage;
using namespace vtriage::testkit;

namespace {

Listing single(const std::string& id, const std::vector<AsmLine>& body) {
  Listing l;
  l.binary_id = id;
  l.functions.push_back(make_function("f", 0x1000, body));
  return l;
}

CloneParams params(std::size_t window, double threshold = 0.8, CloneMethod method = CloneMethod::two_combination) {
  CloneParams p;
  p.window_size = window;
  p.threshold = threshold;
  p.method = method;
  return p;
}

TEST(CloneParams, Validation) {
  EXPECT_THROW(params(0).validate(), std::invalid_argument);
  EXPECT_THROW(params(15, 0.0).validate(), std::invalid_argument);
  EXPECT_THROW(params(15, 1.5).validate(), std::invalid_argument);
  EXPECT_NO_THROW(params(15, 1.0).validate());
  CloneParams p;
  EXPECT_EQ(p.window_size, 15u);
  EXPECT_DOUBLE_EQ(p.threshold, 0.8);
}

TEST(FindExactClones, SelfClonesOnDiagonal) {
  AsmGenerator gen(11);
  auto l = single("a", gen.body(20));
  auto clones = find_exact_clones(l, l, params(15));
  ASSERT_EQ(clones.size(), 6u);
  for (std::size_t i = 0; i < clones.size(); ++i) {
    EXPECT_EQ(clones[i].kind, CloneKind::exact);
    EXPECT_EQ(clones[i].ref_region.start_index, i);
    EXPECT_EQ(clones[i].target_region.start_index, i);
    EXPECT_DOUBLE_EQ(clones[i].similarity, 1.0);
  }
}

TEST(FindExactClones, MemoryAddressesIgnored) {
  std::vector<AsmLine> body{{"mov", {"eax", "[0x400000]"}}, {"ret", {}}, {"push", {"ebx"}}};
  auto tgt_body = body;
  tgt_body[0].operands[1] = "[0x500000]";
  auto clones = find_exact_clones(single("r", body), single("t", tgt_body), params(3));
  ASSERT_EQ(clones.size(), 1u);
  EXPECT_EQ(clones[0].kind, CloneKind::exact);
}

TEST(FindExactClones, RegistersMatter) {
  std::vector<AsmLine> body{{"mov", {"eax", "0x1"}}, {"ret", {}}, {"push", {"ebx"}}};
  auto tgt_body = body;
  tgt_body[0].operands[0] = "ebx";
  EXPECT_TRUE(find_exact_clones(single("r", body), single("t", tgt_body), params(3)).empty());
}

// A hasher that sends every window to one bucket: confirmation must reject
// all hash-only matches.
struct CollidingHasher {
  std::uint64_t operator()(std::span<const std::uint64_t>) const { return 42; }
};

TEST(FindExactClones, HashCollisionsAreConfirmed) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto pair = random_related_pair(seed, 600);
    auto p = params(5, 0.8, CloneMethod::exact_only);
    auto expected = find_exact_clones(pair.ref, pair.tgt, p);
    auto colliding = find_exact_clones(pair.ref, pair.tgt, p, CollidingHasher{});
    EXPECT_EQ(colliding, expected);
    for (const auto& c : colliding) {
      const auto& rf = pair.ref.functions[c.ref_region.function_index];
      const auto& tf = pair.tgt.functions[c.target_region.function_index];
      for (std::size_t i = 0; i < c.ref_region.length; ++i)
        ASSERT_EQ(normalized_text(rf.instructions[c.ref_region.start_index + i], NormalizationLevel::lx),
                  normalized_text(tf.instructions[c.target_region.start_index + i], NormalizationLevel::lx));
    }
  }
}

Window synthetic_window(std::vector<std::string> features) {
  Window w;
  std::sort(features.begin(), features.end());
  w.features = features;
  w.feature_pairs = feature_pairs(w.features);
  return w;
}

TEST(InexactSimilarity, Examples) {
  auto a = synthetic_window({"f1", "f2", "f3"});
  auto b = synthetic_window({"f1", "f2", "f4"});
  EXPECT_DOUBLE_EQ(inexact_similarity(a, a), 1.0);
  EXPECT_DOUBLE_EQ(inexact_similarity(a, b), 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(inexact_similarity(a, synthetic_window({"g1", "g2"})), 0.0);
}

TEST(InexactSimilarity, EmptyPairSets) {
  auto f = make_function("f", 0, {{"ret", {}}, {"nop", {}}});
  auto g = make_function("g", 0, {{"ret", {}}, {"ret", {}}});
  auto wf = windows(f, 1, 1, NormalizationLevel::l1);
  auto wg = windows(g, 1, 1, NormalizationLevel::l1);
  EXPECT_DOUBLE_EQ(inexact_similarity(wf[0], wg[0]), 1.0);  // ret vs ret
  EXPECT_DOUBLE_EQ(inexact_similarity(wf[1], wg[0]), 0.0);  // nop vs ret
}

// Explicit 2-subset enumeration agrees with the combinatorial shortcut the
// engine and oracle use: shared pairs = C(shared features, 2).
TEST(InexactSimilarity, PairCountIdentity) {
  AsmGenerator gen(5);
  for (int trial = 0; trial < 200; ++trial) {
    auto wa = windows(make_function("a", 0, gen.body(6)), 6, 1, NormalizationLevel::l1)[0];
    auto wb = windows(make_function("b", 0, gen.body(6)), 6, 1, NormalizationLevel::l1)[0];
    std::vector<std::string> common;
    std::set_intersection(wa.features.begin(), wa.features.end(), wb.features.begin(), wb.features.end(),
                          std::back_inserter(common));
    const double k = double(common.size());
    const double expected =
        (k * (k - 1) / 2) / double(std::max(wa.feature_pairs.size(), wb.feature_pairs.size()));
    EXPECT_DOUBLE_EQ(inexact_similarity(wa, wb), expected);
    EXPECT_DOUBLE_EQ(inexact_similarity(wa, wb), inexact_similarity(wb, wa));
  }
}

TEST(FindInexactClones, SelfPairsAtOne) {
  AsmGenerator gen(3);
  auto l = single("a", gen.body(30));
  auto clones = find_inexact_clones(l, l, params(15));
  std::size_t diagonal = 0;
  for (const auto& c : clones)
    if (c.ref_region.start_index == c.target_region.start_index) {
      ++diagonal;
      EXPECT_EQ(c.kind, CloneKind::exact);
      EXPECT_DOUBLE_EQ(c.similarity, 1.0);
    }
  EXPECT_EQ(diagonal, 16u);
}

TEST(FindInexactClones, ThresholdOneThird) {
  auto ref = single("r", {{"ret", {}}, {"nop", {}}, {"leave", {}}});
  auto tgt = single("t", {{"ret", {}}, {"nop", {}}, {"cdq", {}}});
  EXPECT_TRUE(find_inexact_clones(ref, tgt, params(3, 0.8)).empty());
  auto low = find_inexact_clones(ref, tgt, params(3, 0.3));
  ASSERT_EQ(low.size(), 1u);
  EXPECT_EQ(low[0].kind, CloneKind::inexact);
  EXPECT_DOUBLE_EQ(low[0].similarity, 1.0 / 3.0);
}

TEST(FindInexactClones, Rc4VariantIsInexactOnly) {
  auto fx = rc4_fixture();
  auto p = params(15, 0.8);
  EXPECT_TRUE(find_exact_clones(fx.ref, fx.tgt, p).empty());
  auto clones = find_inexact_clones(fx.ref, fx.tgt, p);
  ASSERT_FALSE(clones.empty());
  for (const auto& c : clones) {
    EXPECT_EQ(c.kind, CloneKind::inexact);
    EXPECT_GE(c.similarity, 0.8);
  }
}

std::set<CloneOracle::Key> keys(const std::vector<ClonePair>& clones, std::optional<CloneKind> kind = {}) {
  std::set<CloneOracle::Key> out;
  for (const auto& c : clones)
    if (!kind || c.kind == *kind)
      out.insert({c.target_region.function_index, c.target_region.start_index, c.ref_region.function_index,
                  c.ref_region.start_index});
  return out;
}

TEST(FindInexactClones, MatchesBruteForceOracle) {
  for (std::uint64_t seed = 100; seed < 106; ++seed) {
    auto pair = random_related_pair(seed, 500);
    for (auto level : {NormalizationLevel::l0, NormalizationLevel::l2}) {
      for (double theta : {0.5, 0.9}) {
        auto p = params(4 + seed % 4, theta);
        p.level = level;
        auto oracle_level = level == NormalizationLevel::l0 ? OracleLevel::l0 : OracleLevel::l2;
        CloneOracle oracle(pair.ref, pair.tgt, p.window_size, 1, oracle_level);
        auto clones = find_inexact_clones(pair.ref, pair.tgt, p);
        auto expected = oracle.inexact(theta);
        std::set<CloneOracle::Key> expected_keys;
        for (const auto& [k, s] : expected) expected_keys.insert(k);
        ASSERT_EQ(keys(clones), expected_keys) << "seed " << seed;
        ASSERT_EQ(keys(clones, CloneKind::exact), oracle.exact());
        for (const auto& c : clones)
          EXPECT_DOUBLE_EQ(c.similarity, expected.at({c.target_region.function_index, c.target_region.start_index,
                                                      c.ref_region.function_index, c.ref_region.start_index}));
      }
    }
  }
}

TEST(FindInexactClones, LoweringThresholdNeverRemovesPairs) {
  auto pair = random_related_pair(77, 800);
  std::set<CloneOracle::Key> previous;
  for (double theta : {1.0, 0.9, 0.8, 0.65, 0.5, 0.3}) {
    auto current = keys(find_inexact_clones(pair.ref, pair.tgt, params(6, theta)));
    EXPECT_TRUE(std::includes(current.begin(), current.end(), previous.begin(), previous.end()));
    previous = std::move(current);
  }
}

TEST(FindClones, ParallelEqualsSerial) {
  auto pair = random_related_pair(9, 3000);
  for (auto method : {CloneMethod::exact_only, CloneMethod::two_combination}) {
    auto p = params(8, 0.7, method);
    auto serial = find_clones(pair.ref, pair.tgt, p);
    p.threads = 4;
    EXPECT_EQ(find_clones(pair.ref, pair.tgt, p), serial);
  }
}

TEST(CoverageMetrics, SelfMatch) {
  Listing l;
  l.binary_id = "l";
  AsmGenerator gen(1);
  l.functions.push_back(make_function("long", 0, gen.body(20)));
  l.functions.push_back(make_function("short", 0, gen.body(10)));
  layout(l);
  auto p = params(15, 0.8, CloneMethod::exact_only);
  auto rep = coverage_metrics(find_exact_clones(l, l, p), l, l, p);
  EXPECT_DOUBLE_EQ(rep.ref_in_target, 1.0);
  EXPECT_DOUBLE_EQ(rep.target_coverage, 20.0 / 30.0);
  EXPECT_EQ(rep.exact_count, 6u);
  EXPECT_EQ(rep.per_function.at("long"), (FunctionCoverage{6, 6}));
  EXPECT_EQ(rep.per_function.at("short"), (FunctionCoverage{0, 0}));
}

TEST(CoverageMetrics, NothingShared) {
  AsmGenerator gen(2);
  auto ref = single("r", gen.body(40));
  auto tgt = single("t", gen.body(40));
  auto p = params(15);
  auto clones = find_inexact_clones(ref, tgt, p);
  auto rep = coverage_metrics(clones, ref, tgt, p);
  EXPECT_DOUBLE_EQ(rep.ref_in_target, 0.0);
  EXPECT_DOUBLE_EQ(rep.target_coverage, 0.0);
  EXPECT_EQ(rep.exact_count, 0u);
  EXPECT_EQ(rep.inexact_count, clones.size());
}

TEST(CoverageMetrics, CountsSumToTotals) {
  auto pair = random_related_pair(4, 2000);
  auto p = params(10);
  auto rep = coverage_metrics(find_inexact_clones(pair.ref, pair.tgt, p), pair.ref, pair.tgt, p);
  std::size_t total = 0;
  for (const auto& [name, fc] : rep.per_function) {
    EXPECT_LE(fc.cloned_windows, fc.total_windows);
    total += fc.total_windows;
  }
  std::size_t expected = 0;
  for (const auto& f : pair.tgt.functions) expected += window_count(f.instructions.size(), 10, 1);
  EXPECT_EQ(total, expected);
  EXPECT_GE(rep.ref_in_target, 0.0);
  EXPECT_LE(rep.ref_in_target, 1.0);
  EXPECT_LE(rep.target_coverage, 1.0);
}

TEST(Residue, ZeroClonesGivesWholeFunctions) {
  AsmGenerator gen(8);
  Listing l;
  l.functions.push_back(make_function("a", 0, gen.body(12)));
  l.functions.push_back(make_function("b", 0, gen.body(3)));
  layout(l);
  auto r = residue(l, {});
  ASSERT_EQ(r.size(), 2u);
  EXPECT_EQ(r[0].ranges, (std::vector<ResidueRange>{{0, 11, l.functions[0].instructions[0].address,
                                                     l.functions[0].instructions[11].address}}));
  EXPECT_EQ(r[1].uncovered_instructions, 3u);
}

TEST(Residue, TrailingRange) {
  AsmGenerator gen(9);
  auto l = single("t", gen.body(30));
  ClonePair c{CloneKind::exact, {0, "f", 0, 15}, {0, "f", 0, 15}, 1.0};
  auto r = residue(l, {c});
  ASSERT_EQ(r.size(), 1u);
  ASSERT_EQ(r[0].ranges.size(), 1u);
  EXPECT_EQ(r[0].ranges[0].first, 15u);
  EXPECT_EQ(r[0].ranges[0].last, 29u);
  EXPECT_EQ(r[0].uncovered_instructions, 15u);
}

TEST(Residue, SelfMatchLeavesOnlyShortFunctions) {
  AsmGenerator gen(10);
  Listing l;
  l.functions.push_back(make_function("big", 0, gen.body(40)));
  l.functions.push_back(make_function("tiny", 0, gen.body(6)));
  layout(l);
  auto r = residue(l, find_exact_clones(l, l, params(15)));
  ASSERT_EQ(r.size(), 1u);
  EXPECT_EQ(r[0].function, "tiny");
  // Inexact pairs never shrink the residue.
  ClonePair inexact{CloneKind::inexact, {1, "tiny", 0, 6}, {1, "tiny", 0, 6}, 0.9};
  EXPECT_EQ(residue(l, {inexact}).size(), 2u);
}

}  // namespace
