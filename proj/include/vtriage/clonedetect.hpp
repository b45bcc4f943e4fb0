#pragma once

// Windowed exact and inexact clone detection between a reference listing and
// a target listing.
//
// Exact clones: windows whose LX token sequences are identical. Candidates are
// grouped by window hash and every hit is confirmed token by token.
//
// Inexact clones ("two-combination" method): every unordered pair of window
// features is a cluster. Two windows are similar when the fraction of shared
// clusters, |pairs(a) & pairs(b)| / max(|pairs(a)|, |pairs(b)|), reaches the
// threshold. Pairs of shared features are exactly the shared pairs, so
// |pairs(a) & pairs(b)| = C(|a & b|, 2) and the test reduces to a minimum
// feature overlap. Candidates come from an inverted index keyed by feature;
// only each window's rarest features are indexed and probed (prefix
// filtering), which cannot drop a pair that meets the threshold. Candidates
// are verified on feature bitsets.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <tuple>
#include <iterator>
#include <unordered_map>
#include <vector>

#include "vtriage/asm_model.hpp"
#include "vtriage/normalize.hpp"
#include "vtriage/parallel.hpp"

namespace vtriage {

enum class CloneMethod { exact_only, two_combination };
enum class CloneKind { exact, inexact };

inline std::string_view to_string(CloneMethod m) {
  return m == CloneMethod::exact_only ? "exact" : "two-combination";
}
inline std::string_view to_string(CloneKind k) { return k == CloneKind::exact ? "EXACT" : "INEXACT"; }

struct CloneParams {
  std::size_t window_size = 15;
  std::size_t stride = 1;
  double threshold = 0.8;
  NormalizationLevel level = NormalizationLevel::l1;
  CloneMethod method = CloneMethod::two_combination;
  // 0 = one per hardware thread. Results do not depend on this value.
  unsigned threads = 1;

  void validate() const {
    if (window_size < 1) throw std::invalid_argument("window size must be >= 1");
    if (stride < 1) throw std::invalid_argument("stride must be >= 1");
    if (!(threshold > 0.0 && threshold <= 1.0)) throw std::invalid_argument("threshold must be in (0, 1]");
  }
};

struct Region {
  std::size_t function_index = 0;  // position in Listing::functions
  std::string function;
  std::size_t start_index = 0;
  std::size_t length = 0;

  bool operator==(const Region&) const = default;
};

struct ClonePair {
  CloneKind kind = CloneKind::exact;
  Region ref_region;
  Region target_region;
  double similarity = 1.0;

  bool operator==(const ClonePair&) const = default;
};

struct FunctionCoverage {
  std::size_t cloned_windows = 0;
  std::size_t total_windows = 0;

  bool operator==(const FunctionCoverage&) const = default;
};

struct SimilarityReport {
  std::size_t exact_count = 0;
  std::size_t inexact_count = 0;
  double ref_in_target = 0.0;
  double target_coverage = 0.0;
  // Raw numerators and denominators behind the two ratios.
  std::size_t ref_windows = 0;
  std::size_t ref_cloned_windows = 0;
  std::size_t target_instructions = 0;
  std::size_t target_covered_instructions = 0;
  std::map<std::string, FunctionCoverage> per_function;  // target functions

  bool operator==(const SimilarityReport&) const = default;
};

struct ResidueRange {
  std::size_t first = 0;  // inclusive instruction indices
  std::size_t last = 0;
  std::uint64_t first_address = 0;
  std::uint64_t last_address = 0;

  bool operator==(const ResidueRange&) const = default;
};

struct FunctionResidue {
  std::size_t function_index = 0;
  std::string function;
  std::vector<ResidueRange> ranges;
  std::size_t uncovered_instructions = 0;

  bool operator==(const FunctionResidue&) const = default;
};

/// Shared-cluster ratio between two windows built at the same level.
inline double inexact_similarity(const Window& a, const Window& b) {
  if (a.feature_pairs.empty() && b.feature_pairs.empty()) return a.tokens == b.tokens ? 1.0 : 0.0;
  std::size_t shared = 0;
  auto ia = a.feature_pairs.begin();
  auto ib = b.feature_pairs.begin();
  while (ia != a.feature_pairs.end() && ib != b.feature_pairs.end()) {
    if (*ia < *ib) {
      ++ia;
    } else if (*ib < *ia) {
      ++ib;
    } else {
      ++shared;
      ++ia;
      ++ib;
    }
  }
  return static_cast<double>(shared) /
         static_cast<double>(std::max(a.feature_pairs.size(), b.feature_pairs.size()));
}

namespace detail {

class Interner {
 public:
  std::uint32_t intern(const std::string& s) {
    auto [it, inserted] = ids_.try_emplace(s, static_cast<std::uint32_t>(ids_.size()));
    return it->second;
  }
  std::size_t size() const { return ids_.size(); }

 private:
  std::unordered_map<std::string, std::uint32_t> ids_;
};

struct WindowRef {
  std::uint32_t function;
  std::uint32_t start;
};

// Per-listing data shared by both detectors. Token sequences are interned so
// that confirmation compares integers, which is exact (no hashing involved).
struct PreparedListing {
  const Listing* listing = nullptr;
  std::vector<std::vector<std::uint32_t>> lx_ids;
  std::vector<std::vector<std::uint32_t>> level_ids;
  std::vector<std::vector<std::uint64_t>> digests;
  std::vector<std::vector<std::uint32_t>> instruction_features;  // flattened, see feature_offsets
  std::vector<std::vector<std::uint32_t>> feature_offsets;
  std::vector<WindowRef> windows;

  std::span<const std::uint32_t> lx(const WindowRef& w, std::size_t len) const {
    return std::span<const std::uint32_t>(lx_ids[w.function]).subspan(w.start, len);
  }
  std::span<const std::uint32_t> level(const WindowRef& w, std::size_t len) const {
    return std::span<const std::uint32_t>(level_ids[w.function]).subspan(w.start, len);
  }
};

struct PrepareOptions {
  bool level_tokens = false;
  bool features = false;
};

inline PreparedListing prepare(const Listing& l, const CloneParams& p, Interner& lx_interner,
                               Interner& level_interner, Interner& feature_interner, PrepareOptions opts) {
  PreparedListing out;
  out.listing = &l;
  const auto nf = l.functions.size();
  out.lx_ids.resize(nf);
  out.digests.resize(nf);
  if (opts.level_tokens) out.level_ids.resize(nf);
  if (opts.features) {
    out.instruction_features.resize(nf);
    out.feature_offsets.resize(nf);
  }
  for (std::size_t f = 0; f < nf; ++f) {
    const auto& fn = l.functions[f];
    for (const auto& ins : fn.instructions) {
      auto lx = normalized_text(ins, NormalizationLevel::lx);
      out.digests[f].push_back(detail::fnv1a(lx));
      out.lx_ids[f].push_back(lx_interner.intern(lx));
      if (opts.level_tokens) out.level_ids[f].push_back(level_interner.intern(normalized_text(ins, p.level)));
      if (opts.features) {
        out.feature_offsets[f].push_back(static_cast<std::uint32_t>(out.instruction_features[f].size()));
        for (const auto& feat : extract_features(std::span<const Instruction>(&ins, 1)))
          out.instruction_features[f].push_back(feature_interner.intern(feat));
      }
    }
    if (opts.features) out.feature_offsets[f].push_back(static_cast<std::uint32_t>(out.instruction_features[f].size()));
    const auto count = window_count(fn.instructions.size(), p.window_size, p.stride);
    for (std::size_t w = 0; w < count; ++w)
      out.windows.push_back({static_cast<std::uint32_t>(f), static_cast<std::uint32_t>(w * p.stride)});
  }
  return out;
}

inline Region make_region(const PreparedListing& pl, const WindowRef& w, std::size_t len) {
  return {w.function, pl.listing->functions[w.function].name, w.start, len};
}

// Contiguous [begin, end) ranges of PreparedListing::windows per function.
inline std::vector<std::pair<std::size_t, std::size_t>> windows_by_function(const PreparedListing& pl) {
  std::vector<std::pair<std::size_t, std::size_t>> ranges(pl.listing->functions.size(), {0, 0});
  std::size_t i = 0;
  for (std::size_t f = 0; f < ranges.size(); ++f) {
    ranges[f].first = i;
    while (i < pl.windows.size() && pl.windows[i].function == f) ++i;
    ranges[f].second = i;
  }
  return ranges;
}

inline bool region_less(const ClonePair& a, const ClonePair& b) {
  auto key = [](const ClonePair& c) {
    return std::tuple(c.target_region.function_index, c.target_region.start_index, c.ref_region.function_index,
                      c.ref_region.start_index);
  };
  return key(a) < key(b);
}

template <typename T>
std::vector<T> concat(std::vector<std::vector<T>>&& parts) {
  std::size_t total = 0;
  for (const auto& p : parts) total += p.size();
  std::vector<T> out;
  out.reserve(total);
  for (auto& p : parts) std::move(p.begin(), p.end(), std::back_inserter(out));
  return out;
}

inline std::size_t choose2(std::size_t n) { return n < 2 ? 0 : n * (n - 1) / 2; }

// Minimum shared-pair count that can still reach `threshold` for a window
// with `pairs` clusters. The small slack keeps the bound conservative under
// floating-point rounding; candidates are re-verified exactly afterwards.
inline std::size_t min_overlap(std::size_t pairs, double threshold) {
  auto t = static_cast<std::size_t>(std::ceil(threshold * static_cast<double>(pairs) - 1e-7));
  return std::clamp<std::size_t>(t, 1, pairs);
}

// Smallest shared-feature count that can reach `threshold` for a window with
// `features` features. Valid against any partner: the denominator only grows.
inline std::size_t min_shared_features(std::size_t features, double threshold) {
  const auto need = min_overlap(choose2(features), threshold);
  std::size_t c = 2;
  while (choose2(c) < need) ++c;
  return std::min(c, features);
}

// Range of partner feature counts that can reach `threshold` against a window
// with `features` features, from C(min, 2) >= threshold * C(max, 2).
inline std::pair<std::size_t, std::size_t> partner_sizes(std::size_t features, double threshold) {
  std::size_t lo = min_shared_features(features, threshold);
  std::size_t hi = features;
  while (min_shared_features(hi + 1, threshold) <= features) ++hi;
  return {lo, hi};
}

// Number of leading features (rarest first) to index or probe.
inline std::size_t prefix_length(std::size_t features, double threshold) {
  return features - min_shared_features(features, threshold) + 1;
}

}  // namespace detail

/// Exact clones between every reference window and every target window.
/// Output is sorted by (target function, target start, ref function, ref start).
template <typename Hasher = WindowHasher>
std::vector<ClonePair> find_exact_clones(const Listing& ref, const Listing& tgt, const CloneParams& p,
                                         const Hasher& hasher = {}) {
  p.validate();
  detail::Interner lx, level, features;
  auto pr = detail::prepare(ref, p, lx, level, features, {});
  auto pt = detail::prepare(tgt, p, lx, level, features, {});
  const auto len = p.window_size;

  auto window_hash = [&](const detail::PreparedListing& pl, const detail::WindowRef& w) {
    return hasher(std::span<const std::uint64_t>(pl.digests[w.function]).subspan(w.start, len));
  };

  std::unordered_map<std::uint64_t, std::vector<std::uint32_t>> buckets;
  for (std::size_t i = 0; i < pr.windows.size(); ++i)
    buckets[window_hash(pr, pr.windows[i])].push_back(static_cast<std::uint32_t>(i));

  auto ranges = detail::windows_by_function(pt);
  std::vector<std::vector<ClonePair>> per_function(ranges.size());
  parallel_for(ranges.size(), p.threads, [&](unsigned, std::size_t f) {
    auto& out = per_function[f];
    for (std::size_t wi = ranges[f].first; wi < ranges[f].second; ++wi) {
      const auto& tw = pt.windows[wi];
      auto it = buckets.find(window_hash(pt, tw));
      if (it == buckets.end()) continue;
      auto tokens = pt.lx(tw, len);
      for (auto ri : it->second) {
        const auto& rw = pr.windows[ri];
        auto ref_tokens = pr.lx(rw, len);
        if (!std::equal(tokens.begin(), tokens.end(), ref_tokens.begin())) continue;
        out.push_back({CloneKind::exact, detail::make_region(pr, rw, len), detail::make_region(pt, tw, len), 1.0});
      }
    }
  });
  return detail::concat(std::move(per_function));
}

/// Every cross-listing window pair whose shared-cluster ratio is at least
/// p.threshold. Pairs whose LX tokens are identical are tagged EXACT.
/// Output order matches find_exact_clones.
template <typename Hasher = WindowHasher>
std::vector<ClonePair> find_inexact_clones(const Listing& ref, const Listing& tgt, const CloneParams& p,
                                           const Hasher& = {}) {
  p.validate();
  detail::Interner lx, level, feature_ids;
  const detail::PrepareOptions opts{true, true};
  auto pr = detail::prepare(ref, p, lx, level, feature_ids, opts);
  auto pt = detail::prepare(tgt, p, lx, level, feature_ids, opts);
  const auto len = p.window_size;
  const auto num_features = feature_ids.size();

  // Windows sharing a feature set are interchangeable for scoring, so the
  // join runs over distinct feature sets ("profiles").
  struct Profiles {
    std::vector<std::vector<std::uint32_t>> sets;  // sorted feature ids
    std::vector<std::uint32_t> of_window;
    std::vector<std::vector<std::uint32_t>> windows;
  };
  auto build_profiles = [&](const detail::PreparedListing& pl) {
    Profiles prof;
    std::unordered_map<std::uint64_t, std::vector<std::uint32_t>> by_hash;
    std::vector<std::uint32_t> set;
    for (std::size_t wi = 0; wi < pl.windows.size(); ++wi) {
      const auto& w = pl.windows[wi];
      const auto& offs = pl.feature_offsets[w.function];
      const auto& feats = pl.instruction_features[w.function];
      set.assign(feats.begin() + offs[w.start], feats.begin() + offs[w.start + len]);
      std::sort(set.begin(), set.end());
      set.erase(std::unique(set.begin(), set.end()), set.end());
      std::uint64_t h = 0;
      for (auto id : set) h = detail::mix64(h + id + 1);
      auto& candidates = by_hash[h];
      std::uint32_t id = UINT32_MAX;
      for (auto c : candidates)
        if (prof.sets[c] == set) id = c;
      if (id == UINT32_MAX) {
        id = static_cast<std::uint32_t>(prof.sets.size());
        candidates.push_back(id);
        prof.sets.push_back(set);
        prof.windows.emplace_back();
      }
      prof.of_window.push_back(id);
      prof.windows[id].push_back(static_cast<std::uint32_t>(wi));
    }
    return prof;
  };
  auto ref_prof = build_profiles(pr);
  auto tgt_prof = build_profiles(pt);

  const std::size_t words = std::max<std::size_t>(1, (num_features + 63) / 64);
  auto to_bits = [&](const Profiles& prof) {
    std::vector<std::uint64_t> bits(prof.sets.size() * words, 0);
    for (std::size_t i = 0; i < prof.sets.size(); ++i)
      for (auto f : prof.sets[i]) bits[i * words + f / 64] |= std::uint64_t{1} << (f % 64);
    return bits;
  };
  const auto ref_bits = to_bits(ref_prof);
  const auto tgt_bits = to_bits(tgt_prof);

  // Global order: ascending frequency over all profiles, ties by id.
  std::vector<std::uint32_t> freq(num_features, 0);
  for (const auto* prof : {&ref_prof, &tgt_prof})
    for (const auto& set : prof->sets)
      for (auto f : set) ++freq[f];
  auto rarer = [&](std::uint32_t x, std::uint32_t y) { return std::tie(freq[x], x) < std::tie(freq[y], y); };
  auto prefix = [&](const std::vector<std::uint32_t>& set, std::vector<std::uint32_t>& out) {
    out = set;
    const auto n = detail::prefix_length(set.size(), p.threshold);
    std::partial_sort(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(n), out.end(), rarer);
    out.resize(n);
  };

  // Posting lists are ordered by set size so a probe only walks the partner
  // sizes that can reach the threshold.
  std::vector<std::uint32_t> by_size(ref_prof.sets.size());
  for (std::uint32_t i = 0; i < by_size.size(); ++i) by_size[i] = i;
  std::stable_sort(by_size.begin(), by_size.end(), [&](std::uint32_t x, std::uint32_t y) {
    return ref_prof.sets[x].size() < ref_prof.sets[y].size();
  });
  std::vector<std::vector<std::uint32_t>> index(num_features);
  {
    std::vector<std::uint32_t> head;
    for (auto i : by_size) {
      if (ref_prof.sets[i].size() < 2) continue;
      prefix(ref_prof.sets[i], head);
      for (auto f : head) index[f].push_back(i);
    }
  }

  // Windows with fewer than two features have no clusters; they match only
  // windows that also have none and carry identical tokens.
  std::unordered_map<std::uint64_t, std::vector<std::uint32_t>> clusterless;
  auto level_hash = [&](const detail::PreparedListing& pl, const detail::WindowRef& w) {
    std::uint64_t h = 0;
    for (auto id : pl.level(w, len)) h = detail::mix64(h + id + 1);
    return h;
  };
  for (std::uint32_t wi = 0; wi < pr.windows.size(); ++wi)
    if (ref_prof.sets[ref_prof.of_window[wi]].size() < 2) clusterless[level_hash(pr, pr.windows[wi])].push_back(wi);

  // Score each target profile against its candidate ref profiles.
  const unsigned threads = resolve_threads(p.threads);
  struct Match {
    std::uint32_t ref_profile;
    double similarity;
  };
  struct Scratch {
    std::vector<std::uint32_t> stamp;
    std::vector<std::uint32_t> head;
  };
  std::vector<std::vector<Match>> matches(tgt_prof.sets.size());
  std::vector<Scratch> scratch(threads);
  for (auto& s : scratch) s.stamp.assign(ref_prof.sets.size(), UINT32_MAX);
  parallel_for(tgt_prof.sets.size(), threads, [&](unsigned worker, std::size_t ti) {
    const auto& set = tgt_prof.sets[ti];
    const auto pairs = detail::choose2(set.size());
    if (pairs == 0) return;
    auto& sc = scratch[worker];
    prefix(set, sc.head);
    const auto [lo, hi] = detail::partner_sizes(set.size(), p.threshold);
    auto size_of = [&](std::uint32_t ri) { return ref_prof.sets[ri].size(); };
    const auto* tb = &tgt_bits[ti * words];
    for (auto f : sc.head) {
      const auto& posting = index[f];
      auto first = std::partition_point(posting.begin(), posting.end(), [&](auto ri) { return size_of(ri) < lo; });
      for (auto it = first; it != posting.end() && size_of(*it) <= hi; ++it) {
        const auto ri = *it;
        if (sc.stamp[ri] == ti) continue;
        sc.stamp[ri] = static_cast<std::uint32_t>(ti);
        const auto max_pairs = std::max(pairs, detail::choose2(size_of(ri)));
        const auto* rb = &ref_bits[ri * words];
        std::size_t common = 0;
        for (std::size_t w = 0; w < words; ++w) common += std::popcount(tb[w] & rb[w]);
        const double sim = static_cast<double>(detail::choose2(common)) / static_cast<double>(max_pairs);
        if (sim >= p.threshold) matches[ti].push_back({ri, sim});
      }
    }
  });

  auto ranges = detail::windows_by_function(pt);
  std::vector<std::vector<ClonePair>> per_function(ranges.size());
  parallel_for(ranges.size(), p.threads, [&](unsigned, std::size_t f) {
    auto& out = per_function[f];
    for (std::size_t wi = ranges[f].first; wi < ranges[f].second; ++wi) {
      const auto& tw = pt.windows[wi];
      const auto tokens = pt.lx(tw, len);
      const auto begin = out.size();
      auto emit = [&](std::uint32_t ri, double sim) {
        const auto& rw = pr.windows[ri];
        auto ref_tokens = pr.lx(rw, len);
        const bool exact = std::equal(tokens.begin(), tokens.end(), ref_tokens.begin());
        out.push_back({exact ? CloneKind::exact : CloneKind::inexact, detail::make_region(pr, rw, len),
                       detail::make_region(pt, tw, len), exact ? 1.0 : sim});
      };
      const auto profile = tgt_prof.of_window[wi];
      if (tgt_prof.sets[profile].size() < 2) {
        auto it = clusterless.find(level_hash(pt, tw));
        if (it != clusterless.end()) {
          auto level_tokens = pt.level(tw, len);
          for (auto ri : it->second) {
            auto ref_level = pr.level(pr.windows[ri], len);
            if (std::equal(level_tokens.begin(), level_tokens.end(), ref_level.begin())) emit(ri, 1.0);
          }
        }
      } else {
        for (const auto& m : matches[profile])
          for (auto ri : ref_prof.windows[m.ref_profile]) emit(ri, m.similarity);
      }
      std::sort(out.begin() + static_cast<std::ptrdiff_t>(begin), out.end(), detail::region_less);
    }
  });
  return detail::concat(std::move(per_function));
}

/// Dispatches on p.method.
template <typename Hasher = WindowHasher>
std::vector<ClonePair> find_clones(const Listing& ref, const Listing& tgt, const CloneParams& p,
                                   const Hasher& hasher = {}) {
  return p.method == CloneMethod::exact_only ? find_exact_clones(ref, tgt, p, hasher)
                                             : find_inexact_clones(ref, tgt, p, hasher);
}

namespace detail {

// Marks instructions covered by EXACT target regions.
inline std::vector<std::vector<bool>> exact_target_coverage(const Listing& tgt, const std::vector<ClonePair>& clones) {
  std::vector<std::vector<bool>> covered(tgt.functions.size());
  for (std::size_t f = 0; f < tgt.functions.size(); ++f) covered[f].assign(tgt.functions[f].instructions.size(), false);
  for (const auto& c : clones) {
    if (c.kind != CloneKind::exact) continue;
    const auto& r = c.target_region;
    if (r.function_index >= covered.size()) throw std::out_of_range("clone references unknown target function");
    auto& marks = covered[r.function_index];
    const auto end = std::min(marks.size(), r.start_index + r.length);
    for (auto i = r.start_index; i < end; ++i) marks[i] = true;
  }
  return covered;
}

}  // namespace detail

/// Coverage ratios from the EXACT pairs in `clones`.
inline SimilarityReport coverage_metrics(const std::vector<ClonePair>& clones, const Listing& ref, const Listing& tgt,
                                         const CloneParams& p) {
  p.validate();
  SimilarityReport rep;
  std::vector<std::vector<bool>> ref_cloned(ref.functions.size());
  std::vector<std::vector<bool>> tgt_cloned(tgt.functions.size());
  for (std::size_t f = 0; f < ref.functions.size(); ++f) {
    const auto n = window_count(ref.functions[f].instructions.size(), p.window_size, p.stride);
    ref_cloned[f].assign(n, false);
    rep.ref_windows += n;
  }
  for (std::size_t f = 0; f < tgt.functions.size(); ++f)
    tgt_cloned[f].assign(window_count(tgt.functions[f].instructions.size(), p.window_size, p.stride), false);

  for (const auto& c : clones) {
    if (c.kind == CloneKind::inexact) {
      ++rep.inexact_count;
      continue;
    }
    ++rep.exact_count;
    const auto rf = c.ref_region.function_index;
    const auto tf = c.target_region.function_index;
    if (rf >= ref_cloned.size() || tf >= tgt_cloned.size()) throw std::out_of_range("clone references unknown function");
    const auto rw = c.ref_region.start_index / p.stride;
    const auto tw = c.target_region.start_index / p.stride;
    if (rw < ref_cloned[rf].size()) ref_cloned[rf][rw] = true;
    if (tw < tgt_cloned[tf].size()) tgt_cloned[tf][tw] = true;
  }
  for (const auto& marks : ref_cloned) rep.ref_cloned_windows += std::count(marks.begin(), marks.end(), true);

  auto covered = detail::exact_target_coverage(tgt, clones);
  for (std::size_t f = 0; f < tgt.functions.size(); ++f) {
    rep.target_instructions += covered[f].size();
    rep.target_covered_instructions += std::count(covered[f].begin(), covered[f].end(), true);
    auto& pf = rep.per_function[tgt.functions[f].name];
    pf.total_windows = tgt_cloned[f].size();
    pf.cloned_windows = std::count(tgt_cloned[f].begin(), tgt_cloned[f].end(), true);
  }
  rep.ref_in_target = rep.ref_windows == 0 ? 0.0 : double(rep.ref_cloned_windows) / double(rep.ref_windows);
  rep.target_coverage =
      rep.target_instructions == 0 ? 0.0 : double(rep.target_covered_instructions) / double(rep.target_instructions);
  return rep;
}

/// Maximal runs of target instructions outside every EXACT clone window.
/// Fully covered functions are omitted.
inline std::vector<FunctionResidue> residue(const Listing& tgt, const std::vector<ClonePair>& clones) {
  auto covered = detail::exact_target_coverage(tgt, clones);
  std::vector<FunctionResidue> out;
  for (std::size_t f = 0; f < tgt.functions.size(); ++f) {
    const auto& fn = tgt.functions[f];
    FunctionResidue fr{f, fn.name, {}, 0};
    const auto& marks = covered[f];
    for (std::size_t i = 0; i < marks.size();) {
      if (marks[i]) {
        ++i;
        continue;
      }
      auto j = i;
      while (j + 1 < marks.size() && !marks[j + 1]) ++j;
      fr.ranges.push_back({i, j, fn.instructions[i].address, fn.instructions[j].address});
      fr.uncovered_instructions += j - i + 1;
      i = j + 1;
    }
    if (!fr.ranges.empty()) out.push_back(std::move(fr));
  }
  return out;
}

}  // namespace vtriage
