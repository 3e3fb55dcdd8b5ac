// Acceptance suite: one PASS/FAIL line per criterion. Every expected value is
// produced here by an independent oracle or is a pinned literal.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>
#include <fmt/format.h>

#include "mirc/cli.hpp"
#include "mirc/features.hpp"
#include "mirc/geometry.hpp"
#include "mirc/metrics.hpp"
#include "mirc/reduction.hpp"
#include "mirc/scoring.hpp"
#include "mirc/scramble.hpp"
#include "mirc/summary.hpp"
#include "mirc/synth.hpp"

namespace fs = std::filesystem;
using namespace mirc;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

/// Collects failed sub-checks for one criterion.
struct Checks {
  std::vector<std::string> failures;
  void expect(bool ok, const std::string& what) {
    if (!ok && failures.size() < 5) failures.push_back(what);
    if (!ok) ++failed;
  }
  std::size_t failed = 0;
};

bool report(int id, const std::string& title, const Checks& c, const std::string& detail) {
  const bool ok = c.failed == 0;
  std::cout << (ok ? "PASS" : "FAIL") << " [" << id << "] " << title << " | " << detail;
  if (!ok) {
    std::cout << " | " << c.failed << " failed:";
    for (const auto& f : c.failures) std::cout << " {" << f << "}";
  }
  std::cout << std::endl;
  return ok;
}

// ---------------------------------------------------------------------------
// 1. scramble

bool oracle_valid_perm(const std::vector<int>& p) {
  const int n = static_cast<int>(p.size());
  if (p[0] == 1) return false;
  const auto pos = std::find(p.begin(), p.end(), n) - p.begin();
  if (pos == 0 || pos == n - 1) return false;
  for (int i = 0; i + 1 < n; ++i)
    if (std::abs(p[i] - p[i + 1]) == 1) return false;
  return true;
}

std::set<std::vector<int>> brute_force_valid(int n) {
  std::vector<int> p(n);
  std::iota(p.begin(), p.end(), 1);
  std::set<std::vector<int>> out;
  do {
    if (oracle_valid_perm(p)) out.insert(p);
  } while (std::next_permutation(p.begin(), p.end()));
  return out;
}

bool criterion_1() {
  Checks c;
  const auto valid = brute_force_valid(5);
  c.expect(valid.size() == 8, "brute-force valid count is 8");

  constexpr int kDraws = 10000;
  std::map<std::vector<int>, std::size_t> counts;
  const auto t0 = Clock::now();
  for (int s = 0; s < kDraws; ++s) {
    const auto plan = sample_scramble(60, static_cast<std::uint64_t>(s), 5);
    ++counts[plan.permutation];
  }
  const double elapsed = seconds_since(t0);

  std::size_t invalid = 0;
  std::set<std::vector<int>> support;
  for (const auto& [perm, n] : counts) {
    support.insert(perm);
    if (!oracle_valid_perm(perm)) invalid += n;
  }
  c.expect(invalid == 0, fmt::format("{} invalid draws", invalid));
  c.expect(support == valid, "support equals brute-force set");

  // Pearson chi-square against the uniform distribution over the valid set.
  const double expected = static_cast<double>(kDraws) / static_cast<double>(valid.size());
  double chi2 = 0.0;
  for (const auto& p : valid) {
    const double o = static_cast<double>(counts.count(p) ? counts[p] : 0);
    chi2 += (o - expected) * (o - expected) / expected;
  }
  const double df = static_cast<double>(valid.size() - 1);
  const double critical = boost::math::quantile(boost::math::chi_squared(df), 0.99);
  c.expect(chi2 < critical, fmt::format("chi2 {:.3f} < {:.3f}", chi2, critical));
  c.expect(elapsed < 1.0, fmt::format("runtime {:.3f}s < 1s", elapsed));

  return report(1, "scramble validity, support and uniformity", c,
                fmt::format("draws={} valid_set={} chi2={:.3f} crit(alpha=0.01,df={})={:.3f} runtime={:.3f}s<1s",
                            kDraws, valid.size(), chi2, df, critical, elapsed));
}

// ---------------------------------------------------------------------------
// 2. ARR

struct NaiveArr {
  std::size_t positive = 0;
  std::optional<double> arr;
  std::array<std::size_t, 20> hist{};
  std::map<int, std::optional<double>> level_means;
};

NaiveArr naive_reduction_rate(const std::vector<std::tuple<double, double, int>>& raw) {
  NaiveArr out;
  double sum = 0.0;
  std::map<int, std::pair<double, std::size_t>> lv;
  std::set<int> levels;
  for (const auto& [a, b, level] : raw) {
    const double d = a - b;
    levels.insert(level);
    // bin: largest i with edge_i <= d, last bin closed at 1.0
    std::size_t bin = 0;
    for (std::size_t i = 0; i < 20; ++i)
      if (d >= (static_cast<double>(i) - 10.0) / 10.0) bin = i;
    ++out.hist[bin];
    if (d > 0.0) {
      sum += d;
      ++out.positive;
      lv[level].first += d;
      ++lv[level].second;
    }
  }
  if (out.positive) out.arr = sum / static_cast<double>(out.positive);
  for (int l : levels)
    out.level_means[l] = lv.count(l) ? std::optional<double>(lv[l].first / static_cast<double>(lv[l].second))
                                     : std::nullopt;
  return out;
}

bool criterion_2() {
  Checks c;
  std::mt19937_64 gen(2024);
  std::uniform_int_distribution<int> size(1, 200), lvl(1, 7), step(0, 20), mode(0, 2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::size_t total_pairs = 0;
  for (int t = 0; t < 1000; ++t) {
    const int n = size(gen);
    std::vector<std::tuple<double, double, int>> raw;
    std::vector<PairRecord> pairs;
    const int m = mode(gen);
    for (int i = 0; i < n; ++i) {
      // Mix continuous values with 5%-granularity accuracies that land on bin edges.
      double a, b;
      if (m == 0) {
        a = u(gen);
        b = u(gen);
      } else {
        a = step(gen) / 20.0;
        b = step(gen) / 20.0;
      }
      const int level = lvl(gen);
      raw.emplace_back(a, b, level);
      pairs.push_back(make_pair("p", "c", a, b, level, PairKind::AnyParentChild, MeasureKind::HumanAccuracy));
    }
    total_pairs += pairs.size();
    const auto got = reduction_rate(pairs);
    const auto want = naive_reduction_rate(raw);
    const std::string where = fmt::format("table {}", t);
    c.expect(got.positive_count == want.positive, where + " positive count");
    c.expect(got.arr == want.arr, where + " ARR bits");
    c.expect(std::equal(got.histogram.begin(), got.histogram.end(), want.hist.begin()), where + " histogram");
    c.expect(got.per_level_means == want.level_means, where + " per-level means");
    c.expect(got.pair_count == pairs.size(), where + " pair count");
  }
  return report(2, "ARR equals naive oracle bit-for-bit", c,
                fmt::format("tables=1000 pairs={} tolerance=exact (==) bins=0.1 lower-inclusive, last closed",
                            total_pairs));
}

// ---------------------------------------------------------------------------
// 3. calibration and the put example

/// MIRC and sub-MIRC confidences for a put class with human MIRC rate 0.59.
struct PutFixture {
  std::vector<MircSample> mircs;
  std::vector<PairRecord> pairs;
};

PutFixture put_fixture() {
  PutFixture f;
  for (int i = 0; i < 100; ++i) {
    const std::string id = fmt::format("put{:03d}/L2/UL-UL", i);
    // 59 MIRCs at or above 0.15, the rest below
    const double conf = i < 59 ? 0.15 + 0.005 * i : 0.14 - 0.001 * (i - 59);
    f.mircs.push_back({id, id.substr(0, 6), "put", 0.59, conf});
    PairRecord p = make_pair(id, id + "-UL", conf, i < 59 ? conf + 0.0105 : conf - 0.3, 3, PairKind::MircSubMirc,
                             MeasureKind::ModelConfidence);
    p.verb_class = "put";
    f.pairs.push_back(p);
  }
  return f;
}

bool criterion_3(double* put_gap_out, double* put_tl_out) {
  Checks c;
  std::mt19937_64 gen(77);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  for (int t = 0; t < 500; ++t) {
    std::vector<std::pair<std::string, double>> confs;
    for (int i = 0; i < 100; ++i) confs.emplace_back(fmt::format("m{}", i), u(gen));
    const double x = u(gen);
    const auto op = calibrate_threshold(confs, x);
    std::size_t at_or_above = 0;
    for (const auto& [id, v] : confs) at_or_above += v >= op.threshold;
    const double frac = static_cast<double>(at_or_above) / 100.0;
    worst = std::max(worst, std::abs(frac - x));
    c.expect(std::abs(frac - x) <= 1.0 / 100.0, fmt::format("draw {} deviation {}", t, std::abs(frac - x)));
    c.expect(op.qualifying.size() == at_or_above, fmt::format("draw {} qualifying set", t));

    double prev = std::numeric_limits<double>::infinity();
    for (int k = 0; k <= 100; ++k) {
      const double tl = calibrate_threshold(confs, k / 100.0).threshold;
      c.expect(tl <= prev, fmt::format("draw {} tl rises at X={}", t, k / 100.0));
      prev = tl;
    }
  }

  const auto f = put_fixture();
  const auto points = operating_points(f.mircs);
  const auto gap = ai_recognition_gap(f.pairs, points);
  const double tl = points.at("put").threshold;
  const double pct = *gap.classes.at("put").mean * 100.0;
  c.expect(std::abs(tl - 0.15) < 1e-12, fmt::format("tl {} != 0.15", tl));
  c.expect(std::abs(pct - (-1.05)) <= 0.01, fmt::format("put gap {:.4f}pp", pct));
  c.expect(gap.classes.at("put").pairs == 59, "59 qualifying pairs");
  *put_gap_out = pct;
  *put_tl_out = tl;
  return report(3, "operating-point calibration", c,
                fmt::format("draws=500 N=100 max|frac-X|={:.4f}<=1/N tl non-increasing; put X=0.59 tl={:.2f} "
                            "gap={:.2f}pp (target -1.05 +-0.01pp)",
                            worst, tl, pct));
}

// ---------------------------------------------------------------------------
// 4. retention ratios

bool criterion_4() {
  Checks c;
  std::mt19937_64 gen(404);
  std::uniform_int_distribution<int> half(4, 24), frames_d(1, 4), lvl(0, 255), coin(0, 2);
  for (int t = 0; t < 500; ++t) {
    const int w = 2 * half(gen), h = 2 * half(gen);
    const std::size_t frames = static_cast<std::size_t>(frames_d(gen));
    MaskSet masks;
    masks.width = w;
    masks.height = h;
    masks.frames = frames;
    for (std::size_t k = 0; k < kObjectFeatureCount; ++k) {
      masks.planes[k].assign(frames, std::vector<std::uint8_t>(static_cast<std::size_t>(w * h)));
      if (k == static_cast<std::size_t>(Feature::Background)) continue;
      for (auto& f : masks.planes[k])
        for (auto& px : f) px = coin(gen) == 0 ? 1 : 0;
    }
    masks.derive_background();
    ConspicuityMapSet maps;
    maps.width = w;
    maps.height = h;
    maps.frames = frames;
    for (auto& plane : maps.planes) {
      plane.assign(frames, std::vector<float>(static_cast<std::size_t>(w * h)));
      for (auto& f : plane)
        for (auto& v : f) v = static_cast<float>(lvl(gen)) / 255.0f;
    }
    auto ratios = [&](const CropRect& r) {
      std::array<RetentionRatio, kFeatureCount> out;
      const auto a = mask_retention(masks, r);
      const auto b = map_retention(maps, maps, r);
      std::copy(a.begin(), a.end(), out.begin());
      std::copy(b.begin(), b.end(), out.begin() + kObjectFeatureCount);
      return out;
    };

    // full frame
    for (const auto& r : ratios(CropRect{0, 0, w, h}))
      if (r.p) c.expect(*r.p == 1.0, fmt::format("fixture {} full-frame p={}", t, *r.p));

    // nested crops: random parent, random child inside it
    std::uniform_int_distribution<int> px(0, w - 2), py(0, h - 2);
    const int x0 = px(gen), y0 = py(gen);
    const CropRect parent{x0, y0, std::uniform_int_distribution<int>(2, w - x0)(gen),
                          std::uniform_int_distribution<int>(2, h - y0)(gen)};
    const int cx = std::uniform_int_distribution<int>(0, static_cast<int>(parent.w) - 1)(gen);
    const int cy = std::uniform_int_distribution<int>(0, static_cast<int>(parent.h) - 1)(gen);
    const CropRect child{parent.x + cx, parent.y + cy,
                         std::uniform_int_distribution<int>(1, static_cast<int>(parent.w) - cx)(gen),
                         std::uniform_int_distribution<int>(1, static_cast<int>(parent.h) - cy)(gen)};
    const auto rp = ratios(parent), rc = ratios(child);
    for (std::size_t k = 0; k < kFeatureCount; ++k)
      if (rp[k].p && rc[k].p)
        c.expect(*rc[k].p <= *rp[k].p, fmt::format("fixture {} feature {} not monotone", t, k));

    // s = 0.5 partition of an even-sized parent
    const int ex = 2 * std::uniform_int_distribution<int>(0, w / 2 - 2)(gen);
    const int ey = 2 * std::uniform_int_distribution<int>(0, h / 2 - 2)(gen);
    const CropRect even{ex, ey, 2 * std::uniform_int_distribution<int>(1, (w - ex) / 2)(gen),
                        2 * std::uniform_int_distribution<int>(1, (h - ey) / 2)(gen)};
    const auto whole = ratios(even);
    std::array<double, kFeatureCount> sum{};
    for (Corner q : kCorners) {
      const auto part = ratios(child_rect(even, q, 0.5));
      for (std::size_t k = 0; k < kFeatureCount; ++k) sum[k] += part[k].s_q;
    }
    for (std::size_t k = 0; k < kFeatureCount; ++k)
      c.expect(sum[k] == whole[k].s_q, fmt::format("fixture {} feature {} additivity {} vs {}", t, k, sum[k], whole[k].s_q));
  }
  return report(4, "retention ratio properties", c,
                "fixtures=500 (masks + k/255 maps) monotone nested crops; s=0.5 additivity exact (==); full frame p==1");
}

// ---------------------------------------------------------------------------
// 5. LTA/HTA table

std::vector<PairRecord> table5_pairs(std::size_t hta, std::size_t hta_improved, std::size_t lta,
                                     std::size_t lta_improved, MeasureKind measure) {
  const std::vector<std::string> hta_verbs{"close", "hang", "open", "pour", "put", "remove", "take", "turn-off", "turn-on"};
  const std::vector<std::string> lta_verbs{"wash", "cut", "peel"};
  std::vector<PairRecord> out;
  auto add = [&](const std::vector<std::string>& verbs, std::size_t n, std::size_t improved, int video_base) {
    for (std::size_t i = 0; i < n; ++i) {
      const double child_delta = i < improved ? -0.05 - 0.001 * static_cast<double>(i % 7) : 0.1 + 0.001 * static_cast<double>(i % 11);
      PairRecord p = make_pair("m", "m/scr", 0.6, 0.6 - child_delta, 2, PairKind::SpatiotemporalMircSubMirc, measure);
      p.verb_class = verbs[i % verbs.size()];
      p.clip_id = fmt::format("v{:02d}", video_base + static_cast<int>(i % 18));
      out.push_back(p);
    }
  };
  add(hta_verbs, hta, hta_improved, 0);
  add(lta_verbs, lta, lta_improved, 18);
  return out;
}

bool criterion_5() {
  Checks c;
  const auto table = TemporalCategoryTable::standard(default_verb_classes());
  struct Row {
    const char* who;
    MeasureKind m;
    std::size_t hta, hta_i, lta, lta_i;
    double hta_pct, lta_pct;
  };
  const Row rows[] = {{"AI", MeasureKind::ModelConfidence, 406, 106, 68, 41, 26.11, 60.29},
                      {"Human", MeasureKind::HumanAccuracy, 406, 21, 68, 8, 5.17, 11.76}};
  std::string detail;
  for (const auto& r : rows) {
    const auto s = temporal_category_stats(table5_pairs(r.hta, r.hta_i, r.lta, r.lta_i, r.m), table);
    const auto& h = s.counts.at(TemporalCategory::HTA);
    const auto& l = s.counts.at(TemporalCategory::LTA);
    c.expect(h.pairs == r.hta && h.improved == r.hta_i, std::string(r.who) + " HTA counts");
    c.expect(l.pairs == r.lta && l.improved == r.lta_i, std::string(r.who) + " LTA counts");
    c.expect(h.percent == r.hta_pct, fmt::format("{} HTA {} != {}", r.who, h.percent, r.hta_pct));
    c.expect(l.percent == r.lta_pct, fmt::format("{} LTA {} != {}", r.who, l.percent, r.lta_pct));
    // hand division rendered to two decimals
    c.expect(percent_string(r.hta_i, r.hta) == fmt::format("{:.2f}", 100.0 * r.hta_i / r.hta), "HTA string");
    c.expect(percent_string(r.lta_i, r.lta) == fmt::format("{:.2f}", 100.0 * r.lta_i / r.lta), "LTA string");
    c.expect(s.welch.has_value() && s.welch_by_video.has_value(), std::string(r.who) + " t-tests ran");
    detail += fmt::format("{} HTA {}/{}={} LTA {}/{}={}; ", r.who, h.improved, h.pairs,
                          percent_string(h.improved, h.pairs), l.improved, l.pairs, percent_string(l.improved, l.pairs));
  }
  return report(5, "LTA/HTA improvement table", c, detail + "tolerance=exact to 2 decimals");
}

// ---------------------------------------------------------------------------
// 6. dataset summary

bool criterion_6() {
  Checks c;
  auto fx = synth::table1_fixture();
  for (auto& [id, tree] : fx.forest) label_mircs(tree, fx.config);  // relabel: must be stable
  const auto s = summarize(fx.manifest, fx.forest, fx.config);

  // Independent tally straight from node roles.
  std::map<Split, std::array<std::size_t, 4>> tally;  // mircs, subs, st, st_unrec
  for (const auto& [clip_id, tree] : fx.forest) {
    const Split split = fx.manifest.clip(clip_id).split;
    for (const auto& [id, n] : tree.nodes) {
      if (n.scrambled()) {
        if (n.status != NodeStatus::Tested) continue;
        ++tally[split][2];
        if (*n.human_accuracy < fx.config.recognition_threshold) ++tally[split][3];
        continue;
      }
      if (n.mirc_role == MircRole::MIRC || n.mirc_role == MircRole::SpatiotemporalMIRC) ++tally[split][0];
      if (n.mirc_role == MircRole::SubMIRC) ++tally[split][1];
    }
  }
  const auto& e = s.splits.at(Split::Easy);
  const auto& h = s.splits.at(Split::Hard);
  c.expect(e.videos == 18 && h.videos == 18, "18 videos per split");
  c.expect(e.mircs == 273 && tally[Split::Easy][0] == 273, "Easy MIRCs 273");
  c.expect(e.spatial_sub_mircs == 1092 && tally[Split::Easy][1] == 1092, "Easy sub-MIRCs 1092");
  c.expect(e.spatiotemporal_quadrants == 273 && e.spatiotemporal_unrecognisable == 200, "Easy 273 (200)");
  c.expect(h.mircs == 402 && tally[Split::Hard][0] == 402, "Hard MIRCs 402");
  c.expect(h.spatial_sub_mircs == 804 && tally[Split::Hard][1] == 804, "Hard sub-MIRCs 804");
  c.expect(h.spatiotemporal_quadrants == 201 && h.spatiotemporal_unrecognisable == 145, "Hard 201 (145)");
  c.expect(tally[Split::Easy][2] == 273 && tally[Split::Easy][3] == 200, "oracle Easy 273 (200)");
  c.expect(tally[Split::Hard][2] == 201 && tally[Split::Hard][3] == 145, "oracle Hard 201 (145)");
  const std::size_t total = s.spatiotemporal_total(), unrec = s.spatiotemporal_unrecognisable_total();
  c.expect(total == 474 && unrec == 345, "345/474");
  c.expect(fmt::format("{:.2f}", 100.0 * s.unrecognisable_fraction()) == "72.78", "72.78%");
  c.expect(total - unrec == 129, "129 human-correct");
  return report(6, "dataset summary identities", c,
                fmt::format("Easy {}/{} {}({}) Hard {}/{} {}({}) unrecognisable {}/{}={:.2f}% correct={}", e.mircs,
                            e.spatial_sub_mircs, e.spatiotemporal_quadrants, e.spatiotemporal_unrecognisable, h.mircs,
                            h.spatial_sub_mircs, h.spatiotemporal_quadrants, h.spatiotemporal_unrecognisable, unrec,
                            total, 100.0 * s.unrecognisable_fraction(), total - unrec));
}

// ---------------------------------------------------------------------------
// 7. worked numbers

bool criterion_7(bool oracles_ok, double put_gap, double put_tl) {
  Checks c;
  c.expect(oracles_ok, "metric oracles (criteria 2 and 3)");

  // MIRC at level 2 (confidence 0.39), sub-MIRC at level 3 (0.56).
  DatasetManifest manifest = parse_manifest(
      R"({"clips":[{"clip_id":"P01_put","split":"Hard","verb_class":"put","gt_label":"put cup",
                    "frame_dir":"none","fps":30,"width":456,"height":256,"frame_count":60}]})",
      "/nowhere");
  ReductionConfig cfg;
  cfg.max_level = 3;
  cfg.pruning = false;
  ReductionTree tree = init_tree(manifest.clips[0]);
  const std::map<int, std::map<std::string, double>> acc{
      {0, {{"P01_put/L0/root", 0.9}}},
      {1, {{"P01_put/L1/UL", 0.8}, {"P01_put/L1/BL", 0.3}, {"P01_put/L1/UR", 0.3}, {"P01_put/L1/BR", 0.3}}},
      {2, {{"P01_put/L2/UL-UL", 0.7}, {"P01_put/L2/UL-BL", 0.3}, {"P01_put/L2/UL-UR", 0.3}, {"P01_put/L2/UL-BR", 0.3}}},
      {3,
       {{"P01_put/L3/UL-UL-UL", 0.3},
        {"P01_put/L3/UL-UL-BL", 0.2},
        {"P01_put/L3/UL-UL-UR", 0.25},
        {"P01_put/L3/UL-UL-BR", 0.1}}}};
  for (const auto& [level, a] : acc) {
    attach_accuracies(tree, a);
    expand_level(tree, level, cfg);
  }
  attach_confidences(tree, {{"P01_put/L2/UL-UL", 0.39}, {"P01_put/L3/UL-UL-UL", 0.56}});
  label_mircs(tree, cfg);
  Forest forest{{"P01_put", tree}};
  const auto pairs = extract_pairs(forest, manifest, PairKind::MircSubMirc, MeasureKind::ModelConfidence);
  c.expect(pairs.size() == 1, fmt::format("{} AI MIRC pairs", pairs.size()));
  double rise = 0;
  if (pairs.size() == 1) {
    const auto& p = pairs[0];
    c.expect(p.parent_node_id == "P01_put/L2/UL-UL" && p.level == 3, "pair is the level-2 MIRC");
    c.expect(percent2(p.a_parent) == 39.0 && percent2(p.a_child) == 56.0, "39% -> 56%");
    rise = -percent2(p.delta);
    c.expect(rise == 17.0, fmt::format("rise {}", rise));
  }

  // 13/20 and 8/20 responders, gap +25 points.
  std::vector<ScoredResponse> parent(20), child(20);
  for (int i = 0; i < 20; ++i) {
    parent[i].correct = i < 13;
    child[i].correct = i < 8;
  }
  const double ap = *node_accuracy(parent), ac = *node_accuracy(child);
  c.expect(ap == 0.65 && ac == 0.40, "13/20 = 0.65 and 8/20 = 0.40");
  const auto hg = human_recognition_gap(std::vector<PairRecord>{
      make_pair("a", "b", ap, ac, 1, PairKind::MircSubMirc, MeasureKind::HumanAccuracy)});
  const double fig2_gap = percent2(*hg.classes.begin()->second.mean);
  c.expect(fig2_gap == 25.0, "gap +25.00");

  c.expect(std::abs(put_gap + 1.05) <= 0.01, "put gap -1.05");
  c.expect(std::abs(put_tl - 0.15) < 1e-12, "put tl 0.15");
  c.expect(percent_string(106, 406) == "26.11" && percent_string(41, 68) == "60.29", "26.11 / 60.29");
  c.expect(fmt::format("{:.2f}", 100.0 * 345 / 474) == "72.78", "72.78");

  return report(7, "worked numbers", c,
                fmt::format("confidence 39%->56% (+{:.0f}pp); responders 0.65 vs 0.40 gap +{:.2f}pp; put tl={:.2f} "
                            "gap={:.2f}pp; oracles(2,3)={}",
                            rise, fig2_gap, put_tl, put_gap, oracles_ok ? "pass" : "fail"));
}

// ---------------------------------------------------------------------------
// 8. scoring

int oracle_osa(const std::string& a, const std::string& b) {
  const std::size_t n = a.size(), m = b.size();
  std::vector<std::vector<int>> d(n + 1, std::vector<int>(m + 1));
  for (std::size_t i = 0; i <= n; ++i) d[i][0] = static_cast<int>(i);
  for (std::size_t j = 0; j <= m; ++j) d[0][j] = static_cast<int>(j);
  for (std::size_t i = 1; i <= n; ++i)
    for (std::size_t j = 1; j <= m; ++j) {
      d[i][j] = std::min({d[i - 1][j] + 1, d[i][j - 1] + 1, d[i - 1][j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
      if (i > 1 && j > 1 && a[i - 1] == b[j - 2] && a[i - 2] == b[j - 1]) d[i][j] = std::min(d[i][j], d[i - 2][j - 2] + 1);
    }
  return d[n][m];
}

bool criterion_8() {
  Checks c;
  struct Case {
    double cs, co, ca, p, b, want;
  };
  const Case cases[] = {{0.8, 0.9, 0.7, 0.5, 0.6, 0.7739},
                        {1.0, 1.0, 1.0, 0.4, 0.4, 1.0},
                        {0.0, 0.0, 0.0, 0.5, 0.6, 0.0},
                        {0.5, 0.2, 0.3, 1.0, 1.0, 0.5 - 0.04 + 0.09},
                        {-0.2, -0.5, -0.5, 0.2, 0.2, -0.2 - 0.01 + 0.01}};
  double worst = 0.0;
  for (const auto& k : cases) {
    const double got = semantic_similarity(k.cs, k.co, k.ca, k.p, k.b);
    worst = std::max(worst, std::abs(got - k.want));
    c.expect(std::abs(got - k.want) <= 1e-12, fmt::format("S_sim {} vs {}", got, k.want));
  }

  // Fuzz corpus for idempotence.
  ScoringConfig cfg;
  cfg.penalty = 0.5;
  cfg.bonus = 0.6;
  cfg.threshold = 0.7;
  const std::vector<std::string> vocab{"close", "open", "door", "fridge", "cut", "onion", "wash", "plate",
                                       "take", "cup", "pour", "water", "put", "knife", "peel", "carrot"};
  std::map<std::string, std::uint64_t> small_dict;
  for (std::size_t i = 0; i < vocab.size(); ++i) small_dict[vocab[i]] = 100 + i;
  const SpellCorrector small(small_dict, 2);
  std::mt19937_64 gen(88);
  std::uniform_int_distribution<int> nwords(1, 6), pick(0, 99), letter(0, 25);
  const std::vector<std::string> noise{"the", "a", "An", "MAN", "someone", "she", "...", "!", ",", "  "};
  std::size_t fuzz = 0;
  for (int t = 0; t < 200; ++t) {
    std::string raw;
    const int n = nwords(gen);
    for (int i = 0; i < n; ++i) {
      std::string w;
      const int r = pick(gen);
      if (r < 30) w = noise[static_cast<std::size_t>(r) % noise.size()];
      else w = vocab[static_cast<std::size_t>(r) % vocab.size()];
      if (r % 5 == 0 && w.size() > 2) w[static_cast<std::size_t>(r) % w.size()] = static_cast<char>('a' + letter(gen));
      if (r % 7 == 0) std::transform(w.begin(), w.end(), w.begin(), ::toupper);
      raw += w + (r % 3 == 0 ? ", " : " ");
    }
    if (raw.find_first_not_of(' ') == std::string::npos) raw = "x";
    const auto once = clean(raw, cfg, &small);
    const auto twice = clean(once.text, cfg, &small);
    c.expect(twice.text == once.text, fmt::format("clean not idempotent on '{}'", raw));
    ++fuzz;
  }

  // Spell correction vs brute force over a 1000-word dictionary.
  std::map<std::string, std::uint64_t> dict;
  std::uniform_int_distribution<int> len(3, 7), small_letter(0, 5), count(1, 50);
  while (dict.size() < 1000) {
    std::string w(static_cast<std::size_t>(len(gen)), 'a');
    for (auto& ch : w) ch = static_cast<char>('a' + small_letter(gen));
    dict[w] = static_cast<std::uint64_t>(count(gen));
  }
  const SpellCorrector speller(dict, 2);
  std::vector<std::string> words;
  for (const auto& [w, n] : dict) words.push_back(w);
  std::size_t found = 0, none = 0;
  for (int q = 0; q < 1000; ++q) {
    std::string w = words[static_cast<std::size_t>(pick(gen) * 10 + q % 10) % words.size()];
    const int edits = q % 4;
    for (int e = 0; e < edits; ++e) {
      const int op = pick(gen) % 4;
      const std::size_t pos = w.empty() ? 0 : static_cast<std::size_t>(pick(gen)) % w.size();
      if (op == 0 && !w.empty()) w.erase(pos, 1);
      else if (op == 1) w.insert(pos, 1, static_cast<char>('a' + small_letter(gen)));
      else if (op == 2 && !w.empty()) w[pos] = static_cast<char>('a' + letter(gen) % 8);
      else if (w.size() > 1 && pos + 1 < w.size()) std::swap(w[pos], w[pos + 1]);
    }
    // brute force: smallest distance, then highest count, then lexicographic
    std::optional<std::tuple<int, std::uint64_t, std::string>> best;
    for (const auto& [cand, cnt] : dict) {
      const int d = oracle_osa(w, cand);
      if (d > 2) continue;
      const bool better = !best || d < std::get<0>(*best) ||
                          (d == std::get<0>(*best) && (cnt > std::get<1>(*best) ||
                                                       (cnt == std::get<1>(*best) && cand < std::get<2>(*best))));
      if (better) best = std::make_tuple(d, cnt, cand);
    }
    const auto got = speller.lookup(w);
    if (!best) {
      ++none;
      c.expect(!got.has_value(), fmt::format("'{}' should have no suggestion", w));
    } else {
      ++found;
      c.expect(got && got->term == std::get<2>(*best) && got->distance == std::get<0>(*best),
               fmt::format("'{}' -> '{}' expected '{}'", w, got ? got->term : "-", std::get<2>(*best)));
    }
  }
  return report(8, "scoring arithmetic, cleaning and spelling", c,
                fmt::format("S_sim cases={} max|err|={:.1e}<=1e-12; idempotent fuzz={}; spelling queries=1000 "
                            "(hits {}, none {}) vs brute-force OSA<=2 on dict=1000",
                            std::size(cases), worst, fuzz, found, none));
}

// ---------------------------------------------------------------------------
// 9. geometry

bool criterion_9() {
  Checks c;
  std::mt19937_64 gen(909);
  std::uniform_int_distribution<int> pos(0, 60), dim(1, 40);
  for (int t = 0; t < 1000; ++t) {
    const CropRect a{pos(gen), pos(gen), dim(gen), dim(gen)};
    const CropRect b{pos(gen), pos(gen), dim(gen), dim(gen)};
    std::vector<std::uint8_t> grid(100 * 100, 0);
    for (auto y = a.y; y < a.bottom(); ++y)
      for (auto x = a.x; x < a.right(); ++x) grid[static_cast<std::size_t>(y * 100 + x)] |= 1;
    std::int64_t both = 0;
    for (auto y = b.y; y < b.bottom(); ++y)
      for (auto x = b.x; x < b.right(); ++x) both += grid[static_cast<std::size_t>(y * 100 + x)] & 1;
    c.expect(intersection_area(a, b) == both, fmt::format("pair {}: {} vs raster {}", t, intersection_area(a, b), both));
    const auto r = overlap(a, b);
    c.expect(r.share_of_first == static_cast<double>(both) / static_cast<double>(a.area()), "share");
  }

  std::string counts;
  for (int L = 0; L <= 4; ++L) {
    ReductionConfig cfg;
    cfg.max_level = L;
    cfg.pruning = false;
    Clip clip;
    clip.clip_id = "g";
    clip.width = 456;
    clip.height = 256;
    clip.frames.assign(5, "x");
    ReductionTree tree = init_tree(clip);
    for (int level = 0; level <= L; ++level) {
      std::map<std::string, double> acc;
      for (const auto* n : tree.at_level(level)) acc[n->node_id] = 1.0;
      attach_accuracies(tree, acc);
      expand_level(tree, level, cfg);
    }
    // brute force: count corner paths of length <= L
    std::size_t brute = 0;
    std::function<void(int)> walk = [&](int depth) {
      ++brute;
      if (depth == L) return;
      for (int k = 0; k < 4; ++k) walk(depth + 1);
    };
    walk(0);
    std::size_t pow4 = 1;
    for (int i = 0; i <= L; ++i) pow4 *= 4;
    const std::size_t closed = (pow4 - 1) / 3;
    c.expect(tree.nodes.size() == closed && brute == closed, fmt::format("L={} nodes {}", L, tree.nodes.size()));
    counts += fmt::format("{}{}", L ? "," : "", tree.nodes.size());
  }
  return report(9, "rectangle intersection and tree size", c,
                "pairs=1000 analytic==raster (exact); unpruned nodes L0..4=" + counts + " == (4^(L+1)-1)/3");
}

// ---------------------------------------------------------------------------
// 10. end-to-end determinism

int cli(std::vector<std::string> args, std::ostream& log) {
  std::ostringstream out, err;
  const int rc = cli::run(args, out, err);
  if (rc != 0) {
    log << "mirc-lab";
    for (const auto& a : args) log << ' ' << a;
    log << " -> " << rc << ": " << err.str();
  }
  return rc;
}

bool run_pipeline(const fs::path& dir, std::uint64_t seed, std::ostream& log) {
  fs::remove_all(dir);
  fs::create_directories(dir);
  const fs::path previous = fs::current_path();
  fs::current_path(dir);
  bool ok = true;
  auto step = [&](std::vector<std::string> args) {
    if (ok) ok = cli(std::move(args), log) == 0;
  };
  const std::string s = std::to_string(seed);
  step({"--seed", s, "synth", "--out", "mini"});
  const std::vector<std::string> cfg{"--config", "mini/config.json"};
  auto with = [&](std::vector<std::string> rest) {
    std::vector<std::string> a = cfg;
    a.insert(a.end(), rest.begin(), rest.end());
    return a;
  };
  const std::string m = "mini/manifest.json";
  step(with({"score", "--manifest", m, "--out", "out/scored.csv"}));
  step(with({"reduce", "--manifest", m, "--out", "out/t0.json"}));
  for (int i = 1; i <= 3; ++i)
    step(with({"reduce", "--manifest", m, "--trees", fmt::format("out/t{}.json", i - 1), "--scored", "out/scored.csv",
               "--out", fmt::format("out/t{}.json", i)}));
  step(with({"scramble", "--manifest", m, "--trees", "out/t3.json", "--out", "out/t4.json", "--plans-out",
             "out/plans.json"}));
  step(with({"mirc-label", "--manifest", m, "--trees", "out/t4.json", "--scored", "out/scored.csv", "--out",
             "out/labelled.json", "--pairs-out", "out/pairs.json"}));
  for (const std::string measure : {"human", "ai"}) {
    for (const std::string kind : {"mirc", "st", "all"})
      step(with({"metrics", "rg", "--pairs", "out/pairs.json", "--measure", measure, "--kind", kind, "--out",
                 "out/rg_" + measure + "_" + kind + ".json"}));
    step(with({"metrics", "arr", "--pairs", "out/pairs.json", "--measure", measure, "--kind", "all", "--out",
               "out/arr_" + measure + ".json"}));
  }
  step(with({"features", "ratios", "--manifest", m, "--trees", "out/labelled.json", "--out", "out/ratios.csv"}));
  step(with({"features", "transitions", "--manifest", m, "--trees", "out/labelled.json", "--ratios", "out/ratios.csv",
             "--out", "out/transitions.csv"}));
  step(with({"features", "deltas", "--transitions", "out/transitions.csv", "--out", "out/deltas.json"}));
  step(with({"features", "correlate", "--transitions", "out/transitions.csv", "--classifier", "ai", "--direction",
             "failure", "--out", "out/corr.json"}));
  step(with({"features", "temporal", "--pairs", "out/pairs.json", "--manifest", m, "--measure", "ai", "--out",
             "out/temporal.json"}));
  step(with({"summarize", "--manifest", m, "--trees", "out/labelled.json", "--out", "out/summary.json"}));
  fs::current_path(previous);
  return ok;
}

std::map<std::string, std::string> tree_contents(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    out[fs::relative(e.path(), root).generic_string()] = {std::istreambuf_iterator<char>(in),
                                                          std::istreambuf_iterator<char>()};
  }
  return out;
}

bool criterion_10() {
  Checks c;
  const fs::path base = fs::path(MIRC_TEST_TMP) / "pipeline";
  std::ostringstream log;
  const auto t0 = Clock::now();
  const bool ok1 = run_pipeline(base / "run1", 7, log);
  const bool ok2 = run_pipeline(base / "run2", 7, log);
  const double elapsed = seconds_since(t0);
  c.expect(ok1 && ok2, "pipeline steps succeeded: " + log.str());
  const auto a = tree_contents(base / "run1"), b = tree_contents(base / "run2");
  std::size_t outputs = 0, bytes = 0, differing = 0;
  for (const auto& [path, data] : a) {
    auto it = b.find(path);
    if (it == b.end() || it->second != data) {
      ++differing;
      c.expect(false, "differs: " + path);
    }
    if (path.rfind("out/", 0) == 0) ++outputs;
    bytes += data.size();
  }
  c.expect(a.size() == b.size(), "same file set");
  c.expect(outputs >= 20, fmt::format("{} outputs", outputs));
  c.expect(elapsed < 30.0, fmt::format("runtime {:.2f}s", elapsed));

  // Sanity on content: the seed is recorded and MIRCs were found.
  if (a.count("out/summary.json")) {
    c.expect(a.at("out/summary.json").find("\"seed\": 7") != std::string::npos, "seed recorded in summary");
  }
  if (a.count("out/labelled.json")) c.expect(a.at("out/labelled.json").find("\"MIRC\"") != std::string::npos ||
                                                 a.at("out/labelled.json").find("SpatiotemporalMIRC") != std::string::npos,
                                             "MIRCs labelled");
  return report(10, "end-to-end determinism on the mini dataset", c,
                fmt::format("files={} outputs={} bytes={} differing={} two runs={:.2f}s<30s", a.size(), outputs, bytes,
                            differing, elapsed));
}

}  // namespace

int main() {
  std::cout << "mirc-lab acceptance suite" << std::endl;
  int failed = 0;
  double put_gap = 0, put_tl = 0;
  failed += !criterion_1();
  const bool c2 = criterion_2();
  failed += !c2;
  const bool c3 = criterion_3(&put_gap, &put_tl);
  failed += !c3;
  failed += !criterion_4();
  failed += !criterion_5();
  failed += !criterion_6();
  failed += !criterion_7(c2 && c3, put_gap, put_tl);
  failed += !criterion_8();
  failed += !criterion_9();
  failed += !criterion_10();
  std::cout << (failed ? fmt::format("{} of 10 criteria FAILED", failed) : std::string("all 10 criteria PASS"))
            << std::endl;
  return failed ? 1 : 0;
}
