#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "idmask/error.hpp"
#include "idmask/io.hpp"
#include "idmask/metrics.hpp"
#include "idmask/protocol.hpp"
#include "temp_dir.hpp"
#include "test_support.hpp"

using namespace idmask;

namespace {

BenchmarkConfig tiny_config() {
  BenchmarkConfig c;
  c.protected_identities = 2;
  c.images_per_identity = 3;
  c.target_identities = 1;
  c.target_images_per_identity = 2;
  c.distractor_identities = 1;
  c.distractor_images_per_identity = 1;
  c.shape = Shape{8, 8, 1};
  return c;
}

// Sort-based ranking oracle: lexicographic (distance, position).
RankFlags oracle_flags(const std::vector<FeatureVec>& gallery, const std::vector<std::uint32_t>& labels,
                       const FeatureVec& probe, std::uint32_t truth, const std::set<std::uint32_t>& targets,
                       std::size_t n) {
  std::vector<std::pair<double, std::size_t>> order;
  for (std::size_t i = 0; i < gallery.size(); ++i) {
    double d = 0;
    for (std::size_t k = 0; k < probe.size(); ++k) {
      d += (probe.values[k] - gallery[i].values[k]) * (probe.values[k] - gallery[i].values[k]);
    }
    order.emplace_back(d, i);
  }
  std::sort(order.begin(), order.end());
  RankFlags f{false, true};
  for (std::size_t k = 0; k < n; ++k) {
    const auto l = labels[order[k].second];
    f.targeted |= targets.count(l) > 0;
    f.untargeted &= l != truth;
  }
  return f;
}

double l2(const Image& a, const Image& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

}  // namespace

TEST_CASE("synthetic dataset") {
  BenchmarkConfig c;
  c.shape = Shape{16, 16, 1};
  const auto a = build_synthetic_dataset(c);
  CHECK(a.size() == 50 * 4 + 10 * 3 + 50 * 3);
  const auto b = build_synthetic_dataset(c);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].image == b[i].image);
    CHECK(a[i].index == i);
    for (double v : a[i].image.pixels()) CHECK((v >= 0.0 && v <= 1.0));
  }
  // 100 intra-identity pairs against 100 inter-identity pairs.
  double intra = 0, inter = 0;
  for (std::size_t k = 0; k < 100; ++k) {
    const std::size_t id = k % 50;
    intra += l2(a[id * 4].image, a[id * 4 + 1 + k % 3].image);
    inter += l2(a[id * 4].image, a[((id + 1 + k % 7) % 50) * 4].image);
  }
  CHECK(intra < inter);
  c.seed = 2;
  CHECK_FALSE(build_synthetic_dataset(c)[0].image == a[0].image);
}

TEST_CASE("benchmark layout for the small recipe") {
  const auto b = build_benchmark(tiny_config());
  CHECK(b.probes.size() == 2);
  CHECK(b.gallery.size() == 2 * 2 + 1 + 1);
  CHECK(b.target_set.size() == 1);
  CHECK(b.target_labels == std::vector<std::uint32_t>{2});
  CHECK_NOTHROW(b.audit());
  for (const auto& p : b.probes) {
    for (const auto& g : b.gallery) CHECK_FALSE(g.image == p.image);
  }
  for (const auto& g : b.gallery) CHECK_FALSE(g.image == b.target_set[0]);

  auto bad = tiny_config();
  bad.images_per_identity = 1;
  CHECK_THROWS_AS(build_benchmark(bad), InvalidArgument);
  bad = tiny_config();
  bad.target_identities = 0;
  CHECK_THROWS_AS(build_benchmark(bad), InvalidArgument);
}

TEST_CASE("benchmark audit over 50 random configs") {
  Rng rng(3);
  for (int k = 0; k < 50; ++k) {
    BenchmarkConfig c;
    c.protected_identities = 1 + rng.below(6);
    c.images_per_identity = 2 + rng.below(4);
    c.target_identities = 1 + rng.below(4);
    c.target_images_per_identity = 2 + rng.below(3);
    c.distractor_identities = 1 + rng.below(5);
    c.distractor_images_per_identity = 1 + rng.below(3);
    c.shape = Shape{4 + rng.below(5), 4 + rng.below(5), rng.below(2) ? 3u : 1u};
    c.seed = rng.next_u64();
    const auto b = build_benchmark(c);
    CHECK_NOTHROW(b.audit());
    CHECK(b.probes.size() == c.protected_identities);
    CHECK(b.gallery.size() == c.protected_identities * (c.images_per_identity - 1) +
                                  c.target_identities * (c.target_images_per_identity - 1) +
                                  c.distractor_identities * c.distractor_images_per_identity);
    CHECK(b.target_set.size() == c.target_identities);
    const auto k1 = b.with_target_count(1);
    CHECK(k1.target_set.size() == 1);
    CHECK(k1.target_label_set().size() == 1);
  }
}

TEST_CASE("audit catches a leaked probe") {
  auto b = build_benchmark(tiny_config());
  b.gallery.push_back(b.probes[0]);
  CHECK_THROWS_AS(b.audit(), InvalidArgument);
}

TEST_CASE("rank flags on a gallery of two") {
  const GalleryIndex g({FeatureVec{{1.0, 0.0}}, FeatureVec{{0.0, 1.0}}}, {7, 3});
  const FeatureVec probe{{0.9, 0.1}};
  const auto f = rank_flags(g, probe, 3, {7}, 1);
  CHECK(f.targeted);
  CHECK(f.untargeted);
  const auto f2 = rank_flags(g, probe, 3, {7}, 2);
  CHECK(f2.targeted);
  CHECK_FALSE(f2.untargeted);
  CHECK_THROWS_AS(rank_flags(g, probe, 3, {7}, 3), InvalidArgument);
  CHECK_THROWS_AS(rank_flags(g, probe, 3, {7}, 0), InvalidArgument);
  // Equal distances: the earlier position ranks first.
  const GalleryIndex tie({FeatureVec{{0.0, 1.0}}, FeatureVec{{0.0, 1.0}}}, {3, 7});
  CHECK_FALSE(rank_flags(tie, probe, 3, {7}, 1).targeted);
}

TEST_CASE("rank flags match the sorting oracle on 1000 galleries") {
  Rng rng(4);
  std::size_t mismatches = 0;
  for (int k = 0; k < 1000; ++k) {
    const std::size_t n = 5 + rng.below(26), d = 2 + rng.below(6);
    std::vector<FeatureVec> feats;
    std::vector<std::uint32_t> labels;
    for (std::size_t i = 0; i < n; ++i) {
      // Some duplicates so ties get exercised.
      feats.push_back(i > 0 && rng.below(5) == 0 ? feats[rng.below(i)] : testing::random_unit(d, rng));
      labels.push_back(static_cast<std::uint32_t>(rng.below(8)));
    }
    const auto probe = rng.below(4) == 0 ? feats[rng.below(n)] : testing::random_unit(d, rng);
    const auto truth = static_cast<std::uint32_t>(rng.below(8));
    const std::set<std::uint32_t> targets{static_cast<std::uint32_t>(rng.below(8)),
                                          static_cast<std::uint32_t>(rng.below(8))};
    const GalleryIndex index(feats, labels);
    for (std::size_t top : {1u, 5u}) {
      const auto got = rank_flags(index, probe, truth, targets, top);
      const auto want = oracle_flags(feats, labels, probe, truth, targets, top);
      mismatches += got.targeted != want.targeted || got.untargeted != want.untargeted;
    }
  }
  CHECK(mismatches == 0);
}

TEST_CASE("rank-1 targeted success follows from a strictly nearer target image") {
  Rng rng(5);
  for (int k = 0; k < 300; ++k) {
    const std::size_t n = 3 + rng.below(10);
    std::vector<FeatureVec> feats;
    std::vector<std::uint32_t> labels;
    for (std::size_t i = 0; i < n; ++i) {
      feats.push_back(testing::random_unit(4, rng));
      labels.push_back(static_cast<std::uint32_t>(rng.below(4)));
    }
    const auto probe = testing::random_unit(4, rng);
    const GalleryIndex index(feats, labels);
    const auto nearest = index.ranking(probe)[0];
    const std::uint32_t target = labels[nearest];
    const std::uint32_t truth = (target + 1) % 4;
    bool strictly = true;
    for (std::size_t i = 0; i < n; ++i) {
      if (labels[i] == truth) {
        strictly &= feature_distance(probe, feats[i]) > feature_distance(probe, feats[nearest]);
      }
    }
    if (strictly) CHECK(rank_flags(index, probe, truth, {target}, 1).targeted);
  }
}

TEST_CASE("psnr") {
  Rng rng(6);
  const Shape s{6, 5, 3};
  const auto a = testing::random_image(s, rng, 0.2, 0.8);
  CHECK(psnr(a, a) == kPsnrCap);
  std::vector<double> shifted(a.pixels().begin(), a.pixels().end());
  for (auto& v : shifted) v += 0.1;
  CHECK(std::abs(psnr(a, Image(s, shifted)) - 20.0) <= 1e-9);
  for (int k = 0; k < 50; ++k) {
    const auto x = testing::random_image(s, rng), y = testing::random_image(s, rng);
    double mse = 0;
    for (std::size_t i = 0; i < x.size(); ++i) mse += (x[i] - y[i]) * (x[i] - y[i]);
    mse /= static_cast<double>(x.size());
    CHECK(std::abs(psnr(x, y) - 10.0 * std::log10(1.0 / mse)) <= 1e-9);
    CHECK(psnr(x, y) == psnr(y, x));
  }
  CHECK_THROWS_AS(psnr(a, Image(Shape{1, 1, 1}, 0.0)), ShapeError);
}

TEST_CASE("ssim") {
  Rng rng(7);
  const Shape s{16, 16, 1};
  const auto a = testing::random_image(s, rng);
  CHECK(std::abs(ssim(a, a) - 1.0) <= 1e-9);
  std::vector<double> inv(a.pixels().begin(), a.pixels().end());
  for (auto& v : inv) v = 1.0 - v;
  CHECK(ssim(a, Image(s, inv)) < 1.0);
  CHECK_THROWS_AS(ssim(Image(Shape{10, 16, 1}, 0.5), Image(Shape{10, 16, 1}, 0.5)), InvalidArgument);

  // Golden value from an independent implementation (see data/v1/generate.py).
  const auto dir = testing::data_dir();
  double golden = 0;
  std::ifstream(dir / "ssim_golden.txt") >> golden;
  REQUIRE(golden != 0.0);
  CHECK(std::abs(ssim(read_image_file(dir / "ssim_a.png"), read_image_file(dir / "ssim_b.png")) - golden) <= 1e-12);

  // Colour images average the per-channel values.
  const Shape rgb{12, 12, 3};
  const auto x = testing::random_image(rgb, rng), y = testing::random_image(rgb, rng);
  double mean = 0;
  for (std::size_t c = 0; c < 3; ++c) {
    std::vector<double> px, py;
    for (std::size_t i = c; i < x.size(); i += 3) {
      px.push_back(x[i]);
      py.push_back(y[i]);
    }
    mean += ssim(Image(Shape{12, 12, 1}, px), Image(Shape{12, 12, 1}, py)) / 3;
  }
  CHECK(ssim(x, y) == doctest::Approx(mean).epsilon(1e-14));
}

TEST_CASE("report aggregation and serialization") {
  ProtectionReport r;
  r.method = "tip-im";
  r.eval_model = "m";
  for (std::size_t i = 0; i < 3; ++i) {
    ProbeResult p;
    p.probe_index = i;
    p.rank1_t = i != 1;
    p.rank5_t = true;
    p.rank1_ut = i == 2;
    p.psnr = 30.0 + static_cast<double>(i);
    p.ssim = 0.9;
    r.probes.push_back(p);
  }
  r.aggregate();
  CHECK(r.rank1_t == 2.0 / 3.0);
  CHECK(r.rank5_t == 1.0);
  CHECK(r.rank1_ut == 1.0 / 3.0);
  CHECK(r.rank5_ut == 0.0);
  CHECK(r.mean_psnr == 31.0);
  const auto csv = r.to_csv();
  CHECK(csv.rfind("probe,identity,rank1_t,rank5_t,rank1_ut,rank5_ut,psnr,ssim\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
  CHECK(r.to_text().find("rank1_t = 0.66666666666666663") != std::string::npos);
  CHECK(summary_csv_row(r).rfind("tip-im,m,0,3,", 0) == 0);
  const auto header = summary_csv_header(), row = summary_csv_row(r);
  CHECK(std::count(header.begin(), header.end(), ',') == std::count(row.begin(), row.end(), ','));
}

TEST_CASE("method names") {
  for (auto m : {Method::kClean, Method::kTipIm, Method::kCenterOpt, Method::kMim, Method::kDim, Method::kMtDim}) {
    CHECK(parse_method(method_name(m)) == m);
  }
  CHECK_THROWS_AS(parse_method("fgsm"), InvalidArgument);
}

TEST_CASE("run_experiment on a small benchmark") {
  auto cfg = tiny_config();
  cfg.protected_identities = 4;
  cfg.target_identities = 3;
  cfg.distractor_identities = 3;
  cfg.shape = Shape{12, 12, 1};
  const auto bench = build_benchmark(cfg);
  Rng rng(8);
  const auto sur = testing::random_mlp(cfg.shape, 16, rng);
  const auto other = make_linear_model(3, cfg.shape, 16);
  ExperimentConfig ec;
  ec.attack.iterations = 5;
  for (auto method : {Method::kTipIm, Method::kCenterOpt, Method::kMim, Method::kDim, Method::kMtDim}) {
    const auto a = run_experiment(bench, method, {"sur", &sur}, {{"sur", &sur}, {"other", &other}}, ec);
    const auto b = run_experiment(bench, method, {"sur", &sur}, {{"sur", &sur}, {"other", &other}}, ec);
    CHECK(a.protected_images == b.protected_images);
    REQUIRE(a.reports.size() == 2);
    CHECK(a.reports[0].white_box);
    CHECK_FALSE(a.reports[1].white_box);
    CHECK(a.reports[0].method == method_name(method));
    CHECK(a.reports[0].probes.size() == 4);
    CHECK(a.reports[0].config.count("epsilon") == 1);
    for (std::size_t i = 0; i < 4; ++i) {
      CHECK(perturbation_norm(a.protected_images[i], bench.probes[i].image, NormType::kLinf) <=
            ec.attack.epsilon + 1e-9);
    }
    // Aggregates are exact means.
    double r1 = 0;
    for (const auto& p : a.reports[1].probes) r1 += p.rank1_t;
    CHECK(a.reports[1].rank1_t == r1 / 4);
  }
  const auto clean = evaluate_protected(bench, bench.probe_batch(), {"sur", &sur}, true, "clean");
  CHECK(clean.mean_psnr == kPsnrCap);
  CHECK(clean.mmd == 0.0);
  CHECK(clean_rank1_accuracy(bench, sur) == doctest::Approx(1.0 - clean.rank1_ut));
}
