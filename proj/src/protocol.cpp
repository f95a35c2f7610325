#include "idmask/protocol.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>

#include "idmask/error.hpp"
#include "idmask/metrics.hpp"
#include "idmask/objective.hpp"
#include "idmask/rng.hpp"

namespace idmask {

void BenchmarkConfig::validate() const {
  validate_shape(shape);
  if (protected_identities == 0 || target_identities == 0 || distractor_identities == 0) {
    throw InvalidArgument("benchmark identity counts must be at least 1");
  }
  if (images_per_identity < 2) {
    throw InvalidArgument("images_per_identity must be at least 2 (one probe plus gallery)");
  }
  if (target_images_per_identity < 2) {
    throw InvalidArgument("target_images_per_identity must be at least 2 (one target plus gallery)");
  }
  if (distractor_images_per_identity == 0) {
    throw InvalidArgument("distractor_images_per_identity must be at least 1");
  }
}

namespace {

constexpr int kCosineTerms = 6;
constexpr double kMaxFrequency = 2.0;  // cycles across the image

std::vector<double> smooth_base(const Shape& shape, Rng& rng) {
  std::vector<double> base(shape.size(), 0.0);
  for (std::size_t ch = 0; ch < shape.channels; ++ch) {
    for (int term = 0; term < kCosineTerms; ++term) {
      const double amp = rng.uniform(0.2, 1.0);
      const double fy = rng.uniform(-kMaxFrequency, kMaxFrequency);
      const double fx = rng.uniform(-kMaxFrequency, kMaxFrequency);
      const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
      for (std::size_t y = 0; y < shape.height; ++y) {
        for (std::size_t x = 0; x < shape.width; ++x) {
          const double arg = 2.0 * std::numbers::pi *
                                 (fy * static_cast<double>(y) / static_cast<double>(shape.height) +
                                  fx * static_cast<double>(x) / static_cast<double>(shape.width)) +
                             phase;
          base[shape.index(y, x, ch)] += amp * std::cos(arg);
        }
      }
    }
  }
  const auto [lo, hi] = std::minmax_element(base.begin(), base.end());
  const double min = *lo, span = *hi - *lo;
  for (double& v : base) v = span > 0.0 ? 0.15 + 0.7 * (v - min) / span : 0.5;
  return base;
}

Image sample_identity(const Shape& shape, const std::vector<double>& base, Rng& rng) {
  const double shift = rng.uniform(-0.05, 0.05);
  const auto dy = static_cast<std::ptrdiff_t>(rng.below(3)) - 1;
  const auto dx = static_cast<std::ptrdiff_t>(rng.below(3)) - 1;
  const auto h = static_cast<std::ptrdiff_t>(shape.height);
  const auto w = static_cast<std::ptrdiff_t>(shape.width);
  std::vector<double> px(shape.size());
  for (std::ptrdiff_t y = 0; y < h; ++y) {
    for (std::ptrdiff_t x = 0; x < w; ++x) {
      const auto sy = static_cast<std::size_t>((y - dy + h) % h);
      const auto sx = static_cast<std::size_t>((x - dx + w) % w);
      for (std::size_t ch = 0; ch < shape.channels; ++ch) {
        px[shape.index(static_cast<std::size_t>(y), static_cast<std::size_t>(x), ch)] =
            base[shape.index(sy, sx, ch)] + shift + rng.normal(0.0, 0.03);
      }
    }
  }
  return Image::clamped(shape, std::move(px));
}

}  // namespace

std::vector<LabeledImage> generate_identities(std::size_t identities, std::size_t images_per_identity,
                                              const Shape& shape, std::uint64_t seed,
                                              std::uint32_t first_label) {
  validate_shape(shape);
  std::vector<LabeledImage> out;
  out.reserve(identities * images_per_identity);
  for (std::size_t k = 0; k < identities; ++k) {
    const auto label = static_cast<std::uint32_t>(first_label + k);
    Rng base_rng(mix_seed(seed, 2 * static_cast<std::uint64_t>(label)));
    Rng sample_rng(mix_seed(seed, 2 * static_cast<std::uint64_t>(label) + 1));
    const auto base = smooth_base(shape, base_rng);
    for (std::size_t j = 0; j < images_per_identity; ++j) {
      out.push_back(LabeledImage{sample_identity(shape, base, sample_rng), label, out.size()});
    }
  }
  return out;
}

std::vector<LabeledImage> build_synthetic_dataset(const BenchmarkConfig& cfg) {
  cfg.validate();
  auto all = generate_identities(cfg.protected_identities, cfg.images_per_identity, cfg.shape, cfg.seed, 0);
  auto first = static_cast<std::uint32_t>(cfg.protected_identities);
  auto targets = generate_identities(cfg.target_identities, cfg.target_images_per_identity, cfg.shape,
                                     cfg.seed, first);
  first += static_cast<std::uint32_t>(cfg.target_identities);
  auto distractors = generate_identities(cfg.distractor_identities, cfg.distractor_images_per_identity,
                                         cfg.shape, cfg.seed, first);
  all.insert(all.end(), targets.begin(), targets.end());
  all.insert(all.end(), distractors.begin(), distractors.end());
  for (std::size_t i = 0; i < all.size(); ++i) all[i].index = i;
  return all;
}

std::set<std::uint32_t> Benchmark::target_label_set() const {
  return {target_labels.begin(), target_labels.end()};
}

ImageBatch Benchmark::probe_batch() const {
  std::vector<Image> images;
  images.reserve(probes.size());
  for (const auto& p : probes) images.push_back(p.image);
  return ImageBatch(std::move(images));
}

Benchmark Benchmark::with_target_count(std::size_t k) const {
  if (k == 0 || k > target_set.size()) {
    throw InvalidArgument("target count must lie in [1, " + std::to_string(target_set.size()) + "]");
  }
  std::vector<Image> images(target_set.images().begin(), target_set.images().begin() + static_cast<std::ptrdiff_t>(k));
  std::vector<std::uint32_t> labels(target_labels.begin(), target_labels.begin() + static_cast<std::ptrdiff_t>(k));
  return Benchmark{probes, gallery, TargetSet(std::move(images)), std::move(labels), config};
}

void Benchmark::audit() const {
  std::set<std::uint32_t> gallery_labels;
  for (const auto& g : gallery) gallery_labels.insert(g.identity);
  std::set<std::size_t> gallery_indices;
  for (const auto& g : gallery) {
    if (!gallery_indices.insert(g.index).second) throw InvalidArgument("audit: duplicate gallery index");
  }
  for (const auto& p : probes) {
    for (const auto& g : gallery) {
      if (g.index == p.index || g.image == p.image) throw InvalidArgument("audit: probe appears in gallery");
    }
    if (gallery_labels.count(p.identity) == 0) {
      throw InvalidArgument("audit: probe identity " + std::to_string(p.identity) + " has no gallery image");
    }
  }
  if (target_labels.size() != target_set.size()) throw InvalidArgument("audit: target label count mismatch");
  for (std::size_t t = 0; t < target_set.size(); ++t) {
    for (const auto& g : gallery) {
      if (g.image == target_set[t]) throw InvalidArgument("audit: target image appears in gallery");
    }
    if (gallery_labels.count(target_labels[t]) == 0) {
      throw InvalidArgument("audit: target identity has no gallery image");
    }
  }
}

Benchmark build_benchmark(const BenchmarkConfig& cfg) {
  const auto all = build_synthetic_dataset(cfg);
  Rng pick(mix_seed(cfg.seed, 0xbe9c4));
  std::vector<LabeledImage> probes, gallery;
  std::vector<Image> target_images;
  std::vector<std::uint32_t> target_labels;

  std::size_t pos = 0;
  for (std::size_t k = 0; k < cfg.protected_identities; ++k) {
    const std::size_t chosen = pos + pick.below(cfg.images_per_identity);
    for (std::size_t j = 0; j < cfg.images_per_identity; ++j, ++pos) {
      (pos == chosen ? probes : gallery).push_back(all[pos]);
    }
  }
  for (std::size_t k = 0; k < cfg.target_identities; ++k) {
    const std::size_t chosen = pos + pick.below(cfg.target_images_per_identity);
    for (std::size_t j = 0; j < cfg.target_images_per_identity; ++j, ++pos) {
      if (pos == chosen) {
        target_images.push_back(all[pos].image);
        target_labels.push_back(all[pos].identity);
      } else {
        gallery.push_back(all[pos]);
      }
    }
  }
  for (; pos < all.size(); ++pos) gallery.push_back(all[pos]);

  Benchmark b{std::move(probes), std::move(gallery), TargetSet(std::move(target_images)),
              std::move(target_labels), cfg};
  b.audit();
  return b;
}

GalleryIndex::GalleryIndex(const Embedder& model, const std::vector<LabeledImage>& gallery) {
  features_.reserve(gallery.size());
  labels_.reserve(gallery.size());
  for (const auto& g : gallery) {
    features_.push_back(model.embed(g.image));
    labels_.push_back(g.identity);
  }
}

GalleryIndex::GalleryIndex(std::vector<FeatureVec> features, std::vector<std::uint32_t> labels)
    : features_(std::move(features)), labels_(std::move(labels)) {
  if (features_.size() != labels_.size()) throw ShapeError("gallery features and labels differ in length");
}

std::vector<std::size_t> GalleryIndex::ranking(const FeatureVec& probe) const {
  std::vector<double> d(features_.size());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = feature_distance(probe, features_[i]);
  std::vector<std::size_t> order(d.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return d[a] < d[b]; });
  return order;
}

RankFlags rank_flags(const GalleryIndex& gallery, const FeatureVec& probe, std::uint32_t true_label,
                     const std::set<std::uint32_t>& target_labels, std::size_t n) {
  if (gallery.size() == 0) throw InvalidArgument("rank_flags: empty gallery");
  if (n == 0 || n > gallery.size()) {
    throw InvalidArgument("rank_flags: N must lie in [1, gallery size]");
  }
  const auto order = gallery.ranking(probe);
  RankFlags flags{false, true};
  for (std::size_t k = 0; k < n; ++k) {
    const auto label = gallery.label(order[k]);
    if (target_labels.count(label) != 0) flags.targeted = true;
    if (label == true_label) flags.untargeted = false;
  }
  return flags;
}

RankFlags rank_flags(const Embedder& model, const Image& probe, std::uint32_t true_label,
                     const Benchmark& benchmark, std::size_t n) {
  const GalleryIndex index(model, benchmark.gallery);
  return rank_flags(index, model.embed(probe), true_label, benchmark.target_label_set(), n);
}

std::string method_name(Method m) {
  switch (m) {
    case Method::kClean: return "clean";
    case Method::kTipIm: return "tip-im";
    case Method::kCenterOpt: return "center-opt";
    case Method::kMim: return "mim";
    case Method::kDim: return "dim";
    case Method::kMtDim: return "mt-dim";
  }
  return "unknown";
}

Method parse_method(const std::string& s) {
  for (Method m : {Method::kClean, Method::kTipIm, Method::kCenterOpt, Method::kMim, Method::kDim,
                   Method::kMtDim}) {
    if (method_name(m) == s) return m;
  }
  throw InvalidArgument("unknown method '" + s + "'");
}

void ProtectionReport::aggregate() {
  const double n = static_cast<double>(probes.size());
  double r1t = 0, r5t = 0, r1u = 0, r5u = 0, ps = 0, ss = 0;
  for (const auto& p : probes) {
    r1t += p.rank1_t;
    r5t += p.rank5_t;
    r1u += p.rank1_ut;
    r5u += p.rank5_ut;
    ps += p.psnr;
    ss += p.ssim;
  }
  if (probes.empty()) return;
  rank1_t = r1t / n;
  rank5_t = r5t / n;
  rank1_ut = r1u / n;
  rank5_ut = r5u / n;
  mean_psnr = ps / n;
  mean_ssim = ss / n;
}

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

std::string ProtectionReport::to_text() const {
  std::ostringstream os;
  os << "method = " << method << "\n"
     << "eval_model = " << eval_model << "\n"
     << "white_box = " << (white_box ? "true" : "false") << "\n"
     << "probes = " << probes.size() << "\n"
     << "rank1_t = " << fmt(rank1_t) << "\n"
     << "rank5_t = " << fmt(rank5_t) << "\n"
     << "rank1_ut = " << fmt(rank1_ut) << "\n"
     << "rank5_ut = " << fmt(rank5_ut) << "\n"
     << "mean_psnr = " << fmt(mean_psnr) << "\n"
     << "mean_ssim = " << fmt(mean_ssim) << "\n"
     << "mmd = " << fmt(mmd) << "\n";
  for (const auto& [k, v] : config) os << "config." << k << " = " << v << "\n";
  for (const auto& p : probes) {
    os << "probe." << p.probe_index << " = identity:" << p.identity << " r1t:" << p.rank1_t
       << " r5t:" << p.rank5_t << " r1ut:" << p.rank1_ut << " r5ut:" << p.rank5_ut
       << " psnr:" << fmt(p.psnr) << " ssim:" << fmt(p.ssim) << "\n";
  }
  return os.str();
}

std::string ProtectionReport::to_csv() const {
  std::ostringstream os;
  os << "probe,identity,rank1_t,rank5_t,rank1_ut,rank5_ut,psnr,ssim\n";
  for (const auto& p : probes) {
    os << p.probe_index << ',' << p.identity << ',' << p.rank1_t << ',' << p.rank5_t << ','
       << p.rank1_ut << ',' << p.rank5_ut << ',' << fmt(p.psnr) << ',' << fmt(p.ssim) << '\n';
  }
  return os.str();
}

std::string summary_csv_header() {
  return "method,eval_model,white_box,probes,rank1_t,rank5_t,rank1_ut,rank5_ut,mean_psnr,mean_ssim,mmd";
}

std::string summary_csv_row(const ProtectionReport& r) {
  std::ostringstream os;
  os << r.method << ',' << r.eval_model << ',' << (r.white_box ? 1 : 0) << ',' << r.probes.size() << ','
     << fmt(r.rank1_t) << ',' << fmt(r.rank5_t) << ',' << fmt(r.rank1_ut) << ',' << fmt(r.rank5_ut) << ','
     << fmt(r.mean_psnr) << ',' << fmt(r.mean_ssim) << ',' << fmt(r.mmd);
  return os.str();
}

ProtectionReport evaluate_protected(const Benchmark& benchmark, const ImageBatch& protected_images,
                                    const NamedModel& eval_model, bool white_box,
                                    const std::string& method) {
  if (protected_images.size() != benchmark.probes.size()) {
    throw ShapeError("evaluate_protected: one protected image per probe required");
  }
  const GalleryIndex index(*eval_model.model, benchmark.gallery);
  const auto targets = benchmark.target_label_set();
  const std::size_t n5 = std::min<std::size_t>(5, index.size());

  ProtectionReport report;
  report.method = method;
  report.eval_model = eval_model.name;
  report.white_box = white_box;
  for (std::size_t i = 0; i < benchmark.probes.size(); ++i) {
    const auto& probe = benchmark.probes[i];
    const FeatureVec f = eval_model.model->embed(protected_images[i]);
    const RankFlags r1 = rank_flags(index, f, probe.identity, targets, 1);
    const RankFlags r5 = rank_flags(index, f, probe.identity, targets, n5);
    ProbeResult pr;
    pr.probe_index = i;
    pr.identity = probe.identity;
    pr.rank1_t = r1.targeted;
    pr.rank1_ut = r1.untargeted;
    pr.rank5_t = r5.targeted;
    pr.rank5_ut = r5.untargeted;
    pr.psnr = psnr(protected_images[i], probe.image);
    const Shape& s = probe.image.shape();
    pr.ssim = (s.height >= 11 && s.width >= 11) ? ssim(protected_images[i], probe.image)
                                                 : std::numeric_limits<double>::quiet_NaN();
    report.probes.push_back(pr);
  }
  report.aggregate();
  const ImageBatch originals = benchmark.probe_batch();
  report.mmd = mmd(protected_images, originals, median_heuristic_kernel(originals));
  return report;
}

double clean_rank1_accuracy(const Benchmark& benchmark, const Embedder& model) {
  const GalleryIndex index(model, benchmark.gallery);
  const auto targets = benchmark.target_label_set();
  std::size_t hits = 0;
  for (const auto& p : benchmark.probes) {
    if (!rank_flags(index, model.embed(p.image), p.identity, targets, 1).untargeted) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(benchmark.probes.size());
}

namespace {

std::map<std::string, std::string> echo(const ExperimentConfig& cfg, Method method) {
  const auto& a = cfg.attack;
  return {
      {"method", method_name(method)},
      {"norm", std::string(norm_name(a.norm))},
      {"epsilon", fmt(a.epsilon)},
      {"alpha", fmt(a.alpha)},
      {"iterations", std::to_string(a.iterations)},
      {"momentum", fmt(a.momentum)},
      {"gamma", fmt(a.gamma)},
      {"diversity_probability", fmt(cfg.diversity.probability)},
      {"diversity_scale_low", fmt(cfg.diversity.scale_low)},
      {"diversity_scale_high", fmt(cfg.diversity.scale_high)},
      {"diversity_seed", std::to_string(cfg.diversity.seed)},
  };
}

// Single-target methods: one run per target, then per probe the run whose
// surrogate identification loss toward its own target is lowest.
ImageBatch best_single_target(const Benchmark& b, const Embedder& surrogate, const ExperimentConfig& cfg,
                              Method method) {
  const ImageBatch real = b.probe_batch();
  const std::size_t n = real.size();
  std::vector<std::optional<Image>> best(n);
  std::vector<double> best_loss(n, std::numeric_limits<double>::infinity());
  std::vector<FeatureVec> fr(n);
  for (std::size_t i = 0; i < n; ++i) fr[i] = surrogate.embed(real[i]);

  for (std::size_t t = 0; t < b.target_set.size(); ++t) {
    const Image& target = b.target_set[t];
    DiversityConfig div = cfg.diversity;
    div.seed = mix_seed(cfg.diversity.seed, t);
    const ProtectResult res = method == Method::kMim
                                  ? mim_protect(real, target, surrogate, cfg.attack)
                                  : dim_protect(real, target, surrogate, cfg.attack, div);
    const FeatureVec ft = surrogate.embed(target);
    for (std::size_t i = 0; i < n; ++i) {
      const double loss = identification_loss(surrogate.embed(res.protected_images[i]), ft, fr[i]);
      if (loss < best_loss[i]) {
        best_loss[i] = loss;
        best[i] = res.protected_images[i];
      }
    }
  }
  std::vector<Image> out;
  out.reserve(n);
  for (auto& img : best) out.push_back(std::move(*img));
  return ImageBatch(std::move(out));
}

}  // namespace

ExperimentResult run_experiment(const Benchmark& benchmark, Method method, const NamedModel& surrogate,
                                const std::vector<NamedModel>& eval_models, const ExperimentConfig& cfg) {
  if (surrogate.model == nullptr) throw InvalidArgument("run_experiment: surrogate model missing");
  const ImageBatch real = benchmark.probe_batch();
  const Embedder& model = *surrogate.model;

  ImageBatch protected_images = real;
  switch (method) {
    case Method::kClean:
      break;
    case Method::kTipIm:
    case Method::kCenterOpt: {
      AttackConfig a = cfg.attack;
      a.selection.mode = method == Method::kTipIm ? SelectionMode::kGreedy : SelectionMode::kCenter;
      protected_images = protect_batch(real, benchmark.target_set, model, a).protected_images;
      break;
    }
    case Method::kMim:
    case Method::kDim:
      protected_images = best_single_target(benchmark, model, cfg, method);
      break;
    case Method::kMtDim:
      protected_images =
          mt_dim_protect(real, benchmark.target_set, model, cfg.attack, cfg.diversity).protected_images;
      break;
  }

  ExperimentResult result{protected_images, {}};
  for (const auto& eval : eval_models) {
    ProtectionReport r = evaluate_protected(benchmark, protected_images, eval,
                                            eval.model == surrogate.model, method_name(method));
    r.config = echo(cfg, method);
    r.config["surrogate"] = surrogate.name;
    r.config["benchmark_seed"] = std::to_string(benchmark.config.seed);
    r.config["targets"] = std::to_string(benchmark.target_set.size());
    result.reports.push_back(std::move(r));
  }
  return result;
}

std::vector<LabeledImage> build_training_set(const Shape& shape, const DeskModelConfig& cfg) {
  // Labels start far above any benchmark label so the pools never collide.
  return generate_identities(cfg.training_identities, cfg.images_per_identity, shape, cfg.data_seed,
                             1u << 20);
}

DeskModels train_desk_models(const Shape& shape, const DeskModelConfig& cfg) {
  const auto data = build_training_set(shape, cfg);
  TrainResult s = train_mlp_model(data, cfg.surrogate);
  TrainResult h = train_mlp_model(data, cfg.held_out);
  return DeskModels{std::move(s.model), std::move(h.model), s.train_accuracy, h.train_accuracy};
}

}  // namespace idmask
