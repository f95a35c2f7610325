#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "idmask/baselines.hpp"
#include "idmask/embedding.hpp"
#include "idmask/image.hpp"
#include "idmask/masker.hpp"
#include "idmask/selection.hpp"

namespace idmask {

/// Open-set benchmark layout. Protected identities contribute one probe each
/// and the rest of their images to the gallery; each target identity gives
/// one image to the substitute target set and the rest to the gallery;
/// distractor identities only populate the gallery.
struct BenchmarkConfig {
  std::size_t protected_identities = 50;
  std::size_t images_per_identity = 4;
  std::size_t target_identities = 10;
  std::size_t target_images_per_identity = 3;
  std::size_t distractor_identities = 50;
  std::size_t distractor_images_per_identity = 3;
  Shape shape{32, 32, 1};
  std::uint64_t seed = 1;

  void validate() const;
};

/// Synthetic identity generator. Each identity is a smooth field (seeded sum
/// of 2-D cosines rescaled to [0.15, 0.85]); each sample adds Gaussian noise
/// (sigma 0.03), a brightness shift in [-0.05, 0.05] and a random circular
/// translation of at most one pixel, then clamps to [0, 1].
std::vector<LabeledImage> generate_identities(std::size_t identities, std::size_t images_per_identity,
                                              const Shape& shape, std::uint64_t seed,
                                              std::uint32_t first_label = 0);

/// All benchmark identities in label order: protected, target, distractor.
std::vector<LabeledImage> build_synthetic_dataset(const BenchmarkConfig& cfg);

struct Benchmark {
  std::vector<LabeledImage> probes;
  std::vector<LabeledImage> gallery;
  TargetSet target_set;
  std::vector<std::uint32_t> target_labels;  // label of target_set[i]
  BenchmarkConfig config;

  std::set<std::uint32_t> target_label_set() const;
  ImageBatch probe_batch() const;
  /// Keeps the first k targets; only their identities count as targets.
  Benchmark with_target_count(std::size_t k) const;
  /// Throws InvalidArgument naming the first violated invariant.
  void audit() const;
};

Benchmark build_benchmark(const BenchmarkConfig& cfg);

/// Gallery embeddings for one evaluation model.
class GalleryIndex {
 public:
  GalleryIndex(const Embedder& model, const std::vector<LabeledImage>& gallery);
  GalleryIndex(std::vector<FeatureVec> features, std::vector<std::uint32_t> labels);

  std::size_t size() const noexcept { return features_.size(); }
  const FeatureVec& feature(std::size_t i) const noexcept { return features_[i]; }
  std::uint32_t label(std::size_t i) const noexcept { return labels_[i]; }

  /// Gallery positions sorted by D_f ascending, ties by position.
  std::vector<std::size_t> ranking(const FeatureVec& probe) const;

 private:
  std::vector<FeatureVec> features_;
  std::vector<std::uint32_t> labels_;
};

struct RankFlags {
  bool targeted = false;    // some top-N image carries a target label
  bool untargeted = false;  // no top-N image carries the true label
};

RankFlags rank_flags(const GalleryIndex& gallery, const FeatureVec& probe, std::uint32_t true_label,
                     const std::set<std::uint32_t>& target_labels, std::size_t n);
RankFlags rank_flags(const Embedder& model, const Image& probe, std::uint32_t true_label,
                     const Benchmark& benchmark, std::size_t n);

enum class Method { kClean, kTipIm, kCenterOpt, kMim, kDim, kMtDim };

std::string method_name(Method m);
Method parse_method(const std::string& s);

struct ProbeResult {
  std::size_t probe_index = 0;
  std::uint32_t identity = 0;
  bool rank1_t = false, rank5_t = false, rank1_ut = false, rank5_ut = false;
  double psnr = 0.0;
  double ssim = 0.0;
};

struct ProtectionReport {
  std::string method;
  std::string eval_model;
  bool white_box = false;
  std::vector<ProbeResult> probes;
  double rank1_t = 0.0, rank5_t = 0.0, rank1_ut = 0.0, rank5_ut = 0.0;
  double mean_psnr = 0.0, mean_ssim = 0.0;
  double mmd = 0.0;  // objective kernel, whole protected batch vs originals
  std::map<std::string, std::string> config;

  /// Recomputes the aggregates as exact means of the per-probe values.
  void aggregate();
  /// One "key = value" per line: aggregates, config echo, then per-probe rows.
  std::string to_text() const;
  /// Per-probe CSV with header
  /// probe,identity,rank1_t,rank5_t,rank1_ut,rank5_ut,psnr,ssim
  std::string to_csv() const;
};

/// Header of summary_csv_row().
std::string summary_csv_header();
std::string summary_csv_row(const ProtectionReport& r);

struct NamedModel {
  std::string name;
  const Embedder* model = nullptr;
};

struct ExperimentConfig {
  AttackConfig attack;
  DiversityConfig diversity;
};

struct ExperimentResult {
  ImageBatch protected_images;
  std::vector<ProtectionReport> reports;  // one per evaluation model
};

/// Protects every probe against the surrogate and scores the result on each
/// evaluation model. Single-target methods are run once per target and keep,
/// per probe, the run with the lowest surrogate identification loss.
ExperimentResult run_experiment(const Benchmark& benchmark, Method method, const NamedModel& surrogate,
                                const std::vector<NamedModel>& eval_models, const ExperimentConfig& cfg);

/// Scores an already-protected probe batch.
ProtectionReport evaluate_protected(const Benchmark& benchmark, const ImageBatch& protected_images,
                                    const NamedModel& eval_model, bool white_box,
                                    const std::string& method);

/// Fraction of unprotected probes whose nearest gallery image has their own
/// identity.
double clean_rank1_accuracy(const Benchmark& benchmark, const Embedder& model);

/// Recognizers for the desk-scale experiments, trained on identities disjoint
/// from every benchmark identity.
struct DeskModels {
  EmbeddingModel surrogate;
  EmbeddingModel held_out;
  double surrogate_train_accuracy = 0.0;
  double held_out_train_accuracy = 0.0;
};

struct DeskModelConfig {
  std::size_t training_identities = 100;
  std::size_t images_per_identity = 8;
  TrainConfig surrogate{300, 0.5, 11, 64, 0, 12.0};
  TrainConfig held_out{300, 0.5, 11, 128, 0, 12.0};  // same init seed, wider
  std::uint64_t data_seed = 0x7a11;
};

std::vector<LabeledImage> build_training_set(const Shape& shape, const DeskModelConfig& cfg);
DeskModels train_desk_models(const Shape& shape, const DeskModelConfig& cfg);

}  // namespace idmask
