#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <vector>

#include "idmask/image.hpp"

namespace idmask {

struct FeatureVec {
  std::vector<double> values;

  std::size_t size() const noexcept { return values.size(); }
  bool operator==(const FeatureVec&) const = default;
};

/// D_f: squared Euclidean distance between two feature vectors.
double feature_distance(const FeatureVec& a, const FeatureVec& b);

/// A differentiable map from images to feature vectors. External recognizers
/// plug in by implementing this interface; the optimizer only needs forward
/// evaluation and vector-Jacobian products with respect to the input.
class Embedder {
 public:
  virtual ~Embedder() = default;

  virtual const Shape& input_shape() const noexcept = 0;
  virtual std::size_t output_dim() const noexcept = 0;
  virtual FeatureVec embed(const Image& x) const = 0;
  /// d(cotangent . f(x)) / dx.
  virtual PixelArray input_gradient(const Image& x, std::span<const double> cotangent) const = 0;
};

enum class ModelKind : std::uint8_t { kLinearProj = 1, kMlpOneHidden = 2 };

/// Built-in toy recognizers.
///
///   LinearProj:    f(x) = W x / |W x|,                       W: d x n
///   MlpOneHidden:  f(x) = h / |h|,  h = tanh(W1 x + b1),     W1: d x n
///
/// Both emit unit vectors, so D_f lies in [0, 4].
class EmbeddingModel final : public Embedder {
 public:
  /// `normalize = false` drops the unit-norm head; only tests use it.
  static EmbeddingModel linear(Shape input, std::size_t dim, std::vector<double> weights,
                               bool normalize = true);
  static EmbeddingModel mlp(Shape input, std::size_t hidden, std::vector<double> w1,
                            std::vector<double> b1);

  ModelKind kind() const noexcept { return kind_; }
  bool normalized() const noexcept { return normalize_; }
  const Shape& input_shape() const noexcept override { return input_; }
  std::size_t output_dim() const noexcept override { return dim_; }

  /// Flat parameters: W for LinearProj, W1 followed by b1 for MlpOneHidden.
  std::span<const double> parameters() const noexcept { return params_; }

  FeatureVec embed(const Image& x) const override;
  PixelArray input_gradient(const Image& x, std::span<const double> cotangent) const override;

  bool operator==(const EmbeddingModel& other) const;

 private:
  EmbeddingModel(ModelKind kind, Shape input, std::size_t dim, std::vector<double> params,
                 bool normalize);

  // Pre-normalization activations.
  std::vector<double> activations(std::span<const double> x) const;

  ModelKind kind_;
  Shape input_;
  std::size_t dim_;
  std::vector<double> params_;
  bool normalize_;
};

/// Seeded Gaussian projection, entries N(0, 1/n).
EmbeddingModel make_linear_model(std::uint64_t seed, Shape input, std::size_t dim);

/// First-layer weights start as N(0, (init_gain)^2 / n) with biases that
/// center every unit on a mid-gray input. A large gain leaves a strong random
/// component in the trained weights, which keeps the toy recognizer as
/// sensitive to small pixel changes as real ones are.
struct TrainConfig {
  std::size_t epochs = 300;
  double learning_rate = 0.5;
  std::uint64_t seed = 1;
  std::size_t hidden_width = 64;
  std::size_t num_identities = 0;  // 0: inferred from the dataset
  double init_gain = 1.0;
};

struct TrainResult {
  EmbeddingModel model;
  double train_accuracy = 0.0;
  double final_loss = 0.0;
  std::size_t epochs_run = 0;
};

/// Full-batch gradient descent on softmax cross-entropy over identities. The
/// classifier head is discarded; the embedding is the normalized hidden layer.
TrainResult train_mlp_model(std::span<const LabeledImage> dataset, const TrainConfig& cfg);

/// "EMBM" model file; layout documented in docs/formats.md.
void save_model(const EmbeddingModel& model, const std::filesystem::path& path);
EmbeddingModel load_model(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_model(const EmbeddingModel& model);
EmbeddingModel decode_model(const std::vector<std::uint8_t>& bytes);

/// FNV-1a over the little-endian parameter bytes.
std::uint64_t parameter_checksum(const EmbeddingModel& model);

}  // namespace idmask
