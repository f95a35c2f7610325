#include "idmask/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <utility>

#include "byte_io.hpp"
#include "idmask/error.hpp"
#include "idmask/kernels.hpp"
#include "idmask/rng.hpp"

namespace idmask {

double feature_distance(const FeatureVec& a, const FeatureVec& b) {
  if (a.size() != b.size()) {
    throw ShapeError("feature_distance: length mismatch " + std::to_string(a.size()) + " vs " +
                     std::to_string(b.size()));
  }
  return kernels::squared_distance(a.values, b.values);
}

EmbeddingModel::EmbeddingModel(ModelKind kind, Shape input, std::size_t dim,
                               std::vector<double> params, bool normalize)
    : kind_(kind), input_(input), dim_(dim), params_(std::move(params)), normalize_(normalize) {
  validate_shape(input_);
  if (dim_ == 0) throw InvalidArgument("embedding dimension must be positive");
  const std::size_t n = input_.size();
  const std::size_t expected = kind_ == ModelKind::kLinearProj ? dim_ * n : dim_ * n + dim_;
  if (params_.size() != expected) {
    throw ShapeError("embedding model expects " + std::to_string(expected) + " parameters, got " +
                     std::to_string(params_.size()));
  }
  for (double p : params_) {
    if (!std::isfinite(p)) throw InvalidArgument("non-finite model parameter");
  }
}

EmbeddingModel EmbeddingModel::linear(Shape input, std::size_t dim, std::vector<double> weights,
                                      bool normalize) {
  return EmbeddingModel(ModelKind::kLinearProj, input, dim, std::move(weights), normalize);
}

EmbeddingModel EmbeddingModel::mlp(Shape input, std::size_t hidden, std::vector<double> w1,
                                   std::vector<double> b1) {
  if (b1.size() != hidden) throw ShapeError("mlp bias length must equal hidden width");
  w1.insert(w1.end(), b1.begin(), b1.end());
  return EmbeddingModel(ModelKind::kMlpOneHidden, input, hidden, std::move(w1), true);
}

std::vector<double> EmbeddingModel::activations(std::span<const double> x) const {
  const std::size_t n = input_.size();
  std::vector<double> v(dim_);
  const std::span<const double> w(params_.data(), dim_ * n);
  kernels::gemv(w, dim_, n, x, v);
  if (kind_ == ModelKind::kMlpOneHidden) {
    const double* bias = params_.data() + dim_ * n;
    for (std::size_t r = 0; r < dim_; ++r) v[r] = std::tanh(v[r] + bias[r]);
  }
  return v;
}

FeatureVec EmbeddingModel::embed(const Image& x) const {
  require_same_shape(input_, x.shape(), "embed");
  std::vector<double> v = activations(x.pixels());
  if (normalize_) {
    const double norm = std::sqrt(kernels::dot(v, v));
    if (!(norm > 0.0)) throw InvalidArgument("embed: zero activation vector cannot be normalized");
    for (double& e : v) e /= norm;
  }
  return FeatureVec{std::move(v)};
}

PixelArray EmbeddingModel::input_gradient(const Image& x, std::span<const double> cotangent) const {
  require_same_shape(input_, x.shape(), "input_gradient");
  if (cotangent.size() != dim_) {
    throw ShapeError("input_gradient: cotangent length " + std::to_string(cotangent.size()) +
                     " does not match embedding dimension " + std::to_string(dim_));
  }
  const std::size_t n = input_.size();
  const std::vector<double> v = activations(x.pixels());
  std::vector<double> u(cotangent.begin(), cotangent.end());

  if (normalize_) {
    // Jacobian of v / |v| is (I - f f^T) / |v| with f = v / |v|.
    const double norm = std::sqrt(kernels::dot(v, v));
    if (!(norm > 0.0)) throw InvalidArgument("input_gradient: zero activation vector");
    double fc = 0.0;
    for (std::size_t r = 0; r < dim_; ++r) fc += v[r] * cotangent[r];
    fc /= norm;
    for (std::size_t r = 0; r < dim_; ++r) u[r] = (cotangent[r] - (v[r] / norm) * fc) / norm;
  }
  if (kind_ == ModelKind::kMlpOneHidden) {
    for (std::size_t r = 0; r < dim_; ++r) u[r] *= 1.0 - v[r] * v[r];
  }
  std::vector<double> g(n);
  kernels::gemv_t(std::span<const double>(params_.data(), dim_ * n), dim_, n, u, g);
  return PixelArray(input_, std::move(g));
}

bool EmbeddingModel::operator==(const EmbeddingModel& other) const {
  return kind_ == other.kind_ && input_ == other.input_ && dim_ == other.dim_ &&
         normalize_ == other.normalize_ && params_ == other.params_;
}

EmbeddingModel make_linear_model(std::uint64_t seed, Shape input, std::size_t dim) {
  validate_shape(input);
  const std::size_t n = input.size();
  if (dim == 0 || dim > n) {
    throw InvalidArgument("make_linear_model: need 0 < d <= input size, got d=" + std::to_string(dim));
  }
  Rng rng(seed);
  const double scale = 1.0 / std::sqrt(static_cast<double>(n));
  std::vector<double> w(dim * n);
  for (double& e : w) e = scale * rng.normal();
  return EmbeddingModel::linear(input, dim, std::move(w));
}

TrainResult train_mlp_model(std::span<const LabeledImage> dataset, const TrainConfig& cfg) {
  if (cfg.epochs == 0 || cfg.hidden_width == 0 || !(cfg.learning_rate > 0.0) || !(cfg.init_gain > 0.0)) {
    throw InvalidArgument("train config: epochs, hidden width, learning rate and init gain must be positive");
  }
  if (dataset.empty()) throw InvalidArgument("train_mlp_model: empty dataset");

  std::map<std::uint32_t, std::size_t> class_of;
  std::map<std::uint32_t, std::size_t> counts;
  for (const auto& item : dataset) ++counts[item.identity];
  for (const auto& [label, count] : counts) {
    if (count < 2) {
      throw InvalidArgument("train_mlp_model: identity " + std::to_string(label) +
                            " has fewer than 2 images");
    }
    class_of.emplace(label, class_of.size());
  }
  const std::size_t classes = class_of.size();
  if (classes < 2) throw InvalidArgument("train_mlp_model: need at least 2 identities");
  if (cfg.num_identities != 0 && cfg.num_identities != classes) {
    throw InvalidArgument("train_mlp_model: config says " + std::to_string(cfg.num_identities) +
                          " identities, dataset has " + std::to_string(classes));
  }

  const Shape shape = dataset.front().image.shape();
  for (const auto& item : dataset) require_same_shape(shape, item.image.shape(), "train_mlp_model");
  const std::size_t n = shape.size();
  const std::size_t hidden = cfg.hidden_width;

  Rng rng(cfg.seed);
  std::vector<double> w1(hidden * n), b1(hidden, 0.0), w2(classes * hidden), b2(classes, 0.0);
  const double s1 = cfg.init_gain / std::sqrt(static_cast<double>(n));
  const double s2 = 1.0 / std::sqrt(static_cast<double>(hidden));
  for (double& e : w1) e = s1 * rng.normal();
  for (double& e : w2) e = s2 * rng.normal();
  for (std::size_t r = 0; r < hidden; ++r) {
    double row_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) row_sum += w1[r * n + i];
    b1[r] = -0.5 * row_sum;
  }

  std::vector<double> gw1(w1.size()), gb1(hidden), gw2(w2.size()), gb2(classes);
  std::vector<double> h(hidden), z(classes), dh(hidden);
  const double inv_count = 1.0 / static_cast<double>(dataset.size());

  auto forward = [&](std::span<const double> x) {
    kernels::gemv(w1, hidden, n, x, h);
    for (std::size_t r = 0; r < hidden; ++r) h[r] = std::tanh(h[r] + b1[r]);
    kernels::gemv(w2, classes, hidden, h, z);
    double zmax = -INFINITY;
    for (std::size_t k = 0; k < classes; ++k) {
      z[k] += b2[k];
      zmax = std::max(zmax, z[k]);
    }
    double denom = 0.0;
    for (std::size_t k = 0; k < classes; ++k) {
      z[k] = std::exp(z[k] - zmax);
      denom += z[k];
    }
    for (std::size_t k = 0; k < classes; ++k) z[k] /= denom;
  };

  double loss = 0.0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::fill(gw1.begin(), gw1.end(), 0.0);
    std::fill(gb1.begin(), gb1.end(), 0.0);
    std::fill(gw2.begin(), gw2.end(), 0.0);
    std::fill(gb2.begin(), gb2.end(), 0.0);
    loss = 0.0;
    for (const auto& item : dataset) {
      const auto x = item.image.pixels();
      forward(x);
      const std::size_t y = class_of.at(item.identity);
      loss -= std::log(std::max(z[y], 1e-300));
      z[y] -= 1.0;  // dL/dlogits
      for (std::size_t k = 0; k < classes; ++k) {
        gb2[k] += z[k];
        kernels::axpy(z[k], h, std::span<double>(gw2.data() + k * hidden, hidden));
      }
      kernels::gemv_t(w2, classes, hidden, z, dh);
      for (std::size_t r = 0; r < hidden; ++r) {
        const double da = dh[r] * (1.0 - h[r] * h[r]);
        gb1[r] += da;
        kernels::axpy(da, x, std::span<double>(gw1.data() + r * n, n));
      }
    }
    const double step = cfg.learning_rate * inv_count;
    kernels::axpy(-step, gw1, w1);
    kernels::axpy(-step, gb1, b1);
    kernels::axpy(-step, gw2, w2);
    kernels::axpy(-step, gb2, b2);
    loss *= inv_count;
  }

  std::size_t correct = 0;
  for (const auto& item : dataset) {
    forward(item.image.pixels());
    const auto best = static_cast<std::size_t>(std::max_element(z.begin(), z.end()) - z.begin());
    if (best == class_of.at(item.identity)) ++correct;
  }

  TrainResult result{EmbeddingModel::mlp(shape, hidden, std::move(w1), std::move(b1)),
                     static_cast<double>(correct) * inv_count, loss, cfg.epochs};
  return result;
}

namespace {
constexpr char kModelMagic[4] = {'E', 'M', 'B', 'M'};
}

std::vector<std::uint8_t> encode_model(const EmbeddingModel& model) {
  if (!model.normalized()) throw InvalidArgument("save_model: unnormalized test models are not saved");
  detail::ByteWriter w;
  w.bytes(kModelMagic, 4);
  w.le<std::uint8_t>(static_cast<std::uint8_t>(model.kind()));
  w.le<std::uint32_t>(static_cast<std::uint32_t>(model.input_shape().height));
  w.le<std::uint32_t>(static_cast<std::uint32_t>(model.input_shape().width));
  w.le<std::uint32_t>(static_cast<std::uint32_t>(model.input_shape().channels));
  w.le<std::uint32_t>(static_cast<std::uint32_t>(model.output_dim()));
  w.le<std::uint64_t>(model.parameters().size());
  for (double p : model.parameters()) w.le<double>(p);
  return std::move(w.data());
}

EmbeddingModel decode_model(const std::vector<std::uint8_t>& bytes) {
  detail::ByteReader r(bytes);
  char magic[4];
  if (bytes.size() < 4) throw IoError(IoErrorKind::kTruncated, "model file: truncated header");
  r.bytes(magic, 4);
  if (!std::equal(magic, magic + 4, kModelMagic)) {
    throw IoError(IoErrorKind::kBadMagic, "model file: bad magic bytes");
  }
  const auto kind = r.le<std::uint8_t>();
  Shape shape;
  shape.height = r.le<std::uint32_t>();
  shape.width = r.le<std::uint32_t>();
  shape.channels = r.le<std::uint32_t>();
  const std::size_t dim = r.le<std::uint32_t>();
  const auto count = r.le<std::uint64_t>();
  if (r.remaining() != count * 8) {
    throw IoError(IoErrorKind::kTruncated, "model file: parameter payload size mismatch");
  }
  std::vector<double> params(count);
  for (double& p : params) p = r.le<double>();
  try {
    if (kind == static_cast<std::uint8_t>(ModelKind::kLinearProj)) {
      return EmbeddingModel::linear(shape, dim, std::move(params));
    }
    if (kind == static_cast<std::uint8_t>(ModelKind::kMlpOneHidden)) {
      if (params.size() < dim) throw ShapeError("parameter count too small");
      std::vector<double> b1(params.end() - static_cast<std::ptrdiff_t>(dim), params.end());
      params.resize(params.size() - dim);
      return EmbeddingModel::mlp(shape, dim, std::move(params), std::move(b1));
    }
  } catch (const IoError&) {
    throw;
  } catch (const Error& e) {
    throw IoError(IoErrorKind::kMalformedHeader, std::string("model file: ") + e.what());
  }
  throw IoError(IoErrorKind::kMalformedHeader, "model file: unknown kind tag " + std::to_string(kind));
}

void save_model(const EmbeddingModel& model, const std::filesystem::path& path) {
  detail::write_all(path, encode_model(model));
}

EmbeddingModel load_model(const std::filesystem::path& path) {
  return decode_model(detail::read_all(path));
}

std::uint64_t parameter_checksum(const EmbeddingModel& model) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (double p : model.parameters()) {
    detail::ByteWriter w;
    w.le<double>(p);
    for (std::uint8_t b : w.data()) {
      hash ^= b;
      hash *= 0x100000001b3ULL;
    }
  }
  return hash;
}

}  // namespace idmask
