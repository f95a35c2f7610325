#include "doctest.h"

#include <cmath>

#include "idmask/embedding.hpp"
#include "idmask/error.hpp"
#include "idmask/protocol.hpp"
#include "temp_dir.hpp"
#include "test_support.hpp"

using namespace idmask;
using testing::rel_err;

namespace {

// make_linear_model(7, 8x8x1, 16), frozen at first build.
constexpr std::uint64_t kSeed7Checksum = 12600917448990782424ULL;

// Central differences of cot . f(x) at pixel i.
double fd_head(const Embedder& m, const Image& x, const std::vector<double>& cot, std::size_t i,
               double h = 1e-5) {
  auto head = [&](const Image& z) {
    const auto f = m.embed(z);
    double s = 0;
    for (std::size_t k = 0; k < cot.size(); ++k) s += cot[k] * f.values[k];
    return s;
  };
  return (head(testing::nudged(x, i, h)) - head(testing::nudged(x, i, -h))) / (2 * h);
}

double norm2(const FeatureVec& f) {
  double s = 0;
  for (double v : f.values) s += v * v;
  return std::sqrt(s);
}

}  // namespace

TEST_CASE("linear projection of a basis image") {
  const Shape s{2, 2, 1};
  const std::size_t d = 3;
  std::vector<double> w(d * 4, 0.0);
  for (std::size_t r = 0; r < d; ++r) w[r * 4 + r] = 1.0;  // first d rows of I
  const auto m = EmbeddingModel::linear(s, d, w);
  const auto f = m.embed(Image(s, {0.0, 1.0, 0.0, 0.0}));
  CHECK(f.values == std::vector<double>{0.0, 1.0, 0.0});
  CHECK(m.embed(Image(s, {0.0, 0.3, 0.0, 0.0})) == f);
}

TEST_CASE("embed determinism and unit norm over 1000 samples") {
  Rng rng(1000);
  const Shape s{8, 8, 1};
  const auto lin = make_linear_model(5, s, 16);
  const auto mlp = testing::random_mlp(s, 20, rng);
  for (int k = 0; k < 500; ++k) {
    const auto x = testing::random_image(s, rng);
    for (const Embedder* m : {static_cast<const Embedder*>(&lin), static_cast<const Embedder*>(&mlp)}) {
      const auto f = m->embed(x);
      CHECK(f == m->embed(x));
      CHECK(std::abs(norm2(f) - 1.0) <= 1e-9);
    }
  }
  CHECK_THROWS_AS(lin.embed(Image(Shape{4, 4, 1}, 0.5)), ShapeError);
}

TEST_CASE("feature_distance") {
  Rng rng(2);
  const auto a = testing::random_unit(10, rng);
  FeatureVec neg = a;
  for (auto& v : neg.values) v = -v;
  CHECK(feature_distance(a, a) == 0.0);
  CHECK(feature_distance(a, neg) == doctest::Approx(4.0).epsilon(1e-14));
  for (int k = 0; k < 200; ++k) {
    const auto p = testing::random_unit(1 + rng.below(40), rng);
    const auto q = testing::random_unit(p.size(), rng);
    double s = 0;
    for (std::size_t i = 0; i < p.size(); ++i) s += (p.values[i] - q.values[i]) * (p.values[i] - q.values[i]);
    CHECK(std::abs(feature_distance(p, q) - s) <= 1e-12);
    CHECK(feature_distance(p, q) == feature_distance(q, p));
    CHECK(feature_distance(p, q) <= 4.0 + 1e-12);
  }
  CHECK_THROWS_AS(feature_distance(FeatureVec{{1.0}}, FeatureVec{{1.0, 0.0}}), ShapeError);
}

TEST_CASE("input_gradient special cases") {
  Rng rng(3);
  const Shape s{3, 3, 1};
  const auto m = make_linear_model(1, s, 4);
  const auto x = testing::random_image(s, rng, 0.1, 0.9);
  const auto zero = m.input_gradient(x, std::vector<double>(4, 0.0));
  for (double g : zero.values()) CHECK(g == 0.0);

  // Without the unit-norm head the gradient is W^T c.
  std::vector<double> w(m.parameters().begin(), m.parameters().end());
  const auto raw = EmbeddingModel::linear(s, 4, w, false);
  const std::vector<double> c{0.5, -1.0, 2.0, 0.25};
  const auto g = raw.input_gradient(x, c);
  for (std::size_t i = 0; i < 9; ++i) {
    double want = 0;
    for (std::size_t r = 0; r < 4; ++r) want += w[r * 9 + i] * c[r];
    CHECK(g[i] == doctest::Approx(want).epsilon(1e-14));
  }
  CHECK_THROWS_AS(m.input_gradient(x, std::vector<double>(3, 1.0)), ShapeError);
}

TEST_CASE("input_gradient matches finite differences for both kinds") {
  Rng rng(4);
  const Shape s{8, 8, 1};
  double worst = 0;
  for (int inst = 0; inst < 10; ++inst) {
    const auto lin = make_linear_model(100 + inst, s, 16);
    const auto mlp = testing::random_mlp(s, 24, rng);
    for (const Embedder* m : {static_cast<const Embedder*>(&lin), static_cast<const Embedder*>(&mlp)}) {
      const auto x = testing::random_image(s, rng, 0.05, 0.95);
      const auto cot = testing::random_vector(m->output_dim(), rng);
      const auto g = m->input_gradient(x, cot);
      for (int k = 0; k < 10; ++k) {
        const auto i = rng.below(s.size());
        worst = std::max(worst, rel_err(g[i], fd_head(*m, x, cot, i)));
      }
    }
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("make_linear_model") {
  const Shape s{8, 8, 1};
  const auto a = make_linear_model(7, s, 16);
  CHECK(a == make_linear_model(7, s, 16));
  CHECK(a.parameters().size() == 16 * 64);
  const auto b = make_linear_model(8, s, 16);
  CHECK(!std::equal(a.parameters().begin(), a.parameters().end(), b.parameters().begin()));
  CHECK_THROWS_AS(make_linear_model(7, s, 65), InvalidArgument);
  CHECK(parameter_checksum(a) == kSeed7Checksum);
}

TEST_CASE("training separates constant images") {
  const Shape s{4, 4, 1};
  std::vector<LabeledImage> data;
  for (std::size_t i = 0; i < 20; ++i) {
    data.push_back({Image(s, i < 10 ? 0.1 : 0.9), static_cast<std::uint32_t>(i < 10 ? 0 : 1), i});
  }
  TrainConfig cfg;
  cfg.epochs = 200;
  const auto r = train_mlp_model(data, cfg);
  CHECK(r.train_accuracy == 1.0);
  CHECK(r.epochs_run <= 200);
  CHECK(r.model.kind() == ModelKind::kMlpOneHidden);

  const auto again = train_mlp_model(data, cfg);
  CHECK(again.model == r.model);
  CHECK(parameter_checksum(again.model) == parameter_checksum(r.model));
}

TEST_CASE("training rejects degenerate datasets") {
  const Shape s{2, 2, 1};
  TrainConfig cfg;
  std::vector<LabeledImage> one_id{{Image(s, 0.1), 0, 0}, {Image(s, 0.2), 0, 1}};
  CHECK_THROWS_AS(train_mlp_model(one_id, cfg), InvalidArgument);
  std::vector<LabeledImage> singleton{{Image(s, 0.1), 0, 0}, {Image(s, 0.2), 0, 1}, {Image(s, 0.9), 1, 2}};
  CHECK_THROWS_AS(train_mlp_model(singleton, cfg), InvalidArgument);
  CHECK_THROWS_AS(train_mlp_model({}, cfg), InvalidArgument);
  cfg.epochs = 0;
  CHECK_THROWS_AS(train_mlp_model(one_id, cfg), InvalidArgument);
}

TEST_CASE("trained model separates held-out samples") {
  const Shape s{16, 16, 1};
  const std::size_t ids = 12, train_n = 5, total = 10;
  const auto all = generate_identities(ids, total, s, 77);
  std::vector<LabeledImage> train, held;
  for (const auto& li : all) (li.index % total < train_n ? train : held).push_back(li);
  TrainConfig cfg;
  cfg.epochs = 150;
  cfg.hidden_width = 32;
  const auto model = train_mlp_model(train, cfg).model;

  double intra = 0, inter = 0;
  std::size_t n_intra = 0, n_inter = 0;
  std::vector<FeatureVec> f;
  for (const auto& li : held) f.push_back(model.embed(li.image));
  for (std::size_t i = 0; i < held.size(); ++i) {
    for (std::size_t j = i + 1; j < held.size(); ++j) {
      const double d = feature_distance(f[i], f[j]);
      if (held[i].identity == held[j].identity) {
        intra += d;
        ++n_intra;
      } else {
        inter += d;
        ++n_inter;
      }
    }
  }
  CHECK(intra / n_intra < inter / n_inter);
}

TEST_CASE("model file round trip") {
  Rng rng(6);
  const Shape s{3, 4, 3};
  const auto lin = make_linear_model(2, s, 5);
  const auto mlp = testing::random_mlp(s, 7, rng);
  testing::TempDir tmp("embm");
  for (const auto& m : {lin, mlp}) {
    save_model(m, tmp / "m.embm");
    const auto back = load_model(tmp / "m.embm");
    CHECK(back == m);
    CHECK(decode_model(encode_model(m)) == m);
  }
  auto bytes = encode_model(lin);
  bytes[0] = 'X';
  CHECK_THROWS_AS(decode_model(bytes), IoError);
  bytes = encode_model(lin);
  bytes.pop_back();
  CHECK_THROWS_AS(decode_model(bytes), IoError);
  CHECK_THROWS_AS(load_model(tmp / "missing.embm"), IoError);
}
