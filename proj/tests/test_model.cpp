#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <random>

#include "duet/model.hpp"

using namespace duet;
using Md = Mat<double>;

namespace {

Md random_matrix(std::mt19937_64& rng, int rows, int cols, double scale = 1.0) {
  std::uniform_real_distribution<double> dist(-scale, scale);
  Md m(rows, cols);
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = dist(rng);
  return m;
}

/// Naive triple-loop product, the oracle the fast path is checked against.
Md matmul_oracle(const Md& a, const Md& b) {
  Md out = Md::Zero(a.rows(), b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index k = 0; k < a.cols(); ++k)
      for (Eigen::Index j = 0; j < b.cols(); ++j)
        out(i, j) += a(i, k) * b(k, j);
  return out;
}

ModelConfig tiny_config(int vocab_src = 11, int vocab_tgt = 13) {
  ModelConfig cfg;
  cfg.d_model = 16;
  cfg.n_heads = 2;
  cfg.d_ff = 32;
  cfg.n_layers_enc = 2;
  cfg.n_layers_dec = 2;
  cfg.vocab_size_src = vocab_src;
  cfg.vocab_size_tgt = vocab_tgt;
  cfg.max_len = 32;
  cfg.dropout_rate = 0.0;
  cfg.seed = 3;
  return cfg;
}

}  // namespace

TEST_CASE("attention over a single key returns that value row") {
  std::mt19937_64 rng(1);
  Md q = random_matrix(rng, 1, 4);
  Md k = random_matrix(rng, 1, 4);
  Md v(1, 1);
  v << 5.0;
  Md out = attention(q, k, v);
  REQUIRE(out.rows() == 1);
  CHECK(out(0, 0) == 5.0);
}

TEST_CASE("equal scores average the value rows") {
  Md q(1, 2);
  q << 0.0, 0.0;
  Md k(2, 2);
  k << 1.0, 0.0, 0.0, 1.0;
  Md v(2, 3);
  v << 1.0, 2.0, 3.0, 5.0, 6.0, 7.0;
  Md out = attention(q, k, v);
  CHECK(out(0, 0) == Catch::Approx(3.0).epsilon(1e-12));
  CHECK(out(0, 1) == Catch::Approx(4.0).epsilon(1e-12));
  CHECK(out(0, 2) == Catch::Approx(5.0).epsilon(1e-12));
}

TEST_CASE("hand-computed two-key example matches to 1e-12") {
  Md q(1, 2);
  q << 1.0, 0.0;
  Md k(2, 2);
  k << 1.0, 0.0, 0.0, 1.0;
  Md v(2, 1);
  v << 1.0, 0.0;
  // scores = [1/sqrt(2), 0]; first weight = e^s / (e^s + 1)
  const double s = 1.0 / std::sqrt(2.0);
  const double w1 = std::exp(s) / (std::exp(s) + 1.0);
  Md out = attention(q, k, v);
  CHECK(std::abs(out(0, 0) - w1) < 1e-12);
}

TEST_CASE("d_k = 1 attention matches a scalar softmax oracle to 1e-12") {
  std::mt19937_64 rng(7);
  for (int iter = 0; iter < 50; ++iter) {
    Md q = random_matrix(rng, 1, 1, 2.0);
    Md k = random_matrix(rng, 4, 1, 2.0);
    Md v = random_matrix(rng, 4, 1, 2.0);

    // three-line scalar oracle: softmax(q*k) . v
    double denom = 0.0, mix = 0.0;
    for (int j = 0; j < 4; ++j) denom += std::exp(q(0, 0) * k(j, 0));
    for (int j = 0; j < 4; ++j)
      mix += std::exp(q(0, 0) * k(j, 0)) / denom * v(j, 0);

    Md out = attention(q, k, v);
    CHECK(std::abs(out(0, 0) - mix) < 1e-12);
  }
}

TEST_CASE("attention probabilities are a row-stochastic matrix") {
  std::mt19937_64 rng(11);
  Md q = random_matrix(rng, 6, 4);
  Md k = random_matrix(rng, 5, 4);
  Md v = random_matrix(rng, 5, 3);
  Md probs;
  attention(q, k, v, nullptr, &probs);
  REQUIRE(probs.rows() == 6);
  REQUIRE(probs.cols() == 5);
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    CHECK(std::abs(probs.row(i).sum() - 1.0) < 1e-9);
    for (Eigen::Index j = 0; j < probs.cols(); ++j) CHECK(probs(i, j) >= 0.0);
  }
}

TEST_CASE("unmasked attention output stays in the convex hull of V") {
  std::mt19937_64 rng(13);
  for (int iter = 0; iter < 20; ++iter) {
    Md q = random_matrix(rng, 8, 6, 3.0);
    Md k = random_matrix(rng, 7, 6, 3.0);
    Md v = random_matrix(rng, 7, 4, 5.0);
    Md out = attention(q, k, v);
    for (Eigen::Index j = 0; j < v.cols(); ++j) {
      const double lo = v.col(j).minCoeff() - 1e-12;
      const double hi = v.col(j).maxCoeff() + 1e-12;
      for (Eigen::Index i = 0; i < out.rows(); ++i) {
        CHECK(out(i, j) >= lo);
        CHECK(out(i, j) <= hi);
      }
    }
  }
}

TEST_CASE("masked positions receive zero attention weight") {
  std::mt19937_64 rng(17);
  Md q = random_matrix(rng, 3, 4);
  Md k = random_matrix(rng, 3, 4);
  Md v = random_matrix(rng, 3, 2);
  MaskMat allowed(3, 3);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) allowed(i, j) = j <= i ? 1 : 0;
  Md probs;
  attention(q, k, v, &allowed, &probs);
  CHECK(probs(0, 1) == 0.0);
  CHECK(probs(0, 2) == 0.0);
  CHECK(probs(1, 2) == 0.0);
  CHECK(probs(0, 0) == 1.0);
}

TEST_CASE("attention shape mismatches raise ShapeError") {
  Md q(1, 3), k(2, 4), v(2, 1);
  q.setZero();
  k.setZero();
  v.setZero();
  CHECK_THROWS_AS(attention(q, k, v), ShapeError);
  Md k2(2, 3), v2(3, 1);
  k2.setZero();
  v2.setZero();
  CHECK_THROWS_AS(attention(q, k2, v2), ShapeError);
  MaskMat allowed(2, 2);
  allowed.setOnes();
  Md v3(2, 1);
  v3.setZero();
  CHECK_THROWS_AS(attention(q, k2, v3, &allowed), ShapeError);
}

TEST_CASE("projections with identity weights return the input") {
  std::mt19937_64 rng(19);
  Md x = random_matrix(rng, 5, 4);
  Md eye = Md::Identity(4, 4);
  auto proj = self_attention_projections(x, eye, eye, eye);
  CHECK((proj.Q - x).cwiseAbs().maxCoeff() == 0.0);
  CHECK((proj.K - x).cwiseAbs().maxCoeff() == 0.0);
  CHECK((proj.V - x).cwiseAbs().maxCoeff() == 0.0);

  Md zeros = Md::Zero(5, 4);
  auto proj0 = self_attention_projections(zeros, eye, eye, eye);
  CHECK(proj0.Q.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("projections match the naive matmul oracle to 1e-12") {
  std::mt19937_64 rng(23);
  Md x = random_matrix(rng, 6, 8);
  Md wq = random_matrix(rng, 8, 8);
  Md wk = random_matrix(rng, 8, 8);
  Md wv = random_matrix(rng, 8, 8);
  auto proj = self_attention_projections(x, wq, wk, wv);
  CHECK((proj.Q - matmul_oracle(x, wq)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((proj.K - matmul_oracle(x, wk)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((proj.V - matmul_oracle(x, wv)).cwiseAbs().maxCoeff() < 1e-12);

  Md bad = random_matrix(rng, 7, 8);
  CHECK_THROWS_AS(self_attention_projections(x, bad, wk, wv), ShapeError);
}

TEST_CASE("positional encoding matches the sinusoid formula") {
  auto p0 = positional_encoding(0, 8, 16);
  for (int i = 0; i < 8; i += 2) {
    CHECK(p0[std::size_t(i)] == 0.0);
    CHECK(p0[std::size_t(i) + 1] == 1.0);
  }

  auto p1 = positional_encoding(1, 4, 16);
  CHECK(p1[0] == Catch::Approx(std::sin(1.0)).epsilon(1e-12));
  CHECK(p1[1] == Catch::Approx(std::cos(1.0)).epsilon(1e-12));
  CHECK(p1[2] == Catch::Approx(std::sin(0.01)).epsilon(1e-12));
  CHECK(p1[3] == Catch::Approx(std::cos(0.01)).epsilon(1e-12));

  for (int pos : {0, 3, 11, 100}) {
    auto pe = positional_encoding(pos, 12, 128);
    for (double x : pe) {
      CHECK(x >= -1.0);
      CHECK(x <= 1.0);
    }
  }

  CHECK_THROWS_AS(positional_encoding(16, 8, 16), RangeError);
  CHECK_THROWS_AS(positional_encoding(-1, 8, 16), RangeError);
}

TEST_CASE("forward produces finite, normalizable logits") {
  auto params = ModelParams<double>::init(tiny_config());
  std::vector<int> src = {0, 5, 1};
  std::vector<int> tgt_prefix = {0};
  Md logits = forward<double>(src, tgt_prefix, params);
  REQUIRE(logits.rows() == 1);
  REQUIRE(logits.cols() == 13);
  CHECK(logits.allFinite());
  double z = 0.0;
  const double m = logits.row(0).maxCoeff();
  for (Eigen::Index j = 0; j < logits.cols(); ++j)
    z += std::exp(logits(0, j) - m);
  double total = 0.0;
  for (Eigen::Index j = 0; j < logits.cols(); ++j)
    total += std::exp(logits(0, j) - m) / z;
  CHECK(std::abs(total - 1.0) < 1e-9);
}

TEST_CASE("causal mask: later target tokens cannot change earlier logits") {
  auto params = ModelParams<double>::init(tiny_config());
  std::vector<int> src = {0, 4, 7, 1};
  std::vector<int> a = {0, 5, 6, 7, 8};
  std::vector<int> b = {0, 5, 6, 9, 8};  // differs at position 3
  Md la = forward<double>(src, a, params);
  Md lb = forward<double>(src, b, params);
  for (Eigen::Index t = 0; t < 3; ++t)
    CHECK((la.row(t) - lb.row(t)).cwiseAbs().maxCoeff() == 0.0);
  CHECK((la.row(3) - lb.row(3)).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("without positional encoding the encoder is permutation-equivariant") {
  auto cfg = tiny_config();
  cfg.positional_encoding = false;
  auto params = ModelParams<double>::init(cfg);

  std::vector<int> src = {4, 7, 9, 2, 5};
  std::vector<std::size_t> perm = {2, 0, 4, 1, 3};
  std::vector<int> permuted(src.size());
  for (std::size_t i = 0; i < perm.size(); ++i) permuted[i] = src[perm[i]];

  Md memory = encode_source<double>(src, params);
  Md memory_perm = encode_source<double>(permuted, params);
  for (std::size_t i = 0; i < perm.size(); ++i) {
    CHECK((memory_perm.row(Eigen::Index(i)) -
           memory.row(Eigen::Index(perm[i])))
              .cwiseAbs()
              .maxCoeff() < 1e-9);
  }

  // with the encoding on, order is visible again
  auto cfg_pe = tiny_config();
  auto params_pe = ModelParams<double>::init(cfg_pe);
  Md m1 = encode_source<double>(src, params_pe);
  Md m2 = encode_source<double>(permuted, params_pe);
  CHECK((m2.row(0) - m1.row(2)).cwiseAbs().maxCoeff() > 1e-6);
}

TEST_CASE("ids outside the vocabulary and overlong inputs are rejected") {
  auto params = ModelParams<double>::init(tiny_config());
  std::vector<int> bad = {0, 11, 1};  // vocab_size_src is 11
  std::vector<int> tgt = {0};
  CHECK_THROWS_AS(forward<double>(bad, tgt, params), RangeError);

  std::vector<int> too_long(40, 1);
  CHECK_THROWS_AS(forward<double>(too_long, tgt, params), RangeError);
}

TEST_CASE("model configs are validated") {
  ModelConfig cfg = tiny_config();
  cfg.n_heads = 3;  // does not divide 16
  CHECK_THROWS_AS(ModelParams<double>::init(cfg), ShapeError);
  ModelConfig cfg2 = tiny_config();
  cfg2.vocab_size_tgt = 0;
  CHECK_THROWS_AS(ModelParams<double>::init(cfg2), ShapeError);
}
