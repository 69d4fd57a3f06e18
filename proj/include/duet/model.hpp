#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "duet/errors.hpp"

namespace duet {

template <class Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic,
                          Eigen::RowMajor>;
using MaskMat = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic,
                              Eigen::RowMajor>;

#ifndef NDEBUG
template <class Scalar>
inline void check_finite(const Mat<Scalar>& m, const char* where) {
  if (!m.allFinite()) throw Error(std::string("non-finite values in ") + where);
}
#else
template <class Scalar>
inline void check_finite(const Mat<Scalar>&, const char*) {}
#endif

/// Row-wise numerically stable softmax. Masked (-inf) entries come out as
/// exact zeros; a row that is entirely -inf becomes all zeros. Scalar
/// std::exp is used on purpose: vectorized exp clamps -inf to a denormal.
template <class Scalar>
inline void softmax_rows_inplace(Mat<Scalar>& m) {
  constexpr Scalar neg_inf = -std::numeric_limits<Scalar>::infinity();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Scalar rowmax = neg_inf;
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      rowmax = std::max(rowmax, m(i, j));
    if (rowmax == neg_inf) {
      m.row(i).setZero();
      continue;
    }
    Scalar sum = Scalar(0);
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      const Scalar e =
          m(i, j) == neg_inf ? Scalar(0) : std::exp(m(i, j) - rowmax);
      m(i, j) = e;
      sum += e;
    }
    m.row(i) /= sum;
  }
}

/// Scaled dot-product attention: softmax(Q Kᵀ / √d_k) V. Positions where
/// allowed(i,j) is zero are set to -inf before the softmax. Each output row
/// is a convex combination of the rows of V.
template <class Scalar>
Mat<Scalar> attention(const Mat<Scalar>& Q, const Mat<Scalar>& K,
                      const Mat<Scalar>& V, const MaskMat* allowed = nullptr,
                      Mat<Scalar>* probs_out = nullptr) {
  if (Q.cols() != K.cols())
    throw ShapeError("attention: Q and K feature dims differ");
  if (K.rows() != V.rows())
    throw ShapeError("attention: K and V row counts differ");
  if (allowed != nullptr &&
      (allowed->rows() != Q.rows() || allowed->cols() != K.rows()))
    throw ShapeError("attention: mask shape mismatch");

  const Scalar scale =
      Scalar(1) / std::sqrt(static_cast<Scalar>(Q.cols()));
  Mat<Scalar> scores = (Q * K.transpose()) * scale;
  if (allowed != nullptr) {
    const Scalar neg_inf = -std::numeric_limits<Scalar>::infinity();
    for (Eigen::Index i = 0; i < scores.rows(); ++i)
      for (Eigen::Index j = 0; j < scores.cols(); ++j)
        if (!(*allowed)(i, j)) scores(i, j) = neg_inf;
  }
  softmax_rows_inplace(scores);
  if (probs_out != nullptr) *probs_out = scores;
  return scores * V;
}

template <class Scalar>
struct Projections {
  Mat<Scalar> Q, K, V;
};

/// Q = x W_Q, K = x W_K, V = x W_V (heads stay packed along the feature dim).
template <class Scalar>
Projections<Scalar> self_attention_projections(const Mat<Scalar>& x,
                                               const Mat<Scalar>& wq,
                                               const Mat<Scalar>& wk,
                                               const Mat<Scalar>& wv) {
  if (x.cols() != wq.rows() || x.cols() != wk.rows() || x.cols() != wv.rows())
    throw ShapeError("projection: input feature dim mismatch");
  return Projections<Scalar>{x * wq, x * wk, x * wv};
}

/// Sinusoidal positional encoding row: even indices sin(p/10000^(2i/d)),
/// odd indices cos of the same argument.
inline std::vector<double> positional_encoding(int position, int d_model,
                                               int max_len) {
  if (position < 0 || position >= max_len)
    throw RangeError("position " + std::to_string(position) +
                     " outside [0, " + std::to_string(max_len) + ")");
  std::vector<double> pe(static_cast<std::size_t>(d_model));
  for (int i = 0; i + 1 < d_model; i += 2) {
    double angle = position / std::pow(10000.0, double(i) / d_model);
    pe[static_cast<std::size_t>(i)] = std::sin(angle);
    pe[static_cast<std::size_t>(i) + 1] = std::cos(angle);
  }
  if (d_model % 2 == 1) {
    double angle =
        position / std::pow(10000.0, double(d_model - 1) / d_model);
    pe[static_cast<std::size_t>(d_model) - 1] = std::sin(angle);
  }
  return pe;
}

template <class Scalar>
Mat<Scalar> positional_encoding_matrix(int len, int d_model, int max_len) {
  Mat<Scalar> pe(len, d_model);
  for (int p = 0; p < len; ++p) {
    auto row = positional_encoding(p, d_model, max_len);
    for (int i = 0; i < d_model; ++i)
      pe(p, i) = static_cast<Scalar>(row[static_cast<std::size_t>(i)]);
  }
  return pe;
}

struct ModelConfig {
  int d_model = 128;
  int n_heads = 4;
  int d_ff = 512;
  int n_layers_enc = 2;
  int n_layers_dec = 2;
  int vocab_size_src = 0;
  int vocab_size_tgt = 0;
  int max_len = 256;
  double dropout_rate = 0.1;
  std::uint64_t seed = 1;
  bool positional_encoding = true;  // ablation: false leaves token order invisible

  int d_k() const { return d_model / n_heads; }

  void validate() const {
    if (d_model <= 0 || n_heads <= 0 || d_ff <= 0 || n_layers_enc <= 0 ||
        n_layers_dec <= 0 || max_len <= 0)
      throw ShapeError("model dimensions must be positive");
    if (d_model % n_heads != 0)
      throw ShapeError("d_model must be divisible by n_heads");
    if (vocab_size_src <= 0 || vocab_size_tgt <= 0)
      throw ShapeError("vocabulary sizes must be positive");
  }

  bool operator==(const ModelConfig&) const = default;
};

template <class Scalar>
struct Tensor {
  std::string name;
  Mat<Scalar> value;
  Mat<Scalar> grad;
};

template <class Scalar>
class ModelParams {
 public:
  ModelConfig config;

  static ModelParams init(const ModelConfig& cfg) {
    cfg.validate();
    ModelParams p;
    p.config = cfg;
    std::mt19937_64 rng(cfg.seed);

    auto glorot = [&](const std::string& name, int rows, int cols) {
      const double bound = std::sqrt(6.0 / (rows + cols));
      std::uniform_real_distribution<double> dist(-bound, bound);
      Mat<Scalar> m(rows, cols);
      for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j)
          m(i, j) = static_cast<Scalar>(dist(rng));
      p.add(name, std::move(m));
    };
    auto constant = [&](const std::string& name, int rows, int cols,
                        Scalar fill) {
      p.add(name, Mat<Scalar>::Constant(rows, cols, fill));
    };
    auto layer_norm = [&](const std::string& prefix) {
      constant(prefix + ".gamma", 1, cfg.d_model, Scalar(1));
      constant(prefix + ".beta", 1, cfg.d_model, Scalar(0));
    };
    auto attn_block = [&](const std::string& prefix) {
      glorot(prefix + ".wq", cfg.d_model, cfg.d_model);
      glorot(prefix + ".wk", cfg.d_model, cfg.d_model);
      glorot(prefix + ".wv", cfg.d_model, cfg.d_model);
      glorot(prefix + ".wo", cfg.d_model, cfg.d_model);
    };
    auto ff_block = [&](const std::string& prefix) {
      glorot(prefix + ".w1", cfg.d_model, cfg.d_ff);
      constant(prefix + ".b1", 1, cfg.d_ff, Scalar(0));
      glorot(prefix + ".w2", cfg.d_ff, cfg.d_model);
      constant(prefix + ".b2", 1, cfg.d_model, Scalar(0));
    };

    glorot("src_embed", cfg.vocab_size_src, cfg.d_model);
    glorot("tgt_embed", cfg.vocab_size_tgt, cfg.d_model);
    for (int l = 0; l < cfg.n_layers_enc; ++l) {
      const std::string base = "enc." + std::to_string(l);
      layer_norm(base + ".ln1");
      attn_block(base + ".attn");
      layer_norm(base + ".ln2");
      ff_block(base + ".ff");
    }
    layer_norm("enc.norm");
    for (int l = 0; l < cfg.n_layers_dec; ++l) {
      const std::string base = "dec." + std::to_string(l);
      layer_norm(base + ".ln1");
      attn_block(base + ".self");
      layer_norm(base + ".ln2");
      attn_block(base + ".cross");
      layer_norm(base + ".ln3");
      ff_block(base + ".ff");
    }
    layer_norm("dec.norm");
    glorot("out.w", cfg.d_model, cfg.vocab_size_tgt);
    return p;
  }

  Tensor<Scalar>& at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw Error("unknown parameter '" + name + "'");
    return tensors_[it->second];
  }
  const Tensor<Scalar>& at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw Error("unknown parameter '" + name + "'");
    return tensors_[it->second];
  }
  const Mat<Scalar>& value(const std::string& name) const {
    return at(name).value;
  }
  Mat<Scalar>& grad(const std::string& name) { return at(name).grad; }

  std::vector<Tensor<Scalar>>& tensors() { return tensors_; }
  const std::vector<Tensor<Scalar>>& tensors() const { return tensors_; }

  void zero_grads() {
    for (auto& t : tensors_) t.grad.setZero();
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& t : tensors_)
      n += static_cast<std::size_t>(t.value.size());
    return n;
  }

  void add(const std::string& name, Mat<Scalar> value) {
    index_[name] = tensors_.size();
    Mat<Scalar> grad = Mat<Scalar>::Zero(value.rows(), value.cols());
    tensors_.push_back(Tensor<Scalar>{name, std::move(value), std::move(grad)});
  }

 private:
  std::vector<Tensor<Scalar>> tensors_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Inverted-dropout source; pass nullptr wherever dropout should be off.
struct Dropout {
  double rate = 0.0;
  std::mt19937_64 rng;
  Dropout(double rate, std::uint64_t seed) : rate(rate), rng(seed) {}
};

namespace detail {

template <class Scalar>
Mat<Scalar> dropout_mask(Dropout* dropout, Eigen::Index rows,
                         Eigen::Index cols) {
  if (dropout == nullptr || dropout->rate <= 0.0) return Mat<Scalar>();
  std::bernoulli_distribution keep(1.0 - dropout->rate);
  const Scalar scale = static_cast<Scalar>(1.0 / (1.0 - dropout->rate));
  Mat<Scalar> mask(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j)
      mask(i, j) = keep(dropout->rng) ? scale : Scalar(0);
  return mask;
}

template <class Scalar>
void apply_mask(Mat<Scalar>& m, const Mat<Scalar>& mask) {
  if (mask.size() != 0) m.array() *= mask.array();
}

}  // namespace detail

template <class Scalar>
struct LayerNormCache {
  Mat<Scalar> x_hat;
  Mat<Scalar> inv_std;  // column vector, one entry per row of x
};

/// Pre-norm layer normalization over the feature dimension.
template <class Scalar>
Mat<Scalar> layer_norm(const Mat<Scalar>& x, const Mat<Scalar>& gamma,
                       const Mat<Scalar>& beta,
                       LayerNormCache<Scalar>* cache = nullptr) {
  constexpr Scalar eps = Scalar(1e-5);
  Mat<Scalar> x_hat(x.rows(), x.cols());
  Mat<Scalar> inv_std(x.rows(), 1);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const Scalar mean = x.row(i).mean();
    const Scalar var = (x.row(i).array() - mean).square().mean();
    const Scalar inv = Scalar(1) / std::sqrt(var + eps);
    x_hat.row(i) = (x.row(i).array() - mean) * inv;
    inv_std(i, 0) = inv;
  }
  Mat<Scalar> y =
      (x_hat.array().rowwise() * gamma.row(0).array()).rowwise() +
      beta.row(0).array();
  if (cache != nullptr) {
    cache->x_hat = std::move(x_hat);
    cache->inv_std = std::move(inv_std);
  }
  return y;
}

template <class Scalar>
struct MhaCache {
  Mat<Scalar> q_in, kv_in;
  Mat<Scalar> Q, K, V;
  std::vector<Mat<Scalar>> probs;  // one Tq×Tk matrix per head
  Mat<Scalar> context;             // before the output projection
  Mat<Scalar> drop_mask;
};

/// Multi-head attention over packed projections; `allowed` masks key
/// positions per query (causal mask in the decoder).
template <class Scalar>
Mat<Scalar> multi_head_attention(const Mat<Scalar>& q_in,
                                 const Mat<Scalar>& kv_in,
                                 const Mat<Scalar>& wq, const Mat<Scalar>& wk,
                                 const Mat<Scalar>& wv, const Mat<Scalar>& wo,
                                 int n_heads, const MaskMat* allowed,
                                 MhaCache<Scalar>* cache) {
  const Eigen::Index d_model = wq.rows();
  if (q_in.cols() != d_model || kv_in.cols() != d_model)
    throw ShapeError("attention input width does not match d_model");
  const Eigen::Index d_k = d_model / n_heads;

  Mat<Scalar> Q = q_in * wq;
  Mat<Scalar> K = kv_in * wk;
  Mat<Scalar> V = kv_in * wv;

  Mat<Scalar> context(q_in.rows(), d_model);
  std::vector<Mat<Scalar>> probs(static_cast<std::size_t>(n_heads));
  for (int h = 0; h < n_heads; ++h) {
    Mat<Scalar> qh = Q.middleCols(h * d_k, d_k);
    Mat<Scalar> kh = K.middleCols(h * d_k, d_k);
    Mat<Scalar> vh = V.middleCols(h * d_k, d_k);
    context.middleCols(h * d_k, d_k) =
        attention<Scalar>(qh, kh, vh, allowed,
                          &probs[static_cast<std::size_t>(h)]);
  }
  Mat<Scalar> out = context * wo;
  if (cache != nullptr) {
    cache->q_in = q_in;
    cache->kv_in = kv_in;
    cache->Q = std::move(Q);
    cache->K = std::move(K);
    cache->V = std::move(V);
    cache->probs = std::move(probs);
    cache->context = std::move(context);
  }
  return out;
}

template <class Scalar>
struct FeedForwardCache {
  Mat<Scalar> input;
  Mat<Scalar> hidden;  // post-ReLU
  Mat<Scalar> drop_mask;
};

template <class Scalar>
Mat<Scalar> feed_forward(const Mat<Scalar>& x, const Mat<Scalar>& w1,
                         const Mat<Scalar>& b1, const Mat<Scalar>& w2,
                         const Mat<Scalar>& b2,
                         FeedForwardCache<Scalar>* cache) {
  Mat<Scalar> hidden =
      ((x * w1).rowwise() + b1.row(0)).cwiseMax(Scalar(0));
  Mat<Scalar> out = (hidden * w2).rowwise() + b2.row(0);
  if (cache != nullptr) {
    cache->input = x;
    cache->hidden = std::move(hidden);
  }
  return out;
}

template <class Scalar>
struct EncLayerCache {
  LayerNormCache<Scalar> ln1;
  MhaCache<Scalar> attn;
  LayerNormCache<Scalar> ln2;
  FeedForwardCache<Scalar> ff;
};

template <class Scalar>
struct DecLayerCache {
  LayerNormCache<Scalar> ln1;
  MhaCache<Scalar> self_attn;
  LayerNormCache<Scalar> ln2;
  MhaCache<Scalar> cross_attn;
  LayerNormCache<Scalar> ln3;
  FeedForwardCache<Scalar> ff;
};

template <class Scalar>
struct EncoderCache {
  std::vector<int> ids;
  Mat<Scalar> embed_drop_mask;
  std::vector<EncLayerCache<Scalar>> layers;
  LayerNormCache<Scalar> final_ln;
  Mat<Scalar> memory;
};

template <class Scalar>
struct DecoderCache {
  std::vector<int> ids;
  Mat<Scalar> embed_drop_mask;
  std::vector<DecLayerCache<Scalar>> layers;
  LayerNormCache<Scalar> final_ln;
  Mat<Scalar> output;
};

template <class Scalar>
struct ForwardCache {
  EncoderCache<Scalar> enc;
  DecoderCache<Scalar> dec;
  Mat<Scalar> logits;
};

namespace detail {

template <class Scalar>
Mat<Scalar> embed(std::span<const int> ids, const Mat<Scalar>& table,
                  const ModelConfig& cfg, const char* what) {
  if (ids.empty()) throw ShapeError(std::string(what) + " sequence is empty");
  if (static_cast<int>(ids.size()) > cfg.max_len)
    throw RangeError(std::string(what) + " sequence longer than max_len");
  const Scalar scale = std::sqrt(static_cast<Scalar>(cfg.d_model));
  Mat<Scalar> x(static_cast<Eigen::Index>(ids.size()), cfg.d_model);
  for (std::size_t t = 0; t < ids.size(); ++t) {
    if (ids[t] < 0 || ids[t] >= table.rows())
      throw RangeError(std::string(what) + " id " + std::to_string(ids[t]) +
                       " outside vocabulary");
    x.row(static_cast<Eigen::Index>(t)) = table.row(ids[t]) * scale;
  }
  if (cfg.positional_encoding)
    x += positional_encoding_matrix<Scalar>(static_cast<int>(ids.size()),
                                            cfg.d_model, cfg.max_len);
  return x;
}

inline MaskMat causal_mask(Eigen::Index n) {
  MaskMat allowed(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) allowed(i, j) = j <= i ? 1 : 0;
  return allowed;
}

}  // namespace detail

/// Encoder stack: unmasked self-attention, pre-norm residual blocks, final
/// layer norm. Returns the memory the decoder attends to.
template <class Scalar>
Mat<Scalar> encode_source(std::span<const int> src_ids,
                          const ModelParams<Scalar>& params,
                          EncoderCache<Scalar>* cache = nullptr,
                          Dropout* dropout = nullptr) {
  const ModelConfig& cfg = params.config;
  Mat<Scalar> h =
      detail::embed<Scalar>(src_ids, params.value("src_embed"), cfg, "source");
  Mat<Scalar> embed_mask =
      detail::dropout_mask<Scalar>(dropout, h.rows(), h.cols());
  detail::apply_mask(h, embed_mask);
  if (cache != nullptr) {
    cache->ids.assign(src_ids.begin(), src_ids.end());
    cache->embed_drop_mask = embed_mask;
    cache->layers.resize(static_cast<std::size_t>(cfg.n_layers_enc));
  }

  for (int l = 0; l < cfg.n_layers_enc; ++l) {
    const std::string base = "enc." + std::to_string(l);
    EncLayerCache<Scalar>* lc =
        cache ? &cache->layers[static_cast<std::size_t>(l)] : nullptr;

    Mat<Scalar> normed =
        layer_norm(h, params.value(base + ".ln1.gamma"),
                   params.value(base + ".ln1.beta"), lc ? &lc->ln1 : nullptr);
    Mat<Scalar> attn_out = multi_head_attention(
        normed, normed, params.value(base + ".attn.wq"),
        params.value(base + ".attn.wk"), params.value(base + ".attn.wv"),
        params.value(base + ".attn.wo"), cfg.n_heads, nullptr,
        lc ? &lc->attn : nullptr);
    Mat<Scalar> attn_mask =
        detail::dropout_mask<Scalar>(dropout, attn_out.rows(), attn_out.cols());
    detail::apply_mask(attn_out, attn_mask);
    if (lc != nullptr) lc->attn.drop_mask = std::move(attn_mask);
    h += attn_out;

    Mat<Scalar> normed2 =
        layer_norm(h, params.value(base + ".ln2.gamma"),
                   params.value(base + ".ln2.beta"), lc ? &lc->ln2 : nullptr);
    Mat<Scalar> ff_out = feed_forward(
        normed2, params.value(base + ".ff.w1"), params.value(base + ".ff.b1"),
        params.value(base + ".ff.w2"), params.value(base + ".ff.b2"),
        lc ? &lc->ff : nullptr);
    Mat<Scalar> ff_mask =
        detail::dropout_mask<Scalar>(dropout, ff_out.rows(), ff_out.cols());
    detail::apply_mask(ff_out, ff_mask);
    if (lc != nullptr) lc->ff.drop_mask = std::move(ff_mask);
    h += ff_out;
    check_finite(h, "encoder layer");
  }

  Mat<Scalar> memory =
      layer_norm(h, params.value("enc.norm.gamma"),
                 params.value("enc.norm.beta"), cache ? &cache->final_ln : nullptr);
  if (cache != nullptr) cache->memory = memory;
  return memory;
}

/// Decoder stack over an encoded source: causally masked self-attention,
/// cross-attention with keys/values from the encoder memory, feed-forward.
/// Returns one row of logits per target-prefix position.
template <class Scalar>
Mat<Scalar> decode_logits(const Mat<Scalar>& memory,
                          std::span<const int> tgt_prefix_ids,
                          const ModelParams<Scalar>& params,
                          DecoderCache<Scalar>* cache = nullptr,
                          Dropout* dropout = nullptr) {
  const ModelConfig& cfg = params.config;
  if (memory.cols() != cfg.d_model)
    throw ShapeError("memory width does not match d_model");
  Mat<Scalar> h = detail::embed<Scalar>(tgt_prefix_ids,
                                        params.value("tgt_embed"), cfg,
                                        "target");
  Mat<Scalar> embed_mask =
      detail::dropout_mask<Scalar>(dropout, h.rows(), h.cols());
  detail::apply_mask(h, embed_mask);
  if (cache != nullptr) {
    cache->ids.assign(tgt_prefix_ids.begin(), tgt_prefix_ids.end());
    cache->embed_drop_mask = embed_mask;
    cache->layers.resize(static_cast<std::size_t>(cfg.n_layers_dec));
  }
  const MaskMat causal = detail::causal_mask(h.rows());

  for (int l = 0; l < cfg.n_layers_dec; ++l) {
    const std::string base = "dec." + std::to_string(l);
    DecLayerCache<Scalar>* lc =
        cache ? &cache->layers[static_cast<std::size_t>(l)] : nullptr;

    Mat<Scalar> normed =
        layer_norm(h, params.value(base + ".ln1.gamma"),
                   params.value(base + ".ln1.beta"), lc ? &lc->ln1 : nullptr);
    Mat<Scalar> self_out = multi_head_attention(
        normed, normed, params.value(base + ".self.wq"),
        params.value(base + ".self.wk"), params.value(base + ".self.wv"),
        params.value(base + ".self.wo"), cfg.n_heads, &causal,
        lc ? &lc->self_attn : nullptr);
    Mat<Scalar> self_mask =
        detail::dropout_mask<Scalar>(dropout, self_out.rows(), self_out.cols());
    detail::apply_mask(self_out, self_mask);
    if (lc != nullptr) lc->self_attn.drop_mask = std::move(self_mask);
    h += self_out;

    Mat<Scalar> normed2 =
        layer_norm(h, params.value(base + ".ln2.gamma"),
                   params.value(base + ".ln2.beta"), lc ? &lc->ln2 : nullptr);
    Mat<Scalar> cross_out = multi_head_attention(
        normed2, memory, params.value(base + ".cross.wq"),
        params.value(base + ".cross.wk"), params.value(base + ".cross.wv"),
        params.value(base + ".cross.wo"), cfg.n_heads, nullptr,
        lc ? &lc->cross_attn : nullptr);
    Mat<Scalar> cross_mask = detail::dropout_mask<Scalar>(
        dropout, cross_out.rows(), cross_out.cols());
    detail::apply_mask(cross_out, cross_mask);
    if (lc != nullptr) lc->cross_attn.drop_mask = std::move(cross_mask);
    h += cross_out;

    Mat<Scalar> normed3 =
        layer_norm(h, params.value(base + ".ln3.gamma"),
                   params.value(base + ".ln3.beta"), lc ? &lc->ln3 : nullptr);
    Mat<Scalar> ff_out = feed_forward(
        normed3, params.value(base + ".ff.w1"), params.value(base + ".ff.b1"),
        params.value(base + ".ff.w2"), params.value(base + ".ff.b2"),
        lc ? &lc->ff : nullptr);
    Mat<Scalar> ff_mask =
        detail::dropout_mask<Scalar>(dropout, ff_out.rows(), ff_out.cols());
    detail::apply_mask(ff_out, ff_mask);
    if (lc != nullptr) lc->ff.drop_mask = std::move(ff_mask);
    h += ff_out;
    check_finite(h, "decoder layer");
  }

  Mat<Scalar> out =
      layer_norm(h, params.value("dec.norm.gamma"),
                 params.value("dec.norm.beta"), cache ? &cache->final_ln : nullptr);
  if (cache != nullptr) cache->output = out;
  Mat<Scalar> logits = out * params.value("out.w");
  check_finite(logits, "output head");
  return logits;
}

/// Full forward pass; one row of next-token logits per target-prefix position.
template <class Scalar>
Mat<Scalar> forward(std::span<const int> src_ids,
                    std::span<const int> tgt_prefix_ids,
                    const ModelParams<Scalar>& params,
                    ForwardCache<Scalar>* cache = nullptr,
                    Dropout* dropout = nullptr) {
  Mat<Scalar> memory = encode_source(src_ids, params,
                                     cache ? &cache->enc : nullptr, dropout);
  Mat<Scalar> logits =
      decode_logits(memory, tgt_prefix_ids, params,
                    cache ? &cache->dec : nullptr, dropout);
  if (cache != nullptr) cache->logits = logits;
  return logits;
}

}  // namespace duet
