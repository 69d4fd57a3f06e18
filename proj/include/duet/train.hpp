#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "duet/errors.hpp"
#include "duet/model.hpp"
#include "duet/tokenizer.hpp"

namespace duet {

struct Example {
  std::vector<int> src;  // wrapped in <s>/</s>
  std::vector<int> tgt;
};

namespace detail {

/// dgamma/dbeta accumulate; returns gradient w.r.t. the layer-norm input.
template <class Scalar>
Mat<Scalar> layer_norm_backward(const Mat<Scalar>& dy,
                                const LayerNormCache<Scalar>& cache,
                                const Mat<Scalar>& gamma, Mat<Scalar>& dgamma,
                                Mat<Scalar>& dbeta) {
  dgamma.row(0) += (dy.array() * cache.x_hat.array()).colwise().sum().matrix();
  dbeta.row(0) += dy.colwise().sum();

  Mat<Scalar> dx(dy.rows(), dy.cols());
  const auto d = static_cast<Scalar>(dy.cols());
  for (Eigen::Index i = 0; i < dy.rows(); ++i) {
    Eigen::Array<Scalar, 1, Eigen::Dynamic> dxhat =
        dy.row(i).array() * gamma.row(0).array();
    const Scalar mean_dxhat = dxhat.sum() / d;
    const Scalar mean_dxhat_xhat =
        (dxhat * cache.x_hat.row(i).array()).sum() / d;
    dx.row(i) = (cache.inv_std(i, 0) *
                 (dxhat - mean_dxhat -
                  cache.x_hat.row(i).array() * mean_dxhat_xhat))
                    .matrix();
  }
  return dx;
}

/// Backward of softmax(S)V per head plus the packed projections.
/// dq_in and dkv_in accumulate.
template <class Scalar>
void mha_backward(const Mat<Scalar>& dout, const MhaCache<Scalar>& cache,
                  int n_heads, ModelParams<Scalar>& params,
                  const std::string& prefix, Mat<Scalar>& dq_in,
                  Mat<Scalar>& dkv_in) {
  const Eigen::Index d_model = cache.Q.cols();
  const Eigen::Index d_k = d_model / n_heads;
  const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(d_k));

  params.grad(prefix + ".wo") += cache.context.transpose() * dout;
  Mat<Scalar> dcontext = dout * params.value(prefix + ".wo").transpose();

  Mat<Scalar> dQ(cache.Q.rows(), d_model);
  Mat<Scalar> dK(cache.K.rows(), d_model);
  Mat<Scalar> dV(cache.V.rows(), d_model);
  for (int h = 0; h < n_heads; ++h) {
    const auto& probs = cache.probs[static_cast<std::size_t>(h)];
    Mat<Scalar> dctx = dcontext.middleCols(h * d_k, d_k);
    Mat<Scalar> vh = cache.V.middleCols(h * d_k, d_k);
    Mat<Scalar> qh = cache.Q.middleCols(h * d_k, d_k);
    Mat<Scalar> kh = cache.K.middleCols(h * d_k, d_k);

    Mat<Scalar> dprobs = dctx * vh.transpose();
    dV.middleCols(h * d_k, d_k) = probs.transpose() * dctx;

    // softmax backward; rows of fully-masked positions are zero either way
    Mat<Scalar> dscores(probs.rows(), probs.cols());
    for (Eigen::Index i = 0; i < probs.rows(); ++i) {
      const Scalar dot = dprobs.row(i).dot(probs.row(i));
      dscores.row(i) =
          (probs.row(i).array() * (dprobs.row(i).array() - dot)).matrix();
    }
    dQ.middleCols(h * d_k, d_k) = dscores * kh * scale;
    dK.middleCols(h * d_k, d_k) = dscores.transpose() * qh * scale;
  }

  params.grad(prefix + ".wq") += cache.q_in.transpose() * dQ;
  params.grad(prefix + ".wk") += cache.kv_in.transpose() * dK;
  params.grad(prefix + ".wv") += cache.kv_in.transpose() * dV;
  dq_in += dQ * params.value(prefix + ".wq").transpose();
  dkv_in += dK * params.value(prefix + ".wk").transpose();
  dkv_in += dV * params.value(prefix + ".wv").transpose();
}

template <class Scalar>
Mat<Scalar> feed_forward_backward(const Mat<Scalar>& dout,
                                  const FeedForwardCache<Scalar>& cache,
                                  ModelParams<Scalar>& params,
                                  const std::string& prefix) {
  params.grad(prefix + ".w2") += cache.hidden.transpose() * dout;
  params.grad(prefix + ".b2").row(0) += dout.colwise().sum();
  Mat<Scalar> dhidden = dout * params.value(prefix + ".w2").transpose();
  Mat<Scalar> dpre =
      (dhidden.array() * (cache.hidden.array() > Scalar(0)).template cast<Scalar>())
          .matrix();
  params.grad(prefix + ".w1") += cache.input.transpose() * dpre;
  params.grad(prefix + ".b1").row(0) += dpre.colwise().sum();
  return dpre * params.value(prefix + ".w1").transpose();
}

template <class Scalar>
Mat<Scalar> masked(const Mat<Scalar>& d, const Mat<Scalar>& mask) {
  if (mask.size() == 0) return d;
  return (d.array() * mask.array()).matrix();
}

template <class Scalar>
void embedding_backward(const Mat<Scalar>& dh, const std::vector<int>& ids,
                        const Mat<Scalar>& drop_mask, Mat<Scalar>& dtable,
                        int d_model) {
  Mat<Scalar> dbase = masked(dh, drop_mask);
  const Scalar scale = std::sqrt(static_cast<Scalar>(d_model));
  for (std::size_t t = 0; t < ids.size(); ++t)
    dtable.row(ids[t]) +=
        dbase.row(static_cast<Eigen::Index>(t)) * scale;
}

/// Walks the decoder tape backwards; returns the gradient w.r.t. the
/// encoder memory accumulated over all cross-attention layers.
template <class Scalar>
Mat<Scalar> decoder_backward(const Mat<Scalar>& dlogits,
                             const ForwardCache<Scalar>& cache,
                             ModelParams<Scalar>& params) {
  const ModelConfig& cfg = params.config;
  const DecoderCache<Scalar>& dec = cache.dec;

  params.grad("out.w") += dec.output.transpose() * dlogits;
  Mat<Scalar> dout = dlogits * params.value("out.w").transpose();

  Mat<Scalar> dh = layer_norm_backward(dout, dec.final_ln,
                                       params.value("dec.norm.gamma"),
                                       params.grad("dec.norm.gamma"),
                                       params.grad("dec.norm.beta"));
  Mat<Scalar> dmemory =
      Mat<Scalar>::Zero(cache.enc.memory.rows(), cache.enc.memory.cols());

  for (int l = cfg.n_layers_dec - 1; l >= 0; --l) {
    const std::string base = "dec." + std::to_string(l);
    const DecLayerCache<Scalar>& lc =
        dec.layers[static_cast<std::size_t>(l)];

    Mat<Scalar> dff_out = masked(dh, lc.ff.drop_mask);
    Mat<Scalar> dnormed3 =
        feed_forward_backward(dff_out, lc.ff, params, base + ".ff");
    dh += layer_norm_backward(dnormed3, lc.ln3,
                              params.value(base + ".ln3.gamma"),
                              params.grad(base + ".ln3.gamma"),
                              params.grad(base + ".ln3.beta"));

    Mat<Scalar> dcross_out = masked(dh, lc.cross_attn.drop_mask);
    Mat<Scalar> dnormed2 = Mat<Scalar>::Zero(dh.rows(), dh.cols());
    mha_backward(dcross_out, lc.cross_attn, cfg.n_heads, params,
                 base + ".cross", dnormed2, dmemory);
    dh += layer_norm_backward(dnormed2, lc.ln2,
                              params.value(base + ".ln2.gamma"),
                              params.grad(base + ".ln2.gamma"),
                              params.grad(base + ".ln2.beta"));

    Mat<Scalar> dself_out = masked(dh, lc.self_attn.drop_mask);
    Mat<Scalar> dnormed = Mat<Scalar>::Zero(dh.rows(), dh.cols());
    mha_backward(dself_out, lc.self_attn, cfg.n_heads, params, base + ".self",
                 dnormed, dnormed);
    dh += layer_norm_backward(dnormed, lc.ln1,
                              params.value(base + ".ln1.gamma"),
                              params.grad(base + ".ln1.gamma"),
                              params.grad(base + ".ln1.beta"));
  }

  embedding_backward(dh, dec.ids, dec.embed_drop_mask,
                     params.grad("tgt_embed"), cfg.d_model);
  return dmemory;
}

template <class Scalar>
void encoder_backward(const Mat<Scalar>& dmemory,
                      const ForwardCache<Scalar>& cache,
                      ModelParams<Scalar>& params) {
  const ModelConfig& cfg = params.config;
  const EncoderCache<Scalar>& enc = cache.enc;

  Mat<Scalar> dh = layer_norm_backward(dmemory, enc.final_ln,
                                       params.value("enc.norm.gamma"),
                                       params.grad("enc.norm.gamma"),
                                       params.grad("enc.norm.beta"));

  for (int l = cfg.n_layers_enc - 1; l >= 0; --l) {
    const std::string base = "enc." + std::to_string(l);
    const EncLayerCache<Scalar>& lc =
        enc.layers[static_cast<std::size_t>(l)];

    Mat<Scalar> dff_out = masked(dh, lc.ff.drop_mask);
    Mat<Scalar> dnormed2 =
        feed_forward_backward(dff_out, lc.ff, params, base + ".ff");
    dh += layer_norm_backward(dnormed2, lc.ln2,
                              params.value(base + ".ln2.gamma"),
                              params.grad(base + ".ln2.gamma"),
                              params.grad(base + ".ln2.beta"));

    Mat<Scalar> dattn_out = masked(dh, lc.attn.drop_mask);
    Mat<Scalar> dnormed = Mat<Scalar>::Zero(dh.rows(), dh.cols());
    mha_backward(dattn_out, lc.attn, cfg.n_heads, params, base + ".attn",
                 dnormed, dnormed);
    dh += layer_norm_backward(dnormed, lc.ln1,
                              params.value(base + ".ln1.gamma"),
                              params.grad(base + ".ln1.gamma"),
                              params.grad(base + ".ln1.beta"));
  }

  embedding_backward(dh, enc.ids, enc.embed_drop_mask,
                     params.grad("src_embed"), cfg.d_model);
}

}  // namespace detail

/// Accumulates parameter gradients for one cached forward pass. dlogits is
/// the loss gradient w.r.t. the output logits.
template <class Scalar>
void backward(const ForwardCache<Scalar>& cache, const Mat<Scalar>& dlogits,
              ModelParams<Scalar>& params) {
  Mat<Scalar> dmemory = detail::decoder_backward(dlogits, cache, params);
  detail::encoder_backward(dmemory, cache, params);
}

struct LossStats {
  double loss_sum = 0.0;       // summed over predicted tokens
  std::size_t tokens = 0;      // non-<pad> labels scored
  std::size_t correct = 0;     // argmax == label

  double mean_loss() const {
    return tokens == 0 ? 0.0 : loss_sum / static_cast<double>(tokens);
  }
  double accuracy() const {
    return tokens == 0 ? 0.0
                       : static_cast<double>(correct) /
                             static_cast<double>(tokens);
  }
};

/// Teacher-forced next-token cross-entropy for one example. The decoder
/// consumes tgt[0..n-2] and is scored against tgt[1..n-1]; <pad> labels are
/// skipped. When dlogits_out is non-null it receives d(sum loss)/d(logits).
template <class Scalar>
LossStats cross_entropy(const Mat<Scalar>& logits, std::span<const int> tgt,
                        Mat<Scalar>* dlogits_out = nullptr) {
  if (tgt.size() < 2) throw ShapeError("target must hold at least <s> </s>");
  if (logits.rows() != static_cast<Eigen::Index>(tgt.size()) - 1)
    throw ShapeError("logits rows do not match target prefix length");

  LossStats stats;
  if (dlogits_out != nullptr)
    *dlogits_out = Mat<Scalar>::Zero(logits.rows(), logits.cols());
  for (Eigen::Index t = 0; t < logits.rows(); ++t) {
    const int label = tgt[static_cast<std::size_t>(t) + 1];
    if (label == kPadId) continue;
    if (label < 0 || label >= logits.cols())
      throw RangeError("label id outside target vocabulary");

    const Scalar rowmax = logits.row(t).maxCoeff();
    Eigen::Array<Scalar, 1, Eigen::Dynamic> shifted =
        logits.row(t).array() - rowmax;
    const Scalar log_z = std::log(shifted.exp().sum());
    stats.loss_sum += static_cast<double>(log_z - shifted(label));
    ++stats.tokens;

    Eigen::Index argmax = 0;
    logits.row(t).maxCoeff(&argmax);
    if (static_cast<int>(argmax) == label) ++stats.correct;

    if (dlogits_out != nullptr) {
      dlogits_out->row(t) = (shifted - log_z).exp().matrix();
      (*dlogits_out)(t, label) -= Scalar(1);
    }
  }
  return stats;
}

/// Forward-only mean loss of one example (used by grad_check and eval).
template <class Scalar>
LossStats sequence_loss(const ModelParams<Scalar>& params,
                        std::span<const int> src, std::span<const int> tgt) {
  std::span<const int> prefix(tgt.data(), tgt.size() - 1);
  Mat<Scalar> logits = forward(src, prefix, params);
  return cross_entropy<Scalar>(logits, tgt);
}

struct OptimizerConfig {
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-9;
  double lr_factor = 2.0;
  int warmup_steps = 4000;

  /// Inverse-square-root schedule with linear warmup.
  double learning_rate(std::int64_t step, int d_model) const {
    const double s = static_cast<double>(step);
    return lr_factor * std::pow(static_cast<double>(d_model), -0.5) *
           std::min(std::pow(s, -0.5),
                    s * std::pow(static_cast<double>(warmup_steps), -1.5));
  }
};

template <class Scalar>
struct AdamState {
  std::vector<Mat<Scalar>> m, v;
  std::int64_t step = 0;

  static AdamState init(const ModelParams<Scalar>& params) {
    AdamState state;
    for (const auto& t : params.tensors()) {
      state.m.push_back(Mat<Scalar>::Zero(t.value.rows(), t.value.cols()));
      state.v.push_back(Mat<Scalar>::Zero(t.value.rows(), t.value.cols()));
    }
    return state;
  }
};

template <class Scalar>
void adam_update(ModelParams<Scalar>& params, AdamState<Scalar>& state,
                 const OptimizerConfig& cfg, double lr) {
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, double(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, double(state.step));
  auto& tensors = params.tensors();
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    auto& g = tensors[i].grad;
    state.m[i] = Scalar(cfg.beta1) * state.m[i] + Scalar(1 - cfg.beta1) * g;
    state.v[i] = (Scalar(cfg.beta2) * state.v[i].array() +
                  Scalar(1 - cfg.beta2) * g.array().square())
                     .matrix();
    tensors[i].value.array() -=
        Scalar(lr) * (state.m[i].array() / Scalar(bc1)) /
        ((state.v[i].array() / Scalar(bc2)).sqrt() + Scalar(cfg.eps));
  }
}

struct TrainStepStats {
  double loss = 0.0;
  double learning_rate = 0.0;
  double token_accuracy = 0.0;
};

/// One optimizer update on a batch: mean token-level cross-entropy under
/// teacher forcing. Raises DivergenceError when the loss is not finite.
template <class Scalar>
TrainStepStats train_step(ModelParams<Scalar>& params,
                          std::span<const Example> batch,
                          AdamState<Scalar>& opt_state,
                          const OptimizerConfig& opt_cfg,
                          Dropout* dropout = nullptr) {
  if (batch.empty()) throw ShapeError("empty batch");
  params.zero_grads();

  LossStats total;
  for (const Example& ex : batch) {
    ForwardCache<Scalar> cache;
    std::span<const int> prefix(ex.tgt.data(), ex.tgt.size() - 1);
    Mat<Scalar> logits = forward<Scalar>(ex.src, prefix, params, &cache,
                                         dropout);
    Mat<Scalar> dlogits;
    LossStats stats = cross_entropy<Scalar>(logits, ex.tgt, &dlogits);
    total.loss_sum += stats.loss_sum;
    total.tokens += stats.tokens;
    total.correct += stats.correct;
    backward(cache, dlogits, params);
  }
  if (total.tokens == 0) throw ShapeError("batch has no scorable tokens");

  const Scalar inv = Scalar(1) / static_cast<Scalar>(total.tokens);
  for (auto& t : params.tensors()) t.grad *= inv;

  const double loss = total.mean_loss();
  if (!std::isfinite(loss))
    throw DivergenceError("training loss is not finite");

  const double lr =
      opt_cfg.learning_rate(opt_state.step + 1, params.config.d_model);
  adam_update(params, opt_state, opt_cfg, lr);
  return TrainStepStats{loss, lr, total.accuracy()};
}

/// Compares analytic gradients against central finite differences over every
/// parameter entry; returns the maximum relative error. Reference (64-bit)
/// mode is assumed; dropout off.
template <class Scalar>
double grad_check(ModelParams<Scalar>& params, const Example& example,
                  double epsilon = 1e-5) {
  params.zero_grads();
  ForwardCache<Scalar> cache;
  std::span<const int> prefix(example.tgt.data(), example.tgt.size() - 1);
  Mat<Scalar> logits = forward<Scalar>(example.src, prefix, params, &cache);
  Mat<Scalar> dlogits;
  LossStats stats = cross_entropy<Scalar>(logits, example.tgt, &dlogits);
  backward(cache, dlogits, params);
  const Scalar inv = Scalar(1) / static_cast<Scalar>(stats.tokens);
  for (auto& t : params.tensors()) t.grad *= inv;

  double max_rel = 0.0;
  for (auto& tensor : params.tensors()) {
    for (Eigen::Index i = 0; i < tensor.value.rows(); ++i) {
      for (Eigen::Index j = 0; j < tensor.value.cols(); ++j) {
        const Scalar saved = tensor.value(i, j);
        tensor.value(i, j) = saved + static_cast<Scalar>(epsilon);
        const double plus =
            sequence_loss<Scalar>(params, example.src, example.tgt)
                .mean_loss();
        tensor.value(i, j) = saved - static_cast<Scalar>(epsilon);
        const double minus =
            sequence_loss<Scalar>(params, example.src, example.tgt)
                .mean_loss();
        tensor.value(i, j) = saved;

        const double numeric = (plus - minus) / (2.0 * epsilon);
        const double analytic = static_cast<double>(tensor.grad(i, j));
        const double rel =
            std::abs(analytic - numeric) /
            std::max({std::abs(analytic), std::abs(numeric), 1e-8});
        max_rel = std::max(max_rel, rel);
      }
    }
  }
  return max_rel;
}

}  // namespace duet
