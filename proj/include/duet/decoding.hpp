#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "duet/beats.hpp"
#include "duet/errors.hpp"
#include "duet/model.hpp"
#include "duet/tokenizer.hpp"

namespace duet {

/// Per-id word classification plus the lookups the grammar needs: duration
/// payloads for the running beat sum and the beat word for a given position.
class GrammarTables {
 public:
  GrammarTables(const Vocabulary& vocab, Variant variant, Meter meter)
      : variant_(variant), measure_mb_(meter.measure_millibeats()) {
    kinds_.resize(static_cast<std::size_t>(vocab.size()));
    values_.resize(static_cast<std::size_t>(vocab.size()), 0);
    for (int id = 0; id < vocab.size(); ++id) {
      WordInfo info = classify_word(vocab.word(id));
      kinds_[static_cast<std::size_t>(id)] = info.kind;
      values_[static_cast<std::size_t>(id)] = info.value;
      switch (info.kind) {
        case WordKind::kPitch:
          pitch_ids_.push_back(id);
          break;
        case WordKind::kDuration:
          duration_ids_.push_back(id);
          break;
        case WordKind::kBeat:
          beat_id_by_mb_[info.value] = id;
          break;
        default:
          break;
      }
    }
  }

  Variant variant() const { return variant_; }
  std::int64_t measure_mb() const { return measure_mb_; }
  WordKind kind(int id) const { return kinds_[static_cast<std::size_t>(id)]; }
  std::int64_t value(int id) const {
    return values_[static_cast<std::size_t>(id)];
  }

  struct State {
    // 0 = expect pitch or </s>, 1 = expect duration, 2 = expect beat
    int phase = 0;
    std::int64_t onset_mb = 0;       // running duration sum
    std::int64_t pending_mb = 0;     // duration of the note being formed
    bool finished = false;
  };

  /// Token ids legal after the given state, per the pitch/duration/beat
  /// word grammar. For beat variants the single correct beat word is forced.
  std::vector<int> allowed(const State& state) const {
    if (state.finished) throw StateError("sequence already ended with </s>");
    std::vector<int> ids;
    switch (state.phase) {
      case 0:
        ids = pitch_ids_;
        ids.push_back(kEosId);
        break;
      case 1:
        ids = duration_ids_;
        break;
      case 2: {
        std::int64_t want = variant_ == Variant::kModBeatPosition
                                ? state.onset_mb % measure_mb_
                                : state.onset_mb;
        auto it = beat_id_by_mb_.find(want);
        if (it != beat_id_by_mb_.end()) ids.push_back(it->second);
        break;  // empty set: no vocabulary word for this position
      }
      default:
        break;
    }
    return ids;
  }

  State advance(State state, int id) const {
    if (state.finished) throw StateError("sequence already ended with </s>");
    switch (kind(id)) {
      case WordKind::kPitch:
        state.phase = 1;
        break;
      case WordKind::kDuration:
        state.pending_mb = value(id);
        if (variant_ == Variant::kNone) {
          state.onset_mb += state.pending_mb;
          state.phase = 0;
        } else {
          state.phase = 2;
        }
        break;
      case WordKind::kBeat:
        state.onset_mb += state.pending_mb;
        state.phase = 0;
        break;
      case WordKind::kEos:
        state.finished = true;
        break;
      default:
        break;  // <s>/<unk>/<pad>: no state change
    }
    return state;
  }

 private:
  Variant variant_;
  std::int64_t measure_mb_;
  std::vector<WordKind> kinds_;
  std::vector<std::int64_t> values_;
  std::vector<int> pitch_ids_;
  std::vector<int> duration_ids_;
  std::map<std::int64_t, int> beat_id_by_mb_;
};

/// Token ids that may legally follow `prefix` (which must start with <s>).
inline std::vector<int> grammar_mask(std::span<const int> prefix,
                                     const Vocabulary& vocab, Variant variant,
                                     Meter meter) {
  if (prefix.empty() || prefix.front() != kBosId)
    throw StateError("prefix must start with <s>");
  GrammarTables tables(vocab, variant, meter);
  GrammarTables::State state;
  for (std::size_t i = 1; i < prefix.size(); ++i)
    state = tables.advance(state, prefix[i]);
  return tables.allowed(state);
}

/// Anything that can score the next token given a target prefix.
class NextTokenScorer {
 public:
  virtual ~NextTokenScorer() = default;
  virtual int vocab_size() const = 0;
  /// Log-probabilities over the full vocabulary for the token following
  /// `prefix` (prefix includes <s>).
  virtual std::vector<double> log_probs(std::span<const int> prefix) const = 0;
};

/// Scores with a transformer; the source is encoded once up front.
template <class Scalar>
class TransformerScorer : public NextTokenScorer {
 public:
  TransformerScorer(const ModelParams<Scalar>& params,
                    std::span<const int> src_ids)
      : params_(params), memory_(encode_source<Scalar>(src_ids, params)) {}

  int vocab_size() const override { return params_.config.vocab_size_tgt; }

  std::vector<double> log_probs(std::span<const int> prefix) const override {
    Mat<Scalar> logits = decode_logits<Scalar>(memory_, prefix, params_);
    Eigen::Index last = logits.rows() - 1;
    const double rowmax = static_cast<double>(logits.row(last).maxCoeff());
    double sum = 0.0;
    std::vector<double> lp(static_cast<std::size_t>(logits.cols()));
    for (Eigen::Index j = 0; j < logits.cols(); ++j) {
      lp[static_cast<std::size_t>(j)] =
          static_cast<double>(logits(last, j)) - rowmax;
      sum += std::exp(lp[static_cast<std::size_t>(j)]);
    }
    const double log_z = std::log(sum);
    for (double& v : lp) v -= log_z;
    return lp;
  }

 private:
  const ModelParams<Scalar>& params_;
  Mat<Scalar> memory_;
};

struct DecodeOptions {
  int beam_width = 4;
  double alpha = 0.6;    // length-normalization exponent
  int max_steps = -1;    // -1: 3 * source length + 8
  bool grammar = true;
};

struct DecodeOutcome {
  std::vector<int> ids;  // includes <s> and </s>
  double score = 0.0;    // logprob / length^alpha
  bool truncated = false;
};

namespace detail {

struct Hypothesis {
  std::vector<int> ids;
  double logprob = 0.0;
  GrammarTables::State state;
};

inline double normalized(double logprob, std::size_t ids_size, double alpha) {
  // length counts generated tokens (everything after <s>)
  const double len = std::max<double>(1.0, double(ids_size) - 1.0);
  return logprob / std::pow(len, alpha);
}

}  // namespace detail

/// Length-normalized beam search. With the grammar on, only legal tokens are
/// expanded, so the output always survives a strict decode; a hypothesis
/// whose forced beat word is missing from the vocabulary dies. Returns the
/// best finished hypothesis, or the best partial (grammar-completed, with
/// the truncated flag) if nothing finished within max_steps.
inline DecodeOutcome beam_search(const NextTokenScorer& scorer,
                                 const GrammarTables* grammar,
                                 std::size_t source_len,
                                 const DecodeOptions& options = {}) {
  if (options.beam_width < 1) throw Error("beam width must be >= 1");
  const int max_steps =
      options.max_steps > 0 ? options.max_steps
                            : static_cast<int>(3 * source_len + 8);

  std::vector<detail::Hypothesis> beam(1);
  beam[0].ids.push_back(kBosId);

  std::vector<detail::Hypothesis> finished;
  detail::Hypothesis best_partial = beam[0];
  double best_partial_score = -std::numeric_limits<double>::infinity();

  struct Candidate {
    double logprob;
    int token;
    std::size_t parent;
  };

  for (int step = 0; step < max_steps; ++step) {
    // a hypothesis that reached </s> retires and keeps its beam slot, so
    // with width 1 the search is exactly greedy decoding
    const int remaining =
        options.beam_width - static_cast<int>(finished.size());
    if (remaining <= 0 || beam.empty()) break;

    std::vector<Candidate> candidates;
    for (std::size_t b = 0; b < beam.size(); ++b) {
      const auto& hyp = beam[b];
      std::vector<double> lp = scorer.log_probs(hyp.ids);
      if (grammar != nullptr) {
        for (int id : grammar->allowed(hyp.state))
          candidates.push_back(
              Candidate{hyp.logprob + lp[std::size_t(id)], id, b});
      } else {
        for (int id = 0; id < scorer.vocab_size(); ++id)
          candidates.push_back(
              Candidate{hyp.logprob + lp[std::size_t(id)], id, b});
      }
    }
    std::sort(candidates.begin(), candidates.end(),
              [](const Candidate& a, const Candidate& b) {
                if (a.logprob != b.logprob) return a.logprob > b.logprob;
                if (a.token != b.token) return a.token < b.token;
                return a.parent < b.parent;
              });

    std::vector<detail::Hypothesis> next;
    int taken = 0;
    for (const Candidate& c : candidates) {
      if (taken >= remaining) break;
      ++taken;
      detail::Hypothesis hyp = beam[c.parent];
      hyp.ids.push_back(c.token);
      hyp.logprob = c.logprob;
      if (grammar != nullptr) hyp.state = grammar->advance(hyp.state, c.token);
      if (c.token == kEosId)
        finished.push_back(std::move(hyp));
      else
        next.push_back(std::move(hyp));
    }
    beam = std::move(next);

    for (const auto& hyp : beam) {
      double score = detail::normalized(hyp.logprob, hyp.ids.size(),
                                        options.alpha);
      if (score > best_partial_score) {
        best_partial_score = score;
        best_partial = hyp;
      }
    }
  }

  if (!finished.empty()) {
    const detail::Hypothesis* best = nullptr;
    double best_score = -std::numeric_limits<double>::infinity();
    for (const auto& hyp : finished) {
      double score =
          detail::normalized(hyp.logprob, hyp.ids.size(), options.alpha);
      if (score > best_score) {
        best_score = score;
        best = &hyp;
      }
    }
    return DecodeOutcome{best->ids, best_score, false};
  }

  // Nothing finished: trim the best partial back to a note boundary and
  // close it so the result still parses.
  detail::Hypothesis hyp = std::move(best_partial);
  if (grammar != nullptr) {
    std::size_t keep = 1;
    GrammarTables::State running;
    for (std::size_t i = 1; i < hyp.ids.size(); ++i) {
      running = grammar->advance(running, hyp.ids[i]);
      if (running.phase == 0) keep = i + 1;
    }
    hyp.ids.resize(keep);
  }
  hyp.ids.push_back(kEosId);
  return DecodeOutcome{
      hyp.ids,
      detail::normalized(hyp.logprob, hyp.ids.size(), options.alpha), true};
}

/// Convenience wrapper: beam search over a transformer for one source.
template <class Scalar>
DecodeOutcome beam_search_model(const ModelParams<Scalar>& params,
                                std::span<const int> src_ids,
                                const GrammarTables* grammar,
                                const DecodeOptions& options = {}) {
  TransformerScorer<Scalar> scorer(params, src_ids);
  return beam_search(scorer, grammar, src_ids.size(), options);
}

}  // namespace duet
