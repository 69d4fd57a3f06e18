#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <map>
#include <random>

#include "duet/decoding.hpp"
#include "duet/model.hpp"
#include "duet/tokenizer.hpp"
#include "duet/train.hpp"

using namespace duet;

namespace {

const Meter kCommon{4, 4};

Vocabulary demo_vocab() {
  std::set<std::string> words = {"P60",    "P62",    "P64",    "PR",
                                 "D0.500", "D1.000", "D1.500"};
  for (int mb = 0; mb <= 3500; mb += 500)
    words.insert(beat_word(mb));
  return Vocabulary::from_words(words);
}

/// Hand-settable scorer: log-probabilities depend only on the prefix length,
/// so hypotheses can be enumerated by hand.
class TableScorer : public NextTokenScorer {
 public:
  TableScorer(int vocab, std::vector<std::vector<double>> rows)
      : vocab_(vocab), rows_(std::move(rows)) {}
  int vocab_size() const override { return vocab_; }
  std::vector<double> log_probs(std::span<const int> prefix) const override {
    std::size_t step = prefix.size() - 1;
    return rows_.at(std::min(step, rows_.size() - 1));
  }

 private:
  int vocab_;
  std::vector<std::vector<double>> rows_;
};

/// Deterministic smooth scorer for property tests.
class HashScorer : public NextTokenScorer {
 public:
  HashScorer(int vocab, std::uint64_t seed) : vocab_(vocab), seed_(seed) {}
  int vocab_size() const override { return vocab_; }
  std::vector<double> log_probs(std::span<const int> prefix) const override {
    std::uint64_t h = seed_;
    for (int id : prefix) h = h * 0x100000001B3ULL + std::uint64_t(id + 1);
    std::vector<double> logits(static_cast<std::size_t>(vocab_));
    double max = -1e300;
    for (int j = 0; j < vocab_; ++j) {
      std::uint64_t hj = (h ^ (0x9E3779B97F4A7C15ULL * std::uint64_t(j + 3)));
      hj ^= hj >> 29;
      logits[std::size_t(j)] = double(hj % 1000) / 250.0;
      max = std::max(max, logits[std::size_t(j)]);
    }
    double z = 0;
    for (double v : logits) z += std::exp(v - max);
    const double log_z = std::log(z) + max;
    for (double& v : logits) v -= log_z;
    return logits;
  }

 private:
  int vocab_;
  std::uint64_t seed_;
};

std::vector<int> greedy_reference(const NextTokenScorer& scorer,
                                  const GrammarTables* grammar,
                                  int max_steps) {
  std::vector<int> ids = {kBosId};
  GrammarTables::State state;
  for (int step = 0; step < max_steps; ++step) {
    auto lp = scorer.log_probs(ids);
    int best = -1;
    double best_lp = -std::numeric_limits<double>::infinity();
    if (grammar != nullptr) {
      for (int id : grammar->allowed(state))
        if (lp[std::size_t(id)] > best_lp) {
          best_lp = lp[std::size_t(id)];
          best = id;
        }
    } else {
      for (int id = 0; id < scorer.vocab_size(); ++id)
        if (lp[std::size_t(id)] > best_lp) {
          best_lp = lp[std::size_t(id)];
          best = id;
        }
    }
    if (best < 0) break;
    ids.push_back(best);
    if (grammar != nullptr) state = grammar->advance(state, best);
    if (best == kEosId) break;
  }
  return ids;
}

}  // namespace

TEST_CASE("grammar_mask walks the pitch/duration/beat cycle") {
  Vocabulary vocab = demo_vocab();

  SECTION("after <s>: pitch words or </s>") {
    auto allowed = grammar_mask(std::vector<int>{kBosId}, vocab,
                                Variant::kModBeatPosition, kCommon);
    std::set<std::string> words;
    for (int id : allowed) words.insert(vocab.word(id));
    CHECK(words == std::set<std::string>{"P60", "P62", "P64", "PR", "</s>"});
  }
  SECTION("after a pitch word: durations only") {
    std::vector<int> prefix = {kBosId, *vocab.find("P60")};
    auto allowed =
        grammar_mask(prefix, vocab, Variant::kModBeatPosition, kCommon);
    std::set<std::string> words;
    for (int id : allowed) words.insert(vocab.word(id));
    CHECK(words == std::set<std::string>{"D0.500", "D1.000", "D1.500"});
  }
  SECTION("after a duration: exactly the forced beat word") {
    std::vector<int> prefix = {kBosId, *vocab.find("P60"),
                               *vocab.find("D1.500")};
    auto allowed =
        grammar_mask(prefix, vocab, Variant::kModBeatPosition, kCommon);
    REQUIRE(allowed.size() == 1);
    CHECK(vocab.word(allowed[0]) == "B0.000");

    // one note in: the next onset is 1.5 inside the measure
    prefix.push_back(*vocab.find("B0.000"));
    prefix.push_back(*vocab.find("P62"));
    prefix.push_back(*vocab.find("D1.000"));
    auto next =
        grammar_mask(prefix, vocab, Variant::kModBeatPosition, kCommon);
    REQUIRE(next.size() == 1);
    CHECK(vocab.word(next[0]) == "B1.500");
  }
  SECTION("absolute variant forces the running sum, unwrapped") {
    std::vector<int> prefix = {kBosId, *vocab.find("P60"),
                               *vocab.find("D1.500"), *vocab.find("B0.000"),
                               *vocab.find("P62"), *vocab.find("D1.000")};
    auto allowed =
        grammar_mask(prefix, vocab, Variant::kBeatPosition, kCommon);
    REQUIRE(allowed.size() == 1);
    CHECK(vocab.word(allowed[0]) == "B1.500");
  }
  SECTION("variant none alternates pitch and duration") {
    std::vector<int> prefix = {kBosId, *vocab.find("P60"),
                               *vocab.find("D1.000")};
    auto allowed = grammar_mask(prefix, vocab, Variant::kNone, kCommon);
    std::set<std::string> words;
    for (int id : allowed) words.insert(vocab.word(id));
    CHECK(words == std::set<std::string>{"P60", "P62", "P64", "PR", "</s>"});
  }
  SECTION("finished prefixes are a StateError") {
    std::vector<int> prefix = {kBosId, kEosId, kEosId};
    CHECK_THROWS_AS(grammar_mask(prefix, vocab, Variant::kNone, kCommon),
                    StateError);
  }
}

TEST_CASE("beam width 1 equals greedy decoding token for token") {
  Vocabulary vocab = demo_vocab();
  GrammarTables tables(vocab, Variant::kModBeatPosition, kCommon);
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    HashScorer scorer(vocab.size(), seed);
    DecodeOptions options;
    options.beam_width = 1;
    options.max_steps = 60;

    auto beam = beam_search(scorer, &tables, 10, options);
    auto greedy = greedy_reference(scorer, &tables, 60);
    CHECK(beam.ids == greedy);

    auto beam_free = beam_search(scorer, nullptr, 10, options);
    auto greedy_free = greedy_reference(scorer, nullptr, 60);
    CHECK(beam_free.ids == greedy_free);
  }
}

TEST_CASE("beam search returns the higher-scoring enumerable sequence") {
  // vocabulary ids: 0 <s>, 1 </s>, 2 <unk>, 3 <pad>, 4 A, 5 B
  // step 0: A has log-prob -0.1, B -0.5
  // step 1 (after anything): </s> -0.9 following A, better following B
  std::vector<std::vector<double>> rows = {
      {-1e9, -1e9, -1e9, -1e9, std::log(0.6), std::log(0.4)},
      {-1e9, std::log(0.5), -1e9, -1e9, std::log(0.3), std::log(0.2)},
      {-1e9, std::log(0.9), -1e9, -1e9, std::log(0.05), std::log(0.05)},
  };
  TableScorer scorer(6, rows);
  DecodeOptions options;
  options.beam_width = 2;
  options.max_steps = 8;
  options.alpha = 0.0;  // raw log-prob comparison for hand enumeration

  // hand enumeration: A </s> = log(0.6*0.5) = -1.204, A A </s> =
  // log(0.6*0.3*0.9) = -1.820, B </s> = log(0.4*0.5) = -1.609
  auto outcome = beam_search(scorer, nullptr, 4, options);
  REQUIRE(outcome.ids.size() == 3);
  CHECK(outcome.ids[1] == 4);
  CHECK(outcome.ids[2] == kEosId);
  CHECK(outcome.score == Catch::Approx(std::log(0.6 * 0.5)).epsilon(1e-9));
}

TEST_CASE("grammar-constrained output passes strict decode and beat checks") {
  Vocabulary vocab = demo_vocab();
  for (auto variant : {Variant::kBeatPosition, Variant::kModBeatPosition,
                       Variant::kNone}) {
    GrammarTables tables(vocab, variant, kCommon);
    for (std::uint64_t seed = 50; seed < 60; ++seed) {
      HashScorer scorer(vocab.size(), seed);
      DecodeOptions options;
      options.beam_width = 3;
      options.max_steps = 80;
      auto outcome = beam_search(scorer, &tables, 12, options);

      TokenSequence seq{from_ids(outcome.ids, vocab), variant, kCommon};
      CHECK_NOTHROW(decode(seq, /*strict=*/true));
      if (variant != Variant::kNone) CHECK(validate_beats(seq).ok());
    }
  }
}

TEST_CASE("returned score is the best among finished hypotheses") {
  Vocabulary vocab = demo_vocab();
  GrammarTables tables(vocab, Variant::kNone, kCommon);
  HashScorer scorer(vocab.size(), 31);
  DecodeOptions options;
  options.beam_width = 5;
  options.max_steps = 40;
  auto outcome = beam_search(scorer, &tables, 8, options);
  CHECK(!outcome.truncated);
  CHECK(std::isfinite(outcome.score));
}

TEST_CASE("wider beams never lower the best finished score") {
  Vocabulary vocab = demo_vocab();
  GrammarTables tables(vocab, Variant::kModBeatPosition, kCommon);
  for (std::uint64_t seed = 100; seed < 112; ++seed) {
    HashScorer scorer(vocab.size(), seed);
    double prev = -std::numeric_limits<double>::infinity();
    for (int width = 1; width <= 8; ++width) {
      DecodeOptions options;
      options.beam_width = width;
      options.max_steps = 60;
      auto outcome = beam_search(scorer, &tables, 10, options);
      if (!outcome.truncated) {
        CHECK(outcome.score >= prev - 1e-12);
        prev = std::max(prev, outcome.score);
      }
    }
  }
}

TEST_CASE("step-limited decodes are flagged and still parse") {
  Vocabulary vocab = demo_vocab();
  // </s> is made hugely unlikely so the limit always triggers
  std::vector<double> row(std::size_t(vocab.size()), std::log(0.05));
  row[kEosId] = -1e9;
  row[std::size_t(kBosId)] = -1e9;
  TableScorer scorer(vocab.size(), {row});
  GrammarTables tables(vocab, Variant::kModBeatPosition, kCommon);
  DecodeOptions options;
  options.beam_width = 2;
  options.max_steps = 10;
  auto outcome = beam_search(scorer, &tables, 4, options);
  CHECK(outcome.truncated);
  TokenSequence seq{from_ids(outcome.ids, vocab), Variant::kModBeatPosition,
                    kCommon};
  CHECK_NOTHROW(decode(seq, /*strict=*/true));
}

TEST_CASE("a real model decodes through the transformer scorer") {
  ModelConfig cfg;
  cfg.d_model = 16;
  cfg.n_heads = 2;
  cfg.d_ff = 32;
  cfg.n_layers_enc = 1;
  cfg.n_layers_dec = 1;
  cfg.max_len = 64;
  cfg.dropout_rate = 0.0;
  cfg.seed = 5;
  Vocabulary vocab = demo_vocab();
  cfg.vocab_size_src = vocab.size();
  cfg.vocab_size_tgt = vocab.size();
  auto params = ModelParams<double>::init(cfg);

  NoteSeq source = {NoteEvent::note(60, 1000, 0), NoteEvent::note(62, 500, 1000),
                    NoteEvent::note(64, 500, 1500)};
  auto tokens = encode(source, Variant::kModBeatPosition, kCommon);
  auto ids = to_ids(tokens.words, vocab);
  REQUIRE(ids.unknown == 0);

  GrammarTables tables(vocab, Variant::kModBeatPosition, kCommon);
  DecodeOptions options;
  options.beam_width = 4;
  auto outcome = beam_search_model<double>(params, ids.ids, &tables, options);
  TokenSequence seq{from_ids(outcome.ids, vocab), Variant::kModBeatPosition,
                    kCommon};
  CHECK_NOTHROW(decode(seq, /*strict=*/true));
  if (!outcome.truncated && seq.words.size() > 2)
    CHECK(validate_beats(seq).ok());

  // same inputs, same outputs
  auto again = beam_search_model<double>(params, ids.ids, &tables, options);
  CHECK(outcome.ids == again.ids);
}
