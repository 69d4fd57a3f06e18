#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "duet/metrics.hpp"
#include "support/bleu_oracle.hpp"

using namespace duet;
using duet::testing::bleu_oracle;

namespace {

using Words = std::vector<std::string>;

Words random_words(std::mt19937_64& rng, int max_len,
                   const Words& alphabet) {
  std::uniform_int_distribution<int> len(1, max_len);
  std::uniform_int_distribution<std::size_t> pick(0, alphabet.size() - 1);
  Words w(std::size_t(len(rng)));
  for (auto& x : w) x = alphabet[pick(rng)];
  return w;
}

NoteSeq notes_from(std::initializer_list<std::pair<int, int>> pd) {
  NoteSeq seq;
  std::int64_t onset = 0;
  for (auto [p, d] : pd) {
    seq.push_back(NoteEvent{p, d, onset});
    onset += d;
  }
  return seq;
}

}  // namespace

TEST_CASE("bleu of a sequence against itself is exactly 100") {
  Words x = {"a", "b", "c", "d", "e", "f"};
  CHECK(bleu(x, x, 4) == 100.0);
  Words shorter = {"a", "b"};  // below max_n, smoothing covers n > 2
  CHECK(bleu(shorter, shorter, 4) == 100.0);
  CHECK(bleu(x, x, 8) == 100.0);
}

TEST_CASE("disjoint sequences score zero because p1 is unsmoothed") {
  Words cand = {"a", "b", "c", "d"};
  Words ref = {"e", "f", "g", "h"};
  CHECK(bleu(cand, ref, 4) == 0.0);
}

TEST_CASE("worked example: four of five words shared, shifted tail") {
  Words cand = {"a", "b", "c", "d", "e"};
  Words ref = {"a", "b", "c", "d", "f"};
  // p1 = 4/5, smoothed p2 = 4/5, p3 = 3/4, p4 = 2/3, brevity 1
  const double expected =
      100.0 * std::pow(0.8 * 0.8 * 0.75 * (2.0 / 3.0), 0.25);
  const double fast = bleu(cand, ref, 4);
  CHECK(fast == Catch::Approx(expected).epsilon(1e-12));
  CHECK(fast == Catch::Approx(bleu_oracle(cand, ref, 4)).margin(1e-9));
  CHECK(fast == Catch::Approx(75.2).margin(0.05));
}

TEST_CASE("empty inputs follow the error contract") {
  Words ref = {"a"};
  bool empty_flag = false;
  CHECK(bleu({}, ref, 4, &empty_flag) == 0.0);
  CHECK(empty_flag);
  CHECK_THROWS_AS(bleu(ref, {}, 4), MetricError);
}

TEST_CASE("brevity penalty punishes short candidates") {
  Words ref = {"a", "b", "c", "d", "e", "f"};
  Words cand = {"a", "b", "c"};
  const double expected = std::exp(1.0 - 6.0 / 3.0);
  CHECK(bleu(cand, ref, 1) == Catch::Approx(100.0 * expected).epsilon(1e-9));
  // a long candidate is only penalized through precision, not brevity
  Words long_cand = {"a", "b", "c", "d", "e", "f", "x", "y"};
  CHECK(bleu(long_cand, ref, 1) == Catch::Approx(100.0 * 6.0 / 8.0).epsilon(1e-9));
}

TEST_CASE("bleu matches the brute-force oracle on random pairs") {
  std::mt19937_64 rng(2024);
  const Words alphabet = {"x", "y", "z"};
  for (int iter = 0; iter < 2000; ++iter) {
    Words cand = random_words(rng, 12, alphabet);
    Words ref = random_words(rng, 12, alphabet);
    for (int max_n : {1, 2, 4, 8}) {
      CAPTURE(cand, ref, max_n);
      CHECK(bleu(cand, ref, max_n) ==
            Catch::Approx(bleu_oracle(cand, ref, max_n)).margin(1e-9));
    }
  }
}

TEST_CASE("bleu is invariant under consistent renaming") {
  std::mt19937_64 rng(11);
  const Words alphabet = {"x", "y", "z"};
  auto rename = [](const Words& w) {
    Words out = w;
    for (auto& s : out) s = "token_" + s;
    return out;
  };
  for (int iter = 0; iter < 200; ++iter) {
    Words cand = random_words(rng, 10, alphabet);
    Words ref = random_words(rng, 10, alphabet);
    CHECK(bleu(cand, ref, 4) ==
          Catch::Approx(bleu(rename(cand), rename(ref), 4)).epsilon(1e-12));
  }
}

TEST_CASE("extract_streams separates and interleaves pitch/duration words") {
  TokenSequence seq;
  seq.variant = Variant::kBeatPosition;
  seq.meter = Meter{4, 4};
  seq.words = {"<s>", "P60", "D1.000", "B0.000", "P62", "D0.500", "B1.000",
               "</s>"};
  auto streams = extract_streams(seq);
  CHECK(streams.pitch == Words{"P60", "P62"});
  CHECK(streams.duration == Words{"D1.000", "D0.500"});
  CHECK(streams.combined == Words{"P60", "D1.000", "P62", "D0.500"});

  TokenSequence none;
  none.variant = Variant::kNone;
  none.meter = Meter{4, 4};
  none.words = {"<s>", "P60", "D1.000", "P62", "D0.500", "</s>"};
  auto s2 = extract_streams(none);
  CHECK(s2.combined == Words{"P60", "D1.000", "P62", "D0.500"});

  TokenSequence empty;
  empty.variant = Variant::kNone;
  empty.meter = Meter{4, 4};
  empty.words = {"<s>", "</s>"};
  auto s3 = extract_streams(empty);
  CHECK(s3.pitch.empty());
  CHECK(s3.duration.empty());
  CHECK(s3.combined.empty());

  TokenSequence broken = none;
  broken.words = {"<s>", "P60", "P61", "</s>"};
  CHECK_THROWS_AS(extract_streams(broken), GrammarError);
  CHECK_NOTHROW(extract_streams(broken, /*strict=*/false));
}

TEST_CASE("evaluate scores identical candidates at 100 with zero spread") {
  auto make = [](int base) {
    TokenSequence seq;
    seq.variant = Variant::kModBeatPosition;
    seq.meter = Meter{4, 4};
    NoteSeq notes;
    std::int64_t onset = 0;
    for (int i = 0; i < 12; ++i) {
      notes.push_back(NoteEvent::note(base + (i * 2) % 7, 500, onset));
      onset += 500;
    }
    seq = encode(notes, Variant::kModBeatPosition, Meter{4, 4});
    return seq;
  };
  std::vector<std::pair<std::string, TokenSequence>> refs = {
      {"s1", make(60)}, {"s2", make(64)}, {"s3", make(55)}};
  auto report = evaluate(refs, refs);
  CHECK(report.pitch.mean == 100.0);
  CHECK(report.duration.mean == 100.0);
  CHECK(report.combined.mean == 100.0);
  CHECK(report.pitch.stddev == 0.0);

  std::vector<std::pair<std::string, TokenSequence>> single = {refs[0]};
  auto one = evaluate(single, single);
  CHECK(one.pitch.stddev == 0.0);

  auto misaligned = refs;
  misaligned[1].first = "wrong";
  CHECK_THROWS_AS(evaluate(misaligned, refs), AlignmentError);
  std::vector<std::pair<std::string, TokenSequence>> fewer = {refs[0],
                                                              refs[1]};
  CHECK_THROWS_AS(evaluate(fewer, refs), AlignmentError);
}

TEST_CASE("edit distance counts substitutions, insertions, deletions") {
  auto a = note_tuples(notes_from({{60, 500}, {62, 500}, {64, 1000}}));
  CHECK(edit_distance(a, a) == 0);

  auto one_pitch = note_tuples(notes_from({{60, 500}, {63, 500}, {64, 1000}}));
  CHECK(edit_distance(a, one_pitch) == 1);

  auto one_dur = note_tuples(notes_from({{60, 500}, {62, 250}, {64, 1000}}));
  CHECK(edit_distance(a, one_dur) == 1);

  auto extra = a;
  extra.emplace_back(65, 500);
  CHECK(edit_distance(a, extra) == 1);

  CHECK(edit_distance({}, a) == 3);
  CHECK(edit_distance(a, {}) == 3);
}

TEST_CASE("edit distance is a metric on random instances") {
  std::mt19937_64 rng(5150);
  auto random_tuples = [&](int max_len) {
    std::uniform_int_distribution<int> len(0, max_len);
    std::uniform_int_distribution<int> pitch(60, 63);
    std::uniform_int_distribution<int> dur(1, 3);
    std::vector<NoteTuple> t(std::size_t(len(rng)));
    for (auto& x : t) x = {pitch(rng), dur(rng) * 500};
    return t;
  };
  for (int iter = 0; iter < 3000; ++iter) {
    auto a = random_tuples(8), b = random_tuples(8), c = random_tuples(8);
    const std::size_t ab = edit_distance(a, b);
    CHECK(ab == edit_distance(b, a));                    // symmetry
    CHECK((ab == 0) == (a == b));                        // identity
    CHECK(ab <= edit_distance(a, c) + edit_distance(c, b));  // triangle
    CHECK(ab <= std::max(a.size(), b.size()));           // upper bound
  }

  // equal length, nothing shared: distance is exactly the length
  std::vector<NoteTuple> x = {{60, 500}, {61, 500}, {62, 500}};
  std::vector<NoteTuple> y = {{70, 250}, {71, 250}, {72, 250}};
  CHECK(edit_distance(x, y) == 3);
}

TEST_CASE("memorization scan finds copies and aggregates all pairs") {
  auto t1 = notes_from({{60, 500}, {62, 500}});
  auto t2 = notes_from({{64, 1000}, {65, 500}});
  auto t3 = notes_from({{55, 250}, {57, 250}, {59, 250}});
  std::vector<std::pair<std::string, NoteSeq>> targets = {
      {"t1", t1}, {"t2", t2}, {"t3", t3}};

  SECTION("responses that are training targets are exact copies") {
    std::vector<std::pair<std::string, NoteSeq>> responses = {{"r1", t2},
                                                              {"r2", t3}};
    auto report = memorization_scan(responses, targets);
    CHECK(report.exact_copy_count == 2);
    CHECK(report.per_response[0].min_distance == 0);
    CHECK(report.per_response[0].nearest_target_id == "t2");
    CHECK(report.per_response[1].nearest_target_id == "t3");
  }
  SECTION("two substitutions away gives mean 2, std 0") {
    auto near = notes_from({{61, 500}, {63, 500}});
    std::vector<std::pair<std::string, NoteSeq>> responses = {{"r", near}};
    std::vector<std::pair<std::string, NoteSeq>> one_target = {{"t1", t1}};
    auto report = memorization_scan(responses, one_target);
    CHECK(report.mean == 2.0);
    CHECK(report.stddev == 0.0);
    CHECK(report.exact_copy_count == 0);
  }
  SECTION("empty inputs are rejected") {
    std::vector<std::pair<std::string, NoteSeq>> none;
    CHECK_THROWS_AS(memorization_scan(none, targets), MetricError);
    CHECK_THROWS_AS(memorization_scan(targets, none), MetricError);
  }
}

TEST_CASE("the rendered table lists one row per encoding") {
  BleuReport r;
  r.pitch = {22.4, 26.9};
  r.duration = {56.1, 30.6};
  r.combined = {35.8, 32.1};
  auto table = render_bleu_table({{"none", r}, {"beat-position", r}});
  CHECK(table.find("none") != std::string::npos);
  CHECK(table.find("beat-position") != std::string::npos);
  CHECK(table.find("22.4±26.9") != std::string::npos);
  CHECK(table.find("Duration") != std::string::npos);
}
