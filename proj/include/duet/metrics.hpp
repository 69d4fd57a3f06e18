#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "duet/errors.hpp"
#include "duet/note.hpp"
#include "duet/tokenizer.hpp"

namespace duet {

namespace detail {

inline std::map<std::string, int> ngram_counts(
    const std::vector<std::string>& words, int n) {
  std::map<std::string, int> counts;
  if (static_cast<int>(words.size()) < n) return counts;
  for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= words.size();
       ++i) {
    std::string key;
    for (int k = 0; k < n; ++k) {
      key += words[i + static_cast<std::size_t>(k)];
      key += '\x1f';
    }
    ++counts[key];
  }
  return counts;
}

}  // namespace detail

/// Sentence BLEU in [0, 100]: geometric mean of modified n-gram precisions
/// p_1..p_max_n times the brevity penalty. Smoothing method 2 adds one to
/// the numerator and denominator of p_n for n >= 2; an n with no candidate
/// n-grams then contributes precision 1. An empty candidate scores 0 (the
/// optional flag reports it); an empty reference is a MetricError.
inline double bleu(const std::vector<std::string>& candidate,
                   const std::vector<std::string>& reference, int max_n = 4,
                   bool* empty_candidate = nullptr) {
  if (max_n < 1) throw MetricError("max_n must be >= 1");
  if (reference.empty()) throw MetricError("empty reference");
  if (empty_candidate != nullptr) *empty_candidate = candidate.empty();
  if (candidate.empty()) return 0.0;

  double log_precision_sum = 0.0;
  for (int n = 1; n <= max_n; ++n) {
    auto cand = detail::ngram_counts(candidate, n);
    auto ref = detail::ngram_counts(reference, n);
    std::int64_t matches = 0, total = 0;
    for (const auto& [gram, count] : cand) {
      total += count;
      auto it = ref.find(gram);
      if (it != ref.end()) matches += std::min(count, it->second);
    }
    if (n >= 2) {
      ++matches;
      ++total;
    }
    if (matches == 0) return 0.0;  // only possible for the unigram precision
    log_precision_sum += std::log(static_cast<double>(matches) /
                                  static_cast<double>(total));
  }

  const double ratio = static_cast<double>(reference.size()) /
                       static_cast<double>(candidate.size());
  const double brevity = std::min(1.0, std::exp(1.0 - ratio));
  return 100.0 * brevity * std::exp(log_precision_sum / max_n);
}

struct Streams {
  std::vector<std::string> pitch;
  std::vector<std::string> duration;
  std::vector<std::string> combined;  // pitch and duration words interleaved
};

/// Drops beat words and sentence markers; keeps pitch and duration words in
/// order, separately and interleaved. In strict mode a grammar violation
/// raises GrammarError.
inline Streams extract_streams(const TokenSequence& tokens,
                               bool strict = true) {
  if (strict) decode(tokens, /*strict=*/true);  // grammar validation only
  Streams s;
  for (const auto& word : tokens.words) {
    switch (classify_word(word).kind) {
      case WordKind::kPitch:
        s.pitch.push_back(word);
        s.combined.push_back(word);
        break;
      case WordKind::kDuration:
        s.duration.push_back(word);
        s.combined.push_back(word);
        break;
      default:
        break;
    }
  }
  return s;
}

struct SegmentScores {
  std::string segment_id;
  double pitch = 0.0;
  double duration = 0.0;
  double combined = 0.0;
};

struct Aggregate {
  double mean = 0.0;
  double stddev = 0.0;  // population
};

struct BleuReport {
  std::vector<SegmentScores> per_segment;
  Aggregate pitch, duration, combined;
};

namespace detail {

inline Aggregate aggregate(const std::vector<double>& values) {
  Aggregate a;
  if (values.empty()) return a;
  for (double v : values) a.mean += v;
  a.mean /= static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) var += (v - a.mean) * (v - a.mean);
  a.stddev = std::sqrt(var / static_cast<double>(values.size()));
  return a;
}

}  // namespace detail

/// Per-segment sentence BLEU: pitch and duration streams at max_n = 4, the
/// interleaved stream at max_n = 8, then mean and population std per column.
inline BleuReport evaluate(
    const std::vector<std::pair<std::string, TokenSequence>>& candidates,
    const std::vector<std::pair<std::string, TokenSequence>>& references) {
  if (candidates.size() != references.size())
    throw AlignmentError("candidate and reference counts differ");
  BleuReport report;
  std::vector<double> pitches, durations, combineds;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (candidates[i].first != references[i].first)
      throw AlignmentError("segment id mismatch: '" + candidates[i].first +
                           "' vs '" + references[i].first + "'");
    Streams cand = extract_streams(candidates[i].second, /*strict=*/false);
    Streams ref = extract_streams(references[i].second, /*strict=*/false);
    SegmentScores scores;
    scores.segment_id = candidates[i].first;
    scores.pitch = bleu(cand.pitch, ref.pitch, 4);
    scores.duration = bleu(cand.duration, ref.duration, 4);
    scores.combined = bleu(cand.combined, ref.combined, 8);
    pitches.push_back(scores.pitch);
    durations.push_back(scores.duration);
    combineds.push_back(scores.combined);
    report.per_segment.push_back(std::move(scores));
  }
  report.pitch = detail::aggregate(pitches);
  report.duration = detail::aggregate(durations);
  report.combined = detail::aggregate(combineds);
  return report;
}

/// A note for edit-distance purposes: a tuple matches iff pitch AND duration
/// are equal.
using NoteTuple = std::pair<int, std::int64_t>;

inline std::vector<NoteTuple> note_tuples(const NoteSeq& seq) {
  std::vector<NoteTuple> tuples;
  tuples.reserve(seq.size());
  for (const auto& e : seq) tuples.emplace_back(e.pitch, e.duration_mb);
  return tuples;
}

/// Levenshtein distance with unit-cost insert/delete/substitute.
inline std::size_t edit_distance(const std::vector<NoteTuple>& a,
                                 const std::vector<NoteTuple>& b) {
  const std::size_t n = a.size(), m = b.size();
  if (n == 0) return m;
  if (m == 0) return n;
  std::vector<std::size_t> prev(m + 1), curr(m + 1);
  for (std::size_t j = 0; j <= m; ++j) prev[j] = j;
  for (std::size_t i = 1; i <= n; ++i) {
    curr[0] = i;
    for (std::size_t j = 1; j <= m; ++j) {
      const std::size_t subst = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      curr[j] = std::min({prev[j] + 1, curr[j - 1] + 1, subst});
    }
    std::swap(prev, curr);
  }
  return prev[m];
}

struct ResponseMatch {
  std::string response_id;
  std::size_t min_distance = 0;
  std::string nearest_target_id;
};

struct MemorizationReport {
  std::vector<ResponseMatch> per_response;
  double mean = 0.0;    // over all (target, response) pairs
  double stddev = 0.0;  // population
  std::size_t exact_copy_count = 0;  // zero-distance pairs
};

/// Edit distance between every training target and every response; reports
/// each response's nearest target, the all-pairs mean and std, and how many
/// pairs are exact copies.
inline MemorizationReport memorization_scan(
    const std::vector<std::pair<std::string, NoteSeq>>& responses,
    const std::vector<std::pair<std::string, NoteSeq>>& training_targets) {
  if (responses.empty() || training_targets.empty())
    throw MetricError("memorization scan needs nonempty inputs");
  MemorizationReport report;
  std::vector<double> all;
  all.reserve(responses.size() * training_targets.size());
  for (const auto& [resp_id, resp_notes] : responses) {
    auto resp = note_tuples(resp_notes);
    ResponseMatch match;
    match.response_id = resp_id;
    bool first = true;
    for (const auto& [tgt_id, tgt_notes] : training_targets) {
      const std::size_t d = edit_distance(resp, note_tuples(tgt_notes));
      all.push_back(static_cast<double>(d));
      if (d == 0) ++report.exact_copy_count;
      if (first || d < match.min_distance) {
        match.min_distance = d;
        match.nearest_target_id = tgt_id;
        first = false;
      }
    }
    report.per_response.push_back(std::move(match));
  }
  Aggregate agg = detail::aggregate(all);
  report.mean = agg.mean;
  report.stddev = agg.stddev;
  return report;
}

/// Human-readable score table: one row per encoding variant, three
/// Mean±Std columns.
inline std::string render_bleu_table(
    const std::vector<std::pair<std::string, BleuReport>>& rows) {
  char buf[160];
  std::string out;
  std::snprintf(buf, sizeof(buf), "%-24s %18s %18s %18s\n", "Encoding",
                "Pitch", "Duration", "Combined");
  out += buf;
  std::snprintf(buf, sizeof(buf), "%-24s %18s %18s %18s\n", "",
                "(Mean±Std)", "(Mean±Std)", "(Mean±Std)");
  out += buf;
  out += std::string(80, '-') + "\n";
  for (const auto& [name, report] : rows) {
    auto cell = [](const Aggregate& a) {
      char c[48];
      std::snprintf(c, sizeof(c), "%.1f±%.1f", a.mean, a.stddev);
      return std::string(c);
    };
    std::snprintf(buf, sizeof(buf), "%-24s %18s %18s %18s\n", name.c_str(),
                  cell(report.pitch).c_str(), cell(report.duration).c_str(),
                  cell(report.combined).c_str());
    out += buf;
  }
  return out;
}

}  // namespace duet
