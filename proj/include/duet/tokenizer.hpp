#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "duet/beats.hpp"
#include "duet/errors.hpp"
#include "duet/note.hpp"

namespace duet {

enum class Variant { kBeatPosition, kModBeatPosition, kNone };

inline std::string variant_name(Variant v) {
  switch (v) {
    case Variant::kBeatPosition:
      return "beat-position";
    case Variant::kModBeatPosition:
      return "mod-beat-position";
    case Variant::kNone:
      return "none";
  }
  return "none";
}

/// Accepts both the full names and the CLI short forms beat|mod-beat|none.
inline std::optional<Variant> parse_variant(const std::string& name) {
  if (name == "beat-position" || name == "beat") return Variant::kBeatPosition;
  if (name == "mod-beat-position" || name == "mod-beat")
    return Variant::kModBeatPosition;
  if (name == "none") return Variant::kNone;
  return std::nullopt;
}

// Special words occupy vocabulary ids 0..3 in this order.
inline const std::string kBosWord = "<s>";
inline const std::string kEosWord = "</s>";
inline const std::string kUnkWord = "<unk>";
inline const std::string kPadWord = "<pad>";
constexpr int kBosId = 0;
constexpr int kEosId = 1;
constexpr int kUnkId = 2;
constexpr int kPadId = 3;

enum class WordKind { kPitch, kDuration, kBeat, kBos, kEos, kUnk, kPad, kBad };

struct WordInfo {
  WordKind kind = WordKind::kBad;
  // Pitch for kPitch (kRest for "PR"); milli-beats for kDuration/kBeat.
  std::int64_t value = 0;
};

namespace detail {

inline bool parse_fixed3(const std::string& s, std::int64_t& mb) {
  auto dot = s.find('.');
  if (dot == std::string::npos || dot == 0 || s.size() - dot - 1 != 3)
    return false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i == dot) continue;
    if (s[i] < '0' || s[i] > '9') return false;
  }
  mb = std::stoll(s.substr(0, dot)) * 1000 + std::stoll(s.substr(dot + 1));
  return true;
}

}  // namespace detail

inline WordInfo classify_word(const std::string& word) {
  if (word == kBosWord) return {WordKind::kBos, 0};
  if (word == kEosWord) return {WordKind::kEos, 0};
  if (word == kUnkWord) return {WordKind::kUnk, 0};
  if (word == kPadWord) return {WordKind::kPad, 0};
  if (word.size() >= 2 && word[0] == 'P') {
    if (word == "PR") return {WordKind::kPitch, kRest};
    std::int64_t pitch = 0;
    for (std::size_t i = 1; i < word.size(); ++i) {
      if (word[i] < '0' || word[i] > '9') return {WordKind::kBad, 0};
      pitch = pitch * 10 + (word[i] - '0');
      if (pitch > 127) return {WordKind::kBad, 0};
    }
    return {WordKind::kPitch, pitch};
  }
  if (word.size() >= 2 && (word[0] == 'D' || word[0] == 'B')) {
    std::int64_t mb = 0;
    if (!detail::parse_fixed3(word.substr(1), mb)) return {WordKind::kBad, 0};
    return {word[0] == 'D' ? WordKind::kDuration : WordKind::kBeat, mb};
  }
  return {WordKind::kBad, 0};
}

inline std::string pitch_word(int pitch) {
  return pitch == kRest ? "PR" : "P" + std::to_string(pitch);
}
inline std::string duration_word(std::int64_t mb) {
  return "D" + format_millibeats(mb);
}
inline std::string beat_word(std::int64_t mb) {
  return "B" + format_millibeats(mb);
}

struct TokenSequence {
  std::vector<std::string> words;
  Variant variant = Variant::kNone;
  Meter meter;
};

/// Three words per note — pitch, duration, and (except for Variant::kNone) a
/// beat position measured from the segment start or, for mod-beat-position,
/// within the current measure.
inline TokenSequence encode(const NoteSeq& notes, Variant variant,
                            Meter meter) {
  TokenSequence seq;
  seq.variant = variant;
  seq.meter = meter;
  seq.words.push_back(kBosWord);
  const std::int64_t measure = meter.measure_millibeats();
  for (const auto& e : notes) {
    if (e.onset_mb < 0)
      throw EncodingError("negative onset " + format_millibeats(e.onset_mb));
    if (e.duration_mb <= 0)
      throw EncodingError("non-positive duration " +
                          format_millibeats(e.duration_mb));
    seq.words.push_back(pitch_word(e.pitch));
    seq.words.push_back(duration_word(e.duration_mb));
    switch (variant) {
      case Variant::kBeatPosition:
        seq.words.push_back(beat_word(e.onset_mb));
        break;
      case Variant::kModBeatPosition:
        seq.words.push_back(beat_word(e.onset_mb % measure));
        break;
      case Variant::kNone:
        break;
    }
  }
  seq.words.push_back(kEosWord);
  return seq;
}

struct DecodeResult {
  NoteSeq notes;
  std::size_t skipped = 0;  // out-of-order words dropped in lenient mode
};

/// Rebuilds notes from the pitch and duration words; onsets are cumulative
/// duration sums and beat words are ignored (see validate_beats). In strict
/// mode any word out of grammar position raises GrammarError.
inline DecodeResult decode(const TokenSequence& tokens, bool strict = true) {
  DecodeResult result;
  std::int64_t onset = 0;
  // expected word class: 0 = pitch (or eos), 1 = duration, 2 = beat
  int state = 0;
  int pending_pitch = 0;
  std::int64_t pending_duration = 0;
  bool closed = false;
  const bool has_beats = tokens.variant != Variant::kNone;

  auto fail = [&](const std::string& what, std::size_t i) {
    if (strict) throw GrammarError(what, i);
    ++result.skipped;
  };

  std::size_t start = 0;
  if (!tokens.words.empty() &&
      classify_word(tokens.words[0]).kind == WordKind::kBos) {
    start = 1;
  } else {
    fail("expected <s>", 0);  // lenient mode carries on from index 0
  }

  for (std::size_t i = start; i < tokens.words.size(); ++i) {
    const WordInfo info = classify_word(tokens.words[i]);
    if (closed) {
      fail("word after </s>", i);
      continue;
    }
    switch (info.kind) {
      case WordKind::kPitch:
        if (state != 0) {
          fail("unexpected pitch word", i);
          break;
        }
        pending_pitch = static_cast<int>(info.value);
        state = 1;
        break;
      case WordKind::kDuration:
        if (state != 1) {
          fail("unexpected duration word", i);
          break;
        }
        if (info.value <= 0) {
          fail("non-positive duration word", i);
          state = 0;
          break;
        }
        pending_duration = info.value;
        if (has_beats) {
          state = 2;
        } else {
          result.notes.push_back(
              NoteEvent{pending_pitch, pending_duration, onset});
          onset += pending_duration;
          state = 0;
        }
        break;
      case WordKind::kBeat:
        if (state != 2) {
          fail("unexpected beat word", i);
          break;
        }
        result.notes.push_back(
            NoteEvent{pending_pitch, pending_duration, onset});
        onset += pending_duration;
        state = 0;
        break;
      case WordKind::kEos:
        if (state != 0) {
          fail("incomplete note before </s>", i);
          state = 0;
        }
        closed = true;
        break;
      case WordKind::kBos:
        fail("repeated <s>", i);
        break;
      default:
        fail("unknown word '" + tokens.words[i] + "'", i);
        break;
    }
  }
  if (!closed) fail("missing </s>", tokens.words.size());
  if (state != 0) fail("incomplete trailing note", tokens.words.size());
  return result;
}

struct BeatViolation {
  std::size_t token_index;
  std::int64_t expected_mb;
  std::int64_t found_mb;
};

struct BeatReport {
  std::vector<BeatViolation> violations;
  bool ok() const { return violations.empty(); }
};

/// Checks each emitted beat word against the position implied by the
/// cumulative durations (mod measure length for mod-beat-position).
inline BeatReport validate_beats(const TokenSequence& tokens) {
  if (tokens.variant == Variant::kNone)
    throw Error("validate_beats needs a beat-carrying variant");
  BeatReport report;
  const std::int64_t measure = tokens.meter.measure_millibeats();
  std::int64_t onset = 0;
  std::int64_t pending_duration = 0;
  for (std::size_t i = 0; i < tokens.words.size(); ++i) {
    const WordInfo info = classify_word(tokens.words[i]);
    if (info.kind == WordKind::kDuration) {
      pending_duration = info.value;
    } else if (info.kind == WordKind::kBeat) {
      std::int64_t expected = tokens.variant == Variant::kModBeatPosition
                                  ? onset % measure
                                  : onset;
      if (info.value != expected)
        report.violations.push_back(BeatViolation{i, expected, info.value});
      onset += pending_duration;
      pending_duration = 0;
    }
  }
  return report;
}

class Vocabulary {
 public:
  Vocabulary() = default;

  /// Specials first, then pitch words (PR last), duration words, beat words,
  /// each group in ascending numeric order. Deterministic for a given set.
  static Vocabulary from_words(const std::set<std::string>& observed) {
    std::vector<std::pair<std::int64_t, std::string>> pitches, durations,
        beats;
    for (const auto& w : observed) {
      WordInfo info = classify_word(w);
      switch (info.kind) {
        case WordKind::kPitch:
          // PR sorts after all numeric pitch words
          pitches.emplace_back(info.value == kRest ? 1000 : info.value, w);
          break;
        case WordKind::kDuration:
          durations.emplace_back(info.value, w);
          break;
        case WordKind::kBeat:
          beats.emplace_back(info.value, w);
          break;
        default:
          break;  // specials are implicit; malformed words never enter
      }
    }
    std::sort(pitches.begin(), pitches.end());
    std::sort(durations.begin(), durations.end());
    std::sort(beats.begin(), beats.end());

    Vocabulary v;
    v.append(kBosWord);
    v.append(kEosWord);
    v.append(kUnkWord);
    v.append(kPadWord);
    for (const auto& [_, w] : pitches) v.append(w);
    for (const auto& [_, w] : durations) v.append(w);
    for (const auto& [_, w] : beats) v.append(w);
    return v;
  }

  static Vocabulary from_lines(const std::vector<std::string>& lines) {
    Vocabulary v;
    for (const auto& w : lines) v.append(w);
    if (v.size() < 4 || v.words_[0] != kBosWord || v.words_[1] != kEosWord ||
        v.words_[2] != kUnkWord || v.words_[3] != kPadWord)
      throw Error("vocabulary file does not start with the special words");
    return v;
  }

  int size() const { return static_cast<int>(words_.size()); }
  const std::string& word(int id) const { return words_.at(id); }
  const std::vector<std::string>& words() const { return words_; }

  std::optional<int> find(const std::string& word) const {
    auto it = index_.find(word);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }
  int id_or_unk(const std::string& word) const {
    auto it = index_.find(word);
    return it == index_.end() ? kUnkId : it->second;
  }

  bool operator==(const Vocabulary& other) const {
    return words_ == other.words_;
  }

 private:
  void append(const std::string& word) {
    index_[word] = static_cast<int>(words_.size());
    words_.push_back(word);
  }

  std::vector<std::string> words_;
  std::unordered_map<std::string, int> index_;
};

template <typename Range>
Vocabulary build_vocabulary(const Range& corpus) {
  std::set<std::string> observed;
  for (const auto& seq : corpus)
    for (const auto& w : seq.words)
      if (classify_word(w).kind != WordKind::kBad) observed.insert(w);
  return Vocabulary::from_words(observed);
}

struct IdSequence {
  std::vector<int> ids;
  std::size_t unknown = 0;  // words that mapped to <unk>
};

inline IdSequence to_ids(const std::vector<std::string>& words,
                         const Vocabulary& vocab) {
  IdSequence out;
  out.ids.reserve(words.size());
  for (const auto& w : words) {
    int id = vocab.id_or_unk(w);
    if (id == kUnkId && w != kUnkWord) ++out.unknown;
    out.ids.push_back(id);
  }
  return out;
}

inline std::vector<std::string> from_ids(const std::vector<int>& ids,
                                         const Vocabulary& vocab) {
  std::vector<std::string> words;
  words.reserve(ids.size());
  for (int id : ids) words.push_back(vocab.word(id));
  return words;
}

}  // namespace duet
