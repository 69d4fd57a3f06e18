#pragma once

#include <cstdint>
#include <vector>

#include "duet/beats.hpp"

namespace duet {

/// Pitch sentinel for rests.
constexpr int kRest = -1;

/// One monophonic note or rest. Times are in milli-beats (see beats.hpp);
/// onset is relative to the containing sequence's start.
struct NoteEvent {
  int pitch = kRest;  // 0..127, or kRest
  std::int64_t duration_mb = 0;
  std::int64_t onset_mb = 0;

  bool is_rest() const { return pitch == kRest; }
  double duration_beats() const { return from_millibeats(duration_mb); }
  double onset_beats() const { return from_millibeats(onset_mb); }

  static NoteEvent note(int pitch, std::int64_t duration_mb,
                        std::int64_t onset_mb) {
    return NoteEvent{pitch, duration_mb, onset_mb};
  }
  static NoteEvent rest(std::int64_t duration_mb, std::int64_t onset_mb) {
    return NoteEvent{kRest, duration_mb, onset_mb};
  }

  bool operator==(const NoteEvent&) const = default;
};

using NoteSeq = std::vector<NoteEvent>;

/// Number of sounding (non-rest) notes.
inline std::size_t note_count(const NoteSeq& seq) {
  std::size_t n = 0;
  for (const auto& e : seq)
    if (!e.is_rest()) ++n;
  return n;
}

/// True when every event follows the previous one with no gap or overlap,
/// so onsets equal cumulative duration sums. Corpus segments are built this
/// way; the tokenizer round-trip relies on it.
inline bool is_gapless(const NoteSeq& seq) {
  std::int64_t t = seq.empty() ? 0 : seq.front().onset_mb;
  for (const auto& e : seq) {
    if (e.onset_mb != t || e.duration_mb <= 0) return false;
    t += e.duration_mb;
  }
  return seq.empty() || seq.front().onset_mb == 0;
}

}  // namespace duet
