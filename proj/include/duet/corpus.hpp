#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "duet/beats.hpp"
#include "duet/errors.hpp"
#include "duet/midi.hpp"
#include "duet/note.hpp"

namespace duet {

/// Half-open span of constant meter, in milli-beats from piece start.
struct MeterRegion {
  std::int64_t start_mb = 0;
  std::int64_t end_mb = std::numeric_limits<std::int64_t>::max();
  Meter meter;
};

inline std::vector<MeterRegion> piece_meter_regions(const MidiPiece& piece) {
  std::vector<MeterRegion> regions;
  for (std::size_t i = 0; i < piece.time_signatures.size(); ++i) {
    const auto& ts = piece.time_signatures[i];
    MeterRegion region;
    region.start_mb = ticks_to_millibeats(ts.onset_tick, piece.ppq);
    region.end_mb = i + 1 < piece.time_signatures.size()
                        ? ticks_to_millibeats(
                              piece.time_signatures[i + 1].onset_tick,
                              piece.ppq)
                        : std::numeric_limits<std::int64_t>::max();
    region.meter = Meter{ts.numerator, ts.denominator};
    if (region.end_mb > region.start_mb) regions.push_back(region);
  }
  return regions;
}

struct TrackPair {
  std::string piece_id;
  std::string pair_id;  // "<piece_id>:<src_track>-<tgt_track>"
  NoteSeq source;
  NoteSeq target;
  std::vector<MeterRegion> meters;
};

struct SegmentPair {
  std::string pair_id;
  int segment_index = 0;
  NoteSeq source;  // onsets relative to segment start, gapless
  NoteSeq target;
  int bars = 4;
  Meter meter;
  int transposition = 0;  // semitones, in [-5, +6]
};

struct MonophonizeOptions {
  /// Reject the track when more than this fraction of note onsets sound
  /// together with a non-octave-related pitch.
  double polyphony_threshold = 0.2;
};

/// Reduces a track to a single voice: where notes overlap the highest pitch
/// wins and lower ones are truncated or dropped, gaps become rests. Returns
/// nullopt (Rejected) when the track is too polyphonic to flatten honestly.
inline std::optional<NoteSeq> monophonize(
    const RawTrack& track, int ppq,
    const MonophonizeOptions& options = MonophonizeOptions{}) {
  const auto& events = track.events;
  if (!events.empty()) {
    std::size_t clashing = 0;
    std::vector<bool> marked(events.size(), false);
    for (std::size_t i = 0; i < events.size(); ++i) {
      for (std::size_t j = i + 1;
           j < events.size() && events[j].onset_tick < events[i].off_tick;
           ++j) {
        if ((events[i].pitch - events[j].pitch) % 12 != 0) {
          marked[i] = true;
          marked[j] = true;
        }
      }
    }
    for (bool m : marked) clashing += m ? 1 : 0;
    if (static_cast<double>(clashing) / static_cast<double>(events.size()) >
        options.polyphony_threshold)
      return std::nullopt;
  }

  // Skyline pass in tick domain: events arrive sorted by onset with ties on
  // descending pitch, so a same-onset lower note loses immediately.
  std::vector<RawNote> kept;
  for (const auto& ev : events) {
    if (ev.off_tick <= ev.onset_tick) continue;
    if (kept.empty() || ev.onset_tick >= kept.back().off_tick) {
      kept.push_back(ev);
      continue;
    }
    if (ev.pitch > kept.back().pitch) {
      kept.back().off_tick = ev.onset_tick;
      if (kept.back().off_tick <= kept.back().onset_tick) kept.pop_back();
      kept.push_back(ev);
    }
    // lower or equal pitch inside the current note: dropped
  }

  NoteSeq out;
  std::int64_t cursor = 0;
  for (const auto& ev : kept) {
    std::int64_t on = ticks_to_millibeats(ev.onset_tick, ppq);
    std::int64_t off = ticks_to_millibeats(ev.off_tick, ppq);
    if (off <= on) continue;
    if (on < cursor) on = cursor;  // 1-tick rounding overlap
    if (off <= on) continue;
    if (on > cursor) out.push_back(NoteEvent::rest(on - cursor, cursor));
    out.push_back(NoteEvent::note(ev.pitch, off - on, on));
    cursor = off;
  }
  return out;
}

/// All C(k,2) source/target combinations, source = lower track index.
inline std::vector<TrackPair> enumerate_pairs(
    const std::string& piece_id, const std::vector<NoteSeq>& tracks,
    const std::vector<MeterRegion>& meters) {
  if (tracks.size() < 2)
    throw EmptyResult("piece '" + piece_id + "' has fewer than 2 tracks");
  std::vector<TrackPair> pairs;
  for (std::size_t i = 0; i < tracks.size(); ++i) {
    for (std::size_t j = i + 1; j < tracks.size(); ++j) {
      TrackPair pair;
      pair.piece_id = piece_id;
      pair.pair_id =
          piece_id + ":" + std::to_string(i) + "-" + std::to_string(j);
      pair.source = tracks[i];
      pair.target = tracks[j];
      pair.meters = meters;
      pairs.push_back(std::move(pair));
    }
  }
  return pairs;
}

namespace detail {

/// Clips a gapless sequence to [start, end), rebases onsets to the window
/// start, and restores a leading rest if the window opens inside an event.
inline NoteSeq clip_to_window(const NoteSeq& seq, std::int64_t start,
                              std::int64_t end) {
  NoteSeq out;
  std::int64_t cursor = 0;
  auto push_rest = [&](std::int64_t off) {
    if (!out.empty() && out.back().is_rest())
      out.back().duration_mb = off - out.back().onset_mb;
    else
      out.push_back(NoteEvent::rest(off - cursor, cursor));
    cursor = off;
  };
  for (const auto& e : seq) {
    if (e.onset_mb >= end) break;
    if (e.onset_mb < start) continue;
    std::int64_t on = e.onset_mb - start;
    std::int64_t off = std::min(e.onset_mb + e.duration_mb, end) - start;
    if (off <= on) continue;
    if (on > cursor) push_rest(on);
    if (e.is_rest()) {
      push_rest(off);
    } else {
      out.push_back(NoteEvent::note(e.pitch, off - on, on));
      cursor = off;
    }
  }
  return out;
}

inline std::int64_t content_end(const NoteSeq& seq) {
  std::int64_t end = 0;
  for (const auto& e : seq) end = std::max(end, e.onset_mb + e.duration_mb);
  return end;
}

}  // namespace detail

/// Consecutive non-overlapping four-measure windows aligned to measure
/// boundaries. Notes crossing a window's end are truncated there; a trailing
/// window not covered by four full measures of music is dropped. Meter
/// changes restart the window grid, so every segment has a single meter.
inline std::vector<SegmentPair> segment(const TrackPair& pair,
                                        int bars_per_segment = 4) {
  std::vector<SegmentPair> segments;
  const std::int64_t piece_end = std::max(detail::content_end(pair.source),
                                          detail::content_end(pair.target));
  int index = 0;
  for (const auto& region : pair.meters) {
    const std::int64_t window = bars_per_segment * region.meter.measure_millibeats();
    const std::int64_t region_end = std::min(region.end_mb, piece_end);
    for (std::int64_t start = region.start_mb; start + window <= region_end;
         start += window) {
      SegmentPair seg;
      seg.pair_id = pair.pair_id;
      seg.segment_index = index++;
      seg.bars = bars_per_segment;
      seg.meter = region.meter;
      seg.source = detail::clip_to_window(pair.source, start, start + window);
      seg.target = detail::clip_to_window(pair.target, start, start + window);
      segments.push_back(std::move(seg));
    }
  }
  return segments;
}

/// Keeps segments where both parts have at least `min_notes` sounding notes.
inline std::vector<SegmentPair> filter_segments(
    const std::vector<SegmentPair>& segments, std::size_t min_notes = 10) {
  std::vector<SegmentPair> kept;
  for (const auto& seg : segments) {
    if (note_count(seg.source) >= min_notes &&
        note_count(seg.target) >= min_notes)
      kept.push_back(seg);
  }
  return kept;
}

namespace detail {

inline void shift_pitches(NoteSeq& seq, int semitones) {
  for (auto& e : seq)
    if (!e.is_rest()) e.pitch += semitones;
}

inline std::pair<int, int> pitch_extent(const SegmentPair& seg) {
  int lo = 127, hi = 0;
  for (const NoteSeq* part : {&seg.source, &seg.target}) {
    for (const auto& e : *part) {
      if (e.is_rest()) continue;
      lo = std::min(lo, e.pitch);
      hi = std::max(hi, e.pitch);
    }
  }
  return {lo, hi};
}

}  // namespace detail

/// Replicates every segment at the 12 chromatic shifts in [-5, +6], both
/// parts moved together. A shift that leaves the MIDI range is pulled back
/// by whole octaves applied to the whole segment.
inline std::vector<SegmentPair> transpose_augment(
    const std::vector<SegmentPair>& segments) {
  std::vector<SegmentPair> out;
  out.reserve(segments.size() * 12);
  for (const auto& seg : segments) {
    for (int t = -5; t <= 6; ++t) {
      SegmentPair shifted = seg;
      shifted.transposition = t;
      detail::shift_pitches(shifted.source, t);
      detail::shift_pitches(shifted.target, t);
      auto [lo, hi] = detail::pitch_extent(shifted);
      int octave = 0;
      while (hi + octave > 127) octave -= 12;
      while (lo + octave < 0) octave += 12;
      if (octave != 0) {
        detail::shift_pitches(shifted.source, octave);
        detail::shift_pitches(shifted.target, octave);
      }
      out.push_back(std::move(shifted));
    }
  }
  return out;
}

/// Split key that ignores pair direction, so a pair and its swap (from
/// --both-directions) always land on the same side.
inline std::string split_group_key(const std::string& pair_id) {
  auto colon = pair_id.rfind(':');
  auto dash = pair_id.find('-', colon == std::string::npos ? 0 : colon);
  if (colon == std::string::npos || dash == std::string::npos) return pair_id;
  std::string a = pair_id.substr(colon + 1, dash - colon - 1);
  std::string b = pair_id.substr(dash + 1);
  if (std::stoi(a) > std::stoi(b)) std::swap(a, b);
  return pair_id.substr(0, colon + 1) + a + "-" + b;
}

struct SplitResult {
  std::vector<SegmentPair> train;
  std::vector<SegmentPair> validation;
};

/// Partitions segments by track-pair group: whole pairs are drawn into the
/// validation side until it holds about val_fraction of all segments. The
/// input order is preserved within each side; same seed, same split.
inline SplitResult split(const std::vector<SegmentPair>& segments,
                         double val_fraction, std::uint64_t seed) {
  if (!(val_fraction > 0.0 && val_fraction < 1.0) && val_fraction != 0.0)
    throw Error("val_fraction must be in [0, 1)");

  std::vector<std::string> keys;
  std::vector<std::size_t> key_segments;  // parallel to keys
  for (const auto& seg : segments) {
    std::string key = split_group_key(seg.pair_id);
    auto it = std::find(keys.begin(), keys.end(), key);
    if (it == keys.end()) {
      keys.push_back(key);
      key_segments.push_back(1);
    } else {
      ++key_segments[static_cast<std::size_t>(it - keys.begin())];
    }
  }

  std::vector<std::size_t> order(keys.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  const auto target = static_cast<std::size_t>(
      std::llround(val_fraction * static_cast<double>(segments.size())));
  std::vector<bool> in_val(keys.size(), false);
  std::size_t val_count = 0, val_keys = 0;
  for (std::size_t idx : order) {
    if (val_count >= target) break;
    if (val_keys + 1 >= keys.size()) break;  // never empty the train side
    in_val[idx] = true;
    val_count += key_segments[idx];
    ++val_keys;
  }

  SplitResult result;
  for (const auto& seg : segments) {
    std::string key = split_group_key(seg.pair_id);
    auto it = std::find(keys.begin(), keys.end(), key);
    if (in_val[static_cast<std::size_t>(it - keys.begin())])
      result.validation.push_back(seg);
    else
      result.train.push_back(seg);
  }
  return result;
}

}  // namespace duet
