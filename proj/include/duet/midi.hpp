#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "duet/beats.hpp"
#include "duet/errors.hpp"
#include "duet/note.hpp"

namespace duet {

struct RawNote {
  std::int64_t onset_tick = 0;
  std::int64_t off_tick = 0;
  int pitch = 0;     // 0..127
  int velocity = 0;  // 1..127

  bool operator==(const RawNote&) const = default;
};

struct RawTrack {
  std::vector<RawNote> events;  // sorted by onset, ties by descending pitch
  int channel = 0;
  std::string name;
};

struct TimeSignature {
  std::int64_t onset_tick = 0;
  int numerator = 4;
  int denominator = 4;

  bool operator==(const TimeSignature&) const = default;
};

struct MidiPiece {
  std::vector<RawTrack> tracks;
  int ppq = 480;
  std::vector<TimeSignature> time_signatures;  // sorted, first at tick 0
  std::string name;
};

namespace detail {

class ByteReader {
 public:
  ByteReader(std::span<const std::uint8_t> data, std::size_t pos)
      : data_(data), pos_(pos) {}

  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return data_.size() - pos_; }

  std::uint8_t u8() {
    require(1, "unexpected end of data");
    return data_[pos_++];
  }
  std::uint8_t peek() const {
    if (pos_ >= data_.size())
      throw TruncationError("unexpected end of data", pos_);
    return data_[pos_];
  }
  std::uint16_t u16() {
    require(2, "unexpected end of data");
    std::uint16_t v = (std::uint16_t(data_[pos_]) << 8) | data_[pos_ + 1];
    pos_ += 2;
    return v;
  }
  std::uint32_t u32() {
    require(4, "unexpected end of data");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v = (v << 8) | data_[pos_ + i];
    pos_ += 4;
    return v;
  }
  /// SMF variable-length quantity, at most 4 bytes.
  std::uint32_t varint() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      std::uint8_t b = u8();
      v = (v << 7) | (b & 0x7F);
      if (!(b & 0x80)) return v;
    }
    throw EventError("variable-length quantity longer than 4 bytes", pos_);
  }
  void skip(std::size_t n, const char* what) {
    require(n, what);
    pos_ += n;
  }

 private:
  void require(std::size_t n, const char* what) const {
    if (remaining() < n) throw TruncationError(what, pos_);
  }

  std::span<const std::uint8_t> data_;
  std::size_t pos_;
};

struct OpenNote {
  std::int64_t onset_tick = 0;
  int velocity = 0;
  int nesting = 0;  // overlapping same-pitch note-ons merge into one span
};

inline void sort_events(std::vector<RawNote>& events) {
  std::stable_sort(events.begin(), events.end(),
                   [](const RawNote& a, const RawNote& b) {
                     if (a.onset_tick != b.onset_tick)
                       return a.onset_tick < b.onset_tick;
                     return a.pitch > b.pitch;
                   });
}

inline RawTrack parse_track(ByteReader& r, std::size_t chunk_end,
                            std::vector<TimeSignature>& signatures) {
  RawTrack track;
  track.channel = -1;
  std::int64_t tick = 0;
  int running_status = -1;
  std::map<std::pair<int, int>, OpenNote> open;  // (channel, pitch)

  auto close_note = [&](int channel, int pitch, std::int64_t off_tick) {
    auto it = open.find({channel, pitch});
    if (it == open.end()) return;  // stray note-off, ignored
    if (--it->second.nesting > 0) return;
    if (off_tick > it->second.onset_tick) {
      track.events.push_back(RawNote{it->second.onset_tick, off_tick, pitch,
                                     it->second.velocity});
    }
    open.erase(it);
  };

  while (r.pos() < chunk_end) {
    tick += r.varint();
    std::uint8_t first = r.peek();
    int status;
    if (first & 0x80) {
      status = r.u8();
      if (status < 0xF0) running_status = status;
    } else {
      if (running_status < 0)
        throw EventError("data byte with no running status", r.pos());
      status = running_status;
    }

    if (status == 0xFF) {
      running_status = -1;
      std::uint8_t type = r.u8();
      std::uint32_t len = r.varint();
      if (type == 0x58 && len >= 2) {
        std::size_t at = r.pos();
        int numerator = r.u8();
        int dd = r.u8();
        if (numerator <= 0 || dd > 10)
          throw EventError("invalid time signature", at);
        signatures.push_back(TimeSignature{tick, numerator, 1 << dd});
        r.skip(len - 2, "truncated meta event");
      } else if (type == 0x03 && track.name.empty()) {
        for (std::uint32_t i = 0; i < len; ++i)
          track.name.push_back(static_cast<char>(r.u8()));
      } else if (type == 0x2F) {
        r.skip(len, "truncated meta event");
        break;  // end of track
      } else {
        r.skip(len, "truncated meta event");
      }
      continue;
    }
    if (status == 0xF0 || status == 0xF7) {
      running_status = -1;
      std::uint32_t len = r.varint();
      r.skip(len, "truncated sysex event");
      continue;
    }
    if (status < 0x80) throw EventError("invalid status byte", r.pos());

    int kind = status & 0xF0;
    int channel = status & 0x0F;
    switch (kind) {
      case 0x80: {  // note off
        int pitch = r.u8() & 0x7F;
        r.u8();  // release velocity
        close_note(channel, pitch, tick);
        break;
      }
      case 0x90: {  // note on (velocity 0 acts as note off)
        int pitch = r.u8() & 0x7F;
        int velocity = r.u8() & 0x7F;
        if (velocity == 0) {
          close_note(channel, pitch, tick);
        } else {
          if (track.channel < 0) track.channel = channel;
          auto& slot = open[{channel, pitch}];
          if (slot.nesting == 0) {
            slot.onset_tick = tick;
            slot.velocity = velocity;
          }
          ++slot.nesting;  // same-pitch overlaps merge: earliest on, last off
        }
        break;
      }
      case 0xA0:  // polyphonic aftertouch
      case 0xB0:  // controller
      case 0xE0:  // pitch bend
        r.u8();
        r.u8();
        break;
      case 0xC0:  // program change
      case 0xD0:  // channel aftertouch
        r.u8();
        break;
      default:
        throw EventError("unsupported status byte", r.pos());
    }
  }

  for (auto& [key, note] : open) {
    if (tick > note.onset_tick)
      track.events.push_back(
          RawNote{note.onset_tick, tick, key.second, note.velocity});
  }
  if (track.channel < 0) track.channel = 0;
  sort_events(track.events);
  return track;
}

}  // namespace detail

/// Parses a Standard MIDI File (format 0 or 1). Timing is kept in ticks;
/// tempo events are ignored. Malformed input raises HeaderError,
/// TruncationError, or EventError, each carrying a byte offset.
inline MidiPiece parse_midi(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes, 0);
  if (r.remaining() < 8 || r.u32() != 0x4D546864)  // "MThd"
    throw HeaderError("missing MThd chunk", 0);
  std::uint32_t header_len = r.u32();
  if (header_len < 6) throw HeaderError("header chunk too short", r.pos());
  std::uint16_t format = r.u16();
  if (format > 1) throw HeaderError("unsupported SMF format", r.pos() - 2);
  std::uint16_t ntrks = r.u16();
  std::uint16_t division = r.u16();
  if (division & 0x8000)
    throw HeaderError("SMPTE division not supported", r.pos() - 2);
  if (division == 0) throw HeaderError("zero ticks per quarter", r.pos() - 2);
  r.skip(header_len - 6, "truncated header chunk");

  MidiPiece piece;
  piece.ppq = division;

  for (std::uint16_t t = 0; t < ntrks; ++t) {
    if (r.remaining() == 0)
      throw TruncationError("missing track chunk", r.pos());
    std::uint32_t chunk_type = r.u32();
    std::uint32_t chunk_len = r.u32();
    if (chunk_len > r.remaining())
      throw TruncationError("track chunk length exceeds data", r.pos());
    std::size_t chunk_end = r.pos() + chunk_len;
    if (chunk_type != 0x4D54726B) {  // not "MTrk": skip alien chunk
      r.skip(chunk_len, "truncated chunk");
      --t;
      continue;
    }
    detail::ByteReader track_reader(bytes, r.pos());
    piece.tracks.push_back(
        detail::parse_track(track_reader, chunk_end, piece.time_signatures));
    if (piece.tracks.back().name.empty() == false && piece.name.empty())
      piece.name = piece.tracks.back().name;
    r.skip(chunk_len, "truncated track chunk");
  }

  std::sort(piece.time_signatures.begin(), piece.time_signatures.end(),
            [](const TimeSignature& a, const TimeSignature& b) {
              return a.onset_tick < b.onset_tick;
            });
  piece.time_signatures.erase(
      std::unique(piece.time_signatures.begin(), piece.time_signatures.end(),
                  [](const TimeSignature& a, const TimeSignature& b) {
                    return a.onset_tick == b.onset_tick;
                  }),
      piece.time_signatures.end());
  if (piece.time_signatures.empty() ||
      piece.time_signatures.front().onset_tick != 0)
    piece.time_signatures.insert(piece.time_signatures.begin(),
                                 TimeSignature{0, 4, 4});
  return piece;
}

inline MidiPiece parse_midi(const std::vector<std::uint8_t>& bytes) {
  return parse_midi(std::span<const std::uint8_t>(bytes));
}

/// Converts one already-monophonic track to beat-domain note events, filling
/// gaps (including a leading gap) with rests. Zero-duration notes after
/// rounding are dropped.
inline NoteSeq track_to_note_events(const RawTrack& track, int ppq) {
  NoteSeq out;
  std::int64_t cursor = 0;  // milli-beats
  for (const auto& ev : track.events) {
    std::int64_t on = ticks_to_millibeats(ev.onset_tick, ppq);
    std::int64_t off = ticks_to_millibeats(ev.off_tick, ppq);
    if (off <= on) continue;
    if (on < cursor)
      throw Error("track is not monophonic at tick " +
                  std::to_string(ev.onset_tick));
    if (on > cursor) out.push_back(NoteEvent::rest(on - cursor, cursor));
    out.push_back(NoteEvent::note(ev.pitch, off - on, on));
    cursor = off;
  }
  return out;
}

namespace detail {

class ByteWriter {
 public:
  void u8(std::uint8_t v) { bytes.push_back(v); }
  void u16(std::uint16_t v) {
    u8(v >> 8);
    u8(v & 0xFF);
  }
  void u32(std::uint32_t v) {
    u16(v >> 16);
    u16(v & 0xFFFF);
  }
  void varint(std::uint32_t v) {
    std::uint8_t stack[5];
    int n = 0;
    do {
      stack[n++] = v & 0x7F;
      v >>= 7;
    } while (v);
    while (n > 1) u8(stack[--n] | 0x80);
    u8(stack[0]);
  }
  void raw(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    bytes.insert(bytes.end(), p, p + n);
  }

  std::vector<std::uint8_t> bytes;
};

struct WireEvent {
  std::int64_t tick;
  int order;  // offs before ons at the same tick
  std::uint8_t status;
  std::uint8_t data1;
  std::uint8_t data2;
};

inline std::int64_t millibeats_to_tick(std::int64_t mb, int ppq) {
  // round(mb/1000 * ppq), half away from zero
  const std::int64_t num = mb * ppq;
  const std::int64_t q = num / 1000;
  const std::int64_t r = num % 1000;
  if (2 * std::llabs(r) >= 1000) return q + (num < 0 ? -1 : 1);
  return q;
}

inline void append_track_events(const NoteSeq& seq, int ppq, int channel,
                                std::vector<WireEvent>& events) {
  for (const auto& e : seq) {
    if (e.duration_mb <= 0)
      throw QuantizationError("non-positive duration in note sequence");
    if (e.is_rest()) continue;
    std::int64_t on = millibeats_to_tick(e.onset_mb, ppq);
    std::int64_t off = millibeats_to_tick(e.onset_mb + e.duration_mb, ppq);
    if (ticks_to_millibeats(on, ppq) != e.onset_mb ||
        ticks_to_millibeats(off, ppq) != e.onset_mb + e.duration_mb)
      throw QuantizationError("beat value " + format_millibeats(e.onset_mb) +
                              "+" + format_millibeats(e.duration_mb) +
                              " not representable at ppq " +
                              std::to_string(ppq));
    if (off <= on)
      throw QuantizationError("duration collapses to zero ticks at ppq " +
                              std::to_string(ppq));
    std::uint8_t ch = static_cast<std::uint8_t>(channel & 0x0F);
    events.push_back(WireEvent{on, 1, static_cast<std::uint8_t>(0x90 | ch),
                               static_cast<std::uint8_t>(e.pitch & 0x7F), 80});
    events.push_back(WireEvent{off, 0, static_cast<std::uint8_t>(0x80 | ch),
                               static_cast<std::uint8_t>(e.pitch & 0x7F), 0});
  }
}

inline void write_track_chunk(ByteWriter& w, std::vector<WireEvent>& events,
                              const Meter* meter) {
  std::stable_sort(events.begin(), events.end(),
                   [](const WireEvent& a, const WireEvent& b) {
                     if (a.tick != b.tick) return a.tick < b.tick;
                     return a.order < b.order;
                   });
  ByteWriter body;
  std::int64_t cursor = 0;
  if (meter != nullptr) {
    int dd = 0;
    while ((1 << dd) < meter->denominator) ++dd;
    body.varint(0);
    body.u8(0xFF);
    body.u8(0x58);
    body.u8(4);
    body.u8(static_cast<std::uint8_t>(meter->numerator));
    body.u8(static_cast<std::uint8_t>(dd));
    body.u8(24);
    body.u8(8);
  }
  for (const auto& ev : events) {
    body.varint(static_cast<std::uint32_t>(ev.tick - cursor));
    cursor = ev.tick;
    body.u8(ev.status);
    body.u8(ev.data1);
    body.u8(ev.data2);
  }
  body.varint(0);
  body.u8(0xFF);
  body.u8(0x2F);
  body.u8(0);

  w.u32(0x4D54726B);  // "MTrk"
  w.u32(static_cast<std::uint32_t>(body.bytes.size()));
  w.raw(body.bytes.data(), body.bytes.size());
}

}  // namespace detail

/// Renders a source/target pair as SMF format 1 with two tracks, no running
/// status, velocity 80. Rests emit no events. Throws QuantizationError when
/// a beat value is not representable at the given ppq.
inline std::vector<std::uint8_t> write_midi(const NoteSeq& source,
                                            const NoteSeq& target,
                                            int ppq = 480,
                                            Meter meter = Meter{4, 4}) {
  detail::ByteWriter w;
  w.u32(0x4D546864);  // "MThd"
  w.u32(6);
  w.u16(1);
  w.u16(2);
  w.u16(static_cast<std::uint16_t>(ppq));

  std::vector<detail::WireEvent> events;
  detail::append_track_events(source, ppq, 0, events);
  detail::write_track_chunk(w, events, &meter);

  events.clear();
  detail::append_track_events(target, ppq, 1, events);
  detail::write_track_chunk(w, events, nullptr);
  return std::move(w.bytes);
}

}  // namespace duet
