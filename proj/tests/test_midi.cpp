#include <catch2/catch_amalgamated.hpp>
#include <cstdint>
#include <random>
#include <vector>

#include "duet/midi.hpp"
#include "support/generators.hpp"

using namespace duet;

namespace {

void push_u32(std::vector<std::uint8_t>& v, std::uint32_t x) {
  v.push_back((x >> 24) & 0xFF);
  v.push_back((x >> 16) & 0xFF);
  v.push_back((x >> 8) & 0xFF);
  v.push_back(x & 0xFF);
}
void push_u16(std::vector<std::uint8_t>& v, std::uint16_t x) {
  v.push_back((x >> 8) & 0xFF);
  v.push_back(x & 0xFF);
}

std::vector<std::uint8_t> smf(int format, int ppq,
                              std::vector<std::vector<std::uint8_t>> tracks) {
  std::vector<std::uint8_t> bytes;
  push_u32(bytes, 0x4D546864);
  push_u32(bytes, 6);
  push_u16(bytes, std::uint16_t(format));
  push_u16(bytes, std::uint16_t(tracks.size()));
  push_u16(bytes, std::uint16_t(ppq));
  for (auto& t : tracks) {
    push_u32(bytes, 0x4D54726B);
    push_u32(bytes, std::uint32_t(t.size()));
    bytes.insert(bytes.end(), t.begin(), t.end());
  }
  return bytes;
}

const std::vector<std::uint8_t> kEot = {0x00, 0xFF, 0x2F, 0x00};

std::vector<std::uint8_t> cat(std::initializer_list<std::vector<std::uint8_t>> parts) {
  std::vector<std::uint8_t> out;
  for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
  return out;
}

}  // namespace

TEST_CASE("single note in a format 0 file") {
  // C4 on at tick 0, off at tick 480
  auto bytes = smf(0, 480,
                   {cat({{0x00, 0x90, 60, 0x40, 0x83, 0x60, 0x80, 60, 0x00},
                         kEot})});
  MidiPiece piece = parse_midi(bytes);
  REQUIRE(piece.tracks.size() == 1);
  REQUIRE(piece.tracks[0].events.size() == 1);
  CHECK(piece.tracks[0].events[0] == RawNote{0, 480, 60, 0x40});
  CHECK(piece.ppq == 480);
}

TEST_CASE("missing time signature defaults to 4/4 at tick 0") {
  auto bytes = smf(0, 480, {kEot});
  MidiPiece piece = parse_midi(bytes);
  REQUIRE(piece.time_signatures.size() == 1);
  CHECK(piece.time_signatures[0] == TimeSignature{0, 4, 4});
}

TEST_CASE("time signature meta event is read") {
  auto bytes = smf(
      0, 480, {cat({{0x00, 0xFF, 0x58, 0x04, 0x06, 0x03, 0x18, 0x08}, kEot})});
  MidiPiece piece = parse_midi(bytes);
  REQUIRE(piece.time_signatures.size() == 1);
  CHECK(piece.time_signatures[0] == TimeSignature{0, 6, 8});
}

TEST_CASE("track chunk length beyond the data is a TruncationError") {
  auto bytes = smf(0, 480, {kEot});
  bytes[bytes.size() - kEot.size() - 1] += 32;  // inflate declared length
  CHECK_THROWS_AS(parse_midi(bytes), TruncationError);
}

TEST_CASE("running status reuses the previous status byte") {
  // two notes, the second on/off without repeated 0x90
  auto track = cat({{0x00, 0x90, 60, 0x40},       // on C4
                    {0x60, 60, 0x00},             // off via vel 0 (running)
                    {0x00, 62, 0x40},             // on D4 (running)
                    {0x60, 62, 0x00},             // off
                    kEot});
  MidiPiece piece = parse_midi(smf(0, 480, {track}));
  REQUIRE(piece.tracks[0].events.size() == 2);
  CHECK(piece.tracks[0].events[0].pitch == 60);
  CHECK(piece.tracks[0].events[1].pitch == 62);
  CHECK(piece.tracks[0].events[1].onset_tick == 96);
}

TEST_CASE("data byte with no prior status is an EventError") {
  auto bytes = smf(0, 480, {cat({{0x00, 60, 0x40}, kEot})});
  CHECK_THROWS_AS(parse_midi(bytes), EventError);
}

TEST_CASE("header problems raise HeaderError") {
  SECTION("wrong magic") {
    std::vector<std::uint8_t> bytes = {'X', 'T', 'h', 'd', 0, 0, 0, 6};
    CHECK_THROWS_AS(parse_midi(bytes), HeaderError);
  }
  SECTION("format 2") {
    CHECK_THROWS_AS(parse_midi(smf(2, 480, {kEot})), HeaderError);
  }
  SECTION("SMPTE division") {
    auto bytes = smf(0, 480, {kEot});
    bytes[12] = 0xE8;  // negative division
    CHECK_THROWS_AS(parse_midi(bytes), HeaderError);
  }
}

TEST_CASE("unmatched note-on is closed at track end") {
  auto bytes = smf(0, 480, {cat({{0x00, 0x90, 60, 0x40},
                                 {0x83, 0x60, 0xFF, 0x2F, 0x00}})});
  MidiPiece piece = parse_midi(bytes);
  REQUIRE(piece.tracks[0].events.size() == 1);
  CHECK(piece.tracks[0].events[0].off_tick == 480);
}

TEST_CASE("overlapping same-pitch notes merge into one span") {
  auto track = cat({{0x00, 0x90, 60, 0x40},   // on at 0
                    {0x60, 0x90, 60, 0x50},   // on again at 96
                    {0x60, 0x80, 60, 0x00},   // first off at 192
                    {0x60, 0x80, 60, 0x00},   // second off at 288
                    kEot});
  MidiPiece piece = parse_midi(smf(0, 480, {track}));
  REQUIRE(piece.tracks[0].events.size() == 1);
  CHECK(piece.tracks[0].events[0] == RawNote{0, 288, 60, 0x40});
}

TEST_CASE("same-onset events sort by descending pitch") {
  auto track = cat({{0x00, 0x90, 60, 0x40},
                    {0x00, 0x90, 72, 0x40},
                    {0x83, 0x60, 0x80, 60, 0x00},
                    {0x00, 0x80, 72, 0x00},
                    kEot});
  MidiPiece piece = parse_midi(smf(0, 480, {track}));
  REQUIRE(piece.tracks[0].events.size() == 2);
  CHECK(piece.tracks[0].events[0].pitch == 72);
  CHECK(piece.tracks[0].events[1].pitch == 60);
}

TEST_CASE("write_midi round-trips the documented examples") {
  SECTION("single note with empty counterpart") {
    NoteSeq source = {NoteEvent::note(60, 1000, 0)};
    auto bytes = write_midi(source, {});
    MidiPiece piece = parse_midi(bytes);
    REQUIRE(piece.tracks.size() == 2);
    CHECK(track_to_note_events(piece.tracks[0], piece.ppq) == source);
    CHECK(piece.tracks[1].events.empty());
  }
  SECTION("rest between notes lands the second note at tick 960") {
    NoteSeq source = {NoteEvent::note(60, 1000, 0), NoteEvent::rest(1000, 1000),
                      NoteEvent::note(62, 1000, 2000)};
    auto bytes = write_midi(source, {});
    MidiPiece piece = parse_midi(bytes);
    REQUIRE(piece.tracks[0].events.size() == 2);
    CHECK(piece.tracks[0].events[1].onset_tick == 960);
    CHECK(track_to_note_events(piece.tracks[0], piece.ppq) == source);
  }
  SECTION("third-of-a-beat values quantize cleanly at ppq 480") {
    // ticks 0/160/320 give onsets 0.000/0.333/0.667
    NoteSeq source = {NoteEvent::note(60, 333, 0), NoteEvent::note(62, 334, 333),
                      NoteEvent::note(64, 333, 667)};
    auto bytes = write_midi(source, {});
    MidiPiece piece = parse_midi(bytes);
    CHECK(track_to_note_events(piece.tracks[0], piece.ppq) == source);
  }
}

TEST_CASE("non-representable durations raise QuantizationError") {
  NoteSeq bad = {NoteEvent::note(60, 1, 0)};  // 0.001 beats < one tick
  CHECK_THROWS_AS(write_midi(bad, {}), QuantizationError);
}

TEST_CASE("write/parse round-trip on random tick-grid sequences") {
  std::mt19937_64 rng(414243);
  for (int iter = 0; iter < 200; ++iter) {
    NoteSeq source = duet::testing::random_tick_sequence(rng, 12);
    NoteSeq target = duet::testing::random_tick_sequence(rng, 9);
    auto bytes = write_midi(source, target);
    MidiPiece piece = parse_midi(bytes);
    REQUIRE(piece.tracks.size() == 2);
    CHECK(track_to_note_events(piece.tracks[0], piece.ppq) == source);
    CHECK(track_to_note_events(piece.tracks[1], piece.ppq) == target);
  }
}

TEST_CASE("writer output declares format 1 and carries the meter") {
  auto bytes = write_midi({NoteEvent::note(60, 1000, 0)}, {}, 480, Meter{3, 4});
  CHECK(bytes[9] == 1);  // format word
  MidiPiece piece = parse_midi(bytes);
  REQUIRE(!piece.time_signatures.empty());
  CHECK(piece.time_signatures[0].numerator == 3);
  CHECK(piece.time_signatures[0].denominator == 4);
}

TEST_CASE("parser never crashes on arbitrary bytes") {
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<int> len(0, 300);
  std::uniform_int_distribution<int> byte(0, 255);

  // purely random buffers
  for (int iter = 0; iter < 1500; ++iter) {
    std::vector<std::uint8_t> bytes(std::size_t(len(rng)));
    for (auto& b : bytes) b = std::uint8_t(byte(rng));
    try {
      parse_midi(bytes);
    } catch (const Error&) {
      // typed errors are the contract
    }
  }

  // mutations of a valid file
  auto valid = write_midi({NoteEvent::note(60, 1000, 0),
                           NoteEvent::note(64, 500, 1000)},
                          {NoteEvent::note(48, 1500, 0)});
  std::uniform_int_distribution<std::size_t> pos(0, valid.size() - 1);
  for (int iter = 0; iter < 1500; ++iter) {
    auto bytes = valid;
    for (int k = 0; k < 3; ++k) bytes[pos(rng)] = std::uint8_t(byte(rng));
    try {
      parse_midi(bytes);
    } catch (const Error&) {
    }
  }
}
