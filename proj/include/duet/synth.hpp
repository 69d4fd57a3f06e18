#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "duet/beats.hpp"
#include "duet/midi.hpp"
#include "duet/note.hpp"

namespace duet {

// Deterministic two-part practice pieces for demos and tests. Each measure
// draws a rhythm template whose note lengths are a function of the position
// inside the measure, while pitches follow a scale random walk with the
// lower voice imitating the upper voice one measure late. The rhythmic
// regularity is what makes these useful: duration structure is predictable
// from metric position, pitch much less so.

struct SynthOptions {
  int pieces = 8;
  int bars = 32;
  Meter meter{4, 4};
  std::uint64_t seed = 7;
};

namespace detail {

// rhythm templates; each sums to one 4/4 measure (4000 milli-beats)
inline const std::vector<std::vector<std::int64_t>>& rhythm_templates() {
  static const std::vector<std::vector<std::int64_t>> t = {
      {1000, 1000, 1000, 1000},
      {500, 500, 500, 500, 1000, 1000},
      {1500, 500, 1000, 1000},
      {1000, 500, 500, 2000},
      {2000, 1000, 500, 500},
      {500, 500, 1000, 500, 500, 1000},
  };
  return t;
}

inline const std::array<int, 7>& major_scale() {
  static const std::array<int, 7> degrees = {0, 2, 4, 5, 7, 9, 11};
  return degrees;
}

class ScaleWalk {
 public:
  ScaleWalk(int root, int start_degree, int low, int high)
      : root_(root), degree_(start_degree), low_(low), high_(high) {}

  int next(std::mt19937_64& rng) {
    static const std::array<int, 6> steps = {-2, -1, -1, 1, 1, 2};
    std::uniform_int_distribution<std::size_t> pick(0, steps.size() - 1);
    std::uniform_int_distribution<int> leap(0, 9);
    int step = steps[pick(rng)];
    if (leap(rng) == 0) step = step > 0 ? 4 : -4;  // occasional leap
    degree_ += step;
    int pitch = to_pitch(degree_);
    while (pitch > high_) {
      degree_ -= 7;
      pitch = to_pitch(degree_);
    }
    while (pitch < low_) {
      degree_ += 7;
      pitch = to_pitch(degree_);
    }
    return pitch;
  }

 private:
  int to_pitch(int degree) const {
    int octave = degree >= 0 ? degree / 7 : (degree - 6) / 7;
    int idx = degree - octave * 7;
    return root_ + octave * 12 + major_scale()[static_cast<std::size_t>(idx)];
  }

  int root_, degree_, low_, high_;
};

}  // namespace detail

struct SynthPiece {
  std::string name;
  NoteSeq upper;
  NoteSeq lower;
};

inline SynthPiece make_demo_piece(int index, int bars, Meter meter,
                                  std::uint64_t seed) {
  std::mt19937_64 rng(seed ^ (0x9E3779B97F4A7C15ULL * (index + 1)));
  const auto& templates = detail::rhythm_templates();
  std::uniform_int_distribution<std::size_t> pick_template(
      0, templates.size() - 1);
  std::uniform_int_distribution<int> pick_root(55, 67);
  std::uniform_int_distribution<int> rest_roll(0, 11);

  const int root = pick_root(rng);
  detail::ScaleWalk upper_walk(root, 7, 60, 90);   // around the octave above
  detail::ScaleWalk lower_walk(root, 0, 40, 72);
  (void)meter;  // templates are written for 4/4

  SynthPiece piece;
  piece.name = "demo_" + std::to_string(index);

  std::vector<std::size_t> upper_templates, lower_templates;
  for (int bar = 0; bar < bars; ++bar) {
    upper_templates.push_back(pick_template(rng));
    // the lower voice answers with the upper voice's previous rhythm
    lower_templates.push_back(bar == 0 ? pick_template(rng)
                                       : upper_templates[bar - 1]);
  }

  auto fill_voice = [&](NoteSeq& voice, detail::ScaleWalk& walk,
                        const std::vector<std::size_t>& choices) {
    std::int64_t cursor = 0;
    for (int bar = 0; bar < bars; ++bar) {
      for (std::int64_t dur : templates[choices[static_cast<std::size_t>(bar)]]) {
        if (rest_roll(rng) == 0)
          voice.push_back(NoteEvent::rest(dur, cursor));
        else
          voice.push_back(NoteEvent::note(walk.next(rng), dur, cursor));
        cursor += dur;
      }
    }
  };
  fill_voice(piece.upper, upper_walk, upper_templates);
  fill_voice(piece.lower, lower_walk, lower_templates);
  return piece;
}

/// Named MIDI files (format 1, two tracks each) for a small practice corpus.
inline std::vector<std::pair<std::string, std::vector<std::uint8_t>>>
make_demo_corpus(const SynthOptions& options = SynthOptions{}) {
  std::vector<std::pair<std::string, std::vector<std::uint8_t>>> files;
  for (int i = 0; i < options.pieces; ++i) {
    SynthPiece piece =
        make_demo_piece(i, options.bars, options.meter, options.seed);
    files.emplace_back(piece.name + ".mid",
                       write_midi(piece.upper, piece.lower, 480,
                                  options.meter));
  }
  return files;
}

}  // namespace duet
