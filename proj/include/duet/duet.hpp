#pragma once

// Two-part counterpoint as sequence-to-sequence translation: MIDI corpus
// building, note tokenization, a small transformer encoder-decoder with
// training, grammar-constrained beam search, and BLEU/edit-distance
// evaluation.

#include "duet/beats.hpp"       // IWYU pragma: export
#include "duet/checkpoint.hpp"  // IWYU pragma: export
#include "duet/config.hpp"      // IWYU pragma: export
#include "duet/corpus.hpp"      // IWYU pragma: export
#include "duet/decoding.hpp"    // IWYU pragma: export
#include "duet/errors.hpp"      // IWYU pragma: export
#include "duet/manifest.hpp"    // IWYU pragma: export
#include "duet/metrics.hpp"     // IWYU pragma: export
#include "duet/midi.hpp"        // IWYU pragma: export
#include "duet/model.hpp"       // IWYU pragma: export
#include "duet/note.hpp"        // IWYU pragma: export
#include "duet/pipeline.hpp"    // IWYU pragma: export
#include "duet/synth.hpp"       // IWYU pragma: export
#include "duet/tokenizer.hpp"   // IWYU pragma: export
#include "duet/train.hpp"       // IWYU pragma: export
