#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "duet/checkpoint.hpp"
#include "duet/config.hpp"
#include "duet/corpus.hpp"
#include "duet/decoding.hpp"
#include "duet/errors.hpp"
#include "duet/manifest.hpp"
#include "duet/metrics.hpp"
#include "duet/midi.hpp"
#include "duet/model.hpp"
#include "duet/tokenizer.hpp"
#include "duet/train.hpp"

namespace duet {

namespace detail {

inline std::vector<std::uint8_t> read_file_bytes(
    const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  return std::vector<std::uint8_t>((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
}

inline std::string sanitize_id(std::string id) {
  for (char& c : id)
    if (c == ':' || c == '/' || c == '\\' || c == ' ') c = '_';
  return id;
}

inline std::string meter_string(Meter m) {
  return std::to_string(m.numerator) + "/" + std::to_string(m.denominator);
}

inline Meter parse_meter(const std::string& text, Meter fallback) {
  auto slash = text.find('/');
  if (slash == std::string::npos) return fallback;
  try {
    return Meter{std::stoi(text.substr(0, slash)),
                 std::stoi(text.substr(slash + 1))};
  } catch (const std::exception&) {
    return fallback;
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// ingest
// ---------------------------------------------------------------------------

struct IngestOptions {
  std::filesystem::path midi_dir;
  std::filesystem::path out_dir;
  Variant variant = Variant::kModBeatPosition;
  double val_fraction = 0.25;
  double polyphony_threshold = 0.2;
  bool both_directions = false;
  std::uint64_t seed = 1;
  std::size_t min_notes = 10;
};

struct IngestSummary {
  std::size_t pieces = 0;
  std::size_t tracks_rejected = 0;
  std::size_t pairs = 0;
  std::size_t segments_before_filter = 0;
  std::size_t segments_after_filter = 0;
  std::size_t train_segments = 0;  // after augmentation
  std::size_t validation_segments = 0;
};

/// parse -> monophonize -> pair -> segment -> filter -> split ->
/// augment(train only) -> encode. Writes the manifest, per-segment token
/// files, both vocabularies, and the effective corpus config.
inline IngestSummary cmd_ingest(const IngestOptions& options) {
  namespace fs = std::filesystem;
  IngestSummary summary;

  std::vector<fs::path> midi_files;
  if (!fs::is_directory(options.midi_dir))
    throw Error("'" + options.midi_dir.string() + "' is not a directory");
  for (const auto& entry : fs::directory_iterator(options.midi_dir)) {
    auto ext = entry.path().extension().string();
    if (ext == ".mid" || ext == ".midi") midi_files.push_back(entry.path());
  }
  std::sort(midi_files.begin(), midi_files.end());
  if (midi_files.empty())
    throw EmptyResult("no MIDI files in '" + options.midi_dir.string() + "'");

  MonophonizeOptions mono;
  mono.polyphony_threshold = options.polyphony_threshold;

  std::vector<SegmentPair> all_segments;
  std::vector<Meter> seen_meters;
  std::vector<std::string> piece_of_pair;  // pair_id -> piece_id
  std::vector<std::pair<std::string, std::string>> pair_pieces;

  for (const auto& path : midi_files) {
    MidiPiece piece = parse_midi(detail::read_file_bytes(path));
    piece.name = path.stem().string();
    ++summary.pieces;

    auto regions = piece_meter_regions(piece);
    std::vector<NoteSeq> voices;
    for (const auto& track : piece.tracks) {
      if (track.events.empty()) continue;  // conductor/meta tracks
      auto mono_result = monophonize(track, piece.ppq, mono);
      if (!mono_result) {
        ++summary.tracks_rejected;
        continue;
      }
      if (!mono_result->empty()) voices.push_back(std::move(*mono_result));
    }
    if (voices.size() < 2) continue;

    auto pairs = enumerate_pairs(piece.name, voices, regions);
    if (options.both_directions) {
      std::vector<TrackPair> swapped;
      for (const auto& p : pairs) {
        TrackPair rev = p;
        std::swap(rev.source, rev.target);
        auto colon = p.pair_id.rfind(':');
        auto dash = p.pair_id.find('-', colon);
        rev.pair_id = p.pair_id.substr(0, colon + 1) +
                      p.pair_id.substr(dash + 1) + "-" +
                      p.pair_id.substr(colon + 1, dash - colon - 1);
        swapped.push_back(std::move(rev));
      }
      pairs.insert(pairs.end(), swapped.begin(), swapped.end());
    }
    summary.pairs += pairs.size();

    for (const auto& pair : pairs) {
      pair_pieces.emplace_back(pair.pair_id, pair.piece_id);
      auto segments = segment(pair);
      summary.segments_before_filter += segments.size();
      auto kept = filter_segments(segments, options.min_notes);
      for (auto& seg : kept) {
        bool known = false;
        for (const auto& m : seen_meters) known = known || m == seg.meter;
        if (!known) seen_meters.push_back(seg.meter);
        all_segments.push_back(std::move(seg));
      }
    }
  }
  summary.segments_after_filter = all_segments.size();
  if (summary.pairs == 0) throw EmptyResult("no usable track pairs");
  if (all_segments.empty())
    throw EmptyResult("no segments survived the note-count filter");

  SplitResult splits =
      options.val_fraction > 0.0
          ? split(all_segments, options.val_fraction, options.seed)
          : SplitResult{all_segments, {}};
  std::vector<SegmentPair> train = transpose_augment(splits.train);
  summary.train_segments = train.size();
  summary.validation_segments = splits.validation.size();
  if (train.empty()) throw EmptyResult("training split is empty");

  fs::create_directories(options.out_dir / "tokens");

  auto piece_for = [&](const std::string& pair_id) -> std::string {
    for (const auto& [pid, piece] : pair_pieces)
      if (pid == pair_id) return piece;
    return "";
  };

  std::vector<ManifestRow> rows;
  std::vector<TokenSequence> train_sources, train_targets;
  auto emit = [&](const SegmentPair& seg, const std::string& split_name) {
    TokenSequence src = encode(seg.source, options.variant, seg.meter);
    TokenSequence tgt = encode(seg.target, options.variant, seg.meter);
    const std::string stem =
        detail::sanitize_id(seg.pair_id) + "_s" +
        std::to_string(seg.segment_index) + "_t" +
        std::to_string(seg.transposition);
    ManifestRow row;
    row.piece_id = piece_for(seg.pair_id);
    row.pair_id = seg.pair_id;
    row.segment_index = seg.segment_index;
    row.transposition = seg.transposition;
    row.split = split_name;
    row.source_token_file = "tokens/" + stem + ".src.tok";
    row.target_token_file = "tokens/" + stem + ".tgt.tok";
    write_token_file(options.out_dir / row.source_token_file, {src.words});
    write_token_file(options.out_dir / row.target_token_file, {tgt.words});
    rows.push_back(std::move(row));
    if (split_name == "train") {
      train_sources.push_back(std::move(src));
      train_targets.push_back(std::move(tgt));
    }
  };
  for (const auto& seg : train) emit(seg, "train");
  for (const auto& seg : splits.validation) emit(seg, "validation");

  write_manifest(options.out_dir / "manifest.tsv", rows);
  save_vocabulary(options.out_dir / "vocab.src.txt",
                  build_vocabulary(train_sources));
  save_vocabulary(options.out_dir / "vocab.tgt.txt",
                  build_vocabulary(train_targets));

  KeyValues cfg;
  cfg.set("variant", variant_name(options.variant));
  cfg.set("val_fraction", options.val_fraction);
  cfg.set("polyphony_threshold", options.polyphony_threshold);
  cfg.set("both_directions", options.both_directions);
  cfg.set("seed", std::int64_t(options.seed));
  if (seen_meters.size() == 1)
    cfg.set("meter", detail::meter_string(seen_meters.front()));
  cfg.save((options.out_dir / "corpus.cfg").string());
  return summary;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainOptions {
  std::filesystem::path corpus_dir;
  std::filesystem::path out_dir;
  int steps = 2000;
  int batch_size = 8;
  int checkpoint_every = 500;
  std::string precision = "fast";  // "fast" (32-bit) or "reference" (64-bit)
  ModelConfig model;               // vocab sizes are filled from the corpus
  OptimizerConfig optimizer;
  std::uint64_t seed = 1;
  std::filesystem::path init_checkpoint;  // resume when non-empty
  std::ostream* progress = nullptr;
  int progress_every = 100;
};

struct TrainSummary {
  double final_loss = 0.0;
  double final_accuracy = 0.0;
  int steps = 0;
  std::filesystem::path checkpoint;
  std::size_t examples = 0;
  std::size_t skipped_too_long = 0;
};

namespace detail {

struct LoadedCorpus {
  Variant variant = Variant::kNone;
  Vocabulary vocab_src, vocab_tgt;
  Meter meter{4, 4};
  bool meter_known = false;
};

inline LoadedCorpus load_corpus_dir(const std::filesystem::path& dir) {
  LoadedCorpus corpus;
  KeyValues cfg = KeyValues::from_file((dir / "corpus.cfg").string());
  auto variant = parse_variant(cfg.get_string("variant", ""));
  if (!variant)
    throw Error("corpus config in '" + dir.string() +
                "' has no valid variant");
  corpus.variant = *variant;
  corpus.vocab_src = load_vocabulary(dir / "vocab.src.txt");
  corpus.vocab_tgt = load_vocabulary(dir / "vocab.tgt.txt");
  corpus.meter_known = cfg.has("meter");
  corpus.meter = parse_meter(cfg.get_string("meter", "4/4"), Meter{4, 4});
  return corpus;
}

inline std::vector<int> token_file_ids(const std::filesystem::path& path,
                                       const Vocabulary& vocab,
                                       std::size_t* unknown = nullptr) {
  auto lines = read_token_file(path);
  if (lines.size() != 1)
    throw Error("expected one segment line in '" + path.string() + "'");
  IdSequence seq = to_ids(lines[0], vocab);
  if (unknown != nullptr) *unknown += seq.unknown;
  return seq.ids;
}

template <class Scalar>
TrainSummary train_impl(const TrainOptions& options,
                        const LoadedCorpus& corpus,
                        std::vector<Example> examples,
                        std::size_t skipped_too_long) {
  namespace fs = std::filesystem;
  ModelConfig cfg = options.model;
  cfg.vocab_size_src = corpus.vocab_src.size();
  cfg.vocab_size_tgt = corpus.vocab_tgt.size();
  cfg.seed = options.seed;
  cfg.validate();

  ModelParams<Scalar> params;
  if (!options.init_checkpoint.empty()) {
    auto ckpt = load_checkpoint<Scalar>(options.init_checkpoint.string());
    if (ckpt.variant != corpus.variant)
      throw Error("checkpoint variant '" + variant_name(ckpt.variant) +
                  "' does not match corpus variant '" +
                  variant_name(corpus.variant) + "'");
    params = std::move(ckpt.params);
  } else {
    params = ModelParams<Scalar>::init(cfg);
  }

  AdamState<Scalar> opt_state = AdamState<Scalar>::init(params);
  Dropout dropout(params.config.dropout_rate, options.seed ^ 0xD509B1A2ULL);
  Dropout* dropout_ptr =
      params.config.dropout_rate > 0.0 ? &dropout : nullptr;

  fs::create_directories(options.out_dir);
  std::ofstream log(options.out_dir / "train_log.tsv",
                    std::ios::binary | std::ios::app);
  log << "step\tloss\tlearning_rate\twall_ms\n";

  std::mt19937_64 shuffle_rng(options.seed ^ 0x5DEECE66DULL);
  std::vector<std::size_t> order(examples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::size_t cursor = order.size();  // trigger shuffle on first batch

  TrainSummary summary;
  summary.examples = examples.size();
  summary.skipped_too_long = skipped_too_long;
  fs::path last_good;

  const auto batch_size =
      std::max<std::size_t>(1, std::size_t(options.batch_size));
  std::vector<Example> batch;
  for (int step = 1; step <= options.steps; ++step) {
    batch.clear();
    while (batch.size() < batch_size) {
      if (cursor >= order.size()) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        cursor = 0;
      }
      batch.push_back(examples[order[cursor++]]);
      if (batch.size() >= examples.size()) break;
    }

    const auto t0 = std::chrono::steady_clock::now();
    TrainStepStats stats;
    try {
      stats = train_step<Scalar>(params, batch, opt_state, options.optimizer,
                                 dropout_ptr);
    } catch (const DivergenceError& e) {
      throw DivergenceError(std::string(e.what()) +
                            (last_good.empty()
                                 ? " (no checkpoint saved yet)"
                                 : "; last good checkpoint: " +
                                       last_good.string()));
    }
    const double wall_ms =
        std::chrono::duration<double, std::milli>(
            std::chrono::steady_clock::now() - t0)
            .count();
    log << step << '\t' << stats.loss << '\t' << stats.learning_rate << '\t'
        << wall_ms << '\n';
    if (options.progress != nullptr && options.progress_every > 0 &&
        step % options.progress_every == 0)
      *options.progress << "step " << step << "  loss " << stats.loss
                        << "  acc " << stats.token_accuracy << '\n';

    summary.final_loss = stats.loss;
    summary.final_accuracy = stats.token_accuracy;
    summary.steps = step;

    if (options.checkpoint_every > 0 && step % options.checkpoint_every == 0 &&
        step != options.steps) {
      fs::path p =
          options.out_dir / ("checkpoint_step_" + std::to_string(step) +
                             ".bin");
      save_checkpoint(p.string(), params, corpus.variant);
      last_good = p;
    }
  }

  summary.checkpoint = options.out_dir / "checkpoint.bin";
  save_checkpoint(summary.checkpoint.string(), params, corpus.variant);
  save_vocabulary(options.out_dir / "vocab.src.txt", corpus.vocab_src);
  save_vocabulary(options.out_dir / "vocab.tgt.txt", corpus.vocab_tgt);
  return summary;
}

}  // namespace detail

inline TrainSummary cmd_train(const TrainOptions& options) {
  auto corpus = detail::load_corpus_dir(options.corpus_dir);
  auto rows = read_manifest(options.corpus_dir / "manifest.tsv");

  std::vector<Example> examples;
  std::size_t skipped = 0;
  for (const auto& row : rows) {
    if (row.split != "train") continue;
    Example ex;
    ex.src = detail::token_file_ids(options.corpus_dir / row.source_token_file,
                                    corpus.vocab_src);
    ex.tgt = detail::token_file_ids(options.corpus_dir / row.target_token_file,
                                    corpus.vocab_tgt);
    if (static_cast<int>(ex.src.size()) > options.model.max_len ||
        static_cast<int>(ex.tgt.size()) - 1 > options.model.max_len) {
      ++skipped;
      continue;
    }
    examples.push_back(std::move(ex));
  }
  if (examples.empty()) throw EmptyResult("no training segments in manifest");

  if (options.precision == "reference")
    return detail::train_impl<double>(options, corpus, std::move(examples),
                                      skipped);
  if (options.precision == "fast")
    return detail::train_impl<float>(options, corpus, std::move(examples),
                                     skipped);
  throw Error("unknown precision '" + options.precision +
              "' (use fast or reference)");
}

// ---------------------------------------------------------------------------
// generate
// ---------------------------------------------------------------------------

struct GenerateOptions {
  std::filesystem::path model_dir;
  std::filesystem::path source_path;  // .mid/.midi or .tok
  std::filesystem::path out_prefix;   // writes <prefix>.tok and <prefix>.mid
  DecodeOptions decode;
  Meter meter{4, 4};  // used when the source is a token file
  int source_track = 0;
  std::optional<Variant> expect_variant;  // hard error if checkpoint differs
};

struct GenerateSummary {
  std::size_t unknown_words = 0;
  bool truncated = false;
  std::size_t beat_violations = 0;
  std::filesystem::path token_path;
  std::filesystem::path midi_path;
  std::vector<std::string> tokens;
};

inline GenerateSummary cmd_generate(const GenerateOptions& options) {
  auto ckpt = load_checkpoint<double>((options.model_dir / "checkpoint.bin")
                                          .string());
  if (options.expect_variant && *options.expect_variant != ckpt.variant)
    throw Error("variant mismatch: checkpoint is '" +
                variant_name(ckpt.variant) + "', requested '" +
                variant_name(*options.expect_variant) + "'");
  Vocabulary vocab_src = load_vocabulary(options.model_dir / "vocab.src.txt");
  Vocabulary vocab_tgt = load_vocabulary(options.model_dir / "vocab.tgt.txt");

  Meter meter = options.meter;
  NoteSeq source_notes;
  const std::string ext = options.source_path.extension().string();
  if (ext == ".mid" || ext == ".midi") {
    MidiPiece piece =
        parse_midi(detail::read_file_bytes(options.source_path));
    std::vector<const RawTrack*> with_notes;
    for (const auto& t : piece.tracks)
      if (!t.events.empty()) with_notes.push_back(&t);
    if (options.source_track < 0 ||
        options.source_track >= static_cast<int>(with_notes.size()))
      throw Error("source track index out of range");
    auto mono =
        monophonize(*with_notes[std::size_t(options.source_track)], piece.ppq);
    if (!mono) throw Error("source track is too polyphonic to flatten");
    source_notes = std::move(*mono);
    meter = Meter{piece.time_signatures.front().numerator,
                  piece.time_signatures.front().denominator};
  } else {
    auto lines = read_token_file(options.source_path);
    if (lines.empty())
      throw Error("no token line in '" + options.source_path.string() + "'");
    TokenSequence seq{lines[0], ckpt.variant, meter};
    source_notes = decode(seq, /*strict=*/false).notes;
  }

  TokenSequence source_tokens = encode(source_notes, ckpt.variant, meter);
  // keep the source within the model's window, cutting at a note boundary
  const int words_per_note = ckpt.variant == Variant::kNone ? 2 : 3;
  const std::size_t max_words =
      std::size_t(ckpt.params.config.max_len);
  if (source_tokens.words.size() > max_words) {
    std::size_t keep_notes = (max_words - 2) / std::size_t(words_per_note);
    source_notes.resize(std::min(source_notes.size(), keep_notes));
    source_tokens = encode(source_notes, ckpt.variant, meter);
  }

  GenerateSummary summary;
  IdSequence src_ids = to_ids(source_tokens.words, vocab_src);
  summary.unknown_words = src_ids.unknown;

  GrammarTables tables(vocab_tgt, ckpt.variant, meter);
  DecodeOutcome outcome = beam_search_model<double>(
      ckpt.params, src_ids.ids,
      options.decode.grammar ? &tables : nullptr, options.decode);
  summary.truncated = outcome.truncated;

  TokenSequence generated{from_ids(outcome.ids, vocab_tgt), ckpt.variant,
                          meter};
  summary.tokens = generated.words;
  if (ckpt.variant != Variant::kNone)
    summary.beat_violations = validate_beats(generated).violations.size();

  summary.token_path = options.out_prefix;
  summary.token_path += ".tok";
  write_token_file(summary.token_path, {generated.words});

  NoteSeq generated_notes =
      decode(generated, /*strict=*/options.decode.grammar).notes;
  summary.midi_path = options.out_prefix;
  summary.midi_path += ".mid";
  auto midi_bytes = write_midi(source_notes, generated_notes, 480, meter);
  std::ofstream midi_out(summary.midi_path, std::ios::binary);
  if (!midi_out)
    throw Error("cannot write '" + summary.midi_path.string() + "'");
  midi_out.write(reinterpret_cast<const char*>(midi_bytes.data()),
                 static_cast<std::streamsize>(midi_bytes.size()));
  return summary;
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

struct EvaluateOptions {
  std::filesystem::path model_dir;
  std::filesystem::path corpus_dir;
  std::filesystem::path out_dir;
  std::string split = "validation";
  DecodeOptions decode;
  std::size_t limit = 0;  // 0 = every segment in the split
  std::ostream* progress = nullptr;
  std::optional<Variant> expect_variant;  // hard error if checkpoint differs
};

struct EvaluateSummary {
  BleuReport bleu;
  MemorizationReport memorization;
  std::size_t segments = 0;
  std::size_t beat_violations = 0;
  std::size_t unknown_source_words = 0;
  std::filesystem::path bleu_tsv, table_txt, memorization_tsv;
};

inline EvaluateSummary cmd_evaluate(const EvaluateOptions& options) {
  namespace fs = std::filesystem;
  auto ckpt = load_checkpoint<double>((options.model_dir / "checkpoint.bin")
                                          .string());
  if (options.expect_variant && *options.expect_variant != ckpt.variant)
    throw Error("variant mismatch: checkpoint is '" +
                variant_name(ckpt.variant) + "', requested '" +
                variant_name(*options.expect_variant) + "'");
  auto corpus = detail::load_corpus_dir(options.corpus_dir);
  if (ckpt.variant != corpus.variant)
    throw Error("variant mismatch: checkpoint is '" +
                variant_name(ckpt.variant) + "', corpus is '" +
                variant_name(corpus.variant) + "'");
  const Meter meter = corpus.meter;

  auto rows = read_manifest(options.corpus_dir / "manifest.tsv");
  std::vector<const ManifestRow*> eval_rows;
  for (const auto& row : rows)
    if (row.split == options.split) eval_rows.push_back(&row);
  if (eval_rows.empty())
    throw EmptyResult("split '" + options.split + "' is empty");
  if (options.limit > 0 && eval_rows.size() > options.limit)
    eval_rows.resize(options.limit);

  GrammarTables tables(corpus.vocab_tgt, ckpt.variant, meter);
  EvaluateSummary summary;

  std::vector<std::pair<std::string, TokenSequence>> candidates, references;
  std::vector<std::pair<std::string, NoteSeq>> responses;
  for (const ManifestRow* row : eval_rows) {
    const std::string id = row->pair_id + "#" +
                           std::to_string(row->segment_index) + "t" +
                           std::to_string(row->transposition);
    IdSequence src = to_ids(
        read_token_file(options.corpus_dir / row->source_token_file).at(0),
        corpus.vocab_src);
    summary.unknown_source_words += src.unknown;

    DecodeOutcome outcome = beam_search_model<double>(
        ckpt.params, src.ids,
        options.decode.grammar ? &tables : nullptr, options.decode);
    TokenSequence cand{from_ids(outcome.ids, corpus.vocab_tgt), ckpt.variant,
                       meter};
    if (ckpt.variant != Variant::kNone)
      summary.beat_violations += validate_beats(cand).violations.size();

    TokenSequence ref{
        read_token_file(options.corpus_dir / row->target_token_file).at(0),
        ckpt.variant, meter};
    responses.emplace_back(id, decode(cand, /*strict=*/false).notes);
    candidates.emplace_back(id, std::move(cand));
    references.emplace_back(id, std::move(ref));
    ++summary.segments;
    if (options.progress != nullptr)
      *options.progress << "evaluated " << summary.segments << "/"
                        << eval_rows.size() << "\r" << std::flush;
  }
  if (options.progress != nullptr) *options.progress << '\n';

  summary.bleu = evaluate(candidates, references);

  std::vector<std::pair<std::string, NoteSeq>> train_targets;
  for (const auto& row : rows) {
    if (row.split != "train") continue;
    TokenSequence tgt{
        read_token_file(options.corpus_dir / row.target_token_file).at(0),
        ckpt.variant, meter};
    train_targets.emplace_back(
        row.pair_id + "#" + std::to_string(row.segment_index) + "t" +
            std::to_string(row.transposition),
        decode(tgt, /*strict=*/false).notes);
  }
  summary.memorization = memorization_scan(responses, train_targets);

  fs::create_directories(options.out_dir);
  summary.bleu_tsv = options.out_dir / "bleu.tsv";
  {
    std::ofstream out(summary.bleu_tsv, std::ios::binary);
    out << "segment_id\tpitch_bleu\tduration_bleu\tcombined_bleu\n";
    for (const auto& s : summary.bleu.per_segment)
      out << s.segment_id << '\t' << s.pitch << '\t' << s.duration << '\t'
          << s.combined << '\n';
    out << "mean\t" << summary.bleu.pitch.mean << '\t'
        << summary.bleu.duration.mean << '\t' << summary.bleu.combined.mean
        << '\n';
    out << "std\t" << summary.bleu.pitch.stddev << '\t'
        << summary.bleu.duration.stddev << '\t'
        << summary.bleu.combined.stddev << '\n';
  }
  summary.table_txt = options.out_dir / "bleu_table.txt";
  {
    std::ofstream out(summary.table_txt, std::ios::binary);
    out << render_bleu_table({{variant_name(ckpt.variant), summary.bleu}});
  }
  summary.memorization_tsv = options.out_dir / "memorization.tsv";
  {
    std::ofstream out(summary.memorization_tsv, std::ios::binary);
    out << "response_id\tmin_edit_distance\tnearest_training_target\n";
    for (const auto& m : summary.memorization.per_response)
      out << m.response_id << '\t' << m.min_distance << '\t'
          << m.nearest_target_id << '\n';
    out << "# all-pairs mean " << summary.memorization.mean << " std "
        << summary.memorization.stddev << " exact_copies "
        << summary.memorization.exact_copy_count << '\n';
  }
  return summary;
}

}  // namespace duet
