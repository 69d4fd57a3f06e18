// Command-line surface for the counterpoint translation pipeline:
// ingest / train / generate / evaluate, glued together by the corpus
// manifest. Exit codes: 0 success, 1 usage error, 2 empty result,
// 3 data error, 4 numeric divergence.

#include <CLI11.hpp>
#include <filesystem>
#include <iostream>
#include <string>

#include "duet/duet.hpp"

namespace {

duet::Variant variant_or_throw(const std::string& name) {
  auto v = duet::parse_variant(name);
  if (!v)
    throw duet::Error("unknown variant '" + name +
                      "' (use beat, mod-beat, or none)");
  return *v;
}

/// --config is applied before flag parsing so flags override file values.
duet::KeyValues preload_config(int argc, char** argv) {
  for (int i = 1; i + 1 < argc; ++i) {
    if (std::string(argv[i]) == "--config")
      return duet::KeyValues::from_file(argv[i + 1]);
  }
  return duet::KeyValues{};
}

}  // namespace

int main(int argc, char** argv) {
  duet::KeyValues file_cfg;
  try {
    file_cfg = preload_config(argc, argv);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }

  CLI::App app{"Two-part counterpoint as translation: corpus building, "
               "transformer training, constrained generation, evaluation"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand

  std::string config_path;
  app.add_option("--config", config_path, "key = value defaults file");

  std::uint64_t seed =
      std::uint64_t(file_cfg.get_int("seed", 1));
  app.add_option("--seed", seed, "seed for every random choice");

  std::string variant_str = file_cfg.get_string("variant", "mod-beat");
  app.add_option("--variant", variant_str,
                 "token encoding: beat, mod-beat, or none");

  // ingest ------------------------------------------------------------------
  auto* ingest = app.add_subcommand("ingest", "build a token corpus from MIDI");
  std::string midi_dir, ingest_out;
  double val_fraction = file_cfg.get_double("val_fraction", 0.25);
  double polyphony = file_cfg.get_double("polyphony_threshold", 0.2);
  bool both_directions = file_cfg.get_bool("both_directions", false);
  ingest->add_option("--midi-dir", midi_dir, "directory of .mid files")
      ->required();
  ingest->add_option("--out", ingest_out, "corpus output directory")
      ->required();
  ingest->add_option("--val-fraction", val_fraction,
                     "fraction of segments held out by track pair");
  ingest->add_option("--polyphony-threshold", polyphony,
                     "reject tracks with more simultaneity than this");
  ingest->add_flag("--both-directions", both_directions,
                   "also emit every pair with source and target swapped");

  // train -------------------------------------------------------------------
  auto* train = app.add_subcommand("train", "train a model on a corpus");
  std::string train_corpus, train_out, resume_path;
  int steps = int(file_cfg.get_int("steps", 2000));
  int batch_size = int(file_cfg.get_int("batch_size", 8));
  int checkpoint_every = int(file_cfg.get_int("checkpoint_every", 500));
  std::string precision = file_cfg.get_string("precision", "fast");
  duet::ModelConfig model_cfg;
  model_cfg.d_model = int(file_cfg.get_int("d_model", model_cfg.d_model));
  model_cfg.n_heads = int(file_cfg.get_int("n_heads", model_cfg.n_heads));
  model_cfg.d_ff = int(file_cfg.get_int("d_ff", model_cfg.d_ff));
  model_cfg.n_layers_enc =
      int(file_cfg.get_int("n_layers_enc", model_cfg.n_layers_enc));
  model_cfg.n_layers_dec =
      int(file_cfg.get_int("n_layers_dec", model_cfg.n_layers_dec));
  model_cfg.max_len = int(file_cfg.get_int("max_len", model_cfg.max_len));
  model_cfg.dropout_rate =
      file_cfg.get_double("dropout_rate", model_cfg.dropout_rate);
  duet::OptimizerConfig opt_cfg;
  opt_cfg.lr_factor = file_cfg.get_double("lr_factor", opt_cfg.lr_factor);
  opt_cfg.warmup_steps =
      int(file_cfg.get_int("warmup_steps", opt_cfg.warmup_steps));
  train->add_option("--corpus", train_corpus, "corpus directory from ingest")
      ->required();
  train->add_option("--out", train_out, "model output directory")->required();
  train->add_option("--steps", steps, "optimizer steps");
  train->add_option("--batch", batch_size, "sequences per step");
  train->add_option("--checkpoint-every", checkpoint_every,
                    "periodic checkpoint interval (0 = off)");
  train->add_option("--precision", precision, "fast (32-bit) or reference");
  train->add_option("--d-model", model_cfg.d_model, "embedding width");
  train->add_option("--n-heads", model_cfg.n_heads, "attention heads");
  train->add_option("--d-ff", model_cfg.d_ff, "feed-forward width");
  train->add_option("--enc-layers", model_cfg.n_layers_enc, "encoder layers");
  train->add_option("--dec-layers", model_cfg.n_layers_dec, "decoder layers");
  train->add_option("--max-len", model_cfg.max_len, "maximum sequence length");
  train->add_option("--dropout", model_cfg.dropout_rate, "dropout rate");
  train->add_option("--lr-factor", opt_cfg.lr_factor,
                    "learning-rate schedule multiplier");
  train->add_option("--warmup-steps", opt_cfg.warmup_steps,
                    "learning-rate warmup steps");
  train->add_option("--resume", resume_path, "checkpoint to continue from");

  // shared decoding flags ----------------------------------------------------
  duet::DecodeOptions decode_cfg;
  decode_cfg.beam_width = int(file_cfg.get_int("beam_width", 4));
  decode_cfg.alpha = file_cfg.get_double("alpha", 0.6);
  decode_cfg.max_steps = int(file_cfg.get_int("max_steps", -1));
  bool no_grammar = false;
  auto add_decode_flags = [&](CLI::App* cmd) {
    cmd->add_option("--beam-width", decode_cfg.beam_width, "beam width");
    cmd->add_option("--alpha", decode_cfg.alpha,
                    "length-normalization exponent");
    cmd->add_option("--max-steps", decode_cfg.max_steps,
                    "decode step limit (-1 = 3*source+8)");
    cmd->add_flag("--no-grammar", no_grammar,
                  "disable the token-grammar constraint");
  };

  // generate ------------------------------------------------------------------
  auto* generate =
      app.add_subcommand("generate", "generate a counterpart for a source");
  std::string gen_model, gen_source, gen_out, meter_str = "4/4";
  int source_track = 0;
  generate->add_option("--model", gen_model, "model directory from train")
      ->required();
  generate->add_option("--source", gen_source, "source .mid or .tok file")
      ->required();
  generate->add_option("--out", gen_out, "output prefix (.tok/.mid added)")
      ->required();
  generate->add_option("--meter", meter_str,
                       "meter for token-file sources, e.g. 4/4");
  generate->add_option("--source-track", source_track,
                       "which note-bearing track is the source part");
  add_decode_flags(generate);

  // evaluate ------------------------------------------------------------------
  auto* evaluate =
      app.add_subcommand("evaluate", "score generated counterpoint with BLEU "
                         "and the memorization scan");
  std::string eval_model, eval_corpus, eval_out, eval_split = "validation";
  std::size_t eval_limit = 0;
  evaluate->add_option("--model", eval_model, "model directory")->required();
  evaluate->add_option("--corpus", eval_corpus, "corpus directory")
      ->required();
  evaluate->add_option("--out", eval_out, "report output directory")
      ->required();
  evaluate->add_option("--split", eval_split, "manifest split to score");
  evaluate->add_option("--limit", eval_limit, "score at most this many");
  add_decode_flags(evaluate);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (*ingest) {
      duet::IngestOptions opt;
      opt.midi_dir = midi_dir;
      opt.out_dir = ingest_out;
      opt.variant = variant_or_throw(variant_str);
      opt.val_fraction = val_fraction;
      opt.polyphony_threshold = polyphony;
      opt.both_directions = both_directions;
      opt.seed = seed;
      auto s = duet::cmd_ingest(opt);
      std::cout << "pieces " << s.pieces << "\n"
                << "tracks rejected " << s.tracks_rejected << "\n"
                << "pairs " << s.pairs << "\n"
                << "segments " << s.segments_before_filter << " -> "
                << s.segments_after_filter << " after note filter\n"
                << "train segments " << s.train_segments
                << " (12x transposition)\n"
                << "validation segments " << s.validation_segments << "\n";
    } else if (*train) {
      duet::TrainOptions opt;
      opt.corpus_dir = train_corpus;
      opt.out_dir = train_out;
      opt.steps = steps;
      opt.batch_size = batch_size;
      opt.checkpoint_every = checkpoint_every;
      opt.precision = precision;
      opt.model = model_cfg;
      opt.optimizer = opt_cfg;
      opt.seed = seed;
      if (!resume_path.empty()) opt.init_checkpoint = resume_path;
      opt.progress = &std::cout;
      auto s = duet::cmd_train(opt);
      std::cout << "trained " << s.steps << " steps on " << s.examples
                << " segments";
      if (s.skipped_too_long > 0)
        std::cout << " (" << s.skipped_too_long << " too long, skipped)";
      std::cout << "\nfinal loss " << s.final_loss << "  token accuracy "
                << s.final_accuracy << "\ncheckpoint " << s.checkpoint.string()
                << "\n";
    } else if (*generate) {
      duet::GenerateOptions opt;
      opt.model_dir = gen_model;
      opt.source_path = gen_source;
      opt.out_prefix = gen_out;
      decode_cfg.grammar = !no_grammar;
      opt.decode = decode_cfg;
      opt.meter = duet::detail::parse_meter(meter_str, duet::Meter{4, 4});
      opt.source_track = source_track;
      if (app.count("--variant") > 0)
        opt.expect_variant = variant_or_throw(variant_str);
      auto s = duet::cmd_generate(opt);
      if (s.unknown_words > 0)
        std::cerr << "warning: " << s.unknown_words
                  << " source words outside the vocabulary\n";
      if (s.truncated)
        std::cerr << "warning: decoding hit the step limit; output truncated "
                     "at a note boundary\n";
      std::cout << "tokens " << s.token_path.string() << "\nmidi "
                << s.midi_path.string() << "\n";
    } else if (*evaluate) {
      duet::EvaluateOptions opt;
      opt.model_dir = eval_model;
      opt.corpus_dir = eval_corpus;
      opt.out_dir = eval_out;
      opt.split = eval_split;
      decode_cfg.grammar = !no_grammar;
      opt.decode = decode_cfg;
      opt.limit = eval_limit;
      opt.progress = &std::cout;
      if (app.count("--variant") > 0)
        opt.expect_variant = variant_or_throw(variant_str);
      auto s = duet::cmd_evaluate(opt);
      std::cout << "segments " << s.segments << "\n"
                << duet::render_bleu_table({{"", s.bleu}})
                << "memorization: all-pairs edit distance " << s.memorization.mean
                << " ± " << s.memorization.stddev << "\n"
                << "exact copies of training targets: "
                << s.memorization.exact_copy_count << "\n"
                << "beat violations: " << s.beat_violations << "\n"
                << "reports in " << eval_out << "\n";
    }
  } catch (const duet::EmptyResult& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const duet::DivergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
