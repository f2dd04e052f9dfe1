// punctc command-line tool: corpus generation, training, batch decoding,
// streaming simulation, and scoring, as one binary with subcommands.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "punctc/checkpoint.hpp"
#include "punctc/chunking.hpp"
#include "punctc/corpus.hpp"
#include "punctc/eval.hpp"
#include "punctc/model.hpp"
#include "punctc/score.hpp"
#include "punctc/text.hpp"
#include "punctc/train.hpp"

namespace fs = std::filesystem;
using namespace punctc;

namespace {

size_t ms_to_frames(double ms, double hop_ms, const char* what) {
  double raw = ms / hop_ms;
  auto frames = static_cast<long long>(raw + 0.5);
  ensure(frames >= 0 && std::abs(raw - static_cast<double>(frames)) < 1e-6,
         what, " of ", ms, " ms is not a whole number of ", hop_ms,
         " ms frames");
  return static_cast<size_t>(frames);
}

ChunkPlan plan_from_ms(double chunk_ms, double left_ms, double right_ms,
                       double hop_ms) {
  ChunkPlan plan;
  plan.chunk_frames = ms_to_frames(chunk_ms, hop_ms, "--chunk-ms");
  plan.left_frames = ms_to_frames(left_ms, hop_ms, "--left-ms");
  plan.right_frames = ms_to_frames(right_ms, hop_ms, "--right-ms");
  plan.subsample_factor = 4;
  plan.validate();
  return plan;
}

struct LoadedModel {
  Checkpoint checkpoint;
  Encoder encoder;
  Vocabulary vocab;
};

LoadedModel load_model(const std::string& checkpoint_path,
                       const Manifest& manifest) {
  Checkpoint ck = load_checkpoint(checkpoint_path);
  ensure(ck.encoder.feature_dim == manifest.feature_dim,
         "checkpoint expects feature dim ", ck.encoder.feature_dim,
         " but the manifest provides ", manifest.feature_dim);
  ensure(ck.vocab_symbols == manifest.vocab_symbols,
         "checkpoint and manifest vocabularies differ");
  Encoder enc = encoder_from_checkpoint(ck);
  Vocabulary vocab = Vocabulary::from_symbols(ck.vocab_symbols);
  return LoadedModel{std::move(ck), std::move(enc), std::move(vocab)};
}

// ── gen-data ────────────────────────────────────────────────────────────────

int run_gen_data(const std::string& out_dir, size_t count, uint64_t seed,
                 double dev_frac, double test_frac, const GeneratorConfig& gen) {
  gen.validate();
  ensure(dev_frac >= 0 && test_frac >= 0 && dev_frac + test_frac < 1.0,
         "gen-data: dev/test fractions must leave room for a train split");
  auto utts = generate_corpus(gen, seed, count);
  size_t n_dev = static_cast<size_t>(static_cast<double>(count) * dev_frac);
  size_t n_test = static_cast<size_t>(static_cast<double>(count) * test_frac);
  size_t n_train = count - n_dev - n_test;
  ensure(n_train >= 1, "gen-data: no utterances left for the train split");

  std::vector<Utterance> train(utts.begin(), utts.begin() + n_train);
  std::vector<Utterance> dev(utts.begin() + n_train,
                             utts.begin() + n_train + n_dev);
  std::vector<Utterance> test(utts.begin() + n_train + n_dev, utts.end());

  std::string train_manifest = write_corpus(out_dir, "train", train, gen);
  std::cout << "wrote " << train.size() << " utterances to " << train_manifest
            << "\n";
  if (!dev.empty())
    std::cout << "wrote " << dev.size() << " utterances to "
              << write_corpus(out_dir, "dev", dev, gen) << "\n";
  if (!test.empty())
    std::cout << "wrote " << test.size() << " utterances to "
              << write_corpus(out_dir, "test", test, gen) << "\n";
  return 0;
}

// ── train ───────────────────────────────────────────────────────────────────

int run_train(const std::string& manifest_path, const std::string& out_dir,
              TrainConfig cfg, EncoderConfig model_cfg, double chunk_ms,
              double left_ms, double right_ms, const std::string& resume) {
  Manifest manifest = read_manifest(manifest_path);
  cfg.chunk_plan = plan_from_ms(chunk_ms, left_ms, right_ms, manifest.hop_ms);
  cfg.validate();
  model_cfg.feature_dim = manifest.feature_dim;
  model_cfg.vocab_size = manifest.vocab_symbols.size();
  model_cfg.validate();

  Vocabulary vocab = Vocabulary::from_symbols(manifest.vocab_symbols);
  std::vector<Utterance> utts = load_utterances(manifest_path);
  Encoder encoder(model_cfg, cfg.seed);
  std::cout << "training on " << utts.size() << " utterances, "
            << encoder.param_count() << " parameters, ablation "
            << ablation_name(cfg.ablation) << "\n";
  FitResult result = fit(utts, vocab, encoder, cfg, out_dir, resume, &std::cout);
  std::cout << "final checkpoint: " << result.final_checkpoint << "\n";
  return 0;
}

// ── decode ──────────────────────────────────────────────────────────────────

int run_decode(const std::string& manifest_path,
               const std::string& checkpoint_path, const std::string& mode,
               size_t beam, double chunk_ms, double left_ms, double right_ms,
               const std::string& out_path) {
  ensure(mode == "full" || mode == "chunked",
         "decode: --mode must be full or chunked");
  Manifest manifest = read_manifest(manifest_path);
  LoadedModel model = load_model(checkpoint_path, manifest);
  DecodeOptions opts;
  opts.chunked = mode == "chunked";
  opts.beam = beam;
  if (opts.chunked)
    opts.plan = plan_from_ms(chunk_ms, left_ms, right_ms, manifest.hop_ms);

  std::vector<Utterance> utts = load_utterances(manifest_path);
  std::vector<std::pair<std::string, std::string>> hyps;
  hyps.reserve(utts.size());
  for (const Utterance& u : utts)
    hyps.emplace_back(u.id, decode_transcript(model.encoder, u.features.frames,
                                              model.vocab, opts));
  write_hypotheses(out_path, hyps);
  std::cout << "decoded " << hyps.size() << " utterances to " << out_path
            << "\n";
  return 0;
}

// ── stream ──────────────────────────────────────────────────────────────────

int run_stream(const std::string& manifest_path,
               const std::string& checkpoint_path, size_t beam,
               double chunk_ms, double left_ms, double right_ms,
               const std::string& out_path, const std::string& latency_path) {
  Manifest manifest = read_manifest(manifest_path);
  LoadedModel model = load_model(checkpoint_path, manifest);
  ChunkPlan plan = plan_from_ms(chunk_ms, left_ms, right_ms, manifest.hop_ms);

  std::ofstream latency_os;
  if (!latency_path.empty()) {
    latency_os.open(latency_path, std::ios::trunc);
    ensure(latency_os.good(), "stream: cannot open '", latency_path, "'");
    latency_os << "chunk_index,core_ms,emitted_tokens,lookahead_ms\n";
  }

  std::vector<Utterance> utts = load_utterances(manifest_path);
  std::vector<std::pair<std::string, std::string>> hyps;
  for (const Utterance& u : utts) {
    StreamSession session(model.encoder, plan, beam);
    // replay the utterance chunk-by-chunk as a live source would deliver it
    size_t total = u.features.num_frames();
    for (size_t at = 0; at < total; at += plan.chunk_frames) {
      size_t n = std::min(plan.chunk_frames, total - at);
      Array piece({n, u.features.dim()});
      for (size_t r = 0; r < n; ++r)
        for (size_t c = 0; c < u.features.dim(); ++c)
          piece.at(r, c) = u.features.frames.at(at + r, c);
      session.push(piece);
    }
    DecodeResult final_result = session.flush();
    hyps.emplace_back(u.id, model.vocab.detokenize(final_result.tokens));
    if (latency_os.is_open()) {
      latency_os << "# utterance " << u.id << "\n";
      for (const auto& rec : session.latency())
        latency_os << rec.chunk_index << ","
                   << static_cast<double>(rec.core_frames) * manifest.hop_ms
                   << "," << rec.emitted_tokens << ","
                   << static_cast<double>(rec.lookahead_frames) * manifest.hop_ms
                   << "\n";
    }
  }
  write_hypotheses(out_path, hyps);
  std::cout << "streamed " << hyps.size() << " utterances to " << out_path
            << "\n";
  return 0;
}

// ── score ───────────────────────────────────────────────────────────────────

int run_score(const std::string& manifest_path, const std::string& hyp_path,
              const std::string& out_prefix) {
  Manifest manifest = read_manifest(manifest_path);
  auto hyps = read_hypotheses(hyp_path);
  std::map<std::string, std::string> known;
  for (const auto& e : manifest.entries) known.emplace(e.id, e.transcript);
  std::map<std::string, std::string> by_id;
  for (const auto& [id, text] : hyps) {
    ensure(known.count(id) == 1, "score: hypothesis id '", id,
           "' is not in the manifest");
    by_id[id] = text;
  }

  size_t missing = 0;
  std::vector<std::pair<std::string, std::string>> ref_hyp;
  for (const auto& e : manifest.entries) {
    auto it = by_id.find(e.id);
    if (it == by_id.end()) {
      ++missing;
      ref_hyp.emplace_back(e.transcript, "");
    } else {
      ref_hyp.emplace_back(e.transcript, it->second);
    }
  }
  if (missing > 0)
    std::cerr << "warning: " << missing
              << " utterances had no hypothesis and were scored empty\n";

  ScoreReport report = score_corpus(ref_hyp);
  report.missing_hypotheses = missing;
  std::string table =
      render_score_table(report, fs::path(hyp_path).filename().string());
  std::cout << table;
  if (!out_prefix.empty()) {
    std::ofstream(out_prefix + ".txt") << table;
    std::ofstream(out_prefix + ".jsonl") << render_score_records(report);
    std::cout << "wrote " << out_prefix << ".txt and " << out_prefix
              << ".jsonl\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"punctc: streaming punctuated speech recognition toolkit"};
  app.require_subcommand(1);

  // gen-data
  auto* gen_cmd = app.add_subcommand("gen-data", "generate a synthetic corpus");
  std::string gen_out;
  size_t gen_count = 2000;
  uint64_t gen_seed = 1;
  double dev_frac = 0.05, test_frac = 0.05;
  GeneratorConfig gen;
  gen_cmd->add_option("--out-dir", gen_out, "output directory")->required();
  gen_cmd->add_option("--count", gen_count, "total utterances");
  gen_cmd->add_option("--seed", gen_seed, "corpus seed");
  gen_cmd->add_option("--dev-frac", dev_frac, "dev split fraction");
  gen_cmd->add_option("--test-frac", test_frac, "test split fraction");
  gen_cmd->add_option("--letters", gen.letters, "letter inventory");
  gen_cmd->add_option("--lexicon-size", gen.lexicon_size, "distinct words");
  gen_cmd->add_option("--word-len-min", gen.word_len_min);
  gen_cmd->add_option("--word-len-max", gen.word_len_max);
  gen_cmd->add_option("--apostrophe-prob", gen.apostrophe_prob);
  gen_cmd->add_option("--sentences-min", gen.sentences_min);
  gen_cmd->add_option("--sentences-max", gen.sentences_max);
  gen_cmd->add_option("--words-min", gen.words_min);
  gen_cmd->add_option("--words-max", gen.words_max);
  gen_cmd->add_option("--comma-prob", gen.comma_prob);
  gen_cmd->add_option("--question-prob", gen.question_prob);
  gen_cmd->add_option("--dur-min", gen.dur_min, "min frames per character");
  gen_cmd->add_option("--dur-max", gen.dur_max, "max frames per character");
  gen_cmd->add_option("--pause-short-min", gen.pause_short_min);
  gen_cmd->add_option("--pause-short-max", gen.pause_short_max);
  gen_cmd->add_option("--pause-long-min", gen.pause_long_min);
  gen_cmd->add_option("--pause-long-max", gen.pause_long_max);
  gen_cmd->add_option("--noise", gen.noise_sigma, "feature noise sigma");
  gen_cmd->add_option("--feature-dim", gen.feature_dim);
  gen_cmd->add_option("--hop-ms", gen.hop_ms);
  gen_cmd->add_option("--sig-seed", gen.signature_seed,
                      "acoustic signature seed");

  // train
  auto* train_cmd = app.add_subcommand("train", "train a model");
  std::string train_manifest, train_out, train_resume;
  TrainConfig tcfg;
  tcfg.warmup_steps = 500;
  tcfg.max_steps = 2000;
  EncoderConfig mcfg;
  std::string ablation = "full";
  double t_chunk_ms = 1000, t_left_ms = 2000, t_right_ms = 1000;
  train_cmd->set_config("--config", "",
                        "key=value config file; flags override it");
  train_cmd->add_option("--manifest", train_manifest, "training manifest")
      ->required();
  train_cmd->add_option("--out-dir", train_out, "checkpoint/log directory")
      ->required();
  train_cmd->add_option("--steps", tcfg.max_steps, "training steps");
  train_cmd->add_option("--lr", tcfg.lr, "base learning rate");
  train_cmd->add_option("--warmup", tcfg.warmup_steps, "warmup steps");
  train_cmd->add_option("--batch-frames", tcfg.batch_max_frames,
                        "frame budget per batch");
  train_cmd->add_option("--lambda", tcfg.lambda, "chunk loss weight");
  train_cmd
      ->add_option("--ablation", ablation, "full, no-chunk-loss, or no-concat")
      ->check(CLI::IsMember({"full", "no-chunk-loss", "no-concat"}));
  train_cmd->add_option("--seed", tcfg.seed, "training seed");
  train_cmd->add_option("--chunk-ms", t_chunk_ms, "chunk length (ms)");
  train_cmd->add_option("--left-ms", t_left_ms, "left context (ms)");
  train_cmd->add_option("--right-ms", t_right_ms, "right context (ms)");
  train_cmd->add_option("--layers", mcfg.layers, "encoder layers");
  train_cmd->add_option("--hidden", mcfg.hidden_dim, "hidden dimension");
  train_cmd->add_option("--heads", mcfg.heads, "attention heads");
  train_cmd->add_option("--pos-kernel", mcfg.positional_kernel,
                        "positional conv kernel");
  train_cmd->add_option("--ffn-mult", mcfg.ffn_mult, "FFN width multiplier");
  train_cmd->add_flag("--context-free", mcfg.context_free,
                      "context-free diagnostic encoder");
  train_cmd->add_option("--checkpoint-every", tcfg.checkpoint_every,
                        "checkpoint cadence in steps (0 = final only)");
  train_cmd->add_option("--resume", train_resume, "checkpoint to resume from");

  // decode
  auto* decode_cmd = app.add_subcommand("decode", "batch decode a manifest");
  std::string dec_manifest, dec_checkpoint, dec_mode = "chunked", dec_out;
  size_t dec_beam = 5;
  double d_chunk_ms = 1000, d_left_ms = 2000, d_right_ms = 1000;
  decode_cmd->add_option("--manifest", dec_manifest)->required();
  decode_cmd->add_option("--checkpoint", dec_checkpoint)->required();
  decode_cmd->add_option("--mode", dec_mode, "full or chunked")
      ->check(CLI::IsMember({"full", "chunked"}));
  decode_cmd->add_option("--beam", dec_beam, "beam width");
  decode_cmd->add_option("--chunk-ms", d_chunk_ms);
  decode_cmd->add_option("--left-ms", d_left_ms);
  decode_cmd->add_option("--right-ms", d_right_ms);
  decode_cmd->add_option("--out", dec_out, "hypothesis file")->required();

  // stream
  auto* stream_cmd =
      app.add_subcommand("stream", "simulate streaming recognition");
  std::string str_manifest, str_checkpoint, str_out, str_latency;
  size_t str_beam = 5;
  double s_chunk_ms = 1000, s_left_ms = 2000, s_right_ms = 1000;
  stream_cmd->add_option("--manifest", str_manifest)->required();
  stream_cmd->add_option("--checkpoint", str_checkpoint)->required();
  stream_cmd->add_option("--beam", str_beam, "beam width");
  stream_cmd->add_option("--chunk-ms", s_chunk_ms);
  stream_cmd->add_option("--left-ms", s_left_ms);
  stream_cmd->add_option("--right-ms", s_right_ms);
  stream_cmd->add_option("--out", str_out, "hypothesis file")->required();
  stream_cmd->add_option("--latency-csv", str_latency, "latency report CSV");

  // score
  auto* score_cmd = app.add_subcommand("score", "score hypotheses");
  std::string sc_manifest, sc_hyp, sc_prefix;
  score_cmd->add_option("--manifest", sc_manifest, "reference manifest")
      ->required();
  score_cmd->add_option("--hyp", sc_hyp, "hypothesis file")->required();
  score_cmd->add_option("--out-prefix", sc_prefix,
                        "write <prefix>.txt and <prefix>.jsonl");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen_cmd->parsed())
      return run_gen_data(gen_out, gen_count, gen_seed, dev_frac, test_frac,
                          gen);
    if (train_cmd->parsed()) {
      tcfg.ablation = parse_ablation(ablation);
      return run_train(train_manifest, train_out, tcfg, mcfg, t_chunk_ms,
                       t_left_ms, t_right_ms, train_resume);
    }
    if (decode_cmd->parsed())
      return run_decode(dec_manifest, dec_checkpoint, dec_mode, dec_beam,
                        d_chunk_ms, d_left_ms, d_right_ms, dec_out);
    if (stream_cmd->parsed())
      return run_stream(str_manifest, str_checkpoint, str_beam, s_chunk_ms,
                        s_left_ms, s_right_ms, str_out, str_latency);
    if (score_cmd->parsed()) return run_score(sc_manifest, sc_hyp, sc_prefix);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
