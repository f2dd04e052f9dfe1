#include "punctc/train.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "punctc/random.hpp"
#include "testutil.hpp"

namespace punctc {
namespace {

namespace fs = std::filesystem;

GeneratorConfig micro_corpus_config() {
  GeneratorConfig cfg;
  cfg.letters = "abcdef";
  cfg.lexicon_size = 10;
  cfg.word_len_min = 2;
  cfg.word_len_max = 4;
  cfg.apostrophe_prob = 0.0;
  cfg.sentences_min = 1;
  cfg.sentences_max = 1;
  cfg.words_min = 2;
  cfg.words_max = 3;
  cfg.dur_min = 6;  // keeps CTC feasible after 4x subsampling
  cfg.dur_max = 9;
  cfg.noise_sigma = 0.05;
  cfg.feature_dim = 6;
  return cfg;
}

EncoderConfig micro_encoder_config(const GeneratorConfig& gen,
                                   bool context_free = false) {
  EncoderConfig cfg;
  cfg.feature_dim = gen.feature_dim;
  cfg.layers = 1;
  cfg.hidden_dim = 16;
  cfg.heads = 2;
  cfg.vocab_size = gen.vocab_symbols().size();
  cfg.positional_kernel = 7;
  cfg.context_free = context_free;
  return cfg;
}

TrainConfig micro_train_config() {
  TrainConfig cfg;
  cfg.lambda = 0.5;
  cfg.lr = 2e-3;
  cfg.warmup_steps = 50;
  cfg.max_steps = 10;
  cfg.batch_max_frames = 400;
  cfg.chunk_plan = ChunkPlan{16, 16, 8, 4};
  cfg.seed = 5;
  return cfg;
}

TEST(LearningRate, PaperScheduleValues) {
  TrainConfig cfg;
  cfg.lr = 0.001;
  cfg.warmup_steps = 10000;
  EXPECT_DOUBLE_EQ(lr_at(10000, cfg), 0.001);
  EXPECT_DOUBLE_EQ(lr_at(40000, cfg), 0.0005);
  EXPECT_DOUBLE_EQ(lr_at(5000, cfg), 0.0005);  // linear warmup midpoint
  EXPECT_THROW(lr_at(0, cfg), Error);
}

TEST(TrainStep, LossInterpolation) {
  // lambda=0.5, L_CTC=2, L_chunk=3 -> 2.5 (arithmetic fixture)
  double lambda = 0.5;
  EXPECT_DOUBLE_EQ((1.0 - lambda) * 2.0 + lambda * 3.0, 2.5);

  GeneratorConfig gen = micro_corpus_config();
  Vocabulary vocab = Vocabulary::from_symbols(gen.vocab_symbols());
  auto utts = generate_corpus(gen, 8, 6);
  TrainConfig cfg = micro_train_config();
  Encoder enc(micro_encoder_config(gen), 1);
  Adam adam(enc.params());
  TrainReport rep = train_step(Batch{utts, false}, enc, adam, cfg, 1, vocab);
  ASSERT_GT(rep.batch_elements, 0u);
  EXPECT_NEAR(rep.l_total,
              (1.0 - cfg.lambda) * rep.l_ctc + cfg.lambda * rep.l_chunk, 1e-9);
}

TEST(TrainStep, LambdaZeroEqualsFullLoss) {
  GeneratorConfig gen = micro_corpus_config();
  Vocabulary vocab = Vocabulary::from_symbols(gen.vocab_symbols());
  auto utts = generate_corpus(gen, 9, 4);
  TrainConfig cfg = micro_train_config();
  cfg.lambda = 0.0;
  Encoder enc(micro_encoder_config(gen), 2);
  Adam adam(enc.params());
  TrainReport rep = train_step(Batch{utts, false}, enc, adam, cfg, 1, vocab);
  EXPECT_NEAR(rep.l_total, rep.l_ctc, 1e-9);
}

TEST(TrainStep, ContextFreeEncoderMakesChunkLossEqualFullLoss) {
  GeneratorConfig gen = micro_corpus_config();
  Vocabulary vocab = Vocabulary::from_symbols(gen.vocab_symbols());
  auto utts = generate_corpus(gen, 10, 4);
  TrainConfig cfg = micro_train_config();
  Encoder enc(micro_encoder_config(gen, /*context_free=*/true), 3);
  Adam adam(enc.params());
  TrainReport rep = train_step(Batch{utts, false}, enc, adam, cfg, 1, vocab);
  ASSERT_GT(rep.batch_elements, 0u);
  EXPECT_NEAR(rep.l_chunk, rep.l_ctc, 1e-9);
  EXPECT_NEAR(rep.l_total, rep.l_ctc, 1e-9);
}

TEST(TrainStep, CombinedBackwardIsInterpolationOfPathGradients) {
  GeneratorConfig gen = micro_corpus_config();
  Vocabulary vocab = Vocabulary::from_symbols(gen.vocab_symbols());
  auto utts = generate_corpus(gen, 11, 2);
  TrainConfig cfg = micro_train_config();
  double lambda = 0.3;
  Encoder enc(micro_encoder_config(gen), 4);
  Batch merged = concat_pairs(Batch{utts, false}, vocab);
  const Utterance& u = merged.items[0];

  auto run_path = [&](bool full_path, bool chunk_path) {
    enc.zero_grads();
    Tape tape;
    std::vector<Var> losses;
    if (full_path) {
      Var lp = enc.build_log_probs(tape, u.features.frames, true);
      losses.push_back(ctc_node(lp, u.tokens, enc.config().vocab_size));
    }
    if (chunk_path) {
      Var merged_lp =
          chunked_encode_node(tape, enc, u.features.frames, cfg.chunk_plan, true);
      losses.push_back(ctc_node(merged_lp, u.tokens, enc.config().vocab_size));
    }
    Var total = losses.size() == 2
                    ? ag::add(ag::scale(losses[0], 1.0 - lambda),
                              ag::scale(losses[1], lambda))
                    : losses[0];
    tape.backward(total);
    std::vector<Array> grads;
    for (const Param& p : enc.params()) grads.push_back(p.grad);
    return grads;
  };

  auto combined = run_path(true, true);
  auto full_only = run_path(true, false);
  auto chunk_only = run_path(false, true);
  for (size_t i = 0; i < combined.size(); ++i)
    for (size_t k = 0; k < combined[i].numel(); ++k)
      ASSERT_NEAR(combined[i].at(k),
                  (1.0 - lambda) * full_only[i].at(k) +
                      lambda * chunk_only[i].at(k),
                  1e-9);
}

TEST(TrainStep, InfeasibleElementSkippedWithWarning) {
  GeneratorConfig gen = micro_corpus_config();
  Vocabulary vocab = Vocabulary::from_symbols(gen.vocab_symbols());
  auto utts = generate_corpus(gen, 12, 2);
  // a transcript far longer than its frames can align to
  Utterance bad;
  bad.id = "bad";
  bad.transcript = "abc def abc def abc def abc def.";
  bad.tokens = vocab.tokenize(bad.transcript);
  bad.features.frames = Array({8, gen.feature_dim});
  bad.features.hop_ms = gen.hop_ms;

  TrainConfig cfg = micro_train_config();
  cfg.ablation = Ablation::no_concat;  // keep the bad element unpaired
  Encoder enc(micro_encoder_config(gen), 5);
  Adam adam(enc.params());
  std::vector<std::string> warnings;
  Batch batch{{utts[0], bad, utts[1]}, false};
  TrainReport rep = train_step(batch, enc, adam, cfg, 1, vocab, &warnings);
  EXPECT_EQ(rep.skipped, 1u);
  EXPECT_EQ(rep.batch_elements, 2u);
  ASSERT_EQ(warnings.size(), 1u);
  EXPECT_NE(warnings[0].find("bad"), std::string::npos);
}

TEST(TrainStep, NoConcatWithLambdaZeroIsPlainCtcTrainer) {
  GeneratorConfig gen = micro_corpus_config();
  Vocabulary vocab = Vocabulary::from_symbols(gen.vocab_symbols());
  auto utts = generate_corpus(gen, 13, 3);
  TrainConfig cfg = micro_train_config();
  cfg.ablation = Ablation::no_concat;
  cfg.lambda = 0.0;
  Encoder enc(micro_encoder_config(gen), 6);
  Adam adam(enc.params());
  TrainReport rep = train_step(Batch{utts, false}, enc, adam, cfg, 1, vocab);
  EXPECT_EQ(rep.batch_elements, 3u);  // no pairing
  EXPECT_NEAR(rep.l_total, rep.l_ctc, 1e-9);
}

TEST(TrainStep, NoChunkLossUsesFullWeight) {
  GeneratorConfig gen = micro_corpus_config();
  Vocabulary vocab = Vocabulary::from_symbols(gen.vocab_symbols());
  auto utts = generate_corpus(gen, 14, 4);
  TrainConfig cfg = micro_train_config();
  cfg.ablation = Ablation::no_chunk_loss;
  Encoder enc(micro_encoder_config(gen), 7);
  Adam adam(enc.params());
  TrainReport rep = train_step(Batch{utts, false}, enc, adam, cfg, 1, vocab);
  EXPECT_DOUBLE_EQ(rep.l_total, rep.l_ctc);
  EXPECT_DOUBLE_EQ(rep.l_chunk, 0.0);
}

TEST(TrainStep, OneOptimizerUpdatePerStep) {
  GeneratorConfig gen = micro_corpus_config();
  Vocabulary vocab = Vocabulary::from_symbols(gen.vocab_symbols());
  auto utts = generate_corpus(gen, 15, 4);
  TrainConfig cfg = micro_train_config();
  Encoder enc(micro_encoder_config(gen), 8);
  Adam adam(enc.params());
  Array before = enc.params()[0].value;
  train_step(Batch{utts, false}, enc, adam, cfg, 1, vocab);
  EXPECT_EQ(adam.t(), 1u);
  EXPECT_NE(enc.params()[0].value.data(), before.data());
  train_step(Batch{utts, false}, enc, adam, cfg, 2, vocab);
  EXPECT_EQ(adam.t(), 2u);
}

TEST(Fit, SmoothedLossDecreases) {
  GeneratorConfig gen = micro_corpus_config();
  Vocabulary vocab = Vocabulary::from_symbols(gen.vocab_symbols());
  auto utts = generate_corpus(gen, 16, 60);
  TrainConfig cfg = micro_train_config();
  cfg.max_steps = 250;
  cfg.batch_max_frames = 600;
  Encoder enc(micro_encoder_config(gen), 9);
  fs::path dir = fs::temp_directory_path() / "punctc_fit_curve";
  fs::remove_all(dir);
  FitResult result = fit(utts, vocab, enc, cfg, dir.string());
  ASSERT_EQ(result.log.size(), 250u);
  auto window_mean = [&](size_t from, size_t to) {
    double acc = 0.0;
    for (size_t i = from; i < to; ++i) acc += result.log[i].l_total;
    return acc / static_cast<double>(to - from);
  };
  double early = window_mean(0, 50);
  double late = window_mean(200, 250);
  EXPECT_LT(late, early * 0.8) << "early " << early << " late " << late;
  fs::remove_all(dir);
}

TEST(Fit, ResumeIsBitIdenticalToUninterruptedRun) {
  GeneratorConfig gen = micro_corpus_config();
  Vocabulary vocab = Vocabulary::from_symbols(gen.vocab_symbols());
  auto utts = generate_corpus(gen, 17, 12);
  TrainConfig cfg = micro_train_config();
  cfg.max_steps = 14;
  cfg.checkpoint_every = 7;
  cfg.batch_max_frames = 250;

  fs::path dir_a = fs::temp_directory_path() / "punctc_fit_a";
  fs::path dir_b = fs::temp_directory_path() / "punctc_fit_b";
  fs::remove_all(dir_a);
  fs::remove_all(dir_b);

  Encoder enc_a(micro_encoder_config(gen), 10);
  FitResult run_a = fit(utts, vocab, enc_a, cfg, dir_a.string());

  Encoder enc_b(micro_encoder_config(gen), 10);
  FitResult run_b =
      fit(utts, vocab, enc_b, cfg, dir_b.string(),
          (dir_a / "step_000007.ckpt").string());

  // final checkpoints byte-identical
  auto slurp = [](const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(is), {});
  };
  EXPECT_EQ(slurp(dir_a / "final.ckpt"), slurp(dir_b / "final.ckpt"));

  // and the loss trajectory of the overlapping steps matches exactly
  for (const TrainReport& rb : run_b.log) {
    const TrainReport& ra = run_a.log[rb.step - 1];
    EXPECT_EQ(ra.step, rb.step);
    EXPECT_NEAR(ra.l_total, rb.l_total, 1e-9);
  }
  fs::remove_all(dir_a);
  fs::remove_all(dir_b);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  GeneratorConfig gen = micro_corpus_config();
  Encoder enc(micro_encoder_config(gen), 20);
  Checkpoint ck;
  ck.encoder = enc.config();
  ck.vocab_symbols = gen.vocab_symbols();
  ck.hop_ms = 10.0;
  ck.step = 123;
  ck.epoch = 4;
  ck.pos = 5;
  ck.seed = 99;
  ck.params = enc.params();
  ck.has_optimizer = false;
  fs::path dir = fs::temp_directory_path() / "punctc_ckpt_test";
  fs::create_directories(dir);
  std::string path = (dir / "model.ckpt").string();
  save_checkpoint(path, ck);
  Checkpoint back = load_checkpoint(path);
  EXPECT_EQ(back.step, 123u);
  EXPECT_EQ(back.vocab_symbols, ck.vocab_symbols);
  ASSERT_EQ(back.params.size(), ck.params.size());
  for (size_t i = 0; i < ck.params.size(); ++i) {
    EXPECT_EQ(back.params[i].name, ck.params[i].name);
    EXPECT_EQ(back.params[i].value.data(), ck.params[i].value.data());
  }
  // saving the loaded state reproduces the same bytes
  std::string path2 = (dir / "model2.ckpt").string();
  save_checkpoint(path2, back);
  std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
  std::string b1((std::istreambuf_iterator<char>(f1)), {});
  std::string b2((std::istreambuf_iterator<char>(f2)), {});
  EXPECT_EQ(b1, b2);
  fs::remove_all(dir);
}

}  // namespace
}  // namespace punctc
