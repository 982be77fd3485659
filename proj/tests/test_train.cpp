#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "erpgan/error.hpp"
#include "erpgan/fileutil.hpp"
#include "erpgan/rng.hpp"
#include "erpgan/train.hpp"
#include "tiny_run.hpp"

using namespace erpgan;
using namespace erpgan::train;
using nn::Tensor;
using signal::Label;

namespace {

constexpr std::size_t T = 128;

// Two Gaussian classes differing in mean, in epoch form.
signal::EpochSet gaussian_classes(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  signal::EpochSet e;
  e.channel_names = {"Pz"};
  e.sampling_rate = 128;
  e.time_samples = T;
  e.subject_id = "toy";
  e.condition = signal::Condition::walking;
  for (std::size_t i = 0; i < n; ++i) {
    const Label l = i % 2 ? Label::target : Label::nontarget;
    e.labels.push_back(l);
    for (std::size_t t = 0; t < T; ++t) e.data.push_back((l == Label::target ? 0.5 : -0.5) + rng.normal());
  }
  return e;
}

Tensor smooth_batch(std::size_t n, double amplitude, std::uint64_t seed) {
  Rng rng(seed);
  Tensor x({n, 1, T, 1});
  for (std::size_t i = 0; i < n; ++i) {
    const double f = 1.0 + 3.0 * rng.uniform(), ph = 6.283185307179586 * rng.uniform();
    for (std::size_t t = 0; t < T; ++t)
      x.data()[i * T + t] = amplitude * std::sin(6.283185307179586 * f * static_cast<double>(t) / T + ph);
  }
  return x;
}

Tensor alternating_labels(std::size_t n) {
  std::vector<Label> l;
  for (std::size_t i = 0; i < n; ++i) l.push_back(i % 2 ? Label::target : Label::nontarget);
  return one_hot(l);
}

struct Nets {
  models::Model G, D, E;
};

Nets nets(std::uint64_t seed) {
  return {models::build_generator(T, 1, T / 2, {}, seed), models::build_discriminator(T, 1, {}, seed + 1),
          [&] {
            auto e = models::build_encoder(T, 1, {}, seed + 2);
            e.strip_heads();
            e.set_trainable(false);
            return e;
          }()};
}

std::vector<double> flat_params(const models::Model& m) {
  std::vector<double> v;
  for (const auto* p : m.parameters()) v.insert(v.end(), p->value.data().begin(), p->value.data().end());
  return v;
}

const tiny_run::Run& shared_run() {
  static const tiny_run::Run r = tiny_run::run();
  return r;
}

}  // namespace

TEST(TrainConfig, Validation) {
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(c.time_samples(), 128u);
  EXPECT_EQ(c.latent_dim(), 64u);
  c.batch_size = 1;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.adam.lr = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.adam.beta1 = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.lambda_rec = -1;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.pipeline.working_fs = 100;  // 20 + 80 = 100 samples, not divisible by 16
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Pretrain, SeparatesGaussianClasses) {
  const auto walking = gaussian_classes(64, 1);
  const auto standing = gaussian_classes(32, 2);
  TrainConfig c;
  PretrainLog log;
  auto enc = pretrain_encoder(walking, &standing, c, 1.0, 9, &log);
  ASSERT_EQ(log.train_accuracy.size(), c.pretrain_epochs);
  EXPECT_GE(log.train_accuracy.back(), 0.95);
  EXPECT_GT(log.heldout_auc, 0.9);
  EXPECT_FALSE(enc.has_heads());
  EXPECT_EQ(enc.latent_dim(), T / 2);

  const Tensor z = enc.encode(Tensor({1, 1, T, 1}, 0.0));
  EXPECT_EQ(z.shape(), (nn::Shape{1, T / 2}));
  for (double v : z.data()) EXPECT_TRUE(std::isfinite(v));
}

TEST(Pretrain, DeterministicBytesAndEmptyInput) {
  const auto walking = gaussian_classes(16, 3);
  TrainConfig c;
  c.pretrain_epochs = 3;
  tiny_run::TempDir dir("pretrain_det");
  models::save_checkpoint(pretrain_encoder(walking, nullptr, c, 1.0, 5), dir.path / "a.ckpt");
  models::save_checkpoint(pretrain_encoder(walking, nullptr, c, 1.0, 5), dir.path / "b.ckpt");
  EXPECT_TRUE(read_file(dir.path / "a.ckpt") == read_file(dir.path / "b.ckpt"));

  signal::EpochSet empty = walking;
  empty.data.clear();
  empty.labels.clear();
  EXPECT_THROW(pretrain_encoder(empty, nullptr, c, 1.0, 5), DataError);
}

TEST(GanStep, ReconstructionOnlyMseStrictlyDecreases) {
  TrainConfig c;
  c.adversarial_weight = 0;
  c.class_weight = 0;
  const Tensor walking = smooth_batch(16, 1.0, 1), real = smooth_batch(16, 0.3, 2), y = alternating_labels(16);
  {
    // Per-step descent needs a small step: at the default rate the single-feature
    // ReLU -> batchnorm stage of the generator makes consecutive steps jitter.
    auto n = nets(20);
    c.adam.lr = 5e-6;
    double previous = INFINITY;
    for (int step = 0; step < 50; ++step) {
      const auto l = gan_train_step(n.G, n.D, n.E, real, y, walking, y, c);
      EXPECT_EQ(l.d_validity, 0.0);
      EXPECT_EQ(l.g_class, 0.0);
      ASSERT_LT(l.g_mse, previous) << "step " << step;
      previous = l.g_mse;
    }
  }
  {
    auto n = nets(20);
    c.adam = {};
    const double first = gan_train_step(n.G, n.D, n.E, real, y, walking, y, c).g_mse;
    double last = first;
    for (int step = 1; step < 50; ++step) last = gan_train_step(n.G, n.D, n.E, real, y, walking, y, c).g_mse;
    EXPECT_LT(last, 0.95 * first);
  }
}

TEST(GanStep, DiscriminatorLearnsWithFrozenGenerator) {
  auto n = nets(30);
  n.G.set_trainable(false);
  const auto g_before = flat_params(n.G);
  TrainConfig c;
  const Tensor real = smooth_batch(32, 1.0, 3), y = alternating_labels(32);
  const Tensor walking = smooth_batch(32, 1.0, 4);
  for (int step = 0; step < 100; ++step) gan_train_step(n.G, n.D, n.E, real, y, walking, y, c);
  EXPECT_EQ(flat_params(n.G), g_before);

  const Tensor fake = n.G.forward(n.E.encode(walking), nn::Mode::infer);
  const auto r = n.D.discriminate(real, nn::Mode::infer);
  const auto f = n.D.discriminate(fake, nn::Mode::infer);
  // Rank separation rather than a 0.5 threshold: 100 steps move the scores apart
  // well before they straddle 0.5.
  std::size_t ordered = 0;
  for (double a : r.validity.data())
    for (double b : f.validity.data()) ordered += a > b;
  EXPECT_GE(static_cast<double>(ordered) / (32.0 * 32.0), 0.95);
}

TEST(GanStep, OneStepMovesBothNetworksAndLossesAreSane) {
  auto n = nets(40);
  const auto g0 = flat_params(n.G), d0 = flat_params(n.D), e0 = flat_params(n.E);
  TrainConfig c;
  const Tensor real = smooth_batch(8, 0.5, 5), walking = smooth_batch(8, 1.0, 6), y = alternating_labels(8);
  const auto l = gan_train_step(n.G, n.D, n.E, real, y, walking, y, c);
  EXPECT_NE(flat_params(n.G), g0);
  EXPECT_NE(flat_params(n.D), d0);
  EXPECT_EQ(flat_params(n.E), e0);
  for (double v : {l.d_validity, l.d_class, l.g_adv, l.g_class, l.g_mse}) {
    EXPECT_TRUE(std::isfinite(v));
    EXPECT_GE(v, 0.0);
  }
  EXPECT_TRUE(n.D.trainable());
}

TEST(GanStep, NonFiniteInputAbortsNamingTheTerm) {
  auto n = nets(50);
  TrainConfig c;
  Tensor walking = smooth_batch(4, 1.0, 7);
  walking.data()[3] = NAN;
  const Tensor real = smooth_batch(4, 1.0, 8), y = alternating_labels(4);
  try {
    gan_train_step(n.G, n.D, n.E, real, y, walking, y, c);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("loss is not finite"), std::string::npos);
  }
}

TEST(Fold, ExcludesTestSubjectAndBalances) {
  const auto& run = shared_run();
  ASSERT_EQ(run.folds.size(), 3u);
  for (std::size_t k = 0; k < 3; ++k) {
    const auto& f = run.folds[k];
    EXPECT_EQ(f.test_subject, run.data[k].id);
    const auto& subj = f.audit.train_trial_subjects;
    EXPECT_EQ(std::count(subj.begin(), subj.end(), f.test_subject), 0);
    for (const auto& s : run.data)
      if (s.id != f.test_subject) EXPECT_GT(std::count(subj.begin(), subj.end(), s.id), 0) << s.id;
    EXPECT_EQ(f.audit.walking_targets, f.audit.walking_nontargets);
    EXPECT_EQ(f.audit.standing_targets, f.audit.standing_nontargets);
    EXPECT_NO_THROW(check_protocol(f.audit));
    ASSERT_EQ(f.losses.size(), tiny_run::train_config().gan_epochs);
    for (const auto& l : f.losses)
      for (double v : {l.d_validity, l.d_class, l.g_adv, l.g_class, l.g_mse}) EXPECT_TRUE(std::isfinite(v));
    // test epochs are never balanced
    EXPECT_EQ(f.reconstructed.trials(), run.data[k].walking.trials());
    EXPECT_EQ(f.reconstructed.labels, run.data[k].walking.labels);
  }
}

TEST(Fold, ErrorsAndSeeds) {
  const auto& run = shared_run();
  const auto c = tiny_run::train_config();
  EXPECT_THROW(train_fold(run.data, "s99", c, 1), DataError);
  const std::vector<SubjectEpochs> one{run.data.front()};
  EXPECT_THROW(run_loso(one, c), DataError);
  EXPECT_EQ(fold_seed(run.data, "s02", 11), derive_seed(11, 1));
  EXPECT_THROW(fold_seed(run.data, "s99", 11), DataError);
}

TEST(Fold, LosoIsDeterministic) {
  const auto& first = shared_run();
  auto second = tiny_run::run();
  auto ra = evaluate_run(const_cast<tiny_run::Run&>(first).folds, first.data);
  auto rb = evaluate_run(second.folds, second.data);
  ASSERT_EQ(ra.rows.size(), rb.rows.size());
  for (std::size_t i = 0; i < ra.rows.size(); ++i) {
    EXPECT_EQ(ra.rows[i].auc, rb.rows[i].auc);
    EXPECT_EQ(ra.rows[i].snr, rb.rows[i].snr);
  }
  for (std::size_t k = 0; k < first.folds.size(); ++k) EXPECT_EQ(first.folds[k].reconstructed.data, second.folds[k].reconstructed.data);
}

TEST(Fold, MseFallsOnDefaultSyntheticData) {
  auto sc = tiny_run::synth_config(2, 3);
  sc.trials_per_subject = synth::SyntheticConfig{}.trials_per_subject;
  sc.target_ratio = synth::SyntheticConfig{}.target_ratio;
  TrainConfig c;
  c.pretrain_epochs = 5;
  c.gan_epochs = 15;
  c.seed = 2;
  const auto data = preprocess(synth::synthesize_dataset(sc), c.pipeline);
  const auto fold = train_fold(data, "s01", c, 77);
  EXPECT_LT(fold.losses.back().g_mse, fold.losses.front().g_mse);
}

TEST(Reconstruct, ShapeLabelsDeterminism) {
  auto& run = const_cast<tiny_run::Run&>(shared_run());
  auto& f = run.folds[1];
  const auto& walking = run.data[1].walking;
  const auto a = reconstruct(f.generator, f.encoder, walking, f.scale);
  const auto b = reconstruct(f.generator, f.encoder, walking, f.scale);
  EXPECT_EQ(a.trials(), walking.trials());
  EXPECT_EQ(a.labels, walking.labels);
  EXPECT_EQ(a.time_samples, walking.time_samples);
  EXPECT_EQ(a.channel_names, walking.channel_names);
  EXPECT_EQ(a.data, b.data);
  EXPECT_EQ(a.data, f.reconstructed.data);

  signal::EpochSet wrong = walking;
  wrong.time_samples = 64;
  wrong.data.resize(wrong.trials() * 64);
  EXPECT_THROW(reconstruct(f.generator, f.encoder, wrong, f.scale), ShapeError);
}

// The 2-epoch fixture is too short for this: its latents barely vary across
// trials and every reconstruction comes out identical.
TEST(Reconstruct, DistinctInputsGiveDistinctOutputs) {
  auto tc = tiny_run::train_config();
  tc.pretrain_epochs = 20;
  tc.gan_epochs = 20;
  const auto data = preprocess(synth::synthesize_dataset(tiny_run::synth_config()), tc.pipeline);
  const auto f = train_fold(data, "s02", tc, fold_seed(data, "s02", tc.seed));
  const auto& a = f.reconstructed;
  for (std::size_t i = 0; i < a.trials(); ++i)
    for (std::size_t j = i + 1; j < a.trials(); ++j) {
      const auto x = a.trial(i), y = a.trial(j);
      double mse = 0;
      for (std::size_t t = 0; t < x.size(); ++t) mse += (x[t] - y[t]) * (x[t] - y[t]);
      ASSERT_GT(mse, 0.0) << "trials " << i << " and " << j << " coincide";
    }
}

TEST(Protocol, DetectsViolations) {
  FoldAudit a;
  a.test_subject = "s01";
  a.train_trial_subjects = {"s02", "s03"};
  a.walking_targets = a.walking_nontargets = 5;
  a.standing_targets = a.standing_nontargets = 6;
  a.test_walking_trials_available = a.test_walking_trials_used = 10;
  a.test_standing_trials_available = a.test_standing_trials_used = 12;
  EXPECT_NO_THROW(check_protocol(a));
  auto leak = a;
  leak.train_trial_subjects.push_back("s01");
  EXPECT_THROW(check_protocol(leak), DataError);
  auto unbalanced = a;
  unbalanced.standing_targets = 4;
  EXPECT_THROW(check_protocol(unbalanced), DataError);
  auto trimmed = a;
  trimmed.test_walking_trials_used = 8;
  EXPECT_THROW(check_protocol(trimmed), DataError);
}

TEST(Evaluate, RowsPerSubjectAndMissingFold) {
  auto& run = const_cast<tiny_run::Run&>(shared_run());
  const auto rep = evaluate_run(run.folds, run.data);
  EXPECT_EQ(rep.rows.size(), 9u);
  EXPECT_EQ(rep.groups.size(), 3u);
  EXPECT_EQ(rep.tests.size(), 6u);
  for (const auto& r : rep.rows) {
    EXPECT_GE(r.auc, 0.0);
    EXPECT_LE(r.auc, 1.0);
    EXPECT_GT(r.snr, 0.0);
  }
  std::vector<FoldResult> partial;
  partial.push_back(std::move(run.folds.back()));
  EXPECT_THROW(evaluate_run(partial, run.data), DataError);
  run.folds.back() = std::move(partial.front());
}
