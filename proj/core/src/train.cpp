#include "erpgan/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "erpgan/error.hpp"
#include "erpgan/metrics.hpp"
#include "erpgan/nn/ops.hpp"
#include "erpgan/rng.hpp"

namespace erpgan::train {

namespace ops = nn::ops;
using nn::Mode;
using nn::Tensor;

namespace {

enum Stream : std::uint64_t {
  kPretrain = 1,
  kGenerator = 2,
  kDiscriminator = 3,
  kBatches = 4,
  kBalance = 100,
};

void require_finite(double value, const char* term) {
  if (!std::isfinite(value)) throw NumericError(std::string("training diverged: ") + term + " loss is not finite");
}

double rms(const std::vector<double>& x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return x.empty() ? 0.0 : std::sqrt(s / static_cast<double>(x.size()));
}

std::vector<std::size_t> iota(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), 0);
  return v;
}

// Consecutive batches over `order`; a trailing batch of one sample is merged
// into the previous one because batch normalisation needs two.
std::vector<std::vector<std::size_t>> batches(const std::vector<std::size_t>& order, std::size_t size) {
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < order.size(); i += size) {
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), i + size)));
  }
  if (out.size() > 1 && out.back().size() < 2) {
    out[out.size() - 2].push_back(out.back().front());
    out.pop_back();
  }
  return out;
}

Tensor rows_of(const Tensor& all, const std::vector<std::size_t>& idx) {
  const std::size_t width = all.size() / all.extent(0);
  nn::Shape shape = all.shape();
  shape[0] = idx.size();
  std::vector<double> v;
  v.reserve(idx.size() * width);
  for (std::size_t i : idx) {
    auto first = all.data().begin() + static_cast<std::ptrdiff_t>(i * width);
    v.insert(v.end(), first, first + static_cast<std::ptrdiff_t>(width));
  }
  return Tensor(std::move(shape), std::move(v));
}

// Real and fake either as two batches or as one, so that batch normalisation
// sees the same mixture it later summarises in its running statistics.
std::pair<models::DiscriminatorOutput, models::DiscriminatorOutput> discriminate_pair(models::Model& D, const Tensor& real,
                                                                                    const Tensor& fake, bool joint) {
  if (!joint) return {D.discriminate(real, Mode::train), D.discriminate(fake, Mode::train)};
  const std::size_t n = real.extent(0), m = fake.extent(0);
  auto both = D.discriminate(ops::concat_rows(real, fake), Mode::train);
  return {{ops::slice_rows(both.validity, 0, n), ops::slice_rows(both.classes, 0, n)},
          {ops::slice_rows(both.validity, n, n + m), ops::slice_rows(both.classes, n, n + m)}};
}

// `latent` holds the (frozen) encoder's codes of `walking`.
StepLosses step_from_latent(models::Model& G, models::Model& D, const Tensor& latent, const Tensor& real,
                            const Tensor& real_labels, const Tensor& walking, const Tensor& walking_labels,
                            const TrainConfig& config) {
  StepLosses out;
  Tensor fake = G.forward(latent, Mode::train);
  const std::size_t n_real = real.extent(0), n_fake = fake.extent(0);

  // Discriminator: real standing epochs vs detached reconstructions.
  {
    auto [r, f] = discriminate_pair(D, real, fake.detach(), config.joint_batch);
    Tensor validity = ops::add(ops::bce(r.validity, Tensor({n_real, 1}, 1.0)),
                               ops::bce(f.validity, Tensor({n_fake, 1}, 0.0)));
    Tensor cls = ops::add(ops::categorical_ce(r.classes, real_labels), ops::categorical_ce(f.classes, walking_labels));
    out.d_validity = config.adversarial_weight * validity.item();
    out.d_class = config.class_weight * cls.item();
    require_finite(out.d_validity, "discriminator validity");
    require_finite(out.d_class, "discriminator class");
    if (D.trainable()) {
      ops::add(ops::scale(validity, config.adversarial_weight), ops::scale(cls, config.class_weight)).backward();
      auto params = D.parameters();
      nn::adam_step(params, config.adam);
    }
  }

  // Generator through a frozen discriminator.
  {
    const bool d_trainable = D.trainable();
    D.set_trainable(false);
    auto f = config.joint_batch ? discriminate_pair(D, real, fake, true).second : D.discriminate(fake, Mode::train);
    Tensor adv = ops::bce(f.validity, Tensor({n_fake, 1}, 1.0));
    Tensor cls = ops::categorical_ce(f.classes, walking_labels);
    Tensor rec = ops::mse(fake, walking);
    out.g_adv = config.adversarial_weight * adv.item();
    out.g_class = config.class_weight * cls.item();
    out.g_mse = rec.item();
    require_finite(out.g_adv, "generator adversarial");
    require_finite(out.g_class, "generator class");
    require_finite(out.g_mse, "generator reconstruction");
    const double class_sign = config.subtract_class_loss ? -1.0 : 1.0;
    Tensor loss = ops::add(ops::add(ops::scale(adv, config.adversarial_weight),
                                    ops::scale(cls, class_sign * config.class_weight)),
                           ops::scale(rec, config.lambda_rec));
    if (G.trainable()) {
      loss.backward();
      auto params = G.parameters();
      nn::adam_step(params, config.adam);
    }
    D.set_trainable(d_trainable);
  }
  return out;
}

}  // namespace

std::size_t TrainConfig::time_samples() const {
  return signal::pre_samples(pipeline.pre_ms, pipeline.working_fs) + signal::post_samples(pipeline.post_ms, pipeline.working_fs);
}

void TrainConfig::validate() const {
  if (batch_size < 2) throw ConfigError("batch size must be at least 2");
  if (!(adam.lr > 0.0)) throw ConfigError("learning rate must be positive");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0)) throw ConfigError("beta1 must lie in [0, 1)");
  if (!(adam.beta2 >= 0.0 && adam.beta2 < 1.0)) throw ConfigError("beta2 must lie in [0, 1)");
  if (!(lambda_rec >= 0.0)) throw ConfigError("lambda_rec must be non-negative");
  if (!(adversarial_weight >= 0.0) || !(class_weight >= 0.0)) throw ConfigError("loss weights must be non-negative");
  if (pipeline.channels.empty()) throw ConfigError("need at least one channel");
  if (!(pipeline.working_fs > 0.0)) throw ConfigError("working sampling rate must be positive");
  if (!(pipeline.highpass_hz > 0.0)) throw ConfigError("high-pass cutoff must be positive");
  const std::size_t T = time_samples();
  if (T == 0 || T % 16 != 0)
    throw ConfigError("T must be divisible by 16 (got " + std::to_string(T) + " at " +
                      std::to_string(pipeline.working_fs) + " Hz)");
}

signal::EpochSet preprocess(const Session& session, const PipelineConfig& p) {
  const auto& rec = session.recording;
  auto filtered = signal::highpass(rec, p.highpass_hz);
  auto resampled = signal::resample(filtered, p.working_fs);
  auto events = signal::resample_events(session.events, rec.sampling_rate, p.working_fs, resampled.n_samples);
  return signal::select_channels(signal::epoch(resampled, events, p.pre_ms, p.post_ms), p.channels);
}

std::vector<SubjectEpochs> preprocess(const Dataset& dataset, const PipelineConfig& pipeline) {
  std::vector<SubjectEpochs> out;
  for (const auto& s : dataset.subjects)
    out.push_back({s.id, preprocess(s.standing, pipeline), preprocess(s.walking, pipeline)});
  return out;
}

Tensor to_tensor(const signal::EpochSet& epochs, double scale) { return to_tensor(epochs, iota(epochs.trials()), scale); }

Tensor to_tensor(const signal::EpochSet& epochs, const std::vector<std::size_t>& trials, double scale) {
  std::vector<double> v;
  v.reserve(trials.size() * epochs.trial_size());
  for (std::size_t i : trials)
    for (double x : epochs.trial(i)) v.push_back(x / scale);
  return Tensor({trials.size(), epochs.channels(), epochs.time_samples, 1}, std::move(v));
}

Tensor one_hot(const std::vector<signal::Label>& labels) {
  Tensor t({labels.size(), 2});
  for (std::size_t i = 0; i < labels.size(); ++i) t[2 * i + (labels[i] == signal::Label::target ? 1 : 0)] = 1.0;
  return t;
}

std::vector<double> class_scores(models::Model& D, const signal::EpochSet& epochs, double scale) {
  nn::NoGradGuard guard;
  std::vector<double> scores;
  const auto all = iota(epochs.trials());
  for (const auto& b : batches(all, 256)) {
    Tensor p = D.has_heads() && D.role() == models::Role::encoder ? D.classify(to_tensor(epochs, b, scale), Mode::infer)
                                                                  : D.discriminate(to_tensor(epochs, b, scale), Mode::infer).classes;
    for (std::size_t i = 0; i < b.size(); ++i) scores.push_back(p[2 * i + 1]);
  }
  return scores;
}

models::Model pretrain_encoder(const signal::EpochSet& walking, const signal::EpochSet* standing,
                               const TrainConfig& config, double scale, std::uint64_t seed, PretrainLog* log) {
  if (walking.trials() < 2) throw DataError("encoder pretraining needs at least two walking epochs");
  auto encoder = models::build_encoder(walking.time_samples, walking.channels(), config.architecture, seed);
  const Tensor x = to_tensor(walking, scale);
  const Tensor y = one_hot(walking.labels);
  Rng rng(derive_seed(seed, kBatches));
  auto order = iota(walking.trials());
  for (std::size_t epoch = 0; epoch < config.pretrain_epochs; ++epoch) {
    rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t correct = 0, n_batches = 0;
    for (const auto& b : batches(order, config.batch_size)) {
      Tensor probs = encoder.classify(rows_of(x, b), Mode::train);
      Tensor loss = ops::categorical_ce(probs, rows_of(y, b));
      require_finite(loss.item(), "encoder class");
      loss_sum += loss.item();
      ++n_batches;
      for (std::size_t i = 0; i < b.size(); ++i) {
        const bool predicted_target = probs[2 * i + 1] > probs[2 * i];
        correct += predicted_target == (walking.labels[b[i]] == signal::Label::target);
      }
      loss.backward();
      auto params = encoder.parameters();
      nn::adam_step(params, config.adam);
    }
    if (log) {
      log->loss.push_back(loss_sum / static_cast<double>(n_batches));
      log->train_accuracy.push_back(static_cast<double>(correct) / static_cast<double>(walking.trials()));
    }
  }
  if (log) {
    log->heldout_auc = std::nan("");
    if (standing && standing->count(signal::Label::target) > 0 && standing->count(signal::Label::nontarget) > 0)
      log->heldout_auc = metrics::auc(class_scores(encoder, *standing, scale), standing->labels);
  }
  encoder.epochs_trained = config.pretrain_epochs;
  encoder.strip_heads();
  return encoder;
}

StepLosses gan_train_step(models::Model& G, models::Model& D, models::Model& encoder, const Tensor& real,
                          const Tensor& real_labels, const Tensor& walking, const Tensor& walking_labels,
                          const TrainConfig& config) {
  if (real.rank() != 4 || walking.rank() != 4 || real.shape() != nn::Shape({real.extent(0), walking.extent(1), walking.extent(2), 1}))
    throw ShapeError("real and walking batches must be (N, C, T, 1) with matching C and T");
  if (real_labels.shape() != nn::Shape{real.extent(0), 2} || walking_labels.shape() != nn::Shape{walking.extent(0), 2})
    throw ShapeError("labels must be one-hot (N, 2)");
  return step_from_latent(G, D, encoder.encode(walking), real, real_labels, walking, walking_labels, config);
}

FoldData prepare_fold(const std::vector<SubjectEpochs>& data, const std::string& test_subject,
                      const TrainConfig& config, std::uint64_t fold_seed) {
  config.validate();
  if (data.size() < 2) throw DataError("leave-one-subject-out needs at least two subjects");
  if (std::none_of(data.begin(), data.end(), [&](const SubjectEpochs& s) { return s.id == test_subject; }))
    throw DataError("unknown test subject '" + test_subject + "'");

  FoldData fold;
  FoldAudit& audit = fold.audit;
  audit.test_subject = test_subject;
  std::vector<signal::EpochSet> walking_sets, standing_sets;
  for (std::size_t k = 0; k < data.size(); ++k) {
    if (data[k].id == test_subject) continue;
    walking_sets.push_back(signal::balance(data[k].walking, derive_seed(fold_seed, kBalance + 2 * k)));
    standing_sets.push_back(signal::balance(data[k].standing, derive_seed(fold_seed, kBalance + 2 * k + 1)));
  }
  auto pointers = [](const std::vector<signal::EpochSet>& v) {
    std::vector<const signal::EpochSet*> p;
    for (const auto& e : v) p.push_back(&e);
    return p;
  };
  fold.walking = signal::concat(pointers(walking_sets));
  fold.standing = signal::concat(pointers(standing_sets));
  for (const auto* sets : {&walking_sets, &standing_sets})
    for (const auto& e : *sets) audit.train_trial_subjects.insert(audit.train_trial_subjects.end(), e.trials(), e.subject_id);
  audit.walking_targets = fold.walking.count(signal::Label::target);
  audit.walking_nontargets = fold.walking.count(signal::Label::nontarget);
  audit.standing_targets = fold.standing.count(signal::Label::target);
  audit.standing_nontargets = fold.standing.count(signal::Label::nontarget);

  const std::size_t T = config.time_samples(), C = config.channels();
  if (fold.walking.time_samples != T || fold.walking.channels() != C)
    throw ShapeError("epochs are " + std::to_string(fold.walking.channels()) + " x " +
                     std::to_string(fold.walking.time_samples) + ", models expect " + std::to_string(C) + " x " +
                     std::to_string(T));
  fold.scale = config.scale_inputs ? std::max(rms(fold.walking.data), 1e-12) : 1.0;
  return fold;
}

std::uint64_t fold_seed(const std::vector<SubjectEpochs>& data, const std::string& test_subject, std::uint64_t seed) {
  for (std::size_t k = 0; k < data.size(); ++k)
    if (data[k].id == test_subject) return derive_seed(seed, k);
  throw DataError("unknown test subject '" + test_subject + "'");
}

models::Model pretrain_fold_encoder(const FoldData& fold, const TrainConfig& config, std::uint64_t fold_seed,
                                    PretrainLog* log) {
  return pretrain_encoder(fold.walking, &fold.standing, config, fold.scale, derive_seed(fold_seed, kPretrain), log);
}

FoldResult train_fold(const std::vector<SubjectEpochs>& data, const std::string& test_subject,
                      const TrainConfig& config, std::uint64_t fold_seed, const models::Model* encoder_in,
                      const Progress& progress) {
  FoldData fold = prepare_fold(data, test_subject, config, fold_seed);
  const SubjectEpochs* test = nullptr;
  for (const auto& s : data)
    if (s.id == test_subject) test = &s;
  FoldAudit& audit = fold.audit;
  const signal::EpochSet& walking = fold.walking;
  const signal::EpochSet& standing = fold.standing;
  const double scale = fold.scale;
  const std::size_t T = config.time_samples(), C = config.channels();

  PretrainLog pretrain_log;
  models::Model encoder = encoder_in ? encoder_in->clone()
                                     : pretrain_fold_encoder(fold, config, fold_seed, &pretrain_log);
  encoder.set_trainable(false);
  auto G = models::build_generator(T, C, encoder.latent_dim(), config.architecture, derive_seed(fold_seed, kGenerator));
  auto D = models::build_discriminator(T, C, config.architecture, derive_seed(fold_seed, kDiscriminator));

  const Tensor walking_x = to_tensor(walking, scale);
  const Tensor walking_y = one_hot(walking.labels);
  const Tensor latents = encoder.encode(walking_x);
  const Tensor standing_x = to_tensor(standing, scale);
  const Tensor standing_y = one_hot(standing.labels);

  Rng rng(derive_seed(fold_seed, kBatches));
  auto walk_order = iota(walking.trials());
  auto stand_order = iota(standing.trials());
  std::vector<StepLosses> curve;
  for (std::size_t epoch = 0; epoch < config.gan_epochs; ++epoch) {
    rng.shuffle(walk_order);
    rng.shuffle(stand_order);
    StepLosses mean;
    std::size_t n = 0, cursor = 0;
    for (const auto& b : batches(walk_order, config.batch_size)) {
      std::vector<std::size_t> r;
      for (std::size_t i = 0; i < b.size(); ++i) r.push_back(stand_order[cursor++ % stand_order.size()]);
      auto s = step_from_latent(G, D, rows_of(latents, b), rows_of(standing_x, r), rows_of(standing_y, r),
                                rows_of(walking_x, b), rows_of(walking_y, b), config);
      mean.d_validity += s.d_validity;
      mean.d_class += s.d_class;
      mean.g_adv += s.g_adv;
      mean.g_class += s.g_class;
      mean.g_mse += s.g_mse;
      ++n;
    }
    const double k = 1.0 / static_cast<double>(n);
    mean = {mean.d_validity * k, mean.d_class * k, mean.g_adv * k, mean.g_class * k, mean.g_mse * k};
    curve.push_back(mean);
    if (progress) progress(test_subject, epoch + 1, mean);
  }
  G.epochs_trained = D.epochs_trained = config.gan_epochs;

  signal::EpochSet recon = reconstruct(G, encoder, test->walking, scale);
  audit.test_standing_trials_available = test->standing.trials();
  audit.test_standing_trials_used = test->standing.trials();
  audit.test_walking_trials_available = test->walking.trials();
  audit.test_walking_trials_used = recon.trials();

  return FoldResult{test_subject,  std::move(curve),    std::move(pretrain_log), scale,
                    std::move(G),  std::move(D),        std::move(encoder),      std::move(recon),
                    std::move(fold.audit)};
}

std::vector<FoldResult> run_loso(const std::vector<SubjectEpochs>& data, const TrainConfig& config,
                                 const Progress& progress) {
  if (data.size() < 2) throw DataError("leave-one-subject-out needs at least two subjects (got " + std::to_string(data.size()) + ")");
  std::vector<FoldResult> folds;
  for (std::size_t k = 0; k < data.size(); ++k) {
    try {
      folds.push_back(train_fold(data, data[k].id, config, fold_seed(data, data[k].id, config.seed), nullptr, progress));
    } catch (const Error& e) {
      throw DataError("fold " + std::to_string(k + 1) + " (test subject " + data[k].id + "): " + e.what());
    }
  }
  return folds;
}

signal::EpochSet reconstruct(models::Model& G, models::Model& encoder, const signal::EpochSet& walking, double scale) {
  if (walking.channels() != G.channels() || walking.time_samples != G.time_samples())
    throw ShapeError("epochs are " + std::to_string(walking.channels()) + " x " + std::to_string(walking.time_samples) +
                     ", generator produces " + std::to_string(G.channels()) + " x " + std::to_string(G.time_samples()));
  nn::NoGradGuard guard;
  signal::EpochSet out = walking;
  out.data.clear();
  const auto all = iota(walking.trials());
  for (const auto& b : batches(all, 256)) {
    Tensor y = G.forward(encoder.encode(to_tensor(walking, b, scale)), Mode::infer);
    for (double v : y.data()) out.data.push_back(v * scale);
  }
  return out;
}

void check_protocol(const FoldAudit& audit) {
  const auto& subj = audit.train_trial_subjects;
  if (std::find(subj.begin(), subj.end(), audit.test_subject) != subj.end())
    throw DataError("fold " + audit.test_subject + ": training set contains trials of the test subject");
  if (audit.walking_targets != audit.walking_nontargets || audit.standing_targets != audit.standing_nontargets)
    throw DataError("fold " + audit.test_subject + ": training classes are not balanced");
  if (audit.test_walking_trials_used != audit.test_walking_trials_available ||
      audit.test_standing_trials_used != audit.test_standing_trials_available)
    throw DataError("fold " + audit.test_subject + ": test trial counts were altered");
}

metrics::MetricsReport evaluate_run(std::vector<FoldResult>& folds, const std::vector<SubjectEpochs>& data,
                                    const metrics::SnrOptions& snr_options) {
  using metrics::EvalCondition;
  metrics::MetricsReport report;
  for (const auto& s : data) {
    auto fold = std::find_if(folds.begin(), folds.end(), [&](const FoldResult& f) { return f.test_subject == s.id; });
    if (fold == folds.end()) throw DataError("missing fold for subject " + s.id);
    for (auto c : metrics::kEvalConditions) {
      const signal::EpochSet& e = c == EvalCondition::standing ? s.standing
                                  : c == EvalCondition::walking ? s.walking
                                                                : fold->reconstructed;
      metrics::SubjectMetrics row;
      row.subject = s.id;
      row.condition = c;
      row.auc = metrics::auc(class_scores(fold->discriminator, e, fold->scale), e.labels);
      row.snr = metrics::snr(e, snr_options);
      report.rows.push_back(row);
    }
  }
  metrics::summarize(report);
  return report;
}

}  // namespace erpgan::train
