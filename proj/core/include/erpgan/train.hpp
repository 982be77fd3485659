#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "erpgan/dataset.hpp"
#include "erpgan/metrics.hpp"
#include "erpgan/models.hpp"
#include "erpgan/nn/optim.hpp"
#include "erpgan/signal.hpp"

namespace erpgan::train {

/// Continuous recordings -> epochs: high-pass, resample, epoch, channel selection.
struct PipelineConfig {
  double highpass_hz = 0.5;
  double working_fs = 128.0;
  double pre_ms = 200.0;
  double post_ms = 800.0;
  std::vector<std::string> channels{"Pz"};
};

struct TrainConfig {
  std::size_t batch_size = 32;
  nn::AdamConfig adam;
  std::size_t pretrain_epochs = 50;
  std::size_t gan_epochs = 200;
  double lambda_rec = 1.0;
  double adversarial_weight = 1.0;
  double class_weight = 1.0;
  /// Generator minimises adv - class instead of adv + class.
  bool subtract_class_loss = false;
  /// Discriminator sees real and fake epochs in one batch instead of two.
  bool joint_batch = false;
  /// Divide network inputs by the RMS of the fold's training walking epochs.
  bool scale_inputs = true;
  std::uint64_t seed = 0;
  models::ArchitectureOptions architecture;
  PipelineConfig pipeline;

  /// Epoch length implied by the pipeline.
  std::size_t time_samples() const;
  std::size_t channels() const { return pipeline.channels.size(); }
  std::size_t latent_dim() const { return time_samples() / 2; }
  /// Throws ConfigError.
  void validate() const;
};

/// Preprocessed, unbalanced epochs of one subject.
struct SubjectEpochs {
  std::string id;
  signal::EpochSet standing;
  signal::EpochSet walking;
};

signal::EpochSet preprocess(const Session& session, const PipelineConfig& pipeline);
std::vector<SubjectEpochs> preprocess(const Dataset& dataset, const PipelineConfig& pipeline);

/// Trial-major (N, C, T, 1) tensor of epochs, each value divided by `scale`.
nn::Tensor to_tensor(const signal::EpochSet& epochs, double scale = 1.0);
nn::Tensor to_tensor(const signal::EpochSet& epochs, const std::vector<std::size_t>& trials, double scale);
/// (N, 2) one-hot rows, column 1 = target.
nn::Tensor one_hot(const std::vector<signal::Label>& labels);

struct PretrainLog {
  std::vector<double> loss;            // per epoch, batch mean
  std::vector<double> train_accuracy;  // per epoch
  double heldout_auc = 0.0;            // standing epochs, NaN when unavailable
};

/// Trains encoder trunk + class head with cross-entropy on walking epochs,
/// reports standing AUC, then strips the head. Throws DataError on empty input.
models::Model pretrain_encoder(const signal::EpochSet& walking, const signal::EpochSet* standing,
                               const TrainConfig& config, double scale, std::uint64_t seed,
                               PretrainLog* log = nullptr);

struct StepLosses {
  double d_validity = 0.0;
  double d_class = 0.0;
  double g_adv = 0.0;
  double g_class = 0.0;
  double g_mse = 0.0;  // unweighted
};

/// One discriminator update then one generator update. Inputs are already
/// scaled (N, C, T, 1) tensors; labels are one-hot (N, 2). Throws NumericError
/// naming the offending term if a loss is not finite. A network switched to
/// set_trainable(false) is evaluated but not updated. The encoder is never updated.
StepLosses gan_train_step(models::Model& G, models::Model& D, models::Model& encoder, const nn::Tensor& real,
                          const nn::Tensor& real_labels, const nn::Tensor& walking,
                          const nn::Tensor& walking_labels, const TrainConfig& config);

/// What the fold actually trained and tested on.
struct FoldAudit {
  std::string test_subject;
  std::vector<std::string> train_trial_subjects;  // one entry per training trial (walking then standing)
  std::size_t walking_targets = 0, walking_nontargets = 0;
  std::size_t standing_targets = 0, standing_nontargets = 0;
  std::size_t test_standing_trials_available = 0, test_standing_trials_used = 0;
  std::size_t test_walking_trials_available = 0, test_walking_trials_used = 0;
};

struct FoldResult {
  std::string test_subject;
  std::vector<StepLosses> losses;  // per GAN epoch, batch means
  PretrainLog pretrain;
  double scale = 1.0;
  models::Model generator;
  models::Model discriminator;
  models::Model encoder;
  signal::EpochSet reconstructed;  // test subject's walking epochs, all trials
  FoldAudit audit;
};

/// Balanced, pooled training epochs of one fold and the input scale.
struct FoldData {
  signal::EpochSet walking;
  signal::EpochSet standing;
  double scale = 1.0;
  FoldAudit audit;  // training-side fields only
};

FoldData prepare_fold(const std::vector<SubjectEpochs>& data, const std::string& test_subject,
                      const TrainConfig& config, std::uint64_t fold_seed);

/// derive_seed(seed, index of the test subject), the seed run_loso uses.
std::uint64_t fold_seed(const std::vector<SubjectEpochs>& data, const std::string& test_subject, std::uint64_t seed);

/// The encoder train_fold would pretrain for this fold.
models::Model pretrain_fold_encoder(const FoldData& fold, const TrainConfig& config, std::uint64_t fold_seed,
                                    PretrainLog* log = nullptr);

using Progress = std::function<void(const std::string& fold, std::size_t epoch, const StepLosses& losses)>;

/// Leave `test_subject` out; trains on the others. `encoder` skips pretraining.
FoldResult train_fold(const std::vector<SubjectEpochs>& data, const std::string& test_subject,
                      const TrainConfig& config, std::uint64_t fold_seed,
                      const models::Model* encoder = nullptr, const Progress& progress = {});

/// One fold per subject, fold k seeded with derive_seed(config.seed, k).
std::vector<FoldResult> run_loso(const std::vector<SubjectEpochs>& data, const TrainConfig& config,
                                 const Progress& progress = {});

/// Infer-mode reconstructions, labels carried through, values in input units.
signal::EpochSet reconstruct(models::Model& G, models::Model& encoder, const signal::EpochSet& walking,
                             double scale = 1.0);

/// Target-class probabilities of the discriminator's class head.
std::vector<double> class_scores(models::Model& D, const signal::EpochSet& epochs, double scale = 1.0);

/// Throws DataError describing the first violation: test-subject trials in
/// training, unbalanced training classes, or altered test trial counts.
void check_protocol(const FoldAudit& audit);

/// Per subject: AUC of its fold's discriminator class head and SNR on the
/// standing, walking and reconstructed test epochs; then group tests.
/// Throws DataError when a subject has no fold.
metrics::MetricsReport evaluate_run(std::vector<FoldResult>& folds, const std::vector<SubjectEpochs>& data,
                                    const metrics::SnrOptions& snr_options = {});

}  // namespace erpgan::train
