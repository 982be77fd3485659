#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "erpgan/dataset.hpp"
#include "erpgan/signal.hpp"

namespace erpgan::synth {

struct ErpConfig {
  double n200_latency_ms = 200.0;
  double n200_amp_uv = 6.0;  // magnitude of the negative deflection
  double p300_latency_ms = 300.0;
  double p300_amp_uv = 10.0;
  double width_ms = 40.0;  // Gaussian sigma of both components
  double subject_jitter_ms = 15.0;
  double amp_cv = 0.15;
};

struct BackgroundConfig {
  double rms_uv = 10.0;
  double subject_spread = 0.1;  // per-subject, per-condition RMS scale in [1 - s, 1 + s]
};

struct ArtifactConfig {
  double gait_hz = 2.0;
  std::size_t harmonics = 4;
  double multiplier = 3.0;  // artifact RMS / background RMS
  double transient_rate_hz = 0.2;
  double transient_tau_ms = 60.0;
};

struct SyntheticConfig {
  std::size_t n_subjects = 6;
  std::size_t trials_per_subject = 300;
  double target_ratio = 0.2;
  double fs = 500.0;
  std::vector<std::string> channels{"Pz"};
  ErpConfig erp;
  BackgroundConfig background;
  ArtifactConfig artifact;
  std::uint64_t seed = 0;

  /// Throws ConfigError.
  void validate() const;
};

struct SubjectProfile {
  std::string subject_id;
  std::uint64_t seed = 0;
  double n200_latency_ms = 0.0;
  double n200_amp_uv = 0.0;
  double p300_latency_ms = 0.0;
  double p300_amp_uv = 0.0;
  double width_ms = 0.0;
  double standing_noise_rms = 0.0;
  double walking_noise_rms = 0.0;
  double gait_hz = 0.0;
  std::size_t harmonics = 0;
  double artifact_multiplier = 0.0;
  double transient_rate_hz = 0.0;
  double transient_tau_ms = 0.0;
};

/// Deterministic in (config, index); subject ids are "s01", "s02", ...
SubjectProfile make_profile(const SyntheticConfig& config, std::size_t index);

/// Target: negative and positive Gaussian bumps after the stimulus at sample
/// round(0.2 * fs); non-target: zeros. Zero before the stimulus.
std::vector<double> erp_template(const SubjectProfile& profile, signal::Label label, double fs, std::size_t T);

/// Zero-mean pink noise scaled to exactly `rms`.
std::vector<double> background_noise(double rms, std::size_t n_samples, double fs, std::uint64_t seed);

/// Gait harmonics with random phases plus sparse decaying transients, scaled
/// to profile.artifact_multiplier x `background_rms`.
std::vector<double> walking_artifact(const SubjectProfile& profile, double background_rms, std::size_t n_samples,
                                     double fs, std::uint64_t seed);

/// Stimulus schedule: onsets every 0.5 s + U(0.5, 1.5) s, Bernoulli labels.
signal::EventList make_events(std::size_t trials, double target_ratio, double fs, std::uint64_t seed,
                              std::size_t& n_samples);

Dataset synthesize_dataset(const SyntheticConfig& config);

}  // namespace erpgan::synth
