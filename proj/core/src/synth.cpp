#include "erpgan/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "erpgan/error.hpp"
#include "erpgan/rng.hpp"

namespace erpgan::synth {

namespace {

enum Stream : std::uint64_t {
  kProfile = 0,
  kStandingEvents = 1,
  kWalkingEvents = 2,
  kStandingNoise = 3,
  kWalkingNoise = 4,
  kArtifact = 5,
};

double channel_gain(const std::string& name) {
  if (name == "Pz") return 1.0;
  if (name == "P3" || name == "P4" || name == "POz" || name == "CP1" || name == "CP2" || name == "Cz") return 0.7;
  return 0.4;
}

double rms(const std::vector<double>& x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return std::sqrt(s / static_cast<double>(x.size()));
}

}  // namespace

void SyntheticConfig::validate() const {
  if (n_subjects < 1) throw ConfigError("need at least one subject");
  if (trials_per_subject < 1) throw ConfigError("need at least one trial per subject");
  if (!(target_ratio > 0.0 && target_ratio < 1.0)) throw ConfigError("target ratio must lie in (0, 1)");
  if (!(fs > 0.0)) throw ConfigError("sampling rate must be positive");
  if (channels.empty()) throw ConfigError("need at least one channel");
  for (double a : {erp.n200_amp_uv, erp.p300_amp_uv, erp.subject_jitter_ms, erp.amp_cv, background.rms_uv,
                   background.subject_spread, artifact.multiplier, artifact.transient_rate_hz})
    if (!(a >= 0.0)) throw ConfigError("amplitudes, rates and spreads must be non-negative");
  if (!(erp.width_ms > 0.0)) throw ConfigError("ERP width must be positive");
  if (!(background.subject_spread < 1.0)) throw ConfigError("background spread must be below 1");
  if (!(artifact.gait_hz > 0.0 && artifact.gait_hz < fs / 2.0)) throw ConfigError("gait frequency must lie in (0, fs/2)");
  if (artifact.harmonics < 1) throw ConfigError("need at least one gait harmonic");
  if (!(artifact.transient_tau_ms > 0.0)) throw ConfigError("transient time constant must be positive");
}

SubjectProfile make_profile(const SyntheticConfig& config, std::size_t index) {
  SubjectProfile p;
  char id[16];
  std::snprintf(id, sizeof id, "s%02zu", index + 1);
  p.subject_id = id;
  p.seed = derive_seed(config.seed, index);
  Rng rng(derive_seed(p.seed, kProfile));
  const auto& e = config.erp;
  p.n200_latency_ms = e.n200_latency_ms + e.subject_jitter_ms * rng.normal();
  p.p300_latency_ms = e.p300_latency_ms + e.subject_jitter_ms * rng.normal();
  p.n200_amp_uv = e.n200_amp_uv * std::max(0.0, 1.0 + e.amp_cv * rng.normal());
  p.p300_amp_uv = e.p300_amp_uv * std::max(0.0, 1.0 + e.amp_cv * rng.normal());
  p.width_ms = e.width_ms;
  const double spread = config.background.subject_spread;
  p.standing_noise_rms = config.background.rms_uv * rng.uniform(1.0 - spread, 1.0 + spread);
  p.walking_noise_rms = config.background.rms_uv * rng.uniform(1.0 - spread, 1.0 + spread);
  p.gait_hz = config.artifact.gait_hz * rng.uniform(0.95, 1.05);
  p.harmonics = config.artifact.harmonics;
  p.artifact_multiplier = config.artifact.multiplier;
  p.transient_rate_hz = config.artifact.transient_rate_hz;
  p.transient_tau_ms = config.artifact.transient_tau_ms;
  return p;
}

std::vector<double> erp_template(const SubjectProfile& profile, signal::Label label, double fs, std::size_t T) {
  std::vector<double> w(T, 0.0);
  if (label == signal::Label::nontarget) return w;
  const std::size_t onset = signal::pre_samples(200.0, fs);
  const double sigma = profile.width_ms;
  for (std::size_t i = onset; i < T; ++i) {
    const double t_ms = 1000.0 * static_cast<double>(i - onset) / fs;
    const double dn = (t_ms - profile.n200_latency_ms) / sigma;
    const double dp = (t_ms - profile.p300_latency_ms) / sigma;
    w[i] = -profile.n200_amp_uv * std::exp(-0.5 * dn * dn) + profile.p300_amp_uv * std::exp(-0.5 * dp * dp);
  }
  return w;
}

std::vector<double> background_noise(double target_rms, std::size_t n_samples, double /*fs*/, std::uint64_t seed) {
  // Kellet's economy 1/f filter bank driven by white noise.
  Rng rng(seed);
  double b[7] = {0, 0, 0, 0, 0, 0, 0};
  auto step = [&] {
    const double white = rng.normal();
    b[0] = 0.99886 * b[0] + white * 0.0555179;
    b[1] = 0.99332 * b[1] + white * 0.0750759;
    b[2] = 0.96900 * b[2] + white * 0.1538520;
    b[3] = 0.86650 * b[3] + white * 0.3104856;
    b[4] = 0.55000 * b[4] + white * 0.5329522;
    b[5] = -0.7616 * b[5] - white * 0.0168980;
    const double pink = b[0] + b[1] + b[2] + b[3] + b[4] + b[5] + b[6] + white * 0.5362;
    b[6] = white * 0.115926;
    return pink;
  };
  for (int i = 0; i < 4096; ++i) step();
  std::vector<double> x(n_samples);
  for (double& v : x) v = step();
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(n_samples);
  for (double& v : x) v -= mean;
  const double r = rms(x);
  if (r > 0.0)
    for (double& v : x) v *= target_rms / r;
  return x;
}

std::vector<double> walking_artifact(const SubjectProfile& profile, double background_rms, std::size_t n_samples,
                                     double fs, std::uint64_t seed) {
  std::vector<double> a(n_samples, 0.0);
  if (profile.artifact_multiplier == 0.0 || background_rms == 0.0) return a;
  Rng rng(seed);
  for (std::size_t h = 1; h <= profile.harmonics; ++h) {
    const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double w = 2.0 * std::numbers::pi * profile.gait_hz * static_cast<double>(h) / fs;
    for (std::size_t i = 0; i < n_samples; ++i) a[i] += std::sin(w * static_cast<double>(i) + phase) / static_cast<double>(h);
  }
  // Sparse cable/muscle transients: Poisson onsets, exponential decay.
  const double p = profile.transient_rate_hz / fs;
  const double decay = std::exp(-1000.0 / (profile.transient_tau_ms * fs));
  double level = 0.0;
  for (std::size_t i = 0; i < n_samples; ++i) {
    if (rng.uniform() < p) level += 3.0 * rng.normal();
    a[i] += level;
    level *= decay;
  }
  double mean = 0.0;
  for (double v : a) mean += v;
  mean /= static_cast<double>(n_samples);
  for (double& v : a) v -= mean;
  const double scale = profile.artifact_multiplier * background_rms / rms(a);
  for (double& v : a) v *= scale;
  return a;
}

signal::EventList make_events(std::size_t trials, double target_ratio, double fs, std::uint64_t seed,
                              std::size_t& n_samples) {
  Rng rng(seed);
  signal::EventList events;
  double t = 2.0;
  for (std::size_t k = 0; k < trials; ++k) {
    const auto label = rng.bernoulli(target_ratio) ? signal::Label::target : signal::Label::nontarget;
    events.push_back({static_cast<std::size_t>(std::llround(t * fs)), label});
    t += 0.5 + rng.uniform(0.5, 1.5);
  }
  n_samples = static_cast<std::size_t>(std::llround((t + 1.0) * fs));
  return events;
}

namespace {

Session make_session(const SyntheticConfig& config, const SubjectProfile& profile, signal::Condition condition) {
  const bool walking = condition == signal::Condition::walking;
  Session s;
  std::size_t n = 0;
  s.events = make_events(config.trials_per_subject, config.target_ratio, config.fs,
                         derive_seed(profile.seed, walking ? kWalkingEvents : kStandingEvents), n);
  auto& r = s.recording;
  r.sampling_rate = config.fs;
  r.channel_names = config.channels;
  r.n_samples = n;
  r.condition = condition;
  r.subject_id = profile.subject_id;
  r.samples.reserve(n * config.channels.size());

  const std::size_t pre = signal::pre_samples(200.0, config.fs);
  const std::size_t T = pre + signal::post_samples(800.0, config.fs);
  const auto target = erp_template(profile, signal::Label::target, config.fs, T);
  const double noise_rms = walking ? profile.walking_noise_rms : profile.standing_noise_rms;
  const auto artifact =
      walking ? walking_artifact(profile, noise_rms, n, config.fs, derive_seed(profile.seed, kArtifact))
              : std::vector<double>(n, 0.0);

  for (std::size_t c = 0; c < config.channels.size(); ++c) {
    auto x = background_noise(noise_rms, n, config.fs,
                              derive_seed(derive_seed(profile.seed, walking ? kWalkingNoise : kStandingNoise), c));
    const double gain = channel_gain(config.channels[c]);
    for (const auto& e : s.events) {
      if (e.label != signal::Label::target) continue;
      for (std::size_t i = 0; i < T; ++i) {
        const std::size_t at = e.sample_index + i - pre;
        if (at < n) x[at] += gain * target[i];
      }
    }
    for (std::size_t i = 0; i < n; ++i) x[i] += artifact[i];
    r.samples.insert(r.samples.end(), x.begin(), x.end());
  }
  return s;
}

}  // namespace

Dataset synthesize_dataset(const SyntheticConfig& config) {
  config.validate();
  Dataset d;
  d.sampling_rate = config.fs;
  d.channel_names = config.channels;
  for (std::size_t k = 0; k < config.n_subjects; ++k) {
    const auto profile = make_profile(config, k);
    SubjectData s;
    s.id = profile.subject_id;
    s.standing = make_session(config, profile, signal::Condition::standing);
    s.walking = make_session(config, profile, signal::Condition::walking);
    d.subjects.push_back(std::move(s));
  }
  return d;
}

}  // namespace erpgan::synth
