#include "erpgan/signal.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <numeric>
#include <sstream>

#include "erpgan/error.hpp"
#include "erpgan/rng.hpp"

namespace erpgan::signal {

std::string_view condition_name(Condition c) {
  return c == Condition::standing ? "standing" : "walking";
}

Condition condition_from_name(std::string_view name) {
  if (name == "standing") return Condition::standing;
  if (name == "walking") return Condition::walking;
  throw ConfigError("unknown condition '" + std::string(name) + "' (expected standing or walking)");
}

void Recording::validate() const {
  if (!(sampling_rate > 0.0) || !std::isfinite(sampling_rate))
    throw DataError("recording " + subject_id + ": sampling rate must be positive");
  if (channel_names.empty()) throw DataError("recording " + subject_id + ": no channels");
  if (samples.size() != channel_names.size() * n_samples)
    throw DataError("recording " + subject_id + ": sample array does not match channels x samples");
  for (double v : samples)
    if (!std::isfinite(v)) throw DataError("recording " + subject_id + ": non-finite sample");
}

void validate_events(const EventList& events, std::size_t n_samples) {
  for (std::size_t i = 0; i < events.size(); ++i) {
    if (events[i].sample_index >= n_samples)
      throw DataError("event " + std::to_string(i) + " at sample " + std::to_string(events[i].sample_index) +
                      " is outside the recording (" + std::to_string(n_samples) + " samples)");
    if (i > 0 && events[i].sample_index <= events[i - 1].sample_index)
      throw DataError("event sample indices must be strictly increasing (event " + std::to_string(i) + ")");
  }
}

std::size_t EpochSet::count(Label label) const {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), label));
}

std::size_t pre_samples(double pre_ms, double fs) {
  return static_cast<std::size_t>(std::llround(pre_ms / 1000.0 * fs));
}

std::size_t post_samples(double post_ms, double fs) {
  return static_cast<std::size_t>(std::llround(post_ms / 1000.0 * fs));
}

// ---------------------------------------------------------------- filtering

std::vector<Biquad> butterworth_highpass(int order, double cutoff_hz, double fs) {
  if (order < 2 || order % 2 != 0) throw ConfigError("filter order must be a positive even number");
  if (!(cutoff_hz > 0.0) || !(cutoff_hz < fs / 2.0))
    throw ConfigError("high-pass cutoff must lie in (0, fs/2) (got " + std::to_string(cutoff_hz) +
                      " Hz at fs " + std::to_string(fs) + " Hz)");
  const double w = std::tan(std::numbers::pi * cutoff_hz / fs);
  const int n = order;
  std::vector<Biquad> sos;
  // Prototype pole pairs sorted from most to least damped.
  for (int k = 0; k < n / 2; ++k) {
    const double zeta = std::sin(std::numbers::pi * (2 * (n / 2 - k) - 1) / (2.0 * n));
    const double a0 = 1.0 + 2.0 * zeta * w + w * w;
    sos.push_back({1.0 / a0, -2.0 / a0, 1.0 / a0, 2.0 * (w * w - 1.0) / a0,
                   (1.0 - 2.0 * zeta * w + w * w) / a0});
  }
  // Collect the overall gain in the first section.
  double gain = 1.0;
  for (std::size_t i = 1; i < sos.size(); ++i) {
    gain *= sos[i].b0;
    sos[i].b1 /= sos[i].b0;
    sos[i].b2 /= sos[i].b0;
    sos[i].b0 = 1.0;
  }
  sos[0].b0 *= gain;
  sos[0].b1 *= gain;
  sos[0].b2 *= gain;
  return sos;
}

double magnitude_response(const std::vector<Biquad>& sos, double f, double fs) {
  const std::complex<double> z1 = std::polar(1.0, -2.0 * std::numbers::pi * f / fs);
  const std::complex<double> z2 = z1 * z1;
  std::complex<double> h = 1.0;
  for (const auto& s : sos) h *= (s.b0 + s.b1 * z1 + s.b2 * z2) / (1.0 + s.a1 * z1 + s.a2 * z2);
  return std::abs(h);
}

void sosfilt(const std::vector<Biquad>& sos, std::span<double> x, std::vector<double>& zi) {
  if (zi.size() != 2 * sos.size()) zi.assign(2 * sos.size(), 0.0);
  for (std::size_t k = 0; k < sos.size(); ++k) {
    const Biquad& s = sos[k];
    double z1 = zi[2 * k], z2 = zi[2 * k + 1];
    for (double& v : x) {
      const double in = v;
      const double out = s.b0 * in + z1;
      z1 = s.b1 * in - s.a1 * out + z2;
      z2 = s.b2 * in - s.a2 * out;
      v = out;
    }
    zi[2 * k] = z1;
    zi[2 * k + 1] = z2;
  }
}

std::vector<double> sosfilt_zi(const std::vector<Biquad>& sos) {
  std::vector<double> zi(2 * sos.size());
  double scale = 1.0;
  for (std::size_t k = 0; k < sos.size(); ++k) {
    const Biquad& s = sos[k];
    const double dc = (s.b0 + s.b1 + s.b2) / (1.0 + s.a1 + s.a2);
    const double z2 = s.b2 - s.a2 * dc;
    const double z1 = s.b1 - s.a1 * dc + z2;
    zi[2 * k] = scale * z1;
    zi[2 * k + 1] = scale * z2;
    scale *= dc;
  }
  return zi;
}

std::vector<double> filtfilt(const std::vector<Biquad>& sos, std::span<const double> x, std::size_t padlen) {
  const std::size_t n = x.size();
  if (n == 0) return {};
  padlen = std::min(padlen, n - 1);
  std::vector<double> ext(n + 2 * padlen);
  for (std::size_t i = 0; i < padlen; ++i) {
    ext[i] = 2.0 * x[0] - x[padlen - i];
    ext[n + padlen + i] = 2.0 * x[n - 1] - x[n - 2 - i];
  }
  std::copy(x.begin(), x.end(), ext.begin() + static_cast<std::ptrdiff_t>(padlen));

  const auto zi = sosfilt_zi(sos);
  std::vector<double> state(zi.size());
  const double x0 = ext.front();
  for (std::size_t i = 0; i < zi.size(); ++i) state[i] = zi[i] * x0;
  sosfilt(sos, ext, state);

  std::reverse(ext.begin(), ext.end());
  const double y0 = ext.front();
  for (std::size_t i = 0; i < zi.size(); ++i) state[i] = zi[i] * y0;
  sosfilt(sos, ext, state);
  std::reverse(ext.begin(), ext.end());

  return {ext.begin() + static_cast<std::ptrdiff_t>(padlen),
          ext.begin() + static_cast<std::ptrdiff_t>(padlen + n)};
}

Recording highpass(const Recording& recording, double cutoff_hz) {
  constexpr int kOrder = 4;
  const auto sos = butterworth_highpass(kOrder, cutoff_hz, recording.sampling_rate);
  Recording out = recording;
  for (std::size_t c = 0; c < recording.channels(); ++c) {
    auto y = filtfilt(sos, recording.channel(c), 3 * kOrder);
    std::copy(y.begin(), y.end(), out.channel(c).begin());
  }
  return out;
}

// ---------------------------------------------------------------- resampling

namespace {

struct Ratio {
  std::uint64_t up, down;
};

Ratio rational_ratio(double source_hz, double target_hz) {
  // Rates are expressed in millihertz so 128 and 500 (and 250.5) are exact.
  const auto to_mhz = [](double hz) {
    const double m = std::round(hz * 1000.0);
    if (std::abs(m - hz * 1000.0) > 1e-6 * std::max(1.0, m) || m < 1.0 || m > 1e12)
      throw ConfigError("sampling rate " + std::to_string(hz) + " Hz is not a multiple of 1 mHz");
    return static_cast<std::uint64_t>(m);
  };
  const std::uint64_t s = to_mhz(source_hz), t = to_mhz(target_hz);
  const std::uint64_t g = std::gcd(s, t);
  return {t / g, s / g};
}

}  // namespace

std::vector<double> resample(std::span<const double> x, double source_hz, double target_hz) {
  if (!(source_hz > 0.0)) throw ConfigError("source sampling rate must be positive");
  if (!(target_hz > 0.0)) throw ConfigError("target sampling rate must be positive");
  const std::size_t n = x.size();
  const auto n_out = static_cast<std::size_t>(std::llround(static_cast<double>(n) * target_hz / source_hz));
  if (n == 0 || n_out == 0) return std::vector<double>(n_out, n == 0 ? 0.0 : x[0]);
  const Ratio r = rational_ratio(source_hz, target_hz);
  if (r.up == 1 && r.down == 1) return {x.begin(), x.begin() + static_cast<std::ptrdiff_t>(std::min(n, n_out))};
  if (r.up > 4096 || r.down > 4096)
    throw ConfigError("resampling ratio " + std::to_string(r.up) + "/" + std::to_string(r.down) + " is too large");

  const std::uint64_t max_rate = std::max(r.up, r.down);
  const std::int64_t half = static_cast<std::int64_t>(10 * max_rate);
  const std::int64_t len = 2 * half + 1;
  const double fc = 1.0 / static_cast<double>(max_rate);
  constexpr double kBeta = 5.0;
  const double i0_beta = std::cyl_bessel_i(0.0, kBeta);
  std::vector<double> h(static_cast<std::size_t>(len));
  for (std::int64_t j = 0; j < len; ++j) {
    const double m = static_cast<double>(j - half);
    const double arg = std::numbers::pi * fc * m;
    const double sinc = m == 0.0 ? 1.0 : std::sin(arg) / arg;
    const double ratio = m / static_cast<double>(half);
    const double win = std::cyl_bessel_i(0.0, kBeta * std::sqrt(std::max(0.0, 1.0 - ratio * ratio))) / i0_beta;
    h[static_cast<std::size_t>(j)] = sinc * win;
  }
  // Normalise every polyphase branch to unit DC gain.
  const auto up = static_cast<std::int64_t>(r.up);
  for (std::int64_t phase = 0; phase < up; ++phase) {
    double s = 0.0;
    for (std::int64_t j = phase; j < len; j += up) s += h[static_cast<std::size_t>(j)];
    for (std::int64_t j = phase; j < len; j += up) h[static_cast<std::size_t>(j)] /= s;
  }

  const auto down = static_cast<std::int64_t>(r.down);
  const auto last = static_cast<std::int64_t>(n) - 1;
  std::vector<double> y(n_out);
  for (std::size_t m = 0; m < n_out; ++m) {
    // Upsampled position of output m, shifted by the filter delay.
    const std::int64_t t = static_cast<std::int64_t>(m) * down + half;
    const std::int64_t phase = t % up;
    std::int64_t i = t / up;  // input index paired with tap `phase`
    double acc = 0.0;
    for (std::int64_t j = phase; j < len; j += up, --i) {
      acc += h[static_cast<std::size_t>(j)] * x[static_cast<std::size_t>(std::clamp<std::int64_t>(i, 0, last))];
    }
    y[m] = acc;
  }
  return y;
}

Recording resample(const Recording& recording, double target_hz) {
  Recording out;
  out.sampling_rate = target_hz;
  out.channel_names = recording.channel_names;
  out.condition = recording.condition;
  out.subject_id = recording.subject_id;
  for (std::size_t c = 0; c < recording.channels(); ++c) {
    auto y = resample(recording.channel(c), recording.sampling_rate, target_hz);
    out.n_samples = y.size();
    out.samples.insert(out.samples.end(), y.begin(), y.end());
  }
  return out;
}

EventList resample_events(const EventList& events, double source_hz, double target_hz,
                          std::size_t n_samples_out) {
  EventList out;
  out.reserve(events.size());
  for (const auto& e : events) {
    auto idx = static_cast<std::size_t>(std::llround(static_cast<double>(e.sample_index) * target_hz / source_hz));
    if (n_samples_out > 0) idx = std::min(idx, n_samples_out - 1);
    if (!out.empty() && idx <= out.back().sample_index)
      throw DataError("events at samples " + std::to_string(out.back().sample_index) + " and " +
                      std::to_string(idx) + " collide after resampling to " + std::to_string(target_hz) + " Hz");
    out.push_back({idx, e.label});
  }
  return out;
}

// ---------------------------------------------------------------- epochs

EpochSet epoch(const Recording& recording, const EventList& events, double pre_ms, double post_ms) {
  EpochSet out;
  out.sampling_rate = recording.sampling_rate;
  out.pre_ms = pre_ms;
  out.post_ms = post_ms;
  out.channel_names = recording.channel_names;
  out.subject_id = recording.subject_id;
  out.condition = recording.condition;
  const std::size_t pre = pre_samples(pre_ms, recording.sampling_rate);
  const std::size_t post = post_samples(post_ms, recording.sampling_rate);
  out.time_samples = pre + post;
  for (const auto& e : events) {
    if (e.sample_index < pre || e.sample_index + post > recording.n_samples) {
      ++out.skipped;
      continue;
    }
    for (std::size_t c = 0; c < recording.channels(); ++c) {
      auto ch = recording.channel(c);
      out.data.insert(out.data.end(), ch.begin() + static_cast<std::ptrdiff_t>(e.sample_index - pre),
                      ch.begin() + static_cast<std::ptrdiff_t>(e.sample_index + post));
    }
    out.labels.push_back(e.label);
  }
  return out;
}

EpochSet select_channels(const EpochSet& epochs, const std::vector<std::string>& names) {
  std::vector<std::size_t> index;
  for (const auto& name : names) {
    auto it = std::find(epochs.channel_names.begin(), epochs.channel_names.end(), name);
    if (it == epochs.channel_names.end()) {
      std::ostringstream msg;
      msg << "unknown channel '" << name << "' (available:";
      for (const auto& a : epochs.channel_names) msg << ' ' << a;
      msg << ')';
      throw DataError(msg.str());
    }
    index.push_back(static_cast<std::size_t>(it - epochs.channel_names.begin()));
  }
  EpochSet out = epochs;
  out.channel_names = names;
  out.data.clear();
  out.data.reserve(epochs.trials() * names.size() * epochs.time_samples);
  for (std::size_t i = 0; i < epochs.trials(); ++i) {
    auto trial = epochs.trial(i);
    for (std::size_t c : index) {
      auto first = trial.begin() + static_cast<std::ptrdiff_t>(c * epochs.time_samples);
      out.data.insert(out.data.end(), first, first + static_cast<std::ptrdiff_t>(epochs.time_samples));
    }
  }
  return out;
}

EpochSet subset(const EpochSet& epochs, const std::vector<std::size_t>& indices) {
  EpochSet out = epochs;
  out.data.clear();
  out.labels.clear();
  out.data.reserve(indices.size() * epochs.trial_size());
  for (std::size_t i : indices) {
    if (i >= epochs.trials()) throw DataError("trial index " + std::to_string(i) + " out of range");
    auto t = epochs.trial(i);
    out.data.insert(out.data.end(), t.begin(), t.end());
    out.labels.push_back(epochs.labels[i]);
  }
  return out;
}

EpochSet balance(const EpochSet& epochs, std::uint64_t seed) {
  std::vector<std::size_t> targets, nontargets;
  for (std::size_t i = 0; i < epochs.trials(); ++i)
    (epochs.labels[i] == Label::target ? targets : nontargets).push_back(i);
  if (targets.empty()) throw DataError("cannot balance " + epochs.subject_id + ": no target trials");
  if (nontargets.empty()) throw DataError("cannot balance " + epochs.subject_id + ": no non-target trials");

  // The majority class is subsampled; with the oddball ratio that is always
  // the non-target class.
  auto& major = nontargets.size() >= targets.size() ? nontargets : targets;
  const std::size_t keep = std::min(targets.size(), nontargets.size());
  Rng rng(seed);
  for (std::size_t i = 0; i < keep; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(major.size() - i));
    std::swap(major[i], major[j]);
  }
  major.resize(keep);

  std::vector<std::size_t> chosen = targets;
  chosen.insert(chosen.end(), nontargets.begin(), nontargets.end());
  std::sort(chosen.begin(), chosen.end());
  return subset(epochs, chosen);
}

EpochSet concat(const std::vector<const EpochSet*>& sets) {
  if (sets.empty()) throw DataError("no epoch sets to concatenate");
  EpochSet out = *sets.front();
  for (std::size_t k = 1; k < sets.size(); ++k) {
    const EpochSet& s = *sets[k];
    if (s.channel_names != out.channel_names || s.time_samples != out.time_samples ||
        s.sampling_rate != out.sampling_rate)
      throw DataError("epoch sets " + out.subject_id + " and " + s.subject_id + " have different layouts");
    out.data.insert(out.data.end(), s.data.begin(), s.data.end());
    out.labels.insert(out.labels.end(), s.labels.begin(), s.labels.end());
    out.skipped += s.skipped;
  }
  if (sets.size() > 1) out.subject_id = "pooled";
  return out;
}

}  // namespace erpgan::signal
