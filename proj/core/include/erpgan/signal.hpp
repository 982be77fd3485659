#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace erpgan::signal {

enum class Condition { standing, walking };
enum class Label : std::uint8_t { nontarget = 0, target = 1 };

std::string_view condition_name(Condition c);
Condition condition_from_name(std::string_view name);

/// Continuous multichannel recording, channel-major.
struct Recording {
  double sampling_rate = 0.0;
  std::vector<std::string> channel_names;
  std::size_t n_samples = 0;
  std::vector<double> samples;  // channels x n_samples
  Condition condition = Condition::standing;
  std::string subject_id;

  std::size_t channels() const { return channel_names.size(); }
  std::span<double> channel(std::size_t c) { return {samples.data() + c * n_samples, n_samples}; }
  std::span<const double> channel(std::size_t c) const {
    return {samples.data() + c * n_samples, n_samples};
  }
  /// Throws DataError on a non-positive rate, extent mismatch or non-finite sample.
  void validate() const;
};

struct Event {
  std::size_t sample_index = 0;
  Label label = Label::nontarget;
  bool operator==(const Event&) const = default;
};
using EventList = std::vector<Event>;

/// Throws DataError unless indices are strictly increasing and below n_samples.
void validate_events(const EventList& events, std::size_t n_samples);

/// Trials x channels x T, trial-major.
struct EpochSet {
  std::vector<double> data;
  std::vector<Label> labels;
  std::vector<std::string> channel_names;
  std::size_t time_samples = 0;
  double sampling_rate = 0.0;
  double pre_ms = 200.0;
  double post_ms = 800.0;
  std::string subject_id;
  Condition condition = Condition::standing;
  std::size_t skipped = 0;  // events dropped because their window left the recording

  std::size_t trials() const { return labels.size(); }
  std::size_t channels() const { return channel_names.size(); }
  std::size_t trial_size() const { return channels() * time_samples; }
  std::span<double> trial(std::size_t i) { return {data.data() + i * trial_size(), trial_size()}; }
  std::span<const double> trial(std::size_t i) const {
    return {data.data() + i * trial_size(), trial_size()};
  }
  std::size_t count(Label label) const;
};

/// Samples before / after the trigger for a window at `fs`.
std::size_t pre_samples(double pre_ms, double fs);
std::size_t post_samples(double post_ms, double fs);

struct Biquad {
  double b0, b1, b2, a1, a2;  // a0 == 1
};

/// Digital Butterworth high-pass as cascaded second-order sections (bilinear
/// transform with prewarping). `order` must be even.
std::vector<Biquad> butterworth_highpass(int order, double cutoff_hz, double fs);

/// |H(e^{jw})| of a section cascade at frequency f.
double magnitude_response(const std::vector<Biquad>& sos, double f, double fs);

/// Causal cascade filtering; `zi` holds two states per section (updated).
void sosfilt(const std::vector<Biquad>& sos, std::span<double> x, std::vector<double>& zi);

/// Steady-state states for a unit step input.
std::vector<double> sosfilt_zi(const std::vector<Biquad>& sos);

/// Forward-backward filtering with odd reflection padding of `padlen` samples
/// (clamped to n - 1) and steady-state initial conditions.
std::vector<double> filtfilt(const std::vector<Biquad>& sos, std::span<const double> x, std::size_t padlen);

/// Zero-phase 4th-order Butterworth high-pass of every channel.
Recording highpass(const Recording& recording, double cutoff_hz);

/// Rational polyphase resampling with a Kaiser-windowed sinc. The signal is
/// extended with its edge values, so constants stay constant. Output length
/// is round(n * target / source).
std::vector<double> resample(std::span<const double> x, double source_hz, double target_hz);
Recording resample(const Recording& recording, double target_hz);

/// Maps sample indices to a new rate: round(index * target / source).
EventList resample_events(const EventList& events, double source_hz, double target_hz,
                          std::size_t n_samples_out);

/// One epoch per event whose [idx - pre, idx + post) window fits.
EpochSet epoch(const Recording& recording, const EventList& events, double pre_ms = 200.0,
               double post_ms = 800.0);

/// Reduces and reorders the channel axis. Throws DataError on unknown names.
EpochSet select_channels(const EpochSet& epochs, const std::vector<std::string>& names);

/// Keeps every target trial and a seeded uniform subset of non-targets of the
/// same size, in original order. Throws DataError without trials of both classes.
EpochSet balance(const EpochSet& epochs, std::uint64_t seed);

/// Keeps trials at `indices` in the given order.
EpochSet subset(const EpochSet& epochs, const std::vector<std::size_t>& indices);

/// Stacks epoch sets with matching channels, T and rate.
EpochSet concat(const std::vector<const EpochSet*>& sets);

}  // namespace erpgan::signal
