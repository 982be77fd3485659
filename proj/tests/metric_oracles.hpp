#pragma once

// Independent reimplementations used to cross-check the metrics module.

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "erpgan/signal.hpp"

namespace metric_oracles {

/// Counts target/non-target pairs directly: wins + ties / 2 over all pairs.
inline double auc_pairs(std::span<const double> scores, std::span<const erpgan::signal::Label> labels) {
  double wins = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != erpgan::signal::Label::target) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != erpgan::signal::Label::nontarget) continue;
      pairs += 1.0;
      wins += scores[i] > scores[j] ? 1.0 : scores[i] == scores[j] ? 0.5 : 0.0;
    }
  }
  return wins / pairs;
}

/// Target-average peak over [lo, hi] ms divided by the RMS of the average
/// before the stimulus, written without sharing code with the library.
inline double snr_direct(const erpgan::signal::EpochSet& e, std::size_t channel, double lo_ms, double hi_ms) {
  const std::size_t T = e.time_samples;
  const long onset = std::lround(e.pre_ms * e.sampling_rate / 1000.0);
  std::vector<double> avg(T, 0.0);
  double n = 0.0;
  for (std::size_t k = 0; k < e.labels.size(); ++k) {
    if (e.labels[k] != erpgan::signal::Label::target) continue;
    n += 1.0;
    for (std::size_t i = 0; i < T; ++i) avg[i] += e.data[(k * e.channel_names.size() + channel) * T + i];
  }
  for (double& v : avg) v /= n;
  double ss = 0.0;
  for (long i = 0; i < onset; ++i) ss += avg[i] * avg[i];
  double peak = 0.0;
  for (std::size_t i = 0; i < T; ++i) {
    const double ms = (static_cast<double>(i) - static_cast<double>(onset)) * 1000.0 / e.sampling_rate;
    if (ms >= lo_ms && ms <= hi_ms) peak = std::max(peak, std::fabs(avg[i]));
  }
  return peak / std::sqrt(ss / static_cast<double>(onset));
}

/// Two-tailed critical values t(1 - alpha/2, df) from standard tables.
struct Quantile {
  double df, alpha, t;
};
inline constexpr Quantile kTQuantiles[] = {
    {4, 0.05, 2.776445}, {4, 0.01, 4.604095},  {9, 0.05, 2.262157},
    {9, 0.01, 3.249836}, {17, 0.05, 2.109816}, {17, 0.01, 2.898231},
};

}  // namespace metric_oracles
