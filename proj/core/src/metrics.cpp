#include "erpgan/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "erpgan/error.hpp"

namespace erpgan::metrics {

namespace {

std::size_t channel_index(const signal::EpochSet& epochs, const std::string& name) {
  auto it = std::find(epochs.channel_names.begin(), epochs.channel_names.end(), name);
  if (it == epochs.channel_names.end()) throw DataError("channel '" + name + "' not in epoch set");
  return static_cast<std::size_t>(it - epochs.channel_names.begin());
}

}  // namespace

double snr_of_waveform(std::span<const double> w, std::size_t onset, double fs, double window_lo_ms,
                       double window_hi_ms) {
  if (onset == 0 || onset > w.size()) throw DataError("waveform has no pre-stimulus baseline");
  double base = 0.0;
  for (std::size_t i = 0; i < onset; ++i) base += w[i] * w[i];
  base = std::sqrt(base / static_cast<double>(onset));
  if (base < 1e-12) throw DomainError("baseline RMS is zero; SNR undefined");
  double peak = 0.0;
  bool any = false;
  for (std::size_t i = onset; i < w.size(); ++i) {
    const double t_ms = 1000.0 * static_cast<double>(i - onset) / fs;
    if (t_ms < window_lo_ms || t_ms > window_hi_ms) continue;
    peak = std::max(peak, std::abs(w[i]));
    any = true;
  }
  if (!any) throw DataError("SNR window lies outside the epoch");
  return peak / base;
}

double snr(const signal::EpochSet& epochs, const SnrOptions& options) {
  const std::size_t c = channel_index(epochs, options.channel);
  const std::size_t T = epochs.time_samples;
  const std::size_t onset = signal::pre_samples(epochs.pre_ms, epochs.sampling_rate);
  auto waveform = [&](std::size_t trial) { return epochs.trial(trial).subspan(c * T, T); };
  if (options.per_trial) {
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < epochs.trials(); ++i) {
      if (epochs.labels[i] != signal::Label::target) continue;
      sum += snr_of_waveform(waveform(i), onset, epochs.sampling_rate, options.window_lo_ms, options.window_hi_ms);
      ++n;
    }
    if (n == 0) throw DataError("SNR needs at least one target trial");
    return sum / static_cast<double>(n);
  }
  const auto avg = grand_average(epochs, signal::Label::target);
  return snr_of_waveform(std::span<const double>(avg).subspan(c * T, T), onset, epochs.sampling_rate,
                         options.window_lo_ms, options.window_hi_ms);
}

double auc(std::span<const double> scores, std::span<const signal::Label> labels) {
  if (scores.size() != labels.size()) throw DataError("AUC: score and label counts differ");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Average ranks (1-based) over tie groups.
  double rank_sum = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] == signal::Label::target) {
        rank_sum += rank;
        ++n_pos;
      }
    }
    i = j;
  }
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) throw DataError("AUC needs both target and non-target trials");
  const double np = static_cast<double>(n_pos);
  return (rank_sum - np * (np + 1.0) / 2.0) / (np * static_cast<double>(n_neg));
}

namespace {

std::vector<double> average_where(const signal::EpochSet& epochs, const signal::Label* label) {
  std::vector<double> avg(epochs.trial_size(), 0.0);
  std::size_t n = 0;
  for (std::size_t i = 0; i < epochs.trials(); ++i) {
    if (label && epochs.labels[i] != *label) continue;
    auto t = epochs.trial(i);
    for (std::size_t k = 0; k < avg.size(); ++k) avg[k] += t[k];
    ++n;
  }
  if (n == 0) throw DataError("grand average over an empty selection");
  for (double& v : avg) v /= static_cast<double>(n);
  return avg;
}

}  // namespace

std::vector<double> grand_average(const signal::EpochSet& epochs) { return average_where(epochs, nullptr); }

std::vector<double> grand_average(const signal::EpochSet& epochs, signal::Label label) {
  return average_where(epochs, &label);
}

double incomplete_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  if (x > (a + 1.0) / (a + b + 2.0)) return 1.0 - incomplete_beta(b, a, 1.0 - x);
  const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  // Modified Lentz evaluation of the continued fraction.
  constexpr double tiny = 1e-300;
  double f = 1.0, c = 1.0, d = 0.0;
  for (int i = 0; i <= 400; ++i) {
    const int m = i / 2;
    double num;
    if (i == 0) {
      num = 1.0;
    } else if (i % 2 == 0) {
      num = (m * (b - m) * x) / ((a + 2.0 * m - 1.0) * (a + 2.0 * m));
    } else {
      num = -((a + m) * (a + b + m) * x) / ((a + 2.0 * m) * (a + 2.0 * m + 1.0));
    }
    d = 1.0 + num * d;
    if (std::abs(d) < tiny) d = tiny;
    d = 1.0 / d;
    c = 1.0 + num / c;
    if (std::abs(c) < tiny) c = tiny;
    const double cd = c * d;
    f *= cd;
    if (std::abs(1.0 - cd) < 1e-15) return std::exp(log_front) * (f - 1.0) / a;
  }
  throw NumericError("incomplete beta continued fraction did not converge");
}

double student_t_cdf(double t, double df) {
  if (!(df > 0.0)) throw DomainError("degrees of freedom must be positive");
  if (std::isinf(t)) return t > 0 ? 1.0 : 0.0;
  const double tail = 0.5 * incomplete_beta(0.5 * df, 0.5, df / (df + t * t));
  return t > 0 ? 1.0 - tail : tail;
}

TTest paired_ttest(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DataError("paired t-test: samples differ in length");
  const std::size_t n = a.size();
  if (n < 2) throw DataError("paired t-test needs at least two pairs");
  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean += a[i] - b[i];
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (std::size_t i = 0; i < n; ++i) ss += (a[i] - b[i] - mean) * (a[i] - b[i] - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  if (!(sd > 1e-300) || sd <= 1e-14 * std::abs(mean)) throw DomainError("paired differences have zero variance");
  TTest r;
  r.df = static_cast<double>(n - 1);
  r.t = mean / (sd / std::sqrt(static_cast<double>(n)));
  r.p = std::min(1.0, incomplete_beta(0.5 * r.df, 0.5, r.df / (r.df + r.t * r.t)));
  return r;
}

std::string_view significance_stars(double p) {
  if (p < 0.01) return "**";
  if (p < 0.05) return "*";
  return "";
}

std::string_view eval_condition_name(EvalCondition c) {
  switch (c) {
    case EvalCondition::standing: return "standing";
    case EvalCondition::walking: return "walking";
    case EvalCondition::reconstructed: return "reconstructed";
  }
  return "?";
}

std::string PairTest::name() const {
  return metric + ":" + std::string(eval_condition_name(a)) + "-" + std::string(eval_condition_name(b));
}

std::vector<double> MetricsReport::values(EvalCondition c, std::string_view metric) const {
  std::vector<double> v;
  for (const auto& r : rows)
    if (r.condition == c) v.push_back(metric == "auc" ? r.auc : r.snr);
  return v;
}

const GroupSummary& MetricsReport::group(EvalCondition c) const {
  for (const auto& g : groups)
    if (g.condition == c) return g;
  throw DataError("report has no summary for " + std::string(eval_condition_name(c)));
}

const PairTest& MetricsReport::test(std::string_view metric, EvalCondition a, EvalCondition b) const {
  for (const auto& t : tests)
    if (t.metric == metric && t.a == a && t.b == b) return t;
  throw DataError("report has no test " + std::string(metric));
}

void summarize(MetricsReport& report) {
  auto mean_sd = [](const std::vector<double>& v, double& mean, double& sd) {
    mean = v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    sd = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
  };
  report.groups.clear();
  for (auto c : kEvalConditions) {
    GroupSummary g;
    g.condition = c;
    mean_sd(report.values(c, "auc"), g.auc_mean, g.auc_sd);
    mean_sd(report.values(c, "snr"), g.snr_mean, g.snr_sd);
    report.groups.push_back(g);
  }
  report.tests.clear();
  const std::pair<EvalCondition, EvalCondition> pairs[] = {
      {EvalCondition::standing, EvalCondition::walking},
      {EvalCondition::reconstructed, EvalCondition::walking},
      {EvalCondition::reconstructed, EvalCondition::standing}};
  for (const char* metric : {"auc", "snr"}) {
    for (auto [a, b] : pairs) {
      const auto va = report.values(a, metric), vb = report.values(b, metric);
      if (va.size() < 2) continue;
      PairTest pt{a, b, metric, {}};
      try {
        pt.test = paired_ttest(va, vb);
      } catch (const DomainError&) {
        pt.test = {0.0, static_cast<double>(va.size() - 1), 1.0};
        if (va != vb) {
          const double sign = va.front() > vb.front() ? 1.0 : -1.0;
          pt.test.t = sign * std::numeric_limits<double>::infinity();
          pt.test.p = 0.0;
        }
      }
      report.tests.push_back(pt);
    }
  }
}

}  // namespace erpgan::metrics
