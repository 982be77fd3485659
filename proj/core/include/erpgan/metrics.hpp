#pragma once

#include <array>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "erpgan/signal.hpp"

namespace erpgan::metrics {

struct SnrOptions {
  std::string channel = "Pz";
  double window_lo_ms = 250.0;
  double window_hi_ms = 500.0;
  /// Mean of single-trial ratios instead of the ratio of the target average.
  bool per_trial = false;
};

/// |extremum| of the target-average waveform inside the window divided by its
/// RMS over the pre-stimulus baseline. Throws DataError without target trials
/// or for an unknown channel, DomainError for a zero baseline.
double snr(const signal::EpochSet& epochs, const SnrOptions& options = {});

/// Same quantity for one waveform (T samples, stimulus at sample `onset`).
double snr_of_waveform(std::span<const double> w, std::size_t onset, double fs, double window_lo_ms,
                       double window_hi_ms);

/// Rank-based Mann-Whitney AUC, ties count 1/2. Throws DataError unless both classes occur.
double auc(std::span<const double> scores, std::span<const signal::Label> labels);

/// Mean over matching trials, channels x T. No filter means every trial.
/// Throws DataError when nothing matches.
std::vector<double> grand_average(const signal::EpochSet& epochs);
std::vector<double> grand_average(const signal::EpochSet& epochs, signal::Label label);

struct TTest {
  double t = 0.0;
  double df = 0.0;
  double p = 1.0;
};

/// Two-tailed paired t-test. Throws DataError on a length mismatch or n < 2,
/// DomainError when the differences have zero variance.
TTest paired_ttest(std::span<const double> a, std::span<const double> b);

/// Regularized incomplete beta I_x(a, b) (continued fraction).
double incomplete_beta(double a, double b, double x);
/// Student-t cumulative distribution.
double student_t_cdf(double t, double df);

/// "**" below 0.01, "*" below 0.05, otherwise empty.
std::string_view significance_stars(double p);

enum class EvalCondition { standing, walking, reconstructed };
inline constexpr std::array<EvalCondition, 3> kEvalConditions{EvalCondition::standing, EvalCondition::walking,
                                                              EvalCondition::reconstructed};
std::string_view eval_condition_name(EvalCondition c);

struct SubjectMetrics {
  std::string subject;
  EvalCondition condition = EvalCondition::standing;
  double auc = 0.0;
  double snr = 0.0;
};

struct PairTest {
  EvalCondition a = EvalCondition::standing;
  EvalCondition b = EvalCondition::walking;
  std::string metric;  // "auc" or "snr"
  TTest test;
  std::string name() const;  // e.g. "snr:reconstructed-walking"
};

struct GroupSummary {
  EvalCondition condition = EvalCondition::standing;
  double auc_mean = 0.0, auc_sd = 0.0;
  double snr_mean = 0.0, snr_sd = 0.0;
};

struct MetricsReport {
  std::vector<SubjectMetrics> rows;  // subject-major, conditions in kEvalConditions order
  std::vector<GroupSummary> groups;
  std::vector<PairTest> tests;

  std::vector<double> values(EvalCondition c, std::string_view metric) const;
  const GroupSummary& group(EvalCondition c) const;
  const PairTest& test(std::string_view metric, EvalCondition a, EvalCondition b) const;
};

/// Fills groups and tests from rows (tests need >= 2 subjects; zero-variance
/// pairs get t = 0, p = 1).
void summarize(MetricsReport& report);

}  // namespace erpgan::metrics
