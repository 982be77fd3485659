// Acceptance run: one PASS/FAIL line per criterion, exit status 0 only if all pass.
// `acceptance 1 4` runs a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "erpgan/error.hpp"
#include "erpgan/metrics.hpp"
#include "erpgan/nn/grad_check.hpp"
#include "erpgan/nn/layer.hpp"
#include "erpgan/nn/ops.hpp"
#include "erpgan/signal.hpp"
#include "erpgan/synth.hpp"
#include "erpgan/train.hpp"
#include "metric_oracles.hpp"
#include "model_gradcheck.hpp"
#include "layer_table.hpp"
#include "tiny_run.hpp"

using namespace erpgan;
namespace fs = std::filesystem;

namespace {

// Tolerances and budgets.
constexpr int kGradSeeds = 20;
constexpr double kGradTol = 1e-6;
constexpr double kAucTol = 1e-12;
constexpr double kSnrTol = 1e-12;
constexpr double kPTol = 1e-4;
constexpr double kStopbandGain = 0.01, kPassbandGain = 0.99, kCutoffGain = 0.5, kCutoffTol = 0.05;
constexpr double kStandingAucMin = 0.85, kAucDrop = 0.05;
constexpr double kSnrAlpha = 0.05;
constexpr double kMseRatioMax = 0.25;
// End-to-end run settings that differ from the library defaults. With lambda 1
// the MSE ratio stays near 0.8; see the decisions ledger for the sweep.
constexpr double kLambdaRec = 40.0;
constexpr bool kJointBatch = true;
constexpr double kBudget[8] = {0, 120, 1, 10, 10, 1800, 180, 1};

struct Outcome {
  bool pass = true;
  std::ostringstream detail;
  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [" << what << "]";
    }
  }
};

std::string fmt(double v, int precision = 4) {
  std::ostringstream s;
  s.precision(precision);
  s << v;
  return s.str();
}

nn::Tensor random_tensor(nn::Shape shape, Rng& rng) {
  nn::Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.normal();
  return t;
}

void gradients(Outcome& o) {
  double worst = 0.0;
  std::string where;
  auto note = [&](const nn::GradCheckResult& r, const std::string& what) {
    if (r.max_relative_error >= worst) worst = r.max_relative_error, where = what + " " + r.worst_parameter;
    o.require(r.checked > 0, what + " checked nothing");
  };
  for (int seed = 1; seed <= kGradSeeds; ++seed) {
    Rng rng(static_cast<std::uint64_t>(seed) * 7919);
    const auto s = std::to_string(seed);
    // Each trainable layer kind on its own, train mode, batch 4.
    {
      nn::Layer dense(nn::LayerSpec::dense(8), {16}, "dense", rng);
      const auto x = random_tensor({4, 16}, rng), w = random_tensor({4, 8}, rng);
      std::vector<nn::Parameter*> p;
      for (auto& q : dense.parameters()) p.push_back(&q);
      note(nn::grad_check([&] { return nn::ops::mul(dense.forward(x, nn::Mode::train, rng), w); }, p), "dense/" + s);
    }
    {
      nn::Layer conv(nn::LayerSpec::conv2d(4, 3, 3), {2, 16, 3}, "conv2d", rng);
      const auto x = random_tensor({4, 2, 16, 3}, rng), w = random_tensor({4, 2, 16, 4}, rng);
      std::vector<nn::Parameter*> p;
      for (auto& q : conv.parameters()) p.push_back(&q);
      note(nn::grad_check([&] { return nn::ops::mul(conv.forward(x, nn::Mode::train, rng), w); }, p), "conv2d/" + s);
    }
    {
      nn::Layer bn(nn::LayerSpec::batchnorm(), {2, 16, 3}, "batchnorm", rng);
      for (auto& q : bn.parameters())
        for (double& v : q.value.data()) v = rng.normal();
      const auto x = random_tensor({4, 2, 16, 3}, rng), w = random_tensor({4, 2, 16, 3}, rng);
      std::vector<nn::Parameter*> p;
      for (auto& q : bn.parameters()) p.push_back(&q);
      note(nn::grad_check([&] { return nn::ops::mul(bn.forward(x, nn::Mode::train, rng, false), w); }, p),
           "batchnorm/" + s);
    }
    note(model_gradcheck::generator(16, 1, static_cast<std::uint64_t>(seed)), "generator/" + s);
    note(model_gradcheck::discriminator(16, 1, static_cast<std::uint64_t>(seed)), "discriminator/" + s);
  }
  o.require(worst < kGradTol, "max rel error " + fmt(worst) + " at " + where);
  o.detail << " max rel error " << fmt(worst, 3) << " over " << kGradSeeds << " seeds";
}

void table_one(Outcome& o) {
  int checked = 0;
  for (std::size_t T : {16, 128, 256})
    for (std::size_t C : {1, 32}) {
      const auto g = models::build_generator(T, C, T / 2, {}, 1);
      const auto d = models::build_discriminator(T, C, {}, 1);
      const auto eg = layer_table::compare(g.shape_trace(), layer_table::generator(T, C));
      const auto ed = layer_table::compare(d.shape_trace(), layer_table::discriminator(T, C));
      o.require(eg.empty(), "G T=" + std::to_string(T) + " C=" + std::to_string(C) + ": " + eg);
      o.require(ed.empty(), "D T=" + std::to_string(T) + " C=" + std::to_string(C) + ": " + ed);
      checked += 2;
    }
  o.detail << " " << checked << " traces";
}

void metric_oracles_check(Outcome& o) {
  Rng rng(2024);
  double auc_err = 0.0, snr_err = 0.0, p_err = 0.0;
  for (int k = 0; k < 100; ++k) {
    const std::size_t n = 2 + static_cast<std::size_t>(rng.uniform() * 49.0);
    std::vector<double> scores(n);
    std::vector<signal::Label> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
      scores[i] = std::floor(rng.uniform() * 8.0) / 8.0;  // coarse grid forces ties
      labels[i] = rng.uniform() < 0.4 ? signal::Label::target : signal::Label::nontarget;
    }
    labels[0] = signal::Label::target;
    labels[1] = signal::Label::nontarget;
    auc_err = std::max(auc_err, std::fabs(metrics::auc(scores, labels) - metric_oracles::auc_pairs(scores, labels)));
  }
  for (int k = 0; k < 100; ++k) {
    signal::EpochSet e;
    e.sampling_rate = 128;
    e.pre_ms = 200;
    e.time_samples = 128;
    e.channel_names = {"Fz", "Pz"};
    for (int t = 0; t < 12; ++t) e.labels.push_back(t % 3 == 0 ? signal::Label::target : signal::Label::nontarget);
    for (std::size_t i = 0; i < e.labels.size() * 2 * 128; ++i) e.data.push_back(rng.normal(0.0, 5.0));
    snr_err = std::max(snr_err, std::fabs(metrics::snr(e) - metric_oracles::snr_direct(e, 1, 250, 500)));
  }
  for (const auto& q : metric_oracles::kTQuantiles) {
    // Paired differences built so that t equals the tabulated critical value.
    const auto n = static_cast<std::size_t>(q.df) + 1;
    std::vector<double> d(n);
    for (std::size_t i = 0; i < n; ++i) d[i] = (i % 2 ? 1.0 : -1.0) * (1.0 + 0.1 * static_cast<double>(i));
    double mean = 0, ss = 0;
    for (double v : d) mean += v / static_cast<double>(n);
    for (double v : d) ss += (v - mean) * (v - mean);
    const double se = std::sqrt(ss / static_cast<double>(n - 1) / static_cast<double>(n));
    std::vector<double> a(n), b(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) a[i] = d[i] - mean + q.t * se;
    const auto r = metrics::paired_ttest(a, b);
    p_err = std::max(p_err, std::fabs(r.p - q.alpha));
  }
  o.require(auc_err <= kAucTol, "auc err " + fmt(auc_err));
  o.require(snr_err <= kSnrTol, "snr err " + fmt(snr_err));
  o.require(p_err <= kPTol, "p err " + fmt(p_err));
  o.detail << " auc err " << fmt(auc_err, 2) << ", snr err " << fmt(snr_err, 2) << ", p err " << fmt(p_err, 2);
}

// Amplitude of a filtered sine from its RMS over the middle half, away from the edges.
double filtered_gain(double f) {
  constexpr double fs = 128.0, seconds = 60.0;
  signal::Recording r;
  r.sampling_rate = fs;
  r.channel_names = {"Pz"};
  const auto n = static_cast<std::size_t>(fs * seconds);
  r.n_samples = n;
  for (std::size_t i = 0; i < n; ++i)
    r.samples.push_back(std::sin(2.0 * std::numbers::pi * f * static_cast<double>(i) / fs));
  const auto y = signal::highpass(r, 0.5);
  double ss = 0.0;
  for (std::size_t i = n / 4; i < 3 * n / 4; ++i) ss += y.samples[i] * y.samples[i];
  return std::sqrt(2.0 * ss / static_cast<double>(n / 2));
}

void filter_response(Outcome& o) {
  const double g_stop = filtered_gain(0.05), g_cut = filtered_gain(0.5), g_pass = filtered_gain(5.0);
  o.require(g_stop < kStopbandGain, "0.05 Hz gain " + fmt(g_stop));
  o.require(g_pass > kPassbandGain, "5 Hz gain " + fmt(g_pass));
  o.require(std::fabs(g_cut - kCutoffGain) <= kCutoffTol, "0.5 Hz gain " + fmt(g_cut));
  o.detail << " gain 0.05 Hz " << fmt(g_stop, 3) << ", 0.5 Hz " << fmt(g_cut, 3) << ", 5 Hz " << fmt(g_pass, 5);
}

// The full run is shared by the end-to-end and protocol criteria.
struct FullRun {
  std::vector<train::SubjectEpochs> data;
  std::vector<train::FoldResult> folds;
  metrics::MetricsReport report;
};

FullRun& full_run() {
  static FullRun run = [] {
    FullRun r;
    synth::SyntheticConfig sc;  // 6 subjects x 300 trials at 500 Hz, Pz only
    sc.seed = 1;
    train::TrainConfig tc;  // 50 pretrain + 200 GAN epochs
    tc.seed = 1;
    tc.lambda_rec = kLambdaRec;
    tc.joint_batch = kJointBatch;
    r.data = train::preprocess(synth::synthesize_dataset(sc), tc.pipeline);
    r.folds = train::run_loso(r.data, tc, [](const std::string& fold, std::size_t epoch, const train::StepLosses& l) {
      if (epoch == 1 || epoch % 50 == 0)
        std::fprintf(stderr, "  fold %s epoch %zu mse %.4f\n", fold.c_str(), epoch, l.g_mse);
    });
    r.report = train::evaluate_run(r.folds, r.data);
    return r;
  }();
  return run;
}

void end_to_end(Outcome& o) {
  auto& run = full_run();
  using metrics::EvalCondition;
  const auto& rep = run.report;
  const double auc_s = rep.group(EvalCondition::standing).auc_mean;
  const double auc_w = rep.group(EvalCondition::walking).auc_mean;
  const double snr_w = rep.group(EvalCondition::walking).snr_mean;
  const double snr_r = rep.group(EvalCondition::reconstructed).snr_mean;
  const auto& t = rep.test("snr", EvalCondition::reconstructed, EvalCondition::walking);
  o.require(auc_s >= kStandingAucMin, "(a) standing AUC " + fmt(auc_s));
  o.require(auc_w <= auc_s - kAucDrop, "(a) walking AUC " + fmt(auc_w));
  o.require(snr_r > snr_w && t.test.p < kSnrAlpha,
            "(b) SNR reconstructed " + fmt(snr_r) + " vs walking " + fmt(snr_w) + ", p " + fmt(t.test.p));

  double worst_ratio = 0.0;
  for (const auto& f : run.folds) {
    const double ratio = f.losses.back().g_mse / f.losses.front().g_mse;
    worst_ratio = std::max(worst_ratio, ratio);
    o.require(ratio < kMseRatioMax, "(c) fold " + f.test_subject + " mse ratio " + fmt(ratio));
  }

  // Reconstructed target grand average over subjects at Pz.
  const auto& first = run.folds.front().reconstructed;
  const std::size_t T = first.time_samples;
  const auto onset = signal::pre_samples(first.pre_ms, first.sampling_rate);
  std::vector<double> ga(T, 0.0);
  for (const auto& f : run.folds) {
    const auto avg = metrics::grand_average(f.reconstructed, signal::Label::target);
    for (std::size_t i = 0; i < T; ++i) ga[i] += avg[i] / static_cast<double>(run.folds.size());
  }
  std::size_t imin = onset, imax = onset;
  for (std::size_t i = onset; i < T; ++i) {
    if (ga[i] < ga[imin]) imin = i;
    if (ga[i] > ga[imax]) imax = i;
  }
  auto ms = [&](std::size_t i) {
    return 1000.0 * (static_cast<double>(i) - static_cast<double>(onset)) / first.sampling_rate;
  };
  o.require(ga[imin] < 0 && ms(imin) >= 150 && ms(imin) <= 250,
            "(d) post-stimulus minimum " + fmt(ga[imin]) + " at " + fmt(ms(imin)) + " ms");
  o.require(ga[imax] > 0 && ms(imax) >= 250 && ms(imax) <= 400,
            "(d) post-stimulus maximum " + fmt(ga[imax]) + " at " + fmt(ms(imax)) + " ms");

  double final_g = 0.0;
  for (const auto& f : run.folds) {
    const auto& l = f.losses.back();
    final_g += (l.g_adv + l.g_class) / static_cast<double>(run.folds.size());
  }
  o.detail << " AUC standing " << fmt(auc_s, 3) << " walking " << fmt(auc_w, 3) << "; SNR walking " << fmt(snr_w, 3)
           << " reconstructed " << fmt(snr_r, 3) << " (p " << fmt(t.test.p, 3) << "); worst mse ratio "
           << fmt(worst_ratio, 3) << "; GA min " << fmt(ga[imin], 3) << " uV at " << fmt(ms(imin), 3) << " ms, max "
           << fmt(ga[imax], 3) << " uV at " << fmt(ms(imax), 3) << " ms; final G adversarial+class loss "
           << fmt(final_g, 4);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

int cli(std::vector<std::string> args) {
  args.insert(args.begin(), "erpgan");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int rc = cli::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  if (rc != 0) std::fprintf(stderr, "%s", err.str().c_str());
  return rc;
}

void determinism(Outcome& o) {
  tiny_run::TempDir dir("acceptance");
  const auto data = (dir.path / "data").string();
  o.require(cli({"--seed", "3", "synth", "--subjects", "2", "--out", data}) == 0, "synth failed");
  for (const char* name : {"a", "b"})
    o.require(cli({"--seed", "3", "loso", "--data", data, "--out", (dir.path / name).string(), "--gan-epochs", "20",
                   "--quiet"}) == 0,
              std::string("loso ") + name + " failed");
  if (!o.pass) return;
  for (const char* file : {"metrics.csv", "stats.csv"}) {
    const auto a = slurp(dir.path / "a" / file), b = slurp(dir.path / "b" / file);
    o.require(!a.empty() && a == b, std::string(file) + " differs");
  }
  o.detail << " metrics.csv and stats.csv byte-identical";
}

void protocol(Outcome& o) {
  auto& run = full_run();  // built by the end-to-end criterion when both run
  const auto t0 = std::chrono::steady_clock::now();
  for (const auto& f : run.folds) {
    try {
      train::check_protocol(f.audit);
    } catch (const Error& e) {
      o.require(false, f.test_subject + ": " + e.what());
    }
  }
  const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  o.require(dt < kBudget[7], "audit took " + fmt(dt, 4) + " s");
  o.detail << " " << run.folds.size() << " folds audited in " << fmt(dt * 1000, 3) << " ms";
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<void(Outcome&)>>> criteria{
      {"gradient correctness", gradients},   {"layer table conformance", table_one},
      {"metric oracles", metric_oracles_check}, {"high-pass response", filter_response},
      {"end-to-end LOSO", end_to_end},       {"determinism", determinism},
      {"protocol integrity", protocol},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  bool all = true;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    const int id = static_cast<int>(k) + 1;
    if (!only.empty() && !only.count(id)) continue;
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      criteria[k].second(o);
    } catch (const std::exception& e) {
      o.require(false, std::string("exception: ") + e.what());
    }
    const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    // Criterion 7 reuses the shared run and times only its audit.
    if (id != 7) o.require(dt < kBudget[id], "runtime " + fmt(dt, 4) + " s over " + fmt(kBudget[id]) + " s budget");
    all = all && o.pass;
    std::printf("criterion %d %s: %s (%.1f s)%s\n", id, criteria[k].first, o.pass ? "PASS" : "FAIL", dt,
                o.detail.str().c_str());
    std::fflush(stdout);
  }
  return all ? EXIT_SUCCESS : EXIT_FAILURE;
}
