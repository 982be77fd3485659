#include "cli.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <optional>
#include <ostream>

#include "CLI11.hpp"
#include "erpgan/error.hpp"
#include "erpgan/fileutil.hpp"
#include "erpgan/io.hpp"
#include "erpgan/report.hpp"
#include "erpgan/synth.hpp"
#include "erpgan/train.hpp"
#include "json.hpp"

namespace erpgan::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kRecordingFs = 500.0;
constexpr double kWorkingFs = 128.0;

struct Globals {
  std::uint64_t seed = 0;
  std::optional<double> fs;
};

const train::TrainConfig kDefaults;

struct TrainFlags {
  std::size_t batch = kDefaults.batch_size;
  std::size_t pretrain_epochs = kDefaults.pretrain_epochs;
  std::size_t gan_epochs = kDefaults.gan_epochs;
  double lambda_rec = kDefaults.lambda_rec;
  double class_weight = kDefaults.class_weight;
  double adversarial_weight = kDefaults.adversarial_weight;
  double lr = kDefaults.adam.lr;
  bool subtract_class_loss = kDefaults.subtract_class_loss;
  bool joint_batch = kDefaults.joint_batch;
  bool quiet = false;
  std::vector<std::string> channels = kDefaults.pipeline.channels;
};

void add_train_flags(CLI::App* app, TrainFlags& f) {
  app->add_option("--batch", f.batch, "Batch size")->check(CLI::PositiveNumber)->capture_default_str();
  app->add_option("--pretrain-epochs", f.pretrain_epochs, "Encoder pretraining epochs")->capture_default_str();
  app->add_option("--gan-epochs", f.gan_epochs, "GAN training epochs")->capture_default_str();
  app->add_option("--lambda", f.lambda_rec, "Weight of the reconstruction MSE")->capture_default_str();
  app->add_option("--class-weight", f.class_weight, "Weight of the class terms")->capture_default_str();
  app->add_option("--adversarial-weight", f.adversarial_weight, "Weight of the validity terms")->capture_default_str();
  app->add_option("--lr", f.lr, "Adam learning rate")->check(CLI::PositiveNumber)->capture_default_str();
  app->add_flag("--subtract-class-loss", f.subtract_class_loss, "Generator minimises adversarial minus class loss");
  app->add_flag("--joint-batch,!--separate-batch", f.joint_batch,
                "Discriminator sees real and generated epochs in one batch")
      ->capture_default_str();
  app->add_option("--channels", f.channels, "Channels fed to the networks")->capture_default_str();
  app->add_flag("-q,--quiet", f.quiet, "No progress output");
}

train::TrainConfig make_train_config(const Globals& g, const TrainFlags& f) {
  train::TrainConfig c;
  c.seed = g.seed;
  c.batch_size = f.batch;
  c.pretrain_epochs = f.pretrain_epochs;
  c.gan_epochs = f.gan_epochs;
  c.lambda_rec = f.lambda_rec;
  c.class_weight = f.class_weight;
  c.adversarial_weight = f.adversarial_weight;
  c.adam.lr = f.lr;
  c.subtract_class_loss = f.subtract_class_loss;
  c.joint_batch = f.joint_batch;
  c.pipeline.working_fs = g.fs.value_or(kWorkingFs);
  c.pipeline.channels = f.channels;
  c.validate();
  return c;
}

json config_json(const train::TrainConfig& c) {
  return {{"seed", c.seed},
          {"batch_size", c.batch_size},
          {"pretrain_epochs", c.pretrain_epochs},
          {"gan_epochs", c.gan_epochs},
          {"lambda_rec", c.lambda_rec},
          {"class_weight", c.class_weight},
          {"adversarial_weight", c.adversarial_weight},
          {"lr", c.adam.lr},
          {"subtract_class_loss", c.subtract_class_loss},
          {"joint_batch", c.joint_batch},
          {"working_fs", c.pipeline.working_fs},
          {"highpass_hz", c.pipeline.highpass_hz},
          {"channels", c.pipeline.channels}};
}

train::Progress progress_printer(std::ostream& err, bool quiet) {
  if (quiet) return {};
  auto start = std::chrono::steady_clock::now();
  return [&err, start](const std::string& fold, std::size_t epoch, const train::StepLosses& l) {
    if (epoch != 1 && epoch % 20 != 0) return;
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    char line[200];
    std::snprintf(line, sizeof line,
                  "[%s] epoch %zu  d_validity %.4f  d_class %.4f  g_adv %.4f  g_class %.4f  g_mse %.4f  (%.0fs)\n",
                  fold.c_str(), epoch, l.d_validity, l.d_class, l.g_adv, l.g_class, l.g_mse, secs);
    err << line << std::flush;
  };
}

std::vector<train::SubjectEpochs> load_epochs(const fs::path& data_dir, const train::TrainConfig& config) {
  return train::preprocess(io::read_dataset(data_dir), config.pipeline);
}

void write_evaluation(std::vector<train::FoldResult>& folds, const std::vector<train::SubjectEpochs>& data,
                      const fs::path& out, std::ostream& os) {
  const auto report = train::evaluate_run(folds, data);
  report::emit_report(report, data, folds, out);
  for (const auto& g : report.groups) {
    char line[160];
    std::snprintf(line, sizeof line, "%-13s auc %.3f +- %.3f  snr %.3f +- %.3f\n",
                  std::string(metrics::eval_condition_name(g.condition)).c_str(), g.auc_mean, g.auc_sd, g.snr_mean,
                  g.snr_sd);
    os << line;
  }
  for (const auto& t : report.tests) {
    char line[160];
    std::snprintf(line, sizeof line, "%-28s t %8.3f  p %.4g %s\n", t.name().c_str(), t.test.t, t.test.p,
                  std::string(metrics::significance_stars(t.test.p)).c_str());
    os << line;
  }
}

// Run directory: run.json, folds/<subject>/..., report CSVs at the top level.
void write_run_meta(const fs::path& out, const fs::path& data_dir, const train::TrainConfig& config) {
  json meta{{"data", fs::absolute(data_dir).lexically_normal().string()}, {"config", config_json(config)}};
  write_file_atomic(out / "run.json", meta.dump(2) + "\n");
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"ERP reconstruction from walking EEG with a conditional GAN", "erpgan"};
  app.set_config("--config", "", "Read options from a TOML/INI file");
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  app.add_option("--seed", g.seed, "Master seed")->capture_default_str();
  app.add_option("--fs", g.fs,
                 "Sampling rate in Hz: recording rate for synth (default 500), working rate otherwise (default 128)")
      ->check(CLI::PositiveNumber);

  // synth
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic standing/walking oddball dataset");
  synth::SyntheticConfig sc;
  fs::path synth_out;
  synth_cmd->add_option("--subjects", sc.n_subjects, "Number of subjects")->capture_default_str();
  synth_cmd->add_option("--trials", sc.trials_per_subject, "Trials per subject and condition")->capture_default_str();
  synth_cmd->add_option("--target-ratio", sc.target_ratio, "Fraction of target trials")->capture_default_str();
  synth_cmd->add_option("--channels", sc.channels, "Channel names from the 32-channel montage")->capture_default_str();
  synth_cmd->add_option("--artifact-multiplier", sc.artifact.multiplier, "Artifact RMS / background RMS")
      ->capture_default_str();
  synth_cmd->add_option("--gait-hz", sc.artifact.gait_hz, "Step frequency")->capture_default_str();
  synth_cmd->add_option("--out", synth_out, "Output directory")->required();

  // pretrain
  auto* pretrain_cmd = app.add_subcommand("pretrain", "Pretrain the encoder for one leave-one-subject-out fold");
  TrainFlags pretrain_flags;
  fs::path pretrain_data, pretrain_out;
  std::string pretrain_subject;
  pretrain_cmd->add_option("--data", pretrain_data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  pretrain_cmd->add_option("--test-subject", pretrain_subject, "Held-out subject")->required();
  pretrain_cmd->add_option("--out", pretrain_out, "Encoder checkpoint path")->required();
  add_train_flags(pretrain_cmd, pretrain_flags);

  // train
  auto* train_cmd = app.add_subcommand("train", "Train one leave-one-subject-out fold");
  TrainFlags train_flags;
  fs::path train_data, train_out, train_encoder;
  std::string train_subject;
  train_cmd->add_option("--data", train_data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  train_cmd->add_option("--test-subject", train_subject, "Held-out subject")->required();
  train_cmd->add_option("--encoder", train_encoder, "Pretrained encoder (skips pretraining)")->check(CLI::ExistingFile);
  train_cmd->add_option("--out", train_out, "Fold output directory")->required();
  add_train_flags(train_cmd, train_flags);

  // loso
  auto* loso_cmd = app.add_subcommand("loso", "Full leave-one-subject-out run plus evaluation");
  TrainFlags loso_flags;
  fs::path loso_data, loso_out;
  loso_cmd->add_option("--data", loso_data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  loso_cmd->add_option("--out", loso_out, "Run directory")->required();
  add_train_flags(loso_cmd, loso_flags);

  // reconstruct
  auto* recon_cmd = app.add_subcommand("reconstruct", "Reconstruct walking epochs with a trained fold");
  fs::path recon_fold, recon_data, recon_out;
  std::string recon_subject;
  std::vector<std::string> recon_channels{"Pz"};
  recon_cmd->add_option("--fold", recon_fold, "Fold directory")->required()->check(CLI::ExistingDirectory);
  recon_cmd->add_option("--data", recon_data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  recon_cmd->add_option("--subject", recon_subject, "Subject to reconstruct (default: the fold's test subject)");
  recon_cmd->add_option("--channels", recon_channels, "Channels the fold was trained on")->capture_default_str();
  recon_cmd->add_option("--out", recon_out, "Output epochs file")->required();

  // evaluate
  auto* eval_cmd = app.add_subcommand("evaluate", "Compute metrics, tests and report tables for a run directory");
  fs::path eval_run, eval_data, eval_out;
  eval_cmd->add_option("--run", eval_run, "Run directory written by loso")->required();
  eval_cmd->add_option("--data", eval_data, "Dataset directory (default: the one recorded in run.json)");
  eval_cmd->add_option("--out", eval_out, "Bundle directory (default: the run directory)");

  // report
  auto* report_cmd = app.add_subcommand("report", "Render SVG plots from a report bundle");
  fs::path report_dir;
  report_cmd->add_option("--bundle", report_dir, "Bundle directory")->required()->check(CLI::ExistingDirectory);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e, out, err);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (synth_cmd->parsed()) {
      sc.seed = g.seed;
      sc.fs = g.fs.value_or(kRecordingFs);
      sc.validate();
      io::write_dataset(synth::synthesize_dataset(sc), synth_out);
      out << "wrote " << sc.n_subjects << " subjects to " << synth_out.string() << "\n";
    } else if (pretrain_cmd->parsed()) {
      const auto config = make_train_config(g, pretrain_flags);
      const auto data = load_epochs(pretrain_data, config);
      const auto seed = train::fold_seed(data, pretrain_subject, config.seed);
      const auto fold = train::prepare_fold(data, pretrain_subject, config, seed);
      train::PretrainLog log;
      const auto encoder = train::pretrain_fold_encoder(fold, config, seed, &log);
      if (pretrain_out.has_parent_path()) fs::create_directories(pretrain_out.parent_path());
      models::save_checkpoint(encoder, pretrain_out);
      char line[160];
      std::snprintf(line, sizeof line, "encoder: train accuracy %.3f, held-out standing AUC %.3f\n",
                    log.train_accuracy.empty() ? NAN : log.train_accuracy.back(), log.heldout_auc);
      out << line;
    } else if (train_cmd->parsed()) {
      const auto config = make_train_config(g, train_flags);
      const auto data = load_epochs(train_data, config);
      std::optional<models::Model> encoder;
      if (!train_encoder.empty()) encoder = models::load_checkpoint(train_encoder, models::Role::encoder);
      auto fold = train::train_fold(data, train_subject, config, train::fold_seed(data, train_subject, config.seed),
                                    encoder ? &*encoder : nullptr, progress_printer(err, train_flags.quiet));
      train::check_protocol(fold.audit);
      io::write_fold(fold, train_out);
      out << "fold " << train_subject << ": final g_mse " << fold.losses.back().g_mse << "\n";
    } else if (loso_cmd->parsed()) {
      const auto config = make_train_config(g, loso_flags);
      const auto data = load_epochs(loso_data, config);
      auto folds = train::run_loso(data, config, progress_printer(err, loso_flags.quiet));
      fs::create_directories(loso_out);
      write_run_meta(loso_out, loso_data, config);
      // Evaluate the stored (32-bit) folds so `evaluate` on this directory reproduces the tables exactly.
      std::vector<train::FoldResult> stored;
      for (const auto& f : folds) {
        train::check_protocol(f.audit);
        io::write_fold(f, loso_out / "folds" / f.test_subject);
        stored.push_back(io::read_fold(loso_out / "folds" / f.test_subject));
      }
      write_evaluation(stored, data, loso_out, out);
    } else if (recon_cmd->parsed()) {
      auto fold = io::read_fold(recon_fold);
      train::TrainConfig config;
      config.pipeline.working_fs = g.fs.value_or(kWorkingFs);
      config.pipeline.channels = recon_channels;
      const auto data = load_epochs(recon_data, config);
      const std::string who = recon_subject.empty() ? fold.test_subject : recon_subject;
      auto it = std::find_if(data.begin(), data.end(), [&](const train::SubjectEpochs& s) { return s.id == who; });
      if (it == data.end()) throw DataError("unknown subject '" + who + "'");
      const auto rec = train::reconstruct(fold.generator, fold.encoder, it->walking, fold.scale);
      if (recon_out.has_parent_path()) fs::create_directories(recon_out.parent_path());
      io::write_epochs(rec, recon_out);
      out << "reconstructed " << rec.trials() << " epochs of " << who << "\n";
    } else if (eval_cmd->parsed()) {
      const fs::path folds_dir = eval_run / "folds";
      std::vector<fs::path> fold_dirs;
      if (fs::is_directory(folds_dir))
        for (const auto& entry : fs::directory_iterator(folds_dir))
          if (entry.is_directory()) fold_dirs.push_back(entry.path());
      if (fold_dirs.empty()) throw DataError("missing fold: no fold directories under " + folds_dir.string());
      std::sort(fold_dirs.begin(), fold_dirs.end());

      const fs::path meta_path = eval_run / "run.json";
      if (!fs::exists(meta_path)) throw FormatError(FormatError::Kind::missing_file, "missing " + meta_path.string());
      const json meta = json::parse(read_file(meta_path));
      train::TrainConfig config;
      config.pipeline.working_fs = g.fs.value_or(meta.at("config").at("working_fs").get<double>());
      config.pipeline.highpass_hz = meta.at("config").at("highpass_hz").get<double>();
      config.pipeline.channels = meta.at("config").at("channels").get<std::vector<std::string>>();
      const fs::path data_dir = eval_data.empty() ? fs::path(meta.at("data").get<std::string>()) : eval_data;
      const auto data = load_epochs(data_dir, config);

      std::vector<train::FoldResult> folds;
      for (const auto& d : fold_dirs) folds.push_back(io::read_fold(d));
      for (const auto& s : data)
        if (std::none_of(folds.begin(), folds.end(), [&](const train::FoldResult& f) { return f.test_subject == s.id; }))
          throw DataError("missing fold for subject " + s.id + " under " + folds_dir.string());
      for (const auto& f : folds) train::check_protocol(f.audit);
      write_evaluation(folds, data, eval_out.empty() ? eval_run : eval_out, out);
    } else if (report_cmd->parsed()) {
      report::render_plots(report_dir);
      out << "wrote grand_average.svg, gallery.svg, metrics.svg to " << report_dir.string() << "\n";
    }
  } catch (const Error& e) {
    err << "erpgan: error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "erpgan: error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace erpgan::cli
