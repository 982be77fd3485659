#include <gtest/gtest.h>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>
#include <cmath>
#include <fstream>
#include <sstream>

#include "erpgan/error.hpp"
#include "erpgan/fileutil.hpp"
#include "erpgan/io.hpp"
#include "erpgan/report.hpp"
#include "tiny_run.hpp"

using namespace erpgan;
namespace fs = std::filesystem;
using signal::Label;

namespace {

const tiny_run::Run& shared_run() {
  static const tiny_run::Run r = tiny_run::run();
  return r;
}

FormatError::Kind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const FormatError& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no FormatError thrown";
  return FormatError::Kind::io;
}

void expect_recording_near(const signal::Recording& a, const signal::Recording& b) {
  EXPECT_EQ(a.sampling_rate, b.sampling_rate);
  EXPECT_EQ(a.channel_names, b.channel_names);
  EXPECT_EQ(a.condition, b.condition);
  EXPECT_EQ(a.subject_id, b.subject_id);
  ASSERT_EQ(a.samples.size(), b.samples.size());
  for (std::size_t i = 0; i < a.samples.size(); ++i)
    ASSERT_EQ(static_cast<double>(static_cast<float>(a.samples[i])), b.samples[i]) << i;
}

std::size_t line_count(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

}  // namespace

TEST(DatasetIo, RoundTripWithinFloatPrecision) {
  tiny_run::TempDir dir("ds_roundtrip");
  auto sc = tiny_run::synth_config(2);
  sc.channels = {"Pz", "Cz"};
  const Dataset ds = synth::synthesize_dataset(sc);
  io::write_dataset(ds, dir.path);
  EXPECT_TRUE(fs::exists(dir.path / "manifest.json"));
  EXPECT_TRUE(fs::exists(dir.path / "s01_standing.f32"));
  EXPECT_TRUE(fs::exists(dir.path / "s02_walking_events.csv"));
  EXPECT_EQ(fs::file_size(dir.path / "s01_walking.f32"), 4 * 2 * ds.subjects[0].walking.recording.n_samples);

  const Dataset back = io::read_dataset(dir.path);
  EXPECT_EQ(back.sampling_rate, ds.sampling_rate);
  EXPECT_EQ(back.channel_names, ds.channel_names);
  ASSERT_EQ(back.subjects.size(), 2u);
  for (std::size_t s = 0; s < 2; ++s) {
    EXPECT_EQ(back.subjects[s].id, ds.subjects[s].id);
    for (auto c : {signal::Condition::standing, signal::Condition::walking}) {
      expect_recording_near(ds.subjects[s].session(c).recording, back.subjects[s].session(c).recording);
      EXPECT_EQ(ds.subjects[s].session(c).events, back.subjects[s].session(c).events);
    }
  }
}

TEST(DatasetIo, ChannelMajorBlobLayout) {
  tiny_run::TempDir dir("ds_layout");
  Dataset ds;
  ds.sampling_rate = 100;
  ds.channel_names = {"Pz", "Cz"};
  SubjectData s;
  s.id = "s01";
  for (auto c : {signal::Condition::standing, signal::Condition::walking}) {
    Session& sess = c == signal::Condition::standing ? s.standing : s.walking;
    sess.recording = {100, {"Pz", "Cz"}, 3, {1, 2, 3, 10, 20, 30}, c, "s01"};
    sess.events = {{1, Label::target}};
  }
  ds.subjects.push_back(s);
  io::write_dataset(ds, dir.path);
  const std::string blob = read_file(dir.path / "s01_standing.f32");
  ASSERT_EQ(blob.size(), 24u);
  float v[6];
  std::memcpy(v, blob.data(), 24);
  EXPECT_EQ(v[0], 1.0f);
  EXPECT_EQ(v[2], 3.0f);
  EXPECT_EQ(v[3], 10.0f);
  EXPECT_EQ(read_file(dir.path / "s01_standing_events.csv"), "sample_index,label\n1,target\n");
}

TEST(DatasetIo, MissingBlobIsMissingFile) {
  tiny_run::TempDir dir("ds_missing");
  io::write_dataset(synth::synthesize_dataset(tiny_run::synth_config(2)), dir.path);
  fs::remove(dir.path / "s02_walking.f32");
  EXPECT_EQ(kind_of([&] { io::read_dataset(dir.path); }), FormatError::Kind::missing_file);
  tiny_run::TempDir empty("ds_empty");
  EXPECT_EQ(kind_of([&] { io::read_dataset(empty.path); }), FormatError::Kind::missing_file);
}

TEST(DatasetIo, ManifestErrorsAreDistinct) {
  tiny_run::TempDir dir("ds_manifest");
  io::write_dataset(synth::synthesize_dataset(tiny_run::synth_config(2)), dir.path);
  const std::string manifest = read_file(dir.path / "manifest.json");
  auto with = [&](const std::string& from, const std::string& to) {
    std::string m = manifest;
    const auto at = m.find(from);
    EXPECT_NE(at, std::string::npos) << from;
    m.replace(at, from.size(), to);
    write_file_atomic(dir.path / "manifest.json", m);
  };
  with("\"erpgan-dataset\"", "\"something-else\"");
  EXPECT_EQ(kind_of([&] { io::read_dataset(dir.path); }), FormatError::Kind::bad_magic);
  with("\"version\": 1", "\"version\": 9");
  EXPECT_EQ(kind_of([&] { io::read_dataset(dir.path); }), FormatError::Kind::version_mismatch);

  write_file_atomic(dir.path / "manifest.json", manifest);
  const std::string blob = read_file(dir.path / "s01_standing.f32");
  write_file_atomic(dir.path / "s01_standing.f32", blob.substr(0, blob.size() - 4));
  EXPECT_EQ(kind_of([&] { io::read_dataset(dir.path); }), FormatError::Kind::extent_mismatch);
}

TEST(EventsCsv, RoundTripAndParseErrors) {
  const signal::EventList ev{{3, Label::nontarget}, {10, Label::target}};
  const std::string text = io::format_events_csv(ev);
  EXPECT_EQ(text, "sample_index,label\n3,nontarget\n10,target\n");
  EXPECT_EQ(io::parse_events_csv(text), ev);

  try {
    io::parse_events_csv("sample_index,label\n3,target\n7,maybe\n", "x.csv");
    FAIL() << "expected parse error";
  } catch (const FormatError& e) {
    EXPECT_EQ(e.kind(), FormatError::Kind::parse);
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("maybe"), std::string::npos) << e.what();
  }
  EXPECT_THROW(io::parse_events_csv("index,kind\n"), FormatError);
  EXPECT_THROW(io::parse_events_csv("sample_index,label\nabc,target\n"), FormatError);
}

TEST(EpochsIo, RoundTrip) {
  tiny_run::TempDir dir("epochs");
  const auto& e = shared_run().data.front().walking;
  io::write_epochs(e, dir.path / "w.epochs");
  const auto back = io::read_epochs(dir.path / "w.epochs");
  EXPECT_EQ(back.labels, e.labels);
  EXPECT_EQ(back.channel_names, e.channel_names);
  EXPECT_EQ(back.time_samples, e.time_samples);
  EXPECT_EQ(back.sampling_rate, e.sampling_rate);
  EXPECT_EQ(back.subject_id, e.subject_id);
  EXPECT_EQ(back.condition, e.condition);
  ASSERT_EQ(back.data.size(), e.data.size());
  for (std::size_t i = 0; i < e.data.size(); ++i)
    ASSERT_EQ(back.data[i], static_cast<double>(static_cast<float>(e.data[i])));

  std::string bytes = read_file(dir.path / "w.epochs");
  bytes[0] = 'X';
  write_file_atomic(dir.path / "bad.epochs", bytes);
  EXPECT_EQ(kind_of([&] { io::read_epochs(dir.path / "bad.epochs"); }), FormatError::Kind::bad_magic);
  write_file_atomic(dir.path / "short.epochs", read_file(dir.path / "w.epochs").substr(0, 40));
  EXPECT_EQ(kind_of([&] { io::read_epochs(dir.path / "short.epochs"); }), FormatError::Kind::truncated);
}

TEST(FoldIo, RoundTripPreservesInference) {
  tiny_run::TempDir dir("fold");
  auto& run = const_cast<tiny_run::Run&>(shared_run());
  auto& fold = run.folds.front();
  io::write_fold(fold, dir.path);
  for (const char* f : {"generator.ckpt", "discriminator.ckpt", "encoder.ckpt", "loss_curves.csv", "reconstructed.epochs",
                        "fold.json"})
    EXPECT_TRUE(fs::exists(dir.path / f)) << f;
  auto back = io::read_fold(dir.path);
  EXPECT_EQ(back.test_subject, fold.test_subject);
  EXPECT_EQ(back.scale, fold.scale);
  EXPECT_EQ(back.losses.size(), fold.losses.size());
  EXPECT_EQ(back.audit.train_trial_subjects, fold.audit.train_trial_subjects);
  EXPECT_EQ(back.audit.test_walking_trials_used, fold.audit.test_walking_trials_used);
  EXPECT_NO_THROW(train::check_protocol(back.audit));

  const auto& walking = run.data.front().walking;
  const auto a = train::reconstruct(back.generator, back.encoder, walking, back.scale);
  const auto b = train::reconstruct(back.generator, back.encoder, walking, back.scale);
  EXPECT_EQ(a.data, b.data);
  const auto scores = train::class_scores(back.discriminator, walking, back.scale);
  for (double s : scores) EXPECT_TRUE(s >= 0 && s <= 1);

  tiny_run::TempDir empty("fold_empty");
  EXPECT_EQ(kind_of([&] { io::read_fold(empty.path); }), FormatError::Kind::missing_file);
}

TEST(LossCsv, Schema) {
  const std::string csv = io::format_loss_csv({{1, 2, 3, 4, 0.5}});
  EXPECT_EQ(csv, "epoch,d_validity,d_class,g_adv,g_class,g_mse\n1,1,2,3,4,0.5\n");
}

TEST(Report, TablesHaveFixedSchemas) {
  auto& run = const_cast<tiny_run::Run&>(shared_run());
  const auto rep = train::evaluate_run(run.folds, run.data);
  const std::string m = report::metrics_csv(rep);
  EXPECT_EQ(m.substr(0, m.find('\n')), "subject,condition,auc,snr");
  EXPECT_EQ(line_count(m), 1 + 3 * run.data.size());
  EXPECT_NE(m.find("\ns01,reconstructed,"), std::string::npos);

  const std::string s = report::stats_csv(rep);
  EXPECT_EQ(s.substr(0, s.find('\n')), "pair,t,df,p,stars");
  EXPECT_EQ(line_count(s), 7u);
  EXPECT_NE(s.find("\nsnr:reconstructed-walking,"), std::string::npos);

  const std::string ga = report::grand_average_csv(run.data, run.folds);
  EXPECT_EQ(ga.substr(0, ga.find('\n')), "time_ms,standing,walking,reconstructed");
  EXPECT_EQ(line_count(ga), 1 + run.data.front().walking.time_samples);
  EXPECT_NE(ga.find("\n0,"), std::string::npos);  // onset sample sits on exactly 0 ms

  const std::string g = report::gallery_csv(run.data, run.folds, 8);
  const std::string header = g.substr(0, g.find('\n'));
  EXPECT_EQ(std::count(header.begin(), header.end(), ','), 16);
}

TEST(Report, StarsFollowThresholds) {
  metrics::MetricsReport rep;
  metrics::PairTest t;
  t.metric = "snr";
  t.a = metrics::EvalCondition::reconstructed;
  t.b = metrics::EvalCondition::walking;
  for (double p : {0.003, 0.02, 0.2}) {
    t.test = {3.0, 5, p};
    rep.tests.push_back(t);
  }
  const std::string s = report::stats_csv(rep);
  EXPECT_NE(s.find(",0.0030000000000000001,**\n"), std::string::npos) << s;
  EXPECT_NE(s.find(",0.02,*\n"), std::string::npos) << s;
  EXPECT_NE(s.find(",0.20000000000000001,\n"), std::string::npos) << s;
}

TEST(Report, EmitsBundleAndWellFormedSvg) {
  tiny_run::TempDir dir("bundle");
  auto& run = const_cast<tiny_run::Run&>(shared_run());
  const auto rep = train::evaluate_run(run.folds, run.data);
  report::emit_report(rep, run.data, run.folds, dir.path);
  for (const char* f : {"metrics.csv", "stats.csv", "grand_average.csv", "gallery.csv", "loss_curves_s01.csv"})
    EXPECT_TRUE(fs::exists(dir.path / f)) << f;
  report::render_plots(dir.path);
  for (const char* f : {"grand_average.svg", "gallery.svg", "metrics.svg"}) {
    boost::property_tree::ptree tree;
    std::ifstream in(dir.path / f);
    ASSERT_NO_THROW(boost::property_tree::read_xml(in, tree)) << f;
    EXPECT_EQ(tree.begin()->first, "svg") << f;
  }
  const std::string ga = read_file(dir.path / "grand_average.svg");
  EXPECT_NE(ga.find("stroke-dasharray"), std::string::npos);  // stimulus-onset marker
  const std::string gallery = read_file(dir.path / "gallery.svg");
  std::size_t panels = 0;
  for (auto at = gallery.find("<svg", 1); at != std::string::npos; at = gallery.find("<svg", at + 1)) ++panels;
  EXPECT_GE(panels, 8u);
}

TEST(Report, SvgEscapesText) {
  const std::string svg = report::line_plot_svg("a<b & \"c\"", {0, 1}, {{"x", {1, 2}}}, 0.0, "t", "y");
  boost::property_tree::ptree tree;
  std::istringstream in(svg);
  EXPECT_NO_THROW(boost::property_tree::read_xml(in, tree));
  EXPECT_NE(svg.find("a&lt;b &amp; &quot;c&quot;"), std::string::npos);
}
