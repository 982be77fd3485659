#include "erpgan/io.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <sstream>

#include "erpgan/error.hpp"
#include "erpgan/fileutil.hpp"
#include "json.hpp"

namespace erpgan::io {

namespace fs = std::filesystem;
using nlohmann::json;
using Kind = FormatError::Kind;

namespace {

static_assert(std::endian::native == std::endian::little, "float blobs are written in host order");

std::string to_f32_bytes(std::span<const double> values) {
  std::string bytes(values.size() * 4, '\0');
  for (std::size_t i = 0; i < values.size(); ++i) {
    const float f = static_cast<float>(values[i]);
    std::memcpy(bytes.data() + 4 * i, &f, 4);
  }
  return bytes;
}

std::vector<double> from_f32_bytes(const char* data, std::size_t count) {
  std::vector<double> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    float f;
    std::memcpy(&f, data + 4 * i, 4);
    out[i] = f;
  }
  return out;
}

json parse_json(const std::string& text, const fs::path& source) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(Kind::parse, source.string() + ": " + e.what());
  }
}

template <typename T>
T field(const json& j, const char* key, const fs::path& source) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw FormatError(Kind::parse, source.string() + ": missing or invalid field '" + key + "'");
  }
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint32_t get_u32(const std::string& in, std::size_t& pos, const fs::path& source) {
  if (pos + 4 > in.size()) throw FormatError(Kind::truncated, source.string() + ": truncated");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  pos += 4;
  return v;
}

const char kEpochMagic[8] = {'E', 'R', 'P', 'E', 'P', 'O', 'C', '\0'};

}  // namespace

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string format_events_csv(const signal::EventList& events) {
  std::string out = "sample_index,label\n";
  for (const auto& e : events)
    out += std::to_string(e.sample_index) + (e.label == signal::Label::target ? ",target\n" : ",nontarget\n");
  return out;
}

signal::EventList parse_events_csv(const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || (line != "sample_index,label" && line != "sample_index,label\r"))
    throw FormatError(Kind::parse, source + ": expected header 'sample_index,label'");
  signal::EventList events;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.find(',');
    const auto bad = [&](const std::string& why) {
      return FormatError(Kind::parse, source + " line " + std::to_string(row) + ": " + why + " ('" + line + "')");
    };
    if (comma == std::string::npos) throw bad("expected two fields");
    const std::string idx = line.substr(0, comma), label = line.substr(comma + 1);
    if (idx.empty() || idx.find_first_not_of("0123456789") != std::string::npos) throw bad("invalid sample index");
    signal::Event e;
    e.sample_index = std::stoull(idx);
    if (label == "target") {
      e.label = signal::Label::target;
    } else if (label == "nontarget") {
      e.label = signal::Label::nontarget;
    } else {
      throw bad("unknown label '" + label + "'");
    }
    events.push_back(e);
  }
  return events;
}

void write_dataset(const Dataset& dataset, const fs::path& dir) {
  dataset.validate();
  fs::create_directories(dir);
  json manifest;
  manifest["format"] = "erpgan-dataset";
  manifest["version"] = kDatasetVersion;
  manifest["sampling_rate"] = dataset.sampling_rate;
  manifest["channels"] = dataset.channel_names;
  manifest["subjects"] = json::array();
  for (const auto& s : dataset.subjects) {
    json entry;
    entry["id"] = s.id;
    for (auto cond : {signal::Condition::standing, signal::Condition::walking}) {
      const std::string name = s.id + "_" + std::string(signal::condition_name(cond));
      const Session& session = s.session(cond);
      write_file_atomic(dir / (name + ".f32"), to_f32_bytes(session.recording.samples));
      write_file_atomic(dir / (name + "_events.csv"), format_events_csv(session.events));
      entry[std::string(signal::condition_name(cond))] = {
          {"signal", name + ".f32"}, {"events", name + "_events.csv"}, {"samples", session.recording.n_samples}};
    }
    manifest["subjects"].push_back(entry);
  }
  write_file_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
}

Dataset read_dataset(const fs::path& dir) {
  const fs::path manifest_path = dir / "manifest.json";
  const json manifest = parse_json(read_file(manifest_path), manifest_path);
  if (!manifest.is_object() || manifest.value("format", std::string()) != "erpgan-dataset")
    throw FormatError(Kind::bad_magic, manifest_path.string() + ": not an erpgan dataset manifest");
  const int version = field<int>(manifest, "version", manifest_path);
  if (version != kDatasetVersion)
    throw FormatError(Kind::version_mismatch, manifest_path.string() + ": dataset version " + std::to_string(version) +
                                                  " (supported: " + std::to_string(kDatasetVersion) + ")");
  Dataset d;
  d.sampling_rate = field<double>(manifest, "sampling_rate", manifest_path);
  d.channel_names = field<std::vector<std::string>>(manifest, "channels", manifest_path);
  if (!manifest.contains("subjects") || !manifest["subjects"].is_array())
    throw FormatError(Kind::parse, manifest_path.string() + ": missing subject list");
  for (const auto& entry : manifest["subjects"]) {
    SubjectData s;
    s.id = field<std::string>(entry, "id", manifest_path);
    for (auto cond : {signal::Condition::standing, signal::Condition::walking}) {
      const std::string key(signal::condition_name(cond));
      if (!entry.contains(key)) throw FormatError(Kind::parse, manifest_path.string() + ": subject " + s.id + " has no " + key + " session");
      const json& ref = entry[key];
      const auto samples = field<std::size_t>(ref, "samples", manifest_path);
      const fs::path blob = dir / field<std::string>(ref, "signal", manifest_path);
      const fs::path events = dir / field<std::string>(ref, "events", manifest_path);
      const std::string bytes = read_file(blob);
      const std::size_t expected = samples * d.channel_names.size() * 4;
      if (bytes.size() != expected)
        throw FormatError(Kind::extent_mismatch, blob.string() + ": " + std::to_string(bytes.size()) + " bytes, expected " +
                                                     std::to_string(expected) + " (" + std::to_string(d.channel_names.size()) +
                                                     " channels x " + std::to_string(samples) + " samples x 4)");
      Session& session = cond == signal::Condition::standing ? s.standing : s.walking;
      session.recording.sampling_rate = d.sampling_rate;
      session.recording.channel_names = d.channel_names;
      session.recording.n_samples = samples;
      session.recording.samples = from_f32_bytes(bytes.data(), samples * d.channel_names.size());
      session.recording.condition = cond;
      session.recording.subject_id = s.id;
      session.events = parse_events_csv(read_file(events), events.string());
    }
    d.subjects.push_back(std::move(s));
  }
  d.validate();
  return d;
}

void write_epochs(const signal::EpochSet& epochs, const fs::path& path) {
  json header;
  header["sampling_rate"] = epochs.sampling_rate;
  header["pre_ms"] = epochs.pre_ms;
  header["post_ms"] = epochs.post_ms;
  header["channels"] = epochs.channel_names;
  header["time_samples"] = epochs.time_samples;
  header["trials"] = epochs.trials();
  header["subject"] = epochs.subject_id;
  header["condition"] = std::string(signal::condition_name(epochs.condition));
  std::string labels;
  for (auto l : epochs.labels) labels.push_back(l == signal::Label::target ? '1' : '0');
  header["labels"] = labels;
  const std::string text = header.dump();
  std::string out(kEpochMagic, 8);
  out.push_back(static_cast<char>(kEpochsVersion));
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out += text;
  out += to_f32_bytes(epochs.data);
  write_file_atomic(path, out);
}

signal::EpochSet read_epochs(const fs::path& path) {
  const std::string in = read_file(path);
  if (in.size() < 9 || std::memcmp(in.data(), kEpochMagic, 8) != 0)
    throw FormatError(Kind::bad_magic, path.string() + ": not an epoch file");
  if (static_cast<unsigned char>(in[8]) != kEpochsVersion)
    throw FormatError(Kind::version_mismatch, path.string() + ": unsupported epoch file version " +
                                                  std::to_string(static_cast<unsigned char>(in[8])));
  std::size_t pos = 9;
  const std::uint32_t len = get_u32(in, pos, path);
  if (pos + len > in.size()) throw FormatError(Kind::truncated, path.string() + ": truncated header");
  const json h = parse_json(in.substr(pos, len), path);
  pos += len;
  signal::EpochSet e;
  e.sampling_rate = field<double>(h, "sampling_rate", path);
  e.pre_ms = field<double>(h, "pre_ms", path);
  e.post_ms = field<double>(h, "post_ms", path);
  e.channel_names = field<std::vector<std::string>>(h, "channels", path);
  e.time_samples = field<std::size_t>(h, "time_samples", path);
  e.subject_id = field<std::string>(h, "subject", path);
  try {
    e.condition = signal::condition_from_name(field<std::string>(h, "condition", path));
  } catch (const ConfigError& err) {
    throw FormatError(Kind::parse, path.string() + ": " + err.what());
  }
  const auto trials = field<std::size_t>(h, "trials", path);
  const auto labels = field<std::string>(h, "labels", path);
  if (labels.size() != trials) throw FormatError(Kind::extent_mismatch, path.string() + ": label count differs from trial count");
  for (char c : labels) e.labels.push_back(c == '1' ? signal::Label::target : signal::Label::nontarget);
  const std::size_t count = trials * e.channel_names.size() * e.time_samples;
  if (in.size() - pos < count * 4) throw FormatError(Kind::truncated, path.string() + ": truncated sample data");
  if (in.size() - pos > count * 4) throw FormatError(Kind::extent_mismatch, path.string() + ": trailing bytes after sample data");
  e.data = from_f32_bytes(in.data() + pos, count);
  return e;
}

std::string format_loss_csv(const std::vector<train::StepLosses>& losses) {
  std::string out = "epoch,d_validity,d_class,g_adv,g_class,g_mse\n";
  for (std::size_t i = 0; i < losses.size(); ++i) {
    const auto& l = losses[i];
    out += std::to_string(i + 1) + "," + format_number(l.d_validity) + "," + format_number(l.d_class) + "," +
           format_number(l.g_adv) + "," + format_number(l.g_class) + "," + format_number(l.g_mse) + "\n";
  }
  return out;
}

namespace {

std::vector<train::StepLosses> parse_loss_csv(const std::string& text, const fs::path& source) {
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  if (line != "epoch,d_validity,d_class,g_adv,g_class,g_mse")
    throw FormatError(Kind::parse, source.string() + ": unexpected loss header");
  std::vector<train::StepLosses> out;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    train::StepLosses l;
    std::size_t epoch = 0;
    if (std::sscanf(line.c_str(), "%zu,%lf,%lf,%lf,%lf,%lf", &epoch, &l.d_validity, &l.d_class, &l.g_adv, &l.g_class,
                    &l.g_mse) != 6)
      throw FormatError(Kind::parse, source.string() + " row " + std::to_string(row) + ": malformed");
    out.push_back(l);
  }
  return out;
}

}  // namespace

void write_fold(const train::FoldResult& fold, const fs::path& dir) {
  fs::create_directories(dir);
  models::save_checkpoint(fold.generator, dir / "generator.ckpt");
  models::save_checkpoint(fold.discriminator, dir / "discriminator.ckpt");
  models::save_checkpoint(fold.encoder, dir / "encoder.ckpt");
  write_file_atomic(dir / "loss_curves.csv", format_loss_csv(fold.losses));
  write_epochs(fold.reconstructed, dir / "reconstructed.epochs");
  const auto& a = fold.audit;
  json j;
  j["test_subject"] = fold.test_subject;
  j["scale"] = fold.scale;
  j["pretrain"] = {{"loss", fold.pretrain.loss},
                   {"train_accuracy", fold.pretrain.train_accuracy},
                   {"heldout_auc", std::isnan(fold.pretrain.heldout_auc) ? json(nullptr) : json(fold.pretrain.heldout_auc)}};
  j["audit"] = {{"train_trial_subjects", a.train_trial_subjects},
                {"walking_targets", a.walking_targets},
                {"walking_nontargets", a.walking_nontargets},
                {"standing_targets", a.standing_targets},
                {"standing_nontargets", a.standing_nontargets},
                {"test_standing_trials_available", a.test_standing_trials_available},
                {"test_standing_trials_used", a.test_standing_trials_used},
                {"test_walking_trials_available", a.test_walking_trials_available},
                {"test_walking_trials_used", a.test_walking_trials_used}};
  write_file_atomic(dir / "fold.json", j.dump(1) + "\n");
}

train::FoldResult read_fold(const fs::path& dir) {
  const fs::path meta = dir / "fold.json";
  const json j = parse_json(read_file(meta), meta);
  train::PretrainLog log;
  train::FoldAudit audit;
  try {
    const json& p = j.at("pretrain");
    log.loss = p.at("loss").get<std::vector<double>>();
    log.train_accuracy = p.at("train_accuracy").get<std::vector<double>>();
    log.heldout_auc = p.at("heldout_auc").is_null() ? std::nan("") : p.at("heldout_auc").get<double>();
    const json& a = j.at("audit");
    audit.test_subject = j.at("test_subject").get<std::string>();
    audit.train_trial_subjects = a.at("train_trial_subjects").get<std::vector<std::string>>();
    audit.walking_targets = a.at("walking_targets").get<std::size_t>();
    audit.walking_nontargets = a.at("walking_nontargets").get<std::size_t>();
    audit.standing_targets = a.at("standing_targets").get<std::size_t>();
    audit.standing_nontargets = a.at("standing_nontargets").get<std::size_t>();
    audit.test_standing_trials_available = a.at("test_standing_trials_available").get<std::size_t>();
    audit.test_standing_trials_used = a.at("test_standing_trials_used").get<std::size_t>();
    audit.test_walking_trials_available = a.at("test_walking_trials_available").get<std::size_t>();
    audit.test_walking_trials_used = a.at("test_walking_trials_used").get<std::size_t>();
  } catch (const json::exception& e) {
    throw FormatError(Kind::parse, meta.string() + ": " + e.what());
  }
  return train::FoldResult{j.at("test_subject").get<std::string>(),
                           parse_loss_csv(read_file(dir / "loss_curves.csv"), dir / "loss_curves.csv"),
                           std::move(log),
                           j.at("scale").get<double>(),
                           models::load_checkpoint(dir / "generator.ckpt", models::Role::generator),
                           models::load_checkpoint(dir / "discriminator.ckpt", models::Role::discriminator),
                           models::load_checkpoint(dir / "encoder.ckpt", models::Role::encoder),
                           read_epochs(dir / "reconstructed.epochs"),
                           std::move(audit)};
}

}  // namespace erpgan::io
