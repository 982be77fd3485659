#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "erpgan/dataset.hpp"
#include "erpgan/metrics.hpp"
#include "erpgan/train.hpp"

namespace erpgan::io {

inline constexpr int kDatasetVersion = 1;
inline constexpr int kEpochsVersion = 1;

// Dataset directory:
//   manifest.json              {"format": "erpgan-dataset", "version": 1,
//                               "sampling_rate", "channels", "subjects": [
//                                 {"id", "standing": {"signal", "events", "samples"},
//                                        "walking": {...}}]}
//   sXX_<cond>.f32             little-endian float32, channel-major
//   sXX_<cond>_events.csv      "sample_index,label" rows, label target|nontarget
void write_dataset(const Dataset& dataset, const std::filesystem::path& dir);
Dataset read_dataset(const std::filesystem::path& dir);

std::string format_events_csv(const signal::EventList& events);
/// Throws FormatError(parse) naming the offending row.
signal::EventList parse_events_csv(const std::string& text, const std::string& source = "events");

// Epoch file: "ERPEPOC\0" + version byte, u32 JSON header length, header
// (fs, pre_ms, post_ms, channels, T, trials, subject, condition, labels),
// then trials x channels x T float32 values.
void write_epochs(const signal::EpochSet& epochs, const std::filesystem::path& path);
signal::EpochSet read_epochs(const std::filesystem::path& path);

/// "epoch,d_validity,d_class,g_adv,g_class,g_mse"
std::string format_loss_csv(const std::vector<train::StepLosses>& losses);

// Fold directory: generator.ckpt, discriminator.ckpt, encoder.ckpt,
// loss_curves.csv, reconstructed.epochs, fold.json (scale, audit, pretraining log).
void write_fold(const train::FoldResult& fold, const std::filesystem::path& dir);
train::FoldResult read_fold(const std::filesystem::path& dir);

/// Fixed-format number for CSV output (17 significant digits, "nan", "inf").
std::string format_number(double v);

}  // namespace erpgan::io
