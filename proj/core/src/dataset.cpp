#include "erpgan/dataset.hpp"

#include "erpgan/error.hpp"

namespace erpgan {

const SubjectData& Dataset::subject(const std::string& id) const {
  for (const auto& s : subjects)
    if (s.id == id) return s;
  std::string known;
  for (const auto& s : subjects) known += (known.empty() ? "" : ", ") + s.id;
  throw DataError("unknown subject '" + id + "' (known: " + known + ")");
}

std::vector<std::string> Dataset::subject_ids() const {
  std::vector<std::string> ids;
  for (const auto& s : subjects) ids.push_back(s.id);
  return ids;
}

void Dataset::validate() const {
  if (!(sampling_rate > 0.0)) throw DataError("dataset sampling rate must be positive");
  for (const auto& s : subjects) {
    for (const Session* session : {&s.standing, &s.walking}) {
      session->recording.validate();
      if (session->recording.channel_names != channel_names)
        throw DataError("subject " + s.id + ": channel list differs from the dataset's");
      if (session->recording.sampling_rate != sampling_rate)
        throw DataError("subject " + s.id + ": sampling rate differs from the dataset's");
      signal::validate_events(session->events, session->recording.n_samples);
    }
  }
}

const std::vector<std::string>& standard_montage() {
  static const std::vector<std::string> names{
      "Fp1", "Fp2", "AFz", "F7",  "F3",  "Fz",  "F4",  "F8",  "FC5", "FC1", "FC2",
      "FC6", "C3",  "Cz",  "C4",  "CP5", "CP1", "CP2", "CP6", "P7",  "P3",  "Pz",
      "P4",  "P8",  "PO7", "PO3", "POz", "PO4", "PO8", "O1",  "Oz",  "O2"};
  return names;
}

}  // namespace erpgan
