#pragma once

#include <string>
#include <vector>

#include "erpgan/signal.hpp"

namespace erpgan {

struct Session {
  signal::Recording recording;
  signal::EventList events;
};

struct SubjectData {
  std::string id;
  Session standing;
  Session walking;

  const Session& session(signal::Condition c) const {
    return c == signal::Condition::standing ? standing : walking;
  }
};

/// Multi-subject oddball dataset with one standing and one walking session per subject.
struct Dataset {
  double sampling_rate = 0.0;
  std::vector<std::string> channel_names;
  std::vector<SubjectData> subjects;

  /// Throws DataError for an unknown id.
  const SubjectData& subject(const std::string& id) const;
  std::vector<std::string> subject_ids() const;
  /// Checks every recording and event list.
  void validate() const;
};

/// Channel names of the 32-electrode 10-20 montage.
const std::vector<std::string>& standard_montage();

}  // namespace erpgan
