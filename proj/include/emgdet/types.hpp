#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "emgdet/error.hpp"
#include "emgdet/matrix.hpp"

namespace emgdet {

enum class MuscleGroup { masseter_temporalis, frontalis, occipitalis };
enum class ArtifactKind { isometric_contraction, continuous_movement };
enum class Label { artifact, non_artifact };

inline const char* to_string(MuscleGroup g) {
  switch (g) {
    case MuscleGroup::masseter_temporalis: return "masseter_temporalis";
    case MuscleGroup::frontalis: return "frontalis";
    case MuscleGroup::occipitalis: return "occipitalis";
  }
  return "?";
}

inline const char* to_string(ArtifactKind k) {
  return k == ArtifactKind::isometric_contraction ? "isometric_contraction"
                                                  : "continuous_movement";
}

inline const char* to_string(Label l) {
  return l == Label::artifact ? "artifact" : "non_artifact";
}

struct Annotation {
  double onset_s = 0.0;
  double duration_s = 0.0;
  std::string label;
};

// A multi-channel recording in microvolts, channel-major.
struct Recording {
  std::string subject_id;
  double sampling_rate_hz = 0.0;
  std::vector<std::string> channels;
  std::vector<std::vector<double>> samples;
  std::vector<Annotation> annotations;

  std::size_t n_channels() const { return channels.size(); }

  std::size_t n_samples() const { return samples.empty() ? 0 : samples.front().size(); }

  double duration_s() const {
    return sampling_rate_hz > 0.0 ? static_cast<double>(n_samples()) / sampling_rate_hz : 0.0;
  }

  std::size_t channel_index(const std::string& name) const {
    for (std::size_t i = 0; i < channels.size(); ++i) {
      if (channels[i] == name) return i;
    }
    fail(ErrorKind::missing_channel, "channel not found: " + name);
  }

  bool has_channel(const std::string& name) const {
    return std::find(channels.begin(), channels.end(), name) != channels.end();
  }

  void validate() const {
    require(sampling_rate_hz > 0.0, ErrorKind::invalid_argument,
            "sampling rate must be positive");
    require(channels.size() == samples.size(), ErrorKind::invalid_argument,
            "channel name count does not match sample rows");
    std::unordered_set<std::string> seen;
    for (const auto& name : channels) {
      require(seen.insert(name).second, ErrorKind::invalid_argument,
              "duplicate channel name: " + name);
    }
    const std::size_t len = n_samples();
    for (const auto& row : samples) {
      require(row.size() == len, ErrorKind::invalid_argument,
              "channel rows have unequal lengths");
    }
    const double duration = duration_s();
    for (const auto& ann : annotations) {
      require(ann.onset_s >= 0.0 && ann.duration_s >= 0.0 &&
                  ann.onset_s + ann.duration_s <= duration + 1e-9,
              ErrorKind::annotation_out_of_range,
              "annotation outside recording: " + ann.label);
    }
  }
};

struct BipolarPair {
  std::string anode;
  std::string cathode;
  MuscleGroup group;

  std::string derived_name() const { return anode + "-" + cathode; }
};

struct BipolarMontage {
  std::vector<BipolarPair> pairs;

  std::size_t count(MuscleGroup g) const {
    std::size_t n = 0;
    for (const auto& p : pairs) {
      if (p.group == g) ++n;
    }
    return n;
  }

  // Electrode names referenced by the pairs of one muscle group.
  std::vector<std::string> group_electrodes(MuscleGroup g) const {
    std::vector<std::string> out;
    for (const auto& p : pairs) {
      if (p.group != g) continue;
      if (std::find(out.begin(), out.end(), p.anode) == out.end()) out.push_back(p.anode);
      if (std::find(out.begin(), out.end(), p.cathode) == out.end()) out.push_back(p.cathode);
    }
    return out;
  }
};

struct ArtifactTask {
  std::string id;        // short ID used in reports (kb_a, kl_a, ...)
  int ordinal = 0;       // 1..12
  std::string name;      // human-readable task name
  MuscleGroup group;
  ArtifactKind kind;
  double epoch_duration_s = 0.0;
  int protocol_repetitions = 0;
};

using TaskCatalog = std::vector<ArtifactTask>;

// The twelve artifact tasks of the recording protocol.
inline const TaskCatalog& default_task_catalog() {
  static const TaskCatalog catalog = [] {
    const auto contraction = ArtifactKind::isometric_contraction;
    const auto movement = ArtifactKind::continuous_movement;
    const auto mt = MuscleGroup::masseter_temporalis;
    const auto fr = MuscleGroup::frontalis;
    const auto oc = MuscleGroup::occipitalis;
    TaskCatalog tasks;
    auto add = [&](const char* id, int ordinal, const char* name, MuscleGroup g,
                   ArtifactKind k) {
      const bool is_contraction = (k == contraction);
      tasks.push_back(ArtifactTask{id, ordinal, name, g, k, is_contraction ? 5.0 : 10.0,
                                   is_contraction ? 10 : 5});
    };
    add("kb_a", 1, "Jaw tensing", mt, contraction);
    add("kb_db", 2, "Biting", mt, movement);
    add("kc_db", 3, "Teeth grinding", mt, movement);
    add("sr_a", 4, "Frowning", fr, contraction);
    add("sh_a", 5, "Eyebrows raising and holding", fr, contraction);
    add("shr_db", 6, "Eyebrows up and down", fr, movement);
    add("kl_a", 7, "Head turning left and holding", oc, contraction);
    add("kr_a", 8, "Head turning right and holding", oc, contraction);
    add("klr_db", 9, "Head turning left and right", oc, movement);
    add("ks_a", 10, "Head tilting downwards and holding", oc, contraction);
    add("kh_a", 11, "Head tilting upwards and holding", oc, contraction);
    add("kn_db", 12, "Nodding", oc, movement);
    return tasks;
  }();
  return catalog;
}

inline const ArtifactTask& task_by_id(const TaskCatalog& catalog, const std::string& id) {
  for (const auto& task : catalog) {
    if (task.id == id) return task;
  }
  fail(ErrorKind::invalid_argument, "unknown task id: " + id);
}

inline const ArtifactTask& task_by_ordinal(const TaskCatalog& catalog, int ordinal) {
  for (const auto& task : catalog) {
    if (task.ordinal == ordinal) return task;
  }
  fail(ErrorKind::invalid_argument, "unknown task ordinal");
}

// The 26 EEG channel combinations used to derive bipolar EMG channels,
// in table row order: 14 masseter/temporalis, 5 frontalis, 7 occipitalis.
inline BipolarMontage default_montage() {
  BipolarMontage montage;
  auto add = [&](const char* a, const char* c, MuscleGroup g) {
    montage.pairs.push_back(BipolarPair{a, c, g});
  };
  const auto mt = MuscleGroup::masseter_temporalis;
  add("F9", "F7", mt);
  add("F9", "F3", mt);
  add("F7", "F3", mt);
  add("T9", "T7", mt);
  add("F9", "T9", mt);
  add("F9", "T7", mt);
  add("T9", "F7", mt);
  add("F10", "F8", mt);
  add("F10", "F4", mt);
  add("F8", "F4", mt);
  add("T10", "T8", mt);
  add("F10", "T10", mt);
  add("F10", "T8", mt);
  add("T10", "F8", mt);
  const auto fr = MuscleGroup::frontalis;
  add("Fp1", "F3", fr);
  add("Fp1", "Fp2", fr);
  add("Fp1", "F4", fr);
  add("Fp2", "F4", fr);
  add("Fp2", "F3", fr);
  const auto oc = MuscleGroup::occipitalis;
  add("O1", "P7", oc);
  add("O1", "P9", oc);
  add("P7", "P9", oc);
  add("O1", "O2", oc);
  add("O2", "P8", oc);
  add("O2", "P10", oc);
  add("P8", "P10", oc);
  return montage;
}

// The 25-channel cap layout of the recording protocol. The montage references
// 20 of these; the remaining midline/central names complete a standard 10-10
// subset.
inline std::vector<std::string> default_channel_names() {
  return {"Fp1", "Fp2", "F3", "F4", "F7", "F8", "F9", "F10", "Fz",
          "C3",  "C4",  "Cz", "T7", "T8", "T9", "T10", "P3", "P4",
          "P7",  "P8",  "P9", "P10", "Pz", "O1", "O2"};
}

enum class TaskSet { full, selected };

inline const char* to_string(TaskSet s) { return s == TaskSet::full ? "full" : "selected"; }

struct TaskSetVariant {
  TaskSet name = TaskSet::full;
  std::set<int> excluded_ordinals;

  static TaskSetVariant full() { return TaskSetVariant{TaskSet::full, {}}; }

  // Excludes the occipitalis isometric contraction tasks.
  static TaskSetVariant selected() { return TaskSetVariant{TaskSet::selected, {7, 8, 10, 11}}; }

  void validate() const {
    if (name == TaskSet::full) {
      require(excluded_ordinals.empty(), ErrorKind::invalid_argument,
              "full task set must not exclude tasks");
    } else {
      require(excluded_ordinals == std::set<int>{7, 8, 10, 11}, ErrorKind::invalid_argument,
              "selected task set must exclude exactly ordinals 7, 8, 10, 11");
    }
  }

  bool includes(int ordinal) const { return excluded_ordinals.count(ordinal) == 0; }
};

inline TaskSetVariant task_set_variant(TaskSet name) {
  return name == TaskSet::full ? TaskSetVariant::full() : TaskSetVariant::selected();
}

inline TaskCatalog apply_task_set(const TaskCatalog& catalog, const TaskSetVariant& variant) {
  variant.validate();
  TaskCatalog out;
  for (const auto& task : catalog) {
    if (variant.includes(task.ordinal)) out.push_back(task);
  }
  return out;
}

// Epoch metadata: everything planning, scoring and reporting need. The id is
// stable within one EpochSet and is how splits reference epochs.
struct EpochInfo {
  std::uint64_t id = 0;
  std::string subject_id;
  Label label = Label::non_artifact;
  std::string task_id;              // empty for non-artifact epochs
  int task_ordinal = 0;             // 0 for non-artifact epochs
  int repetition_index = 0;         // 1-based; 0 for non-artifact epochs
  double onset_s = 0.0;
  double duration_s = 0.0;

  bool is_artifact() const { return label == Label::artifact; }
};

using EpochSet = std::vector<EpochInfo>;

// A segmented epoch: metadata plus channel-major samples over the
// montage-derived channels.
struct Epoch {
  EpochInfo info;
  std::vector<std::string> channels;
  std::vector<std::vector<double>> samples;

  std::size_t n_samples() const { return samples.empty() ? 0 : samples.front().size(); }

  void validate(double sampling_rate_hz) const {
    if (info.is_artifact()) {
      require(!info.task_id.empty() && info.repetition_index >= 1, ErrorKind::invalid_argument,
              "artifact epoch must carry task id and repetition index");
    }
    const auto expected =
        static_cast<std::size_t>(std::llround(info.duration_s * sampling_rate_hz));
    require(n_samples() == expected, ErrorKind::sample_count_mismatch,
            "epoch sample count does not match duration");
  }
};

}  // namespace emgdet
