#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "emgdet/error.hpp"
#include "emgdet/types.hpp"

namespace emgdet {

struct TaskAnnotation {
  std::string task_id;
  double onset_s = 0.0;
  double duration_s = 0.0;
  int repetition_index = 0;  // 1-based
};

struct EoSegment {
  double onset_s = 0.0;
  double duration_s = 0.0;
};

struct SubjectEntry {
  std::string id;
  std::string recording_path;  // relative to the manifest file
  std::vector<TaskAnnotation> annotations;
  std::vector<EoSegment> eo_segments;
};

// Describes a dataset on disk: one recording per subject plus the artifact
// and eyes-open annotations that drive segmentation.
struct DatasetManifest {
  int version = 1;
  std::vector<SubjectEntry> subjects;

  void validate(const TaskCatalog& catalog) const {
    for (const auto& subject : subjects) {
      struct Interval {
        double begin, end;
      };
      std::vector<Interval> intervals;
      for (const auto& ann : subject.annotations) {
        task_by_id(catalog, ann.task_id);  // throws on unknown id
        require(ann.duration_s > 0.0 && ann.onset_s >= 0.0, ErrorKind::invalid_argument,
                "annotation with non-positive duration or negative onset");
        require(ann.repetition_index >= 1, ErrorKind::invalid_argument,
                "annotation repetition index must be 1-based");
        intervals.push_back({ann.onset_s, ann.onset_s + ann.duration_s});
      }
      for (const auto& eo : subject.eo_segments) {
        require(eo.duration_s > 0.0 && eo.onset_s >= 0.0, ErrorKind::invalid_argument,
                "EO segment with non-positive duration or negative onset");
        intervals.push_back({eo.onset_s, eo.onset_s + eo.duration_s});
      }
      std::sort(intervals.begin(), intervals.end(),
                [](const Interval& a, const Interval& b) { return a.begin < b.begin; });
      for (std::size_t i = 1; i < intervals.size(); ++i) {
        require(intervals[i].begin >= intervals[i - 1].end - 1e-9, ErrorKind::invalid_argument,
                "overlapping annotation intervals for subject " + subject.id);
      }
    }
  }
};

inline nlohmann::json to_json(const DatasetManifest& manifest) {
  nlohmann::json subjects = nlohmann::json::array();
  for (const auto& subject : manifest.subjects) {
    nlohmann::json annotations = nlohmann::json::array();
    for (const auto& ann : subject.annotations) {
      annotations.push_back({{"task_id", ann.task_id},
                             {"onset_s", ann.onset_s},
                             {"duration_s", ann.duration_s},
                             {"repetition_index", ann.repetition_index}});
    }
    nlohmann::json eo = nlohmann::json::array();
    for (const auto& segment : subject.eo_segments) {
      eo.push_back({{"onset_s", segment.onset_s}, {"duration_s", segment.duration_s}});
    }
    subjects.push_back({{"id", subject.id},
                        {"recording", subject.recording_path},
                        {"annotations", annotations},
                        {"eo_segments", eo}});
  }
  return {{"version", manifest.version}, {"subjects", subjects}};
}

inline DatasetManifest manifest_from_json(const nlohmann::json& j) {
  DatasetManifest manifest;
  try {
    manifest.version = j.at("version").get<int>();
    require(manifest.version == 1, ErrorKind::unknown_format_version,
            "unsupported manifest version");
    for (const auto& js : j.at("subjects")) {
      SubjectEntry subject;
      subject.id = js.at("id").get<std::string>();
      subject.recording_path = js.at("recording").get<std::string>();
      for (const auto& ja : js.at("annotations")) {
        TaskAnnotation ann;
        ann.task_id = ja.at("task_id").get<std::string>();
        ann.onset_s = ja.at("onset_s").get<double>();
        ann.duration_s = ja.at("duration_s").get<double>();
        ann.repetition_index = ja.at("repetition_index").get<int>();
        subject.annotations.push_back(ann);
      }
      for (const auto& je : js.at("eo_segments")) {
        subject.eo_segments.push_back(
            {je.at("onset_s").get<double>(), je.at("duration_s").get<double>()});
      }
      manifest.subjects.push_back(std::move(subject));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::malformed_header, std::string("invalid manifest: ") + e.what());
  }
  return manifest;
}

inline void save_manifest(const DatasetManifest& manifest, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorKind::io_failure, "cannot open manifest for writing: " + path);
  out << to_json(manifest).dump(2) << '\n';
  require(out.good(), ErrorKind::io_failure, "manifest write failed: " + path);
}

inline DatasetManifest load_manifest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorKind::io_failure, "cannot open manifest: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::malformed_header, std::string("manifest is not valid JSON: ") + e.what());
  }
  return manifest_from_json(j);
}

}  // namespace emgdet
