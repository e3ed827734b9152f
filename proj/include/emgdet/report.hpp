#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "emgdet/error.hpp"
#include "emgdet/metrics.hpp"
#include "emgdet/stats.hpp"

namespace emgdet {

namespace report_detail {

// Fixed float formatting so re-emitting an identical run is byte-identical:
// four decimals for metrics, three for p-values.
inline std::string fmt_metric(double v) {
  char buffer[32];
  std::snprintf(buffer, sizeof(buffer), "%.4f", v);
  return buffer;
}

inline std::string fmt_p(double v) {
  char buffer[32];
  std::snprintf(buffer, sizeof(buffer), "%.3f", v);
  return buffer;
}

}  // namespace report_detail

// One row of the overall summary: a (kind, analysis, scope) cell holding
// mean +- std of recall and specificity over the models that used all
// available repetitions (the "all repetitions, all subjects" view).
struct SummaryRow {
  ArtifactKind kind = ArtifactKind::isometric_contraction;
  Analysis analysis = Analysis::a1_contraction;
  ScopeKind scope = ScopeKind::individual;
  bool present = false;  // explicit absence marker, never a silent zero
  std::size_t n = 0;
  AggregateSummary recall;
  AggregateSummary specificity;
};

struct SummaryGrid {
  TaskSet task_set = TaskSet::full;
  std::vector<SummaryRow> rows;
};

inline SummaryGrid render_summary_table(const std::vector<ResultRecord>& records,
                                        TaskSet task_set) {
  struct RowKey {
    ArtifactKind kind;
    Analysis analysis;
    ScopeKind scope;
  };
  const std::vector<RowKey> layout = {
      {ArtifactKind::isometric_contraction, Analysis::a1_contraction, ScopeKind::individual},
      {ArtifactKind::isometric_contraction, Analysis::a1_contraction, ScopeKind::generalized},
      {ArtifactKind::isometric_contraction, Analysis::a2_train_contraction,
       ScopeKind::individual},
      {ArtifactKind::isometric_contraction, Analysis::a2_train_contraction,
       ScopeKind::generalized},
      {ArtifactKind::isometric_contraction, Analysis::a3_1, ScopeKind::pretrain_calibrate},
      {ArtifactKind::isometric_contraction, Analysis::a3_2, ScopeKind::pretrain_calibrate},
      {ArtifactKind::continuous_movement, Analysis::a1_movement, ScopeKind::individual},
      {ArtifactKind::continuous_movement, Analysis::a1_movement, ScopeKind::generalized},
      {ArtifactKind::continuous_movement, Analysis::a2_train_movement, ScopeKind::individual},
      {ArtifactKind::continuous_movement, Analysis::a2_train_movement, ScopeKind::generalized},
      {ArtifactKind::continuous_movement, Analysis::a3_1, ScopeKind::pretrain_calibrate},
      {ArtifactKind::continuous_movement, Analysis::a3_2, ScopeKind::pretrain_calibrate},
  };

  SummaryGrid grid;
  grid.task_set = task_set;
  for (const auto& key : layout) {
    SummaryRow row;
    row.kind = key.kind;
    row.analysis = key.analysis;
    row.scope = key.scope;
    std::vector<const ResultRecord*> cell;
    int max_k = 0;
    for (const auto& record : records) {
      if (record.task_set != task_set || record.analysis != key.analysis ||
          record.scope != key.scope || record.train_kind != key.kind) {
        continue;
      }
      cell.push_back(&record);
      max_k = std::max(max_k, record.cumulative_repetitions);
    }
    if (!cell.empty()) {
      std::vector<double> recalls, specificities;
      for (const auto* record : cell) {
        if (record->cumulative_repetitions != max_k) continue;
        recalls.push_back(record->recall);
        specificities.push_back(record->specificity);
      }
      row.present = true;
      row.n = recalls.size();
      row.recall = aggregate(recalls);
      row.specificity = aggregate(specificities);
    }
    grid.rows.push_back(row);
  }
  return grid;
}

// Per-subject x cumulative-repetitions grid (mean over folds). Missing cells
// stay unset.
struct RepetitionGrid {
  std::vector<std::string> subjects;
  std::vector<int> repetitions;
  std::vector<std::vector<std::optional<double>>> cells;  // [subject][repetition]
};

enum class Metric { recall, specificity };

inline const char* to_string(Metric m) { return m == Metric::recall ? "recall" : "specificity"; }

inline RepetitionGrid render_repetition_grid(const std::vector<ResultRecord>& records,
                                             Metric metric) {
  RepetitionGrid grid;
  std::map<std::pair<std::string, int>, std::pair<double, std::size_t>> sums;
  for (const auto& record : records) {
    if (std::find(grid.subjects.begin(), grid.subjects.end(), record.subject_id) ==
        grid.subjects.end()) {
      grid.subjects.push_back(record.subject_id);
    }
    if (std::find(grid.repetitions.begin(), grid.repetitions.end(),
                  record.cumulative_repetitions) == grid.repetitions.end()) {
      grid.repetitions.push_back(record.cumulative_repetitions);
    }
    auto& slot = sums[{record.subject_id, record.cumulative_repetitions}];
    slot.first += metric == Metric::recall ? record.recall : record.specificity;
    slot.second += 1;
  }
  std::sort(grid.subjects.begin(), grid.subjects.end());
  std::sort(grid.repetitions.begin(), grid.repetitions.end());
  grid.cells.assign(grid.subjects.size(), std::vector<std::optional<double>>(
                                              grid.repetitions.size(), std::nullopt));
  for (std::size_t s = 0; s < grid.subjects.size(); ++s) {
    for (std::size_t k = 0; k < grid.repetitions.size(); ++k) {
      const auto it = sums.find({grid.subjects[s], grid.repetitions[k]});
      if (it != sums.end()) {
        grid.cells[s][k] = it->second.first / static_cast<double>(it->second.second);
      }
    }
  }
  return grid;
}

// One statistical-test row of the run summary.
struct StatRow {
  std::string test;        // "wilcoxon_signed_rank" | "kendall_tau"
  std::string comparison;  // human-readable comparison key
  std::string metric;      // "recall" | "specificity"
  bool valid = false;      // false when the test was degenerate on this data
  double statistic = 0.0;
  double p_value = 1.0;
  bool significant = false;
  std::string note;
};

struct RunSummary {
  std::string fingerprint;
  std::string architecture;
  std::vector<ResultRecord> records;
  std::vector<SummaryGrid> summary_grids;
  std::vector<MisclassificationRow> misclassification;
  std::vector<StatRow> statistics;
  nlohmann::json config_snapshot;
};

namespace report_detail {

inline void emit_records_csv(const RunSummary& run, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorKind::io_failure, "cannot open for writing: " + path);
  out << "analysis,train_kind,scope,task_set,subject,fold,cumulative_repetitions,"
         "architecture,recall,specificity,balanced_accuracy,n_val_artifact,n_val_nonartifact\n";
  for (const auto& r : run.records) {
    out << to_string(r.analysis) << ',' << to_string(r.train_kind) << ',' << to_string(r.scope)
        << ',' << to_string(r.task_set) << ',' << r.subject_id << ',' << r.fold_index << ','
        << r.cumulative_repetitions << ',' << r.architecture << ',' << fmt_metric(r.recall)
        << ',' << fmt_metric(r.specificity) << ',' << fmt_metric(r.balanced_accuracy) << ','
        << r.n_val_artifact << ',' << r.n_val_nonartifact << '\n';
  }
  require(out.good(), ErrorKind::io_failure, "write failed: " + path);
}

inline void emit_summary_csv(const RunSummary& run, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorKind::io_failure, "cannot open for writing: " + path);
  out << "task_set,artifact_kind,analysis,scope,present,n,recall_mean,recall_std,"
         "specificity_mean,specificity_std\n";
  for (const auto& grid : run.summary_grids) {
    for (const auto& row : grid.rows) {
      out << to_string(grid.task_set) << ',' << to_string(row.kind) << ','
          << to_string(row.analysis) << ',' << to_string(row.scope) << ','
          << (row.present ? "yes" : "absent") << ',' << row.n << ',';
      if (row.present) {
        out << fmt_metric(row.recall.mean) << ',' << fmt_metric(row.recall.std_pop) << ','
            << fmt_metric(row.specificity.mean) << ',' << fmt_metric(row.specificity.std_pop);
      } else {
        out << ",,,";
      }
      out << '\n';
    }
  }
  require(out.good(), ErrorKind::io_failure, "write failed: " + path);
}

inline void emit_misclassification_csv(const RunSummary& run, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorKind::io_failure, "cannot open for writing: " + path);
  out << "task_id,subject,cumulative_repetitions,count\n";
  for (const auto& row : run.misclassification) {
    out << row.task_id << ',' << row.subject_id << ',' << row.cumulative_repetitions << ','
        << row.count << '\n';
  }
  require(out.good(), ErrorKind::io_failure, "write failed: " + path);
}

inline void emit_statistics_csv(const RunSummary& run, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorKind::io_failure, "cannot open for writing: " + path);
  out << "test,comparison,metric,valid,statistic,p_value,significant,note\n";
  for (const auto& row : run.statistics) {
    out << row.test << ',' << row.comparison << ',' << row.metric << ','
        << (row.valid ? "yes" : "no") << ',';
    if (row.valid) {
      out << fmt_metric(row.statistic) << ',' << fmt_p(row.p_value) << ','
          << (row.significant ? "yes" : "no");
    } else {
      out << ",,";
    }
    out << ',' << row.note << '\n';
  }
  require(out.good(), ErrorKind::io_failure, "write failed: " + path);
}

inline void emit_repetition_grids(const RunSummary& run, const std::string& dir) {
  struct GroupKey {
    Analysis analysis;
    ScopeKind scope;
    TaskSet task_set;
    bool operator<(const GroupKey& other) const {
      return std::tie(analysis, scope, task_set) <
             std::tie(other.analysis, other.scope, other.task_set);
    }
  };
  std::map<GroupKey, std::vector<ResultRecord>> groups;
  for (const auto& record : run.records) {
    groups[{record.analysis, record.scope, record.task_set}].push_back(record);
  }
  for (const auto& [key, records] : groups) {
    for (Metric metric : {Metric::recall, Metric::specificity}) {
      const auto grid = render_repetition_grid(records, metric);
      const std::string name = std::string("repgrid_") + to_string(key.analysis) + "_" +
                               to_string(key.scope) + "_" + to_string(key.task_set) + "_" +
                               to_string(metric) + ".csv";
      std::ofstream out((std::filesystem::path(dir) / name).string(), std::ios::binary);
      require(out.good(), ErrorKind::io_failure, "cannot open for writing: " + name);
      out << "subject";
      for (int k : grid.repetitions) out << ",k" << k;
      out << '\n';
      for (std::size_t s = 0; s < grid.subjects.size(); ++s) {
        out << grid.subjects[s];
        for (std::size_t k = 0; k < grid.repetitions.size(); ++k) {
          out << ',';
          if (grid.cells[s][k]) out << fmt_metric(*grid.cells[s][k]);
        }
        out << '\n';
      }
      require(out.good(), ErrorKind::io_failure, "write failed: " + name);
    }
  }
}

inline nlohmann::json summary_to_json(const RunSummary& run) {
  nlohmann::json grids = nlohmann::json::array();
  for (const auto& grid : run.summary_grids) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& row : grid.rows) {
      nlohmann::json jr = {{"artifact_kind", to_string(row.kind)},
                           {"analysis", to_string(row.analysis)},
                           {"scope", to_string(row.scope)},
                           {"present", row.present}};
      if (row.present) {
        jr["n"] = row.n;
        jr["recall_mean"] = fmt_metric(row.recall.mean);
        jr["recall_std"] = fmt_metric(row.recall.std_pop);
        jr["specificity_mean"] = fmt_metric(row.specificity.mean);
        jr["specificity_std"] = fmt_metric(row.specificity.std_pop);
      }
      rows.push_back(jr);
    }
    grids.push_back({{"task_set", to_string(grid.task_set)}, {"rows", rows}});
  }
  nlohmann::json stats = nlohmann::json::array();
  for (const auto& row : run.statistics) {
    nlohmann::json jr = {{"test", row.test},
                         {"comparison", row.comparison},
                         {"metric", row.metric},
                         {"valid", row.valid},
                         {"note", row.note}};
    if (row.valid) {
      jr["statistic"] = fmt_metric(row.statistic);
      jr["p_value"] = fmt_p(row.p_value);
      jr["significant"] = row.significant;
    }
    stats.push_back(jr);
  }
  return {{"fingerprint", run.fingerprint},
          {"architecture", run.architecture},
          {"n_records", run.records.size()},
          {"summary_grids", grids},
          {"statistics", stats}};
}

}  // namespace report_detail

// Writes every run artifact into out_dir. Emission is deterministic: the
// same RunSummary always produces byte-identical files.
inline void emit(const RunSummary& run, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  const std::filesystem::path dir(out_dir);
  report_detail::emit_records_csv(run, (dir / "records.csv").string());
  report_detail::emit_summary_csv(run, (dir / "summary_tables.csv").string());
  report_detail::emit_misclassification_csv(run, (dir / "misclassification.csv").string());
  report_detail::emit_statistics_csv(run, (dir / "statistics.csv").string());
  report_detail::emit_repetition_grids(run, out_dir);
  {
    std::ofstream out((dir / "config_snapshot.json").string(), std::ios::binary);
    require(out.good(), ErrorKind::io_failure, "cannot write config snapshot");
    out << run.config_snapshot.dump(2) << '\n';
  }
  {
    std::ofstream out((dir / "summary.json").string(), std::ios::binary);
    require(out.good(), ErrorKind::io_failure, "cannot write summary.json");
    out << report_detail::summary_to_json(run).dump(2) << '\n';
  }
}

}  // namespace emgdet
