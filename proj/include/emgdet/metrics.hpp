#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "emgdet/error.hpp"
#include "emgdet/plan.hpp"
#include "emgdet/types.hpp"

namespace emgdet {

// Artifact is the positive class.
struct ConfusionCounts {
  std::size_t tp = 0, fn = 0, tn = 0, fp = 0;

  double recall() const {
    require(tp + fn > 0, ErrorKind::single_class, "no artifact epochs in validation truths");
    return static_cast<double>(tp) / static_cast<double>(tp + fn);
  }

  double specificity() const {
    require(tn + fp > 0, ErrorKind::single_class, "no non-artifact epochs in validation truths");
    return static_cast<double>(tn) / static_cast<double>(tn + fp);
  }

  double balanced_accuracy() const { return (recall() + specificity()) / 2.0; }
};

inline ConfusionCounts score(const std::vector<Label>& predictions,
                             const std::vector<Label>& truths) {
  require(predictions.size() == truths.size(), ErrorKind::dimension_mismatch,
          "predictions/truths length mismatch");
  require(!truths.empty(), ErrorKind::empty_input, "empty scoring input");
  ConfusionCounts counts;
  for (std::size_t i = 0; i < truths.size(); ++i) {
    if (truths[i] == Label::artifact) {
      (predictions[i] == Label::artifact ? counts.tp : counts.fn) += 1;
    } else {
      (predictions[i] == Label::non_artifact ? counts.tn : counts.fp) += 1;
    }
  }
  require(counts.tp + counts.fn > 0 && counts.tn + counts.fp > 0, ErrorKind::single_class,
          "validation truths contain a single class; metrics undefined");
  return counts;
}

struct Misclassified {
  std::uint64_t epoch_id = 0;
  std::string subject_id;
  std::string task_id;  // "EO" for non-artifact epochs
  Label truth = Label::non_artifact;
  Label predicted = Label::non_artifact;
};

// One scored split.
struct ResultRecord {
  Analysis analysis = Analysis::a1_contraction;
  ArtifactKind train_kind = ArtifactKind::isometric_contraction;
  ScopeKind scope = ScopeKind::individual;
  TaskSet task_set = TaskSet::full;
  std::string subject_id;
  int fold_index = 0;
  int cumulative_repetitions = 0;
  std::string architecture;
  double recall = 0.0;
  double specificity = 0.0;
  double balanced_accuracy = 0.0;
  std::size_t n_val_artifact = 0;
  std::size_t n_val_nonartifact = 0;
  std::vector<Misclassified> misclassified;
};

inline ResultRecord make_result_record(const SplitSpec& split,
                                       const std::vector<const EpochInfo*>& validation_infos,
                                       const std::vector<Label>& predictions,
                                       const std::string& architecture) {
  std::vector<Label> truths;
  truths.reserve(validation_infos.size());
  for (const auto* info : validation_infos) truths.push_back(info->label);
  const ConfusionCounts counts = score(predictions, truths);

  ResultRecord record;
  record.analysis = split.analysis;
  record.train_kind = split.train_kind;
  record.scope = split.scope.kind;
  record.task_set = split.task_set.name;
  record.subject_id = split.scope.kind == ScopeKind::generalized ? split.scope.held_out_subject
                                                                 : split.scope.subject_id;
  record.fold_index = split.fold_index;
  record.cumulative_repetitions = split.cumulative_repetitions;
  record.architecture = architecture;
  record.recall = counts.recall();
  record.specificity = counts.specificity();
  record.balanced_accuracy = counts.balanced_accuracy();
  record.n_val_artifact = counts.tp + counts.fn;
  record.n_val_nonartifact = counts.tn + counts.fp;
  for (std::size_t i = 0; i < validation_infos.size(); ++i) {
    if (predictions[i] == truths[i]) continue;
    const auto* info = validation_infos[i];
    record.misclassified.push_back(Misclassified{
        info->id, info->subject_id, info->is_artifact() ? info->task_id : std::string("EO"),
        truths[i], predictions[i]});
  }
  return record;
}

// Descriptive statistics of one record group: mean, population std, and the
// 10/25/50/75/90th percentiles via linear interpolation between order
// statistics.
struct AggregateSummary {
  std::size_t n = 0;
  double mean = 0.0;
  double std_pop = 0.0;
  double p10 = 0.0, p25 = 0.0, p50 = 0.0, p75 = 0.0, p90 = 0.0;
};

inline double percentile_sorted(const std::vector<double>& sorted, double q) {
  const std::size_t n = sorted.size();
  if (n == 1) return sorted[0];
  const double h = static_cast<double>(n - 1) * q;
  const auto lower = static_cast<std::size_t>(std::floor(h));
  const double frac = h - static_cast<double>(lower);
  if (lower + 1 >= n) return sorted[n - 1];
  return sorted[lower] + frac * (sorted[lower + 1] - sorted[lower]);
}

inline AggregateSummary aggregate(std::vector<double> values) {
  require(!values.empty(), ErrorKind::empty_input, "aggregate of an empty group");
  // Sorting first makes the result exactly permutation-invariant.
  std::sort(values.begin(), values.end());
  AggregateSummary s;
  s.n = values.size();
  for (double v : values) s.mean += v;
  s.mean /= static_cast<double>(s.n);
  for (double v : values) s.std_pop += (v - s.mean) * (v - s.mean);
  s.std_pop = std::sqrt(s.std_pop / static_cast<double>(s.n));
  s.p10 = percentile_sorted(values, 0.10);
  s.p25 = percentile_sorted(values, 0.25);
  s.p50 = percentile_sorted(values, 0.50);
  s.p75 = percentile_sorted(values, 0.75);
  s.p90 = percentile_sorted(values, 0.90);
  return s;
}

// Misclassified-epoch counts keyed by (task id, subject, cumulative
// repetitions). Non-artifact misclassifications appear under task id "EO".
struct MisclassificationRow {
  std::string task_id;
  std::string subject_id;
  int cumulative_repetitions = 0;
  std::size_t count = 0;
};

inline std::vector<MisclassificationRow> misclassification_table(
    const std::vector<ResultRecord>& records, const TaskCatalog& catalog) {
  std::map<std::tuple<std::string, std::string, int>, std::size_t> counts;
  for (const auto& record : records) {
    for (const auto& miss : record.misclassified) {
      if (miss.task_id != "EO") task_by_id(catalog, miss.task_id);
      counts[{miss.task_id, miss.subject_id, record.cumulative_repetitions}] += 1;
    }
  }
  std::vector<MisclassificationRow> rows;
  rows.reserve(counts.size());
  for (const auto& [key, count] : counts) {
    rows.push_back({std::get<0>(key), std::get<1>(key), std::get<2>(key), count});
  }
  return rows;
}

}  // namespace emgdet
