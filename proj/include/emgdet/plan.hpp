#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "emgdet/error.hpp"
#include "emgdet/types.hpp"

namespace emgdet {

enum class ScopeKind { individual, generalized, pretrain_calibrate };

inline const char* to_string(ScopeKind k) {
  switch (k) {
    case ScopeKind::individual: return "individual";
    case ScopeKind::generalized: return "generalized";
    case ScopeKind::pretrain_calibrate: return "pretrain_calibrate";
  }
  return "?";
}

// Which model family a split trains. individual and pretrain_calibrate carry
// a subject id; generalized carries the held-out subject.
struct ModelScope {
  ScopeKind kind = ScopeKind::individual;
  std::string subject_id;       // individual / pretrain_calibrate; empty = all subjects
  std::string held_out_subject; // generalized; empty = all rotations

  void validate() const {
    if (kind == ScopeKind::generalized) {
      require(subject_id.empty(), ErrorKind::invalid_argument,
              "generalized scope takes held_out_subject, not subject_id");
    } else {
      require(held_out_subject.empty(), ErrorKind::invalid_argument,
              "held_out_subject applies only to generalized scope");
    }
  }
};

enum class Analysis {
  a1_contraction,
  a1_movement,
  a2_train_contraction,
  a2_train_movement,
  a3_1,
  a3_2,
};

inline const char* to_string(Analysis a) {
  switch (a) {
    case Analysis::a1_contraction: return "a1_contraction";
    case Analysis::a1_movement: return "a1_movement";
    case Analysis::a2_train_contraction: return "a2_train_contraction";
    case Analysis::a2_train_movement: return "a2_train_movement";
    case Analysis::a3_1: return "a3_1";
    case Analysis::a3_2: return "a3_2";
  }
  return "?";
}

enum class A3Variant { integrate_a1, integrate_a2 };

// One fully-specified train/validation split. Epochs are referenced by id.
struct SplitSpec {
  Analysis analysis = Analysis::a1_contraction;
  ArtifactKind train_kind = ArtifactKind::isometric_contraction;
  ModelScope scope;
  TaskSetVariant task_set;
  int fold_index = 0;            // validation repetition (individual) or
                                 // held-out subject position (generalized)
  int cumulative_repetitions = 0;
  std::vector<std::uint64_t> train_epochs;
  std::vector<std::uint64_t> validation_epochs;
  std::vector<std::uint64_t> pretrain_epochs;  // analysis #3 only

  // Stable identifier for seeding and reporting.
  std::string tag() const {
    std::string subject = scope.kind == ScopeKind::generalized ? scope.held_out_subject
                                                               : scope.subject_id;
    return std::string(to_string(analysis)) + "/" + to_string(train_kind) + "/" +
           to_string(scope.kind) + "/" + to_string(task_set.name) + "/" + subject + "/f" +
           std::to_string(fold_index) + "/k" + std::to_string(cumulative_repetitions);
  }
};

namespace plan_detail {

inline int protocol_repetitions(ArtifactKind kind) {
  return kind == ArtifactKind::isometric_contraction ? 10 : 5;
}

inline std::vector<std::string> subject_order(const EpochSet& epochs) {
  std::vector<std::string> subjects;
  for (const auto& e : epochs) {
    if (std::find(subjects.begin(), subjects.end(), e.subject_id) == subjects.end()) {
      subjects.push_back(e.subject_id);
    }
  }
  return subjects;
}

inline bool task_in_kind_and_set(const EpochInfo& e, ArtifactKind kind,
                                 const TaskSetVariant& task_set, const TaskCatalog& catalog) {
  if (!e.is_artifact()) return false;
  const ArtifactTask& task = task_by_ordinal(catalog, e.task_ordinal);
  return task.kind == kind && task_set.includes(task.ordinal);
}

// Artifact epochs of one subject grouped into repetition folds 1..R; fold r
// holds one epoch per task. A single missing epoch (the documented 94-epoch
// tolerance) leaves its fold one short; more than one is an error.
inline std::vector<std::vector<std::uint64_t>> repetition_folds(
    const EpochSet& epochs, const std::string& subject, ArtifactKind kind,
    const TaskSetVariant& task_set, const TaskCatalog& catalog) {
  const int reps = protocol_repetitions(kind);
  std::vector<const ArtifactTask*> tasks;
  for (const auto& task : catalog) {
    if (task.kind == kind && task_set.includes(task.ordinal)) tasks.push_back(&task);
  }
  require(!tasks.empty(), ErrorKind::empty_input, "task set leaves no tasks of this kind");

  std::vector<std::vector<std::uint64_t>> folds(static_cast<std::size_t>(reps));
  std::size_t found = 0;
  for (const auto* task : tasks) {
    for (int rep = 1; rep <= reps; ++rep) {
      const EpochInfo* match = nullptr;
      for (const auto& e : epochs) {
        if (e.subject_id == subject && e.is_artifact() && e.task_ordinal == task->ordinal &&
            e.repetition_index == rep) {
          require(match == nullptr, ErrorKind::invalid_argument,
                  "duplicate epoch for task/repetition");
          match = &e;
        }
      }
      if (match) {
        folds[static_cast<std::size_t>(rep - 1)].push_back(match->id);
        ++found;
      }
    }
  }
  const std::size_t expected = tasks.size() * static_cast<std::size_t>(reps);
  require(found + 1 >= expected, ErrorKind::invalid_argument,
          "subject " + subject + " is missing more than one repetition epoch");
  return folds;
}

inline std::vector<const EpochInfo*> eo_epochs_by_onset(const EpochSet& epochs,
                                                        const std::string& subject) {
  std::vector<const EpochInfo*> eo;
  for (const auto& e : epochs) {
    if (e.subject_id == subject && !e.is_artifact()) eo.push_back(&e);
  }
  std::sort(eo.begin(), eo.end(), [](const EpochInfo* a, const EpochInfo* b) {
    return a->onset_s < b->onset_s;
  });
  return eo;
}

inline std::vector<std::uint64_t> artifact_epoch_ids(const EpochSet& epochs,
                                                     const std::string& subject,
                                                     ArtifactKind kind,
                                                     const TaskSetVariant& task_set,
                                                     const TaskCatalog& catalog) {
  std::vector<std::uint64_t> ids;
  for (const auto& e : epochs) {
    if (e.subject_id == subject && task_in_kind_and_set(e, kind, task_set, catalog)) {
      ids.push_back(e.id);
    }
  }
  return ids;
}

inline std::vector<std::uint64_t> eo_epoch_ids(const EpochSet& epochs,
                                               const std::string& subject) {
  std::vector<std::uint64_t> ids;
  for (const auto* e : eo_epochs_by_onset(epochs, subject)) ids.push_back(e->id);
  return ids;
}

// Training folds at cumulative step k: ascending repetition order starting
// just after the validation fold, wrapping past R.
inline std::vector<int> cumulative_fold_order(int validation_fold, int reps, int k) {
  std::vector<int> order;
  for (int step = 1; step <= k; ++step) {
    order.push_back((validation_fold - 1 + step) % reps + 1);
  }
  return order;
}

}  // namespace plan_detail

// Deterministic partition of non-artifact epochs into n_folds groups ordered
// by onset; sizes differ by at most one (larger folds first).
inline std::vector<std::vector<std::uint64_t>> nonartifact_folds(const EpochSet& epochs,
                                                                 std::size_t n_folds) {
  require(n_folds >= 1, ErrorKind::invalid_argument, "n_folds must be >= 1");
  std::vector<const EpochInfo*> eo;
  for (const auto& e : epochs) {
    if (!e.is_artifact()) eo.push_back(&e);
  }
  require(eo.size() >= n_folds, ErrorKind::invalid_argument,
          "fewer non-artifact epochs than folds");
  std::sort(eo.begin(), eo.end(), [](const EpochInfo* a, const EpochInfo* b) {
    return a->onset_s < b->onset_s;
  });
  const std::size_t base = eo.size() / n_folds;
  const std::size_t extra = eo.size() % n_folds;
  std::vector<std::vector<std::uint64_t>> folds(n_folds);
  std::size_t cursor = 0;
  for (std::size_t f = 0; f < n_folds; ++f) {
    const std::size_t size = base + (f < extra ? 1 : 0);
    for (std::size_t i = 0; i < size; ++i) folds[f].push_back(eo[cursor++]->id);
  }
  return folds;
}

// Analysis #1: within-kind classification. Individual scope: R folds (one
// repetition of every task each) x cumulative steps 1..R-1 per subject.
// Generalized scope: leave-one-subject-out, cumulative steps 1..R over the
// training subjects' repetitions.
inline std::vector<SplitSpec> plan_analysis1(const EpochSet& epochs, ArtifactKind kind,
                                             const ModelScope& scope,
                                             const TaskSetVariant& task_set,
                                             const TaskCatalog& catalog = default_task_catalog(),
                                             int subjects_used = 0) {
  scope.validate();
  task_set.validate();
  const int reps = plan_detail::protocol_repetitions(kind);
  const Analysis analysis =
      kind == ArtifactKind::isometric_contraction ? Analysis::a1_contraction
                                                  : Analysis::a1_movement;
  auto subjects = plan_detail::subject_order(epochs);
  require(!subjects.empty(), ErrorKind::empty_input, "empty epoch set");

  std::vector<SplitSpec> splits;
  if (scope.kind == ScopeKind::individual) {
    for (const auto& subject : subjects) {
      if (!scope.subject_id.empty() && subject != scope.subject_id) continue;
      const auto art_folds =
          plan_detail::repetition_folds(epochs, subject, kind, task_set, catalog);
      EpochSet subject_epochs;
      for (const auto& e : epochs) {
        if (e.subject_id == subject) subject_epochs.push_back(e);
      }
      const auto eo_folds = nonartifact_folds(subject_epochs, static_cast<std::size_t>(reps));
      for (int f = 1; f <= reps; ++f) {
        for (int k = 1; k <= reps - 1; ++k) {
          SplitSpec split;
          split.analysis = analysis;
          split.train_kind = kind;
          split.scope = ModelScope{ScopeKind::individual, subject, ""};
          split.task_set = task_set;
          split.fold_index = f;
          split.cumulative_repetitions = k;
          split.validation_epochs = art_folds[static_cast<std::size_t>(f - 1)];
          for (auto id : eo_folds[static_cast<std::size_t>(f - 1)]) {
            split.validation_epochs.push_back(id);
          }
          for (int fold : plan_detail::cumulative_fold_order(f, reps, k)) {
            for (auto id : art_folds[static_cast<std::size_t>(fold - 1)]) {
              split.train_epochs.push_back(id);
            }
            for (auto id : eo_folds[static_cast<std::size_t>(fold - 1)]) {
              split.train_epochs.push_back(id);
            }
          }
          splits.push_back(std::move(split));
        }
      }
    }
  } else if (scope.kind == ScopeKind::generalized) {
    if (subjects_used > 0) {
      require(subjects_used >= 2 && subjects_used <= static_cast<int>(subjects.size()),
              ErrorKind::invalid_argument, "subjects_used out of range");
      subjects.resize(static_cast<std::size_t>(subjects_used));
    }
    require(subjects.size() >= 2, ErrorKind::invalid_argument,
            "generalized scope needs at least two subjects");
    for (std::size_t h = 0; h < subjects.size(); ++h) {
      const auto& held_out = subjects[h];
      if (!scope.held_out_subject.empty() && held_out != scope.held_out_subject) continue;
      for (int k = 1; k <= reps; ++k) {
        SplitSpec split;
        split.analysis = analysis;
        split.train_kind = kind;
        split.scope = ModelScope{ScopeKind::generalized, "", held_out};
        split.task_set = task_set;
        split.fold_index = static_cast<int>(h) + 1;
        split.cumulative_repetitions = k;
        split.validation_epochs =
            plan_detail::artifact_epoch_ids(epochs, held_out, kind, task_set, catalog);
        for (auto id : plan_detail::eo_epoch_ids(epochs, held_out)) {
          split.validation_epochs.push_back(id);
        }
        for (const auto& subject : subjects) {
          if (subject == held_out) continue;
          const auto art_folds =
              plan_detail::repetition_folds(epochs, subject, kind, task_set, catalog);
          EpochSet subject_epochs;
          for (const auto& e : epochs) {
            if (e.subject_id == subject) subject_epochs.push_back(e);
          }
          const auto eo_folds =
              nonartifact_folds(subject_epochs, static_cast<std::size_t>(reps));
          for (int fold = 1; fold <= k; ++fold) {
            for (auto id : art_folds[static_cast<std::size_t>(fold - 1)]) {
              split.train_epochs.push_back(id);
            }
            for (auto id : eo_folds[static_cast<std::size_t>(fold - 1)]) {
              split.train_epochs.push_back(id);
            }
          }
        }
        splits.push_back(std::move(split));
      }
    }
  } else {
    fail(ErrorKind::invalid_argument, "analysis #1 plans individual or generalized scopes");
  }
  return splits;
}

// Analysis #2: cross-kind validation. Training splits are identical to
// analysis #1 of the training kind; validation swaps the artifact epochs for
// all epochs of the other kind while keeping the analysis-#1 validation
// fold's non-artifact epochs.
inline std::vector<SplitSpec> plan_analysis2(const EpochSet& epochs, ArtifactKind train_kind,
                                             const ModelScope& scope,
                                             const TaskSetVariant& task_set,
                                             const TaskCatalog& catalog = default_task_catalog(),
                                             int subjects_used = 0) {
  const ArtifactKind other_kind = train_kind == ArtifactKind::isometric_contraction
                                      ? ArtifactKind::continuous_movement
                                      : ArtifactKind::isometric_contraction;
  auto splits = plan_analysis1(epochs, train_kind, scope, task_set, catalog, subjects_used);
  for (auto& split : splits) {
    split.analysis = train_kind == ArtifactKind::isometric_contraction
                         ? Analysis::a2_train_contraction
                         : Analysis::a2_train_movement;
    const std::string subject = split.scope.kind == ScopeKind::generalized
                                    ? split.scope.held_out_subject
                                    : split.scope.subject_id;
    std::vector<std::uint64_t> validation =
        plan_detail::artifact_epoch_ids(epochs, subject, other_kind, task_set, catalog);
    // Keep only the non-artifact part of the analysis-#1 validation fold.
    std::map<std::uint64_t, const EpochInfo*> by_id;
    for (const auto& e : epochs) by_id[e.id] = &e;
    for (auto id : split.validation_epochs) {
      if (!by_id.at(id)->is_artifact()) validation.push_back(id);
    }
    split.validation_epochs = std::move(validation);
  }
  return splits;
}

// Analysis #3: the individual-scope schedule of analysis #1 (integrate_a1) or
// #2 (integrate_a2), each model additionally pre-trained on every other
// subject's same-kind artifact epochs and all their non-artifact epochs.
inline std::vector<SplitSpec> plan_analysis3(const EpochSet& epochs, A3Variant variant,
                                             ArtifactKind kind, const std::string& subject_id,
                                             const TaskSetVariant& task_set,
                                             const TaskCatalog& catalog = default_task_catalog()) {
  const auto subjects = plan_detail::subject_order(epochs);
  require(subjects.size() >= 2, ErrorKind::invalid_argument,
          "analysis #3 needs at least two subjects");
  ModelScope base_scope{ScopeKind::individual, subject_id, ""};
  auto splits = variant == A3Variant::integrate_a1
                    ? plan_analysis1(epochs, kind, base_scope, task_set, catalog)
                    : plan_analysis2(epochs, kind, base_scope, task_set, catalog);
  std::map<std::string, std::vector<std::uint64_t>> pretrain_by_subject;
  for (auto& split : splits) {
    split.analysis = variant == A3Variant::integrate_a1 ? Analysis::a3_1 : Analysis::a3_2;
    const std::string subject = split.scope.subject_id;
    split.scope = ModelScope{ScopeKind::pretrain_calibrate, subject, ""};
    auto it = pretrain_by_subject.find(subject);
    if (it == pretrain_by_subject.end()) {
      std::vector<std::uint64_t> pretrain;
      for (const auto& other : subjects) {
        if (other == subject) continue;
        for (auto id : plan_detail::artifact_epoch_ids(epochs, other, kind, task_set, catalog)) {
          pretrain.push_back(id);
        }
        for (auto id : plan_detail::eo_epoch_ids(epochs, other)) pretrain.push_back(id);
      }
      it = pretrain_by_subject.emplace(subject, std::move(pretrain)).first;
    }
    split.pretrain_epochs = it->second;
  }
  return splits;
}

// --- JSON audit dump --------------------------------------------------------

inline nlohmann::json to_json(const SplitSpec& split) {
  return {
      {"analysis", to_string(split.analysis)},
      {"train_kind", to_string(split.train_kind)},
      {"scope", to_string(split.scope.kind)},
      {"subject", split.scope.kind == ScopeKind::generalized ? split.scope.held_out_subject
                                                             : split.scope.subject_id},
      {"task_set", to_string(split.task_set.name)},
      {"fold_index", split.fold_index},
      {"cumulative_repetitions", split.cumulative_repetitions},
      {"train_epochs", split.train_epochs},
      {"validation_epochs", split.validation_epochs},
      {"pretrain_epochs", split.pretrain_epochs},
  };
}

inline nlohmann::json plan_to_json(const std::vector<SplitSpec>& splits) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& split : splits) out.push_back(to_json(split));
  return out;
}

}  // namespace emgdet
