#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "emgdet/container.hpp"
#include "emgdet/dsp.hpp"
#include "emgdet/error.hpp"
#include "emgdet/features.hpp"
#include "emgdet/learn.hpp"
#include "emgdet/manifest.hpp"
#include "emgdet/metrics.hpp"
#include "emgdet/plan.hpp"
#include "emgdet/report.hpp"
#include "emgdet/rng.hpp"
#include "emgdet/stats.hpp"
#include "emgdet/store.hpp"
#include "emgdet/synth.hpp"

namespace emgdet {

// Dataset source: either a manifest of recordings on disk or a synthesis
// configuration rendered on the fly (recordings are then never written).
struct DatasetSource {
  std::string manifest_path;
  std::optional<SynthesisConfig> synthesis;

  void validate() const {
    require(manifest_path.empty() || !synthesis.has_value(), ErrorKind::invalid_config,
            "dataset cannot have both a manifest path and a synthesis config");
    require(!manifest_path.empty() || synthesis.has_value(), ErrorKind::invalid_config,
            "dataset needs a manifest path or a synthesis config");
  }
};

struct RunConfig {
  DatasetSource dataset;
  FilterSpec filter;
  SpectrogramConfig spectrogram;
  std::vector<TaskSet> task_sets = {TaskSet::full, TaskSet::selected};
  std::vector<Analysis> analyses = {Analysis::a1_contraction, Analysis::a1_movement,
                                    Analysis::a2_train_contraction, Analysis::a2_train_movement,
                                    Analysis::a3_1, Analysis::a3_2};
  std::vector<ScopeKind> scopes = {ScopeKind::individual, ScopeKind::generalized};
  std::string classifier = "linear_baseline";
  TrainConfig train;
  std::string out_dir = "out";
  std::string store_dir;  // defaults to <out_dir>/store
  std::uint64_t seed = 1;
  int jobs = 0;           // 0 = hardware concurrency
  int subjects_used = 0;  // generalized-scope subject ablation; 0 = all

  std::string effective_store_dir() const {
    return store_dir.empty() ? (std::filesystem::path(out_dir) / "store").string() : store_dir;
  }
};

// --- JSON (config files, canonical snapshots) -------------------------------

inline nlohmann::json to_json(const SynthesisConfig& c) {
  auto group = [](const ArtifactModel& m) {
    return nlohmann::json{{"band_lo_hz", m.band_lo_hz},
                          {"band_hi_hz", m.band_hi_hz},
                          {"burst_rms_uv", m.burst_rms_uv},
                          {"spatial_gain", m.spatial_gain}};
  };
  return {{"seed", c.seed},
          {"subjects", c.subjects},
          {"sampling_rate_hz", c.sampling_rate_hz},
          {"eo_duration_s", c.eo_duration_s},
          {"gap_s", c.gap_s},
          {"pink_exponent", c.pink_exponent},
          {"background_rms_uv", c.background_rms_uv},
          {"alpha_freq_hz", c.alpha_freq_hz},
          {"alpha_rms_uv", c.alpha_rms_uv},
          {"ramp_s", c.ramp_s},
          {"movement_rms_scale", c.movement_rms_scale},
          {"snr_scale", c.snr_scale},
          {"groups",
           {{"masseter_temporalis", group(c.masseter_temporalis)},
            {"frontalis", group(c.frontalis)},
            {"occipitalis", group(c.occipitalis)}}}};
}

inline SynthesisConfig synthesis_from_json(const nlohmann::json& j) {
  SynthesisConfig c;
  auto get = [&](const char* key, auto fallback) {
    using T = decltype(fallback);
    return j.contains(key) ? j.at(key).get<T>() : fallback;
  };
  c.seed = get("seed", c.seed);
  c.subjects = get("subjects", c.subjects);
  c.sampling_rate_hz = get("sampling_rate_hz", c.sampling_rate_hz);
  c.eo_duration_s = get("eo_duration_s", c.eo_duration_s);
  c.gap_s = get("gap_s", c.gap_s);
  c.pink_exponent = get("pink_exponent", c.pink_exponent);
  c.background_rms_uv = get("background_rms_uv", c.background_rms_uv);
  c.alpha_freq_hz = get("alpha_freq_hz", c.alpha_freq_hz);
  c.alpha_rms_uv = get("alpha_rms_uv", c.alpha_rms_uv);
  c.ramp_s = get("ramp_s", c.ramp_s);
  c.movement_rms_scale = get("movement_rms_scale", c.movement_rms_scale);
  c.snr_scale = get("snr_scale", c.snr_scale);
  if (j.contains("groups")) {
    auto parse_group = [&](const char* name, ArtifactModel& m) {
      if (!j.at("groups").contains(name)) return;
      const auto& jg = j.at("groups").at(name);
      if (jg.contains("band_lo_hz")) m.band_lo_hz = jg.at("band_lo_hz").get<double>();
      if (jg.contains("band_hi_hz")) m.band_hi_hz = jg.at("band_hi_hz").get<double>();
      if (jg.contains("burst_rms_uv")) m.burst_rms_uv = jg.at("burst_rms_uv").get<double>();
      if (jg.contains("spatial_gain")) m.spatial_gain = jg.at("spatial_gain").get<double>();
    };
    parse_group("masseter_temporalis", c.masseter_temporalis);
    parse_group("frontalis", c.frontalis);
    parse_group("occipitalis", c.occipitalis);
  }
  return c;
}

inline nlohmann::json to_json(const FilterSpec& f) {
  return {{"highpass_cutoff_hz", f.highpass_cutoff_hz},
          {"notch_base_hz", f.notch_base_hz},
          {"notch_max_hz", f.notch_max_hz},
          {"notch_bandwidth_hz", f.notch_bandwidth_hz},
          {"fir_transition_bw_hz", f.fir_transition_bw_hz}};
}

inline FilterSpec filter_from_json(const nlohmann::json& j) {
  FilterSpec f;
  if (j.contains("highpass_cutoff_hz")) f.highpass_cutoff_hz = j.at("highpass_cutoff_hz");
  if (j.contains("notch_base_hz")) f.notch_base_hz = j.at("notch_base_hz");
  if (j.contains("notch_max_hz")) f.notch_max_hz = j.at("notch_max_hz");
  if (j.contains("notch_bandwidth_hz")) f.notch_bandwidth_hz = j.at("notch_bandwidth_hz");
  if (j.contains("fir_transition_bw_hz")) f.fir_transition_bw_hz = j.at("fir_transition_bw_hz");
  return f;
}

inline nlohmann::json to_json(const SpectrogramConfig& s) {
  return {{"fft_length", s.fft_length},  {"hop_length", s.hop_length},
          {"n_mels", s.n_mels},          {"fmin_hz", s.fmin_hz},
          {"fmax_hz", s.fmax_hz},        {"power_exponent", s.power_exponent},
          {"log_compress", s.log_compress}, {"db_floor", s.db_floor}};
}

inline SpectrogramConfig spectrogram_from_json(const nlohmann::json& j) {
  SpectrogramConfig s;
  if (j.contains("fft_length")) s.fft_length = j.at("fft_length");
  if (j.contains("hop_length")) s.hop_length = j.at("hop_length");
  if (j.contains("n_mels")) s.n_mels = j.at("n_mels");
  if (j.contains("fmin_hz")) s.fmin_hz = j.at("fmin_hz");
  if (j.contains("fmax_hz")) s.fmax_hz = j.at("fmax_hz");
  if (j.contains("power_exponent")) s.power_exponent = j.at("power_exponent");
  if (j.contains("log_compress")) s.log_compress = j.at("log_compress");
  if (j.contains("db_floor")) s.db_floor = j.at("db_floor");
  return s;
}

inline nlohmann::json to_json(const TrainConfig& t) {
  return {{"batch_size", t.batch_size},
          {"learning_rate", t.learning_rate},
          {"epochs", t.epochs},
          {"momentum", t.momentum},
          {"standardize_input", t.standardize_input}};
}

inline TrainConfig train_from_json(const nlohmann::json& j) {
  TrainConfig t;
  if (j.contains("batch_size")) t.batch_size = j.at("batch_size").get<std::size_t>();
  if (j.contains("learning_rate")) t.learning_rate = j.at("learning_rate");
  if (j.contains("epochs")) t.epochs = j.at("epochs");
  if (j.contains("momentum")) t.momentum = j.at("momentum");
  if (j.contains("standardize_input")) t.standardize_input = j.at("standardize_input");
  return t;
}

inline Analysis analysis_from_string(const std::string& s) {
  for (Analysis a : {Analysis::a1_contraction, Analysis::a1_movement,
                     Analysis::a2_train_contraction, Analysis::a2_train_movement, Analysis::a3_1,
                     Analysis::a3_2}) {
    if (s == to_string(a)) return a;
  }
  fail(ErrorKind::invalid_argument, "unknown analysis: " + s);
}

inline ScopeKind scope_from_string(const std::string& s) {
  for (ScopeKind k :
       {ScopeKind::individual, ScopeKind::generalized, ScopeKind::pretrain_calibrate}) {
    if (s == to_string(k)) return k;
  }
  fail(ErrorKind::invalid_argument, "unknown scope: " + s);
}

inline TaskSet task_set_from_string(const std::string& s) {
  if (s == "full") return TaskSet::full;
  if (s == "selected") return TaskSet::selected;
  fail(ErrorKind::invalid_argument, "unknown task set: " + s);
}

inline nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json dataset;
  if (!c.dataset.manifest_path.empty()) {
    dataset = {{"manifest", c.dataset.manifest_path}};
  } else if (c.dataset.synthesis) {
    dataset = {{"synthesis", to_json(*c.dataset.synthesis)}};
  }
  nlohmann::json task_sets = nlohmann::json::array();
  for (TaskSet t : c.task_sets) task_sets.push_back(to_string(t));
  nlohmann::json analyses = nlohmann::json::array();
  for (Analysis a : c.analyses) analyses.push_back(to_string(a));
  nlohmann::json scopes = nlohmann::json::array();
  for (ScopeKind s : c.scopes) scopes.push_back(to_string(s));
  return {{"dataset", dataset},
          {"filter", to_json(c.filter)},
          {"spectrogram", to_json(c.spectrogram)},
          {"task_sets", task_sets},
          {"analyses", analyses},
          {"scopes", scopes},
          {"classifier", c.classifier},
          {"train", to_json(c.train)},
          {"out_dir", c.out_dir},
          {"store_dir", c.store_dir},
          {"seed", c.seed},
          {"jobs", c.jobs},
          {"subjects_used", c.subjects_used}};
}

inline RunConfig run_config_from_json(const nlohmann::json& j) {
  RunConfig c;
  if (j.contains("dataset")) {
    const auto& jd = j.at("dataset");
    if (jd.contains("manifest")) c.dataset.manifest_path = jd.at("manifest").get<std::string>();
    if (jd.contains("synthesis")) c.dataset.synthesis = synthesis_from_json(jd.at("synthesis"));
  }
  if (j.contains("filter")) c.filter = filter_from_json(j.at("filter"));
  if (j.contains("spectrogram")) c.spectrogram = spectrogram_from_json(j.at("spectrogram"));
  if (j.contains("train")) c.train = train_from_json(j.at("train"));
  if (j.contains("task_sets")) {
    c.task_sets.clear();
    for (const auto& t : j.at("task_sets")) {
      c.task_sets.push_back(task_set_from_string(t.get<std::string>()));
    }
  }
  if (j.contains("analyses")) {
    c.analyses.clear();
    for (const auto& a : j.at("analyses")) {
      c.analyses.push_back(analysis_from_string(a.get<std::string>()));
    }
  }
  if (j.contains("scopes")) {
    c.scopes.clear();
    for (const auto& s : j.at("scopes")) {
      c.scopes.push_back(scope_from_string(s.get<std::string>()));
    }
  }
  if (j.contains("classifier")) c.classifier = j.at("classifier").get<std::string>();
  if (j.contains("out_dir")) c.out_dir = j.at("out_dir").get<std::string>();
  if (j.contains("store_dir")) c.store_dir = j.at("store_dir").get<std::string>();
  if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("jobs")) c.jobs = j.at("jobs").get<int>();
  if (j.contains("subjects_used")) c.subjects_used = j.at("subjects_used").get<int>();
  return c;
}

// --- parallel helper ---------------------------------------------------------

// Index-parallel loop with deterministic output responsibility on the caller
// (each index writes its own slot). The first exception wins and is rethrown.
template <typename Fn>
void parallel_for(std::size_t n, int jobs, Fn&& fn) {
  if (n == 0) return;
  std::size_t workers = jobs > 0 ? static_cast<std::size_t>(jobs)
                                 : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> threads;
  threads.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    threads.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& t : threads) t.join();
  if (error) std::rethrow_exception(error);
}

// --- preprocessing ------------------------------------------------------------

namespace run_detail {

inline std::uint64_t hash_file(const std::string& path, std::uint64_t seed) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorKind::io_failure, "cannot open for hashing: " + path);
  std::vector<char> buffer(1 << 20);
  std::uint64_t h = seed;
  while (in.good()) {
    in.read(buffer.data(), static_cast<std::streamsize>(buffer.size()));
    const auto got = in.gcount();
    if (got <= 0) break;
    h = fnv1a64(buffer.data(), static_cast<std::size_t>(got), h);
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buffer[17];
  std::snprintf(buffer, sizeof(buffer), "%016llx", static_cast<unsigned long long>(v));
  return buffer;
}

inline std::string preprocess_fingerprint(const DatasetSource& dataset, const FilterSpec& filter,
                                          const SpectrogramConfig& spectrogram,
                                          const std::string& manifest_base_dir) {
  nlohmann::json j = {{"filter", to_json(filter)}, {"spectrogram", to_json(spectrogram)}};
  std::uint64_t h = fnv1a64(j.dump());
  if (dataset.synthesis) {
    h = fnv1a64(to_json(*dataset.synthesis).dump(), h);
  } else {
    h = hash_file(dataset.manifest_path, h);
    const DatasetManifest manifest = load_manifest(dataset.manifest_path);
    for (const auto& subject : manifest.subjects) {
      h = hash_file((std::filesystem::path(manifest_base_dir) / subject.recording_path).string(),
                    h);
    }
  }
  return hex64(h);
}

}  // namespace run_detail

// Filters, derives, segments and featurizes every subject into an on-disk
// epoch store. Skips work when a store with the same fingerprint already
// exists (content-hash idempotence).
inline EpochStore preprocess(const DatasetSource& dataset, const FilterSpec& filter,
                             const SpectrogramConfig& spectrogram, const std::string& store_dir,
                             int jobs, const TaskCatalog& catalog = default_task_catalog(),
                             const BipolarMontage& montage = default_montage()) {
  dataset.validate();
  const std::string manifest_base = dataset.manifest_path.empty()
                                        ? std::string()
                                        : std::filesystem::path(dataset.manifest_path)
                                              .parent_path()
                                              .string();
  const std::string fingerprint =
      run_detail::preprocess_fingerprint(dataset, filter, spectrogram, manifest_base);
  if (store_matches(store_dir, fingerprint)) return load_store(store_dir);

  std::filesystem::create_directories(store_dir);

  DatasetManifest manifest;
  if (dataset.synthesis) {
    dataset.synthesis->validate();
    for (int s = 0; s < dataset.synthesis->subjects; ++s) {
      manifest.subjects.push_back(synthesize_subject_entry(*dataset.synthesis, catalog, s));
    }
  } else {
    manifest = load_manifest(dataset.manifest_path);
  }
  manifest.validate(catalog);
  require(!manifest.subjects.empty(), ErrorKind::empty_input, "dataset has no subjects");

  double sampling_rate = 0.0;
  EpochStore store;
  store.dir = store_dir;
  store.fingerprint = fingerprint;
  store.preprocess_snapshot = {{"filter", to_json(filter)},
                               {"spectrogram", to_json(spectrogram)}};

  std::vector<double> kernel;  // built once the sampling rate is known
  Matrix mel_bank;

  for (std::size_t subject_index = 0; subject_index < manifest.subjects.size();
       ++subject_index) {
    const auto& subject = manifest.subjects[subject_index];
    Recording recording;
    if (dataset.synthesis) {
      recording = synthesize_recording(*dataset.synthesis, catalog, montage, subject,
                                       static_cast<int>(subject_index));
    } else {
      recording = read_recording(
          (std::filesystem::path(manifest_base) / subject.recording_path).string());
      require(recording.subject_id == subject.id, ErrorKind::invalid_argument,
              "recording subject id does not match manifest entry " + subject.id);
    }
    if (sampling_rate == 0.0) {
      sampling_rate = recording.sampling_rate_hz;
      filter.validate(sampling_rate);
      spectrogram.validate(sampling_rate);
      auto kernels = design_notch_bank(filter, sampling_rate);
      kernels.insert(kernels.begin(), design_highpass(filter, sampling_rate));
      kernel = cascade_kernels(kernels);
      mel_bank = mel_filterbank(spectrogram, sampling_rate);
    } else {
      require(recording.sampling_rate_hz == sampling_rate, ErrorKind::invalid_argument,
              "mixed sampling rates across subjects are not supported");
    }

    const auto spans = build_epoch_spans(subject, catalog, sampling_rate, recording.n_samples(),
                                         (subject_index + 1) * 1000000ULL);

    // Only the electrodes the montage references need filtering.
    std::vector<std::size_t> used_channels;
    for (MuscleGroup g : {MuscleGroup::masseter_temporalis, MuscleGroup::frontalis,
                          MuscleGroup::occipitalis}) {
      for (const auto& name : montage.group_electrodes(g)) {
        const std::size_t idx = recording.channel_index(name);
        if (std::find(used_channels.begin(), used_channels.end(), idx) == used_channels.end()) {
          used_channels.push_back(idx);
        }
      }
    }
    parallel_for(used_channels.size(), jobs, [&](std::size_t i) {
      auto& row = recording.samples[used_channels[i]];
      row = filter_zero_phase(row, kernel);
    });

    // Pre-allocate every epoch image; montage pairs then fill disjoint
    // channel blocks in parallel.
    std::vector<FeatureImage> images(spans.size());
    for (std::size_t s = 0; s < spans.size(); ++s) {
      images[s].frames_per_channel =
          stft_frame_count(spans[s].n_samples, spectrogram);
      images[s].n_channels = montage.pairs.size();
      images[s].values =
          Matrix(spectrogram.n_mels, images[s].frames_per_channel * montage.pairs.size());
    }
    parallel_for(montage.pairs.size(), jobs, [&](std::size_t p) {
      const auto& pair = montage.pairs[p];
      const auto& anode = recording.samples[recording.channel_index(pair.anode)];
      const auto& cathode = recording.samples[recording.channel_index(pair.cathode)];
      const fft::DftPlan plan(spectrogram.fft_length);
      std::vector<double> segment;
      for (std::size_t s = 0; s < spans.size(); ++s) {
        const auto& span = spans[s];
        segment.resize(span.n_samples);
        for (std::size_t i = 0; i < span.n_samples; ++i) {
          segment[i] = anode[span.start_sample + i] - cathode[span.start_sample + i];
        }
        const Matrix block = mel_channel_block(segment, spectrogram, mel_bank, &plan);
        const std::size_t frames = images[s].frames_per_channel;
        for (std::size_t m = 0; m < block.rows; ++m) {
          for (std::size_t t = 0; t < block.cols; ++t) {
            images[s].values(m, p * frames + t) = block(m, t);
          }
        }
      }
    });

    for (std::size_t s = 0; s < spans.size(); ++s) {
      char name[32];
      std::snprintf(name, sizeof(name), "ep%08llu.fmat",
                    static_cast<unsigned long long>(spans[s].info.id));
      write_feature_matrix(images[s], (std::filesystem::path(store_dir) / name).string());
      store.epochs.push_back(StoredEpoch{spans[s].info, name});
    }
  }

  store.sampling_rate_hz = sampling_rate;
  save_store_manifest(store);
  return store;
}

// --- run orchestration ---------------------------------------------------------

namespace run_detail {

inline std::vector<SplitSpec> enumerate_splits(const RunConfig& config, const EpochSet& epochs,
                                               const TaskCatalog& catalog) {
  std::vector<SplitSpec> splits;
  auto append = [&](std::vector<SplitSpec> more) {
    for (auto& s : more) splits.push_back(std::move(s));
  };
  for (TaskSet task_set_name : config.task_sets) {
    const TaskSetVariant task_set = task_set_variant(task_set_name);
    for (Analysis analysis : config.analyses) {
      switch (analysis) {
        case Analysis::a1_contraction:
        case Analysis::a1_movement: {
          const ArtifactKind kind = analysis == Analysis::a1_contraction
                                        ? ArtifactKind::isometric_contraction
                                        : ArtifactKind::continuous_movement;
          for (ScopeKind scope : config.scopes) {
            if (scope == ScopeKind::pretrain_calibrate) continue;
            append(plan_analysis1(epochs, kind, ModelScope{scope, "", ""}, task_set, catalog,
                                  scope == ScopeKind::generalized ? config.subjects_used : 0));
          }
          break;
        }
        case Analysis::a2_train_contraction:
        case Analysis::a2_train_movement: {
          const ArtifactKind kind = analysis == Analysis::a2_train_contraction
                                        ? ArtifactKind::isometric_contraction
                                        : ArtifactKind::continuous_movement;
          for (ScopeKind scope : config.scopes) {
            if (scope == ScopeKind::pretrain_calibrate) continue;
            append(plan_analysis2(epochs, kind, ModelScope{scope, "", ""}, task_set, catalog,
                                  scope == ScopeKind::generalized ? config.subjects_used : 0));
          }
          break;
        }
        case Analysis::a3_1:
        case Analysis::a3_2: {
          const A3Variant variant =
              analysis == Analysis::a3_1 ? A3Variant::integrate_a1 : A3Variant::integrate_a2;
          for (ArtifactKind kind :
               {ArtifactKind::isometric_contraction, ArtifactKind::continuous_movement}) {
            append(plan_analysis3(epochs, variant, kind, "", task_set, catalog));
          }
          break;
        }
      }
    }
  }
  return splits;
}

struct PairKey {
  std::string subject;
  int fold;
  int k;
  ArtifactKind kind;
  TaskSet task_set;
  bool operator<(const PairKey& other) const {
    return std::tie(subject, fold, k, kind, task_set) <
           std::tie(other.subject, other.fold, other.k, other.kind, other.task_set);
  }
};

}  // namespace run_detail

// Executes the full experiment described by the config on a preprocessed
// store and emits all artifacts into config.out_dir.
inline RunSummary run_experiment_on_store(const RunConfig& config, const EpochStore& store,
                                          const TaskCatalog& catalog = default_task_catalog()) {
  const EpochSet epochs = store.epoch_set();
  std::map<std::uint64_t, const EpochInfo*> info_by_id;
  for (const auto& e : epochs) info_by_id[e.id] = &e;

  const auto splits = run_detail::enumerate_splits(config, epochs, catalog);
  require(!splits.empty(), ErrorKind::invalid_config, "run config selects no splits");

  FeatureProvider provider(store);

  // Pre-train the analysis-#3 base models once per (analysis, kind, task set,
  // subject); every fold/cumulative-step split of that subject calibrates a
  // clone of the same base model.
  std::map<std::string, std::shared_ptr<const Classifier>> pretrained;
  {
    std::vector<std::pair<std::string, const SplitSpec*>> jobs_list;
    std::set<std::string> seen;
    for (const auto& split : splits) {
      if (split.pretrain_epochs.empty()) continue;
      const std::string key = std::string(to_string(split.analysis)) + "/" +
                              to_string(split.train_kind) + "/" + to_string(split.task_set.name) +
                              "/" + split.scope.subject_id;
      if (seen.insert(key).second) jobs_list.emplace_back(key, &split);
    }
    std::vector<std::shared_ptr<const Classifier>> models(jobs_list.size());
    parallel_for(jobs_list.size(), config.jobs, [&](std::size_t i) {
      const auto& [key, split] = jobs_list[i];
      std::vector<std::shared_ptr<const FeatureImage>> keep;
      std::vector<const FeatureImage*> features;
      std::vector<Label> labels;
      for (auto id : split->pretrain_epochs) {
        keep.push_back(provider.get(id));
        features.push_back(keep.back().get());
        labels.push_back(info_by_id.at(id)->label);
      }
      auto model = make_classifier(config.classifier);
      TrainConfig train = config.train;
      train.seed = Rng::mix(config.seed, fnv1a64("pretrain/" + key));
      model->train(features, labels, train);
      models[i] = std::move(model);
    });
    for (std::size_t i = 0; i < jobs_list.size(); ++i) pretrained[jobs_list[i].first] = models[i];
  }

  std::vector<ResultRecord> records(splits.size());
  parallel_for(splits.size(), config.jobs, [&](std::size_t i) {
    const SplitSpec& split = splits[i];
    std::vector<std::shared_ptr<const FeatureImage>> keep;
    std::vector<const FeatureImage*> features;
    std::vector<Label> labels;
    for (auto id : split.train_epochs) {
      keep.push_back(provider.get(id));
      features.push_back(keep.back().get());
      labels.push_back(info_by_id.at(id)->label);
    }
    TrainConfig train = config.train;
    train.seed = Rng::mix(config.seed, fnv1a64(split.tag()));

    std::unique_ptr<Classifier> model;
    if (!split.pretrain_epochs.empty()) {
      const std::string key = std::string(to_string(split.analysis)) + "/" +
                              to_string(split.train_kind) + "/" + to_string(split.task_set.name) +
                              "/" + split.scope.subject_id;
      model = pretrained.at(key)->clone();
      model->calibrate(features, labels, train);
    } else {
      model = make_classifier(config.classifier);
      model->train(features, labels, train);
    }

    std::vector<const EpochInfo*> validation_infos;
    std::vector<Label> predictions;
    for (auto id : split.validation_epochs) {
      const auto image = provider.get(id);
      validation_infos.push_back(info_by_id.at(id));
      predictions.push_back(predict_epoch(*model, *image).label);
    }
    records[i] = make_result_record(split, validation_infos, predictions, config.classifier);
  });

  RunSummary summary;
  summary.architecture = config.classifier;
  summary.records = std::move(records);
  summary.fingerprint = run_detail::hex64(fnv1a64(to_json(config).dump()));
  summary.config_snapshot = to_json(config);
  for (TaskSet task_set : config.task_sets) {
    summary.summary_grids.push_back(render_summary_table(summary.records, task_set));
  }
  summary.misclassification = misclassification_table(summary.records, catalog);

  // Statistical tests mirroring the paper's comparisons, on whatever the run
  // produced: repetition-count correlations, full-vs-selected, and
  // pretraining-vs-individual.
  auto add_kendall = [&](const std::string& comparison, Metric metric,
                         const std::vector<const ResultRecord*>& group) {
    StatRow row;
    row.test = "kendall_tau";
    row.comparison = comparison;
    row.metric = to_string(metric);
    std::vector<double> x, y;
    for (const auto* r : group) {
      x.push_back(static_cast<double>(r->cumulative_repetitions));
      y.push_back(metric == Metric::recall ? r->recall : r->specificity);
    }
    try {
      const auto result = kendall_tau(x, y);
      row.valid = true;
      row.statistic = result.tau;
      row.p_value = result.p_value;
      row.significant = significant(result.p_value);
    } catch (const Error& e) {
      row.note = e.what();
    }
    summary.statistics.push_back(row);
  };
  {
    std::map<std::tuple<Analysis, ScopeKind, TaskSet>, std::vector<const ResultRecord*>> groups;
    for (const auto& r : summary.records) {
      groups[{r.analysis, r.scope, r.task_set}].push_back(&r);
    }
    for (const auto& [key, group] : groups) {
      const std::string comparison = std::string("repetitions/") +
                                     to_string(std::get<0>(key)) + "/" +
                                     to_string(std::get<1>(key)) + "/" +
                                     to_string(std::get<2>(key));
      add_kendall(comparison, Metric::recall, group);
      add_kendall(comparison, Metric::specificity, group);
    }
  }
  auto add_wilcoxon = [&](const std::string& comparison, Metric metric,
                          const std::vector<double>& a, const std::vector<double>& b) {
    StatRow row;
    row.test = "wilcoxon_signed_rank";
    row.comparison = comparison;
    row.metric = to_string(metric);
    try {
      const auto result = wilcoxon_signed_rank(a, b);
      row.valid = true;
      row.statistic = result.statistic;
      row.p_value = result.p_value;
      row.significant = significant(result.p_value);
    } catch (const Error& e) {
      row.note = e.what();
    }
    summary.statistics.push_back(row);
  };
  {
    // full vs selected, paired on (analysis, scope, subject, fold, k)
    using Key = std::tuple<Analysis, ScopeKind, std::string, int, int>;
    std::map<Key, std::pair<const ResultRecord*, const ResultRecord*>> pairs;
    for (const auto& r : summary.records) {
      Key key{r.analysis, r.scope, r.subject_id, r.fold_index, r.cumulative_repetitions};
      auto& slot = pairs[key];
      (r.task_set == TaskSet::full ? slot.first : slot.second) = &r;
    }
    std::map<std::pair<Analysis, ScopeKind>,
             std::pair<std::vector<double>, std::vector<double>>>
        recall_pairs, spec_pairs;
    for (const auto& [key, pair] : pairs) {
      if (!pair.first || !pair.second) continue;
      auto group_key = std::make_pair(std::get<0>(key), std::get<1>(key));
      recall_pairs[group_key].first.push_back(pair.first->recall);
      recall_pairs[group_key].second.push_back(pair.second->recall);
      spec_pairs[group_key].first.push_back(pair.first->specificity);
      spec_pairs[group_key].second.push_back(pair.second->specificity);
    }
    for (const auto& [key, values] : recall_pairs) {
      const std::string comparison = std::string("full_vs_selected/") + to_string(key.first) +
                                     "/" + to_string(key.second);
      add_wilcoxon(comparison, Metric::recall, values.first, values.second);
      const auto& spec = spec_pairs.at(key);
      add_wilcoxon(comparison, Metric::specificity, spec.first, spec.second);
    }
  }
  {
    // analysis #3 vs its individual-scope counterpart, paired per record
    auto pair_against = [&](Analysis a3, Analysis base_contraction, Analysis base_movement) {
      std::map<run_detail::PairKey, std::pair<const ResultRecord*, const ResultRecord*>> pairs;
      for (const auto& r : summary.records) {
        const bool is_a3 = r.analysis == a3;
        const bool is_base = (r.analysis == base_contraction || r.analysis == base_movement) &&
                             r.scope == ScopeKind::individual;
        if (!is_a3 && !is_base) continue;
        run_detail::PairKey key{r.subject_id, r.fold_index, r.cumulative_repetitions,
                                r.train_kind, r.task_set};
        auto& slot = pairs[key];
        (is_a3 ? slot.first : slot.second) = &r;
      }
      std::map<std::pair<ArtifactKind, TaskSet>,
               std::array<std::vector<double>, 4>>
          grouped;  // [a3 recall, base recall, a3 spec, base spec]
      for (const auto& [key, pair] : pairs) {
        if (!pair.first || !pair.second) continue;
        auto& slot = grouped[{key.kind, key.task_set}];
        slot[0].push_back(pair.first->recall);
        slot[1].push_back(pair.second->recall);
        slot[2].push_back(pair.first->specificity);
        slot[3].push_back(pair.second->specificity);
      }
      for (const auto& [key, values] : grouped) {
        const std::string comparison = std::string("pretrain_vs_individual/") + to_string(a3) +
                                       "/" + to_string(key.first) + "/" + to_string(key.second);
        add_wilcoxon(comparison, Metric::recall, values[0], values[1]);
        add_wilcoxon(comparison, Metric::specificity, values[2], values[3]);
      }
    };
    pair_against(Analysis::a3_1, Analysis::a1_contraction, Analysis::a1_movement);
    pair_against(Analysis::a3_2, Analysis::a2_train_contraction, Analysis::a2_train_movement);
  }

  emit(summary, config.out_dir);
  return summary;
}

// Full pipeline: preprocess (or reuse a matching store) then run.
inline RunSummary run_experiment(const RunConfig& config) {
  const EpochStore store = preprocess(config.dataset, config.filter, config.spectrogram,
                                      config.effective_store_dir(), config.jobs);
  return run_experiment_on_store(config, store);
}

}  // namespace emgdet
