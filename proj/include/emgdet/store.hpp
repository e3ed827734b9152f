#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <list>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include <json.hpp>

#include "emgdet/error.hpp"
#include "emgdet/features.hpp"
#include "emgdet/types.hpp"

namespace emgdet {

// On-disk store of preprocessed epochs: store.json metadata plus one feature
// matrix file per epoch. The fingerprint identifies the exact inputs and
// preprocessing configuration that produced it; preprocessing is skipped when
// it matches.
struct StoredEpoch {
  EpochInfo info;
  std::string feature_file;  // relative to the store directory
};

struct EpochStore {
  std::string dir;
  std::string fingerprint;
  double sampling_rate_hz = 0.0;
  nlohmann::json preprocess_snapshot;
  std::vector<StoredEpoch> epochs;

  EpochSet epoch_set() const {
    EpochSet set;
    set.reserve(epochs.size());
    for (const auto& e : epochs) set.push_back(e.info);
    return set;
  }

  const StoredEpoch& by_id(std::uint64_t id) const {
    for (const auto& e : epochs) {
      if (e.info.id == id) return e;
    }
    fail(ErrorKind::invalid_argument, "unknown epoch id in store");
  }

  FeatureImage load_feature(std::uint64_t id) const {
    const auto& entry = by_id(id);
    return read_feature_matrix((std::filesystem::path(dir) / entry.feature_file).string());
  }
};

namespace store_detail {

inline nlohmann::json epoch_info_to_json(const EpochInfo& info) {
  return {{"id", info.id},
          {"subject", info.subject_id},
          {"label", to_string(info.label)},
          {"task_id", info.task_id},
          {"task_ordinal", info.task_ordinal},
          {"repetition_index", info.repetition_index},
          {"onset_s", info.onset_s},
          {"duration_s", info.duration_s}};
}

inline EpochInfo epoch_info_from_json(const nlohmann::json& j) {
  EpochInfo info;
  info.id = j.at("id").get<std::uint64_t>();
  info.subject_id = j.at("subject").get<std::string>();
  info.label = j.at("label").get<std::string>() == "artifact" ? Label::artifact
                                                              : Label::non_artifact;
  info.task_id = j.at("task_id").get<std::string>();
  info.task_ordinal = j.at("task_ordinal").get<int>();
  info.repetition_index = j.at("repetition_index").get<int>();
  info.onset_s = j.at("onset_s").get<double>();
  info.duration_s = j.at("duration_s").get<double>();
  return info;
}

}  // namespace store_detail

inline void save_store_manifest(const EpochStore& store) {
  nlohmann::json epochs = nlohmann::json::array();
  for (const auto& e : store.epochs) {
    auto j = store_detail::epoch_info_to_json(e.info);
    j["feature_file"] = e.feature_file;
    epochs.push_back(j);
  }
  const nlohmann::json j = {{"version", 1},
                            {"fingerprint", store.fingerprint},
                            {"sampling_rate_hz", store.sampling_rate_hz},
                            {"preprocess", store.preprocess_snapshot},
                            {"epochs", epochs}};
  std::ofstream out((std::filesystem::path(store.dir) / "store.json").string(),
                    std::ios::binary);
  require(out.good(), ErrorKind::io_failure, "cannot write store manifest");
  out << j.dump(2) << '\n';
  require(out.good(), ErrorKind::io_failure, "store manifest write failed");
}

inline EpochStore load_store(const std::string& dir) {
  std::ifstream in((std::filesystem::path(dir) / "store.json").string(), std::ios::binary);
  require(in.good(), ErrorKind::io_failure, "cannot open store manifest in " + dir);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::malformed_header, std::string("invalid store manifest: ") + e.what());
  }
  EpochStore store;
  store.dir = dir;
  try {
    require(j.at("version").get<int>() == 1, ErrorKind::unknown_format_version,
            "unsupported store version");
    store.fingerprint = j.at("fingerprint").get<std::string>();
    store.sampling_rate_hz = j.at("sampling_rate_hz").get<double>();
    store.preprocess_snapshot = j.at("preprocess");
    for (const auto& je : j.at("epochs")) {
      StoredEpoch e;
      e.info = store_detail::epoch_info_from_json(je);
      e.feature_file = je.at("feature_file").get<std::string>();
      store.epochs.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::malformed_header, std::string("invalid store manifest: ") + e.what());
  }
  return store;
}

inline bool store_matches(const std::string& dir, const std::string& fingerprint) {
  const auto path = std::filesystem::path(dir) / "store.json";
  if (!std::filesystem::exists(path)) return false;
  try {
    return load_store(dir).fingerprint == fingerprint;
  } catch (const Error&) {
    return false;
  }
}

// Thread-safe LRU image cache over a store. Feature images are shared
// between many splits, so repeated loads come from memory while the total
// footprint stays bounded.
class FeatureProvider {
 public:
  explicit FeatureProvider(const EpochStore& store,
                           std::size_t capacity_bytes = std::size_t(2) << 30)
      : store_(store), capacity_(capacity_bytes) {
    for (std::size_t i = 0; i < store.epochs.size(); ++i) {
      index_[store.epochs[i].info.id] = i;
    }
  }

  std::shared_ptr<const FeatureImage> get(std::uint64_t id) {
    std::lock_guard<std::mutex> lock(mutex_);
    auto it = cache_.find(id);
    if (it != cache_.end()) {
      lru_.splice(lru_.begin(), lru_, it->second.lru_it);
      return it->second.image;
    }
    const auto idx = index_.find(id);
    require(idx != index_.end(), ErrorKind::invalid_argument, "unknown epoch id");
    auto image = std::make_shared<FeatureImage>(store_.load_feature(id));
    const std::size_t bytes = image->values.data.size() * sizeof(double) + 64;
    lru_.push_front(id);
    cache_[id] = {image, lru_.begin()};
    used_ += bytes;
    while (used_ > capacity_ && lru_.size() > 1) {
      const std::uint64_t victim = lru_.back();
      lru_.pop_back();
      auto victim_it = cache_.find(victim);
      used_ -= victim_it->second.image->values.data.size() * sizeof(double) + 64;
      cache_.erase(victim_it);
    }
    return image;
  }

 private:
  struct Entry {
    std::shared_ptr<const FeatureImage> image;
    std::list<std::uint64_t>::iterator lru_it;
  };

  const EpochStore& store_;
  std::size_t capacity_;
  std::size_t used_ = 0;
  std::map<std::uint64_t, std::size_t> index_;
  std::map<std::uint64_t, Entry> cache_;
  std::list<std::uint64_t> lru_;
  std::mutex mutex_;
};

}  // namespace emgdet
