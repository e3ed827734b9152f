#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "emgdet/error.hpp"
#include "emgdet/features.hpp"
#include "emgdet/matrix.hpp"
#include "emgdet/rng.hpp"
#include "emgdet/types.hpp"

namespace emgdet {

// Training regime of the protocol: batch size 64 (clamped to the dataset
// size), learning rate 0.005, 80 epochs, SGD with momentum.
struct TrainConfig {
  std::size_t batch_size = 64;
  double learning_rate = 0.005;
  int epochs = 80;
  std::uint64_t seed = 0;
  double momentum = 0.9;
  bool standardize_input = true;  // per-image z-score before the classifier

  void validate() const {
    require(batch_size >= 1, ErrorKind::invalid_config, "batch_size must be >= 1");
    require(learning_rate > 0.0, ErrorKind::invalid_config, "learning_rate must be positive");
    require(epochs >= 1, ErrorKind::invalid_config, "epochs must be >= 1");
    require(momentum >= 0.0 && momentum < 1.0, ErrorKind::invalid_config,
            "momentum must lie in [0, 1)");
  }
};

inline std::size_t effective_batch_size(const TrainConfig& config, std::size_t n_examples) {
  return std::min(config.batch_size, n_examples);
}

struct Prediction {
  double probability = 0.0;
  Label label = Label::non_artifact;
};

namespace learn_detail {

// z-score over all image cells; silent images (zero variance) map to zeros.
inline Matrix standardized(const Matrix& values) {
  double mean = 0.0;
  for (double v : values.data) mean += v;
  mean /= static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values.data) var += (v - mean) * (v - mean);
  var /= static_cast<double>(values.size());
  const double sd = std::sqrt(var);
  Matrix out(values.rows, values.cols);
  if (sd < 1e-12) return out;
  for (std::size_t i = 0; i < values.data.size(); ++i) {
    out.data[i] = (values.data[i] - mean) / sd;
  }
  return out;
}

// Numerically stable binary cross-entropy from the pre-sigmoid logit.
inline double bce_from_logit(double z, double y) {
  return std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
}

inline double sigmoid(double z) {
  if (z >= 0.0) {
    return 1.0 / (1.0 + std::exp(-z));
  }
  const double e = std::exp(z);
  return e / (1.0 + e);
}

inline void check_two_classes(const std::vector<Label>& labels) {
  bool has_artifact = false, has_clean = false;
  for (Label l : labels) {
    (l == Label::artifact ? has_artifact : has_clean) = true;
  }
  require(has_artifact && has_clean, ErrorKind::single_class,
          "training data must contain both classes");
}

inline std::vector<std::size_t> shuffled_indices(std::size_t n, Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  rng.shuffle(idx);
  return idx;
}

}  // namespace learn_detail

// Binary artifact classifier interface: train from scratch, calibrate
// (continue optimizing existing parameters), predict a probability.
class Classifier {
 public:
  virtual ~Classifier() = default;
  virtual std::string name() const = 0;
  virtual bool trained() const = 0;
  virtual std::vector<double> train(const std::vector<const FeatureImage*>& features,
                                    const std::vector<Label>& labels,
                                    const TrainConfig& config) = 0;
  virtual std::vector<double> calibrate(const std::vector<const FeatureImage*>& features,
                                        const std::vector<Label>& labels,
                                        const TrainConfig& config) = 0;
  virtual double predict(const FeatureImage& feature) const = 0;
  virtual void save(const std::string& path) const = 0;
  virtual void load(const std::string& path) = 0;
  virtual std::unique_ptr<Classifier> clone() const = 0;
};

inline Prediction predict_epoch(const Classifier& model, const FeatureImage& feature) {
  require(model.trained(), ErrorKind::untrained_model, "predict on untrained model");
  Prediction p;
  p.probability = model.predict(feature);
  p.label = p.probability >= 0.5 ? Label::artifact : Label::non_artifact;  // tie -> artifact
  return p;
}

// --- model file format ------------------------------------------------------

inline constexpr char kModelMagic[8] = {'E', 'M', 'G', 'M', 'D', 'L', '1', '\n'};

namespace learn_detail {

inline void save_model_file(const std::string& path, const nlohmann::json& header,
                            const std::vector<double>& params) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorKind::io_failure, "cannot open for writing: " + path);
  out.write(kModelMagic, sizeof(kModelMagic));
  const std::string text = header.dump();
  const auto len = static_cast<std::uint32_t>(text.size());
  unsigned char lenb[4] = {static_cast<unsigned char>(len & 0xff),
                           static_cast<unsigned char>((len >> 8) & 0xff),
                           static_cast<unsigned char>((len >> 16) & 0xff),
                           static_cast<unsigned char>((len >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(lenb), 4);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  out.write(reinterpret_cast<const char*>(params.data()),
            static_cast<std::streamsize>(params.size() * sizeof(double)));
  require(out.good(), ErrorKind::io_failure, "write failed: " + path);
}

inline std::pair<nlohmann::json, std::vector<double>> load_model_file(const std::string& path,
                                                                      const char* architecture) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorKind::io_failure, "cannot open: " + path);
  char magic[sizeof(kModelMagic)];
  in.read(magic, sizeof(magic));
  require(in.gcount() == sizeof(magic) && std::memcmp(magic, kModelMagic, sizeof(magic)) == 0,
          ErrorKind::unknown_format_version, "unknown model file magic");
  unsigned char lenb[4];
  in.read(reinterpret_cast<char*>(lenb), 4);
  require(in.gcount() == 4, ErrorKind::malformed_header, "truncated model header");
  const std::uint32_t len = static_cast<std::uint32_t>(lenb[0]) |
                            (static_cast<std::uint32_t>(lenb[1]) << 8) |
                            (static_cast<std::uint32_t>(lenb[2]) << 16) |
                            (static_cast<std::uint32_t>(lenb[3]) << 24);
  std::string text(len, '\0');
  in.read(text.data(), len);
  require(in.gcount() == static_cast<std::streamsize>(len), ErrorKind::malformed_header,
          "truncated model header");
  nlohmann::json header;
  std::size_t n_params = 0;
  try {
    header = nlohmann::json::parse(text);
    require(header.at("architecture").get<std::string>() == architecture,
            ErrorKind::dimension_mismatch, "model file holds a different architecture");
    n_params = header.at("n_params").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::malformed_header, std::string("invalid model header: ") + e.what());
  }
  std::vector<double> params(n_params);
  in.read(reinterpret_cast<char*>(params.data()),
          static_cast<std::streamsize>(n_params * sizeof(double)));
  require(in.gcount() == static_cast<std::streamsize>(n_params * sizeof(double)),
          ErrorKind::sample_count_mismatch, "model payload shorter than header");
  return {header, params};
}

}  // namespace learn_detail

// Logistic regression on mel-band mean/std pooled per channel block
// (n_channels x n_mels x 2 features). Trains in seconds; the CI workhorse.
class LinearBaseline final : public Classifier {
 public:
  std::string name() const override { return "linear_baseline"; }
  bool trained() const override { return trained_; }

  static std::vector<double> pooled_features(const FeatureImage& image, bool standardize) {
    require(image.frames_per_channel > 0 && image.n_channels > 0, ErrorKind::invalid_argument,
            "feature image lacks channel block structure");
    const Matrix values = standardize ? learn_detail::standardized(image.values) : image.values;
    const std::size_t frames = image.frames_per_channel;
    std::vector<double> out;
    out.reserve(image.n_channels * values.rows * 2);
    for (std::size_t c = 0; c < image.n_channels; ++c) {
      for (std::size_t m = 0; m < values.rows; ++m) {
        double mean = 0.0;
        for (std::size_t t = 0; t < frames; ++t) mean += values(m, c * frames + t);
        mean /= static_cast<double>(frames);
        double var = 0.0;
        for (std::size_t t = 0; t < frames; ++t) {
          const double d = values(m, c * frames + t) - mean;
          var += d * d;
        }
        var /= static_cast<double>(frames);
        out.push_back(mean);
        out.push_back(std::sqrt(var));
      }
    }
    return out;
  }

  std::vector<double> train(const std::vector<const FeatureImage*>& features,
                            const std::vector<Label>& labels,
                            const TrainConfig& config) override {
    config.validate();
    require(features.size() == labels.size() && !features.empty(), ErrorKind::invalid_argument,
            "features/labels size mismatch");
    learn_detail::check_two_classes(labels);

    std::vector<std::vector<double>> x;
    x.reserve(features.size());
    for (const auto* f : features) x.push_back(pooled_features(*f, config.standardize_input));
    dim_ = x.front().size();
    for (const auto& v : x) {
      require(v.size() == dim_, ErrorKind::dimension_mismatch,
              "inconsistent pooled feature dimensions");
    }

    // Per-feature standardization fitted on the training set; it is part of
    // the model and is kept fixed by calibrate().
    mu_.assign(dim_, 0.0);
    sigma_.assign(dim_, 0.0);
    for (const auto& v : x) {
      for (std::size_t d = 0; d < dim_; ++d) mu_[d] += v[d];
    }
    for (auto& m : mu_) m /= static_cast<double>(x.size());
    for (const auto& v : x) {
      for (std::size_t d = 0; d < dim_; ++d) {
        sigma_[d] += (v[d] - mu_[d]) * (v[d] - mu_[d]);
      }
    }
    for (auto& s : sigma_) {
      s = std::sqrt(s / static_cast<double>(x.size()));
      if (s < 1e-12) s = 1.0;
    }

    weights_.assign(dim_, 0.0);
    bias_ = 0.0;
    velocity_w_.assign(dim_, 0.0);
    velocity_b_ = 0.0;
    trained_ = true;
    return optimize(x, labels, config);
  }

  std::vector<double> calibrate(const std::vector<const FeatureImage*>& features,
                                const std::vector<Label>& labels,
                                const TrainConfig& config) override {
    require(trained_, ErrorKind::untrained_model, "calibrate requires a trained model");
    if (config.epochs == 0) return {};  // explicit no-op calibration
    config.validate();
    require(features.size() == labels.size() && !features.empty(), ErrorKind::invalid_argument,
            "features/labels size mismatch");
    learn_detail::check_two_classes(labels);
    std::vector<std::vector<double>> x;
    x.reserve(features.size());
    for (const auto* f : features) {
      auto v = pooled_features(*f, config.standardize_input);
      require(v.size() == dim_, ErrorKind::dimension_mismatch,
              "calibration features do not match pretrained dimensions");
      x.push_back(std::move(v));
    }
    std::fill(velocity_w_.begin(), velocity_w_.end(), 0.0);
    velocity_b_ = 0.0;
    return optimize(x, labels, config);
  }

  double predict(const FeatureImage& feature) const override {
    require(trained_, ErrorKind::untrained_model, "predict on untrained model");
    auto v = pooled_features(feature, standardize_input_);
    require(v.size() == dim_, ErrorKind::dimension_mismatch,
            "feature dimensions do not match the trained model");
    return learn_detail::sigmoid(logit(v));
  }

  void save(const std::string& path) const override {
    require(trained_, ErrorKind::untrained_model, "save requires a trained model");
    std::vector<double> params;
    params.reserve(3 * dim_ + 1);
    params.insert(params.end(), weights_.begin(), weights_.end());
    params.push_back(bias_);
    params.insert(params.end(), mu_.begin(), mu_.end());
    params.insert(params.end(), sigma_.begin(), sigma_.end());
    nlohmann::json header = {{"architecture", name()},
                             {"version", 1},
                             {"dim", dim_},
                             {"standardize_input", standardize_input_},
                             {"n_params", params.size()}};
    learn_detail::save_model_file(path, header, params);
  }

  void load(const std::string& path) override {
    auto [header, params] = learn_detail::load_model_file(path, "linear_baseline");
    dim_ = header.at("dim").get<std::size_t>();
    standardize_input_ = header.at("standardize_input").get<bool>();
    require(params.size() == 3 * dim_ + 1, ErrorKind::sample_count_mismatch,
            "unexpected parameter count in model file");
    weights_.assign(params.begin(), params.begin() + static_cast<std::ptrdiff_t>(dim_));
    bias_ = params[dim_];
    mu_.assign(params.begin() + static_cast<std::ptrdiff_t>(dim_) + 1,
               params.begin() + static_cast<std::ptrdiff_t>(2 * dim_) + 1);
    sigma_.assign(params.begin() + static_cast<std::ptrdiff_t>(2 * dim_) + 1, params.end());
    velocity_w_.assign(dim_, 0.0);
    velocity_b_ = 0.0;
    trained_ = true;
  }

  std::unique_ptr<Classifier> clone() const override {
    return std::make_unique<LinearBaseline>(*this);
  }

 private:
  double logit(const std::vector<double>& v) const {
    double z = bias_;
    for (std::size_t d = 0; d < dim_; ++d) {
      z += weights_[d] * (v[d] - mu_[d]) / sigma_[d];
    }
    return z;
  }

  std::vector<double> optimize(const std::vector<std::vector<double>>& x,
                               const std::vector<Label>& labels, const TrainConfig& config) {
    standardize_input_ = config.standardize_input;
    const std::size_t n = x.size();
    const std::size_t batch = effective_batch_size(config, n);
    Rng rng(Rng::mix(config.seed, 0x11be1));
    std::vector<double> trace;
    trace.reserve(static_cast<std::size_t>(config.epochs));
    std::vector<double> grad_w(dim_);
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
      const auto order = learn_detail::shuffled_indices(n, rng);
      double epoch_loss = 0.0;
      std::size_t n_batches = 0;
      for (std::size_t start = 0; start < n; start += batch) {
        const std::size_t end = std::min(start + batch, n);
        std::fill(grad_w.begin(), grad_w.end(), 0.0);
        double grad_b = 0.0;
        double batch_loss = 0.0;
        for (std::size_t i = start; i < end; ++i) {
          const auto& v = x[order[i]];
          const double y = labels[order[i]] == Label::artifact ? 1.0 : 0.0;
          const double z = logit(v);
          batch_loss += learn_detail::bce_from_logit(z, y);
          const double delta = learn_detail::sigmoid(z) - y;
          for (std::size_t d = 0; d < dim_; ++d) {
            grad_w[d] += delta * (v[d] - mu_[d]) / sigma_[d];
          }
          grad_b += delta;
        }
        const double inv = 1.0 / static_cast<double>(end - start);
        batch_loss *= inv;
        require(std::isfinite(batch_loss), ErrorKind::invalid_argument,
                "non-finite loss at epoch " + std::to_string(epoch));
        for (std::size_t d = 0; d < dim_; ++d) {
          velocity_w_[d] = config.momentum * velocity_w_[d] + grad_w[d] * inv;
          weights_[d] -= config.learning_rate * velocity_w_[d];
        }
        velocity_b_ = config.momentum * velocity_b_ + grad_b * inv;
        bias_ -= config.learning_rate * velocity_b_;
        epoch_loss += batch_loss;
        ++n_batches;
      }
      trace.push_back(epoch_loss / static_cast<double>(n_batches));
    }
    return trace;
  }

  bool trained_ = false;
  bool standardize_input_ = true;
  std::size_t dim_ = 0;
  std::vector<double> weights_;
  double bias_ = 0.0;
  std::vector<double> mu_, sigma_;
  std::vector<double> velocity_w_;
  double velocity_b_ = 0.0;
};

// Small reference CNN: conv(3x3, 8) -> ReLU -> maxpool(2x2) -> conv(3x3, 16)
// -> ReLU -> maxpool(2x2) -> global average pool -> linear -> sigmoid.
// Global pooling makes the network agnostic to epoch width (5 s vs 10 s
// images). Kaiming-uniform init, SGD with momentum, binary cross-entropy.
class SmallCnn final : public Classifier {
 public:
  static constexpr std::size_t kC1 = 8;
  static constexpr std::size_t kC2 = 16;
  static constexpr std::size_t kK = 3;

  std::string name() const override { return "reference_cnn"; }
  bool trained() const override { return trained_; }

  std::vector<double> train(const std::vector<const FeatureImage*>& features,
                            const std::vector<Label>& labels,
                            const TrainConfig& config) override {
    config.validate();
    require(features.size() == labels.size() && !features.empty(), ErrorKind::invalid_argument,
            "features/labels size mismatch");
    learn_detail::check_two_classes(labels);
    Rng rng(Rng::mix(config.seed, 0xc11));
    initialize(rng);
    trained_ = true;
    return optimize(features, labels, config, rng);
  }

  std::vector<double> calibrate(const std::vector<const FeatureImage*>& features,
                                const std::vector<Label>& labels,
                                const TrainConfig& config) override {
    require(trained_, ErrorKind::untrained_model, "calibrate requires a trained model");
    if (config.epochs == 0) return {};
    config.validate();
    require(features.size() == labels.size() && !features.empty(), ErrorKind::invalid_argument,
            "features/labels size mismatch");
    learn_detail::check_two_classes(labels);
    Rng rng(Rng::mix(config.seed, 0xca1));
    std::fill(velocity_.begin(), velocity_.end(), 0.0);
    return optimize(features, labels, config, rng);
  }

  double predict(const FeatureImage& feature) const override {
    require(trained_, ErrorKind::untrained_model, "predict on untrained model");
    const Matrix input = standardize_input_ ? learn_detail::standardized(feature.values)
                                            : feature.values;
    ForwardState state;
    return learn_detail::sigmoid(forward(input, state));
  }

  void save(const std::string& path) const override {
    require(trained_, ErrorKind::untrained_model, "save requires a trained model");
    nlohmann::json header = {{"architecture", name()},
                             {"version", 1},
                             {"standardize_input", standardize_input_},
                             {"n_params", params_.size()}};
    learn_detail::save_model_file(path, header, params_);
  }

  void load(const std::string& path) override {
    auto [header, params] = learn_detail::load_model_file(path, "reference_cnn");
    require(params.size() == kNParams, ErrorKind::sample_count_mismatch,
            "unexpected parameter count in model file");
    standardize_input_ = header.at("standardize_input").get<bool>();
    params_ = std::move(params);
    velocity_.assign(kNParams, 0.0);
    trained_ = true;
  }

  std::unique_ptr<Classifier> clone() const override { return std::make_unique<SmallCnn>(*this); }

  // -- used by gradient tests ------------------------------------------------
  const std::vector<double>& parameters() const { return params_; }
  void set_parameters(const std::vector<double>& p) {
    require(p.size() == kNParams, ErrorKind::dimension_mismatch, "parameter count mismatch");
    params_ = p;
    velocity_.assign(kNParams, 0.0);
    trained_ = true;
  }

  void initialize(Rng& rng) {
    params_.assign(kNParams, 0.0);
    velocity_.assign(kNParams, 0.0);
    // Kaiming uniform: U(-b, b), b = sqrt(6 / fan_in); biases start at zero.
    const double b1 = std::sqrt(6.0 / (1.0 * kK * kK));
    for (std::size_t i = 0; i < kC1 * kK * kK; ++i) {
      params_[conv1_w_ofs + i] = rng.uniform(-b1, b1);
    }
    const double b2 = std::sqrt(6.0 / (static_cast<double>(kC1) * kK * kK));
    for (std::size_t i = 0; i < kC2 * kC1 * kK * kK; ++i) {
      params_[conv2_w_ofs + i] = rng.uniform(-b2, b2);
    }
    const double b3 = std::sqrt(6.0 / static_cast<double>(kC2));
    for (std::size_t i = 0; i < kC2; ++i) params_[fc_w_ofs + i] = rng.uniform(-b3, b3);
  }

  double compute_loss(const std::vector<const FeatureImage*>& features,
                      const std::vector<Label>& labels) const {
    double loss = 0.0;
    for (std::size_t i = 0; i < features.size(); ++i) {
      const Matrix input = standardize_input_ ? learn_detail::standardized(features[i]->values)
                                              : features[i]->values;
      ForwardState state;
      const double z = forward(input, state);
      loss += learn_detail::bce_from_logit(z, labels[i] == Label::artifact ? 1.0 : 0.0);
    }
    return loss / static_cast<double>(features.size());
  }

  std::vector<double> compute_gradient(const std::vector<const FeatureImage*>& features,
                                       const std::vector<Label>& labels) const {
    std::vector<double> grad(kNParams, 0.0);
    for (std::size_t i = 0; i < features.size(); ++i) {
      const Matrix input = standardize_input_ ? learn_detail::standardized(features[i]->values)
                                              : features[i]->values;
      ForwardState state;
      const double z = forward(input, state);
      const double delta = learn_detail::sigmoid(z) -
                           (labels[i] == Label::artifact ? 1.0 : 0.0);
      backward(input, state, delta, grad);
    }
    const double inv = 1.0 / static_cast<double>(features.size());
    for (auto& g : grad) g *= inv;
    return grad;
  }

 private:
  // Parameter layout in one flat vector.
  static constexpr std::size_t conv1_w_ofs = 0;
  static constexpr std::size_t conv1_b_ofs = conv1_w_ofs + kC1 * kK * kK;
  static constexpr std::size_t conv2_w_ofs = conv1_b_ofs + kC1;
  static constexpr std::size_t conv2_b_ofs = conv2_w_ofs + kC2 * kC1 * kK * kK;
  static constexpr std::size_t fc_w_ofs = conv2_b_ofs + kC2;
  static constexpr std::size_t fc_b_ofs = fc_w_ofs + kC2;
  static constexpr std::size_t kNParams = fc_b_ofs + 1;

  struct Tensor3 {
    std::size_t c = 0, h = 0, w = 0;
    std::vector<double> data;
    void resize(std::size_t c_, std::size_t h_, std::size_t w_) {
      c = c_;
      h = h_;
      w = w_;
      data.assign(c * h * w, 0.0);
    }
    double& at(std::size_t ci, std::size_t y, std::size_t x) {
      return data[(ci * h + y) * w + x];
    }
    double at(std::size_t ci, std::size_t y, std::size_t x) const {
      return data[(ci * h + y) * w + x];
    }
  };

  struct ForwardState {
    Tensor3 conv1, pool1, conv2, pool2;     // post-activation values
    std::vector<std::size_t> argmax1, argmax2;
    std::vector<double> gap;                // kC2 global averages
  };

  static void conv_same(const Tensor3& in, const double* w, const double* b,
                        std::size_t out_channels, Tensor3& out) {
    out.resize(out_channels, in.h, in.w);
    const std::size_t pad = kK / 2;
    for (std::size_t oc = 0; oc < out_channels; ++oc) {
      for (std::size_t y = 0; y < in.h; ++y) {
        for (std::size_t x = 0; x < in.w; ++x) {
          double acc = b[oc];
          for (std::size_t ic = 0; ic < in.c; ++ic) {
            const double* wk = w + ((oc * in.c + ic) * kK * kK);
            for (std::size_t ky = 0; ky < kK; ++ky) {
              const std::ptrdiff_t sy =
                  static_cast<std::ptrdiff_t>(y + ky) - static_cast<std::ptrdiff_t>(pad);
              if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(in.h)) continue;
              for (std::size_t kx = 0; kx < kK; ++kx) {
                const std::ptrdiff_t sx =
                    static_cast<std::ptrdiff_t>(x + kx) - static_cast<std::ptrdiff_t>(pad);
                if (sx < 0 || sx >= static_cast<std::ptrdiff_t>(in.w)) continue;
                acc += wk[ky * kK + kx] *
                       in.at(ic, static_cast<std::size_t>(sy), static_cast<std::size_t>(sx));
              }
            }
          }
          out.at(oc, y, x) = acc;
        }
      }
    }
  }

  static void relu_inplace(Tensor3& t) {
    for (auto& v : t.data) v = std::max(v, 0.0);
  }

  // 2x2 max pooling with stride 2; odd trailing rows/columns are dropped.
  // Ties resolve to the first maximum in scan order.
  static void maxpool(const Tensor3& in, Tensor3& out, std::vector<std::size_t>& argmax) {
    const std::size_t oh = in.h / 2, ow = in.w / 2;
    require(oh >= 1 && ow >= 1, ErrorKind::dimension_mismatch,
            "feature image too small for the CNN pooling stages");
    out.resize(in.c, oh, ow);
    argmax.assign(in.c * oh * ow, 0);
    for (std::size_t c = 0; c < in.c; ++c) {
      for (std::size_t y = 0; y < oh; ++y) {
        for (std::size_t x = 0; x < ow; ++x) {
          double best = -1e300;
          std::size_t best_idx = 0;
          for (std::size_t dy = 0; dy < 2; ++dy) {
            for (std::size_t dx = 0; dx < 2; ++dx) {
              const std::size_t sy = 2 * y + dy, sx = 2 * x + dx;
              const double v = in.at(c, sy, sx);
              if (v > best) {
                best = v;
                best_idx = (c * in.h + sy) * in.w + sx;
              }
            }
          }
          out.at(c, y, x) = best;
          argmax[(c * oh + y) * ow + x] = best_idx;
        }
      }
    }
  }

  double forward(const Matrix& input, ForwardState& state) const {
    Tensor3 image;
    image.resize(1, input.rows, input.cols);
    std::copy(input.data.begin(), input.data.end(), image.data.begin());

    conv_same(image, params_.data() + conv1_w_ofs, params_.data() + conv1_b_ofs, kC1,
              state.conv1);
    relu_inplace(state.conv1);
    maxpool(state.conv1, state.pool1, state.argmax1);
    conv_same(state.pool1, params_.data() + conv2_w_ofs, params_.data() + conv2_b_ofs, kC2,
              state.conv2);
    relu_inplace(state.conv2);
    maxpool(state.conv2, state.pool2, state.argmax2);

    state.gap.assign(kC2, 0.0);
    const double inv_hw = 1.0 / static_cast<double>(state.pool2.h * state.pool2.w);
    for (std::size_t c = 0; c < kC2; ++c) {
      double acc = 0.0;
      for (std::size_t y = 0; y < state.pool2.h; ++y) {
        for (std::size_t x = 0; x < state.pool2.w; ++x) acc += state.pool2.at(c, y, x);
      }
      state.gap[c] = acc * inv_hw;
    }
    double z = params_[fc_b_ofs];
    for (std::size_t c = 0; c < kC2; ++c) z += params_[fc_w_ofs + c] * state.gap[c];
    return z;
  }

  // Accumulates parameter gradients for one example given dLoss/dLogit.
  void backward(const Matrix& input, const ForwardState& state, double dlogit,
                std::vector<double>& grad) const {
    grad[fc_b_ofs] += dlogit;
    std::vector<double> dgap(kC2);
    for (std::size_t c = 0; c < kC2; ++c) {
      grad[fc_w_ofs + c] += dlogit * state.gap[c];
      dgap[c] = dlogit * params_[fc_w_ofs + c];
    }

    Tensor3 dpool2;
    dpool2.resize(state.pool2.c, state.pool2.h, state.pool2.w);
    const double inv_hw = 1.0 / static_cast<double>(state.pool2.h * state.pool2.w);
    for (std::size_t c = 0; c < kC2; ++c) {
      const double g = dgap[c] * inv_hw;
      for (std::size_t y = 0; y < state.pool2.h; ++y) {
        for (std::size_t x = 0; x < state.pool2.w; ++x) dpool2.at(c, y, x) = g;
      }
    }

    Tensor3 dconv2;
    dconv2.resize(state.conv2.c, state.conv2.h, state.conv2.w);
    for (std::size_t i = 0; i < state.argmax2.size(); ++i) {
      dconv2.data[state.argmax2[i]] += dpool2.data[i];
    }
    for (std::size_t i = 0; i < dconv2.data.size(); ++i) {
      if (state.conv2.data[i] <= 0.0) dconv2.data[i] = 0.0;  // ReLU gate
    }

    Tensor3 dpool1;
    conv_backward(state.pool1, dconv2, params_.data() + conv2_w_ofs, kC2,
                  grad.data() + conv2_w_ofs, grad.data() + conv2_b_ofs, &dpool1);

    Tensor3 dconv1;
    dconv1.resize(state.conv1.c, state.conv1.h, state.conv1.w);
    for (std::size_t i = 0; i < state.argmax1.size(); ++i) {
      dconv1.data[state.argmax1[i]] += dpool1.data[i];
    }
    for (std::size_t i = 0; i < dconv1.data.size(); ++i) {
      if (state.conv1.data[i] <= 0.0) dconv1.data[i] = 0.0;
    }

    Tensor3 image;
    image.resize(1, input.rows, input.cols);
    std::copy(input.data.begin(), input.data.end(), image.data.begin());
    conv_backward(image, dconv1, params_.data() + conv1_w_ofs, kC1,
                  grad.data() + conv1_w_ofs, grad.data() + conv1_b_ofs, nullptr);
  }

  // Gradients of a same-padded 3x3 convolution: weight/bias accumulation and
  // (optionally) the gradient w.r.t. the layer input.
  static void conv_backward(const Tensor3& in, const Tensor3& dout, const double* w,
                            std::size_t out_channels, double* grad_w, double* grad_b,
                            Tensor3* din) {
    const std::size_t pad = kK / 2;
    if (din) din->resize(in.c, in.h, in.w);
    for (std::size_t oc = 0; oc < out_channels; ++oc) {
      for (std::size_t y = 0; y < dout.h; ++y) {
        for (std::size_t x = 0; x < dout.w; ++x) {
          const double g = dout.at(oc, y, x);
          if (g == 0.0) continue;
          grad_b[oc] += g;
          for (std::size_t ic = 0; ic < in.c; ++ic) {
            const std::size_t base = (oc * in.c + ic) * kK * kK;
            for (std::size_t ky = 0; ky < kK; ++ky) {
              const std::ptrdiff_t sy =
                  static_cast<std::ptrdiff_t>(y + ky) - static_cast<std::ptrdiff_t>(pad);
              if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(in.h)) continue;
              for (std::size_t kx = 0; kx < kK; ++kx) {
                const std::ptrdiff_t sx =
                    static_cast<std::ptrdiff_t>(x + kx) - static_cast<std::ptrdiff_t>(pad);
                if (sx < 0 || sx >= static_cast<std::ptrdiff_t>(in.w)) continue;
                const auto ssy = static_cast<std::size_t>(sy);
                const auto ssx = static_cast<std::size_t>(sx);
                grad_w[base + ky * kK + kx] += g * in.at(ic, ssy, ssx);
                if (din) din->at(ic, ssy, ssx) += g * w[base + ky * kK + kx];
              }
            }
          }
        }
      }
    }
  }

  std::vector<double> optimize(const std::vector<const FeatureImage*>& features,
                               const std::vector<Label>& labels, const TrainConfig& config,
                               Rng& rng) {
    standardize_input_ = config.standardize_input;
    const std::size_t n = features.size();
    const std::size_t batch = effective_batch_size(config, n);
    std::vector<double> trace;
    trace.reserve(static_cast<std::size_t>(config.epochs));
    std::vector<double> grad(kNParams);
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
      const auto order = learn_detail::shuffled_indices(n, rng);
      double epoch_loss = 0.0;
      std::size_t n_batches = 0;
      for (std::size_t start = 0; start < n; start += batch) {
        const std::size_t end = std::min(start + batch, n);
        std::fill(grad.begin(), grad.end(), 0.0);
        double batch_loss = 0.0;
        for (std::size_t i = start; i < end; ++i) {
          const auto* feature = features[order[i]];
          const Matrix input = config.standardize_input
                                   ? learn_detail::standardized(feature->values)
                                   : feature->values;
          ForwardState state;
          const double z = forward(input, state);
          const double y = labels[order[i]] == Label::artifact ? 1.0 : 0.0;
          batch_loss += learn_detail::bce_from_logit(z, y);
          backward(input, state, learn_detail::sigmoid(z) - y, grad);
        }
        const double inv = 1.0 / static_cast<double>(end - start);
        batch_loss *= inv;
        require(std::isfinite(batch_loss), ErrorKind::invalid_argument,
                "non-finite loss at epoch " + std::to_string(epoch));
        for (std::size_t p = 0; p < kNParams; ++p) {
          velocity_[p] = config.momentum * velocity_[p] + grad[p] * inv;
          params_[p] -= config.learning_rate * velocity_[p];
        }
        epoch_loss += batch_loss;
        ++n_batches;
      }
      trace.push_back(epoch_loss / static_cast<double>(n_batches));
    }
    return trace;
  }

  bool trained_ = false;
  bool standardize_input_ = true;
  std::vector<double> params_;
  std::vector<double> velocity_;
};

inline std::unique_ptr<Classifier> make_classifier(const std::string& name) {
  if (name == "linear_baseline") return std::make_unique<LinearBaseline>();
  if (name == "reference_cnn") return std::make_unique<SmallCnn>();
  fail(ErrorKind::invalid_argument, "unknown classifier: " + name);
}

}  // namespace emgdet
