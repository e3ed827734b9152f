#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "emgdet/error.hpp"
#include "emgdet/fft.hpp"
#include "emgdet/matrix.hpp"
#include "emgdet/types.hpp"

namespace emgdet {

// Spectrogram parameters. Protocol values: 409-sample FFT window (0.2 of the
// 2048 Hz sampling rate, taken literally), Hann window, no overlap, power
// spectrum. fmax_hz = 0 means "Nyquist at the point of use"; hop_length = 0
// means "equal to fft_length".
struct SpectrogramConfig {
  std::size_t fft_length = 409;
  std::size_t hop_length = 0;
  std::size_t n_mels = 128;
  double fmin_hz = 0.0;
  double fmax_hz = 0.0;
  double power_exponent = 2.0;
  bool log_compress = true;
  double db_floor = -80.0;

  std::size_t hop() const { return hop_length == 0 ? fft_length : hop_length; }

  double fmax(double sampling_rate_hz) const {
    return fmax_hz == 0.0 ? sampling_rate_hz / 2.0 : fmax_hz;
  }

  std::size_t n_bins() const { return fft_length / 2 + 1; }

  void validate(double sampling_rate_hz) const {
    require(fft_length >= 2, ErrorKind::invalid_config, "fft_length must be >= 2");
    require(hop() > 0, ErrorKind::invalid_config, "hop length must be positive");
    require(n_mels >= 1, ErrorKind::invalid_config, "n_mels must be >= 1");
    const double hi = fmax(sampling_rate_hz);
    require(fmin_hz >= 0.0 && fmin_hz < hi && hi <= sampling_rate_hz / 2.0 + 1e-9,
            ErrorKind::invalid_config, "mel range must satisfy 0 <= fmin < fmax <= Nyquist");
    require(power_exponent > 0.0, ErrorKind::invalid_config, "power exponent must be positive");
  }
};

// Feature image: mel bands x (frames_per_channel * n_channels), channel
// blocks concatenated left-to-right in montage order.
struct FeatureImage {
  Matrix values;
  std::size_t frames_per_channel = 0;
  std::size_t n_channels = 0;
};

namespace feat_detail {

// Periodic Hann window, matching the usual FFT analysis convention.
inline std::vector<double> hann_window(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = 0.5 - 0.5 * std::cos(2.0 * fft::kPi * static_cast<double>(i) / static_cast<double>(n));
  }
  return w;
}

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

}  // namespace feat_detail

inline std::size_t stft_frame_count(std::size_t signal_length, const SpectrogramConfig& config) {
  require(signal_length >= config.fft_length, ErrorKind::signal_too_short,
          "signal shorter than one FFT window");
  return 1 + (signal_length - config.fft_length) / config.hop();
}

// Power spectrogram: bins x frames, frame t = |DFT(hann . x[t*hop : t*hop+N])|^2
// (more generally |.|^power_exponent). Tail samples past the last full frame
// are discarded.
inline Matrix stft_power(const std::vector<double>& signal, const SpectrogramConfig& config,
                         const fft::DftPlan* plan = nullptr) {
  const std::size_t n = config.fft_length;
  const std::size_t frames = stft_frame_count(signal.size(), config);
  const std::size_t bins = config.n_bins();
  const auto window = feat_detail::hann_window(n);

  std::unique_ptr<fft::DftPlan> local_plan;
  if (!plan) local_plan = std::make_unique<fft::DftPlan>(n);
  const fft::DftPlan& dft = plan ? *plan : *local_plan;
  require(dft.length() == n, ErrorKind::dimension_mismatch, "DFT plan length mismatch");

  Matrix out(bins, frames);
  std::vector<fft::cplx> frame(n);
  for (std::size_t t = 0; t < frames; ++t) {
    const std::size_t start = t * config.hop();
    for (std::size_t i = 0; i < n; ++i) {
      frame[i] = fft::cplx(signal[start + i] * window[i], 0.0);
    }
    const auto spectrum = dft.forward(frame);
    for (std::size_t k = 0; k < bins; ++k) {
      const double mag = std::abs(spectrum[k]);
      out(k, t) = (config.power_exponent == 2.0) ? mag * mag
                                                 : std::pow(mag, config.power_exponent);
    }
  }
  return out;
}

// Triangular mel filterbank (mel = 2595*log10(1 + f/700)), rows
// area-normalized (Slaney style: 2 / bandwidth). Errors if any row covers no
// FFT bin.
inline Matrix mel_filterbank(const SpectrogramConfig& config, double sampling_rate_hz) {
  config.validate(sampling_rate_hz);
  const std::size_t bins = config.n_bins();
  const double fmax = config.fmax(sampling_rate_hz);
  const double mel_lo = feat_detail::hz_to_mel(config.fmin_hz);
  const double mel_hi = feat_detail::hz_to_mel(fmax);

  std::vector<double> edges(config.n_mels + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = feat_detail::mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) /
                                                   static_cast<double>(config.n_mels + 1));
  }

  Matrix bank(config.n_mels, bins);
  const double bin_hz = sampling_rate_hz / static_cast<double>(config.fft_length);
  for (std::size_t m = 0; m < config.n_mels; ++m) {
    const double left = edges[m];
    const double center = edges[m + 1];
    const double right = edges[m + 2];
    const double norm = 2.0 / (right - left);
    bool any = false;
    for (std::size_t k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * bin_hz;
      double weight = 0.0;
      if (f > left && f < center) {
        weight = (f - left) / (center - left);
      } else if (f >= center && f < right) {
        weight = (right - f) / (right - center);
      }
      if (weight > 0.0) any = true;
      bank(m, k) = weight * norm;
    }
    require(any, ErrorKind::invalid_config,
            "mel filter " + std::to_string(m) + " covers no FFT bin (n_mels too large)");
  }
  return bank;
}

// Mel spectrogram of one channel: n_mels x frames, optionally dB-compressed
// with an absolute floor.
inline Matrix mel_channel_block(const std::vector<double>& signal,
                                const SpectrogramConfig& config, const Matrix& bank,
                                const fft::DftPlan* plan = nullptr) {
  const Matrix power = stft_power(signal, config, plan);
  Matrix block(bank.rows, power.cols);
  // The triangles are narrow; restricting each row to its nonzero bin range
  // avoids a mostly-zero dense product.
  std::vector<std::pair<std::size_t, std::size_t>> ranges(bank.rows, {0, 0});
  for (std::size_t m = 0; m < bank.rows; ++m) {
    std::size_t first = bank.cols, last = 0;
    for (std::size_t k = 0; k < bank.cols; ++k) {
      if (bank(m, k) != 0.0) {
        if (first == bank.cols) first = k;
        last = k + 1;
      }
    }
    ranges[m] = {first, last};
  }
  for (std::size_t m = 0; m < bank.rows; ++m) {
    const auto [first, last] = ranges[m];
    for (std::size_t t = 0; t < power.cols; ++t) {
      double acc = 0.0;
      for (std::size_t k = first; k < last; ++k) acc += bank(m, k) * power(k, t);
      block(m, t) = acc;
    }
  }
  if (config.log_compress) {
    // dB re 1 uV^2 with an absolute floor; a silent input maps uniformly to
    // the floor.
    const double amin = std::pow(10.0, config.db_floor / 10.0);
    for (auto& v : block.data) {
      v = 10.0 * std::log10(std::max(v, amin));
    }
  }
  return block;
}

// Full feature image of an epoch: per derived channel a mel spectrogram,
// blocks concatenated along the time axis in montage order.
inline FeatureImage epoch_to_feature(const Epoch& epoch, const SpectrogramConfig& config,
                                     double sampling_rate_hz) {
  config.validate(sampling_rate_hz);
  require(!epoch.samples.empty(), ErrorKind::empty_input, "epoch has no channels");
  const Matrix bank = mel_filterbank(config, sampling_rate_hz);
  const fft::DftPlan plan(config.fft_length);

  const std::size_t frames = stft_frame_count(epoch.n_samples(), config);
  FeatureImage image;
  image.frames_per_channel = frames;
  image.n_channels = epoch.samples.size();
  image.values = Matrix(config.n_mels, frames * image.n_channels);
  for (std::size_t c = 0; c < epoch.samples.size(); ++c) {
    const Matrix block = mel_channel_block(epoch.samples[c], config, bank, &plan);
    for (std::size_t m = 0; m < block.rows; ++m) {
      for (std::size_t t = 0; t < block.cols; ++t) {
        image.values(m, c * frames + t) = block(m, t);
      }
    }
  }
  return image;
}

// --- portable feature matrix files (see docs/formats.md) -------------------

inline constexpr char kFeatureMagic[8] = {'E', 'M', 'G', 'F', 'M', 'T', '1', '\n'};

inline void write_feature_matrix(const FeatureImage& image, const std::string& path) {
  require(all_finite(image.values), ErrorKind::invalid_argument,
          "feature image contains non-finite values");
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorKind::io_failure, "cannot open for writing: " + path);
  out.write(kFeatureMagic, sizeof(kFeatureMagic));
  const std::uint32_t dims[4] = {static_cast<std::uint32_t>(image.values.rows),
                                 static_cast<std::uint32_t>(image.values.cols),
                                 static_cast<std::uint32_t>(image.frames_per_channel),
                                 static_cast<std::uint32_t>(image.n_channels)};
  for (std::uint32_t d : dims) {
    unsigned char bytes[4] = {static_cast<unsigned char>(d & 0xff),
                              static_cast<unsigned char>((d >> 8) & 0xff),
                              static_cast<unsigned char>((d >> 16) & 0xff),
                              static_cast<unsigned char>((d >> 24) & 0xff)};
    out.write(reinterpret_cast<const char*>(bytes), 4);
  }
  std::vector<unsigned char> buffer(image.values.data.size() * 4);
  for (std::size_t i = 0; i < image.values.data.size(); ++i) {
    const auto f = static_cast<float>(image.values.data[i]);
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    buffer[4 * i] = static_cast<unsigned char>(bits & 0xff);
    buffer[4 * i + 1] = static_cast<unsigned char>((bits >> 8) & 0xff);
    buffer[4 * i + 2] = static_cast<unsigned char>((bits >> 16) & 0xff);
    buffer[4 * i + 3] = static_cast<unsigned char>((bits >> 24) & 0xff);
  }
  out.write(reinterpret_cast<const char*>(buffer.data()),
            static_cast<std::streamsize>(buffer.size()));
  require(out.good(), ErrorKind::io_failure, "write failed: " + path);
}

inline FeatureImage read_feature_matrix(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorKind::io_failure, "cannot open: " + path);
  char magic[sizeof(kFeatureMagic)];
  in.read(magic, sizeof(magic));
  require(in.gcount() == sizeof(magic) && std::memcmp(magic, kFeatureMagic, sizeof(magic)) == 0,
          ErrorKind::unknown_format_version, "unknown feature file magic");
  std::uint32_t dims[4];
  for (auto& d : dims) {
    unsigned char bytes[4];
    in.read(reinterpret_cast<char*>(bytes), 4);
    require(in.gcount() == 4, ErrorKind::malformed_header, "truncated feature header");
    d = static_cast<std::uint32_t>(bytes[0]) | (static_cast<std::uint32_t>(bytes[1]) << 8) |
        (static_cast<std::uint32_t>(bytes[2]) << 16) | (static_cast<std::uint32_t>(bytes[3]) << 24);
  }
  FeatureImage image;
  image.values = Matrix(dims[0], dims[1]);
  image.frames_per_channel = dims[2];
  image.n_channels = dims[3];
  std::vector<unsigned char> buffer(image.values.data.size() * 4);
  in.read(reinterpret_cast<char*>(buffer.data()), static_cast<std::streamsize>(buffer.size()));
  require(in.gcount() == static_cast<std::streamsize>(buffer.size()),
          ErrorKind::sample_count_mismatch, "feature payload shorter than header dims");
  for (std::size_t i = 0; i < image.values.data.size(); ++i) {
    const std::uint32_t bits = static_cast<std::uint32_t>(buffer[4 * i]) |
                               (static_cast<std::uint32_t>(buffer[4 * i + 1]) << 8) |
                               (static_cast<std::uint32_t>(buffer[4 * i + 2]) << 16) |
                               (static_cast<std::uint32_t>(buffer[4 * i + 3]) << 24);
    float f;
    std::memcpy(&f, &bits, 4);
    image.values.data[i] = static_cast<double>(f);
  }
  return image;
}

inline void write_feature_csv(const FeatureImage& image, const std::string& path) {
  std::ofstream out(path);
  require(out.good(), ErrorKind::io_failure, "cannot open for writing: " + path);
  out.precision(9);
  for (std::size_t r = 0; r < image.values.rows; ++r) {
    for (std::size_t c = 0; c < image.values.cols; ++c) {
      if (c) out << ',';
      out << image.values(r, c);
    }
    out << '\n';
  }
  require(out.good(), ErrorKind::io_failure, "write failed: " + path);
}

}  // namespace emgdet
