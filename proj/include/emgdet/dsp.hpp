#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "emgdet/error.hpp"
#include "emgdet/fft.hpp"
#include "emgdet/manifest.hpp"
#include "emgdet/types.hpp"

namespace emgdet {

// Filtering parameters of the preprocessing stage. Defaults follow the
// recording protocol at 2048 Hz: 1 Hz high-pass, 50 Hz notch plus harmonics
// up to 1001 Hz. All filters are linear-phase FIR (Hamming-windowed sinc)
// applied forward-backward.
struct FilterSpec {
  double highpass_cutoff_hz = 1.0;
  double notch_base_hz = 50.0;
  double notch_max_hz = 1001.0;
  double notch_bandwidth_hz = 1.0;
  double fir_transition_bw_hz = 1.0;

  void validate(double sampling_rate_hz) const {
    const double nyquist = sampling_rate_hz / 2.0;
    require(sampling_rate_hz > 0.0, ErrorKind::invalid_config, "sampling rate must be positive");
    require(highpass_cutoff_hz > 0.0, ErrorKind::invalid_config,
            "high-pass cutoff must be positive");
    require(highpass_cutoff_hz < notch_base_hz, ErrorKind::invalid_config,
            "high-pass cutoff must lie below the notch base frequency");
    require(notch_base_hz <= notch_max_hz, ErrorKind::invalid_config,
            "notch base must not exceed notch max");
    require(notch_max_hz < nyquist, ErrorKind::invalid_config,
            "notch max must lie below Nyquist");
    require(notch_bandwidth_hz > 0.0 && fir_transition_bw_hz > 0.0, ErrorKind::invalid_config,
            "bandwidths must be positive");
  }
};

namespace dsp_detail {

inline std::size_t fir_length(double transition_bw_hz, double sampling_rate_hz) {
  // Hamming window: transition width ~= 3.3 / N (normalized frequency).
  auto n = static_cast<std::size_t>(std::ceil(3.3 * sampling_rate_hz / transition_bw_hz));
  if (n % 2 == 0) ++n;
  return std::max<std::size_t>(n, 3);
}

// Windowed-sinc low-pass with unit DC gain; cutoff is the half-amplitude
// point.
inline std::vector<double> lowpass_sinc(double cutoff_hz, double sampling_rate_hz,
                                        std::size_t n_taps) {
  const double fc = cutoff_hz / sampling_rate_hz;  // cycles per sample
  const auto center = static_cast<double>(n_taps - 1) / 2.0;
  std::vector<double> h(n_taps);
  double sum = 0.0;
  for (std::size_t i = 0; i < n_taps; ++i) {
    const double t = static_cast<double>(i) - center;
    const double sinc = (t == 0.0) ? 2.0 * fc : std::sin(2.0 * fft::kPi * fc * t) / (fft::kPi * t);
    const double window =
        0.54 - 0.46 * std::cos(2.0 * fft::kPi * static_cast<double>(i) /
                               static_cast<double>(n_taps - 1));
    h[i] = sinc * window;
    sum += h[i];
  }
  for (auto& v : h) v /= sum;
  return h;
}

inline std::vector<double> spectral_invert(const std::vector<double>& h) {
  std::vector<double> out(h.size());
  for (std::size_t i = 0; i < h.size(); ++i) out[i] = -h[i];
  out[(h.size() - 1) / 2] += 1.0;
  return out;
}

}  // namespace dsp_detail

inline std::vector<double> design_highpass(const FilterSpec& spec, double sampling_rate_hz) {
  spec.validate(sampling_rate_hz);
  require(spec.highpass_cutoff_hz < sampling_rate_hz / 2.0, ErrorKind::invalid_config,
          "high-pass cutoff at or above Nyquist");
  const std::size_t n = dsp_detail::fir_length(spec.fir_transition_bw_hz, sampling_rate_hz);
  return dsp_detail::spectral_invert(
      dsp_detail::lowpass_sinc(spec.highpass_cutoff_hz, sampling_rate_hz, n));
}

// One FIR notch per power-line harmonic: notch = identity minus a band-pass
// whose flat region covers the harmonic. At 2048 Hz the defaults give 20
// notches (50, 100, ..., 1000 Hz).
inline std::vector<std::vector<double>> design_notch_bank(const FilterSpec& spec,
                                                          double sampling_rate_hz) {
  spec.validate(sampling_rate_hz);
  const double nyquist = sampling_rate_hz / 2.0;
  const std::size_t n = dsp_detail::fir_length(spec.fir_transition_bw_hz, sampling_rate_hz);
  std::vector<std::vector<double>> bank;
  for (double f0 = spec.notch_base_hz; f0 <= spec.notch_max_hz; f0 += spec.notch_base_hz) {
    const double half_width = spec.notch_bandwidth_hz / 2.0 + spec.fir_transition_bw_hz / 2.0;
    const double lo = f0 - half_width;
    const double hi = f0 + half_width;
    require(lo > 0.0 && hi < nyquist, ErrorKind::invalid_config,
            "notch band does not fit below Nyquist at " + std::to_string(f0) + " Hz");
    const auto lp_hi = dsp_detail::lowpass_sinc(hi, sampling_rate_hz, n);
    const auto lp_lo = dsp_detail::lowpass_sinc(lo, sampling_rate_hz, n);
    std::vector<double> notch(n);
    for (std::size_t i = 0; i < n; ++i) notch[i] = -(lp_hi[i] - lp_lo[i]);
    notch[(n - 1) / 2] += 1.0;
    bank.push_back(std::move(notch));
  }
  return bank;
}

// Collapses a chain of linear-phase FIR filters into one kernel so a
// recording is convolved once instead of once per filter.
inline std::vector<double> cascade_kernels(const std::vector<std::vector<double>>& kernels) {
  require(!kernels.empty(), ErrorKind::empty_input, "no kernels to cascade");
  std::vector<double> combined = kernels.front();
  for (std::size_t i = 1; i < kernels.size(); ++i) {
    combined = fft::convolve_full(combined, kernels[i]);
  }
  return combined;
}

// Forward-backward FIR filtering with reflection padding of one filter
// length: zero net group delay, edges stabilized by the mirrored extension.
inline std::vector<double> filter_zero_phase(const std::vector<double>& signal,
                                             const std::vector<double>& coefficients) {
  const std::size_t n = signal.size();
  const std::size_t taps = coefficients.size();
  require(taps >= 1, ErrorKind::empty_input, "empty coefficient vector");
  require(n > taps, ErrorKind::signal_too_short,
          "signal must be longer than the filter");

  const std::size_t pad = taps;
  std::vector<double> padded(n + 2 * pad);
  for (std::size_t i = 0; i < pad; ++i) padded[pad - 1 - i] = signal[i + 1];
  std::copy(signal.begin(), signal.end(), padded.begin() + static_cast<std::ptrdiff_t>(pad));
  for (std::size_t i = 0; i < pad; ++i) padded[pad + n + i] = signal[n - 2 - i];

  std::vector<double> once = fft::convolve_full(padded, coefficients);
  std::reverse(once.begin(), once.end());
  std::vector<double> twice = fft::convolve_full(once, coefficients);
  std::reverse(twice.begin(), twice.end());

  std::vector<double> out(n);
  const std::size_t offset = pad + taps - 1;
  std::copy(twice.begin() + static_cast<std::ptrdiff_t>(offset),
            twice.begin() + static_cast<std::ptrdiff_t>(offset + n), out.begin());
  return out;
}

inline Recording filter_zero_phase(const Recording& recording,
                                   const std::vector<double>& coefficients) {
  Recording out = recording;
  for (auto& row : out.samples) row = filter_zero_phase(row, coefficients);
  return out;
}

// Derived channel i = anode - cathode, in montage order, named "anode-cathode".
inline Recording derive_bipolar(const Recording& recording, const BipolarMontage& montage) {
  Recording out;
  out.subject_id = recording.subject_id;
  out.sampling_rate_hz = recording.sampling_rate_hz;
  out.annotations = recording.annotations;
  const std::size_t n = recording.n_samples();
  out.channels.reserve(montage.pairs.size());
  out.samples.reserve(montage.pairs.size());
  for (const auto& pair : montage.pairs) {
    const auto& anode = recording.samples[recording.channel_index(pair.anode)];
    const auto& cathode = recording.samples[recording.channel_index(pair.cathode)];
    std::vector<double> derived(n);
    for (std::size_t i = 0; i < n; ++i) derived[i] = anode[i] - cathode[i];
    out.channels.push_back(pair.derived_name());
    out.samples.push_back(std::move(derived));
  }
  return out;
}

// One contiguous slice of a recording destined to become an epoch.
struct EpochSpan {
  EpochInfo info;       // id assigned by the caller or build function
  std::size_t start_sample = 0;
  std::size_t n_samples = 0;
};

// Computes epoch boundaries for one subject: artifact epochs exactly at their
// annotation onsets with the task-mandated duration, and EO segments cut into
// the alternating 10 s / 5 s pattern (starting with 10 s, incomplete tail
// discarded).
inline std::vector<EpochSpan> build_epoch_spans(const SubjectEntry& subject,
                                                const TaskCatalog& catalog,
                                                double sampling_rate_hz,
                                                std::size_t total_samples,
                                                std::uint64_t first_id = 0) {
  std::vector<EpochSpan> spans;
  std::uint64_t next_id = first_id;
  for (const auto& ann : subject.annotations) {
    const ArtifactTask& task = task_by_id(catalog, ann.task_id);
    EpochSpan span;
    span.start_sample = static_cast<std::size_t>(std::llround(ann.onset_s * sampling_rate_hz));
    span.n_samples =
        static_cast<std::size_t>(std::llround(task.epoch_duration_s * sampling_rate_hz));
    require(span.start_sample + span.n_samples <= total_samples,
            ErrorKind::annotation_out_of_range,
            "artifact annotation extends beyond recording end");
    span.info.id = next_id++;
    span.info.subject_id = subject.id;
    span.info.label = Label::artifact;
    span.info.task_id = task.id;
    span.info.task_ordinal = task.ordinal;
    span.info.repetition_index = ann.repetition_index;
    span.info.onset_s = ann.onset_s;
    span.info.duration_s = task.epoch_duration_s;
    spans.push_back(span);
  }
  for (const auto& eo : subject.eo_segments) {
    const auto seg_start =
        static_cast<std::size_t>(std::llround(eo.onset_s * sampling_rate_hz));
    const auto seg_len =
        static_cast<std::size_t>(std::llround(eo.duration_s * sampling_rate_hz));
    require(seg_start + seg_len <= total_samples, ErrorKind::annotation_out_of_range,
            "EO segment extends beyond recording end");
    std::size_t cursor = 0;
    bool long_epoch = true;
    while (true) {
      const double duration_s = long_epoch ? 10.0 : 5.0;
      const auto n = static_cast<std::size_t>(std::llround(duration_s * sampling_rate_hz));
      if (cursor + n > seg_len) break;
      EpochSpan span;
      span.start_sample = seg_start + cursor;
      span.n_samples = n;
      span.info.id = next_id++;
      span.info.subject_id = subject.id;
      span.info.label = Label::non_artifact;
      span.info.onset_s = eo.onset_s + static_cast<double>(cursor) / sampling_rate_hz;
      span.info.duration_s = duration_s;
      spans.push_back(span);
      cursor += n;
      long_epoch = !long_epoch;
    }
  }
  return spans;
}

inline Epoch cut_epoch(const Recording& recording, const EpochSpan& span) {
  Epoch epoch;
  epoch.info = span.info;
  epoch.channels = recording.channels;
  epoch.samples.reserve(recording.n_channels());
  for (const auto& row : recording.samples) {
    epoch.samples.emplace_back(row.begin() + static_cast<std::ptrdiff_t>(span.start_sample),
                               row.begin() +
                                   static_cast<std::ptrdiff_t>(span.start_sample + span.n_samples));
  }
  return epoch;
}

// Materializes every epoch of one subject's (montage-derived) recording.
inline std::vector<Epoch> segment_epochs(const Recording& recording, const SubjectEntry& subject,
                                         const TaskCatalog& catalog) {
  const auto spans =
      build_epoch_spans(subject, catalog, recording.sampling_rate_hz, recording.n_samples());
  std::vector<Epoch> epochs;
  epochs.reserve(spans.size());
  for (const auto& span : spans) epochs.push_back(cut_epoch(recording, span));
  return epochs;
}

}  // namespace emgdet
