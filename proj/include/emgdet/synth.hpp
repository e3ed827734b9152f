#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "emgdet/container.hpp"
#include "emgdet/error.hpp"
#include "emgdet/fft.hpp"
#include "emgdet/manifest.hpp"
#include "emgdet/rng.hpp"
#include "emgdet/types.hpp"

namespace emgdet {

// Per muscle group: the band the synthetic EMG burst occupies, its RMS
// before scaling, and a spatial gain applied to every electrode the group's
// montage pairs touch. The occipitalis default gain is low so its isometric
// contractions land close to the resting background, which is the regime the
// task-exclusion analysis probes.
struct ArtifactModel {
  double band_lo_hz = 20.0;
  double band_hi_hz = 300.0;
  double burst_rms_uv = 20.0;
  double spatial_gain = 1.0;
};

struct SynthesisConfig {
  std::uint64_t seed = 1;
  int subjects = 7;
  double sampling_rate_hz = 2048.0;
  double eo_duration_s = 289.0;
  double gap_s = 2.0;  // rest between segments; not part of the protocol
  double pink_exponent = 1.0;
  double background_rms_uv = 10.0;
  double alpha_freq_hz = 10.0;
  double alpha_rms_uv = 5.0;
  double ramp_s = 0.25;
  // Continuous movements produce broader mechanical artifacts than static
  // holds of the same muscle group; this factor scales their burst RMS.
  double movement_rms_scale = 4.0;
  double snr_scale = 1.0;
  ArtifactModel masseter_temporalis{};
  ArtifactModel frontalis{};
  ArtifactModel occipitalis{20.0, 300.0, 20.0, 0.12};

  const ArtifactModel& model(MuscleGroup group) const {
    switch (group) {
      case MuscleGroup::masseter_temporalis: return masseter_temporalis;
      case MuscleGroup::frontalis: return frontalis;
      case MuscleGroup::occipitalis: return occipitalis;
    }
    return masseter_temporalis;
  }

  void validate() const {
    require(subjects >= 1, ErrorKind::invalid_config, "need at least one subject");
    require(sampling_rate_hz > 0.0, ErrorKind::invalid_config, "sampling rate must be positive");
    require(eo_duration_s >= 285.0, ErrorKind::invalid_config,
            "EO segment must be at least 285 s");
    require(gap_s >= 0.0 && ramp_s >= 0.0, ErrorKind::invalid_config,
            "gap and ramp must be non-negative");
    require(background_rms_uv > 0.0 && alpha_rms_uv > 0.0, ErrorKind::invalid_config,
            "background RMS values must be positive");
    require(snr_scale >= 0.0, ErrorKind::invalid_config, "snr_scale must be >= 0");
    require(movement_rms_scale > 0.0, ErrorKind::invalid_config,
            "movement_rms_scale must be positive");
    const double nyquist = sampling_rate_hz / 2.0;
    for (MuscleGroup g : {MuscleGroup::masseter_temporalis, MuscleGroup::frontalis,
                          MuscleGroup::occipitalis}) {
      const auto& m = model(g);
      require(m.band_lo_hz > 0.0 && m.band_lo_hz < m.band_hi_hz && m.band_hi_hz < nyquist,
              ErrorKind::invalid_config, "artifact band must lie within (0, Nyquist)");
      require(m.burst_rms_uv > 0.0, ErrorKind::invalid_config, "burst RMS must be positive");
      require(m.spatial_gain >= 0.0 && m.spatial_gain <= 1.0, ErrorKind::invalid_config,
              "spatial gain must lie in [0, 1]");
    }
    require(alpha_freq_hz > 0.0 && alpha_freq_hz < nyquist, ErrorKind::invalid_config,
            "alpha frequency must lie within (0, Nyquist)");
  }
};

namespace synth_detail {

// Lays out one subject's timeline: EO first, then every task's repetitions in
// ordinal order, separated by gaps.
inline SubjectEntry protocol_timeline(const SynthesisConfig& config, const TaskCatalog& catalog,
                                      const std::string& subject_id) {
  SubjectEntry subject;
  subject.id = subject_id;
  double cursor = 0.0;
  subject.eo_segments.push_back({cursor, config.eo_duration_s});
  cursor += config.eo_duration_s + config.gap_s;
  for (const auto& task : catalog) {
    for (int rep = 1; rep <= task.protocol_repetitions; ++rep) {
      subject.annotations.push_back({task.id, cursor, task.epoch_duration_s, rep});
      cursor += task.epoch_duration_s + config.gap_s;
    }
  }
  return subject;
}

inline std::size_t timeline_samples(const SynthesisConfig& config, const SubjectEntry& subject) {
  double end = 0.0;
  for (const auto& eo : subject.eo_segments) end = std::max(end, eo.onset_s + eo.duration_s);
  for (const auto& ann : subject.annotations) {
    end = std::max(end, ann.onset_s + ann.duration_s);
  }
  return static_cast<std::size_t>(std::llround((end + config.gap_s) * config.sampling_rate_hz));
}

// 1/f^alpha noise of target RMS via spectral shaping of a white spectrum.
inline std::vector<double> pink_noise(std::size_t n, double exponent, double rms, Rng& rng) {
  const std::size_t m = fft::next_pow2(std::max<std::size_t>(n, 2));
  std::vector<fft::cplx> spectrum(m, fft::cplx(0.0, 0.0));
  const double f0 = 1.0 / static_cast<double>(m);
  for (std::size_t k = 1; k <= m / 2; ++k) {
    const double f = static_cast<double>(k) * f0;
    const double amplitude = std::pow(f, -exponent / 2.0);
    const double phase = rng.uniform(0.0, 2.0 * fft::kPi);
    const fft::cplx value = amplitude * fft::cplx(std::cos(phase), std::sin(phase));
    spectrum[k] = value;
    if (k != m / 2) spectrum[m - k] = std::conj(value);
  }
  fft::fft_pow2(spectrum, true);
  std::vector<double> out(n);
  double energy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = spectrum[i].real();
    energy += out[i] * out[i];
  }
  const double scale = rms / std::sqrt(std::max(energy / static_cast<double>(n), 1e-300));
  for (auto& v : out) v *= scale;
  return out;
}

// Band-limited Gaussian noise of target RMS (soft raised-cosine band edges).
inline std::vector<double> band_noise(std::size_t n, double lo_hz, double hi_hz,
                                      double sampling_rate_hz, double rms, Rng& rng) {
  const std::size_t m = fft::next_pow2(std::max<std::size_t>(n, 2));
  std::vector<fft::cplx> spectrum(m, fft::cplx(0.0, 0.0));
  for (std::size_t i = 0; i < m; ++i) spectrum[i] = fft::cplx(rng.normal(), 0.0);
  fft::fft_pow2(spectrum, false);
  const double bin_hz = sampling_rate_hz / static_cast<double>(m);
  const double edge_hz = std::max(2.0 * bin_hz, 2.0);
  for (std::size_t k = 0; k <= m / 2; ++k) {
    const double f = static_cast<double>(k) * bin_hz;
    double gain = 0.0;
    if (f >= lo_hz && f <= hi_hz) {
      gain = 1.0;
    } else if (f > lo_hz - edge_hz && f < lo_hz) {
      gain = 0.5 * (1.0 + std::cos(fft::kPi * (lo_hz - f) / edge_hz));
    } else if (f > hi_hz && f < hi_hz + edge_hz) {
      gain = 0.5 * (1.0 + std::cos(fft::kPi * (f - hi_hz) / edge_hz));
    }
    spectrum[k] *= gain;
    if (k != 0 && k != m / 2) spectrum[m - k] = std::conj(spectrum[k]);
  }
  fft::fft_pow2(spectrum, true);
  std::vector<double> out(n);
  double energy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = spectrum[i].real();
    energy += out[i] * out[i];
  }
  const double scale = rms / std::sqrt(std::max(energy / static_cast<double>(n), 1e-300));
  for (auto& v : out) v *= scale;
  return out;
}

inline double trapezoid(std::size_t i, std::size_t n, std::size_t ramp) {
  if (ramp == 0 || 2 * ramp >= n) return 1.0;
  if (i < ramp) return static_cast<double>(i + 1) / static_cast<double>(ramp);
  if (i >= n - ramp) return static_cast<double>(n - i) / static_cast<double>(ramp);
  return 1.0;
}

}  // namespace synth_detail

// Synthesizes one channel of one subject deterministically: pink background,
// an alpha component with a random phase, and for every artifact annotation
// whose muscle group touches this electrode an independent band-limited
// burst under a trapezoidal envelope.
inline std::vector<double> synthesize_channel(const SynthesisConfig& config,
                                              const TaskCatalog& catalog,
                                              const BipolarMontage& montage,
                                              const SubjectEntry& subject, int subject_index,
                                              const std::string& channel_name,
                                              std::size_t channel_index, std::size_t n_samples) {
  Rng base(config.seed);
  Rng rng = base.fork(Rng::mix(static_cast<std::uint64_t>(subject_index) + 1,
                               channel_index + 101));

  std::vector<double> samples = synth_detail::pink_noise(
      n_samples, config.pink_exponent, config.background_rms_uv, rng);

  const double alpha_phase = rng.uniform(0.0, 2.0 * fft::kPi);
  const double alpha_amp = config.alpha_rms_uv * std::sqrt(2.0);
  const double w = 2.0 * fft::kPi * config.alpha_freq_hz / config.sampling_rate_hz;
  for (std::size_t i = 0; i < n_samples; ++i) {
    samples[i] += alpha_amp * std::sin(w * static_cast<double>(i) + alpha_phase);
  }

  const auto ramp =
      static_cast<std::size_t>(std::llround(config.ramp_s * config.sampling_rate_hz));
  for (const auto& ann : subject.annotations) {
    const ArtifactTask& task = task_by_id(catalog, ann.task_id);
    const auto electrodes = montage.group_electrodes(task.group);
    const bool touched =
        std::find(electrodes.begin(), electrodes.end(), channel_name) != electrodes.end();
    // Every annotation consumes the same RNG draws on every channel so the
    // stream stays aligned regardless of which electrodes a task touches.
    Rng burst_rng = rng.fork(Rng::mix(static_cast<std::uint64_t>(task.ordinal) * 100 +
                                          static_cast<std::uint64_t>(ann.repetition_index),
                                      channel_index + 7919));
    if (!touched) continue;

    const auto& model = config.model(task.group);
    const double kind_scale =
        task.kind == ArtifactKind::continuous_movement ? config.movement_rms_scale : 1.0;
    const double amplitude =
        model.burst_rms_uv * model.spatial_gain * kind_scale * config.snr_scale;
    const auto start =
        static_cast<std::size_t>(std::llround(ann.onset_s * config.sampling_rate_hz));
    const auto len =
        static_cast<std::size_t>(std::llround(ann.duration_s * config.sampling_rate_hz));
    if (amplitude <= 0.0) continue;
    const auto burst = synth_detail::band_noise(len, model.band_lo_hz, model.band_hi_hz,
                                                config.sampling_rate_hz, amplitude, burst_rng);
    for (std::size_t i = 0; i < len && start + i < n_samples; ++i) {
      samples[start + i] += burst[i] * synth_detail::trapezoid(i, len, ramp);
    }
  }
  return samples;
}

// Full synthetic recording for one subject (all 25 protocol channels).
inline Recording synthesize_recording(const SynthesisConfig& config, const TaskCatalog& catalog,
                                      const BipolarMontage& montage, const SubjectEntry& subject,
                                      int subject_index) {
  Recording recording;
  recording.subject_id = subject.id;
  recording.sampling_rate_hz = config.sampling_rate_hz;
  recording.channels = default_channel_names();
  const std::size_t n = synth_detail::timeline_samples(config, subject);
  recording.samples.resize(recording.channels.size());
  for (std::size_t c = 0; c < recording.channels.size(); ++c) {
    recording.samples[c] = synthesize_channel(config, catalog, montage, subject, subject_index,
                                              recording.channels[c], c, n);
  }
  for (const auto& ann : subject.annotations) {
    recording.annotations.push_back({ann.onset_s, ann.duration_s, ann.task_id});
  }
  for (const auto& eo : subject.eo_segments) {
    recording.annotations.push_back({eo.onset_s, eo.duration_s, "EO"});
  }
  return recording;
}

inline SubjectEntry synthesize_subject_entry(const SynthesisConfig& config,
                                             const TaskCatalog& catalog, int subject_index) {
  char name[16];
  std::snprintf(name, sizeof(name), "S%02d", subject_index + 1);
  return synth_detail::protocol_timeline(config, catalog, name);
}

// Generates the whole dataset on disk: one container file per subject plus a
// manifest. Deterministic for a fixed seed.
inline DatasetManifest synthesize_dataset(const SynthesisConfig& config,
                                          const TaskCatalog& catalog,
                                          const BipolarMontage& montage,
                                          const std::string& out_dir) {
  config.validate();
  std::filesystem::create_directories(out_dir);
  DatasetManifest manifest;
  for (int s = 0; s < config.subjects; ++s) {
    SubjectEntry subject = synthesize_subject_entry(config, catalog, s);
    const Recording recording = synthesize_recording(config, catalog, montage, subject, s);
    subject.recording_path = subject.id + ".emgrec";
    write_recording(recording, (std::filesystem::path(out_dir) / subject.recording_path).string());
    manifest.subjects.push_back(std::move(subject));
  }
  manifest.validate(catalog);
  save_manifest(manifest, (std::filesystem::path(out_dir) / "manifest.json").string());
  return manifest;
}

}  // namespace emgdet
