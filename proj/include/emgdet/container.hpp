#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "emgdet/error.hpp"
#include "emgdet/types.hpp"

namespace emgdet {

// Recording container format "EMGREC1": an 8-byte magic, a little-endian
// u32 JSON header length, the UTF-8 JSON header, then n_channels * n_samples
// float32 little-endian values in channel-major order. See docs/formats.md.
inline constexpr char kRecordingMagic[8] = {'E', 'M', 'G', 'R', 'E', 'C', '1', '\n'};

namespace detail {

inline void put_u32_le(std::ostream& out, std::uint32_t value) {
  unsigned char bytes[4] = {static_cast<unsigned char>(value & 0xff),
                            static_cast<unsigned char>((value >> 8) & 0xff),
                            static_cast<unsigned char>((value >> 16) & 0xff),
                            static_cast<unsigned char>((value >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(bytes), 4);
}

inline std::uint32_t get_u32_le(std::istream& in) {
  unsigned char bytes[4];
  in.read(reinterpret_cast<char*>(bytes), 4);
  require(in.gcount() == 4, ErrorKind::malformed_header, "truncated header length field");
  return static_cast<std::uint32_t>(bytes[0]) | (static_cast<std::uint32_t>(bytes[1]) << 8) |
         (static_cast<std::uint32_t>(bytes[2]) << 16) |
         (static_cast<std::uint32_t>(bytes[3]) << 24);
}

inline std::uint32_t float_to_bits(float value) {
  std::uint32_t bits;
  std::memcpy(&bits, &value, 4);
  return bits;
}

inline float bits_to_float(std::uint32_t bits) {
  float value;
  std::memcpy(&value, &bits, 4);
  return value;
}

}  // namespace detail

inline void write_recording(const Recording& recording, const std::string& path) {
  recording.validate();
  for (const auto& row : recording.samples) {
    for (double v : row) {
      require(std::isfinite(v), ErrorKind::invalid_argument,
              "recording contains non-finite samples");
    }
  }

  nlohmann::json header = {
      {"subject_id", recording.subject_id},
      {"sampling_rate_hz", recording.sampling_rate_hz},
      {"channels", recording.channels},
      {"n_samples", recording.n_samples()},
  };
  nlohmann::json annotations = nlohmann::json::array();
  for (const auto& ann : recording.annotations) {
    annotations.push_back(
        {{"onset_s", ann.onset_s}, {"duration_s", ann.duration_s}, {"label", ann.label}});
  }
  header["annotations"] = annotations;
  const std::string header_text = header.dump();

  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorKind::io_failure, "cannot open for writing: " + path);
  out.write(kRecordingMagic, sizeof(kRecordingMagic));
  detail::put_u32_le(out, static_cast<std::uint32_t>(header_text.size()));
  out.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));

  std::vector<unsigned char> buffer;
  buffer.reserve(recording.n_samples() * 4);
  for (const auto& row : recording.samples) {
    buffer.clear();
    for (double v : row) {
      const std::uint32_t bits = detail::float_to_bits(static_cast<float>(v));
      buffer.push_back(static_cast<unsigned char>(bits & 0xff));
      buffer.push_back(static_cast<unsigned char>((bits >> 8) & 0xff));
      buffer.push_back(static_cast<unsigned char>((bits >> 16) & 0xff));
      buffer.push_back(static_cast<unsigned char>((bits >> 24) & 0xff));
    }
    out.write(reinterpret_cast<const char*>(buffer.data()),
              static_cast<std::streamsize>(buffer.size()));
  }
  require(out.good(), ErrorKind::io_failure, "write failed: " + path);
}

inline Recording read_recording(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorKind::io_failure, "cannot open: " + path);

  char magic[sizeof(kRecordingMagic)];
  in.read(magic, sizeof(magic));
  require(in.gcount() == sizeof(magic), ErrorKind::malformed_header, "file too short for magic");
  require(std::memcmp(magic, kRecordingMagic, sizeof(magic)) == 0,
          ErrorKind::unknown_format_version, "unknown container magic/version");

  const std::uint32_t header_len = detail::get_u32_le(in);
  std::string header_text(header_len, '\0');
  in.read(header_text.data(), header_len);
  require(in.gcount() == static_cast<std::streamsize>(header_len), ErrorKind::malformed_header,
          "truncated header block");

  Recording recording;
  std::size_t n_samples = 0;
  try {
    const nlohmann::json header = nlohmann::json::parse(header_text);
    recording.subject_id = header.at("subject_id").get<std::string>();
    recording.sampling_rate_hz = header.at("sampling_rate_hz").get<double>();
    recording.channels = header.at("channels").get<std::vector<std::string>>();
    n_samples = header.at("n_samples").get<std::size_t>();
    for (const auto& ja : header.at("annotations")) {
      recording.annotations.push_back({ja.at("onset_s").get<double>(),
                                       ja.at("duration_s").get<double>(),
                                       ja.at("label").get<std::string>()});
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::malformed_header, std::string("invalid container header: ") + e.what());
  }

  recording.samples.assign(recording.channels.size(), std::vector<double>(n_samples));
  std::vector<unsigned char> buffer(n_samples * 4);
  for (auto& row : recording.samples) {
    in.read(reinterpret_cast<char*>(buffer.data()), static_cast<std::streamsize>(buffer.size()));
    require(in.gcount() == static_cast<std::streamsize>(buffer.size()),
            ErrorKind::sample_count_mismatch, "payload shorter than header sample count");
    for (std::size_t i = 0; i < n_samples; ++i) {
      const std::uint32_t bits = static_cast<std::uint32_t>(buffer[4 * i]) |
                                 (static_cast<std::uint32_t>(buffer[4 * i + 1]) << 8) |
                                 (static_cast<std::uint32_t>(buffer[4 * i + 2]) << 16) |
                                 (static_cast<std::uint32_t>(buffer[4 * i + 3]) << 24);
      row[i] = static_cast<double>(detail::bits_to_float(bits));
    }
  }
  in.peek();
  require(in.eof(), ErrorKind::sample_count_mismatch, "payload longer than header sample count");
  recording.validate();
  return recording;
}

// CSV import: header row of channel names, one column per channel, one row
// per sample. Subject id, sampling rate and annotations come from a JSON
// sidecar at <csv path> + ".json".
inline Recording read_recording_csv(const std::string& csv_path) {
  std::ifstream in(csv_path);
  require(in.good(), ErrorKind::io_failure, "cannot open: " + csv_path);

  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorKind::malformed_header,
          "CSV file is empty");
  Recording recording;
  {
    std::stringstream header(line);
    std::string name;
    while (std::getline(header, name, ',')) {
      require(!name.empty(), ErrorKind::malformed_header, "empty channel name in CSV header");
      recording.channels.push_back(name);
    }
  }
  require(!recording.channels.empty(), ErrorKind::malformed_header, "CSV header has no columns");
  recording.samples.assign(recording.channels.size(), {});

  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::stringstream row(line);
    std::string cell;
    std::size_t column = 0;
    while (std::getline(row, cell, ',')) {
      require(column < recording.channels.size(), ErrorKind::malformed_header,
              "too many columns at CSV line " + std::to_string(line_no));
      try {
        recording.samples[column].push_back(std::stod(cell));
      } catch (const std::exception&) {
        fail(ErrorKind::malformed_header,
             "non-numeric value at CSV line " + std::to_string(line_no));
      }
      ++column;
    }
    require(column == recording.channels.size(), ErrorKind::sample_count_mismatch,
            "short row at CSV line " + std::to_string(line_no));
  }

  std::ifstream sidecar(csv_path + ".json");
  require(sidecar.good(), ErrorKind::io_failure, "missing CSV sidecar: " + csv_path + ".json");
  try {
    nlohmann::json j;
    sidecar >> j;
    recording.subject_id = j.at("subject_id").get<std::string>();
    recording.sampling_rate_hz = j.at("sampling_rate_hz").get<double>();
    if (j.contains("annotations")) {
      for (const auto& ja : j.at("annotations")) {
        recording.annotations.push_back({ja.at("onset_s").get<double>(),
                                         ja.at("duration_s").get<double>(),
                                         ja.at("label").get<std::string>()});
      }
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::malformed_header, std::string("invalid CSV sidecar: ") + e.what());
  }
  recording.validate();
  return recording;
}

}  // namespace emgdet
