#pragma once

#include <stdexcept>
#include <string>

namespace emgdet {

// Error kinds are part of the public contract: callers (and the CLI) can
// dispatch on them without parsing messages.
enum class ErrorKind {
  invalid_argument,
  invalid_config,
  malformed_header,
  unknown_format_version,
  sample_count_mismatch,
  io_failure,
  missing_channel,
  annotation_out_of_range,
  signal_too_short,
  single_class,
  dimension_mismatch,
  untrained_model,
  degenerate_statistic,
  empty_input,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_argument: return "invalid_argument";
    case ErrorKind::invalid_config: return "invalid_config";
    case ErrorKind::malformed_header: return "malformed_header";
    case ErrorKind::unknown_format_version: return "unknown_format_version";
    case ErrorKind::sample_count_mismatch: return "sample_count_mismatch";
    case ErrorKind::io_failure: return "io_failure";
    case ErrorKind::missing_channel: return "missing_channel";
    case ErrorKind::annotation_out_of_range: return "annotation_out_of_range";
    case ErrorKind::signal_too_short: return "signal_too_short";
    case ErrorKind::single_class: return "single_class";
    case ErrorKind::dimension_mismatch: return "dimension_mismatch";
    case ErrorKind::untrained_model: return "untrained_model";
    case ErrorKind::degenerate_statistic: return "degenerate_statistic";
    case ErrorKind::empty_input: return "empty_input";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

inline void require(bool condition, ErrorKind kind, const std::string& message) {
  if (!condition) fail(kind, message);
}

}  // namespace emgdet
