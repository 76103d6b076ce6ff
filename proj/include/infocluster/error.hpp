#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace infocluster {

enum class ErrorCode {
  MissingSegmentation,
  UnreadableImage,
  EmptyCorpus,
  InvalidSpec,
  NoBuildingPixels,
  SizeMismatch,
  ShapeMismatch,
  NonFiniteLoss,
  CorpusTooSmall,
  InvalidGridShape,
  TooFewSamples,
  NonFiniteInput,
  MixedSizes,
  SingleCluster,
  LengthMismatch,
  DegenerateSplit,
  UnknownCommand,
  ConfigError,
  EmptyInput,
  IoError,
};

constexpr std::string_view code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::MissingSegmentation: return "MissingSegmentation";
    case ErrorCode::UnreadableImage: return "UnreadableImage";
    case ErrorCode::EmptyCorpus: return "EmptyCorpus";
    case ErrorCode::InvalidSpec: return "InvalidSpec";
    case ErrorCode::NoBuildingPixels: return "NoBuildingPixels";
    case ErrorCode::SizeMismatch: return "SizeMismatch";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::CorpusTooSmall: return "CorpusTooSmall";
    case ErrorCode::InvalidGridShape: return "InvalidGridShape";
    case ErrorCode::TooFewSamples: return "TooFewSamples";
    case ErrorCode::NonFiniteInput: return "NonFiniteInput";
    case ErrorCode::MixedSizes: return "MixedSizes";
    case ErrorCode::SingleCluster: return "SingleCluster";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::DegenerateSplit: return "DegenerateSplit";
    case ErrorCode::UnknownCommand: return "UnknownCommand";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

/// Every failure raised by the library. `what()` is the single-line
/// `<Code>: <detail>` form; the CLI prefixes it with `ERROR `.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& detail)
      : std::runtime_error(std::string(code_name(code)) + ": " + detail),
        code_(code),
        detail_(detail) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

}  // namespace infocluster
