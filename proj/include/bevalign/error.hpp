#pragma once

#include <stdexcept>
#include <string>

namespace bevalign {

enum class ErrorCode {
  InvalidConfig,
  OutOfBounds,
  InvalidKernel,
  MetaMismatch,
  EmptyInput,
  ZeroVector,
  LengthMismatch,
  NoPairs,
  EmptyNeighborhood,
  PlacementFailure,
  NotRun,
  Format,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::OutOfBounds: return "OutOfBounds";
    case ErrorCode::InvalidKernel: return "InvalidKernel";
    case ErrorCode::MetaMismatch: return "MetaMismatch";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::ZeroVector: return "ZeroVector";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::NoPairs: return "NoPairs";
    case ErrorCode::EmptyNeighborhood: return "EmptyNeighborhood";
    case ErrorCode::PlacementFailure: return "PlacementFailure";
    case ErrorCode::NotRun: return "NotRun";
    case ErrorCode::Format: return "Format";
  }
  return "Unknown";
}

// All library failures surface as this type; `module()` names the throwing
// component so the CLI can print module-qualified diagnostics.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string module, const std::string& what)
      : std::runtime_error(module + ": " + to_string(code) + ": " + what),
        code_(code),
        module_(std::move(module)) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& module() const noexcept { return module_; }

 private:
  ErrorCode code_;
  std::string module_;
};

#define BEVALIGN_REQUIRE(cond, code, module, msg) \
  do {                                            \
    if (!(cond)) throw ::bevalign::Error((code), (module), (msg)); \
  } while (0)

}  // namespace bevalign
