#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace shoelace {

/// Machine-readable failure categories. The CLI reports these on stderr and
/// maps them to exit codes.
enum class ErrorCategory {
  domain,
  out_of_range,
  unmatchable,
  underdetermined,
  no_resonance,
  inversion_failed,
  direction,
  accuracy,
  estimation,
  undefined_conditional,
  parse,
  validation,
  budget,
  io,
};

inline std::string_view category_name(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::domain: return "domain";
    case ErrorCategory::out_of_range: return "out-of-range";
    case ErrorCategory::unmatchable: return "unmatchable";
    case ErrorCategory::underdetermined: return "underdetermined";
    case ErrorCategory::no_resonance: return "no-resonance";
    case ErrorCategory::inversion_failed: return "inversion-failed";
    case ErrorCategory::direction: return "direction";
    case ErrorCategory::accuracy: return "accuracy";
    case ErrorCategory::estimation: return "estimation";
    case ErrorCategory::undefined_conditional: return "undefined-conditional";
    case ErrorCategory::parse: return "parse";
    case ErrorCategory::validation: return "validation";
    case ErrorCategory::budget: return "budget";
    case ErrorCategory::io: return "io";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& message)
      : std::runtime_error(message), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

/// Requested trim lies beyond what the remaining shoelaces can deliver.
class OutOfRangeError : public Error {
 public:
  OutOfRangeError(const std::string& message, double max_shift_hz)
      : Error(ErrorCategory::out_of_range, message), max_shift_hz_(max_shift_hz) {}

  /// Largest-magnitude shift (Hz, <= 0) the remaining shoelaces can produce.
  double max_shift_hz() const noexcept { return max_shift_hz_; }

 private:
  double max_shift_hz_;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& message, std::size_t line)
      : Error(ErrorCategory::parse, message), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Schema violations, one entry per offending JSON path.
class ValidationError : public Error {
 public:
  explicit ValidationError(std::vector<std::string> problems)
      : Error(ErrorCategory::validation, join(problems)), problems_(std::move(problems)) {}

  const std::vector<std::string>& problems() const noexcept { return problems_; }

 private:
  static std::string join(const std::vector<std::string>& items) {
    std::string out;
    for (const auto& item : items) {
      if (!out.empty()) out += "; ";
      out += item;
    }
    return out;
  }

  std::vector<std::string> problems_;
};

[[noreturn]] inline void fail(ErrorCategory category, const std::string& message) {
  throw Error(category, message);
}

inline void require(bool condition, ErrorCategory category, const std::string& message) {
  if (!condition) fail(category, message);
}

}  // namespace shoelace
