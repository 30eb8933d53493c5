#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace pimann {

enum class errc {
  invalid_argument,
  invalid_data,
  infeasible_placement,
  missing_replica,
  cache_overflow,
  corrupt_encoding,
  invalid_transfer,
  wram_overflow,
  format_error,
  config_error,
};

constexpr std::string_view to_string(errc code) noexcept {
  switch (code) {
    case errc::invalid_argument: return "invalid-argument";
    case errc::invalid_data: return "invalid-data";
    case errc::infeasible_placement: return "infeasible-placement";
    case errc::missing_replica: return "missing-replica";
    case errc::cache_overflow: return "cache-overflow";
    case errc::corrupt_encoding: return "corrupt-encoding";
    case errc::invalid_transfer: return "invalid-transfer";
    case errc::wram_overflow: return "wram-overflow";
    case errc::format_error: return "format-error";
    case errc::config_error: return "config-error";
  }
  return "unknown";
}

/// Every failure raised by the library carries one of the categories above.
class Error : public std::runtime_error {
 public:
  Error(errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what),
        code_(code) {}

  errc code() const noexcept { return code_; }

 private:
  errc code_;
};

[[noreturn]] inline void fail(errc code, const std::string& what) {
  throw Error(code, what);
}

inline void require(bool condition, errc code, const std::string& what) {
  if (!condition) fail(code, what);
}

}  // namespace pimann
