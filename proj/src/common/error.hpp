#pragma once

#include <stdexcept>
#include <string>

namespace eemp {

/// Broad failure classes. The CLI and the C API map these onto exit codes.
enum class ErrorKind {
  config,            // bad configuration or arguments
  upstream_missing,  // an input artifact produced by an earlier stage is absent
  data,              // malformed or invariant-violating data
  scorer,            // scoring endpoint failure
  io,                // filesystem failure
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline Error config_error(const std::string& m) { return {ErrorKind::config, m}; }
inline Error data_error(const std::string& m) { return {ErrorKind::data, m}; }
inline Error io_error(const std::string& m) { return {ErrorKind::io, m}; }

}  // namespace eemp
