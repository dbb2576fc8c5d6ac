#pragma once

#include <stdexcept>
#include <string>

namespace bpt {

// Broad failure classes; the CLI maps them onto its exit codes.
enum class ErrorKind {
  usage,  // bad arguments, invalid config, missing input path
  io,     // read/write failure on an existing path
  data,   // malformed input content
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline Error usage_error(const std::string& what) { return Error(ErrorKind::usage, what); }
inline Error io_error(const std::string& what) { return Error(ErrorKind::io, what); }
inline Error data_error(const std::string& what) { return Error(ErrorKind::data, what); }

}  // namespace bpt
