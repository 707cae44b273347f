#pragma once

#include <stdexcept>
#include <string>

namespace dnmt {

// Error taxonomy used across the toolkit. The CLI maps `usage` to exit
// code 1 and everything else to exit code 2.
enum class ErrorKind {
    usage,     // bad flags, missing arguments
    data,      // malformed or inconsistent input files
    contract,  // precondition violated by the caller
    dimension, // tensor shape mismatch
    io,        // filesystem failure
};

class Error : public std::runtime_error {
  public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const { return kind_; }

  private:
    ErrorKind kind_;
};

[[noreturn]] inline void raise(ErrorKind kind, const std::string& message) {
    throw Error(kind, message);
}

} // namespace dnmt
