#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fhrr {

enum class ErrorKind {
  Shape,            // dimensionality / shape mismatch
  Domain,           // non-finite or out-of-domain numeric input
  Contract,         // caller violated a precondition
  Format,           // malformed file contents
  Schema,           // well-formed file with invalid contents
  Capacity,         // input exceeds a fixed capacity (e.g. max_edges)
  DegenerateInput,  // zero-variance encoder input
  DataNotFound,
  ConfigInvalid,
  CheckpointMismatch,
  TrainingDiverged,
};

std::string_view to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool ok, ErrorKind kind, const std::string& what) {
  if (!ok) fail(kind, what);
}

}  // namespace fhrr
