#pragma once

// Command-line front end: train, eval, props, bench.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "fhrr/model.hpp"

namespace fhrr::cli {

// Exit codes; the matching class name is the first token of the error line.
enum Exit : int {
  kOk = 0,
  kInternal = 1,       // INTERNAL_ERROR
  kUsage = 2,          // USAGE_ERROR
  kConfigInvalid = 3,  // CONFIG_INVALID
  kDataNotFound = 4,   // DATA_NOT_FOUND
  kSchema = 5,         // SCHEMA_ERROR
  kCheckpoint = 6,     // CHECKPOINT_MISMATCH
  kDiverged = 7,       // TRAINING_DIVERGED
  kPropsFailed = 8,    // a property suite reported a failure
};

// Runs one command. Records go to `out`; progress and the single-line error
// report go to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

struct BenchRecord {
  nn::Architecture arch = nn::Architecture::CrossAttention;
  Index m = 0;
  Index q = 0;
  Index n = 0;
  double seconds = 0;  // median forward time
  Index score_entries = 0;
};

// Times untaped forward passes of one attention module over m inputs.
BenchRecord bench_attention(nn::Architecture arch, Index m, Index q, Index n, int repeats, std::uint64_t seed);

}  // namespace fhrr::cli
