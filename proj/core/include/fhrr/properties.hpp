#pragma once

// Invariant suites for the algebra, the layers, and the differentiation
// engine, plus the finite-difference gradient checker they share with the
// test binaries.

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "fhrr/layers.hpp"

namespace fhrr::props {

struct Result {
  std::string suite;
  std::string name;
  bool passed = false;
  std::string detail;
};

struct Options {
  std::uint64_t seed = 0;
  Index n = 2048;
  Index trials = 1000;
  Index gradient_cases = 20;
  Index gradient_dim = 16;  // n used by the finite-difference cases
};

// 5 / sqrt(2n): |similarity| bound for unrelated symbols.
Real unrelated_bound(Index n);

std::vector<Result> vsa_suite(const Options& o);
std::vector<Result> layers_suite(const Options& o);
std::vector<Result> diff_suite(const Options& o);
std::vector<Result> run_all(const Options& o);

// Scalar triple-loop evaluation of VSA attention.
SymbolBatch attention_oracle(const SymbolBatch& q, const SymbolBatch& k, const SymbolBatch& v,
                             const RowVector* key_mask = nullptr);

// A scalar loss over trainable parameters, rebuilt on a fresh tape per call.
struct GradientCase {
  std::string name;
  std::vector<ad::Parameter*> params;
  std::function<ad::Var(ad::Tape&)> loss;
  std::shared_ptr<void> owner;  // keeps the layers and inputs alive
};

struct GradientReport {
  Real max_rel_error = 0;
  std::string worst;  // parameter[index] with the largest error
  Index scalars = 0;
};

// Central differences with step h for every real scalar of every trainable
// parameter. Relative error is |a - f| / max(|a|, |f|, floor).
GradientReport finite_difference_check(const GradientCase& c, Real h = 1e-5, Real floor = 1e-6);

// Smallest squared magnitude over the complex intermediates of the loss.
Real min_complex_norm(const GradientCase& c);
inline constexpr Real kMinConditionedNorm = 1e-4;

// Random configurations cycling through PB layers (with and without
// reduction), residual blocks (with and without skip), bare attention,
// self-attention, cross-attention, and whole models. Inputs are trainable
// phase parameters so input gradients are checked too. Draws with
// min_complex_norm below kMinConditionedNorm are rejected.
std::vector<GradientCase> gradient_cases(std::uint64_t seed, Index count, Index max_n);

}  // namespace fhrr::props
