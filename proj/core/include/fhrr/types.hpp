#pragma once

// Scalar and matrix aliases shared by every module.

#include <complex>
#include <cstdint>
#include <random>

#include <Eigen/Core>

namespace fhrr {

using Real = double;

using Complex = std::complex<Real>;
using Index = Eigen::Index;

// Rows are symbols; row-major keeps each symbol contiguous.
using Matrix = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMatrix = Eigen::Matrix<Complex, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<Real, 1, Eigen::Dynamic>;
using BoolMatrix = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Rng = std::mt19937_64;

inline constexpr Real kPi = static_cast<Real>(3.14159265358979323846264338327950288);

// Squared complex magnitude below which angle() reports a degenerate entry.
inline constexpr Real kEpsilonMag = static_cast<Real>(1e-12);

}  // namespace fhrr
