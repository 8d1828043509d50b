#pragma once

// Fourier Holographic Reduced Representation algebra.
//
// A symbol is a vector of phase angles stored in half-turns: the value x
// denotes the angle pi*x and always lies in [-1, 1). Every operation here is
// a pure function of its arguments.

#include <span>

#include "fhrr/types.hpp"

namespace fhrr {

class SymbolBatch;

class Symbol {
 public:
  // Validates range and finiteness; throws Error(Domain) otherwise.
  explicit Symbol(RowVector phases);

  static Symbol zeros(Index n);

  Index dim() const noexcept { return phases_.size(); }
  const RowVector& phases() const noexcept { return phases_; }
  Real operator[](Index i) const { return phases_[i]; }

  bool operator==(const Symbol& other) const { return phases_ == other.phases_; }

 private:
  RowVector phases_;
};

// m symbols of a shared dimensionality n, stacked as an m x n matrix.
class SymbolBatch {
 public:
  explicit SymbolBatch(Matrix phases);

  static SymbolBatch zeros(Index count, Index n);
  static SymbolBatch from_rows(std::span<const Symbol> rows);

  Index count() const noexcept { return phases_.rows(); }
  Index dim() const noexcept { return phases_.cols(); }
  const Matrix& phases() const noexcept { return phases_; }
  Symbol row(Index i) const;

  bool operator==(const SymbolBatch& other) const { return phases_ == other.phases_; }

 private:
  Matrix phases_;
};

// Paired real components of a complex matrix.
struct ComplexMatrix {
  Matrix real;
  Matrix imag;

  ComplexMatrix(Matrix re, Matrix im);

  Index rows() const noexcept { return real.rows(); }
  Index cols() const noexcept { return real.cols(); }

  static ComplexMatrix from(const CMatrix& c);
  CMatrix to_eigen() const;
};

// ((x + 1) mod 2) - 1 with a floored modulus; output in [-1, 1).
Real wrap(Real x);
Symbol wrap(const RowVector& x);
SymbolBatch wrap(const Matrix& x);

ComplexMatrix to_complex(const SymbolBatch& s);

// Elementwise atan2 / pi. Entries with squared magnitude below kEpsilonMag
// map to 0; when `degenerate` is non-null it receives the per-entry flags.
SymbolBatch angle(const ComplexMatrix& c, BoolMatrix* degenerate = nullptr);

// Mean cosine of elementwise angular differences.
Real similarity(const Symbol& a, const Symbol& b);

// Pairwise similarity, entry (i, j) = similarity(q_i, k_j). Evaluated with the
// same cosine loop as similarity(), so entries match it exactly.
Matrix similarity_matrix(const SymbolBatch& q, const SymbolBatch& k);

// angle of the complex sum of the rows. Cancelled elements are 0 and flagged.
Symbol bundle(const SymbolBatch& a, BoolMatrix* degenerate = nullptr);

// Rotates a by power * b: wrap(a_i + power * b_i).
Symbol bind(const Symbol& a, const Symbol& b, Real power = 1);
SymbolBatch bind(const SymbolBatch& a, const SymbolBatch& b, Real power = 1);

// I.i.d. uniform phases on [-1, 1).
Symbol random_symbol(Rng& rng, Index n);
Symbol random_symbol(std::uint64_t seed, Index n);
SymbolBatch random_symbols(Rng& rng, Index count, Index n);

// Uniform draw on [-1, 1) shared by every phase initializer.
Real uniform_phase(Rng& rng);

}  // namespace fhrr
