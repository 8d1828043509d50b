#include "fhrr/vsa.hpp"

#include <cmath>
#include <string>

#include "fhrr/error.hpp"

namespace fhrr {

namespace {

template <typename Derived>
void check_phases(const Eigen::DenseBase<Derived>& p) {
  for (Index i = 0; i < p.rows(); ++i) {
    for (Index j = 0; j < p.cols(); ++j) {
      const Real x = p(i, j);
      if (!std::isfinite(x) || x < Real(-1) || x >= Real(1)) {
        fail(ErrorKind::Domain, "phase (" + std::to_string(i) + ", " + std::to_string(j) +
                                    ") = " + std::to_string(x) + " outside [-1, 1)");
      }
    }
  }
}

void check_same_dim(Index a, Index b, const char* op) {
  require(a == b, ErrorKind::Shape,
          std::string(op) + ": dimensionality mismatch " + std::to_string(a) + " vs " + std::to_string(b));
}

}  // namespace

Symbol::Symbol(RowVector phases) : phases_(std::move(phases)) {
  require(phases_.size() > 0, ErrorKind::Shape, "symbol dimensionality must be positive");
  check_phases(phases_);
}

Symbol Symbol::zeros(Index n) { return Symbol(RowVector::Zero(n)); }

SymbolBatch::SymbolBatch(Matrix phases) : phases_(std::move(phases)) {
  require(phases_.cols() > 0, ErrorKind::Shape, "symbol dimensionality must be positive");
  check_phases(phases_);
}

SymbolBatch SymbolBatch::zeros(Index count, Index n) { return SymbolBatch(Matrix::Zero(count, n)); }

SymbolBatch SymbolBatch::from_rows(std::span<const Symbol> rows) {
  require(!rows.empty(), ErrorKind::Shape, "from_rows: empty row set");
  Matrix m(static_cast<Index>(rows.size()), rows.front().dim());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    check_same_dim(rows[i].dim(), m.cols(), "from_rows");
    m.row(static_cast<Index>(i)) = rows[i].phases();
  }
  return SymbolBatch(std::move(m));
}

Symbol SymbolBatch::row(Index i) const {
  require(i >= 0 && i < count(), ErrorKind::Contract, "row index out of range");
  return Symbol(phases_.row(i));
}

ComplexMatrix::ComplexMatrix(Matrix re, Matrix im) : real(std::move(re)), imag(std::move(im)) {
  require(real.rows() == imag.rows() && real.cols() == imag.cols(), ErrorKind::Shape,
          "complex matrix components differ in shape");
}

ComplexMatrix ComplexMatrix::from(const CMatrix& c) { return ComplexMatrix(c.real(), c.imag()); }

CMatrix ComplexMatrix::to_eigen() const {
  CMatrix c(rows(), cols());
  c.real() = real;
  c.imag() = imag;
  return c;
}

Real wrap(Real x) {
  require(std::isfinite(x), ErrorKind::Domain, "wrap: non-finite input");
  Real r = std::fmod(x + Real(1), Real(2));
  if (r < 0) r += Real(2);
  r -= Real(1);
  // fmod of a tiny negative value plus 2 can round up to the excluded endpoint.
  if (r >= Real(1)) r = Real(-1);
  return r;
}

Symbol wrap(const RowVector& x) {
  RowVector out(x.size());
  for (Index i = 0; i < x.size(); ++i) out[i] = wrap(x[i]);
  return Symbol(std::move(out));
}

SymbolBatch wrap(const Matrix& x) {
  Matrix out(x.rows(), x.cols());
  for (Index i = 0; i < x.rows(); ++i)
    for (Index j = 0; j < x.cols(); ++j) out(i, j) = wrap(x(i, j));
  return SymbolBatch(std::move(out));
}

ComplexMatrix to_complex(const SymbolBatch& s) {
  const auto scaled = (s.phases().array() * kPi).eval();
  return ComplexMatrix(scaled.cos().matrix(), scaled.sin().matrix());
}

SymbolBatch angle(const ComplexMatrix& c, BoolMatrix* degenerate) {
  Matrix out(c.rows(), c.cols());
  if (degenerate) degenerate->setConstant(c.rows(), c.cols(), false);
  for (Index i = 0; i < c.rows(); ++i) {
    for (Index j = 0; j < c.cols(); ++j) {
      const Real re = c.real(i, j);
      const Real im = c.imag(i, j);
      if (re * re + im * im < kEpsilonMag) {
        out(i, j) = 0;
        if (degenerate) (*degenerate)(i, j) = true;
        continue;
      }
      Real a = std::atan2(im, re) / kPi;
      // atan2 returns +pi on the negative real axis; the canonical phase is -1.
      if (a >= Real(1)) a = Real(-1);
      out(i, j) = a;
    }
  }
  return SymbolBatch(std::move(out));
}

Real similarity(const Symbol& a, const Symbol& b) {
  check_same_dim(a.dim(), b.dim(), "similarity");
  Real acc = 0;
  for (Index i = 0; i < a.dim(); ++i) acc += std::cos(kPi * (a[i] - b[i]));
  return acc / static_cast<Real>(a.dim());
}

Matrix similarity_matrix(const SymbolBatch& q, const SymbolBatch& k) {
  check_same_dim(q.dim(), k.dim(), "similarity_matrix");
  Matrix s(q.count(), k.count());
  for (Index i = 0; i < q.count(); ++i) {
    const Symbol qi = q.row(i);
    for (Index j = 0; j < k.count(); ++j) s(i, j) = similarity(qi, k.row(j));
  }
  return s;
}

Symbol bundle(const SymbolBatch& a, BoolMatrix* degenerate) {
  require(a.count() >= 1, ErrorKind::Contract, "bundle: empty set");
  // A singleton bundles to itself; skipping the complex round trip keeps it exact.
  if (a.count() == 1) {
    if (degenerate) *degenerate = BoolMatrix::Constant(1, a.dim(), false);
    return a.row(0);
  }
  const ComplexMatrix c = to_complex(a);
  ComplexMatrix sum(Matrix::Zero(1, a.dim()), Matrix::Zero(1, a.dim()));
  for (Index j = 0; j < a.count(); ++j) {
    sum.real.row(0) += c.real.row(j);
    sum.imag.row(0) += c.imag.row(j);
  }
  return angle(sum, degenerate).row(0);
}

Symbol bind(const Symbol& a, const Symbol& b, Real power) {
  check_same_dim(a.dim(), b.dim(), "bind");
  require(std::isfinite(power), ErrorKind::Domain, "bind: non-finite power");
  return wrap(RowVector(a.phases() + power * b.phases()));
}

SymbolBatch bind(const SymbolBatch& a, const SymbolBatch& b, Real power) {
  check_same_dim(a.dim(), b.dim(), "bind");
  require(a.count() == b.count(), ErrorKind::Shape, "bind: batch sizes differ");
  require(std::isfinite(power), ErrorKind::Domain, "bind: non-finite power");
  return wrap(Matrix(a.phases() + power * b.phases()));
}

Real uniform_phase(Rng& rng) {
  // 53 random mantissa bits give an exact draw on [0, 1).
  const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  const Real x = static_cast<Real>(2.0 * u - 1.0);
  return x >= Real(1) ? Real(-1) : x;
}

Symbol random_symbol(Rng& rng, Index n) {
  require(n > 0, ErrorKind::Contract, "random_symbol: n must be positive");
  RowVector p(n);
  for (Index i = 0; i < n; ++i) p[i] = uniform_phase(rng);
  return Symbol(std::move(p));
}

Symbol random_symbol(std::uint64_t seed, Index n) {
  Rng rng(seed);
  return random_symbol(rng, n);
}

SymbolBatch random_symbols(Rng& rng, Index count, Index n) {
  require(n > 0 && count > 0, ErrorKind::Contract, "random_symbols: sizes must be positive");
  Matrix p(count, n);
  for (Index i = 0; i < count; ++i)
    for (Index j = 0; j < n; ++j) p(i, j) = uniform_phase(rng);
  return SymbolBatch(std::move(p));
}

}  // namespace fhrr
