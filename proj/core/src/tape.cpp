#include "fhrr/tape.hpp"

#include <cmath>
#include <string>

#include "fhrr/error.hpp"
#include "fhrr/vsa.hpp"

namespace fhrr::ad {

const char* to_string(Primitive p) noexcept {
  switch (p) {
    case Primitive::Constant: return "constant";
    case Primitive::Variable: return "variable";
    case Primitive::Param: return "parameter";
    case Primitive::ExpIPi: return "exp_i_pi";
    case Primitive::MatMul: return "matmul";
    case Primitive::RealMatMul: return "real_matmul";
    case Primitive::AddBias: return "add_bias";
    case Primitive::Angle: return "angle";
    case Primitive::Bind: return "bind";
    case Primitive::SimilarityMatrix: return "similarity_matrix";
    case Primitive::RowSimilarity: return "row_similarity";
    case Primitive::MaskColumns: return "mask_columns";
    case Primitive::SliceRows: return "slice_rows";
    case Primitive::ConcatRows: return "concat_rows";
    case Primitive::Sum: return "sum";
    case Primitive::Mean: return "mean";
    case Primitive::Affine: return "affine";
  }
  return "unknown";
}

namespace {

bool is_leaf(Primitive p) {
  return p == Primitive::Constant || p == Primitive::Variable || p == Primitive::Param;
}

std::string shape_str(Index r, Index c) { return std::to_string(r) + "x" + std::to_string(c); }

void wrap_inplace(Matrix& m) {
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = fhrr::wrap(m.data()[i]);
}

Real angle_of(Complex z) {
  if (std::norm(z) < kEpsilonMag) return 0;
  Real a = std::atan2(z.imag(), z.real()) / kPi;
  return a >= Real(1) ? Real(-1) : a;
}

}  // namespace

// ---------------------------------------------------------------------------
// Leaves

Var Tape::constant(Matrix value) {
  require(value.allFinite(), ErrorKind::Domain, "tape: non-finite constant");
  Node n;
  n.op = Primitive::Constant;
  n.real = std::move(value);
  return push(std::move(n));
}

Var Tape::constant(CMatrix value) {
  require(value.real().allFinite() && value.imag().allFinite(), ErrorKind::Domain, "tape: non-finite constant");
  Node n;
  n.op = Primitive::Constant;
  n.is_complex = true;
  n.cplx = std::move(value);
  return push(std::move(n));
}

Var Tape::variable(Matrix value) {
  require(value.allFinite(), ErrorKind::Domain, "tape: non-finite variable");
  Node n;
  n.op = Primitive::Variable;
  n.needs_grad = true;
  n.real = std::move(value);
  return push(std::move(n));
}

Var Tape::variable(CMatrix value) {
  require(value.real().allFinite() && value.imag().allFinite(), ErrorKind::Domain, "tape: non-finite variable");
  Node n;
  n.op = Primitive::Variable;
  n.is_complex = true;
  n.needs_grad = true;
  n.cplx = std::move(value);
  return push(std::move(n));
}

Var Tape::parameter(const Parameter& p) {
  // The value is read through the pointer: parameters must not change while
  // the tape is alive.
  Node n;
  n.op = Primitive::Param;
  n.is_complex = p.is_complex();
  n.needs_grad = p.trainable;
  n.param = &p;
  return push(std::move(n));
}

Var Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
}

const Tape::Node& Tape::node(Var v) const {
  require(v.valid() && static_cast<std::size_t>(v.id) < nodes_.size(), ErrorKind::Contract,
          "tape: invalid variable handle");
  return nodes_[static_cast<std::size_t>(v.id)];
}

namespace {

const Matrix& rv(const auto& n) { return n.param ? n.param->real : n.real; }
const CMatrix& cv(const auto& n) { return n.param ? n.param->cplx : n.cplx; }
Index rows_of(const auto& n) { return n.is_complex ? cv(n).rows() : rv(n).rows(); }
Index cols_of(const auto& n) { return n.is_complex ? cv(n).cols() : rv(n).cols(); }

}  // namespace

Index Tape::rows(Var v) const { return rows_of(node(v)); }
Index Tape::cols(Var v) const { return cols_of(node(v)); }

const Matrix& Tape::real(Var v) const {
  const Node& n = node(v);
  require(!n.is_complex, ErrorKind::Contract, "tape: node is complex");
  return rv(n);
}

const CMatrix& Tape::cplx(Var v) const {
  const Node& n = node(v);
  require(n.is_complex, ErrorKind::Contract, "tape: node is real");
  return cv(n);
}

Real Tape::scalar(Var v) const {
  const Matrix& m = real(v);
  require(m.rows() == 1 && m.cols() == 1, ErrorKind::Contract, "tape: node is not a scalar");
  return m(0, 0);
}

// ---------------------------------------------------------------------------
// Recording

Var Tape::matmul(Var a, Var b) {
  const Var in[] = {a, b};
  return record(Primitive::MatMul, in);
}

Var Tape::real_matmul(Var a, Var b) {
  const Var in[] = {a, b};
  return record(Primitive::RealMatMul, in);
}

Var Tape::add_bias(Var c, Var bias) {
  const Var in[] = {c, bias};
  return record(Primitive::AddBias, in);
}

Var Tape::bind(Var a, Var b, Real power) {
  const Var in[] = {a, b};
  Attributes attr;
  attr.scale = power;
  return record(Primitive::Bind, in, attr);
}

Var Tape::similarity_matrix(Var q, Var k) {
  const Var in[] = {q, k};
  return record(Primitive::SimilarityMatrix, in);
}

Var Tape::row_similarity(Var a, Var b) {
  const Var in[] = {a, b};
  return record(Primitive::RowSimilarity, in);
}

Var Tape::mask_columns(Var s, RowVector mask) {
  Attributes attr;
  attr.mask = std::move(mask);
  return record(Primitive::MaskColumns, {&s, 1}, attr);
}

Var Tape::slice_rows(Var x, Index start, Index count) {
  Attributes attr;
  attr.start = start;
  attr.count = count;
  return record(Primitive::SliceRows, {&x, 1}, attr);
}

Var Tape::affine(Var x, Real scale, Real shift) {
  Attributes attr;
  attr.scale = scale;
  attr.shift = shift;
  return record(Primitive::Affine, {&x, 1}, attr);
}

Var Tape::record(Primitive op, std::span<const Var> inputs, const Attributes& attr) {
  const int code = static_cast<int>(op);
  require(code >= 0 && code < kPrimitiveCount, ErrorKind::Contract,
          "tape: unsupported primitive code " + std::to_string(code));
  require(!is_leaf(op), ErrorKind::Contract,
          std::string("tape: leaf primitive '") + to_string(op) + "' cannot be recorded with inputs");

  auto arity_is = [&](std::size_t k) {
    require(inputs.size() == k, ErrorKind::Contract,
            std::string(to_string(op)) + ": expected " + std::to_string(k) + " inputs");
  };
  auto want = [&](const Node& n, bool complex) {
    require(n.is_complex == complex, ErrorKind::Contract,
            std::string(to_string(op)) + ": expected " + (complex ? "complex" : "real") + " input");
  };
  auto same_shape = [&](const Node& a, const Node& b) {
    require(rows_of(a) == rows_of(b) && cols_of(a) == cols_of(b), ErrorKind::Shape,
            std::string(to_string(op)) + ": shapes " + shape_str(rows_of(a), cols_of(a)) + " and " +
                shape_str(rows_of(b), cols_of(b)) + " differ");
  };

  Node n;
  n.op = op;
  n.attr = attr;
  for (Var v : inputs) {
    const Node& in = node(v);
    n.inputs.push_back(v.id);
    n.needs_grad = n.needs_grad || in.needs_grad;
  }

  switch (op) {
    case Primitive::ExpIPi:
      arity_is(1);
      want(node(inputs[0]), false);
      n.is_complex = true;
      break;
    case Primitive::MatMul: {
      arity_is(2);
      const Node& a = node(inputs[0]);
      const Node& b = node(inputs[1]);
      want(a, true);
      want(b, true);
      require(cols_of(a) == rows_of(b), ErrorKind::Shape,
              "matmul: inner dimensions " + shape_str(rows_of(a), cols_of(a)) + " * " +
                  shape_str(rows_of(b), cols_of(b)));
      n.is_complex = true;
      break;
    }
    case Primitive::RealMatMul: {
      arity_is(2);
      const Node& a = node(inputs[0]);
      const Node& b = node(inputs[1]);
      want(a, false);
      want(b, true);
      require(cols_of(a) == rows_of(b), ErrorKind::Shape,
              "real_matmul: inner dimensions " + shape_str(rows_of(a), cols_of(a)) + " * " +
                  shape_str(rows_of(b), cols_of(b)));
      n.is_complex = true;
      break;
    }
    case Primitive::AddBias: {
      arity_is(2);
      const Node& c = node(inputs[0]);
      const Node& b = node(inputs[1]);
      want(c, true);
      want(b, true);
      require(rows_of(b) == 1 && cols_of(b) == cols_of(c), ErrorKind::Shape, "add_bias: bias must be 1 x cols");
      n.is_complex = true;
      break;
    }
    case Primitive::Angle:
      arity_is(1);
      want(node(inputs[0]), true);
      break;
    case Primitive::Bind:
      arity_is(2);
      want(node(inputs[0]), false);
      want(node(inputs[1]), false);
      same_shape(node(inputs[0]), node(inputs[1]));
      require(std::isfinite(attr.scale), ErrorKind::Domain, "bind: non-finite power");
      break;
    case Primitive::SimilarityMatrix:
      arity_is(2);
      want(node(inputs[0]), false);
      want(node(inputs[1]), false);
      require(cols_of(node(inputs[0])) == cols_of(node(inputs[1])), ErrorKind::Shape,
              "similarity_matrix: dimensionality mismatch");
      break;
    case Primitive::RowSimilarity:
      arity_is(2);
      want(node(inputs[0]), false);
      want(node(inputs[1]), false);
      same_shape(node(inputs[0]), node(inputs[1]));
      break;
    case Primitive::MaskColumns:
      arity_is(1);
      want(node(inputs[0]), false);
      require(attr.mask.size() == cols_of(node(inputs[0])), ErrorKind::Shape, "mask_columns: mask length");
      break;
    case Primitive::SliceRows: {
      arity_is(1);
      const Node& x = node(inputs[0]);
      n.is_complex = x.is_complex;
      require(attr.start >= 0 && attr.count > 0 && attr.start + attr.count <= rows_of(x), ErrorKind::Shape,
              "slice_rows: range out of bounds");
      break;
    }
    case Primitive::ConcatRows: {
      require(!inputs.empty(), ErrorKind::Contract, "concat_rows: no inputs");
      const Node& first = node(inputs[0]);
      n.is_complex = first.is_complex;
      for (Var v : inputs) {
        want(node(v), first.is_complex);
        require(cols_of(node(v)) == cols_of(first), ErrorKind::Shape, "concat_rows: column counts differ");
      }
      break;
    }
    case Primitive::Sum:
    case Primitive::Mean:
    case Primitive::Affine:
      arity_is(1);
      want(node(inputs[0]), false);
      break;
    default:
      fail(ErrorKind::Contract, "tape: unsupported primitive");
  }

  evaluate(n, nodes_);
  return push(std::move(n));
}

void Tape::evaluate(Node& n, const std::vector<Node>& values) const {
  auto in = [&](std::size_t k) -> const Node& { return values[static_cast<std::size_t>(n.inputs[k])]; };

  switch (n.op) {
    case Primitive::ExpIPi: {
      const Matrix& x = rv(in(0));
      n.cplx.resize(x.rows(), x.cols());
      for (Index i = 0; i < x.size(); ++i) {
        const Real t = kPi * x.data()[i];
        n.cplx.data()[i] = Complex(std::cos(t), std::sin(t));
      }
      break;
    }
    case Primitive::MatMul:
      n.cplx.noalias() = cv(in(0)) * cv(in(1));
      break;
    case Primitive::RealMatMul:
      n.cplx.noalias() = rv(in(0)).cast<Complex>() * cv(in(1));
      break;
    case Primitive::AddBias:
      n.cplx = cv(in(0)).rowwise() + cv(in(1)).row(0);
      break;
    case Primitive::Angle: {
      const CMatrix& c = cv(in(0));
      n.real.resize(c.rows(), c.cols());
      for (Index i = 0; i < c.size(); ++i) n.real.data()[i] = angle_of(c.data()[i]);
      break;
    }
    case Primitive::Bind:
      n.real = rv(in(0)) + n.attr.scale * rv(in(1));
      wrap_inplace(n.real);
      break;
    case Primitive::SimilarityMatrix: {
      const Matrix& q = rv(in(0));
      const Matrix& k = rv(in(1));
      const Matrix qs = (q.array() * kPi).eval().matrix();
      const Matrix ks = (k.array() * kPi).eval().matrix();
      const Matrix cq = qs.array().cos().matrix(), sq = qs.array().sin().matrix();
      const Matrix ck = ks.array().cos().matrix(), sk = ks.array().sin().matrix();
      n.real.noalias() = cq * ck.transpose();
      n.real.noalias() += sq * sk.transpose();
      n.real /= static_cast<Real>(q.cols());
      break;
    }
    case Primitive::RowSimilarity: {
      const Matrix& a = rv(in(0));
      const Matrix& b = rv(in(1));
      n.real.resize(a.rows(), 1);
      for (Index i = 0; i < a.rows(); ++i) {
        Real acc = 0;
        for (Index j = 0; j < a.cols(); ++j) acc += std::cos(kPi * (a(i, j) - b(i, j)));
        n.real(i, 0) = acc / static_cast<Real>(a.cols());
      }
      break;
    }
    case Primitive::MaskColumns:
      n.real = rv(in(0)).array().rowwise() * n.attr.mask.array();
      break;
    case Primitive::SliceRows:
      if (in(0).is_complex)
        n.cplx = cv(in(0)).middleRows(n.attr.start, n.attr.count);
      else
        n.real = rv(in(0)).middleRows(n.attr.start, n.attr.count);
      break;
    case Primitive::ConcatRows: {
      Index total = 0;
      for (std::size_t k = 0; k < n.inputs.size(); ++k) total += rows_of(in(k));
      const Index cols = cols_of(in(0));
      Index r = 0;
      if (n.is_complex) {
        n.cplx.resize(total, cols);
        for (std::size_t k = 0; k < n.inputs.size(); ++k) {
          n.cplx.middleRows(r, cv(in(k)).rows()) = cv(in(k));
          r += cv(in(k)).rows();
        }
      } else {
        n.real.resize(total, cols);
        for (std::size_t k = 0; k < n.inputs.size(); ++k) {
          n.real.middleRows(r, rv(in(k)).rows()) = rv(in(k));
          r += rv(in(k)).rows();
        }
      }
      break;
    }
    case Primitive::Sum:
      n.real = Matrix::Constant(1, 1, rv(in(0)).sum());
      break;
    case Primitive::Mean:
      n.real = Matrix::Constant(1, 1, rv(in(0)).mean());
      break;
    case Primitive::Affine:
      n.real = (rv(in(0)).array() * n.attr.scale + n.attr.shift).matrix();
      break;
    default:
      fail(ErrorKind::Contract, "tape: no forward rule");
  }
}

// ---------------------------------------------------------------------------
// Backward

void Tape::backward(Var loss, Real seed) {
  Gradient none;
  backward(loss, none, seed);
}

void Tape::backward(Var loss, Gradient& into, Real seed) {
  const Node& terminus = node(loss);
  require(!terminus.is_complex && rows_of(terminus) == 1 && cols_of(terminus) == 1, ErrorKind::Contract,
          "backward: tape terminus must be a real scalar");

  const std::size_t count = static_cast<std::size_t>(loss.id) + 1;
  adj_real_.assign(nodes_.size(), Matrix());
  adj_cplx_.assign(nodes_.size(), CMatrix());

  auto touch = [&](std::size_t id) {
    const Node& n = nodes_[id];
    if (n.is_complex) {
      if (adj_cplx_[id].size() == 0) adj_cplx_[id] = CMatrix::Zero(rows_of(n), cols_of(n));
    } else if (adj_real_[id].size() == 0) {
      adj_real_[id] = Matrix::Zero(rows_of(n), cols_of(n));
    }
  };
  for (std::size_t id = 0; id < count; ++id)
    if (nodes_[id].needs_grad) touch(id);
  if (!terminus.needs_grad) return;
  adj_real_[count - 1](0, 0) = seed;

  for (std::size_t id = count; id-- > 0;) {
    const Node& n = nodes_[id];
    if (!n.needs_grad || is_leaf(n.op)) continue;
    auto in_id = [&](std::size_t k) { return static_cast<std::size_t>(n.inputs[k]); };
    auto in = [&](std::size_t k) -> const Node& { return nodes_[in_id(k)]; };
    auto wants = [&](std::size_t k) { return in(k).needs_grad; };
    const Matrix& g = adj_real_[id];
    const CMatrix& gc = adj_cplx_[id];

    switch (n.op) {
      case Primitive::ExpIPi: {
        if (!wants(0)) break;
        // d/dx of exp(i pi x) against the adjoint gives pi * Im(conj(z) * G).
        Matrix& dx = adj_real_[in_id(0)];
        for (Index i = 0; i < gc.size(); ++i)
          dx.data()[i] += kPi * (std::conj(n.cplx.data()[i]) * gc.data()[i]).imag();
        break;
      }
      case Primitive::MatMul:
        if (wants(0)) adj_cplx_[in_id(0)].noalias() += gc * cv(in(1)).adjoint();
        if (wants(1)) adj_cplx_[in_id(1)].noalias() += cv(in(0)).adjoint() * gc;
        break;
      case Primitive::RealMatMul:
        if (wants(0)) adj_real_[in_id(0)].noalias() += (gc * cv(in(1)).adjoint()).real();
        if (wants(1)) adj_cplx_[in_id(1)].noalias() += rv(in(0)).transpose().cast<Complex>() * gc;
        break;
      case Primitive::AddBias:
        if (wants(0)) adj_cplx_[in_id(0)] += gc;
        if (wants(1)) adj_cplx_[in_id(1)] += gc.colwise().sum();
        break;
      case Primitive::Angle: {
        if (!wants(0)) break;
        // theta = atan2(im, re) / pi: dtheta/dre = -im / (pi |z|^2),
        // dtheta/dim = re / (pi |z|^2), i.e. G_z = g * i z / (pi |z|^2).
        const CMatrix& z = cv(in(0));
        CMatrix& dz = adj_cplx_[in_id(0)];
        for (Index i = 0; i < z.size(); ++i) {
          const Complex zi = z.data()[i];
          const Real denom = kPi * (std::norm(zi) + kEpsilonMag);
          dz.data()[i] += g.data()[i] * Complex(-zi.imag(), zi.real()) / denom;
        }
        break;
      }
      case Primitive::Bind:
        // The modular wrap is treated as the identity (derivative 1 a.e.).
        if (wants(0)) adj_real_[in_id(0)] += g;
        if (wants(1)) adj_real_[in_id(1)] += n.attr.scale * g;
        break;
      case Primitive::SimilarityMatrix: {
        const Matrix& q = rv(in(0));
        const Matrix& k = rv(in(1));
        const Matrix qs = (q.array() * kPi).eval().matrix();
        const Matrix ks = (k.array() * kPi).eval().matrix();
        const Matrix cq = qs.array().cos().matrix(), sq = qs.array().sin().matrix();
        const Matrix ck = ks.array().cos().matrix(), sk = ks.array().sin().matrix();
        const Real f = kPi / static_cast<Real>(q.cols());
        if (wants(0)) {
          const Matrix gck = g * ck, gsk = g * sk;
          adj_real_[in_id(0)].array() += f * (cq.array() * gsk.array() - sq.array() * gck.array());
        }
        if (wants(1)) {
          const Matrix gsq = g.transpose() * sq, gcq = g.transpose() * cq;
          adj_real_[in_id(1)].array() += f * (ck.array() * gsq.array() - sk.array() * gcq.array());
        }
        break;
      }
      case Primitive::RowSimilarity: {
        const Matrix& a = rv(in(0));
        const Matrix& b = rv(in(1));
        const Real f = kPi / static_cast<Real>(a.cols());
        for (Index i = 0; i < a.rows(); ++i) {
          for (Index j = 0; j < a.cols(); ++j) {
            const Real d = -f * g(i, 0) * std::sin(kPi * (a(i, j) - b(i, j)));
            if (wants(0)) adj_real_[in_id(0)](i, j) += d;
            if (wants(1)) adj_real_[in_id(1)](i, j) -= d;
          }
        }
        break;
      }
      case Primitive::MaskColumns:
        if (wants(0)) adj_real_[in_id(0)].array() += g.array().rowwise() * n.attr.mask.array();
        break;
      case Primitive::SliceRows:
        if (!wants(0)) break;
        if (n.is_complex)
          adj_cplx_[in_id(0)].middleRows(n.attr.start, n.attr.count) += gc;
        else
          adj_real_[in_id(0)].middleRows(n.attr.start, n.attr.count) += g;
        break;
      case Primitive::ConcatRows: {
        Index r = 0;
        for (std::size_t k = 0; k < n.inputs.size(); ++k) {
          const Index len = rows_of(in(k));
          if (wants(k)) {
            if (n.is_complex)
              adj_cplx_[in_id(k)] += gc.middleRows(r, len);
            else
              adj_real_[in_id(k)] += g.middleRows(r, len);
          }
          r += len;
        }
        break;
      }
      case Primitive::Sum:
        if (wants(0)) adj_real_[in_id(0)].array() += g(0, 0);
        break;
      case Primitive::Mean:
        if (wants(0)) adj_real_[in_id(0)].array() += g(0, 0) / static_cast<Real>(rv(in(0)).size());
        break;
      case Primitive::Affine:
        if (wants(0)) adj_real_[in_id(0)] += n.attr.scale * g;
        break;
      default:
        fail(ErrorKind::Contract, std::string("backward: no rule for ") + to_string(n.op));
    }
  }

  for (std::size_t id = 0; id < count; ++id) {
    const Node& n = nodes_[id];
    if (n.op != Primitive::Param || !n.needs_grad) continue;
    Gradient::Slot& s = into.slot(*n.param);
    if (n.is_complex)
      s.cplx += adj_cplx_[id];
    else
      s.real += adj_real_[id];
  }
}

const Matrix& Tape::grad_real(Var v) const {
  require(!node(v).is_complex, ErrorKind::Contract, "grad_real: node is complex");
  require(static_cast<std::size_t>(v.id) < adj_real_.size(), ErrorKind::Contract, "grad_real: no backward pass");
  return adj_real_[static_cast<std::size_t>(v.id)];
}

const CMatrix& Tape::grad_cplx(Var v) const {
  require(node(v).is_complex, ErrorKind::Contract, "grad_cplx: node is real");
  require(static_cast<std::size_t>(v.id) < adj_cplx_.size(), ErrorKind::Contract, "grad_cplx: no backward pass");
  return adj_cplx_[static_cast<std::size_t>(v.id)];
}

bool Tape::replay_matches() const {
  std::vector<Node> replay;
  replay.reserve(nodes_.size());
  for (const Node& original : nodes_) {
    Node n;
    n.op = original.op;
    n.inputs = original.inputs;
    n.attr = original.attr;
    n.is_complex = original.is_complex;
    n.param = original.param;
    if (is_leaf(n.op)) {
      n.real = original.real;
      n.cplx = original.cplx;
    } else {
      evaluate(n, replay);
      if (n.is_complex ? !(n.cplx == original.cplx) : !(n.real == original.real)) return false;
    }
    replay.push_back(std::move(n));
  }
  return true;
}

}  // namespace fhrr::ad
