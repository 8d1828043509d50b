#pragma once

// Reverse-mode differentiation over the closed set of operations used by the
// phasor networks. A Tape records one forward evaluation; backward() then
// walks it in reverse and accumulates parameter gradients.
//
// A tape is single-owner while recording. Once recording is done it can be
// back-propagated any number of times, from any thread.

#include <cstdint>
#include <span>
#include <vector>

#include "fhrr/parameter.hpp"
#include "fhrr/types.hpp"

namespace fhrr::ad {

enum class Primitive : std::uint8_t {
  Constant,          // leaf, no gradient
  Variable,          // leaf, gradient retrievable through the tape
  Param,             // leaf bound to a Parameter
  ExpIPi,            // real phases -> exp(i pi x)
  MatMul,            // complex * complex
  RealMatMul,        // real * complex
  AddBias,           // complex (m x n) + complex row (1 x n)
  Angle,             // complex -> phases, atan2 / pi
  Bind,              // wrap(a + power * b)
  SimilarityMatrix,  // (m x n, k x n) -> m x k mean cosine
  RowSimilarity,     // (m x n, m x n) -> m x 1 mean cosine per row pair
  MaskColumns,       // real m x k times a constant 0/1 row
  SliceRows,
  ConcatRows,
  Sum,               // real -> 1 x 1
  Mean,              // real -> 1 x 1
  Affine,            // scale * x + shift, elementwise
};

// Number of primitives above; anything at or past this is rejected.
inline constexpr int kPrimitiveCount = 17;

const char* to_string(Primitive p) noexcept;

struct Var {
  std::int32_t id = -1;
  bool valid() const noexcept { return id >= 0; }
};

struct Attributes {
  Real scale = 1;   // Bind power, Affine scale
  Real shift = 0;   // Affine shift
  Index start = 0;  // SliceRows
  Index count = 0;  // SliceRows
  RowVector mask;   // MaskColumns
};

class Tape {
 public:
  Tape() = default;

  Var constant(Matrix value);
  Var constant(CMatrix value);
  Var variable(Matrix value);
  Var variable(CMatrix value);
  Var parameter(const Parameter& p);

  // Generic entry point for non-leaf primitives. Every typed helper below
  // routes through here. Throws Error(Contract) for leaf or unknown
  // primitives, Error(Shape) on shape mismatch.
  Var record(Primitive op, std::span<const Var> inputs, const Attributes& attr = {});

  Var exp_i_pi(Var phases) { return record(Primitive::ExpIPi, {&phases, 1}); }
  Var matmul(Var a, Var b);
  Var real_matmul(Var a, Var b);
  Var add_bias(Var c, Var bias);
  Var angle(Var c) { return record(Primitive::Angle, {&c, 1}); }
  Var bind(Var a, Var b, Real power = 1);
  Var similarity_matrix(Var q, Var k);
  Var row_similarity(Var a, Var b);
  Var mask_columns(Var s, RowVector mask);
  Var slice_rows(Var x, Index start, Index count);
  Var concat_rows(std::span<const Var> parts) { return record(Primitive::ConcatRows, parts); }
  Var sum(Var x) { return record(Primitive::Sum, {&x, 1}); }
  Var mean(Var x) { return record(Primitive::Mean, {&x, 1}); }
  Var affine(Var x, Real scale, Real shift);

  std::size_t size() const noexcept { return nodes_.size(); }
  Primitive op(Var v) const { return node(v).op; }
  bool is_complex(Var v) const { return node(v).is_complex; }
  Index rows(Var v) const;
  Index cols(Var v) const;
  const Matrix& real(Var v) const;
  const CMatrix& cplx(Var v) const;
  Real scalar(Var v) const;

  // Seeds dL/dL = seed at `loss` (which must be 1 x 1 real) and propagates to
  // every leaf. Parameter gradients are added into `into`, which must contain
  // every parameter recorded on this tape.
  void backward(Var loss, Gradient& into, Real seed = 1);
  void backward(Var loss, Real seed = 1);

  // Adjoints from the most recent backward(); zero-sized if the node did not
  // need a gradient.
  const Matrix& grad_real(Var v) const;
  const CMatrix& grad_cplx(Var v) const;

  // Recomputes every non-leaf node from the recorded leaves and reports
  // whether each value matches the recorded one bit-for-bit.
  bool replay_matches() const;

 private:
  struct Node {
    Primitive op = Primitive::Constant;
    std::vector<std::int32_t> inputs;
    Attributes attr;
    bool is_complex = false;
    bool needs_grad = false;
    Matrix real;
    CMatrix cplx;
    const Parameter* param = nullptr;
  };

  const Node& node(Var v) const;
  Var push(Node n);
  void evaluate(Node& n, const std::vector<Node>& values) const;

  std::vector<Node> nodes_;
  std::vector<Matrix> adj_real_;
  std::vector<CMatrix> adj_cplx_;
};

}  // namespace fhrr::ad
