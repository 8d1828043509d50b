#include <doctest.h>

#include <cmath>

#include "fhrr/layers.hpp"
#include "fhrr/properties.hpp"
#include "fhrr/tape.hpp"
#include "helpers.hpp"

using namespace fhrr;
using fhrr::test::check_error;

TEST_SUITE("tape") {
  TEST_CASE("record(similarity, (a, a)) is 1 with one new entry") {
    Rng rng(1);
    ad::Tape t;
    const ad::Var a = t.constant(random_symbols(rng, 1, 32).phases());
    const std::size_t before = t.size();
    const ad::Var s = t.row_similarity(a, a);
    CHECK(t.size() == before + 1);
    CHECK(t.real(s)(0, 0) == doctest::Approx(1.0).epsilon(1e-15));
    const ad::Var m = t.similarity_matrix(a, a);
    CHECK(t.real(m)(0, 0) == doctest::Approx(1.0).epsilon(1e-15));
  }

  TEST_CASE("record(bind) equals vsa bind") {
    Rng rng(2);
    const SymbolBatch a = random_symbols(rng, 3, 16), b = random_symbols(rng, 3, 16);
    ad::Tape t;
    const ad::Var v = t.bind(t.constant(a.phases()), t.constant(b.phases()), 0.75);
    CHECK(t.real(v) == bind(a, b, 0.75).phases());
  }

  TEST_CASE("taped two-layer network equals the untaped path") {
    Rng rng(3);
    nn::PBLayer l1("l1", 16, 24, rng), l2("l2", 24, 16, rng);
    const SymbolBatch a = random_symbols(rng, 5, 16);
    ad::Tape t;
    const ad::Var y = l2.forward(t, l1.forward(t, t.constant(a.phases())));
    const Matrix ref = l2.forward(l1.forward(a)).phases();
    CHECK(fhrr::test::max_circ(t.real(y), ref) <= 1e-15);
    CHECK(t.replay_matches());
  }

  TEST_CASE("closed primitive set") {
    ad::Tape t;
    const ad::Var a = t.constant(Matrix(Matrix::Zero(1, 4)));
    check_error([&] { t.record(ad::Primitive::Constant, {&a, 1}); }, ErrorKind::Contract);
    check_error([&] { t.record(ad::Primitive::Param, {&a, 1}); }, ErrorKind::Contract);
    check_error([&] { t.record(static_cast<ad::Primitive>(ad::kPrimitiveCount), {&a, 1}); }, ErrorKind::Contract);
    check_error([&] { t.record(static_cast<ad::Primitive>(250), {&a, 1}); }, ErrorKind::Contract);
  }

  TEST_CASE("shape and kind checks") {
    ad::Tape t;
    const ad::Var r = t.constant(Matrix(Matrix::Zero(2, 3)));
    const ad::Var c = t.constant(CMatrix(CMatrix::Zero(3, 4)));
    check_error([&] { t.matmul(r, c); }, ErrorKind::Contract);  // real where complex expected
    check_error([&] { t.real_matmul(t.constant(Matrix(Matrix::Zero(2, 2))), c); }, ErrorKind::Shape);
    check_error([&] { t.row_similarity(r, t.constant(Matrix(Matrix::Zero(2, 4)))); }, ErrorKind::Shape);
    check_error([&] { t.slice_rows(r, 1, 2); }, ErrorKind::Shape);
    check_error([&] { t.constant(Matrix(Matrix::Constant(1, 1, std::nan("")))); }, ErrorKind::Domain);
  }

  TEST_CASE("non-scalar terminus is a contract error") {
    ad::Tape t;
    const ad::Var x = t.variable(Matrix(Matrix::Zero(2, 2)));
    check_error([&] { t.backward(x); }, ErrorKind::Contract);
    check_error([&] { t.backward(t.exp_i_pi(t.slice_rows(x, 0, 1))); }, ErrorKind::Contract);
  }

  TEST_CASE("similarity gradient matches the hand derivative") {
    Rng rng(4);
    const Index n = 24;
    const Matrix x = random_symbols(rng, 1, n).phases(), b = random_symbols(rng, 1, n).phases();
    ad::Tape t;
    const ad::Var xv = t.variable(x);
    const ad::Var loss = t.sum(t.row_similarity(xv, t.constant(b)));
    t.backward(loss);
    const Matrix& g = t.grad_real(xv);
    for (Index i = 0; i < n; ++i)
      CHECK(g(0, i) == doctest::Approx(-(kPi / n) * std::sin(kPi * (x(0, i) - b(0, i)))).epsilon(1e-13));
  }

  TEST_CASE("constant loss gives zero gradients") {
    Rng rng(5);
    nn::PBLayer layer("l", 8, 8, rng);
    ad::Gradient g(layer.parameters());
    ad::Tape t;
    const ad::Var y = layer.forward(t, t.constant(random_symbols(rng, 2, 8).phases()));
    const ad::Var loss = t.affine(t.sum(t.row_similarity(y, y)), 0, 3);
    CHECK(t.scalar(loss) == 3);
    t.backward(loss, g);
    for (const auto& s : g.slots()) {
      if (s.param->is_complex())
        CHECK(s.cplx.cwiseAbs().maxCoeff() == 0);
      else
        CHECK(s.real.cwiseAbs().maxCoeff() == 0);
    }
  }

  TEST_CASE("angle gradient is bounded near the origin") {
    ad::Tape t;
    const ad::Var z = t.variable(CMatrix(CMatrix::Constant(1, 1, Complex(1e-9, 0))));
    const ad::Var loss = t.sum(t.angle(z));
    t.backward(loss);
    CHECK(std::isfinite(std::abs(t.grad_cplx(z)(0, 0))));
    CHECK(std::abs(t.grad_cplx(z)(0, 0)) < 1e4);
  }

  TEST_CASE("gradient missing from the target set is a contract error") {
    Rng rng(6);
    nn::PBLayer a("a", 4, 4, rng), b("b", 4, 4, rng);
    ad::Gradient g(a.parameters());
    ad::Tape t;
    const ad::Var y = b.forward(t, t.constant(random_symbols(rng, 1, 4).phases()));
    check_error([&] { t.backward(t.sum(y), g); }, ErrorKind::Contract);
  }

  TEST_CASE("finite-difference oracle over random configurations") {
    const auto cases = props::gradient_cases(2024, 24, 16);
    for (const auto& c : cases) {
      const auto r = props::finite_difference_check(c);
      CHECK_MESSAGE(r.max_rel_error < 1e-4, c.name, " worst ", r.worst, " err ", r.max_rel_error);
      CHECK(r.scalars > 0);
    }
  }

  TEST_CASE("diff property suite") {
    props::Options o;
    o.gradient_cases = 8;
    for (const auto& r : props::diff_suite(o)) CHECK_MESSAGE(r.passed, r.name, ": ", r.detail);
  }
}
