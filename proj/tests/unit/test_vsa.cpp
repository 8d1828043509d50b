#include <doctest.h>

#include <cmath>
#include <limits>

#include "fhrr/properties.hpp"
#include "fhrr/vsa.hpp"
#include "helpers.hpp"

using namespace fhrr;
using fhrr::test::check_error;
using fhrr::test::sym;

TEST_SUITE("vsa") {
  TEST_CASE("wrap examples") {
    CHECK(wrap(0.5) == 0.5);
    CHECK(wrap(2.2) == doctest::Approx(0.2).epsilon(1e-12));
    CHECK(wrap(-1.0) == -1.0);
    CHECK(wrap(1.0) == -1.0);
    CHECK(wrap(3.0) == -1.0);
    CHECK(wrap(-3.5) == doctest::Approx(0.5));
    CHECK(wrap(-1e-18) < 1.0);
    check_error([] { wrap(std::numeric_limits<Real>::quiet_NaN()); }, ErrorKind::Domain);
    check_error([] { wrap(std::numeric_limits<Real>::infinity()); }, ErrorKind::Domain);
  }

  TEST_CASE("symbol construction validates the phase domain") {
    check_error([] { sym({1.0}); }, ErrorKind::Domain);
    check_error([] { sym({-1.5}); }, ErrorKind::Domain);
    check_error([] { Symbol(RowVector(0)); }, ErrorKind::Shape);
    CHECK(sym({-1.0}).dim() == 1);
  }

  TEST_CASE("to_complex examples") {
    const Matrix m = (Matrix(1, 3) << 0.0, 0.5, -1.0).finished();
    const ComplexMatrix c = to_complex(SymbolBatch(m));
    CHECK(c.real(0, 0) == 1.0);
    CHECK(c.imag(0, 0) == 0.0);
    CHECK(c.real(0, 1) == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(c.imag(0, 1) == doctest::Approx(1.0));
    CHECK(c.real(0, 2) == doctest::Approx(-1.0));
    CHECK(std::abs(c.imag(0, 2)) < 1e-15);
  }

  TEST_CASE("angle examples and degenerate flag") {
    const ComplexMatrix c((Matrix(1, 4) << 1, 0, 0, -1).finished(), (Matrix(1, 4) << 0, 1, 0, 0).finished());
    BoolMatrix flags;
    const Matrix a = angle(c, &flags).phases();
    CHECK(a(0, 0) == 0.0);
    CHECK(a(0, 1) == doctest::Approx(0.5));
    CHECK(a(0, 2) == 0.0);
    CHECK(a(0, 3) == -1.0);  // +pi maps to the canonical -1
    CHECK(flags(0, 2));
    CHECK_FALSE(flags(0, 0));
    CHECK_FALSE(flags(0, 1));
    // Just below the squared-magnitude threshold.
    const ComplexMatrix tiny((Matrix(1, 1) << 9e-7).finished(), (Matrix(1, 1) << 0).finished());
    CHECK(angle(tiny, &flags).phases()(0, 0) == 0.0);
    CHECK(flags(0, 0));
  }

  TEST_CASE("similarity examples") {
    CHECK(similarity(sym({0.5, 0.0}), sym({0.0, 0.0})) == doctest::Approx(0.5).epsilon(1e-15));
    Rng rng(7);
    const Symbol a = random_symbol(rng, 64);
    CHECK(similarity(a, a) == doctest::Approx(1.0).epsilon(1e-15));
    check_error([&] { similarity(a, random_symbol(rng, 63)); }, ErrorKind::Shape);
    const Symbol x = random_symbol(11, 2048), y = random_symbol(12, 2048);
    CHECK(std::abs(similarity(x, y)) < props::unrelated_bound(2048));
  }

  TEST_CASE("similarity matrix matches per-pair calls exactly") {
    Rng rng(3);
    const SymbolBatch q = random_symbols(rng, 3, 40), k = random_symbols(rng, 4, 40);
    const Matrix s = similarity_matrix(q, k);
    REQUIRE(s.rows() == 3);
    REQUIRE(s.cols() == 4);
    for (Index i = 0; i < 3; ++i)
      for (Index j = 0; j < 4; ++j) CHECK(s(i, j) == similarity(q.row(i), k.row(j)));
    const Matrix self = similarity_matrix(q, q);
    for (Index i = 0; i < 3; ++i) CHECK(self(i, i) == doctest::Approx(1.0).epsilon(1e-15));
    const SymbolBatch one = random_symbols(rng, 1, 8);
    CHECK(similarity_matrix(one, one)(0, 0) == doctest::Approx(1.0));
    check_error([&] { similarity_matrix(q, random_symbols(rng, 2, 41)); }, ErrorKind::Shape);
  }

  TEST_CASE("bundle examples") {
    const Symbol s = random_symbol(5, 16);
    CHECK(bundle(SymbolBatch::from_rows(std::vector<Symbol>{s})) == s);
    const Symbol two = bundle(SymbolBatch((Matrix(2, 1) << 0.0, 0.5).finished()));
    CHECK(two[0] == doctest::Approx(0.25).epsilon(1e-15));
    BoolMatrix flags;
    const Symbol cancel = bundle(SymbolBatch((Matrix(2, 1) << 0.5, -0.5).finished()), &flags);
    CHECK(cancel[0] == 0.0);
    CHECK(flags(0, 0));
    check_error([] { bundle(SymbolBatch(Matrix(0, 4))); }, ErrorKind::Contract);
  }

  TEST_CASE("bind examples") {
    Rng rng(9);
    const Symbol a = random_symbol(rng, 32), b = random_symbol(rng, 32);
    CHECK(bind(a, b, 0) == a);
    CHECK(bind(sym({0.9}), sym({0.3}), 1.0)[0] == doctest::Approx(-0.8).epsilon(1e-12));
    CHECK(bind(sym({0.0}), sym({-1.0}), 0.5)[0] == doctest::Approx(-0.5));
    CHECK(bind(sym({0.0}), sym({0.999999}), 0.5)[0] == doctest::Approx(0.4999995));
    check_error([&] { bind(a, random_symbol(rng, 31)); }, ErrorKind::Shape);
    check_error([&] { bind(a, b, std::numeric_limits<Real>::infinity()); }, ErrorKind::Domain);
  }

  TEST_CASE("random symbols are seed-determined and in range") {
    CHECK(random_symbol(42, 128) == random_symbol(42, 128));
    CHECK_FALSE(random_symbol(42, 128) == random_symbol(43, 128));
    CHECK(std::abs(similarity(random_symbol(1, 2048), random_symbol(2, 2048))) < props::unrelated_bound(2048));
    const Symbol one = random_symbol(99, 1);
    CHECK(one[0] >= -1.0);
    CHECK(one[0] < 1.0);
  }

  TEST_CASE("property suite at n = 2048") {
    props::Options o;
    o.trials = 1000;
    for (const auto& r : props::vsa_suite(o)) CHECK_MESSAGE(r.passed, r.name, ": ", r.detail);
  }

  TEST_CASE("property suite at n = 8 keeps exact invariants") {
    props::Options o;
    o.n = 8;
    o.seed = 5;
    for (const auto& r : props::vsa_suite(o)) CHECK_MESSAGE(r.passed, r.name, ": ", r.detail);
  }
}
