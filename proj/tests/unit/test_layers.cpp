#include <doctest.h>

#include <cmath>

#include "fhrr/encoders.hpp"
#include "fhrr/layers.hpp"
#include "fhrr/model.hpp"
#include "fhrr/properties.hpp"
#include "helpers.hpp"

using namespace fhrr;
using fhrr::test::check_error;

namespace {

Real mean_row_similarity(const SymbolBatch& a, const SymbolBatch& b) {
  Real s = 0;
  for (Index i = 0; i < a.count(); ++i) s += similarity(a.row(i), b.row(i));
  return s / static_cast<Real>(a.count());
}

}  // namespace

TEST_SUITE("layers") {
  TEST_CASE("PB layer with ones reduction, identity weights, zero bias is bundling") {
    Rng rng(1);
    const Index n = 12, m = 5;
    nn::PBLayer layer("pb", n, n, rng);
    layer.with_reduction(1, m);
    layer.weights().cplx = CMatrix::Identity(n, n);
    layer.bias().cplx.setZero();
    for (int trial = 0; trial < 20; ++trial) {
      const SymbolBatch a = random_symbols(rng, m, n);
      CHECK(layer.forward(a).row(0) == bundle(a));
    }
  }

  TEST_CASE("zero weights with the unit bias give all-zero phases") {
    Rng rng(2);
    nn::PBLayer layer("pb", 8, 6, rng);
    layer.weights().cplx.setZero();
    const Matrix y = layer.forward(random_symbols(rng, 3, 8)).phases();
    CHECK(y.rows() == 3);
    CHECK(y.cols() == 6);
    CHECK(y.cwiseAbs().maxCoeff() == 0);
  }

  TEST_CASE("fresh PB layer outputs concentrate around zero") {
    Rng rng(3);
    const Index n = 512;
    nn::PBLayer layer("pb", n, n, rng);
    const Matrix y = layer.forward(random_symbols(rng, 16, n)).phases();
    const Real mean = y.mean();
    CHECK(std::abs(mean) < 0.05);
    // A uniform phase distribution puts 50% of its mass beyond |0.5|.
    const Real tail = static_cast<Real>((y.array().abs() > 0.5).count()) / static_cast<Real>(y.size());
    CHECK(tail < 0.1);
  }

  TEST_CASE("PB layer shape errors") {
    Rng rng(4);
    nn::PBLayer layer("pb", 8, 8, rng);
    check_error([&] { layer.forward(random_symbols(rng, 2, 7)); }, ErrorKind::Shape);
    layer.with_reduction(1, 3);
    check_error([&] { layer.forward(random_symbols(rng, 2, 8)); }, ErrorKind::Shape);
  }

  TEST_CASE("residual block with forced zero MLP output is the identity") {
    Rng rng(5);
    nn::ResidualBlock block("res", 16, rng);
    block.out().weights().cplx.setZero();
    const SymbolBatch a = random_symbols(rng, 4, 16);
    CHECK(block.forward(a) == a);
  }

  TEST_CASE("near-identity initialization at n = 512") {
    Rng rng(6);
    const Index n = 512;
    Real with_bias = 0, without = 0;
    const int seeds = 100;
    for (int s = 0; s < seeds; ++s) {
      Rng r(1000 + static_cast<std::uint64_t>(s));
      nn::ResidualBlock block("res", n, r);
      const SymbolBatch a = random_symbols(r, 2, n);
      with_bias += mean_row_similarity(a, block.forward(a));
      block.hidden().bias().cplx.setZero();
      block.out().bias().cplx.setZero();
      without += mean_row_similarity(a, block.forward(a));
    }
    CHECK(with_bias / seeds > 0.8);
    CHECK(without / seeds < 0.2);
  }

  TEST_CASE("vsa attention examples") {
    Rng rng(7);
    const SymbolBatch k = random_symbols(rng, 1, 16), v = random_symbols(rng, 1, 16);
    CHECK(similarity_matrix(k, k)(0, 0) == doctest::Approx(1.0));
    CHECK(fhrr::test::max_circ(nn::vsa_attention(k, k, v).phases(), v.phases()) <= 1e-15);

    const SymbolBatch q = random_symbols(rng, 3, 16), k4 = random_symbols(rng, 4, 16), v4 = random_symbols(rng, 4, 16);
    CHECK(fhrr::test::max_circ(nn::vsa_attention(q, k4, v4).phases(), props::attention_oracle(q, k4, v4).phases()) <=
          1e-12);

    const RowVector none = RowVector::Zero(4);
    BoolMatrix flags;
    const SymbolBatch masked = nn::vsa_attention(q, k4, v4, &none, &flags);
    CHECK(masked.phases().cwiseAbs().maxCoeff() == 0);
    CHECK(flags.all());
    check_error([&] { nn::vsa_attention(q, k4, random_symbols(rng, 3, 16)); }, ErrorKind::Shape);
  }

  TEST_CASE("self-attention with one input stays close to it") {
    Real total = 0;
    const int seeds = 20;
    for (int s = 0; s < seeds; ++s) {
      Rng rng(200 + static_cast<std::uint64_t>(s));
      nn::SelfAttentionModule self("self", 256, rng);
      const SymbolBatch a = random_symbols(rng, 1, 256);
      total += mean_row_similarity(a, self.forward(a));
    }
    CHECK(total / seeds > 0.5);
  }

  TEST_CASE("cross-attention output has q rows") {
    Rng rng(8);
    nn::CrossAttentionModule cross("cross", 64, 32, rng);
    const SymbolBatch out = cross.forward(random_symbols(rng, 28, 64));
    CHECK(out.count() == 32);
    CHECK(out.dim() == 64);
    CHECK(cross.score_entries(28) == 32 * 28);
    CHECK(nn::SelfAttentionModule::score_entries(28) == 28 * 28);
  }

  TEST_CASE("taped attention modules match their untaped forms per example") {
    Rng rng(9);
    const Index n = 16, m = 5, examples = 3;
    nn::SelfAttentionModule self("self", n, rng);
    nn::CrossAttentionModule cross("cross", n, 4, rng);
    const SymbolBatch a = random_symbols(rng, examples * m, n);
    std::vector<RowVector> masks(examples, RowVector::Ones(m));
    masks[1][2] = 0;
    ad::Tape t;
    const ad::Var x = t.constant(a.phases());
    const Matrix ys = t.real(self.forward(t, x, examples, &masks));
    const Matrix yc = t.real(cross.forward(t, x, examples, &masks));
    for (Index e = 0; e < examples; ++e) {
      const SymbolBatch part(a.phases().middleRows(e * m, m));
      const RowVector& mask = masks[static_cast<std::size_t>(e)];
      CHECK(fhrr::test::max_circ(ys.middleRows(e * m, m), self.forward(part, &mask).phases()) <= 1e-13);
      CHECK(fhrr::test::max_circ(yc.middleRows(e * 4, 4), cross.forward(part, &mask).phases()) <= 1e-13);
    }
  }

  TEST_CASE("codebook predict, loss, confidence") {
    const Index n = 2048;
    nn::Codebook book = encode::make_codebook(3, 10, n);
    const auto p = book.predict(book.symbol(3));
    CHECK(p.label == 3);
    CHECK(p.similarities[3] == doctest::Approx(1.0));
    Rng rng(10);
    const auto r = book.predict(random_symbol(rng, n));
    CHECK(r.similarities.cwiseAbs().maxCoeff() < props::unrelated_bound(n));
    const Symbol both = bundle(SymbolBatch::from_rows(std::vector<Symbol>{book.symbol(0), book.symbol(1)}));
    CHECK(book.predict(both).label <= 1);

    CHECK(book.loss(book.symbol(4), 4) == doctest::Approx(0.0));
    const Real unrelated = book.loss(bind(book.symbol(4), random_symbol(rng, n)), 4);
    CHECK(std::abs(unrelated - 1) < props::unrelated_bound(n));
    check_error([&] { book.loss(book.symbol(0), 10); }, ErrorKind::Contract);
    check_error([&] { book.loss(book.symbol(0), -1); }, ErrorKind::Contract);
    check_error([&] { book.binary_confidence(book.symbol(0)); }, ErrorKind::Contract);

    nn::Codebook tox = encode::make_codebook(4, 2, n);
    CHECK(tox.binary_confidence(tox.symbol(1)) > 0.9);
    CHECK(tox.binary_confidence(tox.symbol(0)) < -0.9);
    const Symbol mid = bundle(SymbolBatch::from_rows(std::vector<Symbol>{tox.symbol(0), tox.symbol(1)}));
    CHECK(std::abs(tox.binary_confidence(mid)) < 0.05);
  }

  TEST_CASE("codebook prediction ties go to the lowest index") {
    const Matrix m = (Matrix(3, 2) << 0.0, 0.0, 0.0, 0.0, 0.5, 0.5).finished();
    nn::Codebook book{SymbolBatch(m)};
    CHECK(book.predict(fhrr::test::sym({0.0, 0.0})).label == 0);
  }

  TEST_CASE("model forward: taped batch equals untaped per example") {
    for (auto arch : {nn::Architecture::DeepMlp, nn::Architecture::SelfAttention, nn::Architecture::CrossAttention}) {
      for (auto red : {nn::Reduction::Trainable, nn::Reduction::Bundle}) {
        nn::ModelSpec spec;
        spec.arch = arch;
        spec.dim = 16;
        spec.blocks = 2;
        spec.queries = 3;
        spec.reduction = red;
        spec.input_rows = arch == nn::Architecture::DeepMlp ? 1 : 4;
        nn::Model model(spec);
        Rng rng(11);
        const Index examples = 3;
        const SymbolBatch a = random_symbols(rng, examples * spec.input_rows, spec.dim);
        ad::Tape t;
        const Matrix y = t.real(model.forward(t, t.constant(a.phases()), examples));
        REQUIRE(y.rows() == examples);
        for (Index e = 0; e < examples; ++e) {
          const SymbolBatch part(a.phases().middleRows(e * spec.input_rows, spec.input_rows));
          CHECK(fhrr::test::max_circ(y.row(e), model.forward(part).phases()) <= 1e-13);
        }
      }
    }
  }

  TEST_CASE("model configuration errors") {
    nn::ModelSpec spec;
    spec.input_rows = 4;
    check_error([&] { nn::Model m(spec); }, ErrorKind::ConfigInvalid);
    spec.arch = nn::Architecture::CrossAttention;
    spec.queries = 0;
    check_error([&] { nn::Model m(spec); }, ErrorKind::ConfigInvalid);
    CHECK(nn::parse_architecture("cross-attention") == nn::Architecture::CrossAttention);
    CHECK_FALSE(nn::parse_architecture("mlp").has_value());
  }

  TEST_CASE("layers property suite") {
    props::Options o;
    o.n = 512;
    for (const auto& r : props::layers_suite(o)) CHECK_MESSAGE(r.passed, r.name, ": ", r.detail);
  }
}
