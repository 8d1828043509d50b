#include <random>

#include "fhrr/encoders.hpp"
#include "fhrr/training.hpp"
#include "helpers.hpp"

using namespace fhrr;
using fhrr::test::check_error;

namespace {

// Fixed random symbols with labels cycling over `classes`.
class ToyTask final : public train::Task {
 public:
  ToyTask(std::size_t count, Index rows, Index n, int classes, std::uint64_t seed)
      : rows_(rows), n_(n), classes_(classes) {
    Rng rng(seed);
    for (std::size_t i = 0; i < count; ++i) inputs_.push_back(random_symbols(rng, rows, n).phases());
  }
  std::size_t size() const override { return inputs_.size(); }
  Index rows() const override { return rows_; }
  Index dim() const override { return n_; }
  int label(std::size_t i) const override { return static_cast<int>(i % static_cast<std::size_t>(classes_)); }
  void encode(std::size_t i, Eigen::Ref<Matrix> out, RowVector*) const override { out = inputs_[i]; }

 private:
  Index rows_, n_;
  int classes_;
  std::vector<Matrix> inputs_;
};

train::TrainConfig toy_config() {
  train::TrainConfig c;
  c.arch = nn::Architecture::DeepMlp;
  c.dim = 64;
  c.blocks = 2;
  c.batch = 8;
  c.chunk = 4;
  return c;
}

std::vector<Matrix> values(const nn::Model& m) {
  std::vector<Matrix> out;
  for (const ad::Parameter* p : m.parameters()) {
    if (p->is_complex()) {
      out.push_back(p->cplx.real());
      out.push_back(p->cplx.imag());
    } else {
      out.push_back(p->real);
    }
  }
  return out;
}

// Brute-force P(pos > neg) + P(tie) / 2.
double auroc_pairs(const std::vector<Real>& s, const std::vector<int>& y) {
  double wins = 0, pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (y[i] != 1) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j] != 0) continue;
      pairs += 1;
      wins += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
    }
  }
  return wins / pairs;
}

}  // namespace

TEST_CASE("lr 0 leaves parameters unchanged and train loss matches eval loss") {
  auto c = toy_config();
  c.lr = 0;
  c.batch = 16;
  ToyTask task(16, 1, c.dim, 4, 1);
  nn::Model model(train::model_spec(c, 1));
  const auto codebook = encode::make_codebook(2, 4, c.dim);
  train::Trainer trainer(model, codebook, c);
  const auto before = values(model);
  const Real loss = trainer.train_epoch(task, 0);
  const auto after = values(model);
  REQUIRE(before.size() == after.size());
  for (std::size_t i = 0; i < before.size(); ++i) CHECK(before[i] == after[i]);
  CHECK(loss == doctest::Approx(trainer.evaluate(task).mean_loss).epsilon(1e-12));
}

TEST_CASE("a single example is memorized") {
  auto c = toy_config();
  c.batch = 1;
  c.lr = 1e-2;
  ToyTask task(1, 1, c.dim, 1, 2);
  nn::Model model(train::model_spec(c, 1));
  const auto codebook = encode::make_codebook(3, 4, c.dim);
  train::Trainer trainer(model, codebook, c);
  Real loss = 1;
  for (std::size_t step = 0; step < 200; ++step) loss = trainer.train_epoch(task, step);
  CHECK(loss < 0.05);
  CHECK(trainer.evaluate(task).mean_loss < 0.05);
}

TEST_CASE("untrained accuracy is near chance; memorizing a small set reaches 1") {
  auto c = toy_config();
  c.lr = 1e-2;
  ToyTask task(40, 1, c.dim, 10, 3);
  nn::Model model(train::model_spec(c, 1));
  const auto codebook = encode::make_codebook(4, 10, c.dim);
  train::Trainer trainer(model, codebook, c);
  const Real chance = trainer.evaluate(task).accuracy;
  CHECK(chance >= 0.0);
  CHECK(chance <= 0.3);
  for (std::size_t e = 0; e < 150; ++e) trainer.train_epoch(task, e);
  CHECK(train::evaluate_accuracy(trainer, task) == 1.0);
}

TEST_CASE("untrained accuracy on a large set lies in [0.05, 0.20]") {
  auto c = toy_config();
  ToyTask task(1000, 1, c.dim, 10, 4);
  nn::Model model(train::model_spec(c, 1));
  const auto codebook = encode::make_codebook(5, 10, c.dim);
  train::Trainer trainer(model, codebook, c);
  const Real acc = trainer.evaluate(task).accuracy;
  CHECK(acc >= 0.05);
  CHECK(acc <= 0.20);
}

TEST_CASE("AUROC examples") {
  const std::vector<Real> s1{0.1, 0.4, 0.35, 0.8};
  const std::vector<int> y1{0, 0, 1, 1};
  CHECK(train::evaluate_auroc(s1, y1) == 0.75);
  const std::vector<Real> tied{0.5, 0.5, 0.5, 0.5};
  CHECK(train::evaluate_auroc(tied, y1) == 0.5);
  const std::vector<Real> perfect{0, 1};
  CHECK(train::evaluate_auroc(perfect, std::vector<int>{0, 1}) == 1.0);
  CHECK(train::evaluate_auroc(perfect, std::vector<int>{1, 0}) == 0.0);

  check_error([] { train::evaluate_auroc(std::vector<Real>{1, 2}, std::vector<int>{1, 1}); }, ErrorKind::Contract);
  check_error([] { train::evaluate_auroc(std::vector<Real>{1, 2}, std::vector<int>{0, 2}); }, ErrorKind::Contract);
  check_error([] { train::evaluate_auroc(std::vector<Real>{NAN, 2}, std::vector<int>{0, 1}); }, ErrorKind::Contract);
}

TEST_CASE("AUROC equals the pairwise count exactly") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 2 + rng() % 99;
    std::vector<Real> s(n);
    std::vector<int> y(n);
    const int levels = 1 + static_cast<int>(rng() % 12);  // few levels force ties
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = static_cast<Real>(rng() % static_cast<unsigned>(levels)) / 7.0;
      y[i] = static_cast<int>(rng() % 2);
    }
    y[0] = 0;
    y[1] = 1;
    CHECK(train::evaluate_auroc(s, y) == auroc_pairs(s, y));
  }
}

TEST_CASE("Adam step arithmetic") {
  auto p = ad::Parameter::real_valued("w", Matrix::Constant(2, 2, 0.5));
  auto q = ad::Parameter::complex("c", CMatrix::Constant(1, 2, {0.25, -0.25}));
  auto ph = ad::Parameter::phase("p", Matrix::Constant(1, 1, 0.9995));
  std::vector<ad::Parameter*> params{&p, &q, &ph};
  train::Adam adam(params, {});
  ad::Gradient g(params);

  SUBCASE("zero gradient leaves parameters unchanged") {
    adam.step(g);
    CHECK(p.real == Matrix::Constant(2, 2, 0.5));
    CHECK(q.cplx == CMatrix::Constant(1, 2, {0.25, -0.25}));
  }
  SUBCASE("first step moves each scalar by lr against the gradient sign") {
    g.slot(p).real.setConstant(3.0);
    g.slot(q).cplx.setConstant({-2.0, 5.0});
    g.slot(ph).real.setConstant(-1.0);
    adam.step(g);
    CHECK(p.real(0, 0) == doctest::Approx(0.5 - 1e-3).epsilon(1e-9));
    CHECK(q.cplx(0, 1).real() == doctest::Approx(0.25 + 1e-3).epsilon(1e-9));
    CHECK(q.cplx(0, 1).imag() == doctest::Approx(-0.25 - 1e-3).epsilon(1e-9));
    // 0.9995 + 0.001 crosses +1 and wraps.
    CHECK(ph.real(0, 0) == doctest::Approx(-0.9995).epsilon(1e-9));
    CHECK(adam.steps() == 1);
  }
  SUBCASE("non-finite gradient diverges") {
    g.slot(p).real(1, 1) = NAN;
    check_error([&] { adam.step(g); }, ErrorKind::TrainingDiverged);
  }
}

TEST_CASE("training is deterministic and independent of the thread count") {
  auto run = [](int threads) {
    auto c = toy_config();
    c.threads = threads;
    c.batch = 12;
    c.chunk = 3;
    ToyTask task(30, 1, c.dim, 3, 5);
    nn::Model model(train::model_spec(c, 1));
    const auto codebook = encode::make_codebook(6, 3, c.dim);
    train::Trainer trainer(model, codebook, c);
    std::vector<Real> losses;
    for (std::size_t e = 0; e < 3; ++e) losses.push_back(trainer.train_epoch(task, e));
    return std::pair{losses, values(model)};
  };
  const auto a = run(1);
  const auto b = run(1);
  const auto c = run(3);
  CHECK(a.first == b.first);
  CHECK(a.first == c.first);
  CHECK(a.second == c.second);
}

TEST_CASE("attention models train on multi-row inputs") {
  for (auto arch : {nn::Architecture::SelfAttention, nn::Architecture::CrossAttention}) {
    auto c = toy_config();
    c.arch = arch;
    c.queries = 4;
    c.lr = 1e-2;
    ToyTask task(16, 5, c.dim, 2, 6);
    nn::Model model(train::model_spec(c, 5));
    const auto codebook = encode::make_codebook(7, 2, c.dim);
    train::Trainer trainer(model, codebook, c);
    const Real first = trainer.train_epoch(task, 0);
    Real last = first;
    for (std::size_t e = 1; e < 30; ++e) last = trainer.train_epoch(task, e);
    CHECK(last < first);
    const auto r = trainer.evaluate(task);
    CHECK(r.confidences.size() == 16);
  }
}

TEST_CASE("config JSON round trip and validation") {
  train::TrainConfig c;
  c.task = train::TaskKind::Graph;
  c.arch = nn::Architecture::CrossAttention;
  c.dim = 128;
  c.queries = 16;
  c.lr = 2.5e-3;
  c.seeds.shuffle = 99;
  c.reduction = nn::Reduction::Bundle;
  c.position = encode::PositionMode::Bind;
  c.key_mask = true;
  c.subset = 123;
  c.data = "synthetic";
  const auto back = train::config_from_json(train::to_json(c));
  CHECK(train::to_json(back) == train::to_json(c));
  CHECK(back.seeds.shuffle == 99);
  CHECK(back.position == encode::PositionMode::Bind);

  check_error([] { train::config_from_json("{not json"); }, ErrorKind::ConfigInvalid);
  check_error([] { train::config_from_json(R"({"arch": "transformer"})"); }, ErrorKind::ConfigInvalid);
  check_error([] { train::config_from_json(R"({"dim": "wide"})"); }, ErrorKind::ConfigInvalid);
  check_error([] { train::config_from_json(R"({"dim": 0})"); }, ErrorKind::ConfigInvalid);
  check_error([] { train::config_from_json(R"({"beta1": 1.0})"); }, ErrorKind::ConfigInvalid);
  check_error([] { train::config_from_json(R"({"task": "graph", "arch": "deep-mlp"})"); }, ErrorKind::ConfigInvalid);
  check_error([] { train::config_from_json(R"({"key_mask": true})"); }, ErrorKind::ConfigInvalid);
  check_error([] { train::parse_arch("mlp"); }, ErrorKind::ConfigInvalid);
  CHECK(train::parse_arch("self-attention") == nn::Architecture::SelfAttention);
}
