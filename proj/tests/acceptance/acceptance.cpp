// Acceptance criteria: one PASS/FAIL line per criterion on stdout, progress on
// stderr. Environment:
//   FHRR_DATA_DIR         image IDX directory (default set at configure time)
//   FHRR_ACCEPTANCE_ONLY  comma-separated criterion numbers to run
//   FHRR_THREADS          worker threads for training (default 1)

#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "fhrr/experiment.hpp"
#include "fhrr/properties.hpp"
#include "fhrr/vsa.hpp"
#include "fhrr_cli/cli.hpp"

using namespace fhrr;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool passed = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v, int precision = 4) {
  std::ostringstream os;
  os.precision(precision);
  os << v;
  return os.str();
}

std::string data_dir() {
  if (const char* d = std::getenv("FHRR_DATA_DIR")) return d;
  return FHRR_DEFAULT_DATA_DIR;
}

int threads() {
  if (const char* t = std::getenv("FHRR_THREADS")) return std::max(1, std::atoi(t));
  return 1;
}

// ---------------------------------------------------------------------------

Outcome vsa_algebra() {
  const auto t0 = Clock::now();
  props::Options o;
  o.n = 2048;
  o.trials = 1000;
  const auto results = props::vsa_suite(o);
  const double s = seconds_since(t0);
  std::string failed;
  for (const auto& r : results)
    if (!r.passed) failed += " " + r.name + " (" + r.detail + ")";
  const bool ok = failed.empty() && s < 10;
  return {ok, std::to_string(results.size()) + " properties at n = 2048, " + fmt(s, 3) + " s (limit 10 s)" +
                  (failed.empty() ? "" : "; failed:" + failed)};
}

Outcome gradient_oracle() {
  const auto t0 = Clock::now();
  const auto cases = props::gradient_cases(20240601, 24, 32);
  std::set<std::string> kinds;
  Real worst = 0;
  std::string where;
  Index scalars = 0;
  for (const auto& c : cases) {
    kinds.insert(c.name.substr(0, c.name.find(' ')));
    const auto r = props::finite_difference_check(c, 1e-5);
    scalars += r.scalars;
    if (r.max_rel_error >= worst) {
      worst = r.max_rel_error;
      where = c.name + " " + r.worst;
    }
  }
  const double s = seconds_since(t0);
  const std::set<std::string> required{"PBLayer", "PBLayer+reduction", "ResidualBlock", "vsa_attention",
                                       "SelfAttention", "CrossAttention"};
  const bool covered = std::includes(kinds.begin(), kinds.end(), required.begin(), required.end());
  return {cases.size() >= 20 && covered && worst < 1e-4 && s < 120,
          std::to_string(cases.size()) + " configs, " + std::to_string(kinds.size()) + " kinds, " +
              std::to_string(scalars) + " scalars, max rel err " + fmt(worst, 3) + " at " + where + ", " +
              fmt(s, 3) + " s (limit 120 s)"};
}

Outcome attention_oracle() {
  Rng rng(77);
  Real worst = 0;
  int shapes = 0;
  for (Index m = 1; m <= 8; ++m)
    for (Index k = 1; k <= 8; ++k)
      for (Index n : {1, 2, 5, 8, 13, 16}) {
        const SymbolBatch q = random_symbols(rng, m, n), kk = random_symbols(rng, k, n), v = random_symbols(rng, k, n);
        RowVector mask = RowVector::Ones(k);
        if (k > 1) mask[static_cast<Index>(rng() % static_cast<std::uint64_t>(k))] = 0;
        for (const RowVector* mk : {static_cast<const RowVector*>(nullptr), static_cast<const RowVector*>(&mask)}) {
          const Matrix fast = nn::vsa_attention(q, kk, v, mk).phases();
          const Matrix slow = props::attention_oracle(q, kk, v, mk).phases();
          for (Index i = 0; i < fast.size(); ++i) {
            const Real d = std::abs(fast.data()[i] - slow.data()[i]);
            worst = std::max(worst, std::min(d, 2 - d));
          }
          ++shapes;
        }
      }
  return {worst <= 1e-12, std::to_string(shapes) + " shapes (m, k <= 8, n <= 16, with and without masks), max circular diff " +
                              fmt(worst, 3)};
}

Outcome near_identity() {
  const Index n = 512;
  Rng rng(5);
  Real with_bias = 0, without = 0;
  const int blocks = 20;
  for (int b = 0; b < blocks; ++b) {
    nn::ResidualBlock block("b", n, rng);
    const SymbolBatch a = random_symbols(rng, 32, n);
    auto mean_sim = [&](const SymbolBatch& y) {
      Real s = 0;
      for (Index i = 0; i < a.count(); ++i) s += similarity(a.row(i), y.row(i));
      return s / static_cast<Real>(a.count());
    };
    with_bias += mean_sim(block.forward(a));
    block.hidden().bias().cplx.setZero();
    block.out().bias().cplx.setZero();
    without += mean_sim(block.forward(a));
  }
  with_bias /= blocks;
  without /= blocks;
  return {with_bias > 0.8 && without < 0.2, std::to_string(blocks) + " blocks at n = 512: mean sim " + fmt(with_bias) +
                                                " (need > 0.8), zero bias " + fmt(without) + " (need < 0.2)"};
}

// Trains one configuration; returns per-epoch primary test metric.
struct RunSummary {
  std::vector<Real> metric;
  double seconds = 0;
  Real best() const { return metric.empty() ? 0 : *std::max_element(metric.begin(), metric.end()); }
  Real last() const { return metric.empty() ? 0 : metric.back(); }
};

RunSummary train_run(train::TrainConfig c, const std::string& label) {
  c.threads = threads();
  const auto t0 = Clock::now();
  train::Experiment ex(c);
  RunSummary r;
  ex.fit([&](const train::EpochRecord& e) {
    r.metric.push_back(e.test.front().value);
    std::cerr << "  [" << label << "] epoch " << e.epoch << " loss " << fmt(e.loss) << " " << e.test.front().split
              << " " << fmt(e.test.front().value) << " (" << fmt(e.seconds, 3) << " s)" << std::endl;
  });
  r.seconds = seconds_since(t0);
  return r;
}

std::string trace(const RunSummary& r) {
  std::string s;
  for (Real v : r.metric) s += (s.empty() ? "" : " ") + fmt(v, 3);
  return s;
}

constexpr std::size_t kTrainSubset = 10000;
constexpr std::size_t kTestSubset = 2000;

train::TrainConfig image_config(nn::Architecture arch) {
  train::TrainConfig c;
  c.task = train::TaskKind::Image;
  c.arch = arch;
  c.dim = 256;
  c.blocks = 12;
  c.queries = 32;
  c.epochs = 10;
  c.subset = kTrainSubset;
  c.test_subset = kTestSubset;
  c.val_fraction = 0;
  c.data = data_dir();
  return c;
}

Outcome residual_contrast() {
  auto skip = image_config(nn::Architecture::DeepMlp);
  auto no_skip = skip;
  no_skip.skip = false;
  const RunSummary a = train_run(skip, "deep-mlp skip");
  const RunSummary b = train_run(no_skip, "deep-mlp no-skip");
  const bool ok = a.last() >= 0.70 && b.last() <= 0.13;
  return {ok, "12 blocks, n = 256, 10000 train / 2000 test, 10 epochs: skip final acc " + fmt(a.last()) +
                  " (need >= 0.70; per epoch " + trace(a) + "), no-skip final acc " + fmt(b.last()) +
                  " (need <= 0.13; per epoch " + trace(b) + "); " + fmt(a.seconds, 4) + " s + " + fmt(b.seconds, 4) +
                  " s (target <= 1800 s each)"};
}

Outcome attention_classification() {
  const RunSummary s = train_run(image_config(nn::Architecture::SelfAttention), "self-attention");
  const RunSummary c = train_run(image_config(nn::Architecture::CrossAttention), "cross-attention q=32");
  const bool ok = s.best() >= 0.75 && c.best() >= 0.72;
  return {ok, "10000 train / 2000 test, <= 10 epochs: self best " + fmt(s.best()) + " (need >= 0.75; per epoch " +
                  trace(s) + "), cross q = 32 best " + fmt(c.best()) + " (need >= 0.72; per epoch " + trace(c) +
                  "); " + fmt(s.seconds, 4) + " s, " + fmt(c.seconds, 4) + " s"};
}

Outcome cross_scaling() {
  bool counts = true;
  for (Index m : {1, 7, 64, 512}) {
    counts = counts && cli::bench_attention(nn::Architecture::CrossAttention, m, 32, 8, 1, 1).score_entries == 32 * m;
    counts = counts && cli::bench_attention(nn::Architecture::SelfAttention, m, 32, 8, 1, 1).score_entries == m * m;
  }
  std::string detail = std::string("entry counts q*m / m^2 ") + (counts ? "exact" : "WRONG") + "; time ratios";
  Real worst = 0;
  double previous = 0;
  for (Index m : {256, 512, 1024, 2048}) {
    const double t = cli::bench_attention(nn::Architecture::CrossAttention, m, 32, 256, 7, 3).seconds;
    if (previous > 0) {
      const Real ratio = t / previous;
      worst = std::max(worst, ratio);
      detail += " " + std::to_string(m / 2) + "->" + std::to_string(m) + ": " + fmt(ratio, 3);
    }
    previous = t;
  }
  return {counts && worst <= 2.5, detail + " (limit 2.5)"};
}

double auroc_pairs(const std::vector<Real>& s, const std::vector<int>& y) {
  double wins = 0, pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j)
      if (y[i] == 1 && y[j] == 0) {
        pairs += 1;
        wins += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
      }
  return wins / pairs;
}

Outcome auroc_exact() {
  Rng rng(31);
  int mismatches = 0, instances = 0;
  for (int t = 0; t < 5000; ++t) {
    const std::size_t n = 2 + rng() % 99;
    const auto levels = 1 + rng() % 20;
    std::vector<Real> s(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = t % 2 ? static_cast<Real>(rng() % levels) * 0.1 : std::ldexp(static_cast<Real>(rng() >> 11), -53);
      y[i] = static_cast<int>(rng() % 2);
    }
    const std::size_t a = rng() % n, b = (a + 1 + rng() % (n - 1)) % n;  // distinct
    y[a] = 0;
    y[b] = 1;
    ++instances;
    if (train::evaluate_auroc(s, y) != auroc_pairs(s, y)) ++mismatches;
  }
  return {mismatches == 0, std::to_string(instances) + " random instances (n <= 100, half with heavy ties), " +
                               std::to_string(mismatches) + " inexact"};
}

Outcome toxicity_pipeline() {
  train::TrainConfig c;
  c.task = train::TaskKind::Graph;
  c.arch = nn::Architecture::CrossAttention;
  c.dim = 256;
  c.queries = 32;
  c.epochs = 10;
  c.val_fraction = 0;
  c.data = "synthetic";
  const RunSummary r = train_run(c, "graph cross-attention");
  return {r.best() >= 0.90, "synthetic graphs 2000 train / 500 test-iid, cross-attention q = 32: best AUROC " +
                                fmt(r.best()) + " (need >= 0.90; per epoch " + trace(r) + "); " + fmt(r.seconds, 4) +
                                " s"};
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

Outcome determinism() {
  const fs::path root = fs::temp_directory_path() / ("fhrr_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(root);
  const std::vector<std::vector<std::string>> commands{
      {"train", "--task", "image", "--arch", "self-attention", "--dim", "64", "--subset", "300", "--test-subset",
       "100", "--epochs", "2", "--data", data_dir(), "--threads", "2"},
      {"train", "--task", "graph", "--arch", "cross-attention", "--dim", "64", "--queries", "8", "--subset", "200",
       "--test-subset", "100", "--epochs", "2", "--data", "synthetic", "--key-mask", "--seed", "9"},
      {"train", "--task", "image", "--arch", "deep-mlp", "--dim", "64", "--blocks", "3", "--subset", "300",
       "--test-subset", "100", "--epochs", "2", "--data", data_dir(), "--chunk", "7", "--threads", "3"}};
  bool ok = true;
  std::string detail;
  for (std::size_t i = 0; i < commands.size(); ++i) {
    std::string files[2][2];
    for (int run = 0; run < 2; ++run) {
      const fs::path out = root / (std::to_string(i) + "_" + std::to_string(run));
      auto args = commands[i];
      args.insert(args.end(), {"--out", out.string()});
      std::ostringstream sink_out, sink_err;
      const int code = cli::run(args, sink_out, sink_err);
      if (code != 0) {
        ok = false;
        detail += " command " + std::to_string(i) + " failed: " + sink_err.str();
      }
      files[run][0] = slurp(out / "checkpoint.fhrr");
      files[run][1] = slurp(out / "metrics.jsonl");
    }
    const bool same = !files[0][0].empty() && files[0][0] == files[1][0] && files[0][1] == files[1][1];
    ok = ok && same;
    detail += " " + commands[i][4] + (same ? " identical" : " DIFFERENT");
  }
  fs::remove_all(root);
  return {ok, "two runs each of 3 train commands (checkpoint + metrics bytes):" + detail};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"vsa-algebra-suite", vsa_algebra},
      {"gradient-oracle", gradient_oracle},
      {"attention-oracle", attention_oracle},
      {"init-near-identity", near_identity},
      {"residual-trainability-contrast", residual_contrast},
      {"attention-classification", attention_classification},
      {"cross-attention-scaling", cross_scaling},
      {"auroc-exact", auroc_exact},
      {"toxicity-pipeline-synthetic", toxicity_pipeline},
      {"determinism", determinism},
  };
  std::set<std::size_t> only;
  if (const char* sel = std::getenv("FHRR_ACCEPTANCE_ONLY")) {
    std::stringstream ss(sel);
    for (std::string tok; std::getline(ss, tok, ',');)
      if (!tok.empty()) only.insert(static_cast<std::size_t>(std::stoul(tok)));
  }
  std::cerr << "data: " << data_dir() << ", threads: " << threads() << std::endl;
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (!only.empty() && !only.contains(i + 1)) continue;
    const auto& [name, fn] = criteria[i];
    std::cerr << "running " << i + 1 << " " << name << std::endl;
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failures += o.passed ? 0 : 1;
    std::cout << (o.passed ? "PASS " : "FAIL ") << i + 1 << " " << name << ": " << o.detail << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
