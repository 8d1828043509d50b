#include "fhrr_cli/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "fhrr/error.hpp"
#include "fhrr/experiment.hpp"
#include "fhrr/properties.hpp"

namespace fhrr::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

struct Failure {
  int code;
  std::string_view cls;
};

Failure classify(ErrorKind k) {
  switch (k) {
    case ErrorKind::ConfigInvalid: return {kConfigInvalid, "CONFIG_INVALID"};
    case ErrorKind::DataNotFound: return {kDataNotFound, "DATA_NOT_FOUND"};
    case ErrorKind::Schema:
    case ErrorKind::Format:
    case ErrorKind::Capacity:
    case ErrorKind::DegenerateInput: return {kSchema, "SCHEMA_ERROR"};
    case ErrorKind::CheckpointMismatch: return {kCheckpoint, "CHECKPOINT_MISMATCH"};
    case ErrorKind::TrainingDiverged: return {kDiverged, "TRAINING_DIVERGED"};
    default: return {kInternal, "INTERNAL_ERROR"};
  }
}

int report(std::ostream& err, Failure f, const std::string& detail) {
  std::string line = detail;
  std::replace(line.begin(), line.end(), '\n', ' ');
  err << f.cls << ": " << line << '\n';
  return f.code;
}

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

json number(Real v) { return std::isfinite(v) ? json(v) : json(nullptr); }

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream f(p, std::ios::trunc);
  require(static_cast<bool>(f), ErrorKind::DataNotFound, p.string() + ": cannot open for writing");
  return f;
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
  train::TrainConfig c;
  std::string task = "image", arch = "deep-mlp", reduction = "trainable", position = "bundle";
  bool no_skip = false, frozen_bias = false;
  std::string config;
  std::uint64_t seed = 1;
  std::optional<std::uint64_t> seed_weights, seed_codebook, seed_projection, seed_shuffle, seed_data;
};

void add_model_options(CLI::App* cmd, TrainArgs& a, bool for_eval) {
  auto* arch = cmd->add_option("--arch", a.arch, "deep-mlp | self-attention | cross-attention")
                   ->check(CLI::IsMember({"deep-mlp", "self-attention", "cross-attention"}));
  auto* dim = cmd->add_option("--dim", a.c.dim, "symbol dimensionality n");
  auto* q = cmd->add_option("--queries", a.c.queries, "cross-attention inducing points q");
  auto* blocks = cmd->add_option("--blocks", a.c.blocks, "residual blocks in the deep MLP");
  if (!for_eval) {
    arch->capture_default_str();
    dim->capture_default_str();
    q->capture_default_str();
    blocks->capture_default_str();
  }
}

void add_train_options(CLI::App* cmd, TrainArgs& a) {
  // Later occurrences win, so config values placed before the command-line
  // flags are overridden by them.
  cmd->option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  cmd->add_option("--config", a.config, "TOML/INI file with the same keys as the long flags; flags win");
  cmd->add_option("--task", a.task, "image | graph")->check(CLI::IsMember({"image", "graph"}))->capture_default_str();
  add_model_options(cmd, a, false);
  cmd->add_flag("--no-skip", a.no_skip, "remove binding skip connections");
  cmd->add_option("--epochs", a.c.epochs)->capture_default_str();
  cmd->add_option("--lr", a.c.lr)->capture_default_str();
  cmd->add_option("--batch", a.c.batch)->capture_default_str();
  cmd->add_option("--beta1", a.c.beta1)->capture_default_str();
  cmd->add_option("--beta2", a.c.beta2)->capture_default_str();
  cmd->add_option("--eps", a.c.eps)->capture_default_str();
  cmd->add_option("--seed", a.seed, "base seed K: weights K, codebook K+1, projection K+2, shuffle K+3, data K+4")
      ->capture_default_str();
  cmd->add_option("--seed-weights", a.seed_weights);
  cmd->add_option("--seed-codebook", a.seed_codebook);
  cmd->add_option("--seed-projection", a.seed_projection);
  cmd->add_option("--seed-shuffle", a.seed_shuffle);
  cmd->add_option("--seed-data", a.seed_data);
  cmd->add_option("--init-scale", a.c.init_scale, "W_p std times sqrt(n_in)")->capture_default_str();
  cmd->add_flag("--frozen-bias", a.frozen_bias, "keep the complex bias at 1 + 0i");
  cmd->add_option("--reduction", a.reduction, "trainable | bundle")
      ->check(CLI::IsMember({"trainable", "bundle"}))
      ->capture_default_str();
  cmd->add_flag("--query-projection", a.c.query_projection, "project cross-attention inducing points");
  cmd->add_flag("--key-mask", a.c.key_mask, "mask padded graph edges out of attention");
  cmd->add_option("--position", a.position, "bundle | bind")
      ->check(CLI::IsMember({"bundle", "bind"}))
      ->capture_default_str();
  cmd->add_option("--data", a.c.data, "image: IDX directory; graph: JSONL directory or 'synthetic'");
  cmd->add_option("--out", a.c.out, "output directory")->capture_default_str();
  cmd->add_option("--subset", a.c.subset, "training examples kept (0 = all)")->capture_default_str();
  cmd->add_option("--test-subset", a.c.test_subset, "test examples kept (0 = all)")->capture_default_str();
  cmd->add_option("--val-fraction", a.c.val_fraction)->capture_default_str();
  cmd->add_option("--max-edges", a.c.max_edges, "graph capacity (0 = from data)")->capture_default_str();
  cmd->add_option("--chunk", a.c.chunk, "examples per tape")->capture_default_str();
  cmd->add_option("--threads", a.c.threads)->capture_default_str();
}

train::TrainConfig resolve(const TrainArgs& a) {
  train::TrainConfig c = a.c;
  c.task = train::parse_task(a.task);
  c.arch = train::parse_arch(a.arch);
  c.reduction = train::parse_reduction(a.reduction);
  c.position = train::parse_position(a.position);
  c.skip = !a.no_skip;
  c.bias_trainable = !a.frozen_bias;
  c.seeds = {a.seed_weights.value_or(a.seed), a.seed_codebook.value_or(a.seed + 1),
             a.seed_projection.value_or(a.seed + 2), a.seed_shuffle.value_or(a.seed + 3),
             a.seed_data.value_or(a.seed + 4)};
  return c;
}

// Turns `key = value` config items into command-line tokens for `cmd`.
std::vector<std::string> config_tokens(const CLI::App& cmd, const std::string& path) {
  std::vector<std::string> tokens;
  for (const CLI::ConfigItem& item : CLI::ConfigTOML().from_file(path)) {
    if (item.name == "++" || item.name == "--") continue;  // section markers
    if (!item.parents.empty() && item.parents != std::vector<std::string>{cmd.get_name()})
      throw CLI::ConfigError("unknown section " + item.parents.front() + " in " + path);
    const CLI::Option* opt = cmd.get_option_no_throw("--" + item.name);
    if (opt == nullptr || item.name == "config") throw CLI::ConfigError::Extras(item.name);
    if (opt->get_type_size() == 0) {
      if (item.inputs.size() != 1) throw CLI::ConversionError(item.name, item.inputs);
      if (CLI::detail::to_flag_value(item.inputs.front()) > 0) tokens.push_back("--" + item.name);
      continue;
    }
    tokens.push_back("--" + item.name);
    tokens.insert(tokens.end(), item.inputs.begin(), item.inputs.end());
  }
  return tokens;
}

int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  const train::TrainConfig c = resolve(a);
  train::validate(c);
  require(!c.out.empty(), ErrorKind::ConfigInvalid, "--out is required");
  const std::string started = utc_now();
  const auto t0 = std::chrono::steady_clock::now();
  train::Experiment ex(c);

  const fs::path dir = c.out;
  fs::create_directories(dir);
  const fs::path metrics_path = dir / "metrics.jsonl", timings_path = dir / "timings.jsonl",
                 ckpt_path = dir / "checkpoint.fhrr", manifest_path = dir / "manifest.json";
  std::ofstream metrics = open_out(metrics_path), timings = open_out(timings_path);
  const std::string metric(train::metric_name(c.task));
  json epoch_seconds = json::array();

  ex.fit([&](const train::EpochRecord& r) {
    json m;
    m["epoch"] = r.epoch;
    m["loss"] = number(r.loss);
    m[metric] = r.test.empty() ? json(nullptr) : number(r.test.front().value);
    if (ex.has_split("validation")) {
      m["val_loss"] = number(r.val_loss);
      m["val_" + metric] = number(r.val_metric);
    }
    json splits = json::object();
    for (const auto& s : r.test) splits[s.split] = number(s.value);
    m["test"] = std::move(splits);
    metrics << m.dump() << '\n' << std::flush;
    timings << json{{"epoch", r.epoch}, {"seconds", r.seconds}}.dump() << '\n' << std::flush;
    epoch_seconds.push_back(r.seconds);
    err << "epoch " << r.epoch << '/' << c.epochs << " loss " << r.loss;
    for (const auto& s : r.test) err << ' ' << s.split << ' ' << metric << ' ' << s.value;
    err << " (" << std::fixed << std::setprecision(1) << r.seconds << " s)" << std::defaultfloat
        << std::setprecision(6) << '\n';
    out << m.dump() << '\n';
  });

  ckpt::save(ckpt_path, ex.checkpoint());

  json manifest;
  manifest["config"] = json::parse(train::to_json(ex.config()));
  json files = json::array();
  for (const auto& f : ex.data_files()) files.push_back({{"path", f.path}, {"crc32", f.crc32}});
  manifest["data"] = std::move(files);
  manifest["artifacts"] = {{"checkpoint", ckpt_path.string()},
                           {"metrics", metrics_path.string()},
                           {"timings", timings_path.string()}};
  manifest["wall_clock"] = {
      {"started", started},
      {"finished", utc_now()},
      {"seconds", std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()},
      {"epoch_seconds", std::move(epoch_seconds)},
      {"threads", c.threads}};
  open_out(manifest_path) << manifest.dump(2) << '\n';
  return kOk;
}

// ---------------------------------------------------------------------------
// eval

struct EvalArgs {
  std::string checkpoint;
  std::optional<std::string> data;
  std::vector<std::string> splits;
  std::optional<Index> dim, queries, blocks;
  std::optional<std::string> arch;
  std::optional<int> threads;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  ckpt::Checkpoint ck;
  try {
    ck = ckpt::load(a.checkpoint);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::Format) fail(ErrorKind::CheckpointMismatch, a.checkpoint + ": " + e.what());
    throw;
  }
  train::TrainConfig c = train::config_from_checkpoint(ck);
  if (a.data) c.data = *a.data;
  if (a.dim) c.dim = *a.dim;
  if (a.queries) c.queries = *a.queries;
  if (a.blocks) c.blocks = *a.blocks;
  if (a.arch) c.arch = train::parse_arch(*a.arch);
  if (a.threads) c.threads = *a.threads;
  const auto known = train::split_names(c.task);
  std::vector<std::string> splits = a.splits.empty() ? train::test_split_names(c.task) : a.splits;
  for (const auto& s : splits)
    if (std::find(known.begin(), known.end(), s) == known.end()) throw UsageError("unknown split '" + s + "'");

  train::Experiment ex(c);
  ex.restore(ck);
  json r;
  r["task"] = train::to_string(c.task);
  r["metric"] = train::metric_name(c.task);
  json values = json::object();
  for (const auto& s : splits) {
    if (!ex.has_split(s)) {
      // Optional out-of-distribution files may be absent.
      if (a.splits.empty()) continue;
      fail(ErrorKind::DataNotFound, "split '" + s + "' is not available in " + c.data);
    }
    values[s] = number(ex.evaluate(s));
  }
  r["splits"] = std::move(values);
  out << r.dump() << '\n';
  return kOk;
}

// ---------------------------------------------------------------------------
// props

int cmd_props(const props::Options& o, std::ostream& out) {
  bool ok = true;
  for (const auto& r : props::run_all(o)) {
    out << (r.passed ? "PASS " : "FAIL ") << r.suite << '/' << r.name << ": " << r.detail << '\n';
    ok = ok && r.passed;
  }
  return ok ? kOk : kPropsFailed;
}

// ---------------------------------------------------------------------------
// bench

struct BenchArgs {
  std::string arch = "both";
  std::vector<Index> sizes{32, 64, 128, 256, 512, 1024};
  Index queries = 32;
  Index dim = 256;
  int repeats = 3;
  std::uint64_t seed = 1;
  std::string out;
};

int cmd_bench(const BenchArgs& a, std::ostream& out) {
  std::vector<nn::Architecture> archs;
  if (a.arch != "cross-attention") archs.push_back(nn::Architecture::SelfAttention);
  if (a.arch != "self-attention") archs.push_back(nn::Architecture::CrossAttention);
  std::ofstream file;
  if (!a.out.empty()) file = open_out(a.out);
  for (const auto arch : archs) {
    for (const Index m : a.sizes) {
      const BenchRecord b = bench_attention(arch, m, a.queries, a.dim, a.repeats, a.seed);
      const json r{{"arch", nn::to_string(b.arch)}, {"m", b.m},        {"q", b.q},
                   {"n", b.n},                      {"seconds", b.seconds}, {"score_entries", b.score_entries}};
      out << r.dump() << '\n' << std::flush;
      if (file) file << r.dump() << '\n';
    }
  }
  return kOk;
}

}  // namespace

BenchRecord bench_attention(nn::Architecture arch, Index m, Index q, Index n, int repeats, std::uint64_t seed) {
  require(arch != nn::Architecture::DeepMlp, ErrorKind::ConfigInvalid, "bench: attention architectures only");
  require(m > 0 && q > 0 && n > 0 && repeats > 0, ErrorKind::ConfigInvalid, "bench: sizes must be positive");
  Rng rng(seed);
  std::unique_ptr<nn::SelfAttentionModule> self;
  std::unique_ptr<nn::CrossAttentionModule> cross;
  if (arch == nn::Architecture::SelfAttention)
    self = std::make_unique<nn::SelfAttentionModule>("self", n, rng);
  else
    cross = std::make_unique<nn::CrossAttentionModule>("cross", n, q, rng);
  const SymbolBatch input = random_symbols(rng, m, n);
  auto run_once = [&] { return self ? self->forward(input) : cross->forward(input); };
  run_once();
  std::vector<double> times;
  for (int r = 0; r < repeats; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    const SymbolBatch y = run_once();
    times.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    require(y.count() > 0, ErrorKind::Contract, "bench: empty output");
  }
  std::sort(times.begin(), times.end());
  BenchRecord b;
  b.arch = arch;
  b.m = m;
  b.q = self ? 0 : q;
  b.n = n;
  b.seconds = times[times.size() / 2];
  b.score_entries = self ? nn::SelfAttentionModule::score_entries(m) : cross->score_entries(m);
  return b;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Trainable FHRR vector-symbolic networks", "fhrr"};
  app.require_subcommand(1);

  TrainArgs train_args;
  auto* train = app.add_subcommand("train", "train a model and write checkpoint, metrics, and manifest");
  add_train_options(train, train_args);

  EvalArgs eval_args;
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on one or more splits");
  eval->add_option("--checkpoint", eval_args.checkpoint, "checkpoint file")->required();
  eval->add_option("--data", eval_args.data, "override the data path stored in the checkpoint");
  eval->add_option("--split", eval_args.splits, "split name (repeatable); default: the test splits");
  eval->add_option("--dim", eval_args.dim);
  eval->add_option("--queries", eval_args.queries);
  eval->add_option("--blocks", eval_args.blocks);
  eval->add_option("--arch", eval_args.arch)
      ->check(CLI::IsMember({"deep-mlp", "self-attention", "cross-attention"}));
  eval->add_option("--threads", eval_args.threads);

  props::Options prop_args;
  auto* prop = app.add_subcommand("props", "run the algebra, layer, and gradient invariant suites");
  prop->add_option("--seed", prop_args.seed)->capture_default_str();
  prop->add_option("--n", prop_args.n, "dimensionality")->check(CLI::PositiveNumber)->capture_default_str();
  prop->add_option("--trials", prop_args.trials)->check(CLI::PositiveNumber)->capture_default_str();
  prop->add_option("--gradient-cases", prop_args.gradient_cases)->check(CLI::PositiveNumber)->capture_default_str();

  BenchArgs bench_args;
  auto* bench = app.add_subcommand("bench", "time self- vs cross-attention forward passes over input counts");
  bench->add_option("--arch", bench_args.arch)
      ->check(CLI::IsMember({"self-attention", "cross-attention", "both"}))
      ->capture_default_str();
  bench->add_option("--sizes", bench_args.sizes, "input counts m")->delimiter(',');
  bench->add_option("--queries", bench_args.queries)->capture_default_str();
  bench->add_option("--dim", bench_args.dim)->capture_default_str();
  bench->add_option("--repeats", bench_args.repeats)->capture_default_str();
  bench->add_option("--seed", bench_args.seed)->capture_default_str();
  bench->add_option("--out", bench_args.out, "also write records to this file");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
    if (*train && !train_args.config.empty()) {
      std::vector<std::string> expanded{args.front()};
      const auto extra = config_tokens(*train, train_args.config);
      expanded.insert(expanded.end(), extra.begin(), extra.end());
      expanded.insert(expanded.end(), args.begin() + 1, args.end());
      app.clear();
      train_args = TrainArgs{};
      app.parse(std::vector<std::string>(expanded.rbegin(), expanded.rend()));
    }
  } catch (const CLI::CallForHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ConversionError& e) {
    return report(err, {kConfigInvalid, "CONFIG_INVALID"}, e.what());
  } catch (const CLI::ValidationError& e) {
    return report(err, {kConfigInvalid, "CONFIG_INVALID"}, e.what());
  } catch (const CLI::FileError& e) {
    return report(err, {kConfigInvalid, "CONFIG_INVALID"}, e.what());
  } catch (const CLI::ConfigError& e) {
    return report(err, {kConfigInvalid, "CONFIG_INVALID"}, e.what());
  } catch (const CLI::ParseError& e) {
    return report(err, {kUsage, "USAGE_ERROR"}, e.what());
  }

  try {
    if (*train) return cmd_train(train_args, out, err);
    if (*eval) return cmd_eval(eval_args, out);
    if (*prop) return cmd_props(prop_args, out);
    return cmd_bench(bench_args, out);
  } catch (const UsageError& e) {
    return report(err, {kUsage, "USAGE_ERROR"}, e.what());
  } catch (const Error& e) {
    return report(err, classify(e.kind()), e.what());
  } catch (const fs::filesystem_error& e) {
    return report(err, {kDataNotFound, "DATA_NOT_FOUND"}, e.what());
  } catch (const std::exception& e) {
    return report(err, {kInternal, "INTERNAL_ERROR"}, e.what());
  }
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace fhrr::cli
