#include "fhrr/experiment.hpp"

#include <zlib.h>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <limits>

#include <nlohmann/json.hpp>

#include "fhrr/error.hpp"

namespace fhrr::train {

namespace fs = std::filesystem;

std::string_view metric_name(TaskKind t) noexcept { return t == TaskKind::Image ? "accuracy" : "auroc"; }

std::vector<std::string> split_names(TaskKind t) {
  if (t == TaskKind::Image) return {"train", "validation", "test"};
  return {"train", "validation", "test-iid", "test-1", "test-2"};
}

std::vector<std::string> test_split_names(TaskKind t) {
  if (t == TaskKind::Image) return {"test"};
  return {"test-iid", "test-1", "test-2"};
}

std::string crc32_hex(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  require(static_cast<bool>(is), ErrorKind::DataNotFound, path.string() + ": file not found");
  uLong crc = crc32(0L, Z_NULL, 0);
  std::vector<char> buf(1 << 16);
  while (is) {
    is.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    crc = crc32(crc, reinterpret_cast<const Bytef*>(buf.data()), static_cast<uInt>(is.gcount()));
  }
  char out[16];
  std::snprintf(out, sizeof out, "%08lx", crc);
  return out;
}

namespace {

template <typename D>
std::pair<D, D> split_tail(const D& all, Real fraction, auto slice) {
  const std::size_t n = all.size();
  const auto held = static_cast<std::size_t>(static_cast<Real>(n) * fraction);
  return {slice(all, 0, n - held), slice(all, n - held, n)};
}

io::GraphDataset graph_slice(const io::GraphDataset& g, std::size_t begin, std::size_t end, std::string split) {
  io::GraphDataset out;
  out.examples.assign(g.examples.begin() + static_cast<std::ptrdiff_t>(begin),
                      g.examples.begin() + static_cast<std::ptrdiff_t>(end));
  out.split = std::move(split);
  out.atom_features = g.atom_features;
  out.bond_features = g.bond_features;
  if (!out.examples.empty()) io::finalize(out);
  return out;
}

}  // namespace

Experiment::~Experiment() = default;

Experiment::Experiment(TrainConfig config) : config_(std::move(config)) {
  validate(config_);
  require(!config_.data.empty(), ErrorKind::ConfigInvalid, "data path is required");
  const Index n = config_.dim;
  Index input_rows = 1;
  std::vector<std::pair<std::string, std::unique_ptr<Task>>> tasks;

  if (config_.task == TaskKind::Image) {
    const fs::path dir = config_.data;
    require(fs::is_directory(dir), ErrorKind::DataNotFound, dir.string() + ": data directory not found");
    for (const char* stem : {"train-images-idx3-ubyte", "train-labels-idx1-ubyte", "t10k-images-idx3-ubyte",
                             "t10k-labels-idx1-ubyte"}) {
      const fs::path p = io::resolve_data_file(dir, stem);
      files_.push_back({p.string(), crc32_hex(p)});
    }
    const io::ImageDataset train = io::load_image_split(dir, "train", "train").head(config_.subset);
    io::ImageDataset test = io::load_image_split(dir, "t10k", "test").head(config_.test_subset);
    auto [fit, val] = split_tail(train, config_.val_fraction,
                                 [](const io::ImageDataset& d, std::size_t b, std::size_t e) { return d.slice(b, e); });
    fit.split = "train";
    val.split = "validation";
    require(fit.size() > 0, ErrorKind::ConfigInvalid, "training split is empty after the validation hold-out");

    const bool flat = config_.arch == nn::Architecture::DeepMlp;
    projector_ = std::make_unique<encode::RandomProjector>(flat ? encode::kImageSide * encode::kImageSide
                                                                : encode::kImageSide,
                                                           n, config_.seeds.projection);
    input_rows = flat ? 1 : encode::kImageSide;
    auto make = [&](io::ImageDataset d) {
      return flat ? make_image_flat_task(std::move(d), *projector_) : make_image_rows_task(std::move(d), *projector_);
    };
    tasks.emplace_back("train", make(std::move(fit)));
    if (val.size() > 0) tasks.emplace_back("validation", make(std::move(val)));
    tasks.emplace_back("test", make(std::move(test)));
    codebook_ = std::make_unique<nn::Codebook>(encode::make_codebook(config_.seeds.codebook, 10, n));
  } else {
    std::vector<io::GraphDataset> splits;
    const auto tests = test_split_names(TaskKind::Graph);
    if (config_.data == "synthetic") {
      const std::size_t train_count = config_.subset ? config_.subset : kSyntheticTrain;
      const std::size_t test_count = config_.test_subset ? config_.test_subset : kSyntheticTest;
      splits.push_back(io::make_synthetic_graphs(config_.seeds.data, train_count, "train", 0));
      for (int shift = 0; shift < 3; ++shift)
        splits.push_back(io::make_synthetic_graphs(config_.seeds.data + 1 + static_cast<std::uint64_t>(shift),
                                                   test_count, tests[static_cast<std::size_t>(shift)], shift));
      files_.push_back({"synthetic", "generated"});
    } else {
      const fs::path dir = config_.data;
      require(fs::is_directory(dir), ErrorKind::DataNotFound, dir.string() + ": data directory not found");
      for (const std::string name : {"train", "test-iid", "test-1", "test-2"}) {
        const fs::path p = dir / (name + ".jsonl");
        // test-1 and test-2 (out-of-distribution splits) are optional.
        if (name != "train" && name != "test-iid" && !fs::exists(p)) continue;
        io::GraphDataset g = io::load_graph_jsonl(p, name);
        files_.push_back({p.string(), crc32_hex(p)});
        if (name == "train" && config_.subset) g = graph_slice(g, 0, std::min(config_.subset, g.size()), "train");
        if (name != "train" && config_.test_subset)
          g = graph_slice(g, 0, std::min(config_.test_subset, g.size()), name);
        splits.push_back(std::move(g));
      }
    }
    Index max_edges = 0;
    for (const auto& g : splits) {
      require(g.atom_features == splits.front().atom_features && g.bond_features == splits.front().bond_features,
              ErrorKind::Schema, "split '" + g.split + "' has different feature widths than the training split");
      max_edges = std::max(max_edges, g.max_edges);
    }
    if (config_.max_edges == 0) config_.max_edges = max_edges;
    require(config_.max_edges > 0, ErrorKind::Schema, "graph data contains no bonds");

    atom_projector_ =
        std::make_unique<encode::RandomProjector>(splits.front().atom_features, n, config_.seeds.projection);
    bond_projector_ =
        std::make_unique<encode::RandomProjector>(splits.front().bond_features, n, config_.seeds.projection + 1);
    const Symbol base = random_symbol(config_.seeds.projection + 2, n);
    input_rows = config_.max_edges;
    auto make = [&](io::GraphDataset d) {
      return make_graph_task(std::move(d), *atom_projector_, *bond_projector_, base, config_.max_edges,
                             config_.position, config_.key_mask);
    };
    const io::GraphDataset& train = splits.front();
    const auto held = static_cast<std::size_t>(static_cast<Real>(train.size()) * config_.val_fraction);
    require(train.size() > held, ErrorKind::ConfigInvalid, "training split is empty after the validation hold-out");
    tasks.emplace_back("train", make(graph_slice(train, 0, train.size() - held, "train")));
    if (held > 0)
      tasks.emplace_back("validation", make(graph_slice(train, train.size() - held, train.size(), "validation")));
    for (std::size_t s = 1; s < splits.size(); ++s) {
      std::string name = splits[s].split;
      tasks.emplace_back(std::move(name), make(std::move(splits[s])));
    }
    codebook_ = std::make_unique<nn::Codebook>(encode::make_codebook(config_.seeds.codebook, 2, n));
  }

  tasks_ = std::move(tasks);
  model_ = std::make_unique<nn::Model>(model_spec(config_, input_rows));
  trainer_ = std::make_unique<Trainer>(*model_, *codebook_, config_);
}

bool Experiment::has_split(const std::string& split) const {
  for (const auto& [name, t] : tasks_)
    if (name == split) return true;
  return false;
}

const Task& Experiment::task(const std::string& split) const {
  for (const auto& [name, t] : tasks_)
    if (name == split) return *t;
  fail(ErrorKind::Contract, "unknown split '" + split + "'");
}

Real Experiment::metric(const EvalResult& r) const {
  if (config_.task == TaskKind::Image) return r.accuracy;
  bool pos = false, neg = false;
  for (int l : r.labels) (l == 1 ? pos : neg) = true;
  if (!pos || !neg) return std::numeric_limits<Real>::quiet_NaN();
  return evaluate_auroc(r.confidences, r.labels);
}

Real Experiment::evaluate(const std::string& split) const { return metric(trainer_->evaluate(task(split))); }

std::vector<EpochRecord> Experiment::fit(const std::function<void(const EpochRecord&)>& on_epoch) {
  std::vector<EpochRecord> records;
  const Task& train = task("train");
  for (Index e = 0; e < config_.epochs; ++e) {
    const auto t0 = std::chrono::steady_clock::now();
    EpochRecord r;
    r.epoch = e + 1;
    r.loss = trainer_->train_epoch(train, static_cast<std::size_t>(e));
    if (has_split("validation")) {
      const EvalResult v = trainer_->evaluate(task("validation"));
      r.val_loss = v.mean_loss;
      r.val_metric = metric(v);
    }
    for (const auto& name : test_split_names(config_.task))
      if (has_split(name)) r.test.push_back({name, evaluate(name)});
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (on_epoch) on_epoch(r);
    records.push_back(std::move(r));
  }
  return records;
}

ckpt::Checkpoint Experiment::checkpoint() const {
  const auto params = model_->parameters();
  return ckpt::snapshot(to_json(config_), params);
}

void Experiment::restore(const ckpt::Checkpoint& c) {
  const TrainConfig stored = config_from_checkpoint(c);
  auto check = [](bool ok, const std::string& what) { require(ok, ErrorKind::CheckpointMismatch, what); };
  check(stored.task == config_.task, "checkpoint task differs from the config");
  check(stored.arch == config_.arch, "checkpoint architecture differs from the config");
  check(stored.dim == config_.dim,
        "checkpoint dim " + std::to_string(stored.dim) + " differs from config dim " + std::to_string(config_.dim));
  const auto params = model_->parameters();
  ckpt::restore(c, params);
}

TrainConfig config_from_checkpoint(const ckpt::Checkpoint& c) {
  try {
    return config_from_json(c.metadata);
  } catch (const Error& e) {
    fail(ErrorKind::CheckpointMismatch, std::string("checkpoint metadata: ") + e.what());
  }
}

}  // namespace fhrr::train
