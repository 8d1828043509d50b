#include "fhrr/training.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <numeric>
#include <thread>

#include "fhrr/error.hpp"
#include <nlohmann/json.hpp>

namespace fhrr::train {

namespace {

// Runs fn(0..count-1) on up to `threads` workers; every index runs exactly once.
template <typename Fn>
void parallel_for(std::size_t count, int threads, Fn&& fn) {
  const auto workers = static_cast<std::size_t>(std::max(1, threads));
  if (workers == 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < std::min(workers, count); ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < count; i = next++) {
          try {
            fn(i);
          } catch (...) {
            std::lock_guard lock(error_mutex);
            if (!error) error = std::current_exception();
          }
        }
      });
    }
  }
  if (error) std::rethrow_exception(error);
}

class ImageFlatTask final : public Task {
 public:
  ImageFlatTask(io::ImageDataset data, const encode::RandomProjector& p) : data_(std::move(data)), projector_(p) {
    require(p.input_dim() == encode::kImageSide * encode::kImageSide, ErrorKind::Shape,
            "flat image task needs a 784-input projector");
  }
  std::size_t size() const override { return data_.size(); }
  Index rows() const override { return 1; }
  Index dim() const override { return projector_.output_dim(); }
  int label(std::size_t i) const override { return data_.labels[i]; }
  void encode(std::size_t i, Eigen::Ref<Matrix> out, RowVector*) const override {
    out.row(0) = encode::encode_image_flat(projector_, data_.image(i)).phases();
  }

 private:
  io::ImageDataset data_;
  const encode::RandomProjector& projector_;
};

class ImageRowsTask final : public Task {
 public:
  ImageRowsTask(io::ImageDataset data, const encode::RandomProjector& p) : data_(std::move(data)), projector_(p) {
    require(p.input_dim() == encode::kImageSide, ErrorKind::Shape, "row image task needs a 28-input projector");
  }
  std::size_t size() const override { return data_.size(); }
  Index rows() const override { return encode::kImageSide; }
  Index dim() const override { return projector_.output_dim(); }
  int label(std::size_t i) const override { return data_.labels[i]; }
  void encode(std::size_t i, Eigen::Ref<Matrix> out, RowVector*) const override {
    out = encode::encode_image_rows(projector_, data_.image(i), encode::DegeneratePolicy::ZeroSymbol).phases();
  }

 private:
  io::ImageDataset data_;
  const encode::RandomProjector& projector_;
};

class GraphTask final : public Task {
 public:
  GraphTask(io::GraphDataset data, const encode::RandomProjector& atoms, const encode::RandomProjector& bonds,
            Symbol base, Index max_edges, encode::PositionMode mode, bool masks)
      : data_(std::move(data)),
        atoms_(atoms),
        bonds_(bonds),
        base_(std::move(base)),
        max_edges_(max_edges),
        mode_(mode),
        masks_(masks) {
    require(data_.max_edges <= max_edges_, ErrorKind::Capacity,
            "graph split '" + data_.split + "' has " + std::to_string(data_.max_edges) + " bonds, capacity is " +
                std::to_string(max_edges_));
  }
  std::size_t size() const override { return data_.size(); }
  Index rows() const override { return max_edges_; }
  Index dim() const override { return base_.dim(); }
  int label(std::size_t i) const override { return data_.examples[i].label; }
  bool has_masks() const override { return masks_; }
  void encode(std::size_t i, Eigen::Ref<Matrix> out, RowVector* mask) const override {
    auto enc = encode::encode_graph(atoms_, bonds_, base_, data_.examples[i], max_edges_, mode_);
    out = enc.rows.phases();
    if (mask) *mask = std::move(enc.mask);
  }

 private:
  io::GraphDataset data_;
  const encode::RandomProjector& atoms_;
  const encode::RandomProjector& bonds_;
  Symbol base_;
  Index max_edges_;
  encode::PositionMode mode_;
  bool masks_;
};

std::size_t chunk_count(std::size_t n, Index chunk) {
  const auto c = static_cast<std::size_t>(chunk);
  return (n + c - 1) / c;
}

}  // namespace

std::unique_ptr<Task> make_image_flat_task(io::ImageDataset data, const encode::RandomProjector& projector) {
  return std::make_unique<ImageFlatTask>(std::move(data), projector);
}

std::unique_ptr<Task> make_image_rows_task(io::ImageDataset data, const encode::RandomProjector& projector) {
  return std::make_unique<ImageRowsTask>(std::move(data), projector);
}

std::unique_ptr<Task> make_graph_task(io::GraphDataset data, const encode::RandomProjector& atoms,
                                      const encode::RandomProjector& bonds, Symbol position_base, Index max_edges,
                                      encode::PositionMode mode, bool masks) {
  return std::make_unique<GraphTask>(std::move(data), atoms, bonds, std::move(position_base), max_edges, mode, masks);
}

nn::ModelSpec model_spec(const TrainConfig& c, Index input_rows) {
  nn::ModelSpec s;
  s.arch = c.arch;
  s.dim = c.dim;
  s.input_rows = input_rows;
  s.queries = c.queries;
  s.blocks = c.blocks;
  s.skip = c.skip;
  s.reduction = c.reduction;
  s.query_projection = c.query_projection;
  s.init.weight_scale = c.init_scale;
  s.init.bias_trainable = c.bias_trainable;
  s.seed = c.seeds.weights;
  return s;
}

std::string_view to_string(TaskKind t) noexcept { return t == TaskKind::Image ? "image" : "graph"; }

std::string_view to_string(nn::Reduction r) noexcept { return r == nn::Reduction::Trainable ? "trainable" : "bundle"; }

std::string_view to_string(encode::PositionMode p) noexcept {
  return p == encode::PositionMode::Bundle ? "bundle" : "bind";
}

namespace {

template <typename E, std::size_t N>
E parse_enum(const std::string& field, const std::string& value, const E (&options)[N]) {
  for (E e : options)
    if (value == to_string(e)) return e;
  fail(ErrorKind::ConfigInvalid, field + ": unknown value '" + value + "'");
}

constexpr TaskKind kTasks[] = {TaskKind::Image, TaskKind::Graph};
constexpr nn::Architecture kArchs[] = {nn::Architecture::DeepMlp, nn::Architecture::SelfAttention,
                                       nn::Architecture::CrossAttention};
constexpr nn::Reduction kReductions[] = {nn::Reduction::Trainable, nn::Reduction::Bundle};
constexpr encode::PositionMode kPositions[] = {encode::PositionMode::Bundle, encode::PositionMode::Bind};

}  // namespace

TaskKind parse_task(const std::string& s) { return parse_enum("task", s, kTasks); }
nn::Architecture parse_arch(const std::string& s) { return parse_enum("arch", s, kArchs); }
nn::Reduction parse_reduction(const std::string& s) { return parse_enum("reduction", s, kReductions); }
encode::PositionMode parse_position(const std::string& s) { return parse_enum("position", s, kPositions); }

void validate(const TrainConfig& c) {
  auto check = [](bool ok, const std::string& msg) { require(ok, ErrorKind::ConfigInvalid, msg); };
  check(c.dim > 0, "dim must be positive");
  check(c.blocks > 0 || c.arch != nn::Architecture::DeepMlp, "blocks must be positive");
  check(c.queries > 0 || c.arch != nn::Architecture::CrossAttention, "queries must be positive");
  check(c.batch > 0, "batch must be positive");
  check(c.chunk > 0, "chunk must be positive");
  check(c.epochs >= 0, "epochs must be non-negative");
  check(std::isfinite(c.lr) && c.lr >= 0, "lr must be finite and non-negative");
  check(c.beta1 >= 0 && c.beta1 < 1, "beta1 must lie in [0, 1)");
  check(c.beta2 >= 0 && c.beta2 < 1, "beta2 must lie in [0, 1)");
  check(c.eps > 0, "eps must be positive");
  check(std::isfinite(c.init_scale) && c.init_scale > 0, "init_scale must be positive");
  check(c.val_fraction >= 0 && c.val_fraction < 1, "val_fraction must lie in [0, 1)");
  check(c.threads > 0, "threads must be positive");
  check(c.max_edges >= 0, "max_edges must be non-negative");
  check(c.task == TaskKind::Graph || !c.key_mask, "key_mask applies to the graph task only");
  check(c.task != TaskKind::Graph || c.arch != nn::Architecture::DeepMlp,
        "the graph task needs an attention architecture");
}

std::string to_json(const TrainConfig& c) {
  nlohmann::ordered_json j;
  j["task"] = to_string(c.task);
  j["arch"] = nn::to_string(c.arch);
  j["dim"] = c.dim;
  j["queries"] = c.queries;
  j["blocks"] = c.blocks;
  j["skip"] = c.skip;
  j["batch"] = c.batch;
  j["epochs"] = c.epochs;
  j["lr"] = c.lr;
  j["beta1"] = c.beta1;
  j["beta2"] = c.beta2;
  j["eps"] = c.eps;
  j["seeds"] = {{"weights", c.seeds.weights},
                {"codebook", c.seeds.codebook},
                {"projection", c.seeds.projection},
                {"shuffle", c.seeds.shuffle},
                {"data", c.seeds.data}};
  j["init_scale"] = c.init_scale;
  j["bias_trainable"] = c.bias_trainable;
  j["reduction"] = to_string(c.reduction);
  j["query_projection"] = c.query_projection;
  j["key_mask"] = c.key_mask;
  j["position"] = to_string(c.position);
  j["subset"] = c.subset;
  j["test_subset"] = c.test_subset;
  j["val_fraction"] = c.val_fraction;
  j["chunk"] = c.chunk;
  j["max_edges"] = c.max_edges;
  j["data"] = c.data;
  return j.dump(2);
}

TrainConfig config_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::ConfigInvalid, std::string("config is not valid JSON: ") + e.what());
  }
  require(j.is_object(), ErrorKind::ConfigInvalid, "config must be a JSON object");
  TrainConfig c;
  try {
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    if (j.contains("task")) c.task = parse_task(j.at("task").get<std::string>());
    if (j.contains("arch")) c.arch = parse_arch(j.at("arch").get<std::string>());
    if (j.contains("reduction")) c.reduction = parse_reduction(j.at("reduction").get<std::string>());
    if (j.contains("position")) c.position = parse_position(j.at("position").get<std::string>());
    get("dim", c.dim);
    get("queries", c.queries);
    get("blocks", c.blocks);
    get("skip", c.skip);
    get("batch", c.batch);
    get("epochs", c.epochs);
    get("lr", c.lr);
    get("beta1", c.beta1);
    get("beta2", c.beta2);
    get("eps", c.eps);
    get("init_scale", c.init_scale);
    get("bias_trainable", c.bias_trainable);
    get("query_projection", c.query_projection);
    get("key_mask", c.key_mask);
    get("subset", c.subset);
    get("test_subset", c.test_subset);
    get("val_fraction", c.val_fraction);
    get("chunk", c.chunk);
    get("max_edges", c.max_edges);
    get("data", c.data);
    if (j.contains("seeds")) {
      const auto& sd = j.at("seeds");
      auto seed = [&](const char* key, std::uint64_t& f) {
        if (sd.contains(key)) f = sd.at(key).get<std::uint64_t>();
      };
      seed("weights", c.seeds.weights);
      seed("codebook", c.seeds.codebook);
      seed("projection", c.seeds.projection);
      seed("shuffle", c.seeds.shuffle);
      seed("data", c.seeds.data);
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::ConfigInvalid, std::string("config field has the wrong type: ") + e.what());
  }
  validate(c);
  return c;
}

// ---------------------------------------------------------------------------
// Adam

Adam::Adam(std::span<ad::Parameter* const> params, const AdamConfig& config) : config_(config) {
  for (ad::Parameter* p : params) {
    if (!p->trainable) continue;
    Moments m{p, {}, {}, {}, {}};
    if (p->is_complex()) {
      m.mc = CMatrix::Zero(p->rows(), p->cols());
      m.vc = CMatrix::Zero(p->rows(), p->cols());
    } else {
      m.m = Matrix::Zero(p->rows(), p->cols());
      m.v = Matrix::Zero(p->rows(), p->cols());
    }
    moments_.push_back(std::move(m));
  }
}

namespace {

using Flat = Eigen::Map<Eigen::Array<Real, Eigen::Dynamic, 1>>;
using ConstFlat = Eigen::Map<const Eigen::Array<Real, Eigen::Dynamic, 1>>;

// std::complex<Real> is layout-compatible with Real[2].
Flat flat(CMatrix& m) { return {reinterpret_cast<Real*>(m.data()), 2 * m.size()}; }
ConstFlat flat(const CMatrix& m) { return {reinterpret_cast<const Real*>(m.data()), 2 * m.size()}; }
Flat flat(Matrix& m) { return {m.data(), m.size()}; }
ConstFlat flat(const Matrix& m) { return {m.data(), m.size()}; }

}  // namespace

void Adam::step(const ad::Gradient& grad) {
  require(grad.all_finite(), ErrorKind::TrainingDiverged,
          "non-finite gradient at optimizer step " + std::to_string(step_ + 1));
  ++step_;
  const Real t = static_cast<Real>(step_);
  const Real c1 = Real(1) - std::pow(config_.beta1, t);
  const Real c2 = Real(1) - std::pow(config_.beta2, t);
  const Real b1 = config_.beta1, b2 = config_.beta2;
  for (Moments& mo : moments_) {
    const ad::Gradient::Slot& s = grad.slot(*mo.param);
    auto update = [&](auto p, auto g, auto m, auto v) {
      m = b1 * m + (Real(1) - b1) * g;
      v = b2 * v + (Real(1) - b2) * g.square();
      p -= config_.lr * (m / c1) / ((v / c2).sqrt() + config_.eps);
    };
    if (mo.param->is_complex()) {
      update(flat(mo.param->cplx), flat(s.cplx), flat(mo.mc), flat(mo.vc));
    } else {
      update(flat(mo.param->real), flat(s.real), flat(mo.m), flat(mo.v));
      if (mo.param->kind == ad::ParamKind::Phase)
        for (Index i = 0; i < mo.param->real.size(); ++i) mo.param->real.data()[i] = wrap(mo.param->real.data()[i]);
    }
  }
}

// ---------------------------------------------------------------------------
// Trainer

Trainer::Trainer(nn::Model& model, const nn::Codebook& codebook, const TrainConfig& config)
    : model_(model),
      codebook_(codebook),
      config_(config),
      params_(model.parameters()),
      adam_(params_, AdamConfig{config.lr, config.beta1, config.beta2, config.eps}) {
  require(codebook.dim() == model.spec().dim, ErrorKind::ConfigInvalid, "codebook and model dimensionality differ");
  require(config.chunk > 0 && config.batch > 0, ErrorKind::ConfigInvalid, "batch and chunk must be positive");
}

Trainer::ChunkOut Trainer::run_chunk(const Task& task, std::span<const std::size_t> indices, Real scale,
                                     ad::Gradient* grad) const {
  const auto examples = static_cast<Index>(indices.size());
  const Index rows = task.rows();
  const Index n = model_.spec().dim;
  Matrix inputs(examples * rows, n);
  Matrix targets(examples, n);
  std::vector<RowVector> masks;
  if (task.has_masks()) masks.resize(indices.size());
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const auto e = static_cast<Index>(k);
    task.encode(indices[k], inputs.middleRows(e * rows, rows), task.has_masks() ? &masks[k] : nullptr);
    const int label = task.label(indices[k]);
    require(label >= 0 && label < codebook_.classes(), ErrorKind::Contract,
            "label " + std::to_string(label) + " outside the codebook");
    targets.row(e) = codebook_.symbols().phases().row(label);
  }

  ad::Tape tape;
  const ad::Var x = tape.constant(std::move(inputs));
  const ad::Var out = model_.forward(tape, x, examples, task.has_masks() ? &masks : nullptr);
  const ad::Var sims = tape.row_similarity(out, tape.constant(std::move(targets)));
  // scale * sum_e (1 - sim_e)
  const ad::Var loss = tape.affine(tape.sum(sims), -scale, scale * static_cast<Real>(examples));
  if (grad) tape.backward(loss, *grad);
  return {tape.scalar(loss), tape.real(out)};
}

Real Trainer::train_epoch(const Task& task, std::size_t epoch) {
  const std::size_t n = task.size();
  require(n > 0, ErrorKind::Contract, "train_epoch: empty dataset");
  const auto order = io::shuffle_order(n, config_.seeds.shuffle + 0x100000001b3ULL * (epoch + 1));
  const auto batch = static_cast<std::size_t>(config_.batch);
  const auto chunk = static_cast<std::size_t>(config_.chunk);

  std::vector<ad::Gradient> chunk_grads;
  for (std::size_t c = 0; c < chunk_count(batch, config_.chunk); ++c) chunk_grads.emplace_back(params_);
  ad::Gradient batch_grad(params_);

  Real total = 0;
  for (std::size_t start = 0; start < n; start += batch) {
    const std::size_t end = std::min(n, start + batch);
    const std::size_t count = end - start;
    const std::size_t chunks = chunk_count(count, config_.chunk);
    const Real scale = Real(1) / static_cast<Real>(count);
    std::vector<Real> losses(chunks);
    parallel_for(chunks, config_.threads, [&](std::size_t c) {
      const std::size_t b = start + c * chunk;
      const std::size_t e = std::min(end, b + chunk);
      chunk_grads[c].set_zero();
      losses[c] = run_chunk(task, std::span(order).subspan(b, e - b), scale, &chunk_grads[c]).loss;
    });
    batch_grad.set_zero();
    Real batch_loss = 0;
    for (std::size_t c = 0; c < chunks; ++c) {
      batch_grad.add(chunk_grads[c]);
      batch_loss += losses[c];
    }
    require(std::isfinite(batch_loss), ErrorKind::TrainingDiverged,
            "non-finite loss in epoch " + std::to_string(epoch + 1) + " at example " + std::to_string(start));
    adam_.step(batch_grad);
    total += batch_loss * static_cast<Real>(count);
  }
  return total / static_cast<Real>(n);
}

EvalResult Trainer::evaluate(const Task& task) const {
  const std::size_t n = task.size();
  EvalResult r;
  r.predictions.resize(n);
  r.labels.resize(n);
  std::vector<Real> losses(n);
  if (codebook_.classes() == 2) r.confidences.resize(n);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto chunk = static_cast<std::size_t>(config_.chunk);
  parallel_for(chunk_count(n, config_.chunk), config_.threads, [&](std::size_t c) {
    const std::size_t b = c * chunk;
    const std::size_t e = std::min(n, b + chunk);
    const ChunkOut out = run_chunk(task, std::span(order).subspan(b, e - b), 1, nullptr);
    for (std::size_t i = b; i < e; ++i) {
      const Symbol s(out.outputs.row(static_cast<Index>(i - b)));
      const auto p = codebook_.predict(s);
      r.predictions[i] = p.label;
      r.labels[i] = task.label(i);
      losses[i] = Real(1) - p.similarities[r.labels[i]];
      if (!r.confidences.empty()) r.confidences[i] = codebook_.binary_confidence(s);
    }
  });
  Real total = 0;
  for (Real l : losses) total += l;
  r.mean_loss = n ? total / static_cast<Real>(n) : 0;
  r.accuracy = evaluate_accuracy(r);
  return r;
}

Real evaluate_accuracy(const EvalResult& r) {
  if (r.predictions.empty()) return 0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < r.predictions.size(); ++i)
    if (r.predictions[i] == r.labels[i]) ++hits;
  return static_cast<Real>(hits) / static_cast<Real>(r.predictions.size());
}

Real evaluate_accuracy(const Trainer& trainer, const Task& task) { return trainer.evaluate(task).accuracy; }

Real evaluate_auroc(std::span<const Real> scores, std::span<const int> labels) {
  require(scores.size() == labels.size(), ErrorKind::Shape, "auroc: scores and labels differ in length");
  std::size_t pos = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    require(labels[i] == 0 || labels[i] == 1, ErrorKind::Contract, "auroc: labels must be 0 or 1");
    require(!std::isnan(scores[i]), ErrorKind::Contract, "auroc: NaN score");
    pos += static_cast<std::size_t>(labels[i]);
  }
  const std::size_t neg = labels.size() - pos;
  require(pos > 0 && neg > 0, ErrorKind::Contract, "auroc: both classes must be present");

  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Sum of 1-based average ranks over the positives. Every partial sum is a
  // multiple of 1/2 and stays exact.
  double rank_sum = 0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && scores[idx[j + 1]] == scores[idx[i]]) ++j;
    const double avg = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2;
    for (std::size_t k = i; k <= j; ++k)
      if (labels[idx[k]] == 1) rank_sum += avg;
    i = j + 1;
  }
  const double p = static_cast<double>(pos);
  const double u = rank_sum - p * (p + 1) / 2;
  return static_cast<Real>(u / (p * static_cast<double>(neg)));
}

}  // namespace fhrr::train
