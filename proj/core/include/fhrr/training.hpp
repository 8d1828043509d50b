#pragma once

// Mini-batch training, the adaptive-moment optimizer, and evaluation metrics.
//
// Reproducibility: examples are processed in fixed-size chunks, each chunk on
// its own tape; chunk gradients are reduced in chunk order. Results therefore
// do not depend on the worker thread count.

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "fhrr/data_io.hpp"
#include "fhrr/encoders.hpp"
#include "fhrr/model.hpp"

namespace fhrr::train {

enum class TaskKind { Image, Graph };

std::string_view to_string(TaskKind t) noexcept;
std::string_view to_string(nn::Reduction r) noexcept;
std::string_view to_string(encode::PositionMode p) noexcept;

// Throw Error(ConfigInvalid) for unknown names.
TaskKind parse_task(const std::string& s);
nn::Architecture parse_arch(const std::string& s);
nn::Reduction parse_reduction(const std::string& s);
encode::PositionMode parse_position(const std::string& s);

struct Seeds {
  std::uint64_t weights = 1;
  std::uint64_t codebook = 2;
  std::uint64_t projection = 3;
  std::uint64_t shuffle = 4;
  std::uint64_t data = 5;  // synthetic graph generation
};

struct TrainConfig {
  TaskKind task = TaskKind::Image;
  nn::Architecture arch = nn::Architecture::DeepMlp;
  Index dim = 256;
  Index queries = 32;
  Index blocks = 12;
  bool skip = true;
  Index batch = 64;
  Index epochs = 10;
  Real lr = 1e-3;
  Real beta1 = 0.9;
  Real beta2 = 0.999;
  Real eps = 1e-8;
  Seeds seeds;
  Real init_scale = 0.5;
  bool bias_trainable = true;
  nn::Reduction reduction = nn::Reduction::Trainable;
  bool query_projection = false;
  bool key_mask = false;
  encode::PositionMode position = encode::PositionMode::Bundle;
  std::size_t subset = 0;       // training examples kept (0 = all)
  std::size_t test_subset = 0;  // test examples kept (0 = all)
  Real val_fraction = 0.1;      // tail of the training subset held out
  Index chunk = 64;             // examples per tape
  int threads = 1;
  Index max_edges = 0;          // graph task; 0 = computed from the data
  std::string data;
  std::string out;
};

// Throws Error(ConfigInvalid) naming the first bad field.
void validate(const TrainConfig& c);

std::string to_json(const TrainConfig& c);
TrainConfig config_from_json(const std::string& text);

nn::ModelSpec model_spec(const TrainConfig& c, Index input_rows);

// A labelled dataset as seen by the model: each example encodes to
// rows() x dim phases, optionally with a key mask.
class Task {
 public:
  virtual ~Task() = default;
  virtual std::size_t size() const = 0;
  virtual Index rows() const = 0;
  virtual Index dim() const = 0;
  virtual int label(std::size_t i) const = 0;
  virtual bool has_masks() const { return false; }
  virtual void encode(std::size_t i, Eigen::Ref<Matrix> out, RowVector* mask) const = 0;
};

std::unique_ptr<Task> make_image_flat_task(io::ImageDataset data, const encode::RandomProjector& projector);
std::unique_ptr<Task> make_image_rows_task(io::ImageDataset data, const encode::RandomProjector& projector);
std::unique_ptr<Task> make_graph_task(io::GraphDataset data, const encode::RandomProjector& atoms,
                                      const encode::RandomProjector& bonds, Symbol position_base, Index max_edges,
                                      encode::PositionMode mode, bool masks);

struct AdamConfig {
  Real lr = 1e-3;
  Real beta1 = 0.9;
  Real beta2 = 0.999;
  Real eps = 1e-8;
};

// First/second moment accumulators, one pair per trainable parameter.
// Complex parameters are updated as independent real and imaginary parts.
class Adam {
 public:
  Adam(std::span<ad::Parameter* const> params, const AdamConfig& config);

  // Throws Error(TrainingDiverged) on non-finite gradients. Phase parameters
  // are wrapped into [-1, 1) after the update.
  void step(const ad::Gradient& grad);

  std::uint64_t steps() const noexcept { return step_; }
  const AdamConfig& config() const noexcept { return config_; }

 private:
  struct Moments {
    ad::Parameter* param;
    Matrix m, v;       // real and phase parameters
    CMatrix mc, vc;    // complex: real()/imag() hold the two moment streams
  };
  AdamConfig config_;
  std::vector<Moments> moments_;
  std::uint64_t step_ = 0;
};

struct EvalResult {
  std::vector<Index> predictions;
  std::vector<Real> confidences;  // binary codebooks only
  std::vector<int> labels;
  Real mean_loss = 0;
  Real accuracy = 0;
};

class Trainer {
 public:
  Trainer(nn::Model& model, const nn::Codebook& codebook, const TrainConfig& config);

  // One pass over `task` in a shuffled order; returns the mean per-example
  // loss. Throws Error(TrainingDiverged) on a non-finite loss.
  Real train_epoch(const Task& task, std::size_t epoch);

  EvalResult evaluate(const Task& task) const;

  const Adam& optimizer() const noexcept { return adam_; }

 private:
  struct ChunkOut {
    Real loss = 0;  // sum of per-example losses times the scale
    Matrix outputs;
  };
  ChunkOut run_chunk(const Task& task, std::span<const std::size_t> indices, Real scale, ad::Gradient* grad) const;

  nn::Model& model_;
  const nn::Codebook& codebook_;
  TrainConfig config_;
  std::vector<ad::Parameter*> params_;
  Adam adam_;
};

// Fraction of predictions equal to their labels.
Real evaluate_accuracy(const EvalResult& r);
Real evaluate_accuracy(const Trainer& trainer, const Task& task);

// Mann-Whitney statistic P(pos > neg) + P(tie) / 2 via average ranks.
// Throws Error(Contract) unless both classes are present.
Real evaluate_auroc(std::span<const Real> scores, std::span<const int> labels);

}  // namespace fhrr::train
