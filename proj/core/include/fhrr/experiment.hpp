#pragma once

// Assembles a complete run from a TrainConfig: datasets, projectors, codebook,
// model, and the per-split tasks; drives the epoch loop.

#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "fhrr/checkpoint.hpp"
#include "fhrr/training.hpp"

namespace fhrr::train {

struct DataFile {
  std::string path;
  std::string crc32;  // hex; "generated" for synthetic data
};

struct SplitMetric {
  std::string split;
  Real value = 0;
};

struct EpochRecord {
  Index epoch = 0;
  Real loss = 0;
  Real val_loss = 0;
  Real val_metric = 0;
  std::vector<SplitMetric> test;
  double seconds = 0;  // kept out of the metrics file, which must be reproducible
};

// "accuracy" for the image task, "auroc" for the graph task.
std::string_view metric_name(TaskKind t) noexcept;

// Split names accepted by evaluation.
std::vector<std::string> split_names(TaskKind t);
// Splits reported every epoch.
std::vector<std::string> test_split_names(TaskKind t);

// Synthetic graph split sizes used when data == "synthetic".
inline constexpr std::size_t kSyntheticTrain = 2000;
inline constexpr std::size_t kSyntheticTest = 500;

class Experiment {
 public:
  // Validates the config, loads every split, and builds a freshly initialized
  // model. The stored config is resolved (e.g. max_edges filled in).
  explicit Experiment(TrainConfig config);
  ~Experiment();
  Experiment(const Experiment&) = delete;
  Experiment& operator=(const Experiment&) = delete;

  const TrainConfig& config() const noexcept { return config_; }
  nn::Model& model() noexcept { return *model_; }
  const nn::Model& model() const noexcept { return *model_; }
  const nn::Codebook& codebook() const noexcept { return *codebook_; }
  const std::vector<DataFile>& data_files() const noexcept { return files_; }

  // Throws Error(Contract) for an unknown split.
  const Task& task(const std::string& split) const;
  bool has_split(const std::string& split) const;

  Real metric(const EvalResult& r) const;
  Real evaluate(const std::string& split) const;

  // Runs config.epochs epochs, calling on_epoch after each.
  std::vector<EpochRecord> fit(const std::function<void(const EpochRecord&)>& on_epoch = {});

  ckpt::Checkpoint checkpoint() const;
  // Loads parameters; the checkpoint must come from a compatible config.
  void restore(const ckpt::Checkpoint& c);

 private:
  TrainConfig config_;
  std::unique_ptr<encode::RandomProjector> projector_, atom_projector_, bond_projector_;
  std::unique_ptr<nn::Codebook> codebook_;
  std::unique_ptr<nn::Model> model_;
  std::vector<std::pair<std::string, std::unique_ptr<Task>>> tasks_;
  std::vector<DataFile> files_;
  std::unique_ptr<Trainer> trainer_;
};

// Config stored in a checkpoint's metadata. Throws Error(CheckpointMismatch)
// when the metadata is unreadable.
TrainConfig config_from_checkpoint(const ckpt::Checkpoint& c);

std::string crc32_hex(const std::filesystem::path& path);

}  // namespace fhrr::train
