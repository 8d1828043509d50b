#pragma once

// End-to-end architectures: the deep residual MLP over flat image symbols and
// the attention classifiers over symbol sets (image rows or graph edges).

#include <cstdint>
#include <memory>
#include <optional>
#include <string_view>
#include <vector>

#include "fhrr/layers.hpp"

namespace fhrr::nn {

enum class Architecture { DeepMlp, SelfAttention, CrossAttention };
enum class Reduction { Trainable, Bundle };

std::string_view to_string(Architecture a) noexcept;
std::optional<Architecture> parse_architecture(std::string_view s) noexcept;

struct ModelSpec {
  Architecture arch = Architecture::DeepMlp;
  Index dim = 256;
  Index input_rows = 1;  // symbols per example; 1 for the deep MLP
  Index queries = 32;    // cross-attention inducing points
  Index blocks = 12;     // residual blocks in the deep MLP
  bool skip = true;
  Reduction reduction = Reduction::Trainable;
  bool query_projection = false;
  LayerInit init;
  std::uint64_t seed = 1;
};

class Model {
 public:
  explicit Model(const ModelSpec& spec);
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  const ModelSpec& spec() const noexcept { return spec_; }

  // Stable pointers for the model's lifetime, in a fixed order.
  std::vector<ad::Parameter*> parameters();
  std::vector<const ad::Parameter*> parameters() const;

  // `inputs` stacks `examples` groups of input_rows symbols. Returns an
  // examples x dim node of output symbols.
  ad::Var forward(ad::Tape& tape, ad::Var inputs, Index examples,
                  const std::vector<RowVector>* key_masks = nullptr) const;

  // Single example, untaped.
  Symbol forward(const SymbolBatch& input, const RowVector* key_mask = nullptr) const;

  // Attention score-matrix entries per example (0 for the deep MLP).
  Index score_entries() const noexcept;

 private:
  ad::Var reduce(ad::Tape& tape, ad::Var rows, Index examples) const;

  ModelSpec spec_;
  std::vector<ResidualBlock> blocks_;
  std::unique_ptr<SelfAttentionModule> self_;
  std::unique_ptr<CrossAttentionModule> cross_;
  std::optional<PBLayer> head_;
};

}  // namespace fhrr::nn
