#pragma once

// Trainable building blocks over symbol batches. Every layer has two entry
// points: a pure forward over SymbolBatch values, and a recording forward
// over tape variables used for training.

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fhrr/parameter.hpp"
#include "fhrr/tape.hpp"
#include "fhrr/vsa.hpp"

namespace fhrr::nn {

struct LayerInit {
  // Real and imaginary parts of W_p are N(0, (weight_scale / sqrt(n_in))^2).
  Real weight_scale = 0.5;
  bool bias_trainable = true;
};

// Generalized bundling: angle(W_r * exp(i pi A) * W_p + bias).
class PBLayer {
 public:
  PBLayer(std::string name, Index n_in, Index n_out, Rng& rng, const LayerInit& init = {});

  // Adds a trainable r x m reduction W_r, initialized to ones (plain
  // bundling of the m input rows into each of the r outputs).
  PBLayer& with_reduction(Index r, Index m);

  Index n_in() const noexcept { return weights_.rows(); }
  Index n_out() const noexcept { return weights_.cols(); }
  bool has_reduction() const noexcept { return reduction_.has_value(); }

  ad::Parameter& weights() noexcept { return weights_; }
  ad::Parameter& bias() noexcept { return bias_; }
  ad::Parameter& reduction();
  const ad::Parameter& weights() const noexcept { return weights_; }
  const ad::Parameter& bias() const noexcept { return bias_; }
  const ad::Parameter& reduction() const;

  std::vector<ad::Parameter*> parameters();

  SymbolBatch forward(const SymbolBatch& a) const;
  ad::Var forward(ad::Tape& tape, ad::Var phases) const;

  // Split form used when a batch of examples shares the projection: reduce
  // each example's rows with W_r, stack the results, then project once.
  ad::Var reduce(ad::Tape& tape, ad::Var phases) const;
  ad::Var project(ad::Tape& tape, ad::Var complex_rows) const;

 private:
  ad::Parameter weights_;
  ad::Parameter bias_;
  std::optional<ad::Parameter> reduction_;
};

// Two PB layers (n -> 2n -> n) followed by a binding skip connection.
class ResidualBlock {
 public:
  ResidualBlock(std::string name, Index n, Rng& rng, const LayerInit& init = {}, bool skip = true);

  Index dim() const noexcept { return hidden_.n_in(); }
  bool skip() const noexcept { return skip_; }
  PBLayer& hidden() noexcept { return hidden_; }
  PBLayer& out() noexcept { return out_; }

  std::vector<ad::Parameter*> parameters();

  // Block output before the skip binding.
  SymbolBatch mlp(const SymbolBatch& a) const;
  SymbolBatch forward(const SymbolBatch& a) const;
  ad::Var forward(ad::Tape& tape, ad::Var phases) const;

 private:
  PBLayer hidden_;
  PBLayer out_;
  bool skip_;
};

// angle(sim(Q, K) * exp(i pi V)); masked key columns score 0. `key_mask`
// entries are 1 for live keys and 0 for masked keys.
SymbolBatch vsa_attention(const SymbolBatch& q, const SymbolBatch& k, const SymbolBatch& v,
                          const RowVector* key_mask = nullptr, BoolMatrix* degenerate = nullptr);
ad::Var vsa_attention(ad::Tape& tape, ad::Var q, ad::Var k, ad::Var v, const RowVector* key_mask = nullptr);

class SelfAttentionModule {
 public:
  SelfAttentionModule(std::string name, Index n, Rng& rng, const LayerInit& init = {}, bool skip = true);

  Index dim() const noexcept { return q_layer_.n_in(); }
  std::vector<ad::Parameter*> parameters();

  // Score-matrix entries for m inputs.
  static Index score_entries(Index m) noexcept { return m * m; }

  SymbolBatch forward(const SymbolBatch& a, const RowVector* key_mask = nullptr) const;
  // `phases` stacks `examples` groups of equal size; attention never mixes
  // rows from different groups.
  ad::Var forward(ad::Tape& tape, ad::Var phases, Index examples,
                  const std::vector<RowVector>* key_masks = nullptr) const;

 private:
  PBLayer q_layer_;
  PBLayer k_layer_;
  PBLayer v_layer_;
  ResidualBlock mlp_;
  bool skip_;
};

class CrossAttentionModule {
 public:
  CrossAttentionModule(std::string name, Index n, Index queries, Rng& rng, const LayerInit& init = {},
                       bool skip = true, bool query_projection = false);

  Index dim() const noexcept { return k_layer_.n_in(); }
  Index queries() const noexcept { return inducing_.rows(); }
  ad::Parameter& inducing_points() noexcept { return inducing_; }
  std::vector<ad::Parameter*> parameters();

  Index score_entries(Index m) const noexcept { return queries() * m; }

  SymbolBatch forward(const SymbolBatch& a, const RowVector* key_mask = nullptr) const;
  ad::Var forward(ad::Tape& tape, ad::Var phases, Index examples,
                  const std::vector<RowVector>* key_masks = nullptr) const;

 private:
  ad::Parameter inducing_;
  std::optional<PBLayer> q_layer_;
  PBLayer k_layer_;
  PBLayer v_layer_;
  ResidualBlock mlp_;
  bool skip_;
};

// Fixed random class symbols.
class Codebook {
 public:
  explicit Codebook(SymbolBatch class_symbols);

  Index classes() const noexcept { return symbols_.count(); }
  Index dim() const noexcept { return symbols_.dim(); }
  const SymbolBatch& symbols() const noexcept { return symbols_; }
  Symbol symbol(Index c) const { return symbols_.row(c); }

  struct Prediction {
    Index label = 0;
    RowVector similarities;
  };

  // Argmax similarity; ties go to the lowest class index.
  Prediction predict(const Symbol& out) const;

  // 1 - similarity(out, class_symbol(target)), in [0, 2].
  Real loss(const Symbol& out, Index target) const;

  // |sim(out, symbol 1)| - |sim(out, symbol 0)|; requires exactly two classes,
  // class 1 being the positive ("toxic") class.
  Real binary_confidence(const Symbol& out) const;

 private:
  SymbolBatch symbols_;
};

}  // namespace fhrr::nn
