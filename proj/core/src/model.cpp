#include "fhrr/model.hpp"

#include "fhrr/error.hpp"

namespace fhrr::nn {

std::string_view to_string(Architecture a) noexcept {
  switch (a) {
    case Architecture::DeepMlp: return "deep-mlp";
    case Architecture::SelfAttention: return "self-attention";
    case Architecture::CrossAttention: return "cross-attention";
  }
  return "unknown";
}

std::optional<Architecture> parse_architecture(std::string_view s) noexcept {
  for (auto a : {Architecture::DeepMlp, Architecture::SelfAttention, Architecture::CrossAttention})
    if (s == to_string(a)) return a;
  return std::nullopt;
}

Model::Model(const ModelSpec& spec) : spec_(spec) {
  require(spec.dim > 0 && spec.input_rows > 0, ErrorKind::ConfigInvalid, "model: sizes must be positive");
  Rng rng(spec.seed);
  switch (spec.arch) {
    case Architecture::DeepMlp:
      require(spec.blocks > 0, ErrorKind::ConfigInvalid, "model: deep-mlp needs at least one block");
      require(spec.input_rows == 1, ErrorKind::ConfigInvalid, "model: deep-mlp takes one symbol per example");
      blocks_.reserve(static_cast<std::size_t>(spec.blocks));
      for (Index b = 0; b < spec.blocks; ++b)
        blocks_.emplace_back("block" + std::to_string(b), spec.dim, rng, spec.init, spec.skip);
      return;
    case Architecture::SelfAttention:
      self_ = std::make_unique<SelfAttentionModule>("self", spec.dim, rng, spec.init, spec.skip);
      break;
    case Architecture::CrossAttention:
      require(spec.queries > 0, ErrorKind::ConfigInvalid, "model: cross-attention needs inducing points");
      cross_ = std::make_unique<CrossAttentionModule>("cross", spec.dim, spec.queries, rng, spec.init, spec.skip,
                                                      spec.query_projection);
      break;
  }
  if (spec.reduction == Reduction::Trainable) {
    const Index rows = cross_ ? spec.queries : spec.input_rows;
    head_.emplace("head", spec.dim, spec.dim, rng, spec.init);
    head_->with_reduction(1, rows);
  }
}

std::vector<ad::Parameter*> Model::parameters() {
  std::vector<ad::Parameter*> out;
  auto add = [&](std::vector<ad::Parameter*> more) { out.insert(out.end(), more.begin(), more.end()); };
  for (auto& b : blocks_) add(b.parameters());
  if (self_) add(self_->parameters());
  if (cross_) add(cross_->parameters());
  if (head_) add(head_->parameters());
  return out;
}

std::vector<const ad::Parameter*> Model::parameters() const {
  auto mutable_params = const_cast<Model*>(this)->parameters();
  return {mutable_params.begin(), mutable_params.end()};
}

Index Model::score_entries() const noexcept {
  if (self_) return SelfAttentionModule::score_entries(spec_.input_rows);
  if (cross_) return cross_->score_entries(spec_.input_rows);
  return 0;
}

ad::Var Model::reduce(ad::Tape& tape, ad::Var rows, Index examples) const {
  const Index per = tape.rows(rows) / examples;
  std::vector<ad::Var> reduced;
  reduced.reserve(static_cast<std::size_t>(examples));
  const ad::Var ones = head_ ? ad::Var{} : tape.constant(Matrix(Matrix::Ones(1, per)));
  for (Index e = 0; e < examples; ++e) {
    const ad::Var group = examples == 1 ? rows : tape.slice_rows(rows, e * per, per);
    reduced.push_back(head_ ? head_->reduce(tape, group) : tape.real_matmul(ones, tape.exp_i_pi(group)));
  }
  const ad::Var stacked = reduced.size() == 1 ? reduced.front() : tape.concat_rows(reduced);
  return head_ ? head_->project(tape, stacked) : tape.angle(stacked);
}

ad::Var Model::forward(ad::Tape& tape, ad::Var inputs, Index examples,
                       const std::vector<RowVector>* key_masks) const {
  require(examples > 0 && tape.rows(inputs) == examples * spec_.input_rows, ErrorKind::Shape,
          "model: expected " + std::to_string(examples * spec_.input_rows) + " input rows, got " +
              std::to_string(tape.rows(inputs)));
  require(tape.cols(inputs) == spec_.dim, ErrorKind::Shape, "model: input dimensionality mismatch");
  if (!blocks_.empty()) {
    ad::Var h = inputs;
    for (const auto& b : blocks_) h = b.forward(tape, h);
    return h;
  }
  const ad::Var h = self_ ? self_->forward(tape, inputs, examples, key_masks)
                          : cross_->forward(tape, inputs, examples, key_masks);
  return reduce(tape, h, examples);
}

Symbol Model::forward(const SymbolBatch& input, const RowVector* key_mask) const {
  require(input.count() == spec_.input_rows && input.dim() == spec_.dim, ErrorKind::Shape,
          "model: input shape mismatch");
  if (!blocks_.empty()) {
    SymbolBatch h = input;
    for (const auto& b : blocks_) h = b.forward(h);
    return h.row(0);
  }
  const SymbolBatch h = self_ ? self_->forward(input, key_mask) : cross_->forward(input, key_mask);
  if (head_) return head_->forward(h).row(0);
  return bundle(h);
}

}  // namespace fhrr::nn
