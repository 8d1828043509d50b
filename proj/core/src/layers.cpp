#include "fhrr/layers.hpp"

#include <cmath>

#include "fhrr/error.hpp"

namespace fhrr::nn {

namespace {

CMatrix gaussian_complex(Index rows, Index cols, Real stddev, Rng& rng) {
  std::normal_distribution<Real> normal(0, stddev);
  CMatrix w(rows, cols);
  for (Index i = 0; i < w.size(); ++i) {
    const Real re = normal(rng);
    const Real im = normal(rng);
    w.data()[i] = Complex(re, im);
  }
  return w;
}

void append(std::vector<ad::Parameter*>& out, std::vector<ad::Parameter*> more) {
  out.insert(out.end(), more.begin(), more.end());
}

// Splits `phases` into `examples` equal row groups. A single group is returned
// as-is so that unbatched graphs record no slicing.
std::vector<ad::Var> split_groups(ad::Tape& tape, ad::Var phases, Index examples) {
  require(examples > 0 && tape.rows(phases) % examples == 0, ErrorKind::Shape,
          "row count is not a multiple of the example count");
  if (examples == 1) return {phases};
  const Index m = tape.rows(phases) / examples;
  std::vector<ad::Var> groups;
  groups.reserve(static_cast<std::size_t>(examples));
  for (Index e = 0; e < examples; ++e) groups.push_back(tape.slice_rows(phases, e * m, m));
  return groups;
}

ad::Var join(ad::Tape& tape, const std::vector<ad::Var>& parts) {
  return parts.size() == 1 ? parts.front() : tape.concat_rows(parts);
}

const RowVector* mask_at(const std::vector<RowVector>* masks, Index e) {
  if (!masks) return nullptr;
  require(static_cast<Index>(masks->size()) > e, ErrorKind::Shape, "fewer key masks than examples");
  return &(*masks)[static_cast<std::size_t>(e)];
}

}  // namespace

// ---------------------------------------------------------------------------
// PBLayer

PBLayer::PBLayer(std::string name, Index n_in, Index n_out, Rng& rng, const LayerInit& init) {
  require(n_in > 0 && n_out > 0, ErrorKind::Shape, "PBLayer: sizes must be positive");
  const Real stddev = init.weight_scale / std::sqrt(static_cast<Real>(n_in));
  weights_ = ad::Parameter::complex(name + ".w", gaussian_complex(n_in, n_out, stddev, rng));
  bias_ = ad::Parameter::complex(name + ".b", CMatrix::Constant(1, n_out, Complex(1, 0)));
  bias_.trainable = init.bias_trainable;
}

PBLayer& PBLayer::with_reduction(Index r, Index m) {
  require(r > 0 && m > 0, ErrorKind::Shape, "PBLayer: reduction sizes must be positive");
  reduction_ = ad::Parameter::real_valued(weights_.name.substr(0, weights_.name.size() - 2) + ".r",
                                          Matrix::Ones(r, m));
  return *this;
}

ad::Parameter& PBLayer::reduction() {
  require(reduction_.has_value(), ErrorKind::Contract, "PBLayer has no reduction weights");
  return *reduction_;
}

const ad::Parameter& PBLayer::reduction() const {
  require(reduction_.has_value(), ErrorKind::Contract, "PBLayer has no reduction weights");
  return *reduction_;
}

std::vector<ad::Parameter*> PBLayer::parameters() {
  std::vector<ad::Parameter*> out{&weights_, &bias_};
  if (reduction_) out.push_back(&*reduction_);
  return out;
}

SymbolBatch PBLayer::forward(const SymbolBatch& a) const {
  require(a.dim() == n_in(), ErrorKind::Shape,
          "PBLayer: input dimensionality " + std::to_string(a.dim()) + " != " + std::to_string(n_in()));
  CMatrix e = to_complex(a).to_eigen();
  if (reduction_) {
    const Matrix& wr = reduction_->real;
    require(wr.cols() == a.count(), ErrorKind::Shape, "PBLayer: reduction expects " + std::to_string(wr.cols()) + " rows");
    // Sequential accumulation over input rows, the same order bundle() uses.
    CMatrix reduced = CMatrix::Zero(wr.rows(), e.cols());
    for (Index i = 0; i < wr.rows(); ++i)
      for (Index j = 0; j < wr.cols(); ++j) reduced.row(i) += wr(i, j) * e.row(j);
    e = std::move(reduced);
  }
  CMatrix y = e * weights_.cplx;
  y.rowwise() += bias_.cplx.row(0);
  return angle(ComplexMatrix::from(y));
}

ad::Var PBLayer::reduce(ad::Tape& tape, ad::Var phases) const {
  ad::Var e = tape.exp_i_pi(phases);
  if (reduction_) e = tape.real_matmul(tape.parameter(*reduction_), e);
  return e;
}

ad::Var PBLayer::project(ad::Tape& tape, ad::Var complex_rows) const {
  ad::Var y = tape.matmul(complex_rows, tape.parameter(weights_));
  y = tape.add_bias(y, tape.parameter(bias_));
  return tape.angle(y);
}

ad::Var PBLayer::forward(ad::Tape& tape, ad::Var phases) const {
  return project(tape, reduce(tape, phases));
}

// ---------------------------------------------------------------------------
// ResidualBlock

ResidualBlock::ResidualBlock(std::string name, Index n, Rng& rng, const LayerInit& init, bool skip)
    : hidden_(name + ".hidden", n, 2 * n, rng, init), out_(name + ".out", 2 * n, n, rng, init), skip_(skip) {}

std::vector<ad::Parameter*> ResidualBlock::parameters() {
  auto out = hidden_.parameters();
  append(out, out_.parameters());
  return out;
}

SymbolBatch ResidualBlock::mlp(const SymbolBatch& a) const { return out_.forward(hidden_.forward(a)); }

SymbolBatch ResidualBlock::forward(const SymbolBatch& a) const {
  require(a.dim() == dim(), ErrorKind::Shape, "ResidualBlock: dimensionality mismatch");
  SymbolBatch y = mlp(a);
  return skip_ ? bind(y, a, 1) : y;
}

ad::Var ResidualBlock::forward(ad::Tape& tape, ad::Var phases) const {
  require(tape.cols(phases) == dim(), ErrorKind::Shape, "ResidualBlock: dimensionality mismatch");
  ad::Var y = out_.forward(tape, hidden_.forward(tape, phases));
  return skip_ ? tape.bind(y, phases, 1) : y;
}

// ---------------------------------------------------------------------------
// Attention

SymbolBatch vsa_attention(const SymbolBatch& q, const SymbolBatch& k, const SymbolBatch& v,
                          const RowVector* key_mask, BoolMatrix* degenerate) {
  require(k.count() == v.count(), ErrorKind::Shape, "vsa_attention: key and value counts differ");
  require(q.dim() == k.dim() && k.dim() == v.dim(), ErrorKind::Shape, "vsa_attention: dimensionality mismatch");
  Matrix scores = similarity_matrix(q, k);
  if (key_mask) {
    require(key_mask->size() == k.count(), ErrorKind::Shape, "vsa_attention: mask length != key count");
    scores.array().rowwise() *= key_mask->array();
  }
  const ComplexMatrix ev = to_complex(v);
  return angle(ComplexMatrix(scores * ev.real, scores * ev.imag), degenerate);
}

ad::Var vsa_attention(ad::Tape& tape, ad::Var q, ad::Var k, ad::Var v, const RowVector* key_mask) {
  require(tape.rows(k) == tape.rows(v), ErrorKind::Shape, "vsa_attention: key and value counts differ");
  require(tape.cols(q) == tape.cols(v), ErrorKind::Shape, "vsa_attention: dimensionality mismatch");
  ad::Var scores = tape.similarity_matrix(q, k);
  if (key_mask) scores = tape.mask_columns(scores, *key_mask);
  return tape.angle(tape.real_matmul(scores, tape.exp_i_pi(v)));
}

SelfAttentionModule::SelfAttentionModule(std::string name, Index n, Rng& rng, const LayerInit& init, bool skip)
    : q_layer_(name + ".q", n, n, rng, init),
      k_layer_(name + ".k", n, n, rng, init),
      v_layer_(name + ".v", n, n, rng, init),
      mlp_(name + ".mlp", n, rng, init, skip),
      skip_(skip) {}

std::vector<ad::Parameter*> SelfAttentionModule::parameters() {
  auto out = q_layer_.parameters();
  append(out, k_layer_.parameters());
  append(out, v_layer_.parameters());
  append(out, mlp_.parameters());
  return out;
}

SymbolBatch SelfAttentionModule::forward(const SymbolBatch& a, const RowVector* key_mask) const {
  require(a.dim() == dim(), ErrorKind::Shape, "SelfAttentionModule: dimensionality mismatch");
  SymbolBatch attn = vsa_attention(q_layer_.forward(a), k_layer_.forward(a), v_layer_.forward(a), key_mask);
  SymbolBatch h = skip_ ? bind(attn, a, 1) : attn;
  return mlp_.forward(h);
}

ad::Var SelfAttentionModule::forward(ad::Tape& tape, ad::Var phases, Index examples,
                                     const std::vector<RowVector>* key_masks) const {
  require(tape.cols(phases) == dim(), ErrorKind::Shape, "SelfAttentionModule: dimensionality mismatch");
  const auto qs = split_groups(tape, q_layer_.forward(tape, phases), examples);
  const auto ks = split_groups(tape, k_layer_.forward(tape, phases), examples);
  const auto vs = split_groups(tape, v_layer_.forward(tape, phases), examples);
  std::vector<ad::Var> attn;
  attn.reserve(qs.size());
  for (Index e = 0; e < examples; ++e) {
    const auto i = static_cast<std::size_t>(e);
    attn.push_back(vsa_attention(tape, qs[i], ks[i], vs[i], mask_at(key_masks, e)));
  }
  ad::Var a = join(tape, attn);
  ad::Var h = skip_ ? tape.bind(a, phases, 1) : a;
  return mlp_.forward(tape, h);
}

CrossAttentionModule::CrossAttentionModule(std::string name, Index n, Index queries, Rng& rng,
                                           const LayerInit& init, bool skip, bool query_projection)
    : inducing_(ad::Parameter::phase(name + ".inducing", random_symbols(rng, queries, n).phases())),
      k_layer_(name + ".k", n, n, rng, init),
      v_layer_(name + ".v", n, n, rng, init),
      mlp_(name + ".mlp", n, rng, init, skip),
      skip_(skip) {
  if (query_projection) q_layer_.emplace(name + ".q", n, n, rng, init);
}

std::vector<ad::Parameter*> CrossAttentionModule::parameters() {
  std::vector<ad::Parameter*> out{&inducing_};
  if (q_layer_) append(out, q_layer_->parameters());
  append(out, k_layer_.parameters());
  append(out, v_layer_.parameters());
  append(out, mlp_.parameters());
  return out;
}

SymbolBatch CrossAttentionModule::forward(const SymbolBatch& a, const RowVector* key_mask) const {
  require(a.dim() == dim(), ErrorKind::Shape, "CrossAttentionModule: dimensionality mismatch");
  const SymbolBatch points(inducing_.real);
  const SymbolBatch q = q_layer_ ? q_layer_->forward(points) : points;
  SymbolBatch attn = vsa_attention(q, k_layer_.forward(a), v_layer_.forward(a), key_mask);
  // The skip binds to the inducing points: the inputs have a different row count.
  SymbolBatch h = skip_ ? bind(attn, points, 1) : attn;
  return mlp_.forward(h);
}

ad::Var CrossAttentionModule::forward(ad::Tape& tape, ad::Var phases, Index examples,
                                      const std::vector<RowVector>* key_masks) const {
  require(tape.cols(phases) == dim(), ErrorKind::Shape, "CrossAttentionModule: dimensionality mismatch");
  const ad::Var points = tape.parameter(inducing_);
  const ad::Var q = q_layer_ ? q_layer_->forward(tape, points) : points;
  const auto ks = split_groups(tape, k_layer_.forward(tape, phases), examples);
  const auto vs = split_groups(tape, v_layer_.forward(tape, phases), examples);
  std::vector<ad::Var> attn;
  attn.reserve(ks.size());
  for (Index e = 0; e < examples; ++e) {
    const auto i = static_cast<std::size_t>(e);
    attn.push_back(vsa_attention(tape, q, ks[i], vs[i], mask_at(key_masks, e)));
  }
  ad::Var a = join(tape, attn);
  ad::Var h = a;
  if (skip_) {
    const std::vector<ad::Var> tiled(static_cast<std::size_t>(examples), points);
    h = tape.bind(a, join(tape, tiled), 1);
  }
  return mlp_.forward(tape, h);
}

// ---------------------------------------------------------------------------
// Codebook

Codebook::Codebook(SymbolBatch class_symbols) : symbols_(std::move(class_symbols)) {
  require(symbols_.count() >= 2, ErrorKind::Contract, "codebook needs at least two classes");
}

Codebook::Prediction Codebook::predict(const Symbol& out) const {
  require(out.dim() == dim(), ErrorKind::Shape, "codebook: dimensionality mismatch");
  Prediction p;
  p.similarities.resize(classes());
  for (Index c = 0; c < classes(); ++c) {
    p.similarities[c] = similarity(out, symbols_.row(c));
    if (p.similarities[c] > p.similarities[p.label]) p.label = c;
  }
  return p;
}

Real Codebook::loss(const Symbol& out, Index target) const {
  require(target >= 0 && target < classes(), ErrorKind::Contract,
          "codebook: target class " + std::to_string(target) + " out of range");
  require(out.dim() == dim(), ErrorKind::Shape, "codebook: dimensionality mismatch");
  return Real(1) - similarity(out, symbols_.row(target));
}

Real Codebook::binary_confidence(const Symbol& out) const {
  require(classes() == 2, ErrorKind::Contract, "binary_confidence needs a two-class codebook");
  return std::abs(similarity(out, symbols_.row(1))) - std::abs(similarity(out, symbols_.row(0)));
}

}  // namespace fhrr::nn
