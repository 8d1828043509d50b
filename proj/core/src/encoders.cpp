#include "fhrr/encoders.hpp"

#include <cmath>
#include <string>

#include "fhrr/error.hpp"

namespace fhrr {

void validate(const GraphExample& g) {
  require(!g.atoms.empty(), ErrorKind::Schema, "graph has no atoms");
  const auto atoms = static_cast<Index>(g.atoms.size());
  for (std::size_t b = 0; b < g.bonds.size(); ++b) {
    const Bond& bond = g.bonds[b];
    require(bond.from >= 0 && bond.from < atoms && bond.to >= 0 && bond.to < atoms, ErrorKind::Schema,
            "bond " + std::to_string(b) + " references a missing atom");
  }
  require(g.label == 0 || g.label == 1, ErrorKind::Schema, "graph label must be 0 or 1");
}

namespace encode {

namespace {

// Population variance below this counts as a constant projection.
constexpr Real kMinVariance = static_cast<Real>(1e-18);

}  // namespace

RandomProjector::RandomProjector(Index d_in, Index n, std::uint64_t seed) {
  require(d_in > 0 && n > 1, ErrorKind::Contract, "projector: d_in must be > 0 and n > 1");
  Rng rng(seed);
  std::normal_distribution<Real> normal(0, 1);
  matrix_.resize(d_in, n);
  for (Index i = 0; i < matrix_.size(); ++i) matrix_.data()[i] = normal(rng);
}

bool RandomProjector::try_project(std::span<const Real> x, Eigen::Ref<RowVector> out) const {
  require(static_cast<Index>(x.size()) == input_dim(), ErrorKind::Shape,
          "projector: input length " + std::to_string(x.size()) + " != " + std::to_string(input_dim()));
  require(out.size() == output_dim(), ErrorKind::Shape, "projector: output length mismatch");
  const Eigen::Map<const RowVector> in(x.data(), static_cast<Index>(x.size()));
  require(in.allFinite(), ErrorKind::Domain, "projector: non-finite input");
  const RowVector y = in * matrix_;
  const Real mean = y.mean();
  const Real var = (y.array() - mean).square().mean();
  if (!(var >= kMinVariance)) return false;
  const Real inv_std = Real(1) / std::sqrt(var);
  for (Index i = 0; i < y.size(); ++i) out[i] = wrap((y[i] - mean) * inv_std);
  return true;
}

Symbol RandomProjector::project(std::span<const Real> x) const {
  RowVector out(output_dim());
  if (!try_project(x, out)) fail(ErrorKind::DegenerateInput, "projection of input has zero variance");
  return Symbol(std::move(out));
}

SymbolBatch encode_image_rows(const RandomProjector& projector, const Matrix& image, DegeneratePolicy policy) {
  require(image.rows() == kImageSide && image.cols() == kImageSide, ErrorKind::Shape, "image must be 28 x 28");
  require(projector.input_dim() == kImageSide, ErrorKind::Shape, "row projector must take 28 inputs");
  Matrix out = Matrix::Zero(kImageSide, projector.output_dim());
  std::string degenerate;
  int degenerate_count = 0;
  for (Index r = 0; r < kImageSide; ++r) {
    const RowVector row = image.row(r);
    if (!projector.try_project({row.data(), static_cast<std::size_t>(row.size())}, out.row(r))) {
      ++degenerate_count;
      degenerate += (degenerate.empty() ? "" : ",") + std::to_string(r);
    }
  }
  if (degenerate_count > 0 && policy == DegeneratePolicy::Raise) {
    fail(ErrorKind::DegenerateInput,
         std::to_string(degenerate_count) + " degenerate image rows: " + degenerate);
  }
  return SymbolBatch(std::move(out));
}

Symbol encode_image_flat(const RandomProjector& projector, const Matrix& image) {
  require(image.rows() == kImageSide && image.cols() == kImageSide, ErrorKind::Shape, "image must be 28 x 28");
  require(projector.input_dim() == kImageSide * kImageSide, ErrorKind::Shape, "flat projector must take 784 inputs");
  return projector.project({image.data(), static_cast<std::size_t>(image.size())});
}

Symbol position_code(const Symbol& base, Index t, Index max_edges) {
  require(max_edges > 0 && t >= 0 && t < max_edges, ErrorKind::Contract, "position index out of range");
  const Real power = static_cast<Real>(t) / static_cast<Real>(max_edges);
  return bind(Symbol::zeros(base.dim()), base, power);
}

Symbol edge_symbol(const RandomProjector& atoms, const RandomProjector& bonds, const GraphExample& g,
                   std::size_t bond_index) {
  require(bond_index < g.bonds.size(), ErrorKind::Contract, "bond index out of range");
  const Bond& b = g.bonds[bond_index];
  const auto atom = [&](Index i) {
    require(i >= 0 && i < static_cast<Index>(g.atoms.size()), ErrorKind::Contract,
            "bond " + std::to_string(bond_index) + " references a missing atom");
    return atoms.project(g.atoms[static_cast<std::size_t>(i)]);
  };
  const Symbol pair = bind(atom(b.from), atom(b.to), 1);
  return bind(pair, bonds.project(b.features), 1);
}

EncodedGraph encode_graph(const RandomProjector& atoms, const RandomProjector& bonds, const Symbol& position_base,
                          const GraphExample& g, Index max_edges, PositionMode mode) {
  const Index n = position_base.dim();
  require(atoms.output_dim() == n && bonds.output_dim() == n, ErrorKind::Shape,
          "graph encoder: projector and position dimensionality differ");
  require(max_edges > 0, ErrorKind::Contract, "graph encoder: max_edges must be positive");
  const auto edges = static_cast<Index>(g.bonds.size());
  require(edges <= max_edges, ErrorKind::Capacity,
          "graph has " + std::to_string(edges) + " bonds, capacity is " + std::to_string(max_edges));

  Matrix rows = Matrix::Zero(max_edges, n);
  RowVector mask = RowVector::Zero(max_edges);
  for (Index t = 0; t < edges; ++t) {
    const Symbol edge = edge_symbol(atoms, bonds, g, static_cast<std::size_t>(t));
    const Symbol pos = position_code(position_base, t, max_edges);
    if (mode == PositionMode::Bundle) {
      const Symbol both[] = {edge, pos};
      rows.row(t) = bundle(SymbolBatch::from_rows(both)).phases();
    } else {
      rows.row(t) = bind(edge, pos, 1).phases();
    }
    mask[t] = 1;
  }
  return {SymbolBatch(std::move(rows)), std::move(mask)};
}

nn::Codebook make_codebook(std::uint64_t seed, Index classes, Index n) {
  require(classes >= 2, ErrorKind::Contract, "codebook needs at least two classes");
  Rng rng(seed);
  return nn::Codebook(random_symbols(rng, classes, n));
}

}  // namespace encode
}  // namespace fhrr
