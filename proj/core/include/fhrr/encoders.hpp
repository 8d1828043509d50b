#pragma once

// Conversion of raw images and molecular graphs into symbol batches.

#include <cstdint>
#include <span>

#include "fhrr/graph.hpp"
#include "fhrr/layers.hpp"
#include "fhrr/vsa.hpp"

namespace fhrr::encode {

inline constexpr Index kImageSide = 28;

// Fixed Gaussian random projection followed by a layer normalization and a
// phase wrap.
class RandomProjector {
 public:
  RandomProjector(Index d_in, Index n, std::uint64_t seed);

  Index input_dim() const noexcept { return matrix_.rows(); }
  Index output_dim() const noexcept { return matrix_.cols(); }
  const Matrix& matrix() const noexcept { return matrix_; }

  // Throws Error(DegenerateInput) when the projection has zero variance.
  Symbol project(std::span<const Real> x) const;

  // Writes the wrapped, normalized projection into `out` and returns true,
  // or returns false (leaving `out` untouched) for a zero-variance projection.
  bool try_project(std::span<const Real> x, Eigen::Ref<RowVector> out) const;

 private:
  Matrix matrix_;
};

enum class DegeneratePolicy {
  Raise,       // zero-variance rows raise Error(DegenerateInput)
  ZeroSymbol,  // zero-variance rows encode as all-zero phases
};

// `image` is 28 x 28 with pixels scaled to [0, 1]. Row r of the result is the
// projection of image row r (the projector's input dimension must be 28).
SymbolBatch encode_image_rows(const RandomProjector& projector, const Matrix& image,
                              DegeneratePolicy policy = DegeneratePolicy::Raise);

// Single symbol from the flattened 784-pixel vector.
Symbol encode_image_flat(const RandomProjector& projector, const Matrix& image);

enum class PositionMode {
  Bundle,  // row = bundle({edge, position})
  Bind,    // row = bind(edge, position, 1)
};

struct EncodedGraph {
  SymbolBatch rows;  // max_edges x n, padding rows all zero
  RowVector mask;    // 1 for real edges, 0 for padding
};

// Position code for slot t of max_edges: fractional binding of the zero
// symbol by `base` with power t / max_edges.
Symbol position_code(const Symbol& base, Index t, Index max_edges);

EncodedGraph encode_graph(const RandomProjector& atoms, const RandomProjector& bonds, const Symbol& position_base,
                          const GraphExample& g, Index max_edges, PositionMode mode = PositionMode::Bundle);

// Symbol of a single edge: bind(bind(atom_i, atom_j), bond).
Symbol edge_symbol(const RandomProjector& atoms, const RandomProjector& bonds, const GraphExample& g,
                   std::size_t bond_index);

nn::Codebook make_codebook(std::uint64_t seed, Index classes, Index n);

}  // namespace fhrr::encode
