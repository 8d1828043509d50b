#pragma once

// Dataset ingestion. Loaders reject malformed input rather than repairing it;
// errors name the file and the offending byte offset or line.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fhrr/graph.hpp"
#include "fhrr/types.hpp"

namespace fhrr::io {

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

struct IdxImages {
  std::uint32_t count = 0;
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  std::vector<std::uint8_t> pixels;  // count * rows * cols, row-major
};

// Reads a file, inflating it first when it starts with the gzip magic bytes.
std::vector<std::uint8_t> read_maybe_gzip(const std::filesystem::path& path);

IdxImages load_idx_images(const std::filesystem::path& path);
std::vector<std::uint8_t> load_idx_labels(const std::filesystem::path& path);

void write_idx_images(const std::filesystem::path& path, const IdxImages& images);
void write_idx_labels(const std::filesystem::path& path, const std::vector<std::uint8_t>& labels);

struct ImageDataset {
  std::vector<std::uint8_t> pixels;  // count x 28 x 28
  std::vector<std::uint8_t> labels;
  std::string split;

  std::size_t size() const noexcept { return labels.size(); }
  // 28 x 28 image scaled to [0, 1].
  Matrix image(std::size_t i) const;
  // First `count` examples (all of them when count is 0 or exceeds size()).
  ImageDataset head(std::size_t count) const;
  ImageDataset slice(std::size_t begin, std::size_t end) const;
};

// Validates count agreement, 28 x 28 geometry, and labels < 10.
ImageDataset make_image_dataset(IdxImages images, std::vector<std::uint8_t> labels, std::string split);

// `<dir>/<stem>` if present, else `<dir>/<stem>.gz`; throws Error(DataNotFound).
std::filesystem::path resolve_data_file(const std::filesystem::path& dir, const std::string& stem);

// Loads `<dir>/<prefix>-images-idx3-ubyte[.gz]` and the matching labels file.
ImageDataset load_image_split(const std::filesystem::path& dir, const std::string& prefix, const std::string& split);

struct GraphDataset {
  std::vector<GraphExample> examples;
  std::string split;
  Index max_edges = 0;
  Index atom_features = 0;
  Index bond_features = 0;

  std::size_t size() const noexcept { return examples.size(); }
};

// Recomputes max_edges and feature widths; throws Error(Schema) on
// inconsistent feature lengths or invalid bonds.
void finalize(GraphDataset& dataset);

// One JSON object per line: {"atoms": [[f...]...], "bonds": [[i, j, f...]...], "label": 0|1}.
GraphDataset load_graph_jsonl(const std::filesystem::path& path, const std::string& split);
void write_graph_jsonl(const std::filesystem::path& path, const GraphDataset& dataset);

// Two graph families separated by a planted motif: positives contain a
// triple bond between a type-4 and a type-5 atom, negatives never do. `shift`
// grows the molecules to model out-of-distribution test sets.
GraphDataset make_synthetic_graphs(std::uint64_t seed, std::size_t count, const std::string& split = "train",
                                   int shift = 0);

// Layout of the synthetic features.
inline constexpr Index kSyntheticAtomTypes = 6;
inline constexpr Index kSyntheticAtomFeatures = kSyntheticAtomTypes + 1;  // one-hot + charge
inline constexpr Index kSyntheticBondTypes = 4;                           // single, double, triple, aromatic
bool has_planted_motif(const GraphExample& g);

// Fisher-Yates permutation of [0, count).
std::vector<std::size_t> shuffle_order(std::size_t count, std::uint64_t seed);

}  // namespace fhrr::io
