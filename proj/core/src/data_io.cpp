#include "fhrr/data_io.hpp"

#include <zlib.h>

#include <algorithm>
#include <fstream>
#include <iterator>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "fhrr/error.hpp"

namespace fhrr::io {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::vector<std::uint8_t> inflate_gzip(const std::vector<std::uint8_t>& in, const fs::path& path) {
  z_stream zs{};
  require(inflateInit2(&zs, 16 + MAX_WBITS) == Z_OK, ErrorKind::Format, path.string() + ": zlib init failed");
  std::vector<std::uint8_t> out;
  std::vector<std::uint8_t> buf(1 << 16);
  zs.next_in = const_cast<Bytef*>(in.data());
  zs.avail_in = static_cast<uInt>(in.size());
  int rc = Z_OK;
  while (rc != Z_STREAM_END) {
    zs.next_out = buf.data();
    zs.avail_out = static_cast<uInt>(buf.size());
    rc = inflate(&zs, Z_NO_FLUSH);
    if (rc != Z_OK && rc != Z_STREAM_END) {
      const auto offset = zs.total_in;
      inflateEnd(&zs);
      fail(ErrorKind::Format, path.string() + ": corrupt gzip stream near compressed offset " + std::to_string(offset));
    }
    out.insert(out.end(), buf.data(), buf.data() + (buf.size() - zs.avail_out));
    if (rc != Z_STREAM_END && zs.avail_in == 0 && zs.avail_out != 0) {
      inflateEnd(&zs);
      fail(ErrorKind::Format, path.string() + ": truncated gzip stream");
    }
  }
  inflateEnd(&zs);
  return out;
}

std::uint32_t read_be32(const std::vector<std::uint8_t>& b, std::size_t offset, const fs::path& path) {
  require(offset + 4 <= b.size(), ErrorKind::Format,
          path.string() + ": truncated header at byte offset " + std::to_string(offset));
  return (std::uint32_t{b[offset]} << 24) | (std::uint32_t{b[offset + 1]} << 16) |
         (std::uint32_t{b[offset + 2]} << 8) | std::uint32_t{b[offset + 3]};
}

void put_be32(std::ostream& os, std::uint32_t v) {
  const char bytes[] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8),
                        static_cast<char>(v)};
  os.write(bytes, 4);
}

std::string hex32(std::uint32_t v) {
  std::ostringstream os;
  os << "0x" << std::hex;
  os.width(8);
  os.fill('0');
  os << v;
  return os.str();
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(os), ErrorKind::DataNotFound, path.string() + ": cannot open for writing");
  return os;
}

}  // namespace

std::vector<std::uint8_t> read_maybe_gzip(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  require(static_cast<bool>(is), ErrorKind::DataNotFound, path.string() + ": file not found");
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(fs::file_size(path)));
  is.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  require(is.gcount() == static_cast<std::streamsize>(bytes.size()), ErrorKind::Format,
          path.string() + ": short read at byte offset " + std::to_string(is.gcount()));
  if (bytes.size() >= 2 && bytes[0] == 0x1f && bytes[1] == 0x8b) return inflate_gzip(bytes, path);
  return bytes;
}

IdxImages load_idx_images(const fs::path& path) {
  const auto bytes = read_maybe_gzip(path);
  const std::uint32_t magic = read_be32(bytes, 0, path);
  require(magic == kIdxImageMagic, ErrorKind::Format,
          path.string() + ": byte offset 0: magic " + hex32(magic) + " is not an IDX image file (" +
              hex32(kIdxImageMagic) + ")");
  IdxImages out;
  out.count = read_be32(bytes, 4, path);
  out.rows = read_be32(bytes, 8, path);
  out.cols = read_be32(bytes, 12, path);
  const std::size_t payload = std::size_t{out.count} * out.rows * out.cols;
  require(bytes.size() - 16 >= payload, ErrorKind::Format,
          path.string() + ": truncated payload: header promises " + std::to_string(payload) + " bytes after offset 16, found " +
              std::to_string(bytes.size() - 16));
  require(bytes.size() - 16 == payload, ErrorKind::Format,
          path.string() + ": trailing bytes after offset " + std::to_string(16 + payload));
  out.pixels.assign(bytes.begin() + 16, bytes.end());
  return out;
}

std::vector<std::uint8_t> load_idx_labels(const fs::path& path) {
  const auto bytes = read_maybe_gzip(path);
  const std::uint32_t magic = read_be32(bytes, 0, path);
  require(magic == kIdxLabelMagic, ErrorKind::Format,
          path.string() + ": byte offset 0: magic " + hex32(magic) + " is not an IDX label file (" +
              hex32(kIdxLabelMagic) + ")");
  const std::uint32_t count = read_be32(bytes, 4, path);
  require(bytes.size() - 8 >= count, ErrorKind::Format,
          path.string() + ": truncated payload: header promises " + std::to_string(count) + " labels after offset 8, found " +
              std::to_string(bytes.size() - 8));
  require(bytes.size() - 8 == count, ErrorKind::Format,
          path.string() + ": trailing bytes after offset " + std::to_string(8 + std::size_t{count}));
  return {bytes.begin() + 8, bytes.end()};
}

void write_idx_images(const fs::path& path, const IdxImages& images) {
  require(images.pixels.size() == std::size_t{images.count} * images.rows * images.cols, ErrorKind::Contract,
          "write_idx_images: pixel count does not match header");
  auto os = open_out(path);
  put_be32(os, kIdxImageMagic);
  put_be32(os, images.count);
  put_be32(os, images.rows);
  put_be32(os, images.cols);
  os.write(reinterpret_cast<const char*>(images.pixels.data()), static_cast<std::streamsize>(images.pixels.size()));
}

void write_idx_labels(const fs::path& path, const std::vector<std::uint8_t>& labels) {
  auto os = open_out(path);
  put_be32(os, kIdxLabelMagic);
  put_be32(os, static_cast<std::uint32_t>(labels.size()));
  os.write(reinterpret_cast<const char*>(labels.data()), static_cast<std::streamsize>(labels.size()));
}

// ---------------------------------------------------------------------------
// Image datasets

Matrix ImageDataset::image(std::size_t i) const {
  require(i < size(), ErrorKind::Contract, "image index out of range");
  Matrix m(28, 28);
  const std::uint8_t* p = pixels.data() + i * 784;
  for (Index k = 0; k < 784; ++k) m.data()[k] = static_cast<Real>(p[k]) / Real(255);
  return m;
}

ImageDataset ImageDataset::head(std::size_t count) const {
  if (count == 0 || count >= size()) return *this;
  return slice(0, count);
}

ImageDataset ImageDataset::slice(std::size_t begin, std::size_t end) const {
  require(begin <= end && end <= size(), ErrorKind::Contract, "image slice out of range");
  ImageDataset out;
  out.split = split;
  out.pixels.assign(pixels.begin() + static_cast<std::ptrdiff_t>(begin * 784),
                    pixels.begin() + static_cast<std::ptrdiff_t>(end * 784));
  out.labels.assign(labels.begin() + static_cast<std::ptrdiff_t>(begin), labels.begin() + static_cast<std::ptrdiff_t>(end));
  return out;
}

ImageDataset make_image_dataset(IdxImages images, std::vector<std::uint8_t> labels, std::string split) {
  require(images.rows == 28 && images.cols == 28, ErrorKind::Schema,
          "images are " + std::to_string(images.rows) + "x" + std::to_string(images.cols) + ", expected 28x28");
  require(images.count == labels.size(), ErrorKind::Schema,
          std::to_string(images.count) + " images but " + std::to_string(labels.size()) + " labels");
  for (std::size_t i = 0; i < labels.size(); ++i) {
    require(labels[i] < 10, ErrorKind::Schema,
            "label " + std::to_string(labels[i]) + " at index " + std::to_string(i) + " (byte offset " +
                std::to_string(8 + i) + ") is not in 0..9");
  }
  ImageDataset out;
  out.pixels = std::move(images.pixels);
  out.labels = std::move(labels);
  out.split = std::move(split);
  return out;
}

fs::path resolve_data_file(const fs::path& dir, const std::string& stem) {
  const fs::path plain = dir / stem;
  if (fs::exists(plain)) return plain;
  const fs::path gz = dir / (stem + ".gz");
  if (fs::exists(gz)) return gz;
  fail(ErrorKind::DataNotFound, plain.string() + "[.gz]: file not found");
}

ImageDataset load_image_split(const fs::path& dir, const std::string& prefix, const std::string& split) {
  const fs::path images = resolve_data_file(dir, prefix + "-images-idx3-ubyte");
  const fs::path labels = resolve_data_file(dir, prefix + "-labels-idx1-ubyte");
  return make_image_dataset(load_idx_images(images), load_idx_labels(labels), split);
}

// ---------------------------------------------------------------------------
// Graph datasets

void finalize(GraphDataset& dataset) {
  dataset.max_edges = 0;
  dataset.atom_features = 0;
  dataset.bond_features = 0;
  for (std::size_t e = 0; e < dataset.examples.size(); ++e) {
    const GraphExample& g = dataset.examples[e];
    validate(g);
    for (const auto& atom : g.atoms) {
      const auto width = static_cast<Index>(atom.size());
      if (dataset.atom_features == 0) dataset.atom_features = width;
      require(width == dataset.atom_features && width > 0, ErrorKind::Schema,
              "example " + std::to_string(e) + ": atom feature length " + std::to_string(width) + " != " +
                  std::to_string(dataset.atom_features));
    }
    for (const auto& bond : g.bonds) {
      const auto width = static_cast<Index>(bond.features.size());
      if (dataset.bond_features == 0) dataset.bond_features = width;
      require(width == dataset.bond_features && width > 0, ErrorKind::Schema,
              "example " + std::to_string(e) + ": bond feature length " + std::to_string(width) + " != " +
                  std::to_string(dataset.bond_features));
    }
    dataset.max_edges = std::max<Index>(dataset.max_edges, static_cast<Index>(g.bonds.size()));
  }
}

GraphDataset load_graph_jsonl(const fs::path& path, const std::string& split) {
  std::ifstream is(path);
  require(static_cast<bool>(is), ErrorKind::DataNotFound, path.string() + ": file not found");
  GraphDataset out;
  out.split = split;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no) + ": ";
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      fail(ErrorKind::Format, where + "malformed JSON: " + e.what());
    }
    require(j.is_object() && j.contains("atoms") && j.contains("bonds") && j.contains("label"), ErrorKind::Format,
            where + "expected an object with atoms, bonds and label");
    require(j["atoms"].is_array() && j["bonds"].is_array(), ErrorKind::Format, where + "atoms and bonds must be arrays");
    require(j["label"].is_number_integer(), ErrorKind::Format, where + "label must be an integer");

    GraphExample g;
    g.label = j["label"].get<int>();
    require(g.label == 0 || g.label == 1, ErrorKind::Schema, where + "label must be 0 or 1");
    for (const auto& atom : j["atoms"]) {
      require(atom.is_array(), ErrorKind::Format, where + "atom entry must be an array");
      std::vector<Real> f;
      for (const auto& v : atom) {
        require(v.is_number(), ErrorKind::Format, where + "atom feature must be numeric");
        f.push_back(v.get<Real>());
      }
      g.atoms.push_back(std::move(f));
    }
    for (const auto& bond : j["bonds"]) {
      require(bond.is_array() && bond.size() >= 3, ErrorKind::Format, where + "bond must be [i, j, features...]");
      require(bond[0].is_number_integer() && bond[1].is_number_integer(), ErrorKind::Format,
              where + "bond endpoints must be integers");
      Bond b;
      b.from = bond[0].get<Index>();
      b.to = bond[1].get<Index>();
      const auto atoms = static_cast<Index>(g.atoms.size());
      require(b.from >= 0 && b.from < atoms && b.to >= 0 && b.to < atoms, ErrorKind::Schema,
              where + "bond index out of range (" + std::to_string(b.from) + ", " + std::to_string(b.to) + ") for " +
                  std::to_string(atoms) + " atoms");
      for (std::size_t k = 2; k < bond.size(); ++k) {
        require(bond[k].is_number(), ErrorKind::Format, where + "bond feature must be numeric");
        b.features.push_back(bond[k].get<Real>());
      }
      g.bonds.push_back(std::move(b));
    }
    require(!g.atoms.empty(), ErrorKind::Schema, where + "graph has no atoms");
    for (const auto& atom : g.atoms) {
      const auto width = static_cast<Index>(atom.size());
      if (out.atom_features == 0) out.atom_features = width;
      require(width == out.atom_features && width > 0, ErrorKind::Schema,
              where + "atom feature length " + std::to_string(width) + " != " + std::to_string(out.atom_features));
    }
    for (const Bond& b : g.bonds) {
      const auto width = static_cast<Index>(b.features.size());
      if (out.bond_features == 0) out.bond_features = width;
      require(width == out.bond_features, ErrorKind::Schema,
              where + "bond feature length " + std::to_string(width) + " != " + std::to_string(out.bond_features));
    }
    out.examples.push_back(std::move(g));
  }
  require(!out.examples.empty(), ErrorKind::Schema, path.string() + ": empty dataset");
  finalize(out);
  return out;
}

void write_graph_jsonl(const fs::path& path, const GraphDataset& dataset) {
  auto os = open_out(path);
  for (const GraphExample& g : dataset.examples) {
    json j;
    j["atoms"] = json::array();
    for (const auto& atom : g.atoms) j["atoms"].push_back(atom);
    j["bonds"] = json::array();
    for (const Bond& b : g.bonds) {
      json entry = json::array({b.from, b.to});
      for (Real f : b.features) entry.push_back(f);
      j["bonds"].push_back(std::move(entry));
    }
    j["label"] = g.label;
    os << j.dump() << '\n';
  }
}

// ---------------------------------------------------------------------------
// Synthetic graphs

namespace {

constexpr int kMotifFrom = 4;
constexpr int kMotifTo = 5;
constexpr int kTriple = 2;

int atom_type(const std::vector<Real>& f) {
  return static_cast<int>(std::max_element(f.begin(), f.begin() + kSyntheticAtomTypes) - f.begin());
}

int bond_type(const Bond& b) {
  return static_cast<int>(std::max_element(b.features.begin(), b.features.end()) - b.features.begin());
}

bool is_motif(const GraphExample& g, const Bond& b) {
  if (bond_type(b) != kTriple) return false;
  const int s = atom_type(g.atoms[static_cast<std::size_t>(b.from)]);
  const int t = atom_type(g.atoms[static_cast<std::size_t>(b.to)]);
  return (s == kMotifFrom && t == kMotifTo) || (s == kMotifTo && t == kMotifFrom);
}

std::vector<Real> one_hot(int k, Index width) {
  std::vector<Real> f(static_cast<std::size_t>(width), Real(0));
  f[static_cast<std::size_t>(k)] = 1;
  return f;
}

}  // namespace

bool has_planted_motif(const GraphExample& g) {
  return std::any_of(g.bonds.begin(), g.bonds.end(), [&](const Bond& b) { return is_motif(g, b); });
}

GraphDataset make_synthetic_graphs(std::uint64_t seed, std::size_t count, const std::string& split, int shift) {
  require(count >= 2, ErrorKind::Contract, "synthetic graphs: count must be at least 2");
  require(shift >= 0, ErrorKind::Contract, "synthetic graphs: shift must be non-negative");
  Rng rng(seed);
  const int min_atoms = 6 + 2 * shift;
  const int max_atoms = 12 + 4 * shift;
  std::uniform_int_distribution<int> atom_count(min_atoms, max_atoms);
  std::uniform_int_distribution<int> any_atom(0, static_cast<int>(kSyntheticAtomTypes) - 1);
  std::uniform_int_distribution<int> plain_bond(0, 2);  // single, double, aromatic
  std::normal_distribution<Real> charge(0, Real(0.05));
  std::bernoulli_distribution coin(0.5);

  GraphDataset out;
  out.split = split;
  out.examples.reserve(count);
  for (std::size_t e = 0; e < count; ++e) {
    GraphExample g;
    g.label = static_cast<int>(e % 2);
    const int atoms = atom_count(rng);
    for (int a = 0; a < atoms; ++a) {
      auto f = one_hot(any_atom(rng), kSyntheticAtomFeatures);
      f.back() = charge(rng);
      g.atoms.push_back(std::move(f));
    }
    auto add_bond = [&](int from, int to, int type) {
      Bond b;
      b.from = from;
      b.to = to;
      b.features = one_hot(type, kSyntheticBondTypes);
      g.bonds.push_back(std::move(b));
    };
    auto random_plain = [&] {
      const int t = plain_bond(rng);
      return t == kTriple ? 3 : t;  // remap the triple slot to aromatic
    };
    // Spanning tree, then a few ring-closing bonds.
    for (int a = 1; a < atoms; ++a) add_bond(std::uniform_int_distribution<int>(0, a - 1)(rng), a, random_plain());
    const int extra = std::uniform_int_distribution<int>(0, atoms / 4)(rng);
    for (int k = 0; k < extra; ++k) {
      const int from = std::uniform_int_distribution<int>(0, atoms - 1)(rng);
      int to = std::uniform_int_distribution<int>(0, atoms - 2)(rng);
      if (to >= from) ++to;
      add_bond(from, to, random_plain());
    }
    // Triple bonds occur in both classes; only the 4-5 pairing is the motif.
    if (coin(rng)) {
      auto& b = g.bonds[std::uniform_int_distribution<std::size_t>(0, g.bonds.size() - 1)(rng)];
      b.features = one_hot(kTriple, kSyntheticBondTypes);
    }
    if (g.label == 1) {
      auto& b = g.bonds[std::uniform_int_distribution<std::size_t>(0, g.bonds.size() - 1)(rng)];
      auto& from = g.atoms[static_cast<std::size_t>(b.from)];
      auto& to = g.atoms[static_cast<std::size_t>(b.to)];
      const Real qf = from.back(), qt = to.back();
      from = one_hot(kMotifFrom, kSyntheticAtomFeatures);
      to = one_hot(kMotifTo, kSyntheticAtomFeatures);
      from.back() = qf;
      to.back() = qt;
      b.features = one_hot(kTriple, kSyntheticBondTypes);
    } else {
      for (Bond& b : g.bonds)
        if (is_motif(g, b)) b.features = one_hot(1, kSyntheticBondTypes);
    }
    out.examples.push_back(std::move(g));
  }
  // Interleave the classes deterministically.
  const auto order = shuffle_order(out.examples.size(), seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<GraphExample> shuffled;
  shuffled.reserve(order.size());
  for (std::size_t i : order) shuffled.push_back(std::move(out.examples[i]));
  out.examples = std::move(shuffled);
  finalize(out);
  return out;
}

std::vector<std::size_t> shuffle_order(std::size_t count, std::uint64_t seed) {
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = count; i > 1; --i) {
    const std::size_t j = std::uniform_int_distribution<std::size_t>(0, i - 1)(rng);
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

}  // namespace fhrr::io
