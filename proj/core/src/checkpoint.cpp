#include "fhrr/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "fhrr/error.hpp"

namespace fhrr::ckpt {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr std::uint8_t kDtypeF64 = 1;

class Writer {
 public:
  template <typename T>
  void put(T v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    out.insert(out.end(), p, p + sizeof(T));
  }
  void put_bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    out.insert(out.end(), p, p + n);
  }
  std::vector<std::uint8_t> out;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : bytes_(b) {}
  template <typename T>
  T get(const char* what) {
    T v;
    std::memcpy(&v, take(sizeof(T), what), sizeof(T));
    return v;
  }
  const std::uint8_t* take(std::size_t n, const char* what) {
    if (n > bytes_.size() - pos_)
      fail(ErrorKind::Format, std::string("checkpoint truncated reading ") + what + " at byte " + std::to_string(pos_));
    const std::uint8_t* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }
  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

NamedArray from_matrix(std::string name, const Matrix& m) {
  NamedArray a{std::move(name), {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())}, {}};
  a.data.assign(m.data(), m.data() + m.size());
  return a;
}

void into_matrix(const NamedArray& a, Matrix& m) {
  require(a.shape.size() == 2 && a.shape[0] == static_cast<std::uint64_t>(m.rows()) &&
              a.shape[1] == static_cast<std::uint64_t>(m.cols()),
          ErrorKind::CheckpointMismatch,
          "array '" + a.name + "' has shape " +
              (a.shape.size() == 2 ? std::to_string(a.shape[0]) + "x" + std::to_string(a.shape[1]) : "?") +
              ", model expects " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<Real>(a.data[static_cast<std::size_t>(i)]);
}

const NamedArray& need(const Checkpoint& c, const std::string& name) {
  const NamedArray* a = c.find(name);
  require(a != nullptr, ErrorKind::CheckpointMismatch, "checkpoint has no array '" + name + "'");
  return *a;
}

}  // namespace

const NamedArray* Checkpoint::find(const std::string& name) const {
  for (const auto& a : arrays)
    if (a.name == name) return &a;
  return nullptr;
}

Checkpoint snapshot(std::string metadata, std::span<const ad::Parameter* const> params) {
  Checkpoint c{std::move(metadata), {}};
  for (const ad::Parameter* p : params) {
    if (p->is_complex()) {
      c.arrays.push_back(from_matrix(p->name + ".re", p->cplx.real()));
      c.arrays.push_back(from_matrix(p->name + ".im", p->cplx.imag()));
    } else {
      c.arrays.push_back(from_matrix(p->name, p->real));
    }
  }
  return c;
}

std::vector<std::uint8_t> serialize(const Checkpoint& c) {
  Writer w;
  w.put_bytes(kMagic, sizeof kMagic);
  w.put(kVersion);
  w.put(static_cast<std::uint64_t>(c.metadata.size()));
  w.put_bytes(c.metadata.data(), c.metadata.size());
  w.put(static_cast<std::uint64_t>(c.arrays.size()));
  for (const auto& a : c.arrays) {
    std::uint64_t count = 1;
    for (auto d : a.shape) count *= d;
    require(count == a.data.size(), ErrorKind::Contract, "array '" + a.name + "' shape disagrees with its data");
    w.put(static_cast<std::uint32_t>(a.name.size()));
    w.put_bytes(a.name.data(), a.name.size());
    w.put(kDtypeF64);
    w.put(static_cast<std::uint32_t>(a.shape.size()));
    for (auto d : a.shape) w.put(d);
    w.put_bytes(a.data.data(), a.data.size() * sizeof(double));
  }
  return std::move(w.out);
}

Checkpoint deserialize(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  require(std::memcmp(r.take(sizeof kMagic, "magic"), kMagic, sizeof kMagic) == 0, ErrorKind::Format,
          "not a checkpoint file (bad magic)");
  const auto version = r.get<std::uint32_t>("version");
  require(version == kVersion, ErrorKind::Format, "unsupported checkpoint version " + std::to_string(version));
  Checkpoint c;
  const auto meta = r.get<std::uint64_t>("metadata length");
  require(meta <= r.remaining(), ErrorKind::Format, "checkpoint metadata length exceeds file size");
  const auto* m = r.take(meta, "metadata");
  c.metadata.assign(reinterpret_cast<const char*>(m), meta);
  const auto arrays = r.get<std::uint64_t>("array count");
  for (std::uint64_t k = 0; k < arrays; ++k) {
    NamedArray a;
    const auto name_len = r.get<std::uint32_t>("name length");
    const auto* n = r.take(name_len, "array name");
    a.name.assign(reinterpret_cast<const char*>(n), name_len);
    const auto dtype = r.get<std::uint8_t>("dtype");
    require(dtype == kDtypeF64, ErrorKind::Format, "array '" + a.name + "' has unsupported dtype");
    const auto rank = r.get<std::uint32_t>("rank");
    require(rank <= 8, ErrorKind::Format, "array '" + a.name + "' has implausible rank");
    std::uint64_t count = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      a.shape.push_back(r.get<std::uint64_t>("dimension"));
      require(a.shape.back() == 0 || count <= r.remaining() / a.shape.back(), ErrorKind::Format,
              "array '" + a.name + "' exceeds file size");
      count *= a.shape.back();
    }
    require(count <= r.remaining() / sizeof(double), ErrorKind::Format, "array '" + a.name + "' exceeds file size");
    a.data.resize(count);
    std::memcpy(a.data.data(), r.take(count * sizeof(double), "payload"), count * sizeof(double));
    c.arrays.push_back(std::move(a));
  }
  require(r.remaining() == 0, ErrorKind::Format,
          "checkpoint has " + std::to_string(r.remaining()) + " trailing bytes at byte " + std::to_string(r.pos()));
  return c;
}

void save(const std::filesystem::path& path, const Checkpoint& c) {
  const auto bytes = serialize(c);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(f), ErrorKind::DataNotFound, "cannot write checkpoint " + path.string());
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  require(static_cast<bool>(f), ErrorKind::DataNotFound, "failed writing checkpoint " + path.string());
}

Checkpoint load(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  require(static_cast<bool>(f), ErrorKind::DataNotFound, "checkpoint not found: " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

void restore(const Checkpoint& c, std::span<ad::Parameter* const> params) {
  for (ad::Parameter* p : params) {
    if (p->is_complex()) {
      Matrix re(p->rows(), p->cols()), im(p->rows(), p->cols());
      into_matrix(need(c, p->name + ".re"), re);
      into_matrix(need(c, p->name + ".im"), im);
      p->cplx.real() = re;
      p->cplx.imag() = im;
    } else {
      into_matrix(need(c, p->name), p->real);
    }
  }
}

}  // namespace fhrr::ckpt
