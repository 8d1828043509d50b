#pragma once

#include <doctest.h>

#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>

#include "fhrr/error.hpp"
#include "fhrr/vsa.hpp"

namespace fhrr::test {

// Runs `fn` and checks that it throws fhrr::Error of the given kind.
template <typename Fn>
void check_error(Fn&& fn, ErrorKind kind) {
  bool thrown = false;
  try {
    fn();
  } catch (const Error& e) {
    thrown = true;
    CHECK_MESSAGE(e.kind() == kind, "got ", to_string(e.kind()), ": ", e.what());
  }
  CHECK_MESSAGE(thrown, "expected ", to_string(kind));
}

// Message of the fhrr::Error thrown by `fn`, or "" if none.
template <typename Fn>
std::string error_message(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

inline Symbol sym(std::initializer_list<Real> v) {
  RowVector r(static_cast<Index>(v.size()));
  Index i = 0;
  for (Real x : v) r[i++] = x;
  return Symbol(std::move(r));
}

// Distance between phases on the circle of circumference 2.
inline Real circ(Real a, Real b) {
  const Real d = std::abs(a - b);
  return std::min(d, 2 - d);
}

inline Real max_circ(const Matrix& a, const Matrix& b) {
  Real m = 0;
  for (Index i = 0; i < a.size(); ++i) m = std::max(m, circ(a.data()[i], b.data()[i]));
  return m;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() / ("fhrr_test_" + tag + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace fhrr::test
