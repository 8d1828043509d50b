#pragma once

#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "fhrr/types.hpp"

namespace fhrr::ad {

enum class ParamKind : std::uint8_t {
  Complex,  // stored in `cplx`
  Real,     // stored in `real`
  Phase,    // stored in `real`, wrapped into [-1, 1) after every update
};

struct Parameter {
  std::string name;
  ParamKind kind = ParamKind::Real;
  Matrix real;
  CMatrix cplx;
  bool trainable = true;

  static Parameter complex(std::string name, CMatrix value);
  static Parameter real_valued(std::string name, Matrix value);
  static Parameter phase(std::string name, Matrix value);

  bool is_complex() const noexcept { return kind == ParamKind::Complex; }
  Index rows() const noexcept { return is_complex() ? cplx.rows() : real.rows(); }
  Index cols() const noexcept { return is_complex() ? cplx.cols() : real.cols(); }
  // Number of real scalars (complex entries count twice).
  Index scalar_count() const noexcept { return rows() * cols() * (is_complex() ? 2 : 1); }
};

// Per-parameter gradient arrays, shaped like their parameters. Complex
// gradients hold dL/d(re) + i dL/d(im).
class Gradient {
 public:
  struct Slot {
    const Parameter* param = nullptr;
    Matrix real;
    CMatrix cplx;
  };

  Gradient() = default;
  explicit Gradient(std::span<Parameter* const> params);

  bool contains(const Parameter& p) const { return index_.contains(&p); }
  Slot& slot(const Parameter& p);
  const Slot& slot(const Parameter& p) const;
  std::span<Slot> slots() noexcept { return slots_; }
  std::span<const Slot> slots() const noexcept { return slots_; }

  // Elementwise accumulation; both gradients must cover the same parameters
  // in the same order.
  void add(const Gradient& other);
  void scale(Real factor);
  void set_zero();
  bool all_finite() const;

 private:
  std::vector<Slot> slots_;
  std::unordered_map<const Parameter*, std::size_t> index_;
};

}  // namespace fhrr::ad
