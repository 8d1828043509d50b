#include "fhrr/parameter.hpp"

#include "fhrr/error.hpp"

namespace fhrr::ad {

Parameter Parameter::complex(std::string name, CMatrix value) {
  Parameter p;
  p.name = std::move(name);
  p.kind = ParamKind::Complex;
  p.cplx = std::move(value);
  return p;
}

Parameter Parameter::real_valued(std::string name, Matrix value) {
  Parameter p;
  p.name = std::move(name);
  p.kind = ParamKind::Real;
  p.real = std::move(value);
  return p;
}

Parameter Parameter::phase(std::string name, Matrix value) {
  Parameter p;
  p.name = std::move(name);
  p.kind = ParamKind::Phase;
  p.real = std::move(value);
  return p;
}

Gradient::Gradient(std::span<Parameter* const> params) {
  slots_.reserve(params.size());
  for (Parameter* p : params) {
    require(p != nullptr, ErrorKind::Contract, "gradient: null parameter");
    require(!index_.contains(p), ErrorKind::Contract, "gradient: duplicate parameter " + p->name);
    Slot s;
    s.param = p;
    if (p->is_complex())
      s.cplx = CMatrix::Zero(p->rows(), p->cols());
    else
      s.real = Matrix::Zero(p->rows(), p->cols());
    index_.emplace(p, slots_.size());
    slots_.push_back(std::move(s));
  }
}

Gradient::Slot& Gradient::slot(const Parameter& p) {
  auto it = index_.find(&p);
  require(it != index_.end(), ErrorKind::Contract, "gradient has no slot for parameter " + p.name);
  return slots_[it->second];
}

const Gradient::Slot& Gradient::slot(const Parameter& p) const {
  auto it = index_.find(&p);
  require(it != index_.end(), ErrorKind::Contract, "gradient has no slot for parameter " + p.name);
  return slots_[it->second];
}

void Gradient::add(const Gradient& other) {
  require(other.slots_.size() == slots_.size(), ErrorKind::Contract, "gradient: parameter sets differ");
  for (std::size_t i = 0; i < slots_.size(); ++i) {
    require(other.slots_[i].param == slots_[i].param, ErrorKind::Contract, "gradient: parameter order differs");
    if (slots_[i].param->is_complex())
      slots_[i].cplx += other.slots_[i].cplx;
    else
      slots_[i].real += other.slots_[i].real;
  }
}

void Gradient::scale(Real factor) {
  for (Slot& s : slots_) {
    if (s.param->is_complex())
      s.cplx *= factor;
    else
      s.real *= factor;
  }
}

void Gradient::set_zero() {
  for (Slot& s : slots_) {
    s.cplx.setZero();
    s.real.setZero();
  }
}

bool Gradient::all_finite() const {
  for (const Slot& s : slots_) {
    if (s.param->is_complex()) {
      if (!s.cplx.real().allFinite() || !s.cplx.imag().allFinite()) return false;
    } else if (!s.real.allFinite()) {
      return false;
    }
  }
  return true;
}

}  // namespace fhrr::ad
