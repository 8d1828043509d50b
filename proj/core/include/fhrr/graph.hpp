#pragma once

#include <vector>

#include "fhrr/types.hpp"

namespace fhrr {

struct Bond {
  Index from = 0;
  Index to = 0;
  std::vector<Real> features;

  bool operator==(const Bond&) const = default;
};

// A molecule: per-atom feature vectors, bonds between atoms, binary label
// (1 = toxic).
struct GraphExample {
  std::vector<std::vector<Real>> atoms;
  std::vector<Bond> bonds;
  int label = 0;

  bool operator==(const GraphExample&) const = default;
};

// Throws Error(Schema) when bonds reference missing atoms or the graph has no atoms.
void validate(const GraphExample& g);

}  // namespace fhrr
