#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace simspoof {

struct SelfCheckEntry {
  std::string name;
  double measured = 0.0;
  double tolerance = 0.0;
  bool passed = false;
};

// Gradient checks on every differentiable module plus the closed-form,
// loss-degeneracy, episode-count and EER oracles. Failures are reported, not
// thrown.
std::vector<SelfCheckEntry> selfcheck(std::uint64_t seed = 7);

// One line per entry; returns true when every entry passed.
bool print_selfcheck(std::ostream& out, const std::vector<SelfCheckEntry>& entries);

}  // namespace simspoof
