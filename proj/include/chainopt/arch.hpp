#pragma once

#include <string>
#include <vector>

#include "chainopt/chain.hpp"
#include "chainopt/smoothness.hpp"

namespace chainopt {

struct ArchFile {
  ChainSpec spec;
  std::vector<double> radii{1.0};  // one value for every layer, or one per layer
  double x0_norm = 1.0;
  std::string objective = "none";  // none | squared | logistic | convex-cluster
  bool operator==(const ArchFile&) const = default;

  BoundedDomain domain() const;
};

struct ArchError : std::runtime_error {
  ArchError(int line, const std::string& msg);
  int line;
};

ArchFile parse_arch(const std::string& text);
ArchFile load_arch(const std::string& path);
std::string emit_arch(const ArchFile& a);

}  // namespace chainopt
