#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "chainopt/smoothness.hpp"

namespace chainopt {

struct LayerRow {
  std::string desc;
  StageConstants constants;
  SmoothTriple after;
};

struct SmoothReport {
  std::string name;
  std::vector<LayerRow> rows;
  SmoothTriple out;
};

SmoothReport smoothness_report(const std::string& name, const ChainSpec& spec, const BoundedDomain& dom);

// log(b) - log(a) per field; NaN when both are infinite
struct Comparison {
  std::string a, b;
  double dlog_m = 0.0, dlog_ell = 0.0, dlog_L = 0.0;
};
Comparison compare(const SmoothReport& a, const SmoothReport& b);

// natural log with 12 significant digits, "inf" or "-inf"
std::string log12(LogReal x);
std::string describe_layer(const LayerSpec& L, const LayerShapes& sh);

void print_report(std::ostream& os, const SmoothReport& r);
void print_comparison(std::ostream& os, const Comparison& c);

}  // namespace chainopt
