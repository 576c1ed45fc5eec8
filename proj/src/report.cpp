#include "chainopt/report.hpp"

#include <cmath>
#include <cstdio>
#include <limits>

namespace chainopt {

std::string log12(LogReal x) {
  if (x.is_inf()) return "inf";
  if (x.is_zero()) return "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", x.log());
  return buf;
}

namespace {

std::string shape_str(const Shape& s) {
  if (s.height == 1 && s.width == 1) return std::to_string(s.channels);
  return std::to_string(s.channels) + "x" + std::to_string(s.height) + "x" + std::to_string(s.width);
}

double dlog(LogReal a, LogReal b) {
  if (a.is_inf() && b.is_inf()) return std::numeric_limits<double>::quiet_NaN();
  if (a.is_zero() && b.is_zero()) return 0.0;
  return b.log() - a.log();
}

}  // namespace

std::string describe_layer(const LayerSpec& L, const LayerShapes& sh) {
  std::string d;
  switch (L.kind) {
    case BiKind::Conv:
      d = "conv " + std::to_string(L.kh) + "x" + std::to_string(L.kw) + "/" + std::to_string(L.sh) + " pad " +
          std::to_string(L.ph);
      break;
    case BiKind::FullyConnected: d = "fc"; break;
    case BiKind::PassThrough: d = "pass"; break;
  }
  for (const auto& a : L.acts) d += std::string(" + ") + act_kind_name(a.kind);
  if (L.residual) d += " (residual)";
  return d + " -> " + shape_str(sh.out());
}

SmoothReport smoothness_report(const std::string& name, const ChainSpec& spec, const BoundedDomain& dom) {
  SmoothReport r;
  r.name = name;
  const auto shapes = infer_shapes(spec);
  const auto consts = catalog_constants(spec);
  const auto prop = propagate_chain(consts, dom);
  for (size_t t = 0; t < consts.size(); ++t)
    r.rows.push_back({describe_layer(spec.layers[t], shapes[t]), consts[t], prop.stages[t]});
  r.out = prop.out;
  return r;
}

Comparison compare(const SmoothReport& a, const SmoothReport& b) {
  return {a.name, b.name, dlog(a.out.m, b.out.m), dlog(a.out.ell, b.out.ell), dlog(a.out.L, b.out.L)};
}

void print_report(std::ostream& os, const SmoothReport& r) {
  os << "# " << r.name << " (natural logs)\n";
  os << "layer | description | log L_b | log l^u | log l^x | activations (name: log m, log l, log L, log |grad a(0)|, "
        "log |a(0)|) | log m_t | log l_t | log L_t\n";
  for (size_t t = 0; t < r.rows.size(); ++t) {
    const auto& row = r.rows[t];
    os << t + 1 << " | " << row.desc << " | " << log12(row.constants.b.Lb) << " | " << log12(row.constants.b.lu)
       << " | " << log12(row.constants.b.lx) << " |";
    for (const auto& a : row.constants.acts)
      os << ' ' << a.name << ": " << log12(a.m) << ", " << log12(a.ell) << ", " << log12(a.L) << ", "
         << log12(a.grad0) << ", " << log12(a.val0) << ';';
    os << " | " << log12(row.after.m) << " | " << log12(row.after.ell) << " | " << log12(row.after.L) << '\n';
  }
  os << "result " << r.name << ": log m = " << log12(r.out.m) << ", log l = " << log12(r.out.ell)
     << ", log L = " << log12(r.out.L) << '\n';
}

void print_comparison(std::ostream& os, const Comparison& c) {
  char buf[200];
  std::snprintf(buf, sizeof buf, "compare %s -> %s: dlog m = %.12g, dlog l = %.12g, dlog L = %.12g\n", c.a.c_str(),
                c.b.c_str(), c.dlog_m, c.dlog_ell, c.dlog_L);
  os << buf;
}

}  // namespace chainopt
