#include "chainopt/arch.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace chainopt {

ArchError::ArchError(int l, const std::string& msg)
    : std::runtime_error(l > 0 ? "line " + std::to_string(l) + ": " + msg : msg), line(l) {}

BoundedDomain ArchFile::domain() const {
  const Index tau = Index(spec.layers.size());
  BoundedDomain d;
  d.x0_norm = x0_norm;
  if (radii.size() == 1)
    d.radii.assign(size_t(tau), radii[0]);
  else
    d.radii = radii;
  d.validate(tau);
  return d;
}

namespace {

struct Line {
  int no;
  std::string head;
  std::map<std::string, std::string> kv;
};

Line tokenize(const std::string& raw, int no) {
  Line l{no, {}, {}};
  std::istringstream is(raw);
  std::string tok;
  is >> l.head;
  while (is >> tok) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == tok.size())
      throw ArchError(no, "expected key=value, got '" + tok + "'");
    const std::string k = tok.substr(0, eq);
    if (l.kv.count(k)) throw ArchError(no, "duplicate key '" + k + "'");
    l.kv[k] = tok.substr(eq + 1);
  }
  return l;
}

void allow(const Line& l, std::initializer_list<const char*> keys) {
  std::set<std::string> ok(keys.begin(), keys.end());
  for (const auto& [k, v] : l.kv)
    if (!ok.count(k)) throw ArchError(l.no, "unknown key '" + k + "' for '" + l.head + "'");
}

double num(const Line& l, const std::string& k) {
  const std::string& s = l.kv.at(k);
  size_t pos = 0;
  double v;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    throw ArchError(l.no, "bad number '" + s + "' for " + k);
  }
  if (pos != s.size()) throw ArchError(l.no, "bad number '" + s + "' for " + k);
  return v;
}

Index integer(const Line& l, const std::string& k, Index lo) {
  const double v = num(l, k);
  if (v != double(Index(v)) || Index(v) < lo)
    throw ArchError(l.no, k + " must be an integer >= " + std::to_string(lo));
  return Index(v);
}

Index get_int(const Line& l, const std::string& k, Index def, Index lo) {
  return l.kv.count(k) ? integer(l, k, lo) : def;
}

bool need(const Line& l, const std::string& k) {
  if (!l.kv.count(k)) throw ArchError(l.no, "'" + l.head + "' needs " + k + "=");
  return true;
}

// kernel=3 sets both kh and kw; kh=/kw= override.
void geometry(const Line& l, Index& kh, Index& kw, Index& sh, Index& sw, Index* ph, Index* pw) {
  const Index k = get_int(l, "kernel", kh, 1), s = get_int(l, "stride", sh, 1);
  kh = get_int(l, "kh", k, 1);
  kw = get_int(l, "kw", l.kv.count("kernel") ? k : kw, 1);
  sh = get_int(l, "sh", s, 1);
  sw = get_int(l, "sw", l.kv.count("stride") ? s : sw, 1);
  if (ph) {
    const Index p = get_int(l, "pad", 0, 0);
    *ph = get_int(l, "ph", p, 0);
    *pw = get_int(l, "pw", p, 0);
  }
}

bool flag(const Line& l, const std::string& k) {
  if (!l.kv.count(k)) return false;
  const std::string& v = l.kv.at(k);
  if (v == "1" || v == "true") return true;
  if (v == "0" || v == "false") return false;
  throw ArchError(l.no, k + " must be 0/1");
}

const std::map<std::string, ActKind>& plain_acts() {
  static const std::map<std::string, ActKind> m{{"identity", ActKind::Identity}, {"relu", ActKind::ReLU},
                                                {"softplus", ActKind::Softplus}, {"softplus0", ActKind::ShiftedSoftplus},
                                                {"sigmoid", ActKind::Sigmoid},   {"softmax", ActKind::Softmax}};
  return m;
}

}  // namespace

ArchFile parse_arch(const std::string& text) {
  ArchFile a;
  a.spec.layers.clear();
  std::istringstream is(text);
  std::string raw;
  int no = 0;
  bool have_input = false;
  int radius_line = 0;
  std::vector<int> layer_lines;
  while (std::getline(is, raw)) {
    ++no;
    if (const auto h = raw.find('#'); h != std::string::npos) raw.erase(h);
    if (raw.find_first_not_of(" \t\r") == std::string::npos) continue;
    const Line l = tokenize(raw, no);
    if (l.head == "input") {
      if (have_input) throw ArchError(no, "input given twice");
      have_input = true;
      if (l.kv.count("dim")) {
        allow(l, {"dim"});
        a.spec.input = {integer(l, "dim", 1), 1, 1};
      } else {
        allow(l, {"channels", "height", "width"});
        need(l, "channels") && need(l, "height") && need(l, "width");
        a.spec.input = {integer(l, "channels", 1), integer(l, "height", 1), integer(l, "width", 1)};
      }
    } else if (l.head == "batch") {
      allow(l, {"m"});
      need(l, "m");
      a.spec.batch = integer(l, "m", 1);
    } else if (l.head == "radius") {
      allow(l, {"R"});
      need(l, "R");
      a.radii.clear();
      radius_line = no;
      std::istringstream rs(l.kv.at("R"));
      std::string part;
      while (std::getline(rs, part, ',')) {
        Line tmp{no, "radius", {{"R", part}}};
        const double r = num(tmp, "R");
        if (!(r > 0)) throw ArchError(no, "radii must be positive");
        a.radii.push_back(r);
      }
      if (a.radii.empty()) throw ArchError(no, "empty radius list");
    } else if (l.head == "x0norm") {
      allow(l, {"value"});
      need(l, "value");
      a.x0_norm = num(l, "value");
      if (!(a.x0_norm >= 0)) throw ArchError(no, "x0norm must be nonnegative");
    } else if (l.head == "objective") {
      allow(l, {"kind"});
      need(l, "kind");
      const std::string k = l.kv.at("kind");
      if (k != "none" && k != "squared" && k != "logistic" && k != "convex-cluster")
        throw ArchError(no, "unknown objective '" + k + "'");
      a.objective = k;
    } else if (l.head == "conv") {
      allow(l, {"filters", "kernel", "stride", "pad", "kh", "kw", "sh", "sw", "ph", "pw", "residual"});
      need(l, "filters");
      LayerSpec s;
      s.kind = BiKind::Conv;
      s.out = integer(l, "filters", 1);
      geometry(l, s.kh, s.kw, s.sh, s.sw, &s.ph, &s.pw);
      s.residual = flag(l, "residual");
      a.spec.layers.push_back(s);
      layer_lines.push_back(no);
    } else if (l.head == "fc") {
      allow(l, {"out", "residual"});
      need(l, "out");
      LayerSpec s;
      s.kind = BiKind::FullyConnected;
      s.out = integer(l, "out", 1);
      s.residual = flag(l, "residual");
      a.spec.layers.push_back(s);
      layer_lines.push_back(no);
    } else if (l.head == "pass") {
      allow(l, {"residual"});
      LayerSpec s;
      s.kind = BiKind::PassThrough;
      s.residual = flag(l, "residual");
      a.spec.layers.push_back(s);
      layer_lines.push_back(no);
    } else {
      ActSpec act;
      if (plain_acts().count(l.head)) {
        allow(l, {});
        act.kind = plain_acts().at(l.head);
      } else if (l.head == "avgpool" || l.head == "maxpool") {
        allow(l, {"kernel", "stride", "kh", "kw", "sh", "sw"});
        act.kind = l.head == "avgpool" ? ActKind::AvgPool : ActKind::MaxPool;
        geometry(l, act.kh, act.kw, act.sh, act.sw, nullptr, nullptr);
      } else if (l.head == "batchnorm") {
        allow(l, {"eps"});
        need(l, "eps");
        act.kind = ActKind::BatchNorm;
        act.eps = num(l, "eps");
        if (!(act.eps > 0)) throw ArchError(no, "eps must be positive");
      } else {
        throw ArchError(no, "unknown record '" + l.head + "'");
      }
      if (a.spec.layers.empty()) throw ArchError(no, "activation '" + l.head + "' before any layer");
      a.spec.layers.back().acts.push_back(act);
    }
  }
  if (!have_input) throw ArchError(no, "missing input record");
  if (a.spec.layers.empty()) throw ArchError(no, "no layers");
  if (a.radii.size() != 1 && a.radii.size() != a.spec.layers.size())
    throw ArchError(radius_line, "radius list needs 1 or " + std::to_string(a.spec.layers.size()) + " entries");
  try {
    infer_shapes(a.spec);
  } catch (const DimensionError& e) {
    // message names the layer index; point at its line too
    const std::string msg = e.what();
    int line = no;
    if (msg.rfind("layer ", 0) == 0) {
      const size_t t = std::stoul(msg.substr(6));
      if (t >= 1 && t <= layer_lines.size()) line = layer_lines[t - 1];
    }
    throw ArchError(line, msg);
  }
  return a;
}

ArchFile load_arch(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ArchError(0, "cannot open " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_arch(ss.str());
}

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string geom(Index kh, Index kw, Index sh, Index sw) {
  std::string s = kh == kw ? " kernel=" + std::to_string(kh) : " kh=" + std::to_string(kh) + " kw=" + std::to_string(kw);
  s += sh == sw ? " stride=" + std::to_string(sh) : " sh=" + std::to_string(sh) + " sw=" + std::to_string(sw);
  return s;
}

}  // namespace

std::string emit_arch(const ArchFile& a) {
  std::ostringstream os;
  const Shape& in = a.spec.input;
  if (in.height == 1 && in.width == 1)
    os << "input dim=" << in.channels << '\n';
  else
    os << "input channels=" << in.channels << " height=" << in.height << " width=" << in.width << '\n';
  os << "batch m=" << a.spec.batch << '\n';
  os << "radius R=";
  for (size_t i = 0; i < a.radii.size(); ++i) os << (i ? "," : "") << fmt(a.radii[i]);
  os << '\n';
  os << "x0norm value=" << fmt(a.x0_norm) << '\n';
  os << "objective kind=" << a.objective << '\n';
  for (const auto& L : a.spec.layers) {
    switch (L.kind) {
      case BiKind::Conv:
        os << "conv filters=" << L.out << geom(L.kh, L.kw, L.sh, L.sw);
        if (L.ph == L.pw)
          os << " pad=" << L.ph;
        else
          os << " ph=" << L.ph << " pw=" << L.pw;
        break;
      case BiKind::FullyConnected: os << "fc out=" << L.out; break;
      case BiKind::PassThrough: os << "pass"; break;
    }
    if (L.residual) os << " residual=1";
    os << '\n';
    for (const auto& act : L.acts) {
      os << "  ";
      switch (act.kind) {
        case ActKind::AvgPool: os << "avgpool" << geom(act.kh, act.kw, act.sh, act.sw); break;
        case ActKind::MaxPool: os << "maxpool" << geom(act.kh, act.kw, act.sh, act.sw); break;
        case ActKind::BatchNorm: os << "batchnorm eps=" << fmt(act.eps); break;
        default: os << act_kind_name(act.kind); break;
      }
      os << '\n';
    }
  }
  return os.str();
}

}  // namespace chainopt
