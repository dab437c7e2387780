#include "equitrace/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <spdlog/fmt/fmt.h>

namespace equitrace {

namespace {

std::string trim(std::string_view s) {
  size_t a = 0;
  size_t b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return std::string(s.substr(a, b - a));
}

enum class Kind { PosInt, NonNegInt, Real, PosReal, Text, Choice, RealList, IntList, Matrix, Vector, PsiList };

struct KeySpec {
  const char* section;
  const char* key;  // "#" stands for a positive integer index
  Kind kind;
  std::vector<std::string> choices = {};
};

const std::vector<std::string>& section_order() {
  static const std::vector<std::string> order{"chart", "group", "flow", "bundle", "orbits", "trace", "oracle"};
  return order;
}

const std::vector<KeySpec>& schema() {
  static const std::vector<KeySpec> s{
      {"chart", "dim", Kind::PosInt},
      {"chart", "labels", Kind::Text},
      {"chart", "quotient", Kind::Choice, {"none", "mapping_torus"}},
      {"chart", "fiber", Kind::Choice, {"linear", "circle_lift"}},
      {"chart", "fiber.matrix", Kind::Matrix},
      {"chart", "fiber.kappa", Kind::Real},
      {"chart", "domain", Kind::Matrix},
      {"group", "kind", Kind::Choice, {"trivial", "free_abelian", "finite", "translation_line"}},
      {"group", "gen.#", Kind::Text},
      {"group", "direction", Kind::Vector},
      {"group", "window", Kind::Choice, {"bump", "constant", "suspension"}},
      {"group", "window.center", Kind::Vector},
      {"group", "window.radius", Kind::PosReal},
      {"group", "window.profile", Kind::Text},
      {"group", "g", Kind::Text},
      {"group", "radius", Kind::NonNegInt},
      {"flow", "u.#", Kind::Text},
      {"flow", "rtol", Kind::PosReal},
      {"flow", "atol", Kind::PosReal},
      {"flow", "t_max", Kind::PosReal},
      {"flow", "seed", Kind::NonNegInt},
      {"flow", "hypothesis_samples", Kind::PosInt},
      {"bundle", "rank", Kind::PosInt},
      {"bundle", "B.#.#", Kind::Text},
      {"bundle", "A.#.#", Kind::Text},
      {"bundle", "rho.#", Kind::Matrix},
      {"orbits", "window", Kind::RealList},
      {"orbits", "seed_box", Kind::Matrix},
      {"orbits", "seed_counts", Kind::IntList},
      {"orbits", "l_seeds", Kind::PosInt},
      {"orbits", "nondegeneracy", Kind::PosReal},
      {"trace", "psi", Kind::PsiList},
      {"trace", "sweep.min", Kind::Real},
      {"trace", "sweep.max", Kind::Real},
      {"trace", "sweep.count", Kind::NonNegInt},
      {"trace", "sweep.width", Kind::PosReal},
      {"oracle", "mode", Kind::Choice, {"mollified", "covering", "catmap"}},
      {"oracle", "eps", Kind::RealList},
      {"oracle", "psi", Kind::PsiList},
      {"oracle", "budget", Kind::PosReal},
      {"oracle", "grid_factor", Kind::PosReal},
      {"oracle", "quotient_model", Kind::Text},
      {"oracle", "covering_radius", Kind::NonNegInt},
      {"oracle", "catmap_n", Kind::PosInt},
  };
  return s;
}

bool is_index(std::string_view s) {
  if (s.empty() || s[0] == '0') return false;
  return std::all_of(s.begin(), s.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); });
}

bool matches(std::string_view pattern, std::string_view key) {
  size_t i = 0;
  size_t j = 0;
  while (i < pattern.size()) {
    if (pattern[i] == '#') {
      size_t e = j;
      while (e < key.size() && std::isdigit(static_cast<unsigned char>(key[e]))) ++e;
      if (!is_index(key.substr(j, e - j))) return false;
      j = e;
      ++i;
    } else {
      if (j >= key.size() || key[j] != pattern[i]) return false;
      ++i;
      ++j;
    }
  }
  return j == key.size();
}

const KeySpec* find_spec(const std::string& section, const std::string& key) {
  for (const auto& s : schema()) {
    if (section == s.section && matches(s.key, key)) return &s;
  }
  return nullptr;
}

// Schema position first, then numeric indices in natural order.
std::pair<size_t, std::vector<long>> order_key(const std::string& section, const std::string& key) {
  size_t pos = 0;
  for (size_t i = 0; i < schema().size(); ++i) {
    if (section == schema()[i].section && matches(schema()[i].key, key)) pos = i;
  }
  std::vector<long> nums;
  long cur = -1;
  for (char c : key) {
    if (std::isdigit(static_cast<unsigned char>(c))) {
      cur = (cur < 0 ? 0 : cur * 10) + (c - '0');
    } else if (cur >= 0) {
      nums.push_back(cur);
      cur = -1;
    }
  }
  if (cur >= 0) nums.push_back(cur);
  return {pos, nums};
}

double to_real(const std::string& text, const std::string& key) {
  const std::string t = trim(text);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size() || !std::isfinite(v)) {
    throw ValidationError(key, "expected a number, got '" + t + "'");
  }
  return v;
}

long to_int(const std::string& text, const std::string& key) {
  const std::string t = trim(text);
  long v = 0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size()) throw ValidationError(key, "expected an integer, got '" + t + "'");
  return v;
}

std::string num(double v) { return fmt::format("{}", v); }

void check_value(const KeySpec& spec, const std::string& key, const std::string& value) {
  switch (spec.kind) {
    case Kind::PosInt:
      if (to_int(value, key) <= 0) throw ValidationError(key, "must be positive");
      break;
    case Kind::NonNegInt:
      if (to_int(value, key) < 0) throw ValidationError(key, "must be non-negative");
      break;
    case Kind::Real: to_real(value, key); break;
    case Kind::PosReal:
      if (!(to_real(value, key) > 0.0)) throw ValidationError(key, "must be positive");
      break;
    case Kind::Text:
    case Kind::PsiList: break;
    case Kind::Choice:
      if (std::find(spec.choices.begin(), spec.choices.end(), value) == spec.choices.end()) {
        std::string all;
        for (const auto& c : spec.choices) all += (all.empty() ? "" : ", ") + c;
        throw ValidationError(key, "expected one of " + all + ", got '" + value + "'");
      }
      break;
    case Kind::RealList:
      for (const auto& v : split_list(value)) to_real(v, key);
      break;
    case Kind::IntList:
      for (const auto& v : split_list(value)) {
        if (to_int(v, key) <= 0) throw ValidationError(key, "counts must be positive");
      }
      break;
    case Kind::Matrix:
      try {
        parse_matrix_literal(value);
      } catch (const std::invalid_argument& e) {
        throw ValidationError(key, e.what());
      }
      break;
    case Kind::Vector:
      try {
        for (const auto& v : parse_vector_literal(value)) to_real(v, key);
      } catch (const std::invalid_argument& e) {
        throw ValidationError(key, e.what());
      }
      break;
  }
}

// Index of the bracket closing the one at `open`.
size_t closing(const std::string& s, size_t open) {
  int depth = 0;
  for (size_t i = open; i < s.size(); ++i) {
    if (s[i] == '[' || s[i] == '(') ++depth;
    if (s[i] == ']' || s[i] == ')') {
      if (--depth == 0) return i;
    }
  }
  throw std::invalid_argument("unbalanced brackets in '" + s + "'");
}

Mat numeric_matrix(const std::vector<std::vector<std::string>>& rows, const std::string& key) {
  const int r = static_cast<int>(rows.size());
  const int c = r == 0 ? 0 : static_cast<int>(rows[0].size());
  if (r > kMaxDim || c > kMaxDim) throw ValidationError(key, "matrix too large");
  Mat m(r, c);
  for (int i = 0; i < r; ++i) {
    if (static_cast<int>(rows[static_cast<size_t>(i)].size()) != c) throw ValidationError(key, "ragged matrix");
    for (int j = 0; j < c; ++j) m(i, j) = to_real(rows[static_cast<size_t>(i)][static_cast<size_t>(j)], key);
  }
  return m;
}

Vec numeric_vector(const std::vector<std::string>& xs, const std::string& key) {
  Vec v(static_cast<Eigen::Index>(xs.size()));
  for (size_t i = 0; i < xs.size(); ++i) v(static_cast<Eigen::Index>(i)) = to_real(xs[i], key);
  return v;
}

Expr expr_or_throw(const std::string& text, const std::vector<std::string>& labels, const std::string& key) {
  try {
    return Expr::parse(text, labels);
  } catch (const std::invalid_argument& e) {
    throw ValidationError(key, e.what());
  }
}

std::string box_literal(const Box& b) {
  std::string s = "[";
  for (int i = 0; i < b.dim(); ++i) s += (i ? ", [" : "[") + num(b.lo(i)) + ", " + num(b.hi(i)) + "]";
  return s + "]";
}

}  // namespace

std::vector<std::string> split_list(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::string cur;
  int depth = 0;
  for (char c : text) {
    if (c == '[' || c == '(') ++depth;
    if (c == ']' || c == ')') --depth;
    if (c == sep && depth == 0) {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  const std::string last = trim(cur);
  if (!last.empty() || !out.empty()) out.push_back(last);
  return out;
}

std::vector<std::string> parse_vector_literal(const std::string& text) {
  const std::string t = trim(text);
  if (t.size() < 2 || t.front() != '[' || closing(t, 0) != t.size() - 1) {
    throw std::invalid_argument("expected a vector literal '[a, b, ...]', got '" + t + "'");
  }
  return split_list(t.substr(1, t.size() - 2));
}

std::vector<std::vector<std::string>> parse_matrix_literal(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& row : parse_vector_literal(text)) rows.push_back(parse_vector_literal(row));
  return rows;
}

// ---------------------------------------------------------------------------

RunConfig RunConfig::parse(std::string_view text) {
  RunConfig cfg;
  std::string section;
  int line_no = 0;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    const std::string body = trim(hash == std::string::npos ? line : line.substr(0, hash));
    if (body.empty()) continue;
    if (body.front() == '[') {
      if (body.back() != ']') throw ParseError(line_no, "malformed section header '" + body + "'");
      section = trim(body.substr(1, body.size() - 2));
      if (std::find(section_order().begin(), section_order().end(), section) == section_order().end()) {
        throw ValidationError("[" + section + "]", fmt::format("unknown section (line {})", line_no));
      }
      cfg.values_[section];
      continue;
    }
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ParseError(line_no, "expected 'key = value', got '" + body + "'");
    const std::string key = trim(body.substr(0, eq));
    const std::string value = trim(body.substr(eq + 1));
    if (key.empty()) throw ParseError(line_no, "empty key");
    if (section.empty()) throw ParseError(line_no, "key '" + key + "' appears before any [section]");
    if (cfg.values_[section].count(key)) throw ParseError(line_no, "duplicate key '" + key + "'");
    const KeySpec* spec = find_spec(section, key);
    if (spec == nullptr) throw ValidationError(section + "." + key, fmt::format("unknown key (line {})", line_no));
    if (value.empty()) throw ParseError(line_no, "key '" + key + "' has no value");
    check_value(*spec, section + "." + key, value);
    cfg.values_[section][key] = value;
  }
  cfg.resolve();
  return cfg;
}

bool RunConfig::has(const std::string& section, const std::string& key) const {
  const auto it = values_.find(section);
  return it != values_.end() && it->second.count(key) > 0;
}

const std::string& RunConfig::get(const std::string& section, const std::string& key) const {
  const auto it = values_.find(section);
  if (it == values_.end() || !it->second.count(key)) throw ValidationError(section + "." + key, "missing");
  return it->second.at(key);
}

void RunConfig::set(const std::string& section, const std::string& key, const std::string& value) {
  const KeySpec* spec = find_spec(section, key);
  if (spec == nullptr) throw ValidationError(section + "." + key, "unknown key");
  check_value(*spec, section + "." + key, trim(value));
  values_[section][key] = trim(value);
}

void RunConfig::erase(const std::string& section, const std::string& key) {
  auto it = values_.find(section);
  if (it != values_.end()) it->second.erase(key);
}

std::vector<std::pair<std::string, std::string>> RunConfig::section(const std::string& name) const {
  std::vector<std::pair<std::string, std::string>> out;
  const auto it = values_.find(name);
  if (it == values_.end()) return out;
  for (const auto& kv : it->second) out.push_back(kv);
  std::sort(out.begin(), out.end(), [&](const auto& a, const auto& b) {
    return order_key(name, a.first) < order_key(name, b.first);
  });
  return out;
}

std::string RunConfig::to_text() const {
  std::string out;
  for (const auto& name : section_order()) {
    const auto kv = section(name);
    if (kv.empty()) continue;
    if (!out.empty()) out += "\n";
    out += "[" + name + "]\n";
    for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
  }
  return out;
}

void RunConfig::resolve() {
  auto def = [&](const std::string& s, const std::string& k, const std::string& v) {
    if (!has(s, k)) values_[s][k] = v;
  };
  if (!has("chart", "dim")) throw ValidationError("chart.dim", "missing");
  const long n = to_int(get("chart", "dim"), "chart.dim");
  if (n > kMaxDim) throw ValidationError("chart.dim", fmt::format("at most {} dimensions are supported", kMaxDim));

  if (!has("chart", "labels")) {
    std::string l;
    for (long i = 1; i <= n; ++i) l += (i > 1 ? ", x" : "x") + std::to_string(i);
    values_["chart"]["labels"] = l;
  }
  const auto labels = split_list(get("chart", "labels"));
  if (static_cast<long>(labels.size()) != n) throw ValidationError("chart.labels", "need one label per dimension");

  def("chart", "quotient", "none");
  const bool quotient = get("chart", "quotient") == "mapping_torus";
  if (quotient) {
    def("chart", "fiber", "linear");
    if (get("chart", "fiber") == "linear") {
      if (!has("chart", "fiber.matrix")) throw ValidationError("chart.fiber.matrix", "missing (linear fiber map)");
      erase("chart", "fiber.kappa");
    } else {
      def("chart", "fiber.kappa", "0.1");
      erase("chart", "fiber.matrix");
    }
    if (!has("chart", "domain")) {
      Box unit{Vec::Zero(n), Vec::Ones(n)};
      values_["chart"]["domain"] = box_literal(unit);
    }
  } else {
    for (const char* k : {"fiber", "fiber.matrix", "fiber.kappa"}) {
      if (has("chart", k)) throw ValidationError(std::string("chart.") + k, "only valid with quotient = mapping_torus");
    }
  }
  if (!has("chart", "domain")) throw ValidationError("chart.domain", "missing (sample box for coverage checks)");
  const Mat dom = numeric_matrix(parse_matrix_literal(get("chart", "domain")), "chart.domain");
  if (dom.rows() != n || dom.cols() != 2) throw ValidationError("chart.domain", "expected one [lo, hi] pair per dimension");
  for (long i = 0; i < n; ++i) {
    if (!(dom(i, 1) >= dom(i, 0))) throw ValidationError("chart.domain", "lo must not exceed hi");
  }

  def("group", "kind", "trivial");
  const std::string kind = get("group", "kind");
  def("group", "window", kind == "trivial" || kind == "finite" ? "constant" : "bump");
  const std::string window = get("group", "window");
  if (window == "bump") {
    if (!has("group", "window.center")) {
      std::string c = "[";
      for (long i = 0; i < n; ++i) c += (i ? ", " : "") + num(0.5 * (dom(i, 0) + dom(i, 1)));
      values_["group"]["window.center"] = c + "]";
    }
    def("group", "window.radius", "1");
    if (has("group", "window.profile")) throw ValidationError("group.window.profile", "only valid for suspension windows");
  } else if (window == "suspension") {
    def("group", "window.radius", "0.75");
    def("group", "window.profile", "1");
    if (has("group", "window.center")) throw ValidationError("group.window.center", "only valid for bump windows");
  } else {
    for (const char* k : {"window.center", "window.radius", "window.profile"}) {
      if (has("group", k)) throw ValidationError(std::string("group.") + k, "not used by constant windows");
    }
  }
  def("group", "g", "e");
  def("group", "radius", "8");
  if (kind == "translation_line" && !has("group", "direction")) throw ValidationError("group.direction", "missing");

  for (long i = 1; i <= n; ++i) {
    if (!has("flow", "u." + std::to_string(i))) throw ValidationError("flow.u." + std::to_string(i), "missing");
  }
  for (const auto& [k, v] : section("flow")) {
    if (k.rfind("u.", 0) == 0 && to_int(k.substr(2), "flow." + k) > n) throw ValidationError("flow." + k, "index exceeds chart.dim");
  }
  def("flow", "rtol", "1e-10");
  def("flow", "atol", "1e-12");
  def("flow", "t_max", "64");
  def("flow", "seed", "1");
  def("flow", "hypothesis_samples", "32");

  def("bundle", "rank", "1");
  const long rank = to_int(get("bundle", "rank"), "bundle.rank");
  if (rank > kMaxDim) throw ValidationError("bundle.rank", "too large");
  for (const auto& [k, v] : section("bundle")) {
    if (k[0] == 'B' || k[0] == 'A') {
      const auto parts = split_list(k.substr(2), '.');
      if (to_int(parts[0], k) > rank || to_int(parts[1], k) > rank) throw ValidationError("bundle." + k, "index exceeds rank");
    }
  }

  if (!has("orbits", "window")) throw ValidationError("orbits.window", "missing");
  const auto win = split_list(get("orbits", "window"));
  if (win.size() != 2) throw ValidationError("orbits.window", "expected 'l_min, l_max'");
  const double lmin = to_real(win[0], "orbits.window");
  const double lmax = to_real(win[1], "orbits.window");
  if (!(lmin < lmax)) throw ValidationError("orbits.window", "l_min must be below l_max");
  if (lmin <= 0.0 && lmax >= 0.0) throw ValidationError("orbits.window", "periods must avoid 0");
  if (std::max(std::abs(lmin), std::abs(lmax)) > to_real(get("flow", "t_max"), "flow.t_max")) {
    throw ValidationError("orbits.window", "exceeds flow.t_max");
  }
  def("orbits", "seed_box", get("chart", "domain"));
  const Mat sb = numeric_matrix(parse_matrix_literal(get("orbits", "seed_box")), "orbits.seed_box");
  if (sb.rows() != n || sb.cols() != 2) throw ValidationError("orbits.seed_box", "expected one [lo, hi] pair per dimension");
  if (!has("orbits", "seed_counts")) {
    std::string c;
    for (long i = 0; i < n; ++i) c += (i ? ", " : "") + std::string(sb(i, 1) > sb(i, 0) ? "8" : "1");
    values_["orbits"]["seed_counts"] = c;
  }
  if (static_cast<long>(split_list(get("orbits", "seed_counts")).size()) != n) {
    throw ValidationError("orbits.seed_counts", "need one count per dimension");
  }
  def("orbits", "l_seeds", "5");
  def("orbits", "nondegeneracy", "1e-8");

  def("trace", "sweep.min", num(lmin));
  def("trace", "sweep.max", num(lmax));
  def("trace", "sweep.count", "201");
  def("trace", "sweep.width", num(std::min(0.1, 0.5 * std::abs(lmin))));
  if (has("trace", "psi")) {
    for (const auto& p : split_list(get("trace", "psi"), ';')) {
      try {
        TestFunction::parse(p);
      } catch (const DomainError& e) {
        throw ValidationError("trace.psi", e.what());
      }
    }
  }

  def("oracle", "mode", "mollified");
  def("oracle", "eps", "0.08, 0.04, 0.02");
  if (!has("oracle", "psi") && has("trace", "psi")) values_["oracle"]["psi"] = split_list(get("trace", "psi"), ';')[0];
  if (has("oracle", "psi")) {
    try {
      TestFunction::parse(get("oracle", "psi"));
    } catch (const DomainError& e) {
      throw ValidationError("oracle.psi", e.what());
    }
  }
  def("oracle", "budget", "2e8");
  def("oracle", "grid_factor", "4");
  def("oracle", "covering_radius", "8");
  def("oracle", "catmap_n", "3");
  if (to_int(get("oracle", "catmap_n"), "oracle.catmap_n") > 12) throw ValidationError("oracle.catmap_n", "at most 12");
  const auto eps = split_list(get("oracle", "eps"));
  for (size_t i = 0; i < eps.size(); ++i) {
    if (!(to_real(eps[i], "oracle.eps") > 0.0)) throw ValidationError("oracle.eps", "widths must be positive");
    if (i > 0 && !(to_real(eps[i], "oracle.eps") < to_real(eps[i - 1], "oracle.eps"))) {
      throw ValidationError("oracle.eps", "ladder must be strictly decreasing");
    }
  }
}

// ---------------------------------------------------------------------------

namespace {

ActionMap parse_generator(const std::string& text, int n, const std::string& key) {
  const std::string t = trim(text);
  const auto sp = t.find_first_of(" \t[");
  const std::string word = t.substr(0, sp);
  const std::string rest = sp == std::string::npos ? "" : trim(t.substr(sp));
  try {
    if (word == "affine") {
      if (rest.empty() || rest[0] != '[') throw std::invalid_argument("expected 'affine [[..]] [..]'");
      const size_t end = closing(rest, 0);
      const Mat a = numeric_matrix(parse_matrix_literal(rest.substr(0, end + 1)), key);
      const Vec b = numeric_vector(parse_vector_literal(rest.substr(end + 1)), key);
      if (a.rows() != n || a.cols() != n || b.size() != n) throw std::invalid_argument("affine map has wrong dimension");
      return ActionMap::affine(a, b);
    }
    if (word == "suspension_sigma") return ActionMap::suspension_sigma(n, to_real(rest, key));
  } catch (const std::invalid_argument& e) {
    throw ValidationError(key, e.what());
  } catch (const DomainError& e) {
    throw ValidationError(key, e.what());
  }
  throw ValidationError(key, "expected 'affine [[..]] [..]' or 'suspension_sigma <kappa>'");
}

ExprMatrix expr_matrix(const std::vector<std::vector<std::string>>& rows, int rank, const std::vector<std::string>& labels,
                       const std::string& key) {
  if (static_cast<int>(rows.size()) != rank) throw ValidationError(key, "matrix must be rank x rank");
  ExprMatrix m = ExprMatrix::zeros(rank, rank);
  for (int i = 0; i < rank; ++i) {
    if (static_cast<int>(rows[static_cast<size_t>(i)].size()) != rank) throw ValidationError(key, "matrix must be rank x rank");
    for (int j = 0; j < rank; ++j) {
      m.entries[static_cast<size_t>(i * rank + j)] = expr_or_throw(rows[static_cast<size_t>(i)][static_cast<size_t>(j)], labels, key);
    }
  }
  return m;
}

}  // namespace

Model build_model(const RunConfig& cfg) {
  Model model;
  const int n = static_cast<int>(to_int(cfg.get("chart", "dim"), "chart.dim"));
  const auto labels = split_list(cfg.get("chart", "labels"));
  CoverSystem& sys = model.system;
  sys.dim = n;
  sys.labels = labels;

  const Mat dom = numeric_matrix(parse_matrix_literal(cfg.get("chart", "domain")), "chart.domain");
  sys.domain = Box{dom.col(0), dom.col(1)};

  try {
    if (cfg.get("chart", "quotient") == "mapping_torus") {
      if (cfg.get("chart", "fiber") == "linear") {
        const Mat l = numeric_matrix(parse_matrix_literal(cfg.get("chart", "fiber.matrix")), "chart.fiber.matrix");
        if (l.rows() != n - 1) throw ValidationError("chart.fiber.matrix", "must be (dim - 1) x (dim - 1)");
        sys.quotient = Quotient::mapping_torus_linear(l);
      } else {
        sys.quotient = Quotient::mapping_torus_circle(n - 1, to_real(cfg.get("chart", "fiber.kappa"), "chart.fiber.kappa"));
      }
    } else {
      sys.quotient = Quotient::none(n);
    }
  } catch (const DomainError& e) {
    throw ValidationError("chart.fiber", e.what());
  }

  std::vector<ActionMap> gens;
  for (const auto& [k, v] : cfg.section("group")) {
    if (k.rfind("gen.", 0) != 0) continue;
    if (to_int(k.substr(4), "group." + k) != static_cast<long>(gens.size()) + 1) {
      throw ValidationError("group." + k, "generators must be numbered 1, 2, ... without gaps");
    }
    gens.push_back(parse_generator(v, n, "group." + k));
  }
  const std::string kind = cfg.get("group", "kind");
  try {
    if (kind == "trivial") {
      if (!gens.empty()) throw ValidationError("group.gen.1", "trivial groups take no generators");
      sys.group = GroupModel::trivial(n);
    } else if (kind == "free_abelian") {
      if (gens.empty()) throw ValidationError("group.gen.1", "missing");
      sys.group = GroupModel::free_abelian(gens);
    } else if (kind == "finite") {
      if (gens.empty()) throw ValidationError("group.gen.1", "missing");
      sys.group = GroupModel::finite(gens);
    } else {
      const Vec dir = numeric_vector(parse_vector_literal(cfg.get("group", "direction")), "group.direction");
      if (dir.size() != n || dir.norm() == 0.0) throw ValidationError("group.direction", "need a nonzero vector of chart dimension");
      sys.group = GroupModel::translation_line(dir);
    }
  } catch (const DomainError& e) {
    throw ValidationError("group.gen", e.what());
  }

  std::vector<Expr> u;
  for (int i = 1; i <= n; ++i) {
    const std::string key = "u." + std::to_string(i);
    u.push_back(expr_or_throw(cfg.get("flow", key), labels, "flow." + key));
  }
  sys.flow = FlowField(labels, u);
  sys.flow.ode.rtol = to_real(cfg.get("flow", "rtol"), "flow.rtol");
  sys.flow.ode.atol = to_real(cfg.get("flow", "atol"), "flow.atol");
  sys.flow.t_max = to_real(cfg.get("flow", "t_max"), "flow.t_max");
  model.seed = static_cast<unsigned long>(to_int(cfg.get("flow", "seed"), "flow.seed"));
  model.hypothesis_samples = static_cast<int>(to_int(cfg.get("flow", "hypothesis_samples"), "flow.hypothesis_samples"));

  const int rank = static_cast<int>(to_int(cfg.get("bundle", "rank"), "bundle.rank"));
  const auto bundle_keys = cfg.section("bundle");
  if (bundle_keys.size() == 1 && rank == 1) {
    sys.bundle = BundleCocycle::trivial_line();
  } else {
    ExprMatrix b = ExprMatrix::zeros(rank, rank);
    ExprMatrix a = ExprMatrix::identity(rank);
    const size_t ngen = sys.group.kind() == GroupKind::TranslationLine ? 0 : gens.size();
    std::vector<ExprMatrix> rho(ngen, ExprMatrix::identity(rank));
    for (const auto& [k, v] : bundle_keys) {
      if (k == "rank") continue;
      if (k[0] == 'B' || k[0] == 'A') {
        const auto parts = split_list(k.substr(2), '.');
        const int i = static_cast<int>(to_int(parts[0], k)) - 1;
        const int j = static_cast<int>(to_int(parts[1], k)) - 1;
        (k[0] == 'B' ? b : a).entries[static_cast<size_t>(i * rank + j)] = expr_or_throw(v, labels, "bundle." + k);
      } else {
        const long gi = to_int(k.substr(4), k);
        if (gi > static_cast<long>(ngen)) throw ValidationError("bundle." + k, "no such group generator");
        rho[static_cast<size_t>(gi - 1)] = expr_matrix(parse_matrix_literal(v), rank, labels, "bundle." + k);
      }
    }
    sys.bundle = BundleCocycle(rank, b, a, rho);
  }

  WindowSpec ws;
  const std::string wk = cfg.get("group", "window");
  ws.kind = wk == "bump" ? WindowSpec::Kind::Bump : wk == "constant" ? WindowSpec::Kind::Constant : WindowSpec::Kind::Suspension;
  if (cfg.has("group", "window.center")) {
    ws.center = numeric_vector(parse_vector_literal(cfg.get("group", "window.center")), "group.window.center");
  } else {
    ws.center = Vec::Zero(n);
  }
  if (cfg.has("group", "window.radius")) ws.radius = to_real(cfg.get("group", "window.radius"), "group.window.radius");
  if (cfg.has("group", "window.profile")) ws.profile = expr_or_throw(cfg.get("group", "window.profile"), labels, "group.window.profile");
  try {
    model.chi = build_cutoff(ws, sys.group, sys.quotient, sys.domain);
  } catch (const DomainError& e) {
    throw ValidationError("group.window", e.what());
  }

  try {
    model.g = sys.group.parse(cfg.get("group", "g"));
  } catch (const std::exception& e) {
    throw ValidationError("group.g", e.what());
  }

  AssembleOptions& ao = model.assemble;
  ao.radius = to_int(cfg.get("group", "radius"), "group.radius");
  const auto win = split_list(cfg.get("orbits", "window"));
  ao.window = {to_real(win[0], "orbits.window"), to_real(win[1], "orbits.window")};
  const Mat sb = numeric_matrix(parse_matrix_literal(cfg.get("orbits", "seed_box")), "orbits.seed_box");
  ao.seeds.box = Box{sb.col(0), sb.col(1)};
  for (const auto& c : split_list(cfg.get("orbits", "seed_counts"))) {
    ao.seeds.counts.push_back(static_cast<int>(to_int(c, "orbits.seed_counts")));
  }
  ao.seeds.l_count = static_cast<int>(to_int(cfg.get("orbits", "l_seeds"), "orbits.l_seeds"));
  ao.nondegeneracy = to_real(cfg.get("orbits", "nondegeneracy"), "orbits.nondegeneracy");
  ao.seed = model.seed;

  if (cfg.has("trace", "psi")) {
    for (const auto& p : split_list(cfg.get("trace", "psi"), ';')) model.psis.push_back(TestFunction::parse(p));
  }
  model.sweep_min = to_real(cfg.get("trace", "sweep.min"), "trace.sweep.min");
  model.sweep_max = to_real(cfg.get("trace", "sweep.max"), "trace.sweep.max");
  model.sweep_count = static_cast<int>(to_int(cfg.get("trace", "sweep.count"), "trace.sweep.count"));
  model.sweep_width = to_real(cfg.get("trace", "sweep.width"), "trace.sweep.width");

  model.oracle_mode = cfg.get("oracle", "mode");
  if (cfg.has("oracle", "psi")) model.oracle_psi = TestFunction::parse(cfg.get("oracle", "psi"));
  model.mollifier.ladder.clear();
  for (const auto& e : split_list(cfg.get("oracle", "eps"))) model.mollifier.ladder.push_back(to_real(e, "oracle.eps"));
  model.mollifier.budget = static_cast<long>(to_real(cfg.get("oracle", "budget"), "oracle.budget"));
  model.mollifier.grid_factor = to_real(cfg.get("oracle", "grid_factor"), "oracle.grid_factor");
  model.mollifier.radius = ao.radius;
  if (cfg.has("oracle", "quotient_model")) model.quotient_model = cfg.get("oracle", "quotient_model");
  model.covering_radius = to_int(cfg.get("oracle", "covering_radius"), "oracle.covering_radius");
  model.catmap_n = static_cast<int>(to_int(cfg.get("oracle", "catmap_n"), "oracle.catmap_n"));
  return model;
}

RunConfig load_config(const std::string& name_or_path, const std::string& base_dir) {
  const auto& gallery = model_gallery();
  const auto it = gallery.find(name_or_path);
  if (it != gallery.end()) return RunConfig::parse(it->second);
  std::string path = name_or_path;
  if (!path.empty() && path[0] != '/') path = base_dir + "/" + path;
  std::ifstream in(path);
  if (!in) throw ValidationError("config", "cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  RunConfig cfg = RunConfig::parse(ss.str());
  const auto slash = path.find_last_of('/');
  cfg.base_dir = slash == std::string::npos ? "." : path.substr(0, slash);
  return cfg;
}

}  // namespace equitrace
