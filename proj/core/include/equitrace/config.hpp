#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "equitrace/flow.hpp"
#include "equitrace/geometry.hpp"
#include "equitrace/oracle.hpp"
#include "equitrace/orbits.hpp"
#include "equitrace/trace.hpp"

namespace equitrace {

/// Sectioned key = value configuration. Every key is checked against a
/// schema at parse time; resolve() fills defaults so that to_text() echoes
/// the complete run description.
class RunConfig {
 public:
  static RunConfig parse(std::string_view text);

  /// Canonical text with defaults filled in; parse(to_text()) reproduces it.
  std::string to_text() const;

  bool has(const std::string& section, const std::string& key) const;
  const std::string& get(const std::string& section, const std::string& key) const;
  /// Sets a key after schema validation (used for command-line overrides).
  void set(const std::string& section, const std::string& key, const std::string& value);
  void erase(const std::string& section, const std::string& key);
  std::vector<std::pair<std::string, std::string>> section(const std::string& name) const;

  /// Fills defaults and performs cross-key validation. Idempotent.
  void resolve();

  /// Directory used to resolve relative model paths.
  std::string base_dir = ".";

 private:
  std::map<std::string, std::map<std::string, std::string>> values_;
};

/// Everything a run needs, built from a resolved config.
struct Model {
  CoverSystem system;
  CutoffFunction chi;
  GroupElt g;
  AssembleOptions assemble;
  std::vector<TestFunction> psis;
  MollifierSpec mollifier;
  TestFunction oracle_psi;
  std::string oracle_mode;
  std::string quotient_model;
  long covering_radius = 8;
  int catmap_n = 3;
  double sweep_min = 0.0;
  double sweep_max = 0.0;
  int sweep_count = 0;
  double sweep_width = 0.1;
  int hypothesis_samples = 32;
  unsigned long seed = 1;
};

Model build_model(const RunConfig& config);

/// Shipped model configs by name (identical to configs/<name>.cfg).
const std::map<std::string, std::string>& model_gallery();

/// Gallery lookup by name, else a file path relative to `base_dir`.
RunConfig load_config(const std::string& name_or_path, const std::string& base_dir = ".");

// Literal helpers shared with the CLI: "[[a, b], [c, d]]", "[a, b]" and
// comma lists. Entries are returned as trimmed text.
std::vector<std::vector<std::string>> parse_matrix_literal(const std::string& text);
std::vector<std::string> parse_vector_literal(const std::string& text);
std::vector<std::string> split_list(const std::string& text, char sep = ',');

}  // namespace equitrace
