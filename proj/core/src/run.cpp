#include "equitrace/run.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>

#include <spdlog/fmt/fmt.h>
#include <spdlog/spdlog.h>

#include "json.hpp"

namespace equitrace {

namespace {

using json = nlohmann::ordered_json;

constexpr double kShiftTolerance = 1e-9;
constexpr double kEigenTolerance = 1e-8;
constexpr double kOracleTolerance = 1e-2;
constexpr double kCoveringTolerance = 1e-6;
constexpr double kCatmapTolerance = 1e-8;

std::string g17(double v) { return fmt::format("{:.17g}", v); }

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

json config_json(const RunConfig& cfg) {
  json j = json::object();
  for (const char* s : {"chart", "group", "flow", "bundle", "orbits", "trace", "oracle"}) {
    const auto kv = cfg.section(s);
    if (kv.empty()) continue;
    json sec = json::object();
    for (const auto& [k, v] : kv) sec[k] = v;
    j[s] = sec;
  }
  return j;
}

json failures_json(const std::vector<Failure>& fs) {
  json a = json::array();
  for (const auto& f : fs) a.push_back({{"kind", f.kind}, {"message", f.message}});
  return a;
}

void write_file(const std::filesystem::path& path, const std::string& body, RunResult& res) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("IOError", "cannot write " + path.string());
  out << body;
  res.written.push_back(path.string());
}

class Runner {
 public:
  Runner(RunConfig cfg, const RunOptions& opt) : cfg_(std::move(cfg)), opt_(opt) {}

  RunResult go(const std::string& command) {
    std::filesystem::create_directories(opt_.out_dir);
    if (command != "orbits" && command != "trace" && command != "verify" && command != "all") {
      throw ValidationError("command", "expected orbits, trace, verify or all, got '" + command + "'");
    }
    model_ = build_model(cfg_);
    model_.assemble.threads = opt_.threads;
    model_.mollifier.threads = opt_.threads;
    hypotheses_ = check_hypotheses(model_.system, model_.hypothesis_samples, model_.seed);
    if (!hypotheses_.passed) fail("HypothesisViolation", hypotheses_.worst);

    if (command == "orbits" || command == "all") orbits();
    if (command == "trace" || command == "all") trace();
    if (command == "verify" || command == "all") verify();

    res_.failures = failures_;
    res_.exit_code = failures_.empty() ? 0 : 1;
    if (res_.summary.empty()) res_.summary = summarize(cfg_);
    return res_;
  }

 private:
  void fail(const std::string& kind, const std::string& message) { failures_.push_back({kind, message}); }

  template <typename F>
  bool guarded(F&& f) {
    try {
      f();
      return true;
    } catch (const Error& e) {
      fail(e.kind(), e.what());
    }
    return false;
  }

  // The assembled comb is shared by trace and verify.
  const AssembleResult& comb() {
    if (!assembled_) {
      try {
        assembled_ = assemble(model_.system, model_.chi, model_.g, model_.assemble);
      } catch (const Error&) {
        comb_failed_ = true;
        throw;
      }
    }
    return *assembled_;
  }

  // Oracles compare against the comb; once assembly has failed they are
  // skipped rather than reporting the same failure again.
  bool skip_without_comb(json& report) {
    if (!comb_failed_) return false;
    report["skipped"] = "comb unavailable";
    return true;
  }

  void orbits() {
    const auto& sys = model_.system;
    std::string csv = "x_payload,l";
    for (int i = 0; i < sys.dim; ++i) csv += ",m0_" + std::to_string(i + 1);
    csv += ",kind,T_sharp,T_gamma,det_one_minus_P,residual\n";
    size_t count = 0;
    guarded([&] {
      const auto base = find_orbits(sys, model_.g, model_.assemble.window, model_.assemble.seeds, opt_.threads);
      std::mt19937_64 rng(model_.seed);
      std::uniform_real_distribution<double> unit(0.0, 1.0);
      for (const auto& h : sys.group.coset_representatives(model_.g, model_.assemble.radius)) {
        for (const auto& o : conjugate_orbits(sys, h, base)) {
          const auto pd = poincare(sys, o, model_.assemble.nondegeneracy);
          double t_gamma = std::nan("");
          guarded([&] { t_gamma = primitive_period(sys, o, model_.chi); });
          csv += csv_field(sys.group.format(o.x)) + "," + g17(o.l);
          for (int i = 0; i < sys.dim; ++i) csv += "," + g17(o.m0(i));
          csv += std::string(",") + to_string(o.kind) + "," + g17(o.t_sharp) + "," + g17(t_gamma) + "," +
                 g17(pd.det_one_minus_p) + "," + g17(o.residual) + "\n";
          ++count;
          if (o.residual > kResidualTolerance) {
            fail("ResidualCheck", fmt::format("orbit of {} at l = {} has residual {}", sys.group.format(o.x), o.l, o.residual));
          }
          if (pd.eigen_residual > kEigenTolerance) {
            fail("EigenvectorCheck", fmt::format("|A u - u| = {} at l = {}", pd.eigen_residual, o.l));
          }
          const double span = o.kind == OrbitKind::Periodic ? o.t_sharp : std::abs(o.l);
          for (int k = 0; k < 5; ++k) {
            const auto shifted = shift_orbit(sys, o, span * unit(rng));
            const double d = poincare(sys, shifted, model_.assemble.nondegeneracy).det_one_minus_p;
            if (std::abs(d - pd.det_one_minus_p) > kShiftTolerance * std::max(1.0, std::abs(pd.det_one_minus_p))) {
              fail("TimeShiftCheck", fmt::format("det(1 - P) moves from {} to {} under a time shift at l = {}",
                                                 pd.det_one_minus_p, d, o.l));
            }
          }
        }
      }
    });
    write_file(std::filesystem::path(opt_.out_dir) / "orbits.csv", csv, res_);
    res_.summary = fmt::format("{} orbit classes for g = {}", count, sys.group.format(model_.g));
  }

  void trace() {
    const auto& sys = model_.system;
    json report;
    report["g"] = sys.group.format(model_.g);
    report["radius"] = model_.assemble.radius;
    report["window"] = {model_.assemble.window.l_min, model_.assemble.window.l_max};
    json atoms = json::array();
    json pairings = json::array();
    json diagnostics = json::object();
    std::string curve = "center,value\n";
    const bool ok = guarded([&] {
      const auto& res = comb();
      for (const auto& a : res.comb.atoms) atoms.push_back({{"l", a.l}, {"weight", a.weight}, {"contributors", a.contributors}});
      std::vector<std::string> warnings = res.warnings;
      for (const auto& psi : model_.psis) {
        pairings.push_back({{"psi_spec", psi.str()},
                            {"value", pair_checked(res.comb, psi, model_.assemble.window, &warnings)}});
      }
      diagnostics["shell_sums"] = res.shell_sums;
      diagnostics["warnings"] = warnings;
      diagnostics["orbit_records"] = res.records.size();
      diagnostics["search"] = {{"seeds", res.stats.seeds},
                               {"converged", res.stats.converged},
                               {"no_convergence", res.stats.no_convergence},
                               {"singular_jacobian", res.stats.singular},
                               {"outside_window", res.stats.outside_window},
                               {"duplicates", res.stats.duplicates}};
      json records = json::array();
      for (const auto& r : res.records) {
        records.push_back({{"h", sys.group.format(r.h)},
                           {"x", sys.group.format(r.orbit.x)},
                           {"l", r.orbit.l},
                           {"T_gamma", r.t_gamma},
                           {"fiber_trace", r.fiber_trace},
                           {"det_one_minus_P", r.poincare.det_one_minus_p},
                           {"weight", r.weight}});
      }
      diagnostics["records"] = records;
      if (model_.sweep_count > 0) {
        for (int i = 0; i < model_.sweep_count; ++i) {
          const double c = model_.sweep_count == 1
                               ? model_.sweep_min
                               : model_.sweep_min + (model_.sweep_max - model_.sweep_min) * i / (model_.sweep_count - 1);
          if (std::abs(c) < model_.sweep_width) continue;
          curve += g17(c) + "," + g17(pair(res.comb, TestFunction::bump(c, model_.sweep_width))) + "\n";
        }
      }
    });
    (void)ok;
    diagnostics["hypotheses"] = {{"flow_equivariance", hypotheses_.flow_equivariance},
                                 {"bundle_equivariance", hypotheses_.bundle_equivariance},
                                 {"a_commutation", hypotheses_.a_commutation},
                                 {"deck_consistency", hypotheses_.deck_consistency},
                                 {"min_speed", hypotheses_.min_speed},
                                 {"passed", hypotheses_.passed}};
    diagnostics["partition_residual"] = model_.chi.partition_residual();
    report["atoms"] = atoms;
    report["pairings"] = pairings;
    report["diagnostics"] = diagnostics;
    report["resolved_config"] = config_json(cfg_);
    report["failures"] = failures_json(failures_);
    write_file(std::filesystem::path(opt_.out_dir) / "trace.json", report.dump(2) + "\n", res_);
    write_file(std::filesystem::path(opt_.out_dir) / "pairing-curve.csv", curve, res_);
    if (assembled_) {
      res_.summary = fmt::format("g = {}: {} atoms", sys.group.format(model_.g), assembled_->comb.atoms.size());
    }
  }

  void verify() {
    const auto& sys = model_.system;
    json report;
    report["mode"] = model_.oracle_mode;
    report["g"] = sys.group.format(model_.g);
    if (model_.oracle_mode == "mollified") {
      if (!skip_without_comb(report)) guarded([&] {
        if (model_.oracle_psi.terms().empty()) throw ValidationError("oracle.psi", "missing");
        const auto& psi = model_.oracle_psi;
        report["psi"] = psi.str();
        const double target = pair(comb().comb, psi);
        const auto m = mollified_trace(sys, model_.chi, model_.g, psi, model_.mollifier);
        const double rel = std::abs(m.extrapolate - target) / std::max(1.0, std::abs(target));
        bool monotone = true;
        for (size_t i = 1; i < m.values.size(); ++i) {
          if (std::abs(m.values[i] - target) > std::abs(m.values[i - 1] - target)) monotone = false;
        }
        report["eps"] = m.eps;
        report["values"] = m.values;
        report["evaluations"] = m.evaluations;
        report["active_nodes"] = m.active_nodes;
        report["order"] = m.order;
        report["extrapolate"] = m.extrapolate;
        report["comb_pairing"] = target;
        report["relative_discrepancy"] = rel;
        report["trend_toward_comb"] = monotone;
        if (!monotone) spdlog::info("mollified ladder does not approach the comb monotonically");
        if (rel > kOracleTolerance) {
          fail("OracleDisagreement", fmt::format("mollified extrapolate {} vs comb pairing {}", m.extrapolate, target));
        }
        res_.summary = fmt::format("mollified: extrapolate {} vs comb {} (rel {:.3g})", m.extrapolate, target, rel);
      });
    } else if (model_.oracle_mode == "covering") {
      guarded([&] {
        if (model_.quotient_model.empty()) throw ValidationError("oracle.quotient_model", "missing");
        if (model_.oracle_psi.terms().empty()) throw ValidationError("oracle.psi", "missing");
        const RunConfig down_cfg = load_config(model_.quotient_model, cfg_.base_dir);
        Model down = build_model(down_cfg);
        down.assemble.threads = opt_.threads;
        const auto rep = covering_check(sys, model_.chi, model_.assemble, down.system, down.chi, down.assemble,
                                        model_.oracle_psi, model_.covering_radius);
        json terms = json::array();
        for (const auto& t : rep.terms) terms.push_back({{"element", t.payload}, {"pairing", t.pairing}, {"atoms", t.atoms}});
        report["psi"] = model_.oracle_psi.str();
        report["quotient_model"] = model_.quotient_model;
        report["lhs"] = rep.lhs;
        report["rhs"] = rep.rhs;
        report["discrepancy"] = rep.discrepancy;
        report["exact"] = rep.exact;
        report["radius"] = rep.radius;
        report["reach"] = rep.reach;
        report["reachable_elements"] = rep.reachable_elements;
        report["omitted_reachable"] = rep.omitted_reachable;
        report["terms"] = terms;
        report["warnings"] = rep.warnings;
        if (!rep.exact) fail("NotExact", fmt::format("{} reachable deck elements lie beyond radius {}", rep.omitted_reachable, rep.radius));
        if (rep.discrepancy > kCoveringTolerance) {
          fail("CoveringMismatch", fmt::format("downstairs {} vs upstairs {}", rep.lhs, rep.rhs));
        }
        res_.summary = fmt::format("covering: lhs {} rhs {} (|diff| {:.3g}, exact {})", rep.lhs, rep.rhs,
                                   rep.discrepancy, rep.exact);
      });
    } else {
      if (!skip_without_comb(report)) guarded([&] {
        const auto& c = comb().comb;
        json rows = json::array();
        for (int n = 1; n <= model_.catmap_n; ++n) {
          const auto fp = catmap_fixed_points(n);
          double weight = 0.0;
          for (const auto& a : c.atoms) {
            if (std::abs(a.l - n) <= kAtomMergeTolerance) weight = a.weight;
          }
          json orbits = json::array();
          for (const auto& o : fp.orbits) orbits.push_back({{"period", o.period}, {"det_one_minus_A_d", o.det_one_minus_a_d}});
          const double rel = std::abs(weight - fp.predicted_weight) / std::abs(fp.predicted_weight);
          rows.push_back({{"n", n},
                          {"det", fp.det},
                          {"fixed_points", fp.fixed_points.size()},
                          {"orbits", orbits},
                          {"predicted_weight", fp.predicted_weight},
                          {"comb_weight", weight},
                          {"relative_error", rel}});
          if (rel > kCatmapTolerance) {
            fail("CatmapMismatch", fmt::format("l = {}: comb weight {} vs fixed-point count {}", n, weight, fp.predicted_weight));
          }
        }
        report["levels"] = rows;
        res_.summary = fmt::format("catmap: compared {} levels", model_.catmap_n);
      });
    }
    report["resolved_config"] = config_json(cfg_);
    report["failures"] = failures_json(failures_);
    write_file(std::filesystem::path(opt_.out_dir) / "verify.json", report.dump(2) + "\n", res_);
  }

  RunConfig cfg_;
  RunOptions opt_;
  Model model_;
  HypothesisReport hypotheses_;
  std::optional<AssembleResult> assembled_;
  bool comb_failed_ = false;
  std::vector<Failure> failures_;
  RunResult res_;
};

}  // namespace

std::string summarize(const RunConfig& cfg) {
  std::string quotient = cfg.get("chart", "quotient") == "mapping_torus" ? " mapping torus," : "";
  return fmt::format("dim {},{} group {}, window {}, g = {}, orbit window [{}]", cfg.get("chart", "dim"), quotient,
                     cfg.get("group", "kind"), cfg.get("group", "window"), cfg.get("group", "g"),
                     cfg.get("orbits", "window"));
}

RunResult run(const std::string& command, RunConfig config, const RunOptions& options) {
  if (!options.g.empty()) config.set("group", "g", options.g);
  if (!options.psi.empty()) {
    std::string joined;
    for (const auto& p : options.psi) joined += (joined.empty() ? "" : "; ") + p;
    config.set("trace", "psi", joined);
    config.set("oracle", "psi", options.psi.front());
  }
  if (!options.mode.empty()) config.set("oracle", "mode", options.mode);
  config.resolve();
  Runner runner(std::move(config), options);
  return runner.go(command);
}

}  // namespace equitrace
