#pragma once

// Command-line front end.  JSON configuration in, a certified JSON report
// out, step functions as CSV.  Header-only like the rest of the library; the
// betadyn binary is a thin main() around run_command().
//
// Exit codes: 0 success, 2 bad configuration, 3 hypothesis violation,
// 4 precision failure, 5 I/O failure, 1 anything unexpected.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <initializer_list>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "CLI11.hpp"
#include "json.hpp"

#include "betadyn/beta_map.hpp"
#include "betadyn/errors.hpp"
#include "betadyn/iid_density.hpp"
#include "betadyn/noise_model.hpp"
#include "betadyn/quenched.hpp"
#include "betadyn/response.hpp"
#include "betadyn/step_function.hpp"
#include "betadyn/transfer.hpp"
#include "betadyn/verify.hpp"

namespace betadyn {

using nlohmann::json;

inline constexpr int exit_success = 0;
inline constexpr int exit_failure = 1;
inline constexpr int exit_config = 2;
inline constexpr int exit_hypothesis = 3;
inline constexpr int exit_precision = 4;
inline constexpr int exit_io = 5;

inline json step_json(const StepFunction<double>& f) {
  return json{{"breakpoints", f.breakpoints()},
              {"values", f.values()},
              {"integral", integral(f)},
              {"ess_sup", ess_sup(f)},
              {"ess_inf", ess_inf(f)}};
}

inline json parse_json_text(const std::string& text, const std::string& origin) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw io_error("cannot parse JSON from " + origin);
  return j;
}

// A --system/--model argument is inline JSON when it starts with '{',
// otherwise a file path.
inline json load_json_arg(const std::string& arg) {
  auto pos = arg.find_first_not_of(" \t\r\n");
  if (pos != std::string::npos && arg[pos] == '{')
    return parse_json_text(arg, "the command line");
  std::ifstream in(arg);
  if (!in) throw io_error("cannot open " + arg);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_json_text(ss.str(), arg);
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw io_error("cannot open " + path + " for writing");
  out << text;
  out.flush();
  if (!out) throw io_error("short write to " + path);
}

namespace cli_detail {

inline std::string fmt(double x) {
  std::ostringstream ss;
  ss.precision(17);
  ss << x;
  return ss.str();
}

inline void reject_unknown_keys(const json& j, std::initializer_list<const char*> allowed,
                                const std::string& what) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* k : allowed)
      if (it.key() == k) known = true;
    if (!known) throw config_error(what + " has an unknown key \"" + it.key() + "\"");
  }
}

inline const json& need(const json& j, const char* key, const std::string& what) {
  if (!j.is_object() || !j.contains(key))
    throw config_error(what + " needs a \"" + std::string(key) + "\" field");
  return j.at(key);
}

inline double need_number(const json& j, const char* key, const std::string& what) {
  const json& v = need(j, key, what);
  if (!v.is_number()) throw config_error(what + ": \"" + key + "\" must be a number");
  return v.get<double>();
}

inline std::uint64_t need_seed(const json& j, const char* key, const std::string& what) {
  const json& v = need(j, key, what);
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0))
    throw config_error(what + ": \"" + key + "\" must be a nonnegative integer");
  return v.get<std::uint64_t>();
}

}  // namespace cli_detail

// ---------------------------------------------------------------------------
// configuration ingestion

struct SystemConfig {
  BetaSystem<double> system;
  double tol = 1e-8;
  bool discretized = false;
  json echo;
};

inline std::vector<WeightedMap<double>> parse_maps(const json& arr, const std::string& what) {
  if (!arr.is_array() || arr.empty())
    throw config_error(what + ": \"maps\" must be a nonempty array");
  std::vector<WeightedMap<double>> maps;
  for (const json& m : arr) {
    if (!m.is_object()) throw config_error(what + ": each map must be an object");
    cli_detail::reject_unknown_keys(m, {"beta", "prob"}, what + " map");
    double beta = cli_detail::need_number(m, "beta", what + " map");
    double prob = cli_detail::need_number(m, "prob", what + " map");
    maps.push_back({Beta<double>(beta), prob});
  }
  return maps;
}

inline SystemConfig parse_system(const json& j) {
  if (!j.is_object()) throw config_error("system description must be a JSON object");
  cli_detail::reject_unknown_keys(j, {"maps", "distribution", "nodes", "tol"},
                                  "system description");
  double tol = 1e-8;
  if (j.contains("tol")) {
    if (!j.at("tol").is_number() || !(j.at("tol").get<double>() > 0.0))
      throw config_error("tolerances must be positive");
    tol = j.at("tol").get<double>();
  }
  if (j.contains("maps") == j.contains("distribution"))
    throw config_error("system description needs exactly one of \"maps\" or \"distribution\"");

  if (j.contains("maps")) {
    if (j.contains("nodes"))
      throw config_error("\"nodes\" only applies to a continuous distribution");
    return {BetaSystem<double>(parse_maps(j.at("maps"), "system")), tol, false, j};
  }

  const json& d = j.at("distribution");
  if (!d.is_object()) throw config_error("\"distribution\" must be a JSON object");
  cli_detail::reject_unknown_keys(d, {"kind", "a", "b", "atoms"}, "distribution");
  const json& kind = cli_detail::need(d, "kind", "distribution");
  SlopeDistribution dist;
  int nodes = 0;
  if (kind == "uniform") {
    dist.kind = SlopeDistribution::Kind::uniform;
    dist.a = cli_detail::need_number(d, "a", "uniform distribution");
    dist.b = cli_detail::need_number(d, "b", "uniform distribution");
    const json& n = cli_detail::need(j, "nodes", "a continuous distribution");
    if (!n.is_number_integer() || n.get<int>() < 1)
      throw config_error("\"nodes\" must be a positive integer");
    nodes = n.get<int>();
  } else if (kind == "tabulated") {
    dist.kind = SlopeDistribution::Kind::tabulated;
    const json& atoms = cli_detail::need(d, "atoms", "tabulated distribution");
    if (!atoms.is_array() || atoms.empty())
      throw config_error("tabulated distribution needs a nonempty \"atoms\" array");
    for (const json& a : atoms) {
      cli_detail::reject_unknown_keys(a, {"beta", "weight"}, "tabulated atom");
      dist.atoms.emplace_back(cli_detail::need_number(a, "beta", "tabulated atom"),
                              cli_detail::need_number(a, "weight", "tabulated atom"));
    }
    nodes = static_cast<int>(dist.atoms.size());
  } else {
    throw config_error("unknown distribution kind; expected \"uniform\" or \"tabulated\"");
  }
  return {quadrature_system(dist, nodes), tol, true, j};
}

inline NoiseModel parse_model(const json& j) {
  if (!j.is_object()) throw config_error("model description must be a JSON object");
  const json& kind = cli_detail::need(j, "kind", "model description");
  if (!kind.is_string()) throw config_error("model \"kind\" must be a string");
  const std::string k = kind.get<std::string>();

  if (k == "periodic") {
    cli_detail::reject_unknown_keys(j, {"kind", "betas"}, "periodic model");
    const json& betas = cli_detail::need(j, "betas", "periodic model");
    if (!betas.is_array() || betas.empty())
      throw config_error("periodic model needs a nonempty \"betas\" array");
    std::vector<double> b;
    for (const json& v : betas) {
      if (!v.is_number()) throw config_error("periodic \"betas\" must be numbers");
      b.push_back(v.get<double>());
    }
    return NoiseModel::periodic(std::move(b));
  }
  if (k == "rotation") {
    cli_detail::reject_unknown_keys(j, {"kind", "alpha", "base", "amplitude", "omega0"},
                                    "rotation model");
    double omega0 = j.contains("omega0")
                        ? cli_detail::need_number(j, "omega0", "rotation model")
                        : 0.0;
    return NoiseModel::rotation(cli_detail::need_number(j, "alpha", "rotation model"),
                                cli_detail::need_number(j, "base", "rotation model"),
                                cli_detail::need_number(j, "amplitude", "rotation model"),
                                omega0);
  }
  if (k == "iid") {
    cli_detail::reject_unknown_keys(j, {"kind", "maps", "seed", "sample"}, "iid model");
    BetaSystem<double> sys(parse_maps(cli_detail::need(j, "maps", "iid model"), "iid model"));
    std::uint64_t seed = cli_detail::need_seed(j, "seed", "iid model");
    std::uint64_t sample =
        j.contains("sample") ? cli_detail::need_seed(j, "sample", "iid model") : 0;
    return NoiseModel::iid(std::move(sys), seed, sample);
  }
  if (k == "markov") {
    cli_detail::reject_unknown_keys(j, {"kind", "states", "transition", "seed", "sample"},
                                    "markov model");
    const json& states = cli_detail::need(j, "states", "markov model");
    if (!states.is_array() || states.empty())
      throw config_error("markov model needs a nonempty \"states\" array");
    std::vector<double> s;
    for (const json& v : states) {
      if (!v.is_number()) throw config_error("markov \"states\" must be numbers");
      s.push_back(v.get<double>());
    }
    const json& rows = cli_detail::need(j, "transition", "markov model");
    const auto n = static_cast<Eigen::Index>(s.size());
    if (!rows.is_array() || static_cast<Eigen::Index>(rows.size()) != n)
      throw config_error("markov \"transition\" must be a square row array");
    Eigen::MatrixXd P(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const json& row = rows.at(static_cast<std::size_t>(i));
      if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != n)
        throw config_error("markov \"transition\" must be a square row array");
      for (Eigen::Index c = 0; c < n; ++c) {
        const json& v = row.at(static_cast<std::size_t>(c));
        if (!v.is_number()) throw config_error("markov transition entries must be numbers");
        P(i, c) = v.get<double>();
      }
    }
    std::uint64_t seed = cli_detail::need_seed(j, "seed", "markov model");
    std::uint64_t sample =
        j.contains("sample") ? cli_detail::need_seed(j, "sample", "markov model") : 0;
    return NoiseModel::markov(std::move(s), P, seed, sample);
  }
  throw config_error("unknown model kind \"" + k +
                     "\"; expected periodic, rotation, iid, or markov");
}

// ---------------------------------------------------------------------------
// report envelope

// Wraps the JSON envelope every command emits.  Results never travel bare:
// the envelope carries the hypothesis checks that were performed, the
// truncation depths used, and the certified tail bounds.
class Report {
 public:
  explicit Report(const std::string& command)
      : body_{{"command", command},
              {"parameters", json::object()},
              {"hypothesis_checks", json::array()},
              {"truncation", json::object()},
              {"tail_bounds", json::object()},
              {"results", json::object()},
              {"artifacts", json::array()}} {}

  json& parameters() { return body_["parameters"]; }
  json& results() { return body_["results"]; }

  void check(const std::string& name, bool passed) {
    body_["hypothesis_checks"].push_back(json{{"name", name}, {"passed", passed}});
  }
  void check(const std::string& name, bool passed, double value, double bound) {
    body_["hypothesis_checks"].push_back(json{{"name", name},
                                              {"passed", passed},
                                              {"value", finite_or_null(value)},
                                              {"bound", finite_or_null(bound)}});
  }
  void check(const std::string& name, bool passed, double value, double bound,
             const std::string& detail) {
    body_["hypothesis_checks"].push_back(json{{"name", name},
                                              {"passed", passed},
                                              {"value", finite_or_null(value)},
                                              {"bound", finite_or_null(bound)},
                                              {"detail", detail}});
  }
  void truncation(const std::string& name, long long depth) {
    body_["truncation"][name] = depth;
  }
  void tail(const std::string& name, double bound) { body_["tail_bounds"][name] = bound; }
  void artifact(const std::string& name, const std::string& kind, const std::string& path) {
    body_["artifacts"].push_back(json{{"name", name}, {"kind", kind}, {"path", path}});
  }

  const json& body() const { return body_; }

 private:
  static json finite_or_null(double x) {
    return std::isfinite(x) ? json(x) : json(nullptr);
  }
  json body_;
};

inline void write_csv_artifact(Report& rep, const std::string& name, const std::string& path,
                               const StepFunction<double>& f) {
  if (path.empty()) return;
  std::ostringstream ss;
  to_csv(ss, f);
  write_text_file(path, ss.str());
  rep.artifact(name, "csv", path);
}

// ---------------------------------------------------------------------------
// schema validation (the subset of JSON Schema the published schema uses:
// type, enum, required, properties, additionalProperties, items)

namespace cli_detail {

inline bool type_matches(const std::string& t, const json& v) {
  if (t == "object") return v.is_object();
  if (t == "array") return v.is_array();
  if (t == "string") return v.is_string();
  if (t == "boolean") return v.is_boolean();
  if (t == "integer") return v.is_number_integer();
  if (t == "number") return v.is_number();
  if (t == "null") return v.is_null();
  return false;
}

inline void schema_walk(const json& schema, const json& v, const std::string& at,
                        std::vector<std::string>& errors) {
  if (schema.is_boolean()) {
    if (!schema.get<bool>()) errors.push_back(at + ": no value allowed here");
    return;
  }
  if (!schema.is_object()) {
    errors.push_back(at + ": unsupported schema node");
    return;
  }
  if (schema.contains("type")) {
    const json& t = schema.at("type");
    bool ok = false;
    if (t.is_string()) {
      ok = type_matches(t.get<std::string>(), v);
    } else {
      for (const json& alt : t) ok = ok || type_matches(alt.get<std::string>(), v);
    }
    if (!ok) {
      errors.push_back(at + ": type mismatch");
      return;
    }
  }
  if (schema.contains("enum")) {
    bool ok = false;
    for (const json& allowed : schema.at("enum"))
      if (allowed == v) ok = true;
    if (!ok) errors.push_back(at + ": value not in enum");
  }
  if (v.is_object()) {
    if (schema.contains("required"))
      for (const json& k : schema.at("required"))
        if (!v.contains(k.get<std::string>()))
          errors.push_back(at + ": missing required key \"" + k.get<std::string>() + "\"");
    const json* props = schema.contains("properties") ? &schema.at("properties") : nullptr;
    for (auto it = v.begin(); it != v.end(); ++it) {
      const std::string sub = at + "/" + it.key();
      if (props && props->contains(it.key())) {
        schema_walk(props->at(it.key()), it.value(), sub, errors);
      } else if (schema.contains("additionalProperties")) {
        const json& ap = schema.at("additionalProperties");
        if (ap.is_boolean()) {
          if (!ap.get<bool>()) errors.push_back(sub + ": unexpected key");
        } else {
          schema_walk(ap, it.value(), sub, errors);
        }
      }
    }
  }
  if (v.is_array() && schema.contains("items")) {
    std::size_t i = 0;
    for (const json& el : v) schema_walk(schema.at("items"), el, at + "/" + std::to_string(i++), errors);
  }
}

}  // namespace cli_detail

inline std::vector<std::string> schema_errors(const json& schema, const json& instance) {
  std::vector<std::string> errors;
  cli_detail::schema_walk(schema, instance, "#", errors);
  return errors;
}

// ---------------------------------------------------------------------------
// commands

namespace cli_detail {

struct Common {
  int precision = 53;
  int threads = 0;
};

inline void fill_common(Report& rep, const Common& common) {
  rep.parameters()["precision"] = common.precision;
  rep.parameters()["threads"] = common.threads;
}

inline void require_double_precision(const Common& common, const char* command) {
  if (common.precision != 53)
    throw config_error(std::string(command) +
                       " runs at 53 bits; --precision selects the expand orbit width");
}

inline void expansion_checks(Report& rep, const BetaSystem<double>& sys) {
  auto mr = mean_expanding_check(sys);
  rep.check("reciprocal_slope_mean_below_one", mr.ratio_below_one,
            to_double(mr.contraction_ratio), 1.0);
  rep.check("log_slope_mean_positive", mr.log_mean_positive, mr.log_mean, 0.0);
}

struct DensityArgs {
  std::string system, out_json, out_csv;
  double tol = 0.0;  // 0 keeps the system JSON's tolerance
};

inline Report cmd_density(const DensityArgs& args, const Common& common) {
  require_double_precision(common, "density");
  SystemConfig sc = parse_system(load_json_arg(args.system));
  if (args.tol > 0.0) sc.tol = args.tol;

  Report rep("density");
  fill_common(rep, common);
  rep.parameters()["system"] = sc.echo;
  rep.parameters()["tol"] = sc.tol;

  expansion_checks(rep, sc.system);
  DensityOptions opt;
  opt.tol = sc.tol;
  DensityReport dr = build_density(sc.system, opt);
  double residual = fixed_point_residual(sc.system, dr.density);

  rep.truncation("series_depth", dr.depth);
  rep.tail("series_l1", dr.tail_bound);
  rep.tail("merge_slack", dr.merge_slack);
  rep.tail("dropped_mass", dr.dropped_mass);

  json& res = rep.results();
  res["mass"] = dr.mass;
  res["residual"] = residual;
  res["contraction_ratio"] = dr.contraction_ratio;
  res["cells"] = static_cast<long long>(dr.density.cells());
  res["ess_sup"] = dr.ess_sup_h;
  res["ess_inf"] = dr.ess_inf_h;
  res["formula_sup"] = dr.formula_sup;
  res["formula_inf"] = dr.formula_inf;
  res["finite_series"] = dr.finite_series;
  res["orbit_hit_zero"] = dr.orbit_hit_zero;
  res["discretized_noise"] = sc.discretized;
  if (dr.density.cells() <= 4096) res["density"] = step_json(dr.density);

  write_csv_artifact(rep, "density", args.out_csv, dr.density);
  return rep;
}

struct BoundsArgs {
  std::string system, out_json;
  double tol = 0.0;
};

inline Report cmd_bounds(const BoundsArgs& args, const Common& common) {
  require_double_precision(common, "bounds");
  SystemConfig sc = parse_system(load_json_arg(args.system));
  if (args.tol > 0.0) sc.tol = args.tol;

  Report rep("bounds");
  fill_common(rep, common);
  rep.parameters()["system"] = sc.echo;
  rep.parameters()["tol"] = sc.tol;

  expansion_checks(rep, sc.system);
  DensityOptions opt;
  opt.tol = sc.tol;
  DensityReport dr = build_density(sc.system, opt);

  rep.truncation("series_depth", dr.depth);
  rep.tail("series_l1", dr.tail_bound);
  rep.tail("merge_slack", dr.merge_slack);

  json& res = rep.results();
  res["sup"] = dr.ess_sup_h;
  res["inf"] = dr.ess_inf_h;
  res["formula_sup"] = dr.formula_sup;
  res["formula_inf"] = dr.formula_inf;
  res["orbit_hit_zero"] = dr.orbit_hit_zero;
  return rep;
}

struct ResponseArgs {
  double beta0 = 0.0, beta1 = 0.0, p = 0.0;
  double tol = 1e-8, fd_eps = 1e-3;
  std::string out_json, out_dphi, out_dh;
};

inline Report cmd_response(const ResponseArgs& args, const Common& common) {
  require_double_precision(common, "response");
  const double pc = critical_p(args.beta0, args.beta1);
  if (!(args.p > pc && args.p < 1.0))
    throw hypothesis_error("selection weight must lie in the mean-expansion domain (p_c, 1); p_c = " +
                           fmt(pc));

  ResponseOptions opt;
  opt.tol = args.tol;
  opt.fd_eps = args.fd_eps;
  auto rb = response_build(args.beta0, args.beta1, args.p, opt);
  auto fd = fd_check(rb);

  Report rep("response");
  fill_common(rep, common);
  rep.parameters()["beta0"] = args.beta0;
  rep.parameters()["beta1"] = args.beta1;
  rep.parameters()["p"] = args.p;
  rep.parameters()["tol"] = args.tol;
  rep.parameters()["fd_eps"] = args.fd_eps;

  rep.check("selection_weight_in_domain", true, args.p, pc,
            "requires p_c < p < 1");
  rep.check("window_contraction_below_one", rb.delta_max < 1.0, rb.delta_max, 1.0);

  rep.truncation("derivative_depth", rb.depth);
  rep.tail("derivative_l1", rb.tail_bound);
  rep.tail("merge_slack", rb.merge_slack);

  json& res = rep.results();
  res["p_c"] = pc;
  res["delta"] = rb.delta;
  res["delta_max"] = rb.delta_max;
  res["mass"] = rb.mass;
  res["dnorm_dp"] = rb.mass_derivative;
  res["fd_dnorm_dp"] = fd.mass_fd;
  res["dnorm_gap"] = fd.mass_gap;
  res["dphi_l1_gap"] = fd.series_gap;
  res["dphi_l1_gap_wide"] = fd.series_gap_wide;
  res["dh_l1_gap"] = fd.density_gap;
  res["dh_l1_gap_wide"] = fd.density_gap_wide;
  res["dh_mass"] = fd.density_derivative_mass;
  res["orbit_hit_zero"] = rb.orbit_hit_zero;

  write_csv_artifact(rep, "dphi_dp", args.out_dphi, rb.series_derivative);
  write_csv_artifact(rep, "dh_dp", args.out_dh, rb.density_derivative);
  return rep;
}

struct QuenchedArgs {
  std::string model, mode, out_json, out_phi;
  int outer = 40, inner = 60, depth = 0, samples = 0;
  double beta0 = 0.0;
  double periodic_tol = 1e-14;
};

inline std::string phase_path(const std::string& path, int phase) {
  const std::string tag = ".phase" + std::to_string(phase);
  auto dot = path.find_last_of('.');
  auto sep = path.find_last_of('/');
  if (dot == std::string::npos || (sep != std::string::npos && dot < sep))
    return path + tag;
  return path.substr(0, dot) + tag + path.substr(dot);
}

inline bool seeded_kind(const NoiseModel& model) {
  return model.kind() == NoiseModel::Kind::two_sided_iid ||
         model.kind() == NoiseModel::Kind::two_sided_markov;
}

// Shared tail of the series/perturbative modes: everything downstream of a
// backward profile c(theta^-s) anchored one step ahead of the sample point.
inline void quenched_profile_results(Report& rep, const NoiseModel& model,
                                     const NormalizerAt& c_at, int inner, int depth,
                                     const std::string& out_phi) {
  auto fr = functional_residual(model, c_at, inner);
  auto fib = fiber_density(model, c_at, depth);
  double eq = equivariance_residual(model, c_at, depth);

  rep.tail("functional_residual", fr.tail_bound);
  rep.tail("fiber_l1", fib.tail_bound);

  json& res = rep.results();
  res["c"] = c_at(0);
  res["functional_residual"] = fr.residual;
  res["equivariance_residual"] = eq;
  res["fiber_mass"] = fib.mass;
  if (fib.density.cells() <= 4096) res["fiber_density"] = step_json(fib.density);
  write_csv_artifact(rep, "fiber_density", out_phi, fib.density);
}

inline Report cmd_quenched(const QuenchedArgs& args, const Common& common) {
  require_double_precision(common, "quenched");
  const json model_json = load_json_arg(args.model);
  NoiseModel model = parse_model(model_json);
  const int inner = args.inner;
  const int depth = args.depth > 0 ? args.depth : inner;
  const int need = std::max(inner, depth) + 1;

  Report rep("quenched");
  fill_common(rep, common);
  rep.parameters()["model"] = model_json;
  rep.parameters()["mode"] = args.mode;
  rep.parameters()["outer"] = args.outer;
  rep.parameters()["inner"] = inner;
  rep.parameters()["depth"] = depth;

  rep.truncation("outer_terms", args.outer);
  rep.truncation("inner_depth", inner);
  rep.truncation("fiber_depth", depth);

  if (args.samples > 0 && !seeded_kind(model))
    throw config_error("--samples needs a seeded model (iid or markov)");

  if (args.mode == "series") {
    auto prof = normalizer_series(model.shifted(1), args.outer, inner, need);
    NormalizerAt c_at = [&prof](long long k) {
      return prof.backward_values[static_cast<std::size_t>(1 - k)];
    };
    rep.check("slopes_bounded_below", model.beta_inf() > 2.0, model.beta_inf(), 2.0,
              "series inversion needs every slope above 2");
    rep.tail("normalizer", prof.tail_bound);
    rep.results()["contraction"] = prof.contraction;
    quenched_profile_results(rep, model, c_at, inner, depth, args.out_phi);
    if (args.samples > 0) {
      json samples = json::array();
      for (int s = 0; s < args.samples; ++s) {
        auto one = normalizer_series(model.resampled(static_cast<std::uint64_t>(s)),
                                     args.outer, inner, 0);
        samples.push_back(json{{"sample", s}, {"c", one.value}});
      }
      rep.results()["samples"] = samples;
    }
    return rep;
  }

  if (args.mode == "periodic") {
    if (model.kind() != NoiseModel::Kind::periodic)
      throw config_error("mode periodic needs a periodic model");
    const int q = model.period();
    auto cs = normalizer_periodic(model, args.periodic_tol);
    rep.check("slopes_expanding", model.beta_inf() > 1.0, model.beta_inf(), 1.0);
    json& res = rep.results();
    res["c_values"] = cs;
    json residuals = json::array(), equivariance = json::array(), masses = json::array();
    for (int j = 0; j < q; ++j) {
      NoiseModel at = model.shifted(j);
      NormalizerAt c_at = [&cs, q, j](long long k) {
        long long idx = (j + k) % q;
        if (idx < 0) idx += q;
        return cs[static_cast<std::size_t>(idx)];
      };
      auto fr = functional_residual(at, c_at, inner);
      auto fib = fiber_density(at, c_at, depth);
      residuals.push_back(fr.residual);
      equivariance.push_back(equivariance_residual(at, c_at, depth));
      masses.push_back(fib.mass);
      if (j == 0) {
        rep.tail("functional_residual", fr.tail_bound);
        rep.tail("fiber_l1", fib.tail_bound);
        if (fib.density.cells() <= 4096) res["fiber_density"] = step_json(fib.density);
      }
      if (!args.out_phi.empty())
        write_csv_artifact(rep, "fiber_density_phase" + std::to_string(j),
                           q == 1 ? args.out_phi : phase_path(args.out_phi, j), fib.density);
    }
    res["functional_residuals"] = residuals;
    res["equivariance_residuals"] = equivariance;
    res["fiber_masses"] = masses;
    return rep;
  }

  if (args.mode == "perturbative") {
    if (!(args.beta0 > 1.0))
      throw config_error("mode perturbative needs --beta0 greater than 1");
    auto pn = normalizer_perturbative(model.shifted(1), args.beta0, args.outer, inner, need);
    NormalizerAt c_at = [&pn](long long k) {
      return pn.backward_values[static_cast<std::size_t>(1 - k)];
    };
    rep.parameters()["beta0"] = args.beta0;
    const double deviation = std::max(args.beta0 - model.beta_inf(),
                                      model.beta_sup() - args.beta0);
    rep.check("slopes_inside_window", true, deviation, pn.window.radius,
              "largest slope deviation from the base against the window radius");
    rep.check("contraction_below_one", pn.contraction < 1.0, pn.contraction, 1.0);
    rep.check("reciprocal_decay_geometric", pn.window.decay_geometric);
    rep.truncation("base_series_depth", 240);
    rep.tail("normalizer", pn.tail_bound);
    json& res = rep.results();
    res["contraction"] = pn.contraction;
    res["base_normalizer"] = pn.base;
    res["window"] = json{{"radius", pn.window.radius},
                         {"digit_radius", pn.window.digit_radius},
                         {"frac_radius", pn.window.frac_radius},
                         {"norm_radius", pn.window.norm_radius},
                         {"digit_depth", pn.window.digit_depth},
                         {"reciprocal_bound", pn.window.reciprocal_bound}};
    quenched_profile_results(rep, model, c_at, inner, depth, args.out_phi);
    if (args.samples > 0) {
      json samples = json::array();
      for (int s = 0; s < args.samples; ++s) {
        auto one = normalizer_perturbative(model.resampled(static_cast<std::uint64_t>(s)),
                                           args.beta0, args.outer, inner, 0);
        samples.push_back(json{{"sample", s}, {"c", one.value}});
      }
      rep.results()["samples"] = samples;
    }
    return rep;
  }

  throw config_error("unknown quenched mode \"" + args.mode +
                     "\"; expected series, periodic, or perturbative");
}

struct ExpandArgs {
  std::string betas, model, out_json;
  double x = -1.0;
  int steps = 0;
};

template <class S>
inline void expand_results(Report& rep, const std::vector<double>& path, double x) {
  std::vector<S> spath(path.begin(), path.end());
  auto rec = expand<S>(spath, static_cast<S>(x));
  const double partial = static_cast<double>(rec.partial_sums.back());
  const double remainder = static_cast<double>(rec.remainder_bound);
  const double defect = std::abs(x - partial);
  const double bound = remainder + static_cast<double>(path.size()) * 0x1p-52;

  rep.check("reconstruction_defect_within_remainder", defect <= bound, defect, bound);
  rep.check("mean_expanding_path", rec.mean_expanding);
  rep.truncation("expansion_depth", static_cast<long long>(path.size()));
  rep.tail("remainder", remainder);

  json& res = rep.results();
  res["digits"] = rec.digits;
  res["partial_sum"] = partial;
  res["tail_point"] = static_cast<double>(rec.tail_point);
  res["defect"] = defect;
}

inline Report cmd_expand(const ExpandArgs& args, const Common& common) {
  std::vector<double> path;
  json echo;
  if (!args.betas.empty()) {
    if (!args.model.empty())
      throw config_error("expand takes --betas or --model, not both");
    std::istringstream ss(args.betas);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      char* end = nullptr;
      double b = std::strtod(tok.c_str(), &end);
      if (end == tok.c_str() || *end != '\0')
        throw config_error("cannot parse slope \"" + tok + "\" in --betas");
      path.push_back(b);
    }
    echo = path;
  } else if (!args.model.empty()) {
    if (args.steps < 1) throw config_error("expand --model needs --steps at least 1");
    echo = load_json_arg(args.model);
    NoiseModel model = parse_model(echo);
    for (int i = 0; i < args.steps; ++i) path.push_back(model.forward(i));
  } else {
    throw config_error("expand needs --betas or --model");
  }
  if (path.empty()) throw config_error("expansion path is empty");
  for (double b : path)
    if (!(b > 0.0)) throw config_error("slopes must be positive");
  if (!(args.x >= 0.0 && args.x <= 1.0))
    throw config_error("--x must lie in [0, 1]");

  Report rep("expand");
  fill_common(rep, common);
  rep.parameters()["path"] = echo;
  rep.parameters()["x"] = args.x;

  if (common.precision == 53) {
    expand_results<double>(rep, path, args.x);
  } else {
    expand_results<long double>(rep, path, args.x);
  }
  return rep;
}

struct VerifyUlamArgs {
  std::string system, out_json, out_csv, out_exact;
  int bins = 0;
  double power_tol = 1e-12;
};

inline Report cmd_verify_ulam(const VerifyUlamArgs& args, const Common& common) {
  require_double_precision(common, "verify-ulam");
  SystemConfig sc = parse_system(load_json_arg(args.system));

  Report rep("verify-ulam");
  fill_common(rep, common);
  rep.parameters()["system"] = sc.echo;
  rep.parameters()["bins"] = args.bins;
  rep.parameters()["power_tol"] = args.power_tol;
  rep.parameters()["tol"] = sc.tol;

  expansion_checks(rep, sc.system);
  auto op = ulam_matrix(sc.system, args.bins);
  auto st = stationary_vector(op, args.power_tol);
  DensityOptions opt;
  opt.tol = sc.tol;
  DensityReport dr = build_density(sc.system, opt);

  rep.truncation("ulam_bins", args.bins);
  rep.truncation("series_depth", dr.depth);
  rep.tail("series_l1", dr.tail_bound);
  rep.tail("merge_slack", dr.merge_slack);

  json& res = rep.results();
  res["l1_to_exact"] = l1_distance(st.density, dr.density);
  res["residual"] = st.residual;
  res["iterations"] = st.iterations;

  write_csv_artifact(rep, "ulam_density", args.out_csv, st.density);
  write_csv_artifact(rep, "exact_density", args.out_exact, dr.density);
  return rep;
}

struct VerifyMcArgs {
  std::string system, out_json, out_csv, out_exact;
  long long orbits = 1000, steps = 1000, burn_in = 1000;
  int bins = 256;
  std::uint64_t seed = 1;
};

inline Report cmd_verify_mc(const VerifyMcArgs& args, const Common& common) {
  require_double_precision(common, "verify-mc");
  SystemConfig sc = parse_system(load_json_arg(args.system));

  Report rep("verify-mc");
  fill_common(rep, common);
  rep.parameters()["system"] = sc.echo;
  rep.parameters()["orbits"] = args.orbits;
  rep.parameters()["steps"] = args.steps;
  rep.parameters()["burn_in"] = args.burn_in;
  rep.parameters()["bins"] = args.bins;
  rep.parameters()["seed"] = args.seed;
  rep.parameters()["tol"] = sc.tol;

  expansion_checks(rep, sc.system);
  SimulateOptions opt;
  opt.orbits = args.orbits;
  opt.steps = args.steps;
  opt.burn_in = args.burn_in;
  opt.bins = args.bins;
  opt.seed = args.seed;
  auto sim = simulate(sc.system, opt);
  DensityOptions dopt;
  dopt.tol = sc.tol;
  DensityReport dr = build_density(sc.system, dopt);

  rep.truncation("histogram_bins", args.bins);
  rep.truncation("series_depth", dr.depth);
  rep.tail("series_l1", dr.tail_bound);
  rep.tail("merge_slack", dr.merge_slack);

  json& res = rep.results();
  res["l1_to_exact"] = l1_distance(sim.histogram, dr.density);
  res["samples"] = sim.samples;
  res["mean_expanding"] = sim.mean_expanding;

  write_csv_artifact(rep, "histogram", args.out_csv, sim.histogram);
  write_csv_artifact(rep, "exact_density", args.out_exact, dr.density);
  return rep;
}

inline int env_threads() {
  const char* tv = std::getenv("BETADYN_THREADS");
  if (tv == nullptr || *tv == '\0') return 0;
  char* end = nullptr;
  long n = std::strtol(tv, &end, 10);
  if (end == tv || *end != '\0' || n < 1)
    throw config_error("BETADYN_THREADS must be a positive integer");
  return static_cast<int>(n);
}

}  // namespace cli_detail

// Parses and runs one command line (without the program name).  Reports go
// to `out` unless --out-json redirects them to a file; diagnostics go to
// `err`.  Returns the process exit code.
inline int run_command(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
  using namespace cli_detail;

  CLI::App app{"invariant and stationary densities of random beta-map systems"};
  app.require_subcommand(1);

  Common common;
  app.add_option("--precision", common.precision,
                 "orbit arithmetic width in bits (53 or 64)")
      ->check(CLI::IsMember({53, 64}));

  DensityArgs den;
  auto* den_cmd = app.add_subcommand("density", "stationary density of an i.i.d. system");
  den_cmd->fallthrough();
  den_cmd->add_option("--system", den.system, "system JSON, inline or a file path")->required();
  den_cmd->add_option("--tol", den.tol, "series tolerance (overrides the system JSON)")
      ->check(CLI::PositiveNumber);
  den_cmd->add_option("--out-json", den.out_json, "write the report here instead of stdout");
  den_cmd->add_option("--out-csv", den.out_csv, "write the density as CSV");

  BoundsArgs bnd;
  auto* bnd_cmd = app.add_subcommand("bounds", "essential bounds of the stationary density");
  bnd_cmd->fallthrough();
  bnd_cmd->add_option("--system", bnd.system, "system JSON, inline or a file path")->required();
  bnd_cmd->add_option("--tol", bnd.tol, "series tolerance (overrides the system JSON)")
      ->check(CLI::PositiveNumber);
  bnd_cmd->add_option("--out-json", bnd.out_json, "write the report here instead of stdout");

  ResponseArgs rsp;
  auto* rsp_cmd = app.add_subcommand("response", "derivative of the density in the selection weight");
  rsp_cmd->fallthrough();
  rsp_cmd->add_option("--beta0", rsp.beta0, "flatter slope")->required();
  rsp_cmd->add_option("--beta1", rsp.beta1, "steeper slope")->required();
  rsp_cmd->add_option("--p", rsp.p, "selection weight of the steeper slope")->required();
  rsp_cmd->add_option("--tol", rsp.tol, "series tolerance")->check(CLI::PositiveNumber);
  rsp_cmd->add_option("--fd-eps", rsp.fd_eps, "finite-difference step")->check(CLI::PositiveNumber);
  rsp_cmd->add_option("--out-json", rsp.out_json, "write the report here instead of stdout");
  rsp_cmd->add_option("--out-dphi", rsp.out_dphi, "write the series derivative as CSV");
  rsp_cmd->add_option("--out-dh", rsp.out_dh, "write the density derivative as CSV");

  QuenchedArgs qn;
  auto* qn_cmd = app.add_subcommand("quenched", "fiberwise densities along a driving path");
  qn_cmd->fallthrough();
  qn_cmd->add_option("--model", qn.model, "model JSON, inline or a file path")->required();
  qn_cmd->add_option("--mode", qn.mode, "series, periodic, or perturbative")->required();
  qn_cmd->add_option("--outer", qn.outer, "outer series terms")->check(CLI::PositiveNumber);
  qn_cmd->add_option("--inner", qn.inner, "inner truncation depth")->check(CLI::PositiveNumber);
  qn_cmd->add_option("--depth", qn.depth, "fiber series depth (defaults to --inner)");
  qn_cmd->add_option("--beta0", qn.beta0, "base slope for the perturbative mode");
  qn_cmd->add_option("--samples", qn.samples, "extra normalizer samples for seeded models");
  qn_cmd->add_option("--periodic-tol", qn.periodic_tol, "depth control for the periodic solve")
      ->check(CLI::PositiveNumber);
  qn_cmd->add_option("--out-json", qn.out_json, "write the report here instead of stdout");
  qn_cmd->add_option("--out-phi", qn.out_phi, "write fiber densities as CSV");

  ExpandArgs xp;
  auto* xp_cmd = app.add_subcommand("expand", "greedy digit expansion along a slope path");
  xp_cmd->fallthrough();
  xp_cmd->add_option("--betas", xp.betas, "comma-separated slope path");
  xp_cmd->add_option("--model", xp.model, "model JSON supplying the path");
  xp_cmd->add_option("--steps", xp.steps, "path length when --model is used");
  xp_cmd->add_option("--x", xp.x, "point to expand")->required();
  xp_cmd->add_option("--out-json", xp.out_json, "write the report here instead of stdout");

  VerifyUlamArgs vu;
  auto* vu_cmd = app.add_subcommand("verify-ulam", "cross-check the density against a bin discretization");
  vu_cmd->fallthrough();
  vu_cmd->add_option("--system", vu.system, "system JSON, inline or a file path")->required();
  vu_cmd->add_option("--bins", vu.bins, "discretization bins")->required();
  vu_cmd->add_option("--power-tol", vu.power_tol, "power iteration tolerance")
      ->check(CLI::PositiveNumber);
  vu_cmd->add_option("--out-json", vu.out_json, "write the report here instead of stdout");
  vu_cmd->add_option("--out-csv", vu.out_csv, "write the discretized density as CSV");
  vu_cmd->add_option("--out-exact", vu.out_exact, "write the series density as CSV");

  VerifyMcArgs vm;
  auto* vm_cmd = app.add_subcommand("verify-mc", "cross-check the density against orbit statistics");
  vm_cmd->fallthrough();
  vm_cmd->add_option("--system", vm.system, "system JSON, inline or a file path")->required();
  vm_cmd->add_option("--orbits", vm.orbits, "number of simulated orbits");
  vm_cmd->add_option("--steps", vm.steps, "recorded steps per orbit");
  vm_cmd->add_option("--burn-in", vm.burn_in, "discarded steps per orbit");
  vm_cmd->add_option("--bins", vm.bins, "histogram bins");
  vm_cmd->add_option("--seed", vm.seed, "stream seed");
  vm_cmd->add_option("--out-json", vm.out_json, "write the report here instead of stdout");
  vm_cmd->add_option("--out-csv", vm.out_csv, "write the histogram as CSV");
  vm_cmd->add_option("--out-exact", vm.out_exact, "write the series density as CSV");

  Report rep("density");
  std::string report_path;
  bool ran = false;
  den_cmd->callback([&] { rep = cmd_density(den, common); report_path = den.out_json; ran = true; });
  bnd_cmd->callback([&] { rep = cmd_bounds(bnd, common); report_path = bnd.out_json; ran = true; });
  rsp_cmd->callback([&] { rep = cmd_response(rsp, common); report_path = rsp.out_json; ran = true; });
  qn_cmd->callback([&] { rep = cmd_quenched(qn, common); report_path = qn.out_json; ran = true; });
  xp_cmd->callback([&] { rep = cmd_expand(xp, common); report_path = xp.out_json; ran = true; });
  vu_cmd->callback([&] { rep = cmd_verify_ulam(vu, common); report_path = vu.out_json; ran = true; });
  vm_cmd->callback([&] { rep = cmd_verify_mc(vm, common); report_path = vm.out_json; ran = true; });

  try {
    common.threads = env_threads();
    if (common.threads > 0) Eigen::setNbThreads(common.threads);
    std::reverse(args.begin(), args.end());
    app.parse(std::move(args));
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e, out, err);
    return code == 0 ? exit_success : exit_config;
  } catch (const config_error& e) {
    err << "configuration error: " << e.what() << "\n";
    return exit_config;
  } catch (const hypothesis_error& e) {
    err << "hypothesis violation: " << e.what() << "\n";
    return exit_hypothesis;
  } catch (const precision_error& e) {
    err << "precision failure: " << e.what() << "\n";
    return exit_precision;
  } catch (const io_error& e) {
    err << "I/O error: " << e.what() << "\n";
    return exit_io;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return exit_failure;
  }

  if (!ran) return exit_success;
  try {
    const std::string text = rep.body().dump(2) + "\n";
    if (report_path.empty()) {
      out << text;
    } else {
      write_text_file(report_path, text);
    }
  } catch (const io_error& e) {
    err << "I/O error: " << e.what() << "\n";
    return exit_io;
  }
  return exit_success;
}

}  // namespace betadyn
