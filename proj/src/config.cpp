#include "sepdiff/config.hpp"

#include <fstream>
#include <sstream>

#include "sepdiff/error.hpp"

namespace sepdiff {

namespace {

using nlohmann::json;

[[noreturn]] void bad(const std::string& what) { throw Error(ErrorKind::ConfigError, what); }

template <class T>
T get_or(const json& obj, const char* key, T fallback) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception& e) {
    bad(std::string("key '") + key + "': " + e.what());
  }
}

std::vector<int> int_list(const json& v, const char* what) {
  std::vector<int> out;
  if (v.is_number_integer()) {
    out.push_back(v.get<int>());
  } else if (v.is_array()) {
    for (const auto& x : v) {
      if (!x.is_number_integer()) bad(std::string(what) + " must hold integers");
      out.push_back(x.get<int>());
    }
  } else {
    bad(std::string(what) + " must be an integer or a list of integers");
  }
  if (out.empty()) bad(std::string(what) + " is empty");
  return out;
}

Site site_of(const json& v, int dimension) {
  if (!v.is_array() || static_cast<int>(v.size()) != dimension)
    bad("site " + v.dump() + " must be an integer vector of length " + std::to_string(dimension));
  Site s;
  for (const auto& c : v) {
    if (!c.is_number_integer()) bad("site " + v.dump() + " must hold integers");
    s.push_back(c.get<int>());
  }
  return s;
}

double probability_of(const json& v) {
  if (v.is_string()) return parse_probability(v.get<std::string>());
  if (v.is_number()) return v.get<double>();
  bad("probability must be a number or a rational string");
}

SolverOptions parse_solver(const json& s) {
  SolverOptions o;
  o.tol = get_or(s, "tol", o.tol);
  o.max_iter = get_or(s, "max_iter", o.max_iter);
  o.restart = get_or(s, "restart", o.restart);
  o.dense_threshold = get_or<std::size_t>(s, "dense_threshold", o.dense_threshold);
  o.dense_eigen_threshold = get_or<std::size_t>(s, "dense_eigen_threshold", o.dense_eigen_threshold);
  o.precondition = get_or(s, "precondition", o.precondition);
  const auto method = get_or<std::string>(s, "method", "auto");
  if (method == "auto") o.choice = SolverChoice::Auto;
  else if (method == "dense") o.choice = SolverChoice::Dense;
  else if (method == "iterative") o.choice = SolverChoice::Iterative;
  else bad("solver.method must be auto, dense or iterative");
  if (!(o.tol > 0.0 && o.tol < 1e-2)) bad("solver.tol must lie in (0, 1e-2)");
  if (o.max_iter < 1) bad("solver.max_iter must be positive");
  if (o.restart < 2) bad("solver.restart must be at least 2");
  return o;
}

}  // namespace

JumpKernel parse_kernel(const json& block) {
  if (!block.is_object()) bad("kernel block must be an object");
  if (!block.contains("dimension") || !block.at("dimension").is_number_integer())
    bad("kernel.dimension must be an integer");
  const int d = block.at("dimension").get<int>();
  if (d < 1) bad("kernel.dimension must be positive");
  if (!block.contains("entries") || !block.at("entries").is_array()) bad("kernel.entries must be a list");
  std::vector<JumpEntry> entries;
  for (const auto& e : block.at("entries")) {
    if (!e.is_object() || !e.contains("z") || !e.contains("p")) bad("kernel entry needs 'z' and 'p'");
    entries.push_back({site_of(e.at("z"), d), probability_of(e.at("p"))});
  }
  JumpKernel kernel(d, std::move(entries));
  validate(kernel);
  return kernel;
}

LocalFunction parse_local_function(const json& block, int dimension) {
  if (!block.is_object()) bad("function block must be an object");
  if (block.contains("occupation")) {
    double offset = 0.0;
    if (block.contains("offset")) offset = probability_of(block.at("offset"));
    return LocalFunction::occupation(site_of(block.at("occupation"), dimension), offset);
  }
  LocalFunction f;
  f.constant = get_or(block, "constant", 0.0);
  if (block.contains("terms")) {
    for (const auto& t : block.at("terms")) {
      if (!t.contains("sites")) bad("function term needs 'sites'");
      std::vector<Site> sites;
      for (const auto& s : t.at("sites")) sites.push_back(site_of(s, dimension));
      f.terms.push_back({get_or(t, "coef", 1.0), std::move(sites)});
    }
  }
  return f;
}

int RunConfig::particles_for(int half_width) const {
  const TorusGeometry geo(kernel.dimension(), half_width);
  if (total_particles) return *total_particles;
  return particles_for_density(*density, geo);
}

RunConfig parse_config(const json& doc) {
  if (!doc.is_object()) bad("configuration must be a JSON object");
  RunConfig cfg;
  cfg.raw = doc;
  if (!doc.contains("kernel")) bad("missing 'kernel' block");
  cfg.kernel = parse_kernel(doc.at("kernel"));
  const int d = cfg.kernel.dimension();

  if (!doc.contains("N")) bad("missing 'N'");
  cfg.half_widths = int_list(doc.at("N"), "N");
  for (int n : cfg.half_widths)
    if (n < 1) bad("N must be positive");

  const bool has_k = doc.contains("K"), has_a = doc.contains("density");
  if (has_k == has_a) bad("exactly one of 'K' and 'density' must be given");
  if (has_k) {
    const int k = get_or(doc, "K", 0);
    for (int n : cfg.half_widths) {
      const TorusGeometry geo(d, n);
      if (k < 1 || k > geo.site_count())
        bad("K = " + std::to_string(k) + " outside [1, (2N)^d] for N = " + std::to_string(n));
    }
    cfg.total_particles = k;
  } else {
    const double a = probability_of(doc.at("density"));
    if (!(a >= 0.0 && a <= 1.0)) bad("density must lie in [0, 1]");
    cfg.density = a;
  }

  if (doc.contains("direction")) {
    const auto& v = doc.at("direction");
    if (!v.is_array() || static_cast<int>(v.size()) != d) bad("direction must have length " + std::to_string(d));
    std::vector<double> a;
    double norm = 0.0;
    for (const auto& c : v) {
      if (!c.is_number()) bad("direction must hold numbers");
      a.push_back(c.get<double>());
      norm += a.back() * a.back();
    }
    if (!(norm > 0.0)) bad("direction must be nonzero");
    cfg.direction = a;
  }
  if (doc.contains("sign")) {
    const int s = get_or(doc, "sign", 0);
    if (s != 1 && s != -1) bad("sign must be +1 or -1");
    cfg.sign = s;
  }
  if (doc.contains("solver")) cfg.solver = parse_solver(doc.at("solver"));
  cfg.plateau_rtol = get_or(doc, "plateau_rtol", cfg.plateau_rtol);
  if (!(cfg.plateau_rtol > 0.0)) bad("plateau_rtol must be positive");

  if (doc.contains("mc")) {
    const auto& m = doc.at("mc");
    cfg.mc.horizon = get_or(m, "T", cfg.mc.horizon);
    cfg.mc.replicas = get_or<std::size_t>(m, "M", cfg.mc.replicas);
    cfg.mc.seed = get_or<std::uint64_t>(m, "seed", cfg.mc.seed);
    cfg.mc.fast_path = get_or(m, "fast_path", cfg.mc.fast_path);
    cfg.relaxation_factor = get_or(m, "relaxation_factor", cfg.relaxation_factor);
    cfg.max_replicas = get_or<std::size_t>(m, "max_replicas", cfg.max_replicas);
    if (!(cfg.mc.horizon > 0.0)) bad("mc.T must be positive");
    if (cfg.mc.replicas < 1) bad("mc.M must be positive");
    if (!(cfg.relaxation_factor >= 0.0)) bad("mc.relaxation_factor must be nonnegative");
  }

  if (doc.contains("diagnostics")) {
    const auto& g = doc.at("diagnostics");
    auto& diag = cfg.diagnostics;
    diag.prop1_trials = get_or(g, "prop1_trials", diag.prop1_trials);
    diag.gap = get_or(g, "gap", diag.gap);
    diag.sector = get_or(g, "sector", diag.sector);
    if (diag.prop1_trials < 0) bad("diagnostics.prop1_trials must be nonnegative");
    if (g.contains("resolvent_ladder")) {
      for (const auto& x : g.at("resolvent_ladder")) {
        if (!x.is_number() || !(x.get<double>() > 0.0)) bad("resolvent_ladder entries must be positive");
        diag.resolvent_ladder.push_back(x.get<double>());
      }
    }
    if (g.contains("multiscale")) {
      const auto& m = g.at("multiscale");
      MultiscaleConfig ms;
      ms.l = get_or(m, "l", ms.l);
      ms.q = get_or(m, "q", ms.q);
      ms.n_max = get_or(m, "n_max", ms.n_max);
      if (ms.l < 1 || ms.q < 2 || ms.n_max < 1) bad("multiscale needs l >= 1, q >= 2, n_max >= 1");
      if (!m.contains("function")) bad("multiscale.function missing");
      ms.function = parse_local_function(m.at("function"), d);
      diag.multiscale = ms;
    }
    if (g.contains("hminus1")) {
      const auto& h = g.at("hminus1");
      HMinus1Config hc;
      if (!h.contains("N") || !h.contains("function")) bad("hminus1 needs 'N' and 'function'");
      hc.half_widths = int_list(h.at("N"), "hminus1.N");
      hc.function = parse_local_function(h.at("function"), d);
      if (!cfg.density) bad("hminus1 diagnostic needs 'density'");
      diag.hminus1 = hc;
    }
    if (g.contains("range_residual")) diag.range_radii = int_list(g.at("range_residual").at("radii"), "radii");
  }

  if (doc.contains("calibration")) {
    for (const auto& c : doc.at("calibration")) {
      if (!c.contains("N") || !c.contains("K")) bad("calibration entries need 'N' and 'K'");
      const JumpKernel k = c.contains("kernel") ? parse_kernel(c.at("kernel")) : cfg.kernel;
      cfg.calibration.push_back({TorusGeometry(k.dimension(), get_or(c, "N", 0)), get_or(c, "K", 0), k});
    }
  }
  if (doc.contains("caps")) {
    cfg.state_cap = get_or<std::uint64_t>(doc.at("caps"), "states", cfg.state_cap);
    cfg.nonzero_cap = get_or<std::uint64_t>(doc.at("caps"), "nonzeros", cfg.nonzero_cap);
  }
  cfg.dump_operator = get_or(doc, "dump_operator", cfg.dump_operator);
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::ConfigError, "cannot open config '" + path + "'");
  json doc;
  try {
    doc = json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::ConfigError, std::string("parse error in '") + path + "': " + e.what());
  }
  return parse_config(doc);
}

}  // namespace sepdiff
