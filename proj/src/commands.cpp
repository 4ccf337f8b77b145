#include "sepdiff/commands.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <ostream>
#include <sstream>

#include "sepdiff/error.hpp"

namespace sepdiff {

namespace {

using nlohmann::json;

const char* const kSignConvention = "D = free_term - sign * 2 <w_a, (-L_N)^{-1} v_a>";

int effective_sign(const RunConfig& cfg) { return cfg.sign.value_or(kDefaultCorrectionSign); }

DiffusionOptions diffusion_options(const RunConfig& cfg, const CommandContext& ctx) {
  DiffusionOptions o;
  o.correction_sign = effective_sign(cfg);
  o.solver = cfg.solver;
  o.assembly.threads = ctx.threads;
  o.assembly.nonzero_cap = cfg.nonzero_cap;
  return o;
}

AssemblyOptions assembly_options(const RunConfig& cfg, const CommandContext& ctx) {
  AssemblyOptions o;
  o.threads = ctx.threads;
  o.nonzero_cap = cfg.nonzero_cap;
  return o;
}

std::uint64_t master_seed(const RunConfig& cfg, const CommandContext& ctx) {
  return ctx.seed_override.value_or(cfg.mc.seed);
}

json solver_json(const SolverOptions& s) {
  const char* choice = s.choice == SolverChoice::Auto ? "auto" : s.choice == SolverChoice::Dense ? "dense" : "iterative";
  return {{"tol", s.tol},
          {"max_iter", s.max_iter},
          {"restart", s.restart},
          {"dense_threshold", s.dense_threshold},
          {"dense_eigen_threshold", s.dense_eigen_threshold},
          {"method", choice},
          {"precondition", s.precondition},
          {"replay_tolerance", 2.0 * s.tol}};
}

json report_header(const std::string& command, const RunConfig& cfg, const CommandContext& ctx) {
  return {{"command", command},
          {"version", SEPDIFF_VERSION},
          {"config", cfg.raw},
          {"seed", master_seed(cfg, ctx)},
          {"sign", effective_sign(cfg)},
          {"sign_convention", kSignConvention},
          {"solver", solver_json(cfg.solver)}};
}

json vec_json(std::span<const double> v) { return json(std::vector<double>(v.begin(), v.end())); }

json matrix_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::ConfigError, "cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw Error(ErrorKind::ConfigError, "write failed for '" + path.string() + "'");
}

/// CSV builder with fixed formatting and '\n' line endings.
class Csv {
 public:
  explicit Csv(std::initializer_list<std::string> header) {
    bool first = true;
    for (const auto& h : header) {
      if (!first) os_ << ',';
      os_ << h;
      first = false;
    }
    os_ << '\n';
  }
  explicit Csv(const std::vector<std::string>& header) {
    for (std::size_t i = 0; i < header.size(); ++i) os_ << (i ? "," : "") << header[i];
    os_ << '\n';
  }

  Csv& cell(const std::string& s) { return sep() << s, *this; }
  Csv& cell(double v) { return sep() << format_number(v), *this; }
  Csv& cell(long long v) { return sep() << v, *this; }
  Csv& cell(int v) { return cell(static_cast<long long>(v)); }
  Csv& cell(std::uint64_t v) { return sep() << v, *this; }
  Csv& cell(std::size_t v, int) { return cell(static_cast<std::uint64_t>(v)); }
  void end() {
    os_ << '\n';
    fresh_ = true;
  }
  std::string str() const { return os_.str(); }

 private:
  std::ostringstream& sep() {
    if (!fresh_) os_ << ',';
    fresh_ = false;
    return os_;
  }
  std::ostringstream os_;
  bool fresh_ = true;
};

void emit(const std::string& command, const CommandContext& ctx, const std::string& csv, const json& report) {
  std::filesystem::create_directories(ctx.out_dir);
  write_text(ctx.out_dir / (command + ".csv"), csv);
  write_text(ctx.out_dir / (command + ".report.json"), report.dump(2) + "\n");
}

StateSpace make_space(const RunConfig& cfg, int half_width) {
  const TorusGeometry geo(cfg.kernel.dimension(), half_width);
  return StateSpace(geo, cfg.particles_for(half_width), cfg.kernel.range(), cfg.state_cap);
}

void maybe_dump(const RunConfig& cfg, const CommandContext& ctx, const StateSpace& space, const std::string& stem) {
  if (!cfg.dump_operator) return;
  SparseOperator op = full_generator(space, cfg.kernel, assembly_options(cfg, ctx));
  std::filesystem::create_directories(ctx.out_dir);
  std::ofstream out(ctx.out_dir / (stem + "_N" + std::to_string(space.geometry().half_width()) + ".mtx"),
                    std::ios::binary);
  write_matrix_market(out, op);
}

json direction_json(const DirectionReport& r) {
  return {{"direction", vec_json(r.direction)},
          {"free_term", r.free_term},
          {"pairing", r.pairing},
          {"correction", r.correction},
          {"D", r.value},
          {"D_other_sign", r.alternate_value},
          {"sign", r.sign},
          {"residual", r.residual},
          {"method", std::string(to_string(r.method))}};
}

std::string iso_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

std::string format_number(double value) {
  if (value == 0.0) return "0";  // folds -0
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

int exit_code_for(const Error& error) {
  switch (error_class(error.kind())) {
    case ErrorClass::Validation:
      return kExitValidation;
    case ErrorClass::Numerical:
      return kExitNumerical;
    case ErrorClass::SizeCap:
      return kExitSizeCap;
  }
  return kExitNumerical;
}

void cmd_exact(const RunConfig& cfg, const CommandContext& ctx) {
  const auto opts = diffusion_options(cfg, ctx);
  Csv csv({"N", "K", "alpha", "a_index", "free_term", "correction", "D", "residual", "sign"});
  json report = report_header("exact", cfg, ctx);
  report["systems"] = json::array();
  for (int n : cfg.half_widths) {
    const StateSpace space = make_space(cfg, n);
    maybe_dump(cfg, ctx, space, "exact");
    const DiffusionReport rep = cfg.direction ? compute_D(space, cfg.kernel, *cfg.direction, opts)
                                              : compute_D_matrix(space, cfg.kernel, opts);
    json sys = {{"N", n},
                {"K", rep.total_particles},
                {"alpha", rep.density},
                {"states", space.size()},
                {"sign", rep.sign},
                {"min_eigenvalue", rep.min_eigenvalue},
                {"directions", json::array()}};
    if (rep.matrix.size() > 0) sys["matrix"] = matrix_json(rep.matrix);
    for (std::size_t i = 0; i < rep.directions.size(); ++i) {
      const auto& r = rep.directions[i];
      csv.cell(n).cell(rep.total_particles).cell(rep.density).cell(i, 0).cell(r.free_term).cell(r.correction)
          .cell(r.value).cell(r.residual).cell(r.sign);
      csv.end();
      sys["directions"].push_back(direction_json(r));
    }
    report["systems"].push_back(sys);
  }
  emit("exact", ctx, csv.str(), report);
}

void cmd_sweep(const RunConfig& cfg, const CommandContext& ctx) {
  const int d = cfg.kernel.dimension();
  double alpha = 0.0;
  if (cfg.density) {
    alpha = *cfg.density;
  } else {
    // A fixed K only pins a density on the first torus.
    const TorusGeometry geo(d, cfg.half_widths.front());
    alpha = static_cast<double>(*cfg.total_particles) / static_cast<double>(geo.site_count());
  }
  const auto rep = sweep(cfg.kernel, alpha, cfg.half_widths, diffusion_options(cfg, ctx), cfg.plateau_rtol,
                         cfg.state_cap);

  std::vector<std::string> header = {"N", "K", "alpha"};
  for (int i = 1; i <= d; ++i)
    for (int j = 1; j <= d; ++j) header.push_back("D_" + std::to_string(i) + "_" + std::to_string(j));
  header.push_back("difference");
  Csv csv(header);
  json report = report_header("sweep", cfg, ctx);
  report["target_density"] = rep.target_density;
  report["plateau_rtol"] = rep.plateau_rtol;
  report["verdict"] = rep.plateau ? "plateau" : "not reached";
  report["entries"] = json::array();
  for (const auto& e : rep.entries) {
    csv.cell(e.half_width).cell(e.total_particles).cell(e.density);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) csv.cell(e.matrix(i, j));
    if (e.difference) csv.cell(*e.difference);
    else csv.cell(std::string());
    csv.end();
    json entry = {{"N", e.half_width}, {"K", e.total_particles}, {"alpha", e.density}, {"matrix", matrix_json(e.matrix)}};
    entry["difference"] = e.difference ? json(*e.difference) : json(nullptr);
    report["entries"].push_back(entry);
  }
  emit("sweep", ctx, csv.str(), report);
}

void cmd_mc(const RunConfig& cfg, const CommandContext& ctx) {
  const int d = cfg.kernel.dimension();
  std::vector<std::string> header = {"N", "K", "replica", "T"};
  for (int i = 1; i <= d; ++i) header.push_back("X_" + std::to_string(i));
  header.push_back("njumps");
  Csv csv(header);

  std::vector<std::string> sheader = {"N", "K", "alpha", "T", "M"};
  for (int i = 1; i <= d; ++i) sheader.push_back("drift_" + std::to_string(i));
  for (int i = 1; i <= d; ++i) sheader.push_back("expected_drift_" + std::to_string(i));
  for (int i = 1; i <= d; ++i)
    for (int j = 1; j <= d; ++j) sheader.push_back("C_" + std::to_string(i) + "_" + std::to_string(j));
  for (int i = 1; i <= d; ++i)
    for (int j = 1; j <= d; ++j) sheader.push_back("se_" + std::to_string(i) + "_" + std::to_string(j));
  Csv summary(sheader);

  json report = report_header("mc", cfg, ctx);
  report["systems"] = json::array();
  for (std::size_t s = 0; s < cfg.half_widths.size(); ++s) {
    const int n = cfg.half_widths[s];
    const StateSpace space = make_space(cfg, n);
    MCOptions mc = cfg.mc;
    mc.threads = ctx.threads;
    mc.seed = s == 0 ? master_seed(cfg, ctx) : replica_seed(master_seed(cfg, ctx), 1u << 20 | s);
    const MCEstimate est = estimate_diffusion(space, cfg.kernel, mc);

    for (int pass = 0; pass < 2; ++pass) {
      const auto& pos = pass == 0 ? est.positions_t : est.positions_2t;
      const auto& ev = pass == 0 ? est.events_t : est.events_2t;
      const double horizon = pass == 0 ? est.first.horizon : est.second.horizon;
      for (std::size_t r = 0; r < pos.size(); ++r) {
        csv.cell(n).cell(space.total_particles()).cell(r, 0).cell(horizon);
        for (long long x : pos[r]) csv.cell(x);
        csv.cell(ev[r]);
        csv.end();
      }
    }

    json sys = {{"N", n},
                {"K", space.total_particles()},
                {"alpha", space.density()},
                {"seed", est.seed},
                {"M", est.replicas},
                {"expected_drift", vec_json(est.expected_drift)},
                {"horizons", json::array()}};
    for (const HorizonEstimate* h : {&est.first, &est.second}) {
      summary.cell(n).cell(space.total_particles()).cell(space.density()).cell(h->horizon).cell(est.replicas, 0);
      for (double x : h->drift) summary.cell(x);
      for (double x : est.expected_drift) summary.cell(x);
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) summary.cell(h->covariance(i, j));
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) summary.cell(h->covariance_se(i, j));
      summary.end();
      sys["horizons"].push_back({{"T", h->horizon},
                                 {"drift", vec_json(h->drift)},
                                 {"drift_se", vec_json(h->drift_se)},
                                 {"covariance", matrix_json(h->covariance)},
                                 {"covariance_se", matrix_json(h->covariance_se)}});
    }

    // Relaxation guideline T >= 10 / gap.
    if (space.size() > 1 && space.size() <= cfg.solver.dense_threshold) {
      const auto generator = full_generator(space, cfg.kernel, assembly_options(cfg, ctx));
      const double gap = spectral_gap(generator, cfg.solver);
      sys["gap"] = gap;
      sys["relaxation_ok"] = cfg.mc.horizon >= cfg.relaxation_factor / gap;
    } else if (space.size() > 1) {
      sys["gap"] = nullptr;
      sys["relaxation_ok"] = nullptr;
      sys["relaxation_note"] = "gap unavailable at this size; T >= 10/gap not checked";
    }
    report["systems"].push_back(sys);
  }
  emit("mc", ctx, csv.str(), report);
  write_text(ctx.out_dir / "mc_summary.csv", summary.str());
}

void cmd_diagnostics(const RunConfig& cfg, const CommandContext& ctx) {
  const auto& diag = cfg.diagnostics;
  const auto opts = diffusion_options(cfg, ctx);
  Csv csv({"N", "K", "diagnostic", "key", "value"});
  json report = report_header("diagnostics", cfg, ctx);
  report["systems"] = json::array();
  const auto cls = classify(cfg.kernel);
  report["kernel_class"] = std::string(to_string(cls.kind));

  for (int n : cfg.half_widths) {
    const StateSpace space = make_space(cfg, n);
    const int k = space.total_particles();
    auto row = [&](const std::string& name, const std::string& key, double value) {
      csv.cell(n).cell(k).cell(name).cell(key).cell(value);
      csv.end();
    };
    json sys = {{"N", n}, {"K", k}, {"alpha", space.density()}, {"states", space.size()}};
    maybe_dump(cfg, ctx, space, "diagnostics");
    if (space.size() < 2) {
      sys["note"] = "single-state system; operator diagnostics skipped";
      report["systems"].push_back(sys);
      continue;
    }
    const auto generator = full_generator(space, cfg.kernel, opts.assembly);
    check_ergodicity(generator);

    if (diag.gap) {
      const double gap = spectral_gap(generator, cfg.solver);
      row("gap", "value", gap);
      sys["gap"] = gap;
    }
    if (diag.sector) {
      const auto sec = sector_constant(generator, cfg.solver);
      row("sector", "constant", sec.constant);
      row("sector", "iterations", sec.iterations);
      sys["sector"] = {{"constant", sec.constant},
                       {"iterations", sec.iterations},
                       {"method", std::string(to_string(sec.method))}};
    }
    if (diag.prop1_trials > 0) {
      const auto p = verify_prop1(generator, diag.prop1_trials, master_seed(cfg, ctx), cfg.solver);
      row("prop1", "max_dual_ratio", p.max_dual_ratio);
      row("prop1", "max_attainment_gap", p.max_attainment_gap);
      row("prop1", "max_pairing_ratio", p.max_pairing_ratio);
      row("prop1", "min_isometry_ratio", p.min_isometry_ratio);
      row("prop1", "max_isometry_ratio", p.max_isometry_ratio);
      sys["prop1"] = {{"trials", p.trials},
                      {"max_dual_ratio", p.max_dual_ratio},
                      {"max_attainment_gap", p.max_attainment_gap},
                      {"max_pairing_ratio", p.max_pairing_ratio},
                      {"min_isometry_ratio", p.min_isometry_ratio},
                      {"max_isometry_ratio", p.max_isometry_ratio},
                      {"symmetric", p.symmetric},
                      {"passed", p.passed}};
    }

    std::vector<double> e1(cfg.kernel.dimension(), 0.0);
    e1[0] = 1.0;
    const auto drift = local_drift_functions(space, cfg.kernel, e1);

    if (!diag.resolvent_ladder.empty()) {
      const auto pts = resolvent_sweep(generator, drift.v, diag.resolvent_ladder, cfg.solver);
      sys["resolvent"] = json::array();
      for (const auto& p : pts) {
        const std::string key = "lambda=" + format_number(p.lambda);
        row("resolvent", key + ":h1_distance", p.h1_distance);
        row("resolvent", key + ":h1_norm", p.h1_norm);
        sys["resolvent"].push_back({{"lambda", p.lambda},
                                    {"h1_distance", p.h1_distance},
                                    {"h1_norm", p.h1_norm},
                                    {"residual", p.residual}});
      }
    }

    if (diag.multiscale) {
      const auto& ms = *diag.multiscale;
      const auto v = ms.function.evaluate(space);
      const auto rep = multiscale_diagnostic(space, v, ms.l, ms.q, ms.n_max);
      json out = {{"l", rep.l}, {"q", rep.q}, {"entries", json::array()}, {"second_moments", json::array()}};
      for (const auto& e : rep.entries) {
        row("multiscale", "increment_variance:n=" + std::to_string(e.n), e.increment_variance);
        out["entries"].push_back({{"n", e.n}, {"scale", e.scale}, {"increment_variance", e.increment_variance}});
      }
      for (const auto& [scale, m2] : rep.second_moments) {
        row("multiscale", "second_moment:scale=" + std::to_string(scale), m2);
        out["second_moments"].push_back({{"scale", scale}, {"value", m2}});
      }
      if (rep.decay_exponent) row("multiscale", "decay_exponent", *rep.decay_exponent);
      out["decay_exponent"] = rep.decay_exponent ? json(*rep.decay_exponent) : json(nullptr);
      sys["multiscale"] = out;
    }

    if (!diag.range_radii.empty()) {
      // Reference for the H_{-1} metric: environment part of the symmetrised
      // kernel when p is symmetric, symmetric part of the full generator
      // otherwise.
      const SparseOperator reference = cls.kind == KernelClass::Symmetric
                                           ? assemble_environment(space, cfg.kernel, opts.assembly)
                                           : symmetric_part(generator);
      sys["range_residual"] = json::array();
      for (int radius : diag.range_radii) {
        const auto sites = block_sites(space.geometry(), radius);
        std::vector<Observable> basis;
        for (int e : sites) {
          Observable g(space.size());
          for (std::size_t i = 0; i < space.size(); ++i) g[i] = space.unrank(i).test(e) ? 1.0 : 0.0;
          basis.push_back(centered(g));
        }
        for (std::size_t a = 0; a < sites.size(); ++a)
          for (std::size_t b = a + 1; b < sites.size(); ++b) {
            Observable g(space.size());
            for (std::size_t i = 0; i < space.size(); ++i) {
              const auto c = space.unrank(i);
              g[i] = c.test(sites[a]) && c.test(sites[b]) ? 1.0 : 0.0;
            }
            basis.push_back(centered(g));
          }
        const double res = range_residual(generator, reference, drift.v, basis, cfg.solver);
        row("range_residual", "radius=" + std::to_string(radius), res);
        sys["range_residual"].push_back({{"radius", radius}, {"basis_size", basis.size()}, {"residual", res}});
      }
    }
    report["systems"].push_back(sys);
  }

  if (diag.hminus1) {
    if (!cfg.density) throw Error(ErrorKind::ConfigError, "hminus1 diagnostic needs 'density'");
    const auto entries = hminus1_convergence_diagnostic(cfg.kernel, *cfg.density, diag.hminus1->function,
                                                        diag.hminus1->half_widths, opts, cfg.state_cap);
    report["hminus1"] = json::array();
    for (const auto& e : entries) {
      csv.cell(e.half_width).cell(e.total_particles).cell(std::string("hminus1")).cell(std::string("norm"))
          .cell(e.norm);
      csv.end();
      if (e.difference) {
        csv.cell(e.half_width).cell(e.total_particles).cell(std::string("hminus1"))
            .cell(std::string("difference")).cell(*e.difference);
        csv.end();
      }
      json j = {{"N", e.half_width}, {"K", e.total_particles}, {"alpha", e.density}, {"norm", e.norm}};
      j["difference"] = e.difference ? json(*e.difference) : json(nullptr);
      report["hminus1"].push_back(j);
    }
  }
  emit("diagnostics", ctx, csv.str(), report);
}

void cmd_arbitrate_sign(const RunConfig& cfg, const CommandContext& ctx) {
  std::vector<CalibrationSystem> systems = cfg.calibration;
  if (systems.empty())
    for (int n : cfg.half_widths)
      systems.push_back({TorusGeometry(cfg.kernel.dimension(), n), cfg.particles_for(n), cfg.kernel});

  ArbitrationOptions opts;
  opts.mc = cfg.mc;
  opts.mc.seed = master_seed(cfg, ctx);
  opts.mc.threads = ctx.threads;
  opts.relaxation_factor = cfg.relaxation_factor;
  opts.max_replicas = cfg.max_replicas;
  const auto rep = arbitrate_sign(systems, opts);

  Csv csv({"system", "N", "K", "M", "T", "direction", "pairing", "D_plus", "D_minus", "mc", "se", "pass_plus",
           "pass_minus"});
  json report = report_header("arbitrate-sign", cfg, ctx);
  report["selected_sign"] = rep.sign;
  report["bands"] = opts.bands;
  report["rows"] = json::array();
  for (const auto& r : rep.rows) {
    const auto& sys = systems[r.system];
    std::string dir;
    for (std::size_t i = 0; i < r.direction.size(); ++i) dir += (i ? ";" : "") + format_number(r.direction[i]);
    csv.cell(r.system, 0).cell(sys.geometry.half_width()).cell(sys.total_particles).cell(r.replicas, 0)
        .cell(r.horizon).cell(dir).cell(r.pairing).cell(r.d_plus).cell(r.d_minus).cell(r.mc).cell(r.se)
        .cell(r.pass_plus ? 1 : 0).cell(r.pass_minus ? 1 : 0);
    csv.end();
    report["rows"].push_back({{"system", r.system},
                              {"N", sys.geometry.half_width()},
                              {"K", sys.total_particles},
                              {"M", r.replicas},
                              {"T", r.horizon},
                              {"direction", vec_json(r.direction)},
                              {"pairing", r.pairing},
                              {"D_plus", r.d_plus},
                              {"D_minus", r.d_minus},
                              {"mc", r.mc},
                              {"se", r.se},
                              {"pass_plus", r.pass_plus},
                              {"pass_minus", r.pass_minus}});
  }
  emit("arbitrate-sign", ctx, csv.str(), report);
}

int run_command(std::string_view command, const std::string& config_path, const CommandContext& ctx,
                std::ostream& err) {
  const std::string started = iso_now();
  const auto t0 = std::chrono::steady_clock::now();
  int code = kExitOk;
  std::string message;
  try {
    const RunConfig cfg = load_config(config_path);
    if (command == "exact") cmd_exact(cfg, ctx);
    else if (command == "sweep") cmd_sweep(cfg, ctx);
    else if (command == "mc") cmd_mc(cfg, ctx);
    else if (command == "diagnostics") cmd_diagnostics(cfg, ctx);
    else if (command == "arbitrate-sign") cmd_arbitrate_sign(cfg, ctx);
    else throw Error(ErrorKind::InvalidArgument, "unknown command '" + std::string(command) + "'");
  } catch (const Error& e) {
    code = exit_code_for(e);
    message = e.what();
  } catch (const std::exception& e) {
    code = kExitNumerical;
    message = e.what();
  }
  if (code != kExitOk) err << "sepdiff " << command << ": " << message << '\n';

  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  try {
    std::filesystem::create_directories(ctx.out_dir);
    json meta = {{"command", std::string(command)},
                 {"config_path", config_path},
                 {"started", started},
                 {"finished", iso_now()},
                 {"wall_seconds", wall},
                 {"threads", ctx.threads},
                 {"exit_code", code}};
    if (!message.empty()) meta["error"] = message;
    write_text(ctx.out_dir / (std::string(command) + ".meta.json"), meta.dump(2) + "\n");
  } catch (const std::exception&) {
    // Metadata is best effort; the exit code already reflects the run.
  }
  return code;
}

}  // namespace sepdiff
