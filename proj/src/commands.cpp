#include "elastodyn/cli.hpp"

#include "elastodyn/errors.hpp"
#include "elastodyn/harness.hpp"
#include "elastodyn/monitors.hpp"
#include "elastodyn/orlicz.hpp"

#include <fmt/format.h>
#include <fmt/ostream.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <ostream>
#include <random>

namespace elastodyn {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

SmallVector random_in_ball(std::mt19937_64& rng, int dim, double radius) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  SmallVector x(dim);
  for (int j = 0; j < dim; ++j) x(j) = normal(rng);
  x.normalize();
  return radius * std::pow(unif(rng), 1.0 / dim) * x;
}

CellField random_field(std::mt19937_64& rng, int dim, int cells, double radius) {
  std::uniform_real_distribution<double> m(0.1, 1.0);
  Eigen::VectorXd measures(cells);
  for (int i = 0; i < cells; ++i) measures(i) = m(rng);
  measures /= measures.sum();
  Eigen::MatrixXd values(dim, cells);
  for (int i = 0; i < cells; ++i) values.col(i) = random_in_ball(rng, dim, radius);
  return {values, measures};
}

Check upper(std::string name, double value, double bound, bool asserted = true, std::string note = {}) {
  return {std::move(name), value, std::nullopt, bound, asserted, std::move(note)};
}

Check lower(std::string name, double value, double bound, bool asserted = true, std::string note = {}) {
  return {std::move(name), value, bound, std::nullopt, asserted, std::move(note)};
}

Check range(std::string name, double value, double lo, double hi, bool asserted = true,
            std::string note = {}) {
  return {std::move(name), value, lo, hi, asserted, std::move(note)};
}

Check info(std::string name, double value, std::string note = {}) {
  return {std::move(name), value, std::nullopt, std::nullopt, false, std::move(note)};
}

std::string negative_control_note(const ManufacturedCase& c) {
  return c.asserted ? std::string() : "negative control: non-monotone stress";
}

void add_run_checks(std::vector<Check>& out, const std::string& prefix, const RunDiagnostics& d,
                    bool asserted, const std::string& note) {
  const auto& e1 = d.estimate_one;
  const double allowance = 1e-12 * (1.0 + e1.rhs_bound);
  out.push_back(upper(prefix + "estimate I: max lhs <= rhs", e1.max_lhs, e1.rhs_bound + allowance,
                      asserted, note));
  out.push_back(upper(prefix + "estimate I: max |v| <= X bound", e1.max_v,
                      e1.constant_used + allowance, asserted, note));
  out.push_back(upper(prefix + "second-order residual / tol", d.second_order_ratio, 10.0, asserted,
                      note));
  if (d.estimate_two) {
    out.push_back(info(prefix + "estimate II: dual-norm sum", d.estimate_two->lhs));
    out.push_back(info(prefix + "estimate II: data", d.estimate_two->data));
  }
  out.push_back(info(prefix + "max Newton iterations", d.max_newton_iters));
  out.push_back(info(prefix + "telescoping error", d.telescoping_error));
}

StudyOptions study_options(const RunConfig& cfg) {
  StudyOptions o;
  o.final_time = cfg.final_time;
  o.newton_tol = cfg.newton_tol;
  o.newton_max_iter = cfg.newton_max_iter;
  o.estimate_r = cfg.estimate_r;
  return o;
}

std::ofstream open_artifact(const std::filesystem::path& dir, const std::string& name,
                            CommandResult& result) {
  std::ofstream os(dir / name, std::ios::binary);
  if (!os) {
    throw std::filesystem::filesystem_error("cannot write artifact", dir / name,
                                            std::make_error_code(std::errc::io_error));
  }
  result.artifacts.push_back(name);
  return os;
}

void write_run_artifacts(const std::filesystem::path& dir, const RunReport& report,
                         const std::vector<EstimateRecord>& estimates, CommandResult& result) {
  {
    auto os = open_artifact(dir, "run.csv", result);
    report.write_csv(os);
  }
  {
    auto os = open_artifact(dir, "estimates.csv", result);
    write_estimates_csv(os, estimates);
  }
  auto os = open_artifact(dir, "u_final.csv", result);
  write_field_csv(os, report.final_state.u);
}

void solve_case(const RunConfig& cfg, const std::filesystem::path& dir, CommandResult& result) {
  const auto c = builtin_case(*cfg.case_name);
  const auto space = cfg.space();
  const CaseRun r = run_case(c, space, cfg.tau, study_options(cfg));
  write_run_artifacts(dir, r.report, r.estimates, result);
  if (cfg.steps > 0) add_run_checks(result.checks, "", r.diagnostics, c.asserted, negative_control_note(c));
  result.checks.push_back(info("L2 error at T", r.l2_error));
  result.checks.push_back(info("velocity L2 error at T", r.v_error));
  result.checks.push_back(info("H1 error at T", r.h1_error));
}

void solve_initial(const RunConfig& cfg, const std::filesystem::path& dir, CommandResult& result) {
  const auto space = cfg.space();
  const NFunctionSpec& spec = *cfg.spec;
  const Field u0 = l2_project(space, [&](const Point& x) { return cfg.u0(x, 0.0); });
  const Field v0 = l2_project(space, [&](const Point& x) { return cfg.v0(x, 0.0); });
  SourceSampler sampler;
  if (!cfg.f.is_zero()) sampler.f = [f = cfg.f](const Point& x, double t) { return f(x, t); };

  const SchemeConfig scheme = cfg.scheme();
  std::optional<EstimateMonitor> monitor;
  RunOptions opts;
  if (scheme.steps > 0) {
    monitor.emplace(spec, scheme.tau, cfg.estimate_r);
    opts.monitors.push_back(monitor->observer());
  }
  const RunReport report = run(spec, space, u0, v0, sampler, scheme, opts);
  const std::vector<EstimateRecord> estimates = monitor ? monitor->records() : std::vector<EstimateRecord>{};
  write_run_artifacts(dir, report, estimates, result);
  if (!monitor) return;

  add_run_checks(result.checks, "", diagnose_run(spec, *space, report, estimates), true, {});
  if (cfg.f.is_zero()) {
    const auto d = dissipation_check(report);
    result.checks.push_back(upper("dissipation: max energy increase", d.max_increase,
                                  d.worst_allowance, true,
                                  fmt::format("worst at step {}", d.worst_step)));
  }
}

void converge_time(const RunConfig& cfg, const std::filesystem::path& dir, CommandResult& result) {
  const auto c = builtin_case(*cfg.case_name);
  const auto study = temporal_convergence(c, cfg.space(), cfg.taus, study_options(cfg));
  {
    auto os = open_artifact(dir, "convergence.csv", result);
    write_convergence_csv(os, {study});
  }
  const bool asserted = c.asserted;
  const std::string note = negative_control_note(c);
  auto& checks = result.checks;
  checks.push_back(range("temporal L2 rate", study.fitted_rate, 0.85, 1.15, asserted, note));
  double min_error = std::numeric_limits<double>::infinity();
  int reversals = 0;
  for (std::size_t i = 0; i < study.points.size(); ++i) {
    min_error = std::min(min_error, study.points[i].l2_error);
    if (i > 0 && !(study.points[i].l2_error < study.points[i - 1].l2_error)) ++reversals;
  }
  checks.push_back(upper("10 x spatial floor <= smallest error", 10.0 * study.spatial_floor,
                         min_error, asserted, note));
  checks.push_back(upper("error increases along the ladder", reversals, 0.0, asserted, note));

  std::vector<EstimateTwoResult> twos;
  for (const auto& p : study.points) {
    const std::string prefix = fmt::format("tau={}: ", p.tau);
    checks.push_back(info(prefix + "L2 error", p.l2_error));
    checks.push_back(info(prefix + "velocity L2 error", p.v_error));
    checks.push_back(info(prefix + "H1 error", p.h1_error));
    add_run_checks(checks, prefix, p.diagnostics, asserted, note);
    if (p.diagnostics.estimate_two) twos.push_back(*p.diagnostics.estimate_two);
  }
  if (twos.size() == study.points.size()) {
    const auto ladder = estimate_two_ladder(twos);
    double worst = 0.0;
    for (const auto& r : ladder.runs) {
      worst = std::max(worst, ladder.constant * r.data > 0.0 ? r.lhs / (ladder.constant * r.data) : 0.0);
    }
    checks.push_back(info("estimate II: calibrated constant", ladder.constant));
    checks.push_back(upper("estimate II: lhs / (C data)", worst, 1.0, asserted, note));
    checks.push_back(upper("estimate II: variation across ladder", ladder.variation, 0.10, asserted, note));
  }
  checks.push_back(info("spatial floor", study.spatial_floor));
  result.warnings.insert(result.warnings.end(), study.warnings.begin(), study.warnings.end());
}

void converge_space(const RunConfig& cfg, const std::filesystem::path& dir, CommandResult& result) {
  const auto c = builtin_case(*cfg.case_name);
  std::vector<SpaceHandle> spaces;
  for (std::size_t i = 0; i < cfg.resolutions.size(); ++i) spaces.push_back(cfg.space(i));
  const auto study = spatial_convergence(c, spaces, cfg.tau, study_options(cfg));
  {
    auto os = open_artifact(dir, "convergence.csv", result);
    write_convergence_csv(os, {study});
  }
  const bool asserted = c.asserted;
  const std::string note = negative_control_note(c);
  const double lo = c.dim() == 2 ? 1.7 : 1.8;
  const double hi = c.dim() == 2 ? 2.3 : 2.2;
  auto& checks = result.checks;
  checks.push_back(range("spatial L2 rate", study.fitted_rate, lo, hi, asserted, note));
  checks.push_back(range("projection control rate", study.control_rate, lo, hi, asserted, note));
  for (const auto& p : study.points) {
    const std::string prefix = fmt::format("n={}: ", p.resolution);
    checks.push_back(info(prefix + "L2 error", p.l2_error));
    checks.push_back(info(prefix + "H1 error", p.h1_error));
    add_run_checks(checks, prefix, p.diagnostics, asserted, note);
  }
  result.warnings.insert(result.warnings.end(), study.warnings.begin(), study.warnings.end());
}

void probe_unique(const RunConfig& cfg, CommandResult& result) {
  const auto c = builtin_case(*cfg.case_name);
  const auto u = uniqueness_probe(c, cfg.space(), cfg.tau, cfg.perturbation, cfg.seed, study_options(cfg));
  result.checks.push_back(upper("uniqueness: max |v_A - v_B|", u.max_difference, u.tolerance,
                                c.asserted,
                                c.asserted ? fmt::format("worst at step {}", u.worst_step)
                                           : negative_control_note(c)));
}

}  // namespace

bool Check::holds() const {
  if (std::isnan(value)) return false;
  return (!lower || value >= *lower) && (!upper || value <= *upper);
}

double Check::slack() const {
  if (reported_only()) return kNaN;
  double s = std::numeric_limits<double>::infinity();
  if (lower) s = std::min(s, value - *lower);
  if (upper) s = std::min(s, *upper - value);
  return s;
}

std::string Check::verdict() const {
  if (reported_only()) return "INFO";
  const std::string v = holds() ? "PASS" : "FAIL";
  return asserted ? v : v + " (not asserted)";
}

bool CommandResult::passed() const { return failed_count() == 0; }

int CommandResult::failed_count() const {
  return static_cast<int>(std::count_if(checks.begin(), checks.end(), [](const Check& c) {
    return c.asserted && !c.reported_only() && !c.holds();
  }));
}

std::vector<Check> nfunction_suite(const NFunctionSpec& spec, double sample_radius, int samples,
                                   std::uint64_t seed) {
  std::vector<Check> out;
  std::mt19937_64 rng(seed);
  const int d = spec.dim();

  double convexity = -std::numeric_limits<double>::infinity();
  std::vector<std::pair<SmallVector, SmallVector>> pairs;
  for (int i = 0; i < 1000; ++i) {
    const SmallVector x = random_in_ball(rng, d, sample_radius);
    const SmallVector y = random_in_ball(rng, d, sample_radius);
    const double avg = 0.5 * (spec.value(x) + spec.value(y));
    convexity = std::max(convexity, (spec.value(SmallVector(0.5 * (x + y))) - avg) / std::max(1.0, avg));
    pairs.emplace_back(x, y);
  }
  out.push_back(upper("convexity: midpoint defect (relative)", convexity, 1e-12));

  const double h = 1e-5;
  double fd = 0.0;
  for (int i = 0; i < 200; ++i) {
    SmallVector x = random_in_ball(rng, d, 3.0);
    if (x.norm() < 0.1) continue;
    const SmallVector s = spec.stress(x);
    SmallVector g(d);
    for (int j = 0; j < d; ++j) {
      SmallVector p = x, m = x;
      p(j) += h;
      m(j) -= h;
      g(j) = (spec.value(p) - spec.value(m)) / (2 * h);
    }
    fd = std::max(fd, (g - s).norm() / std::max(1.0, s.norm()));
  }
  out.push_back(upper("stress vs differences of phi (relative)", fd, 1e-6));
  out.push_back(lower("monotonicity: min (s(x)-s(y)).(x-y)", monotonicity_probe(spec, pairs), -1e-12));

  double gap = std::numeric_limits<double>::infinity();
  double equality = 0.0;
  for (int i = 0; i < 100; ++i) {
    const SmallVector x = random_in_ball(rng, d, 4.0);
    const SmallVector y = random_in_ball(rng, d, 4.0);
    gap = std::min(gap, young_gap(spec, x, y));
    equality = std::max(equality, std::abs(young_gap(spec, x, spec.stress(x))) / (1.0 + spec.value(x)));
  }
  out.push_back(lower("Young gap: min", gap, -1e-9));
  out.push_back(upper("Young equality at eta = sigma(xi)", equality, 1e-8));

  const auto delta2 = delta2_check(spec, sample_radius, samples, seed);
  const auto growth = growth_constant_estimate(spec, sample_radius, samples, seed);
  if (delta2.holds) {
    out.push_back(info("delta2 constant", *delta2.constant));
  } else {
    out.push_back(info("delta2 quotient at 8 x radius", delta2.ladder.back(),
                       "delta2 fails: sampled quotient diverges"));
  }
  if (growth.holds) {
    out.push_back(info("growth constant", *growth.constant));
  } else {
    out.push_back(info("growth quotient at 8 x radius", growth.ladder.back(),
                       "growth constant diverges"));
  }
  out.push_back(upper("delta2 and growth verdicts disagree", delta2.holds != growth.holds ? 1.0 : 0.0, 0.0));
  if (spec.kind() == NFunctionKind::PowerIso) {
    const double p = spec.exponent();
    const double expected = std::pow(2.0, p);
    out.push_back(upper("delta2 constant vs 2^p (relative)",
                        delta2.holds ? std::abs(*delta2.constant - expected) / expected : kNaN, 0.01));
    out.push_back(upper("growth constant <= p - 1", growth.holds ? *growth.constant : kNaN, p - 1.0 + 1e-6));
  }
  return out;
}

std::vector<Check> orlicz_suite(const NFunctionSpec& spec, std::uint64_t seed) {
  std::vector<Check> out;
  std::mt19937_64 rng(seed);
  const int d = spec.dim();

  double gap = std::numeric_limits<double>::infinity();
  double equality = 0.0;
  for (int i = 0; i < 100; ++i) {
    const SmallVector x = random_in_ball(rng, d, 4.0);
    const SmallVector y = random_in_ball(rng, d, 4.0);
    gap = std::min(gap, young_gap(spec, x, y));
    equality = std::max(equality, std::abs(young_gap(spec, x, spec.stress(x))) / (1.0 + spec.value(x)));
  }
  out.push_back(lower("Young gap: min", gap, -1e-9));
  out.push_back(upper("Young equality at eta = sigma(xi)", equality, 1e-8));

  double level = 0.0;
  for (int i = 0; i < 50; ++i) {
    const auto xi = random_field(rng, d, 9, i % 2 == 0 ? 0.01 : 20.0);
    const double n = luxemburg_norm(spec, xi);
    level = std::max(level, std::abs(modular(spec, xi.scaled(1.0 / n)) - 1.0));
  }
  out.push_back(upper("Luxemburg: |rho(xi/|xi|) - 1|", level, 1e-8));

  if (spec.has_closed_form_conjugate()) {
    double ratio = 0.0;
    for (int i = 0; i < 100; ++i) {
      const auto xi = random_field(rng, d, 8, 4.0);
      const CellField eta(Eigen::MatrixXd(random_field(rng, d, 8, 4.0).values()), xi.measures());
      const auto hc = holder_check(spec, xi, eta);
      if (hc.rhs > 0.0) ratio = std::max(ratio, hc.lhs / hc.rhs);
      else if (hc.lhs > 0.0) ratio = std::numeric_limits<double>::infinity();
    }
    out.push_back(upper("Hoelder: max |int xi.eta| / (2 |xi| |eta|*)", ratio, 1.0));
  } else {
    out.push_back(info("Hoelder", kNaN, "skipped: no closed-form conjugate"));
  }

  int violations = 0;
  for (int i = 0; i < 20; ++i) {
    const auto xi = random_field(rng, d, 5, 3.0);
    const double n = luxemburg_norm(spec, xi);
    for (double target : {0.5, 1.0, 2.0}) {
      const auto scaled = xi.scaled(target / n);
      if (!norm_modular_relation_check(spec, scaled)) ++violations;
    }
  }
  out.push_back(upper("norm-modular relations: violations", violations, 0.0));
  return out;
}

CommandResult execute(const RunConfig& cfg, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  CommandResult result;
  switch (cfg.command) {
    case Command::Solve:
      if (cfg.case_name) solve_case(cfg, out_dir, result);
      else solve_initial(cfg, out_dir, result);
      break;
    case Command::ConvergeTime:
      converge_time(cfg, out_dir, result);
      break;
    case Command::ConvergeSpace:
      converge_space(cfg, out_dir, result);
      break;
    case Command::VerifyOrlicz:
      result.checks = orlicz_suite(*cfg.spec, cfg.seed);
      break;
    case Command::VerifyNfun:
      result.checks = nfunction_suite(*cfg.spec, cfg.sample_radius, cfg.samples, cfg.seed);
      break;
    case Command::ProbeUnique:
      probe_unique(cfg, result);
      break;
  }
  {
    auto os = open_artifact(out_dir, "checks.csv", result);
    write_checks_csv(os, result.checks);
  }
  auto os = open_artifact(out_dir, "summary.txt", result);
  write_summary(os, cfg, result);
  return result;
}

void write_checks_csv(std::ostream& os, const std::vector<Check>& checks) {
  os << "check,value,lower,upper,slack,verdict\n";
  auto opt = [](const std::optional<double>& x) {
    return x ? fmt::format("{:.17g}", *x) : std::string();
  };
  for (const auto& c : checks) {
    const double s = c.slack();
    fmt::print(os, "{},{:.17g},{},{},{},{}\n", c.name, c.value, opt(c.lower), opt(c.upper),
               std::isnan(s) ? std::string() : fmt::format("{:.17g}", s), c.verdict());
  }
}

void write_summary(std::ostream& os, const RunConfig& cfg, const CommandResult& result) {
  fmt::print(os, "command: {}\n", to_string(cfg.command));
  if (cfg.case_name) fmt::print(os, "case: {}\n", *cfg.case_name);
  if (cfg.spec) fmt::print(os, "spec: {}\n", cfg.spec->describe());
  if (cfg.space_kind) {
    std::string res;
    for (int r : cfg.resolutions) res += fmt::format("{}{}", res.empty() ? "" : ", ", r);
    fmt::print(os, "space: {} [{}]\n", to_string(*cfg.space_kind), res);
  }
  fmt::print(os, "seed: {}\n\n", cfg.seed);

  std::size_t width = 5;
  for (const auto& c : result.checks) width = std::max(width, c.name.size());
  fmt::print(os, "{:<{}}  {:>13}  {:>27}  {:>11}  {}\n", "check", width, "value", "bound", "slack",
             "verdict");
  for (const auto& c : result.checks) {
    std::string bound;
    if (c.lower && c.upper) bound = fmt::format("[{:.4g}, {:.4g}]", *c.lower, *c.upper);
    else if (c.upper) bound = fmt::format("<= {:.6g}", *c.upper);
    else if (c.lower) bound = fmt::format(">= {:.6g}", *c.lower);
    const double s = c.slack();
    fmt::print(os, "{:<{}}  {:>13.6g}  {:>27}  {:>11}  {}{}\n", c.name, width, c.value, bound,
               std::isnan(s) ? std::string() : fmt::format("{:.3g}", s), c.verdict(),
               c.note.empty() ? std::string() : "  # " + c.note);
  }
  for (const auto& w : result.warnings) fmt::print(os, "warning: {}\n", w);
  const int failed = result.failed_count();
  if (failed == 0) fmt::print(os, "\nresult: all asserted checks pass\n");
  else fmt::print(os, "\nresult: {} asserted check(s) failed\n", failed);
}

int run_cli(Command command, const std::filesystem::path& config_path,
            const std::optional<std::filesystem::path>& out, std::optional<std::uint64_t> seed,
            std::ostream& log, std::ostream& err) {
  RunConfig cfg;
  try {
    cfg = load_config(config_path, command);
  } catch (const ConfigError& e) {
    fmt::print(err, "config error in {}:\n{}\n", config_path.string(), e.what());
    return exit_code::config_error;
  }
  if (seed) cfg.seed = *seed;
  const std::filesystem::path dir = out ? *out : std::filesystem::path(cfg.output_dir);
  try {
    const CommandResult result = execute(cfg, dir);
    write_summary(log, cfg, result);
    return result.passed() ? exit_code::ok : exit_code::assertion_failure;
  } catch (const ContractError& e) {
    fmt::print(err, "error: {}\n", e.what());
    return exit_code::config_error;
  } catch (const UnsupportedError& e) {
    fmt::print(err, "error: {}\n", e.what());
    return exit_code::config_error;
  } catch (const std::filesystem::filesystem_error& e) {
    fmt::print(err, "error: {}\n", e.what());
    return exit_code::config_error;
  } catch (const NumericError& e) {
    fmt::print(err, "solver failure: {}\n", e.what());
    return exit_code::solver_failure;
  } catch (const DomainError& e) {
    fmt::print(err, "solver failure: {}\n", e.what());
    return exit_code::solver_failure;
  }
}

}  // namespace elastodyn
