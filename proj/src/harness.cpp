#include "elastodyn/harness.hpp"

#include "elastodyn/errors.hpp"

#include <fmt/format.h>
#include <fmt/ostream.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>
#include <random>

namespace elastodyn {

namespace {

using std::numbers::pi;

// Sixth-order central differences. The non-monotone control composes a stress
// with large high derivatives near ∇u = 0, where fourth order is too coarse.
double d1(const std::function<double(double)>& g, double h) {
  return (-g(-3 * h) + 9 * g(-2 * h) - 45 * g(-h) + 45 * g(h) - 9 * g(2 * h) + g(3 * h)) /
         (60 * h);
}

double d2(const std::function<double(double)>& g, double h) {
  return (2 * g(-3 * h) - 27 * g(-2 * h) + 270 * g(-h) - 490 * g(0.0) + 270 * g(h) -
          27 * g(2 * h) + 2 * g(3 * h)) /
         (180 * h * h);
}

Point shifted(Point p, int axis, double s) {
  (axis == 0 ? p.x : p.y) += s;
  return p;
}

SmallVector fd_gradient(const SourceFunction& u, const Point& p, double t, int dim, double h) {
  SmallVector g(dim);
  for (int i = 0; i < dim; ++i) {
    g(i) = d1([&](double s) { return u(shifted(p, i, s), t); }, h);
  }
  return g;
}

double strong_residual(const ManufacturedCase& c, const Point& p, double t, double h) {
  const int dim = c.dim();
  const double utt = d1([&](double s) { return c.ut_exact(p, t + s); }, h);
  double lap_ut = 0.0;
  for (int i = 0; i < dim; ++i) {
    lap_ut += d2([&](double s) { return c.ut_exact(shifted(p, i, s), t); }, h);
  }
  double div = 0.0;
  for (int i = 0; i < dim; ++i) {
    div += d1(
        [&](double s) {
          return c.spec.stress(fd_gradient(c.u_exact, shifted(p, i, s), t, dim, h))(i);
        },
        h);
  }
  return utt - lap_ut - div - c.f(p, t);
}

ManufacturedCase make_c1() {
  ManufacturedCase c{"C1", NFunctionSpec::power(2.0, 1), {}, {}, {}, true};
  c.u_exact = [](const Point& x, double t) { return std::sin(pi * x.x) * std::sin(t); };
  c.ut_exact = [](const Point& x, double t) { return std::sin(pi * x.x) * std::cos(t); };
  c.f = [](const Point& x, double t) {
    const double s = std::sin(pi * x.x);
    return -s * std::sin(t) + pi * pi * s * std::cos(t) + pi * pi * s * std::sin(t);
  };
  return c;
}

ManufacturedCase make_c2() {
  ManufacturedCase c{"C2", NFunctionSpec::power(4.0, 1), {}, {}, {}, true};
  c.u_exact = [](const Point& x, double t) { return std::sin(pi * x.x) * std::sin(t); };
  c.ut_exact = [](const Point& x, double t) { return std::sin(pi * x.x) * std::cos(t); };
  c.f = [](const Point& x, double t) {
    const double s = std::sin(pi * x.x);
    const double co = std::cos(pi * x.x);
    const double st = std::sin(t);
    // −∂ₓ(u_x³) = −3u_x²u_xx
    return -s * st + pi * pi * s * std::cos(t) + 3.0 * std::pow(pi, 4) * co * co * s * st * st * st;
  };
  return c;
}

ManufacturedCase make_c3() {
  SmallMatrix a(2, 2);
  a << 2.0, -1.0, -1.0, 2.0;
  ManufacturedCase c{"C3", NFunctionSpec::quadratic_form(a), {}, {}, {}, true};
  c.u_exact = [](const Point& x, double t) {
    return std::sin(pi * x.x) * std::sin(pi * x.y) * std::sin(t);
  };
  c.ut_exact = [](const Point& x, double t) {
    return std::sin(pi * x.x) * std::sin(pi * x.y) * std::cos(t);
  };
  c.f = [](const Point& x, double t) {
    const double s2 = std::sin(pi * x.x) * std::sin(pi * x.y);
    const double c2 = std::cos(pi * x.x) * std::cos(pi * x.y);
    const double st = std::sin(t);
    // σ = 2A∇u: −∇·σ = −2(2u_xx − 2u_xy + 2u_yy)
    return -s2 * st + 2 * pi * pi * s2 * std::cos(t) + 8 * pi * pi * s2 * st +
           4 * pi * pi * c2 * st;
  };
  return c;
}

// σ(s) = s − 2s/(1+s²) decreases for s² < √5 − 2: a non-monotone stress.
ManufacturedCase make_nonmonotone() {
  auto value = [](const SmallVector& x) {
    const double s2 = x.squaredNorm();
    return 0.5 * s2 - std::log1p(s2);
  };
  auto gradient = [](const SmallVector& x) {
    const double s2 = x.squaredNorm();
    return SmallVector(x * (1.0 - 2.0 / (1.0 + s2)));
  };
  auto hessian = [](const SmallVector& x) {
    const double s2 = x(0) * x(0);
    SmallMatrix h(1, 1);
    h(0, 0) = 1.0 - 2.0 * (1.0 - s2) / ((1.0 + s2) * (1.0 + s2));
    return h;
  };
  ManufacturedCase c{"nonmonotone", NFunctionSpec::custom(1, value, gradient, hessian, "nonmonotone"),
                     {}, {}, {}, false};
  c.u_exact = [](const Point& x, double t) { return std::sin(pi * x.x) * std::sin(t); };
  c.ut_exact = [](const Point& x, double t) { return std::sin(pi * x.x) * std::cos(t); };
  c.f = [](const Point& x, double t) {
    const double s = std::sin(pi * x.x);
    const double st = std::sin(t);
    const double ux = pi * std::cos(pi * x.x) * st;
    const double uxx = -pi * pi * s * st;
    const double q = 1.0 + ux * ux;
    const double dsigma = 1.0 - 2.0 * (1.0 - ux * ux) / (q * q);
    return -s * st + pi * pi * s * std::cos(t) - dsigma * uxx;
  };
  return c;
}

int steps_for(double final_time, double tau) {
  if (!(tau > 0.0)) throw ContractError(fmt::format("tau must be positive, got {}", tau));
  const double n = final_time / tau;
  const long rounded = std::lround(n);
  if (std::abs(n - static_cast<double>(rounded)) > 1e-9 * std::max(1.0, n)) {
    throw ContractError(fmt::format("T = {} is not a multiple of tau = {}", final_time, tau));
  }
  return static_cast<int>(rounded);
}

ScalarFunction at_time(const SourceFunction& g, double t) {
  return [g, t](const Point& x) { return g(x, t); };
}

}  // namespace

double h1_error(const Space& space, const Eigen::VectorXd& coefficients, const SourceFunction& g,
                double t) {
  const CellField grad = space.gradient_field(coefficients);
  const int dim = space.dim();
  double sum = 0.0;
  const auto& quad = space.quadrature();
  for (std::size_t i = 0; i < quad.size(); ++i) {
    const auto& q = quad[i];
    // FEM gradients are per cell, spectral ones per quadrature node
    const Eigen::Index slot = space.is_fem() ? q.cell : static_cast<Eigen::Index>(i);
    const SmallVector diff = grad.value(slot) - fd_gradient(g, q.point, t, dim, 1e-3);
    sum += q.weight * diff.squaredNorm();
  }
  return std::sqrt(sum);
}

RunDiagnostics diagnose_run(const NFunctionSpec& spec, const Space& space, const RunReport& report,
                            const std::vector<EstimateRecord>& estimates) {
  RunDiagnostics d;
  d.estimate_one = estimate_one_check(estimates);
  if (space.kind() == SpaceKind::Spectral1D && spec.has_closed_form_conjugate()) {
    d.estimate_two = estimate_two_check(estimates);
  }
  d.telescoping_error = report.telescoping_error;
  for (const auto& r : report.records) d.max_newton_iters = std::max(d.max_newton_iters, r.newton_iters);
  if (report.steps > 0 && !report.u_history.empty()) {
    const auto res = second_order_residual(spec, space, report.u_history, report.v_history[0],
                                           report.loads, report.tau, report.u_carry_history);
    for (std::size_t n = 0; n < res.size(); ++n) {
      d.second_order_ratio = std::max(d.second_order_ratio, res[n] / report.records[n + 1].tolerance);
    }
  }
  return d;
}

ConsistencyReport check_case_consistency(const ManufacturedCase& c, double tol, double h) {
  if (!c.u_exact || !c.ut_exact || !c.f) {
    throw ContractError(fmt::format("case {}: u_exact, ut_exact and f are required", c.name));
  }
  ConsistencyReport rep;
  rep.tolerance = tol;
  rep.ok = true;
  const std::vector<double> xs = {0.1, 0.27, 0.5, 0.73, 0.9};
  const std::vector<double> ts = {0.2, 0.55, 0.9};
  const std::vector<double> ys = c.dim() == 2 ? xs : std::vector<double>{0.0};
  double worst = -1.0;
  for (double t : ts) {
    for (double x : xs) {
      for (double y : ys) {
        const Point p{x, y};
        const double r = std::abs(strong_residual(c, p, t, h));
        if (r > worst) {
          worst = r;
          rep.max_residual = r;
          rep.worst_point = p;
          rep.worst_time = t;
        }
        if (!(r <= tol)) rep.ok = false;
      }
    }
  }
  return rep;
}

ManufacturedCase register_case(ManufacturedCase c) {
  const auto rep = check_case_consistency(c);
  if (!rep.ok) {
    throw ContractError(fmt::format(
        "case {} rejected: strong residual {:.3e} at (x={}, y={}, t={}) exceeds {:.0e}",
        c.name, rep.max_residual, rep.worst_point.x, rep.worst_point.y, rep.worst_time,
        rep.tolerance));
  }
  return c;
}

std::vector<std::string> builtin_case_names() { return {"C1", "C2", "C3", "nonmonotone"}; }

ManufacturedCase builtin_case(const std::string& name) {
  if (name == "C1") return register_case(make_c1());
  if (name == "C2") return register_case(make_c2());
  if (name == "C3") return register_case(make_c3());
  if (name == "nonmonotone") return register_case(make_nonmonotone());
  throw ContractError(fmt::format("unknown case '{}' (known: C1, C2, C3, nonmonotone)", name));
}

CaseRun run_case(const ManufacturedCase& c, const SpaceHandle& space, double tau,
                 const StudyOptions& options, const RunOptions& run_options) {
  if (c.dim() != space->dim()) {
    throw ContractError(fmt::format("case {} is {}D but the space is {}D", c.name, c.dim(),
                                    space->dim()));
  }
  SchemeConfig cfg;
  cfg.final_time = options.final_time;
  cfg.steps = steps_for(options.final_time, tau);
  cfg.tau = cfg.steps > 0 ? options.final_time / cfg.steps : 0.0;
  cfg.newton_tol = options.newton_tol;
  cfg.newton_max_iter = options.newton_max_iter;
  cfg.validate();

  const Field u0 = l2_project(space, at_time(c.u_exact, 0.0));
  const Field v0 = l2_project(space, at_time(c.ut_exact, 0.0));

  CaseRun out;
  std::optional<EstimateMonitor> monitor;
  RunOptions opts = run_options;
  opts.keep_history = true;
  if (cfg.steps > 0) {
    monitor.emplace(c.spec, cfg.tau, options.estimate_r);
    opts.monitors.push_back(monitor->observer());
  }
  out.report = run(c.spec, space, u0, v0, SourceSampler{c.f, 4}, cfg, opts);
  if (monitor) out.estimates = monitor->records();

  const auto& fin = out.report.final_state;
  out.l2_error = space->l2_error(fin.u.coefficients, at_time(c.u_exact, options.final_time));
  out.v_error = space->l2_error(fin.v.coefficients, at_time(c.ut_exact, options.final_time));
  out.h1_error = h1_error(*space, fin.u.coefficients, c.u_exact, options.final_time);
  if (monitor) out.diagnostics = diagnose_run(c.spec, *space, out.report, out.estimates);
  return out;
}

double rate_fit(const std::vector<std::pair<double, double>>& pairs,
                std::vector<std::string>* warnings) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int n = 0;
  for (const auto& [step, err] : pairs) {
    if (!(err > 0.0) || !(step > 0.0)) {
      if (warnings) {
        warnings->push_back(fmt::format("rate_fit: dropped pair (step {}, error {})", step, err));
      }
      continue;
    }
    const double x = std::log(step);
    const double y = std::log(err);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++n;
  }
  if (n < 2) {
    throw ContractError(fmt::format("rate_fit: {} usable pairs, need at least 2", n));
  }
  const double denom = n * sxx - sx * sx;
  if (!(std::abs(denom) > 0.0)) throw ContractError("rate_fit: steps must be distinct");
  return (n * sxy - sx * sy) / denom;
}

ConvergenceStudy temporal_convergence(const ManufacturedCase& c, const SpaceHandle& space,
                                      const std::vector<double>& taus,
                                      const StudyOptions& options) {
  ConvergenceStudy study;
  std::vector<std::pair<double, double>> pairs;
  for (double tau : taus) {
    const CaseRun r = run_case(c, space, tau, options);
    ConvergencePoint p{c.name, "temporal", space->describe(), space->resolution(), r.report.tau,
                       r.report.tau, r.l2_error, r.v_error, r.h1_error, r.diagnostics};
    pairs.emplace_back(p.step, p.l2_error);
    study.points.push_back(std::move(p));
  }
  study.fitted_rate = rate_fit(pairs, &study.warnings);
  const auto exact_t = at_time(c.u_exact, options.final_time);
  study.spatial_floor = space->l2_error(l2_project(space, exact_t).coefficients, exact_t);
  for (std::size_t i = 1; i < study.points.size(); ++i) {
    if (!(study.points[i].l2_error < study.points[i - 1].l2_error)) {
      study.warnings.push_back(fmt::format("temporal error did not decrease at tau = {}",
                                           study.points[i].tau));
    }
  }
  return study;
}

ConvergenceStudy spatial_convergence(const ManufacturedCase& c,
                                     const std::vector<SpaceHandle>& spaces, double tau,
                                     const StudyOptions& options) {
  ConvergenceStudy study;
  std::vector<std::pair<double, double>> pairs, control_pairs;
  const auto exact_t = at_time(c.u_exact, options.final_time);
  for (const auto& space : spaces) {
    if (!space->is_fem()) {
      throw ContractError("spatial_convergence: mesh-size ladders need FEM spaces");
    }
    const CaseRun r = run_case(c, space, tau, options);
    const double h = 1.0 / space->resolution();
    ConvergencePoint p{c.name, "spatial", space->describe(), space->resolution(), r.report.tau, h,
                       r.l2_error, r.v_error, r.h1_error, r.diagnostics};
    pairs.emplace_back(h, p.l2_error);
    study.points.push_back(std::move(p));

    ConvergencePoint q{c.name, "projection", space->describe(), space->resolution(), 0.0, h,
                       space->l2_error(l2_project(space, exact_t).coefficients, exact_t), 0.0, 0.0, {}};
    control_pairs.emplace_back(h, q.l2_error);
    study.control.push_back(std::move(q));
  }
  study.fitted_rate = rate_fit(pairs, &study.warnings);
  study.control_rate = rate_fit(control_pairs, &study.warnings);
  return study;
}

UniquenessResult uniqueness_probe(const ManufacturedCase& c, const SpaceHandle& space, double tau,
                                  double perturbation_scale, std::uint64_t seed,
                                  const StudyOptions& options) {
  const CaseRun a = run_case(c, space, tau, options);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> zeta(-1.0, 1.0);
  RunOptions perturbed;
  perturbed.initial_guess = [&](int, const SchemeState& prev) {
    Eigen::VectorXd g = prev.v.coefficients;
    for (Eigen::Index i = 0; i < g.size(); ++i) g(i) += perturbation_scale * zeta(rng);
    return g;
  };
  const CaseRun b = run_case(c, space, tau, options, perturbed);

  UniquenessResult out;
  out.tolerance = 100.0 * options.newton_tol;
  for (std::size_t n = 1; n < a.report.v_history.size(); ++n) {
    const double d = space->l2_norm(a.report.v_history[n] - b.report.v_history[n]);
    if (d > out.max_difference) {
      out.max_difference = d;
      out.worst_step = static_cast<int>(n);
    }
  }
  out.ok = out.max_difference <= out.tolerance;
  return out;
}

void write_convergence_csv(std::ostream& os, const std::vector<ConvergenceStudy>& studies) {
  os << "case,kind,resolution,tau,l2_error,v_error,fitted_rate\n";
  for (const auto& s : studies) {
    for (const auto& p : s.points) {
      fmt::print(os, "{},{},{},{:.17g},{:.17g},{:.17g},{:.17g}\n", p.case_name, p.kind,
                 p.resolution, p.tau, p.l2_error, p.v_error, s.fitted_rate);
    }
    for (const auto& p : s.control) {
      fmt::print(os, "{},{},{},{:.17g},{:.17g},{:.17g},{:.17g}\n", p.case_name, p.kind,
                 p.resolution, p.tau, p.l2_error, p.v_error, s.control_rate);
    }
  }
}

}  // namespace elastodyn
