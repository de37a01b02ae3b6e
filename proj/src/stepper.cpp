#include "elastodyn/stepper.hpp"

#include "elastodyn/errors.hpp"

#include <fmt/format.h>
#include <fmt/ostream.h>

#include <array>
#include <cmath>
#include <ostream>

namespace elastodyn {

namespace {

// Gauss-Legendre nodes/weights on [0, 1] for 1..4 points.
struct TimeRule {
  std::array<double, 4> nodes;
  std::array<double, 4> weights;
  int size;
};

TimeRule time_rule(int points) {
  switch (points) {
    case 1:
      return {{0.5}, {1.0}, 1};
    case 2: {
      const double d = 0.5 / std::sqrt(3.0);
      return {{0.5 - d, 0.5 + d}, {0.5, 0.5}, 2};
    }
    case 3: {
      const double d = 0.5 * std::sqrt(0.6);
      return {{0.5 - d, 0.5, 0.5 + d}, {5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0}, 3};
    }
    case 4:
      return {{0.5 - 0.5 * 0.8611363115940526, 0.5 - 0.5 * 0.3399810435848563,
               0.5 + 0.5 * 0.3399810435848563, 0.5 + 0.5 * 0.8611363115940526},
              {0.5 * 0.3478548451374538, 0.5 * 0.6521451548625461, 0.5 * 0.6521451548625461,
               0.5 * 0.3478548451374538},
              4};
    default:
      throw ContractError(fmt::format("time quadrature supports 1..4 points, got {}", points));
  }
}

}  // namespace

SchemeConfig SchemeConfig::make(double final_time, int steps) {
  SchemeConfig c;
  c.final_time = final_time;
  c.steps = steps;
  c.tau = steps > 0 ? final_time / steps : 0.0;
  c.validate();
  return c;
}

void SchemeConfig::validate() const {
  if (steps < 0) throw ContractError(fmt::format("N must be >= 0, got {}", steps));
  if (!(final_time >= 0.0)) throw ContractError("T must be non-negative");
  if (steps == 0) {
    // an empty run: tau is unused, but tau*N = T still forces T = 0
    if (final_time != 0.0) {
      throw ContractError(fmt::format("tau*N = 0 does not equal T = {} (N = 0)", final_time));
    }
  } else if (!(tau > 0.0)) {
    throw ContractError(fmt::format("tau must be positive, got {}", tau));
  }
  if (steps > 0 && std::abs(tau * steps - final_time) > 1e-12 * std::max(1.0, final_time)) {
    throw ContractError(fmt::format("tau*N = {} does not equal T = {}", tau * steps, final_time));
  }
  if (!(newton_tol > 0.0)) throw ContractError("newton_tol must be positive");
  if (newton_max_iter < 1) throw ContractError("newton_max_iter must be >= 1");
  if (max_halvings < 0) throw ContractError("max_halvings must be >= 0");
}

SourceAverage average_source(const SourceSampler& sampler, const Space& space, int n, double tau) {
  if (n < 1) throw ContractError(fmt::format("average_source: step index must be >= 1, got {}", n));
  SourceAverage out;
  out.load = Eigen::VectorXd::Zero(space.n_dofs());
  if (!sampler.f) return out;
  const TimeRule rule = time_rule(sampler.time_points);
  const double t0 = (n - 1) * tau;
  const auto& quad = space.quadrature();
  // Time-averaged source at the spatial quadrature nodes.
  std::vector<double> averaged(quad.size(), 0.0);
  for (std::size_t q = 0; q < quad.size(); ++q) {
    double s = 0.0;
    for (int g = 0; g < rule.size; ++g) {
      s += rule.weights[static_cast<std::size_t>(g)] *
           sampler.f(quad[q].point, t0 + rule.nodes[static_cast<std::size_t>(g)] * tau);
    }
    averaged[q] = s;
  }
  std::size_t index = 0;
  out.load = space.load_vector([&](const Point&) { return averaged[index++]; });
  double norm2 = 0.0;
  for (std::size_t q = 0; q < quad.size(); ++q) norm2 += quad[q].weight * averaged[q] * averaged[q];
  out.l2_norm = std::sqrt(norm2);
  return out;
}

BackwardEulerStepper::BackwardEulerStepper(NFunctionSpec spec, SpaceHandle space,
                                           SchemeConfig config)
    : spec_(std::move(spec)), space_(std::move(space)), config_(config) {
  config_.validate();
  if (!(config_.tau > 0.0)) throw ContractError("stepper needs tau > 0");
  if (spec_.dim() != space_->dim()) {
    throw ContractError(fmt::format("N-function dimension {} does not match space dimension {}",
                                    spec_.dim(), space_->dim()));
  }
  base_ = SparseMatrix(space_->mass() / config_.tau + space_->stiffness());
  if (spec_.constant_stress_jacobian()) {
    linear_ = true;
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(space_->n_dofs());
    const SparseMatrix k = base_ + config_.tau * space_->nonlinear_jacobian(spec_, zero);
    solver_.compute(k);
    if (solver_.info() != Eigen::Success) throw NumericError("Newton matrix factorization failed");
  }
}

namespace {

// u + carry + τv rounded to double, the argument of B.
Eigen::VectorXd displaced(const SchemeState& prev, double tau, const Eigen::VectorXd& v) {
  if (prev.u_carry.size() == 0) return prev.u.coefficients + tau * v;
  return prev.u.coefficients + (prev.u_carry + tau * v);
}

// Knuth's TwoSum: a + b = s + err exactly.
double two_sum(double a, double b, double& err) {
  const double s = a + b;
  const double bb = s - a;
  err = (a - (s - bb)) + (b - bb);
  return s;
}

}  // namespace

Eigen::VectorXd compensated_update(const Eigen::VectorXd& u, Eigen::VectorXd& carry, double tau,
                                   const Eigen::VectorXd& v) {
  if (carry.size() == 0) carry = Eigen::VectorXd::Zero(u.size());
  Eigen::VectorXd out(u.size());
  for (Eigen::Index i = 0; i < u.size(); ++i) {
    const double p = tau * v(i);
    const double p_err = std::fma(tau, v(i), -p);
    double s_err = 0.0;
    const double s = two_sum(u(i), p, s_err);
    double lo = carry(i) + s_err + p_err;
    // renormalize so the carry stays below an ulp of the sum
    out(i) = two_sum(s, lo, lo);
    carry(i) = lo;
  }
  return out;
}

Eigen::VectorXd BackwardEulerStepper::residual(const SchemeState& prev,
                                               const Eigen::VectorXd& f_load,
                                               const Eigen::VectorXd& v) const {
  const Eigen::VectorXd u = displaced(prev, config_.tau, v);
  return space_->mass() * (v - prev.v.coefficients) / config_.tau + space_->stiffness() * v +
         space_->nonlinear_residual(spec_, u) - f_load;
}

StepOutcome BackwardEulerStepper::step(const SchemeState& prev, const Eigen::VectorXd& f_load,
                                       const std::optional<Eigen::VectorXd>& initial_guess) {
  const double tau = config_.tau;
  const double tol = config_.newton_tol * (1.0 + f_load.norm());
  Eigen::VectorXd v = initial_guess ? *initial_guess : prev.v.coefficients;
  if (v.size() != space_->n_dofs()) throw ContractError("step: initial guess has wrong length");
  Eigen::VectorXd r = residual(prev, f_load, v);
  double rnorm = r.norm();
  int iterations = 0;
  while (!(rnorm <= tol)) {
    if (iterations >= config_.newton_max_iter) {
      throw NonConvergenceError(
          fmt::format("Newton did not converge in {} iterations (residual {:.3e}, tolerance {:.3e})",
                      iterations, rnorm, tol),
          rnorm, iterations);
    }
    if (!linear_) {
      const Eigen::VectorXd u = displaced(prev, tau, v);
      const SparseMatrix k = base_ + tau * space_->nonlinear_jacobian(spec_, u);
      if (!pattern_ready_) {
        solver_.analyzePattern(k);
        pattern_ready_ = true;
      }
      solver_.factorize(k);
      if (solver_.info() != Eigen::Success) {
        throw NonConvergenceError("Newton matrix factorization failed", rnorm, iterations);
      }
    }
    const Eigen::VectorXd delta = solver_.solve(-r);
    double alpha = 1.0;
    Eigen::VectorXd trial = v + delta;
    Eigen::VectorXd r_trial = residual(prev, f_load, trial);
    double trial_norm = r_trial.norm();
    for (int h = 0; h < config_.max_halvings && !(trial_norm < rnorm); ++h) {
      alpha *= 0.5;
      trial = v + alpha * delta;
      r_trial = residual(prev, f_load, trial);
      trial_norm = r_trial.norm();
    }
    ++iterations;
    if (!(trial_norm < rnorm)) {
      throw NonConvergenceError(
          fmt::format("Newton line search stalled after {} iterations (residual {:.3e}, tolerance "
                      "{:.3e})",
                      iterations, rnorm, tol),
          rnorm, iterations);
    }
    v = std::move(trial);
    r = std::move(r_trial);
    rnorm = trial_norm;
  }

  StepOutcome out;
  out.state.u_carry = prev.u_carry;
  out.state.u = Field(space_, compensated_update(prev.u.coefficients, out.state.u_carry, tau, v));
  out.state.v = Field(space_, v);
  out.state.n = prev.n + 1;
  out.state.t = out.state.n * tau;
  out.newton_iterations = iterations;
  out.residual_norm = rnorm;
  out.tolerance = tol;
  out.energy_defect = tau * std::abs(v.dot(r));
  return out;
}

void RunReport::write_csv(std::ostream& os) const {
  os << "step,t,l2_v,h1semi_v,potential,energy,dissipation_slack,newton_iters,residual_norm\n";
  for (const auto& r : records) {
    fmt::print(os, "{},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{},{:.17g}\n", r.step, r.t,
               r.l2_v, r.h1semi_v, r.potential, r.energy, r.dissipation_slack, r.newton_iters,
               r.residual_norm);
  }
}

RunReport run(const NFunctionSpec& spec, const SpaceHandle& space, const Field& u0, const Field& v0,
              const SourceSampler& sampler, const SchemeConfig& config, const RunOptions& options) {
  if (u0.space != space || v0.space != space) {
    throw ContractError("run: initial fields must live on the run's space");
  }
  config.validate();
  std::optional<BackwardEulerStepper> stepper;
  if (config.steps > 0) stepper.emplace(spec, space, config);
  const Space& s = *space;
  const double tau = config.tau;

  RunReport report;
  report.tau = tau;
  report.steps = config.steps;

  SchemeState state{u0, v0, 0, 0.0};
  StepRecord initial;
  initial.l2_v = s.l2_norm(v0.coefficients);
  initial.h1semi_v = s.h1_seminorm(v0.coefficients);
  initial.potential = s.potential(spec, u0.coefficients);
  initial.energy = 0.5 * initial.l2_v * initial.l2_v + initial.potential;
  report.records.push_back(initial);
  if (options.keep_history) {
    report.u_history.push_back(u0.coefficients);
    report.u_carry_history.push_back(Eigen::VectorXd::Zero(s.n_dofs()));
    report.v_history.push_back(v0.coefficients);
  }
  for (const auto& monitor : options.monitors) monitor(initial, state, state);

  Eigen::VectorXd v_sum = Eigen::VectorXd::Zero(s.n_dofs());
  for (int n = 1; n <= config.steps; ++n) {
    const SourceAverage source = average_source(sampler, s, n, tau);
    std::optional<Eigen::VectorXd> guess;
    if (options.initial_guess) guess = options.initial_guess(n, state);
    StepOutcome outcome;
    try {
      outcome = stepper->step(state, source.load, guess);
    } catch (const NonConvergenceError& e) {
      throw NonConvergenceError(fmt::format("step {}: {}", n, e.what()), e.last_residual(),
                                e.iterations());
    }

    const StepRecord& before = report.records.back();
    StepRecord rec;
    rec.step = n;
    rec.t = outcome.state.t;
    rec.l2_v = s.l2_norm(outcome.state.v.coefficients);
    rec.h1semi_v = s.h1_seminorm(outcome.state.v.coefficients);
    rec.potential = s.potential(spec, outcome.state.u.coefficients);
    rec.energy = 0.5 * rec.l2_v * rec.l2_v + rec.potential;
    rec.l2_dv = s.l2_norm(outcome.state.v.coefficients - state.v.coefficients);
    rec.f_l2 = source.l2_norm;
    const double f_dot_v = source.load.dot(outcome.state.v.coefficients);
    rec.dissipation_slack = 0.5 * (rec.l2_v * rec.l2_v - before.l2_v * before.l2_v +
                                   rec.l2_dv * rec.l2_dv) +
                            tau * rec.h1semi_v * rec.h1semi_v + rec.potential - before.potential -
                            tau * f_dot_v;
    rec.newton_iters = outcome.newton_iterations;
    rec.residual_norm = outcome.residual_norm;
    rec.tolerance = outcome.tolerance;
    rec.energy_defect = outcome.energy_defect;

    for (const auto& monitor : options.monitors) monitor(rec, state, outcome.state);
    report.records.push_back(rec);
    if (options.keep_history) {
      report.u_history.push_back(outcome.state.u.coefficients);
      report.u_carry_history.push_back(outcome.state.u_carry);
      report.v_history.push_back(outcome.state.v.coefficients);
      report.loads.push_back(source.load);
    }
    v_sum += outcome.state.v.coefficients;
    state = std::move(outcome.state);
  }
  const Eigen::VectorXd telescoped = u0.coefficients + tau * v_sum;
  Eigen::VectorXd u_final = state.u.coefficients;
  if (state.u_carry.size() == u_final.size()) u_final += state.u_carry;
  report.telescoping_error =
      s.n_dofs() == 0 ? 0.0 : (u_final - telescoped).cwiseAbs().maxCoeff();
  report.final_state = std::move(state);
  return report;
}

std::vector<double> second_order_residual(const NFunctionSpec& spec, const Space& space,
                                          const std::vector<Eigen::VectorXd>& u_history,
                                          const Eigen::VectorXd& v0,
                                          const std::vector<Eigen::VectorXd>& loads, double tau,
                                          const std::vector<Eigen::VectorXd>& u_carries) {
  if (u_history.size() < 2) throw ContractError("second_order_residual: need at least one step");
  if (loads.size() + 1 != u_history.size()) {
    throw ContractError("second_order_residual: one load per completed step is required");
  }
  if (!u_carries.empty() && u_carries.size() != u_history.size()) {
    throw ContractError("second_order_residual: one carry per state is required");
  }
  // uⁿ − uⁿ⁻¹, including carries; the step before u⁰ is τv⁰ by definition of u⁻¹.
  auto increment = [&](std::size_t n) -> Eigen::VectorXd {
    if (n == 0) return tau * v0;
    Eigen::VectorXd d = u_history[n] - u_history[n - 1];
    if (!u_carries.empty()) d += u_carries[n] - u_carries[n - 1];
    return d;
  };
  std::vector<double> norms;
  Eigen::VectorXd prev_inc = increment(0);
  for (std::size_t n = 1; n < u_history.size(); ++n) {
    Eigen::VectorXd inc = increment(n);
    Eigen::VectorXd un = u_history[n];
    if (!u_carries.empty()) un += u_carries[n];
    const Eigen::VectorXd r = space.mass() * (inc - prev_inc) / (tau * tau) +
                              space.stiffness() * inc / tau + space.nonlinear_residual(spec, un) -
                              loads[n - 1];
    norms.push_back(r.norm());
    prev_inc = std::move(inc);
  }
  return norms;
}

double energy(const SchemeState& state, const NFunctionSpec& spec) {
  const Space& s = *state.u.space;
  const double v = s.l2_norm(state.v.coefficients);
  return 0.5 * v * v + s.potential(spec, state.u.coefficients);
}

}  // namespace elastodyn
