#include "doctest.h"

#include "elastodyn/errors.hpp"
#include "elastodyn/stepper.hpp"
#include "test_support.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

using namespace elastodyn;
using std::numbers::pi;

namespace {

Field sine_mode(const SpaceHandle& space, double amplitude = 1.0) {
  return l2_project(space, [=](const Point& x) { return amplitude * std::sin(pi * x.x); });
}

SourceSampler bump_source() {
  return {[](const Point& x, double t) { return std::sin(pi * x.x) * std::cos(3 * t) + x.x * (1 - x.x); },
          4};
}

}  // namespace

TEST_CASE("SchemeConfig validation") {
  const auto c = SchemeConfig::make(1.0, 10);
  CHECK(c.tau == doctest::Approx(0.1));
  CHECK_NOTHROW(c.validate());
  auto bad = c;
  bad.tau = 0.11;
  CHECK_THROWS_AS(bad.validate(), ContractError);
  bad = c;
  bad.newton_tol = 0.0;
  CHECK_THROWS_AS(bad.validate(), ContractError);
  CHECK_THROWS_AS(SchemeConfig::make(1.0, -1), ContractError);
  CHECK_THROWS_AS(SchemeConfig::make(1.0, 0), ContractError);
  CHECK_NOTHROW(SchemeConfig::make(0.0, 0));
}

TEST_CASE("average_source: examples") {
  const auto s = build_space(SpaceKind::FemP1_1D, 8);
  CHECK(average_source({}, *s, 1, 0.1).load.norm() == 0.0);

  auto g = [](const Point& x) { return std::exp(x.x) * x.x; };
  const Eigen::VectorXd lg = s->load_vector(g);
  const SourceSampler steady{[&](const Point& x, double) { return g(x); }, 4};
  CHECK((average_source(steady, *s, 1, 0.1).load - lg).norm() <= 1e-14);
  CHECK((average_source(steady, *s, 7, 0.1).load - lg).norm() <= 1e-14);

  const SourceSampler linear{[&](const Point& x, double t) { return g(x) * t; }, 4};
  const double tau = 0.25;
  for (int n : {1, 3}) {
    const double mid = 0.5 * ((n - 1) * tau + n * tau);
    CHECK((average_source(linear, *s, n, tau).load - mid * lg).norm() <= 1e-14);
  }
  // cubic in time is integrated exactly by the 4-point rule
  const SourceSampler cubic{[](const Point&, double t) { return t * t * t; }, 4};
  const auto one = s->load_vector([](const Point&) { return 1.0; });
  const double avg = (std::pow(0.5, 4) - std::pow(0.25, 4)) / 4.0 / 0.25;
  CHECK((average_source(cubic, *s, 2, 0.25).load - avg * one).norm() <= 1e-14);
  CHECK(average_source(cubic, *s, 2, 0.25).l2_norm == doctest::Approx(avg).epsilon(1e-12));

  CHECK_THROWS_AS(average_source(steady, *s, 0, 0.1), ContractError);
}

TEST_CASE("step: single-mode linear example") {
  const auto s = build_space(SpaceKind::Spectral1D, 1);
  const auto spec = NFunctionSpec::power(2.0, 1);
  const double tau = 0.1;
  BackwardEulerStepper stepper(spec, s, SchemeConfig::make(0.1, 1));
  const SchemeState prev{Field(s, Eigen::VectorXd::Constant(1, 1.0 / std::sqrt(2.0))),
                         Field::zero(s), 0, 0.0};
  const auto out = stepper.step(prev, Eigen::VectorXd::Zero(1));
  // hand-solved 1×1 system v(1/τ + π² + τπ²) = −π²u⁰
  const double expected = -pi * pi / std::sqrt(2.0) / (1.0 / tau + pi * pi + tau * pi * pi);
  CHECK(out.state.v.coefficients(0) == doctest::Approx(expected).epsilon(1e-13));
  CHECK(out.state.v.coefficients(0) == doctest::Approx(-0.33461235120816357).epsilon(1e-12));
  CHECK(out.state.u.coefficients(0) ==
        doctest::Approx(1.0 / std::sqrt(2.0) + tau * expected).epsilon(1e-14));
  CHECK(out.newton_iterations == 1);
  CHECK(out.state.n == 1);
  CHECK(out.state.t == doctest::Approx(0.1));
}

TEST_CASE("step: zero state stays at rest without Newton work") {
  const auto s = build_space(SpaceKind::FemP1_1D, 10);
  for (const auto& spec : {NFunctionSpec::power(3.0, 1), NFunctionSpec::exponential(1)}) {
    const auto report = run(spec, s, Field::zero(s), Field::zero(s), {}, SchemeConfig::make(1.0, 5));
    for (std::size_t n = 1; n < report.records.size(); ++n) {
      CHECK(report.records[n].newton_iters == 0);
      CHECK(report.u_history[n].norm() == 0.0);
      CHECK(report.v_history[n].norm() == 0.0);
    }
  }
}

TEST_CASE("step: linear stress converges in one Newton iteration") {
  std::mt19937_64 rng(41);
  std::normal_distribution<double> g;
  for (const auto& s : {build_space(SpaceKind::FemP1_1D, 12), build_space(SpaceKind::FemP1_2D, 5, 5)}) {
    std::vector<NFunctionSpec> specs = {NFunctionSpec::power(2.0, s->dim())};
    if (s->dim() == 2) specs.push_back(NFunctionSpec::quadratic_form(testing::paper_matrix()));
    for (const auto& spec : specs) {
      BackwardEulerStepper stepper(spec, s, SchemeConfig::make(0.5, 5));
      for (int t = 0; t < 3; ++t) {
        Eigen::VectorXd u(s->n_dofs()), v(s->n_dofs()), f(s->n_dofs());
        for (Eigen::Index i = 0; i < u.size(); ++i) {
          u(i) = g(rng);
          v(i) = g(rng);
          f(i) = g(rng);
        }
        const auto out = stepper.step({Field(s, u), Field(s, v), 0, 0.0}, f);
        CHECK(out.newton_iterations == 1);
        CHECK(out.residual_norm <= out.tolerance);
      }
    }
  }
}

TEST_CASE("step: residual and kinematic update") {
  const auto s = build_space(SpaceKind::FemP1_1D, 16);
  const auto spec = NFunctionSpec::power(4.0, 1);
  BackwardEulerStepper stepper(spec, s, SchemeConfig::make(0.5, 10));
  const SchemeState prev{sine_mode(s, 2.0), sine_mode(s, -1.0), 0, 0.0};
  const Eigen::VectorXd f = average_source(bump_source(), *s, 1, 0.05).load;
  const auto out = stepper.step(prev, f);
  CHECK(out.residual_norm <= out.tolerance);
  CHECK(out.tolerance == doctest::Approx(1e-11 * (1.0 + f.norm())));
  CHECK(stepper.residual(prev, f, out.state.v.coefficients).norm() == doctest::Approx(out.residual_norm));
  const double tau = stepper.config().tau;
  // u + carry reproduces u_prev + τv far below double rounding
  REQUIRE(out.state.u_carry.size() == s->n_dofs());
  for (Eigen::Index i = 0; i < s->n_dofs(); ++i) {
    const long double exact = static_cast<long double>(prev.u.coefficients(i)) +
                              static_cast<long double>(tau) * out.state.v.coefficients(i);
    const long double stored =
        static_cast<long double>(out.state.u.coefficients(i)) + out.state.u_carry(i);
    CHECK(std::abs(static_cast<double>(stored - exact)) <= 1e-18 * (1.0 + std::abs(out.state.u.coefficients(i))));
    CHECK(std::abs(out.state.u_carry(i)) <= 1.2e-16 * std::abs(out.state.u.coefficients(i)));
  }
  CHECK(out.newton_iterations <= 12);
}

TEST_CASE("step: non-convergence reports the last residual") {
  const auto s = build_space(SpaceKind::FemP1_1D, 16);
  auto cfg = SchemeConfig::make(1.0, 2);
  cfg.newton_max_iter = 1;
  BackwardEulerStepper stepper(NFunctionSpec::power(4.0, 1), s, cfg);
  const SchemeState prev{sine_mode(s, 5.0), Field::zero(s), 0, 0.0};
  try {
    stepper.step(prev, Eigen::VectorXd::Zero(s->n_dofs()));
    FAIL("expected non-convergence");
  } catch (const NonConvergenceError& e) {
    CHECK(e.last_residual() > 0.0);
    CHECK(e.iterations() == 1);
  }
  try {
    run(NFunctionSpec::power(4.0, 1), s, sine_mode(s, 5.0), Field::zero(s), {}, cfg);
    FAIL("expected non-convergence");
  } catch (const NonConvergenceError& e) {
    CHECK(std::string(e.what()).find("step 1") != std::string::npos);
  }
}

TEST_CASE("per-step uniqueness from different Newton starts") {
  for (const auto& s : {build_space(SpaceKind::FemP1_1D, 32), build_space(SpaceKind::Spectral1D, 8)}) {
    for (const auto& spec : {NFunctionSpec::power(3.0, 1), NFunctionSpec::power(4.0, 1),
                             NFunctionSpec::exponential(1)}) {
      BackwardEulerStepper stepper(spec, s, SchemeConfig::make(0.1, 1));
      const SchemeState prev{sine_mode(s, 0.8), sine_mode(s, 0.5), 0, 0.0};
      const Eigen::VectorXd f = average_source(bump_source(), *s, 1, 0.1).load;
      const auto warm = stepper.step(prev, f);
      const auto cold = stepper.step(prev, f, Eigen::VectorXd::Zero(s->n_dofs()));
      CHECK(s->l2_norm(warm.state.v.coefficients - cold.state.v.coefficients) <= 10 * warm.tolerance);
    }
  }
}

TEST_CASE("run: N = 0 returns the initial state") {
  const auto s = build_space(SpaceKind::Spectral1D, 4);
  const auto r = run(NFunctionSpec::power(2.0, 1), s, sine_mode(s), Field::zero(s), {},
                     SchemeConfig::make(0.0, 0));
  CHECK(r.records.size() == 1);
  CHECK(r.records[0].energy == doctest::Approx(pi * pi / 4).epsilon(1e-12));
  CHECK(r.telescoping_error == 0.0);
}

TEST_CASE("run: linear free vibration dissipates energy") {
  const auto s = build_space(SpaceKind::Spectral1D, 1);
  const auto r = run(NFunctionSpec::power(2.0, 1), s, sine_mode(s), Field::zero(s), {},
                     SchemeConfig::make(2.0, 40));
  for (std::size_t n = 1; n < r.records.size(); ++n) {
    CHECK(r.records[n].energy <= r.records[n - 1].energy + 1e-14);
  }
  const auto res = second_order_residual(NFunctionSpec::power(2.0, 1), *s, r.u_history,
                                         r.v_history[0], r.loads, r.tau);
  for (double x : res) CHECK(x <= 1e-11);
}

TEST_CASE("run: telescoping, dissipation and second-order form on nonlinear runs") {
  struct Case {
    SpaceHandle space;
    NFunctionSpec spec;
  };
  const std::vector<Case> cases = {
      {build_space(SpaceKind::FemP1_1D, 32), NFunctionSpec::power(4.0, 1)},
      {build_space(SpaceKind::Spectral1D, 16), NFunctionSpec::power(3.0, 1)},
      {build_space(SpaceKind::FemP1_1D, 16), NFunctionSpec::exponential(1)},
      {build_space(SpaceKind::FemP1_2D, 6, 6), NFunctionSpec::quadratic_form(testing::paper_matrix())},
  };
  for (const auto& c : cases) {
    CAPTURE(c.space->describe());
    CAPTURE(c.spec.describe());
    const Field u0 = l2_project(c.space, [](const Point& x) {
      return std::sin(pi * x.x) * (x.y == 0.0 ? 1.0 : std::sin(pi * x.y));
    });
    const Field v0 = l2_project(c.space, [](const Point& x) { return x.x * (1 - x.x) * (1 + x.y); });
    const auto cfg = SchemeConfig::make(1.0, 20);
    const auto r = run(c.spec, c.space, u0, v0, bump_source(), cfg);
    REQUIRE(r.records.size() == 21);
    CHECK(r.telescoping_error <= 1e-12);
    for (std::size_t n = 1; n < r.records.size(); ++n) {
      const auto& rec = r.records[n];
      CHECK(rec.residual_norm <= rec.tolerance);
      CHECK(rec.newton_iters <= 12);
      // convexity of Φ bounds the slack by the solver defect
      CHECK(rec.dissipation_slack <= rec.energy_defect + 1e-13 * (1.0 + rec.energy));
      CHECK(rec.dissipation_slack <= 10 * rec.tolerance * std::max(1.0, rec.l2_v) + 1e-13 * (1.0 + rec.energy));
    }
    const auto res = second_order_residual(c.spec, *c.space, r.u_history, v0.coefficients, r.loads,
                                           r.tau, r.u_carry_history);
    REQUIRE(res.size() == 20);
    for (std::size_t n = 0; n < res.size(); ++n) CHECK(res[n] <= 10 * r.records[n + 1].tolerance);
  }
}

TEST_CASE("second_order_residual uses u^{-1} = u^0 - tau v^0 at n = 1") {
  const auto s = build_space(SpaceKind::Spectral1D, 1);
  const auto spec = NFunctionSpec::power(2.0, 1);
  const double tau = 0.2;
  const double u0 = 0.3, v0 = 0.7;
  const auto r = run(spec, s, Field(s, Eigen::VectorXd::Constant(1, u0)),
                     Field(s, Eigen::VectorXd::Constant(1, v0)), {}, SchemeConfig::make(0.2, 1));
  // hand solve: v¹(1/τ + π² + τπ²) = v⁰/τ − π²u⁰
  const double k2 = pi * pi;
  const double v1 = (v0 / tau - k2 * u0) / (1.0 / tau + k2 + tau * k2);
  CHECK(r.v_history[1](0) == doctest::Approx(v1).epsilon(1e-13));
  const auto ok = second_order_residual(spec, *s, r.u_history, r.v_history[0], r.loads, tau);
  CHECK(ok[0] <= 1e-12);
  // dropping v⁰ from u⁻¹ leaves exactly the mass term v⁰/τ
  const auto wrong = second_order_residual(spec, *s, r.u_history, Eigen::VectorXd::Zero(1), r.loads, tau);
  CHECK(wrong[0] == doctest::Approx(v0 / tau).epsilon(1e-10));
  CHECK_THROWS_AS(second_order_residual(spec, *s, {r.u_history[0]}, r.v_history[0], {}, tau),
                  ContractError);
}

TEST_CASE("RunReport CSV") {
  const auto s = build_space(SpaceKind::FemP1_1D, 4);
  const auto r = run(NFunctionSpec::power(3.0, 1), s, sine_mode(s), Field::zero(s), {},
                     SchemeConfig::make(0.2, 2));
  std::ostringstream os;
  r.write_csv(os);
  const std::string text = os.str();
  CHECK(text.rfind("step,t,l2_v,h1semi_v,potential,energy,dissipation_slack,newton_iters,residual_norm\n", 0) == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') == 4);
}

TEST_CASE("energy helper") {
  const auto s = build_space(SpaceKind::Spectral1D, 2);
  const SchemeState st{sine_mode(s), sine_mode(s, 2.0), 0, 0.0};
  CHECK(energy(st, NFunctionSpec::power(2.0, 1)) == doctest::Approx(1.0 + pi * pi / 4).epsilon(1e-12));
}

TEST_CASE("carried rounding keeps the second-order form exact at small tau") {
  const auto s = build_space(SpaceKind::FemP1_1D, 64);
  const auto spec = NFunctionSpec::power(2.0, 1);
  const auto r = run(spec, s, sine_mode(s), sine_mode(s, 0.5), bump_source(),
                     SchemeConfig::make(0.05, 500));
  const auto with = second_order_residual(spec, *s, r.u_history, r.v_history[0], r.loads, r.tau,
                                          r.u_carry_history);
  const auto without =
      second_order_residual(spec, *s, r.u_history, r.v_history[0], r.loads, r.tau);
  double worst_with = 0.0, worst_without = 0.0;
  for (std::size_t n = 0; n < with.size(); ++n) {
    worst_with = std::max(worst_with, with[n] / r.records[n + 1].tolerance);
    worst_without = std::max(worst_without, without[n] / r.records[n + 1].tolerance);
  }
  CHECK(worst_with <= 10.0);
  CHECK(worst_without > worst_with);
  CHECK(r.telescoping_error <= 1e-12);
  CHECK_THROWS_AS(second_order_residual(spec, *s, r.u_history, r.v_history[0], r.loads, r.tau,
                                        {r.u_carry_history[0]}),
                  ContractError);
}

TEST_CASE("compensated_update") {
  Eigen::VectorXd u(2), v(2), carry;
  u << 1.0, -3.0;
  v << 1e-17, 0.1;
  const Eigen::VectorXd out = compensated_update(u, carry, 1e-3, v);
  CHECK(out(0) == 1.0);
  CHECK(carry(0) == doctest::Approx(1e-20).epsilon(1e-6));
  const long double exact = -3.0L + 1e-3L * 0.1L;
  CHECK(std::abs(static_cast<double>(static_cast<long double>(out(1)) + carry(1) - exact)) <= 1e-19);
}
