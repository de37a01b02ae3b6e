#include "doctest.h"

#include "elastodyn/errors.hpp"
#include "elastodyn/harness.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

using namespace elastodyn;
using std::numbers::pi;

TEST_CASE("rate_fit: examples") {
  CHECK(rate_fit({{0.1, 0.1}, {0.05, 0.05}}) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(rate_fit({{0.2, 0.04}, {0.1, 0.01}}) == doctest::Approx(2.0).epsilon(1e-12));
  std::vector<std::string> warnings;
  CHECK(rate_fit({{0.2, 0.04}, {0.1, 0.01}, {0.05, 0.0}}, &warnings) ==
        doctest::Approx(2.0).epsilon(1e-12));
  CHECK(warnings.size() == 1);
  CHECK_THROWS_AS(rate_fit({{0.1, 0.1}, {0.05, -1.0}}), ContractError);
  CHECK_THROWS_AS(rate_fit({}), ContractError);
}

TEST_CASE("built-in cases pass the strong-residual self-check") {
  for (const auto& name : builtin_case_names()) {
    CAPTURE(name);
    const auto c = builtin_case(name);
    const auto rep = check_case_consistency(c);
    CHECK(rep.ok);
    CHECK(rep.max_residual <= 1e-8);
  }
  CHECK(builtin_case("C3").dim() == 2);
  CHECK_FALSE(builtin_case("nonmonotone").asserted);
  CHECK_THROWS_AS(builtin_case("C9"), ContractError);
}

TEST_CASE("inconsistent cases are rejected at registration") {
  auto c = builtin_case("C2");
  // drop the nonlinear term from the source
  c.f = [](const Point& x, double t) {
    const double s = std::sin(pi * x.x);
    return -s * std::sin(t) + pi * pi * s * std::cos(t);
  };
  CHECK_FALSE(check_case_consistency(c).ok);
  CHECK_THROWS_WITH_AS(register_case(c), doctest::Contains("rejected"), ContractError);

  auto tiny = builtin_case("C1");
  const auto f = tiny.f;
  tiny.f = [f](const Point& x, double t) { return f(x, t) + 1e-6; };
  CHECK_THROWS_AS(register_case(tiny), ContractError);
}

TEST_CASE("harness reproduces an injected discrete solution") {
  // Single linear mode with f = 0; the "exact" solution takes the scheme's own
  // recursion values at t = 0 and t = T.
  const double tau = 0.1;
  const int steps = 10;
  const double k2 = pi * pi;
  const double a0 = 0.6, b0 = -0.2;
  double a = a0, b = b0;
  for (int n = 0; n < steps; ++n) {
    b = (b / tau - k2 * a) / (1.0 / tau + k2 + tau * k2);
    a += tau * b;
  }
  const double aN = a, bN = b;
  ManufacturedCase c{"injected", NFunctionSpec::power(2.0, 1), {}, {}, {}, true};
  c.u_exact = [=](const Point& x, double t) {
    return (t < 0.5 ? a0 : aN) * std::sqrt(2.0) * std::sin(pi * x.x);
  };
  c.ut_exact = [=](const Point& x, double t) {
    return (t < 0.5 ? b0 : bN) * std::sqrt(2.0) * std::sin(pi * x.x);
  };
  c.f = [](const Point&, double) { return 0.0; };
  const auto r = run_case(c, build_space(SpaceKind::Spectral1D, 1), tau);
  CHECK(r.l2_error <= 1e-12);
  CHECK(r.v_error <= 1e-12);
}

TEST_CASE("run_case contracts") {
  const auto c1 = builtin_case("C1");
  CHECK_THROWS_AS(run_case(c1, build_space(SpaceKind::FemP1_2D, 2, 2), 0.1), ContractError);
  CHECK_THROWS_AS(run_case(c1, build_space(SpaceKind::FemP1_1D, 4), 0.3), ContractError);
  CHECK_THROWS_AS(run_case(c1, build_space(SpaceKind::FemP1_1D, 4), 0.0), ContractError);
}

TEST_CASE("temporal study: decreasing errors, diagnostics and floor") {
  const auto study = temporal_convergence(builtin_case("C1"), build_space(SpaceKind::Spectral1D, 16),
                                          {0.1, 0.05, 0.025});
  REQUIRE(study.points.size() == 3);
  for (std::size_t i = 1; i < study.points.size(); ++i) {
    CHECK(study.points[i].l2_error < study.points[i - 1].l2_error);
  }
  CHECK(study.warnings.empty());
  CHECK(study.fitted_rate > 0.85);
  CHECK(study.fitted_rate < 1.15);
  CHECK(study.spatial_floor < 1e-10);
  for (const auto& p : study.points) {
    CHECK(p.kind == "temporal");
    CHECK(p.diagnostics.estimate_one.ok);
    REQUIRE(p.diagnostics.estimate_two);
    CHECK(p.diagnostics.second_order_ratio <= 10.0);
    CHECK(p.diagnostics.max_newton_iters == 1);
  }
}

TEST_CASE("C1 error at fixed tau is independent of the refined 1D space") {
  const auto c = builtin_case("C1");
  const auto spectral = run_case(c, build_space(SpaceKind::Spectral1D, 32), 0.05);
  const auto fem = run_case(c, build_space(SpaceKind::FemP1_1D, 256), 0.05);
  CHECK(std::abs(spectral.l2_error - fem.l2_error) <= 0.2 * spectral.l2_error);
}

TEST_CASE("spatial study and projection control") {
  std::vector<SpaceHandle> spaces;
  for (int n : {8, 16, 32}) spaces.push_back(build_space(SpaceKind::FemP1_1D, n));
  const auto study = spatial_convergence(builtin_case("C1"), spaces, 1e-3);
  REQUIRE(study.control.size() == 3);
  CHECK(study.control_rate == doctest::Approx(2.0).epsilon(0.05));
  CHECK(study.fitted_rate > 1.7);
  CHECK_THROWS_AS(spatial_convergence(builtin_case("C1"), {build_space(SpaceKind::Spectral1D, 8)}, 0.1),
                  ContractError);
}

TEST_CASE("uniqueness probe") {
  const auto c2 = builtin_case("C2");
  const auto space = build_space(SpaceKind::FemP1_1D, 32);
  const auto zero = uniqueness_probe(c2, space, 0.1, 0.0);
  CHECK(zero.max_difference == 0.0);
  CHECK(zero.ok);
  const auto big = uniqueness_probe(c2, space, 0.1, 1.0, 7);
  CHECK(big.ok);
  CHECK(big.tolerance == doctest::Approx(1e-9));
}

TEST_CASE("convergence CSV") {
  const auto study = temporal_convergence(builtin_case("C1"), build_space(SpaceKind::Spectral1D, 4),
                                          {0.5, 0.25});
  std::ostringstream os;
  write_convergence_csv(os, {study});
  const std::string text = os.str();
  CHECK(text.rfind("case,kind,resolution,tau,l2_error,v_error,fitted_rate\n", 0) == 0);
  CHECK(text.find("C1,temporal,4,0.5,") != std::string::npos);
}

TEST_CASE("h1_error: zero for the exact discrete function, rate 1 for P1") {
  const auto s = build_space(SpaceKind::Spectral1D, 3);
  Eigen::VectorXd c(3);
  c << 0.5, 0.0, -0.25;
  const SourceFunction g = [](const Point& x, double t) {
    return t * std::sqrt(2.0) * (0.5 * std::sin(pi * x.x) - 0.25 * std::sin(3 * pi * x.x));
  };
  CHECK(h1_error(*s, c, g, 1.0) <= 1e-9);

  const SourceFunction sine = [](const Point& x, double) { return std::sin(pi * x.x) * std::sin(pi * x.y); };
  std::vector<std::pair<double, double>> pairs;
  for (int n : {8, 16, 32}) {
    const auto fem = build_space(SpaceKind::FemP1_2D, n, n);
    const Field p = l2_project(fem, [&](const Point& x) { return sine(x, 0.0); });
    pairs.emplace_back(1.0 / n, h1_error(*fem, p.coefficients, sine, 0.0));
  }
  CHECK(rate_fit(pairs) == doctest::Approx(1.0).epsilon(0.1));
}
