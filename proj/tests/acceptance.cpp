// Acceptance criteria 1-10: one PASS/FAIL line each, exit status 0 iff all pass.

#include "elastodyn/cli.hpp"
#include "elastodyn/errors.hpp"
#include "elastodyn/harness.hpp"
#include "elastodyn/monitors.hpp"
#include "oracles.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <vector>

using namespace elastodyn;
using std::numbers::pi;

namespace {

struct Verdict {
  bool pass = true;
  std::string detail;

  void fail_if(bool bad) { pass = pass && !bad; }
  void add(const std::string& s) { detail += (detail.empty() ? "" : "; ") + s; }
};

const std::vector<double> kLadder = {0.1, 0.05, 0.025, 0.0125};

SmallMatrix paper_matrix() {
  SmallMatrix a(2, 2);
  a << 2.0, -1.0, -1.0, 2.0;
  return a;
}

SmallVector random_in_ball(std::mt19937_64& rng, int dim, double radius) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  SmallVector x(dim);
  for (int j = 0; j < dim; ++j) x(j) = normal(rng);
  x.normalize();
  return radius * std::pow(unif(rng), 1.0 / dim) * x;
}

Eigen::VectorXd random_vector(std::mt19937_64& rng, Eigen::Index n, double scale) {
  std::uniform_real_distribution<double> u(-scale, scale);
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = u(rng);
  return v;
}

// Every converged run feeds criteria 3 and 10.
struct RunLedger {
  int estimate_one_total = 0;
  int estimate_one_failed = 0;
  std::vector<std::string> estimate_one_failures;
  double worst_second_order = 0.0;
  std::string worst_second_order_run;
  int runs = 0;

  void record(const std::string& label, const RunDiagnostics& d, bool asserted) {
    ++runs;
    if (d.second_order_ratio > worst_second_order) {
      worst_second_order = d.second_order_ratio;
      worst_second_order_run = label;
    }
    if (!asserted) return;
    ++estimate_one_total;
    if (!d.estimate_one.ok) {
      ++estimate_one_failed;
      estimate_one_failures.push_back(label);
    }
  }
};

void print(int index, const std::string& title, const Verdict& v) {
  fmt::print("[{}] {:>2}. {}: {}\n", v.pass ? "PASS" : "FAIL", index, title, v.detail);
  std::fflush(stdout);
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

Verdict temporal_rate(RunLedger& ledger, std::vector<EstimateTwoResult>& c1_two) {
  Verdict v;
  struct Setup {
    const char* name;
    SpaceHandle space;
  };
  const std::vector<Setup> setups = {{"C1", build_space(SpaceKind::Spectral1D, 64)},
                                     {"C2", build_space(SpaceKind::FemP1_1D, 512)}};
  for (const auto& s : setups) {
    const auto start = std::chrono::steady_clock::now();
    const auto study = temporal_convergence(builtin_case(s.name), s.space, kLadder);
    const double elapsed = seconds_since(start);
    double min_error = std::numeric_limits<double>::infinity();
    for (const auto& p : study.points) {
      min_error = std::min(min_error, p.l2_error);
      ledger.record(fmt::format("{} tau={}", s.name, p.tau), p.diagnostics, true);
      if (std::string(s.name) == "C1" && p.diagnostics.estimate_two) c1_two.push_back(*p.diagnostics.estimate_two);
    }
    v.fail_if(!(study.fitted_rate >= 0.85 && study.fitted_rate <= 1.15));
    v.fail_if(!(10.0 * study.spatial_floor <= min_error));
    v.fail_if(!(elapsed <= 60.0));
    v.add(fmt::format("{} on {} rate {:.4f}, floor {:.2e} vs min error {:.2e}, {:.2f} s", s.name,
                      s.space->describe(), study.fitted_rate, study.spatial_floor, min_error, elapsed));
  }
  return v;
}

Verdict dissipation(RunLedger& ledger) {
  Verdict v;
  struct Setup {
    NFunctionSpec spec;
    SpaceHandle space;
  };
  const std::vector<Setup> setups = {
      {NFunctionSpec::power(2.0, 1), build_space(SpaceKind::Spectral1D, 16)},
      {NFunctionSpec::power(2.0, 1), build_space(SpaceKind::FemP1_1D, 64)},
      {NFunctionSpec::power(4.0, 1), build_space(SpaceKind::FemP1_1D, 64)},
      {NFunctionSpec::power(4.0, 2), build_space(SpaceKind::FemP1_2D, 8, 8)},
  };
  for (const auto& s : setups) {
    const auto u0 = l2_project(s.space, [](const Point& x) {
      return std::sin(pi * x.x) * (x.y == 0.0 ? 1.0 : std::sin(pi * x.y)) * 1.5;
    });
    const auto v0 = l2_project(s.space, [](const Point& x) { return x.x * (1.0 - x.x) * 2.0; });
    const auto cfg = SchemeConfig::make(1.0, 200);
    EstimateMonitor monitor(s.spec, cfg.tau);
    RunOptions opts;
    opts.monitors.push_back(monitor.observer());
    const auto report = run(s.spec, s.space, u0, v0, {}, cfg, opts);
    const auto d = dissipation_check(report);
    ledger.record(fmt::format("free {} on {}", s.spec.describe(), s.space->describe()),
                  diagnose_run(s.spec, *s.space, report, monitor.records()), true);
    v.fail_if(!d.ok);
    v.add(fmt::format("{} on {}: max increase {:.2e} (allowance {:.2e})", s.spec.describe(),
                      s.space->describe(), d.max_increase, d.worst_allowance));
  }
  return v;
}

void spatial_ladders(RunLedger& ledger, std::string& summary) {
  std::vector<SpaceHandle> c1, c3;
  for (int n : {16, 32, 64}) c1.push_back(build_space(SpaceKind::FemP1_1D, n));
  for (int n : {4, 8, 16}) c3.push_back(build_space(SpaceKind::FemP1_2D, n, n));
  const auto s1 = spatial_convergence(builtin_case("C1"), c1, 1e-4);
  const auto s3 = spatial_convergence(builtin_case("C3"), c3, 1e-3);
  for (const auto& p : s1.points) ledger.record(fmt::format("C1 n={}", p.resolution), p.diagnostics, true);
  for (const auto& p : s3.points) ledger.record(fmt::format("C3 n={}", p.resolution), p.diagnostics, true);
  summary = fmt::format("spatial rates C1 {:.3f}, C3 {:.3f}", s1.fitted_rate, s3.fitted_rate);
}

Verdict estimate_one(RunLedger& ledger) {
  std::string spatial;
  spatial_ladders(ledger, spatial);
  // single runs of every built-in case
  const std::vector<std::pair<std::string, SpaceHandle>> singles = {
      {"C1", build_space(SpaceKind::FemP1_1D, 64)},
      {"C2", build_space(SpaceKind::Spectral1D, 64)},
      {"C3", build_space(SpaceKind::FemP1_2D, 16, 16)},
      {"nonmonotone", build_space(SpaceKind::FemP1_1D, 64)}};
  std::string control;
  for (const auto& [name, space] : singles) {
    const auto c = builtin_case(name);
    const auto r = run_case(c, space, 0.05);
    ledger.record(fmt::format("{} on {}", name, space->describe()), r.diagnostics, c.asserted);
    if (!c.asserted) {
      control = fmt::format("negative control {} (not asserted)",
                            r.diagnostics.estimate_one.ok ? "holds" : "fails");
    }
  }
  Verdict v;
  v.fail_if(ledger.estimate_one_failed > 0 || ledger.estimate_one_total == 0);
  v.add(fmt::format("{}/{} runs within the bound", ledger.estimate_one_total - ledger.estimate_one_failed,
                    ledger.estimate_one_total));
  for (const auto& f : ledger.estimate_one_failures) v.add("violated on " + f);
  v.add(spatial);
  v.add(control);
  return v;
}

Verdict estimate_two(const std::vector<EstimateTwoResult>& c1_two) {
  Verdict v;
  if (c1_two.size() != kLadder.size()) {
    v.fail_if(true);
    v.add("C1 spectral ladder did not produce estimate II data");
    return v;
  }
  const auto ladder = estimate_two_ladder(c1_two);
  v.fail_if(!(ladder.variation <= 0.10) || !ladder.ok_bounded);
  std::string lhs;
  for (const auto& r : ladder.runs) lhs += fmt::format("{}{:.5f}", lhs.empty() ? "" : " ", r.lhs);
  v.add(fmt::format("C1 Spectral1D(64) r=2: sums {} , variation {:.1f}%, bounded by C = {:.4g}", lhs,
                    100.0 * ladder.variation, ladder.constant));
  // p=4 data on the same space: reported only
  std::vector<EstimateTwoResult> c2;
  for (double tau : kLadder) {
    const auto r = run_case(builtin_case("C2"), build_space(SpaceKind::Spectral1D, 64), tau);
    c2.push_back(*r.diagnostics.estimate_two);
  }
  const auto l2 = estimate_two_ladder(c2);
  v.add(fmt::format("C2 on Spectral1D(64) variation {:.1f}% (reported, not asserted)", 100.0 * l2.variation));
  return v;
}

Verdict uniqueness() {
  Verdict v;
  const std::vector<std::pair<std::string, SpaceHandle>> setups = {
      {"C1", build_space(SpaceKind::FemP1_1D, 64)},
      {"C2", build_space(SpaceKind::FemP1_1D, 64)},
      {"C3", build_space(SpaceKind::FemP1_2D, 8, 8)},
      {"nonmonotone", build_space(SpaceKind::FemP1_1D, 64)}};
  for (const auto& [name, space] : setups) {
    const auto c = builtin_case(name);
    const auto u = uniqueness_probe(c, space, 0.05, 1.0, 0);
    if (c.asserted) v.fail_if(!u.ok);
    v.add(fmt::format("{} {:.1e}{}", name, u.max_difference, c.asserted ? "" : " (not asserted)"));
  }
  v.add("tolerance 1e-9 = 100 newton_tol");
  return v;
}

std::vector<NFunctionSpec> catalog() {
  return {NFunctionSpec::power(2.0, 2), NFunctionSpec::power(3.0, 2), NFunctionSpec::power(4.0, 1),
          NFunctionSpec::power(1.5, 2), NFunctionSpec::exponential(2), NFunctionSpec::exponential(1),
          NFunctionSpec::quadratic_form(paper_matrix())};
}

Verdict orlicz() {
  Verdict v;
  int checks = 0;
  int skipped = 0;
  std::uint64_t seed = 0;
  for (const auto& spec : catalog()) {
    for (const auto& c : orlicz_suite(spec, seed++)) {
      if (c.reported_only()) {
        ++skipped;
        continue;
      }
      ++checks;
      if (!c.holds()) {
        v.fail_if(true);
        v.add(fmt::format("{} on {}: {:.3e}", c.name, spec.describe(), c.value));
      }
    }
  }
  v.add(fmt::format("{} checks on {} specs (Young, Luxemburg, Hoelder, norm-modular)", checks,
                    catalog().size()));
  if (skipped) v.add(fmt::format("Hoelder skipped on {} ExpIso specs (no closed-form conjugate)", skipped));
  return v;
}

Verdict conjugates() {
  Verdict v;
  std::mt19937_64 rng(7);
  struct Entry {
    NFunctionSpec spec;
    std::function<double(const oracle::Vec&)> phi;
  };
  const auto a = paper_matrix();
  std::vector<Entry> entries;
  for (double p : {1.5, 2.0, 3.0, 4.0}) {
    for (int d : {1, 2}) {
      entries.push_back({NFunctionSpec::power(p, d),
                         [p](const oracle::Vec& x) { return std::pow(oracle::norm(x), p) / p; }});
    }
  }
  entries.push_back({NFunctionSpec::quadratic_form(a), [a](const oracle::Vec& x) {
                       return a(0, 0) * x[0] * x[0] + 2 * a(0, 1) * x[0] * x[1] + a(1, 1) * x[1] * x[1];
                     }});
  double worst = 0.0;
  int total = 0;
  for (int i = 0; i < 100; ++i) {
    const auto& e = entries[static_cast<std::size_t>(i) % entries.size()];
    const SmallVector eta = random_in_ball(rng, e.spec.dim(), 10.0);
    const double closed = conjugate_eval(e.spec, eta);
    const double brute = oracle::brute_force_conjugate(e.phi, oracle::Vec(eta.data(), eta.data() + eta.size()));
    worst = std::max(worst, std::abs(closed - brute) / std::max(1.0, std::abs(brute)));
    ++total;
  }
  v.fail_if(!(worst <= 1e-8));
  const double q = conjugate_eval(NFunctionSpec::quadratic_form(a), small_vector({1.0, 1.0}));
  const double qb = oracle::brute_force_conjugate(entries.back().phi, {1.0, 1.0});
  v.fail_if(!(std::abs(q - 0.5) <= 1e-10 && std::abs(qb - 0.5) <= 1e-10));
  v.add(fmt::format("{} random eta, worst relative gap to brute force {:.1e}", total, worst));
  v.add(fmt::format("QuadForm at (1,1): closed form {:.12f}, oracle {:.12f}", q, qb));
  return v;
}

Verdict growth() {
  Verdict v;
  for (double p : {1.5, 2.0, 3.0, 4.0}) {
    for (int d : {1, 2}) {
      const auto spec = NFunctionSpec::power(p, d);
      const auto delta2 = delta2_check(spec, 10.0, 64);
      const auto g = growth_constant_estimate(spec, 10.0, 64);
      const double expected = std::pow(2.0, p);
      const bool ok = delta2.holds && std::abs(*delta2.constant - expected) <= 0.01 * expected &&
                      g.holds && *g.constant <= p - 1.0 + 1e-6;
      v.fail_if(!ok);
      if (d == 1) {
        v.add(fmt::format("p={}: delta2 {:.4g} (2^p = {:.4g}), growth {:.4g}", p,
                          delta2.constant.value_or(NAN), expected, g.constant.value_or(NAN)));
      }
    }
  }
  for (int d : {1, 2}) {
    const auto spec = NFunctionSpec::exponential(d);
    const auto delta2 = delta2_check(spec, 10.0, 64);
    const auto g = growth_constant_estimate(spec, 10.0, 64);
    v.fail_if(delta2.holds || g.holds);
    if (d == 1) {
      v.add(fmt::format("ExpIso: delta2 {}, growth {}", delta2.holds ? "holds" : "fails",
                        g.holds ? "finite" : "diverges"));
    }
  }
  return v;
}

Verdict consistency() {
  Verdict v;
  std::mt19937_64 rng(9);
  const std::vector<SpaceHandle> spaces = {build_space(SpaceKind::FemP1_1D, 16),
                                           build_space(SpaceKind::FemP1_2D, 4, 4),
                                           build_space(SpaceKind::Spectral1D, 8)};
  double worst_order = std::numeric_limits<double>::infinity();
  double worst_exact = 0.0;
  double worst_jac = 0.0;
  for (const auto& s : spaces) {
    std::vector<NFunctionSpec> specs = {NFunctionSpec::power(3.0, s->dim()),
                                        NFunctionSpec::power(4.0, s->dim()),
                                        NFunctionSpec::exponential(s->dim()),
                                        NFunctionSpec::power(2.0, s->dim())};
    if (s->dim() == 2) specs.push_back(NFunctionSpec::quadratic_form(paper_matrix()));
    for (const auto& spec : specs) {
      const Eigen::VectorXd u = random_vector(rng, s->n_dofs(), 0.5);
      const Eigen::VectorXd w = random_vector(rng, s->n_dofs(), 0.5);
      const double exact = w.dot(s->nonlinear_residual(spec, u));
      std::vector<double> eps, err;
      for (double e : {0.08, 0.04, 0.02, 0.01}) {
        const double fd = (s->potential(spec, u + e * w) - s->potential(spec, u - e * w)) / (2 * e);
        eps.push_back(e);
        err.push_back(std::abs(fd - exact));
      }
      const bool quadratic = spec.constant_stress_jacobian().has_value();
      if (quadratic) {
        // central differences are exact on quadratic potentials
        const double rel = *std::max_element(err.begin(), err.end()) / std::max(1.0, std::abs(exact));
        worst_exact = std::max(worst_exact, rel);
      } else {
        worst_order = std::min(worst_order, oracle::log_slope(eps, err));
      }
      const Eigen::VectorXd jw = s->nonlinear_jacobian(spec, u) * w;
      const double h = 1e-6;
      const Eigen::VectorXd fd =
          (s->nonlinear_residual(spec, u + h * w) - s->nonlinear_residual(spec, u - h * w)) / (2 * h);
      worst_jac = std::max(worst_jac, (fd - jw).norm() / jw.norm());
    }
  }
  v.fail_if(!(worst_order >= 1.9) || !(worst_exact <= 1e-10) || !(worst_jac <= 1e-5));
  v.add(fmt::format("potential FD order >= {:.3f} (nonlinear specs), quadratic specs exact to {:.1e}",
                    worst_order, worst_exact));
  v.add(fmt::format("Jacobian vs FD of B: worst relative {:.1e}", worst_jac));
  return v;
}

Verdict scheme_form(const RunLedger& ledger) {
  Verdict v;
  v.fail_if(ledger.runs == 0 || !(ledger.worst_second_order <= 10.0));
  v.add(fmt::format("{} runs, worst second-order residual {:.3f} x tol ({})", ledger.runs,
                    ledger.worst_second_order, ledger.worst_second_order_run));
  return v;
}

}  // namespace

int main() {
  int failed = 0;
  auto guarded = [&](int index, const std::string& title, auto&& fn) {
    Verdict v;
    try {
      v = fn();
    } catch (const std::exception& e) {
      v.pass = false;
      v.detail = std::string("exception: ") + e.what();
    }
    if (!v.pass) ++failed;
    print(index, title, v);
  };

  RunLedger ledger;
  std::vector<EstimateTwoResult> c1_two;
  guarded(1, "Temporal rate", [&] { return temporal_rate(ledger, c1_two); });
  guarded(2, "Discrete dissipation", [&] { return dissipation(ledger); });
  guarded(3, "A priori estimate I", [&] { return estimate_one(ledger); });
  guarded(4, "A priori estimate II", [&] { return estimate_two(c1_two); });
  guarded(5, "Per-step uniqueness", [&] { return uniqueness(); });
  guarded(6, "Orlicz property suite", [&] { return orlicz(); });
  guarded(7, "Conjugate correctness", [&] { return conjugates(); });
  guarded(8, "Growth and delta2 diagnostics", [&] { return growth(); });
  guarded(9, "Residual and Jacobian consistency", [&] { return consistency(); });
  guarded(10, "Scheme-form equivalence", [&] { return scheme_form(ledger); });
  fmt::print("{} of 10 criteria pass\n", 10 - failed);
  return failed == 0 ? 0 : 1;
}
