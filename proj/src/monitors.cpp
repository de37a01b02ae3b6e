#include "elastodyn/monitors.hpp"

#include "elastodyn/errors.hpp"
#include "elastodyn/orlicz.hpp"

#include <fmt/format.h>
#include <fmt/ostream.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

namespace elastodyn {

EstimateMonitor::EstimateMonitor(NFunctionSpec spec, double tau, int r)
    : spec_(std::move(spec)), conjugate_(spec_.conjugate_spec()), tau_(tau), r_(r) {
  if (!(tau > 0.0)) throw ContractError("EstimateMonitor: tau must be positive");
  if (r < 2) throw ContractError("EstimateMonitor: r must be >= 2");
}

StepMonitor EstimateMonitor::observer() {
  return [this](const StepRecord& rec, const SchemeState& prev, const SchemeState& current) {
    observe(rec, prev, current);
  };
}

std::optional<double> conjugate_stress_modular(const NFunctionSpec& spec, const Field& u) {
  const auto conj = spec.conjugate_spec();
  if (!conj) return std::nullopt;
  const CellField grad = u.space->gradient_field(u.coefficients);
  Eigen::MatrixXd stresses(grad.dim(), grad.size());
  for (Eigen::Index i = 0; i < grad.size(); ++i) stresses.col(i) = spec.stress(grad.value(i));
  return modular(*conj, CellField(std::move(stresses), grad.measures()));
}

void EstimateMonitor::observe(const StepRecord& rec, const SchemeState& prev,
                              const SchemeState& current) {
  const Space& space = *current.u.space;
  const bool spectral = space.kind() == SpaceKind::Spectral1D;
  EstimateRecord e;
  e.step = rec.step;
  e.v_sq = rec.l2_v * rec.l2_v;
  e.potential2 = 2.0 * rec.potential;
  if (conjugate_) e.conjugate_modular = conjugate_stress_modular(spec_, current.u);

  if (records_.empty() || rec.step == 0) {
    records_.clear();
    e.v0_sq = e.v_sq;
    e.phi0 = rec.potential;
    if (spectral) e.dual_sum = 0.0;
    records_.push_back(e);
    return;
  }
  const EstimateRecord& last = records_.back();
  e.v0_sq = last.v0_sq;
  e.phi0 = last.phi0;
  e.jump_sum = last.jump_sum + rec.l2_dv * rec.l2_dv;
  e.dissipation = last.dissipation + 2.0 * tau_ * rec.h1semi_v * rec.h1semi_v;
  e.f_accum = last.f_accum + tau_ * rec.f_l2;
  e.solver_slack = last.solver_slack + 2.0 * rec.energy_defect;
  if (spectral) {
    e.dual_sum = last.dual_sum.value_or(0.0) +
                 hr_dual_norm(space, current.v.coefficients - prev.v.coefficients, r_);
  }
  records_.push_back(e);
}

EstimateOneResult estimate_one_check(const std::vector<EstimateRecord>& records) {
  if (records.empty()) throw ContractError("estimate_one_check: no records");
  const EstimateRecord& first = records.front();
  const EstimateRecord& last = records.back();
  const double f = last.f_accum;
  const double slack = last.solver_slack;

  EstimateOneResult out;
  out.constant_used = std::sqrt(first.v0_sq) + std::sqrt(2.0 * first.phi0) + 2.0 * f +
                      std::sqrt(slack);
  out.rhs_bound = first.v0_sq + 2.0 * first.phi0 + 2.0 * f * out.constant_used + slack;
  const double allowance = 1e-12 * (1.0 + out.rhs_bound);
  out.ok = true;
  for (const auto& r : records) {
    const double lhs = r.lhs();
    out.max_v = std::max(out.max_v, std::sqrt(r.v_sq));
    if (lhs >= out.max_lhs) {
      out.max_lhs = lhs;
      out.worst_step = r.step;
    }
    if (!(lhs <= out.rhs_bound + allowance)) out.ok = false;
  }
  if (!(out.max_v <= out.constant_used + allowance)) out.ok = false;
  return out;
}

EstimateTwoResult estimate_two_check(const std::vector<EstimateRecord>& records) {
  if (records.empty()) throw ContractError("estimate_two_check: no records");
  double rho_max = 0.0;
  for (const auto& r : records) {
    if (!r.dual_sum) {
      throw UnsupportedError("estimate_two_check: dual norms need a spectral space");
    }
    if (!r.conjugate_modular) {
      throw UnsupportedError("estimate_two_check: needs an N-function with closed-form conjugate");
    }
    rho_max = std::max(rho_max, *r.conjugate_modular);
  }
  const EstimateRecord& last = records.back();
  EstimateTwoResult out;
  out.lhs = *last.dual_sum;
  out.data = std::sqrt(last.v0_sq) + last.phi0 + last.f_accum + rho_max + 1.0;
  return out;
}

EstimateTwoLadder estimate_two_ladder(std::vector<EstimateTwoResult> runs) {
  if (runs.empty()) throw ContractError("estimate_two_ladder: empty ladder");
  EstimateTwoLadder out;
  out.runs = std::move(runs);
  out.constant = 2.0 * out.runs.front().lhs / out.runs.front().data;
  double lo = out.runs.front().lhs;
  double hi = lo;
  out.ok_bounded = true;
  for (const auto& r : out.runs) {
    const bool b = r.lhs <= out.constant * r.data;
    out.bounded.push_back(b);
    out.ok_bounded = out.ok_bounded && b;
    lo = std::min(lo, r.lhs);
    hi = std::max(hi, r.lhs);
  }
  out.variation = hi == 0.0 ? 0.0 : hi / lo - 1.0;
  return out;
}

std::vector<double> coupling_check(const std::vector<SpaceHandle>& spaces,
                                   const std::vector<double>& taus, const ScalarFunction& v0) {
  if (spaces.size() != taus.size()) {
    throw ContractError(fmt::format("coupling_check: {} spaces but {} time steps", spaces.size(),
                                    taus.size()));
  }
  std::vector<double> out;
  for (std::size_t l = 0; l < spaces.size(); ++l) {
    const Field p = l2_project(spaces[l], v0);
    const double g = spaces[l]->h1_seminorm(p.coefficients);
    out.push_back(taus[l] * g * g);
  }
  return out;
}

DissipationResult dissipation_check(const RunReport& report) {
  DissipationResult out;
  out.max_increase = -std::numeric_limits<double>::infinity();
  for (std::size_t n = 1; n < report.records.size(); ++n) {
    const auto& rec = report.records[n];
    const double increase = rec.energy - report.records[n - 1].energy;
    const double allowance = 10.0 * rec.tolerance * (1.0 + rec.l2_v);
    if (increase > out.max_increase) {
      out.max_increase = increase;
      out.worst_allowance = allowance;
      out.worst_step = rec.step;
    }
    if (!(increase <= allowance)) out.ok = false;
  }
  if (report.records.size() < 2) out.max_increase = 0.0;
  return out;
}

void write_estimates_csv(std::ostream& os, const std::vector<EstimateRecord>& records) {
  os << "step,v_sq,jump_sum,dissipation,potential2,lhs,v0_sq,phi0,f_accum,solver_slack,dual_sum,"
        "conjugate_modular\n";
  auto opt = [](const std::optional<double>& x) {
    return x ? fmt::format("{:.17g}", *x) : std::string();
  };
  for (const auto& r : records) {
    fmt::print(os, "{},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{},{}\n",
               r.step, r.v_sq, r.jump_sum, r.dissipation, r.potential2, r.lhs(), r.v0_sq, r.phi0,
               r.f_accum, r.solver_slack, opt(r.dual_sum), opt(r.conjugate_modular));
  }
}

}  // namespace elastodyn
