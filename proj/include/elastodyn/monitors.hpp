#pragma once

#include "elastodyn/nfunction.hpp"
#include "elastodyn/space.hpp"
#include "elastodyn/stepper.hpp"

#include <iosfwd>
#include <optional>
#include <vector>

namespace elastodyn {

/// Running totals of the a priori estimate terms after step n.
struct EstimateRecord {
  int step = 0;
  // estimate I, left-hand side
  double v_sq = 0.0;         // ‖vⁿ‖²
  double jump_sum = 0.0;     // Σ‖vʲ − vʲ⁻¹‖²
  double dissipation = 0.0;  // 2τΣ‖∇vʲ‖²
  double potential2 = 0.0;   // 2Φ(uⁿ)
  // data
  double v0_sq = 0.0;         // ‖v⁰‖²
  double phi0 = 0.0;          // Φ(u⁰)
  double f_accum = 0.0;       // τΣ‖fʲ‖
  double solver_slack = 0.0;  // 2Σ τ|vʲ·R(vʲ)|
  // estimate II (spectral spaces only)
  std::optional<double> dual_sum;  // Σ‖vʲ − vʲ⁻¹‖_{(H^r)*}
  /// ρ_{φ*}(σ(∇uⁿ)); closed-form conjugate kinds only.
  std::optional<double> conjugate_modular;

  double lhs() const { return v_sq + jump_sum + dissipation + potential2; }
};

/// Step observer collecting EstimateRecords. Attach with `observer()`; the
/// monitor must outlive the run it observes.
class EstimateMonitor {
 public:
  EstimateMonitor(NFunctionSpec spec, double tau, int r = 2);
  EstimateMonitor(const EstimateMonitor&) = delete;
  EstimateMonitor& operator=(const EstimateMonitor&) = delete;

  StepMonitor observer();
  const std::vector<EstimateRecord>& records() const noexcept { return records_; }

 private:
  void observe(const StepRecord& rec, const SchemeState& prev, const SchemeState& current);

  NFunctionSpec spec_;
  std::optional<NFunctionSpec> conjugate_;
  double tau_;
  int r_;
  std::vector<EstimateRecord> records_;
};

/// ρ_{φ*}(σ(∇u)); nullopt when φ has no closed-form conjugate.
std::optional<double> conjugate_stress_modular(const NFunctionSpec& spec, const Field& u);

struct EstimateOneResult {
  double max_lhs = 0.0;
  double rhs_bound = 0.0;
  /// X bound ‖v⁰‖ + √2·Φ(u⁰)^{1/2} + 2F (+ √slack) on maxₙ‖vⁿ‖.
  double constant_used = 0.0;
  double max_v = 0.0;
  int worst_step = 0;
  bool ok = false;
};

/// LHS(n) ≤ ‖v⁰‖² + 2Φ(u⁰) + 2F·X + slack for every n, with F = τΣ‖fʲ‖ and
/// X from the explicit chain. Rounding allowance 1e-12·(1 + rhs).
EstimateOneResult estimate_one_check(const std::vector<EstimateRecord>& records);

struct EstimateTwoResult {
  double lhs = 0.0;   // τΣ‖(vⁿ − vⁿ⁻¹)/τ‖_{(H^r)*}
  double data = 0.0;  // ‖v⁰‖ + Φ(u⁰) + F + maxₙ ρ_{φ*}(σ(∇uⁿ)) + 1
};

/// Needs records from a spectral run with a closed-form conjugate
/// (UnsupportedError otherwise).
EstimateTwoResult estimate_two_check(const std::vector<EstimateRecord>& records);

struct EstimateTwoLadder {
  std::vector<EstimateTwoResult> runs;
  double constant = 0.0;  // 2 × lhs/data of the first (coarsest) run
  std::vector<bool> bounded;
  /// max lhs / min lhs − 1 across the ladder.
  double variation = 0.0;
  bool ok_bounded = false;
};

EstimateTwoLadder estimate_two_ladder(std::vector<EstimateTwoResult> runs);

/// τ_l·‖∇P_l v₀‖² for each (space, τ) pair.
std::vector<double> coupling_check(const std::vector<SpaceHandle>& spaces,
                                   const std::vector<double>& taus, const ScalarFunction& v0);

struct DissipationResult {
  double max_increase = 0.0;  // maxₙ (Eⁿ − Eⁿ⁻¹)
  double worst_allowance = 0.0;
  int worst_step = 0;
  bool ok = true;
};

/// Eⁿ ≤ Eⁿ⁻¹ + 10·tolⁿ·(1 + ‖vⁿ‖) for every step of an unforced run.
DissipationResult dissipation_check(const RunReport& report);

/// Header `step,v_sq,jump_sum,dissipation,potential2,lhs,v0_sq,phi0,f_accum,solver_slack,dual_sum,conjugate_modular`;
/// unavailable columns are left empty.
void write_estimates_csv(std::ostream& os, const std::vector<EstimateRecord>& records);

}  // namespace elastodyn
