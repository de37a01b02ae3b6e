#pragma once

#include "elastodyn/monitors.hpp"
#include "elastodyn/nfunction.hpp"
#include "elastodyn/space.hpp"
#include "elastodyn/stepper.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace elastodyn {

/// u_tt − Δu_t − ∇·σ(∇u) = f on Ω × (0, T] with a closed-form solution.
struct ManufacturedCase {
  std::string name;
  NFunctionSpec spec;
  SourceFunction u_exact;
  SourceFunction ut_exact;
  SourceFunction f;
  /// Negative controls are run and reported but never asserted.
  bool asserted = true;

  int dim() const { return spec.dim(); }
};

struct ConsistencyReport {
  double max_residual = 0.0;
  double tolerance = 0.0;
  Point worst_point;
  double worst_time = 0.0;
  bool ok = false;
};

/// Samples the strong residual u_tt − Δu_t − ∇·σ(∇u) − f with sixth-order
/// finite differences (step h) on a space-time grid inside Ω × (0, 1). A point
/// passes when |residual| ≤ tol.
ConsistencyReport check_case_consistency(const ManufacturedCase& c, double tol = 1e-8,
                                         double h = 1e-3);

/// Rejects (ContractError) a case whose source is inconsistent with its solution.
ManufacturedCase register_case(ManufacturedCase c);

/// "C1", "C2", "C3" or "nonmonotone"; every built-in passes register_case.
ManufacturedCase builtin_case(const std::string& name);
std::vector<std::string> builtin_case_names();

struct StudyOptions {
  double final_time = 1.0;
  double newton_tol = 1e-11;
  int newton_max_iter = 50;
  int estimate_r = 2;
};

struct RunDiagnostics {
  EstimateOneResult estimate_one;
  std::optional<EstimateTwoResult> estimate_two;
  /// maxₙ second-order residual / per-step tolerance.
  double second_order_ratio = 0.0;
  int max_newton_iters = 0;
  double telescoping_error = 0.0;
};

/// Estimate checks, second-order residual and Newton statistics of a finished run.
/// Estimate II is evaluated only on spectral spaces with a closed-form conjugate.
RunDiagnostics diagnose_run(const NFunctionSpec& spec, const Space& space, const RunReport& report,
                            const std::vector<EstimateRecord>& estimates);

struct CaseRun {
  RunReport report;
  std::vector<EstimateRecord> estimates;
  double l2_error = 0.0;  // ‖u(·,T) − uᴺ‖
  double v_error = 0.0;   // ‖u_t(·,T) − vᴺ‖
  double h1_error = 0.0;  // ‖∇(u(·,T) − uᴺ)‖, recorded only
  RunDiagnostics diagnostics;
};

/// ‖∇(u_h − g(·,t))‖_{L²} with ∇g by sixth-order differences (step 1e-3).
double h1_error(const Space& space, const Eigen::VectorXd& coefficients, const SourceFunction& g,
                double t);

/// u⁰ = P u(·,0), v⁰ = P u_t(·,0), N = round(T/τ) steps.
CaseRun run_case(const ManufacturedCase& c, const SpaceHandle& space, double tau,
                 const StudyOptions& options = {}, const RunOptions& run_options = {});

struct ConvergencePoint {
  std::string case_name;
  std::string kind;  // "temporal", "spatial" or "projection"
  std::string space;
  int resolution = 0;
  double tau = 0.0;
  double step = 0.0;  // abscissa of the rate fit: τ or h
  double l2_error = 0.0;
  double v_error = 0.0;
  double h1_error = 0.0;
  RunDiagnostics diagnostics;
};

struct ConvergenceStudy {
  std::vector<ConvergencePoint> points;
  double fitted_rate = 0.0;
  /// Temporal: projection error of u(·,T) on the fixed space.
  /// Spatial: the projection-only control points and rate.
  double spatial_floor = 0.0;
  std::vector<ConvergencePoint> control;
  double control_rate = 0.0;
  std::vector<std::string> warnings;
};

ConvergenceStudy temporal_convergence(const ManufacturedCase& c, const SpaceHandle& space,
                                      const std::vector<double>& taus,
                                      const StudyOptions& options = {});

ConvergenceStudy spatial_convergence(const ManufacturedCase& c,
                                     const std::vector<SpaceHandle>& spaces, double tau,
                                     const StudyOptions& options = {});

/// Least-squares slope of log error against log step. Non-positive errors are
/// dropped with a warning; fewer than two usable pairs is a ContractError.
double rate_fit(const std::vector<std::pair<double, double>>& pairs,
                std::vector<std::string>* warnings = nullptr);

struct UniquenessResult {
  double max_difference = 0.0;  // maxₙ ‖vⁿ_A − vⁿ_B‖_{L²}
  double tolerance = 0.0;       // 100·newton_tol
  int worst_step = 0;
  bool ok = false;
};

/// Two runs from identical data; run B starts every Newton solve from
/// vⁿ⁻¹ + scale·ζ with ζ uniform in [−1, 1] per coefficient (seeded).
UniquenessResult uniqueness_probe(const ManufacturedCase& c, const SpaceHandle& space, double tau,
                                  double perturbation_scale, std::uint64_t seed = 0,
                                  const StudyOptions& options = {});

/// Header `case,kind,resolution,tau,l2_error,v_error,fitted_rate`.
void write_convergence_csv(std::ostream& os, const std::vector<ConvergenceStudy>& studies);

}  // namespace elastodyn
