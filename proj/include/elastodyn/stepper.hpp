#pragma once

#include "elastodyn/nfunction.hpp"
#include "elastodyn/space.hpp"

#include <Eigen/Core>
#include <Eigen/SparseCholesky>

#include <functional>
#include <iosfwd>
#include <optional>
#include <vector>

namespace elastodyn {

/// Equidistant time grid τ = T/N plus Newton controls.
struct SchemeConfig {
  double final_time = 1.0;
  int steps = 1;
  double tau = 1.0;
  /// Base residual tolerance; the per-step tolerance is newton_tol·(1 + ‖f_load‖₂).
  double newton_tol = 1e-11;
  int newton_max_iter = 50;
  int max_halvings = 30;

  static SchemeConfig make(double final_time, int steps);
  /// Throws ContractError unless τ·N = T (to 1e−12), N ≥ 0 and tolerances are positive.
  void validate() const;
};

struct SchemeState {
  Field u;
  Field v;
  int n = 0;
  double t = 0.0;
  /// Rounding error of the kinematic updates, so that u + u_carry tracks
  /// u⁰ + τΣvʲ to about eps². Empty means zero.
  Eigen::VectorXd u_carry;
};

/// f(x, t).
using SourceFunction = std::function<double(const Point&, double)>;

struct SourceSampler {
  SourceFunction f;  // empty means f ≡ 0
  int time_points = 4;
};

struct SourceAverage {
  Eigen::VectorXd load;  // (∫ fⁿ φⱼ)ⱼ
  double l2_norm = 0.0;  // ‖fⁿ‖_{L²(Ω)}
};

/// fⁿ = (1/τ)∫_{t_{n−1}}^{t_n} f dt by Gauss quadrature in time, tested against the basis.
SourceAverage average_source(const SourceSampler& sampler, const Space& space, int n, double tau);

struct StepOutcome {
  SchemeState state;
  int newton_iterations = 0;
  double residual_norm = 0.0;
  double tolerance = 0.0;
  /// τ·|vⁿ·R(vⁿ)|: how far the discrete energy balance may be off because R ≠ 0.
  double energy_defect = 0.0;
};

/// Backward Euler two-field scheme
///   M(vⁿ − vⁿ⁻¹)/τ + A vⁿ + B(uⁿ) = fⁿ,   uⁿ = uⁿ⁻¹ + τ vⁿ,
/// solved for vⁿ by damped Newton with iteration matrix M/τ + A + τJ(uⁿ).
/// Holds the factorization workspace; one instance per thread.
class BackwardEulerStepper {
 public:
  BackwardEulerStepper(NFunctionSpec spec, SpaceHandle space, SchemeConfig config);

  const NFunctionSpec& spec() const noexcept { return spec_; }
  const SpaceHandle& space() const noexcept { return space_; }
  const SchemeConfig& config() const noexcept { return config_; }

  /// R(v) for the step leaving `prev`.
  Eigen::VectorXd residual(const SchemeState& prev, const Eigen::VectorXd& f_load,
                           const Eigen::VectorXd& v) const;

  /// Advances one step. The Newton start is vⁿ⁻¹ unless `initial_guess` is given.
  /// Throws NonConvergenceError when newton_max_iter is exceeded or the line search stalls.
  StepOutcome step(const SchemeState& prev, const Eigen::VectorXd& f_load,
                   const std::optional<Eigen::VectorXd>& initial_guess = std::nullopt);

 private:
  NFunctionSpec spec_;
  SpaceHandle space_;
  SchemeConfig config_;
  SparseMatrix base_;  // M/τ + A
  bool linear_ = false;
  bool pattern_ready_ = false;
  Eigen::SimplicialLDLT<SparseMatrix> solver_;
};

struct StepRecord {
  int step = 0;
  double t = 0.0;
  double l2_v = 0.0;
  double h1semi_v = 0.0;
  double potential = 0.0;
  double energy = 0.0;
  /// ½(‖vⁿ‖² − ‖vⁿ⁻¹‖² + ‖vⁿ − vⁿ⁻¹‖²) + τ‖∇vⁿ‖² + Φ(uⁿ) − Φ(uⁿ⁻¹) − τ(fⁿ, vⁿ); ≤ 0 up to solver slack.
  double dissipation_slack = 0.0;
  int newton_iters = 0;
  double residual_norm = 0.0;

  double tolerance = 0.0;
  double energy_defect = 0.0;
  double l2_dv = 0.0;  // ‖vⁿ − vⁿ⁻¹‖
  double f_l2 = 0.0;   // ‖fⁿ‖
};

/// Observer invoked after every accepted step (and once for step 0 with prev == current).
using StepMonitor =
    std::function<void(const StepRecord&, const SchemeState& prev, const SchemeState& current)>;

struct RunOptions {
  std::vector<StepMonitor> monitors;
  /// Optional Newton start per step: (n, previous state) ↦ initial guess for vⁿ.
  std::function<Eigen::VectorXd(int, const SchemeState&)> initial_guess;
  bool keep_history = true;
};

struct RunReport {
  double tau = 0.0;
  int steps = 0;
  std::vector<StepRecord> records;  // records[0] describes the initial state
  std::vector<Eigen::VectorXd> u_history;
  std::vector<Eigen::VectorXd> u_carry_history;
  std::vector<Eigen::VectorXd> v_history;
  std::vector<Eigen::VectorXd> loads;  // loads[n−1] = load of fⁿ
  /// max |uᴺ − (u⁰ + τΣvʲ)| over coefficients.
  double telescoping_error = 0.0;
  SchemeState final_state;

  /// Header `step,t,l2_v,h1semi_v,potential,energy,dissipation_slack,newton_iters,residual_norm`.
  void write_csv(std::ostream& os) const;
};

/// Runs N steps from (u0, v0). Step errors are rethrown as NonConvergenceError
/// naming the failing step.
RunReport run(const NFunctionSpec& spec, const SpaceHandle& space, const Field& u0, const Field& v0,
              const SourceSampler& sampler, const SchemeConfig& config,
              const RunOptions& options = {});

/// Norms of M(uⁿ − 2uⁿ⁻¹ + uⁿ⁻²)/τ² + A(uⁿ − uⁿ⁻¹)/τ + B(uⁿ) − fⁿ for n = 1..N,
/// with u⁻¹ := u⁰ − τv⁰. Differences include the carried rounding terms when
/// `u_carries` is given (one per state); without them the M term has a
/// rounding floor of about eps‖u‖/τ².
std::vector<double> second_order_residual(const NFunctionSpec& spec, const Space& space,
                                          const std::vector<Eigen::VectorXd>& u_history,
                                          const Eigen::VectorXd& v0,
                                          const std::vector<Eigen::VectorXd>& loads, double tau,
                                          const std::vector<Eigen::VectorXd>& u_carries = {});

/// uⁿ = uⁿ⁻¹ + τvⁿ with error-free transformations: returns the rounded sum and
/// updates `carry` so that sum + carry = u + carry_in + τv to about eps².
Eigen::VectorXd compensated_update(const Eigen::VectorXd& u, Eigen::VectorXd& carry, double tau,
                                   const Eigen::VectorXd& v);

/// ½‖v‖²_{L²} + Φ(u).
double energy(const SchemeState& state, const NFunctionSpec& spec);

}  // namespace elastodyn
