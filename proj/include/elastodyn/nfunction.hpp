#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace elastodyn {

/// Largest argument dimension an N-function may have (the PDE is posed in 1D/2D/3D).
inline constexpr int kMaxDim = 3;

/// Small stack-allocated vector / matrix for arguments of φ, σ and Dσ.
using SmallVector = Eigen::Matrix<double, Eigen::Dynamic, 1, Eigen::ColMajor, kMaxDim, 1>;
using SmallMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor, kMaxDim, kMaxDim>;

enum class NFunctionKind { PowerIso, ExpIso, QuadForm, Custom };

std::string to_string(NFunctionKind kind);

/// An N-function φ: ℝᵈ → ℝ together with its stress σ = ∇φ and, where
/// available in closed form, its Legendre-Fenchel conjugate.
///
/// Catalog kinds:
///   - PowerIso(p):  φ(ξ) = |ξ|ᵖ/p,            σ(ξ) = |ξ|ᵖ⁻²ξ
///   - ExpIso:       φ(ξ) = e^|ξ| − |ξ| − 1,   σ(ξ) = (e^|ξ| − 1)ξ/|ξ|
///   - QuadForm(A):  φ(ξ) = ξᵀAξ,              σ(ξ) = 2Aξ,  A SPD
///   - Custom:       user callbacks; the N-function axioms are the caller's contract.
///
/// Values are immutable after construction and may be shared between threads.
class NFunctionSpec {
 public:
  using ValueFn = std::function<double(const SmallVector&)>;
  using GradientFn = std::function<SmallVector(const SmallVector&)>;
  using HessianFn = std::function<SmallMatrix(const SmallVector&)>;

  static NFunctionSpec power(double p, int dim);
  static NFunctionSpec exponential(int dim);
  /// Throws ContractError unless `a` is symmetric positive definite.
  static NFunctionSpec quadratic_form(const SmallMatrix& a);
  /// `hessian` may be empty, in which case Dσ is taken by central differences of σ.
  static NFunctionSpec custom(int dim, ValueFn value, GradientFn gradient, HessianFn hessian = {},
                              std::string name = "custom");

  NFunctionKind kind() const noexcept { return kind_; }
  int dim() const noexcept { return dim_; }
  /// Exponent p (PowerIso only; 0 otherwise).
  double exponent() const noexcept { return p_; }
  /// Matrix A (QuadForm only; empty otherwise).
  const SmallMatrix& matrix() const noexcept { return a_; }
  std::string describe() const;

  double value(const SmallVector& xi) const;
  SmallVector stress(const SmallVector& xi) const;
  /// Dσ(ξ), the Hessian of φ. Symmetric positive semidefinite for convex φ.
  SmallMatrix stress_jacobian(const SmallVector& xi) const;

  /// Dσ when it does not depend on ξ (PowerIso p = 2, QuadForm).
  std::optional<SmallMatrix> constant_stress_jacobian() const;

  bool has_closed_form_conjugate() const noexcept {
    return kind_ == NFunctionKind::PowerIso || kind_ == NFunctionKind::QuadForm;
  }
  /// The conjugate as a catalog spec: PowerIso(p) ↦ PowerIso(p/(p−1)), QuadForm(A) ↦ QuadForm(A⁻¹/4).
  std::optional<NFunctionSpec> conjugate_spec() const;

 private:
  struct CustomCallbacks {
    ValueFn value;
    GradientFn gradient;
    HessianFn hessian;
  };

  NFunctionSpec() = default;
  void check_argument(const SmallVector& x, const char* what) const;

  NFunctionKind kind_ = NFunctionKind::PowerIso;
  int dim_ = 1;
  double p_ = 0.0;
  SmallMatrix a_;
  SmallMatrix a_inv_;
  std::shared_ptr<const CustomCallbacks> custom_;
  std::string name_;
};

double evaluate(const NFunctionSpec& spec, const SmallVector& xi);
SmallVector stress(const NFunctionSpec& spec, const SmallVector& xi);

struct ConjugateOptions {
  /// Grid points per axis for the coarse search.
  int grid_points = 0;  // 0 selects a dimension-dependent default
  int max_radius_doublings = 80;
  int max_ascent_iterations = 200;
};

/// φ*(η) = sup_ξ (ξ·η − φ(ξ)). Closed form for PowerIso/QuadForm, numeric otherwise.
double conjugate_eval(const NFunctionSpec& spec, const SmallVector& eta);

/// Numeric Legendre-Fenchel transform: coarse grid search over a ball grown
/// until the maximizer is interior, then damped Newton ascent.
/// Throws NumericError with diagnostics on failure.
double numeric_conjugate(const NFunctionSpec& spec, const SmallVector& eta,
                         const ConjugateOptions& options = {});

/// φ(ξ) + φ*(η) − ξ·η, which is ≥ 0 and vanishes at η = σ(ξ).
double young_gap(const NFunctionSpec& spec, const SmallVector& xi, const SmallVector& eta);

/// Outcome of a sampled asymptotic-growth diagnostic. `holds` is false when the
/// sampled quotient diverges under radius doubling; `constant` is the sampled
/// sup when it holds. `ladder` lists the sup at radius, 2·radius, 4·radius, 8·radius.
struct GrowthDiagnostic {
  bool holds = false;
  std::optional<double> constant;
  std::vector<double> ladder;
};

/// Δ2 condition φ(2ξ) ≤ Cφ(ξ), sampled over |ξ| ≤ radius.
GrowthDiagnostic delta2_check(const NFunctionSpec& spec, double sample_radius, int samples,
                              std::uint64_t seed = 0);

/// Least C with φ*(σ(ξ)) ≤ C(1 + φ(ξ)) over sampled ξ. Divergence is judged on the
/// scale-free quotient φ*(σ(ξ))/φ(ξ), which is bounded iff Δ2 holds.
GrowthDiagnostic growth_constant_estimate(const NFunctionSpec& spec, double sample_radius,
                                          int samples, std::uint64_t seed = 0);

/// min over pairs of (σ(ξ) − σ(η))·(ξ − η); +∞ for an empty list.
double monotonicity_probe(const NFunctionSpec& spec,
                          std::span<const std::pair<SmallVector, SmallVector>> pairs);

/// Convenience constructor for small vectors.
SmallVector small_vector(std::initializer_list<double> values);

}  // namespace elastodyn
