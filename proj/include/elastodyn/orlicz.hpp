#pragma once

#include "elastodyn/nfunction.hpp"

#include <Eigen/Core>

#include <iosfwd>

namespace elastodyn {

/// A piecewise-constant ℝᵈ-valued field: one value per cell, each cell with a
/// positive measure. Gradients of P1 finite element functions are exactly of
/// this form, so integrals over a CellField are exact sums.
class CellField {
 public:
  CellField() = default;
  /// `values` is d × n_cells; `measures` has n_cells positive entries.
  CellField(Eigen::MatrixXd values, Eigen::VectorXd measures);

  static CellField constant(const SmallVector& value, const Eigen::VectorXd& measures);
  static CellField zero(int dim, const Eigen::VectorXd& measures);

  int dim() const noexcept { return static_cast<int>(values_.rows()); }
  Eigen::Index size() const noexcept { return values_.cols(); }
  SmallVector value(Eigen::Index cell) const { return values_.col(cell); }
  double measure(Eigen::Index cell) const { return measures_(cell); }
  const Eigen::MatrixXd& values() const noexcept { return values_; }
  const Eigen::VectorXd& measures() const noexcept { return measures_; }
  double total_measure() const { return measures_.sum(); }

  CellField scaled(double factor) const;
  /// Cell-wise sum; throws ContractError unless cells match.
  CellField plus(const CellField& other) const;

  /// Debug dump: header `cell,measure,c0[,c1,...]`.
  void write_csv(std::ostream& os) const;

 private:
  Eigen::MatrixXd values_;
  Eigen::VectorXd measures_;
};

/// ρ_φ(ξ) = Σ_cells measure · φ(value).
double modular(const NFunctionSpec& spec, const CellField& xi);

/// Luxemburg norm inf{λ > 0 : ρ_φ(ξ/λ) ≤ 1} by bisection on λ. For ξ ≠ 0 the
/// returned λ satisfies |ρ_φ(ξ/λ) − 1| ≤ tol.
double luxemburg_norm(const NFunctionSpec& spec, const CellField& xi, double tol = 1e-12);

struct HolderCheck {
  double lhs = 0.0;
  double rhs = 0.0;
  bool ok = false;
};

/// |∫ξ·η| ≤ 2‖ξ‖_φ‖η‖_φ*. Needs a closed-form conjugate (UnsupportedError otherwise).
HolderCheck holder_check(const NFunctionSpec& spec, const CellField& xi, const CellField& eta);

/// ρ ≤ ‖ξ‖ when ‖ξ‖ ≤ 1, ρ ≥ ‖ξ‖ when ‖ξ‖ > 1, and ‖ξ‖ ≤ ρ + 1, each up to `tol`.
bool norm_modular_relation_check(const NFunctionSpec& spec, const CellField& xi,
                                 double tol = 1e-9);

}  // namespace elastodyn
