#include "elastodyn/orlicz.hpp"

#include "elastodyn/errors.hpp"

#include <fmt/format.h>
#include <fmt/ostream.h>

#include <cmath>
#include <ostream>

namespace elastodyn {

CellField::CellField(Eigen::MatrixXd values, Eigen::VectorXd measures)
    : values_(std::move(values)), measures_(std::move(measures)) {
  if (values_.cols() != measures_.size()) {
    throw ContractError(fmt::format("CellField: {} values but {} measures", values_.cols(),
                                    measures_.size()));
  }
  if (values_.rows() < 1 || values_.rows() > kMaxDim) {
    throw ContractError(fmt::format("CellField: dimension {} out of range", values_.rows()));
  }
  for (Eigen::Index i = 0; i < measures_.size(); ++i) {
    if (!(measures_(i) > 0.0) || !std::isfinite(measures_(i))) {
      throw ContractError(fmt::format("CellField: cell {} has non-positive measure {}", i,
                                      measures_(i)));
    }
  }
}

CellField CellField::constant(const SmallVector& value, const Eigen::VectorXd& measures) {
  Eigen::MatrixXd v(value.size(), measures.size());
  for (Eigen::Index i = 0; i < measures.size(); ++i) v.col(i) = value;
  return {std::move(v), measures};
}

CellField CellField::zero(int dim, const Eigen::VectorXd& measures) {
  return {Eigen::MatrixXd::Zero(dim, measures.size()), measures};
}

CellField CellField::scaled(double factor) const { return {factor * values_, measures_}; }

CellField CellField::plus(const CellField& other) const {
  if (other.values_.rows() != values_.rows() || other.values_.cols() != values_.cols() ||
      other.measures_ != measures_) {
    throw ContractError("CellField::plus: fields live on different cells");
  }
  return {values_ + other.values_, measures_};
}

void CellField::write_csv(std::ostream& os) const {
  os << "cell,measure";
  for (int j = 0; j < dim(); ++j) os << ",c" << j;
  os << '\n';
  for (Eigen::Index i = 0; i < size(); ++i) {
    fmt::print(os, "{},{:.17g}", i, measures_(i));
    for (int j = 0; j < dim(); ++j) fmt::print(os, ",{:.17g}", values_(j, i));
    os << '\n';
  }
}

double modular(const NFunctionSpec& spec, const CellField& xi) {
  if (xi.dim() != spec.dim()) {
    throw ContractError(
        fmt::format("modular: field dimension {} vs N-function dimension {}", xi.dim(), spec.dim()));
  }
  double sum = 0.0;
  for (Eigen::Index i = 0; i < xi.size(); ++i) sum += xi.measure(i) * spec.value(xi.value(i));
  return sum;
}

double luxemburg_norm(const NFunctionSpec& spec, const CellField& xi, double tol) {
  if (!(tol > 0.0)) throw ContractError("luxemburg_norm: tol must be positive");
  if (xi.dim() != spec.dim()) throw ContractError("luxemburg_norm: dimension mismatch");
  if (xi.values().cwiseAbs().maxCoeff() == 0.0 || xi.size() == 0) return 0.0;

  auto rho = [&](double lambda) { return modular(spec, xi.scaled(1.0 / lambda)); };

  // λ ↦ ρ(ξ/λ) is nonincreasing; bracket the level set ρ = 1.
  double lo = 1.0;
  double hi = 1.0;
  int guard = 0;
  while (!(rho(lo) > 1.0)) {
    lo *= 0.5;
    if (++guard > 2000) throw NumericError("luxemburg_norm: failed to find lower bracket");
  }
  guard = 0;
  while (!(rho(hi) < 1.0)) {
    hi *= 2.0;
    if (++guard > 2000) throw NumericError("luxemburg_norm: failed to find upper bracket");
  }

  double mid = hi;
  for (int it = 0; it < 400; ++it) {
    mid = 0.5 * (lo + hi);
    const double r = rho(mid);
    if (std::abs(r - 1.0) <= tol) return mid;
    if (r > 1.0) {
      lo = mid;
    } else {
      hi = mid;
    }
    if (hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * hi) break;
  }
  const double r = rho(hi);
  if (std::abs(r - 1.0) <= std::max(tol, 1e-10)) return hi;
  throw NumericError(fmt::format(
      "luxemburg_norm: bisection stalled at lambda={} with modular {} (spec {} not continuous?)", hi,
      r, spec.describe()));
}

HolderCheck holder_check(const NFunctionSpec& spec, const CellField& xi, const CellField& eta) {
  if (xi.size() != eta.size() || xi.dim() != eta.dim() || xi.measures() != eta.measures()) {
    throw ContractError("holder_check: fields live on different cells");
  }
  const auto conj = spec.conjugate_spec();
  if (!conj) {
    throw UnsupportedError(fmt::format(
        "holder_check: no closed-form conjugate for {}", spec.describe()));
  }
  HolderCheck out;
  double pairing = 0.0;
  for (Eigen::Index i = 0; i < xi.size(); ++i) {
    pairing += xi.measure(i) * xi.values().col(i).dot(eta.values().col(i));
  }
  out.lhs = std::abs(pairing);
  out.rhs = 2.0 * luxemburg_norm(spec, xi) * luxemburg_norm(*conj, eta);
  out.ok = out.lhs <= out.rhs + 1e-10 * (1.0 + out.rhs);
  return out;
}

bool norm_modular_relation_check(const NFunctionSpec& spec, const CellField& xi, double tol) {
  const double norm = luxemburg_norm(spec, xi);
  const double rho = modular(spec, xi);
  const bool below_or_above = norm <= 1.0 ? rho <= norm + tol : rho >= norm - tol;
  return below_or_above && norm <= rho + 1.0 + tol;
}

}  // namespace elastodyn
