#include "elastodyn/nfunction.hpp"

#include "elastodyn/errors.hpp"

#include <Eigen/Cholesky>
#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace elastodyn {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Below this gradient magnitude a PowerIso with p < 2 has an unbounded Hessian;
// the Jacobian is evaluated at this radius instead.
constexpr double kSingularHessianRadius = 1e-8;

bool all_finite(const SmallVector& x) { return x.allFinite(); }

// Radial profile g(r) of ExpIso and its derivatives, accurate near r = 0.
double exp_profile(double r) { return std::expm1(r) - r; }
double exp_profile_slope_over_r(double r) { return r == 0.0 ? 1.0 : std::expm1(r) / r; }

}  // namespace

std::string to_string(NFunctionKind kind) {
  switch (kind) {
    case NFunctionKind::PowerIso:
      return "power";
    case NFunctionKind::ExpIso:
      return "exp";
    case NFunctionKind::QuadForm:
      return "quadform";
    case NFunctionKind::Custom:
      return "custom";
  }
  return "unknown";
}

SmallVector small_vector(std::initializer_list<double> values) {
  SmallVector v(static_cast<Eigen::Index>(values.size()));
  Eigen::Index i = 0;
  for (double x : values) v(i++) = x;
  return v;
}

NFunctionSpec NFunctionSpec::power(double p, int dim) {
  if (!(p > 1.0) || !std::isfinite(p)) {
    throw ContractError(fmt::format("power N-function requires p > 1, got {}", p));
  }
  if (dim < 1 || dim > kMaxDim) {
    throw ContractError(fmt::format("N-function dimension must be in [1, {}], got {}", kMaxDim, dim));
  }
  NFunctionSpec s;
  s.kind_ = NFunctionKind::PowerIso;
  s.dim_ = dim;
  s.p_ = p;
  s.name_ = fmt::format("power(p={})", p);
  return s;
}

NFunctionSpec NFunctionSpec::exponential(int dim) {
  if (dim < 1 || dim > kMaxDim) {
    throw ContractError(fmt::format("N-function dimension must be in [1, {}], got {}", kMaxDim, dim));
  }
  NFunctionSpec s;
  s.kind_ = NFunctionKind::ExpIso;
  s.dim_ = dim;
  s.name_ = "exp";
  return s;
}

NFunctionSpec NFunctionSpec::quadratic_form(const SmallMatrix& a) {
  const auto d = a.rows();
  if (d < 1 || d > kMaxDim || a.cols() != d) {
    throw ContractError(fmt::format("quadratic form needs a square matrix of size 1..{}, got {}x{}",
                                    kMaxDim, a.rows(), a.cols()));
  }
  if (!a.allFinite()) throw ContractError("quadratic form matrix has non-finite entries");
  const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
  if ((a - a.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
    throw ContractError("quadratic form matrix is not symmetric (SPD check failed)");
  }
  Eigen::LLT<SmallMatrix> llt(a);
  if (llt.info() != Eigen::Success) {
    throw ContractError("quadratic form matrix is not positive definite (SPD check failed)");
  }
  NFunctionSpec s;
  s.kind_ = NFunctionKind::QuadForm;
  s.dim_ = static_cast<int>(d);
  s.a_ = 0.5 * (a + a.transpose());
  s.a_inv_ = llt.solve(SmallMatrix::Identity(d, d));
  s.name_ = "quadform";
  return s;
}

NFunctionSpec NFunctionSpec::custom(int dim, ValueFn value, GradientFn gradient, HessianFn hessian,
                                    std::string name) {
  if (dim < 1 || dim > kMaxDim) {
    throw ContractError(fmt::format("N-function dimension must be in [1, {}], got {}", kMaxDim, dim));
  }
  if (!value || !gradient) throw ContractError("custom N-function needs value and gradient callbacks");
  NFunctionSpec s;
  s.kind_ = NFunctionKind::Custom;
  s.dim_ = dim;
  s.custom_ = std::make_shared<const CustomCallbacks>(
      CustomCallbacks{std::move(value), std::move(gradient), std::move(hessian)});
  s.name_ = std::move(name);
  return s;
}

std::string NFunctionSpec::describe() const {
  return fmt::format("{} (d={})", name_, dim_);
}

void NFunctionSpec::check_argument(const SmallVector& x, const char* what) const {
  if (x.size() != dim_) {
    throw ContractError(fmt::format("{}: argument has dimension {}, N-function has {}", what,
                                    x.size(), dim_));
  }
  if (!all_finite(x)) throw DomainError(fmt::format("{}: non-finite argument", what));
}

double NFunctionSpec::value(const SmallVector& xi) const {
  check_argument(xi, "evaluate");
  switch (kind_) {
    case NFunctionKind::PowerIso:
      return std::pow(xi.norm(), p_) / p_;
    case NFunctionKind::ExpIso:
      return exp_profile(xi.norm());
    case NFunctionKind::QuadForm:
      return xi.dot(a_ * xi);
    case NFunctionKind::Custom:
      return custom_->value(xi);
  }
  return 0.0;
}

SmallVector NFunctionSpec::stress(const SmallVector& xi) const {
  check_argument(xi, "stress");
  switch (kind_) {
    case NFunctionKind::PowerIso: {
      const double r = xi.norm();
      if (r == 0.0) return SmallVector::Zero(dim_);
      return std::pow(r, p_ - 2.0) * xi;
    }
    case NFunctionKind::ExpIso:
      return exp_profile_slope_over_r(xi.norm()) * xi;
    case NFunctionKind::QuadForm:
      return 2.0 * (a_ * xi);
    case NFunctionKind::Custom:
      return custom_->gradient(xi);
  }
  return SmallVector::Zero(dim_);
}

SmallMatrix NFunctionSpec::stress_jacobian(const SmallVector& xi) const {
  check_argument(xi, "stress_jacobian");
  const SmallMatrix id = SmallMatrix::Identity(dim_, dim_);
  switch (kind_) {
    case NFunctionKind::PowerIso: {
      double r = xi.norm();
      if (r == 0.0) {
        if (p_ == 2.0) return id;
        if (p_ > 2.0) return SmallMatrix::Zero(dim_, dim_);
        return std::pow(kSingularHessianRadius, p_ - 2.0) * id;
      }
      const SmallVector e = xi / r;
      r = std::max(r, p_ < 2.0 ? kSingularHessianRadius : 0.0);
      return std::pow(r, p_ - 2.0) * (id + (p_ - 2.0) * e * e.transpose());
    }
    case NFunctionKind::ExpIso: {
      const double r = xi.norm();
      if (r == 0.0) return id;
      const SmallVector e = xi / r;
      const double slope_over_r = exp_profile_slope_over_r(r);
      // g''(r) − g'(r)/r with g'' = e^r
      const double radial_excess = std::exp(r) - slope_over_r;
      return slope_over_r * id + radial_excess * e * e.transpose();
    }
    case NFunctionKind::QuadForm:
      return 2.0 * a_;
    case NFunctionKind::Custom: {
      if (custom_->hessian) return custom_->hessian(xi);
      SmallMatrix h(dim_, dim_);
      const double step = 1e-6 * std::max(1.0, xi.norm());
      for (int j = 0; j < dim_; ++j) {
        SmallVector plus = xi, minus = xi;
        plus(j) += step;
        minus(j) -= step;
        h.col(j) = (custom_->gradient(plus) - custom_->gradient(minus)) / (2.0 * step);
      }
      return 0.5 * (h + h.transpose());
    }
  }
  return id;
}

std::optional<SmallMatrix> NFunctionSpec::constant_stress_jacobian() const {
  if (kind_ == NFunctionKind::PowerIso && p_ == 2.0) return SmallMatrix::Identity(dim_, dim_);
  if (kind_ == NFunctionKind::QuadForm) return SmallMatrix(2.0 * a_);
  return std::nullopt;
}

std::optional<NFunctionSpec> NFunctionSpec::conjugate_spec() const {
  switch (kind_) {
    case NFunctionKind::PowerIso:
      return power(p_ / (p_ - 1.0), dim_);
    case NFunctionKind::QuadForm: {
      NFunctionSpec s = quadratic_form(SmallMatrix(0.25 * a_inv_));
      s.name_ = "quadform*";
      return s;
    }
    default:
      return std::nullopt;
  }
}

double evaluate(const NFunctionSpec& spec, const SmallVector& xi) { return spec.value(xi); }

SmallVector stress(const NFunctionSpec& spec, const SmallVector& xi) { return spec.stress(xi); }

double conjugate_eval(const NFunctionSpec& spec, const SmallVector& eta) {
  if (eta.size() != spec.dim()) {
    throw ContractError(fmt::format("conjugate_eval: argument has dimension {}, N-function has {}",
                                    eta.size(), spec.dim()));
  }
  if (!eta.allFinite()) throw DomainError("conjugate_eval: non-finite argument");
  switch (spec.kind()) {
    case NFunctionKind::PowerIso: {
      const double q = spec.exponent() / (spec.exponent() - 1.0);
      return std::pow(eta.norm(), q) / q;
    }
    case NFunctionKind::QuadForm:
      return spec.conjugate_spec()->value(eta);
    default:
      return numeric_conjugate(spec, eta);
  }
}

double numeric_conjugate(const NFunctionSpec& spec, const SmallVector& eta,
                         const ConjugateOptions& options) {
  const int d = spec.dim();
  if (eta.size() != d) throw ContractError("numeric_conjugate: dimension mismatch");
  if (!eta.allFinite()) throw DomainError("numeric_conjugate: non-finite argument");
  const double eta_norm = eta.norm();
  if (eta_norm == 0.0) return 0.0;

  auto objective = [&](const SmallVector& x) {
    const double phi = spec.value(x);
    if (!std::isfinite(phi)) return -kInf;
    return x.dot(eta) - phi;
  };

  int k = options.grid_points;
  if (k <= 0) k = d == 1 ? 201 : (d == 2 ? 41 : 15);
  if (k % 2 == 0) ++k;  // keep the origin on the grid

  // Coarse search on a growing ball until the best grid point is interior.
  SmallVector best = SmallVector::Zero(d);
  double best_value = 0.0;
  double radius = 1.0;
  bool interior = false;
  for (int attempt = 0; attempt <= options.max_radius_doublings && !interior; ++attempt) {
    const double spacing = 2.0 * radius / (k - 1);
    best = SmallVector::Zero(d);
    best_value = 0.0;
    long total = 1;
    for (int j = 0; j < d; ++j) total *= k;
    SmallVector x(d);
    for (long idx = 0; idx < total; ++idx) {
      long rest = idx;
      for (int j = 0; j < d; ++j) {
        x(j) = -radius + spacing * static_cast<double>(rest % k);
        rest /= k;
      }
      if (x.norm() > radius) continue;
      const double val = objective(x);
      if (val > best_value) {
        best_value = val;
        best = x;
      }
    }
    interior = best.norm() < 0.75 * radius;
    if (!interior) radius *= 2.0;
  }
  if (!interior) {
    throw NumericError(fmt::format(
        "numeric conjugate: maximizer not bracketed for |eta|={} after {} radius doublings "
        "(last radius {}); is phi superlinear?",
        eta_norm, options.max_radius_doublings, radius));
  }

  // Damped Newton ascent on ξ·η − φ(ξ).
  SmallVector x = best;
  double fx = best_value;
  double grad_norm = kInf;
  const double grad_tol = 1e-14 * std::max(1.0, eta_norm);
  int it = 0;
  for (; it < options.max_ascent_iterations; ++it) {
    const SmallVector g = eta - spec.stress(x);
    grad_norm = g.norm();
    if (grad_norm <= grad_tol) break;
    SmallVector dir;
    const SmallMatrix h = spec.stress_jacobian(x);
    Eigen::LDLT<SmallMatrix> ldlt(h);
    bool newton_ok = ldlt.info() == Eigen::Success && ldlt.isPositive();
    if (newton_ok) {
      dir = ldlt.solve(g);
      newton_ok = dir.allFinite() && dir.dot(g) > 0.0;
    }
    if (!newton_ok) dir = g / std::max(1.0, h.norm());
    // Near the maximizer of a huge objective the value comparison is lost in
    // rounding, so a step that shrinks the gradient is accepted as well.
    auto accept = [&](const SmallVector& y, double fy) {
      return fy >= fx || (eta - spec.stress(y)).norm() < grad_norm;
    };
    double t = 1.0;
    SmallVector trial = x + dir;
    double ft = objective(trial);
    while (!accept(trial, ft) && t > 1e-30) {
      t *= 0.5;
      trial = x + t * dir;
      ft = objective(trial);
    }
    if (!accept(trial, ft)) break;
    const double move = (trial - x).norm();
    x = trial;
    fx = ft;
    if (move <= 1e-16 * std::max(1.0, x.norm())) {
      grad_norm = (eta - spec.stress(x)).norm();
      break;
    }
  }
  if (!(grad_norm <= 1e-8 * std::max(1.0, eta_norm))) {
    throw NumericError(fmt::format(
        "numeric conjugate: ascent did not converge for |eta|={} (gradient norm {}, "
        "iterations {}, |xi|={})",
        eta_norm, grad_norm, it, x.norm()));
  }
  return std::max(fx, 0.0);
}

double young_gap(const NFunctionSpec& spec, const SmallVector& xi, const SmallVector& eta) {
  return spec.value(xi) + conjugate_eval(spec, eta) - xi.dot(eta);
}

namespace {

// Unit-ball sample points: random directions, magnitudes log-spaced in [1e-3, 1].
std::vector<SmallVector> unit_ball_samples(int dim, int samples, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<SmallVector> out;
  out.reserve(static_cast<std::size_t>(samples));
  for (int i = 0; i < samples; ++i) {
    SmallVector dir(dim);
    do {
      for (int j = 0; j < dim; ++j) dir(j) = normal(rng);
    } while (dir.norm() < 1e-12);
    dir.normalize();
    const double frac = samples == 1 ? 1.0 : static_cast<double>(i) / (samples - 1);
    out.push_back(std::pow(10.0, -3.0 * (1.0 - frac)) * dir);
  }
  return out;
}

constexpr double kBlowUpThreshold = 1e6;
constexpr double kTrendFactor = 1.1;
constexpr int kDoublings = 3;

// Divergent when the sampled sup keeps growing across every radius doubling,
// either past the blow-up threshold or by a fixed factor per doubling.
bool diverges(const std::vector<double>& ladder) {
  bool increasing = true;
  bool geometric = true;
  for (std::size_t i = 1; i < ladder.size(); ++i) {
    if (!(ladder[i] > ladder[i - 1])) increasing = false;
    if (!(ladder[i] >= kTrendFactor * ladder[i - 1])) geometric = false;
  }
  return (increasing && ladder.back() > kBlowUpThreshold) || geometric;
}

void check_sampling_args(double radius, int samples) {
  if (!(radius > 0.0) || !std::isfinite(radius)) {
    throw ContractError(fmt::format("sample_radius must be positive, got {}", radius));
  }
  if (samples < 1) throw ContractError(fmt::format("samples must be >= 1, got {}", samples));
}

}  // namespace

GrowthDiagnostic delta2_check(const NFunctionSpec& spec, double sample_radius, int samples,
                              std::uint64_t seed) {
  check_sampling_args(sample_radius, samples);
  const auto unit = unit_ball_samples(spec.dim(), samples, seed);
  GrowthDiagnostic out;
  double radius = sample_radius;
  for (int k = 0; k <= kDoublings; ++k, radius *= 2.0) {
    double sup = 0.0;
    for (const auto& s : unit) {
      const SmallVector xi = radius * s;
      const double base = spec.value(xi);
      if (!(base > 0.0)) continue;
      const double doubled = spec.value(SmallVector(2.0 * xi));
      const double q = std::isfinite(doubled) && std::isfinite(base) ? doubled / base : kInf;
      sup = std::max(sup, q);
    }
    out.ladder.push_back(sup);
  }
  out.holds = !diverges(out.ladder);
  if (out.holds) out.constant = *std::max_element(out.ladder.begin(), out.ladder.end());
  return out;
}

GrowthDiagnostic growth_constant_estimate(const NFunctionSpec& spec, double sample_radius,
                                          int samples, std::uint64_t seed) {
  check_sampling_args(sample_radius, samples);
  const auto unit = unit_ball_samples(spec.dim(), samples, seed);
  GrowthDiagnostic out;
  double constant = 0.0;
  double radius = sample_radius;
  for (int k = 0; k <= kDoublings; ++k, radius *= 2.0) {
    double sup = 0.0;
    for (const auto& s : unit) {
      const SmallVector xi = radius * s;
      const double phi = spec.value(xi);
      if (!(phi > 0.0) || !std::isfinite(phi)) {
        if (!std::isfinite(phi)) sup = kInf;
        continue;
      }
      const double conj = conjugate_eval(spec, spec.stress(xi));
      constant = std::max(constant, conj / (1.0 + phi));
      sup = std::max(sup, conj / phi);
    }
    out.ladder.push_back(sup);
  }
  out.holds = !diverges(out.ladder);
  if (out.holds) out.constant = constant;
  return out;
}

double monotonicity_probe(const NFunctionSpec& spec,
                          std::span<const std::pair<SmallVector, SmallVector>> pairs) {
  double result = kInf;
  for (const auto& [xi, eta] : pairs) {
    const double product = (spec.stress(xi) - spec.stress(eta)).dot(xi - eta);
    result = std::min(result, product);
  }
  return result;
}

}  // namespace elastodyn
