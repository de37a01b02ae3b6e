#include "elastodyn/space.hpp"

#include "elastodyn/errors.hpp"

#include <Eigen/LU>
#include <Eigen/SparseCholesky>
#include <fmt/format.h>
#include <fmt/ostream.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>

namespace elastodyn {

namespace {

// 4-point Gauss-Legendre rule on [0, 1].
constexpr std::array<double, 4> kGaussNodes = {
    0.5 - 0.5 * 0.8611363115940526, 0.5 - 0.5 * 0.3399810435848563,
    0.5 + 0.5 * 0.3399810435848563, 0.5 + 0.5 * 0.8611363115940526};
constexpr std::array<double, 4> kGaussWeights = {
    0.5 * 0.3478548451374538, 0.5 * 0.6521451548625461, 0.5 * 0.6521451548625461,
    0.5 * 0.3478548451374538};

constexpr int kSpectralSubintervals = 1024;

using Triplets = std::vector<Eigen::Triplet<double>>;

SparseMatrix from_triplets(Eigen::Index n, const Triplets& t) {
  SparseMatrix m(n, n);
  m.setFromTriplets(t.begin(), t.end());
  m.makeCompressed();
  return m;
}

}  // namespace

std::string to_string(SpaceKind kind) {
  switch (kind) {
    case SpaceKind::FemP1_1D:
      return "fem1d";
    case SpaceKind::FemP1_2D:
      return "fem2d";
    case SpaceKind::Spectral1D:
      return "spectral1d";
  }
  return "unknown";
}

std::string Space::describe() const {
  switch (kind_) {
    case SpaceKind::FemP1_1D:
      return fmt::format("fem1d(n_cells={})", resolution_);
    case SpaceKind::FemP1_2D:
      return fmt::format("fem2d(nx={}, ny={})", resolution_, resolution_y_);
    case SpaceKind::Spectral1D:
      return fmt::format("spectral1d(m={})", resolution_);
  }
  return "unknown";
}

SpaceHandle build_space(SpaceKind kind, int resolution, int resolution_y) {
  if (resolution < 1) {
    throw ContractError(fmt::format("build_space: resolution must be >= 1, got {}", resolution));
  }
  std::shared_ptr<Space> s(new Space());
  s->kind_ = kind;
  switch (kind) {
    case SpaceKind::FemP1_1D:
      s->build_fem_1d(resolution);
      break;
    case SpaceKind::FemP1_2D: {
      const int ny = resolution_y == 0 ? resolution : resolution_y;
      if (ny < 1) throw ContractError(fmt::format("build_space: ny must be >= 1, got {}", ny));
      s->build_fem_2d(resolution, ny);
      break;
    }
    case SpaceKind::Spectral1D:
      s->build_spectral(resolution);
      break;
  }
  return s;
}

void Space::build_fem_1d(int n_cells) {
  resolution_ = n_cells;
  const double h = 1.0 / n_cells;
  for (int i = 0; i <= n_cells; ++i) {
    vertices_.push_back({i * h, 0.0});
    vertex_dof_.push_back(i == 0 || i == n_cells ? -1 : i - 1);
    if (i != 0 && i != n_cells) dof_vertex_.push_back(i);
  }
  n_dofs_ = n_cells - 1;
  for (int c = 0; c < n_cells; ++c) {
    Cell cell;
    cell.vertices = {c, c + 1, -1};
    cell.n_vertices = 2;
    cell.measure = h;
    cell.shape_gradients(0, 0) = -1.0 / h;
    cell.shape_gradients(0, 1) = 1.0 / h;
    cells_.push_back(cell);
    for (std::size_t q = 0; q < kGaussNodes.size(); ++q) {
      QuadraturePoint qp;
      qp.point = {(c + kGaussNodes[q]) * h, 0.0};
      qp.weight = kGaussWeights[q] * h;
      qp.cell = c;
      qp.shape = {1.0 - kGaussNodes[q], kGaussNodes[q], 0.0};
      quadrature_.push_back(qp);
    }
  }
  assemble_fem_matrices();
}

void Space::build_fem_2d(int nx, int ny) {
  resolution_ = nx;
  resolution_y_ = ny;
  const double hx = 1.0 / nx;
  const double hy = 1.0 / ny;
  auto vid = [nx](int i, int j) { return j * (nx + 1) + i; };
  int dof = 0;
  for (int j = 0; j <= ny; ++j) {
    for (int i = 0; i <= nx; ++i) {
      vertices_.push_back({i * hx, j * hy});
      const bool boundary = i == 0 || j == 0 || i == nx || j == ny;
      vertex_dof_.push_back(boundary ? -1 : dof);
      if (!boundary) {
        dof_vertex_.push_back(vid(i, j));
        ++dof;
      }
    }
  }
  n_dofs_ = dof;

  // Collapsed (Duffy) 4×4 Gauss rule on the reference triangle; exact to degree 7.
  struct RefNode {
    double xi, eta, weight;
  };
  std::vector<RefNode> ref;
  for (std::size_t a = 0; a < 4; ++a) {
    for (std::size_t b = 0; b < 4; ++b) {
      const double s = kGaussNodes[a];
      ref.push_back({s, (1.0 - s) * kGaussNodes[b], kGaussWeights[a] * kGaussWeights[b] * (1.0 - s)});
    }
  }

  auto add_triangle = [&](int v0, int v1, int v2) {
    Cell cell;
    cell.vertices = {v0, v1, v2};
    cell.n_vertices = 3;
    const Point& p0 = vertices_[static_cast<std::size_t>(v0)];
    const Point& p1 = vertices_[static_cast<std::size_t>(v1)];
    const Point& p2 = vertices_[static_cast<std::size_t>(v2)];
    Eigen::Matrix2d jac;
    jac << p1.x - p0.x, p2.x - p0.x, p1.y - p0.y, p2.y - p0.y;
    const double det = jac.determinant();
    cell.measure = 0.5 * std::abs(det);
    Eigen::Matrix<double, 2, 3> ref_grad;
    ref_grad << -1.0, 1.0, 0.0, -1.0, 0.0, 1.0;
    cell.shape_gradients = jac.inverse().transpose() * ref_grad;
    const int index = static_cast<int>(cells_.size());
    cells_.push_back(cell);
    for (const auto& node : ref) {
      QuadraturePoint qp;
      qp.point = {p0.x + node.xi * (p1.x - p0.x) + node.eta * (p2.x - p0.x),
                  p0.y + node.xi * (p1.y - p0.y) + node.eta * (p2.y - p0.y)};
      qp.weight = node.weight * 2.0 * cell.measure;
      qp.cell = index;
      qp.shape = {1.0 - node.xi - node.eta, node.xi, node.eta};
      quadrature_.push_back(qp);
    }
  };

  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      add_triangle(vid(i, j), vid(i + 1, j), vid(i + 1, j + 1));
      add_triangle(vid(i, j), vid(i + 1, j + 1), vid(i, j + 1));
    }
  }
  assemble_fem_matrices();
}

void Space::build_spectral(int modes) {
  resolution_ = modes;
  n_dofs_ = modes;
  wavenumbers_.resize(modes);
  for (int k = 0; k < modes; ++k) wavenumbers_(k) = (k + 1) * std::numbers::pi;

  const int nq = kSpectralSubintervals * static_cast<int>(kGaussNodes.size());
  basis_table_.resize(nq, modes);
  derivative_table_.resize(nq, modes);
  const double h = 1.0 / kSpectralSubintervals;
  int q = 0;
  for (int c = 0; c < kSpectralSubintervals; ++c) {
    for (std::size_t g = 0; g < kGaussNodes.size(); ++g, ++q) {
      QuadraturePoint qp;
      qp.point = {(c + kGaussNodes[g]) * h, 0.0};
      qp.weight = kGaussWeights[g] * h;
      quadrature_.push_back(qp);
      for (int k = 0; k < modes; ++k) {
        const double kx = wavenumbers_(k) * qp.point.x;
        basis_table_(q, k) = std::numbers::sqrt2 * std::sin(kx);
        derivative_table_(q, k) = std::numbers::sqrt2 * wavenumbers_(k) * std::cos(kx);
      }
    }
  }

  Triplets m, a;
  for (int k = 0; k < modes; ++k) {
    m.emplace_back(k, k, 1.0);
    a.emplace_back(k, k, wavenumbers_(k) * wavenumbers_(k));
  }
  mass_ = from_triplets(modes, m);
  stiffness_ = from_triplets(modes, a);
  quadrature_weights_.resize(nq);
  for (int i = 0; i < nq; ++i) quadrature_weights_(i) = quadrature_[static_cast<std::size_t>(i)].weight;
}

void Space::assemble_fem_matrices() {
  Triplets m, a;
  const int d = dim();
  for (const auto& cell : cells_) {
    const int nv = cell.n_vertices;
    for (int i = 0; i < nv; ++i) {
      const int di = vertex_dof_[static_cast<std::size_t>(cell.vertices[static_cast<std::size_t>(i)])];
      if (di < 0) continue;
      for (int j = 0; j < nv; ++j) {
        const int dj =
            vertex_dof_[static_cast<std::size_t>(cell.vertices[static_cast<std::size_t>(j)])];
        if (dj < 0) continue;
        // P1 element mass: h/6·(1+δᵢⱼ) in 1D, |T|/12·(1+δᵢⱼ) in 2D
        const double mass = nv == 2 ? cell.measure / 6.0 * (i == j ? 2.0 : 1.0)
                                    : cell.measure / 12.0 * (i == j ? 2.0 : 1.0);
        const double stiff = cell.measure * cell.shape_gradients.col(i).head(d).dot(
                                                cell.shape_gradients.col(j).head(d));
        m.emplace_back(di, dj, mass);
        a.emplace_back(di, dj, stiff);
      }
    }
  }
  mass_ = from_triplets(n_dofs_, m);
  stiffness_ = from_triplets(n_dofs_, a);
  quadrature_weights_.resize(static_cast<Eigen::Index>(quadrature_.size()));
  for (std::size_t i = 0; i < quadrature_.size(); ++i) {
    quadrature_weights_(static_cast<Eigen::Index>(i)) = quadrature_[i].weight;
  }
}

Point Space::dof_point(Eigen::Index dof) const {
  if (!is_fem()) throw UnsupportedError("dof_point: spectral dofs have no coordinates");
  return vertices_[static_cast<std::size_t>(dof_vertex_[static_cast<std::size_t>(dof)])];
}

void Space::check_coefficients(const Eigen::VectorXd& c, const char* what) const {
  if (c.size() != n_dofs_) {
    throw ContractError(
        fmt::format("{}: coefficient vector has length {}, space {} has {} dofs", what, c.size(),
                    describe(), n_dofs_));
  }
}

void Space::check_spec(const NFunctionSpec& spec, const char* what) const {
  if (spec.dim() != dim()) {
    throw ContractError(fmt::format("{}: N-function dimension {} does not match space dimension {}",
                                    what, spec.dim(), dim()));
  }
}

double Space::evaluate(const Eigen::VectorXd& c, const Point& x) const {
  check_coefficients(c, "evaluate");
  auto value_at = [&](int vertex) {
    const int dof = vertex_dof_[static_cast<std::size_t>(vertex)];
    return dof < 0 ? 0.0 : c(dof);
  };
  switch (kind_) {
    case SpaceKind::Spectral1D: {
      double s = 0.0;
      for (Eigen::Index k = 0; k < n_dofs_; ++k) {
        s += c(k) * std::numbers::sqrt2 * std::sin(wavenumbers_(k) * x.x);
      }
      return s;
    }
    case SpaceKind::FemP1_1D: {
      const double h = 1.0 / resolution_;
      const int cell = std::clamp(static_cast<int>(std::floor(x.x / h)), 0, resolution_ - 1);
      const double s = x.x / h - cell;
      return (1.0 - s) * value_at(cell) + s * value_at(cell + 1);
    }
    case SpaceKind::FemP1_2D: {
      const int nx = resolution_;
      const int ny = resolution_y_;
      const int i = std::clamp(static_cast<int>(std::floor(x.x * nx)), 0, nx - 1);
      const int j = std::clamp(static_cast<int>(std::floor(x.y * ny)), 0, ny - 1);
      const double s = x.x * nx - i;
      const double t = x.y * ny - j;
      auto vid = [nx](int a, int b) { return b * (nx + 1) + a; };
      if (t <= s) {
        return (1.0 - s) * value_at(vid(i, j)) + (s - t) * value_at(vid(i + 1, j)) +
               t * value_at(vid(i + 1, j + 1));
      }
      return (1.0 - t) * value_at(vid(i, j)) + s * value_at(vid(i + 1, j + 1)) +
             (t - s) * value_at(vid(i, j + 1));
    }
  }
  return 0.0;
}

Eigen::VectorXd Space::evaluate_at_quadrature(const Eigen::VectorXd& c) const {
  check_coefficients(c, "evaluate_at_quadrature");
  if (!is_fem()) return basis_table_ * c;
  Eigen::VectorXd out(static_cast<Eigen::Index>(quadrature_.size()));
  for (std::size_t q = 0; q < quadrature_.size(); ++q) {
    const auto& qp = quadrature_[q];
    const auto& cell = cells_[static_cast<std::size_t>(qp.cell)];
    double s = 0.0;
    for (int a = 0; a < cell.n_vertices; ++a) {
      const int dof = vertex_dof_[static_cast<std::size_t>(cell.vertices[static_cast<std::size_t>(a)])];
      if (dof >= 0) s += c(dof) * qp.shape[static_cast<std::size_t>(a)];
    }
    out(static_cast<Eigen::Index>(q)) = s;
  }
  return out;
}

Eigen::VectorXd Space::load_vector(const ScalarFunction& f) const {
  Eigen::VectorXd fq(static_cast<Eigen::Index>(quadrature_.size()));
  for (std::size_t q = 0; q < quadrature_.size(); ++q) {
    fq(static_cast<Eigen::Index>(q)) = f(quadrature_[q].point);
  }
  if (!is_fem()) return basis_table_.transpose() * fq.cwiseProduct(quadrature_weights_);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(n_dofs_);
  for (std::size_t q = 0; q < quadrature_.size(); ++q) {
    const auto& qp = quadrature_[q];
    const auto& cell = cells_[static_cast<std::size_t>(qp.cell)];
    const double wf = qp.weight * fq(static_cast<Eigen::Index>(q));
    for (int a = 0; a < cell.n_vertices; ++a) {
      const int dof = vertex_dof_[static_cast<std::size_t>(cell.vertices[static_cast<std::size_t>(a)])];
      if (dof >= 0) b(dof) += wf * qp.shape[static_cast<std::size_t>(a)];
    }
  }
  return b;
}

CellField Space::gradient_field(const Eigen::VectorXd& c) const {
  check_coefficients(c, "gradient_field");
  if (!is_fem()) {
    return {(derivative_table_ * c).transpose(), quadrature_weights_};
  }
  const int d = dim();
  Eigen::MatrixXd values = Eigen::MatrixXd::Zero(d, static_cast<Eigen::Index>(cells_.size()));
  Eigen::VectorXd measures(static_cast<Eigen::Index>(cells_.size()));
  for (std::size_t k = 0; k < cells_.size(); ++k) {
    const auto& cell = cells_[k];
    const auto col = static_cast<Eigen::Index>(k);
    measures(col) = cell.measure;
    for (int a = 0; a < cell.n_vertices; ++a) {
      const int dof = vertex_dof_[static_cast<std::size_t>(cell.vertices[static_cast<std::size_t>(a)])];
      if (dof >= 0) values.col(col) += c(dof) * cell.shape_gradients.col(a).head(d);
    }
  }
  return {std::move(values), std::move(measures)};
}

Eigen::VectorXd Space::nonlinear_residual(const NFunctionSpec& spec,
                                          const Eigen::VectorXd& c) const {
  check_coefficients(c, "nonlinear_residual");
  check_spec(spec, "nonlinear_residual");
  if (!is_fem()) {
    if (auto k = spec.constant_stress_jacobian()) return (*k)(0, 0) * (stiffness_ * c);
    const Eigen::VectorXd grad = derivative_table_ * c;
    Eigen::VectorXd weighted(grad.size());
    SmallVector xi(1);
    for (Eigen::Index q = 0; q < grad.size(); ++q) {
      xi(0) = grad(q);
      weighted(q) = quadrature_weights_(q) * spec.stress(xi)(0);
    }
    return derivative_table_.transpose() * weighted;
  }
  const int d = dim();
  Eigen::VectorXd b = Eigen::VectorXd::Zero(n_dofs_);
  const CellField grad = gradient_field(c);
  for (std::size_t k = 0; k < cells_.size(); ++k) {
    const auto& cell = cells_[k];
    const SmallVector s = spec.stress(grad.value(static_cast<Eigen::Index>(k)));
    for (int a = 0; a < cell.n_vertices; ++a) {
      const int dof = vertex_dof_[static_cast<std::size_t>(cell.vertices[static_cast<std::size_t>(a)])];
      if (dof >= 0) b(dof) += cell.measure * s.dot(cell.shape_gradients.col(a).head(d));
    }
  }
  return b;
}

SparseMatrix Space::nonlinear_jacobian(const NFunctionSpec& spec, const Eigen::VectorXd& c) const {
  check_coefficients(c, "nonlinear_jacobian");
  check_spec(spec, "nonlinear_jacobian");
  if (!is_fem()) {
    if (auto k = spec.constant_stress_jacobian()) return SparseMatrix((*k)(0, 0) * stiffness_);
    const Eigen::VectorXd grad = derivative_table_ * c;
    Eigen::VectorXd weights(grad.size());
    SmallVector xi(1);
    for (Eigen::Index q = 0; q < grad.size(); ++q) {
      xi(0) = grad(q);
      weights(q) = quadrature_weights_(q) * spec.stress_jacobian(xi)(0, 0);
    }
    const Eigen::MatrixXd dense =
        derivative_table_.transpose() * weights.asDiagonal() * derivative_table_;
    return dense.sparseView(0.0, 0.0);
  }
  const int d = dim();
  Triplets t;
  t.reserve(cells_.size() * 9);
  const CellField grad = gradient_field(c);
  for (std::size_t k = 0; k < cells_.size(); ++k) {
    const auto& cell = cells_[k];
    const SmallMatrix dsigma = spec.stress_jacobian(grad.value(static_cast<Eigen::Index>(k)));
    for (int i = 0; i < cell.n_vertices; ++i) {
      const int di = vertex_dof_[static_cast<std::size_t>(cell.vertices[static_cast<std::size_t>(i)])];
      if (di < 0) continue;
      for (int j = 0; j < cell.n_vertices; ++j) {
        const int dj =
            vertex_dof_[static_cast<std::size_t>(cell.vertices[static_cast<std::size_t>(j)])];
        if (dj < 0) continue;
        const SmallVector gi = cell.shape_gradients.col(i).head(d);
        const SmallVector gj = cell.shape_gradients.col(j).head(d);
        t.emplace_back(di, dj, cell.measure * gi.dot(dsigma * gj));
      }
    }
  }
  return from_triplets(n_dofs_, t);
}

double Space::potential(const NFunctionSpec& spec, const Eigen::VectorXd& c) const {
  check_spec(spec, "potential");
  return modular(spec, gradient_field(c));
}

double Space::l2_norm(const Eigen::VectorXd& c) const {
  check_coefficients(c, "l2_norm");
  return std::sqrt(std::max(0.0, c.dot(mass_ * c)));
}

double Space::h1_seminorm(const Eigen::VectorXd& c) const {
  check_coefficients(c, "h1_seminorm");
  return std::sqrt(std::max(0.0, c.dot(stiffness_ * c)));
}

double Space::l2_error(const Eigen::VectorXd& c, const ScalarFunction& exact) const {
  const Eigen::VectorXd uh = evaluate_at_quadrature(c);
  double sum = 0.0;
  for (std::size_t q = 0; q < quadrature_.size(); ++q) {
    const double diff = uh(static_cast<Eigen::Index>(q)) - exact(quadrature_[q].point);
    sum += quadrature_[q].weight * diff * diff;
  }
  return std::sqrt(sum);
}

Field::Field(SpaceHandle s, Eigen::VectorXd c) : space(std::move(s)), coefficients(std::move(c)) {
  if (!space) throw ContractError("Field: null space");
  if (coefficients.size() != space->n_dofs()) {
    throw ContractError(fmt::format("Field: {} coefficients for {} dofs", coefficients.size(),
                                    space->n_dofs()));
  }
}

Field Field::zero(SpaceHandle space) {
  const auto n = space->n_dofs();
  return {std::move(space), Eigen::VectorXd::Zero(n)};
}

const SparseMatrix& assemble_mass(const Space& space) { return space.mass(); }
const SparseMatrix& assemble_stiffness(const Space& space) { return space.stiffness(); }

CellField gradient_per_cell(const Field& u) {
  if (!u.space->is_fem()) {
    throw UnsupportedError("gradient_per_cell: spectral space; use Space::gradient_field");
  }
  return u.space->gradient_field(u.coefficients);
}

Eigen::VectorXd nonlinear_residual(const NFunctionSpec& spec, const Field& u) {
  return u.space->nonlinear_residual(spec, u.coefficients);
}

SparseMatrix nonlinear_jacobian(const NFunctionSpec& spec, const Field& u) {
  return u.space->nonlinear_jacobian(spec, u.coefficients);
}

Field l2_project(const SpaceHandle& space, const ScalarFunction& f) {
  Eigen::VectorXd b = space->load_vector(f);
  if (!space->is_fem()) return {space, std::move(b)};
  Eigen::SimplicialLDLT<SparseMatrix> solver(space->mass());
  if (solver.info() != Eigen::Success) throw NumericError("l2_project: mass factorization failed");
  return {space, solver.solve(b)};
}

double hr_dual_norm(const Space& space, const Eigen::VectorXd& c, int r) {
  if (space.kind() != SpaceKind::Spectral1D) {
    throw UnsupportedError("hr_dual_norm: only available on the spectral sine space");
  }
  if (r < 2) throw ContractError(fmt::format("hr_dual_norm: r must be >= 2, got {}", r));
  if (c.size() != space.n_dofs()) throw ContractError("hr_dual_norm: coefficient length mismatch");
  double sum = 0.0;
  for (Eigen::Index k = 0; k < c.size(); ++k) {
    const double k2 = space.wavenumbers()(k) * space.wavenumbers()(k);
    double weight = 0.0;
    double power = 1.0;
    for (int j = 0; j <= r; ++j, power *= k2) weight += power;
    sum += c(k) * c(k) / weight;
  }
  return std::sqrt(sum);
}

double hr_dual_norm(const Field& w, int r) { return hr_dual_norm(*w.space, w.coefficients, r); }

void write_field_csv(std::ostream& os, const Field& u) {
  const Space& s = *u.space;
  switch (s.kind()) {
    case SpaceKind::Spectral1D:
      os << "mode,wavenumber,value\n";
      for (Eigen::Index k = 0; k < s.n_dofs(); ++k) {
        fmt::print(os, "{},{:.17g},{:.17g}\n", k + 1, s.wavenumbers()(k), u.coefficients(k));
      }
      break;
    case SpaceKind::FemP1_1D:
      os << "x,value\n";
      for (Eigen::Index i = 0; i < s.n_dofs(); ++i) {
        fmt::print(os, "{:.17g},{:.17g}\n", s.dof_point(i).x, u.coefficients(i));
      }
      break;
    case SpaceKind::FemP1_2D:
      os << "x,y,value\n";
      for (Eigen::Index i = 0; i < s.n_dofs(); ++i) {
        const Point p = s.dof_point(i);
        fmt::print(os, "{:.17g},{:.17g},{:.17g}\n", p.x, p.y, u.coefficients(i));
      }
      break;
  }
}

void write_structured_grid(std::ostream& os, const Field& u) {
  const Space& s = *u.space;
  if (s.kind() != SpaceKind::FemP1_2D) {
    throw UnsupportedError("write_structured_grid: 2D finite element fields only");
  }
  const int nx = s.resolution();
  const int ny = s.resolution_y();
  for (int j = 0; j <= ny; ++j) {
    for (int i = 0; i <= nx; ++i) {
      const auto v = static_cast<std::size_t>(j * (nx + 1) + i);
      const int dof = s.vertex_dofs()[v];
      fmt::print(os, "{:.17g} {:.17g} {:.17g}\n", s.vertices()[v].x, s.vertices()[v].y,
                 dof < 0 ? 0.0 : u.coefficients(dof));
    }
    if (j < ny) os << '\n';
  }
}

}  // namespace elastodyn
