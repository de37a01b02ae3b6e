#pragma once

#include "elastodyn/nfunction.hpp"
#include "elastodyn/orlicz.hpp"

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <array>
#include <functional>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

namespace elastodyn {

using SparseMatrix = Eigen::SparseMatrix<double>;

enum class SpaceKind { FemP1_1D, FemP1_2D, Spectral1D };

std::string to_string(SpaceKind kind);

struct Point {
  double x = 0.0;
  double y = 0.0;
};

using ScalarFunction = std::function<double(const Point&)>;

/// A discrete subspace of H¹₀ on Ω = (0,1) or (0,1)² with homogeneous Dirichlet
/// conditions: P1 finite elements on a uniform mesh (boundary dofs eliminated),
/// or the sine basis √2·sin(kπx), k = 1..m.
///
/// Spaces are built once and shared immutably (mass and stiffness matrices are
/// assembled at construction).
class Space {
 public:
  struct Cell {
    std::array<int, 3> vertices{-1, -1, -1};
    int n_vertices = 0;
    double measure = 0.0;
    /// Column a holds the (constant) gradient of the hat of local vertex a.
    Eigen::Matrix<double, 2, 3> shape_gradients = Eigen::Matrix<double, 2, 3>::Zero();
  };

  /// Quadrature nodes with the basis functions that are nonzero there.
  struct QuadraturePoint {
    Point point;
    double weight = 0.0;
    int cell = -1;                    // FEM only
    std::array<double, 3> shape{};    // FEM only: barycentric values at the node
  };

  SpaceKind kind() const noexcept { return kind_; }
  /// Spatial dimension d of Ω.
  int dim() const noexcept { return kind_ == SpaceKind::FemP1_2D ? 2 : 1; }
  Eigen::Index n_dofs() const noexcept { return n_dofs_; }
  /// n_cells (1D FEM), nx (2D FEM) or m (spectral).
  int resolution() const noexcept { return resolution_; }
  int resolution_y() const noexcept { return resolution_y_; }
  bool is_fem() const noexcept { return kind_ != SpaceKind::Spectral1D; }
  double domain_measure() const noexcept { return 1.0; }
  std::string describe() const;

  const std::vector<Cell>& cells() const noexcept { return cells_; }
  const std::vector<Point>& vertices() const noexcept { return vertices_; }
  /// Dof index of each vertex; −1 on the boundary.
  const std::vector<int>& vertex_dofs() const noexcept { return vertex_dof_; }
  Point dof_point(Eigen::Index dof) const;
  /// kπ for k = 1..m (spectral only).
  const Eigen::VectorXd& wavenumbers() const noexcept { return wavenumbers_; }
  const std::vector<QuadraturePoint>& quadrature() const noexcept { return quadrature_; }

  const SparseMatrix& mass() const noexcept { return mass_; }
  const SparseMatrix& stiffness() const noexcept { return stiffness_; }

  /// u_h(x) for a coefficient vector.
  double evaluate(const Eigen::VectorXd& coefficients, const Point& x) const;
  /// u_h at every quadrature node, in quadrature() order.
  Eigen::VectorXd evaluate_at_quadrature(const Eigen::VectorXd& coefficients) const;
  /// ∫ f φⱼ for every basis function φⱼ.
  Eigen::VectorXd load_vector(const ScalarFunction& f) const;

  /// Gradient of u_h as a CellField: exact per-cell gradients for FEM, values at
  /// the quadrature nodes (weights as measures) for the spectral space.
  CellField gradient_field(const Eigen::VectorXd& coefficients) const;

  /// B(u)ⱼ = ∫ σ(∇u_h)·∇φⱼ.
  Eigen::VectorXd nonlinear_residual(const NFunctionSpec& spec,
                                     const Eigen::VectorXd& coefficients) const;
  /// Jᵢⱼ = ∫ ∇φⱼᵀ Dσ(∇u_h) ∇φᵢ.
  SparseMatrix nonlinear_jacobian(const NFunctionSpec& spec,
                                  const Eigen::VectorXd& coefficients) const;
  /// Φ(u) = ∫ φ(∇u_h).
  double potential(const NFunctionSpec& spec, const Eigen::VectorXd& coefficients) const;

  double l2_norm(const Eigen::VectorXd& coefficients) const;
  double h1_seminorm(const Eigen::VectorXd& coefficients) const;
  /// ‖u_h − g‖_{L²(Ω)} by quadrature.
  double l2_error(const Eigen::VectorXd& coefficients, const ScalarFunction& exact) const;

 private:
  friend std::shared_ptr<const Space> build_space(SpaceKind, int, int);
  Space() = default;

  void build_fem_1d(int n_cells);
  void build_fem_2d(int nx, int ny);
  void build_spectral(int modes);
  void assemble_fem_matrices();
  void check_coefficients(const Eigen::VectorXd& c, const char* what) const;
  void check_spec(const NFunctionSpec& spec, const char* what) const;

  SpaceKind kind_ = SpaceKind::FemP1_1D;
  int resolution_ = 0;
  int resolution_y_ = 0;
  Eigen::Index n_dofs_ = 0;

  std::vector<Point> vertices_;
  std::vector<int> vertex_dof_;
  std::vector<int> dof_vertex_;
  std::vector<Cell> cells_;

  Eigen::VectorXd wavenumbers_;
  Eigen::MatrixXd basis_table_;       // spectral: Q × m values
  Eigen::MatrixXd derivative_table_;  // spectral: Q × m derivatives

  std::vector<QuadraturePoint> quadrature_;
  Eigen::VectorXd quadrature_weights_;
  SparseMatrix mass_;
  SparseMatrix stiffness_;
};

using SpaceHandle = std::shared_ptr<const Space>;

/// `resolution` is n_cells (1D FEM), nx (2D FEM) or the mode count (spectral);
/// `resolution_y` is ny for 2D FEM (defaults to nx). Throws ContractError for
/// resolution < 1.
SpaceHandle build_space(SpaceKind kind, int resolution, int resolution_y = 0);

/// A discrete function: coefficients over a space.
struct Field {
  SpaceHandle space;
  Eigen::VectorXd coefficients;

  static Field zero(SpaceHandle space);
  Field() = default;
  Field(SpaceHandle space, Eigen::VectorXd coefficients);
};

const SparseMatrix& assemble_mass(const Space& space);
const SparseMatrix& assemble_stiffness(const Space& space);

/// Exact per-cell gradient of a P1 function. UnsupportedError on spectral spaces
/// (use Space::gradient_field for the sampled variant).
CellField gradient_per_cell(const Field& u);

Eigen::VectorXd nonlinear_residual(const NFunctionSpec& spec, const Field& u);
SparseMatrix nonlinear_jacobian(const NFunctionSpec& spec, const Field& u);

/// L²-orthogonal projection: solves M c = (∫ f φⱼ)ⱼ.
Field l2_project(const SpaceHandle& space, const ScalarFunction& f);

/// (H^r)* norm on the sine basis: (Σ c_k² / W_k)^{1/2}, W_k = Σ_{j=0}^{r} (kπ)^{2j}.
/// Spectral spaces only, r ≥ 2.
double hr_dual_norm(const Space& space, const Eigen::VectorXd& coefficients, int r);
double hr_dual_norm(const Field& w, int r);

/// CSV with dof coordinates and value (FEM: `x[,y],value`; spectral: `mode,wavenumber,value`).
void write_field_csv(std::ostream& os, const Field& u);
/// 2D FEM: whitespace-separated `x y value` rows over all vertices (boundary
/// included), one blank line between grid rows.
void write_structured_grid(std::ostream& os, const Field& u);

}  // namespace elastodyn
