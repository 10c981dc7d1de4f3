#pragma once

#include "etalab/fock.hpp"

#include <string>
#include <vector>

namespace etalab {

/// C_ij = <eta+_i eta-_j>.
struct EtaCorrMatrix {
  CMatrix c;

  int sites() const { return static_cast<int>(c.rows()); }
  /// sum_ij C_ij = <eta+ eta->
  cplx total() const { return c.sum(); }
  double hermiticity_defect() const { return (c - c.adjoint()).cwiseAbs().maxCoeff(); }
  /// max over i != j, k != l of | |C_ij| - |C_kl| |
  double offdiag_spread() const;
  /// Mean of C_ij over i != j.
  cplx offdiag_mean() const;
};

/// Operators shared by every measurement on one basis, built once.
class ObservableKit {
 public:
  explicit ObservableKit(BasisPtr basis);

  const BasisPtr& basis() const { return basis_; }
  int sites() const { return basis_->sites(); }
  const EtaOperators& eta() const { return eta_; }
  const SpinOperators& spin() const { return spin_; }
  /// eta+_i eta-_j, square on the basis.
  const SparseOperator& pair_hop(int i, int j) const { return pair_hop_[i * sites() + j]; }
  /// c^dag_{up,j} c^dag_{down,j} c_{down,k} c_{up,k}
  const SparseOperator& doublon_transfer(int j, int k) const { return transfer_[j * sites() + k]; }
  /// Diagonal of n_up,i n_down,i for every basis state.
  const Eigen::VectorXd& doublon_diag(int i) const { return doublon_diag_[i]; }
  const Eigen::VectorXd& n_up_total() const { return n_up_; }
  const Eigen::VectorXd& n_down_total() const { return n_down_; }

 private:
  BasisPtr basis_;
  EtaOperators eta_;
  SpinOperators spin_;
  std::vector<SparseOperator> pair_hop_;
  std::vector<SparseOperator> transfer_;
  std::vector<Eigen::VectorXd> doublon_diag_;
  Eigen::VectorXd n_up_, n_down_;
};

/// <A> = Tr(rho A) for a square operator.
cplx expectation(const SparseOperator& op, const DensityMatrix& rho);
cplx expectation(const SparseOperator& op, const StateVector& psi);

EtaCorrMatrix eta_correlation_matrix(const ObservableKit& kit, const StateVector& psi);
EtaCorrMatrix eta_correlation_matrix(const ObservableKit& kit, const DensityMatrix& rho);

/// Mean of C_{i,i+j} over 0 <= i < M - j.
cplx distance_averaged_corr(const EtaCorrMatrix& c, int j);

struct ConservedSet {
  double eta_pair = 0.0;
  double eta_z = 0.0;
  double s_z = 0.0;
  double n_up = 0.0;
  double n_down = 0.0;
};

ConservedSet conserved_set(const ObservableKit& kit, const StateVector& psi);
ConservedSet conserved_set(const ObservableKit& kit, const DensityMatrix& rho);

/// D(q_n), q_n a = 2 pi n / M, from the doublon two-point matrix
/// T_jk = <c^dag_{up,j} c^dag_{down,j} c_{down,k} c_{up,k}>.
struct StructureFactor {
  std::vector<double> qa;
  std::vector<double> values;
};

CMatrix doublon_two_point(const ObservableKit& kit, const StateVector& psi);
CMatrix doublon_two_point(const ObservableKit& kit, const DensityMatrix& rho);
StructureFactor structure_factor_from_two_point(const CMatrix& t);
StructureFactor structure_factor(const ObservableKit& kit, const StateVector& psi);
StructureFactor structure_factor(const ObservableKit& kit, const DensityMatrix& rho);

/// <n_up,i n_down,i> per site.
Eigen::VectorXd double_occupancy(const ObservableKit& kit, const StateVector& psi);
Eigen::VectorXd double_occupancy(const ObservableKit& kit, const DensityMatrix& rho);

enum class ProjectionKind { spin, doublon };

/// Raised when a projected block carries (numerically) no weight.
class DegenerateProjection : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// P rho P restricted to basis states with every site singly occupied (spin)
/// or no singly occupied site (doublon), renormalized to unit trace. Rows
/// follow descending binary strings, site 0 leftmost: spin up = 1, down = 0;
/// doublon = 1, empty = 0.
struct ProjectedBlock {
  ProjectionKind kind;
  std::vector<std::string> labels;
  CMatrix matrix;
  double trace_before = 0.0;
};

ProjectedBlock project_sector_matrix(const DensityMatrix& rho, ProjectionKind kind);

}  // namespace etalab
