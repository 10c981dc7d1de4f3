#pragma once

#include "etalab/fock.hpp"
#include "etalab/model.hpp"

#include <optional>
#include <string>
#include <vector>

namespace etalab {

/// (eta+)^N |vac>, normalized, in sector (N, N).
StateVector yang_state(int sites, int n);

struct CommutatorEntry {
  std::string label;
  /// max-abs entry of the checked combination
  double norm = 0.0;
  /// true when norm <= tol
  bool pass = false;
};

struct CommutatorReport {
  double tol = 0.0;
  std::vector<CommutatorEntry> entries;
  /// mu in [H, eta+] = mu eta+, fitted by Frobenius projection
  std::optional<double> mu;
  /// max |[H, eta+] - mu eta+|
  std::optional<double> ladder_residual;

  const CommutatorEntry& at(const std::string& label) const;
  /// Every entry passes.
  bool all_pass() const;
};

/// Dense checks on the full Fock space of M <= 3 sites: both SU(2) algebras,
/// cross-family commutation, [H, A] = 0 for A in {eta+ eta-, eta^z, S^z} and
/// the ladder constant mu. DomainError for M > 3.
CommutatorReport algebra_check(int sites, double U, double tol = 1e-12);

/// max_j |[L_j, A]| for A in {eta+, eta-, eta^z, S^z, H}. The jumps and H
/// must act on the full Fock space.
CommutatorReport jump_symmetry_check(const JumpSet& jumps, const SparseOperator& H, double tol = 1e-12);

/// Matrix of the Lindblad generator on column-stacked vec(rho), where
/// vec(rho)[a + d b] = rho(a, b). CapacityError when d^2 > 4096.
CMatrix liouvillian_dense(const SparseOperator& H, const JumpSet& jumps);

CVector vectorize(const CMatrix& rho);
CMatrix unvectorize(const CVector& v, Eigen::Index dim);

struct LiouvillianSpectrum {
  /// sorted by descending real part, then ascending imaginary part
  std::vector<cplx> eigenvalues;
  double max_real = 0.0;
  /// singular values below 1e-9 * largest
  std::size_t kernel_dim = 0;
  /// eigenvalues with |lambda| < 1e-9
  std::size_t kernel_eigen_count = 0;
  /// distinct nonzero Im(lambda) among eigenvalues with |Re| < 1e-10
  std::vector<double> imaginary;
  /// least-squares spacing s with Im = k s, k integer; 0 without a ladder
  double ladder_spacing = 0.0;
  double ladder_residual = 0.0;
};

LiouvillianSpectrum steady_space_analysis(const CMatrix& liouvillian);

}  // namespace etalab
