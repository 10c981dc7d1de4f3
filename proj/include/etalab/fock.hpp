#pragma once

// Occupation-number bases for spinful fermions on an open chain, and the
// sparse operators acting on them.
//
// Conventions:
//   * sites are 0-based, 0 <= i < M, M <= 16
//   * Jordan-Wigner mode index = 2 * site + (0 for up, 1 for down); the sign
//     of c_mode / c^dag_mode is (-1)^(number of occupied modes below it)
//   * states inside a basis are ordered ascending by (up_mask, down_mask)

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <complex>
#include <compare>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace etalab {

using cplx = std::complex<double>;
using CVector = Eigen::VectorXcd;
using CMatrix = Eigen::MatrixXcd;
using SparseMat = Eigen::SparseMatrix<cplx, Eigen::RowMajor>;

inline constexpr int kMaxSites = 16;

enum class Spin { up = 0, down = 1 };

struct FockState {
  std::uint32_t up = 0;
  std::uint32_t down = 0;

  bool occupied(int site, Spin spin) const {
    return (((spin == Spin::up ? up : down) >> site) & 1U) != 0;
  }
  int n_up() const;
  int n_down() const;

  auto operator<=>(const FockState&) const = default;
};

struct Sector {
  int n_up = 0;
  int n_down = 0;
  auto operator<=>(const Sector&) const = default;
};

/// An ordered set of Fock states: either one (N_up, N_down) sector or the
/// whole 4^M-dimensional Fock space. Immutable once built.
class SectorBasis {
 public:
  static SectorBasis sector(int sites, int n_up, int n_down);
  static SectorBasis full(int sites);
  /// Zero-dimensional basis standing for an unreachable particle number
  /// (e.g. the image of annihilation from an empty sector).
  static SectorBasis empty_image(int sites, int n_up, int n_down);

  int sites() const { return sites_; }
  std::size_t size() const { return states_.size(); }
  bool is_full() const { return !sector_.has_value(); }
  /// Sector label; std::nullopt for the full Fock space.
  const std::optional<Sector>& sector() const { return sector_; }

  const FockState& state(std::size_t k) const { return states_[k]; }
  std::span<const FockState> states() const { return states_; }
  std::optional<std::size_t> index_of(const FockState& s) const;

  /// Same Hilbert space (same M and same sector label, or both full).
  bool same_space(const SectorBasis& other) const {
    return sites_ == other.sites_ && sector_ == other.sector_;
  }

  std::string label() const;

 private:
  SectorBasis(int sites, std::optional<Sector> sector, std::vector<FockState> states)
      : sites_(sites), sector_(sector), states_(std::move(states)) {}

  int sites_;
  std::optional<Sector> sector_;
  std::vector<FockState> states_;
};

using BasisPtr = std::shared_ptr<const SectorBasis>;

/// Throws DomainError unless 0 <= n_up, n_down <= M and 1 <= M <= kMaxSites.
BasisPtr enumerate_sector(int sites, int n_up, int n_down);
BasisPtr full_fock_space(int sites);

/// Basis reached from `basis` by adding (d_up, d_down) particles. For the
/// full space this is the full space itself.
BasisPtr shifted_basis(const BasisPtr& basis, int d_up, int d_down);

/// Complex sparse matrix mapping vectors over `domain` to vectors over
/// `codomain`.
class SparseOperator {
 public:
  SparseOperator(BasisPtr domain, BasisPtr codomain, SparseMat matrix);

  static SparseOperator identity(const BasisPtr& basis);
  static SparseOperator zero(const BasisPtr& domain, const BasisPtr& codomain);
  static SparseOperator diagonal(const BasisPtr& basis, const Eigen::VectorXd& values);

  const BasisPtr& domain() const { return domain_; }
  const BasisPtr& codomain() const { return codomain_; }
  const SparseMat& matrix() const { return matrix_; }
  Eigen::Index rows() const { return matrix_.rows(); }
  Eigen::Index cols() const { return matrix_.cols(); }
  bool square() const { return domain_->same_space(*codomain_); }
  /// The image particle-number sector does not exist, so this is the zero map
  /// into a zero-dimensional space.
  bool empty_image() const { return codomain_->size() == 0; }

  SparseOperator adjoint() const;
  CMatrix dense() const;
  double max_abs() const;
  bool is_diagonal() const;
  /// Diagonal entries as a real vector (imaginary parts must vanish).
  Eigen::VectorXd real_diagonal() const;

  /// max |A - A^dag| entrywise.
  double hermiticity_defect() const;
  bool hermitian() const { return hermitian_; }
  /// Verifies Hermiticity to `tol` and sets the flag; DomainError otherwise.
  SparseOperator& mark_hermitian(double tol = 1e-12);

 private:
  BasisPtr domain_;
  BasisPtr codomain_;
  SparseMat matrix_;
  bool hermitian_ = false;
};

/// Composition `a * b` = apply b first, then a.
SparseOperator operator*(const SparseOperator& a, const SparseOperator& b);
SparseOperator operator+(const SparseOperator& a, const SparseOperator& b);
SparseOperator operator-(const SparseOperator& a, const SparseOperator& b);
SparseOperator operator*(cplx s, const SparseOperator& a);
SparseOperator commutator(const SparseOperator& a, const SparseOperator& b);
SparseOperator anticommutator(const SparseOperator& a, const SparseOperator& b);

/// Amplitudes over a basis.
struct StateVector {
  BasisPtr basis;
  CVector amplitudes;

  static StateVector basis_state(const BasisPtr& basis, const FockState& s);
  std::size_t size() const { return static_cast<std::size_t>(amplitudes.size()); }
  double norm() const { return amplitudes.norm(); }
  void normalize();
  bool is_normalized(double tol = 1e-10) const { return std::abs(norm() - 1.0) <= tol; }
};

/// Trace-one Hermitian matrix over a basis (checked by callers, not on
/// every mutation).
struct DensityMatrix {
  BasisPtr basis;
  CMatrix matrix;

  static DensityMatrix pure(const StateVector& psi);
  static DensityMatrix maximally_mixed(const BasisPtr& basis);

  std::size_t size() const { return static_cast<std::size_t>(matrix.rows()); }
  cplx trace() const { return matrix.trace(); }
  double hermiticity_defect() const;
  double min_eigenvalue() const;
  /// rho <- (rho + rho^dag) / 2
  void hermitize();
};

/// Sparse matrix-vector product; ShapeError if the operator's domain is not
/// the vector's basis.
StateVector apply(const SparseOperator& op, const StateVector& psi);

/// c^dag_{spin,site} (dagger) or c_{spin,site}, with Jordan-Wigner signs.
SparseOperator build_fermion_op(const BasisPtr& basis, int site, Spin spin, bool dagger);

SparseOperator build_number_op(const BasisPtr& basis, int site, Spin spin);

/// Site-resolved and total eta-pairing operators:
///   eta+_i = (-1)^i c^dag_{up,i} c^dag_{down,i},  eta-_i = (eta+_i)^dag,
///   etaz_i = (n_up,i + n_down,i - 1) / 2.
/// `raise` maps basis -> (n_up+1, n_down+1), `lower` maps basis ->
/// (n_up-1, n_down-1); `z` and `pair_number` (= eta+ eta-) are square.
struct EtaOperators {
  std::vector<SparseOperator> raise;
  std::vector<SparseOperator> lower;
  std::vector<SparseOperator> z;
  SparseOperator raise_total;
  SparseOperator lower_total;
  SparseOperator z_total;
  SparseOperator pair_number;
};

EtaOperators build_eta_ops(const BasisPtr& basis);

/// s^z_i = n_up,i - n_down,i and S^z = sum_i s^z_i (no factor 1/2).
struct SpinOperators {
  std::vector<SparseOperator> sz;
  SparseOperator sz_total;
};

SpinOperators build_spin_ops(const BasisPtr& basis);

/// c^dag_{up,i} c_{down,i} (raise) or c^dag_{down,i} c_{up,i}.
SparseOperator build_spin_flip(const BasisPtr& basis, int site, bool raise);

/// eta+_i eta-_j as a square operator on `basis`.
SparseOperator build_pair_hop(const BasisPtr& basis, int i, int j);

/// c^dag_{up,j} c^dag_{down,j} c_{down,k} c_{up,k} built from four single
/// fermion operators (no staggered phase).
SparseOperator build_doublon_transfer(const BasisPtr& basis, int j, int k);

}  // namespace etalab
