#include "etalab/fock.hpp"

#include "etalab/errors.hpp"

#include <algorithm>
#include <bit>
#include <sstream>

namespace etalab {

namespace {

std::vector<std::uint32_t> masks_with_popcount(int sites, int count) {
  std::vector<std::uint32_t> out;
  const std::uint32_t limit = 1U << sites;
  for (std::uint32_t m = 0; m < limit; ++m) {
    if (std::popcount(m) == count) out.push_back(m);
  }
  return out;
}

void check_sites(int sites) {
  if (sites < 1 || sites > kMaxSites) {
    throw DomainError("site count " + std::to_string(sites) + " outside [1, " +
                      std::to_string(kMaxSites) + "]");
  }
}

// Number of occupied Jordan-Wigner modes strictly below (site, spin).
int modes_below(const FockState& s, int site, Spin spin) {
  const std::uint32_t below = (1U << site) - 1U;
  int n = std::popcount(s.up & below) + std::popcount(s.down & below);
  if (spin == Spin::down && s.occupied(site, Spin::up)) ++n;
  return n;
}

void require_same_space(const SectorBasis& a, const SectorBasis& b, const char* what) {
  if (!a.same_space(b)) {
    throw ShapeError(std::string(what) + ": basis mismatch (" + a.label() + " vs " + b.label() + ")");
  }
}

void check_site(const BasisPtr& basis, int site) {
  if (site < 0 || site >= basis->sites()) {
    throw DomainError("site " + std::to_string(site) + " outside chain of " +
                      std::to_string(basis->sites()) + " sites");
  }
}

}  // namespace

int FockState::n_up() const { return std::popcount(up); }
int FockState::n_down() const { return std::popcount(down); }

SectorBasis SectorBasis::sector(int sites, int n_up, int n_down) {
  check_sites(sites);
  if (n_up < 0 || n_up > sites || n_down < 0 || n_down > sites) {
    throw DomainError("particle numbers (" + std::to_string(n_up) + ", " +
                      std::to_string(n_down) + ") outside [0, " + std::to_string(sites) + "]");
  }
  const auto ups = masks_with_popcount(sites, n_up);
  const auto downs = masks_with_popcount(sites, n_down);
  std::vector<FockState> states;
  states.reserve(ups.size() * downs.size());
  for (auto u : ups) {
    for (auto d : downs) states.push_back({u, d});
  }
  return SectorBasis(sites, Sector{n_up, n_down}, std::move(states));
}

SectorBasis SectorBasis::full(int sites) {
  check_sites(sites);
  if (sites > 8) throw CapacityError("full Fock space limited to M <= 8");
  const std::uint32_t limit = 1U << sites;
  std::vector<FockState> states;
  states.reserve(std::size_t{limit} * limit);
  for (std::uint32_t u = 0; u < limit; ++u) {
    for (std::uint32_t d = 0; d < limit; ++d) states.push_back({u, d});
  }
  return SectorBasis(sites, std::nullopt, std::move(states));
}

SectorBasis SectorBasis::empty_image(int sites, int n_up, int n_down) {
  return SectorBasis(sites, Sector{n_up, n_down}, {});
}

std::optional<std::size_t> SectorBasis::index_of(const FockState& s) const {
  auto it = std::lower_bound(states_.begin(), states_.end(), s);
  if (it == states_.end() || *it != s) return std::nullopt;
  return static_cast<std::size_t>(it - states_.begin());
}

std::string SectorBasis::label() const {
  std::ostringstream os;
  os << "M=" << sites_;
  if (sector_) {
    os << " (" << sector_->n_up << "," << sector_->n_down << ")";
  } else {
    os << " full";
  }
  return os.str();
}

BasisPtr enumerate_sector(int sites, int n_up, int n_down) {
  return std::make_shared<const SectorBasis>(SectorBasis::sector(sites, n_up, n_down));
}

BasisPtr full_fock_space(int sites) {
  return std::make_shared<const SectorBasis>(SectorBasis::full(sites));
}

BasisPtr shifted_basis(const BasisPtr& basis, int d_up, int d_down) {
  if (basis->is_full()) return basis;
  const int m = basis->sites();
  const int nu = basis->sector()->n_up + d_up;
  const int nd = basis->sector()->n_down + d_down;
  if (nu < 0 || nu > m || nd < 0 || nd > m) {
    return std::make_shared<const SectorBasis>(SectorBasis::empty_image(m, nu, nd));
  }
  return enumerate_sector(m, nu, nd);
}

// --- SparseOperator --------------------------------------------------------

SparseOperator::SparseOperator(BasisPtr domain, BasisPtr codomain, SparseMat matrix)
    : domain_(std::move(domain)), codomain_(std::move(codomain)), matrix_(std::move(matrix)) {
  if (matrix_.rows() != static_cast<Eigen::Index>(codomain_->size()) ||
      matrix_.cols() != static_cast<Eigen::Index>(domain_->size())) {
    throw ShapeError("operator matrix does not match its bases");
  }
  matrix_.prune(cplx(0.0));
  matrix_.makeCompressed();
}

SparseOperator SparseOperator::identity(const BasisPtr& basis) {
  SparseMat m(basis->size(), basis->size());
  m.setIdentity();
  return SparseOperator(basis, basis, std::move(m));
}

SparseOperator SparseOperator::zero(const BasisPtr& domain, const BasisPtr& codomain) {
  return SparseOperator(domain, codomain, SparseMat(codomain->size(), domain->size()));
}

SparseOperator SparseOperator::diagonal(const BasisPtr& basis, const Eigen::VectorXd& values) {
  if (values.size() != static_cast<Eigen::Index>(basis->size())) {
    throw ShapeError("diagonal length does not match basis");
  }
  std::vector<Eigen::Triplet<cplx>> trips;
  for (Eigen::Index k = 0; k < values.size(); ++k) {
    if (values[k] != 0.0) trips.emplace_back(k, k, values[k]);
  }
  SparseMat m(basis->size(), basis->size());
  m.setFromTriplets(trips.begin(), trips.end());
  SparseOperator op(basis, basis, std::move(m));
  op.hermitian_ = true;
  return op;
}

SparseOperator SparseOperator::adjoint() const {
  SparseMat m = matrix_.adjoint();
  SparseOperator out(codomain_, domain_, std::move(m));
  out.hermitian_ = hermitian_;
  return out;
}

CMatrix SparseOperator::dense() const { return CMatrix(matrix_); }

double SparseOperator::max_abs() const {
  double best = 0.0;
  for (Eigen::Index k = 0; k < matrix_.nonZeros(); ++k) {
    best = std::max(best, std::abs(matrix_.valuePtr()[k]));
  }
  return best;
}

bool SparseOperator::is_diagonal() const {
  if (!square()) return false;
  for (Eigen::Index r = 0; r < matrix_.outerSize(); ++r) {
    for (SparseMat::InnerIterator it(matrix_, r); it; ++it) {
      if (it.col() != r) return false;
    }
  }
  return true;
}

Eigen::VectorXd SparseOperator::real_diagonal() const {
  if (!square()) throw ShapeError("diagonal of a non-square operator");
  Eigen::VectorXd d = Eigen::VectorXd::Zero(rows());
  for (Eigen::Index r = 0; r < matrix_.outerSize(); ++r) {
    for (SparseMat::InnerIterator it(matrix_, r); it; ++it) {
      if (it.col() == r) d[r] = it.value().real();
    }
  }
  return d;
}

double SparseOperator::hermiticity_defect() const {
  if (!square()) return std::numeric_limits<double>::infinity();
  SparseMat diff = matrix_ - SparseMat(matrix_.adjoint());
  double best = 0.0;
  for (Eigen::Index k = 0; k < diff.nonZeros(); ++k) {
    best = std::max(best, std::abs(diff.valuePtr()[k]));
  }
  return best;
}

SparseOperator& SparseOperator::mark_hermitian(double tol) {
  const double defect = hermiticity_defect();
  if (!(defect < tol)) {
    throw DomainError("operator is not Hermitian (defect " + std::to_string(defect) + ")");
  }
  hermitian_ = true;
  return *this;
}

SparseOperator operator*(const SparseOperator& a, const SparseOperator& b) {
  require_same_space(*b.codomain(), *a.domain(), "operator composition");
  SparseMat m = (a.matrix() * b.matrix()).pruned();
  return SparseOperator(b.domain(), a.codomain(), std::move(m));
}

SparseOperator operator+(const SparseOperator& a, const SparseOperator& b) {
  require_same_space(*a.domain(), *b.domain(), "operator sum");
  require_same_space(*a.codomain(), *b.codomain(), "operator sum");
  return SparseOperator(a.domain(), a.codomain(), SparseMat(a.matrix() + b.matrix()));
}

SparseOperator operator-(const SparseOperator& a, const SparseOperator& b) {
  require_same_space(*a.domain(), *b.domain(), "operator difference");
  require_same_space(*a.codomain(), *b.codomain(), "operator difference");
  return SparseOperator(a.domain(), a.codomain(), SparseMat(a.matrix() - b.matrix()));
}

SparseOperator operator*(cplx s, const SparseOperator& a) {
  return SparseOperator(a.domain(), a.codomain(), SparseMat(s * a.matrix()));
}

SparseOperator commutator(const SparseOperator& a, const SparseOperator& b) {
  return a * b - b * a;
}

SparseOperator anticommutator(const SparseOperator& a, const SparseOperator& b) {
  return a * b + b * a;
}

// --- StateVector -----------------------------------------------------------

StateVector StateVector::basis_state(const BasisPtr& basis, const FockState& s) {
  auto k = basis->index_of(s);
  if (!k) throw DomainError("Fock state not in basis " + basis->label());
  StateVector v{basis, CVector::Zero(basis->size())};
  v.amplitudes[*k] = 1.0;
  return v;
}

void StateVector::normalize() {
  const double n = norm();
  if (n == 0.0) throw DomainError("cannot normalize the zero vector");
  amplitudes /= n;
}

DensityMatrix DensityMatrix::pure(const StateVector& psi) {
  return DensityMatrix{psi.basis, psi.amplitudes * psi.amplitudes.adjoint()};
}

DensityMatrix DensityMatrix::maximally_mixed(const BasisPtr& basis) {
  const auto d = static_cast<Eigen::Index>(basis->size());
  return DensityMatrix{basis, CMatrix::Identity(d, d) / static_cast<double>(d)};
}

double DensityMatrix::hermiticity_defect() const {
  return (matrix - matrix.adjoint()).cwiseAbs().maxCoeff();
}

double DensityMatrix::min_eigenvalue() const {
  Eigen::SelfAdjointEigenSolver<CMatrix> es(0.5 * (matrix + matrix.adjoint()), Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

void DensityMatrix::hermitize() {
  CMatrix h = 0.5 * (matrix + matrix.adjoint());
  matrix = std::move(h);
}

StateVector apply(const SparseOperator& op, const StateVector& psi) {
  if (!op.domain()->same_space(*psi.basis) ||
      op.cols() != static_cast<Eigen::Index>(psi.size())) {
    throw ShapeError("apply: operator domain " + op.domain()->label() + " vs state basis " +
                     psi.basis->label());
  }
  return StateVector{op.codomain(), op.matrix() * psi.amplitudes};
}

// --- elementary operators --------------------------------------------------

SparseOperator build_fermion_op(const BasisPtr& basis, int site, Spin spin, bool dagger) {
  check_site(basis, site);
  const int d = dagger ? 1 : -1;
  BasisPtr image = spin == Spin::up ? shifted_basis(basis, d, 0) : shifted_basis(basis, 0, d);
  if (image->size() == 0) return SparseOperator::zero(basis, image);

  const std::uint32_t bit = 1U << site;
  std::vector<Eigen::Triplet<cplx>> trips;
  for (std::size_t k = 0; k < basis->size(); ++k) {
    const FockState& s = basis->state(k);
    if (s.occupied(site, spin) == dagger) continue;
    FockState t = s;
    (spin == Spin::up ? t.up : t.down) ^= bit;
    const double sign = (modes_below(s, site, spin) % 2 == 0) ? 1.0 : -1.0;
    auto row = image->index_of(t);
    if (!row) throw AlgorithmError("fermion image state missing from " + image->label());
    trips.emplace_back(static_cast<Eigen::Index>(*row), static_cast<Eigen::Index>(k), sign);
  }
  SparseMat m(image->size(), basis->size());
  m.setFromTriplets(trips.begin(), trips.end());
  return SparseOperator(basis, image, std::move(m));
}

SparseOperator build_number_op(const BasisPtr& basis, int site, Spin spin) {
  check_site(basis, site);
  Eigen::VectorXd d(basis->size());
  for (std::size_t k = 0; k < basis->size(); ++k) {
    d[k] = basis->state(k).occupied(site, spin) ? 1.0 : 0.0;
  }
  return SparseOperator::diagonal(basis, d);
}

EtaOperators build_eta_ops(const BasisPtr& basis) {
  const int m = basis->sites();
  const BasisPtr up = shifted_basis(basis, 1, 1);
  const BasisPtr down = shifted_basis(basis, -1, -1);

  std::vector<SparseOperator> raise, lower, z;
  SparseOperator raise_total = SparseOperator::zero(basis, up);
  SparseOperator lower_total = SparseOperator::zero(basis, down);
  SparseOperator z_total = SparseOperator::zero(basis, basis);
  for (int i = 0; i < m; ++i) {
    const cplx phase = (i % 2 == 0) ? 1.0 : -1.0;
    // c^dag_up c^dag_down: the down creator acts first.
    SparseOperator cd_dn = build_fermion_op(basis, i, Spin::down, true);
    SparseOperator pair_up = phase * (build_fermion_op(cd_dn.codomain(), i, Spin::up, true) * cd_dn);
    // c_down c_up: the up annihilator acts first.
    SparseOperator c_up = build_fermion_op(basis, i, Spin::up, false);
    SparseOperator pair_dn = phase * (build_fermion_op(c_up.codomain(), i, Spin::down, false) * c_up);

    Eigen::VectorXd zd(basis->size());
    for (std::size_t k = 0; k < basis->size(); ++k) {
      const FockState& s = basis->state(k);
      zd[k] = 0.5 * ((s.occupied(i, Spin::up) ? 1.0 : 0.0) + (s.occupied(i, Spin::down) ? 1.0 : 0.0) - 1.0);
    }
    SparseOperator zi = SparseOperator::diagonal(basis, zd);

    raise_total = raise_total + pair_up;
    lower_total = lower_total + pair_dn;
    z_total = z_total + zi;
    raise.push_back(std::move(pair_up));
    lower.push_back(std::move(pair_dn));
    z.push_back(std::move(zi));
  }
  SparseOperator pair_number = lower_total.adjoint() * lower_total;
  pair_number.mark_hermitian();
  z_total.mark_hermitian();
  return EtaOperators{std::move(raise),       std::move(lower),       std::move(z),
                      std::move(raise_total), std::move(lower_total), std::move(z_total),
                      std::move(pair_number)};
}

SpinOperators build_spin_ops(const BasisPtr& basis) {
  const int m = basis->sites();
  std::vector<SparseOperator> sz;
  Eigen::VectorXd total = Eigen::VectorXd::Zero(basis->size());
  for (int i = 0; i < m; ++i) {
    Eigen::VectorXd d(basis->size());
    for (std::size_t k = 0; k < basis->size(); ++k) {
      const FockState& s = basis->state(k);
      d[k] = (s.occupied(i, Spin::up) ? 1.0 : 0.0) - (s.occupied(i, Spin::down) ? 1.0 : 0.0);
    }
    total += d;
    sz.push_back(SparseOperator::diagonal(basis, d));
  }
  return SpinOperators{std::move(sz), SparseOperator::diagonal(basis, total)};
}

SparseOperator build_spin_flip(const BasisPtr& basis, int site, bool raise) {
  const Spin from = raise ? Spin::down : Spin::up;
  const Spin to = raise ? Spin::up : Spin::down;
  SparseOperator annihilate = build_fermion_op(basis, site, from, false);
  return build_fermion_op(annihilate.codomain(), site, to, true) * annihilate;
}

SparseOperator build_pair_hop(const BasisPtr& basis, int i, int j) {
  check_site(basis, i);
  check_site(basis, j);
  const cplx phase = ((i + j) % 2 == 0) ? 1.0 : -1.0;
  return phase * build_doublon_transfer(basis, i, j);
}

SparseOperator build_doublon_transfer(const BasisPtr& basis, int j, int k) {
  SparseOperator a = build_fermion_op(basis, k, Spin::up, false);
  SparseOperator b = build_fermion_op(a.codomain(), k, Spin::down, false);
  SparseOperator c = build_fermion_op(b.codomain(), j, Spin::down, true);
  SparseOperator d = build_fermion_op(c.codomain(), j, Spin::up, true);
  return d * (c * (b * a));
}

}  // namespace etalab
