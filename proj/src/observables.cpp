#include "etalab/observables.hpp"

#include "etalab/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace etalab {

namespace {

void require_basis(const ObservableKit& kit, const BasisPtr& basis) {
  if (!kit.basis()->same_space(*basis)) {
    throw ShapeError("state basis " + basis->label() + " differs from observable basis " +
                     kit.basis()->label());
  }
}

double diag_expectation(const Eigen::VectorXd& d, const StateVector& psi) {
  return (d.array() * psi.amplitudes.array().abs2()).sum();
}

double diag_expectation(const Eigen::VectorXd& d, const DensityMatrix& rho) {
  return (d.array() * rho.matrix.diagonal().real().array()).sum();
}

}  // namespace

double EtaCorrMatrix::offdiag_spread() const {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (int i = 0; i < sites(); ++i) {
    for (int j = 0; j < sites(); ++j) {
      if (i == j) continue;
      lo = std::min(lo, std::abs(c(i, j)));
      hi = std::max(hi, std::abs(c(i, j)));
    }
  }
  return sites() > 1 ? hi - lo : 0.0;
}

cplx EtaCorrMatrix::offdiag_mean() const {
  const int m = sites();
  if (m < 2) return 0.0;
  return (c.sum() - c.trace()) / static_cast<double>(m * (m - 1));
}

ObservableKit::ObservableKit(BasisPtr basis)
    : basis_(std::move(basis)), eta_(build_eta_ops(basis_)), spin_(build_spin_ops(basis_)) {
  const int m = basis_->sites();
  pair_hop_.reserve(m * m);
  transfer_.reserve(m * m);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < m; ++j) {
      transfer_.push_back(build_doublon_transfer(basis_, i, j));
      pair_hop_.push_back(eta_.lower[i].adjoint() * eta_.lower[j]);
    }
  }
  const auto d = static_cast<Eigen::Index>(basis_->size());
  n_up_ = Eigen::VectorXd::Zero(d);
  n_down_ = Eigen::VectorXd::Zero(d);
  doublon_diag_.assign(m, Eigen::VectorXd::Zero(d));
  for (Eigen::Index k = 0; k < d; ++k) {
    const FockState& s = basis_->state(k);
    n_up_[k] = s.n_up();
    n_down_[k] = s.n_down();
    for (int i = 0; i < m; ++i) {
      doublon_diag_[i][k] = (s.occupied(i, Spin::up) && s.occupied(i, Spin::down)) ? 1.0 : 0.0;
    }
  }
}

cplx expectation(const SparseOperator& op, const DensityMatrix& rho) {
  if (!op.square() || !op.domain()->same_space(*rho.basis)) throw ShapeError("expectation: basis mismatch");
  // Tr(rho A) = sum_{r,c} A(r, c) rho(c, r)
  cplx acc = 0.0;
  const SparseMat& a = op.matrix();
  for (Eigen::Index r = 0; r < a.outerSize(); ++r) {
    for (SparseMat::InnerIterator it(a, r); it; ++it) acc += it.value() * rho.matrix(it.col(), r);
  }
  return acc;
}

cplx expectation(const SparseOperator& op, const StateVector& psi) {
  if (!op.square() || !op.domain()->same_space(*psi.basis)) throw ShapeError("expectation: basis mismatch");
  return psi.amplitudes.dot(op.matrix() * psi.amplitudes);
}

EtaCorrMatrix eta_correlation_matrix(const ObservableKit& kit, const StateVector& psi) {
  require_basis(kit, psi.basis);
  const int m = kit.sites();
  // <eta+_i eta-_j> = <eta-_i psi | eta-_j psi>
  std::vector<CVector> lowered;
  lowered.reserve(m);
  for (int i = 0; i < m; ++i) lowered.push_back(kit.eta().lower[i].matrix() * psi.amplitudes);
  EtaCorrMatrix out{CMatrix::Zero(m, m)};
  for (int i = 0; i < m; ++i) {
    for (int j = i; j < m; ++j) {
      const cplx v = lowered[i].dot(lowered[j]);
      out.c(i, j) = v;
      out.c(j, i) = std::conj(v);
    }
    out.c(i, i) = out.c(i, i).real();
  }
  return out;
}

EtaCorrMatrix eta_correlation_matrix(const ObservableKit& kit, const DensityMatrix& rho) {
  require_basis(kit, rho.basis);
  const int m = kit.sites();
  EtaCorrMatrix out{CMatrix::Zero(m, m)};
  for (int i = 0; i < m; ++i) {
    for (int j = i; j < m; ++j) {
      const cplx v = expectation(kit.pair_hop(i, j), rho);
      out.c(i, j) = v;
      out.c(j, i) = std::conj(v);
    }
    out.c(i, i) = out.c(i, i).real();
  }
  return out;
}

cplx distance_averaged_corr(const EtaCorrMatrix& c, int j) {
  const int m = c.sites();
  if (j < 0 || j >= m) throw DomainError("distance " + std::to_string(j) + " outside [0, M)");
  cplx sum = 0.0;
  for (int i = 0; i + j < m; ++i) sum += c.c(i, i + j);
  return sum / static_cast<double>(m - j);
}

ConservedSet conserved_set(const ObservableKit& kit, const StateVector& psi) {
  require_basis(kit, psi.basis);
  ConservedSet s;
  const double norm2 = psi.amplitudes.squaredNorm();
  s.eta_pair = (kit.eta().lower_total.matrix() * psi.amplitudes).squaredNorm() / norm2;
  s.n_up = diag_expectation(kit.n_up_total(), psi) / norm2;
  s.n_down = diag_expectation(kit.n_down_total(), psi) / norm2;
  s.s_z = s.n_up - s.n_down;
  s.eta_z = 0.5 * (s.n_up + s.n_down - kit.sites());
  return s;
}

ConservedSet conserved_set(const ObservableKit& kit, const DensityMatrix& rho) {
  require_basis(kit, rho.basis);
  ConservedSet s;
  s.eta_pair = expectation(kit.eta().pair_number, rho).real();
  s.n_up = diag_expectation(kit.n_up_total(), rho);
  s.n_down = diag_expectation(kit.n_down_total(), rho);
  s.s_z = s.n_up - s.n_down;
  s.eta_z = 0.5 * (s.n_up + s.n_down - kit.sites());
  return s;
}

CMatrix doublon_two_point(const ObservableKit& kit, const StateVector& psi) {
  require_basis(kit, psi.basis);
  const int m = kit.sites();
  CMatrix t(m, m);
  for (int j = 0; j < m; ++j) {
    for (int k = 0; k < m; ++k) t(j, k) = expectation(kit.doublon_transfer(j, k), psi);
  }
  return t;
}

CMatrix doublon_two_point(const ObservableKit& kit, const DensityMatrix& rho) {
  require_basis(kit, rho.basis);
  const int m = kit.sites();
  CMatrix t(m, m);
  for (int j = 0; j < m; ++j) {
    for (int k = 0; k < m; ++k) t(j, k) = expectation(kit.doublon_transfer(j, k), rho);
  }
  return t;
}

StructureFactor structure_factor_from_two_point(const CMatrix& t) {
  const auto m = static_cast<int>(t.rows());
  StructureFactor sf;
  for (int n = 0; n < m; ++n) {
    const double q = 2.0 * std::numbers::pi * n / m;
    cplx acc = 0.0;
    for (int j = 0; j < m; ++j) {
      for (int k = 0; k < m; ++k) acc += t(j, k) * std::polar(1.0, (k - j) * q);
    }
    sf.qa.push_back(q);
    sf.values.push_back(acc.real() / m);
  }
  return sf;
}

StructureFactor structure_factor(const ObservableKit& kit, const StateVector& psi) {
  return structure_factor_from_two_point(doublon_two_point(kit, psi));
}

StructureFactor structure_factor(const ObservableKit& kit, const DensityMatrix& rho) {
  return structure_factor_from_two_point(doublon_two_point(kit, rho));
}

Eigen::VectorXd double_occupancy(const ObservableKit& kit, const StateVector& psi) {
  require_basis(kit, psi.basis);
  Eigen::VectorXd d(kit.sites());
  const double norm2 = psi.amplitudes.squaredNorm();
  for (int i = 0; i < kit.sites(); ++i) d[i] = diag_expectation(kit.doublon_diag(i), psi) / norm2;
  return d;
}

Eigen::VectorXd double_occupancy(const ObservableKit& kit, const DensityMatrix& rho) {
  require_basis(kit, rho.basis);
  Eigen::VectorXd d(kit.sites());
  for (int i = 0; i < kit.sites(); ++i) d[i] = diag_expectation(kit.doublon_diag(i), rho);
  return d;
}

ProjectedBlock project_sector_matrix(const DensityMatrix& rho, ProjectionKind kind) {
  const BasisPtr& basis = rho.basis;
  const int m = basis->sites();
  const std::uint32_t all = (1U << m) - 1U;

  struct Entry {
    std::string label;
    std::size_t index;
  };
  std::vector<Entry> kept;
  for (std::size_t k = 0; k < basis->size(); ++k) {
    const FockState& s = basis->state(k);
    const bool keep = kind == ProjectionKind::spin ? ((s.up & s.down) == 0 && (s.up | s.down) == all)
                                                   : s.up == s.down;
    if (!keep) continue;
    std::string label(m, '0');
    for (int i = 0; i < m; ++i) {
      if (s.occupied(i, Spin::up)) label[i] = '1';
    }
    kept.push_back({std::move(label), k});
  }
  std::sort(kept.begin(), kept.end(), [](const Entry& a, const Entry& b) { return a.label > b.label; });

  ProjectedBlock out;
  out.kind = kind;
  const auto n = static_cast<Eigen::Index>(kept.size());
  out.matrix = CMatrix::Zero(n, n);
  for (Eigen::Index a = 0; a < n; ++a) {
    out.labels.push_back(kept[a].label);
    for (Eigen::Index b = 0; b < n; ++b) out.matrix(a, b) = rho.matrix(kept[a].index, kept[b].index);
  }
  out.trace_before = out.matrix.trace().real();
  if (!(out.trace_before >= 1e-12)) {
    throw DegenerateProjection(std::string(kind == ProjectionKind::spin ? "spin" : "doublon") +
                               " projection carries no weight (trace " +
                               std::to_string(out.trace_before) + ")");
  }
  out.matrix /= out.trace_before;
  return out;
}

}  // namespace etalab
