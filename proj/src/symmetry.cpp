#include "etalab/symmetry.hpp"

#include "etalab/errors.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>

namespace etalab {

namespace {

constexpr cplx kI(0.0, 1.0);

double max_abs(const CMatrix& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

CMatrix comm(const CMatrix& a, const CMatrix& b) { return a * b - b * a; }

struct Su2Family {
  std::vector<CMatrix> plus, minus, z;
};

void check_su2(CommutatorReport& r, const std::string& name, const Su2Family& f) {
  const std::size_t m = f.plus.size();
  double pm = 0.0, zp = 0.0, zm = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t k = 0; k < m; ++k) {
      const double delta = i == k ? 1.0 : 0.0;
      pm = std::max(pm, max_abs(comm(f.plus[i], f.minus[k]) - 2.0 * delta * f.z[i]));
      zp = std::max(zp, max_abs(comm(f.z[i], f.plus[k]) - delta * f.plus[i]));
      zm = std::max(zm, max_abs(comm(f.z[i], f.minus[k]) + delta * f.minus[i]));
    }
  }
  r.entries.push_back({"[" + name + "+_i, " + name + "-_k] - 2 d_ik " + name + "z_i", pm, pm <= r.tol});
  r.entries.push_back({"[" + name + "z_i, " + name + "+_k] - d_ik " + name + "+_i", zp, zp <= r.tol});
  r.entries.push_back({"[" + name + "z_i, " + name + "-_k] + d_ik " + name + "-_i", zm, zm <= r.tol});
}

void push(CommutatorReport& r, std::string label, double norm) {
  r.entries.push_back({std::move(label), norm, norm <= r.tol});
}

}  // namespace

const CommutatorEntry& CommutatorReport::at(const std::string& label) const {
  for (const auto& e : entries) {
    if (e.label == label) return e;
  }
  throw DomainError("no commutator entry '" + label + "'");
}

bool CommutatorReport::all_pass() const {
  return std::all_of(entries.begin(), entries.end(), [](const CommutatorEntry& e) { return e.pass; });
}

StateVector yang_state(int sites, int n) {
  if (n < 0 || n > sites) throw DomainError("Yang state needs 0 <= N <= M");
  BasisPtr basis = enumerate_sector(sites, 0, 0);
  StateVector psi = StateVector::basis_state(basis, FockState{});
  for (int k = 0; k < n; ++k) {
    psi = apply(build_eta_ops(psi.basis).raise_total, psi);
    psi.normalize();
  }
  return psi;
}

CommutatorReport algebra_check(int sites, double U, double tol) {
  if (sites < 2 || sites > 3) throw DomainError("algebra_check runs densely on M = 2 or 3 sites");
  const BasisPtr basis = full_fock_space(sites);
  const EtaOperators eta = build_eta_ops(basis);
  const SpinOperators spin = build_spin_ops(basis);

  Su2Family ef, sf;
  for (int i = 0; i < sites; ++i) {
    ef.plus.push_back(eta.raise[i].dense());
    ef.minus.push_back(eta.lower[i].dense());
    ef.z.push_back(eta.z[i].dense());
    sf.plus.push_back(build_spin_flip(basis, i, true).dense());
    sf.minus.push_back(build_spin_flip(basis, i, false).dense());
    sf.z.push_back(0.5 * spin.sz[i].dense());
  }

  CommutatorReport r;
  r.tol = tol;
  check_su2(r, "eta", ef);
  check_su2(r, "S", sf);

  double cross = 0.0;
  for (const auto* a : {&ef.plus, &ef.minus, &ef.z}) {
    for (const auto* b : {&sf.plus, &sf.minus, &sf.z}) {
      for (int i = 0; i < sites; ++i) {
        for (int k = 0; k < sites; ++k) cross = std::max(cross, max_abs(comm((*a)[i], (*b)[k])));
      }
    }
  }
  push(r, "eta family vs spin family", cross);

  const CMatrix h = build_hubbard(HubbardParams{sites, 1.0, U}, basis).dense();
  const CMatrix eplus = eta.raise_total.dense();
  push(r, "[H, eta+ eta-]", max_abs(comm(h, eta.pair_number.dense())));
  push(r, "[H, eta^z]", max_abs(comm(h, eta.z_total.dense())));
  push(r, "[H, S^z]", max_abs(comm(h, spin.sz_total.dense())));
  push(r, "[S^z, eta+]", max_abs(comm(spin.sz_total.dense(), eplus)));

  const CMatrix ladder = comm(h, eplus);
  // Frobenius projection <eta+, [H, eta+]> / |eta+|^2
  r.mu = (eplus.conjugate().cwiseProduct(ladder).sum() / eplus.squaredNorm()).real();
  r.ladder_residual = max_abs(ladder - *r.mu * eplus);
  return r;
}

CommutatorReport jump_symmetry_check(const JumpSet& jumps, const SparseOperator& H, double tol) {
  const BasisPtr& basis = H.domain();
  if (!basis->is_full()) throw DomainError("jump_symmetry_check needs operators on the full Fock space");
  const EtaOperators eta = build_eta_ops(basis);
  const SpinOperators spin = build_spin_ops(basis);
  const std::vector<std::pair<std::string, CMatrix>> targets = {
      {"eta+", eta.raise_total.dense()},   {"eta-", eta.lower_total.dense()},
      {"eta^z", eta.z_total.dense()},      {"S^z", spin.sz_total.dense()},
      {"H", H.dense()},
  };
  CommutatorReport r;
  r.tol = tol;
  for (const auto& [name, a] : targets) {
    double worst = 0.0;
    for (const auto& l : jumps.operators) {
      if (!l.domain()->same_space(*basis)) throw ShapeError("jump operator not on the Hamiltonian's basis");
      worst = std::max(worst, max_abs(comm(l.dense(), a)));
    }
    push(r, "[L_j, " + name + "]", worst);
  }
  return r;
}

CVector vectorize(const CMatrix& rho) { return rho.reshaped(); }

CMatrix unvectorize(const CVector& v, Eigen::Index dim) { return v.reshaped(dim, dim); }

CMatrix liouvillian_dense(const SparseOperator& H, const JumpSet& jumps) {
  if (!H.square()) throw ShapeError("Hamiltonian must be square");
  const Eigen::Index d = H.rows();
  if (d * d > 4096) {
    throw CapacityError("Liouvillian of dimension " + std::to_string(d * d) + " exceeds 4096");
  }
  const CMatrix id = CMatrix::Identity(d, d);
  const CMatrix h = H.dense();
  // vec(A rho B) = (B^T kron A) vec(rho)
  auto kron = [d](const CMatrix& a, const CMatrix& b) {
    CMatrix out(d * d, d * d);
    for (Eigen::Index i = 0; i < d; ++i) {
      for (Eigen::Index j = 0; j < d; ++j) out.block(i * d, j * d, d, d) = a(i, j) * b;
    }
    return out;
  };
  CMatrix lv = -kI * (kron(id, h) - kron(h.transpose(), id));
  for (std::size_t k = 0; k < jumps.size(); ++k) {
    const CMatrix l = jumps.operators[k].dense();
    const CMatrix ldl = l.adjoint() * l;
    lv += jumps.rates[k] * (kron(l.conjugate(), l) - 0.5 * kron(id, ldl) - 0.5 * kron(ldl.transpose(), id));
  }
  return lv;
}

LiouvillianSpectrum steady_space_analysis(const CMatrix& liouvillian) {
  LiouvillianSpectrum out;
  Eigen::ComplexEigenSolver<CMatrix> es(liouvillian, false);
  if (es.info() != Eigen::Success) throw ConvergenceError("Liouvillian eigensolver failed", 0.0);
  const CVector& ev = es.eigenvalues();
  out.eigenvalues.assign(ev.data(), ev.data() + ev.size());
  std::sort(out.eigenvalues.begin(), out.eigenvalues.end(), [](cplx a, cplx b) {
    if (a.real() != b.real()) return a.real() > b.real();
    return a.imag() < b.imag();
  });
  out.max_real = out.eigenvalues.empty() ? 0.0 : out.eigenvalues.front().real();

  Eigen::BDCSVD<CMatrix> svd(liouvillian);
  const Eigen::VectorXd& sv = svd.singularValues();
  const double smax = sv.size() ? sv[0] : 0.0;
  for (Eigen::Index k = 0; k < sv.size(); ++k) {
    if (sv[k] <= 1e-9 * smax) ++out.kernel_dim;
  }

  std::vector<double> im;
  for (const cplx& l : out.eigenvalues) {
    if (std::abs(l) < 1e-9) {
      ++out.kernel_eigen_count;
    } else if (std::abs(l.real()) < 1e-10) {
      im.push_back(l.imag());
    }
  }
  std::sort(im.begin(), im.end());
  for (double v : im) {
    if (out.imaginary.empty() || v - out.imaginary.back() > 1e-8) out.imaginary.push_back(v);
  }

  double smallest = std::numeric_limits<double>::infinity();
  for (double v : out.imaginary) smallest = std::min(smallest, std::abs(v));
  if (std::isfinite(smallest)) {
    double num = 0.0, den = 0.0;
    std::vector<double> ks;
    for (double v : out.imaginary) {
      const double k = std::round(v / smallest);
      ks.push_back(k);
      num += k * v;
      den += k * k;
    }
    out.ladder_spacing = num / den;
    for (std::size_t n = 0; n < ks.size(); ++n) {
      out.ladder_residual = std::max(out.ladder_residual, std::abs(out.imaginary[n] - ks[n] * out.ladder_spacing));
    }
  }
  return out;
}

}  // namespace etalab
