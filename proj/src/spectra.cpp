#include "etalab/spectra.hpp"

#include "etalab/errors.hpp"

#include <cstdlib>
#include <random>

namespace etalab {

namespace {

constexpr double kDegenerateGap = 1e-8;

void require_hermitian(const SparseOperator& H) {
  if (!H.square()) throw DomainError("Hamiltonian must be square");
  if (!H.hermitian() && H.hermiticity_defect() >= 1e-12) {
    throw DomainError("Hamiltonian is not Hermitian");
  }
}

CVector random_unit(Eigen::Index n, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  CVector v(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const double re = static_cast<double>(gen() >> 11) * 0x1.0p-53 - 0.5;
    const double im = static_cast<double>(gen() >> 11) * 0x1.0p-53 - 0.5;
    v[k] = cplx(re, im);
  }
  return v / v.norm();
}

struct RitzPair {
  double value;
  CVector vector;
};

// One Lanczos pass of at most `size` steps from `start`, fully
// reorthogonalized against the Krylov basis and against `deflate`.
RitzPair lanczos_pass(const SparseMat& h, const CVector& start, int size,
                      const std::vector<CVector>& deflate) {
  const Eigen::Index n = h.rows();
  const int m = static_cast<int>(std::min<Eigen::Index>(size, n));
  std::vector<CVector> basis;
  std::vector<double> alpha, beta;

  auto project_out = [&](CVector& w) {
    for (int pass = 0; pass < 2; ++pass) {
      for (const auto& d : deflate) w -= d * d.dot(w);
      for (const auto& b : basis) w -= b * b.dot(w);
    }
  };

  CVector v = start;
  project_out(v);
  v /= v.norm();
  basis.push_back(v);
  for (int j = 0; j < m; ++j) {
    CVector w = h * basis[j];
    alpha.push_back(basis[j].dot(w).real());
    project_out(w);
    const double b = w.norm();
    if (j + 1 == m || b < 1e-13) break;
    beta.push_back(b);
    basis.push_back(w / b);
  }

  const auto k = static_cast<Eigen::Index>(alpha.size());
  Eigen::MatrixXd t = Eigen::MatrixXd::Zero(k, k);
  for (Eigen::Index i = 0; i < k; ++i) {
    t(i, i) = alpha[i];
    if (i + 1 < k) t(i, i + 1) = t(i + 1, i) = beta[i];
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(t);
  CVector ritz = CVector::Zero(n);
  for (Eigen::Index i = 0; i < k; ++i) ritz += es.eigenvectors()(i, 0) * basis[i];
  ritz /= ritz.norm();
  return {es.eigenvalues()[0], std::move(ritz)};
}

RitzPair restarted_lanczos(const SparseMat& h, const LanczosOptions& opts,
                           const std::vector<CVector>& deflate, std::uint64_t seed,
                           double& residual) {
  CVector v = random_unit(h.rows(), seed);
  RitzPair best{0.0, v};
  for (int r = 0; r <= opts.max_restarts; ++r) {
    best = lanczos_pass(h, v, opts.krylov_size, deflate);
    CVector hv = h * best.vector;
    for (const auto& d : deflate) hv -= d * d.dot(hv);
    residual = (hv - best.value * best.vector).norm();
    if (residual <= opts.tolerance * std::max(1.0, std::abs(best.value))) return best;
    v = best.vector;
  }
  throw ConvergenceError("Lanczos did not converge", residual);
}

}  // namespace

std::size_t dense_limit() {
  if (const char* env = std::getenv("ETALAB_DENSE_LIMIT")) {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (end != env && v > 0) return static_cast<std::size_t>(v);
  }
  return 5000;
}

DenseSpectrum dense_spectrum(const SparseOperator& H) {
  require_hermitian(H);
  if (static_cast<std::size_t>(H.rows()) > dense_limit()) {
    throw CapacityError("dense diagonalization of dimension " + std::to_string(H.rows()) +
                        " exceeds limit " + std::to_string(dense_limit()));
  }
  CMatrix d = H.dense();
  Eigen::SelfAdjointEigenSolver<CMatrix> es(0.5 * (d + d.adjoint()));
  return {es.eigenvalues(), es.eigenvectors()};
}

EigenPair ground_state_dense(const SparseOperator& H) {
  DenseSpectrum s = dense_spectrum(H);
  EigenPair out;
  out.value = s.values[0];
  out.vector = StateVector{H.domain(), s.vectors.col(0)};
  out.residual = (H.matrix() * out.vector.amplitudes - out.value * out.vector.amplitudes).norm();
  out.gap = s.values.size() > 1 ? s.values[1] - s.values[0] : std::numeric_limits<double>::infinity();
  out.degenerate = out.gap < kDegenerateGap;
  return out;
}

EigenPair ground_state_lanczos(const SparseOperator& H, const LanczosOptions& opts) {
  require_hermitian(H);
  const SparseMat& h = H.matrix();
  double residual = 0.0;
  RitzPair g = restarted_lanczos(h, opts, {}, opts.seed, residual);

  EigenPair out;
  out.value = g.value;
  out.vector = StateVector{H.domain(), g.vector};
  out.residual = residual;
  // A deflated second run gives E_1; Krylov spaces only ever see one vector
  // of a degenerate ground space, so this is the only way to spot it.
  if (h.rows() > 1) {
    double r1 = 0.0;
    RitzPair first = restarted_lanczos(h, opts, {g.vector}, opts.seed ^ 0x9e3779b97f4a7c15ULL, r1);
    out.gap = first.value - g.value;
  } else {
    out.gap = std::numeric_limits<double>::infinity();
  }
  out.degenerate = out.gap < kDegenerateGap;
  return out;
}

EigenPair ground_state(const SparseOperator& H, const LanczosOptions& opts) {
  require_hermitian(H);
  if (static_cast<std::size_t>(H.rows()) <= opts.dense_fallback) return ground_state_dense(H);
  return ground_state_lanczos(H, opts);
}

ThermalState thermal_state(const SparseOperator& H, double beta) {
  if (beta < 0.0) throw DomainError("inverse temperature must be non-negative");
  DenseSpectrum s = dense_spectrum(H);
  const double e0 = s.values[0];
  Eigen::VectorXd w = (-beta * (s.values.array() - e0)).exp();
  w /= w.sum();
  CMatrix rho = s.vectors * w.cast<cplx>().asDiagonal() * s.vectors.adjoint();
  return ThermalState{beta, DensityMatrix{H.domain(), 0.5 * (rho + rho.adjoint())}};
}

}  // namespace etalab
