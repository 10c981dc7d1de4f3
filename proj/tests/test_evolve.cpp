#include "etalab/errors.hpp"
#include "etalab/evolve.hpp"
#include "etalab/model.hpp"
#include "etalab/observables.hpp"
#include "etalab/spectra.hpp"

#include <doctest.h>

#include <random>

using namespace etalab;

namespace {

double dmax(const CMatrix& m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }

StateVector random_state(const BasisPtr& b, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> g;
  StateVector psi{b, CVector(b->size())};
  for (auto& a : psi.amplitudes) a = cplx(g(gen), g(gen));
  psi.normalize();
  return psi;
}

std::vector<double> grid(double t_final, int n) {
  std::vector<double> t;
  for (int k = 0; k <= n; ++k) t.push_back(t_final * k / n);
  return t;
}

double fidelity(const StateVector& a, const StateVector& b) { return std::norm(a.amplitudes.dot(b.amplitudes)); }

StateVector yang(int sites, int pairs) {
  StateVector psi = StateVector::basis_state(enumerate_sector(sites, 0, 0), {});
  for (int n = 0; n < pairs; ++n) {
    psi = apply(build_eta_ops(psi.basis).raise_total, psi);
    psi.normalize();
  }
  return psi;
}

}  // namespace

TEST_CASE("Lindblad right-hand side") {
  const BasisPtr b = enumerate_sector(4, 2, 2);
  const SparseOperator h = build_hubbard({4, 1.0, 3.0}, b);
  const JumpSet spin = build_jumps(JumpKind::spin, b, 1.5);

  SUBCASE("maximally mixed state is stationary") {
    const JumpSet both = merge(spin, build_jumps(JumpKind::charge, b, 0.7));
    CHECK(dmax(lindblad_rhs(DensityMatrix::maximally_mixed(b), h, both).matrix) < 1e-14);
  }
  SUBCASE("without jumps it is the von Neumann term") {
    const DensityMatrix rho = DensityMatrix::pure(random_state(b, 3));
    const CMatrix hd = h.dense();
    const CMatrix expect = cplx(0.0, -1.0) * (hd * rho.matrix - rho.matrix * hd);
    CHECK(dmax(lindblad_rhs(rho, h, JumpSet{}).matrix - expect) < 1e-12);
  }
  SUBCASE("general and diagonal dissipators agree") {
    const DensityMatrix rho = DensityMatrix::pure(random_state(b, 4));
    JumpSet general = spin;
    // a non-diagonal zero-rate channel forces the general path
    general.operators.push_back(build_pair_hop(b, 0, 1));
    general.rates.push_back(0.0);
    CHECK(dmax(lindblad_rhs(rho, h, spin).matrix - lindblad_rhs(rho, h, general).matrix) < 1e-12);
  }
  SUBCASE("the two-site eta pair projector is stationary") {
    const StateVector y = yang(2, 1);
    const SparseOperator h2 = build_hubbard({2, 1.0, 3.0}, y.basis);
    const JumpSet j2 = build_jumps(JumpKind::spin, y.basis, 2.0);
    CHECK(dmax(lindblad_rhs(DensityMatrix::pure(y), h2, j2).matrix) < 1e-14);
  }
}

TEST_CASE("output steps") {
  CHECK(output_steps({0.0, 0.5, 1.0}, 0.1, 1.0) == std::vector<std::size_t>{0, 5, 10});
  CHECK_THROWS_AS(output_steps({0.55}, 0.1, 1.0), DomainError);
  CHECK_THROWS_AS(output_steps({1.5}, 0.1, 1.0), DomainError);
}

TEST_CASE("coherent master equation matches Krylov propagation") {
  const BasisPtr b = enumerate_sector(4, 2, 2);
  const SparseOperator h = build_hubbard({4, 1.0, 1.0}, b);
  const StateVector psi = ground_state(build_hubbard({4, 1.0, 4.0}, b)).vector;
  // Without dephasing, RK4 damping of coherences at dt = 0.01 pushes a pure
  // state about 1e-6 below positivity; halve the step.
  const auto out = integrate_master(DensityMatrix::pure(psi), h, JumpSet{}, 10.0, {10.0}, {0.005});
  const StateVector ref = krylov_propagate(h, psi, 10.0);
  const double fid = ref.amplitudes.dot(out.back().second.matrix * ref.amplitudes).real();
  CHECK(fid >= 1.0 - 1e-8);
}

TEST_CASE("Krylov propagation against the dense exponential") {
  const BasisPtr b = enumerate_sector(4, 2, 1);
  const SparseOperator h = build_hubbard({4, 1.0, 4.0}, b);
  const StateVector psi = random_state(b, 5);
  Eigen::SelfAdjointEigenSolver<CMatrix> es(h.dense());
  const double t = 3.7;
  const CVector phase = (cplx(0.0, -t) * es.eigenvalues().cast<cplx>()).array().exp().matrix();
  const CVector ref = es.eigenvectors() * phase.asDiagonal() * es.eigenvectors().adjoint() * psi.amplitudes;
  CHECK((krylov_propagate(h, psi, t).amplitudes - ref).norm() < 1e-10);
}

TEST_CASE("spin dephasing conserves the eta pair number") {
  const BasisPtr b = enumerate_sector(4, 2, 2);
  const SparseOperator h = build_hubbard({4, 1.0, 1.0}, b);
  const JumpSet js = build_jumps(JumpKind::spin, b, 2.0);
  const ObservableKit kit(b);
  const StateVector psi = random_state(b, 21);
  const double p0 = conserved_set(kit, psi).eta_pair;
  REQUIRE(p0 > 0.1);
  double worst = 0.0;
  integrate_master(DensityMatrix::pure(psi), LindbladGenerator(h, js), 20.0, grid(20.0, 40),
                   [&](double, const DensityMatrix& rho) {
                     worst = std::max(worst, std::abs(conserved_set(kit, rho).eta_pair - p0) / p0);
                   });
  CHECK(worst <= 1e-6);
}

TEST_CASE("unitality keeps the maximally mixed state fixed") {
  const BasisPtr b = enumerate_sector(3, 2, 1);
  const SparseOperator h = build_hubbard({3, 1.0, 2.0}, b);
  const JumpSet js = merge(build_jumps(JumpKind::spin, b, 1.0), build_jumps(JumpKind::charge, b, 0.3));
  const DensityMatrix mm = DensityMatrix::maximally_mixed(b);
  const auto out = integrate_master(mm, h, js, 10.0, {10.0});
  CHECK(dmax(out.back().second.matrix - mm.matrix) < 1e-8);
}

TEST_CASE("charge dephasing drives the two-site state diagonal") {
  const BasisPtr b = enumerate_sector(2, 1, 1);
  const SparseOperator h = build_hubbard({2, 1.0, 1.0}, b);
  const JumpSet js = merge(build_jumps(JumpKind::spin, b, 1.0), build_jumps(JumpKind::charge, b, 0.5));
  const StateVector g = ground_state(h).vector;
  const auto out = integrate_master(DensityMatrix::pure(g), h, js, 500.0, {500.0}, {0.05});
  CMatrix off = out.back().second.matrix;
  off.diagonal().setZero();
  CHECK(dmax(off) < 1e-6);
}

TEST_CASE("halving dt leaves the correlations unchanged") {
  const BasisPtr b = enumerate_sector(4, 2, 2);
  const SparseOperator h = build_hubbard({4, 1.0, 1.0}, b);
  const JumpSet js = build_jumps(JumpKind::spin, b, 2.0);
  const ObservableKit kit(b);
  const DensityMatrix rho0 = DensityMatrix::pure(ground_state(build_hubbard({4, 1.0, 4.0}, b)).vector);
  const auto a = integrate_master(rho0, h, js, 5.0, {5.0}, {0.01});
  const auto c = integrate_master(rho0, h, js, 5.0, {5.0}, {0.005});
  CHECK(dmax(eta_correlation_matrix(kit, a.back().second).c - eta_correlation_matrix(kit, c.back().second).c) <
        1e-6);
}

TEST_CASE("an unstable step is reported") {
  const BasisPtr b = enumerate_sector(4, 2, 2);
  const SparseOperator h = build_hubbard({4, 1.0, 1.0}, b);
  const JumpSet js = build_jumps(JumpKind::spin, b, 50.0);
  const DensityMatrix rho0 = DensityMatrix::pure(random_state(b, 2));
  CHECK_THROWS_AS(integrate_master(rho0, h, js, 10.0, {10.0}, {0.5}), NumericalInstability);
}

TEST_CASE("trajectory seeds follow splitmix64") {
  // first output of splitmix64 seeded with 0
  CHECK(trajectory_seed(0, 0) == 0xe220a8397b1dcdafULL);
  CHECK(trajectory_seed(7, 3) != trajectory_seed(7, 4));
  CHECK(trajectory_seed(7, 3) == trajectory_seed(7, 3));
}

TEST_CASE("single trajectories") {
  SUBCASE("no jumps without dissipation, energy conserved") {
    const BasisPtr b = enumerate_sector(4, 2, 2);
    const StateVector g = ground_state(build_hubbard({4, 1.0, 4.0}, b)).vector;
    TrajectoryProblem p{g, build_hubbard({4, 1.0, 1.0}, b), JumpSet{}, 5.0, 0.01,
                        grid(5.0, 5), {}};
    const SparseOperator h = p.H;
    p.sampler = [&h](const StateVector& psi) { return std::vector<cplx>{expectation(h, psi)}; };
    const TrajectoryRecord r = run_trajectory(p, 1);
    CHECK(r.jumps.empty());
    REQUIRE(r.samples.size() == 6);
    for (const auto& s : r.samples) CHECK(std::abs(s[0] - r.samples[0][0]) < 1e-8);
  }
  SUBCASE("the eta pair state never jumps") {
    const StateVector y = yang(4, 2);
    TrajectoryProblem p{y, build_hubbard({4, 1.0, 2.0}, y.basis), build_jumps(JumpKind::spin, y.basis, 3.0),
                        10.0, 0.01, {10.0}, {}};
    p.sampler = [&y](const StateVector& psi) { return std::vector<cplx>{y.amplitudes.dot(psi.amplitudes)}; };
    const TrajectoryRecord r = run_trajectory(p, 77);
    CHECK(r.jumps.empty());
    CHECK(std::abs(std::abs(r.samples.back()[0]) - 1.0) < 1e-10);
  }
  SUBCASE("jump times increase") {
    const BasisPtr b = enumerate_sector(3, 2, 1);
    TrajectoryProblem p{random_state(b, 1), build_hubbard({3, 1.0, 1.0}, b),
                        build_jumps(JumpKind::spin, b, 2.0), 10.0, 0.01, {10.0}, {}};
    const TrajectoryRecord r = run_trajectory(p, 5);
    CHECK(r.jumps.size() > 5);
    for (std::size_t k = 1; k < r.jumps.size(); ++k) CHECK(r.jumps[k].time > r.jumps[k - 1].time);
  }
}

TEST_CASE("ensemble reproduces master-equation populations") {
  const BasisPtr b = enumerate_sector(2, 1, 1);
  const SparseOperator h = build_hubbard({2, 1.0, 1.0}, b);
  const JumpSet js = build_jumps(JumpKind::spin, b, 2.0);
  const StateVector psi0 = StateVector::basis_state(b, FockState{0b01U, 0b10U});
  const std::vector<double> times{0.5, 1.0, 2.0};
  TrajectoryProblem p{psi0, h, js, 2.0, 0.01, times, [](const StateVector& psi) {
                        std::vector<cplx> pop;
                        for (const cplx& a : psi.amplitudes) pop.emplace_back(std::norm(a));
                        return pop;
                      }};
  const EnsembleEstimate est = ensemble_average(p, 2000, 12345);
  const auto me = integrate_master(DensityMatrix::pure(psi0), h, js, 2.0, times);
  CHECK(est.total_jumps > 0);
  for (std::size_t t = 0; t < times.size(); ++t) {
    for (Eigen::Index k = 0; k < 4; ++k) {
      const double exact = me[t].second.matrix(k, k).real();
      CHECK(std::abs(est.mean[t][k].real() - exact) <= 3.0 * est.se_re[t][k]);
    }
  }
}

TEST_CASE("ensemble bookkeeping") {
  const BasisPtr b = enumerate_sector(3, 2, 1);
  const SparseOperator h = build_hubbard({3, 1.0, 1.0}, b);
  const JumpSet js = build_jumps(JumpKind::spin, b, 1.0);
  const ObservableKit kit(b);
  TrajectoryProblem p{random_state(b, 8), h, js, 2.0, 0.01, {1.0, 2.0}, [&kit](const StateVector& psi) {
                        const CMatrix c = eta_correlation_matrix(kit, psi).c;
                        return std::vector<cplx>(c.data(), c.data() + c.size());
                      }};
  SUBCASE("identical seeds give zero standard error") {
    const EnsembleEstimate est = ensemble_average(p, 4, 3, {1, true});
    for (const auto& row : est.se_re) {
      for (double v : row) CHECK(v == 0.0);
    }
  }
  SUBCASE("no dissipation gives zero variance") {
    TrajectoryProblem q = p;
    q.jumps = JumpSet{};
    const EnsembleEstimate est = ensemble_average(q, 5, 3);
    for (const auto& row : est.se_abs) {
      for (double v : row) CHECK(v < 1e-14);
    }
  }
  SUBCASE("thread count does not change the result") {
    const EnsembleEstimate one = ensemble_average(p, 20, 9, {1});
    const EnsembleEstimate three = ensemble_average(p, 20, 9, {3});
    CHECK(one.mean == three.mean);
    CHECK(one.se_re == three.se_re);
    CHECK(one.total_jumps == three.total_jumps);
  }
  SUBCASE("fewer than two trajectories") { CHECK_THROWS_AS(ensemble_average(p, 1, 3), DomainError); }
}

TEST_CASE("driven evolution") {
  const BasisPtr b = enumerate_sector(4, 2, 2);
  const SparseOperator h = build_hubbard({4, 1.0, 2.0}, b);
  const StateVector psi = random_state(b, 31);

  SUBCASE("V = 0 reduces to the static propagator") {
    const SparseOperator f = build_field_op(DriveParams{}, b);
    const StateVector out = integrate_schrodinger_td(psi, h, f, {0.0, 1.0}, 10.0, {10.0}, nullptr);
    CHECK(fidelity(out, krylov_propagate(h, psi, 10.0)) >= 1.0 - 1e-8);
  }
  SUBCASE("every profile conserves the eta pair number and S^z") {
    const ObservableKit kit(b);
    const ConservedSet c0 = conserved_set(kit, psi);
    for (auto kind : {ProfileKind::linear, ProfileKind::staggered, ProfileKind::random}) {
      DriveParams d;
      d.profile = kind;
      d.seed = 4;
      const SparseOperator f = build_field_op(d, b);
      const double bound = spectral_radius_bound(h) + 4.0 * spectral_radius_bound(f);
      const double dt = 0.005 / std::ceil(0.005 / (0.5 * rk4_unitary_step_bound(bound, 5.0, 1e-8)));
      double worst = 0.0;
      integrate_schrodinger_td(psi, h, f, {4.0, 1.0}, 5.0, grid(5.0, 10),
                               [&](double, const StateVector& s) {
                                 const ConservedSet c = conserved_set(kit, s);
                                 worst = std::max({worst, std::abs(c.eta_pair - c0.eta_pair) / c0.eta_pair,
                                                   std::abs(c.s_z - c0.s_z)});
                               },
                               {dt, 1e-8});
      CHECK(worst <= 1e-6);
    }
  }
  SUBCASE("excessive step size trips the norm guard") {
    const SparseOperator f = build_field_op(DriveParams{}, b);
    CHECK_THROWS_AS(integrate_schrodinger_td(psi, h, f, {20.0, 1.0}, 5.0, {5.0}, nullptr, {0.25, 1e-8}),
                    NumericalInstability);
  }
}

TEST_CASE("RK4 step bound") {
  const double dt = rk4_unitary_step_bound(10.0, 100.0, 1e-8);
  CHECK(dt > 0.0);
  // the loss per step times the number of steps meets the tolerance
  const double y = 10.0 * dt;
  CHECK(std::pow(y, 6) / 144.0 * (100.0 / dt) <= 1e-8 * (1.0 + 1e-9));
  CHECK(rk4_unitary_step_bound(20.0, 100.0, 1e-8) < dt);
}
