#include "etalab/errors.hpp"
#include "etalab/model.hpp"
#include "etalab/observables.hpp"
#include "etalab/spectra.hpp"

#include <doctest.h>

#include <numbers>
#include <numeric>
#include <random>

using namespace etalab;

namespace {

StateVector random_state(const BasisPtr& b, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> g;
  StateVector psi{b, CVector(b->size())};
  for (auto& a : psi.amplitudes) a = cplx(g(gen), g(gen));
  psi.normalize();
  return psi;
}

StateVector yang(int sites, int pairs) {
  StateVector psi = StateVector::basis_state(enumerate_sector(sites, 0, 0), {});
  for (int n = 0; n < pairs; ++n) {
    psi = apply(build_eta_ops(psi.basis).raise_total, psi);
    psi.normalize();
  }
  return psi;
}

}  // namespace

TEST_CASE("eta correlations of simple states") {
  SUBCASE("vacuum") {
    const BasisPtr b = enumerate_sector(3, 0, 0);
    const ObservableKit kit(b);
    const EtaCorrMatrix c = eta_correlation_matrix(kit, StateVector::basis_state(b, {}));
    CHECK(c.c.cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("one pair spread uniformly") {
    for (int m : {2, 3, 5}) {
      const StateVector y = yang(m, 1);
      const EtaCorrMatrix c = eta_correlation_matrix(ObservableKit(y.basis), y);
      CHECK((c.c - CMatrix::Constant(m, m, 1.0 / m)).cwiseAbs().maxCoeff() < 1e-14);
      CHECK(c.offdiag_spread() < 1e-14);
    }
  }
  SUBCASE("two pairs on four sites") {
    const StateVector y = yang(4, 2);
    const EtaCorrMatrix c = eta_correlation_matrix(ObservableKit(y.basis), y);
    CHECK(std::abs(c.total() - 6.0) < 1e-12);
    CHECK(c.hermiticity_defect() < 1e-14);
    // off-diagonal elements N (M - N) / (M (M - 1)) = 1/3
    CHECK(std::abs(c.offdiag_mean() - 1.0 / 3.0) < 1e-12);
    for (int j = 1; j < 4; ++j) CHECK(std::abs(distance_averaged_corr(c, j) - 1.0 / 3.0) < 1e-12);
    CHECK_THROWS_AS(distance_averaged_corr(c, 4), DomainError);
  }
}

TEST_CASE("ground-state correlations against the dense oracle") {
  const BasisPtr b = enumerate_sector(4, 2, 2);
  const ObservableKit kit(b);
  const StateVector g1 = ground_state(build_hubbard({4, 1.0, 1.0}, b)).vector;
  const StateVector g4 = ground_state(build_hubbard({4, 1.0, 4.0}, b)).vector;

  const EtaCorrMatrix c1 = eta_correlation_matrix(kit, g1);
  CHECK(std::abs(c1.c(0, 0).real() - 0.19104712704217908) < 1e-10);
  CHECK(std::abs(c1.c(0, 1).real() - (-0.15483571738366714)) < 1e-10);
  CHECK(std::abs(c1.c(0, 2).real() - (-0.007891996031674441)) < 1e-10);
  CHECK(std::abs(c1.c(0, 3).real() - (-0.02831941362683757)) < 1e-10);
  CHECK(std::abs(double_occupancy(kit, g1).sum() - 0.7950473536246492) < 1e-10);

  const EtaCorrMatrix c4 = eta_correlation_matrix(kit, g4);
  CHECK(std::abs(c4.c(0, 0).real() - 0.07280979568578076) < 1e-10);
  CHECK(std::abs(c4.c(0, 1).real() - (-0.06533365605919647)) < 1e-10);
  CHECK(std::abs(c4.c(0, 2).real() - (-0.004652940252422327)) < 1e-10);
  CHECK(std::abs(c4.c(0, 3).real() - (-0.0028231993741619416)) < 1e-10);
  CHECK(std::abs(double_occupancy(kit, g4).sum() - 0.33958565033936156) < 1e-10);

  const ConservedSet s = conserved_set(kit, g1);
  CHECK(std::abs(s.eta_pair) < 1e-10);
  CHECK(s.n_up == doctest::Approx(2.0));
  CHECK(s.n_down == doctest::Approx(2.0));
  CHECK(s.s_z == doctest::Approx(0.0));
  CHECK(s.eta_z == doctest::Approx(0.0));
}

TEST_CASE("pure and mixed evaluations agree") {
  const BasisPtr b = enumerate_sector(4, 2, 1);
  const ObservableKit kit(b);
  const StateVector psi = random_state(b, 17);
  const DensityMatrix rho = DensityMatrix::pure(psi);
  CHECK((eta_correlation_matrix(kit, psi).c - eta_correlation_matrix(kit, rho).c).cwiseAbs().maxCoeff() < 1e-13);
  CHECK((doublon_two_point(kit, psi) - doublon_two_point(kit, rho)).cwiseAbs().maxCoeff() < 1e-13);
  CHECK((double_occupancy(kit, psi) - double_occupancy(kit, rho)).cwiseAbs().maxCoeff() < 1e-13);
  const ConservedSet a = conserved_set(kit, psi), c = conserved_set(kit, rho);
  CHECK(std::abs(a.eta_pair - c.eta_pair) < 1e-13);
  CHECK(a.s_z == doctest::Approx(1.0));
}

TEST_CASE("double occupancy is the diagonal of both two-point functions") {
  const BasisPtr b = enumerate_sector(5, 2, 3);
  const ObservableKit kit(b);
  const StateVector psi = random_state(b, 2);
  const Eigen::VectorXd d = double_occupancy(kit, psi);
  const CMatrix c = eta_correlation_matrix(kit, psi).c;
  const CMatrix t = doublon_two_point(kit, psi);
  for (int i = 0; i < 5; ++i) {
    CHECK(std::abs(c(i, i) - d[i]) < 1e-13);
    CHECK(std::abs(t(i, i) - d[i]) < 1e-13);
  }
}

TEST_CASE("structure factor sum rules") {
  SUBCASE("D(pi) is the pair number over M on random states") {
    const BasisPtr b = enumerate_sector(4, 2, 2);
    const ObservableKit kit(b);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const StateVector psi = random_state(b, 100 + seed);
      const StructureFactor sf = structure_factor(kit, psi);
      REQUIRE(sf.qa.size() == 4);
      CHECK(sf.qa[2] == doctest::Approx(std::numbers::pi));
      CHECK(std::abs(sf.values[2] - conserved_set(kit, psi).eta_pair / 4.0) < 1e-12);
      const double total = std::accumulate(sf.values.begin(), sf.values.end(), 0.0);
      CHECK(std::abs(total - double_occupancy(kit, psi).sum()) < 1e-12);
    }
  }
  SUBCASE("two pairs on six sites") {
    const StateVector y = yang(6, 2);
    const StructureFactor sf = structure_factor(ObservableKit(y.basis), y);
    CHECK(std::abs(sf.values[3] - 10.0 / 6.0) < 1e-12);
    for (int n : {0, 1, 2, 4, 5}) CHECK(std::abs(sf.values[n] - (2.0 - 10.0 / 6.0) / 5.0) < 1e-12);
  }
}

TEST_CASE("sector projections") {
  SUBCASE("an eta pair state has no spin weight") {
    const StateVector y = yang(4, 2);
    CHECK_THROWS_AS(project_sector_matrix(DensityMatrix::pure(y), ProjectionKind::spin), DegenerateProjection);
  }
  SUBCASE("two-site pair state in the doublon block") {
    const StateVector y = yang(2, 1);
    const ProjectedBlock blk = project_sector_matrix(DensityMatrix::pure(y), ProjectionKind::doublon);
    CHECK(blk.labels == std::vector<std::string>{"10", "01"});
    CHECK((blk.matrix.cwiseAbs() - Eigen::MatrixXd::Constant(2, 2, 0.5)).cwiseAbs().maxCoeff() < 1e-14);
    CHECK(blk.matrix(0, 1).real() == doctest::Approx(-0.5));
    CHECK(blk.trace_before == doctest::Approx(1.0));
  }
  SUBCASE("spin labels descend with site 0 leftmost") {
    const BasisPtr b = enumerate_sector(3, 2, 1);
    const ProjectedBlock blk = project_sector_matrix(DensityMatrix::maximally_mixed(b), ProjectionKind::spin);
    CHECK(blk.labels == std::vector<std::string>{"110", "101", "011"});
    CHECK(blk.trace_before == doctest::Approx(3.0 / 9.0));
    CHECK(std::abs(blk.matrix.trace() - 1.0) < 1e-14);
  }
}

TEST_CASE("observables reject a foreign basis") {
  const ObservableKit kit(enumerate_sector(4, 2, 2));
  const StateVector psi = random_state(enumerate_sector(4, 1, 1), 1);
  CHECK_THROWS(eta_correlation_matrix(kit, psi));
}
