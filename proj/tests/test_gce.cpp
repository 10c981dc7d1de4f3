#include "etalab/errors.hpp"
#include "etalab/evolve.hpp"
#include "etalab/gce.hpp"
#include "etalab/model.hpp"
#include "etalab/spectra.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace etalab;

namespace {

GceTargets sector_target(int m, int nu, int nd, double eta_pair) {
  GceTargets t;
  t.sites = m;
  t.n_up = nu;
  t.n_down = nd;
  t.eta_pair = eta_pair;
  return t;
}

}  // namespace

TEST_CASE("eta pair spectrum") {
  SUBCASE("two sites at half filling") {
    const EtaPairSpectrum s = etapair_spectrum(2, Sector{1, 1});
    REQUIRE(s.blocks.size() == 1);
    const EtaPairBlock& b = s.blocks[0];
    CHECK(b.eigenvalues.size() == 4);
    CHECK(b.levels.size() == 2);
    CHECK(b.levels[0] == doctest::Approx(0.0));
    CHECK(b.levels[1] == doctest::Approx(2.0));
    CHECK(b.degeneracy == std::vector<int>{3, 1});
  }
  SUBCASE("four sites at half filling") {
    const EtaPairSpectrum s = etapair_spectrum(4, Sector{2, 2});
    const EtaPairBlock& b = s.blocks[0];
    REQUIRE(b.levels.size() == 3);
    CHECK(b.degeneracy == std::vector<int>{20, 15, 1});
    CHECK(s.max_level() == doctest::Approx(6.0));
    CHECK(s.min_level() == doctest::Approx(0.0));
    CHECK(b.eigenvalues.minCoeff() > -1e-12);
  }
  SUBCASE("largest level is N (M - N + 1)") {
    CHECK(etapair_spectrum(3, Sector{1, 1}).max_level() == doctest::Approx(3.0));
    CHECK(etapair_spectrum(5, Sector{2, 2}).max_level() == doctest::Approx(8.0));
    CHECK(etapair_spectrum(3, Sector{2, 1}).max_level() == doctest::Approx(2.0));
  }
  SUBCASE("full space covers every sector") {
    const EtaPairSpectrum s = etapair_spectrum(2, std::nullopt);
    CHECK(s.blocks.size() == 9);
    std::size_t dim = 0;
    for (const auto& b : s.blocks) dim += b.basis->size();
    CHECK(dim == 16);
  }
}

TEST_CASE("mode names") {
  for (GceMode m : {GceMode::fixed_sector, GceMode::full_space}) CHECK(parse_gce_mode(to_string(m)) == m);
  CHECK_THROWS_AS(parse_gce_mode("canonical"), DomainError);
}

TEST_CASE("maximally mixed target gives zero multiplier") {
  const GceSolution sol = solve_multipliers(sector_target(4, 2, 2, 1.0));
  CHECK(std::abs(sol.mu[0]) < 1e-8);
  CHECK(sol.mu[1] == 0.0);
  CHECK(sol.mu[2] == 0.0);
  const GceExpectations ex = gce_expectations(sol);
  CHECK(std::abs(ex.offdiag) < 1e-10);
  CHECK(ex.double_occupancy.sum() == doctest::Approx(1.0));
}

TEST_CASE("interior targets are met") {
  for (double target : {0.3, 1.7, 4.5}) {
    const GceSolution sol = solve_multipliers(sector_target(4, 2, 2, target));
    CHECK(std::abs(sol.moments()[0] - target) < 1e-10);
    CHECK(std::abs(sol.residuals[0]) < 1e-10);
    CHECK(std::isfinite(sol.mu[0]));
    CHECK_FALSE(sol.saturated.has_value());
  }
  const GceSolution lo = solve_multipliers(sector_target(4, 2, 2, 0.3));
  const GceSolution hi = solve_multipliers(sector_target(4, 2, 2, 4.5));
  CHECK(lo.mu[0] < 0.0);
  CHECK(hi.mu[0] > 0.0);
}

TEST_CASE("edge targets") {
  SUBCASE("error policy") {
    try {
      solve_multipliers(sector_target(4, 2, 2, 6.0));
      FAIL("expected a boundary error");
    } catch (const GceBoundaryError& e) {
      CHECK(e.charge() == "eta_pair");
      CHECK(e.upper());
    }
    CHECK_THROWS_AS(solve_multipliers(sector_target(4, 2, 2, 0.0)), GceBoundaryError);
    CHECK_THROWS_AS(solve_multipliers(sector_target(4, 2, 2, 7.0)), GceBoundaryError);
  }
  SUBCASE("limit policy matches the ground state of U = 1") {
    const BasisPtr b = enumerate_sector(4, 2, 2);
    const StateVector g = ground_state(build_hubbard({4, 1.0, 1.0}, b)).vector;
    const double target = conserved_set(ObservableKit(b), g).eta_pair;
    GceOptions opts;
    opts.boundary = BoundaryPolicy::limit;
    const GceSolution sol = solve_multipliers(sector_target(4, 2, 2, target), opts);
    CHECK(std::abs(sol.moments()[0] - target) < 1e-10);
    CHECK(std::isinf(sol.mu[0]));
    CHECK(sol.mu[0] < 0.0);
    REQUIRE(sol.saturated.has_value());
    CHECK(*sol.saturated == "eta_pair");
    const GceExpectations ex = gce_expectations(sol);
    CHECK(std::abs(ex.offdiag - (-1.0 / 15.0)) < 1e-12);
    CHECK(ex.double_occupancy.sum() == doctest::Approx(0.8));
  }
  SUBCASE("limit policy at the top level") {
    GceOptions opts;
    opts.boundary = BoundaryPolicy::limit;
    const GceSolution sol = solve_multipliers(sector_target(4, 2, 2, 6.0), opts);
    CHECK(sol.mu[0] == std::numeric_limits<double>::infinity());
    CHECK(std::abs(gce_expectations(sol).offdiag - 1.0 / 3.0) < 1e-12);
  }
}

TEST_CASE("fixed-sector mode needs integer particle numbers") {
  GceTargets t = sector_target(4, 2, 2, 1.0);
  t.n_up = 1.5;
  CHECK_THROWS_AS(solve_multipliers(t), DomainError);
}

TEST_CASE("off-diagonal sum rule") {
  const EtaPairSpectrum spec = etapair_spectrum(4, Sector{2, 2});
  for (double mu1 : {-1.0, 0.5, 2.0}) {
    const GceExpectations ex = gce_expectations(gce_state(spec, {mu1, 0.0, 0.0}, GceMode::fixed_sector));
    CHECK(std::abs(ex.offdiag - ex.offdiag_sum_rule) < 1e-12);
    CHECK(ex.offdiag_spread < 1e-12);
    CHECK(std::abs(ex.corr.total() - ex.eta_pair) < 1e-12);
  }
}

TEST_CASE("the ensemble commutes with H") {
  const GceSolution sol = solve_multipliers(sector_target(4, 2, 2, 2.2));
  const auto blocks = sol.density_blocks();
  REQUIRE(blocks.size() == 1);
  const DensityMatrix& rho = blocks[0];
  CHECK(std::abs(rho.trace() - 1.0) < 1e-12);
  CHECK(rho.min_eigenvalue() > -1e-12);
  for (double u : {0.0, 1.0, 6.0}) {
    const CMatrix h = build_hubbard({4, 1.0, u}, rho.basis).dense();
    CHECK((h * rho.matrix - rho.matrix * h).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("full-space mode") {
  GceTargets t;
  t.sites = 3;
  t.mode = GceMode::full_space;
  t.eta_pair = 1.2;
  t.n_up = 1.3;
  t.n_down = 1.6;
  const GceSolution sol = solve_multipliers(t);
  const auto m = sol.moments();
  CHECK(std::abs(m[0] - 1.2) < 1e-9);
  CHECK(std::abs(m[1] - 1.3) < 1e-9);
  CHECK(std::abs(m[2] - 1.6) < 1e-9);
  double total = 0.0;
  for (const auto& b : sol.density_blocks()) total += b.trace().real();
  CHECK(total == doctest::Approx(1.0));
  CHECK_NOTHROW(gce_expectations(sol));

  t.n_up = 0.0;
  CHECK_THROWS_AS(solve_multipliers(t), GceBoundaryError);
}

TEST_CASE("spin-dephased long-time state reaches the ensemble value") {
  const BasisPtr b = enumerate_sector(4, 2, 2);
  const SparseOperator h = build_hubbard({4, 1.0, 1.0}, b);
  const JumpSet js = build_jumps(JumpKind::spin, b, 2.0);
  const DensityMatrix rho0 = DensityMatrix::pure(ground_state(build_hubbard({4, 1.0, 4.0}, b)).vector);
  const auto out = integrate_master(rho0, h, js, 200.0, {200.0});
  const EtaCorrMatrix c = eta_correlation_matrix(ObservableKit(b), out.back().second);
  CHECK(std::abs(c.offdiag_mean() - (-1.0 / 15.0)) < 1e-3);
  CHECK(c.offdiag_spread() < 1e-4);
}
