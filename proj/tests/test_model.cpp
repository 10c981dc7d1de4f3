#include "etalab/errors.hpp"
#include "etalab/model.hpp"
#include "etalab/spectra.hpp"

#include <doctest.h>

#include <cmath>

using namespace etalab;

namespace {

double dmax(const CMatrix& m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }
double cmax(const SparseOperator& a, const SparseOperator& b) { return dmax(commutator(a, b).dense()); }

}  // namespace

TEST_CASE("two-site ground energies") {
  const BasisPtr b = enumerate_sector(2, 1, 1);
  CHECK(ground_state(build_hubbard({2, 1.0, 0.0}, b)).value == doctest::Approx(-2.0).epsilon(1e-12));
  // independent dense oracle, also the closed form 2 - 2 sqrt(2)
  const double e = ground_state(build_hubbard({2, 1.0, 4.0}, b)).value;
  CHECK(std::abs(e - (-0.8284271247461863)) < 1e-12);
  CHECK(std::abs(e - (2.0 - 2.0 * std::sqrt(2.0))) < 1e-12);
}

TEST_CASE("Hubbard operator is Hermitian, real and sparse") {
  for (auto [m, nu, nd] : {std::tuple{4, 2, 2}, {5, 3, 1}, {6, 3, 3}}) {
    const BasisPtr b = enumerate_sector(m, nu, nd);
    const SparseOperator h = build_hubbard({m, 1.0, 2.5}, b);
    CHECK(h.hermitian());
    CHECK(h.hermiticity_defect() < 1e-12);
    const CMatrix d = h.dense();
    CHECK(d.imag().cwiseAbs().maxCoeff() == 0.0);
    const int bound = 2 * 2 * (nu + nd) + 1;
    for (Eigen::Index r = 0; r < h.matrix().outerSize(); ++r) {
      CHECK(h.matrix().innerVector(r).nonZeros() <= bound);
    }
  }
}

TEST_CASE("H commutes with eta+ eta- and eta^z at M=3") {
  const BasisPtr b = full_fock_space(3);
  const SparseOperator h = build_hubbard({3, 1.0, 2.0}, b);
  const EtaOperators eta = build_eta_ops(b);
  CHECK(cmax(h, eta.pair_number) < 1e-12);
  CHECK(cmax(h, eta.z_total) < 1e-12);
}

TEST_CASE("ladder relation [H, eta+] = U eta+ between sectors") {
  for (double u : {0.0, 1.5, 4.0}) {
    const BasisPtr b = enumerate_sector(3, 1, 1);
    const BasisPtr up = shifted_basis(b, 1, 1);
    const SparseOperator ep = build_eta_ops(b).raise_total;
    const SparseOperator lhs = build_hubbard({3, 1.0, u}, up) * ep - ep * build_hubbard({3, 1.0, u}, b);
    CHECK(dmax(lhs.dense() - u * ep.dense()) < 1e-12);
  }
}

TEST_CASE("invalid Hubbard parameters") {
  CHECK_THROWS_AS(build_hubbard({1, 1.0, 0.0}, enumerate_sector(1, 0, 0)), DomainError);
  CHECK_THROWS_AS(build_hubbard({2, 0.0, 0.0}, enumerate_sector(2, 1, 1)), DomainError);
}

TEST_CASE("field operator") {
  const BasisPtr b = enumerate_sector(4, 2, 2);
  DriveParams stag;
  stag.profile = ProfileKind::staggered;
  const Eigen::VectorXd f = build_field_op(stag, b).real_diagonal();
  // s^z = (+1, -1, +1, -1) and (-1, +1, -1, +1)
  CHECK(f[*b->index_of(FockState{0b0101U, 0b1010U})] == 4.0);
  CHECK(f[*b->index_of(FockState{0b1010U, 0b0101U})] == -4.0);

  DriveParams lin;
  CHECK(drive_profile(lin, 4) == std::vector<double>{0.0, 1.0, 2.0, 3.0});

  DriveParams rnd;
  rnd.profile = ProfileKind::random;
  rnd.seed = 42;
  const auto r1 = drive_profile(rnd, 6);
  CHECK(r1 == drive_profile(rnd, 6));
  for (double v : r1) {
    CHECK(v >= 0.0);
    CHECK(v < 2.0);
  }
  rnd.seed = 43;
  CHECK(r1 != drive_profile(rnd, 6));

  DriveParams custom;
  custom.profile = ProfileKind::custom;
  custom.custom = {1.0, 2.0};
  CHECK_THROWS_AS(build_field_op(custom, b), DomainError);
  CHECK(parse_profile_kind(to_string(ProfileKind::random)) == ProfileKind::random);
  CHECK_THROWS_AS(parse_profile_kind("sawtooth"), DomainError);
}

TEST_CASE("field operator commutes with every eta generator at M=3") {
  const BasisPtr b = full_fock_space(3);
  const EtaOperators eta = build_eta_ops(b);
  for (auto kind : {ProfileKind::linear, ProfileKind::staggered, ProfileKind::random}) {
    DriveParams p;
    p.profile = kind;
    p.seed = 5;
    const SparseOperator f = build_field_op(p, b);
    CHECK(f.is_diagonal());
    CHECK(cmax(f, eta.raise_total) < 1e-12);
    CHECK(cmax(f, eta.lower_total) < 1e-12);
    CHECK(cmax(f, eta.z_total) < 1e-12);
  }
}

TEST_CASE("jump operators") {
  SUBCASE("spin jumps commute with the eta generators at M=3") {
    const BasisPtr b = full_fock_space(3);
    const EtaOperators eta = build_eta_ops(b);
    const JumpSet js = build_jumps(JumpKind::spin, b, 2.0);
    CHECK(js.size() == 3);
    CHECK(js.all_diagonal());
    for (const auto& l : js.operators) {
      CHECK(cmax(l, eta.raise_total) < 1e-12);
      CHECK(cmax(l, eta.lower_total) < 1e-12);
      CHECK(cmax(l, eta.z_total) < 1e-12);
    }
  }
  SUBCASE("charge jumps do not commute with eta+ at M=2") {
    const BasisPtr b = full_fock_space(2);
    const JumpSet js = build_jumps(JumpKind::charge, b, 0.1);
    const SparseOperator ep = build_eta_ops(b).raise_total;
    for (const auto& l : js.operators) CHECK(cmax(l, ep) > 0.0);
  }
  SUBCASE("Hermitian jumps are unital") {
    const BasisPtr b = enumerate_sector(4, 2, 2);
    const JumpSet js = merge(build_jumps(JumpKind::spin, b, 1.0), build_jumps(JumpKind::charge, b, 0.5));
    CHECK(js.size() == 8);
    CHECK(js.unitality_defect(b).max_abs() == 0.0);
  }
  SUBCASE("negative rates are rejected") {
    CHECK_THROWS_AS(build_jumps(JumpKind::spin, enumerate_sector(2, 1, 1), -0.1), DomainError);
  }
}

TEST_CASE("strong-symmetry conditions for spin jumps at M <= 3") {
  for (int m : {2, 3}) {
    const BasisPtr b = full_fock_space(m);
    const SparseOperator h = build_hubbard({m, 1.0, 1.7}, b);
    const EtaOperators eta = build_eta_ops(b);
    const SparseOperator sz = build_spin_ops(b).sz_total;
    const JumpSet js = build_jumps(JumpKind::spin, b, 1.0);
    for (const SparseOperator* a : {&eta.pair_number, &eta.z_total, &sz}) {
      CHECK(cmax(h, *a) < 1e-12);
      for (const auto& l : js.operators) CHECK(cmax(l, *a) < 1e-12);
    }
  }
}
