#include "etalab/model.hpp"

#include "etalab/errors.hpp"

#include <bit>
#include <random>

namespace etalab {

ProfileKind parse_profile_kind(const std::string& name) {
  if (name == "linear") return ProfileKind::linear;
  if (name == "staggered") return ProfileKind::staggered;
  if (name == "random") return ProfileKind::random;
  if (name == "custom") return ProfileKind::custom;
  throw DomainError("unknown drive profile '" + name + "'");
}

std::string to_string(ProfileKind kind) {
  switch (kind) {
    case ProfileKind::linear: return "linear";
    case ProfileKind::staggered: return "staggered";
    case ProfileKind::random: return "random";
    case ProfileKind::custom: return "custom";
  }
  return "?";
}

std::vector<double> drive_profile(const DriveParams& p, int sites) {
  std::vector<double> f(sites);
  switch (p.profile) {
    case ProfileKind::linear:
      for (int i = 0; i < sites; ++i) f[i] = i;
      break;
    case ProfileKind::staggered:
      for (int i = 0; i < sites; ++i) f[i] = (i % 2 == 0) ? 1.0 : -1.0;
      break;
    case ProfileKind::random: {
      std::mt19937_64 gen(p.seed);
      for (int i = 0; i < sites; ++i) f[i] = 2.0 * static_cast<double>(gen() >> 11) * 0x1.0p-53;
      break;
    }
    case ProfileKind::custom:
      if (static_cast<int>(p.custom.size()) != sites) {
        throw DomainError("custom profile has " + std::to_string(p.custom.size()) +
                          " entries for " + std::to_string(sites) + " sites");
      }
      f = p.custom;
      break;
  }
  return f;
}

bool JumpSet::all_diagonal() const {
  for (const auto& op : operators) {
    if (!op.is_diagonal()) return false;
  }
  return true;
}

SparseOperator JumpSet::unitality_defect(const BasisPtr& basis) const {
  SparseOperator sum = SparseOperator::zero(basis, basis);
  for (const auto& op : operators) sum = sum + commutator(op, op.adjoint());
  return sum;
}

JumpSet merge(JumpSet a, const JumpSet& b) {
  a.operators.insert(a.operators.end(), b.operators.begin(), b.operators.end());
  a.rates.insert(a.rates.end(), b.rates.begin(), b.rates.end());
  return a;
}

SparseOperator build_hubbard(const HubbardParams& p, const BasisPtr& basis) {
  if (p.sites < 2) throw DomainError("Hubbard chain needs at least 2 sites");
  if (!(p.tau > 0.0)) throw DomainError("hopping tau must be positive");
  if (basis->sites() != p.sites) throw ShapeError("basis site count differs from model");

  Eigen::VectorXd interaction(basis->size());
  for (std::size_t k = 0; k < basis->size(); ++k) {
    const FockState& s = basis->state(k);
    interaction[k] = p.U * std::popcount(s.up & s.down);
  }
  SparseOperator h = SparseOperator::diagonal(basis, interaction);

  for (int i = 0; i + 1 < p.sites; ++i) {
    for (Spin spin : {Spin::up, Spin::down}) {
      // c^dag_i c_j for j = i + 1; the hermitian partner is its adjoint.
      SparseOperator c_j = build_fermion_op(basis, i + 1, spin, false);
      if (c_j.empty_image()) continue;
      SparseOperator hop = build_fermion_op(c_j.codomain(), i, spin, true) * c_j;
      h = h + cplx(-p.tau) * (hop + hop.adjoint());
    }
  }
  h.mark_hermitian();
  return h;
}

SparseOperator build_field_op(const std::vector<double>& profile, const BasisPtr& basis) {
  if (static_cast<int>(profile.size()) != basis->sites()) {
    throw DomainError("field profile length differs from site count");
  }
  Eigen::VectorXd d = Eigen::VectorXd::Zero(basis->size());
  for (std::size_t k = 0; k < basis->size(); ++k) {
    const FockState& s = basis->state(k);
    for (int i = 0; i < basis->sites(); ++i) {
      const double sz = (s.occupied(i, Spin::up) ? 1.0 : 0.0) - (s.occupied(i, Spin::down) ? 1.0 : 0.0);
      d[k] += profile[i] * sz;
    }
  }
  return SparseOperator::diagonal(basis, d);
}

SparseOperator build_field_op(const DriveParams& p, const BasisPtr& basis) {
  if (!(p.Omega > 0.0)) throw DomainError("drive frequency Omega must be positive");
  return build_field_op(drive_profile(p, basis->sites()), basis);
}

JumpSet build_jumps(JumpKind kind, const BasisPtr& basis, double gamma) {
  if (gamma < 0.0) throw DomainError("jump rate must be non-negative");
  JumpSet set;
  for (int i = 0; i < basis->sites(); ++i) {
    Eigen::VectorXd d(basis->size());
    for (std::size_t k = 0; k < basis->size(); ++k) {
      const FockState& s = basis->state(k);
      const double nu = s.occupied(i, Spin::up) ? 1.0 : 0.0;
      const double nd = s.occupied(i, Spin::down) ? 1.0 : 0.0;
      d[k] = kind == JumpKind::spin ? nu - nd : nu + nd;
    }
    set.operators.push_back(SparseOperator::diagonal(basis, d));
    set.rates.push_back(gamma);
  }
  return set;
}

}  // namespace etalab
