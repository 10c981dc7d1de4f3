#pragma once

#include "etalab/fock.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace etalab {

/// Open-chain Hubbard parameters. Energies in units of the hopping tau.
struct HubbardParams {
  int sites = 2;
  double tau = 1.0;
  double U = 0.0;
};

enum class ProfileKind { linear, staggered, random, custom };

/// Periodic field V cos(Omega t) sum_i f(i) s^z_i.
struct DriveParams {
  double V = 0.0;
  double Omega = 1.0;
  ProfileKind profile = ProfileKind::linear;
  std::uint64_t seed = 0;      // random profile only
  std::vector<double> custom;  // custom profile only
};

ProfileKind parse_profile_kind(const std::string& name);
std::string to_string(ProfileKind kind);

/// f(0..M-1). linear: f(i) = i; staggered: (-1)^i; random: Uniform[0, 2]
/// drawn from mt19937_64(seed) as (x >> 11) * 2^-53 * 2.
std::vector<double> drive_profile(const DriveParams& p, int sites);

enum class JumpKind { spin, charge };

/// Jump operators with one rate per operator.
struct JumpSet {
  std::vector<SparseOperator> operators;
  std::vector<double> rates;

  std::size_t size() const { return operators.size(); }
  bool empty() const { return operators.empty(); }
  bool all_diagonal() const;
  /// sum_k [L_k, L_k^dag]; zero for Hermitian jumps.
  SparseOperator unitality_defect(const BasisPtr& basis) const;
};

JumpSet merge(JumpSet a, const JumpSet& b);

/// H = -tau sum_{<ij>,s} (c^dag_{s,i} c_{s,j} + h.c.) + U sum_i n_up,i n_down,i
/// with open boundaries.
SparseOperator build_hubbard(const HubbardParams& p, const BasisPtr& basis);

/// F = sum_i f(i) s^z_i, so that H(t) = H + V cos(Omega t) F.
SparseOperator build_field_op(const DriveParams& p, const BasisPtr& basis);
SparseOperator build_field_op(const std::vector<double>& profile, const BasisPtr& basis);

/// spin: L_j = s^z_j on every site; charge: L_m = n_up,m + n_down,m.
JumpSet build_jumps(JumpKind kind, const BasisPtr& basis, double gamma);

}  // namespace etalab
