#pragma once

// Environment-assisted invariance on bipartite Schmidt states, and the
// equal-amplitude probability derivation with its counting extension.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <boost/rational.hpp>

#include "declab/hilbert.hpp"

namespace declab {

using Rational = boost::rational<std::int64_t>;

/// psi = sum_k c_k e^{i phi_k} |s_k>|e_k>.
///
/// Basis vectors are either given densely (system_basis / env_basis) or,
/// when those are empty, taken as canonical basis states at
/// system_index[k] / env_index[k]. The index form keeps large fine-grained
/// states cheap; every transform below preserves whichever form it gets.
struct SchmidtState {
  std::vector<double> coefficients;
  std::vector<double> phases;
  std::size_t system_dim = 0;
  std::size_t env_dim = 0;
  std::vector<CVector> system_basis;
  std::vector<CVector> env_basis;
  std::vector<std::size_t> system_index;
  std::vector<std::size_t> env_index;

  std::size_t terms() const noexcept { return coefficients.size(); }
  bool indexed() const noexcept { return system_basis.empty() && env_basis.empty(); }
  Complex amplitude(std::size_t k) const;
  CVector system_vector(std::size_t k) const;
  CVector env_vector(std::size_t k) const;

  /// Throws InvalidArgument on any broken invariant.
  void validate() const;
  /// Layout S:system_dim, E:env_dim; SizeGuard above dimension 4096.
  PureState to_pure() const;

  /// K canonical terms with the given coefficients (normalized) and phases.
  static SchmidtState canonical(const std::vector<double>& coefficients, const std::vector<double>& phases = {});
  static SchmidtState equal(std::size_t k, const std::vector<double>& phases = {});
};

/// |<a|b>| computed in Schmidt coordinates when both states are indexed
/// over the same dimensions, densely otherwise.
double fidelity(const SchmidtState& a, const SchmidtState& b);
/// Diagonal of the system reduced state in the canonical basis.
std::vector<double> system_populations(const SchmidtState& psi);

struct PairedTransform {
  CMatrix u_system;
  CMatrix u_env;
};

/// Applies u_system (x) u_env and compares with psi up to global phase.
bool is_envariant(const SchmidtState& psi, const PairedTransform& pair, double tol = 1e-12);
double envariance_residual(const SchmidtState& psi, const PairedTransform& pair);

/// u_S = sum_k e^{i xi_k}|s_k><s_k|, u_E = sum_k e^{-i xi_k}|e_k><e_k| (identity off the Schmidt span).
PairedTransform phase_transform(const SchmidtState& psi, const std::vector<double>& xi);
/// Applies the system half of the phase transform only.
SchmidtState apply_system_phases(const SchmidtState& psi, const std::vector<double>& xi);

/// System swap u_S = e^{i xi_ij}|s_i><s_j| + e^{i xi_ji}|s_j><s_i| + rest.
SchmidtState swap(const SchmidtState& psi, std::size_t i, std::size_t j, double xi_ij = 0.0, double xi_ji = 0.0);
/// Two-term form; ArityError for any other term count.
SchmidtState swap(const SchmidtState& psi, double xi_12 = 0.0, double xi_21 = 0.0);
/// Environment swap u_E = e^{i eta_ij}|e_i><e_j| + e^{i eta_ji}|e_j><e_i| + rest.
SchmidtState counterswap(const SchmidtState& psi, std::size_t i, std::size_t j, double eta_ij, double eta_ji);

struct SwapPhases {
  double eta_ij = 0.0;
  double eta_ji = 0.0;
};
/// Environment phases that undo swap(psi, i, j, xi_ij, xi_ji) when |c_i| = |c_j|.
SwapPhases matching_counterswap(const SchmidtState& psi, std::size_t i, std::size_t j, double xi_ij, double xi_ji);
/// Dense swap / counterswap pair on psi's bases.
PairedTransform swap_transform(const SchmidtState& psi, std::size_t i, std::size_t j, double xi_ij, double xi_ji);

enum class ProofStep { PerfectCorrelation, SwapRelabeling, CounterswapRestoration, Unaffectedness, Conclusion };
std::string to_string(ProofStep s);

/// One link of the equality chain, checked for every transposition (0, k);
/// residual is the worst case over them.
struct ProofEntry {
  ProofStep step = ProofStep::Conclusion;
  std::string assumptions;  // "A4", "A2+A3", ...
  std::string statement;
  double residual = 0.0;
  std::size_t checks = 0;
};

struct Derivation {
  std::vector<Rational> probabilities;
  std::vector<ProofEntry> trace;  // in ProofStep order
  double max_residual = 0.0;
  bool dense_checked = false;  // transpositions also verified on the full state vector
};

/// Equal-amplitude states only (NotEqualAmplitude otherwise). Runs the
/// swap / counterswap argument for every transposition (0, k) in Schmidt
/// coordinates and closes with normalization.
Derivation derive_equal_probabilities(const SchmidtState& psi, double amplitude_tol = 1e-12);

struct FineGrained {
  SchmidtState extended;  // M equal terms; system side S (x) C with C of dimension M
  std::size_t denominator = 0;
  std::vector<std::size_t> outcome_of_term;
  std::vector<std::size_t> multiplicities;  // m_k
  std::vector<Rational> probabilities;      // m_k / M from counting
  Derivation derivation;
};

/// Squared coefficients m_k/M summing to exactly 1; M <= 10^6.
FineGrained fine_grain(const std::vector<Rational>& squared_coefficients);

struct RationalApproximation {
  std::vector<Rational> values;
  double max_error = 0.0;
  double bound = 0.0;  // 1 / max_denominator
};

/// Largest-remainder rounding of non-negative weights summing to 1 onto a
/// common denominator.
RationalApproximation approximate_weights(const std::vector<double>& weights, std::int64_t max_denominator);

/// "m/M" or "m".
Rational parse_rational(std::string_view text);
std::string to_string(const Rational& r);

}  // namespace declab
