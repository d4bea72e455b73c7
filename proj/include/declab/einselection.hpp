#pragma once

// Pointer-basis selection: commutator tests, the predictability sieve,
// regime classification and Schmidt-basis comparisons.

#include <array>
#include <string>
#include <vector>

#include "declab/hilbert.hpp"
#include "declab/spinbath.hpp"

namespace declab {

struct InteractionSpec {
  SpaceLayout system_layout;
  SpaceLayout env_layout;
  Observable h_self;  // on system_layout
  Observable h_int;   // on system_layout.concat(env_layout)

  SpaceLayout layout() const { return system_layout.concat(env_layout); }
  Observable total() const;
  /// Throws LayoutMismatch when the pieces do not line up.
  void validate() const;
};

struct CommutatorReport {
  std::vector<double> norms;  // Frobenius norm of [P_n, H] per projector
  double tol = 0.0;
  bool passed = false;
};

/// Projectors may live on a sub-layout of `h`; they are embedded first.
CommutatorReport commutes(const std::vector<Observable>& projectors, const Observable& h, double tol = 1e-12);

/// sum_n lambda_n P_n over an orthogonal, complete family.
Observable preferred_observable(const std::vector<Observable>& projectors, const std::vector<double>& eigenvalues);

struct SieveEntry {
  std::size_t index = 0;  // position in the candidate list
  PureState candidate;
  double purity = 1.0;
  double entropy = 0.0;
};

struct SieveReport {
  double time = 0.0;
  std::vector<SieveEntry> entries;  // best first
};

/// Evolves |c><c| (x) rho_E under h_self + h_int, reduces onto the system,
/// and ranks by purity (descending), entropy (ascending), then index.
/// Scores within tie_tol are treated as equal.
SieveReport predictability_sieve(const InteractionSpec& spec, const DensityOperator& env_state,
                                 const std::vector<PureState>& candidates, double t, double tie_tol = 1e-12);
/// Same, over several times with a single diagonalization of H.
std::vector<SieveReport> predictability_sieve(const InteractionSpec& spec, const DensityOperator& env_state,
                                              const std::vector<PureState>& candidates, const std::vector<double>& times,
                                              double tie_tol = 1e-12, std::size_t workers = 1);

enum class Regime { InteractionDominated, SelfDominated, Intermediate };
std::string to_string(Regime r);

struct RegimeReport {
  Regime regime = Regime::Intermediate;
  double ratio = 0.0;  // ||h_int|| / ||h_self||, +inf when h_self = 0
  std::string prediction;
};

RegimeReport classify_regime(const InteractionSpec& spec, double low = 0.1, double high = 10.0);

double operator_norm(const CMatrix& m);

struct NearDegenerateEigen {
  std::array<double, 2> eigenvalues{};  // descending, summing to 1
  std::array<CVector, 2> eigenvectors;
  bool positive = true;  // both eigenvalues >= 0
};

/// Closed-form eigenpairs of [[1/2 + delta, conj(omega)], [omega, 1/2 - delta]].
NearDegenerateEigen near_degenerate_eigenvectors(double delta, Complex omega);

/// arccos |<u|v>| for unit vectors, so phases do not matter.
double angular_distance(const CVector& u, const CVector& v);
/// Principal angles between the column spans of a and b, ascending.
std::vector<double> principal_angles(const CMatrix& a, const CMatrix& b);

struct SchmidtPointerRow {
  double time = 0.0;
  std::vector<double> eigenvalues;    // of rho_S, descending
  std::vector<CVector> schmidt_basis;  // matching eigenvectors
  std::vector<double> angles;          // per Schmidt vector, smallest angle to any candidate
  double max_angle = 0.0;
  double gap = 0.0;  // smallest spacing between eigenvalues
  bool near_degenerate = false;  // gap < 1e-6
  bool rank_deficient = false;   // some eigenvalue < 1e-12
};

/// Instantaneous Schmidt basis of the system at {0, t/2, t} compared with
/// pointer candidates.
std::vector<SchmidtPointerRow> schmidt_vs_pointer(const InteractionSpec& spec, const PureState& env_state,
                                                  const PureState& system_state, double t,
                                                  const std::vector<CVector>& pointer_candidates);

/// Spin-bath model as an interaction spec (h_self = 0) and its environment state.
InteractionSpec spin_bath_spec(const SpinBathParams& p);
PureState spin_bath_environment(const SpinBathParams& p);

}  // namespace declab
