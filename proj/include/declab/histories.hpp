#pragma once

// Consistent histories: projector families, class operators, the
// decoherence functional in both pictures, consistency checks,
// coarse-graining and branch-dependent Schmidt projectors.

#include <optional>
#include <string>
#include <vector>

#include "declab/hilbert.hpp"

namespace declab {

/// Size guards: brute-force path enumeration is exponential in both.
inline constexpr std::size_t kMaxHistoryTimes = 4;
inline constexpr std::size_t kMaxFamilySize = 8;

struct ProjectorFamily {
  double time = 0.0;
  SpaceLayout layout;  // may be a sub-layout of the state the family is used on
  std::vector<CMatrix> projectors;

  std::size_t size() const noexcept { return projectors.size(); }
  /// Rank-one projectors onto the canonical basis of `layout`.
  static ProjectorFamily computational(double time, SpaceLayout layout);
  /// Eigenprojectors of a Hermitian matrix, eigenvalues within `gap` merged.
  static ProjectorFamily spectral(double time, SpaceLayout layout, const CMatrix& hermitian, double gap = 1e-8);
};

struct FamilyDiagnostics {
  double completeness = 0.0;   // ||sum P - I||_max
  double hermiticity = 0.0;    // worst over members
  double idempotence = 0.0;    // worst ||P^2 - P||_max
  std::vector<double> orthogonality;  // ||P_a P_b||_max for a < b, row-major over pairs
  double max_orthogonality = 0.0;
  bool passed = false;
};

FamilyDiagnostics validate_family(const ProjectorFamily& family, double tol = 1e-10);

struct HistoryStep {
  std::size_t family = 0;     // index into HistorySet::families
  std::size_t projector = 0;  // index into that family
  friend bool operator==(const HistoryStep&, const HistoryStep&) = default;
};

struct History {
  std::vector<HistoryStep> steps;  // time ordered
  bool branch_dependent = false;

  /// "f0:p0,f1:p1,..." for reports.
  std::string label() const;
  friend bool operator==(const History&, const History&) = default;
};

struct HistorySet {
  std::vector<ProjectorFamily> families;
  std::vector<History> histories;

  /// Common time grid; GridMismatch when histories disagree, InvalidArgument
  /// when times do not increase or indices are out of range, InvalidProjector
  /// when a family fails validate_family, SizeGuard above the limits.
  std::vector<double> times() const;
};

/// Every combination of one projector per family, lexicographic in the
/// projector indices (the first family varies slowest).
HistorySet fine_grained_histories(std::vector<ProjectorFamily> families);

/// U(t_{i-1}, t_i) for a grid t_1 < ... < t_n, with t_0 the preparation time.
struct Propagation {
  double t0 = 0.0;
  std::vector<double> times;
  std::vector<CMatrix> steps;

  static Propagation from_hamiltonian(const HamiltonianSpectrum& h, double t0, std::vector<double> times);
  /// U(t0, t_i).
  CMatrix cumulative(std::size_t i) const;
};

struct DecoherenceFunctional {
  std::vector<History> histories;
  CMatrix values;

  /// NotFound when the history is not part of the functional.
  std::size_t index_of(const History& h) const;
};

enum class Picture { Schroedinger, Heisenberg };

/// D(a, b) = Tr[C_a rho0 C_b^dagger] with C_a = P_n U_n ... P_1 U_1 in the
/// Schroedinger picture or C_a = P_n(t_n) ... P_1(t_1) with
/// P(t) = U(t0,t)^dagger P U(t0,t) in the Heisenberg picture.
DecoherenceFunctional decoherence_functional(const HistorySet& set, const DensityOperator& rho0,
                                             const Propagation& propagation, Picture picture = Picture::Schroedinger,
                                             std::size_t workers = 1);

/// Class operator of one history (full-space matrix, Schroedinger picture).
CMatrix class_operator(const HistorySet& set, const History& h, const Propagation& propagation, const SpaceLayout& layout);

double probability(const History& h, const DecoherenceFunctional& d);

enum class ConsistencyMode { Weak, Medium };
std::string to_string(ConsistencyMode m);

struct ConsistencyReport {
  ConsistencyMode mode = ConsistencyMode::Medium;
  double tol = 0.0;
  double max_violation = 0.0;  // |Re D| (weak) or |D| (medium) over a != b
  std::size_t worst_a = 0, worst_b = 0;
  bool passed = true;
};

ConsistencyReport check_consistency(const DecoherenceFunctional& d, ConsistencyMode mode, double tol = 1e-8);

struct CoarseGrained {
  std::vector<std::size_t> members;  // indices into the functional
  double probability = 0.0;          // sum over a, b in members of D(a, b)
  double member_sum = 0.0;           // sum of D(a, a)
  double violation = 0.0;            // probability - member_sum
};

/// Merges the given histories into one coarse-grained history.
CoarseGrained combine(const DecoherenceFunctional& d, const std::vector<std::size_t>& members);

/// partition[i] splits the projector indices used at time i into cells.
/// One coarse-grained history per combination of cells; BadGrouping when a
/// partition is not a partition of the indices appearing at that time.
struct CoarseGrainedHistory {
  std::vector<std::size_t> cells;  // cell index per time
  CoarseGrained result;
};
std::vector<CoarseGrainedHistory> coarse_grain(const DecoherenceFunctional& d,
                                               const std::vector<std::vector<std::vector<std::size_t>>>& partition);

/// Branch-dependent families built from the eigenprojectors of the
/// path-projected reduced state at each grid time.
struct SchmidtBranch {
  std::vector<std::size_t> prefix;  // projector choices at earlier times
  double time = 0.0;
  double weight = 0.0;              // Tr of the unnormalized branch state
  std::vector<double> eigenvalues;  // per projector, descending
  std::size_t family = 0;           // index into SchmidtHistories::set.families
  double commutator = 0.0;          // max ||[P, rho_branch]||_F
  bool degenerate = false;          // nonzero eigenvalues closer than the gap were merged
};

struct SchmidtHistories {
  SpaceLayout system_layout;
  std::vector<double> times;
  std::vector<SchmidtBranch> branches;  // breadth first
  HistorySet set;                       // system families, branch-dependent histories
  double max_commutator = 0.0;
  bool commutator_ok = true;            // max_commutator < 1e-8
};

/// Branches with weight below `prune` are not expanded further.
SchmidtHistories schmidt_history_projectors(const PureState& psi0, const LabelSet& system, const HamiltonianSpectrum& h,
                                            double t0, const std::vector<double>& times, double gap = 1e-8,
                                            double prune = 1e-14);

struct InstabilityReport {
  std::vector<double> common_times;
  std::vector<double> distances;  // Hausdorff distance between projector sets per common time
  double max_distance = 0.0;
};

/// Compares the projectors produced on two grids at the times they share.
InstabilityReport projector_instability(const SchmidtHistories& a, const SchmidtHistories& b);

struct ReducedComparison {
  DecoherenceFunctional full;
  CMatrix reduced;  // same history order as `full`
  double max_discrepancy = 0.0;
};

/// Evaluates D for system-only histories from the exact global evolution and
/// from a reduced evolution that re-prepares rho_S (x) rho_E between grid
/// times, and reports the largest entrywise difference.
ReducedComparison reduced_functional_discrepancy(const HistorySet& system_set, const DensityOperator& rho_system,
                                                 const DensityOperator& rho_env, const HamiltonianSpectrum& h, double t0);

}  // namespace declab
