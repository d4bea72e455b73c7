#pragma once

// Premeasurement unitaries, the system-apparatus-environment chain, and
// basis rewrites of bipartite states.

#include <filesystem>
#include <optional>
#include <vector>

#include "declab/hilbert.hpp"

namespace declab {

struct MeasurementSetup {
  SpaceLayout system_layout{{"S", 2}};
  SpaceLayout apparatus_layout{{"A", 2}};
  SpaceLayout environment_layout{{"E", 2}};

  std::vector<CVector> system_basis;    // |s_n>, orthonormal
  CVector ready_state;                  // |a_r>
  std::vector<CVector> pointer_states;  // |a_n>, orthonormal
  std::optional<CVector> environment_ready;  // |e_0>
  std::vector<CVector> environment_records;  // |e_n>, unit norm, overlaps allowed

  bool has_environment() const noexcept { return environment_ready.has_value(); }
  std::size_t outcomes() const noexcept { return system_basis.size(); }
  SpaceLayout joint_layout() const;  // S,A or S,A,E

  /// Throws InvalidSetup with the offending field.
  void validate() const;

  /// Canonical bases: |s_n> = |n>, |a_r> = |0>, |a_n> = |n>, and with an
  /// environment |e_0> = |0>, |e_n> = |n>.
  static MeasurementSetup computational(std::size_t outcomes, bool with_environment);
};

/// W = sum_n |s_n><s_n| (x) V_n + P_perp (x) I on S,A, where V_n is a unitary
/// with V_n |a_r> = |a_n> built from Gram-Schmidt completions.
CMatrix premeasurement_unitary(const MeasurementSetup& setup);
/// U = sum_n |a_n><a_n| (x) U_n + Q_perp (x) I on A,E with U_n |e_0> = |e_n>.
CMatrix record_unitary(const MeasurementSetup& setup);

/// W (|system> (x) |a_r>) = sum_n c_n |s_n>|a_n>.
PureState premeasure(const PureState& system, const MeasurementSetup& setup);
/// Premeasurement followed by the apparatus-environment record step.
PureState chain(const PureState& system, const MeasurementSetup& setup);

struct RebasisResult {
  std::vector<double> coefficients;  // c'_n >= 0; phases live in the partners
  std::vector<CVector> basis;        // |s'_n> as given
  std::vector<CVector> partners;     // unit |a'_n>, zero vector where c'_n = 0
  SpaceLayout left_layout;
  SpaceLayout right_layout;
  double max_partner_overlap = 0.0;  // largest |<a'_m|a'_n>| over m != n
  bool partners_orthogonal = false;
  bool schmidt_unique = false;  // all nonzero Schmidt coefficients distinct
  double reconstruction_error = 0.0;

  CVector reconstruct() const;  // in left,right factor order
};

/// Expands psi over a complete orthonormal basis of the left side. The
/// reconstruction is ordered as left_layout.concat(right_layout).
RebasisResult rebasis(const PureState& psi, const LabelSet& left, const LabelSet& right,
                      const std::vector<CVector>& new_left_basis, double orth_tol = 1e-8);

/// Loads a setup from a YAML manifest whose entries name text vector files
/// relative to the manifest's directory:
///
///   system_basis: [s0.txt, s1.txt]
///   ready_state: ar.txt
///   pointer_states: [a0.txt, a1.txt]
///   environment_ready: e0.txt          # optional
///   environment_records: [e0.txt, e1.txt]
MeasurementSetup load_measurement_setup(const std::filesystem::path& manifest);

}  // namespace declab
