#pragma once

// Dense states and operators over labeled tensor-product spaces.
//
// Amplitude ordering is row-major over the factor order of a SpaceLayout:
// the first factor is the most significant digit of the flat index. Every
// golden file and text matrix in the project relies on this convention.

#include <array>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "declab/errors.hpp"

namespace declab {

using Complex = std::complex<double>;
using CVector = Eigen::VectorXcd;
using CMatrix = Eigen::MatrixXcd;
using LabelSet = std::vector<std::string>;

inline constexpr double kConstructionTol = 1e-12;
inline constexpr double kIdentityTol = 1e-10;
inline constexpr double kPositivityTol = 1e-10;
inline constexpr std::size_t kMaxDimension = std::size_t{1} << 14;

struct Factor {
  std::string label;
  std::size_t dim = 1;

  bool operator==(const Factor&) const = default;
};

class SpaceLayout {
 public:
  SpaceLayout() = default;
  explicit SpaceLayout(std::vector<Factor> factors);
  SpaceLayout(std::initializer_list<Factor> factors);

  /// n qubit factors labeled prefix0 .. prefix{n-1}.
  static SpaceLayout qubits(std::size_t n, std::string_view prefix = "q");
  /// Inverse of to_string(): "S:2,E:4".
  static SpaceLayout parse(std::string_view text);

  const std::vector<Factor>& factors() const noexcept { return factors_; }
  std::size_t num_factors() const noexcept { return factors_.size(); }
  std::size_t dim() const noexcept { return dim_; }
  LabelSet labels() const;

  bool contains(std::string_view label) const noexcept;
  std::size_t position(std::string_view label) const;

  /// Sub-layout holding the given labels, in this layout's factor order.
  SpaceLayout restrict_to(const LabelSet& keep) const;
  /// Labels not in `keep`, in factor order.
  LabelSet complement(const LabelSet& keep) const;
  SpaceLayout concat(const SpaceLayout& other) const;

  std::string to_string() const;

  bool operator==(const SpaceLayout& other) const { return factors_ == other.factors_; }

 private:
  std::vector<Factor> factors_;
  std::size_t dim_ = 1;
};

/// For a subset of factors, the flat sub-index and complement sub-index of
/// every flat index of the full layout.
struct IndexSplit {
  std::vector<std::size_t> inner;
  std::vector<std::size_t> outer;
  std::size_t inner_dim = 1;
  std::size_t outer_dim = 1;
};

IndexSplit split_indices(const SpaceLayout& layout, const LabelSet& inner_labels);

class PureState {
 public:
  /// Validates length and unit norm (within kConstructionTol).
  PureState(SpaceLayout layout, CVector amplitudes);

  static PureState normalized(SpaceLayout layout, CVector amplitudes);
  static PureState basis(SpaceLayout layout, std::size_t index);

  const SpaceLayout& layout() const noexcept { return layout_; }
  const CVector& amplitudes() const noexcept { return amplitudes_; }
  std::size_t dim() const noexcept { return layout_.dim(); }

 private:
  SpaceLayout layout_;
  CVector amplitudes_;
};

class DensityOperator {
 public:
  /// Validates Hermiticity and unit trace; positivity is checked for
  /// dimensions up to 1024 (a Cholesky probe of rho + tol * I).
  DensityOperator(SpaceLayout layout, CMatrix matrix);

  static DensityOperator from_pure(const PureState& psi);
  static DensityOperator maximally_mixed(SpaceLayout layout);

  const SpaceLayout& layout() const noexcept { return layout_; }
  const CMatrix& matrix() const noexcept { return matrix_; }
  std::size_t dim() const noexcept { return layout_.dim(); }

 private:
  SpaceLayout layout_;
  CMatrix matrix_;
};

class Observable {
 public:
  Observable(SpaceLayout layout, CMatrix matrix);

  static Observable zero(SpaceLayout layout);
  static Observable identity(SpaceLayout layout);

  const SpaceLayout& layout() const noexcept { return layout_; }
  const CMatrix& matrix() const noexcept { return matrix_; }

 private:
  SpaceLayout layout_;
  CMatrix matrix_;
};

struct SchmidtDecomposition {
  std::vector<double> coefficients;  // descending, strictly positive
  std::vector<CVector> left_basis;
  std::vector<CVector> right_basis;
  SpaceLayout layout;  // layout of the decomposed state
  SpaceLayout left_layout;
  SpaceLayout right_layout;

  std::size_t rank() const noexcept { return coefficients.size(); }
  CVector reconstruct() const;
};

struct Tridecomposition {
  std::vector<double> weights;  // non-negative, descending
  std::array<std::vector<CVector>, 3> bases;
  std::array<SpaceLayout, 3> layouts;
  double residual = 0.0;  // || psi - sum_i w_i |a_i>|b_i>|c_i> ||
};

struct TridecompositionOptions {
  std::size_t restarts = 200;
  std::size_t max_iterations = 2000;
  std::uint64_t seed = 0x7d3c0ffee;
};

// Matrix helpers --------------------------------------------------------------

CMatrix kron(const CMatrix& a, const CMatrix& b);
CVector kron(const CVector& a, const CVector& b);
double hermiticity_residual(const CMatrix& m);
double unitarity_residual(const CMatrix& u);
/// Largest |<v_i|v_j> - delta_ij| over the list.
double orthonormality_residual(std::span<const CVector> vectors);

/// Operator on a subset of factors, lifted to `target` (identity elsewhere).
CMatrix embed(const SpaceLayout& local, const CMatrix& op, const SpaceLayout& target);
Observable embed(const Observable& local, const SpaceLayout& target);

// Core operations -----------------------------------------------------------

PureState tensor(std::span<const PureState> states);
PureState tensor(const PureState& a, const PureState& b);
DensityOperator tensor(const DensityOperator& a, const DensityOperator& b);

/// Reduce an arbitrary operator (not necessarily normalized) onto `keep`.
CMatrix partial_trace(const SpaceLayout& layout, const CMatrix& op, const LabelSet& keep);
DensityOperator partial_trace(const DensityOperator& rho, const LabelSet& keep);
/// Reduced density matrix of a pure state, without forming |psi><psi|.
DensityOperator reduce(const PureState& psi, const LabelSet& keep);

double expectation(const DensityOperator& rho, const Observable& obs);

SchmidtDecomposition schmidt(const PureState& psi, const LabelSet& left, const LabelSet& right);

/// Searches for psi = sum_i w_i |a_i>|b_i>|c_i> with orthonormal per-party
/// sets by alternating isometry updates (polar steps on a convex
/// minorizer), starting from the per-party Schmidt bases and then from
/// random isometries. Returns nullopt when no restart reaches `tol`.
std::optional<Tridecomposition> tridecomposition_search(const PureState& psi,
                                                        const std::array<LabelSet, 3>& parts,
                                                        double tol,
                                                        const TridecompositionOptions& options = {});

double purity(const DensityOperator& rho);
double vn_entropy(const DensityOperator& rho);
double vn_entropy(const CMatrix& hermitian);

/// Eigendecomposition of a Hamiltonian, reused across evolution times.
/// Diagonal Hamiltonians skip the eigensolver.
class HamiltonianSpectrum {
 public:
  explicit HamiltonianSpectrum(const Observable& hamiltonian);

  const SpaceLayout& layout() const noexcept { return layout_; }
  const Eigen::VectorXd& energies() const noexcept { return energies_; }
  bool is_diagonal() const noexcept { return diagonal_; }

  CMatrix propagator(double t) const;
  CVector apply(const CVector& psi, double t) const;
  /// U rho U^dagger
  CMatrix conjugate(const CMatrix& rho, double t) const;

 private:
  CVector phases(double t) const;

  SpaceLayout layout_;
  Eigen::VectorXd energies_;
  CMatrix vectors_;  // empty when diagonal
  bool diagonal_ = false;
};

/// exp(-i H t) from the eigendecomposition of H.
CMatrix propagator(const Observable& hamiltonian, double t);
PureState evolve(const PureState& psi, const Observable& hamiltonian, double t);
DensityOperator evolve(const DensityOperator& rho, const Observable& hamiltonian, double t);
PureState evolve(const PureState& psi, const HamiltonianSpectrum& spectrum, double t);
DensityOperator evolve(const DensityOperator& rho, const HamiltonianSpectrum& spectrum, double t);

}  // namespace declab
