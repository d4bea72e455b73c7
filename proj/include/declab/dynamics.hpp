#pragma once

// One-dimensional grid dynamics: GRW spontaneous localization, the
// dephasing master equation, and Bohmian trajectories.

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <boost/rational.hpp>

#include "declab/hilbert.hpp"
#include "declab/random.hpp"

namespace declab {

/// psi(x_min + i dx), normalized so that sum |psi|^2 dx = 1. hbar = 1.
struct GridWavefunction {
  double x_min = 0.0;
  double dx = 1.0;
  CVector values;
  double mass = 1.0;

  std::size_t size() const noexcept { return static_cast<std::size_t>(values.size()); }
  double x(std::size_t i) const noexcept { return x_min + dx * static_cast<double>(i); }
  double x_max() const noexcept { return x(size() - 1); }
  double norm_sq() const { return values.squaredNorm() * dx; }
  /// |psi|^2 at the grid points.
  Eigen::VectorXd density() const;
  void normalize();
  /// InvalidArgument unless L >= 16, dx > 0, mass > 0 and the norm is 1 within 1e-8.
  void validate() const;

  /// Normalized Gaussian packet exp(-(x-x0)^2/(4 sigma^2) + i k0 x).
  static GridWavefunction gaussian(double x_min, double dx, std::size_t n, double x0, double sigma, double k0 = 0.0,
                                   double mass = 1.0);
  /// Normalized sum of weighted, individually normalized packets (weights are probabilities).
  static GridWavefunction superpose(const std::vector<GridWavefunction>& packets, const std::vector<double>& weights);
};

/// Exact free propagation with periodic boundaries: each Fourier mode picks
/// up exp(-i k^2 t / 2m).
GridWavefunction free_evolve(const GridWavefunction& psi, double t);

// ---------------------------------------------------------------------------
// GRW

struct GRWParams {
  double nu = 1.0;           // hit rate per particle
  double delta = 1.0;        // localization width
  double n_particles = 1.0;  // may exceed 2^64, hence double

  void validate() const;
  double total_rate() const { return nu * n_particles; }
};

struct HitEvent {
  double time = 0.0;
  double center = 0.0;
  double particle = 0.0;  // uniform index in [0, N); a double because N may exceed 2^64
};

/// Hit-center distribution for one wavefunction: p(X) proportional to
/// ||psi G_X||^2 with G_X(x) = exp(-(X-x)^2 / 2 delta^2), piecewise constant
/// on the cells around the grid points. Build once, sample many times.
class HitSampler {
 public:
  HitSampler(const GridWavefunction& psi, double delta);

  double sample(RandomStream& rng) const;
  /// Normalized psi G_X; NumericalUnderflow when the product vanishes.
  GridWavefunction apply(double center) const;
  /// Cumulative distribution of X.
  double cdf(double x) const;
  const Eigen::VectorXd& cell_weights() const noexcept { return weights_; }

 private:
  GridWavefunction psi_;
  double delta_;
  Eigen::VectorXd weights_;     // probability per cell
  std::vector<double> cumulative_;  // cumulative_[i] = sum of weights below cell i
};

struct HitResult {
  GridWavefunction psi;
  HitEvent event;
};

HitResult grw_hit(const GridWavefunction& psi, const GRWParams& params, RandomStream& rng);

struct GRWSnapshot {
  double time = 0.0;
  Eigen::VectorXd density;
};

struct GRWRun {
  std::vector<HitEvent> events;
  std::vector<GRWSnapshot> snapshots;  // t = 0, after every hit, t_end
  GridWavefunction final_state;
};

/// Poisson hits at rate N nu with free evolution in between.
GRWRun grw_run(const GridWavefunction& psi0, const GRWParams& params, double t_end, RandomStream& rng);

/// m * 10^e with exact rational mantissa, so that products and reciprocals
/// of decimal literals stay exact.
struct Decimal {
  boost::rational<std::int64_t> mantissa{1};
  int exponent = 0;

  Decimal operator*(const Decimal& o) const;
  Decimal reciprocal() const;
  double value() const;
  /// "1e-7", "2.5e3" style; mantissa must be a finite decimal.
  std::string to_string() const;
  /// Parses "1e23", "1e-16", "2.5", "3.5e-5".
  static Decimal parse(std::string_view text);
  bool operator==(const Decimal&) const;
};

struct GRWPreset {
  std::string name;
  Decimal n_particles;
  Decimal nu_per_second;
  Decimal delta_cm;
  Decimal total_rate_per_second;  // N nu
  Decimal mean_interhit_seconds;  // 1 / (N nu)
  double rescale_factor = 1.0;    // desk total rate / physical total rate
  GRWParams desk;                 // desk-scale parameters used by the engine
};

/// "paper-macroscopic" (N = 1e23) or "paper-microscopic" (N = 1), both with
/// nu = 1e-16 per second and delta = 1e-5 cm. The desk parameters keep the
/// product N nu at `desk_rate` per unit time with delta = `desk_delta`.
GRWPreset grw_preset(const std::string& name, double desk_rate = 10.0, double desk_delta = 1.0);
std::vector<std::string> grw_preset_names();

// ---------------------------------------------------------------------------
// Master equation

/// rho(x_i, x_j) dx on a grid, so the matrix has unit trace.
struct GridDensity {
  double x_min = 0.0;
  double dx = 1.0;
  CMatrix matrix;
  double mass = 1.0;

  std::size_t size() const noexcept { return static_cast<std::size_t>(matrix.rows()); }
  double x(std::size_t i) const noexcept { return x_min + dx * static_cast<double>(i); }
  double trace() const { return matrix.trace().real(); }
  double purity() const { return matrix.cwiseAbs2().sum(); }

  static GridDensity from_pure(const GridWavefunction& psi);
};

struct MasterParams {
  double mass = 1.0;
  double lambda = 0.0;  // localization / scattering constant
};

/// One Strang step of i d(rho)/dt = [H_free, rho] - i Lambda (x - x')^2 rho:
/// half dephasing, exact spectral free evolution, half dephasing. With the
/// kinetic part disabled the step is the exact entrywise factor
/// exp(-Lambda (x - x')^2 dt). StepRejected when the trace drifts by more
/// than 1e-4 or dt is not positive.
GridDensity master_step(const GridDensity& rho, const MasterParams& params, double dt, bool kinetic_enabled = true);

/// Frobenius norm of the block rows |x - a| <= w, columns |x' - b| <= w.
double offdiagonal_norm(const GridDensity& rho, double a, double b, double halfwidth);

// ---------------------------------------------------------------------------
// Bohm

struct BohmEnsemble {
  std::vector<double> positions;
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
};

/// Positions drawn from |psi|^2, piecewise constant on grid cells.
BohmEnsemble sample_ensemble(const GridWavefunction& psi, std::size_t n, std::uint64_t seed, std::uint64_t stream = 0);

/// v = (1/m) Im(psi* dpsi/dx) / |psi|^2 with a centered difference and linear
/// interpolation to q. NodeProximity when |psi(q)|^2 < 1e-12, Escaped
/// outside the grid.
double bohm_velocity(const GridWavefunction& psi, double q);

/// psi(t) for trajectory integration.
class WavefunctionSource {
 public:
  virtual ~WavefunctionSource() = default;
  virtual GridWavefunction at(double t) const = 0;
};

class FreeEvolution : public WavefunctionSource {
 public:
  explicit FreeEvolution(GridWavefunction psi0);
  GridWavefunction at(double t) const override;

 private:
  GridWavefunction psi0_;
  CVector spectrum_;
  Eigen::VectorXd k_sq_;
};

/// psi e^{-i E t}: the velocity field does not depend on t.
class StationaryState : public WavefunctionSource {
 public:
  StationaryState(GridWavefunction psi, double energy) : psi_(std::move(psi)), energy_(energy) {}
  GridWavefunction at(double t) const override;

 private:
  GridWavefunction psi_;
  double energy_;
};

/// Linear interpolation between recorded snapshots; times ascending.
class SnapshotSeries : public WavefunctionSource {
 public:
  SnapshotSeries(std::vector<double> times, std::vector<GridWavefunction> snapshots);
  GridWavefunction at(double t) const override;

 private:
  std::vector<double> times_;
  std::vector<GridWavefunction> snapshots_;
};

struct BohmRun {
  std::vector<double> times;                     // step times, including 0
  std::vector<std::vector<double>> trajectories;  // [particle][step]; NaN after escape
  std::vector<bool> escaped;
  std::size_t escaped_count = 0;
  std::size_t halvings = 0;  // total dt halvings triggered by nodes
  std::vector<double> final_positions;  // escaped trajectories excluded
};

/// Midpoint integration of dq/dt = v(psi(t), q). A step that meets a node is
/// retried with dt halved, up to 20 times.
BohmRun bohm_run(const WavefunctionSource& source, const BohmEnsemble& ensemble, double dt, double t_end,
                 std::size_t workers = 1);

/// Neighbouring pairs whose order in x reverses between consecutive steps;
/// zero exactly when no two trajectories cross.
std::size_t count_crossings(const BohmRun& run);

}  // namespace declab
