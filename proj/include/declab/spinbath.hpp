#pragma once

// Two-state system coupled to N environment spins through
//   H = 1/2 (|up><up| - |dn><dn|) (x) sum_k g_k sigma_z^(k),
// started in (a|up> + b|dn>) (x) prod_k (alpha_k|up> + beta_k|dn>).
// Spin-up is basis index 0 on every factor.

#include <cstddef>
#include <utility>
#include <vector>

#include "declab/hilbert.hpp"
#include "declab/random.hpp"

namespace declab {

struct SpinBathParams {
  Complex a{1.0};
  Complex b{0.0};
  std::vector<double> couplings;                      // g_k
  std::vector<std::pair<Complex, Complex>> env_amps;  // (alpha_k, beta_k)

  std::size_t n_env() const noexcept { return couplings.size(); }
  /// Throws InvalidArgument on norm violations or length mismatch.
  void validate() const;
  bool is_homogeneous(double tol = 1e-12) const;

  /// |alpha_k|^2 uniform in (0,1), independent uniform phases, g_k uniform in (0,1].
  static SpinBathParams random(std::size_t n, RandomStream& rng, Complex a = Complex(1.0 / 1.4142135623730951),
                               Complex b = Complex(1.0 / 1.4142135623730951));
  static SpinBathParams homogeneous(std::size_t n, double g, double alpha_sq, Complex a = Complex(1.0 / 1.4142135623730951),
                                    Complex b = Complex(1.0 / 1.4142135623730951));
};

struct InterferenceTrace {
  std::vector<double> times;
  std::vector<Complex> z_values;
};

/// z(t) = prod_k (|alpha_k|^2 e^{i g_k t} + |beta_k|^2 e^{-i g_k t}).
Complex z_analytic(const SpinBathParams& p, double t);
/// prod_k [1 + ((|alpha_k|^2 - |beta_k|^2)^2 - 1) sin^2(g_k t)].
double z_mod_sq(const SpinBathParams& p, double t);
InterferenceTrace z_trace(const SpinBathParams& p, const std::vector<double>& times, std::size_t workers = 1);

/// Reduced system state; off-diagonal <up|rho|dn> = a b* conj(z).
DensityOperator reduced_density(const SpinBathParams& p, double t);

/// 2^-N prod_k [1 + (|alpha_k|^2 - |beta_k|^2)^2].
double long_time_average(const SpinBathParams& p);

struct GaussianEnvelope {
  double A = 0.0;         // mean phase rate, sum_k g_k (|alpha_k|^2 - |beta_k|^2)
  double B_moment = 0.0;  // sqrt(sum_k 4 g_k^2 |alpha_k|^2 |beta_k|^2)
  double B_fit = 0.0;     // least squares of log|z| against t^2 on the window
  double window = 0.0;    // 3 / B_moment
  double max_deviation = 0.0;         // max ||z| - exp(-B_fit^2 t^2 / 2)| on the window
  double max_deviation_moment = 0.0;  // same with B_moment

  Complex operator()(double t) const;  // e^{iAt} e^{-B_fit^2 t^2/2}
};

GaussianEnvelope gaussian_envelope(const SpinBathParams& p, std::size_t samples = 2001);

/// sum_l C(N,l) |alpha|^{2l} |beta|^{2(N-l)} e^{i g (2l-N) t}; homogeneous params only.
Complex z_binomial(const SpinBathParams& p, double t);
/// gaussian_envelope restricted to homogeneous params (NotHomogeneous otherwise).
GaussianEnvelope gaussian_limit(const SpinBathParams& p, std::size_t samples = 2001);

/// Layout S, E1, ..., EN.
SpaceLayout spin_bath_layout(std::size_t n_env);
PureState initial_state(const SpinBathParams& p);
/// Exact evolution of the full 2^(N+1) state; N <= 14.
PureState brute_force_evolve(const SpinBathParams& p, double t);
/// Dense H on spin_bath_layout; N <= 10.
Observable interaction_hamiltonian(const SpinBathParams& p);

/// |E_up(t)>, |E_dn(t)> on E1..EN, from the brute-force state.
std::pair<CVector, CVector> environment_branches(const SpinBathParams& p, double t);

struct RecurrenceReport {
  std::vector<double> times;  // refined local maxima of |z|, one per excursion above threshold
  std::vector<double> peaks;  // |z| at those times
  std::size_t samples = 0;
};

/// Scans |z| on t = 0, dt, 2dt, ... <= t_max. The excursion that starts at
/// t = 0 is the initial coherence and is skipped.
RecurrenceReport recurrence_scan(const SpinBathParams& p, double t_max, double dt, double threshold = 0.99,
                                 std::size_t workers = 1);

}  // namespace declab
