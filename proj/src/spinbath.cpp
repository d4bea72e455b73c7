#include "declab/spinbath.hpp"

#include <cmath>
#include <limits>

#include "declab/parallel.hpp"

namespace declab {

namespace {

constexpr std::size_t kBruteForceMaxN = 14;
constexpr std::size_t kDenseMaxN = 10;

double prob_up(const std::pair<Complex, Complex>& ab) { return std::norm(ab.first); }
double prob_dn(const std::pair<Complex, Complex>& ab) { return std::norm(ab.second); }

SpinBathParams with_system(SpinBathParams p, Complex a, Complex b) {
  p.a = a;
  p.b = b;
  return p;
}

}  // namespace

void SpinBathParams::validate() const {
  if (couplings.empty()) throw Error(ErrorCode::InvalidArgument, "need at least one environment spin");
  if (env_amps.size() != couplings.size()) {
    throw Error(ErrorCode::InvalidArgument, "env_amps has " + std::to_string(env_amps.size()) + " entries, couplings " +
                                                std::to_string(couplings.size()));
  }
  if (std::abs(std::norm(a) + std::norm(b) - 1.0) > kConstructionTol) {
    throw Error(ErrorCode::InvalidArgument, "|a|^2 + |b|^2 != 1");
  }
  for (std::size_t k = 0; k < env_amps.size(); ++k) {
    if (std::abs(prob_up(env_amps[k]) + prob_dn(env_amps[k]) - 1.0) > kConstructionTol) {
      throw Error(ErrorCode::InvalidArgument, "environment spin " + std::to_string(k + 1) + " not normalized");
    }
    if (!std::isfinite(couplings[k])) throw Error(ErrorCode::InvalidArgument, "non-finite coupling");
  }
}

bool SpinBathParams::is_homogeneous(double tol) const {
  for (std::size_t k = 1; k < couplings.size(); ++k) {
    if (std::abs(couplings[k] - couplings[0]) > tol) return false;
    if (std::abs(prob_up(env_amps[k]) - prob_up(env_amps[0])) > tol) return false;
  }
  return true;
}

SpinBathParams SpinBathParams::random(std::size_t n, RandomStream& rng, Complex a, Complex b) {
  SpinBathParams p;
  p.a = a;
  p.b = b;
  for (std::size_t k = 0; k < n; ++k) {
    double q = 0.0;
    while (q == 0.0) q = rng.uniform();
    const double phi_a = 2.0 * M_PI * rng.uniform();
    const double phi_b = 2.0 * M_PI * rng.uniform();
    p.env_amps.emplace_back(std::polar(std::sqrt(q), phi_a), std::polar(std::sqrt(1.0 - q), phi_b));
    p.couplings.push_back(1.0 - rng.uniform());
  }
  return p;
}

SpinBathParams SpinBathParams::homogeneous(std::size_t n, double g, double alpha_sq, Complex a, Complex b) {
  if (alpha_sq < 0.0 || alpha_sq > 1.0) throw Error(ErrorCode::InvalidArgument, "|alpha|^2 outside [0,1]");
  SpinBathParams p;
  p.a = a;
  p.b = b;
  p.couplings.assign(n, g);
  p.env_amps.assign(n, {Complex(std::sqrt(alpha_sq)), Complex(std::sqrt(1.0 - alpha_sq))});
  return p;
}

Complex z_analytic(const SpinBathParams& p, double t) {
  Complex z(1.0);
  for (std::size_t k = 0; k < p.n_env(); ++k) {
    const double gt = p.couplings[k] * t;
    z *= prob_up(p.env_amps[k]) * std::polar(1.0, gt) + prob_dn(p.env_amps[k]) * std::polar(1.0, -gt);
  }
  return z;
}

double z_mod_sq(const SpinBathParams& p, double t) {
  double out = 1.0;
  for (std::size_t k = 0; k < p.n_env(); ++k) {
    const double bias = prob_up(p.env_amps[k]) - prob_dn(p.env_amps[k]);
    const double s = std::sin(p.couplings[k] * t);
    out *= 1.0 + (bias * bias - 1.0) * s * s;
  }
  return out;
}

InterferenceTrace z_trace(const SpinBathParams& p, const std::vector<double>& times, std::size_t workers) {
  InterferenceTrace tr;
  tr.times = times;
  tr.z_values.resize(times.size());
  parallel_for(times.size(), workers, [&](std::size_t i) { tr.z_values[i] = z_analytic(p, times[i]); });
  return tr;
}

DensityOperator reduced_density(const SpinBathParams& p, double t) {
  p.validate();
  const Complex z = z_analytic(p, t);
  CMatrix rho(2, 2);
  rho(0, 0) = std::norm(p.a);
  rho(1, 1) = std::norm(p.b);
  rho(0, 1) = p.a * std::conj(p.b) * std::conj(z);
  rho(1, 0) = std::conj(rho(0, 1));
  return DensityOperator(SpaceLayout{{"S", 2}}, rho);
}

double long_time_average(const SpinBathParams& p) {
  double out = 1.0;
  for (const auto& ab : p.env_amps) {
    const double bias = prob_up(ab) - prob_dn(ab);
    out *= 0.5 * (1.0 + bias * bias);
  }
  return out;
}

Complex GaussianEnvelope::operator()(double t) const {
  return std::polar(std::exp(-0.5 * B_fit * B_fit * t * t), A * t);
}

GaussianEnvelope gaussian_envelope(const SpinBathParams& p, std::size_t samples) {
  p.validate();
  if (samples < 2) throw Error(ErrorCode::InvalidArgument, "need at least two samples");
  GaussianEnvelope env;
  double b2 = 0.0;
  for (std::size_t k = 0; k < p.n_env(); ++k) {
    const double up = prob_up(p.env_amps[k]), dn = prob_dn(p.env_amps[k]);
    env.A += p.couplings[k] * (up - dn);
    b2 += 4.0 * p.couplings[k] * p.couplings[k] * up * dn;
  }
  env.B_moment = std::sqrt(b2);
  if (!(env.B_moment > 0.0)) throw Error(ErrorCode::DegenerateSpec, "no decay: every environment spin is an eigenstate");
  env.window = 3.0 / env.B_moment;

  std::vector<double> ts(samples), mags(samples);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < samples; ++i) {
    ts[i] = env.window * static_cast<double>(i) / static_cast<double>(samples - 1);
    mags[i] = std::abs(z_analytic(p, ts[i]));
    if (mags[i] > std::numeric_limits<double>::min()) {
      const double t2 = ts[i] * ts[i];
      num += t2 * std::log(mags[i]);
      den += t2 * t2;
    }
  }
  env.B_fit = std::sqrt(std::max(0.0, -2.0 * num / den));
  for (std::size_t i = 0; i < samples; ++i) {
    const double t2 = ts[i] * ts[i];
    env.max_deviation = std::max(env.max_deviation, std::abs(mags[i] - std::exp(-0.5 * env.B_fit * env.B_fit * t2)));
    env.max_deviation_moment = std::max(env.max_deviation_moment, std::abs(mags[i] - std::exp(-0.5 * b2 * t2)));
  }
  return env;
}

Complex z_binomial(const SpinBathParams& p, double t) {
  p.validate();
  if (!p.is_homogeneous()) throw Error(ErrorCode::NotHomogeneous, "couplings or environment amplitudes differ between spins");
  const auto n = static_cast<int>(p.n_env());
  const double up = prob_up(p.env_amps[0]), dn = prob_dn(p.env_amps[0]);
  const double g = p.couplings[0];
  Complex z(0.0);
  for (int l = 0; l <= n; ++l) {
    if ((up == 0.0 && l > 0) || (dn == 0.0 && l < n)) continue;
    double logw = std::lgamma(n + 1.0) - std::lgamma(l + 1.0) - std::lgamma(n - l + 1.0);
    if (l > 0) logw += l * std::log(up);
    if (l < n) logw += (n - l) * std::log(dn);
    z += std::polar(std::exp(logw), g * (2.0 * l - n) * t);
  }
  return z;
}

GaussianEnvelope gaussian_limit(const SpinBathParams& p, std::size_t samples) {
  p.validate();
  if (!p.is_homogeneous()) throw Error(ErrorCode::NotHomogeneous, "couplings or environment amplitudes differ between spins");
  return gaussian_envelope(p, samples);
}

SpaceLayout spin_bath_layout(std::size_t n_env) {
  std::vector<Factor> f{{"S", 2}};
  for (std::size_t k = 1; k <= n_env; ++k) f.push_back({"E" + std::to_string(k), 2});
  return SpaceLayout(std::move(f));
}

PureState initial_state(const SpinBathParams& p) { return brute_force_evolve(p, 0.0); }

PureState brute_force_evolve(const SpinBathParams& p, double t) {
  p.validate();
  const auto n = p.n_env();
  if (n > kBruteForceMaxN) {
    throw Error(ErrorCode::SizeGuard, "brute force limited to N <= " + std::to_string(kBruteForceMaxN));
  }
  const std::size_t env_dim = std::size_t{1} << n;
  CVector amps(static_cast<Eigen::Index>(2 * env_dim));
  for (std::size_t s = 0; s < 2; ++s) {
    const double sigma = s == 0 ? 1.0 : -1.0;
    const Complex sys = s == 0 ? p.a : p.b;
    for (std::size_t e = 0; e < env_dim; ++e) {
      Complex amp = sys;
      double energy = 0.0;
      for (std::size_t k = 0; k < n; ++k) {
        const bool down = (e >> (n - 1 - k)) & 1u;  // E1 is the most significant env bit
        amp *= down ? p.env_amps[k].second : p.env_amps[k].first;
        energy += (down ? -1.0 : 1.0) * p.couplings[k];
      }
      energy *= 0.5 * sigma;
      amps(static_cast<Eigen::Index>(s * env_dim + e)) = amp * std::polar(1.0, -energy * t);
    }
  }
  return PureState::normalized(spin_bath_layout(n), amps);
}

Observable interaction_hamiltonian(const SpinBathParams& p) {
  p.validate();
  const auto n = p.n_env();
  if (n > kDenseMaxN) throw Error(ErrorCode::SizeGuard, "dense Hamiltonian limited to N <= " + std::to_string(kDenseMaxN));
  const std::size_t env_dim = std::size_t{1} << n;
  CMatrix h = CMatrix::Zero(static_cast<Eigen::Index>(2 * env_dim), static_cast<Eigen::Index>(2 * env_dim));
  for (std::size_t s = 0; s < 2; ++s)
    for (std::size_t e = 0; e < env_dim; ++e) {
      double energy = 0.0;
      for (std::size_t k = 0; k < n; ++k) energy += (((e >> (n - 1 - k)) & 1u) ? -1.0 : 1.0) * p.couplings[k];
      const auto i = static_cast<Eigen::Index>(s * env_dim + e);
      h(i, i) = 0.5 * (s == 0 ? 1.0 : -1.0) * energy;
    }
  return Observable(spin_bath_layout(n), h);
}

std::pair<CVector, CVector> environment_branches(const SpinBathParams& p, double t) {
  const auto up = brute_force_evolve(with_system(p, 1.0, 0.0), t);
  const auto dn = brute_force_evolve(with_system(p, 0.0, 1.0), t);
  const auto half = up.amplitudes().size() / 2;
  return {up.amplitudes().head(half), dn.amplitudes().tail(half)};
}

RecurrenceReport recurrence_scan(const SpinBathParams& p, double t_max, double dt, double threshold, std::size_t workers) {
  p.validate();
  if (!(dt > 0.0)) throw Error(ErrorCode::InvalidArgument, "dt must be positive");
  if (!(t_max >= 0.0)) throw Error(ErrorCode::InvalidArgument, "t_max must be non-negative");
  const auto count = static_cast<std::size_t>(std::floor(t_max / dt)) + 1;
  std::vector<double> mag(count);
  parallel_for(count, workers, [&](std::size_t i) { mag[i] = std::abs(z_analytic(p, static_cast<double>(i) * dt)); });

  RecurrenceReport rep;
  rep.samples = count;
  auto f = [&](double t) { return std::abs(z_analytic(p, t)); };
  std::size_t i = 0;
  while (i < count && mag[i] > threshold) ++i;  // initial excursion
  while (i < count) {
    if (mag[i] <= threshold) {
      ++i;
      continue;
    }
    std::size_t best = i;
    while (i < count && mag[i] > threshold) {
      if (mag[i] > mag[best]) best = i;
      ++i;
    }
    // golden-section refinement around the best sample
    double lo = std::max(0.0, (static_cast<double>(best) - 1.0) * dt);
    double hi = (static_cast<double>(best) + 1.0) * dt;
    const double r = 0.5 * (std::sqrt(5.0) - 1.0);
    double x1 = hi - r * (hi - lo), x2 = lo + r * (hi - lo);
    double f1 = f(x1), f2 = f(x2);
    for (int it = 0; it < 100 && hi - lo > 1e-13 * std::max(1.0, hi); ++it) {
      if (f1 < f2) {
        lo = x1;
        x1 = x2;
        f1 = f2;
        x2 = lo + r * (hi - lo);
        f2 = f(x2);
      } else {
        hi = x2;
        x2 = x1;
        f2 = f1;
        x1 = hi - r * (hi - lo);
        f1 = f(x1);
      }
    }
    const double t = 0.5 * (lo + hi);
    rep.times.push_back(t);
    rep.peaks.push_back(f(t));
  }
  return rep;
}

}  // namespace declab
