#include "declab/dynamics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>

#include <unsupported/Eigen/FFT>

#include "declab/parallel.hpp"

namespace declab {

namespace {

constexpr double kNodeFloor = 1e-12;
constexpr double kTraceDrift = 1e-4;
constexpr int kMaxHalvings = 20;

// Angular wave numbers of the discrete Fourier modes.
Eigen::VectorXd wave_numbers_sq(std::size_t n, double dx) {
  Eigen::VectorXd k2(static_cast<Eigen::Index>(n));
  const double base = 2.0 * M_PI / (static_cast<double>(n) * dx);
  for (std::size_t j = 0; j < n; ++j) {
    const double m = j < (n + 1) / 2 ? static_cast<double>(j) : static_cast<double>(j) - static_cast<double>(n);
    k2(static_cast<Eigen::Index>(j)) = (base * m) * (base * m);
  }
  return k2;
}

std::vector<Complex> to_std(const CVector& v) { return {v.data(), v.data() + v.size()}; }
CVector from_std(const std::vector<Complex>& v) { return Eigen::Map<const CVector>(v.data(), static_cast<Eigen::Index>(v.size())); }

CVector fft_forward(const CVector& v) {
  Eigen::FFT<double> fft;
  std::vector<Complex> out;
  fft.fwd(out, to_std(v));
  return from_std(out);
}

CVector fft_inverse(const CVector& v) {
  Eigen::FFT<double> fft;
  std::vector<Complex> out;
  fft.inv(out, to_std(v));
  return from_std(out);
}

CVector free_phases(const Eigen::VectorXd& k2, double t, double mass) {
  CVector p(k2.size());
  for (Eigen::Index j = 0; j < k2.size(); ++j) p(j) = std::polar(1.0, -k2(j) * t / (2.0 * mass));
  return p;
}

// Inverse CDF of a piecewise-constant density on cells of width dx centred
// on x_min + i dx.
double inverse_cdf(const std::vector<double>& cumulative, const Eigen::VectorXd& weights, double x_min, double dx, double u) {
  auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
  auto i = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, (it - cumulative.begin()) - 1));
  const auto n = static_cast<std::size_t>(weights.size());
  while (i + 1 < n && weights(static_cast<Eigen::Index>(i)) == 0.0) ++i;
  const double w = weights(static_cast<Eigen::Index>(i));
  const double frac = w > 0.0 ? std::clamp((u - cumulative[i]) / w, 0.0, 1.0) : 0.5;
  return x_min + dx * (static_cast<double>(i) - 0.5 + frac);
}

std::vector<double> cumulate(Eigen::VectorXd& weights) {
  weights /= weights.sum();
  std::vector<double> c(static_cast<std::size_t>(weights.size()));
  double acc = 0.0;
  for (Eigen::Index i = 0; i < weights.size(); ++i) {
    c[static_cast<std::size_t>(i)] = acc;
    acc += weights(i);
  }
  return c;
}

void same_grid(const GridWavefunction& a, const GridWavefunction& b) {
  if (a.size() != b.size() || a.x_min != b.x_min || a.dx != b.dx || a.mass != b.mass) {
    throw Error(ErrorCode::InvalidArgument, "wavefunctions on different grids");
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Grid wavefunctions

Eigen::VectorXd GridWavefunction::density() const { return values.cwiseAbs2(); }

void GridWavefunction::normalize() {
  const double n = std::sqrt(norm_sq());
  if (!(n > 0.0) || !std::isfinite(n)) throw Error(ErrorCode::NumericalUnderflow, "wavefunction has zero norm");
  values /= n;
}

void GridWavefunction::validate() const {
  if (size() < 16) throw Error(ErrorCode::InvalidArgument, "grid needs at least 16 points, got " + std::to_string(size()));
  if (!(dx > 0.0)) throw Error(ErrorCode::InvalidArgument, "dx must be positive");
  if (!(mass > 0.0)) throw Error(ErrorCode::InvalidArgument, "mass must be positive");
  if (std::abs(norm_sq() - 1.0) > 1e-8) throw Error(ErrorCode::InvalidArgument, "norm " + std::to_string(norm_sq()) + " differs from 1");
}

GridWavefunction GridWavefunction::gaussian(double x_min, double dx, std::size_t n, double x0, double sigma, double k0,
                                            double mass) {
  if (!(sigma > 0.0)) throw Error(ErrorCode::InvalidArgument, "sigma must be positive");
  GridWavefunction g{x_min, dx, CVector(static_cast<Eigen::Index>(n)), mass};
  for (std::size_t i = 0; i < n; ++i) {
    const double x = g.x(i);
    g.values(static_cast<Eigen::Index>(i)) = std::polar(std::exp(-(x - x0) * (x - x0) / (4.0 * sigma * sigma)), k0 * x);
  }
  g.normalize();
  return g;
}

GridWavefunction GridWavefunction::superpose(const std::vector<GridWavefunction>& packets, const std::vector<double>& weights) {
  if (packets.empty() || packets.size() != weights.size()) throw Error(ErrorCode::InvalidArgument, "one weight per packet");
  GridWavefunction out = packets.front();
  out.values.setZero();
  for (std::size_t k = 0; k < packets.size(); ++k) {
    same_grid(out, packets[k]);
    if (weights[k] < 0.0) throw Error(ErrorCode::InvalidArgument, "negative weight");
    out.values += std::sqrt(weights[k]) * packets[k].values / std::sqrt(packets[k].norm_sq());
  }
  out.normalize();
  return out;
}

GridWavefunction free_evolve(const GridWavefunction& psi, double t) {
  if (t == 0.0) return psi;
  const auto k2 = wave_numbers_sq(psi.size(), psi.dx);
  GridWavefunction out = psi;
  out.values = fft_inverse(fft_forward(psi.values).cwiseProduct(free_phases(k2, t, psi.mass)));
  return out;
}

// ---------------------------------------------------------------------------
// GRW

void GRWParams::validate() const {
  if (!(nu > 0.0) || !std::isfinite(nu)) throw Error(ErrorCode::InvalidArgument, "nu must be positive");
  if (!(delta > 0.0) || !std::isfinite(delta)) throw Error(ErrorCode::InvalidArgument, "delta must be positive");
  if (!(n_particles >= 1.0)) throw Error(ErrorCode::InvalidArgument, "n_particles must be at least 1");
}

HitSampler::HitSampler(const GridWavefunction& psi, double delta) : psi_(psi), delta_(delta) {
  psi.validate();
  if (!(delta > 0.0)) throw Error(ErrorCode::InvalidArgument, "delta must be positive");
  const auto n = static_cast<Eigen::Index>(psi.size());
  const Eigen::VectorXd rho = psi.density();
  // ||psi G_X||^2 = sum_j |psi_j|^2 exp(-(X - x_j)^2 / delta^2) dx; the
  // kernel is cut where it drops below e^{-100}.
  const auto reach = static_cast<Eigen::Index>(std::ceil(10.0 * delta / psi.dx));
  weights_ = Eigen::VectorXd::Zero(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double acc = 0.0;
    for (Eigen::Index j = std::max<Eigen::Index>(0, i - reach); j <= std::min(n - 1, i + reach); ++j) {
      const double d = static_cast<double>(i - j) * psi.dx / delta;
      acc += rho(j) * std::exp(-d * d);
    }
    weights_(i) = acc;
  }
  if (!(weights_.sum() > 0.0)) throw Error(ErrorCode::NumericalUnderflow, "hit density vanishes on the grid");
  cumulative_ = cumulate(weights_);
}

double HitSampler::sample(RandomStream& rng) const { return inverse_cdf(cumulative_, weights_, psi_.x_min, psi_.dx, rng.uniform()); }

double HitSampler::cdf(double x) const {
  const double s = (x - psi_.x_min) / psi_.dx + 0.5;
  if (s <= 0.0) return 0.0;
  const auto n = static_cast<double>(weights_.size());
  if (s >= n) return 1.0;
  const auto i = static_cast<std::size_t>(s);
  return cumulative_[i] + (s - static_cast<double>(i)) * weights_(static_cast<Eigen::Index>(i));
}

GridWavefunction HitSampler::apply(double center) const {
  GridWavefunction out = psi_;
  for (std::size_t j = 0; j < out.size(); ++j) {
    const double d = (center - out.x(j)) / delta_;
    out.values(static_cast<Eigen::Index>(j)) *= std::exp(-0.5 * d * d);
  }
  const double n = out.norm_sq();
  if (!(n > 0.0) || !std::isfinite(n)) throw Error(ErrorCode::NumericalUnderflow, "psi G_X vanishes for X = " + std::to_string(center));
  out.values /= std::sqrt(n);
  return out;
}

HitResult grw_hit(const GridWavefunction& psi, const GRWParams& params, RandomStream& rng) {
  params.validate();
  const HitSampler sampler(psi, params.delta);
  HitResult r;
  r.event.center = sampler.sample(rng);
  r.event.particle = std::floor(rng.uniform() * params.n_particles);
  r.psi = sampler.apply(r.event.center);
  return r;
}

GRWRun grw_run(const GridWavefunction& psi0, const GRWParams& params, double t_end, RandomStream& rng) {
  params.validate();
  psi0.validate();
  if (!(t_end > 0.0)) throw Error(ErrorCode::InvalidArgument, "t_end must be positive");
  GRWRun run;
  run.final_state = psi0;
  run.snapshots.push_back({0.0, psi0.density()});
  const double rate = params.total_rate();
  double t = 0.0;
  while (true) {
    const double wait = rng.exponential(rate);
    if (!(t + wait < t_end)) break;
    run.final_state = free_evolve(run.final_state, wait);
    t += wait;
    auto hit = grw_hit(run.final_state, params, rng);
    hit.event.time = t;
    run.final_state = std::move(hit.psi);
    run.events.push_back(hit.event);
    run.snapshots.push_back({t, run.final_state.density()});
  }
  run.final_state = free_evolve(run.final_state, t_end - t);
  run.snapshots.push_back({t_end, run.final_state.density()});
  return run;
}

// ---------------------------------------------------------------------------
// Decimal presets

namespace {

Decimal normalized(boost::rational<std::int64_t> m, int e) {
  if (m.numerator() == 0) return Decimal{m, 0};
  std::int64_t num = m.numerator(), den = m.denominator();
  while (num % 10 == 0) {
    num /= 10;
    ++e;
  }
  while (den % 10 == 0) {
    den /= 10;
    --e;
  }
  return Decimal{boost::rational<std::int64_t>(num, den), e};
}

}  // namespace

Decimal Decimal::operator*(const Decimal& o) const { return normalized(mantissa * o.mantissa, exponent + o.exponent); }

Decimal Decimal::reciprocal() const {
  if (mantissa.numerator() == 0) throw Error(ErrorCode::InvalidArgument, "reciprocal of zero");
  return normalized(1 / mantissa, -exponent);
}

bool Decimal::operator==(const Decimal& o) const {
  const auto a = normalized(mantissa, exponent), b = normalized(o.mantissa, o.exponent);
  return a.mantissa == b.mantissa && a.exponent == b.exponent;
}

std::string Decimal::to_string() const {
  auto m = mantissa;
  int e = exponent;
  for (int guard = 0; m.denominator() != 1 && guard < 18; ++guard) {
    m *= 10;
    --e;
  }
  if (m.denominator() != 1) {
    return std::to_string(m.numerator()) + "/" + std::to_string(m.denominator()) + "e" + std::to_string(e);
  }
  const auto d = normalized(m, e);
  return std::to_string(d.mantissa.numerator()) + "e" + std::to_string(d.exponent);
}

double Decimal::value() const {
  const auto s = to_string();
  if (s.find('/') == std::string::npos) return std::stod(s);
  return boost::rational_cast<double>(mantissa) * std::pow(10.0, exponent);
}

Decimal Decimal::parse(std::string_view text) {
  auto bad = [&]() -> Decimal { throw Error(ErrorCode::ParseError, "not a decimal: '" + std::string(text) + "'"); };
  const auto epos = text.find_first_of("eE");
  std::string_view mant = text.substr(0, epos);
  int e = 0;
  if (epos != std::string_view::npos) {
    const auto exp_text = text.substr(epos + 1);
    const char* first = exp_text.data();
    if (!exp_text.empty() && exp_text.front() == '+') ++first;
    const auto [ptr, ec] = std::from_chars(first, exp_text.data() + exp_text.size(), e);
    if (ec != std::errc() || ptr != exp_text.data() + exp_text.size()) return bad();
  }
  std::string digits;
  bool negative = false;
  if (!mant.empty() && (mant.front() == '-' || mant.front() == '+')) {
    negative = mant.front() == '-';
    mant.remove_prefix(1);
  }
  bool dot = false;
  for (char c : mant) {
    if (c == '.' && !dot) {
      dot = true;
    } else if (c >= '0' && c <= '9') {
      digits += c;
      if (dot) --e;
    } else {
      return bad();
    }
  }
  if (digits.empty() || digits.size() > 18) return bad();
  std::int64_t n = 0;
  std::from_chars(digits.data(), digits.data() + digits.size(), n);
  return normalized(boost::rational<std::int64_t>(negative ? -n : n), e);
}

std::vector<std::string> grw_preset_names() { return {"paper-macroscopic", "paper-microscopic"}; }

GRWPreset grw_preset(const std::string& name, double desk_rate, double desk_delta) {
  GRWPreset p;
  p.name = name;
  if (name == "paper-macroscopic") {
    p.n_particles = Decimal::parse("1e23");
  } else if (name == "paper-microscopic") {
    p.n_particles = Decimal::parse("1");
  } else {
    throw Error(ErrorCode::NotFound, "unknown GRW preset '" + name + "'");
  }
  if (!(desk_rate > 0.0) || !(desk_delta > 0.0)) throw Error(ErrorCode::InvalidArgument, "desk rate and delta must be positive");
  p.nu_per_second = Decimal::parse("1e-16");
  p.delta_cm = Decimal::parse("1e-5");
  p.total_rate_per_second = p.n_particles * p.nu_per_second;
  p.mean_interhit_seconds = p.total_rate_per_second.reciprocal();
  p.rescale_factor = desk_rate / p.total_rate_per_second.value();
  p.desk.n_particles = p.n_particles.value();
  p.desk.nu = desk_rate / p.desk.n_particles;
  p.desk.delta = desk_delta;
  return p;
}

// ---------------------------------------------------------------------------
// Master equation

GridDensity GridDensity::from_pure(const GridWavefunction& psi) {
  return GridDensity{psi.x_min, psi.dx, psi.values * psi.values.adjoint() * psi.dx, psi.mass};
}

GridDensity master_step(const GridDensity& rho, const MasterParams& params, double dt, bool kinetic_enabled) {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw Error(ErrorCode::StepRejected, "dt must be positive and finite");
  if (!(params.mass > 0.0) || params.lambda < 0.0) throw Error(ErrorCode::InvalidArgument, "need mass > 0 and lambda >= 0");
  const auto n = static_cast<Eigen::Index>(rho.size());
  const double before = rho.trace();

  auto dephase = [&](CMatrix& m, double h) {
    if (params.lambda == 0.0) return;
    for (Eigen::Index j = 0; j < n; ++j)
      for (Eigen::Index i = 0; i < n; ++i) {
        const double d = static_cast<double>(i - j) * rho.dx;
        m(i, j) *= std::exp(-params.lambda * d * d * h);
      }
  };

  GridDensity out = rho;
  out.mass = params.mass;
  if (!kinetic_enabled) {
    dephase(out.matrix, dt);
  } else {
    dephase(out.matrix, 0.5 * dt);
    const CVector phase = free_phases(wave_numbers_sq(rho.size(), rho.dx), dt, params.mass);
    auto apply_u = [&](CMatrix& m) {
      for (Eigen::Index c = 0; c < n; ++c) m.col(c) = fft_inverse(fft_forward(m.col(c)).cwiseProduct(phase));
    };
    apply_u(out.matrix);                           // U rho
    CMatrix t = out.matrix.adjoint();              // rho U^dagger = (U (U rho)^dagger)^dagger
    apply_u(t);
    out.matrix = t.adjoint();
    dephase(out.matrix, 0.5 * dt);
  }
  const double after = out.trace();
  if (!std::isfinite(after) || std::abs(after - before) > kTraceDrift) {
    throw Error(ErrorCode::StepRejected, "trace drifted from " + std::to_string(before) + " to " + std::to_string(after));
  }
  return out;
}

double offdiagonal_norm(const GridDensity& rho, double a, double b, double halfwidth) {
  double acc = 0.0;
  for (std::size_t i = 0; i < rho.size(); ++i) {
    if (std::abs(rho.x(i) - a) > halfwidth) continue;
    for (std::size_t j = 0; j < rho.size(); ++j) {
      if (std::abs(rho.x(j) - b) > halfwidth) continue;
      acc += std::norm(rho.matrix(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
    }
  }
  return std::sqrt(acc);
}

// ---------------------------------------------------------------------------
// Bohm

BohmEnsemble sample_ensemble(const GridWavefunction& psi, std::size_t n, std::uint64_t seed, std::uint64_t stream) {
  psi.validate();
  Eigen::VectorXd w = psi.density();
  const auto c = cumulate(w);
  RandomStream rng(seed, stream);
  BohmEnsemble e{{}, seed, stream};
  e.positions.reserve(n);
  for (std::size_t i = 0; i < n; ++i) e.positions.push_back(inverse_cdf(c, w, psi.x_min, psi.dx, rng.uniform()));
  return e;
}

double bohm_velocity(const GridWavefunction& psi, double q) {
  const auto n = psi.size();
  if (!(q >= psi.x(1) && q <= psi.x(n - 2))) throw Error(ErrorCode::Escaped, "position " + std::to_string(q) + " outside the grid");
  const double s = (q - psi.x_min) / psi.dx;
  auto i = static_cast<std::size_t>(s);
  i = std::clamp<std::size_t>(i, 1, n - 3);
  const double f = s - static_cast<double>(i);
  const auto& v = psi.values;
  auto at = [&](std::size_t k) { return v(static_cast<Eigen::Index>(k)); };
  auto grad = [&](std::size_t k) { return (at(k + 1) - at(k - 1)) / (2.0 * psi.dx); };
  const Complex p = (1.0 - f) * at(i) + f * at(i + 1);
  const Complex dp = (1.0 - f) * grad(i) + f * grad(i + 1);
  const double rho = std::norm(p);
  if (rho < kNodeFloor) throw Error(ErrorCode::NodeProximity, "|psi|^2 = " + std::to_string(rho) + " at " + std::to_string(q));
  return (std::conj(p) * dp).imag() / (rho * psi.mass);
}

FreeEvolution::FreeEvolution(GridWavefunction psi0)
    : psi0_(std::move(psi0)), spectrum_(fft_forward(psi0_.values)), k_sq_(wave_numbers_sq(psi0_.size(), psi0_.dx)) {}

GridWavefunction FreeEvolution::at(double t) const {
  GridWavefunction out = psi0_;
  out.values = fft_inverse(spectrum_.cwiseProduct(free_phases(k_sq_, t, psi0_.mass)));
  return out;
}

GridWavefunction StationaryState::at(double t) const {
  GridWavefunction out = psi_;
  out.values *= std::polar(1.0, -energy_ * t);
  return out;
}

SnapshotSeries::SnapshotSeries(std::vector<double> times, std::vector<GridWavefunction> snapshots)
    : times_(std::move(times)), snapshots_(std::move(snapshots)) {
  if (times_.empty() || times_.size() != snapshots_.size()) throw Error(ErrorCode::InvalidArgument, "one time per snapshot");
  for (std::size_t i = 1; i < times_.size(); ++i) {
    if (!(times_[i] > times_[i - 1])) throw Error(ErrorCode::InvalidArgument, "snapshot times must increase");
    same_grid(snapshots_[0], snapshots_[i]);
  }
}

GridWavefunction SnapshotSeries::at(double t) const {
  if (t < times_.front() - 1e-12 || t > times_.back() + 1e-12) {
    throw Error(ErrorCode::InvalidArgument, "time " + std::to_string(t) + " outside the recorded snapshots");
  }
  auto it = std::upper_bound(times_.begin(), times_.end(), t);
  if (it == times_.begin()) return snapshots_.front();
  if (it == times_.end()) return snapshots_.back();
  const auto hi = static_cast<std::size_t>(it - times_.begin());
  const double f = (t - times_[hi - 1]) / (times_[hi] - times_[hi - 1]);
  GridWavefunction out = snapshots_[hi - 1];
  out.values = (1.0 - f) * snapshots_[hi - 1].values + f * snapshots_[hi].values;
  return out;
}

BohmRun bohm_run(const WavefunctionSource& source, const BohmEnsemble& ensemble, double dt, double t_end, std::size_t workers) {
  if (!(dt > 0.0) || !(t_end > 0.0)) throw Error(ErrorCode::InvalidArgument, "dt and t_end must be positive");
  BohmRun run;
  run.times.push_back(0.0);
  while (run.times.back() < t_end - 1e-12 * t_end) run.times.push_back(std::min(t_end, run.times.back() + dt));
  const auto steps = run.times.size() - 1;

  // psi at every step start and midpoint, shared by all trajectories
  std::vector<GridWavefunction> start(steps), mid(steps);
  parallel_for(steps, workers, [&](std::size_t s) {
    const double h = run.times[s + 1] - run.times[s];
    start[s] = source.at(run.times[s]);
    mid[s] = source.at(run.times[s] + 0.5 * h);
  });

  const auto n = ensemble.positions.size();
  run.trajectories.assign(n, std::vector<double>(steps + 1, std::numeric_limits<double>::quiet_NaN()));
  std::vector<char> escaped(n, 0);
  std::vector<std::size_t> halvings(n, 0);

  // Midpoint step from t over h, halving on nodes.
  auto substep = [&source](double q, double t, double h, int depth, std::size_t& count, auto&& self) -> double {
    try {
      const double qm = q + 0.5 * h * bohm_velocity(source.at(t), q);
      return q + h * bohm_velocity(source.at(t + 0.5 * h), qm);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NodeProximity || depth >= kMaxHalvings) throw;
      ++count;
      const double half = self(q, t, 0.5 * h, depth + 1, count, self);
      return self(half, t + 0.5 * h, 0.5 * h, depth + 1, count, self);
    }
  };

  parallel_for(n, workers, [&](std::size_t p) {
    auto& traj = run.trajectories[p];
    double q = ensemble.positions[p];
    traj[0] = q;
    try {
      for (std::size_t s = 0; s < steps; ++s) {
        const double h = run.times[s + 1] - run.times[s];
        try {
          const double qm = q + 0.5 * h * bohm_velocity(start[s], q);
          q = q + h * bohm_velocity(mid[s], qm);
        } catch (const Error& e) {
          if (e.code() != ErrorCode::NodeProximity) throw;
          ++halvings[p];
          const double half = substep(q, run.times[s], 0.5 * h, 1, halvings[p], substep);
          q = substep(half, run.times[s] + 0.5 * h, 0.5 * h, 1, halvings[p], substep);
        }
        traj[s + 1] = q;
      }
    } catch (const Error& e) {
      if (e.code() != ErrorCode::Escaped) throw;
      escaped[p] = 1;
    }
  });

  run.escaped.assign(escaped.begin(), escaped.end());
  for (std::size_t p = 0; p < n; ++p) {
    run.halvings += halvings[p];
    if (escaped[p]) {
      ++run.escaped_count;
    } else {
      run.final_positions.push_back(run.trajectories[p].back());
    }
  }
  return run;
}

std::size_t count_crossings(const BohmRun& run) {
  const auto n = run.trajectories.size();
  if (n < 2) return 0;
  std::size_t crossings = 0;
  std::vector<std::size_t> order(n);
  for (std::size_t s = 1; s < run.times.size(); ++s) {
    order.clear();
    for (std::size_t p = 0; p < n; ++p)
      if (std::isfinite(run.trajectories[p][s])) order.push_back(p);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return run.trajectories[a][s - 1] < run.trajectories[b][s - 1]; });
    for (std::size_t k = 1; k < order.size(); ++k) {
      const auto a = order[k - 1], b = order[k];
      if (run.trajectories[a][s - 1] < run.trajectories[b][s - 1] && run.trajectories[a][s] > run.trajectories[b][s]) ++crossings;
    }
  }
  return crossings;
}

}  // namespace declab
