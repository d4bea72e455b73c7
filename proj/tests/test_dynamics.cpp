#include <doctest.h>

#include <algorithm>
#include <cmath>

#include <boost/math/special_functions/gamma.hpp>

#include "declab/dynamics.hpp"

using namespace declab;

namespace {

// Analytic free Gaussian: width sigma(t) = sigma0 sqrt(1 + (t / 2 m sigma0^2)^2), centre x0 + k0 t / m.
double gaussian_density(double x, double x0, double sigma0, double k0, double m, double t) {
  const double s = sigma0 * std::sqrt(1.0 + std::pow(t / (2.0 * m * sigma0 * sigma0), 2));
  const double c = x0 + k0 * t / m;
  return std::exp(-(x - c) * (x - c) / (2 * s * s)) / (std::sqrt(2 * M_PI) * s);
}

// Exact hit-centre cumulative by Simpson quadrature of
// p(X) = sum_j |psi_j|^2 exp(-(X - x_j)^2 / delta^2) over the sampler's support.
std::vector<double> quadrature_cdf(const GridWavefunction& psi, double delta, const std::vector<double>& xs) {
  const double lo = psi.x_min - 0.5 * psi.dx, hi = psi.x_max() + 0.5 * psi.dx;
  const std::size_t m = 20000;
  const double h = (hi - lo) / m;
  const auto rho = psi.density();
  auto p = [&](double X) {
    double acc = 0.0;
    for (std::size_t j = 0; j < psi.size(); ++j) acc += rho(static_cast<Eigen::Index>(j)) * std::exp(-std::pow((X - psi.x(j)) / delta, 2));
    return acc;
  };
  std::vector<double> grid(m + 1), cum(m + 1, 0.0);
  for (std::size_t i = 0; i <= m; ++i) grid[i] = p(lo + h * static_cast<double>(i));
  for (std::size_t i = 1; i <= m; ++i) {
    const double mid = p(lo + h * (static_cast<double>(i) - 0.5));
    cum[i] = cum[i - 1] + h / 6 * (grid[i - 1] + 4 * mid + grid[i]);
  }
  std::vector<double> out;
  for (double x : xs) {
    const double s = std::clamp((x - lo) / h, 0.0, static_cast<double>(m));
    const auto i = std::min<std::size_t>(static_cast<std::size_t>(s), m - 1);
    out.push_back((cum[i] + (s - static_cast<double>(i)) * (cum[i + 1] - cum[i])) / cum[m]);
  }
  return out;
}

double chi2_pvalue(double chi2, double dof) { return boost::math::gamma_q(dof / 2, chi2 / 2); }

}  // namespace

TEST_CASE("grid wavefunction basics") {
  const auto g = GridWavefunction::gaussian(-20, 0.05, 800, 1.0, 0.7, 2.0);
  CHECK(g.norm_sq() == doctest::Approx(1.0).epsilon(1e-14));
  CHECK_NOTHROW(g.validate());
  GridWavefunction small{0, 1, CVector::Ones(8), 1};
  CHECK_THROWS_WITH(small.validate(), doctest::Contains("InvalidArgument"));

  // free spreading against the analytic width
  const auto t = free_evolve(g, 1.5);
  CHECK(t.norm_sq() == doctest::Approx(1.0).epsilon(1e-12));
  double err = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) err = std::max(err, std::abs(t.density()(static_cast<Eigen::Index>(i)) - gaussian_density(t.x(i), 1.0, 0.7, 2.0, 1.0, 1.5)));
  CHECK(err < 1e-8);
}

TEST_CASE("GRW hit on a narrow packet leaves it nearly unchanged") {
  const auto psi = GridWavefunction::gaussian(-10, 0.02, 1000, 2.0, 0.05);
  RandomStream rng(31, 0);
  GRWParams p{1.0, 1.0, 1.0};
  double worst_fid = 1.0, far = 0.0;
  for (int i = 0; i < 50; ++i) {
    const auto hit = grw_hit(psi, p, rng);
    worst_fid = std::min(worst_fid, std::norm(psi.values.dot(hit.psi.values) * psi.dx));
    far = std::max(far, std::abs(hit.event.center - 2.0));
    CHECK(hit.psi.norm_sq() == doctest::Approx(1.0).epsilon(1e-14));
  }
  CHECK(worst_fid > 0.99);
  CHECK(far < 4.0);
}

TEST_CASE("GRW branch frequencies follow the packet weights") {
  const auto a = GridWavefunction::gaussian(-20, 0.05, 800, -8.0, 0.3);
  const auto b = GridWavefunction::gaussian(-20, 0.05, 800, 8.0, 0.3);
  const auto psi = GridWavefunction::superpose({a, b}, {0.3, 0.7});
  const HitSampler sampler(psi, 1.0);
  RandomStream rng(32, 0);
  const int n = 10000;
  int left = 0;
  std::vector<double> xs;
  for (int i = 0; i < n; ++i) {
    const double x = sampler.sample(rng);
    xs.push_back(x);
    if (x < 0) ++left;
  }
  const double sigma = std::sqrt(0.3 * 0.7 / n);
  CHECK(std::abs(static_cast<double>(left) / n - 0.3) < 3 * sigma);

  // KS distance against the quadrature cumulative
  std::sort(xs.begin(), xs.end());
  const auto exact = quadrature_cdf(psi, 1.0, xs);
  double ks = 0.0;
  for (int i = 0; i < n; ++i) {
    ks = std::max({ks, std::abs(exact[static_cast<std::size_t>(i)] - static_cast<double>(i) / n),
                   std::abs(exact[static_cast<std::size_t>(i)] - static_cast<double>(i + 1) / n)});
  }
  CHECK(ks < 0.02);
  // the sampler's own cdf agrees with quadrature
  for (double x : {-9.0, -8.0, 0.0, 7.5, 9.0}) CHECK(std::abs(sampler.cdf(x) - quadrature_cdf(psi, 1.0, {x})[0]) < 1e-4);
}

TEST_CASE("GRW centres for a uniform wavefunction are uniform away from the edges") {
  GridWavefunction u{0.0, 0.1, CVector::Ones(500), 1.0};
  u.normalize();
  const HitSampler sampler(u, 1.0);
  RandomStream rng(33, 0);
  const int bins = 20;
  std::vector<int> counts(bins, 0);
  int inside = 0;
  for (int i = 0; i < 20000; ++i) {
    const double x = sampler.sample(rng);
    if (x < 10.0 || x >= 40.0) continue;
    ++counts[static_cast<std::size_t>((x - 10.0) / 30.0 * bins)];
    ++inside;
  }
  double chi2 = 0.0;
  const double expect = static_cast<double>(inside) / bins;
  for (int c : counts) chi2 += (c - expect) * (c - expect) / expect;
  CHECK(chi2_pvalue(chi2, bins - 1) > 0.01);
}

TEST_CASE("GRW run statistics") {
  const auto psi = GridWavefunction::gaussian(-20, 0.1, 400, 0.0, 1.0);
  RandomStream rng(34, 0);
  const auto run = grw_run(psi, GRWParams{50.0, 1.0, 1.0}, 2.0, rng);
  CHECK(std::abs(static_cast<double>(run.events.size()) - 100.0) < 3 * std::sqrt(100.0));
  CHECK(run.snapshots.size() == run.events.size() + 2);
  for (std::size_t i = 1; i < run.events.size(); ++i) CHECK(run.events[i].time >= run.events[i - 1].time);
  CHECK(run.final_state.norm_sq() == doctest::Approx(1.0).epsilon(1e-10));

  RandomStream quiet(35, 0);
  const auto none = grw_run(psi, GRWParams{1e-300, 1.0, 1.0}, 5.0, quiet);
  CHECK(none.events.empty());
  const auto free = free_evolve(psi, 5.0);
  CHECK((none.final_state.values - free.values).norm() < 1e-12);
}

TEST_CASE("GRW presets") {
  const auto macro = grw_preset("paper-macroscopic");
  CHECK(macro.mean_interhit_seconds == Decimal::parse("1e-7"));
  CHECK(macro.mean_interhit_seconds.to_string() == "1e-7");
  CHECK(macro.total_rate_per_second == Decimal::parse("1e7"));
  CHECK(macro.desk.total_rate() == doctest::Approx(10.0).epsilon(1e-12));
  CHECK(macro.rescale_factor == doctest::Approx(1e-6));
  const auto micro = grw_preset("paper-microscopic");
  CHECK(micro.mean_interhit_seconds == Decimal::parse("1e16"));
  CHECK_THROWS_WITH(grw_preset("nope"), doctest::Contains("NotFound"));

  CHECK(Decimal::parse("2.5e-3") * Decimal::parse("4e3") == Decimal::parse("10"));
  CHECK(Decimal::parse("3").reciprocal().to_string().find('/') != std::string::npos);
  CHECK_THROWS_WITH(Decimal::parse("1e"), doctest::Contains("ParseError"));
}

TEST_CASE("master equation without kinetic term is the exact dephasing law") {
  const auto a = GridWavefunction::gaussian(-6, 0.1, 120, -2.0, 0.5);
  const auto b = GridWavefunction::gaussian(-6, 0.1, 120, 2.0, 0.5);
  const auto rho0 = GridDensity::from_pure(GridWavefunction::superpose({a, b}, {0.5, 0.5}));
  const MasterParams p{1.0, 0.8};
  const double dt = 1e-3;
  auto rho = rho0;
  double prev_purity = rho.purity();
  for (int s = 0; s < 1000; ++s) {
    rho = master_step(rho, p, dt, false);
    CHECK(rho.purity() <= prev_purity + 1e-10);
    prev_purity = rho.purity();
  }
  double err = 0.0;
  for (std::size_t i = 0; i < rho.size(); ++i)
    for (std::size_t j = 0; j < rho.size(); ++j) {
      const double d = rho.x(i) - rho.x(j);
      const auto ii = static_cast<Eigen::Index>(i), jj = static_cast<Eigen::Index>(j);
      err = std::max(err, std::abs(rho.matrix(ii, jj) - rho0.matrix(ii, jj) * std::exp(-p.lambda * d * d * 1.0)));
    }
  CHECK(err < 1e-8);
  CHECK_THROWS_WITH(master_step(rho, p, 0.0), doctest::Contains("StepRejected"));
}

TEST_CASE("master equation with Lambda = 0 is unitary") {
  const auto rho0 = GridDensity::from_pure(GridWavefunction::gaussian(-8, 0.125, 128, 0.0, 0.8, 1.0));
  auto rho = rho0;
  for (int s = 0; s < 1000; ++s) rho = master_step(rho, MasterParams{1.0, 0.0}, 1e-3);
  CHECK(std::abs(rho.purity() - 1.0) < 1e-6);
  CHECK(std::abs(rho.trace() - 1.0) < 1e-10);
  CHECK((rho.matrix - rho.matrix.adjoint()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("cat-state coherence decays at rate Lambda d^2") {
  const double d = 4.0, lambda = 0.05;
  const auto a = GridWavefunction::gaussian(-8, 0.125, 128, -d / 2, 0.5, 0.0, 20.0);
  const auto b = GridWavefunction::gaussian(-8, 0.125, 128, d / 2, 0.5, 0.0, 20.0);
  auto rho = GridDensity::from_pure(GridWavefunction::superpose({a, b}, {0.5, 0.5}));
  const MasterParams p{20.0, lambda};
  std::vector<double> ts, logs;
  const double dt = 0.01;
  for (int s = 0; s <= 300; ++s) {
    if (s % 30 == 0) {
      ts.push_back(s * dt);
      logs.push_back(std::log(offdiagonal_norm(rho, -d / 2, d / 2, 1.0)));
    }
    rho = master_step(rho, p, dt);
    CHECK(std::abs(rho.trace() - 1.0) < 1e-8);
  }
  // least-squares slope
  const double n = static_cast<double>(ts.size());
  double st = 0, sl = 0, stt = 0, stl = 0;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    st += ts[i];
    sl += logs[i];
    stt += ts[i] * ts[i];
    stl += ts[i] * logs[i];
  }
  const double slope = (n * stl - st * sl) / (n * stt - st * st);
  CHECK(-slope == doctest::Approx(lambda * d * d).epsilon(0.1));
}

TEST_CASE("Bohm velocity field") {
  GridWavefunction real_psi = GridWavefunction::gaussian(-5, 0.01, 1000, 0.0, 1.0);
  for (double q : {-1.0, 0.0, 0.37, 2.0}) CHECK(bohm_velocity(real_psi, q) == 0.0);

  const double k = 1.5;
  GridWavefunction plane{0.0, 0.01, CVector(1000), 2.0};
  for (std::size_t i = 0; i < plane.size(); ++i) plane.values(static_cast<Eigen::Index>(i)) = std::polar(1.0, k * plane.x(i));
  plane.normalize();
  // centered difference: sin(k dx) / dx
  CHECK(bohm_velocity(plane, 4.003) == doctest::Approx(std::sin(k * 0.01) / 0.01 / 2.0).epsilon(1e-12));
  CHECK(std::abs(bohm_velocity(plane, 4.003) - k / 2.0) < 1e-4);

  const auto packet = GridWavefunction::gaussian(-5, 0.005, 2000, 0.0, 1.0, 2.0);
  CHECK(std::abs(bohm_velocity(packet, 0.0) - 2.0) < 1e-4);

  CHECK_THROWS_WITH(bohm_velocity(packet, 100.0), doctest::Contains("Escaped"));
  GridWavefunction node = real_psi;
  node.values(500) = 0.0;
  CHECK_THROWS_WITH(bohm_velocity(node, 0.0), doctest::Contains("NodeProximity"));
}

TEST_CASE("stationary real state keeps trajectories static") {
  const auto psi = GridWavefunction::gaussian(-5, 0.05, 200, 0.0, 1.0);
  const StationaryState src(psi, 0.5);
  const auto ens = sample_ensemble(psi, 50, 41);
  const auto run = bohm_run(src, ens, 0.05, 1.0);
  for (std::size_t p = 0; p < 50; ++p) CHECK(std::abs(run.trajectories[p].back() - ens.positions[p]) < 1e-12);
  CHECK(run.escaped_count == 0);
}

TEST_CASE("Bohm equivariance for a spreading packet") {
  const double sigma0 = 1.0, t_end = 2.0;
  const auto psi = GridWavefunction::gaussian(-15, 0.05, 600, 0.0, sigma0, 0.5);
  const FreeEvolution src(psi);
  const auto ens = sample_ensemble(psi, 10000, 42);
  const auto run = bohm_run(src, ens, 0.02, t_end, 2);
  CHECK(run.escaped_count == 0);
  CHECK(count_crossings(run) == 0);

  // chi^2 of the final histogram against |psi(t_end)|^2 integrated over bins
  const double s = sigma0 * std::sqrt(1.0 + std::pow(t_end / 2.0, 2)), c = 0.5 * t_end;
  const int bins = 30;
  const double lo = c - 3.5 * s, hi = c + 3.5 * s;
  std::vector<double> observed(bins, 0.0), expected(bins, 0.0);
  for (double q : run.final_positions)
    if (q >= lo && q < hi) observed[static_cast<std::size_t>((q - lo) / (hi - lo) * bins)] += 1;
  for (int b = 0; b < bins; ++b) {
    const double x0 = lo + (hi - lo) * b / bins, x1 = lo + (hi - lo) * (b + 1) / bins;
    expected[static_cast<std::size_t>(b)] = 10000 * 0.5 * (std::erf((x1 - c) / (s * std::sqrt(2.0))) - std::erf((x0 - c) / (s * std::sqrt(2.0))));
  }
  double chi2 = 0.0;
  for (int b = 0; b < bins; ++b) chi2 += std::pow(observed[static_cast<std::size_t>(b)] - expected[static_cast<std::size_t>(b)], 2) / expected[static_cast<std::size_t>(b)];
  CHECK(chi2_pvalue(chi2, bins - 1) > 0.01);

  // worker count does not change results
  const auto single = bohm_run(src, sample_ensemble(psi, 200, 43), 0.02, 0.5, 1);
  const auto multi = bohm_run(src, sample_ensemble(psi, 200, 43), 0.02, 0.5, 3);
  CHECK(single.final_positions == multi.final_positions);
}

TEST_CASE("double-slit trajectories stay on their side") {
  const auto a = GridWavefunction::gaussian(-20, 0.05, 800, -3.0, 0.5);
  const auto b = GridWavefunction::gaussian(-20, 0.05, 800, 3.0, 0.5);
  const auto psi = GridWavefunction::superpose({a, b}, {0.5, 0.5});
  const FreeEvolution src(psi);
  auto ens = sample_ensemble(psi, 400, 44);
  const auto run = bohm_run(src, ens, 0.01, 3.0);
  std::size_t flips = 0;
  for (std::size_t p = 0; p < ens.positions.size(); ++p) {
    if (run.escaped[p]) continue;
    for (double q : run.trajectories[p])
      if (std::signbit(q) != std::signbit(ens.positions[p])) ++flips;
  }
  CHECK(flips == 0);
  CHECK(count_crossings(run) == 0);
}
