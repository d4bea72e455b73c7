#include <doctest.h>

#include <cmath>

#include "declab/histories.hpp"
#include "declab/spinbath.hpp"
#include "oracles.hpp"

using namespace declab;

namespace {

const SpaceLayout kQubit{{"S", 2}};

CMatrix ket_bra(const CVector& v) { return v * v.adjoint(); }

// Complete family from a random Hermitian: eigenvectors grouped into
// `cells` consecutive blocks.
ProjectorFamily random_family(double t, const SpaceLayout& layout, std::size_t cells, RandomStream& rng) {
  const auto d = layout.dim();
  const CMatrix u = oracle::random_unitary(d, rng);
  ProjectorFamily f{t, layout, {}};
  const std::size_t per = d / cells;
  for (std::size_t c = 0; c < cells; ++c) {
    const std::size_t lo = c * per, hi = c + 1 == cells ? d : lo + per;
    CMatrix p = CMatrix::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
    for (std::size_t j = lo; j < hi; ++j) p += ket_bra(u.col(static_cast<Eigen::Index>(j)));
    f.projectors.push_back(p);
  }
  return f;
}

// Families of U(t0,t_i) |r_k><r_k| U^dagger for the eigenvectors r_k of rho0.
HistorySet evolved_eigen_set(const CMatrix& rho0, const CMatrix& h, const std::vector<double>& times, const SpaceLayout& l) {
  Eigen::SelfAdjointEigenSolver<CMatrix> es(rho0);
  std::vector<ProjectorFamily> fams;
  for (double t : times) {
    const CMatrix u = oracle::expm_taylor(h, t);
    ProjectorFamily f{t, l, {}};
    for (Eigen::Index k = 0; k < es.eigenvalues().size(); ++k) f.projectors.push_back(u * ket_bra(es.eigenvectors().col(k)) * u.adjoint());
    fams.push_back(f);
  }
  return fine_grained_histories(fams);
}

}  // namespace

TEST_CASE("family diagnostics") {
  CHECK(validate_family(ProjectorFamily::computational(0.0, SpaceLayout{{"A", 4}})).passed);
  CHECK(validate_family(ProjectorFamily::computational(0.0, SpaceLayout{{"A", 4}})).completeness == 0.0);

  ProjectorFamily mixed{0.0, SpaceLayout{{"A", 4}}, {}};
  CMatrix p = CMatrix::Zero(4, 4);
  p(0, 0) = p(1, 1) = 1;
  mixed.projectors.push_back(p);
  for (int i : {2, 3}) {
    CMatrix q = CMatrix::Zero(4, 4);
    q(i, i) = 1;
    mixed.projectors.push_back(q);
  }
  CHECK(validate_family(mixed).passed);

  ProjectorFamily overlap{0.0, kQubit, {}};
  CVector plus(2);
  plus << 1 / std::sqrt(2.0), 1 / std::sqrt(2.0);
  overlap.projectors.push_back(ket_bra(CVector::Unit(2, 0)));
  overlap.projectors.push_back(ket_bra(plus));
  const auto diag = validate_family(overlap);
  CHECK_FALSE(diag.passed);
  CHECK(diag.max_orthogonality == doctest::Approx(0.5));
}

TEST_CASE("single time gives Born probabilities") {
  RandomStream rng(21, 0);
  const DensityOperator rho(SpaceLayout{{"A", 3}}, oracle::random_density(3, rng));
  const auto fam = ProjectorFamily::computational(0.5, rho.layout());
  const auto set = fine_grained_histories({fam});
  const auto prop = Propagation::from_hamiltonian(HamiltonianSpectrum(Observable::zero(rho.layout())), 0.5, {0.5});
  const auto d = decoherence_functional(set, rho, prop);
  double total = 0.0;
  for (std::size_t k = 0; k < 3; ++k) {
    const auto p = probability(set.histories[k], d);
    CHECK(p == doctest::Approx(rho.matrix()(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k)).real()).epsilon(1e-12));
    total += p;
  }
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  CHECK_THROWS_WITH(probability(History{{{0, 7}}, false}, d), doctest::Contains("NotFound"));
}

TEST_CASE("two-time qubit functional against a path sum") {
  const double omega = 1.3;
  const Observable h(kQubit, 0.5 * omega * oracle::pauli_x());
  RandomStream rng(22, 0);
  const CMatrix rho = oracle::random_density(2, rng);
  const std::vector<double> times{0.4, 1.1};
  const auto set = fine_grained_histories({ProjectorFamily::computational(0.4, kQubit), ProjectorFamily::computational(1.1, kQubit)});
  const auto prop = Propagation::from_hamiltonian(HamiltonianSpectrum(h), 0.0, times);
  const auto d = decoherence_functional(set, DensityOperator(kQubit, rho), prop);

  const CMatrix u1 = oracle::expm_taylor(h.matrix(), 0.4), u2 = oracle::expm_taylor(h.matrix(), 0.7);
  // D(a,b) = delta_{a2 b2} U2[a2,a1] conj(U2[b2,b1]) sum_mn U1[a1,m] rho[m,n] conj(U1[b1,n])
  for (int a = 0; a < 4; ++a) {
    for (int b = 0; b < 4; ++b) {
      const int a1 = a / 2, a2 = a % 2, b1 = b / 2, b2 = b % 2;
      Complex expect = 0.0;
      if (a2 == b2) {
        Complex inner = 0.0;
        for (int m = 0; m < 2; ++m)
          for (int n = 0; n < 2; ++n) inner += u1(a1, m) * rho(m, n) * std::conj(u1(b1, n));
        expect = u2(a2, a1) * std::conj(u2(b2, b1)) * inner;
      }
      CHECK(std::abs(d.values(a, b) - expect) < 1e-12);
    }
  }
  const auto heis = decoherence_functional(set, DensityOperator(kQubit, rho), prop, Picture::Heisenberg);
  CHECK(oracle::max_abs(heis.values - d.values) < 1e-12);

  CHECK_THROWS_WITH(decoherence_functional(set, DensityOperator(kQubit, rho),
                                           Propagation::from_hamiltonian(HamiltonianSpectrum(h), 0.0, {0.4, 1.2})),
                    doctest::Contains("GridMismatch"));
}

TEST_CASE("random instances: pictures agree, D Hermitian, trace one") {
  RandomStream rng(23, 0);
  for (int trial = 0; trial < 12; ++trial) {
    const std::size_t d = 2 + static_cast<std::size_t>(rng.index(15));
    const std::size_t n_times = 1 + static_cast<std::size_t>(rng.index(4));
    const SpaceLayout l{{"A", d}};
    std::vector<ProjectorFamily> fams;
    std::vector<double> times;
    for (std::size_t i = 0; i < n_times; ++i) {
      times.push_back(0.3 + 0.6 * static_cast<double>(i));
      fams.push_back(random_family(times.back(), l, std::min<std::size_t>(d, 2 + rng.index(2)), rng));
    }
    const auto set = fine_grained_histories(fams);
    const HamiltonianSpectrum h(Observable(l, oracle::random_hermitian(d, rng)));
    const auto prop = Propagation::from_hamiltonian(h, 0.0, times);
    const DensityOperator rho(l, oracle::random_density(d, rng));
    const auto s = decoherence_functional(set, rho, prop, Picture::Schroedinger, 2);
    const auto hz = decoherence_functional(set, rho, prop, Picture::Heisenberg);
    CHECK(oracle::max_abs(s.values - hz.values) < 1e-10);
    CHECK(oracle::max_abs(s.values - s.values.adjoint()) < 1e-10);
    CHECK(std::abs(s.values.sum() - 1.0) < 1e-8);
    CHECK(s.values.diagonal().real().minCoeff() > -1e-10);
  }
}

TEST_CASE("evolved eigenprojectors are medium consistent") {
  RandomStream rng(24, 0);
  for (int trial = 0; trial < 6; ++trial) {
    const std::size_t d = 2 + static_cast<std::size_t>(rng.index(3));
    const SpaceLayout l{{"A", d}};
    const CMatrix h = oracle::random_hermitian(d, rng);
    const CMatrix rho = oracle::random_density(d, rng);
    const std::vector<double> times{0.2, 0.9, 1.5};
    const auto set = evolved_eigen_set(rho, h, times, l);
    const auto prop = Propagation::from_hamiltonian(HamiltonianSpectrum(Observable(l, h)), 0.0, times);
    const auto dfun = decoherence_functional(set, DensityOperator(l, rho), prop);
    const auto rep = check_consistency(dfun, ConsistencyMode::Medium, 1e-10);
    CHECK(rep.passed);
    CHECK(rep.max_violation < 1e-10);

    // probabilities along a branch: r_k when every step picks k, else 0
    Eigen::SelfAdjointEigenSolver<CMatrix> es(rho);
    for (const auto& hist : set.histories) {
      const auto k = hist.steps[0].projector;
      const bool same = std::all_of(hist.steps.begin(), hist.steps.end(), [k](const HistoryStep& s) { return s.projector == k; });
      const double expect = same ? es.eigenvalues()(static_cast<Eigen::Index>(k)) : 0.0;
      CHECK(std::abs(probability(hist, dfun) - expect) < 1e-10);
    }
    // additivity holds for every merge
    for (std::size_t a = 0; a < set.histories.size(); ++a)
      for (std::size_t b = a + 1; b < set.histories.size(); ++b) CHECK(std::abs(combine(dfun, {a, b}).violation) < 1e-10);
  }
}

TEST_CASE("double-slit interference and coarse graining") {
  // |+> prepared; which-slit (z) at t1, screen (x) at t2, no evolution between
  CVector plus(2), minus(2);
  plus << 1 / std::sqrt(2.0), 1 / std::sqrt(2.0);
  minus << 1 / std::sqrt(2.0), -1 / std::sqrt(2.0);
  ProjectorFamily screen{2.0, kQubit, {ket_bra(plus), ket_bra(minus)}};
  const auto set = fine_grained_histories({ProjectorFamily::computational(1.0, kQubit), screen});
  const auto prop = Propagation::from_hamiltonian(HamiltonianSpectrum(Observable::zero(kQubit)), 0.0, {1.0, 2.0});
  const auto d = decoherence_functional(set, DensityOperator(kQubit, ket_bra(plus)), prop);

  // path amplitudes <s|slit><slit|+>: each 1/2 for the + screen outcome
  const Complex psi_upper = plus(0) * plus(0), psi_lower = plus(1) * plus(1);
  const auto up = d.index_of(History{{{0, 0}, {1, 0}}, false});
  const auto lo = d.index_of(History{{{0, 1}, {1, 0}}, false});
  CHECK(std::abs(d.values(static_cast<Eigen::Index>(up), static_cast<Eigen::Index>(lo)) - psi_upper * std::conj(psi_lower)) < 1e-14);

  const auto weak = check_consistency(d, ConsistencyMode::Weak);
  CHECK_FALSE(weak.passed);
  CHECK(weak.max_violation == doctest::Approx(0.25));

  // merge the slits: the sum rule fails by the cross term
  const auto groups = coarse_grain(d, {{{0, 1}}, {{0}, {1}}});
  REQUIRE(groups.size() == 2);
  CHECK(groups[0].result.probability == doctest::Approx(1.0));
  CHECK(groups[0].result.member_sum == doctest::Approx(0.5));
  CHECK(std::abs(groups[0].result.violation - 2 * d.values(static_cast<Eigen::Index>(up), static_cast<Eigen::Index>(lo)).real()) < 1e-10);

  // grouping everything at one time gives 1
  const auto all = coarse_grain(d, {{{0, 1}}, {{0, 1}}});
  CHECK(all.front().result.probability == doctest::Approx(1.0).epsilon(1e-12));

  CHECK_THROWS_WITH(coarse_grain(d, {{{0, 1}}, {{0}, {0, 1}}}), doctest::Contains("BadGrouping"));
  CHECK_THROWS_WITH(coarse_grain(d, {{{0}}, {{0}, {1}}}), doctest::Contains("BadGrouping"));
  CHECK_THROWS_WITH(coarse_grain(d, {{{0, 1}}}), doctest::Contains("BadGrouping"));
}

TEST_CASE("weak versus medium on a constructed functional") {
  DecoherenceFunctional d;
  d.histories = {History{{{0, 0}}, false}, History{{{0, 1}}, false}};
  d.values = CMatrix::Zero(2, 2);
  d.values(0, 0) = 0.5;
  d.values(1, 1) = 0.5;
  CHECK(check_consistency(d, ConsistencyMode::Weak).passed);
  CHECK(check_consistency(d, ConsistencyMode::Medium).passed);
  d.values(0, 1) = Complex(0, 0.1);
  d.values(1, 0) = Complex(0, -0.1);
  CHECK(check_consistency(d, ConsistencyMode::Weak).passed);
  CHECK_FALSE(check_consistency(d, ConsistencyMode::Medium).passed);
}

TEST_CASE("additivity fails exactly when weak consistency fails") {
  RandomStream rng(25, 0);
  for (int trial = 0; trial < 10; ++trial) {
    const SpaceLayout l{{"A", 3}};
    const auto set = fine_grained_histories({random_family(0.5, l, 3, rng), random_family(1.0, l, 2, rng)});
    const auto prop = Propagation::from_hamiltonian(HamiltonianSpectrum(Observable(l, oracle::random_hermitian(3, rng))), 0.0, {0.5, 1.0});
    const auto d = decoherence_functional(set, DensityOperator(l, oracle::random_density(3, rng)), prop);
    const double tol = 1e-8;
    bool additive = true;
    for (std::size_t a = 0; a < set.histories.size(); ++a) {
      for (std::size_t b = a + 1; b < set.histories.size(); ++b) {
        const auto c = combine(d, {a, b});
        CHECK(std::abs(c.violation - 2 * d.values(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)).real()) < 1e-10);
        if (std::abs(c.violation) >= 2 * tol) additive = false;
      }
    }
    CHECK(additive == check_consistency(d, ConsistencyMode::Weak, tol).passed);
  }
}

TEST_CASE("guards") {
  std::vector<ProjectorFamily> five;
  for (int i = 0; i < 5; ++i) five.push_back(ProjectorFamily::computational(i, kQubit));
  CHECK_THROWS_WITH(fine_grained_histories(five), doctest::Contains("SizeGuard"));
  CHECK_THROWS_WITH(fine_grained_histories({ProjectorFamily::computational(0, SpaceLayout{{"A", 9}})}), doctest::Contains("SizeGuard"));
  CHECK_THROWS_WITH(fine_grained_histories({ProjectorFamily::computational(1, kQubit), ProjectorFamily::computational(1, kQubit)}),
                    doctest::Contains("InvalidArgument"));
}

TEST_CASE("Schmidt projectors: pure reduced state") {
  RandomStream rng(26, 0);
  const CVector s = oracle::random_vector(3, rng);
  const SpaceLayout l{{"S", 3}, {"E", 2}};
  const PureState psi0(l, oracle::kron(CMatrix(s), CMatrix(CVector::Unit(2, 1))).col(0));
  const auto out = schmidt_history_projectors(psi0, {"S"}, HamiltonianSpectrum(Observable::zero(l)), 0.0, {0.5});
  REQUIRE(out.branches.size() == 1);
  const auto& fam = out.set.families[out.branches[0].family];
  REQUIRE(fam.size() == 2);
  CHECK(oracle::max_abs(fam.projectors[0] - ket_bra(s)) < 1e-12);
  CHECK(oracle::max_abs(fam.projectors[1] - (CMatrix::Identity(3, 3) - ket_bra(s))) < 1e-12);
  CHECK_FALSE(out.branches[0].degenerate);
  CHECK(out.commutator_ok);
}

TEST_CASE("Schmidt projectors in the spin bath approach the pointer projectors") {
  SpinBathParams p;
  p.a = 0.8;
  p.b = 0.6;
  for (int k = 0; k < 8; ++k) {
    p.couplings.push_back(1.0 + 0.37 * k);
    p.env_amps.emplace_back(1 / std::sqrt(2.0), 1 / std::sqrt(2.0));
  }
  // grid times where the environment states are nearly orthogonal
  std::vector<double> times;
  for (double t = 1.0; t < 12.0 && times.size() < 3; t += 0.01) {
    if (std::abs(z_analytic(p, t)) < 1e-4 && (times.empty() || t - times.back() > 1.0)) times.push_back(t);
  }
  REQUIRE(times.size() >= 2);
  const auto h = interaction_hamiltonian(p);
  const auto out = schmidt_history_projectors(initial_state(p), {"S"}, HamiltonianSpectrum(h), 0.0, times);
  const CMatrix up = ket_bra(CVector::Unit(2, 0)), down = ket_bra(CVector::Unit(2, 1));
  for (const auto& br : out.branches) {
    for (const auto& proj : out.set.families[br.family].projectors) {
      CHECK(std::min((proj - up).norm(), (proj - down).norm()) < 1e-3);
    }
  }
  CHECK(out.commutator_ok);
}

TEST_CASE("deleting a grid point changes the Schmidt projectors") {
  RandomStream rng(27, 0);
  const SpaceLayout l{{"S", 2}, {"E", 3}};
  const HamiltonianSpectrum h(Observable(l, oracle::random_hermitian(6, rng)));
  const PureState psi0(l, oracle::random_vector(6, rng));
  const auto a = schmidt_history_projectors(psi0, {"S"}, h, 0.0, {0.5, 1.0, 1.5});
  const auto b = schmidt_history_projectors(psi0, {"S"}, h, 0.0, {0.5, 1.5});
  const auto same = projector_instability(a, a);
  CHECK(same.max_distance == 0.0);
  const auto rep = projector_instability(a, b);
  REQUIRE(rep.common_times.size() == 2);
  CHECK(rep.distances[0] < 1e-12);
  CHECK(rep.distances[1] > 1e-2);
  // family histories sum to one
  const auto d = decoherence_functional(a.set, DensityOperator::from_pure(psi0), Propagation::from_hamiltonian(h, 0.0, a.times));
  CHECK(std::abs(d.values.sum() - 1.0) < 1e-8);
}

TEST_CASE("reduced functional comparison") {
  RandomStream rng(28, 0);
  const SpaceLayout sl{{"S", 2}}, el{{"E", 2}};
  const DensityOperator rs(sl, oracle::random_density(2, rng)), re(el, oracle::random_density(2, rng));
  const auto set = fine_grained_histories({ProjectorFamily::computational(0.5, sl), ProjectorFamily::computational(1.2, sl)});

  // no coupling: re-preparing the product is exact
  const CMatrix hs = oracle::random_hermitian(2, rng);
  const HamiltonianSpectrum free(Observable(sl.concat(el), oracle::kron(hs, CMatrix::Identity(2, 2))));
  CHECK(reduced_functional_discrepancy(set, rs, re, free, 0.0).max_discrepancy < 1e-12);

  const HamiltonianSpectrum coupled(Observable(sl.concat(el), oracle::random_hermitian(4, rng)));
  const auto cmp = reduced_functional_discrepancy(set, rs, re, coupled, 0.0);
  CHECK(cmp.max_discrepancy > 1e-6);
  CHECK(std::abs(cmp.reduced.sum() - 1.0) < 1e-10);
}
