#include <doctest.h>

#include <cmath>
#include <sstream>

#include "declab/hilbert.hpp"
#include "declab/random.hpp"
#include "declab/textio.hpp"
#include "oracles.hpp"

using namespace declab;

namespace {

const double kInvSqrt2 = 1.0 / std::sqrt(2.0);

PureState qubit(Complex a, Complex b, const std::string& label) {
  CVector v(2);
  v << a, b;
  return PureState::normalized(SpaceLayout{{label, 2}}, v);
}

PureState singlet() {
  CVector v = CVector::Zero(4);
  v(1) = kInvSqrt2;
  v(2) = -kInvSqrt2;
  return PureState(SpaceLayout{{"1", 2}, {"2", 2}}, v);
}

double max_abs(const CMatrix& m) { return m.cwiseAbs().maxCoeff(); }

}  // namespace

TEST_CASE("layout basics") {
  SpaceLayout l{{"S", 2}, {"A", 3}, {"E", 4}};
  CHECK(l.dim() == 24);
  CHECK(l.position("A") == 1);
  CHECK(l.restrict_to({"E", "S"}).to_string() == "S:2,E:4");
  CHECK(l.complement({"A"}) == LabelSet{"S", "E"});
  CHECK(SpaceLayout::parse(l.to_string()) == l);
  CHECK_THROWS_AS(l.position("X"), Error);
  CHECK_THROWS_AS((SpaceLayout{{"S", 2}, {"S", 2}}), Error);
  CHECK_THROWS_AS(l.concat(SpaceLayout{{"A", 2}}), Error);
  CHECK_THROWS_AS(SpaceLayout::parse("S:0"), Error);
}

TEST_CASE("tensor") {
  const auto z0 = PureState::basis(SpaceLayout{{"a", 2}}, 0);
  const auto z0b = PureState::basis(SpaceLayout{{"b", 2}}, 0);
  const auto t = tensor(z0, z0b);
  CHECK(t.amplitudes()(0) == Complex(1.0));
  CHECK(t.amplitudes().norm() == doctest::Approx(1.0));

  const auto plus = qubit(1, 1, "a");
  const auto one = PureState::basis(SpaceLayout{{"b", 2}}, 1);
  const auto p = tensor(plus, one);
  CHECK(std::abs(p.amplitudes()(0)) < 1e-15);
  CHECK(std::abs(p.amplitudes()(1) - kInvSqrt2) < 1e-15);
  CHECK(std::abs(p.amplitudes()(2)) < 1e-15);
  CHECK(std::abs(p.amplitudes()(3) - kInvSqrt2) < 1e-15);

  CHECK_THROWS_WITH_AS(tensor(z0, z0), doctest::Contains("LabelCollision"), Error);

  RandomStream rng(1, 0);
  std::vector<PureState> parts;
  for (int i = 0; i < 3; ++i) {
    parts.emplace_back(SpaceLayout{{"q" + std::to_string(i), 2}}, oracle::random_vector(2, rng));
  }
  const auto prod = tensor(parts);
  double norm2 = 0.0;
  for (Eigen::Index i = 0; i < prod.amplitudes().size(); ++i) norm2 += std::norm(prod.amplitudes()(i));
  CHECK(std::abs(std::sqrt(norm2) - 1.0) < 1e-12);
  CHECK(prod.layout().to_string() == "q0:2,q1:2,q2:2");
}

TEST_CASE("partial trace") {
  const auto rho = DensityOperator::from_pure(singlet());
  const auto r1 = partial_trace(rho, {"1"});
  CHECK(max_abs(r1.matrix() - 0.5 * CMatrix::Identity(2, 2)) < 1e-12);
  CHECK_THROWS_WITH_AS(partial_trace(rho, {"9"}), doctest::Contains("LabelNotFound"), Error);

  RandomStream rng(2, 0);
  SUBCASE("product factorizes") {
    const DensityOperator a(SpaceLayout{{"A", 3}}, oracle::random_density(3, rng));
    const DensityOperator b(SpaceLayout{{"B", 2}}, oracle::random_density(2, rng));
    CHECK(max_abs(partial_trace(tensor(a, b), {"A"}).matrix() - a.matrix()) < 1e-12);
    CHECK(max_abs(partial_trace(tensor(a, b), {"B"}).matrix() - b.matrix()) < 1e-12);
  }

  SUBCASE("local statistics match full-space expectation") {
    const auto layout = SpaceLayout::qubits(3);
    const PureState psi(layout, oracle::random_vector(8, rng));
    const auto r = partial_trace(DensityOperator::from_pure(psi), {"q0"});
    const auto r_direct = reduce(psi, {"q0"});
    CHECK(max_abs(r.matrix() - r_direct.matrix()) < 1e-12);
    for (int k = 0; k < 20; ++k) {
      const CMatrix o = oracle::random_hermitian(2, rng);
      const CMatrix full = oracle::kron(o, CMatrix::Identity(4, 4));
      const double global = (psi.amplitudes().adjoint() * full * psi.amplitudes())(0).real();
      CHECK(std::abs(expectation(r, Observable(r.layout(), o)) - global) < 1e-10);
    }
  }

  SUBCASE("trace and hermiticity preserved, middle factor") {
    const SpaceLayout layout{{"a", 2}, {"b", 3}, {"c", 2}};
    for (int k = 0; k < 10; ++k) {
      const DensityOperator r(layout, oracle::random_density(12, rng));
      const auto red = partial_trace(r, {"a", "c"});
      CHECK(std::abs(red.matrix().trace() - Complex(1.0)) < 1e-12);
      CHECK(hermiticity_residual(red.matrix()) < 1e-14);
      // explicit index oracle for the kept pair (a, c)
      CMatrix expect = CMatrix::Zero(4, 4);
      for (int a1 = 0; a1 < 2; ++a1)
        for (int c1 = 0; c1 < 2; ++c1)
          for (int a2 = 0; a2 < 2; ++a2)
            for (int c2 = 0; c2 < 2; ++c2)
              for (int b = 0; b < 3; ++b)
                expect(a1 * 2 + c1, a2 * 2 + c2) += r.matrix()(a1 * 6 + b * 2 + c1, a2 * 6 + b * 2 + c2);
      CHECK(max_abs(red.matrix() - expect) < 1e-12);
    }
  }
}

TEST_CASE("expectation") {
  const auto rho0 = DensityOperator::from_pure(PureState::basis(SpaceLayout{{"q", 2}}, 0));
  CHECK(expectation(rho0, Observable(rho0.layout(), oracle::pauli_z())) == doctest::Approx(1.0));
  const auto mixed = DensityOperator::maximally_mixed(SpaceLayout{{"q", 2}});
  CHECK(std::abs(expectation(mixed, Observable(mixed.layout(), oracle::pauli_x()))) < 1e-15);
  CHECK_THROWS_WITH_AS(expectation(mixed, Observable(SpaceLayout{{"r", 2}}, oracle::pauli_x())),
                       doctest::Contains("LayoutMismatch"), Error);

  // decohered system-apparatus state: sum_n |c_n|^2 |s_n a_n><s_n a_n|
  RandomStream rng(3, 0);
  const CVector c = oracle::random_vector(3, rng);
  const SpaceLayout sa{{"S", 3}, {"A", 3}};
  CMatrix rho = CMatrix::Zero(9, 9);
  for (int n = 0; n < 3; ++n) rho(n * 3 + n, n * 3 + n) = std::norm(c(n));
  const std::array<double, 3> lambda{-1.5, 0.25, 4.0};
  CMatrix o = CMatrix::Zero(9, 9);
  for (int n = 0; n < 3; ++n)
    for (int a = 0; a < 3; ++a) o(n * 3 + a, n * 3 + a) = lambda[static_cast<std::size_t>(n)];
  double direct = 0.0;
  for (int n = 0; n < 3; ++n) direct += std::norm(c(n)) * lambda[static_cast<std::size_t>(n)];
  CHECK(std::abs(expectation(DensityOperator(sa, rho), Observable(sa, o)) - direct) < 1e-12);
}

TEST_CASE("reduced-statistics identity over random cases") {
  RandomStream rng(4, 0);
  const SpaceLayout layout{{"A", 2}, {"B", 3}};
  for (int k = 0; k < 100; ++k) {
    const DensityOperator rho(layout, oracle::random_density(6, rng));
    const CMatrix o = oracle::random_hermitian(3, rng);
    const Observable local(SpaceLayout{{"B", 3}}, o);
    const double global = expectation(rho, embed(local, layout));
    const double reduced = expectation(partial_trace(rho, {"B"}), local);
    CHECK(std::abs(global - reduced) < 1e-10);
  }
}

TEST_CASE("embed reorders factors") {
  RandomStream rng(5, 0);
  const SpaceLayout target{{"a", 2}, {"b", 3}, {"c", 2}};
  const CMatrix oa = oracle::random_hermitian(2, rng);
  const CMatrix oc = oracle::random_hermitian(2, rng);
  // local layout lists c before a
  const CMatrix lifted = embed(SpaceLayout{{"c", 2}, {"a", 2}}, oracle::kron(oc, oa), target);
  const CMatrix expect = oracle::kron(oracle::kron(oa, CMatrix::Identity(3, 3)), oc);
  CHECK(max_abs(lifted - expect) < 1e-14);
}

TEST_CASE("schmidt") {
  const auto prod = tensor(qubit(1, 2, "a"), qubit(Complex(0, 1), 3, "b"));
  const auto sp = schmidt(prod, {"a"}, {"b"});
  REQUIRE(sp.rank() == 1);
  CHECK(sp.coefficients[0] == doctest::Approx(1.0));

  const auto s = schmidt(singlet(), {"1"}, {"2"});
  REQUIRE(s.rank() == 2);
  CHECK(std::abs(s.coefficients[0] - kInvSqrt2) < 1e-12);
  CHECK(std::abs(s.coefficients[1] - kInvSqrt2) < 1e-12);
  CHECK((s.reconstruct() - singlet().amplitudes()).norm() < 1e-12);

  CHECK_THROWS_WITH_AS(schmidt(singlet(), {"1"}, {"1"}), doctest::Contains("BadBipartition"), Error);
  CHECK_THROWS_WITH_AS(schmidt(singlet(), {"1"}, {}), doctest::Contains("BadBipartition"), Error);

  RandomStream rng(6, 0);
  const SpaceLayout qt{{"x", 3}, {"y", 3}};
  for (int k = 0; k < 10; ++k) {
    const PureState psi(qt, oracle::random_vector(9, rng));
    const auto d = schmidt(psi, {"x"}, {"y"});
    CHECK((d.reconstruct() - psi.amplitudes()).norm() < 1e-10);
    // singular values of the reshaped amplitude matrix from M M^dagger
    CMatrix m(3, 3);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) m(i, j) = psi.amplitudes()(i * 3 + j);
    Eigen::SelfAdjointEigenSolver<CMatrix> es(m * m.adjoint());
    for (std::size_t i = 0; i < d.rank(); ++i) {
      const double sv = std::sqrt(std::max(0.0, es.eigenvalues()(2 - static_cast<Eigen::Index>(i))));
      CHECK(std::abs(d.coefficients[i] - sv) < 1e-10);
    }
  }
}

TEST_CASE("schmidt properties up to dimension 64") {
  RandomStream rng(7, 0);
  const std::vector<SpaceLayout> layouts{
      SpaceLayout{{"a", 2}, {"b", 2}, {"c", 2}, {"d", 2}, {"e", 2}, {"f", 2}},
      SpaceLayout{{"a", 4}, {"b", 3}, {"c", 5}},
      SpaceLayout{{"a", 7}, {"b", 9}},
  };
  for (const auto& layout : layouts) {
    const auto labels = layout.labels();
    for (std::size_t cut = 1; cut < labels.size(); ++cut) {
      LabelSet left(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(cut));
      LabelSet right(labels.begin() + static_cast<std::ptrdiff_t>(cut), labels.end());
      // interleave to exercise non-contiguous bipartitions
      if (labels.size() > 2 && cut == 1) std::swap(left[0], right.back());
      const PureState psi(layout, oracle::random_vector(layout.dim(), rng));
      const auto d = schmidt(psi, left, right);
      CHECK((d.reconstruct() - psi.amplitudes()).norm() < 1e-10);
      double sum = 0.0;
      for (auto c : d.coefficients) sum += c * c;
      CHECK(std::abs(sum - 1.0) < 1e-10);
      for (std::size_t i = 1; i < d.rank(); ++i) CHECK(d.coefficients[i] <= d.coefficients[i - 1]);
      CHECK(orthonormality_residual(d.left_basis) < 1e-10);
      CHECK(orthonormality_residual(d.right_basis) < 1e-10);

      for (const auto* side : {&left, &right}) {
        Eigen::SelfAdjointEigenSolver<CMatrix> es(reduce(psi, *side).matrix());
        const auto& ev = es.eigenvalues();
        for (std::size_t i = 0; i < static_cast<std::size_t>(ev.size()); ++i) {
          const double lam = ev(ev.size() - 1 - static_cast<Eigen::Index>(i));
          const double c2 = i < d.rank() ? d.coefficients[i] * d.coefficients[i] : 0.0;
          CHECK(std::abs(lam - c2) < 1e-10);
        }
      }
    }
  }
}

namespace {

// Best sum_i |<a_i b_i c_i|psi>|^2 over local qubit unitaries by random-restart
// hill climbing. 1 - best is the squared residual of the closest form.
double best_ghz_overlap(const CVector& psi, std::size_t restarts, RandomStream& rng) {
  auto score = [&](const std::array<CMatrix, 3>& u) {
    double s = 0.0;
    for (int i = 0; i < 2; ++i) {
      const CVector v = oracle::kron(oracle::kron(CMatrix(u[0].col(i)), CMatrix(u[1].col(i))), CMatrix(u[2].col(i)));
      s += std::norm(v.dot(psi));
    }
    return s;
  };
  double best = 0.0;
  for (std::size_t r = 0; r < restarts; ++r) {
    std::array<CMatrix, 3> u{oracle::random_unitary(2, rng), oracle::random_unitary(2, rng), oracle::random_unitary(2, rng)};
    double cur = score(u);
    double step = 0.5;
    for (int it = 0; it < 400 && step > 1e-6; ++it) {
      auto trial = u;
      const auto k = rng.index(3);
      trial[k] = u[k] * oracle::expm_taylor(oracle::random_hermitian(2, rng), step);
      const double s = score(trial);
      if (s > cur) {
        cur = s;
        u = trial;
      } else {
        step *= 0.97;
      }
    }
    best = std::max(best, cur);
  }
  return best;
}

}  // namespace

TEST_CASE("tridecomposition") {
  const auto layout = SpaceLayout::qubits(3);
  const std::array<LabelSet, 3> parts{LabelSet{"q0"}, LabelSet{"q1"}, LabelSet{"q2"}};

  CVector ghz = CVector::Zero(8);
  ghz(0) = ghz(7) = kInvSqrt2;
  const auto g = tridecomposition_search(PureState(layout, ghz), parts, 1e-6);
  REQUIRE(g.has_value());
  REQUIRE(g->weights.size() == 2);
  CHECK(std::abs(g->weights[0] - kInvSqrt2) < 1e-8);
  CHECK(std::abs(g->weights[1] - kInvSqrt2) < 1e-8);
  CHECK(g->residual < 1e-6);

  const auto p = tridecomposition_search(PureState::basis(layout, 0), parts, 1e-6);
  REQUIRE(p.has_value());
  CHECK(p->weights.size() == 1);
  CHECK(p->weights[0] == doctest::Approx(1.0));

  SUBCASE("hidden GHZ form under local unitaries") {
    RandomStream rng(8, 0);
    CVector base = CVector::Zero(8);
    base(0) = std::sqrt(0.7);
    base(7) = std::sqrt(0.3);
    const CMatrix u = oracle::kron(oracle::kron(oracle::random_unitary(2, rng), oracle::random_unitary(2, rng)),
                                   oracle::random_unitary(2, rng));
    const auto d = tridecomposition_search(PureState(layout, u * base), parts, 1e-6);
    REQUIRE(d.has_value());
    REQUIRE(d->weights.size() == 2);
    CHECK(std::abs(d->weights[0] - std::sqrt(0.7)) < 1e-6);
    CHECK(std::abs(d->weights[1] - std::sqrt(0.3)) < 1e-6);
  }

  SUBCASE("W state has none") {
    CVector w = CVector::Zero(8);
    w(1) = w(2) = w(4) = 1.0 / std::sqrt(3.0);
    CHECK_FALSE(tridecomposition_search(PureState(layout, w), parts, 1e-6).has_value());
    RandomStream rng(9, 0);
    const double best = best_ghz_overlap(w, 200, rng);
    CHECK(std::sqrt(std::max(0.0, 1.0 - best)) > 1e-3);
  }
}

TEST_CASE("purity and entropy") {
  const auto pure = DensityOperator::from_pure(singlet());
  CHECK(purity(pure) == doctest::Approx(1.0));
  CHECK(std::abs(vn_entropy(pure)) < 1e-12);
  const auto mixed = DensityOperator::maximally_mixed(SpaceLayout{{"q", 2}});
  CHECK(purity(mixed) == doctest::Approx(0.5));
  CHECK(vn_entropy(mixed) == doctest::Approx(std::log(2.0)));
}

TEST_CASE("evolve") {
  RandomStream rng(10, 0);
  const auto layout = SpaceLayout::qubits(3);
  const Observable h(layout, oracle::random_hermitian(8, rng));
  const PureState psi(layout, oracle::random_vector(8, rng));

  CHECK((evolve(psi, h, 0.0).amplitudes() - psi.amplitudes()).norm() < 1e-14);

  const auto half = evolve(evolve(psi, h, 0.35), h, 0.35);
  const auto full = evolve(psi, h, 0.7);
  CHECK((half.amplitudes() - full.amplitudes()).norm() < 1e-9);
  CHECK(max_abs(propagator(h, 0.7) - oracle::expm_taylor(h.matrix(), 0.7)) < 1e-10);

  CMatrix diag = CMatrix::Zero(8, 8);
  for (int i = 0; i < 8; ++i) diag(i, i) = 0.3 * i;
  const auto b = evolve(PureState::basis(layout, 5), Observable(layout, diag), 2.0);
  CHECK(std::abs(std::abs(b.amplitudes()(5)) - 1.0) < 1e-14);
  CHECK(std::abs(b.amplitudes()(5) - std::exp(Complex(0, -3.0))) < 1e-12);

  for (int k = 0; k < 10; ++k) {
    const DensityOperator rho(layout, oracle::random_density(8, rng));
    CHECK(std::abs(purity(evolve(rho, h, 1.3)) - purity(rho)) < 1e-10);
  }
  CHECK_THROWS_WITH_AS(evolve(psi, Observable(SpaceLayout::qubits(3, "r"), h.matrix()), 1.0),
                       doctest::Contains("LayoutMismatch"), Error);
}

TEST_CASE("invariant validation") {
  const SpaceLayout q{{"q", 2}};
  CVector v(2);
  v << 1.0, 1.0;
  CHECK_THROWS_AS(PureState(q, v), Error);
  CMatrix m(2, 2);
  m << 0.5, 0.1, 0.2, 0.5;
  CHECK_THROWS_AS(DensityOperator(q, m), Error);
  CHECK_THROWS_AS(Observable(q, m), Error);
  m << 1.5, 0, 0, -0.5;
  CHECK_THROWS_AS(DensityOperator(q, m), Error);
}

TEST_CASE("philox known answers") {
  using C = Philox4x32::Counter;
  CHECK(Philox4x32::block(C{0, 0, 0, 0}, {0, 0}) == C{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
  CHECK(Philox4x32::block(C{0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, {0xffffffff, 0xffffffff}) ==
        C{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd});
  RandomStream a(42, 3), b(42, 3), c(42, 4);
  CHECK(a.next_u64() == b.next_u64());
  CHECK(a.next_u64() != c.next_u64());
}

TEST_CASE("text matrix round trip") {
  RandomStream rng(11, 0);
  const SpaceLayout layout{{"S", 2}, {"E", 3}};
  const PureState psi(layout, oracle::random_vector(6, rng));
  std::stringstream ss;
  write_state(ss, psi);
  const auto t = read_text(ss);
  CHECK(t.layout == layout);
  CHECK(t.is_vector());
  CHECK((t.as_vector() - psi.amplitudes()).norm() == 0.0);

  const DensityOperator rho(layout, oracle::random_density(6, rng));
  std::stringstream so;
  write_operator(so, rho);
  const auto r = read_text(so);
  CHECK_FALSE(r.is_vector());
  CHECK(max_abs(r.as_matrix() - rho.matrix()) == 0.0);

  std::stringstream bad("layout: q:2\n1,0\n");
  CHECK_THROWS_WITH_AS(read_text(bad), doctest::Contains("ParseError"), Error);
  std::stringstream bad2("# c\nlayout: q:2\n1,x\n0,0\n");
  CHECK_THROWS_WITH_AS(read_text(bad2), doctest::Contains("ParseError"), Error);
}
