#include "declab/envariance.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <unordered_map>

#include <boost/integer/common_factor_rt.hpp>

namespace declab {

namespace {

constexpr std::size_t kDenseGuard = 4096;
constexpr std::size_t kDenseCheckTerms = 64;
constexpr std::int64_t kMaxDenominator = 1000000;

void check_slots(const SchmidtState& psi, std::size_t i, std::size_t j) {
  if (i >= psi.terms() || j >= psi.terms() || i == j) {
    throw Error(ErrorCode::InvalidArgument, "swap needs two distinct terms below " + std::to_string(psi.terms()));
  }
}

// (u_S (x) u_E) psi without forming the Kronecker product.
CVector apply_pair(const PairedTransform& pair, const CVector& psi, std::size_t ds, std::size_t de) {
  using RowMat = Eigen::Matrix<Complex, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const Eigen::Map<const RowMat> x(psi.data(), static_cast<Eigen::Index>(ds), static_cast<Eigen::Index>(de));
  RowMat y = pair.u_system * x * pair.u_env.transpose();
  return Eigen::Map<const CVector>(y.data(), y.size());
}

// Monomial state in Schmidt coordinates: slot k holds system label sys[k],
// environment label env[k] and amplitude amp[k]. Labels refer to the
// original Schmidt vectors.
struct Coords {
  std::vector<std::size_t> sys, env;
  std::vector<Complex> amp;
  std::vector<double> p_sys, p_env;  // marginals per label
  std::vector<std::size_t> slot_of_sys, slot_of_env;

  explicit Coords(const SchmidtState& psi) {
    const auto k = psi.terms();
    sys.resize(k);
    env.resize(k);
    amp.resize(k);
    slot_of_sys.resize(k);
    slot_of_env.resize(k);
    p_sys.assign(k, 0.0);
    p_env.assign(k, 0.0);
    for (std::size_t s = 0; s < k; ++s) {
      sys[s] = env[s] = slot_of_sys[s] = slot_of_env[s] = s;
      amp[s] = psi.amplitude(s);
      p_sys[s] = p_env[s] = std::norm(amp[s]);
    }
  }

  // probability that the system label is `a` and the environment label is `b`
  double joint(std::size_t a, std::size_t b) const {
    const auto s = slot_of_sys[a];
    return env[s] == b ? std::norm(amp[s]) : 0.0;
  }

  void swap_system(std::size_t a, std::size_t b, double xi_ab, double xi_ba) {
    const auto sa = slot_of_sys[a], sb = slot_of_sys[b];
    // |s_a> -> e^{i xi_ba}|s_b>, |s_b> -> e^{i xi_ab}|s_a>
    sys[sa] = b;
    amp[sa] *= std::polar(1.0, xi_ba);
    sys[sb] = a;
    amp[sb] *= std::polar(1.0, xi_ab);
    std::swap(slot_of_sys[a], slot_of_sys[b]);
    std::swap(p_sys[a], p_sys[b]);
  }

  void swap_env(std::size_t a, std::size_t b, double eta_ab, double eta_ba) {
    const auto sa = slot_of_env[a], sb = slot_of_env[b];
    env[sa] = b;
    amp[sa] *= std::polar(1.0, eta_ba);
    env[sb] = a;
    amp[sb] *= std::polar(1.0, eta_ab);
    std::swap(slot_of_env[a], slot_of_env[b]);
    std::swap(p_env[a], p_env[b]);
  }

  // Copies the slots holding labels a, b back from `from`, which must share
  // every other slot with *this.
  void restore(const Coords& from, std::size_t a, std::size_t b) {
    for (auto l : {a, b}) {
      const auto s = from.slot_of_sys[l];
      sys[s] = from.sys[s];
      env[s] = from.env[s];
      amp[s] = from.amp[s];
      slot_of_sys[l] = from.slot_of_sys[l];
      slot_of_env[l] = from.slot_of_env[l];
      p_sys[l] = from.p_sys[l];
      p_env[l] = from.p_env[l];
    }
  }

  // System and environment marginals recomputed from the slots touching labels a, b.
  void refresh(std::size_t a, std::size_t b) {
    for (auto l : {a, b}) {
      p_sys[l] = std::norm(amp[slot_of_sys[l]]);
      p_env[l] = std::norm(amp[slot_of_env[l]]);
    }
  }
};

// || x - y || restricted to the slots holding labels a and b; every other
// slot is untouched by a transposition of (a, b).
double local_distance(const Coords& x, const Coords& y, std::size_t a, std::size_t b) {
  double d2 = 0.0;
  for (auto l : {a, b}) {
    const auto sx = x.slot_of_sys[l], sy = y.slot_of_sys[l];
    if (x.env[sx] == y.env[sy]) {
      d2 += std::norm(x.amp[sx] - y.amp[sy]);
    } else {
      d2 += std::norm(x.amp[sx]) + std::norm(y.amp[sy]);
    }
  }
  return std::sqrt(d2);
}

}  // namespace

// ---------------------------------------------------------------------------
// SchmidtState

Complex SchmidtState::amplitude(std::size_t k) const { return std::polar(coefficients.at(k), phases.at(k)); }

CVector SchmidtState::system_vector(std::size_t k) const {
  if (!system_basis.empty()) return system_basis.at(k);
  return CVector::Unit(static_cast<Eigen::Index>(system_dim), static_cast<Eigen::Index>(system_index.at(k)));
}

CVector SchmidtState::env_vector(std::size_t k) const {
  if (!env_basis.empty()) return env_basis.at(k);
  return CVector::Unit(static_cast<Eigen::Index>(env_dim), static_cast<Eigen::Index>(env_index.at(k)));
}

void SchmidtState::validate() const {
  const auto k = terms();
  auto fail = [](const std::string& what) { throw Error(ErrorCode::InvalidArgument, "SchmidtState: " + what); };
  if (k == 0) fail("no terms");
  if (phases.size() != k) fail("phases length differs from coefficients");
  double sum = 0.0;
  for (double c : coefficients) {
    if (!(c > 0.0)) fail("coefficients must be positive");
    sum += c * c;
  }
  if (std::abs(sum - 1.0) > kConstructionTol) fail("squared coefficients sum to " + std::to_string(sum));
  if (system_dim < k || env_dim < k) fail("dimension below the number of terms");

  auto check_side = [&](const std::vector<CVector>& basis, const std::vector<std::size_t>& index, std::size_t dim,
                        const char* side) {
    if (!basis.empty()) {
      if (basis.size() != k) fail(std::string(side) + " basis length");
      for (const auto& v : basis)
        if (static_cast<std::size_t>(v.size()) != dim) fail(std::string(side) + " basis vector length");
      if (orthonormality_residual(basis) > kIdentityTol) fail(std::string(side) + " basis not orthonormal");
      return;
    }
    if (index.size() != k) fail(std::string(side) + " index length");
    std::vector<bool> seen(dim, false);
    for (auto i : index) {
      if (i >= dim || seen[i]) fail(std::string(side) + " indices must be distinct and in range");
      seen[i] = true;
    }
  };
  check_side(system_basis, system_index, system_dim, "system");
  check_side(env_basis, env_index, env_dim, "environment");
}

PureState SchmidtState::to_pure() const {
  validate();
  if (system_dim * env_dim > kDenseGuard) {
    throw Error(ErrorCode::SizeGuard, "dense state of dimension " + std::to_string(system_dim * env_dim) + " above " +
                                          std::to_string(kDenseGuard));
  }
  CVector v = CVector::Zero(static_cast<Eigen::Index>(system_dim * env_dim));
  for (std::size_t k = 0; k < terms(); ++k) v += amplitude(k) * kron(system_vector(k), env_vector(k));
  return PureState::normalized(SpaceLayout{{"S", system_dim}, {"E", env_dim}}, v);
}

SchmidtState SchmidtState::canonical(const std::vector<double>& coefficients, const std::vector<double>& phases) {
  SchmidtState s;
  const auto k = coefficients.size();
  double norm = 0.0;
  for (double c : coefficients) norm += c * c;
  norm = std::sqrt(norm);
  for (double c : coefficients) s.coefficients.push_back(c / norm);
  s.phases = phases.empty() ? std::vector<double>(k, 0.0) : phases;
  s.system_dim = s.env_dim = k;
  s.system_index.resize(k);
  s.env_index.resize(k);
  std::iota(s.system_index.begin(), s.system_index.end(), std::size_t{0});
  std::iota(s.env_index.begin(), s.env_index.end(), std::size_t{0});
  s.validate();
  return s;
}

SchmidtState SchmidtState::equal(std::size_t k, const std::vector<double>& phases) {
  if (k == 0) throw Error(ErrorCode::InvalidArgument, "need at least one term");
  auto s = canonical(std::vector<double>(k, 1.0), phases);
  s.coefficients.assign(k, 1.0 / std::sqrt(static_cast<double>(k)));
  return s;
}

double fidelity(const SchmidtState& a, const SchmidtState& b) {
  if (a.indexed() && b.indexed() && a.system_dim == b.system_dim && a.env_dim == b.env_dim) {
    std::unordered_map<std::uint64_t, Complex> amps;
    amps.reserve(b.terms());
    for (std::size_t k = 0; k < b.terms(); ++k) amps[b.system_index[k] * b.env_dim + b.env_index[k]] = b.amplitude(k);
    Complex overlap(0.0);
    for (std::size_t k = 0; k < a.terms(); ++k) {
      const auto it = amps.find(a.system_index[k] * a.env_dim + a.env_index[k]);
      if (it != amps.end()) overlap += std::conj(a.amplitude(k)) * it->second;
    }
    return std::abs(overlap);
  }
  const auto pa = a.to_pure(), pb = b.to_pure();
  if (!(pa.layout() == pb.layout())) throw Error(ErrorCode::LayoutMismatch, "states live on different spaces");
  return std::abs(pa.amplitudes().dot(pb.amplitudes()));
}

std::vector<double> system_populations(const SchmidtState& psi) {
  psi.validate();
  std::vector<double> out(psi.system_dim, 0.0);
  for (std::size_t k = 0; k < psi.terms(); ++k) {
    const double w = psi.coefficients[k] * psi.coefficients[k];
    if (psi.system_basis.empty()) {
      out[psi.system_index[k]] += w;
    } else {
      const auto& v = psi.system_basis[k];
      for (Eigen::Index i = 0; i < v.size(); ++i) out[static_cast<std::size_t>(i)] += w * std::norm(v(i));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Transforms

double envariance_residual(const SchmidtState& psi, const PairedTransform& pair) {
  const auto dense = psi.to_pure();
  if (static_cast<std::size_t>(pair.u_system.rows()) != psi.system_dim ||
      static_cast<std::size_t>(pair.u_env.rows()) != psi.env_dim) {
    throw Error(ErrorCode::LayoutMismatch, "transform dimensions do not match the state");
  }
  if (unitarity_residual(pair.u_system) > kIdentityTol || unitarity_residual(pair.u_env) > kIdentityTol) {
    throw Error(ErrorCode::InvalidArgument, "paired transform is not unitary");
  }
  const CVector out = apply_pair(pair, dense.amplitudes(), psi.system_dim, psi.env_dim);
  return 1.0 - std::abs(dense.amplitudes().dot(out));
}

bool is_envariant(const SchmidtState& psi, const PairedTransform& pair, double tol) {
  return envariance_residual(psi, pair) < tol;
}

PairedTransform phase_transform(const SchmidtState& psi, const std::vector<double>& xi) {
  psi.validate();
  if (xi.size() != psi.terms()) throw Error(ErrorCode::ArityError, "one phase per Schmidt term required");
  const auto ds = static_cast<Eigen::Index>(psi.system_dim), de = static_cast<Eigen::Index>(psi.env_dim);
  PairedTransform t{CMatrix::Identity(ds, ds), CMatrix::Identity(de, de)};
  for (std::size_t k = 0; k < psi.terms(); ++k) {
    const CVector s = psi.system_vector(k), e = psi.env_vector(k);
    t.u_system += (std::polar(1.0, xi[k]) - 1.0) * s * s.adjoint();
    t.u_env += (std::polar(1.0, -xi[k]) - 1.0) * e * e.adjoint();
  }
  return t;
}

SchmidtState apply_system_phases(const SchmidtState& psi, const std::vector<double>& xi) {
  if (xi.size() != psi.terms()) throw Error(ErrorCode::ArityError, "one phase per Schmidt term required");
  auto out = psi;
  for (std::size_t k = 0; k < psi.terms(); ++k) out.phases[k] += xi[k];
  return out;
}

SchmidtState swap(const SchmidtState& psi, std::size_t i, std::size_t j, double xi_ij, double xi_ji) {
  psi.validate();
  check_slots(psi, i, j);
  auto out = psi;
  if (out.system_basis.empty()) {
    std::swap(out.system_index[i], out.system_index[j]);
  } else {
    std::swap(out.system_basis[i], out.system_basis[j]);
  }
  out.phases[i] += xi_ji;  // term i now carries e^{i xi_ji}|s_j>
  out.phases[j] += xi_ij;
  return out;
}

SchmidtState swap(const SchmidtState& psi, double xi_12, double xi_21) {
  if (psi.terms() != 2) {
    throw Error(ErrorCode::ArityError, "two-term swap on a state with " + std::to_string(psi.terms()) + " terms");
  }
  return swap(psi, 0, 1, xi_12, xi_21);
}

SchmidtState counterswap(const SchmidtState& psi, std::size_t i, std::size_t j, double eta_ij, double eta_ji) {
  psi.validate();
  check_slots(psi, i, j);
  auto out = psi;
  if (out.env_basis.empty()) {
    std::swap(out.env_index[i], out.env_index[j]);
  } else {
    std::swap(out.env_basis[i], out.env_basis[j]);
  }
  out.phases[i] += eta_ji;
  out.phases[j] += eta_ij;
  return out;
}

SwapPhases matching_counterswap(const SchmidtState& psi, std::size_t i, std::size_t j, double xi_ij, double xi_ji) {
  check_slots(psi, i, j);
  const double di = psi.phases[i], dj = psi.phases[j];
  return SwapPhases{di - dj - xi_ij, dj - di - xi_ji};
}

PairedTransform swap_transform(const SchmidtState& psi, std::size_t i, std::size_t j, double xi_ij, double xi_ji) {
  psi.validate();
  check_slots(psi, i, j);
  const auto eta = matching_counterswap(psi, i, j, xi_ij, xi_ji);
  auto one = [](const CVector& a, const CVector& b, double ab, double ba) {
    CMatrix u = CMatrix::Identity(a.size(), a.size()) - a * a.adjoint() - b * b.adjoint();
    u += std::polar(1.0, ab) * a * b.adjoint() + std::polar(1.0, ba) * b * a.adjoint();
    return u;
  };
  return PairedTransform{one(psi.system_vector(i), psi.system_vector(j), xi_ij, xi_ji),
                         one(psi.env_vector(i), psi.env_vector(j), eta.eta_ij, eta.eta_ji)};
}

// ---------------------------------------------------------------------------
// Derivation

std::string to_string(ProofStep s) {
  switch (s) {
    case ProofStep::PerfectCorrelation: return "perfect_correlation";
    case ProofStep::SwapRelabeling: return "swap_relabeling";
    case ProofStep::CounterswapRestoration: return "counterswap_restoration";
    case ProofStep::Unaffectedness: return "unaffectedness";
    case ProofStep::Conclusion: return "conclusion";
  }
  return "unknown";
}

Derivation derive_equal_probabilities(const SchmidtState& psi, double amplitude_tol) {
  psi.validate();
  const auto k = psi.terms();
  for (std::size_t i = 1; i < k; ++i) {
    if (std::abs(psi.coefficients[i] - psi.coefficients[0]) > amplitude_tol) {
      throw Error(ErrorCode::NotEqualAmplitude, "coefficient " + std::to_string(i) + " differs from coefficient 0");
    }
  }

  Derivation d;
  d.trace = {
      {ProofStep::PerfectCorrelation, "A4", "p(s_k; psi) = p(e_k; psi) = p(s_k, e_k; psi)", 0.0, 0},
      {ProofStep::SwapRelabeling, "A4", "after the system swap, p(s_0; psi') = p(e_k; psi') and p(s_k; psi') = p(e_0; psi')", 0.0, 0},
      {ProofStep::CounterswapRestoration, "A2+A3", "the environment counterswap restores psi' to psi", 0.0, 0},
      {ProofStep::Unaffectedness, "A1+A2", "the counterswap leaves p(s; .) unchanged and the swap leaves p(e; .) unchanged", 0.0, 0},
      {ProofStep::Conclusion, "chain", "p(s_0; psi) = p(s_k; psi)", 0.0, 0},
  };
  auto note = [&](ProofStep s, double r) {
    auto& e = d.trace[static_cast<std::size_t>(s)];
    e.residual = std::max(e.residual, r);
    ++e.checks;
  };

  const Coords original(psi);
  Coords work(psi);
  const bool dense = k <= kDenseCheckTerms && psi.system_dim * psi.env_dim <= kDenseGuard;

  for (std::size_t j = 1; j < k; ++j) {
    const std::size_t i = 0;
    note(ProofStep::PerfectCorrelation,
         std::max({std::abs(original.p_sys[i] - original.p_env[i]), std::abs(original.p_sys[j] - original.p_env[j]),
                   std::abs(original.joint(i, i) - original.p_sys[i]), std::abs(original.joint(j, j) - original.p_sys[j])}));

    const double xi_ij = 0.0, xi_ji = 0.0;
    work.swap_system(i, j, xi_ij, xi_ji);
    work.refresh(i, j);
    const Coords swapped = work;
    note(ProofStep::SwapRelabeling, std::max({std::abs(swapped.p_sys[i] - swapped.p_env[j]), std::abs(swapped.p_sys[j] - swapped.p_env[i]),
                                              std::abs(swapped.joint(i, j) - swapped.p_sys[i]),
                                              std::abs(swapped.joint(j, i) - swapped.p_sys[j])}));

    const auto eta = matching_counterswap(psi, i, j, xi_ij, xi_ji);
    work.swap_env(i, j, eta.eta_ij, eta.eta_ji);
    work.refresh(i, j);
    double restore = local_distance(work, original, i, j);
    if (dense) restore = std::max(restore, envariance_residual(psi, swap_transform(psi, i, j, xi_ij, xi_ji)));
    note(ProofStep::CounterswapRestoration, restore);

    note(ProofStep::Unaffectedness,
         std::max({std::abs(work.p_sys[i] - swapped.p_sys[i]), std::abs(work.p_sys[j] - swapped.p_sys[j]),
                   std::abs(swapped.p_env[i] - original.p_env[i]), std::abs(swapped.p_env[j] - original.p_env[j])}));

    // p(s_0) = p(s_0; psi'') = p(s_0; psi') = p(e_j; psi') = p(e_j; psi) = p(s_j)
    note(ProofStep::Conclusion, std::abs(original.p_sys[i] - original.p_sys[j]));

    work.restore(original, i, j);
  }
  d.dense_checked = dense && k > 1;
  d.probabilities.assign(k, Rational(1, static_cast<std::int64_t>(k)));
  Rational total(0);
  for (const auto& p : d.probabilities) total += p;
  auto& conclusion = d.trace[static_cast<std::size_t>(ProofStep::Conclusion)];
  conclusion.statement += "; normalization gives 1/" + std::to_string(k);
  if (total != Rational(1)) conclusion.residual = 1.0;
  for (const auto& e : d.trace) d.max_residual = std::max(d.max_residual, e.residual);
  return d;
}

FineGrained fine_grain(const std::vector<Rational>& squared_coefficients) {
  if (squared_coefficients.empty()) throw Error(ErrorCode::InvalidArgument, "no coefficients");
  Rational total(0);
  std::int64_t m = 1;
  for (const auto& q : squared_coefficients) {
    if (q < Rational(0) || q > Rational(1)) throw Error(ErrorCode::InvalidArgument, "squared coefficient " + to_string(q) + " outside [0,1]");
    total += q;
    m = boost::integer::lcm(m, q.denominator());
    if (m > kMaxDenominator) throw Error(ErrorCode::SizeGuard, "common denominator exceeds " + std::to_string(kMaxDenominator));
  }
  if (total != Rational(1)) throw Error(ErrorCode::InvalidArgument, "squared coefficients sum to " + to_string(total));

  FineGrained fg;
  fg.denominator = static_cast<std::size_t>(m);
  const auto kk = squared_coefficients.size();
  auto& ext = fg.extended;
  ext.system_dim = kk * fg.denominator;
  ext.env_dim = fg.denominator;
  const double c = 1.0 / std::sqrt(static_cast<double>(m));
  std::size_t term = 0;
  for (std::size_t k = 0; k < kk; ++k) {
    const auto& q = squared_coefficients[k];
    const auto mk = static_cast<std::size_t>(q.numerator() * (m / q.denominator()));
    fg.multiplicities.push_back(mk);
    for (std::size_t r = 0; r < mk; ++r, ++term) {
      ext.coefficients.push_back(c);
      ext.phases.push_back(0.0);
      ext.system_index.push_back(k * fg.denominator + term);  // |s_k>|c_term>
      ext.env_index.push_back(term);
      fg.outcome_of_term.push_back(k);
    }
  }
  fg.derivation = derive_equal_probabilities(ext);
  fg.probabilities.assign(kk, Rational(0));
  for (std::size_t t = 0; t < fg.outcome_of_term.size(); ++t) fg.probabilities[fg.outcome_of_term[t]] += fg.derivation.probabilities[t];
  return fg;
}

RationalApproximation approximate_weights(const std::vector<double>& weights, std::int64_t max_denominator) {
  if (weights.empty()) throw Error(ErrorCode::InvalidArgument, "no weights");
  if (max_denominator < 1 || max_denominator > kMaxDenominator) {
    throw Error(ErrorCode::InvalidArgument, "max_denominator outside [1, " + std::to_string(kMaxDenominator) + "]");
  }
  double sum = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw Error(ErrorCode::InvalidArgument, "negative weight");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw Error(ErrorCode::InvalidArgument, "weights sum to " + std::to_string(sum));

  const auto m = max_denominator;
  std::vector<std::int64_t> counts;
  std::vector<std::pair<double, std::size_t>> remainders;
  std::int64_t assigned = 0;
  for (std::size_t k = 0; k < weights.size(); ++k) {
    const double scaled = weights[k] / sum * static_cast<double>(m);
    const auto base = static_cast<std::int64_t>(std::floor(scaled));
    counts.push_back(base);
    assigned += base;
    remainders.emplace_back(scaled - static_cast<double>(base), k);
  }
  std::stable_sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::int64_t r = 0; r < m - assigned; ++r) ++counts[remainders[static_cast<std::size_t>(r) % remainders.size()].second];

  RationalApproximation out;
  out.bound = 1.0 / static_cast<double>(m);
  for (std::size_t k = 0; k < weights.size(); ++k) {
    out.values.emplace_back(counts[k], m);
    out.max_error = std::max(out.max_error, std::abs(weights[k] - static_cast<double>(counts[k]) / static_cast<double>(m)));
  }
  return out;
}

Rational parse_rational(std::string_view text) {
  auto bad = [&]() -> Rational { throw Error(ErrorCode::ParseError, "not a rational m/M: '" + std::string(text) + "'"); };
  while (!text.empty() && text.front() == ' ') text.remove_prefix(1);
  while (!text.empty() && text.back() == ' ') text.remove_suffix(1);
  const auto slash = text.find('/');
  auto parse_int = [&](std::string_view s, std::int64_t& out) {
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc() && ptr == s.data() + s.size() && !s.empty();
  };
  std::int64_t num = 0, den = 1;
  if (!parse_int(text.substr(0, slash), num)) return bad();
  if (slash != std::string_view::npos && !parse_int(text.substr(slash + 1), den)) return bad();
  if (den <= 0) return bad();
  return Rational(num, den);
}

std::string to_string(const Rational& r) {
  if (r.denominator() == 1) return std::to_string(r.numerator());
  return std::to_string(r.numerator()) + "/" + std::to_string(r.denominator());
}

}  // namespace declab
