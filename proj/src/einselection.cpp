#include "declab/einselection.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "declab/parallel.hpp"

namespace declab {

namespace {

constexpr double kProjectorTol = 1e-10;

void check_projector(const Observable& p, std::size_t i) {
  const CMatrix& m = p.matrix();
  if (hermiticity_residual(m) > kProjectorTol || (m * m - m).cwiseAbs().maxCoeff() > kProjectorTol) {
    throw Error(ErrorCode::InvalidProjector, "entry " + std::to_string(i) + " is not a Hermitian idempotent");
  }
}

CMatrix lift(const Observable& op, const SpaceLayout& target) {
  if (op.layout() == target) return op.matrix();
  return embed(op.layout(), op.matrix(), target);
}

// Ranks entries by a total preorder that treats scores within tol as equal.
void rank_entries(std::vector<SieveEntry>& entries, double tol) {
  auto better = [tol](const SieveEntry& a, const SieveEntry& b) {
    if (std::abs(a.purity - b.purity) > tol) return a.purity > b.purity;
    if (std::abs(a.entropy - b.entropy) > tol) return a.entropy < b.entropy;
    return a.index < b.index;
  };
  for (std::size_t i = 0; i < entries.size(); ++i) {
    std::size_t best = i;
    for (std::size_t j = i + 1; j < entries.size(); ++j)
      if (better(entries[j], entries[best])) best = j;
    if (best != i) std::swap(entries[i], entries[best]);
  }
}

}  // namespace

Observable InteractionSpec::total() const {
  validate();
  return Observable(layout(), embed(system_layout, h_self.matrix(), layout()) + h_int.matrix());
}

void InteractionSpec::validate() const {
  if (!(h_self.layout() == system_layout)) {
    throw Error(ErrorCode::LayoutMismatch, "h_self on " + h_self.layout().to_string() + ", system is " + system_layout.to_string());
  }
  if (!(h_int.layout() == layout())) {
    throw Error(ErrorCode::LayoutMismatch, "h_int on " + h_int.layout().to_string() + ", expected " + layout().to_string());
  }
}

CommutatorReport commutes(const std::vector<Observable>& projectors, const Observable& h, double tol) {
  CommutatorReport rep;
  rep.tol = tol;
  rep.passed = true;
  for (std::size_t i = 0; i < projectors.size(); ++i) {
    check_projector(projectors[i], i);
    const CMatrix p = lift(projectors[i], h.layout());
    const double n = (p * h.matrix() - h.matrix() * p).norm();
    rep.norms.push_back(n);
    if (!(n < tol)) rep.passed = false;
  }
  return rep;
}

Observable preferred_observable(const std::vector<Observable>& projectors, const std::vector<double>& eigenvalues) {
  if (projectors.empty()) throw Error(ErrorCode::IncompleteFamily, "no projectors");
  if (projectors.size() != eigenvalues.size()) {
    throw Error(ErrorCode::InvalidArgument, std::to_string(projectors.size()) + " projectors, " +
                                                std::to_string(eigenvalues.size()) + " eigenvalues");
  }
  const auto& layout = projectors.front().layout();
  const auto d = static_cast<Eigen::Index>(layout.dim());
  CMatrix sum = CMatrix::Zero(d, d);
  CMatrix obs = CMatrix::Zero(d, d);
  for (std::size_t i = 0; i < projectors.size(); ++i) {
    if (!(projectors[i].layout() == layout)) throw Error(ErrorCode::LayoutMismatch, "projectors on different layouts");
    check_projector(projectors[i], i);
    for (std::size_t j = 0; j < i; ++j) {
      if ((projectors[i].matrix() * projectors[j].matrix()).cwiseAbs().maxCoeff() > kProjectorTol) {
        throw Error(ErrorCode::InvalidProjector, "projectors " + std::to_string(j) + " and " + std::to_string(i) + " overlap");
      }
    }
    sum += projectors[i].matrix();
    obs += eigenvalues[i] * projectors[i].matrix();
  }
  if ((sum - CMatrix::Identity(d, d)).cwiseAbs().maxCoeff() > kProjectorTol) {
    throw Error(ErrorCode::IncompleteFamily, "projectors do not sum to the identity");
  }
  return Observable(layout, 0.5 * (obs + obs.adjoint()));
}

std::vector<SieveReport> predictability_sieve(const InteractionSpec& spec, const DensityOperator& env_state,
                                              const std::vector<PureState>& candidates, const std::vector<double>& times,
                                              double tie_tol, std::size_t workers) {
  spec.validate();
  if (!(env_state.layout() == spec.env_layout)) {
    throw Error(ErrorCode::LayoutMismatch, "environment state on " + env_state.layout().to_string());
  }
  for (const auto& c : candidates) {
    if (!(c.layout() == spec.system_layout)) throw Error(ErrorCode::LayoutMismatch, "candidate on " + c.layout().to_string());
  }
  const Observable h = spec.total();
  const HamiltonianSpectrum spectrum(h);
  std::vector<CMatrix> rho0;
  for (const auto& c : candidates) {
    rho0.push_back(kron(CMatrix(c.amplitudes() * c.amplitudes().adjoint()), env_state.matrix()));
  }
  std::vector<SieveReport> out(times.size());
  const LabelSet keep = spec.system_layout.labels();
  parallel_for(times.size(), workers, [&](std::size_t ti) {
    const double t = times[ti];
    SieveReport rep;
    rep.time = t;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      const CMatrix red = partial_trace(h.layout(), spectrum.conjugate(rho0[i], t), keep);
      const CMatrix herm = 0.5 * (red + red.adjoint());
      rep.entries.push_back(SieveEntry{i, candidates[i], herm.cwiseAbs2().sum(), vn_entropy(herm)});
    }
    rank_entries(rep.entries, tie_tol);
    out[ti] = std::move(rep);
  });
  return out;
}

SieveReport predictability_sieve(const InteractionSpec& spec, const DensityOperator& env_state,
                                 const std::vector<PureState>& candidates, double t, double tie_tol) {
  return predictability_sieve(spec, env_state, candidates, std::vector<double>{t}, tie_tol).front();
}

std::string to_string(Regime r) {
  switch (r) {
    case Regime::InteractionDominated: return "interaction_dominated";
    case Regime::SelfDominated: return "self_dominated";
    case Regime::Intermediate: return "intermediate";
  }
  return "unknown";
}

double operator_norm(const CMatrix& m) {
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<CMatrix> svd(m);
  return svd.singularValues()(0);
}

RegimeReport classify_regime(const InteractionSpec& spec, double low, double high) {
  spec.validate();
  if (!(low > 0.0 && low < high)) throw Error(ErrorCode::InvalidArgument, "thresholds need 0 < low < high");
  const double n_self = operator_norm(spec.h_self.matrix());
  const double n_int = operator_norm(spec.h_int.matrix());
  if (n_self == 0.0 && n_int == 0.0) throw Error(ErrorCode::DegenerateSpec, "both Hamiltonians vanish");
  RegimeReport rep;
  rep.ratio = n_self == 0.0 ? std::numeric_limits<double>::infinity() : n_int / n_self;
  if (rep.ratio >= high) {
    rep.regime = Regime::InteractionDominated;
    rep.prediction = "pointer states close to eigenstates of the interaction";
  } else if (rep.ratio <= low) {
    rep.regime = Regime::SelfDominated;
    rep.prediction = "pointer states close to energy eigenstates of the system";
  } else {
    rep.regime = Regime::Intermediate;
    rep.prediction = "pointer states compromise between both eigenbases";
  }
  return rep;
}

NearDegenerateEigen near_degenerate_eigenvectors(double delta, Complex omega) {
  NearDegenerateEigen out;
  const double r = std::hypot(delta, std::abs(omega));
  out.eigenvalues[0] = 0.5 + r;
  out.eigenvalues[1] = 1.0 - out.eigenvalues[0];
  out.positive = out.eigenvalues[1] >= 0.0;
  CVector up(2);
  if (r == 0.0) {
    up << 1.0, 0.0;
  } else if (delta >= 0.0) {
    up << delta + r, omega;
  } else {
    up << std::conj(omega), r - delta;
  }
  up /= up.norm();
  CVector dn(2);
  dn << -std::conj(up(1)), std::conj(up(0));
  out.eigenvectors = {up, dn};
  return out;
}

double angular_distance(const CVector& u, const CVector& v) {
  const double c = std::abs(u.dot(v)) / (u.norm() * v.norm());
  return std::acos(std::min(1.0, c));
}

std::vector<double> principal_angles(const CMatrix& a, const CMatrix& b) {
  const CMatrix qa = Eigen::HouseholderQR<CMatrix>(a).householderQ() * CMatrix::Identity(a.rows(), a.cols());
  const CMatrix qb = Eigen::HouseholderQR<CMatrix>(b).householderQ() * CMatrix::Identity(b.rows(), b.cols());
  Eigen::JacobiSVD<CMatrix> svd(qa.adjoint() * qb);
  std::vector<double> out;
  for (Eigen::Index i = 0; i < svd.singularValues().size(); ++i) out.push_back(std::acos(std::min(1.0, svd.singularValues()(i))));
  return out;
}

std::vector<SchmidtPointerRow> schmidt_vs_pointer(const InteractionSpec& spec, const PureState& env_state,
                                                  const PureState& system_state, double t,
                                                  const std::vector<CVector>& pointer_candidates) {
  spec.validate();
  if (pointer_candidates.empty()) throw Error(ErrorCode::InvalidArgument, "no pointer candidates");
  const HamiltonianSpectrum spectrum(spec.total());
  const PureState psi0 = tensor(system_state, env_state);
  if (!(psi0.layout() == spec.layout())) throw Error(ErrorCode::LayoutMismatch, "state layout " + psi0.layout().to_string());
  std::vector<SchmidtPointerRow> rows;
  for (double time : {0.0, 0.5 * t, t}) {
    const auto rho = reduce(evolve(psi0, spectrum, time), spec.system_layout.labels());
    Eigen::SelfAdjointEigenSolver<CMatrix> es(rho.matrix());
    SchmidtPointerRow row;
    row.time = time;
    const auto n = es.eigenvalues().size();
    for (Eigen::Index k = n; k-- > 0;) {
      row.eigenvalues.push_back(es.eigenvalues()(k));
      row.schmidt_basis.emplace_back(es.eigenvectors().col(k));
    }
    row.gap = std::numeric_limits<double>::infinity();
    for (std::size_t k = 1; k < row.eigenvalues.size(); ++k) {
      row.gap = std::min(row.gap, row.eigenvalues[k - 1] - row.eigenvalues[k]);
    }
    row.near_degenerate = row.gap < 1e-6;
    row.rank_deficient = row.eigenvalues.back() < 1e-12;
    for (const auto& s : row.schmidt_basis) {
      double best = M_PI / 2;
      for (const auto& c : pointer_candidates) best = std::min(best, angular_distance(s, c));
      row.angles.push_back(best);
      row.max_angle = std::max(row.max_angle, best);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

InteractionSpec spin_bath_spec(const SpinBathParams& p) {
  auto h = interaction_hamiltonian(p);
  const auto layout = h.layout();
  std::vector<Factor> env(layout.factors().begin() + 1, layout.factors().end());
  const SpaceLayout sys{{"S", 2}};
  return InteractionSpec{sys, SpaceLayout(env), Observable::zero(sys), std::move(h)};
}

PureState spin_bath_environment(const SpinBathParams& p) {
  p.validate();
  std::vector<PureState> spins;
  for (std::size_t k = 0; k < p.n_env(); ++k) {
    CVector v(2);
    v << p.env_amps[k].first, p.env_amps[k].second;
    spins.emplace_back(SpaceLayout{{"E" + std::to_string(k + 1), 2}}, v);
  }
  return tensor(spins);
}

}  // namespace declab
