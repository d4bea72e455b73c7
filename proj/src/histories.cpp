#include "declab/histories.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "declab/parallel.hpp"

namespace declab {

namespace {

constexpr double kTimeTol = 1e-12;
constexpr double kCommutatorTol = 1e-8;

struct Spectral {
  std::vector<CMatrix> projectors;
  std::vector<double> eigenvalues;  // group means, descending
  bool degenerate = false;
};

Spectral spectral_groups(const CMatrix& hermitian, double gap) {
  Eigen::SelfAdjointEigenSolver<CMatrix> es(0.5 * (hermitian + hermitian.adjoint()));
  const auto& ev = es.eigenvalues();
  const auto& vec = es.eigenvectors();
  Spectral out;
  Eigen::Index k = ev.size() - 1;
  while (k >= 0) {
    Eigen::Index lo = k;
    while (lo > 0 && ev(lo) - ev(lo - 1) < gap) --lo;
    CMatrix p = CMatrix::Zero(hermitian.rows(), hermitian.cols());
    double mean = 0.0;
    for (Eigen::Index j = lo; j <= k; ++j) {
      p += vec.col(j) * vec.col(j).adjoint();
      mean += ev(j);
    }
    mean /= static_cast<double>(k - lo + 1);
    if (k > lo && mean > gap) out.degenerate = true;
    out.projectors.push_back(std::move(p));
    out.eigenvalues.push_back(mean);
    k = lo - 1;
  }
  return out;
}

CMatrix lift(const SpaceLayout& local, const CMatrix& op, const SpaceLayout& target) {
  if (local == target) return op;
  return embed(local, op, target);
}

// Lifted projectors per family.
std::vector<std::vector<CMatrix>> lift_families(const HistorySet& set, const SpaceLayout& target) {
  std::vector<std::vector<CMatrix>> out;
  for (const auto& f : set.families) {
    std::vector<CMatrix> ps;
    for (const auto& p : f.projectors) ps.push_back(lift(f.layout, p, target));
    out.push_back(std::move(ps));
  }
  return out;
}

void check_grid(const std::vector<double>& a, const std::vector<double>& b) {
  bool ok = a.size() == b.size();
  for (std::size_t i = 0; ok && i < a.size(); ++i) ok = std::abs(a[i] - b[i]) <= kTimeTol;
  if (!ok) throw Error(ErrorCode::GridMismatch, "history times differ from the propagation grid");
}

double hausdorff(const std::vector<const CMatrix*>& a, const std::vector<const CMatrix*>& b) {
  auto directed = [](const auto& x, const auto& y) {
    double worst = 0.0;
    for (const CMatrix* p : x) {
      double best = std::numeric_limits<double>::infinity();
      for (const CMatrix* q : y) best = std::min(best, (*p - *q).norm());
      worst = std::max(worst, best);
    }
    return worst;
  };
  return std::max(directed(a, b), directed(b, a));
}

}  // namespace

// ---------------------------------------------------------------------------
// Families

ProjectorFamily ProjectorFamily::computational(double time, SpaceLayout layout) {
  ProjectorFamily f{time, std::move(layout), {}};
  const auto d = static_cast<Eigen::Index>(f.layout.dim());
  for (Eigen::Index i = 0; i < d; ++i) {
    CMatrix p = CMatrix::Zero(d, d);
    p(i, i) = 1.0;
    f.projectors.push_back(std::move(p));
  }
  return f;
}

ProjectorFamily ProjectorFamily::spectral(double time, SpaceLayout layout, const CMatrix& hermitian, double gap) {
  if (static_cast<std::size_t>(hermitian.rows()) != layout.dim() || hermitian.rows() != hermitian.cols()) {
    throw Error(ErrorCode::LayoutMismatch, "matrix does not match " + layout.to_string());
  }
  return ProjectorFamily{time, std::move(layout), spectral_groups(hermitian, gap).projectors};
}

FamilyDiagnostics validate_family(const ProjectorFamily& family, double tol) {
  FamilyDiagnostics diag;
  const auto d = static_cast<Eigen::Index>(family.layout.dim());
  CMatrix sum = CMatrix::Zero(d, d);
  bool shapes = !family.projectors.empty();
  for (const auto& p : family.projectors) {
    if (p.rows() != d || p.cols() != d) {
      shapes = false;
      continue;
    }
    sum += p;
    diag.hermiticity = std::max(diag.hermiticity, hermiticity_residual(p));
    diag.idempotence = std::max(diag.idempotence, (p * p - p).cwiseAbs().maxCoeff());
  }
  if (!shapes) {
    diag.completeness = std::numeric_limits<double>::infinity();
    return diag;
  }
  diag.completeness = (sum - CMatrix::Identity(d, d)).cwiseAbs().maxCoeff();
  for (std::size_t a = 0; a < family.size(); ++a) {
    for (std::size_t b = a + 1; b < family.size(); ++b) {
      const double r = (family.projectors[a] * family.projectors[b]).cwiseAbs().maxCoeff();
      diag.orthogonality.push_back(r);
      diag.max_orthogonality = std::max(diag.max_orthogonality, r);
    }
  }
  diag.passed = diag.completeness < tol && diag.hermiticity < tol && diag.idempotence < tol && diag.max_orthogonality < tol;
  return diag;
}

// ---------------------------------------------------------------------------
// Histories

std::string History::label() const {
  std::string s;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(steps[i].family) + ':' + std::to_string(steps[i].projector);
  }
  return s;
}

std::vector<double> HistorySet::times() const {
  if (histories.empty()) throw Error(ErrorCode::InvalidArgument, "empty history set");
  for (std::size_t f = 0; f < families.size(); ++f) {
    if (families[f].size() > kMaxFamilySize) {
      throw Error(ErrorCode::SizeGuard, "family " + std::to_string(f) + " has more than " + std::to_string(kMaxFamilySize) + " projectors");
    }
    const auto diag = validate_family(families[f]);
    if (!diag.passed) throw Error(ErrorCode::InvalidProjector, "family " + std::to_string(f) + " is not a complete orthogonal family");
  }
  std::vector<double> grid;
  for (std::size_t h = 0; h < histories.size(); ++h) {
    const auto& steps = histories[h].steps;
    if (steps.empty()) throw Error(ErrorCode::InvalidArgument, "history " + std::to_string(h) + " has no steps");
    if (steps.size() > kMaxHistoryTimes) {
      throw Error(ErrorCode::SizeGuard, "more than " + std::to_string(kMaxHistoryTimes) + " time points");
    }
    std::vector<double> t;
    for (const auto& s : steps) {
      if (s.family >= families.size() || s.projector >= families[s.family].size()) {
        throw Error(ErrorCode::InvalidArgument, "history " + std::to_string(h) + " refers to a missing projector");
      }
      t.push_back(families[s.family].time);
      if (t.size() > 1 && !(t.back() > t[t.size() - 2])) {
        throw Error(ErrorCode::InvalidArgument, "history " + std::to_string(h) + " times not strictly increasing");
      }
    }
    if (h == 0) {
      grid = std::move(t);
      continue;
    }
    bool same = t.size() == grid.size();
    for (std::size_t i = 0; same && i < t.size(); ++i) same = std::abs(t[i] - grid[i]) <= kTimeTol;
    if (!same) throw Error(ErrorCode::GridMismatch, "history " + std::to_string(h) + " uses a different time grid");
  }
  return grid;
}

HistorySet fine_grained_histories(std::vector<ProjectorFamily> families) {
  if (families.empty()) throw Error(ErrorCode::InvalidArgument, "no families");
  if (families.size() > kMaxHistoryTimes) throw Error(ErrorCode::SizeGuard, "more than " + std::to_string(kMaxHistoryTimes) + " time points");
  for (const auto& f : families) {
    if (f.size() > kMaxFamilySize) throw Error(ErrorCode::SizeGuard, "family with more than " + std::to_string(kMaxFamilySize) + " projectors");
    if (f.size() == 0) throw Error(ErrorCode::InvalidArgument, "empty family");
  }
  HistorySet set;
  set.families = std::move(families);
  std::vector<std::size_t> idx(set.families.size(), 0);
  while (true) {
    History h;
    for (std::size_t i = 0; i < idx.size(); ++i) h.steps.push_back({i, idx[i]});
    set.histories.push_back(std::move(h));
    std::size_t i = idx.size();
    while (i-- > 0) {
      if (++idx[i] < set.families[i].size()) break;
      idx[i] = 0;
    }
    if (i == std::numeric_limits<std::size_t>::max()) break;
  }
  set.times();
  return set;
}

Propagation Propagation::from_hamiltonian(const HamiltonianSpectrum& h, double t0, std::vector<double> times) {
  Propagation p;
  p.t0 = t0;
  double prev = t0;
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (i == 0 ? times[i] < t0 : !(times[i] > prev)) {
      throw Error(ErrorCode::InvalidArgument, "grid times must start at or after t0 and increase");
    }
    p.steps.push_back(h.propagator(times[i] - prev));
    prev = times[i];
  }
  p.times = std::move(times);
  return p;
}

CMatrix Propagation::cumulative(std::size_t i) const {
  CMatrix u = steps.at(0);
  for (std::size_t k = 1; k <= i; ++k) u = steps.at(k) * u;
  return u;
}

std::size_t DecoherenceFunctional::index_of(const History& h) const {
  const auto it = std::find(histories.begin(), histories.end(), h);
  if (it == histories.end()) throw Error(ErrorCode::NotFound, "history " + h.label() + " not in the functional");
  return static_cast<std::size_t>(it - histories.begin());
}

CMatrix class_operator(const HistorySet& set, const History& h, const Propagation& propagation, const SpaceLayout& layout) {
  const auto d = static_cast<Eigen::Index>(layout.dim());
  CMatrix k = CMatrix::Identity(d, d);
  for (std::size_t i = 0; i < h.steps.size(); ++i) {
    const auto& f = set.families.at(h.steps[i].family);
    k = lift(f.layout, f.projectors.at(h.steps[i].projector), layout) * (propagation.steps.at(i) * k);
  }
  return k;
}

DecoherenceFunctional decoherence_functional(const HistorySet& set, const DensityOperator& rho0,
                                             const Propagation& propagation, Picture picture, std::size_t workers) {
  check_grid(set.times(), propagation.times);
  const auto& layout = rho0.layout();
  const auto d = static_cast<Eigen::Index>(layout.dim());
  for (const auto& u : propagation.steps) {
    if (u.rows() != d) throw Error(ErrorCode::LayoutMismatch, "propagator dimension differs from the state");
  }
  auto lifted = lift_families(set, layout);
  if (picture == Picture::Heisenberg) {
    // families are tied to their time slot through the histories
    std::vector<std::size_t> slot(set.families.size(), 0);
    for (const auto& h : set.histories)
      for (std::size_t i = 0; i < h.steps.size(); ++i) slot[h.steps[i].family] = i;
    std::vector<CMatrix> w;
    for (std::size_t i = 0; i < propagation.steps.size(); ++i) w.push_back(propagation.cumulative(i));
    for (std::size_t f = 0; f < lifted.size(); ++f)
      for (auto& p : lifted[f]) p = w[slot[f]].adjoint() * p * w[slot[f]];
  }

  const auto n = set.histories.size();
  std::vector<CMatrix> k(n), krho(n);
  parallel_for(n, workers, [&](std::size_t a) {
    CMatrix c = CMatrix::Identity(d, d);
    const auto& h = set.histories[a];
    for (std::size_t i = 0; i < h.steps.size(); ++i) {
      const CMatrix& p = lifted[h.steps[i].family][h.steps[i].projector];
      c = picture == Picture::Schroedinger ? CMatrix(p * (propagation.steps[i] * c)) : CMatrix(p * c);
    }
    krho[a] = c * rho0.matrix();
    k[a] = std::move(c);
  });

  DecoherenceFunctional out;
  out.histories = set.histories;
  out.values = CMatrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  parallel_for(n, workers, [&](std::size_t a) {
    for (std::size_t b = 0; b < n; ++b) {
      // Tr[A B^dagger] = sum_ij A_ij conj(B_ij)
      out.values(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = (krho[a].array() * k[b].array().conjugate()).sum();
    }
  });
  return out;
}

double probability(const History& h, const DecoherenceFunctional& d) {
  const auto i = static_cast<Eigen::Index>(d.index_of(h));
  return d.values(i, i).real();
}

// ---------------------------------------------------------------------------
// Consistency and coarse-graining

std::string to_string(ConsistencyMode m) { return m == ConsistencyMode::Weak ? "weak" : "medium"; }

ConsistencyReport check_consistency(const DecoherenceFunctional& d, ConsistencyMode mode, double tol) {
  ConsistencyReport rep;
  rep.mode = mode;
  rep.tol = tol;
  for (Eigen::Index a = 0; a < d.values.rows(); ++a) {
    for (Eigen::Index b = 0; b < d.values.cols(); ++b) {
      if (a == b) continue;
      const Complex v = d.values(a, b);
      const double m = mode == ConsistencyMode::Weak ? std::abs(v.real()) : std::abs(v);
      if (m > rep.max_violation) {
        rep.max_violation = m;
        rep.worst_a = static_cast<std::size_t>(a);
        rep.worst_b = static_cast<std::size_t>(b);
      }
    }
  }
  rep.passed = rep.max_violation < tol;
  return rep;
}

CoarseGrained combine(const DecoherenceFunctional& d, const std::vector<std::size_t>& members) {
  const auto n = static_cast<std::size_t>(d.values.rows());
  std::set<std::size_t> seen;
  for (auto m : members) {
    if (m >= n || !seen.insert(m).second) throw Error(ErrorCode::InvalidArgument, "members must be distinct history indices");
  }
  CoarseGrained c;
  c.members = members;
  Complex total(0.0);
  for (auto a : members) {
    c.member_sum += d.values(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(a)).real();
    for (auto b : members) total += d.values(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
  }
  c.probability = total.real();
  c.violation = c.probability - c.member_sum;
  return c;
}

std::vector<CoarseGrainedHistory> coarse_grain(const DecoherenceFunctional& d,
                                               const std::vector<std::vector<std::vector<std::size_t>>>& partition) {
  if (d.histories.empty()) throw Error(ErrorCode::InvalidArgument, "empty functional");
  const auto steps = d.histories.front().steps.size();
  if (partition.size() != steps) {
    throw Error(ErrorCode::BadGrouping, std::to_string(partition.size()) + " partitions for " + std::to_string(steps) + " times");
  }
  // cell_of[i][projector index]
  std::vector<std::vector<std::size_t>> cell_of(steps);
  for (std::size_t i = 0; i < steps; ++i) {
    std::size_t top = 0;
    for (const auto& cell : partition[i])
      for (auto p : cell) top = std::max(top, p + 1);
    cell_of[i].assign(top, std::numeric_limits<std::size_t>::max());
    for (std::size_t c = 0; c < partition[i].size(); ++c) {
      if (partition[i][c].empty()) throw Error(ErrorCode::BadGrouping, "empty cell at time " + std::to_string(i));
      for (auto p : partition[i][c]) {
        if (cell_of[i][p] != std::numeric_limits<std::size_t>::max()) {
          throw Error(ErrorCode::BadGrouping, "projector " + std::to_string(p) + " in two cells at time " + std::to_string(i));
        }
        cell_of[i][p] = c;
      }
    }
  }
  std::vector<std::vector<std::size_t>> cells_of_history;
  for (const auto& h : d.histories) {
    std::vector<std::size_t> cells;
    for (std::size_t i = 0; i < steps; ++i) {
      const auto p = h.steps.at(i).projector;
      if (p >= cell_of[i].size() || cell_of[i][p] == std::numeric_limits<std::size_t>::max()) {
        throw Error(ErrorCode::BadGrouping, "projector " + std::to_string(p) + " at time " + std::to_string(i) + " not covered");
      }
      cells.push_back(cell_of[i][p]);
    }
    cells_of_history.push_back(std::move(cells));
  }

  std::vector<CoarseGrainedHistory> out;
  std::vector<std::size_t> idx(steps, 0);
  while (true) {
    std::vector<std::size_t> members;
    for (std::size_t a = 0; a < cells_of_history.size(); ++a)
      if (cells_of_history[a] == idx) members.push_back(a);
    if (!members.empty()) out.push_back({idx, combine(d, members)});
    std::size_t i = steps;
    while (i-- > 0) {
      if (++idx[i] < partition[i].size()) break;
      idx[i] = 0;
    }
    if (i == std::numeric_limits<std::size_t>::max()) break;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Schmidt projectors

SchmidtHistories schmidt_history_projectors(const PureState& psi0, const LabelSet& system, const HamiltonianSpectrum& h,
                                            double t0, const std::vector<double>& times, double gap, double prune) {
  const auto& full = psi0.layout();
  if (!(full == h.layout())) throw Error(ErrorCode::LayoutMismatch, "state and Hamiltonian layouts differ");
  if (times.empty() || times.size() > kMaxHistoryTimes) {
    throw Error(ErrorCode::SizeGuard, "need 1 to " + std::to_string(kMaxHistoryTimes) + " grid times");
  }
  const auto propagation = Propagation::from_hamiltonian(h, t0, times);

  SchmidtHistories out;
  out.system_layout = full.restrict_to(system);
  out.times = times;
  if (out.system_layout.dim() > kMaxFamilySize) {
    throw Error(ErrorCode::SizeGuard, "system dimension above " + std::to_string(kMaxFamilySize));
  }

  struct Node {
    std::vector<std::size_t> prefix;
    std::vector<HistoryStep> steps;
    CVector state;
  };
  std::vector<Node> frontier{{{}, {}, psi0.amplitudes()}};
  for (std::size_t i = 0; i < times.size(); ++i) {
    std::vector<Node> next;
    for (auto& node : frontier) {
      const CVector v = propagation.steps[i] * node.state;
      const double w = v.squaredNorm();
      const CMatrix rho = partial_trace(full, CMatrix(v * v.adjoint()), system) / w;
      auto groups = spectral_groups(rho, gap);

      SchmidtBranch br;
      br.prefix = node.prefix;
      br.time = times[i];
      br.weight = w;
      br.eigenvalues = groups.eigenvalues;
      br.degenerate = groups.degenerate;
      for (const auto& p : groups.projectors) br.commutator = std::max(br.commutator, (p * rho - rho * p).norm());
      br.family = out.set.families.size();
      out.max_commutator = std::max(out.max_commutator, br.commutator);

      for (std::size_t k = 0; k < groups.projectors.size(); ++k) {
        CVector child = embed(out.system_layout, groups.projectors[k], full) * v;
        auto steps = node.steps;
        steps.push_back({br.family, k});
        if (i + 1 == times.size()) {
          out.set.histories.push_back(History{std::move(steps), true});
          continue;
        }
        if (child.squaredNorm() <= prune) continue;
        auto prefix = node.prefix;
        prefix.push_back(k);
        next.push_back({std::move(prefix), std::move(steps), std::move(child)});
      }
      out.set.families.push_back(ProjectorFamily{times[i], out.system_layout, std::move(groups.projectors)});
      out.branches.push_back(std::move(br));
    }
    frontier = std::move(next);
  }
  out.commutator_ok = out.max_commutator < kCommutatorTol;
  return out;
}

InstabilityReport projector_instability(const SchmidtHistories& a, const SchmidtHistories& b) {
  InstabilityReport rep;
  auto collect = [](const SchmidtHistories& s, double t) {
    std::vector<const CMatrix*> ps;
    for (const auto& br : s.branches)
      if (std::abs(br.time - t) <= kTimeTol)
        for (const auto& p : s.set.families[br.family].projectors) ps.push_back(&p);
    return ps;
  };
  for (double t : a.times) {
    const bool shared = std::any_of(b.times.begin(), b.times.end(), [t](double u) { return std::abs(u - t) <= kTimeTol; });
    if (!shared) continue;
    rep.common_times.push_back(t);
    rep.distances.push_back(hausdorff(collect(a, t), collect(b, t)));
    rep.max_distance = std::max(rep.max_distance, rep.distances.back());
  }
  return rep;
}

ReducedComparison reduced_functional_discrepancy(const HistorySet& system_set, const DensityOperator& rho_system,
                                                 const DensityOperator& rho_env, const HamiltonianSpectrum& h, double t0) {
  const auto full = rho_system.layout().concat(rho_env.layout());
  if (!(full == h.layout())) throw Error(ErrorCode::LayoutMismatch, "Hamiltonian is not on system (x) environment");
  for (const auto& f : system_set.families) {
    if (!(f.layout == rho_system.layout())) throw Error(ErrorCode::LayoutMismatch, "families must act on the system layout");
  }
  const auto times = system_set.times();
  const auto propagation = Propagation::from_hamiltonian(h, t0, times);

  ReducedComparison out;
  out.full = decoherence_functional(system_set, tensor(rho_system, rho_env), propagation);
  const auto n = system_set.histories.size();
  out.reduced = CMatrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  const LabelSet keep = rho_system.layout().labels();
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = 0; b < n; ++b) {
      CMatrix x = rho_system.matrix();
      const auto& ha = system_set.histories[a].steps;
      const auto& hb = system_set.histories[b].steps;
      for (std::size_t i = 0; i < times.size(); ++i) {
        const CMatrix& u = propagation.steps[i];
        x = partial_trace(full, CMatrix(u * kron(x, rho_env.matrix()) * u.adjoint()), keep);
        x = system_set.families[ha[i].family].projectors[ha[i].projector] * x *
            system_set.families[hb[i].family].projectors[hb[i].projector].adjoint();
      }
      const auto ia = static_cast<Eigen::Index>(a), ib = static_cast<Eigen::Index>(b);
      out.reduced(ia, ib) = x.trace();
      out.max_discrepancy = std::max(out.max_discrepancy, std::abs(out.reduced(ia, ib) - out.full.values(ia, ib)));
    }
  }
  return out;
}

}  // namespace declab
