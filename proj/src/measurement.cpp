#include "declab/measurement.hpp"

#include <cmath>

#include <yaml-cpp/yaml.h>

#include "declab/textio.hpp"

namespace declab {

namespace {

constexpr std::size_t kDenseGuard = 4096;

[[noreturn]] void bad_setup(const std::string& field, const std::string& what) {
  throw Error(ErrorCode::InvalidSetup, field + ": " + what);
}

void check_vector(const CVector& v, std::size_t dim, const std::string& field) {
  if (static_cast<std::size_t>(v.size()) != dim) {
    bad_setup(field, "length " + std::to_string(v.size()) + ", expected " + std::to_string(dim));
  }
  if (std::abs(v.norm() - 1.0) > kIdentityTol) bad_setup(field, "not unit norm");
}

void check_basis(const std::vector<CVector>& vs, std::size_t dim, const std::string& field) {
  for (std::size_t i = 0; i < vs.size(); ++i) check_vector(vs[i], dim, field + "[" + std::to_string(i) + "]");
  if (orthonormality_residual(vs) > kIdentityTol) bad_setup(field, "not orthonormal");
}

// Unitary whose first column is v; remaining columns complete it from the
// canonical basis in order.
CMatrix completion(const CVector& v) {
  const auto n = v.size();
  CMatrix q(n, n);
  q.col(0) = v / v.norm();
  Eigen::Index filled = 1;
  for (Eigen::Index k = 0; k < n && filled < n; ++k) {
    CVector w = CVector::Unit(n, k);
    for (int pass = 0; pass < 2; ++pass) w -= q.leftCols(filled) * (q.leftCols(filled).adjoint() * w);
    const double norm = w.norm();
    if (norm > 1e-8) q.col(filled++) = w / norm;
  }
  return q;
}

// sum_n P_n (x) (B_n B_ref^dagger) + (I - sum P_n) (x) I
CMatrix controlled_map(const std::vector<CVector>& control, const CVector& ref, const std::vector<CVector>& targets) {
  const auto dc = control.front().size();
  const auto dt = ref.size();
  const CMatrix bref = completion(ref);
  CMatrix perp = CMatrix::Identity(dc, dc);
  CMatrix out = CMatrix::Zero(dc * dt, dc * dt);
  for (std::size_t n = 0; n < control.size(); ++n) {
    const CMatrix p = control[n] * control[n].adjoint();
    perp -= p;
    out += kron(p, CMatrix(completion(targets[n]) * bref.adjoint()));
  }
  out += kron(perp, CMatrix::Identity(dt, dt));
  return out;
}

CVector read_vector(const std::filesystem::path& base, const YAML::Node& node, const std::string& field, SpaceLayout* layout) {
  if (!node || !node.IsScalar()) bad_setup(field, "expected a file name");
  const auto t = read_text_file(base / node.as<std::string>());
  if (!t.is_vector()) bad_setup(field, "file does not hold a vector");
  if (layout->num_factors() == 0) {
    *layout = t.layout;
  } else if (!(t.layout == *layout)) {
    bad_setup(field, "layout " + t.layout.to_string() + " differs from " + layout->to_string());
  }
  return t.as_vector();
}

std::vector<CVector> read_vectors(const std::filesystem::path& base, const YAML::Node& node, const std::string& field,
                                  SpaceLayout* layout) {
  if (!node || !node.IsSequence()) bad_setup(field, "expected a list of file names");
  std::vector<CVector> out;
  for (std::size_t i = 0; i < node.size(); ++i) out.push_back(read_vector(base, node[i], field, layout));
  return out;
}

}  // namespace

SpaceLayout MeasurementSetup::joint_layout() const {
  auto sa = system_layout.concat(apparatus_layout);
  return has_environment() ? sa.concat(environment_layout) : sa;
}

void MeasurementSetup::validate() const {
  const auto ds = system_layout.dim();
  const auto da = apparatus_layout.dim();
  if (system_basis.empty()) bad_setup("system_basis", "empty");
  if (system_basis.size() > ds) bad_setup("system_basis", "more vectors than the system dimension");
  check_basis(system_basis, ds, "system_basis");
  check_vector(ready_state, da, "ready_state");
  if (pointer_states.size() != system_basis.size()) bad_setup("pointer_states", "count differs from system_basis");
  check_basis(pointer_states, da, "pointer_states");
  if (has_environment()) {
    const auto de = environment_layout.dim();
    check_vector(*environment_ready, de, "environment_ready");
    if (environment_records.size() != system_basis.size()) bad_setup("environment_records", "count differs from system_basis");
    for (std::size_t i = 0; i < environment_records.size(); ++i) {
      check_vector(environment_records[i], de, "environment_records[" + std::to_string(i) + "]");
    }
  } else if (!environment_records.empty()) {
    bad_setup("environment_ready", "records given without a ready state");
  }
  try {
    (void)joint_layout();
  } catch (const Error& e) {
    bad_setup("layouts", e.what());
  }
}

MeasurementSetup MeasurementSetup::computational(std::size_t outcomes, bool with_environment) {
  if (outcomes < 2) throw Error(ErrorCode::InvalidArgument, "need at least two outcomes");
  MeasurementSetup s;
  s.system_layout = SpaceLayout{{"S", outcomes}};
  s.apparatus_layout = SpaceLayout{{"A", outcomes}};
  s.environment_layout = SpaceLayout{{"E", outcomes}};
  const auto n = static_cast<Eigen::Index>(outcomes);
  for (Eigen::Index k = 0; k < n; ++k) {
    s.system_basis.push_back(CVector::Unit(n, k));
    s.pointer_states.push_back(CVector::Unit(n, k));
  }
  s.ready_state = CVector::Unit(n, 0);
  if (with_environment) {
    s.environment_ready = CVector::Unit(n, 0);
    for (Eigen::Index k = 0; k < n; ++k) s.environment_records.push_back(CVector::Unit(n, k));
  }
  return s;
}

CMatrix premeasurement_unitary(const MeasurementSetup& setup) {
  setup.validate();
  if (setup.system_layout.dim() * setup.apparatus_layout.dim() > kDenseGuard) {
    throw Error(ErrorCode::SizeGuard, "system-apparatus dimension above " + std::to_string(kDenseGuard));
  }
  return controlled_map(setup.system_basis, setup.ready_state, setup.pointer_states);
}

CMatrix record_unitary(const MeasurementSetup& setup) {
  setup.validate();
  if (!setup.has_environment()) bad_setup("environment_ready", "missing");
  if (setup.apparatus_layout.dim() * setup.environment_layout.dim() > kDenseGuard) {
    throw Error(ErrorCode::SizeGuard, "apparatus-environment dimension above " + std::to_string(kDenseGuard));
  }
  return controlled_map(setup.pointer_states, *setup.environment_ready, setup.environment_records);
}

PureState premeasure(const PureState& system, const MeasurementSetup& setup) {
  if (!(system.layout() == setup.system_layout)) {
    throw Error(ErrorCode::LayoutMismatch, system.layout().to_string() + " vs setup system " + setup.system_layout.to_string());
  }
  const CMatrix w = premeasurement_unitary(setup);
  CVector in_span = CVector::Zero(system.amplitudes().size());
  for (const auto& s : setup.system_basis) in_span += s * s.dot(system.amplitudes());
  if ((in_span - system.amplitudes()).norm() > kIdentityTol) {
    bad_setup("system_basis", "input state has weight outside the span of the basis");
  }
  const CVector joint = kron(system.amplitudes(), setup.ready_state);
  return PureState::normalized(setup.system_layout.concat(setup.apparatus_layout), w * joint);
}

PureState chain(const PureState& system, const MeasurementSetup& setup) {
  if (!setup.has_environment()) bad_setup("environment_ready", "missing");
  const CMatrix u = record_unitary(setup);
  const auto sa = premeasure(system, setup);
  const CVector joint = kron(sa.amplitudes(), *setup.environment_ready);
  // I_S (x) U on row-major (s, ae) blocks
  const auto ds = static_cast<Eigen::Index>(setup.system_layout.dim());
  const auto dae = u.rows();
  using RowMat = Eigen::Matrix<Complex, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const Eigen::Map<const RowMat> x(joint.data(), ds, dae);
  RowMat y = x * u.transpose();
  const CVector out = Eigen::Map<const CVector>(y.data(), ds * dae);
  return PureState::normalized(setup.joint_layout(), out);
}

CVector RebasisResult::reconstruct() const {
  CVector out = CVector::Zero(static_cast<Eigen::Index>(left_layout.dim() * right_layout.dim()));
  for (std::size_t n = 0; n < basis.size(); ++n) {
    if (coefficients[n] > 0.0) out += coefficients[n] * kron(basis[n], partners[n]);
  }
  return out;
}

RebasisResult rebasis(const PureState& psi, const LabelSet& left, const LabelSet& right,
                      const std::vector<CVector>& new_left_basis, double orth_tol) {
  const auto sd = schmidt(psi, left, right);  // validates the bipartition
  const auto dl = sd.left_layout.dim();
  if (new_left_basis.size() != dl) {
    throw Error(ErrorCode::InvalidBasis, "basis has " + std::to_string(new_left_basis.size()) + " vectors, side dimension is " +
                                             std::to_string(dl));
  }
  for (const auto& v : new_left_basis) {
    if (static_cast<std::size_t>(v.size()) != dl) throw Error(ErrorCode::InvalidBasis, "basis vector length mismatch");
  }
  if (orthonormality_residual(new_left_basis) > kIdentityTol) throw Error(ErrorCode::InvalidBasis, "basis not orthonormal");

  const auto split = split_indices(psi.layout(), left);
  CMatrix m = CMatrix::Zero(static_cast<Eigen::Index>(split.inner_dim), static_cast<Eigen::Index>(split.outer_dim));
  for (std::size_t i = 0; i < psi.dim(); ++i) {
    m(static_cast<Eigen::Index>(split.inner[i]), static_cast<Eigen::Index>(split.outer[i])) =
        psi.amplitudes()(static_cast<Eigen::Index>(i));
  }

  RebasisResult r;
  r.left_layout = sd.left_layout;
  r.right_layout = sd.right_layout;
  r.basis = new_left_basis;
  for (const auto& s : new_left_basis) {
    const CVector p = m.transpose() * s.conjugate();
    const double c = p.norm();
    r.coefficients.push_back(c);
    r.partners.push_back(c > kConstructionTol ? CVector(p / c) : CVector(CVector::Zero(p.size())));
  }
  for (std::size_t a = 0; a < dl; ++a)
    for (std::size_t b = a + 1; b < dl; ++b) {
      if (r.coefficients[a] <= kConstructionTol || r.coefficients[b] <= kConstructionTol) continue;
      r.max_partner_overlap = std::max(r.max_partner_overlap, std::abs(r.partners[a].dot(r.partners[b])));
    }
  r.partners_orthogonal = r.max_partner_overlap < orth_tol;

  r.schmidt_unique = true;
  for (std::size_t i = 1; i < sd.rank(); ++i) {
    if (sd.coefficients[i - 1] - sd.coefficients[i] < 1e-8) r.schmidt_unique = false;
  }

  CVector target(static_cast<Eigen::Index>(psi.dim()));
  for (std::size_t i = 0; i < psi.dim(); ++i) {
    target(static_cast<Eigen::Index>(split.inner[i] * split.outer_dim + split.outer[i])) = psi.amplitudes()(static_cast<Eigen::Index>(i));
  }
  r.reconstruction_error = (r.reconstruct() - target).norm();
  return r;
}

MeasurementSetup load_measurement_setup(const std::filesystem::path& manifest) {
  YAML::Node root;
  try {
    root = YAML::LoadFile(manifest.string());
  } catch (const YAML::BadFile&) {
    throw Error(ErrorCode::NotFound, "cannot open " + manifest.string());
  } catch (const YAML::Exception& e) {
    throw Error(ErrorCode::ParseError, manifest.string() + ": " + e.what());
  }
  const auto base = manifest.parent_path();
  MeasurementSetup s;
  s.system_layout = SpaceLayout();
  s.apparatus_layout = SpaceLayout();
  s.environment_layout = SpaceLayout();
  s.system_basis = read_vectors(base, root["system_basis"], "system_basis", &s.system_layout);
  s.ready_state = read_vector(base, root["ready_state"], "ready_state", &s.apparatus_layout);
  s.pointer_states = read_vectors(base, root["pointer_states"], "pointer_states", &s.apparatus_layout);
  if (root["environment_ready"]) {
    s.environment_ready = read_vector(base, root["environment_ready"], "environment_ready", &s.environment_layout);
    s.environment_records = read_vectors(base, root["environment_records"], "environment_records", &s.environment_layout);
  }
  s.validate();
  return s;
}

}  // namespace declab
