#include "declab/hilbert.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <Eigen/SVD>

#include "declab/random.hpp"

namespace declab {

namespace {

constexpr std::size_t kMaxDenseOperatorDim = 4096;
constexpr std::size_t kPositivityCheckDim = 1024;

double max_abs(const CMatrix& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

// Flat index in `to` for every flat index in `from`; both hold the same labels.
std::vector<std::size_t> permutation_map(const SpaceLayout& from, const SpaceLayout& to) {
  const auto& ff = from.factors();
  std::vector<std::size_t> to_stride(ff.size());
  {
    std::vector<std::size_t> strides(to.num_factors());
    std::size_t s = 1;
    for (std::size_t f = to.num_factors(); f-- > 0;) {
      strides[f] = s;
      s *= to.factors()[f].dim;
    }
    for (std::size_t f = 0; f < ff.size(); ++f) to_stride[f] = strides[to.position(ff[f].label)];
  }
  std::vector<std::size_t> map(from.dim());
  std::vector<std::size_t> digit(ff.size(), 0);
  std::size_t target = 0;
  for (std::size_t idx = 0; idx < from.dim(); ++idx) {
    map[idx] = target;
    for (std::size_t f = ff.size(); f-- > 0;) {
      ++digit[f];
      target += to_stride[f];
      if (digit[f] < ff[f].dim) break;
      target -= digit[f] * to_stride[f];
      digit[f] = 0;
    }
  }
  return map;
}

void require_same_labels(const SpaceLayout& a, const SpaceLayout& b) {
  if (a.num_factors() != b.num_factors()) {
    throw Error(ErrorCode::LayoutMismatch, a.to_string() + " vs " + b.to_string());
  }
  for (const auto& f : a.factors()) {
    if (!b.contains(f.label) || b.factors()[b.position(f.label)].dim != f.dim) {
      throw Error(ErrorCode::LayoutMismatch, a.to_string() + " vs " + b.to_string());
    }
  }
}

CMatrix hermitize(const CMatrix& m) { return 0.5 * (m + m.adjoint()); }

CMatrix random_isometry(std::size_t rows, std::size_t cols, RandomStream& rng) {
  CMatrix g(rows, cols);
  for (Eigen::Index i = 0; i < g.rows(); ++i)
    for (Eigen::Index j = 0; j < g.cols(); ++j) g(i, j) = Complex(rng.normal(), rng.normal());
  Eigen::HouseholderQR<CMatrix> qr(g);
  return qr.householderQ() * CMatrix::Identity(rows, cols);
}

CMatrix polar_isometry(const CMatrix& g) {
  Eigen::JacobiSVD<CMatrix> svd(g, Eigen::ComputeThinU | Eigen::ComputeThinV);
  return svd.matrixU() * svd.matrixV().adjoint();
}

}  // namespace

// ---------------------------------------------------------------------------
// SpaceLayout

SpaceLayout::SpaceLayout(std::vector<Factor> factors) : factors_(std::move(factors)) {
  std::set<std::string> seen;
  dim_ = 1;
  for (const auto& f : factors_) {
    if (f.label.empty()) throw Error(ErrorCode::InvalidArgument, "empty factor label");
    if (f.dim == 0) throw Error(ErrorCode::InvalidArgument, "factor '" + f.label + "' has dimension 0");
    if (!seen.insert(f.label).second) throw Error(ErrorCode::LabelCollision, "duplicate label '" + f.label + "'");
    dim_ *= f.dim;
  }
}

SpaceLayout::SpaceLayout(std::initializer_list<Factor> factors) : SpaceLayout(std::vector<Factor>(factors)) {}

SpaceLayout SpaceLayout::qubits(std::size_t n, std::string_view prefix) {
  std::vector<Factor> f;
  f.reserve(n);
  for (std::size_t i = 0; i < n; ++i) f.push_back({std::string(prefix) + std::to_string(i), 2});
  return SpaceLayout(std::move(f));
}

SpaceLayout SpaceLayout::parse(std::string_view text) {
  std::vector<Factor> factors;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find(',', start);
    if (end == std::string_view::npos) end = text.size();
    auto item = text.substr(start, end - start);
    while (!item.empty() && item.front() == ' ') item.remove_prefix(1);
    while (!item.empty() && item.back() == ' ') item.remove_suffix(1);
    if (!item.empty()) {
      const auto colon = item.rfind(':');
      if (colon == std::string_view::npos || colon == 0 || colon + 1 == item.size()) {
        throw Error(ErrorCode::ParseError, "bad layout factor '" + std::string(item) + "'");
      }
      std::size_t dim = 0;
      try {
        dim = std::stoul(std::string(item.substr(colon + 1)));
      } catch (const std::exception&) {
        throw Error(ErrorCode::ParseError, "bad dimension in '" + std::string(item) + "'");
      }
      factors.push_back({std::string(item.substr(0, colon)), dim});
    }
    start = end + 1;
  }
  if (factors.empty()) throw Error(ErrorCode::ParseError, "empty layout");
  return SpaceLayout(std::move(factors));
}

LabelSet SpaceLayout::labels() const {
  LabelSet out;
  out.reserve(factors_.size());
  for (const auto& f : factors_) out.push_back(f.label);
  return out;
}

bool SpaceLayout::contains(std::string_view label) const noexcept {
  return std::any_of(factors_.begin(), factors_.end(), [&](const Factor& f) { return f.label == label; });
}

std::size_t SpaceLayout::position(std::string_view label) const {
  for (std::size_t i = 0; i < factors_.size(); ++i)
    if (factors_[i].label == label) return i;
  throw Error(ErrorCode::LabelNotFound, "label '" + std::string(label) + "' not in " + to_string());
}

SpaceLayout SpaceLayout::restrict_to(const LabelSet& keep) const {
  for (const auto& l : keep) (void)position(l);
  std::vector<Factor> out;
  for (const auto& f : factors_)
    if (std::find(keep.begin(), keep.end(), f.label) != keep.end()) out.push_back(f);
  return SpaceLayout(std::move(out));
}

LabelSet SpaceLayout::complement(const LabelSet& keep) const {
  for (const auto& l : keep) (void)position(l);
  LabelSet out;
  for (const auto& f : factors_)
    if (std::find(keep.begin(), keep.end(), f.label) == keep.end()) out.push_back(f.label);
  return out;
}

SpaceLayout SpaceLayout::concat(const SpaceLayout& other) const {
  std::vector<Factor> f = factors_;
  f.insert(f.end(), other.factors_.begin(), other.factors_.end());
  return SpaceLayout(std::move(f));
}

std::string SpaceLayout::to_string() const {
  std::ostringstream os;
  for (std::size_t i = 0; i < factors_.size(); ++i) {
    if (i) os << ',';
    os << factors_[i].label << ':' << factors_[i].dim;
  }
  return os.str();
}

IndexSplit split_indices(const SpaceLayout& layout, const LabelSet& inner_labels) {
  const auto& ff = layout.factors();
  std::vector<bool> is_inner(ff.size(), false);
  for (const auto& l : inner_labels) {
    const auto p = layout.position(l);
    if (is_inner[p]) throw Error(ErrorCode::InvalidArgument, "label '" + l + "' listed twice");
    is_inner[p] = true;
  }
  std::vector<std::size_t> stride(ff.size());
  IndexSplit split;
  for (std::size_t f = ff.size(); f-- > 0;) {
    if (is_inner[f]) {
      stride[f] = split.inner_dim;
      split.inner_dim *= ff[f].dim;
    } else {
      stride[f] = split.outer_dim;
      split.outer_dim *= ff[f].dim;
    }
  }
  split.inner.resize(layout.dim());
  split.outer.resize(layout.dim());
  std::vector<std::size_t> digit(ff.size(), 0);
  std::size_t in = 0, out = 0;
  for (std::size_t idx = 0; idx < layout.dim(); ++idx) {
    split.inner[idx] = in;
    split.outer[idx] = out;
    for (std::size_t f = ff.size(); f-- > 0;) {
      ++digit[f];
      (is_inner[f] ? in : out) += stride[f];
      if (digit[f] < ff[f].dim) break;
      (is_inner[f] ? in : out) -= digit[f] * stride[f];
      digit[f] = 0;
    }
  }
  return split;
}

// ---------------------------------------------------------------------------
// Value types

PureState::PureState(SpaceLayout layout, CVector amplitudes)
    : layout_(std::move(layout)), amplitudes_(std::move(amplitudes)) {
  if (static_cast<std::size_t>(amplitudes_.size()) != layout_.dim()) {
    throw Error(ErrorCode::LayoutMismatch, "amplitude count " + std::to_string(amplitudes_.size()) +
                                               " != dimension of " + layout_.to_string());
  }
  const double n = amplitudes_.norm();
  if (std::abs(n - 1.0) > kConstructionTol) {
    throw Error(ErrorCode::InvalidArgument, "state norm " + std::to_string(n) + " is not 1");
  }
}

PureState PureState::normalized(SpaceLayout layout, CVector amplitudes) {
  const double n = amplitudes.norm();
  if (!(n > 0.0)) throw Error(ErrorCode::NumericalUnderflow, "cannot normalize a zero vector");
  return PureState(std::move(layout), amplitudes / n);
}

PureState PureState::basis(SpaceLayout layout, std::size_t index) {
  if (index >= layout.dim()) throw Error(ErrorCode::InvalidArgument, "basis index out of range");
  CVector v = CVector::Zero(static_cast<Eigen::Index>(layout.dim()));
  v(static_cast<Eigen::Index>(index)) = 1.0;
  return PureState(std::move(layout), std::move(v));
}

DensityOperator::DensityOperator(SpaceLayout layout, CMatrix matrix)
    : layout_(std::move(layout)), matrix_(std::move(matrix)) {
  const auto d = static_cast<Eigen::Index>(layout_.dim());
  if (layout_.dim() > kMaxDenseOperatorDim) {
    throw Error(ErrorCode::SizeGuard, "dense operator dimension " + std::to_string(layout_.dim()) + " too large");
  }
  if (matrix_.rows() != d || matrix_.cols() != d) {
    throw Error(ErrorCode::LayoutMismatch, "matrix shape does not match " + layout_.to_string());
  }
  if (hermiticity_residual(matrix_) > kConstructionTol) {
    throw Error(ErrorCode::InvalidArgument, "density operator is not Hermitian");
  }
  const double tr = matrix_.trace().real();
  if (std::abs(tr - 1.0) > kConstructionTol) {
    throw Error(ErrorCode::InvalidArgument, "density operator trace " + std::to_string(tr) + " is not 1");
  }
  if (layout_.dim() <= kPositivityCheckDim) {
    CMatrix shifted = hermitize(matrix_);
    shifted.diagonal().array() += kPositivityTol;
    Eigen::LLT<CMatrix> llt(shifted);
    if (llt.info() != Eigen::Success) {
      throw Error(ErrorCode::InvalidArgument, "density operator has a negative eigenvalue");
    }
  }
}

DensityOperator DensityOperator::from_pure(const PureState& psi) {
  const auto& a = psi.amplitudes();
  return DensityOperator(psi.layout(), a * a.adjoint());
}

DensityOperator DensityOperator::maximally_mixed(SpaceLayout layout) {
  const auto d = static_cast<Eigen::Index>(layout.dim());
  return DensityOperator(std::move(layout), CMatrix::Identity(d, d) / static_cast<double>(d));
}

Observable::Observable(SpaceLayout layout, CMatrix matrix) : layout_(std::move(layout)), matrix_(std::move(matrix)) {
  const auto d = static_cast<Eigen::Index>(layout_.dim());
  if (matrix_.rows() != d || matrix_.cols() != d) {
    throw Error(ErrorCode::LayoutMismatch, "matrix shape does not match " + layout_.to_string());
  }
  if (hermiticity_residual(matrix_) > kConstructionTol * std::max(1.0, max_abs(matrix_))) {
    throw Error(ErrorCode::InvalidArgument, "observable is not Hermitian");
  }
}

Observable Observable::zero(SpaceLayout layout) {
  const auto d = static_cast<Eigen::Index>(layout.dim());
  return Observable(std::move(layout), CMatrix::Zero(d, d));
}

Observable Observable::identity(SpaceLayout layout) {
  const auto d = static_cast<Eigen::Index>(layout.dim());
  return Observable(std::move(layout), CMatrix::Identity(d, d));
}

// ---------------------------------------------------------------------------
// Matrix helpers

CMatrix kron(const CMatrix& a, const CMatrix& b) {
  CMatrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

CVector kron(const CVector& a, const CVector& b) {
  CVector out(a.size() * b.size());
  for (Eigen::Index i = 0; i < a.size(); ++i) out.segment(i * b.size(), b.size()) = a(i) * b;
  return out;
}

double hermiticity_residual(const CMatrix& m) {
  if (m.rows() != m.cols()) return std::numeric_limits<double>::infinity();
  return max_abs(m - m.adjoint());
}

double unitarity_residual(const CMatrix& u) {
  if (u.rows() != u.cols()) return std::numeric_limits<double>::infinity();
  return max_abs(u.adjoint() * u - CMatrix::Identity(u.rows(), u.cols()));
}

double orthonormality_residual(std::span<const CVector> vectors) {
  double worst = 0.0;
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    for (std::size_t j = i; j < vectors.size(); ++j) {
      if (vectors[i].size() != vectors[j].size()) return std::numeric_limits<double>::infinity();
      const Complex ip = vectors[i].dot(vectors[j]);
      worst = std::max(worst, std::abs(ip - (i == j ? Complex(1.0) : Complex(0.0))));
    }
  }
  return worst;
}

CMatrix embed(const SpaceLayout& local, const CMatrix& op, const SpaceLayout& target) {
  const auto d = static_cast<Eigen::Index>(local.dim());
  if (op.rows() != d || op.cols() != d) throw Error(ErrorCode::LayoutMismatch, "operator shape vs " + local.to_string());
  const auto labels = local.labels();
  const SpaceLayout ordered = target.restrict_to(labels);
  require_same_labels(local, ordered);
  CMatrix in_order = op;
  if (!(ordered == local)) {
    const auto map = permutation_map(local, ordered);
    for (Eigen::Index i = 0; i < d; ++i)
      for (Eigen::Index j = 0; j < d; ++j)
        in_order(static_cast<Eigen::Index>(map[i]), static_cast<Eigen::Index>(map[j])) = op(i, j);
  }
  const auto split = split_indices(target, labels);
  const auto n = static_cast<Eigen::Index>(target.dim());
  CMatrix out = CMatrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      if (split.outer[i] == split.outer[j])
        out(i, j) = in_order(static_cast<Eigen::Index>(split.inner[i]), static_cast<Eigen::Index>(split.inner[j]));
  return out;
}

Observable embed(const Observable& local, const SpaceLayout& target) {
  return Observable(target, embed(local.layout(), local.matrix(), target));
}

// ---------------------------------------------------------------------------
// Core operations

PureState tensor(std::span<const PureState> states) {
  if (states.empty()) throw Error(ErrorCode::InvalidArgument, "tensor of an empty list");
  SpaceLayout layout = states.front().layout();
  CVector amps = states.front().amplitudes();
  for (std::size_t i = 1; i < states.size(); ++i) {
    layout = layout.concat(states[i].layout());
    amps = kron(amps, states[i].amplitudes());
  }
  return PureState::normalized(std::move(layout), std::move(amps));
}

PureState tensor(const PureState& a, const PureState& b) {
  const std::array<PureState, 2> pair{a, b};
  return tensor(std::span<const PureState>(pair));
}

DensityOperator tensor(const DensityOperator& a, const DensityOperator& b) {
  return DensityOperator(a.layout().concat(b.layout()), kron(a.matrix(), b.matrix()));
}

CMatrix partial_trace(const SpaceLayout& layout, const CMatrix& op, const LabelSet& keep) {
  if (keep.empty()) throw Error(ErrorCode::InvalidArgument, "partial trace must keep at least one factor");
  const auto split = split_indices(layout, keep);
  const auto ni = split.inner_dim, no = split.outer_dim;
  std::vector<std::size_t> full(ni * no);
  for (std::size_t idx = 0; idx < layout.dim(); ++idx) full[split.inner[idx] * no + split.outer[idx]] = idx;
  CMatrix out = CMatrix::Zero(static_cast<Eigen::Index>(ni), static_cast<Eigen::Index>(ni));
  for (std::size_t i = 0; i < ni; ++i) {
    for (std::size_t j = 0; j < ni; ++j) {
      Complex acc = 0.0;
      for (std::size_t o = 0; o < no; ++o)
        acc += op(static_cast<Eigen::Index>(full[i * no + o]), static_cast<Eigen::Index>(full[j * no + o]));
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = acc;
    }
  }
  return out;
}

DensityOperator partial_trace(const DensityOperator& rho, const LabelSet& keep) {
  CMatrix reduced = partial_trace(rho.layout(), rho.matrix(), keep);
  return DensityOperator(rho.layout().restrict_to(keep), hermitize(reduced));
}

DensityOperator reduce(const PureState& psi, const LabelSet& keep) {
  if (keep.empty()) throw Error(ErrorCode::InvalidArgument, "reduction must keep at least one factor");
  const auto split = split_indices(psi.layout(), keep);
  CMatrix m = CMatrix::Zero(static_cast<Eigen::Index>(split.inner_dim), static_cast<Eigen::Index>(split.outer_dim));
  const auto& a = psi.amplitudes();
  for (std::size_t idx = 0; idx < psi.dim(); ++idx)
    m(static_cast<Eigen::Index>(split.inner[idx]), static_cast<Eigen::Index>(split.outer[idx])) = a(static_cast<Eigen::Index>(idx));
  CMatrix rho = m * m.adjoint();
  return DensityOperator(psi.layout().restrict_to(keep), hermitize(rho));
}

double expectation(const DensityOperator& rho, const Observable& obs) {
  if (!(rho.layout() == obs.layout())) {
    throw Error(ErrorCode::LayoutMismatch, rho.layout().to_string() + " vs " + obs.layout().to_string());
  }
  // Tr(rho O) = sum_ij rho_ij O_ji
  const Complex v = (rho.matrix().array() * obs.matrix().transpose().array()).sum();
  return v.real();
}

CVector SchmidtDecomposition::reconstruct() const {
  const auto split = split_indices(layout, left_layout.labels());
  CVector out = CVector::Zero(static_cast<Eigen::Index>(layout.dim()));
  for (std::size_t idx = 0; idx < layout.dim(); ++idx) {
    Complex acc = 0.0;
    for (std::size_t k = 0; k < coefficients.size(); ++k)
      acc += coefficients[k] * left_basis[k](static_cast<Eigen::Index>(split.inner[idx])) *
             right_basis[k](static_cast<Eigen::Index>(split.outer[idx]));
    out(static_cast<Eigen::Index>(idx)) = acc;
  }
  return out;
}

SchmidtDecomposition schmidt(const PureState& psi, const LabelSet& left, const LabelSet& right) {
  const auto& layout = psi.layout();
  if (left.empty() || right.empty()) throw Error(ErrorCode::BadBipartition, "both sides must be nonempty");
  std::set<std::string> all;
  for (const auto& l : left) all.insert(l);
  for (const auto& l : right) {
    if (!all.insert(l).second) throw Error(ErrorCode::BadBipartition, "label '" + l + "' on both sides");
  }
  for (const auto& l : all)
    if (!layout.contains(l)) throw Error(ErrorCode::BadBipartition, "label '" + l + "' not in " + layout.to_string());
  if (all.size() != layout.num_factors()) throw Error(ErrorCode::BadBipartition, "bipartition does not cover every factor");

  const auto split = split_indices(layout, left);
  CMatrix m(static_cast<Eigen::Index>(split.inner_dim), static_cast<Eigen::Index>(split.outer_dim));
  for (std::size_t idx = 0; idx < layout.dim(); ++idx)
    m(static_cast<Eigen::Index>(split.inner[idx]), static_cast<Eigen::Index>(split.outer[idx])) =
        psi.amplitudes()(static_cast<Eigen::Index>(idx));

  Eigen::BDCSVD<CMatrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  SchmidtDecomposition out;
  out.layout = layout;
  out.left_layout = layout.restrict_to(left);
  out.right_layout = layout.restrict_to(right);
  const auto& sv = svd.singularValues();
  for (Eigen::Index k = 0; k < sv.size(); ++k) {
    if (sv(k) <= kConstructionTol) break;
    out.coefficients.push_back(sv(k));
    out.left_basis.emplace_back(svd.matrixU().col(k));
    out.right_basis.emplace_back(svd.matrixV().col(k).conjugate());
  }
  return out;
}

std::optional<Tridecomposition> tridecomposition_search(const PureState& psi,
                                                        const std::array<LabelSet, 3>& parts, double tol,
                                                        const TridecompositionOptions& options) {
  if (!(tol > 0.0)) throw Error(ErrorCode::InvalidArgument, "tol must be positive");
  const auto& layout = psi.layout();
  std::set<std::string> all;
  for (const auto& part : parts) {
    if (part.empty()) throw Error(ErrorCode::BadBipartition, "every party needs at least one factor");
    for (const auto& l : part) {
      if (!layout.contains(l)) throw Error(ErrorCode::BadBipartition, "label '" + l + "' not in layout");
      if (!all.insert(l).second) throw Error(ErrorCode::BadBipartition, "label '" + l + "' in two parties");
    }
  }
  if (all.size() != layout.num_factors()) throw Error(ErrorCode::BadBipartition, "tripartition does not cover every factor");

  std::array<IndexSplit, 3> splits{split_indices(layout, parts[0]), split_indices(layout, parts[1]),
                                   split_indices(layout, parts[2])};
  const std::size_t da = splits[0].inner_dim, db = splits[1].inner_dim, dc = splits[2].inner_dim;
  const std::size_t r = std::min({da, db, dc});

  // T[a][b][c] flattened as a*db*dc + b*dc + c
  std::vector<Complex> t(da * db * dc);
  for (std::size_t idx = 0; idx < layout.dim(); ++idx)
    t[(splits[0].inner[idx] * db + splits[1].inner[idx]) * dc + splits[2].inner[idx]] =
        psi.amplitudes()(static_cast<Eigen::Index>(idx));
  auto at = [&](std::size_t a, std::size_t b, std::size_t c) { return t[(a * db + b) * dc + c]; };

  auto diagonal = [&](const std::array<CMatrix, 3>& q) {
    std::vector<Complex> d(r, 0.0);
    for (std::size_t i = 0; i < r; ++i) {
      Complex acc = 0.0;
      for (std::size_t a = 0; a < da; ++a)
        for (std::size_t b = 0; b < db; ++b)
          for (std::size_t c = 0; c < dc; ++c)
            acc += std::conj(q[0](a, i)) * std::conj(q[1](b, i)) * std::conj(q[2](c, i)) * at(a, b, c);
      d[i] = acc;
    }
    return d;
  };

  // v_i on `party` after contracting the other two parties with column i.
  auto contracted = [&](const std::array<CMatrix, 3>& q, int party) {
    const std::size_t dims[3] = {da, db, dc};
    CMatrix v = CMatrix::Zero(static_cast<Eigen::Index>(dims[party]), static_cast<Eigen::Index>(r));
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t a = 0; a < da; ++a)
        for (std::size_t b = 0; b < db; ++b)
          for (std::size_t c = 0; c < dc; ++c) {
            const Complex w = at(a, b, c);
            if (w == Complex(0.0)) continue;
            switch (party) {
              case 0: v(a, i) += std::conj(q[1](b, i)) * std::conj(q[2](c, i)) * w; break;
              case 1: v(b, i) += std::conj(q[0](a, i)) * std::conj(q[2](c, i)) * w; break;
              default: v(c, i) += std::conj(q[0](a, i)) * std::conj(q[1](b, i)) * w; break;
            }
          }
    return v;
  };

  auto objective = [](const std::vector<Complex>& d) {
    double f = 0.0;
    for (const auto& x : d) f += std::norm(x);
    return f;
  };

  auto residual_of = [&](const std::array<CMatrix, 3>& q, const std::vector<Complex>& d) {
    double acc = 0.0;
    for (std::size_t a = 0; a < da; ++a)
      for (std::size_t b = 0; b < db; ++b)
        for (std::size_t c = 0; c < dc; ++c) {
          Complex rec = 0.0;
          for (std::size_t i = 0; i < r; ++i) rec += d[i] * q[0](a, i) * q[1](b, i) * q[2](c, i);
          acc += std::norm(at(a, b, c) - rec);
        }
    return std::sqrt(acc);
  };

  auto optimize = [&](std::array<CMatrix, 3> q) {
    double f = objective(diagonal(q));
    for (std::size_t it = 0; it < options.max_iterations; ++it) {
      for (int party = 0; party < 3; ++party) {
        CMatrix v = contracted(q, party);
        CMatrix g(v.rows(), v.cols());
        for (Eigen::Index i = 0; i < v.cols(); ++i) {
          const Complex s = q[party].col(i).dot(v.col(i));
          g.col(i) = v.col(i) * std::conj(s);
        }
        if (g.norm() > 0.0) q[party] = polar_isometry(g);
      }
      const double next = objective(diagonal(q));
      const bool converged = std::abs(next - f) < 1e-15;
      f = next;
      if (converged) break;
    }
    return q;
  };

  RandomStream rng(options.seed, 0);
  std::optional<Tridecomposition> best;
  double best_residual = std::numeric_limits<double>::infinity();

  auto consider = [&](const std::array<CMatrix, 3>& q) {
    const auto d = diagonal(q);
    const double res = residual_of(q, d);
    if (res >= best_residual) return;
    best_residual = res;
    Tridecomposition out;
    out.residual = res;
    for (int p = 0; p < 3; ++p) out.layouts[p] = layout.restrict_to(parts[p]);
    std::vector<std::size_t> order(r);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto x, auto y) { return std::abs(d[x]) > std::abs(d[y]); });
    for (auto i : order) {
      const double w = std::abs(d[i]);
      if (w <= kConstructionTol) continue;
      out.weights.push_back(w);
      out.bases[0].emplace_back(q[0].col(static_cast<Eigen::Index>(i)) * (d[i] / w));
      out.bases[1].emplace_back(q[1].col(static_cast<Eigen::Index>(i)));
      out.bases[2].emplace_back(q[2].col(static_cast<Eigen::Index>(i)));
    }
    best = std::move(out);
  };

  // Start from the per-party Schmidt bases.
  {
    std::array<CMatrix, 3> q;
    for (int p = 0; p < 3; ++p) {
      const auto rho = reduce(psi, parts[p]);
      Eigen::SelfAdjointEigenSolver<CMatrix> es(rho.matrix());
      // eigenvalues ascend; take the r largest, largest first
      q[p] = es.eigenvectors().rightCols(static_cast<Eigen::Index>(r)).rowwise().reverse();
    }
    consider(optimize(q));
  }
  const std::size_t dims[3] = {da, db, dc};
  for (std::size_t restart = 0; restart < options.restarts && best_residual >= tol; ++restart) {
    std::array<CMatrix, 3> q;
    for (int p = 0; p < 3; ++p) q[p] = random_isometry(dims[p], r, rng);
    consider(optimize(q));
  }
  if (!best || best_residual >= tol) return std::nullopt;
  return best;
}

double purity(const DensityOperator& rho) { return rho.matrix().cwiseAbs2().sum(); }

double vn_entropy(const CMatrix& hermitian) {
  Eigen::SelfAdjointEigenSolver<CMatrix> es(hermitian, Eigen::EigenvaluesOnly);
  double s = 0.0;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
    const double l = es.eigenvalues()(i);
    if (l > 0.0) s -= l * std::log(l);
  }
  return std::max(0.0, s);
}

double vn_entropy(const DensityOperator& rho) { return vn_entropy(rho.matrix()); }

HamiltonianSpectrum::HamiltonianSpectrum(const Observable& hamiltonian) : layout_(hamiltonian.layout()) {
  const CMatrix& h = hamiltonian.matrix();
  CMatrix off = h;
  off.diagonal().setZero();
  diagonal_ = off.cwiseAbs().maxCoeff() == 0.0;
  if (diagonal_) {
    energies_ = h.diagonal().real();
  } else {
    Eigen::SelfAdjointEigenSolver<CMatrix> es(h);
    energies_ = es.eigenvalues();
    vectors_ = es.eigenvectors();
  }
}

CVector HamiltonianSpectrum::phases(double t) const {
  CVector p(energies_.size());
  for (Eigen::Index i = 0; i < p.size(); ++i) p(i) = std::polar(1.0, -energies_(i) * t);
  return p;
}

CMatrix HamiltonianSpectrum::propagator(double t) const {
  if (diagonal_) return CMatrix(phases(t).asDiagonal());
  return vectors_ * phases(t).asDiagonal() * vectors_.adjoint();
}

CVector HamiltonianSpectrum::apply(const CVector& psi, double t) const {
  if (diagonal_) return phases(t).cwiseProduct(psi);
  return vectors_ * phases(t).cwiseProduct(vectors_.adjoint() * psi);
}

CMatrix HamiltonianSpectrum::conjugate(const CMatrix& rho, double t) const {
  const CVector p = phases(t);
  if (diagonal_) return p.asDiagonal() * rho * p.conjugate().asDiagonal();
  const CMatrix in_basis = vectors_.adjoint() * rho * vectors_;
  return vectors_ * (p.asDiagonal() * in_basis * p.conjugate().asDiagonal()) * vectors_.adjoint();
}

CMatrix propagator(const Observable& hamiltonian, double t) { return HamiltonianSpectrum(hamiltonian).propagator(t); }

PureState evolve(const PureState& psi, const HamiltonianSpectrum& spectrum, double t) {
  if (!(psi.layout() == spectrum.layout())) {
    throw Error(ErrorCode::LayoutMismatch, psi.layout().to_string() + " vs " + spectrum.layout().to_string());
  }
  return PureState(psi.layout(), spectrum.apply(psi.amplitudes(), t));
}

DensityOperator evolve(const DensityOperator& rho, const HamiltonianSpectrum& spectrum, double t) {
  if (!(rho.layout() == spectrum.layout())) {
    throw Error(ErrorCode::LayoutMismatch, rho.layout().to_string() + " vs " + spectrum.layout().to_string());
  }
  return DensityOperator(rho.layout(), hermitize(spectrum.conjugate(rho.matrix(), t)));
}

PureState evolve(const PureState& psi, const Observable& hamiltonian, double t) {
  if (!(psi.layout() == hamiltonian.layout())) {
    throw Error(ErrorCode::LayoutMismatch, psi.layout().to_string() + " vs " + hamiltonian.layout().to_string());
  }
  return evolve(psi, HamiltonianSpectrum(hamiltonian), t);
}

DensityOperator evolve(const DensityOperator& rho, const Observable& hamiltonian, double t) {
  if (!(rho.layout() == hamiltonian.layout())) {
    throw Error(ErrorCode::LayoutMismatch, rho.layout().to_string() + " vs " + hamiltonian.layout().to_string());
  }
  return evolve(rho, HamiltonianSpectrum(hamiltonian), t);
}

}  // namespace declab
