#include "declab/textio.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>

namespace declab {

namespace {

double parse_double(std::string_view s, std::size_t line) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  double x = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw Error(ErrorCode::ParseError, "line " + std::to_string(line) + ": bad number '" + std::string(s) + "'");
  }
  return x;
}

}  // namespace

std::string format_double(double x) {
  if (x == 0.0) return "0";  // folds -0 as well
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, ptr);
}

CVector TextMatrix::as_vector() const {
  if (!is_vector()) throw Error(ErrorCode::LayoutMismatch, "text data is not a vector over " + layout.to_string());
  CVector v(static_cast<Eigen::Index>(values.size()));
  for (std::size_t i = 0; i < values.size(); ++i) v(static_cast<Eigen::Index>(i)) = values[i];
  return v;
}

CMatrix TextMatrix::as_matrix() const {
  const auto d = layout.dim();
  if (values.size() != d * d) throw Error(ErrorCode::LayoutMismatch, "text data is not a square operator over " + layout.to_string());
  CMatrix m(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = values[i * d + j];
  return m;
}

void write_text(std::ostream& os, const SpaceLayout& layout, const CVector& v) {
  os << "layout: " << layout.to_string() << '\n';
  for (Eigen::Index i = 0; i < v.size(); ++i) os << format_double(v(i).real()) << ',' << format_double(v(i).imag()) << '\n';
}

void write_text(std::ostream& os, const SpaceLayout& layout, const CMatrix& m) {
  os << "layout: " << layout.to_string() << '\n';
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      os << format_double(m(i, j).real()) << ',' << format_double(m(i, j).imag()) << '\n';
}

void write_state(std::ostream& os, const PureState& psi) { write_text(os, psi.layout(), psi.amplitudes()); }
void write_operator(std::ostream& os, const DensityOperator& rho) { write_text(os, rho.layout(), rho.matrix()); }
void write_operator(std::ostream& os, const Observable& obs) { write_text(os, obs.layout(), obs.matrix()); }

TextMatrix read_text(std::istream& is) {
  TextMatrix out;
  bool have_layout = false;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    std::string_view s(line);
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    if (s.empty() || s.front() == '#' || s == "\r") continue;
    if (!have_layout) {
      constexpr std::string_view prefix = "layout:";
      if (s.substr(0, prefix.size()) != prefix) {
        throw Error(ErrorCode::ParseError, "line " + std::to_string(lineno) + ": expected 'layout:' header");
      }
      auto rest = s.substr(prefix.size());
      while (!rest.empty() && (rest.back() == '\r' || rest.back() == ' ')) rest.remove_suffix(1);
      out.layout = SpaceLayout::parse(rest);
      have_layout = true;
      continue;
    }
    const auto comma = s.find(',');
    if (comma == std::string_view::npos) {
      throw Error(ErrorCode::ParseError, "line " + std::to_string(lineno) + ": expected 're,im'");
    }
    out.values.emplace_back(parse_double(s.substr(0, comma), lineno), parse_double(s.substr(comma + 1), lineno));
  }
  if (!have_layout) throw Error(ErrorCode::ParseError, "missing 'layout:' header");
  const auto d = out.layout.dim();
  if (out.values.size() != d && out.values.size() != d * d) {
    throw Error(ErrorCode::ParseError, std::to_string(out.values.size()) + " entries fit neither a vector nor an operator over " +
                                           out.layout.to_string());
  }
  return out;
}

TextMatrix read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::NotFound, "cannot open " + path.string());
  try {
    return read_text(in);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

PureState read_state(const std::filesystem::path& path) {
  const auto t = read_text_file(path);
  return PureState(t.layout, t.as_vector());
}

DensityOperator read_density(const std::filesystem::path& path) {
  const auto t = read_text_file(path);
  return DensityOperator(t.layout, t.as_matrix());
}

Observable read_observable(const std::filesystem::path& path) {
  const auto t = read_text_file(path);
  return Observable(t.layout, t.as_matrix());
}

}  // namespace declab
