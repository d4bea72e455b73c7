#pragma once

// Text matrix format shared by states, operators and basis-vector files:
//
//   layout: S:2,A:3
//   0.7071067811865476,0
//   0,-0.25
//   ...
//
// One `re,im` pair per line, row-major. A file with dim entries is a
// vector; one with dim*dim entries is a square operator. Blank lines and
// lines starting with '#' are ignored.

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "declab/hilbert.hpp"

namespace declab {

struct TextMatrix {
  SpaceLayout layout;
  std::vector<Complex> values;

  bool is_vector() const noexcept { return values.size() == layout.dim(); }
  CVector as_vector() const;
  CMatrix as_matrix() const;
};

/// Shortest round-trip decimal form of a double.
std::string format_double(double x);

void write_text(std::ostream& os, const SpaceLayout& layout, const CVector& v);
void write_text(std::ostream& os, const SpaceLayout& layout, const CMatrix& m);
void write_state(std::ostream& os, const PureState& psi);
void write_operator(std::ostream& os, const DensityOperator& rho);
void write_operator(std::ostream& os, const Observable& obs);

TextMatrix read_text(std::istream& is);
TextMatrix read_text_file(const std::filesystem::path& path);

PureState read_state(const std::filesystem::path& path);
DensityOperator read_density(const std::filesystem::path& path);
Observable read_observable(const std::filesystem::path& path);

}  // namespace declab
