#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <system_error>
#include <utility>
#include <vector>

#include "psdid/error.hpp"
#include "psdid/format.hpp"
#include "psdid/sparse_sym_matrix.hpp"

namespace psdid {

// Matrix Market exchange format, restricted to `coordinate real symmetric`
// (and `integer`, read as real). Writing stores the lower triangle with values
// in shortest round-trip decimal form, so read(write(m)) == m exactly.

namespace detail {

inline std::string lowercase(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

inline bool blank(const std::string &line) {
  return line.find_first_not_of(" \t\r") == std::string::npos;
}

template <typename T>
T parse_number(const std::string &tok, std::size_t line, const char *what) {
  T value{};
  const char *first = tok.data();
  const char *last = tok.data() + tok.size();
  if (!tok.empty() && *first == '+')
    ++first;
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last)
    throw ParseError(std::string("invalid ") + what + " '" + tok + "'", line);
  return value;
}

inline std::vector<std::string> tokens(const std::string &line) {
  std::istringstream in(line);
  std::vector<std::string> out;
  for (std::string t; in >> t;)
    out.push_back(std::move(t));
  return out;
}

} // namespace detail

/// Parses a symmetric matrix. Entries may be given in either triangle but
/// a position and its mirror may not both appear.
inline SparseSymMatrix read_matrix_market(std::istream &in) {
  std::string line;
  std::size_t lineno = 0;

  if (!std::getline(in, line))
    throw ParseError("empty file", 0);
  ++lineno;
  const auto head = detail::tokens(line);
  if (head.size() != 5 || head[0] != "%%MatrixMarket")
    throw ParseError("missing '%%MatrixMarket' banner", lineno);
  const std::string object = detail::lowercase(head[1]);
  const std::string format = detail::lowercase(head[2]);
  const std::string field = detail::lowercase(head[3]);
  const std::string symmetry = detail::lowercase(head[4]);
  if (object != "matrix")
    throw ParseError("unsupported object '" + head[1] + "'", lineno);
  if (format != "coordinate")
    throw ParseError("unsupported format '" + head[2] + "' (only coordinate)", lineno);
  if (field != "real" && field != "integer")
    throw ParseError("unsupported field '" + head[3] + "' (only real or integer)", lineno);
  if (symmetry != "symmetric")
    throw ParseError("declared symmetry '" + head[4] +
                         "' is not symmetric; only symmetric matrices are accepted",
                     lineno);

  // comments and blank lines before the size line
  for (;;) {
    if (!std::getline(in, line))
      throw ParseError("missing size line", lineno);
    ++lineno;
    if (!line.empty() && line[0] == '%')
      continue;
    if (detail::blank(line))
      continue;
    break;
  }
  const auto size_tok = detail::tokens(line);
  if (size_tok.size() != 3)
    throw ParseError("size line must hold 'rows cols entries'", lineno);
  const auto rows = detail::parse_number<long long>(size_tok[0], lineno, "row count");
  const auto cols = detail::parse_number<long long>(size_tok[1], lineno, "column count");
  const auto nnz = detail::parse_number<long long>(size_tok[2], lineno, "entry count");
  if (rows <= 0 || rows != cols)
    throw ParseError("symmetric matrix must be square with positive order", lineno);
  if (nnz < 0)
    throw ParseError("negative entry count", lineno);

  std::vector<Triplet> lower;
  lower.reserve(static_cast<std::size_t>(nnz));
  std::set<std::pair<long long, long long>> seen;
  long long count = 0;
  while (count < nnz) {
    if (!std::getline(in, line))
      throw ParseError("expected " + std::to_string(nnz) + " entries, found " +
                           std::to_string(count),
                       lineno);
    ++lineno;
    if (detail::blank(line) || line[0] == '%')
      continue;
    const auto tok = detail::tokens(line);
    if (tok.size() != 3)
      throw ParseError("entry must hold 'row col value'", lineno);
    const auto i = detail::parse_number<long long>(tok[0], lineno, "row index");
    const auto j = detail::parse_number<long long>(tok[1], lineno, "column index");
    const double v = field == "integer"
                         ? static_cast<double>(detail::parse_number<long long>(tok[2], lineno, "value"))
                         : detail::parse_number<double>(tok[2], lineno, "value");
    if (!std::isfinite(v))
      throw ParseError("non-finite value '" + tok[2] + "'", lineno);
    if (i < 1 || i > rows || j < 1 || j > cols)
      throw ParseError("index (" + tok[0] + "," + tok[1] + ") out of range 1.." +
                           std::to_string(rows),
                       lineno);
    const long long r = std::max(i, j) - 1;
    const long long c = std::min(i, j) - 1;
    if (!seen.emplace(r, c).second)
      throw ParseError("duplicate entry (" + tok[0] + "," + tok[1] + ")", lineno);
    lower.emplace_back(static_cast<int>(r), static_cast<int>(c), v);
    ++count;
  }
  while (std::getline(in, line)) {
    ++lineno;
    if (!detail::blank(line) && line[0] != '%')
      throw ParseError("trailing data after " + std::to_string(nnz) + " entries", lineno);
  }
  return SparseSymMatrix::from_triplets(static_cast<std::size_t>(rows), lower,
                                        SparseSymMatrix::Triangle::Lower);
}

inline SparseSymMatrix read_matrix_market(const std::string &path) {
  std::ifstream in(path);
  if (!in)
    throw ParseError("cannot open '" + path + "'", 0);
  try {
    return read_matrix_market(in);
  } catch (const ParseError &e) {
    throw e.with_context(path);
  }
}

inline void write_matrix_market(const SparseSymMatrix &m, std::ostream &out,
                                const std::string &comment = {}) {
  const auto &st = m.storage();
  std::size_t lower = 0;
  for (Eigen::Index r = 0; r < st.outerSize(); ++r)
    for (SparseSymMatrix::Storage::InnerIterator it(st, r); it; ++it)
      if (it.col() <= r)
        ++lower;
  out << "%%MatrixMarket matrix coordinate real symmetric\n";
  if (!comment.empty())
    out << "% " << comment << "\n";
  out << m.n() << " " << m.n() << " " << lower << "\n";
  // column-major order over the lower triangle, the conventional layout
  const Eigen::SparseMatrix<double, Eigen::ColMajor, int> cm = st;
  for (Eigen::Index c = 0; c < cm.outerSize(); ++c)
    for (Eigen::SparseMatrix<double, Eigen::ColMajor, int>::InnerIterator it(cm, c); it; ++it)
      if (it.row() >= c)
        out << it.row() + 1 << " " << c + 1 << " " << shortest_decimal(it.value()) << "\n";
}

inline void write_matrix_market(const SparseSymMatrix &m, const std::string &path,
                                const std::string &comment = {}) {
  std::ofstream out(path);
  if (!out)
    throw Error("cannot open '" + path + "' for writing");
  write_matrix_market(m, out, comment);
  if (!out)
    throw Error("write to '" + path + "' failed");
}

} // namespace psdid
