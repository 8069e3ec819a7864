#include "rtk/matrix_market.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <utility>

#include "rtk/errors.hpp"

namespace rtk {
namespace {

constexpr const char* kHeader = "%%MatrixMarket matrix coordinate real general";

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& token, const std::string& context) {
  if (token.empty()) throw ParseError("empty numeric field in " + context);
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(token, &used);
  } catch (const std::exception&) {
    throw ParseError("non-numeric token '" + token + "' in " + context);
  }
  if (used != token.size()) throw ParseError("non-numeric token '" + token + "' in " + context);
  return v;
}

std::int64_t parse_int(const std::string& token, const std::string& context) {
  std::int64_t v = 0;
  const auto* end = token.data() + token.size();
  auto [ptr, ec] = std::from_chars(token.data(), end, v);
  if (ec != std::errc() || ptr != end)
    throw ParseError("non-integer token '" + token + "' in " + context);
  return v;
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  return out;
}

}  // namespace

void write_matrix_market(const CsrMatrix& m, std::ostream& out) {
  out << kHeader << '\n';
  out << m.size() << ' ' << m.size() << ' ' << m.nnz() << '\n';
  const auto& offsets = m.row_offsets();
  for (Index i = 0; i < m.size(); ++i) {
    for (auto k = offsets[i]; k < offsets[i + 1]; ++k) {
      out << (i + 1) << ' ' << (m.columns()[k] + 1) << ' ' << format_double(m.values()[k])
          << '\n';
    }
  }
}

void write_matrix_market(const CsrMatrix& m, const std::filesystem::path& path) {
  auto out = open_out(path);
  write_matrix_market(m, out);
  if (!out) throw ValidationError("write failed for " + path.string());
}

CsrMatrix read_matrix_market(std::istream& in, OperatorFlags flags) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty Matrix Market stream");
  {
    std::istringstream hs(line);
    std::string banner, object, format, field, symmetry;
    hs >> banner >> object >> format >> field >> symmetry;
    if (banner != "%%MatrixMarket" || lower(object) != "matrix" ||
        lower(format) != "coordinate" || lower(field) != "real" || lower(symmetry) != "general")
      throw ParseError("unsupported Matrix Market header: '" + line + "'");
  }
  do {
    if (!std::getline(in, line)) throw ParseError("missing size line");
  } while (line.empty() || line[0] == '%');

  std::int64_t rows = 0, cols = 0, entries = 0;
  {
    std::istringstream ss(line);
    std::string a, b, c, extra;
    if (!(ss >> a >> b >> c) || (ss >> extra)) throw ParseError("malformed size line: '" + line + "'");
    rows = parse_int(a, "size line");
    cols = parse_int(b, "size line");
    entries = parse_int(c, "size line");
  }
  if (rows != cols) throw ParseError("only square matrices are supported");
  if (rows < 0 || entries < 0) throw ParseError("negative size in size line");

  std::map<std::pair<std::int64_t, std::int64_t>, double> coo;
  std::int64_t seen = 0;
  while (seen < entries && std::getline(in, line)) {
    if (line.empty() || line[0] == '%') continue;
    std::istringstream ss(line);
    std::string a, b, c, extra;
    const std::string context = "entry " + std::to_string(seen + 1);
    if (!(ss >> a >> b >> c) || (ss >> extra)) throw ParseError("malformed " + context);
    const auto i = parse_int(a, context);
    const auto j = parse_int(b, context);
    const double v = parse_double(c, context);
    if (i < 1 || i > rows || j < 1 || j > cols) throw ParseError("index out of range in " + context);
    coo[{i - 1, j - 1}] += v;
    ++seen;
  }
  if (seen != entries)
    throw ParseError("expected " + std::to_string(entries) + " entries, found " +
                     std::to_string(seen));

  std::vector<std::int64_t> offsets(static_cast<std::size_t>(rows) + 1, 0);
  std::vector<std::int64_t> columns;
  std::vector<double> values;
  columns.reserve(coo.size());
  values.reserve(coo.size());
  for (const auto& [ij, v] : coo) {
    ++offsets[static_cast<std::size_t>(ij.first) + 1];
    columns.push_back(ij.second);
    values.push_back(v);
  }
  for (std::size_t i = 1; i < offsets.size(); ++i) offsets[i] += offsets[i - 1];
  return CsrMatrix(rows, std::move(offsets), std::move(columns), std::move(values), flags);
}

CsrMatrix read_matrix_market(const std::filesystem::path& path, OperatorFlags flags) {
  auto in = open_in(path);
  return read_matrix_market(in, flags);
}

void write_vector(const Vector& v, std::ostream& out) {
  out << v.size() << '\n';
  for (Index i = 0; i < v.size(); ++i) out << format_double(v[i]) << '\n';
}

void write_vector(const Vector& v, const std::filesystem::path& path) {
  auto out = open_out(path);
  write_vector(v, out);
}

Vector read_vector(std::istream& in) {
  std::string token;
  if (!(in >> token)) throw ParseError("missing vector length header");
  const auto n = parse_int(token, "vector header");
  if (n < 0) throw ParseError("negative vector length");
  Vector v(n);
  for (std::int64_t i = 0; i < n; ++i) {
    if (!(in >> token)) throw ParseError("vector truncated at entry " + std::to_string(i));
    v[i] = parse_double(token, "vector entry " + std::to_string(i));
  }
  return v;
}

Vector read_vector(const std::filesystem::path& path) {
  auto in = open_in(path);
  return read_vector(in);
}

}  // namespace rtk
