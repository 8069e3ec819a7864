#pragma once

#include <filesystem>
#include <iosfwd>

#include "rtk/linop.hpp"

namespace rtk {

// Coordinate-format Matrix Market files with the header
//   %%MatrixMarket matrix coordinate real general
// Values are written with 17 significant digits so a write/read round trip
// reproduces every double exactly.

void write_matrix_market(const CsrMatrix& m, std::ostream& out);
void write_matrix_market(const CsrMatrix& m, const std::filesystem::path& path);

/// Throws ParseError on a malformed header, size line or entry. Duplicate
/// coordinates are summed. The flags are attached to the returned matrix.
CsrMatrix read_matrix_market(std::istream& in, OperatorFlags flags = {});
CsrMatrix read_matrix_market(const std::filesystem::path& path, OperatorFlags flags = {});

// Text vectors: the first line holds the length, then one value per line.
void write_vector(const Vector& v, std::ostream& out);
void write_vector(const Vector& v, const std::filesystem::path& path);
Vector read_vector(std::istream& in);
Vector read_vector(const std::filesystem::path& path);

}  // namespace rtk
