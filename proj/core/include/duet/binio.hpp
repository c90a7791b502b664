#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>

#include "duet/matrix.hpp"

namespace duet {

// Little-endian primitives shared by every binary file format in the
// project (cluster index, retrieval index, parameter checkpoints).
void write_u32_le(std::ostream& out, std::uint32_t v);
void write_u64_le(std::ostream& out, std::uint64_t v);
void write_f64_le(std::ostream& out, double v);
std::uint32_t read_u32_le(std::istream& in);
std::uint64_t read_u64_le(std::istream& in);
double read_f64_le(std::istream& in);

/// Embedding matrix file: rows and cols as 64-bit little-endian integers,
/// then row-major 64-bit floats. Bit-exact round trip.
void write_matrix_file(const std::filesystem::path& path, const Matrix& m);
Matrix read_matrix_file(const std::filesystem::path& path);

}  // namespace duet
