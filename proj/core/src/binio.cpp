#include "duet/binio.hpp"

#include <cstring>
#include <fstream>

#include "duet/errors.hpp"

namespace duet {

namespace {

void write_bytes_le(std::ostream& out, std::uint64_t v, int nbytes) {
  char buf[8];
  for (int i = 0; i < nbytes; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(buf, nbytes);
}

std::uint64_t read_bytes_le(std::istream& in, int nbytes) {
  char buf[8];
  in.read(buf, nbytes);
  if (!in) throw DataError("unexpected end of binary file");
  std::uint64_t v = 0;
  for (int i = 0; i < nbytes; ++i)
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[i])) << (8 * i);
  return v;
}

}  // namespace

void write_u32_le(std::ostream& out, std::uint32_t v) { write_bytes_le(out, v, 4); }
void write_u64_le(std::ostream& out, std::uint64_t v) { write_bytes_le(out, v, 8); }

void write_f64_le(std::ostream& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof bits);
  write_bytes_le(out, bits, 8);
}

std::uint32_t read_u32_le(std::istream& in) {
  return static_cast<std::uint32_t>(read_bytes_le(in, 4));
}

std::uint64_t read_u64_le(std::istream& in) { return read_bytes_le(in, 8); }

double read_f64_le(std::istream& in) {
  std::uint64_t bits = read_bytes_le(in, 8);
  double v;
  std::memcpy(&v, &bits, sizeof v);
  return v;
}

void write_matrix_file(const std::filesystem::path& path, const Matrix& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  write_u64_le(out, m.rows());
  write_u64_le(out, m.cols());
  for (double v : m.values()) write_f64_le(out, v);
  if (!out) throw DataError("write failed: " + path.string());
}

Matrix read_matrix_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open: " + path.string());
  std::uint64_t rows = read_u64_le(in);
  std::uint64_t cols = read_u64_le(in);
  Matrix m(rows, cols);
  for (double& v : m.values()) v = read_f64_le(in);
  return m;
}

}  // namespace duet
