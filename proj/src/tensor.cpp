#include "mods/tensor.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <sstream>

namespace mods {

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  for (auto d : shape_) {
    if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_string(shape_));
  }
  data_.assign(shape_numel(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  for (auto d : shape_) {
    if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_string(shape_));
  }
  if (data_.size() != shape_numel(shape_)) {
    throw DimensionError("data length " + std::to_string(data_.size()) + " does not match shape " +
                         shape_string(shape_));
  }
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("ragged matrix literal");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(data));
}

Tensor Tensor::row(std::initializer_list<double> values) {
  return Tensor({1, values.size()}, std::vector<double>(values));
}

Tensor Tensor::identity(std::size_t n) {
  Tensor t({n, n});
  for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
  return t;
}

std::size_t Tensor::rows() const {
  if (shape_.size() == 1) return 1;
  if (shape_.size() == 2) return shape_[0];
  throw DimensionError("matrix view requested on tensor of shape " + shape_string(shape_));
}

std::size_t Tensor::cols() const {
  if (shape_.size() == 1) return shape_[0];
  if (shape_.size() == 2) return shape_[1];
  throw DimensionError("matrix view requested on tensor of shape " + shape_string(shape_));
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_numel(shape) != data_.size()) {
    throw DimensionError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  }
  return Tensor(std::move(shape), data_);
}

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

void round_to_f32(Tensor& t) {
  for (double& v : t.storage()) v = static_cast<double>(static_cast<float>(v));
}

namespace binio {

void put_u32(std::ostream& out, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
  out.write(b, 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
  out.write(b, 8);
}

void put_f64(std::ostream& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

void put_string(std::ostream& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

static void read_exact(std::istream& in, char* dst, std::size_t n, const std::string& source) {
  in.read(dst, static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) {
    throw DataError("truncated data in " + source);
  }
}

std::uint32_t get_u32(std::istream& in, const std::string& source) {
  unsigned char b[4];
  read_exact(in, reinterpret_cast<char*>(b), 4, source);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

std::uint64_t get_u64(std::istream& in, const std::string& source) {
  unsigned char b[8];
  read_exact(in, reinterpret_cast<char*>(b), 8, source);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

double get_f64(std::istream& in, const std::string& source) {
  return std::bit_cast<double>(get_u64(in, source));
}

std::string get_string(std::istream& in, const std::string& source) {
  const auto n = get_u32(in, source);
  std::string s(n, '\0');
  read_exact(in, s.data(), n, source);
  return s;
}

}  // namespace binio

void write_tensor(std::ostream& out, const Tensor& t) {
  binio::put_u32(out, static_cast<std::uint32_t>(t.rank()));
  for (auto d : t.shape()) binio::put_u32(out, static_cast<std::uint32_t>(d));
  for (double v : t.values()) {
    binio::put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
}

Tensor read_tensor(std::istream& in, const std::string& source) {
  const auto rank = binio::get_u32(in, source);
  if (rank == 0 || rank > 8) throw DataError("invalid tensor rank " + std::to_string(rank) + " in " + source);
  Shape shape(rank);
  for (auto& d : shape) {
    d = binio::get_u32(in, source);
    if (d == 0) throw DataError("zero tensor dimension in " + source);
  }
  std::vector<double> data(shape_numel(shape));
  for (auto& v : data) {
    v = static_cast<double>(std::bit_cast<float>(binio::get_u32(in, source)));
  }
  return Tensor(std::move(shape), std::move(data));
}

void save_tensor_file(const std::string& path, const Tensor& t) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open " + path + " for writing");
  write_tensor(out, t);
  if (!out) throw DataError("write failed for " + path);
}

Tensor load_tensor_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("missing tensor file " + path);
  Tensor t = read_tensor(in, path);
  if (in.peek() != std::char_traits<char>::eof()) {
    throw DataError("trailing bytes after tensor in " + path);
  }
  return t;
}

}  // namespace mods
