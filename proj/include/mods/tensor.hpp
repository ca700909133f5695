#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mods {

// Error hierarchy shared by every module. The CLI maps these onto exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class DimensionError : public Error {
 public:
  using Error::Error;
};
class NumericalError : public Error {
 public:
  using Error::Error;
};
class DataError : public Error {
 public:
  using Error::Error;
};
class ConfigError : public Error {
 public:
  using Error::Error;
};

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

/// Dense row-major array of doubles with shape metadata.
///
/// Rank-2 tensors are the working currency of the autodiff tape; rank-1
/// tensors appear as bias/gain vectors and higher ranks only as capsule
/// weight banks. Storage is always double; float32 enters only through
/// the binary encoding.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor row(std::initializer_list<double> values);
  static Tensor identity(std::size_t n);
  static Tensor scalar(double v) { return Tensor({1, 1}, {v}); }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }

  // Matrix view; a rank-1 tensor of length n reads as 1×n.
  std::size_t rows() const;
  std::size_t cols() const;

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  std::vector<double>& storage() { return data_; }
  const std::vector<double>& storage() const { return data_; }

  bool requires_grad() const { return requires_grad_; }
  void set_requires_grad(bool on) { requires_grad_ = on; }

  Tensor reshaped(Shape shape) const;
  bool all_finite() const;
  void fill(double v);

  // Exact (bitwise on values) equality including shape.
  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  std::vector<double> data_;
  bool requires_grad_ = false;
};

// Binary encoding: u32 rank, u32 dims, little-endian float32 values row-major.
void write_tensor(std::ostream& out, const Tensor& t);
// `source` names the file or record in truncation errors.
Tensor read_tensor(std::istream& in, const std::string& source);

void save_tensor_file(const std::string& path, const Tensor& t);
Tensor load_tensor_file(const std::string& path);

// Round every value through float32; used to keep stored parameters and
// features exactly representable in the binary encoding.
void round_to_f32(Tensor& t);

// Little-endian scalar helpers shared with checkpoint IO.
namespace binio {
void put_u32(std::ostream& out, std::uint32_t v);
void put_u64(std::ostream& out, std::uint64_t v);
void put_f64(std::ostream& out, double v);
void put_string(std::ostream& out, const std::string& s);
std::uint32_t get_u32(std::istream& in, const std::string& source);
std::uint64_t get_u64(std::istream& in, const std::string& source);
double get_f64(std::istream& in, const std::string& source);
std::string get_string(std::istream& in, const std::string& source);
}  // namespace binio

}  // namespace mods
