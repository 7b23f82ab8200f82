#pragma once

#include <cstdint>
#include <istream>
#include <ostream>
#include <string>

#include "vargan/error.hpp"
#include "vargan/tensor.hpp"

namespace vargan::binio {

// Binary stream helpers; every read checks for truncation.
class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}
  void bytes(const void* p, std::size_t n) { out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }
  void u32(std::uint32_t v) { bytes(&v, sizeof v); }
  void u64(std::uint64_t v) { bytes(&v, sizeof v); }
  void f64(double v) { bytes(&v, sizeof v); }
  void str(const std::string& s) {
    u64(s.size());
    bytes(s.data(), s.size());
  }
  template <typename T>
  void tensor(const std::string& name, const Tensor<T>& t) {
    str(name);
    u32(static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) u64(d);
    for (std::size_t i = 0; i < t.size(); ++i) f64(static_cast<double>(t[i]));
  }

 private:
  std::ostream& out_;
};

class Reader {
 public:
  Reader(std::istream& in, std::string path) : in_(in), path_(std::move(path)) {}
  void bytes(void* p, std::size_t n) {
    in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (!in_ || static_cast<std::size_t>(in_.gcount()) != n) throw ValidationError("file truncated: " + path_);
  }
  std::uint32_t u32() {
    std::uint32_t v;
    bytes(&v, sizeof v);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v;
    bytes(&v, sizeof v);
    return v;
  }
  double f64() {
    double v;
    bytes(&v, sizeof v);
    return v;
  }
  std::string str() {
    const std::uint64_t n = u64();
    if (n > (1ULL << 30)) throw ValidationError("file corrupt (string length): " + path_);
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }
  Tensor<double> tensor(std::string& name) {
    name = str();
    const std::uint32_t rank = u32();
    if (rank == 0 || rank > 8) throw ValidationError("file corrupt (rank) in tensor " + name);
    Shape shape(rank);
    std::uint64_t count = 1;
    for (auto& d : shape) {
      d = u64();
      if (d == 0 || d > (1ULL << 32)) throw ValidationError("file corrupt (shape) in tensor " + name);
      count *= d;
    }
    if (count > (1ULL << 32)) throw ValidationError("file corrupt (size) in tensor " + name);
    Tensor<double> t(shape);
    bytes(t.data(), t.size() * sizeof(double));
    return t;
  }

 private:
  std::istream& in_;
  std::string path_;
};

}  // namespace vargan::binio
