#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace jet {

/// Raised for every recoverable failure in the library (bad input, malformed
/// files, configuration violations).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Seeded generator with platform-independent draws. The standard
/// distributions are implementation-defined, so draws are derived directly
/// from the mt19937_64 stream (whose output sequence is fixed by the standard).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform in [0, 1) with 53 bits of precision.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw Error("Rng::below: empty range");
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x = engine_();
    while (x >= limit) x = engine_();
    return x % n;
  }

  /// Standard normal via Box-Muller (no cached spare, so every call consumes
  /// exactly two draws).
  double normal();

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

/// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t basis = 0xcbf29ce484222325ULL);

/// One splitmix64 mixing round.
std::uint64_t splitmix64(std::uint64_t x);

namespace utf8 {

/// Splits a UTF-8 string into code points, each returned as its own UTF-8
/// substring. Invalid bytes are passed through one byte at a time.
std::vector<std::string> code_points(std::string_view text);

/// Number of code points in a UTF-8 string.
std::size_t length(std::string_view text);

}  // namespace utf8

/// Collapses whitespace runs to a single space and trims both ends.
std::string collapse_whitespace(std::string_view text);

std::string to_lower_ascii(std::string_view text);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

}  // namespace jet
