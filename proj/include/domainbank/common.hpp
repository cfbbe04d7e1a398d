#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace domainbank {

// ---------------------------------------------------------------------------
// Error hierarchy. All library errors derive from domainbank::error so callers
// can catch one type; the subclasses map onto distinct CLI exit codes.
// ---------------------------------------------------------------------------

class error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shape / axis violations.
class dim_error : public error {
 public:
  using error::error;
};

/// Invalid user-facing configuration (bad config file, bad domain id, ...).
class config_error : public error {
 public:
  using error::error;
};

/// An API precondition was violated by the caller.
class contract_error : public error {
 public:
  using error::error;
};

/// Non-finite values or numerical divergence.
class numeric_error : public error {
 public:
  using error::error;
};

/// Training diverged (non-finite loss). Maps to its own CLI exit code.
class divergence_error : public numeric_error {
 public:
  using numeric_error::numeric_error;
};

/// Filesystem / decoding problems.
class io_error : public error {
 public:
  using error::error;
};

/// Malformed binary input (IDX file, checkpoint).
class format_error : public io_error {
 public:
  using io_error::io_error;
};

// ---------------------------------------------------------------------------
// Shapes
// ---------------------------------------------------------------------------

using Shape = std::vector<std::int64_t>;

inline std::int64_t numel_of(const Shape& s) {
  std::int64_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "(";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  out += ")";
  return out;
}

inline void check_shape_positive(const Shape& s, const char* what) {
  for (auto d : s) {
    if (d <= 0) throw dim_error(std::string(what) + ": non-positive dimension in " + shape_str(s));
  }
}

// ---------------------------------------------------------------------------
// Seeding and random numbers.
//
// Every stochastic draw in the library comes from an mt19937_64 seeded through
// mix_seed, so any stream can be reproduced from (base seed, tags) without
// threading a stateful engine through the call graph. Gaussians use a plain
// Box-Muller pair per draw (two engine words, no cached state), which keeps
// engine state trivially serializable.
// ---------------------------------------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t hash_tag(const char* tag) {
  // FNV-1a
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const char* p = tag; *p; ++p) {
    h ^= static_cast<unsigned char>(*p);
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t mix_seed(std::uint64_t base, const char* tag, std::uint64_t a = 0,
                              std::uint64_t b = 0, std::uint64_t c = 0) {
  std::uint64_t h = splitmix64(base ^ hash_tag(tag));
  h = splitmix64(h ^ (a + 0x2545f4914f6cdd1dULL));
  h = splitmix64(h ^ (b + 0x9e3779b97f4a7c15ULL));
  h = splitmix64(h ^ (c + 0xd6e8feb86659fd93ULL));
  return h;
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t u64() { return eng_(); }

  /// Uniform in [0,1), 53-bit resolution.
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  /// Standard normal via Box-Muller; consumes exactly two engine words.
  double gaussian() {
    // u1 lands in (0,1] so the log is always finite.
    const double u1 = (static_cast<double>(eng_() >> 11) + 1.0) * 0x1.0p-53;
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    // Rejection-free modulo is fine here: n is tiny relative to 2^64.
    return eng_() % n;
  }

  std::string state() const {
    std::ostringstream os;
    os << eng_;
    return os.str();
  }

  void restore(const std::string& s) {
    std::istringstream is(s);
    is >> eng_;
    if (!is) throw format_error("Rng::restore: corrupt engine state");
  }

 private:
  std::mt19937_64 eng_;
};

inline bool is_finite(float v) { return std::isfinite(v); }
inline bool is_finite(double v) { return std::isfinite(v); }

}  // namespace domainbank
