#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <mutex>
#include <shared_mutex>
#include <stdexcept>
#include <type_traits>
#include <unordered_map>
#include <vector>

#include "betadyn/errors.hpp"
#include "betadyn/rational.hpp"

namespace betadyn {

// x |-> beta*x mod 1 on [0,1].  Digit sequences are discontinuous in both
// arguments, so products that land near an integer are re-evaluated in a
// wider significand before flooring; within `rel_tol` of an integer the
// product is treated as an exact integer crossing (remainder 0).  This keeps
// orbits that analytically hit 0 (integer bases, golden ratio) absorbing at
// exactly 0 instead of drifting on rounding noise.
struct FloorGuardConfig {
  double rel_tol = 1e-12;
  int guard_bits = 113;  // 53 = double, 64 = x87 long double, 113 = quad
};

namespace detail {
inline FloorGuardConfig& floor_guard_storage() {
  static FloorGuardConfig cfg;
  return cfg;
}
}  // namespace detail

inline const FloorGuardConfig& floor_guard() { return detail::floor_guard_storage(); }
inline void set_floor_guard(const FloorGuardConfig& cfg);  // clears the orbit cache

template <class S>
struct DigitSplit {
  long long digit;
  S frac;
};

namespace detail {

inline DigitSplit<double> digit_split(double beta, double x) {
  const double y = beta * x;
  const double n = std::nearbyint(y);
  const FloorGuardConfig& cfg = floor_guard();
  const double tol = cfg.rel_tol * std::fmax(1.0, std::fabs(y));
  if (std::fabs(y - n) <= tol) {
    double diff;
    if (cfg.guard_bits >= 113) {
      __float128 yq = static_cast<__float128>(beta) * static_cast<__float128>(x);
      diff = static_cast<double>(yq - static_cast<__float128>(n));
    } else if (cfg.guard_bits >= 64) {
      long double yl = static_cast<long double>(beta) * static_cast<long double>(x);
      diff = static_cast<double>(yl - static_cast<long double>(n));
    } else {
      diff = y - n;
    }
    if (std::fabs(diff) <= tol) return {static_cast<long long>(n), 0.0};
    if (diff > 0.0) return {static_cast<long long>(n), diff};
    return {static_cast<long long>(n) - 1, 1.0 + diff};
  }
  const double d = std::floor(y);
  return {static_cast<long long>(d), y - d};
}

inline DigitSplit<long double> digit_split(long double beta, long double x) {
  const long double y = beta * x;
  const long double n = std::nearbyint(y);
  const FloorGuardConfig& cfg = floor_guard();
  const long double tol = cfg.rel_tol * std::fmax(1.0L, std::fabs(y));
  if (std::fabs(y - n) <= tol) {
    long double diff;
    if (cfg.guard_bits >= 113) {
      __float128 yq = static_cast<__float128>(beta) * static_cast<__float128>(x);
      diff = static_cast<long double>(yq - static_cast<__float128>(n));
    } else {
      diff = y - n;
    }
    if (std::fabs(diff) <= tol) return {static_cast<long long>(n), 0.0L};
    if (diff > 0.0L) return {static_cast<long long>(n), diff};
    return {static_cast<long long>(n) - 1, 1.0L + diff};
  }
  const long double d = std::floor(y);
  return {static_cast<long long>(d), y - d};
}

inline DigitSplit<Rational> digit_split(const Rational& beta, const Rational& x) {
  const Rational y = beta * x;
  const Rational::Int d = y.floor_int();
  return {static_cast<long long>(d), y - Rational(static_cast<long long>(d))};
}

constexpr double kDomainSlack = 1e-10;

inline double clamp_unit(double x) {
  if (x < -kDomainSlack || x > 1.0 + kDomainSlack)
    throw std::domain_error("point outside [0,1]");
  return x < 0.0 ? 0.0 : (x > 1.0 ? 1.0 : x);
}

inline long double clamp_unit(long double x) {
  if (x < -static_cast<long double>(kDomainSlack) ||
      x > 1.0L + static_cast<long double>(kDomainSlack))
    throw std::domain_error("point outside [0,1]");
  return x < 0.0L ? 0.0L : (x > 1.0L ? 1.0L : x);
}

inline Rational clamp_unit(const Rational& x) {
  if (x < Rational(0) || x > Rational(1)) throw std::domain_error("point outside [0,1]");
  return x;
}

inline bool is_finite_positive(double v) { return std::isfinite(v) && v > 0.0; }
inline bool is_finite_positive(long double v) { return std::isfinite(v) && v > 0.0L; }
inline bool is_finite_positive(const Rational& v) { return v > Rational(0); }

}  // namespace detail

// Base of one expanding branch map.  Any positive finite value is accepted;
// expansion on average is checked where a construction needs it.
template <class S = double>
struct Beta {
  explicit Beta(S v) : value(v) {
    if (!detail::is_finite_positive(v)) throw std::domain_error("beta must be positive and finite");
  }
  S value;
};

template <class S>
DigitSplit<S> digit_and_apply(const Beta<S>& beta, const S& x) {
  return detail::digit_split(beta.value, detail::clamp_unit(x));
}

// Integer part of beta*x under the guarded floor.
template <class S>
long long digit(const Beta<S>& beta, const S& x) {
  return digit_and_apply(beta, x).digit;
}

// beta*x - floor(beta*x); exactly 0 at integer crossings.
template <class S>
S apply(const Beta<S>& beta, const S& x) {
  return digit_and_apply(beta, x).frac;
}

namespace detail {

template <class S>
std::vector<S> orbit_of_one_direct(const Beta<S>& beta, int n) {
  std::vector<S> orbit;
  orbit.reserve(static_cast<std::size_t>(n) + 1);
  S x = S(1);
  orbit.push_back(x);
  for (int i = 0; i < n; ++i) {
    x = apply(beta, x);
    orbit.push_back(x);
  }
  return orbit;
}

// Orbit prefixes of 1 keyed by the bit pattern of beta.  Concurrent readers
// share the lock; extension takes it exclusively.  Cleared whenever the
// floor guard changes, since digits depend on it.
class OrbitCache {
 public:
  std::vector<double> get(double beta, int n) {
    std::uint64_t key;
    std::memcpy(&key, &beta, sizeof key);
    {
      std::shared_lock lock(mu_);
      auto it = cache_.find(key);
      if (it != cache_.end() && it->second.size() > static_cast<std::size_t>(n))
        return {it->second.begin(), it->second.begin() + n + 1};
    }
    std::unique_lock lock(mu_);
    auto& orbit = cache_[key];
    if (orbit.empty()) orbit.push_back(1.0);
    Beta<double> b(beta);
    while (orbit.size() <= static_cast<std::size_t>(n))
      orbit.push_back(apply(b, orbit.back()));
    return {orbit.begin(), orbit.begin() + n + 1};
  }

  void clear() {
    std::unique_lock lock(mu_);
    cache_.clear();
  }

 private:
  std::shared_mutex mu_;
  std::unordered_map<std::uint64_t, std::vector<double>> cache_;
};

inline OrbitCache& orbit_cache() {
  static OrbitCache c;
  return c;
}

}  // namespace detail

inline void set_floor_guard(const FloorGuardConfig& cfg) {
  detail::floor_guard_storage() = cfg;
  detail::orbit_cache().clear();
}

// [1, T(1), T^2(1), ..., T^n(1)]; absorbs at 0 once an iterate lands there.
template <class S>
std::vector<S> orbit_of_one(const Beta<S>& beta, int n) {
  if (n < 0) throw std::domain_error("orbit length must be nonnegative");
  if constexpr (std::is_same_v<S, double>) {
    return detail::orbit_cache().get(beta.value, n);
  } else {
    return detail::orbit_of_one_direct(beta, n);
  }
}

// Composition along a word, leftmost letter applied first.
template <class S>
S word_apply(const std::vector<Beta<S>>& word, S x) {
  for (const auto& b : word) x = apply(b, x);
  return x;
}

template <class S = double>
struct ExpansionRecord {
  std::vector<long long> digits;     // digits[i] for step i+1
  std::vector<S> partial_sums;       // sum_{j<=i+1} d_j / prod_{k<=j} beta_k
  std::vector<S> cumulative_products;  // prod_{k<=i+1} beta_k
  S remainder_bound = S(0);          // 1 / final product
  S tail_point = S(0);               // iterate after the last step
  bool mean_expanding = true;        // empirical mean of log beta positive
};

// Greedy expansion of x along a path of bases.  The identity
//   x = partial_sums.back() + tail_point / cumulative_products.back()
// holds exactly up to rounding.  A path that fails the empirical expansion
// check is flagged, not rejected.
template <class S>
ExpansionRecord<S> expand(const std::vector<S>& path, S x) {
  if (path.empty()) throw std::domain_error("expansion path is empty");
  ExpansionRecord<S> rec;
  rec.digits.reserve(path.size());
  rec.partial_sums.reserve(path.size());
  rec.cumulative_products.reserve(path.size());
  S point = detail::clamp_unit(x);
  S prod = S(1);
  S sum = S(0);
  double log_sum = 0.0;
  for (const S& bv : path) {
    Beta<S> b(bv);
    log_sum += std::log(to_double(bv));
    auto split = digit_and_apply(b, point);
    prod = prod * bv;
    sum = sum + S(split.digit) / prod;
    rec.digits.push_back(split.digit);
    rec.cumulative_products.push_back(prod);
    rec.partial_sums.push_back(sum);
    point = split.frac;
  }
  rec.tail_point = point;
  rec.remainder_bound = S(1) / prod;
  rec.mean_expanding = log_sum > 0.0;
  return rec;
}

}  // namespace betadyn
