#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace betadyn {

// Exact rational scalar on 128-bit integers.  Used to run the orbit and
// step-function algebra without rounding, mostly to pin down bit-exact
// expected values in tests.  Overflow throws instead of wrapping.
class Rational {
 public:
  using Int = __int128;

  Rational() : num_(0), den_(1) {}
  Rational(long long n) : num_(n), den_(1) {}  // NOLINT: implicit by design
  Rational(long long n, long long d) : num_(n), den_(d) { reduce(); }

  static Rational from_parts(Int n, Int d) {
    Rational r;
    r.num_ = n;
    r.den_ = d;
    r.reduce();
    return r;
  }

  Int num() const { return num_; }
  Int den() const { return den_; }

  friend Rational operator+(const Rational& a, const Rational& b) {
    return from_parts(add_checked(mul_checked(a.num_, b.den_), mul_checked(b.num_, a.den_)),
                      mul_checked(a.den_, b.den_));
  }
  friend Rational operator-(const Rational& a, const Rational& b) {
    return from_parts(add_checked(mul_checked(a.num_, b.den_), -mul_checked(b.num_, a.den_)),
                      mul_checked(a.den_, b.den_));
  }
  friend Rational operator*(const Rational& a, const Rational& b) {
    return from_parts(mul_checked(a.num_, b.num_), mul_checked(a.den_, b.den_));
  }
  friend Rational operator/(const Rational& a, const Rational& b) {
    if (b.num_ == 0) throw std::domain_error("rational division by zero");
    return from_parts(mul_checked(a.num_, b.den_), mul_checked(a.den_, b.num_));
  }
  Rational operator-() const { return from_parts(-num_, den_); }
  Rational& operator+=(const Rational& b) { return *this = *this + b; }
  Rational& operator-=(const Rational& b) { return *this = *this - b; }
  Rational& operator*=(const Rational& b) { return *this = *this * b; }
  Rational& operator/=(const Rational& b) { return *this = *this / b; }

  friend bool operator==(const Rational& a, const Rational& b) {
    return a.num_ == b.num_ && a.den_ == b.den_;
  }
  friend bool operator!=(const Rational& a, const Rational& b) { return !(a == b); }
  friend bool operator<(const Rational& a, const Rational& b) {
    return mul_checked(a.num_, b.den_) < mul_checked(b.num_, a.den_);
  }
  friend bool operator>(const Rational& a, const Rational& b) { return b < a; }
  friend bool operator<=(const Rational& a, const Rational& b) { return !(b < a); }
  friend bool operator>=(const Rational& a, const Rational& b) { return !(a < b); }

  // Largest integer <= value.  Values reached here are nonnegative in the
  // orbit code but negatives are handled for completeness.
  Int floor_int() const {
    Int q = num_ / den_;
    if (num_ % den_ != 0 && num_ < 0) --q;
    return q;
  }

  double to_double() const { return static_cast<double>(num_) / static_cast<double>(den_); }

 private:
  void reduce() {
    if (den_ == 0) throw std::domain_error("rational with zero denominator");
    if (den_ < 0) {
      num_ = -num_;
      den_ = -den_;
    }
    Int g = gcd128(num_ < 0 ? -num_ : num_, den_);
    if (g > 1) {
      num_ /= g;
      den_ /= g;
    }
  }

  static Int gcd128(Int a, Int b) {
    while (b != 0) {
      Int t = a % b;
      a = b;
      b = t;
    }
    return a < 0 ? -a : a;
  }

  static Int mul_checked(Int a, Int b) {
    Int out;
    if (__builtin_mul_overflow(a, b, &out))
      throw std::overflow_error("rational overflow; reduce depth or use double mode");
    return out;
  }
  static Int add_checked(Int a, Int b) {
    Int out;
    if (__builtin_add_overflow(a, b, &out))
      throw std::overflow_error("rational overflow; reduce depth or use double mode");
    return out;
  }

  Int num_;
  Int den_;
};

inline double to_double(const Rational& r) { return r.to_double(); }
inline double to_double(double x) { return x; }
inline double to_double(long double x) { return static_cast<double>(x); }

}  // namespace betadyn
