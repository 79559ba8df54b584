#pragma once

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "betadyn/errors.hpp"
#include "betadyn/rational.hpp"

namespace betadyn {

namespace detail {

template <class S>
constexpr double step_fuse_tol() {
  if constexpr (std::is_same_v<S, double>) return 1e-13;
  return 0.0;  // exact scalars never fuse
}

template <class S>
S abs_val(const S& x) {
  return x < S(0) ? -x : x;
}

// Compensated accumulation for double, plain sums for exact scalars.
template <class S>
struct Accum {
  S sum{0};
  S comp{0};
  void add(const S& x) {
    if constexpr (std::is_same_v<S, double>) {
      double t = sum + x;
      if (std::fabs(sum) >= std::fabs(x))
        comp += (sum - t) + x;
      else
        comp += (x - t) + sum;
      sum = t;
    } else {
      sum = sum + x;
    }
  }
  S get() const { return sum + comp; }
};

}  // namespace detail

// Right-continuous piecewise-constant function on [0,1].  The canonical form
// has strictly increasing breakpoints from 0 to 1, one value per cell
// [b_i, b_{i+1}), no zero-length cells, adjacent values distinct, and (in
// double mode) no cell shorter than the fuse tolerance: shorter cells are
// absorbed into a neighbour with a length-weighted value average, which
// preserves the integral exactly.  Two functions equal almost everywhere
// canonicalize to the same representation.
template <class S = double>
class StepFunction {
 public:
  StepFunction() : breaks_{S(0), S(1)}, values_{S(0)} {}

  StepFunction(std::vector<S> breakpoints, std::vector<S> values) {
    if (breakpoints.size() < 2 || values.size() + 1 != breakpoints.size())
      throw std::invalid_argument("step function: size mismatch");
    if (!(breakpoints.front() == S(0)) || !(breakpoints.back() == S(1)))
      throw std::invalid_argument("step function: domain must be [0,1]");
    for (std::size_t i = 0; i + 1 < breakpoints.size(); ++i)
      if (!(breakpoints[i] < breakpoints[i + 1]))
        throw std::invalid_argument("step function: breakpoints must increase");
    breaks_ = std::move(breakpoints);
    values_ = std::move(values);
    canonicalize();
  }

  static StepFunction constant(const S& c) {
    StepFunction f;
    f.values_[0] = c;
    return f;
  }

  const std::vector<S>& breakpoints() const { return breaks_; }
  const std::vector<S>& values() const { return values_; }
  std::size_t cells() const { return values_.size(); }

  friend bool operator==(const StepFunction& a, const StepFunction& b) {
    return a.breaks_ == b.breaks_ && a.values_ == b.values_;
  }

 private:
  void canonicalize() {
    const double tol = detail::step_fuse_tol<S>();
    std::vector<S> nb, nv;
    nb.reserve(breaks_.size());
    nv.reserve(values_.size());
    nb.push_back(S(0));
    S pend_val = values_[0];
    S pend_len = breaks_[1] - breaks_[0];
    S pend_end = breaks_[1];
    auto shorter_than_tol = [&](const S& len) {
      if constexpr (std::is_same_v<S, double>) return len < tol;
      (void)tol;
      return false;
    };
    for (std::size_t i = 1; i < values_.size(); ++i) {
      S len = breaks_[i + 1] - breaks_[i];
      if (shorter_than_tol(pend_len)) {
        // absorb the pending sliver into this cell
        pend_val = (pend_val * pend_len + values_[i] * len) / (pend_len + len);
        pend_len = pend_len + len;
        pend_end = breaks_[i + 1];
      } else {
        nb.push_back(pend_end);
        nv.push_back(pend_val);
        pend_val = values_[i];
        pend_len = len;
        pend_end = breaks_[i + 1];
      }
    }
    if (shorter_than_tol(pend_len) && !nv.empty()) {
      S prev_len = pend_end - pend_len - nb[nb.size() - 2];
      nv.back() = (nv.back() * prev_len + pend_val * pend_len) / (prev_len + pend_len);
      nb.back() = pend_end;
    } else {
      nb.push_back(pend_end);
      nv.push_back(pend_val);
    }
    // merge adjacent cells carrying identical values
    breaks_.clear();
    values_.clear();
    breaks_.push_back(nb[0]);
    for (std::size_t i = 0; i < nv.size(); ++i) {
      if (!values_.empty() && values_.back() == nv[i]) {
        breaks_.back() = nb[i + 1];
      } else {
        values_.push_back(nv[i]);
        breaks_.push_back(nb[i + 1]);
      }
    }
    breaks_.back() = S(1);
  }

  std::vector<S> breaks_;
  std::vector<S> values_;
};

// Almost-everywhere version of the indicator of [0,a]: value 1 on [0,a),
// 0 on [a,1).  indicator(0) is the zero function, indicator(1) the constant 1.
template <class S = double>
StepFunction<S> indicator(const S& a) {
  if (a < S(0) || a > S(1)) throw std::domain_error("indicator endpoint outside [0,1]");
  if (a == S(0)) return StepFunction<S>();
  if (a == S(1)) return StepFunction<S>::constant(S(1));
  return StepFunction<S>({S(0), a, S(1)}, {S(1), S(0)});
}

// base*1_[0,1) + sum_i w_i*1_[0,p_i) assembled in one pass: sort the anchor
// points, then suffix-sum the weights from the right.  Atoms at 0 vanish,
// atoms at 1 fold into the base constant.  Points outside [0,1] are invalid.
template <class S>
StepFunction<S> from_atoms(const S& base, std::vector<std::pair<S, S>> atoms) {
  detail::Accum<S> base_acc;
  base_acc.add(base);
  std::vector<std::pair<S, S>> pts;
  pts.reserve(atoms.size());
  for (auto& a : atoms) {
    if (a.first < S(0) || a.first > S(1))
      throw std::domain_error("atom point outside [0,1]");
    if (a.first == S(1))
      base_acc.add(a.second);
    else if (!(a.first == S(0)))
      pts.push_back(a);
  }
  std::sort(pts.begin(), pts.end(),
            [](const auto& x, const auto& y) { return x.first < y.first; });
  // merge duplicates
  std::size_t out = 0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (out > 0 && pts[out - 1].first == pts[i].first)
      pts[out - 1].second = pts[out - 1].second + pts[i].second;
    else
      pts[out++] = pts[i];
  }
  pts.resize(out);
  std::vector<S> breaks, values;
  breaks.reserve(pts.size() + 2);
  values.reserve(pts.size() + 1);
  breaks.push_back(S(0));
  for (auto& p : pts) breaks.push_back(p.first);
  if (breaks.back() == S(1))
    breaks.pop_back();  // cannot happen after the ==1 fold, kept for safety
  breaks.push_back(S(1));
  // suffix sums from the right; cell ending at pts[i] sees weights j >= i
  values.assign(breaks.size() - 1, S(0));
  detail::Accum<S> acc;
  acc.add(base_acc.get());
  values.back() = acc.get();
  for (std::size_t i = pts.size(); i-- > 0;) {
    acc.add(pts[i].second);
    values[i] = acc.get();
  }
  return StepFunction<S>(std::move(breaks), std::move(values));
}

// sum_i coef_i * f_i on the common refinement of the breakpoints.
template <class S>
StepFunction<S> linear_combine(const std::vector<std::pair<S, const StepFunction<S>*>>& terms) {
  if (terms.empty()) return StepFunction<S>();
  std::vector<std::size_t> idx(terms.size(), 0);
  std::vector<S> breaks{S(0)};
  std::vector<S> values;
  S pos = S(0);
  while (!(pos == S(1))) {
    S next = S(1);
    for (std::size_t t = 0; t < terms.size(); ++t) {
      const auto& b = terms[t].second->breakpoints();
      if (b[idx[t] + 1] < next) next = b[idx[t] + 1];
    }
    detail::Accum<S> acc;
    for (std::size_t t = 0; t < terms.size(); ++t)
      acc.add(terms[t].first * terms[t].second->values()[idx[t]]);
    values.push_back(acc.get());
    breaks.push_back(next);
    for (std::size_t t = 0; t < terms.size(); ++t) {
      const auto& b = terms[t].second->breakpoints();
      if (b[idx[t] + 1] == next && idx[t] + 2 < b.size()) ++idx[t];
    }
    pos = next;
  }
  return StepFunction<S>(std::move(breaks), std::move(values));
}

template <class S>
StepFunction<S> operator*(const S& c, const StepFunction<S>& f) {
  return linear_combine<S>({{c, &f}});
}

template <class S>
StepFunction<S> operator+(const StepFunction<S>& f, const StepFunction<S>& g) {
  return linear_combine<S>({{S(1), &f}, {S(1), &g}});
}

template <class S>
StepFunction<S> operator-(const StepFunction<S>& f, const StepFunction<S>& g) {
  return linear_combine<S>({{S(1), &f}, {S(-1), &g}});
}

template <class S>
S integral(const StepFunction<S>& f) {
  detail::Accum<S> acc;
  const auto& b = f.breakpoints();
  const auto& v = f.values();
  for (std::size_t i = 0; i < v.size(); ++i) acc.add(v[i] * (b[i + 1] - b[i]));
  return acc.get();
}

template <class S>
S eval(const StepFunction<S>& f, const S& x) {
  if (x < S(0) || x > S(1)) throw std::domain_error("evaluation point outside [0,1]");
  const auto& b = f.breakpoints();
  if (x == S(1)) return f.values().back();
  auto it = std::upper_bound(b.begin(), b.end(), x);
  return f.values()[static_cast<std::size_t>(it - b.begin()) - 1];
}

namespace detail {

// Sweep two step functions over the common refinement, feeding each cell to
// `emit(value_f, value_g, length)`.
template <class S, class F>
void sweep_pair(const StepFunction<S>& f, const StepFunction<S>& g, F&& emit) {
  const auto& bf = f.breakpoints();
  const auto& bg = g.breakpoints();
  std::size_t i = 0, j = 0;
  S pos = S(0);
  while (!(pos == S(1))) {
    S next = bf[i + 1] < bg[j + 1] ? bf[i + 1] : bg[j + 1];
    emit(f.values()[i], g.values()[j], next - pos);
    if (bf[i + 1] == next && i + 2 < bf.size()) ++i;
    if (bg[j + 1] == next && j + 2 < bg.size()) ++j;
    pos = next;
  }
}

}  // namespace detail

template <class S>
S l1_distance(const StepFunction<S>& f, const StepFunction<S>& g) {
  detail::Accum<S> acc;
  detail::sweep_pair(f, g, [&](const S& vf, const S& vg, const S& len) {
    acc.add(detail::abs_val(vf - vg) * len);
  });
  return acc.get();
}

template <class S>
S l1_norm(const StepFunction<S>& f) {
  detail::Accum<S> acc;
  const auto& b = f.breakpoints();
  for (std::size_t i = 0; i < f.values().size(); ++i)
    acc.add(detail::abs_val(f.values()[i]) * (b[i + 1] - b[i]));
  return acc.get();
}

// Variation over the open interval (0,1): jumps at interior breakpoints only.
template <class S>
S total_variation(const StepFunction<S>& f) {
  detail::Accum<S> acc;
  const auto& v = f.values();
  for (std::size_t i = 1; i < v.size(); ++i) acc.add(detail::abs_val(v[i] - v[i - 1]));
  return acc.get();
}

template <class S>
S bv_norm(const StepFunction<S>& f) {
  return l1_norm(f) + total_variation(f);
}

template <class S>
S ess_sup(const StepFunction<S>& f) {
  return *std::max_element(f.values().begin(), f.values().end());
}

template <class S>
S ess_inf(const StepFunction<S>& f) {
  return *std::min_element(f.values().begin(), f.values().end());
}

template <class S>
StepFunction<S> normalize(const StepFunction<S>& f) {
  S mass = integral(f);
  bool bad = !(mass > S(0));
  if constexpr (std::is_same_v<S, double>) bad = bad || !std::isfinite(mass);
  if (bad) throw std::domain_error("cannot normalize: nonpositive mass");
  return (S(1) / mass) * f;
}

// CSV emission: header plus one `x_left,x_right,value` row per cell, with
// enough digits for doubles to round-trip exactly.
inline void to_csv(std::ostream& os, const StepFunction<double>& f) {
  os.precision(17);
  os << "x_left,x_right,value\n";
  const auto& b = f.breakpoints();
  const auto& v = f.values();
  for (std::size_t i = 0; i < v.size(); ++i)
    os << b[i] << ',' << b[i + 1] << ',' << v[i] << '\n';
}

inline StepFunction<double> from_csv(std::istream& is) {
  std::vector<double> breaks, values;
  std::string line;
  bool first = true;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (first && line.rfind("x_left", 0) == 0) {
      first = false;
      continue;
    }
    first = false;
    std::istringstream row(line);
    std::string a, b, c;
    if (!std::getline(row, a, ',') || !std::getline(row, b, ',') || !std::getline(row, c))
      throw io_error("malformed CSV row: " + line);
    char* end = nullptr;
    double xl = std::strtod(a.c_str(), &end);
    double xr = std::strtod(b.c_str(), &end);
    double val = std::strtod(c.c_str(), &end);
    if (breaks.empty()) {
      if (xl != 0.0) throw io_error("CSV rows must start at 0");
      breaks.push_back(xl);
    } else if (breaks.back() != xl) {
      throw io_error("CSV rows are not contiguous");
    }
    breaks.push_back(xr);
    values.push_back(val);
  }
  if (breaks.size() < 2 || breaks.back() != 1.0)
    throw io_error("CSV rows must cover [0,1]");
  return StepFunction<double>(std::move(breaks), std::move(values));
}

}  // namespace betadyn
