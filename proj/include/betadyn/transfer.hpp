#pragma once

// Annealed transfer operator for finite mixtures of beta-maps, acting on
// canonical step functions.  The image of an indicator 1_[0,a) under a single
// map has an explicit two-term form, and general step functions reduce to
// indicator combinations, so applying the operator never leaves the class.

#include <cmath>
#include <cstddef>
#include <utility>
#include <vector>

#include "betadyn/beta_map.hpp"
#include "betadyn/errors.hpp"
#include "betadyn/step_function.hpp"

namespace betadyn {

template <typename S>
struct WeightedMap {
  Beta<S> map;
  S prob;
};

// Finite collection of beta-maps with selection probabilities summing to 1.
template <typename S>
class BetaSystem {
 public:
  explicit BetaSystem(std::vector<WeightedMap<S>> maps) : maps_(std::move(maps)) {
    if (maps_.empty()) throw config_error("system needs at least one map");
    detail::Accum<S> total;
    for (const auto& m : maps_) {
      if (!(m.prob > S(0))) throw config_error("map probabilities must be positive");
      total.add(m.prob);
    }
    S sum = total.get();
    if constexpr (std::is_same_v<S, double>) {
      if (std::abs(sum - 1.0) > 1e-12)
        throw config_error("map probabilities must sum to 1");
    } else {
      if (!(sum == S(1))) throw config_error("map probabilities must sum to 1");
    }
  }

  const std::vector<WeightedMap<S>>& maps() const { return maps_; }
  std::size_t size() const { return maps_.size(); }

  // Expected reciprocal expansion factor; the geometric ratio of the
  // invariant-density series when it is below 1.
  S contraction_ratio() const {
    detail::Accum<S> acc;
    for (const auto& m : maps_) acc.add(m.prob / m.map.value);
    return acc.get();
  }

  double min_beta() const {
    double b = to_double(maps_.front().map.value);
    for (const auto& m : maps_) b = std::min(b, to_double(m.map.value));
    return b;
  }

  double max_beta() const {
    double b = to_double(maps_.front().map.value);
    for (const auto& m : maps_) b = std::max(b, to_double(m.map.value));
    return b;
  }

 private:
  std::vector<WeightedMap<S>> maps_;
};

template <typename S>
struct MeanExpandingReport {
  S contraction_ratio;
  double log_mean;
  bool ratio_below_one;
  bool log_mean_positive;
};

template <typename S>
MeanExpandingReport<S> mean_expanding_check(const BetaSystem<S>& sys) {
  S r = sys.contraction_ratio();
  double lm = 0.0;
  for (const auto& m : sys.maps())
    lm += to_double(m.prob) * std::log(to_double(m.map.value));
  return {r, lm, r < S(1), lm > 0.0};
}

namespace detail {

// Appends the atoms of scale * L_b 1_[0,a) to an atom list and adds its
// constant part to base.  L_b 1_[0,a) = (floor(b*a)/b) 1 + (1/b) 1_[0,frac(b*a)).
template <typename S>
void pf_indicator_atoms(const Beta<S>& b, const S& a, const S& scale,
                        Accum<S>& base, std::vector<std::pair<S, S>>& atoms) {
  auto [d, frac] = digit_and_apply(b, a);
  const S& beta = b.value;
  base.add(scale * (S(static_cast<long long>(d)) / beta));
  if (!(frac == S(0))) atoms.push_back({frac, scale / beta});
}

// Appends atoms of scale * L_b f via the telescoping indicator decomposition
// f = sum_j (v_{j-1} - v_j) 1_[0, b_j), v_k = 0.
template <typename S>
void pf_step_atoms(const Beta<S>& b, const StepFunction<S>& f, const S& scale,
                   Accum<S>& base, std::vector<std::pair<S, S>>& atoms) {
  const auto& bp = f.breakpoints();
  const auto& v = f.values();
  const std::size_t k = v.size();
  for (std::size_t j = 1; j <= k; ++j) {
    S c = (j < k) ? v[j - 1] - v[j] : v[k - 1];
    if (c == S(0)) continue;
    pf_indicator_atoms(b, bp[j], scale * c, base, atoms);
  }
}

}  // namespace detail

// Transfer operator image of the indicator 1_[0,a) under a single beta-map.
template <typename S>
StepFunction<S> pf_indicator(const Beta<S>& b, const S& a) {
  detail::Accum<S> base;
  std::vector<std::pair<S, S>> atoms;
  detail::pf_indicator_atoms(b, a, S(1), base, atoms);
  return from_atoms(base.get(), std::move(atoms));
}

// Transfer operator image of a step function under a single beta-map.
template <typename S>
StepFunction<S> pf_apply(const Beta<S>& b, const StepFunction<S>& f) {
  detail::Accum<S> base;
  std::vector<std::pair<S, S>> atoms;
  atoms.reserve(f.cells());
  detail::pf_step_atoms(b, f, S(1), base, atoms);
  return from_atoms(base.get(), std::move(atoms));
}

// Probability-weighted transfer operator of the whole system.
template <typename S>
StepFunction<S> annealed_apply(const BetaSystem<S>& sys, const StepFunction<S>& f) {
  detail::Accum<S> base;
  std::vector<std::pair<S, S>> atoms;
  atoms.reserve(f.cells() * sys.size());
  for (const auto& m : sys.maps())
    detail::pf_step_atoms(m.map, f, m.prob, base, atoms);
  return from_atoms(base.get(), std::move(atoms));
}

// L1 defect of f as a fixed point of the annealed operator.
template <typename S>
S fixed_point_residual(const BetaSystem<S>& sys, const StepFunction<S>& f) {
  return l1_distance(annealed_apply(sys, f), f);
}

}  // namespace betadyn
