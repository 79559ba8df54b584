#pragma once

// Two-sided stationary driving paths for fiberwise computations.  A model is
// a bi-infinite slope sequence beta(theta^j omega) addressed by the absolute
// index j; shifting the sample point is an index offset, so shifted views of
// one path agree exactly with each other.  Seeded kinds derive every random
// draw from a counter hash of (seed, sample, index) and are reproducible
// without storing state; the Markov kind extends its state path lazily in
// both directions through the reversed kernel and shares the cache across
// shifted views.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <mutex>
#include <vector>

#include "betadyn/errors.hpp"
#include "betadyn/transfer.hpp"

namespace betadyn {

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// Uniform in [0,1) at an absolute path index, independent of evaluation order.
inline double index_uniform(std::uint64_t seed, std::uint64_t sample, long long index) {
  std::uint64_t ix = static_cast<std::uint64_t>(index) + 0x632BE59BD9B4E019ull;
  std::uint64_t h = splitmix64(seed ^ splitmix64(sample ^ splitmix64(ix)));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

inline double circle_frac(double x) {
  double f = x - std::floor(x);
  return (f >= 1.0) ? 0.0 : f;
}

}  // namespace detail

class NoiseModel {
 public:
  enum class Kind { periodic, rotation, two_sided_iid, two_sided_markov };

  static NoiseModel periodic(std::vector<double> betas) {
    if (betas.empty()) throw config_error("periodic path needs at least one slope");
    for (double b : betas)
      if (!(b > 0.0)) throw config_error("slopes must be positive");
    NoiseModel m;
    m.kind_ = Kind::periodic;
    m.betas_ = std::move(betas);
    return m;
  }

  static NoiseModel rotation(double alpha, double base, double amplitude,
                             double omega0 = 0.0) {
    if (!(base > 0.0) || amplitude < 0.0)
      throw config_error("rotation profile must keep slopes positive");
    NoiseModel m;
    m.kind_ = Kind::rotation;
    m.alpha_ = alpha;
    m.base_ = base;
    m.amplitude_ = amplitude;
    m.omega0_ = detail::circle_frac(omega0);
    return m;
  }

  static NoiseModel iid(BetaSystem<double> sys, std::uint64_t seed,
                        std::uint64_t sample = 0) {
    NoiseModel m;
    m.kind_ = Kind::two_sided_iid;
    m.system_ = std::make_shared<BetaSystem<double>>(std::move(sys));
    m.seed_ = seed;
    m.sample_ = sample;
    return m;
  }

  static NoiseModel markov(std::vector<double> states, Eigen::MatrixXd transition,
                           std::uint64_t seed, std::uint64_t sample = 0) {
    const auto n = static_cast<Eigen::Index>(states.size());
    if (n == 0) throw config_error("markov path needs at least one state");
    for (double b : states)
      if (!(b > 0.0)) throw config_error("slopes must be positive");
    if (transition.rows() != n || transition.cols() != n)
      throw config_error("transition matrix shape must match the state count");
    for (Eigen::Index i = 0; i < n; ++i) {
      double row = 0.0;
      for (Eigen::Index j = 0; j < n; ++j) {
        if (transition(i, j) < 0.0) throw config_error("transition entries must be nonnegative");
        row += transition(i, j);
      }
      if (std::abs(row - 1.0) > 1e-12) throw config_error("transition rows must sum to 1");
    }
    NoiseModel m;
    m.kind_ = Kind::two_sided_markov;
    m.betas_ = std::move(states);
    m.seed_ = seed;
    m.sample_ = sample;
    m.chain_ = std::make_shared<MarkovChain>(transition);
    return m;
  }

  Kind kind() const { return kind_; }
  std::size_t period() const {
    if (kind_ != Kind::periodic) throw config_error("period is defined for periodic paths only");
    return betas_.size();
  }

  double beta_at(long long j) const {
    const long long a = offset_ + j;
    switch (kind_) {
      case Kind::periodic: {
        auto q = static_cast<long long>(betas_.size());
        long long r = a % q;
        if (r < 0) r += q;
        return betas_[static_cast<std::size_t>(r)];
      }
      case Kind::rotation:
        return base_ + amplitude_ * detail::circle_frac(omega0_ + static_cast<double>(a) * alpha_);
      case Kind::two_sided_iid: {
        double u = detail::index_uniform(seed_, sample_, a);
        return system_->maps()[pick_map_(u)].map.value;
      }
      case Kind::two_sided_markov:
        return betas_[static_cast<std::size_t>(chain_->state_at(a, seed_, sample_))];
    }
    throw config_error("unknown path kind");
  }

  double backward(long long i) const { return beta_at(-i); }
  double forward(long long i) const { return beta_at(i); }

  NoiseModel shifted(long long k) const {
    NoiseModel m = *this;
    m.offset_ += k;
    return m;
  }

  NoiseModel resampled(std::uint64_t sample) const {
    if (kind_ != Kind::two_sided_iid && kind_ != Kind::two_sided_markov)
      throw config_error("only seeded paths can be resampled");
    NoiseModel m = *this;
    m.sample_ = sample;
    m.offset_ = 0;
    if (kind_ == Kind::two_sided_markov)
      m.chain_ = std::make_shared<MarkovChain>(chain_->transition);
    return m;
  }

  double beta_inf() const {
    switch (kind_) {
      case Kind::periodic:
      case Kind::two_sided_markov:
        return *std::min_element(betas_.begin(), betas_.end());
      case Kind::rotation:
        return base_;
      case Kind::two_sided_iid:
        return system_->min_beta();
    }
    return 0.0;
  }

  double beta_sup() const {
    switch (kind_) {
      case Kind::periodic:
      case Kind::two_sided_markov:
        return *std::max_element(betas_.begin(), betas_.end());
      case Kind::rotation:
        return base_ + amplitude_;
      case Kind::two_sided_iid:
        return system_->max_beta();
    }
    return 0.0;
  }

 private:
  // Lazily grown two-sided state path; one instance is shared by all shifted
  // views of the same sample so they see a single realization.
  struct MarkovChain {
    explicit MarkovChain(Eigen::MatrixXd P) : transition(std::move(P)) {
      const auto n = transition.rows();
      Eigen::MatrixXd A = transition.transpose() - Eigen::MatrixXd::Identity(n, n);
      A.row(n - 1).setOnes();
      Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
      b(n - 1) = 1.0;
      stationary = A.fullPivLu().solve(b);
      for (Eigen::Index i = 0; i < n; ++i)
        if (!(stationary(i) > 0.0))
          throw config_error("transition matrix must have a positive stationary vector");
      reversed.resize(n, n);
      for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
          reversed(i, j) = stationary(j) * transition(j, i) / stationary(i);
    }

    int state_at(long long a, std::uint64_t seed, std::uint64_t sample) {
      std::lock_guard<std::mutex> lock(mu);
      if (fwd.empty())
        fwd.push_back(draw_(stationary, detail::index_uniform(seed, sample, 0)));
      while (a >= static_cast<long long>(fwd.size())) {
        auto j = static_cast<long long>(fwd.size());
        fwd.push_back(draw_(transition.row(fwd.back()).transpose(),
                            detail::index_uniform(seed, sample, j)));
      }
      while (-a > static_cast<long long>(bwd.size())) {
        auto j = -static_cast<long long>(bwd.size()) - 1;
        int anchor = bwd.empty() ? fwd.front() : bwd.back();
        bwd.push_back(draw_(reversed.row(anchor).transpose(),
                            detail::index_uniform(seed, sample, j)));
      }
      return a >= 0 ? fwd[static_cast<std::size_t>(a)]
                    : bwd[static_cast<std::size_t>(-a - 1)];
    }

    Eigen::MatrixXd transition, reversed;
    Eigen::VectorXd stationary;
    std::mutex mu;
    std::vector<int> fwd, bwd;

   private:
    static int draw_(const Eigen::VectorXd& probs, double u) {
      double acc = 0.0;
      for (Eigen::Index i = 0; i + 1 < probs.size(); ++i) {
        acc += probs(i);
        if (u < acc) return static_cast<int>(i);
      }
      return static_cast<int>(probs.size() - 1);
    }
  };

  std::size_t pick_map_(double u) const {
    const auto& maps = system_->maps();
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < maps.size(); ++i) {
      acc += maps[i].prob;
      if (u < acc) return i;
    }
    return maps.size() - 1;
  }

  Kind kind_ = Kind::periodic;
  std::vector<double> betas_;
  double alpha_ = 0.0, base_ = 0.0, amplitude_ = 0.0, omega0_ = 0.0;
  std::shared_ptr<BetaSystem<double>> system_;
  std::shared_ptr<MarkovChain> chain_;
  std::uint64_t seed_ = 0, sample_ = 0;
  long long offset_ = 0;
};

}  // namespace betadyn
