#pragma once

// Depth-synchronous propagation of weighted orbit atoms.  A layer is a set of
// atoms (point, w) with w a small vector of channel weights; advancing one
// depth maps every atom through every branch map and multiplies the channel
// vector by that map's factor matrix.  Layers start in exact sparse form and
// switch to a fixed dyadic grid when the atom count would blow up; the switch
// preserves channel mass exactly and every point move is charged to a running
// slack bound, so downstream certificates stay honest.

#include <Eigen/Dense>

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

#include "betadyn/beta_map.hpp"

namespace betadyn {

template <int NC>
struct ChannelMap {
  Beta<double> map;
  Eigen::Matrix<double, NC, NC> factor;
};

struct LayerOptions {
  std::size_t exact_limit = 200000;  // max atoms kept in exact sparse form
  int grid_log2 = 21;                // grid resolution after the switch
  double weight_floor = 0.0;         // exact-mode drop threshold, 0 disables
};

template <int NC>
class LayerEngine {
 public:
  using Vec = Eigen::Matrix<double, NC, 1>;
  using Atom = std::pair<double, Vec>;

  LayerEngine(std::vector<ChannelMap<NC>> maps, const Vec& seed,
              LayerOptions opt = {})
      : maps_(std::move(maps)), opt_(opt) {
    atoms_.push_back({1.0, seed});
    slack_.setZero();
    dropped_.setZero();
  }

  int depth() const { return depth_; }
  bool on_grid() const { return on_grid_; }
  bool hit_zero() const { return hit_zero_; }
  std::size_t atom_count() const { return on_grid_ ? occupied_.size() : atoms_.size(); }
  double grid_cell() const { return 1.0 / static_cast<double>(grid_size_()); }

  // Accumulated upper bound on the L1 effect of all point moves, per channel.
  const Vec& slack() const { return slack_; }
  // Channel mass removed by the weight floor, per channel.
  const Vec& dropped() const { return dropped_; }

  Vec abs_mass() const {
    Vec m = Vec::Zero();
    for_each_atom([&](double, const Vec& w) { m += w.cwiseAbs(); });
    return m;
  }

  Vec layer_integral() const {
    Vec m = Vec::Zero();
    for_each_atom([&](double x, const Vec& w) { m += x * w; });
    return m;
  }

  template <class F>
  void for_each_atom(F&& f) const {
    if (!on_grid_) {
      for (const auto& a : atoms_) f(a.first, a.second);
    } else {
      const double g = grid_cell();
      for (std::uint32_t j : occupied_) f((j + 0.5) * g, grid_[j]);
    }
  }

  std::vector<Atom> layer_atoms() const {
    std::vector<Atom> out;
    out.reserve(atom_count());
    for_each_atom([&](double x, const Vec& w) { out.push_back({x, w}); });
    return out;
  }

  // Adds the current layer into a split accumulator: sparse part while exact,
  // dense per-bin part once on the grid (allocated on first use).
  void accumulate(std::vector<Atom>& exact_acc, std::vector<Vec>& grid_acc) const {
    if (!on_grid_) {
      exact_acc.insert(exact_acc.end(), atoms_.begin(), atoms_.end());
    } else {
      if (grid_acc.empty()) grid_acc.assign(grid_size_(), Vec::Zero());
      for (std::uint32_t j : occupied_) grid_acc[j] += grid_[j];
    }
  }

  void step() {
    if (!on_grid_ && atoms_.size() * maps_.size() > opt_.exact_limit) to_grid_();
    if (on_grid_) {
      step_grid_();
    } else {
      step_exact_();
    }
    ++depth_;
  }

 private:
  std::size_t grid_size_() const { return std::size_t(1) << opt_.grid_log2; }

  void to_grid_() {
    const std::size_t G = grid_size_();
    const double g = 1.0 / static_cast<double>(G);
    grid_.assign(G, Vec::Zero());
    next_grid_.assign(G, Vec::Zero());
    occupied_.clear();
    for (const auto& [x, w] : atoms_) {
      std::size_t j = std::min(G - 1, static_cast<std::size_t>(x * G));
      slack_ += std::abs(x - (j + 0.5) * g) * w.cwiseAbs();
      if (grid_[j].isZero(0.0)) occupied_.push_back(static_cast<std::uint32_t>(j));
      grid_[j] += w;
    }
    std::sort(occupied_.begin(), occupied_.end());
    occupied_.erase(std::unique(occupied_.begin(), occupied_.end()), occupied_.end());
    atoms_.clear();
    atoms_.shrink_to_fit();
    on_grid_ = true;
  }

  void step_exact_() {
    std::vector<Atom> next;
    next.reserve(atoms_.size() * maps_.size());
    for (const auto& [x, w] : atoms_) {
      for (const auto& m : maps_) {
        auto split = digit_and_apply(m.map, x);
        Vec cw = m.factor * w;
        if (split.frac == 0.0) {
          hit_zero_ = true;
          continue;
        }
        if (opt_.weight_floor > 0.0 &&
            cw.cwiseAbs().maxCoeff() < opt_.weight_floor) {
          dropped_ += cw.cwiseAbs();
          continue;
        }
        next.push_back({split.frac, cw});
      }
    }
    std::sort(next.begin(), next.end(),
              [](const Atom& a, const Atom& b) { return a.first < b.first; });
    atoms_.clear();
    for (auto& a : next) {
      if (!atoms_.empty() && atoms_.back().first == a.first) {
        atoms_.back().second += a.second;
      } else {
        atoms_.push_back(std::move(a));
      }
    }
  }

  void step_grid_() {
    const std::size_t G = grid_size_();
    const double g = 1.0 / static_cast<double>(G);
    std::vector<std::uint32_t> next_occ;
    next_occ.reserve(occupied_.size() * maps_.size());
    for (std::uint32_t j : occupied_) {
      const double x = (j + 0.5) * g;
      const Vec& w = grid_[j];
      for (const auto& m : maps_) {
        auto split = digit_and_apply(m.map, x);
        if (split.frac == 0.0) {
          hit_zero_ = true;
          continue;
        }
        Vec cw = m.factor * w;
        std::size_t b = std::min(G - 1, static_cast<std::size_t>(split.frac * G));
        slack_ += std::abs(split.frac - (b + 0.5) * g) * cw.cwiseAbs();
        if (next_grid_[b].isZero(0.0)) next_occ.push_back(static_cast<std::uint32_t>(b));
        next_grid_[b] += cw;
      }
    }
    for (std::uint32_t j : occupied_) grid_[j].setZero();
    grid_.swap(next_grid_);
    std::sort(next_occ.begin(), next_occ.end());
    next_occ.erase(std::unique(next_occ.begin(), next_occ.end()), next_occ.end());
    occupied_ = std::move(next_occ);
  }

  std::vector<ChannelMap<NC>> maps_;
  LayerOptions opt_;
  std::vector<Atom> atoms_;        // exact mode
  std::vector<Vec> grid_, next_grid_;  // grid mode
  std::vector<std::uint32_t> occupied_;
  Vec slack_, dropped_;
  int depth_ = 0;
  bool on_grid_ = false;
  bool hit_zero_ = false;
};

}  // namespace betadyn
