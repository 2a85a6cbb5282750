#pragma once

// Synthetic single-shot IQ data and the readout benchmark estimators.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "shoelace/coupled_mode.hpp"
#include "shoelace/errors.hpp"

namespace shoelace {

struct IQPoint {
  double i = 0.0;
  double q = 0.0;

  friend bool operator==(const IQPoint&, const IQPoint&) = default;
};

struct ShotSet {
  std::vector<IQPoint> shots;
  std::vector<int> labels;    ///< prepared state, 0 or 1
  std::vector<bool> leaked;   ///< empty, or one flag per shot

  std::size_t size() const { return shots.size(); }
};

inline void validate(const ShotSet& s) {
  require(s.labels.size() == s.shots.size(), ErrorCategory::validation, "shot and label counts differ");
  require(s.leaked.empty() || s.leaked.size() == s.shots.size(), ErrorCategory::validation,
          "leak flags must cover every shot");
  for (int l : s.labels) require(l == 0 || l == 1, ErrorCategory::validation, "labels must be 0 or 1");
}

struct BlobModel {
  IQPoint mean0;
  IQPoint mean1;
  IQPoint mean2;          ///< leakage blob
  double sigma = 1.0;     ///< isotropic, per quadrature
  double leak_prob = 0.0; ///< share of |1> shots drawn from mean2
};

inline void validate(const BlobModel& m) {
  require(m.sigma >= 0 && std::isfinite(m.sigma), ErrorCategory::domain, "sigma must be non-negative");
  require(m.leak_prob >= 0 && m.leak_prob <= 1, ErrorCategory::domain, "leak_prob must lie in [0, 1]");
}

/// n_per_state shots of each prepared state, label-0 block first.
inline ShotSet synth_shots(const BlobModel& model, std::size_t n_per_state, std::uint64_t seed) {
  validate(model);
  require(n_per_state >= 1, ErrorCategory::domain, "need at least one shot per state");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::bernoulli_distribution leak(model.leak_prob);
  ShotSet out;
  out.shots.reserve(2 * n_per_state);
  out.labels.reserve(2 * n_per_state);
  out.leaked.reserve(2 * n_per_state);
  for (int label = 0; label < 2; ++label) {
    for (std::size_t k = 0; k < n_per_state; ++k) {
      const bool leaked = label == 1 && leak(rng);
      const IQPoint& c = label == 0 ? model.mean0 : (leaked ? model.mean2 : model.mean1);
      IQPoint p = c;
      if (model.sigma > 0) {
        p.i += model.sigma * gauss(rng);
        p.q += model.sigma * gauss(rng);
      }
      out.shots.push_back(p);
      out.labels.push_back(label);
      out.leaked.push_back(leaked);
    }
  }
  return out;
}

struct ReadoutBenchmarks {
  double f_ro = 0.0;
  double eps_ro = 1.0;
  std::optional<double> p_qnd;
  double threshold = 0.0;  ///< on the projection x = p . axis
  IQPoint axis{1.0, 0.0};  ///< unit vector from the label-0 mean toward the label-1 mean
};

/// Optimal single-threshold discrimination along the line joining the two
/// label means. Every split between consecutive sorted projections is tried.
inline ReadoutBenchmarks assignment_fidelity(const ShotSet& s) {
  validate(s);
  std::array<std::size_t, 2> count{0, 0};
  std::array<IQPoint, 2> mean{};
  for (std::size_t k = 0; k < s.size(); ++k) {
    const int l = s.labels[k];
    ++count[static_cast<std::size_t>(l)];
    mean[static_cast<std::size_t>(l)].i += s.shots[k].i;
    mean[static_cast<std::size_t>(l)].q += s.shots[k].q;
  }
  require(count[0] >= 1 && count[1] >= 1, ErrorCategory::estimation, "assignment fidelity needs both labels");
  for (int l = 0; l < 2; ++l) {
    mean[static_cast<std::size_t>(l)].i /= static_cast<double>(count[static_cast<std::size_t>(l)]);
    mean[static_cast<std::size_t>(l)].q /= static_cast<double>(count[static_cast<std::size_t>(l)]);
  }
  IQPoint axis{mean[1].i - mean[0].i, mean[1].q - mean[0].q};
  const double len = std::hypot(axis.i, axis.q);
  axis = len > 0 ? IQPoint{axis.i / len, axis.q / len} : IQPoint{1.0, 0.0};

  std::vector<std::pair<double, int>> proj(s.size());
  for (std::size_t k = 0; k < s.size(); ++k)
    proj[k] = {s.shots[k].i * axis.i + s.shots[k].q * axis.q, s.labels[k]};
  std::sort(proj.begin(), proj.end());

  // threshold below everything: all assigned 1, so p(1|0) = 1, p(0|1) = 0
  const double n0 = static_cast<double>(count[0]);
  const double n1 = static_cast<double>(count[1]);
  std::size_t below0 = 0;
  std::size_t below1 = 0;
  double best_err = 0.5;
  double best_thr = proj.front().first - 1.0;
  for (std::size_t k = 0; k < proj.size(); ++k) {
    (proj[k].second == 0 ? below0 : below1) += 1;
    if (k + 1 < proj.size() && proj[k + 1].first == proj[k].first) continue;
    const double err = 0.5 * ((n0 - static_cast<double>(below0)) / n0 + static_cast<double>(below1) / n1);
    if (err < best_err) {
      best_err = err;
      best_thr = k + 1 < proj.size() ? 0.5 * (proj[k].first + proj[k + 1].first) : proj[k].first + 1.0;
    }
  }
  ReadoutBenchmarks b;
  b.f_ro = 1.0 - best_err;
  b.eps_ro = 1.0 - b.f_ro;
  b.threshold = best_thr;
  b.axis = axis;
  return b;
}

/// [p(m1=0 | m2=1) + p(m1=1 | m2=0)] / 2 from paired outcome lists.
inline double pqnd(const std::vector<int>& m1, const std::vector<int>& m2) {
  require(m1.size() == m2.size() && !m1.empty(), ErrorCategory::domain, "outcome lists must be equal and non-empty");
  std::size_t n_m2_1 = 0, n_m2_0 = 0, n_01 = 0, n_10 = 0;
  for (std::size_t k = 0; k < m1.size(); ++k) {
    require((m1[k] == 0 || m1[k] == 1) && (m2[k] == 0 || m2[k] == 1), ErrorCategory::domain,
            "outcomes must be 0 or 1");
    if (m2[k] == 1) {
      ++n_m2_1;
      if (m1[k] == 0) ++n_01;
    } else {
      ++n_m2_0;
      if (m1[k] == 1) ++n_10;
    }
  }
  require(n_m2_1 > 0, ErrorCategory::undefined_conditional, "no shots with m2=1; p(m1=0|m2=1) is undefined");
  require(n_m2_0 > 0, ErrorCategory::undefined_conditional, "no shots with m2=0; p(m1=1|m2=0) is undefined");
  return 0.5 * (static_cast<double>(n_01) / static_cast<double>(n_m2_1) +
                static_cast<double>(n_10) / static_cast<double>(n_m2_0));
}

/// Outcome pairs of an ideal pi-pulse QND experiment in which each m2 fails
/// to flip with probability `violation`; the expected pqnd is 1 - violation.
inline std::pair<std::vector<int>, std::vector<int>> synth_qnd_outcomes(double violation, std::size_t n,
                                                                        std::uint64_t seed) {
  require(violation >= 0 && violation <= 1, ErrorCategory::domain, "violation must lie in [0, 1]");
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution bit(0.5);
  std::bernoulli_distribution fail_flip(violation);
  std::vector<int> m1(n), m2(n);
  for (std::size_t k = 0; k < n; ++k) {
    m1[k] = bit(rng) ? 1 : 0;
    m2[k] = fail_flip(rng) ? m1[k] : 1 - m1[k];
  }
  return {std::move(m1), std::move(m2)};
}

/// Ring-down time for the intra-resonator photon number to fall by `ratio`.
inline double depletion_time(double kappa_eff, double ratio) {
  require(kappa_eff > 0 && std::isfinite(kappa_eff), ErrorCategory::domain, "kappa_eff must be positive");
  require(std::isfinite(ratio), ErrorCategory::domain, "ratio must be finite");
  if (ratio <= 1.0) return 0.0;
  return std::log(ratio) / (kTwoPi * kappa_eff);
}

// ---------------------------------------------------------------------------
// Grid sweeps over blob-model parameters

struct SweepAxis {
  std::string name;  ///< mean{0,1,2}_{i,q}, sigma or leak_prob
  std::vector<double> values;
};

struct SweepPoint {
  std::vector<double> coords;  ///< one value per axis
  ReadoutBenchmarks benchmarks;
};

inline void set_blob_parameter(BlobModel& m, const std::string& name, double v) {
  if (name == "mean0_i") m.mean0.i = v;
  else if (name == "mean0_q") m.mean0.q = v;
  else if (name == "mean1_i") m.mean1.i = v;
  else if (name == "mean1_q") m.mean1.q = v;
  else if (name == "mean2_i") m.mean2.i = v;
  else if (name == "mean2_q") m.mean2.q = v;
  else if (name == "sigma") m.sigma = v;
  else if (name == "leak_prob") m.leak_prob = v;
  else fail(ErrorCategory::validation, "unknown blob-model parameter '" + name + "'");
}

/// Full Cartesian sweep, last axis fastest. Grid point k uses seed + k.
inline std::vector<SweepPoint> sweep_readout(const BlobModel& base, const std::vector<SweepAxis>& axes,
                                             std::size_t n_per_state, std::uint64_t seed) {
  std::size_t total = 1;
  for (const auto& a : axes) {
    require(!a.values.empty(), ErrorCategory::validation, "sweep axis '" + a.name + "' has no values");
    total *= a.values.size();
  }
  std::vector<SweepPoint> out;
  out.reserve(total);
  for (std::size_t k = 0; k < total; ++k) {
    BlobModel m = base;
    SweepPoint pt;
    std::size_t rem = k;
    pt.coords.resize(axes.size());
    for (std::size_t a = axes.size(); a-- > 0;) {
      const std::size_t idx = rem % axes[a].values.size();
      rem /= axes[a].values.size();
      pt.coords[a] = axes[a].values[idx];
      set_blob_parameter(m, axes[a].name, pt.coords[a]);
    }
    pt.benchmarks = assignment_fidelity(synth_shots(m, n_per_state, seed + k));
    out.push_back(std::move(pt));
  }
  return out;
}

}  // namespace shoelace
