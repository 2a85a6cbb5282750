#pragma once

// Transmon levels in the charge basis, spectroscopy inversion to (E_J, E_c),
// junction-resistance targeting and a closed-loop laser-anneal controller.
// Energies are in frequency units (E/h, Hz).

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "shoelace/errors.hpp"

namespace shoelace {

inline constexpr int kDefaultChargeCutoff = 30;
inline constexpr double kTransmonRatioFloor = 20.0;

struct TransmonSpectrum {
  double f_q = 0.0;    ///< E1 - E0 [Hz]
  double alpha = 0.0;  ///< (E2 - E1) - (E1 - E0) [Hz]
};

struct TransmonRecord {
  std::string id;
  double f_q = 0.0;
  double alpha = 0.0;
  double e_j = 0.0;
  double e_c = 0.0;
  double r_j = 0.0;  ///< junction normal-state resistance [Ohm]
};

inline void validate(const TransmonRecord& t, double ratio_floor = kTransmonRatioFloor) {
  require(t.f_q > 0 && t.alpha < 0 && t.e_j > 0 && t.e_c > 0, ErrorCategory::validation,
          "transmon " + t.id + ": need f_q > 0, alpha < 0, e_j > 0, e_c > 0");
  require(t.e_j / t.e_c > ratio_floor, ErrorCategory::validation,
          "transmon " + t.id + ": e_j/e_c below the transmon-regime floor");
}

namespace detail {

struct TransmonLevels {
  std::array<double, 3> energy{};
  // <k| dH/dE_c |k> and <k| dH/dE_J |k> for the three lowest levels
  std::array<double, 3> d_ec{};
  std::array<double, 3> d_ej{};
  double edge_population = 0.0;
};

// Charge basis n = -N..N at zero offset charge:
//   H = sum 4 E_c n^2 |n><n| - E_J/2 (|n><n+1| + h.c.)
// H commutes with n -> -n, so it splits into an even block over
// {|0>, (|n>+|-n>)/sqrt2} and an odd block over (|n>-|-n>)/sqrt2. Solving the
// blocks separately also avoids the near-degenerate +-n pairs on which
// Eigen's tridiagonal QL fails to converge. Matrices are in units of E_c.
inline TransmonLevels transmon_levels(double e_j, double e_c, int cutoff) {
  const double ratio = e_j / e_c;
  struct Level {
    double lambda, charge, hop, edge;
  };
  std::vector<Level> levels;
  for (int parity = 0; parity < 2; ++parity) {
    const int first = parity;  // odd block has no n = 0
    const int dim = cutoff + 1 - first;
    Eigen::VectorXd diag(dim);
    Eigen::VectorXd coupling = Eigen::VectorXd::Ones(dim - 1);
    if (parity == 0) coupling(0) = std::sqrt(2.0);
    for (int k = 0; k < dim; ++k) {
      const double n = k + first;
      diag(k) = 4.0 * n * n;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver;
    solver.computeFromTridiagonal(diag, (-0.5 * ratio) * coupling, Eigen::ComputeEigenvectors);
    require(solver.info() == Eigen::Success, ErrorCategory::accuracy, "transmon diagonalization failed");
    for (int level = 0; level < std::min(3, dim); ++level) {
      const auto v = solver.eigenvectors().col(level);
      Level l{solver.eigenvalues()(level), 0.0, 0.0, v(dim - 1) * v(dim - 1)};
      for (int k = 0; k < dim; ++k) {
        const double n = k + first;
        l.charge += 4.0 * n * n * v(k) * v(k);
        if (k + 1 < dim) l.hop -= coupling(k) * v(k) * v(k + 1);
      }
      levels.push_back(l);
    }
  }
  std::sort(levels.begin(), levels.end(), [](const Level& x, const Level& y) { return x.lambda < y.lambda; });
  TransmonLevels out;
  for (std::size_t level = 0; level < 3; ++level) {
    out.energy[level] = e_c * levels[level].lambda;
    out.d_ec[level] = levels[level].charge;
    out.d_ej[level] = levels[level].hop;
    out.edge_population = std::max(out.edge_population, levels[level].edge);
  }
  return out;
}

}  // namespace detail

/// Exact f_q and alpha by diagonalizing the charge-basis Hamiltonian.
inline TransmonSpectrum transmon_spectrum(double e_j, double e_c, int cutoff = kDefaultChargeCutoff) {
  require(e_j > 0 && e_c > 0 && std::isfinite(e_j) && std::isfinite(e_c), ErrorCategory::domain,
          "transmon energies must be positive");
  require(cutoff >= 10, ErrorCategory::domain, "charge cutoff must be at least 10");
  const auto lv = detail::transmon_levels(e_j, e_c, cutoff);
  require(lv.edge_population <= 1e-10, ErrorCategory::accuracy,
          "charge cutoff " + std::to_string(cutoff) + " truncates the low levels; increase it");
  const double f01 = lv.energy[1] - lv.energy[0];
  const double f12 = lv.energy[2] - lv.energy[1];
  return {f01, f12 - f01};
}

/// Leading-order asymptotic qubit frequency sqrt(8 E_J E_c) - E_c.
inline double transmon_fq_asymptotic(double e_j, double e_c) { return std::sqrt(8.0 * e_j * e_c) - e_c; }

struct InversionOptions {
  double tolerance = 1.0;  ///< residual target on f_q and alpha [Hz]
  int max_iterations = 100;
  double ratio_floor = kTransmonRatioFloor;
  int cutoff = kDefaultChargeCutoff;
};

struct TransmonEnergies {
  double e_j = 0.0;
  double e_c = 0.0;
};

/// Newton iteration on (f_q, alpha)(E_J, E_c) from the asymptotic seed
/// e_c = -alpha, e_j = (f_q - alpha)^2 / (-8 alpha). The Jacobian comes from
/// Hellmann-Feynman expectation values, which are exact for this linear
/// Hamiltonian.
inline TransmonEnergies invert_spectroscopy(double f_q, double alpha, const InversionOptions& opts = {}) {
  require(f_q > 0 && std::isfinite(f_q), ErrorCategory::domain, "f_q must be positive");
  require(alpha < 0 && std::isfinite(alpha), ErrorCategory::domain, "alpha must be negative");
  require(-alpha < f_q, ErrorCategory::domain, "|alpha| must be below f_q");

  Eigen::Vector2d x{(f_q - alpha) * (f_q - alpha) / (-8.0 * alpha), -alpha};  // (e_j, e_c)
  const auto residual = [&](const Eigen::Vector2d& v, detail::TransmonLevels& lv) {
    lv = detail::transmon_levels(v(0), v(1), opts.cutoff);
    const double f01 = lv.energy[1] - lv.energy[0];
    const double a = lv.energy[2] - 2.0 * lv.energy[1] + lv.energy[0];
    return Eigen::Vector2d{f01 - f_q, a - alpha};
  };
  detail::TransmonLevels lv;
  Eigen::Vector2d r = residual(x, lv);
  for (int it = 0; it < opts.max_iterations; ++it) {
    if (std::abs(r(0)) < opts.tolerance && std::abs(r(1)) < opts.tolerance) {
      if (lv.edge_population > 1e-10) break;
      if (x(0) / x(1) < opts.ratio_floor * (1.0 - 1e-9)) {
        fail(ErrorCategory::inversion_failed, "solution e_j/e_c = " + std::to_string(x(0) / x(1)) +
                                                  " is outside the transmon regime");
      }
      return {x(0), x(1)};
    }
    Eigen::Matrix2d jac;
    jac(0, 0) = lv.d_ej[1] - lv.d_ej[0];
    jac(0, 1) = lv.d_ec[1] - lv.d_ec[0];
    jac(1, 0) = lv.d_ej[2] - 2.0 * lv.d_ej[1] + lv.d_ej[0];
    jac(1, 1) = lv.d_ec[2] - 2.0 * lv.d_ec[1] + lv.d_ec[0];
    const Eigen::Vector2d step = jac.fullPivLu().solve(-r);
    if (!step.allFinite()) break;
    // backtrack to keep both energies positive and the residual shrinking
    double t = 1.0;
    bool moved = false;
    for (int k = 0; k < 40; ++k, t *= 0.5) {
      const Eigen::Vector2d trial = x + t * step;
      if (trial(0) <= 0 || trial(1) <= 0) continue;
      detail::TransmonLevels lv_trial;
      const Eigen::Vector2d r_trial = residual(trial, lv_trial);
      if (r_trial.norm() < r.norm() || k == 39) {
        x = trial;
        r = r_trial;
        lv = lv_trial;
        moved = true;
        break;
      }
    }
    if (!moved) break;
  }
  fail(ErrorCategory::inversion_failed, "spectroscopy inversion did not converge for f_q = " + std::to_string(f_q) +
                                            ", alpha = " + std::to_string(alpha));
}

/// E_J giving qubit frequency f_q at fixed E_c (1-D Newton).
inline double ej_for_fq(double f_q, double e_c, const InversionOptions& opts = {}) {
  require(f_q > 0 && e_c > 0, ErrorCategory::domain, "f_q and e_c must be positive");
  double e_j = (f_q + e_c) * (f_q + e_c) / (8.0 * e_c);
  for (int it = 0; it < opts.max_iterations; ++it) {
    const auto lv = detail::transmon_levels(e_j, e_c, opts.cutoff);
    const double r = lv.energy[1] - lv.energy[0] - f_q;
    if (std::abs(r) < 1e-3 * opts.tolerance) return e_j;
    const double slope = lv.d_ej[1] - lv.d_ej[0];
    double next = e_j - r / slope;
    if (!(next > 0) || !std::isfinite(next)) next = 0.5 * e_j;
    if (next == e_j) return e_j;
    e_j = next;
  }
  fail(ErrorCategory::inversion_failed, "could not find E_J for f_q = " + std::to_string(f_q));
}

/// Junction resistance that lowers f_q_now to f_q_target at constant E_c,
/// using E_J proportional to 1/R_J.
inline double rj_target(double r_now, double f_q_now, double f_q_target, double e_c,
                        const InversionOptions& opts = {}) {
  require(r_now > 0 && f_q_now > 0 && f_q_target > 0 && e_c > 0, ErrorCategory::domain,
          "rj_target inputs must be positive");
  require(f_q_target <= f_q_now, ErrorCategory::direction, "annealing can only lower f_q (raise R_J)");
  if (f_q_target == f_q_now) return r_now;
  return r_now * (ej_for_fq(f_q_now, e_c, opts) / ej_for_fq(f_q_target, e_c, opts));
}

inline double predict_fq(double r_j_measured, double r_j_reference, double e_j_reference, double e_c,
                         int cutoff = kDefaultChargeCutoff) {
  require(r_j_measured > 0 && r_j_reference > 0 && e_j_reference > 0 && e_c > 0, ErrorCategory::domain,
          "predict_fq inputs must be positive");
  return transmon_spectrum(e_j_reference * r_j_reference / r_j_measured, e_c, cutoff).f_q;
}

// ---------------------------------------------------------------------------
// Closed-loop anneal

/// Junction under laser exposure. `expose` applies one exposure at `power` and
/// returns the measured R/R0 afterwards.
class AnnealResponse {
 public:
  virtual ~AnnealResponse() = default;
  virtual double expose(double power, double seconds) = 0;
};

/// dR/R0 = c(P) log(1 + t/t0(P)). Switching power carries the accumulated
/// change over as an equivalent exposure time on the new curve.
class LogAnnealResponse : public AnnealResponse {
 public:
  struct Curve {
    double c = 0.0;   ///< dimensionless amplitude
    double t0 = 1.0;  ///< [s]
  };

  explicit LogAnnealResponse(std::map<double, Curve> curves) : curves_(std::move(curves)) {}

  double expose(double power, double seconds) override {
    const auto it = curves_.find(power);
    require(it != curves_.end(), ErrorCategory::domain, "no response curve for power " + std::to_string(power));
    const Curve& cv = it->second;
    if (cv.c <= 0) return 1.0 + change_;
    const double t_eq = cv.t0 * std::expm1(change_ / cv.c);
    change_ = cv.c * std::log1p((t_eq + seconds) / cv.t0);
    return 1.0 + change_;
  }

 private:
  std::map<double, Curve> curves_;
  double change_ = 0.0;
};

/// Response driven by a user callback (power, seconds) -> R/R0.
class FunctionAnnealResponse : public AnnealResponse {
 public:
  explicit FunctionAnnealResponse(std::function<double(double, double)> fn) : fn_(std::move(fn)) {}
  double expose(double power, double seconds) override { return fn_(power, seconds); }

 private:
  std::function<double(double, double)> fn_;
};

struct AnnealController {
  double initial_exposure = 1.0;   ///< first exposure at each power [s]
  double overshoot_factor = 1.1;   ///< applied to the extrapolated exposure
  double max_growth = 4.0;         ///< cap on exposure growth between cycles
  int max_cycles_per_power = 200;
};

struct AnnealConfig {
  double r0 = 0.0;        ///< resistance before annealing [Ohm]
  double r_target = 0.0;  ///< [Ohm]
  double exposure_threshold = 0.0;  ///< escalate once the expected next exposure exceeds this [s]
  std::vector<double> power_schedule;  ///< [W], in order of use
  AnnealController controller;
};

enum class AnnealStatus { success, power_exhausted };

inline std::string status_name(AnnealStatus s) { return s == AnnealStatus::success ? "success" : "power-exhausted"; }

struct AnnealStep {
  int cycle = 0;
  double power = 0.0;
  double exposure = 0.0;
  double r_over_r0 = 1.0;
  bool violation = false;
};

struct AnnealTrace {
  std::vector<AnnealStep> history;  ///< row 0 is the unexposed junction
  AnnealStatus status = AnnealStatus::power_exhausted;
  int violations = 0;
  std::vector<std::size_t> escalations;  ///< history index of the last cycle at each abandoned power

  double final_ratio() const { return history.back().r_over_r0; }
};

/// Exposure still needed at the current power to reach `target`, from the
/// segment history (t cumulative at this power, r). With a single exposure
/// the response is taken as linear in t; afterwards the last two points are
/// extrapolated linearly in log t.
inline double expected_next_exposure(const std::vector<std::pair<double, double>>& segment, double target) {
  if (segment.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  const auto& [t1, r1] = segment[segment.size() - 1];
  const auto& [t0, r0] = segment[segment.size() - 2];
  if (r1 >= target) return 0.0;
  const double inf = std::numeric_limits<double>::infinity();
  if (t0 <= 0.0) {
    const double rate = (r1 - r0) / (t1 - t0);
    return rate > 0 ? (target - r1) / rate : inf;
  }
  const double slope = (r1 - r0) / (std::log(t1) - std::log(t0));
  if (!(slope > 0)) return inf;
  const double log_needed = std::log(t1) + (target - r1) / slope;
  if (log_needed > 700.0) return inf;
  return std::exp(log_needed) - t1;
}

/// Expose, measure, extrapolate; escalate power when the expected exposure
/// exceeds the threshold and stop on reaching the target or running out of
/// powers. A reading below the running maximum is flagged, recorded at the
/// running maximum, and the next exposure is halved.
inline AnnealTrace anneal_closed_loop(const AnnealConfig& config, AnnealResponse& response) {
  require(config.r0 > 0 && config.r_target > 0, ErrorCategory::domain, "anneal resistances must be positive");
  require(config.exposure_threshold > 0, ErrorCategory::domain, "exposure threshold must be positive");
  require(config.controller.initial_exposure > 0, ErrorCategory::domain, "initial exposure must be positive");
  const double target = config.r_target / config.r0;
  AnnealTrace trace;
  trace.history.push_back({0, config.power_schedule.empty() ? 0.0 : config.power_schedule.front(), 0.0, 1.0, false});
  if (target <= 1.0) {
    trace.status = AnnealStatus::success;
    return trace;
  }
  const AnnealController& ctl = config.controller;
  double r = 1.0;
  int cycle = 0;
  for (double power : config.power_schedule) {
    // (t cumulative at this power, r); flagged readings stay out of it
    std::vector<std::pair<double, double>> segment{{0.0, r}};
    double elapsed = 0.0;
    double last_exposure = 0.0;
    bool halve_next = false;
    for (int k = 0; k < ctl.max_cycles_per_power; ++k) {
      double exposure = ctl.initial_exposure;
      if (segment.size() >= 2) {
        double needed = expected_next_exposure(segment, target) - (elapsed - segment.back().first);
        if (needed > config.exposure_threshold) break;
        if (!(needed > 0)) needed = last_exposure;  // flagged readings ran past the extrapolation
        exposure = std::min(needed * ctl.overshoot_factor, ctl.max_growth * last_exposure);
        exposure = std::min(exposure, config.exposure_threshold);
      }
      if (halve_next) exposure *= 0.5;
      halve_next = false;
      exposure = std::max(exposure, 1e-9 * ctl.initial_exposure);

      const double reading = response.expose(power, exposure);
      ++cycle;
      elapsed += exposure;
      last_exposure = exposure;
      AnnealStep step{cycle, power, exposure, reading, false};
      if (!(reading >= r)) {
        step.violation = true;
        step.r_over_r0 = r;
        ++trace.violations;
        halve_next = true;
        trace.history.push_back(step);
        continue;
      }
      r = reading;
      trace.history.push_back(step);
      segment.emplace_back(elapsed, r);
      if (r >= target) {
        trace.status = AnnealStatus::success;
        return trace;
      }
    }
    trace.escalations.push_back(trace.history.size() - 1);
  }
  trace.status = AnnealStatus::power_exhausted;
  return trace;
}

}  // namespace shoelace
