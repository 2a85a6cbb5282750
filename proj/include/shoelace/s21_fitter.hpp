#pragma once

// Extraction of pair parameters from sampled feedline transmission:
// background removal, seeding from the dips, and damped least squares on the
// stacked real/imaginary residuals.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "shoelace/coupled_mode.hpp"
#include "shoelace/errors.hpp"

namespace shoelace {

inline constexpr std::size_t kMinFitPoints = 16;

struct TransmissionTrace {
  std::vector<double> freqs;           ///< strictly increasing [Hz]
  std::vector<ComplexPoint> values;    ///< S21, same length as freqs
  std::string source_id;
  std::optional<QubitState> qubit_state;
  std::vector<std::string> warnings;

  std::size_t size() const { return freqs.size(); }
};

inline void validate_trace(const TransmissionTrace& t, std::size_t min_points = kMinFitPoints) {
  require(t.freqs.size() == t.values.size(), ErrorCategory::validation, "trace frequency/value lengths differ");
  require(t.freqs.size() >= min_points, ErrorCategory::validation,
          "trace has " + std::to_string(t.freqs.size()) + " points, need at least " + std::to_string(min_points));
  for (std::size_t k = 0; k < t.freqs.size(); ++k) {
    require(std::isfinite(t.freqs[k]) && std::isfinite(t.values[k].real()) && std::isfinite(t.values[k].imag()),
            ErrorCategory::validation, "trace contains non-finite values");
    if (k > 0)
      require(t.freqs[k] > t.freqs[k - 1], ErrorCategory::validation, "trace frequencies must be strictly increasing");
  }
}

enum class S21Model { ideal, full };

inline ComplexPoint s21(S21Model model, double f, const PairParams& p) {
  return model == S21Model::ideal ? s21_ideal(f, p) : s21_full(f, p);
}

inline std::vector<double> linspace(double start, double stop, std::size_t n) {
  std::vector<double> out(n);
  for (std::size_t k = 0; k < n; ++k)
    out[k] = n == 1 ? start : start + (stop - start) * static_cast<double>(k) / static_cast<double>(n - 1);
  return out;
}

struct TraceSynthesis {
  S21Model model = S21Model::ideal;
  QubitState state = QubitState::ground;  ///< excited applies the chi pull to f_r
  double noise_sigma = 0.0;                ///< per quadrature
  std::uint64_t seed = 0;
  Complex gain{1.0, 0.0};                  ///< instrument background g exp(-2 pi i f tau)
  double delay = 0.0;                      ///< tau [s]
};

/// Synthetic transmission trace of a pair, optionally with background and
/// additive complex Gaussian noise.
inline TransmissionTrace synthesize_trace(const PairParams& p, std::span<const double> freqs,
                                          const TraceSynthesis& opts = {}) {
  PairParams q = p;
  if (opts.state == QubitState::excited) q.f_r += p.chi;
  std::mt19937_64 rng(opts.seed);
  std::normal_distribution<double> noise(0.0, opts.noise_sigma > 0 ? opts.noise_sigma : 1.0);
  TransmissionTrace t;
  t.freqs.assign(freqs.begin(), freqs.end());
  t.values.reserve(freqs.size());
  t.qubit_state = opts.state;
  t.source_id = "synthetic";
  for (double f : freqs) {
    Complex s = s21(opts.model, f, q);
    if (opts.noise_sigma > 0) s += Complex(noise(rng), noise(rng)) * opts.noise_sigma / noise.stddev();
    const double phase = -kTwoPi * std::fmod(f * opts.delay, 1.0);
    t.values.push_back(s * opts.gain * std::polar(1.0, phase));
  }
  return t;
}

// ---------------------------------------------------------------------------
// Background

struct Background {
  Complex gain{1.0, 0.0};
  double delay = 0.0;        ///< [s]
  double wing_spread = 0.0;  ///< std/mean of |S21| on the wings
  bool reliable = true;

  Complex at(double f) const { return gain * std::polar(1.0, -kTwoPi * std::fmod(f * delay, 1.0)); }
};

struct BaselineOptions {
  double wing_fraction = 0.1;     ///< outer fraction of the span on each side
  double max_wing_spread = 0.02;  ///< above this the wings likely hold a resonance
};

namespace detail {

inline std::vector<double> unwrapped_phase(std::span<const ComplexPoint> v) {
  std::vector<double> out(v.size());
  double offset = 0.0;
  for (std::size_t k = 0; k < v.size(); ++k) {
    const double raw = std::arg(v[k]);
    if (k > 0) {
      double step = raw + offset - out[k - 1];
      while (step > std::numbers::pi) {
        offset -= kTwoPi;
        step -= kTwoPi;
      }
      while (step < -std::numbers::pi) {
        offset += kTwoPi;
        step += kTwoPi;
      }
    }
    out[k] = raw + offset;
  }
  return out;
}

}  // namespace detail

/// Constant complex gain and electrical delay fitted on the off-resonant
/// wings. The delay comes from a pooled phase slope (separate intercept per
/// wing), so no unwrapping across the resonant middle is needed.
inline Background estimate_background(const TransmissionTrace& t, const BaselineOptions& opts = {}) {
  validate_trace(t, 4);
  const double f0 = t.freqs.front();
  const double span = t.freqs.back() - f0;
  std::size_t left_end = 0;
  while (left_end < t.size() && t.freqs[left_end] <= f0 + opts.wing_fraction * span) ++left_end;
  std::size_t right_begin = t.size();
  while (right_begin > 0 && t.freqs[right_begin - 1] >= t.freqs.back() - opts.wing_fraction * span) --right_begin;
  left_end = std::max<std::size_t>(left_end, 2);
  right_begin = std::min(right_begin, t.size() - 2);

  const std::array<std::pair<std::size_t, std::size_t>, 2> wings{{{0, left_end}, {right_begin, t.size()}}};
  double sxx = 0.0;
  double sxy = 0.0;
  for (const auto& [b, e] : wings) {
    const std::span<const ComplexPoint> vals(t.values.data() + b, e - b);
    const auto phase = detail::unwrapped_phase(vals);
    double fm = 0.0;
    double pm = 0.0;
    for (std::size_t k = 0; k < phase.size(); ++k) {
      fm += t.freqs[b + k] - f0;
      pm += phase[k];
    }
    fm /= static_cast<double>(phase.size());
    pm /= static_cast<double>(phase.size());
    for (std::size_t k = 0; k < phase.size(); ++k) {
      const double df = t.freqs[b + k] - f0 - fm;
      sxx += df * df;
      sxy += df * (phase[k] - pm);
    }
  }
  Background bg;
  bg.delay = sxx > 0 ? -sxy / sxx / kTwoPi : 0.0;

  Complex rotated{0.0, 0.0};
  double amp_sum = 0.0;
  double amp_sq = 0.0;
  std::size_t count = 0;
  for (const auto& [b, e] : wings) {
    for (std::size_t k = b; k < e; ++k) {
      rotated += t.values[k] * std::polar(1.0, kTwoPi * std::fmod(t.freqs[k] * bg.delay, 1.0));
      const double a = std::abs(t.values[k]);
      amp_sum += a;
      amp_sq += a * a;
      ++count;
    }
  }
  const double mean_amp = amp_sum / static_cast<double>(count);
  const double var = std::max(0.0, amp_sq / static_cast<double>(count) - mean_amp * mean_amp);
  bg.gain = std::polar(mean_amp, std::arg(rotated));
  bg.wing_spread = mean_amp > 0 ? std::sqrt(var) / mean_amp : std::numeric_limits<double>::infinity();
  bg.reliable = bg.wing_spread <= opts.max_wing_spread;
  return bg;
}

/// Divides out the fitted background so the wings sit at 1 + 0i. A
/// resonance-contaminated wing only adds a warning.
inline TransmissionTrace correct_baseline(const TransmissionTrace& t, const BaselineOptions& opts = {}) {
  const Background bg = estimate_background(t, opts);
  TransmissionTrace out = t;
  for (std::size_t k = 0; k < t.size(); ++k) out.values[k] = t.values[k] / bg.at(t.freqs[k]);
  if (!bg.reliable) {
    out.warnings.push_back("baseline-unreliable: wing amplitude spread " + std::to_string(bg.wing_spread) +
                           " exceeds " + std::to_string(opts.max_wing_spread));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Initial guess

struct Dip {
  std::size_t index = 0;
  double frequency = 0.0;
  double depth = 0.0;       ///< 1 - |S21|^2 at the minimum
  double prominence = 0.0;
  double width = 0.0;       ///< full width at half depth [Hz]
};

namespace detail {

inline double noise_estimate(std::span<const ComplexPoint> v) {
  // median absolute first difference; for white noise E|dS| ~ sigma*sqrt(pi)
  std::vector<double> d;
  d.reserve(v.size());
  for (std::size_t k = 1; k < v.size(); ++k) d.push_back(std::abs(v[k] - v[k - 1]));
  if (d.empty()) return 0.0;
  std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2), d.end());
  return d[d.size() / 2] / 1.6651;  // median of a Rayleigh(sigma*sqrt2) variable
}

inline std::vector<double> moving_average(const std::vector<double>& x, std::size_t half) {
  if (half == 0) return x;
  std::vector<double> out(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) {
    const std::size_t b = k >= half ? k - half : 0;
    const std::size_t e = std::min(x.size(), k + half + 1);
    out[k] = std::accumulate(x.begin() + static_cast<std::ptrdiff_t>(b), x.begin() + static_cast<std::ptrdiff_t>(e), 0.0) /
             static_cast<double>(e - b);
  }
  return out;
}

inline double half_depth_crossing(const std::vector<double>& depth, const std::vector<double>& f, std::size_t peak,
                                  int dir) {
  const double half = 0.5 * depth[peak];
  std::size_t k = peak;
  while (true) {
    const std::size_t next = dir < 0 ? k - 1 : k + 1;
    if ((dir < 0 && k == 0) || (dir > 0 && k + 1 >= depth.size())) return std::abs(f[k] - f[peak]);
    if (depth[next] > depth[k] && k != peak) return std::abs(f[k] - f[peak]);  // rising into another dip
    if (depth[next] <= half) {
      const double t = (depth[k] - half) / (depth[k] - depth[next]);
      return std::abs(f[k] + t * (f[next] - f[k]) - f[peak]);
    }
    k = next;
  }
}

}  // namespace detail

/// Local minima of |S21| ranked by prominence of the power dip 1 - |S21|^2.
inline std::vector<Dip> find_dips(const TransmissionTrace& t, std::size_t max_dips = 2) {
  validate_trace(t);
  const double sigma = detail::noise_estimate(t.values);
  const std::size_t half = sigma > 1e-6 ? 2 : 0;
  std::vector<double> raw(t.size());
  for (std::size_t k = 0; k < t.size(); ++k) raw[k] = 1.0 - std::norm(t.values[k]);
  const std::vector<double> depth = detail::moving_average(raw, half);
  const double threshold = std::max(0.02, 8.0 * 2.0 * sigma / std::sqrt(2.0 * static_cast<double>(half) + 1.0));

  std::vector<Dip> dips;
  for (std::size_t k = 0; k < depth.size(); ++k) {
    const bool left_ok = k == 0 || depth[k] > depth[k - 1];
    const bool right_ok = k + 1 == depth.size() || depth[k] >= depth[k + 1];
    if (!left_ok || !right_ok) continue;
    double left_min = depth[k];
    std::size_t i = k;
    while (i > 0 && depth[i - 1] <= depth[k]) left_min = std::min(left_min, depth[--i]);
    double right_min = depth[k];
    i = k;
    while (i + 1 < depth.size() && depth[i + 1] <= depth[k]) right_min = std::min(right_min, depth[++i]);
    const double prominence = depth[k] - std::max(left_min, right_min);
    if (prominence < threshold) continue;
    Dip d;
    d.index = k;
    d.frequency = t.freqs[k];
    d.depth = depth[k];
    d.prominence = prominence;
    dips.push_back(d);
  }
  std::sort(dips.begin(), dips.end(), [](const Dip& a, const Dip& b) { return a.prominence > b.prominence; });
  if (dips.size() > max_dips) dips.resize(max_dips);
  std::sort(dips.begin(), dips.end(), [](const Dip& a, const Dip& b) { return a.frequency < b.frequency; });

  const double spacing = (t.freqs.back() - t.freqs.front()) / static_cast<double>(t.size() - 1);
  for (auto& d : dips) {
    const double lw = detail::half_depth_crossing(depth, t.freqs, d.index, -1);
    const double rw = detail::half_depth_crossing(depth, t.freqs, d.index, +1);
    d.width = std::max(2.0 * std::min(lw, rw), spacing);
    // smoothing broadens narrow dips by about the window width
    if (half > 0) d.width = std::max(spacing, d.width - 2.0 * static_cast<double>(half) * spacing * 0.5);
  }
  return dips;
}

/// Seeds pair parameters from the dips of a baseline-corrected trace. Two
/// dips are read as the two hybridized modes (f_k - i w_k/2) and mapped back
/// to (f_r, f_p, J, kappa) through the trace and determinant of the
/// coupled-mode matrix; a single dip seeds a near-matched pair.
inline PairParams initial_guess(const TransmissionTrace& t) {
  const auto dips = find_dips(t, 2);
  require(!dips.empty(), ErrorCategory::no_resonance, "no qualifying dip in the trace");
  PairParams p;
  if (dips.size() == 1) {
    p.f_r = p.f_p = dips[0].frequency;
    p.kappa = 2.0 * dips[0].width;
    p.j = 0.5 * dips[0].width;
    return p;
  }
  const double center = 0.5 * (dips[0].frequency + dips[1].frequency);
  const Complex l1{dips[0].frequency - center, -0.5 * dips[0].width};
  const Complex l2{dips[1].frequency - center, -0.5 * dips[1].width};
  const double kappa = dips[0].width + dips[1].width;
  const Complex prod = l1 * l2;
  const double fr = -2.0 * prod.imag() / kappa;
  const double fp = (l1.real() + l2.real()) - fr;
  const double j2 = fr * fp - prod.real();
  if (j2 > 0 && std::isfinite(j2)) {
    p.f_r = center + fr;
    p.f_p = center + fp;
    p.j = std::sqrt(j2);
    p.kappa = kappa;
  } else {
    const bool low_narrow = dips[0].width <= dips[1].width;
    p.f_r = low_narrow ? dips[0].frequency : dips[1].frequency;
    p.f_p = low_narrow ? dips[1].frequency : dips[0].frequency;
    p.j = 0.5 * (dips[1].frequency - dips[0].frequency);
    p.kappa = std::max(dips[0].width, dips[1].width);
  }
  return p;
}

// ---------------------------------------------------------------------------
// Damped least squares

struct FitOptions {
  int max_iterations = 500;
  double relative_cost_tolerance = 1e-10;
  double gradient_tolerance = 1e-8;
  int consecutive = 3;
};

struct FitResult {
  PairParams params;
  PairParams half_widths;        ///< ~95% confidence half-widths, same fields as params
  double residual_rms = 0.0;     ///< rms of the stacked re/im residuals
  double gradient_norm = 0.0;    ///< max scaled-gradient component at exit
  bool converged = false;
  int iterations = 0;
  S21Model model = S21Model::ideal;
  std::vector<double> cost_history;  ///< cost after each accepted step, starting with the seed
  std::vector<std::string> warnings;
};

namespace detail {

// Parameter layout: [f_r, f_p, ln j, ln kappa, (ln gamma_r, ln gamma_p, ln kappa_drive)].
// Frequencies are stored as offsets in units of `scale` for conditioning.
struct FitParameterization {
  S21Model model;
  double f_ref;
  double scale;
  double chi;

  int size() const { return model == S21Model::ideal ? 4 : 7; }

  Eigen::VectorXd pack(const PairParams& p) const {
    Eigen::VectorXd x(size());
    x(0) = (p.f_r - f_ref) / scale;
    x(1) = (p.f_p - f_ref) / scale;
    x(2) = std::log(p.j);
    x(3) = std::log(p.kappa);
    if (model == S21Model::full) {
      const double floor = 1e-3 * p.kappa;
      x(4) = std::log(std::max(p.gamma_r, floor));
      x(5) = std::log(std::max(p.gamma_p, floor));
      x(6) = std::log(std::max(p.kappa_drive, floor));
    }
    return x;
  }

  PairParams unpack(const Eigen::VectorXd& x) const {
    PairParams p;
    p.f_r = f_ref + scale * x(0);
    p.f_p = f_ref + scale * x(1);
    p.j = std::exp(x(2));
    p.kappa = std::exp(x(3));
    p.chi = chi;
    if (model == S21Model::full) {
      p.gamma_r = std::exp(x(4));
      p.gamma_p = std::exp(x(5));
      p.kappa_drive = std::exp(x(6));
    }
    return p;
  }
};

}  // namespace detail

/// Derivatives of S21 with respect to (f_r, f_p, j, kappa, gamma_r, gamma_p,
/// kappa_drive), all in Hz, from the common rational form
///   S = 1 - (k/2) A / (4J^2 + B A),  A = gR + kd + 2i dR,  B = gP + k + 2i dP.
inline std::array<Complex, 7> s21_gradient(double f, const PairParams& p, S21Model model) {
  const Complex i{0.0, 1.0};
  const double kappa = kTwoPi * p.kappa;
  const double j = kTwoPi * p.j;
  const double loss_r = model == S21Model::full ? kTwoPi * (p.gamma_r + p.kappa_drive) : 0.0;
  const double loss_p = model == S21Model::full ? kTwoPi * p.gamma_p : 0.0;
  const Complex a = loss_r + 2.0 * i * kTwoPi * (p.f_r - f);
  const Complex b = loss_p + kappa + 2.0 * i * kTwoPi * (p.f_p - f);
  const Complex d = 4.0 * j * j + b * a;
  const Complex d2 = d * d;
  const Complex dt_da = 4.0 * kappa * j * j / d2;
  const Complex dt_db = -kappa * a * a / d2;
  const Complex dt_dk = a / d + dt_db;
  const Complex dt_dj = -8.0 * kappa * j * a / d2;
  const double c = -0.5 * kTwoPi;  // dS = -(1/2) dT, times d(angular)/d(Hz)
  std::array<Complex, 7> g{};
  g[0] = c * dt_da * 2.0 * i;
  g[1] = c * dt_db * 2.0 * i;
  g[2] = c * dt_dj;
  g[3] = c * dt_dk;
  if (model == S21Model::full) {
    g[4] = c * dt_da;
    g[5] = c * dt_db;
    g[6] = c * dt_da;
  }
  return g;
}

/// Levenberg-Marquardt fit of the chosen model to a baseline-corrected trace.
/// Rates are fitted in log space to stay positive. Steps that do not raise
/// the cost are accepted; the fit is converged once the relative cost
/// decrease or the scaled gradient stays below tolerance for `consecutive`
/// accepted steps.
inline FitResult fit_pair(const TransmissionTrace& t, const PairParams& guess, S21Model model,
                          const FitOptions& opts = {}) {
  validate_trace(t);
  require(std::isfinite(guess.f_r) && std::isfinite(guess.f_p) && guess.j > 0 && guess.kappa > 0 &&
              std::isfinite(guess.j) && std::isfinite(guess.kappa),
          ErrorCategory::domain, "fit guess must be finite with positive j and kappa");

  const detail::FitParameterization param{model, 0.5 * (guess.f_r + guess.f_p), guess.kappa, guess.chi};
  const int np = param.size();
  const auto n = static_cast<Eigen::Index>(t.size());

  const auto residuals = [&](const Eigen::VectorXd& x, Eigen::VectorXd& r) {
    const PairParams p = param.unpack(x);
    r.resize(2 * n);
    for (Eigen::Index k = 0; k < n; ++k) {
      const Complex diff = s21(model, t.freqs[static_cast<std::size_t>(k)], p) - t.values[static_cast<std::size_t>(k)];
      r(k) = diff.real();
      r(n + k) = diff.imag();
    }
    return 0.5 * r.squaredNorm();
  };
  const auto jacobian = [&](const Eigen::VectorXd& x, Eigen::MatrixXd& jac) {
    const PairParams p = param.unpack(x);
    jac.resize(2 * n, np);
    const std::array<double, 7> chain{param.scale, param.scale, p.j, p.kappa, p.gamma_r, p.gamma_p, p.kappa_drive};
    for (Eigen::Index k = 0; k < n; ++k) {
      const auto g = s21_gradient(t.freqs[static_cast<std::size_t>(k)], p, model);
      for (int c = 0; c < np; ++c) {
        const Complex v = g[static_cast<std::size_t>(c)] * chain[static_cast<std::size_t>(c)];
        jac(k, c) = v.real();
        jac(n + k, c) = v.imag();
      }
    }
  };

  FitResult result;
  result.model = model;
  Eigen::VectorXd x = param.pack(guess);
  Eigen::VectorXd r;
  Eigen::MatrixXd jac;
  double cost = residuals(x, r);
  result.cost_history.push_back(cost);
  require(std::isfinite(cost), ErrorCategory::domain, "model is not finite at the guess");

  jacobian(x, jac);
  Eigen::MatrixXd h = jac.transpose() * jac;
  Eigen::VectorXd g = jac.transpose() * r;
  double mu = 1e-3 * h.diagonal().maxCoeff();
  double nu = 2.0;
  int streak = 0;
  const double cost_floor = 1e-30 * static_cast<double>(n);

  const auto scaled_gradient = [&]() {
    const double rn = r.norm();
    double best = 0.0;
    for (int c = 0; c < np; ++c) {
      const double denom = std::sqrt(h(c, c)) * rn;
      if (denom > 0.0) best = std::max(best, std::abs(g(c)) / denom);
    }
    return best;
  };
  result.gradient_norm = scaled_gradient();

  while (result.iterations < opts.max_iterations) {
    ++result.iterations;
    if (cost <= cost_floor) {
      result.converged = true;
      break;
    }
    Eigen::MatrixXd damped = h;
    for (int c = 0; c < np; ++c) damped(c, c) += mu * std::max(h(c, c), 1e-12);
    Eigen::LDLT<Eigen::MatrixXd> ldlt(damped);
    Eigen::VectorXd step = ldlt.solve(-g);
    if (ldlt.info() != Eigen::Success || !step.allFinite()) {
      mu *= nu;
      nu *= 2.0;
      continue;
    }
    const Eigen::VectorXd trial = x + step;
    Eigen::VectorXd r_trial;
    const double trial_cost = residuals(trial, r_trial);
    if (std::isfinite(trial_cost) && trial_cost <= cost) {
      const double predicted = 0.5 * step.dot((damped.diagonal() - h.diagonal()).cwiseProduct(step) - g);
      const double rho = predicted > 0 ? (cost - trial_cost) / predicted : 1.0;
      const double relative = cost > 0 ? (cost - trial_cost) / cost : 0.0;
      x = trial;
      r = std::move(r_trial);
      cost = trial_cost;
      result.cost_history.push_back(cost);
      jacobian(x, jac);
      h = jac.transpose() * jac;
      g = jac.transpose() * r;
      result.gradient_norm = scaled_gradient();
      mu *= std::max(1.0 / 3.0, 1.0 - std::pow(2.0 * rho - 1.0, 3));
      nu = 2.0;
      const bool small = relative < opts.relative_cost_tolerance || result.gradient_norm < opts.gradient_tolerance;
      streak = small ? streak + 1 : 0;
      if (streak >= opts.consecutive) {
        result.converged = true;
        break;
      }
    } else {
      mu *= nu;
      nu *= 2.0;
      if (!std::isfinite(mu) || mu > 1e300) break;
    }
  }

  result.params = param.unpack(x);
  result.residual_rms = std::sqrt(2.0 * cost / static_cast<double>(2 * n));
  if (result.converged && result.gradient_norm > 1e-4 && cost > cost_floor)
    result.warnings.push_back("converged on cost stagnation with scaled gradient " + std::to_string(result.gradient_norm));

  // local quadratic model: cov = s^2 (J^T J)^-1
  const double dof = std::max<double>(1.0, static_cast<double>(2 * n - np));
  const double s2 = 2.0 * cost / dof;
  Eigen::MatrixXd cov = h.ldlt().solve(Eigen::MatrixXd::Identity(np, np)) * s2;
  const auto hw = [&](int c) { return 1.96 * std::sqrt(std::max(0.0, cov(c, c))); };
  const PairParams& p = result.params;
  result.half_widths.f_r = param.scale * hw(0);
  result.half_widths.f_p = param.scale * hw(1);
  result.half_widths.j = p.j * hw(2);
  result.half_widths.kappa = p.kappa * hw(3);
  if (model == S21Model::full) {
    result.half_widths.gamma_r = p.gamma_r * hw(4);
    result.half_widths.gamma_p = p.gamma_p * hw(5);
    result.half_widths.kappa_drive = p.kappa_drive * hw(6);
  }
  return result;
}

/// Background removal, seeding and fitting in one call. Resonance tails
/// reaching into the wings bias the first background estimate, so the
/// background is re-estimated from data/model on the wings and the fit
/// repeated until the background stops moving (at most `max_refinements`).
inline FitResult fit_trace(const TransmissionTrace& raw, S21Model model, const FitOptions& opts = {},
                           int max_refinements = 20) {
  TransmissionTrace corrected = correct_baseline(raw);
  FitResult result = fit_pair(corrected, initial_guess(corrected), model, opts);
  const std::vector<std::string> warnings = corrected.warnings;
  Background previous = estimate_background(raw);
  for (int pass = 0; pass < max_refinements; ++pass) {
    TransmissionTrace ratio = raw;
    for (std::size_t k = 0; k < raw.size(); ++k) ratio.values[k] = raw.values[k] / s21(model, raw.freqs[k], result.params);
    const Background bg = estimate_background(ratio);
    for (std::size_t k = 0; k < raw.size(); ++k) corrected.values[k] = raw.values[k] / bg.at(raw.freqs[k]);
    FitResult next = fit_pair(corrected, result.params, model, opts);
    if (!next.converged && result.converged) break;
    result = std::move(next);
    const double span = raw.freqs.back() - raw.freqs.front();
    const bool settled = std::abs(bg.gain - previous.gain) < 1e-12 * std::abs(bg.gain) &&
                         std::abs(bg.delay - previous.delay) * span < 1e-12;
    previous = bg;
    if (settled) break;
  }
  result.warnings.insert(result.warnings.begin(), warnings.begin(), warnings.end());
  return result;
}

}  // namespace shoelace
