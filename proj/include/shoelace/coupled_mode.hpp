#pragma once

// Readout/Purcell resonator pair on an open feedline: transmission models,
// hybridized-mode linewidths and dispersive shifts.
//
// Public quantities are ordinary frequencies in Hz (rates are "/2pi" values).
// Angular conversion happens inside the formula evaluations only.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <numbers>
#include <string>
#include <utility>

#include <Eigen/Eigenvalues>

#include "shoelace/errors.hpp"

namespace shoelace {

using Complex = std::complex<double>;
using ComplexPoint = Complex;

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Physical parameters of one readout (R) / Purcell (P) pair.
struct PairParams {
  double f_r = 0.0;          ///< readout frequency, Lamb-shift dressed [Hz]
  double f_p = 0.0;          ///< Purcell-filter frequency [Hz]
  double j = 0.0;            ///< R-P coupling J/2pi [Hz]
  double kappa = 0.0;        ///< P decay into the feedline [Hz]
  double gamma_r = 0.0;      ///< R intrinsic loss [Hz]
  double gamma_p = 0.0;      ///< P intrinsic loss [Hz]
  double kappa_drive = 0.0;  ///< R decay through the transmon drive line [Hz]
  double chi = 0.0;          ///< full dispersive pull 2chi/2pi of f_r for |0> -> |1> [Hz]

  double delta_pr() const { return f_p - f_r; }
};

inline bool is_valid(const PairParams& p) {
  const auto finite = [](double x) { return std::isfinite(x); };
  return finite(p.f_r) && finite(p.f_p) && finite(p.j) && finite(p.kappa) && finite(p.gamma_r) &&
         finite(p.gamma_p) && finite(p.kappa_drive) && finite(p.chi) && p.f_r > 0 && p.f_p > 0 &&
         p.j > 0 && p.kappa > 0 && p.gamma_r >= 0 && p.gamma_p >= 0 && p.kappa_drive >= 0;
}

inline void validate(const PairParams& p) {
  require(is_valid(p), ErrorCategory::domain,
          "pair parameters must be finite with f_r, f_p, j, kappa > 0 and losses >= 0");
}

enum class QubitState { ground, excited };

/// One hybridized mode of the pair.
struct ModeDescriptor {
  double f_mode = 0.0;     ///< real part of the complex eigenfrequency [Hz]
  double kappa_eff = 0.0;  ///< effective linewidth [Hz]
  double chi_eff = 0.0;    ///< state-dependent pull of this mode, 2chi_eff/2pi [Hz]
  double r_weight = 0.0;   ///< readout-resonator fraction of the eigenvector
};

struct HybridModes {
  ModeDescriptor low;   ///< lower-frequency mode
  ModeDescriptor high;  ///< higher-frequency mode
  bool degenerate = false;  ///< at (or numerically at) the exceptional point

  const ModeDescriptor& readout_like() const { return low.r_weight >= high.r_weight ? low : high; }
  const ModeDescriptor& purcell_like() const { return low.r_weight >= high.r_weight ? high : low; }
};

/// Feedline transmission of the lossless pair:
///   S21 = 1 - i k dR / (4J^2 + (2i dP + k) 2i dR),  dX = 2pi (f_X - f).
inline ComplexPoint s21_ideal(double f, const PairParams& p) {
  const Complex i{0.0, 1.0};
  const double dr = kTwoPi * (p.f_r - f);
  const double dp = kTwoPi * (p.f_p - f);
  const double kappa = kTwoPi * p.kappa;
  const double j = kTwoPi * p.j;
  return 1.0 - i * kappa * dr / (4.0 * j * j + (2.0 * i * dp + kappa) * 2.0 * i * dr);
}

/// Transmission including R and P intrinsic losses and the R drive-line decay.
/// Normalized so that it coincides with s21_ideal when all three vanish.
inline ComplexPoint s21_full(double f, const PairParams& p) {
  const Complex i{0.0, 1.0};
  const double kappa = kTwoPi * p.kappa;
  const double j = kTwoPi * p.j;
  const Complex r_arm = kTwoPi * (p.gamma_r + p.kappa_drive) + 2.0 * i * kTwoPi * (p.f_r - f);
  const Complex p_arm = kTwoPi * p.gamma_p + 2.0 * i * kTwoPi * (p.f_p - f) + kappa;
  return 1.0 - 0.5 * kappa * r_arm / (4.0 * j * j + p_arm * r_arm);
}

struct PairLinewidths {
  double readout_like = 0.0;  ///< minus branch
  double purcell_like = 0.0;  ///< plus branch
};

/// Closed-form effective linewidths of the lossless pair,
///   k_eff = (k -/+ Re sqrt(-16J^2 + (k - 2i dPR)^2)) / 2,
/// principal branch. The minus branch is evaluated in an algebraically
/// equivalent cancellation-free form so that tiny R-like linewidths keep
/// full relative precision. Inputs and outputs in Hz (the expression is
/// homogeneous, so no angular conversion is needed).
inline PairLinewidths kappa_eff_pair(double j, double kappa, double delta_pr) {
  require(j > 0 && kappa > 0 && std::isfinite(delta_pr), ErrorCategory::domain,
          "kappa_eff_pair requires j > 0 and kappa > 0");
  const double k2 = kappa * kappa;
  const double d2 = delta_pr * delta_pr;
  const double j2 = j * j;
  // sqrt argument: x + i y with x = k^2 - 4d^2 - 16J^2, y = -4 k d
  const double x = k2 - 4.0 * d2 - 16.0 * j2;
  const double y = 4.0 * kappa * std::abs(delta_pr);
  const double modulus = std::hypot(x, y);
  // real part of the principal root, without cancellation in either sign of x
  double re_root = 0.0;
  if (x >= 0.0) {
    re_root = std::sqrt(0.5 * (modulus + x));
  } else {
    const double im_root = std::sqrt(0.5 * (modulus - x));
    re_root = 0.5 * y / im_root;
  }
  const double plus = 0.5 * (kappa + re_root);
  // k^2 - re_root^2 = 32 k^2 J^2 / (k^2 + 4d^2 + 16J^2 + modulus)
  const double y_sum = k2 + 4.0 * d2 + 16.0 * j2 + modulus;
  const double minus = 16.0 * k2 * j2 / (y_sum * (kappa + re_root));
  return {minus, plus};
}

namespace detail {

struct EigenPair {
  std::array<Complex, 2> lambda;  // angular, frame centered on the bare ground f_r
  Complex r_diagonal;
};

// Eigenvalues of the coupled-mode matrix
//   [ wR + 2pi*pull - i(gR + k_drive)/2        2pi J           ]
//   [        2pi J                    wP - i(k + gP)/2          ]
// in a frame rotating at the bare ground-state readout frequency. Both roots
// come from a complex Schur decomposition; the smaller-magnitude one is then
// recomputed from det/lambda_big so its imaginary part keeps full relative
// precision.
inline EigenPair coupled_mode_eigenvalues(const PairParams& p, double pull_hz) {
  const Complex a{kTwoPi * pull_hz, -0.5 * kTwoPi * (p.gamma_r + p.kappa_drive)};
  const Complex b{kTwoPi * (p.f_p - p.f_r), -0.5 * kTwoPi * (p.kappa + p.gamma_p)};
  const double j = kTwoPi * p.j;

  Eigen::Matrix2cd m;
  m << a, j, j, b;
  Eigen::ComplexEigenSolver<Eigen::Matrix2cd> solver(m, false);
  Complex l0 = solver.eigenvalues()(0);
  Complex l1 = solver.eigenvalues()(1);
  if (std::abs(l0) < std::abs(l1)) std::swap(l0, l1);
  const Complex det = a * b - j * j;
  if (std::abs(l0) > 0.0) l1 = det / l0;
  return {{l0, l1}, a};
}

inline double readout_weight(const Complex& lambda, const Complex& r_diagonal, double j_angular) {
  // eigenvector (J, lambda - a) from the first row of (M - lambda) v = 0
  const double j2 = j_angular * j_angular;
  return j2 / (j2 + std::norm(lambda - r_diagonal));
}

inline std::array<Complex, 2> sorted_by_real(std::array<Complex, 2> l) {
  if (l[1].real() < l[0].real()) std::swap(l[0], l[1]);
  return l;
}

}  // namespace detail

/// Hybridized modes of the pair for the given transmon state. The transmon
/// pull `chi` is applied in full to the bare readout entry; each mode's
/// chi_eff is the resulting shift of its real eigenfrequency.
inline HybridModes eigenmodes(const PairParams& p, QubitState state) {
  validate(p);
  const double j = kTwoPi * p.j;
  const auto ground = detail::coupled_mode_eigenvalues(p, 0.0);
  const auto excited = detail::coupled_mode_eigenvalues(p, p.chi);
  const auto g = detail::sorted_by_real(ground.lambda);
  const auto e = detail::sorted_by_real(excited.lambda);
  const auto& chosen_raw = state == QubitState::ground ? ground : excited;
  const auto chosen = state == QubitState::ground ? g : e;

  const auto describe = [&](std::size_t k) {
    ModeDescriptor m;
    m.f_mode = p.f_r + chosen[k].real() / kTwoPi;
    m.kappa_eff = std::max(0.0, -2.0 * chosen[k].imag() / kTwoPi);
    m.chi_eff = (e[k].real() - g[k].real()) / kTwoPi;
    m.r_weight = detail::readout_weight(chosen[k], chosen_raw.r_diagonal, j);
    return m;
  };

  HybridModes out;
  out.low = describe(0);
  out.high = describe(1);
  // |l0 - l1| scales like sqrt of the distance to the exceptional point
  const double scale = j + kTwoPi * (p.kappa + std::abs(p.delta_pr()));
  out.degenerate = std::abs(chosen[0] - chosen[1]) <= 1e-7 * scale;
  if (out.degenerate) {
    out.low.r_weight = 0.5;
    out.high.r_weight = 0.5;
  }
  return out;
}

/// Upper bound on the fraction of readout photons reaching the detector for
/// an open feedline: Q_i / (2 (Q_c + Q_i)).
inline double readout_photon_fraction(double q_i, double q_c) {
  require(q_i > 0 && q_c > 0, ErrorCategory::domain, "quality factors must be positive");
  if (std::isinf(q_i)) return 0.5;
  return q_i / (2.0 * (q_c + q_i));
}

/// |2 chi_eff| / kappa_eff; 1 is the SNR-optimal matching. Here chi_eff is
/// half of the mode's state-dependent pull.
inline double matching_figure(double chi_eff, double kappa_eff) {
  require(kappa_eff > 0, ErrorCategory::domain, "kappa_eff must be positive");
  return std::abs(2.0 * chi_eff) / kappa_eff;
}

inline double matching_figure(const ModeDescriptor& mode) {
  return matching_figure(0.5 * mode.chi_eff, mode.kappa_eff);
}

}  // namespace shoelace
