#pragma once

// Quantized shoelace-removal planning: per-pair R/P matching, feedline-wide
// crowding resolution, phase-velocity fitting and the two-cycle protocol.
//
// Removing n shoelaces lengthens a quarter-wave resonator by n * pitch and
// lowers its frequency by 4 f0^2 dl / nu_rho. Frequencies only ever go down.

#include <algorithm>
#include <array>
#include <cmath>
#include <compare>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "shoelace/coupled_mode.hpp"
#include "shoelace/errors.hpp"

namespace shoelace {

inline constexpr double kNaiveSlope = -2e12;  // Hz per m, i.e. -2 MHz/um
inline constexpr double kShoelacePitch = 5e-6;
inline constexpr int kShoelacesPerResonator = 10;

enum class ResonatorRole { readout, purcell };

struct ShoelaceArray {
  int total = kShoelacesPerResonator;
  int remaining = kShoelacesPerResonator;
  double pitch = kShoelacePitch;  ///< [m]

  int removed() const { return total - remaining; }
};

struct ResonatorRecord {
  std::string id;
  ResonatorRole role = ResonatorRole::readout;
  double f_meas = 0.0;  ///< latest characterized frequency [Hz]
  ShoelaceArray shoelaces;
};

struct TrimAction {
  std::string resonator_id;
  int n_remove = 0;
  double delta_l = 0.0;            ///< [m]
  double predicted_delta_f = 0.0;  ///< [Hz], <= 0
  double predicted_f = 0.0;        ///< [Hz]
};

struct TrimPlan {
  std::vector<TrimAction> actions;  ///< only resonators with n_remove > 0
  double objective_before = 0.0;    ///< sum of |f_P - f_R| over planned pairs [Hz]
  double objective_after = 0.0;
  int cycle_index = 0;
  bool infeasible = false;
  // crowding bookkeeping, populated by plan_crowding
  int crowding_violations_before = 0;
  int crowding_violations_after = 0;
  double min_spacing_before = std::numeric_limits<double>::infinity();
  double min_spacing_after = std::numeric_limits<double>::infinity();

  bool empty() const { return actions.empty(); }
  int total_removed() const {
    int n = 0;
    for (const auto& a : actions) n += a.n_remove;
    return n;
  }
};

/// Frequency change for a length increase delta_l of a resonator that sat at
/// f0 during characterization: -4 f0^2 delta_l / nu_rho.
inline double freq_shift(double f0, double nu_rho, double delta_l) {
  require(f0 > 0 && nu_rho > 0 && delta_l >= 0, ErrorCategory::domain,
          "freq_shift requires f0 > 0, nu_rho > 0, delta_l >= 0");
  return -4.0 * f0 * f0 * delta_l / nu_rho;
}

/// How the planner predicts the shift of a removal: either the naive linear
/// slope (Hz per m) or the quarter-wave expression with a phase velocity.
struct TrimModel {
  enum class Kind { naive_slope, phase_velocity };

  Kind kind = Kind::naive_slope;
  double slope = kNaiveSlope;  ///< [Hz/m], naive_slope only
  double nu_rho = 0.0;         ///< [m/s], phase_velocity only

  static TrimModel naive(double slope_hz_per_m = kNaiveSlope) {
    require(slope_hz_per_m < 0, ErrorCategory::domain, "naive trim slope must be negative");
    return {Kind::naive_slope, slope_hz_per_m, 0.0};
  }
  static TrimModel phase_velocity(double nu_rho) {
    require(nu_rho > 0, ErrorCategory::domain, "phase velocity must be positive");
    return {Kind::phase_velocity, 0.0, nu_rho};
  }

  double shift(double f0, double delta_l) const {
    if (kind == Kind::phase_velocity) return freq_shift(f0, nu_rho, delta_l);
    require(delta_l >= 0, ErrorCategory::domain, "delta_l must be non-negative");
    return slope * delta_l;
  }

  /// Magnitude of one removal step at f0.
  double quantum(double f0, double pitch) const { return -shift(f0, pitch); }

  std::string mode_name() const { return kind == Kind::naive_slope ? "naive" : "fitted"; }
};

/// Number of shoelaces whose removal best realizes target_shift (<= 0).
/// Ties go to fewer removals since removal is irreversible.
inline int shift_to_count(double f0, const TrimModel& model, double target_shift, int remaining,
                          double pitch) {
  require(target_shift <= 0, ErrorCategory::domain, "target shift must be <= 0 (removal only lowers frequency)");
  require(remaining >= 0 && pitch > 0, ErrorCategory::domain, "invalid shoelace budget");
  const double q = model.quantum(f0, pitch);
  const double reach = model.shift(f0, remaining * pitch);
  if (-target_shift > -reach + 0.5 * q) {
    throw OutOfRangeError("requested shift " + std::to_string(target_shift) +
                              " Hz exceeds the remaining trim range " + std::to_string(reach) + " Hz",
                          reach);
  }
  int best = 0;
  double best_err = std::abs(target_shift);
  for (int n = 1; n <= remaining; ++n) {
    const double err = std::abs(model.shift(f0, n * pitch) - target_shift);
    if (err < best_err) {
      best = n;
      best_err = err;
    }
  }
  return best;
}

inline int shift_to_count(double f0, double nu_rho, double target_shift, int remaining, double pitch) {
  return shift_to_count(f0, TrimModel::phase_velocity(nu_rho), target_shift, remaining, pitch);
}

inline TrimAction make_action(const ResonatorRecord& r, int n_remove, const TrimModel& model) {
  TrimAction a;
  a.resonator_id = r.id;
  a.n_remove = n_remove;
  a.delta_l = n_remove * r.shoelaces.pitch;
  a.predicted_delta_f = n_remove == 0 ? 0.0 : model.shift(r.f_meas, a.delta_l);
  a.predicted_f = r.f_meas + a.predicted_delta_f;
  return a;
}

/// Lowers whichever of R and P sits higher so the pair best coincides.
/// Returns a zero-removal action when already within half a trim quantum.
inline TrimAction plan_pair_match(const ResonatorRecord& r, const ResonatorRecord& p, const TrimModel& model) {
  require(r.role == ResonatorRole::readout && p.role == ResonatorRole::purcell, ErrorCategory::domain,
          "plan_pair_match expects (readout, purcell) records");
  const ResonatorRecord& higher = p.f_meas > r.f_meas ? p : r;
  const ResonatorRecord& lower = p.f_meas > r.f_meas ? r : p;
  const double gap = higher.f_meas - lower.f_meas;
  const double q = model.quantum(higher.f_meas, higher.shoelaces.pitch);
  if (gap <= 0.5 * q) return make_action(higher, 0, model);
  if (higher.shoelaces.remaining <= 0) {
    fail(ErrorCategory::unmatchable, "resonator " + higher.id + " has no shoelaces left and the pair is " +
                                         std::to_string(gap) + " Hz apart");
  }
  int best = 0;
  double best_err = gap;
  for (int n = 1; n <= higher.shoelaces.remaining; ++n) {
    const double err = std::abs(gap + model.shift(higher.f_meas, n * higher.shoelaces.pitch));
    if (err < best_err) {
      best = n;
      best_err = err;
    }
  }
  return make_action(higher, best, model);
}

/// A pair as seen by the planner: fitted couplings plus both resonator records.
/// Current frequencies come from the records; params supplies J, kappa, chi
/// and losses.
struct PairRecords {
  std::string id;
  ResonatorRecord readout;
  ResonatorRecord purcell;
  PairParams params;  ///< f_r / f_p are overwritten from the records when used

  PairParams current_params() const {
    PairParams p = params;
    p.f_r = readout.f_meas;
    p.f_p = purcell.f_meas;
    return p;
  }
};

inline double pair_mismatch(const PairRecords& pair) { return std::abs(pair.purcell.f_meas - pair.readout.f_meas); }

/// Pair matching for every pair in `device`, one plan for the whole cycle.
inline TrimPlan plan_pair_matching(std::span<const PairRecords> device, const TrimModel& model, int cycle_index) {
  TrimPlan plan;
  plan.cycle_index = cycle_index;
  for (const auto& pair : device) {
    const TrimAction a = plan_pair_match(pair.readout, pair.purcell, model);
    plan.objective_before += pair_mismatch(pair);
    double f_r = pair.readout.f_meas;
    double f_p = pair.purcell.f_meas;
    if (a.n_remove > 0) {
      plan.actions.push_back(a);
      (a.resonator_id == pair.readout.id ? f_r : f_p) = a.predicted_f;
    }
    plan.objective_after += std::abs(f_p - f_r);
    // budget ran out before the pair came within half a quantum
    const ResonatorRecord& trimmed = a.resonator_id == pair.readout.id ? pair.readout : pair.purcell;
    if (std::abs(f_p - f_r) > 0.5 * model.quantum(trimmed.f_meas, trimmed.shoelaces.pitch) &&
        a.n_remove == trimmed.shoelaces.remaining)
      plan.infeasible = true;
  }
  return plan;
}

// ---------------------------------------------------------------------------
// Crowding resolution

/// Lexicographic crowding objective: inter-pair mode spacings below the guard
/// band, then R-P mismatch beyond half a trim quantum (rounded to Hz), then
/// shoelaces removed.
struct CrowdingScore {
  int violations = 0;
  std::int64_t excess_mismatch_hz = 0;
  int removed = 0;

  auto operator<=>(const CrowdingScore&) const = default;
};

struct CrowdingCandidate {
  int n_r = 0;
  int n_p = 0;
  double f_r = 0.0;
  double f_p = 0.0;
  std::array<double, 2> modes{};  ///< hybridized mode frequencies (ground state)
  std::int64_t excess_mismatch_hz = 0;
  int removed = 0;
};

inline int spacing_violations(const std::array<double, 2>& a, const std::array<double, 2>& b, double guard_band) {
  int v = 0;
  for (double x : a)
    for (double y : b)
      if (std::abs(x - y) < guard_band) ++v;
  return v;
}

/// Every (n_R, n_P) choice for one pair with the resulting mode positions.
inline std::vector<CrowdingCandidate> crowding_candidates(const PairRecords& pair, const TrimModel& model) {
  const auto& r = pair.readout;
  const auto& p = pair.purcell;
  const ResonatorRecord& higher = p.f_meas > r.f_meas ? p : r;
  const double half_quantum = 0.5 * model.quantum(higher.f_meas, higher.shoelaces.pitch);
  std::vector<CrowdingCandidate> out;
  out.reserve(static_cast<std::size_t>((r.shoelaces.remaining + 1) * (p.shoelaces.remaining + 1)));
  for (int nr = 0; nr <= r.shoelaces.remaining; ++nr) {
    for (int np = 0; np <= p.shoelaces.remaining; ++np) {
      CrowdingCandidate c;
      c.n_r = nr;
      c.n_p = np;
      c.f_r = r.f_meas + (nr ? model.shift(r.f_meas, nr * r.shoelaces.pitch) : 0.0);
      c.f_p = p.f_meas + (np ? model.shift(p.f_meas, np * p.shoelaces.pitch) : 0.0);
      PairParams params = pair.params;
      params.f_r = c.f_r;
      params.f_p = c.f_p;
      const HybridModes modes = eigenmodes(params, QubitState::ground);
      c.modes = {modes.low.f_mode, modes.high.f_mode};
      c.excess_mismatch_hz = std::llround(std::max(0.0, std::abs(c.f_p - c.f_r) - half_quantum));
      c.removed = nr + np;
      out.push_back(c);
    }
  }
  return out;
}

inline CrowdingScore crowding_score(std::span<const CrowdingCandidate* const> choice, double guard_band) {
  CrowdingScore s;
  for (std::size_t i = 0; i < choice.size(); ++i) {
    s.excess_mismatch_hz += choice[i]->excess_mismatch_hz;
    s.removed += choice[i]->removed;
    for (std::size_t k = 0; k < i; ++k) s.violations += spacing_violations(choice[i]->modes, choice[k]->modes, guard_band);
  }
  return s;
}

inline double min_mode_spacing(std::span<const CrowdingCandidate* const> choice) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < choice.size(); ++i)
    for (std::size_t k = 0; k < i; ++k)
      for (double x : choice[i]->modes)
        for (double y : choice[k]->modes) best = std::min(best, std::abs(x - y));
  return best;
}

/// Default guard band: three times the widest hybridized-mode linewidth.
inline double default_guard_band(std::span<const PairRecords> pairs) {
  double widest = 0.0;
  for (const auto& pair : pairs) {
    const HybridModes m = eigenmodes(pair.current_params(), QubitState::ground);
    widest = std::max({widest, m.low.kappa_eff, m.high.kappa_eff});
  }
  return 3.0 * widest;
}

struct CrowdingOptions {
  std::size_t exhaustive_limit = 4;  ///< exact branch-and-bound up to this many pairs
  int max_sweeps = 100;              ///< local-search sweeps beyond the limit
};

namespace detail {

class CrowdingSearch {
 public:
  CrowdingSearch(const std::vector<std::vector<CrowdingCandidate>>& cands, double guard_band)
      : cands_(cands), guard_(guard_band), choice_(cands.size(), nullptr) {}

  // Greedy start (each pair at its individually best candidate), then
  // coordinate descent over one pair at a time.
  std::vector<std::size_t> local_search(int max_sweeps) {
    std::vector<std::size_t> idx(cands_.size(), 0);
    CrowdingScore current = score(idx);
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
      bool improved = false;
      for (std::size_t i = 0; i < cands_.size(); ++i) {
        const std::size_t keep = idx[i];
        std::size_t best = keep;
        for (std::size_t c = 0; c < cands_[i].size(); ++c) {
          idx[i] = c;
          const CrowdingScore s = score(idx);
          if (s < current) {
            current = s;
            best = c;
            improved = true;
          }
        }
        idx[i] = best;
      }
      if (!improved) break;
    }
    return idx;
  }

  std::vector<std::size_t> exhaustive(std::vector<std::size_t> incumbent) {
    best_idx_ = incumbent;
    best_ = score(incumbent);
    suffix_min_excess_.assign(cands_.size() + 1, 0);
    for (std::size_t i = cands_.size(); i-- > 0;) {
      std::int64_t m = std::numeric_limits<std::int64_t>::max();
      for (const auto& c : cands_[i]) m = std::min(m, c.excess_mismatch_hz);
      suffix_min_excess_[i] = suffix_min_excess_[i + 1] + m;
    }
    current_idx_.assign(cands_.size(), 0);
    descend(0, CrowdingScore{});
    return best_idx_;
  }

  CrowdingScore score(const std::vector<std::size_t>& idx) {
    for (std::size_t i = 0; i < idx.size(); ++i) choice_[i] = &cands_[i][idx[i]];
    return crowding_score(choice_, guard_);
  }

 private:
  void descend(std::size_t depth, const CrowdingScore& partial) {
    if (depth == cands_.size()) {
      if (partial < best_) {
        best_ = partial;
        best_idx_ = current_idx_;
      }
      return;
    }
    const CrowdingScore bound{partial.violations, partial.excess_mismatch_hz + suffix_min_excess_[depth],
                              partial.removed};
    if (!(bound < best_)) return;
    for (std::size_t c = 0; c < cands_[depth].size(); ++c) {
      const CrowdingCandidate& cand = cands_[depth][c];
      CrowdingScore next = partial;
      for (std::size_t k = 0; k < depth; ++k)
        next.violations += spacing_violations(cand.modes, cands_[k][current_idx_[k]].modes, guard_);
      next.excess_mismatch_hz += cand.excess_mismatch_hz;
      next.removed += cand.removed;
      const CrowdingScore next_bound{next.violations, next.excess_mismatch_hz + suffix_min_excess_[depth + 1],
                                     next.removed};
      if (!(next_bound < best_)) continue;
      current_idx_[depth] = c;
      descend(depth + 1, next);
    }
  }

  const std::vector<std::vector<CrowdingCandidate>>& cands_;
  double guard_;
  std::vector<const CrowdingCandidate*> choice_;
  std::vector<std::size_t> best_idx_;
  std::vector<std::size_t> current_idx_;
  std::vector<std::int64_t> suffix_min_excess_;
  CrowdingScore best_;
};

}  // namespace detail

struct CrowdingResult {
  TrimPlan plan;
  CrowdingScore score_before;
  CrowdingScore score_after;
};

/// Joint downward-only trims across one feedline that separate the
/// hybridized modes of different pairs by at least guard_band while keeping
/// each pair matched. Exhaustive (branch and bound) for small feedlines,
/// greedy plus local search otherwise.
inline CrowdingResult plan_crowding_detailed(std::span<const PairRecords> pairs, double guard_band,
                                             const TrimModel& model, const CrowdingOptions& options = {}) {
  require(!pairs.empty(), ErrorCategory::domain, "plan_crowding needs at least one pair");
  require(guard_band >= 0, ErrorCategory::domain, "guard band must be non-negative");
  std::vector<std::vector<CrowdingCandidate>> cands;
  cands.reserve(pairs.size());
  for (const auto& pair : pairs) {
    auto c = crowding_candidates(pair, model);
    std::stable_sort(c.begin(), c.end(), [](const CrowdingCandidate& a, const CrowdingCandidate& b) {
      if (a.excess_mismatch_hz != b.excess_mismatch_hz) return a.excess_mismatch_hz < b.excess_mismatch_hz;
      return a.removed < b.removed;
    });
    cands.push_back(std::move(c));
  }

  detail::CrowdingSearch search(cands, guard_band);
  std::vector<std::size_t> idx = search.local_search(options.max_sweeps);
  if (pairs.size() <= options.exhaustive_limit) idx = search.exhaustive(idx);

  std::vector<const CrowdingCandidate*> before(pairs.size());
  std::vector<const CrowdingCandidate*> after(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto untouched = std::find_if(cands[i].begin(), cands[i].end(),
                                        [](const CrowdingCandidate& c) { return c.removed == 0; });
    before[i] = &*untouched;
    after[i] = &cands[i][idx[i]];
  }

  CrowdingResult out;
  out.score_before = crowding_score(before, guard_band);
  out.score_after = crowding_score(after, guard_band);
  TrimPlan& plan = out.plan;
  plan.crowding_violations_before = out.score_before.violations;
  plan.crowding_violations_after = out.score_after.violations;
  plan.min_spacing_before = min_mode_spacing(before);
  plan.min_spacing_after = min_mode_spacing(after);
  plan.infeasible = out.score_after.violations > 0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    plan.objective_before += std::abs(before[i]->f_p - before[i]->f_r);
    plan.objective_after += std::abs(after[i]->f_p - after[i]->f_r);
    if (after[i]->n_r > 0) plan.actions.push_back(make_action(pairs[i].readout, after[i]->n_r, model));
    if (after[i]->n_p > 0) plan.actions.push_back(make_action(pairs[i].purcell, after[i]->n_p, model));
  }
  return out;
}

inline TrimPlan plan_crowding(std::span<const PairRecords> pairs, double guard_band, const TrimModel& model,
                              const CrowdingOptions& options = {}) {
  return plan_crowding_detailed(pairs, guard_band, model, options).plan;
}

// ---------------------------------------------------------------------------
// Phase-velocity fit

struct TrimSample {
  double f0 = 0.0;       ///< frequency before removal [Hz]
  double delta_l = 0.0;  ///< length added [m]
  double delta_f = 0.0;  ///< measured shift [Hz]
};

struct NuRhoFit {
  double nu_rho = 0.0;        ///< [m/s]
  double residual_rms = 0.0;  ///< [Hz]
  std::size_t n_samples = 0;
};

/// Least squares of delta_f = -(4 f0^2 delta_l) * u over u = 1/nu_rho, which
/// is linear and solved in closed form.
inline NuRhoFit fit_nu_rho(std::span<const TrimSample> samples) {
  double sxx = 0.0;
  double sxy = 0.0;
  for (const auto& s : samples) {
    require(s.f0 > 0 && s.delta_l >= 0 && std::isfinite(s.delta_f), ErrorCategory::domain,
            "trim samples need f0 > 0 and delta_l >= 0");
    const double x = 4.0 * s.f0 * s.f0 * s.delta_l;
    sxx += x * x;
    sxy += x * s.delta_f;
  }
  require(sxx > 0, ErrorCategory::underdetermined, "fit_nu_rho needs at least one sample with delta_l > 0");
  const double u = -sxy / sxx;
  require(u > 0, ErrorCategory::domain, "measured shifts are not downward; phase velocity undefined");
  double ss = 0.0;
  for (const auto& s : samples) {
    const double r = s.delta_f + 4.0 * s.f0 * s.f0 * s.delta_l * u;
    ss += r * r;
  }
  return {1.0 / u, std::sqrt(ss / static_cast<double>(samples.size())), samples.size()};
}

// ---------------------------------------------------------------------------
// Applying plans and the two-cycle protocol

/// Frequency observed after carrying out `action` on `before`.
using TrimOutcome = std::function<double(const ResonatorRecord& before, const TrimAction& action)>;

/// Outcomes generated from the quarter-wave shift with a "true" phase velocity.
inline TrimOutcome simulated_outcome(double true_nu_rho) {
  require(true_nu_rho > 0, ErrorCategory::domain, "true phase velocity must be positive");
  return [true_nu_rho](const ResonatorRecord& before, const TrimAction& action) {
    return before.f_meas + freq_shift(before.f_meas, true_nu_rho, action.delta_l);
  };
}

inline void check_plan_budget(std::span<const PairRecords> device, const TrimPlan& plan) {
  std::set<std::string> seen;
  for (const auto& a : plan.actions) {
    require(seen.insert(a.resonator_id).second, ErrorCategory::validation,
            "plan has more than one action for resonator " + a.resonator_id);
    require(a.n_remove >= 0, ErrorCategory::validation, "negative removal count for " + a.resonator_id);
    const ResonatorRecord* target = nullptr;
    for (const auto& pair : device) {
      if (pair.readout.id == a.resonator_id) target = &pair.readout;
      if (pair.purcell.id == a.resonator_id) target = &pair.purcell;
    }
    require(target != nullptr, ErrorCategory::validation, "plan references unknown resonator " + a.resonator_id);
    require(a.n_remove <= target->shoelaces.remaining, ErrorCategory::budget,
            "plan removes " + std::to_string(a.n_remove) + " shoelaces from " + a.resonator_id + " but only " +
                std::to_string(target->shoelaces.remaining) + " remain");
  }
}

/// Applies a plan and returns the updated device; `realized` collects one
/// sample per action. Throws before changing anything if the plan overdraws
/// a shoelace budget.
inline std::vector<PairRecords> apply_plan(std::span<const PairRecords> device, const TrimPlan& plan,
                                           const TrimOutcome& outcome, std::vector<TrimSample>* realized = nullptr) {
  check_plan_budget(device, plan);
  std::vector<PairRecords> out(device.begin(), device.end());
  for (const auto& a : plan.actions) {
    for (auto& pair : out) {
      for (ResonatorRecord* r : {&pair.readout, &pair.purcell}) {
        if (r->id != a.resonator_id) continue;
        const double f_after = outcome(*r, a);
        if (realized) realized->push_back({r->f_meas, a.delta_l, f_after - r->f_meas});
        r->f_meas = f_after;
        r->shoelaces.remaining -= a.n_remove;
      }
    }
  }
  return out;
}

struct ProtocolConfig {
  double naive_slope = kNaiveSlope;  ///< cycle-1 slope [Hz/m]
};

struct TwoCycleResult {
  TrimPlan cycle1;
  std::vector<PairRecords> after_cycle1;
  std::vector<TrimSample> cycle1_samples;
  std::optional<NuRhoFit> nu_rho;  ///< absent when cycle 1 removed nothing
  TrimPlan cycle2;
};

/// Cycle 1 matches every pair with the naive slope; the realized shifts then
/// fix nu_rho, and cycle 2 re-plans from the cycle-1 characterization with the
/// quarter-wave expression. Frequencies are treated as dressed and the
/// dressing as unchanged by trimming.
inline TwoCycleResult two_cycle_protocol(std::span<const PairRecords> device, const TrimOutcome& cycle1_outcome,
                                         const ProtocolConfig& config = {}) {
  TwoCycleResult out;
  const TrimModel naive = TrimModel::naive(config.naive_slope);
  out.cycle1 = plan_pair_matching(device, naive, 1);
  out.after_cycle1 = apply_plan(device, out.cycle1, cycle1_outcome, &out.cycle1_samples);
  if (out.cycle1_samples.empty()) {
    out.cycle2 = plan_pair_matching(out.after_cycle1, naive, 2);
    return out;
  }
  out.nu_rho = fit_nu_rho(out.cycle1_samples);
  out.cycle2 = plan_pair_matching(out.after_cycle1, TrimModel::phase_velocity(out.nu_rho->nu_rho), 2);
  return out;
}

}  // namespace shoelace
