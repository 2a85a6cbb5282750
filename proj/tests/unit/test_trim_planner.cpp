#include <algorithm>
#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "shoelace/trim_planner.hpp"
#include "test_support.hpp"

using namespace shoelace;

namespace {

constexpr double kNu = 1.076e8;

ResonatorRecord resonator(const std::string& id, ResonatorRole role, double f, int remaining = 10) {
  ResonatorRecord r;
  r.id = id;
  r.role = role;
  r.f_meas = f;
  r.shoelaces.remaining = remaining;
  return r;
}

PairRecords pair(const std::string& id, double f_r, double f_p, double j = 10e6, double kappa = 3e6) {
  PairRecords p;
  p.id = id;
  p.readout = resonator(id + "R", ResonatorRole::readout, f_r);
  p.purcell = resonator(id + "P", ResonatorRole::purcell, f_p);
  p.params.j = j;
  p.params.kappa = kappa;
  p.params.chi = -1e6;
  return p;
}

// Brute force over every joint (n_R, n_P) assignment.
CrowdingScore brute_force(const std::vector<PairRecords>& pairs, double guard, const TrimModel& model) {
  std::vector<std::vector<CrowdingCandidate>> cands;
  for (const auto& p : pairs) cands.push_back(crowding_candidates(p, model));
  CrowdingScore best{std::numeric_limits<int>::max(), 0, 0};
  std::vector<std::size_t> idx(pairs.size(), 0);
  while (true) {
    CrowdingScore s;
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const auto& c = cands[i][idx[i]];
      s.excess_mismatch_hz += c.excess_mismatch_hz;
      s.removed += c.n_r + c.n_p;
      for (std::size_t k = 0; k < i; ++k)
        for (double x : c.modes)
          for (double y : cands[k][idx[k]].modes) s.violations += std::abs(x - y) < guard ? 1 : 0;
    }
    if (s < best) best = s;
    std::size_t d = 0;
    while (d < idx.size() && ++idx[d] == cands[d].size()) idx[d++] = 0;
    if (d == idx.size()) break;
  }
  return best;
}

}  // namespace

TEST(FreqShift, Values) {
  EXPECT_EQ(freq_shift(7.5e9, kNu, 0.0), 0.0);
  // mpmath: -10455390.3345725
  EXPECT_NEAR(freq_shift(7.5e9, kNu, 5e-6), -10455390.3345725, 1e-3);
  EXPECT_NEAR(freq_shift(7.5e9, kNu, 5e-6), -10.456e6, 1e3);
  // mpmath: -1997356.87732342 per um at 7.33 GHz
  const double per_um = freq_shift(7.33e9, kNu, 1e-6);
  EXPECT_NEAR(per_um, -1997356.87732342, 1e-4);
  EXPECT_NEAR(per_um / -2e6, 1.0, 0.02);
  // naive slope is exact at 7334848328.3569 Hz
  EXPECT_NEAR(freq_shift(7334848328.3569, kNu, 1e-6), -2e6, 1e-3);
  testing_support::expect_category(ErrorCategory::domain, [] { (void)freq_shift(7.5e9, kNu, -1e-6); });
}

TEST(FreqShift, ScaleConsistency) {
  EXPECT_NEAR(freq_shift(7.5e9, kNu, 3 * 5e-6), 3 * freq_shift(7.5e9, kNu, 5e-6), 1e-6);
}

TEST(ShiftToCount, Examples) {
  EXPECT_EQ(shift_to_count(7.5e9, kNu, 0.0, 10, 5e-6), 0);
  EXPECT_EQ(shift_to_count(7.5e9, kNu, -21e6, 10, 5e-6), 2);
  EXPECT_NEAR(freq_shift(7.5e9, kNu, 2 * 5e-6), -20910780.6691, 1e-3);
  try {
    (void)shift_to_count(7.5e9, kNu, -150e6, 10, 5e-6);
    FAIL() << "expected out-of-range";
  } catch (const OutOfRangeError& e) {
    EXPECT_EQ(e.category(), ErrorCategory::out_of_range);
    // mpmath: -104553903.346
    EXPECT_NEAR(e.max_shift_hz(), -104553903.346, 1e-2);
  }
  testing_support::expect_category(ErrorCategory::domain, [] { (void)shift_to_count(7.5e9, kNu, 1e6, 10, 5e-6); });
}

TEST(ShiftToCount, TiesGoToFewerRemovals) {
  const TrimModel naive = TrimModel::naive();
  // quantum is exactly 10 MHz; -15 MHz sits between n = 1 and n = 2
  EXPECT_EQ(shift_to_count(7.5e9, naive, -15e6, 10, 5e-6), 1);
  EXPECT_EQ(shift_to_count(7.5e9, naive, -15.001e6, 10, 5e-6), 2);
}

TEST(ShiftToCount, EdgeOfRangeStillAccepted) {
  const double full = freq_shift(7.5e9, kNu, 10 * 5e-6);
  const double q = -freq_shift(7.5e9, kNu, 5e-6);
  EXPECT_EQ(shift_to_count(7.5e9, kNu, full - 0.49 * q, 10, 5e-6), 10);
  testing_support::expect_category(ErrorCategory::out_of_range,
                                   [&] { (void)shift_to_count(7.5e9, kNu, full - 0.51 * q, 10, 5e-6); });
}

TEST(PlanPairMatch, Examples) {
  const TrimModel model = TrimModel::phase_velocity(kNu);
  const auto same = plan_pair_match(resonator("R", ResonatorRole::readout, 7.5e9),
                                    resonator("P", ResonatorRole::purcell, 7.5e9), model);
  EXPECT_EQ(same.n_remove, 0);

  const auto up = plan_pair_match(resonator("R", ResonatorRole::readout, 7.5e9),
                                  resonator("P", ResonatorRole::purcell, 7.521e9), model);
  EXPECT_EQ(up.resonator_id, "P");
  EXPECT_EQ(up.n_remove, 2);
  EXPECT_LT(std::abs(up.predicted_f - 7.5e9), 5e6);

  const auto down = plan_pair_match(resonator("R", ResonatorRole::readout, 7.521e9),
                                    resonator("P", ResonatorRole::purcell, 7.5e9), model);
  EXPECT_EQ(down.resonator_id, "R");
  EXPECT_EQ(down.n_remove, 2);
  EXPECT_LT(std::abs(down.predicted_f - 7.5e9), 5e6);
}

TEST(PlanPairMatch, UnmatchableWithoutShoelaces) {
  const TrimModel model = TrimModel::phase_velocity(kNu);
  testing_support::expect_category(ErrorCategory::unmatchable, [&] {
    (void)plan_pair_match(resonator("R", ResonatorRole::readout, 7.5e9),
                          resonator("P", ResonatorRole::purcell, 7.53e9, 0), model);
  });
  // within half a quantum nothing is needed even with an empty budget
  const auto a = plan_pair_match(resonator("R", ResonatorRole::readout, 7.5e9),
                                 resonator("P", ResonatorRole::purcell, 7.503e9, 0), model);
  EXPECT_EQ(a.n_remove, 0);
}

TEST(PlanPairMatch, RoleCheck) {
  const TrimModel model = TrimModel::phase_velocity(kNu);
  testing_support::expect_category(ErrorCategory::domain, [&] {
    (void)plan_pair_match(resonator("P", ResonatorRole::purcell, 7.5e9),
                          resonator("R", ResonatorRole::readout, 7.5e9), model);
  });
}

TEST(PlanPairMatching, MonotoneQuantizedAndIdempotent) {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> f0(7.0e9, 7.9e9), gap(-60e6, 60e6);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<PairRecords> dev;
    for (int k = 0; k < 6; ++k) {
      const double f = f0(rng);
      dev.push_back(pair("p" + std::to_string(k), f, f + gap(rng)));
    }
    const TrimModel model = TrimModel::phase_velocity(kNu);
    const TrimPlan plan = plan_pair_matching(dev, model, 1);
    EXPECT_LE(plan.objective_after, plan.objective_before);
    std::set<std::string> seen;
    for (const auto& a : plan.actions) {
      EXPECT_TRUE(seen.insert(a.resonator_id).second);
      EXPECT_LE(a.predicted_delta_f, 0.0);
      EXPECT_GT(a.n_remove, 0);
      const auto it = std::find_if(dev.begin(), dev.end(), [&](const PairRecords& p) {
        return p.readout.id == a.resonator_id || p.purcell.id == a.resonator_id;
      });
      const ResonatorRecord& r = it->readout.id == a.resonator_id ? it->readout : it->purcell;
      EXPECT_LE(a.n_remove, r.shoelaces.remaining);
      EXPECT_EQ(a.predicted_f, r.f_meas + freq_shift(r.f_meas, kNu, a.n_remove * r.shoelaces.pitch));
    }
    // carrying out the plan exactly leaves nothing to do
    const auto after = apply_plan(dev, plan, [](const ResonatorRecord&, const TrimAction& a) { return a.predicted_f; });
    for (const auto& p : after) {
      EXPECT_GE(p.readout.shoelaces.remaining, 0);
      EXPECT_GE(p.purcell.shoelaces.remaining, 0);
    }
    // the quantum of whichever resonator ends up higher can be slightly
    // smaller, so at most one more shoelace per pair
    const TrimPlan again = plan_pair_matching(after, model, 2);
    for (const auto& a : again.actions) EXPECT_EQ(a.n_remove, 1);
  }
}

TEST(PlanPairMatching, EmptyWhenAlreadyMatched) {
  std::mt19937_64 rng(36);
  std::uniform_real_distribution<double> f0(7.0e9, 7.9e9), frac(-0.5, 0.5);
  const TrimModel model = TrimModel::phase_velocity(kNu);
  std::vector<PairRecords> dev;
  for (int k = 0; k < 17; ++k) {
    const double f = f0(rng);
    const double q = model.quantum(f, kShoelacePitch);
    // quantum of the higher member is at least q
    dev.push_back(pair("p" + std::to_string(k), f, f + frac(rng) * q));
  }
  EXPECT_TRUE(plan_pair_matching(dev, model, 1).empty());
}

TEST(ApplyPlan, RejectsOverdrawAndUnknownIds) {
  std::vector<PairRecords> dev{pair("a", 7.5e9, 7.56e9)};
  dev[0].purcell.shoelaces.remaining = 2;
  TrimPlan plan;
  plan.actions.push_back(make_action(dev[0].purcell, 3, TrimModel::naive()));
  testing_support::expect_category(ErrorCategory::budget,
                                   [&] { (void)apply_plan(dev, plan, simulated_outcome(kNu)); });
  TrimPlan bogus;
  TrimAction a;
  a.resonator_id = "nope";
  a.n_remove = 1;
  bogus.actions.push_back(a);
  testing_support::expect_category(ErrorCategory::validation,
                                   [&] { (void)apply_plan(dev, bogus, simulated_outcome(kNu)); });
  TrimPlan twice;
  twice.actions.push_back(make_action(dev[0].purcell, 1, TrimModel::naive()));
  twice.actions.push_back(make_action(dev[0].purcell, 1, TrimModel::naive()));
  testing_support::expect_category(ErrorCategory::validation,
                                   [&] { (void)apply_plan(dev, twice, simulated_outcome(kNu)); });
}

TEST(FitNuRho, ExactRoundTrip) {
  std::vector<TrimSample> s;
  std::mt19937_64 rng(32);
  std::uniform_real_distribution<double> f0(7.0e9, 8.0e9);
  for (int k = 0; k < 20; ++k) {
    const double f = f0(rng);
    const double dl = (1 + k % 4) * 5e-6;
    s.push_back({f, dl, freq_shift(f, kNu, dl)});
  }
  const auto fit = fit_nu_rho(s);
  EXPECT_NEAR(fit.nu_rho / kNu, 1.0, 1e-6);
  EXPECT_LT(fit.residual_rms, 1e-3);
  EXPECT_EQ(fit.n_samples, 20u);
}

TEST(FitNuRho, SingleSampleInterpolates) {
  const std::vector<TrimSample> s{{7.6e9, 10e-6, -21.3e6}};
  const auto fit = fit_nu_rho(s);
  EXPECT_NEAR(freq_shift(7.6e9, fit.nu_rho, 10e-6), -21.3e6, 1e-6);
  EXPECT_NEAR(fit.residual_rms, 0.0, 1e-6);
}

TEST(FitNuRho, Errors) {
  const std::vector<TrimSample> none{{7.6e9, 0.0, 0.0}, {7.7e9, 0.0, 1e3}};
  testing_support::expect_category(ErrorCategory::underdetermined, [&] { (void)fit_nu_rho(none); });
  const std::vector<TrimSample> up{{7.6e9, 5e-6, 1e6}};
  testing_support::expect_category(ErrorCategory::domain, [&] { (void)fit_nu_rho(up); });
}

TEST(FitNuRho, ScaleConsistent) {
  std::vector<TrimSample> s{{7.4e9, 5e-6, -10.1e6}, {7.9e9, 10e-6, -23.0e6}, {7.1e9, 15e-6, -28.4e6}};
  const double nu = fit_nu_rho(s).nu_rho;
  for (auto& x : s) {
    x.delta_l *= 3.0;
    x.delta_f *= 3.0;
  }
  EXPECT_NEAR(fit_nu_rho(s).nu_rho / nu, 1.0, 1e-12);
}

TEST(FitNuRho, MultiplicativeNoiseMonteCarlo) {
  std::vector<double> err;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> f0(7.0e9, 8.0e9);
    std::normal_distribution<double> noise(0.0, 0.05);
    // two shoelaces per sample; spreading the lengths inflates the LS variance
    std::vector<TrimSample> s;
    for (int k = 0; k < 32; ++k) {
      const double f = f0(rng);
      const double dl = 2 * 5e-6;
      s.push_back({f, dl, freq_shift(f, kNu, dl) * (1.0 + noise(rng))});
    }
    err.push_back(std::abs(fit_nu_rho(s).nu_rho / kNu - 1.0));
  }
  std::sort(err.begin(), err.end());
  EXPECT_LT(err[94], 0.02);
}

TEST(TwoCycle, NaiveSlopeOvershootsAboveCrossover) {
  std::vector<PairRecords> dev;
  for (int k = 0; k < 8; ++k) {
    const double f = 7.75e9 + k * 15e6;
    dev.push_back(pair("p" + std::to_string(k), f, f + 25e6 + k * 3e6));
  }
  const auto res = two_cycle_protocol(dev, simulated_outcome(kNu));
  ASSERT_EQ(res.cycle1_samples.size(), res.cycle1.actions.size());
  for (std::size_t k = 0; k < res.cycle1.actions.size(); ++k)
    EXPECT_GT(std::abs(res.cycle1_samples[k].delta_f), std::abs(res.cycle1.actions[k].predicted_delta_f));
  ASSERT_TRUE(res.nu_rho.has_value());
  EXPECT_NEAR(res.nu_rho->nu_rho / kNu, 1.0, 1e-9);
}

TEST(TwoCycle, NaiveSlopeExactAtCrossover) {
  const double f = 7334848328.3569;
  std::vector<PairRecords> dev{pair("a", f - 21e6, f), pair("b", f - 41e6, f)};
  const auto res = two_cycle_protocol(dev, simulated_outcome(kNu));
  for (const auto& p : res.after_cycle1) EXPECT_LT(std::abs(p.purcell.f_meas - p.readout.f_meas), 10e6);
  EXPECT_TRUE(res.cycle2.empty());
}

TEST(TwoCycle, ThirtyFourResonatorDevice) {
  std::mt19937_64 rng(33);
  std::uniform_real_distribution<double> f0(7.1e9, 7.95e9), gap(-55e6, 55e6);
  std::vector<PairRecords> dev;
  for (int k = 0; k < 17; ++k) {
    const double f = f0(rng);
    dev.push_back(pair("q" + std::to_string(k), f, f + gap(rng)));
  }
  const auto res = two_cycle_protocol(dev, simulated_outcome(kNu));
  const auto final_dev = apply_plan(res.after_cycle1, res.cycle2, simulated_outcome(kNu));
  double sum = 0.0, worst = 0.0;
  for (const auto& p : final_dev) {
    const double d = std::abs(p.purcell.f_meas - p.readout.f_meas);
    sum += d;
    worst = std::max(worst, d);
  }
  EXPECT_LE(sum / 17.0, 5e6);
  EXPECT_LE(worst, 10e6);
}

TEST(Crowding, AlreadySeparatedAndMatchedIsEmpty) {
  std::vector<PairRecords> dev{pair("a", 7.3e9, 7.3e9), pair("b", 7.4e9, 7.4e9), pair("c", 7.5e9, 7.5e9)};
  const TrimPlan plan = plan_crowding(dev, 20e6, TrimModel::phase_velocity(kNu));
  EXPECT_TRUE(plan.empty());
  EXPECT_FALSE(plan.infeasible);
}

TEST(Crowding, ThreePairFixtureReachesGuardBandOptimally) {
  // modes 7.290/7.310, 7.305/7.325 (5 MHz apart), 7.490/7.510
  std::vector<PairRecords> dev{pair("a", 7.300e9, 7.300e9), pair("b", 7.315e9, 7.315e9), pair("c", 7.500e9, 7.500e9)};
  const TrimModel model = TrimModel::phase_velocity(kNu);
  const auto res = plan_crowding_detailed(dev, 20e6, model);
  // A-high/B-low at 5 MHz, A-low/B-low and A-high/B-high at 15 MHz
  EXPECT_EQ(res.score_before.violations, 3);
  EXPECT_NEAR(res.plan.min_spacing_before, 5e6, 0.1e6);
  EXPECT_GE(res.plan.min_spacing_after, 20e6);
  EXPECT_EQ(res.score_after.violations, 0);
  EXPECT_FALSE(res.plan.infeasible);
  EXPECT_EQ(res.score_after, brute_force(dev, 20e6, model));
}

TEST(Crowding, SinglePairReducesToPairMatch) {
  const TrimModel model = TrimModel::phase_velocity(kNu);
  for (double gap : {-47e6, -21e6, -3e6, 0.0, 8e6, 21e6, 63e6}) {
    std::vector<PairRecords> dev{pair("a", 7.5e9, 7.5e9 + gap)};
    const TrimPlan plan = plan_crowding(dev, 20e6, model);
    const TrimAction ref = plan_pair_match(dev[0].readout, dev[0].purcell, model);
    if (ref.n_remove == 0) {
      EXPECT_TRUE(plan.empty()) << gap;
    } else {
      ASSERT_EQ(plan.actions.size(), 1u) << gap;
      EXPECT_EQ(plan.actions[0].resonator_id, ref.resonator_id);
      EXPECT_EQ(plan.actions[0].n_remove, ref.n_remove);
    }
  }
}

TEST(Crowding, OptimalOnRandomSmallFeedlines) {
  std::mt19937_64 rng(34);
  std::uniform_real_distribution<double> f0(7.3e9, 7.4e9), gap(-25e6, 25e6);
  const TrimModel model = TrimModel::phase_velocity(kNu);
  for (int trial = 0; trial < 6; ++trial) {
    std::vector<PairRecords> dev;
    for (int k = 0; k < 3; ++k) {
      const double f = f0(rng);
      dev.push_back(pair("p" + std::to_string(k), f, f + gap(rng)));
      dev.back().readout.shoelaces.remaining = 4;
      dev.back().purcell.shoelaces.remaining = 4;
    }
    const auto res = plan_crowding_detailed(dev, 15e6, model);
    EXPECT_EQ(res.score_after, brute_force(dev, 15e6, model));
    for (const auto& a : res.plan.actions) EXPECT_LE(a.predicted_delta_f, 0.0);
  }
}

TEST(Crowding, LocalSearchDoesNotWorsenLargeFeedlines) {
  std::mt19937_64 rng(35);
  std::uniform_real_distribution<double> f0(7.2e9, 7.6e9), gap(-30e6, 30e6);
  std::vector<PairRecords> dev;
  for (int k = 0; k < 7; ++k) {
    const double f = f0(rng);
    dev.push_back(pair("p" + std::to_string(k), f, f + gap(rng)));
  }
  const auto res = plan_crowding_detailed(dev, 20e6, TrimModel::phase_velocity(kNu));
  EXPECT_LE(res.score_after, res.score_before);
  EXPECT_TRUE(res.plan.infeasible == (res.score_after.violations > 0));
}

TEST(Crowding, DefaultGuardBandIsThreeWidestLinewidths) {
  std::vector<PairRecords> dev{pair("a", 7.3e9, 7.3e9, 10e6, 3e6), pair("b", 7.4e9, 7.45e9, 10e6, 5e6)};
  // b is 50 MHz off so its Purcell-like mode carries most of the 5 MHz
  const auto w = kappa_eff_pair(10e6, 5e6, 50e6);
  EXPECT_NEAR(default_guard_band(dev), 3.0 * w.purcell_like, 1.0);
  EXPECT_GT(default_guard_band(dev), 3.0 * 0.9 * 5e6);
}
