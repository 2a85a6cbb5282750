// shoelace: command-line front end for the measure -> fit -> plan -> apply loop.

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "shoelace/shoelace.hpp"

namespace {

using namespace shoelace;

int exit_code(ErrorCategory c) { return 10 + static_cast<int>(c); }

void emit_error(const Error& e) {
  json err = {{"category", std::string(category_name(e.category()))}, {"message", e.what()}};
  if (const auto* p = dynamic_cast<const ParseError*>(&e)) err["line"] = p->line();
  if (const auto* v = dynamic_cast<const ValidationError*>(&e)) err["problems"] = v->problems();
  if (const auto* o = dynamic_cast<const OutOfRangeError*>(&e)) err["max_shift_hz"] = o->max_shift_hz();
  std::cerr << json{{"error", err}}.dump() << std::endl;
}

// Writes to `path`, or stdout when empty.
void write_output(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    std::cout.flush();
  } else {
    write_file_atomic(path, text);
  }
}

json load_json_file(const std::string& path) { return parse_json_text(read_file(path), path); }

S21Model parse_model(const std::string& s) { return s == "full" ? S21Model::full : S21Model::ideal; }

QubitState parse_state(const std::string& s) { return s == "excited" ? QubitState::excited : QubitState::ground; }

std::string state_name(QubitState s) { return s == QubitState::ground ? "ground" : "excited"; }

std::optional<double> latest_nu_rho(const DeviceRegistry& reg) {
  for (auto it = reg.history.rbegin(); it != reg.history.rend(); ++it)
    if (it->value("kind", "") == "nu-rho-fit") return (*it)["nu_rho"].get<double>();
  return std::nullopt;
}

std::vector<std::string> latest_fit_ids(const DeviceRegistry& reg, const std::vector<std::string>& pairs) {
  std::vector<std::string> ids;
  for (const auto& p : pairs) {
    for (auto it = reg.history.rbegin(); it != reg.history.rend(); ++it) {
      if (it->value("kind", "") == "fit" && it->value("pair", "") == p && it->value("applied", false)) {
        ids.push_back((*it)["id"]);
        break;
      }
    }
  }
  return ids;
}

// ---------------------------------------------------------------------------

struct FitArgs {
  std::string trace, model = "ideal", registry, pair, state, out;
  bool no_baseline = false;
};

int run_fit(const FitArgs& a) {
  const TransmissionTrace raw = load_trace(a.trace);
  const QubitState state = !a.state.empty() ? parse_state(a.state) : raw.qubit_state.value_or(QubitState::ground);
  const S21Model model = parse_model(a.model);
  FitResult fit;
  if (a.no_baseline) {
    fit = fit_pair(raw, initial_guess(raw), model);
  } else {
    fit = fit_trace(raw, model);
  }
  fit.warnings.insert(fit.warnings.begin(), raw.warnings.begin(), raw.warnings.end());
  json rec = fit_to_json(fit);
  rec["kind"] = "fit";
  rec["trace"] = raw.source_id;
  rec["state"] = state_name(state);

  if (!a.registry.empty()) {
    require(!a.pair.empty(), ErrorCategory::validation, "--registry needs --pair");
    DeviceRegistry reg = load_registry(a.registry);
    PairEntry* pair = reg.find_pair(a.pair);
    require(pair != nullptr, ErrorCategory::validation, "unknown pair '" + a.pair + "'");
    rec["pair"] = a.pair;
    rec["cycle"] = reg.current_cycle;
    rec["applied"] = fit.converged;
    if (fit.converged) {
      ResonatorEntry* r = reg.find_resonator(pair->readout);
      ResonatorEntry* p = reg.find_resonator(pair->purcell);
      if (state == QubitState::ground) {
        r->record.f_meas = fit.params.f_r;
        p->record.f_meas = fit.params.f_p;
        pair->params.j = fit.params.j;
        pair->params.kappa = fit.params.kappa;
        if (model == S21Model::full) {
          pair->params.gamma_r = fit.params.gamma_r;
          pair->params.gamma_p = fit.params.gamma_p;
          pair->params.kappa_drive = fit.params.kappa_drive;
        }
      } else {
        pair->params.chi = fit.params.f_r - r->record.f_meas;
        rec["chi"] = pair->params.chi;
      }
    } else {
      std::cerr << "warning: fit did not converge; registry values left unchanged\n";
    }
    rec = append_history(reg, rec, "fit");
    save_registry(a.registry, reg);
  }
  write_output(a.out, rec.dump(2) + "\n");
  return 0;
}

struct PlanArgs {
  std::string registry, out, feedline;
  std::vector<std::string> pairs;
  bool all_pairs = false, naive = false;
  std::optional<double> nu_rho, slope, guard_band;
};

TrimModel chosen_model(const PlanArgs& a, const DeviceRegistry& reg) {
  if (a.nu_rho) return TrimModel::phase_velocity(*a.nu_rho);
  if (a.slope) return TrimModel::naive(*a.slope);
  if (a.naive) return TrimModel::naive();
  if (const auto nu = latest_nu_rho(reg)) return TrimModel::phase_velocity(*nu);
  return TrimModel::naive();
}

int run_plan_pair(const PlanArgs& a) {
  const DeviceRegistry reg = load_registry(a.registry);
  require(a.all_pairs || !a.pairs.empty(), ErrorCategory::validation, "give --pair or --all-pairs");
  std::vector<std::string> ids = a.pairs;
  if (a.all_pairs) {
    ids.clear();
    for (const auto& p : reg.pairs) ids.push_back(p.id);
  }
  const TrimModel model = chosen_model(a, reg);
  const auto recs = pair_records(reg, ids);
  const TrimPlan plan = plan_pair_matching(recs, model, reg.current_cycle + 1);
  PlanProvenance prov;
  prov.kind = "pair-match";
  prov.device_id = reg.device_id;
  prov.model = model;
  prov.pairs = ids;
  prov.input_fit_ids = latest_fit_ids(reg, ids);
  write_output(a.out, plan_to_json(plan, prov).dump(2) + "\n");
  return 0;
}

int run_plan_crowding(const PlanArgs& a) {
  const DeviceRegistry reg = load_registry(a.registry);
  std::vector<std::string> ids;
  for (const auto& p : reg.pairs)
    if (p.feedline == a.feedline) ids.push_back(p.id);
  require(!ids.empty(), ErrorCategory::validation, "no pairs on feedline '" + a.feedline + "'");
  const TrimModel model = chosen_model(a, reg);
  const auto recs = pair_records(reg, ids);
  const double guard = a.guard_band.value_or(default_guard_band(recs));
  TrimPlan plan = plan_crowding(recs, guard, model);
  plan.cycle_index = reg.current_cycle + 1;
  PlanProvenance prov;
  prov.kind = "crowding";
  prov.device_id = reg.device_id;
  prov.model = model;
  prov.pairs = ids;
  prov.guard_band = guard;
  prov.input_fit_ids = latest_fit_ids(reg, ids);
  write_output(a.out, plan_to_json(plan, prov).dump(2) + "\n");
  return 0;
}

struct ApplyArgs {
  std::string registry, plan;
  std::optional<double> true_nu_rho;
};

int run_apply(const ApplyArgs& a) {
  DeviceRegistry reg = load_registry(a.registry);
  const PlanDocument doc = plan_from_json(load_json_file(a.plan));
  require(doc.provenance.device_id == reg.device_id, ErrorCategory::validation,
          "plan is for device '" + doc.provenance.device_id + "', registry holds '" + reg.device_id + "'");
  require(doc.plan.cycle_index == reg.current_cycle + 1, ErrorCategory::validation,
          "plan targets cycle " + std::to_string(doc.plan.cycle_index) + " but the registry expects cycle " +
              std::to_string(reg.current_cycle + 1));
  check_plan_budget(pair_records(reg), doc.plan);

  json actions = json::array();
  for (const auto& act : doc.plan.actions) {
    ResonatorEntry* r = reg.find_resonator(act.resonator_id);
    const double before = r->record.f_meas;
    json entry = {{"resonator", act.resonator_id},
                  {"n_remove", act.n_remove},
                  {"delta_l", act.delta_l},
                  {"f_before", before},
                  {"predicted_delta_f", act.predicted_delta_f},
                  {"f_after_measured", nullptr}};
    if (a.true_nu_rho) {
      const double after = before + freq_shift(before, *a.true_nu_rho, act.delta_l);
      entry["f_after_measured"] = after;
      r->record.f_meas = after;
    } else {
      // best estimate until the next characterization
      r->record.f_meas = before + act.predicted_delta_f;
    }
    r->record.shoelaces.remaining -= act.n_remove;
    actions.push_back(std::move(entry));
  }
  json rec = {{"kind", "apply"},
              {"cycle", doc.plan.cycle_index},
              {"plan_kind", doc.provenance.kind},
              {"slope_mode", doc.provenance.model.mode_name()},
              {"simulated", a.true_nu_rho.has_value()},
              {"actions", actions}};
  if (a.true_nu_rho) rec["true_nu_rho"] = *a.true_nu_rho;
  reg.current_cycle = doc.plan.cycle_index;
  rec = append_history(reg, rec, "apply");
  save_registry(a.registry, reg);
  std::cout << rec.dump(2) << "\n";
  return 0;
}

// Realized shift per action of cycle `cycle`: the simulated/measured value on
// the apply record, else the first later converged ground-state fit.
std::vector<TrimSample> cycle_samples(const DeviceRegistry& reg, int cycle) {
  std::vector<TrimSample> out;
  const auto& h = reg.history;
  for (std::size_t k = 0; k < h.size(); ++k) {
    if (h[k].value("kind", "") != "apply" || h[k].value("cycle", -1) != cycle) continue;
    for (const auto& act : h[k]["actions"]) {
      const std::string res = act["resonator"];
      const double before = act["f_before"];
      std::optional<double> after;
      if (act["f_after_measured"].is_number()) after = act["f_after_measured"].get<double>();
      for (std::size_t m = k + 1; !after && m < h.size(); ++m) {
        if (h[m].value("kind", "") != "fit" || !h[m].value("applied", false) || h[m].value("state", "") != "ground")
          continue;
        const PairEntry* pair = reg.find_pair(h[m].value("pair", ""));
        if (!pair) continue;
        if (pair->readout == res) after = h[m]["params"]["f_r"].get<double>();
        if (pair->purcell == res) after = h[m]["params"]["f_p"].get<double>();
      }
      if (after) out.push_back({before, act["delta_l"].get<double>(), *after - before});
    }
  }
  return out;
}

int run_fit_nu_rho(const std::string& registry, int cycle) {
  DeviceRegistry reg = load_registry(registry);
  const auto samples = cycle_samples(reg, cycle);
  require(!samples.empty(), ErrorCategory::underdetermined,
          "no realized trims with a measured outcome for cycle " + std::to_string(cycle));
  const NuRhoFit fit = fit_nu_rho(samples);
  json rec = {{"kind", "nu-rho-fit"},
              {"cycle", cycle},
              {"nu_rho", fit.nu_rho},
              {"residual_rms", fit.residual_rms},
              {"n_samples", fit.n_samples}};
  rec = append_history(reg, rec, "nu-rho");
  save_registry(registry, reg);
  std::cout << rec.dump(2) << "\n";
  return 0;
}

struct TraceArgs {
  std::string params, registry, pair, state = "ground", model = "ideal", out;
  double noise = 0.0;
  std::uint64_t seed = 0;
  std::size_t points = 4001;
  std::optional<double> span, center;
};

int run_simulate_trace(const TraceArgs& a) {
  PairParams p;
  if (!a.params.empty()) p = params_from_json(load_json_file(a.params));
  else {
    require(!a.registry.empty() && !a.pair.empty(), ErrorCategory::validation,
            "give --params or --registry with --pair");
    p = pair_params(load_registry(a.registry), a.pair);
  }
  validate(p);
  const double detuning = std::abs(p.delta_pr());
  const double span = a.span.value_or(std::max(40e6, 3.0 * detuning + 8.0 * p.j + 6.0 * p.kappa));
  const double center = a.center.value_or(0.5 * (p.f_r + p.f_p));
  require(a.points >= 2, ErrorCategory::validation, "need at least two points");
  const auto freqs = linspace(center - 0.5 * span, center + 0.5 * span, a.points);
  TraceSynthesis syn;
  syn.model = parse_model(a.model);
  syn.state = parse_state(a.state);
  syn.noise_sigma = a.noise;
  syn.seed = a.seed;
  TransmissionTrace t = synthesize_trace(p, freqs, syn);
  t.source_id = a.pair.empty() ? "simulated" : "simulated:" + a.pair;
  std::ostringstream ss;
  write_trace(ss, t);
  write_output(a.out, ss.str());
  return 0;
}

int run_simulate_anneal(const std::string& config, const std::string& out) {
  const AnnealScenario s = anneal_scenario_from_json(load_json_file(config));
  LogAnnealResponse response(s.curves);
  const AnnealTrace trace = anneal_closed_loop(s.config, response);
  std::ostringstream ss;
  ss << "# status: " << status_name(trace.status) << "\n";
  ss << "# violations: " << trace.violations << "\n";
  write_anneal(ss, trace);
  write_output(out, ss.str());
  return 0;
}

struct ReadoutArgs {
  std::string model, out, registry, transmon;
  std::size_t n = 10000;
  std::uint64_t seed = 0;
  std::vector<std::string> axes;
};

json benchmarks_json(const ReadoutBenchmarks& b) {
  json j = {{"f_ro", b.f_ro}, {"eps_ro", b.eps_ro}, {"threshold", b.threshold}, {"axis", {b.axis.i, b.axis.q}}};
  if (b.p_qnd) j["p_qnd"] = *b.p_qnd;
  return j;
}

int run_simulate_readout(const ReadoutArgs& a) {
  const BlobModel model = blob_model_from_json(load_json_file(a.model));
  const ShotSet shots = synth_shots(model, a.n, a.seed);
  std::ostringstream ss;
  write_shots(ss, shots);
  write_output(a.out, ss.str());
  json rec = benchmarks_json(assignment_fidelity(shots));
  rec["kind"] = "readout-benchmark";
  rec["n_per_state"] = a.n;
  rec["seed"] = a.seed;
  if (!a.registry.empty()) {
    DeviceRegistry reg = load_registry(a.registry);
    require(reg.find_transmon(a.transmon) != nullptr, ErrorCategory::validation,
            "unknown transmon '" + a.transmon + "'");
    rec["transmon"] = a.transmon;
    rec = append_history(reg, rec, "readout");
    save_registry(a.registry, reg);
  }
  // with the shots on stdout the summary goes to stderr
  (a.out.empty() || a.out == "-" ? std::cerr : std::cout) << rec.dump(2) << "\n";
  return 0;
}

int run_readout_sweep(const ReadoutArgs& a) {
  const BlobModel base = blob_model_from_json(load_json_file(a.model));
  std::vector<SweepAxis> axes;
  for (const auto& spec : a.axes) {
    const auto eq = spec.find('=');
    require(eq != std::string::npos, ErrorCategory::validation, "axis must look like name=v1,v2,...");
    SweepAxis ax;
    ax.name = spec.substr(0, eq);
    std::stringstream vs(spec.substr(eq + 1));
    std::string item;
    while (std::getline(vs, item, ',')) {
      char* end = nullptr;
      const double v = std::strtod(item.c_str(), &end);
      require(end && *end == '\0' && !item.empty(), ErrorCategory::parse, "bad axis value '" + item + "'");
      ax.values.push_back(v);
    }
    axes.push_back(std::move(ax));
  }
  const auto points = sweep_readout(base, axes, a.n, a.seed);
  std::ostringstream ss;
  for (const auto& ax : axes) ss << ax.name << ',';
  ss << "f_ro,eps_ro\n";
  for (const auto& pt : points) {
    for (double c : pt.coords) ss << format_double(c) << ',';
    ss << format_double(pt.benchmarks.f_ro) << ',' << format_double(pt.benchmarks.eps_ro) << "\n";
  }
  write_output(a.out, ss.str());
  return 0;
}

int run_report(const std::string& registry, bool as_json, double tolerance) {
  const DeviceRegistry reg = load_registry(registry);
  json rows = json::array();
  for (const auto& pr : pair_records(reg)) {
    const PairParams p = pr.current_params();
    const HybridModes modes = eigenmodes(p, QubitState::ground);
    const double delta = p.delta_pr();
    rows.push_back({{"pair", pr.id},
                    {"f_r", p.f_r},
                    {"f_p", p.f_p},
                    {"delta_pr", delta},
                    {"kappa_eff_low", modes.low.kappa_eff},
                    {"kappa_eff_high", modes.high.kappa_eff},
                    {"matching_figure_low", matching_figure(modes.low)},
                    {"matching_figure_high", matching_figure(modes.high)},
                    {"matching_figure", matching_figure(modes.readout_like())},
                    {"shoelaces_r", pr.readout.shoelaces.remaining},
                    {"shoelaces_p", pr.purcell.shoelaces.remaining},
                    {"ok", std::abs(delta) <= tolerance}});
  }
  if (as_json) {
    std::cout << json{{"device_id", reg.device_id}, {"cycle", reg.current_cycle}, {"pairs", rows}}.dump(2) << "\n";
    return 0;
  }
  std::printf("%-8s %14s %14s %10s %10s %10s %6s %6s %5s %5s %s\n", "pair", "f_R[Hz]", "f_P[Hz]", "dPR[MHz]",
              "kLo[MHz]", "kHi[MHz]", "MFlo", "MFhi", "nR", "nP", "ok");
  for (const auto& r : rows) {
    std::printf("%-8s %14.0f %14.0f %10.3f %10.3f %10.3f %6.2f %6.2f %5d %5d %s\n",
                r["pair"].get<std::string>().c_str(), r["f_r"].get<double>(), r["f_p"].get<double>(),
                r["delta_pr"].get<double>() / 1e6, r["kappa_eff_low"].get<double>() / 1e6,
                r["kappa_eff_high"].get<double>() / 1e6, r["matching_figure_low"].get<double>(),
                r["matching_figure_high"].get<double>(), r["shoelaces_r"].get<int>(), r["shoelaces_p"].get<int>(),
                r["ok"].get<bool>() ? "OK" : "-");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Readout/Purcell pair calibration: fitting, shoelace trim planning, simulation and reports"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "shoelace 0.1.0");
  const auto registry_opt = [](CLI::App* sub, std::string& target, bool required) {
    auto* opt = sub->add_option("--registry", target, "device registry JSON")->envname("SHOELACE_REGISTRY");
    if (required) opt->required();
  };

  FitArgs fit;
  auto* fit_cmd = app.add_subcommand("fit", "fit a transmission trace");
  fit_cmd->add_option("--trace", fit.trace, "trace CSV")->required();
  fit_cmd->add_option("--model", fit.model, "ideal or full")->check(CLI::IsMember({"ideal", "full"}));
  registry_opt(fit_cmd, fit.registry, false);
  fit_cmd->add_option("--pair", fit.pair, "pair id to update");
  fit_cmd->add_option("--state", fit.state, "ground or excited (default: trace metadata)")
      ->check(CLI::IsMember({"ground", "excited"}));
  fit_cmd->add_flag("--no-baseline", fit.no_baseline, "skip background removal");
  fit_cmd->add_option("--out", fit.out, "write the fit record here instead of stdout");

  PlanArgs plan;
  auto* plan_cmd = app.add_subcommand("plan", "plan shoelace removals");
  plan_cmd->require_subcommand(1);
  auto* pair_cmd = plan_cmd->add_subcommand("pair", "match readout and Purcell frequencies");
  auto* crowd_cmd = plan_cmd->add_subcommand("crowding", "separate hybridized modes on one feedline");
  for (auto* sub : {pair_cmd, crowd_cmd}) {
    registry_opt(sub, plan.registry, true);
    auto* nu = sub->add_option("--nu-rho", plan.nu_rho, "phase velocity [m/s]");
    auto* naive = sub->add_flag("--naive-slope", plan.naive, "use the -2 MHz/um rule");
    auto* slope = sub->add_option("--slope", plan.slope, "naive slope [Hz/m]");
    nu->excludes(naive)->excludes(slope);
    naive->excludes(slope);
    sub->add_option("--out", plan.out, "plan file (default stdout)");
  }
  pair_cmd->add_option("--pair", plan.pairs, "pair id (repeatable)");
  pair_cmd->add_flag("--all-pairs", plan.all_pairs, "plan every pair in the registry");
  crowd_cmd->add_option("--feedline", plan.feedline, "feedline id")->required();
  crowd_cmd->add_option("--guard-band", plan.guard_band, "minimum mode spacing [Hz]");

  ApplyArgs apply;
  auto* apply_cmd = app.add_subcommand("apply", "record a carried-out plan");
  registry_opt(apply_cmd, apply.registry, true);
  apply_cmd->add_option("--plan", apply.plan, "plan file")->required();
  apply_cmd->add_option("--simulate-true-nu-rho", apply.true_nu_rho,
                        "simulate outcomes with this phase velocity [m/s]");

  std::string nu_registry;
  int nu_cycle = 1;
  auto* nu_cmd = app.add_subcommand("fit-nu-rho", "fit the phase velocity from a cycle's realized trims");
  registry_opt(nu_cmd, nu_registry, true);
  nu_cmd->add_option("--cycle", nu_cycle, "cycle index")->required();

  auto* sim_cmd = app.add_subcommand("simulate", "synthetic data");
  sim_cmd->require_subcommand(1);
  TraceArgs trace;
  auto* trace_cmd = sim_cmd->add_subcommand("trace", "transmission trace CSV");
  trace_cmd->add_option("--params", trace.params, "pair parameter JSON");
  registry_opt(trace_cmd, trace.registry, false);
  trace_cmd->add_option("--pair", trace.pair, "pair id in the registry");
  trace_cmd->add_option("--state", trace.state)->check(CLI::IsMember({"ground", "excited"}));
  trace_cmd->add_option("--model", trace.model)->check(CLI::IsMember({"ideal", "full"}));
  trace_cmd->add_option("--noise", trace.noise, "per-quadrature noise sigma");
  trace_cmd->add_option("--seed", trace.seed);
  trace_cmd->add_option("--points", trace.points);
  trace_cmd->add_option("--span", trace.span, "[Hz]");
  trace_cmd->add_option("--center", trace.center, "[Hz]");
  trace_cmd->add_option("--out", trace.out);

  std::string anneal_config, anneal_out;
  auto* anneal_cmd = sim_cmd->add_subcommand("anneal", "closed-loop laser anneal");
  anneal_cmd->add_option("--config", anneal_config, "scenario JSON")->required();
  anneal_cmd->add_option("--out", anneal_out);

  ReadoutArgs readout;
  auto* readout_cmd = sim_cmd->add_subcommand("readout", "single-shot IQ data and benchmarks");
  auto* sweep_cmd = sim_cmd->add_subcommand("readout-sweep", "assignment fidelity over a parameter grid");
  for (auto* sub : {readout_cmd, sweep_cmd}) {
    sub->add_option("--model", readout.model, "blob model JSON")->required();
    sub->add_option("--n", readout.n, "shots per state");
    sub->add_option("--seed", readout.seed);
    sub->add_option("--out", readout.out);
  }
  registry_opt(readout_cmd, readout.registry, false);
  readout_cmd->add_option("--transmon", readout.transmon, "transmon id for the registry record");
  sweep_cmd->add_option("--axis", readout.axes, "name=v1,v2,... (repeatable)")->required();

  std::string report_registry;
  bool report_json = false;
  double report_tol = 5e6;
  auto* report_cmd = app.add_subcommand("report", "per-pair status table");
  registry_opt(report_cmd, report_registry, true);
  report_cmd->add_flag("--json", report_json);
  report_cmd->add_option("--tolerance", report_tol, "|delta_PR| flagged OK at or below this [Hz]");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*fit_cmd) return run_fit(fit);
    if (*pair_cmd) return run_plan_pair(plan);
    if (*crowd_cmd) return run_plan_crowding(plan);
    if (*apply_cmd) return run_apply(apply);
    if (*nu_cmd) return run_fit_nu_rho(nu_registry, nu_cycle);
    if (*trace_cmd) return run_simulate_trace(trace);
    if (*anneal_cmd) return run_simulate_anneal(anneal_config, anneal_out);
    if (*readout_cmd) return run_simulate_readout(readout);
    if (*sweep_cmd) return run_readout_sweep(readout);
    if (*report_cmd) return run_report(report_registry, report_json, report_tol);
  } catch (const Error& e) {
    emit_error(e);
    return exit_code(e.category());
  } catch (const std::exception& e) {
    std::cerr << json{{"error", {{"category", "internal"}, {"message", e.what()}}}}.dump() << std::endl;
    return 1;
  }
  return 0;
}
