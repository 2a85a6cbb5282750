#pragma once

// File formats: transmission traces, shot sets and anneal traces as CSV;
// plans, fit records and simulation configs as JSON.

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "shoelace/coupled_mode.hpp"
#include "shoelace/errors.hpp"
#include "shoelace/readout_sim.hpp"
#include "shoelace/registry.hpp"
#include "shoelace/s21_fitter.hpp"
#include "shoelace/transmon_trim.hpp"
#include "shoelace/trim_planner.hpp"

namespace shoelace {

// ---------------------------------------------------------------------------
// CSV helpers

/// Shortest representation that reads back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

inline double parse_number(std::string_view field, std::size_t line, const char* name) {
  double v = 0.0;
  if (!field.empty() && field.front() == '+') field.remove_prefix(1);
  const auto res = std::from_chars(field.data(), field.data() + field.size(), v);
  if (field.empty() || res.ec != std::errc() || res.ptr != field.data() + field.size() || !std::isfinite(v))
    throw ParseError("line " + std::to_string(line) + ": field " + name + " is not a number: '" + std::string(field) +
                         "'",
                     line);
  return v;
}

struct CsvLine {
  std::size_t number;
  std::string text;
};

// Splits into comment lines ("# key: value") and content lines, skipping blanks.
inline std::vector<CsvLine> read_lines(std::istream& in, std::vector<std::pair<std::string, std::string>>* meta) {
  std::vector<CsvLine> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (n == 1 && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    const std::string_view t = trim(line);
    if (t.empty()) continue;
    if (t.front() == '#') {
      if (meta) {
        std::string_view body = trim(t.substr(1));
        const std::size_t sep = body.find_first_of(":=");
        if (sep != std::string_view::npos)
          meta->emplace_back(std::string(trim(body.substr(0, sep))), std::string(trim(body.substr(sep + 1))));
      }
      continue;
    }
    out.push_back({n, std::string(t)});
  }
  return out;
}

inline void expect_header(const std::vector<CsvLine>& lines, std::string_view header) {
  if (lines.empty()) throw ParseError("missing header '" + std::string(header) + "'", 1);
  const auto got = split_csv(lines.front().text);
  const auto want = split_csv(header);
  bool ok = got.size() == want.size();
  for (std::size_t k = 0; ok && k < got.size(); ++k) ok = got[k] == want[k];
  if (!ok)
    throw ParseError("line " + std::to_string(lines.front().number) + ": expected header '" + std::string(header) +
                         "'",
                     lines.front().number);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Traces

inline constexpr std::string_view kTraceHeader = "frequency_hz,re_s21,im_s21";

/// Reads a trace. Metadata comments "# source: ..." and "# qubit_state:
/// ground|excited" are honoured. Out-of-order rows are sorted (with a
/// warning); repeated frequencies are rejected.
inline TransmissionTrace parse_trace(std::istream& in, const std::string& source = {}) {
  std::vector<std::pair<std::string, std::string>> meta;
  const auto lines = detail::read_lines(in, &meta);
  detail::expect_header(lines, kTraceHeader);
  TransmissionTrace t;
  t.source_id = source;
  for (const auto& [k, v] : meta) {
    if (k == "source") t.source_id = v;
    else if (k == "qubit_state") {
      if (v == "ground") t.qubit_state = QubitState::ground;
      else if (v == "excited") t.qubit_state = QubitState::excited;
      else throw ParseError("qubit_state must be ground or excited", 0);
    }
  }
  std::vector<std::pair<double, ComplexPoint>> rows;
  for (std::size_t k = 1; k < lines.size(); ++k) {
    const auto f = detail::split_csv(lines[k].text);
    if (f.size() != 3)
      throw ParseError("line " + std::to_string(lines[k].number) + ": expected 3 fields, got " +
                           std::to_string(f.size()),
                       lines[k].number);
    const double freq = detail::parse_number(f[0], lines[k].number, "frequency_hz");
    const double re = detail::parse_number(f[1], lines[k].number, "re_s21");
    const double im = detail::parse_number(f[2], lines[k].number, "im_s21");
    rows.emplace_back(freq, ComplexPoint(re, im));
  }
  const bool sorted = std::is_sorted(rows.begin(), rows.end(),
                                     [](const auto& a, const auto& b) { return a.first < b.first; });
  if (!sorted) {
    std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    t.warnings.push_back("unsorted-input: rows were reordered by frequency");
  }
  for (std::size_t k = 1; k < rows.size(); ++k) {
    if (rows[k].first == rows[k - 1].first)
      throw ValidationError({"duplicate frequency " + format_double(rows[k].first)});
  }
  for (const auto& [f, v] : rows) {
    t.freqs.push_back(f);
    t.values.push_back(v);
  }
  return t;
}

inline TransmissionTrace load_trace(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  return parse_trace(in, path.filename().string());
}

inline void write_trace(std::ostream& out, const TransmissionTrace& t) {
  if (!t.source_id.empty()) out << "# source: " << t.source_id << "\n";
  if (t.qubit_state)
    out << "# qubit_state: " << (*t.qubit_state == QubitState::ground ? "ground" : "excited") << "\n";
  out << kTraceHeader << "\n";
  for (std::size_t k = 0; k < t.size(); ++k)
    out << format_double(t.freqs[k]) << ',' << format_double(t.values[k].real()) << ','
        << format_double(t.values[k].imag()) << "\n";
}

// ---------------------------------------------------------------------------
// Shots and anneal traces

inline constexpr std::string_view kShotsHeader = "label,i,q";
inline constexpr std::string_view kAnnealHeader = "cycle,power_W,exposure_s,r_over_r0";

inline void write_shots(std::ostream& out, const ShotSet& s) {
  out << kShotsHeader << "\n";
  for (std::size_t k = 0; k < s.size(); ++k)
    out << s.labels[k] << ',' << format_double(s.shots[k].i) << ',' << format_double(s.shots[k].q) << "\n";
}

inline ShotSet parse_shots(std::istream& in) {
  const auto lines = detail::read_lines(in, nullptr);
  detail::expect_header(lines, kShotsHeader);
  ShotSet s;
  for (std::size_t k = 1; k < lines.size(); ++k) {
    const auto f = detail::split_csv(lines[k].text);
    const std::size_t n = lines[k].number;
    if (f.size() != 3) throw ParseError("line " + std::to_string(n) + ": expected 3 fields", n);
    if (f[0] != "0" && f[0] != "1") throw ParseError("line " + std::to_string(n) + ": label must be 0 or 1", n);
    s.labels.push_back(f[0] == "1" ? 1 : 0);
    s.shots.push_back({detail::parse_number(f[1], n, "i"), detail::parse_number(f[2], n, "q")});
  }
  return s;
}

inline void write_anneal(std::ostream& out, const AnnealTrace& t) {
  out << kAnnealHeader << "\n";
  for (const auto& s : t.history)
    out << s.cycle << ',' << format_double(s.power) << ',' << format_double(s.exposure) << ','
        << format_double(s.r_over_r0) << "\n";
}

// ---------------------------------------------------------------------------
// JSON records

inline json params_to_json(const PairParams& p) {
  return {{"f_r", p.f_r},         {"f_p", p.f_p},         {"j", p.j},   {"kappa", p.kappa},
          {"gamma_r", p.gamma_r}, {"gamma_p", p.gamma_p}, {"chi", p.chi}, {"kappa_drive", p.kappa_drive}};
}

inline PairParams params_from_json(const json& j) {
  detail::SchemaReader rd;
  PairParams p;
  if (!j.is_object()) throw ValidationError({"$: expected object"});
  p.f_r = rd.number(j, "$", "f_r");
  p.f_p = rd.number(j, "$", "f_p");
  p.j = rd.number(j, "$", "j");
  p.kappa = rd.number(j, "$", "kappa");
  p.chi = rd.number(j, "$", "chi", false);
  p.gamma_r = rd.number(j, "$", "gamma_r", false);
  p.gamma_p = rd.number(j, "$", "gamma_p", false);
  p.kappa_drive = rd.number(j, "$", "kappa_drive", false);
  if (!rd.problems.empty()) throw ValidationError(rd.problems);
  validate(p);
  return p;
}

inline std::string model_name(S21Model m) { return m == S21Model::ideal ? "ideal" : "full"; }

inline json fit_to_json(const FitResult& r) {
  json j = {{"model", model_name(r.model)},
            {"params", params_to_json(r.params)},
            {"half_widths", params_to_json(r.half_widths)},
            {"residual_rms", r.residual_rms},
            {"converged", r.converged},
            {"iterations", r.iterations},
            {"gradient_norm", r.gradient_norm},
            {"warnings", r.warnings}};
  if (r.model == S21Model::ideal) {
    for (const char* k : {"gamma_r", "gamma_p", "kappa_drive"}) {
      j["params"].erase(k);
      j["half_widths"].erase(k);
    }
  }
  j["params"].erase("chi");
  j["half_widths"].erase("chi");
  return j;
}

struct PlanProvenance {
  std::string kind = "pair-match";  ///< pair-match | crowding
  std::string device_id;
  TrimModel model;
  std::vector<std::string> pairs;
  std::vector<std::string> input_fit_ids;
  std::optional<double> guard_band;
};

inline constexpr int kPlanVersion = 1;

inline json plan_to_json(const TrimPlan& plan, const PlanProvenance& prov) {
  json actions = json::array();
  for (const auto& a : plan.actions) {
    actions.push_back({{"resonator", a.resonator_id},
                       {"n_remove", a.n_remove},
                       {"delta_l", a.delta_l},
                       {"predicted_delta_f", a.predicted_delta_f},
                       {"predicted_f", a.predicted_f}});
  }
  json j = {{"format", "shoelace-plan"},
            {"version", kPlanVersion},
            {"kind", prov.kind},
            {"device_id", prov.device_id},
            {"cycle_index", plan.cycle_index},
            {"slope_mode", prov.model.mode_name()},
            {"pairs", prov.pairs},
            {"input_fit_ids", prov.input_fit_ids},
            {"objective_before", plan.objective_before},
            {"objective_after", plan.objective_after},
            {"infeasible", plan.infeasible},
            {"actions", actions},
            {"assumptions", json::array({"frequencies are dressed; dressing unchanged by trimming",
                                         "each removed shoelace lengthens the resonator by one pitch"})}};
  if (prov.model.kind == TrimModel::Kind::naive_slope) j["slope_hz_per_m"] = prov.model.slope;
  else j["nu_rho"] = prov.model.nu_rho;
  if (prov.kind == "crowding") {
    j["guard_band"] = prov.guard_band.value_or(0.0);
    j["crowding_violations_before"] = plan.crowding_violations_before;
    j["crowding_violations_after"] = plan.crowding_violations_after;
    const auto spacing = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
    j["min_spacing_before"] = spacing(plan.min_spacing_before);
    j["min_spacing_after"] = spacing(plan.min_spacing_after);
  }
  return j;
}

struct PlanDocument {
  TrimPlan plan;
  PlanProvenance provenance;
};

inline PlanDocument plan_from_json(const json& j) {
  detail::SchemaReader rd;
  if (!j.is_object()) throw ValidationError({"$: expected object"});
  if (rd.string(j, "$", "format") != "shoelace-plan") rd.problems.push_back("$.format: expected shoelace-plan");
  if (rd.integer(j, "$", "version") != kPlanVersion) rd.problems.push_back("$.version: unsupported");
  PlanDocument doc;
  doc.provenance.kind = rd.string(j, "$", "kind");
  doc.provenance.device_id = rd.string(j, "$", "device_id");
  doc.plan.cycle_index = rd.integer(j, "$", "cycle_index");
  doc.plan.objective_before = rd.number(j, "$", "objective_before", false);
  doc.plan.objective_after = rd.number(j, "$", "objective_after", false);
  if (const json* inf = rd.field(j, "$", "infeasible", false); inf && inf->is_boolean()) doc.plan.infeasible = *inf;
  const std::string mode = rd.string(j, "$", "slope_mode");
  if (mode == "naive") doc.provenance.model = TrimModel::naive(rd.number(j, "$", "slope_hz_per_m"));
  else if (mode == "fitted") doc.provenance.model = TrimModel::phase_velocity(rd.number(j, "$", "nu_rho"));
  else rd.problems.push_back("$.slope_mode: expected naive or fitted");
  if (const json* ids = rd.field(j, "$", "input_fit_ids", false); ids && ids->is_array())
    for (const auto& v : *ids)
      if (v.is_string()) doc.provenance.input_fit_ids.push_back(v);
  if (const json* ps = rd.field(j, "$", "pairs", false); ps && ps->is_array())
    for (const auto& v : *ps)
      if (v.is_string()) doc.provenance.pairs.push_back(v);
  if (const json* acts = rd.field(j, "$", "actions")) {
    if (!acts->is_array()) rd.problems.push_back("$.actions: expected array");
    else {
      for (std::size_t k = 0; k < acts->size(); ++k) {
        const std::string path = "$.actions[" + std::to_string(k) + "]";
        const json& a = (*acts)[k];
        TrimAction act;
        act.resonator_id = rd.string(a, path, "resonator");
        act.n_remove = rd.integer(a, path, "n_remove");
        act.delta_l = rd.number(a, path, "delta_l");
        act.predicted_delta_f = rd.number(a, path, "predicted_delta_f", false);
        act.predicted_f = rd.number(a, path, "predicted_f", false);
        rd.check(act.n_remove >= 0, path + ".n_remove", "must be >= 0");
        doc.plan.actions.push_back(act);
      }
    }
  }
  if (!rd.problems.empty()) throw ValidationError(rd.problems);
  return doc;
}

// ---------------------------------------------------------------------------
// Simulation configs

inline BlobModel blob_model_from_json(const json& j) {
  detail::SchemaReader rd;
  if (!j.is_object()) throw ValidationError({"$: expected object"});
  BlobModel m;
  const auto point = [&](const char* key, bool required) {
    IQPoint p;
    const json* v = rd.field(j, "$", key, required);
    if (!v) return p;
    if (!v->is_array() || v->size() != 2 || !(*v)[0].is_number() || !(*v)[1].is_number()) {
      rd.problems.push_back(std::string("$.") + key + ": expected [i, q]");
      return p;
    }
    return IQPoint{(*v)[0].get<double>(), (*v)[1].get<double>()};
  };
  m.mean0 = point("mean0", true);
  m.mean1 = point("mean1", true);
  m.mean2 = point("mean2", false);
  m.sigma = rd.number(j, "$", "sigma");
  m.leak_prob = rd.number(j, "$", "leak_prob", false);
  rd.check(m.sigma >= 0, "$.sigma", "must be >= 0");
  rd.check(m.leak_prob >= 0 && m.leak_prob <= 1, "$.leak_prob", "must lie in [0, 1]");
  if (!rd.problems.empty()) throw ValidationError(rd.problems);
  return m;
}

/// Anneal scenario: controller targets plus a log-response junction model,
///   {"r0", "r_target", "exposure_threshold", "power_schedule": [W...],
///    "controller": {...}, "response": {"curves": [{"power", "c", "t0"}]}}
struct AnnealScenario {
  AnnealConfig config;
  std::map<double, LogAnnealResponse::Curve> curves;
};

inline AnnealScenario anneal_scenario_from_json(const json& j) {
  detail::SchemaReader rd;
  if (!j.is_object()) throw ValidationError({"$: expected object"});
  AnnealScenario s;
  auto& c = s.config;
  c.r0 = rd.number(j, "$", "r0");
  c.r_target = rd.number(j, "$", "r_target");
  c.exposure_threshold = rd.number(j, "$", "exposure_threshold");
  if (const json* ps = rd.field(j, "$", "power_schedule")) {
    if (!ps->is_array()) rd.problems.push_back("$.power_schedule: expected array");
    else
      for (const auto& v : *ps) {
        if (v.is_number()) c.power_schedule.push_back(v);
        else rd.problems.push_back("$.power_schedule: expected numbers");
      }
  }
  if (const json* ctl = rd.field(j, "$", "controller", false)) {
    c.controller.initial_exposure = rd.number(*ctl, "$.controller", "initial_exposure", false, 1.0);
    c.controller.overshoot_factor = rd.number(*ctl, "$.controller", "overshoot_factor", false, 1.1);
    c.controller.max_growth = rd.number(*ctl, "$.controller", "max_growth", false, 4.0);
    c.controller.max_cycles_per_power = rd.integer(*ctl, "$.controller", "max_cycles_per_power", false, 200);
  }
  if (const json* resp = rd.field(j, "$", "response")) {
    if (const json* curves = rd.field(*resp, "$.response", "curves"); curves && curves->is_array()) {
      for (std::size_t k = 0; k < curves->size(); ++k) {
        const std::string path = "$.response.curves[" + std::to_string(k) + "]";
        const json& e = (*curves)[k];
        const double power = rd.number(e, path, "power");
        s.curves[power] = {rd.number(e, path, "c"), rd.number(e, path, "t0")};
      }
    }
  }
  rd.check(c.r0 > 0 && c.r_target > 0, "$", "r0 and r_target must be positive");
  rd.check(c.exposure_threshold > 0, "$.exposure_threshold", "must be positive");
  if (!rd.problems.empty()) throw ValidationError(rd.problems);
  return s;
}

}  // namespace shoelace
