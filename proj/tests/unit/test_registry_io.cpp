#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "shoelace/io.hpp"
#include "shoelace/registry.hpp"
#include "test_support.hpp"

using namespace shoelace;
namespace fs = std::filesystem;

namespace {

const fs::path kFixtures = SHOELACE_FIXTURE_DIR;

TransmissionTrace trace_from(const std::string& text) {
  std::istringstream in(text);
  return parse_trace(in, "inline");
}

// Fresh, empty directory per test.
fs::path scratch(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("shoelace-unit-" + name + "-" + std::to_string(::getpid()));
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

json minimal_registry() {
  return json::parse(R"({
    "schema_version": 1, "device_id": "d", "current_cycle": 0, "history": [],
    "resonators": [
      {"id": "R0", "role": "readout", "f_meas": 7.3e9, "shoelaces": {"total": 8, "remaining": 8, "pitch": 5e-6}},
      {"id": "P0", "role": "purcell", "f_meas": 7.32e9, "shoelaces": {"total": 8, "remaining": 8, "pitch": 5e-6}}],
    "transmons": [],
    "pairs": [{"id": "pair0", "transmon": "", "readout": "R0", "purcell": "P0", "feedline": "FL0",
               "params": {"j": 1e7, "kappa": 3e6}}]})");
}

std::vector<std::string> problems_of(const json& doc) {
  try {
    (void)registry_from_json(doc);
  } catch (const ValidationError& e) {
    return e.problems();
  }
  return {};
}

bool mentions(const std::vector<std::string>& problems, const std::string& what) {
  for (const auto& p : problems)
    if (p.find(what) != std::string::npos) return true;
  return false;
}

}  // namespace

TEST(TraceCsv, ShortFileLoads) {
  const auto t = trace_from("frequency_hz,re_s21,im_s21\n7.0e9,1,0\n7.1e9,0.5,0.1\n7.2e9,1,0\n");
  EXPECT_EQ(t.freqs.size(), 3u);
  EXPECT_EQ(t.values[1], ComplexPoint(0.5, 0.1));
  EXPECT_TRUE(t.warnings.empty());
}

TEST(TraceCsv, MetadataComments) {
  const auto t = trace_from("# source: vna-7\n# qubit_state: excited\nfrequency_hz,re_s21,im_s21\n1,1,0\n2,1,0\n");
  EXPECT_EQ(t.source_id, "vna-7");
  ASSERT_TRUE(t.qubit_state.has_value());
  EXPECT_EQ(*t.qubit_state, QubitState::excited);
}

TEST(TraceCsv, NonNumericFieldNamesTheLine) {
  try {
    (void)trace_from("frequency_hz,re_s21,im_s21\n1,1,0\n2,abc,0\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
}

TEST(TraceCsv, WrongHeaderOrFieldCount) {
  testing_support::expect_category(ErrorCategory::parse, [] { (void)trace_from("f,re,im\n1,1,0\n"); });
  testing_support::expect_category(ErrorCategory::parse,
                                   [] { (void)trace_from("frequency_hz,re_s21,im_s21\n1,1\n"); });
  testing_support::expect_category(ErrorCategory::parse, [] { (void)trace_from(""); });
}

TEST(TraceCsv, DescendingRowsAreSortedWithWarning) {
  const auto t = trace_from("frequency_hz,re_s21,im_s21\n3,0.3,0\n2,0.2,0\n1,0.1,0\n");
  EXPECT_EQ(t.freqs, (std::vector<double>{1, 2, 3}));
  EXPECT_EQ(t.values.front().real(), 0.1);
  ASSERT_EQ(t.warnings.size(), 1u);
  EXPECT_NE(t.warnings[0].find("unsorted"), std::string::npos);
}

TEST(TraceCsv, DuplicateFrequencyRejected) {
  testing_support::expect_category(ErrorCategory::validation,
                                   [] { (void)trace_from("frequency_hz,re_s21,im_s21\n1,1,0\n1,0.9,0\n"); });
}

TEST(TraceCsv, WriteParseRoundTripIsExact) {
  TransmissionTrace t;
  t.source_id = "rt";
  for (int k = 0; k < 50; ++k) {
    t.freqs.push_back(7e9 + k * 12345.678901);
    t.values.emplace_back(std::cos(0.1 * k) / 3.0, std::sin(0.37 * k) * 1e-7);
  }
  std::ostringstream out;
  write_trace(out, t);
  const auto back = trace_from(out.str());
  EXPECT_EQ(back.freqs, t.freqs);
  EXPECT_EQ(back.values, t.values);
  EXPECT_EQ(back.source_id, "rt");
}

TEST(Registry, EmptyRegistryRoundTrips) {
  const std::string text = canonical_dump(json::parse(
      R"({"schema_version": 1, "device_id": "empty", "current_cycle": 0, "history": [],
          "resonators": [], "transmons": [], "pairs": []})"));
  const auto reg = parse_registry(text);
  EXPECT_TRUE(reg.pairs.empty());
  EXPECT_EQ(serialize_registry(reg), text);
}

TEST(Registry, FixturesRoundTripByteIdentical) {
  for (const char* name : {"device_17pair.json", "device_matched.json", "device_crowding.json"}) {
    const std::string text = read_file(kFixtures / name);
    const auto reg = parse_registry(text);
    EXPECT_EQ(serialize_registry(reg), text) << name;
    EXPECT_EQ(serialize_registry(parse_registry(serialize_registry(reg))), serialize_registry(reg));
  }
  const auto reg = load_registry(kFixtures / "device_17pair.json");
  EXPECT_EQ(reg.pairs.size(), 17u);
  EXPECT_EQ(reg.resonators.size(), 34u);
  EXPECT_EQ(reg.transmons.size(), 17u);
}

TEST(Registry, UnknownFieldsSurvive) {
  json doc = minimal_registry();
  doc["lab"] = "cryostat B";
  doc["resonators"][0]["note"] = {{"design_f", 7.31e9}};
  doc["resonators"][0]["shoelaces"]["layout"] = "staggered";
  doc["pairs"][0]["params"]["source"] = "design";
  doc["pairs"][0]["color"] = "red";
  DeviceRegistry reg = registry_from_json(doc);
  reg.find_resonator("R0")->record.f_meas = 7.29e9;
  const json back = registry_to_json(reg);
  EXPECT_EQ(back["lab"], "cryostat B");
  EXPECT_EQ(back["resonators"][0]["note"]["design_f"], 7.31e9);
  EXPECT_EQ(back["resonators"][0]["shoelaces"]["layout"], "staggered");
  EXPECT_EQ(back["resonators"][0]["f_meas"], 7.29e9);
  EXPECT_EQ(back["pairs"][0]["params"]["source"], "design");
  EXPECT_EQ(back["pairs"][0]["color"], "red");
}

TEST(Registry, MissingResonatorIsReportedWithPath) {
  json doc = minimal_registry();
  doc["pairs"][0]["purcell"] = "P9";
  const auto problems = problems_of(doc);
  EXPECT_TRUE(mentions(problems, "$.pairs[0].purcell")) << ::testing::PrintToString(problems);
  EXPECT_TRUE(mentions(problems, "P9"));
}

TEST(Registry, CollectsEveryProblem) {
  json doc = minimal_registry();
  doc["resonators"][0]["role"] = "bus";
  doc["resonators"][1]["f_meas"] = -1.0;
  doc["resonators"][1]["shoelaces"]["remaining"] = 9;
  doc["pairs"][0]["params"]["kappa"] = 0.0;
  doc.erase("device_id");
  const auto problems = problems_of(doc);
  EXPECT_TRUE(mentions(problems, "$.resonators[0].role"));
  EXPECT_TRUE(mentions(problems, "$.resonators[1].f_meas"));
  EXPECT_TRUE(mentions(problems, "$.resonators[1].shoelaces.remaining"));
  EXPECT_TRUE(mentions(problems, "$.pairs[0].params.kappa"));
  EXPECT_TRUE(mentions(problems, "$.device_id"));
}

TEST(Registry, StructuralRules) {
  {
    json doc = minimal_registry();
    doc["resonators"][1]["id"] = "R0";
    EXPECT_TRUE(mentions(problems_of(doc), "duplicate id"));
  }
  {
    json doc = minimal_registry();
    std::swap(doc["pairs"][0]["readout"], doc["pairs"][0]["purcell"]);
    EXPECT_TRUE(mentions(problems_of(doc), "role is not readout"));
  }
  {
    json doc = minimal_registry();
    doc["pairs"].push_back(doc["pairs"][0]);
    doc["pairs"][1]["id"] = "pair1";
    EXPECT_TRUE(mentions(problems_of(doc), "already paired"));
  }
  {
    json doc = minimal_registry();
    doc["schema_version"] = 2;
    EXPECT_TRUE(mentions(problems_of(doc), "schema_version"));
  }
  {
    json doc = minimal_registry();
    doc["pairs"][0]["transmon"] = "Q7";
    EXPECT_TRUE(mentions(problems_of(doc), "missing transmon"));
  }
  testing_support::expect_category(ErrorCategory::parse, [] { (void)parse_registry("{not json"); });
}

TEST(Registry, PairRecordsUseResonatorFrequencies) {
  const auto reg = registry_from_json(minimal_registry());
  const auto recs = pair_records(reg);
  ASSERT_EQ(recs.size(), 1u);
  EXPECT_EQ(recs[0].params.f_r, 7.3e9);
  EXPECT_EQ(recs[0].params.f_p, 7.32e9);
  EXPECT_EQ(recs[0].readout.shoelaces.pitch, 5e-6);
  testing_support::expect_category(ErrorCategory::validation, [&] { (void)pair_records(reg, {"nope"}); });
}

TEST(Registry, HistoryIsAppendOnly) {
  const fs::path dir = scratch("history");
  const fs::path path = dir / "reg.json";
  DeviceRegistry reg = registry_from_json(minimal_registry());
  append_history(reg, {{"kind", "note"}}, "note");
  save_registry(path, reg);
  append_history(reg, {{"kind", "note"}}, "note");
  save_registry(path, reg);
  const auto loaded = load_registry(path);
  ASSERT_EQ(loaded.history.size(), 2u);
  EXPECT_EQ(loaded.history[1]["seq"], 1);
  EXPECT_EQ(loaded.history[1]["id"], "note-1");

  DeviceRegistry rewritten = loaded;
  rewritten.history[0]["kind"] = "edited";
  const std::string before = read_file(path);
  testing_support::expect_category(ErrorCategory::validation, [&] { save_registry(path, rewritten); });
  DeviceRegistry truncated = loaded;
  truncated.history.erase(truncated.history.begin() + 1);
  testing_support::expect_category(ErrorCategory::validation, [&] { save_registry(path, truncated); });
  EXPECT_EQ(read_file(path), before);
  fs::remove_all(dir);
}

TEST(Registry, TimestampOverride) {
  ::setenv("SHOELACE_TIMESTAMP", "2000-01-01T00:00:00Z", 1);
  EXPECT_EQ(timestamp_now(), "2000-01-01T00:00:00Z");
  ::unsetenv("SHOELACE_TIMESTAMP");
  EXPECT_EQ(timestamp_now().size(), 20u);
}

TEST(AtomicWrite, ReplacesWholeFileAndLeavesNoTemporaries) {
  const fs::path dir = scratch("atomic");
  const fs::path path = dir / "out.txt";
  write_file_atomic(path, std::string(100000, 'a'));
  write_file_atomic(path, "short\n");
  EXPECT_EQ(read_file(path), "short\n");
  std::size_t entries = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(dir)) ++entries;
  EXPECT_EQ(entries, 1u);
  testing_support::expect_category(ErrorCategory::io, [&] { write_file_atomic(dir / "missing" / "x", "y"); });
  testing_support::expect_category(ErrorCategory::io, [&] { (void)read_file(dir / "absent.json"); });
  fs::remove_all(dir);
}

TEST(PlanJson, RoundTrip) {
  TrimPlan plan;
  plan.cycle_index = 2;
  plan.objective_before = 3e7;
  plan.objective_after = 1e6;
  TrimAction a;
  a.resonator_id = "P04";
  a.n_remove = 3;
  a.delta_l = 15e-6;
  a.predicted_delta_f = -29e6;
  a.predicted_f = 7.301e9;
  plan.actions.push_back(a);
  PlanProvenance prov;
  prov.device_id = "dev17";
  prov.model = TrimModel::phase_velocity(1.07e8);
  prov.pairs = {"pair04"};
  prov.input_fit_ids = {"fit-3"};
  const json j = plan_to_json(plan, prov);
  const auto doc = plan_from_json(json::parse(j.dump()));
  EXPECT_EQ(doc.plan.cycle_index, 2);
  ASSERT_EQ(doc.plan.actions.size(), 1u);
  EXPECT_EQ(doc.plan.actions[0].resonator_id, "P04");
  EXPECT_EQ(doc.plan.actions[0].n_remove, 3);
  EXPECT_EQ(doc.plan.actions[0].delta_l, 15e-6);
  EXPECT_EQ(doc.plan.actions[0].predicted_delta_f, -29e6);
  EXPECT_EQ(doc.provenance.model.kind, TrimModel::Kind::phase_velocity);
  EXPECT_EQ(doc.provenance.model.nu_rho, 1.07e8);
  EXPECT_EQ(doc.provenance.input_fit_ids, prov.input_fit_ids);
  EXPECT_EQ(doc.provenance.device_id, "dev17");
  EXPECT_EQ(plan_to_json(doc.plan, doc.provenance), j);

  prov.model = TrimModel::naive();
  const auto naive = plan_from_json(plan_to_json(plan, prov));
  EXPECT_EQ(naive.provenance.model.kind, TrimModel::Kind::naive_slope);
  EXPECT_EQ(naive.provenance.model.slope, TrimModel::naive().slope);
}

TEST(PlanJson, Rejections) {
  json j = plan_to_json(TrimPlan{}, PlanProvenance{});
  j["format"] = "other";
  testing_support::expect_category(ErrorCategory::validation, [&] { (void)plan_from_json(j); });
  j = plan_to_json(TrimPlan{}, PlanProvenance{});
  j["actions"] = json::array({{{"resonator", "R0"}, {"n_remove", -1}, {"delta_l", 0.0}}});
  testing_support::expect_category(ErrorCategory::validation, [&] { (void)plan_from_json(j); });
}

TEST(ScenarioJson, FixturesLoad) {
  const auto blob = blob_model_from_json(json::parse(read_file(kFixtures / "blob_model.json")));
  EXPECT_EQ(blob.mean1.i, 4.0);
  EXPECT_EQ(blob.sigma, 1.0);
  const auto s = anneal_scenario_from_json(json::parse(read_file(kFixtures / "anneal_saturating.json")));
  EXPECT_EQ(s.config.power_schedule, (std::vector<double>{0.17, 0.20}));
  EXPECT_EQ(s.curves.size(), 2u);
  EXPECT_EQ(s.config.controller.max_growth, 4.0);
}

TEST(ScenarioJson, Rejections) {
  testing_support::expect_category(ErrorCategory::validation, [] {
    (void)blob_model_from_json(json::parse(R"({"mean0": [0, 0], "mean1": [1], "sigma": -1})"));
  });
  testing_support::expect_category(ErrorCategory::validation, [] {
    (void)anneal_scenario_from_json(json::parse(R"({"r0": 1, "r_target": 2, "exposure_threshold": 0,
                                                    "power_schedule": [], "response": {"curves": []}})"));
  });
}
