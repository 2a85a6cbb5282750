#pragma once

// Device registry: resonators, transmons, readout/Purcell pairing, feedline
// grouping and an append-only history, stored as version-tagged JSON.
//
// Every entry keeps the JSON object it was read from, so fields this code
// does not know about survive a load/save cycle. Canonical form is the
// sorted-key, two-space-indented dump followed by a newline.

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

#include "json.hpp"

#include "shoelace/coupled_mode.hpp"
#include "shoelace/errors.hpp"
#include "shoelace/transmon_trim.hpp"
#include "shoelace/trim_planner.hpp"

namespace shoelace {

using json = nlohmann::json;

inline constexpr int kRegistrySchemaVersion = 1;

struct ResonatorEntry {
  ResonatorRecord record;
  json extra = json::object();
};

struct TransmonEntry {
  TransmonRecord record;
  json extra = json::object();
};

struct PairEntry {
  std::string id;
  std::string transmon;
  std::string readout;
  std::string purcell;
  std::string feedline;
  PairParams params;  ///< f_r / f_p are not stored here; they live on the resonators
  json extra = json::object();
  json params_extra = json::object();
};

struct DeviceRegistry {
  std::string device_id;
  std::vector<ResonatorEntry> resonators;
  std::vector<TransmonEntry> transmons;
  std::vector<PairEntry> pairs;
  int current_cycle = 0;       ///< number of trim cycles applied so far
  json history = json::array();
  json extra = json::object();

  ResonatorEntry* find_resonator(const std::string& id) {
    for (auto& r : resonators)
      if (r.record.id == id) return &r;
    return nullptr;
  }
  const ResonatorEntry* find_resonator(const std::string& id) const {
    return const_cast<DeviceRegistry*>(this)->find_resonator(id);
  }
  PairEntry* find_pair(const std::string& id) {
    for (auto& p : pairs)
      if (p.id == id) return &p;
    return nullptr;
  }
  const PairEntry* find_pair(const std::string& id) const { return const_cast<DeviceRegistry*>(this)->find_pair(id); }

  TransmonEntry* find_transmon(const std::string& id) {
    for (auto& t : transmons)
      if (t.record.id == id) return &t;
    return nullptr;
  }
};

inline std::string role_name(ResonatorRole r) { return r == ResonatorRole::readout ? "readout" : "purcell"; }

// ---------------------------------------------------------------------------
// Parsing with path-annotated problems

namespace detail {

class SchemaReader {
 public:
  std::vector<std::string> problems;

  const json* field(const json& obj, const std::string& path, const char* key, bool required = true) {
    if (!obj.is_object()) return nullptr;
    const auto it = obj.find(key);
    if (it == obj.end()) {
      if (required) problems.push_back(path + "." + key + ": missing");
      return nullptr;
    }
    return &*it;
  }

  std::string string(const json& obj, const std::string& path, const char* key, bool required = true) {
    const json* v = field(obj, path, key, required);
    if (!v) return {};
    if (!v->is_string()) {
      problems.push_back(path + "." + key + ": expected string");
      return {};
    }
    return v->get<std::string>();
  }

  double number(const json& obj, const std::string& path, const char* key, bool required = true, double dflt = 0.0) {
    const json* v = field(obj, path, key, required);
    if (!v) return dflt;
    if (!v->is_number()) {
      problems.push_back(path + "." + key + ": expected number");
      return dflt;
    }
    return v->get<double>();
  }

  int integer(const json& obj, const std::string& path, const char* key, bool required = true, int dflt = 0) {
    const json* v = field(obj, path, key, required);
    if (!v) return dflt;
    if (!v->is_number_integer()) {
      problems.push_back(path + "." + key + ": expected integer");
      return dflt;
    }
    return v->get<int>();
  }

  void check(bool ok, const std::string& path, const std::string& what) {
    if (!ok) problems.push_back(path + ": " + what);
  }
};

}  // namespace detail

inline DeviceRegistry registry_from_json(const json& doc) {
  detail::SchemaReader rd;
  DeviceRegistry reg;
  if (!doc.is_object()) throw ValidationError({"$: expected object"});
  reg.extra = doc;

  const json* version = rd.field(doc, "$", "schema_version");
  if (version && (!version->is_number_integer() || version->get<int>() != kRegistrySchemaVersion))
    rd.problems.push_back("$.schema_version: unsupported (expected " + std::to_string(kRegistrySchemaVersion) + ")");
  reg.device_id = rd.string(doc, "$", "device_id");
  reg.current_cycle = rd.integer(doc, "$", "current_cycle", false, 0);
  rd.check(reg.current_cycle >= 0, "$.current_cycle", "must be >= 0");

  const auto array_of = [&](const char* key) -> const json* {
    const json* v = rd.field(doc, "$", key, false);
    if (v && !v->is_array()) {
      rd.problems.push_back(std::string("$.") + key + ": expected array");
      return nullptr;
    }
    return v;
  };

  std::set<std::string> ids;
  if (const json* arr = array_of("resonators")) {
    for (std::size_t k = 0; k < arr->size(); ++k) {
      const json& e = (*arr)[k];
      const std::string path = "$.resonators[" + std::to_string(k) + "]";
      if (!e.is_object()) {
        rd.problems.push_back(path + ": expected object");
        continue;
      }
      ResonatorEntry r;
      r.extra = e;
      r.record.id = rd.string(e, path, "id");
      rd.check(!r.record.id.empty(), path + ".id", "must be non-empty");
      rd.check(r.record.id.empty() || ids.insert(r.record.id).second, path + ".id", "duplicate id " + r.record.id);
      const std::string role = rd.string(e, path, "role");
      if (role == "readout") r.record.role = ResonatorRole::readout;
      else if (role == "purcell") r.record.role = ResonatorRole::purcell;
      else rd.problems.push_back(path + ".role: expected readout or purcell");
      r.record.f_meas = rd.number(e, path, "f_meas");
      rd.check(r.record.f_meas > 0, path + ".f_meas", "must be positive");
      if (const json* sl = rd.field(e, path, "shoelaces")) {
        const std::string sp = path + ".shoelaces";
        r.record.shoelaces.total = rd.integer(*sl, sp, "total");
        r.record.shoelaces.remaining = rd.integer(*sl, sp, "remaining");
        r.record.shoelaces.pitch = rd.number(*sl, sp, "pitch");
        rd.check(r.record.shoelaces.total >= 0, sp + ".total", "must be >= 0");
        rd.check(r.record.shoelaces.remaining >= 0 && r.record.shoelaces.remaining <= r.record.shoelaces.total,
                 sp + ".remaining", "must lie in [0, total]");
        rd.check(r.record.shoelaces.pitch > 0, sp + ".pitch", "must be positive");
      }
      reg.resonators.push_back(std::move(r));
    }
  }

  std::set<std::string> tids;
  if (const json* arr = array_of("transmons")) {
    for (std::size_t k = 0; k < arr->size(); ++k) {
      const json& e = (*arr)[k];
      const std::string path = "$.transmons[" + std::to_string(k) + "]";
      if (!e.is_object()) {
        rd.problems.push_back(path + ": expected object");
        continue;
      }
      TransmonEntry t;
      t.extra = e;
      auto& rec = t.record;
      rec.id = rd.string(e, path, "id");
      rd.check(!rec.id.empty() && tids.insert(rec.id).second, path + ".id", "must be non-empty and unique");
      rec.f_q = rd.number(e, path, "f_q");
      rec.alpha = rd.number(e, path, "alpha");
      rec.e_j = rd.number(e, path, "e_j");
      rec.e_c = rd.number(e, path, "e_c");
      rec.r_j = rd.number(e, path, "r_j");
      rd.check(rec.f_q > 0, path + ".f_q", "must be positive");
      rd.check(rec.alpha < 0, path + ".alpha", "must be negative");
      rd.check(rec.e_j > 0 && rec.e_c > 0, path, "e_j and e_c must be positive");
      rd.check(rec.e_c <= 0 || rec.e_j / rec.e_c > kTransmonRatioFloor, path, "e_j/e_c below transmon floor");
      rd.check(rec.r_j > 0, path + ".r_j", "must be positive");
      reg.transmons.push_back(std::move(t));
    }
  }

  std::set<std::string> pids;
  if (const json* arr = array_of("pairs")) {
    for (std::size_t k = 0; k < arr->size(); ++k) {
      const json& e = (*arr)[k];
      const std::string path = "$.pairs[" + std::to_string(k) + "]";
      if (!e.is_object()) {
        rd.problems.push_back(path + ": expected object");
        continue;
      }
      PairEntry p;
      p.extra = e;
      p.id = rd.string(e, path, "id");
      rd.check(!p.id.empty() && pids.insert(p.id).second, path + ".id", "must be non-empty and unique");
      p.transmon = rd.string(e, path, "transmon");
      p.readout = rd.string(e, path, "readout");
      p.purcell = rd.string(e, path, "purcell");
      p.feedline = rd.string(e, path, "feedline");
      const auto role_of = [&](const std::string& id) -> const ResonatorEntry* { return reg.find_resonator(id); };
      const ResonatorEntry* r = role_of(p.readout);
      const ResonatorEntry* q = role_of(p.purcell);
      rd.check(r != nullptr, path + ".readout", "references missing resonator '" + p.readout + "'");
      rd.check(q != nullptr, path + ".purcell", "references missing resonator '" + p.purcell + "'");
      rd.check(!r || r->record.role == ResonatorRole::readout, path + ".readout", "resonator role is not readout");
      rd.check(!q || q->record.role == ResonatorRole::purcell, path + ".purcell", "resonator role is not purcell");
      rd.check(p.transmon.empty() || tids.count(p.transmon) > 0, path + ".transmon",
               "references missing transmon '" + p.transmon + "'");
      if (const json* pr = rd.field(e, path, "params")) {
        const std::string pp = path + ".params";
        p.params_extra = *pr;
        p.params.j = rd.number(*pr, pp, "j");
        p.params.kappa = rd.number(*pr, pp, "kappa");
        p.params.chi = rd.number(*pr, pp, "chi", false);
        p.params.gamma_r = rd.number(*pr, pp, "gamma_r", false);
        p.params.gamma_p = rd.number(*pr, pp, "gamma_p", false);
        p.params.kappa_drive = rd.number(*pr, pp, "kappa_drive", false);
        rd.check(p.params.j > 0, pp + ".j", "must be positive");
        rd.check(p.params.kappa > 0, pp + ".kappa", "must be positive");
        rd.check(p.params.gamma_r >= 0 && p.params.gamma_p >= 0 && p.params.kappa_drive >= 0, pp,
                 "losses must be >= 0");
      }
      reg.pairs.push_back(std::move(p));
    }
  }
  // a resonator belongs to at most one pair
  std::set<std::string> used;
  for (std::size_t k = 0; k < reg.pairs.size(); ++k) {
    for (const auto* id : {&reg.pairs[k].readout, &reg.pairs[k].purcell}) {
      if (!id->empty() && !used.insert(*id).second)
        rd.problems.push_back("$.pairs[" + std::to_string(k) + "]: resonator '" + *id + "' is already paired");
    }
  }

  if (const json* h = array_of("history")) reg.history = *h;
  if (!rd.problems.empty()) throw ValidationError(rd.problems);
  return reg;
}

inline json registry_to_json(const DeviceRegistry& reg) {
  json doc = reg.extra.is_object() ? reg.extra : json::object();
  doc["schema_version"] = kRegistrySchemaVersion;
  doc["device_id"] = reg.device_id;
  doc["current_cycle"] = reg.current_cycle;
  doc["history"] = reg.history;
  json res = json::array();
  for (const auto& r : reg.resonators) {
    json e = r.extra.is_object() ? r.extra : json::object();
    e["id"] = r.record.id;
    e["role"] = role_name(r.record.role);
    e["f_meas"] = r.record.f_meas;
    json sl = e.contains("shoelaces") && e["shoelaces"].is_object() ? e["shoelaces"] : json::object();
    sl["total"] = r.record.shoelaces.total;
    sl["remaining"] = r.record.shoelaces.remaining;
    sl["pitch"] = r.record.shoelaces.pitch;
    e["shoelaces"] = sl;
    res.push_back(std::move(e));
  }
  doc["resonators"] = std::move(res);
  json tr = json::array();
  for (const auto& t : reg.transmons) {
    json e = t.extra.is_object() ? t.extra : json::object();
    e["id"] = t.record.id;
    e["f_q"] = t.record.f_q;
    e["alpha"] = t.record.alpha;
    e["e_j"] = t.record.e_j;
    e["e_c"] = t.record.e_c;
    e["r_j"] = t.record.r_j;
    tr.push_back(std::move(e));
  }
  doc["transmons"] = std::move(tr);
  json pairs = json::array();
  for (const auto& p : reg.pairs) {
    json e = p.extra.is_object() ? p.extra : json::object();
    e["id"] = p.id;
    e["transmon"] = p.transmon;
    e["readout"] = p.readout;
    e["purcell"] = p.purcell;
    e["feedline"] = p.feedline;
    json pr = p.params_extra.is_object() ? p.params_extra : json::object();
    pr["j"] = p.params.j;
    pr["kappa"] = p.params.kappa;
    pr["chi"] = p.params.chi;
    pr["gamma_r"] = p.params.gamma_r;
    pr["gamma_p"] = p.params.gamma_p;
    pr["kappa_drive"] = p.params.kappa_drive;
    e["params"] = std::move(pr);
    pairs.push_back(std::move(e));
  }
  doc["pairs"] = std::move(pairs);
  return doc;
}

inline std::string canonical_dump(const json& doc) { return doc.dump(2) + "\n"; }

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCategory::io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline json parse_json_text(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(what + ": " + e.what(), 0);
  }
}

/// Writes via a sibling temporary file and rename, so readers never see a
/// partial file and a failure leaves the old content untouched.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  auto tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCategory::io, "cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) fail(ErrorCategory::io, "write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    fail(ErrorCategory::io, "cannot replace " + path.string());
  }
}

inline DeviceRegistry parse_registry(const std::string& text) {
  return registry_from_json(parse_json_text(text, "registry"));
}

inline std::string serialize_registry(const DeviceRegistry& reg) { return canonical_dump(registry_to_json(reg)); }

inline DeviceRegistry load_registry(const std::filesystem::path& path) { return parse_registry(read_file(path)); }

/// Saves the registry. If the file already holds a registry, its history
/// must be a prefix of the new one.
inline void save_registry(const std::filesystem::path& path, const DeviceRegistry& reg) {
  std::error_code ec;
  if (std::filesystem::exists(path, ec)) {
    json old;
    try {
      old = json::parse(read_file(path));
    } catch (const json::exception&) {
      old = json();
    }
    if (old.is_object() && old.contains("history") && old["history"].is_array()) {
      const json& prev = old["history"];
      bool prefix = prev.size() <= reg.history.size();
      for (std::size_t k = 0; prefix && k < prev.size(); ++k) prefix = prev[k] == reg.history[k];
      require(prefix, ErrorCategory::validation, "registry history is append-only");
    }
  }
  write_file_atomic(path, serialize_registry(reg));
}

// ---------------------------------------------------------------------------
// Views used by the planner

inline std::vector<PairRecords> pair_records(const DeviceRegistry& reg, const std::vector<std::string>& ids = {}) {
  std::vector<PairRecords> out;
  const auto add = [&](const PairEntry& p) {
    const ResonatorEntry* r = reg.find_resonator(p.readout);
    const ResonatorEntry* q = reg.find_resonator(p.purcell);
    require(r && q, ErrorCategory::validation, "pair " + p.id + " references missing resonators");
    PairRecords pr;
    pr.id = p.id;
    pr.readout = r->record;
    pr.purcell = q->record;
    pr.params = p.params;
    pr.params.f_r = r->record.f_meas;
    pr.params.f_p = q->record.f_meas;
    out.push_back(std::move(pr));
  };
  if (ids.empty()) {
    for (const auto& p : reg.pairs) add(p);
  } else {
    for (const auto& id : ids) {
      const PairEntry* p = reg.find_pair(id);
      require(p != nullptr, ErrorCategory::validation, "unknown pair '" + id + "'");
      add(*p);
    }
  }
  return out;
}

inline PairParams pair_params(const DeviceRegistry& reg, const std::string& pair_id) {
  const auto recs = pair_records(reg, {pair_id});
  return recs.front().current_params();
}

/// UTC timestamp for history records; SHOELACE_TIMESTAMP overrides it so
/// scripted runs stay byte-reproducible.
inline std::string timestamp_now() {
  if (const char* fixed = std::getenv("SHOELACE_TIMESTAMP")) return fixed;
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Appends a history record, filling seq, id and timestamp.
inline json& append_history(DeviceRegistry& reg, json record, const std::string& id_prefix) {
  const std::size_t seq = reg.history.size();
  record["seq"] = seq;
  record["id"] = id_prefix + "-" + std::to_string(seq);
  record["timestamp"] = timestamp_now();
  reg.history.push_back(std::move(record));
  return reg.history.back();
}

}  // namespace shoelace
