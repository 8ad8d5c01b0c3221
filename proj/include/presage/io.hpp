#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <json.hpp>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "presage/alphabet.hpp"
#include "presage/errors.hpp"
#include "presage/evaluation.hpp"
#include "presage/events.hpp"
#include "presage/higher_order.hpp"
#include "presage/ids_ingest.hpp"
#include "presage/markov.hpp"
#include "presage/predictor.hpp"
#include "presage/semi_markov.hpp"
#include "presage/synth.hpp"

namespace presage {

using json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;

/// Shortest round-trip decimal form of a double (for CSV cells).
inline std::string fmt_double(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

namespace detail {

inline void check_schema_version(const json& j, const std::string& what) {
  if (!j.contains("schema_version") || !j["schema_version"].is_number_integer()) {
    throw ValidationError(what + ": missing schema_version");
  }
  int version = j["schema_version"].get<int>();
  if (version != kSchemaVersion) {
    throw ValidationError(what + ": unsupported schema_version " + std::to_string(version) +
                          " (this build reads version " + std::to_string(kSchemaVersion) + ")");
  }
}

}  // namespace detail

/// Writes a file atomically: content goes to `<path>.tmp` first and is
/// renamed over the target only after a successful flush, so failures
/// never leave partial outputs behind.
template <typename WriteFn>
void atomic_write_file(const std::filesystem::path& path, WriteFn&& write) {
  namespace fs = std::filesystem;
  fs::path tmp = path;
  tmp += ".tmp";
  try {
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      if (!out) {
        throw Error("cannot open '" + tmp.string() + "' for writing");
      }
      write(out);
      out.flush();
      if (!out) {
        throw Error("write to '" + tmp.string() + "' failed");
      }
    }
    fs::rename(tmp, path);
  } catch (...) {
    std::error_code ec;
    fs::remove(tmp, ec);
    throw;
  }
}

// ---------------------------------------------------------------------------
// alphabet
// ---------------------------------------------------------------------------

inline json alphabet_to_json(const StateAlphabet& alphabet) {
  json j;
  j["states"] = alphabet.states();
  j["attack_state"] = alphabet.name(alphabet.attack_state());
  std::vector<std::string> warning;
  for (StateId w : alphabet.warning_states()) warning.push_back(alphabet.name(w));
  j["warning_states"] = warning;
  return j;
}

inline StateAlphabet alphabet_from_json(const json& j) {
  if (!j.contains("states") || !j.contains("attack_state")) {
    throw ValidationError("alphabet: needs \"states\" and \"attack_state\"");
  }
  std::vector<std::string> warning;
  if (j.contains("warning_states")) {
    warning = j["warning_states"].get<std::vector<std::string>>();
  }
  return StateAlphabet(j["states"].get<std::vector<std::string>>(),
                       j["attack_state"].get<std::string>(), warning);
}

inline StateAlphabet load_alphabet(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open alphabet file '" + path.string() + "'");
  return alphabet_from_json(json::parse(in));
}

// ---------------------------------------------------------------------------
// canonical traces (JSON lines)
// ---------------------------------------------------------------------------

/// One line per event: {"host": str, "t": minutes, "state": name}.
inline void write_traces_jsonl(std::ostream& out, const std::vector<HostTrace>& traces,
                               const StateAlphabet& alphabet) {
  for (const auto& trace : traces) {
    for (const auto& event : trace.events) {
      json j;
      j["host"] = trace.host;
      j["t"] = event.t;
      j["state"] = alphabet.name(event.state);
      out << j.dump() << '\n';
    }
  }
}

/// Reads canonical JSONL. Events may interleave hosts; per host they are
/// stable-sorted by t. Hosts keep first-appearance order. State names
/// must belong to the alphabet.
inline std::vector<HostTrace> read_traces_jsonl(std::istream& in, const StateAlphabet& alphabet,
                                                const std::string& source = "<traces>") {
  std::vector<HostTrace> traces;
  std::map<std::string, std::size_t> index;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ValidationError(source + ":" + std::to_string(line_no) + ": bad JSON: " + e.what());
    }
    if (!j.contains("host") || !j.contains("t") || !j.contains("state")) {
      throw ValidationError(source + ":" + std::to_string(line_no) +
                            ": event needs host, t, state");
    }
    double t = j["t"].get<double>();
    if (!(t >= 0)) {
      throw ValidationError(source + ":" + std::to_string(line_no) +
                            ": t must be a non-negative number of minutes");
    }
    StateId state = alphabet.require(j["state"].get<std::string>());
    std::string host = j["host"].get<std::string>();
    auto [it, inserted] = index.emplace(host, traces.size());
    if (inserted) traces.push_back(HostTrace{host, {}});
    traces[it->second].events.push_back({t, state});
  }
  for (auto& trace : traces) {
    std::stable_sort(trace.events.begin(), trace.events.end(),
                     [](const TraceEvent& a, const TraceEvent& b) { return a.t < b.t; });
  }
  return traces;
}

inline std::vector<HostTrace> load_traces(const std::filesystem::path& path,
                                          const StateAlphabet& alphabet) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open trace file '" + path.string() + "'");
  return read_traces_jsonl(in, alphabet, path.string());
}

inline void save_traces(const std::filesystem::path& path, const std::vector<HostTrace>& traces,
                        const StateAlphabet& alphabet) {
  atomic_write_file(path, [&](std::ostream& out) { write_traces_jsonl(out, traces, alphabet); });
}

// ---------------------------------------------------------------------------
// trained models
// ---------------------------------------------------------------------------

/// A trained model as persisted: the order-1 embedded chain is always
/// present; the sparse context rows join it for order > 1, and the
/// semi-Markov block carries the per-interval matrices.
struct TrainedModel {
  StateAlphabet alphabet = StateAlphabet::botnet_default();
  unsigned order = 1;
  TransitionMatrix embedded{StateAlphabet::botnet_default(), {}, {}, false};
  std::optional<ContextMatrix> contexts;
  std::optional<SemiMarkovModel> smc;
  json diagnostics;
};

/// Builds the prediction-side chain for a trained model. The returned
/// model holds its own copy of the data.
inline std::unique_ptr<NextStateModel> make_chain_model(const TrainedModel& model) {
  if (model.order == 1 || !model.contexts) {
    return std::make_unique<MarkovChainModel>(model.embedded);
  }
  return std::make_unique<ContextChainModel>(*model.contexts);
}

namespace detail {

inline json matrix_block(const TransitionMatrix& m) {
  return json{{"counts", m.counts}, {"probs", m.probs}};
}

inline json context_rows_block(const ContextMatrix& m) {
  json rows = json::array();
  for (const auto& [ctx, row] : m.rows) {
    json entry;
    std::vector<std::string> names;
    names.reserve(ctx.size());
    for (StateId s : ctx) names.push_back(m.alphabet.name(s));
    entry["context"] = names;
    entry["counts"] = row.counts;
    entry["probs"] = row.probs;
    rows.push_back(std::move(entry));
  }
  return rows;
}

}  // namespace detail

/// Structural diagnostics block for an order-1 chain: connectivity,
/// periodicity, the stationary solve, and detailed-balance residuals.
inline json diagnostics_json(const TransitionMatrix& m, double reversibility_tol = 1e-3) {
  json d;
  d["irreducible"] = is_irreducible(m);
  d["aperiodic"] = is_aperiodic(m);
  json zero = json::array();
  for (StateId s : m.zero_rows()) zero.push_back(m.alphabet.name(s));
  d["zero_rows"] = zero;
  if (d["irreducible"].get<bool>()) {
    StationaryDistribution p = stationary(m);
    d["stationary"] = p.p;
    json rev = json::array();
    for (const auto& entry : reversibility_report(m, p, reversibility_tol)) {
      rev.push_back({{"i", m.alphabet.name(entry.i)},
                     {"j", m.alphabet.name(entry.j)},
                     {"residual", entry.residual},
                     {"pass", entry.pass}});
    }
    d["reversibility"] = rev;
    d["reversibility_tol"] = reversibility_tol;
  }
  return d;
}

inline json model_to_json(const TrainedModel& model) {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["kind"] = "presage-model";
  j["order"] = model.order;
  j["alphabet"] = alphabet_to_json(model.alphabet);
  j["include_self"] = model.embedded.include_self;
  j["embedded"] = detail::matrix_block(model.embedded);
  if (model.contexts) {
    j["rows"] = detail::context_rows_block(*model.contexts);
  }
  if (model.smc) {
    j["smc"] = json{{"boundaries", model.smc->intervals.boundaries()},
                    {"counts", model.smc->counts_q},
                    {"q", model.smc->q}};
  }
  if (!model.diagnostics.is_null()) {
    j["diagnostics"] = model.diagnostics;
  }
  return j;
}

inline TrainedModel model_from_json(const json& j, const std::string& source = "<model>") {
  detail::check_schema_version(j, source);
  if (!j.contains("alphabet") || !j.contains("embedded") || !j.contains("order")) {
    throw ValidationError(source + ": model needs alphabet, order and embedded blocks");
  }
  TrainedModel model;
  model.alphabet = alphabet_from_json(j["alphabet"]);
  model.order = j["order"].get<unsigned>();
  if (model.order < 1) throw ValidationError(source + ": order must be >= 1");

  const json& em = j["embedded"];
  TransitionMatrix m{model.alphabet,
                     em["counts"].get<std::vector<std::vector<std::uint64_t>>>(),
                     em["probs"].get<std::vector<std::vector<double>>>(),
                     j.value("include_self", false)};
  if (m.counts.size() != model.alphabet.size() || m.probs.size() != model.alphabet.size()) {
    throw ValidationError(source + ": embedded matrix size does not match alphabet");
  }
  model.embedded = std::move(m);

  if (model.order > 1) {
    if (!j.contains("rows")) {
      throw ValidationError(source + ": order-" + std::to_string(model.order) +
                            " model needs context rows");
    }
    ContextMatrix cm{model.alphabet, model.order, {}};
    for (const auto& entry : j["rows"]) {
      ContextKey key;
      for (const auto& name : entry["context"]) {
        key.push_back(model.alphabet.require(name.get<std::string>()));
      }
      if (key.size() != model.order) {
        throw ValidationError(source + ": context key length does not match order");
      }
      ContextRow row;
      row.counts = entry["counts"].get<std::vector<std::uint64_t>>();
      row.probs = entry["probs"].get<std::vector<double>>();
      for (std::uint64_t c : row.counts) row.total += c;
      cm.rows.emplace(std::move(key), std::move(row));
    }
    model.contexts = std::move(cm);
  }

  if (j.contains("smc")) {
    const json& s = j["smc"];
    SemiMarkovModel smc{model.embedded, IntervalSet(s["boundaries"].get<std::vector<double>>()),
                        s["counts"].get<std::vector<std::vector<std::vector<std::uint64_t>>>>(),
                        s["q"].get<std::vector<std::vector<std::vector<double>>>>()};
    if (smc.q.size() != smc.intervals.n_intervals()) {
      throw ValidationError(source + ": smc q block has wrong interval count");
    }
    model.smc = std::move(smc);
  }
  if (j.contains("diagnostics")) model.diagnostics = j["diagnostics"];
  return model;
}

inline void save_model(const std::filesystem::path& path, const TrainedModel& model) {
  atomic_write_file(path,
                    [&](std::ostream& out) { out << model_to_json(model).dump(2) << '\n'; });
}

inline TrainedModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open model file '" + path.string() + "'");
  return model_from_json(json::parse(in), path.string());
}

// ---------------------------------------------------------------------------
// generator specs
// ---------------------------------------------------------------------------

inline GeneratorSpec generator_spec_from_json(const json& j, const std::string& source = "<spec>") {
  detail::check_schema_version(j, source);
  GeneratorSpec spec;
  if (j.contains("alphabet")) spec.alphabet = alphabet_from_json(j["alphabet"]);
  if (j.contains("boundaries")) {
    spec.intervals = IntervalSet(j["boundaries"].get<std::vector<double>>());
  }
  spec.n_hosts = j.value("n_hosts", std::size_t{1});
  spec.events_per_host = j.value("events_per_host", std::size_t{2});
  spec.seed = j.value("seed", std::uint64_t{0});
  if (j.contains("point_mass_fraction")) {
    spec.point_mass_fraction = j["point_mass_fraction"].get<double>();
  }
  if (j.contains("embedded")) {
    spec.embedded = j["embedded"].get<std::vector<std::vector<double>>>();
    if (!j.contains("q")) {
      throw ValidationError(source + ": embedded matrix needs interval masses q");
    }
    spec.q = j["q"].get<std::vector<std::vector<std::vector<double>>>>();
  }
  if (j.contains("contexts")) {
    for (const auto& entry : j["contexts"]) {
      ContextKey key;
      for (const auto& name : entry["context"]) {
        key.push_back(spec.alphabet.require(name.get<std::string>()));
      }
      spec.context_rows[key] = entry["probs"].get<std::vector<double>>();
    }
    spec.gap_interval_weights =
        j.value("gap_interval_weights", std::vector<double>{});
    if (spec.gap_interval_weights.empty()) {
      // default: every gap lands in the first interval
      spec.gap_interval_weights.assign(spec.intervals.n_intervals(), 0.0);
      spec.gap_interval_weights[0] = 1.0;
    }
  }
  return spec;
}

inline json generator_spec_to_json(const GeneratorSpec& spec) {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["alphabet"] = alphabet_to_json(spec.alphabet);
  j["boundaries"] = spec.intervals.boundaries();
  j["n_hosts"] = spec.n_hosts;
  j["events_per_host"] = spec.events_per_host;
  j["seed"] = spec.seed;
  if (spec.point_mass_fraction) j["point_mass_fraction"] = *spec.point_mass_fraction;
  if (!spec.embedded.empty()) {
    j["embedded"] = spec.embedded;
    j["q"] = spec.q;
  }
  if (!spec.context_rows.empty()) {
    json contexts = json::array();
    for (const auto& [ctx, row] : spec.context_rows) {
      std::vector<std::string> names;
      for (StateId s : ctx) names.push_back(spec.alphabet.name(s));
      contexts.push_back({{"context", names}, {"probs", row}});
    }
    j["contexts"] = contexts;
    j["gap_interval_weights"] = spec.gap_interval_weights;
  }
  return j;
}

inline GeneratorSpec load_generator_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open generator spec '" + path.string() + "'");
  return generator_spec_from_json(json::parse(in), path.string());
}

// ---------------------------------------------------------------------------
// mapping config
// ---------------------------------------------------------------------------

/// {"rules": [{"sids": [...]} | {"classification_regex": ...} |
///            {"message_regex": ...}, "state": name, "direction": "src"|"dst"],
///  "unmatched_policy": "discard"}
inline StateMappingConfig mapping_config_from_json(const json& j, const StateAlphabet& alphabet,
                                                   const std::string& source = "<mapping>") {
  if (!j.contains("rules") || !j["rules"].is_array()) {
    throw ValidationError(source + ": mapping config needs a rules array");
  }
  std::string policy = j.value("unmatched_policy", std::string("discard"));
  if (policy != "discard") {
    throw ValidationError(source + ": unsupported unmatched_policy '" + policy + "'");
  }
  std::vector<Matcher> rules;
  for (const auto& r : j["rules"]) {
    Matcher m;
    if (r.contains("sids")) m.sids = r["sids"].get<std::vector<int>>();
    if (r.contains("classification_regex")) {
      m.classification_pattern = r["classification_regex"].get<std::string>();
    }
    if (r.contains("message_regex")) m.message_pattern = r["message_regex"].get<std::string>();
    if (!r.contains("state")) {
      throw ValidationError(source + ": mapping rule needs a target state");
    }
    m.state = alphabet.require(r["state"].get<std::string>());
    std::string dir = r.value("direction", std::string("src"));
    if (dir == "src") {
      m.direction = Direction::src;
    } else if (dir == "dst") {
      m.direction = Direction::dst;
    } else {
      throw ValidationError(source + ": direction must be \"src\" or \"dst\"");
    }
    rules.push_back(std::move(m));
  }
  return StateMappingConfig::build(std::move(rules), alphabet);
}

inline StateMappingConfig load_mapping_config(const std::filesystem::path& path,
                                              const StateAlphabet& alphabet) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open mapping config '" + path.string() + "'");
  return mapping_config_from_json(json::parse(in), alphabet, path.string());
}

// ---------------------------------------------------------------------------
// CSV emission
// ---------------------------------------------------------------------------

inline void write_predictions_csv(std::ostream& out,
                                  const std::vector<PredictionRecord>& records,
                                  const StateAlphabet& alphabet) {
  out << "host,t_pred,current_state,predicted_state,prob,interval,warning\n";
  for (const auto& rec : records) {
    out << rec.host << ',' << fmt_double(rec.t_pred) << ',' << alphabet.name(rec.current_state)
        << ',';
    if (rec.predicted) out << alphabet.name(rec.predicted->state);
    out << ',';
    if (rec.predicted) out << fmt_double(rec.predicted->prob);
    out << ',';
    if (rec.predicted_interval) out << *rec.predicted_interval;
    out << ',' << to_string(rec.warning) << '\n';
  }
}

inline void write_cdf_csv(std::ostream& out,
                          const std::vector<std::pair<double, double>>& series) {
  out << "value,cumulative_fraction\n";
  for (const auto& [value, fraction] : series) {
    out << fmt_double(value) << ',' << fmt_double(fraction) << '\n';
  }
}

inline void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows) {
  out << "order,tpr,fpr,accuracy\n";
  for (const auto& row : rows) {
    out << row.order << ',';
    if (row.tpr) out << fmt_double(*row.tpr);
    out << ',';
    if (row.fpr) out << fmt_double(*row.fpr);
    out << ',';
    if (row.accuracy) out << fmt_double(*row.accuracy);
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// metrics report
// ---------------------------------------------------------------------------

namespace detail {

inline json confusion_json(const ConfusionCounts& c) {
  json j{{"tp", c.tp},         {"fp", c.fp},
         {"tn", c.tn},         {"fn", c.fn},
         {"no_prediction", c.no_prediction}};
  auto put = [&](const char* key, std::optional<double> v) {
    if (v) {
      j[key] = *v;
    } else {
      j[key] = nullptr;
    }
  };
  put("tpr", c.tpr());
  put("fpr", c.fpr());
  put("tnr", c.tnr());
  put("fnr", c.fnr());
  put("accuracy", c.accuracy());
  return j;
}

inline json histogram_json(const std::map<int, std::uint64_t>& hist) {
  json j = json::object();
  for (const auto& [err, n] : hist) j[std::to_string(err)] = n;
  return j;
}

}  // namespace detail

inline json eval_report_to_json(const EvalReport& report, const StateAlphabet& alphabet) {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["order"] = report.order;
  j["split_minutes"] = report.split.train_minutes;
  j["hosts_tested"] = report.hosts_tested;
  j["excluded_hosts"] = report.excluded_hosts;
  j["records_emitted"] = report.records_emitted;
  json targets = json::object();
  for (const auto& [name, counts] : report.per_target) {
    targets[name] = detail::confusion_json(counts);
  }
  j["targets"] = targets;
  j["lead_times"] = {{"attack_count", report.lead_times.attack.size()},
                     {"precursor_count", report.lead_times.precursor.size()}};
  json per_state = json::object();
  for (StateId s = 0; s < report.interval_errors.per_state.size(); ++s) {
    if (report.interval_errors.per_state[s].empty()) continue;
    per_state[alphabet.name(s)] = detail::histogram_json(report.interval_errors.per_state[s]);
  }
  j["interval_errors"] = {
      {"per_state", per_state},
      {"attack_preceding", detail::histogram_json(report.interval_errors.attack_preceding)},
      {"total", report.interval_errors.total},
      {"zero_error", report.interval_errors.zero_error},
      {"skipped_no_interval", report.interval_errors.skipped_no_interval},
      {"accuracy", report.interval_errors.accuracy() ? json(*report.interval_errors.accuracy())
                                                     : json(nullptr)}};
  j["runtime"] = {{"train_ms", report.train_ms},
                  {"per_prediction_us", report.per_prediction_us}};
  return j;
}

}  // namespace presage
