// presage — turns IDS alert streams into lifecycle state traces, trains
// single-order / higher-order / semi-Markov chains over them, and runs
// the online attack-warning predictor plus its evaluation harness.

#include <CLI11.hpp>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "presage/presage.hpp"

namespace fs = std::filesystem;
using namespace presage;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitBadInput = 2;

StateAlphabet resolve_alphabet(const std::string& path) {
  if (path.empty()) return StateAlphabet::botnet_default();
  return load_alphabet(path);
}

IntervalSet resolve_intervals(const std::string& csv) {
  if (csv.empty()) return IntervalSet::default_bins();
  std::vector<double> boundaries;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    boundaries.push_back(std::stod(item));
  }
  return IntervalSet(boundaries);
}

/// "1,2,5" and "1-9" both work.
std::vector<unsigned> parse_orders(const std::string& text) {
  std::vector<unsigned> orders;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    auto dash = item.find('-');
    if (dash != std::string::npos && dash > 0) {
      unsigned lo = static_cast<unsigned>(std::stoul(item.substr(0, dash)));
      unsigned hi = static_cast<unsigned>(std::stoul(item.substr(dash + 1)));
      for (unsigned m = lo; m <= hi; ++m) orders.push_back(m);
    } else {
      orders.push_back(static_cast<unsigned>(std::stoul(item)));
    }
  }
  return orders;
}

void check_order_cap(unsigned order, unsigned max_order) {
  if (order < 1 || order > max_order) {
    throw ValidationError("order " + std::to_string(order) + " outside [1, " +
                          std::to_string(max_order) + "]; raise --max-order to go higher");
  }
}

TrainedModel train_model(const std::vector<HostTrace>& traces, const StateAlphabet& alphabet,
                         unsigned order, const IntervalSet& intervals, double alpha,
                         double reversibility_tol) {
  std::vector<CollapsedTrace> collapsed;
  collapsed.reserve(traces.size());
  for (const auto& trace : traces) collapsed.push_back(collapse(trace));

  TrainedModel model;
  model.alphabet = alphabet;
  model.order = order;
  model.embedded = estimate(collapsed, alphabet, /*include_self=*/false, alpha);
  if (order > 1) model.contexts = estimate_m(collapsed, alphabet, order);
  model.smc = estimate_smc(collapsed, alphabet, intervals);
  model.diagnostics = diagnostics_json(model.embedded, reversibility_tol);
  return model;
}

int cmd_ingest(const std::string& input, const std::string& format,
               const std::string& mapping_path, const std::string& alphabet_path,
               const std::string& out_path) {
  StateAlphabet alphabet = resolve_alphabet(alphabet_path);
  std::vector<HostTrace> traces;
  IngestStats stats;

  if (format == "jsonl") {
    std::ifstream in(input);
    if (!in) throw Error("cannot open '" + input + "'");
    traces = read_traces_jsonl(in, alphabet, input);
  } else if (format == "fast") {
    if (mapping_path.empty()) {
      throw ValidationError("--mapping is required for fast-alert input");
    }
    StateMappingConfig config = load_mapping_config(mapping_path, alphabet);
    for (const auto& warning : config.warnings) {
      std::cerr << "warning: " << warning << '\n';
    }
    std::ifstream in(input);
    if (!in) throw Error("cannot open '" + input + "'");
    std::vector<std::string> parse_errors;
    std::vector<RawAlert> alerts = parse_fast_alert_stream(in, stats, &parse_errors);
    for (const auto& err : parse_errors) std::cerr << "warning: " << err << '\n';
    traces = alerts_to_traces(alerts, config, &stats);
    std::cerr << "ingest: " << stats.lines << " lines, " << stats.parsed << " parsed, "
              << stats.parse_errors << " parse errors, " << stats.matched << " matched, "
              << stats.discarded << " discarded\n";
    if (stats.matched == 0) {
      std::cerr << "error: no alerts matched\n";
      return kExitBadInput;
    }
  } else {
    throw ValidationError("unknown input format '" + format + "' (use fast or jsonl)");
  }

  save_traces(out_path, traces, alphabet);
  std::cerr << "wrote " << traces.size() << " host trace(s) to " << out_path << '\n';
  return kExitOk;
}

int cmd_train(const std::string& traces_path, const std::string& alphabet_path, unsigned order,
              unsigned max_order, const std::string& intervals_csv, double alpha,
              double reversibility_tol, const std::string& out_path) {
  check_order_cap(order, max_order);
  StateAlphabet alphabet = resolve_alphabet(alphabet_path);
  IntervalSet intervals = resolve_intervals(intervals_csv);
  std::vector<HostTrace> traces = load_traces(traces_path, alphabet);

  auto t0 = std::chrono::steady_clock::now();
  TrainedModel model = train_model(traces, alphabet, order, intervals, alpha, reversibility_tol);
  double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                  .count();
  save_model(out_path, model);
  std::cerr << "trained order-" << order << " model on " << traces.size() << " host(s) in "
            << fmt_double(ms) << " ms -> " << out_path << '\n';
  return kExitOk;
}

int cmd_predict(const std::string& model_path, const std::string& traces_path,
                const std::string& out_path, unsigned threads) {
  TrainedModel model = load_model(model_path);
  std::vector<HostTrace> traces = load_traces(traces_path, model.alphabet);
  auto chain = make_chain_model(model);
  Predictor predictor(*chain, model.alphabet, model.smc ? &*model.smc : nullptr);
  auto per_host = predict_corpus(predictor, traces, threads);

  std::vector<PredictionRecord> records;
  for (auto& host_records : per_host) {
    records.insert(records.end(), host_records.begin(), host_records.end());
  }
  atomic_write_file(out_path, [&](std::ostream& out) {
    write_predictions_csv(out, records, model.alphabet);
  });
  std::cerr << "wrote " << records.size() << " prediction(s) to " << out_path << '\n';
  return kExitOk;
}

int cmd_eval(const std::string& traces_path, const std::string& alphabet_path, unsigned order,
             unsigned max_order, double split_minutes, const std::string& intervals_csv,
             bool backoff, bool no_prediction_as_fn, const std::string& out_dir) {
  check_order_cap(order, max_order);
  StateAlphabet alphabet = resolve_alphabet(alphabet_path);
  IntervalSet intervals = resolve_intervals(intervals_csv);
  std::vector<HostTrace> traces = load_traces(traces_path, alphabet);

  EvalOptions options;
  options.backoff = backoff;
  options.no_prediction_as_fn = no_prediction_as_fn;
  EvalReport report =
      evaluate(traces, alphabet, order, {.train_minutes = split_minutes}, intervals, options);

  fs::create_directories(out_dir);
  atomic_write_file(fs::path(out_dir) / "metrics.json", [&](std::ostream& out) {
    out << eval_report_to_json(report, alphabet).dump(2) << '\n';
  });
  atomic_write_file(fs::path(out_dir) / "attack_lead_cdf.csv", [&](std::ostream& out) {
    write_cdf_csv(out, cdf_series(report.lead_times.attack));
  });
  atomic_write_file(fs::path(out_dir) / "precursor_lead_cdf.csv", [&](std::ostream& out) {
    write_cdf_csv(out, cdf_series(report.lead_times.precursor));
  });
  atomic_write_file(fs::path(out_dir) / "interval_error_cdf.csv", [&](std::ostream& out) {
    write_cdf_csv(out, cdf_series(report.interval_errors.overall()));
  });
  atomic_write_file(fs::path(out_dir) / "interval_error_attack_cdf.csv", [&](std::ostream& out) {
    write_cdf_csv(out, cdf_series(report.interval_errors.attack_preceding));
  });

  if (report.hosts_tested == 0) {
    std::cerr << "warning: all hosts end before the split point; nothing was tested\n";
  }
  std::cerr << "evaluated order-" << order << " model: " << report.hosts_tested
            << " host(s) tested, " << report.records_emitted << " prediction(s) -> " << out_dir
            << '\n';
  return kExitOk;
}

int cmd_sweep(const std::string& traces_path, const std::string& alphabet_path,
              const std::string& orders_text, unsigned max_order, double split_minutes,
              const std::string& intervals_csv, const std::string& target_name,
              const std::string& out_path) {
  StateAlphabet alphabet = resolve_alphabet(alphabet_path);
  IntervalSet intervals = resolve_intervals(intervals_csv);
  std::vector<unsigned> orders = parse_orders(orders_text);
  for (unsigned order : orders) check_order_cap(order, max_order);
  StateId target =
      target_name.empty() ? alphabet.attack_state() : alphabet.require(target_name);
  std::vector<HostTrace> traces = load_traces(traces_path, alphabet);

  auto rows = order_sweep(traces, alphabet, orders, target, {.train_minutes = split_minutes},
                          intervals);
  atomic_write_file(out_path, [&](std::ostream& out) { write_sweep_csv(out, rows); });
  std::cerr << "swept " << rows.size() << " order(s) -> " << out_path << '\n';
  return kExitOk;
}

int cmd_simulate(const std::string& spec_path, std::optional<std::uint64_t> seed_override,
                 unsigned threads, const std::string& out_path) {
  GeneratorSpec spec = load_generator_spec(spec_path);
  if (seed_override) spec.seed = *seed_override;
  std::vector<HostTrace> traces = generate(spec, threads);
  save_traces(out_path, traces, spec.alphabet);
  std::uint64_t events = 0;
  for (const auto& trace : traces) events += trace.events.size();
  std::cerr << "simulated " << traces.size() << " host(s), " << events << " event(s) -> "
            << out_path << '\n';
  return kExitOk;
}

int cmd_inspect(const std::string& model_path) {
  TrainedModel model = load_model(model_path);
  const StateAlphabet& alphabet = model.alphabet;
  std::cout << "model: order-" << model.order << " chain over " << alphabet.size()
            << " states\n";
  std::cout << "states:";
  for (const auto& name : alphabet.states()) std::cout << ' ' << name;
  std::cout << "  (attack: " << alphabet.name(alphabet.attack_state()) << ")\n";

  json diag = model.diagnostics.is_null() ? diagnostics_json(model.embedded) : model.diagnostics;
  std::cout << "irreducible: " << (diag.value("irreducible", false) ? "yes" : "no")
            << "   aperiodic: " << (diag.value("aperiodic", false) ? "yes" : "no") << '\n';

  if (diag.contains("stationary")) {
    std::cout << "stationary distribution:\n";
    auto p = diag["stationary"].get<std::vector<double>>();
    for (StateId s = 0; s < p.size(); ++s) {
      std::printf("  %-20s %.6f\n", alphabet.name(s).c_str(), p[s]);
    }
  }
  if (diag.contains("reversibility")) {
    std::cout << "detailed-balance residuals (tol " << diag.value("reversibility_tol", 1e-3)
              << "):\n";
    for (const auto& entry : diag["reversibility"]) {
      std::printf("  %s <-> %s: %.3e %s\n", entry["i"].get<std::string>().c_str(),
                  entry["j"].get<std::string>().c_str(), entry["residual"].get<double>(),
                  entry["pass"].get<bool>() ? "pass" : "FAIL");
    }
  }
  if (diag.contains("zero_rows")) {
    auto zero = diag["zero_rows"].get<std::vector<std::string>>();
    std::cout << "states with no outgoing data:";
    if (zero.empty()) {
      std::cout << " none";
    } else {
      for (const auto& name : zero) std::cout << ' ' << name;
    }
    std::cout << '\n';
  }

  std::cout << "transition probabilities (self-transitions collapsed):\n";
  for (StateId i = 0; i < alphabet.size(); ++i) {
    std::printf("  %-20s", alphabet.name(i).c_str());
    for (StateId j = 0; j < alphabet.size(); ++j) {
      std::printf(" %.4f", model.embedded.probs[i][j]);
    }
    std::printf("\n");
  }

  if (model.smc) {
    std::cout << "holding-time interval masses (per source state):\n";
    for (StateId i = 0; i < alphabet.size(); ++i) {
      std::printf("  %-20s", alphabet.name(i).c_str());
      for (std::size_t n = 0; n < model.smc->intervals.n_intervals(); ++n) {
        double mass = 0;
        for (double v : model.smc->q[n][i]) mass += v;
        std::printf(" I%zu=%.3f", n + 1, mass);
      }
      auto mode = predict_holding_interval(*model.smc, i);
      if (mode) {
        std::printf("  mode=I%d", *mode);
      }
      std::printf("\n");
    }
  }
  if (model.contexts) {
    std::cout << "context rows stored: " << model.contexts->rows.size() << " (order "
              << model.contexts->order << ")\n";
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"botnet attack early-warning toolkit"};
  app.require_subcommand(1);

  unsigned hw_threads = std::max(1u, std::thread::hardware_concurrency());

  // ingest
  std::string in_input, in_format = "fast", in_mapping, in_alphabet, in_out = "traces.jsonl";
  auto* ingest = app.add_subcommand("ingest", "parse IDS alerts into canonical traces");
  ingest->add_option("--input", in_input, "alert log or JSONL trace file")->required();
  ingest->add_option("--format", in_format, "input format: fast | jsonl");
  ingest->add_option("--mapping", in_mapping, "alert-to-state mapping config (JSON)");
  ingest->add_option("--alphabet", in_alphabet, "state alphabet file (JSON)");
  ingest->add_option("--out", in_out, "output trace JSONL path");

  // train
  std::string tr_traces, tr_alphabet, tr_intervals, tr_out = "model.json";
  unsigned tr_order = 1, tr_max_order = 9;
  double tr_alpha = 0.0, tr_rev_tol = 1e-3;
  auto* train = app.add_subcommand("train", "estimate chain + semi-Markov model from traces");
  train->add_option("--traces", tr_traces, "trace JSONL path")->required();
  train->add_option("--order", tr_order, "chain order m");
  train->add_option("--max-order", tr_max_order, "maximum allowed order");
  train->add_option("--alphabet", tr_alphabet, "state alphabet file (JSON)");
  train->add_option("--intervals", tr_intervals, "holding-time bin boundaries, e.g. 1,10,20");
  train->add_option("--smoothing-alpha", tr_alpha, "additive smoothing pseudo-count");
  train->add_option("--reversibility-tol", tr_rev_tol, "detailed-balance diagnostic tolerance");
  train->add_option("--out", tr_out, "output model path");

  // predict
  std::string pr_model, pr_traces, pr_out = "predictions.csv";
  unsigned pr_threads = hw_threads;
  auto* predict = app.add_subcommand("predict", "replay traces through a trained model");
  predict->add_option("--model", pr_model, "model file")->required();
  predict->add_option("--traces", pr_traces, "trace JSONL path")->required();
  predict->add_option("--out", pr_out, "output prediction CSV path");
  predict->add_option("--threads", pr_threads, "worker threads (1 = deterministic timing)");

  // eval
  std::string ev_traces, ev_alphabet, ev_intervals, ev_out = "eval";
  unsigned ev_order = 1, ev_max_order = 9;
  double ev_split = 85.0;
  bool ev_backoff = false, ev_np_fn = false;
  auto* eval = app.add_subcommand("eval", "temporal-split evaluation with metrics and CDFs");
  eval->add_option("--traces", ev_traces, "trace JSONL path")->required();
  eval->add_option("--order", ev_order, "chain order m");
  eval->add_option("--max-order", ev_max_order, "maximum allowed order");
  eval->add_option("--split-minutes", ev_split, "training window in minutes");
  eval->add_option("--alphabet", ev_alphabet, "state alphabet file (JSON)");
  eval->add_option("--intervals", ev_intervals, "holding-time bin boundaries");
  eval->add_flag("--backoff", ev_backoff, "shorten unseen contexts instead of skipping");
  eval->add_flag("--no-prediction-as-fn", ev_np_fn,
                 "count missing predictions as false negatives");
  eval->add_option("--out", ev_out, "output directory");

  // sweep
  std::string sw_traces, sw_alphabet, sw_intervals, sw_orders = "1-9", sw_target,
              sw_out = "sweep.csv";
  unsigned sw_max_order = 9;
  double sw_split = 85.0;
  auto* sweep = app.add_subcommand("sweep", "evaluate a range of chain orders");
  sweep->add_option("--traces", sw_traces, "trace JSONL path")->required();
  sweep->add_option("--orders", sw_orders, "orders to sweep, e.g. 1-9 or 1,2,4");
  sweep->add_option("--max-order", sw_max_order, "maximum allowed order");
  sweep->add_option("--split-minutes", sw_split, "training window in minutes");
  sweep->add_option("--target", sw_target, "target state (default: the attack state)");
  sweep->add_option("--alphabet", sw_alphabet, "state alphabet file (JSON)");
  sweep->add_option("--intervals", sw_intervals, "holding-time bin boundaries");
  sweep->add_option("--out", sw_out, "output CSV path");

  // simulate
  std::string si_spec, si_out = "traces.jsonl";
  unsigned si_threads = hw_threads;
  std::uint64_t si_seed = 0;
  bool si_seed_set = false;
  auto* simulate = app.add_subcommand("simulate", "sample synthetic traces from a generator spec");
  simulate->add_option("--spec", si_spec, "generator spec (JSON)")->required();
  auto* seed_opt = simulate->add_option("--seed", si_seed, "override the spec's seed");
  simulate->add_option("--threads", si_threads, "worker threads");
  simulate->add_option("--out", si_out, "output trace JSONL path");

  // inspect
  std::string ins_model;
  auto* inspect = app.add_subcommand("inspect", "print model diagnostics");
  inspect->add_option("--model", ins_model, "model file")->required();

  CLI11_PARSE(app, argc, argv);
  si_seed_set = seed_opt->count() > 0;

  try {
    if (ingest->parsed()) {
      return cmd_ingest(in_input, in_format, in_mapping, in_alphabet, in_out);
    }
    if (train->parsed()) {
      return cmd_train(tr_traces, tr_alphabet, tr_order, tr_max_order, tr_intervals, tr_alpha,
                       tr_rev_tol, tr_out);
    }
    if (predict->parsed()) {
      return cmd_predict(pr_model, pr_traces, pr_out, pr_threads);
    }
    if (eval->parsed()) {
      return cmd_eval(ev_traces, ev_alphabet, ev_order, ev_max_order, ev_split, ev_intervals,
                      ev_backoff, ev_np_fn, ev_out);
    }
    if (sweep->parsed()) {
      return cmd_sweep(sw_traces, sw_alphabet, sw_orders, sw_max_order, sw_split, sw_intervals,
                       sw_target, sw_out);
    }
    if (simulate->parsed()) {
      return cmd_simulate(si_spec,
                          si_seed_set ? std::optional<std::uint64_t>(si_seed) : std::nullopt,
                          si_threads, si_out);
    }
    if (inspect->parsed()) {
      return cmd_inspect(ins_model);
    }
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitBadInput;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitBadInput;
  } catch (const InsufficientDataError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitBadInput;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitBadInput;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitFailure;
}
