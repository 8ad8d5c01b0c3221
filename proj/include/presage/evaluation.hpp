#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "presage/alphabet.hpp"
#include "presage/errors.hpp"
#include "presage/events.hpp"
#include "presage/higher_order.hpp"
#include "presage/markov.hpp"
#include "presage/predictor.hpp"
#include "presage/semi_markov.hpp"

namespace presage {

/// Temporal train/test split point, minutes from each host's trace start.
struct SplitSpec {
  double train_minutes = 85.0;
};

/// Splits one trace at the boundary: events at t <= train_minutes go to
/// training (boundary inclusive), the rest to testing.
inline std::pair<HostTrace, HostTrace> temporal_split(const HostTrace& trace, SplitSpec spec) {
  if (spec.train_minutes <= 0) {
    throw ValidationError("split minutes must be > 0");
  }
  detail::check_sorted(trace.events);
  HostTrace train{trace.host, {}};
  HostTrace test{trace.host, {}};
  for (const auto& event : trace.events) {
    (event.t <= spec.train_minutes ? train : test).events.push_back(event);
  }
  return {std::move(train), std::move(test)};
}

/// Corpus-level split. Hosts whose test side is empty are excluded from
/// testing and reported; their training events still count.
struct CorpusSplit {
  std::vector<HostTrace> train;
  std::vector<HostTrace> test;
  std::vector<std::string> excluded_hosts;
};

inline CorpusSplit split_corpus(const std::vector<HostTrace>& traces, SplitSpec spec) {
  CorpusSplit out;
  for (const auto& trace : traces) {
    auto [train, test] = temporal_split(trace, spec);
    if (!train.events.empty()) out.train.push_back(std::move(train));
    if (test.events.empty()) {
      out.excluded_hosts.push_back(trace.host);
    } else {
      out.test.push_back(std::move(test));
    }
  }
  return out;
}

/// One-vs-rest confusion counts for a single target state. Records with
/// no prediction are excluded from the matrix and tallied separately
/// (optionally folded into FN).
struct ConfusionCounts {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t tn = 0;
  std::uint64_t fn = 0;
  std::uint64_t no_prediction = 0;

  std::uint64_t labeled() const { return tp + fp + tn + fn; }

  std::optional<double> tpr() const { return rate(tp, tp + fn); }
  std::optional<double> fpr() const { return rate(fp, fp + tn); }
  std::optional<double> tnr() const { return rate(tn, tn + fp); }
  std::optional<double> fnr() const { return rate(fn, fn + tp); }
  std::optional<double> accuracy() const { return rate(tp + tn, labeled()); }

  ConfusionCounts& operator+=(const ConfusionCounts& o) {
    tp += o.tp;
    fp += o.fp;
    tn += o.tn;
    fn += o.fn;
    no_prediction += o.no_prediction;
    return *this;
  }

 private:
  static std::optional<double> rate(std::uint64_t num, std::uint64_t den) {
    if (den == 0) return std::nullopt;
    return static_cast<double>(num) / static_cast<double>(den);
  }
};

/// Labels each prediction against the actual next state in the collapsed
/// test trace. The final record per host has no successor and is dropped.
inline ConfusionCounts label_outcomes(const std::vector<PredictionRecord>& records,
                                      const CollapsedTrace& test, StateId target,
                                      bool no_prediction_as_fn = false) {
  if (!records.empty() && records.front().host != test.host) {
    throw ValidationError("prediction records and test trace belong to different hosts ('" +
                          records.front().host + "' vs '" + test.host + "')");
  }
  if (records.size() != test.events.size()) {
    throw ValidationError("record count does not match collapsed test trace length");
  }
  ConfusionCounts c;
  for (std::size_t k = 0; k + 1 < records.size(); ++k) {
    StateId actual = test.events[k + 1].state;
    const auto& rec = records[k];
    if (!rec.predicted) {
      if (no_prediction_as_fn && actual == target) {
        ++c.fn;
      } else {
        ++c.no_prediction;
      }
      continue;
    }
    bool predicted_target = rec.predicted->state == target;
    bool actual_target = actual == target;
    if (predicted_target && actual_target) {
      ++c.tp;
    } else if (predicted_target) {
      ++c.fp;
    } else if (actual_target) {
      ++c.fn;
    } else {
      ++c.tn;
    }
  }
  return c;
}

/// Holding-time prediction errors aggregated per source state, plus the
/// subset of transitions that led into the attack state.
struct IntervalErrorStats {
  /// per_state[s][error] = count, error = predicted - actual intervals.
  std::vector<std::map<int, std::uint64_t>> per_state;
  std::map<int, std::uint64_t> attack_preceding;
  std::uint64_t total = 0;
  std::uint64_t zero_error = 0;
  std::uint64_t skipped_no_interval = 0;

  std::optional<double> accuracy() const {
    if (total == 0) return std::nullopt;
    return static_cast<double>(zero_error) / static_cast<double>(total);
  }

  IntervalErrorStats& operator+=(const IntervalErrorStats& o) {
    if (per_state.size() < o.per_state.size()) per_state.resize(o.per_state.size());
    for (std::size_t s = 0; s < o.per_state.size(); ++s) {
      for (const auto& [e, n] : o.per_state[s]) per_state[s][e] += n;
    }
    for (const auto& [e, n] : o.attack_preceding) attack_preceding[e] += n;
    total += o.total;
    zero_error += o.zero_error;
    skipped_no_interval += o.skipped_no_interval;
    return *this;
  }

  /// All errors pooled over states.
  std::map<int, std::uint64_t> overall() const {
    std::map<int, std::uint64_t> out;
    for (const auto& hist : per_state) {
      for (const auto& [e, n] : hist) out[e] += n;
    }
    return out;
  }
};

/// Compares predicted holding intervals against the actual gaps observed
/// between consecutive test events.
inline IntervalErrorStats interval_error_report(const std::vector<PredictionRecord>& records,
                                                const CollapsedTrace& test,
                                                const SemiMarkovModel& smc) {
  if (records.size() != test.events.size()) {
    throw ValidationError("record count does not match collapsed test trace length");
  }
  IntervalErrorStats stats;
  stats.per_state.resize(smc.embedded.n_states());
  StateId attack = smc.embedded.alphabet.attack_state();
  for (std::size_t k = 0; k + 1 < records.size(); ++k) {
    const auto& rec = records[k];
    if (!rec.predicted_interval) {
      ++stats.skipped_no_interval;
      continue;
    }
    double gap = test.events[k + 1].t - test.events[k].t;
    int actual = smc.intervals.classify(gap);
    int err = interval_error(*rec.predicted_interval, actual);
    ++stats.per_state[rec.current_state][err];
    ++stats.total;
    if (err == 0) ++stats.zero_error;
    if (test.events[k + 1].state == attack) ++stats.attack_preceding[err];
  }
  return stats;
}

/// (value, cumulative fraction) pairs for CDF plotting; values sorted.
inline std::vector<std::pair<double, double>> cdf_series(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  std::vector<std::pair<double, double>> out;
  out.reserve(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    out.emplace_back(values[i], static_cast<double>(i + 1) / static_cast<double>(values.size()));
  }
  return out;
}

inline std::vector<std::pair<double, double>> cdf_series(
    const std::map<int, std::uint64_t>& histogram) {
  std::uint64_t total = 0;
  for (const auto& [v, n] : histogram) total += n;
  std::vector<std::pair<double, double>> out;
  std::uint64_t cum = 0;
  for (const auto& [v, n] : histogram) {
    cum += n;
    out.emplace_back(static_cast<double>(v),
                     static_cast<double>(cum) / static_cast<double>(total));
  }
  return out;
}

/// Everything one evaluation run produces.
struct EvalReport {
  SplitSpec split;
  unsigned order = 1;
  std::vector<std::string> excluded_hosts;
  std::uint64_t hosts_tested = 0;
  std::uint64_t records_emitted = 0;

  /// keyed by target state name (the attack state plus warning states).
  std::map<std::string, ConfusionCounts> per_target;
  LeadTimes lead_times;
  IntervalErrorStats interval_errors;

  double train_ms = 0.0;
  double per_prediction_us = 0.0;
};

struct EvalOptions {
  /// Extra target states to score beyond the attack state and the
  /// alphabet's warning states.
  std::vector<StateId> extra_targets;
  bool no_prediction_as_fn = false;
  bool backoff = false;
  bool condition_interval_on_predicted = false;
};

/// Full pipeline: split temporally, train an order-m chain plus the
/// semi-Markov model on the training side, replay each host's test trace
/// through a fresh cursor, and aggregate outcome labels, lead times,
/// interval errors, and runtime.
inline EvalReport evaluate(const std::vector<HostTrace>& traces, const StateAlphabet& alphabet,
                           unsigned order, SplitSpec split,
                           IntervalSet intervals = IntervalSet::default_bins(),
                           EvalOptions options = {}) {
  using clock = std::chrono::steady_clock;

  EvalReport report;
  report.split = split;
  report.order = order;

  CorpusSplit corpus = split_corpus(traces, split);
  report.excluded_hosts = corpus.excluded_hosts;
  report.interval_errors.per_state.resize(alphabet.size());

  std::vector<StateId> targets{alphabet.attack_state()};
  for (StateId w : alphabet.warning_states()) targets.push_back(w);
  for (StateId t : options.extra_targets) targets.push_back(t);
  std::sort(targets.begin(), targets.end());
  targets.erase(std::unique(targets.begin(), targets.end()), targets.end());
  for (StateId t : targets) report.per_target[alphabet.name(t)];  // keep empty targets visible

  if (corpus.test.empty()) return report;  // degenerate split: nothing to score

  std::vector<CollapsedTrace> train;
  train.reserve(corpus.train.size());
  for (const auto& trace : corpus.train) train.push_back(collapse(trace));

  auto t0 = clock::now();
  std::unique_ptr<NextStateModel> chain;
  if (options.backoff && order > 1) {
    chain = std::make_unique<BackoffChainModel>(estimate_backoff(train, alphabet, order));
  } else if (order == 1) {
    chain = std::make_unique<MarkovChainModel>(estimate(train, alphabet, /*include_self=*/false));
  } else {
    chain = std::make_unique<ContextChainModel>(estimate_m(train, alphabet, order));
  }
  SemiMarkovModel smc = estimate_smc(train, alphabet, intervals);
  report.train_ms = std::chrono::duration<double, std::milli>(clock::now() - t0).count();

  Predictor predictor(*chain, alphabet, &smc,
                      {.condition_interval_on_predicted =
                           options.condition_interval_on_predicted});

  double predict_ns = 0;
  for (const auto& test_trace : corpus.test) {
    CollapsedTrace collapsed = collapse(test_trace);
    auto p0 = clock::now();
    std::vector<PredictionRecord> records = predictor.predict_trace(test_trace);
    predict_ns += std::chrono::duration<double, std::nano>(clock::now() - p0).count();

    ++report.hosts_tested;
    report.records_emitted += records.size();
    for (StateId target : targets) {
      report.per_target[alphabet.name(target)] +=
          label_outcomes(records, collapsed, target, options.no_prediction_as_fn);
    }
    LeadTimes leads = warning_lead_time(records, collapsed, alphabet);
    report.lead_times.attack.insert(report.lead_times.attack.end(), leads.attack.begin(),
                                    leads.attack.end());
    report.lead_times.precursor.insert(report.lead_times.precursor.end(),
                                       leads.precursor.begin(), leads.precursor.end());
    report.interval_errors += interval_error_report(records, collapsed, smc);
  }
  if (report.records_emitted > 0) {
    report.per_prediction_us = predict_ns / 1000.0 / static_cast<double>(report.records_emitted);
  }
  return report;
}

/// One row of the order-sweep table.
struct SweepRow {
  unsigned order = 1;
  std::optional<double> tpr;
  std::optional<double> fpr;
  std::optional<double> accuracy;
};

/// Trains and evaluates one chain per order on the same temporal split,
/// scoring predictions of `target`.
inline std::vector<SweepRow> order_sweep(const std::vector<HostTrace>& traces,
                                         const StateAlphabet& alphabet,
                                         const std::vector<unsigned>& orders, StateId target,
                                         SplitSpec split,
                                         IntervalSet intervals = IntervalSet::default_bins()) {
  if (orders.empty()) {
    throw ValidationError("order sweep needs at least one order");
  }
  std::vector<SweepRow> rows;
  rows.reserve(orders.size());
  for (unsigned order : orders) {
    EvalOptions options;
    options.extra_targets = {target};
    EvalReport report = evaluate(traces, alphabet, order, split, intervals, options);
    const ConfusionCounts& c = report.per_target.at(alphabet.name(target));
    rows.push_back({order, c.tpr(), c.fpr(), c.accuracy()});
  }
  return rows;
}

}  // namespace presage
