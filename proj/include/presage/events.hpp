#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <vector>

#include "presage/alphabet.hpp"
#include "presage/errors.hpp"

namespace presage {

/// One timestamped state observation. `t` is minutes from the start of
/// the host's trace; sub-minute precision is preserved from ingestion.
struct TraceEvent {
  double t = 0.0;
  StateId state = 0;

  friend bool operator==(const TraceEvent&, const TraceEvent&) = default;
};

/// The timestamped state sequence observed for one host. Events are
/// sorted by t (non-decreasing); equal timestamps keep input order.
struct HostTrace {
  std::string host;
  std::vector<TraceEvent> events;
};

/// A HostTrace with consecutive same-state runs merged into single
/// events. Each event keeps the timestamp of the run's first alert;
/// run_lengths and run_durations record what was merged away.
struct CollapsedTrace {
  std::string host;
  std::vector<TraceEvent> events;
  std::vector<std::uint64_t> run_lengths;
  std::vector<double> run_durations;
};

namespace detail {

inline void check_sorted(const std::vector<TraceEvent>& events) {
  for (std::size_t i = 1; i < events.size(); ++i) {
    if (events[i].t < events[i - 1].t) {
      throw ValidationError("trace events not sorted by t");
    }
  }
}

}  // namespace detail

/// Merges every run of consecutive identical states into one event.
///
/// The merged event keeps the t of the run's first alert (predictions are
/// made at state onset); the run's duration is last-alert minus
/// first-alert. With the default infinite `max_gap_minutes` the result
/// contains no self-transitions and re-collapsing is a no-op. A finite
/// max gap splits runs whose consecutive alerts are farther apart than
/// the gap, which relaxes both guarantees; it exists for experimentation
/// only.
inline CollapsedTrace collapse(const HostTrace& trace,
                               double max_gap_minutes = std::numeric_limits<double>::infinity()) {
  if (trace.events.empty()) {
    throw EmptyTraceError("cannot collapse empty trace for host '" + trace.host + "'");
  }
  detail::check_sorted(trace.events);

  CollapsedTrace out;
  out.host = trace.host;
  std::size_t run_start = 0;
  for (std::size_t i = 1; i <= trace.events.size(); ++i) {
    bool run_ends = i == trace.events.size() ||
                    trace.events[i].state != trace.events[run_start].state ||
                    trace.events[i].t - trace.events[i - 1].t > max_gap_minutes;
    if (!run_ends) continue;
    out.events.push_back(trace.events[run_start]);
    out.run_lengths.push_back(i - run_start);
    out.run_durations.push_back(trace.events[i - 1].t - trace.events[run_start].t);
    run_start = i;
  }
  return out;
}

/// Collapsing an already collapsed trace is a no-op.
inline CollapsedTrace collapse(const CollapsedTrace& trace) { return trace; }

/// Summary of the self-transition runs observed for one state. A run is
/// two or more consecutive alerts for the same state; its duration is
/// measured first alert to last alert within the run.
struct RunStats {
  std::uint64_t run_count = 0;

  double duration_min = 0.0;
  double duration_max = 0.0;
  double duration_mean = 0.0;
  double duration_stdev = 0.0;
  /// Most frequent whole-minute duration bin; bin 0 means under a minute.
  std::uint64_t duration_mode_bin = 0;

  std::uint64_t length_min = 0;
  std::uint64_t length_max = 0;
  double length_mean = 0.0;
  double length_stdev = 0.0;
  std::uint64_t length_mode = 0;
};

/// Per-state self-transition statistics; states with no run of length >= 2
/// are absent (nullopt), not zero-filled.
struct SelfTransitionSummary {
  std::vector<std::optional<RunStats>> per_state;
};

namespace detail {

struct Accumulator {
  std::vector<double> durations;
  std::vector<std::uint64_t> lengths;
};

inline RunStats finalize(const Accumulator& acc) {
  RunStats s;
  s.run_count = acc.durations.size();
  double dsum = 0, dsq = 0;
  std::map<std::uint64_t, std::uint64_t> dbins;
  s.duration_min = std::numeric_limits<double>::infinity();
  for (double d : acc.durations) {
    dsum += d;
    dsq += d * d;
    s.duration_min = std::min(s.duration_min, d);
    s.duration_max = std::max(s.duration_max, d);
    ++dbins[static_cast<std::uint64_t>(std::floor(d))];
  }
  double n = static_cast<double>(s.run_count);
  s.duration_mean = dsum / n;
  // population stdev; single-run states report 0
  s.duration_stdev = std::sqrt(std::max(0.0, dsq / n - s.duration_mean * s.duration_mean));
  std::uint64_t best = 0;
  for (const auto& [bin, cnt] : dbins) {
    if (cnt > best) {
      best = cnt;
      s.duration_mode_bin = bin;
    }
  }

  double lsum = 0, lsq = 0;
  std::map<std::uint64_t, std::uint64_t> lbins;
  s.length_min = std::numeric_limits<std::uint64_t>::max();
  for (std::uint64_t l : acc.lengths) {
    lsum += static_cast<double>(l);
    lsq += static_cast<double>(l) * static_cast<double>(l);
    s.length_min = std::min(s.length_min, l);
    s.length_max = std::max(s.length_max, l);
    ++lbins[l];
  }
  s.length_mean = lsum / n;
  s.length_stdev = std::sqrt(std::max(0.0, lsq / n - s.length_mean * s.length_mean));
  best = 0;
  for (const auto& [len, cnt] : lbins) {
    if (cnt > best) {
      best = cnt;
      s.length_mode = len;
    }
  }
  return s;
}

}  // namespace detail

/// Scans raw (uncollapsed) traces for self-transition runs and summarises
/// duration and length per state. Only runs of length >= 2 count.
inline SelfTransitionSummary self_transition_stats(const std::vector<HostTrace>& traces,
                                                   const StateAlphabet& alphabet) {
  if (traces.empty()) {
    throw EmptyTraceError("self_transition_stats needs at least one trace");
  }
  std::vector<detail::Accumulator> acc(alphabet.size());
  for (const auto& trace : traces) {
    detail::check_sorted(trace.events);
    std::size_t run_start = 0;
    for (std::size_t i = 1; i <= trace.events.size(); ++i) {
      bool run_ends =
          i == trace.events.size() || trace.events[i].state != trace.events[run_start].state;
      if (!run_ends) continue;
      std::size_t len = i - run_start;
      if (len >= 2) {
        StateId s = trace.events[run_start].state;
        if (!alphabet.valid(s)) {
          throw ValidationError("trace contains state id out of alphabet range");
        }
        acc[s].durations.push_back(trace.events[i - 1].t - trace.events[run_start].t);
        acc[s].lengths.push_back(len);
      }
      run_start = i;
    }
  }
  SelfTransitionSummary out;
  out.per_state.resize(alphabet.size());
  for (StateId s = 0; s < alphabet.size(); ++s) {
    if (!acc[s].durations.empty()) {
      out.per_state[s] = detail::finalize(acc[s]);
    }
  }
  return out;
}

}  // namespace presage
