#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <iterator>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "presage/alphabet.hpp"
#include "presage/errors.hpp"
#include "presage/events.hpp"
#include "presage/higher_order.hpp"
#include "presage/markov.hpp"
#include "presage/parallel.hpp"
#include "presage/rng.hpp"
#include "presage/semi_markov.hpp"

namespace presage {

/// Ground-truth trace generator spec. Two chain modes:
///
///  * order-1: `embedded` (row-stochastic N x N) plus per-interval masses
///    `q` partitioning it, exactly the shape the semi-Markov estimator
///    recovers. Gaps are drawn by first picking the interval with
///    probability q[n][i][j] / embedded[i][j] for the sampled transition.
///
///  * order-m: `context_rows` maps each length-m context to a next-state
///    distribution; the context set must be closed under its own
///    transitions. Gaps are drawn from `gap_interval_weights`.
///
/// Within the chosen interval (lo, hi] the duration is uniform, or a
/// fixed point at lo + f * (hi - lo) when `point_mass_fraction` f is set.
/// The unbounded final interval samples from (B, 2B] where B is the last
/// boundary. The seed fully determines the output.
struct GeneratorSpec {
  StateAlphabet alphabet = StateAlphabet::botnet_default();

  // order-1 mode
  std::vector<std::vector<double>> embedded;
  std::vector<std::vector<std::vector<double>>> q;

  // order-m mode (used when non-empty; embedded/q must then be empty)
  std::map<ContextKey, std::vector<double>> context_rows;
  std::vector<double> gap_interval_weights;

  IntervalSet intervals = IntervalSet::default_bins();
  std::optional<double> point_mass_fraction;

  std::size_t n_hosts = 1;
  std::size_t events_per_host = 2;
  std::uint64_t seed = 0;

  unsigned order() const { return context_rows.empty() ? 1 : static_cast<unsigned>(context_rows.begin()->first.size()); }
};

namespace detail {

inline void validate_distribution(const std::vector<double>& row, std::size_t n,
                                  const std::string& what) {
  if (row.size() != n) {
    throw ValidationError(what + " has wrong width (expected " + std::to_string(n) + ")");
  }
  double sum = 0;
  for (double v : row) {
    if (v < 0) throw ValidationError(what + " has a negative entry");
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw ValidationError(what + " does not sum to 1 (got " + std::to_string(sum) + ")");
  }
}

inline void validate_spec(const GeneratorSpec& spec) {
  const std::size_t n = spec.alphabet.size();
  if (spec.n_hosts < 1) throw ValidationError("generator spec: n_hosts must be >= 1");
  if (spec.events_per_host < 1) {
    throw ValidationError("generator spec: events_per_host must be >= 1");
  }
  if (spec.point_mass_fraction &&
      (*spec.point_mass_fraction <= 0 || *spec.point_mass_fraction > 1)) {
    throw ValidationError("generator spec: point_mass_fraction must lie in (0, 1]");
  }

  if (spec.context_rows.empty()) {
    if (spec.embedded.size() != n) {
      throw ValidationError("generator spec: embedded matrix size does not match alphabet");
    }
    for (std::size_t i = 0; i < n; ++i) {
      validate_distribution(spec.embedded[i], n, "generator spec: embedded row " + std::to_string(i));
    }
    if (spec.q.size() != spec.intervals.n_intervals()) {
      throw ValidationError("generator spec: q must have one matrix per interval");
    }
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        double mass = 0;
        for (const auto& qn : spec.q) {
          if (qn.size() != n || qn[i].size() != n) {
            throw ValidationError("generator spec: q matrix has wrong shape");
          }
          if (qn[i][j] < 0) throw ValidationError("generator spec: q has a negative entry");
          mass += qn[i][j];
        }
        if (std::abs(mass - spec.embedded[i][j]) > 1e-9) {
          throw ValidationError("generator spec: interval masses for transition (" +
                                std::to_string(i) + "," + std::to_string(j) +
                                ") do not sum to the embedded probability");
        }
      }
    }
  } else {
    if (!spec.embedded.empty() || !spec.q.empty()) {
      throw ValidationError("generator spec: give either embedded/q or context_rows, not both");
    }
    const std::size_t m = spec.context_rows.begin()->first.size();
    if (m < 1) throw ValidationError("generator spec: context length must be >= 1");
    for (const auto& [ctx, row] : spec.context_rows) {
      if (ctx.size() != m) {
        throw ValidationError("generator spec: context keys must all have the same length");
      }
      for (StateId s : ctx) {
        if (!spec.alphabet.valid(s)) {
          throw ValidationError("generator spec: context contains invalid state id");
        }
      }
      validate_distribution(row, n, "generator spec: context row");
      // closure: any successor context reachable with positive
      // probability must itself have a row
      for (StateId next = 0; next < n; ++next) {
        if (row[next] <= 0) continue;
        ContextKey succ(ctx.begin() + 1, ctx.end());
        succ.push_back(next);
        if (spec.context_rows.find(succ) == spec.context_rows.end()) {
          throw ValidationError(
              "generator spec: context set is not closed (missing successor context)");
        }
      }
    }
    validate_distribution(spec.gap_interval_weights, spec.intervals.n_intervals(),
                          "generator spec: gap_interval_weights");
  }
}

inline double sample_duration(const GeneratorSpec& spec, int interval, Xoshiro256pp& rng) {
  auto [lo, hi] = spec.intervals.bounds(interval);
  if (std::isinf(hi)) hi = 2 * lo;  // unbounded bin: sample (B, 2B]
  double f = spec.point_mass_fraction ? *spec.point_mass_fraction : rng.uniform01_open_low();
  return lo + f * (hi - lo);
}

inline HostTrace generate_host(const GeneratorSpec& spec, const StationaryDistribution* start,
                               std::size_t host_index) {
  Xoshiro256pp rng = Xoshiro256pp::substream(spec.seed, host_index);
  HostTrace trace;
  {
    char buf[16];
    std::snprintf(buf, sizeof buf, "h%03zu", host_index);
    trace.host = buf;
  }
  trace.events.reserve(spec.events_per_host);
  double t = 0;

  if (spec.context_rows.empty()) {
    StateId state = static_cast<StateId>(rng.categorical(start->p));
    trace.events.push_back({t, state});
    while (trace.events.size() < spec.events_per_host) {
      StateId next = static_cast<StateId>(rng.categorical(spec.embedded[state]));
      std::vector<double> interval_mass(spec.intervals.n_intervals());
      for (std::size_t n = 0; n < interval_mass.size(); ++n) {
        interval_mass[n] = spec.q[n][state][next];
      }
      int interval = static_cast<int>(rng.categorical(interval_mass)) + 1;
      t += sample_duration(spec, interval, rng);
      trace.events.push_back({t, next});
      state = next;
    }
  } else {
    // start in a uniformly chosen context; its states are emitted as the
    // opening events so the trace embodies the context that drives it
    std::size_t pick = static_cast<std::size_t>(rng.below(spec.context_rows.size()));
    auto it = spec.context_rows.begin();
    std::advance(it, static_cast<std::ptrdiff_t>(pick));
    ContextKey context = it->first;
    for (StateId s : context) {
      if (trace.events.size() >= spec.events_per_host) break;
      if (!trace.events.empty()) {
        int interval = static_cast<int>(rng.categorical(spec.gap_interval_weights)) + 1;
        t += sample_duration(spec, interval, rng);
      }
      trace.events.push_back({t, s});
    }
    while (trace.events.size() < spec.events_per_host) {
      const auto& row = spec.context_rows.at(context);
      StateId next = static_cast<StateId>(rng.categorical(row));
      int interval = static_cast<int>(rng.categorical(spec.gap_interval_weights)) + 1;
      t += sample_duration(spec, interval, rng);
      trace.events.push_back({t, next});
      context.erase(context.begin());
      context.push_back(next);
    }
  }
  return trace;
}

}  // namespace detail

/// Samples host traces from the spec. Each trace starts from the
/// embedded chain's stationary distribution (order-1 mode) or a uniformly
/// chosen context (order-m mode); per-host substreams make the output
/// independent of generation order and bit-reproducible for a given seed
/// regardless of the thread count.
inline std::vector<HostTrace> generate(const GeneratorSpec& spec, unsigned threads = 1) {
  detail::validate_spec(spec);

  std::optional<StationaryDistribution> start;
  if (spec.context_rows.empty()) {
    auto embedded = TransitionMatrix::from_probs(spec.alphabet, spec.embedded,
                                                 /*include_self=*/true, /*row_tol=*/1e-9);
    start = stationary(embedded);  // throws StructuralError when reducible
  }

  std::vector<HostTrace> traces(spec.n_hosts);
  detail::parallel_for(spec.n_hosts, threads, [&](std::size_t h) {
    traces[h] = detail::generate_host(spec, start ? &*start : nullptr, h);
  });
  return traces;
}

/// Convenience: interval masses that put all gap probability in one bin,
/// shaped to partition the given embedded matrix.
inline std::vector<std::vector<std::vector<double>>> single_interval_masses(
    const std::vector<std::vector<double>>& embedded, std::size_t n_intervals,
    std::size_t interval_index_1based = 1) {
  std::vector<std::vector<std::vector<double>>> q(
      n_intervals, std::vector<std::vector<double>>(embedded.size(),
                                                    std::vector<double>(embedded.size(), 0.0)));
  q[interval_index_1based - 1] = embedded;
  return q;
}

}  // namespace presage
