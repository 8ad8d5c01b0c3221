#pragma once

// Shared fixtures and independent oracles for the test suite. Oracles
// here deliberately re-derive results with different algorithms than the
// library (power iteration, linear scans, brute-force tallies) so they
// can catch implementation mistakes rather than mirror them.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "presage/alphabet.hpp"
#include "presage/events.hpp"
#include "presage/rng.hpp"

namespace ptest {

using presage::CollapsedTrace;
using presage::HostTrace;
using presage::StateAlphabet;
using presage::StateId;
using presage::TraceEvent;
using presage::Xoshiro256pp;

inline StateAlphabet botnet() { return StateAlphabet::botnet_default(); }

/// Alphabet A, B, C, ... with the LAST state designated as the attack.
inline StateAlphabet letters(std::size_t n) {
  std::vector<std::string> states;
  for (std::size_t i = 0; i < n; ++i) states.emplace_back(1, static_cast<char>('A' + i));
  return StateAlphabet(states, states.back());
}

inline HostTrace trace(std::string host, std::vector<std::pair<double, StateId>> events) {
  HostTrace t{std::move(host), {}};
  for (auto [time, state] : events) t.events.push_back({time, state});
  return t;
}

/// Random row-stochastic matrix with all entries positive (hence
/// irreducible and aperiodic). include_self=false zeroes the diagonal.
inline std::vector<std::vector<double>> random_stochastic(Xoshiro256pp& rng, std::size_t n,
                                                          bool include_self) {
  std::vector<std::vector<double>> m(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    double sum = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (!include_self && i == j) continue;
      m[i][j] = 0.05 + rng.uniform01();
      sum += m[i][j];
    }
    for (double& v : m[i]) v /= sum;
  }
  return m;
}

/// Splits an embedded matrix into per-interval masses with random
/// weights, so that the masses sum back to the embedded probabilities.
inline std::vector<std::vector<std::vector<double>>> random_interval_masses(
    Xoshiro256pp& rng, const std::vector<std::vector<double>>& embedded,
    std::size_t n_intervals) {
  std::size_t n = embedded.size();
  std::vector<std::vector<std::vector<double>>> q(
      n_intervals, std::vector<std::vector<double>>(n, std::vector<double>(n, 0.0)));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (embedded[i][j] <= 0) continue;
      std::vector<double> w(n_intervals);
      double sum = 0;
      for (auto& v : w) {
        v = rng.uniform01();
        sum += v;
      }
      for (std::size_t k = 0; k < n_intervals; ++k) {
        q[k][i][j] = embedded[i][j] * w[k] / sum;
      }
      // make the partition exact: the last interval absorbs rounding
      double used = 0;
      for (std::size_t k = 0; k + 1 < n_intervals; ++k) used += q[k][i][j];
      q[n_intervals - 1][i][j] = embedded[i][j] - used;
    }
  }
  return q;
}

/// Random raw trace with same-state repeats (for collapse/stream tests).
inline HostTrace random_repeating_trace(Xoshiro256pp& rng, std::string host, std::size_t n_events,
                                        std::size_t n_states, double repeat_prob = 0.5) {
  HostTrace t{std::move(host), {}};
  double time = 0;
  StateId state = static_cast<StateId>(rng.below(n_states));
  for (std::size_t i = 0; i < n_events; ++i) {
    t.events.push_back({time, state});
    time += rng.uniform01() * 2.0;
    if (rng.uniform01() >= repeat_prob) {
      StateId next = static_cast<StateId>(rng.below(n_states - 1));
      if (next >= state) ++next;
      state = next;
    }
  }
  return t;
}

// --------------------------------------------------------------------------
// oracles
// --------------------------------------------------------------------------

/// Stationary distribution by power iteration: rows of T^k converge to p
/// for irreducible aperiodic chains.
inline std::vector<double> power_iteration(const std::vector<std::vector<double>>& probs,
                                           int iterations = 10000) {
  std::size_t n = probs.size();
  std::vector<double> p(n, 1.0 / static_cast<double>(n));
  std::vector<double> next(n);
  for (int it = 0; it < iterations; ++it) {
    for (std::size_t j = 0; j < n; ++j) {
      double sum = 0;
      for (std::size_t i = 0; i < n; ++i) sum += p[i] * probs[i][j];
      next[j] = sum;
    }
    std::swap(p, next);
  }
  double sum = std::accumulate(p.begin(), p.end(), 0.0);
  for (double& v : p) v /= sum;
  return p;
}

/// Linear-scan interval classifier (left-open, right-closed bins).
inline int classify_linear(const std::vector<double>& boundaries, double dt) {
  for (std::size_t k = 0; k < boundaries.size(); ++k) {
    if (dt <= boundaries[k]) return static_cast<int>(k) + 1;
  }
  return static_cast<int>(boundaries.size()) + 1;
}

/// Brute-force transition counter used against markov::estimate.
inline std::map<std::pair<StateId, StateId>, std::uint64_t> count_transitions_bruteforce(
    const std::vector<CollapsedTrace>& traces) {
  std::map<std::pair<StateId, StateId>, std::uint64_t> counts;
  for (const auto& t : traces) {
    for (std::size_t k = 0; k + 1 < t.events.size(); ++k) {
      ++counts[{t.events[k].state, t.events[k + 1].state}];
    }
  }
  return counts;
}

/// Brute-force self-transition run scanner (duration/length lists per
/// state), independent of events.hpp internals.
struct RunLists {
  std::vector<std::vector<double>> durations;
  std::vector<std::vector<std::uint64_t>> lengths;
};

inline RunLists scan_runs_bruteforce(const std::vector<HostTrace>& traces, std::size_t n_states) {
  RunLists lists{std::vector<std::vector<double>>(n_states),
                 std::vector<std::vector<std::uint64_t>>(n_states)};
  for (const auto& t : traces) {
    std::size_t i = 0;
    while (i < t.events.size()) {
      std::size_t j = i;
      while (j + 1 < t.events.size() && t.events[j + 1].state == t.events[i].state) ++j;
      std::uint64_t len = j - i + 1;
      if (len >= 2) {
        lists.durations[t.events[i].state].push_back(t.events[j].t - t.events[i].t);
        lists.lengths[t.events[i].state].push_back(len);
      }
      i = j + 1;
    }
  }
  return lists;
}

}  // namespace ptest
