#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

#include "presage/errors.hpp"
#include "presage/markov.hpp"

namespace presage {

/// Partition of (0, inf) minutes into left-open right-closed bins. The
/// stored boundaries are the right endpoints of the bounded bins; one
/// unbounded bin follows the last boundary. Interval indices are 1-based.
class IntervalSet {
 public:
  explicit IntervalSet(std::vector<double> boundaries) : boundaries_(std::move(boundaries)) {
    if (boundaries_.empty()) {
      throw ValidationError("interval set needs at least one boundary");
    }
    if (boundaries_.front() <= 0) {
      throw ValidationError("first interval boundary must be > 0");
    }
    for (std::size_t i = 1; i < boundaries_.size(); ++i) {
      if (boundaries_[i] <= boundaries_[i - 1]) {
        throw ValidationError("interval boundaries must be strictly increasing");
      }
    }
  }

  /// Default holding-time bins: one minute, then ten-minute steps up to
  /// an hour, then everything beyond.
  static IntervalSet default_bins() { return IntervalSet({1, 10, 20, 30, 40, 50, 60}); }

  std::size_t n_intervals() const noexcept { return boundaries_.size() + 1; }

  const std::vector<double>& boundaries() const noexcept { return boundaries_; }

  /// Maps a gap in minutes to its 1-based interval. A zero gap (alerts
  /// with identical timestamps) maps to interval 1; sub-minute gaps
  /// dominate real alert streams, so the degenerate case belongs with
  /// them. Negative gaps are an error.
  int classify(double dt_minutes) const {
    if (dt_minutes < 0) {
      throw ValidationError("cannot classify a negative time gap");
    }
    auto it = std::lower_bound(boundaries_.begin(), boundaries_.end(), dt_minutes);
    return static_cast<int>(it - boundaries_.begin()) + 1;
  }

  /// (lo, hi] bounds of a 1-based interval; the final interval reports
  /// hi = +infinity.
  std::pair<double, double> bounds(int n) const {
    if (n < 1 || static_cast<std::size_t>(n) > n_intervals()) {
      throw ValidationError("interval index out of range");
    }
    double lo = n == 1 ? 0.0 : boundaries_[static_cast<std::size_t>(n) - 2];
    double hi = static_cast<std::size_t>(n) == n_intervals()
                    ? std::numeric_limits<double>::infinity()
                    : boundaries_[static_cast<std::size_t>(n) - 1];
    return {lo, hi};
  }

  friend bool operator==(const IntervalSet& a, const IntervalSet& b) {
    return a.boundaries_ == b.boundaries_;
  }

 private:
  std::vector<double> boundaries_;
};

inline int classify_interval(const IntervalSet& intervals, double dt_minutes) {
  return intervals.classify(dt_minutes);
}

/// Discrete-time semi-Markov model: the embedded no-self-transition chain
/// decides WHICH transition happens; the per-interval matrices q decide
/// WHEN. q[n][i][j] is the fraction of all transitions out of state i
/// that went to j within interval n, so the q matrices partition the
/// embedded transition mass: summing them over n reproduces the embedded
/// probabilities exactly.
struct SemiMarkovModel {
  TransitionMatrix embedded;
  IntervalSet intervals;
  /// counts_q[n][i][j]: transitions i -> j whose gap fell in interval n+1.
  std::vector<std::vector<std::vector<std::uint64_t>>> counts_q;
  /// q[n][i][j] = counts_q[n][i][j] / (total transitions out of i).
  std::vector<std::vector<std::vector<double>>> q;
};

/// Estimates the semi-Markov model from collapsed traces: every
/// within-host consecutive pair contributes one count to the interval its
/// gap falls in. Normalisation is by the source state's total outgoing
/// count across ALL intervals.
inline SemiMarkovModel estimate_smc(const std::vector<CollapsedTrace>& traces,
                                    const StateAlphabet& alphabet,
                                    IntervalSet intervals = IntervalSet::default_bins()) {
  const std::size_t n_states = alphabet.size();
  const std::size_t n_int = intervals.n_intervals();

  SemiMarkovModel model{estimate(traces, alphabet, /*include_self=*/false),
                        std::move(intervals),
                        {},
                        {}};
  model.counts_q.assign(
      n_int, std::vector<std::vector<std::uint64_t>>(n_states,
                                                     std::vector<std::uint64_t>(n_states, 0)));
  for (const auto& trace : traces) {
    const auto& ev = trace.events;
    for (std::size_t k = 0; k + 1 < ev.size(); ++k) {
      int bin = model.intervals.classify(ev[k + 1].t - ev[k].t);
      ++model.counts_q[static_cast<std::size_t>(bin) - 1][ev[k].state][ev[k + 1].state];
    }
  }

  model.q.assign(n_int, std::vector<std::vector<double>>(n_states,
                                                         std::vector<double>(n_states, 0.0)));
  for (StateId i = 0; i < n_states; ++i) {
    auto total = static_cast<double>(model.embedded.row_total(i));
    if (total <= 0) continue;
    for (std::size_t n = 0; n < n_int; ++n) {
      for (StateId j = 0; j < n_states; ++j) {
        model.q[n][i][j] = static_cast<double>(model.counts_q[n][i][j]) / total;
      }
    }
  }
  return model;
}

/// Probability that the chain leaves `state` within t_x minutes,
/// H(t_x) = sum_j F_ij(t_x) * P_ij.
///
/// Two readings of the per-interval masses exist: the stored q is the
/// UNconditional mass (each cell divided by the state's whole outgoing
/// total), while F_ij here is the CONDITIONAL holding-time CDF for the
/// pair (cumulative q mass divided by the embedded probability). Their
/// product collapses back to the unconditional cumulative mass, so the
/// sum below is simply the row's cumulative q through the interval
/// containing t_x — a proper CDF, non-decreasing with H(inf) = 1.
inline std::optional<double> holding_time_cdf(const SemiMarkovModel& model, StateId state,
                                              double t_x) {
  if (!model.embedded.alphabet.valid(state)) {
    throw ValidationError("state id out of alphabet range");
  }
  if (!model.embedded.row_has_data(state)) return std::nullopt;
  int upto = model.intervals.classify(t_x);
  double h = 0;
  for (int n = 1; n <= upto; ++n) {
    for (double mass : model.q[static_cast<std::size_t>(n) - 1][state]) h += mass;
  }
  return h;
}

/// Most likely holding-time interval for `state`, as the argmax of the
/// per-interval transition mass. By default the mass is marginalised over
/// destination states; passing condition_on restricts it to one
/// destination. Ties break to the EARLIEST interval: an early warning is
/// acceptable, a late one is not.
inline std::optional<int> predict_holding_interval(const SemiMarkovModel& model, StateId state,
                                                   std::optional<StateId> condition_on = {}) {
  if (!model.embedded.alphabet.valid(state)) {
    throw ValidationError("state id out of alphabet range");
  }
  if (condition_on && !model.embedded.alphabet.valid(*condition_on)) {
    throw ValidationError("conditioning state id out of alphabet range");
  }
  if (!model.embedded.row_has_data(state)) return std::nullopt;

  int best = 0;
  double best_mass = 0;
  for (std::size_t n = 0; n < model.intervals.n_intervals(); ++n) {
    double mass = 0;
    if (condition_on) {
      mass = model.q[n][state][*condition_on];
    } else {
      for (double v : model.q[n][state]) mass += v;
    }
    if (mass > best_mass) {
      best_mass = mass;
      best = static_cast<int>(n) + 1;
    }
  }
  if (best == 0) return std::nullopt;  // no observed mass for this (state, destination)
  return best;
}

/// Signed interval-prediction error; negative means the transition was
/// predicted to happen earlier than it did.
inline int interval_error(int predicted, int actual) { return predicted - actual; }

}  // namespace presage
