#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "presage/alphabet.hpp"
#include "presage/errors.hpp"
#include "presage/events.hpp"

namespace presage {

/// Outgoing counts and probabilities for one observed length-m context.
struct ContextRow {
  std::vector<std::uint64_t> counts;
  std::vector<double> probs;
  std::uint64_t total = 0;
};

using ContextKey = std::vector<StateId>;

/// Order-m transition model: rows are keyed by the m most recent states
/// rather than the current state alone. Only observed contexts are
/// stored — the dense table has N^m rows, so sparsity is mandatory at
/// high orders.
struct ContextMatrix {
  StateAlphabet alphabet;
  unsigned order = 1;
  std::map<ContextKey, ContextRow> rows;

  const ContextRow* find(std::span<const StateId> context) const {
    thread_local ContextKey key;
    key.assign(context.begin(), context.end());
    auto it = rows.find(key);
    return it == rows.end() ? nullptr : &it->second;
  }

  std::uint64_t total_transitions() const {
    std::uint64_t total = 0;
    for (const auto& [key, row] : rows) total += row.total;
    return total;
  }
};

/// A next-state choice with its model probability.
struct StatePrediction {
  StateId state = 0;
  double prob = 0.0;

  friend bool operator==(const StatePrediction&, const StatePrediction&) = default;
};

/// Counts every (m+1)-event window within each host trace: the first m
/// events form the context, the last is the outcome. Windows never span
/// host boundaries. Order 1 reduces exactly to the single-state chain.
inline ContextMatrix estimate_m(const std::vector<CollapsedTrace>& traces,
                                const StateAlphabet& alphabet, unsigned order) {
  if (order < 1) {
    throw ValidationError("chain order must be >= 1");
  }
  ContextMatrix m{alphabet, order, {}};
  const std::size_t n = alphabet.size();
  std::uint64_t total = 0;
  ContextKey key(order);
  for (const auto& trace : traces) {
    const auto& ev = trace.events;
    if (ev.size() < order + 1) continue;
    for (std::size_t k = 0; k + order < ev.size(); ++k) {
      for (unsigned d = 0; d < order; ++d) {
        StateId s = ev[k + d].state;
        if (s >= n) throw ValidationError("trace contains state id out of alphabet range");
        key[d] = s;
      }
      StateId next = ev[k + order].state;
      if (next >= n) throw ValidationError("trace contains state id out of alphabet range");
      auto& row = m.rows[key];
      if (row.counts.empty()) row.counts.assign(n, 0);
      ++row.counts[next];
      ++row.total;
      ++total;
    }
  }
  if (total < 1) {
    throw InsufficientDataError("no trace has more than " + std::to_string(order) +
                                " events; cannot estimate an order-" + std::to_string(order) +
                                " chain");
  }
  for (auto& [ctx, row] : m.rows) {
    row.probs.assign(n, 0.0);
    for (StateId j = 0; j < n; ++j) {
      row.probs[j] = static_cast<double>(row.counts[j]) / static_cast<double>(row.total);
    }
  }
  return m;
}

/// Most likely next state after the given context (argmax over the
/// context's row; ties break to the lowest state index). Returns nullopt
/// when the context was never seen in training.
inline std::optional<StatePrediction> predict_next(const ContextMatrix& m,
                                                   std::span<const StateId> context) {
  if (context.size() != m.order) {
    throw ValidationError("context length does not match chain order");
  }
  for (StateId s : context) {
    if (!m.alphabet.valid(s)) {
      throw ValidationError("context contains state id out of alphabet range");
    }
  }
  const ContextRow* row = m.find(context);
  if (row == nullptr || row->total == 0) return std::nullopt;
  StateId best = 0;
  for (StateId j = 1; j < row->probs.size(); ++j) {
    if (row->probs[j] > row->probs[best]) best = j;
  }
  return StatePrediction{best, row->probs[best]};
}

/// A family of chains of orders m..1 trained on the same traces, for the
/// optional back-off prediction mode: unseen contexts retry with one
/// fewer state of history until a row is found.
struct BackoffChain {
  std::vector<ContextMatrix> by_order;  // index 0 holds order m, last holds order 1

  unsigned order() const { return by_order.empty() ? 0 : by_order.front().order; }
};

inline BackoffChain estimate_backoff(const std::vector<CollapsedTrace>& traces,
                                     const StateAlphabet& alphabet, unsigned order) {
  BackoffChain chain;
  for (unsigned m = order; m >= 1; --m) {
    chain.by_order.push_back(estimate_m(traces, alphabet, m));
  }
  return chain;
}

inline std::optional<StatePrediction> predict_next(const BackoffChain& chain,
                                                   std::span<const StateId> context) {
  for (const auto& m : chain.by_order) {
    if (context.size() < m.order) continue;
    auto suffix = context.subspan(context.size() - m.order);
    if (auto p = predict_next(m, suffix)) return p;
  }
  return std::nullopt;
}

}  // namespace presage
