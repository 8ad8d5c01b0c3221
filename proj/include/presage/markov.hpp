#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "presage/alphabet.hpp"
#include "presage/errors.hpp"
#include "presage/events.hpp"

namespace presage {

/// Row-stochastic transition model estimated from observed state
/// sequences. Counts are kept alongside probabilities so models can be
/// pooled and re-normalised exactly.
struct TransitionMatrix {
  StateAlphabet alphabet;
  std::vector<std::vector<std::uint64_t>> counts;
  std::vector<std::vector<double>> probs;
  /// Whether self-transitions were counted. False means the diagonal is
  /// structurally zero (the collapsed-trace chain).
  bool include_self = true;

  std::size_t n_states() const noexcept { return probs.size(); }

  std::uint64_t row_total(StateId i) const {
    return std::accumulate(counts.at(i).begin(), counts.at(i).end(), std::uint64_t{0});
  }

  bool row_has_data(StateId i) const { return row_total(i) > 0; }

  /// States observed only as a final event: no outgoing transitions, so
  /// no prediction can be made from them.
  std::vector<StateId> zero_rows() const {
    std::vector<StateId> out;
    for (StateId i = 0; i < n_states(); ++i) {
      if (!row_has_data(i)) out.push_back(i);
    }
    return out;
  }

  /// Builds a matrix directly from published probabilities (no observed
  /// counts). Rows are accepted if they sum to 1 within `row_tol`, which
  /// admits rounded values from the literature; counts are synthesised at
  /// a fixed scale purely so row_has_data() keeps working.
  static TransitionMatrix from_probs(StateAlphabet alphabet,
                                     std::vector<std::vector<double>> probs, bool include_self,
                                     double row_tol = 0.01) {
    const std::size_t n = alphabet.size();
    if (probs.size() != n) {
      throw ValidationError("probability matrix size does not match alphabet");
    }
    TransitionMatrix m{std::move(alphabet), {}, std::move(probs), include_self};
    m.counts.assign(n, std::vector<std::uint64_t>(n, 0));
    for (StateId i = 0; i < n; ++i) {
      if (m.probs[i].size() != n) {
        throw ValidationError("probability matrix is not square");
      }
      double row_sum = 0;
      for (StateId j = 0; j < n; ++j) {
        double p = m.probs[i][j];
        if (p < 0) throw ValidationError("negative transition probability");
        if (!include_self && i == j && p != 0) {
          throw ValidationError("diagonal must be zero when self-transitions are excluded");
        }
        row_sum += p;
        m.counts[i][j] = static_cast<std::uint64_t>(std::llround(p * 1e6));
      }
      if (row_sum > 0 && std::abs(row_sum - 1.0) > row_tol) {
        throw ValidationError("row " + std::to_string(i) + " sums to " +
                              std::to_string(row_sum) + ", expected 1");
      }
    }
    return m;
  }
};

/// Long-run state occupancy probabilities of an irreducible chain.
struct StationaryDistribution {
  std::vector<double> p;
};

namespace detail {

/// Counts transitions over consecutive event pairs of one sequence.
inline void accumulate_counts(std::span<const TraceEvent> events, bool include_self,
                              std::vector<std::vector<std::uint64_t>>& counts,
                              std::uint64_t& total) {
  const std::size_t n = counts.size();
  for (std::size_t k = 0; k + 1 < events.size(); ++k) {
    StateId a = events[k].state;
    StateId b = events[k + 1].state;
    if (a >= n || b >= n) {
      throw ValidationError("trace contains state id out of alphabet range");
    }
    if (!include_self && a == b) continue;
    ++counts[a][b];
    ++total;
  }
}

inline TransitionMatrix finalize_matrix(StateAlphabet alphabet,
                                        std::vector<std::vector<std::uint64_t>> counts,
                                        bool include_self, std::uint64_t total, double alpha) {
  if (total < 1) {
    throw InsufficientDataError("need at least one transition to estimate a chain");
  }
  const std::size_t n = alphabet.size();
  TransitionMatrix m{std::move(alphabet), std::move(counts), {}, include_self};
  m.probs.assign(n, std::vector<double>(n, 0.0));
  for (StateId i = 0; i < n; ++i) {
    std::uint64_t row_sum = m.row_total(i);
    // additive smoothing spreads alpha pseudo-counts over the allowed
    // targets; zero rows stay all-zero (flagged, no prediction) when
    // alpha == 0
    double denom_cells = include_self ? static_cast<double>(n) : static_cast<double>(n - 1);
    double denom = static_cast<double>(row_sum) + alpha * denom_cells;
    if (denom <= 0) continue;
    for (StateId j = 0; j < n; ++j) {
      if (!include_self && i == j) continue;
      m.probs[i][j] = (static_cast<double>(m.counts[i][j]) + alpha) / denom;
    }
  }
  return m;
}

/// Positive-probability adjacency.
inline std::vector<std::vector<bool>> adjacency(const TransitionMatrix& m) {
  const std::size_t n = m.n_states();
  std::vector<std::vector<bool>> adj(n, std::vector<bool>(n, false));
  for (StateId i = 0; i < n; ++i) {
    for (StateId j = 0; j < n; ++j) {
      adj[i][j] = m.probs[i][j] > 0;
    }
  }
  return adj;
}

/// Transitive closure by Floyd–Warshall; fine at alphabet scale.
inline std::vector<std::vector<bool>> reachability(std::vector<std::vector<bool>> adj) {
  const std::size_t n = adj.size();
  for (std::size_t i = 0; i < n; ++i) adj[i][i] = true;
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t i = 0; i < n; ++i) {
      if (!adj[i][k]) continue;
      for (std::size_t j = 0; j < n; ++j) {
        if (adj[k][j]) adj[i][j] = true;
      }
    }
  }
  return adj;
}

}  // namespace detail

/// Pools transition counts across every host trace and normalises per
/// row. Transitions never cross host boundaries. With include_self=false,
/// consecutive same-state pairs are skipped, which on raw traces yields
/// exactly the collapsed-trace chain.
inline TransitionMatrix estimate(const std::vector<HostTrace>& traces,
                                 const StateAlphabet& alphabet, bool include_self,
                                 double alpha = 0.0) {
  std::vector<std::vector<std::uint64_t>> counts(alphabet.size(),
                                                 std::vector<std::uint64_t>(alphabet.size(), 0));
  std::uint64_t total = 0;
  for (const auto& trace : traces) {
    detail::accumulate_counts(trace.events, include_self, counts, total);
  }
  return detail::finalize_matrix(alphabet, std::move(counts), include_self, total, alpha);
}

inline TransitionMatrix estimate(const std::vector<CollapsedTrace>& traces,
                                 const StateAlphabet& alphabet, bool include_self = false,
                                 double alpha = 0.0) {
  std::vector<std::vector<std::uint64_t>> counts(alphabet.size(),
                                                 std::vector<std::uint64_t>(alphabet.size(), 0));
  std::uint64_t total = 0;
  for (const auto& trace : traces) {
    detail::accumulate_counts(trace.events, include_self, counts, total);
  }
  return detail::finalize_matrix(alphabet, std::move(counts), include_self, total, alpha);
}

/// Finds a pair (i, j) such that j is unreachable from i on the
/// positive-probability digraph, or nullopt when strongly connected.
inline std::optional<std::pair<StateId, StateId>> find_unreachable_pair(
    const TransitionMatrix& m) {
  auto reach = detail::reachability(detail::adjacency(m));
  const std::size_t n = m.n_states();
  for (StateId i = 0; i < n; ++i) {
    for (StateId j = 0; j < n; ++j) {
      if (!reach[i][j]) return std::make_pair(i, j);
    }
  }
  return std::nullopt;
}

/// True when all states communicate (strong connectivity of the
/// positive-probability digraph).
inline bool is_irreducible(const TransitionMatrix& m) {
  return !find_unreachable_pair(m).has_value();
}

/// True when every state's return-cycle lengths have GCD 1. A state that
/// can never return to itself has no cycle at all and is treated as
/// periodic, so chains with transient dead ends report false.
inline bool is_aperiodic(const TransitionMatrix& m) {
  const std::size_t n = m.n_states();
  auto adj = detail::adjacency(m);
  auto reach = detail::reachability(adj);

  std::vector<int> period(n, 0);
  std::vector<bool> done(n, false);
  for (StateId root = 0; root < n; ++root) {
    if (done[root]) continue;
    // the strongly connected component of root
    std::vector<StateId> scc;
    for (StateId v = 0; v < n; ++v) {
      if (reach[root][v] && reach[v][root]) scc.push_back(v);
    }
    // BFS levels within the component; every internal edge u->v
    // contributes |level(u) + 1 - level(v)| to the component's GCD
    std::vector<long long> level(n, -1);
    level[root] = 0;
    std::vector<StateId> queue{root};
    for (std::size_t q = 0; q < queue.size(); ++q) {
      StateId u = queue[q];
      for (StateId v : scc) {
        if (adj[u][v] && level[v] < 0) {
          level[v] = level[u] + 1;
          queue.push_back(v);
        }
      }
    }
    long long g = 0;
    for (StateId u : scc) {
      for (StateId v : scc) {
        if (!adj[u][v]) continue;
        long long diff = level[u] + 1 - level[v];
        g = std::gcd(g, diff < 0 ? -diff : diff);
      }
    }
    for (StateId v : scc) {
      period[v] = static_cast<int>(g);
      done[v] = true;
    }
  }
  for (StateId v = 0; v < n; ++v) {
    if (period[v] != 1) return false;
  }
  return true;
}

/// Solves the flow-balance system { p . T = p, sum(p) = 1 } for the
/// stationary distribution. The N+1 stacked equations are solved in the
/// least-squares sense (column-pivoting QR), which also copes with
/// published matrices whose rounded rows do not sum exactly to 1. The
/// chain must be irreducible; otherwise the offending state pair is
/// named.
inline StationaryDistribution stationary(const TransitionMatrix& m) {
  if (auto pair = find_unreachable_pair(m)) {
    throw StructuralError("chain is reducible: state '" + m.alphabet.name(pair->first) +
                          "' cannot reach state '" + m.alphabet.name(pair->second) + "'");
  }
  const auto n = static_cast<Eigen::Index>(m.n_states());
  Eigen::MatrixXd a(n + 1, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) {
      a(j, i) = m.probs[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] -
                (i == j ? 1.0 : 0.0);
    }
    a(n, j) = 1.0;
  }
  Eigen::VectorXd b = Eigen::VectorXd::Zero(n + 1);
  b(n) = 1.0;
  Eigen::VectorXd p = a.colPivHouseholderQr().solve(b);

  StationaryDistribution out;
  out.p.resize(static_cast<std::size_t>(n));
  double sum = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (p(i) < -1e-9) {
      throw StructuralError("stationary solve produced a negative probability");
    }
    out.p[static_cast<std::size_t>(i)] = std::max(p(i), 0.0);
    sum += out.p[static_cast<std::size_t>(i)];
  }
  if (sum <= 0) {
    throw StructuralError("stationary solve produced a degenerate distribution");
  }
  for (auto& v : out.p) v /= sum;
  return out;
}

/// One detailed-balance residual |P_i t_ij - P_j t_ji| for an unordered
/// state pair.
struct DetailedBalanceEntry {
  StateId i = 0;
  StateId j = 0;
  double residual = 0.0;
  bool pass = false;
};

/// Reports detailed-balance residuals for all unordered pairs against a
/// tolerance. This is a diagnostic: estimated chains need not be
/// reversible, so nothing is asserted here.
inline std::vector<DetailedBalanceEntry> reversibility_report(const TransitionMatrix& m,
                                                              const StationaryDistribution& dist,
                                                              double tol) {
  if (dist.p.size() != m.n_states()) {
    throw ValidationError("stationary distribution size does not match matrix");
  }
  std::vector<DetailedBalanceEntry> out;
  for (StateId i = 0; i < m.n_states(); ++i) {
    for (StateId j = i + 1; j < m.n_states(); ++j) {
      double r = std::abs(dist.p[i] * m.probs[i][j] - dist.p[j] * m.probs[j][i]);
      out.push_back({i, j, r, r <= tol});
    }
  }
  return out;
}

}  // namespace presage
