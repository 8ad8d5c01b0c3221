#include <catch2/catch_amalgamated.hpp>

#include "presage/markov.hpp"
#include "presage/synth.hpp"
#include "test_helpers.hpp"

using namespace presage;
using Catch::Matchers::WithinAbs;

namespace {

// published four-state matrix with self-transitions (rows: Exploit,
// BinaryDownload, CncCommunication, Attack)
const std::vector<std::vector<double>> kMatrixT = {
    {0.682, 0.030, 0.033, 0.254},
    {0.035, 0.426, 0.527, 0.012},
    {0.0001, 0.001, 0.926, 0.073},
    {0.001, 0.00001, 0.099, 0.899},
};

// the same chain with self-transitions collapsed away
const std::vector<std::vector<double>> kMatrixTPrime = {
    {0, 0.0938, 0.1042, 0.8021},
    {0.0619, 0, 0.9175, 0.0206},
    {0.0018, 0.0178, 0, 0.9804},
    {0.0154, 0.0002, 0.9844, 0},
};

CollapsedTrace states_at_unit_times(std::vector<StateId> states) {
  CollapsedTrace t{"h", {}, {}, {}};
  for (std::size_t i = 0; i < states.size(); ++i) {
    t.events.push_back({static_cast<double>(i), states[i]});
    t.run_lengths.push_back(1);
    t.run_durations.push_back(0);
  }
  return t;
}

}  // namespace

TEST_CASE("estimate on an alternating two-state sequence") {
  auto alphabet = ptest::botnet();
  StateId cnc = 2, attack = 3;
  auto traces = std::vector<CollapsedTrace>{states_at_unit_times({cnc, attack, cnc, attack, cnc})};
  TransitionMatrix m = estimate(traces, alphabet, false);

  CHECK(m.counts[cnc][attack] == 2);
  CHECK(m.counts[attack][cnc] == 2);
  CHECK(m.probs[cnc][attack] == 1.0);
  CHECK(m.probs[attack][cnc] == 1.0);
  CHECK_FALSE(m.include_self);
  CHECK(m.zero_rows() == std::vector<StateId>{0, 1});
}

TEST_CASE("estimate pools counts across hosts but never across host boundaries") {
  auto alphabet = ptest::letters(3);
  auto t1 = states_at_unit_times({0, 1});
  auto t2 = states_at_unit_times({2, 0});
  TransitionMatrix m = estimate(std::vector<CollapsedTrace>{t1, t2}, alphabet, false);
  CHECK(m.counts[0][1] == 1);
  CHECK(m.counts[2][0] == 1);
  // no (1 -> 2) transition from the seam between hosts
  CHECK(m.counts[1][2] == 0);
}

TEST_CASE("estimate count additivity over corpus concatenation") {
  Xoshiro256pp rng(5);
  auto alphabet = ptest::letters(4);
  auto make_corpus = [&](int hosts, std::uint64_t seed) {
    GeneratorSpec spec;
    spec.alphabet = alphabet;
    spec.embedded = ptest::random_stochastic(rng, 4, false);
    spec.q = single_interval_masses(spec.embedded, spec.intervals.n_intervals());
    spec.n_hosts = hosts;
    spec.events_per_host = 200;
    spec.seed = seed;
    std::vector<CollapsedTrace> collapsed;
    for (auto& t : generate(spec)) collapsed.push_back(collapse(t));
    return collapsed;
  };
  auto s1 = make_corpus(3, 1);
  auto s2 = make_corpus(2, 2);
  std::vector<CollapsedTrace> pooled = s1;
  pooled.insert(pooled.end(), s2.begin(), s2.end());

  auto m1 = estimate(s1, alphabet, false);
  auto m2 = estimate(s2, alphabet, false);
  auto mp = estimate(pooled, alphabet, false);
  for (StateId i = 0; i < 4; ++i) {
    for (StateId j = 0; j < 4; ++j) {
      CHECK(mp.counts[i][j] == m1.counts[i][j] + m2.counts[i][j]);
    }
  }
}

TEST_CASE("estimate needs at least one transition") {
  auto alphabet = ptest::letters(2);
  auto traces = std::vector<CollapsedTrace>{states_at_unit_times({0})};
  CHECK_THROWS_AS(estimate(traces, alphabet, false), InsufficientDataError);
}

TEST_CASE("include_self=false skips repeats and zeroes the diagonal") {
  auto alphabet = ptest::letters(2);
  auto raw = ptest::trace("h", {{0, 0}, {1, 0}, {2, 1}, {3, 1}, {4, 0}});
  TransitionMatrix no_self = estimate(std::vector<HostTrace>{raw}, alphabet, false);
  CHECK(no_self.counts[0][0] == 0);
  CHECK(no_self.counts[1][1] == 0);
  CHECK(no_self.counts[0][1] == 1);
  CHECK(no_self.counts[1][0] == 1);

  // and matches estimation on the collapsed trace exactly
  TransitionMatrix collapsed = estimate(std::vector<CollapsedTrace>{collapse(raw)}, alphabet);
  CHECK(no_self.counts == collapsed.counts);

  TransitionMatrix with_self = estimate(std::vector<HostTrace>{raw}, alphabet, true);
  CHECK(with_self.counts[0][0] == 1);
  CHECK(with_self.counts[1][1] == 1);
}

TEST_CASE("additive smoothing fills zero rows uniformly") {
  auto alphabet = ptest::letters(3);
  auto traces = std::vector<CollapsedTrace>{states_at_unit_times({0, 1})};
  TransitionMatrix m = estimate(traces, alphabet, false, /*alpha=*/1.0);
  // state C was never a source; its row becomes uniform over the other two
  CHECK_THAT(m.probs[2][0], WithinAbs(0.5, 1e-12));
  CHECK_THAT(m.probs[2][1], WithinAbs(0.5, 1e-12));
  CHECK(m.probs[2][2] == 0.0);
}

TEST_CASE("row stochasticity after normalisation") {
  Xoshiro256pp rng(23);
  auto alphabet = ptest::letters(4);
  GeneratorSpec spec;
  spec.alphabet = alphabet;
  spec.embedded = ptest::random_stochastic(rng, 4, false);
  spec.q = single_interval_masses(spec.embedded, spec.intervals.n_intervals());
  spec.n_hosts = 4;
  spec.events_per_host = 500;
  std::vector<CollapsedTrace> collapsed;
  for (auto& t : generate(spec)) collapsed.push_back(collapse(t));
  TransitionMatrix m = estimate(collapsed, alphabet);
  for (StateId i = 0; i < 4; ++i) {
    if (!m.row_has_data(i)) continue;
    double sum = 0;
    for (double v : m.probs[i]) sum += v;
    CHECK_THAT(sum, WithinAbs(1.0, 1e-9));
    for (StateId j = 0; j < 4; ++j) {
      CHECK(m.probs[i][j] ==
            static_cast<double>(m.counts[i][j]) / static_cast<double>(m.row_total(i)));
    }
  }
}

TEST_CASE("stationary distribution of a symmetric two-state swap") {
  auto alphabet = ptest::letters(2);
  auto m = TransitionMatrix::from_probs(alphabet, {{0, 1}, {1, 0}}, false);
  StationaryDistribution p = stationary(m);
  CHECK_THAT(p.p[0], WithinAbs(0.5, 1e-12));
  CHECK_THAT(p.p[1], WithinAbs(0.5, 1e-12));
  CHECK(is_irreducible(m));
  CHECK_FALSE(is_aperiodic(m));  // period 2
}

TEST_CASE("stationary distribution of the published matrix matches its table") {
  auto m = TransitionMatrix::from_probs(ptest::botnet(), kMatrixT, true);
  StationaryDistribution p = stationary(m);
  CHECK_THAT(p.p[0], WithinAbs(0.0025, 0.01));
  CHECK_THAT(p.p[1], WithinAbs(0.0015, 0.01));
  CHECK_THAT(p.p[2], WithinAbs(0.5739, 0.01));
  CHECK_THAT(p.p[3], WithinAbs(0.4222, 0.01));
}

TEST_CASE("stationary matches power iteration on random chains") {
  Xoshiro256pp rng(31);
  for (int rep = 0; rep < 25; ++rep) {
    auto probs = ptest::random_stochastic(rng, 4, true);
    auto m = TransitionMatrix::from_probs(ptest::letters(4), probs, true, 1e-9);
    StationaryDistribution p = stationary(m);
    auto oracle = ptest::power_iteration(probs, 10000);
    for (std::size_t i = 0; i < 4; ++i) {
      CHECK_THAT(p.p[i], WithinAbs(oracle[i], 1e-8));
    }
    // flow balance and normalisation hold to solver tolerance
    double sum = 0;
    for (std::size_t j = 0; j < 4; ++j) {
      double inflow = 0;
      for (std::size_t i = 0; i < 4; ++i) inflow += p.p[i] * probs[i][j];
      CHECK_THAT(inflow, WithinAbs(p.p[j], 1e-9));
      sum += p.p[j];
    }
    CHECK_THAT(sum, WithinAbs(1.0, 1e-9));
  }
}

TEST_CASE("stationary on a reducible chain names the unreachable pair") {
  auto alphabet = ptest::letters(2);
  // A is absorbing: B is unreachable from A
  auto m = TransitionMatrix::from_probs(alphabet, {{1, 0}, {1, 0}}, true);
  CHECK_FALSE(is_irreducible(m));
  try {
    stationary(m);
    FAIL("expected StructuralError");
  } catch (const StructuralError& e) {
    std::string msg = e.what();
    CHECK(msg.find("'A'") != std::string::npos);
    CHECK(msg.find("'B'") != std::string::npos);
  }
}

TEST_CASE("structure checks on the full-mesh and collapsed chains") {
  auto full = TransitionMatrix::from_probs(ptest::botnet(), kMatrixT, true);
  CHECK(is_irreducible(full));
  CHECK(is_aperiodic(full));  // self-loops force period 1

  auto collapsed = TransitionMatrix::from_probs(ptest::botnet(), kMatrixTPrime, false);
  CHECK(is_irreducible(collapsed));
  // zero diagonal but 2- and 3-cycles coexist, so the GCD is 1
  CHECK(is_aperiodic(collapsed));
}

TEST_CASE("reversibility report on a symmetric chain is all zeros") {
  auto alphabet = ptest::letters(2);
  auto m = TransitionMatrix::from_probs(alphabet, {{0, 1}, {1, 0}}, false);
  auto p = stationary(m);
  auto report = reversibility_report(m, p, 1e-9);
  REQUIRE(report.size() == 1);
  CHECK_THAT(report[0].residual, WithinAbs(0.0, 1e-12));
  CHECK(report[0].pass);
}

TEST_CASE("reversibility of the published chain holds for the dominant pair") {
  auto m = TransitionMatrix::from_probs(ptest::botnet(), kMatrixT, true);
  StationaryDistribution table;
  table.p = {0.0025, 0.0015, 0.5739, 0.4222};
  auto report = reversibility_report(m, table, 1e-3);
  // the C&C <-> Attack pair carries nearly all probability flow:
  // |0.5739*0.073 - 0.4222*0.099| is about 1e-4
  bool found = false;
  for (const auto& entry : report) {
    if (entry.i == 2 && entry.j == 3) {
      found = true;
      CHECK_THAT(entry.residual, WithinAbs(9.69e-5, 1e-6));
      CHECK(entry.pass);
    }
  }
  CHECK(found);
}

TEST_CASE("an asymmetric cycle is flagged as non-reversible") {
  auto alphabet = ptest::letters(3);
  // probability circulates A -> B -> C -> A much more than backwards
  auto m = TransitionMatrix::from_probs(
      alphabet, {{0, 0.9, 0.1}, {0.1, 0, 0.9}, {0.9, 0.1, 0}}, false);
  auto p = stationary(m);
  // stationary is uniform by rotational symmetry; hand value: residual of
  // each pair = (1/3)|0.9 - 0.1| = 4/15
  auto report = reversibility_report(m, p, 1e-3);
  REQUIRE(report.size() == 3);
  for (const auto& entry : report) {
    CHECK_THAT(entry.residual, WithinAbs(4.0 / 15.0, 1e-9));
    CHECK_FALSE(entry.pass);
  }
}

TEST_CASE("reversibility report rejects mismatched dimensions") {
  auto m = TransitionMatrix::from_probs(ptest::letters(2), {{0, 1}, {1, 0}}, false);
  StationaryDistribution bad;
  bad.p = {1.0};
  CHECK_THROWS_AS(reversibility_report(m, bad, 1e-3), ValidationError);
}

TEST_CASE("estimation recovers the generating matrix") {
  Xoshiro256pp rng(77);
  auto alphabet = ptest::letters(4);
  GeneratorSpec spec;
  spec.alphabet = alphabet;
  spec.embedded = ptest::random_stochastic(rng, 4, false);
  spec.q = ptest::random_interval_masses(rng, spec.embedded, spec.intervals.n_intervals());
  spec.n_hosts = 5;
  spec.events_per_host = 10000;
  spec.seed = 99;
  std::vector<CollapsedTrace> collapsed;
  for (auto& t : generate(spec)) collapsed.push_back(collapse(t));
  TransitionMatrix m = estimate(collapsed, alphabet);
  for (StateId i = 0; i < 4; ++i) {
    for (StateId j = 0; j < 4; ++j) {
      CHECK_THAT(m.probs[i][j], WithinAbs(spec.embedded[i][j], 0.02));
    }
  }
}
