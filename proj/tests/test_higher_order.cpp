#include <catch2/catch_amalgamated.hpp>

#include "presage/higher_order.hpp"
#include "presage/markov.hpp"
#include "presage/synth.hpp"
#include "test_helpers.hpp"

using namespace presage;

namespace {

CollapsedTrace seq(std::vector<StateId> states) {
  CollapsedTrace t{"h", {}, {}, {}};
  for (std::size_t i = 0; i < states.size(); ++i) {
    t.events.push_back({static_cast<double>(i), states[i]});
    t.run_lengths.push_back(1);
    t.run_durations.push_back(0);
  }
  return t;
}

std::vector<CollapsedTrace> random_corpus(Xoshiro256pp& rng, std::size_t hosts,
                                          std::size_t events, std::uint64_t seed) {
  GeneratorSpec spec;
  spec.alphabet = ptest::letters(4);
  spec.embedded = ptest::random_stochastic(rng, 4, false);
  spec.q = single_interval_masses(spec.embedded, spec.intervals.n_intervals());
  spec.n_hosts = hosts;
  spec.events_per_host = events;
  spec.seed = seed;
  std::vector<CollapsedTrace> collapsed;
  for (auto& t : generate(spec)) collapsed.push_back(collapse(t));
  return collapsed;
}

}  // namespace

TEST_CASE("order-2 estimation on a deterministic cycle") {
  auto alphabet = ptest::letters(3);
  auto traces = std::vector<CollapsedTrace>{seq({0, 1, 2, 0, 1, 2})};
  ContextMatrix m = estimate_m(traces, alphabet, 2);

  const ContextRow* ab = m.find(std::vector<StateId>{0, 1});
  REQUIRE(ab != nullptr);
  CHECK(ab->probs[2] == 1.0);
  CHECK(ab->counts[2] == 2);

  const ContextRow* bc = m.find(std::vector<StateId>{1, 2});
  REQUIRE(bc != nullptr);
  CHECK(bc->probs[0] == 1.0);

  // only observed contexts are stored
  CHECK(m.rows.size() == 3);
}

TEST_CASE("order-1 estimation equals the single-state chain exactly") {
  Xoshiro256pp rng(41);
  for (int rep = 0; rep < 30; ++rep) {
    auto corpus = random_corpus(rng, 3, 200, 1000 + static_cast<std::uint64_t>(rep));
    auto alphabet = ptest::letters(4);
    ContextMatrix ho = estimate_m(corpus, alphabet, 1);
    TransitionMatrix mk = estimate(corpus, alphabet, false);

    for (StateId s = 0; s < 4; ++s) {
      const ContextRow* row = ho.find(std::vector<StateId>{s});
      if (row == nullptr) {
        CHECK(mk.row_total(s) == 0);
        continue;
      }
      CHECK(row->counts == mk.counts[s]);
      CHECK(row->probs == mk.probs[s]);  // same integer divisions, bit-equal
    }
  }
}

TEST_CASE("count conservation across orders") {
  Xoshiro256pp rng(43);
  auto corpus = random_corpus(rng, 4, 150, 7);
  auto alphabet = ptest::letters(4);
  for (unsigned m = 1; m <= 4; ++m) {
    ContextMatrix cm = estimate_m(corpus, alphabet, m);
    std::uint64_t expected = 0;
    for (const auto& t : corpus) {
      if (t.events.size() > m) expected += t.events.size() - m;
    }
    CHECK(cm.total_transitions() == expected);
  }
}

TEST_CASE("marginalising order-2 counts over the oldest symbol") {
  // summing order-2 counts over the first context state recovers the
  // order-1 counts except for each trace's very first transition, whose
  // window has no preceding state; adding those back gives an exact
  // integer identity
  Xoshiro256pp rng(47);
  auto corpus = random_corpus(rng, 5, 120, 9);
  auto alphabet = ptest::letters(4);
  ContextMatrix m2 = estimate_m(corpus, alphabet, 2);
  TransitionMatrix m1 = estimate(corpus, alphabet, false);

  std::vector<std::vector<std::uint64_t>> marginal(4, std::vector<std::uint64_t>(4, 0));
  for (const auto& [ctx, row] : m2.rows) {
    for (StateId j = 0; j < 4; ++j) marginal[ctx[1]][j] += row.counts[j];
  }
  for (const auto& t : corpus) {
    if (t.events.size() >= 2) {
      ++marginal[t.events[0].state][t.events[1].state];
    }
  }
  CHECK(marginal == m1.counts);
}

TEST_CASE("predict_next argmax, ties, and misses") {
  auto alphabet = ptest::letters(3);
  auto traces = std::vector<CollapsedTrace>{seq({0, 1, 2, 0, 1, 2})};
  ContextMatrix m = estimate_m(traces, alphabet, 2);

  auto p = predict_next(m, std::vector<StateId>{0, 1});
  REQUIRE(p.has_value());
  CHECK(p->state == 2);
  CHECK(p->prob == 1.0);

  // unseen context is a sparse-table miss, not an error
  CHECK_FALSE(predict_next(m, std::vector<StateId>{2, 1}).has_value());

  CHECK_THROWS_AS(predict_next(m, std::vector<StateId>{0}), ValidationError);
  CHECK_THROWS_AS(predict_next(m, std::vector<StateId>{0, 99}), ValidationError);
}

TEST_CASE("argmax ties break to the lowest state index") {
  auto alphabet = ptest::letters(3);
  // from context (A): one transition to B, one to C
  auto traces = std::vector<CollapsedTrace>{seq({0, 1, 0, 2})};
  ContextMatrix m = estimate_m(traces, alphabet, 1);
  auto p = predict_next(m, std::vector<StateId>{0});
  REQUIRE(p.has_value());
  CHECK(p->state == 1);
  CHECK(p->prob == 0.5);
}

TEST_CASE("estimate_m rejects invalid orders and short corpora") {
  auto alphabet = ptest::letters(3);
  auto traces = std::vector<CollapsedTrace>{seq({0, 1})};
  CHECK_THROWS_AS(estimate_m(traces, alphabet, 0), ValidationError);
  CHECK_THROWS_AS(estimate_m(traces, alphabet, 2), InsufficientDataError);
}

TEST_CASE("back-off falls through to shorter contexts") {
  auto alphabet = ptest::letters(3);
  auto traces = std::vector<CollapsedTrace>{seq({0, 1, 2, 1, 0, 1, 2})};
  BackoffChain chain = estimate_backoff(traces, alphabet, 2);

  // (C, A) was never observed, but A alone was: back-off still predicts
  std::vector<StateId> unseen{2, 0};
  CHECK_FALSE(predict_next(estimate_m(traces, alphabet, 2), unseen).has_value());
  auto p = predict_next(chain, unseen);
  REQUIRE(p.has_value());
  CHECK(p->state == 1);
}
