#pragma once

#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "presage/alphabet.hpp"
#include "presage/errors.hpp"
#include "presage/events.hpp"
#include "presage/higher_order.hpp"
#include "presage/parallel.hpp"
#include "presage/semi_markov.hpp"

namespace presage {

/// Next-state model abstraction so the one cursor loop drives order-1,
/// order-m, and back-off chains alike.
class NextStateModel {
 public:
  virtual ~NextStateModel() = default;
  virtual unsigned order() const = 0;
  /// context holds the `order()` most recent states, oldest first.
  virtual std::optional<StatePrediction> predict(std::span<const StateId> context) const = 0;
};

/// Order-1 chain backed by a TransitionMatrix row argmax.
class MarkovChainModel final : public NextStateModel {
 public:
  explicit MarkovChainModel(TransitionMatrix matrix) : matrix_(std::move(matrix)) {}

  unsigned order() const override { return 1; }

  std::optional<StatePrediction> predict(std::span<const StateId> context) const override {
    if (context.size() != 1) {
      throw ValidationError("context length does not match chain order");
    }
    StateId current = context[0];
    if (!matrix_.alphabet.valid(current)) {
      throw ValidationError("context contains state id out of alphabet range");
    }
    const auto& row = matrix_.probs[current];
    StateId best = 0;
    for (StateId j = 1; j < row.size(); ++j) {
      if (row[j] > row[best]) best = j;
    }
    if (row[best] <= 0) return std::nullopt;  // state observed only as a final event
    return StatePrediction{best, row[best]};
  }

  const TransitionMatrix& matrix() const { return matrix_; }

 private:
  TransitionMatrix matrix_;
};

/// Order-m chain backed by a sparse ContextMatrix.
class ContextChainModel final : public NextStateModel {
 public:
  explicit ContextChainModel(ContextMatrix matrix) : matrix_(std::move(matrix)) {}

  unsigned order() const override { return matrix_.order; }

  std::optional<StatePrediction> predict(std::span<const StateId> context) const override {
    return predict_next(matrix_, context);
  }

  const ContextMatrix& matrix() const { return matrix_; }

 private:
  ContextMatrix matrix_;
};

/// Back-off family: tries the full context first, then progressively
/// shorter suffixes.
class BackoffChainModel final : public NextStateModel {
 public:
  explicit BackoffChainModel(BackoffChain chain) : chain_(std::move(chain)) {}

  unsigned order() const override { return chain_.order(); }

  std::optional<StatePrediction> predict(std::span<const StateId> context) const override {
    if (context.size() != chain_.order()) {
      throw ValidationError("context length does not match chain order");
    }
    return predict_next(chain_, context);
  }

 private:
  BackoffChain chain_;
};

enum class Warning { none, attack_warning, precursor_warning };

inline const char* to_string(Warning w) {
  switch (w) {
    case Warning::attack_warning: return "attack_warning";
    case Warning::precursor_warning: return "precursor_warning";
    default: return "none";
  }
}

/// One prediction emitted at a state change.
struct PredictionRecord {
  std::string host;
  double t_pred = 0.0;
  StateId current_state = 0;
  std::optional<StatePrediction> predicted;
  std::optional<int> predicted_interval;
  Warning warning = Warning::none;
  unsigned model_order = 1;

  friend bool operator==(const PredictionRecord&, const PredictionRecord&) = default;
};

/// Per-host streaming state: the last seen state (for repeat
/// suppression) and the rolling context buffer of the last m states.
struct HostCursor {
  std::string host;
  std::optional<StateId> last_state;
  std::vector<StateId> context;
  double last_change_t = 0.0;
  double last_t = -std::numeric_limits<double>::infinity();
};

struct PredictorOptions {
  /// Allowed backwards time slack between consecutive events, minutes.
  double time_tolerance = 0.0;
  /// Predict the holding interval conditioned on the predicted next
  /// state instead of marginalising over destinations.
  bool condition_interval_on_predicted = false;
};

/// The online engine. Feed raw events per host; repeats of the current
/// state are absorbed, and every state CHANGE emits one PredictionRecord
/// with the next-state argmax, the holding-time interval (when a
/// semi-Markov model is attached), and a warning classification.
class Predictor {
 public:
  using Options = PredictorOptions;

  Predictor(const NextStateModel& chain, const StateAlphabet& alphabet,
            const SemiMarkovModel* smc = nullptr, Options options = {})
      : chain_(&chain), alphabet_(&alphabet), smc_(smc), options_(options) {}

  const StateAlphabet& alphabet() const { return *alphabet_; }
  unsigned order() const { return chain_->order(); }

  /// Consumes one event. Returns the emitted record, or nullopt when the
  /// event repeated the current state and was absorbed.
  std::optional<PredictionRecord> feed(HostCursor& cursor, const TraceEvent& event) const {
    if (!alphabet_->valid(event.state)) {
      throw ValidationError("event state id out of alphabet range for host '" + cursor.host +
                            "'");
    }
    if (event.t < cursor.last_t - options_.time_tolerance) {
      throw TemporalOrderError("event at t=" + std::to_string(event.t) + " for host '" +
                               cursor.host + "' precedes the previous event");
    }
    cursor.last_t = std::max(cursor.last_t, event.t);
    if (cursor.last_state && *cursor.last_state == event.state) {
      return std::nullopt;  // same-state repeat, wait for a state change
    }

    cursor.last_state = event.state;
    cursor.last_change_t = event.t;
    cursor.context.push_back(event.state);
    const unsigned m = chain_->order();
    if (cursor.context.size() > m) {
      cursor.context.erase(cursor.context.begin(),
                           cursor.context.end() - static_cast<std::ptrdiff_t>(m));
    }

    PredictionRecord rec;
    rec.host = cursor.host;
    rec.t_pred = event.t;
    rec.current_state = event.state;
    rec.model_order = m;
    if (cursor.context.size() == m) {
      rec.predicted = chain_->predict(cursor.context);
    }
    if (smc_ != nullptr) {
      std::optional<StateId> condition;
      if (options_.condition_interval_on_predicted && rec.predicted) {
        condition = rec.predicted->state;
      }
      rec.predicted_interval = predict_holding_interval(*smc_, event.state, condition);
    }
    rec.warning = classify_warning(event.state, rec.predicted);
    return rec;
  }

  /// Replays a whole raw trace through a fresh cursor.
  std::vector<PredictionRecord> predict_trace(const HostTrace& trace) const {
    HostCursor cursor;
    cursor.host = trace.host;
    std::vector<PredictionRecord> records;
    for (const auto& event : trace.events) {
      if (auto rec = feed(cursor, event)) records.push_back(std::move(*rec));
    }
    return records;
  }

  /// Batch prediction over an already collapsed trace: one record per
  /// event. Equivalent to streaming the raw trace event by event.
  std::vector<PredictionRecord> predict_trace(const CollapsedTrace& trace) const {
    HostCursor cursor;
    cursor.host = trace.host;
    std::vector<PredictionRecord> records;
    records.reserve(trace.events.size());
    for (const auto& event : trace.events) {
      if (auto rec = feed(cursor, event)) records.push_back(std::move(*rec));
    }
    return records;
  }

 private:
  Warning classify_warning(StateId current, const std::optional<StatePrediction>& pred) const {
    if (!pred) return Warning::none;
    if (pred->state == alphabet_->attack_state()) return Warning::attack_warning;
    // a precursor predicted while the host is already attacking heralds
    // nothing new — the attack is underway, so no warning is raised
    if (alphabet_->is_warning(pred->state) && current != alphabet_->attack_state()) {
      return Warning::precursor_warning;
    }
    return Warning::none;
  }

  const NextStateModel* chain_;
  const StateAlphabet* alphabet_;
  const SemiMarkovModel* smc_;
  Options options_;
};

/// Replays every trace through its own cursor, in host order. Hosts are
/// independent, so the records are identical whatever the thread count.
inline std::vector<std::vector<PredictionRecord>> predict_corpus(
    const Predictor& predictor, const std::vector<HostTrace>& traces, unsigned threads = 1) {
  std::vector<std::vector<PredictionRecord>> out(traces.size());
  detail::parallel_for(traces.size(), threads,
                       [&](std::size_t i) { out[i] = predictor.predict_trace(traces[i]); });
  return out;
}

/// Warning lead times for one host: minutes from each correct attack
/// prediction (and, separately, each correct precursor prediction) until
/// the next actual attack event. Records must line up one-to-one with the
/// collapsed trace they were produced from.
struct LeadTimes {
  std::vector<double> attack;
  std::vector<double> precursor;
};

inline LeadTimes warning_lead_time(const std::vector<PredictionRecord>& records,
                                   const CollapsedTrace& trace,
                                   const StateAlphabet& alphabet) {
  if (!records.empty() && records.front().host != trace.host) {
    throw ValidationError("prediction records and trace belong to different hosts ('" +
                          records.front().host + "' vs '" + trace.host + "')");
  }
  if (records.size() != trace.events.size()) {
    throw ValidationError("record count does not match collapsed trace length");
  }
  LeadTimes out;
  for (std::size_t k = 0; k + 1 < records.size(); ++k) {
    const auto& rec = records[k];
    if (!rec.predicted) continue;
    StateId actual_next = trace.events[k + 1].state;
    bool correct = rec.predicted->state == actual_next;
    if (!correct) continue;
    if (rec.warning == Warning::attack_warning) {
      // correct attack prediction: the next event IS the attack
      out.attack.push_back(trace.events[k + 1].t - rec.t_pred);
    } else if (rec.warning == Warning::precursor_warning) {
      // pair the precursor prediction with the next actual attack, if any
      for (std::size_t j = k + 1; j < trace.events.size(); ++j) {
        if (trace.events[j].state == alphabet.attack_state()) {
          out.precursor.push_back(trace.events[j].t - rec.t_pred);
          break;
        }
      }
    }
  }
  return out;
}

}  // namespace presage
