#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "presage/errors.hpp"

namespace presage {

/// Index of a lifecycle state within a StateAlphabet.
using StateId = std::uint32_t;

/// The configurable set of lifecycle states a model is built over.
///
/// One state is designated as the attack state; an optional subset of
/// states is marked as attack precursors ("warning states"). The default
/// alphabet is the reduced four-state infection model; richer alphabets
/// (e.g. splitting exploit delivery or C&C discovery into their own
/// states) are expressed by constructing a different instance.
class StateAlphabet {
 public:
  StateAlphabet(std::vector<std::string> states, const std::string& attack_state,
                const std::vector<std::string>& warning_states = {})
      : states_(std::move(states)) {
    if (states_.size() < 2) {
      throw ValidationError("alphabet needs at least 2 states");
    }
    for (StateId id = 0; id < states_.size(); ++id) {
      const auto& name = states_[id];
      if (name.empty()) {
        throw ValidationError("alphabet state names must be non-empty");
      }
      if (!index_.emplace(name, id).second) {
        throw ValidationError("duplicate state name '" + name + "'");
      }
    }
    attack_ = require(attack_state);
    warning_flags_.assign(states_.size(), false);
    for (const auto& w : warning_states) {
      StateId id = require(w);
      if (!warning_flags_[id]) {
        warning_flags_[id] = true;
        warning_states_.push_back(id);
      }
    }
    std::sort(warning_states_.begin(), warning_states_.end());
  }

  /// Reduced four-state infection alphabet. The C&C state is the default
  /// attack precursor.
  static StateAlphabet botnet_default() {
    return StateAlphabet({"Exploit", "BinaryDownload", "CncCommunication", "Attack"},
                         "Attack", {"CncCommunication"});
  }

  std::size_t size() const noexcept { return states_.size(); }

  const std::string& name(StateId id) const { return states_.at(id); }

  const std::vector<std::string>& states() const noexcept { return states_; }

  std::optional<StateId> find(std::string_view name) const {
    auto it = index_.find(std::string(name));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  /// Like find(), but a miss is an error naming the offending state.
  StateId require(std::string_view name) const {
    auto id = find(name);
    if (!id) {
      throw ValidationError("unknown state name '" + std::string(name) + "'");
    }
    return *id;
  }

  bool valid(StateId id) const noexcept { return id < states_.size(); }

  StateId attack_state() const noexcept { return attack_; }

  bool is_warning(StateId id) const { return id < warning_flags_.size() && warning_flags_[id]; }

  const std::vector<StateId>& warning_states() const noexcept { return warning_states_; }

  friend bool operator==(const StateAlphabet& a, const StateAlphabet& b) {
    return a.states_ == b.states_ && a.attack_ == b.attack_ &&
           a.warning_states_ == b.warning_states_;
  }

 private:
  std::vector<std::string> states_;
  std::unordered_map<std::string, StateId> index_;
  StateId attack_ = 0;
  std::vector<bool> warning_flags_;
  std::vector<StateId> warning_states_;
};

}  // namespace presage
