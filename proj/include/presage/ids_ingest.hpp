#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <map>
#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <vector>

#include "presage/alphabet.hpp"
#include "presage/errors.hpp"
#include "presage/events.hpp"

namespace presage {

/// Wall-clock alert timestamp with microsecond precision, timezone naive.
/// Two-digit years resolve to 2000-2069 (70-99 fall back to 1970-1999).
struct AlertTimestamp {
  int year = 2000;
  bool has_year = true;  // whether the source line carried the /YY field
  int month = 1;
  int day = 1;
  int hour = 0;
  int minute = 0;
  int second = 0;
  int microsecond = 0;

  /// Microseconds since the Unix epoch (proleptic Gregorian, no leap
  /// seconds); only differences matter downstream.
  std::int64_t epoch_us() const {
    // days-from-civil (Hinnant)
    int y = year - (month <= 2);
    const int era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy =
        (153u * static_cast<unsigned>(month + (month > 2 ? -3 : 9)) + 2u) / 5u +
        static_cast<unsigned>(day) - 1u;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    std::int64_t days = static_cast<std::int64_t>(era) * 146097 +
                        static_cast<std::int64_t>(doe) - 719468;
    std::int64_t secs = days * 86400 + hour * 3600 + minute * 60 + second;
    return secs * 1000000 + microsecond;
  }

  friend bool operator==(const AlertTimestamp&, const AlertTimestamp&) = default;
};

/// One parsed fast-alert line.
struct RawAlert {
  AlertTimestamp timestamp;
  int gid = 1;
  int sid = 0;
  int rev = 0;
  std::string message;
  std::optional<std::string> classification;
  std::optional<int> priority;
  std::string protocol;
  std::string src_ip;
  std::optional<std::uint16_t> src_port;
  std::string dst_ip;
  std::optional<std::uint16_t> dst_port;

  friend bool operator==(const RawAlert&, const RawAlert&) = default;
};

namespace detail {

/// Sequential scanner over one alert line; every failure carries the
/// byte offset it happened at.
class LineScanner {
 public:
  explicit LineScanner(std::string_view line) : line_(line) {}

  std::size_t pos() const { return pos_; }
  bool done() const { return pos_ >= line_.size(); }

  void expect(char c, const char* what) {
    if (done() || line_[pos_] != c) {
      throw ParseError(pos_, std::string("expected '") + c + "' (" + what + ")");
    }
    ++pos_;
  }

  void expect_literal(std::string_view lit, const char* what) {
    if (line_.substr(pos_, lit.size()) != lit) {
      throw ParseError(pos_, std::string("expected \"") + std::string(lit) + "\" (" + what + ")");
    }
    pos_ += lit.size();
  }

  bool try_literal(std::string_view lit) {
    if (line_.substr(pos_, lit.size()) != lit) return false;
    pos_ += lit.size();
    return true;
  }

  void skip_spaces(const char* what) {
    std::size_t start = pos_;
    while (!done() && line_[pos_] == ' ') ++pos_;
    if (pos_ == start) {
      throw ParseError(pos_, std::string("expected whitespace before ") + what);
    }
  }

  /// Exactly n digits.
  int fixed_digits(int n, const char* what) {
    long value = 0;
    for (int i = 0; i < n; ++i) {
      if (done() || !std::isdigit(static_cast<unsigned char>(line_[pos_]))) {
        throw ParseError(pos_, std::string("expected digit in ") + what);
      }
      value = value * 10 + (line_[pos_] - '0');
      ++pos_;
    }
    return static_cast<int>(value);
  }

  /// One or more digits.
  long number(const char* what) {
    if (done() || !std::isdigit(static_cast<unsigned char>(line_[pos_]))) {
      throw ParseError(pos_, std::string("expected number for ") + what);
    }
    long value = 0;
    while (!done() && std::isdigit(static_cast<unsigned char>(line_[pos_]))) {
      value = value * 10 + (line_[pos_] - '0');
      ++pos_;
    }
    return value;
  }

  std::string until(char stop, const char* what) {
    std::size_t end = line_.find(stop, pos_);
    if (end == std::string_view::npos) {
      throw ParseError(pos_, std::string("unterminated ") + what);
    }
    std::string out(line_.substr(pos_, end - pos_));
    pos_ = end;
    return out;
  }

  std::string until_token(std::string_view stop, const char* what) {
    std::size_t end = line_.find(stop, pos_);
    if (end == std::string_view::npos) {
      throw ParseError(pos_, std::string("missing \"") + std::string(stop) + "\" after " + what);
    }
    std::string out(line_.substr(pos_, end - pos_));
    pos_ = end;
    return out;
  }

  std::string token_until_space_or_end() {
    std::size_t end = line_.find(' ', pos_);
    if (end == std::string_view::npos) end = line_.size();
    std::string out(line_.substr(pos_, end - pos_));
    pos_ = end;
    return out;
  }

 private:
  std::string_view line_;
  std::size_t pos_ = 0;
};

/// Splits "ip:port" / "ip" endpoints; the port is the all-digit suffix
/// after the last colon, so bare IPv4 addresses pass through untouched.
inline void parse_endpoint(const std::string& token, std::size_t token_offset, std::string& ip,
                           std::optional<std::uint16_t>& port) {
  if (token.empty()) {
    throw ParseError(token_offset, "empty endpoint address");
  }
  std::size_t colon = token.rfind(':');
  bool digits = colon != std::string::npos && colon + 1 < token.size();
  for (std::size_t i = colon + 1; digits && i < token.size(); ++i) {
    digits = std::isdigit(static_cast<unsigned char>(token[i])) != 0;
  }
  if (colon == std::string::npos || !digits) {
    ip = token;
    port = std::nullopt;
    return;
  }
  ip = token.substr(0, colon);
  long value = std::stol(token.substr(colon + 1));
  if (value < 0 || value > 65535) {
    throw ParseError(token_offset + colon + 1, "port out of range [0, 65535]");
  }
  port = static_cast<std::uint16_t>(value);
}

}  // namespace detail

/// Parses one Snort fast-alert line, e.g.
///
///   MM/DD/YY-HH:MM:SS.ffffff  [**] [gid:sid:rev] message [**]
///   [Classification: text] [Priority: n] {PROTO} src:port -> dst:port
///
/// The year, classification, priority, and ports are optional; token
/// separators accept any run of spaces. Malformed lines raise ParseError
/// with the byte offset and reason.
inline RawAlert parse_fast_alert(std::string_view line) {
  detail::LineScanner scan(line);
  RawAlert alert;

  alert.timestamp.month = scan.fixed_digits(2, "month");
  scan.expect('/', "date separator");
  alert.timestamp.day = scan.fixed_digits(2, "day");
  if (scan.try_literal("/")) {
    int yy = scan.fixed_digits(2, "year");
    alert.timestamp.year = yy < 70 ? 2000 + yy : 1900 + yy;
    alert.timestamp.has_year = true;
  } else {
    alert.timestamp.year = 2000;
    alert.timestamp.has_year = false;
  }
  scan.expect('-', "date-time separator");
  alert.timestamp.hour = scan.fixed_digits(2, "hour");
  scan.expect(':', "time separator");
  alert.timestamp.minute = scan.fixed_digits(2, "minute");
  scan.expect(':', "time separator");
  alert.timestamp.second = scan.fixed_digits(2, "second");
  scan.expect('.', "microseconds separator");
  alert.timestamp.microsecond = scan.fixed_digits(6, "microseconds");
  if (alert.timestamp.month < 1 || alert.timestamp.month > 12 || alert.timestamp.day < 1 ||
      alert.timestamp.day > 31 || alert.timestamp.hour > 23 || alert.timestamp.minute > 59 ||
      alert.timestamp.second > 60) {
    throw ParseError(0, "timestamp field out of range");
  }

  scan.skip_spaces("alert marker");
  scan.expect_literal("[**]", "alert marker");
  scan.skip_spaces("signature id");
  scan.expect('[', "signature id");
  alert.gid = static_cast<int>(scan.number("generator id"));
  scan.expect(':', "signature id separator");
  alert.sid = static_cast<int>(scan.number("signature id"));
  if (alert.sid <= 0) {
    throw ParseError(scan.pos(), "signature id must be positive");
  }
  scan.expect(':', "signature revision separator");
  alert.rev = static_cast<int>(scan.number("signature revision"));
  scan.expect(']', "signature id");

  scan.skip_spaces("message");
  alert.message = scan.until_token(" [**]", "message");
  scan.skip_spaces("message terminator");
  scan.expect_literal("[**]", "message terminator");

  scan.skip_spaces("classification or priority");
  if (scan.try_literal("[Classification: ")) {
    alert.classification = scan.until(']', "classification");
    scan.expect(']', "classification");
    scan.skip_spaces("priority");
  }
  if (scan.try_literal("[Priority: ")) {
    alert.priority = static_cast<int>(scan.number("priority"));
    scan.expect(']', "priority");
    scan.skip_spaces("protocol");
  }

  scan.expect('{', "protocol");
  alert.protocol = scan.until('}', "protocol");
  scan.expect('}', "protocol");
  scan.skip_spaces("source endpoint");

  std::size_t src_off = scan.pos();
  detail::parse_endpoint(scan.token_until_space_or_end(), src_off, alert.src_ip, alert.src_port);
  scan.skip_spaces("direction arrow");
  scan.expect_literal("->", "direction arrow");
  scan.skip_spaces("destination endpoint");
  std::size_t dst_off = scan.pos();
  detail::parse_endpoint(scan.token_until_space_or_end(), dst_off, alert.dst_ip, alert.dst_port);
  if (!scan.done()) {
    throw ParseError(scan.pos(), "trailing content after destination endpoint");
  }
  return alert;
}

/// Formats an alert back into the fast-alert layout parse_fast_alert
/// consumes (two spaces after the timestamp, one elsewhere). Acts as the
/// round-trip oracle for the parser.
inline std::string format_fast_alert(const RawAlert& alert) {
  char head[64];
  const auto& ts = alert.timestamp;
  if (ts.has_year) {
    std::snprintf(head, sizeof head, "%02d/%02d/%02d-%02d:%02d:%02d.%06d", ts.month, ts.day,
                  ts.year % 100, ts.hour, ts.minute, ts.second, ts.microsecond);
  } else {
    std::snprintf(head, sizeof head, "%02d/%02d-%02d:%02d:%02d.%06d", ts.month, ts.day, ts.hour,
                  ts.minute, ts.second, ts.microsecond);
  }
  std::string out = head;
  out += "  [**] [";
  out += std::to_string(alert.gid) + ":" + std::to_string(alert.sid) + ":" +
         std::to_string(alert.rev) + "] ";
  out += alert.message + " [**] ";
  if (alert.classification) {
    out += "[Classification: " + *alert.classification + "] ";
  }
  if (alert.priority) {
    out += "[Priority: " + std::to_string(*alert.priority) + "] ";
  }
  out += "{" + alert.protocol + "} ";
  out += alert.src_ip;
  if (alert.src_port) out += ":" + std::to_string(*alert.src_port);
  out += " -> ";
  out += alert.dst_ip;
  if (alert.dst_port) out += ":" + std::to_string(*alert.dst_port);
  return out;
}

/// Which endpoint attributes the alert to a host. Outgoing behaviour keys
/// on the source; inbound-exploit rules may key on the destination.
enum class Direction { src, dst };

/// One mapping rule: exactly one match criterion plus the state it maps
/// to. Rules are applied in order, first match wins.
struct Matcher {
  std::vector<int> sids;
  std::optional<std::string> classification_pattern;
  std::optional<std::string> message_pattern;
  StateId state = 0;
  Direction direction = Direction::src;

  // compiled lazily at config build; empty when pattern not set
  std::optional<std::regex> classification_re;
  std::optional<std::regex> message_re;

  bool matches(const RawAlert& alert) const {
    if (!sids.empty()) {
      return std::find(sids.begin(), sids.end(), alert.sid) != sids.end();
    }
    if (classification_re) {
      return alert.classification &&
             std::regex_search(*alert.classification, *classification_re);
    }
    if (message_re) {
      return std::regex_search(alert.message, *message_re);
    }
    return false;
  }
};

/// Ordered alert-to-state mapping. Unmatched alerts are discarded (and
/// counted by the caller).
struct StateMappingConfig {
  std::vector<Matcher> rules;
  std::vector<std::string> warnings;

  static StateMappingConfig build(std::vector<Matcher> rules, const StateAlphabet& alphabet) {
    StateMappingConfig config;
    config.rules = std::move(rules);
    if (config.rules.empty()) {
      throw ValidationError("mapping config needs at least one rule");
    }
    bool targets_attack = false;
    for (auto& rule : config.rules) {
      int criteria = (!rule.sids.empty() ? 1 : 0) + (rule.classification_pattern ? 1 : 0) +
                     (rule.message_pattern ? 1 : 0);
      if (criteria != 1) {
        throw ValidationError("each mapping rule needs exactly one match criterion");
      }
      if (!alphabet.valid(rule.state)) {
        throw ValidationError("mapping rule targets state id out of alphabet range");
      }
      if (rule.classification_pattern) {
        rule.classification_re = std::regex(*rule.classification_pattern);
      }
      if (rule.message_pattern) {
        rule.message_re = std::regex(*rule.message_pattern);
      }
      if (rule.state == alphabet.attack_state()) targets_attack = true;
    }
    if (!targets_attack) {
      config.warnings.push_back("no mapping rule targets the attack state '" +
                                alphabet.name(alphabet.attack_state()) + "'");
    }
    return config;
  }
};

/// Ingestion counters, reported alongside the traces.
struct IngestStats {
  std::uint64_t lines = 0;
  std::uint64_t parsed = 0;
  std::uint64_t parse_errors = 0;
  std::uint64_t matched = 0;
  std::uint64_t discarded = 0;
};

/// Maps alerts to states and groups them into per-host traces keyed by
/// the matcher's attribution endpoint. Alerts may arrive interleaved and
/// mildly out of order: each host's events are stable-sorted by
/// timestamp before t is rebased to minutes from the host's first
/// matched alert. Hosts are emitted in lexicographic order.
inline std::vector<HostTrace> alerts_to_traces(const std::vector<RawAlert>& alerts,
                                               const StateMappingConfig& config,
                                               IngestStats* stats = nullptr) {
  struct Pending {
    std::int64_t us;
    StateId state;
  };
  std::map<std::string, std::vector<Pending>> by_host;
  IngestStats local;
  for (const auto& alert : alerts) {
    const Matcher* hit = nullptr;
    for (const auto& rule : config.rules) {
      if (rule.matches(alert)) {
        hit = &rule;
        break;
      }
    }
    if (hit == nullptr) {
      ++local.discarded;
      continue;
    }
    ++local.matched;
    const std::string& host = hit->direction == Direction::src ? alert.src_ip : alert.dst_ip;
    by_host[host].push_back({alert.timestamp.epoch_us(), hit->state});
  }

  std::vector<HostTrace> traces;
  traces.reserve(by_host.size());
  for (auto& [host, pending] : by_host) {
    std::stable_sort(pending.begin(), pending.end(),
                     [](const Pending& a, const Pending& b) { return a.us < b.us; });
    HostTrace trace{host, {}};
    trace.events.reserve(pending.size());
    std::int64_t first_us = pending.front().us;
    for (const auto& p : pending) {
      trace.events.push_back(
          {static_cast<double>(p.us - first_us) / 60e6, p.state});
    }
    traces.push_back(std::move(trace));
  }
  if (stats != nullptr) {
    stats->matched += local.matched;
    stats->discarded += local.discarded;
  }
  return traces;
}

/// Reads a fast-alert stream line by line. Parse failures are counted,
/// not fatal; blank lines are skipped.
inline std::vector<RawAlert> parse_fast_alert_stream(std::istream& in, IngestStats& stats,
                                                     std::vector<std::string>* error_log = nullptr) {
  std::vector<RawAlert> alerts;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    ++stats.lines;
    try {
      alerts.push_back(parse_fast_alert(line));
      ++stats.parsed;
    } catch (const ParseError& e) {
      ++stats.parse_errors;
      if (error_log != nullptr) {
        error_log->push_back("line " + std::to_string(stats.lines) + ": " + e.what());
      }
    }
  }
  return alerts;
}

}  // namespace presage
