#include <algorithm>
#include <catch2/catch_amalgamated.hpp>
#include <sstream>

#include "presage/ids_ingest.hpp"
#include "test_helpers.hpp"

using namespace presage;

namespace {

const char* kScanLine1 =
    "08/17/11-17:16:18.349371  [**] [1:2001581:13] ET SCAN Behavioral Unusual Port 135 "
    "traffic, Potential Scan or Infection [**] [Classification: Misc activity] [Priority: 3] "
    "{TCP} 147.32.84.130:2888 -> 147.32.82.18:135";
const char* kScanLine2 =
    "08/17/11-17:17:18.436233  [**] [1:2001581:13] ET SCAN Behavioral Unusual Port 135 "
    "traffic, Potential Scan or Infection [**] [Classification: Misc activity] [Priority: 3] "
    "{TCP} 147.32.84.130:3492 -> 147.32.88.65:135";

StateMappingConfig scan_to_attack_config(const StateAlphabet& alphabet) {
  Matcher m;
  m.sids = {2001581};
  m.state = alphabet.attack_state();
  return StateMappingConfig::build({m}, alphabet);
}

}  // namespace

TEST_CASE("parse_fast_alert extracts every field of a scan alert") {
  RawAlert a = parse_fast_alert(kScanLine1);
  CHECK(a.timestamp.year == 2011);
  CHECK(a.timestamp.month == 8);
  CHECK(a.timestamp.day == 17);
  CHECK(a.timestamp.hour == 17);
  CHECK(a.timestamp.minute == 16);
  CHECK(a.timestamp.second == 18);
  CHECK(a.timestamp.microsecond == 349371);
  CHECK(a.gid == 1);
  CHECK(a.sid == 2001581);
  CHECK(a.rev == 13);
  CHECK(a.message ==
        "ET SCAN Behavioral Unusual Port 135 traffic, Potential Scan or Infection");
  REQUIRE(a.classification.has_value());
  CHECK(*a.classification == "Misc activity");
  REQUIRE(a.priority.has_value());
  CHECK(*a.priority == 3);
  CHECK(a.protocol == "TCP");
  CHECK(a.src_ip == "147.32.84.130");
  CHECK(a.src_port == std::uint16_t{2888});
  CHECK(a.dst_ip == "147.32.82.18");
  CHECK(a.dst_port == std::uint16_t{135});
}

TEST_CASE("parse_fast_alert rejects malformed lines with offsets") {
  CHECK_THROWS_AS(parse_fast_alert(""), ParseError);

  try {
    parse_fast_alert("08/17/11-17:16:18.349371  [**] bogus");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.offset() > 0);
    CHECK_FALSE(e.reason().empty());
  }

  // out-of-range port
  CHECK_THROWS_AS(
      parse_fast_alert("08/17/11-17:16:18.349371  [**] [1:5:1] msg [**] [Priority: 1] {TCP} "
                       "1.2.3.4:99999 -> 5.6.7.8:1"),
      ParseError);
  // sid must be positive
  CHECK_THROWS_AS(
      parse_fast_alert("08/17/11-17:16:18.349371  [**] [1:0:1] msg [**] [Priority: 1] {TCP} "
                       "1.2.3.4:1 -> 5.6.7.8:1"),
      ParseError);
}

TEST_CASE("fast-alert corpus round-trips byte-identically") {
  // the formatter is the round-trip oracle: format(parse(x)) == x
  Xoshiro256pp rng(3);
  std::vector<std::string> corpus;
  const char* messages[] = {"ET CNC Zeus Tracker Reported CnC Server group 1",
                            "ET MALWARE Likely Bot Binary Download",
                            "ET SCAN Behavioral Unusual Port 135 traffic",
                            "ET EXPLOIT possible SMB remote code execution"};
  const char* classes[] = {"Misc activity", "A Network Trojan was detected", nullptr};
  const char* protos[] = {"TCP", "UDP", "ICMP"};
  for (int i = 0; i < 50; ++i) {
    RawAlert a;
    a.timestamp.has_year = i % 5 != 0;
    a.timestamp.year = 2000 + static_cast<int>(rng.below(30));
    a.timestamp.month = 1 + static_cast<int>(rng.below(12));
    a.timestamp.day = 1 + static_cast<int>(rng.below(28));
    a.timestamp.hour = static_cast<int>(rng.below(24));
    a.timestamp.minute = static_cast<int>(rng.below(60));
    a.timestamp.second = static_cast<int>(rng.below(60));
    a.timestamp.microsecond = static_cast<int>(rng.below(1000000));
    a.gid = 1 + static_cast<int>(rng.below(3));
    a.sid = 1 + static_cast<int>(rng.below(3000000));
    a.rev = static_cast<int>(rng.below(20));
    a.message = messages[rng.below(4)];
    const char* cls = classes[rng.below(3)];
    if (cls != nullptr) a.classification = cls;
    if (rng.below(10) != 0) a.priority = 1 + static_cast<int>(rng.below(4));
    a.protocol = protos[rng.below(3)];
    a.src_ip = "10." + std::to_string(rng.below(256)) + ".0." + std::to_string(rng.below(256));
    a.dst_ip = "192.168." + std::to_string(rng.below(256)) + "." + std::to_string(rng.below(256));
    if (a.protocol != "ICMP") {
      a.src_port = static_cast<std::uint16_t>(rng.below(65536));
      a.dst_port = static_cast<std::uint16_t>(rng.below(65536));
    }
    corpus.push_back(format_fast_alert(a));
  }
  for (const auto& line : corpus) {
    CHECK(format_fast_alert(parse_fast_alert(line)) == line);
  }
}

TEST_CASE("two consecutive scan alerts become one attack trace") {
  auto alphabet = ptest::botnet();
  auto config = scan_to_attack_config(alphabet);

  std::vector<RawAlert> alerts{parse_fast_alert(kScanLine1), parse_fast_alert(kScanLine2)};
  IngestStats stats;
  auto traces = alerts_to_traces(alerts, config, &stats);

  REQUIRE(traces.size() == 1);
  CHECK(traces[0].host == "147.32.84.130");
  REQUIRE(traces[0].events.size() == 2);
  CHECK(traces[0].events[0].state == alphabet.attack_state());
  CHECK(traces[0].events[0].t == 0.0);
  // the two alerts are 60.086862 seconds apart
  CHECK_THAT(traces[0].events[1].t, Catch::Matchers::WithinAbs(1.0014477, 1e-9));
  CHECK(stats.matched == 2);
  CHECK(stats.discarded == 0);
}

TEST_CASE("unmatched alerts are discarded and counted") {
  auto alphabet = ptest::botnet();
  auto config = scan_to_attack_config(alphabet);
  RawAlert other = parse_fast_alert(kScanLine1);
  other.sid = 999;  // matches no rule
  IngestStats stats;
  auto traces = alerts_to_traces({other}, config, &stats);
  CHECK(traces.empty());
  CHECK(stats.matched == 0);
  CHECK(stats.discarded == 1);
}

TEST_CASE("shuffled alert input yields the same traces as sorted input") {
  auto alphabet = ptest::botnet();
  Matcher by_sid;
  by_sid.sids = {1, 2, 3, 4};
  by_sid.state = 0;
  Matcher attack;
  attack.sids = {5};
  attack.state = alphabet.attack_state();
  auto config = StateMappingConfig::build({by_sid, attack}, alphabet);

  Xoshiro256pp rng(17);
  std::vector<RawAlert> alerts;
  for (int i = 0; i < 10000; ++i) {
    RawAlert a;
    a.sid = 1 + static_cast<int>(rng.below(5));
    a.timestamp.year = 2011;
    a.timestamp.month = 8;
    a.timestamp.day = 1 + static_cast<int>(rng.below(28));
    a.timestamp.hour = static_cast<int>(rng.below(24));
    a.timestamp.minute = static_cast<int>(rng.below(60));
    a.timestamp.second = static_cast<int>(rng.below(60));
    a.timestamp.microsecond = static_cast<int>(rng.below(1000000));
    a.protocol = "TCP";
    a.src_ip = "10.0.0." + std::to_string(rng.below(5));
    a.dst_ip = "192.168.0.1";
    a.message = "m";
    alerts.push_back(a);
  }

  // sort-then-group oracle: ingest an already sorted copy
  std::vector<RawAlert> sorted = alerts;
  std::stable_sort(sorted.begin(), sorted.end(), [](const RawAlert& a, const RawAlert& b) {
    return a.timestamp.epoch_us() < b.timestamp.epoch_us();
  });
  auto expected = alerts_to_traces(sorted, config);

  // shuffle deterministically
  std::vector<RawAlert> shuffled = alerts;
  for (std::size_t i = shuffled.size(); i > 1; --i) {
    std::swap(shuffled[i - 1], shuffled[rng.below(i)]);
  }
  auto got = alerts_to_traces(shuffled, config);

  REQUIRE(got.size() == expected.size());
  std::uint64_t total_events = 0;
  for (std::size_t h = 0; h < got.size(); ++h) {
    CHECK(got[h].host == expected[h].host);
    CHECK(got[h].events == expected[h].events);
    total_events += got[h].events.size();
    CHECK(got[h].events.front().t == 0.0);
    CHECK(std::is_sorted(got[h].events.begin(), got[h].events.end(),
                         [](const TraceEvent& a, const TraceEvent& b) { return a.t < b.t; }));
  }
  // host partitioning: every matched alert lands in exactly one trace
  CHECK(total_events == alerts.size());
}

TEST_CASE("first matching rule wins") {
  auto alphabet = ptest::botnet();
  Matcher wide;
  wide.message_pattern = "SCAN";
  wide.state = 0;  // Exploit
  Matcher narrow;
  narrow.sids = {2001581};
  narrow.state = alphabet.attack_state();
  auto config = StateMappingConfig::build({wide, narrow}, alphabet);

  auto traces = alerts_to_traces({parse_fast_alert(kScanLine1)}, config);
  REQUIRE(traces.size() == 1);
  CHECK(traces[0].events[0].state == 0);
}

TEST_CASE("dst-keyed matcher attributes inbound exploits to the victim") {
  auto alphabet = ptest::botnet();
  Matcher inbound;
  inbound.sids = {2001581};
  inbound.state = 0;
  inbound.direction = Direction::dst;
  Matcher attack;
  attack.sids = {7};
  attack.state = alphabet.attack_state();
  auto config = StateMappingConfig::build({inbound, attack}, alphabet);

  auto traces = alerts_to_traces({parse_fast_alert(kScanLine1)}, config);
  REQUIRE(traces.size() == 1);
  CHECK(traces[0].host == "147.32.82.18");
}

TEST_CASE("mapping config validation") {
  auto alphabet = ptest::botnet();

  // a rule must carry exactly one criterion
  Matcher both;
  both.sids = {1};
  both.message_pattern = "x";
  both.state = 0;
  CHECK_THROWS_AS(StateMappingConfig::build({both}, alphabet), ValidationError);

  CHECK_THROWS_AS(StateMappingConfig::build({}, alphabet), ValidationError);

  // no attack matcher is allowed, but warned about
  Matcher exploit_only;
  exploit_only.sids = {1};
  exploit_only.state = 0;
  auto config = StateMappingConfig::build({exploit_only}, alphabet);
  REQUIRE(config.warnings.size() == 1);
  CHECK(config.warnings[0].find("Attack") != std::string::npos);
}

TEST_CASE("parse_fast_alert_stream counts errors without aborting") {
  std::istringstream in(std::string(kScanLine1) + "\nnot an alert\n\n" + kScanLine2 + "\n");
  IngestStats stats;
  std::vector<std::string> errors;
  auto alerts = parse_fast_alert_stream(in, stats, &errors);
  CHECK(alerts.size() == 2);
  CHECK(stats.lines == 3);
  CHECK(stats.parsed == 2);
  CHECK(stats.parse_errors == 1);
  REQUIRE(errors.size() == 1);
  CHECK(errors[0].find("line 2") != std::string::npos);
}
