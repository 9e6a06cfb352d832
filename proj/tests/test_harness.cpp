/*
    Licensed under the Apache License, Version 2.0 (the "License");
    you may not use this file except in compliance with the License.
    You may obtain a copy of the License at

        https://www.apache.org/licenses/LICENSE-2.0

    Unless required by applicable law or agreed to in writing, software
    distributed under the License is distributed on an "AS IS" BASIS,
    WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
    See the License for the specific language governing permissions and
    limitations under the License.
*/

#include <cstdio>
#include <string>

#include <doctest.h>

#include <elstream/harness.hpp>

using namespace elstream;

namespace {

const std::string kScenarioDir = ELSTREAM_SCENARIO_DIR;

Scenario load(const std::string& name) {
    register_builtin_logics();
    return load_scenario(kScenarioDir + "/" + name);
}

}  // namespace

TEST_CASE("scenario parsing surfaces config errors with field context") {
    register_builtin_logics();
    using nlohmann::json;
    json base = {
        {"sink_node", 90},
        {"sources", json::array({{{"id", 1}, {"node", 10}}})},
        {"operators",
         json::array({{{"op_id", 1}, {"node", 20}, {"logic", "running_sum"}}})},
    };
    CHECK_NOTHROW(parse_scenario(base));

    json no_sink = base;
    no_sink.erase("sink_node");
    CHECK_THROWS_WITH_AS(parse_scenario(no_sink), doctest::Contains("sink_node"), ConfigError);

    json bad_logic = base;
    bad_logic["operators"][0]["logic"] = "nonsense";
    CHECK_THROWS_WITH_AS(parse_scenario(bad_logic), doctest::Contains("nonsense"), ConfigError);

    json dup_op = base;
    dup_op["operators"].push_back(dup_op["operators"][0]);
    CHECK_THROWS_AS(parse_scenario(dup_op), ConfigError);

    json bad_prob = base;
    bad_prob["links"] = json::array({{{"from", 10}, {"to", 20}, {"duplicate_prob", 1.5}}});
    CHECK_THROWS_AS(parse_scenario(bad_prob), ConfigError);

    json bad_partition = base;
    bad_partition["migrations"] =
        json::array({{{"step", 1}, {"op_id", 1}, {"partition", 5}, {"target", 30}}});
    CHECK_THROWS_AS(parse_scenario(bad_partition), ConfigError);

    CHECK_THROWS_AS(load_scenario("/does/not/exist.json"), ConfigError);
}

TEST_CASE("baseline scenario passes with zero deduplicated outputs") {
    Scenario s = load("baseline.json");
    RunReport r = run_scenario(s);
    CHECK(r.pass);
    CHECK(r.outputs_equal);
    CHECK(r.sink_events > 0);  // the comparison is not vacuous
    CHECK(r.sink_events == r.oracle_events);
    CHECK(r.sink_dedup_dropped == 0);
    CHECK(r.op_dedup_dropped == 0);
    CHECK(r.events_held_for_migration == 0);
    CHECK(r.migration_timeline.empty());
}

TEST_CASE("migration scenario passes and the overlap is actually deduplicated") {
    Scenario s = load("migration.json");
    std::vector<Event> sink, oracle;
    RunReport r = run_scenario(s, &sink, &oracle);
    CHECK(r.pass);
    CHECK(r.outputs_equal);
    CHECK(sink == oracle);
    CHECK(r.sink_dedup_dropped + r.op_dedup_dropped > 0);

    REQUIRE(!r.migration_timeline.empty());
    CHECK(r.migration_timeline.front().from == MigrationPhase::Single);
    CHECK(r.migration_timeline.back().to == MigrationPhase::Switched);
    CHECK(r.migration_timeline.back().duplicated_inputs > 0);
}

TEST_CASE("after the switch only the candidate replica survives") {
    Scenario s = load("migration.json");
    Engine engine(s);
    engine.run();
    const auto& m = s.migrations[0];
    CHECK(engine.migration_phase(0) == MigrationPhase::Switched);
    CHECK(engine.replica_ingest_count(m.op_id, m.partition, 1) > 0);  // fed during overlap
    CHECK(engine.replica_ingest_count(m.op_id, m.partition, 0) == 0);  // torn down
}

TEST_CASE("duplicate injection on every link is absorbed by tv-dedup") {
    Scenario s = load("dupinject.json");
    RunReport r = run_scenario(s);
    CHECK(r.pass);
    CHECK(r.outputs_equal);
    CHECK(r.sink_dedup_dropped > 0);
    CHECK(r.op_dedup_dropped > 0);
}

TEST_CASE("enclave mode is semantics-preserving and stays within budget") {
    std::vector<Event> plain_sink, enclave_sink;
    RunReport plain = run_scenario(load("migration.json"), &plain_sink);
    RunReport sealed = run_scenario(load("enclave.json"), &enclave_sink);
    CHECK(plain.pass);
    CHECK(sealed.pass);
    CHECK(plain_sink == enclave_sink);  // identical pipeline, boundary on/off
    CHECK(sealed.enclave_budget_bytes == 1048576);
    CHECK(sealed.max_resident_bytes <= sealed.enclave_budget_bytes);
    CHECK(sealed.enclave_evictions > 0);  // the budget was actually contended
    CHECK(!sealed.budget_violated);
}

TEST_CASE("the non-deterministic control operator fails the run") {
    Scenario s = load("nondet.json");
    RunReport r = run_scenario(s);
    CHECK(!r.pass);
    CHECK(r.diverged);
    CHECK(r.fail_reason.find("divergence") != std::string::npos);
}

TEST_CASE("a corrupted snapshot transfer rolls back and the original serves on") {
    Scenario s = load("migration.json");
    s.corrupt_snapshot_transfer = true;
    RunReport r = run_scenario(s);
    CHECK(r.migration_aborted);
    CHECK(r.pass);  // output still equals the oracle
    REQUIRE(!r.migration_timeline.empty());
    CHECK(r.migration_timeline.back().to == MigrationPhase::Single);
}

TEST_CASE("a tampered operator measurement refuses to start") {
    Scenario s = load("enclave.json");
    s.tamper_attestation_op = 1;
    CHECK_THROWS_WITH_AS(Engine{s}, doctest::Contains("forecast"), AttestationFailure);
}

TEST_CASE("diff_events reports the first divergence") {
    std::vector<Event> a{Event::data(1, 1, {}, {'x'}), Event::data(1, 2, {}, {'y'})};
    CHECK(diff_events(a, a) == -1);

    std::vector<Event> b = a;
    b[1].payload = {'z'};
    CHECK(diff_events(a, b) == 1);

    std::vector<Event> shorter{a[0]};
    CHECK(diff_events(a, shorter) == 1);
    CHECK(diff_events(shorter, a) == 1);
}

TEST_CASE("event log files round-trip") {
    std::vector<Event> events{Event::data(1, 1, {'k'}, {'v'}), Event::watermark(2, 9)};
    std::string path = "test_log.tmp";
    write_event_log(path, events);
    CHECK(read_event_log(path) == events);
    std::remove(path.c_str());
    CHECK_THROWS_AS(read_event_log("/does/not/exist.log"), Error);

    Bytes bytes = encode_event_log(events);
    bytes.pop_back();
    CHECK_THROWS_AS(decode_event_log(bytes), SerializationFailure);
}

TEST_CASE("reports are deterministic per (scenario, seed)") {
    Scenario s = load("migration.json");
    RunReport a = run_scenario(s);
    RunReport b = run_scenario(s);
    CHECK(render_report(a, /*machine=*/true) == render_report(b, /*machine=*/true));

    std::string machine = render_report(a, /*machine=*/true);
    CHECK(machine.find("verdict=pass") != std::string::npos);
    CHECK(machine.find("output_diff=equal") != std::string::npos);
}

TEST_CASE("the oracle itself is deterministic") {
    Scenario s = load("migration.json");
    std::vector<Event> a = oracle_run(s);
    std::vector<Event> b = oracle_run(s);
    CHECK(a == b);
    CHECK(!a.empty());
    // Oracle output timestamps are strictly increasing per stage output.
    for (std::size_t i = 1; i < a.size(); ++i) {
        CHECK(a[i].ts >= a[i - 1].ts);
    }
}

TEST_CASE("sweep validates its range and reruns per trigger point") {
    Scenario s = load("migration.json");
    CHECK_THROWS_AS(sweep_migrations(s, 0, 10), ConfigError);
    CHECK_THROWS_AS(sweep_migrations(s, 10, 1), ConfigError);
    CHECK_THROWS_AS(sweep_migrations(s, 1, 10, 0), ConfigError);
    Scenario no_migration = load("baseline.json");
    CHECK_THROWS_AS(sweep_migrations(no_migration, 1, 10), ConfigError);

    auto results = sweep_migrations(s, 100, 300, 100);
    REQUIRE(results.size() == 3);
    for (const auto& r : results) {
        CHECK(r.pass);
    }
}
