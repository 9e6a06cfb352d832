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

#ifndef ELSTREAM_HARNESS_HPP_
#define ELSTREAM_HARNESS_HPP_

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <elstream/engine.hpp>
#include <elstream/scenario.hpp>

namespace elstream {

/// Reference execution: the identical event multiset, single-threaded, in
/// total (ts, source, per-source order) order, no migration, no network,
/// no security boundary. Shares the operator logic code but none of the
/// merge/migration/simulation machinery — emissions are timestamped with
/// inline arithmetic, so agreement with the engine is meaningful.
inline std::vector<Event> oracle_run(const Scenario& scenario) {
    std::vector<Event> current;
    for (const auto& src : scenario.sources) {
        for (auto& e : generate_plugs(src.gen)) {
            if (e.kind == EventKind::Data) current.push_back(std::move(e));
        }
    }
    auto by_ts_source = [](const Event& a, const Event& b) {
        if (a.ts != b.ts) return a.ts < b.ts;
        return a.source < b.source;
    };
    std::stable_sort(current.begin(), current.end(), by_ts_source);

    for (const auto& op : scenario.operators) {
        std::uint32_t par = op.desc.parallelism;
        std::vector<std::unique_ptr<OperatorLogic>> logics;
        std::vector<std::unique_ptr<MapPager>> pagers;
        std::vector<std::uint64_t> seq(par, 0);
        for (std::uint32_t p = 0; p < par; ++p) {
            auto logic = LogicRegistry::instance().create(op.desc.logic_id);
            logic->configure(op.desc.params);
            pagers.push_back(std::make_unique<MapPager>());
            logic->attach_pager(pagers.back().get());
            logics.push_back(std::move(logic));
        }
        std::vector<Event> out;
        for (const Event& e : current) {
            std::uint32_t p = static_cast<std::uint32_t>(fnv1a64(e.key) % par);
            for (auto& em : logics[p]->on_event(e)) {
                SourceId out_source = (1ull << 63) | (op.desc.op_id << 20) | p;
                Timestamp out_ts = (e.ts << 16) + (seq[p] & 0xffffu);
                out.push_back(Event::data(out_source, out_ts, std::move(em.key),
                                          std::move(em.payload)));
                ++seq[p];
            }
        }
        std::stable_sort(out.begin(), out.end(), by_ts_source);
        current = std::move(out);
    }
    return current;
}

// ---- event log files ----------------------------------------------------
// A log is a sequence of Event binary encodings, each length-prefixed with
// 4 bytes big-endian.

inline Bytes encode_event_log(const std::vector<Event>& events) {
    Bytes out;
    for (const Event& e : events) {
        Bytes enc = encode_event(e);
        put_u32_be(out, static_cast<std::uint32_t>(enc.size()));
        out.insert(out.end(), enc.begin(), enc.end());
    }
    return out;
}

inline std::vector<Event> decode_event_log(BytesView bytes) {
    std::vector<Event> out;
    ByteReader in(bytes);
    while (!in.done()) {
        Bytes record = in.take(in.u32_be());
        out.push_back(decode_event(record));
    }
    return out;
}

inline void write_event_log(const std::string& path, const std::vector<Event>& events) {
    Bytes bytes = encode_event_log(events);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write '" + path + "'");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
}

inline std::vector<Event> read_event_log(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read '" + path + "'");
    Bytes bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_event_log(bytes);
}

/// Byte-exact comparison; returns -1 when equal, otherwise the index of
/// the first diverging event (a missing tail counts as divergence at the
/// shorter length).
inline std::int64_t diff_events(const std::vector<Event>& a, const std::vector<Event>& b) {
    std::size_t n = std::min(a.size(), b.size());
    for (std::size_t i = 0; i < n; ++i) {
        if (encode_event(a[i]) != encode_event(b[i])) return static_cast<std::int64_t>(i);
    }
    if (a.size() != b.size()) return static_cast<std::int64_t>(n);
    return -1;
}

// ---- scenario execution ---------------------------------------------------

/// Runs the engine and the oracle, diffs the deduplicated sink output
/// against the reference log, and fills the verdict.
inline RunReport run_scenario(const Scenario& scenario, std::vector<Event>* sink_out = nullptr,
                              std::vector<Event>* oracle_out = nullptr,
                              std::vector<std::string>* trace_out = nullptr) {
    register_builtin_logics();
    Engine engine(scenario, trace_out != nullptr);
    RunReport report = engine.run();
    std::vector<Event> oracle = oracle_run(scenario);
    report.oracle_events = oracle.size();
    report.first_divergence = diff_events(engine.sink_log(), oracle);
    report.outputs_equal = report.first_divergence < 0;

    report.pass = true;
    if (!report.outputs_equal) {
        report.pass = false;
        report.fail_reason = "sink output diverges from oracle at index " +
                             std::to_string(report.first_divergence);
    }
    if (report.diverged) {
        report.pass = false;
        report.fail_reason = "replica divergence: " + report.divergence_reason;
    }
    if (report.events_held_for_migration != 0) {
        report.pass = false;
        report.fail_reason = "events were held pending a migration phase change";
    }
    if (report.budget_violated) {
        report.pass = false;
        report.fail_reason = "enclave resident memory exceeded its budget";
    }

    if (sink_out) *sink_out = engine.sink_log();
    if (oracle_out) *oracle_out = std::move(oracle);
    if (trace_out) *trace_out = engine.trace();
    return report;
}

inline std::string render_report(const RunReport& r, bool machine = false) {
    std::ostringstream os;
    auto line = [&](const std::string& key, const std::string& value) {
        if (machine) {
            os << key << '=' << value << '\n';
        } else {
            os << "  " << key << ": " << value << '\n';
        }
    };
    if (!machine) os << "run report\n";
    line("verdict", r.pass ? "pass" : "fail");
    if (!r.pass) line("fail_reason", r.fail_reason);
    line("steps", std::to_string(r.steps));
    line("events_generated", std::to_string(r.events_generated));
    line("events_delivered", std::to_string(r.events_delivered));
    line("sink_events", std::to_string(r.sink_events));
    line("oracle_events", std::to_string(r.oracle_events));
    line("output_diff", r.outputs_equal
                            ? "equal"
                            : "first divergence at " + std::to_string(r.first_divergence));
    line("sink_dedup_dropped", std::to_string(r.sink_dedup_dropped));
    line("op_dedup_dropped", std::to_string(r.op_dedup_dropped));
    line("replay_dropped", std::to_string(r.replay_dropped));
    line("events_held_for_migration", std::to_string(r.events_held_for_migration));
    if (r.enclave_budget_bytes > 0) {
        line("enclave_budget_bytes", std::to_string(r.enclave_budget_bytes));
        line("max_resident_bytes", std::to_string(r.max_resident_bytes));
        line("enclave_evictions", std::to_string(r.enclave_evictions));
    }
    for (const auto& ph : r.migration_timeline) {
        std::ostringstream ms;
        ms << "step=" << ph.step << " op=" << ph.op_id << " partition=" << ph.partition
           << " " << phase_name(ph.from) << "->" << phase_name(ph.to)
           << " duplicated_inputs=" << ph.duplicated_inputs
           << " dropped_duplicates=" << ph.dropped_duplicates
           << " compared_outputs=" << ph.compared_outputs;
        line("migration", ms.str());
    }
    if (!machine) {
        os << "  latency histogram (hop steps: deliveries):";
        for (const auto& [steps, count] : r.latency_histogram) {
            os << ' ' << steps << ':' << count;
        }
        os << '\n';
    }
    return os.str();
}

struct SweepResult {
    std::uint64_t trigger_step = 0;
    bool pass = false;
    std::string reason;
};

/// Runs the scenario once per migration trigger point in [from, to],
/// stepping by `stride`; the first configured migration's trigger is
/// overridden each time.
inline std::vector<SweepResult> sweep_migrations(const Scenario& base, std::uint64_t from,
                                                 std::uint64_t to, std::uint64_t stride = 1) {
    if (base.migrations.empty()) {
        throw ConfigError("sweep requires a scenario with a migration");
    }
    if (from == 0 || from > to || stride == 0) {
        throw ConfigError("bad sweep range");
    }
    std::vector<SweepResult> results;
    for (std::uint64_t trigger = from; trigger <= to; trigger += stride) {
        Scenario s = base;
        s.migrations[0].trigger_step = trigger;
        RunReport r = run_scenario(s);
        results.push_back(SweepResult{trigger, r.pass, r.pass ? "" : r.fail_reason});
    }
    return results;
}

}  // namespace elstream

#endif  // ELSTREAM_HARNESS_HPP_
