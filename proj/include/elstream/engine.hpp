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

#ifndef ELSTREAM_ENGINE_HPP_
#define ELSTREAM_ENGINE_HPP_

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <elstream/enclave.hpp>
#include <elstream/errors.hpp>
#include <elstream/event.hpp>
#include <elstream/migration.hpp>
#include <elstream/operator_runtime.hpp>
#include <elstream/ordering.hpp>
#include <elstream/scenario.hpp>
#include <elstream/simnet.hpp>
#include <elstream/workloads.hpp>

namespace elstream {

struct PhaseRecord {
    std::uint64_t step = 0;
    std::uint64_t op_id = 0;
    std::uint32_t partition = 0;
    MigrationPhase from = MigrationPhase::Single;
    MigrationPhase to = MigrationPhase::Single;
    std::uint64_t duplicated_inputs = 0;
    std::uint64_t dropped_duplicates = 0;
    std::uint64_t compared_outputs = 0;
};

struct RunReport {
    std::uint64_t steps = 0;
    std::uint64_t events_generated = 0;
    std::uint64_t events_delivered = 0;
    std::uint64_t sink_dedup_dropped = 0;
    std::uint64_t op_dedup_dropped = 0;
    std::uint64_t replay_dropped = 0;
    std::uint64_t stray_dropped = 0;
    std::uint64_t events_held_for_migration = 0;  // non-disruption probe; must stay 0
    std::uint64_t max_resident_bytes = 0;
    std::uint64_t enclave_budget_bytes = 0;
    std::uint64_t enclave_evictions = 0;
    bool budget_violated = false;
    std::vector<PhaseRecord> migration_timeline;
    std::map<std::uint64_t, std::uint64_t> latency_histogram;  // hop latency in steps
    bool diverged = false;
    std::string divergence_reason;
    bool migration_aborted = false;
    std::string abort_reason;

    // Filled by the harness after the oracle comparison.
    std::uint64_t sink_events = 0;
    std::uint64_t oracle_events = 0;
    bool outputs_equal = false;
    std::int64_t first_divergence = -1;
    bool pass = false;
    std::string fail_reason;
};

/// The full simulated deployment: source drivers, operator partition
/// replicas wired through the simulated network, the sink, and the
/// migration coordinator. Deterministic per (scenario, seed).
class Engine {
  public:
    explicit Engine(Scenario scenario, bool collect_trace = false)
        : scenario_(std::move(scenario)), sim_(scenario_.seed), collect_trace_(collect_trace) {
        scenario_.validate();
        build();
    }

    /// Drives the scenario to quiescence. Throws StallDetected when the
    /// pipeline wedges and Divergence when replica determinism breaks.
    RunReport run() {
        try {
            loop();
            settle_migrations();
        } catch (const Divergence& ex) {
            report_.diverged = true;
            report_.divergence_reason = ex.what();
        }
        report_.steps = sim_.now();
        report_.sink_events = sink_log_.size();
        report_.sink_dedup_dropped = sink_gate_.dropped();
        report_.enclave_budget_bytes = scenario_.enclave_mode ? scenario_.enclave_budget_bytes : 0;
        for (const auto& op_sites : sites_) {
            for (const auto& site : op_sites) {
                for (const auto& r : site.replicas) {
                    report_.op_dedup_dropped += r->gate.dropped();
                    if (r->pages) {
                        std::uint64_t m = r->pages->max_resident_bytes();
                        report_.max_resident_bytes = std::max(report_.max_resident_bytes, m);
                        report_.enclave_evictions += r->pages->evictions();
                        if (m > r->pages->budget_bytes()) report_.budget_violated = true;
                    }
                }
            }
        }
        return report_;
    }

    const std::vector<Event>& sink_log() const { return sink_log_; }
    const std::vector<std::string>& trace() const { return trace_; }

    /// Delivery counters per (op_id, partition, replica instance); used by
    /// tests that assert the duplicated stream reaches both replicas.
    std::uint64_t replica_ingest_count(std::uint64_t op_id, std::uint32_t partition,
                                       std::uint64_t instance) const {
        for (std::size_t i = 0; i < scenario_.operators.size(); ++i) {
            if (scenario_.operators[i].desc.op_id != op_id) continue;
            for (const auto& r : sites_[i][partition].replicas) {
                if (r->instance == instance) return r->delivered;
            }
        }
        return 0;
    }

    MigrationPhase migration_phase(std::size_t index) const {
        return migrations_[index].coordinator ? migrations_[index].coordinator->phase()
                                              : MigrationPhase::Single;
    }

  private:
    struct Replica {
        NodeId node = 0;
        std::uint64_t instance = 0;  // 0 = original, 1 = migration candidate
        DedupGate gate;
        std::unique_ptr<MergeBuffer> buffer;
        std::unique_ptr<MapPager> map_pager;
        std::unique_ptr<PagedStateStore> pages;
        std::unique_ptr<PagedPager> paged_pager;
        std::unique_ptr<Partition> partition;
        Timestamp last_out_wm = 0;
        bool processing = true;
        bool alive = true;
        std::uint64_t delivered = 0;
    };

    struct Site {
        std::vector<std::unique_ptr<Replica>> replicas;
        TimestampVector sent_floor;  // highest data ts routed here, per source
    };

    struct SourceDriver {
        SourceSpec spec;
        std::vector<Event> events;
        std::size_t next = 0;
    };

    struct ActiveMigration {
        MigrationSpec spec;
        std::size_t op_index = 0;
        std::unique_ptr<MigrationCoordinator> coordinator;
        TimestampVector pre_duplication_floor;
        bool triggered = false;
        std::size_t transitions_seen = 0;
    };

    // ---- construction -------------------------------------------------

    void build() {
        for (const auto& src : scenario_.sources) {
            SourceDriver driver{src, generate_plugs(src.gen), 0};
            for (const auto& e : driver.events) {
                if (e.kind == EventKind::Data) ++report_.events_generated;
            }
            drivers_.push_back(std::move(driver));
            ensure_node_crypto(src.node, nullptr);
        }
        sites_.resize(scenario_.operators.size());
        for (std::size_t i = 0; i < scenario_.operators.size(); ++i) {
            const OperatorSpec& op = scenario_.operators[i];
            ensure_node_crypto(op.node, &op);
            attest_node(op.node, op);
            node_op_[op.node] = i;
            sites_[i].resize(op.desc.parallelism);
            for (std::uint32_t p = 0; p < op.desc.parallelism; ++p) {
                sites_[i][p].replicas.push_back(make_replica(i, p, op.node, 0, true));
            }
        }
        ensure_node_crypto(scenario_.sink_node, nullptr);
        sink_buffer_ = std::make_unique<MergeBuffer>(upstream_sources(scenario_.operators.size()));

        for (const auto& src : scenario_.sources) {
            ensure_channel(src.node, scenario_.operators.front().node);
        }
        for (std::size_t i = 0; i + 1 < scenario_.operators.size(); ++i) {
            ensure_channel(scenario_.operators[i].node, scenario_.operators[i + 1].node);
        }
        ensure_channel(scenario_.operators.back().node, scenario_.sink_node);

        for (const auto& m : scenario_.migrations) {
            ActiveMigration am;
            am.spec = m;
            for (std::size_t i = 0; i < scenario_.operators.size(); ++i) {
                if (scenario_.operators[i].desc.op_id == m.op_id) am.op_index = i;
            }
            migrations_.push_back(std::move(am));
        }
    }

    std::set<SourceId> upstream_sources(std::size_t op_index) const {
        std::set<SourceId> out;
        if (op_index == 0) {
            for (const auto& src : scenario_.sources) out.insert(src.gen.source_id);
        } else {
            const OperatorSpec& up = scenario_.operators[op_index - 1];
            for (std::uint32_t p = 0; p < up.desc.parallelism; ++p) {
                out.insert(operator_output_source(up.desc.op_id, p));
            }
        }
        return out;
    }

    std::unique_ptr<Replica> make_replica(std::size_t op_index, std::uint32_t partition,
                                          NodeId node, std::uint64_t instance, bool processing) {
        const OperatorSpec& op = scenario_.operators[op_index];
        auto r = std::make_unique<Replica>();
        r->node = node;
        r->instance = instance;
        r->processing = processing;
        r->buffer = std::make_unique<MergeBuffer>(upstream_sources(op_index));
        auto logic = LogicRegistry::instance().create(op.desc.logic_id);
        logic->set_instance_tag(instance);
        StatePager* pager = nullptr;
        if (scenario_.enclave_mode) {
            r->pages = std::make_unique<PagedStateStore>(scenario_.enclave_budget_bytes,
                                                         scenario_.enclave_frame_bytes);
            r->paged_pager = std::make_unique<PagedPager>(*r->pages, *node_crypto_.at(node));
            pager = r->paged_pager.get();
        } else {
            r->map_pager = std::make_unique<MapPager>();
            pager = r->map_pager.get();
        }
        r->partition = std::make_unique<Partition>(op.desc, partition, std::move(logic), pager);
        return r;
    }

    void ensure_node_crypto(NodeId node, const OperatorSpec* op) {
        if (!scenario_.enclave_mode || node_crypto_.contains(node)) return;
        Key256 sealing = op ? derive_key(scenario_.master_key,
                                         "seal/" + std::to_string(op->desc.op_id))
                            : derive_key(scenario_.master_key, "node/" + std::to_string(node));
        Digest256 measurement{};
        if (op) {
            measurement = measure_logic(op->desc.logic_id, op->desc.params);
            if (scenario_.tamper_attestation_op == op->desc.op_id) {
                measurement = sha256(std::string("tampered"));
            }
        }
        node_crypto_[node] = std::make_unique<EnclaveContext>(node, sealing, measurement,
                                                              scenario_.enclave_budget_bytes);
    }

    void attest_node(NodeId node, const OperatorSpec& op) {
        if (!scenario_.enclave_mode) return;
        Digest256 expected = measure_logic(op.desc.logic_id, op.desc.params);
        if (!attest(*node_crypto_.at(node), expected)) {
            throw AttestationFailure("operator '" + op.desc.name + "' failed attestation; " +
                                     "events will not be routed to it");
        }
    }

    void ensure_channel(NodeId from, NodeId to) {
        if (!sim_.has_link(from, to)) {
            LinkConfig config{from, to, scenario_.default_delay,
                              scenario_.default_duplicate_prob};
            for (const auto& link : scenario_.links) {
                if (link.from == from && link.to == to) {
                    config.delay = link.delay;
                    config.duplicate_prob = link.duplicate_prob;
                }
            }
            sim_.add_link(config);
        }
        if (scenario_.enclave_mode) {
            Key256 key = derive_key(scenario_.master_key, "ch/" + std::to_string(from) + "/" +
                                                              std::to_string(to));
            node_crypto_.at(from)->set_channel_key(to, key);
            node_crypto_.at(to)->set_channel_key(from, key);
        }
    }

    // ---- routing ------------------------------------------------------

    void send_event(NodeId from, NodeId to, const Event& e) {
        if (scenario_.enclave_mode) {
            sim_.send(from, to, Event{}, node_crypto_.at(from)->encrypt_event(e, to));
        } else {
            sim_.send(from, to, e);
        }
    }

    /// Routes an event into an operator stage (or the sink); data events go
    /// to their key partition's replica set, watermarks broadcast.
    void route_to_stage(std::size_t op_index, NodeId from, const Event& e) {
        if (op_index == scenario_.operators.size()) {
            send_event(from, scenario_.sink_node, e);
            return;
        }
        const OperatorSpec& op = scenario_.operators[op_index];
        if (e.kind == EventKind::Watermark) {
            std::set<NodeId> targets;
            for (auto& site : sites_[op_index]) {
                for (auto& r : site.replicas) {
                    if (r->alive) targets.insert(r->node);
                }
            }
            for (NodeId node : targets) send_event(from, node, e);
            return;
        }
        std::uint32_t p = static_cast<std::uint32_t>(fnv1a64(e.key) % op.desc.parallelism);
        Site& site = sites_[op_index][p];
        site.sent_floor.advance(e.source, e.ts);
        std::size_t fanout = 0;
        for (auto& r : site.replicas) {
            if (!r->alive) continue;
            send_event(from, r->node, e);
            ++fanout;
        }
        if (fanout > 1) {
            for (auto& m : migrations_) {
                if (m.op_index == op_index && m.spec.partition == p && m.coordinator) {
                    ++m.coordinator->counters().duplicated_inputs;
                }
            }
        }
    }

    // ---- main loop ----------------------------------------------------

    void loop() {
        std::uint64_t idle_streak = 0;
        while (work_left()) {
            if (sim_.now() >= scenario_.max_steps) {
                throw StallDetected("max_steps (" + std::to_string(scenario_.max_steps) +
                                    ") exceeded");
            }
            bool progressed = step();
            if (progressed || trigger_pending()) {
                idle_streak = 0;
            } else if (++idle_streak > scenario_.stall_limit) {
                throw StallDetected("no progress for " + std::to_string(idle_streak) +
                                    " steps with work pending");
            }
        }
    }

    bool trigger_pending() const {
        for (const auto& m : migrations_) {
            if (!m.triggered) return true;
        }
        return false;
    }

    bool work_left() const {
        for (const auto& d : drivers_) {
            if (d.next < d.events.size()) return true;
        }
        if (!sim_.idle()) return true;
        for (const auto& op_sites : sites_) {
            for (const auto& site : op_sites) {
                for (const auto& r : site.replicas) {
                    if (r->alive && r->buffer->buffered() > 0) return true;
                }
            }
        }
        if (sink_buffer_->buffered() > 0) return true;
        for (const auto& m : migrations_) {
            if (!m.triggered) return true;
            if (m.coordinator) {
                MigrationPhase phase = m.coordinator->phase();
                if (phase == MigrationPhase::Duplicating || phase == MigrationPhase::Snapshotting)
                    return true;
            }
        }
        return false;
    }

    bool step() {
        std::uint64_t current = sim_.now() + 1;
        bool progressed = false;

        progressed |= migration_actions(current);

        for (auto& d : drivers_) {
            if (d.next >= d.events.size()) continue;
            // One data event per step plus any watermarks that follow it.
            do {
                route_to_stage(0, d.spec.node, d.events[d.next]);
                ++d.next;
                progressed = true;
            } while (d.next < d.events.size() &&
                     d.events[d.next].kind == EventKind::Watermark);
        }

        for (auto& msg : sim_.advance()) {
            dispatch(msg);
            progressed = true;
        }

        for (std::size_t i = 0; i < sites_.size(); ++i) {
            for (std::uint32_t p = 0; p < sites_[i].size(); ++p) {
                for (auto& r : sites_[i][p].replicas) {
                    progressed |= pump(i, p, *r);
                }
            }
        }

        progressed |= pump_sink();
        progressed |= sync_checks(current);
        return progressed;
    }

    bool migration_actions(std::uint64_t current) {
        bool acted = false;
        for (auto& m : migrations_) {
            if (!m.triggered && current >= m.spec.trigger_step) {
                start_migration(m, current);
                acted = true;
            }
            if (m.coordinator && m.coordinator->phase() == MigrationPhase::Duplicating &&
                transfer_ready(m)) {
                do_transfer(m, current);
                acted = true;
            }
        }
        return acted;
    }

    void start_migration(ActiveMigration& m, std::uint64_t current) {
        m.triggered = true;
        Site& site = sites_[m.op_index][m.spec.partition];
        MigrationPlan plan;
        plan.op_id = m.spec.op_id;
        plan.partition = m.spec.partition;
        plan.source_node = site.replicas.front()->node;
        plan.target_node = m.spec.target_node;
        plan.sync_window = scenario_.sync_window;
        plan.started_at = current;

        MigrationHooks hooks;
        hooks.target_alive = [](NodeId) { return true; };
        hooks.spawn_candidate = [this, &m] { spawn_candidate(m); };
        hooks.take_snapshot = [this, &m] { return take_snapshot(m); };
        hooks.apply_snapshot = [this, &m](const Bytes& b) { apply_snapshot(m, b); };
        hooks.destroy_candidate = [this, &m] { destroy_candidate(m); };
        hooks.promote_candidate = [this, &m] { promote_candidate(m); };

        m.coordinator = std::make_unique<MigrationCoordinator>(plan, std::move(hooks));
        m.pre_duplication_floor = site.sent_floor;
        m.coordinator->start();
        record_transitions(m, current);
    }

    void spawn_candidate(ActiveMigration& m) {
        const OperatorSpec& op = scenario_.operators[m.op_index];
        NodeId target = m.spec.target_node;
        OperatorSpec shadow = op;  // candidate runs the same descriptor on the target node
        ensure_node_crypto(target, &shadow);
        attest_node(target, op);
        node_op_[target] = m.op_index;
        // Wire the target into the topology: upstream senders reach it,
        // and it reaches downstream.
        if (m.op_index == 0) {
            for (const auto& src : scenario_.sources) ensure_channel(src.node, target);
        } else {
            for (auto& site : sites_[m.op_index - 1]) {
                for (auto& r : site.replicas) {
                    if (r->alive) ensure_channel(r->node, target);
                }
            }
        }
        if (m.op_index + 1 == scenario_.operators.size()) {
            ensure_channel(target, scenario_.sink_node);
        } else {
            for (auto& site : sites_[m.op_index + 1]) {
                for (auto& r : site.replicas) {
                    if (r->alive) ensure_channel(target, r->node);
                }
            }
        }
        sites_[m.op_index][m.spec.partition].replicas.push_back(
            make_replica(m.op_index, m.spec.partition, target, 1, /*processing=*/false));
    }

    /// The snapshot may be taken only after the original has processed
    /// everything that was sent before duplication began — those events
    /// never reach the candidate, so they must be inside the snapshot.
    bool transfer_ready(const ActiveMigration& m) const {
        const Replica& original =
            *sites_[m.op_index][m.spec.partition].replicas.front();
        for (const auto& [source, ts] : m.pre_duplication_floor.entries()) {
            if (original.partition->tv().high_water(source) < ts) return false;
        }
        return true;
    }

    void do_transfer(ActiveMigration& m, std::uint64_t current) {
        try {
            m.coordinator->transfer_snapshot();
        } catch (const Error& ex) {
            report_.migration_aborted = true;
            report_.abort_reason = ex.what();
        }
        record_transitions(m, current);
    }

    Bytes take_snapshot(ActiveMigration& m) {
        Replica& original = *sites_[m.op_index][m.spec.partition].replicas.front();
        StateSnapshot snap = original.partition->snapshot();
        Bytes bytes;
        if (scenario_.enclave_mode) {
            bytes = node_crypto_.at(original.node)->seal(snap).encode();
        } else {
            bytes = snap.encode();
        }
        if (scenario_.corrupt_snapshot_transfer && !bytes.empty()) {
            bytes[bytes.size() / 2] ^= 0x01;
        }
        return bytes;
    }

    void apply_snapshot(ActiveMigration& m, const Bytes& bytes) {
        Site& site = sites_[m.op_index][m.spec.partition];
        Replica& candidate = *site.replicas.back();
        StateSnapshot snap;
        try {
            if (scenario_.enclave_mode) {
                snap = node_crypto_.at(candidate.node)->unseal(SealedBlob::decode(bytes));
            } else {
                snap = StateSnapshot::decode(bytes);
            }
        } catch (const Error& ex) {
            throw SnapshotFailure(std::string("snapshot transfer corrupted: ") + ex.what());
        }
        candidate.partition->restore(snap);
        std::uint64_t dropped = candidate.buffer->purge_duplicates(snap.tv);
        candidate.gate.merge_floor(snap.tv);
        candidate.processing = true;
        m.coordinator->counters().dropped_duplicates += dropped;
    }

    void destroy_candidate(ActiveMigration& m) {
        Site& site = sites_[m.op_index][m.spec.partition];
        if (site.replicas.size() > 1) {
            site.replicas.back()->alive = false;
            site.replicas.pop_back();
        }
    }

    void promote_candidate(ActiveMigration& m) {
        Site& site = sites_[m.op_index][m.spec.partition];
        site.replicas.front()->alive = false;
        site.replicas.erase(site.replicas.begin());
    }

    bool sync_checks(std::uint64_t current) {
        bool acted = false;
        for (auto& m : migrations_) {
            if (!m.coordinator) continue;
            record_transitions(m, current);
            if (m.coordinator->phase() == MigrationPhase::Syncing && m.coordinator->check_sync()) {
                verify_state_hashes(m);
                m.coordinator->finalize();
                record_transitions(m, current);
                acted = true;
            }
        }
        return acted;
    }

    /// Belt-and-braces: when both replicas sit at the same input frontier,
    /// their state hashes must agree.
    void verify_state_hashes(const ActiveMigration& m) {
        const Site& site = sites_[m.op_index][m.spec.partition];
        if (site.replicas.size() < 2) return;
        const Replica& a = *site.replicas.front();
        const Replica& b = *site.replicas.back();
        if (a.partition->tv() == b.partition->tv() &&
            a.partition->state_hash() != b.partition->state_hash()) {
            throw Divergence("replica state hashes differ at equal input frontier");
        }
    }

    /// A migration still syncing when the stream has run dry is completed
    /// by the stronger check: nothing unmatched and equal state hashes.
    void settle_migrations() {
        for (auto& m : migrations_) {
            if (!m.coordinator || m.coordinator->phase() != MigrationPhase::Syncing) continue;
            const Site& site = sites_[m.op_index][m.spec.partition];
            const Replica& a = *site.replicas.front();
            const Replica& b = *site.replicas.back();
            if (a.partition->tv() != b.partition->tv() ||
                a.partition->state_hash() != b.partition->state_hash()) {
                throw Divergence("replicas failed to converge by end of stream");
            }
            m.coordinator->finalize_quiesced();
            record_transitions(m, sim_.now());
        }
    }

    void record_transitions(ActiveMigration& m, std::uint64_t step) {
        const auto& transitions = m.coordinator->transitions();
        const auto& counters = m.coordinator->counters();
        for (std::size_t i = m.transitions_seen; i < transitions.size(); ++i) {
            report_.migration_timeline.push_back(PhaseRecord{
                step, m.spec.op_id, m.spec.partition, transitions[i].from, transitions[i].to,
                counters.duplicated_inputs, counters.dropped_duplicates,
                counters.compared_outputs});
        }
        m.transitions_seen = transitions.size();
    }

    // ---- delivery & processing ----------------------------------------

    void dispatch(const Message& msg) {
        Event e;
        if (scenario_.enclave_mode) {
            try {
                e = node_crypto_.at(msg.to)->decrypt_event(msg.wire, msg.from);
            } catch (const ReplayDetected&) {
                ++report_.replay_dropped;
                return;
            }
        } else {
            e = msg.event;
        }
        ++report_.events_delivered;
        ++report_.latency_histogram[sim_.now() - msg.sent_step];
        if (collect_trace_) {
            trace_.push_back("step=" + std::to_string(sim_.now()) + " link=" +
                             std::to_string(msg.from) + "->" + std::to_string(msg.to) +
                             " source=" + std::to_string(e.source) + " ts=" +
                             std::to_string(e.ts) +
                             " kind=" + (e.kind == EventKind::Data ? "data" : "wm"));
        }
        if (msg.to == scenario_.sink_node) {
            if (sink_gate_.accept(e)) sink_buffer_->ingest(e);
            return;
        }
        auto op_it = node_op_.find(msg.to);
        if (op_it == node_op_.end()) {
            ++report_.stray_dropped;
            return;
        }
        std::size_t op_index = op_it->second;
        const OperatorSpec& op = scenario_.operators[op_index];
        if (e.kind == EventKind::Watermark) {
            for (auto& site : sites_[op_index]) {
                for (auto& r : site.replicas) {
                    if (r->alive && r->node == msg.to) deliver(*r, e);
                }
            }
            return;
        }
        std::uint32_t p = static_cast<std::uint32_t>(fnv1a64(e.key) % op.desc.parallelism);
        bool taken = false;
        for (auto& r : sites_[op_index][p].replicas) {
            if (r->alive && r->node == msg.to) {
                deliver(*r, e);
                taken = true;
            }
        }
        if (!taken) ++report_.stray_dropped;
    }

    void deliver(Replica& r, const Event& e) {
        ++r.delivered;
        if (r.gate.accept(e)) {
            r.buffer->ingest(e);
        }
    }

    bool pump(std::size_t op_index, std::uint32_t partition, Replica& r) {
        if (!r.alive || !r.processing) return false;
        const OperatorSpec& op = scenario_.operators[op_index];
        std::vector<Event> batch =
            op.desc.commutative ? r.buffer->drain_relaxed() : r.buffer->drain();
        ActiveMigration* mig = migration_for(op_index, partition);
        for (const Event& e : batch) {
            for (Event& out : r.partition->process(e)) {
                observe_output(mig, r, out);
                route_to_stage(op_index + 1, r.node, out);
            }
        }
        Timestamp lw = r.buffer->low_watermark();
        bool emitted_wm = false;
        if (lw > r.last_out_wm) {
            r.last_out_wm = lw;
            Timestamp out_wm = ((lw + 1) << r.partition->fanout_bits()) - 1;
            route_to_stage(op_index + 1, r.node,
                           Event::watermark(r.partition->out_source(), out_wm));
            emitted_wm = true;
        }
        return !batch.empty() || emitted_wm;
    }

    void observe_output(ActiveMigration* mig, const Replica& r, const Event& out) {
        if (!mig || !mig->coordinator ||
            mig->coordinator->phase() != MigrationPhase::Syncing) {
            return;
        }
        if (r.instance == 0) {
            mig->coordinator->observe_original(out);
        } else {
            mig->coordinator->observe_candidate(out);
        }
    }

    ActiveMigration* migration_for(std::size_t op_index, std::uint32_t partition) {
        for (auto& m : migrations_) {
            if (m.op_index == op_index && m.spec.partition == partition && m.coordinator) {
                return &m;
            }
        }
        return nullptr;
    }

    bool pump_sink() {
        std::vector<Event> batch = sink_buffer_->drain();
        for (Event& e : batch) {
            sink_log_.push_back(std::move(e));
        }
        return !batch.empty();
    }

    Scenario scenario_;
    Simulator sim_;
    bool collect_trace_;
    std::vector<SourceDriver> drivers_;
    std::vector<std::vector<Site>> sites_;  // [op_index][partition]
    std::map<NodeId, std::size_t> node_op_;
    std::map<NodeId, std::unique_ptr<EnclaveContext>> node_crypto_;
    std::vector<ActiveMigration> migrations_;
    DedupGate sink_gate_;
    std::unique_ptr<MergeBuffer> sink_buffer_;
    std::vector<Event> sink_log_;
    std::vector<std::string> trace_;
    RunReport report_;
};

}  // namespace elstream

#endif  // ELSTREAM_ENGINE_HPP_
