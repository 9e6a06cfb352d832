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

#ifndef ELSTREAM_MIGRATION_HPP_
#define ELSTREAM_MIGRATION_HPP_

#include <cstdint>
#include <deque>
#include <functional>
#include <string>
#include <vector>

#include <elstream/errors.hpp>
#include <elstream/event.hpp>
#include <elstream/simnet.hpp>

namespace elstream {

enum class MigrationPhase : std::uint8_t { Single, Duplicating, Snapshotting, Syncing, Switched };

inline const char* phase_name(MigrationPhase phase) {
    switch (phase) {
        case MigrationPhase::Single: return "Single";
        case MigrationPhase::Duplicating: return "Duplicating";
        case MigrationPhase::Snapshotting: return "Snapshotting";
        case MigrationPhase::Syncing: return "Syncing";
        case MigrationPhase::Switched: return "Switched";
    }
    return "?";
}

struct MigrationPlan {
    std::uint64_t op_id = 0;
    std::uint32_t partition = 0;
    NodeId source_node = 0;
    NodeId target_node = 0;
    MigrationPhase phase = MigrationPhase::Single;
    std::uint32_t sync_window = 16;  // consecutive identical outputs required
    std::uint64_t started_at = 0;
};

/// Lockstep comparison of the two replicas' output streams during the
/// sync phase. Outputs are matched by output timestamp; matching events
/// must be byte-identical, otherwise determinism is broken and the
/// migration must abort.
class OutputComparator {
  public:
    void push_original(const Event& e) {
        original_.push_back(e);
        match();
    }

    void push_candidate(const Event& e) {
        candidate_.push_back(e);
        match();
    }

    /// True iff at least `window` consecutive outputs have matched and no
    /// unmatched event older than the newest matched timestamp is pending
    /// on either side (lockstep consumption guarantees the latter).
    bool in_sync(std::uint32_t window) const { return matched_ >= window; }

    std::uint64_t matched() const { return matched_; }
    std::size_t pending_original() const { return original_.size(); }
    std::size_t pending_candidate() const { return candidate_.size(); }

  private:
    void match() {
        while (!original_.empty() && !candidate_.empty()) {
            const Event& a = original_.front();
            const Event& b = candidate_.front();
            if (a.ts != b.ts) {
                // Deterministic replicas over the same ordered input must
                // emit the same timestamp sequence.
                throw Divergence("output timestamps drifted: " + std::to_string(a.ts) + " vs " +
                                 std::to_string(b.ts));
            }
            if (!(a == b)) {
                throw Divergence("outputs differ at ts " + std::to_string(a.ts));
            }
            original_.pop_front();
            candidate_.pop_front();
            ++matched_;
        }
    }

    std::deque<Event> original_;
    std::deque<Event> candidate_;
    std::uint64_t matched_ = 0;
};

/// Callbacks through which the coordinator acts on the hosting runtime.
/// The engine wires these to real replicas; tests wire fakes.
struct MigrationHooks {
    std::function<bool(NodeId)> target_alive;
    /// Create the virgin candidate replica and start duplicating the
    /// partition's input stream to it.
    std::function<void()> spawn_candidate;
    /// Take the original's snapshot, encoded (and sealed when the
    /// boundary is on). Throws SnapshotFailure on failure.
    std::function<Bytes()> take_snapshot;
    /// Restore the snapshot into the candidate and drop its buffered
    /// obsolete events. Throws SnapshotFailure on failure.
    std::function<void(const Bytes&)> apply_snapshot;
    /// Tear the candidate down and stop duplication (rollback path).
    std::function<void()> destroy_candidate;
    /// Tear the original down, leaving the candidate as sole owner.
    std::function<void()> promote_candidate;
};

/// Drives one partition through the five-step live-migration protocol:
/// spawn a virgin replica, duplicate the input stream, transfer the state
/// snapshot, watch for identical outputs, then tear down the original.
/// Any failure before the switch rolls back to Single with the original
/// replica intact.
class MigrationCoordinator {
  public:
    struct Counters {
        std::uint64_t duplicated_inputs = 0;
        std::uint64_t dropped_duplicates = 0;
        std::uint64_t compared_outputs = 0;
    };

    MigrationCoordinator(MigrationPlan plan, MigrationHooks hooks)
        : plan_(std::move(plan)), hooks_(std::move(hooks)) {
        if (plan_.source_node == plan_.target_node) {
            throw ConfigError("migration source and target nodes must differ");
        }
        if (plan_.sync_window < 1) {
            throw ConfigError("sync_window must be >= 1");
        }
    }

    void start() {
        if (plan_.phase != MigrationPhase::Single) {
            throw AlreadyMigrating("partition " + key() + " already in phase " +
                                   phase_name(plan_.phase));
        }
        if (hooks_.target_alive && !hooks_.target_alive(plan_.target_node)) {
            throw TargetUnavailable("node " + std::to_string(plan_.target_node));
        }
        hooks_.spawn_candidate();
        transition(MigrationPhase::Duplicating);
    }

    void transfer_snapshot() {
        if (plan_.phase != MigrationPhase::Duplicating) {
            throw Error("transfer_snapshot in phase " + std::string(phase_name(plan_.phase)));
        }
        transition(MigrationPhase::Snapshotting);
        try {
            Bytes snapshot = hooks_.take_snapshot();
            hooks_.apply_snapshot(snapshot);
        } catch (const Error&) {
            rollback();
            throw;
        }
        transition(MigrationPhase::Syncing);
    }

    /// Feed outputs observed from the two replicas; Divergence aborts the
    /// migration and propagates as a fatal protocol violation.
    void observe_original(const Event& e) {
        guard_divergence([&] { comparator_.push_original(e); });
    }
    void observe_candidate(const Event& e) {
        guard_divergence([&] { comparator_.push_candidate(e); });
    }

    bool check_sync() const {
        if (plan_.phase != MigrationPhase::Syncing) {
            return false;
        }
        return comparator_.in_sync(plan_.sync_window);
    }

    /// Idempotent; requires check_sync() to have held.
    void finalize() {
        if (plan_.phase == MigrationPhase::Switched) {
            return;
        }
        if (plan_.phase != MigrationPhase::Syncing || !check_sync()) {
            throw Error("finalize before sync");
        }
        hooks_.promote_candidate();
        transition(MigrationPhase::Switched);
    }

    /// Completes a migration whose stream ran dry before the sync window
    /// filled: with nothing unmatched on either side every produced output
    /// matched, which is the set-equality reading of "in sync". The caller
    /// must have verified state-hash equality first.
    void finalize_quiesced() {
        if (plan_.phase == MigrationPhase::Switched) {
            return;
        }
        if (plan_.phase != MigrationPhase::Syncing || comparator_.pending_original() > 0 ||
            comparator_.pending_candidate() > 0) {
            throw Error("finalize_quiesced with unmatched outputs or wrong phase");
        }
        hooks_.promote_candidate();
        transition(MigrationPhase::Switched);
    }

    /// Aborts toward the original replica; no-op once switched.
    void abort() {
        if (plan_.phase == MigrationPhase::Single || plan_.phase == MigrationPhase::Switched) {
            return;
        }
        rollback();
    }

    const MigrationPlan& plan() const { return plan_; }
    MigrationPhase phase() const { return plan_.phase; }
    std::uint64_t matched_outputs() const { return comparator_.matched(); }
    Counters& counters() { return counters_; }
    const Counters& counters() const { return counters_; }

    struct Transition {
        MigrationPhase from;
        MigrationPhase to;
    };
    const std::vector<Transition>& transitions() const { return transitions_; }

  private:
    std::string key() const {
        return std::to_string(plan_.op_id) + "/" + std::to_string(plan_.partition);
    }

    void transition(MigrationPhase to) {
        transitions_.push_back({plan_.phase, to});
        plan_.phase = to;
    }

    void rollback() {
        hooks_.destroy_candidate();
        comparator_ = OutputComparator{};
        transition(MigrationPhase::Single);
    }

    template <typename F>
    void guard_divergence(F&& f) {
        try {
            f();
            counters_.compared_outputs = comparator_.matched();
        } catch (const Divergence&) {
            rollback();
            throw;
        }
    }

    MigrationPlan plan_;
    MigrationHooks hooks_;
    OutputComparator comparator_;
    Counters counters_;
    std::vector<Transition> transitions_;
};

}  // namespace elstream

#endif  // ELSTREAM_MIGRATION_HPP_
