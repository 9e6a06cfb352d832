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

#ifndef ELSTREAM_ORDERING_HPP_
#define ELSTREAM_ORDERING_HPP_

#include <algorithm>
#include <cstdint>
#include <deque>
#include <map>
#include <set>
#include <vector>

#include <elstream/errors.hpp>
#include <elstream/event.hpp>

namespace elstream {

/// Deterministic merge of multiple input channels into one totally ordered
/// sequence per operator partition. Data events are buffered per source in
/// arrival (= timestamp) order; an event is released only once every
/// expected source's watermark has reached its timestamp. The total order
/// key is (ts, source id, per-source arrival index), ascending.
class MergeBuffer {
  public:
    explicit MergeBuffer(std::set<SourceId> expected_sources)
        : expected_(std::move(expected_sources)) {}

    /// Data events are enqueued on their source queue; watermarks raise
    /// watermarks[source] to max(old, new). Throws UnknownSource for a
    /// source outside the expected set and MonotonicityViolation when a
    /// Data event's ts is not strictly greater than the last Data ts seen
    /// from the same source.
    void ingest(const Event& e) {
        if (!expected_.contains(e.source)) {
            throw UnknownSource("source " + std::to_string(e.source) + " not expected");
        }
        if (e.kind == EventKind::Watermark) {
            auto& wm = watermarks_[e.source];
            if (e.ts > wm) {
                wm = e.ts;
            }
            return;
        }
        auto last = last_data_ts_.find(e.source);
        if (last != last_data_ts_.end() && e.ts <= last->second) {
            throw MonotonicityViolation("source " + std::to_string(e.source) + " ts " +
                                        std::to_string(e.ts) + " after " +
                                        std::to_string(last->second));
        }
        last_data_ts_[e.source] = e.ts;
        queues_[e.source].push_back(Buffered{e, arrival_counter_++, per_source_index_[e.source]++});
    }

    /// min over expected sources of watermarks[s], absent source = 0.
    Timestamp low_watermark() const {
        Timestamp lw = UINT64_MAX;
        for (SourceId s : expected_) {
            auto it = watermarks_.find(s);
            Timestamp wm = it == watermarks_.end() ? 0 : it->second;
            lw = std::min(lw, wm);
        }
        return expected_.empty() ? 0 : lw;
    }

    /// Releases, in total order, every buffered Data event with
    /// ts <= low_watermark(). Released events are removed.
    std::vector<Event> drain() {
        Timestamp lw = low_watermark();
        std::vector<Buffered> ready;
        for (auto& [source, queue] : queues_) {
            while (!queue.empty() && queue.front().event.ts <= lw) {
                ready.push_back(std::move(queue.front()));
                queue.pop_front();
            }
        }
        std::sort(ready.begin(), ready.end(), [](const Buffered& a, const Buffered& b) {
            if (a.event.ts != b.event.ts) return a.event.ts < b.event.ts;
            if (a.event.source != b.event.source) return a.event.source < b.event.source;
            return a.source_index < b.source_index;
        });
        std::vector<Event> out;
        out.reserve(ready.size());
        for (auto& b : ready) {
            out.push_back(std::move(b.event));
        }
        return out;
    }

    /// Relaxed mode for commutative consumers: releases all buffered Data
    /// events immediately, in arrival order, bypassing the watermark wait.
    std::vector<Event> drain_relaxed() {
        std::vector<Buffered> ready;
        for (auto& [source, queue] : queues_) {
            for (auto& b : queue) {
                ready.push_back(std::move(b));
            }
            queue.clear();
        }
        std::sort(ready.begin(), ready.end(),
                  [](const Buffered& a, const Buffered& b) { return a.arrival < b.arrival; });
        std::vector<Event> out;
        out.reserve(ready.size());
        for (auto& b : ready) {
            out.push_back(std::move(b.event));
        }
        return out;
    }

    /// Removes buffered events already covered by the given vector
    /// (ts <= tv entry for their source). Used after a snapshot restore to
    /// discard obsolete copies. Returns the number of dropped events.
    std::uint64_t purge_duplicates(const TimestampVector& tv) {
        std::uint64_t dropped = 0;
        for (auto& [source, queue] : queues_) {
            Timestamp floor = tv.high_water(source);
            while (!queue.empty() && queue.front().event.ts <= floor) {
                queue.pop_front();
                ++dropped;
            }
        }
        return dropped;
    }

    std::size_t buffered() const {
        std::size_t n = 0;
        for (const auto& [source, queue] : queues_) {
            n += queue.size();
        }
        return n;
    }

    Timestamp watermark(SourceId source) const {
        auto it = watermarks_.find(source);
        return it == watermarks_.end() ? 0 : it->second;
    }

    const std::set<SourceId>& expected_sources() const { return expected_; }

  private:
    struct Buffered {
        Event event;
        std::uint64_t arrival;       // global arrival index, for relaxed order
        std::uint64_t source_index;  // per-source arrival index, for tie-break
    };

    std::set<SourceId> expected_;
    std::map<SourceId, std::deque<Buffered>> queues_;
    std::map<SourceId, Timestamp> watermarks_;
    std::map<SourceId, Timestamp> last_data_ts_;
    std::map<SourceId, std::uint64_t> per_source_index_;
    std::uint64_t arrival_counter_ = 0;
};

/// Duplicate filter placed in front of a consumer. Accepts each distinct
/// (source, ts) Data event once; watermarks always pass (the merge buffer's
/// max rule makes repeats harmless). Accepting advances the vector, so
/// replicated upstream streams collapse to one.
class DedupGate {
  public:
    /// Returns true if the event should be delivered, false if dropped.
    bool accept(const Event& e) {
        if (e.kind == EventKind::Watermark) {
            return true;
        }
        if (tv_.is_duplicate(e)) {
            ++dropped_;
            return false;
        }
        tv_.advance(e.source, e.ts);
        return true;
    }

    /// Raises the floor from a restored snapshot's vector.
    void merge_floor(const TimestampVector& tv) { tv_.merge(tv); }

    const TimestampVector& vector() const { return tv_; }
    std::uint64_t dropped() const { return dropped_; }

  private:
    TimestampVector tv_;
    std::uint64_t dropped_ = 0;
};

}  // namespace elstream

#endif  // ELSTREAM_ORDERING_HPP_
