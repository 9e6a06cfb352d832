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

#ifndef ELSTREAM_EVENT_HPP_
#define ELSTREAM_EVENT_HPP_

#include <cstdint>
#include <map>
#include <vector>

#include <elstream/bytes.hpp>
#include <elstream/errors.hpp>

namespace elstream {

/// Stable per-producer identifier. Never reused within a run.
using SourceId = std::uint64_t;

/// Logical time; strictly increasing along any single source's Data output.
using Timestamp = std::uint64_t;

enum class EventKind : std::uint8_t { Data = 0, Watermark = 1 };

/// Timestamped, keyed tuple flowing between operators. Watermark events
/// carry empty key/payload and promise no future Data event from the same
/// source with ts <= the watermark ts.
struct Event {
    SourceId source = 0;
    Timestamp ts = 0;
    EventKind kind = EventKind::Data;
    Bytes key;
    Bytes payload;

    static Event data(SourceId source, Timestamp ts, Bytes key, Bytes payload) {
        return Event{source, ts, EventKind::Data, std::move(key), std::move(payload)};
    }

    static Event watermark(SourceId source, Timestamp ts) {
        return Event{source, ts, EventKind::Watermark, {}, {}};
    }

    bool operator==(const Event&) const = default;
};

/// Canonical binary encoding, bit-exact: source (8B BE), ts (8B BE),
/// kind (1B), key length (4B BE) + key, payload length (4B BE) + payload.
inline void encode_event_into(Bytes& out, const Event& e) {
    put_u64_be(out, e.source);
    put_u64_be(out, e.ts);
    out.push_back(static_cast<std::uint8_t>(e.kind));
    put_u32_be(out, static_cast<std::uint32_t>(e.key.size()));
    out.insert(out.end(), e.key.begin(), e.key.end());
    put_u32_be(out, static_cast<std::uint32_t>(e.payload.size()));
    out.insert(out.end(), e.payload.begin(), e.payload.end());
}

inline Bytes encode_event(const Event& e) {
    Bytes out;
    out.reserve(25 + e.key.size() + e.payload.size());
    encode_event_into(out, e);
    return out;
}

inline Event decode_event(ByteReader& in) {
    Event e;
    e.source = in.u64_be();
    e.ts = in.u64_be();
    std::uint8_t kind = in.u8();
    if (kind > 1) {
        throw SerializationFailure("bad event kind byte");
    }
    e.kind = static_cast<EventKind>(kind);
    e.key = in.take(in.u32_be());
    e.payload = in.take(in.u32_be());
    return e;
}

inline Event decode_event(BytesView bytes) {
    ByteReader in(bytes);
    Event e = decode_event(in);
    if (!in.done()) {
        throw SerializationFailure("trailing bytes after event");
    }
    return e;
}

/// Per-source high-water marks of timestamps already incorporated into a
/// state; the duplicate filter. Absent source reads as timestamp 0.
class TimestampVector {
  public:
    TimestampVector() = default;

    Timestamp high_water(SourceId source) const {
        auto it = entries_.find(source);
        return it == entries_.end() ? 0 : it->second;
    }

    /// entries[source] = max(entries[source], ts); other entries unchanged.
    void advance(SourceId source, Timestamp ts) {
        auto& slot = entries_[source];
        if (ts > slot) {
            slot = ts;
        }
    }

    /// True iff e.ts <= high_water(e.source). Only meaningful for Data events.
    bool is_duplicate(const Event& e) const { return e.ts <= high_water(e.source); }

    /// Pointwise maximum over the union of sources.
    void merge(const TimestampVector& other) {
        for (const auto& [source, ts] : other.entries_) {
            advance(source, ts);
        }
    }

    static TimestampVector merged(const TimestampVector& a, const TimestampVector& b) {
        TimestampVector out = a;
        out.merge(b);
        return out;
    }

    const std::map<SourceId, Timestamp>& entries() const { return entries_; }
    bool empty() const { return entries_.empty(); }

    bool operator==(const TimestampVector&) const = default;

    /// count (4B BE) + (source, ts) pairs, 8+8 bytes each, big-endian,
    /// in ascending source order.
    void encode_into(Bytes& out) const {
        put_u32_be(out, static_cast<std::uint32_t>(entries_.size()));
        for (const auto& [source, ts] : entries_) {
            put_u64_be(out, source);
            put_u64_be(out, ts);
        }
    }

    static TimestampVector decode(ByteReader& in) {
        TimestampVector tv;
        std::uint32_t count = in.u32_be();
        for (std::uint32_t i = 0; i < count; ++i) {
            SourceId source = in.u64_be();
            Timestamp ts = in.u64_be();
            tv.entries_[source] = ts;
        }
        return tv;
    }

  private:
    std::map<SourceId, Timestamp> entries_;
};

}  // namespace elstream

#endif  // ELSTREAM_EVENT_HPP_
