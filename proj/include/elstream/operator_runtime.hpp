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

#ifndef ELSTREAM_OPERATOR_RUNTIME_HPP_
#define ELSTREAM_OPERATOR_RUNTIME_HPP_

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <elstream/bytes.hpp>
#include <elstream/crypto.hpp>
#include <elstream/errors.hpp>
#include <elstream/event.hpp>

namespace elstream {

/// Keyed byte-page storage an operator logic may use for state that should
/// live under the enclave's paging regime. The default backend is a plain
/// map; enclave mode swaps in a budgeted store with sealed eviction.
class StatePager {
  public:
    virtual ~StatePager() = default;
    virtual std::optional<Bytes> load(const std::string& key) = 0;
    virtual void store(const std::string& key, Bytes page) = 0;
    /// All page keys, ascending; serialization iterates this order.
    virtual std::vector<std::string> keys() const = 0;
    virtual void clear() = 0;
};

class MapPager final : public StatePager {
  public:
    std::optional<Bytes> load(const std::string& key) override {
        auto it = pages_.find(key);
        if (it == pages_.end()) return std::nullopt;
        return it->second;
    }
    void store(const std::string& key, Bytes page) override { pages_[key] = std::move(page); }
    std::vector<std::string> keys() const override {
        std::vector<std::string> out;
        out.reserve(pages_.size());
        for (const auto& [k, v] : pages_) out.push_back(k);
        return out;
    }
    void clear() override { pages_.clear(); }

  private:
    std::map<std::string, Bytes> pages_;
};

/// One output tuple produced by a logic; the runtime assigns source and
/// timestamp so replica outputs are a pure function of ordered input.
struct Emit {
    Bytes key;
    Bytes payload;
};

/// Deterministic fold over ordered input. Logics are pure: no I/O, no
/// wall-clock, no randomness. State must round-trip through
/// serialize_state/restore_state exactly.
class OperatorLogic {
  public:
    virtual ~OperatorLogic() = default;

    virtual std::string logic_id() const = 0;
    virtual void configure(const std::map<std::string, std::string>& params) {}

    /// Optional replica-local tag, set by the runtime. A correct logic
    /// ignores it; the shipped non-deterministic test logic does not.
    virtual void set_instance_tag(std::uint64_t) {}

    /// Pager for large state; attached before the first event or restore.
    virtual void attach_pager(StatePager*) {}

    virtual std::vector<Emit> on_event(const Event& e) = 0;

    virtual Bytes serialize_state() const = 0;
    virtual void restore_state(BytesView bytes) = 0;
};

using LogicFactory = std::function<std::unique_ptr<OperatorLogic>()>;

class LogicRegistry {
  public:
    static LogicRegistry& instance() {
        static LogicRegistry registry;
        return registry;
    }

    void register_logic(const std::string& logic_id, LogicFactory factory) {
        factories_[logic_id] = std::move(factory);
    }

    bool known(const std::string& logic_id) const { return factories_.contains(logic_id); }

    std::unique_ptr<OperatorLogic> create(const std::string& logic_id) const {
        auto it = factories_.find(logic_id);
        if (it == factories_.end()) {
            throw VersionMismatch("unknown logic_id '" + logic_id + "'");
        }
        return it->second();
    }

  private:
    std::map<std::string, LogicFactory> factories_;
};

struct OperatorDescriptor {
    std::uint64_t op_id = 0;
    std::string name;
    bool commutative = false;
    std::uint32_t parallelism = 1;
    std::string logic_id;
    std::map<std::string, std::string> params;
};

/// (input_ts << fanout_bits) + (out_seq mod 2^fanout_bits). Strictly
/// increasing when inputs are consumed in total order and per-input
/// emission counts stay below 2^fanout_bits.
inline Timestamp output_timestamp(Timestamp input_ts, std::uint64_t out_seq,
                                  unsigned fanout_bits = 16) {
    const std::uint64_t mask = (1ull << fanout_bits) - 1;
    return (input_ts << fanout_bits) + (out_seq & mask);
}

/// Replica-independent output stream id for an operator partition; both
/// replicas of a partition emit under the same id, which is what lets the
/// downstream timestamp vector absorb the overlap during migration.
inline SourceId operator_output_source(std::uint64_t op_id, std::uint32_t partition) {
    return (1ull << 63) | (op_id << 20) | partition;
}

inline constexpr std::uint8_t kUserStateFormatVersion = 1;

namespace detail {
inline Bytes wrap_user_state(const std::string& logic_id, BytesView payload) {
    Bytes out;
    put_u16_be(out, static_cast<std::uint16_t>(logic_id.size()));
    Bytes id = to_bytes(logic_id);
    out.insert(out.end(), id.begin(), id.end());
    out.push_back(kUserStateFormatVersion);
    out.insert(out.end(), payload.begin(), payload.end());
    return out;
}

inline Bytes unwrap_user_state(BytesView wrapped, const std::string& expected_logic_id) {
    ByteReader in(wrapped);
    std::string logic_id;
    try {
        logic_id = to_string(in.take(in.u16_be()));
        std::uint8_t version = in.u8();
        if (version != kUserStateFormatVersion) {
            throw VersionMismatch("user_state format version " + std::to_string(version));
        }
    } catch (const SerializationFailure&) {
        throw VersionMismatch("malformed user_state envelope");
    }
    if (logic_id != expected_logic_id) {
        throw VersionMismatch("snapshot logic '" + logic_id + "' vs '" + expected_logic_id + "'");
    }
    return in.take(in.remaining());
}
}  // namespace detail

/// Self-contained serialized partition state. File layout, bit-exact:
/// magic "SM3G", version byte, op_id (8B), partition (4B), out_seq (8B),
/// timestamp vector (count + pairs), user_state length-prefixed, then a
/// 32-byte SHA-256 over all preceding bytes.
struct StateSnapshot {
    std::uint64_t op_id = 0;
    std::uint32_t partition_index = 0;
    std::uint64_t out_seq = 0;
    TimestampVector tv;
    Bytes user_state;  // envelope: logic_id + format version + logic payload
    Digest256 state_hash{};

    static constexpr std::uint8_t kVersion = 1;

    Bytes header_bytes() const {
        Bytes out{'S', 'M', '3', 'G', kVersion};
        put_u64_be(out, op_id);
        put_u32_be(out, partition_index);
        put_u64_be(out, out_seq);
        return out;
    }

    Bytes encode() const {
        Bytes out = header_bytes();
        tv.encode_into(out);
        put_u32_be(out, static_cast<std::uint32_t>(user_state.size()));
        out.insert(out.end(), user_state.begin(), user_state.end());
        Digest256 h = sha256(out);
        out.insert(out.end(), h.begin(), h.end());
        return out;
    }

    static StateSnapshot decode(BytesView bytes) {
        if (bytes.size() < 32) {
            throw SerializationFailure("snapshot too short");
        }
        BytesView body(bytes.data(), bytes.size() - 32);
        Digest256 expected = sha256(body);
        if (!std::equal(expected.begin(), expected.end(), bytes.end() - 32)) {
            throw HashMismatch("snapshot hash does not verify");
        }
        ByteReader in(body);
        Bytes magic = in.take(4);
        if (magic != Bytes{'S', 'M', '3', 'G'}) {
            throw SerializationFailure("bad snapshot magic");
        }
        if (in.u8() != kVersion) {
            throw VersionMismatch("unsupported snapshot version");
        }
        StateSnapshot s;
        s.op_id = in.u64_be();
        s.partition_index = in.u32_be();
        s.out_seq = in.u64_be();
        s.tv = TimestampVector::decode(in);
        s.user_state = in.take(in.u32_be());
        if (!in.done()) {
            throw SerializationFailure("trailing bytes in snapshot");
        }
        s.state_hash = expected;
        return s;
    }
};

/// A key partition of a stateful operator: the logic instance plus the
/// exactly-once accounting around it. Single-threaded by contract — one
/// delivery loop owns each instance.
class Partition {
  public:
    Partition(const OperatorDescriptor& desc, std::uint32_t partition_index,
              std::unique_ptr<OperatorLogic> logic, StatePager* pager = nullptr,
              unsigned fanout_bits = 16)
        : op_id_(desc.op_id),
          partition_index_(partition_index),
          logic_id_(desc.logic_id),
          out_source_(operator_output_source(desc.op_id, partition_index)),
          fanout_bits_(fanout_bits),
          logic_(std::move(logic)),
          pager_(pager ? pager : &default_pager_) {
        logic_->configure(desc.params);
        logic_->attach_pager(pager_);
    }

    /// Applies one non-duplicate Data event in delivery order. Returns the
    /// deterministic emissions. The caller must have dropped duplicates
    /// (is_duplicate on tv) before invoking.
    std::vector<Event> process(const Event& e) {
        if (tv_.is_duplicate(e)) {
            throw LogicFailure("process called with a duplicate event");
        }
        std::vector<Emit> emits;
        try {
            emits = logic_->on_event(e);
        } catch (const Error&) {
            throw;
        } catch (const std::exception& ex) {
            throw LogicFailure(std::string("operator logic raised: ") + ex.what());
        }
        const std::uint64_t limit = 1ull << fanout_bits_;
        if (emits.size() >= limit) {
            throw FanoutOverflow(std::to_string(emits.size()) + " emissions for one input");
        }
        tv_.advance(e.source, e.ts);
        std::vector<Event> out;
        out.reserve(emits.size());
        for (auto& em : emits) {
            Timestamp ts = output_timestamp(e.ts, out_seq_, fanout_bits_);
            out.push_back(Event::data(out_source_, ts, std::move(em.key), std::move(em.payload)));
            ++out_seq_;
        }
        return out;
    }

    StateSnapshot snapshot() const {
        StateSnapshot s;
        s.op_id = op_id_;
        s.partition_index = partition_index_;
        s.out_seq = out_seq_;
        s.tv = tv_;
        Bytes payload;
        try {
            payload = logic_->serialize_state();
        } catch (const std::exception& ex) {
            throw SerializationFailure(std::string("logic state: ") + ex.what());
        }
        s.user_state = detail::wrap_user_state(logic_id_, payload);
        // Recompute through encode so state_hash matches the file layout.
        return StateSnapshot::decode(s.encode());
    }

    /// Overwrites this partition's state from a verified snapshot.
    void restore(const StateSnapshot& s) {
        if (s.op_id != op_id_ || s.partition_index != partition_index_) {
            throw SnapshotFailure("snapshot for op " + std::to_string(s.op_id) + "/" +
                                  std::to_string(s.partition_index) + " applied to " +
                                  std::to_string(op_id_) + "/" +
                                  std::to_string(partition_index_));
        }
        Bytes payload = detail::unwrap_user_state(s.user_state, logic_id_);
        logic_->restore_state(payload);
        tv_ = s.tv;
        out_seq_ = s.out_seq;
    }

    Digest256 state_hash() const { return snapshot().state_hash; }

    const TimestampVector& tv() const { return tv_; }
    std::uint64_t out_seq() const { return out_seq_; }
    std::uint64_t op_id() const { return op_id_; }
    std::uint32_t partition_index() const { return partition_index_; }
    SourceId out_source() const { return out_source_; }
    unsigned fanout_bits() const { return fanout_bits_; }
    OperatorLogic& logic() { return *logic_; }

  private:
    std::uint64_t op_id_;
    std::uint32_t partition_index_;
    std::string logic_id_;
    SourceId out_source_;
    unsigned fanout_bits_;
    std::unique_ptr<OperatorLogic> logic_;
    MapPager default_pager_;
    StatePager* pager_;
    TimestampVector tv_;
    std::uint64_t out_seq_ = 0;
};

/// Measurement of an operator's code identity: logic id plus configured
/// params, hashed. Attestation is equality against the expected value.
inline Digest256 measure_logic(const std::string& logic_id,
                               const std::map<std::string, std::string>& params) {
    std::string input = logic_id;
    for (const auto& [k, v] : params) {
        input += '\x1f' + k + '\x1e' + v;
    }
    return sha256(input);
}

}  // namespace elstream

#endif  // ELSTREAM_OPERATOR_RUNTIME_HPP_
