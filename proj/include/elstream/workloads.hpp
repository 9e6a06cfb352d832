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

#ifndef ELSTREAM_WORKLOADS_HPP_
#define ELSTREAM_WORKLOADS_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <map>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <elstream/bytes.hpp>
#include <elstream/event.hpp>
#include <elstream/operator_runtime.hpp>

namespace elstream {

/// One smart-plug load sample. Loads are fixed-point watts with two
/// decimal places, stored as integer hundredths, so all operator
/// arithmetic stays in integers and replica outputs are byte-stable.
/// Payload layout: plug_id (8B BE), load hundredths (8B BE), slot (4B BE).
struct PlugReading {
    std::uint64_t plug_id = 0;
    std::uint64_t load_hundredths = 0;
    std::uint32_t slot = 0;

    Bytes encode_payload() const {
        Bytes out;
        put_u64_be(out, plug_id);
        put_u64_be(out, load_hundredths);
        put_u32_be(out, slot);
        return out;
    }

    static PlugReading decode_payload(BytesView payload) {
        ByteReader in(payload);
        PlugReading r;
        r.plug_id = in.u64_be();
        r.load_hundredths = in.u64_be();
        r.slot = in.u32_be();
        return r;
    }

    Bytes partition_key() const {
        Bytes key;
        put_u64_be(key, plug_id);
        return key;
    }
};

struct AnomalyBurst {
    std::uint64_t plug_id = 0;
    std::uint64_t from_reading = 0;  // inclusive reading index
    std::uint64_t to_reading = 0;    // exclusive
    std::uint64_t factor = 10;
};

struct GeneratorConfig {
    SourceId source_id = 1;
    std::uint64_t seed = 1;
    std::uint64_t plugs = 5;
    std::uint64_t events = 500;  // total Data events emitted
    std::uint64_t plug_id_base = 0;
    std::uint64_t slots_per_day = 96;
    std::uint64_t watermark_interval = 10;
    std::uint64_t noise_permille = 100;  // +-10% of base by default
    std::vector<AnomalyBurst> anomalies;
};

/// Deterministic per (seed, config): per-plug sinusoidal diurnal base plus
/// seeded noise, scheduled anomaly bursts, watermarks every
/// watermark_interval readings and once more at stream end. Timestamps are
/// the 1-based event index, strictly increasing.
inline std::vector<Event> generate_plugs(const GeneratorConfig& cfg) {
    std::mt19937_64 rng(cfg.seed);
    std::vector<Event> out;
    out.reserve(cfg.events + cfg.events / std::max<std::uint64_t>(1, cfg.watermark_interval) + 2);
    Timestamp ts = 0;
    for (std::uint64_t n = 0; n < cfg.events; ++n) {
        std::uint64_t plug_index = n % cfg.plugs;
        std::uint64_t reading_index = n / cfg.plugs;
        std::uint64_t slot = reading_index % cfg.slots_per_day;
        std::uint64_t base = 5000 + plug_index * 1000;  // hundredths of a watt
        double phase = 2.0 * std::numbers::pi * static_cast<double>(slot) /
                       static_cast<double>(cfg.slots_per_day);
        auto load = static_cast<std::int64_t>(
            std::llround(static_cast<double>(base) * (1.0 + 0.3 * std::sin(phase))));
        std::int64_t amp =
            static_cast<std::int64_t>(base * cfg.noise_permille / 1000);
        load += std::uniform_int_distribution<std::int64_t>(-amp, amp)(rng);
        if (load < 0) load = 0;
        std::uint64_t plug_id = cfg.plug_id_base + plug_index;
        for (const auto& burst : cfg.anomalies) {
            if (burst.plug_id == plug_id && reading_index >= burst.from_reading &&
                reading_index < burst.to_reading) {
                load *= static_cast<std::int64_t>(burst.factor);
            }
        }
        PlugReading reading{plug_id, static_cast<std::uint64_t>(load),
                            static_cast<std::uint32_t>(slot)};
        ++ts;
        out.push_back(
            Event::data(cfg.source_id, ts, reading.partition_key(), reading.encode_payload()));
        if (cfg.watermark_interval > 0 && (n + 1) % cfg.watermark_interval == 0) {
            out.push_back(Event::watermark(cfg.source_id, ts));
        }
    }
    if (ts > 0 && (out.empty() || out.back().kind != EventKind::Watermark)) {
        out.push_back(Event::watermark(cfg.source_id, ts));
    }
    return out;
}

namespace detail {

inline std::uint64_t div_half_up(std::uint64_t numerator, std::uint64_t denominator) {
    return (numerator + denominator / 2) / denominator;
}

inline std::uint64_t median_half_up(std::vector<std::uint64_t> values) {
    std::sort(values.begin(), values.end());
    std::size_t n = values.size();
    if (n % 2 == 1) return values[n / 2];
    return (values[n / 2 - 1] + values[n / 2] + 1) / 2;
}

inline std::string page_key(std::uint64_t plug_id, std::uint64_t slot) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "h/%016llx/%08llx", static_cast<unsigned long long>(plug_id),
                  static_cast<unsigned long long>(slot));
    return std::string(buf);
}

}  // namespace detail

/// Sliding-window consumption forecast. On completing a window of W
/// readings for a plug: avg = round-half-up mean of the window, hist =
/// median of past window averages stored for the same slot-of-day (empty
/// history defaults to avg), forecast = (avg + hist) / 2 half-up. The
/// per-(plug, slot) history lives in the attached pager, which is the
/// state that grows with time and exercises the paging budget.
/// Not commutative: the history medians depend on delivery order.
class ForecastLogic final : public OperatorLogic {
  public:
    std::string logic_id() const override { return "forecast"; }

    void configure(const std::map<std::string, std::string>& params) override {
        if (auto it = params.find("window"); it != params.end()) window_ = std::stoull(it->second);
        if (auto it = params.find("slots"); it != params.end()) slots_ = std::stoull(it->second);
        if (window_ == 0 || slots_ == 0) {
            throw ConfigError("forecast window and slots must be positive");
        }
    }

    void attach_pager(StatePager* pager) override { pager_ = pager; }

    std::vector<Emit> on_event(const Event& e) override {
        PlugReading reading = PlugReading::decode_payload(e.payload);
        auto& ring = rings_[reading.plug_id];
        ring.push_back(reading.load_hundredths);
        if (ring.size() < window_) {
            return {};
        }
        std::uint64_t sum = 0;
        for (std::uint64_t v : ring) sum += v;
        std::uint64_t avg = detail::div_half_up(sum, window_);
        ring.clear();

        std::uint64_t slot = reading.slot % slots_;
        std::string key = detail::page_key(reading.plug_id, slot);
        std::vector<std::uint64_t> history = load_history(key);
        std::uint64_t hist = history.empty() ? avg : detail::median_half_up(history);
        std::uint64_t forecast = (avg + hist + 1) / 2;
        history.push_back(avg);
        store_history(key, history);

        PlugReading emitted{reading.plug_id, forecast, reading.slot};
        return {Emit{emitted.partition_key(), emitted.encode_payload()}};
    }

    Bytes serialize_state() const override {
        Bytes out;
        put_u32_be(out, static_cast<std::uint32_t>(rings_.size()));
        for (const auto& [plug, ring] : rings_) {
            put_u64_be(out, plug);
            put_u32_be(out, static_cast<std::uint32_t>(ring.size()));
            for (std::uint64_t v : ring) put_u64_be(out, v);
        }
        std::vector<std::string> keys = pager_->keys();
        put_u32_be(out, static_cast<std::uint32_t>(keys.size()));
        for (const auto& key : keys) {
            put_u16_be(out, static_cast<std::uint16_t>(key.size()));
            Bytes kb = to_bytes(key);
            out.insert(out.end(), kb.begin(), kb.end());
            Bytes page = *pager_->load(key);
            put_u32_be(out, static_cast<std::uint32_t>(page.size()));
            out.insert(out.end(), page.begin(), page.end());
        }
        return out;
    }

    void restore_state(BytesView bytes) override {
        ByteReader in(bytes);
        rings_.clear();
        std::uint32_t ring_count = in.u32_be();
        for (std::uint32_t i = 0; i < ring_count; ++i) {
            std::uint64_t plug = in.u64_be();
            std::uint32_t len = in.u32_be();
            auto& ring = rings_[plug];
            for (std::uint32_t j = 0; j < len; ++j) ring.push_back(in.u64_be());
        }
        pager_->clear();
        std::uint32_t page_count = in.u32_be();
        for (std::uint32_t i = 0; i < page_count; ++i) {
            std::string key = to_string(in.take(in.u16_be()));
            pager_->store(key, in.take(in.u32_be()));
        }
    }

  private:
    std::vector<std::uint64_t> load_history(const std::string& key) const {
        std::vector<std::uint64_t> out;
        auto page = pager_->load(key);
        if (!page) return out;
        ByteReader in(*page);
        std::uint32_t count = in.u32_be();
        out.reserve(count);
        for (std::uint32_t i = 0; i < count; ++i) out.push_back(in.u64_be());
        return out;
    }

    void store_history(const std::string& key, const std::vector<std::uint64_t>& history) {
        Bytes page;
        put_u32_be(page, static_cast<std::uint32_t>(history.size()));
        for (std::uint64_t v : history) put_u64_be(page, v);
        pager_->store(key, std::move(page));
    }

    std::uint64_t window_ = 4;
    std::uint64_t slots_ = 96;
    std::map<std::uint64_t, std::vector<std::uint64_t>> rings_;
    StatePager* pager_ = nullptr;
};

/// Excessive-consumption detector: an alarm fires after d consecutive
/// readings whose load exceeds k times the moving average of the previous
/// M readings. The average is undefined until M readings have been seen.
class AnomalyLogic final : public OperatorLogic {
  public:
    std::string logic_id() const override { return "anomaly"; }

    void configure(const std::map<std::string, std::string>& params) override {
        if (auto it = params.find("k"); it != params.end()) k_ = std::stoull(it->second);
        if (auto it = params.find("d"); it != params.end()) d_ = std::stoull(it->second);
        if (auto it = params.find("M"); it != params.end()) m_ = std::stoull(it->second);
        if (k_ == 0 || d_ == 0 || m_ == 0) {
            throw ConfigError("anomaly k, d, M must be positive");
        }
    }

    std::vector<Emit> on_event(const Event& e) override {
        PlugReading reading = PlugReading::decode_payload(e.payload);
        auto& st = plugs_[reading.plug_id];
        std::vector<Emit> out;
        if (st.window.size() == m_) {
            // load > k * avg, compared exactly: load * M > k * sum.
            bool excess = reading.load_hundredths * m_ > k_ * st.sum;
            if (excess) {
                if (++st.counter == d_) {
                    PlugReading alarm{reading.plug_id, reading.load_hundredths, reading.slot};
                    out.push_back(Emit{alarm.partition_key(), alarm.encode_payload()});
                    st.counter = 0;
                }
            } else {
                st.counter = 0;
            }
        }
        st.window.push_back(reading.load_hundredths);
        st.sum += reading.load_hundredths;
        if (st.window.size() > m_) {
            st.sum -= st.window.front();
            st.window.pop_front();
        }
        return out;
    }

    Bytes serialize_state() const override {
        Bytes out;
        put_u32_be(out, static_cast<std::uint32_t>(plugs_.size()));
        for (const auto& [plug, st] : plugs_) {
            put_u64_be(out, plug);
            put_u64_be(out, st.counter);
            put_u32_be(out, static_cast<std::uint32_t>(st.window.size()));
            for (std::uint64_t v : st.window) put_u64_be(out, v);
        }
        return out;
    }

    void restore_state(BytesView bytes) override {
        ByteReader in(bytes);
        plugs_.clear();
        std::uint32_t count = in.u32_be();
        for (std::uint32_t i = 0; i < count; ++i) {
            std::uint64_t plug = in.u64_be();
            auto& st = plugs_[plug];
            st.counter = in.u64_be();
            std::uint32_t len = in.u32_be();
            for (std::uint32_t j = 0; j < len; ++j) {
                std::uint64_t v = in.u64_be();
                st.window.push_back(v);
                st.sum += v;
            }
        }
    }

  private:
    struct PlugState {
        std::deque<std::uint64_t> window;
        std::uint64_t sum = 0;
        std::uint64_t counter = 0;
    };

    std::uint64_t k_ = 3;
    std::uint64_t d_ = 5;
    std::uint64_t m_ = 20;
    std::map<std::uint64_t, PlugState> plugs_;
};

/// Per-plug running sum; emits nothing. A commutative fold, the test
/// subject for relaxed delivery.
class RunningSumLogic final : public OperatorLogic {
  public:
    std::string logic_id() const override { return "running_sum"; }

    std::vector<Emit> on_event(const Event& e) override {
        PlugReading reading = PlugReading::decode_payload(e.payload);
        sums_[reading.plug_id] += reading.load_hundredths;
        return {};
    }

    Bytes serialize_state() const override {
        Bytes out;
        put_u32_be(out, static_cast<std::uint32_t>(sums_.size()));
        for (const auto& [plug, sum] : sums_) {
            put_u64_be(out, plug);
            put_u64_be(out, sum);
        }
        return out;
    }

    void restore_state(BytesView bytes) override {
        ByteReader in(bytes);
        sums_.clear();
        std::uint32_t count = in.u32_be();
        for (std::uint32_t i = 0; i < count; ++i) {
            std::uint64_t plug = in.u64_be();
            sums_[plug] = in.u64_be();
        }
    }

    std::uint64_t sum_for(std::uint64_t plug) const {
        auto it = sums_.find(plug);
        return it == sums_.end() ? 0 : it->second;
    }

  private:
    std::map<std::uint64_t, std::uint64_t> sums_;
};

/// Negative control: emits its replica-local instance tag in the payload,
/// so two replicas disagree on output bytes and the sync check must raise
/// Divergence. Never use outside tests.
class UnstableLogic final : public OperatorLogic {
  public:
    std::string logic_id() const override { return "unstable"; }

    void set_instance_tag(std::uint64_t tag) { tag_ = tag; }

    std::vector<Emit> on_event(const Event& e) override {
        Bytes payload = e.payload;
        put_u64_be(payload, tag_);
        return {Emit{e.key, std::move(payload)}};
    }

    Bytes serialize_state() const override { return {}; }
    void restore_state(BytesView) override {}

  private:
    std::uint64_t tag_ = 0;
};

inline void register_builtin_logics() {
    auto& reg = LogicRegistry::instance();
    reg.register_logic("forecast", [] { return std::make_unique<ForecastLogic>(); });
    reg.register_logic("anomaly", [] { return std::make_unique<AnomalyLogic>(); });
    reg.register_logic("running_sum", [] { return std::make_unique<RunningSumLogic>(); });
    reg.register_logic("unstable", [] { return std::make_unique<UnstableLogic>(); });
}

}  // namespace elstream

#endif  // ELSTREAM_WORKLOADS_HPP_
