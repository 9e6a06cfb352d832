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

#include <algorithm>
#include <random>

#include <doctest.h>

#include <elstream/ordering.hpp>
#include <elstream/workloads.hpp>

using namespace elstream;

namespace {

Event reading(SourceId s, Timestamp ts, std::uint64_t plug, std::uint64_t load,
              std::uint32_t slot = 0) {
    PlugReading r{plug, load, slot};
    return Event::data(s, ts, r.partition_key(), r.encode_payload());
}

std::uint64_t emitted_load(const Emit& e) {
    return PlugReading::decode_payload(e.payload).load_hundredths;
}

}  // namespace

TEST_CASE("plug reading payload layout round-trips") {
    PlugReading r{7, 123456, 42};
    Bytes payload = r.encode_payload();
    CHECK(payload.size() == 20);
    PlugReading back = PlugReading::decode_payload(payload);
    CHECK(back.plug_id == 7);
    CHECK(back.load_hundredths == 123456);
    CHECK(back.slot == 42);
}

TEST_CASE("rounding helpers round half up") {
    CHECK(detail::div_half_up(5, 2) == 3);
    CHECK(detail::div_half_up(4, 2) == 2);
    CHECK(detail::median_half_up({300}) == 300);
    CHECK(detail::median_half_up({200, 300}) == 250);
    CHECK(detail::median_half_up({200, 301}) == 251);  // half up on odd sums
    CHECK(detail::median_half_up({100, 200, 900}) == 200);
}

TEST_CASE("forecast: first full window with empty history echoes the mean") {
    ForecastLogic logic;
    logic.configure({{"window", "4"}, {"slots", "96"}});
    MapPager pager;
    logic.attach_pager(&pager);

    // Loads 2.00, 4.00, 6.00, 8.00: mean 5.00, history empty -> forecast 5.00.
    Timestamp ts = 0;
    std::vector<Emit> out;
    for (std::uint64_t load : {200u, 400u, 600u, 800u}) {
        out = logic.on_event(reading(1, ++ts, 7, load, 3));
        if (ts < 4) CHECK(out.empty());  // window incomplete
    }
    REQUIRE(out.size() == 1);
    CHECK(emitted_load(out[0]) == 500);
}

TEST_CASE("forecast: stored history median averages into the forecast") {
    ForecastLogic logic;
    logic.configure({{"window", "4"}, {"slots", "96"}});
    MapPager pager;
    logic.attach_pager(&pager);

    // Seed slot 3's history with a single window average of 3.00.
    Bytes page;
    put_u32_be(page, 1);
    put_u64_be(page, 300);
    pager.store(detail::page_key(7, 3), std::move(page));

    Timestamp ts = 0;
    std::vector<Emit> out;
    for (std::uint64_t load : {200u, 400u, 600u, 800u}) {
        out = logic.on_event(reading(1, ++ts, 7, load, 3));
    }
    REQUIRE(out.size() == 1);
    CHECK(emitted_load(out[0]) == 400);  // (5.00 + 3.00) / 2
}

TEST_CASE("forecast state round-trips through serialize/restore") {
    auto make = [](StatePager* pager) {
        auto logic = std::make_unique<ForecastLogic>();
        logic->configure({{"window", "4"}, {"slots", "8"}});
        logic->attach_pager(pager);
        return logic;
    };
    MapPager pa, pb;
    auto a = make(&pa);
    std::mt19937_64 rng(6);
    Timestamp ts = 0;
    for (int i = 0; i < 57; ++i) {
        a->on_event(reading(1, ++ts, rng() % 3, 100 + rng() % 500,
                            static_cast<std::uint32_t>(i % 8)));
    }
    auto b = make(&pb);
    b->restore_state(a->serialize_state());
    CHECK(b->serialize_state() == a->serialize_state());

    // Both continue identically after the restore.
    for (int i = 0; i < 20; ++i) {
        Event e = reading(1, ++ts, rng() % 3, 100 + rng() % 500,
                          static_cast<std::uint32_t>(i % 8));
        auto oa = a->on_event(e);
        auto ob = b->on_event(e);
        CHECK(oa.size() == ob.size());
        for (std::size_t k = 0; k < oa.size(); ++k) {
            CHECK(oa[k].payload == ob[k].payload);
        }
    }
}

TEST_CASE("anomaly: constant load never alarms") {
    AnomalyLogic logic;
    logic.configure({{"k", "3"}, {"d", "5"}, {"M", "20"}});
    Timestamp ts = 0;
    for (int i = 0; i < 100; ++i) {
        CHECK(logic.on_event(reading(1, ++ts, 1, 100)).empty());
    }
}

TEST_CASE("anomaly: alarm exactly on the d-th consecutive excess") {
    AnomalyLogic logic;
    logic.configure({{"k", "3"}, {"d", "5"}, {"M", "20"}});
    Timestamp ts = 0;
    for (int i = 0; i < 20; ++i) {
        CHECK(logic.on_event(reading(1, ++ts, 1, 100)).empty());
    }
    // 10.00 > 3 * 1.00: five consecutive excess readings, alarm on the fifth.
    for (int i = 1; i <= 4; ++i) {
        CHECK(logic.on_event(reading(1, ++ts, 1, 1000)).empty());
    }
    auto out = logic.on_event(reading(1, ++ts, 1, 1000));
    REQUIRE(out.size() == 1);
    CHECK(PlugReading::decode_payload(out[0].payload).plug_id == 1);
}

TEST_CASE("anomaly: a normal reading resets the excess counter") {
    AnomalyLogic logic;
    logic.configure({{"k", "3"}, {"d", "5"}, {"M", "20"}});
    Timestamp ts = 0;
    for (int i = 0; i < 20; ++i) logic.on_event(reading(1, ++ts, 1, 100));
    for (int i = 0; i < 4; ++i) CHECK(logic.on_event(reading(1, ++ts, 1, 1000)).empty());
    CHECK(logic.on_event(reading(1, ++ts, 1, 100)).empty());  // reset
    for (int i = 0; i < 4; ++i) {
        CHECK(logic.on_event(reading(1, ++ts, 1, 1000)).empty());  // only 4 again
    }
}

TEST_CASE("anomaly: no check until M readings seen, and state round-trips") {
    AnomalyLogic logic;
    logic.configure({{"k", "1"}, {"d", "1"}, {"M", "3"}});
    Timestamp ts = 0;
    // Huge spikes inside the first M readings cannot alarm.
    CHECK(logic.on_event(reading(1, ++ts, 1, 99999)).empty());
    CHECK(logic.on_event(reading(1, ++ts, 1, 99999)).empty());
    CHECK(logic.on_event(reading(1, ++ts, 1, 1)).empty());
    auto out = logic.on_event(reading(1, ++ts, 1, 99999));
    CHECK(out.size() == 1);

    AnomalyLogic copy;
    copy.configure({{"k", "1"}, {"d", "1"}, {"M", "3"}});
    copy.restore_state(logic.serialize_state());
    CHECK(copy.serialize_state() == logic.serialize_state());
}

TEST_CASE("generator is deterministic and strictly monotone") {
    GeneratorConfig cfg;
    cfg.source_id = 3;
    cfg.seed = 17;
    cfg.plugs = 2;
    cfg.events = 100;
    std::vector<Event> a = generate_plugs(cfg);
    std::vector<Event> b = generate_plugs(cfg);
    CHECK(a == b);

    Timestamp last = 0;
    std::set<std::uint64_t> plug_ids;
    std::size_t watermarks = 0;
    for (const Event& e : a) {
        CHECK(e.source == 3);
        if (e.kind == EventKind::Watermark) {
            ++watermarks;
            continue;
        }
        CHECK(e.ts > last);
        last = e.ts;
        plug_ids.insert(PlugReading::decode_payload(e.payload).plug_id);
    }
    CHECK(plug_ids == std::set<std::uint64_t>{0, 1});
    CHECK(watermarks == 10);  // every 10 readings; final one coincides
}

TEST_CASE("generator applies scheduled bursts to the right plug") {
    GeneratorConfig calm;
    calm.seed = 4;
    calm.plugs = 2;
    calm.events = 60;
    GeneratorConfig bursty = calm;
    bursty.anomalies.push_back(AnomalyBurst{1, 5, 10, 12});

    std::vector<Event> a = generate_plugs(calm);
    std::vector<Event> b = generate_plugs(bursty);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i].kind != EventKind::Data) continue;
        PlugReading ra = PlugReading::decode_payload(a[i].payload);
        PlugReading rb = PlugReading::decode_payload(b[i].payload);
        std::uint64_t reading_index = (a[i].ts - 1) / calm.plugs;
        if (ra.plug_id == 1 && reading_index >= 5 && reading_index < 10) {
            CHECK(rb.load_hundredths == ra.load_hundredths * 12);
        } else {
            CHECK(rb.load_hundredths == ra.load_hundredths);
        }
    }
}

TEST_CASE("a calm stream with default thresholds emits zero alarms") {
    GeneratorConfig cfg;
    cfg.seed = 8;
    cfg.plugs = 5;
    cfg.events = 500;
    cfg.noise_permille = 200;  // +-20% of base
    AnomalyLogic logic;
    logic.configure({{"k", "3"}, {"d", "5"}, {"M", "20"}});
    for (const Event& e : generate_plugs(cfg)) {
        if (e.kind != EventKind::Data) continue;
        CHECK(logic.on_event(e).empty());
    }
}

TEST_CASE("running sum: relaxed delivery matches ordered delivery") {
    std::vector<std::vector<Event>> streams(3);
    std::mt19937_64 gen(31);
    Timestamp horizon = 0;
    for (SourceId s = 1; s <= 3; ++s) {
        Timestamp ts = 0;
        for (int i = 0; i < 40; ++i) {
            ts += 1 + gen() % 3;
            streams[s - 1].push_back(reading(s, ts, s % 2, 10 + gen() % 90));
        }
        horizon = std::max(horizon, ts);
    }
    // Closing watermarks at a common horizon so ordered mode releases all.
    for (SourceId s = 1; s <= 3; ++s) {
        streams[s - 1].push_back(Event::watermark(s, horizon));
    }

    auto fold = [&](bool relaxed, std::uint64_t seed) {
        std::mt19937_64 rng(seed);
        MergeBuffer buf({1, 2, 3});
        RunningSumLogic logic;
        std::vector<std::size_t> pos(3, 0);
        auto pump = [&] {
            auto events = relaxed ? buf.drain_relaxed() : buf.drain();
            for (const auto& e : events) logic.on_event(e);
        };
        for (;;) {
            std::vector<std::size_t> live;
            for (std::size_t i = 0; i < 3; ++i) {
                if (pos[i] < streams[i].size()) live.push_back(i);
            }
            if (live.empty()) break;
            std::size_t pick = live[rng() % live.size()];
            buf.ingest(streams[pick][pos[pick]++]);
            pump();
        }
        pump();
        return logic.serialize_state();
    };

    Bytes ordered = fold(false, 0);
    for (std::uint64_t seed = 1; seed <= 50; ++seed) {
        CHECK(fold(true, seed) == ordered);
        CHECK(fold(false, seed) == ordered);
    }
}

TEST_CASE("unstable logic differs across instance tags") {
    UnstableLogic a, b;
    a.set_instance_tag(0);
    b.set_instance_tag(1);
    Event e = reading(1, 1, 0, 100);
    auto oa = a.on_event(e);
    auto ob = b.on_event(e);
    REQUIRE(oa.size() == 1);
    REQUIRE(ob.size() == 1);
    CHECK(oa[0].payload != ob[0].payload);
}

TEST_CASE("builtin logics register under their ids") {
    register_builtin_logics();
    auto& reg = LogicRegistry::instance();
    for (const char* id : {"forecast", "anomaly", "running_sum", "unstable"}) {
        CHECK(reg.known(id));
        CHECK(reg.create(id)->logic_id() == id);
    }
    CHECK_THROWS_AS(reg.create("nope"), VersionMismatch);
}
