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

#include <doctest.h>

#include <elstream/simnet.hpp>

using namespace elstream;

namespace {

std::vector<Message> drain_all(Simulator& sim) {
    std::vector<Message> out;
    while (!sim.idle()) {
        for (auto& m : sim.advance()) out.push_back(std::move(m));
    }
    return out;
}

}  // namespace

TEST_CASE("delay descriptors parse and validate") {
    DelayDist f = DelayDist::parse("fixed(2)");
    CHECK(f.kind == DelayDist::Kind::Fixed);
    CHECK(f.lo == 2);
    DelayDist u = DelayDist::parse("uniform(1,5)");
    CHECK(u.kind == DelayDist::Kind::Uniform);
    CHECK(u.lo == 1);
    CHECK(u.hi == 5);
    CHECK_THROWS_AS(DelayDist::parse("gauss(1)"), ConfigError);
    CHECK_THROWS_AS(DelayDist::parse("uniform(5,1)"), ConfigError);
    CHECK_THROWS_AS(DelayDist::parse("fixed"), ConfigError);
    CHECK_THROWS_AS(DelayDist::parse("uniform(abc,1)"), ConfigError);
}

TEST_CASE("sending on an unconfigured link fails") {
    Simulator sim(1);
    CHECK_THROWS_AS(sim.send(1, 2, Event::watermark(1, 1)), UnknownLink);
    sim.add_link({1, 2, DelayDist::fixed(0), 0.0});
    CHECK(sim.has_link(1, 2));
    CHECK(!sim.has_link(2, 1));
}

TEST_CASE("fixed delay 0 delivers next step, in send order") {
    Simulator sim(1);
    sim.add_link({1, 2, DelayDist::fixed(0), 0.0});
    for (Timestamp ts = 1; ts <= 3; ++ts) sim.send(1, 2, Event::data(1, ts, {}, {}));
    auto delivered = sim.advance();
    REQUIRE(delivered.size() == 3);
    for (Timestamp ts = 1; ts <= 3; ++ts) CHECK(delivered[ts - 1].event.ts == ts);
    CHECK(sim.idle());
}

TEST_CASE("per-link FIFO holds under random delays") {
    Simulator sim(42);
    sim.add_link({1, 2, DelayDist::uniform(1, 5), 0.0});
    for (Timestamp ts = 1; ts <= 100; ++ts) sim.send(1, 2, Event::data(1, ts, {}, {}));
    auto delivered = drain_all(sim);
    REQUIRE(delivered.size() == 100);
    for (Timestamp ts = 1; ts <= 100; ++ts) CHECK(delivered[ts - 1].event.ts == ts);
}

TEST_CASE("identical seeds produce identical delivery traces") {
    auto trace = [](std::uint64_t seed) {
        Simulator sim(seed);
        sim.add_link({1, 3, DelayDist::uniform(0, 4), 0.3});
        sim.add_link({2, 3, DelayDist::uniform(1, 6), 0.0});
        std::vector<std::pair<std::uint64_t, Timestamp>> out;
        for (Timestamp ts = 1; ts <= 50; ++ts) {
            sim.send(1, 3, Event::data(1, ts, {}, {}));
            sim.send(2, 3, Event::data(2, ts, {}, {}));
            for (auto& m : sim.advance()) out.emplace_back(sim.now(), m.event.ts);
        }
        while (!sim.idle()) {
            for (auto& m : sim.advance()) out.emplace_back(sim.now(), m.event.ts);
        }
        return out;
    };
    CHECK(trace(7) == trace(7));
    CHECK(trace(7) != trace(8));  // the seed actually matters
}

TEST_CASE("duplicate_prob=1 delivers every message exactly twice") {
    Simulator sim(5);
    sim.add_link({1, 2, DelayDist::fixed(1), 1.0});
    for (Timestamp ts = 1; ts <= 20; ++ts) sim.send(1, 2, Event::data(1, ts, {}, {}));
    auto delivered = drain_all(sim);
    REQUIRE(delivered.size() == 40);
    std::map<Timestamp, int> copies;
    int injected = 0;
    for (const auto& m : delivered) {
        ++copies[m.event.ts];
        if (m.injected_duplicate) ++injected;
    }
    for (Timestamp ts = 1; ts <= 20; ++ts) CHECK(copies[ts] == 2);
    CHECK(injected == 20);
}

TEST_CASE("cross-link interleaving respects per-delivery timing") {
    Simulator sim(9);
    sim.add_link({1, 9, DelayDist::fixed(3), 0.0});
    sim.add_link({2, 9, DelayDist::fixed(1), 0.0});
    sim.send(1, 9, Event::data(1, 1, {}, {}));  // due at step 4
    sim.send(2, 9, Event::data(2, 1, {}, {}));  // due at step 2
    CHECK(sim.advance().empty());                // step 1
    auto second = sim.advance();                 // step 2
    REQUIRE(second.size() == 1);
    CHECK(second[0].event.source == 2);
    CHECK(sim.advance().empty());  // step 3
    auto fourth = sim.advance();   // step 4
    REQUIRE(fourth.size() == 1);
    CHECK(fourth[0].event.source == 1);
    CHECK(sim.in_flight() == 0);
}
