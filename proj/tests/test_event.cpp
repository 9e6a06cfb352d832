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

#include <random>

#include <doctest.h>

#include <elstream/event.hpp>

using namespace elstream;

TEST_CASE("timestamp vector advance keeps per-source maxima") {
    TimestampVector tv;
    tv.advance(1, 5);
    CHECK(tv.high_water(1) == 5);

    tv.advance(1, 3);  // max keeps the larger value
    CHECK(tv.high_water(1) == 5);

    tv.advance(2, 9);
    tv.advance(2, 12);
    CHECK(tv.high_water(1) == 5);
    CHECK(tv.high_water(2) == 12);
}

TEST_CASE("is_duplicate is a per-source high-water test") {
    TimestampVector tv;
    tv.advance(1, 10);
    CHECK(tv.is_duplicate(Event::data(1, 10, {}, {})));   // boundary: already in
    CHECK(!tv.is_duplicate(Event::data(1, 11, {}, {})));  // strictly newer
    CHECK(!tv.is_duplicate(Event::data(7, 1, {}, {})));   // unknown source = 0
}

TEST_CASE("merge is pointwise max over the union of sources") {
    TimestampVector a;
    a.advance(1, 5);
    TimestampVector b;
    b.advance(1, 3);
    b.advance(2, 7);
    TimestampVector m = TimestampVector::merged(a, b);
    CHECK(m.high_water(1) == 5);
    CHECK(m.high_water(2) == 7);

    CHECK(TimestampVector::merged({}, {}) == TimestampVector{});

    TimestampVector c;
    c.advance(1, 2);
    CHECK(TimestampVector::merged(c, c) == c);
}

TEST_CASE("merge algebra: commutative, associative, idempotent") {
    std::mt19937_64 rng(1234);
    auto random_tv = [&] {
        TimestampVector tv;
        std::uniform_int_distribution<std::uint64_t> src(1, 6), ts(0, 50);
        for (int i = 0; i < 8; ++i) tv.advance(src(rng), ts(rng));
        return tv;
    };
    for (int trial = 0; trial < 200; ++trial) {
        TimestampVector a = random_tv(), b = random_tv(), c = random_tv();
        CHECK(TimestampVector::merged(a, b) == TimestampVector::merged(b, a));
        CHECK(TimestampVector::merged(TimestampVector::merged(a, b), c) ==
              TimestampVector::merged(a, TimestampVector::merged(b, c)));
        CHECK(TimestampVector::merged(a, a) == a);
    }
}

TEST_CASE("advance is monotone and dedup is sound afterwards") {
    std::mt19937_64 rng(99);
    TimestampVector tv;
    std::map<SourceId, Timestamp> shadow;
    std::uniform_int_distribution<std::uint64_t> src(1, 4), ts(0, 1000);
    for (int i = 0; i < 500; ++i) {
        SourceId s = src(rng);
        Timestamp t = ts(rng);
        Timestamp before = tv.high_water(s);
        tv.advance(s, t);
        CHECK(tv.high_water(s) >= before);
        shadow[s] = std::max(shadow[s], t);
        CHECK(tv.high_water(s) == shadow[s]);
        CHECK(tv.is_duplicate(Event::data(s, t, {}, {})));
    }
}

TEST_CASE("event encoding golden bytes") {
    Event e = Event::data(0x0102030405060708ull, 0x1122334455667788ull, {'k'}, {'p', 'q'});
    Bytes enc = encode_event(e);
    Bytes expected{
        0x01, 0x02, 0x03, 0x04, 0x05, 0x06, 0x07, 0x08,  // source
        0x11, 0x22, 0x33, 0x44, 0x55, 0x66, 0x77, 0x88,  // ts
        0x00,                                            // kind = Data
        0x00, 0x00, 0x00, 0x01, 'k',                     // key
        0x00, 0x00, 0x00, 0x02, 'p', 'q',                // payload
    };
    CHECK(enc == expected);
    CHECK(decode_event(enc) == e);
}

TEST_CASE("watermark encoding round-trips with empty key and payload") {
    Event w = Event::watermark(3, 42);
    Bytes enc = encode_event(w);
    CHECK(enc.size() == 25);
    CHECK(enc[16] == 1);  // kind byte
    CHECK(decode_event(enc) == w);
}

TEST_CASE("event decode rejects malformed input") {
    Event e = Event::data(1, 2, {'a'}, {'b'});
    Bytes enc = encode_event(e);

    Bytes truncated(enc.begin(), enc.end() - 1);
    CHECK_THROWS_AS(decode_event(truncated), SerializationFailure);

    Bytes trailing = enc;
    trailing.push_back(0);
    CHECK_THROWS_AS(decode_event(trailing), SerializationFailure);

    Bytes bad_kind = enc;
    bad_kind[16] = 2;
    CHECK_THROWS_AS(decode_event(bad_kind), SerializationFailure);
}

TEST_CASE("event encode/decode round-trip, randomized") {
    std::mt19937_64 rng(7);
    std::uniform_int_distribution<int> len(0, 40);
    std::uniform_int_distribution<int> byte(0, 255);
    for (int i = 0; i < 300; ++i) {
        Event e;
        e.source = rng();
        e.ts = rng();
        e.kind = (rng() & 1) ? EventKind::Watermark : EventKind::Data;
        for (int k = len(rng); k > 0; --k) e.key.push_back(static_cast<std::uint8_t>(byte(rng)));
        for (int k = len(rng); k > 0; --k)
            e.payload.push_back(static_cast<std::uint8_t>(byte(rng)));
        CHECK(decode_event(encode_event(e)) == e);
    }
}

TEST_CASE("timestamp vector encoding round-trips in ascending source order") {
    TimestampVector tv;
    tv.advance(9, 3);
    tv.advance(2, 8);
    tv.advance(5, 1);
    Bytes enc;
    tv.encode_into(enc);
    CHECK(enc.size() == 4 + 3 * 16);
    // First listed source is the smallest (2).
    CHECK(enc[11] == 2);
    ByteReader in(enc);
    CHECK(TimestampVector::decode(in) == tv);
    CHECK(in.done());
}
