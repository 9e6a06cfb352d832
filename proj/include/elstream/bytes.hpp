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

#ifndef ELSTREAM_BYTES_HPP_
#define ELSTREAM_BYTES_HPP_

#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <vector>

#include <elstream/errors.hpp>

namespace elstream {

using Bytes = std::vector<std::uint8_t>;
using BytesView = std::span<const std::uint8_t>;

inline void put_u64_be(Bytes& out, std::uint64_t v) {
    for (int shift = 56; shift >= 0; shift -= 8) {
        out.push_back(static_cast<std::uint8_t>((v >> shift) & 0xffu));
    }
}

inline void put_u32_be(Bytes& out, std::uint32_t v) {
    for (int shift = 24; shift >= 0; shift -= 8) {
        out.push_back(static_cast<std::uint8_t>((v >> shift) & 0xffu));
    }
}

inline void put_u16_be(Bytes& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v & 0xffu));
}

/// Cursor over a byte view; every read checks bounds and throws
/// SerializationFailure on underflow.
class ByteReader {
  public:
    explicit ByteReader(BytesView data) : data_(data) {}

    std::uint64_t u64_be() {
        require(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) {
            v = (v << 8) | data_[pos_ + static_cast<std::size_t>(i)];
        }
        pos_ += 8;
        return v;
    }

    std::uint32_t u32_be() {
        require(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            v = (v << 8) | data_[pos_ + static_cast<std::size_t>(i)];
        }
        pos_ += 4;
        return v;
    }

    std::uint16_t u16_be() {
        require(2);
        std::uint16_t v = static_cast<std::uint16_t>((data_[pos_] << 8) | data_[pos_ + 1]);
        pos_ += 2;
        return v;
    }

    std::uint8_t u8() {
        require(1);
        return data_[pos_++];
    }

    Bytes take(std::size_t n) {
        require(n);
        Bytes out(data_.begin() + static_cast<std::ptrdiff_t>(pos_),
                  data_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
        pos_ += n;
        return out;
    }

    std::size_t remaining() const { return data_.size() - pos_; }
    std::size_t position() const { return pos_; }
    bool done() const { return pos_ == data_.size(); }

  private:
    void require(std::size_t n) const {
        if (data_.size() - pos_ < n) {
            throw SerializationFailure("truncated input at offset " + std::to_string(pos_));
        }
    }

    BytesView data_;
    std::size_t pos_ = 0;
};

inline Bytes to_bytes(const std::string& s) {
    return Bytes(s.begin(), s.end());
}

inline std::string to_string(BytesView b) {
    return std::string(b.begin(), b.end());
}

/// Stable FNV-1a 64-bit hash; used for key partitioning.
inline std::uint64_t fnv1a64(BytesView data) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (std::uint8_t b : data) {
        h ^= b;
        h *= 0x100000001b3ull;
    }
    return h;
}

}  // namespace elstream

#endif  // ELSTREAM_BYTES_HPP_
