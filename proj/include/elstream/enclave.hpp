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

#ifndef ELSTREAM_ENCLAVE_HPP_
#define ELSTREAM_ENCLAVE_HPP_

#include <cstdint>
#include <list>
#include <map>
#include <string>
#include <vector>

#include <elstream/crypto.hpp>
#include <elstream/errors.hpp>
#include <elstream/event.hpp>
#include <elstream/operator_runtime.hpp>

namespace elstream {

/// Default resident budget for paged state, matching the protected memory
/// cap the simulation models. Tests override this with desk-scale values.
inline constexpr std::uint64_t kDefaultMemoryBudgetBytes = 134217728;  // 128 MiB

/// Authenticated-encrypted artifact at rest or on the wire.
/// Layout, bit-exact: nonce (12B) || 4B BE AD length || AD ||
/// 4B BE ciphertext length || ciphertext || tag (16B).
struct SealedBlob {
    Nonce96 nonce{};
    Bytes associated_data;
    Bytes ciphertext;
    Tag128 tag{};

    Bytes encode() const {
        Bytes out(nonce.begin(), nonce.end());
        put_u32_be(out, static_cast<std::uint32_t>(associated_data.size()));
        out.insert(out.end(), associated_data.begin(), associated_data.end());
        put_u32_be(out, static_cast<std::uint32_t>(ciphertext.size()));
        out.insert(out.end(), ciphertext.begin(), ciphertext.end());
        out.insert(out.end(), tag.begin(), tag.end());
        return out;
    }

    /// Any malformation (truncation, bad lengths, trailing bytes) is
    /// reported as AuthenticationFailure: a tampered blob must never be
    /// distinguishable from a forged one.
    static SealedBlob decode(BytesView bytes) {
        try {
            ByteReader in(bytes);
            SealedBlob blob;
            Bytes nonce = in.take(12);
            std::copy(nonce.begin(), nonce.end(), blob.nonce.begin());
            blob.associated_data = in.take(in.u32_be());
            blob.ciphertext = in.take(in.u32_be());
            Bytes tag = in.take(16);
            std::copy(tag.begin(), tag.end(), blob.tag.begin());
            if (!in.done()) {
                throw AuthenticationFailure("trailing bytes in sealed blob");
            }
            return blob;
        } catch (const SerializationFailure& ex) {
            throw AuthenticationFailure(ex.what());
        }
    }
};

/// Nonces embed a strictly increasing 64-bit counter in the trailing
/// bytes; the leading four bytes carry a domain label so sealing and
/// channel nonces never collide under one key.
inline Nonce96 make_nonce(std::uint32_t domain, std::uint64_t counter) {
    Nonce96 nonce{};
    for (int i = 0; i < 4; ++i) {
        nonce[static_cast<std::size_t>(i)] =
            static_cast<std::uint8_t>((domain >> (24 - 8 * i)) & 0xffu);
    }
    for (int i = 0; i < 8; ++i) {
        nonce[static_cast<std::size_t>(4 + i)] =
            static_cast<std::uint8_t>((counter >> (56 - 8 * i)) & 0xffu);
    }
    return nonce;
}

inline std::uint64_t nonce_counter(const Nonce96& nonce) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
        v = (v << 8) | nonce[static_cast<std::size_t>(4 + i)];
    }
    return v;
}

/// Key material, memory budget, and code measurement for one simulated
/// trusted boundary. Confined to a single partition's delivery loop.
class EnclaveContext {
  public:
    EnclaveContext(std::uint64_t enclave_id, Key256 sealing_key, Digest256 measurement,
                   std::uint64_t memory_budget_bytes = kDefaultMemoryBudgetBytes)
        : enclave_id_(enclave_id),
          sealing_key_(sealing_key),
          measurement_(measurement),
          memory_budget_bytes_(memory_budget_bytes) {}

    void set_channel_key(std::uint64_t peer, Key256 key) { channel_keys_[peer] = key; }

    /// Seals arbitrary bytes under the sealing key with a fresh nonce.
    /// The associated data is bound into the authentication tag.
    SealedBlob seal_bytes(BytesView plaintext, Bytes associated_data) {
        SealedBlob blob;
        blob.nonce = make_nonce(kSealDomain, ++seal_counter_);
        blob.associated_data = std::move(associated_data);
        blob.ciphertext =
            aead_encrypt(sealing_key_, blob.nonce, blob.associated_data, plaintext, blob.tag);
        return blob;
    }

    Bytes unseal_bytes(const SealedBlob& blob) const {
        return aead_decrypt(sealing_key_, blob.nonce, blob.associated_data, blob.ciphertext,
                            blob.tag);
    }

    /// Seals a snapshot; the associated data is the snapshot envelope
    /// header, so a blob cannot be replayed into a different partition.
    SealedBlob seal(const StateSnapshot& snapshot) {
        return seal_bytes(snapshot.encode(), snapshot.header_bytes());
    }

    StateSnapshot unseal(const SealedBlob& blob) const {
        Bytes plain = unseal_bytes(blob);
        StateSnapshot s = StateSnapshot::decode(plain);
        if (s.header_bytes() != blob.associated_data) {
            throw AuthenticationFailure("sealed snapshot header binding mismatch");
        }
        return s;
    }

    /// Encrypts an event for the channel to `peer`. The per-channel send
    /// counter rides in the nonce and doubles as transport replay
    /// protection on the receiving side.
    Bytes encrypt_event(const Event& e, std::uint64_t peer) {
        SealedBlob blob;
        blob.nonce = make_nonce(kChannelDomain, ++send_counters_[peer]);
        blob.associated_data = channel_ad(enclave_id_, peer);
        blob.ciphertext = aead_encrypt(channel_key(peer), blob.nonce, blob.associated_data,
                                       encode_event(e), blob.tag);
        return blob.encode();
    }

    /// Authenticates first, then enforces the strictly increasing counter:
    /// a bit-flipped message always fails authentication, an intact replay
    /// is reported as ReplayDetected.
    Event decrypt_event(BytesView wire, std::uint64_t peer) {
        SealedBlob blob = SealedBlob::decode(wire);
        Bytes plain = aead_decrypt(channel_key(peer), blob.nonce, blob.associated_data,
                                   blob.ciphertext, blob.tag);
        if (blob.associated_data != channel_ad(peer, enclave_id_)) {
            throw AuthenticationFailure("channel binding mismatch");
        }
        std::uint64_t counter = nonce_counter(blob.nonce);
        auto& last = recv_counters_[peer];
        if (counter <= last) {
            throw ReplayDetected("counter " + std::to_string(counter) + " after " +
                                 std::to_string(last));
        }
        last = counter;
        return decode_event(plain);
    }

    std::uint64_t enclave_id() const { return enclave_id_; }
    const Digest256& measurement() const { return measurement_; }
    std::uint64_t memory_budget_bytes() const { return memory_budget_bytes_; }

  private:
    static constexpr std::uint32_t kSealDomain = 0x53454131;     // "SEA1"
    static constexpr std::uint32_t kChannelDomain = 0x43484131;  // "CHA1"

    static Bytes channel_ad(std::uint64_t from, std::uint64_t to) {
        Bytes ad;
        put_u64_be(ad, from);
        put_u64_be(ad, to);
        return ad;
    }

    const Key256& channel_key(std::uint64_t peer) const {
        auto it = channel_keys_.find(peer);
        if (it == channel_keys_.end()) {
            throw AuthenticationFailure("no channel key for peer " + std::to_string(peer));
        }
        return it->second;
    }

    std::uint64_t enclave_id_;
    Key256 sealing_key_;
    Digest256 measurement_;
    std::uint64_t memory_budget_bytes_;
    std::map<std::uint64_t, Key256> channel_keys_;
    std::uint64_t seal_counter_ = 0;
    std::map<std::uint64_t, std::uint64_t> send_counters_;
    std::map<std::uint64_t, std::uint64_t> recv_counters_;
};

inline bool attest(const EnclaveContext& ctx, const Digest256& expected_measurement) {
    return ctx.measurement() == expected_measurement;
}

/// Bounded-resident page store. Pages occupy fixed-size frames (the
/// protected memory is page-granular); resident frames never exceed the
/// budget — overflow evicts least-recently-used pages as sealed blobs to
/// the backing store, faulted back in and unsealed on demand.
class PagedStateStore {
  public:
    explicit PagedStateStore(std::uint64_t budget_bytes, std::uint64_t frame_bytes = 4096)
        : budget_bytes_(budget_bytes), frame_bytes_(frame_bytes) {}

    void put(const std::string& key, Bytes page, EnclaveContext& ctx) {
        std::uint64_t charge = frame_charge(page.size());
        if (charge > budget_bytes_) {
            throw PageTooLarge(std::to_string(page.size()) + " bytes exceeds budget");
        }
        backing_.erase(key);
        auto it = resident_.find(key);
        if (it != resident_.end()) {
            resident_bytes_ -= frame_charge(it->second.page.size());
            lru_.erase(it->second.lru_pos);
            resident_.erase(it);
        }
        evict_until_fits(charge, ctx);
        insert_resident(key, std::move(page), charge);
    }

    Bytes get(const std::string& key, EnclaveContext& ctx) {
        auto it = resident_.find(key);
        if (it != resident_.end()) {
            lru_.splice(lru_.end(), lru_, it->second.lru_pos);
            return it->second.page;
        }
        auto bit = backing_.find(key);
        if (bit == backing_.end()) {
            throw Error("unknown page '" + key + "'");
        }
        Bytes page = ctx.unseal_bytes(bit->second);
        backing_.erase(bit);
        std::uint64_t charge = frame_charge(page.size());
        evict_until_fits(charge, ctx);
        insert_resident(key, page, charge);
        return page;
    }

    bool contains(const std::string& key) const {
        return resident_.contains(key) || backing_.contains(key);
    }

    std::vector<std::string> keys() const {
        std::vector<std::string> out;
        std::map<std::string, bool> merged;
        for (const auto& [k, v] : resident_) merged[k] = true;
        for (const auto& [k, v] : backing_) merged[k] = true;
        for (const auto& [k, v] : merged) out.push_back(k);
        return out;
    }

    void clear() {
        resident_.clear();
        backing_.clear();
        lru_.clear();
        resident_bytes_ = 0;
    }

    std::uint64_t resident_bytes() const { return resident_bytes_; }
    std::uint64_t budget_bytes() const { return budget_bytes_; }
    std::uint64_t evictions() const { return evictions_; }
    std::uint64_t max_resident_bytes() const { return max_resident_bytes_; }
    std::size_t resident_pages() const { return resident_.size(); }
    const std::map<std::string, SealedBlob>& backing() const { return backing_; }

  private:
    struct Resident {
        Bytes page;
        std::list<std::string>::iterator lru_pos;
    };

    std::uint64_t frame_charge(std::size_t len) const {
        std::uint64_t frames = (len + frame_bytes_ - 1) / frame_bytes_;
        return (frames == 0 ? 1 : frames) * frame_bytes_;
    }

    void insert_resident(const std::string& key, Bytes page, std::uint64_t charge) {
        lru_.push_back(key);
        auto pos = std::prev(lru_.end());
        resident_.emplace(key, Resident{std::move(page), pos});
        resident_bytes_ += charge;
        if (resident_bytes_ > max_resident_bytes_) {
            max_resident_bytes_ = resident_bytes_;
        }
    }

    void evict_until_fits(std::uint64_t incoming_charge, EnclaveContext& ctx) {
        while (resident_bytes_ + incoming_charge > budget_bytes_ && !lru_.empty()) {
            const std::string victim = lru_.front();
            lru_.pop_front();
            auto it = resident_.find(victim);
            resident_bytes_ -= frame_charge(it->second.page.size());
            backing_[victim] = ctx.seal_bytes(it->second.page, to_bytes(victim));
            resident_.erase(it);
            ++evictions_;
        }
    }

    std::uint64_t budget_bytes_;
    std::uint64_t frame_bytes_;
    std::map<std::string, Resident> resident_;
    std::map<std::string, SealedBlob> backing_;
    std::list<std::string> lru_;  // front = least recently used
    std::uint64_t resident_bytes_ = 0;
    std::uint64_t max_resident_bytes_ = 0;
    std::uint64_t evictions_ = 0;
};

/// StatePager backed by the budgeted store; what operator logics see when
/// enclave mode is on.
class PagedPager final : public StatePager {
  public:
    PagedPager(PagedStateStore& store, EnclaveContext& ctx) : store_(store), ctx_(ctx) {}

    std::optional<Bytes> load(const std::string& key) override {
        if (!store_.contains(key)) return std::nullopt;
        return store_.get(key, ctx_);
    }
    void store(const std::string& key, Bytes page) override {
        store_.put(key, std::move(page), ctx_);
    }
    std::vector<std::string> keys() const override { return store_.keys(); }
    void clear() override { store_.clear(); }

  private:
    PagedStateStore& store_;
    EnclaveContext& ctx_;
};

}  // namespace elstream

#endif  // ELSTREAM_ENCLAVE_HPP_
