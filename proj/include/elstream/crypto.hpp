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

#ifndef ELSTREAM_CRYPTO_HPP_
#define ELSTREAM_CRYPTO_HPP_

#include <array>
#include <cstdint>
#include <memory>

#include <openssl/evp.h>
#include <openssl/sha.h>

#include <elstream/bytes.hpp>
#include <elstream/errors.hpp>

namespace elstream {

using Digest256 = std::array<std::uint8_t, 32>;
using Key256 = std::array<std::uint8_t, 32>;
using Nonce96 = std::array<std::uint8_t, 12>;
using Tag128 = std::array<std::uint8_t, 16>;

inline Digest256 sha256(BytesView data) {
    Digest256 out{};
    SHA256(data.data(), data.size(), out.data());
    return out;
}

inline Digest256 sha256(const std::string& s) {
    return sha256(BytesView(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
}

namespace detail {
struct EvpCtxDeleter {
    void operator()(EVP_CIPHER_CTX* ctx) const { EVP_CIPHER_CTX_free(ctx); }
};
using EvpCtx = std::unique_ptr<EVP_CIPHER_CTX, EvpCtxDeleter>;
}  // namespace detail

/// AES-256-GCM, 96-bit nonce, 128-bit tag. The tag authenticates the
/// associated data and the ciphertext; the nonce enters the keystream, so
/// a flipped nonce also fails verification.
inline Bytes aead_encrypt(const Key256& key, const Nonce96& nonce, BytesView associated_data,
                          BytesView plaintext, Tag128& tag_out) {
    detail::EvpCtx ctx(EVP_CIPHER_CTX_new());
    if (!ctx || EVP_EncryptInit_ex(ctx.get(), EVP_aes_256_gcm(), nullptr, key.data(),
                                   nonce.data()) != 1) {
        throw Error("cipher init failed");
    }
    int len = 0;
    if (!associated_data.empty() &&
        EVP_EncryptUpdate(ctx.get(), nullptr, &len, associated_data.data(),
                          static_cast<int>(associated_data.size())) != 1) {
        throw Error("aad update failed");
    }
    Bytes ciphertext(plaintext.size());
    if (!plaintext.empty() &&
        EVP_EncryptUpdate(ctx.get(), ciphertext.data(), &len, plaintext.data(),
                          static_cast<int>(plaintext.size())) != 1) {
        throw Error("encrypt update failed");
    }
    int fin = 0;
    if (EVP_EncryptFinal_ex(ctx.get(), ciphertext.data() + len, &fin) != 1) {
        throw Error("encrypt final failed");
    }
    if (EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_GET_TAG, 16, tag_out.data()) != 1) {
        throw Error("tag extraction failed");
    }
    return ciphertext;
}

inline Bytes aead_decrypt(const Key256& key, const Nonce96& nonce, BytesView associated_data,
                          BytesView ciphertext, const Tag128& tag) {
    detail::EvpCtx ctx(EVP_CIPHER_CTX_new());
    if (!ctx || EVP_DecryptInit_ex(ctx.get(), EVP_aes_256_gcm(), nullptr, key.data(),
                                   nonce.data()) != 1) {
        throw Error("cipher init failed");
    }
    int len = 0;
    if (!associated_data.empty() &&
        EVP_DecryptUpdate(ctx.get(), nullptr, &len, associated_data.data(),
                          static_cast<int>(associated_data.size())) != 1) {
        throw AuthenticationFailure("aad update failed");
    }
    Bytes plaintext(ciphertext.size());
    if (!ciphertext.empty() &&
        EVP_DecryptUpdate(ctx.get(), plaintext.data(), &len, ciphertext.data(),
                          static_cast<int>(ciphertext.size())) != 1) {
        throw AuthenticationFailure("decrypt update failed");
    }
    Tag128 tag_copy = tag;
    if (EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_SET_TAG, 16, tag_copy.data()) != 1) {
        throw Error("tag set failed");
    }
    int fin = 0;
    if (EVP_DecryptFinal_ex(ctx.get(), plaintext.data() + len, &fin) != 1) {
        throw AuthenticationFailure("tag verification failed");
    }
    return plaintext;
}

/// Deterministic key derivation from a master secret and a labeled path;
/// scenario-provisioned keys are all derived this way.
inline Key256 derive_key(const Key256& master, const std::string& label) {
    Bytes input(master.begin(), master.end());
    Bytes label_bytes = to_bytes(label);
    input.insert(input.end(), label_bytes.begin(), label_bytes.end());
    return sha256(input);
}

}  // namespace elstream

#endif  // ELSTREAM_CRYPTO_HPP_
