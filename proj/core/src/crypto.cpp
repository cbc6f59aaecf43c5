#include "lifechain/crypto.hpp"

#include <openssl/evp.h>
#include <openssl/hmac.h>

#include "lifechain/bytes.hpp"

namespace lifechain::crypto {

Digest sha256(std::span<const std::uint8_t> payload) {
  Digest out{};
  unsigned int len = 0;
  if (EVP_Digest(payload.data(), payload.size(), out.data(), &len, EVP_sha256(), nullptr) != 1 ||
      len != out.size()) {
    throw Error("EVP_Digest(sha256) failed");
  }
  return out;
}

Digest sha256(std::string_view payload) {
  return sha256(std::span(reinterpret_cast<const std::uint8_t*>(payload.data()), payload.size()));
}

Digest hmac_sha256(const Digest& key, std::span<const std::uint8_t> message) {
  Digest out{};
  unsigned int len = 0;
  if (HMAC(EVP_sha256(), key.data(), static_cast<int>(key.size()), message.data(), message.size(),
           out.data(), &len) == nullptr ||
      len != out.size()) {
    throw Error("HMAC(sha256) failed");
  }
  return out;
}

KeyPair KeyPair::derive(std::uint64_t seed, std::string_view role, std::uint64_t index) {
  ByteWriter w;
  w.str("lifechain-key");
  w.str(role);
  w.u64(seed);
  w.u64(index);
  return from_secret(sha256(w.data()));
}

KeyPair KeyPair::from_secret(const Digest& secret) {
  return KeyPair{secret, sha256(std::span<const std::uint8_t>(secret))};
}

Digest KeyedDigestSignatures::sign(const KeyPair& keys,
                                   std::span<const std::uint8_t> message) const {
  return hmac_sha256(sha256(std::span<const std::uint8_t>(keys.secret)), message);
}

bool KeyedDigestSignatures::verify(const Digest& public_key,
                                   std::span<const std::uint8_t> message,
                                   const Digest& signature) const {
  return hmac_sha256(public_key, message) == signature;
}

const SignatureBackend& default_signatures() {
  static const KeyedDigestSignatures backend;
  return backend;
}

}  // namespace lifechain::crypto
