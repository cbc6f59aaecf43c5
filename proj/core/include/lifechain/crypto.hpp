#pragma once

#include <cstdint>
#include <span>
#include <string_view>

#include "lifechain/common.hpp"

namespace lifechain::crypto {

/// SHA-256 of a byte sequence. Used as the model/knowledge fingerprint.
Digest sha256(std::span<const std::uint8_t> payload);
Digest sha256(std::string_view payload);

/// HMAC-SHA256.
Digest hmac_sha256(const Digest& key, std::span<const std::uint8_t> message);

/// Key pair issued by the trusted authority at registration.
/// The public half is the digest of the secret half.
struct KeyPair {
  Digest secret{};
  Digest public_key{};

  /// Deterministically derives a key pair from a seed and a role label.
  static KeyPair derive(std::uint64_t seed, std::string_view role, std::uint64_t index);
  static KeyPair from_secret(const Digest& secret);
};

/// Signing backend for client transactions.
class SignatureBackend {
 public:
  virtual ~SignatureBackend() = default;
  virtual Digest sign(const KeyPair& keys, std::span<const std::uint8_t> message) const = 0;
  virtual bool verify(const Digest& public_key, std::span<const std::uint8_t> message,
                      const Digest& signature) const = 0;
};

/// Keyed-digest commitments: sig = HMAC(public_key, message).
/// Binds a message to a registered identity but is not unforgeable against a
/// party that knows the public key; asymmetric signatures can replace it
/// behind the same interface.
class KeyedDigestSignatures final : public SignatureBackend {
 public:
  Digest sign(const KeyPair& keys, std::span<const std::uint8_t> message) const override;
  bool verify(const Digest& public_key, std::span<const std::uint8_t> message,
              const Digest& signature) const override;
};

const SignatureBackend& default_signatures();

}  // namespace lifechain::crypto
