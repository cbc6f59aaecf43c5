#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace lifechain {

/// Dense real vector used for model weights and knowledge payloads.
using Vector = std::vector<double>;

/// 32-byte SHA-256 style digest.
using Digest = std::array<std::uint8_t, 32>;

enum class ClientId : std::uint32_t {};
enum class ServerId : std::uint32_t {};

constexpr std::uint32_t to_index(ClientId id) { return static_cast<std::uint32_t>(id); }
constexpr std::uint32_t to_index(ServerId id) { return static_cast<std::uint32_t>(id); }

/// Task index t and round index r of a training step.
struct TaskRound {
  std::uint32_t task = 0;
  std::uint32_t round = 0;

  auto operator<=>(const TaskRound&) const = default;
};

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when an argument violates an operation's precondition.
class InvalidInput : public Error {
 public:
  using Error::Error;
};

std::string to_hex(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> from_hex(std::string_view hex);
Digest digest_from_hex(std::string_view hex);

/// Deterministic 64-bit mixer (splitmix64 finalizer).
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Derives an independent stream seed from a root seed and a list of labels.
constexpr std::uint64_t derive_seed(std::uint64_t root, std::uint64_t a, std::uint64_t b = 0,
                                    std::uint64_t c = 0) {
  std::uint64_t h = mix64(root);
  h = mix64(h ^ a);
  h = mix64(h ^ b);
  return mix64(h ^ c);
}

}  // namespace lifechain

template <>
struct std::hash<lifechain::TaskRound> {
  std::size_t operator()(const lifechain::TaskRound& tr) const noexcept {
    return static_cast<std::size_t>(lifechain::mix64((std::uint64_t{tr.task} << 32) | tr.round));
  }
};
