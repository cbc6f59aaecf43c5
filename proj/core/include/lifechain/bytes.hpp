#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "lifechain/common.hpp"

namespace lifechain {

/// Canonical serializer: fixed-width little-endian scalars, u32 length
/// prefixes on variable-length fields, fields written in declaration order.
/// Every hash in the ledger is taken over bytes produced here.
class ByteWriter {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }
  void f64(double v);
  void digest(const Digest& d) { out_.insert(out_.end(), d.begin(), d.end()); }
  void bytes(std::span<const std::uint8_t> b);
  void str(std::string_view s);
  void vec(std::span<const double> v);

  std::size_t size() const { return out_.size(); }
  const std::vector<std::uint8_t>& data() const { return out_; }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

/// Canonical bytes of a real vector (length prefix, then IEEE-754 doubles).
std::vector<std::uint8_t> serialize_vector(std::span<const double> v);

/// Inverse of serialize_vector; throws InvalidInput on malformed input.
Vector deserialize_vector(std::span<const std::uint8_t> bytes);

}  // namespace lifechain
