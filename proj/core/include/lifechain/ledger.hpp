#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "lifechain/bytes.hpp"
#include "lifechain/common.hpp"
#include "lifechain/crypto.hpp"
#include "lifechain/knowledge_index.hpp"

namespace lifechain {

/// SHA-256 of a serialized model or knowledge payload.
Digest fingerprint(std::span<const std::uint8_t> payload);

struct ClientTransaction {
  std::uint64_t tx_id = 0;
  ClientId owner{};
  TaskRound tr{};
  Digest model_hash{};
  Krv krv;
  std::uint64_t timestamp = 0;
  Digest signature{};

  /// Canonical bytes covered by the signature (every field but the signature).
  std::vector<std::uint8_t> signing_bytes() const;
  void serialize(ByteWriter& w) const;
  void sign(const crypto::KeyPair& keys, const crypto::SignatureBackend& backend);

  bool operator==(const ClientTransaction&) const = default;
};

struct ServerTransaction {
  std::uint64_t tx_id = 0;
  TaskRound tr{};
  Digest merkle_root{};
  std::vector<ClientId> selected;
  Digest global_model_hash{};

  void serialize(ByteWriter& w) const;

  bool operator==(const ServerTransaction&) const = default;
};

enum class BlockKind : std::uint8_t { Genesis = 0, Client = 1, Server = 2 };

std::string to_string(BlockKind kind);

/// System and network configuration recorded in the first block.
struct GenesisConfig {
  nlohmann::json config;

  bool operator==(const GenesisConfig&) const = default;
};

struct Block {
  using Payload =
      std::variant<GenesisConfig, std::vector<ClientTransaction>, std::vector<ServerTransaction>>;

  std::uint64_t height = 0;
  Digest prev_hash{};
  BlockKind kind = BlockKind::Genesis;
  Payload payload;
  Digest block_hash{};

  /// Canonical serialization of the payload, prefixed by the kind byte.
  std::vector<std::uint8_t> payload_bytes() const;
  Digest compute_hash() const;

  const std::vector<ClientTransaction>& client_txs() const;
  const std::vector<ServerTransaction>& server_txs() const;
  const nlohmann::json& genesis_config() const;
};

/// Bytes of knowledge retrieval vectors carried by a block (4 bytes per bucket id).
std::size_t knowledge_bytes(const Block& block);

// --- Merkle commitments ------------------------------------------------------

Digest merkle_root(std::span<const Digest> leaves);

struct MerkleStep {
  Digest sibling{};
  bool sibling_on_left = false;
};

std::vector<MerkleStep> merkle_proof(std::span<const Digest> leaves, std::size_t index);
bool verify_merkle_proof(const Digest& leaf, std::span<const MerkleStep> proof,
                         const Digest& root);

// --- Chain ---------------------------------------------------------------------

enum class SubmitStatus { Accepted, Replay, Blacklisted, BadSignature };

std::string to_string(SubmitStatus s);

/// Content-addressed payload store kept beside the chain.
class OffchainStore {
 public:
  Digest put(std::vector<std::uint8_t> payload);
  const std::vector<std::uint8_t>& get(const Digest& key) const;
  bool contains(const Digest& key) const { return blobs_.contains(key); }
  std::size_t size() const { return blobs_.size(); }
  std::size_t total_bytes() const { return total_bytes_; }

  /// Writes each payload to `dir/<hex digest>`.
  void write_to(const std::filesystem::path& dir) const;

 private:
  std::map<Digest, std::vector<std::uint8_t>> blobs_;
  std::size_t total_bytes_ = 0;
};

class ChainError : public Error {
 public:
  using Error::Error;
};

/// First height whose recorded hash or link fails to verify, or nullopt.
std::optional<std::uint64_t> verify_blocks(std::span<const Block> blocks);

class Ledger {
 public:
  using Fingerprint = std::pair<Digest, TaskRound>;

  /// With `replay_check` off, duplicate fingerprints are neither rejected at
  /// submission nor at block append.
  explicit Ledger(const crypto::SignatureBackend& signatures = crypto::default_signatures(),
                  bool replay_check = true);

  /// Genesis block embedding the configuration and registered client keys.
  static Block make_genesis(nlohmann::json config);
  static nlohmann::json client_registry(std::span<const std::pair<ClientId, Digest>> keys);

  void register_client(ClientId id, const Digest& public_key);

  SubmitStatus submit_client_tx(const ClientTransaction& tx);

  /// Builds a block linked to the current tip.
  Block next_block(BlockKind kind, Block::Payload payload) const;

  /// Validates and appends; throws ChainError leaving the chain unchanged.
  std::uint64_t append_block(Block block);

  std::optional<std::uint64_t> verify_chain() const;

  const std::vector<Block>& chain() const { return chain_; }
  std::uint64_t height() const { return chain_.empty() ? 0 : chain_.back().height; }
  Digest tip_hash() const { return chain_.empty() ? Digest{} : chain_.back().block_hash; }

  const std::set<Fingerprint>& seen_fingerprints() const { return seen_; }
  const std::set<ClientId>& blacklist() const { return blacklist_; }
  bool is_blacklisted(ClientId id) const { return blacklist_.contains(id); }
  void blacklist(ClientId id) { blacklist_.insert(id); }

  OffchainStore& offchain() { return offchain_; }
  const OffchainStore& offchain() const { return offchain_; }

  /// Direct access to recorded blocks for tamper-injection audits.
  std::vector<Block>& blocks_unchecked() { return chain_; }

  void dump_jsonl(std::ostream& out) const;

 private:
  void validate(const Block& block) const;
  bool signature_ok(const ClientTransaction& tx) const;

  const crypto::SignatureBackend* signatures_;
  bool replay_check_ = true;
  std::vector<Block> chain_;
  std::map<ClientId, Digest> keys_;
  std::set<Fingerprint> seen_;
  std::set<Fingerprint> submitted_;
  std::set<ClientId> blacklist_;
  OffchainStore offchain_;
  Digest committed_tip_{};
};

nlohmann::json to_json(const Block& block);
Block block_from_json(const nlohmann::json& j);

/// Reads a JSON-lines chain dump. A line that cannot be parsed throws
/// ChainError naming its zero-based line index.
std::vector<Block> load_jsonl(std::istream& in);

}  // namespace lifechain
