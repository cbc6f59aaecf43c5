#include "lifechain/ledger.hpp"

#include <fstream>
#include <istream>
#include <ostream>

namespace lifechain {

Digest fingerprint(std::span<const std::uint8_t> payload) { return crypto::sha256(payload); }

// --- transactions ---------------------------------------------------------------

namespace {

void write_signed_fields(const ClientTransaction& tx, ByteWriter& w) {
  w.u64(tx.tx_id);
  w.u32(to_index(tx.owner));
  w.u32(tx.tr.task);
  w.u32(tx.tr.round);
  w.digest(tx.model_hash);
  w.u32(static_cast<std::uint32_t>(tx.krv.size()));
  for (std::uint32_t b : tx.krv) w.u32(b);
  w.u64(tx.timestamp);
}

}  // namespace

std::vector<std::uint8_t> ClientTransaction::signing_bytes() const {
  ByteWriter w;
  w.str("client-tx");
  write_signed_fields(*this, w);
  return w.take();
}

void ClientTransaction::serialize(ByteWriter& w) const {
  write_signed_fields(*this, w);
  w.digest(signature);
}

void ClientTransaction::sign(const crypto::KeyPair& keys,
                             const crypto::SignatureBackend& backend) {
  signature = backend.sign(keys, signing_bytes());
}

void ServerTransaction::serialize(ByteWriter& w) const {
  w.u64(tx_id);
  w.u32(tr.task);
  w.u32(tr.round);
  w.digest(merkle_root);
  w.u32(static_cast<std::uint32_t>(selected.size()));
  for (ClientId id : selected) w.u32(to_index(id));
  w.digest(global_model_hash);
}

std::string to_string(BlockKind kind) {
  switch (kind) {
    case BlockKind::Genesis: return "genesis";
    case BlockKind::Client: return "client";
    case BlockKind::Server: return "server";
  }
  return "unknown";
}

std::string to_string(SubmitStatus s) {
  switch (s) {
    case SubmitStatus::Accepted: return "accepted";
    case SubmitStatus::Replay: return "replay";
    case SubmitStatus::Blacklisted: return "blacklisted";
    case SubmitStatus::BadSignature: return "bad-signature";
  }
  return "unknown";
}

// --- blocks ---------------------------------------------------------------------

std::vector<std::uint8_t> Block::payload_bytes() const {
  ByteWriter w;
  w.u8(static_cast<std::uint8_t>(kind));
  if (const auto* g = std::get_if<GenesisConfig>(&payload)) {
    w.str(g->config.dump());
  } else if (const auto* c = std::get_if<std::vector<ClientTransaction>>(&payload)) {
    w.u32(static_cast<std::uint32_t>(c->size()));
    for (const auto& tx : *c) tx.serialize(w);
  } else {
    const auto& s = std::get<std::vector<ServerTransaction>>(payload);
    w.u32(static_cast<std::uint32_t>(s.size()));
    for (const auto& tx : s) tx.serialize(w);
  }
  return w.take();
}

Digest Block::compute_hash() const {
  ByteWriter w;
  w.digest(prev_hash);
  const auto body = payload_bytes();
  w.bytes(body);
  w.u64(height);
  return crypto::sha256(w.data());
}

const std::vector<ClientTransaction>& Block::client_txs() const {
  if (const auto* c = std::get_if<std::vector<ClientTransaction>>(&payload)) return *c;
  throw ChainError("block " + std::to_string(height) + " is not a client block");
}

const std::vector<ServerTransaction>& Block::server_txs() const {
  if (const auto* s = std::get_if<std::vector<ServerTransaction>>(&payload)) return *s;
  throw ChainError("block " + std::to_string(height) + " is not a server block");
}

const nlohmann::json& Block::genesis_config() const {
  if (const auto* g = std::get_if<GenesisConfig>(&payload)) return g->config;
  throw ChainError("block " + std::to_string(height) + " is not a genesis block");
}

std::size_t knowledge_bytes(const Block& block) {
  const auto* c = std::get_if<std::vector<ClientTransaction>>(&block.payload);
  if (c == nullptr) return 0;
  std::size_t n = 0;
  for (const auto& tx : *c) n += tx.krv.size() * sizeof(std::uint32_t);
  return n;
}

// --- merkle ---------------------------------------------------------------------

namespace {

Digest hash_pair(const Digest& a, const Digest& b) {
  std::array<std::uint8_t, 64> buf{};
  std::copy(a.begin(), a.end(), buf.begin());
  std::copy(b.begin(), b.end(), buf.begin() + 32);
  return crypto::sha256(std::span<const std::uint8_t>(buf));
}

std::vector<Digest> next_level(const std::vector<Digest>& level) {
  std::vector<Digest> up;
  up.reserve((level.size() + 1) / 2);
  for (std::size_t i = 0; i + 1 < level.size(); i += 2) up.push_back(hash_pair(level[i], level[i + 1]));
  if (level.size() % 2 == 1) up.push_back(level.back());
  return up;
}

}  // namespace

Digest merkle_root(std::span<const Digest> leaves) {
  if (leaves.empty()) throw InvalidInput("merkle_root of no leaves");
  std::vector<Digest> level(leaves.begin(), leaves.end());
  while (level.size() > 1) level = next_level(level);
  return level.front();
}

std::vector<MerkleStep> merkle_proof(std::span<const Digest> leaves, std::size_t index) {
  if (index >= leaves.size()) throw InvalidInput("merkle leaf index out of range");
  std::vector<MerkleStep> proof;
  std::vector<Digest> level(leaves.begin(), leaves.end());
  while (level.size() > 1) {
    const std::size_t sibling = index ^ 1U;
    if (sibling < level.size()) proof.push_back({level[sibling], sibling < index});
    level = next_level(level);
    index /= 2;
  }
  return proof;
}

bool verify_merkle_proof(const Digest& leaf, std::span<const MerkleStep> proof,
                         const Digest& root) {
  Digest acc = leaf;
  for (const auto& step : proof) {
    acc = step.sibling_on_left ? hash_pair(step.sibling, acc) : hash_pair(acc, step.sibling);
  }
  return acc == root;
}

// --- off-chain store ------------------------------------------------------------

Digest OffchainStore::put(std::vector<std::uint8_t> payload) {
  const Digest key = fingerprint(payload);
  if (!blobs_.contains(key)) {
    total_bytes_ += payload.size();
    blobs_.emplace(key, std::move(payload));
  }
  return key;
}

const std::vector<std::uint8_t>& OffchainStore::get(const Digest& key) const {
  const auto it = blobs_.find(key);
  if (it == blobs_.end()) throw InvalidInput("no off-chain payload for " + to_hex(key));
  return it->second;
}

void OffchainStore::write_to(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  for (const auto& [key, blob] : blobs_) {
    std::ofstream out(dir / to_hex(key), std::ios::binary);
    out.write(reinterpret_cast<const char*>(blob.data()), static_cast<std::streamsize>(blob.size()));
    if (!out) throw Error("failed to write off-chain payload " + to_hex(key));
  }
}

// --- chain ----------------------------------------------------------------------

std::optional<std::uint64_t> verify_blocks(std::span<const Block> blocks) {
  Digest prev{};
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const Block& b = blocks[i];
    if (b.height != i || b.prev_hash != prev || b.compute_hash() != b.block_hash) return i;
    if ((i == 0) != (b.kind == BlockKind::Genesis)) return i;
    prev = b.block_hash;
  }
  return std::nullopt;
}

Ledger::Ledger(const crypto::SignatureBackend& signatures, bool replay_check)
    : signatures_(&signatures), replay_check_(replay_check) {}

nlohmann::json Ledger::client_registry(std::span<const std::pair<ClientId, Digest>> keys) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& [id, pub] : keys) {
    out.push_back({{"id", to_index(id)}, {"public_key", to_hex(pub)}});
  }
  return out;
}

Block Ledger::make_genesis(nlohmann::json config) {
  Block b;
  b.kind = BlockKind::Genesis;
  b.payload = GenesisConfig{std::move(config)};
  b.block_hash = b.compute_hash();
  return b;
}

void Ledger::register_client(ClientId id, const Digest& public_key) { keys_[id] = public_key; }

bool Ledger::signature_ok(const ClientTransaction& tx) const {
  const auto it = keys_.find(tx.owner);
  return it != keys_.end() && signatures_->verify(it->second, tx.signing_bytes(), tx.signature);
}

SubmitStatus Ledger::submit_client_tx(const ClientTransaction& tx) {
  if (!keys_.contains(tx.owner)) return SubmitStatus::BadSignature;
  if (blacklist_.contains(tx.owner)) return SubmitStatus::Blacklisted;
  if (!signature_ok(tx)) return SubmitStatus::BadSignature;
  const Fingerprint fp{tx.model_hash, tx.tr};
  if (replay_check_ && (seen_.contains(fp) || submitted_.contains(fp))) {
    blacklist_.insert(tx.owner);
    return SubmitStatus::Replay;
  }
  submitted_.insert(fp);
  return SubmitStatus::Accepted;
}

Block Ledger::next_block(BlockKind kind, Block::Payload payload) const {
  if (chain_.empty()) throw ChainError("chain has no genesis block");
  Block b;
  b.height = chain_.size();
  b.prev_hash = chain_.back().block_hash;
  b.kind = kind;
  b.payload = std::move(payload);
  b.block_hash = b.compute_hash();
  return b;
}

void Ledger::validate(const Block& block) const {
  const std::string at = "block " + std::to_string(block.height) + ": ";
  if (block.height != chain_.size()) throw ChainError(at + "unexpected height");
  if (block.prev_hash != tip_hash()) throw ChainError(at + "prev_hash does not link to tip");
  if (block.compute_hash() != block.block_hash) throw ChainError(at + "block_hash mismatch");

  const bool genesis_slot = chain_.empty();
  if (genesis_slot != (block.kind == BlockKind::Genesis)) {
    throw ChainError(at + "genesis must be first and only first");
  }
  if (block.payload.index() != static_cast<std::size_t>(block.kind)) throw ChainError(at + "payload does not match kind");

  if (block.kind == BlockKind::Server) {
    for (const auto& tx : block.server_txs()) {
      std::set<ClientId> uniq(tx.selected.begin(), tx.selected.end());
      if (uniq.size() != tx.selected.size()) throw ChainError(at + "duplicate selected client");
    }
  } else if (block.kind == BlockKind::Client) {
    std::set<Fingerprint> in_block;
    const auto& txs = block.client_txs();
    for (const auto& tx : txs) {
      if (!signature_ok(tx)) throw ChainError(at + "invalid client signature");
      const Fingerprint fp{tx.model_hash, tx.tr};
      const bool duplicate = seen_.contains(fp) || !in_block.insert(fp).second;
      if (replay_check_ && duplicate) {
        throw ChainError(at + "replayed client transaction");
      }
    }
    // A client block that follows a server block must carry exactly the
    // selected clients' transactions, in selection order.
    if (!chain_.empty() && chain_.back().kind == BlockKind::Server) {
      for (const auto& stx : chain_.back().server_txs()) {
        if (stx.selected.size() != txs.size()) throw ChainError(at + "selection size mismatch");
        std::vector<Digest> leaves;
        for (std::size_t i = 0; i < txs.size(); ++i) {
          if (txs[i].owner != stx.selected[i] || txs[i].tr != stx.tr) {
            throw ChainError(at + "transactions do not follow the selection");
          }
          leaves.push_back(txs[i].model_hash);
        }
        if (!leaves.empty() && merkle_root(leaves) != stx.merkle_root) {
          throw ChainError(at + "merkle root mismatch");
        }
      }
    }
  }
}

std::uint64_t Ledger::append_block(Block block) {
  validate(block);
  if (block.kind == BlockKind::Genesis) {
    const auto& cfg = block.genesis_config();
    if (cfg.is_object() && cfg.contains("clients")) {
      for (const auto& c : cfg.at("clients")) {
        keys_[ClientId{c.at("id").get<std::uint32_t>()}] =
            digest_from_hex(c.at("public_key").get<std::string>());
      }
    }
  } else if (block.kind == BlockKind::Client) {
    for (const auto& tx : block.client_txs()) seen_.insert({tx.model_hash, tx.tr});
  }
  committed_tip_ = block.block_hash;
  chain_.push_back(std::move(block));
  return chain_.back().height;
}

std::optional<std::uint64_t> Ledger::verify_chain() const {
  if (auto bad = verify_blocks(chain_)) return bad;
  if (!chain_.empty() && chain_.back().block_hash != committed_tip_) return chain_.back().height;
  return std::nullopt;
}

// --- JSON -----------------------------------------------------------------------

nlohmann::json to_json(const Block& block) {
  nlohmann::json j{{"height", block.height},
                   {"prev_hash", to_hex(block.prev_hash)},
                   {"kind", to_string(block.kind)},
                   {"block_hash", to_hex(block.block_hash)}};
  if (const auto* g = std::get_if<GenesisConfig>(&block.payload)) {
    j["config"] = g->config;
  } else if (const auto* c = std::get_if<std::vector<ClientTransaction>>(&block.payload)) {
    auto& txs = j["txs"] = nlohmann::json::array();
    for (const auto& tx : *c) {
      txs.push_back({{"tx_id", tx.tx_id},
                     {"owner", to_index(tx.owner)},
                     {"task", tx.tr.task},
                     {"round", tx.tr.round},
                     {"model_hash", to_hex(tx.model_hash)},
                     {"krv", tx.krv},
                     {"timestamp", tx.timestamp},
                     {"signature", to_hex(tx.signature)}});
    }
  } else {
    auto& txs = j["txs"] = nlohmann::json::array();
    for (const auto& tx : std::get<std::vector<ServerTransaction>>(block.payload)) {
      std::vector<std::uint32_t> sel;
      for (ClientId id : tx.selected) sel.push_back(to_index(id));
      txs.push_back({{"tx_id", tx.tx_id},
                     {"task", tx.tr.task},
                     {"round", tx.tr.round},
                     {"merkle_root", to_hex(tx.merkle_root)},
                     {"selected", sel},
                     {"global_model_hash", to_hex(tx.global_model_hash)}});
    }
  }
  return j;
}

Block block_from_json(const nlohmann::json& j) {
  Block b;
  b.height = j.at("height").get<std::uint64_t>();
  b.prev_hash = digest_from_hex(j.at("prev_hash").get<std::string>());
  b.block_hash = digest_from_hex(j.at("block_hash").get<std::string>());
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "genesis") {
    b.kind = BlockKind::Genesis;
    b.payload = GenesisConfig{j.at("config")};
  } else if (kind == "client") {
    b.kind = BlockKind::Client;
    std::vector<ClientTransaction> txs;
    for (const auto& t : j.at("txs")) {
      ClientTransaction tx;
      tx.tx_id = t.at("tx_id").get<std::uint64_t>();
      tx.owner = ClientId{t.at("owner").get<std::uint32_t>()};
      tx.tr = {t.at("task").get<std::uint32_t>(), t.at("round").get<std::uint32_t>()};
      tx.model_hash = digest_from_hex(t.at("model_hash").get<std::string>());
      tx.krv = t.at("krv").get<Krv>();
      tx.timestamp = t.at("timestamp").get<std::uint64_t>();
      tx.signature = digest_from_hex(t.at("signature").get<std::string>());
      txs.push_back(std::move(tx));
    }
    b.payload = std::move(txs);
  } else if (kind == "server") {
    b.kind = BlockKind::Server;
    std::vector<ServerTransaction> txs;
    for (const auto& t : j.at("txs")) {
      ServerTransaction tx;
      tx.tx_id = t.at("tx_id").get<std::uint64_t>();
      tx.tr = {t.at("task").get<std::uint32_t>(), t.at("round").get<std::uint32_t>()};
      tx.merkle_root = digest_from_hex(t.at("merkle_root").get<std::string>());
      for (auto id : t.at("selected").get<std::vector<std::uint32_t>>()) {
        tx.selected.push_back(ClientId{id});
      }
      tx.global_model_hash = digest_from_hex(t.at("global_model_hash").get<std::string>());
      txs.push_back(std::move(tx));
    }
    b.payload = std::move(txs);
  } else {
    throw InvalidInput("unknown block kind '" + kind + "'");
  }
  return b;
}

void Ledger::dump_jsonl(std::ostream& out) const {
  for (const auto& b : chain_) out << to_json(b).dump() << '\n';
}

std::vector<Block> load_jsonl(std::istream& in) {
  std::vector<Block> blocks;
  std::string line;
  std::size_t index = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      blocks.push_back(block_from_json(nlohmann::json::parse(line)));
    } catch (const std::exception& e) {
      throw ChainError("line " + std::to_string(index) + ": " + e.what());
    }
    ++index;
  }
  return blocks;
}

}  // namespace lifechain
