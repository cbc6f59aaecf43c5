#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "lifechain/common.hpp"
#include "lifechain/knowledge_index.hpp"
#include "lifechain/ledger.hpp"

namespace lifechain {

struct ModelUpdate {
  ClientId owner{};
  TaskRound tr{};
  Vector weights;
};

struct McsOptions {
  /// Weight each cosine term by the norm of the other update.
  bool norm_weighted = false;
};

/// Sum over all updates (self included) of max(0, cos(W_i, W_j)).
/// Zero-norm updates score 0 and contribute nothing to others.
std::vector<double> mcs_scores(std::span<const ModelUpdate> updates, const McsOptions& opts = {});
double mcs(std::span<const ModelUpdate> updates, std::size_t i, const McsOptions& opts = {});

class UnderQuorum : public Error {
 public:
  using Error::Error;
};

struct Selection {
  Vector global;
  std::vector<ClientId> selected;
  std::map<ClientId, double> scores;
};

/// Top-n_a by score (ties by ascending client id), then the uniform mean.
Selection select_and_aggregate(std::span<const ModelUpdate> updates, std::size_t n_a,
                               const McsOptions& opts = {});

Digest model_hash(std::span<const double> weights);

/// Everything a committee member needs to recompute a round's blocks.
struct RoundInput {
  TaskRound tr{};
  std::vector<ClientTransaction> txs;
  std::vector<ModelUpdate> updates;
  std::vector<Vector> knowledge;
  std::shared_ptr<const HyperplaneSet> hyperplanes;
  std::size_t n_a = 1;
  McsOptions mcs;
  std::uint64_t height = 0;  // height the server block will take
  Digest prev_hash{};
  std::uint64_t server_tx_id = 0;
};

struct Proposal {
  Block server_block;
  Block client_block;
  Vector global;
  Digest digest{};

  const ServerTransaction& server_tx() const { return server_block.server_txs().front(); }
};

/// Builds the server and client blocks. `gamma` scales the aggregate before
/// hashing; 1 is honest.
Proposal build_proposal(const RoundInput& input, double gamma = 1.0);

/// Name of the first field where `proposal` differs from `expected`, or nullopt.
std::optional<std::string> validate_proposal(const Proposal& expected, const Proposal& proposal);

/// Recomputes the expected proposal from `view` and compares.
std::optional<std::string> validate_proposal(const RoundInput& view, const Proposal& proposal);

// --- PoMC state machine ---------------------------------------------------------

/// Strictly more than this many votes or commits are required.
constexpr std::size_t pomc_threshold(std::size_t s) { return (2 * s + 2) / 3; }

/// Largest number of Byzantine servers the quorum tolerates.
constexpr std::size_t pomc_tolerance(std::size_t s) { return s == 0 ? 0 : (s - 1) / 3; }

enum class MsgKind : std::uint8_t { Propose, Vote, Commit, Decide };

std::string to_string(MsgKind k);

struct Message {
  MsgKind kind = MsgKind::Propose;
  ServerId from{};
  ServerId to{};
  Digest digest{};
  std::shared_ptr<const Proposal> proposal;  // Propose only
};

enum class Phase : std::uint8_t { Preparing, Voting, Committing, Committed, Aborted };

std::string to_string(Phase p);

enum class Behavior : std::uint8_t {
  Honest,
  Silent,      // never sends anything
  Tamper,      // holds gamma * W_g as its view of the aggregate
  Equivocate,  // as primary, sends a conflicting proposal to masked replicas;
               // as replica, votes and commits for every digest it sees
};

struct ServerProfile {
  Behavior behavior = Behavior::Honest;
  double gamma = 10.0;               // Tamper
  std::uint64_t equivocate_mask = 0;  // Equivocate: replicas receiving the alternate proposal
};

class PomcServer {
 public:
  PomcServer(ServerId id, std::size_t committee_size, ServerId primary, ServerProfile profile,
             std::shared_ptr<const RoundInput> view);

  std::vector<Message> start();
  std::vector<Message> on_message(const Message& m);

  ServerId id() const { return id_; }
  bool is_primary() const { return id_ == primary_; }
  Phase phase() const { return phase_; }
  const ServerProfile& profile() const { return profile_; }
  bool honest() const { return profile_.behavior == Behavior::Honest; }
  bool rejected() const { return rejected_field_.has_value(); }
  const std::optional<std::string>& rejected_field() const { return rejected_field_; }
  const std::optional<Digest>& accepted() const { return accepted_; }
  const std::optional<Digest>& finalized() const { return finalized_; }
  std::size_t votes_for(const Digest& d) const;
  std::size_t commits_for(const Digest& d) const;

  /// The proposal this server would make or accept, built lazily.
  const Proposal& own_proposal();

  /// Compact encoding of the mutable protocol state, for schedule exploration.
  std::string state_key() const;

 private:
  std::vector<Message> broadcast(MsgKind kind, const Digest& d) const;
  std::vector<Message> maybe_commit(const Digest& d);
  std::vector<Message> maybe_finalize(const Digest& d);

  ServerId id_;
  std::size_t s_;
  ServerId primary_;
  ServerProfile profile_;
  std::shared_ptr<const RoundInput> view_;
  std::shared_ptr<const Proposal> own_;
  Phase phase_ = Phase::Preparing;
  std::optional<Digest> accepted_;
  std::optional<Digest> finalized_;
  std::optional<std::string> rejected_field_;
  std::map<Digest, std::set<ServerId>> votes_;
  std::map<Digest, std::set<ServerId>> commits_;
  std::set<Digest> committed_to_;
};

// --- round driver ---------------------------------------------------------------

enum class AbortReason : std::uint8_t { None, Timeout, NoQuorum, UnderQuorum };

std::string to_string(AbortReason r);

struct CommitteeConfig {
  std::size_t s = 6;
  std::size_t retry_budget = 3;
  std::size_t message_budget = 0;  // 0 selects a default proportional to s^2
  bool random_schedule = false;
  std::uint64_t schedule_seed = 0;
};

struct MessageCounts {
  std::size_t propose = 0;
  std::size_t vote = 0;
  std::size_t commit = 0;
  std::size_t decide = 0;
  std::size_t total() const { return propose + vote + commit + decide; }
};

struct AttemptRecord {
  ServerId primary{};
  AbortReason outcome = AbortReason::None;
  std::optional<std::string> rejected_field;
  MessageCounts messages;
};

struct RoundOutcome {
  bool committed = false;
  AbortReason reason = AbortReason::None;
  std::optional<Proposal> proposal;
  std::vector<AttemptRecord> attempts;
};

/// Round-robin primary over (task, round) plus attempt offset, skipping
/// servers in `excluded` when possible.
ServerId choose_primary(std::size_t s, std::uint64_t round_index, std::size_t attempt,
                        const std::set<ServerId>& excluded);

/// Runs prepare/vote/commit with abort-and-rotate until commit or the retry
/// budget is spent. `views[i]` is server i's own copy of the round input.
RoundOutcome pomc_round(const CommitteeConfig& cfg, std::span<const ServerProfile> profiles,
                        std::span<const std::shared_ptr<const RoundInput>> views,
                        std::uint64_t round_index, const std::set<ServerId>& excluded = {});

}  // namespace lifechain
