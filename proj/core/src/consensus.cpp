#include "lifechain/consensus.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>
#include <random>

#include <boost/random/uniform_int_distribution.hpp>

#include "lifechain/bytes.hpp"
#include "lifechain/crypto.hpp"

namespace lifechain {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

std::vector<double> mcs_scores(std::span<const ModelUpdate> updates, const McsOptions& opts) {
  if (updates.empty()) throw InvalidInput("mcs of no updates");
  const std::size_t d = updates.front().weights.size();
  std::vector<double> norms(updates.size());
  for (std::size_t i = 0; i < updates.size(); ++i) {
    if (updates[i].weights.size() != d) throw InvalidInput("update dimensions differ");
    norms[i] = std::sqrt(dot(updates[i].weights, updates[i].weights));
  }
  std::vector<double> scores(updates.size(), 0.0);
  for (std::size_t i = 0; i < updates.size(); ++i) {
    if (norms[i] == 0.0) continue;
    for (std::size_t j = 0; j < updates.size(); ++j) {
      if (norms[j] == 0.0) continue;
      const double c = dot(updates[i].weights, updates[j].weights) / (norms[i] * norms[j]);
      const double term = std::max(0.0, c);
      scores[i] += opts.norm_weighted ? term * norms[j] : term;
    }
  }
  return scores;
}

double mcs(std::span<const ModelUpdate> updates, std::size_t i, const McsOptions& opts) {
  if (i >= updates.size()) throw InvalidInput("mcs index out of range");
  return mcs_scores(updates, opts)[i];
}

Selection select_and_aggregate(std::span<const ModelUpdate> updates, std::size_t n_a,
                               const McsOptions& opts) {
  if (n_a == 0) throw InvalidInput("n_a must be at least 1");
  if (updates.size() < n_a) {
    throw UnderQuorum("only " + std::to_string(updates.size()) + " updates for n_a=" +
                      std::to_string(n_a));
  }
  const auto scores = mcs_scores(updates, opts);
  std::vector<std::size_t> order(updates.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return to_index(updates[a].owner) < to_index(updates[b].owner);
  });

  Selection out;
  const std::size_t d = updates.front().weights.size();
  out.global.assign(d, 0.0);
  for (std::size_t k = 0; k < n_a; ++k) {
    const auto& u = updates[order[k]];
    out.selected.push_back(u.owner);
    for (std::size_t j = 0; j < d; ++j) out.global[j] += u.weights[j];
  }
  for (double& x : out.global) x /= static_cast<double>(n_a);
  for (std::size_t i = 0; i < updates.size(); ++i) out.scores[updates[i].owner] = scores[i];
  return out;
}

Digest model_hash(std::span<const double> weights) {
  return fingerprint(serialize_vector(weights));
}

// --- proposals ------------------------------------------------------------------

namespace {

Digest proposal_digest(const Proposal& p) {
  ByteWriter w;
  w.digest(p.server_block.block_hash);
  w.digest(p.client_block.block_hash);
  return crypto::sha256(w.data());
}

void seal(Proposal& p) {
  p.server_block.block_hash = p.server_block.compute_hash();
  p.client_block.prev_hash = p.server_block.block_hash;
  p.client_block.block_hash = p.client_block.compute_hash();
  p.digest = proposal_digest(p);
}

}  // namespace

Proposal build_proposal(const RoundInput& input, double gamma) {
  if (input.txs.size() != input.updates.size()) {
    throw InvalidInput("round input has mismatched transactions and updates");
  }
  Selection sel = select_and_aggregate(input.updates, input.n_a, input.mcs);
  if (gamma != 1.0) {
    for (double& x : sel.global) x *= gamma;
  }

  std::map<ClientId, std::size_t> slot;
  for (std::size_t i = 0; i < input.txs.size(); ++i) slot[input.txs[i].owner] = i;

  ServerTransaction stx;
  stx.tx_id = input.server_tx_id;
  stx.tr = input.tr;
  stx.selected = sel.selected;
  stx.global_model_hash = model_hash(sel.global);

  std::vector<ClientTransaction> ctxs;
  std::vector<Digest> leaves;
  for (ClientId id : sel.selected) {
    ClientTransaction tx = input.txs.at(slot.at(id));
    if (input.hyperplanes && !input.knowledge.empty()) {
      tx.krv = compute_krv(*input.hyperplanes, input.knowledge.at(slot.at(id)));
    }
    leaves.push_back(tx.model_hash);
    ctxs.push_back(std::move(tx));
  }
  stx.merkle_root = merkle_root(leaves);

  Proposal p;
  p.server_block.height = input.height;
  p.server_block.prev_hash = input.prev_hash;
  p.server_block.kind = BlockKind::Server;
  p.server_block.payload = std::vector<ServerTransaction>{std::move(stx)};
  p.client_block.height = input.height + 1;
  p.client_block.kind = BlockKind::Client;
  p.client_block.payload = std::move(ctxs);
  p.global = std::move(sel.global);
  seal(p);
  return p;
}

std::optional<std::string> validate_proposal(const Proposal& expected, const Proposal& proposal) {
  const auto* ps = std::get_if<std::vector<ServerTransaction>>(&proposal.server_block.payload);
  const auto* pc = std::get_if<std::vector<ClientTransaction>>(&proposal.client_block.payload);
  if (ps == nullptr || ps->size() != 1 || pc == nullptr) return "block_kind";
  const auto& e = expected.server_tx();
  const auto& p = ps->front();
  if (p.selected != e.selected) return "selected";
  if (p.global_model_hash != e.global_model_hash) return "global_model_hash";
  if (p.merkle_root != e.merkle_root) return "merkle_root";
  const auto& ec = expected.client_block.client_txs();
  if (pc->size() != ec.size()) return "client_txs";
  for (std::size_t i = 0; i < ec.size(); ++i) {
    if ((*pc)[i].krv != ec[i].krv) return "krv";
  }
  for (std::size_t i = 0; i < ec.size(); ++i) {
    if ((*pc)[i] != ec[i]) return "client_txs";
  }
  if (p != e) return "server_tx";
  if (proposal.server_block.height != expected.server_block.height ||
      proposal.server_block.prev_hash != expected.server_block.prev_hash) {
    return "prev_hash";
  }
  if (proposal.server_block.block_hash != proposal.server_block.compute_hash()) {
    return "server_block_hash";
  }
  if (proposal.client_block.height != expected.client_block.height ||
      proposal.client_block.prev_hash != proposal.server_block.block_hash) {
    return "client_prev_hash";
  }
  if (proposal.client_block.block_hash != proposal.client_block.compute_hash()) {
    return "client_block_hash";
  }
  if (proposal.digest != proposal_digest(proposal)) return "digest";
  if (model_hash(proposal.global) != p.global_model_hash) return "global_model";
  return std::nullopt;
}

std::optional<std::string> validate_proposal(const RoundInput& view, const Proposal& proposal) {
  return validate_proposal(build_proposal(view), proposal);
}

// --- PomcServer -----------------------------------------------------------------

std::string to_string(MsgKind k) {
  switch (k) {
    case MsgKind::Propose: return "propose";
    case MsgKind::Vote: return "vote";
    case MsgKind::Commit: return "commit";
    case MsgKind::Decide: return "decide";
  }
  return "unknown";
}

std::string to_string(Phase p) {
  switch (p) {
    case Phase::Preparing: return "preparing";
    case Phase::Voting: return "voting";
    case Phase::Committing: return "committing";
    case Phase::Committed: return "committed";
    case Phase::Aborted: return "aborted";
  }
  return "unknown";
}

std::string to_string(AbortReason r) {
  switch (r) {
    case AbortReason::None: return "none";
    case AbortReason::Timeout: return "timeout";
    case AbortReason::NoQuorum: return "no-quorum";
    case AbortReason::UnderQuorum: return "under-quorum";
  }
  return "unknown";
}

PomcServer::PomcServer(ServerId id, std::size_t committee_size, ServerId primary,
                       ServerProfile profile, std::shared_ptr<const RoundInput> view)
    : id_(id), s_(committee_size), primary_(primary), profile_(profile), view_(std::move(view)) {
  if (to_index(id) >= s_ || to_index(primary) >= s_) throw InvalidInput("server id out of range");
  if (profile_.behavior == Behavior::Equivocate && s_ > 64) {
    throw InvalidInput("equivocation mask supports at most 64 servers");
  }
}

const Proposal& PomcServer::own_proposal() {
  if (!own_) {
    const double gamma = profile_.behavior == Behavior::Tamper ? profile_.gamma : 1.0;
    own_ = std::make_shared<const Proposal>(build_proposal(*view_, gamma));
  }
  return *own_;
}

std::size_t PomcServer::votes_for(const Digest& d) const {
  const auto it = votes_.find(d);
  return it == votes_.end() ? 0 : it->second.size();
}

std::size_t PomcServer::commits_for(const Digest& d) const {
  const auto it = commits_.find(d);
  return it == commits_.end() ? 0 : it->second.size();
}

std::vector<Message> PomcServer::broadcast(MsgKind kind, const Digest& d) const {
  std::vector<Message> out;
  out.reserve(s_);
  for (std::uint32_t k = 0; k < s_; ++k) out.push_back({kind, id_, ServerId{k}, d, nullptr});
  return out;
}

std::vector<Message> PomcServer::start() {
  if (profile_.behavior == Behavior::Silent || !is_primary()) return {};
  const Proposal& mine = own_proposal();
  std::shared_ptr<const Proposal> alt;
  if (profile_.behavior == Behavior::Equivocate && profile_.equivocate_mask != 0) {
    Proposal p = mine;
    auto stx = p.server_tx();
    if (stx.selected.size() >= 2) {
      std::swap(stx.selected[0], stx.selected[1]);
    } else {
      stx.global_model_hash[0] ^= 0x01;
    }
    p.server_block.payload = std::vector<ServerTransaction>{stx};
    p.server_block.block_hash = p.server_block.compute_hash();
    p.client_block.prev_hash = p.server_block.block_hash;
    p.client_block.block_hash = p.client_block.compute_hash();
    p.digest = proposal_digest(p);
    alt = std::make_shared<const Proposal>(std::move(p));
  }
  std::vector<Message> out;
  for (std::uint32_t k = 0; k < s_; ++k) {
    const bool masked = alt && ((profile_.equivocate_mask >> k) & 1U) != 0;
    const auto& body = masked ? alt : own_;
    out.push_back({MsgKind::Propose, id_, ServerId{k}, body->digest, body});
  }
  phase_ = Phase::Voting;
  return out;
}

std::vector<Message> PomcServer::maybe_commit(const Digest& d) {
  if (committed_to_.contains(d)) return {};
  const bool mine = profile_.behavior == Behavior::Equivocate || (accepted_ && *accepted_ == d);
  if (!mine || votes_for(d) <= pomc_threshold(s_)) return {};
  committed_to_.insert(d);
  if (phase_ == Phase::Voting) phase_ = Phase::Committing;
  return {Message{MsgKind::Commit, id_, primary_, d, nullptr}};
}

std::vector<Message> PomcServer::maybe_finalize(const Digest& d) {
  if (finalized_ || !is_primary()) return {};
  const bool mine = profile_.behavior == Behavior::Equivocate || (accepted_ && *accepted_ == d);
  if (!mine || commits_for(d) <= pomc_threshold(s_)) return {};
  finalized_ = d;
  phase_ = Phase::Committed;
  auto out = broadcast(MsgKind::Decide, d);
  std::erase_if(out, [this](const Message& m) { return m.to == id_; });
  return out;
}

std::vector<Message> PomcServer::on_message(const Message& m) {
  if (profile_.behavior == Behavior::Silent) return {};
  std::vector<Message> out;
  switch (m.kind) {
    case MsgKind::Propose: {
      if (m.from != primary_ || !m.proposal) break;
      if (profile_.behavior == Behavior::Equivocate) {
        if (!accepted_) accepted_ = m.digest;
        out = broadcast(MsgKind::Vote, m.digest);
        phase_ = Phase::Voting;
        break;
      }
      if (accepted_ || rejected_field_) break;
      if (m.proposal->digest != m.digest) {
        rejected_field_ = "digest";
      } else {
        rejected_field_ = validate_proposal(own_proposal(), *m.proposal);
      }
      if (rejected_field_) {
        phase_ = Phase::Aborted;
        break;
      }
      accepted_ = m.digest;
      phase_ = Phase::Voting;
      out = broadcast(MsgKind::Vote, m.digest);
      auto more = maybe_commit(m.digest);
      out.insert(out.end(), more.begin(), more.end());
      break;
    }
    case MsgKind::Vote: {
      votes_[m.digest].insert(m.from);
      out = maybe_commit(m.digest);
      break;
    }
    case MsgKind::Commit: {
      if (!is_primary()) break;
      commits_[m.digest].insert(m.from);
      out = maybe_finalize(m.digest);
      break;
    }
    case MsgKind::Decide: {
      if (m.from != primary_ || finalized_) break;
      if (profile_.behavior == Behavior::Equivocate || (accepted_ && *accepted_ == m.digest)) {
        finalized_ = m.digest;
        phase_ = Phase::Committed;
      }
      break;
    }
  }
  return out;
}

std::string PomcServer::state_key() const {
  ByteWriter w;
  w.u8(static_cast<std::uint8_t>(phase_));
  w.u8(accepted_ ? 1 : 0);
  if (accepted_) w.digest(*accepted_);
  w.u8(finalized_ ? 1 : 0);
  if (finalized_) w.digest(*finalized_);
  w.u8(rejected_field_ ? 1 : 0);
  auto tally = [&w](const std::map<Digest, std::set<ServerId>>& m) {
    w.u32(static_cast<std::uint32_t>(m.size()));
    for (const auto& [d, ids] : m) {
      w.digest(d);
      std::uint64_t mask = 0;
      for (ServerId id : ids) mask |= std::uint64_t{1} << (to_index(id) % 64);
      w.u64(mask);
    }
  };
  tally(votes_);
  tally(commits_);
  w.u32(static_cast<std::uint32_t>(committed_to_.size()));
  for (const auto& d : committed_to_) w.digest(d);
  const auto& bytes = w.data();
  return {bytes.begin(), bytes.end()};
}

// --- driver ---------------------------------------------------------------------

ServerId choose_primary(std::size_t s, std::uint64_t round_index, std::size_t attempt,
                        const std::set<ServerId>& excluded) {
  if (s == 0) throw InvalidInput("empty committee");
  const std::uint64_t base = round_index + attempt;
  for (std::size_t k = 0; k < s; ++k) {
    const auto id = ServerId{static_cast<std::uint32_t>((base + k) % s)};
    if (!excluded.contains(id)) return id;
  }
  return ServerId{static_cast<std::uint32_t>(base % s)};
}

RoundOutcome pomc_round(const CommitteeConfig& cfg, std::span<const ServerProfile> profiles,
                        std::span<const std::shared_ptr<const RoundInput>> views,
                        std::uint64_t round_index, const std::set<ServerId>& excluded) {
  if (profiles.size() != cfg.s || views.size() != cfg.s) {
    throw InvalidInput("committee profiles and views must have s entries");
  }
  const std::size_t budget = cfg.message_budget ? cfg.message_budget : 4 * cfg.s * cfg.s + 16;
  std::mt19937_64 rng(derive_seed(cfg.schedule_seed, round_index));

  RoundOutcome result;
  std::set<ServerId> skip = excluded;
  for (std::size_t attempt = 0; attempt < cfg.retry_budget; ++attempt) {
    const ServerId primary = choose_primary(cfg.s, round_index, attempt, skip);
    AttemptRecord rec;
    rec.primary = primary;

    std::vector<PomcServer> servers;
    servers.reserve(cfg.s);
    for (std::uint32_t k = 0; k < cfg.s; ++k) {
      servers.emplace_back(ServerId{k}, cfg.s, primary, profiles[k], views[k]);
    }

    std::deque<Message> inflight;
    std::map<Digest, std::shared_ptr<const Proposal>> bodies;
    try {
      for (auto& srv : servers) {
        for (auto& m : srv.start()) inflight.push_back(std::move(m));
      }
    } catch (const UnderQuorum&) {
      rec.outcome = AbortReason::UnderQuorum;
      result.attempts.push_back(rec);
      result.reason = AbortReason::UnderQuorum;
      return result;
    }

    std::size_t delivered = 0;
    bool over_budget = false;
    while (!inflight.empty()) {
      if (delivered >= budget) {
        over_budget = true;
        break;
      }
      std::size_t pick = 0;
      if (cfg.random_schedule && inflight.size() > 1) {
        boost::random::uniform_int_distribution<std::size_t> dist(0, inflight.size() - 1);
        pick = dist(rng);
      }
      Message m = std::move(inflight[pick]);
      inflight.erase(inflight.begin() + static_cast<std::ptrdiff_t>(pick));
      ++delivered;
      if (m.proposal) bodies.emplace(m.digest, m.proposal);
      switch (m.kind) {
        case MsgKind::Propose: ++rec.messages.propose; break;
        case MsgKind::Vote: ++rec.messages.vote; break;
        case MsgKind::Commit: ++rec.messages.commit; break;
        case MsgKind::Decide: ++rec.messages.decide; break;
      }
      for (auto& out : servers[to_index(m.to)].on_message(m)) inflight.push_back(std::move(out));
    }

    const auto& p = servers[to_index(primary)];
    if (p.finalized() && !over_budget) {
      rec.outcome = AbortReason::None;
      result.attempts.push_back(rec);
      result.committed = true;
      result.reason = AbortReason::None;
      result.proposal = *bodies.at(*p.finalized());
      return result;
    }

    bool any_reject = false;
    for (const auto& srv : servers) {
      if (srv.honest() && srv.rejected()) {
        any_reject = true;
        if (!rec.rejected_field) rec.rejected_field = srv.rejected_field();
      }
    }
    rec.outcome = any_reject ? AbortReason::NoQuorum : AbortReason::Timeout;
    result.attempts.push_back(rec);
    result.reason = rec.outcome;
    skip.insert(primary);
  }
  return result;
}

}  // namespace lifechain
