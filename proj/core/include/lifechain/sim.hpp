#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lifechain/arbitration.hpp"
#include "lifechain/consensus.hpp"
#include "lifechain/cost_model.hpp"
#include "lifechain/knowledge_index.hpp"
#include "lifechain/ledger.hpp"
#include "lifechain/learner.hpp"
#include "lifechain/scenario.hpp"

namespace lifechain {

inline constexpr const char* kMetricsSchema = "lifechain-metrics/1";

struct RoundMetrics {
  TaskRound tr{};
  std::string outcome;  // committed | timeout | no-quorum | under-quorum
  std::size_t attempts = 0;
  std::optional<std::uint32_t> primary;
  std::vector<double> client_accuracy;
  double mean_accuracy = 0.0;
  double forgetting = 0.0;
  std::vector<ClientId> selected;
  std::size_t accepted = 0;
  std::size_t blacklist_size = 0;
  std::size_t replay_attempts = 0;
  std::size_t replay_rejected = 0;
  bool arbitrated = false;
  std::vector<ServerId> flagged;
  std::size_t knowledge_bytes = 0;
  std::size_t broadcast_bytes = 0;
  std::size_t comparisons = 0;
  std::size_t messages = 0;
  double latency = 0.0;

  bool committed() const { return outcome == "committed"; }
};

/// Header of metrics.csv.
std::string metrics_header();
std::string metrics_row(const RoundMetrics& m);

class SimHalted : public Error {
 public:
  using Error::Error;
};

class Simulation {
 public:
  explicit Simulation(Scenario scenario);

  /// Runs the next (task, round). Throws SimHalted when consensus fails
  /// beyond the retry budget.
  RoundMetrics run_round();
  bool finished() const { return round_index_ >= scenario_.tasks * scenario_.rounds; }

  const Scenario& scenario() const { return scenario_; }
  const Ledger& ledger() const { return ledger_; }
  const RetrievalTable& index() const { return table_; }
  const Vector& global_model() const { return global_; }
  const Vector& local_model(ClientId id) const { return local_.at(to_index(id)); }
  const std::set<ServerId>& flagged_servers() const { return flagged_; }
  const std::vector<nlohmann::json>& arbitration_log() const { return arbitration_log_; }
  const QueryStats& query_stats() const { return query_stats_; }
  const Digest& verification_key() const { return k_ver_; }

  /// Sample-weighted forgetting over non-malicious clients and finished tasks.
  double forgetting_now() const;

  CostReport cost_report() const;

 private:
  struct Submission {
    ClientTransaction tx;
    ModelUpdate update;
    Vector knowledge;
    bool replay = false;
  };

  std::vector<Vector> retrieve(std::uint32_t client, std::uint32_t task);
  void arbitrate_round(const Proposal& committed, const RoundInput& input, RoundMetrics& m);

  Scenario scenario_;
  ModelShape shape_;
  TaskPlan plan_;
  std::vector<std::vector<Dataset>> train_;       // [client][task]
  std::vector<std::vector<Dataset>> test_;        // [client][task]
  std::vector<std::vector<Dataset>> test_upto_;   // [client][task], tasks <= t
  std::vector<crypto::KeyPair> client_keys_;
  Digest k_pro_{};
  Digest k_ver_{};

  Ledger ledger_;
  std::shared_ptr<const HyperplaneSet> hp_;
  RetrievalTable table_;
  QueryStats query_stats_;

  Vector global_;
  std::vector<Vector> local_;
  std::vector<std::optional<Vector>> last_knowledge_;
  std::vector<std::vector<Vector>> task_models_;     // [client][task] local model at task end
  std::vector<std::vector<Vector>> task_knowledge_;  // [client][task]
  std::vector<std::optional<Submission>> last_submission_;

  std::set<ServerId> flagged_;
  std::vector<nlohmann::json> arbitration_log_;
  std::vector<std::size_t> block_knowledge_bytes_;
  std::vector<std::size_t> block_broadcast_bytes_;
  std::size_t round_index_ = 0;
  std::uint64_t arbitration_id_ = 0;
  double time_ = 0.0;
};

struct ReplayStats {
  std::size_t attempts = 0;
  std::size_t rejected = 0;
  std::size_t attackers_blacklisted = 0;
  std::size_t attackers = 0;
  std::size_t honest_blacklisted = 0;
};

struct SimResult {
  Scenario scenario;
  std::vector<RoundMetrics> rounds;
  CostReport cost;
  std::vector<Block> chain;
  std::vector<nlohmann::json> arbitration;
  std::set<ServerId> flagged;
  std::set<ClientId> blacklist;
  ReplayStats replay;
  bool halted = false;
  std::string diagnostics;

  double final_accuracy() const { return rounds.empty() ? 0.0 : rounds.back().mean_accuracy; }
  double final_forgetting() const { return rounds.empty() ? 0.0 : rounds.back().forgetting; }
};

SimResult run_scenario(const Scenario& scenario);

nlohmann::json cost_report_json(const SimResult& result);

/// Writes metrics.csv, cost_report.json, chain.jsonl and arbitration.jsonl.
void write_outputs(const SimResult& result, const std::filesystem::path& dir);

}  // namespace lifechain
