#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "lifechain/common.hpp"
#include "lifechain/knowledge_index.hpp"
#include "lifechain/learner.hpp"

namespace lifechain {

enum class ClientAttack : std::uint8_t { None, LabelFlip, Replay };
enum class ServerFault : std::uint8_t { None, Tamper, Silent, Forge };
enum class ProbePolicy : std::uint8_t { Last, History };
enum class ArbitrationSchedule : std::uint8_t { Never, TaskEnd, EveryRound };

struct ClientAttackConfig {
  std::vector<std::uint32_t> ids;
  ClientAttack kind = ClientAttack::None;
  double fraction = 1.0;  // label flip share
};

struct ServerFaultConfig {
  std::vector<std::uint32_t> ids;
  ServerFault kind = ServerFault::None;
  double gamma = 10.0;
};

struct Defenses {
  bool mcs_filter = true;
  bool arbitration = true;
  bool replay_check = true;

  bool operator==(const Defenses&) const = default;
};

struct LatencyConfig {
  double train = 0.5;     // seconds per local training pass
  double agg = 0.01;
  double block = 0.02;
  double ks = 0.005;
  double hop = 0.001;     // fixed per-message latency
  double rate = 50e6;     // bytes per second
  double fanout = 1.0;
};

struct Scenario {
  std::uint64_t seed = 1;
  std::size_t clients = 20;
  std::size_t servers = 6;
  std::size_t tasks = 10;
  std::size_t rounds = 5;

  // workload
  std::size_t classes = 8;
  std::size_t classes_per_task = 4;
  std::size_t features = 8;
  double separation = 2.0;
  double stddev = 1.0;
  std::size_t train_per_class = 20;
  std::size_t test_per_class = 20;

  TrainParams training;
  FusionPolicy fusion;
  ProbePolicy probe = ProbePolicy::Last;
  ForgettingParams forgetting;
  IndexParams index;  // index.seed is derived from `seed` when zero

  std::size_t n_a = 0;  // 0 selects ceil(0.8 c)
  bool mcs_norm_weighted = false;
  std::size_t retry_budget = 3;
  bool random_schedule = false;

  ArbitrationSchedule arbitration = ArbitrationSchedule::TaskEnd;
  std::size_t segment = 1000;
  std::int64_t eps_fp = 1;

  Defenses defenses;
  ClientAttackConfig client_attack;
  ServerFaultConfig server_fault;
  LatencyConfig latency;

  std::size_t dim() const { return features * classes + classes; }
  std::size_t effective_n_a() const;
  bool client_is_malicious(std::uint32_t id) const;
  bool server_is_faulty(std::uint32_t id) const;

  /// Throws InvalidInput naming the first invalid field.
  void validate() const;
};

/// Default attack setting: 20 clients, 6 servers, 4 label-flipping clients,
/// one model-scaling server.
Scenario default_scenario();

/// Parses TOML; unspecified keys keep their defaults. Throws InvalidInput.
Scenario parse_scenario(std::string_view toml_text, std::string_view source = "<string>");
Scenario load_scenario(const std::filesystem::path& path);

nlohmann::json to_json(const Scenario& s);

/// Same scenario with MCS filtering, arbitration and replay checks switched off.
Scenario disable_defenses(Scenario s);
Scenario enable_defenses(Scenario s);

std::string to_string(ClientAttack a);
std::string to_string(ServerFault f);

}  // namespace lifechain
