#include "lifechain/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <toml.hpp>

namespace lifechain {

std::size_t Scenario::effective_n_a() const {
  if (!defenses.mcs_filter) return clients;
  if (n_a != 0) return n_a;
  return static_cast<std::size_t>(std::ceil(0.8 * static_cast<double>(clients)));
}

bool Scenario::client_is_malicious(std::uint32_t id) const {
  return client_attack.kind != ClientAttack::None &&
         std::find(client_attack.ids.begin(), client_attack.ids.end(), id) != client_attack.ids.end();
}

bool Scenario::server_is_faulty(std::uint32_t id) const {
  return server_fault.kind != ServerFault::None &&
         std::find(server_fault.ids.begin(), server_fault.ids.end(), id) != server_fault.ids.end();
}

void Scenario::validate() const {
  auto fail = [](const std::string& what) { throw InvalidInput("scenario: " + what); };
  if (clients == 0) fail("network.clients must be positive");
  if (servers == 0) fail("network.servers must be positive");
  if (tasks == 0) fail("schedule.tasks must be positive");
  if (rounds == 0) fail("schedule.rounds must be positive");
  if (classes == 0 || features == 0) fail("workload.classes and workload.features must be positive");
  if (classes_per_task == 0 || classes_per_task > classes) {
    fail("workload.classes_per_task must be in [1, classes]");
  }
  if (train_per_class == 0 || test_per_class == 0) fail("workload sample counts must be positive");
  if (!(stddev > 0.0) || !(separation >= 0.0)) fail("workload spreads must be non-negative");
  if (training.lr < 0.0 || training.l2 < 0.0) fail("training.lr and training.l2 must be >= 0");
  if (fusion.lambda < 0.0 || fusion.lambda > 1.0) fail("fusion.lambda must be in [0, 1]");
  if (fusion.n_k == 0) fail("fusion.n_k must be positive");
  if (forgetting.delta < 0.0) fail("forgetting.delta must be >= 0");
  if (forgetting.eps_conf <= 0.0 || forgetting.eps_conf > 1.0) fail("forgetting.eps_conf must be in (0, 1]");
  if (index.phi == 0 || index.phi > 64 || index.pi == 0 || index.m == 0) {
    fail("index.phi must be in [1, 64]; index.pi and index.m positive");
  }
  if (n_a > clients) fail("consensus.n_a must not exceed network.clients");
  if (retry_budget == 0) fail("consensus.retry_budget must be positive");
  if (segment == 0) fail("arbitration.segment must be positive");
  if (eps_fp < 0) fail("arbitration.eps_fp must be >= 0");
  for (auto id : client_attack.ids) {
    if (id >= clients) fail("attack.clients.ids contains " + std::to_string(id));
  }
  for (auto id : server_fault.ids) {
    if (id >= servers) fail("attack.servers.ids contains " + std::to_string(id));
  }
  if (client_attack.fraction < 0.0 || client_attack.fraction > 1.0) {
    fail("attack.clients.fraction must be in [0, 1]");
  }
  if (client_attack.kind == ClientAttack::LabelFlip && classes_per_task < 2) {
    fail("label flipping needs classes_per_task >= 2");
  }
  if (!std::isfinite(server_fault.gamma)) fail("attack.servers.gamma must be finite");
  if (latency.rate <= 0.0) fail("latency.rate must be positive");
}

Scenario default_scenario() {
  Scenario s;
  s.client_attack = {{0, 1, 2, 3}, ClientAttack::LabelFlip, 1.0};
  s.server_fault = {{5}, ServerFault::Tamper, 10.0};
  return s;
}

std::string to_string(ClientAttack a) {
  switch (a) {
    case ClientAttack::None: return "none";
    case ClientAttack::LabelFlip: return "label-flip";
    case ClientAttack::Replay: return "replay";
  }
  return "unknown";
}

std::string to_string(ServerFault f) {
  switch (f) {
    case ServerFault::None: return "none";
    case ServerFault::Tamper: return "tamper";
    case ServerFault::Silent: return "silent";
    case ServerFault::Forge: return "forge";
  }
  return "unknown";
}

namespace {

std::string to_string(ProbePolicy p) { return p == ProbePolicy::Last ? "last" : "history"; }

std::string to_string(ArbitrationSchedule a) {
  switch (a) {
    case ArbitrationSchedule::Never: return "never";
    case ArbitrationSchedule::TaskEnd: return "task-end";
    case ArbitrationSchedule::EveryRound: return "every-round";
  }
  return "unknown";
}

std::string to_string(KnowledgeKind k) {
  return k == KnowledgeKind::Parameters ? "parameters" : "gradient-delta";
}

template <typename E>
E parse_enum(const std::string& key, const std::string& value, const std::map<std::string, E>& names) {
  const auto it = names.find(value);
  if (it == names.end()) {
    std::string allowed;
    for (const auto& [n, _] : names) allowed += (allowed.empty() ? "" : ", ") + n;
    throw InvalidInput("scenario: " + key + " = '" + value + "' (expected one of " + allowed + ")");
  }
  return it->second;
}

// Reads keys from one TOML table and rejects anything it was not asked for.
class Section {
 public:
  Section(const toml::table* table, std::string name) : table_(table), name_(std::move(name)) {}

  template <typename T>
  void read(const std::string& key, T& out) {
    seen_.insert(key);
    if (table_ == nullptr) return;
    const toml::node* node = table_->get(key);
    if (node == nullptr) return;
    if constexpr (std::is_same_v<T, bool>) {
      auto v = node->value<bool>();
      if (!v) bad(key, "a boolean");
      out = *v;
    } else if constexpr (std::is_same_v<T, std::string>) {
      auto v = node->value<std::string>();
      if (!v) bad(key, "a string");
      out = *v;
    } else if constexpr (std::is_floating_point_v<T>) {
      auto v = node->value<double>();
      if (!v) bad(key, "a number");
      out = static_cast<T>(*v);
    } else if constexpr (std::is_integral_v<T>) {
      auto v = node->value<std::int64_t>();
      if (!v || *v < 0) bad(key, "a non-negative integer");
      out = static_cast<T>(*v);
    } else {
      static_assert(std::is_same_v<T, std::vector<std::uint32_t>>);
      const auto* arr = node->as_array();
      if (arr == nullptr) bad(key, "an array of integers");
      out.clear();
      for (const auto& el : *arr) {
        auto v = el.value<std::int64_t>();
        if (!v || *v < 0) bad(key, "an array of non-negative integers");
        out.push_back(static_cast<std::uint32_t>(*v));
      }
    }
  }

  void finish() const {
    if (table_ == nullptr) return;
    for (const auto& [k, _] : *table_) {
      if (!seen_.contains(std::string(k.str()))) {
        throw InvalidInput("scenario: unknown key '" + name_ + "." + std::string(k.str()) + "'");
      }
    }
  }

 private:
  [[noreturn]] void bad(const std::string& key, const std::string& what) const {
    throw InvalidInput("scenario: " + name_ + "." + key + " must be " + what);
  }

  const toml::table* table_;
  std::string name_;
  std::set<std::string> seen_;
};

const toml::table* subtable(const toml::table& root, const std::string& key) {
  const toml::node* n = root.get(key);
  if (n == nullptr) return nullptr;
  const auto* t = n->as_table();
  if (t == nullptr) throw InvalidInput("scenario: '" + key + "' must be a table");
  return t;
}

}  // namespace

Scenario parse_scenario(std::string_view toml_text, std::string_view source) {
  toml::table root;
  try {
    root = toml::parse(toml_text, source);
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << "scenario: " << e.description() << " at " << e.source().begin;
    throw InvalidInput(msg.str());
  }

  static const std::set<std::string> sections{
      "seed", "network", "schedule", "workload", "training", "fusion", "forgetting", "index",
      "consensus", "arbitration", "defenses", "attack", "latency"};
  for (const auto& [k, _] : root) {
    if (!sections.contains(std::string(k.str()))) {
      throw InvalidInput("scenario: unknown key '" + std::string(k.str()) + "'");
    }
  }

  Scenario s;
  {
    Section top(&root, "");
    top.read("seed", s.seed);
  }
  {
    Section sec(subtable(root, "network"), "network");
    sec.read("clients", s.clients);
    sec.read("servers", s.servers);
    sec.finish();
  }
  {
    Section sec(subtable(root, "schedule"), "schedule");
    sec.read("tasks", s.tasks);
    sec.read("rounds", s.rounds);
    sec.finish();
  }
  {
    Section sec(subtable(root, "workload"), "workload");
    sec.read("classes", s.classes);
    sec.read("classes_per_task", s.classes_per_task);
    sec.read("features", s.features);
    sec.read("separation", s.separation);
    sec.read("stddev", s.stddev);
    sec.read("train_per_class", s.train_per_class);
    sec.read("test_per_class", s.test_per_class);
    sec.finish();
  }
  {
    Section sec(subtable(root, "training"), "training");
    std::string knowledge = to_string(s.training.knowledge);
    sec.read("epochs", s.training.epochs);
    sec.read("lr", s.training.lr);
    sec.read("l2", s.training.l2);
    sec.read("knowledge", knowledge);
    sec.finish();
    s.training.knowledge = parse_enum<KnowledgeKind>(
        "training.knowledge", knowledge,
        {{"parameters", KnowledgeKind::Parameters}, {"gradient-delta", KnowledgeKind::GradientDelta}});
  }
  {
    Section sec(subtable(root, "fusion"), "fusion");
    std::string probe = to_string(s.probe);
    sec.read("lambda", s.fusion.lambda);
    sec.read("n_k", s.fusion.n_k);
    sec.read("probe", probe);
    sec.finish();
    s.probe = parse_enum<ProbePolicy>("fusion.probe", probe,
                                      {{"last", ProbePolicy::Last}, {"history", ProbePolicy::History}});
  }
  {
    Section sec(subtable(root, "forgetting"), "forgetting");
    sec.read("delta", s.forgetting.delta);
    sec.read("eps_conf", s.forgetting.eps_conf);
    sec.finish();
  }
  {
    Section sec(subtable(root, "index"), "index");
    sec.read("phi", s.index.phi);
    sec.read("pi", s.index.pi);
    sec.read("m", s.index.m);
    sec.read("seed", s.index.seed);
    sec.finish();
  }
  {
    Section sec(subtable(root, "consensus"), "consensus");
    std::string mcs = s.mcs_norm_weighted ? "norm-weighted" : "cosine";
    sec.read("n_a", s.n_a);
    sec.read("mcs", mcs);
    sec.read("retry_budget", s.retry_budget);
    sec.read("random_schedule", s.random_schedule);
    sec.finish();
    s.mcs_norm_weighted =
        parse_enum<bool>("consensus.mcs", mcs, {{"cosine", false}, {"norm-weighted", true}});
  }
  {
    Section sec(subtable(root, "arbitration"), "arbitration");
    std::string schedule = to_string(s.arbitration);
    sec.read("schedule", schedule);
    sec.read("segment", s.segment);
    sec.read("eps_fp", s.eps_fp);
    sec.finish();
    s.arbitration = parse_enum<ArbitrationSchedule>(
        "arbitration.schedule", schedule,
        {{"never", ArbitrationSchedule::Never},
         {"task-end", ArbitrationSchedule::TaskEnd},
         {"every-round", ArbitrationSchedule::EveryRound}});
  }
  {
    Section sec(subtable(root, "defenses"), "defenses");
    sec.read("mcs_filter", s.defenses.mcs_filter);
    sec.read("arbitration", s.defenses.arbitration);
    sec.read("replay_check", s.defenses.replay_check);
    sec.finish();
  }
  if (const auto* attack = subtable(root, "attack")) {
    for (const auto& [k, _] : *attack) {
      const std::string key(k.str());
      if (key != "clients" && key != "servers") {
        throw InvalidInput("scenario: unknown key 'attack." + key + "'");
      }
    }
    {
      Section sec(subtable(*attack, "clients"), "attack.clients");
      std::string kind = to_string(s.client_attack.kind);
      sec.read("ids", s.client_attack.ids);
      sec.read("kind", kind);
      sec.read("fraction", s.client_attack.fraction);
      sec.finish();
      s.client_attack.kind = parse_enum<ClientAttack>(
          "attack.clients.kind", kind,
          {{"none", ClientAttack::None}, {"label-flip", ClientAttack::LabelFlip},
           {"replay", ClientAttack::Replay}});
    }
    {
      Section sec(subtable(*attack, "servers"), "attack.servers");
      std::string kind = to_string(s.server_fault.kind);
      sec.read("ids", s.server_fault.ids);
      sec.read("kind", kind);
      sec.read("gamma", s.server_fault.gamma);
      sec.finish();
      s.server_fault.kind = parse_enum<ServerFault>(
          "attack.servers.kind", kind,
          {{"none", ServerFault::None}, {"tamper", ServerFault::Tamper},
           {"silent", ServerFault::Silent}, {"forge", ServerFault::Forge}});
    }
  }
  {
    Section sec(subtable(root, "latency"), "latency");
    sec.read("train", s.latency.train);
    sec.read("agg", s.latency.agg);
    sec.read("block", s.latency.block);
    sec.read("ks", s.latency.ks);
    sec.read("hop", s.latency.hop);
    sec.read("rate", s.latency.rate);
    sec.read("fanout", s.latency.fanout);
    sec.finish();
  }
  s.validate();
  return s;
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open scenario file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) {
    throw InvalidInput("scenario file " + path.string() + " is empty");
  }
  return parse_scenario(text, path.string());
}

nlohmann::json to_json(const Scenario& s) {
  return {
      {"seed", s.seed},
      {"network", {{"clients", s.clients}, {"servers", s.servers}}},
      {"schedule", {{"tasks", s.tasks}, {"rounds", s.rounds}}},
      {"workload",
       {{"classes", s.classes}, {"classes_per_task", s.classes_per_task}, {"features", s.features},
        {"separation", s.separation}, {"stddev", s.stddev}, {"train_per_class", s.train_per_class},
        {"test_per_class", s.test_per_class}}},
      {"training",
       {{"epochs", s.training.epochs}, {"lr", s.training.lr}, {"l2", s.training.l2},
        {"knowledge", to_string(s.training.knowledge)}}},
      {"fusion", {{"lambda", s.fusion.lambda}, {"n_k", s.fusion.n_k}, {"probe", to_string(s.probe)}}},
      {"forgetting", {{"delta", s.forgetting.delta}, {"eps_conf", s.forgetting.eps_conf}}},
      {"index", {{"phi", s.index.phi}, {"pi", s.index.pi}, {"m", s.index.m}, {"seed", s.index.seed}}},
      {"consensus",
       {{"n_a", s.effective_n_a()}, {"mcs", s.mcs_norm_weighted ? "norm-weighted" : "cosine"},
        {"retry_budget", s.retry_budget}, {"random_schedule", s.random_schedule}}},
      {"arbitration",
       {{"schedule", to_string(s.arbitration)}, {"segment", s.segment}, {"eps_fp", s.eps_fp}}},
      {"defenses",
       {{"mcs_filter", s.defenses.mcs_filter}, {"arbitration", s.defenses.arbitration},
        {"replay_check", s.defenses.replay_check}}},
      {"attack",
       {{"clients",
         {{"ids", s.client_attack.ids}, {"kind", to_string(s.client_attack.kind)},
          {"fraction", s.client_attack.fraction}}},
        {"servers",
         {{"ids", s.server_fault.ids}, {"kind", to_string(s.server_fault.kind)},
          {"gamma", s.server_fault.gamma}}}}},
      {"latency",
       {{"train", s.latency.train}, {"agg", s.latency.agg}, {"block", s.latency.block},
        {"ks", s.latency.ks}, {"hop", s.latency.hop}, {"rate", s.latency.rate},
        {"fanout", s.latency.fanout}}},
  };
}

Scenario disable_defenses(Scenario s) {
  s.defenses = {false, false, false};
  return s;
}

Scenario enable_defenses(Scenario s) {
  s.defenses = {true, true, true};
  return s;
}

}  // namespace lifechain
