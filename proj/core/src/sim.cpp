#include "lifechain/sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "lifechain/bytes.hpp"
#include "lifechain/event_queue.hpp"

namespace lifechain {

namespace {

constexpr std::uint64_t kTrainStream = 0x747261696eULL;
constexpr std::uint64_t kTestStream = 0x74657374ULL;
constexpr std::uint64_t kFlipStream = 0x666c6970ULL;
constexpr std::uint64_t kJitterStream = 0x6a6974ULL;
constexpr std::uint64_t kIndexStream = 0x696e646578ULL;

double unit_uniform(std::uint64_t seed) {
  return static_cast<double>(mix64(seed) >> 11) * 0x1.0p-53;
}

std::string fmt(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", x);
  return buf;
}

template <typename Id>
std::string join_ids(const std::vector<Id>& ids) {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ';';
    out += std::to_string(to_index(ids[i]));
  }
  return out;
}

IndexParams index_params(const Scenario& s) {
  IndexParams p = s.index;
  if (p.seed == 0) p.seed = derive_seed(s.seed, kIndexStream);
  return p;
}

}  // namespace

std::string metrics_header() {
  return "task,round,outcome,attempts,primary,mean_accuracy,forgetting,n_selected,selected,"
         "accepted,blacklist_size,replay_attempts,replay_rejected,arbitrated,flagged,"
         "knowledge_bytes,broadcast_bytes,comparisons,messages,latency_s,client_accuracy";
}

std::string metrics_row(const RoundMetrics& m) {
  std::ostringstream o;
  o << m.tr.task << ',' << m.tr.round << ',' << m.outcome << ',' << m.attempts << ','
    << (m.primary ? std::to_string(*m.primary) : std::string()) << ',' << fmt(m.mean_accuracy)
    << ',' << fmt(m.forgetting) << ',' << m.selected.size() << ',' << join_ids(m.selected) << ','
    << m.accepted << ',' << m.blacklist_size << ',' << m.replay_attempts << ','
    << m.replay_rejected << ',' << (m.arbitrated ? 1 : 0) << ',' << join_ids(m.flagged) << ','
    << m.knowledge_bytes << ',' << m.broadcast_bytes << ',' << m.comparisons << ','
    << m.messages << ',' << fmt(m.latency) << ',';
  for (std::size_t i = 0; i < m.client_accuracy.size(); ++i) {
    if (i) o << ';';
    o << fmt(m.client_accuracy[i]);
  }
  return o.str();
}

Simulation::Simulation(Scenario scenario)
    : scenario_((scenario.validate(), std::move(scenario))),
      shape_{scenario_.features, scenario_.classes},
      ledger_(crypto::default_signatures(), scenario_.defenses.replay_check),
      hp_(std::make_shared<const HyperplaneSet>(index_params(scenario_), shape_.dim())),
      table_(index_params(scenario_), shape_.dim()) {
  const Scenario& s = scenario_;
  const std::size_t c = s.clients;

  TaskPlanParams tp;
  tp.seed = s.seed;
  tp.clients = c;
  tp.tasks = s.tasks;
  tp.classes_per_task = s.classes_per_task;
  tp.features = s.features;
  tp.classes = s.classes;
  tp.separation = s.separation;
  tp.stddev = s.stddev;
  tp.samples_per_class = s.train_per_class;
  plan_ = gen_tasks(tp);

  train_.assign(c, std::vector<Dataset>(s.tasks));
  test_.assign(c, std::vector<Dataset>(s.tasks));
  test_upto_.assign(c, std::vector<Dataset>(s.tasks));
  for (std::uint32_t i = 0; i < c; ++i) {
    for (std::uint32_t t = 0; t < s.tasks; ++t) {
      std::mt19937_64 train_rng(derive_seed(s.seed, kTrainStream, i, t));
      std::mt19937_64 test_rng(derive_seed(s.seed, kTestStream, i, t));
      train_[i][t] = sample_task(plan_.sequences[i][t], s.train_per_class, train_rng);
      test_[i][t] = sample_task(plan_.sequences[i][t], s.test_per_class, test_rng);
      test_upto_[i][t] = t == 0 ? Dataset{} : test_upto_[i][t - 1];
      test_upto_[i][t].append(test_[i][t]);
    }
  }

  std::vector<std::pair<ClientId, Digest>> registry;
  for (std::uint32_t i = 0; i < c; ++i) {
    client_keys_.push_back(crypto::KeyPair::derive(s.seed, "client", i));
    registry.emplace_back(ClientId{i}, client_keys_.back().public_key);
  }
  k_pro_ = crypto::KeyPair::derive(s.seed, "prover", 0).secret;
  k_ver_ = default_proof_backend().verification_key(k_pro_);

  std::vector<std::uint32_t> committee;
  for (std::uint32_t k = 0; k < s.servers; ++k) committee.push_back(k);
  nlohmann::json genesis{{"scenario", to_json(s)},
                         {"clients", Ledger::client_registry(registry)},
                         {"committee", committee},
                         {"verification_key", to_hex(k_ver_)}};
  ledger_.append_block(Ledger::make_genesis(std::move(genesis)));

  global_.assign(shape_.dim(), 0.0);
  local_.assign(c, global_);
  last_knowledge_.assign(c, std::nullopt);
  task_models_.assign(c, std::vector<Vector>(s.tasks));
  task_knowledge_.assign(c, std::vector<Vector>(s.tasks));
  last_submission_.assign(c, std::nullopt);
}

std::vector<Vector> Simulation::retrieve(std::uint32_t client, std::uint32_t task) {
  std::vector<const Vector*> probes;
  if (scenario_.probe == ProbePolicy::History) {
    for (std::uint32_t t = 0; t < task; ++t) probes.push_back(&task_knowledge_[client][t]);
  }
  if (probes.empty() && last_knowledge_[client]) probes.push_back(&*last_knowledge_[client]);
  if (probes.empty() || table_.size() == 0) return {};

  const std::size_t n_k = scenario_.fusion.n_k;
  const std::size_t per = (n_k + probes.size() - 1) / probes.size();
  std::vector<RecordId> picked;
  for (const Vector* probe : probes) {
    const auto hits = table_.query(*probe, per + picked.size(), &query_stats_);
    std::size_t taken = 0;
    for (const auto& h : hits) {
      if (taken == per) break;
      if (std::find(picked.begin(), picked.end(), h.id) != picked.end()) continue;
      picked.push_back(h.id);
      ++taken;
    }
  }
  if (picked.size() > n_k) picked.resize(n_k);
  std::vector<Vector> out;
  out.reserve(picked.size());
  for (RecordId id : picked) out.push_back(table_.record(id).values);
  return out;
}

RoundMetrics Simulation::run_round() {
  if (finished()) throw Error("scenario already finished");
  const Scenario& s = scenario_;
  const auto t = static_cast<std::uint32_t>(round_index_ / s.rounds);
  const auto r = static_cast<std::uint32_t>(round_index_ % s.rounds);
  const TaskRound tr{t, r};
  RoundMetrics m;
  m.tr = tr;
  const std::size_t comparisons_before = query_stats_.comparisons;
  const double model_bytes = static_cast<double>(shape_.dim()) * 4.0;
  const double upload = model_bytes / s.latency.rate;

  // C1-C3 and local training; submissions arrive at the committee in
  // simulated-time order.
  EventQueue<Submission> arrivals;
  double slowest = 0.0;
  for (std::uint32_t i = 0; i < s.clients; ++i) {
    const bool attacker = s.client_is_malicious(i);
    const double train_time =
        s.latency.train * (1.0 + 0.1 * unit_uniform(derive_seed(s.seed, kJitterStream, i, round_index_)));
    slowest = std::max(slowest, train_time);
    const double arrival = time_ + train_time + s.latency.hop + upload;

    Vector start = global_;
    if (s.fusion.lambda > 0.0) {
      const auto retrieved = retrieve(i, t);
      start = fuse(global_, retrieved, s.fusion.lambda);
    }
    Dataset data = train_[i][t];
    if (attacker && s.client_attack.kind == ClientAttack::LabelFlip) {
      std::mt19937_64 rng(derive_seed(s.seed, kFlipStream, i, round_index_));
      data = attack_label_flip(data, plan_.sequences[i][t].labels, s.client_attack.fraction, rng);
    }
    TrainResult res = train_local(shape_, start, data, s.training);
    local_[i] = res.weights;
    last_knowledge_[i] = res.knowledge;
    if (r + 1 == s.rounds) {
      task_models_[i][t] = res.weights;
      task_knowledge_[i][t] = res.knowledge;
    }

    if (attacker && s.client_attack.kind == ClientAttack::Replay && last_submission_[i]) {
      Submission again = *last_submission_[i];
      again.replay = true;
      arrivals.push(arrival, std::move(again));
      continue;
    }
    Submission sub;
    sub.tx.tx_id = round_index_ * s.clients + i;
    sub.tx.owner = ClientId{i};
    sub.tx.tr = tr;
    sub.tx.model_hash = model_hash(res.weights);
    sub.tx.krv = compute_krv(*hp_, res.knowledge);
    sub.tx.timestamp = static_cast<std::uint64_t>(std::llround((time_ + train_time) * 1e6));
    sub.tx.sign(client_keys_[i], crypto::default_signatures());
    sub.update = ModelUpdate{ClientId{i}, tr, res.weights};
    sub.knowledge = std::move(res.knowledge);
    arrivals.push(arrival, std::move(sub));
  }

  auto input = std::make_shared<RoundInput>();
  input->tr = tr;
  input->hyperplanes = hp_;
  input->mcs.norm_weighted = s.mcs_norm_weighted;
  while (auto e = arrivals.pop()) {
    Submission& sub = e->event;
    const SubmitStatus status = ledger_.submit_client_tx(sub.tx);
    if (sub.replay) {
      ++m.replay_attempts;
      if (status != SubmitStatus::Accepted) ++m.replay_rejected;
    }
    if (status != SubmitStatus::Accepted) continue;
    ledger_.offchain().put(serialize_vector(sub.update.weights));
    ledger_.offchain().put(serialize_vector(sub.knowledge));
    if (!sub.replay) last_submission_[to_index(sub.tx.owner)] = sub;
    input->txs.push_back(sub.tx);
    input->updates.push_back(sub.update);
    input->knowledge.push_back(sub.knowledge);
  }
  m.accepted = input->txs.size();
  m.blacklist_size = ledger_.blacklist().size();

  input->n_a = s.defenses.mcs_filter ? s.effective_n_a() : input->txs.size();
  input->height = ledger_.height() + 1;
  input->prev_hash = ledger_.tip_hash();
  input->server_tx_id = round_index_;

  double consensus_time = 0.0;
  if (input->txs.empty() || input->txs.size() < input->n_a) {
    m.outcome = to_string(AbortReason::UnderQuorum);
  } else {
    std::vector<ServerProfile> profiles(s.servers);
    std::vector<std::shared_ptr<const RoundInput>> views(s.servers, input);
    for (std::uint32_t k = 0; k < s.servers; ++k) {
      if (!s.server_is_faulty(k)) continue;
      if (s.server_fault.kind == ServerFault::Tamper) {
        profiles[k] = {Behavior::Tamper, s.server_fault.gamma, 0};
      } else if (s.server_fault.kind == ServerFault::Silent) {
        profiles[k] = {Behavior::Silent, 1.0, 0};
      }
    }
    CommitteeConfig cfg;
    cfg.s = s.servers;
    cfg.retry_budget = s.retry_budget;
    cfg.random_schedule = s.random_schedule;
    cfg.schedule_seed = s.seed;
    const RoundOutcome outcome = pomc_round(cfg, profiles, views, round_index_, flagged_);
    m.attempts = outcome.attempts.size();
    for (const auto& a : outcome.attempts) {
      m.messages += a.messages.total();
      consensus_time += 4.0 * s.latency.hop;
    }
    if (!outcome.attempts.empty()) m.primary = to_index(outcome.attempts.back().primary);
    if (!outcome.committed) {
      std::ostringstream diag;
      diag << "task " << t << " round " << r << ": consensus failed after " << m.attempts
           << " attempts";
      for (const auto& a : outcome.attempts) {
        diag << "; primary " << to_index(a.primary) << " -> " << to_string(a.outcome);
        if (a.rejected_field) diag << " (" << *a.rejected_field << ")";
      }
      throw SimHalted(diag.str());
    }
    m.outcome = "committed";
    const Proposal& p = *outcome.proposal;
    ledger_.append_block(p.server_block);
    ledger_.append_block(p.client_block);
    global_ = p.global;
    m.selected = p.server_tx().selected;

    const auto& ctxs = p.client_block.client_txs();
    for (const auto& tx : ctxs) {
      const auto slot = static_cast<std::size_t>(
          std::find_if(input->txs.begin(), input->txs.end(),
                       [&](const ClientTransaction& x) { return x.owner == tx.owner; }) -
          input->txs.begin());
      table_.insert(KnowledgeVector{tx.owner, tx.tr, input->knowledge[slot]});
    }
    m.knowledge_bytes = knowledge_bytes(p.client_block);
    m.broadcast_bytes = m.knowledge_bytes * (s.clients + s.servers - 1);
    block_knowledge_bytes_.push_back(m.knowledge_bytes);
    block_broadcast_bytes_.push_back(m.broadcast_bytes);

    const bool scheduled = s.arbitration == ArbitrationSchedule::EveryRound ||
                           (s.arbitration == ArbitrationSchedule::TaskEnd && r + 1 == s.rounds);
    if (s.defenses.arbitration && scheduled) arbitrate_round(p, *input, m);
  }

  // Metrics: W_g on each client's test data of the tasks seen so far.
  m.client_accuracy.resize(s.clients);
  double acc_sum = 0.0;
  for (std::uint32_t i = 0; i < s.clients; ++i) {
    m.client_accuracy[i] = accuracy(shape_, global_, test_upto_[i][t]);
    acc_sum += m.client_accuracy[i];
  }
  m.mean_accuracy = acc_sum / static_cast<double>(s.clients);
  m.forgetting = forgetting_now();
  m.comparisons = query_stats_.comparisons - comparisons_before;

  LatencyParams lp;
  lp.train = slowest;
  lp.agg = s.latency.agg;
  lp.block = s.latency.block + consensus_time;
  lp.ks = s.latency.ks;
  lp.p2p_bytes = model_bytes;
  lp.rate = s.latency.rate;
  lp.fanout = s.latency.fanout;
  lp.broadcast_bytes = static_cast<double>(m.broadcast_bytes);
  m.latency = latency_total(lp, 1.0);
  time_ += m.latency;
  ++round_index_;
  return m;
}

void Simulation::arbitrate_round(const Proposal& committed, const RoundInput& input,
                                 RoundMetrics& m) {
  const Scenario& s = scenario_;
  std::vector<ServerId> committee;
  for (std::uint32_t k = 0; k < s.servers; ++k) committee.push_back(ServerId{k});
  const auto& selected = committed.server_tx().selected;
  const std::uint64_t id = arbitration_id_++;
  const SliceAssignment assignment =
      assign_slices(id, shape_.dim(), s.segment, committee, s.seed, selected);

  std::vector<Vector> models;
  for (ClientId c : selected) {
    const auto it = std::find_if(input.updates.begin(), input.updates.end(),
                                 [&](const ModelUpdate& u) { return u.owner == c; });
    models.push_back(it->weights);
  }

  const auto& backend = default_proof_backend();
  const Vector tampered = attack_model_scale(global_, s.server_fault.gamma);
  auto honest_proof = [&](ServerId server, const SliceRange& range) {
    ProverInput in;
    in.arbitration_id = id;
    in.server = server;
    in.range = range;
    in.client_models = models;
    in.aggregate = global_;
    in.eps = s.eps_fp;
    return backend.prove(in, k_pro_);
  };

  std::vector<ProofFile> proofs;
  for (std::size_t n = 0; n < assignment.slices.size(); ++n) {
    const auto& [server, range] = assignment.slices[n];
    const auto k = to_index(server);
    const ServerFault fault = s.server_is_faulty(k) ? s.server_fault.kind : ServerFault::None;
    if (fault == ServerFault::Silent) continue;
    if (fault == ServerFault::Forge) {
      // Reuse another slice's proof under this server's assignment.
      const auto& [other_server, other_range] = assignment.slices[(n + 1) % assignment.slices.size()];
      ProofFile copy = honest_proof(other_server == server ? ServerId{(k + 1) % static_cast<std::uint32_t>(s.servers)}
                                                           : other_server,
                                    other_range);
      copy.server = server;
      copy.range = range;
      proofs.push_back(copy);
      continue;
    }
    ProverInput in;
    in.arbitration_id = id;
    in.server = server;
    in.range = range;
    in.client_models = models;
    in.aggregate = fault == ServerFault::Tamper ? std::span<const double>(tampered)
                                                : std::span<const double>(global_);
    in.eps = s.eps_fp;
    proofs.push_back(backend.prove(in, k_pro_));
  }

  // The initiating client checks against its own received W_g.
  std::uint32_t initiator = 0;
  for (std::uint32_t i = 0; i < s.clients; ++i) {
    if (!s.client_is_malicious(i) && !ledger_.is_blacklisted(ClientId{i})) {
      initiator = i;
      break;
    }
  }
  const ArbitrationVerdict verdict = arbitrate(global_, assignment, proofs, k_ver_, backend);
  flagged_.insert(verdict.flagged.begin(), verdict.flagged.end());
  m.arbitrated = true;
  m.flagged.assign(verdict.flagged.begin(), verdict.flagged.end());

  nlohmann::json slices = nlohmann::json::array();
  for (const auto& [server, range] : assignment.slices) {
    slices.push_back({{"server", to_index(server)}, {"begin", range.begin}, {"end", range.end}});
  }
  nlohmann::json record = to_json(verdict);
  record["task"] = m.tr.task;
  record["round"] = m.tr.round;
  record["initiator"] = initiator;
  record["slices"] = slices;
  record["proofs_received"] = proofs.size();
  arbitration_log_.push_back(std::move(record));
}

double Simulation::forgetting_now() const {
  const auto t = static_cast<std::uint32_t>(std::min(round_index_, scenario_.tasks * scenario_.rounds - 1) /
                                            scenario_.rounds);
  std::vector<ForgettingScore> scores;
  for (std::uint32_t i = 0; i < scenario_.clients; ++i) {
    if (scenario_.client_is_malicious(i)) continue;
    for (std::uint32_t tt = 0; tt < t; ++tt) {
      scores.push_back(forgetting_score(shape_, task_models_[i][tt], local_[i], test_[i][tt],
                                        scenario_.forgetting));
    }
  }
  return forgetting_aggregate(scores);
}

CostReport Simulation::cost_report() const {
  const Scenario& s = scenario_;
  CostReport r;
  r.params.c = static_cast<double>(s.clients);
  r.params.s = static_cast<double>(s.servers);
  r.params.t = static_cast<double>(s.tasks);
  r.params.c_prime = static_cast<double>(s.defenses.mcs_filter ? s.effective_n_a() : s.clients);
  r.params.d = static_cast<double>(shape_.dim());
  r.params.m = s.index.m;
  r.params.pi = s.index.pi;
  r.params.rounds = static_cast<double>(s.rounds);
  r.measured_comparisons = static_cast<double>(query_stats_.comparisons);
  r.measured_queries = static_cast<double>(query_stats_.queries);
  const double ct = r.params.c * r.params.t;
  if (query_stats_.queries > 0 && query_stats_.comparisons > 0 && ct > 1.0) {
    const double avg = r.measured_comparisons / r.measured_queries;
    r.params.rho = std::clamp(std::log(avg) / std::log(ct), 0.0, 1.0);
  } else {
    r.params.rho = 0.0;
  }
  r.client_blocks = block_knowledge_bytes_.size();
  const double want_block = onchain_block_bits(r.params);
  const double want_broadcast = broadcast_bits(r.params);
  for (std::size_t k = 0; k < block_knowledge_bytes_.size(); ++k) {
    const double block_bits = 8.0 * static_cast<double>(block_knowledge_bytes_[k]);
    const double bc_bits = 8.0 * static_cast<double>(block_broadcast_bytes_[k]);
    r.measured_block_bits = std::max(r.measured_block_bits, block_bits);
    r.measured_broadcast_bits = std::max(r.measured_broadcast_bits, bc_bits);
    r.block_bits_match = r.block_bits_match && block_bits == want_block;
    r.broadcast_bits_match = r.broadcast_bits_match && bc_bits == want_broadcast;
  }
  r.latency.train = s.latency.train;
  r.latency.agg = s.latency.agg;
  r.latency.block = s.latency.block;
  r.latency.ks = s.latency.ks;
  r.latency.rate = s.latency.rate;
  r.latency.fanout = s.latency.fanout;
  r.latency.p2p_bytes = static_cast<double>(shape_.dim()) * 4.0;
  r.latency.broadcast_bytes = want_broadcast / 8.0;
  return r;
}

SimResult run_scenario(const Scenario& scenario) {
  Simulation sim(scenario);
  SimResult out;
  out.scenario = sim.scenario();
  try {
    while (!sim.finished()) out.rounds.push_back(sim.run_round());
  } catch (const SimHalted& e) {
    out.halted = true;
    out.diagnostics = e.what();
  }
  out.cost = sim.cost_report();
  out.chain = sim.ledger().chain();
  out.arbitration = sim.arbitration_log();
  out.flagged = sim.flagged_servers();
  out.blacklist = sim.ledger().blacklist();
  for (const auto& m : out.rounds) {
    out.replay.attempts += m.replay_attempts;
    out.replay.rejected += m.replay_rejected;
  }
  const auto& s = out.scenario;
  if (s.client_attack.kind == ClientAttack::Replay) out.replay.attackers = s.client_attack.ids.size();
  for (ClientId id : out.blacklist) {
    if (s.client_is_malicious(to_index(id))) {
      ++out.replay.attackers_blacklisted;
    } else {
      ++out.replay.honest_blacklisted;
    }
  }
  return out;
}

nlohmann::json cost_report_json(const SimResult& result) {
  nlohmann::json j = to_json(result.cost);
  std::vector<std::uint32_t> flagged;
  for (ServerId id : result.flagged) flagged.push_back(to_index(id));
  std::vector<std::uint32_t> blacklist;
  for (ClientId id : result.blacklist) blacklist.push_back(to_index(id));
  j["metrics_schema"] = kMetricsSchema;
  j["metrics_header"] = metrics_header();
  j["rounds_completed"] = result.rounds.size();
  j["halted"] = result.halted;
  j["diagnostics"] = result.diagnostics;
  j["final_mean_accuracy"] = result.final_accuracy();
  j["final_forgetting"] = result.final_forgetting();
  j["flagged_servers"] = flagged;
  j["blacklist"] = blacklist;
  j["replay"] = {{"attempts", result.replay.attempts},
                 {"rejected", result.replay.rejected},
                 {"attackers_blacklisted", result.replay.attackers_blacklisted},
                 {"honest_blacklisted", result.replay.honest_blacklisted}};
  j["chain_height"] = result.chain.empty() ? 0 : result.chain.back().height;
  return j;
}

void write_outputs(const SimResult& result, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto open = [&dir](const char* name) {
    std::ofstream out(dir / name, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + (dir / name).string());
    return out;
  };
  {
    auto out = open("metrics.csv");
    out << metrics_header() << '\n';
    for (const auto& m : result.rounds) out << metrics_row(m) << '\n';
  }
  {
    auto out = open("cost_report.json");
    out << cost_report_json(result).dump(2) << '\n';
  }
  {
    auto out = open("chain.jsonl");
    for (const auto& b : result.chain) out << to_json(b).dump() << '\n';
  }
  {
    auto out = open("arbitration.jsonl");
    for (const auto& rec : result.arbitration) out << rec.dump() << '\n';
  }
}

}  // namespace lifechain
