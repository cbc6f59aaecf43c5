// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "fixtures.hpp"
#include "lifechain/arbitration.hpp"
#include "lifechain/consensus.hpp"
#include "lifechain/cost_model.hpp"
#include "lifechain/knowledge_index.hpp"
#include "lifechain/learner.hpp"
#include "lifechain/scenario.hpp"
#include "lifechain/sim.hpp"
#include "lifechain_cli/commands.hpp"
#include "oracles.hpp"
#include "schedules.hpp"

using namespace lifechain;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + std::string("failed: ") + what;
    }
  }
  void note(const std::string& s) { detail += (detail.empty() ? "" : "; ") + s; }
};

std::string fmt(const char* f, double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, x);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

Scenario scenario_file(const char* name) { return load_scenario(fs::path(LIFECHAIN_SCENARIO_DIR) / name); }

Scenario attack_free(Scenario s) {
  s.client_attack = {};
  s.server_fault = {};
  return s;
}

// --- 1 ----------------------------------------------------------------------------
Outcome collusion() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  const double attack = collusion_attack_prob(4, 0.1);
  const double safety = collusion_safety_prob(4, 0.1);
  const auto us = std::chrono::duration<double, std::micro>(std::chrono::steady_clock::now() - t0).count();
  o.require(attack >= 0.0036 && attack <= 0.0038, "attack probability in [0.0036, 0.0038]");
  o.require(std::abs(attack - static_cast<double>(oracle::binomial_range(4, 3, 4, 0.1L))) < 1e-15,
            "matches direct binomial sum");
  o.require(std::abs(safety - static_cast<double>(oracle::binomial_range(4, 0, 1, 0.1L))) < 1e-15,
            "safety matches direct binomial sum");
  o.require(us < 1000.0, "runtime under 1 ms");
  o.note("attack " + fmt("%.6f", attack) + ", safety " + fmt("%.4f", safety) + ", " + fmt("%.1f", us) + " us");
  return o;
}

// --- 2 and 3 share one 50-task run -------------------------------------------------
struct StorageRun {
  SimResult result;
  Scenario scenario;
};

const StorageRun& storage_run() {
  static const StorageRun run = [] {
    Scenario s;
    s.seed = 2;
    s.tasks = 50;
    s.rounds = 1;
    s.n_a = 20;
    return StorageRun{run_scenario(s), s};
  }();
  return run;
}

Outcome storage() {
  Outcome o;
  const auto& run = storage_run();
  const auto& s = run.scenario;
  o.require(!run.result.halted, "run completes");
  o.require(run.result.rounds.size() == s.tasks * s.rounds, "one record per round");

  const double c_prime = 20, pi = s.index.pi, b = 32;
  const double want_bits = c_prime * pi * b;
  std::size_t blocks = 0, exact = 0;
  for (const auto& blk : run.result.chain) {
    if (blk.kind != BlockKind::Client) continue;
    ++blocks;
    exact += 8.0 * static_cast<double>(knowledge_bytes(blk)) == want_bits ? 1 : 0;
  }
  o.require(blocks == s.tasks * s.rounds, "one client block per round");
  o.require(exact == blocks, "every client block carries c'*Pi*32 bits");
  o.require(run.result.cost.block_bits_match, "cost report agrees");

  // Similarity-table storage grows linearly with ct and overtakes the
  // on-chain payload exactly past ct = Pi.
  CostParams p;
  p.c_prime = c_prime;
  p.pi = pi;
  bool linear = true, crossing = true;
  for (int ct = 1; ct <= 200; ++ct) {
    p.c = 1;
    p.t = ct;
    const double table = similarity_table_bits(p);
    p.t = ct + 1;
    const double next = similarity_table_bits(p);
    linear = linear && next - table == c_prime * 32;
    crossing = crossing && ((table > onchain_block_bits(p)) == (ct > pi));
  }
  o.require(linear, "table bits grow by c'*b+ per unit of ct");
  o.require(crossing, "table exceeds on-chain bits iff ct > Pi");
  o.note(std::to_string(exact) + "/" + std::to_string(blocks) + " blocks at " + fmt("%.0f", want_bits) + " bits");
  return o;
}

Outcome broadcast() {
  Outcome o;
  const auto& run = storage_run();
  const double c = 20, s = 6, c_prime = 20, pi = 4, b = 32;
  const double want_bytes = c_prime * pi * b * (c + s - 1) / 8;
  std::size_t exact = 0;
  for (const auto& m : run.result.rounds) exact += static_cast<double>(m.broadcast_bytes) == want_bytes ? 1 : 0;
  o.require(exact == run.result.rounds.size() && exact > 0, "every round broadcasts c'*Pi*b-*(c+s-1)/8 bytes");
  o.require(run.result.cost.broadcast_bits_match, "cost report agrees");
  o.note(std::to_string(exact) + "/" + std::to_string(run.result.rounds.size()) + " rounds at " +
         fmt("%.0f", want_bytes) + " bytes");
  return o;
}

// --- 4 ----------------------------------------------------------------------------
Outcome lsh() {
  Outcome o;
  const std::size_t dim = 16;
  const std::size_t n = 100000;
  const HyperplaneSet planes(IndexParams{404, 50, 2000, 64}, dim);

  std::vector<double> a(dim, 0.0), b(dim, 0.0);
  std::string rates;
  for (double deg : {30.0, 60.0, 90.0}) {
    const double theta = deg * std::numbers::pi / 180.0;
    std::fill(a.begin(), a.end(), 0.0);
    std::fill(b.begin(), b.end(), 0.0);
    a[0] = 1.0;
    b[0] = std::cos(theta);
    b[1] = std::sin(theta);
    std::size_t agree = 0;
    for (std::uint32_t g = 0; g < 2000; ++g) {
      for (std::uint32_t j = 0; j < 50; ++j) {
        const auto p = planes.plane(g, j);
        agree += hash_sign(p, a) == hash_sign(p, b) ? 1 : 0;
      }
    }
    const double rate = static_cast<double>(agree) / static_cast<double>(n);
    const double expect = 1.0 - theta / std::numbers::pi;
    o.require(std::abs(rate - expect) <= 3.0 / std::sqrt(static_cast<double>(n)),
              "agreement at " + fmt("%.0f", deg) + " deg");
    rates += (rates.empty() ? "" : " ") + fmt("%.0f", deg) + ":" + fmt("%.4f", rate);
  }

  std::size_t hits = 0;
  for (std::uint64_t trial = 0; trial < 100; ++trial) {
    std::mt19937_64 rng(derive_seed(77, trial));
    RetrievalTable table(IndexParams{derive_seed(78, trial), 8, 8, 64}, 64);
    std::vector<Vector> stored;
    for (std::uint32_t i = 0; i < 100; ++i) {
      stored.push_back(fixtures::gaussian(64, rng));
      table.insert(KnowledgeVector{ClientId{i}, {0, 0}, stored.back()});
    }
    std::uniform_int_distribution<std::size_t> pick(0, 99);
    Vector probe = stored[pick(rng)];
    const Vector noise = fixtures::gaussian(64, rng);
    const double scale = 0.3 * std::sqrt(oracle::dot(probe, probe) / oracle::dot(noise, noise));
    for (std::size_t j = 0; j < 64; ++j) probe[j] += scale * noise[j];

    const auto got = table.query(probe, 1);
    const auto want = oracle::top_k_cosine(stored, probe, 1);
    hits += !got.empty() && got.front().id == want.front() ? 1 : 0;
  }
  o.require(hits >= 95, "top-1 matches brute force in at least 95/100 trials");
  o.note(rates + ", top-1 " + std::to_string(hits) + "/100");
  return o;
}

// --- 5 ----------------------------------------------------------------------------
Outcome consensus() {
  Outcome o;
  std::size_t states = 0, cases = 0;

  auto run_exhaustive = [&](std::uint32_t primary, std::uint32_t byz, ServerProfile bad,
                            const std::string& label) {
    const auto round = fixtures::make_round(6, 12, 500 + cases, 5);
    schedules::Setup setup;
    setup.s = 4;
    setup.primary = primary;
    setup.profiles.assign(4, ServerProfile{});
    setup.profiles[byz] = bad;
    setup.view = round.input;
    const auto r = schedules::explore_all(setup);
    ++cases;
    states += r.states;
    o.require(!r.truncated, label + " explored fully");
    o.require(!r.conflict && !r.invalid, label + " safe (" + r.detail + ")");
  };

  for (std::uint32_t byz = 0; byz < 4; ++byz) {
    run_exhaustive(0, byz, {Behavior::Silent, 1.0, 0}, "silent " + std::to_string(byz));
  }
  for (std::uint64_t mask = 1; mask < 16; ++mask) {
    run_exhaustive(0, 0, {Behavior::Equivocate, 1.0, mask}, "equivocating primary mask " + std::to_string(mask));
  }
  for (std::uint32_t byz = 1; byz < 4; ++byz) {
    run_exhaustive(0, byz, {Behavior::Equivocate, 1.0, 0}, "equivocating replica " + std::to_string(byz));
  }

  // s = 6, f = 1, random delivery orders over every Byzantine placement.
  std::size_t random_runs = 0, honest_primary_runs = 0, honest_primary_commits = 0;
  for (std::uint32_t k = 0; k < 1000; ++k) {
    const auto round = fixtures::make_round(6, 12, 9000 + k, 5);
    schedules::Setup setup;
    setup.s = 6;
    setup.primary = k % 6;
    setup.profiles.assign(6, ServerProfile{});
    const std::uint32_t byz = (k / 6) % 6;
    setup.profiles[byz] = (k / 36) % 2 == 0 ? ServerProfile{Behavior::Silent, 1.0, 0}
                                            : ServerProfile{Behavior::Equivocate, 1.0, derive_seed(k, 1) % 64};
    setup.view = round.input;
    const auto r = schedules::explore_random(setup, 1, derive_seed(31, k));
    ++random_runs;
    o.require(!r.conflict && !r.invalid, "random schedule " + std::to_string(k));
    if (byz != setup.primary) {
      ++honest_primary_runs;
      honest_primary_commits += r.committed_runs;
    }
  }
  o.require(honest_primary_commits == honest_primary_runs, "every round with an honest primary commits at s=6, f=1");

  // Quorum boundary on the primary's commit count.
  for (std::size_t s : {4u, 6u, 7u}) {
    const auto round = fixtures::make_round(6, 12, 321, 5);
    const std::size_t need = (2 * s + 2) / 3;  // ceil(2s/3)
    for (std::size_t commits : {need, need + 1}) {
      PomcServer primary(ServerId{0}, s, ServerId{0}, {}, round.input);
      for (const auto& m : primary.start()) {
        if (m.to == ServerId{0}) primary.on_message(m);
      }
      const Digest d = *primary.accepted();
      for (std::uint32_t k = 0; k < commits; ++k) primary.on_message({MsgKind::Commit, ServerId{k}, ServerId{0}, d, nullptr});
      const bool finalized = primary.finalized().has_value();
      o.require(finalized == (commits == need + 1),
                "s=" + std::to_string(s) + " with " + std::to_string(commits) + " commits");
    }
  }
  o.note(std::to_string(cases) + " exhaustive cases, " + std::to_string(states) + " states; " +
         std::to_string(random_runs) + " random schedules, " + std::to_string(honest_primary_commits) + "/" +
         std::to_string(honest_primary_runs) + " honest-primary commits");
  return o;
}

// --- 6 ----------------------------------------------------------------------------
Outcome mcs_defense() {
  Outcome o;
  Vector honest{1.0, -2.0, 0.5, 3.0};
  Vector flipped = attack_model_scale(honest, -1.0);
  std::vector<ModelUpdate> ups;
  for (std::uint32_t i = 0; i < 4; ++i) ups.push_back({ClientId{i}, {0, 0}, honest});
  ups.push_back({ClientId{4}, {0, 0}, flipped});
  const auto scores = mcs_scores(ups);
  for (std::size_t i = 0; i < 4; ++i) o.require(scores[i] == 4.0, "honest score exactly 4");
  o.require(scores[4] == 1.0, "attacker score exactly 1");
  const auto sel = select_and_aggregate(ups, 4);
  o.require(std::find(sel.selected.begin(), sel.selected.end(), ClientId{4}) == sel.selected.end(),
            "attacker not selected");

  std::vector<double> on, off;
  double worst_gap = 0.0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Scenario s = default_scenario();
    s.seed = seed;
    const auto r_on = run_scenario(s);
    const auto r_off = run_scenario(disable_defenses(s));
    const auto r_clean_on = run_scenario(attack_free(s));
    const auto r_clean_off = run_scenario(disable_defenses(attack_free(s)));
    o.require(!r_on.halted && !r_off.halted && !r_clean_on.halted && !r_clean_off.halted, "runs complete");
    on.push_back(r_on.final_accuracy());
    off.push_back(r_off.final_accuracy());
    worst_gap = std::max(worst_gap, std::abs(r_clean_on.final_accuracy() - r_clean_off.final_accuracy()));
  }
  o.require(median(on) > median(off), "median accuracy with defenses exceeds defenses-off");
  o.require(worst_gap <= 0.02, "attack-free runs within 0.02");
  o.note("median on " + fmt("%.4f", median(on)) + " vs off " + fmt("%.4f", median(off)) +
         ", attack-free gap " + fmt("%.4f", worst_gap));
  return o;
}

// --- 7 ----------------------------------------------------------------------------
Outcome segza() {
  Outcome o;
  auto base = [](std::uint64_t seed) {
    Scenario s;
    s.seed = seed;
    s.features = 499;  // d = 499 * 8 + 8 = 4000
    s.tasks = 1;
    s.rounds = 1;
    s.segment = 1000;
    return s;
  };

  std::size_t caught = 0, clean = 0, four_slices = 0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    Scenario tampered = base(seed);
    tampered.server_fault = {{0}, ServerFault::Tamper, 10.0};  // server 0 leads round 0
    const auto r = run_scenario(tampered);
    // Replicas reject the scaled proposal, so the round commits on the second primary.
    const bool led = !r.rounds.empty() && r.rounds.front().attempts == 2;
    caught += led && !r.halted && r.flagged == std::set<ServerId>{ServerId{0}} ? 1 : 0;
    if (!r.arbitration.empty() && r.arbitration.front()["slices"].size() >= 4) {
      std::set<std::size_t> begins;
      for (const auto& sl : r.arbitration.front()["slices"]) begins.insert(sl["begin"].get<std::size_t>());
      four_slices += begins.size() == 4 ? 1 : 0;
    }
    const auto h = run_scenario(base(seed));
    clean += !h.halted && h.flagged.empty() && h.arbitration.size() == 1 ? 1 : 0;
  }
  o.require(caught == 100, "tampering primary flagged in every run");
  o.require(clean == 100, "honest runs raise no flag");
  o.require(four_slices == 100, "z = 4 slices");

  // Proofs copied onto another slice or server never verify.
  std::size_t forged = 0, rejected = 0;
  const auto& backend = default_proof_backend();
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    std::mt19937_64 rng(seed);
    std::vector<Vector> models;
    for (int i = 0; i < 5; ++i) models.push_back(fixtures::gaussian(4000, rng));
    Vector agg(4000, 0.0);
    for (const auto& m : models)
      for (std::size_t j = 0; j < agg.size(); ++j) agg[j] += m[j] / 5.0;
    std::vector<ServerId> committee;
    for (std::uint32_t k = 0; k < 6; ++k) committee.push_back(ServerId{k});
    const auto asg = assign_slices(seed, 4000, 1000, committee, seed);
    const Digest k_pro = crypto::KeyPair::derive(seed, "prover", 0).secret;
    const Digest k_ver = backend.verification_key(k_pro);
    std::vector<ProofFile> proofs;
    for (const auto& [server, range] : asg.slices) {
      proofs.push_back(backend.prove({seed, server, range, models, agg, 1}, k_pro));
    }
    o.require(arbitrate(agg, asg, proofs, k_ver).flagged.empty(), "honest proofs verify");
    for (std::size_t a = 0; a < proofs.size(); ++a) {
      for (std::size_t b = 0; b < proofs.size(); ++b) {
        if (asg.slices[a] == asg.slices[b]) continue;
        ProofFile copy = proofs[a];
        copy.server = asg.slices[b].first;
        copy.range = asg.slices[b].second;
        ++forged;
        rejected += backend.verify(copy, slice_digest(copy.range, agg), k_ver) ? 0 : 1;
      }
    }
  }
  o.require(forged > 0 && rejected == forged, "every copied proof fails verification");

  std::size_t forge_flagged = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Scenario s = base(seed);
    s.server_fault = {{3}, ServerFault::Forge, 1.0};
    const auto r = run_scenario(s);
    forge_flagged += r.flagged == std::set<ServerId>{ServerId{3}} ? 1 : 0;
  }
  o.require(forge_flagged == 10, "forging server flagged end to end");
  o.note("tamper flagged " + std::to_string(caught) + "/100, honest clean " + std::to_string(clean) +
         "/100, forged proofs rejected " + std::to_string(rejected) + "/" + std::to_string(forged));
  return o;
}

// --- 8 ----------------------------------------------------------------------------
Outcome replay() {
  Outcome o;
  std::size_t attempts = 0, rejected = 0, attackers = 0, caught = 0, false_flags = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Scenario s = default_scenario();
    s.seed = seed;
    s.client_attack = {{0, 1, 2, 3}, ClientAttack::Replay, 1.0};
    const auto r = run_scenario(s);
    o.require(!r.halted, "run completes");
    attempts += r.replay.attempts;
    rejected += r.replay.rejected;
    attackers += r.replay.attackers;
    caught += r.replay.attackers_blacklisted;
    false_flags += r.replay.honest_blacklisted;
  }
  o.require(attempts > 0 && rejected == attempts, "every replay rejected");
  o.require(caught == attackers, "every replaying client blacklisted");
  o.require(false_flags == 0, "no honest client blacklisted");
  o.note("rejected " + std::to_string(rejected) + "/" + std::to_string(attempts) + ", blacklisted " +
         std::to_string(caught) + "/" + std::to_string(attackers) + ", false " + std::to_string(false_flags));
  return o;
}

// --- 9 ----------------------------------------------------------------------------
Outcome forgetting() {
  Outcome o;
  const ModelShape shape{1, 2};
  Dataset one;
  one.features = 1;
  one.x = {1.0};
  one.y = {0};
  auto margin = [](double ce) { return -std::log(std::exp(ce) - 1.0); };  // CE = log(1 + e^-z)
  const Vector ref{margin(0.1), 0.0, 0.0, 0.0};
  const Vector cur{margin(0.5), 0.0, 0.0, 0.0};
  const Vector better{margin(0.01), 0.0, 0.0, 0.0};
  const ForgettingParams fp{0.05, 0.6};

  auto ulps_close = [](double a, double b) {
    return std::abs(a - b) <= 4 * std::numeric_limits<double>::epsilon() * std::max(std::abs(a), std::abs(b));
  };
  o.require(forgetting_score(shape, ref, ref, one, fp).score == 0.0, "identity scores 0");
  o.require(ulps_close(forgetting_term(0.1, 0.5, 0.05), 0.35), "substitution case gives 0.35");
  const auto sub = forgetting_score(shape, ref, cur, one, fp);
  o.require(sub.anchors == 1 && std::abs(sub.score - 0.35) < 1e-12, "single anchored example gives 0.35");
  o.require(forgetting_score(shape, ref, better, one, fp).score == 0.0, "improvement scores 0");

  std::size_t wins = 0;
  std::string per_seed;
  const Scenario base = scenario_file("forgetting.toml");
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Scenario with = base;
    with.seed = seed;
    with.fusion = {0.3, 10};
    Scenario without = with;
    without.fusion.lambda = 0.0;
    const auto a = run_scenario(with);
    const auto b = run_scenario(without);
    o.require(!a.halted && !b.halted, "runs complete");
    wins += a.final_forgetting() <= b.final_forgetting() ? 1 : 0;
  }
  o.require(wins >= 8, "replay forgets no more than lambda=0 in at least 8/10 seeds");
  o.note("replay wins " + std::to_string(wins) + "/10");
  return o;
}

// --- 10 ---------------------------------------------------------------------------
std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Outcome determinism() {
  Outcome o;
  const fs::path root = fs::temp_directory_path() / ("lifechain-accept-" + std::to_string(::getpid()));
  std::ostringstream sink;
  for (const char* run : {"a", "b"}) {
    cli::RunOptions opts;
    opts.scenario = fs::path(LIFECHAIN_SCENARIO_DIR) / "default.toml";
    opts.seed = 7;
    opts.out = root / run;
    opts.quiet = true;
    o.require(cli::cmd_run(opts, sink, sink) == cli::kOk, std::string("run ") + run + " exits 0");
  }
  for (const char* f : {"metrics.csv", "chain.jsonl", "cost_report.json", "arbitration.jsonl"}) {
    const auto a = slurp(root / "a" / f);
    o.require(!a.empty() && a == slurp(root / "b" / f), std::string(f) + " byte-identical");
  }
  fs::remove_all(root);
  return o;
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria = {
      {1, "collusion probability", collusion},
      {2, "on-chain knowledge payload", storage},
      {3, "broadcast volume", broadcast},
      {4, "hyperplane hashing statistics", lsh},
      {5, "consensus safety and quorum", consensus},
      {6, "correlation-score defense", mcs_defense},
      {7, "segmented arbitration", segza},
      {8, "replay rejection", replay},
      {9, "forgetting metric and knowledge replay", forgetting},
      {10, "deterministic runs", determinism},
  };

  int failed = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = c.run();
    } catch (const std::exception& e) {
      out.pass = false;
      out.detail = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%s [%2d] %-40s %8.2fs  %s\n", out.pass ? "PASS" : "FAIL", c.id, c.name, secs,
                out.detail.c_str());
    std::fflush(stdout);
    failed += out.pass ? 0 : 1;
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
