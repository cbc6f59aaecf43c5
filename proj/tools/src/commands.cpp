#include "lifechain_cli/commands.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <vector>

#include <CLI11.hpp>
#include <toml.hpp>

#include "lifechain/cost_model.hpp"
#include "lifechain/ledger.hpp"
#include "lifechain/scenario.hpp"
#include "lifechain/sim.hpp"

namespace lifechain::cli {

namespace {

std::filesystem::path output_dir(const RunOptions& opts) {
  if (opts.out) return *opts.out;
  if (const char* env = std::getenv(kOutEnv); env != nullptr && *env != '\0') return env;
  return "out";
}

std::string num(double x, const char* format = "%.6g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, format, x);
  return buf;
}

struct CostInputs {
  CostParams params;
  unsigned collusion_servers = 4;
  double compromise_prob = 0.1;
};

CostInputs parse_cost_params(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open params file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();

  toml::table root;
  try {
    root = toml::parse(buf.str(), path.string());
  } catch (const toml::parse_error& e) {
    throw InvalidInput(path.string() + ": " + std::string(e.description()));
  }

  CostInputs ci;
  auto read = [](const toml::table& t, std::string_view section,
                 std::initializer_list<std::pair<const char*, double*>> fields) {
    for (const auto& [key, node] : t) {
      const auto match = std::find_if(fields.begin(), fields.end(),
                                      [&](const auto& f) { return key.str() == f.first; });
      if (match == fields.end()) {
        throw InvalidInput("unknown key " + std::string(section) + "." + std::string(key.str()));
      }
      const auto v = node.value<double>();
      if (!v) throw InvalidInput(std::string(section) + "." + match->first + " must be a number");
      *match->second = *v;
    }
  };

  for (const auto& [key, node] : root) {
    const auto* table = node.as_table();
    if (key.str() == "cost" && table) {
      auto& p = ci.params;
      read(*table, "cost",
           {{"clients", &p.c}, {"servers", &p.s}, {"tasks", &p.t}, {"c_prime", &p.c_prime},
            {"d", &p.d}, {"m", &p.m}, {"pi", &p.pi}, {"rho", &p.rho}, {"b_plus", &p.b_plus},
            {"b_minus", &p.b_minus}, {"rounds", &p.rounds}});
    } else if (key.str() == "collusion" && table) {
      double servers = ci.collusion_servers;
      read(*table, "collusion", {{"servers", &servers}, {"p", &ci.compromise_prob}});
      if (servers < 1 || servers != static_cast<unsigned>(servers)) {
        throw InvalidInput("collusion.servers must be a positive integer");
      }
      ci.collusion_servers = static_cast<unsigned>(servers);
    } else {
      throw InvalidInput("unknown section " + std::string(key.str()));
    }
  }
  if (ci.compromise_prob < 0 || ci.compromise_prob > 1) {
    throw InvalidInput("collusion.p must lie in [0, 1]");
  }
  const auto& p = ci.params;
  if (p.c < 1 || p.s < 1 || p.t < 1 || p.c_prime < 0 || p.d < 1 || p.m < 2 || p.pi < 1) {
    throw InvalidInput("cost parameters out of range");
  }
  return ci;
}

std::optional<std::vector<Block>> read_chain(const std::filesystem::path& path,
                                             std::optional<std::uint64_t>& bad_line,
                                             std::ostream& err) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    err << "error: cannot open chain file " << path.string() << '\n';
    return std::nullopt;
  }
  std::vector<Block> blocks;
  std::string line;
  std::uint64_t index = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      blocks.push_back(block_from_json(nlohmann::json::parse(line)));
    } catch (const std::exception& e) {
      bad_line = index;
      err << "line " << index << ": " << e.what() << '\n';
      break;
    }
    ++index;
  }
  if (blocks.empty() && !bad_line) {
    err << "error: chain file " << path.string() << " is empty\n";
    return std::nullopt;
  }
  return blocks;
}

}  // namespace

int cmd_run(const RunOptions& opts, std::ostream& out, std::ostream& err) {
  Scenario scenario;
  try {
    scenario = opts.scenario ? load_scenario(*opts.scenario) : default_scenario();
    if (opts.seed) scenario.seed = *opts.seed;
    scenario.validate();
  } catch (const Error& e) {
    err << "scenario error: " << e.what() << '\n';
    return kBadInput;
  }

  const auto dir = output_dir(opts);
  SimResult result;
  try {
    result = run_scenario(scenario);
    write_outputs(result, dir);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kBadInput;
  }

  if (!opts.quiet) {
    out << "rounds " << result.rounds.size() << '/' << scenario.tasks * scenario.rounds
        << "  final accuracy " << num(result.final_accuracy(), "%.4f") << "  forgetting "
        << num(result.final_forgetting(), "%.4f") << "  blacklist " << result.blacklist.size()
        << "  flagged " << result.flagged.size() << '\n';
    out << "wrote " << dir.string() << '\n';
  }
  if (result.halted) {
    err << "halted: " << result.diagnostics << '\n';
    return kHalted;
  }
  return kOk;
}

int cmd_verify(const std::filesystem::path& chain, std::ostream& out, std::ostream& err) {
  std::optional<std::uint64_t> bad_line;
  const auto blocks = read_chain(chain, bad_line, err);
  if (!blocks) return kBadInput;

  std::optional<std::uint64_t> bad = verify_blocks(*blocks);
  if (!bad) {
    // Re-append every block to check signatures and Merkle roots as well.
    Ledger replay(crypto::default_signatures(), false);
    for (const auto& b : *blocks) {
      try {
        replay.append_block(b);
      } catch (const Error& e) {
        err << e.what() << '\n';
        bad = b.height;
        break;
      }
    }
  }
  if (bad_line && (!bad || *bad_line < *bad)) bad = *bad_line;
  if (bad) {
    out << "bad height " << *bad << '\n';
    return kChainInvalid;
  }
  out << "ok " << blocks->size() << " blocks\n";
  return kOk;
}

int cmd_cost(const std::optional<std::filesystem::path>& params, bool json, std::ostream& out,
             std::ostream& err) {
  CostInputs ci;
  try {
    if (params) ci = parse_cost_params(*params);
  } catch (const Error& e) {
    err << "params error: " << e.what() << '\n';
    return kBadInput;
  }
  const auto& p = ci.params;
  const double attack = collusion_attack_prob(ci.collusion_servers, ci.compromise_prob);
  const double safety = collusion_safety_prob(ci.collusion_servers, ci.compromise_prob);

  if (json) {
    nlohmann::json j = formula_table(p);
    j["collusion_servers"] = ci.collusion_servers;
    j["compromise_prob"] = ci.compromise_prob;
    j["collusion_attack_prob"] = attack;
    j["collusion_safety_prob"] = safety;
    out << j.dump(2) << '\n';
    return kOk;
  }

  auto row = [&out](const std::string& name, const std::string& a, const std::string& b = "") {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-28s %18s %18s\n", name.c_str(), a.c_str(), b.c_str());
    out << buf;
  };
  row("retrieval cost", "krv", "linear");
  row("  operations", num(krv_compute_cost(p)), num(linear_compute_cost(p)));
  row("  crossover ct", num(krv_crossover(p.m, p.pi)));
  row("storage per block (bits)", "lifechain", "similarity table");
  row("  block bits", num(onchain_block_bits(p)), num(similarity_table_bits(p)));
  row("broadcast per block (bits)", "lifechain", "savings");
  row("  broadcast bits", num(broadcast_bits(p)), num(broadcast_savings_bits(p)));
  row("collusion (s, p)", std::to_string(ci.collusion_servers), num(ci.compromise_prob));
  row("  attack probability", num(attack, "%.4f"));
  row("  safety probability", num(safety, "%.4f"));
  return kOk;
}

int cmd_query(const std::filesystem::path& chain, std::uint64_t tx_id, std::size_t k,
              std::ostream& out, std::ostream& err) {
  std::optional<std::uint64_t> bad_line;
  const auto blocks = read_chain(chain, bad_line, err);
  if (!blocks || bad_line) return kBadInput;

  std::vector<const ClientTransaction*> txs;
  const ClientTransaction* probe = nullptr;
  for (const auto& b : *blocks) {
    if (b.kind != BlockKind::Client) continue;
    for (const auto& tx : b.client_txs()) {
      txs.push_back(&tx);
      if (tx.tx_id == tx_id) probe = &tx;
    }
  }
  if (probe == nullptr) {
    err << "error: no client transaction " << tx_id << " in chain\n";
    return kBadInput;
  }

  std::vector<std::pair<std::size_t, const ClientTransaction*>> ranked;
  for (const auto* tx : txs) {
    if (tx == probe) continue;
    std::size_t agree = 0;
    for (std::size_t g = 0; g < std::min(tx->krv.size(), probe->krv.size()); ++g) {
      agree += tx->krv[g] == probe->krv[g] ? 1 : 0;
    }
    if (agree > 0) ranked.emplace_back(agree, tx);
  }
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  if (ranked.size() > k) ranked.resize(k);

  out << "tx_id,owner,task,round,shared_buckets\n";
  for (const auto& [agree, tx] : ranked) {
    out << tx->tx_id << ',' << to_index(tx->owner) << ',' << tx->tr.task << ',' << tx->tr.round
        << ',' << agree << '\n';
  }
  return kOk;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"LiFeChain protocol simulator"};
  app.require_subcommand(1);

  RunOptions run;
  std::string scenario_path, out_path;
  std::uint64_t seed = 0;
  auto* run_cmd = app.add_subcommand("run", "Run a scenario and write metrics, cost report and chain");
  auto* scenario_opt = run_cmd->add_option("--scenario", scenario_path, "Scenario TOML file");
  auto* seed_opt = run_cmd->add_option("--seed", seed, "Seed override");
  auto* out_opt = run_cmd->add_option("--out", out_path, "Output directory (default $LIFECHAIN_OUT or ./out)");
  run_cmd->add_flag("-q,--quiet", run.quiet, "Suppress the summary line");

  std::string chain_path;
  auto* verify_cmd = app.add_subcommand("verify", "Check hash links, Merkle roots and signatures of a chain dump");
  verify_cmd->add_option("--chain", chain_path, "chain.jsonl file")->required();

  std::string params_path;
  bool cost_json = false;
  auto* cost_cmd = app.add_subcommand("cost", "Evaluate the cost and collusion formulas");
  auto* params_opt = cost_cmd->add_option("--params", params_path, "Cost parameter TOML file");
  cost_cmd->add_flag("--json", cost_json, "Emit JSON instead of a table");

  std::string query_chain;
  std::uint64_t query_tx = 0;
  std::size_t query_k = 10;
  auto* query_cmd = app.add_subcommand("query", "List transactions sharing buckets with a given one");
  query_cmd->add_option("--chain", query_chain, "chain.jsonl file")->required();
  query_cmd->add_option("--tx", query_tx, "Probe transaction id")->required();
  query_cmd->add_option("-k", query_k, "Maximum results");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  if (*run_cmd) {
    if (*scenario_opt) run.scenario = scenario_path;
    if (*seed_opt) run.seed = seed;
    if (*out_opt) run.out = out_path;
    return cmd_run(run, out, err);
  }
  if (*verify_cmd) return cmd_verify(chain_path, out, err);
  if (*cost_cmd) {
    return cmd_cost(*params_opt ? std::optional<std::filesystem::path>(params_path) : std::nullopt,
                    cost_json, out, err);
  }
  if (*query_cmd) return cmd_query(query_chain, query_tx, query_k, out, err);
  return kUsage;
}

}  // namespace lifechain::cli
