#pragma once

#include <cstdint>
#include <optional>

#include <nlohmann/json.hpp>

namespace lifechain {

struct CostParams {
  double c = 20;        // clients
  double s = 6;         // committee servers
  double t = 1;         // tasks so far
  double c_prime = 20;  // knowledge records stored per round
  double d = 72;        // model dimension
  double m = 64;        // buckets per group
  double pi = 4;        // hyperplane groups
  double rho = 0.5;     // candidate exponent
  double b_plus = 32;   // bits per stored similarity value
  double b_minus = 32;  // bits per stored bucket id
  double rounds = 5;    // rounds per task
};

/// (c t)^rho d + M Pi d
double krv_compute_cost(const CostParams& p);
/// c t d
double linear_compute_cost(const CostParams& p);
/// M^2 Pi / (M - 1): the ct threshold under a uniform bucket-load model.
/// Its smallest value over integer M > 1, Pi >= 1 is 4.
double krv_crossover(double m, double pi);

/// c' Pi b-
double onchain_block_bits(const CostParams& p);
/// c' c t b+
double similarity_table_bits(const CostParams& p);

/// c' Pi b- (c + s - 1)
double broadcast_bits(const CostParams& p);
/// (c t b+ - Pi b-) c' (c + s - 1)
double broadcast_savings_bits(const CostParams& p);

double binomial_pmf(unsigned n, unsigned k, double p);
/// P(X <= floor((s - 1) / 3)) for X ~ Binomial(s, p).
double collusion_safety_prob(unsigned s, double p);
/// P(X >= ceil(2 s / 3)): enough compromised servers to form a commit quorum.
double collusion_attack_prob(unsigned s, double p);

struct LatencyParams {
  double train = 0;      // seconds
  double agg = 0;
  double block = 0;
  double broadcast = 0;  // used when broadcast_bytes is unset
  double ks = 0;
  double p2p_bytes = 0;  // per-round model transfer
  double rate = 50e6;    // bytes per second
  double fanout = 1;     // broadcast fan-out factor
  std::optional<double> broadcast_bytes;
};

double transfer_seconds(double bytes, double rate);
/// R (l_train + l_p2p + l_agg + l_block + l_broadcast + l_ks)
double latency_total(const LatencyParams& lp, double rounds);

/// Formula values alongside counters measured by a run.
struct CostReport {
  CostParams params;
  LatencyParams latency;
  double measured_block_bits = 0;      // max over client blocks
  double measured_broadcast_bits = 0;  // per client block
  double measured_comparisons = 0;     // total cosine evaluations in queries
  double measured_queries = 0;
  std::uint64_t client_blocks = 0;
  bool block_bits_match = true;
  bool broadcast_bits_match = true;
};

nlohmann::json to_json(const CostReport& r);
nlohmann::json formula_table(const CostParams& p);

}  // namespace lifechain
