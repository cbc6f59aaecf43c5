#include "lifechain/cost_model.hpp"

#include <cmath>

#include <boost/math/distributions/binomial.hpp>

#include "lifechain/common.hpp"

namespace lifechain {

double krv_compute_cost(const CostParams& p) {
  return std::pow(p.c * p.t, p.rho) * p.d + p.m * p.pi * p.d;
}

double linear_compute_cost(const CostParams& p) { return p.c * p.t * p.d; }

double krv_crossover(double m, double pi) {
  if (m <= 1) throw InvalidInput("crossover needs more than one bucket");
  return m * m * pi / (m - 1);
}

double onchain_block_bits(const CostParams& p) { return p.c_prime * p.pi * p.b_minus; }

double similarity_table_bits(const CostParams& p) { return p.c_prime * p.c * p.t * p.b_plus; }

double broadcast_bits(const CostParams& p) { return onchain_block_bits(p) * (p.c + p.s - 1); }

double broadcast_savings_bits(const CostParams& p) {
  return (p.c * p.t * p.b_plus - p.pi * p.b_minus) * p.c_prime * (p.c + p.s - 1);
}

double binomial_pmf(unsigned n, unsigned k, double p) {
  if (p < 0 || p > 1) throw InvalidInput("probability outside [0, 1]");
  if (k > n) return 0.0;
  return boost::math::pdf(boost::math::binomial(n, p), k);
}

double collusion_safety_prob(unsigned s, double p) {
  if (s == 0) throw InvalidInput("committee must be non-empty");
  double acc = 0.0;
  for (unsigned k = 0; k <= (s - 1) / 3; ++k) acc += binomial_pmf(s, k, p);
  return acc;
}

double collusion_attack_prob(unsigned s, double p) {
  if (s == 0) throw InvalidInput("committee must be non-empty");
  const unsigned quorum = (2 * s + 2) / 3;
  double acc = 0.0;
  for (unsigned k = quorum; k <= s; ++k) acc += binomial_pmf(s, k, p);
  return acc;
}

double transfer_seconds(double bytes, double rate) {
  if (rate <= 0) throw InvalidInput("transfer rate must be positive");
  return bytes / rate;
}

double latency_total(const LatencyParams& lp, double rounds) {
  const double p2p = transfer_seconds(lp.p2p_bytes, lp.rate);
  const double bc = lp.broadcast_bytes ? transfer_seconds(*lp.broadcast_bytes, lp.rate) * lp.fanout
                                       : lp.broadcast;
  return rounds * (lp.train + p2p + lp.agg + lp.block + bc + lp.ks);
}

nlohmann::json formula_table(const CostParams& p) {
  return {
      {"krv_compute_ops", krv_compute_cost(p)},
      {"linear_compute_ops", linear_compute_cost(p)},
      {"krv_crossover_ct", p.m > 1 ? krv_crossover(p.m, p.pi) : 0.0},
      {"onchain_block_bits", onchain_block_bits(p)},
      {"similarity_table_bits", similarity_table_bits(p)},
      {"broadcast_bits", broadcast_bits(p)},
      {"broadcast_savings_bits", broadcast_savings_bits(p)},
  };
}

nlohmann::json to_json(const CostReport& r) {
  const auto& p = r.params;
  const auto& l = r.latency;
  nlohmann::json latency{{"train", l.train},   {"agg", l.agg},   {"block", l.block},
                         {"ks", l.ks},         {"rate", l.rate}, {"p2p_bytes", l.p2p_bytes},
                         {"fanout", l.fanout}, {"total", latency_total(l, p.rounds)}};
  if (l.broadcast_bytes) latency["broadcast_bytes"] = *l.broadcast_bytes;
  return {
      {"params",
       {{"c", p.c}, {"s", p.s}, {"t", p.t}, {"c_prime", p.c_prime}, {"d", p.d}, {"m", p.m},
        {"pi", p.pi}, {"rho", p.rho}, {"b_plus", p.b_plus}, {"b_minus", p.b_minus},
        {"rounds", p.rounds}}},
      {"formulas", formula_table(p)},
      {"measured",
       {{"client_blocks", r.client_blocks},
        {"block_bits", r.measured_block_bits},
        {"broadcast_bits", r.measured_broadcast_bits},
        {"comparisons", r.measured_comparisons},
        {"queries", r.measured_queries},
        {"block_bits_match", r.block_bits_match},
        {"broadcast_bits_match", r.broadcast_bits_match}}},
      {"latency", latency},
  };
}

}  // namespace lifechain
