#include "fixtures.hpp"

namespace fixtures {

using namespace lifechain;

Vector gaussian(std::size_t d, std::mt19937_64& rng, double mean) {
  std::normal_distribution<double> n(mean, 1.0);
  Vector v(d);
  for (double& x : v) x = n(rng);
  return v;
}

RoundSetup make_round(std::size_t c, std::size_t d, std::uint64_t seed, std::size_t n_a,
                      TaskRound tr) {
  std::mt19937_64 rng(seed);
  RoundSetup out;
  out.input = std::make_shared<RoundInput>();
  auto& in = *out.input;
  in.tr = tr;
  in.n_a = n_a;
  in.height = 1;
  in.hyperplanes = std::make_shared<const HyperplaneSet>(IndexParams{seed + 1, 16, 4, 64}, d);

  const Vector common = gaussian(d, rng, 0.0);
  for (std::uint32_t i = 0; i < c; ++i) {
    out.keys.push_back(crypto::KeyPair::derive(seed, "client", i));
    Vector w = gaussian(d, rng, 0.0);
    for (std::size_t j = 0; j < d; ++j) w[j] = 2.0 * common[j] + 0.5 * w[j];
    ModelUpdate u{ClientId{i}, tr, w};
    ClientTransaction tx;
    tx.tx_id = i;
    tx.owner = ClientId{i};
    tx.tr = tr;
    tx.model_hash = model_hash(w);
    tx.krv = compute_krv(*in.hyperplanes, w);
    tx.timestamp = i;
    tx.sign(out.keys.back(), crypto::default_signatures());
    in.txs.push_back(tx);
    in.updates.push_back(u);
    in.knowledge.push_back(w);
  }
  return out;
}

Ledger make_ledger(const RoundSetup& setup) {
  Ledger ledger;
  std::vector<std::pair<ClientId, Digest>> reg;
  for (std::uint32_t i = 0; i < setup.keys.size(); ++i) reg.emplace_back(ClientId{i}, setup.keys[i].public_key);
  ledger.append_block(Ledger::make_genesis({{"clients", Ledger::client_registry(reg)}}));
  return ledger;
}

}  // namespace fixtures
