#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <vector>

#include "lifechain/consensus.hpp"
#include "lifechain/crypto.hpp"
#include "lifechain/ledger.hpp"

namespace fixtures {

/// Gaussian vector with the given mean offset on every coordinate.
lifechain::Vector gaussian(std::size_t d, std::mt19937_64& rng, double mean = 0.0);

/// A client round with `c` signed transactions built from random updates
/// that share a common direction, so MCS has a clear ordering.
struct RoundSetup {
  std::vector<lifechain::crypto::KeyPair> keys;
  std::shared_ptr<lifechain::RoundInput> input;
};
RoundSetup make_round(std::size_t c, std::size_t d, std::uint64_t seed, std::size_t n_a,
                      lifechain::TaskRound tr = {0, 0});

/// A ledger with a genesis block registering the setup's clients.
lifechain::Ledger make_ledger(const RoundSetup& setup);

}  // namespace fixtures
