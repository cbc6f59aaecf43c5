#pragma once

// Delivery-order exploration for one PoMC round. Each explored state is the
// full set of server states plus the in-flight messages; a step delivers any
// one in-flight message. Safety is checked in every reachable state.

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "lifechain/consensus.hpp"

namespace schedules {

struct Report {
  std::size_t states = 0;         // distinct states visited
  std::size_t terminal = 0;       // states with nothing left in flight
  std::size_t committed_runs = 0; // terminal states where an honest server finalized
  bool conflict = false;          // two honest servers finalized different digests
  bool invalid = false;           // an honest server finalized a digest other than `valid`
  bool truncated = false;         // state limit reached
  std::string detail;
};

struct Setup {
  std::size_t s = 4;
  std::uint32_t primary = 0;
  std::vector<lifechain::ServerProfile> profiles;
  std::shared_ptr<const lifechain::RoundInput> view;  // shared by every server
};

/// Every delivery order, with state deduplication.
Report explore_all(const Setup& setup, std::size_t state_limit = 5'000'000);

/// `runs` uniformly random delivery orders.
Report explore_random(const Setup& setup, std::size_t runs, std::uint64_t seed);

/// Digest an honest server accepts for this view.
lifechain::Digest valid_digest(const Setup& setup);

}  // namespace schedules
