#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

namespace lifechain::cli {

/// Process exit codes. Stable across releases.
enum ExitCode : int {
  kOk = 0,
  kUsage = 1,
  kBadInput = 2,     // unreadable or invalid scenario / params / chain file
  kHalted = 3,       // consensus failed beyond the retry budget
  kChainInvalid = 4,
};

inline constexpr const char* kOutEnv = "LIFECHAIN_OUT";

struct RunOptions {
  std::optional<std::filesystem::path> scenario;  // built-in default when unset
  std::optional<std::uint64_t> seed;              // overrides the scenario seed
  std::optional<std::filesystem::path> out;       // falls back to $LIFECHAIN_OUT, then ./out
  bool quiet = false;
};

int cmd_run(const RunOptions& opts, std::ostream& out, std::ostream& err);
int cmd_verify(const std::filesystem::path& chain, std::ostream& out, std::ostream& err);
int cmd_cost(const std::optional<std::filesystem::path>& params, bool json, std::ostream& out,
             std::ostream& err);
/// Ranks the client transactions of a chain dump by bucket agreement with
/// transaction `tx_id`.
int cmd_query(const std::filesystem::path& chain, std::uint64_t tx_id, std::size_t k,
              std::ostream& out, std::ostream& err);

/// Parses argv and dispatches to a subcommand.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace lifechain::cli
