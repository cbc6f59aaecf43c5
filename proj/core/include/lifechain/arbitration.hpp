#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "lifechain/common.hpp"

namespace lifechain {

inline constexpr double kFixedScale = 1e7;

/// Round-half-even of x * 10^7. Throws InvalidInput for non-finite or
/// out-of-range input.
std::int64_t to_fixed(double x);
double from_fixed(std::int64_t v);
std::vector<std::int64_t> to_fixed(std::span<const double> xs);

struct SliceRange {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const { return end - begin; }
  bool operator==(const SliceRange&) const = default;
  auto operator<=>(const SliceRange&) const = default;
};

struct SliceAssignment {
  std::uint64_t arbitration_id = 0;
  std::vector<SliceRange> ranges;                         // partition of [0, d)
  std::vector<std::pair<ServerId, SliceRange>> slices;    // every server gets at least one
  std::vector<ClientId> selected;
};

/// Splits [0, d) into ceil(d / segment) contiguous ranges and hands them out
/// over a seeded shuffle of the committee. When there are fewer ranges than
/// servers, ranges are reused so that every server still proves one.
SliceAssignment assign_slices(std::uint64_t arbitration_id, std::size_t d, std::size_t segment,
                              std::span<const ServerId> committee, std::uint64_t seed,
                              std::vector<ClientId> selected = {});

/// Checks |n * agg[j] - sum_i client_i[j]| <= n * eps for every coordinate.
bool make_witness(std::span<const std::vector<std::int64_t>> clients,
                  std::span<const std::int64_t> agg, std::int64_t eps = 1);

struct ProofFile {
  std::uint64_t arbitration_id = 0;
  ServerId server{};
  SliceRange range;
  Digest witness_digest{};
  Digest binding_tag{};

  bool operator==(const ProofFile&) const = default;
};

nlohmann::json to_json(const ProofFile& p);

/// Material a server needs to prove one slice.
struct ProverInput {
  std::uint64_t arbitration_id = 0;
  ServerId server{};
  SliceRange range;
  std::span<const Vector> client_models;  // selected clients' models, full length
  std::span<const double> aggregate;      // the server's own view of W_g, full length
  std::int64_t eps = 1;
};

/// Digest a verifier expects for a slice of the aggregate.
Digest slice_digest(const SliceRange& range, std::span<const double> aggregate);

class ProofBackend {
 public:
  virtual ~ProofBackend() = default;
  virtual ProofFile prove(const ProverInput& in, const Digest& proving_key) const = 0;
  virtual bool verify(const ProofFile& proof, const Digest& expected_witness,
                      const Digest& verification_key) const = 0;
  virtual Digest verification_key(const Digest& proving_key) const = 0;
};

/// Commitment-based reference backend. Not zero-knowledge: it binds the
/// witness digest, slice range, server and witness outcome under a key
/// derived from the proving key.
class CommitmentProofBackend final : public ProofBackend {
 public:
  ProofFile prove(const ProverInput& in, const Digest& proving_key) const override;
  bool verify(const ProofFile& proof, const Digest& expected_witness,
              const Digest& verification_key) const override;
  Digest verification_key(const Digest& proving_key) const override;
};

const ProofBackend& default_proof_backend();

struct ArbitrationVerdict {
  std::uint64_t arbitration_id = 0;
  std::map<ServerId, bool> pass;
  std::set<ServerId> flagged;
};

nlohmann::json to_json(const ArbitrationVerdict& v);

/// Verifies every assigned slice against the client's own copy of W_g.
/// Servers with a missing or failing proof are flagged.
ArbitrationVerdict arbitrate(std::span<const double> client_global, const SliceAssignment& assignment,
                             std::span<const ProofFile> proofs, const Digest& verification_key,
                             const ProofBackend& backend = default_proof_backend());

}  // namespace lifechain
