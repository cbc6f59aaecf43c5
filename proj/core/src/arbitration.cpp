#include "lifechain/arbitration.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "lifechain/bytes.hpp"
#include "lifechain/crypto.hpp"

namespace lifechain {

std::int64_t to_fixed(double x) {
  if (!std::isfinite(x)) throw InvalidInput("to_fixed of a non-finite value");
  if (std::fabs(x) >= 1e11) throw InvalidInput("to_fixed value exceeds scale headroom");
  // nearbyint honours the default FE_TONEAREST mode, which rounds half to even.
  return static_cast<std::int64_t>(std::nearbyint(x * kFixedScale));
}

double from_fixed(std::int64_t v) { return static_cast<double>(v) / kFixedScale; }

std::vector<std::int64_t> to_fixed(std::span<const double> xs) {
  std::vector<std::int64_t> out;
  out.reserve(xs.size());
  for (double x : xs) out.push_back(to_fixed(x));
  return out;
}

SliceAssignment assign_slices(std::uint64_t arbitration_id, std::size_t d, std::size_t segment,
                              std::span<const ServerId> committee, std::uint64_t seed,
                              std::vector<ClientId> selected) {
  if (d == 0) throw InvalidInput("cannot slice an empty model");
  if (segment == 0) throw InvalidInput("segment size must be positive");
  if (committee.empty()) throw InvalidInput("empty committee");

  SliceAssignment out;
  out.arbitration_id = arbitration_id;
  out.selected = std::move(selected);
  for (std::size_t b = 0; b < d; b += segment) out.ranges.push_back({b, std::min(d, b + segment)});

  std::vector<ServerId> order(committee.begin(), committee.end());
  std::mt19937_64 rng(derive_seed(seed, 0x736c696365ULL, arbitration_id));
  for (std::size_t i = order.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(order[i - 1], order[j]);
  }

  const std::size_t z = out.ranges.size();
  const std::size_t s = order.size();
  for (std::size_t i = 0; i < std::max(z, s); ++i) {
    out.slices.emplace_back(order[i % s], out.ranges[i % z]);
  }
  return out;
}

bool make_witness(std::span<const std::vector<std::int64_t>> clients,
                  std::span<const std::int64_t> agg, std::int64_t eps) {
  if (clients.empty()) throw InvalidInput("make_witness needs at least one client slice");
  for (const auto& c : clients) {
    if (c.size() != agg.size()) throw InvalidInput("witness slice ranges differ");
  }
  const auto n = static_cast<std::int64_t>(clients.size());
  const std::int64_t bound = (std::int64_t{1} << 62) / n;
  auto in_bounds = [bound](std::int64_t x) { return x < bound && x > -bound; };
  for (const auto& c : clients) {
    if (!std::all_of(c.begin(), c.end(), in_bounds)) throw InvalidInput("witness value overflows");
  }
  if (!std::all_of(agg.begin(), agg.end(), in_bounds)) throw InvalidInput("witness value overflows");
  for (std::size_t j = 0; j < agg.size(); ++j) {
    std::int64_t sum = 0;
    for (const auto& c : clients) sum += c[j];
    const std::int64_t diff = n * agg[j] - sum;
    if (diff > n * eps || diff < -n * eps) return false;
  }
  return true;
}

nlohmann::json to_json(const ProofFile& p) {
  return {{"arbitration_id", p.arbitration_id},
          {"server", to_index(p.server)},
          {"range", {p.range.begin, p.range.end}},
          {"witness_digest", to_hex(p.witness_digest)},
          {"binding_tag", to_hex(p.binding_tag)}};
}

Digest slice_digest(const SliceRange& range, std::span<const double> aggregate) {
  if (range.end > aggregate.size() || range.begin > range.end) {
    throw InvalidInput("slice range outside the model");
  }
  ByteWriter w;
  w.u64(range.begin);
  w.u64(range.end);
  for (std::size_t j = range.begin; j < range.end; ++j) w.i64(to_fixed(aggregate[j]));
  return crypto::sha256(w.data());
}

namespace {

Digest binding_tag(const Digest& key, const ProofFile& p, bool witness_ok) {
  ByteWriter w;
  w.str("seg-za-proof");
  w.digest(p.witness_digest);
  w.u64(p.range.begin);
  w.u64(p.range.end);
  w.u32(to_index(p.server));
  w.u64(p.arbitration_id);
  w.u8(witness_ok ? 1 : 0);
  return crypto::hmac_sha256(key, w.data());
}

}  // namespace

Digest CommitmentProofBackend::verification_key(const Digest& proving_key) const {
  return crypto::sha256(std::span<const std::uint8_t>(proving_key));
}

ProofFile CommitmentProofBackend::prove(const ProverInput& in, const Digest& proving_key) const {
  if (in.client_models.empty()) throw InvalidInput("prove: no selected client models");
  const SliceRange r = in.range;
  std::vector<std::vector<std::int64_t>> clients;
  clients.reserve(in.client_models.size());
  for (const auto& m : in.client_models) {
    if (r.end > m.size()) throw InvalidInput("prove: slice outside client model");
    clients.push_back(to_fixed(std::span<const double>(m).subspan(r.begin, r.size())));
  }
  if (r.end > in.aggregate.size()) throw InvalidInput("prove: slice outside aggregate");
  const auto agg = to_fixed(in.aggregate.subspan(r.begin, r.size()));
  const bool ok = make_witness(clients, agg, in.eps);

  ProofFile p;
  p.arbitration_id = in.arbitration_id;
  p.server = in.server;
  p.range = r;
  p.witness_digest = slice_digest(r, in.aggregate);
  p.binding_tag = binding_tag(verification_key(proving_key), p, ok);
  return p;
}

bool CommitmentProofBackend::verify(const ProofFile& proof, const Digest& expected_witness,
                                    const Digest& verification_key) const {
  return proof.witness_digest == expected_witness &&
         proof.binding_tag == binding_tag(verification_key, proof, true);
}

const ProofBackend& default_proof_backend() {
  static const CommitmentProofBackend backend;
  return backend;
}

nlohmann::json to_json(const ArbitrationVerdict& v) {
  nlohmann::json pass = nlohmann::json::object();
  for (const auto& [id, ok] : v.pass) pass[std::to_string(to_index(id))] = ok;
  std::vector<std::uint32_t> flagged;
  for (ServerId id : v.flagged) flagged.push_back(to_index(id));
  return {{"arbitration_id", v.arbitration_id}, {"pass", pass}, {"flagged", flagged}};
}

ArbitrationVerdict arbitrate(std::span<const double> client_global, const SliceAssignment& assignment,
                             std::span<const ProofFile> proofs, const Digest& verification_key,
                             const ProofBackend& backend) {
  ArbitrationVerdict v;
  v.arbitration_id = assignment.arbitration_id;
  for (const auto& [server, range] : assignment.slices) {
    const Digest expected = slice_digest(range, client_global);
    const auto it = std::find_if(proofs.begin(), proofs.end(), [&](const ProofFile& p) {
      return p.server == server && p.range == range && p.arbitration_id == assignment.arbitration_id;
    });
    const bool ok = it != proofs.end() && backend.verify(*it, expected, verification_key);
    auto [slot, fresh] = v.pass.emplace(server, ok);
    if (!fresh) slot->second = slot->second && ok;
    if (!ok) v.flagged.insert(server);
  }
  return v;
}

}  // namespace lifechain
