#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "lifechain/common.hpp"

namespace lifechain {

/// One unit of knowledge produced by a client in a round.
struct KnowledgeVector {
  ClientId owner{};
  TaskRound tr{};
  Vector values;
};

/// Bucket ids of a knowledge vector, one per hyperplane group.
using Krv = std::vector<std::uint32_t>;

using RecordId = std::uint64_t;

struct IndexParams {
  std::uint64_t seed = 0;
  std::uint32_t phi = 16;  // hyperplanes per group
  std::uint32_t pi = 4;    // groups
  std::uint32_t m = 64;    // buckets per group
};

/// Random hyperplanes drawn from a standard normal per coordinate.
class HyperplaneSet {
 public:
  HyperplaneSet(const IndexParams& params, std::size_t dim);

  const IndexParams& params() const { return params_; }
  std::size_t dim() const { return dim_; }
  std::span<const double> plane(std::uint32_t group, std::uint32_t index) const;

  /// Phi sign bits of one group packed little-end first.
  std::uint64_t signature(std::uint32_t group, std::span<const double> values) const;
  std::uint32_t bucket(std::uint32_t group, std::uint64_t signature) const;

 private:
  IndexParams params_;
  std::size_t dim_;
  std::vector<double> planes_;
  std::vector<std::uint64_t> group_salt_;
};

/// 1 when dot(plane, values) is strictly positive.
int hash_sign(std::span<const double> plane, std::span<const double> values);

Krv compute_krv(const HyperplaneSet& hp, std::span<const double> values);

double cosine(std::span<const double> a, std::span<const double> b);

struct Match {
  RecordId id = 0;
  double similarity = 0.0;

  bool operator==(const Match&) const = default;
};

struct QueryStats {
  std::size_t queries = 0;
  std::size_t comparisons = 0;  // exact cosine evaluations
};

/// Bucketed retrieval table over stored knowledge vectors.
class RetrievalTable {
 public:
  RetrievalTable(const IndexParams& params, std::size_t dim);

  RecordId insert(KnowledgeVector k);

  /// Top-n_k by cosine among records sharing at least one bucket with the probe.
  std::vector<Match> query(std::span<const double> probe, std::size_t n_k,
                           QueryStats* stats = nullptr) const;

  /// Bottom-n_k by cosine among a bounded sample of records sharing no bucket
  /// with the probe.
  std::vector<Match> query_dissimilar(std::span<const double> probe, std::size_t n_k) const;

  /// Reference full scan, used by benchmarks and diagnostics.
  std::vector<Match> query_linear(std::span<const double> probe, std::size_t n_k) const;

  /// Ids sharing a bucket with the probe in some group, ascending.
  std::vector<RecordId> candidates(std::span<const double> probe) const;

  std::size_t size() const { return records_.size(); }
  std::size_t dim() const { return hp_.dim(); }
  const HyperplaneSet& hyperplanes() const { return hp_; }
  const KnowledgeVector& record(RecordId id) const;
  const Krv& krv(RecordId id) const;
  const std::unordered_map<std::uint32_t, std::vector<RecordId>>& group(std::uint32_t g) const {
    return tables_.at(g);
  }

  /// {seed, phi, pi, m, records:[{id, owner, task, round, buckets}]}
  nlohmann::json snapshot() const;

  /// Rebuilds a table from a snapshot; vector payloads come from `payload`.
  /// Throws InvalidInput when a recomputed KRV disagrees with the snapshot.
  static RetrievalTable restore(const nlohmann::json& snapshot, std::size_t dim,
                                const std::function<Vector(RecordId)>& payload);

 private:
  struct Entry {
    KnowledgeVector k;
    Krv krv;
    double norm = 0.0;
  };

  std::vector<Match> rank(std::span<const double> probe, std::span<const RecordId> ids,
                          std::size_t n_k, bool ascending) const;

  HyperplaneSet hp_;
  std::vector<Entry> records_;
  std::vector<std::unordered_map<std::uint32_t, std::vector<RecordId>>> tables_;
};

}  // namespace lifechain
