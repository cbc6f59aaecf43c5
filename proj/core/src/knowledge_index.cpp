#include "lifechain/knowledge_index.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <boost/random/normal_distribution.hpp>

namespace lifechain {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

void check_dim(std::size_t expected, std::size_t got) {
  if (expected != got) {
    throw InvalidInput("dimension mismatch: expected " + std::to_string(expected) + ", got " +
                       std::to_string(got));
  }
}

bool all_zero(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; });
}

}  // namespace

int hash_sign(std::span<const double> plane, std::span<const double> values) {
  check_dim(plane.size(), values.size());
  return dot(plane, values) > 0.0 ? 1 : 0;
}

double cosine(std::span<const double> a, std::span<const double> b) {
  check_dim(a.size(), b.size());
  const double na = norm(a);
  const double nb = norm(b);
  if (na == 0.0 || nb == 0.0) throw InvalidInput("cosine of a zero vector");
  return dot(a, b) / (na * nb);
}

HyperplaneSet::HyperplaneSet(const IndexParams& params, std::size_t dim)
    : params_(params), dim_(dim) {
  if (dim == 0) throw InvalidInput("hyperplane dimension must be positive");
  if (params.phi == 0 || params.phi > 64) throw InvalidInput("phi must be in [1, 64]");
  if (params.pi == 0) throw InvalidInput("pi must be positive");
  if (params.m == 0) throw InvalidInput("m must be positive");

  std::mt19937_64 rng(derive_seed(params.seed, 0x6879706572ULL));
  boost::random::normal_distribution<double> normal(0.0, 1.0);
  planes_.resize(std::size_t{params.pi} * params.phi * dim);
  for (double& x : planes_) x = normal(rng);

  group_salt_.resize(params.pi);
  for (std::uint32_t g = 0; g < params.pi; ++g) {
    group_salt_[g] = derive_seed(params.seed, 0x73616c74ULL, g);
  }
}

std::span<const double> HyperplaneSet::plane(std::uint32_t group, std::uint32_t index) const {
  const std::size_t offset = (std::size_t{group} * params_.phi + index) * dim_;
  return {planes_.data() + offset, dim_};
}

std::uint64_t HyperplaneSet::signature(std::uint32_t group, std::span<const double> values) const {
  check_dim(dim_, values.size());
  std::uint64_t sig = 0;
  for (std::uint32_t j = 0; j < params_.phi; ++j) {
    if (dot(plane(group, j), values) > 0.0) sig |= std::uint64_t{1} << j;
  }
  return sig;
}

std::uint32_t HyperplaneSet::bucket(std::uint32_t group, std::uint64_t signature) const {
  return static_cast<std::uint32_t>(mix64(signature ^ group_salt_[group]) % params_.m);
}

Krv compute_krv(const HyperplaneSet& hp, std::span<const double> values) {
  Krv out(hp.params().pi);
  for (std::uint32_t g = 0; g < hp.params().pi; ++g) out[g] = hp.bucket(g, hp.signature(g, values));
  return out;
}

RetrievalTable::RetrievalTable(const IndexParams& params, std::size_t dim)
    : hp_(params, dim), tables_(params.pi) {}

RecordId RetrievalTable::insert(KnowledgeVector k) {
  check_dim(hp_.dim(), k.values.size());
  if (all_zero(k.values)) throw InvalidInput("zero knowledge vector rejected");
  for (double x : k.values) {
    if (!std::isfinite(x)) throw InvalidInput("non-finite knowledge vector rejected");
  }
  const RecordId id = records_.size();
  Krv krv = compute_krv(hp_, k.values);
  for (std::uint32_t g = 0; g < krv.size(); ++g) tables_[g][krv[g]].push_back(id);
  const double n = norm(k.values);
  records_.push_back(Entry{std::move(k), std::move(krv), n});
  return id;
}

const KnowledgeVector& RetrievalTable::record(RecordId id) const { return records_.at(id).k; }

const Krv& RetrievalTable::krv(RecordId id) const { return records_.at(id).krv; }

std::vector<RecordId> RetrievalTable::candidates(std::span<const double> probe) const {
  const Krv krv = compute_krv(hp_, probe);
  std::vector<RecordId> ids;
  for (std::uint32_t g = 0; g < krv.size(); ++g) {
    const auto it = tables_[g].find(krv[g]);
    if (it != tables_[g].end()) ids.insert(ids.end(), it->second.begin(), it->second.end());
  }
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return ids;
}

std::vector<Match> RetrievalTable::rank(std::span<const double> probe,
                                        std::span<const RecordId> ids, std::size_t n_k,
                                        bool ascending) const {
  const double pn = norm(probe);
  std::vector<Match> scored;
  scored.reserve(ids.size());
  for (RecordId id : ids) {
    const Entry& e = records_[id];
    scored.push_back({id, dot(probe, e.k.values) / (pn * e.norm)});
  }
  auto better = [ascending](const Match& a, const Match& b) {
    if (a.similarity != b.similarity) {
      return ascending ? a.similarity < b.similarity : a.similarity > b.similarity;
    }
    return a.id < b.id;
  };
  const std::size_t keep = std::min(n_k, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(keep),
                    scored.end(), better);
  scored.resize(keep);
  return scored;
}

std::vector<Match> RetrievalTable::query(std::span<const double> probe, std::size_t n_k,
                                         QueryStats* stats) const {
  if (n_k == 0) throw InvalidInput("n_k must be at least 1");
  check_dim(hp_.dim(), probe.size());
  if (all_zero(probe)) throw InvalidInput("zero probe vector");
  if (records_.empty()) return {};
  const auto ids = candidates(probe);
  if (stats != nullptr) {
    ++stats->queries;
    stats->comparisons += ids.size();
  }
  return rank(probe, ids, n_k, false);
}

std::vector<Match> RetrievalTable::query_dissimilar(std::span<const double> probe,
                                                    std::size_t n_k) const {
  if (n_k == 0) throw InvalidInput("n_k must be at least 1");
  check_dim(hp_.dim(), probe.size());
  if (all_zero(probe)) throw InvalidInput("zero probe vector");
  if (records_.empty()) return {};

  const Krv krv = compute_krv(hp_, probe);
  std::vector<RecordId> pool;
  for (RecordId id = 0; id < records_.size(); ++id) {
    const Krv& other = records_[id].krv;
    bool shared = false;
    for (std::size_t g = 0; g < krv.size() && !shared; ++g) shared = other[g] == krv[g];
    if (!shared) pool.push_back(id);
  }

  // Expected size of one bucket summed over all groups.
  const auto& p = hp_.params();
  const std::size_t expected =
      (std::size_t{p.pi} * records_.size() + p.m - 1) / static_cast<std::size_t>(p.m);
  const std::size_t cap = std::max(n_k, expected);
  if (pool.size() > cap) {
    std::uint64_t probe_key = 0;
    for (std::uint32_t b : krv) probe_key = mix64(probe_key ^ b);
    const std::uint64_t salt = derive_seed(p.seed, 0x646973ULL, probe_key);
    std::sort(pool.begin(), pool.end(), [salt](RecordId a, RecordId b) {
      const auto ka = mix64(a ^ salt);
      const auto kb = mix64(b ^ salt);
      return ka != kb ? ka < kb : a < b;
    });
    pool.resize(cap);
    std::sort(pool.begin(), pool.end());
  }
  return rank(probe, pool, n_k, true);
}

std::vector<Match> RetrievalTable::query_linear(std::span<const double> probe,
                                                std::size_t n_k) const {
  if (n_k == 0) throw InvalidInput("n_k must be at least 1");
  check_dim(hp_.dim(), probe.size());
  if (all_zero(probe)) throw InvalidInput("zero probe vector");
  std::vector<RecordId> ids(records_.size());
  std::iota(ids.begin(), ids.end(), RecordId{0});
  return rank(probe, ids, n_k, false);
}

nlohmann::json RetrievalTable::snapshot() const {
  const auto& p = hp_.params();
  nlohmann::json records = nlohmann::json::array();
  for (RecordId id = 0; id < records_.size(); ++id) {
    const Entry& e = records_[id];
    records.push_back({{"id", id},
                       {"owner", to_index(e.k.owner)},
                       {"task", e.k.tr.task},
                       {"round", e.k.tr.round},
                       {"buckets", e.krv}});
  }
  return {{"seed", p.seed}, {"phi", p.phi}, {"pi", p.pi}, {"m", p.m}, {"records", records}};
}

RetrievalTable RetrievalTable::restore(const nlohmann::json& snapshot, std::size_t dim,
                                       const std::function<Vector(RecordId)>& payload) {
  try {
    IndexParams p;
    p.seed = snapshot.at("seed").get<std::uint64_t>();
    p.phi = snapshot.at("phi").get<std::uint32_t>();
    p.pi = snapshot.at("pi").get<std::uint32_t>();
    p.m = snapshot.at("m").get<std::uint32_t>();
    RetrievalTable table(p, dim);
    for (const auto& r : snapshot.at("records")) {
      const auto id = r.at("id").get<RecordId>();
      if (id != table.size()) throw InvalidInput("snapshot record ids are not dense");
      KnowledgeVector k{ClientId{r.at("owner").get<std::uint32_t>()},
                        TaskRound{r.at("task").get<std::uint32_t>(),
                                  r.at("round").get<std::uint32_t>()},
                        payload(id)};
      table.insert(std::move(k));
      if (table.krv(id) != r.at("buckets").get<Krv>()) {
        throw InvalidInput("snapshot buckets disagree for record " + std::to_string(id));
      }
    }
    return table;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("malformed index snapshot: ") + e.what());
  }
}

}  // namespace lifechain
