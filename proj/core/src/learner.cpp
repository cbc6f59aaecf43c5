#include "lifechain/learner.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <Eigen/Dense>
#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_int_distribution.hpp>

namespace lifechain {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

std::size_t draw(std::mt19937_64& rng, std::size_t n) {
  boost::random::uniform_int_distribution<std::size_t> dist(0, n - 1);
  return dist(rng);
}

// Number of k-subsets of n, saturating at `cap`.
std::size_t choose_capped(std::size_t n, std::size_t k, std::size_t cap) {
  if (k > n) return 0;
  double acc = 1.0;
  for (std::size_t i = 0; i < k; ++i) {
    acc = acc * static_cast<double>(n - i) / static_cast<double>(i + 1);
    if (acc >= static_cast<double>(cap)) return cap;
  }
  return static_cast<std::size_t>(std::llround(acc));
}

std::vector<std::vector<std::uint32_t>> all_subsets(std::size_t n, std::size_t k) {
  std::vector<std::vector<std::uint32_t>> out;
  std::vector<std::uint32_t> cur(k);
  for (std::size_t i = 0; i < k; ++i) cur[i] = static_cast<std::uint32_t>(i);
  while (true) {
    out.push_back(cur);
    std::size_t i = k;
    while (i > 0 && cur[i - 1] == n - k + i - 1) --i;
    if (i == 0) break;
    ++cur[i - 1];
    for (std::size_t j = i; j < k; ++j) cur[j] = cur[j - 1] + 1;
  }
  return out;
}

void check_shape(const ModelShape& shape, std::size_t n_weights, const Dataset& data) {
  if (n_weights != shape.dim()) throw InvalidInput("weight vector does not match model shape");
  if (data.features != shape.features) throw InvalidInput("dataset feature count mismatch");
  for (auto label : data.y) {
    if (label >= shape.classes) throw InvalidInput("label outside model classes");
  }
}

// Row-wise softmax probabilities for the dataset.
RowMatrix probabilities(const ModelShape& shape, std::span<const double> w, const Dataset& data) {
  const auto n = static_cast<Eigen::Index>(data.rows());
  const auto f = static_cast<Eigen::Index>(shape.features);
  const auto k = static_cast<Eigen::Index>(shape.classes);
  Eigen::Map<const RowMatrix> X(data.x.data(), n, f);
  Eigen::Map<const RowMatrix> W(w.data(), f, k);
  Eigen::Map<const Eigen::RowVectorXd> b(w.data() + f * k, k);
  RowMatrix z = X * W;
  z.rowwise() += b;
  z.colwise() -= z.rowwise().maxCoeff();
  z = z.array().exp();
  z.array().colwise() /= z.rowwise().sum().array();
  return z;
}

double example_ce(const RowMatrix& p, std::size_t i, std::uint32_t y) {
  return -std::log(std::max(p(static_cast<Eigen::Index>(i), y), 1e-300));
}

}  // namespace

TaskPlan gen_tasks(const TaskPlanParams& p) {
  if (p.clients == 0 || p.tasks == 0) throw InvalidInput("need at least one client and task");
  if (p.classes_per_task == 0 || p.classes_per_task > p.classes) {
    throw InvalidInput("classes per task must be in [1, classes]");
  }
  if (p.features == 0) throw InvalidInput("feature dimension must be positive");
  const std::size_t cap = 100000;
  const std::size_t combos = choose_capped(p.classes, p.classes_per_task, cap);
  if (combos < p.clients) {
    throw InvalidInput("only " + std::to_string(combos) + " distinct tasks for " +
                       std::to_string(p.clients) + " clients");
  }

  std::mt19937_64 rng(derive_seed(p.seed, 0x7461736bULL));
  boost::random::normal_distribution<double> normal(0.0, 1.0);

  TaskPlan plan;
  plan.classes = p.classes;
  plan.features = p.features;
  plan.class_means.assign(p.classes, Vector(p.features));
  for (auto& m : plan.class_means) {
    for (double& x : m) x = p.separation * normal(rng);
  }

  const auto pool = combos < cap ? all_subsets(p.classes, p.classes_per_task)
                                 : std::vector<std::vector<std::uint32_t>>{};
  plan.sequences.assign(p.clients, std::vector<TaskSpec>(p.tasks));
  for (std::size_t t = 0; t < p.tasks; ++t) {
    std::vector<std::vector<std::uint32_t>> chosen;
    if (!pool.empty()) {
      std::vector<std::size_t> idx(pool.size());
      for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
      for (std::size_t i = 0; i < p.clients; ++i) {
        std::swap(idx[i], idx[i + draw(rng, idx.size() - i)]);
        chosen.push_back(pool[idx[i]]);
      }
    } else {
      std::set<std::vector<std::uint32_t>> seen;
      while (chosen.size() < p.clients) {
        std::set<std::uint32_t> labels;
        while (labels.size() < p.classes_per_task) {
          labels.insert(static_cast<std::uint32_t>(draw(rng, p.classes)));
        }
        std::vector<std::uint32_t> v(labels.begin(), labels.end());
        if (seen.insert(v).second) chosen.push_back(std::move(v));
      }
    }
    for (std::size_t i = 0; i < p.clients; ++i) {
      TaskSpec& spec = plan.sequences[i][t];
      spec.task = static_cast<std::uint32_t>(t);
      spec.labels = chosen[i];
      spec.stddev = p.stddev;
      spec.samples_per_class = p.samples_per_class;
      for (auto label : spec.labels) spec.means.push_back(plan.class_means[label]);
    }
  }
  return plan;
}

void Dataset::append(const Dataset& other) {
  if (rows() == 0 && x.empty()) features = other.features;
  if (other.features != features) throw InvalidInput("cannot append datasets of different width");
  x.insert(x.end(), other.x.begin(), other.x.end());
  y.insert(y.end(), other.y.begin(), other.y.end());
}

Dataset sample_task(const TaskSpec& spec, std::size_t samples_per_class, std::mt19937_64& rng) {
  if (spec.means.size() != spec.labels.size() || spec.means.empty()) {
    throw InvalidInput("task spec needs one mean per label");
  }
  boost::random::normal_distribution<double> normal(0.0, spec.stddev);
  Dataset d;
  d.features = spec.means.front().size();
  for (std::size_t c = 0; c < spec.labels.size(); ++c) {
    for (std::size_t s = 0; s < samples_per_class; ++s) {
      for (double mu : spec.means[c]) d.x.push_back(mu + normal(rng));
      d.y.push_back(spec.labels[c]);
    }
  }
  return d;
}

TrainResult train_local(const ModelShape& shape, std::span<const double> weights,
                        const Dataset& data, const TrainParams& params) {
  check_shape(shape, weights.size(), data);
  if (data.rows() == 0) throw InvalidInput("training data is empty");

  const auto n = static_cast<Eigen::Index>(data.rows());
  const auto f = static_cast<Eigen::Index>(shape.features);
  const auto k = static_cast<Eigen::Index>(shape.classes);
  Eigen::Map<const RowMatrix> X(data.x.data(), n, f);

  TrainResult out;
  out.weights.assign(weights.begin(), weights.end());
  Eigen::Map<RowMatrix> W(out.weights.data(), f, k);
  Eigen::Map<Eigen::RowVectorXd> b(out.weights.data() + f * k, k);

  for (std::size_t e = 0; e < params.epochs; ++e) {
    RowMatrix g = probabilities(shape, out.weights, data);
    for (Eigen::Index i = 0; i < n; ++i) g(i, data.y[static_cast<std::size_t>(i)]) -= 1.0;
    g /= static_cast<double>(n);
    const RowMatrix gW = X.transpose() * g;
    const Eigen::RowVectorXd gb = g.colwise().sum();
    W -= params.lr * (gW + params.l2 * W);
    b -= params.lr * gb;
  }
  out.final_loss = cross_entropy(shape, out.weights, data);
  if (!std::isfinite(out.final_loss)) {
    throw Error("non-finite training loss after " + std::to_string(params.epochs) +
                " epochs (lr=" + std::to_string(params.lr) + ")");
  }
  if (params.knowledge == KnowledgeKind::Parameters) {
    out.knowledge = out.weights;
  } else {
    out.knowledge.resize(out.weights.size());
    for (std::size_t j = 0; j < out.weights.size(); ++j) out.knowledge[j] = out.weights[j] - weights[j];
  }
  return out;
}

double cross_entropy(const ModelShape& shape, std::span<const double> weights, const Dataset& data) {
  check_shape(shape, weights.size(), data);
  if (data.rows() == 0) return 0.0;
  const RowMatrix p = probabilities(shape, weights, data);
  double acc = 0.0;
  for (std::size_t i = 0; i < data.rows(); ++i) acc += example_ce(p, i, data.y[i]);
  return acc / static_cast<double>(data.rows());
}

double accuracy(const ModelShape& shape, std::span<const double> weights, const Dataset& data) {
  check_shape(shape, weights.size(), data);
  if (data.rows() == 0) return 0.0;
  const RowMatrix p = probabilities(shape, weights, data);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < data.rows(); ++i) {
    Eigen::Index arg = 0;
    p.row(static_cast<Eigen::Index>(i)).maxCoeff(&arg);
    hits += static_cast<std::uint32_t>(arg) == data.y[i];
  }
  return static_cast<double>(hits) / static_cast<double>(data.rows());
}

Vector fuse(std::span<const double> global, std::span<const Vector> retrieved, double lambda) {
  if (lambda < 0.0 || lambda > 1.0) throw InvalidInput("lambda must be in [0, 1]");
  Vector out(global.begin(), global.end());
  if (retrieved.empty()) return out;
  Vector mean(global.size(), 0.0);
  for (const auto& k : retrieved) {
    if (k.size() != global.size()) throw InvalidInput("knowledge dimension mismatch");
    for (std::size_t j = 0; j < k.size(); ++j) mean[j] += k[j];
  }
  const double inv = 1.0 / static_cast<double>(retrieved.size());
  for (std::size_t j = 0; j < out.size(); ++j) {
    out[j] = (1.0 - lambda) * global[j] + lambda * (mean[j] * inv);
  }
  return out;
}

double forgetting_term(double ce_ref, double ce_cur, double delta) {
  return std::max(0.0, ce_cur - ce_ref - delta);
}

ForgettingScore forgetting_score(const ModelShape& shape, std::span<const double> ref,
                                 std::span<const double> cur, const Dataset& data,
                                 const ForgettingParams& params) {
  if (params.delta < 0.0) throw InvalidInput("delta must be non-negative");
  if (params.eps_conf <= 0.0 || params.eps_conf > 1.0) throw InvalidInput("eps_conf must be in (0, 1]");
  check_shape(shape, ref.size(), data);
  check_shape(shape, cur.size(), data);
  if (data.rows() == 0) return {};
  const RowMatrix p = probabilities(shape, ref, data);
  const RowMatrix q = probabilities(shape, cur, data);
  ForgettingScore out;
  double acc = 0.0;
  for (std::size_t i = 0; i < data.rows(); ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    Eigen::Index arg = 0;
    const double top = p.row(row).maxCoeff(&arg);
    if (static_cast<std::uint32_t>(arg) != data.y[i] || top < params.eps_conf) continue;
    ++out.anchors;
    acc += forgetting_term(example_ce(p, i, data.y[i]), example_ce(q, i, data.y[i]), params.delta);
  }
  out.score = out.anchors ? acc / static_cast<double>(out.anchors) : 0.0;
  return out;
}

double forgetting_aggregate(std::span<const ForgettingScore> per_task) {
  double num = 0.0;
  double den = 0.0;
  for (const auto& s : per_task) {
    num += static_cast<double>(s.anchors) * s.score;
    den += static_cast<double>(s.anchors);
  }
  return den > 0.0 ? num / den : 0.0;
}

Dataset attack_label_flip(const Dataset& data, std::span<const std::uint32_t> task_labels,
                          double fraction, std::mt19937_64& rng) {
  if (fraction < 0.0 || fraction > 1.0) throw InvalidInput("flip fraction must be in [0, 1]");
  Dataset out = data;
  const auto count = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(data.rows())));
  if (count == 0) return out;
  if (task_labels.size() < 2) throw InvalidInput("label flipping needs at least two task labels");

  std::vector<std::size_t> idx(data.rows());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  for (std::size_t i = 0; i < count; ++i) std::swap(idx[i], idx[i + draw(rng, idx.size() - i)]);

  for (std::size_t i = 0; i < count; ++i) {
    const std::uint32_t original = data.y[idx[i]];
    std::vector<std::uint32_t> others;
    for (auto l : task_labels) {
      if (l != original) others.push_back(l);
    }
    if (others.size() == task_labels.size()) throw InvalidInput("label not part of the task");
    out.y[idx[i]] = others[draw(rng, others.size())];
  }
  return out;
}

Vector attack_model_scale(std::span<const double> global, double gamma) {
  if (!std::isfinite(gamma)) throw InvalidInput("gamma must be finite");
  Vector out(global.begin(), global.end());
  for (double& x : out) x *= gamma;
  return out;
}

}  // namespace lifechain
