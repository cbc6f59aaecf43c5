#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "lifechain/common.hpp"

namespace lifechain {

/// One task: a set of class labels, each a Gaussian blob.
struct TaskSpec {
  std::uint32_t task = 0;
  std::vector<std::uint32_t> labels;
  std::vector<Vector> means;  // one per label
  double stddev = 1.0;
  std::size_t samples_per_class = 20;
};

struct TaskPlan {
  std::size_t classes = 0;
  std::size_t features = 0;
  std::vector<Vector> class_means;
  std::vector<std::vector<TaskSpec>> sequences;  // [client][task]

  std::size_t dim() const { return features * classes + classes; }
};

struct TaskPlanParams {
  std::uint64_t seed = 0;
  std::size_t clients = 20;
  std::size_t tasks = 10;
  std::size_t classes_per_task = 4;
  std::size_t features = 8;
  std::size_t classes = 8;
  double separation = 2.0;  // stddev of class means
  double stddev = 1.0;      // within-class spread
  std::size_t samples_per_class = 20;
};

/// Per-client task sequences; at every position all clients hold distinct
/// label sets. Throws InvalidInput when that is infeasible.
TaskPlan gen_tasks(const TaskPlanParams& p);

struct Dataset {
  std::size_t features = 0;
  std::vector<double> x;  // row-major, rows() x features
  std::vector<std::uint32_t> y;

  std::size_t rows() const { return y.size(); }
  std::span<const double> row(std::size_t i) const { return {x.data() + i * features, features}; }
  void append(const Dataset& other);
};

Dataset sample_task(const TaskSpec& spec, std::size_t samples_per_class, std::mt19937_64& rng);

/// Linear softmax classifier over `classes` outputs; weights are a flattened
/// features x classes matrix followed by `classes` biases.
struct ModelShape {
  std::size_t features = 0;
  std::size_t classes = 0;
  std::size_t dim() const { return features * classes + classes; }
};

enum class KnowledgeKind : std::uint8_t { Parameters, GradientDelta };

struct TrainParams {
  std::size_t epochs = 5;
  double lr = 0.5;
  double l2 = 0.0;  // weight decay on the matrix part
  KnowledgeKind knowledge = KnowledgeKind::Parameters;
};

struct TrainResult {
  Vector weights;
  Vector knowledge;
  double final_loss = 0.0;
};

/// Full-batch gradient descent on softmax cross-entropy.
TrainResult train_local(const ModelShape& shape, std::span<const double> weights,
                        const Dataset& data, const TrainParams& params);

double cross_entropy(const ModelShape& shape, std::span<const double> weights, const Dataset& data);
double accuracy(const ModelShape& shape, std::span<const double> weights, const Dataset& data);

struct FusionPolicy {
  double lambda = 0.3;
  std::size_t n_k = 10;
};

/// (1 - lambda) W_g + lambda mean(retrieved); W_g when nothing was retrieved.
Vector fuse(std::span<const double> global, std::span<const Vector> retrieved, double lambda);

struct ForgettingParams {
  double delta = 0.01;
  double eps_conf = 0.6;
};

struct ForgettingScore {
  double score = 0.0;
  std::size_t anchors = 0;
};

/// Mean of (CE(cur) - CE(ref) - delta)_+ over anchors: examples the reference
/// model classifies correctly with confidence at least eps_conf.
ForgettingScore forgetting_score(const ModelShape& shape, std::span<const double> ref,
                                 std::span<const double> cur, const Dataset& data,
                                 const ForgettingParams& params = {});

/// Per-example form, for hand-checked cases.
double forgetting_term(double ce_ref, double ce_cur, double delta);

/// Anchor-size weighted mean of per-task scores.
double forgetting_aggregate(std::span<const ForgettingScore> per_task);

/// Relabels round(fraction * n) seeded examples to a different label of the task.
Dataset attack_label_flip(const Dataset& data, std::span<const std::uint32_t> task_labels,
                          double fraction, std::mt19937_64& rng);

Vector attack_model_scale(std::span<const double> global, double gamma);

}  // namespace lifechain
