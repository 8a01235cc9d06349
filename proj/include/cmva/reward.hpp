#pragma once
// Per-value reward models: logistic regression over hashed token counts.
// A trained model scores a response with the probability of the good class,
// always in [0, 1]. Trained models are immutable and safe to share.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cmva/dataset.hpp"
#include "cmva/types.hpp"

namespace cmva {

inline constexpr int kDefaultFeatureDim = 4096;
inline constexpr std::uint64_t kDefaultHashSeed = 0x5eed5eedULL;
inline constexpr const char* kTokenizerVersion = "lower-alnum-v1";

// Hashed bag-of-words counts, fixed dimension F, nonnegative entries.
struct FeatureVector {
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
};

struct RewardModel {
  MoralValue value;
  int feature_dim = kDefaultFeatureDim;
  std::uint64_t hash_seed = kDefaultHashSeed;
  std::vector<double> weights;  // length feature_dim
  double bias = 0.0;

  std::string serialize() const;
  static RewardModel deserialize(const std::string& json_text);
  void save(const std::string& path) const;
  static RewardModel load(const std::string& path);
};

struct TrainConfig {
  double lr = 0.5;
  int epochs = 200;
  double l2 = 1e-4;
  std::uint64_t seed = 42;  // recorded in checkpoints; training is full-batch
};

// Lowercases, splits on non-alphanumeric boundaries.
std::vector<std::string> tokenize(const std::string& text);

// Token counts hashed into feature_dim buckets (fnv1a-64 seeded by
// hash_seed). Collisions simply share a bucket; the hash is seed-fixed so
// feature extraction is reproducible.
FeatureVector extract_features(const std::string& text,
                               int feature_dim = kDefaultFeatureDim,
                               std::uint64_t hash_seed = kDefaultHashSeed);

// Mean regularized log-loss of the model on a dataset, plus its gradient.
// Exposed so tests can check the analytic gradient against finite
// differences.
double log_loss(const RewardModel& model,
                std::span<const FeatureVector> features,
                std::span<const MoralJudgment> labels, double l2,
                std::vector<double>* grad_weights = nullptr,
                double* grad_bias = nullptr);

// Full-batch gradient descent on the regularized log-loss. Deterministic.
// Throws SingleClassData when only one class is present, NonFiniteLoss when
// the loss diverges.
RewardModel train_classifier(const MoralDataset& data,
                             const TrainConfig& config,
                             std::vector<double>* loss_history = nullptr);

// sigmoid(weights . features + bias): probability the response follows the
// model's moral value.
double reward(const RewardModel& model, const std::string& response);

// Component i is reward(models[i], response); models must be in value-id
// order, one per registry value.
RewardVector reward_vector(std::span<const RewardModel> models,
                           const std::string& response,
                           const ValueRegistry& registry);

namespace detail {

std::uint64_t fnv1a64(std::string_view s, std::uint64_t seed);
double sigmoid(double z);

}  // namespace detail

}  // namespace cmva
