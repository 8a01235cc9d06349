#include "cmva/reward.hpp"

#include <cctype>
#include <cmath>
#include <fstream>

#include "json.hpp"

namespace cmva {

using nlohmann::json;

namespace detail {

std::uint64_t fnv1a64(std::string_view s, std::uint64_t seed) {
  std::uint64_t h = 0xcbf29ce484222325ULL ^ seed;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

double sigmoid(double z) {
  if (z >= 0.0) {
    return 1.0 / (1.0 + std::exp(-z));
  }
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace detail

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (unsigned char c : text) {
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

FeatureVector extract_features(const std::string& text, int feature_dim,
                               std::uint64_t hash_seed) {
  FeatureVector f;
  f.values.assign(static_cast<std::size_t>(feature_dim), 0.0);
  for (const auto& tok : tokenize(text)) {
    const std::uint64_t h = detail::fnv1a64(tok, hash_seed);
    f.values[h % static_cast<std::uint64_t>(feature_dim)] += 1.0;
  }
  return f;
}

double log_loss(const RewardModel& model,
                std::span<const FeatureVector> features,
                std::span<const MoralJudgment> labels, double l2,
                std::vector<double>* grad_weights, double* grad_bias) {
  const std::size_t m = features.size();
  const std::size_t dim = model.weights.size();
  if (grad_weights) grad_weights->assign(dim, 0.0);
  if (grad_bias) *grad_bias = 0.0;

  double loss = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    double z = model.bias;
    const auto& x = features[i].values;
    for (std::size_t d = 0; d < dim; ++d) z += model.weights[d] * x[d];
    const double y = labels[i].label;
    // log(1 + exp(-|z|)) form keeps the loss finite for large |z|.
    const double softplus =
        std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
    loss += softplus;
    if (grad_weights) {
      const double err = detail::sigmoid(z) - y;
      for (std::size_t d = 0; d < dim; ++d) (*grad_weights)[d] += err * x[d];
      *grad_bias += err;
    }
  }
  loss /= static_cast<double>(m);
  double reg = 0.0;
  for (double w : model.weights) reg += w * w;
  loss += 0.5 * l2 * reg;
  if (grad_weights) {
    for (std::size_t d = 0; d < dim; ++d) {
      (*grad_weights)[d] =
          (*grad_weights)[d] / static_cast<double>(m) + l2 * model.weights[d];
    }
    *grad_bias /= static_cast<double>(m);
  }
  return loss;
}

RewardModel train_classifier(const MoralDataset& data,
                             const TrainConfig& config,
                             std::vector<double>* loss_history) {
  if (data.records.empty()) {
    throw EmptyDataset("no records for value '" + data.value.name + "'");
  }
  bool has_pos = false, has_neg = false;
  for (const auto& r : data.records) {
    (r.judgment.label == 1 ? has_pos : has_neg) = true;
  }
  if (!has_pos || !has_neg) {
    throw SingleClassData("dataset for value '" + data.value.name +
                          "' contains a single class");
  }

  RewardModel model;
  model.value = data.value;
  model.weights.assign(static_cast<std::size_t>(model.feature_dim), 0.0);

  std::vector<FeatureVector> features;
  std::vector<MoralJudgment> labels;
  features.reserve(data.records.size());
  labels.reserve(data.records.size());
  for (const auto& r : data.records) {
    features.push_back(
        extract_features(r.text, model.feature_dim, model.hash_seed));
    labels.push_back(r.judgment);
  }

  std::vector<double> grad;
  double grad_bias = 0.0;
  if (loss_history) loss_history->clear();
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const double loss =
        log_loss(model, features, labels, config.l2, &grad, &grad_bias);
    if (!std::isfinite(loss)) {
      throw NonFiniteLoss("epoch " + std::to_string(epoch));
    }
    if (loss_history) loss_history->push_back(loss);
    for (std::size_t d = 0; d < model.weights.size(); ++d) {
      model.weights[d] -= config.lr * grad[d];
    }
    model.bias -= config.lr * grad_bias;
  }
  return model;
}

double reward(const RewardModel& model, const std::string& response) {
  const FeatureVector f =
      extract_features(response, model.feature_dim, model.hash_seed);
  double z = model.bias;
  for (std::size_t d = 0; d < model.weights.size(); ++d) {
    z += model.weights[d] * f.values[d];
  }
  return detail::sigmoid(z);
}

RewardVector reward_vector(std::span<const RewardModel> models,
                           const std::string& response,
                           const ValueRegistry& registry) {
  if (models.size() != registry.size()) {
    throw DimensionMismatch(std::to_string(models.size()) +
                            " models for a registry of " +
                            std::to_string(registry.size()));
  }
  RewardVector rv;
  rv.scores.reserve(models.size());
  for (std::size_t i = 0; i < models.size(); ++i) {
    if (models[i].value.id != static_cast<int>(i)) {
      throw DimensionMismatch("model " + std::to_string(i) +
                              " is for value id " +
                              std::to_string(models[i].value.id));
    }
    rv.scores.push_back(reward(models[i], response));
  }
  return rv;
}

std::string RewardModel::serialize() const {
  json j;
  j["value"] = {{"id", value.id}, {"name", value.name}};
  j["feature_dim"] = feature_dim;
  j["weights"] = weights;
  j["bias"] = bias;
  j["tokenizer_version"] = kTokenizerVersion;
  j["hash_seed"] = hash_seed;
  return j.dump();
}

RewardModel RewardModel::deserialize(const std::string& json_text) {
  json j = json::parse(json_text);
  RewardModel m;
  m.value = {j.at("value").at("id").get<int>(),
             j.at("value").at("name").get<std::string>()};
  m.feature_dim = j.at("feature_dim").get<int>();
  m.hash_seed = j.at("hash_seed").get<std::uint64_t>();
  m.weights = j.at("weights").get<std::vector<double>>();
  m.bias = j.at("bias").get<double>();
  const auto tok = j.at("tokenizer_version").get<std::string>();
  if (tok != kTokenizerVersion) {
    throw VocabMismatch("unsupported tokenizer_version '" + tok + "'");
  }
  if (m.weights.size() != static_cast<std::size_t>(m.feature_dim)) {
    throw DimensionMismatch("weights length does not match feature_dim");
  }
  return m;
}

void RewardModel::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw FileNotFound("cannot write " + path);
  out << serialize() << '\n';
}

RewardModel RewardModel::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FileNotFound(path);
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return deserialize(text);
}

}  // namespace cmva
