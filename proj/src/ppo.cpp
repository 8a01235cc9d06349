#include "cmva/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include "json.hpp"

namespace cmva {

using nlohmann::json;

void PpoConfig::validate() const {
  if (batch_episodes < 1) throw OutOfRange("batch_episodes must be >= 1");
  if (opt_epochs < 1) throw OutOfRange("opt_epochs must be >= 1");
  if (!(lr > 0.0)) throw OutOfRange("lr must be positive");
  if (!(clip_epsilon > 0.0 && clip_epsilon < 1.0)) {
    throw OutOfRange("clip_epsilon must be in (0,1)");
  }
  if (kl_coeff < 0.0) throw OutOfRange("kl_coeff must be non-negative");
}

PpoConfig PpoConfig::preset(const std::string& name) {
  PpoConfig c;
  if (name == "desk") return c;
  if (name == "paper-12b") {
    c.batch_episodes = 256;
    c.lr = 2e-9;
    return c;
  }
  throw UnknownValue("no PPO preset named '" + name + "'");
}

std::uint64_t policy_hash(const Policy& policy) {
  return detail::fnv1a64(policy.serialize(), 0);
}

std::vector<Rollout> collect_rollouts(const Policy& policy,
                                      std::span<const TokenSequence> prompts,
                                      const TextRewardFn& reward_fn,
                                      int batch_episodes, std::uint64_t seed) {
  if (prompts.empty()) throw EmptyPromptSet("no prompts to sample from");
  if (batch_episodes < 1) throw EmptyBatch("batch_episodes must be positive");
  std::vector<Rollout> batch;
  batch.reserve(static_cast<std::size_t>(batch_episodes));
  for (int e = 0; e < batch_episodes; ++e) {
    const auto& prompt = prompts[static_cast<std::size_t>(e) % prompts.size()];
    Rollout r = sample_response(
        policy, prompt, rng::derive_seed(seed, static_cast<std::uint64_t>(e)));
    r.reward = reward_fn(decode_tokens(r.response, policy.vocab));
    batch.push_back(std::move(r));
  }
  return batch;
}

std::vector<Rollout> collect_rollouts(const Policy& policy,
                                      std::span<const TokenSequence> prompts,
                                      const RewardModel& reward_model,
                                      int batch_episodes, std::uint64_t seed) {
  return collect_rollouts(
      policy, prompts,
      [&](const std::string& text) { return reward(reward_model, text); },
      batch_episodes, seed);
}

namespace {

// Contexts visited by one rollout, in step order, paired with the action
// taken there. Forced stops appear in logprobs but not here.
struct StepVisit {
  std::size_t row;
  int action;
};

std::vector<StepVisit> visited_steps(const Policy& policy, const Rollout& r) {
  std::vector<StepVisit> steps;
  std::vector<int32_t> window(static_cast<std::size_t>(policy.context_order),
                              policy.bos());
  auto push = [&](int32_t t) {
    std::copy(window.begin() + 1, window.end(), window.begin());
    window.back() = t;
  };
  for (int32_t t : r.prompt) push(t);
  for (int32_t t : r.response) {
    steps.push_back({context_index(policy, window), static_cast<int>(t)});
    push(t);
  }
  if (static_cast<int>(r.response.size()) < policy.max_length) {
    steps.push_back({context_index(policy, window), policy.eos_action()});
  }
  return steps;
}

}  // namespace

double surrogate_objective(const Policy& policy, const Policy& ref,
                           std::span<const Rollout> batch,
                           const PpoConfig& config,
                           std::vector<double>* grad) {
  if (batch.empty()) throw EmptyBatch("surrogate needs rollouts");
  if (policy.context_order != ref.context_order || policy.vocab != ref.vocab) {
    throw DimensionMismatch("policy and reference differ in shape");
  }
  const int w = policy.row_width();
  const std::size_t n = batch.size();
  if (grad) grad->assign(policy.logits.size(), 0.0);

  double mean_reward = 0.0;
  for (const auto& r : batch) mean_reward += r.reward;
  mean_reward /= static_cast<double>(n);

  // row -> visit count across the batch, for the KL anchor.
  std::map<std::size_t, std::size_t> visits;
  std::size_t total_steps = 0;

  double clip_term = 0.0;
  std::vector<double> probs;
  for (const auto& r : batch) {
    const double adv = r.reward - mean_reward;
    double lp_old = 0.0;
    for (double lp : r.logprobs) lp_old += lp;
    const double lp_new = sequence_logprob(policy, r.prompt, r.response);
    const double rho = std::exp(lp_new - lp_old);
    const double unclipped = rho * adv;
    const double clipped =
        std::clamp(rho, 1.0 - config.clip_epsilon, 1.0 + config.clip_epsilon) *
        adv;
    clip_term += std::min(unclipped, clipped);

    const auto steps = visited_steps(policy, r);
    total_steps += steps.size();
    for (const auto& s : steps) ++visits[s.row];

    if (grad && unclipped <= clipped && adv != 0.0) {
      // d min / d lp_new = adv * rho;  d lp_new / d z[row][a] sums
      // (1[a == a_t] - p(a|row)) over the rollout's steps at that row.
      const double coeff = adv * rho / static_cast<double>(n);
      for (const auto& s : steps) {
        probs = action_probs(policy, s.row);
        double* g = grad->data() + s.row * static_cast<std::size_t>(w);
        for (int a = 0; a < w; ++a) {
          g[a] += coeff * ((a == s.action ? 1.0 : 0.0) -
                           probs[static_cast<std::size_t>(a)]);
        }
      }
    }
  }

  double kl_pen = 0.0;
  for (const auto& [row, count] : visits) {
    const double weight =
        static_cast<double>(count) / static_cast<double>(total_steps);
    const double kl_row = kl_divergence_row(policy, ref, row);
    kl_pen += weight * kl_row;
    if (grad && config.kl_coeff != 0.0) {
      const auto p = action_probs(policy, row);
      const auto lp = action_log_probs(policy, row);
      const auto lq = action_log_probs(ref, row);
      double* g = grad->data() + row * static_cast<std::size_t>(w);
      for (int a = 0; a < w; ++a) {
        const auto ai = static_cast<std::size_t>(a);
        g[a] -= config.kl_coeff * weight * p[ai] * ((lp[ai] - lq[ai]) - kl_row);
      }
    }
  }

  return clip_term / static_cast<double>(n) - config.kl_coeff * kl_pen;
}

UpdateStats ppo_update(MoralAgent& agent, std::span<const Rollout> batch,
                       const PpoConfig& config) {
  config.validate();
  if (!agent.has_reference()) {
    throw MissingModel("agent has no reference policy attached");
  }
  Policy& policy = agent.policy;
  const Policy& ref = agent.reference;
  std::vector<double> grad;
  for (int epoch = 0; epoch < config.opt_epochs; ++epoch) {
    const double obj = surrogate_objective(policy, ref, batch, config, &grad);
    if (!std::isfinite(obj)) {
      throw NonFiniteLoss("epoch " + std::to_string(epoch));
    }
    double norm_sq = 0.0;
    for (double g : grad) norm_sq += g * g;
    const double norm = std::sqrt(norm_sq);
    const double scale =
        norm > config.max_grad_norm ? config.max_grad_norm / norm : 1.0;
    for (std::size_t i = 0; i < grad.size(); ++i) {
      policy.logits[i] += config.lr * scale * grad[i];
    }
  }

  UpdateStats stats;
  for (const auto& r : batch) stats.mean_reward += r.reward;
  stats.mean_reward /= static_cast<double>(batch.size());
  stats.loss = -surrogate_objective(policy, ref, batch, config, nullptr);
  if (!std::isfinite(stats.loss)) throw NonFiniteLoss("post-update loss");

  std::map<std::size_t, std::size_t> visits;
  std::size_t total_steps = 0;
  for (const auto& r : batch) {
    for (const auto& s : visited_steps(policy, r)) {
      ++visits[s.row];
      ++total_steps;
    }
  }
  for (const auto& [row, count] : visits) {
    stats.kl_to_ref += static_cast<double>(count) /
                       static_cast<double>(total_steps) *
                       kl_divergence_row(policy, ref, row);
  }
  return stats;
}

AgentTrainResult train_moral_agent(const MoralValue& value, const Policy& init,
                                   std::span<const TokenSequence> prompts,
                                   const TextRewardFn& reward_fn,
                                   const PpoConfig& config) {
  config.validate();
  if (config.iterations < 1) throw OutOfRange("iterations must be >= 1");
  AgentTrainResult result;
  result.agent.value = value;
  result.agent.policy = init;
  result.agent.reference = init;
  result.agent.reference_hash = policy_hash(init);
  result.history.reserve(static_cast<std::size_t>(config.iterations));
  for (int it = 0; it < config.iterations; ++it) {
    const auto batch = collect_rollouts(
        result.agent.policy, prompts, reward_fn, config.batch_episodes,
        rng::derive_seed(config.seed, static_cast<std::uint64_t>(it)));
    result.history.push_back(ppo_update(result.agent, batch, config));
  }
  // Paired evaluation against the starting policy, shared seed stream.
  const std::uint64_t eval_seed = rng::derive_seed(config.seed, 0x00e7a1ULL);
  const double before =
      estimate_expected_reward(init, prompts, reward_fn, 8, eval_seed);
  const double after = estimate_expected_reward(result.agent.policy, prompts,
                                                reward_fn, 8, eval_seed);
  result.no_improvement = !(after > before);
  return result;
}

AgentTrainResult train_moral_agent(const Policy& init,
                                   const RewardModel& reward_model,
                                   std::span<const TokenSequence> prompts,
                                   const PpoConfig& config) {
  return train_moral_agent(
      reward_model.value, init, prompts,
      [&](const std::string& text) { return reward(reward_model, text); },
      config);
}

double evaluate_alignment_probability(
    const Policy& policy, std::span<const TokenSequence> eval_prompts,
    const RewardModel& reward_model, int samples_per_prompt,
    std::uint64_t seed, std::span<const TokenSequence> train_prompts) {
  for (const auto& p : eval_prompts) {
    if (std::find(train_prompts.begin(), train_prompts.end(), p) !=
        train_prompts.end()) {
      throw OutOfRange("eval prompt also appears in the training prompts");
    }
  }
  return estimate_expected_reward(
      policy, eval_prompts,
      [&](const std::string& text) { return reward(reward_model, text); },
      samples_per_prompt, seed);
}

std::string MoralAgent::serialize() const {
  json j = json::parse(policy.serialize());
  j["value"] = {{"id", value.id}, {"name", value.name}};
  j["reference_hash"] = reference_hash;
  return j.dump();
}

MoralAgent MoralAgent::deserialize(const std::string& json_text) {
  json j = json::parse(json_text);
  MoralAgent agent;
  agent.policy = Policy::deserialize(json_text);
  agent.value = {j.at("value").at("id").get<int>(),
                 j.at("value").at("name").get<std::string>()};
  agent.reference_hash = j.at("reference_hash").get<std::uint64_t>();
  return agent;
}

void MoralAgent::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw FileNotFound("cannot write " + path);
  out << serialize() << '\n';
}

MoralAgent MoralAgent::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FileNotFound(path);
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return deserialize(text);
}

}  // namespace cmva
