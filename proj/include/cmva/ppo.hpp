#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cmva/policy.hpp"
#include "cmva/reward.hpp"
#include "cmva/types.hpp"

namespace cmva {

struct PpoConfig {
  int iterations = 200;
  int batch_episodes = 64;
  int opt_epochs = 4;
  double lr = 0.05;
  double clip_epsilon = 0.2;
  double kl_coeff = 0.02;
  double max_grad_norm = 1.0;
  std::uint64_t seed = 42;

  // Throws OutOfRange unless batch_episodes >= 1, opt_epochs >= 1, lr > 0,
  // clip_epsilon in (0,1), kl_coeff >= 0.
  void validate() const;

  // "desk" fits a single core; "paper-12b" names the large-scale recipe the
  // desk defaults were scaled down from (256-episode batches, lr 2e-9);
  // that step size is far too small to move a tabular policy.
  static PpoConfig preset(const std::string& name);
};

// A policy fine-tuned toward one moral value, anchored to its frozen
// initialization. Checkpoints store the policy plus the reference's hash,
// so a loaded agent has an empty `reference` until one is reattached.
struct MoralAgent {
  MoralValue value;
  Policy policy;
  Policy reference;
  std::uint64_t reference_hash = 0;

  bool has_reference() const { return !reference.logits.empty(); }

  std::string serialize() const;
  static MoralAgent deserialize(const std::string& json_text);
  void save(const std::string& path) const;
  static MoralAgent load(const std::string& path);
};

std::uint64_t policy_hash(const Policy& policy);

struct UpdateStats {
  double mean_reward = 0.0;
  double kl_to_ref = 0.0;
  double loss = 0.0;
};

// Samples `batch_episodes` rollouts, cycling prompts round-robin, and
// scores each decoded response with `reward_fn`. Episode e draws from a
// generator seeded with derive_seed(seed, e), so the batch is reproducible
// regardless of evaluation order.
std::vector<Rollout> collect_rollouts(const Policy& policy,
                                      std::span<const TokenSequence> prompts,
                                      const TextRewardFn& reward_fn,
                                      int batch_episodes, std::uint64_t seed);
std::vector<Rollout> collect_rollouts(const Policy& policy,
                                      std::span<const TokenSequence> prompts,
                                      const RewardModel& reward_model,
                                      int batch_episodes, std::uint64_t seed);

// Clipped-surrogate objective with a per-step KL anchor:
//   J = mean_i min(rho_i A_i, clip(rho_i, 1-eps, 1+eps) A_i)
//       - kl_coeff * mean_step KL(policy(.|ctx) || ref(.|ctx))
// where rho_i = exp(lp_new_i - lp_old_i) is the sequence-level likelihood
// ratio and A_i = reward_i - batch mean. The KL average runs over every
// sampled step (forced stops excluded: no action was chosen there). If
// `grad` is non-null it receives dJ/dlogits in policy.logits layout.
double surrogate_objective(const Policy& policy, const Policy& ref,
                           std::span<const Rollout> batch,
                           const PpoConfig& config, std::vector<double>* grad);

// Runs config.opt_epochs ascent steps on agent.policy (global-norm-clipped
// at config.max_grad_norm) against one rollout batch. Stats are evaluated
// at the post-update policy; loss = -J. Throws EmptyBatch, NonFiniteLoss.
UpdateStats ppo_update(MoralAgent& agent, std::span<const Rollout> batch,
                       const PpoConfig& config);

struct AgentTrainResult {
  MoralAgent agent;
  std::vector<UpdateStats> history;  // one entry per iteration
  // Set when the trained policy's expected reward on the training prompts
  // failed to strictly exceed the initial policy's.
  bool no_improvement = false;
};

// Iterates collect_rollouts + ppo_update for config.iterations rounds
// (which must be >= 1), seeding iteration i with derive_seed(config.seed,
// i). The agent's value is taken from the reward model.
AgentTrainResult train_moral_agent(const Policy& init,
                                   const RewardModel& reward_model,
                                   std::span<const TokenSequence> prompts,
                                   const PpoConfig& config);
AgentTrainResult train_moral_agent(const MoralValue& value, const Policy& init,
                                   std::span<const TokenSequence> prompts,
                                   const TextRewardFn& reward_fn,
                                   const PpoConfig& config);

// Expected reward of the policy on held-out prompts: the probability that
// answers conform to the reward model's value. When `train_prompts` is
// provided, eval prompts appearing in it are rejected (OutOfRange).
double evaluate_alignment_probability(
    const Policy& policy, std::span<const TokenSequence> eval_prompts,
    const RewardModel& reward_model, int samples_per_prompt,
    std::uint64_t seed, std::span<const TokenSequence> train_prompts = {});

}  // namespace cmva
