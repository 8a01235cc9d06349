#pragma once
// End-to-end training pipeline: per-value reward models, RL-fine-tuned moral
// agents, a generated aggregation corpus, a trained aggregator, and
// evaluation reports, all under one seeded run directory. Every artifact
// embeds the config hash, so a rerun can tell finished stages from stale
// ones; identical config and seed reproduce every file bit for bit.

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "cmva/aggregator.hpp"
#include "cmva/policy.hpp"
#include "cmva/ppo.hpp"
#include "cmva/reward.hpp"

namespace cmva {

struct PipelineConfig {
  std::string run_id;
  std::uint64_t seed = 42;
  // One labeled corpus per canonical value, in value-id order.
  std::vector<std::pair<std::string, std::string>> datasets;  // name, path
  std::vector<std::string> prompts;  // questions over the policy codebook
  double eval_fraction = 0.2;        // prompts held out for evaluation
  int samples_per_prompt = 8;        // evaluation sampling
  int profiles_per_question = 2;     // aggregation corpus density
  TrainConfig reward;
  PpoConfig ppo;
  AggregatorTrainConfig aggregator;  // vocab is filled from the codebook

  // Config file schema: {"run_id", "datasets": {name: path, ...}, "prompts"
  // or "prompts_file", "seed"?, "eval_fraction"?, "samples_per_prompt"?,
  // "profiles_per_question"?, "reward"?, "ppo"?, "aggregator"?}. ppo accepts
  // {"preset": name} plus field overrides.
  static PipelineConfig from_json(const std::string& json_text);
  static PipelineConfig load(const std::string& path);

  // Stable key-sorted rendering; its fnv1a-64 is the config hash stamped
  // into every manifest and report.
  std::string canonical_json() const;
  std::string config_hash() const;  // 16 hex digits
};

struct StageStatus {
  std::string name;
  bool skipped = false;  // finished artifacts with a matching hash
};

struct PipelineResult {
  std::string run_dir;
  std::vector<StageStatus> stages;
};

// $CMVA_HOME when set, else "runs" under the working directory.
std::string runs_root();

// Stages: rewards -> agents -> aggregation corpus -> aggregator -> reports.
// Failures rethrow as StageFailure tagged with the stage name; artifacts
// written before the failure stay on disk.
PipelineResult run_pipeline(const PipelineConfig& config);
PipelineResult run_pipeline_file(const std::string& config_path);

// Id-ordered artifacts from a pipeline run directory (one file per value).
std::vector<RewardModel> load_reward_models(const std::string& dir);
std::vector<MoralAgent> load_agents(const std::string& dir);

// Deterministic question answerer over an agent policy: the sampling seed is
// derived from seed_base and the question text, so identical questions get
// identical answers. Words outside the codebook are ignored.
std::function<std::string(const std::string&)> make_agent_handler(
    Policy policy, std::uint64_t seed_base);

}  // namespace cmva
