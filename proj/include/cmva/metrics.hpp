#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "cmva/policy.hpp"
#include "cmva/reward.hpp"
#include "cmva/types.hpp"

namespace cmva {

struct RougeScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct RougeResult {
  RougeScore rouge1;
  RougeScore rouge2;
  RougeScore rougeL;
  RougeScore rougeLsum;
};

// Longest common subsequence length. Uses a bit-parallel scan when the
// first sequence fits in 64 bits, a two-row table otherwise.
std::size_t lcs_length(std::span<const int32_t> a, std::span<const int32_t> b);

// Clipped n-gram overlap; precision over candidate, recall over reference.
RougeScore rouge_n(const std::string& candidate, const std::string& reference,
                   int n);

RougeScore rouge_l(const std::string& candidate, const std::string& reference);

// Summary-level variant: sentences split on newlines, per-reference-sentence
// union LCS with token-count clipping against both sides.
RougeScore rouge_lsum(const std::string& candidate,
                      const std::string& reference);

enum class RougeVariant { k1, k2, kL, kLsum };

// Parses "1" | "2" | "L" | "Lsum" (also "rouge1" etc). Throws UnknownValue.
RougeVariant parse_rouge_variant(const std::string& name);

RougeScore rouge(const std::string& candidate, const std::string& reference,
                 RougeVariant variant);

// All four variants at once.
RougeResult rouge(const std::string& candidate, const std::string& reference);

struct RougeReport {
  double rouge1 = 0.0;
  double rouge2 = 0.0;
  double rougeL = 0.0;
  double rougeLsum = 0.0;
  std::size_t count = 0;
};

// Mean f1 per metric across candidate/reference pairs.
RougeReport aggregate_rouge(std::span<const RougeResult> results);

// Answers a prompt; the seed makes one call reproducible so two generators
// handed the same (prompt, seed) can be compared fairly.
using Generator =
    std::function<std::string(const std::string& prompt, std::uint64_t seed)>;

// Same, conditioned on a moral profile.
using ContextualGenerator = std::function<std::string(
    const std::string& prompt, const MoralProfile& context,
    std::uint64_t seed)>;

// Scores one moral value on a text, in [0, 1].
using ValueClassifier = std::function<double(const std::string& text)>;

using Similarity = std::function<double(std::span<const double>,
                                        std::span<const double>)>;

// V(y): per-value classifier outputs for one text, in value-id order.
using MoralAlignmentVector = std::vector<double>;

// Component i = reward(classifiers[i], text). Models must be ordered by
// value id (DimensionMismatch otherwise).
MoralAlignmentVector moral_vector(std::span<const RewardModel> classifiers,
                                  const std::string& text);
MoralAlignmentVector moral_vector(std::span<const ValueClassifier> classifiers,
                                  const std::string& text);

// Throws DimensionMismatch on length mismatch, ZeroVector if either input
// has zero norm.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

struct AlignmentStats {
  std::size_t compared = 0;
  std::size_t skipped = 0;  // pairs dropped because a vector had zero norm
};

// Mean over prompts of sim(V(gen_a(x)), V(gen_b(x))), cosine similarity by
// default. Prompt j hands both generators the same derived seed. Zero-norm
// pairs are skipped and counted in `stats`; if every pair is skipped the
// score is undefined (ZeroVector).
double alignment_score(const Generator& gen_a, const Generator& gen_b,
                       std::span<const std::string> prompts,
                       std::span<const ValueClassifier> classifiers,
                       std::uint64_t seed, const Similarity& sim = {},
                       AlignmentStats* stats = nullptr);

// Double mean over contexts and prompts, with each generator conditioned on
// the context and each V weighted componentwise by the context profile
// before comparison. Prompt j keeps the same derived seed across contexts,
// so a single all-ones context with context-blind generators reduces
// exactly to alignment_score.
double contextual_alignment_score(
    const ContextualGenerator& gen_a, const ContextualGenerator& gen_b,
    std::span<const std::string> prompts,
    std::span<const MoralProfile> contexts,
    std::span<const ValueClassifier> classifiers, std::uint64_t seed,
    const Similarity& sim = {}, AlignmentStats* stats = nullptr);

// Glue: a generator that samples `policy` (decoding through its codebook),
// and classifiers that score with trained reward models.
Generator make_policy_generator(Policy policy);
std::vector<ValueClassifier> make_reward_classifiers(
    std::span<const RewardModel> models);

}  // namespace cmva
