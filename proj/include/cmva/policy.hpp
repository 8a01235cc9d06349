#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "cmva/errors.hpp"
#include "cmva/rand.hpp"
#include "cmva/types.hpp"

namespace cmva {

// Tabular autoregressive token policy. The state is the last
// `context_order` emitted tokens, left-padded with a BOS marker before the
// first emission. Token ids 0..V-1 index the codebook; id == V doubles as
// the BOS padding value in contexts and the end-of-sequence action in
// logits, so each logit row has V+1 entries and the table has
// (V+1)^context_order rows.
struct Policy {
  int context_order = 1;
  std::vector<std::string> vocab;  // codebook; token id = index
  int max_length = 8;
  std::vector<double> logits;  // row-major [rows x (V+1)]

  int vocab_size() const { return static_cast<int>(vocab.size()); }
  int bos() const { return vocab_size(); }
  int eos_action() const { return vocab_size(); }
  int row_width() const { return vocab_size() + 1; }
  std::size_t rows() const;

  static Policy uniform(int context_order, std::vector<std::string> vocab,
                        int max_length);

  std::string serialize() const;
  static Policy deserialize(const std::string& json_text);
  void save(const std::string& path) const;
  static Policy load(const std::string& path);
};

// Maps a context window (token ids in [0, V], oldest first) to a row.
std::size_t context_index(const Policy& policy,
                          std::span<const int32_t> context);

// Probabilities / log-probabilities for one context row.
std::vector<double> action_probs(const Policy& policy, std::size_t row);
std::vector<double> action_log_probs(const Policy& policy, std::size_t row);

// One sampled trajectory. `logprobs` has one entry per emitted token plus
// one for the terminal step (end token, or a forced stop with logprob 0
// when the response hits max_length), so logprobs.size() ==
// response.size() + 1 always.
struct Rollout {
  TokenSequence prompt;
  TokenSequence response;
  std::vector<double> logprobs;
  double reward = 0.0;
};

// Samples a response for `prompt`. The prompt seeds the context window but
// contributes no logprob terms. Throws OutOfRange on bad prompt tokens.
Rollout sample_response(const Policy& policy, std::span<const int32_t> prompt,
                        rng::Rng& gen);
Rollout sample_response(const Policy& policy, std::span<const int32_t> prompt,
                        std::uint64_t seed);

// Total log-probability of `response` given `prompt`, including the
// terminal step (same accounting as sample_response).
double sequence_logprob(const Policy& policy, std::span<const int32_t> prompt,
                        std::span<const int32_t> response);

// KL(p || q) = sum_i p_i log(p_i / q_i) with 0*log0 = 0. Throws
// DimensionMismatch on length mismatch and AbsoluteContinuityViolation
// where q_i = 0 but p_i > 0.
double kl_divergence(std::span<const double> p, std::span<const double> q);

// KL between the next-token distributions of two same-shape policies at
// one context row.
double kl_divergence_row(const Policy& p, const Policy& q, std::size_t row);

// Scores a decoded response text in [0, 1] (a reward model, an indicator,
// a constant...).
using TextRewardFn = std::function<double(const std::string&)>;

// Mean over every (prompt, sample) pair of reward_fn applied to the
// decoded sampled response. Sample s of prompt j draws from a generator
// seeded with derive_seed(seed, j*samples_per_prompt + s).
double estimate_expected_reward(const Policy& policy,
                                std::span<const TokenSequence> prompts,
                                const TextRewardFn& reward_fn,
                                int samples_per_prompt, std::uint64_t seed);

// Default codebook: 32 words spanning the five value domains plus filler.
const std::vector<std::string>& default_codebook();

// Token ids -> space-joined words. Throws OutOfRange on ids outside the
// codebook (the end/BOS id never appears in a response).
std::string decode_tokens(std::span<const int32_t> tokens,
                          std::span<const std::string> codebook);

// Whitespace-split words -> token ids. Throws UnknownValue for words
// outside the codebook.
TokenSequence encode_words(const std::string& text,
                           std::span<const std::string> codebook);

}  // namespace cmva
