#pragma once
// Shared toy corpus and oracles. The toy world lives entirely inside the
// 32-word policy codebook: each moral value gets a few virtue words and a
// few vice words, so lexicon-separable classifiers and word-level reward
// signals are easy to construct and easy to verify by hand.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "cmva/aggregator.hpp"
#include "cmva/dataset.hpp"
#include "cmva/policy.hpp"
#include "cmva/rand.hpp"
#include "cmva/reward.hpp"
#include "cmva/types.hpp"

namespace testsupport {

// Neutral words that carry no value signal.
const std::vector<std::string>& filler_words();
// Words expressing / violating one canonical value (id 0..4).
const std::vector<std::string>& virtue_words(int value_id);
const std::vector<std::string>& vice_words(int value_id);

// Balanced labeled corpus: `per_class` positives (filler + virtue word) and
// `per_class` negatives (filler + vice word), shuffled by seed.
cmva::MoralDataset toy_dataset(int value_id, int per_class,
                               std::uint64_t seed);

// One trained classifier per canonical value, value-id order.
std::vector<cmva::RewardModel> toy_reward_models(int per_class = 40,
                                                 std::uint64_t seed = 7);

// Distinct short prompts over filler words (singles, then pairs).
std::vector<std::string> toy_prompt_texts(std::size_t count);
std::vector<cmva::TokenSequence> encode_prompts(
    std::span<const std::string> prompts);

// Profile with one dominant weight in [0.75, 1] and the rest in [0, 0.2].
cmva::MoralProfile near_one_hot(std::size_t n, std::size_t dominant,
                                cmva::rng::Rng& gen);

// Aggregation corpus whose ground truth is the selection oracle under
// `models`: each record pairs a filler question with one two-virtue-word
// answer per value and a near-one-hot profile.
std::vector<cmva::AggregationRecord> toy_aggregation_corpus(
    std::span<const cmva::RewardModel> models, std::size_t count,
    std::uint64_t seed);

// Full-table LCS, the quadratic reference implementation.
std::size_t lcs_oracle(std::span<const int32_t> a, std::span<const int32_t> b);

// Exhaustive argmax of scalarize(rewards[i], c), lowest index on ties.
std::size_t brute_force_select(
    const std::vector<std::vector<double>>& rewards, const cmva::MoralProfile& c);

// Central finite differences of f at x.
std::vector<double> fd_gradient(
    const std::function<double(const std::vector<double>&)>& f,
    std::vector<double> x, double h);

// Unique scratch directory, removed recursively on destruction.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::string& path() const { return path_; }
  std::string file(const std::string& name) const { return path_ + "/" + name; }

 private:
  std::string path_;
};

}  // namespace testsupport
