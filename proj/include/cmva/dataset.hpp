#pragma once
// JSONL ingestion for moral-judgment and aggregation datasets, plus
// deterministic seeded splits. Canonical field names: text, label,
// question, profile, answers, truth.

#include <cstdint>
#include <string>
#include <tuple>
#include <vector>

#include "cmva/errors.hpp"
#include "cmva/rand.hpp"
#include "cmva/types.hpp"

namespace cmva {

struct MoralRecord {
  std::string text;
  MoralJudgment judgment;

  bool operator==(const MoralRecord& o) const {
    return text == o.text && judgment == o.judgment;
  }
};

// Labeled corpus for one moral value. L >= 1.
struct MoralDataset {
  MoralValue value;
  std::vector<MoralRecord> records;

  std::size_t size() const { return records.size(); }

  bool operator==(const MoralDataset& o) const {
    return value == o.value && records == o.records;
  }
};

// One aggregation example: question, profile, the n agent answers in value-id
// order, and the ground-truth answer.
struct AggregationRecord {
  std::string question;
  MoralProfile profile;
  std::vector<std::string> agent_answers;
  std::string ground_truth;
};

// Split fractions must be positive and sum to 1 within 1e-9.
struct SplitSpec {
  double train_fraction = 0.8;
  double val_fraction = 0.1;
  double test_fraction = 0.1;
  std::uint64_t seed = 42;

  void validate() const;
};

// Reads one JSONL record per line: {"text": ..., "label": <signed code>}.
// Labels pass through binarize_judgment. Preserves input order.
MoralDataset load_moral_dataset(const std::string& path,
                                const MoralValue& value);

// Writes the canonical schema back out. Judgment 0 serializes as label -1 so
// that a reload binarizes to the identical dataset.
void save_moral_dataset(const MoralDataset& data, const std::string& path);

// Reads {"question", "profile", "answers", "truth"} lines; profiles are
// validated against the registry size.
std::vector<AggregationRecord> load_aggregation_dataset(
    const std::string& path, const ValueRegistry& registry);

void save_aggregation_dataset(const std::vector<AggregationRecord>& records,
                              const std::string& path);

namespace detail {

// Boundary sizes: round-half-up on the train cut, remainder apportioned
// between val and test in proportion to their fractions. Each size deviates
// from fraction*L by strictly less than 1.
std::tuple<std::size_t, std::size_t, std::size_t> split_sizes(
    std::size_t total, const SplitSpec& spec);

}  // namespace detail

// Deterministic permutation by seed (fisher-yates/mt19937_64), then a
// contiguous three-way cut. Partitions are disjoint and cover the input.
template <typename T>
std::tuple<std::vector<T>, std::vector<T>, std::vector<T>> split_dataset(
    const std::vector<T>& records, const SplitSpec& spec) {
  spec.validate();
  if (records.size() < 3) {
    throw TooFewRecords("need at least 3 records, got " +
                        std::to_string(records.size()));
  }
  const auto idx = rng::shuffled_indices(records.size(), spec.seed);
  const auto [n_train, n_val, n_test] = detail::split_sizes(records.size(), spec);
  std::vector<T> train, val, test;
  train.reserve(n_train);
  val.reserve(n_val);
  test.reserve(n_test);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const T& r = records[idx[i]];
    if (i < n_train) {
      train.push_back(r);
    } else if (i < n_train + n_val) {
      val.push_back(r);
    } else {
      test.push_back(r);
    }
  }
  return {std::move(train), std::move(val), std::move(test)};
}

}  // namespace cmva
