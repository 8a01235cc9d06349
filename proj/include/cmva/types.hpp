#pragma once
// Shared domain vocabulary: moral values, profiles, reward vectors, token
// sequences, judgments, and the r^T c scalarization. All types are immutable
// values after construction and safe to share across threads.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cmva/errors.hpp"

namespace cmva {

struct MoralValue {
  int id = 0;          // index in [0, n), contiguous within a registry
  std::string name;

  bool operator==(const MoralValue& o) const {
    return id == o.id && name == o.name;
  }
};

// Immutable ordered set of moral values. Ids are assigned by position.
// Models trained against one registry must not be mixed with another.
class ValueRegistry {
 public:
  explicit ValueRegistry(std::vector<std::string> names);

  // The five canonical values, in fixed id order.
  static const ValueRegistry& canonical();

  std::size_t size() const { return names_.size(); }
  const std::string& name(int id) const;
  MoralValue value(int id) const;
  std::optional<int> id_of(const std::string& name) const;
  const std::vector<std::string>& names() const { return names_; }

  // JSON list of value names in id order.
  std::string serialize() const;
  static ValueRegistry deserialize(const std::string& json_text);

  bool operator==(const ValueRegistry& o) const { return names_ == o.names_; }

 private:
  std::vector<std::string> names_;
};

// Per-value adherence weights c, each in [0, 1]. Never renormalized:
// argmax consumers are scale-invariant and normalizing would silently
// change r^T c values.
struct MoralProfile {
  std::vector<double> weights;

  std::size_t size() const { return weights.size(); }

  // JSON array of n numbers.
  std::string serialize() const;
  static MoralProfile deserialize(const std::string& json_text,
                                  std::size_t expected_n);
};

// Per-value scores r for one response, each in [0, 1].
struct RewardVector {
  std::vector<double> scores;

  std::size_t size() const { return scores.size(); }
};

// Prompt/response as token ids over a finite vocabulary [0, V).
using TokenSequence = std::vector<std::int32_t>;

// Binary moral judgment: 0 = negative, 1 = neutral/positive.
struct MoralJudgment {
  std::uint8_t label = 1;

  bool operator==(const MoralJudgment& o) const { return label == o.label; }
};

// Range-checks a raw weight vector against a registry of size n.
// Throws DimensionMismatch, OutOfRange (entry outside [0,1] or non-finite),
// or DegenerateProfile (all zeros).
MoralProfile validate_profile(std::span<const double> raw, std::size_t n);

// r^T c. Throws DimensionMismatch when lengths differ.
double scalarize(const RewardVector& r, const MoralProfile& c);

// Signed judgment code -> binary class: negative codes are 0, the rest 1.
MoralJudgment binarize_judgment(std::int64_t raw_label);

}  // namespace cmva
