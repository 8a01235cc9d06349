#include "cmva/types.hpp"

#include <cmath>
#include <set>

#include "json.hpp"

namespace cmva {

using nlohmann::json;

ValueRegistry::ValueRegistry(std::vector<std::string> names)
    : names_(std::move(names)) {
  if (names_.empty()) {
    throw OutOfRange("registry needs at least one value");
  }
  std::set<std::string> seen;
  for (const auto& n : names_) {
    if (n.empty()) throw OutOfRange("empty value name");
    if (!seen.insert(n).second) {
      throw DuplicateId("duplicate value name '" + n + "'");
    }
  }
}

const ValueRegistry& ValueRegistry::canonical() {
  static const ValueRegistry reg(
      {"care", "fairness", "loyalty", "authority", "sanctity"});
  return reg;
}

const std::string& ValueRegistry::name(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= names_.size()) {
    throw OutOfRange("value id " + std::to_string(id) + " outside registry");
  }
  return names_[static_cast<std::size_t>(id)];
}

MoralValue ValueRegistry::value(int id) const { return {id, name(id)}; }

std::optional<int> ValueRegistry::id_of(const std::string& name) const {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == name) return static_cast<int>(i);
  }
  return std::nullopt;
}

std::string ValueRegistry::serialize() const {
  return json(names_).dump();
}

ValueRegistry ValueRegistry::deserialize(const std::string& json_text) {
  json j = json::parse(json_text);
  if (!j.is_array()) throw OutOfRange("registry JSON must be an array");
  return ValueRegistry(j.get<std::vector<std::string>>());
}

std::string MoralProfile::serialize() const { return json(weights).dump(); }

MoralProfile MoralProfile::deserialize(const std::string& json_text,
                                       std::size_t expected_n) {
  json j = json::parse(json_text);
  if (!j.is_array()) throw OutOfRange("profile JSON must be an array");
  std::vector<double> raw = j.get<std::vector<double>>();
  return validate_profile(raw, expected_n);
}

MoralProfile validate_profile(std::span<const double> raw, std::size_t n) {
  if (raw.size() != n) {
    throw DimensionMismatch("profile has " + std::to_string(raw.size()) +
                            " entries, registry has " + std::to_string(n));
  }
  bool any_nonzero = false;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const double w = raw[i];
    if (!std::isfinite(w) || w < 0.0 || w > 1.0) {
      throw OutOfRange("profile entry " + std::to_string(i) + " = " +
                       std::to_string(w) + " outside [0,1]");
    }
    if (w != 0.0) any_nonzero = true;
  }
  if (!any_nonzero) {
    throw DegenerateProfile("all profile weights are zero");
  }
  return MoralProfile{std::vector<double>(raw.begin(), raw.end())};
}

double scalarize(const RewardVector& r, const MoralProfile& c) {
  if (r.size() != c.size()) {
    throw DimensionMismatch("reward vector length " + std::to_string(r.size()) +
                            " vs profile length " + std::to_string(c.size()));
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < r.size(); ++i) {
    acc += r.scores[i] * c.weights[i];
  }
  return acc;
}

MoralJudgment binarize_judgment(std::int64_t raw_label) {
  return MoralJudgment{static_cast<std::uint8_t>(raw_label < 0 ? 0 : 1)};
}

}  // namespace cmva
