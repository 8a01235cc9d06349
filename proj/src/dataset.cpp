#include "cmva/dataset.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

#include "json.hpp"

namespace cmva {

using nlohmann::json;

namespace {

// Applies fn to each non-blank line with its 1-based line number.
void for_each_jsonl_line(
    const std::string& path,
    const std::function<void(std::size_t, const json&)>& fn) {
  std::ifstream in(path);
  if (!in) {
    throw FileNotFound(path);
  }
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw MalformedRecord(lineno, e.what());
    }
    if (!j.is_object()) {
      throw MalformedRecord(lineno, "expected a JSON object");
    }
    fn(lineno, j);
  }
}

}  // namespace

void SplitSpec::validate() const {
  if (!(train_fraction > 0.0) || !(val_fraction > 0.0) ||
      !(test_fraction > 0.0)) {
    throw OutOfRange("split fractions must be positive");
  }
  const double sum = train_fraction + val_fraction + test_fraction;
  if (std::abs(sum - 1.0) > 1e-9) {
    throw OutOfRange("split fractions sum to " + std::to_string(sum) +
                     ", expected 1");
  }
}

MoralDataset load_moral_dataset(const std::string& path,
                                const MoralValue& value) {
  MoralDataset data;
  data.value = value;
  for_each_jsonl_line(path, [&](std::size_t lineno, const json& j) {
    if (!j.contains("text") || !j["text"].is_string()) {
      throw MalformedRecord(lineno, "missing string field \"text\"");
    }
    if (!j.contains("label") || !j["label"].is_number_integer()) {
      throw MalformedRecord(lineno, "missing integer field \"label\"");
    }
    data.records.push_back(MoralRecord{
        j["text"].get<std::string>(),
        binarize_judgment(j["label"].get<std::int64_t>())});
  });
  if (data.records.empty()) {
    throw EmptyDataset(path);
  }
  return data;
}

void save_moral_dataset(const MoralDataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) {
    throw FileNotFound("cannot write " + path);
  }
  for (const auto& r : data.records) {
    json j;
    j["text"] = r.text;
    j["label"] = r.judgment.label == 1 ? 1 : -1;
    out << j.dump() << '\n';
  }
}

std::vector<AggregationRecord> load_aggregation_dataset(
    const std::string& path, const ValueRegistry& registry) {
  std::vector<AggregationRecord> records;
  const std::size_t n = registry.size();
  for_each_jsonl_line(path, [&](std::size_t lineno, const json& j) {
    for (const char* key : {"question", "profile", "answers", "truth"}) {
      if (!j.contains(key)) {
        throw MalformedRecord(lineno,
                              std::string("missing field \"") + key + "\"");
      }
    }
    if (!j["question"].is_string() || !j["truth"].is_string() ||
        !j["profile"].is_array() || !j["answers"].is_array()) {
      throw MalformedRecord(lineno, "wrong field type");
    }
    AggregationRecord rec;
    rec.question = j["question"].get<std::string>();
    rec.ground_truth = j["truth"].get<std::string>();
    if (rec.ground_truth.empty()) {
      throw MalformedRecord(lineno, "empty \"truth\"");
    }
    std::vector<double> raw;
    for (const auto& v : j["profile"]) {
      if (!v.is_number()) throw MalformedRecord(lineno, "non-numeric profile");
      raw.push_back(v.get<double>());
    }
    rec.profile = validate_profile(raw, n);
    for (const auto& a : j["answers"]) {
      if (!a.is_string()) throw MalformedRecord(lineno, "non-string answer");
      rec.agent_answers.push_back(a.get<std::string>());
    }
    if (rec.agent_answers.size() != n) {
      throw DimensionMismatch("line " + std::to_string(lineno) + ": " +
                              std::to_string(rec.agent_answers.size()) +
                              " answers, registry has " + std::to_string(n));
    }
    records.push_back(std::move(rec));
  });
  return records;
}

void save_aggregation_dataset(const std::vector<AggregationRecord>& records,
                              const std::string& path) {
  std::ofstream out(path);
  if (!out) {
    throw FileNotFound("cannot write " + path);
  }
  for (const auto& r : records) {
    json j;
    j["question"] = r.question;
    j["profile"] = r.profile.weights;
    j["answers"] = r.agent_answers;
    j["truth"] = r.ground_truth;
    out << j.dump() << '\n';
  }
}

namespace detail {

std::tuple<std::size_t, std::size_t, std::size_t> split_sizes(
    std::size_t total, const SplitSpec& spec) {
  const double l = static_cast<double>(total);
  const auto round_half_up = [](double x) {
    return static_cast<std::size_t>(std::floor(x + 0.5));
  };
  std::size_t n_train = round_half_up(spec.train_fraction * l);
  if (n_train > total) n_train = total;
  const std::size_t rest = total - n_train;
  const double val_share =
      spec.val_fraction / (spec.val_fraction + spec.test_fraction);
  std::size_t n_val = round_half_up(val_share * static_cast<double>(rest));
  if (n_val > rest) n_val = rest;
  return {n_train, n_val, rest - n_val};
}

}  // namespace detail

}  // namespace cmva
