#include <cmath>
#include <cstdlib>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "cmva/dataset.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace cmva;
using testsupport::TempDir;

namespace {

void write_file(const std::string& path, const std::string& body) {
  std::ofstream out(path);
  out << body;
}

MoralValue care() { return ValueRegistry::canonical().value(0); }

}  // namespace

TEST_CASE("loads one record per JSONL line in input order") {
  TempDir tmp;
  const auto path = tmp.file("care.jsonl");
  write_file(path,
             "{\"text\": \"help them\", \"label\": 1}\n"
             "{\"text\": \"hurt them\", \"label\": -1}\n"
             "{\"text\": \"walk away\", \"label\": 0}\n");
  auto data = load_moral_dataset(path, care());
  REQUIRE(data.size() == 3);
  CHECK(data.value == care());
  CHECK(data.records[0].text == "help them");
  CHECK(data.records[0].judgment.label == 1);
  CHECK(data.records[1].text == "hurt them");
  CHECK(data.records[1].judgment.label == 0);
  CHECK(data.records[2].judgment.label == 1);
}

TEST_CASE("malformed line reports its 1-based line number") {
  TempDir tmp;
  const auto path = tmp.file("bad.jsonl");
  write_file(path,
             "{\"text\": \"ok\", \"label\": 1}\n"
             "{\"text\": \"no label here\"}\n");
  try {
    load_moral_dataset(path, care());
    FAIL("expected MalformedRecord");
  } catch (const MalformedRecord& e) {
    CHECK(e.line() == 2);
  }
}

TEST_CASE("empty and missing dataset files are rejected") {
  TempDir tmp;
  const auto path = tmp.file("empty.jsonl");
  write_file(path, "");
  CHECK_THROWS_AS(load_moral_dataset(path, care()), EmptyDataset);
  CHECK_THROWS_AS(load_moral_dataset(tmp.file("nope.jsonl"), care()),
                  FileNotFound);
}

TEST_CASE("blank lines and non-JSON lines are malformed") {
  TempDir tmp;
  const auto path = tmp.file("junk.jsonl");
  write_file(path, "{\"text\": \"ok\", \"label\": 1}\nnot json at all\n");
  CHECK_THROWS_AS(load_moral_dataset(path, care()), MalformedRecord);
}

TEST_CASE("moral dataset save/load round-trips, including label -1") {
  TempDir tmp;
  auto data = testsupport::toy_dataset(2, 10, 99);
  const auto path = tmp.file("loyalty.jsonl");
  save_moral_dataset(data, path);
  auto back = load_moral_dataset(path, data.value);
  CHECK(back == data);
}

TEST_CASE("aggregation records validate shape on load") {
  TempDir tmp;
  const std::string good =
      "{\"question\": \"q\", \"profile\": [1, 0, 0, 0, 0], "
      "\"answers\": [\"a\", \"b\", \"c\", \"d\", \"e\"], \"truth\": \"a\"}";

  SUBCASE("well-formed line loads") {
    const auto path = tmp.file("agg.jsonl");
    write_file(path, good + "\n");
    auto records =
        load_aggregation_dataset(path, ValueRegistry::canonical());
    REQUIRE(records.size() == 1);
    CHECK(records[0].question == "q");
    CHECK(records[0].agent_answers.size() == 5);
    CHECK(records[0].ground_truth == "a");
    CHECK(records[0].profile.weights[0] == 1.0);
  }

  SUBCASE("four answers for five values is a dimension mismatch") {
    const auto path = tmp.file("agg4.jsonl");
    write_file(path,
               "{\"question\": \"q\", \"profile\": [1, 0, 0, 0, 0], "
               "\"answers\": [\"a\", \"b\", \"c\", \"d\"], \"truth\": \"a\"}\n");
    CHECK_THROWS_AS(
        load_aggregation_dataset(path, ValueRegistry::canonical()),
        DimensionMismatch);
  }

  SUBCASE("profile entry above 1 is out of range") {
    const auto path = tmp.file("aggr.jsonl");
    write_file(path,
               "{\"question\": \"q\", \"profile\": [1.5, 0, 0, 0, 0], "
               "\"answers\": [\"a\", \"b\", \"c\", \"d\", \"e\"], "
               "\"truth\": \"a\"}\n");
    CHECK_THROWS_AS(
        load_aggregation_dataset(path, ValueRegistry::canonical()),
        OutOfRange);
  }
}

TEST_CASE("aggregation save/load round-trips") {
  TempDir tmp;
  auto models = testsupport::toy_reward_models(20, 3);
  auto records = testsupport::toy_aggregation_corpus(models, 8, 11);
  const auto path = tmp.file("corpus.jsonl");
  save_aggregation_dataset(records, path);
  auto back = load_aggregation_dataset(path, ValueRegistry::canonical());
  REQUIRE(back.size() == records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    CHECK(back[i].question == records[i].question);
    CHECK(back[i].agent_answers == records[i].agent_answers);
    CHECK(back[i].ground_truth == records[i].ground_truth);
    CHECK(back[i].profile.weights == records[i].profile.weights);
  }
}

TEST_CASE("split sizes follow round-half-up with proportional remainder") {
  SplitSpec spec;  // 0.8 / 0.1 / 0.1
  auto [a, b, c] = detail::split_sizes(10, spec);
  CHECK(a == 8);
  CHECK(b == 1);
  CHECK(c == 1);

  auto [t2, v2, s2] = detail::split_sizes(114000, spec);
  CHECK(t2 == 91200);
  CHECK(v2 == 11400);
  CHECK(s2 == 11400);
}

TEST_CASE("each split size deviates from fraction*L by less than 1") {
  rng::Rng gen(5150);
  for (int trial = 0; trial < 300; ++trial) {
    SplitSpec spec;
    double f1 = gen.uniform(0.05, 0.9);
    double f2 = gen.uniform(0.05, 0.95 - f1);
    spec.train_fraction = f1;
    spec.val_fraction = f2;
    spec.test_fraction = 1.0 - f1 - f2;
    const std::size_t total = 3 + gen.bounded(5000);
    auto [a, b, c] = detail::split_sizes(total, spec);
    CHECK(a + b + c == total);
    const double dt = static_cast<double>(total);
    CHECK(std::abs(static_cast<double>(a) - spec.train_fraction * dt) < 1.0);
    CHECK(std::abs(static_cast<double>(b) - spec.val_fraction * dt) < 1.0);
    CHECK(std::abs(static_cast<double>(c) - spec.test_fraction * dt) < 1.0);
  }
}

TEST_CASE("split is a deterministic partition") {
  auto data = testsupport::toy_dataset(0, 30, 77);  // 60 records
  SplitSpec spec;
  spec.seed = 7;

  auto [train, val, test] = split_dataset(data.records, spec);
  CHECK(train.size() == 48);
  CHECK(val.size() == 6);
  CHECK(test.size() == 6);

  auto [train2, val2, test2] = split_dataset(data.records, spec);
  CHECK(train == train2);
  CHECK(val == val2);
  CHECK(test == test2);

  // Disjoint and covering: every input index appears exactly once. The toy
  // records can repeat as text, so count by multiset of serialized rows.
  std::multiset<std::string> input, output;
  auto key = [](const MoralRecord& r) {
    return r.text + "|" + std::to_string(r.judgment.label);
  };
  for (const auto& r : data.records) input.insert(key(r));
  for (const auto& r : train) output.insert(key(r));
  for (const auto& r : val) output.insert(key(r));
  for (const auto& r : test) output.insert(key(r));
  CHECK(input == output);

  SplitSpec other = spec;
  other.seed = 8;
  auto [train3, val3, test3] = split_dataset(data.records, other);
  CHECK(train3.size() == train.size());
  CHECK(train3 != train);  // different permutation with overwhelming odds
}

TEST_CASE("split rejects bad specs and tiny datasets") {
  auto data = testsupport::toy_dataset(0, 5, 1);
  SplitSpec bad;
  bad.train_fraction = 0.5;
  bad.val_fraction = 0.2;
  bad.test_fraction = 0.2;  // sums to 0.9
  CHECK_THROWS_AS(split_dataset(data.records, bad), OutOfRange);

  SplitSpec zero;
  zero.train_fraction = 0.0;
  zero.val_fraction = 0.5;
  zero.test_fraction = 0.5;
  CHECK_THROWS_AS(split_dataset(data.records, zero), OutOfRange);

  std::vector<MoralRecord> two(data.records.begin(), data.records.begin() + 2);
  SplitSpec spec;
  CHECK_THROWS_AS(split_dataset(two, spec), TooFewRecords);
}
