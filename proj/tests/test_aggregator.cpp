#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "cmva/aggregator.hpp"
#include "cmva/policy.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace cmva;

namespace {

AggregatorVocab toy_vocab() {
  AggregatorVocab v;
  v.words = default_codebook();
  return v;
}

AgentAnswerSet basis_answers() {
  AgentAnswerSet set;
  set.question = "what now";
  set.answers = {"row zero", "row one", "row two", "row three", "row four"};
  for (int i = 0; i < 5; ++i) {
    std::vector<double> row(5, 0.1);
    row[static_cast<std::size_t>(i)] = 0.9;
    set.rewards.push_back(row);
  }
  return set;
}

}  // namespace

TEST_CASE("select_best picks the highest scalarized row") {
  auto set = basis_answers();
  MoralProfile loyalty_only{{0, 0, 1, 0, 0}};
  auto [idx, text] = select_best(set, loyalty_only);
  CHECK(idx == 2);
  CHECK(text == "row two");
}

TEST_CASE("select_best breaks ties toward the lowest index") {
  AgentAnswerSet set;
  set.question = "q";
  set.answers = {"first", "second", "third"};
  set.rewards = {{0.5, 0.5, 0.5, 0.5, 0.5},
                 {0.5, 0.5, 0.5, 0.5, 0.5},
                 {0.5, 0.5, 0.5, 0.5, 0.5}};
  MoralProfile uniform{std::vector<double>(5, 0.2)};
  auto [idx, text] = select_best(set, uniform);
  CHECK(idx == 0);
  CHECK(text == "first");
}

TEST_CASE("select_best agrees with exhaustive scoring on random instances") {
  rng::Rng gen(3333);
  for (int trial = 0; trial < 100; ++trial) {
    AgentAnswerSet set;
    const std::size_t rows = 1 + gen.bounded(6);
    for (std::size_t i = 0; i < rows; ++i) {
      set.answers.push_back("answer " + std::to_string(i));
      std::vector<double> row;
      for (int j = 0; j < 5; ++j) row.push_back(gen.uniform01());
      set.rewards.push_back(row);
    }
    MoralProfile c = testsupport::near_one_hot(5, gen.bounded(5), gen);
    auto [idx, text] = select_best(set, c);
    CHECK(idx == testsupport::brute_force_select(set.rewards, c));
    CHECK(text == set.answers[idx]);
  }
}

TEST_CASE("the selection argmax is invariant under positive profile scaling") {
  rng::Rng gen(909);
  for (int trial = 0; trial < 50; ++trial) {
    AgentAnswerSet set;
    for (int i = 0; i < 5; ++i) {
      set.answers.push_back("a" + std::to_string(i));
      std::vector<double> row;
      for (int j = 0; j < 5; ++j) row.push_back(gen.uniform01());
      set.rewards.push_back(row);
    }
    MoralProfile c;
    for (int j = 0; j < 5; ++j) c.weights.push_back(0.2 + 0.8 * gen.uniform01());
    const double k = 0.05 + gen.uniform01() * 0.9;  // keep weights in [0,1]
    MoralProfile scaled;
    for (double w : c.weights) scaled.weights.push_back(k * w);
    CHECK(select_best(set, c).first == select_best(set, scaled).first);
  }
}

TEST_CASE("select_best validates its input") {
  AgentAnswerSet empty;
  MoralProfile c{std::vector<double>(5, 0.2)};
  CHECK_THROWS_AS(select_best(empty, c), NoAnswersAvailable);

  AgentAnswerSet ragged;
  ragged.answers = {"x", "y"};
  ragged.rewards = {{0.1, 0.2, 0.3, 0.4, 0.5}, {0.1, 0.2}};
  CHECK_THROWS_AS(select_best(ragged, c), DimensionMismatch);

  AgentAnswerSet misaligned;
  misaligned.answers = {"x"};
  misaligned.rewards = {{0.1, 0.2, 0.3, 0.4, 0.5},
                        {0.5, 0.4, 0.3, 0.2, 0.1}};
  CHECK_THROWS_AS(select_best(misaligned, c), DimensionMismatch);
}

TEST_CASE("profile weights quantize to bucket tokens at the boundaries") {
  auto vocab = toy_vocab();
  CHECK(vocab.bucket_count == 8);
  CHECK(vocab.bucket_of(0.0) == 0);
  CHECK(vocab.bucket_of(1.0) == 7);
  CHECK(vocab.bucket_of(0.99) == 7);
  CHECK(vocab.bucket_of(0.125) == 1);
  CHECK_THROWS_AS(vocab.bucket(8), OutOfRange);
  CHECK_THROWS_AS(vocab.bucket(-1), OutOfRange);
  // Bucket ids are consecutive and distinct from the other reserved ids.
  CHECK(vocab.bucket(0) == vocab.sep() + 1);
  CHECK(vocab.eos() == vocab.bucket(7) + 1);
  CHECK(vocab.size() == vocab.eos() + 1);
}

TEST_CASE("encoding a degenerate record is separators plus profile tokens") {
  auto vocab = toy_vocab();
  std::vector<std::string> answers(5, "");
  MoralProfile c{{1, 0, 0, 0, 0}};
  auto tokens = encode_aggregator_input(answers, "", c, vocab);
  // Empty question and empty answers leave n+1 separators, then 5 buckets.
  REQUIRE(tokens.size() == 11);
  for (int i = 0; i < 6; ++i) CHECK(tokens[static_cast<std::size_t>(i)] == vocab.sep());
  CHECK(tokens[6] == vocab.bucket(7));
  for (int i = 7; i < 11; ++i)
    CHECK(tokens[static_cast<std::size_t>(i)] == vocab.bucket(0));
}

TEST_CASE("encoding separates question, answers, and profile") {
  auto vocab = toy_vocab();
  std::vector<std::string> answers{"care", "fair share"};
  MoralProfile c{{0.5, 1.0}};
  auto tokens = encode_aggregator_input(answers, "the good", c, vocab);
  TokenSequence expected;
  for (const auto& w : {"the", "good"})
    expected.push_back(encode_text(vocab, w)[0]);
  expected.push_back(static_cast<int32_t>(vocab.sep()));
  expected.push_back(encode_text(vocab, "care")[0]);
  expected.push_back(static_cast<int32_t>(vocab.sep()));
  expected.push_back(encode_text(vocab, "fair")[0]);
  expected.push_back(encode_text(vocab, "share")[0]);
  expected.push_back(static_cast<int32_t>(vocab.sep()));
  expected.push_back(static_cast<int32_t>(vocab.bucket(4)));
  expected.push_back(static_cast<int32_t>(vocab.bucket(7)));
  CHECK(tokens == expected);
}

TEST_CASE("unknown words encode as UNK, known words as their ids") {
  auto vocab = toy_vocab();
  auto tokens = encode_text(vocab, "care xylophone HARM");
  REQUIRE(tokens.size() == 3);
  CHECK(tokens[0] < vocab.word_count());
  CHECK(tokens[1] == vocab.unk());
  CHECK(tokens[2] < vocab.word_count());  // tokenizer lowercases
  CHECK(encode_text(vocab, "").empty());
}

TEST_CASE("distinct inputs encode to distinct token sequences") {
  auto vocab = toy_vocab();
  const auto& cb = default_codebook();
  rng::Rng gen(41);
  std::map<TokenSequence, std::string> seen;
  int cases = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<std::string> answers;
    const std::size_t n = 1 + gen.bounded(4);
    for (std::size_t i = 0; i < n; ++i) {
      answers.push_back(cb[gen.bounded(cb.size())]);
    }
    std::string question = cb[gen.bounded(cb.size())];
    MoralProfile c;
    for (std::size_t i = 0; i < n; ++i) {
      // Weights on exact bucket centers so equality of encodings implies
      // equality of the (question, answers, quantized profile) triple.
      c.weights.push_back((0.5 + static_cast<double>(gen.bounded(8))) / 8.0);
    }
    auto key = encode_aggregator_input(answers, question, c, vocab);
    std::string fingerprint = question + "|";
    for (const auto& a : answers) fingerprint += a + "|";
    for (double w : c.weights)
      fingerprint += std::to_string(vocab.bucket_of(w)) + ",";
    auto [it, inserted] = seen.emplace(key, fingerprint);
    if (!inserted) {
      CHECK(it->second == fingerprint);
    }
    ++cases;
  }
  CHECK(cases == 1000);
}

TEST_CASE("cross entropy of a perfect prediction is zero") {
  std::vector<int32_t> y{2, 0};
  std::vector<std::vector<double>> Y{{0, 0, 1}, {1, 0, 0}};
  CHECK(cross_entropy_loss(y, Y) == 0.0);
}

TEST_CASE("cross entropy under uniform predictions is length times log V") {
  std::vector<int32_t> y{0, 1, 2};
  std::vector<std::vector<double>> Y(3, std::vector<double>(4, 0.25));
  CHECK(cross_entropy_loss(y, Y) ==
        doctest::Approx(3.0 * std::log(4.0)).epsilon(1e-12));
  CHECK(3.0 * std::log(4.0) == doctest::Approx(4.15888).epsilon(1e-5));
}

TEST_CASE("cross entropy matches a hand-evaluated instance") {
  std::vector<int32_t> y{1, 2};
  std::vector<std::vector<double>> Y{{0.2, 0.5, 0.3}, {0.1, 0.1, 0.8}};
  const double expected = -(std::log(0.5) + std::log(0.8));
  CHECK(cross_entropy_loss(y, Y) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(cross_entropy_loss(y, Y) >= 0.0);
}

TEST_CASE("cross entropy validates shape and support") {
  std::vector<int32_t> y{0, 1};
  std::vector<std::vector<double>> one_row{{1.0, 0.0}};
  CHECK_THROWS_AS(cross_entropy_loss(y, one_row), LengthMismatch);

  std::vector<std::vector<double>> zero_truth{{1.0, 0.0}, {1.0, 0.0}};
  CHECK_THROWS_AS(cross_entropy_loss(y, zero_truth), ZeroProbabilityTruth);

  std::vector<int32_t> bad_token{5};
  std::vector<std::vector<double>> row{{0.5, 0.5}};
  CHECK_THROWS_AS(cross_entropy_loss(bad_token, row), OutOfRange);
}

TEST_CASE("forward distributions are normalized") {
  AggregatorArchitecture arch;
  arch.embedding_dim = 6;
  arch.hidden_dim = 8;
  auto model = AggregatorModel::init(arch, toy_vocab(), 17);
  auto tokens = encode_text(model.vocab, "care harm the good you");
  auto dists = aggregator_forward(model, tokens);
  REQUIRE(dists.size() == tokens.size());
  for (const auto& d : dists) {
    REQUIRE(d.size() == static_cast<std::size_t>(model.vocab.size()));
    double total = 0.0;
    for (double p : d) {
      CHECK(p >= 0.0);
      total += p;
    }
    CHECK(std::abs(total - 1.0) <= 1e-9);
  }
}

TEST_CASE("analytic aggregator gradient matches finite differences") {
  AggregatorArchitecture arch;
  arch.embedding_dim = 4;
  arch.hidden_dim = 5;
  arch.context_window = 16;
  auto model = AggregatorModel::init(arch, toy_vocab(), 23);

  auto models = testsupport::toy_reward_models(10, 44);
  auto records = testsupport::toy_aggregation_corpus(models, 2, 91);

  std::vector<double> analytic;
  aggregator_loss(model, records, &analytic);
  REQUIRE(analytic.size() == model.theta.size());

  auto eval = [&](const std::vector<double>& t) {
    auto m = model;
    m.theta = t;
    return aggregator_loss(m, records, nullptr);
  };
  auto fd = testsupport::fd_gradient(eval, model.theta, 1e-5);

  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < fd.size(); ++i) {
    num += (analytic[i] - fd[i]) * (analytic[i] - fd[i]);
    den += fd[i] * fd[i];
  }
  REQUIRE(den > 0.0);
  CHECK(std::sqrt(num) <= 1e-4 * std::sqrt(den));
}

TEST_CASE("zero training epochs return the initialized model untouched") {
  auto models = testsupport::toy_reward_models(10, 1);
  auto records = testsupport::toy_aggregation_corpus(models, 6, 2);
  AggregatorTrainConfig config;
  config.epochs = 0;
  config.vocab = toy_vocab();
  auto result = train_aggregator(records, config);
  CHECK(result.loss_history.empty());
  CHECK(result.val_loss_history.empty());
  CHECK(result.best_epoch == -1);
  auto fresh = AggregatorModel::init(config.architecture, config.vocab,
                                     rng::derive_seed(config.seed, 0));
  CHECK(result.model.theta == fresh.theta);
}

TEST_CASE("aggregator training is deterministic and lowers the loss") {
  auto models = testsupport::toy_reward_models(12, 5);
  auto records = testsupport::toy_aggregation_corpus(models, 24, 7);

  AggregatorTrainConfig config;
  config.vocab = toy_vocab();
  config.epochs = 8;
  config.architecture.embedding_dim = 8;
  config.architecture.hidden_dim = 12;

  auto a = train_aggregator(records, config);
  auto b = train_aggregator(records, config);
  CHECK(a.model.theta == b.model.theta);
  CHECK(a.loss_history == b.loss_history);
  REQUIRE(a.loss_history.size() == 8);
  CHECK(a.loss_history.back() < a.loss_history.front());
  CHECK(a.best_epoch >= 0);

  std::vector<AggregationRecord> none;
  CHECK_THROWS_AS(train_aggregator(none, config), EmptyDataset);
}

TEST_CASE("aggregate with the select strategy equals select_best") {
  auto set = basis_answers();
  MoralProfile c{{0, 0, 0, 0, 1}};
  const auto direct = select_best(set, c).second;
  CHECK(aggregate(AggregationStrategy::kSelect, set.question, set, c) ==
        direct);
}

TEST_CASE("learned and external strategies demand their dependencies") {
  auto set = basis_answers();
  MoralProfile c{std::vector<double>(5, 0.2)};
  CHECK_THROWS_AS(
      aggregate(AggregationStrategy::kLearned, set.question, set, c),
      MissingModel);
  CHECK_THROWS_AS(
      aggregate(AggregationStrategy::kExternal, set.question, set, c),
      MissingModel);
}

TEST_CASE("an unreachable external backend fails loudly") {
  auto set = basis_answers();
  MoralProfile c{std::vector<double>(5, 0.2)};
  ExternalBackend backend;
  backend.url = "http://127.0.0.1:9/generate";  // discard port, nothing listens
  backend.timeout_ms = 200;
  CHECK_THROWS_AS(aggregate(AggregationStrategy::kExternal, set.question, set,
                            c, nullptr, &backend),
                  ExternalBackendFailure);
  ExternalBackend junk;
  junk.url = "not a url";
  CHECK_THROWS_AS(aggregate(AggregationStrategy::kExternal, set.question, set,
                            c, nullptr, &junk),
                  ExternalBackendFailure);
}

TEST_CASE("strategy names parse and print") {
  CHECK(parse_strategy("select") == AggregationStrategy::kSelect);
  CHECK(parse_strategy("learned") == AggregationStrategy::kLearned);
  CHECK(parse_strategy("external") == AggregationStrategy::kExternal);
  CHECK_THROWS_AS(parse_strategy("vote"), UnknownStrategy);
  CHECK(strategy_name(AggregationStrategy::kSelect) == "select");
  CHECK(strategy_name(AggregationStrategy::kLearned) == "learned");
  CHECK(strategy_name(AggregationStrategy::kExternal) == "external");
}

TEST_CASE("learned aggregation decodes deterministically") {
  auto models = testsupport::toy_reward_models(10, 3);
  auto records = testsupport::toy_aggregation_corpus(models, 16, 5);
  AggregatorTrainConfig config;
  config.vocab = toy_vocab();
  config.epochs = 4;
  auto trained = train_aggregator(records, config);

  AgentAnswerSet set;
  set.question = records[0].question;
  set.answers = records[0].agent_answers;
  const auto& c = records[0].profile;
  const auto once = aggregate(AggregationStrategy::kLearned, set.question, set,
                              c, &trained.model);
  const auto twice = aggregate(AggregationStrategy::kLearned, set.question,
                               set, c, &trained.model);
  CHECK(once == twice);
}

TEST_CASE("aggregator checkpoints round-trip and verify the codebook") {
  AggregatorArchitecture arch;
  arch.embedding_dim = 5;
  arch.hidden_dim = 7;
  auto model = AggregatorModel::init(arch, toy_vocab(), 3);

  auto back = AggregatorModel::deserialize(model.serialize(),
                                           model.vocab.words);
  CHECK(back.theta == model.theta);
  CHECK(back.arch.embedding_dim == 5);
  CHECK(back.arch.hidden_dim == 7);
  CHECK(back.vocab.bucket_count == model.vocab.bucket_count);

  // A different codebook cannot satisfy the stored hash.
  auto other_words = model.vocab.words;
  other_words[0] = "zebra";
  CHECK_THROWS_AS(
      AggregatorModel::deserialize(model.serialize(), other_words),
      VocabMismatch);

  testsupport::TempDir tmp;
  model.save(tmp.file("agg.json"));
  auto loaded = AggregatorModel::load(tmp.file("agg.json"), model.vocab.words);
  CHECK(loaded.theta == model.theta);
  CHECK_THROWS_AS(
      AggregatorModel::load(tmp.file("gone.json"), model.vocab.words),
      FileNotFound);
}

TEST_CASE("the rendered external prompt carries question, profile, answers") {
  MoralProfile c{{0.5, 0.5, 0, 0, 1}};
  std::vector<std::string> answers{"first answer", "second answer"};
  auto prompt = render_aggregation_prompt("the question", answers, c);
  CHECK(prompt.find("the question") != std::string::npos);
  CHECK(prompt.find("first answer") != std::string::npos);
  CHECK(prompt.find("second answer") != std::string::npos);
  CHECK(prompt.find("0.5") != std::string::npos);
}
