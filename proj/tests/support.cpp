#include "support.hpp"

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <filesystem>

namespace testsupport {

using namespace cmva;

const std::vector<std::string>& filler_words() {
  static const std::vector<std::string> words = {
      "the", "a", "you", "i", "we", "they", "good", "bad", "honest", "brave",
      "calm"};
  return words;
}

const std::vector<std::string>& virtue_words(int value_id) {
  static const std::vector<std::vector<std::string>> words = {
      {"care", "help", "kind"},
      {"fair", "share", "equal"},
      {"loyal", "team", "trust"},
      {"respect", "obey", "duty"},
      {"pure", "sacred"}};
  return words.at(static_cast<std::size_t>(value_id));
}

const std::vector<std::string>& vice_words(int value_id) {
  static const std::vector<std::vector<std::string>> words = {
      {"harm", "hurt"}, {"cheat"}, {"betray"}, {"rebel"}, {"dirty", "taboo"}};
  return words.at(static_cast<std::size_t>(value_id));
}

MoralDataset toy_dataset(int value_id, int per_class, std::uint64_t seed) {
  rng::Rng gen(seed);
  const auto& filler = filler_words();
  const auto& virtues = virtue_words(value_id);
  const auto& vices = vice_words(value_id);
  const auto sentence = [&](const std::vector<std::string>& signal) {
    std::string text = filler[gen.bounded(filler.size())];
    text += " " + filler[gen.bounded(filler.size())];
    text += " " + signal[gen.bounded(signal.size())];
    return text;
  };
  MoralDataset data;
  data.value = ValueRegistry::canonical().value(value_id);
  for (int i = 0; i < per_class; ++i) {
    data.records.push_back({sentence(virtues), MoralJudgment{1}});
    data.records.push_back({sentence(vices), MoralJudgment{0}});
  }
  const auto order = rng::shuffled_indices(data.records.size(),
                                           rng::derive_seed(seed, 1));
  std::vector<MoralRecord> shuffled;
  shuffled.reserve(order.size());
  for (auto i : order) shuffled.push_back(data.records[i]);
  data.records = std::move(shuffled);
  return data;
}

std::vector<RewardModel> toy_reward_models(int per_class, std::uint64_t seed) {
  std::vector<RewardModel> models;
  for (int v = 0; v < 5; ++v) {
    const MoralDataset data =
        toy_dataset(v, per_class, rng::derive_seed(seed, 100 + v));
    TrainConfig config;
    config.seed = rng::derive_seed(seed, 200 + v);
    models.push_back(train_classifier(data, config));
  }
  return models;
}

std::vector<std::string> toy_prompt_texts(std::size_t count) {
  const auto& filler = filler_words();
  std::vector<std::string> out;
  for (const auto& w : filler) {
    if (out.size() == count) return out;
    out.push_back(w);
  }
  for (const auto& w1 : filler) {
    for (const auto& w2 : filler) {
      if (out.size() == count) return out;
      out.push_back(w1 + " " + w2);
    }
  }
  return out;
}

std::vector<TokenSequence> encode_prompts(
    std::span<const std::string> prompts) {
  std::vector<TokenSequence> out;
  out.reserve(prompts.size());
  for (const auto& p : prompts) {
    out.push_back(encode_words(p, default_codebook()));
  }
  return out;
}

MoralProfile near_one_hot(std::size_t n, std::size_t dominant, rng::Rng& gen) {
  MoralProfile c;
  c.weights.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    c.weights[i] = i == dominant ? 0.75 + 0.25 * gen.uniform01()
                                 : 0.2 * gen.uniform01();
  }
  return c;
}

std::vector<AggregationRecord> toy_aggregation_corpus(
    std::span<const RewardModel> models, std::size_t count,
    std::uint64_t seed) {
  rng::Rng gen(seed);
  const auto& registry = ValueRegistry::canonical();
  const auto& filler = filler_words();
  std::vector<AggregationRecord> records;
  for (std::size_t r = 0; r < count; ++r) {
    AgentAnswerSet set;
    set.question = filler[gen.bounded(filler.size())] + " " +
                   filler[gen.bounded(filler.size())];
    for (int v = 0; v < 5; ++v) {
      const auto& virtues = virtue_words(v);
      const std::size_t i1 = gen.bounded(virtues.size());
      std::size_t i2 = gen.bounded(virtues.size());
      if (virtues.size() > 1 && i2 == i1) i2 = (i1 + 1) % virtues.size();
      const std::string answer = virtues[i1] + " " + virtues[i2];
      set.answers.push_back(answer);
      set.rewards.push_back(reward_vector(models, answer, registry).scores);
    }
    AggregationRecord rec;
    rec.question = set.question;
    rec.profile = near_one_hot(5, gen.bounded(5), gen);
    rec.agent_answers = set.answers;
    rec.ground_truth = select_best(set, rec.profile).second;
    records.push_back(std::move(rec));
  }
  return records;
}

std::size_t lcs_oracle(std::span<const int32_t> a,
                       std::span<const int32_t> b) {
  std::vector<std::vector<std::size_t>> t(a.size() + 1,
                                          std::vector<std::size_t>(b.size() + 1, 0));
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      t[i][j] = a[i - 1] == b[j - 1] ? t[i - 1][j - 1] + 1
                                     : std::max(t[i - 1][j], t[i][j - 1]);
    }
  }
  return t[a.size()][b.size()];
}

std::size_t brute_force_select(const std::vector<std::vector<double>>& rewards,
                               const MoralProfile& c) {
  std::size_t best = 0;
  double best_score = -1.0;
  for (std::size_t i = 0; i < rewards.size(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < c.weights.size(); ++j) {
      s += rewards[i][j] * c.weights[j];
    }
    if (i == 0 || s > best_score) {
      best = i;
      best_score = s;
    }
  }
  return best;
}

TempDir::TempDir() {
  static std::atomic<unsigned> counter{0};
  const auto base = std::filesystem::temp_directory_path();
  const unsigned id = counter.fetch_add(1);
  auto dir = base / ("cmva_test_" + std::to_string(::getpid()) + "_" +
                     std::to_string(id));
  std::filesystem::create_directories(dir);
  path_ = dir.string();
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

std::vector<double> fd_gradient(
    const std::function<double(const std::vector<double>&)>& f,
    std::vector<double> x, double h) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = f(x);
    x[i] = keep - h;
    const double down = f(x);
    x[i] = keep;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

}  // namespace testsupport
