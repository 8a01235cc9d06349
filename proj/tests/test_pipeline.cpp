#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "cmva/pipeline.hpp"
#include "doctest.h"
#include "json.hpp"
#include "support.hpp"

using namespace cmva;
using nlohmann::json;
using testsupport::TempDir;

namespace fs = std::filesystem;

namespace {

// Writes the five toy datasets and returns a small, fast pipeline config.
PipelineConfig tiny_config(const TempDir& data_dir, const std::string& run_id,
                           std::uint64_t seed = 42) {
  PipelineConfig config;
  config.run_id = run_id;
  config.seed = seed;
  const auto& registry = ValueRegistry::canonical();
  for (int v = 0; v < 5; ++v) {
    auto data = testsupport::toy_dataset(v, 25, 1000 + static_cast<std::uint64_t>(v));
    const auto path = data_dir.file(registry.name(v) + ".jsonl");
    save_moral_dataset(data, path);
    config.datasets.emplace_back(registry.name(v), path);
  }
  config.prompts = testsupport::toy_prompt_texts(10);
  config.eval_fraction = 0.2;
  config.samples_per_prompt = 4;
  config.profiles_per_question = 2;
  config.reward.epochs = 60;
  config.ppo.iterations = 6;
  config.ppo.batch_episodes = 16;
  config.aggregator.epochs = 2;
  config.aggregator.architecture.embedding_dim = 6;
  config.aggregator.architecture.hidden_dim = 8;
  return config;
}

// Every file under root, keyed by relative path, with full contents.
std::map<std::string, std::string> snapshot(const std::string& root) {
  std::map<std::string, std::string> out;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (!entry.is_regular_file()) continue;
    std::ifstream in(entry.path(), std::ios::binary);
    std::string body((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
    out[fs::relative(entry.path(), root).string()] = std::move(body);
  }
  return out;
}

struct HomeGuard {
  explicit HomeGuard(const std::string& dir) { setenv("CMVA_HOME", dir.c_str(), 1); }
  ~HomeGuard() { unsetenv("CMVA_HOME"); }
};

}  // namespace

TEST_CASE("config json parsing fills defaults and validates") {
  TempDir data;
  auto base = tiny_config(data, "parse-check");

  json j;
  j["run_id"] = "from-json";
  json ds;
  for (const auto& [name, path] : base.datasets) ds[name] = path;
  j["datasets"] = ds;
  j["prompts"] = base.prompts;
  j["seed"] = 7;
  j["ppo"] = {{"preset", "desk"}, {"iterations", 3}};
  j["reward"] = {{"epochs", 10}};

  auto config = PipelineConfig::from_json(j.dump());
  CHECK(config.run_id == "from-json");
  CHECK(config.seed == 7);
  CHECK(config.datasets.size() == 5);
  CHECK(config.datasets[0].first == "care");
  CHECK(config.prompts == base.prompts);
  CHECK(config.ppo.iterations == 3);
  CHECK(config.ppo.batch_episodes == 64);  // desk preset
  CHECK(config.reward.epochs == 10);

  json missing = j;
  missing.erase("datasets");
  CHECK_THROWS_AS(PipelineConfig::from_json(missing.dump()), StageFailure);

  json bad_ds = j;
  bad_ds["datasets"] = {{"care", data.file("care.jsonl")}};
  CHECK_THROWS_AS(PipelineConfig::from_json(bad_ds.dump()), StageFailure);

  json no_prompts = j;
  no_prompts["prompts"] = json::array();
  CHECK_THROWS_AS(PipelineConfig::from_json(no_prompts.dump()), StageFailure);
}

TEST_CASE("config hash is stable and sensitive") {
  TempDir data;
  auto a = tiny_config(data, "hash-check");
  auto b = a;
  CHECK(a.config_hash() == b.config_hash());
  CHECK(a.config_hash().size() == 16);
  b.seed += 1;
  CHECK(a.config_hash() != b.config_hash());
  auto c = a;
  c.ppo.iterations += 1;
  CHECK(a.config_hash() != c.config_hash());
}

TEST_CASE("runs_root honors CMVA_HOME") {
  {
    HomeGuard guard("/tmp/cmva-home-probe");
    CHECK(runs_root() == "/tmp/cmva-home-probe");
  }
  CHECK(runs_root() == "runs");
}

TEST_CASE("agent handlers answer identical questions identically") {
  auto policy = Policy::uniform(1, default_codebook(), 5);
  auto handler = make_agent_handler(policy, 99);
  const auto a = handler("care harm the");
  CHECK(handler("care harm the") == a);
  // Unknown words are dropped rather than fatal; an all-unknown question
  // still yields a deterministic answer.
  CHECK_NOTHROW(handler("xylophone quartz"));
  CHECK(handler("xylophone quartz") == handler("xylophone quartz"));
  // Different questions reseed the sampler.
  CHECK(handler("loyal team") == handler("loyal team"));
}

TEST_CASE("the pipeline produces a complete, resumable, reproducible run") {
  TempDir data;
  TempDir home_a;
  auto config = tiny_config(data, "toy-run");

  std::map<std::string, std::string> first, second;
  std::vector<StageStatus> first_stages, second_stages;

  {
    HomeGuard guard(home_a.path());
    auto result = run_pipeline(config);
    CHECK(result.run_dir == home_a.path() + "/toy-run");
    REQUIRE(result.stages.size() == 5);
    first_stages = result.stages;
    for (const auto& s : result.stages) CHECK_FALSE(s.skipped);

    // Expected artifact tree.
    CHECK(fs::exists(result.run_dir + "/rewards/care.json"));
    CHECK(fs::exists(result.run_dir + "/rewards/sanctity.json"));
    CHECK(fs::exists(result.run_dir + "/rewards/manifest.json"));
    CHECK(fs::exists(result.run_dir + "/agents/base.json"));
    CHECK(fs::exists(result.run_dir + "/agents/care.json"));
    CHECK(fs::exists(result.run_dir + "/agents/care_log.jsonl"));
    CHECK(fs::exists(result.run_dir + "/agents/manifest.json"));
    CHECK(fs::exists(result.run_dir + "/aggregator/train.jsonl"));
    CHECK(fs::exists(result.run_dir + "/aggregator/model.json"));
    CHECK(fs::exists(result.run_dir + "/reports/agent_eval.json"));
    CHECK(fs::exists(result.run_dir + "/reports/agent_eval.txt"));
    CHECK(fs::exists(result.run_dir + "/reports/rouge_select.json"));
    CHECK(fs::exists(result.run_dir + "/reports/rouge_learned.json"));

    // Manifests carry the config hash.
    std::ifstream in(result.run_dir + "/rewards/manifest.json");
    auto manifest = json::parse(in);
    CHECK(manifest["config_hash"] == config.config_hash());

    // Training logs are one JSON object per iteration.
    std::ifstream log(result.run_dir + "/agents/care_log.jsonl");
    std::string line;
    std::size_t lines = 0;
    while (std::getline(log, line)) {
      auto entry = json::parse(line);
      CHECK(entry.contains("iter"));
      CHECK(entry.contains("mean_reward"));
      CHECK(entry.contains("kl_to_ref"));
      CHECK(entry.contains("loss"));
      ++lines;
    }
    CHECK(lines == static_cast<std::size_t>(config.ppo.iterations));

    // The evaluation table follows the percentage layout.
    auto eval = json::parse(std::ifstream(result.run_dir +
                                          "/reports/agent_eval.json"));
    REQUIRE(eval["rows"].size() == 5);
    for (const auto& row : eval["rows"]) {
      CHECK(row.contains("value"));
      CHECK(row.contains("base"));
      CHECK(row.contains("agent"));
    }

    // Loaders read back what the run wrote.
    auto models = load_reward_models(result.run_dir + "/rewards");
    CHECK(models.size() == 5);
    CHECK(models[2].value.name == "loyalty");
    auto agents = load_agents(result.run_dir + "/agents");
    CHECK(agents.size() == 5);
    CHECK(agents[4].value.name == "sanctity");

    // Rerun in place: every stage is skipped, artifacts untouched.
    auto before = snapshot(result.run_dir);
    auto rerun = run_pipeline(config);
    for (const auto& s : rerun.stages) CHECK(s.skipped);
    CHECK(snapshot(result.run_dir) == before);

    first = before;
  }

  // A fresh home with the same config reproduces every artifact bit for bit.
  TempDir home_b;
  {
    HomeGuard guard(home_b.path());
    auto result = run_pipeline(config);
    second = snapshot(result.run_dir);
    second_stages = result.stages;
  }
  CHECK(first == second);

  // A different seed changes the artifacts.
  TempDir home_c;
  {
    HomeGuard guard(home_c.path());
    auto shifted = config;
    shifted.seed = 43;
    auto result = run_pipeline(shifted);
    auto third = snapshot(result.run_dir);
    CHECK(third != first);
  }
}

TEST_CASE("a missing dataset fails the rewards stage") {
  TempDir data;
  TempDir home;
  HomeGuard guard(home.path());
  auto config = tiny_config(data, "broken-run");
  config.datasets[3].second = data.file("does-not-exist.jsonl");
  CHECK_THROWS_AS(run_pipeline(config), StageFailure);
}

TEST_CASE("the command line binary maps errors to exit codes") {
  // 0 on success, 1 on usage errors, 2 on structured failures.
  const std::string cli = CMVA_CLI_PATH;
  auto run = [&](const std::string& args) {
    const int raw = std::system((cli + " " + args + " >/dev/null 2>&1").c_str());
    return WEXITSTATUS(raw);
  };
  CHECK(run("--help") == 0);
  CHECK(run("--definitely-not-a-flag") == 1);
  CHECK(run("data split --in /nonexistent.jsonl --value care --out /tmp") ==
        2);

  TempDir tmp;
  {
    std::ofstream pred(tmp.file("pred.txt"));
    pred << "{\"text\": \"the cat sat on the mat\"}\n";
    std::ofstream ref(tmp.file("ref.txt"));
    ref << "{\"text\": \"the cat is on the mat\"}\n";
  }
  CHECK(run("eval rouge --pred " + tmp.file("pred.txt") + " --ref " +
            tmp.file("ref.txt")) == 0);

  // The structured error lands on stderr as one JSON object.
  const auto err_file = tmp.file("stderr.json");
  const int raw =
      std::system((cli + " data split --in /nonexistent.jsonl --value care"
                         " --out " +
                   tmp.path() + " 2> " + err_file + " >/dev/null")
                      .c_str());
  CHECK(WEXITSTATUS(raw) == 2);
  auto err = json::parse(std::ifstream(err_file));
  CHECK(err["error"] == "FileNotFound");
  CHECK(err.contains("message"));
}
