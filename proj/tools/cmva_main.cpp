// Operator CLI: data prep, reward/agent/aggregator training, evaluation
// tables, metric reports, one-shot aggregation, serving, and the end-to-end
// pipeline. Exit codes: 0 success, 1 usage error, 2 runtime failure.

#include <atomic>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "cmva/aggregator.hpp"
#include "cmva/dataset.hpp"
#include "cmva/gateway.hpp"
#include "cmva/metrics.hpp"
#include "cmva/pipeline.hpp"
#include "cmva/policy.hpp"
#include "cmva/ppo.hpp"
#include "cmva/rand.hpp"
#include "cmva/reward.hpp"
#include "cmva/types.hpp"
#include "json.hpp"

namespace {

using nlohmann::json;
using namespace cmva;

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FileNotFound(path);
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

std::vector<std::string> read_text_column(const std::string& path) {
  std::vector<std::string> out;
  std::size_t line_no = 0;
  for (const auto& line : read_lines(path)) {
    ++line_no;
    try {
      out.push_back(json::parse(line).at("text").get<std::string>());
    } catch (const json::exception& e) {
      throw MalformedRecord(line_no, e.what());
    }
  }
  return out;
}

std::vector<double> parse_profile(const std::string& csv) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw InvalidProfile("cannot parse weight '" + item + "'");
    }
  }
  return out;
}

MoralValue canonical_value(const std::string& name) {
  const auto& registry = ValueRegistry::canonical();
  const auto id = registry.id_of(name);
  if (!id) throw UnknownValue("no canonical value named '" + name + "'");
  return registry.value(*id);
}

std::string percent(double p) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%.2f%%", p * 100.0);
  return buf;
}

// data split --in --out [--value --train --val --test --seed]
struct DataSplitCmd {
  std::string in, out, value = "care";
  double train = 0.8, val = 0.1, test = 0.1;
  std::uint64_t seed = 42;
  bool as_json = false;

  void run() const {
    const MoralDataset data = load_moral_dataset(in, canonical_value(value));
    SplitSpec spec{train, val, test, seed};
    const auto [tr, va, te] = split_dataset(data.records, spec);
    std::filesystem::create_directories(out);
    const auto save = [&](const std::vector<MoralRecord>& records,
                          const std::string& name) {
      save_moral_dataset({data.value, records},
                         (std::filesystem::path(out) / name).string());
    };
    save(tr, "train.jsonl");
    save(va, "val.jsonl");
    save(te, "test.jsonl");
    if (as_json) {
      const json j = {{"train", tr.size()}, {"val", va.size()},
                      {"test", te.size()}, {"out", out}};
      std::cout << j.dump() << '\n';
    } else {
      std::cout << "split " << data.size() << " records -> " << tr.size()
                << " train, " << va.size() << " val, " << te.size()
                << " test in " << out << '\n';
    }
  }
};

// reward train --value --in --out [--lr --epochs --l2 --seed]
struct RewardTrainCmd {
  std::string value, in, out;
  TrainConfig config;
  bool as_json = false;

  void run() const {
    const MoralDataset data = load_moral_dataset(in, canonical_value(value));
    std::vector<double> history;
    const RewardModel model = train_classifier(data, config, &history);
    model.save(out);
    const double final_loss = history.empty() ? 0.0 : history.back();
    if (as_json) {
      const json j = {{"value", value},
                      {"records", data.size()},
                      {"epochs", config.epochs},
                      {"final_loss", final_loss},
                      {"out", out}};
      std::cout << j.dump() << '\n';
    } else {
      std::cout << "trained " << value << " reward model on " << data.size()
                << " records, final loss " << final_loss << " -> " << out
                << '\n';
    }
  }
};

// agent train --value --reward --prompts --out [--log --preset overrides]
struct AgentTrainCmd {
  std::string value, reward_path, prompts_path, out, log_path;
  std::string preset = "desk";
  int iterations = 0, batch = 0, epochs = 0;
  double lr = 0.0, clip = -1.0, kl = -1.0;
  std::uint64_t seed = 42;
  bool as_json = false;

  void run() const {
    PpoConfig config = PpoConfig::preset(preset);
    if (iterations > 0) config.iterations = iterations;
    if (batch > 0) config.batch_episodes = batch;
    if (epochs > 0) config.opt_epochs = epochs;
    if (lr > 0.0) config.lr = lr;
    if (clip >= 0.0) config.clip_epsilon = clip;
    if (kl >= 0.0) config.kl_coeff = kl;
    config.seed = seed;

    const RewardModel model = RewardModel::load(reward_path);
    if (model.value.name != value) {
      throw UnknownValue("reward model is for '" + model.value.name +
                         "', not '" + value + "'");
    }
    std::vector<TokenSequence> prompts;
    for (const auto& line : read_lines(prompts_path)) {
      prompts.push_back(encode_words(line, default_codebook()));
    }
    const Policy base = Policy::uniform(1, default_codebook(), 8);
    const AgentTrainResult result =
        train_moral_agent(base, model, prompts, config);
    result.agent.save(out);
    if (!log_path.empty()) {
      std::ofstream log(log_path);
      for (std::size_t it = 0; it < result.history.size(); ++it) {
        const json line = {{"iter", it},
                           {"mean_reward", result.history[it].mean_reward},
                           {"kl_to_ref", result.history[it].kl_to_ref},
                           {"loss", result.history[it].loss}};
        log << line.dump() << '\n';
      }
    }
    const double final_reward =
        result.history.empty() ? 0.0 : result.history.back().mean_reward;
    if (as_json) {
      const json j = {{"value", value},
                      {"iterations", config.iterations},
                      {"final_mean_reward", final_reward},
                      {"no_improvement", result.no_improvement},
                      {"out", out}};
      std::cout << j.dump() << '\n';
    } else {
      std::cout << "trained " << value << " agent, final batch mean reward "
                << final_reward << " -> " << out << '\n';
      if (result.no_improvement) {
        std::cout << "warning: expected reward did not improve over the base"
                  << '\n';
      }
    }
  }
};

// agent eval --agents --rewards --prompts [--samples --seed]
struct AgentEvalCmd {
  std::string agents_dir, rewards_dir, prompts_path;
  int samples = 8;
  std::uint64_t seed = 42;
  bool as_json = false;

  void run() const {
    const auto models = load_reward_models(rewards_dir);
    const auto agents = load_agents(agents_dir);
    const auto base_path =
        std::filesystem::path(agents_dir) / "base.json";
    const Policy base = std::filesystem::exists(base_path)
                            ? Policy::load(base_path.string())
                            : Policy::uniform(1, default_codebook(), 8);
    std::vector<TokenSequence> prompts;
    for (const auto& line : read_lines(prompts_path)) {
      prompts.push_back(encode_words(line, default_codebook()));
    }
    json rows = json::array();
    std::ostringstream table;
    table << "value        base    agent\n";
    for (std::size_t i = 0; i < models.size(); ++i) {
      const std::uint64_t eseed = rng::derive_seed(seed, 40 + i);
      const double base_p = evaluate_alignment_probability(
          base, prompts, models[i], samples, eseed);
      const double agent_p = evaluate_alignment_probability(
          agents[i].policy, prompts, models[i], samples, eseed);
      rows.push_back({{"value", models[i].value.name},
                      {"base", std::round(base_p * 10000.0) / 100.0},
                      {"agent", std::round(agent_p * 10000.0) / 100.0}});
      char line[64];
      std::snprintf(line, sizeof(line), "%-10s %7s  %7s\n",
                    models[i].value.name.c_str(), percent(base_p).c_str(),
                    percent(agent_p).c_str());
      table << line;
    }
    if (as_json) {
      const json j = {{"samples_per_prompt", samples}, {"rows", rows}};
      std::cout << j.dump() << '\n';
    } else {
      std::cout << table.str();
    }
  }
};

// aggregator train --data --out [--lr --epochs --val-fraction --seed]
struct AggregatorTrainCmd {
  std::string data_path, out;
  AggregatorTrainConfig config;
  bool as_json = false;

  void run() {
    const auto records =
        load_aggregation_dataset(data_path, ValueRegistry::canonical());
    config.vocab.words = default_codebook();
    const AggregatorTrainResult result = train_aggregator(records, config);
    result.model.save(out);
    const double first = result.loss_history.empty() ? 0.0
                                                     : result.loss_history.front();
    const double last =
        result.loss_history.empty() ? 0.0 : result.loss_history.back();
    if (as_json) {
      const json j = {{"records", records.size()},
                      {"epochs", config.epochs},
                      {"first_epoch_loss", first},
                      {"final_loss", last},
                      {"best_epoch", result.best_epoch},
                      {"out", out}};
      std::cout << j.dump() << '\n';
    } else {
      std::cout << "trained aggregator on " << records.size()
                << " records, mean per-token loss " << first << " -> " << last
                << " (best epoch " << result.best_epoch << ") -> " << out
                << '\n';
    }
  }
};

// aggregate --question --profile --agents --rewards [--strategy ...]
struct AggregateCmd {
  std::string question, profile_csv, strategy = "select";
  std::string agents_dir, rewards_dir, aggregator_path, external_url;
  std::uint64_t seed = 42;
  bool as_json = false;

  void run() const {
    const auto models = load_reward_models(rewards_dir);
    const auto agents = load_agents(agents_dir);
    const MoralProfile profile =
        validate_profile(parse_profile(profile_csv), models.size());
    const AggregationStrategy strat = parse_strategy(strategy);

    AgentAnswerSet set;
    set.question = question;
    const auto& registry = ValueRegistry::canonical();
    for (std::size_t i = 0; i < agents.size(); ++i) {
      const auto handler = make_agent_handler(agents[i].policy,
                                              rng::derive_seed(seed, 50 + i));
      const std::string answer = handler(question);
      set.answers.push_back(answer);
      set.rewards.push_back(reward_vector(models, answer, registry).scores);
    }

    AggregatorModel model;
    const AggregatorModel* model_ptr = nullptr;
    if (!aggregator_path.empty()) {
      model = AggregatorModel::load(aggregator_path, default_codebook());
      model_ptr = &model;
    }
    ExternalBackend external{external_url};
    const ExternalBackend* external_ptr =
        external_url.empty() ? nullptr : &external;

    const std::string answer =
        aggregate(strat, question, set, profile, model_ptr, external_ptr);
    if (as_json) {
      json entries = json::array();
      for (std::size_t i = 0; i < set.answers.size(); ++i) {
        entries.push_back({{"agent", models[i].value.name},
                           {"answer", set.answers[i]},
                           {"rewards", set.rewards[i]}});
      }
      const json j = {{"answer", answer},
                      {"strategy", strategy},
                      {"agent_answers", entries}};
      std::cout << j.dump() << '\n';
    } else {
      std::cout << answer << '\n';
    }
  }
};

// eval rouge --pred --ref
struct EvalRougeCmd {
  std::string pred_path, ref_path;
  bool as_json = false;

  void run() const {
    const auto preds = read_text_column(pred_path);
    const auto refs = read_text_column(ref_path);
    if (preds.size() != refs.size()) {
      throw LengthMismatch(std::to_string(preds.size()) + " predictions vs " +
                           std::to_string(refs.size()) + " references");
    }
    if (preds.empty()) throw EmptyDataset("no prediction/reference pairs");
    std::vector<RougeResult> results;
    results.reserve(preds.size());
    for (std::size_t i = 0; i < preds.size(); ++i) {
      results.push_back(rouge(preds[i], refs[i]));
    }
    const RougeReport report = aggregate_rouge(results);
    if (as_json) {
      const json j = {{"rouge1", report.rouge1},
                      {"rouge2", report.rouge2},
                      {"rougeL", report.rougeL},
                      {"rougeLsum", report.rougeLsum},
                      {"count", report.count}};
      std::cout << j.dump() << '\n';
    } else {
      std::printf("rouge1    %.4f\nrouge2    %.4f\nrougeL    %.4f\n"
                  "rougeLsum %.4f\ncount     %zu\n",
                  report.rouge1, report.rouge2, report.rougeL,
                  report.rougeLsum, report.count);
    }
  }
};

// align --a --b --rewards --prompts [--seed]
struct AlignCmd {
  std::string a_path, b_path, rewards_dir, prompts_path;
  std::uint64_t seed = 42;
  bool as_json = false;

  void run() const {
    const auto models = load_reward_models(rewards_dir);
    const MoralAgent a = MoralAgent::load(a_path);
    const MoralAgent b = MoralAgent::load(b_path);
    const auto prompts = read_lines(prompts_path);
    const auto classifiers = make_reward_classifiers(models);
    AlignmentStats stats;
    const double score = alignment_score(
        make_policy_generator(a.policy), make_policy_generator(b.policy),
        prompts, classifiers, seed, {}, &stats);
    if (as_json) {
      const json j = {{"alignment", score},
                      {"compared", stats.compared},
                      {"skipped", stats.skipped}};
      std::cout << j.dump() << '\n';
    } else {
      std::cout << "alignment " << score << " over " << stats.compared
                << " prompts (" << stats.skipped << " skipped)\n";
    }
  }
};

// serve --config | (--agents --rewards [--port --strategy --aggregator])
struct ServeCmd {
  std::string config_path, agents_dir, rewards_dir, aggregator_path;
  std::string strategy = "select";
  int port = 8080;
  std::uint64_t seed = 42;

  void run() const {
    std::string agents = agents_dir, rewards = rewards_dir,
                aggregator = aggregator_path, strat = strategy;
    GatewayConfig gw;
    gw.port = port;
    int timeout_ms = 2000;
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      if (!in) throw FileNotFound(config_path);
      const json j = json::parse(in);
      gw.port = j.value("port", gw.port);
      gw.host = j.value("host", gw.host);
      strat = j.value("strategy", strat);
      agents = j.value("agents_dir", agents);
      rewards = j.value("rewards_dir", rewards);
      aggregator = j.value("aggregator", aggregator);
      timeout_ms = j.value("timeout_ms", timeout_ms);
    }
    if (agents.empty() || rewards.empty()) {
      throw FileNotFound("serve needs agents and rewards directories");
    }
    const auto models = load_reward_models(rewards);
    const auto loaded = load_agents(agents);
    BackendRegistry registry;
    for (std::size_t i = 0; i < loaded.size(); ++i) {
      BackendDescriptor d;
      d.id = loaded[i].value.name;
      d.value = loaded[i].value;
      d.kind = BackendKind::kInProcess;
      d.timeout_ms = timeout_ms;
      d.handler = make_agent_handler(loaded[i].policy,
                                     rng::derive_seed(seed, 50 + i));
      registry.add(std::move(d));
    }
    gw.default_strategy = strat;
    GatewayServer server(std::move(registry), models, gw);
    if (!aggregator.empty()) {
      server.set_aggregator(
          AggregatorModel::load(aggregator, default_codebook()));
    }
    if (!server.start()) {
      throw StageFailure("serve: cannot bind " + gw.host + ":" +
                         std::to_string(gw.port));
    }
    std::cout << "listening on " << gw.host << ":" << server.port() << '\n';
    for (;;) std::this_thread::sleep_for(std::chrono::seconds(1));
  }
};

// pipeline --config
struct PipelineCmd {
  std::string config_path;
  bool as_json = false;

  void run() const {
    const PipelineResult result = run_pipeline_file(config_path);
    if (as_json) {
      json stages = json::array();
      for (const auto& s : result.stages) {
        stages.push_back({{"name", s.name}, {"skipped", s.skipped}});
      }
      const json j = {{"run_dir", result.run_dir}, {"stages", stages}};
      std::cout << j.dump() << '\n';
    } else {
      std::cout << "run dir: " << result.run_dir << '\n';
      for (const auto& s : result.stages) {
        std::cout << "  " << s.name << (s.skipped ? " (up to date)" : " (ran)")
                  << '\n';
      }
    }
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"contextual moral-value alignment toolkit"};
  app.require_subcommand(1);

  DataSplitCmd data_split;
  auto* data = app.add_subcommand("data", "dataset utilities");
  data->require_subcommand(1);
  auto* split = data->add_subcommand("split", "seeded train/val/test split");
  split->add_option("--in", data_split.in, "labeled JSONL corpus")->required();
  split->add_option("--out", data_split.out, "output directory")->required();
  split->add_option("--value", data_split.value, "moral value tag");
  split->add_option("--train", data_split.train, "train fraction");
  split->add_option("--val", data_split.val, "val fraction");
  split->add_option("--test", data_split.test, "test fraction");
  split->add_option("--seed", data_split.seed, "shuffle seed");
  split->add_flag("--json", data_split.as_json, "machine-readable output");
  split->callback([&] { data_split.run(); });

  RewardTrainCmd reward_train;
  auto* reward_cmd = app.add_subcommand("reward", "reward model commands");
  reward_cmd->require_subcommand(1);
  auto* rtrain = reward_cmd->add_subcommand("train", "train one value's model");
  rtrain->add_option("--value", reward_train.value, "canonical value name")
      ->required();
  rtrain->add_option("--in", reward_train.in, "labeled JSONL corpus")
      ->required();
  rtrain->add_option("--out", reward_train.out, "checkpoint path")->required();
  rtrain->add_option("--lr", reward_train.config.lr, "learning rate");
  rtrain->add_option("--epochs", reward_train.config.epochs, "epochs");
  rtrain->add_option("--l2", reward_train.config.l2, "l2 penalty");
  rtrain->add_option("--seed", reward_train.config.seed, "seed");
  rtrain->add_flag("--json", reward_train.as_json, "machine-readable output");
  rtrain->callback([&] { reward_train.run(); });

  AgentTrainCmd agent_train;
  AgentEvalCmd agent_eval;
  auto* agent_cmd = app.add_subcommand("agent", "moral agent commands");
  agent_cmd->require_subcommand(1);
  auto* atrain = agent_cmd->add_subcommand("train", "RL fine-tune one agent");
  atrain->add_option("--value", agent_train.value, "canonical value name")
      ->required();
  atrain->add_option("--reward", agent_train.reward_path, "reward checkpoint")
      ->required();
  atrain->add_option("--prompts", agent_train.prompts_path,
                     "prompt file, one per line")
      ->required();
  atrain->add_option("--out", agent_train.out, "agent checkpoint path")
      ->required();
  atrain->add_option("--log", agent_train.log_path, "training log JSONL");
  atrain->add_option("--preset", agent_train.preset, "desk or paper-12b");
  atrain->add_option("--iterations", agent_train.iterations, "override");
  atrain->add_option("--batch", agent_train.batch, "override batch episodes");
  atrain->add_option("--epochs", agent_train.epochs, "override opt epochs");
  atrain->add_option("--lr", agent_train.lr, "override learning rate");
  atrain->add_option("--clip", agent_train.clip, "override clip epsilon");
  atrain->add_option("--kl", agent_train.kl, "override kl coefficient");
  atrain->add_option("--seed", agent_train.seed, "seed");
  atrain->add_flag("--json", agent_train.as_json, "machine-readable output");
  atrain->callback([&] { agent_train.run(); });

  auto* aeval = agent_cmd->add_subcommand(
      "eval", "per-value conformance table, base vs agents");
  aeval->add_option("--agents", agent_eval.agents_dir, "agent checkpoints dir")
      ->required();
  aeval->add_option("--rewards", agent_eval.rewards_dir,
                    "reward checkpoints dir")
      ->required();
  aeval->add_option("--prompts", agent_eval.prompts_path, "eval prompts file")
      ->required();
  aeval->add_option("--samples", agent_eval.samples, "samples per prompt");
  aeval->add_option("--seed", agent_eval.seed, "seed");
  aeval->add_flag("--json", agent_eval.as_json, "machine-readable output");
  aeval->callback([&] { agent_eval.run(); });

  AggregatorTrainCmd aggregator_train;
  auto* agg_cmd = app.add_subcommand("aggregator", "aggregator commands");
  agg_cmd->require_subcommand(1);
  auto* gtrain = agg_cmd->add_subcommand("train", "train the learned strategy");
  gtrain->add_option("--data", aggregator_train.data_path,
                     "aggregation JSONL corpus")
      ->required();
  gtrain->add_option("--out", aggregator_train.out, "checkpoint path")
      ->required();
  gtrain->add_option("--lr", aggregator_train.config.lr, "Adam step size");
  gtrain->add_option("--epochs", aggregator_train.config.epochs, "epochs");
  gtrain->add_option("--val-fraction", aggregator_train.config.val_fraction,
                     "holdout fraction");
  gtrain->add_option("--seed", aggregator_train.config.seed, "seed");
  gtrain->add_flag("--json", aggregator_train.as_json,
                   "machine-readable output");
  gtrain->callback([&] { aggregator_train.run(); });

  AggregateCmd aggregate_cmd;
  auto* agg = app.add_subcommand(
      "aggregate", "answer one question under a moral profile");
  agg->add_option("--question", aggregate_cmd.question, "question text")
      ->required();
  agg->add_option("--profile", aggregate_cmd.profile_csv,
                  "comma-separated weights in [0,1]")
      ->required();
  agg->add_option("--strategy", aggregate_cmd.strategy,
                  "select | learned | external");
  agg->add_option("--agents", aggregate_cmd.agents_dir, "agent checkpoints dir")
      ->required();
  agg->add_option("--rewards", aggregate_cmd.rewards_dir,
                  "reward checkpoints dir")
      ->required();
  agg->add_option("--aggregator", aggregate_cmd.aggregator_path,
                  "learned-strategy checkpoint");
  agg->add_option("--external", aggregate_cmd.external_url,
                  "external backend URL");
  agg->add_option("--seed", aggregate_cmd.seed, "seed");
  agg->add_flag("--json", aggregate_cmd.as_json, "machine-readable output");
  agg->callback([&] { aggregate_cmd.run(); });

  EvalRougeCmd eval_rouge;
  auto* eval_cmd = app.add_subcommand("eval", "metric reports");
  eval_cmd->require_subcommand(1);
  auto* erouge = eval_cmd->add_subcommand(
      "rouge", "corpus ROUGE between prediction and reference JSONL");
  erouge->add_option("--pred", eval_rouge.pred_path, "predictions JSONL")
      ->required();
  erouge->add_option("--ref", eval_rouge.ref_path, "references JSONL")
      ->required();
  erouge->add_flag("--json", eval_rouge.as_json, "machine-readable output");
  erouge->callback([&] { eval_rouge.run(); });

  AlignCmd align;
  auto* al = app.add_subcommand(
      "align", "alignment score between two agent checkpoints");
  al->add_option("--a", align.a_path, "first agent checkpoint")->required();
  al->add_option("--b", align.b_path, "second agent checkpoint")->required();
  al->add_option("--rewards", align.rewards_dir, "reward checkpoints dir")
      ->required();
  al->add_option("--prompts", align.prompts_path, "prompt file, one per line")
      ->required();
  al->add_option("--seed", align.seed, "seed");
  al->add_flag("--json", align.as_json, "machine-readable output");
  al->callback([&] { align.run(); });

  ServeCmd serve;
  auto* sv = app.add_subcommand("serve", "run the HTTP gateway");
  sv->add_option("--config", serve.config_path, "gateway config JSON");
  sv->add_option("--agents", serve.agents_dir, "agent checkpoints dir");
  sv->add_option("--rewards", serve.rewards_dir, "reward checkpoints dir");
  sv->add_option("--aggregator", serve.aggregator_path,
                 "learned-strategy checkpoint");
  sv->add_option("--strategy", serve.strategy, "default strategy");
  sv->add_option("--port", serve.port, "listen port");
  sv->add_option("--seed", serve.seed, "agent sampling seed base");
  sv->callback([&] { serve.run(); });

  PipelineCmd pipeline;
  auto* pl = app.add_subcommand(
      "pipeline", "run the end-to-end training pipeline");
  pl->add_option("--config", pipeline.config_path, "pipeline config JSON")
      ->required();
  pl->add_flag("--json", pipeline.as_json, "machine-readable output");
  pl->callback([&] { pipeline.run(); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const Error& e) {
    const json err = {{"error", e.kind()}, {"message", e.what()}};
    std::cerr << err.dump() << '\n';
    return 2;
  } catch (const std::exception& e) {
    const json err = {{"error", "Internal"}, {"message", e.what()}};
    std::cerr << err.dump() << '\n';
    return 2;
  }
  return 0;
}
