#include "cmva/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "cmva/dataset.hpp"
#include "cmva/metrics.hpp"
#include "cmva/rand.hpp"
#include "json.hpp"

namespace cmva {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FileNotFound(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw FileNotFound("cannot write " + path);
  out << text;
}

json ppo_json(const PpoConfig& c) {
  return {{"iterations", c.iterations},
          {"batch_episodes", c.batch_episodes},
          {"opt_epochs", c.opt_epochs},
          {"lr", c.lr},
          {"clip_epsilon", c.clip_epsilon},
          {"kl_coeff", c.kl_coeff},
          {"max_grad_norm", c.max_grad_norm}};
}

PpoConfig ppo_from_json(const json& j) {
  PpoConfig c = j.contains("preset")
                    ? PpoConfig::preset(j.at("preset").get<std::string>())
                    : PpoConfig{};
  c.iterations = j.value("iterations", c.iterations);
  c.batch_episodes = j.value("batch_episodes", c.batch_episodes);
  c.opt_epochs = j.value("opt_epochs", c.opt_epochs);
  c.lr = j.value("lr", c.lr);
  c.clip_epsilon = j.value("clip_epsilon", c.clip_epsilon);
  c.kl_coeff = j.value("kl_coeff", c.kl_coeff);
  c.max_grad_norm = j.value("max_grad_norm", c.max_grad_norm);
  return c;
}

}  // namespace

PipelineConfig PipelineConfig::from_json(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw StageFailure(std::string("config: ") + e.what());
  }
  try {
    PipelineConfig c;
    c.run_id = j.at("run_id").get<std::string>();
    if (c.run_id.empty() || c.run_id.find('/') != std::string::npos ||
        c.run_id.find("..") != std::string::npos) {
      throw OutOfRange("run_id must be a plain directory name");
    }
    c.seed = j.value("seed", std::uint64_t{42});
    const auto& registry = ValueRegistry::canonical();
    const json& ds = j.at("datasets");
    for (const auto& name : registry.names()) {
      if (!ds.contains(name)) {
        throw OutOfRange("datasets is missing value '" + name + "'");
      }
      c.datasets.emplace_back(name, ds.at(name).get<std::string>());
    }
    if (j.contains("prompts")) {
      c.prompts = j.at("prompts").get<std::vector<std::string>>();
    } else if (j.contains("prompts_file")) {
      std::istringstream in(read_file(j.at("prompts_file")));
      for (std::string line; std::getline(in, line);) {
        if (!line.empty()) c.prompts.push_back(line);
      }
    } else {
      throw OutOfRange("config needs prompts or prompts_file");
    }
    // Held-out evaluation needs distinct prompts; keep first occurrences.
    std::vector<std::string> unique;
    for (auto& p : c.prompts) {
      if (std::find(unique.begin(), unique.end(), p) == unique.end()) {
        unique.push_back(std::move(p));
      }
    }
    c.prompts = std::move(unique);
    if (c.prompts.size() < 2) {
      throw OutOfRange("need at least 2 distinct prompts");
    }
    c.eval_fraction = j.value("eval_fraction", 0.2);
    if (c.eval_fraction < 0.0 || c.eval_fraction > 0.9) {
      throw OutOfRange("eval_fraction outside [0, 0.9]");
    }
    c.samples_per_prompt = j.value("samples_per_prompt", 8);
    c.profiles_per_question = j.value("profiles_per_question", 2);
    if (c.samples_per_prompt < 1 || c.profiles_per_question < 1) {
      throw OutOfRange("samples_per_prompt and profiles_per_question >= 1");
    }
    if (j.contains("reward")) {
      const json& r = j.at("reward");
      c.reward.lr = r.value("lr", c.reward.lr);
      c.reward.epochs = r.value("epochs", c.reward.epochs);
      c.reward.l2 = r.value("l2", c.reward.l2);
    }
    if (j.contains("ppo")) c.ppo = ppo_from_json(j.at("ppo"));
    if (j.contains("aggregator")) {
      const json& a = j.at("aggregator");
      c.aggregator.lr = a.value("lr", c.aggregator.lr);
      c.aggregator.epochs = a.value("epochs", c.aggregator.epochs);
      c.aggregator.val_fraction =
          a.value("val_fraction", c.aggregator.val_fraction);
      c.aggregator.max_grad_norm =
          a.value("max_grad_norm", c.aggregator.max_grad_norm);
      auto& arch = c.aggregator.architecture;
      arch.embedding_dim = a.value("embedding_dim", arch.embedding_dim);
      arch.hidden_dim = a.value("hidden_dim", arch.hidden_dim);
      arch.context_window = a.value("context_window", arch.context_window);
      c.aggregator.vocab.bucket_count =
          a.value("bucket_count", c.aggregator.vocab.bucket_count);
    }
    c.ppo.validate();
    return c;
  } catch (const json::exception& e) {
    throw StageFailure(std::string("config: ") + e.what());
  } catch (const Error& e) {
    if (e.kind() == "StageFailure") throw;
    throw StageFailure(std::string("config: ") + e.what());
  }
}

PipelineConfig PipelineConfig::load(const std::string& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const Error& e) {
    throw StageFailure(std::string("config: ") + e.what());
  }
  return from_json(text);
}

std::string PipelineConfig::canonical_json() const {
  json ds = json::object();
  for (const auto& [name, path] : datasets) ds[name] = path;
  json j = {{"run_id", run_id},
            {"seed", seed},
            {"datasets", std::move(ds)},
            {"prompts", prompts},
            {"eval_fraction", eval_fraction},
            {"samples_per_prompt", samples_per_prompt},
            {"profiles_per_question", profiles_per_question},
            {"reward",
             {{"lr", reward.lr}, {"epochs", reward.epochs}, {"l2", reward.l2}}},
            {"ppo", ppo_json(ppo)},
            {"aggregator",
             {{"lr", aggregator.lr},
              {"epochs", aggregator.epochs},
              {"val_fraction", aggregator.val_fraction},
              {"max_grad_norm", aggregator.max_grad_norm},
              {"embedding_dim", aggregator.architecture.embedding_dim},
              {"hidden_dim", aggregator.architecture.hidden_dim},
              {"context_window", aggregator.architecture.context_window},
              {"bucket_count", aggregator.vocab.bucket_count}}}};
  return j.dump();
}

std::string PipelineConfig::config_hash() const {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(
                    detail::fnv1a64(canonical_json(), 0)));
  return buf;
}

std::string runs_root() {
  if (const char* home = std::getenv("CMVA_HOME"); home && *home) {
    return home;
  }
  return "runs";
}

std::vector<RewardModel> load_reward_models(const std::string& dir) {
  std::vector<RewardModel> out;
  for (const auto& name : ValueRegistry::canonical().names()) {
    out.push_back(RewardModel::load((fs::path(dir) / (name + ".json")).string()));
  }
  return out;
}

std::vector<MoralAgent> load_agents(const std::string& dir) {
  std::vector<MoralAgent> out;
  for (const auto& name : ValueRegistry::canonical().names()) {
    out.push_back(MoralAgent::load((fs::path(dir) / (name + ".json")).string()));
  }
  return out;
}

std::function<std::string(const std::string&)> make_agent_handler(
    Policy policy, std::uint64_t seed_base) {
  std::map<std::string, int32_t> index;
  for (std::size_t i = 0; i < policy.vocab.size(); ++i) {
    index[policy.vocab[i]] = static_cast<int32_t>(i);
  }
  return [policy = std::move(policy), index = std::move(index),
          seed_base](const std::string& question) {
    TokenSequence tokens;
    for (const auto& word : tokenize(question)) {
      if (const auto it = index.find(word); it != index.end()) {
        tokens.push_back(it->second);
      }
    }
    const std::uint64_t seed =
        rng::derive_seed(seed_base, detail::fnv1a64(question, 0));
    const Rollout r = sample_response(policy, tokens, seed);
    return decode_tokens(r.response, policy.vocab);
  };
}

namespace {

struct StageContext {
  const PipelineConfig& config;
  fs::path run_dir;
  std::string hash;

  bool done(const std::string& stage,
            const std::vector<std::string>& outputs) const {
    const fs::path manifest = run_dir / stage / "manifest.json";
    if (!fs::exists(manifest)) return false;
    try {
      const json j = json::parse(read_file(manifest.string()));
      if (j.at("config_hash").get<std::string>() != hash) return false;
    } catch (...) {
      return false;
    }
    for (const auto& o : outputs) {
      if (!fs::exists(run_dir / stage / o)) return false;
    }
    return true;
  }

  void finish(const std::string& stage,
              const std::vector<std::string>& outputs) const {
    json j = {{"config_hash", hash}, {"stage", stage}, {"outputs", outputs}};
    write_file((run_dir / stage / "manifest.json").string(), j.dump() + "\n");
  }

  std::string path(const std::string& stage, const std::string& file) const {
    return (run_dir / stage / file).string();
  }
};

[[noreturn]] void stage_failed(const std::string& stage,
                               const std::exception& e) {
  throw StageFailure(stage + ": " + e.what());
}

std::string format_percent(double probability) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%.2f%%", probability * 100.0);
  return buf;
}

double percent2(double probability) {
  return std::round(probability * 10000.0) / 100.0;
}

void write_rouge_report(const StageContext& ctx, const std::string& file,
                        const std::string& strategy,
                        const RougeReport& report) {
  json j = {{"config_hash", ctx.hash},  {"strategy", strategy},
            {"rouge1", report.rouge1},  {"rouge2", report.rouge2},
            {"rougeL", report.rougeL},  {"rougeLsum", report.rougeLsum},
            {"count", report.count}};
  write_file(ctx.path("reports", file), j.dump() + "\n");
}

}  // namespace

PipelineResult run_pipeline(const PipelineConfig& config) {
  const auto& registry = ValueRegistry::canonical();
  const std::size_t n = registry.size();

  // Stage 0: the config must point at real corpora before anything runs.
  for (const auto& [name, path] : config.datasets) {
    if (!fs::exists(path)) {
      throw StageFailure("config: dataset for '" + name + "' not found: " +
                         path);
    }
  }

  StageContext ctx{config, fs::path(runs_root()) / config.run_id,
                   config.config_hash()};
  for (const char* sub : {"rewards", "agents", "aggregator", "reports"}) {
    fs::create_directories(ctx.run_dir / sub);
  }
  write_file((ctx.run_dir / "config.json").string(),
             config.canonical_json() + "\n");

  PipelineResult result;
  result.run_dir = ctx.run_dir.string();

  // Prompt split shared by training and held-out evaluation.
  const auto& codebook = default_codebook();
  std::vector<TokenSequence> all_tokens;
  for (const auto& p : config.prompts) {
    all_tokens.push_back(encode_words(p, codebook));
  }
  const auto order =
      rng::shuffled_indices(config.prompts.size(), rng::derive_seed(config.seed, 1));
  std::size_t eval_count = static_cast<std::size_t>(std::floor(
      config.eval_fraction * static_cast<double>(config.prompts.size()) + 0.5));
  eval_count = std::min(eval_count, config.prompts.size() - 1);
  if (config.eval_fraction > 0.0) eval_count = std::max<std::size_t>(eval_count, 1);
  std::vector<std::size_t> train_q, eval_q;
  for (std::size_t i = 0; i < order.size(); ++i) {
    (i < order.size() - eval_count ? train_q : eval_q).push_back(order[i]);
  }
  std::vector<TokenSequence> train_tokens, eval_tokens;
  for (auto i : train_q) train_tokens.push_back(all_tokens[i]);
  for (auto i : eval_q) eval_tokens.push_back(all_tokens[i]);

  // Stage 1: one reward model per value.
  std::vector<std::string> reward_files;
  for (const auto& [name, path] : config.datasets) {
    reward_files.push_back(name + ".json");
  }
  {
    const bool skipped = ctx.done("rewards", reward_files);
    if (!skipped) {
      try {
        for (std::size_t i = 0; i < n; ++i) {
          const auto& [name, path] = config.datasets[i];
          const MoralDataset data =
              load_moral_dataset(path, registry.value(static_cast<int>(i)));
          TrainConfig tc = config.reward;
          tc.seed = rng::derive_seed(config.seed, 10 + i);
          const RewardModel model = train_classifier(data, tc);
          model.save(ctx.path("rewards", name + ".json"));
        }
        ctx.finish("rewards", reward_files);
      } catch (const std::exception& e) {
        stage_failed("rewards", e);
      }
    }
    result.stages.push_back({"rewards", skipped});
  }
  const std::vector<RewardModel> models =
      load_reward_models((ctx.run_dir / "rewards").string());

  // Stage 2: RL fine-tuning, one agent per value from a shared base.
  std::vector<std::string> agent_files = {"base.json"};
  for (const auto& [name, path] : config.datasets) {
    agent_files.push_back(name + ".json");
    agent_files.push_back(name + "_log.jsonl");
  }
  {
    const bool skipped = ctx.done("agents", agent_files);
    if (!skipped) {
      try {
        const Policy base = Policy::uniform(1, codebook, 8);
        base.save(ctx.path("agents", "base.json"));
        for (std::size_t i = 0; i < n; ++i) {
          const auto& name = config.datasets[i].first;
          PpoConfig pc = config.ppo;
          pc.seed = rng::derive_seed(config.seed, 20 + i);
          const AgentTrainResult r =
              train_moral_agent(base, models[i], train_tokens, pc);
          r.agent.save(ctx.path("agents", name + ".json"));
          std::ostringstream log;
          for (std::size_t it = 0; it < r.history.size(); ++it) {
            const json line = {{"iter", it},
                               {"mean_reward", r.history[it].mean_reward},
                               {"kl_to_ref", r.history[it].kl_to_ref},
                               {"loss", r.history[it].loss}};
            log << line.dump() << '\n';
          }
          write_file(ctx.path("agents", name + "_log.jsonl"), log.str());
        }
        ctx.finish("agents", agent_files);
      } catch (const std::exception& e) {
        stage_failed("agents", e);
      }
    }
    result.stages.push_back({"agents", skipped});
  }

  // Stage 3: agents answer the training questions; the selection oracle
  // under sampled profiles provides ground truth.
  const std::vector<std::string> corpus_files = {"dataset.jsonl", "train.jsonl",
                                                 "val.jsonl", "test.jsonl"};
  {
    const bool skipped = ctx.done("aggregator", corpus_files);
    if (!skipped) {
      try {
        const std::vector<MoralAgent> agents =
            load_agents((ctx.run_dir / "agents").string());
        rng::Rng profile_gen(rng::derive_seed(config.seed, 30));
        const std::uint64_t answer_base = rng::derive_seed(config.seed, 31);
        std::vector<AggregationRecord> records;
        for (std::size_t qi = 0; qi < train_q.size(); ++qi) {
          const std::string& question = config.prompts[train_q[qi]];
          const TokenSequence& qtok = all_tokens[train_q[qi]];
          AgentAnswerSet set;
          set.question = question;
          for (std::size_t ai = 0; ai < n; ++ai) {
            const Rollout r = sample_response(
                agents[ai].policy, qtok,
                rng::derive_seed(answer_base, qi * n + ai));
            const std::string answer = decode_tokens(r.response, codebook);
            set.answers.push_back(answer);
            set.rewards.push_back(reward_vector(models, answer, registry).scores);
          }
          for (int p = 0; p < config.profiles_per_question; ++p) {
            MoralProfile profile;
            profile.weights.assign(n, 0.0);
            const std::size_t dominant =
                (qi * static_cast<std::size_t>(config.profiles_per_question) +
                 static_cast<std::size_t>(p)) %
                n;
            for (std::size_t v = 0; v < n; ++v) {
              profile.weights[v] = v == dominant
                                       ? 0.75 + 0.25 * profile_gen.uniform01()
                                       : 0.2 * profile_gen.uniform01();
            }
            AggregationRecord rec;
            rec.question = question;
            rec.profile = profile;
            rec.agent_answers = set.answers;
            rec.ground_truth = select_best(set, profile).second;
            // A silent agent can win the selection; such records carry no
            // target text and would violate the non-empty-truth invariant.
            if (rec.ground_truth.empty()) continue;
            records.push_back(std::move(rec));
          }
        }
        save_aggregation_dataset(records, ctx.path("aggregator", "dataset.jsonl"));
        SplitSpec spec;
        spec.seed = rng::derive_seed(config.seed, 32);
        const auto [train_r, val_r, test_r] = split_dataset(records, spec);
        save_aggregation_dataset(train_r, ctx.path("aggregator", "train.jsonl"));
        save_aggregation_dataset(val_r, ctx.path("aggregator", "val.jsonl"));
        save_aggregation_dataset(test_r, ctx.path("aggregator", "test.jsonl"));
        ctx.finish("aggregator", corpus_files);
      } catch (const std::exception& e) {
        stage_failed("aggregation-data", e);
      }
    }
    result.stages.push_back({"aggregation-data", skipped});
  }

  // Stage 4: train the learned aggregator on the generated corpus.
  {
    const std::vector<std::string> outputs = {"model.json", "history.jsonl"};
    // The corpus manifest doubles as this stage's input check; model files
    // piggyback on the same directory.
    const bool skipped =
        fs::exists(ctx.run_dir / "aggregator" / "model_manifest.json") &&
        [&] {
          try {
            const json j = json::parse(read_file(
                (ctx.run_dir / "aggregator" / "model_manifest.json").string()));
            return j.at("config_hash").get<std::string>() == ctx.hash &&
                   fs::exists(ctx.run_dir / "aggregator" / "model.json") &&
                   fs::exists(ctx.run_dir / "aggregator" / "history.jsonl");
          } catch (...) {
            return false;
          }
        }();
    if (!skipped) {
      try {
        const auto train_r = load_aggregation_dataset(
            ctx.path("aggregator", "train.jsonl"), registry);
        AggregatorTrainConfig ac = config.aggregator;
        ac.vocab.words = codebook;
        ac.seed = rng::derive_seed(config.seed, 33);
        const AggregatorTrainResult r = train_aggregator(train_r, ac);
        r.model.save(ctx.path("aggregator", "model.json"));
        std::ostringstream log;
        for (std::size_t e = 0; e < r.loss_history.size(); ++e) {
          json line = {{"epoch", e}, {"loss", r.loss_history[e]}};
          if (e < r.val_loss_history.size()) {
            line["val_loss"] = r.val_loss_history[e];
          }
          log << line.dump() << '\n';
        }
        write_file(ctx.path("aggregator", "history.jsonl"), log.str());
        const json manifest = {{"config_hash", ctx.hash},
                               {"stage", "aggregator-train"},
                               {"outputs", outputs},
                               {"best_epoch", r.best_epoch}};
        write_file(ctx.path("aggregator", "model_manifest.json"),
                   manifest.dump() + "\n");
      } catch (const std::exception& e) {
        stage_failed("aggregator-train", e);
      }
    }
    result.stages.push_back({"aggregator-train", skipped});
  }

  // Stage 5: evaluation reports.
  {
    const std::vector<std::string> outputs = {"agent_eval.json", "agent_eval.txt",
                                              "rouge_select.json",
                                              "rouge_learned.json"};
    const bool skipped = ctx.done("reports", outputs);
    if (!skipped) {
      try {
        const std::vector<MoralAgent> agents =
            load_agents((ctx.run_dir / "agents").string());
        const Policy base = Policy::load(ctx.path("agents", "base.json"));
        const std::vector<TokenSequence> no_overlap_check;
        const auto& eval_set = eval_tokens.empty() ? train_tokens : eval_tokens;
        const auto& disjoint_from =
            eval_tokens.empty() ? no_overlap_check : train_tokens;

        json rows = json::array();
        std::ostringstream table;
        table << "value        base    agent\n";
        for (std::size_t i = 0; i < n; ++i) {
          const std::uint64_t eseed = rng::derive_seed(config.seed, 40 + i);
          const double base_p = evaluate_alignment_probability(
              base, eval_set, models[i], config.samples_per_prompt, eseed,
              disjoint_from);
          const double agent_p = evaluate_alignment_probability(
              agents[i].policy, eval_set, models[i], config.samples_per_prompt,
              eseed, disjoint_from);
          rows.push_back({{"value", registry.name(static_cast<int>(i))},
                          {"base", percent2(base_p)},
                          {"agent", percent2(agent_p)}});
          char line[64];
          std::snprintf(line, sizeof(line), "%-10s %7s  %7s\n",
                        registry.name(static_cast<int>(i)).c_str(),
                        format_percent(base_p).c_str(),
                        format_percent(agent_p).c_str());
          table << line;
        }
        const json eval_report = {{"config_hash", ctx.hash},
                                  {"samples_per_prompt", config.samples_per_prompt},
                                  {"rows", rows}};
        write_file(ctx.path("reports", "agent_eval.json"),
                   eval_report.dump() + "\n");
        write_file(ctx.path("reports", "agent_eval.txt"), table.str());

        const auto test_r = load_aggregation_dataset(
            ctx.path("aggregator", "test.jsonl"), registry);
        const AggregatorModel agg = AggregatorModel::load(
            ctx.path("aggregator", "model.json"), codebook);
        std::vector<RougeResult> select_scores, learned_scores;
        for (const auto& rec : test_r) {
          AgentAnswerSet set;
          set.question = rec.question;
          set.answers = rec.agent_answers;
          for (const auto& a : rec.agent_answers) {
            set.rewards.push_back(reward_vector(models, a, registry).scores);
          }
          const std::string sel = aggregate(AggregationStrategy::kSelect,
                                            rec.question, set, rec.profile);
          const std::string lrn =
              aggregate(AggregationStrategy::kLearned, rec.question, set,
                        rec.profile, &agg);
          select_scores.push_back(rouge(sel, rec.ground_truth));
          learned_scores.push_back(rouge(lrn, rec.ground_truth));
        }
        write_rouge_report(ctx, "rouge_select.json", "select",
                           aggregate_rouge(select_scores));
        write_rouge_report(ctx, "rouge_learned.json", "learned",
                           aggregate_rouge(learned_scores));
        ctx.finish("reports", outputs);
      } catch (const std::exception& e) {
        stage_failed("reports", e);
      }
    }
    result.stages.push_back({"reports", skipped});
  }

  return result;
}

PipelineResult run_pipeline_file(const std::string& config_path) {
  return run_pipeline(PipelineConfig::load(config_path));
}

}  // namespace cmva
