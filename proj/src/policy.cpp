#include "cmva/policy.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace cmva {

using nlohmann::json;

std::size_t Policy::rows() const {
  std::size_t r = 1;
  for (int i = 0; i < context_order; ++i) {
    r *= static_cast<std::size_t>(vocab_size() + 1);
  }
  return r;
}

Policy Policy::uniform(int context_order, std::vector<std::string> vocab,
                       int max_length) {
  if (context_order < 1 || vocab.empty() || max_length < 1) {
    throw OutOfRange("policy shape must be positive");
  }
  Policy p;
  p.context_order = context_order;
  p.vocab = std::move(vocab);
  p.max_length = max_length;
  p.logits.assign(p.rows() * static_cast<std::size_t>(p.row_width()), 0.0);
  return p;
}

std::size_t context_index(const Policy& policy,
                          std::span<const int32_t> context) {
  if (context.size() != static_cast<std::size_t>(policy.context_order)) {
    throw DimensionMismatch("context window of " +
                            std::to_string(context.size()) + " for order " +
                            std::to_string(policy.context_order));
  }
  std::size_t idx = 0;
  for (int32_t t : context) {
    if (t < 0 || t > policy.vocab_size()) {
      throw OutOfRange("context token " + std::to_string(t));
    }
    idx = idx * static_cast<std::size_t>(policy.vocab_size() + 1) +
          static_cast<std::size_t>(t);
  }
  return idx;
}

namespace {

// Softmax over one logit row; max-shifted so exp never overflows.
void row_probs(const Policy& policy, std::size_t row, std::vector<double>& out,
               bool log_space) {
  const int w = policy.row_width();
  const double* z = policy.logits.data() + row * static_cast<std::size_t>(w);
  double zmax = z[0];
  for (int a = 1; a < w; ++a) zmax = std::max(zmax, z[a]);
  double sum = 0.0;
  out.resize(static_cast<std::size_t>(w));
  for (int a = 0; a < w; ++a) {
    out[static_cast<std::size_t>(a)] = std::exp(z[a] - zmax);
    sum += out[static_cast<std::size_t>(a)];
  }
  const double log_sum = std::log(sum);
  for (int a = 0; a < w; ++a) {
    auto& v = out[static_cast<std::size_t>(a)];
    v = log_space ? (z[a] - zmax) - log_sum : v / sum;
  }
}

struct ContextWindow {
  std::vector<int32_t> window;

  ContextWindow(const Policy& policy, std::span<const int32_t> prompt) {
    window.assign(static_cast<std::size_t>(policy.context_order),
                  policy.bos());
    for (int32_t t : prompt) {
      if (t < 0 || t >= policy.vocab_size()) {
        throw OutOfRange("prompt token " + std::to_string(t));
      }
      push(t);
    }
  }

  void push(int32_t t) {
    std::copy(window.begin() + 1, window.end(), window.begin());
    window.back() = t;
  }
};

}  // namespace

std::vector<double> action_probs(const Policy& policy, std::size_t row) {
  if (row >= policy.rows()) throw OutOfRange("row " + std::to_string(row));
  std::vector<double> out;
  row_probs(policy, row, out, false);
  return out;
}

std::vector<double> action_log_probs(const Policy& policy, std::size_t row) {
  if (row >= policy.rows()) throw OutOfRange("row " + std::to_string(row));
  std::vector<double> out;
  row_probs(policy, row, out, true);
  return out;
}

Rollout sample_response(const Policy& policy, std::span<const int32_t> prompt,
                        rng::Rng& gen) {
  Rollout r;
  r.prompt.assign(prompt.begin(), prompt.end());
  ContextWindow ctx(policy, prompt);
  std::vector<double> probs;
  while (true) {
    row_probs(policy, context_index(policy, ctx.window), probs, false);
    const std::size_t a = gen.categorical(probs);
    r.logprobs.push_back(std::log(probs[a]));
    if (static_cast<int>(a) == policy.eos_action()) break;
    r.response.push_back(static_cast<int32_t>(a));
    if (static_cast<int>(r.response.size()) == policy.max_length) {
      // Forced stop: the only continuation has probability 1.
      r.logprobs.push_back(0.0);
      break;
    }
    ctx.push(static_cast<int32_t>(a));
  }
  return r;
}

Rollout sample_response(const Policy& policy, std::span<const int32_t> prompt,
                        std::uint64_t seed) {
  rng::Rng gen(seed);
  return sample_response(policy, prompt, gen);
}

double sequence_logprob(const Policy& policy, std::span<const int32_t> prompt,
                        std::span<const int32_t> response) {
  if (static_cast<int>(response.size()) > policy.max_length) {
    throw OutOfRange("response longer than max_length");
  }
  ContextWindow ctx(policy, prompt);
  std::vector<double> lps;
  double total = 0.0;
  for (int32_t t : response) {
    if (t < 0 || t >= policy.vocab_size()) {
      throw OutOfRange("response token " + std::to_string(t));
    }
    row_probs(policy, context_index(policy, ctx.window), lps, true);
    total += lps[static_cast<std::size_t>(t)];
    ctx.push(t);
  }
  if (static_cast<int>(response.size()) < policy.max_length) {
    row_probs(policy, context_index(policy, ctx.window), lps, true);
    total += lps[static_cast<std::size_t>(policy.eos_action())];
  }
  // At max_length the stop is forced, contributing log 1 = 0.
  return total;
}

double kl_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) {
    throw DimensionMismatch(std::to_string(p.size()) + " vs " +
                            std::to_string(q.size()));
  }
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] < 0.0 || q[i] < 0.0) {
      throw OutOfRange("negative probability entry");
    }
    if (p[i] == 0.0) continue;
    if (q[i] == 0.0) {
      throw AbsoluteContinuityViolation("q is 0 where p is " +
                                        std::to_string(p[i]));
    }
    kl += p[i] * std::log(p[i] / q[i]);
  }
  return std::max(kl, 0.0);
}

double kl_divergence_row(const Policy& p, const Policy& q, std::size_t row) {
  if (p.context_order != q.context_order || p.vocab != q.vocab) {
    throw DimensionMismatch("policies differ in shape");
  }
  // Log-space form of kl_divergence; softmax rows are strictly positive.
  std::vector<double> lp, lq;
  row_probs(p, row, lp, true);
  row_probs(q, row, lq, true);
  double kl = 0.0;
  for (std::size_t a = 0; a < lp.size(); ++a) {
    kl += std::exp(lp[a]) * (lp[a] - lq[a]);
  }
  return std::max(kl, 0.0);
}

double estimate_expected_reward(const Policy& policy,
                                std::span<const TokenSequence> prompts,
                                const TextRewardFn& reward_fn,
                                int samples_per_prompt, std::uint64_t seed) {
  if (prompts.empty()) throw EmptyPromptSet("no prompts to evaluate");
  if (samples_per_prompt < 1) {
    throw OutOfRange("samples_per_prompt must be positive");
  }
  double total = 0.0;
  for (std::size_t j = 0; j < prompts.size(); ++j) {
    for (int s = 0; s < samples_per_prompt; ++s) {
      const std::uint64_t stream =
          static_cast<std::uint64_t>(j) *
              static_cast<std::uint64_t>(samples_per_prompt) +
          static_cast<std::uint64_t>(s);
      const Rollout r =
          sample_response(policy, prompts[j], rng::derive_seed(seed, stream));
      total += reward_fn(decode_tokens(r.response, policy.vocab));
    }
  }
  return total / (static_cast<double>(prompts.size()) *
                  static_cast<double>(samples_per_prompt));
}

const std::vector<std::string>& default_codebook() {
  static const std::vector<std::string> words = {
      "the",   "a",      "you",  "i",      "we",      "they", "care",
      "help",  "harm",   "hurt", "fair",   "cheat",   "share", "equal",
      "loyal", "betray", "team", "trust",  "respect", "obey",  "rebel",
      "duty",  "pure",   "sacred", "dirty", "taboo",  "kind",  "honest",
      "brave", "calm",   "good", "bad"};
  return words;
}

std::string decode_tokens(std::span<const int32_t> tokens,
                          std::span<const std::string> codebook) {
  std::string out;
  for (int32_t t : tokens) {
    if (t < 0 || t >= static_cast<int32_t>(codebook.size())) {
      throw OutOfRange("token " + std::to_string(t) + " outside codebook");
    }
    if (!out.empty()) out.push_back(' ');
    out += codebook[static_cast<std::size_t>(t)];
  }
  return out;
}

TokenSequence encode_words(const std::string& text,
                           std::span<const std::string> codebook) {
  TokenSequence out;
  std::istringstream in(text);
  std::string word;
  while (in >> word) {
    const auto it = std::find(codebook.begin(), codebook.end(), word);
    if (it == codebook.end()) {
      throw UnknownValue("word '" + word + "' outside codebook");
    }
    out.push_back(static_cast<int32_t>(it - codebook.begin()));
  }
  return out;
}

std::string Policy::serialize() const {
  json j;
  j["context_order"] = context_order;
  j["vocab"] = vocab;
  j["max_length"] = max_length;
  j["logits"] = logits;
  return j.dump();
}

Policy Policy::deserialize(const std::string& json_text) {
  json j = json::parse(json_text);
  Policy p;
  p.context_order = j.at("context_order").get<int>();
  p.vocab = j.at("vocab").get<std::vector<std::string>>();
  p.max_length = j.at("max_length").get<int>();
  p.logits = j.at("logits").get<std::vector<double>>();
  if (p.context_order < 1 || p.vocab.empty() || p.max_length < 1) {
    throw OutOfRange("policy shape must be positive");
  }
  if (p.logits.size() != p.rows() * static_cast<std::size_t>(p.row_width())) {
    throw DimensionMismatch("logit table does not match declared shape");
  }
  for (double z : p.logits) {
    if (!std::isfinite(z)) throw OutOfRange("non-finite logit");
  }
  return p;
}

void Policy::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw FileNotFound("cannot write " + path);
  out << serialize() << '\n';
}

Policy Policy::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FileNotFound(path);
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return deserialize(text);
}

}  // namespace cmva
