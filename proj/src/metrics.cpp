#include "cmva/metrics.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <map>
#include <sstream>
#include <unordered_map>

namespace cmva {

namespace {

std::size_t lcs_bitparallel(std::span<const int32_t> a,
                            std::span<const int32_t> b) {
  // Match masks for a's distinct symbols; a.size() <= 64 bounds both arrays.
  int32_t syms[64];
  std::uint64_t pm[64];
  int nsym = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    int j = 0;
    while (j < nsym && syms[j] != a[i]) ++j;
    if (j == nsym) {
      syms[nsym] = a[i];
      pm[nsym] = 0;
      ++nsym;
    }
    pm[j] |= std::uint64_t{1} << i;
  }
  std::uint64_t row = 0;
  for (int32_t c : b) {
    int j = 0;
    while (j < nsym && syms[j] != c) ++j;
    const std::uint64_t match = j < nsym ? pm[j] : 0;
    const std::uint64_t x = row | match;
    row = x & ~(x - ((row << 1) | 1));
  }
  return static_cast<std::size_t>(std::popcount(row));
}

std::size_t lcs_two_row(std::span<const int32_t> a,
                        std::span<const int32_t> b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1
                                    : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

std::vector<int32_t> intern(std::span<const std::string> tokens,
                            std::map<std::string, int32_t>& ids) {
  std::vector<int32_t> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) {
    auto [it, inserted] =
        ids.emplace(t, static_cast<int32_t>(ids.size()));
    out.push_back(it->second);
  }
  return out;
}

RougeScore from_counts(double hits, double candidate_total,
                       double reference_total) {
  RougeScore s;
  if (candidate_total > 0) s.precision = hits / candidate_total;
  if (reference_total > 0) s.recall = hits / reference_total;
  if (s.precision + s.recall > 0) {
    s.f1 = 2 * s.precision * s.recall / (s.precision + s.recall);
  }
  return s;
}

std::vector<std::vector<std::string>> split_sentences(
    const std::string& text) {
  std::vector<std::vector<std::string>> sentences;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    auto toks = tokenize(line);
    if (!toks.empty()) sentences.push_back(std::move(toks));
  }
  return sentences;
}

// Indices in `ref` of one LCS against `can` (full-table backtrack).
std::vector<std::size_t> lcs_indices(std::span<const int32_t> ref,
                                     std::span<const int32_t> can) {
  const std::size_t m = ref.size(), n = can.size();
  std::vector<std::vector<std::size_t>> t(m + 1,
                                          std::vector<std::size_t>(n + 1, 0));
  for (std::size_t i = 1; i <= m; ++i) {
    for (std::size_t j = 1; j <= n; ++j) {
      t[i][j] = ref[i - 1] == can[j - 1] ? t[i - 1][j - 1] + 1
                                         : std::max(t[i - 1][j], t[i][j - 1]);
    }
  }
  std::vector<std::size_t> out;
  std::size_t i = m, j = n;
  while (i > 0 && j > 0) {
    if (ref[i - 1] == can[j - 1]) {
      out.push_back(i - 1);
      --i;
      --j;
    } else if (t[i][j - 1] > t[i - 1][j]) {
      --j;
    } else {
      --i;
    }
  }
  std::reverse(out.begin(), out.end());
  return out;
}

}  // namespace

std::size_t lcs_length(std::span<const int32_t> a,
                       std::span<const int32_t> b) {
  if (a.empty() || b.empty()) return 0;
  if (a.size() <= 64) return lcs_bitparallel(a, b);
  if (b.size() <= 64) return lcs_bitparallel(b, a);
  return lcs_two_row(a, b);
}

RougeScore rouge_n(const std::string& candidate, const std::string& reference,
                   int n) {
  if (n < 1) throw OutOfRange("n-gram order must be positive");
  const auto ctoks = tokenize(candidate);
  const auto rtoks = tokenize(reference);
  const auto un = static_cast<std::size_t>(n);
  auto grams = [un](const std::vector<std::string>& toks) {
    std::map<std::vector<std::string>, std::size_t> counts;
    if (toks.size() >= un) {
      for (std::size_t i = 0; i + un <= toks.size(); ++i) {
        ++counts[std::vector<std::string>(toks.begin() + i,
                                          toks.begin() + i + un)];
      }
    }
    return counts;
  };
  const auto cg = grams(ctoks);
  const auto rg = grams(rtoks);
  std::size_t hits = 0, ctotal = 0, rtotal = 0;
  for (const auto& [g, c] : cg) {
    ctotal += c;
    const auto it = rg.find(g);
    if (it != rg.end()) hits += std::min(c, it->second);
  }
  for (const auto& [g, c] : rg) rtotal += c;
  return from_counts(static_cast<double>(hits), static_cast<double>(ctotal),
                     static_cast<double>(rtotal));
}

RougeScore rouge_l(const std::string& candidate, const std::string& reference) {
  const auto ctoks = tokenize(candidate);
  const auto rtoks = tokenize(reference);
  std::map<std::string, int32_t> ids;
  const auto c = intern(ctoks, ids);
  const auto r = intern(rtoks, ids);
  const auto lcs = lcs_length(c, r);
  return from_counts(static_cast<double>(lcs),
                     static_cast<double>(c.size()),
                     static_cast<double>(r.size()));
}

RougeScore rouge_lsum(const std::string& candidate,
                      const std::string& reference) {
  const auto csents = split_sentences(candidate);
  const auto rsents = split_sentences(reference);
  if (csents.empty() || rsents.empty()) return {};

  std::map<std::string, int32_t> ids;
  std::vector<std::vector<int32_t>> c, r;
  std::size_t ctotal = 0, rtotal = 0;
  std::unordered_map<int32_t, std::size_t> ccnt, rcnt;
  for (const auto& s : csents) {
    c.push_back(intern(s, ids));
    ctotal += s.size();
    for (int32_t t : c.back()) ++ccnt[t];
  }
  for (const auto& s : rsents) {
    r.push_back(intern(s, ids));
    rtotal += s.size();
    for (int32_t t : r.back()) ++rcnt[t];
  }

  std::size_t hits = 0;
  for (const auto& rs : r) {
    // Union over candidate sentences of LCS positions in this reference
    // sentence, then clip each matched token by remaining counts.
    std::vector<bool> in_union(rs.size(), false);
    for (const auto& cs : c) {
      for (std::size_t idx : lcs_indices(rs, cs)) in_union[idx] = true;
    }
    for (std::size_t i = 0; i < rs.size(); ++i) {
      if (!in_union[i]) continue;
      auto& cc = ccnt[rs[i]];
      auto& rc = rcnt[rs[i]];
      if (cc > 0 && rc > 0) {
        ++hits;
        --cc;
        --rc;
      }
    }
  }
  return from_counts(static_cast<double>(hits), static_cast<double>(ctotal),
                     static_cast<double>(rtotal));
}

RougeVariant parse_rouge_variant(const std::string& name) {
  std::string n;
  for (char c : name) n.push_back(static_cast<char>(std::tolower(
      static_cast<unsigned char>(c))));
  if (n == "1" || n == "rouge1") return RougeVariant::k1;
  if (n == "2" || n == "rouge2") return RougeVariant::k2;
  if (n == "l" || n == "rougel") return RougeVariant::kL;
  if (n == "lsum" || n == "rougelsum") return RougeVariant::kLsum;
  throw UnknownValue("no ROUGE variant named '" + name + "'");
}

RougeScore rouge(const std::string& candidate, const std::string& reference,
                 RougeVariant variant) {
  switch (variant) {
    case RougeVariant::k1:
      return rouge_n(candidate, reference, 1);
    case RougeVariant::k2:
      return rouge_n(candidate, reference, 2);
    case RougeVariant::kL:
      return rouge_l(candidate, reference);
    case RougeVariant::kLsum:
      return rouge_lsum(candidate, reference);
  }
  throw OutOfRange("bad ROUGE variant");
}

RougeResult rouge(const std::string& candidate, const std::string& reference) {
  RougeResult r;
  r.rouge1 = rouge_n(candidate, reference, 1);
  r.rouge2 = rouge_n(candidate, reference, 2);
  r.rougeL = rouge_l(candidate, reference);
  r.rougeLsum = rouge_lsum(candidate, reference);
  return r;
}

RougeReport aggregate_rouge(std::span<const RougeResult> results) {
  RougeReport rep;
  rep.count = results.size();
  if (results.empty()) return rep;
  for (const auto& r : results) {
    rep.rouge1 += r.rouge1.f1;
    rep.rouge2 += r.rouge2.f1;
    rep.rougeL += r.rougeL.f1;
    rep.rougeLsum += r.rougeLsum.f1;
  }
  const auto n = static_cast<double>(results.size());
  rep.rouge1 /= n;
  rep.rouge2 /= n;
  rep.rougeL /= n;
  rep.rougeLsum /= n;
  return rep;
}

MoralAlignmentVector moral_vector(std::span<const RewardModel> classifiers,
                                  const std::string& text) {
  if (classifiers.empty()) throw DimensionMismatch("no value classifiers");
  MoralAlignmentVector v;
  v.reserve(classifiers.size());
  for (std::size_t i = 0; i < classifiers.size(); ++i) {
    if (classifiers[i].value.id != static_cast<int>(i)) {
      throw DimensionMismatch("classifier " + std::to_string(i) +
                              " is for value id " +
                              std::to_string(classifiers[i].value.id));
    }
    v.push_back(reward(classifiers[i], text));
  }
  return v;
}

MoralAlignmentVector moral_vector(std::span<const ValueClassifier> classifiers,
                                  const std::string& text) {
  if (classifiers.empty()) throw DimensionMismatch("no value classifiers");
  MoralAlignmentVector v;
  v.reserve(classifiers.size());
  for (const auto& c : classifiers) v.push_back(c(text));
  return v;
}

double cosine_similarity(std::span<const double> a,
                         std::span<const double> b) {
  if (a.size() != b.size()) {
    throw DimensionMismatch(std::to_string(a.size()) + " vs " +
                            std::to_string(b.size()));
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) throw ZeroVector("cosine of a zero vector");
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

namespace {

const Similarity& similarity_or_cosine(const Similarity& sim) {
  static const Similarity cosine = [](std::span<const double> x,
                                      std::span<const double> y) {
    return cosine_similarity(x, y);
  };
  return sim ? sim : cosine;
}

bool is_zero(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; });
}

// One (possibly weighted) compared pair; adds to the running total unless a
// zero-norm vector forces a skip.
void compare_pair(std::vector<double> va, std::vector<double> vb,
                  const std::vector<double>* weights, const Similarity& sim,
                  double& total, AlignmentStats& stats) {
  if (weights) {
    for (std::size_t i = 0; i < va.size(); ++i) {
      va[i] *= (*weights)[i];
      vb[i] *= (*weights)[i];
    }
  }
  if (is_zero(va) || is_zero(vb)) {
    ++stats.skipped;
    return;
  }
  total += sim(va, vb);
  ++stats.compared;
}

}  // namespace

double alignment_score(const Generator& gen_a, const Generator& gen_b,
                       std::span<const std::string> prompts,
                       std::span<const ValueClassifier> classifiers,
                       std::uint64_t seed, const Similarity& sim,
                       AlignmentStats* stats) {
  if (prompts.empty()) throw EmptyPromptSet("alignment needs prompts");
  const Similarity& s = similarity_or_cosine(sim);
  AlignmentStats local;
  double total = 0.0;
  for (std::size_t j = 0; j < prompts.size(); ++j) {
    const std::uint64_t sj = rng::derive_seed(seed, j);
    compare_pair(moral_vector(classifiers, gen_a(prompts[j], sj)),
                 moral_vector(classifiers, gen_b(prompts[j], sj)), nullptr, s,
                 total, local);
  }
  if (stats) *stats = local;
  if (local.compared == 0) {
    throw ZeroVector("every prompt produced a zero moral vector");
  }
  return total / static_cast<double>(local.compared);
}

double contextual_alignment_score(
    const ContextualGenerator& gen_a, const ContextualGenerator& gen_b,
    std::span<const std::string> prompts,
    std::span<const MoralProfile> contexts,
    std::span<const ValueClassifier> classifiers, std::uint64_t seed,
    const Similarity& sim, AlignmentStats* stats) {
  if (contexts.empty()) throw EmptyPromptSet("no contexts");
  if (prompts.empty()) throw EmptyPromptSet("alignment needs prompts");
  const Similarity& s = similarity_or_cosine(sim);
  AlignmentStats local;
  double total = 0.0;
  for (const auto& ctx : contexts) {
    validate_profile(ctx.weights, classifiers.size());
    for (std::size_t j = 0; j < prompts.size(); ++j) {
      const std::uint64_t sj = rng::derive_seed(seed, j);
      compare_pair(moral_vector(classifiers, gen_a(prompts[j], ctx, sj)),
                   moral_vector(classifiers, gen_b(prompts[j], ctx, sj)),
                   &ctx.weights, s, total, local);
    }
  }
  if (stats) *stats = local;
  if (local.compared == 0) {
    throw ZeroVector("every (context, prompt) pair produced a zero vector");
  }
  return total / static_cast<double>(local.compared);
}

Generator make_policy_generator(Policy policy) {
  return [policy = std::move(policy)](const std::string& prompt,
                                      std::uint64_t seed) {
    const auto tokens = encode_words(prompt, policy.vocab);
    const Rollout r = sample_response(policy, tokens, seed);
    return decode_tokens(r.response, policy.vocab);
  };
}

std::vector<ValueClassifier> make_reward_classifiers(
    std::span<const RewardModel> models) {
  std::vector<ValueClassifier> out;
  out.reserve(models.size());
  for (const auto& m : models) {
    out.push_back(
        [m](const std::string& text) { return reward(m, text); });
  }
  return out;
}

}  // namespace cmva
