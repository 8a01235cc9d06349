#include "cmva/aggregator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "cmva/rand.hpp"
#include "cmva/reward.hpp"
#include "httplib.h"
#include "json.hpp"

namespace cmva {

using nlohmann::json;

int AggregatorVocab::bucket(int b) const {
  if (b < 0 || b >= bucket_count) {
    throw OutOfRange("bucket " + std::to_string(b) + " of " +
                     std::to_string(bucket_count));
  }
  return word_count() + 2 + b;
}

int AggregatorVocab::bucket_of(double weight) const {
  const int b = static_cast<int>(
      std::floor(weight * static_cast<double>(bucket_count)));
  return std::clamp(b, 0, bucket_count - 1);
}

std::uint64_t AggregatorVocab::hash() const {
  std::string joined;
  for (const auto& w : words) {
    joined += w;
    joined.push_back('\n');
  }
  return detail::fnv1a64(joined, 0);
}

TokenSequence encode_text(const AggregatorVocab& vocab,
                          const std::string& text) {
  TokenSequence out;
  for (const auto& tok : tokenize(text)) {
    const auto it = std::find(vocab.words.begin(), vocab.words.end(), tok);
    out.push_back(it == vocab.words.end()
                      ? vocab.unk()
                      : static_cast<int32_t>(it - vocab.words.begin()));
  }
  return out;
}

std::pair<std::size_t, std::string> select_best(const AgentAnswerSet& answers,
                                                const MoralProfile& c) {
  if (answers.answers.empty()) {
    throw NoAnswersAvailable("empty answer set");
  }
  if (answers.rewards.size() != answers.answers.size()) {
    throw DimensionMismatch(std::to_string(answers.rewards.size()) +
                            " reward rows for " +
                            std::to_string(answers.answers.size()) +
                            " answers");
  }
  std::size_t best = 0;
  double best_score = 0.0;
  for (std::size_t i = 0; i < answers.answers.size(); ++i) {
    const double s = scalarize(RewardVector{answers.rewards[i]}, c);
    if (i == 0 || s > best_score) {
      best = i;
      best_score = s;
    }
  }
  return {best, answers.answers[best]};
}

TokenSequence encode_aggregator_input(std::span<const std::string> answers,
                                      const std::string& question,
                                      const MoralProfile& c,
                                      const AggregatorVocab& vocab) {
  TokenSequence out = encode_text(vocab, question);
  for (const auto& answer : answers) {
    out.push_back(vocab.sep());
    const auto toks = encode_text(vocab, answer);
    out.insert(out.end(), toks.begin(), toks.end());
  }
  out.push_back(vocab.sep());
  for (double w : c.weights) {
    out.push_back(vocab.bucket(vocab.bucket_of(w)));
  }
  return out;
}

double cross_entropy_loss(std::span<const int32_t> y,
                          std::span<const std::vector<double>> Y) {
  if (y.size() != Y.size()) {
    throw LengthMismatch(std::to_string(y.size()) + " truth tokens vs " +
                         std::to_string(Y.size()) + " distributions");
  }
  double total = 0.0;
  for (std::size_t j = 0; j < y.size(); ++j) {
    if (y[j] < 0 || static_cast<std::size_t>(y[j]) >= Y[j].size()) {
      throw OutOfRange("truth token " + std::to_string(y[j]) +
                       " at position " + std::to_string(j));
    }
    const double p = Y[j][static_cast<std::size_t>(y[j])];
    if (p == 0.0) {
      throw ZeroProbabilityTruth("position " + std::to_string(j));
    }
    total -= std::log(p);
  }
  return total;
}

namespace {

// Offsets of the named parameter blocks inside theta.
struct Layout {
  std::size_t vp, e, h;  // V', E, H
  std::size_t emb, wxh, whh, bh, why, by, total;

  Layout(const AggregatorArchitecture& arch, const AggregatorVocab& vocab) {
    vp = static_cast<std::size_t>(vocab.size());
    e = static_cast<std::size_t>(arch.embedding_dim);
    h = static_cast<std::size_t>(arch.hidden_dim);
    emb = 0;
    wxh = emb + vp * e;
    whh = wxh + h * e;
    bh = whh + h * h;
    why = bh + h;
    by = why + vp * h;
    total = by + vp;
  }
};

void softmax_inplace(std::vector<double>& z) {
  double zmax = z[0];
  for (double v : z) zmax = std::max(zmax, v);
  double sum = 0.0;
  for (auto& v : z) {
    v = std::exp(v - zmax);
    sum += v;
  }
  for (auto& v : z) v /= sum;
}

// One recurrence step: h_next = tanh(W_xh emb[token] + W_hh h + b_h).
void step(const Layout& L, const double* theta, int32_t token,
          const std::vector<double>& h_prev, std::vector<double>& h_out) {
  const double* emb = theta + L.emb + static_cast<std::size_t>(token) * L.e;
  for (std::size_t i = 0; i < L.h; ++i) {
    double a = theta[L.bh + i];
    const double* wx = theta + L.wxh + i * L.e;
    for (std::size_t k = 0; k < L.e; ++k) a += wx[k] * emb[k];
    const double* wh = theta + L.whh + i * L.h;
    for (std::size_t k = 0; k < L.h; ++k) a += wh[k] * h_prev[k];
    h_out[i] = std::tanh(a);
  }
}

std::vector<double> output_logits(const Layout& L, const double* theta,
                                  const std::vector<double>& h) {
  std::vector<double> z(L.vp);
  for (std::size_t v = 0; v < L.vp; ++v) {
    double acc = theta[L.by + v];
    const double* w = theta + L.why + v * L.h;
    for (std::size_t k = 0; k < L.h; ++k) acc += w[k] * h[k];
    z[v] = acc;
  }
  return z;
}

void check_tokens(const AggregatorModel& model,
                  std::span<const int32_t> tokens) {
  for (int32_t t : tokens) {
    if (t < 0 || t >= model.vocab.size()) {
      throw OutOfRange("token " + std::to_string(t) +
                       " outside the aggregator vocabulary");
    }
  }
}

// Full teacher-forced sequence for one record: encoded input (tail-capped
// at the context window) then truth tokens then the end token.
struct RecordSequence {
  TokenSequence tokens;
  std::size_t input_len;
};

RecordSequence record_sequence(const AggregatorModel& model,
                               const AggregationRecord& rec) {
  TokenSequence enc = encode_aggregator_input(rec.agent_answers, rec.question,
                                              rec.profile, model.vocab);
  const auto window = static_cast<std::size_t>(model.arch.context_window);
  if (enc.size() > window) {
    enc.erase(enc.begin(), enc.end() - static_cast<std::ptrdiff_t>(window));
  }
  RecordSequence rs;
  rs.input_len = enc.size();
  rs.tokens = std::move(enc);
  const TokenSequence truth = encode_text(model.vocab, rec.ground_truth);
  rs.tokens.insert(rs.tokens.end(), truth.begin(), truth.end());
  rs.tokens.push_back(model.vocab.eos());
  return rs;
}

// Sum of cross-entropy at the target positions of one record; BPTT into
// `grad` (theta layout) when non-null. Returns {loss, target positions}.
std::pair<double, std::size_t> record_loss(const AggregatorModel& model,
                                           const AggregationRecord& rec,
                                           std::vector<double>* grad) {
  const Layout L(model.arch, model.vocab);
  const double* theta = model.theta.data();
  const RecordSequence rs = record_sequence(model, rec);
  const std::size_t M = rs.tokens.size();
  const std::size_t P = rs.input_len;
  const std::size_t K = M - 1;  // fed tokens; position k predicts token k+1
  const std::size_t first_loss = P - 1;

  std::vector<std::vector<double>> hs(K, std::vector<double>(L.h));
  std::vector<std::vector<double>> ps(K);
  const std::vector<double> h0(L.h, 0.0);
  double loss = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    step(L, theta, rs.tokens[k], k == 0 ? h0 : hs[k - 1], hs[k]);
    if (k >= first_loss) {
      auto z = output_logits(L, theta, hs[k]);
      softmax_inplace(z);
      const auto target = static_cast<std::size_t>(rs.tokens[k + 1]);
      loss -= std::log(z[target]);
      ps[k] = std::move(z);
    }
  }
  if (!grad) return {loss, K - first_loss};

  std::vector<double> dh_next(L.h, 0.0), dh(L.h), da(L.h);
  double* g = grad->data();
  for (std::size_t k = K; k-- > 0;) {
    dh = dh_next;
    if (k >= first_loss) {
      auto& dz = ps[k];
      dz[static_cast<std::size_t>(rs.tokens[k + 1])] -= 1.0;
      for (std::size_t v = 0; v < L.vp; ++v) {
        g[L.by + v] += dz[v];
        double* gw = g + L.why + v * L.h;
        const double* w = theta + L.why + v * L.h;
        for (std::size_t i = 0; i < L.h; ++i) {
          gw[i] += dz[v] * hs[k][i];
          dh[i] += w[i] * dz[v];
        }
      }
    }
    const std::vector<double>& h_prev = k == 0 ? h0 : hs[k - 1];
    for (std::size_t i = 0; i < L.h; ++i) {
      da[i] = dh[i] * (1.0 - hs[k][i] * hs[k][i]);
    }
    const auto tok = static_cast<std::size_t>(rs.tokens[k]);
    const double* emb = theta + L.emb + tok * L.e;
    double* gemb = g + L.emb + tok * L.e;
    std::fill(dh_next.begin(), dh_next.end(), 0.0);
    for (std::size_t i = 0; i < L.h; ++i) {
      g[L.bh + i] += da[i];
      double* gwx = g + L.wxh + i * L.e;
      const double* wx = theta + L.wxh + i * L.e;
      for (std::size_t e = 0; e < L.e; ++e) {
        gwx[e] += da[i] * emb[e];
        gemb[e] += wx[e] * da[i];
      }
      double* gwh = g + L.whh + i * L.h;
      const double* wh = theta + L.whh + i * L.h;
      for (std::size_t j = 0; j < L.h; ++j) {
        gwh[j] += da[i] * h_prev[j];
        dh_next[j] += wh[j] * da[i];
      }
    }
  }
  return {loss, K - first_loss};
}

}  // namespace

std::size_t AggregatorModel::param_count() const {
  return Layout(arch, vocab).total;
}

AggregatorModel AggregatorModel::init(AggregatorArchitecture arch,
                                      AggregatorVocab vocab,
                                      std::uint64_t seed) {
  if (arch.embedding_dim < 1 || arch.hidden_dim < 1 ||
      arch.context_window < 1) {
    throw OutOfRange("architecture dims must be positive");
  }
  AggregatorModel m;
  m.arch = arch;
  m.vocab = std::move(vocab);
  const Layout L(m.arch, m.vocab);
  m.theta.assign(L.total, 0.0);
  rng::Rng gen(seed);
  // Weights small-normal, biases zero.
  for (std::size_t i = L.emb; i < L.bh; ++i) m.theta[i] = 0.1 * gen.normal();
  for (std::size_t i = L.why; i < L.by; ++i) m.theta[i] = 0.1 * gen.normal();
  return m;
}

std::vector<std::vector<double>> aggregator_forward(
    const AggregatorModel& model, std::span<const int32_t> tokens) {
  check_tokens(model, tokens);
  const Layout L(model.arch, model.vocab);
  const double* theta = model.theta.data();
  std::vector<std::vector<double>> out;
  out.reserve(tokens.size());
  std::vector<double> h(L.h, 0.0), h_next(L.h);
  for (int32_t t : tokens) {
    step(L, theta, t, h, h_next);
    std::swap(h, h_next);
    auto z = output_logits(L, theta, h);
    softmax_inplace(z);
    out.push_back(std::move(z));
  }
  return out;
}

double aggregator_loss(const AggregatorModel& model,
                       std::span<const AggregationRecord> records,
                       std::vector<double>* grad) {
  if (records.empty()) throw EmptyDataset("no aggregation records");
  if (grad) grad->assign(model.theta.size(), 0.0);
  double total = 0.0;
  for (const auto& rec : records) {
    total += record_loss(model, rec, grad).first;
  }
  return total;
}

double aggregator_mean_loss(const AggregatorModel& model,
                            std::span<const AggregationRecord> records) {
  if (records.empty()) throw EmptyDataset("no aggregation records");
  double total = 0.0;
  std::size_t positions = 0;
  for (const auto& rec : records) {
    const auto [loss, n] = record_loss(model, rec, nullptr);
    total += loss;
    positions += n;
  }
  return total / static_cast<double>(positions);
}

AggregatorTrainResult train_aggregator(
    std::span<const AggregationRecord> records,
    const AggregatorTrainConfig& config) {
  if (records.empty()) throw EmptyDataset("no aggregation records");
  if (config.epochs < 0) throw OutOfRange("negative epoch count");

  AggregatorTrainResult result;
  result.model = AggregatorModel::init(config.architecture, config.vocab,
                                       rng::derive_seed(config.seed, 0));
  if (config.epochs == 0) return result;

  const std::size_t n = records.size();
  const auto order0 = rng::shuffled_indices(n, rng::derive_seed(config.seed, 1));
  std::size_t val_count =
      n >= 5 ? static_cast<std::size_t>(
                   std::floor(config.val_fraction * static_cast<double>(n) +
                              0.5))
             : 0;
  val_count = std::min(val_count, n - 1);
  std::vector<AggregationRecord> train_set, val_set;
  for (std::size_t i = 0; i < n; ++i) {
    (i < n - val_count ? train_set : val_set)
        .push_back(records[order0[i]]);
  }

  auto& theta = result.model.theta;
  std::vector<double> grad(theta.size()), m(theta.size(), 0.0),
      v(theta.size(), 0.0);
  const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  std::size_t adam_t = 0;
  double best = std::numeric_limits<double>::infinity();
  std::vector<double> best_theta = theta;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto order = rng::shuffled_indices(
        train_set.size(),
        rng::derive_seed(config.seed, 100 + static_cast<std::uint64_t>(epoch)));
    for (std::size_t idx : order) {
      grad.assign(theta.size(), 0.0);
      const auto [loss, positions] =
          record_loss(result.model, train_set[idx], &grad);
      if (!std::isfinite(loss)) {
        throw NonFiniteLoss("epoch " + std::to_string(epoch));
      }
      double norm_sq = 0.0;
      for (double gi : grad) norm_sq += gi * gi;
      const double norm = std::sqrt(norm_sq);
      const double scale =
          norm > config.max_grad_norm ? config.max_grad_norm / norm : 1.0;
      ++adam_t;
      const double c1 = 1.0 - std::pow(b1, static_cast<double>(adam_t));
      const double c2 = 1.0 - std::pow(b2, static_cast<double>(adam_t));
      for (std::size_t i = 0; i < theta.size(); ++i) {
        const double gi = scale * grad[i];
        m[i] = b1 * m[i] + (1.0 - b1) * gi;
        v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
        theta[i] -= config.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
      }
    }
    result.loss_history.push_back(
        aggregator_mean_loss(result.model, train_set));
    const double tracked =
        val_set.empty()
            ? result.loss_history.back()
            : (result.val_loss_history.push_back(
                   aggregator_mean_loss(result.model, val_set)),
               result.val_loss_history.back());
    if (tracked < best) {
      best = tracked;
      best_theta = theta;
      result.best_epoch = epoch;
    }
  }
  theta = std::move(best_theta);
  return result;
}

std::string aggregate_decode(const AggregatorModel& model,
                             std::span<const int32_t> input) {
  check_tokens(model, input);
  const Layout L(model.arch, model.vocab);
  const double* theta = model.theta.data();
  std::vector<double> h(L.h, 0.0), h_next(L.h);
  TokenSequence fed(input.begin(), input.end());
  const auto window = static_cast<std::size_t>(model.arch.context_window);
  if (fed.size() > window) {
    fed.erase(fed.begin(), fed.end() - static_cast<std::ptrdiff_t>(window));
  }
  for (int32_t t : fed) {
    step(L, theta, t, h, h_next);
    std::swap(h, h_next);
  }
  std::string out;
  for (int steps = 0; steps < model.arch.context_window; ++steps) {
    const auto z = output_logits(L, theta, h);
    int32_t next = 0;
    for (std::size_t v = 1; v < z.size(); ++v) {
      if (z[v] > z[static_cast<std::size_t>(next)]) {
        next = static_cast<int32_t>(v);
      }
    }
    if (next == model.vocab.eos()) break;
    if (next < model.vocab.word_count()) {
      if (!out.empty()) out.push_back(' ');
      out += model.vocab.words[static_cast<std::size_t>(next)];
    }
    step(L, theta, next, h, h_next);
    std::swap(h, h_next);
  }
  return out;
}

AggregationStrategy parse_strategy(const std::string& name) {
  if (name == "select") return AggregationStrategy::kSelect;
  if (name == "learned") return AggregationStrategy::kLearned;
  if (name == "external") return AggregationStrategy::kExternal;
  throw UnknownStrategy("no aggregation strategy named '" + name + "'");
}

std::string strategy_name(AggregationStrategy strategy) {
  switch (strategy) {
    case AggregationStrategy::kSelect:
      return "select";
    case AggregationStrategy::kLearned:
      return "learned";
    case AggregationStrategy::kExternal:
      return "external";
  }
  throw OutOfRange("bad strategy");
}

std::string render_aggregation_prompt(const std::string& question,
                                      std::span<const std::string> answers,
                                      const MoralProfile& c) {
  std::string out =
      "Aggregate the candidate answers into one answer that best fits the "
      "moral profile.\n";
  out += "question: " + question + "\n";
  out += "profile: " + json(c.weights).dump() + "\n";
  for (std::size_t i = 0; i < answers.size(); ++i) {
    out += "answer " + std::to_string(i + 1) + ": " + answers[i] + "\n";
  }
  return out;
}

namespace {

// "http://host:port/path" -> {"http://host:port", "/path"}.
std::pair<std::string, std::string> split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw ExternalBackendFailure("backend url '" + url + "' has no scheme");
  }
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

std::string call_external(const ExternalBackend& backend,
                          const std::string& prompt) {
  const auto [base, path] = split_url(backend.url);
  httplib::Client client(base);
  client.set_connection_timeout(0, backend.timeout_ms * 1000LL);
  client.set_read_timeout(0, backend.timeout_ms * 1000LL);
  json body;
  body["question"] = prompt;
  const auto res = client.Post(path, body.dump(), "application/json");
  if (!res) {
    throw ExternalBackendFailure("no response from " + backend.url);
  }
  if (res->status != 200) {
    throw ExternalBackendFailure(backend.url + " returned status " +
                                 std::to_string(res->status));
  }
  try {
    const json reply = json::parse(res->body);
    return reply.at("answer").get<std::string>();
  } catch (const json::exception& e) {
    throw ExternalBackendFailure("malformed reply from " + backend.url +
                                 ": " + e.what());
  }
}

}  // namespace

std::string aggregate(AggregationStrategy strategy,
                      const std::string& question,
                      const AgentAnswerSet& answer_set, const MoralProfile& c,
                      const AggregatorModel* model,
                      const ExternalBackend* external) {
  switch (strategy) {
    case AggregationStrategy::kSelect:
      return select_best(answer_set, c).second;
    case AggregationStrategy::kLearned: {
      if (!model) throw MissingModel("learned strategy needs a trained model");
      const TokenSequence enc = encode_aggregator_input(
          answer_set.answers, question, c, model->vocab);
      return aggregate_decode(*model, enc);
    }
    case AggregationStrategy::kExternal: {
      if (!external || external->url.empty()) {
        throw MissingModel("external strategy needs a configured backend");
      }
      return call_external(
          *external, render_aggregation_prompt(question, answer_set.answers, c));
    }
  }
  throw OutOfRange("bad strategy");
}

std::string AggregatorModel::serialize() const {
  json j;
  j["architecture"] = {{"embedding_dim", arch.embedding_dim},
                       {"hidden_dim", arch.hidden_dim},
                       {"context_window", arch.context_window}};
  j["vocab_hash"] = vocab.hash();
  j["theta"] = theta;
  j["bucket_count"] = vocab.bucket_count;
  return j.dump();
}

AggregatorModel AggregatorModel::deserialize(const std::string& json_text,
                                             std::vector<std::string> words) {
  json j = json::parse(json_text);
  AggregatorModel m;
  m.arch.embedding_dim = j.at("architecture").at("embedding_dim").get<int>();
  m.arch.hidden_dim = j.at("architecture").at("hidden_dim").get<int>();
  m.arch.context_window = j.at("architecture").at("context_window").get<int>();
  m.vocab.words = std::move(words);
  m.vocab.bucket_count = j.at("bucket_count").get<int>();
  const auto expected = j.at("vocab_hash").get<std::uint64_t>();
  if (m.vocab.hash() != expected) {
    throw VocabMismatch("codebook does not hash to the checkpoint's vocab");
  }
  m.theta = j.at("theta").get<std::vector<double>>();
  if (m.theta.size() != m.param_count()) {
    throw DimensionMismatch("theta length does not match the architecture");
  }
  return m;
}

void AggregatorModel::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw FileNotFound("cannot write " + path);
  out << serialize() << '\n';
}

AggregatorModel AggregatorModel::load(const std::string& path,
                                      std::vector<std::string> words) {
  std::ifstream in(path);
  if (!in) throw FileNotFound(path);
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return deserialize(text, std::move(words));
}

}  // namespace cmva
