#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cmva/dataset.hpp"
#include "cmva/types.hpp"

namespace cmva {

// The n agents' answers to one question, with rewards[i][j] = reward of
// answer i under the value-j model. Rows stay aligned with `answers`; the
// matrix may have fewer rows than a full deployment when some agents
// failed to answer.
struct AgentAnswerSet {
  std::string question;
  std::vector<std::string> answers;
  std::vector<std::vector<double>> rewards;
};

// Token space for the aggregator: the policy codebook plus reserved ids.
// Layout: 0..V-1 codebook words, V = UNK, V+1 = SEP, V+2..V+1+B profile
// buckets, V+2+B = end of sequence.
struct AggregatorVocab {
  std::vector<std::string> words;
  int bucket_count = 8;

  int word_count() const { return static_cast<int>(words.size()); }
  int unk() const { return word_count(); }
  int sep() const { return word_count() + 1; }
  int bucket(int b) const;
  int eos() const { return word_count() + 2 + bucket_count; }
  int size() const { return word_count() + 3 + bucket_count; }

  // Quantizes a profile weight in [0,1]: 0.0 -> bucket 0, 1.0 -> bucket
  // bucket_count-1.
  int bucket_of(double weight) const;

  // Over the codebook words only; bucket_count is checkpointed separately.
  std::uint64_t hash() const;
};

// Lowercased alphanumeric tokens mapped to word ids, out-of-vocabulary
// words to UNK.
TokenSequence encode_text(const AggregatorVocab& vocab,
                          const std::string& text);

struct AggregatorArchitecture {
  int embedding_dim = 16;
  int hidden_dim = 32;
  // Caps the encoded input (trailing tokens kept) and the decode length.
  int context_window = 64;
};

// A decoder-only recurrent sequence model. theta packs, in order:
// Emb[V'xE], W_xh[HxE], W_hh[HxH], b_h[H], W_hy[V'xH], b_y[V'].
struct AggregatorModel {
  AggregatorArchitecture arch;
  AggregatorVocab vocab;
  std::vector<double> theta;

  std::size_t param_count() const;

  static AggregatorModel init(AggregatorArchitecture arch,
                              AggregatorVocab vocab, std::uint64_t seed);

  // Checkpoint JSON {architecture, vocab_hash, theta, bucket_count}; the
  // codebook itself travels with the policy, so loading takes the words
  // and verifies their hash (VocabMismatch otherwise).
  std::string serialize() const;
  static AggregatorModel deserialize(const std::string& json_text,
                                     std::vector<std::string> words);
  void save(const std::string& path) const;
  static AggregatorModel load(const std::string& path,
                              std::vector<std::string> words);
};

// argmax_i scalarize(rewards[i], c); ties broken by lowest index. Throws
// DimensionMismatch on ragged input, NoAnswersAvailable when empty.
std::pair<std::size_t, std::string> select_best(const AgentAnswerSet& answers,
                                                const MoralProfile& c);

// [question] SEP [t_1] SEP ... SEP [t_n] SEP [profile bucket tokens].
TokenSequence encode_aggregator_input(std::span<const std::string> answers,
                                      const std::string& question,
                                      const MoralProfile& c,
                                      const AggregatorVocab& vocab);

// L(y, Y) = -sum_j log Y_j[y_j] over one-hot truth tokens. Throws
// LengthMismatch when |y| != |Y| and ZeroProbabilityTruth when a truth
// token has zero probability.
double cross_entropy_loss(std::span<const int32_t> y,
                          std::span<const std::vector<double>> Y);

// Runs the recurrence over `tokens`; entry k is the next-token
// distribution after consuming tokens[0..k]. Each distribution sums to 1.
std::vector<std::vector<double>> aggregator_forward(
    const AggregatorModel& model, std::span<const int32_t> tokens);

// Teacher-forced cross-entropy over [input, truth, EOS] sequences, summed
// over all records and target positions (truth tokens plus the end token).
// `grad` receives d(total)/dtheta when non-null.
double aggregator_loss(const AggregatorModel& model,
                       std::span<const AggregationRecord> records,
                       std::vector<double>* grad);

// aggregator_loss divided by the number of target positions.
double aggregator_mean_loss(const AggregatorModel& model,
                            std::span<const AggregationRecord> records);

struct AggregatorTrainConfig {
  double lr = 0.01;  // Adam step size
  int epochs = 60;
  std::uint64_t seed = 42;
  AggregatorArchitecture architecture;
  AggregatorVocab vocab;
  double val_fraction = 0.1;
  double max_grad_norm = 5.0;
};

struct AggregatorTrainResult {
  AggregatorModel model;
  std::vector<double> loss_history;      // per-epoch mean per-token, train
  std::vector<double> val_loss_history;  // empty when no holdout was cut
  int best_epoch = -1;                   // epoch the returned theta is from
};

// Per-record Adam on the teacher-forced loss. The returned model is the
// best-validation-loss snapshot (best train loss when the record count is
// too small for a holdout). epochs=0 returns the initialized model with an
// empty history. Throws EmptyDataset, NonFiniteLoss.
AggregatorTrainResult train_aggregator(
    std::span<const AggregationRecord> records,
    const AggregatorTrainConfig& config);

// Greedy decode after consuming `input`: argmax next token until the end
// token or the context window runs out; word ids map through the codebook,
// reserved ids are dropped.
std::string aggregate_decode(const AggregatorModel& model,
                             std::span<const int32_t> input);

enum class AggregationStrategy { kSelect, kLearned, kExternal };

// Parses "select" | "learned" | "external". Throws UnknownStrategy.
AggregationStrategy parse_strategy(const std::string& name);
std::string strategy_name(AggregationStrategy strategy);

// A remote answerer speaking the agent /generate wire shape:
// POST url with {"question": ...} returning {"answer": ...}.
struct ExternalBackend {
  std::string url;
  int timeout_ms = 2000;
};

// Instruction text handed to an external backend.
std::string render_aggregation_prompt(const std::string& question,
                                      std::span<const std::string> answers,
                                      const MoralProfile& c);

// select -> select_best text; learned -> greedy decode (requires model);
// external -> the backend's answer (requires external). Throws
// MissingModel, ExternalBackendFailure.
std::string aggregate(AggregationStrategy strategy,
                      const std::string& question,
                      const AgentAnswerSet& answer_set, const MoralProfile& c,
                      const AggregatorModel* model = nullptr,
                      const ExternalBackend* external = nullptr);

}  // namespace cmva
