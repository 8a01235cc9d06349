#pragma once
// Network front end: accept a question plus moral profile, fan out
// concurrently to per-value agent backends, score every usable answer under
// every reward model, aggregate under the profile, and return the result with
// per-backend statuses. Reward models and aggregator checkpoints are shared
// immutably across requests.

#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cmva/aggregator.hpp"
#include "cmva/errors.hpp"
#include "cmva/reward.hpp"
#include "cmva/types.hpp"

namespace cmva {

enum class BackendKind { kInProcess, kRemote };

std::string backend_kind_name(BackendKind kind);

// One moral agent the gateway can query. In-process backends answer through
// `handler`; remote ones speak POST endpoint {"question"} -> {"answer"}, the
// same shape this gateway serves, so gateways can front other gateways.
struct BackendDescriptor {
  std::string id;
  MoralValue value;
  BackendKind kind = BackendKind::kInProcess;
  std::string endpoint;   // remote only
  int timeout_ms = 2000;  // per-call budget, > 0
  std::function<std::string(const std::string&)> handler;  // in-process only
};

// Registered backends, kept in value-id order. Insert-only; reads are
// lock-free once serving starts.
class BackendRegistry {
 public:
  // Throws DuplicateId, UnknownValue (value id outside the canonical range),
  // OutOfRange (timeout <= 0 or an in-process backend without a handler).
  void add(BackendDescriptor descriptor);

  const std::vector<BackendDescriptor>& backends() const { return backends_; }
  const BackendDescriptor* find(const std::string& id) const;
  std::size_t size() const { return backends_.size(); }
  bool empty() const { return backends_.empty(); }

 private:
  std::vector<BackendDescriptor> backends_;
};

enum class AnswerStatus { kOk, kTimeout, kError };

std::string status_name(AnswerStatus status);

// Outcome of one backend call. `rewards` is empty until handle_aggregate
// scores the ok answers.
struct AgentAnswer {
  std::string agent;
  std::string answer;
  AnswerStatus status = AnswerStatus::kError;
  double latency_ms = 0.0;
  std::vector<double> rewards;
};

// Queries every backend concurrently; one entry per backend in registry
// order. A backend overrunning its budget is reported as timeout and left to
// finish in the background. Wall time tracks the largest single timeout, not
// the sum. per_backend_timeout_ms 0 means each descriptor's own budget.
// Throws EmptyDataset on an empty registry.
std::vector<AgentAnswer> fan_out(const std::string& question,
                                 const BackendRegistry& registry,
                                 int per_backend_timeout_ms = 0);

struct AggregateRequest {
  std::string question;
  std::vector<double> profile;
  std::string strategy = "select";
};

struct AggregateResponse {
  std::string answer;
  std::optional<std::string> chosen_agent;  // select strategy only
  std::vector<AgentAnswer> agent_answers;   // one per backend, value-id order
  double elapsed_ms = 0.0;

  std::string to_json() const;
};

// Aggregation-side knobs for request handling.
struct AggregatorConfig {
  const AggregatorModel* model = nullptr;     // learned strategy
  const ExternalBackend* external = nullptr;  // external strategy
  int per_backend_timeout_ms = 0;             // 0: descriptor budgets
};

// Full request path: validate, fan out, score ok answers with the reward
// models (id-ordered, one per value), aggregate over the ok subset only.
// Throws InvalidProfile, UnknownStrategy, NoAnswersAvailable (every backend
// failed), MissingModel / ExternalBackendFailure from the strategy itself.
AggregateResponse handle_aggregate(const AggregateRequest& request,
                                   const BackendRegistry& registry,
                                   std::span<const RewardModel> reward_models,
                                   const AggregatorConfig& config = {});

struct BackendHealth {
  std::string id;
  bool reachable = false;
};

struct HealthReport {
  std::string status;  // ok | degraded | empty
  std::vector<BackendHealth> backends;

  std::string to_json() const;
};

// Probes each backend with an empty question under a short timeout.
HealthReport health(const BackendRegistry& registry,
                    int probe_timeout_ms = 500);

struct GatewayConfig {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0: pick any free port
  std::string default_strategy = "select";
  int per_backend_timeout_ms = 0;
};

// HTTP server over the handlers above.
//   POST /v1/aggregate               {question, profile, strategy?}
//   POST /v1/agents/{id}/generate    {question} -> {answer}
//   GET  /v1/agents
//   GET  /health
// Validation failures map to 400, an all-backends-failed aggregate to 503.
class GatewayServer {
 public:
  GatewayServer(BackendRegistry registry, std::vector<RewardModel> models,
                GatewayConfig config);
  ~GatewayServer();
  GatewayServer(const GatewayServer&) = delete;
  GatewayServer& operator=(const GatewayServer&) = delete;

  // Call before start().
  void set_aggregator(AggregatorModel model);
  void set_external(ExternalBackend backend);

  // Binds (resolving port 0 to a free port) and serves on a background
  // thread. False when the bind fails.
  bool start();
  void stop();
  int port() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace cmva
