#include "cmva/gateway.hpp"

#include <algorithm>
#include <chrono>
#include <future>
#include <thread>

#include "httplib.h"
#include "json.hpp"

namespace cmva {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

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

struct WorkerOut {
  std::string answer;
  double latency_ms = 0.0;
};

// Runs inside the worker thread; owns copies of everything it touches.
WorkerOut run_backend(const BackendDescriptor& b, const std::string& question,
                      int timeout_ms) {
  const auto t0 = Clock::now();
  std::string answer;
  if (b.kind == BackendKind::kInProcess) {
    answer = b.handler(question);
  } else {
    const auto [base, path] = split_url(b.endpoint);
    httplib::Client client(base);
    client.set_connection_timeout(0, timeout_ms * 1000LL);
    client.set_read_timeout(0, timeout_ms * 1000LL);
    json body;
    body["question"] = question;
    const auto res = client.Post(path, body.dump(), "application/json");
    if (!res) {
      throw ExternalBackendFailure("no response from " + b.endpoint);
    }
    if (res->status != 200) {
      throw ExternalBackendFailure(b.endpoint + " returned status " +
                                   std::to_string(res->status));
    }
    answer = json::parse(res->body).at("answer").get<std::string>();
  }
  return {std::move(answer), ms_since(t0)};
}

struct Launch {
  std::future<WorkerOut> future;
  Clock::time_point start;
  int timeout_ms = 0;
};

// Detached worker: a backend that overruns its budget keeps running in the
// background and its result is dropped; the shared promise keeps the state
// alive either way.
Launch launch_backend(const BackendDescriptor& descriptor,
                      const std::string& question, int timeout_ms) {
  auto promise = std::make_shared<std::promise<WorkerOut>>();
  Launch l{promise->get_future(), Clock::now(), timeout_ms};
  std::thread([promise, descriptor, question, timeout_ms] {
    try {
      promise->set_value(run_backend(descriptor, question, timeout_ms));
    } catch (...) {
      promise->set_exception(std::current_exception());
    }
  }).detach();
  return l;
}

AgentAnswer collect(const BackendDescriptor& descriptor, Launch& l) {
  AgentAnswer out;
  out.agent = descriptor.id;
  const auto deadline = l.start + std::chrono::milliseconds(l.timeout_ms);
  if (l.future.wait_until(deadline) == std::future_status::ready) {
    try {
      WorkerOut w = l.future.get();
      out.answer = std::move(w.answer);
      out.status = AnswerStatus::kOk;
      out.latency_ms = w.latency_ms;
    } catch (const std::exception&) {
      out.status = AnswerStatus::kError;
      out.latency_ms = ms_since(l.start);
    }
  } else {
    out.status = AnswerStatus::kTimeout;
    out.latency_ms = static_cast<double>(l.timeout_ms);
  }
  return out;
}

}  // namespace

std::string backend_kind_name(BackendKind kind) {
  return kind == BackendKind::kInProcess ? "in_process" : "remote";
}

std::string status_name(AnswerStatus status) {
  switch (status) {
    case AnswerStatus::kOk:
      return "ok";
    case AnswerStatus::kTimeout:
      return "timeout";
    case AnswerStatus::kError:
      return "error";
  }
  throw OutOfRange("bad status");
}

void BackendRegistry::add(BackendDescriptor descriptor) {
  if (find(descriptor.id) != nullptr) {
    throw DuplicateId("backend '" + descriptor.id + "' already registered");
  }
  const auto n = static_cast<int>(ValueRegistry::canonical().size());
  if (descriptor.value.id < 0 || descriptor.value.id >= n) {
    throw UnknownValue("value id " + std::to_string(descriptor.value.id));
  }
  if (descriptor.timeout_ms <= 0) {
    throw OutOfRange("backend '" + descriptor.id + "' timeout must be > 0");
  }
  if (descriptor.kind == BackendKind::kInProcess && !descriptor.handler) {
    throw OutOfRange("in-process backend '" + descriptor.id +
                     "' has no handler");
  }
  // Keep value-id order; equal ids stay in insertion order.
  const auto pos = std::find_if(
      backends_.begin(), backends_.end(), [&](const BackendDescriptor& b) {
        return b.value.id > descriptor.value.id;
      });
  backends_.insert(pos, std::move(descriptor));
}

const BackendDescriptor* BackendRegistry::find(const std::string& id) const {
  for (const auto& b : backends_) {
    if (b.id == id) return &b;
  }
  return nullptr;
}

std::vector<AgentAnswer> fan_out(const std::string& question,
                                 const BackendRegistry& registry,
                                 int per_backend_timeout_ms) {
  if (registry.empty()) throw EmptyDataset("empty backend registry");
  const auto& backends = registry.backends();
  std::vector<Launch> launches;
  launches.reserve(backends.size());
  for (const auto& b : backends) {
    const int timeout =
        per_backend_timeout_ms > 0 ? per_backend_timeout_ms : b.timeout_ms;
    launches.push_back(launch_backend(b, question, timeout));
  }
  std::vector<AgentAnswer> out;
  out.reserve(backends.size());
  for (std::size_t i = 0; i < backends.size(); ++i) {
    out.push_back(collect(backends[i], launches[i]));
  }
  return out;
}

AggregateResponse handle_aggregate(const AggregateRequest& request,
                                   const BackendRegistry& registry,
                                   std::span<const RewardModel> reward_models,
                                   const AggregatorConfig& config) {
  const auto t0 = Clock::now();
  if (reward_models.empty()) {
    throw DimensionMismatch("no reward models configured");
  }
  MoralProfile profile;
  try {
    profile = validate_profile(request.profile, reward_models.size());
  } catch (const Error& e) {
    throw InvalidProfile(e.what());
  }
  const AggregationStrategy strategy = parse_strategy(request.strategy);

  std::vector<AgentAnswer> answers =
      fan_out(request.question, registry, config.per_backend_timeout_ms);

  std::vector<std::string> names;
  names.reserve(reward_models.size());
  for (const auto& m : reward_models) names.push_back(m.value.name);
  const ValueRegistry scoring_registry(names);

  AgentAnswerSet ok_set;
  ok_set.question = request.question;
  std::vector<std::size_t> ok_idx;
  for (std::size_t i = 0; i < answers.size(); ++i) {
    if (answers[i].status != AnswerStatus::kOk) continue;
    const RewardVector rv =
        reward_vector(reward_models, answers[i].answer, scoring_registry);
    answers[i].rewards = rv.scores;
    ok_set.answers.push_back(answers[i].answer);
    ok_set.rewards.push_back(rv.scores);
    ok_idx.push_back(i);
  }
  if (ok_set.answers.empty()) {
    throw NoAnswersAvailable("all " + std::to_string(answers.size()) +
                             " backends failed");
  }

  AggregateResponse response;
  response.answer = aggregate(strategy, request.question, ok_set, profile,
                              config.model, config.external);
  if (strategy == AggregationStrategy::kSelect) {
    const std::size_t best = select_best(ok_set, profile).first;
    response.chosen_agent = answers[ok_idx[best]].agent;
  }
  response.agent_answers = std::move(answers);
  response.elapsed_ms = ms_since(t0);
  return response;
}

std::string AggregateResponse::to_json() const {
  json j;
  j["answer"] = answer;
  j["chosen_agent"] = chosen_agent ? json(*chosen_agent) : json(nullptr);
  json entries = json::array();
  for (const auto& a : agent_answers) {
    entries.push_back({{"agent", a.agent},
                       {"answer", a.answer},
                       {"rewards", a.rewards},
                       {"status", status_name(a.status)}});
  }
  j["agent_answers"] = std::move(entries);
  j["elapsed_ms"] = elapsed_ms;
  return j.dump();
}

HealthReport health(const BackendRegistry& registry, int probe_timeout_ms) {
  HealthReport report;
  if (registry.empty()) {
    report.status = "empty";
    return report;
  }
  const auto probes = fan_out("", registry, probe_timeout_ms);
  bool all_ok = true;
  for (const auto& p : probes) {
    const bool ok = p.status == AnswerStatus::kOk;
    all_ok = all_ok && ok;
    report.backends.push_back({p.agent, ok});
  }
  report.status = all_ok ? "ok" : "degraded";
  return report;
}

std::string HealthReport::to_json() const {
  json j;
  j["status"] = status;
  json entries = json::array();
  for (const auto& b : backends) {
    entries.push_back({{"id", b.id}, {"reachable", b.reachable}});
  }
  j["backends"] = std::move(entries);
  return j.dump();
}

struct GatewayServer::Impl {
  BackendRegistry registry;
  std::vector<RewardModel> models;
  GatewayConfig config;
  std::optional<AggregatorModel> aggregator;
  std::optional<ExternalBackend> external;
  httplib::Server server;
  std::thread thread;
  int port = 0;

  AggregatorConfig aggregator_config() const {
    AggregatorConfig c;
    c.model = aggregator ? &*aggregator : nullptr;
    c.external = external ? &*external : nullptr;
    c.per_backend_timeout_ms = config.per_backend_timeout_ms;
    return c;
  }
};

namespace {

void write_error(httplib::Response& res, int status, const std::string& error,
                 const std::string& message) {
  json j;
  j["error"] = error;
  j["message"] = message;
  res.status = status;
  res.set_content(j.dump(), "application/json");
}

int wire_status(const Error& e) {
  const std::string& k = e.kind();
  if (k == "NoAnswersAvailable") return 503;
  if (k == "ExternalBackendFailure") return 502;
  if (k == "InvalidProfile" || k == "UnknownStrategy" || k == "MissingModel" ||
      k == "DimensionMismatch" || k == "OutOfRange") {
    return 400;
  }
  return 500;
}

}  // namespace

GatewayServer::GatewayServer(BackendRegistry registry,
                             std::vector<RewardModel> models,
                             GatewayConfig config)
    : impl_(std::make_unique<Impl>()) {
  impl_->registry = std::move(registry);
  impl_->models = std::move(models);
  impl_->config = std::move(config);
  Impl* impl = impl_.get();
  auto& server = impl->server;

  server.Post("/v1/aggregate", [impl](const httplib::Request& req,
                                      httplib::Response& res) {
    try {
      const json body = json::parse(req.body);
      AggregateRequest r;
      r.question = body.at("question").get<std::string>();
      r.profile = body.at("profile").get<std::vector<double>>();
      r.strategy = body.value("strategy", impl->config.default_strategy);
      const AggregateResponse out = handle_aggregate(
          r, impl->registry, impl->models, impl->aggregator_config());
      res.set_content(out.to_json(), "application/json");
    } catch (const json::exception& e) {
      write_error(res, 400, "BadRequest", e.what());
    } catch (const Error& e) {
      write_error(res, wire_status(e), e.kind(), e.what());
    }
  });

  server.Post(R"(/v1/agents/([^/]+)/generate)",
              [impl](const httplib::Request& req, httplib::Response& res) {
                const BackendDescriptor* b =
                    impl->registry.find(req.matches[1]);
                if (!b) {
                  write_error(res, 404, "UnknownBackend",
                              "no backend '" + std::string(req.matches[1]) +
                                  "'");
                  return;
                }
                std::string question;
                try {
                  question =
                      json::parse(req.body).at("question").get<std::string>();
                } catch (const json::exception& e) {
                  write_error(res, 400, "BadRequest", e.what());
                  return;
                }
                const int timeout = impl->config.per_backend_timeout_ms > 0
                                        ? impl->config.per_backend_timeout_ms
                                        : b->timeout_ms;
                Launch l = launch_backend(*b, question, timeout);
                const AgentAnswer out = collect(*b, l);
                switch (out.status) {
                  case AnswerStatus::kOk: {
                    json j;
                    j["answer"] = out.answer;
                    res.set_content(j.dump(), "application/json");
                    break;
                  }
                  case AnswerStatus::kTimeout:
                    write_error(res, 504, "Timeout",
                                "backend '" + b->id + "' timed out");
                    break;
                  case AnswerStatus::kError:
                    write_error(res, 502, "BackendError",
                                "backend '" + b->id + "' failed");
                    break;
                }
              });

  server.Get("/v1/agents",
             [impl](const httplib::Request&, httplib::Response& res) {
               json agents = json::array();
               for (const auto& b : impl->registry.backends()) {
                 agents.push_back({{"id", b.id},
                                   {"value", b.value.name},
                                   {"value_id", b.value.id},
                                   {"kind", backend_kind_name(b.kind)},
                                   {"timeout_ms", b.timeout_ms}});
               }
               json j;
               j["agents"] = std::move(agents);
               res.set_content(j.dump(), "application/json");
             });

  server.Get("/health",
             [impl](const httplib::Request&, httplib::Response& res) {
               const HealthReport report = health(impl->registry);
               res.set_content(report.to_json(), "application/json");
             });
}

GatewayServer::~GatewayServer() { stop(); }

void GatewayServer::set_aggregator(AggregatorModel model) {
  impl_->aggregator = std::move(model);
}

void GatewayServer::set_external(ExternalBackend backend) {
  impl_->external = std::move(backend);
}

bool GatewayServer::start() {
  Impl* impl = impl_.get();
  if (impl->config.port == 0) {
    impl->port = impl->server.bind_to_any_port(impl->config.host);
    if (impl->port < 0) return false;
  } else {
    if (!impl->server.bind_to_port(impl->config.host, impl->config.port)) {
      return false;
    }
    impl->port = impl->config.port;
  }
  impl->thread = std::thread([impl] { impl->server.listen_after_bind(); });
  const auto deadline = Clock::now() + std::chrono::seconds(5);
  while (!impl->server.is_running() && Clock::now() < deadline) {
    std::this_thread::sleep_for(std::chrono::milliseconds(1));
  }
  return impl->server.is_running();
}

void GatewayServer::stop() {
  if (impl_->thread.joinable()) {
    impl_->server.stop();
    impl_->thread.join();
  }
}

int GatewayServer::port() const { return impl_->port; }

}  // namespace cmva
