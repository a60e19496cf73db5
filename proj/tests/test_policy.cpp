#include <atomic>
#include <cmath>
#include <string>
#include <thread>
#include <vector>

#include "doctest.h"
#include "httplib.h"
#include "json.hpp"
#include "test_util.hpp"
#include "trace/policy.hpp"
#include "trace/remote_policy.hpp"

using namespace trace;

namespace {

SamplingParams warm() {
  SamplingParams params;
  params.temperature = 0.7;
  return params;
}

std::vector<std::string> draw_n(Policy& policy, const std::string& prompt,
                                int n) {
  std::vector<std::string> out;
  for (int i = 0; i < n; ++i) out.push_back(policy.complete(prompt, warm()));
  return out;
}

}  // namespace

TEST_CASE("scripted point-mass distribution always returns its action") {
  ScriptedPolicy policy(0);
  policy.set_default({{"go to kitchen", 1.0}});
  for (const auto& s : draw_n(policy, "any context", 10)) {
    CHECK(s == "go to kitchen");
  }
}

TEST_CASE("scripted draws are reproducible for a fixed seed") {
  auto run = [] {
    ScriptedPolicy policy(42);
    policy.set_default({{"a", 0.5}, {"b", 0.5}});
    auto first = draw_n(policy, "ctx-1", 20);
    auto second = draw_n(policy, "ctx-2", 20);
    first.insert(first.end(), second.begin(), second.end());
    return first;
  };
  CHECK(run() == run());

  // A different seed gives a different stream (overwhelmingly likely).
  ScriptedPolicy other(43);
  other.set_default({{"a", 0.5}, {"b", 0.5}});
  CHECK(draw_n(other, "ctx-1", 20) != run());
}

TEST_CASE("scripted draws are a pure function of (context, seed, index)") {
  ScriptedPolicy policy(7);
  policy.set_default({{"a", 0.5}, {"b", 0.5}});
  auto interleaved_a = std::vector<std::string>{};
  auto interleaved_b = std::vector<std::string>{};
  for (int i = 0; i < 10; ++i) {
    interleaved_a.push_back(policy.complete("ctx-a", warm()));
    interleaved_b.push_back(policy.complete("ctx-b", warm()));
  }
  ScriptedPolicy sequential(7);
  sequential.set_default({{"a", 0.5}, {"b", 0.5}});
  CHECK(draw_n(sequential, "ctx-a", 10) == interleaved_a);
  CHECK(draw_n(sequential, "ctx-b", 10) == interleaved_b);
}

TEST_CASE("scripted draws match the configured distribution within 3 sigma") {
  ScriptedPolicy policy(123);
  policy.set_default({{"x", 0.3}, {"y", 0.7}});
  const int n = 10000;
  int x_count = 0;
  for (int i = 0; i < n; ++i) {
    if (policy.complete("ctx-" + std::to_string(i), warm()) == "x") ++x_count;
  }
  double expected = 0.3 * n;
  double sigma = std::sqrt(n * 0.3 * 0.7);
  CHECK(std::abs(x_count - expected) <= 3.0 * sigma);
}

TEST_CASE("scripted temperature 0 is the deterministic mode of the rule") {
  ScriptedPolicy policy(9);
  policy.set_default({{"x", 0.3}, {"y", 0.7}});
  SamplingParams greedy;  // temperature 0
  for (int i = 0; i < 20; ++i) {
    CHECK(policy.complete("same prompt", greedy) == "y");
  }
  // Greedy lookups do not consume stochastic draws.
  ScriptedPolicy fresh(9);
  fresh.set_default({{"x", 0.3}, {"y", 0.7}});
  auto before = draw_n(fresh, "p", 10);
  ScriptedPolicy mixed(9);
  mixed.set_default({{"x", 0.3}, {"y", 0.7}});
  mixed.complete("p", greedy);
  CHECK(draw_n(mixed, "p", 10) == before);
}

TEST_CASE("scripted rule resolution: exact, then contains, then default") {
  ScriptedPolicy policy(0);
  policy.add_rule("the exact prompt", {{"exact", 1.0}});
  policy.add_contains_rule("fridge", {{"contains", 1.0}});
  policy.set_default({{"default", 1.0}});
  CHECK(policy.complete("the exact prompt", {}) == "exact");
  CHECK(policy.complete("please open the fridge now", {}) == "contains");
  CHECK(policy.complete("something else", {}) == "default");

  ScriptedPolicy bare(0);
  CHECK_THROWS_AS(bare.complete("anything", {}), std::logic_error);
}

TEST_CASE("scripted weights are validated and normalised") {
  ScriptedPolicy policy(0);
  CHECK_THROWS_AS(policy.set_default({{"a", -0.1}, {"b", 1.1}}),
                  std::invalid_argument);
  CHECK_THROWS_AS(policy.set_default({{"a", 0.0}}), std::invalid_argument);
  CHECK_THROWS_AS(policy.set_default({}), std::invalid_argument);

  // Unnormalised weights are accepted and scaled.
  policy.set_default({{"a", 1.0}, {"b", 3.0}});
  int a_count = 0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    if (policy.complete("c" + std::to_string(i), warm()) == "a") ++a_count;
  }
  double sigma = std::sqrt(n * 0.25 * 0.75);
  CHECK(std::abs(a_count - 0.25 * n) <= 3.0 * sigma);
}

TEST_CASE("cycling policy alternates per context by draw index") {
  CyclingPolicy policy({"a", "b"});
  CHECK(policy.complete("ctx-1", {}) == "a");
  CHECK(policy.complete("ctx-1", {}) == "b");
  CHECK(policy.complete("ctx-1", {}) == "a");
  // A fresh context restarts the cycle.
  CHECK(policy.complete("ctx-2", {}) == "a");
}

TEST_CASE("replay policy serves recorded streams and detects exhaustion") {
  ReplayPolicy policy;
  policy.add_stream("p", {"one", "two"});
  CHECK(policy.complete("p", {}) == "one");
  CHECK(policy.complete("p", {}) == "two");
  CHECK_THROWS_AS(policy.complete("p", {}), std::logic_error);
  policy.reset_draws();
  CHECK(policy.complete("p", {}) == "one");
  CHECK_THROWS_AS(policy.complete("unknown", {}), std::logic_error);
}

TEST_CASE("scripted spec files load into policies") {
  TempDir dir("scripted_spec");
  write_file(dir.str("spec.json"),
             R"({"default": [["Answer: 42", 1.0]],
                 "rules": [{"contains": "Valid actions",
                            "weights": [["go to kitchen", 1.0]]}]})");
  ScriptedSpec spec = load_scripted_spec(dir.str("spec.json"));
  auto policy = make_scripted_policy(spec, 0);
  CHECK(policy->complete("solve this", {}) == "Answer: 42");
  CHECK(policy->complete("Valid actions:\n- go to kitchen", {}) ==
        "go to kitchen");

  write_file(dir.str("cycle.json"), R"({"cycle": ["a", "b"]})");
  auto cycling =
      make_scripted_policy(load_scripted_spec(dir.str("cycle.json")), 0);
  CHECK(cycling->complete("p", {}) == "a");
  CHECK(cycling->complete("p", {}) == "b");

  write_file(dir.str("empty.json"), R"({})");
  CHECK_THROWS(load_scripted_spec(dir.str("empty.json")));
  CHECK_THROWS(load_scripted_spec(dir.str("missing.json")));
}

namespace {

// In-process OpenAI-compatible endpoint for client contract tests.
class MockServer {
 public:
  template <typename Setup>
  explicit MockServer(Setup setup) {
    setup(server_);
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~MockServer() {
    server_.stop();
    thread_.join();
  }
  std::string url() const {
    return "http://127.0.0.1:" + std::to_string(port_);
  }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

RetryOptions fast_retries() {
  RetryOptions retry;
  retry.max_retries = 3;
  retry.backoff_ms = 1;
  retry.timeout_sec = 5;
  return retry;
}

}  // namespace

TEST_CASE("remote client extracts the first choice text") {
  MockServer server([](httplib::Server& s) {
    s.Post("/v1/completions",
           [](const httplib::Request&, httplib::Response& res) {
             res.set_content(R"({"choices": [{"text": "go to kitchen"}]})",
                             "application/json");
           });
  });
  SamplingParams params;
  CHECK(remote_complete(server.url(), "prompt", params) == "go to kitchen");
}

TEST_CASE("remote client serialises sampling parameters") {
  nlohmann::json captured;
  MockServer server([&captured](httplib::Server& s) {
    s.Post("/v1/completions", [&captured](const httplib::Request& req,
                                          httplib::Response& res) {
      captured = nlohmann::json::parse(req.body);
      res.set_content(R"({"choices": [{"text": "ok"}]})", "application/json");
    });
  });
  RemotePolicy policy(server.url(), "test-model", fast_retries());
  SamplingParams params;
  params.temperature = 0.7;
  params.max_new_tokens = 32;
  params.stop = {"\n"};
  CHECK(policy.complete("the prompt", params) == "ok");
  CHECK(captured["model"] == "test-model");
  CHECK(captured["prompt"] == "the prompt");
  CHECK(captured["temperature"] == doctest::Approx(0.7));
  CHECK(captured["max_tokens"] == 32);
  CHECK(captured["stop"] == nlohmann::json::array({"\n"}));
  CHECK_FALSE(captured.contains("seed"));  // off unless enabled
}

TEST_CASE("remote client: temperature 0 gives identical completions") {
  // The mock derives its reply deterministically from the prompt, the way a
  // well-behaved backend treats temperature 0.
  MockServer server([](httplib::Server& s) {
    s.Post("/v1/completions",
           [](const httplib::Request& req, httplib::Response& res) {
             auto body = nlohmann::json::parse(req.body);
             std::string prompt = body["prompt"].get<std::string>();
             nlohmann::json out{
                 {"choices",
                  {{{"text",
                     "echo:" + std::to_string(fnv1a64(prompt) % 1000)}}}}};
             res.set_content(out.dump(), "application/json");
           });
  });
  SamplingParams params;
  params.temperature = 0.0;
  std::string first = remote_complete(server.url(), "same prompt", params);
  std::string second = remote_complete(server.url(), "same prompt", params);
  CHECK(first == second);
}

TEST_CASE("remote client retries server errors then fails infrastructure") {
  std::atomic<int> attempts{0};
  MockServer server([&attempts](httplib::Server& s) {
    s.Post("/v1/completions",
           [&attempts](const httplib::Request&, httplib::Response& res) {
             attempts.fetch_add(1);
             res.status = 500;
           });
  });
  RemotePolicy policy(server.url(), "m", fast_retries());
  try {
    policy.complete("p", {});
    FAIL("expected InfraError");
  } catch (const InfraError& e) {
    CHECK(e.kind() == InfraErrorKind::http_error);
  }
  CHECK(attempts.load() == 4);  // initial attempt + 3 retries
}

TEST_CASE("remote client flags malformed responses") {
  MockServer server([](httplib::Server& s) {
    s.Post("/v1/completions",
           [](const httplib::Request&, httplib::Response& res) {
             res.set_content(R"({"no_choices": true})", "application/json");
           });
  });
  RemotePolicy policy(server.url(), "m", fast_retries());
  try {
    policy.complete("p", {});
    FAIL("expected InfraError");
  } catch (const InfraError& e) {
    CHECK(e.kind() == InfraErrorKind::malformed_response);
  }
}

TEST_CASE("remote client reports unreachable backends") {
  RetryOptions retry = fast_retries();
  retry.max_retries = 1;
  retry.timeout_sec = 1;
  // Nothing listens on this port.
  RemotePolicy policy("http://127.0.0.1:9", "m", retry);
  try {
    policy.complete("p", {});
    FAIL("expected InfraError");
  } catch (const InfraError& e) {
    CHECK((e.kind() == InfraErrorKind::unreachable ||
           e.kind() == InfraErrorKind::timeout));
  }
}
