#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "cneuro/conceptgen.hpp"
#include "cneuro/error.hpp"
#include "testutil.hpp"

using namespace cneuro;

namespace {

// Restores CONCEPTNEURO_LLM_API_KEY on scope exit.
class KeyGuard {
 public:
  KeyGuard() {
    const char* v = std::getenv("CONCEPTNEURO_LLM_API_KEY");
    if (v) saved_ = v;
    had_ = v != nullptr;
  }
  ~KeyGuard() {
    if (had_) ::setenv("CONCEPTNEURO_LLM_API_KEY", saved_.c_str(), 1);
    else ::unsetenv("CONCEPTNEURO_LLM_API_KEY");
  }

 private:
  std::string saved_;
  bool had_ = false;
};

class ScriptedProvider : public Provider {
 public:
  explicit ScriptedProvider(std::string response) : response_(std::move(response)) {}
  std::string name() const override { return "scripted"; }
  std::string complete(const std::string&) override { return response_; }

 private:
  std::string response_;
};

PromptSpec spec_for(const std::string& disorder) {
  PromptSpec spec;
  spec.disorder = disorder;
  spec.terms = disorder_terms(disorder);
  return spec;
}

}  // namespace

TEST_CASE("rendered prompt embeds the disorder, terms and both constraints") {
  PromptSpec spec = spec_for("Anxiety");
  std::string prompt = spec.render();

  CHECK(prompt.find("\"Anxiety\"") != std::string::npos);
  CHECK(prompt.find("not fractional anisotropy (FA) measures") != std::string::npos);
  CHECK(prompt.find("derived only to functional connectivity") != std::string::npos);
  for (const std::string& term : spec.terms) {
    CHECK(prompt.find(term) != std::string::npos);
  }

  // The full joined term list appears exactly once.
  std::string joined;
  for (std::size_t i = 0; i < spec.terms.size(); ++i) {
    if (i) joined += ", ";
    joined += spec.terms[i];
  }
  std::size_t first = prompt.find(joined);
  REQUIRE(first != std::string::npos);
  CHECK(prompt.find(joined, first + 1) == std::string::npos);
}

TEST_CASE("prompt rendering validates its inputs") {
  PromptSpec spec = spec_for("OCD");

  PromptSpec no_disorder = spec;
  no_disorder.disorder.clear();
  CHECK_THROWS_AS(no_disorder.render(), ConfigError);

  PromptSpec no_terms = spec;
  no_terms.terms.clear();
  CHECK_THROWS_AS(no_terms.render(), ConfigError);

  PromptSpec bad_template = spec;
  bad_template.template_text = "no placeholders here";
  CHECK_THROWS_AS(bad_template.render(), ConfigError);

  // Custom templates must keep the modality constraints.
  PromptSpec unconstrained = spec;
  unconstrained.template_text = "list features for {disorder}: {terms}";
  CHECK_THROWS_AS(unconstrained.render(), ConfigError);

  CHECK(PromptSpec::default_template().find("{disorder}") != std::string::npos);
  CHECK(PromptSpec::default_template().find("{terms}") != std::string::npos);
}

TEST_CASE("bundled term lists cover the five disorders") {
  std::vector<std::string> names = builtin_disorders();
  REQUIRE(names.size() == 5);

  CHECK(disorder_terms("Anxiety").size() == 24);
  CHECK(disorder_terms("ODD").size() == 24);
  CHECK(disorder_terms("ADHD").size() == 24);
  CHECK(disorder_terms("OCD").size() == 23);
  CHECK(disorder_terms("Conduct").size() == 24);

  // Case-insensitive lookup.
  CHECK(disorder_terms("anxiety") == disorder_terms("Anxiety"));
  CHECK(disorder_terms("ocd").front() == "thalamus");
  CHECK(disorder_terms("Anxiety").front() == "amygdala");

  CHECK_THROWS_AS(disorder_terms("Dysthymia"), ConfigError);
  CHECK_THROWS_AS(fixture_lines("Dysthymia"), ConfigError);
}

TEST_CASE("fixture provider returns the bundled concept lines per disorder") {
  FixtureProvider provider;

  std::vector<std::string> anx = generate_concepts(provider, spec_for("Anxiety"));
  CHECK(anx.size() == 21);
  CHECK(anx.front() == "hyperconnectivity between amygdala and prefrontal cortex");

  CHECK(generate_concepts(provider, spec_for("Conduct")).size() == 19);
  CHECK(generate_concepts(provider, spec_for("ODD")).size() == 21);
  CHECK(generate_concepts(provider, spec_for("ADHD")).size() == 28);

  std::vector<std::string> ocd = generate_concepts(provider, spec_for("OCD"));
  CHECK(ocd.size() == 19);
  bool found = false;
  for (const std::string& line : ocd) {
    if (line == "hyperconnectivity in the anterior cingulate cortex") found = true;
  }
  CHECK(found);
}

TEST_CASE("generation trims blank and padded lines") {
  ScriptedProvider provider("  alpha beta \n\n\t\ngamma\r\n");
  std::vector<std::string> lines = generate_concepts(provider, spec_for("ADHD"));
  REQUIRE(lines.size() == 2);
  CHECK(lines[0] == "alpha beta");
  CHECK(lines[1] == "gamma");
}

TEST_CASE("generation records are appended and reloadable") {
  testutil::TempDir tmp;
  RecordStore store(tmp.file("gen.jsonl"));

  FixtureProvider provider;
  generate_concepts(provider, spec_for("Anxiety"), &store);
  generate_concepts(provider, spec_for("OCD"), &store);

  std::vector<GenerationRecord> recs = RecordStore::load(tmp.file("gen.jsonl"));
  REQUIRE(recs.size() == 2);
  CHECK(recs[0].disorder == "Anxiety");
  CHECK(recs[0].provider == "fixture");
  CHECK(recs[0].response_lines.size() == 21);
  CHECK(recs[0].prompt.find("\"Anxiety\"") != std::string::npos);
  CHECK(recs[0].timestamp > 0);
  CHECK(recs[1].disorder == "OCD");
  CHECK(recs[0].record_id != recs[1].record_id);
  CHECK_FALSE(recs[0].record_id.empty());

  CHECK_THROWS_AS(RecordStore::load(tmp.file("missing.jsonl")), IoError);
}

TEST_CASE("empty generations raise after the record is persisted") {
  testutil::TempDir tmp;
  RecordStore store(tmp.file("gen.jsonl"));

  ScriptedProvider provider("\n   \n\t\n");
  CHECK_THROWS_AS(generate_concepts(provider, spec_for("ADHD"), &store),
                  EmptyGenerationError);

  std::vector<GenerationRecord> recs = RecordStore::load(tmp.file("gen.jsonl"));
  REQUIRE(recs.size() == 1);
  CHECK(recs[0].provider == "scripted");
}

TEST_CASE("http provider refuses to run without a credential") {
  KeyGuard guard;
  ::unsetenv("CONCEPTNEURO_LLM_API_KEY");

  // Unroutable endpoint: reaching the network would fail differently, so an
  // AuthError proves the credential check happens first.
  HttpProvider provider("http://127.0.0.1:1/v1", "test-model", 0.0);
  CHECK_THROWS_AS(provider.complete("prompt"), AuthError);

  ::setenv("CONCEPTNEURO_LLM_API_KEY", "", 1);
  CHECK_THROWS_AS(provider.complete("prompt"), AuthError);
}

TEST_CASE("http provider round-trips against a local server") {
  KeyGuard guard;
  ::setenv("CONCEPTNEURO_LLM_API_KEY", "test-secret", 1);

  httplib::Server server;
  std::string seen_auth;
  std::string seen_body;
  server.Post("/v1/chat/completions",
              [&](const httplib::Request& req, httplib::Response& res) {
                seen_auth = req.get_header_value("Authorization");
                seen_body = req.body;
                nlohmann::json j;
                j["choices"] = nlohmann::json::array(
                    {nlohmann::json{{"message", nlohmann::json{{"content", "one\ntwo\n"}}}}});
                res.set_content(j.dump(), "application/json");
              });
  server.Post("/unauthorized/chat/completions",
              [](const httplib::Request&, httplib::Response& res) { res.status = 401; });
  server.Post("/broken/chat/completions",
              [](const httplib::Request&, httplib::Response& res) {
                res.status = 500;
                res.set_content("boom", "text/plain");
              });
  server.Post("/garbled/chat/completions",
              [](const httplib::Request&, httplib::Response& res) {
                res.set_content("not json", "text/plain");
              });

  int port = server.bind_to_any_port("127.0.0.1");
  REQUIRE(port > 0);
  std::thread runner([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  std::string base = "http://127.0.0.1:" + std::to_string(port);

  HttpProvider ok(base + "/v1", "test-model", 0.25);
  CHECK(ok.complete("list features") == "one\ntwo\n");
  CHECK(seen_auth == "Bearer test-secret");
  nlohmann::json sent = nlohmann::json::parse(seen_body);
  CHECK(sent.at("model") == "test-model");
  CHECK(sent.at("temperature").get<double>() == 0.25);
  CHECK(sent.at("messages").at(0).at("role") == "user");
  CHECK(sent.at("messages").at(0).at("content") == "list features");

  std::vector<std::string> lines = generate_concepts(ok, spec_for("ADHD"));
  REQUIRE(lines.size() == 2);
  CHECK(lines[0] == "one");
  CHECK(lines[1] == "two");

  HttpProvider denied(base + "/unauthorized", "test-model", 0.0);
  CHECK_THROWS_AS(denied.complete("x"), AuthError);

  HttpProvider broken(base + "/broken", "test-model", 0.0);
  try {
    broken.complete("x");
    FAIL("expected HttpStatusError");
  } catch (const HttpStatusError& e) {
    CHECK(e.status() == 500);
  }

  HttpProvider garbled(base + "/garbled", "test-model", 0.0);
  CHECK_THROWS_AS(garbled.complete("x"), ProviderError);

  server.stop();
  runner.join();

  HttpProvider unreachable(base + "/v1", "test-model", 0.0);
  CHECK_THROWS_AS(unreachable.complete("x"), NetworkError);
}

TEST_CASE("provider construction and config loading") {
  CHECK_THROWS_AS(HttpProvider("", "m", 0.0), ConfigError);
  CHECK_THROWS_AS(HttpProvider("http://x", "", 0.0), ConfigError);
  CHECK_THROWS_AS(HttpProvider("no-scheme", "m", 0.0).complete("x"), Error);

  ProviderConfig fixture_cfg;
  fixture_cfg.kind = "fixture";
  CHECK(make_provider(fixture_cfg)->name() == "fixture");

  ProviderConfig http_cfg;
  http_cfg.kind = "http";
  http_cfg.endpoint = "http://127.0.0.1:1/v1";
  http_cfg.model = "m";
  CHECK(make_provider(http_cfg)->name() == "http:m");

  ProviderConfig unknown;
  unknown.kind = "carrier-pigeon";
  CHECK_THROWS_AS(make_provider(unknown), ConfigError);

  testutil::TempDir tmp;
  testutil::write_file(tmp.file("provider.json"),
                       R"({"kind":"http","endpoint":"http://h/v1","model":"m","temperature":0.5})");
  ProviderConfig loaded = load_provider_config(tmp.file("provider.json"));
  CHECK(loaded.kind == "http");
  CHECK(loaded.endpoint == "http://h/v1");
  CHECK(loaded.model == "m");
  CHECK(loaded.temperature == 0.5);

  CHECK_THROWS_AS(load_provider_config(tmp.file("absent.json")), IoError);
  testutil::write_file(tmp.file("broken.json"), "{");
  CHECK_THROWS_AS(load_provider_config(tmp.file("broken.json")), ParseError);
}
