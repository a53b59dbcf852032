#pragma once

// Concept generation: prompt construction, LLM providers (HTTP and an offline
// fixture), and the append-only generation audit log.

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace cneuro {

// Prompt template with {disorder} and {terms} placeholders. The default
// template asks for newline-separated connectivity features, bans structural
// measures, and pins outputs to functional connectivity.
struct PromptSpec {
  std::string disorder;
  std::vector<std::string> terms;
  std::string template_text;  // empty -> default template

  static const std::string& default_template();

  // Substitutes the placeholders. Throws if the disorder or term list is
  // empty, or if a placeholder is missing from a custom template.
  std::string render() const;
};

// Names of the disorders with bundled term lists.
std::vector<std::string> builtin_disorders();

// Bundled term list for a disorder (case-insensitive lookup).
std::vector<std::string> disorder_terms(const std::string& disorder);

// Bundled raw concept lines for offline generation (case-insensitive lookup).
const std::vector<std::string>& fixture_lines(const std::string& disorder);

// Verbatim record of one generation call.
struct GenerationRecord {
  std::string record_id;
  std::string disorder;
  std::string prompt;
  std::vector<std::string> response_lines;  // exact lines, pre-trim
  std::string provider;
  std::int64_t timestamp = 0;  // unix seconds, UTC
};

// Append-only JSONL log of generation records.
class RecordStore {
 public:
  explicit RecordStore(std::string path) : path_(std::move(path)) {}
  void append(const GenerationRecord& rec) const;
  static std::vector<GenerationRecord> load(const std::string& path);

 private:
  std::string path_;
};

class Provider {
 public:
  virtual ~Provider() = default;
  virtual std::string name() const = 0;
  // Returns the raw completion text for a prompt. Throws ProviderError
  // subclasses on transport problems.
  virtual std::string complete(const std::string& prompt) = 0;
};

// Offline provider backed by the bundled per-disorder concept lines. Reads
// the disorder out of the prompt ("... as \"X\"").
class FixtureProvider : public Provider {
 public:
  std::string name() const override { return "fixture"; }
  std::string complete(const std::string& prompt) override;
};

// Generic chat-completion client. POSTs {model, messages, temperature} to
// endpoint and returns choices[0].message.content. The credential comes from
// the CONCEPTNEURO_LLM_API_KEY environment variable; a missing credential
// fails before any network activity.
class HttpProvider : public Provider {
 public:
  HttpProvider(std::string endpoint, std::string model, double temperature);
  std::string name() const override { return "http:" + model_; }
  std::string complete(const std::string& prompt) override;

 private:
  std::string endpoint_;
  std::string model_;
  double temperature_;
};

struct ProviderConfig {
  std::string kind;  // "http" | "fixture"
  std::string endpoint;
  std::string model;
  double temperature = 0.0;
};

ProviderConfig load_provider_config(const std::string& path);
std::unique_ptr<Provider> make_provider(const ProviderConfig& cfg);

// Runs one generation call: renders nothing (prompt comes in pre-rendered via
// spec.render()), splits the response on newlines, trims, drops empties.
// Always appends a GenerationRecord when a store is given, even if the
// response turns out empty (the error is thrown after persisting).
std::vector<std::string> generate_concepts(Provider& provider, const PromptSpec& spec,
                                           const RecordStore* store = nullptr);

}  // namespace cneuro
