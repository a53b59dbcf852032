#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include "cneuro/conceptgen.hpp"

#include <atomic>
#include <cstdlib>
#include <ctime>
#include <fstream>

#include <json.hpp>

#include "cneuro/atlas.hpp"  // lowercase
#include "cneuro/error.hpp"
#include "cneuro/hash.hpp"

namespace cneuro {

namespace {

struct DisorderData {
  const char* name;
  std::vector<std::string> terms;
  std::vector<std::string> lines;
};

const std::vector<DisorderData>& disorder_table() {
  static const std::vector<DisorderData> table = {
      {"Anxiety",
       {"amygdala", "prefrontal", "insula", "cingulate", "thalamus", "occipital",
        "brainstem", "somatization", "dlpfc", "orbitofrontal", "left", "acc", "right",
        "hippocampus", "fa", "fusiform gyrus", "memory", "precuneus", "parahippocampal",
        "motion", "ofc", "hope", "frontal", "task"},
       {"hyperconnectivity between amygdala and prefrontal cortex",
        "aberrant connectivity between parahippocampal gyrus and cingulate cortex",
        "altered connectivity from orbitofrontal cortex (OFC) to amygdala",
        "decreased connectivity between dorsolateral prefrontal cortex and orbitofrontal cortex",
        "decreased connectivity between occipital cortex and prefrontal cortex",
        "decreased connectivity between right hippocampus and precuneus",
        "dysfunctional communication between cingulate cortex and frontal regions",
        "dysregulated connectivity within anterior cingulate cortex (ACC)",
        "elevated connectivity between DLPFC and cingulate cortex",
        "elevated connectivity between insula and amygdala",
        "elevated insula to somatosensory cortex connectivity",
        "enhanced functional coupling between parahippocampal gyrus and occipital cortex",
        "heightened synchronization between amygdala and hippocampus",
        "hyperconnectivity within anterior cingulate cortex",
        "altered connectivity between left hippocampus and prefrontal cortex",
        "increased connectivity between frontal cortex and brainstem",
        "increased connectivity between right hippocampus and prefrontal regions",
        "increased connectivity between thalamus and prefrontal regions",
        "increased connectivity in parahippocampal-prefrontal networks",
        "increased functional connectivity between insula and anterior cingulate cortex",
        "reduced functional connectivity between DLPFC and limbic regions"}},
      {"ODD",
       {"reward", "fa", "cerebellum", "white matter", "tensor", "matter", "occipital",
        "precuneus", "white", "cingulate", "prefrontal", "insula", "frontal", "motion",
        "striatum", "superior", "right", "motor", "inferior", "left", "orbitofrontal",
        "task", "striatal", "somatization"},
       {"altered functional connectivity between the right prefrontal cortex and striatum",
        "altered functional connectivity between the left prefrontal cortex and the striatum",
        "aberrant connectivity between the ventral striatum and precuneus",
        "abnormal connectivity patterns in the inferior frontal gyrus",
        "altered functional coupling between the cerebellum and prefrontal cortex",
        "attenuated connectivity between the left inferior frontal gyrus and occipital regions",
        "augmented connectivity between superior frontal areas and motor cortex",
        "decreased functional connectivity between the motor cortex and reward regions",
        "diminished functional connectivity from the superior frontal gyrus to the precuneus",
        "dysregulated connectivity from the ventral striatum to the left motor cortex",
        "elevated functional connectivity in the left orbitofrontal cortex",
        "enhanced connectivity between the cingulate cortex and somatomotor areas",
        "higher functional connection between the left inferior frontal gyrus and the right striatum",
        "hyperconnectivity of the insula with the anterior cingulate cortex",
        "hyperconnectivity within the right orbitofrontal cortex",
        "impaired connectivity between the prefrontal cortex and somatosensory areas",
        "increased synchronization in the superior frontal gyrus networks",
        "increased synchrony between the cerebellum and occipital regions",
        "lowered connectivity between the orbitofrontal cortex and cingulate cortex",
        "reduced connectivity between the dorsolateral prefrontal cortex and occipital cortex",
        "reduced functional connectivity within the right insula"}},
      {"ADHD",
       {"cerebellum", "precuneus", "cingulate", "occipital", "insula", "prefrontal",
        "frontal", "motor", "inferior", "right", "striatal", "superior", "default", "left",
        "orbitofrontal", "motion", "task", "reward", "acc", "sensorimotor", "caudate",
        "lobe", "working memory", "thalamus"},
       {"decreased functional connectivity between prefrontal cortex and striatum",
        "abnormal FC between orbitofrontal cortex and thalamus",
        "altered connectivity between anterior cingulate cortex and cerebellum",
        "altered connectivity between caudate and sensorimotor cortex",
        "altered connectivity between cingulate and sensorimotor cortex",
        "attenuated connectivity between left orbitofrontal cortex and motor cortex",
        "attenuated connectivity between superior frontal gyrus and occipital lobe",
        "attenuated functional connectivity within the working memory network",
        "decreased connectivity between caudate and precuneus",
        "decreased connectivity between inferior frontal gyrus and insula",
        "decreased connectivity between the cerebellum and motor cortex",
        "decreased connectivity within the default mode network (DMN)",
        "decreased functional connectivity between precuneus and occipital lobe",
        "diminished task-related functional connectivity in the right frontal lobe",
        "hypo-connectivity between cingulate cortex and frontal regions",
        "hypo-connectivity within reward processing networks",
        "hypoconnectivity between the cerebellum and prefrontal regions",
        "impaired connectivity between right inferior frontal gyrus and superior frontal gyrus",
        "lower connectivity between the default mode network and superior frontal gyrus",
        "lower synchrony between occipital lobe and reward network",
        "lowered connectivity between motor cortex and somatosensory regions",
        "reduced connectivity between orbitofrontal cortex and insula",
        "reduced connectivity between working memory areas and anterior insula",
        "reduced functional connectivity within the anterior cingulate cortex",
        "reduced FC between insula and sensorimotor network",
        "reduced integration between dorsolateral prefrontal cortex and precuneus",
        "weakened connectivity between caudate and anterior cingulate cortex",
        "weaker connectivity between right inferior frontal gyrus and thalamus"}},
      {"OCD",
       {"thalamus", "cingulate", "frontal", "ofc", "fa", "occipital", "insula", "striatal",
        "white matter", "right", "left", "cerebellum", "acc", "anterior", "orbitofrontal",
        "tensor", "stg", "nucleus", "superior", "task", "lobe", "matter", "basal ganglia"},
       {"altered functional connectivity between orbitofrontal cortex and right thalamus",
        "abnormal connectivity between insula and frontal lobe",
        "abnormal connectivity between the occipital lobe and anterior cingulate",
        "abnormal functional connections between right insula and anterior cingulate cortex",
        "abnormal functional connectivity between the right basal ganglia and frontal lobe",
        "altered connectivity between the cerebellum and prefrontal cortex",
        "altered connectivity between the right OFC and left thalamus",
        "altered functional connectivity in the basal ganglia",
        "elevated connectivity between the caudate nucleus and prefrontal cortex",
        "elevated connectivity between the left orbitofrontal cortex and right anterior cingulate",
        "enhanced connectivity between the striatum and prefrontal cortex",
        "hyperconnectivity between left orbitofrontal cortex and basal ganglia",
        "hyperconnectivity between the anterior cingulate cortex and striatum",
        "hyperconnectivity between the left orbitofrontal cortex and left anterior cingulate",
        "hyperconnectivity between the superior temporal gyrus and cingulate",
        "hyperconnectivity in the anterior cingulate cortex",
        "increased functional connectivity between the right superior frontal gyrus and thalamus",
        "reduced functional connectivity between occipital lobe and frontal areas",
        "altered connectivity between the left OFC and left thalamus"}},
      {"Conduct",
       {"insula", "dmn", "fusiform", "matter", "occipital", "precuneus", "fusiform gyrus",
        "thalamus", "prefrontal", "cingulate", "sma", "orbitofrontal", "motion", "amygdala",
        "ofc", "frontal", "anterior", "brainstem", "cerebellum", "default", "right",
        "superior", "motor", "default mode"},
       {"reduced functional connectivity between anterior cingulate cortex and prefrontal cortex",
        "reduced functional connectivity between the amygdala and prefrontal cortex",
        "abnormal connectivity between fusiform gyrus and occipital cortex",
        "abnormal functional connectivity between the cerebellum and prefrontal cortex",
        "altered connectivity between the left superior frontal gyrus and default mode network",
        "altered functional connectivity between brainstem and prefrontal cortex",
        "altered functional connectivity within the default mode network",
        "attenuated connectivity between orbitofrontal cortex and anterior cingulate cortex",
        "attenuated thalamic connectivity with prefrontal regions",
        "decreased connectivity between amygdala and orbitofrontal cortex",
        "decreased connectivity between fusiform gyrus and anterior cingulate cortex",
        "decreased connectivity between the right superior frontal cortex and motor areas",
        "diminished connectivity between precuneus and superior frontal gyrus",
        "diminished connectivity between right superior frontal gyrus and default mode network",
        "enhanced connectivity within the insula",
        "hyperconnectivity between the insula and anterior cingulate cortex",
        "hypoconnectivity between the anterior brainstem and cingulate cortex",
        "impaired functional links between anterior cingulate cortex and supplementary motor area",
        "reduced connectivity between cingulate cortex and cerebellum"}},
  };
  return table;
}

const DisorderData& find_disorder(const std::string& disorder) {
  std::string key = lowercase(disorder);
  for (const DisorderData& d : disorder_table()) {
    if (lowercase(d.name) == key) return d;
  }
  std::string known;
  for (const DisorderData& d : disorder_table()) {
    if (!known.empty()) known += ", ";
    known += d.name;
  }
  throw ConfigError("conceptgen: unknown disorder '" + disorder + "' (bundled: " + known + ")");
}

constexpr const char* kConstraintFa =
    "You should make sure the generated concepts are not fractional anisotropy (FA) measures.";
constexpr const char* kConstraintFc =
    "You should make sure the generated concepts are derived only to functional connectivity.";

std::string replace_all(std::string s, const std::string& from, const std::string& to) {
  std::size_t pos = 0;
  while ((pos = s.find(from, pos)) != std::string::npos) {
    s.replace(pos, from.size(), to);
    pos += to.size();
  }
  return s;
}

}  // namespace

const std::string& PromptSpec::default_template() {
  static const std::string tmpl = std::string(
      "You need to list the most important visual features of brain images for "
      "diagnosing a patient as \"{disorder}\". You should be specific in generating "
      "these features that are related to single regions. You should make each feature "
      "very concise and clear, and each feature should be separated by a new line. You "
      "should not include any other information or explanation, just the features.\n") +
      kConstraintFa + "\n" + kConstraintFc + "\n" +
      "The generated concepts are related to at least one of the following: {terms}";
  return tmpl;
}

std::string PromptSpec::render() const {
  if (disorder.empty()) throw ConfigError("prompt: disorder is empty");
  if (terms.empty()) throw ConfigError("prompt: term list is empty");
  const std::string& tmpl = template_text.empty() ? default_template() : template_text;
  if (tmpl.find("{disorder}") == std::string::npos ||
      tmpl.find("{terms}") == std::string::npos) {
    throw ConfigError("prompt: template must contain {disorder} and {terms}");
  }
  std::string joined;
  for (std::size_t i = 0; i < terms.size(); ++i) {
    if (i) joined += ", ";
    joined += terms[i];
  }
  std::string out = replace_all(tmpl, "{disorder}", disorder);
  out = replace_all(out, "{terms}", joined);
  if (out.find(kConstraintFa) == std::string::npos ||
      out.find(kConstraintFc) == std::string::npos) {
    throw ConfigError("prompt: rendered prompt is missing a constraint sentence");
  }
  return out;
}

std::vector<std::string> builtin_disorders() {
  std::vector<std::string> out;
  for (const DisorderData& d : disorder_table()) out.push_back(d.name);
  return out;
}

std::vector<std::string> disorder_terms(const std::string& disorder) {
  return find_disorder(disorder).terms;
}

const std::vector<std::string>& fixture_lines(const std::string& disorder) {
  return find_disorder(disorder).lines;
}

void RecordStore::append(const GenerationRecord& rec) const {
  std::ofstream out(path_, std::ios::app);
  if (!out) throw IoError("records: cannot open '" + path_ + "' for append");
  nlohmann::json j;
  j["record_id"] = rec.record_id;
  j["disorder"] = rec.disorder;
  j["prompt"] = rec.prompt;
  j["response_lines"] = rec.response_lines;
  j["provider"] = rec.provider;
  j["timestamp"] = rec.timestamp;
  out << j.dump() << "\n";
  if (!out) throw IoError("records: append failed for '" + path_ + "'");
}

std::vector<GenerationRecord> RecordStore::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("records: cannot open '" + path + "'");
  std::vector<GenerationRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("records: invalid JSON at line " + std::to_string(lineno) + ": " +
                       e.what());
    }
    GenerationRecord r;
    r.record_id = j.at("record_id").get<std::string>();
    r.disorder = j.at("disorder").get<std::string>();
    r.prompt = j.at("prompt").get<std::string>();
    r.response_lines = j.at("response_lines").get<std::vector<std::string>>();
    r.provider = j.at("provider").get<std::string>();
    r.timestamp = j.at("timestamp").get<std::int64_t>();
    out.push_back(std::move(r));
  }
  return out;
}

std::string FixtureProvider::complete(const std::string& prompt) {
  // The rendered prompt always embeds the disorder as `as "X"`.
  std::size_t start = prompt.find("as \"");
  if (start == std::string::npos) {
    throw ConfigError("fixture-provider: prompt does not name a disorder");
  }
  start += 4;
  std::size_t end = prompt.find('"', start);
  if (end == std::string::npos) {
    throw ConfigError("fixture-provider: unterminated disorder name in prompt");
  }
  std::string disorder = prompt.substr(start, end - start);
  const std::vector<std::string>& lines = fixture_lines(disorder);
  std::string out;
  for (const std::string& l : lines) {
    out += l;
    out += "\n";
  }
  return out;
}

HttpProvider::HttpProvider(std::string endpoint, std::string model, double temperature)
    : endpoint_(std::move(endpoint)), model_(std::move(model)), temperature_(temperature) {
  if (endpoint_.empty()) throw ConfigError("http-provider: endpoint is empty");
  if (model_.empty()) throw ConfigError("http-provider: model is empty");
}

std::string HttpProvider::complete(const std::string& prompt) {
  const char* key = std::getenv("CONCEPTNEURO_LLM_API_KEY");
  if (key == nullptr || *key == '\0') {
    throw AuthError("http-provider: CONCEPTNEURO_LLM_API_KEY is not set");
  }

  // endpoint = scheme://host[:port][/base]; the chat completion path is
  // appended to any base path.
  std::size_t scheme_end = endpoint_.find("://");
  if (scheme_end == std::string::npos) {
    throw ConfigError("http-provider: endpoint must include a scheme: " + endpoint_);
  }
  std::size_t path_start = endpoint_.find('/', scheme_end + 3);
  std::string origin =
      path_start == std::string::npos ? endpoint_ : endpoint_.substr(0, path_start);
  std::string base = path_start == std::string::npos ? "" : endpoint_.substr(path_start);
  if (!base.empty() && base.back() == '/') base.pop_back();
  std::string path = base + "/chat/completions";

  nlohmann::json body;
  body["model"] = model_;
  body["temperature"] = temperature_;
  body["messages"] = nlohmann::json::array(
      {nlohmann::json{{"role", "user"}, {"content", prompt}}});

  httplib::Client client(origin);
  client.set_connection_timeout(30);
  client.set_read_timeout(120);
  httplib::Headers headers = {{"Authorization", std::string("Bearer ") + key}};
  auto res = client.Post(path, headers, body.dump(), "application/json");
  if (!res) {
    throw NetworkError("http-provider: request to " + origin + path + " failed: " +
                       httplib::to_string(res.error()));
  }
  if (res->status == 401 || res->status == 403) {
    throw AuthError("http-provider: credential rejected (status " +
                    std::to_string(res->status) + ")");
  }
  if (res->status < 200 || res->status >= 300) {
    std::string snippet = res->body.substr(0, 200);
    throw HttpStatusError(res->status, snippet);
  }
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(res->body);
  } catch (const nlohmann::json::exception& e) {
    throw ProviderError("provider-error",
                        std::string("http-provider: response is not JSON: ") + e.what());
  }
  try {
    return j.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const nlohmann::json::exception&) {
    throw ProviderError("provider-error",
                        "http-provider: response lacks choices[0].message.content");
  }
}

ProviderConfig load_provider_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("provider: cannot open config '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("provider: invalid JSON in '" + path + "': " + e.what());
  }
  ProviderConfig cfg;
  cfg.kind = j.value("kind", std::string());
  cfg.endpoint = j.value("endpoint", std::string());
  cfg.model = j.value("model", std::string());
  cfg.temperature = j.value("temperature", 0.0);
  return cfg;
}

std::unique_ptr<Provider> make_provider(const ProviderConfig& cfg) {
  if (cfg.kind == "fixture") return std::make_unique<FixtureProvider>();
  if (cfg.kind == "http") {
    return std::make_unique<HttpProvider>(cfg.endpoint, cfg.model, cfg.temperature);
  }
  throw ConfigError("provider: unknown kind '" + cfg.kind + "' (expected http or fixture)");
}

std::vector<std::string> generate_concepts(Provider& provider, const PromptSpec& spec,
                                           const RecordStore* store) {
  std::string prompt = spec.render();
  std::string response = provider.complete(prompt);

  std::vector<std::string> raw_lines;
  std::size_t start = 0;
  while (start <= response.size()) {
    std::size_t nl = response.find('\n', start);
    std::string line = nl == std::string::npos ? response.substr(start)
                                               : response.substr(start, nl - start);
    raw_lines.push_back(line);
    if (nl == std::string::npos) break;
    start = nl + 1;
  }
  if (!raw_lines.empty() && raw_lines.back().empty()) raw_lines.pop_back();

  std::vector<std::string> cleaned;
  for (const std::string& line : raw_lines) {
    std::size_t b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    std::size_t e = line.find_last_not_of(" \t\r");
    cleaned.push_back(line.substr(b, e - b + 1));
  }

  if (store != nullptr) {
    static std::atomic<std::uint64_t> counter{0};
    GenerationRecord rec;
    rec.disorder = spec.disorder;
    rec.prompt = prompt;
    rec.response_lines = raw_lines;
    rec.provider = provider.name();
    rec.timestamp = static_cast<std::int64_t>(std::time(nullptr));
    std::uint64_t h = fnv1a64(prompt);
    h = fnv1a64(rec.provider.data(), rec.provider.size(), h);
    h = fnv1a64(&rec.timestamp, sizeof(rec.timestamp), h);
    std::uint64_t n = counter.fetch_add(1);
    h = fnv1a64(&n, sizeof(n), h);
    rec.record_id = "gen-" + to_hex(h);
    store->append(rec);
  }

  if (cleaned.empty()) {
    throw EmptyGenerationError("conceptgen: provider '" + provider.name() +
                               "' returned no concept lines");
  }
  return cleaned;
}

}  // namespace cneuro
