#include "cneuro/concepts.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "cneuro/error.hpp"
#include "cneuro/hash.hpp"

namespace cneuro {

void Concept::validate(std::size_t atlas_size) const {
  auto check_set = [&](const std::vector<int>& s, const char* which) {
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s[i] < 0 || s[i] >= static_cast<int>(atlas_size)) {
        throw SchemaError("concept '" + id + "': " + which + " roi " +
                          std::to_string(s[i]) + " out of atlas range");
      }
      if (i > 0 && s[i] <= s[i - 1]) {
        throw SchemaError("concept '" + id + "': " + which + " must be sorted and unique");
      }
    }
  };
  check_set(set_a, "set_a");
  check_set(set_b, "set_b");
  std::vector<int> both;
  std::set_intersection(set_a.begin(), set_a.end(), set_b.begin(), set_b.end(),
                        std::back_inserter(both));
  if (!both.empty()) {
    throw SchemaError("concept '" + id + "': sets share roi " + std::to_string(both[0]));
  }
  if (direction != 0 && direction != 1 && direction != -1) {
    throw SchemaError("concept '" + id + "': direction must be -1, 0 or +1");
  }
}

void Lexicon::validate(const Atlas& atlas) const {
  for (const auto& [term, ids] : terms) {
    if (term.empty()) throw SchemaError("lexicon: empty term");
    if (ids.empty()) throw SchemaError("lexicon: term '" + term + "' has no rois");
    for (int id : ids) {
      if (id < 0 || id >= static_cast<int>(atlas.size())) {
        throw SchemaError("lexicon: term '" + term + "' references roi " +
                          std::to_string(id) + " outside the atlas");
      }
    }
  }
  std::set<std::string> pos, neg;
  for (const std::string& k : positive_keywords) pos.insert(lowercase(k));
  for (const std::string& k : negative_keywords) neg.insert(lowercase(k));
  for (const std::string& k : neg) {
    if (pos.count(k)) {
      throw SchemaError("lexicon: keyword '" + k + "' is both positive and negative");
    }
  }
}

Lexicon load_lexicon(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("lexicon: cannot open '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("lexicon: invalid JSON in '" + path + "': " + e.what());
  }
  Lexicon lex;
  if (!j.contains("terms") || !j.at("terms").is_object()) {
    throw ParseError("lexicon: missing 'terms' object in '" + path + "'");
  }
  for (const auto& [term, ids] : j.at("terms").items()) {
    std::vector<int> v = ids.get<std::vector<int>>();
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    lex.terms[lowercase(term)] = std::move(v);
  }
  if (j.contains("positive_keywords")) {
    lex.positive_keywords = j.at("positive_keywords").get<std::vector<std::string>>();
  }
  if (j.contains("negative_keywords")) {
    lex.negative_keywords = j.at("negative_keywords").get<std::vector<std::string>>();
  }
  return lex;
}

void save_lexicon(const Lexicon& lex, const std::string& path) {
  nlohmann::json j;
  j["terms"] = nlohmann::json::object();
  for (const auto& [term, ids] : lex.terms) j["terms"][term] = ids;
  j["positive_keywords"] = lex.positive_keywords;
  j["negative_keywords"] = lex.negative_keywords;
  std::ofstream out(path);
  if (!out) throw IoError("lexicon: cannot write '" + path + "'");
  out << j.dump(1) << "\n";
}

namespace {

bool word_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}

bool starts_word(const std::string& s, std::size_t pos) {
  return pos == 0 || !word_char(s[pos - 1]);
}

bool ends_word(const std::string& s, std::size_t end) {
  return end >= s.size() || !word_char(s[end]);
}

// Region phrases found in `text`, resolved greedily: at every word start the
// longest matching lexicon term wins and the scan resumes after it.
std::vector<int> resolve_regions(const std::string& text,
                                 const std::vector<std::pair<std::string, const std::vector<int>*>>& by_length) {
  std::set<int> ids;
  std::size_t i = 0;
  while (i < text.size()) {
    if (!word_char(text[i]) || !starts_word(text, i)) {
      ++i;
      continue;
    }
    bool matched = false;
    for (const auto& [term, rois] : by_length) {
      if (term.size() > text.size() - i) continue;
      if (text.compare(i, term.size(), term) != 0) continue;
      if (!ends_word(text, i + term.size())) continue;
      ids.insert(rois->begin(), rois->end());
      i += term.size();
      matched = true;
      break;
    }
    if (!matched) {
      while (i < text.size() && word_char(text[i])) ++i;
    }
  }
  return std::vector<int>(ids.begin(), ids.end());
}

std::vector<std::pair<std::string, const std::vector<int>*>> terms_by_length(
    const Lexicon& lex) {
  std::vector<std::pair<std::string, const std::vector<int>*>> v;
  v.reserve(lex.terms.size());
  for (const auto& [term, ids] : lex.terms) v.emplace_back(term, &ids);
  std::stable_sort(v.begin(), v.end(), [](const auto& a, const auto& b) {
    if (a.first.size() != b.first.size()) return a.first.size() > b.first.size();
    return a.first < b.first;
  });
  return v;
}

// First directional keyword by text position; at equal positions the longer
// keyword wins. Keywords match as word prefixes so "hyper" covers
// "hyperconnectivity".
int find_direction(const std::string& text, const Lexicon& lex) {
  std::size_t best_pos = std::string::npos;
  std::size_t best_len = 0;
  int best_dir = 0;
  auto scan = [&](const std::vector<std::string>& keywords, int dir) {
    for (const std::string& raw : keywords) {
      std::string k = lowercase(raw);
      std::size_t pos = 0;
      while ((pos = text.find(k, pos)) != std::string::npos) {
        if (starts_word(text, pos)) {
          if (pos < best_pos || (pos == best_pos && k.size() > best_len)) {
            best_pos = pos;
            best_len = k.size();
            best_dir = dir;
          }
          break;
        }
        ++pos;
      }
    }
  };
  scan(lex.positive_keywords, 1);
  scan(lex.negative_keywords, -1);
  return best_dir;
}

struct SplitSpan {
  bool found = false;
  std::string left, right;
};

SplitSpan split_two_sided(const std::string& text) {
  SplitSpan out;
  // between X and Y
  std::size_t b = text.find(" between ");
  if (b != std::string::npos) {
    std::size_t a = text.find(" and ", b + 9);
    if (a != std::string::npos) {
      out.found = true;
      out.left = text.substr(b + 9, a - (b + 9));
      out.right = text.substr(a + 5);
      return out;
    }
  }
  // from X to Y
  std::size_t f = text.find(" from ");
  if (f == std::string::npos && text.rfind("from ", 0) == 0) f = 0;  // leading "from"
  if (f != std::string::npos) {
    std::size_t start = (f == 0 && text.rfind("from ", 0) == 0) ? 5 : f + 6;
    std::size_t t = text.find(" to ", start);
    if (t != std::string::npos) {
      out.found = true;
      out.left = text.substr(start, t - start);
      out.right = text.substr(t + 4);
      return out;
    }
  }
  // X with Y
  std::size_t w = text.find(" with ");
  if (w != std::string::npos) {
    out.found = true;
    out.left = text.substr(0, w);
    out.right = text.substr(w + 6);
    return out;
  }
  // X to Y
  std::size_t t = text.find(" to ");
  if (t != std::string::npos) {
    out.found = true;
    out.left = text.substr(0, t);
    out.right = text.substr(t + 4);
    return out;
  }
  return out;
}

}  // namespace

Concept parse_concept(const std::string& text, const Lexicon& lexicon, const Atlas& atlas) {
  Concept c;
  c.raw_text = text;
  std::string lc = lowercase(text);
  auto by_length = terms_by_length(lexicon);

  c.direction = find_direction(lc, lexicon);

  std::vector<int> side_a, side_b;
  bool two_sided = false;

  SplitSpan span = split_two_sided(lc);
  if (span.found) {
    side_a = resolve_regions(span.left, by_length);
    side_b = resolve_regions(span.right, by_length);
    if (side_a.empty() && side_b.empty()) {
      c.unresolved = "no-regions";
      return c;
    }
    if (side_a.empty() || side_b.empty()) {
      c.unresolved = "one-sided";
      return c;
    }
    two_sided = true;
  }

  if (!two_sided) {
    // Hyphen joining two resolvable phrases ("parahippocampal-prefrontal").
    for (std::size_t h = lc.find('-'); h != std::string::npos; h = lc.find('-', h + 1)) {
      if (h == 0 || h + 1 >= lc.size()) continue;
      if (!word_char(lc[h - 1]) || !word_char(lc[h + 1])) continue;
      std::vector<int> l = resolve_regions(lc.substr(0, h), by_length);
      std::vector<int> r = resolve_regions(lc.substr(h + 1), by_length);
      if (!l.empty() && !r.empty()) {
        side_a = std::move(l);
        side_b = std::move(r);
        two_sided = true;
        break;
      }
    }
  }

  if (!two_sided) {
    // Whole text names a single region phrase: split it across hemispheres.
    std::vector<int> all = resolve_regions(lc, by_length);
    if (all.empty()) {
      c.unresolved = "no-regions";
      return c;
    }
    for (int id : all) {
      switch (atlas.roi(id).hemisphere) {
        case Hemisphere::kLeft: side_a.push_back(id); break;
        case Hemisphere::kRight: side_b.push_back(id); break;
        case Hemisphere::kMidline: break;  // midline rois drop out of a bilateral split
      }
    }
    if (side_a.empty() || side_b.empty()) {
      c.unresolved = "no-bilateral-split";
      return c;
    }
  }

  std::sort(side_a.begin(), side_a.end());
  std::sort(side_b.begin(), side_b.end());

  // Remove shared ROIs from the larger side.
  std::vector<int> shared;
  std::set_intersection(side_a.begin(), side_a.end(), side_b.begin(), side_b.end(),
                        std::back_inserter(shared));
  if (!shared.empty()) {
    std::vector<int>& bigger = side_a.size() > side_b.size() ? side_a : side_b;
    std::vector<int> pruned;
    std::set_difference(bigger.begin(), bigger.end(), shared.begin(), shared.end(),
                        std::back_inserter(pruned));
    bigger = std::move(pruned);
    if (side_a.empty() || side_b.empty()) {
      c.unresolved = "overlap-empty";
      return c;
    }
  }

  c.set_a = std::move(side_a);
  c.set_b = std::move(side_b);
  c.validate(atlas.size());
  return c;
}

std::string render_concept(const Concept& c, const Atlas& atlas) {
  if (!c.resolved()) {
    throw InputError("render: concept '" + c.id + "' is unresolved");
  }
  std::string out;
  if (c.direction > 0) out = "increased";
  else if (c.direction < 0) out = "decreased";
  else out = "altered";
  out += " connectivity between ";
  for (std::size_t i = 0; i < c.set_a.size(); ++i) {
    if (i) out += ", ";
    out += atlas.roi(c.set_a[i]).name;
  }
  out += " and ";
  for (std::size_t i = 0; i < c.set_b.size(); ++i) {
    if (i) out += ", ";
    out += atlas.roi(c.set_b[i]).name;
  }
  return out;
}

namespace {

std::set<std::pair<int, int>> edge_set(const Concept& c) {
  std::set<std::pair<int, int>> edges;
  for (int u : c.set_a) {
    for (int v : c.set_b) {
      edges.insert({std::min(u, v), std::max(u, v)});
    }
  }
  return edges;
}

}  // namespace

double edge_jaccard(const Concept& a, const Concept& b) {
  auto ea = edge_set(a);
  auto eb = edge_set(b);
  if (ea.empty() && eb.empty()) return 1.0;
  std::size_t inter = 0;
  for (const auto& e : ea) inter += eb.count(e);
  std::size_t uni = ea.size() + eb.size() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

std::vector<Concept> filter_concepts(const std::vector<Concept>& candidates,
                                     double jaccard_threshold) {
  std::string disorder;
  bool have_disorder = false;
  for (const Concept& c : candidates) {
    if (!have_disorder) {
      disorder = c.disorder;
      have_disorder = true;
    } else if (c.disorder != disorder) {
      throw InputError("filter: mixed disorder tags '" + disorder + "' and '" +
                       c.disorder + "'");
    }
  }

  std::vector<Concept> survivors;
  for (const Concept& c : candidates) {
    if (!c.resolved()) continue;
    if (c.set_a.size() < 2 || c.set_b.size() < 2) continue;
    bool duplicate = false;
    for (const Concept& kept : survivors) {
      if (edge_jaccard(c, kept) > jaccard_threshold) {
        duplicate = true;
        break;
      }
    }
    if (!duplicate) survivors.push_back(c);
  }
  if (survivors.empty()) {
    throw InputError("filter: no-valid-concepts");
  }
  return survivors;
}

ConceptSubgraph extract_subgraph(const SubjectGraph& g, const Concept& c) {
  ConceptSubgraph sub;
  sub.nodes_a = c.set_a;
  sub.nodes_b = c.set_b;
  sub.weights.reserve(c.set_a.size() * c.set_b.size());
  for (int u : c.set_a) {
    for (int v : c.set_b) {
      if (u < 0 || v < 0 || u >= static_cast<int>(g.num_rois) ||
          v >= static_cast<int>(g.num_rois)) {
        throw DimensionError("subgraph: concept '" + c.id + "' roi outside graph");
      }
      sub.weights.push_back(g.a(static_cast<std::size_t>(u), static_cast<std::size_t>(v)));
    }
  }
  return sub;
}

std::vector<Concept> rank_concepts(const Dataset& ds, const std::string& split_name,
                                   std::vector<Concept> concepts, bool absolute) {
  const std::vector<std::size_t>& idx = ds.split(split_name);
  if (idx.empty()) throw InputError("rank: split '" + split_name + "' is empty");
  if (concepts.empty()) throw InputError("rank: no concepts");

  for (Concept& c : concepts) {
    if (!c.resolved()) {
      throw InputError("rank: concept '" + c.id + "' is unresolved");
    }
    const double edge_count = static_cast<double>(c.set_a.size() * c.set_b.size());
    double total = 0.0;
    for (std::size_t i : idx) {
      ConceptSubgraph sub = extract_subgraph(ds.subjects[i], c);
      double edge_sum = 0.0;
      for (double w : sub.weights) edge_sum += absolute ? std::fabs(w) : w;
      total += edge_sum / edge_count;
    }
    c.score = total / static_cast<double>(idx.size());
  }

  std::stable_sort(concepts.begin(), concepts.end(), [](const Concept& a, const Concept& b) {
    if (*a.score != *b.score) return *a.score > *b.score;
    return a.id < b.id;
  });
  return concepts;
}

std::vector<Concept> select_top(const std::vector<Concept>& ranked, std::size_t n) {
  std::vector<Concept> out(ranked.begin(),
                           ranked.begin() + static_cast<std::ptrdiff_t>(std::min(n, ranked.size())));
  return out;
}

namespace {

nlohmann::json concept_to_json(const Concept& c) {
  nlohmann::json j;
  j["id"] = c.id;
  j["disorder"] = c.disorder;
  j["raw_text"] = c.raw_text;
  j["set_a"] = c.set_a;
  j["set_b"] = c.set_b;
  if (c.direction == 0) j["direction"] = nullptr;
  else j["direction"] = c.direction;
  if (c.score) j["score"] = *c.score;
  else j["score"] = nullptr;
  if (!c.unresolved.empty()) j["unresolved"] = c.unresolved;
  return j;
}

Concept concept_from_json(const nlohmann::json& j, std::size_t line) {
  auto where = [line]() { return " (line " + std::to_string(line) + ")"; };
  for (const char* field : {"id", "disorder", "raw_text", "set_a", "set_b", "direction"}) {
    if (!j.contains(field)) {
      throw ParseError("concepts: missing field '" + std::string(field) + "'" + where());
    }
  }
  Concept c;
  c.id = j.at("id").get<std::string>();
  c.disorder = j.at("disorder").get<std::string>();
  c.raw_text = j.at("raw_text").get<std::string>();
  c.set_a = j.at("set_a").get<std::vector<int>>();
  c.set_b = j.at("set_b").get<std::vector<int>>();
  if (!j.at("direction").is_null()) {
    c.direction = j.at("direction").get<int>();
    if (c.direction != 1 && c.direction != -1) {
      throw ParseError("concepts: direction must be 1, -1 or null" + where());
    }
  }
  if (j.contains("score") && !j.at("score").is_null()) {
    c.score = j.at("score").get<double>();
  }
  if (j.contains("unresolved") && !j.at("unresolved").is_null()) {
    c.unresolved = j.at("unresolved").get<std::string>();
  }
  return c;
}

}  // namespace

std::vector<Concept> load_concepts_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("concepts: cannot open '" + path + "'");
  std::vector<Concept> out;
  std::string line;
  std::size_t lineno = 0;
  std::set<std::string> seen_ids;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("concepts: invalid JSON at line " + std::to_string(lineno) + ": " +
                       e.what());
    }
    Concept c = concept_from_json(j, lineno);
    if (!seen_ids.insert(c.id).second) {
      throw SchemaError("concepts: duplicate id '" + c.id + "' at line " +
                        std::to_string(lineno));
    }
    out.push_back(std::move(c));
  }
  return out;
}

void save_concepts_jsonl(const std::string& path, const std::vector<Concept>& concepts) {
  std::ofstream out(path);
  if (!out) throw IoError("concepts: cannot write '" + path + "'");
  for (const Concept& c : concepts) {
    out << concept_to_json(c).dump() << "\n";
  }
  if (!out) throw IoError("concepts: write failed for '" + path + "'");
}

std::string concepts_hash(const std::vector<Concept>& concepts) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  auto mix_str = [&h](const std::string& s) {
    h = fnv1a64(s.data(), s.size(), h);
    h = fnv1a64("|", 1, h);
  };
  for (const Concept& c : concepts) {
    mix_str(c.id);
    std::string sets = "a";
    for (int v : c.set_a) sets += ":" + std::to_string(v);
    sets += ";b";
    for (int v : c.set_b) sets += ":" + std::to_string(v);
    sets += ";d" + std::to_string(c.direction);
    mix_str(sets);
  }
  return to_hex(h);
}

}  // namespace cneuro
