#pragma once

// Free-text connectivity concepts: parsing against a region lexicon,
// filtering, subgraph extraction, and data-driven ranking.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cneuro/atlas.hpp"
#include "cneuro/dataset.hpp"

namespace cneuro {

// One connectivity concept: a pair of ROI sets plus an optional direction
// claim (+1 hyper, -1 hypo, 0 none). Freshly generated records carry only
// raw_text; parse fills the sets or sets `unresolved`.
struct Concept {
  std::string id;
  std::string disorder;
  std::string raw_text;
  std::vector<int> set_a;  // sorted ascending
  std::vector<int> set_b;  // sorted ascending, disjoint from set_a
  int direction = 0;
  std::optional<double> score;
  std::string unresolved;  // parse failure reason, empty when resolved

  bool resolved() const { return unresolved.empty() && !set_a.empty() && !set_b.empty(); }

  // Checks ordering, uniqueness, disjointness and atlas range on the sets.
  void validate(std::size_t atlas_size) const;
};

struct Lexicon {
  // Lower-case region phrase -> sorted roi ids.
  std::map<std::string, std::vector<int>> terms;
  std::vector<std::string> positive_keywords;
  std::vector<std::string> negative_keywords;

  void validate(const Atlas& atlas) const;
};

Lexicon load_lexicon(const std::string& path);
void save_lexicon(const Lexicon& lex, const std::string& path);

// Resolves raw concept text into ROI sets:
//  - direction from the first directional keyword in the text (word-prefix
//    match, longest keyword wins at a given position),
//  - two-sided phrases split at "between..and", "from..to", "with", "to",
//    or a hyphen joining two resolvable phrases, region phrases resolved
//    longest-first against the lexicon,
//  - one-sided "within X" phrases split X across hemispheres,
//  - overlapping sides repaired by removing the shared ROIs from the larger
//    side.
// Failure reasons: "no-regions", "one-sided", "no-bilateral-split",
// "overlap-empty".
Concept parse_concept(const std::string& text, const Lexicon& lexicon,
                      const Atlas& atlas);

// Canonical text for a resolved concept; parsing it again yields the same
// sets and direction (given a lexicon that knows the atlas ROI names).
std::string render_concept(const Concept& c, const Atlas& atlas);

// Drops unresolved and undersized (< 2 per side) candidates, then removes
// near-duplicates: a candidate whose edge-set Jaccard overlap with an
// already-kept survivor exceeds `jaccard_threshold` is dropped. Surviving
// order matches input order. Throws if nothing survives or if candidates mix
// disorder tags.
std::vector<Concept> filter_concepts(const std::vector<Concept>& candidates,
                                     double jaccard_threshold = 0.8);

// Jaccard overlap of the unordered edge sets of two concepts.
double edge_jaccard(const Concept& a, const Concept& b);

// The |set_a| x |set_b| block of a subject's adjacency selected by a concept.
struct ConceptSubgraph {
  std::vector<int> nodes_a;
  std::vector<int> nodes_b;
  std::vector<double> weights;  // row-major |set_a| x |set_b|

  double w(std::size_t r, std::size_t s) const { return weights[r * nodes_b.size() + s]; }
};

ConceptSubgraph extract_subgraph(const SubjectGraph& g, const Concept& c);

// Scores each concept as the mean bipartite edge weight over the named split
// (signed by default, absolute optional) and returns concepts sorted by
// score descending, ties broken by id. Summation order is fixed: subjects
// outer, row-major edges inner, per-subject mean accumulated then divided by
// the subject count.
std::vector<Concept> rank_concepts(const Dataset& ds, const std::string& split_name,
                                   std::vector<Concept> concepts,
                                   bool absolute = false);

// First min(n, size) concepts; input is expected ranked.
std::vector<Concept> select_top(const std::vector<Concept>& ranked, std::size_t n);

// JSONL persistence, one concept per line.
std::vector<Concept> load_concepts_jsonl(const std::string& path);
void save_concepts_jsonl(const std::string& path, const std::vector<Concept>& concepts);

// Stable digest over ids, sets and directions; checkpoints embed it so
// inference can refuse mismatched concept files.
std::string concepts_hash(const std::vector<Concept>& concepts);

}  // namespace cneuro
