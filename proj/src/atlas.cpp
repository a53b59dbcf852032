#include "cneuro/atlas.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

#include <json.hpp>

#include "cneuro/error.hpp"

namespace cneuro {

std::string lowercase(const std::string& s) {
  std::string out = s;
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

Hemisphere hemisphere_from_string(const std::string& s) {
  std::string l = lowercase(s);
  if (l == "left") return Hemisphere::kLeft;
  if (l == "right") return Hemisphere::kRight;
  if (l == "midline") return Hemisphere::kMidline;
  throw SchemaError("atlas: unknown hemisphere '" + s + "'");
}

std::string hemisphere_to_string(Hemisphere h) {
  switch (h) {
    case Hemisphere::kLeft: return "left";
    case Hemisphere::kRight: return "right";
    default: return "midline";
  }
}

Atlas::Atlas(std::vector<RoiRecord> rois) : rois_(std::move(rois)) {
  if (rois_.empty()) throw SchemaError("atlas: empty ROI list");

  std::sort(rois_.begin(), rois_.end(),
            [](const RoiRecord& a, const RoiRecord& b) { return a.id < b.id; });
  for (std::size_t i = 0; i < rois_.size(); ++i) {
    if (rois_[i].id != static_cast<int>(i)) {
      throw SchemaError("atlas: roi ids must cover 0.." +
                        std::to_string(rois_.size() - 1) + " without gaps; found id " +
                        std::to_string(rois_[i].id) + " at position " + std::to_string(i));
    }
  }

  for (const RoiRecord& r : rois_) {
    if (r.name.empty()) {
      throw SchemaError("atlas: roi " + std::to_string(r.id) + " has empty name");
    }
    std::string key = lowercase(r.name);
    auto [it, inserted] = index_.emplace(key, r.id);
    if (!inserted) {
      throw SchemaError("atlas: duplicate name '" + r.name + "' (roi " +
                        std::to_string(it->second) + " and roi " + std::to_string(r.id) + ")");
    }
  }
  // Aliases are indexed after all names so a name/alias collision reports the
  // name's owner as the prior entry.
  for (const RoiRecord& r : rois_) {
    for (const std::string& a : r.aliases) {
      std::string key = lowercase(a);
      auto [it, inserted] = index_.emplace(key, r.id);
      if (!inserted && it->second != r.id) {
        throw SchemaError("atlas: alias '" + a + "' maps to both roi " +
                          std::to_string(it->second) + " and roi " + std::to_string(r.id));
      }
    }
  }
}

std::optional<int> Atlas::find(const std::string& name_or_alias) const {
  auto it = index_.find(lowercase(name_or_alias));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

namespace {

RoiRecord record_from_json(const nlohmann::json& j, std::size_t pos) {
  auto where = [pos]() { return " (record " + std::to_string(pos) + ")"; };
  if (!j.is_object()) throw ParseError("atlas: record is not an object" + where());
  for (const char* field : {"id", "name", "hemisphere"}) {
    if (!j.contains(field)) {
      throw ParseError("atlas: missing field '" + std::string(field) + "'" + where());
    }
  }
  RoiRecord r;
  if (!j.at("id").is_number_integer()) {
    throw ParseError("atlas: 'id' must be an integer" + where());
  }
  r.id = j.at("id").get<int>();
  if (!j.at("name").is_string()) {
    throw ParseError("atlas: 'name' must be a string" + where());
  }
  r.name = j.at("name").get<std::string>();
  if (j.contains("aliases")) {
    if (!j.at("aliases").is_array()) {
      throw ParseError("atlas: 'aliases' must be an array" + where());
    }
    for (const auto& a : j.at("aliases")) {
      if (!a.is_string()) throw ParseError("atlas: alias must be a string" + where());
      r.aliases.push_back(a.get<std::string>());
    }
  }
  r.hemisphere = hemisphere_from_string(j.at("hemisphere").get<std::string>());
  if (j.contains("group") && !j.at("group").is_null()) {
    if (!j.at("group").is_string()) {
      throw ParseError("atlas: 'group' must be a string or null" + where());
    }
    r.group = j.at("group").get<std::string>();
  }
  return r;
}

}  // namespace

Atlas load_atlas(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("atlas: cannot open '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("atlas: invalid JSON in '" + path + "': " + e.what());
  }
  if (!j.is_array()) throw ParseError("atlas: top level must be an array in '" + path + "'");
  std::vector<RoiRecord> rois;
  rois.reserve(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) {
    rois.push_back(record_from_json(j[i], i));
  }
  return Atlas(std::move(rois));
}

void save_atlas(const Atlas& atlas, const std::string& path) {
  nlohmann::json arr = nlohmann::json::array();
  for (const RoiRecord& r : atlas.rois()) {
    nlohmann::json j;
    j["id"] = r.id;
    j["name"] = r.name;
    j["aliases"] = r.aliases;
    j["hemisphere"] = hemisphere_to_string(r.hemisphere);
    if (r.group) {
      j["group"] = *r.group;
    } else {
      j["group"] = nullptr;
    }
    arr.push_back(j);
  }
  std::ofstream out(path);
  if (!out) throw IoError("atlas: cannot write '" + path + "'");
  out << arr.dump(2) << "\n";
}

}  // namespace cneuro
