#pragma once

// Brain atlas: the fixed ROI universe every other module indexes into.

#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace cneuro {

enum class Hemisphere { kLeft, kRight, kMidline };

Hemisphere hemisphere_from_string(const std::string& s);
std::string hemisphere_to_string(Hemisphere h);

struct RoiRecord {
  int id = -1;
  std::string name;
  std::vector<std::string> aliases;
  Hemisphere hemisphere = Hemisphere::kMidline;
  std::optional<std::string> group;
};

class Atlas {
 public:
  // Validates the full schema: ids contiguous from 0, names unique
  // case-insensitively, every alias resolving to exactly one ROI.
  explicit Atlas(std::vector<RoiRecord> rois);

  std::size_t size() const { return rois_.size(); }
  const RoiRecord& roi(int id) const { return rois_[static_cast<std::size_t>(id)]; }
  const std::vector<RoiRecord>& rois() const { return rois_; }

  // Case-insensitive lookup over names and aliases.
  std::optional<int> find(const std::string& name_or_alias) const;

 private:
  std::vector<RoiRecord> rois_;
  std::unordered_map<std::string, int> index_;
};

// Reads the atlas JSON file (array of ROI records).
Atlas load_atlas(const std::string& path);

// Writes the atlas back out in the same format.
void save_atlas(const Atlas& atlas, const std::string& path);

std::string lowercase(const std::string& s);

}  // namespace cneuro
