#pragma once

#include <string>
#include <vector>

#include "bifuser/imaging/types.hpp"

namespace bifuser::imaging {

/// One validated manifest row. Paths are resolved relative to the manifest's
/// directory unless absolute.
struct ManifestRow {
  std::string image_path;
  std::string vessel_path;  // may be empty
  double fovea_x = 0.0;
  double fovea_y = 0.0;
  double od_radius_px = 0.0;
  std::string split;  // "train" / "test"
  Index width = 0, height = 0;
};

/// Lazily-loading dataset over a manifest CSV with schema
/// `image_path,vessel_path,fovea_x,fovea_y,od_radius_px,split`.
/// Rows without an explicit split are assigned train/test 4:1 by a
/// deterministic hash of the image path.
class Dataset {
 public:
  Dataset(std::vector<ManifestRow> rows, std::string root);

  std::size_t size() const { return rows_.size(); }
  const ManifestRow& row(std::size_t i) const { return rows_[i]; }
  RawSample load(std::size_t i) const;
  std::vector<std::size_t> split_indices(const std::string& split) const;
  const std::string& root() const { return root_; }

 private:
  std::vector<ManifestRow> rows_;
  std::string root_;
};

Dataset load_manifest(const std::string& path);

/// Writes the canonical manifest header plus rows (used by the generator CLI).
void write_manifest(const std::string& path, const std::vector<ManifestRow>& rows);

}  // namespace bifuser::imaging
