#include "bifuser/imaging/manifest.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "bifuser/core/random.hpp"

namespace bifuser::imaging {

namespace fs = std::filesystem;

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  fields.push_back(cur);
  return fields;
}

std::string resolve(const std::string& root, const std::string& path) {
  const fs::path p(path);
  return p.is_absolute() ? path : (fs::path(root) / p).string();
}

double parse_number(const std::string& s, std::size_t row, const char* field) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (...) {
    throw BadRow("row " + std::to_string(row) + ": bad " + std::string(field) + " '" + s + "'");
  }
}

}  // namespace

Dataset::Dataset(std::vector<ManifestRow> rows, std::string root)
    : rows_(std::move(rows)), root_(std::move(root)) {}

RawSample Dataset::load(std::size_t i) const {
  const ManifestRow& r = rows_[i];
  RawSample s;
  s.fundus = read_image(r.image_path);
  if (s.fundus.channels == 1) {
    // promote grayscale fundus to 3 channels
    ImageU8 rgb = ImageU8::create(s.fundus.width, s.fundus.height, 3);
    for (Index y = 0; y < s.fundus.height; ++y)
      for (Index x = 0; x < s.fundus.width; ++x)
        for (Index c = 0; c < 3; ++c) rgb.at(y, x, c) = s.fundus.at(y, x, 0);
    s.fundus = std::move(rgb);
  }
  if (!r.vessel_path.empty()) {
    s.vessel = read_image(r.vessel_path);
    if (s.vessel.channels != 1) {
      ImageU8 gray = ImageU8::create(s.vessel.width, s.vessel.height, 1);
      for (Index y = 0; y < s.vessel.height; ++y)
        for (Index x = 0; x < s.vessel.width; ++x) {
          int acc = 0;
          for (Index c = 0; c < s.vessel.channels; ++c) acc += s.vessel.at(y, x, c);
          gray.at(y, x, 0) = static_cast<std::uint8_t>(acc / s.vessel.channels);
        }
      s.vessel = std::move(gray);
    }
    if (s.vessel.width != s.fundus.width || s.vessel.height != s.fundus.height)
      throw MismatchedShapes("row " + std::to_string(i) + ": vessel size differs from fundus");
  }
  s.annotation.fovea_x = r.fovea_x;
  s.annotation.fovea_y = r.fovea_y;
  s.annotation.od_radius_px = r.od_radius_px;
  s.annotation.original_width = r.width;
  s.annotation.original_height = r.height;
  return s;
}

std::vector<std::size_t> Dataset::split_indices(const std::string& split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < rows_.size(); ++i)
    if (rows_[i].split == split) out.push_back(i);
  return out;
}

Dataset load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MissingFile("manifest not found: " + path);
  const std::string root = fs::path(path).parent_path().string();

  std::string line;
  if (!std::getline(in, line)) throw BadRow("manifest is empty: " + path);
  {
    auto header = split_csv_line(line);
    if (header.size() < 6 || header[0] != "image_path")
      throw BadRow("manifest header must be "
                   "image_path,vessel_path,fovea_x,fovea_y,od_radius_px,split");
  }

  std::vector<ManifestRow> rows;
  std::size_t row_idx = 0;
  while (std::getline(in, line)) {
    ++row_idx;
    if (line.empty()) continue;
    auto fields = split_csv_line(line);
    if (fields.size() != 6)
      throw BadRow("row " + std::to_string(row_idx) + ": expected 6 fields, got " +
                   std::to_string(fields.size()));
    ManifestRow r;
    r.image_path = resolve(root, fields[0]);
    r.vessel_path = fields[1].empty() ? std::string() : resolve(root, fields[1]);
    r.fovea_x = parse_number(fields[2], row_idx, "fovea_x");
    r.fovea_y = parse_number(fields[3], row_idx, "fovea_y");
    if (fields[4].empty())
      throw BadRow("row " + std::to_string(row_idx) + ": missing od_radius_px");
    r.od_radius_px = parse_number(fields[4], row_idx, "od_radius_px");
    r.split = fields[5];
    if (!r.split.empty() && r.split != "train" && r.split != "test")
      throw BadRow("row " + std::to_string(row_idx) + ": unknown split '" + r.split + "'");

    if (!fs::exists(r.image_path))
      throw MissingFile("row " + std::to_string(row_idx) + ": image file missing: " +
                        r.image_path);
    if (!r.vessel_path.empty() && !fs::exists(r.vessel_path))
      throw MissingFile("row " + std::to_string(row_idx) + ": vessel file missing: " +
                        r.vessel_path);

    const auto [w, h] = probe_image_size(r.image_path);
    r.width = w;
    r.height = h;
    if (r.fovea_x < 0 || r.fovea_x >= static_cast<double>(w) || r.fovea_y < 0 ||
        r.fovea_y >= static_cast<double>(h))
      throw BadRow("row " + std::to_string(row_idx) + ": fovea (" + std::to_string(r.fovea_x) +
                   "," + std::to_string(r.fovea_y) + ") outside image " + std::to_string(w) + "x" +
                   std::to_string(h));
    if (r.od_radius_px <= 0)
      throw BadRow("row " + std::to_string(row_idx) + ": od_radius_px must be positive");
    rows.push_back(std::move(r));
  }

  // default 4:1 split for rows without one: rank by path hash, every 5th
  // rank (the top fifth) goes to test
  std::vector<std::size_t> unassigned;
  for (std::size_t i = 0; i < rows.size(); ++i)
    if (rows[i].split.empty()) unassigned.push_back(i);
  if (!unassigned.empty()) {
    std::vector<std::size_t> order = unassigned;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      const auto ha = fnv1a(rows[a].image_path), hb = fnv1a(rows[b].image_path);
      return ha != hb ? ha < hb : a < b;
    });
    const std::size_t n_test = order.size() / 5;
    for (std::size_t k = 0; k < order.size(); ++k)
      rows[order[k]].split = (k < n_test) ? "test" : "train";
  }

  return Dataset(std::move(rows), root);
}

void write_manifest(const std::string& path, const std::vector<ManifestRow>& rows) {
  std::ofstream out(path);
  if (!out) throw IOError("cannot write manifest: " + path);
  out << "image_path,vessel_path,fovea_x,fovea_y,od_radius_px,split\n";
  for (const auto& r : rows) {
    out << r.image_path << ',' << r.vessel_path << ',' << r.fovea_x << ',' << r.fovea_y << ','
        << r.od_radius_px << ',' << r.split << '\n';
  }
}

}  // namespace bifuser::imaging
