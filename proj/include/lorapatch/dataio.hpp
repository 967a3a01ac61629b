#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "lorapatch/tensor.hpp"

namespace lorapatch::dataio {

struct Item {
  std::string id;
  Tensor image;  // [1,3,H,W] in [-1,1]
};

/// Ordered image collection; iteration order is sorted by id.
struct Dataset {
  std::vector<Item> items;
  int height = 0, width = 0;

  int size() const { return static_cast<int>(items.size()); }
  bool empty() const { return items.empty(); }
  /// Stacks items [first, first+count) into one [count,3,H,W] batch.
  Tensor stack(int first, int count) const;
};

/// Loads images sorted by filename, resized to size x size, mapped to [-1,1]
/// via x/127.5 - 1. Undecodable files are skipped and reported through
/// `skipped` when provided. limit < 0 means no limit.
Dataset load_folder(const std::string& dir, int size, int limit = -1,
                    std::vector<std::string>* skipped = nullptr);

/// Procedural face-like images (head, eyes, mouth, smooth background),
/// deterministic from seed.
Dataset synth_faces(int n, int size, unsigned seed);

/// Deterministic disjoint split; fractions must sum to 1.
std::pair<Dataset, Dataset> split(const Dataset& ds, std::pair<double, double> fractions,
                                  unsigned seed);

// --- pixel conversions -------------------------------------------------

inline float u8_to_unit(int b) { return static_cast<float>(b) / 127.5f - 1.f; }
inline int unit_to_u8(float v) {
  int level = static_cast<int>(std::lround((v + 1.f) * 127.5f));
  return level < 0 ? 0 : (level > 255 ? 255 : level);
}

/// Reads one image file; resize_to=0 keeps the native size.
Tensor load_image(const std::string& path, int resize_to = 0);
void save_image_png(const Tensor& img, const std::string& path);

/// Writes <dir>/dataset_manifest.json with per-item ids and checksums.
void write_dataset_manifest(const Dataset& ds, const std::string& dir,
                            const std::string& source_desc);

/// Writes every item as <dir>/<id>.png plus a manifest.
void save_dataset_png(const Dataset& ds, const std::string& dir,
                      const std::string& source_desc = "");

}  // namespace lorapatch::dataio
