#pragma once

#include <string>

#include "lorapatch/tensor.hpp"

namespace lorapatch::watermark {

/// A visible warning mark: binary glyph mask placed at (row, col), blended
/// with the given opacity toward foreground_value (or added, with clipping,
/// in additive mode).
struct WatermarkSpec {
  Tensor glyph;  // [1,1,gh,gw], values in {0,1}
  int row = 0, col = 0;
  float opacity = 0.8f;
  float foreground_value = 1.f;
  bool additive = false;
};

/// Block-letter "AI" mask rendered at the given pixel width (nearest-neighbor
/// scale of a fixed 5x11 bitmap; height follows the aspect ratio).
Tensor render_ai_glyph(int width);

/// Glyph mask loaded from an image file; any pixel above mid-gray is set.
Tensor load_glyph_png(const std::string& path);

/// Default mark for an HxW canvas: "AI" at 25% image width, anchored
/// bottom-right with a small margin, opacity 0.8, foreground +1.
WatermarkSpec default_watermark(int image_h, int image_w);

/// Blends the glyph region toward foreground_value; pixels outside the mask
/// are bit-identical. Output clipped to [-1,1] inside the mask.
Tensor apply_watermark(const Tensor& image, const WatermarkSpec& spec);

/// Normalized cross-correlation between the channel-averaged glyph bounding
/// box of `image` and the glyph indicator pattern. 1.0 = perfect presence.
/// A zero-variance region yields 0 and sets *degenerate when given.
double watermark_score(const Tensor& image, const WatermarkSpec& spec,
                       bool* degenerate = nullptr);

}  // namespace lorapatch::watermark
