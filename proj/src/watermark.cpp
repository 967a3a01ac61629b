#include "lorapatch/watermark.hpp"

#include <algorithm>
#include <cmath>

#include "lorapatch/dataio.hpp"
#include "lorapatch/errors.hpp"

namespace lorapatch::watermark {

namespace {

// 5x11 "AI" bitmap: 'A' (5 cols), 1-col gap, 'I' (5 cols).
constexpr const char* kAiBitmap[5] = {
    "01110 11111",
    "10001 00100",
    "11111 00100",
    "10001 00100",
    "10001 11111",
};

void check_bounds(const Tensor& image, const WatermarkSpec& spec) {
  const Tensor& g = spec.glyph;
  if (g.numel() == 0) throw ConfigError("watermark: empty glyph");
  bool any = false;
  for (float v : g.v) any = any || v > 0.5f;
  if (!any) throw ConfigError("watermark: glyph mask has no set pixels");
  if (spec.row < 0 || spec.col < 0 || spec.row + g.h > image.h || spec.col + g.w > image.w)
    throw ConfigError("watermark: placement out of image bounds");
  if (spec.opacity <= 0.f || spec.opacity > 1.f)
    throw ConfigError("watermark: opacity must be in (0,1]");
}

}  // namespace

Tensor render_ai_glyph(int width) {
  if (width < 1) throw ConfigError("render_ai_glyph: width must be >= 1");
  const int bw = 11, bh = 5;
  const int height = std::max(1, (width * bh + bw / 2) / bw);
  Tensor g(1, 1, height, width);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const int by = std::min(bh - 1, y * bh / height);
      const int bx = std::min(bw - 1, x * bw / width);
      g.at(0, 0, y, x) = kAiBitmap[by][bx] == '1' ? 1.f : 0.f;
    }
  return g;
}

Tensor load_glyph_png(const std::string& path) {
  Tensor img = dataio::load_image(path);
  Tensor g(1, 1, img.h, img.w);
  for (int y = 0; y < img.h; ++y)
    for (int x = 0; x < img.w; ++x) {
      float gray = (img.at(0, 0, y, x) + img.at(0, 1, y, x) + img.at(0, 2, y, x)) / 3.f;
      g.at(0, 0, y, x) = gray > 0.f ? 1.f : 0.f;
    }
  return g;
}

WatermarkSpec default_watermark(int image_h, int image_w) {
  WatermarkSpec spec;
  spec.glyph = render_ai_glyph(std::max(4, image_w / 4));
  const int margin = std::max(1, image_w / 32);
  spec.row = image_h - spec.glyph.h - margin;
  spec.col = image_w - spec.glyph.w - margin;
  if (spec.row < 0 || spec.col < 0)
    throw ConfigError("default_watermark: image too small for the default glyph");
  return spec;
}

Tensor apply_watermark(const Tensor& image, const WatermarkSpec& spec) {
  check_bounds(image, spec);
  Tensor out = image;
  const Tensor& g = spec.glyph;
  for (int i = 0; i < out.n; ++i)
    for (int c = 0; c < out.c; ++c)
      for (int y = 0; y < g.h; ++y)
        for (int x = 0; x < g.w; ++x) {
          if (g.at(0, 0, y, x) <= 0.5f) continue;
          float& p = out.at(i, c, spec.row + y, spec.col + x);
          p = spec.additive ? p + spec.opacity * spec.foreground_value
                            : (1.f - spec.opacity) * p + spec.opacity * spec.foreground_value;
          p = std::min(1.f, std::max(-1.f, p));
        }
  return out;
}

double watermark_score(const Tensor& image, const WatermarkSpec& spec, bool* degenerate) {
  check_bounds(image, spec);
  if (degenerate) *degenerate = false;
  const Tensor& g = spec.glyph;
  const std::size_t m = static_cast<std::size_t>(g.h) * g.w;

  // Channel-averaged bounding-box region vs the glyph indicator template,
  // averaged over batch items.
  double total = 0;
  for (int i = 0; i < image.n; ++i) {
    std::vector<double> region(m), tmpl(m);
    double rm = 0, tm = 0;
    for (int y = 0; y < g.h; ++y)
      for (int x = 0; x < g.w; ++x) {
        double p = 0;
        for (int c = 0; c < image.c; ++c) p += image.at(i, c, spec.row + y, spec.col + x);
        p /= image.c;
        const std::size_t k = static_cast<std::size_t>(y) * g.w + x;
        region[k] = p;
        tmpl[k] = g.at(0, 0, y, x) > 0.5f ? 1.0 : 0.0;
        rm += p;
        tm += tmpl[k];
      }
    rm /= static_cast<double>(m);
    tm /= static_cast<double>(m);
    double rr = 0, tt = 0, rt = 0;
    for (std::size_t k = 0; k < m; ++k) {
      const double dr = region[k] - rm, dt = tmpl[k] - tm;
      rr += dr * dr;
      tt += dt * dt;
      rt += dr * dt;
    }
    if (rr < 1e-12 || tt < 1e-12) {
      if (degenerate) *degenerate = true;
      continue;  // contributes 0
    }
    total += rt / std::sqrt(rr * tt);
  }
  return total / image.n;
}

}  // namespace lorapatch::watermark
