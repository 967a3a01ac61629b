#pragma once

#include <cstddef>
#include <random>
#include <string>
#include <vector>

namespace lorapatch {

/// Dense NCHW float tensor. Images use N=1, C=3, values in [-1,1].
/// Feature vectors use H=W=1.
struct Tensor {
  int n = 0, c = 0, h = 0, w = 0;
  std::vector<float> v;

  Tensor() = default;
  Tensor(int n_, int c_, int h_, int w_)
      : n(n_), c(c_), h(h_), w(w_), v(static_cast<std::size_t>(n_) * c_ * h_ * w_, 0.f) {}

  static Tensor zeros(int n, int c, int h, int w) { return Tensor(n, c, h, w); }
  static Tensor full(int n, int c, int h, int w, float value);
  static Tensor uniform(int n, int c, int h, int w, float lo, float hi, std::mt19937& rng);

  std::size_t numel() const { return v.size(); }
  bool same_shape(const Tensor& o) const {
    return n == o.n && c == o.c && h == o.h && w == o.w;
  }
  std::string shape_str() const;

  float& at(int i, int j, int y, int x) {
    return v[((static_cast<std::size_t>(i) * c + j) * h + y) * w + x];
  }
  float at(int i, int j, int y, int x) const {
    return v[((static_cast<std::size_t>(i) * c + j) * h + y) * w + x];
  }
  /// Pointer to the start of item i (C*H*W contiguous floats).
  float* item(int i) { return v.data() + static_cast<std::size_t>(i) * c * h * w; }
  const float* item(int i) const { return v.data() + static_cast<std::size_t>(i) * c * h * w; }
  std::size_t item_size() const { return static_cast<std::size_t>(c) * h * w; }

  /// Copy item i into a new [1,C,H,W] tensor.
  Tensor slice(int i) const;
  void set_item(int i, const Tensor& single);

  Tensor& operator+=(const Tensor& o);
  Tensor& operator-=(const Tensor& o);
  Tensor& operator*=(float s);
  void clamp_(float lo, float hi);
  bool all_finite() const;
};

Tensor operator+(Tensor a, const Tensor& b);
Tensor operator-(Tensor a, const Tensor& b);
Tensor operator*(Tensor a, float s);

float dot(const Tensor& a, const Tensor& b);
float max_abs_diff(const Tensor& a, const Tensor& b);
/// Mean over all elements of (a-b)^2.
double mean_sq_diff(const Tensor& a, const Tensor& b);
double mean_sq_diff_item(const Tensor& a, const Tensor& b, int i);

}  // namespace lorapatch
