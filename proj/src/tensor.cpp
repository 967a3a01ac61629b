#include "lorapatch/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "lorapatch/errors.hpp"

namespace lorapatch {

Tensor Tensor::full(int n, int c, int h, int w, float value) {
  Tensor t(n, c, h, w);
  std::fill(t.v.begin(), t.v.end(), value);
  return t;
}

Tensor Tensor::uniform(int n, int c, int h, int w, float lo, float hi, std::mt19937& rng) {
  Tensor t(n, c, h, w);
  std::uniform_real_distribution<float> dist(lo, hi);
  for (auto& x : t.v) x = dist(rng);
  return t;
}

std::string Tensor::shape_str() const {
  return "[" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," +
         std::to_string(w) + "]";
}

Tensor Tensor::slice(int i) const {
  Tensor out(1, c, h, w);
  std::memcpy(out.v.data(), item(i), item_size() * sizeof(float));
  return out;
}

void Tensor::set_item(int i, const Tensor& single) {
  if (single.c != c || single.h != h || single.w != w || single.n != 1)
    throw ShapeError("set_item: shape mismatch " + single.shape_str() + " vs " + shape_str());
  std::memcpy(item(i), single.v.data(), item_size() * sizeof(float));
}

Tensor& Tensor::operator+=(const Tensor& o) {
  if (!same_shape(o)) throw ShapeError("tensor +=: " + shape_str() + " vs " + o.shape_str());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] += o.v[i];
  return *this;
}

Tensor& Tensor::operator-=(const Tensor& o) {
  if (!same_shape(o)) throw ShapeError("tensor -=: " + shape_str() + " vs " + o.shape_str());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] -= o.v[i];
  return *this;
}

Tensor& Tensor::operator*=(float s) {
  for (auto& x : v) x *= s;
  return *this;
}

void Tensor::clamp_(float lo, float hi) {
  for (auto& x : v) x = std::min(hi, std::max(lo, x));
}

bool Tensor::all_finite() const {
  for (auto x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

Tensor operator+(Tensor a, const Tensor& b) { return a += b; }
Tensor operator-(Tensor a, const Tensor& b) { return a -= b; }
Tensor operator*(Tensor a, float s) { return a *= s; }

float dot(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) throw ShapeError("dot: " + a.shape_str() + " vs " + b.shape_str());
  double s = 0;
  for (std::size_t i = 0; i < a.v.size(); ++i) s += static_cast<double>(a.v[i]) * b.v[i];
  return static_cast<float>(s);
}

float max_abs_diff(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) throw ShapeError("max_abs_diff: " + a.shape_str() + " vs " + b.shape_str());
  float m = 0.f;
  for (std::size_t i = 0; i < a.v.size(); ++i) m = std::max(m, std::fabs(a.v[i] - b.v[i]));
  return m;
}

double mean_sq_diff(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) throw ShapeError("mean_sq_diff: " + a.shape_str() + " vs " + b.shape_str());
  double s = 0;
  for (std::size_t i = 0; i < a.v.size(); ++i) {
    double d = static_cast<double>(a.v[i]) - b.v[i];
    s += d * d;
  }
  return s / static_cast<double>(a.v.size());
}

double mean_sq_diff_item(const Tensor& a, const Tensor& b, int i) {
  if (!a.same_shape(b)) throw ShapeError("mean_sq_diff_item: shape mismatch");
  const float* pa = a.item(i);
  const float* pb = b.item(i);
  double s = 0;
  for (std::size_t k = 0; k < a.item_size(); ++k) {
    double d = static_cast<double>(pa[k]) - pb[k];
    s += d * d;
  }
  return s / static_cast<double>(a.item_size());
}

}  // namespace lorapatch
