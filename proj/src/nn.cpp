#include "lorapatch/nn.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstring>

#include "lorapatch/errors.hpp"
#include "lorapatch/sha256.hpp"

namespace lorapatch::nn {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

namespace {

// Expands one [c,h,w] item into kernel-patch columns. dst points at the
// item's first column inside a [c*kh*kw, total_cols] row-major matrix;
// row_stride is total_cols.
void im2col(const float* x, int c, int h, int w, int kh, int kw, int sh, int sw, int ph, int pw,
            int oh, int ow, float* dst, std::size_t row_stride) {
  for (int ci = 0; ci < c; ++ci) {
    const float* xc = x + static_cast<std::size_t>(ci) * h * w;
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx) {
        const std::size_t r = (static_cast<std::size_t>(ci) * kh + ky) * kw + kx;
        float* row = dst + r * row_stride;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * sh - ph + ky;
          float* out = row + static_cast<std::size_t>(oy) * ow;
          if (iy < 0 || iy >= h) {
            std::memset(out, 0, sizeof(float) * ow);
            continue;
          }
          const float* xr = xc + static_cast<std::size_t>(iy) * w;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * sw - pw + kx;
            out[ox] = (ix >= 0 && ix < w) ? xr[ix] : 0.f;
          }
        }
      }
    }
  }
}

// Adjoint of im2col: accumulates columns back into the [c,h,w] item.
void col2im(const float* cols, std::size_t row_stride, int c, int h, int w, int kh, int kw, int sh,
            int sw, int ph, int pw, int oh, int ow, float* x) {
  for (int ci = 0; ci < c; ++ci) {
    float* xc = x + static_cast<std::size_t>(ci) * h * w;
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx) {
        const std::size_t r = (static_cast<std::size_t>(ci) * kh + ky) * kw + kx;
        const float* row = cols + r * row_stride;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * sh - ph + ky;
          if (iy < 0 || iy >= h) continue;
          float* xr = xc + static_cast<std::size_t>(iy) * w;
          const float* in = row + static_cast<std::size_t>(oy) * ow;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * sw - pw + kx;
            if (ix >= 0 && ix < w) xr[ix] += in[ox];
          }
        }
      }
    }
  }
}

void kaiming_uniform(std::vector<float>& w, int fan_in, std::mt19937& rng) {
  const float bound = std::sqrt(6.f / static_cast<float>(fan_in));
  std::uniform_real_distribution<float> dist(-bound, bound);
  for (auto& x : w) x = dist(rng);
}

}  // namespace

// ---------------------------------------------------------------- Conv2d

Conv2d::Conv2d(int in_c_, int out_c_, int k, int stride, int pad, bool bias_)
    : in_c(in_c_), out_c(out_c_), kh(k), kw(k), sh(stride), sw(stride), ph(pad), pw(pad),
      has_bias(bias_) {
  if (in_c <= 0 || out_c <= 0 || k <= 0 || stride <= 0 || pad < 0)
    throw ConfigError("Conv2d: invalid geometry");
  weight.resize(static_cast<std::size_t>(out_c) * in_c * kh * kw);
  bias.resize(has_bias ? out_c : 0);
}

void Conv2d::init_kaiming(std::mt19937& rng) { kaiming_uniform(weight.v, in_c * kh * kw, rng); }

Tensor Conv2d::forward(const Tensor& x) {
  if (x.c != in_c) throw ShapeError("Conv2d: got " + x.shape_str());
  input_ = x;
  const int oh = out_h(x.h), ow = out_w(x.w);
  if (oh <= 0 || ow <= 0) throw ShapeError("Conv2d: empty output for " + x.shape_str());
  const std::size_t ck2 = static_cast<std::size_t>(in_c) * kh * kw;
  const std::size_t cols_n = static_cast<std::size_t>(x.n) * oh * ow;

  std::vector<float> cols(ck2 * cols_n);
  for (int i = 0; i < x.n; ++i)
    im2col(x.item(i), in_c, x.h, x.w, kh, kw, sh, sw, ph, pw, oh, ow,
           cols.data() + static_cast<std::size_t>(i) * oh * ow, cols_n);

  std::vector<float> y(static_cast<std::size_t>(out_c) * cols_n);
  MapMat(y.data(), out_c, cols_n).noalias() =
      CMapMat(weight.v.data(), out_c, ck2) * CMapMat(cols.data(), ck2, cols_n);

  Tensor out(x.n, out_c, oh, ow);
  const std::size_t ohw = static_cast<std::size_t>(oh) * ow;
  for (int co = 0; co < out_c; ++co) {
    const float* yrow = y.data() + static_cast<std::size_t>(co) * cols_n;
    const float b = has_bias ? bias.v[co] : 0.f;
    for (int i = 0; i < x.n; ++i) {
      float* dst = out.item(i) + static_cast<std::size_t>(co) * ohw;
      const float* src = yrow + static_cast<std::size_t>(i) * ohw;
      for (std::size_t p = 0; p < ohw; ++p) dst[p] = src[p] + b;
    }
  }
  return out;
}

Tensor Conv2d::backward(const Tensor& grad_out, bool param_grads) {
  const Tensor& x = input_;
  const int oh = out_h(x.h), ow = out_w(x.w);
  if (grad_out.n != x.n || grad_out.c != out_c || grad_out.h != oh || grad_out.w != ow)
    throw ShapeError("Conv2d backward: got " + grad_out.shape_str());
  const std::size_t ck2 = static_cast<std::size_t>(in_c) * kh * kw;
  const std::size_t ohw = static_cast<std::size_t>(oh) * ow;
  const std::size_t cols_n = static_cast<std::size_t>(x.n) * ohw;

  // Gather grad into [out_c, N*ohw].
  std::vector<float> g(static_cast<std::size_t>(out_c) * cols_n);
  for (int co = 0; co < out_c; ++co) {
    float* grow = g.data() + static_cast<std::size_t>(co) * cols_n;
    for (int i = 0; i < x.n; ++i)
      std::memcpy(grow + static_cast<std::size_t>(i) * ohw,
                  grad_out.item(i) + static_cast<std::size_t>(co) * ohw, ohw * sizeof(float));
  }
  CMapMat G(g.data(), out_c, cols_n);

  if (param_grads && weight.trainable) {
    std::vector<float> cols(ck2 * cols_n);
    for (int i = 0; i < x.n; ++i)
      im2col(x.item(i), in_c, x.h, x.w, kh, kw, sh, sw, ph, pw, oh, ow,
             cols.data() + static_cast<std::size_t>(i) * ohw, cols_n);
    MapMat(weight.g.data(), out_c, ck2).noalias() += G * CMapMat(cols.data(), ck2, cols_n).transpose();
    if (has_bias)
      Eigen::Map<Eigen::VectorXf>(bias.g.data(), out_c) += G.rowwise().sum();
  }

  std::vector<float> cols_g(ck2 * cols_n);
  MapMat(cols_g.data(), ck2, cols_n).noalias() =
      CMapMat(weight.v.data(), out_c, ck2).transpose() * G;

  Tensor gx(x.n, in_c, x.h, x.w);
  for (int i = 0; i < x.n; ++i)
    col2im(cols_g.data() + static_cast<std::size_t>(i) * ohw, cols_n, in_c, x.h, x.w, kh, kw, sh,
           sw, ph, pw, oh, ow, gx.item(i));
  return gx;
}

void Conv2d::collect_params(std::vector<Param*>& out) {
  out.push_back(&weight);
  if (has_bias) out.push_back(&bias);
}

// ------------------------------------------------------- ConvTranspose2d

ConvTranspose2d::ConvTranspose2d(int in_c_, int out_c_, int k, int stride, int pad, bool bias_)
    : in_c(in_c_), out_c(out_c_), kh(k), kw(k), sh(stride), sw(stride), ph(pad), pw(pad),
      has_bias(bias_) {
  if (in_c <= 0 || out_c <= 0 || k <= 0 || stride <= 0 || pad < 0)
    throw ConfigError("ConvTranspose2d: invalid geometry");
  weight.resize(static_cast<std::size_t>(in_c) * out_c * kh * kw);
  bias.resize(has_bias ? out_c : 0);
}

void ConvTranspose2d::init_kaiming(std::mt19937& rng) {
  kaiming_uniform(weight.v, in_c * kh * kw, rng);
}

Tensor ConvTranspose2d::forward(const Tensor& x) {
  if (x.c != in_c) throw ShapeError("ConvTranspose2d: got " + x.shape_str());
  input_ = x;
  const int oh = out_h(x.h), ow = out_w(x.w);
  if (oh <= 0 || ow <= 0) throw ShapeError("ConvTranspose2d: empty output");
  const std::size_t ok2 = static_cast<std::size_t>(out_c) * kh * kw;
  const std::size_t ihw = static_cast<std::size_t>(x.h) * x.w;
  const std::size_t cols_n = static_cast<std::size_t>(x.n) * ihw;

  // Gather input into [in_c, N*ihw].
  std::vector<float> xm(static_cast<std::size_t>(in_c) * cols_n);
  for (int ci = 0; ci < in_c; ++ci) {
    float* row = xm.data() + static_cast<std::size_t>(ci) * cols_n;
    for (int i = 0; i < x.n; ++i)
      std::memcpy(row + static_cast<std::size_t>(i) * ihw,
                  x.item(i) + static_cast<std::size_t>(ci) * ihw, ihw * sizeof(float));
  }

  std::vector<float> cols(ok2 * cols_n);
  MapMat(cols.data(), ok2, cols_n).noalias() =
      CMapMat(weight.v.data(), in_c, ok2).transpose() * CMapMat(xm.data(), in_c, cols_n);

  Tensor out(x.n, out_c, oh, ow);
  for (int i = 0; i < x.n; ++i)
    col2im(cols.data() + static_cast<std::size_t>(i) * ihw, cols_n, out_c, oh, ow, kh, kw, sh, sw,
           ph, pw, x.h, x.w, out.item(i));
  if (has_bias) {
    const std::size_t ohw = static_cast<std::size_t>(oh) * ow;
    for (int i = 0; i < x.n; ++i)
      for (int co = 0; co < out_c; ++co) {
        float* dst = out.item(i) + static_cast<std::size_t>(co) * ohw;
        const float b = bias.v[co];
        for (std::size_t p = 0; p < ohw; ++p) dst[p] += b;
      }
  }
  return out;
}

Tensor ConvTranspose2d::backward(const Tensor& grad_out, bool param_grads) {
  const Tensor& x = input_;
  const int oh = out_h(x.h), ow = out_w(x.w);
  if (grad_out.n != x.n || grad_out.c != out_c || grad_out.h != oh || grad_out.w != ow)
    throw ShapeError("ConvTranspose2d backward: got " + grad_out.shape_str());
  const std::size_t ok2 = static_cast<std::size_t>(out_c) * kh * kw;
  const std::size_t ihw = static_cast<std::size_t>(x.h) * x.w;
  const std::size_t cols_n = static_cast<std::size_t>(x.n) * ihw;

  std::vector<float> cols_g(ok2 * cols_n);
  for (int i = 0; i < x.n; ++i)
    im2col(grad_out.item(i), out_c, oh, ow, kh, kw, sh, sw, ph, pw, x.h, x.w,
           cols_g.data() + static_cast<std::size_t>(i) * ihw, cols_n);

  if (param_grads && weight.trainable) {
    std::vector<float> xm(static_cast<std::size_t>(in_c) * cols_n);
    for (int ci = 0; ci < in_c; ++ci) {
      float* row = xm.data() + static_cast<std::size_t>(ci) * cols_n;
      for (int i = 0; i < x.n; ++i)
        std::memcpy(row + static_cast<std::size_t>(i) * ihw,
                    x.item(i) + static_cast<std::size_t>(ci) * ihw, ihw * sizeof(float));
    }
    MapMat(weight.g.data(), in_c, ok2).noalias() +=
        CMapMat(xm.data(), in_c, cols_n) * CMapMat(cols_g.data(), ok2, cols_n).transpose();
    if (has_bias) {
      const std::size_t ohw = static_cast<std::size_t>(oh) * ow;
      for (int i = 0; i < x.n; ++i)
        for (int co = 0; co < out_c; ++co) {
          const float* src = grad_out.item(i) + static_cast<std::size_t>(co) * ohw;
          double s = 0;
          for (std::size_t p = 0; p < ohw; ++p) s += src[p];
          bias.g[co] += static_cast<float>(s);
        }
    }
  }

  std::vector<float> gxm(static_cast<std::size_t>(in_c) * cols_n);
  MapMat(gxm.data(), in_c, cols_n).noalias() =
      CMapMat(weight.v.data(), in_c, ok2) * CMapMat(cols_g.data(), ok2, cols_n);

  Tensor gx(x.n, in_c, x.h, x.w);
  for (int ci = 0; ci < in_c; ++ci) {
    const float* row = gxm.data() + static_cast<std::size_t>(ci) * cols_n;
    for (int i = 0; i < x.n; ++i)
      std::memcpy(gx.item(i) + static_cast<std::size_t>(ci) * ihw,
                  row + static_cast<std::size_t>(i) * ihw, ihw * sizeof(float));
  }
  return gx;
}

void ConvTranspose2d::collect_params(std::vector<Param*>& out) {
  out.push_back(&weight);
  if (has_bias) out.push_back(&bias);
}

// ------------------------------------------------------------ activations

Tensor ReLU::forward(const Tensor& x) {
  output_ = x;
  for (auto& v : output_.v) v = v > 0.f ? v : 0.f;
  return output_;
}

Tensor ReLU::backward(const Tensor& grad_out, bool) {
  if (!grad_out.same_shape(output_)) throw ShapeError("ReLU backward: shape mismatch");
  Tensor gx = grad_out;
  for (std::size_t i = 0; i < gx.v.size(); ++i)
    if (output_.v[i] <= 0.f) gx.v[i] = 0.f;
  return gx;
}

Tensor Tanh::forward(const Tensor& x) {
  output_ = x;
  for (auto& v : output_.v) v = std::tanh(v);
  return output_;
}

Tensor Tanh::backward(const Tensor& grad_out, bool) {
  if (!grad_out.same_shape(output_)) throw ShapeError("Tanh backward: shape mismatch");
  Tensor gx = grad_out;
  for (std::size_t i = 0; i < gx.v.size(); ++i) {
    const float y = output_.v[i];
    gx.v[i] *= (1.f - y * y);
  }
  return gx;
}

// ----------------------------------------------------------------- Linear

Linear::Linear(int in_dim_, int out_dim_) : in_dim(in_dim_), out_dim(out_dim_) {
  if (in_dim <= 0 || out_dim <= 0) throw ConfigError("Linear: invalid dims");
  weight.resize(static_cast<std::size_t>(out_dim) * in_dim);
  bias.resize(out_dim);
}

void Linear::init_kaiming(std::mt19937& rng) { kaiming_uniform(weight.v, in_dim, rng); }

Tensor Linear::forward(const Tensor& x) {
  if (x.c != in_dim || x.h != 1 || x.w != 1) throw ShapeError("Linear: got " + x.shape_str());
  input_ = x;
  Tensor out(x.n, out_dim, 1, 1);
  MapMat(out.v.data(), x.n, out_dim).noalias() =
      CMapMat(x.v.data(), x.n, in_dim) * CMapMat(weight.v.data(), out_dim, in_dim).transpose();
  for (int i = 0; i < x.n; ++i)
    for (int j = 0; j < out_dim; ++j) out.v[static_cast<std::size_t>(i) * out_dim + j] += bias.v[j];
  return out;
}

Tensor Linear::backward(const Tensor& grad_out, bool param_grads) {
  const Tensor& x = input_;
  if (grad_out.n != x.n || grad_out.c != out_dim || grad_out.h != 1 || grad_out.w != 1)
    throw ShapeError("Linear backward: got " + grad_out.shape_str());
  CMapMat G(grad_out.v.data(), x.n, out_dim);
  if (param_grads && weight.trainable) {
    MapMat(weight.g.data(), out_dim, in_dim).noalias() +=
        G.transpose() * CMapMat(x.v.data(), x.n, in_dim);
    Eigen::Map<Eigen::VectorXf>(bias.g.data(), out_dim) += G.colwise().sum().transpose();
  }
  Tensor gx(x.n, in_dim, 1, 1);
  MapMat(gx.v.data(), x.n, in_dim).noalias() = G * CMapMat(weight.v.data(), out_dim, in_dim);
  return gx;
}

void Linear::collect_params(std::vector<Param*>& out) {
  out.push_back(&weight);
  out.push_back(&bias);
}

// -------------------------------------------------------- GlobalAvgPool

Tensor GlobalAvgPool::forward(const Tensor& x) {
  h_ = x.h;
  w_ = x.w;
  Tensor out(x.n, x.c, 1, 1);
  const std::size_t hw = static_cast<std::size_t>(x.h) * x.w;
  for (int i = 0; i < x.n; ++i)
    for (int j = 0; j < x.c; ++j) {
      const float* src = x.item(i) + static_cast<std::size_t>(j) * hw;
      double s = 0;
      for (std::size_t p = 0; p < hw; ++p) s += src[p];
      out.at(i, j, 0, 0) = static_cast<float>(s / static_cast<double>(hw));
    }
  return out;
}

Tensor GlobalAvgPool::backward(const Tensor& grad_out, bool) {
  Tensor gx(grad_out.n, grad_out.c, h_, w_);
  const std::size_t hw = static_cast<std::size_t>(h_) * w_;
  const float inv = 1.f / static_cast<float>(hw);
  for (int i = 0; i < grad_out.n; ++i)
    for (int j = 0; j < grad_out.c; ++j) {
      float* dst = gx.item(i) + static_cast<std::size_t>(j) * hw;
      const float g = grad_out.at(i, j, 0, 0) * inv;
      for (std::size_t p = 0; p < hw; ++p) dst[p] = g;
    }
  return gx;
}

// ------------------------------------------------------------- Sequential

Module* Sequential::add(const std::string& name, std::unique_ptr<Module> m) {
  entries.push_back({name, std::move(m)});
  return entries.back().module.get();
}

Tensor Sequential::forward(const Tensor& x) {
  Tensor cur = x;
  for (auto& e : entries) cur = e.module->forward(cur);
  return cur;
}

Tensor Sequential::backward(const Tensor& grad_out, bool param_grads) {
  Tensor cur = grad_out;
  for (auto it = entries.rbegin(); it != entries.rend(); ++it)
    cur = it->module->backward(cur, param_grads);
  return cur;
}

void Sequential::collect_params(std::vector<Param*>& out) {
  for (auto& e : entries) e.module->collect_params(out);
}

void Sequential::visit_slots(const std::string& prefix, const SlotVisitor& fn) {
  for (auto& e : entries) {
    const std::string path = prefix.empty() ? e.name : prefix + "/" + e.name;
    fn(path, e.module);
    e.module->visit_slots(path, fn);
  }
}

// ---------------------------------------------------------- ResidualBlock

ResidualBlock::ResidualBlock(int channels) {
  conv1 = std::make_unique<Conv2d>(channels, channels, 3, 1, 1);
  conv2 = std::make_unique<Conv2d>(channels, channels, 3, 1, 1);
}

Tensor ResidualBlock::forward(const Tensor& x) {
  Tensor y = conv2->forward(relu_.forward(conv1->forward(x)));
  return y += x;
}

Tensor ResidualBlock::backward(const Tensor& grad_out, bool param_grads) {
  Tensor g = conv1->backward(relu_.backward(conv2->backward(grad_out, param_grads), param_grads),
                             param_grads);
  return g += grad_out;
}

void ResidualBlock::collect_params(std::vector<Param*>& out) {
  conv1->collect_params(out);
  conv2->collect_params(out);
}

void ResidualBlock::visit_slots(const std::string& prefix, const SlotVisitor& fn) {
  fn(prefix + "/conv1", conv1);
  conv1->visit_slots(prefix + "/conv1", fn);
  fn(prefix + "/conv2", conv2);
  conv2->visit_slots(prefix + "/conv2", fn);
}

// ------------------------------------------------------------------ Adam

Adam::Adam(std::vector<Param*> params, float lr_, float beta1, float beta2, float eps)
    : lr(lr_), params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (auto* p : params_) {
    m_.emplace_back(p->v.size(), 0.f);
    u_.emplace_back(p->v.size(), 0.f);
  }
}

void Adam::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Param* p = params_[k];
    if (!p->trainable) continue;
    auto& m = m_[k];
    auto& u = u_[k];
    for (std::size_t i = 0; i < p->v.size(); ++i) {
      const float g = p->g[i];
      m[i] = beta1_ * m[i] + (1.f - beta1_) * g;
      u[i] = beta2_ * u[i] + (1.f - beta2_) * g * g;
      const float mhat = static_cast<float>(m[i] / bc1);
      const float uhat = static_cast<float>(u[i] / bc2);
      p->v[i] -= lr * mhat / (std::sqrt(uhat) + eps_);
    }
  }
}

void Adam::zero_grad() {
  for (auto* p : params_) p->zero_grad();
}

std::size_t param_count(const std::vector<Param*>& params, bool trainable_only) {
  std::size_t n = 0;
  for (auto* p : params)
    if (!trainable_only || p->trainable) n += p->v.size();
  return n;
}

std::string params_checksum(const std::vector<Param*>& params) {
  Sha256Stream s;
  for (auto* p : params)
    if (!p->v.empty()) s.update(p->v.data(), p->v.size() * sizeof(float));
  return to_hex(s.finish());
}

}  // namespace lorapatch::nn
