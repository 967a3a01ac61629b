#pragma once

#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "lorapatch/tensor.hpp"

namespace lorapatch::nn {

/// A flat parameter array plus its gradient accumulator.
struct Param {
  std::vector<float> v;
  std::vector<float> g;
  bool trainable = true;

  void resize(std::size_t n) {
    v.assign(n, 0.f);
    g.assign(n, 0.f);
  }
  void zero_grad() { std::fill(g.begin(), g.end(), 0.f); }
};

class Module;
/// Visits owning child slots so a caller can replace a child in place
/// (used by LoRA injection). Path components join with '/'.
using SlotVisitor = std::function<void(const std::string& path, std::unique_ptr<Module>& slot)>;

class Module {
 public:
  virtual ~Module() = default;
  virtual Tensor forward(const Tensor& x) = 0;
  /// Backpropagates grad_out (w.r.t. this module's last forward output).
  /// Returns grad w.r.t. the input. Accumulates parameter gradients only
  /// when param_grads is set and the param is trainable.
  virtual Tensor backward(const Tensor& grad_out, bool param_grads) = 0;
  virtual void collect_params(std::vector<Param*>& out) {}
  virtual void visit_slots(const std::string& prefix, const SlotVisitor& fn) {}
};

class Conv2d : public Module {
 public:
  int in_c, out_c, kh, kw, sh, sw, ph, pw;
  Param weight;  // [out_c, in_c*kh*kw] row-major
  Param bias;    // [out_c]
  bool has_bias;

  Conv2d(int in_c, int out_c, int k, int stride, int pad, bool bias = true);
  void init_kaiming(std::mt19937& rng);

  Tensor forward(const Tensor& x) override;
  Tensor backward(const Tensor& grad_out, bool param_grads) override;
  void collect_params(std::vector<Param*>& out) override;

  int out_h(int h) const { return (h + 2 * ph - kh) / sh + 1; }
  int out_w(int w) const { return (w + 2 * pw - kw) / sw + 1; }

 private:
  Tensor input_;
};

class ConvTranspose2d : public Module {
 public:
  int in_c, out_c, kh, kw, sh, sw, ph, pw;
  Param weight;  // [in_c, out_c*kh*kw] row-major
  Param bias;    // [out_c]
  bool has_bias;

  ConvTranspose2d(int in_c, int out_c, int k, int stride, int pad, bool bias = true);
  void init_kaiming(std::mt19937& rng);

  Tensor forward(const Tensor& x) override;
  Tensor backward(const Tensor& grad_out, bool param_grads) override;
  void collect_params(std::vector<Param*>& out) override;

  int out_h(int h) const { return (h - 1) * sh - 2 * ph + kh; }
  int out_w(int w) const { return (w - 1) * sw - 2 * pw + kw; }

 private:
  Tensor input_;
};

class ReLU : public Module {
 public:
  Tensor forward(const Tensor& x) override;
  Tensor backward(const Tensor& grad_out, bool param_grads) override;

 private:
  Tensor output_;
};

class Tanh : public Module {
 public:
  Tensor forward(const Tensor& x) override;
  Tensor backward(const Tensor& grad_out, bool param_grads) override;

 private:
  Tensor output_;
};

/// Fully connected layer on [N, in, 1, 1] tensors.
class Linear : public Module {
 public:
  int in_dim, out_dim;
  Param weight;  // [out, in] row-major
  Param bias;    // [out]

  Linear(int in_dim, int out_dim);
  void init_kaiming(std::mt19937& rng);

  Tensor forward(const Tensor& x) override;
  Tensor backward(const Tensor& grad_out, bool param_grads) override;
  void collect_params(std::vector<Param*>& out) override;

 private:
  Tensor input_;
};

/// [N,C,H,W] -> [N,C,1,1] mean pool.
class GlobalAvgPool : public Module {
 public:
  Tensor forward(const Tensor& x) override;
  Tensor backward(const Tensor& grad_out, bool param_grads) override;

 private:
  int h_ = 0, w_ = 0;
};

/// Named ordered container. Children own their modules; slots are visitable
/// so layers can be swapped for wrapped versions.
class Sequential : public Module {
 public:
  struct Entry {
    std::string name;
    std::unique_ptr<Module> module;
  };
  std::vector<Entry> entries;

  Module* add(const std::string& name, std::unique_ptr<Module> m);

  Tensor forward(const Tensor& x) override;
  Tensor backward(const Tensor& grad_out, bool param_grads) override;
  void collect_params(std::vector<Param*>& out) override;
  void visit_slots(const std::string& prefix, const SlotVisitor& fn) override;
};

/// x + conv2(relu(conv1(x))), channel-preserving.
class ResidualBlock : public Module {
 public:
  explicit ResidualBlock(int channels);

  Tensor forward(const Tensor& x) override;
  Tensor backward(const Tensor& grad_out, bool param_grads) override;
  void collect_params(std::vector<Param*>& out) override;
  void visit_slots(const std::string& prefix, const SlotVisitor& fn) override;

  std::unique_ptr<Module> conv1, conv2;

 private:
  ReLU relu_;
};

class Adam {
 public:
  explicit Adam(std::vector<Param*> params, float lr = 1e-4f, float beta1 = 0.9f,
                float beta2 = 0.999f, float eps = 1e-8f);
  void step();
  void zero_grad();
  float lr;

 private:
  std::vector<Param*> params_;
  std::vector<std::vector<float>> m_, u_;
  float beta1_, beta2_, eps_;
  long t_ = 0;
};

/// Trainable-parameter element count.
std::size_t param_count(const std::vector<Param*>& params, bool trainable_only = true);

/// Hex sha256 over the concatenated value bytes of all params, traversal order.
std::string params_checksum(const std::vector<Param*>& params);

}  // namespace lorapatch::nn
