#pragma once

#include <functional>
#include <string>
#include <vector>

#include "lorapatch/dataio.hpp"
#include "lorapatch/model_zoo.hpp"
#include "lorapatch/surgery.hpp"
#include "lorapatch/tensor.hpp"

namespace lorapatch::attacks {

struct AttackSpec {
  float epsilon = 0.05f;
  int steps = 10;
  float step_size = 0.01f;
  bool random_start = false;
  std::string objective = "disrupt_self";  // disrupt_self | break_consistency
  std::string return_policy = "best_iterate";  // best_iterate | last_iterate
  unsigned seed = 0;

  void validate() const;
};

/// Forward/backward closure over the target model; lets attacks run against
/// plain generators, patched generators, or test stand-ins alike.
struct Target {
  std::function<Tensor(const Tensor&)> forward;
  std::function<Tensor(const Tensor&)> backward_input;  // grad w.r.t. last forward input
};

Target target_of(zoo::Generator& g);
Target target_of(surgery::PatchedGenerator& g);

/// Per-image maximization objective for PGD.
class Objective {
 public:
  virtual ~Objective() = default;
  virtual std::vector<double> value(const Tensor& x_adv) = 0;
  /// Values plus gradient of the summed per-image objectives w.r.t. x_adv.
  virtual std::pair<std::vector<double>, Tensor> value_and_grad(const Tensor& x_adv) = 0;
};

/// MSE(model(x_adv), model(x_clean)): the proactive-defense disruption goal.
class DisruptionObjective : public Objective {
 public:
  DisruptionObjective(Target target, const Tensor& x_clean);
  std::vector<double> value(const Tensor& x_adv) override;
  std::pair<std::vector<double>, Tensor> value_and_grad(const Tensor& x_adv) override;

 private:
  Target target_;
  Tensor reference_;
};

/// MSE(model(x_adv), y): the inner-maximization goal during fine-tuning,
/// with the current patched model as the target.
class ConsistencyObjective : public Objective {
 public:
  ConsistencyObjective(Target target, const Tensor& y);
  std::vector<double> value(const Tensor& x_adv) override;
  std::pair<std::vector<double>, Tensor> value_and_grad(const Tensor& x_adv) override;

 private:
  Target target_;
  Tensor y_;
};

/// Batch-mean MSE(model(x), model(x_adv)).
double disruption_objective(Target target, const Tensor& x, const Tensor& x_adv);
/// Batch-mean MSE(model(x_adv), y).
double consistency_objective(Target target, const Tensor& x_adv, const Tensor& y);

/// Sign-gradient ascent with projection onto the L-inf ball of radius
/// epsilon around x and the [-1,1] box. best_iterate returns, per image,
/// the iterate (including the start) with the largest objective.
Tensor pgd(const Tensor& x, Objective& objective, const AttackSpec& spec);

/// Runs pgd image-batch-wise over the dataset with the model itself as the
/// disruption target. Standard scenario when the model is the original
/// generator; leakage scenario when it is a patched composite.
dataio::Dataset protect(Target target, const dataio::Dataset& data, const AttackSpec& spec,
                        int batch_size = 8);

/// Persists protected images as PNG, quantizing each pixel into the valid
/// epsilon-ball around the original so the constraint survives 8-bit
/// encoding, plus a manifest recording the spec and target checksum.
void save_protected(const dataio::Dataset& adv, const dataio::Dataset& original,
                    const AttackSpec& spec, const std::string& target_checksum,
                    const std::string& dir);

}  // namespace lorapatch::attacks
