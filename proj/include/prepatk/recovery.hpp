#pragma once

#include <functional>
#include <optional>

#include "prepatk/linear_transform.hpp"
#include "prepatk/preproc.hpp"

namespace prepatk {

/// Original-space adversarial example recovered from a model-space one.
struct RecoveryResult {
  Image x_o_adv;
  double residual = 0.0;  // || t(x_o_adv) - x_m_adv ||_2 under the hard transform
  std::optional<double> lambda;
  std::optional<bool> verified_adversarial;
};

/// Hard-label verdict on a candidate; each invocation costs one oracle query.
using AdversarialCheck = std::function<bool(const Image&)>;

/// Exact recovery for a center crop: paste x_m_adv into the center of x_o.
/// Never queries the oracle.
RecoveryResult recover_crop(const Image& x_o, const Image& x_m_adv, const PreprocessorSpec& spec);

/// Exact minimum-norm recovery for a linear transform: delta = M+ (x_m_adv - M x_o),
/// applied per channel. Never queries the oracle.
RecoveryResult recover_resize(const Image& x_o, const Image& x_m_adv, const PseudoInverse& pinv);
RecoveryResult recover_resize(const Image& x_o, const Image& x_m_adv, const LinearTransform& m);
RecoveryResult recover_resize(const Image& x_o, const Image& x_m_adv, const PreprocessorSpec& spec);

struct GeneralRecoveryOptions {
  int lambda_rounds = 10;
  double lambda_lo = 1e-2;
  double lambda_hi = 1e4;
  int inner_steps = 200;
  double step_size = 1e-2;
  double improve_tol = 1e-8;
};

/// Lagrangian recovery for any spec with a differentiable surrogate:
/// minimize ||z - x_o||^2 + lambda ||t_s(z) - x_m_adv||^2 with the iterate kept
/// inside (0,1) through z = (tanh(w)+1)/2. lambda is bisected across rounds,
/// raised when the round's solution is still correctly classified and lowered
/// when it is misclassified; exactly one oracle query per round. Returns the
/// smallest-distance misclassified iterate, or the closest iterate with
/// verified_adversarial = false when every round stayed correctly classified.
RecoveryResult recover_general(const PreprocessorSpec& spec, const Image& x_o, const Image& x_m_adv,
                               const AdversarialCheck& is_adversarial,
                               const GeneralRecoveryOptions& opts = {});

/// Stage-wise exact recovery, applied right to left, when every stage is a
/// crop or resize; otherwise falls back to recover_general on the composite.
RecoveryResult recover_pipeline(const PreprocessorSpec& pipeline, const Image& x_o, const Image& x_m_adv,
                                const AdversarialCheck& is_adversarial,
                                const GeneralRecoveryOptions& opts = {});

}  // namespace prepatk
