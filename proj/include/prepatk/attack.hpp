#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "prepatk/oracle.hpp"
#include "prepatk/preproc.hpp"
#include "prepatk/recovery.hpp"
#include "prepatk/rng.hpp"

namespace prepatk {

struct AttackConfig {
  long budget = 5000;
  int batch = 100;      // probe batch size B per gradient step
  double alpha = 3.0;   // probe radius scale
  double gamma = 30.0;  // step size scale
  bool targeted = false;
  int target_label = -1;
  std::optional<Image> init;  // required for targeted attacks
  uint64_t seed = 0;

  void validate() const;
};

struct TracePoint {
  long queries = 0;
  double distance = 0.0;
};

struct AttackResult {
  Image x_adv;          // original space
  double distance = 0;  // l2 in the original space, recomputed from x_adv
  long queries_used = 0;
  bool success = false;
  std::vector<TracePoint> trace;            // best distance so far, nonincreasing
  std::optional<Image> model_space_adv;     // bypassing attack only
  std::optional<double> recovery_residual;  // wrappers with a recovery phase
};

/// Mean-centered sign-probe gradient estimate (1/B) sum (phi_b - mean phi) u_b
/// at probe radius alpha. Probes are clamped to [0,1] before querying and the
/// call consumes exactly `batch` queries. Degenerate all-same-side batches
/// return the signed mean direction.
Image approx_grad(const std::function<bool(const Image&)>& is_adversarial, const Image& x, int batch,
                  double alpha, Rng& rng);

/// Bisection between an adversarial point and a reference point until the
/// elementwise gap is at most tol; returns the adversarial-side endpoint.
/// Precondition (unchecked, costs no queries): the endpoints really are on
/// opposite sides in the attack's success sense.
Image boundary_bisect(const std::function<bool(const Image&)>& is_adversarial, const Image& x_in,
                      const Image& x_ref, double tol = 1e-3);

/// Preprocessor-aware sign-probe estimate: probes t(x + alpha u_b), rebuilds
/// each probe as a realized model-space increment alpha'_b u'_b, averages the
/// mean-centered signs over the surviving probes, and pulls the model-space
/// estimate back through the surrogate Jacobian. Probes the preprocessor
/// annihilates are discarded from the average but still cost their query.
struct BiasedGradEstimate {
  Image model_space;  // estimate w.r.t. t(x)
  Image pulled_back;  // vjp of the above at x
  int effective = 0;
  int discarded = 0;
};

BiasedGradEstimate biased_grad(const PreprocessorSpec& spec,
                               const std::function<bool(const Image&)>& is_adversarial, const Image& x,
                               int batch, double alpha, Rng& rng);

/// HSJA-style hard-label attack in whatever space `x` lives in: random-search
/// initialization (untargeted, capped at 200 queries), bisection to the
/// boundary, then rounds of sign-probe gradient estimation with a geometric
/// step search and re-bisection. Never exceeds config.budget, and a run is a
/// prefix of any longer-budget run with the same seed.
AttackResult base_attack(HardLabelOracle& oracle, const Image& x, int y, const AttackConfig& config);

/// Bypassing attack for pipelines of crops/resizes: runs the base attack
/// directly in model space by embedding each candidate into a query on which
/// the pipeline acts as the identity, then recovers the minimum-norm
/// original-space example stage by stage.
AttackResult bypass_attack(const PreprocessorSpec& pipeline, HardLabelOracle& oracle, const Image& x_o,
                           int y, const AttackConfig& config);

/// Preprocessor-aware attack for non-bypassable transforms: probes are
/// pre-transformed, the sign-probe estimate is formed in model space from the
/// realized increments, pulled back through the surrogate Jacobian, and the
/// final iterate is mapped back with the Lagrangian recovery.
AttackResult biased_gradient_attack(const PreprocessorSpec& spec, HardLabelOracle& oracle,
                                    const Image& x_o, int y, const AttackConfig& config);

}  // namespace prepatk
