#pragma once

#include <algorithm>
#include <optional>
#include <vector>

#include "prepatk/oracle.hpp"
#include "prepatk/preproc.hpp"
#include "prepatk/rng.hpp"

namespace prepatk {

/// Two images one 8-bit step apart in one pixel that the live pipeline labels
/// differently. Small perturbations are likely to collapse both to one label,
/// which is what the hypothesis tests lean on.
struct UnstablePair {
  Image u0, u1;
  int label0 = 0, label1 = 0;
};

/// Builds an unstable pair from two differently-labeled 8-bit images by first
/// shrinking the l0 difference with random pixel mixing and then bisecting the
/// last coordinate down to a single 1/255 step. Throws when the endpoints
/// share a label or when the mixing phase stalls through 5 restarts.
UnstablePair gen_unstable_pair(HardLabelOracle& oracle, const Image& x0, const Image& x1, Rng& rng);

struct PreimageOptions {
  int proposals_per_step = 32;  // J
  int accept_target = 64;       // K
};

struct PreimageResult {
  Image u_prime;
  int accepted = 0;
  bool no_preimage = false;  // no accepting move in K*J proposals
};

/// Greedy pre-image search: random single-pixel +-1/255 moves kept only when
/// the guessed transform's output stays bit-identical. Larger accepted counts
/// mean larger ||u' - u|| and better test power. Queries nothing.
PreimageResult gen_preimage(const PreprocessorSpec& guess, const Image& u, Rng& rng,
                            const PreimageOptions& opts = {});

/// Empirical probability that one random +-scale/255 perturbation (applied to
/// a random quarter of the coordinates of both pair members) maps both to the
/// same label. Costs 2*trials queries.
double estimate_p(HardLabelOracle& oracle, const UnstablePair& pair, int perturb_scale, int trials,
                  Rng& rng);

/// Trials needed so (1-p)^n <= alpha, clamped to [3, 20].
int choose_num_trials(double p_hat, double alpha = 0.01);

enum class HypothesisOutcome { kAccepted, kRejected, kUntestable };

/// Pre-image hypothesis test: the guess is accepted only when every trial
/// preserves both labels. Untestable means the guess admits no nontrivial
/// pre-image (e.g. an identity-like guess) and carries no evidence either way.
HypothesisOutcome test_hypothesis(HardLabelOracle& oracle, const UnstablePair& pair,
                                  const PreprocessorSpec& guess, int num_trials, Rng& rng,
                                  const PreimageOptions& opts = {});

struct CropSearchResult {
  int size = 0;
  bool mismatch = false;  // the whole range tested rejected: truth above the range
};

/// Binary search on the crop size: guesses at or above the true size never
/// change predictions, smaller guesses do, so the accepted region is a suffix.
CropSearchResult extract_crop_size(HardLabelOracle& oracle, const UnstablePair& pair, int lo, int hi,
                                   int num_trials, Rng& rng, const PreimageOptions& opts = {});

struct SpaceSearchResult {
  std::optional<PreprocessorSpec> identified;
  bool by_elimination = false;  // sole untestable candidate left after all others rejected
  int candidates_tested = 0;
};

/// Ordered exhaustive scan with early exit on the first accepted candidate.
/// When no candidate is accepted but exactly one was untestable and the rest
/// rejected, that candidate is identified by elimination.
SpaceSearchResult extract_from_space(HardLabelOracle& oracle, const UnstablePair& pair,
                                     const std::vector<PreprocessorSpec>& candidates, int num_trials,
                                     Rng& rng, const PreimageOptions& opts = {});

struct PipelineExtractionResult {
  std::vector<PreprocessorSpec> identified;  // one entry per resolved stage
  bool complete = false;
  bool composite_verified = false;
};

/// Extracts a multi-stage pipeline front to back: stage k is guessed with the
/// already-identified prefix baked into the pre-images, the unresolved suffix
/// subsumed into the classifier. Ends with one composite hypothesis test.
PipelineExtractionResult extract_pipeline(HardLabelOracle& oracle, const UnstablePair& pair,
                                          const std::vector<std::vector<PreprocessorSpec>>& stage_spaces,
                                          int num_trials, Rng& rng, const PreimageOptions& opts = {});

/// One extraction run end to end, with the query split the reports need.
struct HypothesisSpace {
  enum class Strategy { kExhaustive, kBinarySearchCropSize, kSequentialPipeline };
  Strategy strategy = Strategy::kExhaustive;
  std::vector<PreprocessorSpec> candidates;                // kExhaustive
  int crop_lo = 0, crop_hi = 0;                            // kBinarySearchCropSize
  std::vector<std::vector<PreprocessorSpec>> stage_spaces; // kSequentialPipeline
};

struct ExtractionReport {
  std::optional<PreprocessorSpec> identified;
  std::vector<PreprocessorSpec> identified_stages;  // pipeline strategy
  long queries_pair = 0;
  long queries_p = 0;
  long queries_test = 0;
  int trials_per_hypothesis = 0;
  double p_estimate = 0.0;
  double alpha = 0.01;
  bool mismatch = false;
  bool by_elimination = false;
  bool complete = false;

  long total_queries() const { return queries_pair + queries_p + queries_test; }
};

struct ExtractionRunOptions {
  int input_side = 16;
  int channels = 1;
  int p_trials = 15;
  int p_scale = 1;  // perturbation magnitude in 1/255 steps
  double alpha = 0.01;
  PreimageOptions preimage;

  /// Pre-image moves should touch roughly the same fraction of the canvas as
  /// the instability probe does; K = dim/4 matches the defaults at 16x16.
  static ExtractionRunOptions for_side(int side, int channels = 1) {
    ExtractionRunOptions o;
    o.input_side = side;
    o.channels = channels;
    o.preimage.accept_target = std::max(64, side * side * channels / 2);
    return o;
  }
};

ExtractionReport run_extraction(HardLabelOracle& oracle, const HypothesisSpace& space, Rng& rng,
                                const ExtractionRunOptions& opts = {});

/// Random image on the 8-bit grid, the only query alphabet extraction uses.
Image random_grid_image(Rng& rng, int side, int channels);

/// Victim-side setup: the first seed at or after base_seed (stepping
/// deterministically) whose model shows at least two labels on random grid
/// probes through the pipeline. A constant-label victim has no class boundary
/// and nothing to extract. Queries nothing through an oracle.
ToyModel viable_toy_model(const std::string& variant, uint64_t base_seed, int input_size, int classes,
                          int canvas, int channels, const PreprocessorSpec& pipeline);

}  // namespace prepatk
