#include "prepatk/extraction.hpp"

#include <cmath>

namespace prepatk {

namespace {

int byte_of(double v) { return static_cast<int>(std::lround(v * 255.0)); }

bool bit_equal(const Image& a, const Image& b) {
  return a.same_shape(b) && a.data() == b.data();
}

}  // namespace

Image random_grid_image(Rng& rng, int side, int channels) {
  Image img(side, side, channels);
  for (double& v : img.data()) v = static_cast<double>(rng.uniform_int(256)) / 255.0;
  return img;
}

ToyModel viable_toy_model(const std::string& variant, uint64_t base_seed, int input_size, int classes,
                          int canvas, int channels, const PreprocessorSpec& pipeline) {
  for (uint64_t seed = base_seed;; seed += 977) {
    ToyModel m = variant == "mlp" ? ToyModel::mlp(seed, input_size, classes, channels)
                                  : ToyModel::linear(seed, input_size, classes, channels);
    Rng rng(seed ^ 0xABCDu);
    int first = -1;
    bool diverse = false;
    for (int i = 0; i < 50 && !diverse; ++i) {
      int label = m.label(apply(pipeline, random_grid_image(rng, canvas, channels)));
      if (first < 0)
        first = label;
      else
        diverse = label != first;
    }
    if (diverse) return m;
  }
}

UnstablePair gen_unstable_pair(HardLabelOracle& oracle, const Image& x0, const Image& x1, Rng& rng) {
  require_same_shape(x0, x1, "gen_unstable_pair");
  UnstablePair pair;
  pair.u0 = x0;
  pair.u1 = x1;
  pair.label0 = oracle.predict(pair.u0);
  pair.label1 = oracle.predict(pair.u1);
  if (pair.label0 == pair.label1)
    throw std::invalid_argument("gen_unstable_pair: endpoints share a label");

  // phase 1: random pixel mixing until the images differ in one coordinate.
  // A mix landing in a third class still separates the pair, so it becomes
  // the new low endpoint instead of being wasted.
  int stall = 0, restarts = 0;
  while (l0_diff(pair.u0, pair.u1) > 1) {
    Image mix = pair.u0;
    for (int i = 0; i < mix.size(); ++i)
      if (rng.next_u64() & 1) mix.data()[i] = pair.u1.data()[i];
    int before = l0_diff(pair.u0, pair.u1);
    int label = oracle.predict(mix);
    bool progressed = false;
    if (label == pair.label1) {
      if (l0_diff(pair.u0, mix) >= 1 && l0_diff(pair.u0, mix) < before) {
        pair.u1 = std::move(mix);
        progressed = true;
      }
    } else if (l0_diff(mix, pair.u1) >= 1 && l0_diff(mix, pair.u1) < before) {
      pair.u0 = std::move(mix);
      pair.label0 = label;
      progressed = true;
    }
    if (!progressed && ++stall >= 50) {
      stall = 0;
      if (++restarts > 5) throw std::runtime_error("gen_unstable_pair: mixing stalled after 5 restarts");
    }
  }

  // phase 2: bisect the remaining coordinate on the 8-bit grid down to one step
  int idx = -1;
  for (int i = 0; i < pair.u0.size(); ++i)
    if (pair.u0.data()[i] != pair.u1.data()[i]) idx = i;
  int b0 = byte_of(pair.u0.data()[idx]);
  int b1 = byte_of(pair.u1.data()[idx]);
  if (b0 > b1) {
    std::swap(pair.u0, pair.u1);
    std::swap(pair.label0, pair.label1);
    std::swap(b0, b1);
  }
  while (b1 - b0 > 1) {
    int bm = (b0 + b1) / 2;
    Image mid = pair.u0;
    mid.data()[idx] = bm / 255.0;
    int label = oracle.predict(mid);
    if (label == pair.label1) {
      pair.u1 = std::move(mid);
      b1 = bm;
    } else {
      // a third class counts as the low side; the pair stays differently labeled
      pair.u0 = std::move(mid);
      pair.label0 = label;
      b0 = bm;
    }
  }
  return pair;
}

PreimageResult gen_preimage(const PreprocessorSpec& guess, const Image& u, Rng& rng,
                            const PreimageOptions& opts) {
  PreimageResult res;
  res.u_prime = u;
  Image target = apply(guess, u);
  for (int step = 0; step < opts.accept_target; ++step) {
    for (int j = 0; j < opts.proposals_per_step; ++j) {
      int i = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(u.size())));
      int dir = (rng.next_u64() & 1) ? 1 : -1;
      int b = byte_of(res.u_prime.data()[i]) + dir;
      if (b < 0 || b > 255) continue;
      double old = res.u_prime.data()[i];
      res.u_prime.data()[i] = b / 255.0;
      if (bit_equal(apply(guess, res.u_prime), target)) {
        ++res.accepted;
        break;
      }
      res.u_prime.data()[i] = old;
    }
  }
  res.no_preimage = res.accepted == 0;
  if (res.no_preimage) res.u_prime = u;
  return res;
}

double estimate_p(HardLabelOracle& oracle, const UnstablePair& pair, int perturb_scale, int trials,
                  Rng& rng) {
  if (trials < 10) throw std::invalid_argument("estimate_p: trials must be >= 10");
  int same = 0;
  for (int t = 0; t < trials; ++t) {
    Image z0 = pair.u0, z1 = pair.u1;
    for (int i = 0; i < z0.size(); ++i) {
      if (rng.uniform() >= 0.25) continue;
      int dir = (rng.next_u64() & 1) ? 1 : -1;
      double delta = dir * perturb_scale / 255.0;
      z0.data()[i] += delta;
      z1.data()[i] += delta;
    }
    z0 = clamp01(z0);
    z1 = clamp01(z1);
    if (oracle.predict(z0) == oracle.predict(z1)) ++same;
  }
  return static_cast<double>(same) / trials;
}

int choose_num_trials(double p_hat, double alpha) {
  int n = 20;
  if (p_hat >= 1.0) {
    n = 3;
  } else if (p_hat > 0.0) {
    n = static_cast<int>(std::ceil(std::log(alpha) / std::log(1.0 - p_hat)));
  }
  return std::min(20, std::max(3, n));
}

HypothesisOutcome test_hypothesis(HardLabelOracle& oracle, const UnstablePair& pair,
                                  const PreprocessorSpec& guess, int num_trials, Rng& rng,
                                  const PreimageOptions& opts) {
  if (num_trials < 1) throw std::invalid_argument("test_hypothesis: num_trials must be >= 1");
  for (int t = 0; t < num_trials; ++t) {
    PreimageResult p0 = gen_preimage(guess, pair.u0, rng, opts);
    PreimageResult p1 = gen_preimage(guess, pair.u1, rng, opts);
    if (p0.no_preimage && p1.no_preimage) return HypothesisOutcome::kUntestable;
    if (oracle.predict(p0.u_prime) != pair.label0) return HypothesisOutcome::kRejected;
    if (oracle.predict(p1.u_prime) != pair.label1) return HypothesisOutcome::kRejected;
  }
  return HypothesisOutcome::kAccepted;
}

CropSearchResult extract_crop_size(HardLabelOracle& oracle, const UnstablePair& pair, int lo, int hi,
                                   int num_trials, Rng& rng, const PreimageOptions& opts) {
  if (lo > hi) throw std::invalid_argument("extract_crop_size: empty range");
  while (lo < hi) {
    int mid = (lo + hi) / 2;
    auto outcome = test_hypothesis(oracle, pair, PreprocessorSpec::center_crop(mid), num_trials, rng, opts);
    if (outcome == HypothesisOutcome::kRejected)
      lo = mid + 1;  // guessed too small: pre-image moves landed inside the true crop
    else
      hi = mid;
  }
  auto confirm = test_hypothesis(oracle, pair, PreprocessorSpec::center_crop(lo), num_trials, rng, opts);
  return {lo, confirm == HypothesisOutcome::kRejected};
}

SpaceSearchResult extract_from_space(HardLabelOracle& oracle, const UnstablePair& pair,
                                     const std::vector<PreprocessorSpec>& candidates, int num_trials,
                                     Rng& rng, const PreimageOptions& opts) {
  if (candidates.empty()) throw std::invalid_argument("extract_from_space: no candidates");
  SpaceSearchResult res;
  std::optional<PreprocessorSpec> untestable;
  int untestable_count = 0;
  for (const auto& cand : candidates) {
    ++res.candidates_tested;
    auto outcome = test_hypothesis(oracle, pair, cand, num_trials, rng, opts);
    if (outcome == HypothesisOutcome::kAccepted) {
      res.identified = cand;
      return res;
    }
    if (outcome == HypothesisOutcome::kUntestable) {
      untestable = cand;
      ++untestable_count;
    }
  }
  if (untestable_count == 1) {
    // every testable candidate was rejected; the lone untestable one stands
    res.identified = untestable;
    res.by_elimination = true;
  }
  return res;
}

PipelineExtractionResult extract_pipeline(HardLabelOracle& oracle, const UnstablePair& pair,
                                          const std::vector<std::vector<PreprocessorSpec>>& stage_spaces,
                                          int num_trials, Rng& rng, const PreimageOptions& opts) {
  PipelineExtractionResult res;
  for (const auto& space : stage_spaces) {
    std::vector<PreprocessorSpec> composites;
    composites.reserve(space.size());
    for (const auto& cand : space) {
      std::vector<PreprocessorSpec> stages = res.identified;
      stages.push_back(cand);
      composites.push_back(PreprocessorSpec::pipeline(std::move(stages)));
    }
    auto found = extract_from_space(oracle, pair, composites, num_trials, rng, opts);
    if (!found.identified) return res;  // partial
    res.identified.push_back(found.identified->stages.back());
  }
  res.complete = true;
  auto verdict = test_hypothesis(oracle, pair, PreprocessorSpec::pipeline(res.identified), num_trials,
                                 rng, opts);
  res.composite_verified = verdict != HypothesisOutcome::kRejected;
  return res;
}

ExtractionReport run_extraction(HardLabelOracle& oracle, const HypothesisSpace& space, Rng& rng,
                                const ExtractionRunOptions& opts) {
  ExtractionReport report;
  report.alpha = opts.alpha;
  long mark = oracle.counter().total();

  oracle.set_phase("pair");
  Image x0 = random_grid_image(rng, opts.input_side, opts.channels);
  Image x1;
  int l0 = oracle.predict(x0);
  for (int attempt = 0;; ++attempt) {
    x1 = random_grid_image(rng, opts.input_side, opts.channels);
    if (oracle.predict(x1) != l0) break;
    if (attempt % 25 == 24) {  // maybe x0's class dominates; re-anchor
      x0 = random_grid_image(rng, opts.input_side, opts.channels);
      l0 = oracle.predict(x0);
    }
    if (attempt >= 400) throw std::runtime_error("run_extraction: could not find two classes");
  }
  UnstablePair pair = gen_unstable_pair(oracle, x0, x1, rng);
  report.queries_pair = oracle.counter().total() - mark;
  mark = oracle.counter().total();

  oracle.set_phase("p");
  report.p_estimate = estimate_p(oracle, pair, opts.p_scale, opts.p_trials, rng);
  // z overstates pre-image instability (it touches more coordinates than the
  // greedy moves reach), so the trial budget discounts the estimate
  report.trials_per_hypothesis = choose_num_trials(0.5 * report.p_estimate, opts.alpha);
  report.queries_p = oracle.counter().total() - mark;
  mark = oracle.counter().total();

  oracle.set_phase("test");
  switch (space.strategy) {
    case HypothesisSpace::Strategy::kBinarySearchCropSize: {
      auto found = extract_crop_size(oracle, pair, space.crop_lo, space.crop_hi,
                                     report.trials_per_hypothesis, rng, opts.preimage);
      report.mismatch = found.mismatch;
      if (!found.mismatch) {
        report.identified = PreprocessorSpec::center_crop(found.size);
        report.complete = true;
      }
      break;
    }
    case HypothesisSpace::Strategy::kExhaustive: {
      auto found = extract_from_space(oracle, pair, space.candidates, report.trials_per_hypothesis, rng,
                                      opts.preimage);
      report.identified = found.identified;
      report.by_elimination = found.by_elimination;
      report.complete = found.identified.has_value();
      break;
    }
    case HypothesisSpace::Strategy::kSequentialPipeline: {
      auto found = extract_pipeline(oracle, pair, space.stage_spaces, report.trials_per_hypothesis, rng,
                                    opts.preimage);
      report.identified_stages = found.identified;
      report.complete = found.complete && found.composite_verified;
      if (report.complete) report.identified = PreprocessorSpec::pipeline(found.identified);
      break;
    }
  }
  report.queries_test = oracle.counter().total() - mark;
  return report;
}

}  // namespace prepatk
