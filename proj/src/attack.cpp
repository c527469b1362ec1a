#include "prepatk/attack.hpp"

#include <cmath>
#include <limits>

namespace prepatk {

void AttackConfig::validate() const {
  if (budget < batch + 10) throw std::invalid_argument("AttackConfig: budget must be >= batch + 10");
  if (alpha <= 0.0) throw std::invalid_argument("AttackConfig: alpha must be positive");
  if (gamma <= 0.0) throw std::invalid_argument("AttackConfig: gamma must be positive");
  if (targeted && !init) throw std::invalid_argument("AttackConfig: targeted attacks require an init image");
  if (targeted && target_label < 0) throw std::invalid_argument("AttackConfig: targeted attacks require a target label");
}

Image approx_grad(const std::function<bool(const Image&)>& is_adversarial, const Image& x, int batch,
                  double alpha, Rng& rng) {
  if (batch < 2) throw std::invalid_argument("approx_grad: batch must be >= 2");
  auto dirs = unit_sphere_sample(rng, x.size(), batch);
  std::vector<double> phi(batch);
  double mean = 0.0;
  for (int b = 0; b < batch; ++b) {
    Image probe = x;
    for (int i = 0; i < x.size(); ++i) probe.data()[i] += alpha * dirs[b][i];
    phi[b] = is_adversarial(clamp01(probe)) ? 1.0 : -1.0;
    mean += phi[b];
  }
  mean /= batch;

  Image g(x.height(), x.width(), x.channels(), 0.0);
  bool degenerate = std::fabs(mean) == 1.0;
  for (int b = 0; b < batch; ++b) {
    double w = degenerate ? phi[b] : phi[b] - mean;
    for (int i = 0; i < x.size(); ++i) g.data()[i] += w * dirs[b][i] / batch;
  }
  return g;
}

Image boundary_bisect(const std::function<bool(const Image&)>& is_adversarial, const Image& x_in,
                      const Image& x_ref, double tol) {
  require_same_shape(x_in, x_ref, "boundary_bisect");
  Image hi = x_in;   // adversarial side
  Image lo = x_ref;  // clean side
  while (linf_diff(hi, lo) > tol) {
    Image mid = hi;
    for (int i = 0; i < mid.size(); ++i) mid.data()[i] = 0.5 * (hi.data()[i] + lo.data()[i]);
    if (is_adversarial(mid))
      hi = std::move(mid);
    else
      lo = std::move(mid);
  }
  return hi;
}

namespace {

using AdvFn = std::function<bool(const Image&)>;
using GradientFn = std::function<Image(const Image& x_adv, double alpha_t, int batch_t, Rng& rng)>;

AdvFn make_adv(HardLabelOracle& oracle, int y, const AttackConfig& cfg) {
  if (cfg.targeted) {
    int target = cfg.target_label;
    return [&oracle, target](const Image& img) { return oracle.predict(img) == target; };
  }
  return [&oracle, y](const Image& img) { return oracle.predict(img) != y; };
}

double norm2(const Image& g) {
  double acc = 0.0;
  for (double v : g.data()) acc += v * v;
  return std::sqrt(acc);
}

struct CoreOut {
  bool initialized = false;
  Image best;
  double best_dist = std::numeric_limits<double>::infinity();
  std::vector<TracePoint> trace;
  std::vector<Image> snapshots;
};

// Shared attack schedule. The per-round query sequence is independent of the
// budget, so a run is a prefix of any longer run with the same seed: a round
// only starts when its full worst-case cost still fits.
CoreOut attack_core(HardLabelOracle& oracle, const Image& x, int y, const AttackConfig& cfg,
                    const GradientFn& gradient, long reserve, bool keep_snapshots) {
  const long start = oracle.counter().total();
  auto used = [&] { return oracle.counter().total() - start; };
  AdvFn adv = make_adv(oracle, y, cfg);
  Rng rng(cfg.seed);

  CoreOut out;
  const double sqrt_d = std::sqrt(static_cast<double>(x.size()));
  // worst case per round beyond the probes: 10 step halvings + 10 bisections
  const long round_overhead = 24;

  oracle.set_phase("init");
  Image start_img;
  bool found = false;
  if (cfg.init) {
    start_img = clamp01(*cfg.init);
    found = adv(start_img);
  } else {
    long cap = std::max<long>(1, std::min<long>(200, cfg.budget - 11));
    for (long i = 0; i < cap && !found; ++i) {
      Image cand(x.height(), x.width(), x.channels());
      for (double& v : cand.data()) v = rng.uniform();
      if (adv(cand)) {
        start_img = std::move(cand);
        found = true;
      }
    }
  }
  if (!found) return out;

  oracle.set_phase("bisect");
  Image x_adv = boundary_bisect(adv, start_img, x);
  double dist = l2_distance(x_adv, x);
  out.initialized = true;
  out.best = x_adv;
  out.best_dist = dist;
  out.trace.push_back({used(), dist});
  if (keep_snapshots) out.snapshots.push_back(x_adv);

  for (long t = 1;; ++t) {
    long batch_t = static_cast<long>(cfg.batch * std::sqrt(static_cast<double>(t)));
    if (used() + batch_t + round_overhead + reserve > cfg.budget) break;

    oracle.set_phase("grad");
    double alpha_t = std::max(1e-8, cfg.alpha * dist / sqrt_d);
    Image g = gradient(x_adv, alpha_t, static_cast<int>(batch_t), rng);
    double gn = norm2(g);
    if (gn > 0.0) {
      for (double& v : g.data()) v /= gn;
      oracle.set_phase("step");
      double xi = cfg.gamma * dist / (sqrt_d * std::sqrt(static_cast<double>(t)));
      bool stepped = false;
      Image cand;
      for (int h = 0; h < 10; ++h) {
        cand = x_adv;
        for (int i = 0; i < cand.size(); ++i) cand.data()[i] += xi * g.data()[i];
        cand = clamp01(cand);
        if (adv(cand)) {
          stepped = true;
          break;
        }
        xi *= 0.5;
      }
      if (stepped) {
        oracle.set_phase("bisect");
        x_adv = boundary_bisect(adv, cand, x);
        dist = l2_distance(x_adv, x);
        if (dist < out.best_dist) {
          out.best_dist = dist;
          out.best = x_adv;
        }
      }
    }
    out.trace.push_back({used(), out.best_dist});
    if (keep_snapshots) out.snapshots.push_back(out.best);
  }
  return out;
}

AttackResult failure_result(const Image& x, long queries) {
  AttackResult res;
  res.x_adv = x;
  res.distance = std::numeric_limits<double>::infinity();
  res.queries_used = queries;
  res.success = false;
  return res;
}

void append_final_trace(AttackResult& res, long queries) {
  double best = res.trace.empty() ? res.distance : std::min(res.trace.back().distance, res.distance);
  res.trace.push_back({queries, best});
}

}  // namespace

AttackResult base_attack(HardLabelOracle& oracle, const Image& x, int y, const AttackConfig& config) {
  config.validate();
  const long start = oracle.counter().total();
  GradientFn grad = [&](const Image& x_adv, double alpha_t, int batch_t, Rng& rng) {
    AdvFn adv = make_adv(oracle, y, config);
    return approx_grad(adv, x_adv, batch_t, alpha_t, rng);
  };
  CoreOut core = attack_core(oracle, x, y, config, grad, /*reserve=*/1, /*keep_snapshots=*/false);
  if (!core.initialized) return failure_result(x, oracle.counter().total() - start);

  AttackResult res;
  res.x_adv = core.best;
  res.distance = l2_distance(res.x_adv, x);
  res.trace = std::move(core.trace);
  oracle.set_phase("verify");
  res.success = make_adv(oracle, y, config)(res.x_adv);
  res.queries_used = oracle.counter().total() - start;
  append_final_trace(res, res.queries_used);
  return res;
}

AttackResult bypass_attack(const PreprocessorSpec& pipeline, HardLabelOracle& oracle, const Image& x_o,
                           int y, const AttackConfig& config) {
  config.validate();
  if (!pipeline.bypassable())
    throw std::invalid_argument(
        "bypass_attack: pipeline contains a non-bypassable stage (not crop/resize); "
        "use biased_gradient_attack instead");

  const long start = oracle.counter().total();
  auto stages = pipeline.stage_list();

  std::vector<Image> stage_inputs;
  stage_inputs.reserve(stages.size());
  Image x_m = x_o;
  for (const auto& st : stages) {
    stage_inputs.push_back(x_m);
    x_m = apply(st, x_m);
  }

  // model-space candidates become original-space queries the pipeline leaves
  // untouched: resizes see an input already at target size, crops see their
  // output re-padded with the clean stage input's border
  auto embed = [&stages, &stage_inputs](const Image& xm) {
    Image q = xm;
    for (int i = static_cast<int>(stages.size()) - 1; i >= 0; --i) {
      if (stages[i].kind == PreprocessorSpec::Kind::kCenterCrop) {
        Image padded = stage_inputs[i];
        int off = (padded.height() - q.height()) / 2;
        for (int c = 0; c < q.channels(); ++c)
          for (int yy = 0; yy < q.height(); ++yy)
            for (int xx = 0; xx < q.width(); ++xx) padded.at(c, yy + off, xx + off) = q.at(c, yy, xx);
        q = std::move(padded);
      }
    }
    return q;
  };
  MappedOracle model_oracle(oracle, embed);

  AttackConfig cfg_m = config;
  if (config.init) cfg_m.init = apply(pipeline, clamp01(*config.init));

  GradientFn grad = [&](const Image& x_adv, double alpha_t, int batch_t, Rng& rng) {
    AdvFn adv = make_adv(model_oracle, y, cfg_m);
    return approx_grad(adv, x_adv, batch_t, alpha_t, rng);
  };
  CoreOut core = attack_core(model_oracle, x_m, y, cfg_m, grad, /*reserve=*/1, /*keep_snapshots=*/true);
  if (!core.initialized) return failure_result(x_o, oracle.counter().total() - start);

  auto no_query = [](const Image&) -> bool {
    throw std::logic_error("exact recovery must not query the oracle");
  };
  RecoveryResult rec = recover_pipeline(pipeline, x_o, core.best, no_query);

  AttackResult res;
  res.x_adv = rec.x_o_adv;
  res.model_space_adv = core.best;
  res.recovery_residual = rec.residual;
  res.distance = l2_distance(res.x_adv, x_o);

  // replay the model-space trace through the exact recovery so the reported
  // curve is measured in the original space
  res.trace.reserve(core.trace.size());
  double best_o = std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < core.trace.size(); ++i) {
    double d_o = l2_distance(recover_pipeline(pipeline, x_o, core.snapshots[i], no_query).x_o_adv, x_o);
    best_o = std::min(best_o, d_o);
    res.trace.push_back({core.trace[i].queries, best_o});
  }

  oracle.set_phase("verify");
  Image verify_img = in_unit_range(res.x_adv) ? res.x_adv : clamp01(res.x_adv);
  res.success = make_adv(oracle, y, config)(verify_img);
  res.queries_used = oracle.counter().total() - start;
  append_final_trace(res, res.queries_used);
  return res;
}

BiasedGradEstimate biased_grad(const PreprocessorSpec& spec,
                               const std::function<bool(const Image&)>& is_adversarial, const Image& x,
                               int batch, double alpha, Rng& rng) {
  if (batch < 2) throw std::invalid_argument("biased_grad: batch must be >= 2");
  Image base = apply(spec, x);
  auto dirs = unit_sphere_sample(rng, x.size(), batch);
  std::vector<Image> inc;       // realized model-space directions u'_b
  std::vector<double> phi_eff;  // their probe signs
  inc.reserve(batch);
  BiasedGradEstimate est;
  for (int b = 0; b < batch; ++b) {
    Image probe = x;
    for (int i = 0; i < probe.size(); ++i) probe.data()[i] += alpha * dirs[b][i];
    Image tb = apply(spec, clamp01(probe));
    bool hit = is_adversarial(clamp01(tb));  // query counted whether or not the probe survived
    Image diff = tb;
    double a2 = 0.0;
    for (int i = 0; i < diff.size(); ++i) {
      diff.data()[i] -= base.data()[i];
      a2 += diff.data()[i] * diff.data()[i];
    }
    a2 = std::sqrt(a2);
    if (a2 < 1e-15) {
      ++est.discarded;  // annihilated by the preprocessor
      continue;
    }
    for (double& v : diff.data()) v /= a2;
    inc.push_back(std::move(diff));
    phi_eff.push_back(hit ? 1.0 : -1.0);
  }
  est.effective = static_cast<int>(inc.size());
  est.model_space = Image(base.height(), base.width(), base.channels(), 0.0);
  est.pulled_back = Image(x.height(), x.width(), x.channels(), 0.0);
  if (inc.empty()) return est;

  double mean = 0.0;
  for (double p : phi_eff) mean += p;
  mean /= static_cast<double>(phi_eff.size());
  bool degenerate = std::fabs(mean) == 1.0;
  for (size_t b = 0; b < inc.size(); ++b) {
    double w = (degenerate ? phi_eff[b] : phi_eff[b] - mean) / static_cast<double>(inc.size());
    for (int i = 0; i < est.model_space.size(); ++i)
      est.model_space.data()[i] += w * inc[b].data()[i];
  }
  est.pulled_back = vjp(spec, x, est.model_space);
  return est;
}

AttackResult biased_gradient_attack(const PreprocessorSpec& spec, HardLabelOracle& oracle,
                                    const Image& x_o, int y, const AttackConfig& config) {
  config.validate();
  const long start = oracle.counter().total();
  AdvFn adv = make_adv(oracle, y, config);

  GradientFn grad = [&](const Image& x_adv, double alpha_t, int batch_t, Rng& rng) -> Image {
    return biased_grad(spec, adv, x_adv, batch_t, alpha_t, rng).pulled_back;
  };

  // reserve the recovery's lambda rounds plus the emit verification
  GeneralRecoveryOptions rec_opts;
  CoreOut core = attack_core(oracle, x_o, y, config, grad, rec_opts.lambda_rounds + 1,
                             /*keep_snapshots=*/false);
  if (!core.initialized) return failure_result(x_o, oracle.counter().total() - start);

  oracle.set_phase("recovery");
  Image x_m_adv = apply(spec, core.best);
  RecoveryResult rec = recover_general(spec, x_o, x_m_adv, adv, rec_opts);

  AttackResult res;
  res.recovery_residual = rec.residual;
  if (rec.verified_adversarial.value_or(false) && l2_distance(rec.x_o_adv, x_o) < core.best_dist) {
    res.x_adv = rec.x_o_adv;
  } else {
    res.x_adv = core.best;
  }
  res.distance = l2_distance(res.x_adv, x_o);
  res.trace = std::move(core.trace);

  oracle.set_phase("verify");
  res.success = adv(res.x_adv);
  res.queries_used = oracle.counter().total() - start;
  append_final_trace(res, res.queries_used);
  return res;
}

}  // namespace prepatk
