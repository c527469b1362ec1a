#include "prepatk/recovery.hpp"

#include <cmath>

namespace prepatk {

namespace {

double constraint_residual(const PreprocessorSpec& spec, const Image& x_o_adv, const Image& x_m_adv) {
  return l2_distance(apply(spec, x_o_adv), x_m_adv);
}

}  // namespace

RecoveryResult recover_crop(const Image& x_o, const Image& x_m_adv, const PreprocessorSpec& spec) {
  if (spec.kind != PreprocessorSpec::Kind::kCenterCrop)
    throw std::invalid_argument("recover_crop: spec is not a center crop");
  if (!x_o.is_square()) throw std::invalid_argument("recover_crop: x_o must be square");
  int s = x_o.height(), t = spec.target;
  if (x_m_adv.height() != t || x_m_adv.width() != t || x_m_adv.channels() != x_o.channels())
    throw std::invalid_argument("recover_crop: x_m_adv shape mismatch");
  if (s < t) throw std::invalid_argument("recover_crop: x_o smaller than crop target");
  int off = (s - t) / 2;
  RecoveryResult res;
  res.x_o_adv = x_o;
  for (int c = 0; c < x_o.channels(); ++c)
    for (int y = 0; y < t; ++y)
      for (int x = 0; x < t; ++x) res.x_o_adv.at(c, y + off, x + off) = x_m_adv.at(c, y, x);
  res.residual = 0.0;
  return res;
}

RecoveryResult recover_resize(const Image& x_o, const Image& x_m_adv, const PseudoInverse& pinv) {
  const LinearTransform& m = pinv.transform();
  int s_o = static_cast<int>(std::lround(std::sqrt(static_cast<double>(m.in_dim))));
  int s_m = static_cast<int>(std::lround(std::sqrt(static_cast<double>(m.out_dim))));
  if (x_o.height() != s_o || x_o.width() != s_o)
    throw std::invalid_argument("recover_resize: x_o does not match the transform input side");
  if (x_m_adv.height() != s_m || x_m_adv.width() != s_m || x_m_adv.channels() != x_o.channels())
    throw std::invalid_argument("recover_resize: x_m_adv shape mismatch");

  RecoveryResult res;
  res.x_o_adv = x_o;
  double resid2 = 0.0;
  for (int c = 0; c < x_o.channels(); ++c) {
    Eigen::Map<const Eigen::VectorXd> xo(x_o.channel(c), m.in_dim);
    Eigen::Map<const Eigen::VectorXd> ym(x_m_adv.channel(c), m.out_dim);
    Eigen::VectorXd rhs = ym - m.apply_vec(xo);
    Eigen::VectorXd delta = pinv.apply(rhs);
    double* dst = res.x_o_adv.channel(c);
    for (int i = 0; i < m.in_dim; ++i) dst[i] += delta[i];
    Eigen::Map<const Eigen::VectorXd> rec(res.x_o_adv.channel(c), m.in_dim);
    resid2 += (m.apply_vec(rec) - ym).squaredNorm();
  }
  res.residual = std::sqrt(resid2);
  return res;
}

RecoveryResult recover_resize(const Image& x_o, const Image& x_m_adv, const LinearTransform& m) {
  return recover_resize(x_o, x_m_adv, PseudoInverse(m));
}

RecoveryResult recover_resize(const Image& x_o, const Image& x_m_adv, const PreprocessorSpec& spec) {
  if (spec.kind != PreprocessorSpec::Kind::kResize)
    throw std::invalid_argument("recover_resize: spec is not a resize");
  return recover_resize(x_o, x_m_adv, cached_pseudo_inverse(spec, x_o.height()));
}

RecoveryResult recover_general(const PreprocessorSpec& spec, const Image& x_o, const Image& x_m_adv,
                               const AdversarialCheck& is_adversarial, const GeneralRecoveryOptions& opts) {
  const int n = x_o.size();
  const double kEdge = 1e-6;

  // w parameterization keeps every iterate strictly inside the box
  std::vector<double> w0(n);
  for (int i = 0; i < n; ++i) {
    double z = std::min(1.0 - kEdge, std::max(kEdge, x_o.data()[i]));
    w0[i] = std::atanh(2.0 * z - 1.0);
  }

  auto loss_of = [&](const Image& z) {
    Image tz = apply_smooth(spec, z);
    require_same_shape(tz, x_m_adv, "recover_general");
    double cons = 0.0;
    for (int i = 0; i < tz.size(); ++i) {
      double r = tz.data()[i] - x_m_adv.data()[i];
      cons += r * r;
    }
    double dist2 = 0.0;
    for (int i = 0; i < n; ++i) {
      double d = z.data()[i] - x_o.data()[i];
      dist2 += d * d;
    }
    return std::make_pair(dist2, cons);
  };

  auto to_z = [&](const std::vector<double>& w, Image& z) {
    for (int i = 0; i < n; ++i) z.data()[i] = (std::tanh(w[i]) + 1.0) * 0.5;
  };

  // gradient steps are normalized so the fixed step stays meaningful across
  // six decades of lambda; the step backs off whenever the loss worsens
  auto run_round = [&](double lambda) {
    std::vector<double> w = w0, w_best = w0;
    Image z = x_o;
    to_z(w, z);
    auto [d2, cons] = loss_of(z);
    double loss = d2 + lambda * cons;
    double best_loss = loss;
    double lr = opts.step_size;
    for (int it = 0; it < opts.inner_steps; ++it) {
      Image tz = apply_smooth(spec, z);
      Image r = tz;
      for (int i = 0; i < r.size(); ++i) r.data()[i] -= x_m_adv.data()[i];
      Image pull = vjp(spec, z, r);
      double gmax = 0.0;
      std::vector<double> gw(n);
      for (int i = 0; i < n; ++i) {
        double gz = 2.0 * (z.data()[i] - x_o.data()[i]) + 2.0 * lambda * pull.data()[i];
        gw[i] = gz * 2.0 * z.data()[i] * (1.0 - z.data()[i]);
        gmax = std::max(gmax, std::fabs(gw[i]));
      }
      if (gmax == 0.0) break;
      for (int i = 0; i < n; ++i) w[i] -= lr * gw[i] / gmax;
      to_z(w, z);
      auto [nd2, ncons] = loss_of(z);
      double nloss = nd2 + lambda * ncons;
      if (nloss < best_loss) {
        if (best_loss - nloss < opts.improve_tol && it > 0) {
          best_loss = nloss;
          w_best = w;
          break;
        }
        best_loss = nloss;
        w_best = w;
      } else {
        lr *= 0.5;
        w = w_best;
        to_z(w, z);
        if (lr < 1e-7) break;
      }
      loss = nloss;
    }
    to_z(w_best, z);
    return z;
  };

  double lo = opts.lambda_lo, hi = opts.lambda_hi;
  Image best_adv, best_any;
  double best_adv_dist = std::numeric_limits<double>::infinity();
  double best_any_dist = std::numeric_limits<double>::infinity();
  double best_lambda = 0.0;
  for (int round = 0; round < opts.lambda_rounds; ++round) {
    double lambda = std::sqrt(lo * hi);  // geometric midpoint of the bracket
    Image z = run_round(lambda);
    double dist = l2_distance(z, x_o);
    bool adv = is_adversarial(z);  // the round's single query
    if (adv) {
      if (dist < best_adv_dist) {
        best_adv_dist = dist;
        best_adv = z;
        best_lambda = lambda;
      }
      hi = lambda;
    } else {
      lo = lambda;
    }
    if (dist < best_any_dist) {
      best_any_dist = dist;
      best_any = z;
    }
  }

  RecoveryResult res;
  if (best_adv_dist < std::numeric_limits<double>::infinity()) {
    res.x_o_adv = best_adv;
    res.lambda = best_lambda;
    res.verified_adversarial = true;
  } else {
    res.x_o_adv = best_any;
    res.verified_adversarial = false;
  }
  res.residual = constraint_residual(spec, res.x_o_adv, x_m_adv);
  return res;
}

RecoveryResult recover_pipeline(const PreprocessorSpec& pipeline, const Image& x_o, const Image& x_m_adv,
                                const AdversarialCheck& is_adversarial, const GeneralRecoveryOptions& opts) {
  auto stages = pipeline.stage_list();
  if (stages.empty()) {
    RecoveryResult res;
    res.x_o_adv = x_m_adv;
    res.residual = 0.0;
    return res;
  }
  if (!pipeline.bypassable()) return recover_general(pipeline, x_o, x_m_adv, is_adversarial, opts);

  std::vector<Image> inputs;  // inputs[i] is what stage i sees for the clean image
  inputs.reserve(stages.size());
  Image cur = x_o;
  for (const auto& st : stages) {
    inputs.push_back(cur);
    cur = apply(st, cur);
  }

  Image y = x_m_adv;
  for (int i = static_cast<int>(stages.size()) - 1; i >= 0; --i) {
    if (stages[i].kind == PreprocessorSpec::Kind::kCenterCrop) {
      y = recover_crop(inputs[i], y, stages[i]).x_o_adv;
    } else {
      y = recover_resize(inputs[i], y, cached_pseudo_inverse(stages[i], inputs[i].height())).x_o_adv;
    }
  }

  RecoveryResult res;
  res.x_o_adv = std::move(y);
  res.residual = constraint_residual(pipeline, res.x_o_adv, x_m_adv);
  return res;
}

}  // namespace prepatk
