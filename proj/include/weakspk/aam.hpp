#pragma once

#include <cmath>

#include "weakspk/aggregation.hpp"
#include "weakspk/types.hpp"

namespace weakspk {

// Additive angular margin softmax over recording-level logits.  Logits are
// cosine-like similarities in [-1, 1]; the target logit is pushed back by an
// angular margin m before scaling by s.
struct AamConfig {
  double scale = 30.0;
  double margin = 0.1;

  void validate() const {
    if (scale <= 0) throw ConfigError("aam scale must be > 0");
    if (margin < 0 || margin >= 1.5707963267948966)
      throw ConfigError("aam margin must be in [0, pi/2)");
  }
};

struct AamResult {
  double loss = 0.0;        // -log p(target | S)
  Vector posterior;         // p(j | S), sums to 1
  double margin_chain = 1;  // d(penalized target logit) / d(raw target logit)
};

// cos(arccos(l) + m) expanded as l*cos(m) - sqrt(1-l^2)*sin(m).  Where the
// penalized angle would wrap past pi (l <= cos(pi - m)) the linear fallback
// l - m*sin(m) keeps the map monotone and bounded.
inline double margin_penalize(double logit, double margin,
                              double* chain = nullptr) {
  const double cos_m = std::cos(margin);
  const double sin_m = std::sin(margin);
  if (logit > -cos_m) {
    const double l = std::min(std::max(logit, -1.0 + 1e-12), 1.0 - 1e-12);
    if (chain) *chain = cos_m + sin_m * l / std::sqrt(1.0 - l * l);
    return logit * cos_m - std::sqrt(1.0 - l * l) * sin_m;
  }
  if (chain) *chain = 1.0;
  return logit - margin * sin_m;
}

// Margin-penalized, scaled softmax with cross-entropy against the target.
inline AamResult aam_loss(const Vector& logits, int target,
                          const AamConfig& aam) {
  AamResult r;
  Vector scaled = logits;
  scaled(target) = margin_penalize(logits(target), aam.margin,
                                   &r.margin_chain);
  scaled *= aam.scale;
  const double m = scaled.maxCoeff();
  Vector e = (scaled.array() - m).exp();
  const double z = e.sum();
  r.posterior = e / z;
  r.loss = -(scaled(target) - m - std::log(z));
  return r;
}

// dL/dl for the recording-level logits: the error signal s*(p_j - delta_jt),
// with the margin map's chain factor folded into the target column.
inline Vector aam_loss_grad(const AamResult& r, int target,
                            const AamConfig& aam) {
  Vector g = aam.scale * r.posterior;
  g(target) = aam.scale * (r.posterior(target) - 1.0) * r.margin_chain;
  return g;
}

// Loss, posteriors and dL/do for one recording: columns of o hold the
// per-cluster similarities of one celebrity; the error signal is distributed
// over clusters proportionally to p(c | j, S).
struct RecordingLoss {
  double loss = 0.0;
  Vector logits;     // aggregated l_j
  Vector posterior;  // p(j | S)
  Matrix d_logits;   // dL/do, C x J
  int predicted = 0;
};

inline RecordingLoss recording_loss(const Matrix& o, int target,
                                    AggregationKind kind, double tau,
                                    const AamConfig& aam) {
  const int num_classes = static_cast<int>(o.cols());
  RecordingLoss out;
  out.logits.resize(num_classes);
  for (int j = 0; j < num_classes; ++j)
    out.logits(j) = aggregate(o.col(j), kind, tau);
  const AamResult r = aam_loss(out.logits, target, aam);
  const Vector dl = aam_loss_grad(r, target, aam);
  out.d_logits.resize(o.rows(), o.cols());
  for (int j = 0; j < num_classes; ++j)
    out.d_logits.col(j) = aggregation_weights(o.col(j), kind, tau) * dl(j);
  out.loss = r.loss;
  out.posterior = r.posterior;
  out.predicted = argmax_lowest(out.logits);
  return out;
}

// dL/do alone; spelled out as the chain-rule composition of the cluster
// posterior with the margin-and-scale error signal.
inline Matrix loss_gradients(const Matrix& o, int target, AggregationKind kind,
                             double tau, const AamConfig& aam) {
  return recording_loss(o, target, kind, tau, aam).d_logits;
}

}  // namespace weakspk
