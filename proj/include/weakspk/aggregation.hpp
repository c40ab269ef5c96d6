#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <string>

#include "weakspk/types.hpp"

namespace weakspk {

enum class AggregationKind { Max, LogSumExp };

enum class TemperatureSchedule { Constant, LinearPerEpoch };

// Aggregation over the cluster dimension: per-celebrity segment similarities
// o (one value per cluster) collapse to a single recording-level logit.
struct AggregationConfig {
  AggregationKind kind = AggregationKind::LogSumExp;
  double tau_start = 0.5;
  double tau_end = 0.1;
  TemperatureSchedule schedule = TemperatureSchedule::LinearPerEpoch;

  // Temperature for a given epoch (linear interpolation between endpoints,
  // hitting tau_end exactly on the final epoch).
  double tau_at(int epoch, int num_epochs) const {
    if (schedule == TemperatureSchedule::Constant || num_epochs <= 1)
      return tau_start;
    const double t = static_cast<double>(epoch) / (num_epochs - 1);
    return tau_start + (tau_end - tau_start) * t;
  }

  void validate() const {
    if (kind == AggregationKind::LogSumExp && (tau_start <= 0 || tau_end <= 0))
      throw ConfigError("log-sum-exp aggregation requires tau > 0");
  }
};

// Index of the largest entry; ties resolve to the lowest index so that the
// max-pooling gradient route is deterministic.
template <class Derived>
int argmax_lowest(const Eigen::MatrixBase<Derived>& o) {
  int best = 0;
  for (int c = 1; c < o.size(); ++c)
    if (o(c) > o(best)) best = c;
  return best;
}

// Soft maximum tau*log((1/C) * sum_c exp(o_c / tau)), evaluated as
// m + tau*log(mean(exp((o - m)/tau))) with m = max(o) so the exponentials
// never overflow.  Sandwich bound: max(o) - tau*log(C) <= result <= max(o).
template <class Derived>
double log_sum_exp_mean(const Eigen::MatrixBase<Derived>& o, double tau) {
  const double m = o.maxCoeff();
  const double mean_exp = ((o.array() - m) / tau).exp().mean();
  return m + tau * std::log(mean_exp);
}

template <class Derived>
double aggregate(const Eigen::MatrixBase<Derived>& o, AggregationKind kind,
                 double tau) {
  if (o.size() < 1) throw ConfigError("aggregate needs at least one cluster");
  if (kind == AggregationKind::Max) return o.maxCoeff();
  if (tau <= 0) throw ConfigError("log-sum-exp aggregation requires tau > 0");
  return log_sum_exp_mean(o, tau);
}

// Gradient of the aggregated logit w.r.t. each cluster similarity: the
// cluster posterior p(c | j, S).  Log-sum-exp yields a temperature-tau
// softmax over clusters; max pooling yields a one-hot argmax indicator, so
// gradients propagate only through the highest-similarity segment.
template <class Derived>
Vector aggregation_weights(const Eigen::MatrixBase<Derived>& o,
                           AggregationKind kind, double tau) {
  Vector w = Vector::Zero(o.size());
  if (kind == AggregationKind::Max) {
    w(argmax_lowest(o)) = 1.0;
    return w;
  }
  if (tau <= 0) throw ConfigError("log-sum-exp aggregation requires tau > 0");
  const double m = o.maxCoeff();
  w = ((o.array() - m) / tau).exp();
  w /= w.sum();
  return w;
}

inline std::string to_string(AggregationKind kind) {
  return kind == AggregationKind::Max ? "max" : "lse";
}

inline AggregationKind aggregation_kind_from_string(const std::string& s) {
  if (s == "max") return AggregationKind::Max;
  if (s == "lse") return AggregationKind::LogSumExp;
  throw ConfigError("unknown aggregation kind: " + s + " (want max|lse)");
}

}  // namespace weakspk
