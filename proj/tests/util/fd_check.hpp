#pragma once

// Finite-difference gradient oracle shared by the unit and acceptance
// suites.  The oracle path recomputes the recording loss through the public
// forward functions only; the analytic side under test is the explicit
// backward pass reached via batch_forward_backward.

#include <cmath>
#include <vector>

#include "weakspk/aam.hpp"
#include "weakspk/net.hpp"
#include "weakspk/rng.hpp"
#include "weakspk/trainer.hpp"

namespace weakspk::testutil {

struct FdInstance {
  EmbeddingNet net;
  ClassificationHead head;
  std::vector<Matrix> segments;  // F x T each, one per cluster
  int target = 0;
};

inline FdInstance make_instance(int clusters, int classes, int embedding_dim,
                                int input_dim, int frames, int sub_centers,
                                uint64_t seed) {
  Rng rng(seed);
  FdInstance inst;
  NetConfig cfg;
  cfg.input_dim = input_dim;
  cfg.hidden = {16, 16};
  cfg.embedding_dim = embedding_dim;
  Rng net_rng = rng.fork("net");
  inst.net = EmbeddingNet::init(cfg, net_rng);
  Rng head_rng = rng.fork("head");
  inst.head =
      ClassificationHead::init(classes, sub_centers, embedding_dim, head_rng);
  Rng data_rng = rng.fork("data");
  for (int c = 0; c < clusters; ++c) {
    Matrix seg(input_dim, frames);
    for (int i = 0; i < seg.size(); ++i) seg.data()[i] = data_rng.normal();
    inst.segments.push_back(std::move(seg));
  }
  inst.target = data_rng.uniform_int(classes);
  return inst;
}

inline double total_recording_loss(const EmbeddingNet& net,
                                   const ClassificationHead& head,
                                   const std::vector<Matrix>& segments,
                                   int target, AggregationKind kind,
                                   double tau, const AamConfig& aam) {
  Matrix embeddings(net.cfg.embedding_dim,
                    static_cast<int>(segments.size()));
  for (size_t c = 0; c < segments.size(); ++c)
    embeddings.col(static_cast<int>(c)) = forward_embed(net, segments[c]);
  const Matrix o = segment_similarities(head, embeddings);
  return recording_loss(o, target, kind, tau, aam).loss;
}

// Max relative error between the analytic gradient and 64-bit central
// finite differences over every network and head parameter.  The relative
// error uses max(1, |analytic|, |numeric|) as the denominator.
inline double max_fd_rel_error(const FdInstance& instance,
                               AggregationKind kind, double tau,
                               const AamConfig& aam, double step) {
  FdInstance work = instance;

  Minibatch batch(1);
  batch[0].recording_id = 0;
  batch[0].target_class = work.target;
  batch[0].segments = work.segments;
  NetGrads net_grads = NetGrads::zeros_like(work.net);
  Matrix head_grads;
  batch_forward_backward(work.net, work.head, batch, kind, tau, aam, 1,
                         net_grads, head_grads);

  const auto loss = [&]() {
    return total_recording_loss(work.net, work.head, work.segments,
                                work.target, kind, tau, aam);
  };
  double max_rel = 0.0;
  const auto check_coeff = [&](double& param, double analytic) {
    const double saved = param;
    param = saved + step;
    const double up = loss();
    param = saved - step;
    const double down = loss();
    param = saved;
    const double numeric = (up - down) / (2.0 * step);
    const double rel = std::abs(analytic - numeric) /
                       std::max({1.0, std::abs(analytic), std::abs(numeric)});
    max_rel = std::max(max_rel, rel);
  };
  for (size_t l = 0; l < work.net.weights.size(); ++l) {
    for (int i = 0; i < work.net.weights[l].size(); ++i)
      check_coeff(work.net.weights[l].data()[i],
                  net_grads.weights[l].data()[i]);
    for (int i = 0; i < work.net.biases[l].size(); ++i)
      check_coeff(work.net.biases[l].data()[i], net_grads.biases[l].data()[i]);
  }
  for (int i = 0; i < work.head.rows.size(); ++i)
    check_coeff(work.head.rows.data()[i], head_grads.data()[i]);
  return max_rel;
}

}  // namespace weakspk::testutil
