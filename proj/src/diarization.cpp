#include "weakspk/diarization.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>

namespace weakspk {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

Matrix regularized(const Matrix& cov) {
  const double eps =
      1e-6 * cov.trace() / static_cast<double>(cov.rows());
  return cov + Matrix::Identity(cov.rows(), cov.cols()) * std::max(eps, 1e-12);
}

SegmentGaussian merge_stats(const SegmentGaussian& a,
                            const SegmentGaussian& b) {
  SegmentGaussian m;
  m.count = a.count + b.count;
  m.mean = (a.count * a.mean + b.count * b.mean) / m.count;
  // Combine second moments: E[xx^T] = cov + mean mean^T per part.
  const Matrix ma = a.covariance + a.mean * a.mean.transpose();
  const Matrix mb = b.covariance + b.mean * b.mean.transpose();
  const Matrix joint = (a.count * ma + b.count * mb) / m.count;
  m.covariance = joint - m.mean * m.mean.transpose();
  return m;
}

}  // namespace

double SegmentGaussian::log_det() const {
  const Eigen::LDLT<Matrix> ldlt(regularized(covariance));
  double ld = 0.0;
  for (int i = 0; i < covariance.rows(); ++i)
    ld += std::log(std::max(ldlt.vectorD()(i), 1e-300));
  return ld;
}

double delta_bic(const SegmentGaussian& a, const SegmentGaussian& b,
                 const SegmentGaussian& joint, double lambda) {
  const double f = static_cast<double>(a.mean.size());
  const double n = a.count + b.count;
  const double penalty = 0.5 * (f + 0.5 * f * (f + 1)) * std::log(n);
  return 0.5 * n * joint.log_det() - 0.5 * a.count * a.log_det() -
         0.5 * b.count * b.log_det() - lambda * penalty;
}

CumulativeStats::CumulativeStats(const Matrix& frames)
    : dim_(static_cast<int>(frames.rows())),
      num_frames_(static_cast<int>(frames.cols())) {
  sum_.setZero(dim_, num_frames_ + 1);
  sum_sq_.setZero(dim_ * dim_, num_frames_ + 1);
  for (int t = 0; t < num_frames_; ++t) {
    sum_.col(t + 1) = sum_.col(t) + frames.col(t);
    Eigen::Map<Matrix> acc(sum_sq_.col(t + 1).data(), dim_, dim_);
    sum_sq_.col(t + 1) = sum_sq_.col(t);
    acc.noalias() += frames.col(t) * frames.col(t).transpose();
  }
}

SegmentGaussian CumulativeStats::interval(int begin, int end) const {
  SegmentGaussian g;
  g.count = end - begin;
  g.mean = (sum_.col(end) - sum_.col(begin)) / g.count;
  const Vector sq = (sum_sq_.col(end) - sum_sq_.col(begin)) / g.count;
  g.covariance = Eigen::Map<const Matrix>(sq.data(), dim_, dim_) -
                 g.mean * g.mean.transpose();
  return g;
}

std::vector<Chunk> change_detect(const FeatureMatrix& features,
                                 int recording_id, int window_frames,
                                 double lambda, int min_chunk_frames) {
  const int total = features.num_frames();
  if (total < 2 * min_chunk_frames)
    return {Chunk{recording_id, 0, total}};

  const CumulativeStats stats(features.frames);
  const int lo = min_chunk_frames;
  const int hi = total - min_chunk_frames;
  std::vector<double> score(static_cast<size_t>(total), kNegInf);
  for (int t = lo; t <= hi; ++t) {
    const int w = std::min({window_frames, t, total - t});
    const SegmentGaussian left = stats.interval(t - w, t);
    const SegmentGaussian right = stats.interval(t, t + w);
    const SegmentGaussian joint = stats.interval(t - w, t + w);
    score[static_cast<size_t>(t)] = delta_bic(left, right, joint, lambda);
  }

  // Positive local maxima, non-maximum suppression over +-min_chunk_frames.
  std::vector<int> candidates;
  for (int t = lo; t <= hi; ++t) {
    const double s = score[static_cast<size_t>(t)];
    if (s <= 0) continue;
    bool is_max = true;
    const int a = std::max(lo, t - min_chunk_frames);
    const int b = std::min(hi, t + min_chunk_frames);
    for (int u = a; u <= b && is_max; ++u) {
      if (score[static_cast<size_t>(u)] > s) is_max = false;
      if (score[static_cast<size_t>(u)] == s && u < t) is_max = false;
    }
    if (is_max) candidates.push_back(t);
  }

  std::vector<int> boundaries;
  int last = 0;
  for (int t : candidates) {
    if (t - last >= min_chunk_frames && total - t >= min_chunk_frames) {
      boundaries.push_back(t);
      last = t;
    }
  }

  std::vector<Chunk> chunks;
  int begin = 0;
  for (int b : boundaries) {
    chunks.push_back(Chunk{recording_id, begin, b});
    begin = b;
  }
  chunks.push_back(Chunk{recording_id, begin, total});
  return chunks;
}

Clustering bic_ahc(const std::vector<Chunk>& chunks,
                   const FeatureMatrix& features, double lambda) {
  if (chunks.empty()) throw ConfigError("bic_ahc needs at least one chunk");
  const CumulativeStats stats(features.frames);

  struct Cluster {
    std::vector<Chunk> chunks;
    SegmentGaussian gaussian;
    int first_start;
  };
  std::vector<Cluster> clusters;
  for (const auto& c : chunks)
    clusters.push_back(
        Cluster{{c}, stats.interval(c.start_frame, c.end_frame),
                c.start_frame});

  while (clusters.size() > 1) {
    double best = std::numeric_limits<double>::infinity();
    int bi = -1, bj = -1;
    SegmentGaussian best_joint;
    for (size_t i = 0; i < clusters.size(); ++i) {
      for (size_t j = i + 1; j < clusters.size(); ++j) {
        SegmentGaussian joint =
            merge_stats(clusters[i].gaussian, clusters[j].gaussian);
        const double d =
            delta_bic(clusters[i].gaussian, clusters[j].gaussian, joint,
                      lambda);
        if (d < best) {
          best = d;
          bi = static_cast<int>(i);
          bj = static_cast<int>(j);
          best_joint = std::move(joint);
        }
      }
    }
    if (best >= 0) break;
    auto& a = clusters[static_cast<size_t>(bi)];
    auto& b = clusters[static_cast<size_t>(bj)];
    a.chunks.insert(a.chunks.end(), b.chunks.begin(), b.chunks.end());
    a.gaussian = best_joint;
    a.first_start = std::min(a.first_start, b.first_start);
    clusters.erase(clusters.begin() + bj);
  }

  std::sort(clusters.begin(), clusters.end(),
            [](const Cluster& a, const Cluster& b) {
              return a.first_start < b.first_start;
            });
  Clustering out;
  out.recording_id = chunks.front().recording_id;
  for (auto& c : clusters) {
    std::sort(c.chunks.begin(), c.chunks.end(),
              [](const Chunk& a, const Chunk& b) {
                return a.start_frame < b.start_frame;
              });
    out.clusters.push_back(std::move(c.chunks));
  }
  return out;
}

double DiagGmm::log_pdf(const Vector& x) const {
  const int g = static_cast<int>(log_weights.size());
  double best = kNegInf;
  Vector lp(g);
  for (int k = 0; k < g; ++k) {
    const auto diff = x - means.col(k);
    double e = 0.0;
    for (int d = 0; d < x.size(); ++d) {
      const double v = variances(d, k);
      e += diff(d) * diff(d) / v + std::log(2.0 * 3.14159265358979323846 * v);
    }
    lp(k) = log_weights(k) - 0.5 * e;
    best = std::max(best, lp(k));
  }
  double s = 0.0;
  for (int k = 0; k < g; ++k) s += std::exp(lp(k) - best);
  return best + std::log(s);
}

DiagGmm train_diag_gmm(const Matrix& frames, int components, int iterations) {
  const int dim = static_cast<int>(frames.rows());
  const int n = static_cast<int>(frames.cols());
  const Vector global_mean = frames.rowwise().mean();
  Vector global_var =
      (frames.colwise() - global_mean).array().square().rowwise().mean();
  const double var_floor =
      std::max(1e-8, 1e-3 * global_var.mean());
  global_var = global_var.array().max(var_floor);

  if (n < 2 * components) components = 1;

  DiagGmm gmm;
  gmm.log_weights = Vector::Constant(components, -std::log(components));
  gmm.means.resize(dim, components);
  gmm.variances.resize(dim, components);
  for (int k = 0; k < components; ++k) {
    const int idx = static_cast<int>((k + 0.5) * n / components);
    gmm.means.col(k) = frames.col(std::min(idx, n - 1));
    gmm.variances.col(k) = global_var;
  }
  if (components == 1) {
    gmm.means.col(0) = global_mean;
    return gmm;
  }

  Matrix resp(components, n);
  for (int it = 0; it < iterations; ++it) {
    // E-step in log space.
    for (int t = 0; t < n; ++t) {
      Vector lp(components);
      for (int k = 0; k < components; ++k) {
        double e = 0.0;
        for (int d = 0; d < dim; ++d) {
          const double v = gmm.variances(d, k);
          const double diff = frames(d, t) - gmm.means(d, k);
          e += diff * diff / v + std::log(2.0 * 3.14159265358979323846 * v);
        }
        lp(k) = gmm.log_weights(k) - 0.5 * e;
      }
      const double m = lp.maxCoeff();
      Vector w = (lp.array() - m).exp();
      resp.col(t) = w / w.sum();
    }
    // M-step.
    for (int k = 0; k < components; ++k) {
      const double nk = resp.row(k).sum();
      if (nk < 1e-8) {
        gmm.means.col(k) = global_mean;
        gmm.variances.col(k) = global_var;
        gmm.log_weights(k) = std::log(1e-8);
        continue;
      }
      Vector mean = Vector::Zero(dim);
      for (int t = 0; t < n; ++t) mean += resp(k, t) * frames.col(t);
      mean /= nk;
      Vector var = Vector::Zero(dim);
      for (int t = 0; t < n; ++t)
        var += resp(k, t) * (frames.col(t) - mean).array().square().matrix();
      var /= nk;
      gmm.means.col(k) = mean;
      gmm.variances.col(k) = var.array().max(var_floor);
      gmm.log_weights(k) = std::log(nk / n);
    }
    // Renormalize weights after possible component resets.
    const double m = gmm.log_weights.maxCoeff();
    const double z =
        m + std::log((gmm.log_weights.array() - m).exp().sum());
    gmm.log_weights.array() -= z;
  }
  return gmm;
}

namespace {

Matrix cluster_frames(const std::vector<Chunk>& chunks, const Matrix& frames) {
  int total = 0;
  for (const auto& c : chunks) total += c.length();
  Matrix out(frames.rows(), total);
  int at = 0;
  for (const auto& c : chunks) {
    out.middleCols(at, c.length()) =
        frames.middleCols(c.start_frame, c.length());
    at += c.length();
  }
  return out;
}

// Viterbi over one chain of `dur` states per cluster; entering a cluster
// commits to at least `dur` frames, the final chain state self-loops with a
// log(alpha) bonus over switching.
std::vector<int> decode_min_duration(const Matrix& log_pdf /* C x T */,
                                     int dur, double log_alpha) {
  const int num_clusters = static_cast<int>(log_pdf.rows());
  const int total = static_cast<int>(log_pdf.cols());
  const int states = num_clusters * dur;
  Matrix score(states, 2);
  Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic> back(states, total);
  back.setConstant(-1);
  score.col(0).setConstant(kNegInf);
  for (int c = 0; c < num_clusters; ++c) {
    score(c * dur, 0) = log_pdf(c, 0);
    back(c * dur, 0) = -1;
  }
  for (int t = 1; t < total; ++t) {
    const int prev = (t - 1) % 2;
    const int cur = t % 2;
    // Best chain-exit state per cluster feeds the switches.
    double best_exit = kNegInf;
    int best_exit_state = -1;
    double second_exit = kNegInf;
    int second_exit_state = -1;
    for (int c = 0; c < num_clusters; ++c) {
      const int exit_state = c * dur + dur - 1;
      const double v = score(exit_state, prev);
      if (v > best_exit) {
        second_exit = best_exit;
        second_exit_state = best_exit_state;
        best_exit = v;
        best_exit_state = exit_state;
      } else if (v > second_exit) {
        second_exit = v;
        second_exit_state = exit_state;
      }
    }
    for (int c = 0; c < num_clusters; ++c) {
      const int head = c * dur;
      const int exit_state = head + dur - 1;
      // Chain interior: forced advance.
      for (int d = dur - 1; d >= 1; --d) {
        const int s = head + d;
        double v;
        int b;
        if (d == dur - 1 && dur > 1) {
          const double stay = score(exit_state, prev) + log_alpha;
          const double advance = score(s - 1, prev);
          if (stay >= advance) {
            v = stay;
            b = exit_state;
          } else {
            v = advance;
            b = s - 1;
          }
        } else {
          v = score(s - 1, prev);
          b = s - 1;
        }
        score(s, cur) = v + log_pdf(c, t);
        back(s, t) = b;
      }
      // Chain head: entered from another cluster's exit state.
      double enter = best_exit_state / dur == c ? second_exit : best_exit;
      int enter_state =
          best_exit_state / dur == c ? second_exit_state : best_exit_state;
      if (dur == 1) {
        // Single-state chains also self-loop with the bonus.
        const double stay = score(exit_state, prev) + log_alpha;
        if (stay >= enter) {
          enter = stay;
          enter_state = exit_state;
        }
      }
      score(head, cur) = enter + log_pdf(c, t);
      back(head, t) = enter_state;
    }
  }

  // Backtrack from the best final state.
  int state = 0;
  double best = kNegInf;
  const int last = (total - 1) % 2;
  for (int s = 0; s < states; ++s)
    if (score(s, last) > best) {
      best = score(s, last);
      state = s;
    }
  std::vector<int> labels(static_cast<size_t>(total));
  for (int t = total - 1; t >= 0; --t) {
    labels[static_cast<size_t>(t)] = state / dur;
    state = back(state, t);
  }
  return labels;
}

Clustering labels_to_clustering(const std::vector<int>& labels,
                                int recording_id, int num_clusters) {
  Clustering out;
  out.recording_id = recording_id;
  out.clusters.resize(static_cast<size_t>(num_clusters));
  int begin = 0;
  for (int t = 1; t <= static_cast<int>(labels.size()); ++t) {
    if (t == static_cast<int>(labels.size()) ||
        labels[static_cast<size_t>(t)] != labels[static_cast<size_t>(begin)]) {
      out.clusters[static_cast<size_t>(labels[static_cast<size_t>(begin)])]
          .push_back(Chunk{recording_id, begin, t});
      begin = t;
    }
  }
  return out;
}

}  // namespace

Clustering viterbi_refine(const Clustering& clustering,
                          const FeatureMatrix& features,
                          const DiarizationConfig& cfg) {
  const int num_clusters = clustering.num_clusters();
  if (num_clusters <= 1) return clustering;
  const int total = features.num_frames();
  Clustering current = clustering;
  for (int iter = 0; iter < cfg.refine_iterations; ++iter) {
    Matrix log_pdf(num_clusters, total);
    for (int c = 0; c < num_clusters; ++c) {
      const Matrix frames =
          cluster_frames(current.clusters[static_cast<size_t>(c)],
                         features.frames);
      const DiagGmm gmm =
          train_diag_gmm(frames, cfg.gmm_components, cfg.em_iterations);
      for (int t = 0; t < total; ++t)
        log_pdf(c, t) = gmm.log_pdf(features.frames.col(t));
    }
    const auto labels =
        decode_min_duration(log_pdf, std::max(1, cfg.min_duration_frames),
                            std::log(cfg.self_loop_alpha));
    Clustering refined =
        labels_to_clustering(labels, clustering.recording_id, num_clusters);
    const bool lost_cluster =
        std::any_of(refined.clusters.begin(), refined.clusters.end(),
                    [](const auto& c) { return c.empty(); });
    if (lost_cluster) break;  // keep the previous assignment
    current = std::move(refined);
  }
  return current;
}

Clustering diarize(const FeatureMatrix& features, int recording_id,
                   const DiarizationConfig& cfg) {
  const auto chunks = change_detect(features, recording_id, cfg.window_frames,
                                    cfg.lambda_change, cfg.min_chunk_frames);
  const Clustering clustering = bic_ahc(chunks, features, cfg.lambda_ahc);
  return viterbi_refine(clustering, features, cfg);
}

std::pair<double, double> purity_coverage(
    const Clustering& clustering, const std::vector<int>& ground_truth) {
  std::map<int, std::map<int, int>> overlap;  // cluster -> speaker -> frames
  std::map<int, int> speaker_total;
  for (size_t c = 0; c < clustering.clusters.size(); ++c)
    for (const auto& chunk : clustering.clusters[c])
      for (int t = chunk.start_frame; t < chunk.end_frame; ++t)
        overlap[static_cast<int>(c)][ground_truth[static_cast<size_t>(t)]]++;
  for (int label : ground_truth) speaker_total[label]++;

  double pure = 0.0, total = 0.0;
  for (const auto& [c, per_speaker] : overlap) {
    int best = 0, sum = 0;
    for (const auto& [spk, n] : per_speaker) {
      best = std::max(best, n);
      sum += n;
    }
    pure += best;
    total += sum;
  }
  const double purity = total > 0 ? pure / total : 1.0;

  double coverage_sum = 0.0;
  for (const auto& [spk, n_total] : speaker_total) {
    int best = 0;
    for (const auto& [c, per_speaker] : overlap) {
      const auto it = per_speaker.find(spk);
      if (it != per_speaker.end()) best = std::max(best, it->second);
    }
    coverage_sum += n_total > 0 ? static_cast<double>(best) / n_total : 0.0;
  }
  const double coverage =
      speaker_total.empty() ? 1.0 : coverage_sum / speaker_total.size();
  return {purity, coverage};
}

void write_rttm(std::ostream& out, const std::string& recording_name,
                const Clustering& clustering, double frame_shift_ms) {
  struct Row {
    double begin;
    double duration;
    int cluster;
  };
  std::vector<Row> rows;
  for (size_t c = 0; c < clustering.clusters.size(); ++c)
    for (const auto& chunk : clustering.clusters[c])
      rows.push_back(Row{chunk.start_frame * frame_shift_ms / 1000.0,
                         chunk.length() * frame_shift_ms / 1000.0,
                         static_cast<int>(c)});
  std::sort(rows.begin(), rows.end(),
            [](const Row& a, const Row& b) { return a.begin < b.begin; });
  char buf[160];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf),
                  "SPEAKER %s 1 %.2f %.2f <NA> <NA> c%d <NA> <NA>\n",
                  recording_name.c_str(), r.begin, r.duration, r.cluster);
    out << buf;
  }
}

}  // namespace weakspk
