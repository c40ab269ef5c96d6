#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "weakspk/types.hpp"

namespace weakspk {

struct DiarizationConfig {
  double lambda_change = 1.0;  // BIC penalty weight, change detection
  double lambda_ahc = 2.5;     // BIC penalty weight, clustering
  int window_frames = 150;     // sliding window on each side of a candidate
  int min_chunk_frames = 100;  // 1.0 s at 10 ms hop
  int gmm_components = 8;      // per-cluster diagonal GMM for refinement
  int em_iterations = 10;
  int refine_iterations = 2;
  int min_duration_frames = 50;  // Viterbi state-chain length
  double self_loop_alpha = 20.0; // staying bonus is log(alpha)
};

// Full-covariance Gaussian sufficient statistics for BIC scoring.  The
// covariance is regularized with eps*I, eps = 1e-6 * trace / F.
struct SegmentGaussian {
  Vector mean;
  Matrix covariance;
  double count = 0;

  double log_det() const;  // of the regularized covariance
};

// ΔBIC between modeling two frame sets jointly vs separately:
//   (n_a+n_b)/2 ln|Σ_ab| - n_a/2 ln|Σ_a| - n_b/2 ln|Σ_b| - λP,
//   P = 1/2 (F + F(F+1)/2) ln(n_a+n_b).
// Positive favors a split, negative favors the merge.
double delta_bic(const SegmentGaussian& a, const SegmentGaussian& b,
                 const SegmentGaussian& joint, double lambda);

// Prefix sums of x and x x^T for O(F^2) interval Gaussians.
class CumulativeStats {
 public:
  explicit CumulativeStats(const Matrix& frames);  // F x T
  SegmentGaussian interval(int begin, int end) const;
  int num_frames() const { return num_frames_; }

 private:
  int dim_ = 0;
  int num_frames_ = 0;
  Matrix sum_;     // F x (T+1)
  Matrix sum_sq_;  // F*F x (T+1)
};

// Speaker change detection: boundaries at positive local maxima of ΔBIC
// between adjacent sliding windows.  Emitted chunks are at least
// min_chunk_frames long and tile [0, T).
std::vector<Chunk> change_detect(const FeatureMatrix& features,
                                 int recording_id, int window_frames,
                                 double lambda, int min_chunk_frames);

// BIC agglomerative clustering: repeatedly merge the pair with the smallest
// ΔBIC while it is negative.  Cluster indices are contiguous from 0, ordered
// by earliest chunk start.
Clustering bic_ahc(const std::vector<Chunk>& chunks,
                   const FeatureMatrix& features, double lambda);

// Viterbi boundary refinement: per-cluster diagonal GMMs trained by EM, then
// frames re-decoded over a fully connected HMM with a min-duration state
// chain per cluster.  The cluster count never changes.
Clustering viterbi_refine(const Clustering& clustering,
                          const FeatureMatrix& features,
                          const DiarizationConfig& cfg);

// change_detect + bic_ahc + viterbi_refine with the config defaults.
Clustering diarize(const FeatureMatrix& features, int recording_id,
                   const DiarizationConfig& cfg);

// purity: sum_c max_spk |c ∩ spk| / sum_c |c|
// coverage: mean over speakers of the largest single-cluster fraction of
// that speaker's frames.
std::pair<double, double> purity_coverage(const Clustering& clustering,
                                          const std::vector<int>& ground_truth);

// One RTTM line per chunk:
// SPEAKER <rec> 1 <tbeg> <tdur> <NA> <NA> <cluster_label> <NA> <NA>
void write_rttm(std::ostream& out, const std::string& recording_name,
                const Clustering& clustering, double frame_shift_ms);

// Diagonal-covariance GMM trained by EM; used for boundary refinement.
struct DiagGmm {
  Vector log_weights;
  Matrix means;      // F x G
  Matrix variances;  // F x G

  double log_pdf(const Vector& x) const;
};

// Deterministic EM: components initialized from evenly spaced frames.
// Falls back to a single Gaussian when frames < 2 * components.
DiagGmm train_diag_gmm(const Matrix& frames, int components, int iterations);

}  // namespace weakspk
