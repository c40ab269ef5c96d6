#pragma once

#include <filesystem>
#include <map>
#include <vector>

#include "weakspk/io.hpp"
#include "weakspk/net.hpp"
#include "weakspk/types.hpp"

namespace weakspk {

struct ScoredTrial {
  int enroll_id = 0;
  int test_id = 0;
  double score = 0;
  bool is_target = false;
};

struct ScoreSet {
  std::vector<ScoredTrial> scores;

  void validate() const;  // needs at least one target and one non-target
};

// Cosine scoring of unit embeddings (a plain dot product).  Utterances are
// instance-normalized and embedded once each.
ScoreSet score_trials(const EmbeddingNet& net, const TrialList& trials,
                      const std::map<int, const FeatureMatrix*>& utterances,
                      int max_frames = 2000, int threads = 1);

// Equal error rate: thresholds sweep all distinct scores, miss and
// false-alarm rates are empirical, and the crossing is linearly
// interpolated between adjacent operating points.  Scorers worse than
// chance are reported as the 0.5 ceiling.
double eer(const ScoreSet& scores);

// Minimum normalized detection cost:
//   min over thresholds of (c_miss p_tar P_miss + c_fa (1-p_tar) P_fa)
//   divided by min(c_miss p_tar, c_fa (1-p_tar)).
double min_dcf(const ScoreSet& scores, double p_tar = 0.05,
               double c_miss = 1.0, double c_fa = 1.0);

// CSV export: header enroll,test,score,is_target.
void write_scores_csv(const std::filesystem::path& path,
                      const ScoreSet& scores);

}  // namespace weakspk
