#include "weakspk/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "weakspk/features.hpp"
#include "weakspk/threading.hpp"

namespace weakspk {

void ScoreSet::validate() const {
  bool target = false, nontarget = false;
  for (const auto& s : scores) (s.is_target ? target : nontarget) = true;
  if (!target || !nontarget)
    throw ConfigError("score set needs both target and non-target trials");
}

ScoreSet score_trials(const EmbeddingNet& net, const TrialList& trials,
                      const std::map<int, const FeatureMatrix*>& utterances,
                      int max_frames, int threads) {
  // Embed each referenced utterance once.
  std::vector<int> ids;
  for (const auto& t : trials.trials) {
    ids.push_back(t.enroll_id);
    ids.push_back(t.test_id);
  }
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  for (const auto& t : trials.trials) {
    if (!utterances.count(t.enroll_id) || !utterances.count(t.test_id))
      throw MissingArtifactError(
          "trial references missing utterance: enroll " +
          std::to_string(t.enroll_id) + " test " + std::to_string(t.test_id));
  }

  std::vector<Vector> embeddings(ids.size());
  parallel_for(static_cast<int>(ids.size()), threads, [&](int i) {
    const FeatureMatrix* f = utterances.at(ids[static_cast<size_t>(i)]);
    Matrix segment = f->frames;
    if (segment.cols() > max_frames) {
      const int offset = (static_cast<int>(segment.cols()) - max_frames) / 2;
      segment = segment.middleCols(offset, max_frames).eval();
    }
    instance_normalize_inplace(segment);
    embeddings[static_cast<size_t>(i)] = forward_embed(net, segment);
  });
  std::map<int, const Vector*> by_id;
  for (size_t i = 0; i < ids.size(); ++i) by_id[ids[i]] = &embeddings[i];

  ScoreSet out;
  out.scores.reserve(trials.trials.size());
  for (const auto& t : trials.trials) {
    const double score = by_id.at(t.enroll_id)->dot(*by_id.at(t.test_id));
    out.scores.push_back(ScoredTrial{t.enroll_id, t.test_id, score,
                                     t.is_target});
  }
  return out;
}

namespace {

// Operating points for "accept iff score >= threshold", thresholds swept
// ascending over all distinct scores plus a reject-all sentinel.  P_miss is
// non-decreasing and P_fa non-increasing along the sweep.
struct OperatingPoint {
  double p_miss;
  double p_fa;
};

std::vector<OperatingPoint> roc_sweep(const ScoreSet& scores) {
  std::vector<double> targets, nontargets;
  for (const auto& s : scores.scores)
    (s.is_target ? targets : nontargets).push_back(s.score);
  std::sort(targets.begin(), targets.end());
  std::sort(nontargets.begin(), nontargets.end());
  std::vector<double> thresholds;
  for (const auto& s : scores.scores) thresholds.push_back(s.score);
  std::sort(thresholds.begin(), thresholds.end());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()),
                   thresholds.end());

  const double nt = static_cast<double>(targets.size());
  const double nn = static_cast<double>(nontargets.size());
  std::vector<OperatingPoint> points;
  points.push_back(OperatingPoint{0.0, 1.0});  // accept everything
  for (double th : thresholds) {
    const auto miss = std::lower_bound(targets.begin(), targets.end(), th) -
                      targets.begin();  // targets strictly below threshold
    const auto accept =
        nontargets.end() -
        std::lower_bound(nontargets.begin(), nontargets.end(), th);
    points.push_back(OperatingPoint{static_cast<double>(miss) / nt,
                                    static_cast<double>(accept) / nn});
  }
  points.push_back(OperatingPoint{1.0, 0.0});  // reject everything
  return points;
}

}  // namespace

double eer(const ScoreSet& scores) {
  scores.validate();
  const auto points = roc_sweep(scores);
  double value = 0.5;
  for (size_t i = 1; i < points.size(); ++i) {
    const double d_prev = points[i - 1].p_miss - points[i - 1].p_fa;
    const double d_cur = points[i].p_miss - points[i].p_fa;
    if (d_cur < 0) continue;  // crossing not reached yet
    if (d_cur == 0.0) {
      value = points[i].p_miss;
      break;
    }
    // d_prev < 0 <= d_cur: interpolate linearly between the two points.
    const double t = -d_prev / (d_cur - d_prev);
    value = points[i - 1].p_miss +
            t * (points[i].p_miss - points[i - 1].p_miss);
    break;
  }
  return std::min(value, 0.5);
}

double min_dcf(const ScoreSet& scores, double p_tar, double c_miss,
               double c_fa) {
  scores.validate();
  const auto points = roc_sweep(scores);
  double best = std::numeric_limits<double>::infinity();
  for (const auto& p : points) {
    const double cost =
        c_miss * p_tar * p.p_miss + c_fa * (1.0 - p_tar) * p.p_fa;
    best = std::min(best, cost);
  }
  return best / std::min(c_miss * p_tar, c_fa * (1.0 - p_tar));
}

void write_scores_csv(const std::filesystem::path& path,
                      const ScoreSet& scores) {
  std::ostringstream os;
  os << "enroll,test,score,is_target\n";
  for (const auto& s : scores.scores)
    os << s.enroll_id << ',' << s.test_id << ',' << format_double(s.score)
       << ',' << (s.is_target ? 1 : 0) << '\n';
  write_text_file(path, os.str());
}

}  // namespace weakspk
