#ifndef BXT_STATS_HPP
#define BXT_STATS_HPP

#include <vector>

#include "bxt/volume.hpp"

namespace bxt {

enum class TailDirection { Greater, Less };

/// One-tailed paired Wilcoxon signed-rank test. Zero differences are
/// dropped, tied magnitudes get mid-ranks. Exact tail probability via the
/// rank-sum distribution for n <= 20; normal approximation with tie and
/// continuity corrections above. Errors when every difference is zero.
double wilcoxon_signed_rank_one_tailed(const std::vector<double>& diffs, TailDirection direction);

struct BhResult {
    std::vector<bool> rejected;      // aligned with the input order
    double effective_threshold = 0.0; // p(k) of the largest rejected rank, 0 if none
    int rejected_count = 0;
};

/// Benjamini-Hochberg step-up procedure at false discovery rate q.
BhResult benjamini_hochberg(const std::vector<double>& pvals, double fdr);

} // namespace bxt

#endif
