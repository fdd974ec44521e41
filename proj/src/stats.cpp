#include "bxt/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "bxt/errors.hpp"

namespace bxt {

namespace {

// Mid-ranks of |d|, and the tie group sizes for the variance correction.
void signed_ranks(const std::vector<double>& diffs, std::vector<double>& ranks,
                  std::vector<std::size_t>& tie_sizes) {
    const std::size_t n = diffs.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return std::abs(diffs[a]) < std::abs(diffs[b]);
    });
    ranks.assign(n, 0.0);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && std::abs(diffs[order[j + 1]]) == std::abs(diffs[order[i]])) ++j;
        const double mid = 0.5 * static_cast<double>(i + 1 + j + 1);
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = mid;
        tie_sizes.push_back(j - i + 1);
        i = j + 1;
    }
}

double normal_sf(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

} // namespace

double wilcoxon_signed_rank_one_tailed(const std::vector<double>& diffs,
                                       TailDirection direction) {
    std::vector<double> nonzero;
    for (double d : diffs)
        if (d != 0.0) nonzero.push_back(d);
    const std::size_t n = nonzero.size();
    if (n == 0) throw Error("degenerate sample: all differences are zero");

    std::vector<double> ranks;
    std::vector<std::size_t> tie_sizes;
    signed_ranks(nonzero, ranks, tie_sizes);
    double w_plus = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        if (nonzero[i] > 0.0) w_plus += ranks[i];

    if (n <= 20) {
        // Exact tail by convolving the doubled (integer) ranks.
        std::vector<long long> r2(n);
        long long total = 0;
        for (std::size_t i = 0; i < n; ++i) {
            r2[i] = static_cast<long long>(std::llround(2.0 * ranks[i]));
            total += r2[i];
        }
        std::vector<double> counts(total + 1, 0.0);
        counts[0] = 1.0;
        for (std::size_t i = 0; i < n; ++i)
            for (long long s = total; s >= r2[i]; --s) counts[s] += counts[s - r2[i]];
        const long long obs2 = static_cast<long long>(std::llround(2.0 * w_plus));
        double tail = 0.0;
        if (direction == TailDirection::Greater) {
            for (long long s = obs2; s <= total; ++s) tail += counts[s];
        } else {
            for (long long s = 0; s <= obs2; ++s) tail += counts[s];
        }
        return tail / std::pow(2.0, static_cast<double>(n));
    }

    // Normal approximation with tie correction and continuity correction.
    const double dn = static_cast<double>(n);
    const double mu = dn * (dn + 1.0) / 4.0;
    double var = dn * (dn + 1.0) * (2.0 * dn + 1.0) / 24.0;
    for (std::size_t t : tie_sizes) {
        const double dt = static_cast<double>(t);
        var -= (dt * dt * dt - dt) / 48.0;
    }
    const double sd = std::sqrt(var);
    if (direction == TailDirection::Greater) return normal_sf((w_plus - 0.5 - mu) / sd);
    return 1.0 - normal_sf((w_plus + 0.5 - mu) / sd);
}

BhResult benjamini_hochberg(const std::vector<double>& pvals, double fdr) {
    if (!(fdr > 0.0 && fdr < 1.0)) throw Error("fdr must be in (0,1)");
    for (double p : pvals)
        if (!(p >= 0.0 && p <= 1.0)) throw Error("p-values must be in [0,1]");
    const std::size_t m = pvals.size();
    BhResult r;
    r.rejected.assign(m, false);
    if (m == 0) return r;

    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return pvals[a] < pvals[b]; });

    std::size_t k = 0; // largest rank passing the step-up test
    for (std::size_t i = 0; i < m; ++i) {
        const double bound = static_cast<double>(i + 1) * fdr / static_cast<double>(m);
        if (pvals[order[i]] <= bound) k = i + 1;
    }
    for (std::size_t i = 0; i < k; ++i) r.rejected[order[i]] = true;
    r.rejected_count = static_cast<int>(k);
    r.effective_threshold = k > 0 ? pvals[order[k - 1]] : 0.0;
    return r;
}

} // namespace bxt
