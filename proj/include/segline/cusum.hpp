#pragma once

#include "segline/data_model.hpp"

#include <vector>

namespace segline {

/// Observations n_l..n_{l+1} (1-based, inclusive) of a single-change model.
struct CusumWindow {
    IndexRange range;

    std::size_t size() const { return range.size(); }
};

struct CusumOutcome {
    double statistic = 0.0;      // T_l
    std::size_t k_hat = 0;       // maximizing split; the left segment ends at k_hat
    double threshold = 0.0;      // multiplier · σ̂²_l
    bool reject = false;
    double sigma2_window = 0.0;  // full-window RSS / N_l
    std::size_t skipped = 0;     // splits dropped for a singular partial Gram
};

/// T_l = max_k S_kᵀ C_k⁻¹ C (C⁰_k)⁻¹ S_k over k in [n_l + q, n_{l+1} − q].
/// Partial-Gram inverses follow rank-one updates and are refactorized every
/// 64 steps. Only statistic, k_hat and skipped are filled in.
CusumOutcome cusum_statistic(const Dataset& data, const CusumWindow& w);

/// b̃ + 2ã·log(−2/log(1−α)) for a window of N observations; requires N > 16.
double cusum_threshold(std::size_t N, std::size_t q, double alpha);

/// Single-change test: reject when T_l exceeds cusum_threshold · σ̂²_l, with
/// σ̂²_l floored at 1e-20 of the window's mean squared response.
CusumOutcome cusum_test(const Dataset& data, const CusumWindow& w, double alpha);

/// split_rss[i] = RSS(first..first+i) + RSS(first+i+1..last) for every split
/// leaving at least q + 1 observations on each side; entries outside that
/// range are +inf.
std::vector<double> split_rss_profile(const Dataset& data, IndexRange window);

/// Index ℓ minimizing the summed OLS RSS of window.first..ℓ and ℓ+1..window.last,
/// smallest ℓ on ties.
std::size_t refine_changepoint(const Dataset& data, IndexRange window);

} // namespace segline
