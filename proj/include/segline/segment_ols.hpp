#pragma once

#include "segline/data_model.hpp"

#include <vector>

namespace segline {

struct SegmentFit {
    Vector beta_hat;
    Matrix gram;       // X_blockᵀ X_block
    double rss = 0.0;
    long dof = 0;      // block length - q
    std::size_t rank = 0;
    bool rank_deficient = false;
};

/// OLS on one block through a complete orthogonal decomposition of the block
/// design. Rank-deficient blocks get the minimum-norm solution and the flag.
SegmentFit segment_ols(const Dataset& data, IndexRange block);

/// Per-boundary coefficient jumps d̂_r = β̂(block r+1) - β̂(block r).
struct DeltaEstimates {
    std::vector<SegmentFit> fits;   // one per block
    std::vector<Vector> d_hat;      // d_hat[r-1] = d̂_r, r = 1..p_n
    double sigma2_hat = 0.0;

    std::size_t p_n() const { return d_hat.size(); }
    const Vector& d(std::size_t r) const { return d_hat.at(r - 1); }
    /// Gram matrix of 1-based block j.
    const Matrix& gram(std::size_t j) const { return fits.at(j - 1).gram; }
    /// A jump touching a rank-deficient block cannot be tested.
    bool unresolvable(std::size_t r) const {
        return fits.at(r - 1).rank_deficient || fits.at(r).rank_deficient;
    }
};

/// Block fits are independent, so they run as an OpenMP parallel loop.
DeltaEstimates estimate_deltas(const Dataset& data, const Segmentation& seg);
/// Serial reference for estimate_deltas; results are bit-identical.
DeltaEstimates estimate_deltas_serial(const Dataset& data, const Segmentation& seg);

/// Residual variance of the first-block OLS fit, divisor (first length - q).
double noise_variance(const Dataset& data, const Segmentation& seg);

/// Upper-alpha quantile of the chi-square distribution with df degrees of freedom.
double chi2_quantile(double alpha, int df);

/// How the Step-2 style quadratic forms are scaled.
enum class StatNormalization {
    Verbatim, // dᵀ G d / (2 q σ²)
    Wald,     // dᵀ G d / (2 σ²)
};

struct ChiSquareOutcome {
    double statistic = 0.0;
    double threshold = 0.0;
    bool significant = false;
};

/// Tests d = 0 against χ²_{α,q}.
ChiSquareOutcome delta_test_single(const Vector& d, const Matrix& gram, double sigma2, double alpha,
                                   StatNormalization norm = StatNormalization::Verbatim);
/// Tests d_{i+1} + d_{i+2} = 0 against χ²_{α,2q}.
ChiSquareOutcome delta_test_pair(const Vector& d_sum, const Matrix& gram, double sigma2, double alpha,
                                 StatNormalization norm = StatNormalization::Verbatim);

/// Residual sum of squares of separate OLS fits on the regimes delimited by
/// sorted change locations; a change at a starts a new regime at a + 1.
double piecewise_rss(const Dataset& data, const std::vector<std::size_t>& locations);

} // namespace segline
