#include "segline/segment_ols.hpp"

#include <boost/math/distributions/chi_squared.hpp>

#include <cmath>
#include <stdexcept>

namespace segline {

SegmentFit segment_ols(const Dataset& data, IndexRange block) {
    if (block.size() == 0) {
        throw DataError("empty block");
    }
    if (block.first < 1 || block.last > data.n()) {
        throw std::out_of_range("block outside 1..n");
    }
    const auto xb = data.x_rows(block);
    const auto yb = data.y_rows(block);
    const std::size_t q = data.q();

    SegmentFit fit;
    Eigen::CompleteOrthogonalDecomposition<Matrix> cod(xb);
    fit.beta_hat = cod.solve(yb);
    fit.rank = static_cast<std::size_t>(cod.rank());
    fit.rank_deficient = fit.rank < q;
    fit.gram = xb.transpose() * xb;
    fit.rss = (yb - xb * fit.beta_hat).squaredNorm();
    fit.dof = static_cast<long>(block.size()) - static_cast<long>(q);
    return fit;
}

namespace {

void finish_deltas(DeltaEstimates& est, const Dataset& data, const Segmentation& seg) {
    const std::size_t p_n = seg.p_n;
    est.d_hat.resize(p_n);
    for (std::size_t r = 1; r <= p_n; ++r) {
        est.d_hat[r - 1] = est.fits[r].beta_hat - est.fits[r - 1].beta_hat;
    }
    const auto& first = est.fits.front();
    const long dof = static_cast<long>(seg.blocks.front().size()) - static_cast<long>(data.q());
    if (dof <= 0) {
        throw DataError("first block too short to estimate the noise variance");
    }
    est.sigma2_hat = first.rss / static_cast<double>(dof);
}

} // namespace

DeltaEstimates estimate_deltas_serial(const Dataset& data, const Segmentation& seg) {
    DeltaEstimates est;
    est.fits.resize(seg.block_count());
    for (std::size_t j = 0; j < seg.block_count(); ++j) {
        est.fits[j] = segment_ols(data, seg.blocks[j]);
    }
    finish_deltas(est, data, seg);
    return est;
}

DeltaEstimates estimate_deltas(const Dataset& data, const Segmentation& seg) {
    DeltaEstimates est;
    const auto blocks = static_cast<long>(seg.block_count());
    est.fits.resize(seg.block_count());
    // Exceptions may not cross the parallel region boundary.
    bool failed = false;
#pragma omp parallel for schedule(static) reduction(|| : failed)
    for (long j = 0; j < blocks; ++j) {
        try {
            est.fits[static_cast<std::size_t>(j)] =
                segment_ols(data, seg.blocks[static_cast<std::size_t>(j)]);
        } catch (...) {
            failed = true;
        }
    }
    if (failed) {
        return estimate_deltas_serial(data, seg);
    }
    finish_deltas(est, data, seg);
    return est;
}

double noise_variance(const Dataset& data, const Segmentation& seg) {
    const IndexRange first = seg.blocks.front();
    if (first.size() <= data.q()) {
        throw DataError("first block too short to estimate the noise variance");
    }
    const SegmentFit fit = segment_ols(data, first);
    return fit.rss / static_cast<double>(first.size() - data.q());
}

double chi2_quantile(double alpha, int df) {
    if (!(alpha > 0.0 && alpha < 1.0)) {
        throw std::invalid_argument("alpha must lie in (0, 1)");
    }
    if (df < 1) {
        throw std::invalid_argument("chi-square degrees of freedom must be >= 1");
    }
    const boost::math::chi_squared dist(static_cast<double>(df));
    return boost::math::quantile(boost::math::complement(dist, alpha));
}

namespace {

ChiSquareOutcome quadratic_test(const Vector& d, const Matrix& gram, double sigma2, double alpha,
                                int df, StatNormalization norm) {
    if (!(sigma2 > 0.0)) {
        throw std::invalid_argument("noise variance must be positive");
    }
    const double q = static_cast<double>(d.size());
    const double divisor = norm == StatNormalization::Verbatim ? 2.0 * q * sigma2 : 2.0 * sigma2;
    ChiSquareOutcome out;
    out.statistic = d.dot(gram * d) / divisor;
    out.threshold = chi2_quantile(alpha, df);
    out.significant = out.statistic >= out.threshold;
    return out;
}

} // namespace

ChiSquareOutcome delta_test_single(const Vector& d, const Matrix& gram, double sigma2, double alpha,
                                   StatNormalization norm) {
    return quadratic_test(d, gram, sigma2, alpha, static_cast<int>(d.size()), norm);
}

ChiSquareOutcome delta_test_pair(const Vector& d_sum, const Matrix& gram, double sigma2,
                                 double alpha, StatNormalization norm) {
    return quadratic_test(d_sum, gram, sigma2, alpha, 2 * static_cast<int>(d_sum.size()), norm);
}

double piecewise_rss(const Dataset& data, const std::vector<std::size_t>& locations) {
    double rss = 0.0;
    std::size_t start = 1;
    for (std::size_t a : locations) {
        if (a < start || a >= data.n()) {
            throw std::invalid_argument("change locations must be sorted and inside (1, n)");
        }
        rss += segment_ols(data, {start, a}).rss;
        start = a + 1;
    }
    rss += segment_ols(data, {start, data.n()}).rss;
    return rss;
}

} // namespace segline
