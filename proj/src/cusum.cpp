#include "segline/cusum.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace segline {

namespace {

constexpr int kRefactorEvery = 64;

// Inverse of a symmetric matrix when it is numerically positive definite.
bool spd_inverse(const Matrix& a, Matrix& out) {
    Eigen::LLT<Matrix> llt(a);
    if (llt.info() != Eigen::Success) {
        return false;
    }
    const double diag_min = llt.matrixL().toDenseMatrix().diagonal().minCoeff();
    const double diag_max = llt.matrixL().toDenseMatrix().diagonal().maxCoeff();
    if (!(diag_min > 1e-7 * diag_max)) {
        return false;
    }
    out = llt.solve(Matrix::Identity(a.rows(), a.cols()));
    return true;
}

// Running OLS over a growing run of rows, visited in either direction.
// rss_at[t] is the RSS after t+1 rows.
std::vector<double> running_rss(const Matrix& x, const Vector& y, bool forward) {
    const Eigen::Index len = y.size();
    const Eigen::Index q = x.cols();
    std::vector<double> rss_at(static_cast<std::size_t>(len), 0.0);
    auto row = [&](Eigen::Index t) { return forward ? t : len - 1 - t; };

    Vector beta = Vector::Zero(q);
    Matrix p;
    double rss = 0.0;
    bool recursive = false;
    int since_reset = 0;
    for (Eigen::Index t = 0; t < len; ++t) {
        const Eigen::Index i = row(t);
        if (recursive && since_reset < kRefactorEvery) {
            const Vector xi = x.row(i).transpose();
            const Vector px = p * xi;
            const double den = 1.0 + xi.dot(px);
            const double e = y(i) - xi.dot(beta);
            beta += px * (e / den);
            p -= px * px.transpose() / den;
            rss += e * e / den;
            ++since_reset;
        } else {
            const Eigen::Index lo = forward ? 0 : i;
            const Eigen::Index cnt = t + 1;
            const auto xs = x.middleRows(lo, cnt);
            const auto ys = y.segment(lo, cnt);
            Eigen::CompleteOrthogonalDecomposition<Matrix> cod(xs);
            beta = cod.solve(ys);
            rss = (ys - xs * beta).squaredNorm();
            recursive = cod.rank() == q && spd_inverse(xs.transpose() * xs, p);
            since_reset = 0;
        }
        rss_at[static_cast<std::size_t>(t)] = std::max(rss, 0.0);
    }
    return rss_at;
}

} // namespace

CusumOutcome cusum_statistic(const Dataset& data, const CusumWindow& w) {
    const std::size_t q = data.q();
    const std::size_t N = w.size();
    if (w.range.first < 1 || w.range.last > data.n()) {
        throw std::out_of_range("CUSUM window outside 1..n");
    }
    if (N < 2 * q + 2) {
        throw DataError("CUSUM window of " + std::to_string(N) + " observations is too short for q = " +
                        std::to_string(q));
    }
    const auto x = data.x_rows(w.range);
    const auto y = data.y_rows(w.range);
    const Matrix c = x.transpose() * x;
    Eigen::CompleteOrthogonalDecomposition<Matrix> cod(x);
    const Vector resid = y - x * cod.solve(y);

    CusumOutcome out;
    Matrix ck = Matrix::Zero(q, q);
    Vector sk = Vector::Zero(q);
    Matrix pk;  // C_k⁻¹
    Matrix qk;  // (C⁰_k)⁻¹
    bool have_inverses = false;
    int since_reset = 0;
    double best = -1.0;
    // Offsets t within the window; split k = first + t.
    const auto t_lo = static_cast<Eigen::Index>(q);
    const auto t_hi = static_cast<Eigen::Index>(N - q - 1);
    for (Eigen::Index t = 0; t <= t_hi; ++t) {
        const Vector xi = x.row(t).transpose();
        ck.noalias() += xi * xi.transpose();
        sk += xi * resid(t);
        if (t < t_lo) {
            continue;
        }
        bool refresh = !have_inverses || since_reset >= kRefactorEvery;
        if (!refresh) {
            const Vector px = pk * xi;
            const Vector qx = qk * xi;
            const double up = 1.0 + xi.dot(px);
            const double down = 1.0 - xi.dot(qx);
            if (down > 1e-8 && up > 0.0) {
                pk -= px * px.transpose() / up;
                qk += qx * qx.transpose() / down;
                ++since_reset;
            } else {
                refresh = true;
            }
        }
        if (refresh) {
            have_inverses = spd_inverse(ck, pk) && spd_inverse(c - ck, qk);
            since_reset = 0;
        }
        if (!have_inverses) {
            ++out.skipped;
            continue;
        }
        const double tk = std::max(0.0, sk.dot(pk * sk) + sk.dot(qk * sk));
        if (tk > best) {
            best = tk;
            out.k_hat = w.range.first + static_cast<std::size_t>(t);
        }
    }
    if (best < 0.0) {
        throw NumericalError("every CUSUM split in " + std::to_string(w.range.first) + ".." +
                             std::to_string(w.range.last) + " has a singular partial Gram");
    }
    out.statistic = best;
    out.sigma2_window = resid.squaredNorm() / static_cast<double>(N);
    return out;
}

double cusum_threshold(std::size_t N, std::size_t q, double alpha) {
    if (N <= 16) {
        throw std::invalid_argument("CUSUM threshold needs N > 16");
    }
    if (!(alpha > 0.0 && alpha < 1.0)) {
        throw std::invalid_argument("alpha must lie in (0, 1)");
    }
    if (q < 1) {
        throw std::invalid_argument("q must be at least 1");
    }
    const double ll = std::log(std::log(static_cast<double>(N)));
    const double lll = std::log(ll);
    const double a = std::sqrt(2.0 * ll);
    const double b = 2.0 * ll + 0.5 * static_cast<double>(q) * lll - std::lgamma(0.5 * static_cast<double>(q));
    const double b_tilde = (b / a) * (b / a);
    const double a_tilde = b / (a * a);
    return b_tilde + 2.0 * a_tilde * std::log(-2.0 / std::log1p(-alpha));
}

CusumOutcome cusum_test(const Dataset& data, const CusumWindow& w, double alpha) {
    const double mult = cusum_threshold(w.size(), data.q(), alpha);
    CusumOutcome out = cusum_statistic(data, w);
    // Exact fits leave rounding-level T and σ̂²; the floor keeps their ratio
    // from deciding the test.
    const double scale = data.y_rows(w.range).squaredNorm() / static_cast<double>(w.size());
    out.threshold = mult * std::max(out.sigma2_window, 1e-20 * std::max(scale, 1e-300));
    out.reject = out.statistic > out.threshold;
    return out;
}

std::vector<double> split_rss_profile(const Dataset& data, IndexRange window) {
    const std::size_t q = data.q();
    const std::size_t N = window.size();
    if (window.first < 1 || window.last > data.n()) {
        throw std::out_of_range("refinement window outside 1..n");
    }
    if (N < 2 * (q + 1)) {
        throw DataError("refinement window of " + std::to_string(N) +
                        " observations is too short for q = " + std::to_string(q));
    }
    const Matrix x = data.x_rows(window);
    const Vector y = data.y_rows(window);
    const std::vector<double> left = running_rss(x, y, true);
    const std::vector<double> right = running_rss(x, y, false);
    std::vector<double> profile(N, std::numeric_limits<double>::infinity());
    // Split after offset i: left has i+1 rows, right has N−i−1 rows.
    for (std::size_t i = q; i + q + 1 < N; ++i) {
        profile[i] = left[i] + right[N - i - 2];
    }
    return profile;
}

std::size_t refine_changepoint(const Dataset& data, IndexRange window) {
    const std::vector<double> profile = split_rss_profile(data, window);
    const double best = *std::min_element(profile.begin(), profile.end());
    const double tol = 1e-10 * (1.0 + data.y_rows(window).squaredNorm());
    for (std::size_t i = 0; i < profile.size(); ++i) {
        if (profile[i] <= best + tol) {
            return window.first + i;
        }
    }
    return window.first + data.q();
}

} // namespace segline
