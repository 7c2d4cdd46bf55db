#pragma once

#include "segline/types.hpp"

#include <string>
#include <vector>

namespace segline {

/// Observed regression sequence: row i of x is the predictor vector of
/// observation i, y(i) its response. Immutable once constructed.
class Dataset {
public:
    /// Throws DataError on shape mismatch, empty input or non-finite entries.
    Dataset(Matrix x, Vector y);

    std::size_t n() const { return static_cast<std::size_t>(y_.size()); }
    std::size_t q() const { return static_cast<std::size_t>(x_.cols()); }
    const Matrix& x() const { return x_; }
    const Vector& y() const { return y_; }

    /// Rows of the 1-based inclusive range.
    auto x_rows(IndexRange r) const { return x_.middleRows(r.first - 1, r.size()); }
    auto y_rows(IndexRange r) const { return y_.segment(r.first - 1, r.size()); }

private:
    Matrix x_;
    Vector y_;
};

/// Partition of 1..n into p_n + 1 blocks: a leading block of length
/// n - p_n*m followed by p_n blocks of length m = floor(n / (p_n + 1)).
struct Segmentation {
    std::size_t n = 0;
    std::size_t p_n = 0;
    std::size_t m = 0;
    std::vector<IndexRange> blocks;

    std::size_t block_count() const { return blocks.size(); }
    /// 1-based block j.
    const IndexRange& block(std::size_t j) const { return blocks.at(j - 1); }
    /// Last index of block r, i.e. n - p_n*m + (r-1)*m. Boundary r separates
    /// block r from block r+1 (r = 1..p_n).
    std::size_t boundary(std::size_t r) const { return blocks.at(r - 1).last; }
    /// 1-based block containing observation i.
    std::size_t block_of(std::size_t i) const;
    /// Ratio of the first block length to m.
    double first_block_ratio() const {
        return static_cast<double>(blocks.front().size()) / static_cast<double>(m);
    }
};

/// Builds the unique segmentation for (n, p_n). Every block must be able to
/// carry an OLS fit with q predictors, so m >= q + 1 is required.
Segmentation make_segmentation(std::size_t n, std::size_t p_n, std::size_t q = 1);

/// Boundary index r such that block r + 1 contains the location a.
/// Requires 1 < a < n.
std::size_t true_boundary_index(const Segmentation& seg, std::size_t a);

struct ChangePointTruth {
    std::vector<std::size_t> locations;
    std::vector<Vector> deltas;

    std::size_t k0() const { return locations.size(); }
    /// Throws std::invalid_argument when the locations are not strictly
    /// increasing inside (1, n) or a jump is zero.
    void validate(std::size_t n, std::size_t q) const;
};

struct DetectionResult {
    std::string algorithm;
    std::size_t p_n = 0;
    std::size_t m = 0;
    std::size_t k_hat = 0;
    std::vector<std::size_t> locations;
    std::vector<std::size_t> boundary_hits;
    double rss = 0.0;
    double runtime_s = 0.0;
    std::vector<std::string> diagnostics;
};

} // namespace segline
