#include "segline/data_model.hpp"

#include <algorithm>
#include <stdexcept>

namespace segline {

Dataset::Dataset(Matrix x, Vector y) : x_(std::move(x)), y_(std::move(y)) {
    if (y_.size() == 0) {
        throw DataError("no observations");
    }
    if (x_.cols() == 0) {
        throw DataError("dataset needs at least one predictor column");
    }
    if (x_.rows() != y_.size()) {
        throw DataError("predictor rows (" + std::to_string(x_.rows()) +
                        ") do not match responses (" + std::to_string(y_.size()) + ")");
    }
    if (!x_.allFinite() || !y_.allFinite()) {
        throw DataError("dataset contains non-finite values");
    }
}

std::size_t Segmentation::block_of(std::size_t i) const {
    if (i < 1 || i > n) {
        throw std::out_of_range("observation index outside 1..n");
    }
    const std::size_t first_len = blocks.front().size();
    if (i <= first_len) {
        return 1;
    }
    return 2 + (i - first_len - 1) / m;
}

Segmentation make_segmentation(std::size_t n, std::size_t p_n, std::size_t q) {
    if (p_n < 1) {
        throw std::invalid_argument("p_n must be at least 1");
    }
    const std::size_t m = n / (p_n + 1);
    if (m < q + 1) {
        throw DataError("segmentation infeasible: n=" + std::to_string(n) +
                        ", p_n=" + std::to_string(p_n) + " gives m=" + std::to_string(m) +
                        " < q+1=" + std::to_string(q + 1));
    }
    Segmentation seg;
    seg.n = n;
    seg.p_n = p_n;
    seg.m = m;
    seg.blocks.reserve(p_n + 1);
    const std::size_t first_len = n - p_n * m;
    seg.blocks.push_back({1, first_len});
    for (std::size_t j = 2; j <= p_n + 1; ++j) {
        seg.blocks.push_back({n - (p_n - j + 2) * m + 1, n - (p_n - j + 1) * m});
    }
    return seg;
}

std::size_t true_boundary_index(const Segmentation& seg, std::size_t a) {
    if (a <= 1 || a >= seg.n) {
        throw std::out_of_range("change location must lie strictly inside (1, n)");
    }
    return seg.block_of(a) - 1;
}

void ChangePointTruth::validate(std::size_t n, std::size_t q) const {
    if (locations.size() != deltas.size()) {
        throw std::invalid_argument("one jump vector per change location is required");
    }
    for (std::size_t k = 0; k < locations.size(); ++k) {
        if (locations[k] <= 1 || locations[k] >= n) {
            throw std::invalid_argument("change location outside (1, n)");
        }
        if (k > 0 && locations[k] <= locations[k - 1]) {
            throw std::invalid_argument("change locations must be strictly increasing");
        }
        if (static_cast<std::size_t>(deltas[k].size()) != q) {
            throw std::invalid_argument("jump vector has wrong dimension");
        }
        if (deltas[k].isZero(0.0)) {
            throw std::invalid_argument("jump vectors must be nonzero");
        }
    }
}

} // namespace segline
