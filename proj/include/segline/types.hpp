#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <stdexcept>
#include <string>

namespace segline {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Inclusive range of 1-based observation indices.
struct IndexRange {
    std::size_t first = 1;
    std::size_t last = 0;

    std::size_t size() const { return last >= first ? last - first + 1 : 0; }
    bool contains(std::size_t i) const { return i >= first && i <= last; }
    bool operator==(const IndexRange&) const = default;
};

/// Bad or infeasible input data (malformed files, infeasible segmentations,
/// windows too short for the requested statistic).
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A numerical routine failed to reach its tolerance.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace segline
