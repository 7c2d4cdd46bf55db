#pragma once

#include "segline/segment_ols.hpp"

#include <vector>

namespace segline {

/// The n × (p_n+1)q cumulative design: group g (0-based) carries the
/// predictors of blocks g+1..p_n+1 and zeros above. Coefficient group 0 is
/// the base coefficient β, group r the jump d_r.
///
/// Only per-block sufficient statistics are stored; products with the design
/// telescope into prefix/suffix sums over blocks, O(n q) per product and
/// O(p_n q²) per gradient. Keeps a reference to the dataset, which must
/// outlive the design.
class SegmentedDesign {
public:
    SegmentedDesign(const Dataset& data, const Segmentation& seg);

    std::size_t n() const { return data_->n(); }
    std::size_t q() const { return q_; }
    std::size_t groups() const { return groups_; }
    std::size_t dim() const { return groups_ * q_; }
    const Dataset& data() const { return *data_; }
    const Segmentation& segmentation() const { return seg_; }

    /// 0-based block statistics: G_b = X_bᵀX_b and X_bᵀy_b.
    const Matrix& block_gram(std::size_t b) const { return grams_[b]; }
    const Vector& block_xty(std::size_t b) const { return xty_[b]; }
    /// H_g = Σ_{b ≥ g} G_b; the (g, g') block of X̃ᵀX̃ is H_{max(g,g')}.
    const Matrix& suffix_gram(std::size_t g) const { return suffix_[g]; }
    /// X̃ᵀy.
    const Vector& xty() const { return u_; }
    /// Squared Euclidean norms of the design columns.
    Vector column_sq_norms() const;

    /// Block coefficient vectors B_b = Σ_{g ≤ b} θ_g as columns of a q × (p_n+1) matrix.
    Matrix block_coefficients(const Vector& theta) const;
    /// ‖y − X̃θ‖² from block statistics (no cancellation against ‖y‖²).
    double loss(const Vector& theta) const;
    /// X̃ᵀ(y − X̃θ).
    Vector residual_correlation(const Vector& theta) const;

    /// X̃θ and X̃ᵀr evaluated on the data rows.
    Vector apply(const Vector& theta) const;
    Vector apply_transpose(const Vector& r) const;
    /// Dense X̃, intended for tests on small n.
    Matrix dense() const;

private:
    const Dataset* data_;
    Segmentation seg_;
    std::size_t q_;
    std::size_t groups_;
    std::vector<Matrix> grams_;
    std::vector<Vector> xty_;
    std::vector<Vector> block_ols_;
    std::vector<double> block_rss_;
    std::vector<Matrix> suffix_;
    Vector u_;
};

} // namespace segline
