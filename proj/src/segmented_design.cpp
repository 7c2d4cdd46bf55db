#include "segline/segmented_design.hpp"

namespace segline {

SegmentedDesign::SegmentedDesign(const Dataset& data, const Segmentation& seg)
    : data_(&data), seg_(seg), q_(data.q()), groups_(seg.block_count()) {
    if (seg.n != data.n()) {
        throw std::invalid_argument("segmentation does not match the dataset length");
    }
    grams_.resize(groups_);
    xty_.resize(groups_);
    block_ols_.resize(groups_);
    block_rss_.resize(groups_);
    for (std::size_t b = 0; b < groups_; ++b) {
        const SegmentFit fit = segment_ols(data, seg.blocks[b]);
        grams_[b] = fit.gram;
        xty_[b] = data.x_rows(seg.blocks[b]).transpose() * data.y_rows(seg.blocks[b]);
        block_ols_[b] = fit.beta_hat;
        block_rss_[b] = fit.rss;
    }
    suffix_.resize(groups_);
    u_.resize(static_cast<Eigen::Index>(dim()));
    Matrix h = Matrix::Zero(q_, q_);
    Vector c = Vector::Zero(q_);
    for (std::size_t g = groups_; g-- > 0;) {
        h += grams_[g];
        c += xty_[g];
        suffix_[g] = h;
        u_.segment(g * q_, q_) = c;
    }
}

Vector SegmentedDesign::column_sq_norms() const {
    Vector out(static_cast<Eigen::Index>(dim()));
    for (std::size_t g = 0; g < groups_; ++g) {
        out.segment(g * q_, q_) = suffix_[g].diagonal();
    }
    return out;
}

Matrix SegmentedDesign::block_coefficients(const Vector& theta) const {
    Matrix coef(q_, groups_);
    Vector acc = Vector::Zero(q_);
    for (std::size_t b = 0; b < groups_; ++b) {
        acc += theta.segment(b * q_, q_);
        coef.col(b) = acc;
    }
    return coef;
}

double SegmentedDesign::loss(const Vector& theta) const {
    const Matrix coef = block_coefficients(theta);
    double total = 0.0;
    for (std::size_t b = 0; b < groups_; ++b) {
        const Vector diff = coef.col(b) - block_ols_[b];
        total += block_rss_[b] + diff.dot(grams_[b] * diff);
    }
    return total;
}

Vector SegmentedDesign::residual_correlation(const Vector& theta) const {
    const Matrix coef = block_coefficients(theta);
    Vector z(static_cast<Eigen::Index>(dim()));
    Vector acc = Vector::Zero(q_);
    for (std::size_t g = groups_; g-- > 0;) {
        acc += grams_[g] * (block_ols_[g] - coef.col(g));
        z.segment(g * q_, q_) = acc;
    }
    return z;
}

Vector SegmentedDesign::apply(const Vector& theta) const {
    const Matrix coef = block_coefficients(theta);
    Vector out(static_cast<Eigen::Index>(n()));
    for (std::size_t b = 0; b < groups_; ++b) {
        const IndexRange r = seg_.blocks[b];
        out.segment(r.first - 1, r.size()) = data_->x_rows(r) * coef.col(b);
    }
    return out;
}

Vector SegmentedDesign::apply_transpose(const Vector& r) const {
    Vector out(static_cast<Eigen::Index>(dim()));
    Vector acc = Vector::Zero(q_);
    for (std::size_t g = groups_; g-- > 0;) {
        const IndexRange rows = seg_.blocks[g];
        acc += data_->x_rows(rows).transpose() * r.segment(rows.first - 1, rows.size());
        out.segment(g * q_, q_) = acc;
    }
    return out;
}

Matrix SegmentedDesign::dense() const {
    Matrix out = Matrix::Zero(static_cast<Eigen::Index>(n()), static_cast<Eigen::Index>(dim()));
    for (std::size_t b = 0; b < groups_; ++b) {
        const IndexRange rows = seg_.blocks[b];
        for (std::size_t g = 0; g <= b; ++g) {
            out.block(rows.first - 1, g * q_, rows.size(), q_) = data_->x_rows(rows);
        }
    }
    return out;
}

} // namespace segline
