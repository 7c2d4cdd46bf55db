#include "segline/solver.hpp"

#include "segline/penalty.hpp"

#include <Eigen/Sparse>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>

namespace segline {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double soft_threshold(double v, double t) {
    if (v > t) {
        return v - t;
    }
    if (v < -t) {
        return v + t;
    }
    return 0.0;
}

double sign_of(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

Vector scales_of(const SegmentedDesign& design, const PenaltySpec& spec) {
    if (spec.coordinate_scales.size() == 0) {
        return Vector::Ones(static_cast<Eigen::Index>(design.dim()));
    }
    if (static_cast<std::size_t>(spec.coordinate_scales.size()) != design.dim()) {
        throw std::invalid_argument("coordinate_scales must have one entry per design column");
    }
    if ((spec.coordinate_scales.array() < 0.0).any()) {
        throw std::invalid_argument("coordinate_scales must be nonnegative");
    }
    return spec.coordinate_scales;
}

std::vector<double> weights_of(const SegmentedDesign& design, const PenaltySpec& spec) {
    if (spec.weights.empty()) {
        return std::vector<double>(design.groups(), 1.0);
    }
    if (spec.weights.size() != design.groups()) {
        throw std::invalid_argument("weighted-L1 needs one weight per group");
    }
    for (double w : spec.weights) {
        if (std::isnan(w) || w < 0.0) {
            throw std::invalid_argument("weights must be nonnegative");
        }
    }
    return spec.weights;
}

double multiplier_of(const SegmentedDesign& design, const PenaltySpec& spec) {
    return spec.penalty_multiplier > 0.0 ? spec.penalty_multiplier : static_cast<double>(design.n());
}

// Per-coordinate L1 coefficients ω_k of the weighted-L1 objective.
Vector l1_omega(const SegmentedDesign& design, const PenaltySpec& spec) {
    const Vector scales = scales_of(design, spec);
    const std::vector<double> weights = weights_of(design, spec);
    const std::size_t q = design.q();
    Vector omega(static_cast<Eigen::Index>(design.dim()));
    for (std::size_t g = 0; g < design.groups(); ++g) {
        for (std::size_t j = 0; j < q; ++j) {
            const auto k = static_cast<Eigen::Index>(g * q + j);
            if (std::isinf(weights[g])) {
                omega(k) = kInf;
            } else {
                omega(k) = spec.lambda * weights[g] * scales(k);
            }
        }
    }
    return omega;
}

// Minimizes ‖y − X̃θ‖² + Σ ω_k |θ_k| with ω_k ∈ [0, ∞].
class L1Core {
public:
    L1Core(const SegmentedDesign& design, const Vector& omega, const SolverOptions& options)
        : design_(design), omega_(omega), options_(options), q_(design.q()),
          groups_(design.groups()) {
        scale_ = std::max(1.0, 2.0 * design.xty().cwiseAbs().maxCoeff());
    }

    double objective(const Vector& theta) const {
        double pen = 0.0;
        for (Eigen::Index k = 0; k < theta.size(); ++k) {
            if (theta(k) != 0.0) {
                pen += omega_(k) * std::abs(theta(k));
            }
        }
        return design_.loss(theta) + pen;
    }

    double kkt(const Vector& theta) const {
        const Vector z = design_.residual_correlation(theta);
        double worst = 0.0;
        for (Eigen::Index k = 0; k < theta.size(); ++k) {
            if (std::isinf(omega_(k))) {
                continue;
            }
            const double g = 2.0 * z(k);
            const double v = theta(k) != 0.0 ? std::abs(g - omega_(k) * sign_of(theta(k)))
                                             : std::max(0.0, std::abs(g) - omega_(k));
            worst = std::max(worst, v);
        }
        return worst / scale_;
    }

    SolveReport run(Vector theta) const {
        for (Eigen::Index k = 0; k < theta.size(); ++k) {
            if (std::isinf(omega_(k))) {
                theta(k) = 0.0;
            }
        }
        SolveReport report;
        double obj = objective(theta);
        double residual = kkt(theta);
        int sweep = 0;
        while (residual > options_.tolerance && sweep < options_.max_sweeps) {
            ++sweep;
            sweep_once(theta);
            obj = objective(theta);
            if (sweep == 2 || sweep % options_.polish_every == 0) {
                // A blocked step drops a coordinate; re-solve on what is left.
                for (int k = 0; k < kMaxPolishRounds && polish(theta, obj); ++k) {
                }
            }
            if (options_.record_trace) {
                report.objective_trace.push_back(obj);
            }
            residual = kkt(theta);
        }
        report.converged = residual <= options_.tolerance;
        report.theta_hat = std::move(theta);
        report.kkt_residual = residual;
        report.iterations = sweep;
        report.objective = obj;
        return report;
    }

private:
    // One forward pass over groups 0..p_n. The running vector `s` holds the
    // current X̃_gᵀ(y − X̃θ) for the group being visited.
    void sweep_once(Vector& theta) const {
        const Vector z = design_.residual_correlation(theta);
        Vector s = z.segment(0, q_);
        Vector moved = Vector::Zero(q_);
        for (std::size_t g = 0; g < groups_; ++g) {
            if (g > 0) {
                Vector r_prev = z.segment((g - 1) * q_, q_);
                if (g < groups_) {
                    r_prev -= z.segment(g * q_, q_);
                }
                r_prev -= design_.block_gram(g - 1) * moved;
                s -= r_prev;
            }
            const Matrix& h = design_.suffix_gram(g);
            for (std::size_t j = 0; j < q_; ++j) {
                const auto k = static_cast<Eigen::Index>(g * q_ + j);
                const double hjj = h(j, j);
                if (std::isinf(omega_(k)) || !(hjj > 0.0)) {
                    continue;
                }
                const double old = theta(k);
                const double updated = soft_threshold(s(j) + hjj * old, 0.5 * omega_(k)) / hjj;
                const double step = updated - old;
                if (step != 0.0) {
                    s -= h.col(j) * step;
                    moved(j) += step;
                    theta(k) = updated;
                }
            }
        }
    }

    // Minimizer of the smooth objective over the active coordinates with
    // their signs held fixed. In the variables u = per-coordinate running sums
    // of θ over the active groups, each u is the coefficient on a run of
    // consecutive blocks, so the normal equations are sparse: two u interact
    // only where their block runs overlap. Cost is linear in the number of
    // blocks rather than cubic in the active-set size.
    std::optional<Vector> active_solution(const Vector& theta, const std::vector<Eigen::Index>& active) const {
        struct Run {
            std::size_t j, lo, hi; // blocks [lo, hi)
        };
        std::vector<Run> runs(active.size());
        std::vector<std::vector<Eigen::Index>> by_coord(q_);
        for (std::size_t a = 0; a < active.size(); ++a) {
            by_coord[static_cast<std::size_t>(active[a]) % q_].push_back(static_cast<Eigen::Index>(a));
        }
        for (std::size_t j = 0; j < q_; ++j) {
            const auto& list = by_coord[j];
            for (std::size_t i = 0; i < list.size(); ++i) {
                const auto a = static_cast<std::size_t>(list[i]);
                const std::size_t hi = i + 1 < list.size()
                                           ? static_cast<std::size_t>(active[static_cast<std::size_t>(list[i + 1])]) / q_
                                           : groups_;
                runs[a] = {j, static_cast<std::size_t>(active[a]) / q_, hi};
            }
        }
        const auto na = static_cast<Eigen::Index>(active.size());
        Vector rhs = Vector::Zero(na);
        Vector c(na);
        for (Eigen::Index a = 0; a < na; ++a) {
            const double sgn = omega_(active[a]) == 0.0 ? 0.0 : sign_of(theta(active[a]));
            c(a) = 0.5 * omega_(active[a]) * sgn;
        }
        std::vector<Eigen::Triplet<double>> entries;
        for (std::size_t j = 0; j < q_; ++j) {
            const auto& lj = by_coord[j];
            for (std::size_t i = 0; i < lj.size(); ++i) {
                const Run& r = runs[static_cast<std::size_t>(lj[i])];
                double v = 0.0;
                for (std::size_t b = r.lo; b < r.hi; ++b) {
                    v += design_.block_xty(b)(static_cast<Eigen::Index>(j));
                }
                // θ at run i is u_i − u_{i−1}, so its sign term moves to both.
                v -= c(lj[i]) - (i + 1 < lj.size() ? c(lj[i + 1]) : 0.0);
                rhs(lj[i]) = v;
            }
            for (std::size_t jj = j; jj < q_; ++jj) {
                const auto& lk = by_coord[jj];
                std::size_t x = 0;
                std::size_t y = 0;
                while (x < lj.size() && y < lk.size()) {
                    const Run& r1 = runs[static_cast<std::size_t>(lj[x])];
                    const Run& r2 = runs[static_cast<std::size_t>(lk[y])];
                    const std::size_t lo = std::max(r1.lo, r2.lo);
                    const std::size_t hi = std::min(r1.hi, r2.hi);
                    if (lo < hi && (jj != j || x <= y)) {
                        double v = 0.0;
                        for (std::size_t b = lo; b < hi; ++b) {
                            v += design_.block_gram(b)(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(jj));
                        }
                        entries.emplace_back(lj[x], lk[y], v);
                        if (lj[x] != lk[y]) {
                            entries.emplace_back(lk[y], lj[x], v);
                        }
                    }
                    (r1.hi <= r2.hi ? x : y) += 1;
                }
            }
        }
        Eigen::SparseMatrix<double> h(na, na);
        h.setFromTriplets(entries.begin(), entries.end());
        Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(h);
        if (ldlt.info() != Eigen::Success) {
            return std::nullopt;
        }
        const Vector u = ldlt.solve(rhs);
        if (!u.allFinite() || (h * u - rhs).norm() > 1e-8 * (1.0 + rhs.norm())) {
            return std::nullopt;
        }
        Vector sol(na);
        for (std::size_t j = 0; j < q_; ++j) {
            const auto& lj = by_coord[j];
            for (std::size_t i = 0; i < lj.size(); ++i) {
                sol(lj[i]) = u(lj[i]) - (i > 0 ? u(lj[i - 1]) : 0.0);
            }
        }
        return sol;
    }

    static constexpr int kMaxPolishRounds = 64;

    // Exact minimizer on the current sign pattern; steps only as far as the
    // first sign change so the objective cannot increase. Returns true when
    // such a blocked step was taken.
    bool polish(Vector& theta, double& obj) const {
        std::vector<Eigen::Index> active;
        for (Eigen::Index k = 0; k < theta.size(); ++k) {
            if (!std::isinf(omega_(k)) && (theta(k) != 0.0 || omega_(k) == 0.0)) {
                active.push_back(k);
            }
        }
        if (active.empty()) {
            return false;
        }
        const auto na = static_cast<Eigen::Index>(active.size());
        const std::optional<Vector> solved = active_solution(theta, active);
        if (!solved) {
            return false;
        }
        const Vector& sol = *solved;
        double t = 1.0;
        for (Eigen::Index a = 0; a < na; ++a) {
            const double cur = theta(active[a]);
            if (omega_(active[a]) > 0.0 && cur * sol(a) < 0.0) {
                t = std::min(t, cur / (cur - sol(a)));
            }
        }
        Vector candidate = theta;
        for (Eigen::Index a = 0; a < na; ++a) {
            const double cur = theta(active[a]);
            double v = cur + t * (sol(a) - cur);
            if (omega_(active[a]) > 0.0 && (cur * v <= 0.0 || (t < 1.0 && cur * sol(a) < 0.0 &&
                                                                 cur / (cur - sol(a)) <= t))) {
                v = 0.0;
            }
            candidate(active[a]) = v;
        }
        const double cand_obj = objective(candidate);
        if (cand_obj <= obj + 1e-12 * (1.0 + std::abs(obj))) {
            theta = std::move(candidate);
            obj = cand_obj;
            return t < 1.0;
        }
        return false;
    }

    const SegmentedDesign& design_;
    const Vector& omega_;
    const SolverOptions& options_;
    std::size_t q_;
    std::size_t groups_;
    double scale_ = 1.0;
};

void fill_active_groups(const SegmentedDesign& design, SolveReport& report) {
    report.active_groups.clear();
    const std::size_t q = design.q();
    for (std::size_t g = 0; g < design.groups(); ++g) {
        if (!report.theta_hat.segment(g * q, q).isZero(0.0)) {
            report.active_groups.push_back(g);
        }
    }
}

double concave_value(PenaltyKind kind, double t, double lambda, double gamma) {
    return kind == PenaltyKind::Scad ? scad_penalty(t, lambda, gamma) : mcp_penalty(t, lambda, gamma);
}

double concave_slope(PenaltyKind kind, double t, double lambda, double gamma) {
    return kind == PenaltyKind::Scad ? scad_derivative(t, lambda, gamma)
                                     : mcp_derivative(t, lambda, gamma);
}

bool group_penalized(const PenaltySpec& spec, std::size_t g) { return g > 0 || spec.penalize_beta; }

} // namespace

double penalized_objective(const SegmentedDesign& design, const PenaltySpec& spec,
                           const Vector& theta) {
    const std::size_t q = design.q();
    const Vector scales = scales_of(design, spec);
    double pen = 0.0;
    if (spec.kind == PenaltyKind::WeightedL1) {
        const Vector omega = l1_omega(design, spec);
        for (Eigen::Index k = 0; k < theta.size(); ++k) {
            if (theta(k) != 0.0) {
                pen += omega(k) * std::abs(theta(k));
            }
        }
    } else if (spec.lambda > 0.0) {
        const double mult = multiplier_of(design, spec);
        for (std::size_t g = 0; g < design.groups(); ++g) {
            if (!group_penalized(spec, g)) {
                continue;
            }
            const double t = (scales.segment(g * q, q).array() *
                              theta.segment(g * q, q).array().abs()).sum();
            pen += mult * concave_value(spec.kind, t, spec.lambda, spec.gamma);
        }
    }
    return design.loss(theta) + pen;
}

SolveReport solve_weighted_l1(const SegmentedDesign& design, const PenaltySpec& spec,
                              const SolverOptions& options, const std::optional<Vector>& warm_start) {
    if (spec.kind != PenaltyKind::WeightedL1) {
        throw std::invalid_argument("solve_weighted_l1 needs a weighted-L1 penalty");
    }
    if (!(spec.lambda >= 0.0)) {
        throw std::invalid_argument("lambda must be nonnegative");
    }
    const Vector omega = l1_omega(design, spec);
    const L1Core core(design, omega, options);
    Vector start = warm_start ? *warm_start : Vector::Zero(static_cast<Eigen::Index>(design.dim()));
    SolveReport report = core.run(std::move(start));
    fill_active_groups(design, report);
    if (!report.converged) {
        throw NumericalError("weighted-L1 solver did not converge after " +
                             std::to_string(report.iterations) +
                             " sweeps (KKT residual " + std::to_string(report.kkt_residual) + ")");
    }
    return report;
}

SolveReport solve_group_penalized(const SegmentedDesign& design, const PenaltySpec& spec,
                                  const SolverOptions& options) {
    if (spec.kind == PenaltyKind::WeightedL1) {
        throw std::invalid_argument("solve_group_penalized needs SCAD or MCP");
    }
    if (!(spec.lambda >= 0.0)) {
        throw std::invalid_argument("lambda must be nonnegative");
    }
    if (spec.lambda > 0.0) {
        // Validates gamma for the chosen family.
        concave_value(spec.kind, 0.0, spec.lambda, spec.gamma);
    }
    const std::size_t q = design.q();
    const Vector scales = scales_of(design, spec);
    const double mult = multiplier_of(design, spec);

    auto linearized = [&](const Vector& theta) {
        Vector omega = Vector::Zero(static_cast<Eigen::Index>(design.dim()));
        if (spec.lambda == 0.0) {
            return omega;
        }
        for (std::size_t g = 0; g < design.groups(); ++g) {
            if (!group_penalized(spec, g)) {
                continue;
            }
            const double t = (scales.segment(g * q, q).array() *
                              theta.segment(g * q, q).array().abs()).sum();
            const double slope = mult * concave_slope(spec.kind, t, spec.lambda, spec.gamma);
            omega.segment(g * q, q) = slope * scales.segment(g * q, q);
        }
        return omega;
    };

    Vector theta = Vector::Zero(static_cast<Eigen::Index>(design.dim()));
    int total_sweeps = 0;
    std::vector<double> trace;
    bool fixed_point = false;
    for (int outer = 0; outer < options.max_outer; ++outer) {
        const Vector omega = linearized(theta);
        const L1Core core(design, omega, options);
        SolveReport step = core.run(theta);
        total_sweeps += step.iterations;
        trace.insert(trace.end(), step.objective_trace.begin(), step.objective_trace.end());
        if (!step.converged) {
            throw NumericalError("inner weighted-L1 solve failed at outer iteration " +
                                 std::to_string(outer) + " (KKT residual " +
                                 std::to_string(step.kkt_residual) + ")");
        }
        const double change = (step.theta_hat - theta).cwiseAbs().maxCoeff();
        theta = std::move(step.theta_hat);
        if (change <= 1e-12 * (1.0 + theta.cwiseAbs().maxCoeff())) {
            fixed_point = true;
            break;
        }
    }

    const Vector omega = linearized(theta);
    const L1Core check(design, omega, options);
    SolveReport report;
    report.kkt_residual = check.kkt(theta);
    report.theta_hat = std::move(theta);
    report.iterations = total_sweeps;
    report.objective = penalized_objective(design, spec, report.theta_hat);
    report.objective_trace = std::move(trace);
    report.converged = report.kkt_residual <= options.tolerance;
    fill_active_groups(design, report);
    if (!report.converged) {
        throw NumericalError(std::string("concave-penalty solver ") +
                             (fixed_point ? "reached a non-stationary fixed point"
                                          : "hit the outer iteration cap") +
                             " (KKT residual " + std::to_string(report.kkt_residual) + ")");
    }
    return report;
}

std::vector<double> adaptive_weights(const std::vector<Vector>& initial, double nu) {
    if (!(nu > 0.0)) {
        throw std::invalid_argument("nu must be positive");
    }
    std::vector<double> out;
    out.reserve(initial.size());
    for (const Vector& d : initial) {
        const double norm1 = d.cwiseAbs().sum();
        if (norm1 == 0.0) {
            out.push_back(kInf);
        } else if (std::isinf(norm1)) {
            out.push_back(0.0);
        } else {
            out.push_back(1.0 / std::pow(norm1, nu));
        }
    }
    return out;
}

double lambda_max(const SegmentedDesign& design, const PenaltySpec& spec) {
    const std::size_t q = design.q();
    const Vector scales = scales_of(design, spec);
    const std::vector<double> weights = weights_of(design, spec);
    auto kill_level = [&](const Vector& theta) {
        const Vector z = design.residual_correlation(theta);
        double best = 0.0;
        for (std::size_t g = 1; g < design.groups(); ++g) {
            if (std::isinf(weights[g]) || weights[g] == 0.0) {
                continue;
            }
            for (std::size_t j = 0; j < q; ++j) {
                const auto k = static_cast<Eigen::Index>(g * q + j);
                if (scales(k) > 0.0) {
                    best = std::max(best, 2.0 * std::abs(z(k)) / (weights[g] * scales(k)));
                }
            }
        }
        return best;
    };

    Vector theta = Vector::Zero(static_cast<Eigen::Index>(design.dim()));
    Eigen::CompleteOrthogonalDecomposition<Matrix> cod(design.suffix_gram(0));
    theta.segment(0, q) = cod.solve(design.xty().segment(0, q));
    // The margin keeps rounding in the sweeps from leaving a coefficient a
    // few ulps above its threshold at the top of a grid.
    constexpr double kMargin = 1.0 + 1e-6;
    double lambda = kill_level(theta);
    if (weights[0] == 0.0 || !(lambda > 0.0)) {
        return lambda * kMargin;
    }
    // A penalized β shrinks as λ grows, which feeds back into the jump
    // correlations; iterate to the fixed point with β refitted alone.
    PenaltySpec beta_only = spec;
    beta_only.kind = PenaltyKind::WeightedL1;
    beta_only.weights = weights;
    std::fill(beta_only.weights.begin() + 1, beta_only.weights.end(), kInf);
    const SolverOptions options;
    for (int it = 0; it < 50; ++it) {
        beta_only.lambda = lambda;
        const Vector omega = l1_omega(design, beta_only);
        const L1Core core(design, omega, options);
        const SolveReport fit = core.run(theta);
        theta = fit.theta_hat;
        const double next = kill_level(theta);
        if (next <= lambda * (1.0 + 1e-10)) {
            break;
        }
        lambda = next;
    }
    return lambda * kMargin;
}

std::vector<double> lambda_grid(double lambda_max, std::size_t count, double ratio) {
    if (count == 0) {
        throw std::invalid_argument("lambda grid needs at least one point");
    }
    if (!(lambda_max > 0.0) || !(ratio > 0.0 && ratio <= 1.0)) {
        throw std::invalid_argument("lambda grid needs lambda_max > 0 and ratio in (0, 1]");
    }
    std::vector<double> grid(count);
    if (count == 1) {
        grid[0] = lambda_max;
        return grid;
    }
    const double lo = std::log(ratio * lambda_max);
    const double hi = std::log(lambda_max);
    for (std::size_t i = 0; i < count; ++i) {
        grid[i] = std::exp(hi - (hi - lo) * static_cast<double>(i) / static_cast<double>(count - 1));
    }
    return grid;
}

BicSelection select_lambda_bic(const SegmentedDesign& design, const PenaltySpec& base,
                               const std::vector<double>& grid, const SolverOptions& options) {
    if (grid.empty()) {
        throw std::invalid_argument("lambda grid is empty");
    }
    const double n = static_cast<double>(design.n());
    const double floor = 1e-14 * (1.0 + design.data().y().squaredNorm());
    BicSelection sel;
    sel.lambdas = grid;
    sel.bic.assign(grid.size(), std::numeric_limits<double>::quiet_NaN());
    std::optional<Vector> warm;
    double best = kInf;
    bool any = false;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        if (!(grid[i] > 0.0)) {
            throw std::invalid_argument("lambda grid values must be positive");
        }
        PenaltySpec spec = base;
        spec.kind = PenaltyKind::WeightedL1;
        spec.lambda = grid[i];
        SolveReport rep;
        try {
            rep = solve_weighted_l1(design, spec, options, warm);
        } catch (const NumericalError& e) {
            spdlog::warn("skipping lambda={:.6g}: {}", grid[i], e.what());
            continue;
        }
        warm = rep.theta_hat;
        const double rss = std::max(design.loss(rep.theta_hat), floor);
        const auto k = static_cast<double>((rep.theta_hat.array() != 0.0).count());
        const double bic = n * std::log(rss / n) + k * std::log(n);
        sel.bic[i] = bic;
        if (bic < best) {
            best = bic;
            sel.lambda = grid[i];
            sel.report = std::move(rep);
            any = true;
        }
    }
    if (!any) {
        throw NumericalError("every lambda on the grid failed to converge");
    }
    return sel;
}

} // namespace segline
