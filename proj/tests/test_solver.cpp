#include "doctest.h"

#include "oracles.hpp"
#include "segline/penalty.hpp"
#include "segline/solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

using namespace segline;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// No change: y = x·(1, 1.4, 0.7, ...) + N(0, 1) noise.
Dataset noise_data(std::mt19937_64& rng, Eigen::Index n, Eigen::Index q) {
    Matrix x = oracle::random_matrix(rng, n, q);
    x.col(0).setOnes();
    Vector beta(q);
    for (Eigen::Index j = 0; j < q; ++j) {
        beta(j) = j == 0 ? 1.0 : (j % 2 == 1 ? 1.4 : 0.7);
    }
    return Dataset(x, x * beta + oracle::random_vector(rng, n));
}

// Data with one change of size `jump` in every coordinate starting after a.
Dataset change_data(std::mt19937_64& rng, Eigen::Index n, Eigen::Index q, std::size_t a, double jump,
                    double noise) {
    Matrix x = oracle::random_matrix(rng, n, q);
    x.col(0).setOnes();
    Vector y = noise * oracle::random_vector(rng, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double level = static_cast<std::size_t>(i) + 1 > a ? 1.0 + jump : 1.0;
        y(i) += x.row(i).sum() * level;
    }
    return Dataset(x, y);
}

double dense_objective(const Matrix& xd, const Vector& y, const Vector& theta, double lambda,
                       const std::vector<double>& w, std::size_t q) {
    double pen = 0.0;
    for (Eigen::Index k = 0; k < theta.size(); ++k) {
        pen += w[static_cast<std::size_t>(k) / q] * std::abs(theta(k));
    }
    return (y - xd * theta).squaredNorm() + lambda * pen;
}

} // namespace

TEST_CASE("weighted L1 with zero lambda is least squares") {
    std::mt19937_64 rng(21);
    for (int rep = 0; rep < 5; ++rep) {
        const Dataset data = noise_data(rng, 240, 1 + rep % 3);
        const Segmentation seg = make_segmentation(240, 5, data.q());
        const SegmentedDesign design(data, seg);
        PenaltySpec spec;
        spec.lambda = 0.0;
        const SolveReport rep0 = solve_weighted_l1(design, spec);
        const Vector ols = oracle::normal_equations(design.dense(), data.y());
        CHECK((rep0.theta_hat - ols).cwiseAbs().maxCoeff() <= 1e-8 * (1.0 + ols.cwiseAbs().maxCoeff()));
        CHECK(rep0.kkt_residual <= 1e-6);
        CHECK(rep0.converged);
    }
}

TEST_CASE("weighted L1 above lambda max zeroes every jump group") {
    std::mt19937_64 rng(22);
    const Dataset data = noise_data(rng, 300, 3);
    const SegmentedDesign design(data, make_segmentation(300, 8, 3));
    PenaltySpec spec;
    spec.weights.assign(design.groups(), 1.0);
    spec.weights[0] = 1.0 / 3.0;
    const double lmax = lambda_max(design, spec);
    REQUIRE(lmax > 0.0);
    spec.lambda = lmax * 1.001;
    const SolveReport above = solve_weighted_l1(design, spec);
    CHECK(above.theta_hat.tail(static_cast<Eigen::Index>(design.dim() - 3)).isZero(0.0));
    // With β penalized the bound is conservative, so step well below it.
    spec.lambda = lmax * 0.5;
    const SolveReport below = solve_weighted_l1(design, spec);
    CHECK_FALSE(below.theta_hat.tail(static_cast<Eigen::Index>(design.dim() - 3)).isZero(0.0));
}

TEST_CASE("soft-threshold closed form on a single unit column") {
    // Group 0 is pinned by an infinite weight, leaving one unit-norm column
    // with X̃ᵀy = 1; the minimizer of ‖y − xθ‖² + |θ| is 1 − 1/2.
    const double h = 1.0 / std::sqrt(2.0);
    Matrix x(4, 1);
    x << 1, 1, h, h;
    Vector y(4);
    y << 0, 0, h, h;
    const Dataset data(x, y);
    const SegmentedDesign design(data, make_segmentation(4, 1, 1));
    PenaltySpec spec;
    spec.lambda = 1.0;
    spec.weights = {kInf, 1.0};
    const SolveReport rep = solve_weighted_l1(design, spec);
    CHECK(rep.theta_hat(0) == 0.0);
    CHECK(rep.theta_hat(1) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("degenerate weights") {
    std::mt19937_64 rng(23);
    const Dataset data = change_data(rng, 200, 2, 100, 1.0, 0.5);
    const SegmentedDesign design(data, make_segmentation(200, 4, 2));
    PenaltySpec spec;
    spec.weights = {0.0, kInf, 0.0, 1.0, 1.0};
    spec.lambda = 1e6;
    const SolveReport rep = solve_weighted_l1(design, spec);
    CHECK(rep.theta_hat.segment(2, 2).isZero(0.0));
    CHECK(rep.theta_hat.segment(6, 4).isZero(0.0));
    // Unpenalized groups 0 and 2 are the least-squares fit on those columns.
    const Matrix xd = design.dense();
    Matrix sub(xd.rows(), 4);
    sub << xd.leftCols(2), xd.middleCols(4, 2);
    const Vector ols = oracle::normal_equations(sub, data.y());
    CHECK((rep.theta_hat.head(2) - ols.head(2)).norm() < 1e-8);
    CHECK((rep.theta_hat.segment(4, 2) - ols.tail(2)).norm() < 1e-8);

    const std::vector<double> w = adaptive_weights(
        {Vector::Zero(2), Vector::Constant(2, kInf), (Vector(2) << 0.5, -1.5).finished()}, 1.0);
    CHECK(std::isinf(w[0]));
    CHECK(w[1] == 0.0);
    CHECK(w[2] == doctest::Approx(0.5));
    CHECK(adaptive_weights({(Vector(1) << 4.0).finished()}, 2.0)[0] == doctest::Approx(1.0 / 16.0));
}

TEST_CASE("weighted L1 matches exhaustive grid search on small instances") {
    std::mt19937_64 rng(24);
    std::uniform_real_distribution<double> wdist(0.5, 2.0);
    for (std::size_t p = 1; p <= 3; ++p) {
        const auto n = static_cast<Eigen::Index>(8 * (p + 1));
        const Dataset data = change_data(rng, n, 1, static_cast<std::size_t>(n / 2), 0.8, 0.4);
        const Segmentation seg = make_segmentation(static_cast<std::size_t>(n), p, 1);
        const SegmentedDesign design(data, seg);
        const Matrix xd = oracle::cumulative_design(data.x(), p);
        PenaltySpec spec;
        spec.weights.assign(p + 1, 1.0);
        for (std::size_t g = 1; g <= p; ++g) {
            spec.weights[g] = wdist(rng);
        }
        const double lmax = lambda_max(design, spec);
        for (double frac : {0.1, 0.4, 0.8}) {
            spec.lambda = frac * lmax;
            const SolveReport rep = solve_weighted_l1(design, spec);
            CHECK(rep.kkt_residual <= 1e-6);
            auto f = [&](const Vector& t) { return dense_objective(xd, data.y(), t, spec.lambda, spec.weights, 1); };
            const Vector ref = oracle::nested_grid_search(
                f, Vector::Zero(static_cast<Eigen::Index>(p + 1)), 4.0,
                {0.25, 0.125, 0.0625, 0.03125, 0.016, 0.008, 0.004, 0.002, 0.001});
            CHECK((rep.theta_hat - ref).cwiseAbs().maxCoeff() <= 5e-3);
            CHECK(rep.objective <= f(ref) + 1e-9);
        }
    }
}

TEST_CASE("coordinate descent decreases the objective every sweep") {
    std::mt19937_64 rng(25);
    const Dataset data = change_data(rng, 1000, 3, 430, 0.6, 1.0);
    const SegmentedDesign design(data, make_segmentation(1000, 19, 3));
    PenaltySpec spec;
    spec.weights.assign(design.groups(), 1.0);
    spec.weights[0] = 1.0 / 3.0;
    spec.lambda = 0.05 * lambda_max(design, spec);
    SolverOptions opt;
    opt.record_trace = true;
    const SolveReport rep = solve_weighted_l1(design, spec, opt);
    REQUIRE(rep.objective_trace.size() >= 2);
    for (std::size_t i = 1; i < rep.objective_trace.size(); ++i) {
        CHECK(rep.objective_trace[i] <= rep.objective_trace[i - 1] * (1.0 + 1e-12));
    }
    CHECK(rep.kkt_residual <= 1e-6);
    CHECK(rep.objective == doctest::Approx(penalized_objective(design, spec, rep.theta_hat)).epsilon(1e-12));
}

TEST_CASE("solver respects a column permutation within groups") {
    std::mt19937_64 rng(26);
    const Dataset data = change_data(rng, 400, 3, 180, 0.7, 0.8);
    Matrix xp(data.n(), 3);
    xp << data.x().col(2), data.x().col(0), data.x().col(1);
    const Dataset permuted(xp, data.y());
    const Segmentation seg = make_segmentation(400, 7, 3);
    const SegmentedDesign d1(data, seg);
    const SegmentedDesign d2(permuted, seg);
    PenaltySpec spec;
    spec.weights.assign(d1.groups(), 1.0);
    spec.weights[0] = 1.0 / 3.0;
    spec.weights[3] = 0.4;
    spec.lambda = 0.1 * lambda_max(d1, spec);
    const SolveReport r1 = solve_weighted_l1(d1, spec);
    const SolveReport r2 = solve_weighted_l1(d2, spec);
    for (std::size_t g = 0; g < d1.groups(); ++g) {
        const auto o = static_cast<Eigen::Index>(3 * g);
        CHECK(std::abs(r2.theta_hat(o) - r1.theta_hat(o + 2)) < 1e-6);
        CHECK(std::abs(r2.theta_hat(o + 1) - r1.theta_hat(o)) < 1e-6);
        CHECK(std::abs(r2.theta_hat(o + 2) - r1.theta_hat(o + 1)) < 1e-6);
    }
}

TEST_CASE("lambda grid") {
    const std::vector<double> g = lambda_grid(10.0, 5, 1e-4);
    REQUIRE(g.size() == 5);
    CHECK(g.front() == doctest::Approx(10.0));
    CHECK(g.back() == doctest::Approx(1e-3));
    CHECK(g[1] / g[0] == doctest::Approx(g[4] / g[3]));
    CHECK(lambda_grid(3.0, 1).at(0) == 3.0);
    CHECK_THROWS_AS(lambda_grid(0.0, 5), std::invalid_argument);
}

TEST_CASE("BIC selection") {
    SUBCASE("single grid point") {
        std::mt19937_64 rng(27);
        const Dataset data = noise_data(rng, 120, 2);
        const SegmentedDesign design(data, make_segmentation(120, 3, 2));
        const BicSelection sel = select_lambda_bic(design, PenaltySpec{}, {0.7});
        CHECK(sel.lambda == 0.7);
        REQUIRE(sel.bic.size() == 1);
        CHECK(std::isfinite(sel.bic[0]));
    }
    SUBCASE("pure noise mostly selects no jump") {
        int empty = 0;
        const int reps = 200;
        for (int rep = 0; rep < reps; ++rep) {
            std::mt19937_64 rng(3000 + static_cast<std::uint64_t>(rep));
            const Dataset data = noise_data(rng, 300, 2);
            const SegmentedDesign design(data, make_segmentation(300, 5, 2));
            PenaltySpec spec;
            spec.weights.assign(design.groups(), 1.0);
            // An unpenalized β keeps shrinkage bias from being absorbed by a jump.
            spec.weights[0] = 0.0;
            const BicSelection sel = select_lambda_bic(design, spec, lambda_grid(lambda_max(design, spec), 30));
            empty += sel.report.theta_hat.tail(10).isZero(0.0);
        }
        CHECK(empty >= 180);
    }
    SUBCASE("a strong change enters the selected model") {
        int found = 0;
        const int reps = 100;
        for (int rep = 0; rep < reps; ++rep) {
            std::mt19937_64 rng(4000 + static_cast<std::uint64_t>(rep));
            const Segmentation seg = make_segmentation(300, 5, 2);
            const Dataset data = change_data(rng, 300, 2, seg.boundary(3), 1.0, 1.0);
            const SegmentedDesign design(data, seg);
            PenaltySpec spec;
            spec.weights.assign(design.groups(), 1.0);
            spec.weights[0] = 0.5;
            const BicSelection sel = select_lambda_bic(design, spec, lambda_grid(lambda_max(design, spec), 30));
            const auto& act = sel.report.active_groups;
            found += std::find(act.begin(), act.end(), std::size_t{3}) != act.end();
        }
        CHECK(found >= 95);
    }
}

TEST_CASE("concave penalties") {
    std::mt19937_64 rng(28);
    SUBCASE("zero lambda is least squares") {
        const Dataset data = noise_data(rng, 150, 2);
        const SegmentedDesign design(data, make_segmentation(150, 4, 2));
        PenaltySpec spec;
        spec.kind = PenaltyKind::Scad;
        spec.lambda = 0.0;
        const SolveReport rep = solve_group_penalized(design, spec);
        const Vector ols = oracle::normal_equations(design.dense(), data.y());
        CHECK((rep.theta_hat - ols).cwiseAbs().maxCoeff() <= 1e-8 * (1.0 + ols.cwiseAbs().maxCoeff()));
    }
    SUBCASE("noiseless single change selects exactly the true group") {
        const Segmentation seg = make_segmentation(300, 5, 2);
        const Dataset data = change_data(rng, 300, 2, seg.boundary(2), 0.8, 0.0);
        const SegmentedDesign design(data, seg);
        for (PenaltyKind kind : {PenaltyKind::Scad, PenaltyKind::Mcp}) {
            PenaltySpec spec;
            spec.kind = kind;
            spec.lambda = 0.01;
            spec.gamma = kind == PenaltyKind::Scad ? 3.7 : 2.4;
            const SolveReport rep = solve_group_penalized(design, spec);
            CHECK(rep.kkt_residual <= 1e-6);
            const std::vector<std::size_t> expected{0, 2};
            CHECK(rep.active_groups == expected);
        }
        // Brute-force check that group 2 is the best single jump group.
        const Matrix xd = design.dense();
        double best = kInf;
        std::size_t best_g = 0;
        for (std::size_t g = 1; g <= seg.p_n; ++g) {
            Matrix sub(xd.rows(), 4);
            sub << xd.leftCols(2), xd.middleCols(static_cast<Eigen::Index>(2 * g), 2);
            const double r = oracle::rss(sub, data.y());
            if (r < best) {
                best = r;
                best_g = g;
            }
        }
        CHECK(best_g == 2);
    }
    SUBCASE("reported objective is the penalized loss") {
        const Segmentation seg = make_segmentation(500, 9, 3);
        const Dataset data = change_data(rng, 500, 3, 260, 0.5, 1.0);
        const SegmentedDesign design(data, seg);
        PenaltySpec spec;
        spec.kind = PenaltyKind::Scad;
        spec.lambda = std::sqrt(2.0 * std::log(9.0) / 500.0);
        const SolveReport rep = solve_group_penalized(design, spec);
        double pen = 0.0;
        for (std::size_t g = 0; g < design.groups(); ++g) {
            pen += scad_penalty(rep.theta_hat.segment(static_cast<Eigen::Index>(3 * g), 3).cwiseAbs().sum(),
                                spec.lambda, spec.gamma);
        }
        const double expected = (data.y() - design.dense() * rep.theta_hat).squaredNorm() + 500.0 * pen;
        CHECK(rep.objective == doctest::Approx(expected).epsilon(1e-8));
    }
    SUBCASE("family validation") {
        const Dataset data = noise_data(rng, 60, 1);
        const SegmentedDesign design(data, make_segmentation(60, 2, 1));
        PenaltySpec spec;
        spec.kind = PenaltyKind::Scad;
        spec.lambda = 0.1;
        spec.gamma = 1.5;
        CHECK_THROWS_AS(solve_group_penalized(design, spec), std::invalid_argument);
        spec.kind = PenaltyKind::WeightedL1;
        CHECK_THROWS_AS(solve_group_penalized(design, spec), std::invalid_argument);
    }
}

TEST_CASE("non-convergence is reported") {
    std::mt19937_64 rng(29);
    const Dataset data = change_data(rng, 400, 3, 150, 0.5, 1.0);
    const SegmentedDesign design(data, make_segmentation(400, 7, 3));
    PenaltySpec spec;
    spec.lambda = 1.0;
    SolverOptions opt;
    opt.max_sweeps = 1;
    opt.tolerance = 1e-15;
    CHECK_THROWS_AS(solve_weighted_l1(design, spec, opt), NumericalError);
}

TEST_CASE("short, nearly collinear trending design converges within the default budget") {
    // Two slowly trending predictors with little independent variation: plain
    // coordinate descent crawls here and only the active-set solves finish it.
    std::mt19937_64 rng(30);
    std::normal_distribution<double> z;
    const Eigen::Index n = 39;
    Matrix x(n, 3);
    Vector y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double l = 4.0 + 0.01 * static_cast<double>(i) + 0.05 * z(rng);
        const double c = 4.0 + 0.02 * static_cast<double>(i) + 0.05 * z(rng);
        x.row(i) << 1.0, l, c;
        y(i) = 0.5 + 0.6 * l + 0.4 * c + (i > 13 && i < 18 ? 0.1 : 0.0) + 0.01 * z(rng);
    }
    const Dataset data(x, y);
    for (std::size_t p_n = 4; p_n <= 8; ++p_n) {
        const SegmentedDesign design(data, make_segmentation(39, p_n, 3));
        for (PenaltyKind kind : {PenaltyKind::Scad, PenaltyKind::Mcp}) {
            PenaltySpec spec;
            spec.kind = kind;
            spec.gamma = kind == PenaltyKind::Scad ? 3.7 : 2.4;
            spec.lambda = 0.01 * std::sqrt(2.0 * std::log(static_cast<double>(p_n)) / 39.0);
            CHECK(solve_group_penalized(design, spec).kkt_residual <= 1e-6);
        }
        PenaltySpec l1;
        l1.weights.assign(p_n + 1, 1.0);
        const double lmax = lambda_max(design, l1);
        for (double frac : {1e-4, 1e-2, 0.3}) {
            l1.lambda = frac * lmax;
            CHECK(solve_weighted_l1(design, l1).kkt_residual <= 1e-6);
        }
    }
}
