#pragma once

#include "segline/segmented_design.hpp"

#include <optional>
#include <vector>

namespace segline {

enum class PenaltyKind { WeightedL1, Scad, Mcp };

struct PenaltySpec {
    PenaltyKind kind = PenaltyKind::WeightedL1;
    double lambda = 0.0;
    double gamma = 3.7;
    double nu = 1.0;
    /// Weighted-L1 only: one weight per group (group 0 is β). Empty means
    /// unit weights. A zero weight leaves the group unpenalized; an infinite
    /// weight pins it to zero.
    std::vector<double> weights;
    /// Optional per-coordinate multipliers inside the penalty (e.g. column
    /// norms for a standardized fit). Empty means all ones.
    Vector coordinate_scales;
    /// SCAD/MCP: the concave term is multiplier · Σ p(|θ_g|₁). Zero means n.
    double penalty_multiplier = 0.0;
    /// SCAD/MCP: whether group 0 (β) carries the penalty as well.
    bool penalize_beta = true;
};

struct SolverOptions {
    double tolerance = 1e-6;
    int max_sweeps = 10000;
    int max_outer = 200;
    /// Sweeps between exact active-set solves.
    int polish_every = 8;
    bool record_trace = false;
};

struct SolveReport {
    Vector theta_hat;
    double kkt_residual = 0.0;
    int iterations = 0;
    double objective = 0.0;
    std::vector<std::size_t> active_groups;
    bool converged = false;
    /// Objective after every coordinate sweep, when requested.
    std::vector<double> objective_trace;
};

/// Minimizes ‖y − X̃θ‖² + λ Σ_g w_g Σ_j s_gj |θ_gj| by cyclic coordinate
/// descent (groups 0..p_n in order) with periodic exact solves on the
/// active set. Throws NumericalError when the sweep cap is hit.
SolveReport solve_weighted_l1(const SegmentedDesign& design, const PenaltySpec& spec,
                              const SolverOptions& options = {},
                              const std::optional<Vector>& warm_start = std::nullopt);

/// Stationary point of ‖y − X̃θ‖² + M Σ_g p_{λ,γ}(Σ_j s_gj |θ_gj|) for SCAD
/// or MCP via local linear approximation, starting from the unit-weight
/// weighted-L1 solution.
SolveReport solve_group_penalized(const SegmentedDesign& design, const PenaltySpec& spec,
                                  const SolverOptions& options = {});

/// Objective of spec evaluated at theta.
double penalized_objective(const SegmentedDesign& design, const PenaltySpec& spec,
                           const Vector& theta);

/// Adaptive weights 1 / |d̃|₁^ν, one per initial estimate. Zero estimates
/// give infinite weight, infinite estimates zero weight.
std::vector<double> adaptive_weights(const std::vector<Vector>& initial, double nu);

/// A λ at which every jump group of the weighted-L1 problem is zero: the
/// fixed point of the kill condition with β fitted alone under its own
/// penalty, plus a 1e-6 relative margin. Tight when β is unpenalized.
double lambda_max(const SegmentedDesign& design, const PenaltySpec& spec);

/// count points log-spaced over [ratio · λ_max, λ_max], largest first.
std::vector<double> lambda_grid(double lambda_max, std::size_t count = 50, double ratio = 1e-4);

struct BicSelection {
    double lambda = 0.0;
    SolveReport report;
    std::vector<double> lambdas;
    std::vector<double> bic;  // NaN for grid points whose solve failed
};

/// Solves the weighted-L1 problem along the grid (warm-started, largest λ
/// first) and keeps the fit minimizing n log(RSS/n) + k log n, where k counts
/// nonzero coefficients. Ties go to the larger λ.
BicSelection select_lambda_bic(const SegmentedDesign& design, const PenaltySpec& base,
                               const std::vector<double>& grid, const SolverOptions& options = {});

} // namespace segline
