#pragma once

#include "segline/segment_ols.hpp"
#include "segline/solver.hpp"

#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace segline {

enum class Algorithm { Ls, Cls, Al, Cal, Scad, Mcp };

/// Short CLI identifier ("ls", "cal", ...) and the full algorithm name.
std::string_view algorithm_key(Algorithm a);
std::string_view algorithm_name(Algorithm a);
/// Accepts either form, case-insensitive. Throws std::invalid_argument.
Algorithm parse_algorithm(std::string_view s);

/// Branching of the least-squares scan. Verbatim advances past a boundary
/// whose single test is significant and only runs the pair test otherwise;
/// Inverted runs the pair test after a significant single test.
enum class Step2Logic { Verbatim, Inverted };

/// After a confirmed screened boundary, Verbatim skips the next screened
/// index unconditionally; AdjacentOnly skips it only when it is s_i + 1;
/// Never tests every screened index and leaves close pairs to the merge.
enum class SkipRule { Verbatim, AdjacentOnly, Never };

/// Full runs every step; ScreenOnly stops after the screening stage and
/// reports the flagged boundaries unrefined.
enum class Stages { Full, ScreenOnly };

enum class TestBackend { ChiSquare, Cusum };

struct DetectorConfig {
    double alpha = 0.05;
    /// Boundary count; 0 means floor(n / 50) (at least 1).
    std::size_t p_n = 0;
    double c = 1.0;
    double nu = 1.0;
    double gamma_scad = 3.7;
    double gamma_mcp = 2.4;
    double step3_lambda = 0.02;
    /// Weight on the β group of the adaptive-LASSO fit; negative means 1/q.
    double beta_weight = -1.0;
    StatNormalization normalization = StatNormalization::Verbatim;
    Step2Logic step2_logic = Step2Logic::Verbatim;
    SkipRule skip_rule = SkipRule::AdjacentOnly;
    Stages stages = Stages::Full;
    /// Penalize column-standardized coefficients (scale ‖column‖/√n).
    bool standardize = false;
    /// SCAD/MCP penalty multiplier; 0 means n.
    double penalty_multiplier = 0.0;
    std::size_t lambda_grid_size = 50;
    double lambda_ratio = 1e-4;
    /// Maximum number of reported change points; 0 means p_n.
    std::size_t k_max = 0;
    SolverOptions solver;
    /// Receives the adaptive-LASSO group weights (index 0 is β) before the fit.
    std::function<void(const std::vector<double>&)> weight_observer;

    /// Throws std::invalid_argument on out-of-range parameters.
    void validate() const;
    std::size_t resolve_p_n(std::size_t n) const;
};

struct BoundaryScreen {
    std::vector<double> z;          // z_ℓ = ‖d_ℓ‖_∞, ℓ = 1..p_n at index ℓ−1
    std::vector<double> mu_tilde;   // thresholded z
    std::vector<std::size_t> selected;  // 1-based ℓ with mu_tilde ≠ 0
};

/// SCAD-thresholds the sup-norms of the jump estimates.
BoundaryScreen screen_boundaries(const std::vector<Vector>& d, double lambda, double gamma);

DetectionResult detect_lsmcpda(const Dataset& data, const DetectorConfig& config);
DetectionResult detect_clsmcpda(const Dataset& data, const DetectorConfig& config);
DetectionResult detect_almcpda(const Dataset& data, const DetectorConfig& config);
DetectionResult detect_calmcpda(const Dataset& data, const DetectorConfig& config);
/// SMCPDA (kind = Scad) or MMCPDA (kind = Mcp).
DetectionResult detect_penalized(const Dataset& data, const DetectorConfig& config, PenaltyKind kind);

DetectionResult detect(const Dataset& data, Algorithm algorithm, const DetectorConfig& config);

struct PnSelection {
    std::size_t p_n = 0;
    std::vector<std::size_t> candidates;  // feasible candidates, ascending
    std::vector<double> rss;              // piecewise-OLS RSS per candidate
    DetectionResult result;               // detection at the selected p_n
};

/// Runs the detector for every feasible candidate and keeps the smallest
/// refitted RSS, smallest p_n on ties. Throws DataError if none is feasible.
PnSelection select_pn(const Dataset& data, const std::vector<std::size_t>& candidates,
                      Algorithm algorithm, const DetectorConfig& config);

/// Default p_n candidates around floor(n/50): ×{1/2, 3/4, 1, 3/2, 2}, feasible only.
std::vector<std::size_t> default_pn_candidates(std::size_t n, std::size_t q);

} // namespace segline
