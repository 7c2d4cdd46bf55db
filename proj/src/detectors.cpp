#include "segline/detectors.hpp"

#include "segline/cusum.hpp"
#include "segline/penalty.hpp"
#include "segline/segmented_design.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace segline {

namespace {

using Clock = std::chrono::steady_clock;

struct AlgorithmInfo {
    Algorithm id;
    std::string_view key;
    std::string_view name;
};

constexpr AlgorithmInfo kAlgorithms[] = {
    {Algorithm::Ls, "ls", "LSMCPDA"},     {Algorithm::Cls, "cls", "CLSMCPDA"},
    {Algorithm::Al, "al", "ALMCPDA"},     {Algorithm::Cal, "cal", "CALMCPDA"},
    {Algorithm::Scad, "scad", "SMCPDA"}, {Algorithm::Mcp, "mcp", "MMCPDA"},
};

const AlgorithmInfo& info(Algorithm a) {
    for (const auto& entry : kAlgorithms) {
        if (entry.id == a) {
            return entry;
        }
    }
    throw std::invalid_argument("unknown algorithm");
}

bool iequals(std::string_view a, std::string_view b) {
    return a.size() == b.size() &&
           std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
               return std::tolower(static_cast<unsigned char>(x)) ==
                      std::tolower(static_cast<unsigned char>(y));
           });
}

// Everything the algorithms share after segmentation.
struct Prepared {
    Segmentation seg;
    DeltaEstimates est;
    double sigma2 = 0.0;  // σ̂², floored away from zero for noiseless input
};

Prepared prepare(const Dataset& data, const DetectorConfig& config) {
    config.validate();
    Prepared p;
    p.seg = make_segmentation(data.n(), config.resolve_p_n(data.n()), data.q());
    if (p.seg.blocks.front().size() <= data.q()) {
        throw DataError("first block too short to estimate the noise variance");
    }
    p.est = estimate_deltas(data, p.seg);
    const double scale = data.y().squaredNorm() / static_cast<double>(data.n());
    p.sigma2 = std::max(p.est.sigma2_hat, 1e-20 * std::max(scale, 1e-300));
    return p;
}

IndexRange blocks_window(const Segmentation& seg, std::size_t first_block, std::size_t last_block) {
    return {seg.block(first_block).first, seg.block(last_block).last};
}

// Padded by q on the left and q + 1 on the right so that every split within
// ±m of the hit leaves enough rows on both sides.
IndexRange refine_window(const Segmentation& seg, std::size_t q, std::size_t hit) {
    const std::size_t left = seg.m + q;
    return {hit > left ? hit - left : 1, std::min(seg.n, hit + seg.m + q + 1)};
}

// Outcome of a CUSUM decision on a window; short windows cannot be tested.
struct CusumDecision {
    bool testable = false;
    bool reject = false;
};

CusumDecision cusum_decide(const Dataset& data, IndexRange window, double alpha) {
    if (window.size() <= 16 || window.size() < 2 * data.q() + 2) {
        return {};
    }
    return {true, cusum_test(data, {window}, alpha).reject};
}

double split_cost(const Dataset& data, IndexRange window, std::size_t a) {
    return segment_ols(data, {window.first, a}).rss + segment_ols(data, {a + 1, window.last}).rss;
}

// Two estimates closer than m collapse to the one with the smaller split RSS
// over their joint window.
std::vector<std::size_t> merge_close(const Dataset& data, const Segmentation& seg,
                                     std::vector<std::size_t> locs, std::vector<std::string>& diag) {
    std::sort(locs.begin(), locs.end());
    locs.erase(std::unique(locs.begin(), locs.end()), locs.end());
    for (std::size_t i = 0; i + 1 < locs.size();) {
        const std::size_t a = locs[i];
        const std::size_t b = locs[i + 1];
        if (b - a >= seg.m) {
            ++i;
            continue;
        }
        const IndexRange joint{a > seg.m ? a - seg.m : 1, std::min(seg.n, b + seg.m)};
        const double ca = split_cost(data, joint, a);
        const double cb = split_cost(data, joint, b);
        diag.push_back("merged estimates " + std::to_string(a) + " and " + std::to_string(b));
        locs.erase(locs.begin() + static_cast<long>(cb < ca ? i : i + 1));
    }
    return locs;
}

std::vector<std::size_t> refine_hits(const Dataset& data, const Segmentation& seg,
                                     const std::vector<std::size_t>& hits,
                                     std::vector<std::string>& diag) {
    const auto count = static_cast<long>(hits.size());
    std::vector<std::size_t> out(hits.size());
    std::vector<char> short_window(hits.size(), 0);
    const std::size_t min_len = 2 * (data.q() + 1);
#pragma omp parallel for schedule(dynamic)
    for (long h = 0; h < count; ++h) {
        const auto idx = static_cast<std::size_t>(h);
        const IndexRange w = refine_window(seg, data.q(), hits[idx]);
        if (w.size() < min_len) {
            out[idx] = hits[idx];
            short_window[idx] = 1;
        } else {
            out[idx] = refine_changepoint(data, w);
        }
    }
    for (std::size_t h = 0; h < hits.size(); ++h) {
        if (short_window[h]) {
            diag.push_back("window around " + std::to_string(hits[h]) + " too short to refine");
        }
    }
    return merge_close(data, seg, std::move(out), diag);
}

DetectionResult assemble(const Dataset& data, Algorithm algorithm, const DetectorConfig& config,
                         const Prepared& prep, std::vector<std::size_t> hits,
                         std::vector<std::size_t> locations, std::vector<std::string> diag,
                         Clock::time_point start) {
    DetectionResult r;
    r.algorithm = std::string(algorithm_name(algorithm));
    r.p_n = prep.seg.p_n;
    r.m = prep.seg.m;
    std::sort(locations.begin(), locations.end());
    locations.erase(std::remove_if(locations.begin(), locations.end(),
                                   [&](std::size_t a) { return a <= 1 || a >= data.n(); }),
                    locations.end());
    const std::size_t k_max = config.k_max == 0 ? prep.seg.p_n : config.k_max;
    if (locations.size() > k_max) {
        diag.push_back("estimate count " + std::to_string(locations.size()) + " truncated to " +
                       std::to_string(k_max));
        locations.resize(k_max);
    }
    r.locations = std::move(locations);
    r.k_hat = r.locations.size();
    std::sort(hits.begin(), hits.end());
    r.boundary_hits = std::move(hits);
    r.rss = piecewise_rss(data, r.locations);
    r.diagnostics = std::move(diag);
    r.runtime_s = std::chrono::duration<double>(Clock::now() - start).count();
    return r;
}

// Least-squares scan over i < p_n − 3; hits are absolute boundary locations.
std::vector<std::size_t> ls_scan(const Dataset& data, const Prepared& prep, const DetectorConfig& config,
                                 TestBackend backend, std::vector<std::string>& diag) {
    const Segmentation& seg = prep.seg;
    const DeltaEstimates& est = prep.est;
    const std::size_t p = seg.p_n;
    std::vector<std::size_t> hits;

    auto single = [&](std::size_t i) -> std::optional<bool> {
        if (backend == TestBackend::ChiSquare) {
            if (est.unresolvable(i)) {
                return std::nullopt;
            }
            return delta_test_single(est.d(i), est.gram(i + 1), prep.sigma2, config.alpha,
                                     config.normalization)
                .significant;
        }
        const CusumDecision d = cusum_decide(data, blocks_window(seg, i, i + 1), config.alpha);
        return d.testable ? std::optional<bool>(d.reject) : std::nullopt;
    };
    auto pair = [&](std::size_t i) -> std::optional<bool> {
        if (backend == TestBackend::ChiSquare) {
            if (est.unresolvable(i + 1) || est.unresolvable(i + 2)) {
                return std::nullopt;
            }
            return delta_test_pair(est.d(i + 1) + est.d(i + 2), est.gram(i + 1), prep.sigma2,
                                   config.alpha, config.normalization)
                .significant;
        }
        const CusumDecision d = cusum_decide(data, blocks_window(seg, i + 1, i + 3), config.alpha);
        return d.testable ? std::optional<bool>(d.reject) : std::nullopt;
    };

    std::size_t i = 1;
    while (i + 3 < p) {
        const std::optional<bool> s = single(i);
        if (!s) {
            diag.push_back("boundary " + std::to_string(i) + " unresolvable; single test skipped");
        }
        const bool run_pair = config.step2_logic == Step2Logic::Verbatim ? !s.value_or(false)
                                                                         : s.value_or(false);
        if (!run_pair) {
            ++i;
            continue;
        }
        const std::optional<bool> pr = pair(i);
        bool flag = pr.value_or(false);
        if (!pr) {
            if (backend == TestBackend::Cusum) {
                diag.push_back("window after boundary " + std::to_string(i) +
                               " below the CUSUM minimum; kept for split refinement");
                flag = true;
            } else {
                diag.push_back("boundaries " + std::to_string(i + 1) + "," + std::to_string(i + 2) +
                               " unresolvable; pair test skipped");
            }
        }
        if (flag) {
            // The pair test spans blocks i+1..i+3; its ±m window is centred
            // on boundary i+2 so that both candidate blocks are searched.
            hits.push_back(seg.boundary(i + 2));
            i += 2;
        } else {
            ++i;
        }
    }
    return hits;
}

// Step-4 confirmation over the screened set. The chi-square backend uses
// `d` and the (p_n − s) scaling; the CUSUM backend tests blocks s and s+1.
std::vector<std::size_t> confirm_screened(const Dataset& data, const Prepared& prep,
                                          const DetectorConfig& config, TestBackend backend,
                                          const std::vector<Vector>& d,
                                          const std::vector<std::size_t>& selected,
                                          std::vector<std::string>& diag) {
    const Segmentation& seg = prep.seg;
    const std::size_t p = seg.p_n;
    const double q = static_cast<double>(data.q());
    const double crit = chi2_quantile(config.alpha, static_cast<int>(data.q()));
    std::vector<std::size_t> hits;
    std::size_t i = 0;
    while (i < selected.size()) {
        const std::size_t s = selected[i];
        bool sig = false;
        if (backend == TestBackend::ChiSquare) {
            if (prep.est.unresolvable(s)) {
                diag.push_back("boundary " + std::to_string(s) + " unresolvable; test skipped");
            } else {
                const Vector& ds = d[s - 1];
                const double stat = static_cast<double>(p - s) * ds.dot(prep.est.gram(s + 1) * ds) /
                                    (q * prep.sigma2);
                sig = stat >= crit;
            }
        } else {
            const CusumDecision dec = cusum_decide(data, blocks_window(seg, s, s + 1), config.alpha);
            if (!dec.testable) {
                diag.push_back("blocks around boundary " + std::to_string(s) +
                               " below the CUSUM minimum; kept for split refinement");
            }
            sig = dec.testable ? dec.reject : true;
        }
        if (!sig) {
            ++i;
            continue;
        }
        hits.push_back(seg.boundary(s));
        const bool skip_next =
            config.skip_rule == SkipRule::Verbatim ||
            (config.skip_rule == SkipRule::AdjacentOnly && i + 1 < selected.size() && selected[i + 1] == s + 1);
        i += skip_next ? 2 : 1;
    }
    return hits;
}

std::vector<Vector> jump_groups(const Vector& theta, std::size_t q, std::size_t p) {
    std::vector<Vector> d(p);
    for (std::size_t r = 1; r <= p; ++r) {
        d[r - 1] = theta.segment(r * q, q);
    }
    return d;
}

Vector coordinate_scales(const SegmentedDesign& design, bool standardize) {
    if (!standardize) {
        return {};
    }
    return (design.column_sq_norms() / static_cast<double>(design.n())).cwiseSqrt();
}

// Steps 3–6 shared by the penalized algorithms, given the jump estimates.
DetectionResult screen_confirm_refine(const Dataset& data, Algorithm algorithm,
                                      const DetectorConfig& config, const Prepared& prep,
                                      TestBackend backend, const std::vector<Vector>& d,
                                      std::vector<std::string> diag, Clock::time_point start) {
    const BoundaryScreen screen = screen_boundaries(d, config.step3_lambda, config.gamma_scad);
    if (screen.selected.empty()) {
        return assemble(data, algorithm, config, prep, {}, {}, std::move(diag), start);
    }
    if (config.stages == Stages::ScreenOnly) {
        std::vector<std::size_t> hits;
        for (std::size_t s : screen.selected) {
            hits.push_back(prep.seg.boundary(s));
        }
        std::vector<std::size_t> locs = hits;
        return assemble(data, algorithm, config, prep, std::move(hits), std::move(locs),
                        std::move(diag), start);
    }
    std::vector<std::size_t> hits =
        confirm_screened(data, prep, config, backend, d, screen.selected, diag);
    std::vector<std::size_t> locs = refine_hits(data, prep.seg, hits, diag);
    return assemble(data, algorithm, config, prep, std::move(hits), std::move(locs), std::move(diag),
                    start);
}

DetectionResult adaptive_lasso(const Dataset& data, const DetectorConfig& config, Algorithm algorithm,
                               TestBackend backend) {
    const auto start = Clock::now();
    const Prepared prep = prepare(data, config);
    const Segmentation& seg = prep.seg;
    const std::size_t q = data.q();
    const std::size_t p = seg.p_n;
    std::vector<std::string> diag;

    // Step 1: least-squares pass and its refined estimates.
    const std::vector<std::size_t> ls_hits = ls_scan(data, prep, config, TestBackend::ChiSquare, diag);
    const std::vector<std::size_t> ls_locs = refine_hits(data, seg, ls_hits, diag);

    // Step 2: a change inside block j moves d_{j−1} and d_j; both get the
    // large initial estimate c·1_q.
    std::vector<Vector> initial(p + 1, Vector::Constant(q, 1.0 / std::sqrt(static_cast<double>(seg.m))));
    for (std::size_t a : ls_locs) {
        const std::size_t j = seg.block_of(a);
        for (std::size_t r : {j - 1, j}) {
            if (r >= 1 && r <= p) {
                initial[r] = Vector::Constant(q, config.c);
            }
        }
    }
    std::vector<double> weights = adaptive_weights(initial, config.nu);
    weights[0] = config.beta_weight < 0.0 ? 1.0 / static_cast<double>(q) : config.beta_weight;
    if (config.weight_observer) {
        config.weight_observer(weights);
    }

    const SegmentedDesign design(data, seg);
    PenaltySpec spec;
    spec.kind = PenaltyKind::WeightedL1;
    spec.nu = config.nu;
    spec.weights = weights;
    spec.coordinate_scales = coordinate_scales(design, config.standardize);

    std::vector<Vector> d(p, Vector::Zero(q));
    const double lmax = lambda_max(design, spec);
    if (lmax > 0.0) {
        const std::vector<double> grid = lambda_grid(lmax, config.lambda_grid_size, config.lambda_ratio);
        const BicSelection sel = select_lambda_bic(design, spec, grid, config.solver);
        d = jump_groups(sel.report.theta_hat, q, p);
    } else {
        diag.push_back("lambda_max is zero; every jump estimate is zero");
    }
    return screen_confirm_refine(data, algorithm, config, prep, backend, d, std::move(diag), start);
}

} // namespace

std::string_view algorithm_key(Algorithm a) { return info(a).key; }
std::string_view algorithm_name(Algorithm a) { return info(a).name; }

Algorithm parse_algorithm(std::string_view s) {
    for (const auto& entry : kAlgorithms) {
        if (iequals(s, entry.key) || iequals(s, entry.name)) {
            return entry.id;
        }
    }
    throw std::invalid_argument("unknown algorithm '" + std::string(s) + "'");
}

void DetectorConfig::validate() const {
    if (!(alpha > 0.0 && alpha < 1.0)) {
        throw std::invalid_argument("alpha must lie in (0, 1)");
    }
    if (!(c > 0.0)) {
        throw std::invalid_argument("c must be positive");
    }
    if (!(nu > 0.0)) {
        throw std::invalid_argument("nu must be positive");
    }
    if (!(gamma_scad > 2.0)) {
        throw std::invalid_argument("SCAD gamma must exceed 2");
    }
    if (!(gamma_mcp > 1.0)) {
        throw std::invalid_argument("MCP gamma must exceed 1");
    }
    if (!(step3_lambda > 0.0)) {
        throw std::invalid_argument("screening lambda must be positive");
    }
    if (lambda_grid_size == 0 || !(lambda_ratio > 0.0 && lambda_ratio <= 1.0)) {
        throw std::invalid_argument("lambda grid needs at least one point and a ratio in (0, 1]");
    }
}

std::size_t DetectorConfig::resolve_p_n(std::size_t n) const {
    return p_n != 0 ? p_n : std::max<std::size_t>(1, n / 50);
}

BoundaryScreen screen_boundaries(const std::vector<Vector>& d, double lambda, double gamma) {
    BoundaryScreen screen;
    screen.z.reserve(d.size());
    screen.mu_tilde.reserve(d.size());
    for (std::size_t l = 0; l < d.size(); ++l) {
        const double z = d[l].size() == 0 ? 0.0 : d[l].cwiseAbs().maxCoeff();
        const double mu = scad_threshold_scalar(z, lambda, gamma);
        screen.z.push_back(z);
        screen.mu_tilde.push_back(mu);
        if (mu != 0.0) {
            screen.selected.push_back(l + 1);
        }
    }
    return screen;
}

DetectionResult detect_lsmcpda(const Dataset& data, const DetectorConfig& config) {
    const auto start = Clock::now();
    const Prepared prep = prepare(data, config);
    std::vector<std::string> diag;
    std::vector<std::size_t> hits = ls_scan(data, prep, config, TestBackend::ChiSquare, diag);
    std::vector<std::size_t> locs = config.stages == Stages::ScreenOnly
                                        ? hits
                                        : refine_hits(data, prep.seg, hits, diag);
    return assemble(data, Algorithm::Ls, config, prep, std::move(hits), std::move(locs),
                    std::move(diag), start);
}

DetectionResult detect_clsmcpda(const Dataset& data, const DetectorConfig& config) {
    const auto start = Clock::now();
    const Prepared prep = prepare(data, config);
    std::vector<std::string> diag;
    const std::vector<std::size_t> scan = ls_scan(data, prep, config, TestBackend::Cusum, diag);
    if (config.stages == Stages::ScreenOnly) {
        std::vector<std::size_t> locs = scan;
        return assemble(data, Algorithm::Cls, config, prep, scan, std::move(locs), std::move(diag),
                        start);
    }
    // The scan's boundaries play the role of the screened set; each is
    // confirmed by CUSUM on its two adjoining blocks and then refined.
    std::vector<std::size_t> selected;
    for (std::size_t b : scan) {
        const std::size_t r = prep.seg.block_of(b);
        const double z = prep.est.d(r).cwiseAbs().maxCoeff();
        if (scad_threshold_scalar(z, config.step3_lambda, config.gamma_scad) != 0.0) {
            selected.push_back(r);
        }
    }
    DetectorConfig confirm = config;
    confirm.skip_rule = SkipRule::AdjacentOnly;
    std::vector<std::size_t> hits =
        confirm_screened(data, prep, confirm, TestBackend::Cusum, prep.est.d_hat, selected, diag);
    std::vector<std::size_t> locs = refine_hits(data, prep.seg, hits, diag);
    return assemble(data, Algorithm::Cls, config, prep, std::move(hits), std::move(locs),
                    std::move(diag), start);
}

DetectionResult detect_almcpda(const Dataset& data, const DetectorConfig& config) {
    return adaptive_lasso(data, config, Algorithm::Al, TestBackend::ChiSquare);
}

DetectionResult detect_calmcpda(const Dataset& data, const DetectorConfig& config) {
    return adaptive_lasso(data, config, Algorithm::Cal, TestBackend::Cusum);
}

DetectionResult detect_penalized(const Dataset& data, const DetectorConfig& config, PenaltyKind kind) {
    if (kind == PenaltyKind::WeightedL1) {
        throw std::invalid_argument("detect_penalized needs SCAD or MCP");
    }
    const auto start = Clock::now();
    const Prepared prep = prepare(data, config);
    const std::size_t q = data.q();
    const std::size_t p = prep.seg.p_n;
    const double n = static_cast<double>(data.n());

    const SegmentedDesign design(data, prep.seg);
    PenaltySpec spec;
    spec.kind = kind;
    spec.gamma = kind == PenaltyKind::Scad ? config.gamma_scad : config.gamma_mcp;
    spec.lambda = std::sqrt(prep.sigma2) * std::sqrt(2.0 * std::log(static_cast<double>(p)) / n);
    spec.penalty_multiplier = config.penalty_multiplier;
    spec.coordinate_scales = coordinate_scales(design, config.standardize);
    const SolveReport rep = solve_group_penalized(design, spec, config.solver);

    const Algorithm id = kind == PenaltyKind::Scad ? Algorithm::Scad : Algorithm::Mcp;
    return screen_confirm_refine(data, id, config, prep, TestBackend::Cusum,
                                 jump_groups(rep.theta_hat, q, p), {}, start);
}

DetectionResult detect(const Dataset& data, Algorithm algorithm, const DetectorConfig& config) {
    switch (algorithm) {
    case Algorithm::Ls:
        return detect_lsmcpda(data, config);
    case Algorithm::Cls:
        return detect_clsmcpda(data, config);
    case Algorithm::Al:
        return detect_almcpda(data, config);
    case Algorithm::Cal:
        return detect_calmcpda(data, config);
    case Algorithm::Scad:
        return detect_penalized(data, config, PenaltyKind::Scad);
    case Algorithm::Mcp:
        return detect_penalized(data, config, PenaltyKind::Mcp);
    }
    throw std::invalid_argument("unknown algorithm");
}

std::vector<std::size_t> default_pn_candidates(std::size_t n, std::size_t q) {
    const double base = static_cast<double>(std::max<std::size_t>(1, n / 50));
    std::vector<std::size_t> out;
    for (double f : {0.5, 0.75, 1.0, 1.5, 2.0}) {
        const auto p = static_cast<std::size_t>(std::max(1.0, std::floor(base * f)));
        const std::size_t m = n / (p + 1);
        if (m >= q + 1 && n - p * m > q) {
            out.push_back(p);
        }
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

PnSelection select_pn(const Dataset& data, const std::vector<std::size_t>& candidates,
                      Algorithm algorithm, const DetectorConfig& config) {
    if (candidates.empty()) {
        throw std::invalid_argument("no p_n candidates");
    }
    std::vector<std::size_t> feasible;
    for (std::size_t p : candidates) {
        if (p < 1) {
            continue;
        }
        const std::size_t m = data.n() / (p + 1);
        if (m >= data.q() + 1 && data.n() - p * m > data.q()) {
            feasible.push_back(p);
        }
    }
    std::sort(feasible.begin(), feasible.end());
    feasible.erase(std::unique(feasible.begin(), feasible.end()), feasible.end());
    if (feasible.empty()) {
        throw DataError("every p_n candidate gives an infeasible segmentation");
    }

    const auto count = static_cast<long>(feasible.size());
    std::vector<DetectionResult> results(feasible.size());
    std::vector<std::string> errors(feasible.size());
#pragma omp parallel for schedule(dynamic)
    for (long c = 0; c < count; ++c) {
        const auto idx = static_cast<std::size_t>(c);
        DetectorConfig cfg = config;
        cfg.p_n = feasible[idx];
        try {
            results[idx] = detect(data, algorithm, cfg);
        } catch (const std::exception& e) {
            errors[idx] = e.what();
        }
    }

    PnSelection sel;
    sel.candidates = feasible;
    sel.rss.assign(feasible.size(), std::numeric_limits<double>::infinity());
    std::size_t best = feasible.size();
    for (std::size_t c = 0; c < feasible.size(); ++c) {
        if (!errors[c].empty()) {
            spdlog::warn("p_n={} failed: {}", feasible[c], errors[c]);
            continue;
        }
        sel.rss[c] = results[c].rss;
        if (best == feasible.size() || sel.rss[c] < sel.rss[best]) {
            best = c;
        }
    }
    if (best == feasible.size()) {
        throw NumericalError("detection failed for every p_n candidate: " + errors.front());
    }
    sel.p_n = feasible[best];
    sel.result = std::move(results[best]);
    return sel;
}

} // namespace segline
