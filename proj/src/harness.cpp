#include "segline/harness.hpp"

#include "segline/rng.hpp"

#include <spdlog/spdlog.h>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <algorithm>
#include <cstdlib>
#include <limits>
#include <stdexcept>

namespace segline {

namespace {

Vector default_beta0() { return (Vector(3) << 1.0, 1.4, 0.7).finished(); }

ChangePointTruth alternating_truth(const std::vector<std::size_t>& locations) {
    const Vector delta = (Vector(3) << 0.5, -0.7, 0.4).finished();
    ChangePointTruth t;
    t.locations = locations;
    for (std::size_t k = 0; k < locations.size(); ++k) {
        t.deltas.push_back(k % 2 == 0 ? delta : Vector(-delta));
    }
    return t;
}

// Outcome of one (rep, algorithm) run, reduced serially afterwards.
struct RunOutcome {
    bool failed = false;
    std::size_t k_hat = 0;
    std::vector<std::size_t> locations;
    double runtime_s = 0.0;
};

RunOutcome run_one(const Scenario& s, Algorithm a, std::uint64_t seed, const DetectorConfig& config) {
    Scenario local = s;
    local.seed = seed;
    RunOutcome out;
    try {
        const Dataset data = simulate_dataset(local).first;
        const DetectionResult r = detect(data, a, config);
        out.k_hat = r.k_hat;
        out.locations = r.locations;
        out.runtime_s = r.runtime_s;
    } catch (const std::exception& e) {
        spdlog::warn("{} failed on seed {}: {}", algorithm_name(a), seed, e.what());
        out.failed = true;
    }
    return out;
}

ReplicationReport reduce(const Scenario& s, const std::vector<Algorithm>& algorithms, std::size_t reps,
                         std::uint64_t base_seed, int workers, const std::vector<RunOutcome>& runs) {
    ReplicationReport report;
    report.scenario = s;
    report.reps = reps;
    report.base_seed = base_seed;
    report.workers = workers;
    const std::size_t k0 = s.truth.k0();
    for (std::size_t ai = 0; ai < algorithms.size(); ++ai) {
        AlgorithmTally t;
        t.algorithm = algorithms[ai];
        t.hits.assign(k0, {0, 0, 0});
        t.k_hat_histogram.assign(k0 + 3, 0);
        double runtime = 0.0;
        std::size_t timed = 0;
        for (std::size_t rep = 0; rep < reps; ++rep) {
            const RunOutcome& o = runs[rep * algorithms.size() + ai];
            if (o.failed) {
                ++t.failures;
                continue;
            }
            runtime += o.runtime_s;
            ++timed;
            ++t.k_hat_histogram[std::min(o.k_hat, t.k_hat_histogram.size() - 1)];
            if (o.k_hat == k0) {
                ++t.correct_k;
            }
            for (std::size_t k = 0; k < k0; ++k) {
                std::size_t best = std::numeric_limits<std::size_t>::max();
                for (std::size_t loc : o.locations) {
                    const std::size_t a = s.truth.locations[k];
                    best = std::min(best, loc > a ? loc - a : a - loc);
                }
                for (std::size_t tol = 0; tol < kHitTolerances.size(); ++tol) {
                    if (best <= kHitTolerances[tol]) {
                        ++t.hits[k][tol];
                    }
                }
            }
        }
        t.mean_runtime_s = timed > 0 ? runtime / static_cast<double>(timed) : 0.0;
        report.tallies.push_back(std::move(t));
    }
    return report;
}

nlohmann::json vector_json(const Vector& v) {
    return nlohmann::json(std::vector<double>(v.data(), v.data() + v.size()));
}

Vector json_vector(const nlohmann::json& j) {
    const auto values = j.get<std::vector<double>>();
    return Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
}

} // namespace

void Scenario::validate() const {
    if (n < 2 || q < 1) {
        throw std::invalid_argument("scenario needs n >= 2 and q >= 1");
    }
    if (static_cast<std::size_t>(beta0.size()) != q) {
        throw std::invalid_argument("beta0 must have q entries");
    }
    if (!(predictor_sd >= 0.0) || !(noise_sd >= 0.0)) {
        throw std::invalid_argument("standard deviations must be nonnegative");
    }
    truth.validate(n, q);
}

Scenario scenario_none() {
    Scenario s;
    s.name = "none";
    s.beta0 = default_beta0();
    return s;
}

Scenario scenario_cpl1() {
    Scenario s = scenario_none();
    s.name = "cpl1";
    std::vector<std::size_t> locs;
    for (std::size_t i = 1; i <= 9; ++i) {
        locs.push_back(500 * i);
    }
    s.truth = alternating_truth(locs);
    return s;
}

Scenario scenario_cpl2() {
    Scenario s = scenario_none();
    s.name = "cpl2";
    s.truth = alternating_truth({503, 923, 1471, 2077, 2334, 2890, 3410, 3909, 4546});
    return s;
}

Scenario scenario_by_name(const std::string& name) {
    if (name == "none") {
        return scenario_none();
    }
    if (name == "cpl1") {
        return scenario_cpl1();
    }
    if (name == "cpl2") {
        return scenario_cpl2();
    }
    throw std::invalid_argument("unknown scenario '" + name + "'");
}

Scenario scenario_from_json(const nlohmann::json& j) {
    Scenario s;
    s.name = j.value("name", std::string("custom"));
    s.n = j.at("n").get<std::size_t>();
    s.q = j.at("q").get<std::size_t>();
    s.beta0 = json_vector(j.at("beta0"));
    if (j.contains("locations")) {
        s.truth.locations = j.at("locations").get<std::vector<std::size_t>>();
    }
    if (j.contains("deltas")) {
        for (const auto& d : j.at("deltas")) {
            s.truth.deltas.push_back(json_vector(d));
        }
    }
    s.predictor_mean = j.value("predictor_mean", s.predictor_mean);
    s.predictor_sd = j.value("predictor_sd", s.predictor_sd);
    s.noise_sd = j.value("noise_sd", s.noise_sd);
    s.seed = j.value("seed", s.seed);
    s.validate();
    return s;
}

nlohmann::json scenario_to_json(const Scenario& s) {
    nlohmann::json deltas = nlohmann::json::array();
    for (const Vector& d : s.truth.deltas) {
        deltas.push_back(vector_json(d));
    }
    return {{"name", s.name},
            {"n", s.n},
            {"q", s.q},
            {"beta0", vector_json(s.beta0)},
            {"locations", s.truth.locations},
            {"deltas", deltas},
            {"predictor_mean", s.predictor_mean},
            {"predictor_sd", s.predictor_sd},
            {"noise_sd", s.noise_sd},
            {"seed", s.seed}};
}

std::pair<Dataset, ChangePointTruth> simulate_dataset(const Scenario& s) {
    s.validate();
    Philox4x32 rng(s.seed);
    Matrix x(s.n, s.q);
    Vector y(s.n);
    Vector beta = s.beta0;
    std::size_t next = 0;
    for (std::size_t i = 0; i < s.n; ++i) {
        // Observation i+1 lies after change k when a_k < i+1.
        while (next < s.truth.k0() && s.truth.locations[next] < i + 1) {
            beta += s.truth.deltas[next];
            ++next;
        }
        x(i, 0) = 1.0;
        for (std::size_t j = 1; j < s.q; ++j) {
            x(i, j) = s.predictor_mean + s.predictor_sd * rng.normal();
        }
        y(i) = x.row(i).dot(beta) + s.noise_sd * rng.normal();
    }
    return {Dataset(std::move(x), std::move(y)), s.truth};
}

int resolve_workers(int requested) {
    if (const char* env = std::getenv("SEGLINE_WORKERS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end != env && *end == '\0' && v > 0) {
            return static_cast<int>(v);
        }
        spdlog::warn("ignoring SEGLINE_WORKERS='{}'", env);
    }
    if (requested > 0) {
        return requested;
    }
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

ReplicationReport run_replications(const Scenario& s, const std::vector<Algorithm>& algorithms,
                                   std::size_t reps, std::uint64_t base_seed,
                                   const DetectorConfig& config, int workers) {
    if (reps < 1) {
        throw std::invalid_argument("reps must be at least 1");
    }
    s.validate();
    const int w = resolve_workers(workers);
    const std::size_t na = algorithms.size();
    const auto total = static_cast<long>(reps * na);
    std::vector<RunOutcome> runs(reps * na);
    long done = 0;
#pragma omp parallel for schedule(dynamic) num_threads(w)
    for (long t = 0; t < total; ++t) {
        const auto idx = static_cast<std::size_t>(t);
        const std::size_t rep = idx / na;
        runs[idx] = run_one(s, algorithms[idx % na], base_seed + rep, config);
        long finished = 0;
#pragma omp atomic capture
        finished = ++done;
        if (finished % static_cast<long>(std::max<std::size_t>(na, 1) * 10) == 0) {
            spdlog::info("{}: {}/{} runs", s.name, finished, total);
        }
    }
    return reduce(s, algorithms, reps, base_seed, w, runs);
}

ReplicationReport run_replications_serial(const Scenario& s, const std::vector<Algorithm>& algorithms,
                                          std::size_t reps, std::uint64_t base_seed,
                                          const DetectorConfig& config) {
    if (reps < 1) {
        throw std::invalid_argument("reps must be at least 1");
    }
    s.validate();
    const std::size_t na = algorithms.size();
    std::vector<RunOutcome> runs(reps * na);
    for (std::size_t idx = 0; idx < runs.size(); ++idx) {
        runs[idx] = run_one(s, algorithms[idx % na], base_seed + idx / na, config);
    }
    return reduce(s, algorithms, reps, base_seed, 1, runs);
}

nlohmann::json config_to_json(const DetectorConfig& c) {
    return {{"alpha", c.alpha},
            {"p_n", c.p_n},
            {"c", c.c},
            {"nu", c.nu},
            {"gamma_scad", c.gamma_scad},
            {"gamma_mcp", c.gamma_mcp},
            {"step3_lambda", c.step3_lambda},
            {"normalization", c.normalization == StatNormalization::Wald ? "wald" : "verbatim"},
            {"step2_logic", c.step2_logic == Step2Logic::Verbatim ? "verbatim" : "inverted"},
            {"skip_rule", c.skip_rule == SkipRule::Verbatim ? "verbatim"
                           : c.skip_rule == SkipRule::Never ? "never"
                                                            : "adjacent"},
            {"stages", c.stages == Stages::Full ? "full" : "screen-only"},
            {"standardize", c.standardize},
            {"penalty_multiplier", c.penalty_multiplier},
            {"lambda_grid_size", c.lambda_grid_size},
            {"lambda_ratio", c.lambda_ratio},
            {"tolerance", c.solver.tolerance},
            {"max_sweeps", c.solver.max_sweeps}};
}

nlohmann::json result_to_json(const DetectionResult& r, const Dataset& data, const DetectorConfig& c) {
    nlohmann::json config = config_to_json(c);
    config["p_n"] = r.p_n;
    if (r.m > 0) {
        config["first_block_ratio"] =
            static_cast<double>(data.n() - r.p_n * r.m) / static_cast<double>(r.m);
    }
    return {{"algorithm", r.algorithm},
            {"n", data.n()},
            {"q", data.q()},
            {"p_n", r.p_n},
            {"m", r.m},
            {"K_hat", r.k_hat},
            {"locations", r.locations},
            {"boundary_hits", r.boundary_hits},
            {"rss", r.rss},
            {"runtime_s", r.runtime_s},
            {"diagnostics", r.diagnostics},
            {"config", config}};
}

nlohmann::json report_to_json(const ReplicationReport& r) {
    nlohmann::json algs = nlohmann::json::array();
    for (const AlgorithmTally& t : r.tallies) {
        nlohmann::json hits = nlohmann::json::array();
        for (std::size_t k = 0; k < t.hits.size(); ++k) {
            hits.push_back({{"location", r.scenario.truth.locations[k]},
                            {"within_0", t.hits[k][0]},
                            {"within_5", t.hits[k][1]},
                            {"within_10", t.hits[k][2]}});
        }
        algs.push_back({{"algorithm", std::string(algorithm_name(t.algorithm))},
                        {"correct_k", t.correct_k},
                        {"correct_rate", static_cast<double>(t.correct_k) / static_cast<double>(r.reps)},
                        {"failures", t.failures},
                        {"hits", hits},
                        {"k_hat_histogram", t.k_hat_histogram},
                        {"mean_runtime_s", t.mean_runtime_s}});
    }
    return {{"scenario", scenario_to_json(r.scenario)},
            {"reps", r.reps},
            {"base_seed", r.base_seed},
            {"seeds", {{"first", r.base_seed}, {"last", r.base_seed + r.reps - 1}}},
            {"workers", r.workers},
            {"tolerances", kHitTolerances},
            {"algorithms", algs}};
}

} // namespace segline
