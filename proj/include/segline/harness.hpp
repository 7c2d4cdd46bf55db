#pragma once

#include "segline/detectors.hpp"

#include "json.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace segline {

/// Simulation recipe: column 1 ≡ 1, columns 2..q i.i.d. Normal(predictor_mean,
/// predictor_sd²), errors i.i.d. Normal(0, noise_sd²), and
/// y_i = x_iᵀ(β₀ + Σ_k δ_k·1{a_k < i}) + ε_i.
struct Scenario {
    std::string name = "none";
    std::size_t n = 5000;
    std::size_t q = 3;
    Vector beta0;
    ChangePointTruth truth;
    double predictor_mean = 1.0;
    double predictor_sd = 2.0;
    double noise_sd = 1.0;
    std::uint64_t seed = 1;

    /// Throws std::invalid_argument on inconsistent fields.
    void validate() const;
};

Scenario scenario_none();
/// Nine changes at 500·i with alternating jumps ±(0.5, −0.7, 0.4).
Scenario scenario_cpl1();
/// Nine irregularly spaced changes with the same jumps.
Scenario scenario_cpl2();
/// "none", "cpl1" or "cpl2".
Scenario scenario_by_name(const std::string& name);

/// JSON scenario: {name?, n, q, beta0[], locations[], deltas[[...]], predictor_mean?,
/// predictor_sd?, noise_sd?, seed?}.
Scenario scenario_from_json(const nlohmann::json& j);
nlohmann::json scenario_to_json(const Scenario& s);

std::pair<Dataset, ChangePointTruth> simulate_dataset(const Scenario& s);

inline constexpr std::array<std::size_t, 3> kHitTolerances{0, 5, 10};

struct AlgorithmTally {
    Algorithm algorithm = Algorithm::Ls;
    std::size_t correct_k = 0;
    std::size_t failures = 0;
    /// hits[k][t]: reps whose nearest estimate to true change k lies within kHitTolerances[t].
    std::vector<std::array<std::size_t, 3>> hits;
    /// Count of reps per estimated K̂ (index = K̂, capped at the last bin).
    std::vector<std::size_t> k_hat_histogram;
    double mean_runtime_s = 0.0;
};

struct ReplicationReport {
    Scenario scenario;
    std::size_t reps = 0;
    std::uint64_t base_seed = 0;
    int workers = 1;
    std::vector<AlgorithmTally> tallies;
};

/// Worker count: SEGLINE_WORKERS when set to a positive integer, else the
/// OpenMP default.
int resolve_workers(int requested = 0);

/// Runs every algorithm on reps datasets (seed = base_seed + rep). A run that
/// throws counts as an incorrect detection. The report does not depend on the
/// worker count apart from runtimes.
ReplicationReport run_replications(const Scenario& s, const std::vector<Algorithm>& algorithms,
                                   std::size_t reps, std::uint64_t base_seed,
                                   const DetectorConfig& config = {}, int workers = 0);
/// Serial reference for run_replications.
ReplicationReport run_replications_serial(const Scenario& s, const std::vector<Algorithm>& algorithms,
                                          std::size_t reps, std::uint64_t base_seed,
                                          const DetectorConfig& config = {});

nlohmann::json report_to_json(const ReplicationReport& r);
nlohmann::json config_to_json(const DetectorConfig& c);
nlohmann::json result_to_json(const DetectionResult& r, const Dataset& data, const DetectorConfig& c);

} // namespace segline
