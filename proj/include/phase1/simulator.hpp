#pragma once

// Trial simulation under common random numbers, trajectory metrics and
// ensemble summaries.

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "phase1/core.hpp"
#include "phase1/policy.hpp"
#include "phase1/rng.hpp"

namespace phase1 {

struct TrialSetup {
    int cohorts = 16;
    int cohort_size = 2;
    int start_level = 2;

    void validate(int levels) const;
    std::size_t patients() const noexcept { return static_cast<std::size_t>(cohorts) * cohort_size; }
};

struct Trajectory {
    std::string scenario_id;
    std::string design;
    TrialState state;
    std::optional<int> selected_full;
    std::optional<int> selected_half;  // after cohorts/2
    bool stopped_early = false;
};

/// Runs one trial. Patient i (0-based, chronological) meets threshold
/// stream[i] whatever dose it receives. `design_rng` feeds randomized
/// designs only.
Trajectory run_trial(const DesignConfig& design, const Scenario& scenario, const ThresholdStream& stream,
                     const TrialSetup& setup, Rng& design_rng, std::string scenario_id = {});
Trajectory run_trial(const DesignConfig& design, const Scenario& scenario, const ThresholdStream& stream,
                     const TrialSetup& setup);

/// `n` i.i.d. open-uniform thresholds.
ThresholdStream random_threshold_stream(std::size_t n, Rng& rng);

/// Quantiles i/(n+1), i = 1..n, minus the tightest bracket around p,
/// plus second copies of 1/(n+1) and n/(n+1). Returned sorted.
ThresholdStream perfect_threshold_set(int n, double p);

struct RunMetrics {
    std::size_t run_id = 0;
    std::string scenario_id;
    std::string design;
    int true_mtd = 0;
    int cohorts = 0;
    int n_star = 0;
    std::optional<int> settling_cohort;
    std::optional<int> settled_level;
    int incoherent = 0;
    int total_dlts = 0;
    int dlts_after_first = 0;
    std::optional<int> selected_half;
    std::optional<int> selected_full;

    bool correct_half() const noexcept { return selected_half && *selected_half == true_mtd; }
    bool correct_full() const noexcept { return selected_full && *selected_full == true_mtd; }
    bool operator==(const RunMetrics&) const = default;
};

/// Run length over which settling is sought.
inline constexpr int kSettlingWindow = 5;

struct Settling {
    int cohort = 0;  // 1-based cohort completing the window
    int level = 0;
};

/// First window of kSettlingWindow identical assignments among cohorts 2..N.
std::optional<Settling> find_settling(std::span<const CohortRecord> cohorts);

RunMetrics compute_metrics(const Trajectory& traj, int true_mtd);

/// Fisher-Yates shuffle of the stream driven by `rng`.
ThresholdStream permute_stream(const ThresholdStream& base, Rng& rng);

/// M runs on uniform random permutations of the perfect set of size
/// setup.patients(). Permutations are drawn from `rng` in run order.
std::vector<RunMetrics> run_permutation_ensemble(const DesignConfig& design, const Scenario& scenario,
                                                 const TrialSetup& setup, int runs, Rng& rng, int jobs = 1);

struct EnsembleJob {
    std::vector<DesignConfig> designs;
    std::vector<Scenario> scenarios;
    std::vector<std::string> scenario_ids;  // optional; defaults to "s<index>"
    int runs_per_scenario = 1;
    TrialSetup setup;
    std::uint64_t seed = 0;
    int jobs = 1;
};

/// Runs every design on every (scenario, replicate). Run index
/// s * runs_per_scenario + rep seeds that run's thresholds, shared across
/// designs. Result[d] lists design d's runs in run-index order.
std::vector<std::vector<RunMetrics>> run_ensemble(const EnsembleJob& job);

/// Calls fn(i) for i in [0, count) on up to `jobs` threads.
template <class Fn>
void parallel_for(std::size_t count, int jobs, Fn&& fn);

struct SummaryOptions {
    int cohorts = 16;
    int levels = 6;
    /// Cut on DLTs after the first cohort. Default: 9 (l=7), 10 (l=4),
    /// else ceil(0.4 (N-1)).
    std::optional<int> high_toxicity_above;

    int toxicity_threshold() const;
};

enum class SettlingStage : std::uint8_t { By8, By12, By16, Later };
inline constexpr std::array<const char*, 4> kSettlingStageNames{"by_8", "9_to_12", "13_to_16", "later_or_never"};

SettlingStage settling_stage(std::optional<int> settling_cohort);

struct EnsembleReport {
    std::string design;
    int runs = 0;
    int cohorts = 0;
    int levels = 0;
    double success_half = 0.0;
    double success_full = 0.0;
    double high_n_star = 0.0;
    double low_n_star = 0.0;
    double high_toxicity = 0.0;
    double incoherent_runs = 0.0;
    double n_star_mean = 0.0;
    double n_star_variance = 0.0;  // population variance
    std::vector<int> n_star_histogram;  // index = n* value, size cohorts
    std::array<std::array<int, 2>, 4> settling{};  // [stage][correct]
    double settled_by(int cohort) const;
    std::vector<int> settling_cohorts;  // sorted, settled runs only
};

/// Throws InvalidArgument on an empty ensemble.
EnsembleReport summarize_ensemble(std::span<const RunMetrics> runs, const SummaryOptions& options);

}  // namespace phase1

#include "phase1/detail/parallel.hpp"
