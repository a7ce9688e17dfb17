#pragma once

// Domain types shared by every module: dose grids, scenarios, threshold
// streams, cohort records and the accumulated trial state.
//
// Dose levels are 1-based throughout the public API (level 1 is the lowest
// dose), matching the way trial protocols number them.

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace phase1 {

enum class ErrorCode : std::uint8_t {
    InvalidArgument,
    NonMonotone,
    OutOfRange,
    TieForMtd,
    LengthMismatch,
    CohortSizeMismatch,
    MalformedHistory,
    NoObservations,
    QuadratureFailure,
    Infeasible,
    GeneratorStarved,
    StreamExhausted,
};

const char* to_string(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(what), code_(code) {}
    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

class DoseGrid {
public:
    /// Evenly spaced numeric doses u/l for u = 1..l.
    explicit DoseGrid(int levels);
    /// Explicit numeric doses; must be strictly increasing.
    explicit DoseGrid(std::vector<double> dose_values);

    int levels() const noexcept { return static_cast<int>(doses_.size()); }
    double dose(int level) const;
    std::span<const double> doses() const noexcept { return doses_; }
    bool contains(int level) const noexcept { return level >= 1 && level <= levels(); }
    int clamp(int level) const noexcept;

    bool operator==(const DoseGrid&) const = default;

private:
    std::vector<double> doses_;
};

class Scenario {
public:
    Scenario(DoseGrid grid, std::vector<double> f, double target, int true_mtd);

    const DoseGrid& grid() const noexcept { return grid_; }
    int levels() const noexcept { return grid_.levels(); }
    std::span<const double> f() const noexcept { return f_; }
    double f_at(int level) const;
    double target() const noexcept { return target_; }
    int true_mtd() const noexcept { return true_mtd_; }

private:
    DoseGrid grid_;
    std::vector<double> f_;
    double target_;
    int true_mtd_;
};

/// Checks monotonicity, range and MTD uniqueness and returns the scenario
/// with its true MTD computed as argmin |f - target|.
Scenario validate_scenario(std::vector<double> f, double target);
Scenario validate_scenario(DoseGrid grid, std::vector<double> f, double target);

enum class StreamProvenance : std::uint8_t { RandomDraw, PermutedFixedSet };

class ThresholdStream {
public:
    ThresholdStream(std::vector<double> q, StreamProvenance provenance);

    std::size_t size() const noexcept { return q_.size(); }
    double operator[](std::size_t i) const { return q_[i]; }
    std::span<const double> values() const noexcept { return q_; }
    StreamProvenance provenance() const noexcept { return provenance_; }

private:
    std::vector<double> q_;
    StreamProvenance provenance_;
};

/// True iff the patient with quantile threshold q is toxic at `level`
/// (q <= F at that level; the boundary counts as a toxicity).
bool toxicity_outcome(double q, int level, const Scenario& scenario);

struct CohortRecord {
    int index = 0;  // 1-based chronological position
    int level = 0;
    int size = 0;
    int dlts = 0;

    bool operator==(const CohortRecord&) const = default;
};

/// Chronological cohort list with per-level tallies derived from it.
class TrialState {
public:
    TrialState(DoseGrid grid, double target);

    const DoseGrid& grid() const noexcept { return grid_; }
    int levels() const noexcept { return grid_.levels(); }
    double target() const noexcept { return target_; }

    std::span<const CohortRecord> cohorts() const noexcept { return cohorts_; }
    std::size_t cohort_count() const noexcept { return cohorts_.size(); }
    bool empty() const noexcept { return cohorts_.empty(); }
    const CohortRecord& last() const;
    int current_level() const;

    /// Appends a cohort; `index` is assigned automatically.
    void add_cohort(int level, int size, int dlts);
    /// Copy holding only the first `count` cohorts.
    TrialState prefix(std::size_t count) const;

    int n_at(int level) const;
    int dlts_at(int level) const;
    std::optional<double> rate_at(int level) const;
    std::span<const int> n() const noexcept { return n_; }
    std::span<const int> r() const noexcept { return r_; }
    int total_patients() const noexcept { return total_n_; }
    int total_dlts() const noexcept { return total_r_; }

private:
    DoseGrid grid_;
    double target_;
    std::vector<CohortRecord> cohorts_;
    std::vector<int> n_;
    std::vector<int> r_;
    int total_n_ = 0;
    int total_r_ = 0;
};

/// Outcome of a dose-transition rule: treat the next cohort at a level, or
/// stop (optionally carrying the design's own MTD estimate).
struct DesignAction {
    enum class Kind : std::uint8_t { NextDose, Stop };

    Kind kind = Kind::NextDose;
    int level = 0;                        // NextDose target
    std::optional<int> selected;          // Stop estimate, if any

    static DesignAction next(int level) { return {Kind::NextDose, level, std::nullopt}; }
    static DesignAction stop(std::optional<int> selected) { return {Kind::Stop, 0, selected}; }
    bool is_stop() const noexcept { return kind == Kind::Stop; }

    bool operator==(const DesignAction&) const = default;
};

}  // namespace phase1
