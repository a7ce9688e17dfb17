#include "phase1/core.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace phase1 {

const char* to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::NonMonotone: return "NonMonotone";
        case ErrorCode::OutOfRange: return "OutOfRange";
        case ErrorCode::TieForMtd: return "TieForMtd";
        case ErrorCode::LengthMismatch: return "LengthMismatch";
        case ErrorCode::CohortSizeMismatch: return "CohortSizeMismatch";
        case ErrorCode::MalformedHistory: return "MalformedHistory";
        case ErrorCode::NoObservations: return "NoObservations";
        case ErrorCode::QuadratureFailure: return "QuadratureFailure";
        case ErrorCode::Infeasible: return "Infeasible";
        case ErrorCode::GeneratorStarved: return "GeneratorStarved";
        case ErrorCode::StreamExhausted: return "StreamExhausted";
    }
    return "Unknown";
}

DoseGrid::DoseGrid(int levels) {
    if (levels < 2) {
        throw Error(ErrorCode::InvalidArgument, "dose grid needs at least 2 levels");
    }
    doses_.resize(static_cast<std::size_t>(levels));
    for (int u = 1; u <= levels; ++u) {
        doses_[static_cast<std::size_t>(u - 1)] = static_cast<double>(u) / levels;
    }
}

DoseGrid::DoseGrid(std::vector<double> dose_values) : doses_(std::move(dose_values)) {
    if (doses_.size() < 2) {
        throw Error(ErrorCode::InvalidArgument, "dose grid needs at least 2 levels");
    }
    for (std::size_t i = 0; i < doses_.size(); ++i) {
        if (!std::isfinite(doses_[i])) {
            throw Error(ErrorCode::InvalidArgument, "dose values must be finite");
        }
        if (i > 0 && !(doses_[i] > doses_[i - 1])) {
            throw Error(ErrorCode::NonMonotone, "dose values must be strictly increasing");
        }
    }
}

double DoseGrid::dose(int level) const {
    if (!contains(level)) {
        throw Error(ErrorCode::OutOfRange, "dose level " + std::to_string(level) + " out of range");
    }
    return doses_[static_cast<std::size_t>(level - 1)];
}

int DoseGrid::clamp(int level) const noexcept { return std::clamp(level, 1, levels()); }

Scenario::Scenario(DoseGrid grid, std::vector<double> f, double target, int true_mtd)
    : grid_(std::move(grid)), f_(std::move(f)), target_(target), true_mtd_(true_mtd) {}

double Scenario::f_at(int level) const {
    if (!grid_.contains(level)) {
        throw Error(ErrorCode::OutOfRange, "dose level " + std::to_string(level) + " out of range");
    }
    return f_[static_cast<std::size_t>(level - 1)];
}

Scenario validate_scenario(std::vector<double> f, double target) {
    if (f.size() < 2) {
        throw Error(ErrorCode::InvalidArgument, "scenario needs at least 2 levels");
    }
    DoseGrid grid(static_cast<int>(f.size()));
    return validate_scenario(std::move(grid), std::move(f), target);
}

Scenario validate_scenario(DoseGrid grid, std::vector<double> f, double target) {
    if (static_cast<int>(f.size()) != grid.levels()) {
        throw Error(ErrorCode::LengthMismatch, "toxicity vector length differs from grid size");
    }
    if (!(target > 0.0 && target < 1.0)) {
        throw Error(ErrorCode::OutOfRange, "target must lie in (0,1)");
    }
    for (std::size_t i = 0; i < f.size(); ++i) {
        if (!(f[i] > 0.0 && f[i] < 1.0)) {
            std::ostringstream os;
            os << "toxicity probability at level " << i + 1 << " = " << f[i] << " outside (0,1)";
            throw Error(ErrorCode::OutOfRange, os.str());
        }
        if (i > 0 && !(f[i] > f[i - 1])) {
            std::ostringstream os;
            os << "toxicity probabilities not strictly increasing at level " << i + 1;
            throw Error(ErrorCode::NonMonotone, os.str());
        }
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < f.size(); ++i) {
        if (std::abs(f[i] - target) < std::abs(f[best] - target)) best = i;
    }
    const double best_dist = std::abs(f[best] - target);
    for (std::size_t i = 0; i < f.size(); ++i) {
        if (i != best && std::abs(std::abs(f[i] - target) - best_dist) <= 1e-12) {
            throw Error(ErrorCode::TieForMtd,
                        "levels " + std::to_string(best + 1) + " and " + std::to_string(i + 1) +
                            " are equidistant from the target");
        }
    }
    return Scenario(std::move(grid), std::move(f), target, static_cast<int>(best) + 1);
}

ThresholdStream::ThresholdStream(std::vector<double> q, StreamProvenance provenance)
    : q_(std::move(q)), provenance_(provenance) {
    for (double v : q_) {
        if (!(v > 0.0 && v < 1.0)) {
            throw Error(ErrorCode::OutOfRange, "threshold quantiles must lie in (0,1)");
        }
    }
}

bool toxicity_outcome(double q, int level, const Scenario& scenario) {
    return q <= scenario.f_at(level);
}

TrialState::TrialState(DoseGrid grid, double target)
    : grid_(std::move(grid)),
      target_(target),
      n_(static_cast<std::size_t>(grid_.levels()), 0),
      r_(static_cast<std::size_t>(grid_.levels()), 0) {
    if (!(target > 0.0 && target < 1.0)) {
        throw Error(ErrorCode::OutOfRange, "target must lie in (0,1)");
    }
}

const CohortRecord& TrialState::last() const {
    if (cohorts_.empty()) throw Error(ErrorCode::NoObservations, "trial has no cohorts yet");
    return cohorts_.back();
}

int TrialState::current_level() const { return last().level; }

void TrialState::add_cohort(int level, int size, int dlts) {
    if (!grid_.contains(level)) {
        throw Error(ErrorCode::OutOfRange, "cohort level " + std::to_string(level) + " out of range");
    }
    if (size < 1 || dlts < 0 || dlts > size) {
        throw Error(ErrorCode::OutOfRange, "cohort counts must satisfy 0 <= dlts <= size, size >= 1");
    }
    const int index = static_cast<int>(cohorts_.size()) + 1;
    cohorts_.push_back(CohortRecord{index, level, size, dlts});
    n_[static_cast<std::size_t>(level - 1)] += size;
    r_[static_cast<std::size_t>(level - 1)] += dlts;
    total_n_ += size;
    total_r_ += dlts;
}

TrialState TrialState::prefix(std::size_t count) const {
    TrialState out(grid_, target_);
    const std::size_t m = std::min(count, cohorts_.size());
    for (std::size_t i = 0; i < m; ++i) {
        out.add_cohort(cohorts_[i].level, cohorts_[i].size, cohorts_[i].dlts);
    }
    return out;
}

int TrialState::n_at(int level) const {
    if (!grid_.contains(level)) throw Error(ErrorCode::OutOfRange, "level out of range");
    return n_[static_cast<std::size_t>(level - 1)];
}

int TrialState::dlts_at(int level) const {
    if (!grid_.contains(level)) throw Error(ErrorCode::OutOfRange, "level out of range");
    return r_[static_cast<std::size_t>(level - 1)];
}

std::optional<double> TrialState::rate_at(int level) const {
    const int n = n_at(level);
    if (n == 0) return std::nullopt;
    return static_cast<double>(dlts_at(level)) / n;
}

}  // namespace phase1
