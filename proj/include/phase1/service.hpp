#pragma once

// Live trial conduct: sessions that accept cohort outcomes one at a time and
// return the design's recommendation with diagnostics. HTTP-agnostic; the
// server binary maps ServiceError::status() onto response codes.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "phase1/io.hpp"

namespace phase1 {

class ServiceError : public std::runtime_error {
public:
    ServiceError(int status, const std::string& what) : std::runtime_error(what), status_(status) {}
    int status() const noexcept { return status_; }

private:
    int status_;
};

/// Validated session configuration.
/// Wire form: {"design": {...}, "levels": l | "doses": [...], "target": p,
/// "start_level": u, "cohort_size": k?, "max_cohorts": N?, "seed": s?}.
struct TrialConfig {
    DesignConfig design;
    DoseGrid grid;
    double target = 0.3;
    int start_level = 1;
    std::optional<int> cohort_size;
    std::optional<int> max_cohorts;
    std::uint64_t seed = 0;

    static TrialConfig from_json(const Json& j);  // ServiceError 400 on any problem
    Json to_json() const;
};

class TrialSession {
public:
    TrialSession(std::string id, TrialConfig config);

    const std::string& id() const noexcept { return id_; }
    const TrialConfig& config() const noexcept { return config_; }
    const TrialState& state() const noexcept { return state_; }
    bool stopped() const noexcept { return stopped_; }
    const Json& current() const noexcept { return current_; }
    const std::vector<Json>& events() const noexcept { return events_; }

    /// Result of adding the cohort, without committing it.
    Json preview(const Json& cohort) const;
    /// Adds the cohort and returns the new recommendation; the appended
    /// event is events().back().
    Json commit(const Json& cohort);

    Json snapshot() const;
    Json posterior() const;

private:
    struct Outcome {
        TrialState state;
        Json result;
        bool stopped = false;
    };
    Outcome evaluate(const Json& cohort) const;
    Json diagnose(const TrialState& state, const std::optional<CohortRecord>& posted, bool& stopped) const;

    std::string id_;
    TrialConfig config_;
    TrialState state_;
    bool stopped_ = false;
    Json current_;
    std::vector<Json> history_;
    std::vector<Json> events_;
};

/// Posterior or isotonic fitted curve for a state, at the grid levels plus
/// `dense_points` evenly spaced doses across the grid range.
Json fitted_curve(const DesignConfig& design, const TrialState& state, int dense_points = 50);

class TrialService {
public:
    /// Empty data_dir keeps sessions in memory only. Otherwise every
    /// session log found there is replayed on construction.
    explicit TrialService(std::filesystem::path data_dir = {});

    Json create_trial(const Json& config);
    Json post_cohort(const std::string& id, const Json& cohort);
    Json what_if(const std::string& id, const Json& cohort) const;
    Json get_state(const std::string& id) const;
    Json recommendation(const std::string& id) const;
    Json posterior(const std::string& id) const;
    std::vector<std::string> ids() const;

    /// Rebuilds a session from its event log, checking every logged
    /// recommendation against a fresh computation. Throws on divergence.
    static std::unique_ptr<TrialSession> replay(std::istream& log);

private:
    struct Entry {
        std::unique_ptr<TrialSession> session;
        mutable std::mutex mutex;
    };
    Entry& find(const std::string& id) const;
    void persist(const std::string& id, const Json& event) const;

    std::filesystem::path data_dir_;
    mutable std::shared_mutex map_mutex_;
    std::map<std::string, std::unique_ptr<Entry>> sessions_;
    std::uint64_t next_id_ = 1;
};

}  // namespace phase1
