#pragma once

// JSON and CSV formats shared by the CLI and the trial service.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "phase1/core.hpp"
#include "phase1/policy.hpp"
#include "phase1/scenarios.hpp"
#include "phase1/simulator.hpp"

namespace phase1 {

using Json = nlohmann::json;

/// File-system failures (exit code 4 in the CLI).
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

Json scenario_to_json(const Scenario& s);
/// Accepts {"f": [...], "target": p} plus optional "doses"; "levels" and
/// "true_mtd" are checked when present.
Scenario scenario_from_json(const Json& j);

/// Design wire format; see docs/formats.md. CCD takes its target from
/// `target` unless the object sets one.
DesignConfig design_from_json(const Json& j, double target);
Json design_to_json(const DesignConfig& d);

struct ScenarioRecord {
    std::string id;
    Scenario scenario;
};

/// JSON-lines: a header object then one scenario per line.
void write_scenario_file(std::ostream& out, const std::vector<Scenario>& scenarios, const Json& header);
std::vector<ScenarioRecord> read_scenario_file(std::istream& in, Json* header = nullptr);

enum class ScenarioSource { Fixed, File, Random };

struct RunSpec {
    std::vector<DesignConfig> designs;
    ScenarioSource source = ScenarioSource::Fixed;
    std::string scenario_file;
    int levels = 6;                 // random source
    std::vector<int> quotas;        // random source
    bool post_filter = true;        // random source
    double target = 0.3;
    int runs = 1000;                // per scenario
    TrialSetup setup;
    std::optional<std::uint64_t> seed;
    std::string output_dir = ".";
    int jobs = 1;

    static RunSpec from_json(const Json& j);
    Json to_json() const;
};

Json report_to_json(const EnsembleReport& r);
/// One row per run: run_id, scenario_id, design, n_star, settling_cohort,
/// incoherent, dlts, selected_half, selected_full, correct_half, correct_full.
void write_runs_csv(std::ostream& out, const std::vector<RunMetrics>& runs, bool header = true);
/// n_star_value, count.
void write_histogram_csv(std::ostream& out, const EnsembleReport& r);
Json run_to_json(const RunMetrics& m);

Json read_json_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

}  // namespace phase1
