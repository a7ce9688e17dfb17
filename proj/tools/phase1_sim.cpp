// Batch simulator: scenario generation, ensembles, permutation experiment
// and report regeneration.

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "phase1/io.hpp"
#include "phase1/scenarios.hpp"
#include "phase1/simulator.hpp"

namespace fs = std::filesystem;
using namespace phase1;

namespace {

enum Exit { kOk = 0, kConfig = 2, kStarved = 3, kIo = 4 };

std::vector<int> default_quotas(int levels) {
    if (levels == 7) return {200, 320, 320, 320, 320, 320, 200};
    if (levels == 4) return {400, 600, 600, 400};
    return std::vector<int>(static_cast<std::size_t>(levels), 100);
}

DesignConfig default_crm(int levels) {
    if (levels == 7) {
        return {"crm", CrmConfig{DoseToxModel::power(Skeleton({0.05, 0.10, 0.20, 0.30, 0.50, 0.65, 0.80})),
                                 LogNormalPrior{0.0, std::sqrt(1.34)}}};
    }
    if (levels == 4) {
        return {"crm", CrmConfig{DoseToxModel::power(Skeleton({0.05, 0.20, 0.40, 0.80})),
                                 LogNormalPrior{0.0, std::sqrt(1.8)}}};
    }
    if (levels == 6) {
        return {"crm", CrmConfig{DoseToxModel::power(Skeleton({0.05, 0.11, 0.22, 0.40, 0.60, 0.78})), kPriorA}};
    }
    throw Error(ErrorCode::InvalidArgument, "no default CRM skeleton for " + std::to_string(levels) + " levels");
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

std::string safe(std::string s) {
    for (char& c : s) {
        if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_') c = '_';
    }
    return s;
}

struct Group {
    std::string design;
    std::string scenario;  // "all" for pooled
    std::vector<RunMetrics> runs;
};

std::vector<Group> group_runs(const std::vector<std::vector<RunMetrics>>& by_design, bool per_scenario) {
    std::vector<Group> out;
    for (const auto& runs : by_design) {
        if (runs.empty()) continue;
        out.push_back({runs.front().design, "all", runs});
        if (!per_scenario) continue;
        std::vector<std::string> order;
        std::map<std::string, std::vector<RunMetrics>> split;
        for (const RunMetrics& m : runs) {
            if (!split.count(m.scenario_id)) order.push_back(m.scenario_id);
            split[m.scenario_id].push_back(m);
        }
        for (const auto& id : order) out.push_back({runs.front().design, id, split[id]});
    }
    return out;
}

const char* kSummaryHeader =
    "design,scenario,runs,success_half,success_full,high_n_star,low_n_star,high_toxicity,incoherent_runs,"
    "n_star_mean,n_star_variance,settled_by_8,settled_by_12\n";

std::string summary_row(const Group& g, const EnsembleReport& r) {
    return g.design + ',' + g.scenario + ',' + std::to_string(r.runs) + ',' + fmt(r.success_half) + ',' +
           fmt(r.success_full) + ',' + fmt(r.high_n_star) + ',' + fmt(r.low_n_star) + ',' + fmt(r.high_toxicity) +
           ',' + fmt(r.incoherent_runs) + ',' + fmt(r.n_star_mean) + ',' + fmt(r.n_star_variance) + ',' +
           fmt(r.settled_by(8)) + ',' + fmt(r.settled_by(12)) + '\n';
}

// Writes runs, summaries and histograms in the requested format.
void emit(const fs::path& dir, const std::string& format, const Json& spec_json,
          const std::vector<std::vector<RunMetrics>>& by_design, bool per_scenario, const SummaryOptions& opts) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory '" + dir.string() + "'");
    const auto groups = group_runs(by_design, per_scenario);
    if (format == "json") {
        Json reports = Json::array();
        for (const Group& g : groups) {
            Json r = report_to_json(summarize_ensemble(g.runs, opts));
            r["scenario"] = g.scenario;
            reports.push_back(r);
        }
        Json runs = Json::array();
        for (const auto& d : by_design) {
            for (const RunMetrics& m : d) runs.push_back(run_to_json(m));
        }
        Json doc{{"spec", spec_json}, {"reports", reports}, {"runs", runs}};
        write_text_file((dir / "report.json").string(), doc.dump(2) + "\n");
        return;
    }
    std::ostringstream runs_csv;
    bool header = true;
    for (const auto& d : by_design) {
        write_runs_csv(runs_csv, d, header);
        header = false;
    }
    if (header) write_runs_csv(runs_csv, {}, true);
    write_text_file((dir / "runs.csv").string(), runs_csv.str());
    std::string summary = kSummaryHeader;
    for (const Group& g : groups) {
        const EnsembleReport r = summarize_ensemble(g.runs, opts);
        summary += summary_row(g, r);
        std::ostringstream hist;
        write_histogram_csv(hist, r);
        write_text_file((dir / ("histogram_" + safe(g.design) + "_" + safe(g.scenario) + ".csv")).string(), hist.str());
    }
    write_text_file((dir / "summary.csv").string(), summary);
    write_text_file((dir / "spec.json").string(), spec_json.dump(2) + "\n");
}

int with_exit_codes(const std::function<void()>& body) {
    try {
        body();
        return kOk;
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << '\n';
        return kIo;
    } catch (const Error& e) {
        std::cerr << (e.code() == ErrorCode::GeneratorStarved ? "generator starved: " : "config error: ") << e.what()
                  << '\n';
        return e.code() == ErrorCode::GeneratorStarved ? kStarved : kConfig;
    } catch (const Json::exception& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfig;
    }
}

Json parse_json_arg(const std::string& text) {
    // Either inline JSON or a path to a JSON file.
    const auto first = text.find_first_not_of(" \t\n");
    if (first != std::string::npos && (text[first] == '{' || text[first] == '[')) {
        try {
            return Json::parse(text);
        } catch (const Json::exception& e) {
            throw Error(ErrorCode::InvalidArgument, std::string("inline JSON: ") + e.what());
        }
    }
    return read_json_file(text);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Phase I dose-finding simulator"};
    app.require_subcommand(1);

    // gen-scenarios
    auto* gen = app.add_subcommand("gen-scenarios", "Stratified random scenario ensemble (JSON-lines)");
    int gen_levels = 7;
    std::vector<int> gen_quotas;
    std::optional<std::uint64_t> gen_seed;
    std::string gen_out;
    bool gen_no_filter = false;
    long long gen_attempts = 100000;
    double gen_target = 0.3;
    gen->add_option("--levels", gen_levels, "Number of dose levels");
    gen->add_option("--quotas", gen_quotas, "Scenarios per true-MTD level");
    gen->add_option("--seed", gen_seed, "Master seed (required)");
    gen->add_option("--target", gen_target, "Target toxicity rate");
    gen->add_option("--out", gen_out, "Output file")->required();
    gen->add_flag("--no-post-filter", gen_no_filter, "Skip the MTD-window post-filter");
    gen->add_option("--max-attempts", gen_attempts, "Rejections allowed per scenario");

    // run
    auto* run = app.add_subcommand("run", "Ensembles for every design on every scenario");
    std::string run_config;
    std::optional<std::uint64_t> run_seed;
    std::optional<int> run_jobs, run_runs, run_cohorts, run_size, run_start;
    std::optional<std::string> run_out, run_scenarios;
    std::vector<std::string> run_designs;
    std::string run_format = "csv";
    run->add_option("--config", run_config, "Run spec JSON file");
    run->add_option("--seed", run_seed, "Master seed (required here or in the config)");
    run->add_option("--jobs", run_jobs, "Worker threads");
    run->add_option("--runs", run_runs, "Runs per scenario");
    run->add_option("--cohorts", run_cohorts, "Cohorts per run");
    run->add_option("--cohort-size", run_size, "Patients per cohort");
    run->add_option("--start-level", run_start, "Starting dose level");
    run->add_option("--scenarios", run_scenarios, "fixed | random:<levels> | path to a scenario file");
    run->add_option("--design", run_designs, "Design JSON (inline or file); repeatable");
    run->add_option("--out", run_out, "Output directory");
    run->add_option("--format", run_format, "csv | json")->check(CLI::IsMember({"csv", "json"}));

    // permute
    auto* perm = app.add_subcommand("permute", "Order-sensitivity experiment on a permuted fixed threshold set");
    std::string perm_design, perm_scenario = "normal", perm_out = ".", perm_format = "csv";
    std::optional<std::uint64_t> perm_seed;
    int perm_runs = 1000, perm_jobs = 1;
    TrialSetup perm_setup{16, 2, 2};
    perm->add_option("--design", perm_design, "Design JSON (inline or file); default CRM prior A");
    perm->add_option("--scenario", perm_scenario, "Calibrated family name or scenario JSON file");
    perm->add_option("--runs", perm_runs, "Number of permutations");
    perm->add_option("--seed", perm_seed, "Master seed (required)");
    perm->add_option("--jobs", perm_jobs, "Worker threads");
    perm->add_option("--cohorts", perm_setup.cohorts, "Cohorts per run");
    perm->add_option("--cohort-size", perm_setup.cohort_size, "Patients per cohort");
    perm->add_option("--start-level", perm_setup.start_level, "Starting dose level");
    perm->add_option("--out", perm_out, "Output directory");
    perm->add_option("--format", perm_format, "csv | json")->check(CLI::IsMember({"csv", "json"}));

    // report
    auto* rep = app.add_subcommand("report", "Re-summarize the runs stored in a JSON report");
    std::string rep_input, rep_format = "csv";
    rep->add_option("--input", rep_input, "report.json written by run or permute --format json")->required();
    rep->add_option("--format", rep_format, "csv | json")->check(CLI::IsMember({"csv", "json"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kConfig;
    }

    if (gen->parsed()) {
        return with_exit_codes([&] {
            if (!gen_seed) throw Error(ErrorCode::InvalidArgument, "--seed is required");
            SceneConfig cfg = SceneConfig::defaults(gen_levels);
            cfg.targ = gen_target;
            cfg.max_attempts = gen_attempts;
            if (!gen_no_filter) cfg.post_filter = PostFilter::for_levels(gen_levels);
            if (gen_quotas.empty()) gen_quotas = default_quotas(gen_levels);
            Rng rng(derive_seed(*gen_seed, 0, StreamTag::Scenario));
            const auto scenarios = stratified_ensemble(cfg, gen_quotas, rng);
            Json header{{"seed", *gen_seed},
                        {"levels", gen_levels},
                        {"target", gen_target},
                        {"quotas", gen_quotas},
                        {"post_filter", !gen_no_filter},
                        {"count", scenarios.size()}};
            std::ostringstream out;
            write_scenario_file(out, scenarios, header);
            write_text_file(gen_out, out.str());
        });
    }

    if (run->parsed()) {
        return with_exit_codes([&] {
            RunSpec spec = run_config.empty() ? RunSpec{} : RunSpec::from_json(read_json_file(run_config));
            if (run_seed) spec.seed = run_seed;
            if (run_jobs) spec.jobs = *run_jobs;
            if (run_runs) spec.runs = *run_runs;
            if (run_cohorts) spec.setup.cohorts = *run_cohorts;
            if (run_size) spec.setup.cohort_size = *run_size;
            if (run_start) spec.setup.start_level = *run_start;
            if (run_out) spec.output_dir = *run_out;
            if (run_scenarios) {
                const std::string& s = *run_scenarios;
                if (s == "fixed") {
                    spec.source = ScenarioSource::Fixed;
                } else if (s.rfind("random:", 0) == 0) {
                    spec.source = ScenarioSource::Random;
                    spec.levels = std::stoi(s.substr(7));
                    spec.quotas.clear();
                } else {
                    spec.source = ScenarioSource::File;
                    spec.scenario_file = s;
                }
            }
            if (!run_designs.empty()) {
                spec.designs.clear();
                for (const auto& d : run_designs) spec.designs.push_back(design_from_json(parse_json_arg(d), spec.target));
            }
            if (!spec.seed) throw Error(ErrorCode::InvalidArgument, "--seed is required in batch mode");
            if (spec.runs < 0) throw Error(ErrorCode::InvalidArgument, "--runs must be nonnegative");

            std::vector<Scenario> scenarios;
            std::vector<std::string> ids;
            switch (spec.source) {
                case ScenarioSource::Fixed:
                    for (const auto& c : standard_fixed_scenarios(spec.target)) {
                        scenarios.push_back(c.scenario);
                        ids.push_back(to_string(c.family.tag));
                    }
                    break;
                case ScenarioSource::File: {
                    std::ifstream in(spec.scenario_file);
                    if (!in) throw IoError("cannot open '" + spec.scenario_file + "'");
                    for (auto& rec : read_scenario_file(in)) {
                        ids.push_back(rec.id);
                        scenarios.push_back(std::move(rec.scenario));
                    }
                    break;
                }
                case ScenarioSource::Random: {
                    SceneConfig cfg = SceneConfig::defaults(spec.levels);
                    cfg.targ = spec.target;
                    if (spec.post_filter) cfg.post_filter = PostFilter::for_levels(spec.levels);
                    if (spec.quotas.empty()) spec.quotas = default_quotas(spec.levels);
                    Rng rng(derive_seed(*spec.seed, 0, StreamTag::Scenario));
                    scenarios = stratified_ensemble(cfg, spec.quotas, rng);
                    break;
                }
            }
            const int levels = scenarios.empty() ? spec.levels : scenarios.front().levels();
            for (const Scenario& s : scenarios) {
                if (s.levels() != levels) throw Error(ErrorCode::LengthMismatch, "scenarios differ in level count");
            }
            if (spec.designs.empty()) {
                spec.designs.push_back(default_crm(levels));
                spec.designs.push_back({"ccd", CcdRule{spec.target, 0.1}});
                if (spec.setup.cohort_size == 1) spec.designs.push_back({"kinrow", KInARowRule{2}});
                else if (spec.setup.cohort_size == 2) spec.designs.push_back({"group_ud", GroupUdRule{2, 0, 1}});
            }
            EnsembleJob job{spec.designs, scenarios, ids, spec.runs, spec.setup, *spec.seed, spec.jobs};
            const auto results = run_ensemble(job);
            const bool per_scenario = spec.runs > 1 && scenarios.size() > 1;
            // Thread count and destination do not affect results; leave them out so
            // outputs compare byte-for-byte across machines.
            Json recorded = spec.to_json();
            recorded.erase("jobs");
            recorded.erase("output_dir");
            emit(spec.output_dir, run_format, recorded, results, per_scenario,
                 SummaryOptions{spec.setup.cohorts, levels, std::nullopt});
        });
    }

    if (perm->parsed()) {
        return with_exit_codes([&] {
            if (!perm_seed) throw Error(ErrorCode::InvalidArgument, "--seed is required");
            std::optional<Scenario> scenario;
            std::string scenario_id = perm_scenario;
            for (const auto& c : standard_fixed_scenarios()) {
                if (to_string(c.family.tag) == perm_scenario) scenario = c.scenario;
            }
            if (!scenario) {
                scenario = scenario_from_json(read_json_file(perm_scenario));
                scenario_id = "file";
            }
            const DesignConfig design = perm_design.empty()
                                            ? default_crm(scenario->levels())
                                            : design_from_json(parse_json_arg(perm_design), scenario->target());
            Rng rng(derive_seed(*perm_seed, 0, StreamTag::Permutation));
            auto runs = run_permutation_ensemble(design, *scenario, perm_setup, perm_runs, rng, perm_jobs);
            for (RunMetrics& m : runs) {
                m.scenario_id = scenario_id;
                m.design = design.name;
            }
            Json spec{{"design", design_to_json(design)},
                      {"scenario", scenario_to_json(*scenario)},
                      {"runs", perm_runs},
                      {"seed", *perm_seed},
                      {"cohorts", perm_setup.cohorts},
                      {"cohort_size", perm_setup.cohort_size},
                      {"start_level", perm_setup.start_level},
                      {"thresholds", "permuted-fixed-set"}};
            emit(perm_out, perm_format, spec, {runs}, false,
                 SummaryOptions{perm_setup.cohorts, scenario->levels(), std::nullopt});
        });
    }

    if (rep->parsed()) {
        return with_exit_codes([&] {
            const Json doc = read_json_file(rep_input);
            const Json& spec = doc.at("spec");
            const int cohorts = spec.at("cohorts").get<int>();
            std::map<std::string, std::vector<RunMetrics>> by_design;
            std::vector<std::string> order;
            int levels = 0;
            for (const Json& r : doc.at("runs")) {
                RunMetrics m;
                m.run_id = r.at("run_id").get<std::size_t>();
                m.scenario_id = r.at("scenario_id").get<std::string>();
                m.design = r.at("design").get<std::string>();
                m.true_mtd = r.at("true_mtd").get<int>();
                m.n_star = r.at("n_star").get<int>();
                if (!r.at("settling_cohort").is_null()) m.settling_cohort = r.at("settling_cohort").get<int>();
                m.incoherent = r.at("incoherent").get<int>();
                m.total_dlts = r.at("dlts").get<int>();
                m.dlts_after_first = r.at("dlts_after_first").get<int>();
                if (!r.at("selected_half").is_null()) m.selected_half = r.at("selected_half").get<int>();
                if (!r.at("selected_full").is_null()) m.selected_full = r.at("selected_full").get<int>();
                if (!by_design.count(m.design)) order.push_back(m.design);
                by_design[m.design].push_back(m);
            }
            if (!doc.at("reports").empty()) levels = doc.at("reports").front().at("levels").get<int>();
            if (levels == 0) levels = spec.contains("scenario") ? spec.at("scenario").at("levels").get<int>() : 1;
            const SummaryOptions opts{cohorts, levels, std::nullopt};
            if (rep_format == "json") {
                Json out = Json::array();
                for (const auto& d : order) out.push_back(report_to_json(summarize_ensemble(by_design[d], opts)));
                std::cout << out.dump(2) << '\n';
            } else {
                std::cout << kSummaryHeader;
                for (const auto& d : order) {
                    std::cout << summary_row(Group{d, "all", {}}, summarize_ensemble(by_design[d], opts));
                }
            }
        });
    }
    return kOk;
}
