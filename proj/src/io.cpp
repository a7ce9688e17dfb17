#include "phase1/io.hpp"

#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

namespace phase1 {
namespace {

[[noreturn]] void bad(const std::string& what) { throw Error(ErrorCode::InvalidArgument, what); }

void check_keys(const Json& j, std::initializer_list<const char*> allowed, const std::string& where) {
    if (!j.is_object()) bad(where + " must be a JSON object");
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [key, value] : j.items()) {
        if (!ok.count(key)) bad("unknown key '" + key + "' in " + where);
    }
}

template <class T>
T get_or(const Json& j, const char* key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const Json::exception&) {
        bad(std::string("key '") + key + "' has the wrong type");
    }
}

template <class T>
T require(const Json& j, const char* key, const std::string& where) {
    if (!j.contains(key)) bad(where + " needs '" + key + "'");
    return get_or<T>(j, key, T{});
}

LogNormalPrior prior_from_json(const Json& j) {
    if (j.is_string()) {
        const auto name = j.get<std::string>();
        if (name == "A") return kPriorA;
        if (name == "B") return kPriorB;
        if (name == "C") return kPriorC;
        bad("unknown prior preset '" + name + "'");
    }
    check_keys(j, {"mu", "sigma"}, "prior");
    return LogNormalPrior::make(require<double>(j, "mu", "prior"), require<double>(j, "sigma", "prior"));
}

CrmConfig crm_from_json(const Json& j) {
    check_keys(j, {"design", "name", "skeleton", "prior", "model", "beta0", "theta0", "step_constraint", "plug_in"},
               "crm design");
    Skeleton skeleton(require<std::vector<double>>(j, "skeleton", "crm design"));
    const LogNormalPrior prior = j.contains("prior") ? prior_from_json(j.at("prior")) : kPriorB;
    const auto model = get_or<std::string>(j, "model", "power");
    CrmConfig cfg{model == "power" ? DoseToxModel::power(skeleton)
                  : model == "chevret"
                      ? DoseToxModel::chevret(skeleton, get_or<double>(j, "beta0", 3.0),
                                              get_or<double>(j, "theta0", prior.mean()))
                      : throw Error(ErrorCode::InvalidArgument, "unknown CRM model '" + model + "'"),
                  prior, get_or<bool>(j, "step_constraint", true), PlugIn::PosteriorMean};
    const auto plug = get_or<std::string>(j, "plug_in", "posterior_mean");
    if (plug == "log_posterior_mean") cfg.plug_in = PlugIn::LogPosteriorMean;
    else if (plug != "posterior_mean") bad("unknown plug_in '" + plug + "'");
    return cfg;
}

Json crm_to_json(const CrmConfig& c) {
    Json j{{"design", "crm"},
           {"skeleton", std::vector<double>(c.model.skeleton().phi().begin(), c.model.skeleton().phi().end())},
           {"prior", {{"mu", c.prior.mu}, {"sigma", c.prior.sigma}}},
           {"model", c.model.kind() == CurveModel::Power ? "power" : "chevret"},
           {"step_constraint", c.step_constraint},
           {"plug_in", c.plug_in == PlugIn::PosteriorMean ? "posterior_mean" : "log_posterior_mean"}};
    if (c.model.kind() == CurveModel::Chevret) {
        j["beta0"] = c.model.beta0();
        j["theta0"] = c.model.theta0();
    }
    return j;
}

DesignSpec spec_from_json(const Json& j, double target) {
    if (!j.is_object()) bad("design must be a JSON object");
    const auto tag = require<std::string>(j, "design", "design");
    if (tag == "group_ud") {
        check_keys(j, {"design", "name", "k", "a", "b"}, "group_ud design");
        GroupUdRule r{get_or<int>(j, "k", 2), get_or<int>(j, "a", 0), get_or<int>(j, "b", 1)};
        r.validate();
        return r;
    }
    if (tag == "kinrow") {
        check_keys(j, {"design", "name", "k"}, "kinrow design");
        KInARowRule r{get_or<int>(j, "k", 2)};
        r.validate();
        return r;
    }
    if (tag == "ccd") {
        check_keys(j, {"design", "name", "half_width", "target"}, "ccd design");
        CcdRule r{get_or<double>(j, "target", target), get_or<double>(j, "half_width", 0.1)};
        r.validate();
        return r;
    }
    if (tag == "three_plus_three") {
        check_keys(j, {"design", "name"}, "three_plus_three design");
        return ThreePlusThreeRule{};
    }
    if (tag == "crm") return crm_from_json(j);
    if (tag == "rad") {
        check_keys(j, {"design", "name"}, "rad design");
        return RadRule{};
    }
    if (tag == "hybrid") {
        check_keys(j, {"design", "name", "base", "override", "beta"}, "hybrid design");
        const DesignSpec base = spec_from_json(require<Json>(j, "base", "hybrid design"), target);
        const DesignSpec over = spec_from_json(require<Json>(j, "override", "hybrid design"), target);
        UdRule ud;
        if (const auto* g = std::get_if<GroupUdRule>(&base)) ud = *g;
        else if (const auto* k = std::get_if<KInARowRule>(&base)) ud = *k;
        else bad("hybrid base must be group_ud or kinrow");
        const auto lm = [&]() -> LongMemoryRule {
            if (const auto* c = std::get_if<CrmConfig>(&over)) return *c;
            if (const auto* c2 = std::get_if<CcdRule>(&over)) return *c2;
            bad("hybrid override must be crm or ccd");
        }();
        HybridRule h{ud, lm};
        h.beta = get_or<double>(j, "beta", 0.25);
        h.validate();
        return h;
    }
    bad("unknown design '" + tag + "'");
}

Json spec_to_json(const DesignSpec& spec) {
    struct Visitor {
        Json operator()(const GroupUdRule& r) const {
            return {{"design", "group_ud"}, {"k", r.k}, {"a", r.a}, {"b", r.b}};
        }
        Json operator()(const KInARowRule& r) const { return {{"design", "kinrow"}, {"k", r.k}}; }
        Json operator()(const CcdRule& r) const {
            return {{"design", "ccd"}, {"target", r.target}, {"half_width", r.half_width}};
        }
        Json operator()(const ThreePlusThreeRule&) const { return {{"design", "three_plus_three"}}; }
        Json operator()(const CrmConfig& c) const { return crm_to_json(c); }
        Json operator()(const RadRule&) const { return {{"design", "rad"}}; }
        Json operator()(const HybridRule& h) const {
            const DesignSpec base = std::visit([](const auto& r) -> DesignSpec { return r; }, h.base);
            const DesignSpec over = std::visit([](const auto& r) -> DesignSpec { return r; }, h.override_design);
            return {{"design", "hybrid"}, {"base", spec_to_json(base)}, {"override", spec_to_json(over)},
                    {"beta", h.beta}};
        }
    };
    return std::visit(Visitor{}, spec);
}

Json optional_int(const std::optional<int>& v) { return v ? Json(*v) : Json(nullptr); }
std::string csv_int(const std::optional<int>& v) { return v ? std::to_string(*v) : "NA"; }

}  // namespace

Json scenario_to_json(const Scenario& s) {
    Json j{{"levels", s.levels()},
           {"target", s.target()},
           {"f", std::vector<double>(s.f().begin(), s.f().end())},
           {"true_mtd", s.true_mtd()}};
    if (s.grid() != DoseGrid(s.levels())) {
        j["doses"] = std::vector<double>(s.grid().doses().begin(), s.grid().doses().end());
    }
    return j;
}

Scenario scenario_from_json(const Json& j) {
    check_keys(j, {"id", "levels", "target", "f", "true_mtd", "doses", "family"}, "scenario");
    auto f = require<std::vector<double>>(j, "f", "scenario");
    const double target = get_or<double>(j, "target", 0.3);
    if (j.contains("levels") && get_or<int>(j, "levels", 0) != static_cast<int>(f.size())) {
        throw Error(ErrorCode::LengthMismatch, "scenario 'levels' disagrees with the length of 'f'");
    }
    const DoseGrid grid = j.contains("doses") ? DoseGrid(get_or<std::vector<double>>(j, "doses", {}))
                                              : DoseGrid(static_cast<int>(f.size()));
    Scenario s = validate_scenario(grid, std::move(f), target);
    if (j.contains("true_mtd") && get_or<int>(j, "true_mtd", 0) != s.true_mtd()) {
        bad("scenario 'true_mtd' disagrees with argmin |f - target|");
    }
    return s;
}

DesignConfig design_from_json(const Json& j, double target) {
    DesignConfig d{std::string{}, spec_from_json(j, target)};
    d.name = get_or<std::string>(j, "name", design_tag(d.spec));
    return d;
}

Json design_to_json(const DesignConfig& d) {
    Json j = spec_to_json(d.spec);
    j["name"] = d.name.empty() ? design_tag(d.spec) : d.name;
    return j;
}

void write_scenario_file(std::ostream& out, const std::vector<Scenario>& scenarios, const Json& header) {
    out << Json{{"header", header}}.dump() << '\n';
    for (std::size_t i = 0; i < scenarios.size(); ++i) {
        Json j = scenario_to_json(scenarios[i]);
        j["id"] = "s" + std::to_string(i);
        out << j.dump() << '\n';
    }
}

std::vector<ScenarioRecord> read_scenario_file(std::istream& in, Json* header) {
    std::vector<ScenarioRecord> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        Json j;
        try {
            j = Json::parse(line);
        } catch (const Json::exception& e) {
            bad("scenario file line " + std::to_string(line_no) + ": " + e.what());
        }
        if (j.contains("header")) {
            if (header) *header = j.at("header");
            continue;
        }
        const std::string id = get_or<std::string>(j, "id", "s" + std::to_string(out.size()));
        out.push_back({id, scenario_from_json(j)});
    }
    return out;
}

RunSpec RunSpec::from_json(const Json& j) {
    check_keys(j,
               {"designs", "scenarios", "target", "runs", "cohorts", "cohort_size", "start_level", "seed",
                "output_dir", "jobs"},
               "run spec");
    RunSpec spec;
    spec.target = get_or<double>(j, "target", 0.3);
    if (j.contains("designs")) {
        if (!j.at("designs").is_array()) bad("'designs' must be an array");
        for (const Json& d : j.at("designs")) spec.designs.push_back(design_from_json(d, spec.target));
    }
    if (j.contains("scenarios")) {
        const Json& s = j.at("scenarios");
        check_keys(s, {"source", "path", "levels", "quotas", "post_filter"}, "scenario source");
        const auto source = get_or<std::string>(s, "source", "fixed");
        if (source == "fixed") {
            spec.source = ScenarioSource::Fixed;
        } else if (source == "file") {
            spec.source = ScenarioSource::File;
            spec.scenario_file = require<std::string>(s, "path", "file scenario source");
        } else if (source == "random") {
            spec.source = ScenarioSource::Random;
            spec.levels = get_or<int>(s, "levels", 7);
            spec.quotas = get_or<std::vector<int>>(s, "quotas", {});
            spec.post_filter = get_or<bool>(s, "post_filter", true);
        } else {
            bad("unknown scenario source '" + source + "'");
        }
    }
    spec.runs = get_or<int>(j, "runs", spec.runs);
    spec.setup.cohorts = get_or<int>(j, "cohorts", spec.setup.cohorts);
    spec.setup.cohort_size = get_or<int>(j, "cohort_size", spec.setup.cohort_size);
    spec.setup.start_level = get_or<int>(j, "start_level", spec.setup.start_level);
    if (j.contains("seed")) spec.seed = get_or<std::uint64_t>(j, "seed", 0);
    spec.output_dir = get_or<std::string>(j, "output_dir", spec.output_dir);
    spec.jobs = get_or<int>(j, "jobs", spec.jobs);
    return spec;
}

Json RunSpec::to_json() const {
    Json designs_json = Json::array();
    for (const DesignConfig& d : designs) designs_json.push_back(design_to_json(d));
    Json scen;
    switch (source) {
        case ScenarioSource::Fixed: scen = {{"source", "fixed"}}; break;
        case ScenarioSource::File: scen = {{"source", "file"}, {"path", scenario_file}}; break;
        case ScenarioSource::Random:
            scen = {{"source", "random"}, {"levels", levels}, {"quotas", quotas}, {"post_filter", post_filter}};
            break;
    }
    Json j{{"designs", designs_json},
           {"scenarios", scen},
           {"target", target},
           {"runs", runs},
           {"cohorts", setup.cohorts},
           {"cohort_size", setup.cohort_size},
           {"start_level", setup.start_level},
           {"output_dir", output_dir},
           {"jobs", jobs}};
    if (seed) j["seed"] = *seed;
    return j;
}

Json report_to_json(const EnsembleReport& r) {
    Json settling = Json::object();
    for (std::size_t s = 0; s < r.settling.size(); ++s) {
        settling[kSettlingStageNames[s]] = {{"correct", r.settling[s][1]}, {"incorrect", r.settling[s][0]}};
    }
    return {{"design", r.design},
            {"runs", r.runs},
            {"cohorts", r.cohorts},
            {"levels", r.levels},
            {"success_half", r.success_half},
            {"success_full", r.success_full},
            {"high_n_star", r.high_n_star},
            {"low_n_star", r.low_n_star},
            {"high_toxicity", r.high_toxicity},
            {"incoherent_runs", r.incoherent_runs},
            {"n_star_mean", r.n_star_mean},
            {"n_star_variance", r.n_star_variance},
            {"n_star_histogram", r.n_star_histogram},
            {"settled_by_8", r.settled_by(8)},
            {"settled_by_12", r.settled_by(12)},
            {"settling", settling}};
}

void write_runs_csv(std::ostream& out, const std::vector<RunMetrics>& runs, bool header) {
    if (header) {
        out << "run_id,scenario_id,design,n_star,settling_cohort,incoherent,dlts,selected_half,selected_full,"
               "correct_half,correct_full\n";
    }
    for (const RunMetrics& m : runs) {
        out << m.run_id << ',' << m.scenario_id << ',' << m.design << ',' << m.n_star << ','
            << csv_int(m.settling_cohort) << ',' << m.incoherent << ',' << m.total_dlts << ','
            << csv_int(m.selected_half) << ',' << csv_int(m.selected_full) << ',' << int(m.correct_half())
            << ',' << int(m.correct_full()) << '\n';
    }
}

void write_histogram_csv(std::ostream& out, const EnsembleReport& r) {
    out << "n_star_value,count\n";
    for (std::size_t v = 0; v < r.n_star_histogram.size(); ++v) out << v << ',' << r.n_star_histogram[v] << '\n';
}

Json run_to_json(const RunMetrics& m) {
    return {{"run_id", m.run_id},
            {"scenario_id", m.scenario_id},
            {"design", m.design},
            {"true_mtd", m.true_mtd},
            {"n_star", m.n_star},
            {"settling_cohort", optional_int(m.settling_cohort)},
            {"incoherent", m.incoherent},
            {"dlts", m.total_dlts},
            {"dlts_after_first", m.dlts_after_first},
            {"selected_half", optional_int(m.selected_half)},
            {"selected_full", optional_int(m.selected_full)},
            {"correct_half", m.correct_half()},
            {"correct_full", m.correct_full()}};
}

Json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "'");
    try {
        return Json::parse(in);
    } catch (const Json::exception& e) {
        bad("'" + path + "' is not valid JSON: " + e.what());
    }
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + path + "'");
    out << text;
    if (!out) throw IoError("write to '" + path + "' failed");
}

}  // namespace phase1
