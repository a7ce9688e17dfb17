#include "phase1/service.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <istream>

#include "phase1/estimation.hpp"

namespace phase1 {
namespace {

const CrmConfig* crm_part(const DesignSpec& spec) {
    if (const auto* c = std::get_if<CrmConfig>(&spec)) return c;
    if (const auto* h = std::get_if<HybridRule>(&spec)) return std::get_if<CrmConfig>(&h->override_design);
    return nullptr;
}

Json optional_json(const std::optional<int>& v) { return v ? Json(*v) : Json(nullptr); }

std::vector<double> linear_dense(std::span<const double> doses, std::span<const double> values, int points) {
    std::vector<double> out;
    if (points < 2) return out;
    const double lo = doses.front();
    const double hi = doses.back();
    for (int i = 0; i < points; ++i) {
        const double x = lo + (hi - lo) * i / (points - 1);
        std::size_t k = 0;
        while (k + 2 < doses.size() && doses[k + 1] < x) ++k;
        if (doses.size() == 1) {
            out.push_back(values[0]);
            continue;
        }
        const double t = (x - doses[k]) / (doses[k + 1] - doses[k]);
        out.push_back(values[k] + std::clamp(t, 0.0, 1.0) * (values[k + 1] - values[k]));
    }
    return out;
}

struct CohortInput {
    int level = 0;
    int size = 0;
    int dlts = 0;
};

CohortInput parse_cohort(const Json& j, const DoseGrid& grid) {
    if (!j.is_object()) throw ServiceError(400, "cohort must be a JSON object");
    for (const char* key : {"level", "size", "dlts"}) {
        if (!j.contains(key) || !j.at(key).is_number_integer()) {
            throw ServiceError(400, std::string("cohort needs integer '") + key + "'");
        }
    }
    for (const auto& [key, value] : j.items()) {
        if (key != "level" && key != "size" && key != "dlts") throw ServiceError(400, "unknown cohort key '" + key + "'");
    }
    CohortInput c{j.at("level").get<int>(), j.at("size").get<int>(), j.at("dlts").get<int>()};
    if (!grid.contains(c.level)) throw ServiceError(422, "level " + std::to_string(c.level) + " is not on the grid");
    if (c.size < 1) throw ServiceError(422, "cohort size must be at least 1");
    if (c.dlts < 0 || c.dlts > c.size) throw ServiceError(422, "dlts must lie between 0 and the cohort size");
    return c;
}

std::string format_id(std::uint64_t n) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "t%06llu", static_cast<unsigned long long>(n));
    return buf;
}

}  // namespace

TrialConfig TrialConfig::from_json(const Json& j) {
    try {
        if (!j.is_object()) throw ServiceError(400, "trial config must be a JSON object");
        for (const auto& [key, value] : j.items()) {
            static const std::vector<std::string> allowed{"design",      "levels",       "doses", "target",
                                                          "start_level", "cohort_size",  "max_cohorts", "seed"};
            if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
                throw ServiceError(400, "unknown key '" + key + "' in trial config");
            }
        }
        if (!j.contains("design")) throw ServiceError(400, "trial config needs 'design'");
        const double target = j.value("target", 0.3);
        if (!(target > 0.0 && target < 1.0)) throw ServiceError(400, "target must lie in (0,1)");
        DesignConfig design = design_from_json(j.at("design"), target);
        std::optional<DoseGrid> grid;
        if (j.contains("doses")) grid.emplace(j.at("doses").get<std::vector<double>>());
        else if (j.contains("levels")) grid.emplace(j.at("levels").get<int>());
        else if (const auto* crm = crm_part(design.spec)) grid.emplace(crm->model.levels());
        else throw ServiceError(400, "trial config needs 'levels' or 'doses'");
        if (j.contains("levels") && j.at("levels").get<int>() != grid->levels()) {
            throw ServiceError(400, "'levels' disagrees with 'doses'");
        }
        validate_design(design.spec, grid->levels());
        TrialConfig cfg{std::move(design), *grid, target, j.value("start_level", 1), std::nullopt, std::nullopt,
                        j.value("seed", std::uint64_t{0})};
        if (!cfg.grid.contains(cfg.start_level)) throw ServiceError(400, "start_level is not on the grid");
        if (j.contains("cohort_size")) cfg.cohort_size = j.at("cohort_size").get<int>();
        if (const auto need = required_cohort_size(cfg.design.spec)) {
            if (cfg.cohort_size && *cfg.cohort_size != *need) {
                throw ServiceError(400, design_tag(cfg.design.spec) + " requires cohorts of " + std::to_string(*need));
            }
            cfg.cohort_size = *need;
        }
        if (cfg.cohort_size && *cfg.cohort_size < 1) throw ServiceError(400, "cohort_size must be positive");
        if (j.contains("max_cohorts")) {
            cfg.max_cohorts = j.at("max_cohorts").get<int>();
            if (*cfg.max_cohorts < 1) throw ServiceError(400, "max_cohorts must be positive");
        }
        return cfg;
    } catch (const Error& e) {
        throw ServiceError(400, e.what());
    } catch (const Json::exception& e) {
        throw ServiceError(400, std::string("malformed trial config: ") + e.what());
    }
}

Json TrialConfig::to_json() const {
    Json j{{"design", design_to_json(design)},
           {"doses", std::vector<double>(grid.doses().begin(), grid.doses().end())},
           {"target", target},
           {"start_level", start_level},
           {"seed", seed}};
    if (cohort_size) j["cohort_size"] = *cohort_size;
    if (max_cohorts) j["max_cohorts"] = *max_cohorts;
    return j;
}

Json fitted_curve(const DesignConfig& design, const TrialState& state, int dense_points) {
    const DoseGrid& grid = state.grid();
    Json observed = Json::array();
    for (int u = 1; u <= grid.levels(); ++u) {
        const auto rate = state.rate_at(u);
        observed.push_back({{"level", u},
                            {"dose", grid.dose(u)},
                            {"n", state.n_at(u)},
                            {"dlts", state.dlts_at(u)},
                            {"rate", rate ? Json(*rate) : Json(nullptr)}});
    }
    Json out{{"observed", observed}, {"target", state.target()}};
    std::vector<double> values;
    if (const CrmConfig* crm = crm_part(design.spec)) {
        const PosteriorSummary post = posterior_theta(state, crm->model, crm->prior, state.target(), true);
        values = crm_curve(post, *crm);
        out["kind"] = "crm";
        out["theta_mean"] = post.theta_mean;
        out["log_theta_mean"] = post.log_theta_mean;
        out["mtd_weights"] = post.mtd_weights;
        out["dense"] = Json::array();
        const auto dense = linear_dense(grid.doses(), values, dense_points);
        for (int i = 0; i < static_cast<int>(dense.size()); ++i) {
            const double x = grid.doses().front() + (grid.doses().back() - grid.doses().front()) * i / (dense_points - 1);
            out["dense"].push_back({{"dose", x}, {"value", dense[static_cast<std::size_t>(i)]}});
        }
    } else {
        out["kind"] = "isotonic";
        out["dense"] = Json::array();
        if (state.total_patients() > 0) {
            const CirResult fit = cir_fit(state);
            for (double x : grid.doses()) values.push_back(fit.evaluate(x));
            for (int i = 0; i < dense_points && dense_points >= 2; ++i) {
                const double x =
                    grid.doses().front() + (grid.doses().back() - grid.doses().front()) * i / (dense_points - 1);
                out["dense"].push_back({{"dose", x}, {"value", fit.evaluate(x)}});
            }
        }
    }
    Json at_grid = Json::array();
    for (int u = 1; u <= grid.levels(); ++u) {
        at_grid.push_back({{"level", u},
                           {"dose", grid.dose(u)},
                           {"value", values.empty() ? Json(nullptr) : Json(values[static_cast<std::size_t>(u - 1)])}});
    }
    out["grid"] = at_grid;
    return out;
}

TrialSession::TrialSession(std::string id, TrialConfig config)
    : id_(std::move(id)), config_(std::move(config)), state_(config_.grid, config_.target) {
    bool stopped = false;
    current_ = diagnose(state_, std::nullopt, stopped);
    events_.push_back({{"event", "create"}, {"id", id_}, {"config", config_.to_json()}, {"result", current_}});
}

Json TrialSession::diagnose(const TrialState& state, const std::optional<CohortRecord>& posted, bool& stopped) const {
    Json rec;
    std::optional<int> estimate;
    stopped = false;
    if (state.empty()) {
        rec = {{"action", "next"}, {"level", config_.start_level}};
    } else if (config_.max_cohorts && static_cast<int>(state.cohort_count()) >= *config_.max_cohorts) {
        stopped = true;
        estimate = select_mtd(config_.design.spec, state);
        rec = {{"action", "stop"}, {"reason", "max_cohorts"}};
    } else {
        Rng rng(derive_seed(config_.seed, state.cohort_count(), StreamTag::Design));
        const DesignAction action = next_action(config_.design.spec, state, rng);
        if (action.is_stop()) {
            stopped = true;
            estimate = action.selected;
            rec = {{"action", "stop"}, {"reason", "design"}};
        } else {
            estimate = select_mtd(config_.design.spec, state);
            rec = {{"action", "next"}, {"level", action.level}};
        }
        if (const auto* h = std::get_if<HybridRule>(&config_.design.spec); h && !action.is_stop()) {
            const DesignAction base = std::visit(
                [&](const auto& r) -> DesignAction {
                    if constexpr (std::is_same_v<std::decay_t<decltype(r)>, GroupUdRule>) return group_ud_next(state, r);
                    else return k_in_a_row_next(state, r);
                },
                h->base);
            rec["override"] = {{"base_level", base.level}, {"applied", base.level != action.level}};
        }
    }
    Json out{{"cohort_count", state.cohort_count()},
             {"recommendation", rec},
             {"estimate", optional_json(estimate)},
             {"status", stopped ? "stopped" : "active"}};
    bool warning = false;
    if (posted && rec["action"] == "next") {
        const int next = rec["level"].get<int>();
        warning = (next > posted->level && posted->dlts >= 1) || (next < posted->level && posted->dlts == 0);
    }
    out["coherence_warning"] = warning;
    const auto settle = find_settling(state.cohorts());
    out["settled"] = settle.has_value();
    out["settling_cohort"] = settle ? Json(settle->cohort) : Json(nullptr);
    out["fit"] = fitted_curve(config_.design, state, 0);
    return out;
}

TrialSession::Outcome TrialSession::evaluate(const Json& cohort) const {
    if (stopped_) throw ServiceError(409, "trial " + id_ + " has stopped");
    const CohortInput in = parse_cohort(cohort, config_.grid);
    if (config_.cohort_size && in.size != *config_.cohort_size) {
        throw ServiceError(422, "this design uses cohorts of " + std::to_string(*config_.cohort_size));
    }
    Outcome out{state_, Json{}, false};
    out.state.add_cohort(in.level, in.size, in.dlts);
    try {
        out.result = diagnose(out.state, out.state.last(), out.stopped);
    } catch (const Error& e) {
        throw ServiceError(422, e.what());
    }
    const Json& prev = current_.at("recommendation");
    const bool followed = prev.at("action") == "next" && prev.at("level").get<int>() == in.level;
    out.result["clinician_override"] = !followed;
    if (!followed) out.result["recommended_level"] = prev.value("level", Json(nullptr));
    return out;
}

Json TrialSession::preview(const Json& cohort) const {
    Json r = evaluate(cohort).result;
    r["what_if"] = true;
    return r;
}

Json TrialSession::commit(const Json& cohort) {
    Outcome out = evaluate(cohort);
    state_ = std::move(out.state);
    stopped_ = out.stopped;
    current_ = out.result;
    history_.push_back(current_);
    const CohortRecord& c = state_.last();
    events_.push_back({{"event", "cohort"},
                       {"level", c.level},
                       {"size", c.size},
                       {"dlts", c.dlts},
                       {"result", current_}});
    return current_;
}

Json TrialSession::snapshot() const {
    Json cohorts = Json::array();
    for (const CohortRecord& c : state_.cohorts()) {
        cohorts.push_back({{"index", c.index}, {"level", c.level}, {"size", c.size}, {"dlts", c.dlts}});
    }
    return {{"id", id_},
            {"config", config_.to_json()},
            {"status", stopped_ ? "stopped" : "active"},
            {"cohorts", cohorts},
            {"current", current_},
            {"history", history_},
            {"fit", fitted_curve(config_.design, state_, 50)}};
}

Json TrialSession::posterior() const {
    Json j = fitted_curve(config_.design, state_, 50);
    j["id"] = id_;
    return j;
}

TrialService::TrialService(std::filesystem::path data_dir) : data_dir_(std::move(data_dir)) {
    if (data_dir_.empty()) return;
    std::error_code ec;
    std::filesystem::create_directories(data_dir_, ec);
    if (ec) throw IoError("cannot create data directory '" + data_dir_.string() + "'");
    std::vector<std::filesystem::path> logs;
    for (const auto& entry : std::filesystem::directory_iterator(data_dir_)) {
        if (entry.path().extension() == ".jsonl") logs.push_back(entry.path());
    }
    std::sort(logs.begin(), logs.end());
    for (const auto& path : logs) {
        std::ifstream in(path);
        if (!in) throw IoError("cannot read '" + path.string() + "'");
        auto session = replay(in);
        const std::string id = session->id();
        if (id.size() > 1 && id[0] == 't') {
            next_id_ = std::max<std::uint64_t>(next_id_, std::stoull(id.substr(1)) + 1);
        }
        auto entry = std::make_unique<Entry>();
        entry->session = std::move(session);
        sessions_.emplace(id, std::move(entry));
    }
}

std::unique_ptr<TrialSession> TrialService::replay(std::istream& log) {
    std::unique_ptr<TrialSession> session;
    std::string line;
    while (std::getline(log, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const Json ev = Json::parse(line);
        const std::string kind = ev.at("event").get<std::string>();
        if (kind == "create") {
            if (session) throw Error(ErrorCode::MalformedHistory, "second create event in log");
            session = std::make_unique<TrialSession>(ev.at("id").get<std::string>(),
                                                     TrialConfig::from_json(ev.at("config")));
            if (session->current() != ev.at("result")) {
                throw Error(ErrorCode::MalformedHistory, "replayed initial recommendation differs from the log");
            }
        } else if (kind == "cohort") {
            if (!session) throw Error(ErrorCode::MalformedHistory, "cohort event before create");
            const Json r = session->commit({{"level", ev.at("level")}, {"size", ev.at("size")}, {"dlts", ev.at("dlts")}});
            if (r != ev.at("result")) {
                throw Error(ErrorCode::MalformedHistory,
                            "replayed recommendation differs from the log at cohort " +
                                std::to_string(session->state().cohort_count()));
            }
        } else {
            throw Error(ErrorCode::MalformedHistory, "unknown event '" + kind + "'");
        }
    }
    if (!session) throw Error(ErrorCode::MalformedHistory, "empty session log");
    return session;
}

TrialService::Entry& TrialService::find(const std::string& id) const {
    std::shared_lock lock(map_mutex_);
    const auto it = sessions_.find(id);
    if (it == sessions_.end()) throw ServiceError(404, "unknown trial '" + id + "'");
    return *it->second;
}

void TrialService::persist(const std::string& id, const Json& event) const {
    if (data_dir_.empty()) return;
    const auto path = data_dir_ / (id + ".jsonl");
    std::ofstream out(path, std::ios::app | std::ios::binary);
    if (!out) throw IoError("cannot append to '" + path.string() + "'");
    out << event.dump() << '\n';
    out.flush();
    if (!out) throw IoError("write to '" + path.string() + "' failed");
}

Json TrialService::create_trial(const Json& config) {
    TrialConfig cfg = TrialConfig::from_json(config);
    std::unique_lock lock(map_mutex_);
    const std::string id = format_id(next_id_++);
    auto entry = std::make_unique<Entry>();
    entry->session = std::make_unique<TrialSession>(id, std::move(cfg));
    persist(id, entry->session->events().back());
    Json out = entry->session->current();
    out["id"] = id;
    sessions_.emplace(id, std::move(entry));
    return out;
}

Json TrialService::post_cohort(const std::string& id, const Json& cohort) {
    Entry& e = find(id);
    std::lock_guard lock(e.mutex);
    Json r = e.session->commit(cohort);
    persist(id, e.session->events().back());
    r["id"] = id;
    return r;
}

Json TrialService::what_if(const std::string& id, const Json& cohort) const {
    Entry& e = find(id);
    std::lock_guard lock(e.mutex);
    Json r = e.session->preview(cohort);
    r["id"] = id;
    return r;
}

Json TrialService::get_state(const std::string& id) const {
    Entry& e = find(id);
    std::lock_guard lock(e.mutex);
    return e.session->snapshot();
}

Json TrialService::recommendation(const std::string& id) const {
    Entry& e = find(id);
    std::lock_guard lock(e.mutex);
    Json r = e.session->current();
    r["id"] = id;
    return r;
}

Json TrialService::posterior(const std::string& id) const {
    Entry& e = find(id);
    std::lock_guard lock(e.mutex);
    return e.session->posterior();
}

std::vector<std::string> TrialService::ids() const {
    std::shared_lock lock(map_mutex_);
    std::vector<std::string> out;
    for (const auto& [id, entry] : sessions_) out.push_back(id);
    return out;
}

}  // namespace phase1
