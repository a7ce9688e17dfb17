#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "phase1/crm.hpp"
#include "phase1/service.hpp"

using namespace phase1;

namespace {

const Json kCrmA{{"design", "crm"}, {"skeleton", {0.05, 0.11, 0.22, 0.40, 0.60, 0.78}}, {"prior", "A"}};

int status_of(auto&& fn) {
    try {
        fn();
    } catch (const ServiceError& e) {
        return e.status();
    }
    return 200;
}

Json cohort(int level, int size, int dlts) { return {{"level", level}, {"size", size}, {"dlts", dlts}}; }

}  // namespace

TEST_CASE("create trial") {
    TrialService svc;
    const Json r = svc.create_trial({{"design", kCrmA}, {"start_level", 2}});
    CHECK(r.at("recommendation").at("level") == 2);
    CHECK(r.at("status") == "active");
    const std::string id = r.at("id");
    const Json snap = svc.get_state(id);
    CHECK(snap.at("cohorts").empty());
    CHECK(TrialConfig::from_json(snap.at("config")).to_json() == snap.at("config"));
    CHECK(svc.get_state(id).at("config") == snap.at("config"));

    Json bad = kCrmA;
    bad["skeleton"] = {0.3, 0.2, 0.1};
    CHECK(status_of([&] { svc.create_trial({{"design", bad}}); }) == 400);
    CHECK(status_of([&] { svc.create_trial({{"design", kCrmA}, {"start_level", 9}}); }) == 400);
    CHECK(status_of([&] { svc.create_trial({{"design", kCrmA}, {"lvls", 6}}); }) == 400);
    CHECK(status_of([&] { svc.create_trial({{"design", {{"design", "ccd"}}}}); }) == 400);
    CHECK(status_of([&] { svc.create_trial({{"design", {{"design", "three_plus_three"}}}, {"levels", 4},
                                            {"cohort_size", 2}}); }) == 400);
}

TEST_CASE("cohort errors") {
    TrialService svc;
    const std::string id = svc.create_trial({{"design", {{"design", "group_ud"}}}, {"levels", 5}}).at("id");
    CHECK(status_of([&] { svc.post_cohort("t999999", cohort(1, 2, 0)); }) == 404);
    CHECK(status_of([&] { svc.post_cohort(id, cohort(1, 2, 3)); }) == 422);
    CHECK(status_of([&] { svc.post_cohort(id, cohort(1, 2, -1)); }) == 422);
    CHECK(status_of([&] { svc.post_cohort(id, cohort(6, 2, 0)); }) == 422);
    CHECK(status_of([&] { svc.post_cohort(id, cohort(1, 3, 0)); }) == 422);  // group U&D fixes k = 2
    CHECK(status_of([&] { svc.post_cohort(id, {{"level", 1}, {"size", 2}}); }) == 400);
    CHECK(svc.get_state(id).at("cohorts").empty());

    const Json r = svc.post_cohort(id, cohort(1, 2, 0));
    CHECK(r.at("recommendation").at("level") == 2);
    CHECK(r.at("clinician_override") == false);
    const Json o = svc.post_cohort(id, cohort(4, 2, 0));
    CHECK(o.at("clinician_override") == true);
    CHECK(o.at("recommended_level") == 2);
    CHECK(o.at("coherence_warning") == false);
}

TEST_CASE("3+3 stops and reports its estimate") {
    TrialService svc;
    const std::string id =
        svc.create_trial({{"design", {{"design", "three_plus_three"}}}, {"levels", 4}}).at("id");
    svc.post_cohort(id, cohort(1, 3, 0));
    svc.post_cohort(id, cohort(2, 3, 1));
    svc.post_cohort(id, cohort(2, 3, 0));
    const Json r = svc.post_cohort(id, cohort(3, 3, 2));
    CHECK(r.at("status") == "stopped");
    CHECK(r.at("recommendation").at("action") == "stop");
    CHECK(r.at("estimate") == 2);
    CHECK(status_of([&] { svc.post_cohort(id, cohort(2, 3, 0)); }) == 409);
    CHECK(status_of([&] { svc.what_if(id, cohort(2, 3, 0)); }) == 409);
}

TEST_CASE("crm coherence end to end") {
    Rng rng(12);
    for (int trial = 0; trial < 30; ++trial) {
        TrialService svc;
        const std::string id = svc.create_trial({{"design", kCrmA}, {"start_level", 2}}).at("id");
        int level = 2;
        for (int c = 0; c < 16; ++c) {
            const int dlts = static_cast<int>(rng() % 3);
            const Json r = svc.post_cohort(id, cohort(level, 2, dlts));
            const int next = r.at("recommendation").at("level");
            if (dlts >= 1) CHECK(next <= level);
            if (dlts == 0) CHECK(next >= level);
            CHECK(r.at("coherence_warning") == false);
            level = next;
        }
    }
}

TEST_CASE("what-if equals commit and leaves the session alone") {
    const auto dir = std::filesystem::temp_directory_path() / "phase1_whatif";
    std::filesystem::remove_all(dir);
    TrialService svc(dir);
    const std::string id = svc.create_trial({{"design", kCrmA}, {"start_level", 2}}).at("id");
    svc.post_cohort(id, cohort(2, 2, 0));
    const auto log = dir / (id + ".jsonl");
    const auto size_before = std::filesystem::file_size(log);
    const Json before = svc.get_state(id);
    Json preview = svc.what_if(id, cohort(3, 2, 1));
    CHECK(preview.at("what_if") == true);
    CHECK(svc.get_state(id) == before);
    CHECK(std::filesystem::file_size(log) == size_before);
    const Json committed = svc.post_cohort(id, cohort(3, 2, 1));
    preview.erase("what_if");
    CHECK(preview == committed);
    std::filesystem::remove_all(dir);
}

TEST_CASE("posterior endpoint equals a direct module call") {
    TrialService svc;
    const std::string id = svc.create_trial({{"design", kCrmA}, {"start_level", 2}}).at("id");
    svc.post_cohort(id, cohort(2, 2, 0));
    svc.post_cohort(id, cohort(3, 2, 1));
    const Json p = svc.posterior(id);

    TrialState state(DoseGrid(6), 0.3);
    state.add_cohort(2, 2, 0);
    state.add_cohort(3, 2, 1);
    const CrmConfig cfg{DoseToxModel::power(Skeleton({0.05, 0.11, 0.22, 0.40, 0.60, 0.78})), kPriorA};
    const PosteriorSummary post = posterior_theta(state, cfg.model, cfg.prior, 0.3, true);
    const auto curve = crm_curve(post, cfg);
    CHECK(p.at("theta_mean") == post.theta_mean);
    CHECK(p.at("mtd_weights") == Json(post.mtd_weights));
    for (int u = 1; u <= 6; ++u) CHECK(p.at("grid")[u - 1].at("value") == curve[static_cast<std::size_t>(u - 1)]);
    CHECK(p.at("dense").size() == 50);

    const std::string iso = svc.create_trial({{"design", {{"design", "kinrow"}}}, {"levels", 4}}).at("id");
    svc.post_cohort(iso, cohort(1, 1, 0));
    svc.post_cohort(iso, cohort(1, 1, 1));
    svc.post_cohort(iso, cohort(1, 1, 0));
    const Json q = svc.posterior(iso);
    CHECK(q.at("kind") == "isotonic");
    CHECK(q.at("grid")[0].at("value").get<double>() == doctest::Approx(1.0 / 3));
}

TEST_CASE("replay reproduces every recommendation") {
    const auto dir = std::filesystem::temp_directory_path() / "phase1_replay";
    std::filesystem::remove_all(dir);
    std::vector<Json> seen;
    std::string id, rad_id;
    {
        TrialService svc(dir);
        id = svc.create_trial({{"design", kCrmA}, {"start_level", 2}}).at("id");
        rad_id = svc.create_trial({{"design", {{"design", "rad"}}}, {"levels", 5}, {"seed", 17}}).at("id");
        Rng rng(3);
        int level = 2, rad_level = 1;
        for (int c = 0; c < 12; ++c) {
            level = svc.post_cohort(id, cohort(level, 2, static_cast<int>(rng() % 3))).at("recommendation").at("level");
            rad_level = svc.post_cohort(rad_id, cohort(rad_level, 1, static_cast<int>(rng() % 2)))
                            .at("recommendation")
                            .at("level");
        }
        seen = {svc.get_state(id), svc.get_state(rad_id)};
    }
    TrialService reloaded(dir);
    CHECK(reloaded.ids() == std::vector<std::string>{id, rad_id});
    CHECK(reloaded.get_state(id) == seen[0]);
    CHECK(reloaded.get_state(rad_id) == seen[1]);
    const std::string next = reloaded.create_trial({{"design", kCrmA}}).at("id");
    CHECK(next == "t000003");

    // A tampered log is rejected.
    std::ifstream in(dir / (id + ".jsonl"));
    std::stringstream text;
    text << in.rdbuf();
    std::string s = text.str();
    const auto pos = s.rfind("\"dlts\":");
    s[pos + 7] = s[pos + 7] == '0' ? '1' : '0';
    std::istringstream tampered(s);
    CHECK_THROWS_AS(TrialService::replay(tampered), Error);
    std::filesystem::remove_all(dir);
}

TEST_CASE("settling flag") {
    TrialService svc;
    const std::string id = svc.create_trial({{"design", {{"design", "kinrow"}}}, {"levels", 4}}).at("id");
    Json r;
    for (int c = 0; c < 6; ++c) r = svc.post_cohort(id, cohort(2, 1, 0));
    CHECK(r.at("settled") == true);
    CHECK(r.at("settling_cohort") == 6);
}

TEST_CASE("Pisters trajectory") {
    std::ifstream in(std::string(PHASE1_DATA_DIR) + "/trajectories/pisters.json");
    REQUIRE(in);
    const Json data = Json::parse(in);
    TrialService svc;
    const std::string id = svc.create_trial(data.at("config")).at("id");
    Json r;
    for (const Json& c : data.at("cohorts")) {
        const Json preview = svc.what_if(id, c);
        r = svc.post_cohort(id, c);
        Json p = preview;
        p.erase("what_if");
        CHECK(p == r);
    }
    CHECK(r.at("estimate") == 3);
    CHECK(r.at("recommendation").at("level") == 3);
    const Json snap = svc.get_state(id);
    CHECK(snap.at("cohorts").size() == 10);
    CHECK(snap.at("history").size() == 10);
}
