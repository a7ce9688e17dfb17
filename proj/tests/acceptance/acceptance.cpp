// Acceptance checks: one PASS/FAIL line per criterion, details indented
// underneath. Exit status is the number of failures.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <thread>

#include "../oracles.hpp"
#include "../three_plus_three_table.hpp"
#include "phase1/crm.hpp"
#include "phase1/estimation.hpp"
#include "phase1/io.hpp"
#include "phase1/scenarios.hpp"
#include "phase1/simulator.hpp"

using namespace phase1;

namespace {

int failures = 0;
const int kJobs = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));

const Skeleton kSix({0.05, 0.11, 0.22, 0.40, 0.60, 0.78});
const Skeleton kFlinn({0.05, 0.10, 0.20, 0.30, 0.50, 0.65, 0.80});
const Skeleton kPisters({0.05, 0.20, 0.40, 0.80});
const LogNormalPrior kFlinnPrior{0.0, std::sqrt(1.34)};
const LogNormalPrior kPistersPrior{0.0, std::sqrt(1.8)};

DesignConfig crm_six() { return {"crm", CrmConfig{DoseToxModel::power(kSix), kPriorA}}; }

struct Check {
    std::string name;
    std::ostringstream detail;
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

    explicit Check(std::string n) : name(std::move(n)) {}

    void finish(bool ok) {
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::printf("%s  %s (%.1fs)\n", ok ? "PASS" : "FAIL", name.c_str(), secs);
        std::istringstream lines(detail.str());
        for (std::string line; std::getline(lines, line);) std::printf("      %s\n", line.c_str());
        std::fflush(stdout);
        if (!ok) ++failures;
    }
};

double pct(double fraction) { return 100.0 * fraction; }

int nearest_level(std::span<const double> f, double p) {
    int best = 1;
    for (int u = 1; u <= static_cast<int>(f.size()); ++u) {
        if (std::abs(f[u - 1] - p) < std::abs(f[best - 1] - p)) best = u;
    }
    return best;
}

void prior_weights() {
    Check c("prior-predictive weights, priors A/B/C on the six-level skeleton");
    const std::vector<std::pair<LogNormalPrior, std::vector<double>>> cases{
        {kPriorA, {0.25, 0.14, 0.20, 0.22, 0.14, 0.05}},
        {kPriorB, {0.26, 0.10, 0.15, 0.18, 0.17, 0.15}},
        {kPriorC, {0.33, 0.22, 0.25, 0.16, 0.04, 0.002}},
    };
    const char* names = "ABC";
    bool ok = true;
    double worst = 0;
    TrialState empty(DoseGrid(6), 0.3);
    for (std::size_t i = 0; i < cases.size(); ++i) {
        const auto post = posterior_theta(empty, DoseToxModel::power(kSix), cases[i].first, 0.3);
        c.detail << "prior " << names[i] << ":";
        for (int u = 0; u < 6; ++u) {
            const double d = std::abs(post.mtd_weights[u] - cases[i].second[u]);
            worst = std::max(worst, d);
            ok = ok && d <= 0.01;
            char buf[32];
            std::snprintf(buf, sizeof buf, " %.3f", post.mtd_weights[u]);
            c.detail << buf;
        }
        c.detail << '\n';
    }
    c.detail << "largest deviation " << worst << '\n';
    c.finish(ok);
}

void group_ud_stationary() {
    Check c("group up-and-down (2,0,1) stationary law, 1e5 cohorts");
    bool ok = true;
    const GroupUdRule rule{2, 0, 1};
    const int cohorts = 100000;
    for (const auto& cal : standard_fixed_scenarios()) {
        const Scenario& s = cal.scenario;
        const auto f = s.f();
        const int l = s.levels();
        std::vector<double> pi(static_cast<std::size_t>(l), 1.0);
        for (int u = 1; u < l; ++u) {
            const double up = std::pow(1 - f[u - 1], 2);
            const double down = 1 - std::pow(1 - f[u], 2);
            pi[u] = pi[u - 1] * up / down;
        }
        double total = 0;
        for (double v : pi) total += v;
        for (double& v : pi) v /= total;

        Rng rng(derive_seed(2718, static_cast<std::uint64_t>(s.true_mtd()), StreamTag::Thresholds));
        const auto q = random_threshold_stream(2 * cohorts, rng);
        const auto t = run_trial({"gud", rule}, s, q, TrialSetup{cohorts, 2, 2});
        double tv = 0;
        int mode = 1;
        for (int u = 1; u <= l; ++u) {
            const double emp = t.state.n_at(u) / (2.0 * cohorts);
            tv += 0.5 * std::abs(emp - pi[u - 1]);
            if (t.state.n_at(u) > t.state.n_at(mode)) mode = u;
        }
        const int want = nearest_level(f, 0.293);
        ok = ok && tv <= 0.01 && mode == want;
        c.detail << to_string(cal.family.tag) << " mtd " << s.true_mtd() << ": TV " << tv << ", mode d" << mode
                 << ", F nearest 0.293 at d" << want << '\n';
    }
    c.finish(ok);
}

void k_in_a_row_mode() {
    Check c("k-in-a-row (k=2) long-run allocation mode");
    bool ok = true;
    const int patients = 200000;
    const double median = 1 - std::pow(2.0, -0.5);
    std::vector<std::vector<double>> grids;
    for (const auto& cal : standard_fixed_scenarios()) grids.emplace_back(cal.scenario.f().begin(), cal.scenario.f().end());
    // Scenarios where 0.293 and 0.3 pick different levels.
    grids.push_back({0.05, 0.15, 0.28, 0.31, 0.5, 0.7});
    grids.push_back({0.1, 0.2, 0.295, 0.33, 0.6, 0.8});
    int idx = 0;
    for (const auto& f : grids) {
        const Scenario s = validate_scenario(f, 0.3);
        Rng rng(derive_seed(3141, static_cast<std::uint64_t>(idx++), StreamTag::Thresholds));
        const auto q = random_threshold_stream(patients, rng);
        const auto t = run_trial({"kinrow", KInARowRule{2}}, s, q, TrialSetup{patients, 1, 1});
        int mode = 1;
        for (int u = 1; u <= s.levels(); ++u) {
            if (t.state.n_at(u) > t.state.n_at(mode)) mode = u;
        }
        const int want = nearest_level(f, median);
        ok = ok && mode == want;
        c.detail << "F =";
        for (double v : f) c.detail << ' ' << std::round(v * 1000) / 1000;
        c.detail << ": mode d" << mode << ", nearest 1-2^-1/2 at d" << want << '\n';
    }
    c.finish(ok);
}

void cir_oracle() {
    Check c("CIR pooled blocks against brute-force PAVA, 1e4 inputs");
    std::mt19937_64 rng(20240);
    long bad_blocks = 0, bad_monotone = 0, bad_idempotent = 0;
    double worst = 0;
    const int inputs = 10000;
    for (int trial = 0; trial < inputs; ++trial) {
        const int n = 1 + static_cast<int>(rng() % 8);
        std::vector<double> x, y, wt;
        double pos = 0;
        for (int i = 0; i < n; ++i) {
            pos += 0.25 + static_cast<double>(rng() % 8) / 8.0;
            x.push_back(pos);
            y.push_back(static_cast<double>(rng() % 9) / 8.0);
            wt.push_back(static_cast<double>(1 + rng() % 4));
        }
        const auto r = cir(x, y, wt);
        const auto blocks = oracle::pava_blocks(x, y, wt);
        // Integer weights make the block totals exact, so the partition
        // itself is compared exactly; the means to rounding.
        bool same = r.alg_y.size() == blocks.size();
        for (std::size_t b = 0; same && b < blocks.size(); ++b) {
            same = r.alg_wt[b] == blocks[b].wt;
            worst = std::max({worst, oracle::rel_diff(r.alg_y[b], blocks[b].y),
                              oracle::rel_diff(r.alg_x[b], blocks[b].x)});
            same = same && oracle::rel_diff(r.alg_y[b], blocks[b].y) <= 1e-12 &&
                   oracle::rel_diff(r.alg_x[b], blocks[b].x) <= 1e-12;
        }
        bad_blocks += !same;
        for (std::size_t i = 1; i < r.output_y.size(); ++i) {
            if (r.output_y[i] < r.output_y[i - 1]) {
                ++bad_monotone;
                break;
            }
        }
        const auto again = cir(r.alg_x, r.alg_y, r.alg_wt);
        const auto fit = isotonic_fit(y, wt);
        bad_idempotent += !(again.alg_y == r.alg_y && again.alg_x == r.alg_x && isotonic_fit(fit, wt) == fit);
    }
    c.detail << inputs << " inputs: block mismatches " << bad_blocks << ", non-monotone " << bad_monotone
             << ", not idempotent " << bad_idempotent << ", largest relative gap " << worst << '\n';
    c.finish(bad_blocks == 0 && bad_monotone == 0 && bad_idempotent == 0);
}

void crm_oracle() {
    Check c("CRM quadrature against 1e6-point dense integration, 1e3 datasets");
    const int datasets = 1000;
    struct Case {
        TrialState state;
        DoseToxModel model;
        LogNormalPrior prior;
    };
    std::vector<Case> cases;
    std::mt19937_64 rng(777);
    for (int i = 0; i < datasets; ++i) {
        const int kind = i % 5;
        const Skeleton& sk = kind == 3 ? kFlinn : kind == 4 ? kPisters : kSix;
        const LogNormalPrior prior = kind == 0 ? kPriorA : kind == 1 ? kPriorB : kind == 2 ? kPriorC
                                     : kind == 3 ? kFlinnPrior : kPistersPrior;
        const DoseToxModel model = i % 2 == 1 ? DoseToxModel::chevret(sk, 3.0, prior.mean()) : DoseToxModel::power(sk);
        TrialState st(DoseGrid(sk.levels()), 0.3);
        const int cohorts = 1 + static_cast<int>(rng() % 12);
        for (int k = 0; k < cohorts; ++k) {
            const int size = 1 + static_cast<int>(rng() % 3);
            st.add_cohort(1 + static_cast<int>(rng() % sk.levels()), size, static_cast<int>(rng() % (size + 1)));
        }
        cases.push_back({std::move(st), model, prior});
    }
    std::vector<double> theta_gap(datasets), weight_gap(datasets);
    parallel_for(cases.size(), kJobs, [&](std::size_t i) {
        const Case& k = cases[i];
        const auto post = posterior_theta(k.state, k.model, k.prior, 0.3);
        const auto ref = oracle::dense_posterior(k.state, k.model, k.prior, 0.3);
        theta_gap[i] = oracle::rel_diff(post.theta_mean, ref.theta_mean);
        double w = 0;
        for (std::size_t u = 0; u < ref.weights.size(); ++u) w = std::max(w, oracle::rel_diff(post.mtd_weights[u], ref.weights[u]));
        weight_gap[i] = w;
    });
    const double t = *std::max_element(theta_gap.begin(), theta_gap.end());
    const double w = *std::max_element(weight_gap.begin(), weight_gap.end());
    const long over = std::count_if(theta_gap.begin(), theta_gap.end(), [](double v) { return v > 1e-6; }) +
                      std::count_if(weight_gap.begin(), weight_gap.end(), [](double v) { return v > 1e-6; });
    c.detail << "largest relative gap: theta " << t << ", weights " << w << "; over 1e-6: " << over << '\n';
    c.finish(t <= 1e-6 && w <= 1e-6);
}

void table3() {
    Check c("random-scenario table, n=25, l=7 and l=4, M=2000");
    bool ok = true;
    struct Column {
        int levels;
        std::vector<int> quotas;
        DesignConfig crm;
        int start;
        std::array<double, 3> success;
        double ccd_incoherent;
    };
    const std::vector<Column> columns{
        {7, {200, 320, 320, 320, 320, 320, 200}, {"crm", CrmConfig{DoseToxModel::power(kFlinn), kFlinnPrior}}, 2,
         {53.0, 51.4, 51.3}, 86.6},
        {4, {400, 600, 600, 400}, {"crm", CrmConfig{DoseToxModel::power(kPisters), kPistersPrior}}, 1,
         {75.2, 78.0, 76.5}, 73.5},
    };
    for (const Column& col : columns) {
        auto cfg = SceneConfig::defaults(col.levels);
        cfg.post_filter = PostFilter::for_levels(col.levels);
        Rng scen_rng(derive_seed(1955, static_cast<std::uint64_t>(col.levels), StreamTag::Scenario));
        EnsembleJob job;
        job.scenarios = stratified_ensemble(cfg, col.quotas, scen_rng);
        job.designs = {col.crm, {"ccd", CcdRule{0.3, 0.1}}, {"ud", KInARowRule{2}}};
        job.runs_per_scenario = 1;
        job.setup = TrialSetup{25, 1, col.start};
        job.seed = 1955 + static_cast<std::uint64_t>(col.levels);
        job.jobs = kJobs;
        const auto runs = run_ensemble(job);
        std::array<EnsembleReport, 3> rep;
        for (int d = 0; d < 3; ++d) rep[d] = summarize_ensemble(runs[d], SummaryOptions{25, col.levels, std::nullopt});
        char buf[256];
        std::snprintf(buf, sizeof buf,
                      "l=%d success CRM/CCD/U&D %.1f %.1f %.1f (published %.1f %.1f %.1f); incoherent %.1f %.1f %.1f; "
                      "low n* %.1f %.1f %.1f; high tox %.1f %.1f %.1f",
                      col.levels, pct(rep[0].success_full), pct(rep[1].success_full), pct(rep[2].success_full),
                      col.success[0], col.success[1], col.success[2], pct(rep[0].incoherent_runs),
                      pct(rep[1].incoherent_runs), pct(rep[2].incoherent_runs), pct(rep[0].low_n_star),
                      pct(rep[1].low_n_star), pct(rep[2].low_n_star), pct(rep[0].high_toxicity),
                      pct(rep[1].high_toxicity), pct(rep[2].high_toxicity));
        c.detail << buf << '\n';
        for (int d = 0; d < 3; ++d) {
            if (std::abs(pct(rep[d].success_full) - col.success[d]) > 5) {
                ok = false;
                c.detail << "  " << rep[d].design << " success outside +-5\n";
            }
        }
        if (std::abs(pct(rep[1].incoherent_runs) - col.ccd_incoherent) > 10) {
            ok = false;
            c.detail << "  ccd incoherence outside +-10\n";
        }
        if (rep[0].incoherent_runs != 0.0 || rep[2].incoherent_runs != 0.0) {
            ok = false;
            c.detail << "  crm or u&d incoherent\n";
        }
        if (col.levels == 7) {
            const bool order = rep[2].low_n_star < rep[0].low_n_star && rep[2].low_n_star < rep[1].low_n_star;
            if (!order || std::abs(pct(rep[2].low_n_star) - 13.7) > 6) {
                ok = false;
                c.detail << "  low n* ordering or level off\n";
            }
        }
    }
    c.finish(ok);
}

void order_sensitivity() {
    Check c("order sensitivity: permuted fixed thresholds vs fresh draws, CRM, M=1000");
    const auto fixed = standard_fixed_scenarios();
    const auto& cal = *std::find_if(fixed.begin(), fixed.end(), [](const auto& x) { return x.family.tag == FamilyTag::Normal; });
    const TrialSetup setup{16, 2, 2};
    Rng rng(derive_seed(4242, 0, StreamTag::Permutation));
    const auto permuted = run_permutation_ensemble(crm_six(), cal.scenario, setup, 1000, rng, kJobs);
    EnsembleJob job;
    job.designs = {crm_six()};
    job.scenarios = {cal.scenario};
    job.runs_per_scenario = 1000;
    job.setup = setup;
    job.seed = 4242;
    job.jobs = kJobs;
    const auto random = run_ensemble(job).front();
    const auto pr = summarize_ensemble(permuted, SummaryOptions{});
    const auto rr = summarize_ensemble(random, SummaryOptions{});
    const double low = std::count_if(random.begin(), random.end(), [](const RunMetrics& m) { return m.n_star <= 2; }) /
                       static_cast<double>(random.size());
    c.detail << "Normal scenario, MTD d" << cal.scenario.true_mtd() << ": n* variance permuted " << pr.n_star_variance
             << ", random " << rr.n_star_variance << " (ratio " << pr.n_star_variance / rr.n_star_variance << ")\n"
             << "random draws with n* <= 2: " << pct(low) << "% (published 14%)\n";
    c.finish(pr.n_star_variance >= 0.6 * rr.n_star_variance && low >= 0.05);
}

void settling() {
    Check c("settling: CRM on the six calibrated scenarios, 16 cohorts of 2, M=1000 each");
    EnsembleJob job;
    job.designs = {crm_six()};
    for (const auto& cal : standard_fixed_scenarios()) job.scenarios.push_back(cal.scenario);
    job.runs_per_scenario = 1000;
    job.setup = TrialSetup{16, 2, 2};
    job.seed = 8080;
    job.jobs = kJobs;
    const auto runs = run_ensemble(job).front();
    for (std::size_t s = 0; s < job.scenarios.size(); ++s) {
        const std::span<const RunMetrics> part(runs.data() + s * 1000, 1000);
        const auto r = summarize_ensemble(part, SummaryOptions{});
        c.detail << "mtd d" << job.scenarios[s].true_mtd() << ": by 8 " << pct(r.settled_by(8)) << "%, by 12 "
                 << pct(r.settled_by(12)) << "%\n";
    }
    const auto all = summarize_ensemble(runs, SummaryOptions{});
    c.detail << "pooled: by 8 " << pct(all.settled_by(8)) << "% (want 40-60), by 12 " << pct(all.settled_by(12))
             << "% (want >= 75)\n";
    c.finish(all.settled_by(8) >= 0.40 && all.settled_by(8) <= 0.60 && all.settled_by(12) >= 0.75);
}

void three_plus_three() {
    Check c("3+3 exhaustive on a four-level grid");
    oracle::ThreePlusThreeWalk walk{4};
    walk.run();
    c.detail << walk.histories << " terminal histories, " << walk.steps << " decisions, " << walk.mismatches
             << " mismatches, most cohorts at one level " << walk.max_visits << '\n';
    c.finish(walk.mismatches == 0 && walk.max_visits <= 2);
}

void determinism() {
    Check c("determinism across worker counts");
    EnsembleJob job;
    job.designs = {crm_six(), {"ccd", CcdRule{0.3, 0.1}}, {"gud", GroupUdRule{2, 0, 1}}, {"rad", RadRule{}}};
    for (const auto& cal : standard_fixed_scenarios()) job.scenarios.push_back(cal.scenario);
    job.runs_per_scenario = 25;
    job.seed = 99;
    auto render = [&](int jobs) {
        job.jobs = jobs;
        const auto runs = run_ensemble(job);
        std::ostringstream out;
        for (const auto& d : runs) {
            write_runs_csv(out, d);
            out << report_to_json(summarize_ensemble(d, SummaryOptions{})).dump() << '\n';
        }
        return out.str();
    };
    const std::string one = render(1);
    bool ok = true;
    for (int jobs : {2, 3, 8}) {
        const bool same = render(jobs) == one;
        c.detail << "jobs " << jobs << ": " << (same ? "identical" : "DIFFERENT") << '\n';
        ok = ok && same;
    }
    c.detail << one.size() << " bytes compared per run\n";
    c.finish(ok);
}

}  // namespace

int main() {
    std::printf("acceptance: %d worker thread(s)\n", kJobs);
    prior_weights();
    group_ud_stationary();
    k_in_a_row_mode();
    cir_oracle();
    crm_oracle();
    table3();
    order_sensitivity();
    settling();
    three_plus_three();
    determinism();
    std::printf("%d of 10 failed\n", failures);
    return failures;
}
