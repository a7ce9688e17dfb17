#include "phase1/simulator.hpp"

#include <algorithm>
#include <boost/random/uniform_int_distribution.hpp>
#include <cmath>

namespace phase1 {

void TrialSetup::validate(int levels) const {
    if (cohorts < 1) throw Error(ErrorCode::InvalidArgument, "a trial needs at least one cohort");
    if (cohort_size < 1) throw Error(ErrorCode::InvalidArgument, "cohort size must be positive");
    if (start_level < 1 || start_level > levels) {
        throw Error(ErrorCode::OutOfRange, "start level " + std::to_string(start_level) + " outside the grid");
    }
}

Trajectory run_trial(const DesignConfig& design, const Scenario& scenario, const ThresholdStream& stream,
                     const TrialSetup& setup, Rng& design_rng, std::string scenario_id) {
    setup.validate(scenario.levels());
    validate_design(design.spec, scenario.levels());
    if (const auto need = required_cohort_size(design.spec); need && *need != setup.cohort_size) {
        throw Error(ErrorCode::CohortSizeMismatch, design_tag(design.spec) + " requires cohorts of " +
                                                       std::to_string(*need));
    }
    if (stream.size() < setup.patients()) {
        throw Error(ErrorCode::StreamExhausted, "threshold stream holds " + std::to_string(stream.size()) +
                                                    " values but the trial needs " +
                                                    std::to_string(setup.patients()));
    }

    Trajectory traj{std::move(scenario_id), design.name.empty() ? design_tag(design.spec) : design.name,
                    TrialState(scenario.grid(), scenario.target()), std::nullopt, std::nullopt, false};
    int level = setup.start_level;
    std::size_t patient = 0;
    for (int c = 0; c < setup.cohorts; ++c) {
        int dlts = 0;
        for (int j = 0; j < setup.cohort_size; ++j) {
            dlts += toxicity_outcome(stream[patient++], level, scenario) ? 1 : 0;
        }
        traj.state.add_cohort(level, setup.cohort_size, dlts);
        if (c + 1 == setup.cohorts) break;
        const DesignAction action = next_action(design.spec, traj.state, design_rng);
        if (action.is_stop()) {
            traj.stopped_early = true;
            traj.selected_full = action.selected;
            break;
        }
        level = action.level;
    }
    if (!traj.stopped_early) traj.selected_full = select_mtd(design.spec, traj.state);
    const auto half = static_cast<std::size_t>(setup.cohorts / 2);
    if (traj.state.cohort_count() > half || (!traj.stopped_early && traj.state.cohort_count() == half)) {
        traj.selected_half = select_mtd(design.spec, traj.state.prefix(half));
    } else {
        traj.selected_half = traj.selected_full;
    }
    return traj;
}

Trajectory run_trial(const DesignConfig& design, const Scenario& scenario, const ThresholdStream& stream,
                     const TrialSetup& setup) {
    Rng rng(0);
    return run_trial(design, scenario, stream, setup, rng);
}

ThresholdStream random_threshold_stream(std::size_t n, Rng& rng) {
    std::vector<double> q(n);
    for (double& v : q) v = uniform_open01(rng);
    return ThresholdStream(std::move(q), StreamProvenance::RandomDraw);
}

ThresholdStream perfect_threshold_set(int n, double p) {
    if (n < 2) throw Error(ErrorCode::InvalidArgument, "perfect set needs n >= 2");
    const double step = 1.0 / (n + 1);
    if (!(p > step && p < n * step)) {
        throw Error(ErrorCode::OutOfRange, "target must lie strictly between 1/(n+1) and n/(n+1)");
    }
    int below = 0;  // largest i with i/(n+1) < p
    int above = 0;  // smallest i with i/(n+1) > p
    for (int i = 1; i <= n; ++i) {
        const double q = i * step;
        if (q < p) below = i;
        if (q > p && above == 0) above = i;
    }
    std::vector<double> q;
    q.reserve(static_cast<std::size_t>(n));
    for (int i = 1; i <= n; ++i) {
        if (i != below && i != above) q.push_back(i * step);
    }
    q.push_back(step);
    q.push_back(n * step);
    std::sort(q.begin(), q.end());
    return ThresholdStream(std::move(q), StreamProvenance::PermutedFixedSet);
}

std::optional<Settling> find_settling(std::span<const CohortRecord> cohorts) {
    // The starting cohort is excluded from every window.
    int run = 0;
    for (std::size_t c = 1; c < cohorts.size(); ++c) {
        run = (c >= 2 && cohorts[c].level == cohorts[c - 1].level) ? run + 1 : 1;
        if (run == kSettlingWindow) return Settling{static_cast<int>(c) + 1, cohorts[c].level};
    }
    return std::nullopt;
}

RunMetrics compute_metrics(const Trajectory& traj, int true_mtd) {
    RunMetrics m;
    m.scenario_id = traj.scenario_id;
    m.design = traj.design;
    m.true_mtd = true_mtd;
    const auto cohorts = traj.state.cohorts();
    m.cohorts = static_cast<int>(cohorts.size());
    for (std::size_t c = 0; c < cohorts.size(); ++c) {
        if (c >= 1 && cohorts[c].level == true_mtd) ++m.n_star;
        m.total_dlts += cohorts[c].dlts;
        if (c >= 1) m.dlts_after_first += cohorts[c].dlts;
        if (c + 1 < cohorts.size()) {
            const int from = cohorts[c].level;
            const int to = cohorts[c + 1].level;
            if ((to > from && cohorts[c].dlts >= 1) || (to < from && cohorts[c].dlts == 0)) ++m.incoherent;
        }
    }
    if (const auto settle = find_settling(cohorts)) {
        m.settling_cohort = settle->cohort;
        m.settled_level = settle->level;
    }
    m.selected_half = traj.selected_half;
    m.selected_full = traj.selected_full;
    return m;
}

ThresholdStream permute_stream(const ThresholdStream& base, Rng& rng) {
    std::vector<double> q(base.values().begin(), base.values().end());
    for (std::size_t i = q.size(); i > 1; --i) {
        const auto j = boost::random::uniform_int_distribution<std::size_t>(0, i - 1)(rng);
        std::swap(q[i - 1], q[j]);
    }
    return ThresholdStream(std::move(q), StreamProvenance::PermutedFixedSet);
}

std::vector<RunMetrics> run_permutation_ensemble(const DesignConfig& design, const Scenario& scenario,
                                                 const TrialSetup& setup, int runs, Rng& rng, int jobs) {
    if (runs < 0) throw Error(ErrorCode::InvalidArgument, "run count must be nonnegative");
    const ThresholdStream base = perfect_threshold_set(static_cast<int>(setup.patients()), scenario.target());
    std::vector<ThresholdStream> streams;
    std::vector<std::uint64_t> design_seeds;
    streams.reserve(static_cast<std::size_t>(runs));
    for (int i = 0; i < runs; ++i) {
        streams.push_back(permute_stream(base, rng));
        design_seeds.push_back(rng());
    }
    std::vector<RunMetrics> out(static_cast<std::size_t>(runs));
    parallel_for(out.size(), jobs, [&](std::size_t i) {
        Rng design_rng(design_seeds[i]);
        const Trajectory traj = run_trial(design, scenario, streams[i], setup, design_rng);
        out[i] = compute_metrics(traj, scenario.true_mtd());
        out[i].run_id = i;
    });
    return out;
}

std::vector<std::vector<RunMetrics>> run_ensemble(const EnsembleJob& job) {
    if (job.runs_per_scenario < 0) throw Error(ErrorCode::InvalidArgument, "runs per scenario must be nonnegative");
    if (!job.scenario_ids.empty() && job.scenario_ids.size() != job.scenarios.size()) {
        throw Error(ErrorCode::LengthMismatch, "one id per scenario required");
    }
    for (const DesignConfig& d : job.designs) {
        for (const Scenario& s : job.scenarios) validate_design(d.spec, s.levels());
    }
    const std::size_t per = static_cast<std::size_t>(job.runs_per_scenario);
    const std::size_t total = per * job.scenarios.size();
    std::vector<std::vector<RunMetrics>> out(job.designs.size(), std::vector<RunMetrics>(total));
    parallel_for(total, job.jobs, [&](std::size_t run) {
        const std::size_t s = run / per;
        const Scenario& scenario = job.scenarios[s];
        const std::string id = job.scenario_ids.empty() ? "s" + std::to_string(s) : job.scenario_ids[s];
        Rng threshold_rng(derive_seed(job.seed, run, StreamTag::Thresholds));
        const ThresholdStream stream = random_threshold_stream(job.setup.patients(), threshold_rng);
        for (std::size_t d = 0; d < job.designs.size(); ++d) {
            Rng design_rng(derive_seed(job.seed, run, StreamTag::Design));
            const Trajectory traj = run_trial(job.designs[d], scenario, stream, job.setup, design_rng, id);
            RunMetrics m = compute_metrics(traj, scenario.true_mtd());
            m.run_id = run;
            out[d][run] = std::move(m);
        }
    });
    return out;
}

int SummaryOptions::toxicity_threshold() const {
    if (high_toxicity_above) return *high_toxicity_above;
    if (levels == 7) return 9;
    if (levels == 4) return 10;
    return static_cast<int>(std::ceil(0.4 * (cohorts - 1)));
}

SettlingStage settling_stage(std::optional<int> settling_cohort) {
    if (!settling_cohort) return SettlingStage::Later;
    if (*settling_cohort <= 8) return SettlingStage::By8;
    if (*settling_cohort <= 12) return SettlingStage::By12;
    if (*settling_cohort <= 16) return SettlingStage::By16;
    return SettlingStage::Later;
}

double EnsembleReport::settled_by(int cohort) const {
    if (runs == 0) return 0.0;
    const auto n = std::upper_bound(settling_cohorts.begin(), settling_cohorts.end(), cohort) - settling_cohorts.begin();
    return static_cast<double>(n) / runs;
}

EnsembleReport summarize_ensemble(std::span<const RunMetrics> runs, const SummaryOptions& options) {
    if (runs.empty()) throw Error(ErrorCode::InvalidArgument, "cannot summarize an empty ensemble");
    if (options.cohorts < 1 || options.levels < 1) {
        throw Error(ErrorCode::InvalidArgument, "summary needs positive cohort and level counts");
    }
    EnsembleReport rep;
    rep.design = runs.front().design;
    rep.runs = static_cast<int>(runs.size());
    rep.cohorts = options.cohorts;
    rep.levels = options.levels;
    rep.n_star_histogram.assign(static_cast<std::size_t>(options.cohorts), 0);

    const int allocations = options.cohorts - 1;
    const int high_cut = (allocations + 1) / 2;  // ceil((N-1)/2)
    const double low_cut = static_cast<double>(allocations) / options.levels;
    const int tox_cut = options.toxicity_threshold();
    int half = 0, full = 0, high = 0, low = 0, tox = 0, incoherent = 0;
    double sum = 0.0;
    for (const RunMetrics& m : runs) {
        half += m.correct_half();
        full += m.correct_full();
        high += m.n_star >= high_cut;
        low += m.n_star < low_cut;
        tox += m.dlts_after_first > tox_cut;
        incoherent += m.incoherent > 0;
        sum += m.n_star;
        if (m.n_star < 0 || m.n_star >= options.cohorts) {
            throw Error(ErrorCode::OutOfRange, "n* outside [0, N-1]");
        }
        ++rep.n_star_histogram[static_cast<std::size_t>(m.n_star)];
        const bool correct = m.settled_level ? *m.settled_level == m.true_mtd : m.correct_full();
        ++rep.settling[static_cast<std::size_t>(settling_stage(m.settling_cohort))][correct ? 1 : 0];
        if (m.settling_cohort) rep.settling_cohorts.push_back(*m.settling_cohort);
    }
    const double n = static_cast<double>(runs.size());
    rep.success_half = half / n;
    rep.success_full = full / n;
    rep.high_n_star = high / n;
    rep.low_n_star = low / n;
    rep.high_toxicity = tox / n;
    rep.incoherent_runs = incoherent / n;
    rep.n_star_mean = sum / n;
    double ss = 0.0;
    for (const RunMetrics& m : runs) ss += (m.n_star - rep.n_star_mean) * (m.n_star - rep.n_star_mean);
    rep.n_star_variance = ss / n;
    std::sort(rep.settling_cohorts.begin(), rep.settling_cohorts.end());
    return rep;
}

}  // namespace phase1
