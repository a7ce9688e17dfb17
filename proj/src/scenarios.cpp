#include "phase1/scenarios.hpp"

#include <algorithm>
#include <boost/math/special_functions/erf.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <boost/random/discrete_distribution.hpp>
#include <boost/random/gamma_distribution.hpp>
#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_int_distribution.hpp>
#include <boost/random/uniform_real_distribution.hpp>
#include <cmath>
#include <numbers>

namespace phase1 {
namespace {

double norm_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }
double norm_quantile(double p) { return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * p); }
double norm_pdf(double x, double mean, double sd) {
    const double z = (x - mean) / sd;
    return std::exp(-0.5 * z * z) / (sd * std::sqrt(2.0 * std::numbers::pi));
}

// Family parameters for a given spread with F(x_mtd) = p.
ParametricFamily family_for_spread(FamilyTag tag, double x_mtd, double p, double spread) {
    switch (tag) {
        case FamilyTag::Uniform: return {tag, x_mtd - p * spread, spread};
        case FamilyTag::Normal: return {tag, x_mtd - spread * norm_quantile(p), spread};
        case FamilyTag::Logistic: return {tag, x_mtd - spread * std::log(p / (1.0 - p)), spread};
        case FamilyTag::Lognormal: return {tag, std::log(x_mtd) - spread * norm_quantile(p), spread};
        case FamilyTag::Gamma: {
            const double shape = 1.0 / (spread * spread);
            return {tag, shape, x_mtd / boost::math::gamma_p_inv(shape, p)};
        }
        case FamilyTag::Weibull: {
            const double shape = 1.0 / spread;
            return {tag, shape, x_mtd / std::pow(-std::log1p(-p), spread)};
        }
    }
    throw Error(ErrorCode::InvalidArgument, "unknown family");
}

double round_half_even(double x) { return std::nearbyint(x); }

}  // namespace

std::string to_string(FamilyTag tag) {
    switch (tag) {
        case FamilyTag::Uniform: return "uniform";
        case FamilyTag::Gamma: return "gamma";
        case FamilyTag::Normal: return "normal";
        case FamilyTag::Lognormal: return "lognormal";
        case FamilyTag::Weibull: return "weibull";
        case FamilyTag::Logistic: return "logistic";
    }
    return "unknown";
}

FamilyTag family_from_string(const std::string& name) {
    for (FamilyTag t : {FamilyTag::Uniform, FamilyTag::Gamma, FamilyTag::Normal, FamilyTag::Lognormal,
                        FamilyTag::Weibull, FamilyTag::Logistic}) {
        if (to_string(t) == name) return t;
    }
    throw Error(ErrorCode::InvalidArgument, "unknown curve family '" + name + "'");
}

double ParametricFamily::cdf(double x) const {
    switch (tag) {
        case FamilyTag::Uniform: return std::clamp((x - a) / b, 0.0, 1.0);
        case FamilyTag::Normal: return norm_cdf((x - a) / b);
        case FamilyTag::Logistic: return 1.0 / (1.0 + std::exp(-(x - a) / b));
        case FamilyTag::Lognormal: return x <= 0.0 ? 0.0 : norm_cdf((std::log(x) - a) / b);
        case FamilyTag::Gamma: return x <= 0.0 ? 0.0 : boost::math::gamma_p(a, x / b);
        case FamilyTag::Weibull: return x <= 0.0 ? 0.0 : -std::expm1(-std::pow(x / b, a));
    }
    return 0.0;
}

CalibratedScenario calibrate_fixed_scenario(FamilyTag family, const DoseGrid& grid, double target,
                                            int mtd_level, double neighbor_gap) {
    if (!grid.contains(mtd_level)) throw Error(ErrorCode::OutOfRange, "MTD level outside the grid");
    if (!(target > 0.0 && target < 1.0)) throw Error(ErrorCode::OutOfRange, "target outside (0,1)");
    if (!(neighbor_gap > 0.0 && neighbor_gap < std::min(target, 1.0 - target))) {
        throw Error(ErrorCode::InvalidArgument, "neighbour gap must be positive and keep levels inside (0,1)");
    }
    const double x_mtd = grid.dose(mtd_level);
    const bool has_below = mtd_level > 1;
    const bool has_above = mtd_level < grid.levels();
    const double x_below = has_below ? grid.dose(mtd_level - 1) : 0.0;
    const double x_above = has_above ? grid.dose(mtd_level + 1) : 0.0;
    if (family == FamilyTag::Lognormal || family == FamilyTag::Gamma || family == FamilyTag::Weibull) {
        if (!(grid.doses().front() > 0.0)) {
            throw Error(ErrorCode::Infeasible, to_string(family) + " family needs positive doses");
        }
    }

    auto feasible = [&](double spread) {
        const ParametricFamily fam = family_for_spread(family, x_mtd, target, spread);
        if (has_below && fam.cdf(x_below) > target - neighbor_gap) return false;
        if (has_above && fam.cdf(x_above) < target + neighbor_gap) return false;
        return true;
    };

    // Shallowest curve meeting the neighbour constraints: bisection on the
    // log-spread between a steep (feasible) and a shallow (infeasible) end.
    double lo = std::log(1e-4);
    double hi = std::log(1e-4);
    if (!feasible(std::exp(lo))) {
        throw Error(ErrorCode::Infeasible, "no " + to_string(family) + " curve satisfies the neighbour gaps");
    }
    while (feasible(std::exp(hi))) {
        hi += 1.0;
        if (hi > std::log(1e4)) break;
    }
    for (int it = 0; it < 200 && hi - lo > 1e-13; ++it) {
        const double mid = 0.5 * (lo + hi);
        (feasible(std::exp(mid)) ? lo : hi) = mid;
    }
    ParametricFamily fam = family_for_spread(family, x_mtd, target, std::exp(lo));

    std::vector<double> f;
    f.reserve(static_cast<std::size_t>(grid.levels()));
    for (double x : grid.doses()) f.push_back(fam.cdf(x));
    // F(d_mtd) = target up to rounding in the closed-form solve; pin exactly.
    if (std::abs(f[static_cast<std::size_t>(mtd_level - 1)] - target) > 1e-10) {
        throw Error(ErrorCode::Infeasible, "calibration missed the target at the MTD");
    }
    f[static_cast<std::size_t>(mtd_level - 1)] = target;
    Scenario sc = [&] {
        try {
            return validate_scenario(grid, f, target);
        } catch (const Error& e) {
            throw Error(ErrorCode::Infeasible, to_string(family) + " calibration gives an invalid scenario: " + e.what());
        }
    }();
    if (sc.true_mtd() != mtd_level) throw Error(ErrorCode::Infeasible, "calibrated MTD differs from requested level");
    return {std::move(sc), fam};
}

std::vector<CalibratedScenario> standard_fixed_scenarios(double target) {
    const DoseGrid grid(6);
    const FamilyTag order[] = {FamilyTag::Uniform, FamilyTag::Gamma,   FamilyTag::Normal,
                               FamilyTag::Lognormal, FamilyTag::Weibull, FamilyTag::Logistic};
    std::vector<CalibratedScenario> out;
    for (int u = 1; u <= 6; ++u) {
        out.push_back(calibrate_fixed_scenario(order[u - 1], grid, target, u));
    }
    return out;
}

PostFilter PostFilter::for_levels(int levels) {
    if (levels == 4) return {0.18, 0.42, 0.09};
    return {0.22, 0.38, 0.06};
}

SceneConfig SceneConfig::defaults(int nlev) {
    SceneConfig c;
    c.nlev = nlev;
    c.marg = static_cast<int>(round_half_even(nlev / 2.0));
    c.maxstep = 2.5 / nlev;
    c.minstep = 0.15 / nlev;
    c.maxerr = 0.5 / nlev;
    c.minedge = c.maxerr;
    return c;
}

void SceneConfig::validate() const {
    if (nlev < 2) throw Error(ErrorCode::InvalidArgument, "generator needs nlev >= 2");
    if (marg < 1) throw Error(ErrorCode::InvalidArgument, "generator needs marg >= 1");
    if (!(baseline > 0.0 && peakmean > 0.0 && peaksd > 1.0)) {
        throw Error(ErrorCode::InvalidArgument, "generator needs baseline > 0, peakmean > 0, peaksd > 1");
    }
    if (!(targ > 0.0 && targ < 1.0)) throw Error(ErrorCode::OutOfRange, "generator target outside (0,1)");
    if (!(minstep >= 0.0 && maxstep > minstep && maxerr > 0.0 && minedge >= 0.0 && protectfac > 0.0)) {
        throw Error(ErrorCode::InvalidArgument, "inconsistent generator vetting limits");
    }
    if (shift < 0.0) throw Error(ErrorCode::InvalidArgument, "generator shift must be nonnegative");
    if (max_attempts < 1) throw Error(ErrorCode::InvalidArgument, "generator needs max_attempts >= 1");
}

VettingReport check_vetting(std::span<const double> f, const SceneConfig& cfg) {
    VettingReport rep;
    if (f.size() != static_cast<std::size_t>(cfg.nlev)) return rep;
    rep.range_ok = std::all_of(f.begin(), f.end(), [](double v) { return v > 0.0 && v < 1.0; });

    double max_gap = -1.0;
    double min_gap = 2.0;
    for (std::size_t i = 1; i < f.size(); ++i) {
        max_gap = std::max(max_gap, f[i] - f[i - 1]);
        min_gap = std::min(min_gap, f[i] - f[i - 1]);
    }
    rep.steps_ok = max_gap <= cfg.maxstep && min_gap >= cfg.minstep;

    std::vector<double> dist;
    for (double v : f) dist.push_back(std::abs(v - cfg.targ));
    const auto best = static_cast<std::size_t>(std::min_element(dist.begin(), dist.end()) - dist.begin());
    const double closest = dist[best];
    rep.closest_ok = closest <= cfg.maxerr;
    double runner_up = 2.0;
    for (std::size_t i = 0; i < dist.size(); ++i) {
        if (i != best) runner_up = std::min(runner_up, dist[i]);
    }
    rep.margin_ok = runner_up >= std::max(cfg.minedge + closest, cfg.protectfac * cfg.maxerr);

    if (cfg.post_filter) {
        const PostFilter& pf = *cfg.post_filter;
        const double at_mtd = f[best];
        bool ok = at_mtd >= pf.mtd_low && at_mtd <= pf.mtd_high;
        for (std::size_t i = 0; i < f.size(); ++i) {
            if (i == best) continue;
            if (f[i] >= pf.mtd_low && f[i] <= pf.mtd_high) ok = false;
            if (dist[i] < closest + pf.min_margin) ok = false;
        }
        rep.post_filter_ok = ok;
    }
    return rep;
}

Scenario random_scenario(const SceneConfig& cfg, Rng& rng) {
    cfg.validate();
    using boost::random::uniform_int_distribution;
    using boost::random::uniform_real_distribution;
    const int nlev = cfg.nlev;

    for (long long attempt = 0; attempt < cfg.max_attempts; ++attempt) {
        // Relative magnitude of the mode.
        const double peak =
            std::exp(boost::random::normal_distribution<double>(std::log(cfg.peakmean), std::log(cfg.peaksd))(rng));
        // Padded length: the Dirichlet vector is longer than nlev.
        const int seedlen = nlev + 2 * uniform_int_distribution<int>(1, cfg.marg)(rng);
        const int asym = static_cast<int>(round_half_even(2.0 * seedlen * (cfg.targ - 0.5)));

        // Dirichlet parameters: roughly uniform base plus a Gaussian bump.
        std::vector<double> centre_w(static_cast<std::size_t>(seedlen));
        for (int j = 1; j <= seedlen; ++j) {
            centre_w[static_cast<std::size_t>(j - 1)] = norm_pdf(j, (seedlen - asym) / 2.0, seedlen);
        }
        const int centre = 1 + boost::random::discrete_distribution<int>(centre_w.begin(), centre_w.end())(rng);
        const double bump_sd = cfg.peaksd * uniform_real_distribution<double>(seedlen / 8.0, seedlen / 2.0)(rng);
        std::vector<double> alpha(static_cast<std::size_t>(seedlen));
        for (int j = 1; j <= seedlen; ++j) {
            const double base = uniform_real_distribution<double>(cfg.baseline, 2.0 * cfg.baseline)(rng);
            alpha[static_cast<std::size_t>(j - 1)] = base + 2.5 * peak * norm_pdf(j, centre, bump_sd);
        }

        // Dirichlet draw as normalized Gamma variates, then cumulative sums.
        std::vector<double> cum(static_cast<std::size_t>(seedlen));
        double total = 0.0;
        for (std::size_t j = 0; j < alpha.size(); ++j) {
            cum[j] = boost::random::gamma_distribution<double>(alpha[j], 1.0)(rng);
            total += cum[j];
        }
        double run = 0.0;
        for (double& v : cum) {
            run += v;
            v = run / total;
        }

        // Asymmetric subsample of nlev positions (1-based) out of the range.
        const int sign = (asym > 0) - (asym < 0);
        const int sampasym = sign * std::min(std::abs(asym) - 1, seedlen - nlev - 1);
        const int lo = std::max(1, sampasym);
        const int hi = std::min(seedlen - 1, seedlen - 1 + sampasym);
        std::vector<int> pool;
        for (int j = lo; j <= hi; ++j) pool.push_back(j);
        if (static_cast<int>(pool.size()) < nlev) continue;
        for (int i = 0; i < nlev; ++i) {
            const int pick = uniform_int_distribution<int>(i, static_cast<int>(pool.size()) - 1)(rng);
            std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(pick)]);
        }
        pool.resize(static_cast<std::size_t>(nlev));
        std::sort(pool.begin(), pool.end());
        std::vector<double> candid;
        candid.reserve(static_cast<std::size_t>(nlev));
        for (int j : pool) candid.push_back(cum[static_cast<std::size_t>(j - 1)]);

        if (cfg.warp) {
            const double power = uniform_real_distribution<double>(0.1 / cfg.targ, 1.0 / cfg.targ)(rng);
            for (double& v : candid) v = std::pow(v, power);
        }
        if (cfg.shift > 0.0) {
            const double lo_shift = std::max(-cfg.shift, -candid.front());
            const double hi_shift = std::min(1.0 - candid.back(), cfg.shift);
            const double s = uniform_real_distribution<double>(lo_shift, hi_shift)(rng);
            for (double& v : candid) v += s;
        }

        // Vetting.
        bool accept = std::all_of(candid.begin(), candid.end(), [](double v) { return v > 0.0 && v < 1.0; });
        double max_gap = -1.0, min_gap = 2.0;
        for (int i = 1; i < nlev; ++i) {
            const double g = candid[static_cast<std::size_t>(i)] - candid[static_cast<std::size_t>(i - 1)];
            max_gap = std::max(max_gap, g);
            min_gap = std::min(min_gap, g);
        }
        if (max_gap > cfg.maxstep || min_gap < cfg.minstep) accept = false;
        std::size_t which = 0;
        for (std::size_t i = 1; i < candid.size(); ++i) {
            if (std::abs(candid[i] - cfg.targ) < std::abs(candid[which] - cfg.targ)) which = i;
        }
        const double closest = std::abs(candid[which] - cfg.targ);
        if (closest > cfg.maxerr) accept = false;
        double competitor = 2.0;
        for (std::size_t i = 0; i < candid.size(); ++i) {
            if (i != which) competitor = std::min(competitor, std::abs(candid[i] - cfg.targ));
        }
        if (competitor < std::max(cfg.minedge + closest, cfg.protectfac * cfg.maxerr)) accept = false;
        if (accept && cfg.post_filter) {
            const PostFilter& pf = *cfg.post_filter;
            const double f_mtd = candid[which];
            if (f_mtd < pf.mtd_low || f_mtd > pf.mtd_high) accept = false;
            for (std::size_t i = 0; i < candid.size() && accept; ++i) {
                if (i == which) continue;
                const double d = std::abs(candid[i] - cfg.targ);
                if ((candid[i] >= pf.mtd_low && candid[i] <= pf.mtd_high) || d < closest + pf.min_margin) {
                    accept = false;
                }
            }
        }
        if (accept) return validate_scenario(std::move(candid), cfg.targ);
    }
    throw Error(ErrorCode::GeneratorStarved,
                "no scenario passed vetting in " + std::to_string(cfg.max_attempts) + " attempts");
}

std::vector<Scenario> stratified_ensemble(const SceneConfig& cfg, std::span<const int> quotas, Rng& rng,
                                          const EnsembleOptions& options) {
    cfg.validate();
    if (quotas.size() != static_cast<std::size_t>(cfg.nlev)) {
        throw Error(ErrorCode::LengthMismatch, "one quota per dose level required");
    }
    long long total = 0;
    for (int q : quotas) {
        if (q < 0) throw Error(ErrorCode::InvalidArgument, "quotas must be nonnegative");
        total += q;
    }
    const long long max_draws = options.max_draws > 0 ? options.max_draws : 100000 + 1000 * total;

    std::vector<Scenario> super;
    std::vector<std::vector<std::size_t>> strata(quotas.size());
    auto filled = [&] {
        for (std::size_t u = 0; u < quotas.size(); ++u) {
            if (strata[u].size() < static_cast<std::size_t>(quotas[u])) return false;
        }
        return true;
    };
    long long draws = 0;
    while (!filled()) {
        if (draws++ >= max_draws) {
            throw Error(ErrorCode::GeneratorStarved, "a stratum could not be filled within the draw budget");
        }
        Scenario s = random_scenario(cfg, rng);
        strata[static_cast<std::size_t>(s.true_mtd() - 1)].push_back(super.size());
        super.push_back(std::move(s));
    }

    std::vector<std::size_t> chosen;
    for (std::size_t u = 0; u < quotas.size(); ++u) {
        auto& pool = strata[u];
        const auto need = static_cast<std::size_t>(quotas[u]);
        for (std::size_t i = 0; i < need; ++i) {
            const auto pick = boost::random::uniform_int_distribution<std::size_t>(i, pool.size() - 1)(rng);
            std::swap(pool[i], pool[pick]);
        }
        chosen.insert(chosen.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(need));
    }
    std::sort(chosen.begin(), chosen.end());
    std::vector<Scenario> out;
    out.reserve(chosen.size());
    for (std::size_t idx : chosen) out.push_back(super[idx]);
    return out;
}

}  // namespace phase1
