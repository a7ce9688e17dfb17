#include "phase1/crm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace phase1 {
namespace {

// log(1 + exp(x)) without overflow.
double softplus(double x) {
    if (x > 0.0) return x + std::log1p(std::exp(-x));
    return std::log1p(std::exp(x));
}

struct Tally {
    int level;
    int n;
    int r;
};

std::vector<Tally> tallies(const TrialState& state) {
    std::vector<Tally> out;
    for (int u = 1; u <= state.levels(); ++u) {
        if (state.n_at(u) > 0) out.push_back({u, state.n_at(u), state.dlts_at(u)});
    }
    return out;
}

// Unnormalized log posterior density of t = log(theta).
class LogPosterior {
public:
    LogPosterior(const DoseToxModel& model, const LogNormalPrior& prior, std::vector<Tally> data)
        : model_(model), prior_(prior), data_(std::move(data)) {}

    double operator()(double t) const {
        const double z = (t - prior_.mu) / prior_.sigma;
        double lp = -0.5 * z * z;
        const double theta = std::exp(t);
        for (const Tally& d : data_) {
            double lg = 0.0;
            double l1g = 0.0;
            model_.log_probs(d.level, theta, lg, l1g);
            if (d.r > 0) lp += d.r * lg;
            if (d.n > d.r) lp += (d.n - d.r) * l1g;
        }
        return lp;
    }

private:
    const DoseToxModel& model_;
    LogNormalPrior prior_;
    std::vector<Tally> data_;
};

// Integrates {density, theta * density} over [a, b] with Romberg
// extrapolation on both components simultaneously.
struct Moments {
    double mass = 0.0;
    double theta_mass = 0.0;
    double log_mass = 0.0;  // t * density
};

class PosteriorIntegrator {
public:
    PosteriorIntegrator(const LogPosterior& logpost, double shift, double abs_floor,
                        const QuadratureOptions& options)
        : logpost_(logpost), shift_(shift), abs_floor_(abs_floor), opt_(options) {}

    Moments integrate(double a, double b) const {
        const int max_level = opt_.max_level;
        std::vector<Moments> prev_row, row;
        double h = b - a;
        Moments trap;
        {
            const Moments fa = eval(a);
            const Moments fb = eval(b);
            trap.mass = 0.5 * h * (fa.mass + fb.mass);
            trap.theta_mass = 0.5 * h * (fa.theta_mass + fb.theta_mass);
            trap.log_mass = 0.5 * h * (fa.log_mass + fb.log_mass);
        }
        prev_row.push_back(trap);
        for (int k = 1; k <= max_level; ++k) {
            const long long count = 1LL << (k - 1);
            h *= 0.5;
            Moments sum;
            for (long long i = 0; i < count; ++i) {
                const Moments f = eval(a + (2 * i + 1) * h);
                sum.mass += f.mass;
                sum.theta_mass += f.theta_mass;
                sum.log_mass += f.log_mass;
            }
            row.assign(static_cast<std::size_t>(k) + 1, Moments{});
            row[0].mass = 0.5 * prev_row[0].mass + h * sum.mass;
            row[0].theta_mass = 0.5 * prev_row[0].theta_mass + h * sum.theta_mass;
            row[0].log_mass = 0.5 * prev_row[0].log_mass + h * sum.log_mass;
            double factor = 1.0;
            for (int j = 1; j <= k; ++j) {
                factor *= 4.0;
                const auto uj = static_cast<std::size_t>(j);
                row[uj].mass = row[uj - 1].mass + (row[uj - 1].mass - prev_row[uj - 1].mass) / (factor - 1.0);
                row[uj].theta_mass = row[uj - 1].theta_mass +
                                     (row[uj - 1].theta_mass - prev_row[uj - 1].theta_mass) / (factor - 1.0);
                row[uj].log_mass =
                    row[uj - 1].log_mass + (row[uj - 1].log_mass - prev_row[uj - 1].log_mass) / (factor - 1.0);
            }
            const Moments& cur = row.back();
            const Moments& old = prev_row.back();
            if (k >= opt_.min_level && converged(cur.mass, old.mass) &&
                converged(cur.theta_mass, old.theta_mass) && converged(cur.log_mass, old.log_mass)) {
                return cur;
            }
            std::swap(prev_row, row);
        }
        throw Error(ErrorCode::QuadratureFailure, "posterior quadrature did not converge");
    }

private:
    bool converged(double now, double before) const {
        const double diff = std::abs(now - before);
        return diff <= opt_.tolerance * std::abs(now) || diff <= abs_floor_;
    }

    Moments eval(double t) const {
        const double w = std::exp(logpost_(t) - shift_);
        return {w, w * std::exp(t), w * t};
    }

    const LogPosterior& logpost_;
    double shift_;
    double abs_floor_;
    QuadratureOptions opt_;
};

double bisect_root(const auto& fn, double lo, double hi, double flo, double tol) {
    for (int it = 0; it < 200 && hi - lo > tol; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double fm = fn(mid);
        if (fm == 0.0) return mid;
        if ((fm > 0.0) == (flo > 0.0)) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

}  // namespace

Skeleton::Skeleton(std::vector<double> phi) : phi_(std::move(phi)) {
    if (phi_.size() < 2) throw Error(ErrorCode::InvalidArgument, "skeleton needs at least 2 levels");
    for (std::size_t i = 0; i < phi_.size(); ++i) {
        if (!(phi_[i] > 0.0 && phi_[i] < 1.0)) {
            throw Error(ErrorCode::OutOfRange, "skeleton values must lie in (0,1)");
        }
        if (i > 0 && !(phi_[i] > phi_[i - 1])) {
            throw Error(ErrorCode::NonMonotone, "skeleton must be strictly increasing");
        }
    }
}

LogNormalPrior LogNormalPrior::make(double mu, double sigma) {
    if (!std::isfinite(mu) || !std::isfinite(sigma) || !(sigma > 0.0)) {
        throw Error(ErrorCode::InvalidArgument, "log-Normal prior needs finite mu and sigma > 0");
    }
    return {mu, sigma};
}

double LogNormalPrior::mean() const noexcept { return std::exp(mu + 0.5 * sigma * sigma); }

std::vector<double> power_curve(const Skeleton& skeleton, double theta) {
    if (!(theta > 0.0) || !std::isfinite(theta)) {
        throw Error(ErrorCode::InvalidArgument, "power model needs theta > 0");
    }
    std::vector<double> g;
    g.reserve(skeleton.phi().size());
    for (double phi : skeleton.phi()) g.push_back(std::pow(phi, theta));
    return g;
}

double chevret_gamma(double xi, double beta0, double theta) {
    return 1.0 / (1.0 + std::exp(beta0 - theta * xi));
}

std::vector<double> chevret_backcalc(const Skeleton& skeleton, double beta0, double theta0) {
    if (!(theta0 > 0.0) || !std::isfinite(theta0) || !std::isfinite(beta0)) {
        throw Error(ErrorCode::InvalidArgument, "Chevret back-calculation needs theta0 > 0");
    }
    std::vector<double> xi;
    xi.reserve(skeleton.phi().size());
    for (double phi : skeleton.phi()) {
        const double v = (beta0 - std::log(1.0 / phi - 1.0)) / theta0;
        if (!std::isfinite(v)) throw Error(ErrorCode::InvalidArgument, "degenerate skeleton value");
        xi.push_back(v);
    }
    return xi;
}

DoseToxModel::DoseToxModel(CurveModel kind, Skeleton skeleton, double beta0, double theta0,
                           std::vector<double> xi)
    : kind_(kind), skeleton_(std::move(skeleton)), beta0_(beta0), theta0_(theta0), xi_(std::move(xi)) {
    for (double phi : skeleton_.phi()) log_phi_.push_back(std::log(phi));
}

DoseToxModel DoseToxModel::power(Skeleton skeleton) {
    return DoseToxModel(CurveModel::Power, std::move(skeleton), 0.0, 1.0, {});
}

DoseToxModel DoseToxModel::chevret(Skeleton skeleton, double beta0, double theta0) {
    auto xi = chevret_backcalc(skeleton, beta0, theta0);
    return DoseToxModel(CurveModel::Chevret, std::move(skeleton), beta0, theta0, std::move(xi));
}

double DoseToxModel::prob(int level, double theta) const {
    if (level < 1 || level > levels()) throw Error(ErrorCode::OutOfRange, "model level out of range");
    if (!(theta > 0.0)) throw Error(ErrorCode::InvalidArgument, "theta must be positive");
    const auto i = static_cast<std::size_t>(level - 1);
    if (kind_ == CurveModel::Power) return std::exp(theta * log_phi_[i]);
    return chevret_gamma(xi_[i], beta0_, theta);
}

std::vector<double> DoseToxModel::curve(double theta) const {
    std::vector<double> g;
    g.reserve(static_cast<std::size_t>(levels()));
    for (int u = 1; u <= levels(); ++u) g.push_back(prob(u, theta));
    return g;
}

void DoseToxModel::log_probs(int level, double theta, double& log_g, double& log_1mg) const {
    const auto i = static_cast<std::size_t>(level - 1);
    if (kind_ == CurveModel::Power) {
        log_g = theta * log_phi_[i];
        log_1mg = std::log1p(-std::exp(log_g));
    } else {
        const double x = beta0_ - theta * xi_[i];
        log_g = -softplus(x);
        log_1mg = -softplus(-x);
    }
}

int argmin_level(std::span<const double> curve, double target) {
    if (curve.empty()) throw Error(ErrorCode::InvalidArgument, "empty curve");
    std::size_t best = 0;
    double best_dist = std::abs(curve[0] - target);
    for (std::size_t i = 1; i < curve.size(); ++i) {
        const double d = std::abs(curve[i] - target);
        // An exact tie below the target only arises when rounding has merged
        // values of an increasing curve (tails of theta); the higher level is
        // the nearer one there. Genuine ties straddle the target and go low.
        if (d < best_dist || (d == best_dist && curve[i] < target)) {
            best = i;
            best_dist = d;
        }
    }
    return static_cast<int>(best) + 1;
}

PosteriorSummary posterior_theta(const TrialState& state, const DoseToxModel& model,
                                 const LogNormalPrior& prior, double target, bool with_weights,
                                 const QuadratureOptions& options) {
    if (model.levels() != state.levels()) {
        throw Error(ErrorCode::LengthMismatch, "model and trial have different numbers of levels");
    }
    const LogPosterior logpost(model, prior, tallies(state));
    const double a = prior.mu - options.span_sigmas * prior.sigma;
    const double b = prior.mu + options.span_sigmas * prior.sigma;

    // Coarse scan for the log-density maximum (scaling) and a mass estimate.
    const int scan = with_weights ? std::max(options.scan_points, 16) : 256;
    std::vector<double> grid_t(static_cast<std::size_t>(scan) + 1);
    std::vector<double> grid_lp(grid_t.size());
    double shift = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < grid_t.size(); ++i) {
        grid_t[i] = a + (b - a) * static_cast<double>(i) / scan;
        grid_lp[i] = logpost(grid_t[i]);
        shift = std::max(shift, grid_lp[i]);
    }
    if (!std::isfinite(shift)) {
        throw Error(ErrorCode::QuadratureFailure, "posterior density vanishes on the integration range");
    }
    double mass_hint = 0.0;
    for (std::size_t i = 0; i < grid_t.size(); ++i) mass_hint += std::exp(grid_lp[i] - shift);
    mass_hint *= (b - a) / scan;
    const PosteriorIntegrator integrator(logpost, shift, 1e-16 * mass_hint, options);

    PosteriorSummary out;
    if (!with_weights) {
        const Moments m = integrator.integrate(a, b);
        if (!(m.mass > 0.0)) throw Error(ErrorCode::QuadratureFailure, "zero posterior mass");
        out.theta_mean = m.theta_mass / m.mass;
        out.log_theta_mean = m.log_mass / m.mass;
        out.curve = model.curve(out.theta_mean);
        return out;
    }

    // Cut points where adjacent levels are equidistant from the target:
    // (G_u + G_{u+1}) / 2 = target. Between cuts the argmin level is fixed.
    std::vector<double> cuts;
    const int l = model.levels();
    for (int u = 1; u < l; ++u) {
        auto gap = [&](double t) {
            const double theta = std::exp(t);
            return 0.5 * (model.prob(u, theta) + model.prob(u + 1, theta)) - target;
        };
        double prev_t = grid_t[0];
        double prev_v = gap(prev_t);
        for (std::size_t i = 1; i < grid_t.size(); ++i) {
            const double v = gap(grid_t[i]);
            if (v == 0.0) {
                cuts.push_back(grid_t[i]);
            } else if ((v > 0.0) != (prev_v > 0.0) && prev_v != 0.0) {
                cuts.push_back(bisect_root(gap, prev_t, grid_t[i], prev_v, options.root_tolerance));
            }
            prev_t = grid_t[i];
            prev_v = v;
        }
    }
    std::sort(cuts.begin(), cuts.end());
    std::vector<double> edges{a};
    for (double c : cuts) {
        if (c > edges.back() && c < b) edges.push_back(c);
    }
    edges.push_back(b);

    out.mtd_weights.assign(static_cast<std::size_t>(l), 0.0);
    double total = 0.0;
    double theta_total = 0.0;
    double log_total = 0.0;
    for (std::size_t i = 0; i + 1 < edges.size(); ++i) {
        const double lo = edges[i];
        const double hi = edges[i + 1];
        const Moments m = integrator.integrate(lo, hi);
        // Probe next to a cut rather than at the midpoint: far out in the
        // tails every G_u can underflow to 0 (or round to 1) and tie.
        double probe = 0.5 * (lo + hi);
        if (edges.size() > 2) probe = i == 0 ? hi - 1e-3 * (hi - lo) : lo + 1e-3 * (hi - lo);
        const int level = argmin_level(model.curve(std::exp(probe)), target);
        out.mtd_weights[static_cast<std::size_t>(level - 1)] += m.mass;
        total += m.mass;
        theta_total += m.theta_mass;
        log_total += m.log_mass;
    }
    if (!(total > 0.0)) throw Error(ErrorCode::QuadratureFailure, "zero posterior mass");
    for (double& w : out.mtd_weights) w /= total;
    out.theta_mean = theta_total / total;
    out.log_theta_mean = log_total / total;
    out.curve = model.curve(out.theta_mean);
    return out;
}

std::vector<double> crm_curve(const PosteriorSummary& post, const CrmConfig& config) {
    if (config.plug_in == PlugIn::PosteriorMean) return post.curve;
    return config.model.curve(std::exp(post.log_theta_mean));
}

DesignAction crm_next(const TrialState& state, const CrmConfig& config) {
    const int current = state.current_level();
    const PosteriorSummary post =
        posterior_theta(state, config.model, config.prior, state.target(), false);
    int level = argmin_level(crm_curve(post, config), state.target());
    if (config.step_constraint) level = std::clamp(level, current - 1, current + 1);
    return DesignAction::next(state.grid().clamp(level));
}

int crm_mtd_estimate(const TrialState& state, const CrmConfig& config) {
    const PosteriorSummary post =
        posterior_theta(state, config.model, config.prior, state.target(), false);
    return argmin_level(crm_curve(post, config), state.target());
}

}  // namespace phase1
