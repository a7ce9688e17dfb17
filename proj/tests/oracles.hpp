#pragma once

// Brute-force reference computations used by the unit tests and the
// acceptance binary. None of these call into the library's numerics.

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "phase1/core.hpp"
#include "phase1/crm.hpp"

namespace oracle {

struct Block {
    std::size_t begin = 0;  // inclusive
    std::size_t end = 0;    // exclusive
    double x = 0.0;         // weighted mean of x in the block
    double y = 0.0;         // weighted mean of y
    double wt = 0.0;
};

// Least-squares isotonic fit by exhaustive search over every contiguous
// partition (2^(n-1) of them), keeping partitions whose block means are
// nondecreasing. Adjacent blocks with equal means are merged, so the
// returned block means are strictly increasing.
inline std::vector<Block> pava_blocks(std::span<const double> x, std::span<const double> y,
                                      std::span<const double> wt) {
    const std::size_t n = y.size();
    std::vector<Block> best;
    double best_sse = std::numeric_limits<double>::infinity();
    const unsigned long masks = 1UL << (n - 1);
    for (unsigned long mask = 0; mask < masks; ++mask) {
        std::vector<Block> blocks;
        Block cur;
        for (std::size_t i = 0; i < n; ++i) {
            cur.x += wt[i] * x[i];
            cur.y += wt[i] * y[i];
            cur.wt += wt[i];
            const bool cut = i + 1 == n || (mask >> i) & 1UL;
            if (cut) {
                cur.end = i + 1;
                cur.x /= cur.wt;
                cur.y /= cur.wt;
                blocks.push_back(cur);
                cur = Block{};
                cur.begin = i + 1;
            }
        }
        bool ok = true;
        for (std::size_t b = 1; b < blocks.size(); ++b) ok = ok && blocks[b].y >= blocks[b - 1].y - 1e-15;
        if (!ok) continue;
        double sse = 0.0;
        for (const Block& b : blocks) {
            for (std::size_t i = b.begin; i < b.end; ++i) sse += wt[i] * (y[i] - b.y) * (y[i] - b.y);
        }
        if (sse < best_sse - 1e-14) {
            best_sse = sse;
            best = blocks;
        }
    }
    std::vector<Block> merged;
    for (const Block& b : best) {
        if (!merged.empty() && std::abs(merged.back().y - b.y) <= 1e-12) {
            Block& m = merged.back();
            const double w = m.wt + b.wt;
            m.x = (m.x * m.wt + b.x * b.wt) / w;
            m.y = (m.y * m.wt + b.y * b.wt) / w;
            m.wt = w;
            m.end = b.end;
        } else {
            merged.push_back(b);
        }
    }
    return merged;
}

struct PosteriorOracle {
    double theta_mean = 0.0;
    std::vector<double> weights;
};

inline double log_lik(const phase1::TrialState& state, const phase1::DoseToxModel& model, double theta) {
    double ll = 0.0;
    const auto phi = model.skeleton().phi();
    for (int u = 1; u <= state.levels(); ++u) {
        const int n = state.n_at(u);
        if (n == 0) continue;
        const int r = state.dlts_at(u);
        const double p = phi[static_cast<std::size_t>(u - 1)];
        double lg, l1g;
        if (model.kind() == phase1::CurveModel::Power) {
            lg = theta * std::log(p);
            l1g = std::log1p(-std::exp(lg));
        } else {
            const double xi = (model.beta0() - std::log(1.0 / p - 1.0)) / model.theta0();
            const double z = model.beta0() - theta * xi;  // G = 1 / (1 + e^z)
            lg = -std::log1p(std::exp(z));
            l1g = z + lg;
        }
        ll += r * lg + (n - r) * l1g;
    }
    return ll;
}

inline std::vector<double> curve_at(const phase1::DoseToxModel& model, double theta) {
    std::vector<double> g;
    const auto phi = model.skeleton().phi();
    for (double p : phi) {
        if (model.kind() == phase1::CurveModel::Power) {
            g.push_back(std::pow(p, theta));
        } else {
            const double xi = (model.beta0() - std::log(1.0 / p - 1.0)) / model.theta0();
            g.push_back(1.0 / (1.0 + std::exp(model.beta0() - theta * xi)));
        }
    }
    return g;
}

// 0-based nearest level, found by bracketing the target. Comparing raw
// distances fails in the tails, where every |g - target| rounds to target.
inline int nearest(const std::vector<double>& g, double target) {
    const int l = static_cast<int>(g.size());
    int above = 0;
    while (above < l && g[above] < target) ++above;
    if (above == 0) return 0;
    if (above == l) return l - 1;
    return g[above] - target < target - g[above - 1] ? above : above - 1;
}

// Trapezoid rule on `points` equally spaced nodes in t = log(theta) over
// mu +- 8 sigma. Cells whose endpoints disagree on the nearest level are
// split at the switch point (found by bisection) so the weights stay
// second-order accurate.
inline PosteriorOracle dense_posterior(const phase1::TrialState& state, const phase1::DoseToxModel& model,
                                       const phase1::LogNormalPrior& prior, double target,
                                       long points = 1'000'000) {
    const double lo = prior.mu - 8 * prior.sigma;
    const double hi = prior.mu + 8 * prior.sigma;
    const double h = (hi - lo) / static_cast<double>(points - 1);
    auto log_dens = [&](double t) {
        const double z = (t - prior.mu) / prior.sigma;
        return -0.5 * z * z + log_lik(state, model, std::exp(t));
    };
    // Shift by the maximum to keep exp() in range.
    double shift = -std::numeric_limits<double>::infinity();
    for (long i = 0; i < points; i += 97) shift = std::max(shift, log_dens(lo + h * i));
    auto dens = [&](double t) { return std::exp(log_dens(t) - shift); };
    auto level = [&](double t) { return nearest(curve_at(model, std::exp(t)), target); };

    const int l = model.levels();
    std::vector<double> w(static_cast<std::size_t>(l), 0.0);
    double mass = 0.0, first = 0.0;
    double t0 = lo, d0 = dens(t0);
    int u0 = level(t0);
    for (long i = 1; i < points; ++i) {
        const double t1 = lo + h * i;
        const double d1 = dens(t1);
        const int u1 = level(t1);
        const double cell = 0.5 * h * (d0 + d1);
        mass += cell;
        first += 0.5 * h * (d0 * std::exp(t0) + d1 * std::exp(t1));
        if (u0 == u1) {
            w[static_cast<std::size_t>(u0)] += cell;
        } else {
            double a = t0, b = t1;
            for (int it = 0; it < 80; ++it) {
                const double m = 0.5 * (a + b);
                (level(m) == u0 ? a : b) = m;
            }
            const double s = 0.5 * (a + b);
            const double ds = dens(s);
            w[static_cast<std::size_t>(u0)] += 0.5 * (s - t0) * (d0 + ds);
            w[static_cast<std::size_t>(u1)] += 0.5 * (t1 - s) * (ds + d1);
        }
        t0 = t1;
        d0 = d1;
        u0 = u1;
    }
    PosteriorOracle out;
    out.theta_mean = first / mass;
    double wsum = 0.0;
    for (double v : w) wsum += v;
    for (double& v : w) v /= wsum;
    out.weights = std::move(w);
    return out;
}

// Relative difference with an absolute floor for values near zero.
inline double rel_diff(double a, double b, double floor = 1e-9) {
    return std::abs(a - b) / std::max(std::abs(b), floor);
}

}  // namespace oracle
