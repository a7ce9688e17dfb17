#include "phase1/estimation.hpp"

#include <algorithm>
#include <cmath>

namespace phase1 {
namespace {

// Linear interpolation through (xs, ys) with constant extension, the
// behaviour of R's approx(..., rule = 2). xs strictly increasing.
double approx_constant(std::span<const double> xs, std::span<const double> ys, double at) {
    if (xs.size() == 1 || at <= xs.front()) return ys.front();
    if (at >= xs.back()) return ys.back();
    const auto it = std::upper_bound(xs.begin(), xs.end(), at);
    const auto hi = static_cast<std::size_t>(it - xs.begin());
    const std::size_t lo = hi - 1;
    const double t = (at - xs[lo]) / (xs[hi] - xs[lo]);
    return ys[lo] + t * (ys[hi] - ys[lo]);
}

// Linear extrapolation from the end segments.
double approx_linear(std::span<const double> xs, std::span<const double> ys, double at) {
    if (xs.size() == 1) return ys.front();
    std::size_t lo = 0;
    if (at >= xs.back()) {
        lo = xs.size() - 2;
    } else if (at > xs.front()) {
        const auto it = std::upper_bound(xs.begin(), xs.end(), at);
        lo = static_cast<std::size_t>(it - xs.begin()) - 1;
    }
    const std::size_t hi = lo + 1;
    const double t = (at - xs[lo]) / (xs[hi] - xs[lo]);
    return ys[lo] + t * (ys[hi] - ys[lo]);
}

void check_inputs(std::span<const double> x, std::span<const double> y, std::span<const double> wt) {
    if (x.size() != y.size() || x.size() != wt.size()) {
        throw Error(ErrorCode::LengthMismatch, "cir: x, y and weights must have equal length");
    }
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!std::isfinite(x[i]) || !std::isfinite(y[i])) {
            throw Error(ErrorCode::InvalidArgument, "cir: missing or non-finite values not allowed");
        }
        if (!(wt[i] > 0.0)) throw Error(ErrorCode::InvalidArgument, "cir: weights must be positive");
        if (i > 0 && !(x[i] > x[i - 1])) {
            throw Error(ErrorCode::NonMonotone, "cir: x must be strictly increasing");
        }
    }
}

}  // namespace

double CirResult::evaluate(double at) const {
    if (alg_x.empty()) throw Error(ErrorCode::NoObservations, "empty CIR fit");
    if (boundary == CirBoundary::Constant || alg_x.size() == 1) {
        // evaluate() on the final nodes; for the linear mode with a single
        // node the nodes already carry the imposed bounds.
        return approx_constant(alg_x, alg_y, at);
    }
    return approx_linear(alg_x, alg_y, at);
}

CirResult cir(std::span<const double> x, std::span<const double> y, std::span<const double> wt,
              const CirOptions& options) {
    check_inputs(x, y, wt);
    CirResult out;
    out.x.assign(x.begin(), x.end());
    out.boundary = options.boundary;
    out.decreasing = options.decreasing;

    if (x.size() <= 1) {
        out.output_y.assign(y.begin(), y.end());
        out.alg_x = out.x;
        out.alg_y = out.output_y;
        out.alg_wt.assign(wt.begin(), wt.end());
        return out;
    }

    std::vector<double> px(x.begin(), x.end());
    std::vector<double> py(y.begin(), y.end());
    std::vector<double> pw(wt.begin(), wt.end());
    if (options.decreasing) {
        for (double& v : py) v = -v;
    }

    // Pool the first adjacent violator pair (ties included) until strictly
    // increasing.
    while (py.size() > 1) {
        std::size_t i = 0;
        while (i + 1 < py.size() && py[i + 1] > py[i]) ++i;
        if (i + 1 == py.size()) break;
        const double w = pw[i] + pw[i + 1];
        py[i] = (py[i] * pw[i] + py[i + 1] * pw[i + 1]) / w;
        px[i] = (px[i] * pw[i] + px[i + 1] * pw[i + 1]) / w;
        pw[i] = w;
        py.erase(py.begin() + static_cast<std::ptrdiff_t>(i + 1));
        px.erase(px.begin() + static_cast<std::ptrdiff_t>(i + 1));
        pw.erase(pw.begin() + static_cast<std::ptrdiff_t>(i + 1));
    }

    if (options.boundary == CirBoundary::Linear) {
        const double zmin = x.front();
        const double zmax = x.back();
        if (py.size() == 1) {
            px = {options.xbounds.first, px[0], options.xbounds.second};
            py = {options.ybounds.first, py[0], options.ybounds.second};
            pw = {1.0, pw[0], 1.0};
        } else {
            const std::size_t n = py.size();
            if (px[n - 1] < zmax) {
                const double slope = (py[n - 1] - py[n - 2]) / (px[n - 1] - px[n - 2]);
                py.push_back(py[n - 1] + slope * (zmax - px[n - 1]));
                px.push_back(zmax);
            }
            if (px[0] > zmin) {
                const double slope = (py[1] - py[0]) / (px[1] - px[0]);
                py.insert(py.begin(), py[0] - slope * (px[0] - zmin));
                px.insert(px.begin(), zmin);
            }
        }
    }

    if (options.decreasing) {
        for (double& v : py) v = -v;
    }

    out.alg_x = std::move(px);
    out.alg_y = std::move(py);
    out.alg_wt = std::move(pw);
    out.output_y.resize(out.x.size());
    for (std::size_t j = 0; j < out.x.size(); ++j) {
        out.output_y[j] = out.alg_x.size() == 1 ? out.alg_y[0]
                                                : approx_constant(out.alg_x, out.alg_y, out.x[j]);
    }
    return out;
}

CirResult cir(std::span<const double> x, std::span<const double> y, const CirOptions& options) {
    const std::vector<double> wt(x.size(), 1.0);
    return cir(x, y, wt, options);
}

CirResult cir(std::span<const double> x, std::span<const YesNoRow> table, const CirOptions& options) {
    if (x.size() != table.size()) {
        throw Error(ErrorCode::LengthMismatch, "cir: table rows must match x");
    }
    std::vector<double> xs, ys, ws;
    for (std::size_t i = 0; i < table.size(); ++i) {
        if (table[i].yes < 0.0 || table[i].no < 0.0) {
            throw Error(ErrorCode::InvalidArgument, "cir: table counts must be nonnegative");
        }
        const double n = table[i].yes + table[i].no;
        if (n > 0.0) {
            xs.push_back(x[i]);
            ys.push_back(table[i].yes / n);
            ws.push_back(n);
        }
    }
    return cir(xs, ys, ws, options);
}

std::vector<double> isotonic_fit(std::span<const double> y, std::span<const double> wt) {
    if (y.size() != wt.size()) throw Error(ErrorCode::LengthMismatch, "isotonic_fit: length mismatch");
    struct Block {
        double mean;
        double weight;
        std::size_t count;
    };
    std::vector<Block> blocks;
    for (std::size_t i = 0; i < y.size(); ++i) {
        blocks.push_back({y[i], wt[i], 1});
        while (blocks.size() > 1 && blocks[blocks.size() - 2].mean > blocks.back().mean) {
            Block top = blocks.back();
            blocks.pop_back();
            Block& prev = blocks.back();
            const double w = prev.weight + top.weight;
            prev.mean = (prev.mean * prev.weight + top.mean * top.weight) / w;
            prev.weight = w;
            prev.count += top.count;
        }
    }
    std::vector<double> fitted;
    fitted.reserve(y.size());
    for (const Block& b : blocks) fitted.insert(fitted.end(), b.count, b.mean);
    return fitted;
}

CirResult cir_fit(const TrialState& state) {
    std::vector<double> xs, ys, ws;
    for (int u = 1; u <= state.levels(); ++u) {
        const int n = state.n_at(u);
        if (n > 0) {
            xs.push_back(state.grid().dose(u));
            ys.push_back(static_cast<double>(state.dlts_at(u)) / n);
            ws.push_back(n);
        }
    }
    if (xs.empty()) throw Error(ErrorCode::NoObservations, "no observed levels to fit");
    return cir(xs, ys, ws);
}

double cir_target_dose(const TrialState& state, double target) {
    const CirResult fit = cir_fit(state);
    const auto& nx = fit.alg_x;
    const auto& ny = fit.alg_y;
    if (target < ny.front()) return fit.x.front();
    if (target > ny.back()) return fit.x.back();
    for (std::size_t i = 0; i < ny.size(); ++i) {
        if (ny[i] == target) return nx[i];
        if (i + 1 < ny.size() && ny[i] < target && target < ny[i + 1]) {
            return nx[i] + (target - ny[i]) / (ny[i + 1] - ny[i]) * (nx[i + 1] - nx[i]);
        }
    }
    return fit.x.back();
}

int cir_mtd_select(const TrialState& state, double target) {
    const double at = cir_target_dose(state, target);
    const auto doses = state.grid().doses();
    int best = 1;
    double best_dist = std::abs(doses[0] - at);
    for (int u = 2; u <= state.levels(); ++u) {
        const double d = std::abs(doses[static_cast<std::size_t>(u - 1)] - at);
        if (d < best_dist - 1e-12) {
            best = u;
            best_dist = d;
        }
    }
    return best;
}

}  // namespace phase1
