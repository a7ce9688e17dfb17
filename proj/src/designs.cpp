#include "phase1/designs.hpp"

#include <algorithm>
#include <cmath>

#include "phase1/estimation.hpp"

namespace phase1 {
namespace {

constexpr double kRateEps = 1e-12;

DesignAction step(const TrialState& state, int delta) {
    return DesignAction::next(state.grid().clamp(state.current_level() + delta));
}

}  // namespace

void GroupUdRule::validate() const {
    if (!(k >= 1 && 0 <= a && a < b && b <= k)) {
        throw Error(ErrorCode::InvalidArgument, "group up-and-down needs 0 <= a < b <= k");
    }
}

void KInARowRule::validate() const {
    if (k < 1) throw Error(ErrorCode::InvalidArgument, "k-in-a-row needs k >= 1");
}

void CcdRule::validate() const {
    if (!(target > 0.0 && target < 1.0)) throw Error(ErrorCode::OutOfRange, "CCD target outside (0,1)");
    if (!(half_width > 0.0 && half_width < std::min(target, 1.0 - target))) {
        throw Error(ErrorCode::InvalidArgument, "CCD half-width must satisfy 0 < w < min(p, 1-p)");
    }
}

void HybridRule::validate() const {
    if (!(beta > 0.0 && beta < 0.5)) throw Error(ErrorCode::InvalidArgument, "hybrid beta must lie in (0, 0.5)");
    std::visit([](const auto& r) { r.validate(); }, base);
    if (const auto* ccd = std::get_if<CcdRule>(&override_design)) ccd->validate();
}

DesignAction group_ud_next(const TrialState& state, const GroupUdRule& rule) {
    rule.validate();
    const CohortRecord& last = state.last();
    if (last.size != rule.k) {
        throw Error(ErrorCode::CohortSizeMismatch, "group up-and-down expects cohorts of " + std::to_string(rule.k));
    }
    if (last.dlts <= rule.a) return step(state, +1);
    if (last.dlts >= rule.b) return step(state, -1);
    return step(state, 0);
}

DesignAction k_in_a_row_next(const TrialState& state, const KInARowRule& rule) {
    rule.validate();
    const auto cohorts = state.cohorts();
    if (cohorts.empty()) throw Error(ErrorCode::NoObservations, "k-in-a-row needs at least one patient");
    const auto k = static_cast<std::size_t>(rule.k);
    // Only the window the rule reads is checked; a full scan is quadratic
    // over a long chain.
    for (std::size_t i = cohorts.size() - std::min(k, cohorts.size()); i < cohorts.size(); ++i) {
        if (cohorts[i].size != 1) throw Error(ErrorCode::CohortSizeMismatch, "k-in-a-row treats one patient at a time");
    }
    const CohortRecord& last = cohorts.back();
    if (last.dlts == 1) return step(state, -1);
    if (cohorts.size() < k) return step(state, 0);
    for (std::size_t i = cohorts.size() - k; i < cohorts.size(); ++i) {
        if (cohorts[i].level != last.level || cohorts[i].dlts != 0) return step(state, 0);
    }
    return step(state, +1);
}

DesignAction ccd_next(const TrialState& state, const CcdRule& rule) {
    rule.validate();
    const int u = state.current_level();
    const auto rate = state.rate_at(u);
    if (!rate) throw Error(ErrorCode::NoObservations, "CCD needs observations at the current level");
    if (*rate < rule.target - rule.half_width - kRateEps) return step(state, +1);
    if (*rate > rule.target + rule.half_width + kRateEps) return step(state, -1);
    return step(state, 0);
}

std::optional<int> three_plus_three_estimate(const TrialState& state) {
    std::optional<int> best;
    for (int u = 1; u <= state.levels(); ++u) {
        const int n = state.n_at(u);
        if (n > 0 && 3 * state.dlts_at(u) < n) best = u;
    }
    return best;
}

DesignAction three_plus_three_step(const TrialState& state) {
    const auto cohorts = state.cohorts();
    if (cohorts.empty()) throw Error(ErrorCode::NoObservations, "3+3 needs at least one cohort");
    std::vector<int> visits(static_cast<std::size_t>(state.levels()), 0);
    for (const CohortRecord& c : cohorts) {
        if (c.size != 3) throw Error(ErrorCode::CohortSizeMismatch, "3+3 uses cohorts of 3");
        if (++visits[static_cast<std::size_t>(c.level - 1)] > 2) {
            throw Error(ErrorCode::MalformedHistory, "3+3 history has more than 2 cohorts at a level");
        }
    }
    const CohortRecord& last = cohorts.back();
    const int u = last.level;
    int target = u;
    if (visits[static_cast<std::size_t>(u - 1)] == 1) {
        if (last.dlts == 0) target = u + 1;
        else if (last.dlts >= 2) target = u - 1;
    } else {
        target = state.dlts_at(u) >= 2 ? u - 1 : u + 1;
    }
    if (target < 1) return DesignAction::stop(three_plus_three_estimate(state));
    target = std::min(target, state.levels());
    if (visits[static_cast<std::size_t>(target - 1)] >= 2) {
        return DesignAction::stop(three_plus_three_estimate(state));
    }
    return DesignAction::next(target);
}

RadDecision rad_decide(const TrialState& state, double u) {
    if (state.total_patients() < 1) throw Error(ErrorCode::NoObservations, "RAD needs at least one observation");
    std::vector<int> lv;
    std::vector<double> rates, wts;
    for (int level = 1; level <= state.levels(); ++level) {
        const int n = state.n_at(level);
        if (n > 0) {
            lv.push_back(level);
            rates.push_back(static_cast<double>(state.dlts_at(level)) / n);
            wts.push_back(n);
        }
    }
    const std::vector<double> fitted = isotonic_fit(rates, wts);
    const double p = state.target();
    std::size_t best = 0;
    for (std::size_t i = 1; i < fitted.size(); ++i) {
        if (std::abs(fitted[i] - p) < std::abs(fitted[best] - p) - kRateEps) best = i;
    }
    RadDecision out;
    out.isotonic_choice = lv[best];
    out.substitution_probability = 1.0 / (state.total_patients() + 1.0);
    int level = out.isotonic_choice;
    if (std::abs(fitted[best] - p) > kRateEps && u < out.substitution_probability) {
        level += fitted[best] < p ? +1 : -1;
        out.substituted = true;
    }
    out.action = DesignAction::next(state.grid().clamp(level));
    return out;
}

DesignAction rad_next(const TrialState& state, Rng& rng) {
    return rad_decide(state, uniform_open01(rng)).action;
}

int hybrid_crm_choice(int ud_level, int crm_level, std::span<const double> mtd_weights, double beta) {
    if (crm_level == ud_level) return ud_level;
    double against = 0.0;
    for (std::size_t i = 0; i < mtd_weights.size(); ++i) {
        const int level = static_cast<int>(i) + 1;
        if (crm_level < ud_level ? level >= ud_level : level <= ud_level) against += mtd_weights[i];
    }
    return against < beta ? crm_level : ud_level;
}

double binomial_tail(int n, int r, double prob, bool upper) {
    if (n < 0 || !(prob >= 0.0 && prob <= 1.0)) throw Error(ErrorCode::InvalidArgument, "bad binomial parameters");
    const int lo = upper ? std::max(r, 0) : 0;
    const int hi = upper ? n : std::min(r, n);
    double sum = 0.0;
    for (int x = lo; x <= hi; ++x) {
        const double log_coef = std::lgamma(n + 1.0) - std::lgamma(x + 1.0) - std::lgamma(n - x + 1.0);
        double term = 0.0;
        if (prob == 0.0) term = x == 0 ? 1.0 : 0.0;
        else if (prob == 1.0) term = x == n ? 1.0 : 0.0;
        else term = std::exp(log_coef + x * std::log(prob) + (n - x) * std::log1p(-prob));
        sum += term;
    }
    return std::min(sum, 1.0);
}

int hybrid_ccd_choice(int current, int ud_level, int ccd_level, int n, int r, const CcdRule& rule,
                      double beta, double* p_value) {
    if (p_value) *p_value = 1.0;
    if (ccd_level == ud_level) return ud_level;
    const double lower_edge = rule.target - rule.half_width;
    const double upper_edge = rule.target + rule.half_width;
    double pv = 1.0;
    if (ccd_level < ud_level) {
        // Null: the current toxicity rate is low enough to justify ud_level.
        const double edge = ud_level > current ? lower_edge : upper_edge;
        pv = binomial_tail(n, r, edge, true);
    } else {
        const double edge = ud_level < current ? upper_edge : lower_edge;
        pv = binomial_tail(n, r, edge, false);
    }
    if (p_value) *p_value = pv;
    return pv < beta ? ccd_level : ud_level;
}

DesignAction hybrid_next(const TrialState& state, const HybridRule& rule) {
    rule.validate();
    const DesignAction ud = std::visit(
        [&](const auto& r) -> DesignAction {
            if constexpr (std::is_same_v<std::decay_t<decltype(r)>, GroupUdRule>) return group_ud_next(state, r);
            else return k_in_a_row_next(state, r);
        },
        rule.base);
    if (const auto* crm = std::get_if<CrmConfig>(&rule.override_design)) {
        const PosteriorSummary post = posterior_theta(state, crm->model, crm->prior, state.target(), true);
        int level = argmin_level(crm_curve(post, *crm), state.target());
        const int current = state.current_level();
        if (crm->step_constraint) level = std::clamp(level, current - 1, current + 1);
        level = state.grid().clamp(level);
        return DesignAction::next(hybrid_crm_choice(ud.level, level, post.mtd_weights, rule.beta));
    }
    const auto& ccd = std::get<CcdRule>(rule.override_design);
    const DesignAction lm = ccd_next(state, ccd);
    const int current = state.current_level();
    return DesignAction::next(hybrid_ccd_choice(current, ud.level, lm.level, state.n_at(current),
                                                state.dlts_at(current), ccd, rule.beta));
}

}  // namespace phase1
