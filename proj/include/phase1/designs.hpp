#pragma once

// Dose-transition rules that do not fit a parametric model: the up-and-down
// family, the cumulative cohort (interval) design, 3+3, the randomized
// isotonic design and the up-and-down/long-memory hybrid.
//
// Every rule is a pure function of the trial state, its parameters and (for
// randomized rules) explicit random draws.

#include <optional>
#include <span>
#include <variant>

#include "phase1/core.hpp"
#include "phase1/crm.hpp"
#include "phase1/rng.hpp"

namespace phase1 {

/// GU&D(k, a, b): escalate if Y <= a, descend if Y >= b, otherwise stay.
struct GroupUdRule {
    int k = 2;
    int a = 0;
    int b = 1;

    void validate() const;
};

/// k-in-a-row: escalate after k consecutive non-toxic patients at the
/// current dose, descend after any toxicity.
struct KInARowRule {
    int k = 2;

    void validate() const;
};

struct CcdRule {
    double target = 0.3;
    double half_width = 0.1;

    void validate() const;
};

DesignAction group_ud_next(const TrialState& state, const GroupUdRule& rule);
DesignAction k_in_a_row_next(const TrialState& state, const KInARowRule& rule);
DesignAction ccd_next(const TrialState& state, const CcdRule& rule);

/// Six-step 3+3. Emits Stop when a third cohort would be needed at some
/// level or when descending below the lowest level.
DesignAction three_plus_three_step(const TrialState& state);
/// Highest level with observed rate below 1/3.
std::optional<int> three_plus_three_estimate(const TrialState& state);

struct RadDecision {
    DesignAction action;
    int isotonic_choice = 0;
    double substitution_probability = 0.0;
    bool substituted = false;
};

/// Randomized isotonic design: the isotonic-regression choice, replaced by
/// its neighbour across the target with probability 1 / (n + 1).
/// `u` is a uniform draw in (0,1).
RadDecision rad_decide(const TrialState& state, double u);
DesignAction rad_next(const TrialState& state, Rng& rng);

using UdRule = std::variant<GroupUdRule, KInARowRule>;
using LongMemoryRule = std::variant<CrmConfig, CcdRule>;

struct HybridRule {
    UdRule base;
    LongMemoryRule override_design;
    double beta = 0.25;

    void validate() const;
};

/// Up-and-down proposal overridden by a CRM proposal only when the
/// posterior MTD weight on the up-and-down side of the override is below
/// beta. Weights are indexed by level - 1.
int hybrid_crm_choice(int ud_level, int crm_level, std::span<const double> mtd_weights, double beta);

/// Exact binomial tail P(X >= r) (upper) or P(X <= r) (lower), X ~ Bin(n, prob).
double binomial_tail(int n, int r, double prob, bool upper);

/// Interval-design override tested with an exact binomial tail against the
/// far edge of the tolerance interval. Returns the chosen level and writes
/// the p-value used (1 when the proposals agree).
int hybrid_ccd_choice(int current, int ud_level, int ccd_level, int n, int r, const CcdRule& rule,
                      double beta, double* p_value = nullptr);

DesignAction hybrid_next(const TrialState& state, const HybridRule& rule);

}  // namespace phase1
