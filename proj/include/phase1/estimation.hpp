#pragma once

// Centered isotonic regression (CIR) and the isotonic MTD-selection rule
// used by the up-and-down and interval designs.

#include <span>
#include <utility>
#include <vector>

#include "phase1/core.hpp"

namespace phase1 {

enum class CirBoundary {
    Constant,  // fitted values held constant outside the pooled node range
    Linear,    // linear extrapolation, with xbounds/ybounds for a single node
};

struct CirOptions {
    CirBoundary boundary = CirBoundary::Constant;
    bool decreasing = false;
    std::pair<double, double> xbounds{0.0, 1.0};
    std::pair<double, double> ybounds{0.0, 1.0};
};

struct CirResult {
    std::vector<double> x;         // original design points
    std::vector<double> output_y;  // fitted values at x
    std::vector<double> alg_x;     // pooled nodes after centering
    std::vector<double> alg_y;
    std::vector<double> alg_wt;
    CirBoundary boundary = CirBoundary::Constant;
    bool decreasing = false;

    /// Piecewise-linear fitted curve at an arbitrary dose, using the same
    /// boundary rule as output_y.
    double evaluate(double at) const;
};

/// One row of a yes/no table: toxic and non-toxic counts at a dose.
struct YesNoRow {
    double yes = 0.0;
    double no = 0.0;
};

/// Centered isotonic regression of y on x. Repeatedly pools the first
/// adjacent pair with y[i+1] <= y[i] (weighted averages of both y and x)
/// until the pooled y is strictly increasing, then interpolates back to x.
CirResult cir(std::span<const double> x, std::span<const double> y, std::span<const double> wt,
              const CirOptions& options = {});
CirResult cir(std::span<const double> x, std::span<const double> y, const CirOptions& options = {});

/// Table input: rows with no observations are dropped, rates become y and
/// row totals become weights.
CirResult cir(std::span<const double> x, std::span<const YesNoRow> table,
              const CirOptions& options = {});

/// Standard PAVA fitted values (blockwise weighted means), increasing case.
std::vector<double> isotonic_fit(std::span<const double> y, std::span<const double> wt);

/// CIR fit of the observed rates in `state` (levels with n_u > 0 only).
CirResult cir_fit(const TrialState& state);

/// Dose where the CIR curve of the observed rates first reaches `target`
/// (scanning upward); the lowest/highest observed dose when the target lies
/// below/above every fitted value.
double cir_target_dose(const TrialState& state, double target);

/// Grid level nearest cir_target_dose; ties go to the lower level.
int cir_mtd_select(const TrialState& state, double target);

}  // namespace phase1
