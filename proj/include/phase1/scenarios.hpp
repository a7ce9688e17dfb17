#pragma once

// Scenario construction: calibrated parametric dose-toxicity curves and the
// random Dirichlet-increment generator with vetting and stratified
// ensemble assembly.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "phase1/core.hpp"
#include "phase1/rng.hpp"

namespace phase1 {

enum class FamilyTag { Uniform, Gamma, Normal, Lognormal, Weibull, Logistic };

std::string to_string(FamilyTag tag);
FamilyTag family_from_string(const std::string& name);

/// A parametric toxicity CDF. Parameter meaning per family:
///   Uniform   a = lower end,  b = width
///   Normal    a = mean,       b = sd
///   Logistic  a = location,   b = scale
///   Lognormal a = meanlog,    b = sdlog
///   Gamma     a = shape,      b = scale
///   Weibull   a = shape,      b = scale
struct ParametricFamily {
    FamilyTag tag = FamilyTag::Normal;
    double a = 0.0;
    double b = 1.0;

    double cdf(double dose) const;
};

struct CalibratedScenario {
    Scenario scenario;
    ParametricFamily family;
};

/// Solves the family's parameters so that F(d_mtd) = target exactly and the
/// neighbouring levels sit at least `neighbor_gap` away from the target;
/// picks the shallowest such curve.
CalibratedScenario calibrate_fixed_scenario(FamilyTag family, const DoseGrid& grid, double target,
                                            int mtd_level, double neighbor_gap = 0.1);

/// The six-scenario set (Uniform..Logistic with MTD at levels 1..6) on an
/// evenly spaced six-level grid.
std::vector<CalibratedScenario> standard_fixed_scenarios(double target = 0.3);

/// Extra acceptance window applied after the generator's own vetting.
struct PostFilter {
    double mtd_low = 0.22;      // F at the MTD must lie in [mtd_low, mtd_high]
    double mtd_high = 0.38;     // and no other level may fall inside it
    double min_margin = 0.06;   // other levels at least this much further from target

    static PostFilter for_levels(int levels);
};

struct SceneConfig {
    int nlev = 7;
    int marg = 4;
    double baseline = 0.25;
    double peakmean = 3.0;
    double peaksd = 4.0;
    double targ = 0.3;
    double maxstep = 2.5 / 7;
    double minstep = 0.15 / 7;
    double maxerr = 0.5 / 7;
    double minedge = 0.5 / 7;
    double protectfac = 1.5;
    bool warp = true;
    double shift = 0.0;
    std::optional<PostFilter> post_filter;
    long long max_attempts = 100000;

    /// Generator defaults for `nlev` levels.
    static SceneConfig defaults(int nlev);
    void validate() const;
};

struct VettingReport {
    bool steps_ok = false;
    bool closest_ok = false;
    bool margin_ok = false;
    bool post_filter_ok = true;
    bool range_ok = false;

    bool ok() const noexcept { return steps_ok && closest_ok && margin_ok && post_filter_ok && range_ok; }
};

/// Independent check of every acceptance rule for a candidate vector.
VettingReport check_vetting(std::span<const double> f, const SceneConfig& cfg);

/// Draws candidates until one passes vetting; throws GeneratorStarved after
/// cfg.max_attempts rejections.
Scenario random_scenario(const SceneConfig& cfg, Rng& rng);

struct EnsembleOptions {
    /// Cap on accepted scenarios drawn into the super-ensemble.
    long long max_draws = 0;  // 0: 100000 + 1000 * sum(quotas)
};

/// Super-ensemble oversampling followed by per-MTD sampling without
/// replacement to the exact quotas (quota index = MTD level - 1).
std::vector<Scenario> stratified_ensemble(const SceneConfig& cfg, std::span<const int> quotas, Rng& rng,
                                          const EnsembleOptions& options = {});

}  // namespace phase1
