#pragma once

// One-parameter continual reassessment method: power and Chevret working
// models, log-Normal prior, posterior by deterministic quadrature in
// t = log(theta), and the argmin |G - p| allocation rule.

#include <span>
#include <vector>

#include "phase1/core.hpp"

namespace phase1 {

class Skeleton {
public:
    explicit Skeleton(std::vector<double> phi);

    std::span<const double> phi() const noexcept { return phi_; }
    int levels() const noexcept { return static_cast<int>(phi_.size()); }

private:
    std::vector<double> phi_;
};

struct LogNormalPrior {
    double mu = 0.0;
    double sigma = 1.0;

    /// Validated constructor (sigma > 0, both finite).
    static LogNormalPrior make(double mu, double sigma);
    double mean() const noexcept;
};

/// Published priors A, B and C for the six-level skeleton study.
inline constexpr LogNormalPrior kPriorA{-0.2, 0.85};
inline const LogNormalPrior kPriorB{0.0, 1.1575836902790226};  // sqrt(1.34)
inline constexpr LogNormalPrior kPriorC{-0.5, 0.6};

/// G(d_u) = phi_u ^ theta.
std::vector<double> power_curve(const Skeleton& skeleton, double theta);

/// Logistic reading of the Chevret skeleton: 1 / (1 + exp(beta0 - theta xi)).
double chevret_gamma(double xi, double beta0, double theta);

/// Transformed doses xi_u with chevret_gamma(xi_u; beta0, theta0) = phi_u.
std::vector<double> chevret_backcalc(const Skeleton& skeleton, double beta0, double theta0);

enum class CurveModel { Power, Chevret };

/// A one-parameter working model evaluated at the grid levels.
class DoseToxModel {
public:
    static DoseToxModel power(Skeleton skeleton);
    static DoseToxModel chevret(Skeleton skeleton, double beta0, double theta0);

    CurveModel kind() const noexcept { return kind_; }
    const Skeleton& skeleton() const noexcept { return skeleton_; }
    int levels() const noexcept { return skeleton_.levels(); }
    double beta0() const noexcept { return beta0_; }
    double theta0() const noexcept { return theta0_; }
    std::span<const double> xi() const noexcept { return xi_; }

    /// Toxicity probability at 1-based `level` for parameter theta > 0.
    double prob(int level, double theta) const;
    std::vector<double> curve(double theta) const;
    /// log G and log(1 - G), computed stably.
    void log_probs(int level, double theta, double& log_g, double& log_1mg) const;

private:
    DoseToxModel(CurveModel kind, Skeleton skeleton, double beta0, double theta0,
                 std::vector<double> xi);

    CurveModel kind_;
    Skeleton skeleton_;
    double beta0_ = 0.0;
    double theta0_ = 1.0;
    std::vector<double> xi_;
    std::vector<double> log_phi_;
};

struct QuadratureOptions {
    double span_sigmas = 8.0;  // integrate t over mu +- span_sigmas * sigma
    double tolerance = 1e-9;   // successive Romberg estimates, relative
    int min_level = 7;         // at least 2^7 + 1 nodes per piece
    int max_level = 22;
    double root_tolerance = 1e-12;
    int scan_points = 2048;    // crossover search grid
};

struct PosteriorSummary {
    double theta_mean = 0.0;          // posterior mean of theta
    double log_theta_mean = 0.0;      // posterior mean of log(theta)
    std::vector<double> curve;        // plug-in G(d_u, theta_mean)
    std::vector<double> mtd_weights;  // posterior probability each level is the argmin
};

/// Posterior of theta under the binomial likelihood and log-Normal prior.
/// MTD weights are skipped (left empty) when `with_weights` is false.
PosteriorSummary posterior_theta(const TrialState& state, const DoseToxModel& model,
                                 const LogNormalPrior& prior, double target,
                                 bool with_weights = true, const QuadratureOptions& options = {});

/// Point estimate plugged into the working model: E[theta], or
/// exp(E[log theta]) as in dfcrm, whose parameter is log(theta).
enum class PlugIn { PosteriorMean, LogPosteriorMean };

struct CrmConfig {
    DoseToxModel model;
    LogNormalPrior prior;
    bool step_constraint = true;
    PlugIn plug_in = PlugIn::PosteriorMean;
};

/// Plug-in curve for `config` from a posterior summary.
std::vector<double> crm_curve(const PosteriorSummary& post, const CrmConfig& config);

/// argmin_u |curve_u - target|, ties to the lower level (1-based).
int argmin_level(std::span<const double> curve, double target);

/// Next allocation: the argmin level, kept within one level of the current
/// dose when the step constraint is on.
DesignAction crm_next(const TrialState& state, const CrmConfig& config);
/// Unconstrained argmin of the plug-in curve.
int crm_mtd_estimate(const TrialState& state, const CrmConfig& config);

}  // namespace phase1
