#pragma once

// Tagged union over every supported design plus uniform dispatch for the
// simulator and the trial service.

#include <optional>
#include <string>
#include <variant>

#include "phase1/core.hpp"
#include "phase1/crm.hpp"
#include "phase1/designs.hpp"
#include "phase1/rng.hpp"

namespace phase1 {

struct ThreePlusThreeRule {};
struct RadRule {};

using DesignSpec =
    std::variant<GroupUdRule, KInARowRule, CcdRule, ThreePlusThreeRule, CrmConfig, RadRule, HybridRule>;

struct DesignConfig {
    std::string name;
    DesignSpec spec;
};

/// Wire tag: "group_ud", "kinrow", "ccd", "three_plus_three", "crm", "rad", "hybrid".
std::string design_tag(const DesignSpec& spec);

/// Cohort size the design requires, if it fixes one.
std::optional<int> required_cohort_size(const DesignSpec& spec);

/// Checks parameters against a grid size (skeleton length etc.).
void validate_design(const DesignSpec& spec, int levels);

/// Next action. `rng` is only drawn from by randomized designs.
DesignAction next_action(const DesignSpec& spec, const TrialState& state, Rng& rng);

/// The design's own MTD estimate on the data so far: unconstrained argmin for
/// CRM, the 3+3 rule for 3+3 and centered isotonic regression otherwise.
std::optional<int> select_mtd(const DesignSpec& spec, const TrialState& state);

}  // namespace phase1
