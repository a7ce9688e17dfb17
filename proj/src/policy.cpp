#include "phase1/policy.hpp"

#include "phase1/estimation.hpp"

namespace phase1 {
namespace {

template <class... Ts>
struct Overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

void validate_crm(const CrmConfig& crm, int levels) {
    if (crm.model.levels() != levels) {
        throw Error(ErrorCode::LengthMismatch, "skeleton length " + std::to_string(crm.model.levels()) +
                                                   " differs from " + std::to_string(levels) + " levels");
    }
    LogNormalPrior::make(crm.prior.mu, crm.prior.sigma);
}

}  // namespace

std::string design_tag(const DesignSpec& spec) {
    return std::visit(Overloaded{
                          [](const GroupUdRule&) { return std::string("group_ud"); },
                          [](const KInARowRule&) { return std::string("kinrow"); },
                          [](const CcdRule&) { return std::string("ccd"); },
                          [](const ThreePlusThreeRule&) { return std::string("three_plus_three"); },
                          [](const CrmConfig&) { return std::string("crm"); },
                          [](const RadRule&) { return std::string("rad"); },
                          [](const HybridRule&) { return std::string("hybrid"); },
                      },
                      spec);
}

std::optional<int> required_cohort_size(const DesignSpec& spec) {
    return std::visit(Overloaded{
                          [](const GroupUdRule& r) -> std::optional<int> { return r.k; },
                          [](const KInARowRule&) -> std::optional<int> { return 1; },
                          [](const ThreePlusThreeRule&) -> std::optional<int> { return 3; },
                          [](const HybridRule& h) -> std::optional<int> {
                              if (const auto* g = std::get_if<GroupUdRule>(&h.base)) return g->k;
                              return 1;
                          },
                          [](const auto&) -> std::optional<int> { return std::nullopt; },
                      },
                      spec);
}

void validate_design(const DesignSpec& spec, int levels) {
    std::visit(Overloaded{
                   [](const GroupUdRule& r) { r.validate(); },
                   [](const KInARowRule& r) { r.validate(); },
                   [](const CcdRule& r) { r.validate(); },
                   [](const ThreePlusThreeRule&) {},
                   [&](const CrmConfig& c) { validate_crm(c, levels); },
                   [](const RadRule&) {},
                   [&](const HybridRule& h) {
                       h.validate();
                       if (const auto* c = std::get_if<CrmConfig>(&h.override_design)) validate_crm(*c, levels);
                   },
               },
               spec);
}

DesignAction next_action(const DesignSpec& spec, const TrialState& state, Rng& rng) {
    return std::visit(Overloaded{
                          [&](const GroupUdRule& r) { return group_ud_next(state, r); },
                          [&](const KInARowRule& r) { return k_in_a_row_next(state, r); },
                          [&](const CcdRule& r) { return ccd_next(state, r); },
                          [&](const ThreePlusThreeRule&) { return three_plus_three_step(state); },
                          [&](const CrmConfig& c) { return crm_next(state, c); },
                          [&](const RadRule&) { return rad_next(state, rng); },
                          [&](const HybridRule& h) { return hybrid_next(state, h); },
                      },
                      spec);
}

std::optional<int> select_mtd(const DesignSpec& spec, const TrialState& state) {
    if (state.empty()) return std::nullopt;
    return std::visit(Overloaded{
                          [&](const CrmConfig& c) -> std::optional<int> { return crm_mtd_estimate(state, c); },
                          [&](const ThreePlusThreeRule&) { return three_plus_three_estimate(state); },
                          [&](const auto&) -> std::optional<int> { return cir_mtd_select(state, state.target()); },
                      },
                      spec);
}

}  // namespace phase1
