#pragma once

// Glue used by the CLI and the end-to-end checks: fit the hierarchical model
// to observed cells and evaluate a before-after comparison against it.

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "rtm/analysis.hpp"
#include "rtm/core.hpp"
#include "rtm/model.hpp"
#include "rtm/sampler.hpp"
#include "rtm/weights.hpp"

namespace rtm::pipeline {

struct FitResult {
    model::HierarchicalModel model;
    sampler::SamplerRun run;
};

// Drops zero-count cells (they cannot appear in a retrospective file) and
// samples the posterior.
inline FitResult fit(const model::ModelSpec& spec, std::vector<TypeCell> cells, const sampler::SamplerConfig& config,
                     const sampler::InitStrategy& init = {}) {
    std::erase_if(cells, [](const TypeCell& c) { return c.fatalities < 1; });
    for (std::size_t j = 0; j < cells.size(); ++j) cells[j].id = j;
    model::HierarchicalModel m(spec, std::move(cells));
    auto run = sampler::run_chains(m, config, init);
    run.draws.names = m.parameter_names();
    return {std::move(m), std::move(run)};
}

struct BeforeAfterInput {
    std::vector<TypeCell> selected_units;  // selected roads as single-road units
    long long before_selected = 0;
    long long after_selected = 0;
};

struct BeforeAfterResult {
    weights::ReweightedExpectation expected;
    analysis::EffectSummary effect;
    double naive_reduction = 0.0;
};

// Expected after-period fatalities on the selected roads absent any policy,
// from posterior rates, compared with the observed after count.
inline BeforeAfterResult evaluate_before_after(const FitResult& fit, const BeforeAfterInput& input,
                                               const weights::FatalityProbabilityTable& table,
                                               const analysis::EffectOptions& options = {}) {
    BeforeAfterResult out;
    out.expected = weights::reweighted_expectation(fit.model, fit.run.draws, input.selected_units, table, options.seed);
    out.naive_reduction = input.before_selected > 0
                              ? -analysis::reduction_factor(static_cast<double>(input.before_selected),
                                                            static_cast<double>(input.after_selected))
                                     .change
                              : 0.0;
    std::vector<double> e(out.expected.draws.data(), out.expected.draws.data() + out.expected.draws.size());
    out.effect = analysis::effect_summary(e, static_cast<double>(input.after_selected), out.naive_reduction, options);
    return out;
}

}  // namespace rtm::pipeline
