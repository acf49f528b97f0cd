#pragma once

// Synthetic cities with known per-road fatality rates, triage selection on
// before-period counts, and an after period with an optional multiplicative
// treatment effect on selected roads.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "rtm/core.hpp"
#include "rtm/error.hpp"
#include "rtm/model.hpp"

namespace rtm::sim {

using Rng = std::mt19937_64;

enum class Population { point_mass, bernoulli, gamma, lognormal, schema };

// poisson: X ~ Poisson(mu). bernoulli: X = 1{Poisson(mu) >= 1}, i.e. at most
// one fatality per road and period with P(X = 1) = 1 - exp(-mu).
enum class OutcomeMode { poisson, bernoulli };

struct SchemaPopulation {
    model::ModelSpec spec;
    std::optional<double> theta;  // override the prior draw
    std::optional<double> rho;
    double exposure_min = 1e3;    // log-uniform exposure range
    double exposure_max = 1e5;
    bool unique_types = false;    // every road gets its own type
};

struct CityConfig {
    Population population = Population::bernoulli;
    std::size_t roads = 100;
    double probability = 0.1;  // bernoulli: P(X >= 1) per period
    double rate = 0.0;         // point mass
    double gamma_shape = 1.0, gamma_rate = 10.0;
    double log_mean = -3.0, log_sd = 1.0;
    OutcomeMode mode = OutcomeMode::poisson;
    std::optional<SchemaPopulation> schema;
    std::uint64_t seed = 1;

    void validate() const {
        if (roads < 1) throw ConfigError("city needs at least one road");
        switch (population) {
        case Population::point_mass:
            if (!(rate >= 0.0) || !std::isfinite(rate)) throw ConfigError("point-mass rate must be >= 0");
            break;
        case Population::bernoulli:
            if (!(probability >= 0.0 && probability < 1.0)) throw ConfigError("probability must lie in [0, 1)");
            break;
        case Population::gamma:
            if (!(gamma_shape > 0.0 && gamma_rate > 0.0)) throw ConfigError("gamma shape and rate must be positive");
            break;
        case Population::lognormal:
            if (!(log_sd > 0.0) || !std::isfinite(log_mean)) throw ConfigError("invalid lognormal parameters");
            break;
        case Population::schema:
            if (!schema) throw ConfigError("schema-driven city needs a schema population");
            schema->spec.validate();
            if (!(schema->exposure_min > 0.0 && schema->exposure_max >= schema->exposure_min))
                throw ConfigError("invalid exposure range");
            break;
        }
    }
};

struct SimRoad {
    std::string id;
    double rate = 0.0;          // mu_i per period
    std::vector<int> subtype;   // schema-driven only
    double exposure = 1.0;
    std::size_t type = 0;       // index into SimCity::types
};

struct SimCity {
    std::vector<SimRoad> roads;
    Population population = Population::bernoulli;
    OutcomeMode mode = OutcomeMode::poisson;
    // schema-driven ground truth
    std::optional<model::ModelSpec> spec;
    std::vector<TypeCell> types;  // distinct subtypes, lexicographic, exposure summed
    Eigen::VectorXd truth;        // parameter vector laid out over `types`

    std::size_t size() const { return roads.size(); }

    double total_rate() const {
        double s = 0.0;
        for (const auto& r : roads) s += r.rate;
        return s;
    }
};

inline std::string road_id(std::size_t i) {
    std::string digits = std::to_string(i + 1);
    return "R" + std::string(digits.size() < 6 ? 6 - digits.size() : 0, '0') + digits;
}

namespace detail {

inline void fill_schema_city(const SchemaPopulation& pop, std::size_t n, Rng& rng, SimCity& city) {
    const auto& schema = pop.spec.schema;
    std::size_t combos = 1;
    for (const auto& g : schema.groups) combos = combos > n ? combos : combos * g.cardinality();
    if (pop.unique_types && combos < n)
        throw ConfigError("unique road types requested but the schema has fewer types than roads");

    std::set<std::vector<int>> used;
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const double log_lo = std::log(pop.exposure_min), log_hi = std::log(pop.exposure_max);
    for (std::size_t i = 0; i < n; ++i) {
        SimRoad road;
        road.id = road_id(i);
        do {
            road.subtype.clear();
            for (const auto& g : schema.groups) {
                std::uniform_int_distribution<int> level(1, static_cast<int>(g.cardinality()));
                road.subtype.push_back(level(rng));
            }
        } while (pop.unique_types && !used.insert(road.subtype).second);
        road.exposure = std::exp(log_lo + (log_hi - log_lo) * unif(rng));
        city.roads.push_back(std::move(road));
    }

    std::vector<RoadRecord> records;
    records.reserve(n);
    for (const auto& r : city.roads) records.push_back({r.id, r.subtype, r.exposure, 0, false, ""});
    city.types = aggregate_cells(records, schema);
    auto index = index_cells(city.types);
    for (auto& r : city.roads) r.type = index.at(r.subtype);

    model::ParameterLayout layout(pop.spec, city.types.size());
    city.truth = model::draw_from_prior(pop.spec, layout, rng);
    if (pop.theta) city.truth[layout.grand_mean] = *pop.theta;
    if (pop.rho && layout.offset_coef != model::npos) city.truth[layout.offset_coef] = *pop.rho;
    city.spec = pop.spec;

    auto scales = model::compute_scales(pop.spec, layout, city.truth);
    for (auto& r : city.roads) {
        TypeCell unit = make_cell(r.subtype, 0, r.exposure, schema);
        double error = scales.cell * city.truth[layout.cells.offset + r.type];
        r.rate = std::exp(model::log_rate(pop.spec, layout, city.truth, scales, unit, error));
    }
}

}  // namespace detail

inline SimCity generate_city(const CityConfig& config) {
    config.validate();
    Rng rng(config.seed);
    SimCity city;
    city.population = config.population;
    city.mode = config.mode;
    if (config.population == Population::schema) {
        detail::fill_schema_city(*config.schema, config.roads, rng, city);
        return city;
    }
    std::gamma_distribution<double> gamma(config.gamma_shape, 1.0 / config.gamma_rate);
    std::lognormal_distribution<double> lognormal(config.log_mean, config.log_sd);
    for (std::size_t i = 0; i < config.roads; ++i) {
        SimRoad road;
        road.id = road_id(i);
        switch (config.population) {
        case Population::point_mass: road.rate = config.rate; break;
        case Population::bernoulli: road.rate = -std::log1p(-config.probability); break;
        case Population::gamma: road.rate = gamma(rng); break;
        case Population::lognormal: road.rate = lognormal(rng); break;
        case Population::schema: break;
        }
        city.roads.push_back(std::move(road));
    }
    return city;
}

struct TreatmentEffect {
    double multiplier = 1.0;

    void validate() const {
        if (!(multiplier > 0.0) || !std::isfinite(multiplier))
            throw ConfigError("treatment multiplier must be positive");
    }
};

// Counts for one period. Road i uses rate mu_i * multiplier when selected.
inline std::vector<long long> simulate_period(const SimCity& city, const TreatmentEffect& effect,
                                              const std::vector<bool>& selected, std::uint64_t seed) {
    effect.validate();
    if (!selected.empty() && selected.size() != city.size())
        throw DataError("selection flags do not match the number of roads");
    Rng rng(seed);
    std::vector<long long> counts(city.size(), 0);
    for (std::size_t i = 0; i < city.size(); ++i) {
        double mu = city.roads[i].rate * (!selected.empty() && selected[i] ? effect.multiplier : 1.0);
        if (mu <= 0.0) continue;
        if (city.mode == OutcomeMode::bernoulli) {
            std::bernoulli_distribution hit(-std::expm1(-mu));
            counts[i] = hit(rng) ? 1 : 0;
        } else {
            std::poisson_distribution<long long> poisson(mu);
            counts[i] = poisson(rng);
        }
    }
    return counts;
}

enum class SelectionRule { threshold, top_m, eligible_threshold };

// Eligibility filter on one covariate group: a road qualifies when its level
// in `group` is one of `levels`.
struct Eligibility {
    std::size_t group = 0;
    std::vector<int> levels;

    bool admits(const std::vector<int>& subtype) const {
        if (group >= subtype.size()) throw DataError("eligibility filter references a missing group");
        return std::find(levels.begin(), levels.end(), subtype[group]) != levels.end();
    }
};

struct SelectionPolicy {
    SelectionRule rule = SelectionRule::threshold;
    long long threshold = 1;
    std::size_t m = 0;
    Eligibility eligibility;
};

struct Selection {
    std::vector<bool> flags;
    std::vector<std::string> warnings;

    std::size_t count() const { return static_cast<std::size_t>(std::count(flags.begin(), flags.end(), true)); }
};

// Roads are ordered by id, which is their position; ties in top-M go to the
// lowest position.
inline Selection select_roads(std::span<const long long> counts, const SelectionPolicy& policy,
                              std::span<const SimRoad> roads = {}) {
    for (long long c : counts)
        if (c < 0) throw DataError("negative before-period count");
    Selection sel;
    sel.flags.assign(counts.size(), false);
    switch (policy.rule) {
    case SelectionRule::threshold:
        for (std::size_t i = 0; i < counts.size(); ++i) sel.flags[i] = counts[i] >= policy.threshold;
        break;
    case SelectionRule::eligible_threshold:
        if (roads.size() != counts.size()) throw DataError("eligibility selection needs road covariates");
        for (std::size_t i = 0; i < counts.size(); ++i)
            sel.flags[i] = counts[i] >= policy.threshold && policy.eligibility.admits(roads[i].subtype);
        break;
    case SelectionRule::top_m: {
        std::size_t m = policy.m;
        if (m > counts.size()) {
            sel.warnings.push_back("top-M of " + std::to_string(m) + " exceeds " + std::to_string(counts.size()) +
                                   " roads; selecting all");
            m = counts.size();
        }
        std::vector<std::size_t> order(counts.size());
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return counts[a] > counts[b]; });
        for (std::size_t r = 0; r < m; ++r) sel.flags[order[r]] = true;
        break;
    }
    }
    return sel;
}

// Fatality totals split by selection status for the before and after periods.
struct PeriodTotals {
    long long before_selected = 0, after_selected = 0;
    long long before_unselected = 0, after_unselected = 0;
    std::size_t selected = 0, unselected = 0;
};

inline PeriodTotals tabulate(std::span<const long long> before, std::span<const long long> after,
                             const std::vector<bool>& selected) {
    if (before.size() != after.size() || before.size() != selected.size())
        throw DataError("period and selection lengths differ");
    PeriodTotals t;
    for (std::size_t i = 0; i < before.size(); ++i) {
        if (selected[i]) {
            t.before_selected += before[i];
            t.after_selected += after[i];
            ++t.selected;
        } else {
            t.before_unselected += before[i];
            t.after_unselected += after[i];
            ++t.unselected;
        }
    }
    return t;
}

// Expected-value totals for the toy city where every road has the same
// P(X >= 1) = p, at most one fatality per period, selection X_before >= 1 and
// no policy effect. Returns (B_s, A_s, B_u, A_u) with A_u the after count on
// the selected roads had no policy been applied, and B_u the before count on
// unselected roads.
struct ToyExpectation {
    double before_selected, after_selected, before_unselected, after_unselected;
};

inline ToyExpectation toy_expectation(std::size_t roads, double p) {
    const double n = static_cast<double>(roads);
    const double selected = n * p;
    return {selected, selected * p, 0.0, selected * p};
}

}  // namespace rtm::sim
