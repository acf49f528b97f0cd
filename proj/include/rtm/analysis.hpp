#pragma once

// Evaluation layer: reduction factors, the before-after decomposition, the
// mirror-image diagnostic, Cramer's V, finite-population ANOVA, posterior
// predictive checks and effect summaries.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "rtm/core.hpp"
#include "rtm/error.hpp"
#include "rtm/math.hpp"
#include "rtm/model.hpp"
#include "rtm/sampler.hpp"

namespace rtm::analysis {

struct ReductionFactor {
    double change = 0.0;        // (after - before) / before
    double modification = 0.0;  // after / before

    double percent() const { return 100.0 * change; }
};

inline ReductionFactor reduction_factor(double before, double after) {
    if (!(before > 0.0)) throw DomainError("reduction factor needs a positive before-period baseline");
    return {(after - before) / before, after / before};
}

struct DecompositionLedger {
    long long before_selected = 0, after_selected = 0, before_unselected = 0, after_unselected = 0;
    long long naive = 0;      // A_s - B_s
    long long causal = 0;     // A_s - A_u
    long long temporal = 0;   // A_u - B_u
    long long selection = 0;  // B_u - B_s
};

inline DecompositionLedger decompose(long long b_s, long long a_s, long long b_u, long long a_u) {
    DecompositionLedger d{b_s, a_s, b_u, a_u};
    d.naive = a_s - b_s;
    d.causal = a_s - a_u;
    d.temporal = a_u - b_u;
    d.selection = b_u - b_s;
    return d;
}

struct MirrorReport {
    ReductionFactor selected, unselected;
    bool flagged = false;
};

// Flags opposite-signed changes where the unselected change is at least
// `ratio` times the selected change in magnitude.
inline MirrorReport mirror_diagnostic(double before_selected, double after_selected, double before_unselected,
                                      double after_unselected, double ratio = 0.5) {
    MirrorReport r;
    r.selected = reduction_factor(before_selected, after_selected);
    r.unselected = reduction_factor(before_unselected, after_unselected);
    const double s = r.selected.change, u = r.unselected.change;
    r.flagged = s * u < 0.0 && std::abs(u) >= ratio * std::abs(s);
    return r;
}

using ContingencyTable = std::vector<std::vector<double>>;

struct CramersV {
    double value = 0.0;
    double chi_square = 0.0;
    double total = 0.0;
    std::size_t dropped_rows = 0, dropped_cols = 0;
    std::vector<std::string> warnings;
};

inline CramersV cramers_v(const ContingencyTable& table) {
    if (table.empty() || table.front().empty()) throw DomainError("empty contingency table");
    const std::size_t r0 = table.size(), c0 = table.front().size();
    for (const auto& row : table) {
        if (row.size() != c0) throw DomainError("ragged contingency table");
        for (double v : row)
            if (!(v >= 0.0) || !std::isfinite(v)) throw DomainError("contingency counts must be nonnegative");
    }
    std::vector<double> rs(r0, 0.0), cs(c0, 0.0);
    for (std::size_t i = 0; i < r0; ++i)
        for (std::size_t j = 0; j < c0; ++j) {
            rs[i] += table[i][j];
            cs[j] += table[i][j];
        }
    std::vector<std::size_t> rows, cols;
    for (std::size_t i = 0; i < r0; ++i)
        if (rs[i] > 0.0) rows.push_back(i);
    for (std::size_t j = 0; j < c0; ++j)
        if (cs[j] > 0.0) cols.push_back(j);

    CramersV out;
    out.dropped_rows = r0 - rows.size();
    out.dropped_cols = c0 - cols.size();
    if (out.dropped_rows + out.dropped_cols > 0)
        out.warnings.push_back("trimmed " + std::to_string(out.dropped_rows) + " empty rows and " +
                               std::to_string(out.dropped_cols) + " empty columns");
    if (rows.size() < 2 || cols.size() < 2) throw DomainError("contingency table is degenerate after trimming");

    for (std::size_t i : rows) out.total += rs[i];
    for (std::size_t i : rows)
        for (std::size_t j : cols) {
            double e = rs[i] * cs[j] / out.total;
            double d = table[i][j] - e;
            out.chi_square += d * d / e;
        }
    const double k = static_cast<double>(std::min(rows.size(), cols.size()) - 1);
    out.value = std::min(1.0, std::sqrt(out.chi_square / (out.total * k)));
    return out;
}

// Pairwise association between covariate groups, one table per pair, with
// each record counted `fatalities` times (one entry per fatality).
inline std::vector<std::vector<double>> cramers_v_matrix(const std::vector<RoadRecord>& records,
                                                         const CovariateSchema& schema) {
    const std::size_t K = schema.size();
    std::vector<std::vector<double>> out(K, std::vector<double>(K, 1.0));
    for (std::size_t a = 0; a < K; ++a)
        for (std::size_t b = a + 1; b < K; ++b) {
            ContingencyTable t(schema.groups[a].cardinality(),
                               std::vector<double>(schema.groups[b].cardinality(), 0.0));
            for (const auto& r : records)
                t[static_cast<std::size_t>(r.subtype[a] - 1)][static_cast<std::size_t>(r.subtype[b] - 1)] +=
                    static_cast<double>(r.fatalities);
            double v = math::nan;
            try {
                v = cramers_v(t).value;
            } catch (const DomainError&) {
            }
            out[a][b] = out[b][a] = v;
        }
    return out;
}

// Sample SD (denominator J - 1) of one draw's realized batch coefficients.
inline double finite_population_sd(std::span<const double> coefficients) {
    if (coefficients.size() < 2) throw DomainError("finite-population SD needs a batch with at least 2 levels");
    return math::sample_sd(coefficients);
}

struct AnovaRow {
    std::string batch;
    std::size_t levels = 0;
    math::IntervalSummary finite_population;  // per-draw SD of realized coefficients
    math::IntervalSummary superpopulation;    // per-draw batch scale
};

inline AnovaRow finite_population_sds(const model::HierarchicalModel& m, const sampler::PosteriorDraws& draws,
                                      const model::Batch& batch) {
    std::vector<double> fp, sp;
    fp.reserve(draws.total());
    sp.reserve(draws.total());
    AnovaRow row;
    row.batch = batch.name;
    for (std::size_t s = 0; s < draws.total(); ++s) {
        Eigen::VectorXd x = draws.draw(s);
        auto coef = m.realized_coefficients(x, batch);
        row.levels = coef.size();
        fp.push_back(finite_population_sd(coef));
        sp.push_back(m.batch_scale(x, batch));
    }
    row.finite_population = math::summarize(std::move(fp));
    row.superpopulation = math::summarize(std::move(sp));
    return row;
}

inline std::vector<AnovaRow> anova(const model::HierarchicalModel& m, const sampler::PosteriorDraws& draws) {
    std::vector<AnovaRow> rows;
    for (const auto& b : m.batches()) {
        if (b.kind == model::BatchKind::cell && m.cells().size() < 2) continue;
        rows.push_back(finite_population_sds(m, draws, b));
    }
    return rows;
}

// (S x J) posterior rates of the training cells.
inline Eigen::MatrixXd cell_rates(const model::HierarchicalModel& m, const sampler::PosteriorDraws& draws) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(draws.total()), static_cast<Eigen::Index>(m.cells().size()));
    for (std::size_t s = 0; s < draws.total(); ++s) {
        Eigen::VectorXd x = draws.draw(s);
        auto sc = m.scales(x);
        for (std::size_t j = 0; j < m.cells().size(); ++j)
            out(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(j)) = std::exp(m.cell_log_rate(x, sc, j));
    }
    return out;
}

using CellFilter = std::function<bool(const TypeCell&)>;

struct PredictiveCheck {
    long long observed = 0;
    std::vector<long long> simulated;  // one total per draw
    double exceedance = 0.0;           // fraction strictly above observed
    std::map<long long, std::size_t> histogram;
};

// For every draw, simulates truncated-Poisson counts for the holdout cells
// matching `filter`, each with a fresh cell error, and compares the summed
// total against the observed holdout total.
inline PredictiveCheck posterior_predictive_check(const model::HierarchicalModel& m,
                                                  const sampler::PosteriorDraws& draws,
                                                  std::span<const TypeCell> holdout, const CellFilter& filter = {},
                                                  std::uint64_t seed = 1) {
    std::vector<TypeCell> cells;
    for (const auto& c : holdout) {
        if (filter && !filter(c)) continue;
        if (c.fatalities < 1) throw DataError("holdout cells must have at least one fatality");
        if (!(c.exposure > 0.0)) throw DataError("holdout cell exposure must be positive");
        TypeCell copy = c;
        copy.interaction_levels = interaction_levels(copy.subtype, m.spec().schema);
        cells.push_back(std::move(copy));
    }
    if (cells.empty()) throw DataError("posterior predictive check needs a nonempty holdout");
    if (draws.total() == 0) throw DataError("posterior predictive check needs posterior draws");

    PredictiveCheck out;
    for (const auto& c : cells) out.observed += c.fatalities;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> z(0.0, 1.0);
    std::size_t above = 0;
    for (std::size_t s = 0; s < draws.total(); ++s) {
        Eigen::VectorXd x = draws.draw(s);
        auto sc = m.scales(x);
        long long total = 0;
        for (const auto& c : cells) {
            double mu = std::exp(model::log_rate(m.spec(), m.layout(), x, sc, c, sc.cell * z(rng)));
            total += model::truncated_poisson_rng(std::max(mu, 1e-300), rng);
        }
        out.simulated.push_back(total);
        ++out.histogram[total];
        if (total > out.observed) ++above;
    }
    out.exceedance = static_cast<double>(above) / static_cast<double>(draws.total());
    return out;
}

struct EffectOptions {
    // Replace the observed after count by a draw of its Poisson rate,
    // Gamma(A + 1/2, 1), so intervals cover the after-period rate rather than
    // one realized count.
    bool propagate_after_noise = false;
    std::uint64_t seed = 1;
};

struct EffectSummary {
    math::IntervalSummary expected;   // expected fatalities without the policy
    math::IntervalSummary reduction;  // 1 - observed / expected
    double observed_after = 0.0;
    double naive_reduction = 0.0;
    double p_exceeds_naive = 0.0;     // P(reduction >= naive)
    double p_no_reduction = 0.0;      // P(reduction <= 0)
    std::size_t excluded = 0;         // draws with nonpositive expectation
    std::vector<double> reductions;
};

inline EffectSummary effect_summary(std::span<const double> expected, double observed_after, double naive_reduction,
                                    const EffectOptions& options = {}) {
    if (expected.empty()) throw DomainError("effect summary needs posterior draws");
    if (!(observed_after >= 0.0)) throw DomainError("observed after-period count must be nonnegative");
    EffectSummary out;
    out.observed_after = observed_after;
    out.naive_reduction = naive_reduction;
    std::mt19937_64 rng(options.seed);
    std::gamma_distribution<double> after_rate(observed_after + 0.5, 1.0);
    std::vector<double> kept;
    for (double e : expected) {
        if (!(e > 0.0) || !std::isfinite(e)) {
            ++out.excluded;
            continue;
        }
        kept.push_back(e);
        double a = options.propagate_after_noise ? after_rate(rng) : observed_after;
        out.reductions.push_back(1.0 - a / e);
    }
    if (out.reductions.empty()) throw NumericalError("every posterior expectation was nonpositive");
    std::size_t ge = 0, le = 0;
    for (double r : out.reductions) {
        ge += r >= naive_reduction ? 1 : 0;
        le += r <= 0.0 ? 1 : 0;
    }
    const double n = static_cast<double>(out.reductions.size());
    out.p_exceeds_naive = static_cast<double>(ge) / n;
    out.p_no_reduction = static_cast<double>(le) / n;
    out.expected = math::summarize(std::move(kept));
    out.reduction = math::summarize(out.reductions);
    return out;
}

// Scales an estimate for a covered subpopulation up to the whole city by a
// user-supplied share (e.g. population of the covered boroughs / city).
inline double scale_to_population(double estimate, double covered_share) {
    if (!(covered_share > 0.0 && covered_share <= 1.0)) throw DomainError("covered share must lie in (0, 1]");
    return estimate / covered_share;
}

}  // namespace rtm::analysis
