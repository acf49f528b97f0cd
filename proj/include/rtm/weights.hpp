#pragma once

// Survey weights and inverse-probability reweighting.
//
// Roads enter a retrospective fatality file only when X_i > 0, so summing
// their posterior rates undercounts the city. Dividing each observed road's
// rate by P(X_i > 0) restores the total over all roads in expectation:
//
//   E sum_{observed} mu_i / P(X_i > 0) = sum_{all roads} mu_i
//
// P(X_i > 0) for a road type is estimated from prospectively sampled crash
// reports with target-population weights.

#include <cmath>
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

namespace rtm::weights {

inline void check_probability(double p, const char* what) {
    if (!(p > 0.0 && p <= 1.0)) throw DomainError(std::string(what) + " must lie in (0, 1], got " + std::to_string(p));
}

inline double national_weight(double p_psu, double p_pj, double p_par) {
    check_probability(p_psu, "P(PSU)");
    check_probability(p_pj, "P(PJ | PSU)");
    check_probability(p_par, "P(PAR | PJ)");
    return 1.0 / (p_psu * p_pj * p_par);
}

inline double target_weight(double national, double membership) {
    if (!(national > 0.0) || !std::isfinite(national)) throw DomainError("national weight must be positive");
    check_probability(membership, "membership probability");
    return national * membership;
}

struct WeightedReport {
    std::string report_id;
    std::vector<int> subtype;
    bool fatal = false;
    double target_weight = 1.0;
};

enum class Smoothing {
    ratio_of_sums,   // (sum w*fatal + 1) / (sum w + 1)
    sum_of_ratios,   // sum (w*fatal + 1) / (w + 1), clamped to 1
};

inline double fatality_probability(std::span<const WeightedReport> reports,
                                   Smoothing smoothing = Smoothing::ratio_of_sums) {
    if (reports.empty()) return 1.0;
    for (const auto& r : reports)
        if (!(r.target_weight >= 0.0) || !std::isfinite(r.target_weight))
            throw DomainError("report '" + r.report_id + "' has a negative or non-finite weight");
    double p = 0.0;
    if (smoothing == Smoothing::ratio_of_sums) {
        double num = 1.0, den = 1.0;
        for (const auto& r : reports) {
            num += r.fatal ? r.target_weight : 0.0;
            den += r.target_weight;
        }
        p = num / den;
    } else {
        for (const auto& r : reports) p += ((r.fatal ? r.target_weight : 0.0) + 1.0) / (r.target_weight + 1.0);
    }
    return std::min(p, 1.0);
}

class FatalityProbabilityTable {
public:
    struct Entry {
        double probability = 1.0;
        std::size_t reports = 0;
        std::size_t fatal_reports = 0;
    };

    static FatalityProbabilityTable build(std::span<const WeightedReport> reports,
                                          Smoothing smoothing = Smoothing::ratio_of_sums) {
        std::map<std::vector<int>, std::vector<WeightedReport>> grouped;
        for (const auto& r : reports) grouped[r.subtype].push_back(r);
        FatalityProbabilityTable table;
        for (const auto& [subtype, group] : grouped) {
            Entry e;
            e.probability = fatality_probability(group, smoothing);
            e.reports = group.size();
            for (const auto& r : group) e.fatal_reports += r.fatal ? 1 : 0;
            table.entries_.emplace(subtype, e);
        }
        return table;
    }

    void set(const std::vector<int>& subtype, double probability) {
        check_probability(probability, "fatality probability");
        entries_[subtype] = Entry{probability, 0, 0};
    }

    // Unseen types get 1: no inflation without prospective evidence.
    double probability(const std::vector<int>& subtype) const {
        auto it = entries_.find(subtype);
        return it == entries_.end() ? 1.0 : it->second.probability;
    }

    const std::map<std::vector<int>, Entry>& entries() const { return entries_; }

private:
    std::map<std::vector<int>, Entry> entries_;
};

// Row-wise sum_i mu(s, i) / p_i for an (S x I) matrix of rates.
inline Eigen::VectorXd reweighted_sum(const Eigen::MatrixXd& rates, std::span<const double> inclusion) {
    if (static_cast<std::size_t>(rates.cols()) != inclusion.size())
        throw DataError("rate matrix and inclusion probabilities disagree on the number of roads");
    Eigen::VectorXd inv(rates.cols());
    for (std::size_t i = 0; i < inclusion.size(); ++i) {
        check_probability(inclusion[i], "inclusion probability");
        inv[static_cast<Eigen::Index>(i)] = 1.0 / inclusion[i];
    }
    return rates * inv;
}

// Posterior rate of every observed unit for every retained draw (S x I).
// Units whose subtype matches a training cell reuse that cell's error; other
// units draw a fresh error from N(0, cell SD) per draw.
inline Eigen::MatrixXd unit_rates(const model::HierarchicalModel& m, const sampler::PosteriorDraws& draws,
                                  std::span<const TypeCell> units, std::uint64_t seed) {
    auto index = index_cells(m.cells());
    std::vector<long> cell_of(units.size(), -1);
    std::vector<TypeCell> prepared(units.begin(), units.end());
    for (std::size_t i = 0; i < units.size(); ++i) {
        auto& u = prepared[i];
        if (u.subtype.size() != m.spec().schema.size()) throw DataError("unit subtype length does not match schema");
        if (!(u.exposure > 0.0)) throw DataError("unit exposure must be positive");
        u.interaction_levels = interaction_levels(u.subtype, m.spec().schema);
        if (auto it = index.find(u.subtype); it != index.end()) cell_of[i] = static_cast<long>(it->second);
    }
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> z(0.0, 1.0);
    const auto& layout = m.layout();
    Eigen::MatrixXd out(static_cast<Eigen::Index>(draws.total()), static_cast<Eigen::Index>(units.size()));
    for (std::size_t s = 0; s < draws.total(); ++s) {
        Eigen::VectorXd x = draws.draw(s);
        auto sc = m.scales(x);
        for (std::size_t i = 0; i < units.size(); ++i) {
            double eps = cell_of[i] >= 0 ? x[layout.cells.offset + static_cast<std::size_t>(cell_of[i])] : z(rng);
            out(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(i)) =
                std::exp(model::log_rate(m.spec(), layout, x, sc, prepared[i], sc.cell * eps));
        }
    }
    return out;
}

struct ReweightedExpectation {
    Eigen::VectorXd draws;  // one total per posterior draw
    math::IntervalSummary summary;
    std::vector<double> inclusion;
};

inline ReweightedExpectation reweighted_expectation(const model::HierarchicalModel& m,
                                                    const sampler::PosteriorDraws& draws,
                                                    std::span<const TypeCell> units,
                                                    const FatalityProbabilityTable& table, std::uint64_t seed = 1) {
    ReweightedExpectation out;
    for (const auto& u : units) out.inclusion.push_back(table.probability(u.subtype));
    out.draws = reweighted_sum(unit_rates(m, draws, units, seed), out.inclusion);
    out.summary = math::summarize(std::vector<double>(out.draws.data(), out.draws.data() + out.draws.size()));
    return out;
}

}  // namespace rtm::weights
