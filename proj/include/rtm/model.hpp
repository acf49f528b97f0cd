#pragma once

// Zero-truncated Poisson hierarchical log-linear model over road-type cells.
//
//   Y_j ~ Poisson+(mu_j)
//   log mu_j = theta + rho * log(EXPR_j)
//            + sum_k sigma_k * eta_k[level_k(j)]            (main effects)
//            + sum_l sigma_l * eta_l[level_l(j)]            (pairwise interactions)
//            + 0.3 * sigma_cell * eta_cell[j]               (cell error)
//   sigma_k = exp(-1 + 0.5 * tau_main  + 0.3 * ss_main  * eta_main[k])
//   sigma_l = exp(-2 + 0.5 * tau_inter + 0.3 * ss_inter * eta_inter[l])
//
// Every deviate has a standard normal prior (non-centered form). One main
// effect level may be overridden by a free coefficient with its own normal
// prior. The three positive scalars ss_main, ss_inter and sigma_cell carry
// half-normal(0, 1) priors and are stored on the log scale, so the sampler
// sees an unconstrained vector; the log-Jacobian is part of the density.

#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "rtm/core.hpp"
#include "rtm/error.hpp"
#include "rtm/math.hpp"

namespace rtm::model {

// ---------------------------------------------------------------------------
// Truncated Poisson primitives

// log(1 - exp(-exp(log_mu))), stable for very negative log_mu.
inline double log1m_exp_neg_exp(double log_mu) {
    if (log_mu < -20.0) return log_mu - 0.5 * std::exp(log_mu);
    return math::log1m_exp_neg(std::exp(log_mu));
}

inline double truncated_poisson_logpmf_log_rate(long long x, double log_mu) {
    return static_cast<double>(x) * log_mu - std::exp(log_mu) - math::log_factorial(x) -
           log1m_exp_neg_exp(log_mu);
}

// log[ mu^x / ((e^mu - 1) x!) ] for x >= 1.
inline double truncated_poisson_logpmf(long long x, double mu) {
    if (x < 1) throw DomainError("truncated Poisson support starts at 1, got " + std::to_string(x));
    if (!(mu > 0.0) || !std::isfinite(mu)) throw DomainError("truncated Poisson rate must be positive");
    return truncated_poisson_logpmf_log_rate(x, std::log(mu));
}

inline double truncated_poisson_mean(double mu) {
    if (!(mu > 0.0)) throw DomainError("truncated Poisson rate must be positive");
    return mu / -std::expm1(-mu);
}

// Draw from Poisson(mu) conditioned on a nonzero outcome. Ordinary Poisson
// draws are rejected until nonzero; for very small rates, where rejection
// would take ~1/mu tries, the same distribution is sampled by inversion.
template <class Rng>
long long truncated_poisson_rng(double mu, Rng& rng) {
    if (!(mu > 0.0) || !std::isfinite(mu)) throw DomainError("truncated Poisson rate must be positive");
    if (mu >= 0.05) {
        std::poisson_distribution<long long> poisson(mu);
        long long draw = poisson(rng);
        while (draw == 0) draw = poisson(rng);
        return draw;
    }
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    double u = unif(rng);
    double p = mu / std::expm1(mu);
    double cdf = p;
    long long x = 1;
    while (u > cdf && p > 0.0) {
        p *= mu / static_cast<double>(x + 1);
        cdf += p;
        ++x;
    }
    return x;
}

// d/d(log mu) of the truncated Poisson log-likelihood: y - mu - mu/(e^mu - 1).
inline double truncated_poisson_score(long long y, double log_mu) {
    double mu = std::exp(log_mu);
    double ratio = mu < 1e-8 ? 1.0 - 0.5 * mu : mu / std::expm1(mu);
    return static_cast<double>(y) - mu - ratio;
}

// ---------------------------------------------------------------------------
// Model hyperparameters and parameter layout

struct ReferenceLevel {
    std::size_t group = 0;
    int level = 1;  // dense 1-based
    double scale = 2.0;
};

struct ModelSpec {
    CovariateSchema schema;
    double grand_mean_loc = -10.0;
    double grand_mean_scale = 3.0;
    double offset_scale = 1.0;
    bool pin_offset = false;  // fix rho = 1
    double main_loc = -1.0;
    double main_tau_scale = 0.5;
    double main_eta_scale = 0.3;
    double inter_loc = -2.0;
    double inter_tau_scale = 0.5;
    double inter_eta_scale = 0.3;
    double cell_scale = 0.3;
    std::optional<ReferenceLevel> reference;

    // Defaults, with the last CITY level overridden when the schema has CITY.
    static ModelSpec with_defaults(CovariateSchema schema) {
        ModelSpec spec;
        if (auto k = schema.find_group("CITY"))
            spec.reference = ReferenceLevel{*k, static_cast<int>(schema.groups[*k].cardinality()), 2.0};
        spec.schema = std::move(schema);
        return spec;
    }

    void validate() const {
        schema.validate();
        if (!(inter_loc < main_loc))
            throw ConfigError("interaction log-SD location must be below the main-effect location");
        for (double s : {grand_mean_scale, offset_scale, main_tau_scale, main_eta_scale, inter_tau_scale,
                         inter_eta_scale, cell_scale})
            if (!(s > 0.0)) throw ConfigError("prior scales must be positive");
        if (reference) {
            if (reference->group >= schema.size()) throw ConfigError("reference level names a missing group");
            auto card = static_cast<int>(schema.groups[reference->group].cardinality());
            if (reference->level < 1 || reference->level > card)
                throw ConfigError("reference level out of range");
            if (!(reference->scale > 0.0)) throw ConfigError("reference prior scale must be positive");
        }
    }
};

struct Slice {
    std::size_t offset = 0;
    std::size_t size = 0;
};

inline constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();

// Coordinates of every named parameter inside the flat unconstrained vector.
class ParameterLayout {
public:
    ParameterLayout() = default;

    ParameterLayout(const ModelSpec& spec, std::size_t n_cells) {
        const auto& schema = spec.schema;
        std::size_t at = 0;
        grand_mean = at++;
        offset_coef = spec.pin_offset ? npos : at++;
        level_slot_.resize(schema.size());
        for (std::size_t k = 0; k < schema.size(); ++k) {
            std::size_t card = schema.groups[k].cardinality();
            bool has_ref = spec.reference && spec.reference->group == k;
            Slice s{at, has_ref ? card - 1 : card};
            main.push_back(s);
            at += s.size;
            auto& slots = level_slot_[k];
            std::size_t next = s.offset;
            for (std::size_t lev = 1; lev <= card; ++lev) {
                if (has_ref && static_cast<int>(lev) == spec.reference->level)
                    slots.push_back(npos);
                else
                    slots.push_back(next++);
            }
        }
        if (spec.reference) {
            reference = at++;
            reference_group = spec.reference->group;
            reference_level = spec.reference->level;
        }
        for (std::size_t l = 0; l < schema.interactions.size(); ++l) {
            Slice s{at, schema.interaction_size(l)};
            inter.push_back(s);
            at += s.size;
        }
        cells = Slice{at, n_cells};
        at += n_cells;
        tau_main = at++;
        tau_inter = at++;
        log_sigma_sigma_main = at++;
        log_sigma_sigma_inter = at++;
        log_sigma_cell = at++;
        eta_main = Slice{at, schema.size()};
        at += schema.size();
        eta_inter = Slice{at, schema.interactions.size()};
        at += schema.interactions.size();
        dim_ = at;
    }

    std::size_t dimension() const { return dim_; }

    // Absolute coordinate of the deviate for a main-effect level (1-based);
    // npos for the overridden reference level.
    std::size_t main_slot(std::size_t group, int level) const {
        return level_slot_[group][static_cast<std::size_t>(level - 1)];
    }

    std::vector<std::string> names(const ModelSpec& spec) const {
        const auto& schema = spec.schema;
        std::vector<std::string> out(dim_);
        out[grand_mean] = "theta";
        if (offset_coef != npos) out[offset_coef] = "rho";
        for (std::size_t k = 0; k < schema.size(); ++k)
            for (std::size_t lev = 1; lev <= schema.groups[k].cardinality(); ++lev) {
                std::size_t at = main_slot(k, static_cast<int>(lev));
                std::string name = schema.groups[k].code + "[" + std::to_string(schema.groups[k].codes[lev - 1]) + "]";
                out[at == npos ? reference : at] = at == npos ? name + "_ref" : "eta_" + name;
            }
        for (std::size_t l = 0; l < schema.interactions.size(); ++l)
            for (std::size_t i = 0; i < inter[l].size; ++i)
                out[inter[l].offset + i] = "eta_" + schema.interaction_name(l) + "[" + std::to_string(i + 1) + "]";
        for (std::size_t j = 0; j < cells.size; ++j) out[cells.offset + j] = "eta_cell[" + std::to_string(j) + "]";
        out[tau_main] = "tau_main";
        out[tau_inter] = "tau_inter";
        out[log_sigma_sigma_main] = "log_sigma_sigma_main";
        out[log_sigma_sigma_inter] = "log_sigma_sigma_inter";
        out[log_sigma_cell] = "log_sigma_cell";
        for (std::size_t k = 0; k < schema.size(); ++k) out[eta_main.offset + k] = "eta_main[" + schema.groups[k].code + "]";
        for (std::size_t l = 0; l < schema.interactions.size(); ++l)
            out[eta_inter.offset + l] = "eta_inter[" + schema.interaction_name(l) + "]";
        return out;
    }

    std::size_t grand_mean = 0;
    std::size_t offset_coef = npos;
    std::vector<Slice> main;  // deviates per group, reference level excluded
    std::size_t reference = npos;
    std::size_t reference_group = npos;
    int reference_level = 0;
    std::vector<Slice> inter;
    Slice cells;
    std::size_t tau_main = 0, tau_inter = 0;
    std::size_t log_sigma_sigma_main = 0, log_sigma_sigma_inter = 0, log_sigma_cell = 0;
    Slice eta_main, eta_inter;

private:
    std::vector<std::vector<std::size_t>> level_slot_;
    std::size_t dim_ = 0;
};

// Transformed scales for one parameter vector.
struct Scales {
    std::vector<double> main;   // sigma_k
    std::vector<double> inter;  // sigma_l
    double cell = 0.0;          // cell_scale * sigma_cell
    double sigma_sigma_main = 0.0, sigma_sigma_inter = 0.0, sigma_cell = 0.0;
};

inline Scales compute_scales(const ModelSpec& spec, const ParameterLayout& layout, const Eigen::VectorXd& x) {
    Scales s;
    s.sigma_sigma_main = std::exp(x[layout.log_sigma_sigma_main]);
    s.sigma_sigma_inter = std::exp(x[layout.log_sigma_sigma_inter]);
    s.sigma_cell = std::exp(x[layout.log_sigma_cell]);
    s.cell = spec.cell_scale * s.sigma_cell;
    s.main.resize(layout.main.size());
    for (std::size_t k = 0; k < s.main.size(); ++k)
        s.main[k] = std::exp(spec.main_loc + spec.main_tau_scale * x[layout.tau_main] +
                             spec.main_eta_scale * s.sigma_sigma_main * x[layout.eta_main.offset + k]);
    s.inter.resize(layout.inter.size());
    for (std::size_t l = 0; l < s.inter.size(); ++l)
        s.inter[l] = std::exp(spec.inter_loc + spec.inter_tau_scale * x[layout.tau_inter] +
                              spec.inter_eta_scale * s.sigma_sigma_inter * x[layout.eta_inter.offset + l]);
    return s;
}

inline double offset_coefficient(const ParameterLayout& layout, const Eigen::VectorXd& x) {
    return layout.offset_coef == npos ? 1.0 : x[layout.offset_coef];
}

// Realized main effect for a (group, level) pair.
inline double main_effect(const ParameterLayout& layout, const Scales& s, const Eigen::VectorXd& x,
                          std::size_t group, int level) {
    std::size_t at = layout.main_slot(group, level);
    return at == npos ? x[layout.reference] : s.main[group] * x[at];
}

// Log-rate of an arbitrary cell given the realized cell error (on the log scale).
inline double log_rate(const ModelSpec& spec, const ParameterLayout& layout, const Eigen::VectorXd& x,
                       const Scales& s, const TypeCell& cell, double cell_error) {
    double eta = x[layout.grand_mean] + offset_coefficient(layout, x) * std::log(cell.exposure) + cell_error;
    for (std::size_t k = 0; k < spec.schema.size(); ++k) eta += main_effect(layout, s, x, k, cell.subtype[k]);
    for (std::size_t l = 0; l < spec.schema.interactions.size(); ++l)
        eta += s.inter[l] * x[layout.inter[l].offset + static_cast<std::size_t>(cell.interaction_levels[l] - 1)];
    return eta;
}

// Draw an unconstrained vector from the prior.
template <class Rng>
Eigen::VectorXd draw_from_prior(const ModelSpec& spec, const ParameterLayout& layout, Rng& rng) {
    std::normal_distribution<double> z(0.0, 1.0);
    Eigen::VectorXd x(static_cast<Eigen::Index>(layout.dimension()));
    for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = z(rng);
    x[layout.grand_mean] = spec.grand_mean_loc + spec.grand_mean_scale * x[layout.grand_mean];
    if (layout.offset_coef != npos) x[layout.offset_coef] *= spec.offset_scale;
    if (layout.reference != npos) x[layout.reference] *= spec.reference->scale;
    for (std::size_t at : {layout.log_sigma_sigma_main, layout.log_sigma_sigma_inter, layout.log_sigma_cell})
        x[at] = std::log(std::abs(x[at]));
    return x;
}

enum class BatchKind { main, interaction, cell };

struct Batch {
    BatchKind kind;
    std::size_t index = 0;  // group or interaction number; unused for cell
    std::string name;
};

// ---------------------------------------------------------------------------
// Model: data, density and gradient

class HierarchicalModel {
public:
    HierarchicalModel(ModelSpec spec, std::vector<TypeCell> cells)
        : spec_(std::move(spec)), cells_(std::move(cells)) {
        spec_.validate();
        layout_ = ParameterLayout(spec_, cells_.size());
        const auto K = spec_.schema.size();
        const auto L = spec_.schema.interactions.size();
        main_pos_.reserve(cells_.size() * K);
        inter_pos_.reserve(cells_.size() * L);
        for (std::size_t j = 0; j < cells_.size(); ++j) {
            auto& c = cells_[j];
            if (c.fatalities < 1)
                throw DataError("cell " + std::to_string(j) + " has Y = " + std::to_string(c.fatalities) +
                                "; the truncated likelihood needs Y >= 1");
            if (c.subtype.size() != K) throw DataError("cell subtype length does not match schema");
            if (!(c.exposure > 0.0) || !std::isfinite(c.exposure))
                throw DataError("cell " + std::to_string(j) + " has non-positive exposure");
            for (std::size_t k = 0; k < K; ++k) {
                if (c.subtype[k] < 1 || static_cast<std::size_t>(c.subtype[k]) > spec_.schema.groups[k].cardinality())
                    throw DataError("cell " + std::to_string(j) + " level out of range for group " +
                                    spec_.schema.groups[k].code);
                main_pos_.push_back(layout_.main_slot(k, c.subtype[k]));
            }
            if (c.interaction_levels.size() != L) c.interaction_levels = interaction_levels(c.subtype, spec_.schema);
            for (std::size_t l = 0; l < L; ++l)
                inter_pos_.push_back(layout_.inter[l].offset + static_cast<std::size_t>(c.interaction_levels[l] - 1));
            log_exposure_.push_back(std::log(c.exposure));
        }
    }

    const ModelSpec& spec() const { return spec_; }
    const ParameterLayout& layout() const { return layout_; }
    const std::vector<TypeCell>& cells() const { return cells_; }
    std::size_t dimension() const { return layout_.dimension(); }
    std::vector<std::string> parameter_names() const { return layout_.names(spec_); }

    Scales scales(const Eigen::VectorXd& x) const { return compute_scales(spec_, layout_, x); }

    double cell_log_rate(const Eigen::VectorXd& x, const Scales& s, std::size_t j) const {
        return log_rate(spec_, layout_, x, s, cells_[j], s.cell * x[layout_.cells.offset + j]);
    }

    // mu_j for a training cell.
    double cell_rate(const Eigen::VectorXd& x, std::size_t j) const { return std::exp(cell_log_rate(x, scales(x), j)); }

    double cell_log_likelihood(const Eigen::VectorXd& x, std::size_t j) const {
        return truncated_poisson_logpmf_log_rate(cells_[j].fatalities, cell_log_rate(x, scales(x), j));
    }

    double log_likelihood(const Eigen::VectorXd& x) const {
        Scales s = scales(x);
        double total = 0.0;
        for (std::size_t j = 0; j < cells_.size(); ++j)
            total += truncated_poisson_logpmf_log_rate(cells_[j].fatalities, cell_log_rate(x, s, j));
        return total;
    }

    double log_prior(const Eigen::VectorXd& x) const {
        double lp = math::normal_lpdf(x[layout_.grand_mean], spec_.grand_mean_loc, spec_.grand_mean_scale);
        if (layout_.offset_coef != npos) lp += math::normal_lpdf(x[layout_.offset_coef], 0.0, spec_.offset_scale);
        if (layout_.reference != npos) lp += math::normal_lpdf(x[layout_.reference], 0.0, spec_.reference->scale);
        auto std_normal = [&](Slice s) {
            for (std::size_t i = 0; i < s.size; ++i) lp += math::normal_lpdf(x[s.offset + i], 0.0, 1.0);
        };
        for (const auto& s : layout_.main) std_normal(s);
        for (const auto& s : layout_.inter) std_normal(s);
        std_normal(layout_.cells);
        std_normal(layout_.eta_main);
        std_normal(layout_.eta_inter);
        lp += math::normal_lpdf(x[layout_.tau_main], 0.0, 1.0);
        lp += math::normal_lpdf(x[layout_.tau_inter], 0.0, 1.0);
        // half-normal on exp(u) plus log-Jacobian u
        for (std::size_t at : {layout_.log_sigma_sigma_main, layout_.log_sigma_sigma_inter, layout_.log_sigma_cell}) {
            double u = x[at];
            lp += std::numbers::ln2 + math::normal_lpdf(std::exp(u), 0.0, 1.0) + u;
        }
        return lp;
    }

    double log_density(const Eigen::VectorXd& x) const { return log_likelihood(x) + log_prior(x); }

    // Returns the log density and writes its gradient into grad.
    double log_density_gradient(const Eigen::VectorXd& x, Eigen::VectorXd& grad) const {
        const auto K = spec_.schema.size();
        const auto L = spec_.schema.interactions.size();
        grad.setZero(x.size());
        Scales s = scales(x);
        const double rho = offset_coefficient(layout_, x);
        const double theta = x[layout_.grand_mean];

        // d loglik / d sigma_k, times sigma_k later
        std::vector<double> main_acc(K, 0.0), inter_acc(L, 0.0);
        double cell_acc = 0.0;
        double lik = 0.0;
        double d_theta = 0.0, d_rho = 0.0;

        for (std::size_t j = 0; j < cells_.size(); ++j) {
            const std::size_t* mp = main_pos_.data() + j * K;
            const std::size_t* ip = inter_pos_.data() + j * L;
            const std::size_t cp = layout_.cells.offset + j;
            double eta = theta + rho * log_exposure_[j] + s.cell * x[cp];
            for (std::size_t k = 0; k < K; ++k) eta += mp[k] == npos ? x[layout_.reference] : s.main[k] * x[mp[k]];
            for (std::size_t l = 0; l < L; ++l) eta += s.inter[l] * x[ip[l]];

            const long long y = cells_[j].fatalities;
            lik += truncated_poisson_logpmf_log_rate(y, eta);
            const double g = truncated_poisson_score(y, eta);

            d_theta += g;
            d_rho += g * log_exposure_[j];
            for (std::size_t k = 0; k < K; ++k) {
                if (mp[k] == npos) {
                    grad[layout_.reference] += g;
                } else {
                    grad[mp[k]] += g * s.main[k];
                    main_acc[k] += g * x[mp[k]];
                }
            }
            for (std::size_t l = 0; l < L; ++l) {
                grad[ip[l]] += g * s.inter[l];
                inter_acc[l] += g * x[ip[l]];
            }
            grad[cp] += g * s.cell;
            cell_acc += g * x[cp];
        }

        grad[layout_.grand_mean] += d_theta;
        if (layout_.offset_coef != npos) grad[layout_.offset_coef] += d_rho;

        // chain rule through log sigma_k = loc + a*tau + b*ss*eta_k, ss = exp(u)
        for (std::size_t k = 0; k < K; ++k) {
            double d_log_sigma = s.main[k] * main_acc[k];
            double eta_k = x[layout_.eta_main.offset + k];
            grad[layout_.tau_main] += spec_.main_tau_scale * d_log_sigma;
            grad[layout_.eta_main.offset + k] += spec_.main_eta_scale * s.sigma_sigma_main * d_log_sigma;
            grad[layout_.log_sigma_sigma_main] += spec_.main_eta_scale * s.sigma_sigma_main * eta_k * d_log_sigma;
        }
        for (std::size_t l = 0; l < L; ++l) {
            double d_log_sigma = s.inter[l] * inter_acc[l];
            double eta_l = x[layout_.eta_inter.offset + l];
            grad[layout_.tau_inter] += spec_.inter_tau_scale * d_log_sigma;
            grad[layout_.eta_inter.offset + l] += spec_.inter_eta_scale * s.sigma_sigma_inter * d_log_sigma;
            grad[layout_.log_sigma_sigma_inter] += spec_.inter_eta_scale * s.sigma_sigma_inter * eta_l * d_log_sigma;
        }
        grad[layout_.log_sigma_cell] += s.cell * cell_acc;

        // priors
        double lp = log_prior(x);
        const double gm_var = spec_.grand_mean_scale * spec_.grand_mean_scale;
        grad[layout_.grand_mean] -= (theta - spec_.grand_mean_loc) / gm_var;
        if (layout_.offset_coef != npos)
            grad[layout_.offset_coef] -= x[layout_.offset_coef] / (spec_.offset_scale * spec_.offset_scale);
        if (layout_.reference != npos)
            grad[layout_.reference] -= x[layout_.reference] / (spec_.reference->scale * spec_.reference->scale);
        auto std_normal = [&](Slice sl) {
            for (std::size_t i = 0; i < sl.size; ++i) grad[sl.offset + i] -= x[sl.offset + i];
        };
        for (const auto& sl : layout_.main) std_normal(sl);
        for (const auto& sl : layout_.inter) std_normal(sl);
        std_normal(layout_.cells);
        std_normal(layout_.eta_main);
        std_normal(layout_.eta_inter);
        grad[layout_.tau_main] -= x[layout_.tau_main];
        grad[layout_.tau_inter] -= x[layout_.tau_inter];
        for (std::size_t at : {layout_.log_sigma_sigma_main, layout_.log_sigma_sigma_inter, layout_.log_sigma_cell})
            grad[at] += 1.0 - std::exp(2.0 * x[at]);

        return lik + lp;
    }

    // All coefficient batches, in ANOVA display order.
    std::vector<Batch> batches() const {
        std::vector<Batch> out;
        for (std::size_t k = 0; k < spec_.schema.size(); ++k)
            out.push_back({BatchKind::main, k, spec_.schema.groups[k].code});
        for (std::size_t l = 0; l < spec_.schema.interactions.size(); ++l)
            out.push_back({BatchKind::interaction, l, spec_.schema.interaction_name(l)});
        out.push_back({BatchKind::cell, 0, "cell"});
        return out;
    }

    // Realized coefficients of a batch (sigma * eta, reference level as stored).
    std::vector<double> realized_coefficients(const Eigen::VectorXd& x, const Batch& b) const {
        Scales s = scales(x);
        std::vector<double> out;
        switch (b.kind) {
        case BatchKind::main:
            for (std::size_t lev = 1; lev <= spec_.schema.groups[b.index].cardinality(); ++lev)
                out.push_back(main_effect(layout_, s, x, b.index, static_cast<int>(lev)));
            break;
        case BatchKind::interaction:
            for (std::size_t i = 0; i < layout_.inter[b.index].size; ++i)
                out.push_back(s.inter[b.index] * x[layout_.inter[b.index].offset + i]);
            break;
        case BatchKind::cell:
            for (std::size_t j = 0; j < layout_.cells.size; ++j) out.push_back(s.cell * x[layout_.cells.offset + j]);
            break;
        }
        return out;
    }

    // Superpopulation SD of a batch.
    double batch_scale(const Eigen::VectorXd& x, const Batch& b) const {
        Scales s = scales(x);
        switch (b.kind) {
        case BatchKind::main: return s.main[b.index];
        case BatchKind::interaction: return s.inter[b.index];
        case BatchKind::cell: return s.cell;
        }
        return math::nan;
    }

private:
    ModelSpec spec_;
    std::vector<TypeCell> cells_;
    ParameterLayout layout_;
    std::vector<std::size_t> main_pos_;
    std::vector<std::size_t> inter_pos_;
    std::vector<double> log_exposure_;
};

}  // namespace rtm::model
