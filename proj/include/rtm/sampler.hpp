#pragma once

// No-U-turn Hamiltonian Monte Carlo with a diagonal metric.
//
// Trajectories grow by doubling in a random direction and stop when the
// generalized no-U-turn criterion fails anywhere across or between subtrees.
// States are drawn from the trajectory by multinomial (biased progressive)
// sampling. Warmup tunes the step size by dual averaging toward a target
// acceptance statistic and estimates the diagonal inverse metric in doubling
// windows; both are frozen once warmup ends.

#include <cmath>
#include <concepts>
#include <cstdint>
#include <exception>
#include <functional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Core>

#include "rtm/diagnostics.hpp"
#include "rtm/error.hpp"
#include "rtm/math.hpp"

namespace rtm::sampler {

struct SamplerConfig {
    std::size_t chains = 4;
    std::size_t iterations = 2000;  // per chain, warmup included
    std::size_t warmup = 1000;
    double target_accept = 0.8;
    int max_depth = 10;
    double max_energy_error = 1000.0;
    std::uint64_t seed = 20170101;
    std::size_t thin = 1;
    double init_radius = 2.0;
    int init_retries = 100;
    bool parallel = true;

    std::size_t retained_per_chain() const { return (iterations - warmup + thin - 1) / thin; }

    void validate() const {
        if (chains < 1) throw ConfigError("sampler needs at least one chain");
        if (warmup >= iterations) throw ConfigError("no retained draws: warmup must be below iterations");
        if (!(target_accept > 0.0 && target_accept < 1.0)) throw ConfigError("target acceptance must lie in (0, 1)");
        if (max_depth < 1) throw ConfigError("max tree depth must be at least 1");
        if (thin < 1) throw ConfigError("thinning interval must be at least 1");
    }
};

template <class T>
concept DifferentiableDensity = requires(const T& t, const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    { t.log_density_gradient(x, g) } -> std::convertible_to<double>;
    { t.dimension() } -> std::convertible_to<std::size_t>;
};

struct ChainStats {
    std::uint64_t seed = 0;
    double step_size = 0.0;
    double mean_accept = 0.0;
    std::size_t divergences = 0;
    std::size_t max_depth_hits = 0;
    std::size_t leapfrog_steps = 0;
    std::vector<double> inverse_metric;
};

// Retained draws, one (draws x dimension) matrix per chain.
struct PosteriorDraws {
    std::vector<Eigen::MatrixXd> chains;
    std::vector<std::string> names;

    std::size_t chain_count() const { return chains.size(); }
    std::size_t draws_per_chain() const { return chains.empty() ? 0 : static_cast<std::size_t>(chains.front().rows()); }
    std::size_t dimension() const { return chains.empty() ? 0 : static_cast<std::size_t>(chains.front().cols()); }
    std::size_t total() const { return chain_count() * draws_per_chain(); }

    // Draw s of the chain-ordered concatenation.
    Eigen::VectorXd draw(std::size_t s) const {
        std::size_t per = draws_per_chain();
        return chains[s / per].row(static_cast<Eigen::Index>(s % per)).transpose();
    }

    ChainSeries parameter(std::size_t i) const {
        ChainSeries out;
        for (const auto& c : chains) {
            auto col = c.col(static_cast<Eigen::Index>(i));
            out.emplace_back(col.data(), col.data() + col.size());
        }
        return out;
    }
};

struct Diagnostics {
    std::vector<double> rhat;
    std::vector<double> ess;
    std::vector<ChainStats> chains;

    std::size_t divergences() const {
        std::size_t d = 0;
        for (const auto& c : chains) d += c.divergences;
        return d;
    }
    double max_rhat() const {
        double r = 1.0;
        for (double v : rhat)
            if (std::isfinite(v)) r = std::max(r, v);
        return r;
    }
    double min_ess() const {
        double e = math::inf;
        for (double v : ess) e = std::min(e, v);
        return e;
    }
};

struct SamplerRun {
    PosteriorDraws draws;
    Diagnostics diagnostics;
};

using Rng = std::mt19937_64;
using InitStrategy = std::function<Eigen::VectorXd(Rng&, std::size_t)>;
// Called once per retained draw from the chain's own thread.
using DrawObserver = std::function<void(std::size_t chain, const Eigen::VectorXd&)>;

// Seed-splitting rule shared by chains and replications.
inline std::uint64_t derived_seed(std::uint64_t base, std::size_t index) { return base + index; }

namespace detail {

struct PhasePoint {
    Eigen::VectorXd q, p, g;
    double logp = 0.0;
};

// Dual averaging of log step size.
class StepSizeAdapter {
public:
    void restart(double step) {
        mu_ = std::log(10.0 * step);
        counter_ = 0;
        s_bar_ = 0.0;
        x_bar_ = 0.0;
    }
    double learn(double accept, double delta) {
        ++counter_;
        accept = std::min(1.0, accept);
        const double n = static_cast<double>(counter_);
        const double eta = 1.0 / (n + t0_);
        s_bar_ = (1.0 - eta) * s_bar_ + eta * (delta - accept);
        const double x = mu_ - s_bar_ * std::sqrt(n) / gamma_;
        const double x_eta = std::pow(n, -kappa_);
        x_bar_ = (1.0 - x_eta) * x_bar_ + x_eta * x;
        return std::exp(x);
    }
    double final_step() const { return std::exp(x_bar_); }

private:
    double mu_ = 0.0, s_bar_ = 0.0, x_bar_ = 0.0;
    std::size_t counter_ = 0;
    static constexpr double gamma_ = 0.05, t0_ = 10.0, kappa_ = 0.75;
};

// Windowed variance estimation over warmup: an initial fast buffer, doubling
// slow windows, and a terminal fast buffer.
class MetricAdapter {
public:
    MetricAdapter(std::size_t warmup, std::size_t dim) : warmup_(warmup), mean_(Eigen::VectorXd::Zero(dim)),
                                                         m2_(Eigen::VectorXd::Zero(dim)) {
        if (warmup < 20) {
            enabled_ = false;
            return;
        }
        if (init_buffer_ + term_buffer_ + base_window_ > warmup) {
            init_buffer_ = static_cast<std::size_t>(0.15 * warmup);
            term_buffer_ = static_cast<std::size_t>(0.1 * warmup);
            base_window_ = warmup - (init_buffer_ + term_buffer_);
        }
        window_size_ = base_window_;
        next_window_ = init_buffer_ + window_size_ - 1;
    }

    // Feeds one warmup position; returns true when a new metric was produced.
    bool learn(Eigen::VectorXd& inv_metric, const Eigen::VectorXd& q) {
        if (!enabled_) {
            ++counter_;
            return false;
        }
        if (in_window()) add(q);
        if (end_of_window()) {
            next_window();
            const double n = static_cast<double>(count_);
            Eigen::VectorXd var = m2_ / (n - 1.0);
            inv_metric = (n / (n + 5.0)) * var.array() + 1e-3 * (5.0 / (n + 5.0));
            count_ = 0;
            mean_.setZero();
            m2_.setZero();
            ++counter_;
            return true;
        }
        ++counter_;
        return false;
    }

private:
    bool in_window() const {
        return counter_ >= init_buffer_ && counter_ < warmup_ - term_buffer_ && counter_ != warmup_;
    }
    bool end_of_window() const { return counter_ == next_window_ && counter_ != warmup_; }
    void next_window() {
        if (next_window_ == warmup_ - term_buffer_ - 1) return;
        window_size_ *= 2;
        next_window_ = counter_ + window_size_;
        if (next_window_ != warmup_ - term_buffer_ - 1) {
            std::size_t boundary = next_window_ + 2 * window_size_;
            if (boundary >= warmup_ - term_buffer_) next_window_ = warmup_ - term_buffer_ - 1;
        }
    }
    void add(const Eigen::VectorXd& q) {
        ++count_;
        Eigen::VectorXd delta = q - mean_;
        mean_ += delta / static_cast<double>(count_);
        m2_ += delta.cwiseProduct(q - mean_);
    }

    bool enabled_ = true;
    std::size_t warmup_;
    std::size_t init_buffer_ = 75, term_buffer_ = 50, base_window_ = 25;
    std::size_t window_size_ = 0, next_window_ = 0, counter_ = 0;
    std::size_t count_ = 0;
    Eigen::VectorXd mean_, m2_;
};

struct TransitionInfo {
    double accept = 0.0;
    int depth = 0;
    std::size_t leapfrogs = 0;
    bool divergent = false;
};

template <DifferentiableDensity Target>
class Nuts {
public:
    Nuts(const Target& target, const SamplerConfig& config, Rng& rng)
        : target_(target), config_(config), rng_(rng), dim_(target.dimension()),
          inv_metric_(Eigen::VectorXd::Ones(static_cast<Eigen::Index>(dim_))) {}

    void set_position(const Eigen::VectorXd& q) {
        z_.q = q;
        z_.p = Eigen::VectorXd::Zero(q.size());
        z_.g.resize(q.size());
        z_.logp = target_.log_density_gradient(z_.q, z_.g);
    }
    const PhasePoint& state() const { return z_; }
    double step_size() const { return step_; }
    void set_step_size(double e) { step_ = e; }
    Eigen::VectorXd& inverse_metric() { return inv_metric_; }

    // Step-size heuristic: double or halve until the one-step acceptance
    // crosses 0.8.
    void init_step_size() {
        const PhasePoint start = z_;
        auto one_step_delta = [&] {
            z_ = start;
            sample_momentum(z_);
            double h0 = hamiltonian(z_);
            leapfrog(z_, step_);
            double h = hamiltonian(z_);
            if (std::isnan(h)) h = math::inf;
            return h0 - h;
        };
        const double log_08 = std::log(0.8);
        double delta = one_step_delta();
        const int direction = delta > log_08 ? 1 : -1;
        for (int guard = 0; guard < 200; ++guard) {
            delta = one_step_delta();
            if (direction == 1 && !(delta > log_08)) break;
            if (direction == -1 && !(delta < log_08)) break;
            step_ = direction == 1 ? 2.0 * step_ : 0.5 * step_;
            if (step_ > 1e7) throw NumericalError("step size diverged to infinity during initialization");
            if (step_ == 0.0) throw NumericalError("step size collapsed to zero during initialization");
        }
        z_ = start;
    }

    TransitionInfo transition() {
        TransitionInfo info;
        sample_momentum(z_);
        const double h0 = hamiltonian(z_);

        PhasePoint z_fwd = z_, z_bck = z_, z_sample = z_, z_propose = z_;
        Eigen::VectorXd p_sharp = inv_metric_.cwiseProduct(z_.p);
        Eigen::VectorXd p_sharp_fwd_bck = p_sharp, p_sharp_fwd_fwd = p_sharp;
        Eigen::VectorXd p_sharp_bck_fwd = p_sharp, p_sharp_bck_bck = p_sharp;
        Eigen::VectorXd p_fwd_bck = z_.p, p_fwd_fwd = z_.p, p_bck_fwd = z_.p, p_bck_bck = z_.p;
        Eigen::VectorXd rho = z_.p;
        double log_sum_weight = 0.0;
        double sum_metro = 0.0;
        std::uniform_real_distribution<double> unif(0.0, 1.0);

        int depth = 0;
        bool divergent = false;
        while (depth < config_.max_depth) {
            Eigen::VectorXd rho_fwd = Eigen::VectorXd::Zero(rho.size());
            Eigen::VectorXd rho_bck = Eigen::VectorXd::Zero(rho.size());
            bool valid = false;
            double log_sum_weight_subtree = -math::inf;

            if (unif(rng_) > 0.5) {
                z_ = z_fwd;
                rho_bck = rho;
                p_bck_fwd = p_fwd_bck;
                p_sharp_bck_fwd = p_sharp_fwd_bck;
                valid = build_tree(depth, z_propose, p_sharp_fwd_bck, p_sharp_fwd_fwd, rho_fwd, p_fwd_bck,
                                   p_fwd_fwd, h0, 1.0, info.leapfrogs, log_sum_weight_subtree, sum_metro, divergent);
                z_fwd = z_;
            } else {
                z_ = z_bck;
                rho_fwd = rho;
                p_fwd_bck = p_bck_fwd;
                p_sharp_fwd_bck = p_sharp_bck_fwd;
                valid = build_tree(depth, z_propose, p_sharp_bck_fwd, p_sharp_bck_bck, rho_bck, p_bck_fwd,
                                   p_bck_bck, h0, -1.0, info.leapfrogs, log_sum_weight_subtree, sum_metro, divergent);
                z_bck = z_;
            }
            if (!valid) break;
            ++depth;

            if (log_sum_weight_subtree > log_sum_weight) {
                z_sample = z_propose;
            } else if (unif(rng_) < std::exp(log_sum_weight_subtree - log_sum_weight)) {
                z_sample = z_propose;
            }
            log_sum_weight = math::log_sum_exp(log_sum_weight, log_sum_weight_subtree);
            rho = rho_bck + rho_fwd;

            bool persist = no_u_turn(p_sharp_bck_bck, p_sharp_fwd_fwd, rho);
            Eigen::VectorXd rho_ext = rho_bck + p_fwd_bck;
            persist = persist && no_u_turn(p_sharp_bck_bck, p_sharp_fwd_bck, rho_ext);
            rho_ext = rho_fwd + p_bck_fwd;
            persist = persist && no_u_turn(p_sharp_bck_fwd, p_sharp_fwd_fwd, rho_ext);
            if (!persist) break;
        }
        info.depth = depth;
        info.divergent = divergent;
        info.accept = info.leapfrogs > 0 ? sum_metro / static_cast<double>(info.leapfrogs) : 0.0;
        z_ = z_sample;
        return info;
    }

private:
    void sample_momentum(PhasePoint& z) {
        std::normal_distribution<double> normal(0.0, 1.0);
        for (Eigen::Index i = 0; i < z.p.size(); ++i) z.p[i] = normal(rng_) / std::sqrt(inv_metric_[i]);
    }

    double hamiltonian(const PhasePoint& z) const {
        return -z.logp + 0.5 * z.p.cwiseProduct(inv_metric_).dot(z.p);
    }

    void leapfrog(PhasePoint& z, double eps) const {
        z.p += 0.5 * eps * z.g;
        z.q += eps * inv_metric_.cwiseProduct(z.p);
        z.logp = target_.log_density_gradient(z.q, z.g);
        if (!std::isfinite(z.logp) || !z.g.allFinite()) {
            z.logp = -math::inf;
            return;
        }
        z.p += 0.5 * eps * z.g;
    }

    static bool no_u_turn(const Eigen::VectorXd& p_sharp_minus, const Eigen::VectorXd& p_sharp_plus,
                          const Eigen::VectorXd& rho) {
        return p_sharp_plus.dot(rho) > 0.0 && p_sharp_minus.dot(rho) > 0.0;
    }

    bool build_tree(int depth, PhasePoint& z_propose, Eigen::VectorXd& p_sharp_beg, Eigen::VectorXd& p_sharp_end,
                    Eigen::VectorXd& rho, Eigen::VectorXd& p_beg, Eigen::VectorXd& p_end, double h0, double sign,
                    std::size_t& n_leapfrog, double& log_sum_weight, double& sum_metro, bool& divergent) {
        if (depth == 0) {
            leapfrog(z_, sign * step_);
            ++n_leapfrog;
            double h = std::isfinite(z_.logp) ? hamiltonian(z_) : math::inf;
            if (std::isnan(h)) h = math::inf;
            if (h - h0 > config_.max_energy_error) divergent = true;
            log_sum_weight = math::log_sum_exp(log_sum_weight, h0 - h);
            sum_metro += h0 - h > 0.0 ? 1.0 : std::exp(h0 - h);
            z_propose = z_;
            p_sharp_beg = inv_metric_.cwiseProduct(z_.p);
            p_sharp_end = p_sharp_beg;
            rho += z_.p;
            p_beg = z_.p;
            p_end = p_beg;
            return !divergent;
        }

        const auto n = z_.p.size();
        double log_sum_weight_init = -math::inf;
        Eigen::VectorXd p_init_end(n), p_sharp_init_end(n), rho_init = Eigen::VectorXd::Zero(n);
        bool valid_init = build_tree(depth - 1, z_propose, p_sharp_beg, p_sharp_init_end, rho_init, p_beg, p_init_end,
                                     h0, sign, n_leapfrog, log_sum_weight_init, sum_metro, divergent);
        if (!valid_init) return false;

        PhasePoint z_propose_final = z_;
        double log_sum_weight_final = -math::inf;
        Eigen::VectorXd p_final_beg(n), p_sharp_final_beg(n), rho_final = Eigen::VectorXd::Zero(n);
        bool valid_final = build_tree(depth - 1, z_propose_final, p_sharp_final_beg, p_sharp_end, rho_final,
                                      p_final_beg, p_end, h0, sign, n_leapfrog, log_sum_weight_final, sum_metro,
                                      divergent);
        if (!valid_final) return false;

        double log_sum_weight_subtree = math::log_sum_exp(log_sum_weight_init, log_sum_weight_final);
        log_sum_weight = math::log_sum_exp(log_sum_weight, log_sum_weight_subtree);
        if (log_sum_weight_final > log_sum_weight_subtree) {
            z_propose = z_propose_final;
        } else {
            std::uniform_real_distribution<double> unif(0.0, 1.0);
            if (unif(rng_) < std::exp(log_sum_weight_final - log_sum_weight_subtree)) z_propose = z_propose_final;
        }

        Eigen::VectorXd rho_subtree = rho_init + rho_final;
        rho += rho_subtree;
        bool persist = no_u_turn(p_sharp_beg, p_sharp_end, rho_subtree);
        Eigen::VectorXd rho_ext = rho_init + p_final_beg;
        persist = persist && no_u_turn(p_sharp_beg, p_sharp_final_beg, rho_ext);
        rho_ext = rho_final + p_init_end;
        persist = persist && no_u_turn(p_sharp_init_end, p_sharp_end, rho_ext);
        return persist;
    }

    const Target& target_;
    const SamplerConfig& config_;
    Rng& rng_;
    std::size_t dim_;
    Eigen::VectorXd inv_metric_;
    double step_ = 1.0;
    PhasePoint z_;
};

template <DifferentiableDensity Target>
ChainStats run_chain(const Target& target, const SamplerConfig& config, std::size_t chain, const InitStrategy& init,
                     Eigen::MatrixXd& out, const DrawObserver& observer) {
    ChainStats stats;
    stats.seed = derived_seed(config.seed, chain);
    Rng rng(stats.seed);
    const std::size_t dim = target.dimension();

    Eigen::VectorXd q0;
    Eigen::VectorXd g(static_cast<Eigen::Index>(dim));
    bool ok = false;
    for (int attempt = 0; attempt < config.init_retries && !ok; ++attempt) {
        if (init) {
            q0 = init(rng, dim);
        } else {
            std::uniform_real_distribution<double> unif(-config.init_radius, config.init_radius);
            q0.resize(static_cast<Eigen::Index>(dim));
            for (auto& v : q0) v = unif(rng);
        }
        double lp = target.log_density_gradient(q0, g);
        ok = std::isfinite(lp) && g.allFinite();
    }
    if (!ok)
        throw NumericalError("chain " + std::to_string(chain) + ": no finite initial density after " +
                             std::to_string(config.init_retries) + " attempts");

    Nuts<Target> nuts(target, config, rng);
    nuts.set_position(q0);
    nuts.init_step_size();
    StepSizeAdapter step_adapter;
    step_adapter.restart(nuts.step_size());
    MetricAdapter metric_adapter(config.warmup, dim);

    out.resize(static_cast<Eigen::Index>(config.retained_per_chain()), static_cast<Eigen::Index>(dim));
    double accept_sum = 0.0;
    std::size_t kept = 0;
    for (std::size_t it = 0; it < config.iterations; ++it) {
        TransitionInfo info = nuts.transition();
        stats.leapfrog_steps += info.leapfrogs;
        if (it < config.warmup) {
            nuts.set_step_size(step_adapter.learn(info.accept, config.target_accept));
            if (metric_adapter.learn(nuts.inverse_metric(), nuts.state().q)) {
                nuts.init_step_size();
                step_adapter.restart(nuts.step_size());
            }
            if (it + 1 == config.warmup) nuts.set_step_size(step_adapter.final_step());
            continue;
        }
        accept_sum += info.accept;
        if (info.divergent) ++stats.divergences;
        if (info.depth >= config.max_depth) ++stats.max_depth_hits;
        if ((it - config.warmup) % config.thin == 0) {
            out.row(static_cast<Eigen::Index>(kept++)) = nuts.state().q.transpose();
            if (observer) observer(chain, nuts.state().q);
        }
    }
    stats.step_size = nuts.step_size();
    stats.mean_accept = accept_sum / static_cast<double>(config.iterations - config.warmup);
    stats.inverse_metric.assign(nuts.inverse_metric().data(), nuts.inverse_metric().data() + dim);
    return stats;
}

}  // namespace detail

inline Diagnostics compute_diagnostics(const PosteriorDraws& draws) {
    Diagnostics d;
    const std::size_t dim = draws.dimension();
    d.rhat.assign(dim, math::nan);
    d.ess.assign(dim, math::nan);
    if (draws.draws_per_chain() < 4) return d;
    for (std::size_t i = 0; i < dim; ++i) {
        auto series = draws.parameter(i);
        if (series.size() >= 2) d.rhat[i] = split_rhat(series).value;
        d.ess[i] = effective_sample_size(series).value;
    }
    return d;
}

// Runs config.chains independent chains (seeds base + chain index) and
// returns their draws in chain order together with diagnostics.
template <DifferentiableDensity Target>
SamplerRun run_chains(const Target& target, const SamplerConfig& config, const InitStrategy& init = {},
                      const DrawObserver& observer = {}) {
    config.validate();
    SamplerRun run;
    run.draws.chains.resize(config.chains);
    std::vector<ChainStats> stats(config.chains);
    std::vector<std::exception_ptr> errors(config.chains);

    auto work = [&](std::size_t c) {
        try {
            stats[c] = detail::run_chain(target, config, c, init, run.draws.chains[c], observer);
        } catch (...) {
            errors[c] = std::current_exception();
        }
    };
    if (config.parallel && config.chains > 1) {
        std::vector<std::jthread> threads;
        for (std::size_t c = 0; c < config.chains; ++c) threads.emplace_back(work, c);
    } else {
        for (std::size_t c = 0; c < config.chains; ++c) work(c);
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);

    run.diagnostics = compute_diagnostics(run.draws);
    run.diagnostics.chains = std::move(stats);
    return run;
}

}  // namespace rtm::sampler
