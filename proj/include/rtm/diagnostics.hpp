#pragma once

// Convergence diagnostics: split-chain R-hat and autocorrelation-based ESS.

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "rtm/error.hpp"
#include "rtm/math.hpp"

namespace rtm::sampler {

// A diagnostic value plus a flag for degenerate input (constant chains).
struct DiagnosticValue {
    double value = math::nan;
    bool degenerate = false;
};

using ChainSeries = std::vector<std::vector<double>>;

// Split-chain potential scale reduction. Each chain is halved (the middle
// draw of an odd-length chain is dropped) and the classic between/within
// variance ratio is taken over the 2M half chains.
inline DiagnosticValue split_rhat(const ChainSeries& chains) {
    if (chains.size() < 2) throw DomainError("split R-hat needs at least 2 chains");
    std::size_t n_min = chains.front().size();
    for (const auto& c : chains) n_min = std::min(n_min, c.size());
    if (n_min < 4) throw DomainError("split R-hat needs at least 4 draws per chain");

    const std::size_t half = n_min / 2;
    std::vector<double> means, vars;
    for (const auto& c : chains) {
        std::span<const double> all(c.data(), n_min);
        for (auto part : {all.first(half), all.last(half)}) {
            means.push_back(math::mean(part));
            vars.push_back(math::sample_variance(part));
        }
    }
    const double n = static_cast<double>(half);
    const double w = math::mean(vars);
    const double b = n * math::sample_variance(means);
    if (w <= 0.0) {
        if (b > 0.0) return {math::inf, true};
        return {math::nan, true};
    }
    const double var_plus = (n - 1.0) / n * w + b / n;
    return {std::sqrt(var_plus / w), false};
}

namespace detail {

// Biased (1/n) autocovariance at one lag.
inline double autocovariance(std::span<const double> x, double mean, std::size_t lag) {
    double s = 0.0;
    for (std::size_t i = 0; i + lag < x.size(); ++i) s += (x[i] - mean) * (x[i + lag] - mean);
    return s / static_cast<double>(x.size());
}

}  // namespace detail

// Multi-chain effective sample size with Geyer's initial positive and
// initial monotone sequence truncation. Autocovariances are evaluated lag by
// lag and only as far as the truncation rule needs.
inline DiagnosticValue effective_sample_size(const ChainSeries& chains) {
    if (chains.empty()) throw DomainError("effective sample size needs at least one chain");
    std::size_t n = chains.front().size();
    for (const auto& c : chains) n = std::min(n, c.size());
    if (n < 4) throw DomainError("effective sample size needs at least 4 draws per chain");
    const std::size_t m = chains.size();

    std::vector<double> chain_mean(m), chain_var(m);
    for (std::size_t c = 0; c < m; ++c) {
        std::span<const double> x(chains[c].data(), n);
        chain_mean[c] = math::mean(x);
        chain_var[c] = detail::autocovariance(x, chain_mean[c], 0) * static_cast<double>(n) / (n - 1.0);
    }
    const double mean_var = math::mean(chain_var);
    double var_plus = mean_var * (n - 1.0) / static_cast<double>(n);
    if (m > 1) var_plus += math::sample_variance(chain_mean);
    if (!(var_plus > 0.0)) return {0.0, true};

    auto rho_at = [&](std::size_t lag) {
        double acov = 0.0;
        for (std::size_t c = 0; c < m; ++c)
            acov += detail::autocovariance(std::span<const double>(chains[c].data(), n), chain_mean[c], lag);
        acov /= static_cast<double>(m);
        return 1.0 - (mean_var - acov) / var_plus;
    };

    std::vector<double> rho(n, 0.0);
    rho[0] = 1.0;
    double rho_even = 1.0;
    double rho_odd = rho_at(1);
    rho[1] = rho_odd;
    std::size_t t = 1;
    while (t < n - 5 && rho_even + rho_odd > 0.0) {
        rho_even = rho_at(t + 1);
        rho_odd = rho_at(t + 2);
        if (rho_even + rho_odd >= 0.0) {
            rho[t + 1] = rho_even;
            rho[t + 2] = rho_odd;
        }
        t += 2;
    }
    const std::size_t max_t = t;
    if (rho_even > 0.0 && max_t + 1 < n) rho[max_t + 1] = rho_even;

    // initial monotone sequence
    for (std::size_t s = 1; s + 4 <= max_t; s += 2) {
        if (rho[s + 1] + rho[s + 2] > rho[s - 1] + rho[s]) {
            rho[s + 1] = 0.5 * (rho[s - 1] + rho[s]);
            rho[s + 2] = rho[s + 1];
        }
    }

    const double total = static_cast<double>(n * m);
    double tau = -1.0;
    for (std::size_t s = 0; s <= max_t && s < n; ++s) tau += 2.0 * rho[s];
    if (max_t + 1 < n) tau += rho[max_t + 1];
    tau = std::max(tau, 1.0 / std::log10(total));
    return {total / tau, false};
}

}  // namespace rtm::sampler
