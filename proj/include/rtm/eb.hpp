#pragma once

// Robbins' nonparametric empirical Bayes estimate over a count histogram:
//
//   E(mu | X = x) ~= (x + 1) N_{x+1} / N_x
//
// The histogram must cover every road, selected or not.

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "rtm/error.hpp"
#include "rtm/math.hpp"

namespace rtm::eb {

class CountHistogram {
public:
    CountHistogram() = default;
    CountHistogram(std::initializer_list<std::pair<const long long, long long>> init) {
        for (const auto& [x, n] : init) add(x, n);
    }

    void add(long long x, long long n = 1) {
        if (x < 0) throw DataError("negative fatality count in histogram");
        if (n < 0) throw DataError("negative road count in histogram");
        counts_[x] += n;
    }

    long long at(long long x) const {
        auto it = counts_.find(x);
        return it == counts_.end() ? 0 : it->second;
    }

    long long roads() const {
        long long s = 0;
        for (const auto& [x, n] : counts_) s += n;
        return s;
    }

    long long fatalities() const {
        long long s = 0;
        for (const auto& [x, n] : counts_) s += x * n;
        return s;
    }

    // Largest x with N_x > 0, or -1 when empty.
    long long max_count() const {
        for (auto it = counts_.rbegin(); it != counts_.rend(); ++it)
            if (it->second > 0) return it->first;
        return -1;
    }

    const std::map<long long, long long>& counts() const { return counts_; }

    template <class Range>
    static CountHistogram from_counts(const Range& xs) {
        CountHistogram h;
        for (auto x : xs) h.add(static_cast<long long>(x));
        return h;
    }

private:
    std::map<long long, long long> counts_;
};

struct RobbinsEstimate {
    double rate = 0.0;
    bool tail_truncated = false;  // N_{x+1} = 0
};

inline RobbinsEstimate robbins_estimate(const CountHistogram& hist, long long x) {
    if (x < 0) throw DomainError("Robbins estimate needs x >= 0");
    const long long n_x = hist.at(x);
    if (n_x == 0) throw DomainError("Robbins estimate undefined at x = " + std::to_string(x) + ": N_x = 0");
    const long long n_next = hist.at(x + 1);
    return {static_cast<double>(x + 1) * static_cast<double>(n_next) / static_cast<double>(n_x), n_next == 0};
}

struct RobbinsRow {
    long long x = 0;
    long long roads = 0;           // N_x over all roads
    long long selected_roads = 0;  // N_x over selected roads
    double rate = math::nan;       // NaN when unavailable
    bool available = false;
    bool tail_truncated = false;
    double expected = 0.0;         // rate * selected_roads
};

struct RobbinsTable {
    std::vector<RobbinsRow> rows;
    int years = 1;
    double total_expected = 0.0;
    long long selected_observed = 0;  // sum x * selected N_x
    std::vector<std::string> warnings;

    double per_year() const { return total_expected / static_cast<double>(years); }
};

struct RobbinsOptions {
    // Pool-adjacent-violators smoothing of the rate column, weighted by N_x.
    bool isotonic = false;
};

namespace detail {

inline void isotonic_fit(std::vector<RobbinsRow>& rows) {
    struct Block {
        double value, weight;
        std::size_t count;
    };
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < rows.size(); ++i)
        if (rows[i].available && !rows[i].tail_truncated) idx.push_back(i);
    std::vector<Block> blocks;
    for (std::size_t i : idx) {
        blocks.push_back({rows[i].rate, static_cast<double>(rows[i].roads), 1});
        while (blocks.size() > 1 && blocks[blocks.size() - 2].value > blocks.back().value) {
            Block b = blocks.back();
            blocks.pop_back();
            Block& a = blocks.back();
            double w = a.weight + b.weight;
            a.value = (a.value * a.weight + b.value * b.weight) / w;
            a.weight = w;
            a.count += b.count;
        }
    }
    std::size_t at = 0;
    for (const auto& b : blocks)
        for (std::size_t c = 0; c < b.count; ++c) rows[idx[at++]].rate = b.value;
}

}  // namespace detail

// Expected fatalities on selected roads in a follow-up period of the same
// length. Rows run from x = 0 to the largest x held by a selected road (or by
// any road when nothing is selected).
inline RobbinsTable expected_fatalities_selected(const CountHistogram& hist, const CountHistogram& selected,
                                                 int years, RobbinsOptions options = {}) {
    if (years < 1) throw DomainError("period length must be at least one year");
    for (const auto& [x, n] : selected.counts())
        if (n > hist.at(x))
            throw DataError("selected histogram exceeds full histogram at x = " + std::to_string(x));

    RobbinsTable table;
    table.years = years;
    long long top = selected.max_count();
    if (top < 0) top = hist.max_count();
    for (long long x = 0; x <= top; ++x) {
        RobbinsRow row;
        row.x = x;
        row.roads = hist.at(x);
        row.selected_roads = selected.at(x);
        if (row.roads > 0) {
            auto est = robbins_estimate(hist, x);
            row.rate = est.rate;
            row.available = true;
            row.tail_truncated = est.tail_truncated;
            if (est.tail_truncated)
                table.warnings.push_back("tail truncation at x = " + std::to_string(x) + ": N_" +
                                         std::to_string(x + 1) + " = 0, rate reported as 0");
        }
        table.rows.push_back(row);
    }
    if (options.isotonic) detail::isotonic_fit(table.rows);
    for (auto& row : table.rows) {
        row.expected = row.available ? row.rate * static_cast<double>(row.selected_roads) : 0.0;
        table.total_expected += row.expected;
        table.selected_observed += row.x * row.selected_roads;
    }
    return table;
}

}  // namespace rtm::eb
