#pragma once

// Covariate schema, road records and their aggregation into road-type cells.
//
// A road type is the full vector of subtype levels, one per covariate group.
// Levels are dense and 1-based; the schema keeps the original category codes
// (FARS-style integers, usually sparse) so reports can print them back.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "rtm/error.hpp"

namespace rtm {

struct CovariateGroup {
    std::string code;         // four-letter label, e.g. "SLIM"
    std::vector<long> codes;  // original category code of each dense level

    std::size_t cardinality() const { return codes.size(); }

    // Dense 1-based level of an original code, or nullopt when unknown.
    std::optional<int> level_of(long raw) const {
        auto it = std::find(codes.begin(), codes.end(), raw);
        if (it == codes.end()) return std::nullopt;
        return static_cast<int>(it - codes.begin()) + 1;
    }

    long code_of(int level) const { return codes.at(static_cast<std::size_t>(level - 1)); }

    // Group whose codes are simply 1..n.
    static CovariateGroup contiguous(std::string code, std::size_t n) {
        CovariateGroup g{std::move(code), {}};
        for (std::size_t i = 1; i <= n; ++i) g.codes.push_back(static_cast<long>(i));
        return g;
    }
};

using GroupPair = std::pair<std::size_t, std::size_t>;

struct CovariateSchema {
    std::vector<CovariateGroup> groups;
    std::vector<GroupPair> interactions;  // unordered pairs stored as (lower, higher)
    std::string offset_name = "EXPR";

    std::size_t size() const { return groups.size(); }

    std::optional<std::size_t> find_group(const std::string& code) const {
        for (std::size_t k = 0; k < groups.size(); ++k)
            if (groups[k].code == code) return k;
        return std::nullopt;
    }

    std::size_t group_index(const std::string& code) const {
        if (auto k = find_group(code)) return *k;
        throw ConfigError("unknown covariate group '" + code + "'");
    }

    std::size_t interaction_size(std::size_t l) const {
        const auto& [a, b] = interactions.at(l);
        return groups[a].cardinality() * groups[b].cardinality();
    }

    std::string interaction_name(std::size_t l) const {
        const auto& [a, b] = interactions.at(l);
        return groups[a].code + ":" + groups[b].code;
    }

    // Every unordered pair, in (0,1), (0,2), ..., (K-2,K-1) order.
    static std::vector<GroupPair> all_pairs(std::size_t k) {
        std::vector<GroupPair> pairs;
        for (std::size_t a = 0; a < k; ++a)
            for (std::size_t b = a + 1; b < k; ++b) pairs.emplace_back(a, b);
        return pairs;
    }

    void validate() const {
        std::set<std::string> seen;
        for (const auto& g : groups) {
            if (g.code.empty()) throw ConfigError("covariate group with empty code");
            if (!seen.insert(g.code).second) throw ConfigError("duplicate covariate group '" + g.code + "'");
            if (g.cardinality() < 2)
                throw ConfigError("covariate group '" + g.code + "' needs at least 2 levels");
            std::set<long> distinct(g.codes.begin(), g.codes.end());
            if (distinct.size() != g.codes.size())
                throw ConfigError("covariate group '" + g.code + "' repeats a category code");
        }
        std::set<GroupPair> pairs;
        for (const auto& [a, b] : interactions) {
            if (a >= groups.size() || b >= groups.size())
                throw ConfigError("interaction references a missing group");
            if (a == b) throw ConfigError("interaction pairs a group with itself: " + groups[a].code);
            if (!pairs.insert({std::min(a, b), std::max(a, b)}).second)
                throw ConfigError("duplicate interaction " + groups[a].code + ":" + groups[b].code);
        }
    }
};

struct RoadRecord {
    std::string road_id;
    std::vector<int> subtype;  // dense 1-based level per group
    double exposure = 1.0;
    long long fatalities = 0;
    bool selected = false;
    std::string period;
};

struct TypeCell {
    std::size_t id = 0;                    // dense 0-based cell index
    std::vector<int> subtype;              // dense 1-based level per group
    std::vector<int> interaction_levels;   // flattened 1-based level per schema pair
    long long fatalities = 0;              // Y_j
    double exposure = 0.0;                 // summed EXPR
    std::size_t roads = 0;
};

// Row-major flattening of a pair of 1-based levels: (a-1)*J_b + b.
inline int interaction_index(int level_a, int level_b, int card_a, int card_b) {
    if (card_a < 1 || card_b < 1) throw DomainError("interaction cardinality must be positive");
    if (level_a < 1 || level_a > card_a || level_b < 1 || level_b > card_b)
        throw DomainError("interaction level out of range");
    return (level_a - 1) * card_b + level_b;
}

inline void validate_record(const RoadRecord& r, const CovariateSchema& schema) {
    if (r.subtype.size() != schema.size())
        throw DataError("record '" + r.road_id + "' has " + std::to_string(r.subtype.size()) +
                        " subtypes, schema has " + std::to_string(schema.size()));
    for (std::size_t k = 0; k < schema.size(); ++k) {
        int level = r.subtype[k];
        if (level < 1 || static_cast<std::size_t>(level) > schema.groups[k].cardinality())
            throw DataError("record '" + r.road_id + "': level " + std::to_string(level) +
                            " out of range for group " + schema.groups[k].code);
    }
    if (!(r.exposure > 0.0) || !std::isfinite(r.exposure))
        throw DataError("record '" + r.road_id + "': exposure must be positive and finite");
    if (r.fatalities < 0) throw DataError("record '" + r.road_id + "': negative fatality count");
}

inline std::vector<int> interaction_levels(const std::vector<int>& subtype, const CovariateSchema& schema) {
    std::vector<int> out;
    out.reserve(schema.interactions.size());
    for (const auto& [a, b] : schema.interactions)
        out.push_back(interaction_index(subtype[a], subtype[b],
                                        static_cast<int>(schema.groups[a].cardinality()),
                                        static_cast<int>(schema.groups[b].cardinality())));
    return out;
}

inline TypeCell make_cell(std::vector<int> subtype, long long fatalities, double exposure,
                          const CovariateSchema& schema) {
    TypeCell c;
    c.interaction_levels = interaction_levels(subtype, schema);
    c.subtype = std::move(subtype);
    c.fatalities = fatalities;
    c.exposure = exposure;
    c.roads = 1;
    return c;
}

// Sums fatalities and exposure over roads sharing every subtype. Output is
// ordered lexicographically by subtype, so it does not depend on input order.
inline std::vector<TypeCell> aggregate_cells(const std::vector<RoadRecord>& records,
                                             const CovariateSchema& schema) {
    struct Totals {
        long long fatalities = 0;
        std::vector<double> exposures;
    };
    std::map<std::vector<int>, Totals> totals;
    for (const auto& r : records) {
        validate_record(r, schema);
        auto& t = totals[r.subtype];
        t.fatalities += r.fatalities;
        t.exposures.push_back(r.exposure);
    }
    std::vector<TypeCell> cells;
    cells.reserve(totals.size());
    for (auto& [subtype, t] : totals) {
        // sorted summation keeps the total bitwise independent of record order
        std::sort(t.exposures.begin(), t.exposures.end());
        double exposure = 0.0;
        for (double e : t.exposures) exposure += e;
        TypeCell c = make_cell(subtype, t.fatalities, exposure, schema);
        c.id = cells.size();
        c.roads = t.exposures.size();
        cells.push_back(std::move(c));
    }
    return cells;
}

// Lookup from subtype vector to cell position.
inline std::map<std::vector<int>, std::size_t> index_cells(const std::vector<TypeCell>& cells) {
    std::map<std::vector<int>, std::size_t> index;
    for (std::size_t j = 0; j < cells.size(); ++j) index.emplace(cells[j].subtype, j);
    return index;
}

}  // namespace rtm
