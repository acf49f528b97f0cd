#pragma once

// File formats: record and report CSVs, schema and run-config INI files,
// per-chain draw CSVs and count histograms.
//
// Record CSV: one road-period per row. Columns are the group codes of the
// schema, EXPR (or the schema's offset name) and COUNT, plus optional
// SELECTED, PERIOD and ROAD_ID. Category cells hold the original integer
// codes; they are remapped to dense levels on ingestion.
//
// Schema INI:
//
//   [schema]
//   offset = EXPR
//   interactions = all-pairs        ; or none, or SIGN:LGHT, LGHT:COND
//   [groups]
//   SIGN = infer                    ; distinct codes seen in the data, ascending
//   LGHT = 1, 2, 3, 5               ; explicit code list
//   COND = 4                        ; cardinality: codes 1..4

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <boost/algorithm/string.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <boost/tokenizer.hpp>
#include <Eigen/Core>

#include "rtm/core.hpp"
#include "rtm/eb.hpp"
#include "rtm/error.hpp"
#include "rtm/model.hpp"
#include "rtm/sampler.hpp"
#include "rtm/weights.hpp"

namespace rtm::io {

namespace fs = std::filesystem;
using boost::property_tree::ptree;

// ---------------------------------------------------------------------------
// CSV

struct CsvTable {
    std::string source;
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::optional<std::size_t> find(const std::string& name) const {
        auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) return std::nullopt;
        return static_cast<std::size_t>(it - header.begin());
    }

    std::size_t column(const std::string& name) const {
        if (auto c = find(name)) return *c;
        throw DataError(source + ": missing column '" + name + "'");
    }
};

inline std::ifstream open_input(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open input file: " + path.string());
    return in;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    boost::tokenizer<boost::escaped_list_separator<char>> tok(line);
    std::vector<std::string> out;
    for (auto field : tok) {
        boost::algorithm::trim(field);
        out.push_back(std::move(field));
    }
    return out;
}

inline CsvTable parse_csv(std::istream& in, std::string source) {
    CsvTable t;
    t.source = std::move(source);
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (number == 1 && line.starts_with("\xEF\xBB\xBF")) line.erase(0, 3);
        if (boost::algorithm::trim_copy(line).empty()) continue;
        std::vector<std::string> fields;
        try {
            fields = split_csv_line(line);
        } catch (const boost::escaped_list_error& e) {
            throw DataError(t.source + ":" + std::to_string(number) + ": " + e.what());
        }
        if (t.header.empty()) {
            t.header = std::move(fields);
            continue;
        }
        if (fields.size() != t.header.size())
            throw DataError(t.source + ":" + std::to_string(number) + ": expected " +
                            std::to_string(t.header.size()) + " fields, found " + std::to_string(fields.size()));
        t.rows.push_back(std::move(fields));
    }
    if (t.header.empty()) throw DataError(t.source + ": empty CSV file");
    return t;
}

inline CsvTable read_csv(const fs::path& path) {
    auto in = open_input(path);
    return parse_csv(in, path.string());
}

inline std::string format_double(double v) {
    char buf[32];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, end);
}

inline void write_csv(const fs::path& path, const std::vector<std::string>& header,
                      const std::vector<std::vector<std::string>>& rows) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << boost::algorithm::join(header, ",") << '\n';
    for (const auto& r : rows) out << boost::algorithm::join(r, ",") << '\n';
}

inline std::string where(const CsvTable& t, std::size_t row, const std::string& column) {
    return t.source + " row " + std::to_string(row + 2) + " column " + column;
}

inline long long parse_integer(const std::string& s, const std::string& context) {
    long long v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size() || s.empty())
        throw DataError(context + ": expected an integer, found '" + s + "'");
    return v;
}

inline double parse_real(const std::string& s, const std::string& context) {
    double v = 0.0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size() || s.empty())
        throw DataError(context + ": expected a number, found '" + s + "'");
    return v;
}

inline bool parse_flag(const std::string& s, const std::string& context) {
    auto v = boost::algorithm::to_lower_copy(s);
    if (v == "1" || v == "true" || v == "yes") return true;
    if (v == "0" || v == "false" || v == "no" || v.empty()) return false;
    throw DataError(context + ": expected 0/1, found '" + s + "'");
}

// ---------------------------------------------------------------------------
// Schema

struct GroupDecl {
    std::string code;
    std::optional<std::vector<long>> codes;  // nullopt: infer from data
};

struct SchemaDecl {
    enum class Interactions { all_pairs, none, listed };

    std::vector<GroupDecl> groups;
    Interactions interactions = Interactions::all_pairs;
    std::vector<std::pair<std::string, std::string>> pairs;
    std::string offset = "EXPR";

    bool needs_data() const {
        return std::any_of(groups.begin(), groups.end(), [](const GroupDecl& g) { return !g.codes; });
    }

    // Resolves inferred code lists from the given raw codes per group.
    CovariateSchema resolve(const std::map<std::string, std::set<long>>& observed = {}) const {
        CovariateSchema s;
        s.offset_name = offset;
        for (const auto& g : groups) {
            CovariateGroup out{g.code, {}};
            if (g.codes) {
                out.codes = *g.codes;
            } else {
                auto it = observed.find(g.code);
                if (it == observed.end()) throw ConfigError("group '" + g.code + "' is 'infer' but no data given");
                out.codes.assign(it->second.begin(), it->second.end());
            }
            s.groups.push_back(std::move(out));
        }
        switch (interactions) {
        case Interactions::all_pairs: s.interactions = CovariateSchema::all_pairs(s.size()); break;
        case Interactions::none: break;
        case Interactions::listed:
            for (const auto& [a, b] : pairs) {
                auto i = s.group_index(a), j = s.group_index(b);
                s.interactions.emplace_back(std::min(i, j), std::max(i, j));
            }
            break;
        }
        s.validate();
        return s;
    }
};

inline std::vector<long> parse_code_list(const std::string& value, const std::string& group) {
    std::vector<std::string> parts;
    boost::algorithm::split(parts, value, boost::is_any_of(","));
    std::vector<long> codes;
    for (auto& p : parts) {
        boost::algorithm::trim(p);
        try {
            codes.push_back(static_cast<long>(parse_integer(p, "group " + group)));
        } catch (const DataError& e) {
            throw ConfigError(e.what());
        }
    }
    if (codes.size() == 1) {
        // a single number is a cardinality
        long n = codes.front();
        if (n < 2) throw ConfigError("group '" + group + "' needs at least 2 levels");
        codes.clear();
        for (long i = 1; i <= n; ++i) codes.push_back(i);
    }
    return codes;
}

inline SchemaDecl parse_schema(const ptree& tree) {
    SchemaDecl d;
    auto groups = tree.get_child_optional("groups");
    if (!groups || groups->empty()) throw ConfigError("schema has no [groups] section");
    for (const auto& [key, node] : *groups) {
        auto value = boost::algorithm::trim_copy(node.data());
        GroupDecl g{key, std::nullopt};
        if (boost::algorithm::to_lower_copy(value) != "infer") g.codes = parse_code_list(value, key);
        d.groups.push_back(std::move(g));
    }
    d.offset = tree.get<std::string>("schema.offset", "EXPR");
    auto inter = boost::algorithm::trim_copy(tree.get<std::string>("schema.interactions", "all-pairs"));
    auto lower = boost::algorithm::to_lower_copy(inter);
    if (lower == "all-pairs") {
        d.interactions = SchemaDecl::Interactions::all_pairs;
    } else if (lower == "none" || lower.empty()) {
        d.interactions = SchemaDecl::Interactions::none;
    } else {
        d.interactions = SchemaDecl::Interactions::listed;
        std::vector<std::string> items;
        boost::algorithm::split(items, inter, boost::is_any_of(","));
        for (auto& item : items) {
            boost::algorithm::trim(item);
            auto colon = item.find(':');
            if (colon == std::string::npos) throw ConfigError("interaction '" + item + "' must be written A:B");
            d.pairs.emplace_back(item.substr(0, colon), item.substr(colon + 1));
        }
    }
    return d;
}

// Fallback when the key is absent; a present but malformed value is an error.
template <class T>
T get_strict(const ptree& tree, const std::string& key, T fallback) {
    auto raw = tree.get_optional<std::string>(key);
    if (!raw) return fallback;
    try {
        return tree.get<T>(key);
    } catch (const boost::property_tree::ptree_bad_data&) {
        throw ConfigError("config key '" + key + "' has an invalid value '" + *raw + "'");
    }
}

inline ptree read_ini(const fs::path& path) {
    if (!fs::exists(path)) throw ConfigError("config file not found: " + path.string());
    ptree tree;
    try {
        boost::property_tree::read_ini(path.string(), tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
        throw ConfigError(e.what());
    }
    return tree;
}

inline SchemaDecl read_schema_file(const fs::path& path) { return parse_schema(read_ini(path)); }

inline void put_schema(ptree& tree, const CovariateSchema& s) {
    tree.put("schema.offset", s.offset_name);
    std::vector<std::string> pairs;
    for (std::size_t l = 0; l < s.interactions.size(); ++l) pairs.push_back(s.interaction_name(l));
    bool all = s.interactions == CovariateSchema::all_pairs(s.size());
    tree.put("schema.interactions", all ? "all-pairs" : pairs.empty() ? "none" : boost::algorithm::join(pairs, ", "));
    ptree groups;
    for (const auto& g : s.groups) {
        std::vector<std::string> codes;
        for (long c : g.codes) codes.push_back(std::to_string(c));
        groups.put(ptree::path_type(g.code, '\0'), boost::algorithm::join(codes, ", "));
    }
    tree.put_child("groups", groups);
}

// ---------------------------------------------------------------------------
// Model spec: schema sections plus [model]

inline model::ModelSpec model_spec_from(const ptree& tree, CovariateSchema schema) {
    auto spec = model::ModelSpec::with_defaults(std::move(schema));
    auto m = tree.get_child_optional("model");
    if (!m) return spec;
    spec.grand_mean_loc = get_strict(*m, "grand_mean_loc", spec.grand_mean_loc);
    spec.grand_mean_scale = get_strict(*m, "grand_mean_scale", spec.grand_mean_scale);
    spec.offset_scale = get_strict(*m, "offset_scale", spec.offset_scale);
    spec.pin_offset = get_strict(*m, "pin_offset", spec.pin_offset);
    spec.main_loc = get_strict(*m, "main_loc", spec.main_loc);
    spec.main_tau_scale = get_strict(*m, "main_tau_scale", spec.main_tau_scale);
    spec.main_eta_scale = get_strict(*m, "main_eta_scale", spec.main_eta_scale);
    spec.inter_loc = get_strict(*m, "inter_loc", spec.inter_loc);
    spec.inter_tau_scale = get_strict(*m, "inter_tau_scale", spec.inter_tau_scale);
    spec.inter_eta_scale = get_strict(*m, "inter_eta_scale", spec.inter_eta_scale);
    spec.cell_scale = get_strict(*m, "cell_scale", spec.cell_scale);
    auto ref = get_strict<std::string>(*m, "reference_group", "");
    if (boost::algorithm::to_lower_copy(ref) == "none") {
        spec.reference.reset();
    } else if (!ref.empty()) {
        auto k = spec.schema.group_index(ref);
        const auto& g = spec.schema.groups[k];
        long code = get_strict<long>(*m, "reference_code", g.codes.back());
        auto level = g.level_of(code);
        if (!level) throw ConfigError("reference_code " + std::to_string(code) + " is not a code of " + ref);
        spec.reference = model::ReferenceLevel{k, *level, get_strict(*m, "reference_scale", 2.0)};
    }
    spec.validate();
    return spec;
}

inline void write_model_spec(const fs::path& path, const model::ModelSpec& spec) {
    ptree tree;
    put_schema(tree, spec.schema);
    tree.put("model.grand_mean_loc", spec.grand_mean_loc);
    tree.put("model.grand_mean_scale", spec.grand_mean_scale);
    tree.put("model.offset_scale", spec.offset_scale);
    tree.put("model.pin_offset", spec.pin_offset);
    tree.put("model.main_loc", spec.main_loc);
    tree.put("model.main_tau_scale", spec.main_tau_scale);
    tree.put("model.main_eta_scale", spec.main_eta_scale);
    tree.put("model.inter_loc", spec.inter_loc);
    tree.put("model.inter_tau_scale", spec.inter_tau_scale);
    tree.put("model.inter_eta_scale", spec.inter_eta_scale);
    tree.put("model.cell_scale", spec.cell_scale);
    if (spec.reference) {
        const auto& g = spec.schema.groups[spec.reference->group];
        tree.put("model.reference_group", g.code);
        tree.put("model.reference_code", g.code_of(spec.reference->level));
        tree.put("model.reference_scale", spec.reference->scale);
    } else {
        tree.put("model.reference_group", "none");
    }
    boost::property_tree::write_ini(path.string(), tree);
}

inline model::ModelSpec read_model_spec(const fs::path& path) {
    auto tree = read_ini(path);
    auto decl = parse_schema(tree);
    if (decl.needs_data()) throw ConfigError(path.string() + ": model spec must list every group's codes");
    return model_spec_from(tree, decl.resolve());
}

// ---------------------------------------------------------------------------
// Records

struct Dataset {
    CovariateSchema schema;
    std::vector<RoadRecord> records;
};

inline Dataset parse_records(const CsvTable& t, const SchemaDecl& decl) {
    std::vector<std::size_t> group_col;
    for (const auto& g : decl.groups) group_col.push_back(t.column(g.code));
    auto expr_col = t.column(decl.offset);
    auto count_col = t.column("COUNT");
    auto sel_col = t.find("SELECTED");
    auto period_col = t.find("PERIOD");
    auto id_col = t.find("ROAD_ID");

    std::vector<std::vector<long>> raw(t.rows.size(), std::vector<long>(decl.groups.size()));
    std::map<std::string, std::set<long>> observed;
    for (std::size_t i = 0; i < t.rows.size(); ++i)
        for (std::size_t k = 0; k < decl.groups.size(); ++k) {
            const auto& code = decl.groups[k].code;
            raw[i][k] = static_cast<long>(parse_integer(t.rows[i][group_col[k]], where(t, i, code)));
            observed[code].insert(raw[i][k]);
        }

    Dataset d;
    d.schema = decl.resolve(observed);
    d.records.reserve(t.rows.size());
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        const auto& row = t.rows[i];
        RoadRecord r;
        r.road_id = id_col ? row[*id_col] : "row" + std::to_string(i + 2);
        for (std::size_t k = 0; k < decl.groups.size(); ++k) {
            auto level = d.schema.groups[k].level_of(raw[i][k]);
            if (!level)
                throw DataError(where(t, i, decl.groups[k].code) + ": code " + std::to_string(raw[i][k]) +
                                " is not declared in the schema");
            r.subtype.push_back(*level);
        }
        if (row[expr_col].empty()) throw DataError(where(t, i, decl.offset) + ": missing exposure");
        r.exposure = parse_real(row[expr_col], where(t, i, decl.offset));
        r.fatalities = parse_integer(row[count_col], where(t, i, "COUNT"));
        if (sel_col) r.selected = parse_flag(row[*sel_col], where(t, i, "SELECTED"));
        if (period_col) r.period = row[*period_col];
        validate_record(r, d.schema);
        d.records.push_back(std::move(r));
    }
    return d;
}

inline Dataset read_records(const fs::path& path, const SchemaDecl& decl) { return parse_records(read_csv(path), decl); }

inline void write_records(const fs::path& path, const CovariateSchema& schema, const std::vector<RoadRecord>& records) {
    std::vector<std::string> header{"ROAD_ID"};
    for (const auto& g : schema.groups) header.push_back(g.code);
    for (const char* c : {"EXPR", "COUNT", "SELECTED", "PERIOD"}) header.emplace_back(c);
    header[schema.size() + 1] = schema.offset_name;
    std::vector<std::vector<std::string>> rows;
    for (const auto& r : records) {
        std::vector<std::string> row{r.road_id};
        for (std::size_t k = 0; k < schema.size(); ++k)
            row.push_back(std::to_string(schema.groups[k].code_of(r.subtype[k])));
        row.push_back(format_double(r.exposure));
        row.push_back(std::to_string(r.fatalities));
        row.push_back(r.selected ? "1" : "0");
        row.push_back(r.period);
        rows.push_back(std::move(row));
    }
    write_csv(path, header, rows);
}

// Splits off the records of one period (the held-out year).
inline std::pair<std::vector<RoadRecord>, std::vector<RoadRecord>> split_period(const std::vector<RoadRecord>& records,
                                                                                const std::string& period) {
    std::pair<std::vector<RoadRecord>, std::vector<RoadRecord>> out;
    for (const auto& r : records) (r.period == period ? out.second : out.first).push_back(r);
    return out;
}

// Dense level to original code, one row per (group, level).
inline void write_level_map(const fs::path& path, const CovariateSchema& schema) {
    std::vector<std::vector<std::string>> rows;
    for (const auto& g : schema.groups)
        for (std::size_t l = 1; l <= g.cardinality(); ++l)
            rows.push_back({g.code, std::to_string(l), std::to_string(g.code_of(static_cast<int>(l)))});
    write_csv(path, {"GROUP", "LEVEL", "CODE"}, rows);
}

// Cells with original codes: group columns, COUNT, EXPR, ROADS.
inline void write_cells(const fs::path& path, const CovariateSchema& schema, const std::vector<TypeCell>& cells) {
    std::vector<std::string> header;
    for (const auto& g : schema.groups) header.push_back(g.code);
    for (const char* c : {"COUNT", "EXPR", "ROADS"}) header.emplace_back(c);
    std::vector<std::vector<std::string>> rows;
    for (const auto& c : cells) {
        std::vector<std::string> row;
        for (std::size_t k = 0; k < schema.size(); ++k) row.push_back(std::to_string(schema.groups[k].code_of(c.subtype[k])));
        row.push_back(std::to_string(c.fatalities));
        row.push_back(format_double(c.exposure));
        row.push_back(std::to_string(c.roads));
        rows.push_back(std::move(row));
    }
    write_csv(path, header, rows);
}

inline std::vector<TypeCell> read_cells(const fs::path& path, const CovariateSchema& schema) {
    auto t = read_csv(path);
    std::vector<std::size_t> cols;
    for (const auto& g : schema.groups) cols.push_back(t.column(g.code));
    auto y = t.column("COUNT"), e = t.column("EXPR");
    auto roads = t.find("ROADS");
    std::vector<TypeCell> cells;
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        std::vector<int> subtype;
        for (std::size_t k = 0; k < schema.size(); ++k) {
            auto raw = parse_integer(t.rows[i][cols[k]], where(t, i, schema.groups[k].code));
            auto level = schema.groups[k].level_of(static_cast<long>(raw));
            if (!level) throw DataError(where(t, i, schema.groups[k].code) + ": unknown code " + std::to_string(raw));
            subtype.push_back(*level);
        }
        auto c = make_cell(std::move(subtype), parse_integer(t.rows[i][y], where(t, i, "COUNT")),
                           parse_real(t.rows[i][e], where(t, i, "EXPR")), schema);
        if (roads) c.roads = static_cast<std::size_t>(parse_integer(t.rows[i][*roads], where(t, i, "ROADS")));
        c.id = i;
        cells.push_back(std::move(c));
    }
    return cells;
}

// ---------------------------------------------------------------------------
// Posterior draws: chain_1.csv, chain_2.csv, ... with parameter names as header

inline std::string chain_file(std::size_t c) { return "chain_" + std::to_string(c + 1) + ".csv"; }

inline void write_draws(const fs::path& dir, const sampler::PosteriorDraws& draws) {
    fs::create_directories(dir);
    for (std::size_t c = 0; c < draws.chain_count(); ++c) {
        std::vector<std::vector<std::string>> rows;
        const auto& m = draws.chains[c];
        for (Eigen::Index s = 0; s < m.rows(); ++s) {
            std::vector<std::string> row;
            for (Eigen::Index i = 0; i < m.cols(); ++i) row.push_back(format_double(m(s, i)));
            rows.push_back(std::move(row));
        }
        write_csv(dir / chain_file(c), draws.names, rows);
    }
}

inline sampler::PosteriorDraws read_draws(const fs::path& dir) {
    sampler::PosteriorDraws d;
    for (std::size_t c = 0; fs::exists(dir / chain_file(c)); ++c) {
        auto t = read_csv(dir / chain_file(c));
        if (c == 0) d.names = t.header;
        else if (t.header != d.names) throw DataError(t.source + ": parameter names differ from chain 1");
        Eigen::MatrixXd m(static_cast<Eigen::Index>(t.rows.size()), static_cast<Eigen::Index>(t.header.size()));
        for (std::size_t s = 0; s < t.rows.size(); ++s)
            for (std::size_t i = 0; i < t.header.size(); ++i)
                m(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(i)) =
                    parse_real(t.rows[s][i], where(t, s, t.header[i]));
        if (c > 0 && m.rows() != d.chains.front().rows()) throw DataError(t.source + ": chain lengths differ");
        d.chains.push_back(std::move(m));
    }
    if (d.chains.empty()) throw DataError("no draws found in " + dir.string() + " (expected chain_1.csv)");
    return d;
}

// ---------------------------------------------------------------------------
// Prospective crash reports: subtype columns + FATAL + either W_T or
// P_PSU, P_PJ, P_PAR and MEMBERSHIP_P.

inline std::vector<weights::WeightedReport> read_reports(const fs::path& path, const CovariateSchema& schema) {
    auto t = read_csv(path);
    std::vector<std::size_t> cols;
    for (const auto& g : schema.groups) cols.push_back(t.column(g.code));
    auto fatal = t.column("FATAL");
    auto wt = t.find("W_T");
    auto id = t.find("REPORT_ID");
    std::optional<std::size_t> psu, pj, par, member;
    if (!wt) {
        psu = t.column("P_PSU");
        pj = t.column("P_PJ");
        par = t.column("P_PAR");
        member = t.column("MEMBERSHIP_P");
    }
    std::vector<weights::WeightedReport> out;
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        const auto& row = t.rows[i];
        weights::WeightedReport r;
        r.report_id = id ? row[*id] : "row" + std::to_string(i + 2);
        for (std::size_t k = 0; k < schema.size(); ++k) {
            auto raw = parse_integer(row[cols[k]], where(t, i, schema.groups[k].code));
            auto level = schema.groups[k].level_of(static_cast<long>(raw));
            if (!level) throw DataError(where(t, i, schema.groups[k].code) + ": unknown code " + std::to_string(raw));
            r.subtype.push_back(*level);
        }
        r.fatal = parse_flag(row[fatal], where(t, i, "FATAL"));
        try {
            if (wt) {
                r.target_weight = parse_real(row[*wt], where(t, i, "W_T"));
                if (!(r.target_weight >= 0.0)) throw DomainError("target weight must be nonnegative");
            } else {
                double w = weights::national_weight(parse_real(row[*psu], where(t, i, "P_PSU")),
                                                    parse_real(row[*pj], where(t, i, "P_PJ")),
                                                    parse_real(row[*par], where(t, i, "P_PAR")));
                r.target_weight = weights::target_weight(w, parse_real(row[*member], where(t, i, "MEMBERSHIP_P")));
            }
        } catch (const DomainError& e) {
            throw DataError(t.source + " row " + std::to_string(i + 2) + ": " + e.what());
        }
        out.push_back(std::move(r));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Count histograms: X, ROADS[, SELECTED]

struct HistogramInput {
    eb::CountHistogram all;
    eb::CountHistogram selected;
    bool has_selected = false;
};

inline HistogramInput read_histogram(const fs::path& path) {
    auto t = read_csv(path);
    auto x = t.column("X"), n = t.column("ROADS");
    auto s = t.find("SELECTED");
    HistogramInput h;
    h.has_selected = s.has_value();
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        auto xv = parse_integer(t.rows[i][x], where(t, i, "X"));
        auto nv = parse_integer(t.rows[i][n], where(t, i, "ROADS"));
        if (xv < 0 || nv < 0) throw DataError(where(t, i, "X") + ": counts must be nonnegative");
        h.all.add(xv, nv);
        if (s) {
            auto sv = parse_integer(t.rows[i][*s], where(t, i, "SELECTED"));
            if (sv < 0) throw DataError(where(t, i, "SELECTED") + ": counts must be nonnegative");
            h.selected.add(xv, sv);
        }
    }
    return h;
}

// ---------------------------------------------------------------------------
// Run configuration: one INI file, sections per module, CLI overrides.

class RunConfig {
public:
    RunConfig() = default;
    explicit RunConfig(ptree tree) : tree_(std::move(tree)) {}

    static RunConfig load(const fs::path& path) { return RunConfig(read_ini(path)); }

    template <class T>
    T get(const std::string& key, T fallback) {
        T v = get_strict(tree_, key, fallback);
        effective_.put(key, v);
        return v;
    }

    std::optional<std::string> text(const std::string& key) {
        auto v = tree_.get_optional<std::string>(key);
        if (v) effective_.put(key, *v);
        return v ? std::optional<std::string>(*v) : std::nullopt;
    }

    template <class T>
    void set(const std::string& key, const T& value) {
        tree_.put(key, value);
    }

    bool has(const std::string& key) const { return tree_.get_optional<std::string>(key).has_value(); }
    const ptree& tree() const { return tree_; }
    // Every value read, with defaults filled in.
    const ptree& effective() const { return effective_; }

private:
    ptree tree_;
    ptree effective_;
};

}  // namespace rtm::io
