// rtm: command-line front end.
//
//   rtm simulate --config sim.ini --out run/sim
//   rtm robbins  --records run/sim/records.csv --selected-only --out run/eb
//   rtm fit      --records data.csv --schema schema.ini --config run.ini --out run/fit
//   rtm reweight --fit run/fit --units data.csv --reports reports.csv --out run/rw
//   rtm report   --fit run/fit --records data.csv --reweight run/rw --out run/report
//   rtm validate --records data.csv --schema schema.ini
//
// Exit codes: 0 ok, 1 internal error, 2 configuration, 3 data, 4 numerical.

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>
#include <openssl/evp.h>
#include <unistd.h>

#include "rtm/analysis.hpp"
#include "rtm/eb.hpp"
#include "rtm/io.hpp"
#include "rtm/pipeline.hpp"
#include "rtm/sampler.hpp"
#include "rtm/sim.hpp"
#include "rtm/weights.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace rtm;

namespace {

constexpr const char* kVersion = "1.0.0";

std::string hex_digest(const std::string& bytes) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
        throw Error("SHA-256 digest failed");
    std::ostringstream out;
    for (unsigned int i = 0; i < len; ++i) out << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
    return out.str();
}

std::string file_digest(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open input file: " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return hex_digest(buf.str());
}

std::string utc_now() {
    auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::ostringstream out;
    out << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return out.str();
}

json summary_json(const math::IntervalSummary& s) {
    return {{"mean", s.mean}, {"q025", s.q025}, {"q05", s.q05}, {"q25", s.q25}, {"q50", s.q50},
            {"q75", s.q75},   {"q95", s.q95},   {"q975", s.q975}, {"n", s.n}};
}

void write_json(const fs::path& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open input file: " + path.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    boost::algorithm::split(out, s, boost::is_any_of(","));
    for (auto& v : out) boost::algorithm::trim(v);
    std::erase_if(out, [](const std::string& v) { return v.empty(); });
    return out;
}

// Common options and state shared by every subcommand.
struct Options {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::vector<std::string> overrides;  // section.key=value
    std::string records, schema, histogram, fit_dir, units, reports, reweight_dir;
    bool selected_only = false;
};

class Run {
public:
    Run(std::string subcommand, const Options& opt) : subcommand_(std::move(subcommand)), opt_(opt) {
        if (!opt.config.empty()) {
            config_ = io::RunConfig::load(opt.config);
            add_input("config", opt.config);
        }
        for (const auto& o : opt.overrides) {
            auto eq = o.find('=');
            if (eq == std::string::npos) throw ConfigError("override '" + o + "' must be section.key=value");
            config_.set(o.substr(0, eq), o.substr(eq + 1));
        }
        if (opt.seed) config_.set("run.seed", *opt.seed);
        seed_ = config_.get<std::uint64_t>("run.seed", 20170101);
        started_ = utc_now();
    }

    io::RunConfig& config() { return config_; }
    std::uint64_t seed() const { return seed_; }
    const Options& options() const { return opt_; }

    fs::path input(const std::string& role, const std::string& path) {
        if (path.empty()) throw ConfigError(subcommand_ + " needs --" + role);
        if (!fs::exists(path)) throw DataError("input file not found: " + path);
        add_input(role, path);
        return path;
    }

    // Paths inside the config file are relative to the file itself.
    std::string config_path(const std::string& p) const {
        fs::path path(p);
        if (path.is_relative() && !opt_.config.empty()) return (fs::path(opt_.config).parent_path() / path).string();
        return p;
    }

    void add_input(const std::string& role, const fs::path& path) {
        if (fs::is_directory(path)) {
            for (const auto& e : fs::directory_iterator(path))
                if (e.is_regular_file()) inputs_[role + "/" + e.path().filename().string()] = file_digest(e.path());
        } else {
            inputs_[role] = file_digest(path);
        }
        paths_[role] = path.string();
    }

    // Staging directory, renamed into place on commit.
    fs::path stage() {
        if (opt_.out.empty()) throw ConfigError(subcommand_ + " needs --out");
        if (!staging_.empty()) return staging_;
        fs::path target = fs::absolute(opt_.out);
        if (fs::exists(target) && !fs::exists(target / "manifest.json"))
            throw ConfigError("output directory " + target.string() + " exists and is not an rtm output");
        fs::create_directories(target.parent_path());
        staging_ = target.parent_path() / ("." + target.filename().string() + ".tmp-" + std::to_string(::getpid()));
        fs::remove_all(staging_);
        fs::create_directories(staging_);
        return staging_;
    }

    void output(const std::string& name) { outputs_.push_back(name); }

    void commit(json extra = json::object()) {
        fs::path target = fs::absolute(opt_.out);
        std::ostringstream ini;
        boost::property_tree::write_ini(ini, config_.effective());
        json m;
        m["subcommand"] = subcommand_;
        m["artifact_version"] = kVersion;
        m["config_hash"] = hex_digest(ini.str());
        m["effective_config"] = ini.str();
        m["seed"] = seed_;
        m["inputs"] = json::object();
        for (const auto& [role, digest] : inputs_) m["inputs"][role] = {{"sha256", digest}};
        m["input_paths"] = paths_;
        m["outputs"] = outputs_;
        m["started"] = started_;
        m["finished"] = utc_now();
        for (auto& [k, v] : extra.items()) m[k] = v;
        write_json(staging_ / "manifest.json", m);
        if (fs::exists(target)) fs::remove_all(target);
        fs::rename(staging_, target);
        staging_.clear();
    }

    ~Run() {
        if (!staging_.empty()) {
            std::error_code ec;
            fs::remove_all(staging_, ec);
        }
    }

private:
    std::string subcommand_;
    Options opt_;
    io::RunConfig config_;
    std::uint64_t seed_ = 0;
    std::string started_;
    fs::path staging_;
    std::map<std::string, std::string> inputs_;
    std::map<std::string, std::string> paths_;
    std::vector<std::string> outputs_;
};

io::SchemaDecl schema_decl(Run& run) {
    const auto& opt = run.options();
    if (opt.schema.empty()) {
        if (auto p = run.config().text("data.schema"))
            return io::read_schema_file(run.input("schema", run.config_path(*p)));
        return {};  // records without covariate columns
    }
    return io::read_schema_file(run.input("schema", opt.schema));
}

io::Dataset load_records(Run& run) {
    auto decl = schema_decl(run);
    std::string path = run.options().records;
    if (path.empty())
        if (auto p = run.config().text("data.records")) path = run.config_path(*p);
    return io::read_records(run.input("records", path), decl);
}

sampler::SamplerConfig sampler_config(Run& run) {
    auto& c = run.config();
    sampler::SamplerConfig s;
    s.chains = c.get<std::size_t>("sampler.chains", s.chains);
    s.iterations = c.get<std::size_t>("sampler.iterations", s.iterations);
    s.warmup = c.get<std::size_t>("sampler.warmup", s.warmup);
    s.thin = c.get<std::size_t>("sampler.thin", s.thin);
    s.target_accept = c.get<double>("sampler.target_accept", s.target_accept);
    s.max_depth = c.get<int>("sampler.max_depth", s.max_depth);
    s.seed = run.seed();
    std::size_t threads = 0;
    if (const char* env = std::getenv("RTM_THREADS")) threads = static_cast<std::size_t>(std::strtoul(env, nullptr, 10));
    threads = c.get<std::size_t>("run.threads", threads);
    s.parallel = threads != 1;
    s.validate();
    return s;
}

// ---------------------------------------------------------------------------
// simulate

sim::CityConfig city_config(Run& run) {
    auto& c = run.config();
    sim::CityConfig city;
    static const std::map<std::string, sim::Population> populations{{"bernoulli", sim::Population::bernoulli},
                                                                    {"point-mass", sim::Population::point_mass},
                                                                    {"gamma", sim::Population::gamma},
                                                                    {"lognormal", sim::Population::lognormal},
                                                                    {"schema", sim::Population::schema}};
    auto pop = c.get<std::string>("simulate.population", "bernoulli");
    if (!populations.contains(pop)) throw ConfigError("unknown population '" + pop + "'");
    city.population = populations.at(pop);
    auto mode = c.get<std::string>("simulate.mode", pop == "bernoulli" ? "bernoulli" : "poisson");
    if (mode != "poisson" && mode != "bernoulli") throw ConfigError("unknown outcome mode '" + mode + "'");
    city.mode = mode == "poisson" ? sim::OutcomeMode::poisson : sim::OutcomeMode::bernoulli;
    city.roads = c.get<std::size_t>("simulate.roads", city.roads);
    city.probability = c.get<double>("simulate.probability", city.probability);
    city.rate = c.get<double>("simulate.rate", city.rate);
    city.gamma_shape = c.get<double>("simulate.gamma_shape", city.gamma_shape);
    city.gamma_rate = c.get<double>("simulate.gamma_rate", city.gamma_rate);
    city.log_mean = c.get<double>("simulate.log_mean", city.log_mean);
    city.log_sd = c.get<double>("simulate.log_sd", city.log_sd);
    city.seed = run.seed();
    if (city.population == sim::Population::schema) {
        auto path = c.text("simulate.schema");
        if (!path) throw ConfigError("schema population needs simulate.schema");
        auto tree = io::read_ini(run.input("schema", run.config_path(*path)));
        auto decl = io::parse_schema(tree);
        if (decl.needs_data()) throw ConfigError("simulated schema must list every group's codes");
        sim::SchemaPopulation p{io::model_spec_from(tree, decl.resolve()), {}, {}, 1e3, 1e5, false};
        if (c.has("simulate.theta")) p.theta = c.get<double>("simulate.theta", 0.0);
        if (c.has("simulate.rho")) p.rho = c.get<double>("simulate.rho", 1.0);
        p.exposure_min = c.get<double>("simulate.exposure_min", p.exposure_min);
        p.exposure_max = c.get<double>("simulate.exposure_max", p.exposure_max);
        p.unique_types = c.get<bool>("simulate.unique_types", false);
        city.schema = std::move(p);
    }
    return city;
}

sim::SelectionPolicy selection_policy(Run& run, const sim::SimCity& city) {
    auto& c = run.config();
    sim::SelectionPolicy p;
    auto rule = c.get<std::string>("simulate.selection", "threshold");
    p.threshold = c.get<long long>("simulate.threshold", 1);
    if (rule == "threshold") {
        p.rule = sim::SelectionRule::threshold;
    } else if (rule == "top-m") {
        p.rule = sim::SelectionRule::top_m;
        p.m = c.get<std::size_t>("simulate.top_m", 0);
    } else if (rule == "eligible-threshold") {
        p.rule = sim::SelectionRule::eligible_threshold;
        if (!city.spec) throw ConfigError("eligibility selection needs a schema population");
        const auto& schema = city.spec->schema;
        auto group = c.get<std::string>("simulate.eligible_group", "");
        p.eligibility.group = schema.group_index(group);
        for (const auto& code : split_list(c.get<std::string>("simulate.eligible_codes", ""))) {
            auto level = schema.groups[p.eligibility.group].level_of(std::stol(code));
            if (!level) throw ConfigError("eligible code " + code + " is not a code of " + group);
            p.eligibility.levels.push_back(*level);
        }
    } else {
        throw ConfigError("unknown selection rule '" + rule + "'");
    }
    return p;
}

int cmd_simulate(Run& run) {
    auto cfg = city_config(run);
    auto city = sim::generate_city(cfg);
    auto policy = selection_policy(run, city);
    sim::TreatmentEffect effect{run.config().get<double>("simulate.multiplier", 1.0)};
    effect.validate();

    auto before = sim::simulate_period(city, {}, {}, run.seed() + 1);
    auto sel = sim::select_roads(before, policy, city.roads);
    auto after = sim::simulate_period(city, effect, sel.flags, run.seed() + 2);
    auto counterfactual = sim::simulate_period(city, {}, {}, run.seed() + 2);
    for (const auto& w : sel.warnings) std::cerr << "warning: " << w << '\n';

    CovariateSchema schema;
    if (city.spec) schema = city.spec->schema;
    std::vector<RoadRecord> records;
    for (std::size_t i = 0; i < city.size(); ++i)
        for (int period = 0; period < 2; ++period) {
            RoadRecord r;
            r.road_id = city.roads[i].id;
            r.subtype = city.roads[i].subtype;
            r.exposure = city.roads[i].exposure;
            r.fatalities = period == 0 ? before[i] : after[i];
            r.selected = sel.flags[i];
            r.period = period == 0 ? "before" : "after";
            records.push_back(std::move(r));
        }

    auto dir = run.stage();
    io::write_records(dir / "records.csv", schema, records);
    run.output("records.csv");
    if (city.spec) {
        io::write_model_spec(dir / "schema.ini", *city.spec);
        run.output("schema.ini");
    }

    auto t = sim::tabulate(before, after, sel.flags);
    long long cf_selected = 0;
    double expected_selected = 0.0;
    json roads = json::array();
    for (std::size_t i = 0; i < city.size(); ++i) {
        if (sel.flags[i]) {
            cf_selected += counterfactual[i];
            expected_selected += city.roads[i].rate;
        }
        roads.push_back({{"road_id", city.roads[i].id}, {"rate", city.roads[i].rate}, {"selected", bool(sel.flags[i])}});
    }
    auto d = analysis::decompose(t.before_selected, t.after_selected, t.before_unselected, cf_selected);
    json truth{{"multiplier", effect.multiplier},
               {"true_reduction", 1.0 - effect.multiplier},
               {"total_rate", city.total_rate()},
               {"expected_after_selected_without_policy", expected_selected},
               {"selected_roads", t.selected},
               {"totals",
                {{"before_selected", t.before_selected},
                 {"after_selected", t.after_selected},
                 {"before_unselected", t.before_unselected},
                 {"after_unselected", t.after_unselected},
                 {"counterfactual_after_selected", cf_selected}}},
               {"decomposition",
                {{"naive", d.naive}, {"causal", d.causal}, {"temporal", d.temporal}, {"selection", d.selection}}},
               {"warnings", sel.warnings},
               {"roads", roads}};
    if (cfg.population == sim::Population::bernoulli && policy.rule == sim::SelectionRule::threshold &&
        policy.threshold == 1 && effect.multiplier == 1.0) {
        auto e = sim::toy_expectation(cfg.roads, cfg.probability);
        truth["expected_ledger"] = {{"before_selected", e.before_selected},
                                    {"after_selected", e.after_selected},
                                    {"before_unselected", e.before_unselected},
                                    {"counterfactual_after_selected", e.after_unselected},
                                    {"naive", e.after_selected - e.before_selected},
                                    {"causal", e.after_selected - e.after_unselected},
                                    {"temporal", e.after_unselected - e.before_unselected},
                                    {"selection", e.before_unselected - e.before_selected}};
    }
    write_json(dir / "truth.json", truth);
    run.output("truth.json");
    run.commit();
    std::cout << "simulated " << city.size() << " roads, " << t.selected << " selected\n";
    return 0;
}

// ---------------------------------------------------------------------------
// robbins

int cmd_robbins(Run& run) {
    auto& c = run.config();
    const auto& opt = run.options();
    eb::CountHistogram all, selected;
    std::optional<long long> observed_after;
    if (!opt.histogram.empty()) {
        auto h = io::read_histogram(run.input("histogram", opt.histogram));
        all = h.all;
        if (opt.selected_only && !h.has_selected) throw DataError("--selected-only needs a SELECTED column");
        selected = opt.selected_only ? h.selected : h.all;
    } else {
        auto data = load_records(run);
        auto period = c.text("robbins.period");
        auto after_period = c.text("robbins.after_period");
        std::map<std::string, long long> counts, after_counts;
        std::map<std::string, bool> chosen;
        for (const auto& r : data.records) {
            if (after_period && r.period == *after_period) {
                after_counts[r.road_id] += r.fatalities;
                chosen[r.road_id] = chosen[r.road_id] || r.selected;
                continue;
            }
            if (period && r.period != *period) continue;
            counts[r.road_id] += r.fatalities;
            chosen[r.road_id] = chosen[r.road_id] || r.selected;
        }
        for (const auto& [id, x] : counts) {
            all.add(x);
            if (!opt.selected_only || chosen[id]) selected.add(x);
        }
        if (after_period) {
            long long a = 0;
            for (const auto& [id, x] : after_counts)
                if (!opt.selected_only || chosen[id]) a += x;
            observed_after = a;
        }
    }
    if (c.has("robbins.observed_after")) observed_after = c.get<long long>("robbins.observed_after", 0);
    int years = c.get<int>("robbins.years", 1);
    eb::RobbinsOptions ro{c.get<bool>("robbins.isotonic", false)};
    auto table = eb::expected_fatalities_selected(all, selected, years, ro);

    auto dir = run.stage();
    std::vector<std::vector<std::string>> rows;
    json jrows = json::array();
    for (const auto& r : table.rows) {
        rows.push_back({std::to_string(r.x), std::to_string(r.roads), std::to_string(r.selected_roads),
                        r.available ? io::format_double(r.rate) : "NA", io::format_double(r.expected),
                        r.tail_truncated ? "1" : "0"});
        jrows.push_back({{"x", r.x},
                         {"roads", r.roads},
                         {"selected_roads", r.selected_roads},
                         {"rate", r.available ? json(r.rate) : json(nullptr)},
                         {"expected", r.expected},
                         {"tail_truncated", r.tail_truncated}});
    }
    io::write_csv(dir / "robbins.csv", {"X", "ROADS", "SELECTED_ROADS", "RATE", "EXPECTED", "TAIL_TRUNCATED"}, rows);
    json j{{"rows", jrows},
           {"years", table.years},
           {"total_expected", table.total_expected},
           {"per_year", table.per_year()},
           {"selected_observed", table.selected_observed},
           {"observed_per_year", static_cast<double>(table.selected_observed) / years},
           {"warnings", table.warnings}};
    if (observed_after) {
        j["observed_after"] = *observed_after;
        if (table.per_year() > 0)
            j["implied_change"] = analysis::reduction_factor(table.per_year(), static_cast<double>(*observed_after)).change;
    }
    write_json(dir / "robbins.json", j);
    run.output("robbins.csv");
    run.output("robbins.json");
    run.commit();
    for (const auto& w : table.warnings) std::cerr << "warning: " << w << '\n';
    std::cout << std::fixed << std::setprecision(2) << "expected " << table.total_expected << " over " << years
              << " years, " << table.per_year() << " per year\n";
    return 0;
}

// ---------------------------------------------------------------------------
// fit

int cmd_fit(Run& run) {
    auto data = load_records(run);
    auto& c = run.config();
    auto spec = io::model_spec_from(c.tree(), data.schema);
    auto holdout_period = c.text("fit.holdout_period");
    std::vector<RoadRecord> train = data.records, holdout;
    if (holdout_period) {
        std::tie(train, holdout) = io::split_period(data.records, *holdout_period);
        if (holdout.empty()) std::cerr << "warning: no records in holdout period '" << *holdout_period << "'\n";
    }
    if (auto only = c.text("fit.periods")) {
        auto keep = split_list(*only);
        std::erase_if(train, [&](const RoadRecord& r) { return std::find(keep.begin(), keep.end(), r.period) == keep.end(); });
    }
    auto cells = aggregate_cells(train, data.schema);
    auto scfg = sampler_config(run);
    auto result = pipeline::fit(spec, cells, scfg);
    const auto& diag = result.run.diagnostics;

    auto dir = run.stage();
    io::write_draws(dir / "draws", result.run.draws);
    io::write_model_spec(dir / "model.ini", spec);
    io::write_cells(dir / "cells.csv", data.schema, result.model.cells());
    io::write_level_map(dir / "levels.csv", data.schema);
    for (const char* f : {"draws", "model.ini", "cells.csv", "levels.csv"}) run.output(f);
    if (holdout_period) {
        auto held = aggregate_cells(holdout, data.schema);
        std::erase_if(held, [](const TypeCell& t) { return t.fatalities < 1; });
        io::write_cells(dir / "holdout.csv", data.schema, held);
        run.output("holdout.csv");
    }
    json params = json::array();
    for (std::size_t i = 0; i < result.run.draws.dimension(); ++i)
        params.push_back({{"name", result.run.draws.names[i]},
                          {"rhat", std::isfinite(diag.rhat[i]) ? json(diag.rhat[i]) : json(nullptr)},
                          {"ess", diag.ess[i]}});
    json chains = json::array();
    for (const auto& ch : diag.chains)
        chains.push_back({{"seed", ch.seed},
                          {"step_size", ch.step_size},
                          {"mean_accept", ch.mean_accept},
                          {"divergences", ch.divergences},
                          {"max_depth_hits", ch.max_depth_hits},
                          {"leapfrog_steps", ch.leapfrog_steps}});
    json summary{{"cells", result.model.cells().size()},
                 {"dropped_zero_cells", cells.size() - result.model.cells().size()},
                 {"dimension", result.model.dimension()},
                 {"draws", result.run.draws.total()},
                 {"max_rhat", diag.max_rhat()},
                 {"min_ess", diag.min_ess()},
                 {"divergences", diag.divergences()},
                 {"chains", chains},
                 {"parameters", params}};
    write_json(dir / "diagnostics.json", summary);
    run.output("diagnostics.json");
    json seeds = json::array();
    for (const auto& ch : diag.chains) seeds.push_back(ch.seed);
    run.commit({{"chain_seeds", seeds}, {"diagnostics", {{"max_rhat", diag.max_rhat()}, {"min_ess", diag.min_ess()},
                                                          {"divergences", diag.divergences()}}}});
    if (diag.max_rhat() > 1.01) std::cerr << "warning: max R-hat " << diag.max_rhat() << " exceeds 1.01\n";
    if (diag.divergences() > 0) std::cerr << "warning: " << diag.divergences() << " divergent transitions\n";
    std::cout << "fitted " << result.model.cells().size() << " cells, " << result.run.draws.total() << " draws\n";
    return 0;
}

struct LoadedFit {
    model::HierarchicalModel model;
    sampler::PosteriorDraws draws;
    fs::path dir;
};

LoadedFit load_fit(Run& run) {
    fs::path dir = run.options().fit_dir;
    if (dir.empty()) throw ConfigError("needs --fit");
    if (!fs::exists(dir / "manifest.json")) throw DataError("not a fit output directory: " + dir.string());
    run.add_input("fit", dir / "manifest.json");
    auto spec = io::read_model_spec(dir / "model.ini");
    auto cells = io::read_cells(dir / "cells.csv", spec.schema);
    model::HierarchicalModel m(spec, std::move(cells));
    auto draws = io::read_draws(dir / "draws");
    if (draws.names != m.parameter_names()) throw DataError(dir.string() + ": draws do not match the model layout");
    return {std::move(m), std::move(draws), dir};
}

// ---------------------------------------------------------------------------
// reweight

int cmd_reweight(Run& run) {
    auto& c = run.config();
    auto fit = load_fit(run);
    const auto& schema = fit.model.spec().schema;
    const auto& opt = run.options();

    weights::FatalityProbabilityTable table;
    auto smoothing_name = c.get<std::string>("reweight.smoothing", "ratio-of-sums");
    weights::Smoothing smoothing;
    if (smoothing_name == "ratio-of-sums") smoothing = weights::Smoothing::ratio_of_sums;
    else if (smoothing_name == "sum-of-ratios") smoothing = weights::Smoothing::sum_of_ratios;
    else throw ConfigError("unknown smoothing '" + smoothing_name + "'");
    if (!opt.reports.empty()) table = weights::FatalityProbabilityTable::build(
                                  io::read_reports(run.input("reports", opt.reports), schema), smoothing);
    else std::cerr << "warning: no reports given; every inclusion probability is 1\n";

    // Units: selected roads of the before period, one per road.
    io::SchemaDecl decl;
    for (const auto& g : schema.groups) decl.groups.push_back({g.code, g.codes});
    decl.interactions = io::SchemaDecl::Interactions::none;
    decl.offset = schema.offset_name;
    auto units_data = io::read_records(run.input("units", opt.units), decl);
    auto before_period = c.text("reweight.before_period");
    auto after_period = c.text("reweight.after_period");
    std::map<std::string, RoadRecord> roads;
    long long before = 0, after = 0;
    for (auto r : units_data.records) {
        if (!r.selected) continue;
        if (after_period && r.period == *after_period) {
            after += r.fatalities;
            continue;
        }
        if (before_period && r.period != *before_period) continue;
        before += r.fatalities;
        roads.emplace(r.road_id, std::move(r));
    }
    if (roads.empty()) throw DataError("no selected roads in " + opt.units);
    std::vector<TypeCell> units;
    for (const auto& [id, r] : roads) units.push_back(make_cell(r.subtype, 0, r.exposure, fit.model.spec().schema));
    if (c.has("reweight.observed_after")) after = c.get<long long>("reweight.observed_after", 0);

    analysis::EffectOptions eo{c.get<bool>("reweight.propagate_after_noise", false), run.seed()};
    pipeline::FitResult fr{fit.model, {fit.draws, {}}};
    auto r = pipeline::evaluate_before_after(fr, {units, before, after}, table, eo);

    auto dir = run.stage();
    std::vector<std::vector<std::string>> rows;
    for (const auto& [subtype, e] : table.entries()) {
        std::vector<std::string> row;
        for (std::size_t k = 0; k < schema.size(); ++k) row.push_back(std::to_string(schema.groups[k].code_of(subtype[k])));
        row.push_back(io::format_double(e.probability));
        row.push_back(std::to_string(e.reports));
        row.push_back(std::to_string(e.fatal_reports));
        rows.push_back(std::move(row));
    }
    std::vector<std::string> header;
    for (const auto& g : schema.groups) header.push_back(g.code);
    for (const char* h : {"P_FATAL", "REPORTS", "FATAL_REPORTS"}) header.emplace_back(h);
    io::write_csv(dir / "probabilities.csv", header, rows);
    const auto& e = r.effect;
    json j{{"units", units.size()},
           {"smoothing", smoothing_name},
           {"expected_without_policy", summary_json(r.expected.summary)},
           {"before_selected", before},
           {"observed_after", after},
           {"naive_reduction", r.naive_reduction},
           {"reduction", summary_json(e.reduction)},
           {"p_reduction_exceeds_naive", e.p_exceeds_naive},
           {"p_no_reduction", e.p_no_reduction},
           {"excluded_draws", e.excluded},
           {"propagate_after_noise", eo.propagate_after_noise}};
    write_json(dir / "effect_summary.json", j);
    run.output("probabilities.csv");
    run.output("effect_summary.json");
    run.commit();
    std::cout << std::fixed << std::setprecision(1) << "median reduction " << 100 * e.reduction.q50 << "%, 90% interval ["
              << 100 * e.reduction.q05 << ", " << 100 * e.reduction.q95 << "]%\n";
    return 0;
}

// ---------------------------------------------------------------------------
// report

int cmd_report(Run& run) {
    auto& c = run.config();
    auto fit = load_fit(run);
    const auto& opt = run.options();
    const auto& schema = fit.model.spec().schema;
    auto dir = run.stage();

    {
        std::vector<std::vector<std::string>> rows;
        for (const auto& a : analysis::anova(fit.model, fit.draws)) {
            std::vector<std::string> row{a.batch, std::to_string(a.levels)};
            for (const auto* s : {&a.finite_population, &a.superpopulation})
                for (double v : {s->q05, s->q25, s->q50, s->q75, s->q95, s->q025, s->q975})
                    row.push_back(io::format_double(v));
            rows.push_back(std::move(row));
        }
        io::write_csv(dir / "anova.csv",
                      {"BATCH", "LEVELS", "FP_Q05", "FP_Q25", "FP_Q50", "FP_Q75", "FP_Q95", "FP_Q025", "FP_Q975",
                       "SP_Q05", "SP_Q25", "SP_Q50", "SP_Q75", "SP_Q95", "SP_Q025", "SP_Q975"},
                      rows);
        run.output("anova.csv");
    }

    if (fs::exists(fit.dir / "holdout.csv")) {
        auto holdout = io::read_cells(fit.dir / "holdout.csv", schema);
        if (!holdout.empty()) {
            auto p = analysis::posterior_predictive_check(fit.model, fit.draws, holdout, {}, run.seed());
            std::vector<std::vector<std::string>> rows;
            for (const auto& [total, n] : p.histogram) rows.push_back({std::to_string(total), std::to_string(n)});
            io::write_csv(dir / "ppc_histogram.csv", {"TOTAL", "DRAWS"}, rows);
            write_json(dir / "ppc.json", {{"observed", p.observed}, {"exceedance", p.exceedance},
                                           {"draws", p.simulated.size()}});
            run.output("ppc_histogram.csv");
            run.output("ppc.json");
        }
    }

    if (!opt.records.empty()) {
        io::SchemaDecl decl;
        for (const auto& g : schema.groups) decl.groups.push_back({g.code, g.codes});
        decl.interactions = io::SchemaDecl::Interactions::none;
        decl.offset = schema.offset_name;
        auto data = io::read_records(run.input("records", opt.records), decl);
        auto before_period = c.get<std::string>("report.before_period", "before");
        auto after_period = c.get<std::string>("report.after_period", "after");
        long long bs = 0, as = 0, bu = 0, au = 0;
        for (const auto& r : data.records) {
            if (r.period == before_period) (r.selected ? bs : bu) += r.fatalities;
            if (r.period == after_period) (r.selected ? as : au) += r.fatalities;
        }
        json j{{"before_selected", bs}, {"after_selected", as}, {"before_unselected", bu}, {"after_unselected", au}};
        if (bs > 0) j["selected_change"] = analysis::reduction_factor(double(bs), double(as)).change;
        if (bu > 0) j["unselected_change"] = analysis::reduction_factor(double(bu), double(au)).change;
        if (bs > 0 && bu > 0)
            j["mirror_flagged"] =
                analysis::mirror_diagnostic(double(bs), double(as), double(bu), double(au),
                                            c.get<double>("report.mirror_ratio", 0.5))
                    .flagged;
        if (c.has("report.counterfactual_after_selected")) {
            auto cf = c.get<long long>("report.counterfactual_after_selected", 0);
            auto d = analysis::decompose(bs, as, bu, cf);
            j["decomposition"] = {{"naive", d.naive}, {"causal", d.causal}, {"temporal", d.temporal},
                                  {"selection", d.selection}};
        }
        write_json(dir / "decomposition.json", j);
        run.output("decomposition.json");

        if (schema.size() >= 2) {
            auto v = analysis::cramers_v_matrix(data.records, schema);
            std::vector<std::string> header{"GROUP"};
            for (const auto& g : schema.groups) header.push_back(g.code);
            std::vector<std::vector<std::string>> rows;
            for (std::size_t a = 0; a < schema.size(); ++a) {
                std::vector<std::string> row{schema.groups[a].code};
                for (double x : v[a]) row.push_back(io::format_double(x));
                rows.push_back(std::move(row));
            }
            io::write_csv(dir / "cramers_v.csv", header, rows);
            run.output("cramers_v.csv");
        }
    }

    if (!opt.reweight_dir.empty()) {
        fs::path src = fs::path(opt.reweight_dir) / "effect_summary.json";
        run.add_input("reweight", src);
        auto j = read_json(src);
        if (c.has("report.population_share")) {
            double share = c.get<double>("report.population_share", 1.0);
            j["population_share"] = share;
            j["expected_without_policy_scaled_median"] =
                analysis::scale_to_population(j["expected_without_policy"]["q50"].get<double>(), share);
        }
        write_json(dir / "effect_summary.json", j);
        run.output("effect_summary.json");
    }
    run.commit();
    std::cout << "report written to " << opt.out << '\n';
    return 0;
}

// ---------------------------------------------------------------------------
// validate

int cmd_validate(Run& run) {
    auto data = load_records(run);
    auto holdout_period = run.config().text("fit.holdout_period");
    auto train = data.records;
    if (holdout_period) train = io::split_period(data.records, *holdout_period).first;
    auto cells = aggregate_cells(train, data.schema);
    std::size_t zero = 0;
    for (const auto& c : cells) zero += c.fatalities < 1 ? 1 : 0;
    json groups = json::array();
    for (const auto& g : data.schema.groups) groups.push_back({{"code", g.code}, {"levels", g.cardinality()}});
    json j{{"records", data.records.size()},
           {"cells", cells.size()},
           {"zero_count_cells", zero},
           {"groups", groups},
           {"interactions", data.schema.interactions.size()}};
    if (!data.schema.groups.empty()) j["parameters"] = model::ParameterLayout(
                                           model::ModelSpec::with_defaults(data.schema), cells.size() - zero)
                                           .dimension();
    std::cout << j.dump(2) << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Regression-to-the-mean correction for before-after road-safety evaluations"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);
    Options opt;

    auto common = [&](CLI::App* sub) {
        sub->add_option("--config", opt.config, "run configuration INI");
        sub->add_option("--seed", opt.seed, "base random seed (overrides run.seed)");
        sub->add_option("--out", opt.out, "output directory");
        sub->add_option("--set", opt.overrides, "config override section.key=value")->take_all();
    };
    auto* simulate = app.add_subcommand("simulate", "generate a synthetic city and its before/after counts");
    common(simulate);
    auto* robbins = app.add_subcommand("robbins", "Robbins' formula expected fatalities on selected roads");
    common(robbins);
    robbins->add_option("--records", opt.records, "record CSV");
    robbins->add_option("--schema", opt.schema, "schema INI");
    robbins->add_option("--histogram", opt.histogram, "histogram CSV (X, ROADS[, SELECTED])");
    robbins->add_flag("--selected-only", opt.selected_only, "restrict the selected histogram to SELECTED roads");
    auto* fit = app.add_subcommand("fit", "sample the hierarchical truncated-Poisson model");
    common(fit);
    fit->add_option("--records", opt.records, "record CSV");
    fit->add_option("--schema", opt.schema, "schema INI");
    auto* reweight = app.add_subcommand("reweight", "inverse-probability reweighted expectation and effect summary");
    common(reweight);
    reweight->add_option("--fit", opt.fit_dir, "fit output directory")->required();
    reweight->add_option("--units", opt.units, "record CSV holding the selected roads")->required();
    reweight->add_option("--reports", opt.reports, "prospective crash report CSV");
    auto* report = app.add_subcommand("report", "ANOVA, predictive check, decomposition and association tables");
    common(report);
    report->add_option("--fit", opt.fit_dir, "fit output directory")->required();
    report->add_option("--records", opt.records, "record CSV with SELECTED and PERIOD");
    report->add_option("--reweight", opt.reweight_dir, "reweight output directory");
    auto* validate = app.add_subcommand("validate", "check a schema and record file without fitting");
    common(validate);
    validate->add_option("--records", opt.records, "record CSV");
    validate->add_option("--schema", opt.schema, "schema INI");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        auto* sub = app.get_subcommands().front();
        Run run(sub->get_name(), opt);
        if (sub == simulate) return cmd_simulate(run);
        if (sub == robbins) return cmd_robbins(run);
        if (sub == fit) return cmd_fit(run);
        if (sub == reweight) return cmd_reweight(run);
        if (sub == report) return cmd_report(run);
        return cmd_validate(run);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return 3;
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << '\n';
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
