// Acceptance runner: one PASS/FAIL line per criterion, nonzero exit when any
// criterion fails. RTM_ACCEPTANCE_ONLY=1,5 restricts the run to a subset.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "oracles.hpp"
#include "rtm/analysis.hpp"
#include "rtm/eb.hpp"
#include "rtm/model.hpp"
#include "rtm/pipeline.hpp"
#include "rtm/sampler.hpp"
#include "rtm/sim.hpp"
#include "rtm/weights.hpp"

using namespace rtm;

namespace {

struct Outcome {
    bool pass = true;
    std::ostringstream detail;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail << "[failed: " << what << "] ";
        }
    }
};

struct Criterion {
    int id;
    std::string name;
    double budget_seconds;  // 0 = no runtime bound
    std::function<void(Outcome&)> run;
};

void info(const std::string& line) { std::cout << "INFO  " << line << '\n' << std::flush; }

std::string fmt(double v, int digits = 4) {
    std::ostringstream s;
    s << std::setprecision(digits) << v;
    return s.str();
}

// ---------------------------------------------------------------------------
// 1. Robbins formula on the published histogram

void robbins_table1(Outcome& out) {
    eb::CountHistogram all{{0, 138142}, {1, 632}, {2, 40}, {3, 1}, {4, 1}};
    eb::CountHistogram selected{{0, 43806}, {1, 405}, {2, 29}, {3, 1}};
    auto table = eb::expected_fatalities_selected(all, selected, 5);

    // Rates recomputed directly from the histogram counts.
    const double counts[] = {138142, 632, 40, 1, 1};
    const double published_rates[] = {0.004575, 0.12658, 0.075, 4.0};
    const double published_expected[] = {200, 51, 2, 4};
    out.require(table.rows.size() == 4, "four rows");
    for (std::size_t x = 0; x < 4 && x < table.rows.size(); ++x) {
        double oracle = (x + 1.0) * counts[x + 1] / counts[x];
        double rate = table.rows[x].rate;
        out.require(std::abs(rate - oracle) <= 1e-12 * oracle, "rate x=" + std::to_string(x) + " vs oracle");
        out.require(std::abs(rate - published_rates[x]) <= 1e-4 * published_rates[x],
                    "rate x=" + std::to_string(x) + " vs published");
        out.require(std::abs(table.rows[x].expected - published_expected[x]) <= 1.0,
                    "expected x=" + std::to_string(x));
        out.detail << "E" << x << "=" << fmt(table.rows[x].expected, 5) << " ";
    }
    out.require(std::abs(table.per_year() - 52.0) <= 1.0, "per-year average");
    out.detail << "per_year=" << fmt(table.per_year(), 4);
    info("C1 implied change with 72 observed after: " +
         fmt(analysis::reduction_factor(table.per_year(), 72.0).change, 3));
}

// ---------------------------------------------------------------------------
// 2. Toy city

void toy_city(Outcome& out) {
    auto e = sim::toy_expectation(100, 0.1);
    auto as_int = [](double v) { return std::llround(v); };
    for (double v : {e.before_selected, e.after_selected, e.before_unselected, e.after_unselected})
        out.require(std::abs(v - static_cast<double>(as_int(v))) < 1e-9, "integral expectation");
    auto ledger = analysis::decompose(as_int(e.before_selected), as_int(e.after_selected),
                                      as_int(e.before_unselected), as_int(e.after_unselected));
    out.require(ledger.naive == -9 && ledger.causal == 0 && ledger.selection == -10 && ledger.temporal == 1,
                "deterministic ledger");
    out.detail << "ledger naive=" << ledger.naive << " causal=" << ledger.causal << " selection=" << ledger.selection
               << " temporal=" << ledger.temporal << "; ";

    sim::CityConfig cfg;
    cfg.population = sim::Population::bernoulli;
    cfg.roads = 100;
    cfg.probability = 0.1;
    cfg.mode = sim::OutcomeMode::bernoulli;
    auto city = sim::generate_city(cfg);
    const std::size_t reps = 10000;
    double sum_reduction = 0.0, sum_unselected = 0.0;
    std::size_t counted = 0;
    sim::SelectionPolicy policy;  // threshold 1
    for (std::size_t r = 0; r < reps; ++r) {
        auto before = sim::simulate_period(city, {}, {}, sampler::derived_seed(1000, 2 * r));
        auto sel = sim::select_roads(before, policy);
        auto after = sim::simulate_period(city, {1.0}, sel.flags, sampler::derived_seed(1000, 2 * r + 1));
        auto t = sim::tabulate(before, after, sel.flags);
        if (t.before_selected > 0) {
            sum_reduction += analysis::reduction_factor(static_cast<double>(t.before_selected),
                                                        static_cast<double>(t.after_selected))
                                 .change;
            ++counted;
        }
        if (t.unselected > 0) sum_unselected += static_cast<double>(t.after_unselected) / static_cast<double>(t.unselected);
    }
    double mean_reduction = sum_reduction / static_cast<double>(counted);
    double mean_unselected = sum_unselected / static_cast<double>(reps);
    out.require(std::abs(mean_reduction + 0.9) <= 0.02, "selected reduction -90% +/- 2pp");
    out.require(std::abs(mean_unselected - 0.1) <= 0.005, "unselected after mean 0.1 +/- 0.005");
    out.detail << "mc selected change=" << fmt(100 * mean_reduction, 4) << "% unselected after/road="
               << fmt(mean_unselected, 4);

    // Null effect: before and after count distributions agree (homogeneity test).
    sim::CityConfig gcfg;
    gcfg.population = sim::Population::gamma;
    gcfg.roads = 20000;
    gcfg.gamma_shape = 0.5;
    gcfg.gamma_rate = 1.0;
    gcfg.seed = 77;
    auto gcity = sim::generate_city(gcfg);
    auto b = sim::simulate_period(gcity, {}, {}, 78);
    auto sel = sim::select_roads(b, policy);
    auto a = sim::simulate_period(gcity, {1.0}, sel.flags, 79);
    std::vector<std::vector<double>> table(2, std::vector<double>(5, 0.0));
    for (std::size_t i = 0; i < b.size(); ++i) {
        table[0][static_cast<std::size_t>(std::min<long long>(b[i], 4))] += 1;
        table[1][static_cast<std::size_t>(std::min<long long>(a[i], 4))] += 1;
    }
    double p = oracle::chi_square_sf(oracle::pearson_chi_square(table), 4.0);
    info("C2 null-effect homogeneity of before/after count histograms: p=" + fmt(p, 3));
    out.require(p > 0.001, "null effect leaves the count distribution unchanged");
}

// ---------------------------------------------------------------------------
// 3. Zero-truncated Poisson

void truncated_poisson(Outcome& out) {
    for (double mu : {0.01, 0.1, 1.0, 5.0, 10.0}) {
        double total = 0.0;
        for (long long x = 1; x < 200; ++x) total += std::exp(model::truncated_poisson_logpmf(x, mu));
        out.require(std::abs(total - 1.0) <= 1e-10, "normalization mu=" + fmt(mu));

        double m1 = 0.0, m2 = 0.0;
        for (int x = 1; x < 200; ++x) {
            double p = oracle::truncated_poisson_pmf(x, mu);
            m1 += x * p;
            m2 += static_cast<double>(x) * x * p;
        }
        const std::size_t n = 1000000;
        std::mt19937_64 rng(static_cast<std::uint64_t>(mu * 1000) + 5);
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += static_cast<double>(model::truncated_poisson_rng(mu, rng));
        double mean = s / static_cast<double>(n);
        double target = mu / -std::expm1(-mu);
        double se = std::sqrt((m2 - m1 * m1) / static_cast<double>(n));
        out.require(std::abs(m1 - target) < 1e-10, "oracle mean mu=" + fmt(mu));
        out.require(std::abs(mean - target) <= 3 * se, "rng mean mu=" + fmt(mu));
        out.detail << "mu=" << mu << ":z=" << fmt((mean - target) / se, 2) << " ";
    }
    double v = model::truncated_poisson_logpmf(2, 1.0);
    out.require(std::abs(v - -1.23448) <= 1e-5, "logpmf(2, 1)");
    out.require(std::abs(v - std::log(oracle::truncated_poisson_pmf(2, 1.0))) <= 1e-12, "logpmf(2, 1) vs oracle");
    out.require(std::abs(model::truncated_poisson_logpmf(1, std::log(2.0)) - -0.36651) <= 1e-5, "logpmf(1, ln 2)");
    out.detail << "logpmf(2,1)=" << fmt(v, 7);
}

// ---------------------------------------------------------------------------
// 4. Gradient of the hierarchical log density

void gradient(Outcome& out) {
    std::mt19937_64 rng(404);
    CovariateSchema schema;
    std::uniform_int_distribution<int> card(2, 5);
    for (const char* code : {"GRPA", "GRPB", "GRPC"})
        schema.groups.push_back(CovariateGroup::contiguous(code, static_cast<std::size_t>(card(rng))));
    schema.interactions = CovariateSchema::all_pairs(3);
    auto spec = model::ModelSpec::with_defaults(schema);
    spec.reference = model::ReferenceLevel{1, 2, 2.0};

    std::vector<TypeCell> cells;
    std::uniform_real_distribution<double> log_exposure(4.0, 12.0);
    std::uniform_int_distribution<long long> count(1, 6);
    for (std::size_t j = 0; j < 40; ++j) {
        std::vector<int> sub;
        for (const auto& g : schema.groups)
            sub.push_back(std::uniform_int_distribution<int>(1, static_cast<int>(g.cardinality()))(rng));
        auto c = make_cell(sub, count(rng), std::exp(log_exposure(rng)), schema);
        c.id = j;
        cells.push_back(std::move(c));
    }
    model::HierarchicalModel m(spec, cells);
    auto f = [&](const Eigen::VectorXd& x) {
        Eigen::VectorXd g(x.size());
        return m.log_density_gradient(x, g);
    };

    double worst = 0.0;
    std::normal_distribution<double> z(0.0, 1.0);
    for (int point = 0; point < 50; ++point) {
        Eigen::VectorXd x;
        if (point % 2 == 0) {
            x = model::draw_from_prior(spec, m.layout(), rng);
        } else {
            x.resize(static_cast<Eigen::Index>(m.dimension()));
            for (auto& v : x) v = z(rng);
            x[static_cast<Eigen::Index>(m.layout().grand_mean)] = -8.0 + z(rng);
        }
        Eigen::VectorXd g(x.size());
        m.log_density_gradient(x, g);
        Eigen::VectorXd fd = oracle::finite_difference(f, x);
        for (Eigen::Index i = 0; i < x.size(); ++i)
            worst = std::max(worst, std::abs(g[i] - fd[i]) / std::max(1.0, std::abs(fd[i])));
    }
    out.require(worst <= 1e-5, "max relative gradient error <= 1e-5");
    out.detail << "dim=" << m.dimension() << " max_rel_err=" << fmt(worst, 3);
}

// ---------------------------------------------------------------------------
// 5. Sampler calibration

struct StdNormal {
    std::size_t dim;
    std::size_t dimension() const { return dim; }
    double log_density_gradient(const Eigen::VectorXd& x, Eigen::VectorXd& g) const {
        g = -x;
        return -0.5 * x.squaredNorm();
    }
};

struct CorrelatedNormal {
    Eigen::VectorXd mean;
    Eigen::MatrixXd precision;
    std::size_t dimension() const { return static_cast<std::size_t>(mean.size()); }
    double log_density_gradient(const Eigen::VectorXd& x, Eigen::VectorXd& g) const {
        Eigen::VectorXd d = x - mean;
        g = -(precision * d);
        return -0.5 * d.dot(precision * d);
    }
};

template <class Target>
void check_normal(const Target& target, const Eigen::VectorXd& mean, const std::string& label, Outcome& out) {
    sampler::SamplerConfig cfg;
    cfg.chains = 4;
    cfg.iterations = 2000;
    cfg.warmup = 1000;
    cfg.seed = 5150;
    cfg.parallel = false;
    auto run = sampler::run_chains(target, cfg);
    double worst_z = 0.0;
    for (std::size_t i = 0; i < target.dimension(); ++i) {
        std::vector<double> all;
        for (const auto& c : run.draws.chains) all.insert(all.end(), c.col(static_cast<Eigen::Index>(i)).data(),
                                                           c.col(static_cast<Eigen::Index>(i)).data() + c.rows());
        double mcse = math::sample_sd(all) / std::sqrt(run.diagnostics.ess[i]);
        worst_z = std::max(worst_z, std::abs(math::mean(all) - mean[static_cast<Eigen::Index>(i)]) / mcse);
    }
    out.require(worst_z <= 3.0, label + " means within 3 MCSE");
    out.require(run.diagnostics.max_rhat() < 1.01, label + " R-hat < 1.01");
    out.detail << label << ": max|z|=" << fmt(worst_z, 3) << " rhat=" << fmt(run.diagnostics.max_rhat(), 4) << "; ";
}

void sbc(Outcome& out) {
    CovariateSchema schema;
    for (const char* code : {"GRPA", "GRPB", "GRPC"}) schema.groups.push_back(CovariateGroup::contiguous(code, 3));
    schema.interactions = CovariateSchema::all_pairs(3);
    auto spec = model::ModelSpec::with_defaults(schema);
    const std::size_t n_cells = 40;
    model::ParameterLayout layout(spec, n_cells);

    struct Tracked {
        std::string name;
        std::size_t index;
    };
    const std::vector<Tracked> tracked{{"theta", layout.grand_mean},
                                       {"rho", layout.offset_coef},
                                       {"main[GRPA=1]", layout.main[0].offset},
                                       {"inter[0,1]", layout.inter[0].offset},
                                       {"cell[0]", layout.cells.offset},
                                       {"tau_main", layout.tau_main},
                                       {"log_sigma_cell", layout.log_sigma_cell},
                                       {"eta_main[0]", layout.eta_main.offset}};

    const std::size_t reps = 500, bins = 10, retained = 99;
    std::vector<std::vector<std::size_t>> hist(tracked.size(), std::vector<std::size_t>(bins, 0));
    std::size_t divergent = 0;
    for (std::size_t r = 0; r < reps; ++r) {
        std::mt19937_64 rng(sampler::derived_seed(90000, r));
        std::vector<TypeCell> cells;
        std::uniform_int_distribution<int> level(1, 3);
        std::uniform_real_distribution<double> log_exposure(8.0, 12.0);
        for (std::size_t j = 0; j < n_cells; ++j) {
            auto c = make_cell({level(rng), level(rng), level(rng)}, 1, std::exp(log_exposure(rng)), schema);
            c.id = j;
            cells.push_back(std::move(c));
        }
        auto truth = model::draw_from_prior(spec, layout, rng);
        auto sc = model::compute_scales(spec, layout, truth);
        for (auto& c : cells) {
            double log_mu = model::log_rate(spec, layout, truth, sc, c, sc.cell * truth[layout.cells.offset + c.id]);
            c.fatalities = model::truncated_poisson_rng(std::max(std::exp(log_mu), 1e-300), rng);
        }
        model::HierarchicalModel m(spec, cells);
        sampler::SamplerConfig cfg;
        cfg.chains = 1;
        cfg.warmup = 300;
        cfg.thin = 6;
        cfg.iterations = cfg.warmup + retained * cfg.thin;
        cfg.seed = sampler::derived_seed(70000, r);
        cfg.parallel = false;
        auto run = sampler::run_chains(m, cfg);
        divergent += run.diagnostics.divergences() > 0 ? 1 : 0;
        const auto& draws = run.draws.chains[0];
        for (std::size_t k = 0; k < tracked.size(); ++k) {
            std::size_t rank = 0;
            for (Eigen::Index s = 0; s < draws.rows(); ++s)
                rank += draws(s, static_cast<Eigen::Index>(tracked[k].index)) < truth[tracked[k].index] ? 1 : 0;
            ++hist[k][rank * bins / (retained + 1)];
        }
    }
    // Bonferroni over the tracked parameters keeps the family level at 0.01.
    const double alpha = 0.01 / static_cast<double>(tracked.size());
    double min_p = 1.0;
    for (std::size_t k = 0; k < tracked.size(); ++k) {
        double p = oracle::uniformity_p_value(hist[k]);
        min_p = std::min(min_p, p);
        std::ostringstream bins_text;
        for (auto b : hist[k]) bins_text << b << ' ';
        info("C5 SBC " + tracked[k].name + " p=" + fmt(p, 3) + " ranks: " + bins_text.str());
        out.require(p > alpha, "SBC uniformity for " + tracked[k].name);
    }
    info("C5 SBC replications with any divergence: " + std::to_string(divergent) + "/" + std::to_string(reps));
    out.detail << "SBC reps=" << reps << " min_p=" << fmt(min_p, 3) << " (per-parameter level " << fmt(alpha, 3)
               << ")";
}

void sampler_calibration(Outcome& out) {
    check_normal(StdNormal{6}, Eigen::VectorXd::Zero(6), "std-normal", out);
    CorrelatedNormal corr;
    corr.mean = Eigen::Vector3d(1.0, -2.0, 0.5);
    Eigen::Matrix3d cov;
    cov << 1.0, 0.9, 0.3, 0.9, 2.0, 0.5, 0.3, 0.5, 0.5;
    corr.precision = cov.inverse();
    check_normal(corr, corr.mean, "correlated", out);
    sbc(out);
}

// ---------------------------------------------------------------------------
// 6. Reweighting recovers the city total

sim::SchemaPopulation unique_population(std::vector<std::size_t> cards, bool interactions, double theta) {
    CovariateSchema schema;
    const char* codes[] = {"GRPA", "GRPB", "GRPC", "GRPD", "GRPE"};
    for (std::size_t k = 0; k < cards.size(); ++k) schema.groups.push_back(CovariateGroup::contiguous(codes[k], cards[k]));
    if (interactions) schema.interactions = CovariateSchema::all_pairs(cards.size());
    sim::SchemaPopulation pop{model::ModelSpec::with_defaults(schema), theta, 1.0};
    pop.unique_types = true;
    return pop;
}

void reweighting(Outcome& out) {
    sim::CityConfig cfg;
    cfg.population = sim::Population::schema;
    cfg.roads = 10000;
    cfg.schema = unique_population({10, 10, 10, 10, 4}, false, -9.0);
    cfg.seed = 606;
    auto city = sim::generate_city(cfg);

    // The ground-truth parameters are the single posterior draw.
    std::vector<TypeCell> cells = city.types;
    for (auto& c : cells) c.fatalities = 1;
    model::HierarchicalModel m(*city.spec, cells);
    sampler::PosteriorDraws truth;
    truth.chains.push_back(city.truth.transpose());

    weights::FatalityProbabilityTable table;
    std::vector<TypeCell> all_units;
    for (const auto& road : city.roads) {
        table.set(road.subtype, -std::expm1(-road.rate));
        all_units.push_back(make_cell(road.subtype, 0, road.exposure, city.spec->schema));
    }
    auto rates = weights::unit_rates(m, truth, all_units, 1);
    double max_rate_err = 0.0;
    for (std::size_t i = 0; i < city.size(); ++i)
        max_rate_err = std::max(max_rate_err, std::abs(rates(0, static_cast<Eigen::Index>(i)) / city.roads[i].rate - 1.0));
    out.require(max_rate_err < 1e-9, "unit rates reproduce the city's road rates");

    const double total = city.total_rate();
    const std::size_t reps = 200;
    double sum_estimate = 0.0, sum_naive = 0.0;
    for (std::size_t r = 0; r < reps; ++r) {
        auto x = sim::simulate_period(city, {}, {}, sampler::derived_seed(6000, r));
        std::vector<TypeCell> observed;
        for (std::size_t i = 0; i < city.size(); ++i)
            if (x[i] > 0) {
                observed.push_back(all_units[i]);
                sum_naive += city.roads[i].rate;
            }
        auto e = weights::reweighted_expectation(m, truth, observed, table, r);
        sum_estimate += e.draws[0];
    }
    double mean_estimate = sum_estimate / static_cast<double>(reps);
    double rel = mean_estimate / total - 1.0;
    out.require(std::abs(rel) <= 0.05, "mean reweighted total within 5% of the city total");
    out.detail << "sum_mu=" << fmt(total, 6) << " mean_estimate=" << fmt(mean_estimate, 6) << " rel_err="
               << fmt(100 * rel, 3) << "% unweighted=" << fmt(sum_naive / static_cast<double>(reps), 6);
}

// ---------------------------------------------------------------------------
// 7. End-to-end effect recovery

void effect_recovery(Outcome& out) {
    const std::size_t reps = 100;
    const double multiplier = 0.8;
    std::size_t covered = 0, covered_literal = 0, done = 0;
    double sum_naive = 0.0, sum_median = 0.0, sum_selected = 0.0;
    std::size_t max_divergent = 0;
    double max_rhat = 1.0;
    for (std::size_t r = 0; r < reps; ++r) {
        sim::CityConfig cfg;
        cfg.population = sim::Population::schema;
        cfg.roads = 300;
        cfg.schema = unique_population({5, 5, 4, 4}, true, -10.5);
        cfg.seed = sampler::derived_seed(7000, 10 * r);
        auto city = sim::generate_city(cfg);
        const auto& schema = city.spec->schema;

        auto before = sim::simulate_period(city, {}, {}, cfg.seed + 1);
        sim::SelectionPolicy policy;
        policy.threshold = 2;
        auto sel = sim::select_roads(before, policy);
        auto after = sim::simulate_period(city, {multiplier}, sel.flags, cfg.seed + 2);
        auto totals = sim::tabulate(before, after, sel.flags);
        if (totals.selected == 0 || totals.before_selected == 0) {
            info("C7 replication " + std::to_string(r) + " selected no roads; skipped");
            continue;
        }

        std::vector<RoadRecord> records;
        pipeline::BeforeAfterInput input;
        for (std::size_t i = 0; i < city.size(); ++i) {
            const auto& road = city.roads[i];
            records.push_back({road.id, road.subtype, road.exposure, before[i], sel.flags[i], "before"});
            if (sel.flags[i]) input.selected_units.push_back(make_cell(road.subtype, 0, road.exposure, schema));
        }
        input.before_selected = totals.before_selected;
        input.after_selected = totals.after_selected;

        sampler::SamplerConfig scfg;
        scfg.chains = 2;
        scfg.iterations = 2000;
        scfg.warmup = 1000;
        scfg.target_accept = 0.9;
        scfg.seed = cfg.seed + 3;
        scfg.parallel = false;
        auto fit = pipeline::fit(*city.spec, aggregate_cells(records, schema), scfg);
        max_divergent = std::max(max_divergent, fit.run.diagnostics.divergences());
        max_rhat = std::max(max_rhat, fit.run.diagnostics.max_rhat());

        weights::FatalityProbabilityTable table;  // every road is observed
        auto noisy = pipeline::evaluate_before_after(fit, input, table, {true, cfg.seed + 4});
        auto literal = pipeline::evaluate_before_after(fit, input, table, {false, cfg.seed + 4});
        const double target = 1.0 - multiplier;
        covered += noisy.effect.reduction.q05 <= target && target <= noisy.effect.reduction.q95 ? 1 : 0;
        covered_literal += literal.effect.reduction.q05 <= target && target <= literal.effect.reduction.q95 ? 1 : 0;
        sum_naive += noisy.naive_reduction;
        sum_median += noisy.effect.reduction.q50;
        sum_selected += static_cast<double>(totals.selected);
        ++done;
    }
    const double n = static_cast<double>(done);
    double coverage = static_cast<double>(covered) / n;
    double mean_naive = sum_naive / n;
    out.require(done == reps, "every replication selected roads");
    out.require(coverage >= 0.85 && coverage <= 0.95, "90% interval coverage of 20% in [85, 95]%");
    out.require(mean_naive > 1.0 - multiplier, "naive reduction overstates the effect on average");
    out.detail << "coverage=" << fmt(100 * coverage, 3) << "% naive_mean=" << fmt(100 * mean_naive, 3)
               << "% adjusted_median_mean=" << fmt(100 * sum_median / n, 3) << "%";
    info("C7 coverage holding the after count fixed: " + fmt(100 * static_cast<double>(covered_literal) / n, 3) + "%");
    info("C7 mean selected roads per replication: " + fmt(sum_selected / n, 4) + ", worst R-hat " + fmt(max_rhat, 4) +
         ", most divergences in one fit " + std::to_string(max_divergent));
}

// ---------------------------------------------------------------------------
// 8. Reference report fixture

void reference_fixture(Outcome& out) {
    std::ifstream in(std::string(RTM_DATA_DIR) + "/nyc_reference_summary.json");
    out.require(static_cast<bool>(in), "fixture present");
    if (!in) return;
    auto j = nlohmann::json::parse(in);
    for (const char* key : {"before_selected", "observed_after", "naive_reduction", "robbins_implied_change",
                            "reduction", "p_reduction_exceeds_naive", "p_no_reduction", "ppc_exceedance"})
        out.require(j.contains(key), std::string("fixture key ") + key);
    for (const char* key : {"q05", "q25", "q50", "q75", "q95"})
        out.require(j["reduction"].contains(key), std::string("fixture reduction.") + key);
    out.require(j.value("reproducible", true) == false, "fixture marked as not reproducible");
    out.detail << "documentation only; headline values depend on data that is not distributed";
    // The fixture's own arithmetic is checked against the library; its
    // modelled values are carried as documentation.
    double naive = -analysis::reduction_factor(j["before_selected"].get<double>(), j["observed_after"].get<double>()).change;
    info("C8 fixture naive reduction from its counts: " + fmt(100 * naive, 3) + "% (documented " +
         fmt(100 * j["naive_reduction"].get<double>(), 3) + "%)");
}

// ---------------------------------------------------------------------------
// 9. Diagnostics sanity

void diagnostics_sanity(Outcome& out) {
    auto perfect = analysis::cramers_v({{10, 0, 0}, {0, 7, 0}, {0, 0, 4}});
    auto independent = analysis::cramers_v({{2, 4, 6}, {3, 6, 9}, {5, 10, 15}});
    out.require(std::abs(perfect.value - 1.0) < 1e-12, "perfect association gives 1");
    out.require(std::abs(independent.value) < 1e-12, "independence gives 0");
    double oracle_v = std::sqrt(oracle::pearson_chi_square({{12, 5}, {3, 9}, {4, 4}}) / 37.0);
    out.require(std::abs(analysis::cramers_v({{12, 5}, {3, 9}, {4, 4}}).value - oracle_v) < 1e-12, "fixture vs oracle");

    std::mt19937_64 rng(909);
    std::uniform_int_distribution<long long> count(0, 100000);
    std::size_t violations = 0;
    for (int i = 0; i < 10000; ++i) {
        long long bs = count(rng), as = count(rng), bu = count(rng), au = count(rng);
        auto l = analysis::decompose(bs, as, bu, au);
        if (l.naive != as - bs || l.causal != as - au || l.selection != bu - bs || l.temporal != au - bu ||
            l.naive != l.causal + l.selection + l.temporal)
            ++violations;
    }
    out.require(violations == 0, "decomposition identity on 10^4 quadruples");
    out.detail << "V_perfect=" << perfect.value << " V_independent=" << independent.value << " identity_violations=" << violations;
}

std::set<int> selected_criteria() {
    std::set<int> out;
    if (const char* env = std::getenv("RTM_ACCEPTANCE_ONLY")) {
        std::stringstream s(env);
        std::string item;
        while (std::getline(s, item, ',')) out.insert(std::stoi(item));
    }
    return out;
}

}  // namespace

int main() {
    const std::vector<Criterion> criteria{
        {1, "robbins-table1", 1.0, robbins_table1},
        {2, "toy-city", 10.0, toy_city},
        {3, "truncated-poisson", 0.0, truncated_poisson},
        {4, "gradient", 0.0, gradient},
        {5, "sampler-calibration", 1800.0, sampler_calibration},
        {6, "reweighting-identity", 0.0, reweighting},
        {7, "effect-recovery", 7200.0, effect_recovery},
        {8, "reference-fixture", 0.0, reference_fixture},
        {9, "diagnostics-sanity", 0.0, diagnostics_sanity},
    };
    auto only = selected_criteria();
    int failures = 0;
    for (const auto& c : criteria) {
        if (!only.empty() && !only.count(c.id)) continue;
        Outcome out;
        auto t0 = std::chrono::steady_clock::now();
        try {
            c.run(out);
        } catch (const std::exception& e) {
            out.require(false, std::string("exception: ") + e.what());
        }
        double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (c.budget_seconds > 0.0) out.require(seconds < c.budget_seconds, "runtime under " + fmt(c.budget_seconds) + " s");
        failures += out.pass ? 0 : 1;
        std::cout << (out.pass ? "PASS" : "FAIL") << "  C" << c.id << ' ' << c.name << " (" << std::fixed
                  << std::setprecision(2) << seconds << " s) " << std::defaultfloat << out.detail.str() << '\n'
                  << std::flush;
    }
    std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << '\n';
    return failures == 0 ? 0 : 1;
}
