#include "mmfit/cli.hpp"

#include "mmfit/error.hpp"
#include "mmfit/experiments.hpp"
#include "mmfit/io.hpp"
#include "mmfit/report.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <ostream>

namespace fs = std::filesystem;

namespace mmfit {

namespace {

struct InputArgs {
    std::string data;
    std::vector<std::string> memberships;
    std::string response = "y";
    std::vector<std::string> covariates;
    bool normalize = false;
};

struct ChainArgs {
    std::string engine = "gibbs";
    std::size_t burn_in = 500;
    std::size_t iterations = 5000;
    std::size_t thin = 1;
    std::size_t chains = 2;
    std::uint64_t seed = 1;
    double prior_shape = 0.001;
    double prior_rate = 0.001;
    bool store_u = false;
};

struct SimArgs {
    std::size_t n = 1000;
    std::vector<std::size_t> clusters{100};
    std::vector<std::string> names;
    std::size_t m = 0;
    std::size_t m_max = 3;
    std::string weights = "equal";
    std::vector<double> beta{0.0, 0.5};
    std::vector<double> sigma2_u{0.25};
    double sigma2_e = 1.0;
};

struct CommonArgs {
    std::string out = ".";
    bool quiet = false;
};

void add_input_options(CLI::App* cmd, InputArgs& a, bool model_columns) {
    cmd->add_option("--data", a.data, "Unit-level data CSV (needs a unit_id column)")->required()->check(CLI::ExistingFile);
    cmd->add_option("--memberships", a.memberships, "Membership CSV: unit_id,classification,cluster_id,weight")
        ->required()
        ->check(CLI::ExistingFile);
    if (model_columns) {
        cmd->add_option("--response", a.response, "Response column")->capture_default_str();
        cmd->add_option("--covariates", a.covariates, "Fixed-effect covariate columns")->delimiter(',');
    }
    cmd->add_flag("--normalize", a.normalize, "Rescale membership weights that do not sum to 1 (e.g. raw counts)");
}

void add_chain_options(CLI::App* cmd, ChainArgs& a) {
    cmd->add_option("--engine", a.engine, "gibbs or exact")
        ->check(CLI::IsMember({"gibbs", "exact"}))
        ->capture_default_str();
    cmd->add_option("--burnin", a.burn_in, "Burn-in sweeps")->capture_default_str();
    cmd->add_option("--iters", a.iterations, "Sweeps after burn-in")->capture_default_str();
    cmd->add_option("--thin", a.thin, "Keep every k-th sweep")->capture_default_str();
    cmd->add_option("--chains", a.chains, "Number of chains")->capture_default_str();
    cmd->add_option("--seed", a.seed, "Random seed")->capture_default_str();
    cmd->add_option("--prior-shape", a.prior_shape, "Inverse-gamma prior shape")->capture_default_str();
    cmd->add_option("--prior-rate", a.prior_rate, "Inverse-gamma prior rate")->capture_default_str();
    cmd->add_flag("--store-u", a.store_u, "Store cluster-effect draws in draws.csv");
}

void add_sim_options(CLI::App* cmd, SimArgs& a) {
    cmd->add_option("--n", a.n, "Number of units")->capture_default_str();
    cmd->add_option("--clusters", a.clusters, "Clusters per classification (repeat for several)")
        ->capture_default_str();
    cmd->add_option("--names", a.names, "Classification names (repeatable)");
    cmd->add_option("--m", a.m, "Fixed number of memberships per unit");
    cmd->add_option("--m-max", a.m_max, "Memberships per unit uniform on 1..m-max (ignored with --m)")
        ->capture_default_str();
    cmd->add_option("--weights", a.weights, "equal or random")
        ->check(CLI::IsMember({"equal", "random"}))
        ->capture_default_str();
    cmd->add_option("--beta", a.beta, "Intercept then covariate coefficients")->delimiter(',')->capture_default_str();
    cmd->add_option("--sigma2-u", a.sigma2_u, "Between-cluster variance (one, or one per classification)")
        ->capture_default_str();
    cmd->add_option("--sigma2-e", a.sigma2_e, "Residual variance")->capture_default_str();
}

void add_common_options(CLI::App* cmd, CommonArgs& a) {
    cmd->add_option("--out", a.out, "Output directory")->capture_default_str();
    cmd->add_flag("--quiet", a.quiet, "No progress output");
}

FitOptions fit_options(const ChainArgs& a) {
    FitOptions o;
    o.engine = a.engine == "exact" ? Engine::exact : Engine::gibbs;
    o.prior = {a.prior_shape, a.prior_rate};
    o.chain.burn_in = a.burn_in;
    o.chain.iterations = a.iterations;
    o.chain.thin = a.thin;
    o.chain.n_chains = a.chains;
    o.chain.seed = a.seed;
    o.chain.store_u = a.store_u;
    return o;
}

SimConfig sim_config(const SimArgs& a, std::uint64_t seed) {
    SimConfig cfg;
    cfg.n_units = a.n;
    cfg.beta = a.beta;
    cfg.sigma2_e = a.sigma2_e;
    cfg.seed = seed;
    cfg.classifications.clear();
    if (a.sigma2_u.size() != 1 && a.sigma2_u.size() != a.clusters.size()) {
        throw Error(Errc::invalid_config, "give one --sigma2-u, or one per --clusters");
    }
    if (!a.names.empty() && a.names.size() != a.clusters.size()) {
        throw Error(Errc::invalid_config, "give one --names entry per --clusters");
    }
    for (std::size_t c = 0; c < a.clusters.size(); ++c) {
        ClassificationSim s;
        s.name = !a.names.empty() ? a.names[c] : a.clusters.size() == 1 ? "cluster" : fmt::format("cluster{}", c + 1);
        s.n_clusters = a.clusters[c];
        s.cardinality = a.m > 0 ? Cardinality::fixed(a.m) : Cardinality::uniform(a.m_max);
        s.weights = a.weights == "random" ? SimWeights::random_proportions : SimWeights::equal;
        s.sigma2_u = a.sigma2_u.size() == 1 ? a.sigma2_u.front() : a.sigma2_u[c];
        cfg.classifications.push_back(s);
    }
    return cfg;
}

IngestResult load(const InputArgs& a) {
    std::vector<fs::path> paths(a.memberships.begin(), a.memberships.end());
    return ingest(a.data, paths, {a.response, a.covariates, a.normalize});
}

class Outputs {
public:
    Outputs(const CommonArgs& common, std::ostream& out) : dir_(common.out), quiet_(common.quiet), out_(out) {
        fs::create_directories(dir_);
    }

    template <typename Writer>
    void write(const std::string& name, Writer&& writer) {
        const auto path = dir_ / name;
        std::ofstream file(path, std::ios::binary);
        if (!file) throw Error(Errc::ingest, fmt::format("cannot write '{}'", path.string()));
        writer(file);
        if (!file) throw Error(Errc::ingest, fmt::format("failed writing '{}'", path.string()));
        progress(fmt::format("wrote {}", path.string()));
    }

    void progress(const std::string& line) {
        if (!quiet_) out_ << line << '\n';
    }

private:
    fs::path dir_;
    bool quiet_;
    std::ostream& out_;
};

void print_warnings(const std::vector<std::string>& warnings, std::ostream& err) {
    for (const auto& w : warnings) err << "warning: " << w << '\n';
}

// -------------------------------------------------------------------------
// Commands
// -------------------------------------------------------------------------

int cmd_validate(const InputArgs& in, const CommonArgs& common, std::ostream& out, std::ostream& err) {
    auto loaded = load(in);
    print_warnings(loaded.warnings, err);
    bool ok = true;
    std::string text = fmt::format("units: {} ({} dropped)\n", loaded.data.n_units(), loaded.dropped_units);
    for (const auto& d : loaded.designs) {
        const auto report = validate_design(d, loaded.data.n_units());
        ok = ok && report.ok();
        std::size_t max_m = 0;
        for (std::size_t i = 0; i < d.n_units(); ++i) max_m = std::max(max_m, d.row(i).size());
        text += fmt::format("classification '{}': {} clusters, {} memberships, max {} per unit: {}", d.name(),
                            d.n_clusters(), d.n_entries(), max_m, report.to_string());
    }
    if (!common.quiet) out << text;
    if (common.out != ".") {
        Outputs outputs(common, out);
        outputs.write("validation.txt", [&](std::ostream& f) { f << text; });
    }
    return ok ? exit_ok : exit_data;
}

int cmd_fit(const InputArgs& in, const ChainArgs& chain, const CommonArgs& common, std::ostream& out,
            std::ostream& err) {
    auto loaded = load(in);
    print_warnings(loaded.warnings, err);
    const ModelSpec spec(in.response, in.covariates, loaded.designs);
    const auto options = fit_options(chain);
    Outputs outputs(common, out);
    outputs.progress(fmt::format("fitting {} units with the {} engine", loaded.data.n_units(), chain.engine));
    const auto fit = fit_model(spec, loaded.data, options);
    if (fit.gibbs) print_warnings(fit.gibbs->warnings, err);

    std::vector<std::string> notes;
    if (loaded.dropped_units > 0) notes.push_back(fmt::format("{} incomplete unit(s) dropped", loaded.dropped_units));
    if (fit.gibbs) notes.push_back(fmt::format("seed {}", chain.seed));

    outputs.write("summary.csv", [&](std::ostream& f) { write_summary_csv(f, spec, fit); });
    if (fit.gibbs) {
        outputs.write("summary.jsonl", [&](std::ostream& f) { write_summary_jsonl(f, *fit.gibbs); });
        outputs.write("draws.csv", [&](std::ostream& f) { write_draws_csv(f, *fit.gibbs); });
    } else {
        outputs.write("estimates.json", [&](std::ostream& f) { write_estimates_json(f, spec, *fit.exact); });
    }
    outputs.write("report.txt", [&](std::ostream& f) { write_report(f, spec, loaded.data, fit, notes); });
    return exit_ok;
}

int cmd_simulate(const SimArgs& sim, std::uint64_t seed, const CommonArgs& common, std::ostream& out) {
    const auto cfg = sim_config(sim, seed);
    const auto data = simulate(cfg);
    Outputs outputs(common, out);
    outputs.write("data.csv", [&](std::ostream& f) { write_dataset_csv(f, data.data); });
    for (const auto& d : data.spec.classifications()) {
        outputs.write(fmt::format("memberships_{}.csv", d.name()),
                      [&](std::ostream& f) { write_memberships_csv(f, d, data.data.unit_ids()); });
    }
    outputs.write("truth.json", [&](std::ostream& f) {
        nlohmann::ordered_json j;
        j["seed"] = seed;
        j["n_units"] = cfg.n_units;
        j["beta"] = cfg.beta;
        j["sigma2_e"] = cfg.sigma2_e;
        for (std::size_t c = 0; c < cfg.classifications.size(); ++c) {
            const auto& d = data.spec.classifications()[c];
            nlohmann::ordered_json cj;
            cj["name"] = d.name();
            cj["clusters"] = d.n_clusters();
            cj["sigma2_u"] = cfg.classifications[c].sigma2_u;
            const auto& u = data.truth.u[c];
            cj["u"] = std::vector<double>(u.begin(), u.end());
            j["classifications"].push_back(cj);
        }
        f << j.dump(2) << '\n';
    });
    return exit_ok;
}

int cmd_bias(const SimArgs& sim, const ChainArgs& chain, std::size_t replicates, const CommonArgs& common,
             std::ostream& out) {
    const auto cfg = sim_config(sim, chain.seed);
    auto options = fit_options(chain);
    Outputs outputs(common, out);
    outputs.progress(fmt::format("bias experiment: {} replicate(s) of {} units", replicates, cfg.n_units));
    const auto result = run_bias_experiment(cfg, replicates, options);
    outputs.write("bias.csv", [&](std::ostream& f) { write_bias_table(f, result); });
    for (std::size_t c = 0; c < result.classifications.size(); ++c) {
        outputs.progress(fmt::format("{}: mean sigma2_u correct {:.5g}, collapsed {:.5g}, collapsed below in {:.1f}%",
                                     result.classifications[c], result.mean_correct[c], result.mean_collapsed[c],
                                     100.0 * result.fraction_collapsed_below[c]));
    }
    return exit_ok;
}

int cmd_sensitivity(const InputArgs& in, const ChainArgs& chain, const std::vector<std::string>& scheme_names,
                    const CommonArgs& common, std::ostream& out, std::ostream& err) {
    std::vector<WeightScheme> schemes;
    for (const auto& s : scheme_names) schemes.push_back(parse_scheme(s));
    if (schemes.size() < 2) throw Error(Errc::invalid_config, "give at least two schemes");
    auto loaded = load(in);
    print_warnings(loaded.warnings, err);
    const ModelSpec spec(in.response, in.covariates, loaded.designs);
    Outputs outputs(common, out);
    const auto fits = run_sensitivity(spec, loaded.data, schemes, fit_options(chain));
    outputs.write("sensitivity.csv", [&](std::ostream& f) { write_sensitivity_csv(f, fits); });
    outputs.write("report.txt", [&](std::ostream& f) {
        for (const auto& s : fits) {
            f << "=== scheme: " << s.scheme << " ===\n";
            write_report(f, s.spec, loaded.data, s.fit);
            f << '\n';
        }
    });
    return exit_ok;
}

} // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Multiple membership multilevel models: fitting, simulation and experiments", "mmfit"};
    app.require_subcommand(1);

    InputArgs in;
    ChainArgs chain;
    SimArgs sim;
    CommonArgs common;
    std::size_t replicates = 100;
    std::vector<std::string> schemes{"as-given", "equal"};

    auto* validate = app.add_subcommand("validate", "Check data and membership files");
    add_input_options(validate, in, true);
    add_common_options(validate, common);

    auto* fit = app.add_subcommand("fit", "Fit a multiple membership model");
    add_input_options(fit, in, true);
    add_chain_options(fit, chain);
    add_common_options(fit, common);

    auto* simulate_cmd = app.add_subcommand("simulate", "Simulate data and membership files");
    add_sim_options(simulate_cmd, sim);
    simulate_cmd->add_option("--seed", chain.seed, "Random seed")->capture_default_str();
    add_common_options(simulate_cmd, common);

    auto* bias = app.add_subcommand("bias-experiment", "Compare correct and collapsed-membership fits");
    add_sim_options(bias, sim);
    add_chain_options(bias, chain);
    bias->add_option("--replicates", replicates, "Number of simulated replicates")->capture_default_str();
    add_common_options(bias, common);

    auto* sens = app.add_subcommand("sensitivity", "Refit under several weighting schemes");
    add_input_options(sens, in, true);
    add_chain_options(sens, chain);
    sens->add_option("--schemes", schemes, "Weighting schemes: as-given, equal")->delimiter(',')->capture_default_str();
    add_common_options(sens, common);

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? exit_ok : exit_usage;
    }

    try {
        if (*validate) return cmd_validate(in, common, out, err);
        if (*fit) return cmd_fit(in, chain, common, out, err);
        if (*simulate_cmd) return cmd_simulate(sim, chain.seed, common, out);
        if (*bias) return cmd_bias(sim, chain, replicates, common, out);
        if (*sens) return cmd_sensitivity(in, chain, schemes, common, out, err);
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return static_cast<int>(e.category());
    } catch (const std::filesystem::filesystem_error& e) {
        err << "error: " << e.what() << '\n';
        return exit_data;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return exit_numeric;
    }
    return exit_usage;
}

} // namespace mmfit
