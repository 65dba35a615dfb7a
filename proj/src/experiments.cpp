#include "mmfit/experiments.hpp"

#include "mmfit/error.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <ostream>
#include <thread>

namespace mmfit {

Eigen::VectorXd ModelFit::beta() const {
    if (exact) return exact->beta;
    Eigen::VectorXd b(static_cast<Eigen::Index>(gibbs->parameters.size()));
    Eigen::Index n = 0;
    for (std::size_t k = 0; k < gibbs->parameters.size(); ++k) {
        if (gibbs->parameters[k].kind == ParameterInfo::Kind::beta) b[n++] = gibbs->summaries[k].stats.mean;
    }
    return b.head(n);
}

std::vector<double> ModelFit::sigma2_u() const {
    if (exact) return exact->variances.sigma2_u;
    std::vector<double> out;
    for (std::size_t k = 0; k < gibbs->parameters.size(); ++k) {
        if (gibbs->parameters[k].kind == ParameterInfo::Kind::sigma2_u) out.push_back(gibbs->summaries[k].stats.mean);
    }
    return out;
}

double ModelFit::sigma2_e() const {
    if (exact) return exact->variances.sigma2_e;
    return gibbs->summary("sigma2_e").stats.mean;
}

ModelFit fit_model(const ModelSpec& spec, const Dataset& data, const FitOptions& options) {
    ModelFit fit;
    fit.engine = options.engine;
    if (options.engine == Engine::gibbs) {
        fit.gibbs = run_gibbs(spec, data, options.prior, options.chain);
    } else {
        fit.exact = fit_ml(MarginalModel::from_spec(spec, data), options.ml);
    }
    return fit;
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn, std::size_t workers) {
    if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
    workers = std::min(workers, std::max<std::size_t>(n, 1));
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    auto work = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                fn(i);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
            }
        }
    };
    if (workers <= 1) {
        work();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    }
    if (first_error) std::rethrow_exception(first_error);
}

// -------------------------------------------------------------------------
// Ignoring multiple membership
// -------------------------------------------------------------------------

BiasExperiment run_bias_experiment(const SimConfig& base, std::size_t replicates, const FitOptions& options) {
    validate_config(base);
    if (replicates < 1) throw Error(Errc::invalid_config, "at least one replicate required");
    BiasExperiment out;
    for (const auto& c : base.classifications) out.classifications.push_back(c.name);
    out.rows.resize(replicates);

    parallel_for(replicates, [&](std::size_t r) {
        BiasRow& row = out.rows[r];
        row.replicate = r + 1;
        try {
            const auto sim = simulate(replicate_config(base, r));
            row.correct = fit_model(sim.spec, sim.data, options).sigma2_u();
            std::vector<MembershipDesign> collapsed;
            for (const auto& d : sim.spec.classifications()) collapsed.push_back(collapse_to_single_membership(d));
            row.collapsed = fit_model(sim.spec.with_classifications(std::move(collapsed)), sim.data, options).sigma2_u();
        } catch (const std::exception& e) {
            row.error = e.what();
        }
    });

    const std::size_t C = out.classifications.size();
    out.mean_correct.assign(C, 0.0);
    out.mean_collapsed.assign(C, 0.0);
    out.fraction_collapsed_below.assign(C, 0.0);
    for (const auto& row : out.rows) {
        if (!row.ok()) continue;
        ++out.n_ok;
        for (std::size_t c = 0; c < C; ++c) {
            out.mean_correct[c] += row.correct[c];
            out.mean_collapsed[c] += row.collapsed[c];
            if (row.collapsed[c] < row.correct[c]) out.fraction_collapsed_below[c] += 1.0;
        }
    }
    for (std::size_t c = 0; c < C; ++c) {
        const double n = out.n_ok > 0 ? static_cast<double>(out.n_ok) : std::nan("");
        out.mean_correct[c] /= n;
        out.mean_collapsed[c] /= n;
        out.fraction_collapsed_below[c] /= n;
    }
    return out;
}

void write_bias_table(std::ostream& out, const BiasExperiment& e) {
    out << "replicate";
    for (const auto& name : e.classifications) {
        out << fmt::format(",sigma2_u_correct[{0}],sigma2_u_collapsed[{0}],collapsed_below[{0}]", name);
    }
    out << ",status\n";
    for (const auto& row : e.rows) {
        out << row.replicate;
        for (std::size_t c = 0; c < e.classifications.size(); ++c) {
            if (row.ok()) {
                out << fmt::format(",{},{},{}", row.correct[c], row.collapsed[c],
                                   row.collapsed[c] < row.correct[c] ? 1 : 0);
            } else {
                out << ",NA,NA,NA";
            }
        }
        std::string status = row.ok() ? "ok" : "error: " + row.error;
        std::replace(status.begin(), status.end(), ',', ';');
        std::replace(status.begin(), status.end(), '\n', ' ');
        out << ',' << status << '\n';
    }
    out << "mean";
    for (std::size_t c = 0; c < e.classifications.size(); ++c) {
        out << fmt::format(",{},{},{}", e.mean_correct[c], e.mean_collapsed[c], e.fraction_collapsed_below[c]);
    }
    out << fmt::format(",{}/{} ok\n", e.n_ok, e.rows.size());
}

// -------------------------------------------------------------------------
// Weighting-scheme sensitivity
// -------------------------------------------------------------------------

std::string scheme_name(WeightScheme scheme) { return scheme == WeightScheme::keep ? "as-given" : "equal"; }

WeightScheme parse_scheme(const std::string& name) {
    if (name == "as-given" || name == "keep") return WeightScheme::keep;
    if (name == "equal") return WeightScheme::equal;
    throw Error(Errc::invalid_config, fmt::format("unknown weighting scheme '{}'", name));
}

namespace {

ModelSpec reweighted(const ModelSpec& spec, WeightScheme scheme) {
    std::vector<MembershipDesign> designs;
    for (const auto& d : spec.classifications()) designs.push_back(reweight_scheme(d, scheme));
    return spec.with_classifications(std::move(designs));
}

} // namespace

std::vector<SchemeFit> run_sensitivity(const ModelSpec& spec, const Dataset& data,
                                       const std::vector<WeightScheme>& schemes, const FitOptions& options) {
    if (schemes.empty()) throw Error(Errc::invalid_config, "no weighting schemes given");
    std::vector<SchemeFit> out;
    for (auto scheme : schemes) {
        auto s = reweighted(spec, scheme);
        auto fit = fit_model(s, data, options);
        out.push_back({scheme_name(scheme), std::move(s), std::move(fit)});
    }
    return out;
}

SensitivityExperiment run_sensitivity_experiment(const SimConfig& base, std::size_t replicates,
                                                 const std::vector<WeightScheme>& schemes,
                                                 const FitOptions& options) {
    validate_config(base);
    SensitivityExperiment out;
    out.schemes = schemes;
    out.truth = base.classifications.front().sigma2_u;
    out.estimates.assign(replicates, std::vector<double>(schemes.size(), std::nan("")));
    parallel_for(replicates, [&](std::size_t r) {
        const auto sim = simulate(replicate_config(base, r));
        for (std::size_t s = 0; s < schemes.size(); ++s) {
            out.estimates[r][s] = fit_model(reweighted(sim.spec, schemes[s]), sim.data, options).sigma2_u().front();
        }
    });
    out.mean_abs_error.assign(schemes.size(), 0.0);
    for (const auto& row : out.estimates) {
        for (std::size_t s = 0; s < schemes.size(); ++s) out.mean_abs_error[s] += std::abs(row[s] - out.truth);
    }
    for (auto& e : out.mean_abs_error) e /= static_cast<double>(replicates);
    return out;
}

} // namespace mmfit
