#include "mmfit/gibbs.hpp"

#include "mmfit/error.hpp"
#include "mmfit/random.hpp"

#include <fmt/format.h>

#include <cmath>
#include <exception>
#include <thread>

namespace mmfit {

NormalParams cluster_effect_conditional(double sigma2_u, double sigma2_e, double sum_w2, double sum_w_resid) {
    const double precision = 1.0 / sigma2_u + sum_w2 / sigma2_e;
    return {sum_w_resid / sigma2_e / precision, 1.0 / precision};
}

InvGammaParams variance_conditional(const PriorConfig& prior, std::size_t count, double sum_squares) {
    return {prior.shape + 0.5 * static_cast<double>(count), prior.rate + 0.5 * sum_squares};
}

// -------------------------------------------------------------------------
// GibbsProblem
// -------------------------------------------------------------------------

GibbsProblem::GibbsProblem(ModelSpec spec, const Dataset& data) : spec_(std::move(spec)) {
    spec_.check_against(data);
    X_ = spec_.design_matrix(data);
    y_ = spec_.response_vector(data);
    if (X_.rows() < X_.cols()) {
        throw Error(Errc::singular_design,
                    fmt::format("{} units cannot identify {} fixed effects", X_.rows(), X_.cols()));
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X_);
    if (qr.rank() < X_.cols()) {
        throw Error(Errc::singular_design,
                    fmt::format("fixed-effect design has rank {} < {} columns", qr.rank(), X_.cols()));
    }
    xtx_ = X_.transpose() * X_;
    xtx_llt_.compute(xtx_);
    if (xtx_llt_.info() != Eigen::Success) throw Error(Errc::singular_design, "X'X is not positive definite");

    for (const auto& design : spec_.classifications()) {
        std::vector<std::vector<Member>> members(design.n_clusters());
        std::vector<double> sum_w2(design.n_clusters(), 0.0);
        for (std::size_t i = 0; i < design.n_units(); ++i) {
            for (const auto& e : design.row(i)) {
                members[e.cluster].push_back({i, e.weight});
                sum_w2[e.cluster] += e.weight * e.weight;
            }
        }
        members_.push_back(std::move(members));
        sum_w2_.push_back(std::move(sum_w2));
    }
}

MvNormalParams GibbsProblem::beta_conditional(const Eigen::VectorXd& xtr, double sigma2_e) const {
    MvNormalParams out;
    out.mean = xtx_llt_.solve(xtr);
    out.covariance = sigma2_e * xtx_llt_.solve(Eigen::MatrixXd::Identity(X_.cols(), X_.cols()));
    return out;
}

Parameters GibbsProblem::initial_state() const {
    Parameters p;
    p.beta = xtx_llt_.solve(X_.transpose() * y_);
    const double rss = (y_ - X_ * p.beta).squaredNorm();
    const auto dof = std::max<Eigen::Index>(X_.rows() - X_.cols(), 1);
    double s2 = rss / static_cast<double>(dof);
    if (!(s2 > 0.0) || !std::isfinite(s2)) s2 = 1.0;
    const double C = static_cast<double>(members_.size());
    p.sigma2_e = 0.5 * s2;
    for (std::size_t c = 0; c < members_.size(); ++c) {
        p.sigma2_u.push_back(0.5 * s2 / C);
        p.u.push_back(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(members_[c].size())));
    }
    return p;
}

Eigen::VectorXd GibbsProblem::residual(const Parameters& params) const {
    check_parameters(spec_, params);
    Eigen::VectorXd r = y_ - X_ * params.beta;
    const auto& cls = spec_.classifications();
    for (std::size_t c = 0; c < cls.size(); ++c) r -= random_contribution(cls[c], params.u[c]);
    return r;
}

// -------------------------------------------------------------------------
// Full conditionals
// -------------------------------------------------------------------------

MvNormalParams full_conditional_beta(const GibbsProblem& problem, const Parameters& state) {
    // r = y - sum_c W_c u_c = residual + X beta
    const Eigen::VectorXd r = problem.residual(state) + problem.X() * state.beta;
    return problem.beta_conditional(problem.X().transpose() * r, state.sigma2_e);
}

NormalParams full_conditional_u(const GibbsProblem& problem, const Parameters& state, std::size_t classification,
                                std::size_t cluster) {
    const Eigen::VectorXd e = problem.residual(state);
    const double uj = state.u.at(classification)[static_cast<Eigen::Index>(cluster)];
    double sum_wr = 0.0;
    for (const auto& m : problem.members(classification, cluster)) {
        sum_wr += m.weight * (e[static_cast<Eigen::Index>(m.unit)] + m.weight * uj);
    }
    return cluster_effect_conditional(state.sigma2_u[classification], state.sigma2_e,
                                      problem.sum_w2(classification, cluster), sum_wr);
}

VarianceConditionals full_conditional_variances(const GibbsProblem& problem, const Parameters& state,
                                                const PriorConfig& prior) {
    VarianceConditionals out;
    for (std::size_t c = 0; c < problem.n_classifications(); ++c) {
        out.sigma2_u.push_back(variance_conditional(prior, problem.n_clusters(c), state.u[c].squaredNorm()));
    }
    out.sigma2_e = variance_conditional(prior, problem.n_units(), problem.residual(state).squaredNorm());
    return out;
}

// -------------------------------------------------------------------------
// Parameter bookkeeping
// -------------------------------------------------------------------------

std::vector<ParameterInfo> parameter_layout(const ModelSpec& spec, bool include_u) {
    using Kind = ParameterInfo::Kind;
    std::vector<ParameterInfo> out;
    out.push_back({"beta_0", "(intercept)", Kind::beta, 0, 0});
    for (std::size_t k = 0; k < spec.fixed_covariates().size(); ++k) {
        out.push_back({fmt::format("beta_{}", k + 1), spec.fixed_covariates()[k], Kind::beta, 0, k + 1});
    }
    const auto& cls = spec.classifications();
    for (std::size_t c = 0; c < cls.size(); ++c) {
        out.push_back({fmt::format("sigma2_u[{}]", cls[c].name()), cls[c].name(), Kind::sigma2_u, c, 0});
    }
    out.push_back({"sigma2_e", "(residual)", Kind::sigma2_e, 0, 0});
    if (include_u) {
        for (std::size_t c = 0; c < cls.size(); ++c) {
            const auto& labels = cls[c].classification().labels();
            for (std::size_t j = 0; j < labels.size(); ++j) {
                out.push_back({fmt::format("u[{}][{}]", cls[c].name(), labels[j]), cls[c].name(), Kind::u, c, j});
            }
        }
    }
    return out;
}

std::size_t FitResult::total_draws() const {
    std::size_t n = 0;
    for (const auto& c : chains) n += static_cast<std::size_t>(c.values.rows());
    return n;
}

std::size_t FitResult::index_of(const std::string& name) const {
    for (std::size_t k = 0; k < parameters.size(); ++k) {
        if (parameters[k].name == name) return k;
    }
    throw Error(Errc::dimension, fmt::format("no parameter named '{}'", name));
}

std::vector<std::vector<double>> FitResult::draws(std::size_t parameter) const {
    std::vector<std::vector<double>> out;
    for (const auto& c : chains) {
        const auto col = c.values.col(static_cast<Eigen::Index>(parameter));
        out.emplace_back(col.begin(), col.end());
    }
    return out;
}

// -------------------------------------------------------------------------
// Sampler
// -------------------------------------------------------------------------

namespace {

class Chain {
public:
    Chain(const GibbsProblem& problem, const PriorConfig& prior, std::uint64_t seed, std::size_t chain_index)
        : problem_(problem), prior_(prior), rng_(seed, 0xC4A1ULL, chain_index), chain_index_(chain_index),
          state_(problem.initial_state()) {
        refresh_residual();
    }

    void sweep(std::size_t iteration) {
        if (iteration % 64 == 0) refresh_residual();
        update_beta();
        for (std::size_t c = 0; c < problem_.n_classifications(); ++c) update_u(c);
        update_variances();
        check_finite(iteration);
    }

    const Parameters& state() const noexcept { return state_; }

private:
    void refresh_residual() { resid_ = problem_.residual(state_); }

    void update_beta() {
        const auto& X = problem_.X();
        const Eigen::VectorXd xtr = X.transpose() * resid_ + problem_.xtx() * state_.beta;
        const Eigen::VectorXd mean = problem_.xtx_llt().solve(xtr);
        Eigen::VectorXd z(mean.size());
        for (auto& v : z) v = rng_.normal();
        // Cov = sigma2_e (LL')^{-1}  =>  draw = mean + sqrt(sigma2_e) L^{-T} z
        const Eigen::VectorXd noise = problem_.xtx_llt().matrixU().solve(z);
        const Eigen::VectorXd beta = mean + std::sqrt(state_.sigma2_e) * noise;
        resid_ -= X * (beta - state_.beta);
        state_.beta = beta;
    }

    void update_u(std::size_t c) {
        auto& u = state_.u[c];
        const double sigma2_u = state_.sigma2_u[c];
        for (std::size_t j = 0; j < problem_.n_clusters(c); ++j) {
            const auto members = problem_.members(c, j);
            const auto jj = static_cast<Eigen::Index>(j);
            double sum_we = 0.0;
            for (const auto& m : members) sum_we += m.weight * resid_[static_cast<Eigen::Index>(m.unit)];
            const double sum_w2 = problem_.sum_w2(c, j);
            const auto cond = cluster_effect_conditional(sigma2_u, state_.sigma2_e, sum_w2, sum_we + u[jj] * sum_w2);
            const double draw = rng_.normal(cond.mean, std::sqrt(cond.variance));
            const double delta = draw - u[jj];
            for (const auto& m : members) resid_[static_cast<Eigen::Index>(m.unit)] -= m.weight * delta;
            u[jj] = draw;
        }
    }

    void update_variances() {
        for (std::size_t c = 0; c < problem_.n_classifications(); ++c) {
            const auto p = variance_conditional(prior_, problem_.n_clusters(c), state_.u[c].squaredNorm());
            state_.sigma2_u[c] = rng_.inverse_gamma(p.shape, p.rate);
        }
        const auto p = variance_conditional(prior_, problem_.n_units(), resid_.squaredNorm());
        state_.sigma2_e = rng_.inverse_gamma(p.shape, p.rate);
    }

    void check_finite(std::size_t iteration) const {
        bool ok = state_.beta.allFinite() && std::isfinite(state_.sigma2_e) && state_.sigma2_e > 0.0;
        for (std::size_t c = 0; ok && c < state_.u.size(); ++c) {
            ok = state_.u[c].allFinite() && std::isfinite(state_.sigma2_u[c]) && state_.sigma2_u[c] > 0.0;
        }
        if (!ok) {
            throw Error(Errc::divergence,
                        fmt::format("chain {}: non-finite or non-positive state at iteration {}", chain_index_ + 1,
                                    iteration));
        }
    }

    const GibbsProblem& problem_;
    PriorConfig prior_;
    RandomStream rng_;
    std::size_t chain_index_;
    Parameters state_;
    Eigen::VectorXd resid_;
};

void record(const Parameters& s, const std::vector<ParameterInfo>& layout,
            Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>> row) {
    using Kind = ParameterInfo::Kind;
    for (std::size_t k = 0; k < layout.size(); ++k) {
        const auto& p = layout[k];
        double v = 0.0;
        switch (p.kind) {
        case Kind::beta: v = s.beta[static_cast<Eigen::Index>(p.index)]; break;
        case Kind::sigma2_u: v = s.sigma2_u[p.classification]; break;
        case Kind::sigma2_e: v = s.sigma2_e; break;
        case Kind::u: v = s.u[p.classification][static_cast<Eigen::Index>(p.index)]; break;
        }
        row[static_cast<Eigen::Index>(k)] = v;
    }
}

ChainDraws run_chain(const GibbsProblem& problem, const PriorConfig& prior, const ChainConfig& cfg,
                     const std::vector<ParameterInfo>& layout, std::size_t chain_index) {
    Chain chain(problem, prior, cfg.seed, chain_index);
    const std::size_t stored = cfg.iterations / cfg.thin;
    ChainDraws out;
    out.values.resize(static_cast<Eigen::Index>(stored), static_cast<Eigen::Index>(layout.size()));
    out.iterations.reserve(stored);
    const std::size_t total = cfg.burn_in + cfg.iterations;
    for (std::size_t t = 1; t <= total; ++t) {
        chain.sweep(t);
        if (t > cfg.burn_in && (t - cfg.burn_in) % cfg.thin == 0) {
            record(chain.state(), layout, out.values.row(static_cast<Eigen::Index>(out.iterations.size())));
            out.iterations.push_back(t);
        }
    }
    return out;
}

VariancePartition variance_partition(const GibbsProblem& problem, const FitResult& fit) {
    const auto& cls = problem.spec().classifications();
    const std::size_t C = cls.size();
    const std::size_t e_col = fit.index_of("sigma2_e");
    VariancePartition vp;
    std::vector<double> mean_u(C);
    std::vector<Eigen::Index> u_cols(C);
    for (std::size_t c = 0; c < C; ++c) {
        u_cols[c] = static_cast<Eigen::Index>(fit.index_of(fmt::format("sigma2_u[{}]", cls[c].name())));
    }
    for (std::size_t c = 0; c < C; ++c) {
        vp.classifications.push_back(cls[c].name());
        const auto col = u_cols[c];
        mean_u[c] = fit.summaries[static_cast<std::size_t>(col)].stats.mean;
        std::vector<std::vector<double>> chains;
        for (const auto& ch : fit.chains) {
            std::vector<double> vpc(static_cast<std::size_t>(ch.values.rows()));
            for (Eigen::Index r = 0; r < ch.values.rows(); ++r) {
                double total = ch.values(r, static_cast<Eigen::Index>(e_col));
                for (std::size_t k = 0; k < C; ++k) total += ch.values(r, u_cols[k]);
                vpc[static_cast<std::size_t>(r)] = ch.values(r, col) / total;
            }
            chains.push_back(std::move(vpc));
        }
        vp.vpc.push_back(summarize(chains));
    }
    const double mean_e = fit.summaries[e_col].stats.mean;
    vp.weighted_vpc.assign(C, std::vector<double>(problem.n_units()));
    for (std::size_t i = 0; i < problem.n_units(); ++i) {
        std::vector<double> part(C);
        double total = mean_e;
        for (std::size_t c = 0; c < C; ++c) {
            double s = 0.0;
            for (const auto& e : cls[c].row(i)) s += e.weight * e.weight;
            part[c] = mean_u[c] * s;
            total += part[c];
        }
        for (std::size_t c = 0; c < C; ++c) vp.weighted_vpc[c][i] = part[c] / total;
    }
    return vp;
}

} // namespace

FitResult run_gibbs(const ModelSpec& spec, const Dataset& data, const PriorConfig& prior,
                    const ChainConfig& chain_cfg) {
    if (chain_cfg.iterations < 1 || chain_cfg.thin < 1 || chain_cfg.n_chains < 1) {
        throw Error(Errc::invalid_config, "iterations, thin and chains must all be at least 1");
    }
    if (chain_cfg.iterations < chain_cfg.thin) {
        throw Error(Errc::invalid_config, "thin exceeds iterations; no draws would be stored");
    }
    if (!(prior.shape > 0.0) || !(prior.rate > 0.0)) {
        throw Error(Errc::invalid_config, "inverse-gamma prior needs shape > 0 and rate > 0");
    }

    const GibbsProblem problem(spec, data);
    FitResult fit;
    fit.parameters = parameter_layout(spec, chain_cfg.store_u);

    fit.chains.resize(chain_cfg.n_chains);
    std::vector<std::exception_ptr> errors(chain_cfg.n_chains);
    {
        std::vector<std::jthread> workers;
        for (std::size_t k = 0; k < chain_cfg.n_chains; ++k) {
            workers.emplace_back([&, k] {
                try {
                    fit.chains[k] = run_chain(problem, prior, chain_cfg, fit.parameters, k);
                } catch (...) {
                    errors[k] = std::current_exception();
                }
            });
        }
    }
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }

    for (std::size_t k = 0; k < fit.parameters.size(); ++k) {
        const auto& info = fit.parameters[k];
        auto stats = summarize(fit.draws(k));
        if (stats.constant) fit.warnings.push_back(fmt::format("{}: constant chain, ESS set to draw count", info.name));
        if (std::isfinite(stats.rhat) && stats.rhat > 1.1) {
            fit.warnings.push_back(fmt::format("{}: split R-hat {:.3f} > 1.1", info.name, stats.rhat));
        }
        fit.summaries.push_back({info.name, info.term, stats});
    }
    fit.partition = variance_partition(problem, fit);
    return fit;
}

} // namespace mmfit
