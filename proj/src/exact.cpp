#include "mmfit/exact.hpp"

#include "mmfit/error.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace mmfit {

namespace {

struct Factorization {
    Eigen::LLT<Eigen::MatrixXd> llt;
    double log_det = 0.0;
};

Factorization factorize(const Eigen::MatrixXd& V) {
    Factorization f;
    f.llt.compute(V);
    if (f.llt.info() != Eigen::Success) {
        throw Error(Errc::not_positive_definite, "marginal covariance is not positive definite");
    }
    f.log_det = 2.0 * f.llt.matrixLLT().diagonal().array().log().sum();
    if (!std::isfinite(f.log_det)) {
        throw Error(Errc::not_positive_definite, "marginal covariance is numerically singular");
    }
    return f;
}

void check_variances(const MarginalModel& m, const VarianceComponents& v) {
    if (v.sigma2_u.size() != m.n_classifications()) {
        throw Error(Errc::dimension, fmt::format("expected {} between-cluster variances, got {}",
                                                 m.n_classifications(), v.sigma2_u.size()));
    }
    for (double s : v.sigma2_u) {
        if (!(s > 0.0)) throw Error(Errc::invalid_config, fmt::format("variance {} is not positive", s));
    }
    if (!(v.sigma2_e > 0.0)) throw Error(Errc::invalid_config, fmt::format("variance {} is not positive", v.sigma2_e));
}

double loglik_from(const Factorization& f, const Eigen::VectorXd& r) {
    const double n = static_cast<double>(r.size());
    const double quad = f.llt.matrixL().solve(r).squaredNorm();
    return -0.5 * (n * std::log(2.0 * std::numbers::pi) + f.log_det + quad);
}

Eigen::VectorXd gls_from(const MarginalModel& m, const Factorization& f) {
    const Eigen::MatrixXd VinvX = f.llt.solve(m.X());
    const Eigen::MatrixXd A = m.X().transpose() * VinvX;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(A);
    if (ldlt.info() != Eigen::Success) throw Error(Errc::singular_design, "X'V^{-1}X is singular");
    return ldlt.solve(VinvX.transpose() * m.y());
}

VarianceComponents from_log(const Eigen::VectorXd& theta) {
    VarianceComponents v;
    const auto C = theta.size() - 1;
    for (Eigen::Index c = 0; c < C; ++c) v.sigma2_u.push_back(std::exp(theta[c]));
    v.sigma2_e = std::exp(theta[C]);
    return v;
}

// Profile quantities at fixed log-variances.
struct ProfilePoint {
    Eigen::VectorXd beta;
    double loglik = 0.0;
    Eigen::VectorXd gradient; // log-variance coordinates
    Eigen::MatrixXd fisher;   // expected information, log-variance coordinates
};

ProfilePoint profile_point(const MarginalModel& m, const Eigen::VectorXd& theta, bool with_fisher) {
    const auto v = from_log(theta);
    const auto f = factorize(m.covariance(v.sigma2_u, v.sigma2_e));
    ProfilePoint p;
    p.beta = gls_from(m, f);
    const Eigen::VectorXd r = m.y() - m.X() * p.beta;
    p.loglik = loglik_from(f, r);
    if (!with_fisher) return p;

    const auto C = static_cast<Eigen::Index>(m.n_classifications());
    const Eigen::VectorXd a = f.llt.solve(r);
    const Eigen::MatrixXd Vinv = f.llt.solve(Eigen::MatrixXd::Identity(r.size(), r.size()));
    std::vector<Eigen::MatrixXd> VinvW;
    for (const auto& W : m.W()) VinvW.push_back(Vinv * W);

    p.gradient.resize(C + 1);
    p.fisher.resize(C + 1, C + 1);
    for (Eigen::Index c = 0; c < C; ++c) {
        const auto& W = m.W()[static_cast<std::size_t>(c)];
        const double tr = (W.array() * VinvW[static_cast<std::size_t>(c)].array()).sum();
        p.gradient[c] = 0.5 * std::exp(theta[c]) * ((W.transpose() * a).squaredNorm() - tr);
        for (Eigen::Index d = 0; d <= c; ++d) {
            const double t = (W.transpose() * VinvW[static_cast<std::size_t>(d)]).squaredNorm();
            p.fisher(c, d) = p.fisher(d, c) = 0.5 * std::exp(theta[c] + theta[d]) * t;
        }
        p.fisher(c, C) = p.fisher(C, c) =
            0.5 * std::exp(theta[c] + theta[C]) * VinvW[static_cast<std::size_t>(c)].squaredNorm();
    }
    p.gradient[C] = 0.5 * std::exp(theta[C]) * (a.squaredNorm() - Vinv.trace());
    p.fisher(C, C) = 0.5 * std::exp(2.0 * theta[C]) * Vinv.squaredNorm();
    return p;
}

Eigen::VectorXd ols_start(const MarginalModel& m) {
    const auto C = static_cast<Eigen::Index>(m.n_classifications());
    const Eigen::VectorXd beta = m.X().colPivHouseholderQr().solve(m.y());
    const auto dof = std::max<Eigen::Index>(m.X().rows() - m.X().cols(), 1);
    double s2 = (m.y() - m.X() * beta).squaredNorm() / static_cast<double>(dof);
    if (!(s2 > 0.0) || !std::isfinite(s2)) s2 = 1.0;
    Eigen::VectorXd theta(C + 1);
    for (Eigen::Index c = 0; c < C; ++c) theta[c] = std::log(0.5 * s2 / static_cast<double>(C));
    theta[C] = std::log(0.5 * s2);
    return theta;
}

} // namespace

// -------------------------------------------------------------------------
// MarginalModel
// -------------------------------------------------------------------------

MarginalModel::MarginalModel(Eigen::MatrixXd X, std::vector<Eigen::MatrixXd> W, Eigen::VectorXd y,
                             std::vector<std::string> names)
    : X_(std::move(X)), W_(std::move(W)), y_(std::move(y)), names_(std::move(names)) {
    const auto n = y_.size();
    if (static_cast<std::size_t>(n) > kMaxDenseUnits) {
        throw Error(Errc::dimension,
                    fmt::format("{} units exceed the dense marginal-likelihood limit of {}", n, kMaxDenseUnits));
    }
    if (X_.rows() != n) throw Error(Errc::dimension, "X and y have different numbers of rows");
    if (W_.empty()) throw Error(Errc::dimension, "at least one weight matrix required");
    if (names_.empty()) {
        for (std::size_t c = 0; c < W_.size(); ++c) names_.push_back(fmt::format("c{}", c + 1));
    }
    if (names_.size() != W_.size()) throw Error(Errc::dimension, "one name per weight matrix required");
    for (const auto& W : W_) {
        if (W.rows() != n) throw Error(Errc::dimension, "weight matrix rows must match y");
        for (Eigen::Index i = 0; i < n; ++i) {
            if (std::abs(W.row(i).sum() - 1.0) > kRowSumTolerance) {
                throw Error(Errc::invalid_weights, fmt::format("weight matrix row {} does not sum to 1", i));
            }
        }
        WWt_.push_back(W * W.transpose());
    }
}

MarginalModel MarginalModel::from_spec(const ModelSpec& spec, const Dataset& data) {
    spec.check_against(data);
    std::vector<Eigen::MatrixXd> W;
    std::vector<std::string> names;
    for (const auto& d : spec.classifications()) {
        W.push_back(d.dense());
        names.push_back(d.name());
    }
    return MarginalModel(spec.design_matrix(data), std::move(W), spec.response_vector(data), std::move(names));
}

Eigen::MatrixXd MarginalModel::covariance(const std::vector<double>& sigma2_u, double sigma2_e) const {
    const auto n = y_.size();
    Eigen::MatrixXd V = sigma2_e * Eigen::MatrixXd::Identity(n, n);
    for (std::size_t c = 0; c < WWt_.size(); ++c) V += sigma2_u.at(c) * WWt_[c];
    return V;
}

// -------------------------------------------------------------------------
// Likelihood and gradient
// -------------------------------------------------------------------------

double log_likelihood(const MarginalModel& model, const Eigen::VectorXd& beta, const VarianceComponents& v) {
    check_variances(model, v);
    if (static_cast<std::size_t>(beta.size()) != model.n_beta()) throw Error(Errc::dimension, "beta length mismatch");
    const auto f = factorize(model.covariance(v.sigma2_u, v.sigma2_e));
    return loglik_from(f, model.y() - model.X() * beta);
}

LikelihoodGradient log_likelihood_gradient(const MarginalModel& model, const Eigen::VectorXd& beta,
                                           const VarianceComponents& v) {
    check_variances(model, v);
    const auto f = factorize(model.covariance(v.sigma2_u, v.sigma2_e));
    const Eigen::VectorXd r = model.y() - model.X() * beta;
    const Eigen::VectorXd a = f.llt.solve(r);
    const auto C = static_cast<Eigen::Index>(model.n_classifications());

    LikelihoodGradient g;
    g.beta = model.X().transpose() * a;
    g.log_variance.resize(C + 1);
    // dl/dsigma2_k = 0.5 (a' G_k a - tr(V^{-1} G_k)), times sigma2_k for the log scale.
    for (Eigen::Index c = 0; c < C; ++c) {
        const auto& W = model.W()[static_cast<std::size_t>(c)];
        const double tr = (W.array() * f.llt.solve(W).array()).sum();
        g.log_variance[c] = 0.5 * v.sigma2_u[static_cast<std::size_t>(c)] * ((W.transpose() * a).squaredNorm() - tr);
    }
    const Eigen::MatrixXd Linv = f.llt.matrixL().solve(Eigen::MatrixXd::Identity(r.size(), r.size()));
    g.log_variance[C] = 0.5 * v.sigma2_e * (a.squaredNorm() - Linv.squaredNorm());
    return g;
}

Eigen::VectorXd gls_beta(const MarginalModel& model, const VarianceComponents& v) {
    check_variances(model, v);
    return gls_from(model, factorize(model.covariance(v.sigma2_u, v.sigma2_e)));
}

double gradient_check(const MarginalModel& model, const Eigen::VectorXd& beta, const VarianceComponents& v,
                      double step) {
    const auto g = log_likelihood_gradient(model, beta, v);
    double worst = 0.0;
    auto compare = [&](double analytic, double fd) {
        worst = std::max(worst, std::abs(analytic - fd) / std::max(1.0, std::abs(analytic)));
    };
    for (Eigen::Index k = 0; k < beta.size(); ++k) {
        Eigen::VectorXd up = beta, down = beta;
        up[k] += step;
        down[k] -= step;
        compare(g.beta[k], (log_likelihood(model, up, v) - log_likelihood(model, down, v)) / (2.0 * step));
    }
    const auto C = v.sigma2_u.size();
    for (std::size_t k = 0; k <= C; ++k) {
        VarianceComponents up = v, down = v;
        double& u = k < C ? up.sigma2_u[k] : up.sigma2_e;
        double& d = k < C ? down.sigma2_u[k] : down.sigma2_e;
        u *= std::exp(step);
        d *= std::exp(-step);
        compare(g.log_variance[static_cast<Eigen::Index>(k)],
                (log_likelihood(model, beta, up) - log_likelihood(model, beta, down)) / (2.0 * step));
    }
    return worst;
}

// -------------------------------------------------------------------------
// Maximum likelihood
// -------------------------------------------------------------------------

MlFit fit_ml(const MarginalModel& model, const MlOptions& options) {
    if (model.n_units() <= model.n_beta()) {
        throw Error(Errc::singular_design, "maximum likelihood needs more units than fixed effects");
    }
    const auto K = static_cast<Eigen::Index>(model.n_classifications() + 1);
    Eigen::VectorXd theta = ols_start(model);
    std::vector<bool> boundary(static_cast<std::size_t>(K), false);

    MlFit fit;
    auto point = profile_point(model, theta, true);
    double previous = -std::numeric_limits<double>::infinity();

    for (std::size_t iter = 1; iter <= options.max_iterations; ++iter) {
        std::vector<Eigen::Index> active;
        for (Eigen::Index k = 0; k < K; ++k) {
            if (!boundary[static_cast<std::size_t>(k)]) active.push_back(k);
        }
        Eigen::VectorXd g(static_cast<Eigen::Index>(active.size()));
        Eigen::MatrixXd F(g.size(), g.size());
        for (Eigen::Index a = 0; a < g.size(); ++a) {
            g[a] = point.gradient[active[static_cast<std::size_t>(a)]];
            for (Eigen::Index b = 0; b < g.size(); ++b) {
                F(a, b) = point.fisher(active[static_cast<std::size_t>(a)], active[static_cast<std::size_t>(b)]);
            }
        }

        fit.iterations = iter;
        if (std::abs(point.loglik - previous) < options.loglik_tolerance && g.norm() < options.gradient_tolerance) {
            break;
        }
        if (g.size() == 0) break;

        // Small ridge keeps the scoring step defined when a variance is
        // drifting towards zero and its information vanishes.
        Eigen::MatrixXd Freg = F;
        Freg.diagonal().array() += 1e-12 * (1.0 + F.diagonal().array().abs());
        Eigen::VectorXd delta = Freg.ldlt().solve(g);
        const double max_step = delta.cwiseAbs().maxCoeff();
        if (max_step > 10.0) delta *= 10.0 / max_step;

        double t = 1.0;
        Eigen::VectorXd trial = theta;
        ProfilePoint next;
        bool improved = false;
        for (int halving = 0; halving < 40; ++halving, t *= 0.5) {
            trial = theta;
            for (Eigen::Index a = 0; a < delta.size(); ++a) {
                auto k = active[static_cast<std::size_t>(a)];
                trial[k] = std::max(theta[k] + t * delta[a], options.boundary_log_variance);
            }
            try {
                next = profile_point(model, trial, false);
            } catch (const Error&) {
                continue;
            }
            if (next.loglik >= point.loglik) {
                improved = true;
                break;
            }
        }
        previous = point.loglik;
        if (!improved) {
            if (g.norm() < options.gradient_tolerance) break;
            // Scoring direction failed; fall back to the gradient.
            for (Eigen::Index a = 0; a < g.size(); ++a) {
                auto k = active[static_cast<std::size_t>(a)];
                trial[k] = std::max(theta[k] + 1e-3 * g[a], options.boundary_log_variance);
            }
        }
        theta = trial;
        for (Eigen::Index k = 0; k < K; ++k) {
            if (theta[k] <= options.boundary_log_variance) boundary[static_cast<std::size_t>(k)] = true;
        }
        point = profile_point(model, theta, true);
        fit.trace.push_back(point.loglik);

        if (iter == options.max_iterations) {
            std::string tail;
            const auto from = fit.trace.size() > 5 ? fit.trace.size() - 5 : 0;
            for (auto k = from; k < fit.trace.size(); ++k) tail += fmt::format(" {:.10g}", fit.trace[k]);
            throw Error(Errc::convergence,
                        fmt::format("maximum likelihood did not converge in {} iterations; last log-likelihoods:{}",
                                    options.max_iterations, tail));
        }
    }

    fit.beta = point.beta;
    fit.variances = from_log(theta);
    fit.log_likelihood = point.loglik;
    fit.at_boundary = boundary;
    return fit;
}

} // namespace mmfit
