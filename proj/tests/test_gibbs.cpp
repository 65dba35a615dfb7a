#include "helpers.hpp"

#include "oracles.hpp"

#include "mmfit/gibbs.hpp"
#include "mmfit/random.hpp"
#include "mmfit/simulate.hpp"

#include <cmath>

using namespace mmfit;
using testing::error_code;

namespace {

// |a - b| relative to max(|b|, scale); scale keeps means near zero meaningful.
bool close(double a, double b, double tol, double scale = 0.0) {
    return std::abs(a - b) <= tol * std::max(std::abs(b), scale);
}

Parameters random_state(std::mt19937_64& rng, const oracle::DenseInstance& inst) {
    std::normal_distribution<double> g;
    std::uniform_real_distribution<double> v(0.3, 2.0);
    Parameters p;
    p.beta.resize(inst.X.cols());
    for (auto& b : p.beta) b = g(rng);
    p.sigma2_e = v(rng);
    for (const auto& W : inst.W) {
        p.sigma2_u.push_back(v(rng));
        Eigen::VectorXd u(W.cols());
        for (auto& x : u) x = g(rng);
        p.u.push_back(u);
    }
    return p;
}

Eigen::VectorXd stack(const Parameters& p) {
    Eigen::Index size = p.beta.size();
    for (const auto& u : p.u) size += u.size();
    Eigen::VectorXd out(size);
    out.head(p.beta.size()) = p.beta;
    Eigen::Index at = p.beta.size();
    for (const auto& u : p.u) {
        out.segment(at, u.size()) = u;
        at += u.size();
    }
    return out;
}

// Drops the coordinates in idx from v.
Eigen::VectorXd without(const Eigen::VectorXd& v, const std::vector<int>& idx) {
    std::vector<double> keep;
    for (int k = 0; k < v.size(); ++k) {
        if (std::find(idx.begin(), idx.end(), k) == idx.end()) keep.push_back(v(k));
    }
    return Eigen::Map<Eigen::VectorXd>(keep.data(), static_cast<Eigen::Index>(keep.size()));
}

} // namespace

TEST_CASE("beta full conditional") {
    SUBCASE("forced arithmetic: y = (0, 2), intercept only") {
        const auto d = testing::design(1, {{{0, 1.0}}, {{0, 1.0}}});
        Dataset data(testing::unit_ids(2), {{"y", {0.0, 2.0}}});
        GibbsProblem problem(ModelSpec("y", {}, {d}), data);
        Parameters p{Eigen::VectorXd::Zero(1), 1.0, {1.0}, {Eigen::VectorXd::Zero(1)}};
        const auto c = full_conditional_beta(problem, p);
        CHECK(c.mean(0) == doctest::Approx(1.0).epsilon(1e-15));
        CHECK(c.covariance(0, 0) == doctest::Approx(0.5).epsilon(1e-15));
    }
    SUBCASE("intercept only, zero effects: mean ybar and variance s2e / n") {
        std::mt19937_64 rng(1);
        auto inst = oracle::random_instance(rng, 6, {3}, 0, 2);
        auto lib = oracle::to_library(inst);
        GibbsProblem problem(lib.spec, lib.data);
        Parameters p{Eigen::VectorXd::Zero(1), 1.7, {1.0}, {Eigen::VectorXd::Zero(3)}};
        const auto c = full_conditional_beta(problem, p);
        CHECK(c.mean(0) == doctest::Approx(inst.y.mean()).epsilon(1e-12));
        CHECK(c.covariance(0, 0) == doctest::Approx(1.7 / 6).epsilon(1e-12));
    }
    SUBCASE("matches conditioning the dense joint Gaussian") {
        std::mt19937_64 rng(2);
        for (int trial = 0; trial < 200; ++trial) {
            const int n = 4 + static_cast<int>(rng() % 3);
            const std::vector<int> clusters = trial % 2 ? std::vector<int>{3} : std::vector<int>{2, 2};
            const auto inst = oracle::random_instance(rng, n, clusters, 1, 3);
            const auto lib = oracle::to_library(inst);
            const auto state = random_state(rng, inst);
            GibbsProblem problem(lib.spec, lib.data);
            const auto got = full_conditional_beta(problem, state);

            const auto joint = oracle::joint_location_posterior(inst, state.sigma2_u, state.sigma2_e);
            const std::vector<int> idx{0, 1};
            const auto want = oracle::condition(joint, idx, without(stack(state), idx));
            for (int k = 0; k < 2; ++k) {
                const double sd = std::sqrt(want.covariance(k, k));
                CHECK(close(got.mean(k), want.mean(k), 1e-4, sd));
                for (int l = 0; l < 2; ++l) {
                    CHECK(close(got.covariance(k, l), want.covariance(k, l), 1e-4, want.covariance(k, k)));
                }
            }
        }
    }
    SUBCASE("rank-deficient X") {
        const auto d = testing::design(1, {{{0, 1.0}}, {{0, 1.0}}, {{0, 1.0}}});
        Dataset data(testing::unit_ids(3), {{"x", {1, 1, 1}}, {"y", {0, 1, 2}}});
        CHECK(error_code([&] { GibbsProblem(ModelSpec("y", {"x"}, {d}), data); }) == Errc::singular_design);
    }
}

TEST_CASE("cluster effect full conditional") {
    SUBCASE("cluster without members falls back to the prior") {
        const auto d = testing::design(2, {{{0, 1.0}}, {{0, 1.0}}});
        Dataset data(testing::unit_ids(2), {{"y", {0.5, 2.0}}});
        GibbsProblem problem(ModelSpec("y", {}, {d}), data);
        Parameters p{Eigen::VectorXd::Ones(1), 0.7, {1.3}, {Eigen::Vector2d(0.2, 5.0)}};
        const auto c = full_conditional_u(problem, p, 0, 1);
        CHECK(c.mean == 0.0);
        CHECK(c.variance == doctest::Approx(1.3).epsilon(1e-15));
    }
    SUBCASE("one observation: N(0.5, 0.5)") {
        const auto d = testing::design(1, {{{0, 1.0}}});
        Dataset data(testing::unit_ids(1), {{"y", {1.0}}});
        GibbsProblem problem(ModelSpec("y", {}, {d}), data);
        Parameters p{Eigen::VectorXd::Zero(1), 1.0, {1.0}, {Eigen::VectorXd::Zero(1)}};
        const auto c = full_conditional_u(problem, p, 0, 0);
        CHECK(c.mean == doctest::Approx(0.5).epsilon(1e-15));
        CHECK(c.variance == doctest::Approx(0.5).epsilon(1e-15));
    }
    SUBCASE("matches conditioning the dense joint Gaussian, every cluster") {
        std::mt19937_64 rng(3);
        for (int trial = 0; trial < 200; ++trial) {
            const int n = 3 + static_cast<int>(rng() % 4);
            const std::vector<int> clusters = trial % 2 ? std::vector<int>{4} : std::vector<int>{2, 2};
            const auto inst = oracle::random_instance(rng, n, clusters, 1, 3);
            const auto lib = oracle::to_library(inst);
            const auto state = random_state(rng, inst);
            GibbsProblem problem(lib.spec, lib.data);
            const auto joint = oracle::joint_location_posterior(inst, state.sigma2_u, state.sigma2_e);
            const auto theta = stack(state);
            int at = 2;
            for (std::size_t c = 0; c < clusters.size(); ++c) {
                for (int j = 0; j < clusters[c]; ++j, ++at) {
                    const auto got = full_conditional_u(problem, state, c, static_cast<std::size_t>(j));
                    const auto want = oracle::condition(joint, {at}, without(theta, {at}));
                    const double var = want.covariance(0, 0);
                    CHECK(close(got.mean, want.mean(0), 1e-4, std::sqrt(var)));
                    CHECK(close(got.variance, var, 1e-4));
                }
            }
        }
    }
    SUBCASE("3 units, 2 clusters: agrees with 2-D grid quadrature") {
        // Rows {A:0.3,B:0.7}, {A:1}, {A:0.5,B:0.5}; beta and variances fixed.
        const auto d = testing::design(2, {{{0, 0.3}, {1, 0.7}}, {{0, 1.0}}, {{0, 0.5}, {1, 0.5}}});
        const std::vector<double> y{1.2, -0.4, 0.9};
        Dataset data(testing::unit_ids(3), {{"y", y}});
        GibbsProblem problem(ModelSpec("y", {}, {d}), data);
        const double b0 = 0.1, s2u = 0.8, s2e = 0.6;
        const Eigen::MatrixXd W = d.dense();
        auto log_post = [&](double u1, double u2) {
            double ll = -(u1 * u1 + u2 * u2) / (2 * s2u);
            for (int i = 0; i < 3; ++i) {
                const double e = y[i] - b0 - W(i, 0) * u1 - W(i, 1) * u2;
                ll -= e * e / (2 * s2e);
            }
            return ll;
        };
        const auto joint = oracle::quadrature_2d(log_post);

        // The two conditionals of a bivariate normal determine its joint
        // moments: precision entries from the conditional variances and slopes.
        auto cond = [&](std::size_t j, double u1, double u2) {
            Parameters p{Eigen::VectorXd::Constant(1, b0), s2e, {s2u}, {Eigen::Vector2d(u1, u2)}};
            return full_conditional_u(problem, p, 0, j);
        };
        const auto c1a = cond(0, 0.0, 0.0), c1b = cond(0, 0.0, 1.0);
        const auto c2a = cond(1, 0.0, 0.0), c2b = cond(1, 1.0, 0.0);
        Eigen::Matrix2d Q;
        Q(0, 0) = 1.0 / c1a.variance;
        Q(1, 1) = 1.0 / c2a.variance;
        Q(0, 1) = -(c1b.mean - c1a.mean) * Q(0, 0);
        Q(1, 0) = -(c2b.mean - c2a.mean) * Q(1, 1);
        CHECK(Q(0, 1) == doctest::Approx(Q(1, 0)).epsilon(1e-12));
        const Eigen::Matrix2d cov = Q.inverse();
        // Joint mean m solves m_1 = a_1 - (Q12/Q11) m_2 with a_k the intercepts.
        Eigen::Matrix2d A;
        A << 1.0, Q(0, 1) / Q(0, 0), Q(1, 0) / Q(1, 1), 1.0;
        const Eigen::Vector2d m = A.inverse() * Eigen::Vector2d(c1a.mean, c2a.mean);
        for (int k = 0; k < 2; ++k) {
            CHECK(close(m(k), joint.mean(k), 1e-4, std::sqrt(joint.covariance(k, k))));
            for (int l = 0; l < 2; ++l) CHECK(close(cov(k, l), joint.covariance(k, l), 1e-4, joint.covariance(k, k)));
        }
        // Direct check of one conditional: slice the joint at u2 = 0.37.
        const double u2 = 0.37;
        const auto slice = oracle::quadrature_2d([&](double a, double b) {
            return log_post(a, u2) - 0.5 * b * b; // b is a dummy standard normal
        });
        const auto c = cond(0, 0.0, u2);
        CHECK(close(c.mean, slice.mean(0), 1e-4, std::sqrt(slice.covariance(0, 0))));
        CHECK(close(c.variance, slice.covariance(0, 0), 1e-4));
    }
}

TEST_CASE("variance full conditionals") {
    SUBCASE("u all zero, J = 10") {
        const auto c = variance_conditional(PriorConfig{}, 10, 0.0);
        CHECK(c.shape == doctest::Approx(5.001).epsilon(1e-15));
        CHECK(c.rate == doctest::Approx(0.001).epsilon(1e-15));
    }
    SUBCASE("doubling u multiplies the rate increment by four") {
        std::mt19937_64 rng(6);
        const auto inst = oracle::random_instance(rng, 6, {4}, 1, 2);
        const auto lib = oracle::to_library(inst);
        GibbsProblem problem(lib.spec, lib.data);
        auto state = random_state(rng, inst);
        const PriorConfig prior{};
        const double inc1 = full_conditional_variances(problem, state, prior).sigma2_u[0].rate - prior.rate;
        state.u[0] *= 2.0;
        const double inc2 = full_conditional_variances(problem, state, prior).sigma2_u[0].rate - prior.rate;
        CHECK(inc2 == doctest::Approx(4.0 * inc1).epsilon(1e-14));
    }
    SUBCASE("agree with 1-D quadrature of prior times likelihood") {
        std::mt19937_64 rng(7);
        const PriorConfig prior{};
        for (int trial = 0; trial < 20; ++trial) {
            const std::vector<int> clusters = trial % 2 ? std::vector<int>{4} : std::vector<int>{2, 2};
            const auto inst = oracle::random_instance(rng, 6, clusters, 1, 3);
            const auto lib = oracle::to_library(inst);
            GibbsProblem problem(lib.spec, lib.data);
            const auto state = random_state(rng, inst);
            const auto got = full_conditional_variances(problem, state, prior);

            // Residual variance: IG prior density times the Gaussian likelihood of e.
            Eigen::VectorXd e = inst.y - inst.X * state.beta;
            for (std::size_t c = 0; c < inst.W.size(); ++c) e -= inst.W[c] * state.u[c];
            const double ss = e.squaredNorm();
            const double n = static_cast<double>(e.size());
            auto ld_e = [&](double s2) {
                return -(prior.shape + 1) * std::log(s2) - prior.rate / s2 - 0.5 * n * std::log(s2) - 0.5 * ss / s2;
            };
            const auto qe = oracle::quadrature_positive(ld_e);
            CHECK(close(got.sigma2_e.mean(), qe.mean, 1e-4));
            CHECK(close(got.sigma2_e.variance(), qe.variance, 1e-4));

            for (std::size_t c = 0; c < inst.W.size(); ++c) {
                const double uu = state.u[c].squaredNorm();
                const double J = static_cast<double>(state.u[c].size());
                auto ld_u = [&](double s2) {
                    return -(prior.shape + 1) * std::log(s2) - prior.rate / s2 - 0.5 * J * std::log(s2) - 0.5 * uu / s2;
                };
                const auto qu = oracle::quadrature_positive(ld_u);
                const auto& p = got.sigma2_u[c];
                // Moments of the precision exist for every J.
                CHECK(close(p.shape / p.rate, qu.inv_mean, 1e-4));
                CHECK(close(p.shape / (p.rate * p.rate), qu.inv_variance, 1e-4));
                if (p.shape > 1.5) CHECK(close(p.mean(), qu.mean, 1e-4));
            }

            // Long-run draws from the conditional, as the sampler makes them.
            if (trial == 0) {
                RandomStream r(99);
                std::vector<double> draws(100000);
                for (auto& x : draws) x = r.inverse_gamma(got.sigma2_e.shape, got.sigma2_e.rate);
                CHECK(close(oracle::mean(draws), qe.mean, 0.01));
            }
        }
    }
}

TEST_CASE("single membership conditionals reduce to the two-level forms") {
    std::mt19937_64 rng(8);
    std::normal_distribution<double> g;
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 12, J = 4;
        MembershipRows rows(n);
        std::vector<std::size_t> cl(n);
        std::vector<double> x(n), y(n);
        for (std::size_t i = 0; i < n; ++i) {
            cl[i] = i < J ? i : rng() % J;
            rows[i] = {{cl[i], 1.0}};
            x[i] = g(rng);
            y[i] = g(rng);
        }
        Dataset data(testing::unit_ids(n), {{"x", x}, {"y", y}});
        GibbsProblem problem(ModelSpec("y", {"x"}, {testing::design(J, rows)}), data);
        Eigen::VectorXd u(J);
        for (auto& v : u) v = g(rng);
        Parameters p{Eigen::Vector2d(g(rng), g(rng)), 0.9, {1.4}, {u}};
        for (std::size_t j = 0; j < J; ++j) {
            double nj = 0, sum = 0;
            for (std::size_t i = 0; i < n; ++i) {
                if (cl[i] != j) continue;
                nj += 1;
                sum += y[i] - p.beta(0) - p.beta(1) * x[i];
            }
            const double d = 1.0 / 1.4 + nj / 0.9;
            const auto c = full_conditional_u(problem, p, 0, j);
            CHECK(c.variance == doctest::Approx(1.0 / d).epsilon(1e-13));
            CHECK(c.mean == doctest::Approx(sum / 0.9 / d).epsilon(1e-12));
        }
    }
}

TEST_CASE("run_gibbs bookkeeping") {
    SimConfig cfg;
    cfg.n_units = 200;
    cfg.classifications = {ClassificationSim{"teacher", 15, Cardinality::uniform(3), SimWeights::random_proportions, 0.3}};
    const auto sim = simulate(cfg);
    SUBCASE("one iteration, no burn-in: one draw per chain") {
        const auto fit = run_gibbs(sim.spec, sim.data, {}, ChainConfig{0, 1, 1, 3, 1, false});
        REQUIRE(fit.chains.size() == 3);
        for (const auto& c : fit.chains) CHECK(c.values.rows() == 1);
    }
    SUBCASE("thinning and iteration indices") {
        const auto fit = run_gibbs(sim.spec, sim.data, {}, ChainConfig{10, 100, 7, 1, 1, true});
        CHECK(fit.chains[0].values.rows() == 14);
        CHECK(fit.chains[0].iterations.front() == 17);
        CHECK(fit.chains[0].values.cols() == 4 + 15);
        CHECK(fit.parameters.back().name == "u[teacher][c15]");
    }
    SUBCASE("invariants of the summaries, determinism") {
        const ChainConfig chain{200, 1000, 1, 2, 42, false};
        const auto fit = run_gibbs(sim.spec, sim.data, {}, chain);
        for (std::size_t k = 0; k < fit.parameters.size(); ++k) {
            const auto& s = fit.summaries[k].stats;
            CHECK(std::isfinite(s.mean));
            CHECK(s.q025 <= s.q50);
            CHECK(s.q50 <= s.q975);
            CHECK(s.ess > 0);
            CHECK(s.ess <= static_cast<double>(fit.total_draws()));
            if (fit.parameters[k].kind != ParameterInfo::Kind::beta) {
                for (const auto& c : fit.draws(k)) {
                    for (double v : c) CHECK(v > 0.0);
                }
            }
        }
        const auto again = run_gibbs(sim.spec, sim.data, {}, chain);
        for (std::size_t c = 0; c < 2; ++c) CHECK(fit.chains[c].values == again.chains[c].values);
        CHECK(!(fit.chains[0].values == fit.chains[1].values));
        REQUIRE(fit.partition.vpc.size() == 1);
        CHECK(fit.partition.vpc[0].mean > 0.0);
        CHECK(fit.partition.vpc[0].mean < 1.0);
        for (double w : fit.partition.weighted_vpc[0]) {
            CHECK(w > 0.0);
            CHECK(w <= fit.summary("sigma2_u[teacher]").stats.mean /
                           (fit.summary("sigma2_u[teacher]").stats.mean + fit.summary("sigma2_e").stats.mean) +
                       1e-12);
        }
    }
    SUBCASE("invalid chain settings") {
        CHECK(error_code([&] { run_gibbs(sim.spec, sim.data, {}, ChainConfig{0, 0, 1, 1, 1, false}); }) ==
              Errc::invalid_config);
        CHECK(error_code([&] { run_gibbs(sim.spec, sim.data, {}, ChainConfig{0, 5, 10, 1, 1, false}); }) ==
              Errc::invalid_config);
        CHECK(error_code([&] { run_gibbs(sim.spec, sim.data, {0.0, 1.0}, ChainConfig{}); }) == Errc::invalid_config);
    }
}

TEST_CASE("initial state") {
    SimConfig cfg;
    cfg.n_units = 100;
    cfg.classifications.push_back(ClassificationSim{"school", 4, Cardinality::fixed(1), SimWeights::equal, 0.2});
    const auto sim = simulate(cfg);
    GibbsProblem problem(sim.spec, sim.data);
    const auto p = problem.initial_state();
    const Eigen::VectorXd ols = (problem.X().transpose() * problem.X()).ldlt().solve(problem.X().transpose() * problem.y());
    CHECK((p.beta - ols).norm() < 1e-10);
    const double s2 = (problem.y() - problem.X() * ols).squaredNorm() / (100 - 2);
    CHECK(p.sigma2_e == doctest::Approx(s2 / 2));
    CHECK(p.sigma2_u[0] == doctest::Approx(s2 / 4));
    CHECK(p.sigma2_u[1] == doctest::Approx(s2 / 4));
    CHECK(p.u[0].isZero());
}

TEST_CASE("single membership fit agrees with an independent two-level sampler") {
    SimConfig cfg;
    cfg.n_units = 400;
    cfg.seed = 2024;
    cfg.classifications = {ClassificationSim{"school", 25, Cardinality::fixed(1), SimWeights::equal, 0.4}};
    const auto sim = simulate(cfg);
    const auto fit = run_gibbs(sim.spec, sim.data, {}, ChainConfig{1000, 20000, 1, 2, 5, false});

    GibbsProblem problem(sim.spec, sim.data);
    std::vector<int> cluster(400);
    for (std::size_t i = 0; i < 400; ++i) cluster[i] = static_cast<int>(sim.spec.classifications()[0].row(i)[0].cluster);
    const auto ref = oracle::two_level_gibbs(problem.X(), problem.y(), cluster, 25, 777, 1000, 40000);

    auto compare = [&](const std::string& name, const std::vector<double>& draws) {
        const auto& s = fit.summary(name).stats;
        const double ref_mean = oracle::mean(draws);
        const double ref_mcse = oracle::batch_means_mcse(draws);
        INFO(name << ": " << s.mean << " vs " << ref_mean);
        CHECK(std::abs(s.mean - ref_mean) <= 2.0 * std::hypot(s.mcse(), ref_mcse));
        CHECK(s.q025 <= oracle::quantile(draws, 0.975));
        CHECK(oracle::quantile(draws, 0.025) <= s.q975);
    };
    compare("beta_0", ref.beta[0]);
    compare("beta_1", ref.beta[1]);
    compare("sigma2_u[school]", ref.sigma2_u);
    compare("sigma2_e", ref.sigma2_e);
}
