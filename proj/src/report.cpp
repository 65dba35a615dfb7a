#include "mmfit/report.hpp"

#include "mmfit/io.hpp"

#include <fmt/format.h>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

namespace mmfit {

namespace {

std::string num(double v) { return std::isfinite(v) ? format_double(v) : std::string("NA"); }

nlohmann::json json_num(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

struct SummaryLine {
    std::string name;
    std::string term;
    DrawSummary stats;
};

std::vector<SummaryLine> gibbs_lines(const FitResult& fit) {
    std::vector<SummaryLine> lines;
    for (const auto& s : fit.summaries) lines.push_back({s.name, s.term, s.stats});
    for (std::size_t c = 0; c < fit.partition.classifications.size(); ++c) {
        const auto& name = fit.partition.classifications[c];
        lines.push_back({fmt::format("vpc[{}]", name), name, fit.partition.vpc[c]});
    }
    return lines;
}

struct EstimateLine {
    std::string name;
    std::string term;
    double estimate;
    std::string boundary;
};

std::vector<EstimateLine> exact_lines(const ModelSpec& spec, const MlFit& fit) {
    std::vector<EstimateLine> lines;
    const auto layout = parameter_layout(spec, false);
    const auto& cls = spec.classifications();
    double total = fit.variances.sigma2_e;
    for (double v : fit.variances.sigma2_u) total += v;
    for (const auto& p : layout) {
        switch (p.kind) {
        case ParameterInfo::Kind::beta:
            lines.push_back({p.name, p.term, fit.beta[static_cast<Eigen::Index>(p.index)], "NA"});
            break;
        case ParameterInfo::Kind::sigma2_u:
            lines.push_back({p.name, p.term, fit.variances.sigma2_u[p.classification],
                             fit.at_boundary[p.classification] ? "1" : "0"});
            break;
        case ParameterInfo::Kind::sigma2_e:
            lines.push_back({p.name, p.term, fit.variances.sigma2_e, fit.at_boundary.back() ? "1" : "0"});
            break;
        case ParameterInfo::Kind::u: break;
        }
    }
    for (std::size_t c = 0; c < cls.size(); ++c) {
        lines.push_back({fmt::format("vpc[{}]", cls[c].name()), cls[c].name(), fit.variances.sigma2_u[c] / total, "NA"});
    }
    return lines;
}

void summary_rows(std::ostream& out, const ModelSpec& spec, const ModelFit& fit, const std::string& prefix) {
    if (fit.gibbs) {
        for (const auto& l : gibbs_lines(*fit.gibbs)) {
            const auto& s = l.stats;
            out << prefix << l.name << ',' << l.term << ',' << num(s.mean) << ',' << num(s.sd) << ',' << num(s.q025)
                << ',' << num(s.q50) << ',' << num(s.q975) << ',' << num(s.ess) << ',' << num(s.rhat) << '\n';
        }
    } else {
        for (const auto& l : exact_lines(spec, *fit.exact)) {
            out << prefix << l.name << ',' << l.term << ',' << num(l.estimate) << ',' << l.boundary << '\n';
        }
    }
}

std::string summary_header(const ModelFit& fit) {
    return fit.gibbs ? "parameter,term,mean,sd,q2.5,q50,q97.5,ess,rhat" : "parameter,term,estimate,at_boundary";
}

} // namespace

void write_summary_csv(std::ostream& out, const ModelSpec& spec, const ModelFit& fit) {
    out << summary_header(fit) << '\n';
    summary_rows(out, spec, fit, "");
}

void write_summary_jsonl(std::ostream& out, const FitResult& fit) {
    for (const auto& l : gibbs_lines(fit)) {
        nlohmann::ordered_json j;
        j["parameter"] = l.name;
        j["term"] = l.term;
        j["mean"] = json_num(l.stats.mean);
        j["sd"] = json_num(l.stats.sd);
        j["q2.5"] = json_num(l.stats.q025);
        j["q50"] = json_num(l.stats.q50);
        j["q97.5"] = json_num(l.stats.q975);
        j["ess"] = json_num(l.stats.ess);
        j["rhat"] = json_num(l.stats.rhat);
        out << j.dump() << '\n';
    }
}

void write_draws_csv(std::ostream& out, const FitResult& fit) {
    out << "chain,iteration";
    for (const auto& p : fit.parameters) out << ',' << p.name;
    out << '\n';
    for (std::size_t k = 0; k < fit.chains.size(); ++k) {
        const auto& ch = fit.chains[k];
        for (Eigen::Index r = 0; r < ch.values.rows(); ++r) {
            out << (k + 1) << ',' << ch.iterations[static_cast<std::size_t>(r)];
            for (Eigen::Index c = 0; c < ch.values.cols(); ++c) out << ',' << format_double(ch.values(r, c));
            out << '\n';
        }
    }
}

void write_estimates_json(std::ostream& out, const ModelSpec& spec, const MlFit& fit) {
    nlohmann::ordered_json j;
    j["engine"] = "exact";
    j["log_likelihood"] = fit.log_likelihood;
    j["iterations"] = fit.iterations;
    auto& params = j["parameters"];
    params = nlohmann::ordered_json::array();
    for (const auto& l : exact_lines(spec, fit)) {
        nlohmann::ordered_json p;
        p["parameter"] = l.name;
        p["term"] = l.term;
        p["estimate"] = json_num(l.estimate);
        if (l.boundary != "NA") p["at_boundary"] = l.boundary == "1";
        params.push_back(p);
    }
    out << j.dump(2) << '\n';
}

void write_sensitivity_csv(std::ostream& out, const std::vector<SchemeFit>& fits) {
    if (fits.empty()) return;
    out << "scheme," << summary_header(fits.front().fit) << '\n';
    for (const auto& f : fits) summary_rows(out, f.spec, f.fit, f.scheme + ",");
}

void write_report(std::ostream& out, const ModelSpec& spec, const Dataset& data, const ModelFit& fit,
                  const std::vector<std::string>& notes) {
    out << "Multiple membership model\n";
    out << fmt::format("  response: {}\n", spec.response());
    std::string covs = "(intercept)";
    for (const auto& c : spec.fixed_covariates()) covs += ", " + c;
    out << fmt::format("  fixed effects: {}\n", covs);
    out << fmt::format("  units: {}\n", data.n_units());
    for (const auto& d : spec.classifications()) {
        std::size_t multi = 0;
        for (std::size_t i = 0; i < d.n_units(); ++i) multi += d.row(i).size() > 1 ? 1 : 0;
        out << fmt::format("  classification '{}': {} clusters, {:.3f} memberships per unit, {} multiple-member units\n",
                           d.name(), d.n_clusters(),
                           static_cast<double>(d.n_entries()) / static_cast<double>(d.n_units()), multi);
    }
    for (const auto& n : notes) out << "  note: " << n << '\n';
    out << '\n';

    if (fit.gibbs) {
        const auto& g = *fit.gibbs;
        out << fmt::format("Engine: gibbs, {} chain(s), {} stored draws in total\n\n", g.chains.size(), g.total_draws());
        out << fmt::format("{:<28} {:>12} {:>12} {:>12} {:>12} {:>10} {:>8}\n", "parameter", "mean", "sd", "2.5%",
                           "97.5%", "ess", "rhat");
        for (const auto& l : gibbs_lines(g)) {
            out << fmt::format("{:<28} {:>12.5g} {:>12.5g} {:>12.5g} {:>12.5g} {:>10.1f} {:>8.4f}\n", l.name,
                               l.stats.mean, l.stats.sd, l.stats.q025, l.stats.q975, l.stats.ess, l.stats.rhat);
        }
        out << "\nRelative contribution of each classification (variance partition)\n";
        for (std::size_t c = 0; c < g.partition.classifications.size(); ++c) {
            const auto& w = g.partition.weighted_vpc[c];
            const auto [lo, hi] = std::minmax_element(w.begin(), w.end());
            const double mean = std::accumulate(w.begin(), w.end(), 0.0) / static_cast<double>(w.size());
            out << fmt::format("  {}: VPC {:.4f} [{:.4f}, {:.4f}]; weighted per-unit VPC mean {:.4f} (min {:.4f}, max {:.4f})\n",
                               g.partition.classifications[c], g.partition.vpc[c].mean, g.partition.vpc[c].q025,
                               g.partition.vpc[c].q975, mean, *lo, *hi);
        }
        if (!g.warnings.empty()) {
            out << "\nWarnings\n";
            for (const auto& w : g.warnings) out << "  " << w << '\n';
        }
    } else {
        const auto& e = *fit.exact;
        out << fmt::format("Engine: exact maximum likelihood, {} iterations, log-likelihood {:.10g}\n\n", e.iterations,
                           e.log_likelihood);
        out << fmt::format("{:<28} {:>14} {:>10}\n", "parameter", "estimate", "boundary");
        for (const auto& l : exact_lines(spec, e)) {
            out << fmt::format("{:<28} {:>14.6g} {:>10}\n", l.name, l.estimate, l.boundary);
        }
        out << "\nRelative contribution of each classification: see vpc rows above.\n";
    }
}

} // namespace mmfit
