#pragma once

// Writers for fit results: summary CSV / JSON lines, draws CSV, exact
// estimates JSON and the human-readable report.

#include "mmfit/experiments.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace mmfit {

/// Gibbs: parameter,term,mean,sd,q2.5,q50,q97.5,ess,rhat
/// Exact: parameter,term,estimate,at_boundary
/// Variance partition rows (vpc[<classification>]) follow the parameters.
void write_summary_csv(std::ostream& out, const ModelSpec& spec, const ModelFit& fit);
void write_summary_jsonl(std::ostream& out, const FitResult& fit);

/// chain,iteration,<parameter columns>; one row per stored draw.
void write_draws_csv(std::ostream& out, const FitResult& fit);

void write_estimates_json(std::ostream& out, const ModelSpec& spec, const MlFit& fit);

/// Per-scheme summaries stacked with a leading scheme column.
void write_sensitivity_csv(std::ostream& out, const std::vector<SchemeFit>& fits);

void write_report(std::ostream& out, const ModelSpec& spec, const Dataset& data, const ModelFit& fit,
                  const std::vector<std::string>& notes = {});

} // namespace mmfit
