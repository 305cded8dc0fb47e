#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "dtbsm/bsm.hpp"
#include "dtbsm/estimation.hpp"
#include "dtbsm/mdp.hpp"
#include "dtbsm/prefilter.hpp"
#include "dtbsm/wireless.hpp"

namespace dtbsm::io {

using json = nlohmann::json;

// Floats are written as the shortest decimal string that parses back to the
// same double (JSON via nlohmann's serializer, CSV via std::to_chars), so every
// save/load round trip is bit-exact.
std::string format_double(double x);
double parse_double(const std::string& text);

/// Writes to a temporary sibling and renames it over `path`; the final path
/// never holds a partial file.
void atomic_write(const std::filesystem::path& path, const std::string& content);
std::string read_file(const std::filesystem::path& path);

json mdp_to_json(const FiniteMdp& mdp);
/// Enforces every FiniteMdp invariant (row sums within 1e-9).
FiniteMdp mdp_from_json(const json& j);
void save_mdp(const std::filesystem::path& path, const FiniteMdp& mdp);
FiniteMdp load_mdp(const std::filesystem::path& path);

json metric_to_json(const MismatchReport& report);
MismatchReport metric_from_json(const json& j);

json policy_to_json(const Policy& policy);
Policy policy_from_json(const json& j);

/// JSON Lines: a header {"seed","behavior"} then one {"t","s","a","r","sn","episode"} per sample.
std::string trajectories_to_jsonl(const TrajectoryBatch& batch);
TrajectoryBatch trajectories_from_jsonl(const std::string& text);

json spec_to_json(const EnvSpec& spec);
EnvSpec spec_from_json(const json& j);

json cost_report_to_json(const CostReport& report);
json bound_fit_to_json(const BoundFit& fit);

/// Columns: candidate_id,family,params,bsm_scalar,train_subopt,deploy_subopt,
/// deploy_value,selected_by followed by in_dt_value,training_effort,trainer.
std::string ledger_to_csv(const std::vector<ExperimentRun>& runs);
/// Throws MissingColumn when a required column is absent. The trailing
/// columns are optional.
std::vector<ExperimentRun> ledger_from_csv(const std::string& text);

enum class PlotKind { Scatter, PrefilterBars };

struct PlotOptions {
    std::vector<Strategy> strategies{Strategy::Evaluation, Strategy::Random, Strategy::Reward,
                                     Strategy::BruteForce};
    std::vector<double> ratios{0.05};
    std::uint64_t seed = 0;
    /// Random selection rows report medians over this many seeded draws.
    int random_resamples = 100;
};

/// scatter: bsm_scalar,deploy_value per candidate.
/// prefilter_bars: one row per (strategy, ratio).
std::string emit_plot_data(const std::vector<ExperimentRun>& runs, PlotKind kind,
                           const PlotOptions& options = {});

/// max over runs of deploy_value + deploy_subopt.
double v_star_from_ledger(const std::vector<ExperimentRun>& runs);

}  // namespace dtbsm::io
