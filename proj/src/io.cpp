#include "dtbsm/io.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <sstream>
#include <system_error>
#include <unistd.h>

namespace dtbsm::io {

namespace {

[[noreturn]] void bad(const std::string& what) { throw Error(ErrorCode::InvalidInput, what); }

const json& field(const json& j, const char* key) {
    if (!j.is_object() || !j.contains(key)) bad(std::string("missing field '") + key + "'");
    return j.at(key);
}

template <class T>
T get(const json& j, const char* key) {
    try {
        return field(j, key).get<T>();
    } catch (const json::exception& e) {
        bad(std::string("field '") + key + "': " + e.what());
    }
}

std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == sep) {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

}  // namespace

std::string format_double(double x) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, res.ptr);
}

double parse_double(const std::string& text) {
    double x = 0.0;
    const auto* end = text.data() + text.size();
    const auto res = std::from_chars(text.data(), end, x);
    if (res.ec != std::errc() || res.ptr != end) bad("not a number: '" + text + "'");
    return x;
}

void atomic_write(const std::filesystem::path& path, const std::string& content) {
    namespace fs = std::filesystem;
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp-" + std::to_string(::getpid());
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorCode::Io, "cannot open " + tmp.string() + " for writing");
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        out.flush();
        if (!out) {
            out.close();
            fs::remove(tmp);
            throw Error(ErrorCode::Io, "failed writing " + tmp.string());
        }
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp);
        throw Error(ErrorCode::Io, "cannot move output into place at " + path.string());
    }
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

json mdp_to_json(const FiniteMdp& mdp) {
    json j;
    j["version"] = 1;
    j["n_states"] = mdp.n_states();
    j["n_actions"] = mdp.n_actions();
    j["gamma"] = mdp.gamma();
    json rewards = json::array();
    json transitions = json::array();
    for (int s = 0; s < mdp.n_states(); ++s) {
        json rrow = json::array();
        json trow = json::array();
        for (int a = 0; a < mdp.n_actions(); ++a) {
            rrow.push_back(mdp.reward(s, a));
            const auto row = mdp.row(s, a);
            trow.push_back(std::vector<double>(row.begin(), row.end()));
        }
        rewards.push_back(std::move(rrow));
        transitions.push_back(std::move(trow));
    }
    j["rewards"] = std::move(rewards);
    j["transitions"] = std::move(transitions);
    if (!mdp.state_labels.empty()) j["state_labels"] = mdp.state_labels;
    if (!mdp.action_labels.empty()) j["action_labels"] = mdp.action_labels;
    return j;
}

FiniteMdp mdp_from_json(const json& j) {
    if (get<int>(j, "version") != 1) bad("unsupported MDP file version");
    const int S = get<int>(j, "n_states");
    const int A = get<int>(j, "n_actions");
    const double gamma = get<double>(j, "gamma");
    if (S < 1 || A < 1) bad("n_states and n_actions must be positive");
    const auto& rj = field(j, "rewards");
    const auto& tj = field(j, "transitions");
    if (!rj.is_array() || static_cast<int>(rj.size()) != S) bad("rewards must have n_states rows");
    if (!tj.is_array() || static_cast<int>(tj.size()) != S) bad("transitions must have n_states blocks");
    std::vector<double> rewards, transitions;
    rewards.reserve(static_cast<std::size_t>(S) * A);
    transitions.reserve(static_cast<std::size_t>(S) * A * S);
    try {
        for (int s = 0; s < S; ++s) {
            if (static_cast<int>(rj[s].size()) != A) bad("rewards row has wrong length");
            if (static_cast<int>(tj[s].size()) != A) bad("transition block has wrong length");
            for (int a = 0; a < A; ++a) {
                rewards.push_back(rj[s][a].get<double>());
                const auto& row = tj[s][a];
                if (static_cast<int>(row.size()) != S) bad("transition row has wrong length");
                for (int k = 0; k < S; ++k) transitions.push_back(row[k].get<double>());
            }
        }
    } catch (const json::exception& e) {
        bad(std::string("malformed MDP arrays: ") + e.what());
    }
    FiniteMdp mdp(S, A, std::move(transitions), std::move(rewards), gamma);
    if (j.contains("state_labels")) mdp.state_labels = j["state_labels"].get<std::vector<std::string>>();
    if (j.contains("action_labels")) mdp.action_labels = j["action_labels"].get<std::vector<std::string>>();
    require_valid(mdp);
    return mdp;
}

void save_mdp(const std::filesystem::path& path, const FiniteMdp& mdp) {
    atomic_write(path, mdp_to_json(mdp).dump() + "\n");
}

FiniteMdp load_mdp(const std::filesystem::path& path) {
    try {
        return mdp_from_json(json::parse(read_file(path)));
    } catch (const json::parse_error& e) {
        bad(path.string() + ": " + e.what());
    }
}

json metric_to_json(const MismatchReport& report) {
    json j;
    j["scalar_max"] = report.scalar_max;
    j["scalar_avg"] = report.scalar_avg;
    j["iterations"] = report.metric.iterations;
    j["residual"] = report.metric.residual;
    j["converged"] = report.metric.converged;
    j["gamma"] = report.metric.gamma;
    json d = json::array();
    for (std::size_t r = 0; r < report.metric.d.rows(); ++r) {
        const auto row = report.metric.d.row(r);
        d.push_back(std::vector<double>(row.begin(), row.end()));
    }
    j["d"] = std::move(d);
    return j;
}

MismatchReport metric_from_json(const json& j) {
    MismatchReport report;
    report.scalar_max = get<double>(j, "scalar_max");
    report.scalar_avg = get<double>(j, "scalar_avg");
    report.metric.iterations = get<int>(j, "iterations");
    report.metric.residual = get<double>(j, "residual");
    report.metric.converged = get<bool>(j, "converged");
    if (j.contains("gamma")) report.metric.gamma = j["gamma"].get<double>();
    const auto rows = get<std::vector<std::vector<double>>>(j, "d");
    const std::size_t cols = rows.empty() ? 0 : rows.front().size();
    report.metric.d = Matrix(rows.size(), cols);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r].size() != cols) bad("metric rows differ in length");
        std::copy(rows[r].begin(), rows[r].end(), report.metric.d.row(r).begin());
    }
    return report;
}

json policy_to_json(const Policy& policy) {
    json j;
    if (policy.kind() == Policy::Kind::Deterministic) {
        j["kind"] = "deterministic";
        j["actions"] = policy.actions();
    } else {
        j["kind"] = "stochastic";
        json rows = json::array();
        for (std::size_t s = 0; s < policy.probabilities().rows(); ++s) {
            const auto row = policy.probabilities().row(s);
            rows.push_back(std::vector<double>(row.begin(), row.end()));
        }
        j["probabilities"] = std::move(rows);
    }
    return j;
}

Policy policy_from_json(const json& j) {
    const auto kind = get<std::string>(j, "kind");
    if (kind == "deterministic") return Policy::deterministic(get<std::vector<int>>(j, "actions"));
    if (kind != "stochastic") bad("policy kind must be deterministic or stochastic");
    const auto rows = get<std::vector<std::vector<double>>>(j, "probabilities");
    const std::size_t cols = rows.empty() ? 0 : rows.front().size();
    Matrix m(rows.size(), cols);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r].size() != cols) bad("policy rows differ in length");
        std::copy(rows[r].begin(), rows[r].end(), m.row(r).begin());
    }
    return Policy::stochastic(std::move(m));
}

std::string trajectories_to_jsonl(const TrajectoryBatch& batch) {
    std::string out = json{{"seed", batch.seed}, {"behavior", batch.behavior}}.dump() + "\n";
    for (const auto& x : batch.samples) {
        json j;
        j["t"] = x.t;
        j["s"] = x.s;
        j["a"] = x.a;
        j["r"] = x.r;
        j["sn"] = x.sn;
        j["episode"] = x.episode;
        out += j.dump();
        out += '\n';
    }
    return out;
}

TrajectoryBatch trajectories_from_jsonl(const std::string& text) {
    TrajectoryBatch batch;
    std::istringstream in(text);
    std::string line;
    bool header = true;
    try {
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            const auto j = json::parse(line);
            if (header) {
                batch.seed = get<std::uint64_t>(j, "seed");
                batch.behavior = get<std::string>(j, "behavior");
                header = false;
                continue;
            }
            TransitionSample x;
            x.t = get<std::int64_t>(j, "t");
            x.s = get<int>(j, "s");
            x.a = get<int>(j, "a");
            x.r = get<double>(j, "r");
            x.sn = get<int>(j, "sn");
            x.episode = get<std::int64_t>(j, "episode");
            batch.samples.push_back(x);
        }
    } catch (const json::parse_error& e) {
        bad(std::string("malformed trajectory line: ") + e.what());
    }
    if (header) bad("trajectory file has no header line");
    return batch;
}

json spec_to_json(const EnvSpec& spec) {
    json j;
    j["n_ues"] = spec.n_ues;
    j["n_blocks"] = spec.n_blocks;
    j["backlog_levels"] = spec.backlog_levels;
    j["weights"] = spec.weights;
    std::vector<std::string> profiles;
    for (auto p : spec.arrival_profiles) profiles.push_back(profile_name(p));
    j["arrival_profiles"] = profiles;
    j["capacity_per_block"] = spec.capacity_per_block;
    j["gamma"] = spec.gamma;
    j["seed"] = spec.seed;
    j["budget"] = spec.budget;
    return j;
}

EnvSpec spec_from_json(const json& j) {
    if (!j.is_object()) bad("environment spec must be a JSON object");
    EnvSpec spec;
    try {
        spec.n_ues = j.value("n_ues", spec.n_ues);
        spec.n_blocks = j.value("n_blocks", spec.n_blocks);
        spec.backlog_levels = j.value("backlog_levels", spec.backlog_levels);
        spec.capacity_per_block = j.value("capacity_per_block", spec.capacity_per_block);
        spec.gamma = j.value("gamma", spec.gamma);
        spec.seed = j.value("seed", spec.seed);
        spec.budget = j.value("budget", spec.budget);
        if (j.contains("weights")) {
            spec.weights = j["weights"].get<std::vector<double>>();
        } else if (spec.n_ues != 3) {
            spec.weights.assign(static_cast<std::size_t>(spec.n_ues), 1.0);
        }
        if (j.contains("arrival_profiles")) {
            spec.arrival_profiles.clear();
            for (const auto& name : j["arrival_profiles"].get<std::vector<std::string>>())
                spec.arrival_profiles.push_back(parse_profile(name));
        } else if (spec.n_ues != 3) {
            constexpr ArrivalProfile cycle[] = {ArrivalProfile::Periodic, ArrivalProfile::Bursty,
                                                ArrivalProfile::Steady};
            spec.arrival_profiles.clear();
            for (int i = 0; i < spec.n_ues; ++i) spec.arrival_profiles.push_back(cycle[i % 3]);
        }
    } catch (const json::exception& e) {
        bad(std::string("malformed environment spec: ") + e.what());
    }
    validate_spec(spec);
    return spec;
}

json cost_report_to_json(const CostReport& r) {
    return json{{"n_trained", r.n_trained},
                {"n_tested", r.n_tested},
                {"training_cost_reduction", r.training_cost_reduction},
                {"testing_cost", r.testing_cost},
                {"testing_cost_reduction", r.testing_cost_reduction},
                {"best_deploy_value", r.best_deploy_value}};
}

json bound_fit_to_json(const BoundFit& f) {
    return json{{"alpha", f.alpha},
                {"beta", f.beta},
                {"fit_runs", f.fit_runs},
                {"holdout_runs", f.holdout_runs},
                {"fit_violations", f.fit_violations},
                {"holdout_violation_rate", f.holdout_violation_rate}};
}

namespace {

constexpr const char* kRequiredColumns[] = {"candidate_id", "family",        "params",
                                            "bsm_scalar",   "train_subopt",  "deploy_subopt",
                                            "deploy_value", "selected_by"};

}  // namespace

std::string ledger_to_csv(const std::vector<ExperimentRun>& runs) {
    std::string out =
        "candidate_id,family,params,bsm_scalar,train_subopt,deploy_subopt,deploy_value,selected_by,"
        "in_dt_value,training_effort,trainer\n";
    for (const auto& r : runs) {
        out += std::to_string(r.candidate_id) + ',' + r.family + ',' + r.params + ',' +
               format_double(r.bsm_scalar) + ',' + format_double(r.train_suboptimality) + ',' +
               format_double(r.deploy_suboptimality) + ',' + format_double(r.deploy_value) + ',' +
               r.selected_by + ',' + format_double(r.in_dt_value) + ',' +
               std::to_string(r.training_effort) + ',' + r.trainer + '\n';
    }
    return out;
}

std::vector<ExperimentRun> ledger_from_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw Error(ErrorCode::MissingColumn, "ledger is empty");
    const auto header = split(line, ',');
    std::map<std::string, std::size_t> col;
    for (std::size_t k = 0; k < header.size(); ++k) col[header[k]] = k;
    for (const char* name : kRequiredColumns)
        if (!col.count(name))
            throw Error(ErrorCode::MissingColumn, std::string("ledger lacks column '") + name + "'");

    std::vector<ExperimentRun> runs;
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") continue;
        const auto cells = split(line, ',');
        if (cells.size() != header.size()) bad("ledger row has " + std::to_string(cells.size()) + " cells");
        auto at = [&](const char* name) -> const std::string& { return cells[col.at(name)]; };
        ExperimentRun r;
        r.candidate_id = std::stoi(at("candidate_id"));
        r.family = at("family");
        r.params = at("params");
        r.bsm_scalar = parse_double(at("bsm_scalar"));
        r.train_suboptimality = parse_double(at("train_subopt"));
        r.deploy_suboptimality = parse_double(at("deploy_subopt"));
        r.deploy_value = parse_double(at("deploy_value"));
        r.selected_by = at("selected_by");
        if (col.count("in_dt_value")) r.in_dt_value = parse_double(at("in_dt_value"));
        if (col.count("training_effort")) r.training_effort = std::stoi(at("training_effort"));
        if (col.count("trainer")) r.trainer = at("trainer");
        runs.push_back(std::move(r));
    }
    return runs;
}

double v_star_from_ledger(const std::vector<ExperimentRun>& runs) {
    if (runs.empty()) throw Error(ErrorCode::EmptyPool, "ledger has no runs");
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& r : runs) best = std::max(best, r.deploy_value + r.deploy_suboptimality);
    return best;
}

std::string emit_plot_data(const std::vector<ExperimentRun>& runs, PlotKind kind,
                           const PlotOptions& options) {
    if (runs.empty()) throw Error(ErrorCode::EmptyPool, "ledger has no runs");
    if (kind == PlotKind::Scatter) {
        std::string out = "bsm_scalar,deploy_value\n";
        for (const auto& r : runs) out += format_double(r.bsm_scalar) + ',' + format_double(r.deploy_value) + '\n';
        return out;
    }
    const double v_star = v_star_from_ledger(runs);
    std::string out =
        "strategy,ratio,n_selected,best_deploy_value,testing_cost,training_cost_reduction,"
        "testing_cost_reduction\n";
    for (const auto strategy : options.strategies) {
        for (const double ratio : options.ratios) {
            CostReport report;
            if (strategy == Strategy::Random) {
                const auto draws = random_selection_costs(runs, ratio, options.seed,
                                                          std::max(1, options.random_resamples), v_star);
                std::vector<double> best, cost, red;
                for (const auto& d : draws) {
                    best.push_back(d.best_deploy_value);
                    cost.push_back(d.testing_cost);
                    red.push_back(d.testing_cost_reduction);
                }
                report = draws.front();
                report.best_deploy_value = median(best);
                report.testing_cost = median(cost);
                report.testing_cost_reduction = median(red);
            } else {
                report = cost_report(runs, select(runs, strategy, ratio, options.seed), v_star);
            }
            out += strategy_name(strategy) + ',' + format_double(ratio) + ',' +
                   std::to_string(report.n_tested) + ',' + format_double(report.best_deploy_value) +
                   ',' + format_double(report.testing_cost) + ',' +
                   format_double(report.training_cost_reduction) + ',' +
                   format_double(report.testing_cost_reduction) + '\n';
        }
    }
    return out;
}

}  // namespace dtbsm::io
