#include "dtbsm/pipeline.hpp"

#include <algorithm>
#include <cmath>

namespace dtbsm {

namespace {

[[noreturn]] void bad(const std::string& what) { throw Error(ErrorCode::InvalidInput, what); }

bool valid_ratio(double r) { return std::isfinite(r) && r > 0.0 && r <= 1.0; }

std::string trainer_name(TrainerKind k) { return k == TrainerKind::Exact ? "exact" : "q_learning"; }

TrainerKind parse_trainer(const std::string& name) {
    if (name == "exact") return TrainerKind::Exact;
    if (name == "q_learning") return TrainerKind::QLearning;
    bad("unknown trainer '" + name + "'");
}

std::string solver_name(InnerSolver s) { return s == InnerSolver::Exact ? "exact" : "sinkhorn"; }

InnerSolver parse_solver(const std::string& name) {
    if (name == "exact") return InnerSolver::Exact;
    if (name == "sinkhorn") return InnerSolver::Sinkhorn;
    bad("unknown solver '" + name + "'");
}

}  // namespace

void validate_run_config(const RunConfig& c) {
    validate_spec(c.env_spec);
    if (c.pool_size < 1) bad("pool_size must be at least 1");
    if (!valid_ratio(c.ratio)) bad("ratio must lie in (0, 1]");
    if (c.ratios.empty()) bad("ratios must not be empty");
    for (double r : c.ratios)
        if (!valid_ratio(r)) bad("every entry of ratios must lie in (0, 1]");
    if (c.strategies.empty()) bad("strategies must not be empty");
    if (!(c.tol > 0.0) || !(c.bsm_tol > 0.0)) bad("tolerances must be positive");
    if (c.q_episodes < 1 || c.q_horizon < 1) bad("q_episodes and q_horizon must be positive");
    if (c.random_resamples < 1) bad("random_resamples must be positive");
    if (c.threads < 1) bad("threads must be positive");
}

RunConfig run_config_from_json(const io::json& j, const std::filesystem::path& base_dir) {
    if (!j.is_object()) bad("config must be a JSON object");
    RunConfig c;
    try {
        if (j.contains("env_spec")) {
            const auto& e = j["env_spec"];
            if (e.is_string()) {
                std::filesystem::path p = e.get<std::string>();
                if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
                try {
                    c.env_spec = io::spec_from_json(io::json::parse(io::read_file(p)));
                } catch (const io::json::parse_error& err) {
                    bad(p.string() + ": " + err.what());
                }
            } else {
                c.env_spec = io::spec_from_json(e);
            }
        }
        c.pool_size = j.value("pool_size", c.pool_size);
        c.ratio = j.value("ratio", c.ratio);
        if (j.contains("strategies")) {
            c.strategies.clear();
            for (const auto& s : j["strategies"].get<std::vector<std::string>>())
                c.strategies.push_back(parse_strategy(s));
        }
        c.seed = j.value("seed", c.seed);
        c.tol = j.value("tol", c.tol);
        c.bsm_tol = j.value("bsm_tol", c.bsm_tol);
        if (j.contains("solver")) c.solver = parse_solver(j["solver"].get<std::string>());
        if (j.contains("trainer")) c.trainer = parse_trainer(j["trainer"].get<std::string>());
        c.q_episodes = j.value("q_episodes", c.q_episodes);
        c.q_horizon = j.value("q_horizon", c.q_horizon);
        c.random_resamples = j.value("random_resamples", c.random_resamples);
        if (j.contains("ratios")) c.ratios = j["ratios"].get<std::vector<double>>();
        c.threads = j.value("threads", c.threads);
    } catch (const io::json::exception& e) {
        bad(std::string("malformed config: ") + e.what());
    }
    validate_run_config(c);
    return c;
}

io::json run_config_to_json(const RunConfig& c) {
    io::json j;
    j["env_spec"] = io::spec_to_json(c.env_spec);
    j["pool_size"] = c.pool_size;
    j["ratio"] = c.ratio;
    std::vector<std::string> names;
    for (auto s : c.strategies) names.push_back(strategy_name(s));
    j["strategies"] = names;
    j["seed"] = c.seed;
    j["tol"] = c.tol;
    j["bsm_tol"] = c.bsm_tol;
    j["solver"] = solver_name(c.solver);
    j["trainer"] = trainer_name(c.trainer);
    j["q_episodes"] = c.q_episodes;
    j["q_horizon"] = c.q_horizon;
    j["random_resamples"] = c.random_resamples;
    j["ratios"] = c.ratios;
    j["threads"] = c.threads;
    return j;
}

QLearningParams q_learning_params(const RunConfig& c) {
    QLearningParams p;
    p.episodes = c.q_episodes;
    p.horizon = c.q_horizon;
    return p;
}

BsmOptions bsm_options(const RunConfig& c) {
    BsmOptions b;
    b.tol = c.bsm_tol;
    b.solver = c.solver;
    return b;
}

PipelineResult run_pipeline(const RunConfig& config) {
    validate_run_config(config);
    PipelineResult out;
    out.real = build_real_env(config.env_spec);
    out.candidates = generate_candidates(out.real, config.env_spec, config.pool_size, config.seed);

    const BsmOptions bsm = bsm_options(config);
    bool scored = true;
    out.mismatch = compute_pool_mismatch(out.real, out.candidates, bsm, config.threads, &scored);

    ExperimentOptions opts;
    opts.tol = config.tol;
    opts.bsm = bsm;
    opts.threads = config.threads;
    opts.seed = config.seed;

    TrainerConfig main_trainer;
    main_trainer.kind = config.trainer;
    main_trainer.q_learning = q_learning_params(config);
    out.ledger = run_experiment(out.real, out.candidates, std::span(&main_trainer, 1), opts, out.mismatch);

    const auto mixed = mixed_trainers(out.candidates, q_learning_params(config));
    out.bound_ledger = run_experiment(out.real, out.candidates, mixed, opts, out.mismatch);

    std::vector<std::vector<std::string>> labels(out.ledger.runs.size());
    for (auto strategy : config.strategies) {
        for (int id : select(out.ledger.runs, strategy, config.ratio, config.seed))
            labels[static_cast<std::size_t>(id)].push_back(strategy_name(strategy));
    }
    for (std::size_t k = 0; k < labels.size(); ++k) {
        std::string joined;
        for (const auto& l : labels[k]) joined += (joined.empty() ? "" : "|") + l;
        out.ledger.runs[k].selected_by = joined;
    }

    try {
        out.bound = fit_bound_even_odd(out.bound_ledger.runs);
    } catch (const Error& e) {
        if (e.code() != ErrorCode::Degenerate) throw;
        out.bound_error = e.what();
    }
    out.converged = scored && out.ledger.converged && out.bound_ledger.converged;
    return out;
}

io::json selection_costs_json(const std::vector<ExperimentRun>& runs, const RunConfig& config) {
    const double v_star = io::v_star_from_ledger(runs);
    io::json j;
    j["ratio"] = config.ratio;
    j["pool_size"] = runs.size();
    j["v_star_rho"] = v_star;
    io::json per = io::json::object();
    for (auto strategy : config.strategies) {
        const auto ids = select(runs, strategy, config.ratio, config.seed);
        auto entry = io::cost_report_to_json(cost_report(runs, ids, v_star));
        entry["ids"] = ids;
        if (strategy == Strategy::Random) {
            const auto draws =
                random_selection_costs(runs, config.ratio, config.seed, config.random_resamples, v_star);
            std::vector<double> best, cost, red;
            for (const auto& d : draws) {
                best.push_back(d.best_deploy_value);
                cost.push_back(d.testing_cost);
                red.push_back(d.testing_cost_reduction);
            }
            entry["resamples"] = config.random_resamples;
            entry["median_best_deploy_value"] = median(best);
            entry["median_testing_cost"] = median(cost);
            entry["median_testing_cost_reduction"] = median(red);
        }
        per[strategy_name(strategy)] = std::move(entry);
    }
    j["strategies"] = std::move(per);
    return j;
}

}  // namespace dtbsm
