#include "dtbsm/cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iomanip>
#include <optional>
#include <ostream>

#include "dtbsm/estimation.hpp"
#include "dtbsm/io.hpp"
#include "dtbsm/pipeline.hpp"
#include "dtbsm/rng.hpp"

namespace dtbsm {

namespace {

namespace fs = std::filesystem;
using io::json;

struct Globals {
    std::uint64_t seed = 0;
    double tol = 0.0;
    std::string out;
    std::string solver = "exact";
    std::string config;
    int threads = 1;
    bool strict = false;
};

class Context {
public:
    Context(CLI::App& app, Globals& g, std::ostream& out, std::ostream& err)
        : app_(app), g_(g), out_(out), err_(err) {}

    bool given(const char* flag) const { return app_.get_option(flag)->count() > 0; }

    /// Config file (or defaults) with explicit global flags layered on top.
    RunConfig config() const {
        RunConfig c;
        if (!g_.config.empty()) {
            const fs::path path = g_.config;
            json j;
            try {
                j = json::parse(io::read_file(path));
            } catch (const json::parse_error& e) {
                throw Error(ErrorCode::InvalidInput, path.string() + ": " + e.what());
            }
            c = run_config_from_json(j, path.parent_path());
        }
        if (given("--seed")) c.seed = g_.seed;
        if (given("--tol")) c.tol = g_.tol;
        if (given("--solver")) c.solver = solver();
        if (given("--threads")) c.threads = g_.threads;
        validate_run_config(c);
        return c;
    }

    InnerSolver solver() const {
        if (g_.solver == "exact") return InnerSolver::Exact;
        if (g_.solver == "sinkhorn") return InnerSolver::Sinkhorn;
        throw Error(ErrorCode::InvalidInput, "--solver must be exact or sinkhorn");
    }

    /// Writes to --out, or to stdout when no --out was given.
    void emit(const std::string& content) const {
        if (g_.out.empty()) {
            out_ << content;
        } else {
            io::atomic_write(g_.out, content);
        }
    }

    fs::path out_dir() const {
        if (g_.out.empty()) throw Error(ErrorCode::InvalidInput, "this command needs --out <directory>");
        return g_.out;
    }

    /// Warns on stderr; exit 3 only under --strict.
    int convergence(bool converged, const std::string& what) const {
        if (converged) return kExitOk;
        err_ << json{{"warning", "NotConverged"}, {"message", what}}.dump() << '\n';
        return g_.strict ? kExitNotConverged : kExitOk;
    }

    const Globals& globals() const { return g_; }

private:
    CLI::App& app_;
    Globals& g_;
    std::ostream& out_;
    std::ostream& err_;
};

json load_json(const fs::path& path) {
    try {
        return json::parse(io::read_file(path));
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::InvalidInput, path.string() + ": " + e.what());
    }
}

EnvSpec load_spec(const std::string& path, const RunConfig& fallback) {
    if (path.empty()) return fallback.env_spec;
    return io::spec_from_json(load_json(path));
}

std::string pool_csv(const std::vector<CandidateDT>& pool) {
    std::string s = "candidate_id,family,params,seed\n";
    for (const auto& c : pool)
        s += std::to_string(c.id) + ',' + family_name(c.recipe.family) + ',' + c.recipe.params_text() +
             ',' + std::to_string(c.seed) + '\n';
    return s;
}

std::string candidate_file(int id) {
    std::ostringstream name;
    name << "candidate_" << std::setw(3) << std::setfill('0') << id << ".json";
    return name.str();
}

std::vector<ExperimentRun> load_ledger(const std::string& path) {
    return io::ledger_from_csv(io::read_file(path));
}

std::string bound_json(const std::optional<BoundFit>& fit, const std::string& error) {
    if (fit) return io::bound_fit_to_json(*fit).dump(2) + "\n";
    return json{{"error", "Degenerate"}, {"message", error}}.dump(2) + "\n";
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Digital-twin fidelity via bisimulation metrics, and twin pre-filtering."};
    app.require_subcommand(1);
    app.fallthrough();
    app.set_help_all_flag("--help-all", "Help for every command");

    Globals g;
    app.add_option("--seed", g.seed, "Root seed; every component splits its own seed from it");
    app.add_option("--tol", g.tol, "Convergence tolerance for the command's fixed point")
        ->check(CLI::PositiveNumber);
    app.add_option("--out", g.out, "Output file or directory; stdout when omitted");
    app.add_option("--solver", g.solver, "Inner transport solver")
        ->check(CLI::IsMember({"exact", "sinkhorn"}));
    app.add_option("--config", g.config, "Run configuration JSON")->check(CLI::ExistingFile);
    app.add_option("--threads", g.threads, "Worker threads")->check(CLI::PositiveNumber);
    app.add_flag("--strict", g.strict, "Exit 3 when an iterative solver does not converge");

    Context ctx(app, g, out, err);
    std::function<int()> action;

    // gen
    auto* gen = app.add_subcommand("gen", "Build the environment and candidate pool");
    std::string gen_env;
    int gen_pool = 0;
    gen->add_option("--env", gen_env, "Environment spec JSON")->check(CLI::ExistingFile);
    gen->add_option("--pool", gen_pool, "Pool size")->check(CLI::PositiveNumber);
    gen->callback([&] {
        action = [&] {
            const RunConfig cfg = ctx.config();
            const EnvSpec spec = load_spec(gen_env, cfg);
            const int n = gen_pool > 0 ? gen_pool : cfg.pool_size;
            const fs::path dir = ctx.out_dir();
            const FiniteMdp real = build_real_env(spec);
            const auto pool = generate_candidates(real, spec, n, cfg.seed);
            io::atomic_write(dir / "spec.json", io::spec_to_json(spec).dump(2) + "\n");
            io::save_mdp(dir / "real.json", real);
            for (const auto& c : pool) io::save_mdp(dir / "candidates" / candidate_file(c.id), c.mdp);
            io::atomic_write(dir / "pool.csv", pool_csv(pool));
            return kExitOk;
        };
    });

    // sample
    auto* sample = app.add_subcommand("sample", "Roll out transitions from an MDP");
    std::string sample_env, sample_policy;
    std::int64_t sample_steps = 0, sample_episode = 50;
    sample->add_option("env", sample_env, "MDP JSON")->required()->check(CLI::ExistingFile);
    sample->add_option("--steps", sample_steps, "Number of transitions")->required()->check(CLI::PositiveNumber);
    sample->add_option("--episode-length", sample_episode, "Steps per episode")->check(CLI::PositiveNumber);
    sample->add_option("--policy", sample_policy, "Behavior policy JSON; uniform when omitted")
        ->check(CLI::ExistingFile);
    sample->callback([&] {
        action = [&] {
            const FiniteMdp env = io::load_mdp(sample_env);
            std::optional<Policy> behavior;
            if (!sample_policy.empty()) behavior = io::policy_from_json(load_json(sample_policy));
            const auto batch = sample_trajectories(env, behavior, sample_steps, sample_episode, g.seed);
            ctx.emit(io::trajectories_to_jsonl(batch));
            return kExitOk;
        };
    });

    // estimate
    auto* estimate = app.add_subcommand("estimate", "Build an empirical MDP from trajectories");
    std::string est_traj;
    int est_states = 0, est_actions = 0;
    double est_gamma = kDefaultGamma, est_kappa = 0.0;
    estimate->add_option("trajectories", est_traj, "Trajectory JSONL")->required()->check(CLI::ExistingFile);
    estimate->add_option("--states", est_states, "Number of states")->required()->check(CLI::PositiveNumber);
    estimate->add_option("--actions", est_actions, "Number of actions")->required()->check(CLI::PositiveNumber);
    estimate->add_option("--gamma", est_gamma, "Discount factor");
    estimate->add_option("--kappa", est_kappa, "Additive smoothing count")->check(CLI::NonNegativeNumber);
    estimate->callback([&] {
        action = [&] {
            const auto batch = io::trajectories_from_jsonl(io::read_file(est_traj));
            const FiniteMdp mdp = estimate_mdp(batch, est_states, est_actions, est_gamma, est_kappa);
            ctx.emit(io::mdp_to_json(mdp).dump() + "\n");
            return kExitOk;
        };
    });

    // bsm
    auto* bsm = app.add_subcommand("bsm", "Pairwise bisimulation metric between two MDP files");
    std::string bsm_real, bsm_dt, bsm_mode = "worst_case";
    bsm->add_option("real", bsm_real, "Real-environment MDP JSON")->required()->check(CLI::ExistingFile);
    bsm->add_option("twin", bsm_dt, "Twin MDP JSON")->required()->check(CLI::ExistingFile);
    bsm->add_option("--mode", bsm_mode, "Scalarization")->check(CLI::IsMember({"worst_case", "average"}));
    bsm->callback([&] {
        action = [&] {
            const RunConfig cfg = ctx.config();
            BsmOptions opts = bsm_options(cfg);
            if (ctx.given("--tol")) opts.tol = g.tol;
            opts.threads = cfg.threads;
            const FiniteMdp real = io::load_mdp(bsm_real);
            const FiniteMdp dt = io::load_mdp(bsm_dt);
            const auto metric = compute_dt_bsm(real, dt, opts);
            const auto mode = bsm_mode == "average" ? ScalarMode::Average : ScalarMode::WorstCase;
            auto j = io::metric_to_json(scalarize(metric, mode));
            j["mode"] = bsm_mode;
            ctx.emit(j.dump() + "\n");
            return ctx.convergence(metric.converged, "bisimulation iteration hit its iteration cap");
        };
    });

    // train
    auto* train = app.add_subcommand("train", "Train a policy inside an MDP");
    std::string train_mdp, train_kind = "exact";
    int train_episodes = 1000, train_horizon = 50;
    train->add_option("mdp", train_mdp, "MDP JSON")->required()->check(CLI::ExistingFile);
    train->add_option("--trainer", train_kind, "Trainer")->check(CLI::IsMember({"exact", "q_learning"}));
    train->add_option("--episodes", train_episodes, "Q-learning episodes")->check(CLI::PositiveNumber);
    train->add_option("--horizon", train_horizon, "Q-learning episode length")->check(CLI::PositiveNumber);
    train->callback([&] {
        action = [&] {
            const RunConfig cfg = ctx.config();
            const FiniteMdp mdp = io::load_mdp(train_mdp);
            if (train_kind == "exact") {
                const auto plan = value_iteration(mdp, cfg.tol);
                ctx.emit(io::policy_to_json(plan.policy).dump() + "\n");
                return ctx.convergence(plan.converged, "value iteration hit its iteration cap");
            }
            QLearningParams p;
            p.episodes = train_episodes;
            p.horizon = train_horizon;
            p.seed = split_seed(cfg.seed, "q_learning", 0);
            const auto rho = uniform_distribution(mdp.n_states());
            ctx.emit(io::policy_to_json(q_learning(mdp, p, rho).policy).dump() + "\n");
            return kExitOk;
        };
    });

    // deploy
    auto* deploy = app.add_subcommand("deploy", "Evaluate a policy in the real environment");
    std::string dep_real, dep_policy;
    deploy->add_option("real", dep_real, "Real-environment MDP JSON")->required()->check(CLI::ExistingFile);
    deploy->add_option("policy", dep_policy, "Policy JSON")->required()->check(CLI::ExistingFile);
    deploy->callback([&] {
        action = [&] {
            const RunConfig cfg = ctx.config();
            const FiniteMdp real = io::load_mdp(dep_real);
            const Policy policy = io::policy_from_json(load_json(dep_policy));
            const auto rho = uniform_distribution(real.n_states());
            const auto r = suboptimality(real, policy, rho, cfg.tol);
            json j{{"deploy_value", r.policy_value},
                   {"optimal_value", r.optimal_value},
                   {"deploy_subopt", r.gap},
                   {"converged", r.converged}};
            ctx.emit(j.dump(2) + "\n");
            return ctx.convergence(r.converged, "policy evaluation hit its iteration cap");
        };
    });

    // experiment
    auto* experiment = app.add_subcommand("experiment", "Full pre-filtering pipeline");
    int exp_pool = 0;
    double exp_ratio = 0.0;
    experiment->add_option("--pool", exp_pool, "Pool size")->check(CLI::PositiveNumber);
    experiment->add_option("--ratio", exp_ratio, "Selection ratio")->check(CLI::Range(0.0, 1.0));
    experiment->callback([&] {
        action = [&] {
            RunConfig cfg = ctx.config();
            if (exp_pool > 0) cfg.pool_size = exp_pool;
            if (exp_ratio > 0.0) cfg.ratio = exp_ratio;
            validate_run_config(cfg);
            const fs::path dir = ctx.out_dir();
            const auto result = run_pipeline(cfg);
            io::PlotOptions plot;
            plot.strategies = cfg.strategies;
            plot.ratios = cfg.ratios;
            plot.seed = cfg.seed;
            plot.random_resamples = cfg.random_resamples;
            io::atomic_write(dir / "config.json", run_config_to_json(cfg).dump(2) + "\n");
            io::atomic_write(dir / "ledger.csv", io::ledger_to_csv(result.ledger.runs));
            io::atomic_write(dir / "costs.json", selection_costs_json(result.ledger.runs, cfg).dump(2) + "\n");
            io::atomic_write(dir / "bound_ledger.csv", io::ledger_to_csv(result.bound_ledger.runs));
            io::atomic_write(dir / "bound.json", bound_json(result.bound, result.bound_error));
            io::atomic_write(dir / "scatter.csv",
                             io::emit_plot_data(result.ledger.runs, io::PlotKind::Scatter, plot));
            io::atomic_write(dir / "prefilter_bars.csv",
                             io::emit_plot_data(result.ledger.runs, io::PlotKind::PrefilterBars, plot));
            return ctx.convergence(result.converged, "a metric or planning iteration hit its cap");
        };
    });

    // select
    auto* sel = app.add_subcommand("select", "Choose a candidate subset from a ledger");
    std::string sel_ledger, sel_strategy = "evaluation";
    double sel_ratio = 0.0;
    sel->add_option("ledger", sel_ledger, "Run ledger CSV")->required()->check(CLI::ExistingFile);
    sel->add_option("--ratio", sel_ratio, "Selection ratio in (0, 1]");
    sel->add_option("--strategy", sel_strategy, "Strategy")
        ->check(CLI::IsMember({"evaluation", "reward", "random", "brute_force"}));
    sel->callback([&] {
        action = [&] {
            const RunConfig cfg = ctx.config();
            const double ratio = sel_ratio > 0.0 ? sel_ratio : cfg.ratio;
            const auto runs = load_ledger(sel_ledger);
            const auto ids = select(runs, parse_strategy(sel_strategy), ratio, cfg.seed);
            json j{{"strategy", sel_strategy}, {"ratio", ratio}, {"seed", cfg.seed}, {"ids", ids}};
            ctx.emit(j.dump() + "\n");
            return kExitOk;
        };
    });

    // report
    auto* report = app.add_subcommand("report", "Cost report for a subset, or plot data");
    std::string rep_ledger, rep_subset, rep_plot;
    std::vector<std::string> rep_strategies;
    std::vector<double> rep_ratios;
    int rep_resamples = 0;
    report->add_option("ledger", rep_ledger, "Run ledger CSV")->required()->check(CLI::ExistingFile);
    auto* subset_opt =
        report->add_option("--subset", rep_subset, "Subset JSON from `select`")->check(CLI::ExistingFile);
    auto* plot_opt = report->add_option("--plot", rep_plot, "Plot data kind")
                         ->check(CLI::IsMember({"scatter", "prefilter_bars"}));
    subset_opt->excludes(plot_opt);
    report->add_option("--strategies", rep_strategies, "Strategies for prefilter_bars")->delimiter(',');
    report->add_option("--ratios", rep_ratios, "Ratios for prefilter_bars")->delimiter(',');
    report->add_option("--resamples", rep_resamples, "Random-selection resamples")
        ->check(CLI::PositiveNumber);
    report->callback([&] {
        action = [&] {
            const RunConfig cfg = ctx.config();
            const auto runs = load_ledger(rep_ledger);
            if (!rep_subset.empty()) {
                const auto ids = load_json(rep_subset).at("ids").get<std::vector<int>>();
                auto j = io::cost_report_to_json(cost_report(runs, ids, io::v_star_from_ledger(runs)));
                j["ids"] = ids;
                ctx.emit(j.dump(2) + "\n");
                return kExitOk;
            }
            if (rep_plot.empty()) throw Error(ErrorCode::InvalidInput, "report needs --subset or --plot");
            io::PlotOptions plot;
            plot.strategies = cfg.strategies;
            plot.ratios = cfg.ratios;
            plot.seed = cfg.seed;
            plot.random_resamples = rep_resamples > 0 ? rep_resamples : cfg.random_resamples;
            if (!rep_strategies.empty()) {
                plot.strategies.clear();
                for (const auto& s : rep_strategies) plot.strategies.push_back(parse_strategy(s));
            }
            if (!rep_ratios.empty()) {
                for (double r : rep_ratios)
                    if (!(r > 0.0 && r <= 1.0)) throw Error(ErrorCode::InvalidInput, "ratios must lie in (0, 1]");
                plot.ratios = rep_ratios;
            }
            const auto kind = rep_plot == "scatter" ? io::PlotKind::Scatter : io::PlotKind::PrefilterBars;
            ctx.emit(io::emit_plot_data(runs, kind, plot));
            return kExitOk;
        };
    });

    // fit-bound
    auto* fit = app.add_subcommand("fit-bound", "Fit the deployment bound on even ids, test on odd ids");
    std::string fit_ledger;
    fit->add_option("ledger", fit_ledger, "Run ledger CSV")->required()->check(CLI::ExistingFile);
    fit->callback([&] {
        action = [&] {
            const auto runs = load_ledger(fit_ledger);
            ctx.emit(io::bound_fit_to_json(fit_bound_even_odd(runs)).dump(2) + "\n");
            return kExitOk;
        };
    });

    // sweep
    auto* sweep = app.add_subcommand("sweep", "Mismatch of empirical twins versus sample count");
    std::string sweep_env;
    std::vector<std::int64_t> sweep_sizes{100, 1000, 10000, 100000};
    int sweep_seeds = 20;
    std::int64_t sweep_episode = 50;
    double sweep_kappa = 0.0;
    sweep->add_option("--env", sweep_env, "Environment spec JSON")->check(CLI::ExistingFile);
    sweep->add_option("--sizes", sweep_sizes, "Strictly increasing sample counts")->delimiter(',');
    sweep->add_option("--seeds", sweep_seeds, "Number of seeds")->check(CLI::PositiveNumber);
    sweep->add_option("--episode-length", sweep_episode, "Steps per episode")->check(CLI::PositiveNumber);
    sweep->add_option("--kappa", sweep_kappa, "Additive smoothing count")->check(CLI::NonNegativeNumber);
    sweep->callback([&] {
        action = [&] {
            const RunConfig cfg = ctx.config();
            const FiniteMdp real = build_real_env(load_spec(sweep_env, cfg));
            std::vector<std::uint64_t> seeds;
            for (int i = 0; i < sweep_seeds; ++i) seeds.push_back(split_seed(cfg.seed, "sweep", i));
            SweepOptions opts;
            opts.episode_length = sweep_episode;
            opts.kappa = sweep_kappa;
            opts.bsm = bsm_options(cfg);
            opts.bsm.threads = cfg.threads;
            const auto points = sample_sweep(real, real, sweep_sizes, seeds, opts);
            std::string csv = "n_steps,median";
            for (int i = 0; i < sweep_seeds; ++i) csv += ",seed_" + std::to_string(i);
            csv += '\n';
            for (const auto& p : points) {
                csv += std::to_string(p.n_steps) + ',' + io::format_double(p.median);
                for (double v : p.per_seed) csv += ',' + io::format_double(v);
                csv += '\n';
            }
            ctx.emit(csv);
            return kExitOk;
        };
    });

    auto fail = [&](std::string_view code, const std::string& message) {
        err << json{{"error", code}, {"message", message}}.dump() << '\n';
        return kExitValidation;
    };

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        return fail("InvalidInput", e.what());
    }

    try {
        return action ? action() : kExitOk;
    } catch (const Error& e) {
        return fail(error_name(e.code()), e.what());
    } catch (const json::exception& e) {
        return fail("InvalidInput", e.what());
    } catch (const fs::filesystem_error& e) {
        return fail("Io", e.what());
    }
}

}  // namespace dtbsm
