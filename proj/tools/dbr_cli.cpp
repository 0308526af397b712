#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <random>

#include "dbr/harness.hpp"

using dbr::harness::json;

namespace {

// flags beat config-file values; only flags the user actually passed override
json merge_config(const std::string& config_path, const json& overrides) {
    json base = json::object();
    if (!config_path.empty()) {
        std::ifstream f(config_path);
        if (!f) throw std::invalid_argument("config: cannot open " + config_path);
        base = json::parse(f);
    }
    for (auto it = overrides.begin(); it != overrides.end(); ++it) base[it.key()] = it.value();
    return base;
}

dbr::tabular::PolicyTable random_policy(int S, int A, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> ud(0.05, 1.0);
    Eigen::MatrixXd p(S, A);
    for (int s = 0; s < S; ++s) {
        for (int a = 0; a < A; ++a) p(s, a) = ud(rng);
        p.row(s) /= p.row(s).sum();
    }
    return p;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"dual-behavior-regularized RL workbench"};
    app.require_subcommand(1);

    // --- train ---------------------------------------------------------------
    auto* train = app.add_subcommand("train", "run a training loop");
    std::string t_config, t_algo, t_env, t_mode, t_dataset, t_out, t_advantage;
    long t_steps = 0, t_eval_interval = 0, t_eval_episodes = 0, t_pretrain = -1, t_relabel = 0;
    uint64_t t_seed = 0;
    double t_lr = 0, t_eps = 0, t_lambda = -1, t_dual_lr = 0, t_reward_scale = 0;
    int t_batch = 0;
    std::vector<int> t_hidden;
    train->add_option("--config", t_config, "JSON config file");
    train->add_option("--algo", t_algo, "sac|ddqn|bear|dbr|arm-fixed|sil|mrl");
    train->add_option("--env", t_env, "environment id");
    train->add_option("--mode", t_mode, "online|offline");
    train->add_option("--dataset", t_dataset, "dataset path (offline mode)");
    train->add_option("--out", t_out, "output directory");
    train->add_option("--steps", t_steps, "total steps");
    train->add_option("--eval-interval", t_eval_interval);
    train->add_option("--eval-episodes", t_eval_episodes);
    train->add_option("--seed", t_seed);
    train->add_option("--lr", t_lr);
    train->add_option("--batch", t_batch);
    train->add_option("--hidden", t_hidden)->delimiter(',');
    train->add_option("--epsilon", t_eps);
    train->add_option("--lambda-init", t_lambda);
    train->add_option("--dual-lr", t_dual_lr);
    train->add_option("--reward-scale", t_reward_scale);
    train->add_option("--pretraining-steps", t_pretrain);
    train->add_option("--relabel-interval", t_relabel);

    // --- eval ----------------------------------------------------------------
    auto* ev = app.add_subcommand("eval", "evaluate a trained run");
    std::string e_run;
    int e_episodes = 100;
    uint64_t e_seed = 0;
    ev->add_option("--run", e_run)->required();
    ev->add_option("--episodes", e_episodes);
    ev->add_option("--seed", e_seed);

    // --- gen-dataset -----------------------------------------------------------
    auto* gen = app.add_subcommand("gen-dataset", "generate an offline dataset");
    dbr::harness::DatasetRecipe recipe;
    std::vector<int> g_hidden;
    double g_lr = 0;
    int g_batch = 0;
    gen->add_option("--regime", recipe.regime, "random|medium|mixed")->required();
    gen->add_option("--env", recipe.env_id);
    gen->add_option("--size", recipe.size);
    gen->add_option("--budget", recipe.budget, "source-agent env steps (medium/mixed)");
    gen->add_option("--seed", recipe.seed);
    gen->add_option("--out", recipe.out_path)->required();
    gen->add_option("--hidden", g_hidden)->delimiter(',');
    gen->add_option("--lr", g_lr);
    gen->add_option("--batch", g_batch);

    // --- connect4-eval ----------------------------------------------------------
    auto* c4 = app.add_subcommand("connect4-eval", "tournament against a fixed opponent");
    std::string c_run, c_opp = "random";
    int c_games = 100;
    uint64_t c_seed = 0;
    bool c_no_alternate = false;
    c4->add_option("--run", c_run)->required();
    c4->add_option("--opponent", c_opp, "random | mcts:<depth>");
    c4->add_option("--games", c_games);
    c4->add_option("--seed", c_seed);
    c4->add_flag("--no-alternate", c_no_alternate, "agent always moves first");

    // --- dump-behavior ----------------------------------------------------------
    auto* dump = app.add_subcommand("dump-behavior", "behavior/policy distributions at a position");
    std::string d_run;
    std::vector<int> d_moves;
    dump->add_option("--run", d_run)->required();
    dump->add_option("--moves", d_moves, "move sequence from the empty board")->delimiter(',');

    // --- verify-theory ------------------------------------------------------------
    auto* th = app.add_subcommand("verify-theory", "finite-MDP bound verification");
    std::string th_mdp, th_out;
    int th_random = 0;
    uint64_t th_seed = 0;
    double th_eps = 0.2, th_gamma = 0.9;
    th->add_option("--mdp", th_mdp, "TabularMdp JSON file");
    th->add_option("--random", th_random, "number of random instances");
    th->add_option("--seed", th_seed);
    th->add_option("--epsilon", th_eps);
    th->add_option("--gamma", th_gamma, "discount for random instances");
    th->add_option("--out", th_out, "JSONL report file (default stdout)");

    // --- export-plot -----------------------------------------------------------
    auto* plot = app.add_subcommand("export-plot", "aggregate eval returns across runs");
    std::vector<std::string> p_runs;
    std::string p_out;
    plot->add_option("runs", p_runs, "run directories")->required();
    plot->add_option("--out", p_out, "output CSV (default stdout)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*train) {
            json ov = json::object();
            if (train->count("--algo")) ov["algo"] = t_algo;
            if (train->count("--env")) ov["env"] = t_env;
            if (train->count("--mode")) ov["mode"] = t_mode;
            if (train->count("--dataset")) ov["dataset"] = t_dataset;
            if (train->count("--out")) ov["out"] = t_out;
            if (train->count("--steps")) ov["total_steps"] = t_steps;
            if (train->count("--eval-interval")) ov["eval_interval"] = t_eval_interval;
            if (train->count("--eval-episodes")) ov["eval_episodes"] = t_eval_episodes;
            if (train->count("--seed")) ov["seed"] = t_seed;
            if (train->count("--lr")) ov["learning_rate"] = t_lr;
            if (train->count("--batch")) ov["batch_size"] = t_batch;
            if (train->count("--hidden")) ov["hidden"] = t_hidden;
            if (train->count("--epsilon")) ov["epsilon"] = t_eps;
            if (train->count("--lambda-init")) ov["lambda_init"] = t_lambda;
            if (train->count("--dual-lr")) ov["dual_lr"] = t_dual_lr;
            if (train->count("--reward-scale")) ov["reward_scale"] = t_reward_scale;
            if (train->count("--pretraining-steps")) ov["pretraining_steps"] = t_pretrain;
            if (train->count("--relabel-interval")) ov["relabel_interval"] = t_relabel;
            auto cfg = dbr::harness::RunConfig::from_json(merge_config(t_config, ov));
            auto last = dbr::harness::run_training(cfg);
            if (!last.episode_returns.empty())
                std::printf("final eval: mean=%.6f std=%.6f\n", last.mean, last.stddev);
            std::printf("run written to %s\n", cfg.out_dir.c_str());
        } else if (*ev) {
            auto agent = dbr::harness::load_agent_from_run(e_run);
            std::ifstream mf(e_run + "/manifest.json");
            json m = json::parse(mf);
            auto env = dbr::envs::make_env(m.at("config").at("env"));
            auto res = dbr::algorithms::evaluate(*agent, *env, e_episodes, e_seed);
            std::printf("episodes=%zu mean=%.6f std=%.6f", res.episode_returns.size(), res.mean,
                        res.stddev);
            if (res.win_rate) std::printf(" win_rate=%.4f", *res.win_rate);
            std::printf("\n");
        } else if (*gen) {
            if (gen->count("--hidden")) recipe.agent.hidden = g_hidden;
            if (gen->count("--lr")) recipe.agent.learning_rate = g_lr;
            if (gen->count("--batch")) recipe.agent.batch_size = g_batch;
            dbr::harness::generate_dataset(recipe);
            std::printf("dataset written to %s\n", recipe.out_path.c_str());
        } else if (*c4) {
            auto agent = dbr::harness::load_agent_from_run(c_run);
            auto rep = dbr::harness::connect4_tournament(*agent, c_opp, c_games, c_seed,
                                                         !c_no_alternate);
            std::printf("games=%d wins=%d draws=%d losses=%d win_rate=%.4f block_std=%.4f\n",
                        rep.games, rep.wins, rep.draws, rep.losses, rep.win_rate, rep.block_std);
        } else if (*dump) {
            std::cout << dbr::harness::dump_behavior(d_run, d_moves).dump(2) << "\n";
        } else if (*th) {
            std::ofstream out_file;
            std::ostream* os = &std::cout;
            if (!th_out.empty()) {
                out_file.open(th_out);
                os = &out_file;
            }
            int total = 0, violations = 0;
            if (!th_mdp.empty()) {
                auto mdp = dbr::tabular::TabularMdp::load(th_mdp);
                std::mt19937_64 rng(th_seed);
                auto bp = random_policy(mdp.n_states, mdp.n_actions, rng);
                auto bm = random_policy(mdp.n_states, mdp.n_actions, rng);
                int K = dbr::theory::horizon_for(mdp.gamma);
                auto rep = dbr::theory::verify_theorem(mdp, bp, bm, th_eps, K, th_seed);
                *os << dbr::harness::theory_report_json(rep).dump() << "\n";
                total = 1;
                violations = rep.holds ? 0 : 1;
            } else if (th_random > 0) {
                std::mt19937_64 rng(th_seed);
                std::uniform_int_distribution<int> Sd(2, 5), Ad(2, 3);
                int K = dbr::theory::horizon_for(th_gamma);
                for (int i = 0; i < th_random; ++i) {
                    auto mdp = dbr::tabular::TabularMdp::random(Sd(rng), Ad(rng), th_gamma, rng);
                    auto bp = random_policy(mdp.n_states, mdp.n_actions, rng);
                    auto bm = random_policy(mdp.n_states, mdp.n_actions, rng);
                    auto rep = dbr::theory::verify_theorem(mdp, bp, bm, th_eps, K,
                                                           th_seed + 1000 + i);
                    *os << dbr::harness::theory_report_json(rep).dump() << "\n";
                    ++total;
                    if (!rep.holds) ++violations;
                }
            } else {
                throw std::invalid_argument("verify-theory: pass --mdp or --random n");
            }
            std::printf("violations: %d/%d\n", violations, total);
            return violations == 0 ? 0 : 1;
        } else if (*plot) {
            auto rows = dbr::harness::export_plot(p_runs);
            std::ofstream out_file;
            std::ostream* os = &std::cout;
            if (!p_out.empty()) {
                out_file.open(p_out);
                os = &out_file;
            }
            *os << "run,evals_used,mean,std\n";
            for (const auto& r : rows)
                *os << r.run << ',' << r.evals_used << ',' << r.mean << ',' << r.stddev << "\n";
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
