#include "dbr/harness.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "dbr/connect4.hpp"
#include "dbr/envs.hpp"
#include "dbr/rng.hpp"

namespace dbr::harness {

namespace fs = std::filesystem;
using algorithms::AgentConfig;
using algorithms::MetricsRow;

namespace {

uint64_t fnv1a64(const std::string& data) {
    uint64_t h = 1469598103934665603ull;
    for (unsigned char c : data) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::string hex64(uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string fmt_opt(const std::optional<double>& v) { return v ? fmt_double(*v) : ""; }

const std::set<std::string> kKnownKeys = {
    "algo", "env", "mode", "dataset", "total_steps", "updates_per_step", "warmup_env_steps",
    "eval_interval", "eval_episodes",
    "seed", "out", "learning_rate", "batch_size", "gamma", "tau", "hidden",
    "buffer_capacity", "pretraining_steps", "steps_per_iteration", "reward_scale",
    "entropy_weight", "exploration_noise_floor", "lr_decay_after_steps", "lr_decay_factor",
    "critic_ensemble", "value_samples", "kernel_family", "kernel_sigma",
    "samples_per_state", "epsilon", "dual_lr", "lambda_init", "sil_weight", "mrl_tau",
    "mrl_log_floor", "advantage_source", "relabel_interval", "ddqn_eps_start",
    "ddqn_eps_end", "ddqn_eps_decay_steps"};

}  // namespace

const char* kMetricsHeader =
    "step,critic_loss,actor_loss,beta_plus_nll,beta_minus_nll,d_plus,d_minus,threshold,"
    "lambda,eval_return_mean,eval_return_std";

std::string format_metrics_row(const MetricsRow& r) {
    std::ostringstream os;
    os << r.step << ',' << fmt_opt(r.critic_loss) << ',' << fmt_opt(r.actor_loss) << ','
       << fmt_opt(r.beta_plus_nll) << ',' << fmt_opt(r.beta_minus_nll) << ',' << fmt_opt(r.d_plus)
       << ',' << fmt_opt(r.d_minus) << ',' << fmt_opt(r.threshold) << ',' << fmt_opt(r.lambda)
       << ',' << fmt_opt(r.eval_return_mean) << ',' << fmt_opt(r.eval_return_std);
    return os.str();
}

void RunConfig::validate() const {
    if (mode != "online" && mode != "offline")
        throw std::invalid_argument("mode: must be online or offline");
    if (mode == "offline" && dataset_path.empty())
        throw std::invalid_argument("dataset: required in offline mode");
    if (mode == "offline" && !fs::exists(dataset_path))
        throw std::invalid_argument("dataset: file not found: " + dataset_path);
    if (total_steps < 0) throw std::invalid_argument("total_steps: must be >= 0");
    if (updates_per_step <= 0) throw std::invalid_argument("updates_per_step: must be > 0");
    if (warmup_env_steps < 0) throw std::invalid_argument("warmup_env_steps: must be >= 0");
    if (eval_interval < 0) throw std::invalid_argument("eval_interval: must be >= 0");
    if (eval_episodes <= 0) throw std::invalid_argument("eval_episodes: must be > 0");
    if (out_dir.empty()) throw std::invalid_argument("out: must be non-empty");
    try {
        agent.validate();
    } catch (const std::exception& e) {
        throw std::invalid_argument(std::string("agent config: ") + e.what());
    }
    envs::make_env(env_id);  // throws on unknown ids
}

json RunConfig::to_json() const {
    json j;
    j["algo"] = algorithms::algo_to_string(agent.algo);
    j["env"] = env_id;
    j["mode"] = mode;
    j["dataset"] = dataset_path;
    j["total_steps"] = total_steps;
    j["updates_per_step"] = updates_per_step;
    j["warmup_env_steps"] = warmup_env_steps;
    j["eval_interval"] = eval_interval;
    j["eval_episodes"] = eval_episodes;
    j["seed"] = seed;
    j["out"] = out_dir;
    j["learning_rate"] = agent.learning_rate;
    j["batch_size"] = agent.batch_size;
    j["gamma"] = agent.gamma;
    j["tau"] = agent.tau;
    j["hidden"] = agent.hidden;
    j["buffer_capacity"] = agent.buffer_capacity;
    j["pretraining_steps"] = agent.pretraining_steps;
    j["steps_per_iteration"] = agent.steps_per_iteration;
    j["reward_scale"] = agent.reward_scale;
    j["entropy_weight"] = agent.entropy_weight;
    j["exploration_noise_floor"] = agent.exploration_noise_floor;
    j["lr_decay_after_steps"] = agent.lr_decay_after_steps;
    j["lr_decay_factor"] = agent.lr_decay_factor;
    j["critic_ensemble"] = agent.critic_ensemble;
    j["value_samples"] = agent.value_samples;
    j["kernel_family"] =
        agent.kernel.family == constraint::KernelFamily::laplacian ? "laplacian" : "gaussian";
    j["kernel_sigma"] = agent.kernel.sigma;
    j["samples_per_state"] = agent.kernel.samples_per_state;
    j["epsilon"] = agent.epsilon;
    j["dual_lr"] = agent.dual_lr;
    j["lambda_init"] = agent.lambda_init;
    j["sil_weight"] = agent.sil_weight;
    j["mrl_tau"] = agent.mrl_tau;
    j["mrl_log_floor"] = agent.mrl_log_floor;
    j["advantage_source"] = agent.advantage_source;
    j["relabel_interval"] = agent.relabel_interval;
    j["ddqn_eps_start"] = agent.ddqn_eps_start;
    j["ddqn_eps_end"] = agent.ddqn_eps_end;
    j["ddqn_eps_decay_steps"] = agent.ddqn_eps_decay_steps;
    return j;
}

RunConfig RunConfig::from_json(const json& j) {
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!kKnownKeys.count(it.key()))
            throw std::invalid_argument("unknown config field: " + it.key());
    RunConfig c;
    auto get = [&](const char* k, auto& field) {
        if (j.contains(k)) field = j.at(k).template get<std::decay_t<decltype(field)>>();
    };
    std::string algo = algorithms::algo_to_string(c.agent.algo);
    get("algo", algo);
    c.agent.algo = algorithms::algo_from_string(algo);
    get("env", c.env_id);
    get("mode", c.mode);
    get("dataset", c.dataset_path);
    get("total_steps", c.total_steps);
    get("updates_per_step", c.updates_per_step);
    get("warmup_env_steps", c.warmup_env_steps);
    get("eval_interval", c.eval_interval);
    get("eval_episodes", c.eval_episodes);
    get("seed", c.seed);
    get("out", c.out_dir);
    get("learning_rate", c.agent.learning_rate);
    get("batch_size", c.agent.batch_size);
    get("gamma", c.agent.gamma);
    get("tau", c.agent.tau);
    get("hidden", c.agent.hidden);
    get("buffer_capacity", c.agent.buffer_capacity);
    get("pretraining_steps", c.agent.pretraining_steps);
    get("steps_per_iteration", c.agent.steps_per_iteration);
    get("reward_scale", c.agent.reward_scale);
    get("entropy_weight", c.agent.entropy_weight);
    get("exploration_noise_floor", c.agent.exploration_noise_floor);
    get("lr_decay_after_steps", c.agent.lr_decay_after_steps);
    get("lr_decay_factor", c.agent.lr_decay_factor);
    get("critic_ensemble", c.agent.critic_ensemble);
    get("value_samples", c.agent.value_samples);
    if (j.contains("kernel_family"))
        c.agent.kernel.family = constraint::kernel_from_string(j.at("kernel_family"));
    get("kernel_sigma", c.agent.kernel.sigma);
    get("samples_per_state", c.agent.kernel.samples_per_state);
    get("epsilon", c.agent.epsilon);
    get("dual_lr", c.agent.dual_lr);
    get("lambda_init", c.agent.lambda_init);
    get("sil_weight", c.agent.sil_weight);
    get("mrl_tau", c.agent.mrl_tau);
    get("mrl_log_floor", c.agent.mrl_log_floor);
    get("advantage_source", c.agent.advantage_source);
    get("relabel_interval", c.agent.relabel_interval);
    get("ddqn_eps_start", c.agent.ddqn_eps_start);
    get("ddqn_eps_end", c.agent.ddqn_eps_end);
    get("ddqn_eps_decay_steps", c.agent.ddqn_eps_decay_steps);
    return c;
}

void DatasetRecipe::validate() const {
    if (regime != "random" && regime != "medium" && regime != "mixed")
        throw std::invalid_argument("regime: must be random, medium or mixed");
    if (size <= 0) throw std::invalid_argument("size: must be > 0");
    if (budget <= 0) throw std::invalid_argument("budget: must be > 0");
    if (out_path.empty()) throw std::invalid_argument("out: must be non-empty");
    envs::make_env(env_id);
}

algorithms::MaskFn mask_for_env(const std::string& env_id) {
    if (env_id.rfind("connect4", 0) == 0) {
        // top row occupancy encodes column legality
        return [](const Eigen::VectorXd& obs) {
            std::vector<bool> m(7);
            for (int c = 0; c < 7; ++c) m[c] = obs(5 * 7 + c) == 0.0;
            return m;
        };
    }
    return {};
}

namespace {

// Time-limit terminations on control tasks bootstrap (stored as a horizon
// cut); only true terminals carry done = 1. Board games end for real.
void push_transition(replay::ReplayBuffer& buf, const envs::EnvSpec& spec, long ep_len,
                     const Eigen::VectorXd& s, const Eigen::VectorXd& a, double r,
                     const Eigen::VectorXd& s2, bool done) {
    bool horizon_cut = done && !spec.discrete && ep_len >= spec.max_steps;
    buf.push_step(s, a, r, s2, done && !horizon_cut);
    if (horizon_cut) buf.end_episode();
}

void write_manifest(const RunConfig& cfg) {
    json m;
    m["format_version"] = 1;
    m["config"] = cfg.to_json();
    m["config_hash"] = hex64(fnv1a64(cfg.to_json().dump()));
    m["scaling"] = {{"paper_total_steps", 1000000},
                    {"paper_connect4_rollouts", 2000000},
                    {"paper_eval_episodes", 1000},
                    {"eval_episodes", cfg.eval_episodes},
                    {"total_steps", cfg.total_steps}};
    std::error_code ec;
    auto self = fs::read_symlink("/proc/self/exe", ec);
    if (!ec) {
        std::ifstream bin(self, std::ios::binary);
        std::ostringstream ss;
        ss << bin.rdbuf();
        m["binary"] = {{"path", self.string()}, {"hash", hex64(fnv1a64(ss.str()))}};
    }
    std::ofstream f(cfg.out_dir + "/manifest.json");
    f << m.dump(2) << "\n";
}

}  // namespace

algorithms::EvalResult run_training(const RunConfig& cfg) {
    cfg.validate();
    fs::create_directories(cfg.out_dir);
    auto env = envs::make_env(cfg.env_id);
    auto spec = env->spec();
    auto agent = algorithms::make_agent(cfg.agent, spec, cfg.seed);
    agent->set_mask_fn(mask_for_env(cfg.env_id));
    RngStreams streams(cfg.seed);
    auto env_rng = streams.stream("env");
    auto eval_seed = streams.stream("eval")();

    bool offline = cfg.mode == "offline";
    if (offline) {
        auto data = replay::ReplayBuffer::load(cfg.dataset_path);
        for (size_t i = 0; i < data.size(); ++i) agent->buffer().push_closed(data.at(i));
    }

    write_manifest(cfg);
    std::ofstream metrics(cfg.out_dir + "/metrics.csv");
    metrics << kMetricsHeader << "\n";

    algorithms::EvalResult last_eval;
    Eigen::VectorXd obs;
    if (!offline) obs = env->reset(env_rng);
    long env_steps = 0, grad_steps = 0, ep_len = 0;
    while ((offline ? grad_steps : env_steps) < cfg.total_steps) {
        if (!offline) {
            std::vector<bool> mask;
            if (spec.discrete) mask = env->legal_actions();
            Eigen::VectorXd a = agent->act(obs, true, mask);
            auto sr = env->step(a);
            ++ep_len;
            push_transition(agent->buffer(), spec, ep_len, obs, a, sr.reward, sr.next_state,
                            sr.done);
            if (sr.done) {
                obs = env->reset(env_rng);
                ep_len = 0;
            } else {
                obs = sr.next_state;
            }
            ++env_steps;
        }
        if (agent->buffer().size() < static_cast<size_t>(cfg.agent.batch_size)) continue;
        if (!offline && env_steps <= cfg.warmup_env_steps) continue;
        int reps = offline ? 1 : cfg.updates_per_step;
        for (int u = 0; u < reps; ++u) {
            auto row = agent->train_step();
            ++grad_steps;
            long tick = offline ? grad_steps : env_steps;
            row.step = tick;
            if (u == reps - 1 && cfg.eval_interval > 0 && tick % cfg.eval_interval == 0) {
                last_eval = algorithms::evaluate(*agent, *env, cfg.eval_episodes, eval_seed);
                row.eval_return_mean = last_eval.mean;
                row.eval_return_std = last_eval.stddev;
            }
            metrics << format_metrics_row(row) << "\n";
        }
    }
    agent->save(cfg.out_dir + "/checkpoint");
    return last_eval;
}

std::unique_ptr<algorithms::Agent> load_agent_from_run(const std::string& run_dir) {
    std::ifstream f(run_dir + "/manifest.json");
    if (!f) throw std::runtime_error("cannot open " + run_dir + "/manifest.json");
    json m = json::parse(f);
    RunConfig cfg = RunConfig::from_json(m.at("config"));
    auto spec = envs::make_env(cfg.env_id)->spec();
    auto agent = algorithms::make_agent(cfg.agent, spec, cfg.seed);
    agent->set_mask_fn(mask_for_env(cfg.env_id));
    agent->load(run_dir + "/checkpoint");
    return agent;
}

namespace {

void save_trimmed(const replay::ReplayBuffer& src, long size, double gamma,
                  const std::string& path, const std::string& env_id) {
    replay::ReplayBuffer out(static_cast<size_t>(size), gamma);
    for (long i = 0; i < size && i < static_cast<long>(src.size()); ++i)
        out.push_closed(src.at(i));
    out.save(path, env_id);
}

}  // namespace

void generate_dataset(const DatasetRecipe& recipe) {
    recipe.validate();
    auto env = envs::make_env(recipe.env_id);
    auto spec = env->spec();
    RngStreams streams(recipe.seed);
    auto env_rng = streams.stream("data-env");
    auto act_rng = streams.stream("data-act");

    if (recipe.regime == "random") {
        replay::ReplayBuffer buf(recipe.size + spec.max_steps + 1, recipe.agent.gamma);
        Eigen::VectorXd obs = env->reset(env_rng);
        std::uniform_real_distribution<double> ud(-1.0, 1.0);
        long ep_len = 0;
        while (buf.size() < static_cast<size_t>(recipe.size)) {
            Eigen::VectorXd a;
            if (spec.discrete) {
                auto legal = env->legal_actions();
                std::vector<int> cand;
                for (int i = 0; i < spec.n_actions; ++i)
                    if (legal.empty() || legal[i]) cand.push_back(i);
                std::uniform_int_distribution<size_t> pick(0, cand.size() - 1);
                a.resize(1);
                a(0) = cand[pick(act_rng)];
            } else {
                a = Eigen::VectorXd::NullaryExpr(spec.action_dim, [&] { return ud(act_rng); });
            }
            auto sr = env->step(a);
            ++ep_len;
            push_transition(buf, spec, ep_len, obs, a, sr.reward, sr.next_state, sr.done);
            if (sr.done) {
                obs = env->reset(env_rng);
                ep_len = 0;
            } else {
                obs = sr.next_state;
            }
        }
        save_trimmed(buf, recipe.size, recipe.agent.gamma, recipe.out_path, recipe.env_id);
        return;
    }

    // medium / mixed: train a SAC source agent for the scaled budget
    AgentConfig src_cfg = recipe.agent;
    src_cfg.algo = algorithms::Algo::sac;
    auto agent = algorithms::make_agent(src_cfg, spec, recipe.seed);
    agent->set_mask_fn(mask_for_env(recipe.env_id));
    Eigen::VectorXd obs = env->reset(env_rng);
    long ep_len = 0;
    for (long t = 0; t < recipe.budget; ++t) {
        std::vector<bool> mask;
        if (spec.discrete) mask = env->legal_actions();
        Eigen::VectorXd a = agent->act(obs, true, mask);
        auto sr = env->step(a);
        ++ep_len;
        push_transition(agent->buffer(), spec, ep_len, obs, a, sr.reward, sr.next_state, sr.done);
        if (sr.done) {
            obs = env->reset(env_rng);
            ep_len = 0;
        } else {
            obs = sr.next_state;
        }
        if (agent->buffer().size() >= static_cast<size_t>(src_cfg.batch_size))
            agent->train_step();
    }

    if (recipe.regime == "mixed") {
        // the training-time experience stream itself
        save_trimmed(agent->buffer(), std::min<long>(recipe.size, agent->buffer().size()),
                     src_cfg.gamma, recipe.out_path, recipe.env_id);
        return;
    }

    // medium: freeze the partially trained policy and roll it out
    replay::ReplayBuffer buf(recipe.size + spec.max_steps + 1, src_cfg.gamma);
    obs = env->reset(env_rng);
    ep_len = 0;
    while (buf.size() < static_cast<size_t>(recipe.size)) {
        std::vector<bool> mask;
        if (spec.discrete) mask = env->legal_actions();
        Eigen::VectorXd a = agent->act(obs, true, mask);
        auto sr = env->step(a);
        ++ep_len;
        push_transition(buf, spec, ep_len, obs, a, sr.reward, sr.next_state, sr.done);
        if (sr.done) {
            obs = env->reset(env_rng);
            ep_len = 0;
        } else {
            obs = sr.next_state;
        }
    }
    save_trimmed(buf, recipe.size, src_cfg.gamma, recipe.out_path, recipe.env_id);
}

TournamentReport connect4_tournament(algorithms::Agent& agent, const std::string& opponent,
                                     int games, uint64_t seed, bool alternate_colors) {
    if (games <= 0) throw std::invalid_argument("games: must be > 0");
    envs::Connect4Opponent opp;
    if (opponent == "random") {
        opp.kind = envs::Connect4Opponent::Kind::random;
    } else if (opponent.rfind("mcts:", 0) == 0) {
        opp.kind = envs::Connect4Opponent::Kind::mcts;
        opp.mcts_depth = std::stoi(opponent.substr(5));
    } else {
        throw std::invalid_argument("opponent: expected 'random' or 'mcts:<depth>'");
    }

    TournamentReport rep;
    rep.games = games;
    std::vector<double> scores;
    for (int g = 0; g < games; ++g) {
        bool first = alternate_colors ? (g % 2 == 0) : true;
        envs::Connect4Env env(opp, first);
        std::mt19937_64 rng(seed + static_cast<uint64_t>(g));
        Eigen::VectorXd obs = env.reset(rng);
        double last_r = 0.0;
        bool done = false;
        while (!done) {
            Eigen::VectorXd a = agent.act(obs, false, env.legal_actions());
            auto sr = env.step(a);
            last_r = sr.reward;
            obs = sr.next_state;
            done = sr.done;
        }
        if (last_r > 0.0) {
            ++rep.wins;
            scores.push_back(1.0);
        } else if (last_r == 0.0) {
            ++rep.draws;
            scores.push_back(0.5);
        } else {
            ++rep.losses;
            scores.push_back(0.0);
        }
    }
    rep.win_rate = (rep.wins + 0.5 * rep.draws) / static_cast<double>(games);

    int blocks = std::min(10, games);
    int per = games / blocks;
    std::vector<double> block_rates;
    for (int b = 0; b < blocks; ++b) {
        double acc = 0.0;
        for (int i = b * per; i < (b + 1) * per; ++i) acc += scores[i];
        block_rates.push_back(acc / per);
    }
    double mean = 0.0;
    for (double r : block_rates) mean += r;
    mean /= blocks;
    double ss = 0.0;
    for (double r : block_rates) ss += (r - mean) * (r - mean);
    rep.block_std = std::sqrt(ss / blocks);
    return rep;
}

namespace {

std::vector<double> masked_distribution(const Eigen::VectorXd& logits,
                                        const std::vector<bool>& legal) {
    Eigen::ArrayXd e = (logits.array() - logits.maxCoeff()).exp();
    for (int i = 0; i < e.size(); ++i)
        if (!legal[i]) e(i) = 0.0;
    double s = e.sum();
    std::vector<double> out(e.size());
    for (int i = 0; i < e.size(); ++i) out[i] = s > 0 ? e(i) / s : 0.0;
    return out;
}

}  // namespace

json dump_behavior(const std::string& run_dir, const std::vector<int>& moves) {
    auto agent_ptr = load_agent_from_run(run_dir);
    auto* agent = dynamic_cast<algorithms::ActorCriticAgent*>(agent_ptr.get());
    if (!agent) throw std::runtime_error("run checkpoint does not hold a policy-based agent");

    envs::Connect4Board board;
    for (int m : moves) board.play(m);
    Eigen::VectorXd obs = envs::Connect4Env::encode(board, board.side_to_move());
    std::vector<bool> legal(7);
    for (int c = 0; c < 7; ++c) legal[c] = board.legal(c);

    json out;
    out["moves"] = moves;
    out["legal"] = legal;
    out["pi"] = masked_distribution(agent->policy_net().forward(obs), legal);
    if (agent->beta_plus())
        out["beta_plus"] = masked_distribution(agent->beta_plus()->net.forward(obs), legal);
    if (agent->beta_minus())
        out["beta_minus"] = masked_distribution(agent->beta_minus()->net.forward(obs), legal);
    return out;
}

json theory_report_json(const theory::TheoryReport& rep) {
    json j;
    j["C_class"] = rep.C_class;
    j["C_beta"] = rep.C_beta;
    j["f_eps"] = rep.f_eps;
    j["tv_distance"] = rep.tv_distance;
    j["tv_bound"] = rep.tv_bound;
    j["tv_lemma_holds"] = rep.tv_lemma_holds;
    j["sup_ratio"] = rep.sup_ratio;
    j["sup_ratio_bound"] = rep.sup_ratio_bound;
    j["sup_ratio_holds"] = rep.sup_ratio_holds;
    j["bound_rhs"] = rep.bound_rhs;
    j["truncation_tail"] = rep.truncation_tail;
    j["class_size"] = rep.class_size;
    j["degenerate"] = rep.degenerate;
    j["vacuous"] = rep.vacuous;
    j["holds"] = rep.holds;
    return j;
}

std::vector<PlotRow> export_plot(const std::vector<std::string>& run_dirs) {
    std::vector<PlotRow> rows;
    for (const auto& dir : run_dirs) {
        std::ifstream f(dir + "/metrics.csv");
        if (!f) throw std::runtime_error("cannot open " + dir + "/metrics.csv");
        std::string line;
        std::getline(f, line);
        if (line != kMetricsHeader) throw std::runtime_error(dir + ": unexpected metrics header");
        std::vector<double> evals;
        while (std::getline(f, line)) {
            // eval_return_mean is the 10th column (0-based 9)
            int col = 0;
            std::istringstream ls(line);
            std::string cell, mean_cell;
            while (std::getline(ls, cell, ',')) {
                if (col == 9) mean_cell = cell;
                ++col;
            }
            if (!mean_cell.empty()) evals.push_back(std::stod(mean_cell));
        }
        PlotRow row;
        row.run = dir;
        int use = static_cast<int>(std::min<size_t>(10, evals.size()));
        row.evals_used = use;
        if (use > 0) {
            double mean = 0.0;
            for (int i = 0; i < use; ++i) mean += evals[evals.size() - use + i];
            mean /= use;
            double ss = 0.0;
            for (int i = 0; i < use; ++i) {
                double d = evals[evals.size() - use + i] - mean;
                ss += d * d;
            }
            row.mean = mean;
            row.stddev = std::sqrt(ss / use);
        }
        rows.push_back(row);
    }
    return rows;
}

}  // namespace dbr::harness
