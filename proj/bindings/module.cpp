#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <fstream>
#include <random>

#include "dbr/harness.hpp"

namespace py = pybind11;
using dbr::harness::json;

namespace {

json to_json(const py::object& obj) {
    auto dumps = py::module_::import("json").attr("dumps");
    return json::parse(dumps(obj).cast<std::string>());
}

py::object from_json(const json& j) {
    auto loads = py::module_::import("json").attr("loads");
    return loads(j.dump());
}

dbr::constraint::KernelSpec kernel_spec(const std::string& family, double sigma, int samples,
                                        bool unbiased) {
    dbr::constraint::KernelSpec k;
    k.family = dbr::constraint::kernel_from_string(family);
    k.sigma = sigma;
    k.samples_per_state = samples;
    k.unbiased = unbiased;
    return k;
}

py::dict eval_dict(const dbr::algorithms::EvalResult& r) {
    py::dict d;
    d["episode_returns"] = r.episode_returns;
    d["mean"] = r.mean;
    d["std"] = r.stddev;
    if (r.win_rate) d["win_rate"] = *r.win_rate;
    return d;
}

}  // namespace

PYBIND11_MODULE(_dbr, m) {
    m.doc() = "dual-behavior-regularized RL workbench core";

    m.def(
        "return_to_go",
        [](const std::vector<double>& rewards, double gamma) {
            return dbr::replay::return_to_go(rewards, gamma);
        },
        py::arg("rewards"), py::arg("gamma"));

    m.def(
        "mmd_sq",
        [](const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, const std::string& family,
           double sigma, bool unbiased) {
            return dbr::constraint::mmd_sq(x, y, kernel_spec(family, sigma, 0, unbiased));
        },
        py::arg("samples_p"), py::arg("samples_q"), py::arg("family") = "laplacian",
        py::arg("sigma") = 20.0, py::arg("unbiased") = false);

    m.def("kl_discrete", &dbr::constraint::kl_discrete, py::arg("p"), py::arg("q"));

    py::class_<dbr::constraint::ConstraintState>(m, "ConstraintState")
        .def(py::init<>())
        .def_readwrite("epsilon", &dbr::constraint::ConstraintState::epsilon)
        .def_readwrite("d_plus_est", &dbr::constraint::ConstraintState::d_plus_est)
        .def_readwrite("d_minus_est", &dbr::constraint::ConstraintState::d_minus_est)
        .def_readwrite("lagrange_multiplier",
                       &dbr::constraint::ConstraintState::lagrange_multiplier)
        .def_readwrite("dual_step_size", &dbr::constraint::ConstraintState::dual_step_size)
        .def("threshold",
             [](const dbr::constraint::ConstraintState& s) {
                 return dbr::constraint::dynamic_threshold(s);
             })
        .def("dual_update", [](dbr::constraint::ConstraintState& s, double d_plus) {
            dbr::constraint::dual_update(s, d_plus);
            return s.lagrange_multiplier;
        });

    py::class_<dbr::envs::Env>(m, "Env")
        .def("reset",
             [](dbr::envs::Env& e, uint64_t seed) {
                 std::mt19937_64 rng(seed);
                 return e.reset(rng);
             },
             py::arg("seed") = 0)
        .def("step",
             [](dbr::envs::Env& e, const Eigen::VectorXd& a) {
                 auto sr = e.step(a);
                 return py::make_tuple(sr.next_state, sr.reward, sr.done);
             })
        .def("legal_actions", &dbr::envs::Env::legal_actions)
        .def("spec", [](const dbr::envs::Env& e) {
            auto s = e.spec();
            py::dict d;
            d["id"] = s.id;
            d["obs_dim"] = s.obs_dim;
            d["discrete"] = s.discrete;
            d["action_dim"] = s.action_dim;
            d["n_actions"] = s.n_actions;
            d["max_steps"] = s.max_steps;
            return d;
        });
    m.def("make_env", &dbr::envs::make_env, py::arg("id"));

    m.def(
        "train",
        [](const py::dict& config) {
            auto cfg = dbr::harness::RunConfig::from_json(to_json(config));
            return eval_dict(dbr::harness::run_training(cfg));
        },
        py::arg("config"));

    m.def(
        "generate_dataset",
        [](const std::string& regime, const std::string& env, long size, long budget,
           uint64_t seed, const std::string& out) {
            dbr::harness::DatasetRecipe r;
            r.regime = regime;
            r.env_id = env;
            r.size = size;
            r.budget = budget;
            r.seed = seed;
            r.out_path = out;
            dbr::harness::generate_dataset(r);
        },
        py::arg("regime"), py::arg("env"), py::arg("size"), py::arg("budget") = 100000,
        py::arg("seed") = 0, py::arg("out") = "dataset.jsonl");

    m.def(
        "evaluate_run",
        [](const std::string& run_dir, int episodes, uint64_t seed) {
            auto agent = dbr::harness::load_agent_from_run(run_dir);
            std::ifstream f(run_dir + "/manifest.json");
            json man = json::parse(f);
            auto env = dbr::envs::make_env(man.at("config").at("env"));
            return eval_dict(dbr::algorithms::evaluate(*agent, *env, episodes, seed));
        },
        py::arg("run_dir"), py::arg("episodes") = 100, py::arg("seed") = 0);

    m.def(
        "connect4_tournament",
        [](const std::string& run_dir, const std::string& opponent, int games, uint64_t seed) {
            auto agent = dbr::harness::load_agent_from_run(run_dir);
            auto rep = dbr::harness::connect4_tournament(*agent, opponent, games, seed);
            py::dict d;
            d["games"] = rep.games;
            d["wins"] = rep.wins;
            d["draws"] = rep.draws;
            d["losses"] = rep.losses;
            d["win_rate"] = rep.win_rate;
            d["block_std"] = rep.block_std;
            return d;
        },
        py::arg("run_dir"), py::arg("opponent") = "random", py::arg("games") = 100,
        py::arg("seed") = 0);

    m.def(
        "dump_behavior",
        [](const std::string& run_dir, const std::vector<int>& moves) {
            return from_json(dbr::harness::dump_behavior(run_dir, moves));
        },
        py::arg("run_dir"), py::arg("moves"));

    m.def(
        "verify_random_mdps",
        [](int n, uint64_t seed, double epsilon, double gamma) {
            std::mt19937_64 rng(seed);
            std::uniform_int_distribution<int> Sd(2, 5), Ad(2, 3);
            std::uniform_real_distribution<double> ud(0.05, 1.0);
            auto rand_policy = [&](int S, int A) {
                Eigen::MatrixXd p(S, A);
                for (int s = 0; s < S; ++s) {
                    for (int a = 0; a < A; ++a) p(s, a) = ud(rng);
                    p.row(s) /= p.row(s).sum();
                }
                return p;
            };
            int K = dbr::theory::horizon_for(gamma);
            py::list out;
            for (int i = 0; i < n; ++i) {
                auto mdp = dbr::tabular::TabularMdp::random(Sd(rng), Ad(rng), gamma, rng);
                auto bp = rand_policy(mdp.n_states, mdp.n_actions);
                auto bm = rand_policy(mdp.n_states, mdp.n_actions);
                auto rep = dbr::theory::verify_theorem(mdp, bp, bm, epsilon, K, seed + 1000 + i);
                out.append(from_json(dbr::harness::theory_report_json(rep)));
            }
            return out;
        },
        py::arg("n"), py::arg("seed") = 0, py::arg("epsilon") = 0.2, py::arg("gamma") = 0.9);

    m.def(
        "export_plot",
        [](const std::vector<std::string>& run_dirs) {
            py::list out;
            for (const auto& r : dbr::harness::export_plot(run_dirs)) {
                py::dict d;
                d["run"] = r.run;
                d["evals_used"] = r.evals_used;
                d["mean"] = r.mean;
                d["std"] = r.stddev;
                out.append(d);
            }
            return out;
        },
        py::arg("run_dirs"));
}
