#pragma once

#include <memory>
#include <nlohmann/json.hpp>
#include <ostream>
#include <string>
#include <vector>

#include "dbr/agents.hpp"
#include "dbr/theory.hpp"

namespace dbr::harness {

using nlohmann::json;

// Resolved run configuration: file values merged with CLI overrides. The
// manifest stores exactly this, so a run directory reproduces itself.
struct RunConfig {
    algorithms::AgentConfig agent;
    std::string env_id = "pointmass-v0";
    std::string mode = "online";  // online | offline
    std::string dataset_path;
    long total_steps = 10000;  // env steps online, gradient steps offline
    int updates_per_step = 1;   // gradient steps per env step (online only)
    long warmup_env_steps = 0;  // env steps collected before the first update (online only)
    long eval_interval = 1000;
    int eval_episodes = 100;  // paper protocol uses 1000; scaled default
    uint64_t seed = 0;
    std::string out_dir = "run";

    void validate() const;  // throws naming the offending field
    json to_json() const;
    static RunConfig from_json(const json& j);  // unknown keys rejected by name
};

struct DatasetRecipe {
    std::string regime = "random";  // random | medium | mixed
    std::string env_id = "pointmass-v0";
    long size = 10000;     // transitions in the output file
    long budget = 100000;  // medium/mixed source-agent env steps (paper: 1M, scaled)
    uint64_t seed = 0;
    std::string out_path = "dataset.jsonl";
    algorithms::AgentConfig agent;  // source agent for medium/mixed

    void validate() const;
};

// metrics.csv column order, fixed
extern const char* kMetricsHeader;
std::string format_metrics_row(const algorithms::MetricsRow& row);

// Legality oracle derived from the observation encoding (empty for envs
// without action constraints).
algorithms::MaskFn mask_for_env(const std::string& env_id);

// Full training run: writes manifest.json, metrics.csv, checkpoint/ under
// cfg.out_dir. Returns the final evaluation result (empty if never evaluated).
algorithms::EvalResult run_training(const RunConfig& cfg);

// Rebuild an agent from a run directory's manifest + checkpoint.
std::unique_ptr<algorithms::Agent> load_agent_from_run(const std::string& run_dir);

void generate_dataset(const DatasetRecipe& recipe);

struct TournamentReport {
    int games = 0, wins = 0, draws = 0, losses = 0;
    double win_rate = 0.0;   // (wins + 0.5 draws) / games
    double block_std = 0.0;  // std of per-block win rates, 10 blocks
};
TournamentReport connect4_tournament(algorithms::Agent& agent, const std::string& opponent,
                                     int games, uint64_t seed, bool alternate_colors = true);

// Normalized per-column action distributions of pi, beta+ and beta- at the
// position reached by the given move sequence; illegal columns carry mass 0.
json dump_behavior(const std::string& run_dir, const std::vector<int>& moves);

json theory_report_json(const theory::TheoryReport& rep);

struct PlotRow {
    std::string run;
    int evals_used = 0;  // up to the last 10 evaluation rows
    double mean = 0.0;
    double stddev = 0.0;
};
std::vector<PlotRow> export_plot(const std::vector<std::string>& run_dirs);

}  // namespace dbr::harness
