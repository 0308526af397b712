// Criterion 10: constraint satisfaction and multiplier positivity, verified
// from a training run's metrics CSV alone.
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <vector>

#include "acceptance.hpp"
#include "dbr/harness.hpp"

using namespace dbr;
namespace fs = std::filesystem;

namespace {

struct CsvRow {
    std::optional<double> d_plus, d_minus, lambda;
};

std::vector<CsvRow> read_metrics(const std::string& path) {
    std::ifstream f(path);
    std::string line;
    std::getline(f, line);  // header
    std::vector<CsvRow> rows;
    while (std::getline(f, line)) {
        std::istringstream ls(line);
        std::string cell;
        CsvRow row;
        for (int col = 0; std::getline(ls, cell, ','); ++col) {
            if (cell.empty()) continue;
            if (col == 5) row.d_plus = std::stod(cell);
            if (col == 6) row.d_minus = std::stod(cell);
            if (col == 8) row.lambda = std::stod(cell);
        }
        rows.push_back(row);
    }
    return rows;
}

}  // namespace

int main() {
    Gate gate;
    Stopwatch sw;

    fs::path dir = fs::temp_directory_path() / "dbr_acceptance_constraint";
    fs::remove_all(dir);
    fs::create_directories(dir);

    harness::DatasetRecipe recipe;
    recipe.regime = "random";
    recipe.env_id = "pointmass-v0";
    recipe.size = 5000;
    recipe.seed = 101;
    recipe.out_path = (dir / "data.jsonl").string();
    harness::generate_dataset(recipe);

    harness::RunConfig cfg;
    cfg.agent.algo = algorithms::Algo::dbr;
    cfg.agent.hidden = {64, 64};
    cfg.agent.batch_size = 128;
    cfg.agent.pretraining_steps = 500;
    cfg.env_id = "pointmass-v0";
    cfg.mode = "offline";
    cfg.dataset_path = recipe.out_path;
    cfg.total_steps = 4000;
    cfg.eval_interval = 2000;
    cfg.eval_episodes = 10;
    cfg.seed = 7;
    cfg.out_dir = (dir / "run").string();
    harness::run_training(cfg);

    auto rows = read_metrics(cfg.out_dir + "/metrics.csv");
    double epsilon = cfg.agent.epsilon;

    bool lambda_ok = true;
    long lambda_rows = 0;
    for (const auto& r : rows)
        if (r.lambda) {
            ++lambda_rows;
            if (*r.lambda < 0.0) lambda_ok = false;
        }

    size_t tail_start = rows.size() - rows.size() / 5;  // last 20%
    long checked = 0, satisfied = 0;
    for (size_t i = tail_start; i < rows.size(); ++i) {
        if (!rows[i].d_plus) continue;
        ++checked;
        double threshold = std::max(epsilon, rows[i].d_minus.value_or(0.0));
        if (*rows[i].d_plus <= threshold + 0.05) ++satisfied;
    }
    double frac = checked > 0 ? double(satisfied) / checked : 0.0;

    std::ostringstream os;
    os << "constraint satisfied " << satisfied << "/" << checked << " (" << frac
       << ") over the last 20%, lambda >= 0 on " << lambda_rows << " rows, " << sw.seconds()
       << "s";
    gate.report(10, "constraint behavior", frac >= 0.9 && lambda_ok && checked > 0, os.str());
    return gate.exit_code();
}
