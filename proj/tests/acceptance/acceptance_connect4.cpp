// Criteria 8 and 9: scaled Connect-4 study. Trains the dual-behavior agent on
// 10 seeds and a double-DQN baseline under the identical protocol, then
// compares tournament win rates and checks the forced-block diagnostic.
#include <cmath>
#include <filesystem>
#include <sstream>
#include <vector>

#include "acceptance.hpp"
#include "dbr/connect4.hpp"
#include "dbr/harness.hpp"

using namespace dbr;
namespace fs = std::filesystem;

namespace {

const long kTrainSteps = 200000;  // scaled from the full-size 2M budget
const int kRandomGames = 200;
const int kMctsGames = 100;

harness::RunConfig c4_config(algorithms::Algo algo, uint64_t seed, const std::string& out) {
    harness::RunConfig cfg;
    cfg.agent.algo = algo;
    cfg.agent.hidden = {64, 64};
    cfg.agent.batch_size = 128;
    cfg.agent.pretraining_steps = 2000;
    cfg.env_id = "connect4-random";
    cfg.total_steps = kTrainSteps;
    cfg.eval_interval = 0;  // tournaments below are the evaluation
    cfg.eval_episodes = 1;
    cfg.seed = seed;
    cfg.out_dir = out;
    return cfg;
}

// Negamax value for the side to move: +1 forced win, -1 forced loss within
// the searched depth, 0 otherwise. The oracle for the forced-block position.
int negamax(const envs::Connect4Board& b, int depth) {
    auto w = b.winner();
    if (w == envs::C4Result::draw) return 0;
    if (w != envs::C4Result::none) return -1;  // previous mover just won
    if (depth == 0) return 0;
    int best = -1;
    for (int m : b.legal_moves()) {
        envs::Connect4Board child = b;
        child.play(m);
        best = std::max(best, -negamax(child, depth - 1));
        if (best == 1) break;
    }
    return best;
}

// Threat in the right-most column: three yellow stones stacked in column 6,
// red stones spread on the bottom row, red to move.
envs::Connect4Board forced_block_position() {
    envs::Connect4Board b;
    for (int m : {0, 6, 2, 6, 4, 6}) b.play(m);
    return b;
}

// The position is only usable if the minimax oracle confirms a single
// non-losing move, which is the blocking column.
bool oracle_confirms_block(const envs::Connect4Board& b, int block_col) {
    if (b.side_to_move() != envs::Cell::red) return false;
    for (int m : b.legal_moves()) {
        envs::Connect4Board child = b;
        child.play(m);
        int value_for_red = -negamax(child, 4);
        if (m == block_col && value_for_red == -1) return false;
        if (m != block_col && value_for_red != -1) return false;
    }
    return true;
}

}  // namespace

int main() {
    Gate gate;
    fs::path dir = fs::temp_directory_path() / "dbr_acceptance_connect4";
    fs::remove_all(dir);
    fs::create_directories(dir);

    auto block_board = forced_block_position();
    const int kBlockCol = 6;
    bool oracle_ok = oracle_confirms_block(block_board, kBlockCol);
    Eigen::VectorXd block_obs = envs::Connect4Env::encode(block_board, envs::Cell::red);
    std::vector<bool> block_mask(7);
    for (int c = 0; c < 7; ++c) block_mask[c] = block_board.legal(c);

    double dbr_random_sum = 0.0, dbr_mcts_sum = 0.0;
    int blocked = 0;
    const int kDbrSeeds = 10;
    for (int seed = 0; seed < kDbrSeeds; ++seed) {
        Stopwatch sw;
        auto cfg = c4_config(algorithms::Algo::dbr, 100 + seed,
                             (dir / ("dbr_s" + std::to_string(seed))).string());
        harness::run_training(cfg);
        auto agent = harness::load_agent_from_run(cfg.out_dir);
        auto vs_random =
            harness::connect4_tournament(*agent, "random", kRandomGames, 9000 + seed);
        auto vs_mcts = harness::connect4_tournament(*agent, "mcts:4", kMctsGames, 9500 + seed);
        dbr_random_sum += vs_random.win_rate;
        dbr_mcts_sum += vs_mcts.win_rate;
        int choice = static_cast<int>(agent->act(block_obs, false, block_mask)(0));
        if (choice == kBlockCol) ++blocked;
        std::printf("  dbr seed %d: vs-random %.3f, vs-mcts4 %.3f, block move %d (%ds)\n", seed,
                    vs_random.win_rate, vs_mcts.win_rate, choice, int(sw.seconds()));
        std::fflush(stdout);
    }
    double dbr_random = dbr_random_sum / kDbrSeeds;
    double dbr_mcts = dbr_mcts_sum / kDbrSeeds;

    double ddqn_random_sum = 0.0, ddqn_mcts_sum = 0.0;
    const int kDdqnSeeds = 3;
    for (int seed = 0; seed < kDdqnSeeds; ++seed) {
        Stopwatch sw;
        auto cfg = c4_config(algorithms::Algo::ddqn, 100 + seed,
                             (dir / ("ddqn_s" + std::to_string(seed))).string());
        harness::run_training(cfg);
        auto agent = harness::load_agent_from_run(cfg.out_dir);
        auto vs_random =
            harness::connect4_tournament(*agent, "random", kRandomGames, 9000 + seed);
        auto vs_mcts = harness::connect4_tournament(*agent, "mcts:4", kMctsGames, 9500 + seed);
        ddqn_random_sum += vs_random.win_rate;
        ddqn_mcts_sum += vs_mcts.win_rate;
        std::printf("  ddqn seed %d: vs-random %.3f, vs-mcts4 %.3f (%ds)\n", seed,
                    vs_random.win_rate, vs_mcts.win_rate, int(sw.seconds()));
        std::fflush(stdout);
    }
    double ddqn_random = ddqn_random_sum / kDdqnSeeds;
    double ddqn_mcts = ddqn_mcts_sum / kDdqnSeeds;

    {
        std::ostringstream os;
        os.precision(4);
        os << "vs random: dbr " << dbr_random << " ddqn " << ddqn_random << "; vs mcts:4: dbr "
           << dbr_mcts << " ddqn " << ddqn_mcts;
        bool ok = dbr_random >= 0.90 && dbr_random > ddqn_random && dbr_mcts >= ddqn_mcts + 0.1;
        gate.report(8, "connect-4 scaled study", ok, os.str());
    }
    {
        std::ostringstream os;
        os << "oracle " << (oracle_ok ? "confirmed" : "REJECTED") << " forced block at column "
           << kBlockCol << "; blocked in " << blocked << "/" << kDbrSeeds << " seeds";
        gate.report(9, "forced-block diagnostic", oracle_ok && blocked >= 9, os.str());
    }
    return gate.exit_code();
}
