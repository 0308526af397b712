#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <vector>

#include "dbr/envs.hpp"

namespace dbr::envs {

enum class Cell : int8_t { empty = 0, red = 1, yellow = 2 };
enum class C4Result { none, red, yellow, draw };

// 6x7 board, gravity along rows; red moves first in a fresh game.
class Connect4Board {
public:
    static constexpr int kRows = 6;
    static constexpr int kCols = 7;

    Cell at(int row, int col) const { return cells_[row * kCols + col]; }  // row 0 = bottom
    Cell side_to_move() const { return to_move_; }
    int height(int col) const { return heights_[col]; }

    bool legal(int col) const { return col >= 0 && col < kCols && heights_[col] < kRows; }
    void play(int col);  // throws on illegal column
    std::vector<int> legal_moves() const;
    bool full() const;

    C4Result winner() const;
    bool terminal() const { return winner() != C4Result::none; }

    // Validity per the board invariants (piece counts, at most one winner).
    bool valid() const;

    bool operator==(const Connect4Board&) const = default;

private:
    std::array<Cell, kRows * kCols> cells_{};
    std::array<int, kCols> heights_{};
    Cell to_move_ = Cell::red;
};

// Oracle-style exhaustive window scan; used by tests and kept naive on purpose.
C4Result scan_winner_naive(const Connect4Board& board);

// Immediate winning column for `player` if one exists.
std::optional<int> immediate_win(const Connect4Board& board, Cell player);

// UCT opponent: tree growth limited to `depth` plies, uniform random playouts
// past the frontier.
class MctsOpponent {
public:
    MctsOpponent(int depth, int rollouts_per_move = 500, double exploration = 1.4, uint64_t seed = 0)
        : depth_(depth), rollouts_(rollouts_per_move), c_(exploration), rng_(seed) {}

    int choose_move(const Connect4Board& board);  // throws on terminal board
    void reseed(uint64_t seed) { rng_.seed(seed); }

private:
    int depth_;
    int rollouts_;
    double c_;
    std::mt19937_64 rng_;
};

struct Connect4Opponent {
    enum class Kind { random, mcts } kind = Kind::random;
    int mcts_depth = 10;
    int mcts_rollouts = 500;
};

// Opponent moves folded into the transition; the agent plays one fixed color
// (red / first mover by default). Observation: 42 cells, +1 own, -1 opponent.
class Connect4Env : public Env {
public:
    Connect4Env(Connect4Opponent opponent, bool agent_moves_first = true);

    EnvSpec spec() const override;
    Eigen::VectorXd reset(std::mt19937_64& rng) override;
    StepResult step(const Eigen::VectorXd& action) override;
    std::vector<bool> legal_actions() const override;
    std::unique_ptr<Env> clone() const override;

    const Connect4Board& board() const { return board_; }
    void set_board(const Connect4Board& b) { board_ = b; }
    static Eigen::VectorXd encode(const Connect4Board& board, Cell agent_color);
    Cell agent_color() const { return agent_color_; }

private:
    void opponent_move();

    Connect4Opponent opp_cfg_;
    bool agent_first_;
    Cell agent_color_ = Cell::red;
    Connect4Board board_;
    std::unique_ptr<MctsOpponent> mcts_;
    std::mt19937_64 opp_rng_{0};
};

}  // namespace dbr::envs
