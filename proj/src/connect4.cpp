#include "dbr/connect4.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dbr::envs {

void Connect4Board::play(int col) {
    if (!legal(col)) throw std::invalid_argument("connect4: illegal column " + std::to_string(col));
    cells_[heights_[col] * kCols + col] = to_move_;
    ++heights_[col];
    to_move_ = to_move_ == Cell::red ? Cell::yellow : Cell::red;
}

std::vector<int> Connect4Board::legal_moves() const {
    std::vector<int> out;
    for (int c = 0; c < kCols; ++c)
        if (legal(c)) out.push_back(c);
    return out;
}

bool Connect4Board::full() const {
    for (int c = 0; c < kCols; ++c)
        if (heights_[c] < kRows) return false;
    return true;
}

C4Result Connect4Board::winner() const {
    static constexpr int dirs[4][2] = {{0, 1}, {1, 0}, {1, 1}, {1, -1}};  // (drow, dcol)
    for (int r = 0; r < kRows; ++r) {
        for (int c = 0; c < kCols; ++c) {
            Cell p = at(r, c);
            if (p == Cell::empty) continue;
            for (const auto& d : dirs) {
                int er = r + 3 * d[0], ec = c + 3 * d[1];
                if (er < 0 || er >= kRows || ec < 0 || ec >= kCols) continue;
                bool line = true;
                for (int k = 1; k < 4; ++k)
                    if (at(r + k * d[0], c + k * d[1]) != p) {
                        line = false;
                        break;
                    }
                if (line) return p == Cell::red ? C4Result::red : C4Result::yellow;
            }
        }
    }
    return full() ? C4Result::draw : C4Result::none;
}

bool Connect4Board::valid() const {
    int red = 0, yellow = 0;
    for (int c = 0; c < kCols; ++c) {
        int h = 0;
        for (int r = 0; r < kRows; ++r) {
            Cell p = at(r, c);
            if (p != Cell::empty) {
                if (r != h) return false;  // floating piece
                ++h;
                (p == Cell::red ? red : yellow)++;
            }
        }
        for (int r = h; r < kRows; ++r)
            if (at(r, c) != Cell::empty) return false;
        if (h != heights_[c]) return false;
    }
    return std::abs(red - yellow) <= 1;
}

C4Result scan_winner_naive(const Connect4Board& board) {
    // All 69 length-4 windows, checked one by one.
    auto check = [&](int r, int c, int dr, int dc) -> C4Result {
        Cell first = board.at(r, c);
        if (first == Cell::empty) return C4Result::none;
        for (int k = 1; k < 4; ++k)
            if (board.at(r + k * dr, c + k * dc) != first) return C4Result::none;
        return first == Cell::red ? C4Result::red : C4Result::yellow;
    };
    for (int r = 0; r < Connect4Board::kRows; ++r)
        for (int c = 0; c < Connect4Board::kCols; ++c) {
            if (c + 3 < Connect4Board::kCols) {
                auto w = check(r, c, 0, 1);
                if (w != C4Result::none) return w;
            }
            if (r + 3 < Connect4Board::kRows) {
                auto w = check(r, c, 1, 0);
                if (w != C4Result::none) return w;
            }
            if (r + 3 < Connect4Board::kRows && c + 3 < Connect4Board::kCols) {
                auto w = check(r, c, 1, 1);
                if (w != C4Result::none) return w;
            }
            if (r + 3 < Connect4Board::kRows && c - 3 >= 0) {
                auto w = check(r, c, 1, -1);
                if (w != C4Result::none) return w;
            }
        }
    return board.full() ? C4Result::draw : C4Result::none;
}

std::optional<int> immediate_win(const Connect4Board& board, Cell player) {
    if (board.side_to_move() != player) return std::nullopt;
    for (int c : board.legal_moves()) {
        Connect4Board b = board;
        b.play(c);
        auto w = b.winner();
        if ((w == C4Result::red && player == Cell::red) ||
            (w == C4Result::yellow && player == Cell::yellow))
            return c;
    }
    return std::nullopt;
}

// --- MCTS ----------------------------------------------------------------

namespace {

struct UctNode {
    Connect4Board board;
    std::vector<int> untried;
    std::vector<std::unique_ptr<UctNode>> children;
    std::vector<int> child_move;
    UctNode* parent = nullptr;
    int visits = 0;
    double wins = 0.0;  // from the perspective of the player who just moved
};

// Uniform random playout; returns +1 if `perspective` wins, 0.5 draw, 0 loss.
double random_playout(Connect4Board board, Cell perspective, std::mt19937_64& rng) {
    while (true) {
        C4Result w = board.winner();
        if (w == C4Result::draw) return 0.5;
        if (w == C4Result::red) return perspective == Cell::red ? 1.0 : 0.0;
        if (w == C4Result::yellow) return perspective == Cell::yellow ? 1.0 : 0.0;
        auto moves = board.legal_moves();
        std::uniform_int_distribution<size_t> d(0, moves.size() - 1);
        board.play(moves[d(rng)]);
    }
}

}  // namespace

int MctsOpponent::choose_move(const Connect4Board& board) {
    if (board.terminal()) throw std::invalid_argument("mcts_move: terminal board");
    auto moves = board.legal_moves();
    if (moves.size() == 1) return moves[0];

    UctNode root;
    root.board = board;
    root.untried = moves;

    for (int it = 0; it < rollouts_; ++it) {
        UctNode* node = &root;
        int ply = 0;
        // selection
        while (node->untried.empty() && !node->children.empty() && ply < depth_) {
            double best = -1.0;
            UctNode* pick = nullptr;
            for (auto& ch : node->children) {
                double uct = ch->wins / ch->visits +
                             c_ * std::sqrt(std::log(static_cast<double>(node->visits)) / ch->visits);
                if (uct > best) {
                    best = uct;
                    pick = ch.get();
                }
            }
            node = pick;
            ++ply;
        }
        // expansion
        if (!node->untried.empty() && !node->board.terminal() && ply < depth_) {
            std::uniform_int_distribution<size_t> d(0, node->untried.size() - 1);
            size_t pick = d(rng_);
            int mv = node->untried[pick];
            node->untried.erase(node->untried.begin() + pick);
            auto child = std::make_unique<UctNode>();
            child->board = node->board;
            child->board.play(mv);
            child->untried = child->board.legal_moves();
            child->parent = node;
            node->child_move.push_back(mv);
            node->children.push_back(std::move(child));
            node = node->children.back().get();
        }
        // rollout from the frontier, scored for the player who just moved at `node`
        Cell mover_of_node = node->board.side_to_move() == Cell::red ? Cell::yellow : Cell::red;
        double result = random_playout(node->board, mover_of_node, rng_);
        // backprop, flipping perspective at each level
        double r = result;
        for (UctNode* n = node; n != nullptr; n = n->parent) {
            n->visits += 1;
            n->wins += r;
            r = 1.0 - r;
        }
    }

    int best_move = moves[0];
    int best_visits = -1;
    for (size_t i = 0; i < root.children.size(); ++i) {
        if (root.children[i]->visits > best_visits) {
            best_visits = root.children[i]->visits;
            best_move = root.child_move[i];
        }
    }
    return best_move;
}

// --- environment wrapper ---------------------------------------------------

Connect4Env::Connect4Env(Connect4Opponent opponent, bool agent_moves_first)
    : opp_cfg_(opponent), agent_first_(agent_moves_first) {
    agent_color_ = agent_first_ ? Cell::red : Cell::yellow;
    if (opp_cfg_.kind == Connect4Opponent::Kind::mcts)
        mcts_ = std::make_unique<MctsOpponent>(opp_cfg_.mcts_depth, opp_cfg_.mcts_rollouts);
}

std::unique_ptr<Env> Connect4Env::clone() const {
    auto e = std::make_unique<Connect4Env>(opp_cfg_, agent_first_);
    e->board_ = board_;
    e->opp_rng_ = opp_rng_;
    return e;
}

EnvSpec Connect4Env::spec() const {
    std::string id = opp_cfg_.kind == Connect4Opponent::Kind::random
                         ? "connect4-random"
                         : "connect4-mcts:" + std::to_string(opp_cfg_.mcts_depth);
    return {id, 42, true, 0, 7, 42, -1.0, 1.0};
}

Eigen::VectorXd Connect4Env::encode(const Connect4Board& board, Cell agent_color) {
    Eigen::VectorXd o(42);
    for (int r = 0; r < Connect4Board::kRows; ++r)
        for (int c = 0; c < Connect4Board::kCols; ++c) {
            Cell p = board.at(r, c);
            double v = 0.0;
            if (p != Cell::empty) v = p == agent_color ? 1.0 : -1.0;
            o(r * Connect4Board::kCols + c) = v;
        }
    return o;
}

Eigen::VectorXd Connect4Env::reset(std::mt19937_64& rng) {
    board_ = Connect4Board();
    opp_rng_.seed(rng());
    if (mcts_) mcts_->reseed(opp_rng_());
    if (!agent_first_) opponent_move();
    return encode(board_, agent_color_);
}

std::vector<bool> Connect4Env::legal_actions() const {
    std::vector<bool> out(7);
    for (int c = 0; c < 7; ++c) out[c] = board_.legal(c);
    return out;
}

void Connect4Env::opponent_move() {
    if (opp_cfg_.kind == Connect4Opponent::Kind::random) {
        auto moves = board_.legal_moves();
        std::uniform_int_distribution<size_t> d(0, moves.size() - 1);
        board_.play(moves[d(opp_rng_)]);
    } else {
        board_.play(mcts_->choose_move(board_));
    }
}

StepResult Connect4Env::step(const Eigen::VectorXd& action) {
    int col = static_cast<int>(std::lround(action(0)));
    board_.play(col);  // throws on illegal
    C4Result w = board_.winner();
    bool agent_red = agent_color_ == Cell::red;
    if (w != C4Result::none) {
        double r = w == C4Result::draw ? 0.0 : ((w == C4Result::red) == agent_red ? 1.0 : -1.0);
        return {encode(board_, agent_color_), r, true};
    }
    opponent_move();
    w = board_.winner();
    if (w != C4Result::none) {
        double r = w == C4Result::draw ? 0.0 : ((w == C4Result::red) == agent_red ? 1.0 : -1.0);
        return {encode(board_, agent_color_), r, true};
    }
    return {encode(board_, agent_color_), 0.0, false};
}

}  // namespace dbr::envs
