#ifndef RRL_UNCERTAINTY_HPP
#define RRL_UNCERTAINTY_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "rrl/errors.hpp"
#include "rrl/matrix.hpp"

namespace rrl {

// --- distance-to-data -------------------------------------------------------

// Exact 1-nearest-neighbor index over standardized demonstration states.
// Median-split kd-tree with exact branch-and-bound pruning; a leaf scans its
// points exhaustively, so answers equal the brute-force minimum.
class DemoStateIndex {
public:
    // identity_stats keeps raw coordinates (mean 0, std 1 per feature).
    explicit DemoStateIndex(const Matrix& demo_states, bool identity_stats = false) {
        if (demo_states.rows == 0)
            throw ConfigError("DemoStateIndex: empty demonstration set");
        const std::size_t m = demo_states.rows;
        const std::size_t f = demo_states.cols;
        mean_.assign(f, 0.0);
        std_.assign(f, 1.0);
        if (!identity_stats) {
            for (std::size_t r = 0; r < m; ++r)
                for (std::size_t c = 0; c < f; ++c) mean_[c] += demo_states(r, c);
            for (auto& v : mean_) v /= static_cast<double>(m);
            std::vector<double> var(f, 0.0);
            for (std::size_t r = 0; r < m; ++r)
                for (std::size_t c = 0; c < f; ++c) {
                    const double d = demo_states(r, c) - mean_[c];
                    var[c] += d * d;
                }
            for (std::size_t c = 0; c < f; ++c)
                std_[c] = std::max(std::sqrt(var[c] / static_cast<double>(m)), 1e-8);
        }

        points_ = Matrix(m, f);
        for (std::size_t r = 0; r < m; ++r)
            for (std::size_t c = 0; c < f; ++c)
                points_(r, c) = (demo_states(r, c) - mean_[c]) / std_[c];

        order_.resize(m);
        std::iota(order_.begin(), order_.end(), std::size_t{0});
        nodes_.reserve(2 * m / kLeafSize + 2);
        root_ = build(0, m, 0);
    }

    std::size_t size() const { return points_.rows; }
    std::size_t feature_dim() const { return points_.cols; }
    const std::vector<double>& feature_mean() const { return mean_; }
    const std::vector<double>& feature_std() const { return std_; }

    // minimum Euclidean distance from the standardized query to the stored
    // standardized states
    double distance_to_data(const std::vector<double>& state) const {
        if (state.size() != points_.cols)
            throw ShapeError("distance_to_data: feature count mismatch");
        std::vector<double> q(state.size());
        for (std::size_t c = 0; c < q.size(); ++c) {
            q[c] = (state[c] - mean_[c]) / std_[c];
            if (!std::isfinite(q[c]))
                throw NumericalError("distance_to_data: non-finite query state");
        }
        double best = std::numeric_limits<double>::infinity();
        search(root_, q, best);
        return std::sqrt(best);
    }

    // exhaustive scan, kept as the reference route
    double distance_to_data_bruteforce(const std::vector<double>& state) const {
        if (state.size() != points_.cols)
            throw ShapeError("distance_to_data_bruteforce: feature count mismatch");
        std::vector<double> q(state.size());
        for (std::size_t c = 0; c < q.size(); ++c) q[c] = (state[c] - mean_[c]) / std_[c];
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t r = 0; r < points_.rows; ++r)
            best = std::min(best, sq_dist(points_.row(r), q.data(), q.size()));
        return std::sqrt(best);
    }

private:
    static constexpr std::size_t kLeafSize = 16;
    static constexpr int kNoChild = -1;

    struct Node {
        std::size_t begin, end;  // range in order_ (leaf only)
        std::size_t axis = 0;
        double split = 0.0;
        int left = kNoChild, right = kNoChild;
        bool is_leaf = false;
    };

    static double sq_dist(const double* a, const double* b, std::size_t n) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double d = a[i] - b[i];
            s += d * d;
        }
        return s;
    }

    int build(std::size_t begin, std::size_t end, std::size_t depth) {
        Node node;
        node.begin = begin;
        node.end = end;
        if (end - begin <= kLeafSize) {
            node.is_leaf = true;
            nodes_.push_back(node);
            return static_cast<int>(nodes_.size() - 1);
        }
        // widest-spread axis
        const std::size_t f = points_.cols;
        std::size_t axis = depth % f;
        double best_spread = -1.0;
        for (std::size_t c = 0; c < f; ++c) {
            double lo = points_(order_[begin], c), hi = lo;
            for (std::size_t i = begin; i < end; ++i) {
                const double v = points_(order_[i], c);
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
            if (hi - lo > best_spread) {
                best_spread = hi - lo;
                axis = c;
            }
        }
        const std::size_t mid = begin + (end - begin) / 2;
        std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                         [&](std::size_t a, std::size_t b) {
                             return points_(a, axis) < points_(b, axis);
                         });
        node.axis = axis;
        node.split = points_(order_[mid], axis);
        nodes_.push_back(node);
        const int idx = static_cast<int>(nodes_.size() - 1);
        const int left = build(begin, mid, depth + 1);
        const int right = build(mid, end, depth + 1);
        nodes_[idx].left = left;
        nodes_[idx].right = right;
        return idx;
    }

    void search(int idx, const std::vector<double>& q, double& best_sq) const {
        const Node& node = nodes_[idx];
        if (node.is_leaf) {
            for (std::size_t i = node.begin; i < node.end; ++i)
                best_sq = std::min(best_sq, sq_dist(points_.row(order_[i]), q.data(), q.size()));
            return;
        }
        const double diff = q[node.axis] - node.split;
        const int near = diff < 0.0 ? node.left : node.right;
        const int far = diff < 0.0 ? node.right : node.left;
        search(near, q, best_sq);
        if (diff * diff <= best_sq) search(far, q, best_sq);
    }

    Matrix points_;  // standardized, M x F
    std::vector<double> mean_, std_;
    std::vector<std::size_t> order_;
    std::vector<Node> nodes_;
    int root_ = 0;
};

// --- threshold schedule -----------------------------------------------------

enum class DecayKind { ExpToZero, ExpToMin, Constant };

struct ThresholdSchedule {
    double max_threshold = 0.0;  // U
    double decay_rate = 1.0;     // in environment steps
    DecayKind kind = DecayKind::ExpToZero;
    double min_tau = 0.0;  // ExpToMin only

    double at(double step) const {
        if (step < 0.0) throw ConfigError("ThresholdSchedule: negative step");
        switch (kind) {
            case DecayKind::Constant:
                return max_threshold;
            case DecayKind::ExpToMin:
                return std::max(max_threshold * std::exp(-step / decay_rate), min_tau);
            default:
                return max_threshold * std::exp(-step / decay_rate);
        }
    }
};

// --- ensemble variance ------------------------------------------------------

// Per-dimension population variance of member predictions, averaged over
// action dimensions.
inline double ensemble_variance(const std::vector<std::vector<double>>& member_actions) {
    const std::size_t n = member_actions.size();
    if (n < 2) throw ConfigError("ensemble_variance: need at least 2 members");
    const std::size_t dim = member_actions[0].size();
    for (const auto& a : member_actions)
        if (a.size() != dim) throw ShapeError("ensemble_variance: member dimension mismatch");
    double total = 0.0;
    for (std::size_t d = 0; d < dim; ++d) {
        double mean = 0.0;
        for (const auto& a : member_actions) mean += a[d];
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (const auto& a : member_actions) {
            const double diff = a[d] - mean;
            var += diff * diff;
        }
        total += var / static_cast<double>(n);
    }
    return total / static_cast<double>(dim);
}

// --- gating -----------------------------------------------------------------

struct GateDecision {
    std::vector<double> action_taken;
    bool used_residual = false;
    double uncertainty_value = 0.0;
    double threshold_value = 0.0;
};

// uncertainty < tau -> base action alone; otherwise base + residual, clipped
// to the action bounds. Equality takes the combined branch.
inline GateDecision gate(double uncertainty, double tau,
                         const std::vector<double>& base_action,
                         const std::vector<double>& residual_action,
                         const std::vector<double>& action_bounds) {
    if (base_action.size() != residual_action.size() ||
        base_action.size() != action_bounds.size())
        throw ShapeError("gate: action dimension mismatch");
    GateDecision d;
    d.uncertainty_value = uncertainty;
    d.threshold_value = tau;
    if (uncertainty < tau) {
        d.action_taken = base_action;
        d.used_residual = false;
    } else {
        d.action_taken.resize(base_action.size());
        for (std::size_t i = 0; i < base_action.size(); ++i)
            d.action_taken[i] = std::clamp(base_action[i] + residual_action[i],
                                           -action_bounds[i], action_bounds[i]);
        d.used_residual = true;
    }
    return d;
}

} // namespace rrl

#endif
