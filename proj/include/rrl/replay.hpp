#ifndef RRL_REPLAY_HPP
#define RRL_REPLAY_HPP

#include <cstddef>
#include <vector>

#include "rrl/errors.hpp"
#include "rrl/rng.hpp"

namespace rrl {

// One environment step. done is true only on task success, not on horizon
// truncation, so bootstrapping continues across truncations.
struct Transition {
    std::vector<double> state;
    std::vector<double> combined_action;  // a_c, the action executed
    std::vector<double> base_action;      // a_b
    double reward = 0.0;
    std::vector<double> next_state;
    bool done = false;
    bool used_residual = false;
};

// FIFO ring with uniform sampling (with replacement).
class ReplayBuffer {
public:
    explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
        if (capacity == 0) throw ConfigError("ReplayBuffer: capacity must be positive");
        storage_.reserve(capacity);
    }

    std::size_t capacity() const { return capacity_; }
    std::size_t size() const { return storage_.size(); }
    const Transition& at(std::size_t i) const { return storage_[i]; }

    void push(Transition t) {
        if (t.state.size() != t.next_state.size() ||
            t.combined_action.size() != t.base_action.size())
            throw ShapeError("ReplayBuffer::push: inconsistent transition");
        if (!t.used_residual && t.combined_action != t.base_action)
            throw ShapeError("ReplayBuffer::push: base-only step must store a_c == a_b");
        if (storage_.size() < capacity_) {
            storage_.push_back(std::move(t));
        } else {
            storage_[cursor_] = std::move(t);
        }
        cursor_ = (cursor_ + 1) % capacity_;
    }

    std::vector<std::size_t> sample_indices(std::size_t batch_size, Rng& rng) const {
        if (storage_.empty()) throw StateError("ReplayBuffer::sample: buffer is empty");
        std::vector<std::size_t> idx(batch_size);
        for (auto& i : idx) i = rng.next_below(storage_.size());
        return idx;
    }

private:
    std::size_t capacity_;
    std::size_t cursor_ = 0;
    std::vector<Transition> storage_;
};

} // namespace rrl

#endif
