#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

#include "fqf/error.hpp"

namespace fqf::rl {

struct Transition {
    std::size_t x;
    std::size_t a;
    double r;
    std::size_t next;
    bool terminal;
};

/// Fixed-capacity ring buffer with uniform sampling (with replacement).
class ReplayBuffer {
public:
    explicit ReplayBuffer(std::size_t capacity, std::uint64_t seed = 0) : capacity_(capacity), rng_(seed) {
        if (capacity == 0) throw InvalidArgument("replay: capacity must be positive");
        items_.reserve(capacity);
    }

    void add(const Transition& t) {
        if (!std::isfinite(t.r)) throw InvalidArgument("replay: reward must be finite");
        if (items_.size() < capacity_) {
            items_.push_back(t);
        } else {
            items_[head_] = t;
        }
        head_ = (head_ + 1) % capacity_;
    }

    std::size_t size() const noexcept { return items_.size(); }
    std::size_t capacity() const noexcept { return capacity_; }
    const Transition& operator[](std::size_t i) const { return items_.at(i); }

    std::vector<Transition> sample(std::size_t batch) {
        if (items_.empty()) throw InvalidArgument("replay: cannot sample from an empty buffer");
        std::uniform_int_distribution<std::size_t> pick(0, items_.size() - 1);
        std::vector<Transition> out;
        out.reserve(batch);
        for (std::size_t b = 0; b < batch; ++b) out.push_back(items_[pick(rng_)]);
        return out;
    }

private:
    std::size_t capacity_;
    std::size_t head_ = 0;
    std::vector<Transition> items_;
    std::mt19937_64 rng_;
};

} // namespace fqf::rl
