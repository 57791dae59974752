#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "factost/mat.hpp"
#include "factost/rng.hpp"

namespace factost {

// Named, shaped, mutable parameter arrays with matching gradient slots.
// Entry order is stable and defines checkpoint layout and optimizer slots.
class ParameterStore {
public:
    struct Entry {
        std::string name;
        Mat value;
        Mat grad;
    };

    explicit ParameterStore(uint64_t rng_seed = 0) : rng_seed_(rng_seed) {}

    int add(const std::string& name, Mat initial);
    bool has(const std::string& name) const { return index_.count(name) > 0; }
    int slot(const std::string& name) const;

    Mat& value(int slot) { return entries_[slot].value; }
    const Mat& value(int slot) const { return entries_[slot].value; }
    Mat& value(const std::string& name) { return entries_[slot(name)].value; }
    const Mat& value(const std::string& name) const { return entries_[slot(name)].value; }
    Mat& grad(int slot) { return entries_[slot].grad; }

    const std::vector<Entry>& entries() const { return entries_; }
    std::vector<Entry>& entries() { return entries_; }
    int count() const { return static_cast<int>(entries_.size()); }
    size_t scalar_count() const;

    void zero_grads();
    // Adds per-slot gradient mats (as produced by Tape::accumulate_param_grads).
    void accumulate(const std::vector<Mat>& grads, double scale = 1.0);
    bool values_finite() const;

    uint64_t rng_seed() const { return rng_seed_; }
    void set_rng_seed(uint64_t s) { rng_seed_ = s; }

private:
    std::vector<Entry> entries_;
    std::unordered_map<std::string, int> index_;
    uint64_t rng_seed_ = 0;
};

// Initializers.
Mat trunc_normal_mat(int rows, int cols, double stddev, Rng& rng);

}  // namespace factost
