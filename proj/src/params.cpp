#include "factost/params.hpp"

#include "factost/errors.hpp"

namespace factost {

int ParameterStore::add(const std::string& name, Mat initial) {
    if (index_.count(name)) throw ConfigError("duplicate parameter name: " + name);
    Entry e;
    e.name = name;
    e.grad = Mat(initial.rows, initial.cols);
    e.value = std::move(initial);
    entries_.push_back(std::move(e));
    const int s = static_cast<int>(entries_.size()) - 1;
    index_[name] = s;
    return s;
}

int ParameterStore::slot(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
    return it->second;
}

size_t ParameterStore::scalar_count() const {
    size_t n = 0;
    for (const Entry& e : entries_) n += e.value.size();
    return n;
}

void ParameterStore::zero_grads() {
    for (Entry& e : entries_) e.grad.fill(0.0);
}

void ParameterStore::accumulate(const std::vector<Mat>& grads, double scale) {
    for (size_t s = 0; s < grads.size(); ++s) {
        if (grads[s].size() == 0) continue;
        Mat& dst = entries_[s].grad;
        for (size_t i = 0; i < dst.size(); ++i) dst.v[i] += scale * grads[s].v[i];
    }
}

bool ParameterStore::values_finite() const {
    for (const Entry& e : entries_) {
        if (!all_finite(e.value)) return false;
    }
    return true;
}

Mat trunc_normal_mat(int rows, int cols, double stddev, Rng& rng) {
    Mat m(rows, cols);
    for (double& x : m.v) x = rng.trunc_normal(stddev);
    return m;
}

}  // namespace factost
