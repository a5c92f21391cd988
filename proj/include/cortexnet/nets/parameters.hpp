#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace cortexnet {

enum class InitKind { HeNormal, Zero, One };

struct ParamSpec {
    std::string name;
    std::vector<std::size_t> shape;
    InitKind init = InitKind::Zero;
    std::size_t fan_in = 1;

    std::size_t count() const;
};

/// Ordered list of named parameter shapes declared by a network.
class ParameterLayout {
public:
    std::size_t add(std::string name, std::vector<std::size_t> shape, InitKind init, std::size_t fan_in = 1);
    const std::vector<ParamSpec>& specs() const { return specs_; }
    std::size_t size() const { return specs_.size(); }
    std::size_t total_count() const;
    bool operator==(const ParameterLayout& o) const;

private:
    std::vector<ParamSpec> specs_;
};

/// Named real tensors in layout order.
template <typename T>
class ParameterSet {
public:
    struct Entry {
        std::string name;
        std::vector<std::size_t> shape;
        std::vector<T> values;
    };

    ParameterSet() = default;
    explicit ParameterSet(const ParameterLayout& layout);

    std::size_t size() const { return entries_.size(); }
    Entry& operator[](std::size_t i) { return entries_[i]; }
    const Entry& operator[](std::size_t i) const { return entries_[i]; }
    T* data(std::size_t i) { return entries_[i].values.data(); }
    const T* data(std::size_t i) const { return entries_[i].values.data(); }
    std::vector<Entry>& entries() { return entries_; }
    const std::vector<Entry>& entries() const { return entries_; }

    /// Index of `name`; throws ShapeError if absent.
    std::size_t index(const std::string& name) const;
    bool contains(const std::string& name) const { return lookup_.count(name) != 0; }
    std::size_t total_count() const;

    void add(std::string name, std::vector<std::size_t> shape, std::vector<T> values);
    void set_zero();
    bool all_finite() const;
    bool matches(const ParameterLayout& layout) const;
    /// Throws ShapeError naming the first mismatch.
    void check_layout(const ParameterLayout& layout) const;

    template <typename U>
    ParameterSet<U> cast() const {
        ParameterSet<U> out;
        for (const auto& e : entries_) out.add(e.name, e.shape, std::vector<U>(e.values.begin(), e.values.end()));
        return out;
    }

private:
    std::vector<Entry> entries_;
    std::unordered_map<std::string, std::size_t> lookup_;
};

using ModelParameters = ParameterSet<float>;

/// He-normal conv/dense weights, zero biases, unit normalisation scales.
ModelParameters init_parameters(const ParameterLayout& layout, std::uint64_t seed);

}  // namespace cortexnet
