#include "cortexnet/nets/parameters.hpp"

#include <cmath>
#include <functional>
#include <numeric>

#include "cortexnet/common/error.hpp"
#include "cortexnet/common/rng.hpp"

namespace cortexnet {

std::size_t ParamSpec::count() const {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::size_t ParameterLayout::add(std::string name, std::vector<std::size_t> shape, InitKind init, std::size_t fan_in) {
    for (const auto& s : specs_)
        if (s.name == name) throw ShapeError("duplicate parameter name " + name);
    specs_.push_back(ParamSpec{std::move(name), std::move(shape), init, fan_in});
    return specs_.size() - 1;
}

std::size_t ParameterLayout::total_count() const {
    std::size_t n = 0;
    for (const auto& s : specs_) n += s.count();
    return n;
}

bool ParameterLayout::operator==(const ParameterLayout& o) const {
    if (specs_.size() != o.specs_.size()) return false;
    for (std::size_t i = 0; i < specs_.size(); ++i)
        if (specs_[i].name != o.specs_[i].name || specs_[i].shape != o.specs_[i].shape) return false;
    return true;
}

template <typename T>
ParameterSet<T>::ParameterSet(const ParameterLayout& layout) {
    for (const auto& s : layout.specs()) add(s.name, s.shape, std::vector<T>(s.count(), T{0}));
}

template <typename T>
std::size_t ParameterSet<T>::index(const std::string& name) const {
    auto it = lookup_.find(name);
    if (it == lookup_.end()) throw ShapeError("unknown parameter " + name);
    return it->second;
}

template <typename T>
std::size_t ParameterSet<T>::total_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.values.size();
    return n;
}

template <typename T>
void ParameterSet<T>::add(std::string name, std::vector<std::size_t> shape, std::vector<T> values) {
    const std::size_t expected = std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
    if (values.size() != expected) throw ShapeError("parameter " + name + ": value count does not match shape");
    if (lookup_.count(name)) throw ShapeError("duplicate parameter name " + name);
    lookup_[name] = entries_.size();
    entries_.push_back(Entry{std::move(name), std::move(shape), std::move(values)});
}

template <typename T>
void ParameterSet<T>::set_zero() {
    for (auto& e : entries_) std::fill(e.values.begin(), e.values.end(), T{0});
}

template <typename T>
bool ParameterSet<T>::all_finite() const {
    for (const auto& e : entries_)
        for (T v : e.values)
            if (!std::isfinite(v)) return false;
    return true;
}

template <typename T>
bool ParameterSet<T>::matches(const ParameterLayout& layout) const {
    if (layout.size() != entries_.size()) return false;
    for (std::size_t i = 0; i < entries_.size(); ++i)
        if (entries_[i].name != layout.specs()[i].name || entries_[i].shape != layout.specs()[i].shape) return false;
    return true;
}

template <typename T>
void ParameterSet<T>::check_layout(const ParameterLayout& layout) const {
    if (layout.size() != entries_.size())
        throw ShapeError("parameter count " + std::to_string(entries_.size()) + " does not match network layout " +
                         std::to_string(layout.size()));
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        if (entries_[i].name != layout.specs()[i].name)
            throw ShapeError("parameter " + std::to_string(i) + " is '" + entries_[i].name + "', network expects '" +
                             layout.specs()[i].name + "'");
        if (entries_[i].shape != layout.specs()[i].shape)
            throw ShapeError("parameter '" + entries_[i].name + "' has the wrong shape");
    }
}

template class ParameterSet<float>;
template class ParameterSet<double>;

ModelParameters init_parameters(const ParameterLayout& layout, std::uint64_t seed) {
    ModelParameters params(layout);
    for (std::size_t i = 0; i < layout.size(); ++i) {
        const ParamSpec& spec = layout.specs()[i];
        auto& values = params[i].values;
        switch (spec.init) {
            case InitKind::Zero: break;
            case InitKind::One: std::fill(values.begin(), values.end(), 1.0f); break;
            case InitKind::HeNormal: {
                Rng rng = make_rng({seed, i});
                std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(spec.fan_in)));
                for (float& v : values) v = static_cast<float>(dist(rng));
                break;
            }
        }
    }
    return params;
}

}  // namespace cortexnet
