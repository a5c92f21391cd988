#pragma once

#include <cstddef>
#include <vector>

namespace cortexnet {

/// Dense C x D x H x W activation grid, W fastest. The spatial layout
/// matches Volume (x -> W, y -> H, z -> D), so a volume's data is a
/// one-channel tensor as-is.
template <typename T>
struct Tensor {
    std::size_t c = 0, d = 0, h = 0, w = 0;
    std::vector<T> data;

    Tensor() = default;
    Tensor(std::size_t c_, std::size_t d_, std::size_t h_, std::size_t w_, T fill = T{})
        : c(c_), d(d_), h(h_), w(w_), data(c_ * d_ * h_ * w_, fill) {}

    std::size_t spatial() const { return d * h * w; }
    std::size_t size() const { return data.size(); }
    T* channel(std::size_t ch) { return data.data() + ch * spatial(); }
    const T* channel(std::size_t ch) const { return data.data() + ch * spatial(); }
    T& at(std::size_t ch, std::size_t z, std::size_t y, std::size_t x) {
        return data[((ch * d + z) * h + y) * w + x];
    }
    const T& at(std::size_t ch, std::size_t z, std::size_t y, std::size_t x) const {
        return data[((ch * d + z) * h + y) * w + x];
    }
    bool same_shape(const Tensor& o) const { return c == o.c && d == o.d && h == o.h && w == o.w; }
    bool same_spatial(const Tensor& o) const { return d == o.d && h == o.h && w == o.w; }
};

template <typename U, typename T>
Tensor<U> tensor_cast(const Tensor<T>& t) {
    Tensor<U> out(t.c, t.d, t.h, t.w);
    for (std::size_t i = 0; i < t.size(); ++i) out.data[i] = static_cast<U>(t.data[i]);
    return out;
}

/// Channel-wise concatenation [a; b].
template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b);

/// Splits a gradient of concat_channels back into its two parts.
template <typename T>
void split_channels(const Tensor<T>& joined, std::size_t first_channels, Tensor<T>& a, Tensor<T>& b);

template <typename T>
void add_inplace(Tensor<T>& dst, const Tensor<T>& src);

}  // namespace cortexnet
