#include "cortexnet/nets/tensor.hpp"

#include <algorithm>

#include "cortexnet/common/error.hpp"

namespace cortexnet {

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
    if (!a.same_spatial(b)) throw ShapeError("concat_channels: spatial shapes differ");
    Tensor<T> out(a.c + b.c, a.d, a.h, a.w);
    std::copy(a.data.begin(), a.data.end(), out.data.begin());
    std::copy(b.data.begin(), b.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(a.size()));
    return out;
}

template <typename T>
void split_channels(const Tensor<T>& joined, std::size_t first_channels, Tensor<T>& a, Tensor<T>& b) {
    if (first_channels > joined.c) throw ShapeError("split_channels: too many channels requested");
    const std::size_t s = joined.spatial();
    a = Tensor<T>(first_channels, joined.d, joined.h, joined.w);
    b = Tensor<T>(joined.c - first_channels, joined.d, joined.h, joined.w);
    const auto mid = joined.data.begin() + static_cast<std::ptrdiff_t>(first_channels * s);
    std::copy(joined.data.begin(), mid, a.data.begin());
    std::copy(mid, joined.data.end(), b.data.begin());
}

template <typename T>
void add_inplace(Tensor<T>& dst, const Tensor<T>& src) {
    if (!dst.same_shape(src)) throw ShapeError("add_inplace: shape mismatch");
    for (std::size_t i = 0; i < dst.size(); ++i) dst.data[i] += src.data[i];
}

#define CORTEXNET_INSTANTIATE(T)                                                             \
    template Tensor<T> concat_channels<T>(const Tensor<T>&, const Tensor<T>&);              \
    template void split_channels<T>(const Tensor<T>&, std::size_t, Tensor<T>&, Tensor<T>&); \
    template void add_inplace<T>(Tensor<T>&, const Tensor<T>&);
CORTEXNET_INSTANTIATE(float)
CORTEXNET_INSTANTIATE(double)
#undef CORTEXNET_INSTANTIATE

}  // namespace cortexnet
