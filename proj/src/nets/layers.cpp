#include "cortexnet/nets/layers.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include <Eigen/Core>

#include "cortexnet/common/error.hpp"

namespace cortexnet {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;
template <typename T>
using StridedMap = Eigen::Map<RowMat<T>, 0, Eigen::OuterStride<>>;
template <typename T>
using ConstStridedMap = Eigen::Map<const RowMat<T>, 0, Eigen::OuterStride<>>;

constexpr std::size_t kColumnBudget = std::size_t{1} << 20;

void mix(std::uint64_t* sig, std::uint64_t v) {
    if (!sig) return;
    *sig ^= v + 0x9e3779b97f4a7c15ULL + (*sig << 6) + (*sig >> 2);
}

void mix_bytes(std::uint64_t* sig, const std::uint8_t* bytes, std::size_t n) {
    if (!sig) return;
    std::uint64_t h = 1469598103934665603ULL;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= bytes[i];
        h *= 1099511628211ULL;
    }
    mix(sig, h);
}

std::size_t wrap(long i, std::size_t n) {
    const long m = static_cast<long>(n);
    return static_cast<std::size_t>(((i % m) + m) % m);
}

}  // namespace

// ---------------------------------------------------------------- Conv3d

template <typename T>
Conv3d<T>::Conv3d(ParameterLayout& layout, const std::string& name, int cin, int cout, bool bias, Padding padding)
    : cin_(cin), cout_(cout), padding_(padding) {
    weight_ = layout.add(name + ".weight",
                         {static_cast<std::size_t>(cout), static_cast<std::size_t>(cin), 3, 3, 3},
                         InitKind::HeNormal, static_cast<std::size_t>(cin) * 27);
    if (bias) bias_ = layout.add(name + ".bias", {static_cast<std::size_t>(cout)}, InitKind::Zero);
}

template <typename T>
Tensor<T> Conv3d<T>::forward(const ParameterSet<T>& p, const Tensor<T>& in) {
    if (in.c != static_cast<std::size_t>(cin_)) throw ShapeError("Conv3d: input channel mismatch");
    d_ = in.d;
    h_ = in.h;
    w_ = in.w;
    const std::size_t pd = d_ + 2, ph = h_ + 2, pw = w_ + 2;
    const bool periodic = padding_ == Padding::Periodic;

    padded_ = Tensor<T>(in.c, pd, ph, pw);
    for (std::size_t c = 0; c < in.c; ++c) {
        for (std::size_t z = 0; z < pd; ++z) {
            const long sz = static_cast<long>(z) - 1;
            if (!periodic && (sz < 0 || sz >= static_cast<long>(d_))) continue;
            for (std::size_t y = 0; y < ph; ++y) {
                const long sy = static_cast<long>(y) - 1;
                if (!periodic && (sy < 0 || sy >= static_cast<long>(h_))) continue;
                const T* src = &in.at(c, wrap(sz, d_), wrap(sy, h_), 0);
                T* dst = &padded_.at(c, z, y, 0);
                std::memcpy(dst + 1, src, w_ * sizeof(T));
                if (periodic) {
                    dst[0] = src[w_ - 1];
                    dst[pw - 1] = src[0];
                }
            }
        }
    }

    const std::size_t k_total = static_cast<std::size_t>(cin_) * 27;
    const std::size_t rows_total = d_ * h_;
    const std::size_t chunk_rows = std::clamp<std::size_t>(kColumnBudget / (k_total * w_), 1, rows_total);
    RowMat<T> col(k_total, chunk_rows * w_);
    ConstMatMap<T> weight(p.data(weight_), cout_, static_cast<Eigen::Index>(k_total));

    Tensor<T> out(static_cast<std::size_t>(cout_), d_, h_, w_);
    const std::size_t spatial = out.spatial();
    for (std::size_t r0 = 0; r0 < rows_total; r0 += chunk_rows) {
        const std::size_t rows = std::min(chunk_rows, rows_total - r0);
        const std::size_t n = rows * w_;
        for (std::size_t ci = 0, k = 0; ci < static_cast<std::size_t>(cin_); ++ci)
            for (std::size_t kz = 0; kz < 3; ++kz)
                for (std::size_t ky = 0; ky < 3; ++ky)
                    for (std::size_t kx = 0; kx < 3; ++kx, ++k) {
                        T* dst = col.data() + k * col.cols();
                        for (std::size_t rr = 0; rr < rows; ++rr) {
                            const std::size_t r = r0 + rr;
                            const T* src = &padded_.at(ci, r / h_ + kz, r % h_ + ky, kx);
                            std::memcpy(dst + rr * w_, src, w_ * sizeof(T));
                        }
                    }
        StridedMap<T> out_block(out.data.data() + r0 * w_, cout_, static_cast<Eigen::Index>(n),
                                Eigen::OuterStride<>(static_cast<Eigen::Index>(spatial)));
        out_block.noalias() = weight * col.leftCols(static_cast<Eigen::Index>(n));
    }
    if (bias_) {
        const T* b = p.data(*bias_);
        for (std::size_t co = 0; co < static_cast<std::size_t>(cout_); ++co) {
            T* o = out.channel(co);
            for (std::size_t i = 0; i < spatial; ++i) o[i] += b[co];
        }
    }
    return out;
}

template <typename T>
Tensor<T> Conv3d<T>::backward(const ParameterSet<T>& p, const Tensor<T>& dout, ParameterSet<T>& grads) {
    if (dout.c != static_cast<std::size_t>(cout_) || dout.d != d_ || dout.h != h_ || dout.w != w_)
        throw ShapeError("Conv3d: gradient shape mismatch");
    const std::size_t pd = d_ + 2, ph = h_ + 2, pw = w_ + 2;
    const std::size_t k_total = static_cast<std::size_t>(cin_) * 27;
    const std::size_t rows_total = d_ * h_;
    const std::size_t chunk_rows = std::clamp<std::size_t>(kColumnBudget / (k_total * w_), 1, rows_total);
    const std::size_t spatial = dout.spatial();

    RowMat<T> col(k_total, chunk_rows * w_);
    RowMat<T> dcol(k_total, chunk_rows * w_);
    ConstMatMap<T> weight(p.data(weight_), cout_, static_cast<Eigen::Index>(k_total));
    MatMap<T> dweight(grads.data(weight_), cout_, static_cast<Eigen::Index>(k_total));
    Tensor<T> dpadded(static_cast<std::size_t>(cin_), pd, ph, pw);

    for (std::size_t r0 = 0; r0 < rows_total; r0 += chunk_rows) {
        const std::size_t rows = std::min(chunk_rows, rows_total - r0);
        const auto n = static_cast<Eigen::Index>(rows * w_);
        for (std::size_t ci = 0, k = 0; ci < static_cast<std::size_t>(cin_); ++ci)
            for (std::size_t kz = 0; kz < 3; ++kz)
                for (std::size_t ky = 0; ky < 3; ++ky)
                    for (std::size_t kx = 0; kx < 3; ++kx, ++k) {
                        T* dst = col.data() + k * col.cols();
                        for (std::size_t rr = 0; rr < rows; ++rr) {
                            const std::size_t r = r0 + rr;
                            std::memcpy(dst + rr * w_, &padded_.at(ci, r / h_ + kz, r % h_ + ky, kx), w_ * sizeof(T));
                        }
                    }
        ConstStridedMap<T> dblock(dout.data.data() + r0 * w_, cout_, n,
                                  Eigen::OuterStride<>(static_cast<Eigen::Index>(spatial)));
        dweight.noalias() += dblock * col.leftCols(n).transpose();
        dcol.leftCols(n).noalias() = weight.transpose() * dblock;
        for (std::size_t ci = 0, k = 0; ci < static_cast<std::size_t>(cin_); ++ci)
            for (std::size_t kz = 0; kz < 3; ++kz)
                for (std::size_t ky = 0; ky < 3; ++ky)
                    for (std::size_t kx = 0; kx < 3; ++kx, ++k) {
                        const T* src = dcol.data() + k * dcol.cols();
                        for (std::size_t rr = 0; rr < rows; ++rr) {
                            const std::size_t r = r0 + rr;
                            T* dst = &dpadded.at(ci, r / h_ + kz, r % h_ + ky, kx);
                            const T* s = src + rr * w_;
                            for (std::size_t x = 0; x < w_; ++x) dst[x] += s[x];
                        }
                    }
    }
    if (bias_) {
        T* db = grads.data(*bias_);
        for (std::size_t co = 0; co < static_cast<std::size_t>(cout_); ++co) {
            const T* g = dout.channel(co);
            double s = 0.0;
            for (std::size_t i = 0; i < spatial; ++i) s += g[i];
            db[co] += static_cast<T>(s);
        }
    }

    Tensor<T> din(static_cast<std::size_t>(cin_), d_, h_, w_);
    const bool periodic = padding_ == Padding::Periodic;
    for (std::size_t c = 0; c < static_cast<std::size_t>(cin_); ++c) {
        for (std::size_t z = 0; z < pd; ++z) {
            const long sz = static_cast<long>(z) - 1;
            if (!periodic && (sz < 0 || sz >= static_cast<long>(d_))) continue;
            for (std::size_t y = 0; y < ph; ++y) {
                const long sy = static_cast<long>(y) - 1;
                if (!periodic && (sy < 0 || sy >= static_cast<long>(h_))) continue;
                const T* src = &dpadded.at(c, z, y, 0);
                T* dst = &din.at(c, wrap(sz, d_), wrap(sy, h_), 0);
                for (std::size_t x = 0; x < w_; ++x) dst[x] += src[x + 1];
                if (periodic) {
                    dst[w_ - 1] += src[0];
                    dst[0] += src[pw - 1];
                }
            }
        }
    }
    return din;
}

// ---------------------------------------------------------------- Conv1x1

template <typename T>
Conv1x1<T>::Conv1x1(ParameterLayout& layout, const std::string& name, int cin, int cout, InitKind init)
    : cin_(cin), cout_(cout) {
    weight_ = layout.add(name + ".weight", {static_cast<std::size_t>(cout), static_cast<std::size_t>(cin)}, init,
                         static_cast<std::size_t>(cin));
    bias_ = layout.add(name + ".bias", {static_cast<std::size_t>(cout)}, InitKind::Zero);
}

template <typename T>
Tensor<T> Conv1x1<T>::forward(const ParameterSet<T>& p, const Tensor<T>& in) {
    if (in.c != static_cast<std::size_t>(cin_)) throw ShapeError("Conv1x1: input channel mismatch");
    input_ = in;
    Tensor<T> out(static_cast<std::size_t>(cout_), in.d, in.h, in.w);
    const auto n = static_cast<Eigen::Index>(in.spatial());
    ConstMatMap<T> weight(p.data(weight_), cout_, cin_);
    ConstMatMap<T> x(in.data.data(), cin_, n);
    MatMap<T> y(out.data.data(), cout_, n);
    y.noalias() = weight * x;
    const T* b = p.data(bias_);
    for (Eigen::Index co = 0; co < cout_; ++co) y.row(co).array() += b[co];
    return out;
}

template <typename T>
Tensor<T> Conv1x1<T>::backward(const ParameterSet<T>& p, const Tensor<T>& dout, ParameterSet<T>& grads) {
    if (dout.c != static_cast<std::size_t>(cout_) || !dout.same_spatial(input_))
        throw ShapeError("Conv1x1: gradient shape mismatch");
    const auto n = static_cast<Eigen::Index>(dout.spatial());
    ConstMatMap<T> weight(p.data(weight_), cout_, cin_);
    ConstMatMap<T> x(input_.data.data(), cin_, n);
    ConstMatMap<T> dy(dout.data.data(), cout_, n);
    MatMap<T> dweight(grads.data(weight_), cout_, cin_);
    dweight.noalias() += dy * x.transpose();
    T* db = grads.data(bias_);
    for (Eigen::Index co = 0; co < cout_; ++co) {
        double s = 0.0;
        const T* g = dout.channel(static_cast<std::size_t>(co));
        for (Eigen::Index i = 0; i < n; ++i) s += g[i];
        db[co] += static_cast<T>(s);
    }
    Tensor<T> din(static_cast<std::size_t>(cin_), dout.d, dout.h, dout.w);
    MatMap<T> dx(din.data.data(), cin_, n);
    dx.noalias() = weight.transpose() * dy;
    return din;
}

// ---------------------------------------------------------------- UpConv2

template <typename T>
UpConv2<T>::UpConv2(ParameterLayout& layout, const std::string& name, int cin, int cout) : cin_(cin), cout_(cout) {
    weight_ = layout.add(name + ".weight",
                         {static_cast<std::size_t>(cout), 2, 2, 2, static_cast<std::size_t>(cin)},
                         InitKind::HeNormal, static_cast<std::size_t>(cin));
    bias_ = layout.add(name + ".bias", {static_cast<std::size_t>(cout)}, InitKind::Zero);
}

template <typename T>
Tensor<T> UpConv2<T>::forward(const ParameterSet<T>& p, const Tensor<T>& in) {
    if (in.c != static_cast<std::size_t>(cin_)) throw ShapeError("UpConv2: input channel mismatch");
    input_ = in;
    const auto n = static_cast<Eigen::Index>(in.spatial());
    ConstMatMap<T> weight(p.data(weight_), cout_ * 8, cin_);
    ConstMatMap<T> x(in.data.data(), cin_, n);
    RowMat<T> y = weight * x;
    Tensor<T> out(static_cast<std::size_t>(cout_), in.d * 2, in.h * 2, in.w * 2);
    const T* b = p.data(bias_);
    for (std::size_t co = 0; co < static_cast<std::size_t>(cout_); ++co)
        for (std::size_t k = 0; k < 8; ++k) {
            const std::size_t dz = k >> 2, dy = (k >> 1) & 1, dx = k & 1;
            const T* src = y.data() + (co * 8 + k) * static_cast<std::size_t>(n);
            std::size_t j = 0;
            for (std::size_t z = 0; z < in.d; ++z)
                for (std::size_t yy = 0; yy < in.h; ++yy) {
                    T* dst = &out.at(co, 2 * z + dz, 2 * yy + dy, dx);
                    for (std::size_t x = 0; x < in.w; ++x, ++j) dst[2 * x] = src[j] + b[co];
                }
        }
    return out;
}

template <typename T>
Tensor<T> UpConv2<T>::backward(const ParameterSet<T>& p, const Tensor<T>& dout, ParameterSet<T>& grads) {
    const Tensor<T>& in = input_;
    if (dout.c != static_cast<std::size_t>(cout_) || dout.d != in.d * 2 || dout.h != in.h * 2 || dout.w != in.w * 2)
        throw ShapeError("UpConv2: gradient shape mismatch");
    const auto n = static_cast<Eigen::Index>(in.spatial());
    RowMat<T> dy(cout_ * 8, n);
    for (std::size_t co = 0; co < static_cast<std::size_t>(cout_); ++co)
        for (std::size_t k = 0; k < 8; ++k) {
            const std::size_t dz = k >> 2, ddy = (k >> 1) & 1, dx = k & 1;
            T* dst = dy.data() + (co * 8 + k) * static_cast<std::size_t>(n);
            std::size_t j = 0;
            for (std::size_t z = 0; z < in.d; ++z)
                for (std::size_t yy = 0; yy < in.h; ++yy) {
                    const T* src = &dout.at(co, 2 * z + dz, 2 * yy + ddy, dx);
                    for (std::size_t x = 0; x < in.w; ++x, ++j) dst[j] = src[2 * x];
                }
        }
    ConstMatMap<T> weight(p.data(weight_), cout_ * 8, cin_);
    ConstMatMap<T> x(in.data.data(), cin_, n);
    MatMap<T> dweight(grads.data(weight_), cout_ * 8, cin_);
    dweight.noalias() += dy * x.transpose();
    T* db = grads.data(bias_);
    for (std::size_t co = 0; co < static_cast<std::size_t>(cout_); ++co) {
        double s = 0.0;
        const T* g = dout.channel(co);
        for (std::size_t i = 0; i < dout.spatial(); ++i) s += g[i];
        db[co] += static_cast<T>(s);
    }
    Tensor<T> din(static_cast<std::size_t>(cin_), in.d, in.h, in.w);
    MatMap<T> dx(din.data.data(), cin_, n);
    dx.noalias() = weight.transpose() * dy;
    return din;
}

// ---------------------------------------------------------------- InstanceNorm

template <typename T>
InstanceNorm<T>::InstanceNorm(ParameterLayout& layout, const std::string& name, int channels, double eps)
    : channels_(channels), eps_(eps) {
    scale_ = layout.add(name + ".scale", {static_cast<std::size_t>(channels)}, InitKind::One);
    shift_ = layout.add(name + ".shift", {static_cast<std::size_t>(channels)}, InitKind::Zero);
}

template <typename T>
Tensor<T> InstanceNorm<T>::forward(const ParameterSet<T>& p, const Tensor<T>& in) {
    if (in.c != static_cast<std::size_t>(channels_)) throw ShapeError("InstanceNorm: channel mismatch");
    const std::size_t n = in.spatial();
    normalized_ = Tensor<T>(in.c, in.d, in.h, in.w);
    inv_std_.assign(in.c, 0.0);
    Tensor<T> out(in.c, in.d, in.h, in.w);
    const T* gamma = p.data(scale_);
    const T* beta = p.data(shift_);
    for (std::size_t c = 0; c < in.c; ++c) {
        const T* x = in.channel(c);
        double mean = 0.0;
        for (std::size_t i = 0; i < n; ++i) mean += x[i];
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t i = 0; i < n; ++i) var += (x[i] - mean) * (x[i] - mean);
        var /= static_cast<double>(n);
        const double inv = 1.0 / std::sqrt(var + eps_);
        inv_std_[c] = inv;
        T* xh = normalized_.channel(c);
        T* y = out.channel(c);
        for (std::size_t i = 0; i < n; ++i) {
            xh[i] = static_cast<T>((x[i] - mean) * inv);
            y[i] = gamma[c] * xh[i] + beta[c];
        }
    }
    return out;
}

template <typename T>
Tensor<T> InstanceNorm<T>::backward(const ParameterSet<T>& p, const Tensor<T>& dout, ParameterSet<T>& grads) {
    if (!dout.same_shape(normalized_)) throw ShapeError("InstanceNorm: gradient shape mismatch");
    const std::size_t n = dout.spatial();
    const T* gamma = p.data(scale_);
    T* dgamma = grads.data(scale_);
    T* dbeta = grads.data(shift_);
    Tensor<T> din(dout.c, dout.d, dout.h, dout.w);
    for (std::size_t c = 0; c < dout.c; ++c) {
        const T* dy = dout.channel(c);
        const T* xh = normalized_.channel(c);
        double sum_dy = 0.0, sum_dy_xh = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            sum_dy += dy[i];
            sum_dy_xh += static_cast<double>(dy[i]) * xh[i];
        }
        dgamma[c] += static_cast<T>(sum_dy_xh);
        dbeta[c] += static_cast<T>(sum_dy);
        const double g = gamma[c];
        const double scale = inv_std_[c] / static_cast<double>(n);
        const double mean_term = g * sum_dy;
        const double xh_term = g * sum_dy_xh;
        T* dx = din.channel(c);
        for (std::size_t i = 0; i < n; ++i)
            dx[i] = static_cast<T>(scale * (static_cast<double>(n) * g * dy[i] - mean_term - xh[i] * xh_term));
    }
    return din;
}

// ---------------------------------------------------------------- ReLU

template <typename T>
void ReLU<T>::forward_inplace(Tensor<T>& x, const ForwardContext& ctx) {
    active_.resize(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const bool on = x.data[i] > T{0};
        active_[i] = on;
        if (!on) x.data[i] = T{0};
    }
    mix_bytes(ctx.kink_signature, active_.data(), active_.size());
}

template <typename T>
void ReLU<T>::backward_inplace(Tensor<T>& dx) const {
    if (dx.size() != active_.size()) throw ShapeError("ReLU: gradient shape mismatch");
    for (std::size_t i = 0; i < dx.size(); ++i)
        if (!active_[i]) dx.data[i] = T{0};
}

// ---------------------------------------------------------------- MaxPool2

template <typename T>
Tensor<T> MaxPool2<T>::forward(const Tensor<T>& in, const ForwardContext& ctx) {
    if (in.d % 2 || in.h % 2 || in.w % 2) throw ShapeError("MaxPool2: spatial dims must be even");
    c_ = in.c;
    d_ = in.d;
    h_ = in.h;
    w_ = in.w;
    Tensor<T> out(in.c, in.d / 2, in.h / 2, in.w / 2);
    argmax_.assign(out.size(), 0);
    std::size_t o = 0;
    for (std::size_t c = 0; c < out.c; ++c)
        for (std::size_t z = 0; z < out.d; ++z)
            for (std::size_t y = 0; y < out.h; ++y)
                for (std::size_t x = 0; x < out.w; ++x, ++o) {
                    std::size_t best = ((c * in.d + 2 * z) * in.h + 2 * y) * in.w + 2 * x;
                    T best_v = in.data[best];
                    for (std::size_t k = 1; k < 8; ++k) {
                        const std::size_t idx =
                            ((c * in.d + 2 * z + (k >> 2)) * in.h + 2 * y + ((k >> 1) & 1)) * in.w + 2 * x + (k & 1);
                        if (in.data[idx] > best_v) {
                            best_v = in.data[idx];
                            best = idx;
                        }
                    }
                    out.data[o] = best_v;
                    argmax_[o] = static_cast<std::uint32_t>(best);
                }
    if (ctx.kink_signature)
        mix_bytes(ctx.kink_signature, reinterpret_cast<const std::uint8_t*>(argmax_.data()),
                  argmax_.size() * sizeof(std::uint32_t));
    return out;
}

template <typename T>
Tensor<T> MaxPool2<T>::backward(const Tensor<T>& dout) const {
    if (dout.size() != argmax_.size()) throw ShapeError("MaxPool2: gradient shape mismatch");
    Tensor<T> din(c_, d_, h_, w_);
    for (std::size_t o = 0; o < dout.size(); ++o) din.data[argmax_[o]] += dout.data[o];
    return din;
}

// ---------------------------------------------------------------- nearest upsampling

template <typename T>
Tensor<T> upsample_nearest2(const Tensor<T>& in) {
    Tensor<T> out(in.c, in.d * 2, in.h * 2, in.w * 2);
    for (std::size_t c = 0; c < out.c; ++c)
        for (std::size_t z = 0; z < out.d; ++z)
            for (std::size_t y = 0; y < out.h; ++y) {
                const T* src = &in.at(c, z / 2, y / 2, 0);
                T* dst = &out.at(c, z, y, 0);
                for (std::size_t x = 0; x < out.w; ++x) dst[x] = src[x / 2];
            }
    return out;
}

template <typename T>
Tensor<T> upsample_nearest2_backward(const Tensor<T>& dout) {
    if (dout.d % 2 || dout.h % 2 || dout.w % 2) throw ShapeError("upsample backward: odd gradient dims");
    Tensor<T> din(dout.c, dout.d / 2, dout.h / 2, dout.w / 2);
    for (std::size_t c = 0; c < dout.c; ++c)
        for (std::size_t z = 0; z < dout.d; ++z)
            for (std::size_t y = 0; y < dout.h; ++y) {
                const T* src = &dout.at(c, z, y, 0);
                T* dst = &din.at(c, z / 2, y / 2, 0);
                for (std::size_t x = 0; x < dout.w; ++x) dst[x / 2] += src[x];
            }
    return din;
}

// ---------------------------------------------------------------- DropBlock

namespace {

struct CenterRange {
    std::size_t lo, hi;  // inclusive
    std::size_t count() const { return hi - lo + 1; }
};

CenterRange centers_along(std::size_t n, int block_size) {
    const auto bs = static_cast<std::size_t>(block_size);
    if (n < bs) return {0, n - 1};
    const std::size_t half = bs / 2;
    return {half, n - 1 - half};
}

}  // namespace

template <typename T>
DropBlock<T>::DropBlock(int block_size, double drop_rate) : block_size_(block_size), drop_rate_(drop_rate) {
    if (block_size < 1 || block_size % 2 == 0) throw ConfigError("DropBlock: block_size must be odd and >= 1");
    if (!(drop_rate >= 0.0 && drop_rate <= 1.0)) throw ConfigError("DropBlock: drop_rate must be in [0, 1]");
}

template <typename T>
double DropBlock<T>::center_rate(double drop_rate, int block_size, std::size_t d, std::size_t h, std::size_t w) {
    const double valid = static_cast<double>(centers_along(d, block_size).count()) *
                         static_cast<double>(centers_along(h, block_size).count()) *
                         static_cast<double>(centers_along(w, block_size).count());
    const double volume = static_cast<double>(d * h * w);
    const double bs3 = std::pow(static_cast<double>(block_size), 3);
    return std::min(1.0, drop_rate * volume / (bs3 * valid));
}

template <typename T>
Tensor<T> DropBlock<T>::forward(const Tensor<T>& in, const ForwardContext& ctx) {
    applied_ = ctx.dropblock_active && drop_rate_ > 0.0;
    if (!applied_) return in;
    if (!ctx.rng) throw InvariantError("DropBlock: active forward pass requires an RNG");
    Rng& rng = *ctx.rng;
    const double gamma = center_rate(drop_rate_, block_size_, in.d, in.h, in.w);
    const CenterRange cz = centers_along(in.d, block_size_);
    const CenterRange cy = centers_along(in.h, block_size_);
    const CenterRange cx = centers_along(in.w, block_size_);
    const long half = block_size_ / 2;

    std::vector<std::uint8_t> keep(in.size(), 1);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (std::size_t c = 0; c < in.c; ++c)
        for (std::size_t z = cz.lo; z <= cz.hi; ++z)
            for (std::size_t y = cy.lo; y <= cy.hi; ++y)
                for (std::size_t x = cx.lo; x <= cx.hi; ++x) {
                    if (!(u(rng) < gamma)) continue;
                    const std::size_t z0 = static_cast<std::size_t>(std::max(0L, static_cast<long>(z) - half));
                    const std::size_t z1 = std::min(in.d - 1, z + static_cast<std::size_t>(half));
                    const std::size_t y0 = static_cast<std::size_t>(std::max(0L, static_cast<long>(y) - half));
                    const std::size_t y1 = std::min(in.h - 1, y + static_cast<std::size_t>(half));
                    const std::size_t x0 = static_cast<std::size_t>(std::max(0L, static_cast<long>(x) - half));
                    const std::size_t x1 = std::min(in.w - 1, x + static_cast<std::size_t>(half));
                    for (std::size_t bz = z0; bz <= z1; ++bz)
                        for (std::size_t by = y0; by <= y1; ++by)
                            for (std::size_t bx = x0; bx <= x1; ++bx)
                                keep[((c * in.d + bz) * in.h + by) * in.w + bx] = 0;
                }
    std::size_t kept = 0;
    for (auto k : keep) kept += k;
    const double rescale = kept ? static_cast<double>(in.size()) / static_cast<double>(kept) : 0.0;
    scale_mask_.resize(in.size());
    Tensor<T> out(in.c, in.d, in.h, in.w);
    for (std::size_t i = 0; i < in.size(); ++i) {
        scale_mask_[i] = keep[i] ? static_cast<T>(rescale) : T{0};
        out.data[i] = in.data[i] * scale_mask_[i];
    }
    return out;
}

template <typename T>
Tensor<T> DropBlock<T>::backward(const Tensor<T>& dout) const {
    if (!applied_) return dout;
    if (dout.size() != scale_mask_.size()) throw ShapeError("DropBlock: gradient shape mismatch");
    Tensor<T> din(dout.c, dout.d, dout.h, dout.w);
    for (std::size_t i = 0; i < dout.size(); ++i) din.data[i] = dout.data[i] * scale_mask_[i];
    return din;
}

template <typename T>
Tensor<T> apply_dropblock(const Tensor<T>& features, int block_size, double drop_rate, Rng& rng) {
    DropBlock<T> layer(block_size, drop_rate);
    ForwardContext ctx;
    ctx.rng = &rng;
    ctx.dropblock_active = true;
    return layer.forward(features, ctx);
}

// ---------------------------------------------------------------- ConvBlock

template <typename T>
ConvBlock<T>::ConvBlock(ParameterLayout& layout, const std::string& name, int cin, int cout, int convs,
                        Padding padding, double eps) {
    for (int i = 0; i < convs; ++i) {
        const std::string unit = name + ".conv" + std::to_string(i);
        Unit u;
        u.conv = Conv3d<T>(layout, unit, i == 0 ? cin : cout, cout, false, padding);
        u.norm = InstanceNorm<T>(layout, unit + ".norm", cout, eps);
        units_.push_back(std::move(u));
    }
}

template <typename T>
Tensor<T> ConvBlock<T>::forward(const ParameterSet<T>& p, const Tensor<T>& in, const ForwardContext& ctx) {
    Tensor<T> x = in;
    for (auto& u : units_) {
        x = u.norm.forward(p, u.conv.forward(p, x));
        u.relu.forward_inplace(x, ctx);
    }
    return x;
}

template <typename T>
Tensor<T> ConvBlock<T>::backward(const ParameterSet<T>& p, const Tensor<T>& dout, ParameterSet<T>& grads) {
    Tensor<T> g = dout;
    for (auto it = units_.rbegin(); it != units_.rend(); ++it) {
        it->relu.backward_inplace(g);
        g = it->conv.backward(p, it->norm.backward(p, g, grads), grads);
    }
    return g;
}

// ---------------------------------------------------------------- heads

template <typename T>
MultiTaskHeads<T>::MultiTaskHeads(ParameterLayout& layout, int features, int num_classes, int hidden)
    : seg_(layout, "head.seg", features, num_classes),
      hidden1_(layout, "head.reg_hidden1", features, hidden),
      hidden2_(layout, "head.reg_hidden2", hidden, hidden),
      out_(layout, "head.reg_out", hidden, 1) {}

template <typename T>
void MultiTaskHeads<T>::forward(const ParameterSet<T>& p, const Tensor<T>& features, const ForwardContext& ctx,
                                Tensor<T>& seg_logits, Tensor<T>& metric) {
    seg_logits = seg_.forward(p, features);
    Tensor<T> h = hidden1_.forward(p, features);
    relu1_.forward_inplace(h, ctx);
    h = hidden2_.forward(p, h);
    relu2_.forward_inplace(h, ctx);
    metric = out_.forward(p, h);
}

template <typename T>
Tensor<T> MultiTaskHeads<T>::backward(const ParameterSet<T>& p, const Tensor<T>& dseg, const Tensor<T>& dmetric,
                                      ParameterSet<T>& grads) {
    Tensor<T> g = out_.backward(p, dmetric, grads);
    relu2_.backward_inplace(g);
    g = hidden2_.backward(p, g, grads);
    relu1_.backward_inplace(g);
    g = hidden1_.backward(p, g, grads);
    add_inplace(g, seg_.backward(p, dseg, grads));
    return g;
}

#define CORTEXNET_INSTANTIATE(T)                                                          \
    template class Conv3d<T>;                                                            \
    template class Conv1x1<T>;                                                           \
    template class UpConv2<T>;                                                           \
    template class InstanceNorm<T>;                                                      \
    template class ReLU<T>;                                                              \
    template class MaxPool2<T>;                                                          \
    template class DropBlock<T>;                                                         \
    template class ConvBlock<T>;                                                         \
    template class MultiTaskHeads<T>;                                                    \
    template Tensor<T> upsample_nearest2<T>(const Tensor<T>&);                           \
    template Tensor<T> upsample_nearest2_backward<T>(const Tensor<T>&);                  \
    template Tensor<T> apply_dropblock<T>(const Tensor<T>&, int, double, Rng&);
CORTEXNET_INSTANTIATE(float)
CORTEXNET_INSTANTIATE(double)
#undef CORTEXNET_INSTANTIATE

}  // namespace cortexnet
