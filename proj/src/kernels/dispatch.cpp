#include <atomic>
#include <cmath>

#include "elens/errors.hpp"
#include "elens/kernels.hpp"

namespace elens::kernels {

namespace {

#if defined(__x86_64__) || defined(_M_X64)
bool cpu_has_avx2() {
#if defined(__GNUC__) || defined(__clang__)
    return __builtin_cpu_supports("avx2");
#else
    return false;
#endif
}
#else
bool cpu_has_avx2() { return false; }
#endif

struct KernelTable {
    void (*conv2d)(const detail::Conv2dArgs&);
    void (*relu)(const float*, float*, int64_t);
    void (*add)(const float*, const float*, float*, int64_t);
    void (*affine)(const float*, float*, int64_t, int64_t, const float*, const float*);
};

constexpr KernelTable kScalarTable{detail::conv2d_scalar, detail::relu_scalar,
                                   detail::add_scalar, detail::affine_scalar};

#if defined(__x86_64__) || defined(_M_X64)
constexpr KernelTable kAvx2Table{detail::conv2d_avx2, detail::relu_avx2,
                                 detail::add_avx2, detail::affine_avx2};
#endif

std::atomic<Backend> g_backend{cpu_has_avx2() ? Backend::Avx2 : Backend::Scalar};

const KernelTable& table() {
#if defined(__x86_64__) || defined(_M_X64)
    if (g_backend.load(std::memory_order_relaxed) == Backend::Avx2) {
        return kAvx2Table;
    }
#endif
    return kScalarTable;
}

int64_t pooled_extent(int64_t in, int kernel, int stride) {
    return (in - kernel) / stride + 1;
}

}  // namespace

const char* backend_name(Backend b) {
    switch (b) {
        case Backend::Scalar: return "scalar";
        case Backend::Avx2: return "avx2";
    }
    return "?";
}

bool backend_available(Backend b) {
    if (b == Backend::Scalar) return true;
    return cpu_has_avx2();
}

Backend active_backend() { return g_backend.load(std::memory_order_relaxed); }

bool set_backend(Backend b) {
    if (!backend_available(b)) return false;
    g_backend.store(b, std::memory_order_relaxed);
    return true;
}

Tensor conv2d(const Tensor& input, const Tensor& weights,
              std::span<const float> bias, int stride, int padding) {
    const Shape4& in = input.shape();
    const Shape4& wt = weights.shape();
    if (in.c != wt.c) {
        throw ShapeError("conv2d input channels " + in.str() +
                         " do not match weights " + wt.str());
    }
    if (stride < 1) throw ShapeError("conv2d stride must be positive");
    if (padding < 0) throw ShapeError("conv2d padding must be non-negative");
    if (!bias.empty() && static_cast<int64_t>(bias.size()) != wt.n) {
        throw ShapeError("conv2d bias length " + std::to_string(bias.size()) +
                         " does not match " + std::to_string(wt.n) + " filters");
    }
    const int64_t ho = (in.h + 2 * padding - wt.h) / stride + 1;
    const int64_t wo = (in.w + 2 * padding - wt.w) / stride + 1;
    if (ho < 1 || wo < 1) {
        throw ShapeError("conv2d output would be empty for input " + in.str() +
                         " and kernel " + wt.str());
    }
    Tensor out(Shape4{in.n, wt.n, ho, wo});
    detail::Conv2dArgs args{input.ptr(), in.n,     in.c,
                            in.h,        in.w,     weights.ptr(),
                            wt.n,        wt.h,     wt.w,
                            bias.empty() ? nullptr : bias.data(),
                            stride,      padding,  out.ptr(),
                            ho,          wo};
    table().conv2d(args);
    return out;
}

Tensor relu(const Tensor& input) {
    Tensor out(input.shape());
    table().relu(input.ptr(), out.ptr(), input.numel());
    return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
    if (!(a.shape() == b.shape())) {
        throw ShapeError("add shape mismatch " + a.shape().str() + " vs " +
                         b.shape().str());
    }
    Tensor out(a.shape());
    table().add(a.ptr(), b.ptr(), out.ptr(), a.numel());
    return out;
}

Tensor affine_channels(const Tensor& input, std::span<const float> scale,
                       std::span<const float> shift) {
    const Shape4& in = input.shape();
    if (static_cast<int64_t>(scale.size()) != in.c ||
        static_cast<int64_t>(shift.size()) != in.c) {
        throw ShapeError("affine_channels expects one scale/shift per channel of " +
                         in.str());
    }
    Tensor out(in);
    for (int64_t n = 0; n < in.n; ++n) {
        const int64_t off = n * in.c * in.h * in.w;
        table().affine(input.ptr() + off, out.ptr() + off, in.c, in.h * in.w,
                       scale.data(), shift.data());
    }
    return out;
}

MaxPoolResult maxpool2d(const Tensor& input, int kernel, int stride) {
    const Shape4& in = input.shape();
    if (kernel < 1 || stride < 1) {
        throw ShapeError("maxpool2d kernel and stride must be positive");
    }
    if (kernel > in.h || kernel > in.w) {
        throw ShapeError("maxpool2d window " + std::to_string(kernel) +
                         " larger than input " + in.str());
    }
    const int64_t ho = pooled_extent(in.h, kernel, stride);
    const int64_t wo = pooled_extent(in.w, kernel, stride);
    MaxPoolResult res{Tensor(Shape4{in.n, in.c, ho, wo}), {}};
    res.argmax.resize(static_cast<size_t>(res.output.numel()));
    const float* src = input.ptr();
    float* dst = res.output.ptr();
    int64_t o = 0;
    for (int64_t n = 0; n < in.n; ++n) {
        for (int64_t c = 0; c < in.c; ++c) {
            const int64_t plane = (n * in.c + c) * in.h * in.w;
            for (int64_t oy = 0; oy < ho; ++oy) {
                for (int64_t ox = 0; ox < wo; ++ox, ++o) {
                    int64_t best = -1;
                    float best_v = 0.0f;
                    for (int64_t ky = 0; ky < kernel; ++ky) {
                        const int64_t iy = oy * stride + ky;
                        for (int64_t kx = 0; kx < kernel; ++kx) {
                            const int64_t ix = ox * stride + kx;
                            const int64_t flat = plane + iy * in.w + ix;
                            // Strict > keeps the lowest flat index on ties.
                            if (best < 0 || src[flat] > best_v) {
                                best = flat;
                                best_v = src[flat];
                            }
                        }
                    }
                    dst[o] = best_v;
                    res.argmax[static_cast<size_t>(o)] = best;
                }
            }
        }
    }
    return res;
}

Tensor avgpool2d(const Tensor& input, int kernel, int stride) {
    const Shape4& in = input.shape();
    if (kernel < 1 || stride < 1) {
        throw ShapeError("avgpool2d kernel and stride must be positive");
    }
    if (kernel > in.h || kernel > in.w) {
        throw ShapeError("avgpool2d window " + std::to_string(kernel) +
                         " larger than input " + in.str());
    }
    const int64_t ho = pooled_extent(in.h, kernel, stride);
    const int64_t wo = pooled_extent(in.w, kernel, stride);
    Tensor out(Shape4{in.n, in.c, ho, wo});
    const float* src = input.ptr();
    float* dst = out.ptr();
    const double inv = 1.0 / (static_cast<double>(kernel) * kernel);
    int64_t o = 0;
    for (int64_t n = 0; n < in.n; ++n) {
        for (int64_t c = 0; c < in.c; ++c) {
            const int64_t plane = (n * in.c + c) * in.h * in.w;
            for (int64_t oy = 0; oy < ho; ++oy) {
                for (int64_t ox = 0; ox < wo; ++ox, ++o) {
                    double acc = 0.0;
                    for (int64_t ky = 0; ky < kernel; ++ky) {
                        const int64_t iy = oy * stride + ky;
                        for (int64_t kx = 0; kx < kernel; ++kx) {
                            acc += src[plane + iy * in.w + ox * stride + kx];
                        }
                    }
                    dst[o] = static_cast<float>(acc * inv);
                }
            }
        }
    }
    return out;
}

std::vector<float> dense(std::span<const float> input,
                         std::span<const float> weights, int64_t out_dim,
                         int64_t in_dim, std::span<const float> bias) {
    if (static_cast<int64_t>(input.size()) != in_dim) {
        throw ShapeError("dense input length " + std::to_string(input.size()) +
                         " does not match weight columns " + std::to_string(in_dim));
    }
    if (static_cast<int64_t>(weights.size()) != out_dim * in_dim) {
        throw ShapeError("dense weight matrix size mismatch");
    }
    if (!bias.empty() && static_cast<int64_t>(bias.size()) != out_dim) {
        throw ShapeError("dense bias length mismatch");
    }
    std::vector<float> out(static_cast<size_t>(out_dim));
    for (int64_t j = 0; j < out_dim; ++j) {
        double acc = bias.empty() ? 0.0 : static_cast<double>(bias[j]);
        const float* row = weights.data() + j * in_dim;
        for (int64_t i = 0; i < in_dim; ++i) {
            acc += static_cast<double>(row[i]) * input[static_cast<size_t>(i)];
        }
        out[static_cast<size_t>(j)] = static_cast<float>(acc);
    }
    return out;
}

std::vector<float> softmax(std::span<const float> logits) {
    if (logits.empty()) throw ShapeError("softmax of empty vector");
    float max_v = logits[0];
    for (float v : logits) max_v = v > max_v ? v : max_v;
    std::vector<double> e(logits.size());
    double sum = 0.0;
    for (size_t i = 0; i < logits.size(); ++i) {
        e[i] = std::exp(static_cast<double>(logits[i]) - max_v);
        sum += e[i];
    }
    std::vector<float> out(logits.size());
    for (size_t i = 0; i < logits.size(); ++i) {
        out[i] = static_cast<float>(e[i] / sum);
    }
    return out;
}

}  // namespace elens::kernels
