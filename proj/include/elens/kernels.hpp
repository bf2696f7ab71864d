#pragma once

#include <span>
#include <vector>

#include "elens/tensor.hpp"

// Forward kernels. Each data-parallel kernel exists as a scalar reference
// implementation plus (on x86) an AVX2 variant; the active variant is picked
// at startup from CPUID and can be overridden. Variants are bit-identical:
// the AVX2 code vectorizes across output elements, never across a reduction,
// so every output goes through the same sequence of IEEE single ops.
namespace elens::kernels {

enum class Backend { Scalar, Avx2 };

const char* backend_name(Backend b);
bool backend_available(Backend b);
Backend active_backend();
// Returns false (and leaves the selection unchanged) if unavailable.
bool set_backend(Backend b);

struct MaxPoolResult {
    Tensor output;
    // Flat index into the input tensor of each window winner, in output
    // order. Ties break to the lowest flat index.
    std::vector<int64_t> argmax;
};

// Cross-correlation (no kernel flip). weights: (Cout, Cin, Kh, Kw);
// bias may be empty (treated as zero) or have Cout entries.
Tensor conv2d(const Tensor& input, const Tensor& weights,
              std::span<const float> bias, int stride, int padding);

Tensor relu(const Tensor& input);

Tensor add(const Tensor& a, const Tensor& b);

// y[n,c,h,w] = x[n,c,h,w] * scale[c] + shift[c]
Tensor affine_channels(const Tensor& input, std::span<const float> scale,
                       std::span<const float> shift);

MaxPoolResult maxpool2d(const Tensor& input, int kernel, int stride);

Tensor avgpool2d(const Tensor& input, int kernel, int stride);

// weights is row-major (out_dim, in_dim); bias may be empty or out_dim long.
std::vector<float> dense(std::span<const float> input,
                         std::span<const float> weights, int64_t out_dim,
                         int64_t in_dim, std::span<const float> bias);

std::vector<float> softmax(std::span<const float> logits);

// Direct entry points for the scalar/SIMD equivalence tests. Callers must
// check backend_available(Backend::Avx2) before touching the avx2 variants.
namespace detail {

struct Conv2dArgs {
    const float* in;
    int64_t n, cin, h, w;
    const float* weights;  // (cout, cin, kh, kw)
    int64_t cout, kh, kw;
    const float* bias;  // nullptr means zero
    int stride, padding;
    float* out;
    int64_t ho, wo;
};

void conv2d_scalar(const Conv2dArgs& a);
void relu_scalar(const float* in, float* out, int64_t count);
void add_scalar(const float* a, const float* b, float* out, int64_t count);
void affine_scalar(const float* in, float* out, int64_t channels,
                   int64_t plane, const float* scale, const float* shift);

#if defined(__x86_64__) || defined(_M_X64)
void conv2d_avx2(const Conv2dArgs& a);
void relu_avx2(const float* in, float* out, int64_t count);
void add_avx2(const float* a, const float* b, float* out, int64_t count);
void affine_avx2(const float* in, float* out, int64_t channels, int64_t plane,
                 const float* scale, const float* shift);
#endif

}  // namespace detail

}  // namespace elens::kernels
