#include "elens/kernels.hpp"

namespace elens::kernels::detail {

// Reference kernels. The accumulation order over (ci, ky, kx) is the
// contract the SIMD variants must reproduce exactly.
void conv2d_scalar(const Conv2dArgs& a) {
    const int64_t in_plane = a.h * a.w;
    const int64_t w_plane = a.kh * a.kw;
    for (int64_t n = 0; n < a.n; ++n) {
        const float* in_base = a.in + n * a.cin * in_plane;
        float* out_base = a.out + n * a.cout * a.ho * a.wo;
        for (int64_t co = 0; co < a.cout; ++co) {
            const float* w_base = a.weights + co * a.cin * w_plane;
            const float bias = a.bias ? a.bias[co] : 0.0f;
            for (int64_t oy = 0; oy < a.ho; ++oy) {
                for (int64_t ox = 0; ox < a.wo; ++ox) {
                    float acc = bias;
                    const int64_t iy0 = oy * a.stride - a.padding;
                    const int64_t ix0 = ox * a.stride - a.padding;
                    for (int64_t ci = 0; ci < a.cin; ++ci) {
                        const float* in_ch = in_base + ci * in_plane;
                        const float* w_ch = w_base + ci * w_plane;
                        for (int64_t ky = 0; ky < a.kh; ++ky) {
                            const int64_t iy = iy0 + ky;
                            if (iy < 0 || iy >= a.h) continue;
                            for (int64_t kx = 0; kx < a.kw; ++kx) {
                                const int64_t ix = ix0 + kx;
                                if (ix < 0 || ix >= a.w) continue;
                                acc += w_ch[ky * a.kw + kx] * in_ch[iy * a.w + ix];
                            }
                        }
                    }
                    out_base[(co * a.ho + oy) * a.wo + ox] = acc;
                }
            }
        }
    }
}

void relu_scalar(const float* in, float* out, int64_t count) {
    // Written so -0.0f maps to +0.0f, matching _mm256_max_ps(x, 0).
    for (int64_t i = 0; i < count; ++i) {
        out[i] = in[i] > 0.0f ? in[i] : 0.0f;
    }
}

void add_scalar(const float* a, const float* b, float* out, int64_t count) {
    for (int64_t i = 0; i < count; ++i) {
        out[i] = a[i] + b[i];
    }
}

void affine_scalar(const float* in, float* out, int64_t channels, int64_t plane,
                   const float* scale, const float* shift) {
    for (int64_t c = 0; c < channels; ++c) {
        const float s = scale[c];
        const float t = shift[c];
        const float* src = in + c * plane;
        float* dst = out + c * plane;
        for (int64_t i = 0; i < plane; ++i) {
            dst[i] = src[i] * s + t;
        }
    }
}

}  // namespace elens::kernels::detail
