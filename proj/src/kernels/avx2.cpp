// AVX2 kernel variants. Vectorization is across output elements only; each
// lane performs the identical unfused mul/add sequence as the scalar
// reference, so results are bit-identical. Edge outputs whose receptive
// field leaves the input fall back to the scalar inner loop.

#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

#include "elens/kernels.hpp"

namespace elens::kernels::detail {

namespace {

inline float conv_one_output(const Conv2dArgs& a, const float* in_base,
                             const float* w_base, float bias, int64_t oy,
                             int64_t ox) {
    const int64_t in_plane = a.h * a.w;
    const int64_t w_plane = a.kh * a.kw;
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
    return acc;
}

}  // namespace

void conv2d_avx2(const Conv2dArgs& a) {
    const int64_t in_plane = a.h * a.w;
    const int64_t w_plane = a.kh * a.kw;
    const int s = a.stride;
    // Lane offsets within the input row for an 8-wide output block.
    const __m256i lane_idx =
        _mm256_setr_epi32(0, s, 2 * s, 3 * s, 4 * s, 5 * s, 6 * s, 7 * s);

    for (int64_t n = 0; n < a.n; ++n) {
        const float* in_base = a.in + n * a.cin * in_plane;
        float* out_base = a.out + n * a.cout * a.ho * a.wo;
        for (int64_t co = 0; co < a.cout; ++co) {
            const float* w_base = a.weights + co * a.cin * w_plane;
            const float bias = a.bias ? a.bias[co] : 0.0f;
            const __m256 bias_v = _mm256_set1_ps(bias);
            for (int64_t oy = 0; oy < a.ho; ++oy) {
                const int64_t iy0 = oy * s - a.padding;
                float* out_row = out_base + (co * a.ho + oy) * a.wo;
                int64_t ox = 0;
                while (ox < a.wo) {
                    const int64_t ix_first = ox * s - a.padding;
                    const int64_t ix_last = (ox + 7) * s - a.padding + a.kw - 1;
                    if (ox + 8 <= a.wo && ix_first >= 0 && ix_last < a.w) {
                        __m256 acc = bias_v;
                        for (int64_t ci = 0; ci < a.cin; ++ci) {
                            const float* in_ch = in_base + ci * in_plane;
                            const float* w_ch = w_base + ci * w_plane;
                            for (int64_t ky = 0; ky < a.kh; ++ky) {
                                const int64_t iy = iy0 + ky;
                                if (iy < 0 || iy >= a.h) continue;
                                const float* in_row = in_ch + iy * a.w + ix_first;
                                for (int64_t kx = 0; kx < a.kw; ++kx) {
                                    const __m256 wv =
                                        _mm256_set1_ps(w_ch[ky * a.kw + kx]);
                                    __m256 xv;
                                    if (s == 1) {
                                        xv = _mm256_loadu_ps(in_row + kx);
                                    } else {
                                        xv = _mm256_i32gather_ps(in_row + kx,
                                                                 lane_idx, 4);
                                    }
                                    acc = _mm256_add_ps(acc,
                                                        _mm256_mul_ps(wv, xv));
                                }
                            }
                        }
                        _mm256_storeu_ps(out_row + ox, acc);
                        ox += 8;
                    } else {
                        out_row[ox] =
                            conv_one_output(a, in_base, w_base, bias, oy, ox);
                        ox += 1;
                    }
                }
            }
        }
    }
}

void relu_avx2(const float* in, float* out, int64_t count) {
    const __m256 zero = _mm256_setzero_ps();
    int64_t i = 0;
    for (; i + 8 <= count; i += 8) {
        _mm256_storeu_ps(out + i, _mm256_max_ps(_mm256_loadu_ps(in + i), zero));
    }
    for (; i < count; ++i) {
        out[i] = in[i] > 0.0f ? in[i] : 0.0f;
    }
}

void add_avx2(const float* a, const float* b, float* out, int64_t count) {
    int64_t i = 0;
    for (; i + 8 <= count; i += 8) {
        _mm256_storeu_ps(
            out + i, _mm256_add_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
    }
    for (; i < count; ++i) {
        out[i] = a[i] + b[i];
    }
}

void affine_avx2(const float* in, float* out, int64_t channels, int64_t plane,
                 const float* scale, const float* shift) {
    for (int64_t c = 0; c < channels; ++c) {
        const __m256 sv = _mm256_set1_ps(scale[c]);
        const __m256 tv = _mm256_set1_ps(shift[c]);
        const float* src = in + c * plane;
        float* dst = out + c * plane;
        int64_t i = 0;
        for (; i + 8 <= plane; i += 8) {
            _mm256_storeu_ps(
                dst + i, _mm256_add_ps(_mm256_mul_ps(_mm256_loadu_ps(src + i), sv), tv));
        }
        for (; i < plane; ++i) {
            dst[i] = src[i] * scale[c] + shift[c];
        }
    }
}

}  // namespace elens::kernels::detail

#endif  // x86_64
