#pragma once

// Raw tensor kernels behind the differentiable ops. Convolution and transposed
// convolution are lowered to tiled im2col/col2im plus a dense GEMM.
// Everything here is single-threaded and deterministic.

#define EIGEN_DONT_PARALLELIZE
#include <Eigen/Core>

#include <algorithm>
#include <limits>
#include <memory>
#include <vector>

#include "claw/tensor.hpp"

namespace claw::kernels {

template <typename T>
using MatMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <typename T>
using ConstMatMap =
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <typename T>
using StridedMatMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>,
                                 Eigen::Unaligned, Eigen::OuterStride<>>;
template <typename T>
using ConstStridedMatMap =
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>,
               Eigen::Unaligned, Eigen::OuterStride<>>;

inline index_t conv_out_extent(index_t extent, index_t k, index_t stride, index_t padding) {
    return (extent + 2 * padding - k) / stride + 1;
}

/// Number of output-pixel columns processed per GEMM tile. Bounds the scratch
/// buffer to roughly 32 MB for the widest kernels in this artifact.
inline index_t col_tile(index_t k_rows, index_t n_pixels) {
    index_t tile = (index_t(8) << 20) / std::max<index_t>(k_rows, 1);
    tile = std::clamp<index_t>(tile, 256, 4096);
    return std::min(tile, n_pixels);
}

/// Gathers the input patches for output pixels [p0, p1) of one batch item into
/// a (in_ch*kh*kw) x (p1-p0) row-major buffer. Out-of-range taps read as zero.
template <typename T>
void im2col_tile(const Tensor4<T>& x, index_t n, index_t kh, index_t kw, index_t stride,
                 index_t padding, index_t out_w, index_t p0, index_t p1, T* col) {
    const index_t tile = p1 - p0;
    const index_t h = x.height;
    const index_t w = x.width;
    for (index_t c = 0; c < x.channels; ++c) {
        const T* src = x.plane(n, c);
        for (index_t ky = 0; ky < kh; ++ky) {
            for (index_t kx = 0; kx < kw; ++kx) {
                T* row = col + ((c * kh + ky) * kw + kx) * tile;
                for (index_t p = p0; p < p1; ++p) {
                    const index_t oy = p / out_w;
                    const index_t ox = p - oy * out_w;
                    const index_t iy = oy * stride - padding + ky;
                    const index_t ix = ox * stride - padding + kx;
                    row[p - p0] = (iy >= 0 && iy < h && ix >= 0 && ix < w)
                                      ? src[iy * w + ix]
                                      : T(0);
                }
            }
        }
    }
}

/// Adjoint of im2col_tile: scatter-adds the column buffer back into gx.
template <typename T>
void col2im_add_tile(const T* col, index_t n, index_t kh, index_t kw, index_t stride,
                     index_t padding, index_t out_w, index_t p0, index_t p1, Tensor4<T>& gx) {
    const index_t tile = p1 - p0;
    const index_t h = gx.height;
    const index_t w = gx.width;
    for (index_t c = 0; c < gx.channels; ++c) {
        T* dst = gx.plane(n, c);
        for (index_t ky = 0; ky < kh; ++ky) {
            for (index_t kx = 0; kx < kw; ++kx) {
                const T* row = col + ((c * kh + ky) * kw + kx) * tile;
                for (index_t p = p0; p < p1; ++p) {
                    const index_t oy = p / out_w;
                    const index_t ox = p - oy * out_w;
                    const index_t iy = oy * stride - padding + ky;
                    const index_t ix = ox * stride - padding + kx;
                    if (iy >= 0 && iy < h && ix >= 0 && ix < w) {
                        dst[iy * w + ix] += row[p - p0];
                    }
                }
            }
        }
    }
}

/// Cross-correlation (the kernel is not flipped); that convention is shared by
/// the oracles and the serialized checkpoints. weight is (out_ch, in_ch, kh, kw),
/// bias (if non-null) has out_ch entries. out must be pre-shaped.
template <typename T>
void conv2d_forward(const Tensor4<T>& x, const Tensor4<T>& weight, const T* bias, index_t stride,
                    index_t padding, Tensor4<T>& out) {
    const index_t out_ch = weight.batch;
    const index_t k_rows = weight.channels * weight.height * weight.width;
    const index_t n_pix = out.height * out.width;
    const index_t tile = col_tile(k_rows, n_pix);
    std::unique_ptr<T[]> col(new T[static_cast<std::size_t>(k_rows * tile)]);

    ConstMatMap<T> w_mat(weight.data.data(), out_ch, k_rows);
    for (index_t n = 0; n < x.batch; ++n) {
        for (index_t p0 = 0; p0 < n_pix; p0 += tile) {
            const index_t p1 = std::min(p0 + tile, n_pix);
            im2col_tile(x, n, weight.height, weight.width, stride, padding, out.width, p0, p1,
                        col.get());
            ConstMatMap<T> c_mat(col.get(), k_rows, p1 - p0);
            StridedMatMap<T> o_mat(out.item(n) + p0, out_ch, p1 - p0,
                                   Eigen::OuterStride<>(n_pix));
            o_mat.noalias() = w_mat * c_mat;
        }
        if (bias) {
            for (index_t oc = 0; oc < out_ch; ++oc) {
                T* dst = out.plane(n, oc);
                const T b = bias[oc];
                for (index_t p = 0; p < n_pix; ++p) dst[p] += b;
            }
        }
    }
}

/// d(loss)/d(input) of conv2d_forward. gx must be pre-shaped like x; it is
/// overwritten.
template <typename T>
void conv2d_backward_data(const Tensor4<T>& gout, const Tensor4<T>& weight, index_t stride,
                          index_t padding, Tensor4<T>& gx) {
    const index_t out_ch = weight.batch;
    const index_t k_rows = weight.channels * weight.height * weight.width;
    const index_t n_pix = gout.height * gout.width;
    const index_t tile = col_tile(k_rows, n_pix);
    std::unique_ptr<T[]> col(new T[static_cast<std::size_t>(k_rows * tile)]);

    gx.fill(T(0));
    ConstMatMap<T> w_mat(weight.data.data(), out_ch, k_rows);
    for (index_t n = 0; n < gx.batch; ++n) {
        for (index_t p0 = 0; p0 < n_pix; p0 += tile) {
            const index_t p1 = std::min(p0 + tile, n_pix);
            ConstStridedMatMap<T> g_mat(gout.item(n) + p0, out_ch, p1 - p0,
                                        Eigen::OuterStride<>(n_pix));
            MatMap<T> c_mat(col.get(), k_rows, p1 - p0);
            c_mat.noalias() = w_mat.transpose() * g_mat;
            col2im_add_tile(col.get(), n, weight.height, weight.width, stride, padding,
                            gout.width, p0, p1, gx);
        }
    }
}

/// d(loss)/d(weight); accumulates into gweight (caller zeroes).
template <typename T>
void conv2d_backward_weight(const Tensor4<T>& x, const Tensor4<T>& gout, index_t kh, index_t kw,
                            index_t stride, index_t padding, Tensor4<T>& gweight) {
    const index_t out_ch = gout.channels;
    const index_t k_rows = x.channels * kh * kw;
    const index_t n_pix = gout.height * gout.width;
    const index_t tile = col_tile(k_rows, n_pix);
    std::unique_ptr<T[]> col(new T[static_cast<std::size_t>(k_rows * tile)]);

    MatMap<T> gw_mat(gweight.data.data(), out_ch, k_rows);
    for (index_t n = 0; n < x.batch; ++n) {
        for (index_t p0 = 0; p0 < n_pix; p0 += tile) {
            const index_t p1 = std::min(p0 + tile, n_pix);
            im2col_tile(x, n, kh, kw, stride, padding, gout.width, p0, p1, col.get());
            ConstMatMap<T> c_mat(col.get(), k_rows, p1 - p0);
            ConstStridedMatMap<T> g_mat(gout.item(n) + p0, out_ch, p1 - p0,
                                        Eigen::OuterStride<>(n_pix));
            gw_mat.noalias() += g_mat * c_mat.transpose();
        }
    }
}

template <typename T>
void sum_over_channel(const Tensor4<T>& gout, T* gbias) {
    const index_t n_pix = gout.height * gout.width;
    for (index_t n = 0; n < gout.batch; ++n) {
        for (index_t c = 0; c < gout.channels; ++c) {
            const T* src = gout.plane(n, c);
            T acc = T(0);
            for (index_t p = 0; p < n_pix; ++p) acc += src[p];
            gbias[c] += acc;
        }
    }
}

// Transposed convolution is the data-adjoint of a stride-s convolution, so the
// forward/backward passes below reuse the conv kernels with input and output
// roles swapped. weight is (in_ch, out_ch, kh, kw); output spatial extent is
// (in - 1) * stride + k (no output padding).

template <typename T>
void deconv2d_forward(const Tensor4<T>& x, const Tensor4<T>& weight, const T* bias,
                      index_t stride, Tensor4<T>& out) {
    conv2d_backward_data(x, weight, stride, /*padding=*/0, out);
    if (bias) {
        const index_t n_pix = out.height * out.width;
        for (index_t n = 0; n < out.batch; ++n) {
            for (index_t oc = 0; oc < out.channels; ++oc) {
                T* dst = out.plane(n, oc);
                const T b = bias[oc];
                for (index_t p = 0; p < n_pix; ++p) dst[p] += b;
            }
        }
    }
}

template <typename T>
void deconv2d_backward_data(const Tensor4<T>& gout, const Tensor4<T>& weight, index_t stride,
                            Tensor4<T>& gx) {
    conv2d_forward(gout, weight, static_cast<const T*>(nullptr), stride, /*padding=*/0, gx);
}

template <typename T>
void deconv2d_backward_weight(const Tensor4<T>& x, const Tensor4<T>& gout, index_t kh,
                              index_t kw, index_t stride, Tensor4<T>& gweight) {
    conv2d_backward_weight(gout, x, kh, kw, stride, /*padding=*/0, gweight);
}

/// 2x2/stride-2 max pooling. Ties resolve to the first element in row-major
/// window order; argmax records flat plane offsets for the backward scatter.
template <typename T>
void maxpool2_forward(const Tensor4<T>& x, Tensor4<T>& out, std::vector<index_t>& argmax) {
    argmax.resize(static_cast<std::size_t>(out.size()));
    index_t a = 0;
    for (index_t n = 0; n < x.batch; ++n) {
        for (index_t c = 0; c < x.channels; ++c) {
            const T* src = x.plane(n, c);
            T* dst = out.plane(n, c);
            for (index_t oy = 0; oy < out.height; ++oy) {
                for (index_t ox = 0; ox < out.width; ++ox) {
                    const index_t base = (2 * oy) * x.width + 2 * ox;
                    index_t best = base;
                    T best_v = src[base];
                    const index_t cand[3] = {base + 1, base + x.width, base + x.width + 1};
                    for (index_t k : cand) {
                        if (src[k] > best_v) {
                            best_v = src[k];
                            best = k;
                        }
                    }
                    dst[oy * out.width + ox] = best_v;
                    argmax[static_cast<std::size_t>(a++)] = best;
                }
            }
        }
    }
}

template <typename T>
void maxpool2_backward(const std::vector<index_t>& argmax, const Tensor4<T>& gout,
                       Tensor4<T>& gx) {
    gx.fill(T(0));
    index_t a = 0;
    for (index_t n = 0; n < gx.batch; ++n) {
        for (index_t c = 0; c < gx.channels; ++c) {
            T* dst = gx.plane(n, c);
            const T* src = gout.plane(n, c);
            const index_t n_out = gout.plane_size();
            for (index_t p = 0; p < n_out; ++p) {
                dst[argmax[static_cast<std::size_t>(a++)]] += src[p];
            }
        }
    }
}

/// Per-axis taps for 2x bilinear upsampling without corner alignment. The
/// source sample position for output index o is s = (o + 0.5) / 2 - 0.5, so
/// even outputs blend inputs (j-1, j) with weights (1/4, 3/4) and odd outputs
/// blend (j, j+1) with weights (3/4, 1/4); indices clamp at the borders.
struct BilinearTap {
    index_t i0, i1;
    double w1;  // weight of i1; i0 gets 1 - w1
};

inline std::vector<BilinearTap> bilinear2x_taps(index_t in_extent) {
    std::vector<BilinearTap> taps(static_cast<std::size_t>(2 * in_extent));
    for (index_t o = 0; o < 2 * in_extent; ++o) {
        const double s = 0.5 * static_cast<double>(o) - 0.25;
        double f = std::floor(s);
        index_t i0 = static_cast<index_t>(f);
        double w1 = s - f;
        index_t i1 = i0 + 1;
        i0 = std::clamp<index_t>(i0, 0, in_extent - 1);
        i1 = std::clamp<index_t>(i1, 0, in_extent - 1);
        taps[static_cast<std::size_t>(o)] = {i0, i1, w1};
    }
    return taps;
}

template <typename T>
void upsample2x_forward(const Tensor4<T>& x, Tensor4<T>& out) {
    const auto ty = bilinear2x_taps(x.height);
    const auto tx = bilinear2x_taps(x.width);
    for (index_t n = 0; n < x.batch; ++n) {
        for (index_t c = 0; c < x.channels; ++c) {
            const T* src = x.plane(n, c);
            T* dst = out.plane(n, c);
            for (index_t oy = 0; oy < out.height; ++oy) {
                const auto& a = ty[static_cast<std::size_t>(oy)];
                const T wy1 = static_cast<T>(a.w1);
                const T wy0 = T(1) - wy1;
                const T* r0 = src + a.i0 * x.width;
                const T* r1 = src + a.i1 * x.width;
                for (index_t ox = 0; ox < out.width; ++ox) {
                    const auto& b = tx[static_cast<std::size_t>(ox)];
                    const T wx1 = static_cast<T>(b.w1);
                    const T wx0 = T(1) - wx1;
                    dst[oy * out.width + ox] = wy0 * (wx0 * r0[b.i0] + wx1 * r0[b.i1]) +
                                               wy1 * (wx0 * r1[b.i0] + wx1 * r1[b.i1]);
                }
            }
        }
    }
}

template <typename T>
void upsample2x_backward(const Tensor4<T>& gout, Tensor4<T>& gx) {
    gx.fill(T(0));
    const auto ty = bilinear2x_taps(gx.height);
    const auto tx = bilinear2x_taps(gx.width);
    for (index_t n = 0; n < gx.batch; ++n) {
        for (index_t c = 0; c < gx.channels; ++c) {
            T* dst = gx.plane(n, c);
            const T* src = gout.plane(n, c);
            for (index_t oy = 0; oy < gout.height; ++oy) {
                const auto& a = ty[static_cast<std::size_t>(oy)];
                const T wy1 = static_cast<T>(a.w1);
                const T wy0 = T(1) - wy1;
                for (index_t ox = 0; ox < gout.width; ++ox) {
                    const auto& b = tx[static_cast<std::size_t>(ox)];
                    const T wx1 = static_cast<T>(b.w1);
                    const T wx0 = T(1) - wx1;
                    const T g = src[oy * gout.width + ox];
                    dst[a.i0 * gx.width + b.i0] += wy0 * wx0 * g;
                    dst[a.i0 * gx.width + b.i1] += wy0 * wx1 * g;
                    dst[a.i1 * gx.width + b.i0] += wy1 * wx0 * g;
                    dst[a.i1 * gx.width + b.i1] += wy1 * wx1 * g;
                }
            }
        }
    }
}

}  // namespace claw::kernels
