#pragma once

// Differentiable tensor operations. Each op validates its contract, computes
// the forward value through the raw kernels, and registers a closure that
// pushes gradients into its parents.

#include <cmath>
#include <utility>
#include <vector>

#include "claw/autodiff.hpp"
#include "claw/kernels.hpp"
#include "claw/tensor.hpp"

namespace claw {

enum class Mode { train, eval };

/// 2D cross-correlation (kernel not flipped). weight (out_ch, in_ch, kh, kw);
/// bias, if present, is stored (1, out_ch, 1, 1). Output extent per axis is
/// floor((extent + 2*padding - k) / stride) + 1.
template <typename T>
NodePtr<T> conv2d(const NodePtr<T>& x, const NodePtr<T>& weight, const NodePtr<T>& bias,
                  index_t stride, index_t padding) {
    const Tensor4<T>& xv = x->value;
    const Tensor4<T>& wv = weight->value;
    if (xv.channels != wv.channels) {
        throw std::invalid_argument("conv2d: input channels " + std::to_string(xv.channels) +
                                    " do not match kernel channels " +
                                    std::to_string(wv.channels));
    }
    const index_t oh = kernels::conv_out_extent(xv.height, wv.height, stride, padding);
    const index_t ow = kernels::conv_out_extent(xv.width, wv.width, stride, padding);
    if (oh < 1 || ow < 1) {
        throw std::invalid_argument("conv2d: non-positive output extent for input " +
                                    xv.shape_str());
    }
    if (bias && bias->value.channels != wv.batch) {
        throw std::invalid_argument("conv2d: bias length does not match output channels");
    }

    Tensor4<T> out(xv.batch, wv.batch, oh, ow);
    kernels::conv2d_forward(xv, wv, bias ? bias->value.data.data() : nullptr, stride, padding,
                            out);

    std::vector<NodePtr<T>> parents{x, weight};
    if (bias) parents.push_back(bias);
    return make_node<T>(std::move(out), std::move(parents),
                        [x, weight, bias, stride, padding](Node<T>& self) {
                            if (x->requires_grad) {
                                Tensor4<T> gx = zeros_like(x->value);
                                kernels::conv2d_backward_data(self.grad, weight->value, stride,
                                                              padding, gx);
                                x->accumulate(gx);
                            }
                            if (weight->requires_grad) {
                                Tensor4<T>& gw = weight->ensure_grad();
                                kernels::conv2d_backward_weight(x->value, self.grad,
                                                                weight->value.height,
                                                                weight->value.width, stride,
                                                                padding, gw);
                            }
                            if (bias && bias->requires_grad) {
                                Tensor4<T>& gb = bias->ensure_grad();
                                kernels::sum_over_channel(self.grad, gb.data.data());
                            }
                        });
}

/// Transposed convolution. weight (in_ch, out_ch, kh, kw); output extent is
/// (in - 1) * stride + k, i.e. stride * extent when k == stride.
template <typename T>
NodePtr<T> deconv2d(const NodePtr<T>& x, const NodePtr<T>& weight, const NodePtr<T>& bias,
                    index_t stride) {
    const Tensor4<T>& xv = x->value;
    const Tensor4<T>& wv = weight->value;
    if (xv.channels != wv.batch) {
        throw std::invalid_argument("deconv2d: input channels " + std::to_string(xv.channels) +
                                    " do not match kernel input axis " +
                                    std::to_string(wv.batch));
    }
    if (bias && bias->value.channels != wv.channels) {
        throw std::invalid_argument("deconv2d: bias length does not match output channels");
    }
    const index_t oh = (xv.height - 1) * stride + wv.height;
    const index_t ow = (xv.width - 1) * stride + wv.width;

    Tensor4<T> out(xv.batch, wv.channels, oh, ow);
    kernels::deconv2d_forward(xv, wv, bias ? bias->value.data.data() : nullptr, stride, out);

    std::vector<NodePtr<T>> parents{x, weight};
    if (bias) parents.push_back(bias);
    return make_node<T>(std::move(out), std::move(parents),
                        [x, weight, bias, stride](Node<T>& self) {
                            if (x->requires_grad) {
                                Tensor4<T> gx = zeros_like(x->value);
                                kernels::deconv2d_backward_data(self.grad, weight->value, stride,
                                                                gx);
                                x->accumulate(gx);
                            }
                            if (weight->requires_grad) {
                                Tensor4<T>& gw = weight->ensure_grad();
                                kernels::deconv2d_backward_weight(x->value, self.grad,
                                                                  weight->value.height,
                                                                  weight->value.width, stride,
                                                                  gw);
                            }
                            if (bias && bias->requires_grad) {
                                Tensor4<T>& gb = bias->ensure_grad();
                                kernels::sum_over_channel(self.grad, gb.data.data());
                            }
                        });
}

template <typename T>
NodePtr<T> max_pool2d(const NodePtr<T>& x, index_t window = 2, index_t stride = 2) {
    if (window != 2 || stride != 2) {
        throw std::invalid_argument("max_pool2d: only 2x2/stride-2 pooling is supported");
    }
    const Tensor4<T>& xv = x->value;
    if (xv.height % 2 != 0 || xv.width % 2 != 0) {
        throw std::invalid_argument("max_pool2d: extents must be divisible by 2, got " +
                                    xv.shape_str());
    }
    Tensor4<T> out(xv.batch, xv.channels, xv.height / 2, xv.width / 2);
    auto argmax = std::make_shared<std::vector<index_t>>();
    kernels::maxpool2_forward(xv, out, *argmax);
    return make_node<T>(std::move(out), {x}, [x, argmax](Node<T>& self) {
        if (!x->requires_grad) return;
        Tensor4<T> gx = zeros_like(x->value);
        kernels::maxpool2_backward(*argmax, self.grad, gx);
        x->accumulate(gx);
    });
}

/// Bilinear 2x upsampling; see kernels::bilinear2x_taps for the exact sample
/// position formula.
template <typename T>
NodePtr<T> upsample2x(const NodePtr<T>& x) {
    const Tensor4<T>& xv = x->value;
    Tensor4<T> out(xv.batch, xv.channels, xv.height * 2, xv.width * 2);
    kernels::upsample2x_forward(xv, out);
    return make_node<T>(std::move(out), {x}, [x](Node<T>& self) {
        if (!x->requires_grad) return;
        Tensor4<T> gx = zeros_like(x->value);
        kernels::upsample2x_backward(self.grad, gx);
        x->accumulate(gx);
    });
}

template <typename T>
NodePtr<T> relu(const NodePtr<T>& x) {
    Tensor4<T> out = x->value;
    for (T& v : out.data) {
        if (v < T(0)) v = T(0);
    }
    return make_node<T>(std::move(out), {x}, [x](Node<T>& self) {
        if (!x->requires_grad) return;
        Tensor4<T> gx = zeros_like(x->value);
        for (std::size_t i = 0; i < gx.data.size(); ++i) {
            gx.data[i] = x->value.data[i] > T(0) ? self.grad.data[i] : T(0);
        }
        x->accumulate(gx);
    });
}

template <typename T>
T sigmoid_scalar(T v) {
    if (v >= T(0)) {
        return T(1) / (T(1) + std::exp(-v));
    }
    const T e = std::exp(v);
    return e / (T(1) + e);
}

template <typename T>
NodePtr<T> sigmoid(const NodePtr<T>& x) {
    Tensor4<T> out = x->value;
    for (T& v : out.data) v = sigmoid_scalar(v);
    auto saved = std::make_shared<Tensor4<T>>(out);
    return make_node<T>(std::move(out), {x}, [x, saved](Node<T>& self) {
        if (!x->requires_grad) return;
        Tensor4<T> gx = zeros_like(x->value);
        for (std::size_t i = 0; i < gx.data.size(); ++i) {
            const T s = saved->data[i];
            gx.data[i] = self.grad.data[i] * s * (T(1) - s);
        }
        x->accumulate(gx);
    });
}

template <typename T>
NodePtr<T> add(const NodePtr<T>& a, const NodePtr<T>& b) {
    if (!a->value.same_shape(b->value)) {
        throw std::invalid_argument("add: shape mismatch " + a->value.shape_str() + " vs " +
                                    b->value.shape_str());
    }
    Tensor4<T> out = a->value;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += b->value.data[i];
    return make_node<T>(std::move(out), {a, b}, [a, b](Node<T>& self) {
        if (a->requires_grad) a->accumulate(self.grad);
        if (b->requires_grad) b->accumulate(self.grad);
    });
}

/// x + bias with bias stored (1, C, 1, 1), broadcast over batch and space.
template <typename T>
NodePtr<T> add_channel_bias(const NodePtr<T>& x, const NodePtr<T>& bias) {
    const Tensor4<T>& xv = x->value;
    if (bias->value.channels != xv.channels) {
        throw std::invalid_argument("add_channel_bias: bias length mismatch");
    }
    Tensor4<T> out = xv;
    const index_t n_pix = xv.plane_size();
    for (index_t n = 0; n < xv.batch; ++n) {
        for (index_t c = 0; c < xv.channels; ++c) {
            T* dst = out.plane(n, c);
            const T b = bias->value.data[static_cast<std::size_t>(c)];
            for (index_t p = 0; p < n_pix; ++p) dst[p] += b;
        }
    }
    return make_node<T>(std::move(out), {x, bias}, [x, bias](Node<T>& self) {
        if (x->requires_grad) x->accumulate(self.grad);
        if (bias->requires_grad) {
            Tensor4<T>& gb = bias->ensure_grad();
            kernels::sum_over_channel(self.grad, gb.data.data());
        }
    });
}

template <typename T>
NodePtr<T> concat_channels(const std::vector<NodePtr<T>>& parts) {
    if (parts.empty()) {
        throw std::invalid_argument("concat_channels: no inputs");
    }
    const Tensor4<T>& first = parts.front()->value;
    index_t total_c = 0;
    for (const auto& p : parts) {
        const Tensor4<T>& v = p->value;
        if (v.batch != first.batch || v.height != first.height || v.width != first.width) {
            throw std::invalid_argument("concat_channels: extent mismatch " + v.shape_str() +
                                        " vs " + first.shape_str());
        }
        total_c += v.channels;
    }
    Tensor4<T> out(first.batch, total_c, first.height, first.width);
    const index_t n_pix = first.plane_size();
    for (index_t n = 0; n < first.batch; ++n) {
        index_t c_off = 0;
        for (const auto& p : parts) {
            const Tensor4<T>& v = p->value;
            std::copy(v.plane(n, 0), v.plane(n, 0) + v.channels * n_pix, out.plane(n, c_off));
            c_off += v.channels;
        }
    }
    return make_node<T>(std::move(out), parts, [parts, n_pix](Node<T>& self) {
        for (index_t n = 0; n < self.value.batch; ++n) {
            index_t c_off = 0;
            for (const auto& p : parts) {
                const index_t c_n = p->value.channels;
                if (p->requires_grad) {
                    Tensor4<T>& g = p->ensure_grad();
                    const T* src = self.grad.plane(n, c_off);
                    T* dst = g.plane(n, 0);
                    for (index_t i = 0; i < c_n * n_pix; ++i) dst[i] += src[i];
                }
                c_off += c_n;
            }
        }
    });
}

/// Multiplies every channel of x by a single-channel map (b, 1, h, w).
template <typename T>
NodePtr<T> scale_by_map(const NodePtr<T>& x, const NodePtr<T>& alpha) {
    const Tensor4<T>& xv = x->value;
    const Tensor4<T>& av = alpha->value;
    if (av.channels != 1 || av.batch != xv.batch || av.height != xv.height ||
        av.width != xv.width) {
        throw std::invalid_argument("scale_by_map: map must be (b,1,h,w) matching x");
    }
    Tensor4<T> out = xv;
    const index_t n_pix = xv.plane_size();
    for (index_t n = 0; n < xv.batch; ++n) {
        const T* a = av.plane(n, 0);
        for (index_t c = 0; c < xv.channels; ++c) {
            T* dst = out.plane(n, c);
            for (index_t p = 0; p < n_pix; ++p) dst[p] *= a[p];
        }
    }
    return make_node<T>(std::move(out), {x, alpha}, [x, alpha, n_pix](Node<T>& self) {
        if (x->requires_grad) {
            Tensor4<T> gx = zeros_like(x->value);
            for (index_t n = 0; n < gx.batch; ++n) {
                const T* a = alpha->value.plane(n, 0);
                for (index_t c = 0; c < gx.channels; ++c) {
                    const T* g = self.grad.plane(n, c);
                    T* dst = gx.plane(n, c);
                    for (index_t p = 0; p < n_pix; ++p) dst[p] = g[p] * a[p];
                }
            }
            x->accumulate(gx);
        }
        if (alpha->requires_grad) {
            Tensor4<T> ga = zeros_like(alpha->value);
            for (index_t n = 0; n < x->value.batch; ++n) {
                T* dst = ga.plane(n, 0);
                for (index_t c = 0; c < x->value.channels; ++c) {
                    const T* g = self.grad.plane(n, c);
                    const T* xs = x->value.plane(n, c);
                    for (index_t p = 0; p < n_pix; ++p) dst[p] += g[p] * xs[p];
                }
            }
            alpha->accumulate(ga);
        }
    });
}

/// Appends `extra` zero-valued channels (the dimension-matching shortcut).
template <typename T>
NodePtr<T> pad_channels(const NodePtr<T>& x, index_t extra) {
    if (extra < 1) {
        throw std::invalid_argument("pad_channels: extra must be >= 1");
    }
    const Tensor4<T>& xv = x->value;
    Tensor4<T> out(xv.batch, xv.channels + extra, xv.height, xv.width);
    const index_t n_pix = xv.plane_size();
    for (index_t n = 0; n < xv.batch; ++n) {
        std::copy(xv.plane(n, 0), xv.plane(n, 0) + xv.channels * n_pix, out.plane(n, 0));
    }
    return make_node<T>(std::move(out), {x}, [x, n_pix](Node<T>& self) {
        if (!x->requires_grad) return;
        Tensor4<T>& g = x->ensure_grad();
        for (index_t n = 0; n < g.batch; ++n) {
            const T* src = self.grad.plane(n, 0);
            T* dst = g.plane(n, 0);
            for (index_t i = 0; i < g.channels * n_pix; ++i) dst[i] += src[i];
        }
    });
}

/// Keeps every second row and column (top-left sample of each 2x2 cell).
template <typename T>
NodePtr<T> subsample2(const NodePtr<T>& x) {
    const Tensor4<T>& xv = x->value;
    if (xv.height % 2 != 0 || xv.width % 2 != 0) {
        throw std::invalid_argument("subsample2: extents must be divisible by 2");
    }
    Tensor4<T> out(xv.batch, xv.channels, xv.height / 2, xv.width / 2);
    for (index_t n = 0; n < xv.batch; ++n) {
        for (index_t c = 0; c < xv.channels; ++c) {
            const T* src = xv.plane(n, c);
            T* dst = out.plane(n, c);
            for (index_t y = 0; y < out.height; ++y) {
                for (index_t xq = 0; xq < out.width; ++xq) {
                    dst[y * out.width + xq] = src[(2 * y) * xv.width + 2 * xq];
                }
            }
        }
    }
    return make_node<T>(std::move(out), {x}, [x](Node<T>& self) {
        if (!x->requires_grad) return;
        Tensor4<T>& g = x->ensure_grad();
        for (index_t n = 0; n < g.batch; ++n) {
            for (index_t c = 0; c < g.channels; ++c) {
                const T* src = self.grad.plane(n, c);
                T* dst = g.plane(n, c);
                for (index_t y = 0; y < self.grad.height; ++y) {
                    for (index_t xq = 0; xq < self.grad.width; ++xq) {
                        dst[(2 * y) * g.width + 2 * xq] += src[y * self.grad.width + xq];
                    }
                }
            }
        }
    });
}

template <typename T>
struct BatchNormState {
    Tensor4<T> running_mean;  // (1, C, 1, 1)
    Tensor4<T> running_var;   // (1, C, 1, 1)
};

/// Batch normalization over (batch, height, width) per channel. Train mode
/// normalizes with the biased batch statistics and updates the running stats
/// in place (unbiased variance, momentum-weighted); eval mode normalizes with
/// the running stats.
template <typename T>
NodePtr<T> batchnorm2d(const NodePtr<T>& x, const NodePtr<T>& gamma, const NodePtr<T>& beta,
                       BatchNormState<T>& state, Mode mode, T momentum, T eps) {
    const Tensor4<T>& xv = x->value;
    const index_t c_n = xv.channels;
    if (gamma->value.channels != c_n || beta->value.channels != c_n) {
        throw std::invalid_argument("batchnorm2d: gamma/beta length must equal channels");
    }
    if (!(eps > T(0))) {
        throw std::invalid_argument("batchnorm2d: eps must be positive");
    }

    const index_t n_pix = xv.plane_size();
    const index_t m = xv.batch * n_pix;  // normalization count per channel

    auto mean = std::make_shared<std::vector<T>>(static_cast<std::size_t>(c_n), T(0));
    auto inv_std = std::make_shared<std::vector<T>>(static_cast<std::size_t>(c_n), T(0));

    if (mode == Mode::train) {
        for (index_t c = 0; c < c_n; ++c) {
            T acc = T(0);
            for (index_t n = 0; n < xv.batch; ++n) {
                const T* src = xv.plane(n, c);
                for (index_t p = 0; p < n_pix; ++p) acc += src[p];
            }
            const T mu = acc / static_cast<T>(m);
            T var_acc = T(0);
            for (index_t n = 0; n < xv.batch; ++n) {
                const T* src = xv.plane(n, c);
                for (index_t p = 0; p < n_pix; ++p) {
                    const T d = src[p] - mu;
                    var_acc += d * d;
                }
            }
            const T var = var_acc / static_cast<T>(m);
            (*mean)[static_cast<std::size_t>(c)] = mu;
            (*inv_std)[static_cast<std::size_t>(c)] = T(1) / std::sqrt(var + eps);

            const T unbiased = m > 1 ? var_acc / static_cast<T>(m - 1) : var;
            T& rm = state.running_mean.data[static_cast<std::size_t>(c)];
            T& rv = state.running_var.data[static_cast<std::size_t>(c)];
            rm = (T(1) - momentum) * rm + momentum * mu;
            rv = (T(1) - momentum) * rv + momentum * unbiased;
        }
    } else {
        for (index_t c = 0; c < c_n; ++c) {
            (*mean)[static_cast<std::size_t>(c)] =
                state.running_mean.data[static_cast<std::size_t>(c)];
            (*inv_std)[static_cast<std::size_t>(c)] =
                T(1) / std::sqrt(state.running_var.data[static_cast<std::size_t>(c)] + eps);
        }
    }

    Tensor4<T> out = xv;
    for (index_t n = 0; n < xv.batch; ++n) {
        for (index_t c = 0; c < c_n; ++c) {
            const T mu = (*mean)[static_cast<std::size_t>(c)];
            const T is = (*inv_std)[static_cast<std::size_t>(c)];
            const T g = gamma->value.data[static_cast<std::size_t>(c)];
            const T b = beta->value.data[static_cast<std::size_t>(c)];
            T* dst = out.plane(n, c);
            for (index_t p = 0; p < n_pix; ++p) {
                dst[p] = (dst[p] - mu) * is * g + b;
            }
        }
    }

    const bool train_stats = (mode == Mode::train);
    return make_node<T>(
        std::move(out), {x, gamma, beta},
        [x, gamma, beta, mean, inv_std, m, n_pix, train_stats](Node<T>& self) {
            const index_t c_n = x->value.channels;
            Tensor4<T> gx;
            if (x->requires_grad) gx = zeros_like(x->value);
            for (index_t c = 0; c < c_n; ++c) {
                const T mu = (*mean)[static_cast<std::size_t>(c)];
                const T is = (*inv_std)[static_cast<std::size_t>(c)];
                const T g = gamma->value.data[static_cast<std::size_t>(c)];

                // per-channel reductions of dY and dY * x_hat
                T sum_dy = T(0);
                T sum_dy_xhat = T(0);
                for (index_t n = 0; n < x->value.batch; ++n) {
                    const T* dy = self.grad.plane(n, c);
                    const T* xs = x->value.plane(n, c);
                    for (index_t p = 0; p < n_pix; ++p) {
                        sum_dy += dy[p];
                        sum_dy_xhat += dy[p] * (xs[p] - mu) * is;
                    }
                }
                if (gamma->requires_grad) {
                    gamma->ensure_grad().data[static_cast<std::size_t>(c)] += sum_dy_xhat;
                }
                if (beta->requires_grad) {
                    beta->ensure_grad().data[static_cast<std::size_t>(c)] += sum_dy;
                }
                if (x->requires_grad) {
                    const T inv_m = T(1) / static_cast<T>(m);
                    for (index_t n = 0; n < x->value.batch; ++n) {
                        const T* dy = self.grad.plane(n, c);
                        const T* xs = x->value.plane(n, c);
                        T* dst = gx.plane(n, c);
                        for (index_t p = 0; p < n_pix; ++p) {
                            if (train_stats) {
                                const T xhat = (xs[p] - mu) * is;
                                dst[p] = g * is *
                                         (dy[p] - sum_dy * inv_m - xhat * sum_dy_xhat * inv_m);
                            } else {
                                dst[p] = g * is * dy[p];
                            }
                        }
                    }
                }
            }
            if (x->requires_grad) x->accumulate(gx);
        });
}

/// Mean binary cross-entropy. Predictions are clamped into [eps, 1-eps] with
/// eps = 1e-7 before the logs; the clamp also zeroes the gradient outside that
/// band. Target values must be exactly 0 or 1.
template <typename T>
NodePtr<T> bce_loss(const NodePtr<T>& pred, const Tensor4<T>& target) {
    const Tensor4<T>& pv = pred->value;
    if (!pv.same_shape(target)) {
        throw std::invalid_argument("bce_loss: shape mismatch " + pv.shape_str() + " vs " +
                                    target.shape_str());
    }
    for (T t : target.data) {
        if (t != T(0) && t != T(1)) {
            throw std::invalid_argument("bce_loss: target values must be exactly 0 or 1");
        }
    }
    constexpr double kClamp = 1e-7;
    const T lo = static_cast<T>(kClamp);
    const T hi = static_cast<T>(1.0 - kClamp);

    double acc = 0.0;
    for (std::size_t i = 0; i < pv.data.size(); ++i) {
        const T p = std::clamp(pv.data[i], lo, hi);
        const double t = static_cast<double>(target.data[i]);
        acc -= t * std::log(static_cast<double>(p)) +
               (1.0 - t) * std::log(1.0 - static_cast<double>(p));
    }
    const double n = static_cast<double>(pv.size());
    Tensor4<T> out(1, 1, 1, 1);
    out.data[0] = static_cast<T>(acc / n);

    auto target_copy = std::make_shared<Tensor4<T>>(target);
    return make_node<T>(std::move(out), {pred}, [pred, target_copy, lo, hi, n](Node<T>& self) {
        if (!pred->requires_grad) return;
        const T g0 = self.grad.data[0];
        Tensor4<T> gp = zeros_like(pred->value);
        for (std::size_t i = 0; i < gp.data.size(); ++i) {
            const T raw = pred->value.data[i];
            if (raw < lo || raw > hi) continue;  // clamped: d(clamp)/d(raw) = 0
            const T t = target_copy->data[i];
            gp.data[i] = g0 * (raw - t) / (raw * (T(1) - raw) * static_cast<T>(n));
        }
        pred->accumulate(gp);
    });
}

}  // namespace claw
