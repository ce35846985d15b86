#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace claw {

using index_t = std::int64_t;

/// Dense rank-4 array in (batch, channel, row, col) order, row-major storage.
template <typename T>
struct Tensor4 {
    index_t batch = 0;
    index_t channels = 0;
    index_t height = 0;
    index_t width = 0;
    std::vector<T> data;

    Tensor4() = default;

    Tensor4(index_t b, index_t c, index_t h, index_t w, T init = T(0))
        : batch(b), channels(c), height(h), width(w) {
        if (b < 1 || c < 1 || h < 1 || w < 1) {
            throw std::invalid_argument("Tensor4: all extents must be >= 1");
        }
        data.assign(static_cast<std::size_t>(b * c * h * w), init);
    }

    index_t size() const { return batch * channels * height * width; }
    bool empty() const { return data.empty(); }

    index_t plane_size() const { return height * width; }

    T& operator()(index_t n, index_t c, index_t y, index_t x) {
        return data[static_cast<std::size_t>(((n * channels + c) * height + y) * width + x)];
    }
    const T& operator()(index_t n, index_t c, index_t y, index_t x) const {
        return data[static_cast<std::size_t>(((n * channels + c) * height + y) * width + x)];
    }

    T* plane(index_t n, index_t c) {
        return data.data() + (n * channels + c) * height * width;
    }
    const T* plane(index_t n, index_t c) const {
        return data.data() + (n * channels + c) * height * width;
    }

    /// Pointer to the (channels*height*width) block of one batch item.
    T* item(index_t n) { return data.data() + n * channels * height * width; }
    const T* item(index_t n) const { return data.data() + n * channels * height * width; }

    bool same_shape(const Tensor4& o) const {
        return batch == o.batch && channels == o.channels && height == o.height &&
               width == o.width;
    }

    void fill(T v) { std::fill(data.begin(), data.end(), v); }

    bool all_finite() const {
        for (T v : data) {
            if (!std::isfinite(static_cast<double>(v))) return false;
        }
        return true;
    }

    std::string shape_str() const {
        return "(" + std::to_string(batch) + "," + std::to_string(channels) + "," +
               std::to_string(height) + "," + std::to_string(width) + ")";
    }
};

template <typename T>
Tensor4<T> zeros_like(const Tensor4<T>& t) {
    return Tensor4<T>(t.batch, t.channels, t.height, t.width);
}

template <typename T, typename U>
Tensor4<T> cast_tensor(const Tensor4<U>& t) {
    Tensor4<T> out(t.batch, t.channels, t.height, t.width);
    for (std::size_t i = 0; i < t.data.size(); ++i) {
        out.data[i] = static_cast<T>(t.data[i]);
    }
    return out;
}

}  // namespace claw
