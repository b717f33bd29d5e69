#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "geoemerge/error.hpp"

namespace geoemerge {

// Dense row-major H x W raster.
template <typename T>
class Grid {
public:
    Grid() = default;
    Grid(int width, int height, const T& fill = T{})
        : width_(width), height_(height), data_(static_cast<std::size_t>(width) * height, fill)
    {
        require(width >= 0 && height >= 0, "Grid: negative size");
    }

    int width() const { return width_; }
    int height() const { return height_; }
    std::size_t size() const { return data_.size(); }
    bool same_shape(int w, int h) const { return width_ == w && height_ == h; }
    template <typename U>
    bool same_shape(const Grid<U>& other) const { return same_shape(other.width(), other.height()); }

    bool in_bounds(int u, int v) const { return u >= 0 && v >= 0 && u < width_ && v < height_; }
    std::size_t index(int u, int v) const { return static_cast<std::size_t>(v) * width_ + u; }

    T& operator()(int u, int v) { return data_[index(u, v)]; }
    const T& operator()(int u, int v) const { return data_[index(u, v)]; }
    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    std::span<T> values() { return data_; }
    std::span<const T> values() const { return data_; }
    std::vector<T>& storage() { return data_; }
    const std::vector<T>& storage() const { return data_; }

    bool operator==(const Grid&) const = default;

private:
    int width_ = 0;
    int height_ = 0;
    std::vector<T> data_;
};

using Mask = Grid<unsigned char>;

} // namespace geoemerge
