#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "geoemerge/error.hpp"

namespace geoemerge {

// Per-frame grid of patch tokens, each a `channels`-vector, row-major over
// tokens. This is the only representation the heads ever see.
struct TokenGrid {
    int grid_w = 0;
    int grid_h = 0;
    int channels = 0;
    int frame_index = 0;
    std::vector<double> values;

    TokenGrid() = default;
    TokenGrid(int gw, int gh, int c, int frame = 0)
        : grid_w(gw), grid_h(gh), channels(c), frame_index(frame),
          values(static_cast<std::size_t>(gw) * gh * c, 0.0)
    {
    }

    int count() const { return grid_w * grid_h; }
    std::span<double> token(int t) { return {values.data() + static_cast<std::size_t>(t) * channels, static_cast<std::size_t>(channels)}; }
    std::span<const double> token(int t) const { return {values.data() + static_cast<std::size_t>(t) * channels, static_cast<std::size_t>(channels)}; }
    bool same_shape(const TokenGrid& o) const { return grid_w == o.grid_w && grid_h == o.grid_h && channels == o.channels; }
};

} // namespace geoemerge
