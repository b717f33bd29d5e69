#pragma once

// Binary model container: "GEOCKPT\0", u32 version, the NetShape record,
// seeds and run flags, then every parameter block in declaration order as
// (u32 name length, name, u64 count, count little-endian f64 values).

#include <cstdint>
#include <filesystem>

#include "geoemerge/net.hpp"

namespace geoemerge {

struct CheckpointMeta {
    std::uint64_t seed = 0;
    std::uint64_t teacher_seed = 0;
    bool injection = false;
    bool warmstart = false;
    std::int64_t step = 0;
    bool operator==(const CheckpointMeta&) const = default;
};

struct Checkpoint {
    CheckpointMeta meta;
    Model model;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const Model& model, const CheckpointMeta& meta);
Checkpoint load_checkpoint(const std::filesystem::path& path);

} // namespace geoemerge
