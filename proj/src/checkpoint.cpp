#include "geoemerge/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>

namespace geoemerge {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr std::array<char, 8> kMagic{'G', 'E', 'O', 'C', 'K', 'P', 'T', '\0'};

template <typename T>
void put(std::ostream& os, T v)
{
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is)
{
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw FormatError("checkpoint truncated");
    return v;
}

void put_params(std::ostream& os, const ParameterSet& set)
{
    for (std::size_t b = 0; b < set.blocks().size(); ++b) {
        const std::string name = set.name() + "." + set.blocks()[b].name;
        put<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        const auto values = set.value(static_cast<int>(b));
        put<std::uint64_t>(os, values.size());
        os.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size_bytes()));
    }
}

void get_params(std::istream& is, ParameterSet& set)
{
    for (std::size_t b = 0; b < set.blocks().size(); ++b) {
        const std::string expected = set.name() + "." + set.blocks()[b].name;
        const auto len = get<std::uint32_t>(is);
        if (len > 4096) throw FormatError("checkpoint block name too long");
        std::string name(len, '\0');
        is.read(name.data(), len);
        if (!is || name != expected) throw FormatError("checkpoint block mismatch: expected " + expected);
        auto values = set.value(static_cast<int>(b));
        if (get<std::uint64_t>(is) != values.size()) throw FormatError("checkpoint block size mismatch: " + name);
        is.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size_bytes()));
        if (!is) throw FormatError("checkpoint truncated in " + name);
    }
}

} // namespace

void save_checkpoint(const std::filesystem::path& path, const Model& model, const CheckpointMeta& meta)
{
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("cannot write checkpoint " + path.string());
    os.write(kMagic.data(), kMagic.size());
    put<std::uint32_t>(os, kCheckpointVersion);
    const NetShape& s = model.shape;
    for (int v : {s.patch, s.grid_w, s.grid_h, s.channels, s.validator_hidden, s.global_dim, s.classes})
        put<std::int32_t>(os, v);
    put<std::uint8_t>(os, s.positional);
    put<std::uint64_t>(os, model.seed);
    put<std::uint64_t>(os, meta.seed);
    put<std::uint64_t>(os, meta.teacher_seed);
    put<std::int64_t>(os, meta.step);
    put<std::uint8_t>(os, meta.injection);
    put<std::uint8_t>(os, meta.warmstart);
    put<std::uint8_t>(os, model.validator.has_value());
    for (const ParameterSet* set : model.parameter_sets()) put_params(os, *set);
    if (!os) throw FormatError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot read checkpoint " + path.string());
    std::array<char, 8> magic{};
    is.read(magic.data(), magic.size());
    if (!is || magic != kMagic) throw FormatError("not a checkpoint: " + path.string());
    if (const auto version = get<std::uint32_t>(is); version != kCheckpointVersion)
        throw FormatError("unsupported checkpoint version " + std::to_string(version));
    NetShape s;
    for (int* f : {&s.patch, &s.grid_w, &s.grid_h, &s.channels, &s.validator_hidden, &s.global_dim, &s.classes})
        *f = get<std::int32_t>(is);
    s.positional = get<std::uint8_t>(is) != 0;
    const auto model_seed = get<std::uint64_t>(is);
    CheckpointMeta meta;
    meta.seed = get<std::uint64_t>(is);
    meta.teacher_seed = get<std::uint64_t>(is);
    meta.step = get<std::int64_t>(is);
    meta.injection = get<std::uint8_t>(is) != 0;
    meta.warmstart = get<std::uint8_t>(is) != 0;
    const bool with_validator = get<std::uint8_t>(is) != 0;
    Checkpoint ck{meta, Model(s, model_seed, with_validator)};
    for (ParameterSet* set : ck.model.parameter_sets()) get_params(is, *set);
    if (is.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes in checkpoint");
    return ck;
}

} // namespace geoemerge
