#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "geoemerge/checkpoint.hpp"
#include "geoemerge/dataset.hpp"
#include "geoemerge/error.hpp"

using namespace geoemerge;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name)
{
    const fs::path dir = fs::temp_directory_path() / ("geoemerge_test_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p)
{
    std::ifstream is(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

void spit(const fs::path& p, const std::string& bytes) { std::ofstream(p, std::ios::binary) << bytes; }

bool same_model(const Model& a, const Model& b)
{
    if (!(a.shape == b.shape) || a.validator.has_value() != b.validator.has_value()) return false;
    const auto pa = a.parameter_sets();
    const auto pb = b.parameter_sets();
    if (pa.size() != pb.size()) return false;
    for (std::size_t i = 0; i < pa.size(); ++i)
        if (!(*pa[i] == *pb[i])) return false;
    return true;
}

} // namespace

TEST_CASE("dataset round trip is bit-exact")
{
    const Dataset ds = generate_dataset(11, 2, 1);
    const fs::path dir = scratch_dir("dataset");
    write_dataset(ds, dir);
    const Dataset back = read_dataset(dir);
    CHECK(back.seed == ds.seed);
    CHECK(back.config == ds.config);
    CHECK(back.train == ds.train);
    CHECK(back.test == ds.test);
    REQUIRE(back.scenes.size() == ds.scenes.size());
    for (std::size_t s = 0; s < ds.scenes.size(); ++s) {
        const SceneRecord& a = ds.scenes[s];
        const SceneRecord& b = back.scenes[s];
        CHECK(a.name == b.name);
        CHECK(a.scene == b.scene);
        REQUIRE(a.frames.size() == b.frames.size());
        for (std::size_t f = 0; f < a.frames.size(); ++f) {
            CHECK(a.frames[f].rgb == b.frames[f].rgb);
            CHECK(a.frames[f].depth.values == b.frames[f].depth.values);
            CHECK(a.frames[f].depth.valid == b.frames[f].depth.valid);
            CHECK(a.frames[f].normals.normals == b.frames[f].normals.normals);
            CHECK(a.frames[f].normals.valid == b.frames[f].normals.valid);
            CHECK(a.frames[f].labels == b.frames[f].labels);
            CHECK(a.frames[f].camera.intrinsics == b.frames[f].camera.intrinsics);
            CHECK(a.frames[f].camera.pose == b.frames[f].camera.pose);
        }
    }
    // Writing the reloaded copy reproduces every file byte for byte.
    const fs::path again = scratch_dir("dataset_again");
    write_dataset(back, again);
    for (const auto& entry : fs::recursive_directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        const fs::path rel = fs::relative(entry.path(), dir);
        CHECK_MESSAGE(slurp(entry.path()) == slurp(again / rel), rel.string());
    }
}

TEST_CASE("dataset reader rejects malformed input")
{
    const fs::path dir = scratch_dir("dataset_bad");
    CHECK_THROWS_AS(read_dataset(dir), FormatError);
    spit(dir / "manifest.json", "{not json");
    CHECK_THROWS_AS(read_dataset(dir), FormatError);
    spit(dir / "manifest.json", R"({"format": "something-else"})");
    CHECK_THROWS_AS(read_dataset(dir), FormatError);

    const Dataset ds = generate_dataset(12, 1, 1);
    const fs::path good = scratch_dir("dataset_truncated");
    write_dataset(ds, good);
    const fs::path depth = good / ds.scenes[0].name / "frame_00.depth";
    REQUIRE(fs::exists(depth));
    const std::string bytes = slurp(depth);
    spit(depth, bytes.substr(0, bytes.size() / 2));
    CHECK_THROWS_AS(read_dataset(good), FormatError);
}

TEST_CASE("checkpoint round trip is exact")
{
    for (const bool positional : {true, false})
        for (const bool with_validator : {true, false}) {
            NetShape shape;
            shape.positional = positional;
            const Model model(shape, 77, with_validator);
            const CheckpointMeta meta{5, 6, true, false, 123};
            const fs::path path = scratch_dir("ckpt") / "model.ckpt";
            save_checkpoint(path, model, meta);
            const Checkpoint back = load_checkpoint(path);
            CHECK(back.meta == meta);
            CHECK(back.model.shape.positional == positional);
            CHECK(same_model(model, back.model));
            // Saving again yields the same bytes.
            const fs::path again = path.parent_path() / "again.ckpt";
            save_checkpoint(again, back.model, back.meta);
            CHECK(slurp(path) == slurp(again));
        }
}

TEST_CASE("checkpoint reader rejects corrupt files")
{
    const Model model(NetShape{}, 3, true);
    const fs::path dir = scratch_dir("ckpt_bad");
    const fs::path path = dir / "model.ckpt";
    save_checkpoint(path, model, {});
    const std::string bytes = slurp(path);

    const fs::path bad = dir / "bad.ckpt";
    CHECK_THROWS_AS(load_checkpoint(dir / "missing.ckpt"), FormatError);

    spit(bad, bytes + std::string(1, '\0'));
    CHECK_THROWS_WITH_AS(load_checkpoint(bad), "trailing bytes in checkpoint", FormatError);

    spit(bad, bytes.substr(0, bytes.size() - 8));
    CHECK_THROWS_AS(load_checkpoint(bad), FormatError);

    std::string magic = bytes;
    magic[0] = 'X';
    spit(bad, magic);
    CHECK_THROWS_AS(load_checkpoint(bad), FormatError);

    std::string version = bytes;
    version[8] = static_cast<char>(kCheckpointVersion + 1);
    spit(bad, version);
    CHECK_THROWS_WITH_AS(load_checkpoint(bad), doctest::Contains("unsupported checkpoint version"), FormatError);
}
