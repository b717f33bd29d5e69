#include "geoemerge/dataset.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

#include "geoemerge/losses.hpp"
#include "geoemerge/random.hpp"

namespace geoemerge {

namespace fs = std::filesystem;
using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "raw raster I/O assumes a little-endian host");

namespace {

// Kept out of line: GCC 11 folds an inlined, vectorized double->float->double
// round trip into a no-op.
[[gnu::noinline]] double to_float_precision(double x) { return static_cast<float>(x); }

template <typename T>
void write_raw(const fs::path& path, const std::vector<T>& data)
{
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("cannot write " + path.string());
    os.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(T)));
}

template <typename T>
std::vector<T> read_raw(const fs::path& path, std::size_t count)
{
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot read " + path.string());
    std::vector<T> data(count);
    is.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(count * sizeof(T)));
    if (is.gcount() != static_cast<std::streamsize>(count * sizeof(T)))
        throw FormatError("truncated raster " + path.string());
    return data;
}

json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }
Vec3 json_vec(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()}; }

json scene_json(const Scene& s)
{
    json objects = json::array();
    for (const SceneObject& o : s.objects)
        objects.push_back({{"min", vec_json(o.box.min)}, {"max", vec_json(o.box.max)}, {"label", o.label}});
    json j{{"seed", s.seed},
           {"room", {{"min", vec_json(s.room.min)}, {"max", vec_json(s.room.max)}}},
           {"objects", objects},
           {"light_direction", vec_json(s.light_direction)}};
    if (s.sphere) j["sphere"] = {{"center", vec_json(s.sphere->center)}, {"radius", s.sphere->radius}};
    return j;
}

Scene json_scene(const json& j)
{
    Scene s;
    s.seed = j.at("seed").get<std::uint64_t>();
    s.room = {json_vec(j.at("room").at("min")), json_vec(j.at("room").at("max"))};
    for (const json& o : j.at("objects"))
        s.objects.push_back({{json_vec(o.at("min")), json_vec(o.at("max"))}, o.at("label").get<int>()});
    s.light_direction = json_vec(j.at("light_direction"));
    if (j.contains("sphere"))
        s.sphere = Sphere{json_vec(j["sphere"].at("center")), j["sphere"].at("radius").get<double>()};
    return s;
}

json config_json(const SceneConfig& c)
{
    return {{"room_min", c.room_min},
            {"room_max", c.room_max},
            {"objects_min", c.objects_min},
            {"objects_max", c.objects_max},
            {"object_size_min", c.object_size_min},
            {"object_size_max", c.object_size_max},
            {"object_height_min", c.object_height_min},
            {"object_height_max", c.object_height_max},
            {"sphere_probability", c.sphere_probability},
            {"sphere_radius_min", c.sphere_radius_min},
            {"sphere_radius_max", c.sphere_radius_max},
            {"wall_margin", c.wall_margin},
            {"width", c.width},
            {"height", c.height},
            {"frames", c.frames},
            {"orbit_radius_fraction", c.orbit_radius_fraction},
            {"camera_height", c.camera_height},
            {"target_height", c.target_height},
            {"jitter_deg", c.jitter_deg},
            {"depth_noise_sigma", c.depth_noise_sigma}};
}

SceneConfig json_config(const json& j)
{
    SceneConfig c;
    const auto get = [&](const char* key, auto& field) {
        if (j.contains(key)) j.at(key).get_to(field);
    };
    get("room_min", c.room_min);
    get("room_max", c.room_max);
    get("objects_min", c.objects_min);
    get("objects_max", c.objects_max);
    get("object_size_min", c.object_size_min);
    get("object_size_max", c.object_size_max);
    get("object_height_min", c.object_height_min);
    get("object_height_max", c.object_height_max);
    get("sphere_probability", c.sphere_probability);
    get("sphere_radius_min", c.sphere_radius_min);
    get("sphere_radius_max", c.sphere_radius_max);
    get("wall_margin", c.wall_margin);
    get("width", c.width);
    get("height", c.height);
    get("frames", c.frames);
    get("orbit_radius_fraction", c.orbit_radius_fraction);
    get("camera_height", c.camera_height);
    get("target_height", c.target_height);
    get("jitter_deg", c.jitter_deg);
    get("depth_noise_sigma", c.depth_noise_sigma);
    return c;
}

std::string camera_text(const Camera& cam)
{
    std::ostringstream os;
    os << std::setprecision(17);
    const Intrinsics& k = cam.intrinsics;
    os << k.fx << ' ' << k.fy << ' ' << k.cx << ' ' << k.cy << '\n';
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) os << cam.pose.rotation(r, c) << ' ';
        os << cam.pose.translation[r] << '\n';
    }
    return os.str();
}

Camera parse_camera(const fs::path& path, int width, int height)
{
    std::ifstream is(path);
    if (!is) throw FormatError("cannot read " + path.string());
    Camera cam;
    cam.intrinsics.width = width;
    cam.intrinsics.height = height;
    is >> cam.intrinsics.fx >> cam.intrinsics.fy >> cam.intrinsics.cx >> cam.intrinsics.cy;
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) is >> cam.pose.rotation(r, c);
        is >> cam.pose.translation[r];
    }
    if (!is) throw FormatError("malformed camera record " + path.string());
    return cam;
}

std::string frame_stem(int f) { return fmt::format("frame_{:02d}", f); }

} // namespace

void quantize_frame(Frame& frame)
{
    for (double& c : frame.rgb.storage()) c = std::round(std::clamp(c, 0.0, 1.0) * 255.0) / 255.0;
    for (std::size_t i = 0; i < frame.depth.values.size(); ++i) {
        const float d = frame.depth.valid[i] ? static_cast<float>(frame.depth.values[i]) : 0.0f;
        frame.depth.values[i] = d;
        frame.depth.valid[i] = (std::isfinite(d) && d > 0.0f) ? 1 : 0;
    }
    for (std::size_t i = 0; i < frame.normals.normals.size(); ++i) {
        Vec3& n = frame.normals.normals[i];
        if (!frame.depth.valid[i]) {
            n.setZero();
            frame.normals.valid[i] = 0;
            continue;
        }
        for (int a = 0; a < 3; ++a) n[a] = to_float_precision(n[a]);
        frame.normals.valid[i] = 1;
    }
}

Dataset generate_dataset(std::uint64_t seed, int n_train, int n_test, const SceneConfig& config)
{
    require(n_train >= 0 && n_test >= 0 && n_train + n_test > 0, "generate_dataset: need at least one scene");
    config.validate();
    Dataset ds;
    ds.seed = seed;
    ds.config = config;
    for (int i = 0; i < n_train + n_test; ++i) {
        SceneRecord rec;
        rec.name = fmt::format("scene_{:04d}", i);
        rec.scene = generate_scene(mix_seed(seed, static_cast<std::uint64_t>(i)), config);
        Rng noise(mix_seed(rec.scene.seed, 0x4e4f495345ULL));
        for (const Camera& cam : sample_trajectory(rec.scene, config.frames, config)) {
            Frame f = render_frame(rec.scene, cam);
            if (config.depth_noise_sigma > 0.0)
                for (std::size_t p = 0; p < f.depth.values.size(); ++p)
                    if (f.depth.valid[p])
                        f.depth.values[p] = std::max(1e-3, f.depth.values[p] + config.depth_noise_sigma * normal(noise));
            quantize_frame(f);
            rec.frames.push_back(std::move(f));
        }
        ds.scenes.push_back(std::move(rec));
        (i < n_train ? ds.train : ds.test).push_back(i);
    }
    return ds;
}

void write_dataset(const Dataset& ds, const fs::path& dir)
{
    fs::create_directories(dir);
    json manifest{{"format", "geoemerge-dataset"},
                  {"version", 1},
                  {"units", "meters"},
                  {"seed", ds.seed},
                  {"config", config_json(ds.config)},
                  {"train", ds.train},
                  {"test", ds.test}};
    json scenes = json::array();
    for (const SceneRecord& rec : ds.scenes) {
        const fs::path sdir = dir / rec.name;
        fs::create_directories(sdir);
        json frames = json::array();
        for (std::size_t fi = 0; fi < rec.frames.size(); ++fi) {
            const Frame& f = rec.frames[fi];
            const std::string stem = frame_stem(static_cast<int>(fi));
            const std::size_t n = static_cast<std::size_t>(f.width()) * f.height();
            std::vector<std::uint8_t> rgb(n * 3);
            for (std::size_t i = 0; i < rgb.size(); ++i)
                rgb[i] = static_cast<std::uint8_t>(std::lround(std::clamp(f.rgb[i], 0.0, 1.0) * 255.0));
            std::vector<float> depth(n), normals(n * 3);
            std::vector<std::uint16_t> labels(f.labels.storage());
            for (std::size_t i = 0; i < n; ++i) {
                depth[i] = f.depth.valid[i] ? static_cast<float>(f.depth.values[i]) : 0.0f;
                for (int a = 0; a < 3; ++a) normals[i * 3 + a] = static_cast<float>(f.normals.normals[i][a]);
            }
            write_raw(sdir / (stem + ".rgb"), rgb);
            write_raw(sdir / (stem + ".depth"), depth);
            write_raw(sdir / (stem + ".normals"), normals);
            write_raw(sdir / (stem + ".labels"), labels);
            std::ofstream(sdir / (stem + ".cam")) << camera_text(f.camera);
            frames.push_back(rec.name + "/" + stem);
        }
        scenes.push_back({{"name", rec.name}, {"scene", scene_json(rec.scene)}, {"frames", frames}});
    }
    manifest["scenes"] = scenes;
    std::ofstream(dir / "manifest.json") << manifest.dump(2) << '\n';
}

Dataset read_dataset(const fs::path& dir)
{
    std::ifstream is(dir / "manifest.json");
    if (!is) throw FormatError("no manifest.json in " + dir.string());
    json manifest;
    try {
        manifest = json::parse(is);
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed manifest: ") + e.what());
    }
    if (manifest.value("format", "") != "geoemerge-dataset") throw FormatError("not a geoemerge dataset");

    Dataset ds;
    ds.seed = manifest.at("seed").get<std::uint64_t>();
    ds.config = json_config(manifest.at("config"));
    ds.train = manifest.at("train").get<std::vector<int>>();
    ds.test = manifest.at("test").get<std::vector<int>>();
    const int w = ds.config.width;
    const int h = ds.config.height;
    const std::size_t n = static_cast<std::size_t>(w) * h;
    for (const json& sj : manifest.at("scenes")) {
        SceneRecord rec;
        rec.name = sj.at("name").get<std::string>();
        rec.scene = json_scene(sj.at("scene"));
        for (const json& fj : sj.at("frames")) {
            const fs::path stem = dir / fj.get<std::string>();
            Frame f;
            f.camera = parse_camera(fs::path(stem.string() + ".cam"), w, h);
            const auto rgb = read_raw<std::uint8_t>(stem.string() + ".rgb", n * 3);
            const auto depth = read_raw<float>(stem.string() + ".depth", n);
            const auto normals = read_raw<float>(stem.string() + ".normals", n * 3);
            const auto labels = read_raw<std::uint16_t>(stem.string() + ".labels", n);
            f.rgb = Grid<double>(3 * w, h, 0.0);
            for (std::size_t i = 0; i < rgb.size(); ++i) f.rgb[i] = rgb[i] / 255.0;
            f.depth = DepthMap(w, h);
            f.normals = NormalMap{Grid<Vec3>(w, h, Vec3::Zero()), Mask(w, h, 0)};
            f.labels = Grid<std::uint16_t>(w, h, 0);
            for (std::size_t i = 0; i < n; ++i) {
                f.depth.values[i] = depth[i];
                f.depth.valid[i] = (std::isfinite(depth[i]) && depth[i] > 0.0f) ? 1 : 0;
                if (f.depth.valid[i]) {
                    f.normals.normals[i] = Vec3(normals[i * 3], normals[i * 3 + 1], normals[i * 3 + 2]);
                    f.normals.valid[i] = 1;
                }
                f.labels[i] = labels[i];
            }
            rec.frames.push_back(std::move(f));
        }
        ds.scenes.push_back(std::move(rec));
    }
    return ds;
}

std::vector<int> token_labels(const Frame& frame, int patch)
{
    const int gw = frame.width() / patch;
    const int gh = frame.height() / patch;
    std::vector<int> out(static_cast<std::size_t>(gw) * gh, kIgnoreLabel);
    std::array<int, label::count> votes{};
    for (int gy = 0; gy < gh; ++gy) {
        for (int gx = 0; gx < gw; ++gx) {
            votes.fill(0);
            for (int v = gy * patch; v < (gy + 1) * patch; ++v)
                for (int u = gx * patch; u < (gx + 1) * patch; ++u)
                    if (frame.depth.is_valid(u, v) && frame.labels(u, v) < label::count) ++votes[frame.labels(u, v)];
            const auto best = std::max_element(votes.begin(), votes.end());
            if (*best > 0) out[static_cast<std::size_t>(gy) * gw + gx] = static_cast<int>(best - votes.begin());
        }
    }
    return out;
}

std::vector<double> token_depth(const Frame& frame, int patch)
{
    const int gw = frame.width() / patch;
    const int gh = frame.height() / patch;
    std::vector<double> out(static_cast<std::size_t>(gw) * gh, std::numeric_limits<double>::quiet_NaN());
    for (int gy = 0; gy < gh; ++gy) {
        for (int gx = 0; gx < gw; ++gx) {
            double sum = 0.0;
            int n = 0;
            for (int v = gy * patch; v < (gy + 1) * patch; ++v)
                for (int u = gx * patch; u < (gx + 1) * patch; ++u)
                    if (frame.depth.is_valid(u, v)) {
                        sum += frame.depth.values(u, v);
                        ++n;
                    }
            if (n > 0) out[static_cast<std::size_t>(gy) * gw + gx] = sum / n;
        }
    }
    return out;
}

std::vector<Vec3> token_normals(const Frame& frame, int patch)
{
    const int gw = frame.width() / patch;
    const int gh = frame.height() / patch;
    std::vector<Vec3> out(static_cast<std::size_t>(gw) * gh, Vec3::Zero());
    for (int gy = 0; gy < gh; ++gy) {
        for (int gx = 0; gx < gw; ++gx) {
            Vec3 sum = Vec3::Zero();
            for (int v = gy * patch; v < (gy + 1) * patch; ++v)
                for (int u = gx * patch; u < (gx + 1) * patch; ++u)
                    if (frame.normals.valid(u, v)) sum += frame.normals.normals(u, v);
            if (sum.norm() > 0.0) out[static_cast<std::size_t>(gy) * gw + gx] = sum.normalized();
        }
    }
    return out;
}

} // namespace geoemerge
