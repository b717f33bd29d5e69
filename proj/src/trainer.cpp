#include "geoemerge/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>

#include <fmt/format.h>

#include "geoemerge/hash.hpp"
#include "geoemerge/injection.hpp"
#include "geoemerge/random.hpp"

namespace geoemerge {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Configuration

void RunConfig::validate() const
{
    require(steps >= 1, "RunConfig: steps must be >= 1");
    require(!seeds.empty(), "RunConfig: seeds must be non-empty");
    require(neighbor_window >= 1, "RunConfig: neighbor_window must be >= 1");
    require(batch >= 2, "RunConfig: batch must hold at least the neighbour pair");
    require(alpha > 0.0, "RunConfig: alpha must be positive");
    require(lr > 0.0, "RunConfig: lr must be positive");
    require(train_scenes >= 1 && test_scenes >= 1, "RunConfig: need train and test scenes");
    require(warmstart_steps >= 1, "RunConfig: warmstart_steps must be >= 1");
    require(validator_hidden >= 1, "RunConfig: validator_hidden must be >= 1");
}

NetShape RunConfig::shape() const
{
    NetShape s;
    s.positional = positional;
    s.validator_hidden = validator_hidden;
    return s;
}

void to_json(json& j, const RunConfig& c)
{
    j = json{{"dataset", c.dataset},
             {"dataset_seed", c.dataset_seed},
             {"train_scenes", c.train_scenes},
             {"test_scenes", c.test_scenes},
             {"toggles", {{"global", c.toggles.global}, {"geometry", c.toggles.geometry}, {"cross_view", c.toggles.cross_view}}},
             {"weights", {{"ce", c.weights.ce}, {"geometry", c.weights.geometry}, {"cross_view", c.weights.cross_view}, {"global", c.weights.global}}},
             {"validator_init", c.validator_init == ValidatorInit::scratch ? "scratch" : "warmstart"},
             {"injection", c.injection},
             {"alpha", c.alpha},
             {"lr", c.lr},
             {"seeds", c.seeds},
             {"steps", c.steps},
             {"batch", c.batch},
             {"neighbor_window", c.neighbor_window},
             {"warmstart_steps", c.warmstart_steps},
             {"teacher_seed", c.teacher_seed},
             {"positional", c.positional},
             {"validator_hidden", c.validator_hidden},
             {"out", c.out}};
}

void from_json(const json& j, RunConfig& c)
{
    const auto get = [&](const char* key, auto& field) {
        if (j.contains(key)) j.at(key).get_to(field);
    };
    get("dataset", c.dataset);
    get("dataset_seed", c.dataset_seed);
    get("train_scenes", c.train_scenes);
    get("test_scenes", c.test_scenes);
    if (j.contains("toggles")) {
        const json& t = j.at("toggles");
        c.toggles.global = t.value("global", c.toggles.global);
        c.toggles.geometry = t.value("geometry", c.toggles.geometry);
        c.toggles.cross_view = t.value("cross_view", c.toggles.cross_view);
    }
    if (j.contains("weights")) {
        const json& w = j.at("weights");
        c.weights.ce = w.value("ce", c.weights.ce);
        c.weights.geometry = w.value("geometry", c.weights.geometry);
        c.weights.cross_view = w.value("cross_view", c.weights.cross_view);
        c.weights.global = w.value("global", c.weights.global);
    }
    if (j.contains("validator_init")) {
        const std::string v = j.at("validator_init").get<std::string>();
        if (v == "scratch")
            c.validator_init = ValidatorInit::scratch;
        else if (v == "warmstart")
            c.validator_init = ValidatorInit::warmstart;
        else
            throw FormatError("validator_init must be scratch or warmstart, got " + v);
    }
    get("injection", c.injection);
    get("alpha", c.alpha);
    get("lr", c.lr);
    get("seeds", c.seeds);
    get("steps", c.steps);
    get("batch", c.batch);
    get("neighbor_window", c.neighbor_window);
    get("warmstart_steps", c.warmstart_steps);
    get("teacher_seed", c.teacher_seed);
    get("positional", c.positional);
    get("validator_hidden", c.validator_hidden);
    get("out", c.out);
}

RunConfig load_config(const fs::path& path)
{
    std::ifstream is(path);
    if (!is) throw FormatError("cannot read config " + path.string());
    try {
        RunConfig c = json::parse(is).get<RunConfig>();
        c.validate();
        return c;
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed config: ") + e.what());
    }
}

Dataset load_or_generate(const RunConfig& config)
{
    if (!config.dataset.empty()) return read_dataset(config.dataset);
    return generate_dataset(config.dataset_seed, config.train_scenes, config.test_scenes);
}

// ---------------------------------------------------------------------------
// Forward / backward for one sample

CoordinateCodes coordinate_codes(const SceneRecord& scene, const NetShape& shape)
{
    CoordinateCodes codes;
    for (const Frame& f : scene.frames) {
        const PointMap pm = backproject(f.depth, f.camera.intrinsics, f.camera.pose);
        const PatchPoolSummary pooled = pool_coordinates(pm, shape.patch);
        codes.push_back(inject(TokenGrid(shape.grid_w, shape.grid_h, shape.channels), pooled));
    }
    return codes;
}

TokenGrid encode(const Model& model, const Frame& frame, const TokenGrid* code, EncoderCache* cache)
{
    TokenGrid tokens = model.encoder.forward(frame.rgb, cache);
    if (code) {
        require(code->same_shape(tokens), "encode: coordinate code does not match the token grid");
        for (std::size_t i = 0; i < tokens.values.size(); ++i) tokens.values[i] += code->values[i];
    }
    return tokens;
}

namespace {

void add_into(TokenGrid& dst, const TokenGrid& src, double scale = 1.0)
{
    for (std::size_t i = 0; i < dst.values.size(); ++i) dst.values[i] += scale * src.values[i];
}

void scale_grid(Grid<double>& g, double s)
{
    for (double& x : g.storage()) x *= s;
}

void add_grid(Grid<double>& dst, const Grid<double>& src, double s = 1.0)
{
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += s * src[i];
}

} // namespace

LossReport accumulate_step(Model& model, const SceneRecord& scene, const StepSample& sample, const StepContext& ctx)
{
    const NetShape& shape = model.shape;
    const std::size_t n = sample.frames.size();
    require(n >= 1, "accumulate_step: empty sample");
    for (int f : sample.frames)
        require(f >= 0 && f < static_cast<int>(scene.frames.size()), "accumulate_step: frame index out of range");
    const double inv_n = 1.0 / static_cast<double>(n);

    std::vector<EncoderCache> enc_cache(n);
    std::vector<TokenGrid> tokens(n);
    std::vector<TokenGrid> grad_tokens;
    for (std::size_t i = 0; i < n; ++i) {
        const int f = sample.frames[i];
        const TokenGrid* code = ctx.codes ? &(*ctx.codes)[static_cast<std::size_t>(f)] : nullptr;
        tokens[i] = encode(model, scene.frames[static_cast<std::size_t>(f)], code, &enc_cache[i]);
        grad_tokens.emplace_back(shape.grid_w, shape.grid_h, shape.channels);
    }

    LossParts parts;

    // Primary proxy task.
    CeLoss ce_mean;
    for (std::size_t i = 0; i < n; ++i) {
        const Frame& frame = scene.frames[static_cast<std::size_t>(sample.frames[i])];
        const std::vector<double> logits = model.semantic.forward(tokens[i]);
        const std::vector<int> labels = token_labels(frame, shape.patch);
        CeLoss ce = ce_proxy_loss(logits, labels, shape.classes);
        ce_mean.value += ce.value * inv_n;
        for (double& g : ce.grad_logits) g *= inv_n * ctx.weights.ce;
        add_into(grad_tokens[i], model.semantic.backward(tokens[i], ce.grad_logits));
    }
    parts.ce = std::move(ce_mean);

    // Validator terms.
    if (ctx.toggles.geometry || ctx.toggles.cross_view) {
        require(model.validator.has_value(), "accumulate_step: geometric terms need a validator");
        Validator& validator = *model.validator;
        const std::size_t used = ctx.toggles.geometry ? n : std::min<std::size_t>(n, 2);
        std::vector<ValidatorCache> val_cache(used);
        std::vector<DepthPrediction> pred(used);
        std::vector<Grid<double>> grad_depth, grad_sigma;
        for (std::size_t i = 0; i < used; ++i) {
            pred[i] = validator.forward(tokens[i], &val_cache[i]);
            grad_depth.emplace_back(shape.width(), shape.height(), 0.0);
            grad_sigma.emplace_back(shape.width(), shape.height(), 0.0);
        }
        if (ctx.toggles.geometry) {
            GeometryLoss mean;
            Fnv1a branches;
            for (std::size_t i = 0; i < n; ++i) {
                const Frame& frame = scene.frames[static_cast<std::size_t>(sample.frames[i])];
                const GeometryLoss g = geometry_loss({pred[i].depth, pred[i].sigma, frame.depth, ctx.alpha});
                mean.value += g.value * inv_n;
                branches.add(g.signature);
                add_grid(grad_depth[i], g.grad_depth, inv_n * ctx.weights.geometry);
                add_grid(grad_sigma[i], g.grad_sigma, inv_n * ctx.weights.geometry);
            }
            mean.signature = branches.digest();
            parts.geometry = std::move(mean);
        }
        if (ctx.toggles.cross_view) {
            require(n >= 2 && sample.frames[0] != sample.frames[1],
                    "accumulate_step: cross-view needs two distinct frames of one scene");
            const Frame& ft = scene.frames[static_cast<std::size_t>(sample.frames[0])];
            const Frame& fo = scene.frames[static_cast<std::size_t>(sample.frames[1])];
            const Pose other_to_t = relative_pose(fo.camera.pose, ft.camera.pose);
            CrossViewLoss cv = cross_view_loss(pred[0].depth, pred[1].depth, other_to_t, ft.camera.intrinsics);
            add_grid(grad_depth[0], cv.grad_depth_t, ctx.weights.cross_view);
            add_grid(grad_depth[1], cv.grad_depth_other, ctx.weights.cross_view);
            cv.grad_depth_t = {};
            cv.grad_depth_other = {};
            parts.cross_view = std::move(cv);
        }
        for (std::size_t i = 0; i < used; ++i)
            add_into(grad_tokens[i], validator.backward(val_cache[i], grad_depth[i], grad_sigma[i]));
    }

    // Scene-level alignment with the frozen teacher.
    if (ctx.toggles.global) {
        require(ctx.teacher != nullptr, "accumulate_step: global term needs a teacher descriptor");
        const std::vector<double> fb = model.global.forward(tokens);
        GlobalLoss gl = global_loss(*ctx.teacher, fb);
        for (double& g : gl.grad_fb) g *= ctx.weights.global;
        const std::vector<TokenGrid> back = model.global.backward(tokens, gl.grad_fb);
        for (std::size_t i = 0; i < n; ++i) add_into(grad_tokens[i], back[i]);
        gl.grad_fb.clear();
        parts.global = std::move(gl);
    }

    for (std::size_t i = 0; i < n; ++i) model.encoder.backward(enc_cache[i], grad_tokens[i]);
    return composite_loss(std::move(parts), ctx.toggles, ctx.weights);
}

// ---------------------------------------------------------------------------
// Training

namespace {

constexpr std::uint64_t kModelTag = 0x4d4f44454cULL;
constexpr std::uint64_t kStepTag = 0x5354455053ULL;
constexpr std::uint64_t kWarmTag = 0x5741524dULL;

StepSample draw_sample(Rng& rng, const Dataset& ds, const std::vector<int>& pool, int batch, int window)
{
    StepSample s;
    s.scene = pool[uniform_index(rng, pool.size())];
    const int nf = static_cast<int>(ds.scenes[static_cast<std::size_t>(s.scene)].frames.size());
    require(nf >= 2, "train: scenes need at least two frames");
    const int t = static_cast<int>(uniform_index(rng, static_cast<std::size_t>(nf)));
    std::vector<int> neighbours;
    for (int d = -window; d <= window; ++d)
        if (d != 0 && t + d >= 0 && t + d < nf) neighbours.push_back(t + d);
    const int other = neighbours[uniform_index(rng, neighbours.size())];
    s.frames = {t, other};
    std::vector<int> rest;
    for (int f = 0; f < nf; ++f)
        if (f != t && f != other) rest.push_back(f);
    while (static_cast<int>(s.frames.size()) < batch && !rest.empty()) {
        const std::size_t pick = uniform_index(rng, rest.size());
        s.frames.push_back(rest[pick]);
        rest.erase(rest.begin() + static_cast<std::ptrdiff_t>(pick));
    }
    return s;
}

std::string fmt_opt(const std::optional<double>& v) { return v ? fmt::format("{:.17g}", *v) : std::string(); }

std::vector<std::vector<double>> teacher_descriptors(const Dataset& ds, const Teacher& teacher)
{
    std::vector<std::vector<double>> out;
    for (const SceneRecord& rec : ds.scenes) {
        std::vector<const Frame*> frames;
        for (const Frame& f : rec.frames) frames.push_back(&f);
        out.push_back(teacher.descriptor(frames));
    }
    return out;
}

} // namespace

Validator warmstart_validator(const RunConfig& config, std::uint64_t seed, const NetShape& shape)
{
    SceneConfig sc;
    const Dataset pre = generate_dataset(mix_seed(config.dataset_seed, kWarmTag), config.train_scenes, 0, sc);
    Model throwaway(shape, mix_seed(seed, kWarmTag), true);
    Adam adam({config.lr});
    Rng rng(mix_seed(mix_seed(seed, kWarmTag), kStepTag));
    for (int step = 0; step < config.warmstart_steps; ++step) {
        const StepSample s = draw_sample(rng, pre, pre.train, config.batch, config.neighbor_window);
        const SceneRecord& rec = pre.scenes[static_cast<std::size_t>(s.scene)];
        throwaway.zero_grad();
        const double inv_n = 1.0 / static_cast<double>(s.frames.size());
        for (int f : s.frames) {
            const Frame& frame = rec.frames[static_cast<std::size_t>(f)];
            EncoderCache ec;
            ValidatorCache vc;
            const TokenGrid tokens = throwaway.encoder.forward(frame.rgb, &ec);
            const DepthPrediction pred = throwaway.validator->forward(tokens, &vc);
            GeometryLoss g = geometry_loss({pred.depth, pred.sigma, frame.depth, config.alpha});
            scale_grid(g.grad_depth, inv_n);
            scale_grid(g.grad_sigma, inv_n);
            throwaway.encoder.backward(ec, throwaway.validator->backward(vc, g.grad_depth, g.grad_sigma));
        }
        std::vector<ParameterSet*> sets{&throwaway.encoder.params(), &throwaway.validator->params()};
        adam.step(sets);
    }
    return *throwaway.validator;
}

RunResult train(const RunConfig& config, const Dataset& ds, std::uint64_t seed)
{
    config.validate();
    require(!ds.train.empty() && !ds.test.empty(), "train: dataset needs train and test scenes");
    const auto start = std::chrono::steady_clock::now();
    const NetShape shape = config.shape();
    RunResult run;
    run.seed = seed;
    run.meta = {seed, config.teacher_seed, config.injection, config.validator_init == ValidatorInit::warmstart, 0};

    Model model(shape, mix_seed(seed, kModelTag), true);
    if (config.validator_init == ValidatorInit::warmstart) model.validator = warmstart_validator(config, seed, shape);

    const Teacher teacher(config.teacher_seed, shape.global_dim);
    const std::vector<std::vector<double>> descriptors =
        config.toggles.global ? teacher_descriptors(ds, teacher) : std::vector<std::vector<double>>(ds.scenes.size());
    std::vector<CoordinateCodes> codes(ds.scenes.size());
    if (config.injection)
        for (std::size_t i = 0; i < ds.scenes.size(); ++i) codes[i] = coordinate_codes(ds.scenes[i], shape);

    Adam adam({config.lr});
    Rng rng(mix_seed(seed, kStepTag));
    std::string log = "step,scene,t,t_prime,ce,geometry,cross_view,global,total,empty_overlap\n";
    const auto abort_run = [&](const std::string& why, int step) {
        if (!config.out.empty()) {
            CheckpointMeta meta = run.meta;
            meta.step = step;
            save_checkpoint(fs::path(config.out) / "last_good.ckpt", model, meta);
        }
        throw NumericalError(fmt::format("training aborted at step {}: {}", step, why));
    };

    for (int step = 0; step < config.steps; ++step) {
        const StepSample s = draw_sample(rng, ds, ds.train, config.batch, config.neighbor_window);
        const std::size_t si = static_cast<std::size_t>(s.scene);
        StepContext ctx{config.toggles, config.weights, config.alpha,
                        config.toggles.global ? &descriptors[si] : nullptr,
                        config.injection ? &codes[si] : nullptr};
        model.zero_grad();
        const LossReport r = accumulate_step(model, ds.scenes[si], s, ctx);
        log += fmt::format("{},{},{},{},{:.17g},{},{},{},{:.17g},{}\n", step, s.scene, s.frames[0], s.frames[1], r.ce,
                           fmt_opt(r.geometry), fmt_opt(r.cross_view), fmt_opt(r.global), r.total,
                           r.empty_overlap ? 1 : 0);
        if (!std::isfinite(r.total)) abort_run("non-finite loss", step);
        auto sets = model.parameter_sets();
        try {
            adam.step(sets);
        } catch (const NumericalError& e) {
            abort_run(e.what(), step);
        }
        run.totals.push_back(r.total);
    }
    run.meta.step = config.steps;
    run.log_csv = std::move(log);
    run.eval = evaluate(model, config.injection, ds);
    run.model.emplace(std::move(model));
    run.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return run;
}

void write_run(const RunResult& run, const fs::path& dir)
{
    fs::create_directories(dir);
    std::ofstream(dir / "log.csv", std::ios::binary) << run.log_csv;
    if (run.model) save_checkpoint(dir / "model.ckpt", *run.model, run.meta);
    json metrics = eval_json(run.eval);
    metrics["seed"] = run.seed;
    Fnv1a h;
    h.add_string(run.log_csv);
    metrics["log_hash"] = fmt::format("{:016x}", h.digest());
    std::ofstream(dir / "metrics.json", std::ios::binary) << metrics.dump(2) << '\n';
    std::ofstream(dir / "recall.csv", std::ios::binary) << recall_curve_csv(run.eval.correspondence);
    std::ofstream(dir / "timing.json") << json{{"seconds", run.seconds}}.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Evaluation

namespace {

struct FrameFeatures {
    std::vector<TokenGrid> tokens; // per frame
};

std::vector<FrameFeatures> scene_features(const Model& model, bool injection, const Dataset& ds,
                                          const std::vector<int>& scenes, bool coordinates)
{
    std::vector<FrameFeatures> out;
    for (int si : scenes) {
        const SceneRecord& rec = ds.scenes[static_cast<std::size_t>(si)];
        FrameFeatures ff;
        CoordinateCodes codes;
        if (injection) {
            if (coordinates) {
                codes = coordinate_codes(rec, model.shape);
            } else {
                for (std::size_t f = 0; f < rec.frames.size(); ++f)
                    codes.push_back(inject_withheld(TokenGrid(model.shape.grid_w, model.shape.grid_h, model.shape.channels)));
            }
        }
        for (std::size_t f = 0; f < rec.frames.size(); ++f)
            ff.tokens.push_back(encode(model, rec.frames[f], injection ? &codes[f] : nullptr));
        out.push_back(std::move(ff));
    }
    return out;
}

struct ProbeData {
    Eigen::MatrixXd depth_x, depth_y, normal_x, normal_y;
};

ProbeData probe_data(const Dataset& ds, const std::vector<int>& scenes, const std::vector<FrameFeatures>& feats,
                     int patch)
{
    std::vector<std::pair<const TokenGrid*, int>> depth_rows, normal_rows;
    std::vector<double> depth_targets;
    std::vector<Vec3> normal_targets;
    for (std::size_t s = 0; s < scenes.size(); ++s) {
        const SceneRecord& rec = ds.scenes[static_cast<std::size_t>(scenes[s])];
        for (std::size_t f = 0; f < rec.frames.size(); ++f) {
            const std::vector<double> d = token_depth(rec.frames[f], patch);
            const std::vector<Vec3> nrm = token_normals(rec.frames[f], patch);
            const TokenGrid* tg = &feats[s].tokens[f];
            for (int t = 0; t < tg->count(); ++t) {
                if (std::isfinite(d[static_cast<std::size_t>(t)])) {
                    depth_rows.emplace_back(tg, t);
                    depth_targets.push_back(d[static_cast<std::size_t>(t)]);
                }
                if (nrm[static_cast<std::size_t>(t)].squaredNorm() > 0.0) {
                    normal_rows.emplace_back(tg, t);
                    normal_targets.push_back(nrm[static_cast<std::size_t>(t)]);
                }
            }
        }
    }
    const int c = feats.empty() || feats[0].tokens.empty() ? 0 : feats[0].tokens[0].channels;
    ProbeData p;
    p.depth_x.resize(static_cast<Eigen::Index>(depth_rows.size()), c);
    p.depth_y.resize(static_cast<Eigen::Index>(depth_rows.size()), 1);
    for (std::size_t i = 0; i < depth_rows.size(); ++i) {
        const auto tok = depth_rows[i].first->token(depth_rows[i].second);
        for (int k = 0; k < c; ++k) p.depth_x(static_cast<Eigen::Index>(i), k) = tok[static_cast<std::size_t>(k)];
        p.depth_y(static_cast<Eigen::Index>(i), 0) = depth_targets[i];
    }
    p.normal_x.resize(static_cast<Eigen::Index>(normal_rows.size()), c);
    p.normal_y.resize(static_cast<Eigen::Index>(normal_rows.size()), 3);
    for (std::size_t i = 0; i < normal_rows.size(); ++i) {
        const auto tok = normal_rows[i].first->token(normal_rows[i].second);
        for (int k = 0; k < c; ++k) p.normal_x(static_cast<Eigen::Index>(i), k) = tok[static_cast<std::size_t>(k)];
        p.normal_y.row(static_cast<Eigen::Index>(i)) = normal_targets[i].transpose();
    }
    return p;
}

Eigen::MatrixXd token_matrix(const TokenGrid& g)
{
    Eigen::MatrixXd m(g.count(), g.channels);
    for (int t = 0; t < g.count(); ++t)
        for (int c = 0; c < g.channels; ++c) m(t, c) = g.token(t)[static_cast<std::size_t>(c)];
    return m;
}

std::vector<GroundingCase> grounding_cases(const Model& model, const Dataset& ds, const std::vector<int>& scenes,
                                           const std::vector<FrameFeatures>& feats, const Eigen::MatrixXd& depth_weights,
                                           const EvalOptions& opt)
{
    const int patch = model.shape.patch;
    std::vector<GroundingCase> cases;
    for (std::size_t s = 0; s < scenes.size(); ++s) {
        const SceneRecord& rec = ds.scenes[static_cast<std::size_t>(scenes[s])];
        std::map<int, std::vector<Vec3>> points; // by predicted label
        for (std::size_t f = 0; f < rec.frames.size(); ++f) {
            const Frame& frame = rec.frames[f];
            const TokenGrid& tg = feats[s].tokens[f];
            const std::vector<double> logits = model.semantic.forward(tg);
            const Eigen::MatrixXd depth = apply_ridge(depth_weights, token_matrix(tg));
            for (int t = 0; t < tg.count(); ++t) {
                const double* row = logits.data() + static_cast<std::size_t>(t) * model.shape.classes;
                const int lbl = static_cast<int>(std::max_element(row, row + model.shape.classes) - row);
                if (lbl < label::first_object) continue;
                const int u = (t % tg.grid_w) * patch + patch / 2;
                const int v = (t / tg.grid_w) * patch + patch / 2;
                const double z = std::max(0.05, depth(t, 0));
                points[lbl].push_back(frame.camera.pose.apply(frame.camera.intrinsics.ray(u, v) * z));
            }
        }
        const std::vector<SceneObject> instances = rec.scene.instances();
        for (int lbl = label::first_object; lbl < label::count; ++lbl) {
            GroundingCase c;
            c.id = fmt::format("{}/label{}", rec.name, lbl);
            for (const SceneObject& o : instances)
                if (o.label == lbl) c.truth.push_back(o.box);
            const std::vector<Box3> boxes =
                cluster_boxes(points[lbl], opt.cluster_cell, opt.box_padding, opt.min_cluster_points);
            if (c.truth.size() == 1) {
                // Single-target queries always answer with exactly one box.
                c.predicted.push_back(boxes.empty() ? Box3{Vec3::Zero(), Vec3::Constant(1e-3)} : boxes.front());
            } else {
                c.predicted = boxes;
            }
            cases.push_back(std::move(c));
        }
    }
    return cases;
}

} // namespace

EvalReport evaluate(const Model& model, bool injection, const Dataset& ds, const EvalOptions& options)
{
    const int patch = model.shape.patch;
    // The probe is always fit on features computed the way the model was trained.
    const std::vector<FrameFeatures> train_feats = scene_features(model, injection, ds, ds.train, true);
    const std::vector<FrameFeatures> test_feats = scene_features(model, injection, ds, ds.test, options.coordinates);
    const ProbeData tr = probe_data(ds, ds.train, train_feats, patch);
    const ProbeData te = probe_data(ds, ds.test, test_feats, patch);

    EvalReport r;
    const ProbeResult depth = linear_probe(ProbeTask::depth, tr.depth_x, tr.depth_y, te.depth_x, te.depth_y);
    const ProbeResult normals = linear_probe(ProbeTask::normals, tr.normal_x, tr.normal_y, te.normal_x, te.normal_y);
    r.depth_rmse = depth.rmse;
    r.normal_rmse = normals.normals.rmse_deg;
    r.normal_macc = normals.normals.macc;

    r.cases = grounding_cases(model, ds, ds.test, test_feats, depth.weights, options);
    std::vector<GroundingCase> single;
    for (const GroundingCase& c : r.cases)
        if (c.kind() == CaseKind::single_target) single.push_back(c);
    r.acc_25 = grounding_accuracy(single, 0.25);
    r.acc_50 = grounding_accuracy(single, 0.5);
    r.f1_25 = multi_target_f1(r.cases, 0.25);
    r.f1_50 = multi_target_f1(r.cases, 0.5);

    CorrespondenceOptions co;
    co.patch = patch;
    r.correspondence = empty_correspondence(co);
    r.correspondence_ceiling = empty_correspondence(co);
    if (options.correspondence) {
        for (std::size_t s = 0; s < ds.test.size(); ++s) {
            const SceneRecord& rec = ds.scenes[static_cast<std::size_t>(ds.test[s])];
            for (std::size_t a = 0; a < rec.frames.size(); ++a)
                for (std::size_t b = 0; b < rec.frames.size(); ++b) {
                    if (a == b) continue;
                    correspondence_recall(test_feats[s].tokens[a], test_feats[s].tokens[b], rec.frames[a],
                                          rec.frames[b], r.correspondence, co);
                    correspondence_ceiling(rec.frames[a], rec.frames[b], r.correspondence_ceiling, co);
                }
        }
    }
    return r;
}

namespace {

json bins_json(const CorrespondenceResult& r, double threshold)
{
    json bins = json::array();
    for (const AngleBin& b : r.bins) {
        json jb{{"lo", b.lo}, {"hi", b.hi}, {"queries", b.errors.size()}};
        jb["recall"] = b.empty() ? json(nullptr) : json(b.recall(threshold));
        bins.push_back(jb);
    }
    return bins;
}

} // namespace

json eval_json(const EvalReport& r)
{
    json cases = json::array();
    for (const GroundingCase& c : r.cases) {
        json pred = json::array();
        for (const Box3& b : c.predicted)
            pred.push_back({b.min.x(), b.min.y(), b.min.z(), b.max.x(), b.max.y(), b.max.z()});
        cases.push_back({{"id", c.id}, {"boxes", pred}});
    }
    return json{{"depth_rmse", r.depth_rmse},
                {"normal_rmse", r.normal_rmse},
                {"normal_macc", r.normal_macc},
                {"acc_25", r.acc_25},
                {"acc_50", r.acc_50},
                {"f1_25", r.f1_25},
                {"f1_50", r.f1_50},
                {"correspondence_recall_2cm", bins_json(r.correspondence, 0.02)},
                {"correspondence_ceiling_2cm", bins_json(r.correspondence_ceiling, 0.02)},
                {"predictions", cases}};
}

std::string recall_curve_csv(const CorrespondenceResult& r)
{
    std::string out = "threshold,bin_lo,bin_hi,recall\n";
    for (int i = 0; i <= 50; ++i) {
        const double thr = 0.01 * i;
        for (const AngleBin& b : r.bins) {
            if (b.empty()) continue;
            out += fmt::format("{:.2f},{:g},{:g},{:.17g}\n", thr, b.lo, b.hi, b.recall(thr));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Ablation

std::vector<AblationArm> ablation_arms()
{
    return {
        {"none", {false, false, false}, ValidatorInit::scratch},
        {"global", {true, false, false}, ValidatorInit::scratch},
        {"geometry", {false, true, false}, ValidatorInit::scratch},
        {"geometry+cross_view", {false, true, true}, ValidatorInit::scratch},
        {"global+geometry", {true, true, false}, ValidatorInit::scratch},
        {"full", {true, true, true}, ValidatorInit::scratch},
        {"full-warmstart", {true, true, true}, ValidatorInit::warmstart},
    };
}

std::vector<std::string> ablation_metric_keys()
{
    return {"depth_rmse", "normal_macc", "acc_25", "acc_50", "f1_25", "f1_50"};
}

std::map<std::string, double> metric_row(const EvalReport& r)
{
    return {{"depth_rmse", r.depth_rmse}, {"normal_macc", r.normal_macc}, {"acc_25", r.acc_25},
            {"acc_50", r.acc_50},         {"f1_25", r.f1_25},             {"f1_50", r.f1_50}};
}

double ArmSummary::mean(const std::string& key) const
{
    const auto& v = metrics.at(key);
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double ArmSummary::stddev(const std::string& key) const
{
    const auto& v = metrics.at(key);
    if (v.size() < 2) return 0.0;
    const double m = mean(key);
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

std::vector<ArmSummary> ablate(const RunConfig& base, const Dataset& ds, const fs::path& out)
{
    base.validate();
    std::vector<ArmSummary> arms;
    for (const AblationArm& arm : ablation_arms()) {
        RunConfig cfg = base;
        cfg.toggles = arm.toggles;
        cfg.validator_init = arm.init;
        ArmSummary summary{arm.name, {}};
        for (std::uint64_t seed : cfg.seeds) {
            const RunResult run = train(cfg, ds, seed);
            for (const auto& [k, v] : metric_row(run.eval)) summary.metrics[k].push_back(v);
            if (!out.empty()) write_run(run, out / arm.name / fmt::format("seed{}", seed));
        }
        arms.push_back(std::move(summary));
    }
    if (!out.empty()) std::ofstream(out / "ablation.txt", std::ios::binary) << ablation_table(arms);
    return arms;
}

std::string ablation_table(const std::vector<ArmSummary>& arms)
{
    std::string out = fmt::format("{:<22}", "arm");
    for (const std::string& k : ablation_metric_keys()) out += fmt::format(" {:>19}", k);
    out += '\n';
    for (const ArmSummary& a : arms) {
        out += fmt::format("{:<22}", a.name);
        for (const std::string& k : ablation_metric_keys())
            out += fmt::format(" {:>19}", fmt::format("{:.4f}+-{:.4f}", a.mean(k), a.stddev(k)));
        out += '\n';
    }
    return out;
}

// ---------------------------------------------------------------------------
// Coordinate dependency

DependencyReport dependency_probe(const Model& injection_model, const Model& ours, const Dataset& ds)
{
    EvalOptions with, without;
    with.correspondence = without.correspondence = false;
    without.coordinates = false;
    DependencyReport r;
    r.injection_with = evaluate(injection_model, true, ds, with).acc_25;
    r.injection_without = evaluate(injection_model, true, ds, without).acc_25;
    r.ours_with = evaluate(ours, false, ds, with).acc_25;
    r.ours_without = evaluate(ours, false, ds, without).acc_25;
    return r;
}

std::string dependency_table(const DependencyReport& r)
{
    std::string out = fmt::format("{:<12} {:>12} {:>12} {:>12}\n", "model", "with 3D", "without 3D", "delta");
    out += fmt::format("{:<12} {:>12.4f} {:>12.4f} {:>12.4f}\n", "injection", r.injection_with, r.injection_without,
                       r.injection_delta());
    out += fmt::format("{:<12} {:>12.4f} {:>12.4f} {:>12.4f}\n", "ours", r.ours_with, r.ours_without, r.ours_delta());
    return out;
}

// ---------------------------------------------------------------------------
// Inference benchmark

BenchReport bench_inference(const Model& model, const std::vector<const Frame*>& frames, int repeats)
{
    require(model.validator.has_value(), "bench_inference: the model needs a validator to attach");
    require(repeats >= 1 && !frames.empty(), "bench_inference: need frames and repeats");
    Model detached = model;
    detached.validator.reset();

    const auto run = [&](const Model& m, bool attach, std::uint64_t& hash) {
        Fnv1a h;
        double sink = 0.0;
        for (const Frame* f : frames) {
            const TokenGrid tokens = encode(m, *f);
            const std::vector<double> logits = m.semantic.forward(tokens);
            const std::vector<double> fb = m.global.forward(std::span<const TokenGrid>(&tokens, 1));
            h.add_span(std::span<const double>(tokens.values));
            h.add_span(std::span<const double>(logits));
            h.add_span(std::span<const double>(fb));
            if (attach) sink += m.validator->forward(tokens).depth.values[0];
        }
        hash = h.digest();
        return sink;
    };

    BenchReport r;
    std::vector<double> attached_ms, detached_ms;
    for (int i = 0; i < repeats; ++i) {
        for (const bool attach : {false, true}) {
            const std::uint64_t before = validator_forward_count();
            const auto t0 = std::chrono::steady_clock::now();
            std::uint64_t hash = 0;
            volatile double keep = run(attach ? model : detached, attach, hash);
            (void)keep;
            const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
            const std::uint64_t ops = validator_forward_count() - before;
            if (attach) {
                attached_ms.push_back(ms);
                r.attached_hash = hash;
                r.attached_validator_ops = ops;
            } else {
                detached_ms.push_back(ms);
                r.detached_hash = hash;
                r.detached_validator_ops = ops;
            }
        }
    }
    const auto median = [](std::vector<double> v) {
        std::sort(v.begin(), v.end());
        return v.size() % 2 ? v[v.size() / 2] : 0.5 * (v[v.size() / 2 - 1] + v[v.size() / 2]);
    };
    r.attached_median_ms = median(attached_ms);
    r.detached_median_ms = median(detached_ms);
    return r;
}

} // namespace geoemerge
