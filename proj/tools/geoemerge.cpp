// geoemerge command-line interface.

#include <algorithm>
#include <map>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "geoemerge/checkpoint.hpp"
#include "geoemerge/dataset.hpp"
#include "geoemerge/gradsuite.hpp"
#include "geoemerge/hash.hpp"
#include "geoemerge/injection.hpp"
#include "geoemerge/kernels.hpp"
#include "geoemerge/metrics.hpp"
#include "geoemerge/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace geoemerge;

namespace {

struct Shared {
    std::string config;
    std::uint64_t seed = 0;
    bool seed_given = false;
    std::string out;
};

void add_shared(CLI::App* cmd, Shared& s)
{
    cmd->add_option("--config", s.config, "Run configuration (JSON)");
    cmd->add_option_function<std::uint64_t>(
        "--seed", [&s](std::uint64_t v) { s.seed = v; s.seed_given = true; }, "Seed");
    cmd->add_option("--out", s.out, "Output directory");
}

RunConfig config_from(const Shared& s)
{
    RunConfig c = s.config.empty() ? RunConfig{} : load_config(s.config);
    if (s.seed_given) c.seeds = {s.seed};
    if (!s.out.empty()) c.out = s.out;
    c.validate();
    return c;
}

fs::path out_dir(const Shared& s, const char* fallback)
{
    const fs::path dir = s.out.empty() ? fs::path(fallback) : fs::path(s.out);
    fs::create_directories(dir);
    return dir;
}

void write_text(const fs::path& path, const std::string& text)
{
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("cannot write " + path.string());
    os << text;
}

Box3 box_from_json(const json& j)
{
    return {Vec3(j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()),
            Vec3(j.at(3).get<double>(), j.at(4).get<double>(), j.at(5).get<double>())};
}

int cmd_gen(const Shared& s, int scenes, int test)
{
    require(scenes > test && test >= 1, "gen: need more scenes than test scenes");
    const Dataset ds = generate_dataset(s.seed, scenes - test, test);
    const fs::path dir = out_dir(s, "dataset");
    write_dataset(ds, dir);
    fmt::print("wrote {} scenes ({} train, {} test) to {}\n", ds.scenes.size(), ds.train.size(), ds.test.size(),
               dir.string());
    return 0;
}

int cmd_train(const Shared& s)
{
    const RunConfig c = config_from(s);
    const Dataset ds = load_or_generate(c);
    const fs::path dir = out_dir(s, "run");
    for (std::uint64_t seed : c.seeds) {
        const RunResult run = train(c, ds, seed);
        const fs::path run_dir = c.seeds.size() == 1 ? dir : dir / fmt::format("seed{}", seed);
        write_run(run, run_dir);
        fmt::print("seed {}: loss {:.6f} -> {:.6f}, depth probe rmse {:.4f}, normal mAcc {:.4f} ({})\n", seed,
                   run.totals.front(), run.totals.back(), run.eval.depth_rmse, run.eval.normal_macc,
                   run_dir.string());
    }
    return 0;
}

int cmd_ablate(const Shared& s)
{
    const RunConfig c = config_from(s);
    const Dataset ds = load_or_generate(c);
    const fs::path dir = out_dir(s, "ablation");
    const auto arms = ablate(c, ds, dir);
    std::cout << ablation_table(arms);
    return 0;
}

int cmd_probe(const Shared& s, const std::string& checkpoint, const std::string& injection_checkpoint)
{
    const RunConfig c = config_from(s);
    const Dataset ds = load_or_generate(c);
    const Checkpoint ck = load_checkpoint(checkpoint);
    const fs::path dir = out_dir(s, "probe");
    const EvalReport r = evaluate(ck.model, ck.meta.injection, ds);
    write_text(dir / "metrics.json", eval_json(r).dump(2) + "\n");
    write_text(dir / "recall.csv", recall_curve_csv(r.correspondence));
    const json preds{{"cases", eval_json(r).at("predictions")}};
    write_text(dir / "predictions.json", preds.dump(2) + "\n");
    fmt::print("depth rmse {:.4f}  normal mAcc {:.4f}  Acc@0.25 {:.4f}  Acc@0.5 {:.4f}  F1@0.25 {:.4f}  F1@0.5 {:.4f}\n",
               r.depth_rmse, r.normal_macc, r.acc_25, r.acc_50, r.f1_25, r.f1_50);
    if (!injection_checkpoint.empty()) {
        const Checkpoint inj = load_checkpoint(injection_checkpoint);
        require(inj.meta.injection, "probe: --injection-checkpoint was not trained with coordinate injection");
        const DependencyReport dep = dependency_probe(inj.model, ck.model, ds);
        write_text(dir / "dependency.txt", dependency_table(dep));
        std::cout << dependency_table(dep);
        if (dep.ours_delta() != 0.0) {
            std::cerr << "contract violated: RGB-only model changed when coordinates were withheld\n";
            return 1;
        }
    }
    return 0;
}

int cmd_eval(const Shared& s, const std::string& predictions, const std::string& dataset)
{
    const Dataset ds = read_dataset(dataset);
    std::ifstream is(predictions);
    if (!is) throw FormatError("cannot read " + predictions);
    const json pj = json::parse(is);
    std::map<std::string, std::vector<Box3>> predicted;
    for (const json& c : pj.at("cases")) {
        auto& boxes = predicted[c.at("id").get<std::string>()];
        for (const json& b : c.at("boxes")) boxes.push_back(box_from_json(b));
    }
    std::vector<GroundingCase> cases, single;
    for (int si : ds.test) {
        const SceneRecord& rec = ds.scenes[static_cast<std::size_t>(si)];
        const auto instances = rec.scene.instances();
        for (int lbl = label::first_object; lbl < label::count; ++lbl) {
            GroundingCase c;
            c.id = fmt::format("{}/label{}", rec.name, lbl);
            for (const SceneObject& o : instances)
                if (o.label == lbl) c.truth.push_back(o.box);
            if (auto it = predicted.find(c.id); it != predicted.end()) c.predicted = it->second;
            if (c.kind() == CaseKind::single_target) {
                require(c.predicted.size() == 1, "eval: single-target case " + c.id + " needs exactly one box");
                single.push_back(c);
            }
            cases.push_back(std::move(c));
        }
    }
    const json report{{"cases", cases.size()},
                      {"single_target_cases", single.size()},
                      {"acc_25", grounding_accuracy(single, 0.25)},
                      {"acc_50", grounding_accuracy(single, 0.5)},
                      {"f1_25", multi_target_f1(cases, 0.25)},
                      {"f1_50", multi_target_f1(cases, 0.5)}};
    const fs::path dir = out_dir(s, "eval");
    write_text(dir / "report.json", report.dump(2) + "\n");
    std::string csv = "case,kind,predicted,truth,f1_25,f1_50\n";
    for (const GroundingCase& c : cases) {
        const char* kind = c.kind() == CaseKind::zero_target ? "zero" : c.kind() == CaseKind::single_target ? "single" : "multi";
        csv += fmt::format("{},{},{},{},{:.17g},{:.17g}\n", c.id, kind, c.predicted.size(), c.truth.size(),
                           match_case(c, 0.25).f1, match_case(c, 0.5).f1);
    }
    write_text(dir / "cases.csv", csv);
    std::cout << report.dump(2) << "\n";
    return 0;
}

int cmd_gradcheck(const Shared& s, GradSuiteOptions o)
{
    o.seed = s.seed;
    const auto rows = run_gradient_suite(o);
    const std::string table = gradient_suite_table(rows);
    std::cout << table;
    if (!s.out.empty()) write_text(out_dir(s, "gradcheck") / "gradcheck.txt", table);
    return std::all_of(rows.begin(), rows.end(), [](const GradSuiteRow& r) { return r.pass; }) ? 0 : 1;
}

int cmd_bench(const Shared& s, const std::string& checkpoint, int frames, int repeats)
{
    const RunConfig c = config_from(s);
    const Dataset ds = load_or_generate(c);
    const Checkpoint ck = load_checkpoint(checkpoint);
    std::vector<const Frame*> list;
    for (int i = 0; static_cast<int>(list.size()) < frames; ++i) {
        const SceneRecord& rec = ds.scenes[static_cast<std::size_t>(i) % ds.scenes.size()];
        list.push_back(&rec.frames[static_cast<std::size_t>(i / static_cast<int>(ds.scenes.size())) % rec.frames.size()]);
    }
    const BenchReport r = bench_inference(ck.model, list, repeats);
    const json j{{"frames", frames},
                 {"repeats", repeats},
                 {"kernels", kernels::isa_name(kernels::active_isa())},
                 {"detached_validator_ops", r.detached_validator_ops},
                 {"attached_validator_ops", r.attached_validator_ops},
                 {"outputs_identical", r.outputs_identical()}};
    // Wall-clock numbers live apart so bench.json is reproducible.
    const json timing{{"detached_median_ms", r.detached_median_ms}, {"attached_median_ms", r.attached_median_ms}};
    std::cout << j.dump(2) << "\n" << timing.dump(2) << "\n";
    if (!s.out.empty()) {
        const fs::path dir = out_dir(s, "bench");
        write_text(dir / "bench.json", j.dump(2) + "\n");
        write_text(dir / "timing.json", timing.dump(2) + "\n");
    }
    const bool ok = r.outputs_identical() && r.detached_validator_ops == 0 && r.detached_median_ms < r.attached_median_ms;
    if (!ok) std::cerr << "contract violated: detached inference is not identical, not validator-free, or not faster\n";
    return ok ? 0 : 1;
}

int cmd_analyze_loss(const Shared& s, const std::string& dataset, int patch, double voxel)
{
    const Dataset ds = dataset.empty() ? generate_dataset(s.seed, 1, 1) : read_dataset(dataset);
    const fs::path dir = out_dir(s, "analysis");
    std::string records;
    std::string csv = "scene,frame,gx,gy,valid_pixels,spread_m,distinct_voxels\n";
    for (const SceneRecord& rec : ds.scenes) {
        for (std::size_t f = 0; f < rec.frames.size(); ++f) {
            const InformationLossReport r = information_loss_report(rec.frames[f], patch, voxel);
            records += fmt::format(
                "scene={} frame={} patches={} valid={} spread_exceeding={} ({:.4f}) centroid_voxels={} "
                "centroid_merged={} ({:.4f}) point_voxels={} label_merging={} ({:.4f})\n",
                rec.name, f, r.patches, r.valid_patches, r.patches_spread_exceeding, r.fraction_spread_exceeding,
                r.centroid_voxels, r.centroid_voxels_merged, r.fraction_centroid_voxels_merged, r.point_voxels,
                r.label_merging_voxels, r.fraction_label_merging);
            for (int gy = 0; gy < r.pooled.grid_h; ++gy)
                for (int gx = 0; gx < r.pooled.grid_w; ++gx) {
                    const TokenPool& tp = r.pooled.at(gx, gy);
                    csv += fmt::format("{},{},{},{},{},{:.17g},{}\n", rec.name, f, gx, gy, tp.valid_pixels, tp.spread,
                                       tp.distinct_voxels);
                }
        }
    }
    write_text(dir / "report.txt", records);
    write_text(dir / "spreads.csv", csv);
    std::cout << records;
    return 0;
}

int cmd_export(const Shared& s, const std::string& checkpoint)
{
    const RunConfig c = config_from(s);
    const Dataset ds = load_or_generate(c);
    const Checkpoint ck = load_checkpoint(checkpoint);
    const fs::path dir = out_dir(s, "features");
    for (const SceneRecord& rec : ds.scenes) {
        fs::create_directories(dir / rec.name);
        const CoordinateCodes codes = ck.meta.injection ? coordinate_codes(rec, ck.model.shape) : CoordinateCodes{};
        for (std::size_t f = 0; f < rec.frames.size(); ++f) {
            const TokenGrid tg = encode(ck.model, rec.frames[f], ck.meta.injection ? &codes[f] : nullptr);
            std::string csv = "token,gx,gy";
            for (int ch = 0; ch < tg.channels; ++ch) csv += fmt::format(",c{}", ch);
            csv += '\n';
            for (int t = 0; t < tg.count(); ++t) {
                csv += fmt::format("{},{},{}", t, t % tg.grid_w, t / tg.grid_w);
                for (double v : tg.token(t)) csv += fmt::format(",{:.17g}", v);
                csv += '\n';
            }
            const std::string stem = fmt::format("frame_{:02d}", f);
            write_text(dir / rec.name / (stem + ".csv"), csv);
            std::ofstream raw(dir / rec.name / (stem + ".f64"), std::ios::binary);
            raw.write(reinterpret_cast<const char*>(tg.values.data()),
                      static_cast<std::streamsize>(tg.values.size() * sizeof(double)));
        }
    }
    fmt::print("exported {} scenes to {}\n", ds.scenes.size(), dir.string());
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"geoemerge: implicit geometric supervision experiments"};
    app.require_subcommand(1);

    Shared shared;
    int scenes = 25, test = 5;
    auto* gen = app.add_subcommand("gen", "Render a synthetic dataset");
    add_shared(gen, shared);
    gen->add_option("--scenes", scenes, "Total scenes")->capture_default_str();
    gen->add_option("--test", test, "Scenes held out for testing")->capture_default_str();

    auto* train_cmd = app.add_subcommand("train", "Train one model per configured seed");
    add_shared(train_cmd, shared);

    auto* ablate_cmd = app.add_subcommand("ablate", "Run every ablation arm over all seeds");
    add_shared(ablate_cmd, shared);

    std::string checkpoint, injection_checkpoint;
    auto* probe = app.add_subcommand("probe", "Linear probes, grounding and correspondence for a checkpoint");
    add_shared(probe, shared);
    probe->add_option("--checkpoint", checkpoint, "Model checkpoint")->required();
    probe->add_option("--injection-checkpoint", injection_checkpoint,
                      "Coordinate-injection checkpoint; enables the dependency report");

    std::string predictions, dataset;
    auto* eval = app.add_subcommand("eval", "Score grounding predictions against a dataset");
    add_shared(eval, shared);
    eval->add_option("--predictions", predictions, "Predictions JSON")->required();
    eval->add_option("--dataset", dataset, "Dataset directory")->required();

    GradSuiteOptions grad_options;
    auto* grad = app.add_subcommand("gradcheck", "Finite-difference check of every gradient");
    add_shared(grad, shared);
    grad->add_option("--points", grad_options.points, "Random points per objective")->capture_default_str();
    grad->add_option("--eps", grad_options.eps, "Finite-difference step for the loss terms")->capture_default_str();
    grad->add_option("--end-to-end-eps", grad_options.end_to_end_eps, "Finite-difference step for the composite")
        ->capture_default_str();

    int frames = 100, repeats = 5;
    auto* bench = app.add_subcommand("bench", "Attached vs detached inference timing");
    add_shared(bench, shared);
    bench->add_option("--checkpoint", checkpoint, "Model checkpoint")->required();
    bench->add_option("--frames", frames)->capture_default_str();
    bench->add_option("--repeats", repeats)->capture_default_str();

    int patch = kDefaultPatch;
    double voxel = kDefaultVoxelSize;
    auto* analyze = app.add_subcommand("analyze-loss", "Patch-pooling and voxelization information loss");
    add_shared(analyze, shared);
    analyze->add_option("--dataset", dataset, "Dataset directory (default: generate one scene pair)");
    analyze->add_option("--patch", patch)->capture_default_str();
    analyze->add_option("--voxel", voxel)->capture_default_str();

    auto* exp = app.add_subcommand("export-features", "Dump frozen token features");
    add_shared(exp, shared);
    exp->add_option("--checkpoint", checkpoint, "Model checkpoint")->required();

    CLI11_PARSE(app, argc, argv);
    try {
        if (gen->parsed()) return cmd_gen(shared, scenes, test);
        if (train_cmd->parsed()) return cmd_train(shared);
        if (ablate_cmd->parsed()) return cmd_ablate(shared);
        if (probe->parsed()) return cmd_probe(shared, checkpoint, injection_checkpoint);
        if (eval->parsed()) return cmd_eval(shared, predictions, dataset);
        if (grad->parsed()) return cmd_gradcheck(shared, grad_options);
        if (bench->parsed()) return cmd_bench(shared, checkpoint, frames, repeats);
        if (analyze->parsed()) return cmd_analyze_loss(shared, dataset, patch, voxel);
        if (exp->parsed()) return cmd_export(shared, checkpoint);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
