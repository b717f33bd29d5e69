#pragma once

// Seeded experiments: training with any subset of the auxiliary geometric
// terms, the ablation grid, the coordinate-dependency probe and the
// attached/detached inference benchmark.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "geoemerge/checkpoint.hpp"
#include "geoemerge/dataset.hpp"
#include "geoemerge/losses.hpp"
#include "geoemerge/metrics.hpp"
#include "geoemerge/net.hpp"

namespace geoemerge {

enum class ValidatorInit { scratch, warmstart };

struct RunConfig {
    std::string dataset;             // directory; empty means generate in memory
    std::uint64_t dataset_seed = 0;  // used when generating
    int train_scenes = 20;
    int test_scenes = 5;
    LossToggles toggles{true, true, true};
    LossWeights weights;
    ValidatorInit validator_init = ValidatorInit::scratch;
    bool injection = false; // add coordinate codes of gt points to tokens
    double alpha = kDefaultAlpha;
    double lr = 1e-3;
    std::vector<std::uint64_t> seeds{0, 1, 2};
    int steps = 2000;
    int batch = 4;           // frames per step, including the neighbour pair
    int neighbor_window = 2; // |t - t'| <= k
    int warmstart_steps = 2000;
    std::uint64_t teacher_seed = 0x7e4c4e52ULL;
    bool positional = true;
    int validator_hidden = 32;
    std::string out;

    void validate() const;
    NetShape shape() const;
};

void to_json(nlohmann::json& j, const RunConfig& c);
void from_json(const nlohmann::json& j, RunConfig& c);
RunConfig load_config(const std::filesystem::path& path);

// Per-frame additive coordinate code (zero-token injection of the pooled
// ground-truth points).
using CoordinateCodes = std::vector<TokenGrid>;
CoordinateCodes coordinate_codes(const SceneRecord& scene, const NetShape& shape);

// Tokens the heads see: encoder output, plus the coordinate code when given.
TokenGrid encode(const Model& model, const Frame& frame, const TokenGrid* code = nullptr,
                 EncoderCache* cache = nullptr);

struct StepSample {
    int scene = 0;
    std::vector<int> frames; // frames[0] = t, frames[1] = t'
};

struct StepContext {
    LossToggles toggles;
    LossWeights weights;
    double alpha = kDefaultAlpha;
    const std::vector<double>* teacher = nullptr; // scene descriptor
    const CoordinateCodes* codes = nullptr;       // injection arm only
};

// Evaluates the composite objective on one sample and accumulates
// parameter gradients into the model (callers zero them first).
LossReport accumulate_step(Model& model, const SceneRecord& scene, const StepSample& sample, const StepContext& ctx);

struct EvalReport {
    double depth_rmse = 0.0;
    double normal_rmse = 0.0;
    double normal_macc = 0.0;
    double acc_25 = 0.0;
    double acc_50 = 0.0;
    double f1_25 = 0.0;
    double f1_50 = 0.0;
    CorrespondenceResult correspondence;
    CorrespondenceResult correspondence_ceiling;
    std::vector<GroundingCase> cases;
};

struct EvalOptions {
    bool coordinates = true;        // supply coordinate codes to an injection model at test time
    bool correspondence = true;
    double cluster_cell = 0.3;
    double box_padding = 0.1;
    int min_cluster_points = 2;
};

EvalReport evaluate(const Model& model, bool injection, const Dataset& ds, const EvalOptions& options = {});
nlohmann::json eval_json(const EvalReport& r);
// threshold,bin,recall rows for thresholds 0..0.5 m.
std::string recall_curve_csv(const CorrespondenceResult& r);

struct RunResult {
    std::uint64_t seed = 0;
    std::string log_csv;
    std::vector<double> totals;
    EvalReport eval;
    std::optional<Model> model;
    CheckpointMeta meta;
    double seconds = 0.0;
};

// Pretrains a validator jointly with a throwaway encoder on the geometry
// term over scenes disjoint from the dataset.
Validator warmstart_validator(const RunConfig& config, std::uint64_t seed, const NetShape& shape);

RunResult train(const RunConfig& config, const Dataset& ds, std::uint64_t seed);
// Writes log.csv, model.ckpt, metrics.json, recall.csv and timing.json
// below dir.
void write_run(const RunResult& run, const std::filesystem::path& dir);

Dataset load_or_generate(const RunConfig& config);

struct AblationArm {
    std::string name;
    LossToggles toggles;
    ValidatorInit init = ValidatorInit::scratch;
};

std::vector<AblationArm> ablation_arms();

struct ArmSummary {
    std::string name;
    std::map<std::string, std::vector<double>> metrics; // per seed
    double mean(const std::string& key) const;
    double stddev(const std::string& key) const;
};

std::vector<std::string> ablation_metric_keys();
std::map<std::string, double> metric_row(const EvalReport& r);
// Trains every arm for every seed in config.seeds.
std::vector<ArmSummary> ablate(const RunConfig& base, const Dataset& ds,
                               const std::filesystem::path& out = {});
std::string ablation_table(const std::vector<ArmSummary>& arms);

struct DependencyReport {
    double injection_with = 0.0;
    double injection_without = 0.0;
    double ours_with = 0.0;
    double ours_without = 0.0;
    double injection_delta() const { return injection_with - injection_without; }
    double ours_delta() const { return ours_with - ours_without; }
};

DependencyReport dependency_probe(const Model& injection_model, const Model& ours, const Dataset& ds);
std::string dependency_table(const DependencyReport& r);

struct BenchReport {
    double detached_median_ms = 0.0;
    double attached_median_ms = 0.0;
    std::uint64_t detached_validator_ops = 0;
    std::uint64_t attached_validator_ops = 0;
    std::uint64_t detached_hash = 0;
    std::uint64_t attached_hash = 0;
    bool outputs_identical() const { return detached_hash == attached_hash; }
};

BenchReport bench_inference(const Model& model, const std::vector<const Frame*>& frames, int repeats = 5);

} // namespace geoemerge
