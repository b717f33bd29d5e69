#pragma once

// Tiny RGB-only patch encoder, the detachable depth validator, the
// semantic and global heads, the frozen teacher stand-in and Adam. All
// forward and backward passes are written by hand in double precision.

#include <atomic>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "geoemerge/geometry.hpp"
#include "geoemerge/scenegen.hpp"
#include "geoemerge/tokens.hpp"

namespace geoemerge {

struct NetShape {
    int patch = 8;
    int grid_w = 8;
    int grid_h = 8;
    int channels = 64;
    int validator_hidden = 32;
    int global_dim = 32;
    int classes = label::count;
    bool positional = true; // learned per-token offset added before the first tanh

    int width() const { return grid_w * patch; }
    int height() const { return grid_h * patch; }
    int tokens() const { return grid_w * grid_h; }
    int patch_dim() const { return patch * patch * 3; }
    bool operator==(const NetShape&) const = default;
};

// Named parameter blocks stored contiguously, with a gradient buffer of
// the same layout.
class ParameterSet {
public:
    struct Block {
        std::string name;
        std::size_t offset = 0;
        int rows = 0;
        int cols = 0;
        std::size_t size() const { return static_cast<std::size_t>(rows) * cols; }
    };

private:
    template <typename V>
    auto slice(V& v, int block) const -> std::span<std::remove_reference_t<decltype(*v.data())>>
    {
        const Block& b = blocks_.at(static_cast<std::size_t>(block));
        return {v.data() + b.offset, b.size()};
    }

public:
    explicit ParameterSet(std::string name = {}) : name_(std::move(name)) {}

    int add(std::string block_name, int rows, int cols);

    const std::string& name() const { return name_; }
    const std::vector<Block>& blocks() const { return blocks_; }
    std::size_t size() const { return values_.size(); }

    std::span<double> values() { return values_; }
    std::span<const double> values() const { return values_; }
    std::span<double> grads() { return grads_; }
    std::span<const double> grads() const { return grads_; }
    std::span<double> value(int block) { return slice(values_, block); }
    std::span<const double> value(int block) const { return slice(values_, block); }
    std::span<double> grad(int block) { return slice(grads_, block); }

    void zero_grad();
    bool operator==(const ParameterSet& o) const { return name_ == o.name_ && values_ == o.values_; }

private:
    std::string name_;
    std::vector<Block> blocks_;
    std::vector<double> values_;
    std::vector<double> grads_;
};

struct EncoderCache {
    std::vector<double> patches; // tokens x patch_dim
    std::vector<double> embedded; // tanh(embed + pos), tokens x C
    std::vector<double> mixed;   // 3x3 depthwise neighbourhood mix
    std::vector<double> hidden;  // tanh(W1 mixed + b1)
};

class Encoder {
public:
    Encoder(const NetShape& shape, std::uint64_t seed);

    // rgb is the interleaved (3 W) x H raster of a frame.
    TokenGrid forward(const Grid<double>& rgb, EncoderCache* cache = nullptr) const;
    void backward(const EncoderCache& cache, const TokenGrid& grad_tokens);

    ParameterSet& params() { return params_; }
    const ParameterSet& params() const { return params_; }
    const NetShape& shape() const { return shape_; }

private:
    NetShape shape_;
    ParameterSet params_{"encoder"};
    int embed_w_, embed_b_, pos_ = -1, mix_w_, w1_, b1_, w2_, b2_;
};

struct DepthPrediction {
    DepthMap depth;   // softplus(raw), always valid
    Grid<double> sigma; // softplus(raw) + 1e-4
};

struct ValidatorCache {
    std::vector<double> tokens;
    std::vector<double> hidden1;
    std::vector<double> hidden2;
    Grid<double> raw_depth; // upsampled logits
    Grid<double> raw_sigma;
};

inline constexpr double kSigmaFloor = 1e-4;

class Validator {
public:
    Validator(const NetShape& shape, std::uint64_t seed);

    DepthPrediction forward(const TokenGrid& tokens, ValidatorCache* cache = nullptr) const;
    // Accumulates parameter gradients and returns d loss / d tokens.
    TokenGrid backward(const ValidatorCache& cache, const Grid<double>& grad_depth, const Grid<double>& grad_sigma);

    ParameterSet& params() { return params_; }
    const ParameterSet& params() const { return params_; }

private:
    NetShape shape_;
    ParameterSet params_{"validator"};
    int w1_, b1_, w2_, b2_, w3_, b3_;
};

// Number of Validator::forward calls made by this process.
std::uint64_t validator_forward_count();

class SemanticHead {
public:
    SemanticHead(const NetShape& shape, std::uint64_t seed);

    std::vector<double> forward(const TokenGrid& tokens) const; // tokens x classes
    TokenGrid backward(const TokenGrid& tokens, std::span<const double> grad_logits);

    ParameterSet& params() { return params_; }
    const ParameterSet& params() const { return params_; }

private:
    NetShape shape_;
    ParameterSet params_{"semantic"};
    int w_, b_;
};

// fb = W mean(all tokens of all frames) + b
class GlobalHead {
public:
    GlobalHead(const NetShape& shape, std::uint64_t seed);

    std::vector<double> forward(std::span<const TokenGrid> frames) const;
    // Returns one token gradient per frame.
    std::vector<TokenGrid> backward(std::span<const TokenGrid> frames, std::span<const double> grad_fb);

    ParameterSet& params() { return params_; }
    const ParameterSet& params() const { return params_; }

private:
    NetShape shape_;
    ParameterSet params_{"global"};
    int w_, b_;
};

struct Model {
    NetShape shape;
    std::uint64_t seed = 0;
    Encoder encoder;
    std::optional<Validator> validator;
    SemanticHead semantic;
    GlobalHead global;

    // Validator budget is checked here.
    Model(const NetShape& shape, std::uint64_t seed, bool with_validator = true);

    std::vector<ParameterSet*> parameter_sets();
    std::vector<const ParameterSet*> parameter_sets() const;
    std::size_t encoder_parameter_count() const { return encoder.params().size(); }
    std::size_t validator_parameter_count() const { return validator ? validator->params().size() : 0; }
    void zero_grad();
};

// Maximum validator size relative to the encoder.
inline constexpr double kValidatorBudget = 0.2;

class Adam {
public:
    struct Options {
        double lr = 1e-3;
        double beta1 = 0.9;
        double beta2 = 0.999;
        double epsilon = 1e-8;
    };

    Adam() = default;
    explicit Adam(Options options) : options_(options) {}

    // Throws NumericalError naming the offending block if a gradient is
    // not finite; parameters are untouched in that case.
    void step(std::span<ParameterSet* const> sets);
    std::int64_t steps() const { return steps_; }

private:
    struct Moments {
        std::vector<double> m;
        std::vector<double> v;
    };
    Options options_;
    std::int64_t steps_ = 0;
    std::vector<Moments> moments_;
};

// Frozen stand-in for a geometric foundation model: a fixed Gaussian
// projection of the normalized occupancy histogram of ground-truth points
// over a 4x4x4 grid of 2 m cells covering [0, 8]^3.
class Teacher {
public:
    static constexpr int kBins = 64;
    static constexpr double kCell = 2.0;

    Teacher(std::uint64_t seed, int dim);

    std::vector<double> descriptor(std::span<const Frame* const> frames) const;
    std::vector<double> project(std::span<const double> histogram) const;
    static std::vector<double> occupancy(std::span<const Frame* const> frames);

    int dim() const { return dim_; }

private:
    int dim_;
    std::vector<double> projection_; // dim x kBins
};

double softplus(double x);
double sigmoid(double x);

} // namespace geoemerge
