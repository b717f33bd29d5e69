#include "geoemerge/net.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "geoemerge/kernels.hpp"
#include "geoemerge/random.hpp"

namespace geoemerge {

namespace {

std::atomic<std::uint64_t> g_validator_forwards{0};

std::span<const double> row(const std::vector<double>& v, int r, int cols)
{
    return {v.data() + static_cast<std::size_t>(r) * cols, static_cast<std::size_t>(cols)};
}

std::span<double> row(std::vector<double>& v, int r, int cols)
{
    return {v.data() + static_cast<std::size_t>(r) * cols, static_cast<std::size_t>(cols)};
}

// out = W in + b for a rows x cols weight matrix.
void affine(std::span<const double> w, std::span<const double> b, std::span<const double> in, std::span<double> out)
{
    const std::size_t cols = in.size();
    for (std::size_t r = 0; r < out.size(); ++r) out[r] = b[r] + kernels::dot(w.subspan(r * cols, cols), in);
}

// Accumulates dW += dout in^T, db += dout and, when din is non-empty,
// din += W^T dout.
void affine_backward(std::span<const double> w, std::span<const double> in, std::span<const double> dout,
                     std::span<double> dw, std::span<double> db, std::span<double> din)
{
    const std::size_t cols = in.size();
    for (std::size_t r = 0; r < dout.size(); ++r) {
        const double g = dout[r];
        if (g == 0.0) continue;
        kernels::axpy(g, in, dw.subspan(r * cols, cols));
        db[r] += g;
        if (!din.empty()) kernels::axpy(g, w.subspan(r * cols, cols), din);
    }
}

void init_uniform(std::span<double> values, int fan_in, Rng& rng)
{
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (double& x : values) x = uniform(rng, -bound, bound);
}

double inverse_softplus(double y) { return y + std::log(-std::expm1(-y)); }

// Bilinear interpolation weights from token centres (pixel patch*i +
// patch/2) to every pixel along one axis, clamped at the border tokens.
struct AxisTaps {
    std::vector<int> lo, hi;
    std::vector<double> frac;
};

AxisTaps axis_taps(int pixels, int grid, int patch)
{
    AxisTaps t;
    t.lo.resize(pixels);
    t.hi.resize(pixels);
    t.frac.resize(pixels);
    for (int p = 0; p < pixels; ++p) {
        const double s = std::clamp((p - patch / 2.0) / patch, 0.0, static_cast<double>(grid - 1));
        const int lo = std::min(static_cast<int>(std::floor(s)), grid - 1);
        t.lo[p] = lo;
        t.hi[p] = std::min(lo + 1, grid - 1);
        t.frac[p] = s - lo;
    }
    return t;
}

Grid<double> upsample(std::span<const double> token_values, int stride, int offset, const NetShape& s)
{
    const AxisTaps tx = axis_taps(s.width(), s.grid_w, s.patch);
    const AxisTaps ty = axis_taps(s.height(), s.grid_h, s.patch);
    const auto at = [&](int gx, int gy) {
        return token_values[static_cast<std::size_t>(gy * s.grid_w + gx) * stride + offset];
    };
    Grid<double> out(s.width(), s.height(), 0.0);
    for (int v = 0; v < s.height(); ++v) {
        const double wy = ty.frac[v];
        for (int u = 0; u < s.width(); ++u) {
            const double wx = tx.frac[u];
            const double top = (1.0 - wx) * at(tx.lo[u], ty.lo[v]) + wx * at(tx.hi[u], ty.lo[v]);
            const double bottom = (1.0 - wx) * at(tx.lo[u], ty.hi[v]) + wx * at(tx.hi[u], ty.hi[v]);
            out(u, v) = (1.0 - wy) * top + wy * bottom;
        }
    }
    return out;
}

// Adjoint of upsample.
void upsample_backward(const Grid<double>& grad, std::span<double> token_grads, int stride, int offset,
                       const NetShape& s)
{
    const AxisTaps tx = axis_taps(s.width(), s.grid_w, s.patch);
    const AxisTaps ty = axis_taps(s.height(), s.grid_h, s.patch);
    const auto at = [&](int gx, int gy) -> double& {
        return token_grads[static_cast<std::size_t>(gy * s.grid_w + gx) * stride + offset];
    };
    for (int v = 0; v < s.height(); ++v) {
        const double wy = ty.frac[v];
        for (int u = 0; u < s.width(); ++u) {
            const double g = grad(u, v);
            if (g == 0.0) continue;
            const double wx = tx.frac[u];
            at(tx.lo[u], ty.lo[v]) += (1.0 - wy) * (1.0 - wx) * g;
            at(tx.hi[u], ty.lo[v]) += (1.0 - wy) * wx * g;
            at(tx.lo[u], ty.hi[v]) += wy * (1.0 - wx) * g;
            at(tx.hi[u], ty.hi[v]) += wy * wx * g;
        }
    }
}

constexpr int kNeighbourhood = 9;

} // namespace

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double sigmoid(double x)
{
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

// ---------------------------------------------------------------------------

int ParameterSet::add(std::string block_name, int rows, int cols)
{
    Block b{std::move(block_name), values_.size(), rows, cols};
    values_.resize(values_.size() + b.size(), 0.0);
    grads_.resize(values_.size(), 0.0);
    blocks_.push_back(std::move(b));
    return static_cast<int>(blocks_.size()) - 1;
}

void ParameterSet::zero_grad() { std::fill(grads_.begin(), grads_.end(), 0.0); }

// ---------------------------------------------------------------------------

Encoder::Encoder(const NetShape& shape, std::uint64_t seed) : shape_(shape)
{
    require(shape.patch > 0 && shape.grid_w > 0 && shape.grid_h > 0 && shape.channels > 0, "Encoder: bad shape");
    const int c = shape.channels;
    const int pd = shape.patch_dim();
    embed_w_ = params_.add("embed.weight", c, pd);
    embed_b_ = params_.add("embed.bias", c, 1);
    if (shape.positional) pos_ = params_.add("embed.position", shape.tokens(), c);
    mix_w_ = params_.add("mix.weight", kNeighbourhood, c);
    w1_ = params_.add("hidden1.weight", c, c);
    b1_ = params_.add("hidden1.bias", c, 1);
    w2_ = params_.add("hidden2.weight", c, c);
    b2_ = params_.add("hidden2.bias", c, 1);

    Rng rng(mix_seed(seed, 0x454e43ULL));
    init_uniform(params_.value(embed_w_), pd, rng);
    init_uniform(params_.value(embed_b_), pd, rng);
    if (shape.positional) init_uniform(params_.value(pos_), pd, rng);
    init_uniform(params_.value(mix_w_), kNeighbourhood, rng);
    init_uniform(params_.value(w1_), c, rng);
    init_uniform(params_.value(b1_), c, rng);
    init_uniform(params_.value(w2_), c, rng);
    init_uniform(params_.value(b2_), c, rng);
}

TokenGrid Encoder::forward(const Grid<double>& rgb, EncoderCache* cache) const
{
    const NetShape& s = shape_;
    require(rgb.same_shape(3 * s.width(), s.height()), "Encoder: image raster does not match the network shape");
    const int c = s.channels;
    const int pd = s.patch_dim();
    const int nt = s.tokens();

    EncoderCache local;
    EncoderCache& k = cache ? *cache : local;
    k.patches.assign(static_cast<std::size_t>(nt) * pd, 0.0);
    k.embedded.assign(static_cast<std::size_t>(nt) * c, 0.0);
    k.mixed.assign(static_cast<std::size_t>(nt) * c, 0.0);
    k.hidden.assign(static_cast<std::size_t>(nt) * c, 0.0);

    for (int gy = 0; gy < s.grid_h; ++gy) {
        for (int gx = 0; gx < s.grid_w; ++gx) {
            auto patch = row(k.patches, gy * s.grid_w + gx, pd);
            std::size_t i = 0;
            for (int dy = 0; dy < s.patch; ++dy)
                for (int dx = 0; dx < s.patch * 3; ++dx) patch[i++] = rgb(gx * s.patch * 3 + dx, gy * s.patch + dy) - 0.5;
        }
    }

    const std::span<const double> pos = s.positional ? params_.value(pos_) : std::span<const double>();
    for (int t = 0; t < nt; ++t) {
        auto e = row(k.embedded, t, c);
        affine(params_.value(embed_w_), params_.value(embed_b_), row(k.patches, t, pd), e);
        if (!pos.empty())
            for (int ch = 0; ch < c; ++ch) e[ch] += pos[static_cast<std::size_t>(t) * c + ch];
        for (double& x : e) x = std::tanh(x);
    }

    const auto mix = params_.value(mix_w_);
    for (int gy = 0; gy < s.grid_h; ++gy) {
        for (int gx = 0; gx < s.grid_w; ++gx) {
            auto m = row(k.mixed, gy * s.grid_w + gx, c);
            for (int n = 0; n < kNeighbourhood; ++n) {
                const int nx = gx + n % 3 - 1;
                const int ny = gy + n / 3 - 1;
                if (nx < 0 || ny < 0 || nx >= s.grid_w || ny >= s.grid_h) continue;
                const auto src = row(k.embedded, ny * s.grid_w + nx, c);
                const double* wk = mix.data() + static_cast<std::size_t>(n) * c;
                for (int ch = 0; ch < c; ++ch) m[ch] += wk[ch] * src[ch];
            }
        }
    }

    TokenGrid out(s.grid_w, s.grid_h, c);
    for (int t = 0; t < nt; ++t) {
        auto h = row(k.hidden, t, c);
        affine(params_.value(w1_), params_.value(b1_), row(k.mixed, t, c), h);
        for (double& x : h) x = std::tanh(x);
        affine(params_.value(w2_), params_.value(b2_), h, out.token(t));
    }
    return out;
}

void Encoder::backward(const EncoderCache& k, const TokenGrid& grad_tokens)
{
    const NetShape& s = shape_;
    const int c = s.channels;
    const int pd = s.patch_dim();
    const int nt = s.tokens();
    require(grad_tokens.count() == nt && grad_tokens.channels == c, "Encoder::backward: gradient shape mismatch");

    std::vector<double> d_mixed(static_cast<std::size_t>(nt) * c, 0.0);
    std::vector<double> d_hidden(static_cast<std::size_t>(c));
    for (int t = 0; t < nt; ++t) {
        std::fill(d_hidden.begin(), d_hidden.end(), 0.0);
        affine_backward(params_.value(w2_), row(k.hidden, t, c), grad_tokens.token(t), params_.grad(w2_),
                        params_.grad(b2_), d_hidden);
        const auto h = row(k.hidden, t, c);
        for (int ch = 0; ch < c; ++ch) d_hidden[ch] *= 1.0 - h[ch] * h[ch];
        affine_backward(params_.value(w1_), row(k.mixed, t, c), d_hidden, params_.grad(w1_), params_.grad(b1_),
                        row(d_mixed, t, c));
    }

    std::vector<double> d_embedded(static_cast<std::size_t>(nt) * c, 0.0);
    const auto mix = params_.value(mix_w_);
    auto d_mix = params_.grad(mix_w_);
    for (int gy = 0; gy < s.grid_h; ++gy) {
        for (int gx = 0; gx < s.grid_w; ++gx) {
            const auto dm = row(d_mixed, gy * s.grid_w + gx, c);
            for (int n = 0; n < kNeighbourhood; ++n) {
                const int nx = gx + n % 3 - 1;
                const int ny = gy + n / 3 - 1;
                if (nx < 0 || ny < 0 || nx >= s.grid_w || ny >= s.grid_h) continue;
                const int src = ny * s.grid_w + nx;
                const auto e = row(k.embedded, src, c);
                auto de = row(d_embedded, src, c);
                const double* wk = mix.data() + static_cast<std::size_t>(n) * c;
                double* dwk = d_mix.data() + static_cast<std::size_t>(n) * c;
                for (int ch = 0; ch < c; ++ch) {
                    dwk[ch] += dm[ch] * e[ch];
                    de[ch] += dm[ch] * wk[ch];
                }
            }
        }
    }

    const std::span<double> d_pos = s.positional ? params_.grad(pos_) : std::span<double>();
    for (int t = 0; t < nt; ++t) {
        auto de = row(d_embedded, t, c);
        const auto e = row(k.embedded, t, c);
        for (int ch = 0; ch < c; ++ch) de[ch] *= 1.0 - e[ch] * e[ch];
        if (!d_pos.empty())
            for (int ch = 0; ch < c; ++ch) d_pos[static_cast<std::size_t>(t) * c + ch] += de[ch];
        affine_backward(params_.value(embed_w_), row(k.patches, t, pd), de, params_.grad(embed_w_),
                        params_.grad(embed_b_), {});
    }
}

// ---------------------------------------------------------------------------

Validator::Validator(const NetShape& shape, std::uint64_t seed) : shape_(shape)
{
    const int c = shape.channels;
    const int hdim = shape.validator_hidden;
    require(hdim > 0, "Validator: hidden width must be positive");
    w1_ = params_.add("layer1.weight", hdim, c);
    b1_ = params_.add("layer1.bias", hdim, 1);
    w2_ = params_.add("layer2.weight", hdim, hdim);
    b2_ = params_.add("layer2.bias", hdim, 1);
    w3_ = params_.add("logits.weight", 2, hdim);
    b3_ = params_.add("logits.bias", 2, 1);

    Rng rng(mix_seed(seed, 0x56414cULL));
    init_uniform(params_.value(w1_), c, rng);
    init_uniform(params_.value(b1_), c, rng);
    init_uniform(params_.value(w2_), hdim, rng);
    init_uniform(params_.value(b2_), hdim, rng);
    init_uniform(params_.value(w3_), hdim, rng);
    // Start the depth logit at a room-scale depth (3 m) and sigma at 1.
    params_.value(b3_)[0] = inverse_softplus(3.0);
    params_.value(b3_)[1] = inverse_softplus(1.0 - kSigmaFloor);
}

DepthPrediction Validator::forward(const TokenGrid& tokens, ValidatorCache* cache) const
{
    g_validator_forwards.fetch_add(1, std::memory_order_relaxed);
    const NetShape& s = shape_;
    require(tokens.grid_w == s.grid_w && tokens.grid_h == s.grid_h && tokens.channels == s.channels,
            "Validator: token grid does not match the network shape");
    const int hd = s.validator_hidden;
    const int nt = s.tokens();

    ValidatorCache local;
    ValidatorCache& k = cache ? *cache : local;
    k.tokens = tokens.values;
    k.hidden1.assign(static_cast<std::size_t>(nt) * hd, 0.0);
    k.hidden2.assign(static_cast<std::size_t>(nt) * hd, 0.0);
    std::vector<double> logits(static_cast<std::size_t>(nt) * 2, 0.0);

    for (int t = 0; t < nt; ++t) {
        auto h1 = row(k.hidden1, t, hd);
        affine(params_.value(w1_), params_.value(b1_), tokens.token(t), h1);
        for (double& x : h1) x = std::tanh(x);
        auto h2 = row(k.hidden2, t, hd);
        affine(params_.value(w2_), params_.value(b2_), h1, h2);
        for (double& x : h2) x = std::tanh(x);
        affine(params_.value(w3_), params_.value(b3_), h2, row(logits, t, 2));
    }

    k.raw_depth = upsample(logits, 2, 0, s);
    k.raw_sigma = upsample(logits, 2, 1, s);

    DepthPrediction out;
    out.depth = DepthMap(s.width(), s.height());
    out.sigma = Grid<double>(s.width(), s.height(), 0.0);
    for (std::size_t i = 0; i < out.sigma.size(); ++i) {
        out.depth.values[i] = softplus(k.raw_depth[i]);
        out.depth.valid[i] = 1;
        out.sigma[i] = softplus(k.raw_sigma[i]) + kSigmaFloor;
    }
    return out;
}

TokenGrid Validator::backward(const ValidatorCache& k, const Grid<double>& grad_depth, const Grid<double>& grad_sigma)
{
    const NetShape& s = shape_;
    const int c = s.channels;
    const int hd = s.validator_hidden;
    const int nt = s.tokens();
    require(grad_depth.same_shape(s.width(), s.height()) && grad_sigma.same_shape(grad_depth),
            "Validator::backward: gradient raster mismatch");

    Grid<double> d_raw_depth(s.width(), s.height(), 0.0);
    Grid<double> d_raw_sigma(s.width(), s.height(), 0.0);
    for (std::size_t i = 0; i < d_raw_depth.size(); ++i) {
        d_raw_depth[i] = grad_depth[i] * sigmoid(k.raw_depth[i]);
        d_raw_sigma[i] = grad_sigma[i] * sigmoid(k.raw_sigma[i]);
    }
    std::vector<double> d_logits(static_cast<std::size_t>(nt) * 2, 0.0);
    upsample_backward(d_raw_depth, d_logits, 2, 0, s);
    upsample_backward(d_raw_sigma, d_logits, 2, 1, s);

    TokenGrid d_tokens(s.grid_w, s.grid_h, c);
    std::vector<double> d_h2(static_cast<std::size_t>(hd));
    std::vector<double> d_h1(static_cast<std::size_t>(hd));
    for (int t = 0; t < nt; ++t) {
        std::fill(d_h2.begin(), d_h2.end(), 0.0);
        std::fill(d_h1.begin(), d_h1.end(), 0.0);
        const auto h1 = row(k.hidden1, t, hd);
        const auto h2 = row(k.hidden2, t, hd);
        affine_backward(params_.value(w3_), h2, row(d_logits, t, 2), params_.grad(w3_), params_.grad(b3_), d_h2);
        for (int j = 0; j < hd; ++j) d_h2[j] *= 1.0 - h2[j] * h2[j];
        affine_backward(params_.value(w2_), h1, d_h2, params_.grad(w2_), params_.grad(b2_), d_h1);
        for (int j = 0; j < hd; ++j) d_h1[j] *= 1.0 - h1[j] * h1[j];
        affine_backward(params_.value(w1_), row(k.tokens, t, c), d_h1, params_.grad(w1_), params_.grad(b1_),
                        d_tokens.token(t));
    }
    return d_tokens;
}

std::uint64_t validator_forward_count() { return g_validator_forwards.load(std::memory_order_relaxed); }

// ---------------------------------------------------------------------------

SemanticHead::SemanticHead(const NetShape& shape, std::uint64_t seed) : shape_(shape)
{
    w_ = params_.add("weight", shape.classes, shape.channels);
    b_ = params_.add("bias", shape.classes, 1);
    Rng rng(mix_seed(seed, 0x53454dULL));
    init_uniform(params_.value(w_), shape.channels, rng);
    init_uniform(params_.value(b_), shape.channels, rng);
}

std::vector<double> SemanticHead::forward(const TokenGrid& tokens) const
{
    require(tokens.channels == shape_.channels, "SemanticHead: channel mismatch");
    const int k = shape_.classes;
    std::vector<double> logits(static_cast<std::size_t>(tokens.count()) * k);
    for (int t = 0; t < tokens.count(); ++t)
        affine(params_.value(w_), params_.value(b_), tokens.token(t), row(logits, t, k));
    return logits;
}

TokenGrid SemanticHead::backward(const TokenGrid& tokens, std::span<const double> grad_logits)
{
    const int k = shape_.classes;
    TokenGrid d(tokens.grid_w, tokens.grid_h, tokens.channels, tokens.frame_index);
    for (int t = 0; t < tokens.count(); ++t)
        affine_backward(params_.value(w_), tokens.token(t), grad_logits.subspan(static_cast<std::size_t>(t) * k, k),
                        params_.grad(w_), params_.grad(b_), d.token(t));
    return d;
}

// ---------------------------------------------------------------------------

GlobalHead::GlobalHead(const NetShape& shape, std::uint64_t seed) : shape_(shape)
{
    w_ = params_.add("weight", shape.global_dim, shape.channels);
    b_ = params_.add("bias", shape.global_dim, 1);
    Rng rng(mix_seed(seed, 0x474c42ULL));
    init_uniform(params_.value(w_), shape.channels, rng);
    init_uniform(params_.value(b_), shape.channels, rng);
}

namespace {

std::vector<double> mean_token(std::span<const TokenGrid> frames, int channels, std::size_t& count)
{
    require(!frames.empty(), "GlobalHead: need at least one frame");
    std::vector<double> mean(static_cast<std::size_t>(channels), 0.0);
    count = 0;
    for (const TokenGrid& f : frames) {
        require(f.channels == channels, "GlobalHead: channel mismatch");
        for (int t = 0; t < f.count(); ++t) kernels::axpy(1.0, f.token(t), mean);
        count += static_cast<std::size_t>(f.count());
    }
    require(count > 0, "GlobalHead: need at least one token");
    for (double& x : mean) x /= static_cast<double>(count);
    return mean;
}

} // namespace

std::vector<double> GlobalHead::forward(std::span<const TokenGrid> frames) const
{
    std::size_t count = 0;
    const std::vector<double> mean = mean_token(frames, shape_.channels, count);
    std::vector<double> fb(static_cast<std::size_t>(shape_.global_dim));
    affine(params_.value(w_), params_.value(b_), mean, fb);
    return fb;
}

std::vector<TokenGrid> GlobalHead::backward(std::span<const TokenGrid> frames, std::span<const double> grad_fb)
{
    std::size_t count = 0;
    const std::vector<double> mean = mean_token(frames, shape_.channels, count);
    std::vector<double> d_mean(static_cast<std::size_t>(shape_.channels), 0.0);
    affine_backward(params_.value(w_), mean, grad_fb, params_.grad(w_), params_.grad(b_), d_mean);
    for (double& x : d_mean) x /= static_cast<double>(count);

    std::vector<TokenGrid> out;
    out.reserve(frames.size());
    for (const TokenGrid& f : frames) {
        TokenGrid d(f.grid_w, f.grid_h, f.channels, f.frame_index);
        for (int t = 0; t < f.count(); ++t) std::copy(d_mean.begin(), d_mean.end(), d.token(t).begin());
        out.push_back(std::move(d));
    }
    return out;
}

// ---------------------------------------------------------------------------

Model::Model(const NetShape& s, std::uint64_t model_seed, bool with_validator)
    : shape(s), seed(model_seed), encoder(s, model_seed), semantic(s, model_seed), global(s, model_seed)
{
    if (with_validator) validator.emplace(s, model_seed);
    require(static_cast<double>(validator_parameter_count())
                <= kValidatorBudget * static_cast<double>(encoder_parameter_count()),
            "Model: validator exceeds 20% of the encoder parameter count");
}

std::vector<ParameterSet*> Model::parameter_sets()
{
    std::vector<ParameterSet*> out{&encoder.params()};
    if (validator) out.push_back(&validator->params());
    out.push_back(&semantic.params());
    out.push_back(&global.params());
    return out;
}

std::vector<const ParameterSet*> Model::parameter_sets() const
{
    std::vector<const ParameterSet*> out{&encoder.params()};
    if (validator) out.push_back(&validator->params());
    out.push_back(&semantic.params());
    out.push_back(&global.params());
    return out;
}

void Model::zero_grad()
{
    for (ParameterSet* p : parameter_sets()) p->zero_grad();
}

// ---------------------------------------------------------------------------

void Adam::step(std::span<ParameterSet* const> sets)
{
    for (ParameterSet* set : sets) {
        for (const auto& block : set->blocks()) {
            const auto g = set->grads().subspan(block.offset, block.size());
            if (!std::all_of(g.begin(), g.end(), [](double x) { return std::isfinite(x); }))
                throw NumericalError("non-finite gradient in " + set->name() + "." + block.name);
        }
    }
    if (moments_.size() != sets.size()) {
        moments_.clear();
        for (ParameterSet* set : sets) moments_.push_back({std::vector<double>(set->size(), 0.0),
                                                            std::vector<double>(set->size(), 0.0)});
    }
    ++steps_;
    kernels::AdamCoefficients c;
    c.lr = options_.lr;
    c.beta1 = options_.beta1;
    c.beta2 = options_.beta2;
    c.epsilon = options_.epsilon;
    c.bias_correction1 = 1.0 - std::pow(options_.beta1, static_cast<double>(steps_));
    c.bias_correction2 = 1.0 - std::pow(options_.beta2, static_cast<double>(steps_));
    for (std::size_t i = 0; i < sets.size(); ++i) {
        require(moments_[i].m.size() == sets[i]->size(), "Adam: parameter set changed size");
        kernels::adam_update(sets[i]->values(), sets[i]->grads(), moments_[i].m, moments_[i].v, c);
    }
}

// ---------------------------------------------------------------------------

Teacher::Teacher(std::uint64_t seed, int dim) : dim_(dim)
{
    require(dim > 0, "Teacher: descriptor dimension must be positive");
    Rng rng(mix_seed(seed, 0x544348ULL));
    projection_.resize(static_cast<std::size_t>(dim) * kBins);
    for (double& x : projection_) x = normal(rng);
}

std::vector<double> Teacher::occupancy(std::span<const Frame* const> frames)
{
    std::vector<double> hist(kBins, 0.0);
    double total = 0.0;
    const auto cell = [](double x) { return std::clamp(static_cast<int>(std::floor(x / kCell)), 0, 3); };
    for (const Frame* f : frames) {
        const PointMap pm = backproject(f->depth, f->camera.intrinsics, f->camera.pose);
        for (std::size_t i = 0; i < pm.points.size(); ++i) {
            if (!pm.valid[i]) continue;
            const Vec3& p = pm.points[i];
            hist[static_cast<std::size_t>(cell(p.x()) + 4 * cell(p.y()) + 16 * cell(p.z()))] += 1.0;
            total += 1.0;
        }
    }
    if (total == 0.0) throw EmptySupport("Teacher: no valid depth in the scene");
    for (double& h : hist) h /= total;
    return hist;
}

std::vector<double> Teacher::project(std::span<const double> histogram) const
{
    require(histogram.size() == kBins, "Teacher: histogram size mismatch");
    std::vector<double> fa(static_cast<std::size_t>(dim_));
    for (int d = 0; d < dim_; ++d)
        fa[static_cast<std::size_t>(d)] =
            kernels::dot(std::span<const double>(projection_).subspan(static_cast<std::size_t>(d) * kBins, kBins),
                         histogram);
    return fa;
}

std::vector<double> Teacher::descriptor(std::span<const Frame* const> frames) const
{
    return project(occupancy(frames));
}

} // namespace geoemerge
