#include <doctest.h>

#include <cmath>
#include <limits>

#include "geoemerge/net.hpp"
#include "geoemerge/random.hpp"

using namespace geoemerge;

namespace {

NetShape small_shape()
{
    NetShape s;
    s.grid_w = 6;
    s.grid_h = 5;
    s.channels = 16;
    s.validator_hidden = 8;
    s.global_dim = 8;
    return s;
}

Grid<double> random_image(const NetShape& s, Rng& rng)
{
    Grid<double> img(3 * s.width(), s.height());
    for (double& x : img.storage()) x = uniform01(rng);
    return img;
}

// A frame whose single valid pixel lands at `p`.
Frame point_frame(const Vec3& p)
{
    Frame f;
    f.camera = {Intrinsics{1, 1, 0, 0, 1, 1}, Pose::from_translation(p - Vec3(0, 0, 1))};
    f.depth = DepthMap(1, 1);
    f.depth.values[0] = 1.0;
    f.depth.valid[0] = 1;
    return f;
}

} // namespace

TEST_CASE("a token only sees its 3x3 patch neighbourhood")
{
    const NetShape s = small_shape();
    const Encoder enc(s, 3);
    Rng rng(1);
    const Grid<double> a = random_image(s, rng);
    Grid<double> b = a;
    const int px = 4, py = 3; // perturbed patch
    for (int v = py * s.patch; v < (py + 1) * s.patch; ++v)
        for (int u = 3 * px * s.patch; u < 3 * (px + 1) * s.patch; ++u) b(u, v) = uniform01(rng);
    const TokenGrid ta = enc.forward(a), tb = enc.forward(b);
    for (int gy = 0; gy < s.grid_h; ++gy)
        for (int gx = 0; gx < s.grid_w; ++gx) {
            const int t = gy * s.grid_w + gx;
            const bool near = std::abs(gx - px) <= 1 && std::abs(gy - py) <= 1;
            const bool same = std::equal(ta.token(t).begin(), ta.token(t).end(), tb.token(t).begin());
            CAPTURE(gx);
            CAPTURE(gy);
            CHECK(same == !near);
        }
}

TEST_CASE("network construction is a pure function of the seed")
{
    const NetShape s = small_shape();
    const Model a(s, 11), b(s, 11), c(s, 12);
    const auto pa = a.parameter_sets(), pb = b.parameter_sets(), pc = c.parameter_sets();
    REQUIRE(pa.size() == 4);
    for (std::size_t i = 0; i < pa.size(); ++i) CHECK(*pa[i] == *pb[i]);
    CHECK_FALSE(*pa[0] == *pc[0]);
    Rng rng(2);
    const Grid<double> img = random_image(s, rng);
    CHECK(a.encoder.forward(img).values == b.encoder.forward(img).values);
}

TEST_CASE("positional offsets are optional")
{
    NetShape with = small_shape(), without = small_shape();
    without.positional = false;
    const Encoder e1(with, 1), e0(without, 1);
    CHECK(e1.params().size() == e0.params().size() + static_cast<std::size_t>(with.tokens() * with.channels));
    // Without them, a constant image yields identical interior tokens.
    const Grid<double> flat(3 * without.width(), without.height(), 0.4);
    const TokenGrid t = e0.forward(flat);
    const int a = 1 * without.grid_w + 1, b = 2 * without.grid_w + 3;
    CHECK(std::equal(t.token(a).begin(), t.token(a).end(), t.token(b).begin()));
}

TEST_CASE("validator stays within its parameter budget and is detachable")
{
    const NetShape s = small_shape();
    const Model attached(s, 5, true), detached(s, 5, false);
    CHECK(attached.validator_parameter_count() > 0);
    CHECK(static_cast<double>(attached.validator_parameter_count())
          <= kValidatorBudget * static_cast<double>(attached.encoder_parameter_count()));
    CHECK(detached.validator_parameter_count() == 0);
    CHECK(detached.parameter_sets().size() == 3);

    Rng rng(3);
    const Grid<double> img = random_image(s, rng);
    const std::uint64_t before = validator_forward_count();
    const TokenGrid ta = attached.encoder.forward(img);
    const TokenGrid td = detached.encoder.forward(img);
    CHECK(ta.values == td.values);
    CHECK(attached.semantic.forward(ta) == detached.semantic.forward(td));
    CHECK(validator_forward_count() == before);
    const DepthPrediction p = attached.validator->forward(ta);
    CHECK(validator_forward_count() == before + 1);
    CHECK(p.depth.valid_count() == static_cast<std::size_t>(s.width() * s.height()));
    for (double x : p.sigma.values()) CHECK(x >= kSigmaFloor);

    NetShape heavy = s;
    heavy.validator_hidden = 4096;
    CHECK_THROWS_AS(Model(heavy, 1), ContractViolation);
}

TEST_CASE("Adam minimises a quadratic")
{
    ParameterSet p("toy");
    p.add("x", 1, 4);
    const std::vector<double> target{1.0, -2.0, 0.5, 3.0};
    const std::vector<double> start{2.0, -1.0, -0.5, 2.0}; // unit distance per coordinate
    std::copy(start.begin(), start.end(), p.values().begin());
    Adam opt(Adam::Options{1e-2});
    ParameterSet* sets[] = {&p};
    double f = 0.0;
    int step = 0;
    for (; step < 2000; ++step) {
        f = 0.0;
        for (int i = 0; i < 4; ++i) {
            const double d = p.values()[i] - target[i];
            f += d * d;
            p.grads()[i] = 2.0 * d;
        }
        if (f < 1e-6) break;
        opt.step(sets);
    }
    CHECK(f < 1e-6);
    CHECK(step <= 2000);
}

TEST_CASE("Adam refuses non-finite gradients without touching parameters")
{
    ParameterSet p("toy");
    p.add("w", 2, 2);
    p.values()[0] = 1.0;
    p.grads()[3] = std::numeric_limits<double>::quiet_NaN();
    const std::vector<double> before(p.values().begin(), p.values().end());
    Adam opt;
    ParameterSet* sets[] = {&p};
    CHECK_THROWS_WITH_AS(opt.step(sets), "non-finite gradient in toy.w", NumericalError);
    CHECK(std::equal(before.begin(), before.end(), p.values().begin()));
}

TEST_CASE("teacher descriptor of uniform occupancy")
{
    std::vector<Frame> frames;
    for (int z = 0; z < 4; ++z)
        for (int y = 0; y < 4; ++y)
            for (int x = 0; x < 4; ++x) frames.push_back(point_frame(Vec3(1 + 2 * x, 1 + 2 * y, 1 + 2 * z)));
    std::vector<const Frame*> ptrs;
    for (const Frame& f : frames) ptrs.push_back(&f);
    const auto hist = Teacher::occupancy(ptrs);
    for (double h : hist) CHECK(h == 1.0 / 64.0);

    const Teacher teacher(9, 8);
    const std::vector<double> fa = teacher.descriptor(ptrs);
    std::vector<double> expected(8, 0.0);
    for (int b = 0; b < Teacher::kBins; ++b) {
        std::vector<double> onehot(Teacher::kBins, 0.0);
        onehot[b] = 1.0;
        const auto col = teacher.project(onehot);
        for (int d = 0; d < 8; ++d) expected[d] += col[d] / 64.0;
    }
    for (int d = 0; d < 8; ++d) CHECK(fa[d] == doctest::Approx(expected[d]).epsilon(1e-12));
}

TEST_CASE("teacher separates disjoint occupancy")
{
    const Frame a = point_frame(Vec3(1, 1, 1)), b = point_frame(Vec3(7, 7, 5));
    const Frame* pa[] = {&a};
    const Frame* pb[] = {&b};
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const Teacher t(seed, 16);
        CHECK(t.descriptor(pa) != t.descriptor(pb));
    }
    Frame empty = a;
    empty.depth.valid[0] = 0;
    const Frame* pe[] = {&empty};
    CHECK_THROWS_AS(Teacher::occupancy(pe), EmptySupport);
}

TEST_CASE("head shapes")
{
    const NetShape s = small_shape();
    const Model m(s, 1);
    const TokenGrid t(s.grid_w, s.grid_h, s.channels);
    CHECK(m.semantic.forward(t).size() == static_cast<std::size_t>(s.tokens() * s.classes));
    const TokenGrid frames[] = {t, t};
    CHECK(m.global.forward(frames).size() == static_cast<std::size_t>(s.global_dim));
    CHECK(softplus(0.0) == doctest::Approx(std::log(2.0)));
    CHECK(softplus(800.0) == doctest::Approx(800.0));
    CHECK(sigmoid(0.0) == 0.5);
}
