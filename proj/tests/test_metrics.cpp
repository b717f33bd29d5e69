#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "geoemerge/metrics.hpp"
#include "geoemerge/random.hpp"

using namespace geoemerge;

namespace {

Box3 unit_box(double x0, double y0, double z0, double sx = 1.0, double sy = 1.0, double sz = 1.0)
{
    return {Vec3(x0, y0, z0), Vec3(x0 + sx, y0 + sy, z0 + sz)};
}

Box3 random_box(Rng& rng)
{
    const Vec3 lo(uniform(rng, 0, 2), uniform(rng, 0, 2), uniform(rng, 0, 2));
    return {lo, lo + Vec3(uniform(rng, 0.3, 2), uniform(rng, 0.3, 2), uniform(rng, 0.3, 2))};
}

// Brute-force minimum-cost assignment over all injective maps rows -> cols
// (or cols -> rows when there are more rows).
double brute_force_cost(const Eigen::MatrixXd& c)
{
    const bool transpose = c.rows() > c.cols();
    const Eigen::MatrixXd m = transpose ? Eigen::MatrixXd(c.transpose()) : c;
    std::vector<int> cols(static_cast<std::size_t>(m.cols()));
    std::iota(cols.begin(), cols.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    do {
        double s = 0.0;
        for (int i = 0; i < m.rows(); ++i) s += m(i, cols[static_cast<std::size_t>(i)]);
        best = std::min(best, s);
    } while (std::next_permutation(cols.begin(), cols.end()));
    return best;
}

} // namespace

TEST_CASE("box IoU of offset unit cubes")
{
    CHECK(iou3d(unit_box(0, 0, 0), unit_box(0.5, 0.5, 0.5)) == doctest::Approx(1.0 / 15.0).epsilon(1e-15));
    CHECK(iou3d(unit_box(0, 0, 0), unit_box(0, 0, 0)) == 1.0);
    CHECK(iou3d(unit_box(0, 0, 0), unit_box(2, 0, 0)) == 0.0);
    CHECK(iou3d(unit_box(0, 0, 0), unit_box(1, 0, 0)) == 0.0);
    CHECK_THROWS_AS(iou3d(Box3{Vec3::Zero(), Vec3::Zero()}, unit_box(0, 0, 0)), ContractViolation);
}

TEST_CASE("box IoU agrees with Monte-Carlo integration")
{
    Rng rng(21);
    int pairs = 0;
    while (pairs < 100) {
        const Box3 a = random_box(rng), b = random_box(rng);
        const double exact = iou3d(a, b);
        if (exact < 0.05) continue;
        ++pairs;
        const Vec3 lo = a.min.cwiseMin(b.min), hi = a.max.cwiseMax(b.max);
        std::size_t both = 0, either = 0;
        for (int s = 0; s < 200000; ++s) {
            const Vec3 p(uniform(rng, lo.x(), hi.x()), uniform(rng, lo.y(), hi.y()), uniform(rng, lo.z(), hi.z()));
            const bool ia = a.contains(p), ib = b.contains(p);
            both += ia && ib;
            either += ia || ib;
        }
        const double estimate = static_cast<double>(both) / static_cast<double>(either);
        // Binomial standard error of the ratio, with a 4.5 sigma band.
        const double se = std::sqrt(exact * (1.0 - exact) / static_cast<double>(either));
        CHECK(std::fabs(estimate - exact) <= std::max(1e-3, 4.5 * se));
    }
}

TEST_CASE("grounding accuracy counts cases at the threshold")
{
    std::vector<GroundingCase> cases;
    for (double iou : {0.3, 0.2, 0.6}) cases.push_back({"c", {unit_box(0, 0, 0, iou)}, {unit_box(0, 0, 0)}});
    CHECK(grounding_accuracy(cases, 0.25) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
    CHECK(grounding_accuracy(cases, 0.6) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    CHECK(grounding_accuracy({}, 0.25) == 0.0);
    cases[0].predicted.push_back(unit_box(3, 3, 3));
    CHECK_THROWS_AS(grounding_accuracy(cases, 0.25), ContractViolation);
}

TEST_CASE("multi-target F1 fixtures")
{
    const GroundingCase zero_empty{"z0", {}, {}};
    CHECK(match_case(zero_empty, 0.5).f1 == 1.0);
    const GroundingCase zero_spurious{"z1", {unit_box(0, 0, 0)}, {}};
    CHECK(match_case(zero_spurious, 0.5).f1 == 0.0);
    CHECK(match_case(zero_spurious, 0.5).false_positive == 1);

    // Two targets, one prediction overlapping the first at IoU 0.9: P = 1, R = 0.5.
    const GroundingCase partial{"m", {unit_box(0, 0, 0, 0.9)}, {unit_box(0, 0, 0), unit_box(5, 5, 5)}};
    const MatchCounts m = match_case(partial, 0.5);
    CHECK(m.true_positive == 1);
    CHECK(m.false_positive == 0);
    CHECK(m.false_negative == 1);
    CHECK(m.f1 == doctest::Approx(2.0 / 3.0).epsilon(1e-15));

    const GroundingCase missed{"n", {}, {unit_box(0, 0, 0)}};
    CHECK(match_case(missed, 0.5).f1 == 0.0);
    CHECK(multi_target_f1({zero_empty, partial, missed}, 0.5) == doctest::Approx((1.0 + 2.0 / 3.0) / 3.0));
    CHECK(multi_target_f1({}, 0.5) == 0.0);
}

TEST_CASE("matching maximises the number of matches before total IoU")
{
    // p0 overlaps both targets, p1 only t0. The greedy/IoU-maximal pairing
    // p0-t0 would leave p1 unmatched; the right answer matches both.
    const Box3 t0 = unit_box(0, 0, 0), t1 = unit_box(0.6, 0, 0);
    const Box3 p0 = unit_box(0.3, 0, 0), p1 = unit_box(-0.1, 0, 0);
    REQUIRE(iou3d(p0, t0) >= 0.25);
    REQUIRE(iou3d(p0, t1) >= 0.25);
    REQUIRE(iou3d(p1, t0) >= 0.25);
    REQUIRE(iou3d(p1, t1) < 0.25);
    const MatchCounts m = match_case({"x", {p0, p1}, {t0, t1}}, 0.25);
    CHECK(m.true_positive == 2);
    CHECK(m.f1 == 1.0);
}

TEST_CASE("Hungarian assignment is optimal")
{
    Rng rng(8);
    for (int trial = 0; trial < 300; ++trial) {
        const int r = 1 + static_cast<int>(uniform_index(rng, 6)), c = 1 + static_cast<int>(uniform_index(rng, 6));
        Eigen::MatrixXd cost(r, c);
        for (int i = 0; i < r; ++i)
            for (int j = 0; j < c; ++j) cost(i, j) = uniform(rng, -5, 5);
        const std::vector<int> a = hungarian(cost);
        double total = 0.0;
        std::vector<int> used;
        for (int i = 0; i < r; ++i) {
            if (a[i] < 0) continue;
            total += cost(i, a[i]);
            used.push_back(a[i]);
        }
        std::sort(used.begin(), used.end());
        CHECK(std::adjacent_find(used.begin(), used.end()) == used.end());
        CHECK(static_cast<int>(used.size()) == std::min(r, c));
        CHECK(total == doctest::Approx(brute_force_cost(cost)).epsilon(1e-12));
    }
}

TEST_CASE("normal metrics for a constant 22.5 degree error")
{
    Rng rng(4);
    std::vector<Vec3> gt, pred;
    for (int i = 0; i < 500; ++i) {
        Vec3 n(normal(rng), normal(rng), normal(rng));
        n.normalize();
        Vec3 perp = n.cross(Vec3(normal(rng), normal(rng), normal(rng))).normalized();
        gt.push_back(n);
        pred.push_back(Eigen::AngleAxisd(22.5 * std::numbers::pi / 180.0, perp) * n);
    }
    const NormalMetrics m = normal_metrics(pred, gt);
    CHECK(m.count == 500);
    CHECK(m.acc_11 == 0.0);
    CHECK(m.acc_22 == 1.0);
    CHECK(m.acc_30 == 1.0);
    CHECK(std::fabs(m.macc - 2.0 / 3.0) <= 1e-9);
    CHECK(std::fabs(m.rmse_deg - 22.5) <= 1e-9);

    pred[0] = Vec3::Zero();
    CHECK(normal_metrics(pred, gt).count == 499);
    CHECK_THROWS_AS(normal_metrics(std::vector<Vec3>{Vec3::Zero()}, std::vector<Vec3>{Vec3::UnitX()}), EmptySupport);
}

TEST_CASE("closed-form ridge matches gradient descent")
{
    Rng rng(6);
    const int n = 50, d = 4;
    Eigen::MatrixXd x(n, d), y(n, 2);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < d; ++j) x(i, j) = normal(rng);
        y(i, 0) = 0.5 * x(i, 0) - 2.0 * x(i, 2) + 1.0 + 0.1 * normal(rng);
        y(i, 1) = x(i, 1) + x(i, 3) - 0.5 + 0.1 * normal(rng);
    }
    const double lambda = 0.3;
    const Eigen::MatrixXd closed = fit_ridge(x, y, lambda);

    Eigen::MatrixXd a(n, d + 1);
    a << x, Eigen::VectorXd::Ones(n);
    const Eigen::MatrixXd h = 2.0 * (a.transpose() * a + lambda * Eigen::MatrixXd::Identity(d + 1, d + 1));
    const double step = 1.0 / h.operatorNorm();
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(d + 1, 2);
    for (int it = 0; it < 20000; ++it) w -= step * (2.0 * a.transpose() * (a * w - y) + 2.0 * lambda * w);
    CHECK((w - closed).cwiseAbs().maxCoeff() <= 1e-6);
    CHECK((apply_ridge(closed, x) - a * closed).norm() < 1e-12);
}

TEST_CASE("a probe on noise features predicts the mean")
{
    Rng rng(10);
    const int n = 3000, m = 1000, d = 8;
    Eigen::MatrixXd xtr(n, d), xte(m, d), ytr(n, 1), yte(m, 1);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < d; ++j) xtr(i, j) = normal(rng);
        ytr(i, 0) = uniform(rng, 1.0, 5.0);
    }
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < d; ++j) xte(i, j) = normal(rng);
        yte(i, 0) = uniform(rng, 1.0, 5.0);
    }
    const double mean = yte.mean();
    const double stddev = std::sqrt((yte.array() - mean).square().mean());
    const ProbeResult r = linear_probe(ProbeTask::depth, xtr, ytr, xte, yte);
    CHECK(std::fabs(r.rmse - stddev) <= 0.1 * stddev);
}

TEST_CASE("normal probe renormalises predictions")
{
    Rng rng(12);
    const int n = 200;
    Eigen::MatrixXd x(n, 3), y(n, 3);
    for (int i = 0; i < n; ++i) {
        Vec3 v(normal(rng), normal(rng), normal(rng));
        v.normalize();
        x.row(i) = 2.0 * v.transpose();
        y.row(i) = v.transpose();
    }
    const ProbeResult r = linear_probe(ProbeTask::normals, x, y, x, y);
    for (int i = 0; i < n; ++i) CHECK(r.predictions.row(i).norm() == doctest::Approx(1.0));
    CHECK(r.normals.acc_11 == 1.0);
    CHECK(r.rmse < 0.1);
}

TEST_CASE("clustering into boxes")
{
    std::vector<Vec3> pts;
    for (int i = 0; i < 5; ++i) pts.emplace_back(0.1 * i, 0.0, 0.0); // chain of adjacent cells
    for (int i = 0; i < 3; ++i) pts.emplace_back(5.0, 5.0 + 0.05 * i, 1.0);
    pts.emplace_back(9.0, 9.0, 9.0); // singleton
    const auto boxes = cluster_boxes(pts, 0.3, 0.1, 2);
    REQUIRE(boxes.size() == 2);
    CHECK(boxes[0].min.isApprox(Vec3(-0.1, -0.1, -0.1)));
    CHECK(boxes[0].max.isApprox(Vec3(0.5, 0.1, 0.1)));
    CHECK(boxes[1].min.isApprox(Vec3(4.9, 4.9, 0.9)));
    CHECK(cluster_boxes(pts, 0.3, 0.1, 1).size() == 3);
    CHECK(cluster_boxes({}, 0.3, 0.1, 1).empty());
}

namespace {

struct FramePair {
    Frame a, b;
};

std::vector<FramePair> scene_pairs()
{
    const Scene s = generate_scene(4);
    const auto cams = sample_trajectory(s, 8);
    std::vector<Frame> frames;
    for (const Camera& c : cams) frames.push_back(render_frame(s, c));
    std::vector<FramePair> pairs;
    for (std::size_t i = 0; i < frames.size(); ++i)
        for (std::size_t j = 0; j < frames.size(); ++j)
            if (i != j) pairs.push_back({frames[i], frames[j]});
    return pairs;
}

std::vector<std::optional<Vec3>> token_centres(const Frame& f, int patch)
{
    std::vector<std::optional<Vec3>> out;
    for (int gy = 0; gy < f.height() / patch; ++gy)
        for (int gx = 0; gx < f.width() / patch; ++gx) {
            const int u = gx * patch + patch / 2, v = gy * patch + patch / 2;
            if (!f.depth.is_valid(u, v)) {
                out.emplace_back();
                continue;
            }
            out.emplace_back(f.camera.pose.apply(f.camera.intrinsics.ray(u, v) * f.depth.values(u, v)));
        }
    return out;
}

// Low-frequency sin/cos code: cosine similarity decreases monotonically
// with Euclidean distance at room scale.
TokenGrid position_tokens(const Frame& f, int patch)
{
    const auto centres = token_centres(f, patch);
    TokenGrid t(f.width() / patch, f.height() / patch, 6);
    const double w = 1e-3;
    for (int i = 0; i < t.count(); ++i) {
        if (!centres[i]) continue;
        for (int axis = 0; axis < 3; ++axis) {
            t.token(i)[2 * axis] = std::cos(w * (*centres[i])[axis]);
            t.token(i)[2 * axis + 1] = std::sin(w * (*centres[i])[axis]);
        }
    }
    return t;
}

} // namespace

TEST_CASE("position features reach the correspondence ceiling")
{
    const CorrespondenceOptions opt;
    CorrespondenceResult recall = empty_correspondence(opt), ceiling = empty_correspondence(opt);
    for (const FramePair& p : scene_pairs()) {
        correspondence_recall(position_tokens(p.a, opt.patch), position_tokens(p.b, opt.patch), p.a, p.b, recall, opt);
        correspondence_ceiling(p.a, p.b, ceiling, opt);
    }
    int non_empty = 0;
    for (std::size_t i = 0; i < recall.bins.size(); ++i) {
        REQUIRE(recall.bins[i].errors.size() == ceiling.bins[i].errors.size());
        if (recall.bins[i].empty()) continue;
        ++non_empty;
        for (double thr : {0.02, 0.1, 0.3, 1.0})
            CHECK(recall.bins[i].recall(thr) >= ceiling.bins[i].recall(thr));
    }
    CHECK(non_empty >= 2);
    CHECK(std::isnan(AngleBin{}.recall(0.02)));
}

TEST_CASE("random features match at chance level")
{
    const CorrespondenceOptions opt;
    const double thr = 1.0;
    const int draws = 5;
    Rng rng(13);
    double hits = 0.0, expected = 0.0, variance = 0.0;
    for (const FramePair& p : scene_pairs()) {
        const double angle = relative_pose(p.a.camera.pose, p.b.camera.pose).rotation_angle_deg();
        if (angle >= opt.bin_edges.back()) continue;
        const auto ca = token_centres(p.a, opt.patch), cb = token_centres(p.b, opt.patch);
        for (const auto& qa : ca) {
            if (!qa) continue;
            // Query is co-visible when its projection into b hits a surface at the same depth.
            const auto proj = project(*qa, p.b.camera.intrinsics, p.b.camera.pose);
            if (!proj) continue;
            const int u = static_cast<int>(std::floor(proj->u + 0.5)), v = static_cast<int>(std::floor(proj->v + 0.5));
            if (u < 0 || v < 0 || u >= p.b.width() || v >= p.b.height() || !p.b.depth.is_valid(u, v)) continue;
            if (std::fabs(proj->z - p.b.depth.values(u, v)) > opt.visibility_tolerance * p.b.depth.values(u, v))
                continue;
            int within = 0;
            for (const auto& qb : cb) within += qb && (*qb - *qa).norm() <= thr;
            const double prob = static_cast<double>(within) / static_cast<double>(cb.size());
            expected += draws * prob;
            variance += draws * prob * (1.0 - prob);
        }
        for (int draw = 0; draw < draws; ++draw) {
            TokenGrid ta(8, 8, 16), tb(8, 8, 16);
            for (double& x : ta.values) x = normal(rng);
            for (double& x : tb.values) x = normal(rng);
            CorrespondenceResult r = empty_correspondence(opt);
            correspondence_recall(ta, tb, p.a, p.b, r, opt);
            for (const AngleBin& b : r.bins)
                for (double e : b.errors) hits += e <= thr;
        }
    }
    REQUIRE(expected > 100.0);
    CHECK(std::fabs(hits - expected) <= 3.0 * std::sqrt(variance));
}
