#include "geoemerge/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "geoemerge/error.hpp"
#include "geoemerge/injection.hpp"

namespace geoemerge {

double iou3d(const Box3& a, const Box3& b)
{
    require((a.min.array() < a.max.array()).all() && (b.min.array() < b.max.array()).all(),
            "iou3d: boxes need min < max on every axis");
    const Vec3 lo = a.min.cwiseMax(b.min);
    const Vec3 hi = a.max.cwiseMin(b.max);
    const Vec3 overlap = (hi - lo).cwiseMax(0.0);
    const double inter = overlap.prod();
    const double uni = a.extent().prod() + b.extent().prod() - inter;
    return inter / uni;
}

CaseKind GroundingCase::kind() const
{
    if (truth.empty()) return CaseKind::zero_target;
    return truth.size() == 1 ? CaseKind::single_target : CaseKind::multi_target;
}

double grounding_accuracy(const std::vector<GroundingCase>& cases, double tau)
{
    if (cases.empty()) return 0.0;
    int hits = 0;
    for (const GroundingCase& c : cases) {
        require(c.truth.size() == 1 && c.predicted.size() == 1,
                "grounding_accuracy: case '" + c.id + "' is not single-target with one prediction");
        if (iou3d(c.predicted[0], c.truth[0]) >= tau) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(cases.size());
}

std::vector<int> hungarian(const Eigen::MatrixXd& cost)
{
    const int rows = static_cast<int>(cost.rows());
    const int cols = static_cast<int>(cost.cols());
    std::vector<int> assignment(static_cast<std::size_t>(rows), -1);
    if (rows == 0 || cols == 0) return assignment;

    // Square padding with zero-cost dummies, then the classic potentials
    // formulation (1-indexed, column 0 is the virtual start).
    const int n = std::max(rows, cols);
    const auto c = [&](int i, int j) { return (i < rows && j < cols) ? cost(i, j) : 0.0; };
    constexpr double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<int> p(n + 1, 0), way(n + 1, 0);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(n + 1, inf);
        std::vector<char> used(n + 1, 0);
        do {
            used[j0] = 1;
            const int i0 = p[j0];
            double delta = inf;
            int j1 = 0;
            for (int j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = c(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    for (int j = 1; j <= n; ++j)
        if (p[j] - 1 < rows && j - 1 < cols) assignment[static_cast<std::size_t>(p[j] - 1)] = j - 1;
    return assignment;
}

MatchCounts match_case(const GroundingCase& c, double tau)
{
    MatchCounts m;
    if (c.truth.empty() && c.predicted.empty()) {
        m.true_positive = 1;
        m.f1 = 1.0;
        return m;
    }
    const int np = static_cast<int>(c.predicted.size());
    const int ng = static_cast<int>(c.truth.size());
    if (np > 0 && ng > 0) {
        // Eligible pairs weigh more than any IoU sum, so the assignment
        // maximises the number of matches first and total IoU second.
        const double bonus = static_cast<double>(std::max(np, ng)) + 1.0;
        Eigen::MatrixXd cost = Eigen::MatrixXd::Zero(np, ng);
        Eigen::MatrixXd iou(np, ng);
        for (int i = 0; i < np; ++i)
            for (int j = 0; j < ng; ++j) {
                iou(i, j) = iou3d(c.predicted[i], c.truth[j]);
                if (iou(i, j) >= tau) cost(i, j) = -(bonus + iou(i, j));
            }
        const std::vector<int> assign = hungarian(cost);
        for (int i = 0; i < np; ++i)
            if (assign[i] >= 0 && iou(i, assign[i]) >= tau) ++m.true_positive;
    }
    m.false_positive = np - m.true_positive;
    m.false_negative = ng - m.true_positive;
    const int denom = 2 * m.true_positive + m.false_positive + m.false_negative;
    m.f1 = denom > 0 ? 2.0 * m.true_positive / denom : 0.0;
    return m;
}

double multi_target_f1(const std::vector<GroundingCase>& cases, double tau)
{
    if (cases.empty()) return 0.0;
    double sum = 0.0;
    for (const GroundingCase& c : cases) sum += match_case(c, tau).f1;
    return sum / static_cast<double>(cases.size());
}

double AngleBin::recall(double threshold) const
{
    if (errors.empty()) return std::numeric_limits<double>::quiet_NaN();
    const auto hits = std::count_if(errors.begin(), errors.end(), [&](double e) { return e <= threshold; });
    return static_cast<double>(hits) / static_cast<double>(errors.size());
}

void CorrespondenceResult::merge(const CorrespondenceResult& other)
{
    require(bins.size() == other.bins.size(), "CorrespondenceResult::merge: bin layouts differ");
    for (std::size_t i = 0; i < bins.size(); ++i)
        bins[i].errors.insert(bins[i].errors.end(), other.bins[i].errors.begin(), other.bins[i].errors.end());
}

std::size_t CorrespondenceResult::queries() const
{
    std::size_t n = 0;
    for (const AngleBin& b : bins) n += b.errors.size();
    return n;
}

CorrespondenceResult empty_correspondence(const CorrespondenceOptions& options)
{
    require(options.bin_edges.size() >= 2, "correspondence: need at least one angle bin");
    CorrespondenceResult r;
    for (std::size_t i = 0; i + 1 < options.bin_edges.size(); ++i)
        r.bins.push_back({options.bin_edges[i], options.bin_edges[i + 1], {}});
    return r;
}

namespace {

struct TokenCenter {
    bool valid = false;
    Vec3 world = Vec3::Zero();
};

std::vector<TokenCenter> lift_token_centers(const Frame& f, int patch)
{
    const int gw = f.width() / patch;
    const int gh = f.height() / patch;
    const Intrinsics& k = f.camera.intrinsics;
    std::vector<TokenCenter> out(static_cast<std::size_t>(gw) * gh);
    for (int gy = 0; gy < gh; ++gy)
        for (int gx = 0; gx < gw; ++gx) {
            const int u = gx * patch + patch / 2;
            const int v = gy * patch + patch / 2;
            if (!f.depth.is_valid(u, v)) continue;
            const Vec3 pc = k.ray(u, v) * f.depth.values(u, v);
            out[static_cast<std::size_t>(gy) * gw + gx] = {true, f.camera.pose.apply(pc)};
        }
    return out;
}

AngleBin* bin_for(CorrespondenceResult& r, double angle)
{
    for (AngleBin& b : r.bins)
        if (angle >= b.lo && angle < b.hi) return &b;
    return nullptr;
}

// Queries of frame a that are visible in frame b, with their world points.
std::vector<std::pair<int, Vec3>> covisible_queries(const Frame& a, const Frame& b, const CorrespondenceOptions& o)
{
    std::vector<std::pair<int, Vec3>> out;
    const std::vector<TokenCenter> centers = lift_token_centers(a, o.patch);
    for (std::size_t t = 0; t < centers.size(); ++t) {
        if (!centers[t].valid) continue;
        const auto proj = project(centers[t].world, b.camera.intrinsics, b.camera.pose);
        if (!proj) continue;
        const int u = static_cast<int>(std::floor(proj->u + 0.5));
        const int v = static_cast<int>(std::floor(proj->v + 0.5));
        if (u < 0 || v < 0 || u >= b.width() || v >= b.height() || !b.depth.is_valid(u, v)) continue;
        const double zb = b.depth.values(u, v);
        if (std::abs(proj->z - zb) > o.visibility_tolerance * zb) continue;
        out.emplace_back(static_cast<int>(t), centers[t].world);
    }
    return out;
}

double cosine(std::span<const double> a, std::span<const double> b)
{
    double ab = 0.0, aa = 0.0, bb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ab += a[i] * b[i];
        aa += a[i] * a[i];
        bb += b[i] * b[i];
    }
    const double den = std::sqrt(aa) * std::sqrt(bb);
    return den > 0.0 ? ab / den : -std::numeric_limits<double>::infinity();
}

} // namespace

void correspondence_recall(const TokenGrid& tokens_a, const TokenGrid& tokens_b, const Frame& frame_a,
                           const Frame& frame_b, CorrespondenceResult& result, const CorrespondenceOptions& options)
{
    require(tokens_a.same_shape(tokens_b), "correspondence_recall: token grids differ in shape");
    require(tokens_a.grid_w * options.patch == frame_a.width() && tokens_a.grid_h * options.patch == frame_a.height(),
            "correspondence_recall: token grid does not tile the frame");
    const double angle = relative_pose(frame_a.camera.pose, frame_b.camera.pose).rotation_angle_deg();
    AngleBin* bin = bin_for(result, angle);
    if (!bin) return;
    const std::vector<TokenCenter> centers_b = lift_token_centers(frame_b, options.patch);
    for (const auto& [t, world] : covisible_queries(frame_a, frame_b, options)) {
        int best = -1;
        double best_sim = -std::numeric_limits<double>::infinity();
        for (int j = 0; j < tokens_b.count(); ++j) {
            const double s = cosine(tokens_a.token(t), tokens_b.token(j));
            if (s > best_sim) {
                best_sim = s;
                best = j;
            }
        }
        const bool lifted = best >= 0 && centers_b[static_cast<std::size_t>(best)].valid;
        bin->errors.push_back(lifted ? (centers_b[static_cast<std::size_t>(best)].world - world).norm()
                                     : std::numeric_limits<double>::infinity());
    }
}

void correspondence_ceiling(const Frame& frame_a, const Frame& frame_b, CorrespondenceResult& result,
                            const CorrespondenceOptions& options)
{
    const double angle = relative_pose(frame_a.camera.pose, frame_b.camera.pose).rotation_angle_deg();
    AngleBin* bin = bin_for(result, angle);
    if (!bin) return;
    const std::vector<TokenCenter> centers_b = lift_token_centers(frame_b, options.patch);
    for (const auto& [t, world] : covisible_queries(frame_a, frame_b, options)) {
        double best = std::numeric_limits<double>::infinity();
        for (const TokenCenter& c : centers_b)
            if (c.valid) best = std::min(best, (c.world - world).norm());
        bin->errors.push_back(best);
    }
}

namespace {

NormalMetrics from_angles(const std::vector<double>& angles)
{
    if (angles.empty()) throw EmptySupport("normal_metrics: no pixels shared by both masks");
    NormalMetrics m;
    m.count = angles.size();
    double sq = 0.0;
    std::size_t a11 = 0, a22 = 0, a30 = 0;
    // Thresholds are inclusive; the slack absorbs acos rounding at exact angles.
    constexpr double slack = 1e-9;
    for (double a : angles) {
        sq += a * a;
        a11 += a <= 11.25 + slack;
        a22 += a <= 22.5 + slack;
        a30 += a <= 30.0 + slack;
    }
    const double n = static_cast<double>(angles.size());
    m.rmse_deg = std::sqrt(sq / n);
    m.acc_11 = static_cast<double>(a11) / n;
    m.acc_22 = static_cast<double>(a22) / n;
    m.acc_30 = static_cast<double>(a30) / n;
    m.macc = (m.acc_11 + m.acc_22 + m.acc_30) / 3.0;
    return m;
}

} // namespace

NormalMetrics normal_metrics(const NormalMap& pred, const NormalMap& gt)
{
    require(pred.normals.same_shape(gt.normals), "normal_metrics: maps differ in size");
    std::vector<double> angles;
    for (std::size_t i = 0; i < gt.normals.size(); ++i)
        if (pred.valid[i] && gt.valid[i]) angles.push_back(angle_deg(pred.normals[i], gt.normals[i]));
    return from_angles(angles);
}

NormalMetrics normal_metrics(const std::vector<Vec3>& pred, const std::vector<Vec3>& gt)
{
    require(pred.size() == gt.size(), "normal_metrics: lists differ in length");
    std::vector<double> angles;
    for (std::size_t i = 0; i < gt.size(); ++i)
        if (pred[i].squaredNorm() > 0.0 && gt[i].squaredNorm() > 0.0) angles.push_back(angle_deg(pred[i], gt[i]));
    return from_angles(angles);
}

namespace {

Eigen::MatrixXd with_bias(const Eigen::MatrixXd& x)
{
    Eigen::MatrixXd a(x.rows(), x.cols() + 1);
    a.leftCols(x.cols()) = x;
    a.col(x.cols()).setOnes();
    return a;
}

} // namespace

Eigen::MatrixXd fit_ridge(const Eigen::MatrixXd& features, const Eigen::MatrixXd& targets, double lambda)
{
    require(lambda > 0.0, "fit_ridge: lambda must be positive");
    require(features.rows() == targets.rows() && features.rows() > 0, "fit_ridge: sample counts differ");
    const Eigen::MatrixXd a = with_bias(features);
    Eigen::MatrixXd gram = a.transpose() * a;
    gram.diagonal().array() += lambda;
    return gram.ldlt().solve(a.transpose() * targets);
}

Eigen::MatrixXd apply_ridge(const Eigen::MatrixXd& weights, const Eigen::MatrixXd& features)
{
    require(weights.rows() == features.cols() + 1, "apply_ridge: feature width does not match the fit");
    return with_bias(features) * weights;
}

ProbeResult linear_probe(ProbeTask task, const Eigen::MatrixXd& train_features, const Eigen::MatrixXd& train_targets,
                         const Eigen::MatrixXd& test_features, const Eigen::MatrixXd& test_targets, double lambda)
{
    const int dim = task == ProbeTask::depth ? 1 : 3;
    require(train_targets.cols() == dim && test_targets.cols() == dim, "linear_probe: target width mismatch");
    require(test_features.rows() == test_targets.rows() && test_features.rows() > 0, "linear_probe: empty test set");
    ProbeResult r;
    r.task = task;
    r.weights = fit_ridge(train_features, train_targets, lambda);
    r.predictions = apply_ridge(r.weights, test_features);
    if (task == ProbeTask::depth) {
        r.rmse = std::sqrt((r.predictions - test_targets).squaredNorm() / static_cast<double>(test_targets.rows()));
        return r;
    }
    std::vector<Vec3> pred, gt;
    for (Eigen::Index i = 0; i < r.predictions.rows(); ++i) {
        Vec3 p = r.predictions.row(i).transpose();
        const double n = p.norm();
        p = n > 0.0 ? Vec3(p / n) : Vec3::Zero();
        r.predictions.row(i) = p.transpose();
        pred.push_back(p);
        gt.push_back(test_targets.row(i).transpose());
    }
    r.normals = normal_metrics(pred, gt);
    r.rmse = r.normals.rmse_deg;
    return r;
}

std::vector<Box3> cluster_boxes(const std::vector<Vec3>& points, double cell, double padding, int min_points)
{
    require(cell > 0.0 && padding >= 0.0, "cluster_boxes: cell must be positive");
    std::map<VoxelKey, std::vector<std::size_t>> cells;
    for (std::size_t i = 0; i < points.size(); ++i) cells[voxel_of(points[i], cell)].push_back(i);

    std::map<VoxelKey, int> component;
    std::vector<std::vector<std::size_t>> groups;
    for (const auto& [seed_key, _] : cells) {
        if (component.count(seed_key)) continue;
        const int id = static_cast<int>(groups.size());
        groups.emplace_back();
        std::vector<VoxelKey> stack{seed_key};
        component[seed_key] = id;
        while (!stack.empty()) {
            const VoxelKey key = stack.back();
            stack.pop_back();
            const auto& members = cells.at(key);
            groups[id].insert(groups[id].end(), members.begin(), members.end());
            for (int dz = -1; dz <= 1; ++dz)
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) {
                        const VoxelKey nb{key.x + dx, key.y + dy, key.z + dz};
                        if (cells.count(nb) && !component.count(nb)) {
                            component[nb] = id;
                            stack.push_back(nb);
                        }
                    }
        }
    }
    std::stable_sort(groups.begin(), groups.end(),
                     [](const auto& a, const auto& b) { return a.size() > b.size(); });

    std::vector<Box3> boxes;
    for (const auto& g : groups) {
        if (static_cast<int>(g.size()) < min_points) continue;
        Box3 b{points[g[0]], points[g[0]]};
        for (std::size_t i : g) {
            b.min = b.min.cwiseMin(points[i]);
            b.max = b.max.cwiseMax(points[i]);
        }
        b.min.array() -= padding;
        b.max.array() += padding;
        boxes.push_back(b);
    }
    return boxes;
}

} // namespace geoemerge
