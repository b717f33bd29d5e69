#pragma once

// Evaluation protocols: box IoU grounding scores, multi-target F1,
// feature correspondence recall, surface-normal accuracy and closed-form
// linear probes on frozen features.

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "geoemerge/scenegen.hpp"
#include "geoemerge/tokens.hpp"

namespace geoemerge {

double iou3d(const Box3& a, const Box3& b);

enum class CaseKind { zero_target, single_target, multi_target };

struct GroundingCase {
    std::string id;
    std::vector<Box3> predicted;
    std::vector<Box3> truth;

    CaseKind kind() const;
};

// Fraction of single-target cases whose one prediction reaches IoU tau.
double grounding_accuracy(const std::vector<GroundingCase>& cases, double tau);

struct MatchCounts {
    int true_positive = 0;
    int false_positive = 0;
    int false_negative = 0;
    double f1 = 0.0;
};

MatchCounts match_case(const GroundingCase& c, double tau);
// Mean of the per-case F1 scores; 0 for an empty case list.
double multi_target_f1(const std::vector<GroundingCase>& cases, double tau);

// Minimum-cost assignment of a rows x cols cost matrix (rows <= cols is not
// required). Returns, for every row, the assigned column or -1.
std::vector<int> hungarian(const Eigen::MatrixXd& cost);

struct AngleBin {
    double lo = 0.0;
    double hi = 0.0;
    std::vector<double> errors; // metres, one per co-visible query
    bool empty() const { return errors.empty(); }
    double recall(double threshold) const;
};

struct CorrespondenceOptions {
    double threshold = 0.02;
    std::vector<double> bin_edges{0.0, 30.0, 60.0, 90.0, 120.0};
    int patch = 8;
    // Relative tolerance used to decide that a query is not occluded in b.
    double visibility_tolerance = 0.05;
};

struct CorrespondenceResult {
    std::vector<AngleBin> bins;

    void merge(const CorrespondenceResult& other);
    std::size_t queries() const;
};

CorrespondenceResult empty_correspondence(const CorrespondenceOptions& options = {});

// Token-center queries of frame a matched to frame b by cosine similarity of
// token features; the result is filed under the pair's relative rotation.
void correspondence_recall(const TokenGrid& tokens_a, const TokenGrid& tokens_b, const Frame& frame_a,
                           const Frame& frame_b, CorrespondenceResult& result,
                           const CorrespondenceOptions& options = {});

// Best achievable result: every query is matched to the frame-b token whose
// lifted center is closest to the query's ground-truth point.
void correspondence_ceiling(const Frame& frame_a, const Frame& frame_b, CorrespondenceResult& result,
                            const CorrespondenceOptions& options = {});

struct NormalMetrics {
    double rmse_deg = 0.0;
    double acc_11 = 0.0;
    double acc_22 = 0.0;
    double acc_30 = 0.0;
    double macc = 0.0;
    std::size_t count = 0;
};

NormalMetrics normal_metrics(const NormalMap& pred, const NormalMap& gt);
// Pairs where either vector is zero are skipped.
NormalMetrics normal_metrics(const std::vector<Vec3>& pred, const std::vector<Vec3>& gt);

inline constexpr double kProbeLambda = 1e-3;

// Minimises |[X 1] W - Y|^2 + lambda |W|^2. The last row of W is the bias.
Eigen::MatrixXd fit_ridge(const Eigen::MatrixXd& features, const Eigen::MatrixXd& targets,
                          double lambda = kProbeLambda);
Eigen::MatrixXd apply_ridge(const Eigen::MatrixXd& weights, const Eigen::MatrixXd& features);

enum class ProbeTask { depth, normals };

struct ProbeResult {
    ProbeTask task = ProbeTask::depth;
    Eigen::MatrixXd predictions; // test samples x target dim
    double rmse = 0.0;           // metres for depth, degrees for normals
    NormalMetrics normals;       // normals task only
    Eigen::MatrixXd weights;
};

// Rows of the feature matrices are tokens; depth targets have one column,
// normal targets three (unit vectors). Normal predictions are renormalized.
ProbeResult linear_probe(ProbeTask task, const Eigen::MatrixXd& train_features, const Eigen::MatrixXd& train_targets,
                         const Eigen::MatrixXd& test_features, const Eigen::MatrixXd& test_targets,
                         double lambda = kProbeLambda);

// Groups points into connected components of occupied cells (26-neighbour
// adjacency) and returns one padded axis-aligned box per component with at
// least min_points points, largest component first.
std::vector<Box3> cluster_boxes(const std::vector<Vec3>& points, double cell, double padding, int min_points = 1);

} // namespace geoemerge
