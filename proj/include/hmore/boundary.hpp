#pragma once

#include <optional>
#include <vector>

#include "hmore/kinematic.hpp"
#include "hmore/types.hpp"

namespace hmore {

struct EdgeMap {
    PointSet intensity_edges;  // magnitude discontinuities
    PointSet angular_edges;    // direction discontinuities
    PointSet edges;            // union, raster order
    double theta_i_used = 0.0;
};

/// Per-pixel discontinuity tests over the 8-neighbourhood:
///   intensity: max_j | |M_i| - |M_j| | >= edge_theta_i
///   angular:   max_j angle(M_i, M_j) >= edge_theta_a, only where both norms >= kStaticEps
/// With hp.edge_auto the intensity threshold is auto_intensity_threshold(flow).
EdgeMap extract_flow_edges(const FlowMap& flow, const Hyperparams& hp);

/// 90th percentile of the per-pixel maximum neighbour norm difference,
/// floored at kStaticEps.
double auto_intensity_threshold(const FlowMap& flow);

/// Mean over s of the distance to the nearest point of e. Throws
/// EmptyPointSet when either set is empty.
double exact_chamfer(const PointSet& s, const PointSet& e);

/// Nearest-neighbour index over a fixed point set.
class KdTree2 {
public:
    explicit KdTree2(const std::vector<Point2>& points);
    /// Squared distance to the nearest stored point.
    double nearest_squared(const Point2& q) const;
    std::size_t size() const { return points_.size(); }

private:
    struct Node {
        std::size_t point = 0;
        int left = -1;
        int right = -1;
        int axis = 0;
    };
    int build(std::vector<std::size_t>& idx, std::size_t lo, std::size_t hi, int depth);
    void search(int node, const Point2& q, double& best) const;

    std::vector<Point2> points_;
    std::vector<Node> nodes_;
    int root_ = -1;
};

struct PatchCell {
    double sum_sx = 0.0;
    double sum_sy = 0.0;
    std::size_t count_s = 0;
    double sum_ex = 0.0;
    double sum_ey = 0.0;
    std::size_t count_e = 0;

    std::optional<Point2> centroid_s() const;
    std::optional<Point2> centroid_e() const;
    bool co_occupied() const { return count_s > 0 && count_e > 0; }
};

/// Square cells of side `scale` tiling a width x height raster; cell (cx, cy)
/// holds points with floor(x / scale) = cx and floor(y / scale) = cy.
/// Points outside the raster are ignored.
struct PatchGrid {
    int scale = 0;
    int cols = 0;
    int rows = 0;
    std::vector<PatchCell> cells;  // row-major

    const PatchCell& cell(int cx, int cy) const {
        return cells[static_cast<std::size_t>(cy) * static_cast<std::size_t>(cols) + static_cast<std::size_t>(cx)];
    }
};

PatchGrid build_patch_grid(const PointSet& s, const PointSet& e, int scale, int width, int height);

struct PatchDistance {
    double value = 0.0;
    std::size_t co_occupied = 0;
    std::size_t total_cells = 0;
    bool valid = false;  // false when no cell holds both curves
};

/// Centroid-to-centroid distance averaged over co-occupied cells (or, with
/// all_cells, summed over them and divided by the full cell count).
PatchDistance patch_centroid_distance(const PatchGrid& grid,
                                      PatchNormalization norm = PatchNormalization::co_occupied);

struct BoundaryReport {
    double g = 0.0;
    std::vector<PatchDistance> per_scale;
    std::size_t edge_count = 0;
    double co_occupancy = 0.0;  // co-occupied / cells holding e, averaged over scales
    bool valid = false;         // false when the flow has no edges or no scale overlaps
};

/// Mean over scales of patch_centroid_distance(s, e).
BoundaryReport multiscale_patch_distance(const PointSet& s, const PointSet& e, const std::vector<int>& scales,
                                         int width, int height,
                                         PatchNormalization norm = PatchNormalization::co_occupied);

/// Boundary term: flow edges of `flow` against the human boundary e.
BoundaryReport boundary_constraint(const FlowMap& flow, const PointSet& boundary, const Hyperparams& hp);

/// Soft per-pixel edge weights in [0, 1] with their partial derivatives with
/// respect to the flow at the pixel and its 8 neighbours. Weights are exactly
/// zero for pixels whose discontinuities are clearly below threshold, and tend
/// to the hard edge indicator as tau -> 0.
struct SoftEdges {
    std::vector<double> weight;
    /// partial[9 * i + o] = d weight_i / d M_{i + offset(o)}; o = 4 is the pixel itself.
    std::vector<Vec2> partial;
};

SoftEdges soft_flow_edges(const FlowMap& flow, const Hyperparams& hp, double tau);

/// Differentiable boundary term built on soft edge weights: cell centroids are
/// weight-averaged and each cell's distance is weighted by o = W / (W + kSoftOccupancy),
/// W the cell's total edge weight; a scale's value is sum(o D) / (sum(o) + kSoftCellFloor).
/// Returns the value and d value / d flow.
SmoothValue soft_boundary_constraint(const FlowMap& flow, const PointSet& boundary, const Hyperparams& hp,
                                     double tau);

/// Weight of a cell's distance in the soft boundary term, W / (W + kSoftOccupancy).
inline constexpr double kSoftOccupancy = 0.1;
/// Added to the total cell weight of a scale, so the soft term grows from 0
/// as the first edges appear instead of jumping to a full cell distance.
inline constexpr double kSoftCellFloor = 0.05;

struct MorphOptions {
    int grid_size = 8;                 // control points per axis
    std::vector<int> scales{4, 8, 16};
    int max_iters = 400;
    double step_size = 1.0;
    double tolerance = 1e-7;           // relative objective decrease that ends the descent
    bool coarse_start = true;          // fit a 2 x 2 grid before the full one
};

struct MorphResult {
    int grid_size = 0;
    std::vector<Vec2> control;         // row-major grid_size x grid_size displacements
    PointSet moved;
    double initial_objective = 0.0;
    double final_objective = 0.0;
    std::vector<double> trace;         // objective per accepted iteration
    int iterations = 0;                // accepted steps over all grid levels
    bool converged = false;            // the last level stopped before max_iters
};

/// Soft multiscale patch-centroid distance between a moving point set and a
/// fixed target, with the gradient with respect to each moving point. Points
/// spread over cells with a tent kernel of width `scale`.
double soft_patch_distance(const std::vector<Point2>& moving, const std::vector<Point2>& target,
                           const std::vector<int>& scales, int width, int height, std::vector<Vec2>* grad);

/// Displacement of point p under a bilinear control grid spanning the raster.
Vec2 control_displacement(const std::vector<Vec2>& control, int grid_size, int width, int height, const Point2& p);

/// Deforms `moving` towards `target` by gradient descent on the soft
/// patch-centroid distance over a bilinear control-point grid. With
/// coarse_start a single bilinear cell is fitted first and its field seeds
/// the full grid; max_iters applies per level.
MorphResult morph_curve_fit(const PointSet& moving, const PointSet& target, int width, int height,
                            const MorphOptions& opts = {});

}  // namespace hmore
