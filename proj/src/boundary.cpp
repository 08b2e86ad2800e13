#include "hmore/boundary.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "hmore/parallel.hpp"

namespace hmore {

namespace {

constexpr std::array<int, 9> kDx{-1, 0, 1, -1, 0, 1, -1, 0, 1};
constexpr std::array<int, 9> kDy{-1, -1, -1, 0, 0, 0, 1, 1, 1};
constexpr int kSelf = 4;

// Norm smoothing for soft edges; keeps sqrt differentiable at zero flow.
constexpr double kNormSoft = 1e-3;

double deg2rad(double d) { return d * std::numbers::pi / 180.0; }

// Quintic smoothstep: 0 for z <= 0, 1 for z >= 1, C2 in between.
double smoothstep(double z) {
    if (z <= 0.0) {
        return 0.0;
    }
    if (z >= 1.0) {
        return 1.0;
    }
    return z * z * z * (z * (z * 6.0 - 15.0) + 10.0);
}

double smoothstep_d(double z) {
    if (z <= 0.0 || z >= 1.0) {
        return 0.0;
    }
    const double t = z * (1.0 - z);
    return 30.0 * t * t;
}

double max_norm_difference(const FlowMap& flow, int x, int y) {
    const double ni = flow.at(x, y).norm();
    double best = 0.0;
    for (int o = 0; o < 9; ++o) {
        if (o == kSelf) {
            continue;
        }
        const int nx = x + kDx[o];
        const int ny = y + kDy[o];
        if (!flow.contains(nx, ny)) {
            continue;
        }
        best = std::max(best, std::abs(ni - flow.at(nx, ny).norm()));
    }
    return best;
}

double edge_threshold(const FlowMap& flow, const Hyperparams& hp) {
    return hp.edge_auto ? auto_intensity_threshold(flow) : hp.edge_theta_i;
}

void check_scale(int scale) {
    if (scale < 2) {
        throw InvalidArgument("patch scale must be >= 2, got " + std::to_string(scale));
    }
}

struct CellIndex {
    int cols = 0;
    int rows = 0;
    int scale = 0;

    // -1 when the point lies outside the tiling.
    long of(double x, double y) const {
        const double fx = std::floor(x / scale);
        const double fy = std::floor(y / scale);
        if (fx < 0.0 || fy < 0.0 || fx >= cols || fy >= rows) {
            return -1;
        }
        return static_cast<long>(fy) * cols + static_cast<long>(fx);
    }
};

CellIndex make_cells(int scale, int width, int height) {
    check_scale(scale);
    if (width < 1 || height < 1) {
        throw InvalidArgument("raster dimensions must be >= 1");
    }
    return {(width + scale - 1) / scale, (height + scale - 1) / scale, scale};
}

}  // namespace

double auto_intensity_threshold(const FlowMap& flow) {
    const int w = flow.width();
    std::vector<double> diffs(flow.size());
    parallel_for(static_cast<std::size_t>(flow.height()), [&](std::size_t row) {
        const int y = static_cast<int>(row);
        for (int x = 0; x < w; ++x) {
            diffs[flow.index(x, y)] = max_norm_difference(flow, x, y);
        }
    });
    // nearest-rank 90th percentile
    const auto rank = static_cast<std::size_t>(std::ceil(0.9 * static_cast<double>(diffs.size())));
    const std::size_t k = rank == 0 ? 0 : rank - 1;
    std::nth_element(diffs.begin(), diffs.begin() + static_cast<std::ptrdiff_t>(k), diffs.end());
    return std::max(diffs[k], kStaticEps);
}

EdgeMap extract_flow_edges(const FlowMap& flow, const Hyperparams& hp) {
    const double theta_i = edge_threshold(flow, hp);
    if (!(theta_i > 0.0) || !(hp.edge_theta_a > 0.0)) {
        throw InvalidArgument("edge thresholds must be positive");
    }
    const double cos_a = std::cos(deg2rad(hp.edge_theta_a));
    const int w = flow.width();
    // bit 0: intensity, bit 1: angular
    std::vector<std::uint8_t> flags(flow.size(), 0);
    parallel_for(static_cast<std::size_t>(flow.height()), [&](std::size_t row) {
        const int y = static_cast<int>(row);
        for (int x = 0; x < w; ++x) {
            const Vec2& mi = flow.at(x, y);
            const double ni = mi.norm();
            std::uint8_t f = 0;
            for (int o = 0; o < 9; ++o) {
                if (o == kSelf) {
                    continue;
                }
                const int nx = x + kDx[o];
                const int ny = y + kDy[o];
                if (!flow.contains(nx, ny)) {
                    continue;
                }
                const Vec2& mj = flow.at(nx, ny);
                const double nj = mj.norm();
                if (std::abs(ni - nj) >= theta_i) {
                    f |= 1;
                }
                if (ni >= kStaticEps && nj >= kStaticEps) {
                    const double c = mi.dot(mj) / (ni * nj);
                    if (c <= cos_a) {
                        f |= 2;
                    }
                }
            }
            flags[flow.index(x, y)] = f;
        }
    });

    EdgeMap out;
    out.theta_i_used = theta_i;
    for (int y = 0; y < flow.height(); ++y) {
        for (int x = 0; x < w; ++x) {
            const std::uint8_t f = flags[flow.index(x, y)];
            const Point2 p(x, y);
            if (f & 1) {
                out.intensity_edges.points.push_back(p);
            }
            if (f & 2) {
                out.angular_edges.points.push_back(p);
            }
            if (f != 0) {
                out.edges.points.push_back(p);
            }
        }
    }
    return out;
}

KdTree2::KdTree2(const std::vector<Point2>& points) : points_(points) {
    if (points_.empty()) {
        throw EmptyPointSet("nearest-neighbour index over an empty point set");
    }
    std::vector<std::size_t> idx(points_.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    nodes_.reserve(points_.size());
    root_ = build(idx, 0, idx.size(), 0);
}

int KdTree2::build(std::vector<std::size_t>& idx, std::size_t lo, std::size_t hi, int depth) {
    if (lo >= hi) {
        return -1;
    }
    const int axis = depth % 2;
    const std::size_t mid = lo + (hi - lo) / 2;
    auto coord = [&](std::size_t i) { return axis == 0 ? points_[i].x : points_[i].y; };
    std::nth_element(idx.begin() + static_cast<std::ptrdiff_t>(lo), idx.begin() + static_cast<std::ptrdiff_t>(mid),
                     idx.begin() + static_cast<std::ptrdiff_t>(hi),
                     [&](std::size_t a, std::size_t b) { return coord(a) < coord(b); });
    const int node = static_cast<int>(nodes_.size());
    nodes_.push_back({idx[mid], -1, -1, axis});
    const int left = build(idx, lo, mid, depth + 1);
    const int right = build(idx, mid + 1, hi, depth + 1);
    nodes_[static_cast<std::size_t>(node)].left = left;
    nodes_[static_cast<std::size_t>(node)].right = right;
    return node;
}

void KdTree2::search(int node, const Point2& q, double& best) const {
    if (node < 0) {
        return;
    }
    const Node& n = nodes_[static_cast<std::size_t>(node)];
    const Point2& p = points_[n.point];
    const double dx = q.x - p.x;
    const double dy = q.y - p.y;
    const double d2 = dx * dx + dy * dy;
    if (d2 < best) {
        best = d2;
    }
    const double diff = n.axis == 0 ? dx : dy;
    const int near = diff < 0.0 ? n.left : n.right;
    const int far = diff < 0.0 ? n.right : n.left;
    search(near, q, best);
    if (diff * diff <= best) {
        search(far, q, best);
    }
}

double KdTree2::nearest_squared(const Point2& q) const {
    double best = std::numeric_limits<double>::infinity();
    search(root_, q, best);
    return best;
}

double exact_chamfer(const PointSet& s, const PointSet& e) {
    if (s.empty() || e.empty()) {
        throw EmptyPointSet("chamfer distance needs two non-empty point sets");
    }
    const KdTree2 tree(e.points);
    const double total =
        ordered_sum(s.size(), [&](std::size_t i) { return std::sqrt(tree.nearest_squared(s.points[i])); });
    return total / static_cast<double>(s.size());
}

std::optional<Point2> PatchCell::centroid_s() const {
    if (count_s == 0) {
        return std::nullopt;
    }
    const auto n = static_cast<double>(count_s);
    return Point2(sum_sx / n, sum_sy / n);
}

std::optional<Point2> PatchCell::centroid_e() const {
    if (count_e == 0) {
        return std::nullopt;
    }
    const auto n = static_cast<double>(count_e);
    return Point2(sum_ex / n, sum_ey / n);
}

PatchGrid build_patch_grid(const PointSet& s, const PointSet& e, int scale, int width, int height) {
    const CellIndex ci = make_cells(scale, width, height);
    PatchGrid grid;
    grid.scale = scale;
    grid.cols = ci.cols;
    grid.rows = ci.rows;
    grid.cells.assign(static_cast<std::size_t>(ci.cols) * static_cast<std::size_t>(ci.rows), PatchCell{});
    for (const Point2& p : s.points) {
        const long c = ci.of(p.x, p.y);
        if (c < 0) {
            continue;
        }
        auto& cell = grid.cells[static_cast<std::size_t>(c)];
        cell.sum_sx += p.x;
        cell.sum_sy += p.y;
        ++cell.count_s;
    }
    for (const Point2& p : e.points) {
        const long c = ci.of(p.x, p.y);
        if (c < 0) {
            continue;
        }
        auto& cell = grid.cells[static_cast<std::size_t>(c)];
        cell.sum_ex += p.x;
        cell.sum_ey += p.y;
        ++cell.count_e;
    }
    return grid;
}

PatchDistance patch_centroid_distance(const PatchGrid& grid, PatchNormalization norm) {
    PatchDistance out;
    out.total_cells = grid.cells.size();
    double total = 0.0;
    for (const PatchCell& cell : grid.cells) {
        if (!cell.co_occupied()) {
            continue;
        }
        // Single rounding of the centroid difference: exact for equal counts
        // and integer sums.
        const auto ns = static_cast<double>(cell.count_s);
        const auto ne = static_cast<double>(cell.count_e);
        const double dx = (cell.sum_sx * ne - cell.sum_ex * ns) / (ns * ne);
        const double dy = (cell.sum_sy * ne - cell.sum_ey * ns) / (ns * ne);
        total += std::hypot(dx, dy);
        ++out.co_occupied;
    }
    if (out.co_occupied == 0) {
        return out;
    }
    out.valid = true;
    const std::size_t denom = norm == PatchNormalization::co_occupied ? out.co_occupied : out.total_cells;
    out.value = total / static_cast<double>(denom);
    return out;
}

BoundaryReport multiscale_patch_distance(const PointSet& s, const PointSet& e, const std::vector<int>& scales,
                                         int width, int height, PatchNormalization norm) {
    if (scales.empty()) {
        throw InvalidArgument("at least one patch scale is required");
    }
    BoundaryReport out;
    out.edge_count = s.size();
    double sum = 0.0;
    double occupancy = 0.0;
    for (int scale : scales) {
        const PatchGrid grid = build_patch_grid(s, e, scale, width, height);
        const PatchDistance d = patch_centroid_distance(grid, norm);
        std::size_t with_e = 0;
        for (const PatchCell& c : grid.cells) {
            with_e += c.count_e > 0 ? 1 : 0;
        }
        occupancy += with_e == 0 ? 0.0 : static_cast<double>(d.co_occupied) / static_cast<double>(with_e);
        sum += d.value;
        out.valid = out.valid || d.valid;
        out.per_scale.push_back(d);
    }
    const auto n = static_cast<double>(scales.size());
    out.g = sum / n;
    out.co_occupancy = occupancy / n;
    return out;
}

BoundaryReport boundary_constraint(const FlowMap& flow, const PointSet& boundary, const Hyperparams& hp) {
    if (boundary.empty()) {
        throw EmptyPointSet("boundary curve is empty");
    }
    const EdgeMap edges = extract_flow_edges(flow, hp);
    BoundaryReport out = multiscale_patch_distance(edges.edges, boundary, hp.scales, flow.width(), flow.height(),
                                                   hp.patch_normalization);
    out.valid = out.valid && !edges.edges.empty();
    return out;
}

SoftEdges soft_flow_edges(const FlowMap& flow, const Hyperparams& hp, double tau) {
    if (!(tau > 0.0)) {
        throw InvalidArgument("surrogate sharpness tau must be > 0");
    }
    const double theta_i = edge_threshold(flow, hp);
    const double tau_i = tau * theta_i;
    const double gate = tau * theta_i;
    const double gate2 = gate * gate;
    const double cos_a = std::cos(deg2rad(hp.edge_theta_a));
    // angular step width; keeps parallel neighbours at weight 0 for tau < 1
    const double tau_a = tau * (1.0 - cos_a);
    const int w = flow.width();
    const std::size_t n = flow.size();

    // per-pixel smoothed norm pieces
    std::vector<double> r(n);
    std::vector<double> g(n);
    std::vector<Vec2> dg(n);
    for (std::size_t i = 0; i < n; ++i) {
        const Vec2& m = flow[i];
        const double m2 = m.squared_norm();
        r[i] = std::sqrt(m2 + kNormSoft * kNormSoft);
        g[i] = m2 / (m2 + gate2);
        const double k = 2.0 * gate2 / ((m2 + gate2) * (m2 + gate2));
        dg[i] = Vec2(k * m.dx, k * m.dy);
    }

    SoftEdges out;
    out.weight.assign(n, 0.0);
    out.partial.assign(9 * n, Vec2{});
    parallel_for(static_cast<std::size_t>(flow.height()), [&](std::size_t row) {
        const int y = static_cast<int>(row);
        std::array<double, 9> f{};
        std::array<Vec2, 9> df_self{};
        std::array<Vec2, 9> df_nbr{};
        for (int x = 0; x < w; ++x) {
            const std::size_t i = flow.index(x, y);
            const Vec2& mi = flow[i];
            const double ni = r[i] - kNormSoft;
            const Vec2 dni(mi.dx / r[i], mi.dy / r[i]);
            for (int o = 0; o < 9; ++o) {
                f[o] = 1.0;
                df_self[o] = Vec2{};
                df_nbr[o] = Vec2{};
                const int nx = x + kDx[o];
                const int ny = y + kDy[o];
                if (o == kSelf || !flow.contains(nx, ny)) {
                    continue;
                }
                const std::size_t j = flow.index(nx, ny);
                const Vec2& mj = flow[j];

                // intensity
                const double diff = ni - (r[j] - kNormSoft);
                const double root = std::sqrt(diff * diff + tau_i * tau_i);
                const double zi = (root - theta_i) / (2.0 * tau_i);
                const double p_i = smoothstep(zi);
                const double dp_i = smoothstep_d(zi) / (2.0 * tau_i) * (diff / root);
                const Vec2 dpi_self(dp_i * dni.dx, dp_i * dni.dy);
                const Vec2 dpi_nbr(-dp_i * mj.dx / r[j], -dp_i * mj.dy / r[j]);

                // angular, gated by both magnitudes
                const double rr = r[i] * r[j];
                const double c = mi.dot(mj) / rr;
                const double za = (cos_a - c + tau_a) / (2.0 * tau_a);
                const double q = smoothstep(za);
                const double dq = -smoothstep_d(za) / (2.0 * tau_a);
                const double gg = g[i] * g[j];
                const double p_a = q * gg;
                const double ri2 = r[i] * r[i];
                const double rj2 = r[j] * r[j];
                const Vec2 dc_self(mj.dx / rr - c * mi.dx / ri2, mj.dy / rr - c * mi.dy / ri2);
                const Vec2 dc_nbr(mi.dx / rr - c * mj.dx / rj2, mi.dy / rr - c * mj.dy / rj2);
                const Vec2 dpa_self(dq * dc_self.dx * gg + q * dg[i].dx * g[j],
                                    dq * dc_self.dy * gg + q * dg[i].dy * g[j]);
                const Vec2 dpa_nbr(dq * dc_nbr.dx * gg + q * g[i] * dg[j].dx,
                                   dq * dc_nbr.dy * gg + q * g[i] * dg[j].dy);

                f[o] = (1.0 - p_i) * (1.0 - p_a);
                df_self[o] = Vec2(-(1.0 - p_a) * dpi_self.dx - (1.0 - p_i) * dpa_self.dx,
                                  -(1.0 - p_a) * dpi_self.dy - (1.0 - p_i) * dpa_self.dy);
                df_nbr[o] = Vec2(-(1.0 - p_a) * dpi_nbr.dx - (1.0 - p_i) * dpa_nbr.dx,
                                 -(1.0 - p_a) * dpi_nbr.dy - (1.0 - p_i) * dpa_nbr.dy);
            }
            // products of all factors but one
            std::array<double, 10> prefix{};
            std::array<double, 10> suffix{};
            prefix[0] = 1.0;
            for (int o = 0; o < 9; ++o) {
                prefix[o + 1] = prefix[o] * f[o];
            }
            suffix[9] = 1.0;
            for (int o = 8; o >= 0; --o) {
                suffix[o] = suffix[o + 1] * f[o];
            }
            out.weight[i] = 1.0 - prefix[9];
            double sx = 0.0;
            double sy = 0.0;
            for (int o = 0; o < 9; ++o) {
                if (o == kSelf) {
                    continue;
                }
                const double others = prefix[o] * suffix[o + 1];
                sx -= others * df_self[o].dx;
                sy -= others * df_self[o].dy;
                out.partial[9 * i + o] = Vec2(-others * df_nbr[o].dx, -others * df_nbr[o].dy);
            }
            out.partial[9 * i + kSelf] = Vec2(sx, sy);
        }
    });
    return out;
}

SmoothValue soft_boundary_constraint(const FlowMap& flow, const PointSet& boundary, const Hyperparams& hp,
                                     double tau) {
    if (boundary.empty()) {
        throw EmptyPointSet("boundary curve is empty");
    }
    const SoftEdges soft = soft_flow_edges(flow, hp, tau);
    const int w = flow.width();
    const int h = flow.height();
    const std::size_t n = flow.size();
    std::vector<double> dvalue_dw(n, 0.0);
    double value = 0.0;

    for (int scale : hp.scales) {
        const CellIndex ci = make_cells(scale, w, h);
        const std::size_t ncell = static_cast<std::size_t>(ci.cols) * static_cast<std::size_t>(ci.rows);
        struct Cell {
            double ex = 0.0, ey = 0.0;
            std::size_t ne = 0;
            double W = 0.0, sx = 0.0, sy = 0.0;
            double D = 0.0, o = 0.0, cx = 0.0, cy = 0.0;
        };
        std::vector<Cell> cells(ncell);
        for (const Point2& p : boundary.points) {
            const long c = ci.of(p.x, p.y);
            if (c < 0) {
                continue;
            }
            auto& cell = cells[static_cast<std::size_t>(c)];
            cell.ex += p.x;
            cell.ey += p.y;
            ++cell.ne;
        }
        // each band of cell rows accumulates its own pixels in raster order
        parallel_for(static_cast<std::size_t>(ci.rows), [&](std::size_t band) {
            const int y0 = static_cast<int>(band) * scale;
            const int y1 = std::min(h, y0 + scale);
            for (int y = y0; y < y1; ++y) {
                for (int x = 0; x < w; ++x) {
                    const double wt = soft.weight[flow.index(x, y)];
                    if (wt == 0.0) {
                        continue;
                    }
                    auto& cell = cells[band * static_cast<std::size_t>(ci.cols) + static_cast<std::size_t>(x / scale)];
                    if (cell.ne == 0) {
                        continue;
                    }
                    cell.W += wt;
                    cell.sx += wt * x;
                    cell.sy += wt * y;
                }
            }
        });
        double A = 0.0;
        double B = 0.0;
        for (auto& cell : cells) {
            if (cell.ne == 0 || cell.W == 0.0) {
                continue;
            }
            const auto ne = static_cast<double>(cell.ne);
            cell.cx = cell.sx / cell.W - cell.ex / ne;
            cell.cy = cell.sy / cell.W - cell.ey / ne;
            cell.D = std::hypot(cell.cx, cell.cy);
            cell.o = cell.W / (cell.W + kSoftOccupancy);
            A += cell.o * cell.D;
            B += cell.o;
        }
        if (B == 0.0) {
            continue;
        }
        B += kSoftCellFloor;
        const double v = A / B;
        value += v;
        parallel_for(static_cast<std::size_t>(h), [&](std::size_t row) {
            const int y = static_cast<int>(row);
            for (int x = 0; x < w; ++x) {
                const std::size_t i = flow.index(x, y);
                const long c = ci.of(x, y);
                const Cell& cell = cells[static_cast<std::size_t>(c)];
                if (cell.ne == 0 || cell.W == 0.0) {
                    continue;
                }
                const double kappa_term = kSoftOccupancy / ((cell.W + kSoftOccupancy) * (cell.W + kSoftOccupancy));
                double d = (cell.D - v) / B * kappa_term;
                if (cell.D > 0.0) {
                    const double mx = cell.sx / cell.W;
                    const double my = cell.sy / cell.W;
                    d += cell.o / B * (cell.cx * (x - mx) + cell.cy * (y - my)) / (cell.D * cell.W);
                }
                dvalue_dw[i] += d;
            }
        });
    }
    const auto ns = static_cast<double>(hp.scales.size());
    SmoothValue out;
    out.value = value / ns;
    out.gradient = FlowMap(w, h);
    parallel_for(static_cast<std::size_t>(h), [&](std::size_t row) {
        const int y = static_cast<int>(row);
        for (int x = 0; x < w; ++x) {
            double gx = 0.0;
            double gy = 0.0;
            for (int o = 0; o < 9; ++o) {
                const int nx = x + kDx[o];
                const int ny = y + kDy[o];
                if (!flow.contains(nx, ny)) {
                    continue;
                }
                const std::size_t j = flow.index(nx, ny);
                const double dj = dvalue_dw[j];
                if (dj == 0.0) {
                    continue;
                }
                // pixel (x, y) sits at offset 8 - o as seen from j
                const Vec2& pj = soft.partial[9 * j + static_cast<std::size_t>(8 - o)];
                gx += dj * pj.dx;
                gy += dj * pj.dy;
            }
            out.gradient.set(flow.index(x, y), Vec2(gx / ns, gy / ns));
        }
    });
    return out;
}

Vec2 control_displacement(const std::vector<Vec2>& control, int grid_size, int width, int height, const Point2& p) {
    const double sx = static_cast<double>(width - 1) / (grid_size - 1);
    const double sy = static_cast<double>(height - 1) / (grid_size - 1);
    const double u = std::clamp(p.x / sx, 0.0, static_cast<double>(grid_size - 1));
    const double v = std::clamp(p.y / sy, 0.0, static_cast<double>(grid_size - 1));
    const int i0 = std::min(static_cast<int>(u), grid_size - 2);
    const int j0 = std::min(static_cast<int>(v), grid_size - 2);
    const double a = u - i0;
    const double b = v - j0;
    auto at = [&](int i, int j) -> const Vec2& {
        return control[static_cast<std::size_t>(j) * static_cast<std::size_t>(grid_size) + static_cast<std::size_t>(i)];
    };
    const double w00 = (1 - a) * (1 - b);
    const double w10 = a * (1 - b);
    const double w01 = (1 - a) * b;
    const double w11 = a * b;
    return Vec2(w00 * at(i0, j0).dx + w10 * at(i0 + 1, j0).dx + w01 * at(i0, j0 + 1).dx + w11 * at(i0 + 1, j0 + 1).dx,
                w00 * at(i0, j0).dy + w10 * at(i0 + 1, j0).dy + w01 * at(i0, j0 + 1).dy + w11 * at(i0 + 1, j0 + 1).dy);
}

double soft_patch_distance(const std::vector<Point2>& moving, const std::vector<Point2>& target,
                           const std::vector<int>& scales, int width, int height, std::vector<Vec2>* grad) {
    if (moving.empty() || target.empty()) {
        throw EmptyPointSet("soft patch distance needs two non-empty point sets");
    }
    if (scales.empty()) {
        throw InvalidArgument("at least one patch scale is required");
    }
    std::vector<double> gx(moving.size(), 0.0);
    std::vector<double> gy(moving.size(), 0.0);
    double value = 0.0;
    for (int scale : scales) {
        const CellIndex ci = make_cells(scale, width, height);
        const std::size_t ncell = static_cast<std::size_t>(ci.cols) * static_cast<std::size_t>(ci.rows);
        struct Cell {
            double ex = 0.0, ey = 0.0, we = 0.0;
            double W = 0.0, sx = 0.0, sy = 0.0;
            double D = 0.0, o = 0.0, cx = 0.0, cy = 0.0;
            double gsx = 0.0, gsy = 0.0, gw = 0.0;
        };
        std::vector<Cell> cells(ncell);
        // tent kernel over cell centres: up to 2 x 2 cells per point
        auto visit = [&](const Point2& p, auto&& fn) {
            const double u = p.x / scale - 0.5;
            const double v = p.y / scale - 0.5;
            const double fu = std::floor(u);
            const double fv = std::floor(v);
            for (int dj = 0; dj < 2; ++dj) {
                for (int di = 0; di < 2; ++di) {
                    const double cxf = fu + di;
                    const double cyf = fv + dj;
                    if (cxf < 0 || cyf < 0 || cxf >= ci.cols || cyf >= ci.rows) {
                        continue;
                    }
                    const double ax = 1.0 - std::abs(u - cxf);
                    const double ay = 1.0 - std::abs(v - cyf);
                    if (ax <= 0.0 || ay <= 0.0) {
                        continue;
                    }
                    const double sgx = u >= cxf ? -1.0 : 1.0;
                    const double sgy = v >= cyf ? -1.0 : 1.0;
                    const std::size_t c = static_cast<std::size_t>(cyf) * static_cast<std::size_t>(ci.cols) +
                                          static_cast<std::size_t>(cxf);
                    // weight and its gradient in p
                    fn(c, ax * ay, sgx * ay / scale, sgy * ax / scale);
                }
            }
        };
        for (const Point2& p : target) {
            visit(p, [&](std::size_t c, double wt, double, double) {
                cells[c].ex += wt * p.x;
                cells[c].ey += wt * p.y;
                cells[c].we += wt;
            });
        }
        for (const Point2& p : moving) {
            visit(p, [&](std::size_t c, double wt, double, double) {
                Cell& cell = cells[c];
                if (cell.we == 0.0) {
                    return;
                }
                cell.W += wt;
                cell.sx += wt * p.x;
                cell.sy += wt * p.y;
            });
        }
        double A = 0.0;
        double B = 0.0;
        for (auto& cell : cells) {
            if (cell.we == 0.0 || cell.W == 0.0) {
                continue;
            }
            cell.cx = cell.sx / cell.W - cell.ex / cell.we;
            cell.cy = cell.sy / cell.W - cell.ey / cell.we;
            cell.D = std::hypot(cell.cx, cell.cy);
            cell.o = cell.W / (cell.W + kSoftOccupancy);
            A += cell.o * cell.D;
            B += cell.o;
        }
        if (B == 0.0) {
            continue;
        }
        B += kSoftCellFloor;
        const double v = A / B;
        value += v;
        if (!grad) {
            continue;
        }
        for (auto& cell : cells) {
            if (cell.we == 0.0 || cell.W == 0.0) {
                continue;
            }
            const double kappa_term = kSoftOccupancy / ((cell.W + kSoftOccupancy) * (cell.W + kSoftOccupancy));
            cell.gw = (cell.D - v) / B * kappa_term;
            if (cell.D > 0.0) {
                const double k = cell.o / (B * cell.D * cell.W);
                cell.gsx = k * cell.cx;
                cell.gsy = k * cell.cy;
                cell.gw -= k * (cell.cx * cell.sx + cell.cy * cell.sy) / cell.W;
            }
        }
        for (std::size_t m = 0; m < moving.size(); ++m) {
            const Point2& p = moving[m];
            visit(p, [&](std::size_t c, double wt, double dwx, double dwy) {
                const Cell& cell = cells[c];
                if (cell.we == 0.0 || cell.W == 0.0) {
                    return;
                }
                const double dw = cell.gsx * p.x + cell.gsy * p.y + cell.gw;
                gx[m] += wt * cell.gsx + dw * dwx;
                gy[m] += wt * cell.gsy + dw * dwy;
            });
        }
    }
    const auto ns = static_cast<double>(scales.size());
    if (grad) {
        grad->resize(moving.size());
        for (std::size_t m = 0; m < moving.size(); ++m) {
            (*grad)[m] = Vec2(gx[m] / ns, gy[m] / ns);
        }
    }
    return value / ns;
}

namespace {

struct Stencil {
    std::array<std::size_t, 4> idx;
    std::array<double, 4> wt;
};

// Bilinear weights of every point on a gs x gs control grid.
std::vector<Stencil> control_stencils(const std::vector<Point2>& points, int gs, int width, int height) {
    std::vector<Stencil> out(points.size());
    const double sx = static_cast<double>(width - 1) / (gs - 1);
    const double sy = static_cast<double>(height - 1) / (gs - 1);
    auto id = [gs](int i, int j) { return static_cast<std::size_t>(j) * static_cast<std::size_t>(gs) + static_cast<std::size_t>(i); };
    for (std::size_t m = 0; m < points.size(); ++m) {
        const Point2& p = points[m];
        const double u = std::clamp(p.x / sx, 0.0, static_cast<double>(gs - 1));
        const double v = std::clamp(p.y / sy, 0.0, static_cast<double>(gs - 1));
        const int i0 = std::min(static_cast<int>(u), gs - 2);
        const int j0 = std::min(static_cast<int>(v), gs - 2);
        const double a = u - i0;
        const double b = v - j0;
        out[m] = {{id(i0, j0), id(i0 + 1, j0), id(i0, j0 + 1), id(i0 + 1, j0 + 1)},
                  {(1 - a) * (1 - b), a * (1 - b), (1 - a) * b, a * b}};
    }
    return out;
}

}  // namespace

MorphResult morph_curve_fit(const PointSet& moving, const PointSet& target, int width, int height,
                            const MorphOptions& opts) {
    if (moving.empty() || target.empty()) {
        throw EmptyPointSet("morph needs two non-empty curves");
    }
    if (opts.grid_size < 2 || opts.max_iters < 1 || !(opts.step_size > 0.0) || !(opts.tolerance > 0.0)) {
        throw InvalidArgument("invalid morph options");
    }
    const std::size_t np = moving.size();

    MorphResult res;
    // A single bilinear cell first: per-point gradients at the fine level pull
    // the curve into sliding along itself before the bulk motion is found.
    std::vector<int> levels{opts.grid_size};
    if (opts.coarse_start && opts.grid_size > 2) {
        levels.insert(levels.begin(), 2);
    }
    std::vector<Vec2> control;
    int prev_gs = 0;
    double f = 0.0;
    for (const int gs : levels) {
        const std::size_t nc = static_cast<std::size_t>(gs) * static_cast<std::size_t>(gs);
        const std::vector<Stencil> stencil = control_stencils(moving.points, gs, width, height);
        auto apply = [&](const std::vector<Vec2>& ctrl) {
            std::vector<Point2> out(np);
            for (std::size_t m = 0; m < np; ++m) {
                double dx = 0.0;
                double dy = 0.0;
                for (int k = 0; k < 4; ++k) {
                    dx += stencil[m].wt[k] * ctrl[stencil[m].idx[k]].dx;
                    dy += stencil[m].wt[k] * ctrl[stencil[m].idx[k]].dy;
                }
                out[m] = Point2(moving.points[m].x + dx, moving.points[m].y + dy);
            }
            return out;
        };
        auto evaluate = [&](const std::vector<Vec2>& ctrl, std::vector<Vec2>* grad) {
            const std::vector<Point2> pts = apply(ctrl);
            std::vector<Vec2> gp;
            const double v = soft_patch_distance(pts, target.points, opts.scales, width, height, grad ? &gp : nullptr);
            if (grad) {
                std::vector<double> gx(nc, 0.0);
                std::vector<double> gy(nc, 0.0);
                for (std::size_t m = 0; m < np; ++m) {
                    for (int k = 0; k < 4; ++k) {
                        gx[stencil[m].idx[k]] += stencil[m].wt[k] * gp[m].dx;
                        gy[stencil[m].idx[k]] += stencil[m].wt[k] * gp[m].dy;
                    }
                }
                grad->resize(nc);
                for (std::size_t c = 0; c < nc; ++c) {
                    (*grad)[c] = Vec2(gx[c], gy[c]);
                }
            }
            return v;
        };

        // carry the previous level's field over by sampling it at the new nodes
        std::vector<Vec2> next(nc);
        if (prev_gs > 0) {
            for (int j = 0; j < gs; ++j) {
                for (int i = 0; i < gs; ++i) {
                    const Point2 node(static_cast<double>(i) * (width - 1) / (gs - 1),
                                      static_cast<double>(j) * (height - 1) / (gs - 1));
                    next[static_cast<std::size_t>(j) * static_cast<std::size_t>(gs) + static_cast<std::size_t>(i)] =
                        control_displacement(control, prev_gs, width, height, node);
                }
            }
        }
        control = std::move(next);
        prev_gs = gs;

        std::vector<Vec2> grad;
        f = evaluate(control, &grad);
        if (res.grid_size == 0) {
            res.initial_objective = f;
        }
        res.grid_size = gs;
        res.converged = false;
        double t = opts.step_size;
        for (int it = 0; it < opts.max_iters; ++it) {
            double g2 = 0.0;
            for (const Vec2& g : grad) {
                g2 += g.squared_norm();
            }
            if (f == 0.0 || g2 == 0.0) {
                res.converged = true;
                break;
            }
            // Armijo backtracking along the negative gradient
            bool accepted = false;
            std::vector<Vec2> trial(nc);
            double ft = f;
            for (int bt = 0; bt < 40; ++bt) {
                for (std::size_t c = 0; c < nc; ++c) {
                    trial[c] = Vec2(control[c].dx - t * grad[c].dx, control[c].dy - t * grad[c].dy);
                }
                ft = evaluate(trial, nullptr);
                if (ft <= f - 1e-4 * t * g2) {
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if (!accepted) {
                res.converged = true;
                break;
            }
            const double drop = f - ft;
            control = trial;
            f = evaluate(control, &grad);
            res.trace.push_back(f);
            ++res.iterations;
            t *= 2.0;
            if (drop <= opts.tolerance * std::max(res.initial_objective, 1e-12)) {
                res.converged = true;
                break;
            }
        }
        res.moved.points = apply(control);
    }
    res.control = std::move(control);
    res.final_objective = f;
    return res;
}

}  // namespace hmore
