#include "advscene/map.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace advscene {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();

// 1-D squared distance transform (Felzenszwalb & Huttenlocher).
void dt_1d(const std::vector<double>& f, std::vector<double>& out, std::vector<int>& v,
           std::vector<double>& z) {
    const int n = static_cast<int>(f.size());
    out.resize(n);
    v.assign(n, 0);
    z.assign(n + 1, 0.0);
    int k = 0;
    v[0] = 0;
    z[0] = -kInf;
    z[1] = kInf;
    for (int q = 1; q < n; ++q) {
        if (f[q] == kInf && f[v[k]] == kInf) {
            continue;  // both parabolas at infinity, nothing to intersect
        }
        double s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * q - 2.0 * v[k]);
        while (s <= z[k]) {
            --k;
            s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * q - 2.0 * v[k]);
        }
        ++k;
        v[k] = q;
        z[k] = s;
        z[k + 1] = kInf;
    }
    k = 0;
    for (int q = 0; q < n; ++q) {
        while (z[k + 1] < q) ++k;
        const double dq = q - v[k];
        out[q] = f[v[k]] == kInf ? kInf : dq * dq + f[v[k]];
    }
}
}  // namespace

double Lane::length() const {
    double len = 0.0;
    for (size_t i = 1; i < pts.size(); ++i) len += (pts[i].pos - pts[i - 1].pos).norm();
    return len;
}

std::optional<std::pair<int, int>> DrivableGrid::cell_of(const Vec2& p) const {
    const int ix = static_cast<int>(std::floor((p.x - origin_x) / cell_m + 0.5));
    const int iy = static_cast<int>(std::floor((p.y - origin_y) / cell_m + 0.5));
    if (!in_bounds(ix, iy)) return std::nullopt;
    return std::make_pair(ix, iy);
}

std::optional<double> DistanceField::sample(const Vec2& p) const {
    if (empty()) return std::nullopt;
    const double fx = (p.x - origin_x) / cell_m;
    const double fy = (p.y - origin_y) / cell_m;
    if (fx < 0.0 || fy < 0.0 || fx > nx - 1 || fy > ny - 1) return std::nullopt;
    const int ix = std::min(static_cast<int>(fx), nx - 2 >= 0 ? nx - 2 : 0);
    const int iy = std::min(static_cast<int>(fy), ny - 2 >= 0 ? ny - 2 : 0);
    const double ax = fx - ix, ay = fy - iy;
    auto d = [&](int i, int j) { return dist[static_cast<size_t>(j) * nx + i]; };
    if (nx == 1 || ny == 1) return d(ix, iy);
    const double v00 = d(ix, iy), v10 = d(ix + 1, iy), v01 = d(ix, iy + 1), v11 = d(ix + 1, iy + 1);
    return (1 - ax) * (1 - ay) * v00 + ax * (1 - ay) * v10 + (1 - ax) * ay * v01 + ax * ay * v11;
}

Vec2 DistanceField::sample_grad(const Vec2& p) const {
    if (empty()) return {0.0, 0.0};
    const double fx = (p.x - origin_x) / cell_m;
    const double fy = (p.y - origin_y) / cell_m;
    if (fx < 0.0 || fy < 0.0 || fx > nx - 1 || fy > ny - 1 || nx < 2 || ny < 2) return {0.0, 0.0};
    const int ix = std::min(static_cast<int>(fx), nx - 2);
    const int iy = std::min(static_cast<int>(fy), ny - 2);
    const double ax = fx - ix, ay = fy - iy;
    auto d = [&](int i, int j) { return dist[static_cast<size_t>(j) * nx + i]; };
    const double v00 = d(ix, iy), v10 = d(ix + 1, iy), v01 = d(ix, iy + 1), v11 = d(ix + 1, iy + 1);
    if (!std::isfinite(v00) || !std::isfinite(v10) || !std::isfinite(v01) || !std::isfinite(v11)) {
        return {0.0, 0.0};
    }
    const double ddx = ((1 - ay) * (v10 - v00) + ay * (v11 - v01)) / cell_m;
    const double ddy = ((1 - ax) * (v01 - v00) + ax * (v11 - v10)) / cell_m;
    return {ddx, ddy};
}

void MapModel::build_distance_field() {
    field.nx = grid.nx;
    field.ny = grid.ny;
    field.origin_x = grid.origin_x;
    field.origin_y = grid.origin_y;
    field.cell_m = grid.cell_m;
    field.dist.assign(static_cast<size_t>(grid.nx) * grid.ny, kInf);
    if (grid.nx == 0 || grid.ny == 0) return;

    // squared distances in cell units: 0 at non-drivable cells
    std::vector<double> sq(field.dist.size());
    field.has_obstacle = false;
    for (size_t i = 0; i < sq.size(); ++i) {
        sq[i] = grid.cells[i] ? kInf : 0.0;
        if (!grid.cells[i]) field.has_obstacle = true;
    }
    if (!field.has_obstacle) return;  // field stays +inf: penalty identically 0

    std::vector<double> col(grid.ny), colOut, rowOut;
    std::vector<int> v;
    std::vector<double> z;
    for (int x = 0; x < grid.nx; ++x) {
        for (int y = 0; y < grid.ny; ++y) col[y] = sq[static_cast<size_t>(y) * grid.nx + x];
        dt_1d(col, colOut, v, z);
        for (int y = 0; y < grid.ny; ++y) sq[static_cast<size_t>(y) * grid.nx + x] = colOut[y];
    }
    std::vector<double> row(grid.nx);
    for (int y = 0; y < grid.ny; ++y) {
        for (int x = 0; x < grid.nx; ++x) row[x] = sq[static_cast<size_t>(y) * grid.nx + x];
        dt_1d(row, rowOut, v, z);
        for (int x = 0; x < grid.nx; ++x) {
            field.dist[static_cast<size_t>(y) * grid.nx + x] = std::sqrt(rowOut[x]) * grid.cell_m;
        }
    }
}

LaneProjection MapModel::project_onto_lane(int lane, const Vec2& p) const {
    const Lane& ln = lanes[lane];
    LaneProjection best;
    best.lane = lane;
    best.dist = kInf;
    double s_acc = 0.0;
    for (size_t i = 0; i + 1 < ln.pts.size(); ++i) {
        const Vec2 a = ln.pts[i].pos, b = ln.pts[i + 1].pos;
        const Vec2 ab = b - a;
        const double len2 = ab.norm_sq();
        const double seg_len = std::sqrt(len2);
        double t = len2 > 0.0 ? clamp((p - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
        const Vec2 q = a + ab * t;
        const double d = (p - q).norm();
        if (d < best.dist) {
            best.dist = d;
            best.s = s_acc + t * seg_len;
            best.closest = q;
            const double h = ln.pts[i].heading +
                             t * angle_diff(ln.pts[i + 1].heading, ln.pts[i].heading);
            best.lane_heading = normalize_angle(h);
            const Vec2 fwd{std::cos(best.lane_heading), std::sin(best.lane_heading)};
            best.lateral = fwd.cross(p - q);
        }
        s_acc += seg_len;
    }
    return best;
}

std::optional<LaneProjection> MapModel::nearest_lane(const Vec2& p, double heading) const {
    std::optional<LaneProjection> best;
    double best_cost = kInf;
    for (int i = 0; i < static_cast<int>(lanes.size()); ++i) {
        if (lanes[i].pts.size() < 2) continue;
        LaneProjection proj = project_onto_lane(i, p);
        double cost = proj.dist;
        if (std::isfinite(heading)) {
            // penalize opposing lanes so direction-aware queries stay on their side
            cost += std::abs(angle_diff(heading, proj.lane_heading)) * 2.0;
        }
        if (cost < best_cost) {
            best_cost = cost;
            if (std::isfinite(heading)) {
                proj.heading_err = angle_diff(heading, proj.lane_heading);
            }
            best = proj;
        }
    }
    return best;
}

LanePoint MapModel::point_at(int lane, double s) const {
    const Lane& ln = lanes[lane];
    if (s <= 0.0) return ln.pts.front();
    double acc = 0.0;
    for (size_t i = 0; i + 1 < ln.pts.size(); ++i) {
        const double seg = (ln.pts[i + 1].pos - ln.pts[i].pos).norm();
        if (acc + seg >= s) {
            const double t = seg > 0.0 ? (s - acc) / seg : 0.0;
            LanePoint out;
            out.pos = ln.pts[i].pos + (ln.pts[i + 1].pos - ln.pts[i].pos) * t;
            out.heading = normalize_angle(ln.pts[i].heading +
                                          t * angle_diff(ln.pts[i + 1].heading, ln.pts[i].heading));
            return out;
        }
        acc += seg;
    }
    return ln.pts.back();
}

std::vector<LanePoint> MapModel::path_from(int lane, double s, double dist, bool extend) const {
    std::vector<LanePoint> path;
    int cur = lane;
    double pos_s = s;      // arc position on the current lane
    double togo = dist;    // distance left to cover after the emitted point
    const double step = 1.0;
    int hops = 0;
    for (;;) {
        const Lane& ln = lanes[cur];
        const double len = ln.length();
        if (pos_s <= len) {
            path.push_back(point_at(cur, pos_s));
            if (togo <= 0.0) break;
            pos_s += step;
            togo -= step;
            continue;
        }
        if (ln.successors.empty() || hops++ >= 64) {
            if (!extend) {
                const LanePoint end = point_at(cur, len);
                if (path.empty() || (path.back().pos - end.pos).norm() > 1e-9) {
                    path.push_back(end);
                }
                break;
            }
            // extrapolate straight past the last point
            LanePoint last = path.empty() ? ln.pts.back() : path.back();
            const Vec2 fwd{std::cos(last.heading), std::sin(last.heading)};
            do {
                last.pos = last.pos + fwd * step;
                path.push_back(last);
                togo -= step;
            } while (togo > 0.0);
            break;
        }
        pos_s -= len;
        cur = ln.successors.front();
    }
    return path;
}

bool MapModel::drivable_at(const Vec2& p) const {
    const auto cell = grid.cell_of(p);
    if (!cell) return false;
    return grid.at(cell->first, cell->second) != 0;
}

double env_coll_pens(const Vec2& pos, const VehicleFootprint& fp, const MapModel& map) {
    if (!std::isfinite(pos.x) || !std::isfinite(pos.y)) {
        throw WorldError("env_coll_pens: non-finite position");
    }
    if (!map.field.has_obstacle) return 0.0;  // no non-drivable cells anywhere
    const auto d = map.field.sample(pos);
    if (!d) return 1.0;  // outside the grid: maximally offroad
    const double p = fp.disc_radius();
    if (!std::isfinite(*d)) return 0.0;
    return *d <= p ? 1.0 - *d / p : 0.0;
}

Vec2 env_coll_pens_grad(const Vec2& pos, const VehicleFootprint& fp, const MapModel& map) {
    const auto d = map.field.sample(pos);
    if (!d || !std::isfinite(*d)) return {0.0, 0.0};
    const double p = fp.disc_radius();
    if (*d > p) return {0.0, 0.0};
    const Vec2 dd = map.field.sample_grad(pos);
    return dd * (-1.0 / p);
}

}  // namespace advscene
