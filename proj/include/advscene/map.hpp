#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "advscene/geometry.hpp"
#include "advscene/world.hpp"

namespace advscene {

struct LanePoint {
    Vec2 pos;
    double heading = 0.0;
};

/// Centerline polyline with per-point heading plus graph edges.
struct Lane {
    std::vector<LanePoint> pts;
    double width = 3.5;             // m
    std::vector<int> successors;    // lane indices reachable at the end
    std::vector<int> adjacent;      // same-direction neighbour lanes

    double length() const;
};

/// Boolean occupancy grid; 1 = drivable.
struct DrivableGrid {
    double origin_x = 0.0;  // world x of cell (0,0) center
    double origin_y = 0.0;
    double cell_m = 0.5;
    int nx = 0;
    int ny = 0;
    std::vector<uint8_t> cells;  // row-major, y-major rows

    bool in_bounds(int ix, int iy) const { return ix >= 0 && ix < nx && iy >= 0 && iy < ny; }
    uint8_t at(int ix, int iy) const { return cells[static_cast<size_t>(iy) * nx + ix]; }
    uint8_t& at(int ix, int iy) { return cells[static_cast<size_t>(iy) * nx + ix]; }
    /// Cell containing a world point, or nullopt outside the grid extent.
    std::optional<std::pair<int, int>> cell_of(const Vec2& p) const;
    Vec2 cell_center(int ix, int iy) const {
        return {origin_x + ix * cell_m, origin_y + iy * cell_m};
    }
};

/// Distance (m) from each cell center to the nearest non-drivable cell center.
/// Exact Euclidean transform; bilinear interpolation gives a usable gradient.
struct DistanceField {
    int nx = 0, ny = 0;
    double origin_x = 0.0, origin_y = 0.0, cell_m = 0.5;
    bool has_obstacle = false;  // false when every grid cell is drivable
    std::vector<double> dist;   // row-major, y-major; +inf when the map has no obstacle cell

    bool empty() const { return dist.empty(); }
    /// Interpolated distance at a world point; nullopt outside the grid extent.
    std::optional<double> sample(const Vec2& p) const;
    /// Gradient of the interpolated distance; zero outside the grid or on infinite fields.
    Vec2 sample_grad(const Vec2& p) const;
};

/// Result of projecting a point onto a lane centerline.
struct LaneProjection {
    int lane = -1;
    double s = 0.0;           // arc length along the centerline, m
    double lateral = 0.0;     // signed offset, left of travel positive, m
    double heading_err = 0.0; // point heading minus lane heading, (-pi, pi]
    double dist = 0.0;        // Euclidean distance to the closest centerline point
    Vec2 closest;             // closest centerline point
    double lane_heading = 0.0;
};

struct MapModel {
    std::vector<Lane> lanes;
    DrivableGrid grid;
    DistanceField field;  // derived from grid; rebuilt on load

    void build_distance_field();

    /// Project onto one lane's centerline.
    LaneProjection project_onto_lane(int lane, const Vec2& p) const;
    /// Nearest lane by lateral distance; heading (if finite) breaks near-ties in
    /// favour of lanes aligned with the query heading.
    std::optional<LaneProjection> nearest_lane(const Vec2& p, double heading = std::nan("")) const;
    /// Walk successor edges from (lane, s) to produce a path of at least `dist`
    /// meters. When the graph runs out, `extend` continues straight past the last
    /// point; otherwise the path stops at the end of the known road.
    std::vector<LanePoint> path_from(int lane, double s, double dist, bool extend = true) const;
    /// Point at arc length s along a lane, clamped to its extent.
    LanePoint point_at(int lane, double s) const;

    bool drivable_at(const Vec2& p) const;
};

/// Map collision penalty: 1 - d/p for d <= p else 0, where d is the interpolated
/// distance to the nearest non-drivable cell and p the footprint disc radius.
/// Out-of-grid positions are treated as fully offroad (penalty 1).
double env_coll_pens(const Vec2& pos, const VehicleFootprint& fp, const MapModel& map);

/// Gradient of env_coll_pens w.r.t. the position; zero out of grid and beyond p.
Vec2 env_coll_pens_grad(const Vec2& pos, const VehicleFootprint& fp, const MapModel& map);

}  // namespace advscene
