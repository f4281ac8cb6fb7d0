// Visual hull carving from calibrated silhouettes, plus triangulation of
// the carved occupancy into the coarse initial mesh.

#pragma once

#include <stdexcept>

#include "meshforge/grid.hpp"
#include "meshforge/iso.hpp"
#include "meshforge/mesh.hpp"
#include "meshforge/scene.hpp"

namespace meshforge {

// Soft carve: occupancy = min over views of the bilinearly sampled mask at
// the voxel-center projection. Projections behind the camera or outside
// the image do not carve (count as mask value 1).
inline OccupancyGrid carve_visual_hull(const Scene& scene, int r) {
  if (r < 8) throw std::runtime_error("carve_visual_hull: resolution must be >= 8");
  OccupancyGrid grid(r, 1.0);
  for (int z = 0; z < r; ++z)
    for (int y = 0; y < r; ++y)
      for (int x = 0; x < r; ++x) {
        Vec3 world = scene.domain_box.to_world(grid.cell_center_unit(x, y, z));
        double occ = 1.0;
        for (const CameraView& cam : scene.views) {
          Projection pr = project(cam, world);
          if (pr.behind_camera) continue;
          if (pr.u < 0 || pr.u > cam.width - 1 || pr.v < 0 || pr.v > cam.height - 1) continue;
          occ = std::min(occ, cam.mask.sample_bilinear(pr.u, pr.v, 0));
          if (occ == 0.0) break;
        }
        grid.at(x, y, z) = occ;
      }

  bool any_occupied = false;
  for (double v : grid.values)
    if (v >= 0.5) { any_occupied = true; break; }
  if (!any_occupied) throw std::runtime_error("carve_visual_hull: silhouettes inconsistent (empty hull)");
  return grid;
}

// Marching cubes at isovalue 0.5 on (occupancy - 0.5); interior has
// occupancy 1, so the solver's interior-negative convention requires the
// negated field. Output is in unit-cube coordinates.
inline TriangleMesh hull_mesh(const OccupancyGrid& grid) {
  ScalarGrid field(grid.res);
  for (size_t i = 0; i < field.values.size(); ++i) field.values[i] = 0.5 - grid.values[i];
  // cell centers sit at (i+0.5)/r
  return marching_cubes(field, 0.0, Vec3{0.5 / grid.res, 0.5 / grid.res, 0.5 / grid.res},
                        1.0 / grid.res);
}

}  // namespace meshforge
