#pragma once

#include "mscg/types.hpp"

#include <array>
#include <vector>

namespace mscg {

// Map branches within a rod cell.  Region boundaries (inner polygon, rod
// circle) are mesh-conforming, so each element carries a single branch.
enum class MapRegion : int {
  fixed = 0,   // inside the inner polygon, mapped by identity
  collar = 1,  // between inner polygon and rod circle
  outer = 2,   // between rod circle and cell boundary
};

// Conforming high-order triangulation of one subdomain cell, in coordinates
// relative to the cell origin.  Geometry is isoparametric of the same order
// as the field; elements touching the rod circle have their interface edge
// nodes placed on the circle.
struct CellMesh {
  int order = 1;

  Mat corners;    // 4x2 cell boundary polygon, CCW, corner 0 at the origin
  Mat vertices;   // triangle corner vertices
  Eigen::MatrixXi tris;          // T x 3, CCW
  std::vector<int> material;     // per element: 0 background, 1 rod
  std::vector<MapRegion> region; // per element map branch

  Eigen::MatrixXi conn; // T x basis_size element-to-node connectivity
  Mat nodes;            // node positions, one row per node

  // Boundary sides are numbered 0..3 with translation-invariant
  // parametrizations: side 0 runs c0->c1, side 1 c1->c2, side 2 c3->c2,
  // side 3 c0->c3, so a side and the matching side of the neighbouring cell
  // share direction.  Each entry is (node, param), sorted by param, corner
  // nodes appearing on both adjacent sides.
  std::array<std::vector<std::pair<int, double>>, 4> side_nodes;
  std::vector<char> on_boundary; // per node

  bool has_rod = false;
  Vec center;              // rod center (rod cells only)
  double rod_radius = 0.0;
  double inner_scale = 0.0; // inner polygon = boundary polygon scaled by this

  int n_nodes() const { return int(nodes.rows()); }
  int n_elems() const { return int(tris.rows()); }
};

// Uniform m x m squares split into triangles on a square cell of the given
// side length.  diag selects the split direction: 0 cuts from the lower
// right to the upper left of each square, 1 from the lower left to the
// upper right.
CellMesh structured_cell_mesh(int m, int order, double side, int diag = 0);

// Polar ring mesh ("trellis") for a convex quadrilateral cell with a
// centered circular rod: ring-aligned with the inner polygon (scale
// inner_scale), the rod circle, and the cell boundary, so that the radial
// geometry map is smooth within every element.  spokes_per_side rays per
// boundary sector (corners always hit); rings_* count ring intervals in the
// three bands.  mark_rod controls whether elements inside the circle are
// tagged as rod material.
CellMesh trellis_cell_mesh(const Mat& corners, double rod_radius, double inner_scale,
                           int spokes_per_side, int rings_fixed, int rings_collar,
                           int rings_outer, int order, bool mark_rod = true);

// Distance from `center` to the polygon boundary along direction angle
// alpha, and its derivative with respect to alpha.
double polygon_ray(const Mat& corners, const Vec& center, double alpha,
                   double* dB_dalpha = nullptr);

} // namespace mscg
