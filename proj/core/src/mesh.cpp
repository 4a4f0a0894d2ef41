#include "mscg/mesh.hpp"

#include "mscg/errors.hpp"
#include "mscg/shape.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <utility>

namespace mscg {

namespace {

// Deduplicates nodes by quantized position.  Positions are O(1) in cell
// units and node separations are >= 1e-4, so a 1e-10 grid is safe.
class NodePool {
public:
  int insert(double x, double y) {
    auto key = std::make_pair(llround(x * 1e10), llround(y * 1e10));
    auto [it, fresh] = ids_.try_emplace(key, int(pts_.size() / 2));
    if (fresh) {
      pts_.push_back(x);
      pts_.push_back(y);
    }
    return it->second;
  }
  Mat positions() const {
    Mat out(pts_.size() / 2, 2);
    for (size_t i = 0; i < pts_.size() / 2; ++i) {
      out(i, 0) = pts_[2 * i];
      out(i, 1) = pts_[2 * i + 1];
    }
    return out;
  }

private:
  std::map<std::pair<long long, long long>, int> ids_;
  std::vector<double> pts_;
};

// Canonical side endpoint indices into `corners`; see CellMesh::side_nodes.
constexpr int kSideEnds[4][2] = {{0, 1}, {1, 2}, {3, 2}, {0, 3}};

void finalize_connectivity(CellMesh& mesh, const TriangleBasis& basis,
                           bool curve_interface) {
  const Mat& ref = basis.nodes();
  const int nb = basis.size();
  const int p = basis.order();
  NodePool pool;
  mesh.conn.resize(mesh.tris.rows(), nb);

  for (int e = 0; e < mesh.tris.rows(); ++e) {
    Vec a = mesh.vertices.row(mesh.tris(e, 0)).transpose();
    Vec b = mesh.vertices.row(mesh.tris(e, 1)).transpose();
    Vec c = mesh.vertices.row(mesh.tris(e, 2)).transpose();
    // Which local edges have both endpoints on the rod circle.
    bool curved[3] = {false, false, false};
    if (curve_interface && p > 1) {
      auto on_circle = [&](const Vec& v) {
        return std::abs((v - mesh.center).norm() - mesh.rod_radius) < 1e-10;
      };
      bool oc[3] = {on_circle(a), on_circle(b), on_circle(c)};
      curved[0] = oc[0] && oc[1];
      curved[1] = oc[1] && oc[2];
      curved[2] = oc[2] && oc[0];
    }
    for (int i = 0; i < nb; ++i) {
      double xi = ref(i, 0), eta = ref(i, 1);
      Vec pos = a + xi * (b - a) + eta * (c - a);
      bool vertex = (xi < 1e-12 && eta < 1e-12) || (xi > 1.0 - 1e-12) ||
                    (eta > 1.0 - 1e-12);
      if (!vertex) {
        bool on_edge = (curved[0] && eta < 1e-12) ||
                       (curved[1] && xi + eta > 1.0 - 1e-12) ||
                       (curved[2] && xi < 1e-12);
        if (on_edge) {
          Vec d = pos - mesh.center;
          pos = mesh.center + mesh.rod_radius * d / d.norm();
        }
      }
      mesh.conn(e, i) = pool.insert(pos[0], pos[1]);
    }
  }
  mesh.nodes = pool.positions();

  mesh.on_boundary.assign(mesh.n_nodes(), 0);
  for (int s = 0; s < 4; ++s) {
    Vec A = mesh.corners.row(kSideEnds[s][0]).transpose();
    Vec B = mesh.corners.row(kSideEnds[s][1]).transpose();
    Vec d = B - A;
    double len2 = d.squaredNorm();
    std::vector<std::pair<double, int>> found;
    for (int i = 0; i < mesh.n_nodes(); ++i) {
      Vec x = mesh.nodes.row(i).transpose();
      double t = (x - A).dot(d) / len2;
      if (t < -1e-9 || t > 1.0 + 1e-9) continue;
      double dist = (x - (A + std::clamp(t, 0.0, 1.0) * d)).norm();
      if (dist < 1e-9 * std::sqrt(len2)) {
        found.emplace_back(std::clamp(t, 0.0, 1.0), i);
        mesh.on_boundary[i] = 1;
      }
    }
    std::sort(found.begin(), found.end());
    mesh.side_nodes[s].clear();
    for (auto& [t, i] : found) mesh.side_nodes[s].emplace_back(i, t);
  }
}

} // namespace

double polygon_ray(const Mat& corners, const Vec& center, double alpha,
                   double* dB_dalpha) {
  Vec e(2);
  e << std::cos(alpha), std::sin(alpha);
  double best = -1.0;
  Vec best_n(2);
  double best_den = 0.0;
  for (int s = 0; s < 4; ++s) {
    Vec A = corners.row(s).transpose();
    Vec B = corners.row((s + 1) % 4).transpose();
    Vec d = B - A;
    Vec n(2);
    n << d[1], -d[0]; // outward for a CCW polygon
    n.normalize();
    double den = n.dot(e);
    if (den < 1e-12) continue;
    double t = n.dot(A - center) / den;
    if (t > 0.0 && (best < 0.0 || t < best)) {
      best = t;
      best_n = n;
      best_den = den;
    }
  }
  if (best < 0.0) throw SolverError("polygon ray cast failed; center outside polygon?");
  if (dB_dalpha) {
    // B(alpha) = h / (n . e(alpha)) on the active side.
    *dB_dalpha = best * (best_n[0] * e[1] - best_n[1] * e[0]) / best_den;
  }
  return best;
}

CellMesh structured_cell_mesh(int m, int order, double side, int diag) {
  if (m < 1) throw ConfigError("structured cell mesh needs m >= 1");
  CellMesh mesh;
  mesh.order = order;
  mesh.corners.resize(4, 2);
  mesh.corners << 0, 0, side, 0, side, side, 0, side;

  mesh.vertices.resize((m + 1) * (m + 1), 2);
  for (int j = 0; j <= m; ++j)
    for (int i = 0; i <= m; ++i)
      mesh.vertices.row(j * (m + 1) + i) << side * i / m, side * j / m;

  mesh.tris.resize(2 * m * m, 3);
  int t = 0;
  for (int j = 0; j < m; ++j) {
    for (int i = 0; i < m; ++i) {
      int v00 = j * (m + 1) + i, v10 = v00 + 1;
      int v01 = v00 + (m + 1), v11 = v01 + 1;
      bool flip;
      switch (diag) {
        case 0: flip = false; break;
        case 1: flip = true; break;
        case 2: flip = (i + j) % 2 != 0; break;  // checkerboard alternation
        case 3: flip = j % 2 != 0; break;        // alternate by row
        default: flip = i % 2 != 0; break;       // alternate by column
      }
      if (!flip) {
        mesh.tris.row(t++) << v00, v10, v01;
        mesh.tris.row(t++) << v10, v11, v01;
      } else {
        mesh.tris.row(t++) << v00, v10, v11;
        mesh.tris.row(t++) << v00, v11, v01;
      }
    }
  }
  mesh.material.assign(mesh.tris.rows(), 0);
  mesh.region.assign(mesh.tris.rows(), MapRegion::fixed);

  TriangleBasis basis(order);
  finalize_connectivity(mesh, basis, false);
  return mesh;
}

CellMesh trellis_cell_mesh(const Mat& corners, double rod_radius, double inner_scale,
                           int spokes_per_side, int rings_fixed, int rings_collar,
                           int rings_outer, int order, bool mark_rod) {
  if (spokes_per_side < 1 || rings_fixed < 1 || rings_collar < 1 || rings_outer < 1)
    throw ConfigError("trellis mesh needs at least one spoke per side and one ring per band");
  if (inner_scale <= 0.0 || rod_radius <= 0.0)
    throw ConfigError("trellis mesh needs positive rod radius and inner scale");

  CellMesh mesh;
  mesh.order = order;
  mesh.corners = corners;
  mesh.has_rod = true;
  mesh.center = corners.colwise().mean().transpose();
  mesh.rod_radius = rod_radius;
  mesh.inner_scale = inner_scale;

  const int S = 4 * spokes_per_side;
  const int nA = rings_fixed, nB = rings_collar, nC = rings_outer;
  const int K = nA + nB + nC;

  // Spoke angles: each corner-to-corner sector subdivided uniformly, so the
  // polygon corners are always spoke directions.
  std::vector<double> alpha(S), bdist(S);
  double gamma0 = 0.0;
  for (int k = 0; k < 4; ++k) {
    Vec ck = corners.row(k).transpose();
    double gk = std::atan2(ck[1] - mesh.center[1], ck[0] - mesh.center[0]);
    Vec cn = corners.row((k + 1) % 4).transpose();
    double gn = std::atan2(cn[1] - mesh.center[1], cn[0] - mesh.center[0]);
    if (k == 0) gamma0 = gk;
    double span = gn - gk;
    while (span <= 0) span += 2 * pi;
    for (int i = 0; i < spokes_per_side; ++i)
      alpha[k * spokes_per_side + i] = gk + span * i / spokes_per_side;
  }
  (void)gamma0;
  for (int j = 0; j < S; ++j) {
    bdist[j] = polygon_ray(corners, mesh.center, alpha[j]);
    if (inner_scale * bdist[j] >= 0.95 * rod_radius)
      throw ConfigError("inner polygon too close to the rod circle");
    if (rod_radius >= 0.98 * bdist[j])
      throw ConfigError("rod circle too close to the cell boundary");
  }

  auto radius_at = [&](int ring, int j) {
    double L = inner_scale * bdist[j];
    if (ring <= nA) return L * ring / nA;
    if (ring <= nA + nB) return L + (rod_radius - L) * (ring - nA) / nB;
    return rod_radius + (bdist[j] - rod_radius) * (ring - nA - nB) / nC;
  };

  mesh.vertices.resize(1 + K * S, 2);
  mesh.vertices.row(0) = mesh.center.transpose();
  for (int r = 1; r <= K; ++r) {
    for (int j = 0; j < S; ++j) {
      double rad = radius_at(r, j);
      mesh.vertices.row(1 + (r - 1) * S + j) << mesh.center[0] + rad * std::cos(alpha[j]),
          mesh.center[1] + rad * std::sin(alpha[j]);
    }
  }
  auto vid = [&](int ring, int j) { return ring == 0 ? 0 : 1 + (ring - 1) * S + (j % S); };

  mesh.tris.resize(S * (2 * K - 1), 3);
  mesh.material.clear();
  mesh.region.clear();
  int t = 0;
  for (int r = 0; r < K; ++r) {
    MapRegion reg = r < nA ? MapRegion::fixed
                           : (r < nA + nB ? MapRegion::collar : MapRegion::outer);
    int mat = (mark_rod && r < nA + nB) ? 1 : 0;
    for (int j = 0; j < S; ++j) {
      if (r == 0) {
        mesh.tris.row(t++) << vid(0, 0), vid(1, j), vid(1, j + 1);
        mesh.material.push_back(mat);
        mesh.region.push_back(reg);
      } else {
        // Orientation: (e_alpha, e_r) is left-handed, so traverse radius
        // first, then angle, to keep the triangles CCW.
        mesh.tris.row(t++) << vid(r, j), vid(r + 1, j), vid(r + 1, j + 1);
        mesh.tris.row(t++) << vid(r, j), vid(r + 1, j + 1), vid(r, j + 1);
        mesh.material.push_back(mat);
        mesh.material.push_back(mat);
        mesh.region.push_back(reg);
        mesh.region.push_back(reg);
      }
    }
  }

  TriangleBasis basis(order);
  finalize_connectivity(mesh, basis, true);
  return mesh;
}

} // namespace mscg
