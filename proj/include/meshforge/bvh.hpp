// Median-split triangle BVH with exact point-to-triangle closest distance
// and ray casting (used for Chamfer evaluation, point-in-mesh checks, and
// depth oracles).

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "meshforge/math.hpp"
#include "meshforge/mesh.hpp"

namespace meshforge {

// Closest point on a triangle (Ericson, Real-Time Collision Detection).
inline Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  Vec3 ab = b - a, ac = c - a, ap = p - a;
  double d1 = dot(ab, ap), d2 = dot(ac, ap);
  if (d1 <= 0 && d2 <= 0) return a;

  Vec3 bp = p - b;
  double d3 = dot(ab, bp), d4 = dot(ac, bp);
  if (d3 >= 0 && d4 <= d3) return b;

  double vc = d1 * d4 - d3 * d2;
  if (vc <= 0 && d1 >= 0 && d3 <= 0) return a + ab * (d1 / (d1 - d3));

  Vec3 cp = p - c;
  double d5 = dot(ab, cp), d6 = dot(ac, cp);
  if (d6 >= 0 && d5 <= d6) return c;

  double vb = d5 * d2 - d1 * d6;
  if (vb <= 0 && d2 >= 0 && d6 <= 0) return a + ac * (d2 / (d2 - d6));

  double va = d3 * d6 - d5 * d4;
  if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0)
    return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));

  double denom = 1.0 / (va + vb + vc);
  return a + ab * (vb * denom) + ac * (vc * denom);
}

// Moller-Trumbore, no culling.
inline bool ray_triangle(const Vec3& orig, const Vec3& dir, const Vec3& a, const Vec3& b,
                         const Vec3& c, double* t_out) {
  constexpr double eps = 1e-12;
  Vec3 ab = b - a, ac = c - a;
  Vec3 pvec = cross(dir, ac);
  double det = dot(ab, pvec);
  if (std::abs(det) < eps) return false;
  double inv_det = 1.0 / det;
  Vec3 tvec = orig - a;
  double u = dot(tvec, pvec) * inv_det;
  if (u < 0 || u > 1) return false;
  Vec3 qvec = cross(tvec, ab);
  double v = dot(dir, qvec) * inv_det;
  if (v < 0 || u + v > 1) return false;
  double t = dot(ac, qvec) * inv_det;
  if (t <= eps) return false;
  *t_out = t;
  return true;
}

class TriangleBvh {
 public:
  explicit TriangleBvh(const TriangleMesh& mesh) : mesh_(mesh) {
    if (mesh.empty()) throw std::runtime_error("TriangleBvh: empty mesh");
    size_t n = mesh.face_count();
    tri_order_.resize(n);
    std::iota(tri_order_.begin(), tri_order_.end(), 0);
    centroids_.resize(n);
    for (size_t f = 0; f < n; ++f) {
      const auto& t = mesh.faces[f];
      centroids_[f] = (mesh.vertices[t[0]] + mesh.vertices[t[1]] + mesh.vertices[t[2]]) / 3.0;
    }
    nodes_.reserve(2 * n);
    build(0, n);
  }

  // Squared distance from p to the closest surface point.
  double squared_distance(const Vec3& p) const {
    double best = std::numeric_limits<double>::max();
    query(0, p, &best);
    return best;
  }
  double distance(const Vec3& p) const { return std::sqrt(squared_distance(p)); }

  // Nearest intersection along orig + t*dir; returns false on miss.
  bool raycast(const Vec3& orig, const Vec3& dir, double* t_out, size_t* face_out = nullptr) const {
    double best = std::numeric_limits<double>::max();
    size_t best_face = size_t(-1);
    raycast_node(0, orig, dir, &best, &best_face);
    if (best_face == size_t(-1)) return false;
    *t_out = best;
    if (face_out) *face_out = best_face;
    return true;
  }

  // Parity test along a fixed ray; correct for watertight meshes.
  bool contains(const Vec3& p) const {
    Vec3 dir = normalized(Vec3{0.5773502691896258, 0.5773502691896257, 0.5773502691896259});
    size_t hits = count_hits(0, p, dir);
    return hits % 2 == 1;
  }

 private:
  struct Node {
    Box3 box;
    int left = -1, right = -1;  // children, or -1 for leaf
    size_t first = 0, count = 0;
  };

  int build(size_t first, size_t count) {
    int node_id = int(nodes_.size());
    nodes_.push_back({});
    Box3 box = Box3::empty();
    for (size_t i = first; i < first + count; ++i) {
      const auto& t = mesh_.faces[tri_order_[i]];
      for (int k = 0; k < 3; ++k) box.expand(mesh_.vertices[t[k]]);
    }
    nodes_[node_id].box = box;
    if (count <= 4) {
      nodes_[node_id].first = first;
      nodes_[node_id].count = count;
      return node_id;
    }
    Vec3 ext = box.extent();
    int axis = ext.x >= ext.y && ext.x >= ext.z ? 0 : (ext.y >= ext.z ? 1 : 2);
    size_t mid = first + count / 2;
    std::nth_element(tri_order_.begin() + first, tri_order_.begin() + mid,
                     tri_order_.begin() + first + count, [&](size_t a, size_t b) {
                       return centroids_[a][axis] < centroids_[b][axis];
                     });
    int l = build(first, mid - first);
    int r = build(mid, first + count - mid);
    nodes_[node_id].left = l;
    nodes_[node_id].right = r;
    return node_id;
  }

  static double box_sq_distance(const Box3& b, const Vec3& p) {
    double d2 = 0;
    for (int a = 0; a < 3; ++a) {
      double v = p[a];
      if (v < b.min[a]) d2 += (b.min[a] - v) * (b.min[a] - v);
      else if (v > b.max[a]) d2 += (v - b.max[a]) * (v - b.max[a]);
    }
    return d2;
  }

  void query(int node_id, const Vec3& p, double* best) const {
    const Node& node = nodes_[size_t(node_id)];
    if (box_sq_distance(node.box, p) >= *best) return;
    if (node.left < 0) {
      for (size_t i = node.first; i < node.first + node.count; ++i) {
        const auto& t = mesh_.faces[tri_order_[i]];
        Vec3 q = closest_point_on_triangle(p, mesh_.vertices[t[0]], mesh_.vertices[t[1]],
                                           mesh_.vertices[t[2]]);
        *best = std::min(*best, norm2(p - q));
      }
      return;
    }
    double dl = box_sq_distance(nodes_[size_t(node.left)].box, p);
    double dr = box_sq_distance(nodes_[size_t(node.right)].box, p);
    if (dl < dr) {
      query(node.left, p, best);
      query(node.right, p, best);
    } else {
      query(node.right, p, best);
      query(node.left, p, best);
    }
  }

  static bool ray_box(const Box3& b, const Vec3& o, const Vec3& inv_dir, double t_max) {
    double t0 = 0, t1 = t_max;
    for (int a = 0; a < 3; ++a) {
      double ta = (b.min[a] - o[a]) * inv_dir[a];
      double tb = (b.max[a] - o[a]) * inv_dir[a];
      if (ta > tb) std::swap(ta, tb);
      t0 = std::max(t0, ta);
      t1 = std::min(t1, tb);
      if (t0 > t1) return false;
    }
    return true;
  }

  void raycast_node(int node_id, const Vec3& o, const Vec3& d, double* best,
                    size_t* best_face) const {
    const Node& node = nodes_[size_t(node_id)];
    Vec3 inv{1.0 / d.x, 1.0 / d.y, 1.0 / d.z};
    if (!ray_box(node.box, o, inv, *best)) return;
    if (node.left < 0) {
      for (size_t i = node.first; i < node.first + node.count; ++i) {
        size_t f = tri_order_[i];
        const auto& t = mesh_.faces[f];
        double tt;
        if (ray_triangle(o, d, mesh_.vertices[t[0]], mesh_.vertices[t[1]], mesh_.vertices[t[2]],
                         &tt) &&
            tt < *best) {
          *best = tt;
          *best_face = f;
        }
      }
      return;
    }
    raycast_node(node.left, o, d, best, best_face);
    raycast_node(node.right, o, d, best, best_face);
  }

  size_t count_hits(int node_id, const Vec3& o, const Vec3& d) const {
    const Node& node = nodes_[size_t(node_id)];
    Vec3 inv{1.0 / d.x, 1.0 / d.y, 1.0 / d.z};
    if (!ray_box(node.box, o, inv, std::numeric_limits<double>::max())) return 0;
    if (node.left < 0) {
      size_t hits = 0;
      for (size_t i = node.first; i < node.first + node.count; ++i) {
        const auto& t = mesh_.faces[tri_order_[i]];
        double tt;
        if (ray_triangle(o, d, mesh_.vertices[t[0]], mesh_.vertices[t[1]], mesh_.vertices[t[2]],
                         &tt))
          ++hits;
      }
      return hits;
    }
    return count_hits(node.left, o, d) + count_hits(node.right, o, d);
  }

  const TriangleMesh& mesh_;
  std::vector<size_t> tri_order_;
  std::vector<Vec3> centroids_;
  std::vector<Node> nodes_;
};

}  // namespace meshforge
