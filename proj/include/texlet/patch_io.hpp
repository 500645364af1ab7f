// patch_io.hpp — unwraps face clusters onto small square images by
// orthographic projection onto the cluster fit plane, and pastes patch
// images back into a full UV atlas. The paste mapping is precomputed as a
// bilinear tap table so the same mapping can drive both plain reassembly
// and differentiable reconstruction losses.
#pragma once

#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <unordered_map>
#include <vector>

#include "texlet/image.hpp"
#include "texlet/mesh.hpp"
#include "texlet/partition.hpp"

namespace texlet {

struct TexturePatch {
    ImageRGB image;                              // R x R
    std::vector<int> face_ids;                   // faces mapped into this patch
    std::vector<std::array<Vec2, 3>> face_map;   // image-space corner coords, in [0,R]^2
    std::vector<uint8_t> valid_mask;             // R x R; covered or dilation ring

    int resolution() const { return image.width; }
};

struct PatchAnchor {
    Vec3 position;  // area-weighted mean of member face centroids
    Vec3 normal;    // cluster fit-plane normal (unit)
};

inline PatchAnchor patch_anchor(const Cluster& cluster) {
    require(cluster.area > 0, "patch_anchor: empty cluster");
    return {cluster.centroid_sum / cluster.area, cluster.plane.normal};
}

// Shared edge->faces map; built once per mesh and reused across unwraps.
struct EdgeFaceMap {
    std::unordered_map<std::pair<int, int>, std::vector<int>, detail::PairHash> map;

    static EdgeFaceMap build(const TriangleMesh& mesh) {
        EdgeFaceMap out;
        out.map.reserve(mesh.face_count() * 2);
        for (int f = 0; f < mesh.face_count(); ++f)
            for (int k = 0; k < 3; ++k) {
                int u = mesh.faces[f][k], v = mesh.faces[f][(k + 1) % 3];
                if (u > v) std::swap(u, v);
                out.map[{u, v}].push_back(f);
            }
        return out;
    }
};

namespace detail {

// Deterministic in-plane +x direction: the cluster's longest boundary edge
// (ties broken by vertex-index pair), projected onto the fit plane. Falls
// back to world axes when the projection degenerates.
inline Vec3 inplane_x_direction(const TriangleMesh& mesh, const EdgeFaceMap& efm,
                                const PatchClustering& pc, int cluster_idx) {
    const Cluster& cluster = pc.clusters[cluster_idx];
    const Vec3 n = cluster.plane.normal;

    double best_len = -1.0;
    std::pair<int, int> best_edge{-1, -1};
    for (int f : cluster.face_ids) {
        for (int k = 0; k < 3; ++k) {
            int u = mesh.faces[f][k], v = mesh.faces[f][(k + 1) % 3];
            if (u > v) std::swap(u, v);
            bool boundary = true;
            for (int other : efm.map.at({u, v}))
                if (other != f && pc.face_to_cluster[other] == cluster_idx) boundary = false;
            if (!boundary) continue;
            double len = norm(mesh.vertices[v] - mesh.vertices[u]);
            std::pair<int, int> e{u, v};
            if (len > best_len + 1e-15 ||
                (std::abs(len - best_len) <= 1e-15 && e < best_edge)) {
                best_len = len;
                best_edge = e;
            }
        }
    }

    auto project = [&](const Vec3& d) {
        Vec3 p = d - n * dot(n, d);
        return p;
    };
    if (best_edge.first >= 0) {
        Vec3 d = mesh.vertices[best_edge.second] - mesh.vertices[best_edge.first];
        Vec3 p = project(d);
        if (norm(p) > 1e-9 * std::max(norm(d), 1e-30)) return normalized(p);
    }
    for (Vec3 axis : {Vec3{1, 0, 0}, Vec3{0, 1, 0}, Vec3{0, 0, 1}}) {
        Vec3 p = project(axis);
        if (norm(p) > 1e-6) return normalized(p);
    }
    return {1, 0, 0};
}

inline bool barycentric2d(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& p, double* w) {
    double denom = cross(b - a, c - a);
    if (std::abs(denom) < 1e-300) return false;
    w[0] = cross(b - p, c - p) / denom;
    w[1] = cross(c - p, a - p) / denom;
    w[2] = cross(a - p, b - p) / denom;
    return true;
}

// Copies colors outward from filled texels for `rings` rounds; extends mask.
inline void dilate_rings(ImageRGB& img, std::vector<uint8_t>& filled, int rings) {
    const int w = img.width, h = img.height;
    static constexpr int kNbr[8][2] = {{-1, 0}, {1, 0}, {0, -1}, {0, 1},
                                       {-1, -1}, {-1, 1}, {1, -1}, {1, 1}};
    for (int ring = 0; ring < rings; ++ring) {
        std::vector<uint8_t> prev = filled;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                if (prev[y * w + x]) continue;
                for (const auto& d : kNbr) {
                    int nx = x + d[0], ny = y + d[1];
                    if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
                    if (!prev[ny * w + nx]) continue;
                    const float* src = img.at(nx, ny);
                    img.set(x, y, src[0], src[1], src[2]);
                    filled[y * w + x] = 1;
                    break;
                }
            }
    }
}

}  // namespace detail

// Unwraps one cluster to an R x R image. Faces are projected orthographically
// onto the cluster fit plane, scaled uniformly into [1, R-1]^2, rasterized
// with barycentric UV lookup into the source texture, then dilated 2 texels.
inline TexturePatch unwrap_patch(const TriangleMesh& mesh, const EdgeFaceMap& efm,
                                 const PatchClustering& pc, int cluster_idx, int resolution) {
    require(resolution >= 8, "patch resolution must be >= 8");
    const Cluster& cluster = pc.clusters[cluster_idx];
    const int R = resolution;

    Vec3 n = cluster.plane.normal;
    Vec3 ex = detail::inplane_x_direction(mesh, efm, pc, cluster_idx);
    Vec3 ey = cross(n, ex);

    auto project_all = [&](const Vec3& ax, const Vec3& ay) {
        std::vector<std::array<Vec2, 3>> pts(cluster.face_ids.size());
        for (size_t i = 0; i < cluster.face_ids.size(); ++i)
            for (int k = 0; k < 3; ++k) {
                Vec3 p = mesh.corner(cluster.face_ids[i], k);
                pts[i][k] = {dot(p, ax), dot(p, ay)};
            }
        return pts;
    };
    auto extent = [](const std::vector<std::array<Vec2, 3>>& pts, Vec2& lo, Vec2& hi) {
        lo = {1e300, 1e300};
        hi = {-1e300, -1e300};
        for (const auto& tri : pts)
            for (const Vec2& p : tri) {
                lo.x = std::min(lo.x, p.x); lo.y = std::min(lo.y, p.y);
                hi.x = std::max(hi.x, p.x); hi.y = std::max(hi.y, p.y);
            }
    };

    std::vector<std::array<Vec2, 3>> proj = project_all(ex, ey);
    Vec2 lo, hi;
    extent(proj, lo, hi);
    double w = hi.x - lo.x, h = hi.y - lo.y;
    if (std::min(w, h) < 1e-9 * std::max({w, h, 1e-30})) {
        // Ill-conditioned fit: use the two largest-variance directions of the
        // vertex scatter instead.
        Vec3 s1{}, sn{};
        SymMat3 s2{};
        double cnt = 0;
        for (int f : cluster.face_ids)
            for (int k = 0; k < 3; ++k) {
                Vec3 p = mesh.corner(f, k);
                s1 += p;
                s2 += SymMat3::outer(p);
                cnt += 1;
            }
        PlaneFit alt = fit_plane(s1, s2, cnt, cluster.normal_sum);
        n = alt.normal;
        ex = detail::inplane_x_direction(mesh, efm, pc, cluster_idx);
        ex = normalized(ex - n * dot(n, ex));
        if (norm(ex) < 0.5) ex = std::abs(n.x) < 0.9 ? normalized(cross(n, Vec3{1, 0, 0}))
                                                     : normalized(cross(n, Vec3{0, 1, 0}));
        ey = cross(n, ex);
        proj = project_all(ex, ey);
        extent(proj, lo, hi);
        w = hi.x - lo.x;
        h = hi.y - lo.y;
    }

    double span = std::max({w, h, 1e-30});
    double scale = (R - 2) / span;
    double off_x = 1.0 + ((R - 2) - w * scale) * 0.5;
    double off_y = 1.0 + ((R - 2) - h * scale) * 0.5;

    TexturePatch patch;
    patch.image = ImageRGB(R, R, 0.0f);
    patch.valid_mask.assign((size_t)R * R, 0);
    patch.face_ids = cluster.face_ids;
    patch.face_map.resize(proj.size());
    for (size_t i = 0; i < proj.size(); ++i)
        for (int k = 0; k < 3; ++k)
            patch.face_map[i][k] = {(proj[i][k].x - lo.x) * scale + off_x,
                                    (proj[i][k].y - lo.y) * scale + off_y};

    // Rasterize faces in cluster order; first writer owns a texel.
    for (size_t i = 0; i < patch.face_map.size(); ++i) {
        const auto& tri = patch.face_map[i];
        const auto& uvs = mesh.face_uvs[cluster.face_ids[i]];
        double minx = std::min({tri[0].x, tri[1].x, tri[2].x});
        double maxx = std::max({tri[0].x, tri[1].x, tri[2].x});
        double miny = std::min({tri[0].y, tri[1].y, tri[2].y});
        double maxy = std::max({tri[0].y, tri[1].y, tri[2].y});
        int x0 = std::max((int)std::floor(minx - 0.5), 0);
        int x1 = std::min((int)std::ceil(maxx + 0.5), R - 1);
        int y0 = std::max((int)std::floor(miny - 0.5), 0);
        int y1 = std::min((int)std::ceil(maxy + 0.5), R - 1);
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x) {
                if (patch.valid_mask[y * R + x]) continue;
                double bw[3];
                if (!detail::barycentric2d(tri[0], tri[1], tri[2], {x + 0.5, y + 0.5}, bw))
                    continue;
                if (bw[0] < -1e-12 || bw[1] < -1e-12 || bw[2] < -1e-12) continue;
                double u = bw[0] * uvs[0].x + bw[1] * uvs[1].x + bw[2] * uvs[2].x;
                double v = bw[0] * uvs[0].y + bw[1] * uvs[1].y + bw[2] * uvs[2].y;
                float rgb[3];
                sample_uv(mesh.texture, u, v, rgb);
                patch.image.set(x, y, rgb[0], rgb[1], rgb[2]);
                patch.valid_mask[y * R + x] = 1;
            }
    }

    detail::dilate_rings(patch.image, patch.valid_mask, 2);
    return patch;
}

inline std::vector<TexturePatch> unwrap_all(const TriangleMesh& mesh, const PatchClustering& pc,
                                            int resolution) {
    EdgeFaceMap efm = EdgeFaceMap::build(mesh);
    std::vector<TexturePatch> out;
    out.reserve(pc.clusters.size());
    for (int i = 0; i < pc.size(); ++i) out.push_back(unwrap_patch(mesh, efm, pc, i, resolution));
    return out;
}

inline std::vector<PatchAnchor> all_anchors(const PatchClustering& pc) {
    std::vector<PatchAnchor> out;
    out.reserve(pc.clusters.size());
    for (const Cluster& c : pc.clusters) out.push_back(patch_anchor(c));
    return out;
}

// ---------------------------------------------------------------------------
// Atlas reassembly

// Per covered atlas texel: source patch and continuous patch-image coords.
struct PasteMap {
    int atlas_size = 0;
    struct Texel {
        int x, y;
        int patch;
        float px, py;
    };
    std::vector<Texel> texels;
    std::vector<int> owner;  // atlas_size^2, face id or -1 (UV coverage)
};

inline PasteMap build_paste_map(const TriangleMesh& mesh, const PatchClustering& pc,
                                const std::vector<TexturePatch>& patches, int atlas_size) {
    require((int)patches.size() == pc.size(), "one patch per cluster required");
    const int S = atlas_size;

    // face -> (patch index, position inside that patch's face_map)
    std::vector<std::pair<int, int>> face_slot(mesh.face_count(), {-1, -1});
    for (size_t p = 0; p < patches.size(); ++p)
        for (size_t i = 0; i < patches[p].face_ids.size(); ++i) {
            int f = patches[p].face_ids[i];
            require(f >= 0 && f < mesh.face_count(), "face id out of range in patch");
            face_slot[f] = {(int)p, (int)i};
        }
    for (int f = 0; f < mesh.face_count(); ++f)
        require(face_slot[f].first >= 0, "face " + std::to_string(f) + " missing from all patches");

    PasteMap pm;
    pm.atlas_size = S;
    pm.owner.assign((size_t)S * S, -1);

    // Rasterize faces into UV space in index order; first writer owns.
    for (int f = 0; f < mesh.face_count(); ++f) {
        const auto& uv = mesh.face_uvs[f];
        Vec2 a{uv[0].x * S, (1.0 - uv[0].y) * S};
        Vec2 b{uv[1].x * S, (1.0 - uv[1].y) * S};
        Vec2 c{uv[2].x * S, (1.0 - uv[2].y) * S};
        double minx = std::min({a.x, b.x, c.x}), maxx = std::max({a.x, b.x, c.x});
        double miny = std::min({a.y, b.y, c.y}), maxy = std::max({a.y, b.y, c.y});
        int x0 = std::max((int)std::floor(minx - 0.5), 0);
        int x1 = std::min((int)std::ceil(maxx + 0.5), S - 1);
        int y0 = std::max((int)std::floor(miny - 0.5), 0);
        int y1 = std::min((int)std::ceil(maxy + 0.5), S - 1);
        const auto& [pi, slot] = face_slot[f];
        const auto& fm = patches[pi].face_map[slot];
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x) {
                if (pm.owner[y * S + x] >= 0) continue;
                double bw[3];
                if (!detail::barycentric2d(a, b, c, {x + 0.5, y + 0.5}, bw)) continue;
                if (bw[0] < -1e-12 || bw[1] < -1e-12 || bw[2] < -1e-12) continue;
                pm.owner[y * S + x] = f;
                double px = bw[0] * fm[0].x + bw[1] * fm[1].x + bw[2] * fm[2].x;
                double py = bw[0] * fm[0].y + bw[1] * fm[1].y + bw[2] * fm[2].y;
                pm.texels.push_back({x, y, pi, (float)px, (float)py});
            }
    }
    return pm;
}

inline ImageRGB paste_with_map(const PasteMap& pm, const std::vector<TexturePatch>& patches) {
    const int S = pm.atlas_size;
    ImageRGB atlas(S, S, 0.0f);
    std::vector<uint8_t> filled((size_t)S * S, 0);
    for (const auto& t : pm.texels) {
        float rgb[3];
        bilinear_sample(patches[t.patch].image, t.px, t.py, rgb);
        atlas.set(t.x, t.y, rgb[0], rgb[1], rgb[2]);
        filled[t.y * S + t.x] = 1;
    }
    detail::dilate_rings(atlas, filled, 2);
    return atlas;
}

inline ImageRGB paste_patches(const TriangleMesh& mesh, const PatchClustering& pc,
                              const std::vector<TexturePatch>& patches, int atlas_size) {
    return paste_with_map(build_paste_map(mesh, pc, patches, atlas_size), patches);
}

// UV coverage mask at a given atlas size (texels owned by some face).
inline std::vector<uint8_t> atlas_coverage(const PasteMap& pm) {
    std::vector<uint8_t> mask(pm.owner.size(), 0);
    for (size_t i = 0; i < pm.owner.size(); ++i) mask[i] = pm.owner[i] >= 0;
    return mask;
}

// ---------------------------------------------------------------------------
// Patch-set files: one PNG grid of R x R tiles plus a text sidecar carrying
// anchors and face maps.

inline int patch_grid_cols(int count) {
    int c = (int)std::ceil(std::sqrt((double)std::max(count, 1)));
    return std::max(c, 1);
}

inline ImageRGB patches_to_grid(const std::vector<TexturePatch>& patches) {
    require(!patches.empty(), "no patches to pack");
    int R = patches[0].resolution();
    int cols = patch_grid_cols((int)patches.size());
    int rows = ((int)patches.size() + cols - 1) / cols;
    ImageRGB grid(cols * R, rows * R, 0.0f);
    for (size_t i = 0; i < patches.size(); ++i) {
        int ox = (int)(i % cols) * R, oy = (int)(i / cols) * R;
        for (int y = 0; y < R; ++y)
            for (int x = 0; x < R; ++x) {
                const float* p = patches[i].image.at(x, y);
                grid.set(ox + x, oy + y, p[0], p[1], p[2]);
            }
    }
    return grid;
}

inline void save_patches(const std::vector<TexturePatch>& patches,
                         const std::vector<PatchAnchor>& anchors, const std::string& png_path,
                         const std::string& sidecar_path) {
    require(patches.size() == anchors.size(), "patch/anchor count mismatch");
    save_png(patches_to_grid(patches), png_path);

    std::ofstream out(sidecar_path);
    if (!out) fail("cannot write patch sidecar: " + sidecar_path);
    char buf[512];
    out << "texlet-patches v1\n";
    out << "count = " << patches.size() << "\n";
    out << "patch_size = " << patches[0].resolution() << "\n";
    out << "grid_cols = " << patch_grid_cols((int)patches.size()) << "\n";
    for (size_t i = 0; i < patches.size(); ++i) {
        out << "patch " << i << "\n";
        std::snprintf(buf, sizeof(buf), "anchor %.17g %.17g %.17g %.17g %.17g %.17g\n",
                      anchors[i].position.x, anchors[i].position.y, anchors[i].position.z,
                      anchors[i].normal.x, anchors[i].normal.y, anchors[i].normal.z);
        out << buf;
        out << "faces " << patches[i].face_ids.size() << "\n";
        for (size_t k = 0; k < patches[i].face_ids.size(); ++k) {
            const auto& fm = patches[i].face_map[k];
            std::snprintf(buf, sizeof(buf), "face %d %.17g %.17g %.17g %.17g %.17g %.17g\n",
                          patches[i].face_ids[k], fm[0].x, fm[0].y, fm[1].x, fm[1].y, fm[2].x,
                          fm[2].y);
            out << buf;
        }
    }
}

inline void load_patches(const std::string& png_path, const std::string& sidecar_path,
                         std::vector<TexturePatch>& patches, std::vector<PatchAnchor>& anchors) {
    ImageRGB grid = load_png(png_path);
    std::ifstream in(sidecar_path);
    if (!in) fail("cannot open patch sidecar: " + sidecar_path);
    std::string line;
    std::getline(in, line);
    require(line == "texlet-patches v1", "not a texlet patch sidecar: " + sidecar_path);

    int count = 0, R = 0, cols = 0;
    patches.clear();
    anchors.clear();
    while (std::getline(in, line)) {
        std::istringstream is(line);
        std::string key;
        is >> key;
        if (key == "count") {
            std::string eq;
            is >> eq >> count;
        } else if (key == "patch_size") {
            std::string eq;
            is >> eq >> R;
        } else if (key == "grid_cols") {
            std::string eq;
            is >> eq >> cols;
        } else if (key == "patch") {
            require(R > 0 && cols > 0, "sidecar header incomplete: " + sidecar_path);
            int idx = (int)patches.size();
            TexturePatch p;
            p.image = ImageRGB(R, R);
            int ox = (idx % cols) * R, oy = (idx / cols) * R;
            require(ox + R <= grid.width && oy + R <= grid.height,
                    "patch grid image too small: " + png_path);
            for (int y = 0; y < R; ++y)
                for (int x = 0; x < R; ++x) {
                    const float* src = grid.at(ox + x, oy + y);
                    p.image.set(x, y, src[0], src[1], src[2]);
                }
            p.valid_mask.assign((size_t)R * R, 1);
            patches.push_back(std::move(p));
        } else if (key == "anchor") {
            PatchAnchor a;
            is >> a.position.x >> a.position.y >> a.position.z >> a.normal.x >> a.normal.y >>
                a.normal.z;
            anchors.push_back(a);
        } else if (key == "face") {
            require(!patches.empty(), "face record before patch record");
            int f;
            std::array<Vec2, 3> fm;
            is >> f >> fm[0].x >> fm[0].y >> fm[1].x >> fm[1].y >> fm[2].x >> fm[2].y;
            patches.back().face_ids.push_back(f);
            patches.back().face_map.push_back(fm);
        }
    }
    require((int)patches.size() == count, "patch count mismatch in " + sidecar_path);
    require(anchors.size() == patches.size(), "anchor count mismatch in " + sidecar_path);
}

}  // namespace texlet
