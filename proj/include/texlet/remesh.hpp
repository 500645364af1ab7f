// remesh.hpp — edge-length-bounded refinement. Faces with any over-long edge
// are split 1-to-4 at edge midpoints; neighbors that received split edges are
// bisected (red-green) so no T-junctions appear. Splits are in-plane, so the
// surface and its texture mapping are unchanged.
#pragma once

#include <array>
#include <cmath>
#include <unordered_map>
#include <vector>

#include "texlet/mesh.hpp"

namespace texlet {

struct RefineConfig {
    double max_edge_len = 0.02;  // fraction of the normalized bbox diagonal
    int max_rounds = 16;

    void validate() const {
        require(max_edge_len > 0.0 && max_edge_len <= 1.0, "max_edge_len must be in (0,1]");
        require(max_rounds >= 1 && max_rounds <= 64, "max_rounds must be in [1,64]");
    }
};

struct RefineResult {
    TriangleMesh mesh;
    int rounds = 0;
    int faces_split = 0;
    bool max_rounds_hit = false;  // warning, not an error
};

// Edge length so that uniform equilateral triangles of that size give roughly
// `target_faces` over `total_area`.
inline double edge_len_for_face_count(double total_area, long target_faces) {
    double per_face = total_area / (double)std::max<long>(target_faces, 1);
    return std::sqrt(per_face * 4.0 / std::sqrt(3.0));
}

namespace detail {

using EdgeKey = std::pair<int, int>;

inline EdgeKey edge_key(int a, int b) { return a < b ? EdgeKey{a, b} : EdgeKey{b, a}; }

}  // namespace detail

inline RefineResult refine_mesh(const TriangleMesh& input, const RefineConfig& cfg) {
    cfg.validate();
    RefineResult res;
    res.mesh = input;
    TriangleMesh& mesh = res.mesh;

    for (int round = 0; round < cfg.max_rounds; ++round) {
        // Edges to split: all edges of faces that have any over-long edge.
        std::unordered_map<detail::EdgeKey, int, detail::PairHash> midpoint;  // edge -> new vid
        bool any_long = false;
        for (int f = 0; f < mesh.face_count(); ++f) {
            const auto& fc = mesh.faces[f];
            bool over = false;
            for (int k = 0; k < 3; ++k) {
                double len = norm(mesh.vertices[fc[k]] - mesh.vertices[fc[(k + 1) % 3]]);
                if (len > cfg.max_edge_len) {
                    over = true;
                    break;
                }
            }
            if (!over) continue;
            any_long = true;
            for (int k = 0; k < 3; ++k)
                midpoint.emplace(detail::edge_key(fc[k], fc[(k + 1) % 3]), -1);
        }
        if (!any_long) return res;

        // Create midpoint vertices in deterministic (sorted edge) order.
        {
            std::vector<detail::EdgeKey> keys;
            keys.reserve(midpoint.size());
            for (auto& [k, v] : midpoint) keys.push_back(k);
            std::sort(keys.begin(), keys.end());
            for (const auto& k : keys) {
                midpoint[k] = (int)mesh.vertices.size();
                mesh.vertices.push_back((mesh.vertices[k.first] + mesh.vertices[k.second]) * 0.5);
            }
        }

        std::vector<std::array<int, 3>> new_faces;
        std::vector<std::array<Vec2, 3>> new_uvs;
        new_faces.reserve(mesh.faces.size() * 2);
        new_uvs.reserve(mesh.faces.size() * 2);

        auto emit = [&](int a, int b, int c, const Vec2& ua, const Vec2& ub, const Vec2& uc) {
            new_faces.push_back({a, b, c});
            new_uvs.push_back({ua, ub, uc});
        };

        for (int f = 0; f < mesh.face_count(); ++f) {
            std::array<int, 3> v = mesh.faces[f];
            std::array<Vec2, 3> t = mesh.face_uvs[f];
            // mid[k] = split vertex of edge (v[k], v[k+1]) or -1
            std::array<int, 3> mid{-1, -1, -1};
            int nsplit = 0;
            for (int k = 0; k < 3; ++k) {
                auto it = midpoint.find(detail::edge_key(v[k], v[(k + 1) % 3]));
                if (it != midpoint.end()) {
                    mid[k] = it->second;
                    ++nsplit;
                }
            }
            if (nsplit == 0) {
                emit(v[0], v[1], v[2], t[0], t[1], t[2]);
                continue;
            }
            res.faces_split++;

            // Rotate local indices so the split pattern is canonical:
            //   1 split -> the split edge is (0,1); 2 splits -> edges (0,1),(1,2).
            int r = 0;
            if (nsplit == 1) {
                while (mid[r] < 0) ++r;
            } else if (nsplit == 2) {
                while (!(mid[r] >= 0 && mid[(r + 1) % 3] >= 0)) ++r;
            }
            std::array<int, 3> w{v[r], v[(r + 1) % 3], v[(r + 2) % 3]};
            std::array<Vec2, 3> s{t[r], t[(r + 1) % 3], t[(r + 2) % 3]};
            std::array<int, 3> m{mid[r], mid[(r + 1) % 3], mid[(r + 2) % 3]};
            // UV midpoints use this face's own corners, which keeps UV seams intact.
            std::array<Vec2, 3> mu{(s[0] + s[1]) * 0.5, (s[1] + s[2]) * 0.5, (s[2] + s[0]) * 0.5};

            if (nsplit == 3) {
                emit(w[0], m[0], m[2], s[0], mu[0], mu[2]);
                emit(m[0], w[1], m[1], mu[0], s[1], mu[1]);
                emit(m[2], m[1], w[2], mu[2], mu[1], s[2]);
                emit(m[0], m[1], m[2], mu[0], mu[1], mu[2]);
            } else if (nsplit == 2) {
                emit(m[0], w[1], m[1], mu[0], s[1], mu[1]);
                emit(w[0], m[0], m[1], s[0], mu[0], mu[1]);
                emit(w[0], m[1], w[2], s[0], mu[1], s[2]);
            } else {
                emit(w[0], m[0], w[2], s[0], mu[0], s[2]);
                emit(m[0], w[1], w[2], mu[0], s[1], s[2]);
            }
        }

        mesh.faces = std::move(new_faces);
        mesh.face_uvs = std::move(new_uvs);
        res.rounds = round + 1;
    }

    // Check whether the threshold is actually met after the last round.
    for (int f = 0; f < mesh.face_count() && !res.max_rounds_hit; ++f)
        for (int k = 0; k < 3; ++k) {
            const auto& fc = mesh.faces[f];
            if (norm(mesh.vertices[fc[k]] - mesh.vertices[fc[(k + 1) % 3]]) > cfg.max_edge_len) {
                res.max_rounds_hit = true;
                break;
            }
        }
    return res;
}

}  // namespace texlet
