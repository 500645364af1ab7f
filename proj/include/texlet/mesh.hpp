// mesh.hpp — indexed triangle mesh with per-corner UVs and an RGB texture,
// Wavefront OBJ I/O, validation, face attributes and the face-adjacency
// dual graph used by patch clustering.
#pragma once

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "texlet/common.hpp"
#include "texlet/image.hpp"
#include "texlet/vec.hpp"

namespace texlet {

// Degenerate-face threshold (squared model units, after normalization).
inline constexpr double kAreaEps = 1e-12;
// Slack admitted around [0,1] for authored UVs with boundary padding.
inline constexpr double kUvSlack = 1e-4;

struct LoadSummary {
    std::string source;
    int vertices = 0;
    int faces = 0;
    int degenerate_removed = 0;
    int nonmanifold_edges = 0;
    double normalize_scale = 1.0;
    Vec3 original_center{};

    std::string to_text() const {
        std::ostringstream os;
        os << "mesh = " << source << "\n";
        os << "vertices = " << vertices << "\n";
        os << "faces = " << faces << "\n";
        os << "degenerate_faces_removed = " << degenerate_removed << "\n";
        os << "nonmanifold_edges = " << nonmanifold_edges << "\n";
        char buf[128];
        std::snprintf(buf, sizeof(buf), "normalize_scale = %.17g\n", normalize_scale);
        os << buf;
        std::snprintf(buf, sizeof(buf), "original_center = %.17g %.17g %.17g\n",
                      original_center.x, original_center.y, original_center.z);
        os << buf;
        return os.str();
    }
};

struct TriangleMesh {
    std::vector<Vec3> vertices;
    std::vector<std::array<int, 3>> faces;
    std::vector<std::array<Vec2, 3>> face_uvs;  // one UV per face corner
    ImageRGB texture;

    int face_count() const { return (int)faces.size(); }
    int vertex_count() const { return (int)vertices.size(); }

    Vec3 corner(int f, int k) const { return vertices[faces[f][k]]; }

    double face_area(int f) const {
        Vec3 e1 = corner(f, 1) - corner(f, 0);
        Vec3 e2 = corner(f, 2) - corner(f, 0);
        return 0.5 * norm(cross(e1, e2));
    }

    Bbox3 bbox() const {
        Bbox3 b;
        for (const Vec3& v : vertices) b.expand(v);
        return b;
    }

    double total_area() const {
        double a = 0.0;
        for (int f = 0; f < face_count(); ++f) a += face_area(f);
        return a;
    }
};

struct FaceAttributes {
    Vec3 centroid;
    Vec3 normal;  // unit, oriented by vertex winding
    double area = 0.0;
};

inline FaceAttributes face_attributes_one(const TriangleMesh& mesh, int f) {
    Vec3 a = mesh.corner(f, 0), b = mesh.corner(f, 1), c = mesh.corner(f, 2);
    FaceAttributes out;
    out.centroid = (a + b + c) / 3.0;
    Vec3 n = cross(b - a, c - a);
    out.area = 0.5 * norm(n);
    out.normal = normalized(n);
    return out;
}

inline std::vector<FaceAttributes> face_attributes(const TriangleMesh& mesh) {
    std::vector<FaceAttributes> out(mesh.face_count());
    for (int f = 0; f < mesh.face_count(); ++f) out[f] = face_attributes_one(mesh, f);
    return out;
}

// Dual graph: one node per face, one edge per pair of faces sharing a mesh
// edge. Edges at non-manifold mesh edges (>2 incident faces) connect all
// incident pairs and are flagged.
struct DualGraph {
    struct Edge {
        int a = 0, b = 0;       // face indices, a < b
        double shared_len = 0;  // total length of shared mesh edges
        bool nonmanifold = false;
    };
    int node_count = 0;
    std::vector<Edge> edges;
    int nonmanifold_edge_count = 0;  // count of offending mesh edges
};

namespace detail {

struct PairHash {
    size_t operator()(const std::pair<int, int>& p) const {
        return std::hash<uint64_t>()(((uint64_t)(uint32_t)p.first << 32) | (uint32_t)p.second);
    }
};

}  // namespace detail

inline DualGraph build_dual_graph(const TriangleMesh& mesh) {
    // mesh edge (min vid, max vid) -> incident faces
    std::unordered_map<std::pair<int, int>, std::vector<int>, detail::PairHash> edge_faces;
    edge_faces.reserve(mesh.face_count() * 2);
    for (int f = 0; f < mesh.face_count(); ++f) {
        const auto& fc = mesh.faces[f];
        for (int k = 0; k < 3; ++k) {
            int u = fc[k], v = fc[(k + 1) % 3];
            if (u > v) std::swap(u, v);
            edge_faces[{u, v}].push_back(f);
        }
    }

    DualGraph g;
    g.node_count = mesh.face_count();
    // dual pair -> edge index, to accumulate shared length when two faces
    // share more than one mesh edge
    std::unordered_map<std::pair<int, int>, int, detail::PairHash> pair_index;
    for (auto& [edge, fs] : edge_faces) {
        if (fs.size() < 2) continue;
        bool nm = fs.size() > 2;
        if (nm) g.nonmanifold_edge_count++;
        double len = norm(mesh.vertices[edge.first] - mesh.vertices[edge.second]);
        for (size_t i = 0; i < fs.size(); ++i) {
            for (size_t j = i + 1; j < fs.size(); ++j) {
                int a = fs[i], b = fs[j];
                if (a == b) continue;  // two edges of the same face glued
                if (a > b) std::swap(a, b);
                auto it = pair_index.find({a, b});
                if (it == pair_index.end()) {
                    pair_index.emplace(std::make_pair(a, b), (int)g.edges.size());
                    g.edges.push_back({a, b, len, nm});
                } else {
                    g.edges[it->second].shared_len += len;
                    g.edges[it->second].nonmanifold |= nm;
                }
            }
        }
    }
    // deterministic order regardless of hash iteration
    std::sort(g.edges.begin(), g.edges.end(), [](const DualGraph::Edge& x, const DualGraph::Edge& y) {
        return x.a != y.a ? x.a < y.a : x.b < y.b;
    });
    return g;
}

// ---------------------------------------------------------------------------
// Validation + normalization

// Drops degenerate faces, checks UV sanity, recenters to the origin and
// scales so the bounding-box diagonal is 1. Returns the load summary.
inline LoadSummary validate_and_normalize(TriangleMesh& mesh, const std::string& source) {
    require(!mesh.vertices.empty() && !mesh.faces.empty(), "mesh has no geometry: " + source);
    require(mesh.face_uvs.size() == mesh.faces.size(), "mesh lacks parameterization");

    for (const auto& f : mesh.faces)
        for (int k = 0; k < 3; ++k)
            require(f[k] >= 0 && f[k] < (int)mesh.vertices.size(),
                    "face references missing vertex in " + source);

    for (const auto& uvs : mesh.face_uvs)
        for (const Vec2& uv : uvs) {
            require(std::isfinite(uv.x) && std::isfinite(uv.y), "non-finite UV in " + source);
            require(uv.x >= -kUvSlack && uv.x <= 1.0 + kUvSlack && uv.y >= -kUvSlack &&
                        uv.y <= 1.0 + kUvSlack,
                    "UV outside [0,1] beyond slack in " + source);
        }

    LoadSummary summary;
    summary.source = source;

    Bbox3 box = mesh.bbox();
    double diag = box.diagonal();
    require(diag > 0.0, "mesh bounding box is a point: " + source);
    Vec3 center = box.center();
    double scale = 1.0 / diag;
    for (Vec3& v : mesh.vertices) v = (v - center) * scale;
    summary.normalize_scale = scale;
    summary.original_center = center;

    std::vector<std::array<int, 3>> kept_faces;
    std::vector<std::array<Vec2, 3>> kept_uvs;
    kept_faces.reserve(mesh.faces.size());
    kept_uvs.reserve(mesh.faces.size());
    for (size_t f = 0; f < mesh.faces.size(); ++f) {
        const auto& fc = mesh.faces[f];
        bool repeated = fc[0] == fc[1] || fc[1] == fc[2] || fc[0] == fc[2];
        Vec3 a = mesh.vertices[fc[0]], b = mesh.vertices[fc[1]], c = mesh.vertices[fc[2]];
        double area = 0.5 * norm(cross(b - a, c - a));
        if (repeated || area <= kAreaEps) {
            summary.degenerate_removed++;
            continue;
        }
        kept_faces.push_back(fc);
        kept_uvs.push_back(mesh.face_uvs[f]);
    }
    mesh.faces = std::move(kept_faces);
    mesh.face_uvs = std::move(kept_uvs);
    require(!mesh.faces.empty(), "all faces degenerate: " + source);

    summary.vertices = mesh.vertex_count();
    summary.faces = mesh.face_count();
    return summary;
}

// ---------------------------------------------------------------------------
// Wavefront OBJ I/O. Faces must be triangles with per-corner vt records; the
// texture comes from the .mtl map_Kd when present, else "<stem>.png".

namespace detail {

// "3/7/2" -> position index 3, uv index 7 (either may be absent)
inline void parse_face_corner(const std::string& tok, int& vi, int& ti) {
    vi = ti = 0;
    size_t s1 = tok.find('/');
    if (s1 == std::string::npos) {
        vi = std::stoi(tok);
        return;
    }
    vi = std::stoi(tok.substr(0, s1));
    size_t s2 = tok.find('/', s1 + 1);
    std::string mid = s2 == std::string::npos ? tok.substr(s1 + 1) : tok.substr(s1 + 1, s2 - s1 - 1);
    if (!mid.empty()) ti = std::stoi(mid);
}

inline std::string find_texture_path(const std::filesystem::path& obj_path,
                                     const std::string& mtllib) {
    namespace fs = std::filesystem;
    fs::path dir = obj_path.parent_path();
    if (!mtllib.empty()) {
        std::ifstream mtl(dir / mtllib);
        std::string line;
        while (std::getline(mtl, line)) {
            std::istringstream is(line);
            std::string key;
            is >> key;
            if (key == "map_Kd") {
                std::string tex;
                is >> tex;
                if (!tex.empty()) return (dir / tex).string();
            }
        }
    }
    fs::path sibling = obj_path;
    sibling.replace_extension(".png");
    return sibling.string();
}

}  // namespace detail

inline TriangleMesh load_mesh(const std::string& path, LoadSummary* summary_out = nullptr) {
    std::ifstream in(path);
    if (!in) fail("cannot open mesh file: " + path);

    std::vector<Vec3> positions;
    std::vector<Vec2> uvs;
    TriangleMesh mesh;
    std::string mtllib;
    bool any_missing_uv = false;

    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream is(line);
        std::string key;
        is >> key;
        if (key == "v") {
            Vec3 p;
            is >> p.x >> p.y >> p.z;
            positions.push_back(p);
        } else if (key == "vt") {
            Vec2 t;
            is >> t.x >> t.y;
            uvs.push_back(t);
        } else if (key == "mtllib") {
            is >> mtllib;
        } else if (key == "f") {
            std::vector<std::string> corners;
            std::string tok;
            while (is >> tok) corners.push_back(tok);
            if (corners.size() != 3)
                fail("non-triangle face in " + path + ": triangulate the mesh first");
            std::array<int, 3> fi{};
            std::array<Vec2, 3> fuv{};
            for (int k = 0; k < 3; ++k) {
                int vi = 0, ti = 0;
                detail::parse_face_corner(corners[k], vi, ti);
                require(vi > 0 && vi <= (int)positions.size(),
                        "face vertex index out of range in " + path);
                fi[k] = vi - 1;
                if (ti <= 0 || ti > (int)uvs.size()) {
                    any_missing_uv = true;
                } else {
                    fuv[k] = uvs[ti - 1];
                }
            }
            mesh.faces.push_back(fi);
            mesh.face_uvs.push_back(fuv);
        }
    }
    if (mesh.faces.empty()) fail("no faces found in " + path);
    if (any_missing_uv || uvs.empty()) fail("mesh lacks parameterization: " + path);
    mesh.vertices = std::move(positions);

    std::string tex_path = detail::find_texture_path(path, mtllib);
    mesh.texture = load_png(tex_path);  // fails hard if unreadable

    LoadSummary summary = validate_and_normalize(mesh, path);
    if (summary_out) *summary_out = summary;
    return mesh;
}

// Writes an OBJ (+ .mtl + texture PNG). UV pairs are deduplicated exactly.
inline void save_mesh(const TriangleMesh& mesh, const std::string& obj_path) {
    namespace fs = std::filesystem;
    fs::path objp(obj_path);
    fs::path mtlp = objp;
    mtlp.replace_extension(".mtl");
    fs::path texp = objp;
    texp.replace_extension(".png");

    std::map<std::pair<double, double>, int> uv_index;
    std::vector<Vec2> uv_list;
    std::vector<std::array<int, 3>> face_uv_ids(mesh.faces.size());
    for (size_t f = 0; f < mesh.faces.size(); ++f)
        for (int k = 0; k < 3; ++k) {
            const Vec2& uv = mesh.face_uvs[f][k];
            auto [it, inserted] = uv_index.try_emplace({uv.x, uv.y}, (int)uv_list.size());
            if (inserted) uv_list.push_back(uv);
            face_uv_ids[f][k] = it->second;
        }

    std::ofstream out(objp);
    if (!out) fail("cannot write mesh file: " + obj_path);
    out << "mtllib " << mtlp.filename().string() << "\n";
    char buf[256];
    for (const Vec3& v : mesh.vertices) {
        std::snprintf(buf, sizeof(buf), "v %.17g %.17g %.17g\n", v.x, v.y, v.z);
        out << buf;
    }
    for (const Vec2& t : uv_list) {
        std::snprintf(buf, sizeof(buf), "vt %.17g %.17g\n", t.x, t.y);
        out << buf;
    }
    out << "usemtl material0\n";
    for (size_t f = 0; f < mesh.faces.size(); ++f) {
        out << 'f';
        for (int k = 0; k < 3; ++k)
            out << ' ' << mesh.faces[f][k] + 1 << '/' << face_uv_ids[f][k] + 1;
        out << '\n';
    }
    out.close();

    std::ofstream mtl(mtlp);
    mtl << "newmtl material0\nmap_Kd " << texp.filename().string() << "\n";
    mtl.close();

    if (mesh.texture.width > 0) save_png(mesh.texture, texp.string());
}

}  // namespace texlet
