// partition.hpp — greedy dual-edge contraction clustering. Starting from one
// cluster per face, repeatedly contracts the cheapest dual edge until the
// requested cluster count is reached. The merge cost combines plane-fit
// error increase, normal deviation, boundary compactness and a face-count
// capacity term; merges whose union folds over its fit plane are rejected.
//
// Cluster statistics (raw area-weighted moments, normal sums, boundary
// length) are maintained additively across merges; the fit plane is the
// smallest-variance direction of the area-weighted centroid scatter.
#pragma once

#include <cmath>
#include <limits>
#include <map>
#include <queue>
#include <sstream>
#include <vector>

#include "texlet/mesh.hpp"

namespace texlet {

inline constexpr double kInfCost = std::numeric_limits<double>::infinity();

struct CostWeights {
    double w_fit = 1.0;
    double w_dir = 1.0;
    double w_shape = 0.5;
    double w_count = 0.25;

    void validate() const {
        require(w_fit >= 0 && w_dir >= 0 && w_shape >= 0 && w_count >= 0,
                "cost weights must be >= 0");
        require(w_fit + w_dir + w_shape + w_count > 0, "at least one cost weight must be > 0");
    }
};

struct PlaneFit {
    Vec3 normal{0, 0, 1};  // unit, oriented along the cluster mean normal
    double offset = 0;     // plane: dot(normal, x) = offset
    double error = 0;      // area-weighted sum of squared centroid distances
};

struct Cluster {
    std::vector<int> face_ids;
    int count = 0;
    double area = 0;
    double boundary_len = 0;
    // raw moments: sum a*c, sum a*c*c^T, sum a*n over member faces
    Vec3 centroid_sum{};
    SymMat3 moment{};
    Vec3 normal_sum{};
    // derived
    PlaneFit plane;
    Vec3 mean_normal{0, 0, 1};

    static Cluster from_face(const TriangleMesh& mesh, const FaceAttributes& fa, int f) {
        Cluster c;
        c.face_ids = {f};
        c.count = 1;
        c.area = fa.area;
        c.centroid_sum = fa.centroid * fa.area;
        c.moment = SymMat3::outer(fa.centroid, fa.area);
        c.normal_sum = fa.normal * fa.area;
        for (int k = 0; k < 3; ++k)
            c.boundary_len += norm(mesh.corner(f, (k + 1) % 3) - mesh.corner(f, k));
        c.plane.normal = fa.normal;
        c.plane.offset = dot(fa.normal, fa.centroid);
        c.plane.error = 0;
        c.mean_normal = fa.normal;
        return c;
    }
};

// Least-squares plane of area-weighted centroids from raw moments. When the
// scatter is rank-deficient (one or two centroids, collinear centroids) the
// normal direction is ambiguous inside the small-eigenvalue subspace; we pick
// the direction closest to the mean face normal, which also fixes the sign.
inline PlaneFit fit_plane(const Vec3& centroid_sum, const SymMat3& moment, double area,
                          const Vec3& normal_sum) {
    PlaneFit out;
    if (area <= 0) return out;
    Vec3 mu = centroid_sum / area;
    SymMat3 scatter = moment - SymMat3::outer(mu, area);
    EigenDecomp3 eig = eigen_sym3(scatter);
    double lmax = std::max(std::abs(eig.values[2]), 1e-300);
    double tol = 1e-8 * lmax;

    Vec3 guide = normal_sum;
    Vec3 proj{0, 0, 0};
    for (int i = 0; i < 3; ++i)
        if (eig.values[i] <= eig.values[0] + tol)
            proj += eig.vectors[i] * dot(eig.vectors[i], guide);
    Vec3 n = norm(proj) > 1e-12 ? normalized(proj) : eig.vectors[0];
    if (dot(n, normal_sum) < 0) n = n * -1.0;

    out.normal = n;
    out.offset = dot(n, mu);
    out.error = std::max(eig.values[0], 0.0);
    return out;
}

inline PlaneFit fit_plane(const Cluster& c) {
    return fit_plane(c.centroid_sum, c.moment, c.area, c.normal_sum);
}

// --- cost terms --------------------------------------------------------------

// Increase in plane-fit error caused by merging a and b (>= 0 up to rounding).
inline double fit_error_increase(const Cluster& a, const Cluster& b) {
    PlaneFit u = fit_plane(a.centroid_sum + b.centroid_sum, a.moment + b.moment, a.area + b.area,
                           a.normal_sum + b.normal_sum);
    return u.error - a.plane.error - b.plane.error;
}

// Area-weighted mean angle between member face normals and the union's
// area-weighted mean normal, in radians.
inline double mean_normal_deviation(const std::vector<FaceAttributes>& attrs, const Cluster& a,
                                    const Cluster& b) {
    Vec3 mean = normalized(a.normal_sum + b.normal_sum);
    double total = 0, area = 0;
    for (const Cluster* c : {&a, &b})
        for (int f : c->face_ids) {
            total += attrs[f].area * angle_between(attrs[f].normal, mean);
            area += attrs[f].area;
        }
    return area > 0 ? total / area : 0.0;
}

// Isoperimetric compactness deficit of the union: perimeter^2/(4*pi*area) - 1,
// clamped at 0 (a disk scores 0, thin strips score high).
inline double compactness_deficit(const Cluster& a, const Cluster& b, double shared_len) {
    double boundary = std::max(a.boundary_len + b.boundary_len - 2.0 * shared_len, 0.0);
    double area = a.area + b.area;
    if (area <= 0) return 0.0;
    double v = boundary * boundary / (4.0 * 3.14159265358979323846 * area) - 1.0;
    return std::max(v, 0.0);
}

// |capacity - union face count| / capacity.
inline double capacity_deviation(const Cluster& a, const Cluster& b, int n_cap) {
    require(n_cap >= 1, "n_cap must be >= 1");
    return std::abs((double)n_cap - (double)(a.count + b.count)) / (double)n_cap;
}

struct MergeCost {
    double total = kInfCost;
    double e_fit = 0, e_dir = 0, e_shape = 0, e_count = 0;
    PlaneFit union_plane;
    bool foldover = false;
};

// Weighted merge cost; +inf when any member normal does not point to the same
// side as the union fit plane (the projection fold-over guard).
inline MergeCost merge_cost(const std::vector<FaceAttributes>& attrs, const Cluster& a,
                            const Cluster& b, double shared_len, const CostWeights& w, int n_cap) {
    MergeCost mc;
    mc.union_plane = fit_plane(a.centroid_sum + b.centroid_sum, a.moment + b.moment,
                               a.area + b.area, a.normal_sum + b.normal_sum);

    Vec3 mean = normalized(a.normal_sum + b.normal_sum);
    double dev = 0, area = 0;
    for (const Cluster* c : {&a, &b})
        for (int f : c->face_ids) {
            if (dot(attrs[f].normal, mc.union_plane.normal) <= 0.0) {
                mc.foldover = true;
                return mc;  // total stays +inf
            }
            dev += attrs[f].area * angle_between(attrs[f].normal, mean);
            area += attrs[f].area;
        }

    mc.e_fit = mc.union_plane.error - a.plane.error - b.plane.error;
    mc.e_dir = area > 0 ? dev / area : 0.0;
    mc.e_shape = compactness_deficit(a, b, shared_len);
    mc.e_count = capacity_deviation(a, b, n_cap);
    mc.total = w.w_fit * mc.e_fit + w.w_dir * mc.e_dir + w.w_shape * mc.e_shape +
               w.w_count * mc.e_count;
    return mc;
}

struct PatchClustering {
    std::vector<Cluster> clusters;
    std::vector<int> face_to_cluster;
    int n_target = 0;
    int n_cap = 0;
    CostWeights weights;
    bool target_reached = true;

    int size() const { return (int)clusters.size(); }
};

// --- greedy contraction -------------------------------------------------------

inline PatchClustering partition_mesh(const TriangleMesh& mesh, const DualGraph& graph,
                                      int n_target, const CostWeights& weights) {
    weights.validate();
    int nf = mesh.face_count();
    require(n_target >= 1 && n_target <= nf, "n_target must be in [1, face_count]");
    int n_cap = (nf + n_target - 1) / n_target;

    std::vector<FaceAttributes> attrs = face_attributes(mesh);

    struct State {
        Cluster cluster;
        std::map<int, double> nbrs;  // neighbor id -> shared boundary length
        int version = 0;
        bool alive = true;
    };
    std::vector<State> st(nf);
    for (int f = 0; f < nf; ++f) st[f].cluster = Cluster::from_face(mesh, attrs[f], f);
    for (const auto& e : graph.edges) {
        st[e.a].nbrs[e.b] += e.shared_len;
        st[e.b].nbrs[e.a] += e.shared_len;
    }

    struct QEntry {
        double cost;
        int a, b;          // cluster ids, a < b
        int va, vb;        // version stamps at push time
    };
    struct QCompare {
        bool operator()(const QEntry& x, const QEntry& y) const {
            if (x.cost != y.cost) return x.cost > y.cost;  // min-heap
            if (x.a != y.a) return x.a > y.a;              // lexicographic tie-break
            return x.b > y.b;
        }
    };
    std::priority_queue<QEntry, std::vector<QEntry>, QCompare> queue;

    auto push_edge = [&](int a, int b) {
        if (a > b) std::swap(a, b);
        double shared = st[a].nbrs.at(b);
        MergeCost mc = merge_cost(attrs, st[a].cluster, st[b].cluster, shared, weights, n_cap);
        queue.push({mc.total, a, b, st[a].version, st[b].version});
    };

    for (int a = 0; a < nf; ++a)
        for (const auto& [b, len] : st[a].nbrs)
            if (b > a) push_edge(a, b);

    int alive = nf;
    bool exhausted = false;
    while (alive > n_target) {
        if (queue.empty()) {
            exhausted = true;
            break;
        }
        QEntry top = queue.top();
        queue.pop();
        if (!st[top.a].alive || !st[top.b].alive) continue;
        if (st[top.a].version != top.va || st[top.b].version != top.vb) continue;
        if (std::isinf(top.cost)) {
            exhausted = true;  // min-heap: every remaining live edge is +inf
            break;
        }

        int w = top.a, l = top.b;  // merge loser into winner; winner keeps min id
        State& sw = st[w];
        State& sl = st[l];
        double shared = sw.nbrs.at(l);

        Cluster& cw = sw.cluster;
        Cluster& cl = sl.cluster;
        cw.count += cl.count;
        cw.area += cl.area;
        cw.boundary_len = std::max(cw.boundary_len + cl.boundary_len - 2.0 * shared, 0.0);
        cw.centroid_sum += cl.centroid_sum;
        cw.moment += cl.moment;
        cw.normal_sum += cl.normal_sum;
        if (cw.face_ids.size() < cl.face_ids.size()) cw.face_ids.swap(cl.face_ids);
        cw.face_ids.insert(cw.face_ids.end(), cl.face_ids.begin(), cl.face_ids.end());
        cl.face_ids.clear();
        cl.face_ids.shrink_to_fit();
        cw.plane = fit_plane(cw);
        cw.mean_normal = normalized(cw.normal_sum);

        // merge adjacency, dropping the contracted edge
        sw.nbrs.erase(l);
        sl.nbrs.erase(w);
        for (const auto& [n, len] : sl.nbrs) {
            sw.nbrs[n] += len;
            st[n].nbrs.erase(l);
            st[n].nbrs[w] = sw.nbrs[n];
        }
        sl.nbrs.clear();
        sl.alive = false;
        sw.version++;
        alive--;

        for (const auto& [n, len] : sw.nbrs) push_edge(w, n);
    }

    PatchClustering out;
    out.n_target = n_target;
    out.n_cap = n_cap;
    out.weights = weights;
    out.target_reached = !exhausted && alive == n_target;
    out.face_to_cluster.assign(nf, -1);
    for (int i = 0; i < nf; ++i) {
        if (!st[i].alive) continue;
        Cluster c = std::move(st[i].cluster);
        std::sort(c.face_ids.begin(), c.face_ids.end());
        int idx = (int)out.clusters.size();
        for (int f : c.face_ids) out.face_to_cluster[f] = idx;
        out.clusters.push_back(std::move(c));
    }
    return out;
}

// --- clustering text document --------------------------------------------------

inline void save_clustering(const PatchClustering& pc, const std::string& path) {
    std::ofstream out(path);
    if (!out) fail("cannot write clustering file: " + path);
    char buf[256];
    out << "texlet-clustering v1\n";
    out << "clusters = " << pc.clusters.size() << "\n";
    out << "faces = " << pc.face_to_cluster.size() << "\n";
    out << "n_target = " << pc.n_target << "\n";
    out << "n_cap = " << pc.n_cap << "\n";
    std::snprintf(buf, sizeof(buf), "weights = %.17g %.17g %.17g %.17g\n", pc.weights.w_fit,
                  pc.weights.w_dir, pc.weights.w_shape, pc.weights.w_count);
    out << buf;
    out << "target_reached = " << (pc.target_reached ? 1 : 0) << "\n";
    for (size_t i = 0; i < pc.clusters.size(); ++i) {
        const Cluster& c = pc.clusters[i];
        out << "cluster " << i << "\n";
        out << "faces";
        for (int f : c.face_ids) out << ' ' << f;
        out << "\n";
        std::snprintf(buf, sizeof(buf), "plane %.17g %.17g %.17g %.17g\n", c.plane.normal.x,
                      c.plane.normal.y, c.plane.normal.z, c.plane.offset);
        out << buf;
        std::snprintf(buf, sizeof(buf), "stats %.17g %.17g %.17g %d\n", c.plane.error, c.area,
                      c.boundary_len, c.count);
        out << buf;
    }
}

// Rebuilds a PatchClustering from face lists, recomputing all statistics from
// the mesh so loaded and freshly computed clusterings behave identically.
inline PatchClustering load_clustering(const TriangleMesh& mesh, const std::string& path) {
    std::ifstream in(path);
    if (!in) fail("cannot open clustering file: " + path);
    std::string line;
    std::getline(in, line);
    require(line == "texlet-clustering v1", "not a texlet clustering file: " + path);

    std::vector<FaceAttributes> attrs = face_attributes(mesh);
    PatchClustering pc;
    pc.face_to_cluster.assign(mesh.face_count(), -1);

    auto rebuild = [&](const std::vector<int>& face_ids) {
        require(!face_ids.empty(), "empty cluster in " + path);
        Cluster c = Cluster::from_face(mesh, attrs[face_ids[0]], face_ids[0]);
        for (size_t i = 1; i < face_ids.size(); ++i) {
            int f = face_ids[i];
            Cluster add = Cluster::from_face(mesh, attrs[f], f);
            c.count += add.count;
            c.area += add.area;
            c.centroid_sum += add.centroid_sum;
            c.moment += add.moment;
            c.normal_sum += add.normal_sum;
            c.face_ids.push_back(f);
        }
        std::sort(c.face_ids.begin(), c.face_ids.end());
        c.plane = fit_plane(c);
        c.mean_normal = normalized(c.normal_sum);
        // boundary length from scratch: mesh edges not shared inside the cluster
        std::map<std::pair<int, int>, int> edge_use;
        for (int f : c.face_ids) {
            const auto& fc = mesh.faces[f];
            for (int k = 0; k < 3; ++k) {
                int u = fc[k], v = fc[(k + 1) % 3];
                edge_use[u < v ? std::pair{u, v} : std::pair{v, u}]++;
            }
        }
        c.boundary_len = 0;
        for (const auto& [e, uses] : edge_use)
            if (uses == 1) c.boundary_len += norm(mesh.vertices[e.first] - mesh.vertices[e.second]);
        return c;
    };

    while (std::getline(in, line)) {
        std::istringstream is(line);
        std::string key;
        is >> key;
        if (key == "n_target") {
            std::string eq;
            is >> eq >> pc.n_target;
        } else if (key == "n_cap") {
            std::string eq;
            is >> eq >> pc.n_cap;
        } else if (key == "weights") {
            std::string eq;
            is >> eq >> pc.weights.w_fit >> pc.weights.w_dir >> pc.weights.w_shape >>
                pc.weights.w_count;
        } else if (key == "target_reached") {
            std::string eq;
            int v = 1;
            is >> eq >> v;
            pc.target_reached = v != 0;
        } else if (key == "faces" && line.find('=') == std::string::npos) {
            std::vector<int> ids;
            int f;
            while (is >> f) {
                require(f >= 0 && f < mesh.face_count(), "face id out of range in " + path);
                ids.push_back(f);
            }
            int idx = (int)pc.clusters.size();
            for (int f2 : ids) {
                require(pc.face_to_cluster[f2] == -1, "face assigned twice in " + path);
                pc.face_to_cluster[f2] = idx;
            }
            pc.clusters.push_back(rebuild(ids));
        }
    }
    for (int f = 0; f < mesh.face_count(); ++f)
        require(pc.face_to_cluster[f] >= 0, "clustering does not cover all faces: " + path);
    return pc;
}

}  // namespace texlet
