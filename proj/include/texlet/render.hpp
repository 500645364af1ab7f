// render.hpp — minimal orthographic z-buffer rasterizer for textured meshes.
// Unlit: pixels carry the bilinearly sampled albedo only. The geometry pass
// (face id + interpolated UV per pixel) is separated from shading so one
// pass can be shaded with several textures.
#pragma once

#include <cmath>
#include <vector>

#include "texlet/image.hpp"
#include "texlet/mesh.hpp"

namespace texlet {

// Quasi-uniform view directions on the sphere (Fibonacci lattice).
struct ViewSet {
    int count = 0;
    std::vector<Vec3> camera_dirs;
    int image_size = 256;

    static ViewSet fibonacci(int k, int image_size) {
        require(k >= 1, "view count must be >= 1");
        ViewSet vs;
        vs.count = k;
        vs.image_size = image_size;
        const double golden_angle = 3.14159265358979323846 * (3.0 - std::sqrt(5.0));
        for (int i = 0; i < k; ++i) {
            double z = 1.0 - 2.0 * (i + 0.5) / k;
            double r = std::sqrt(std::max(1.0 - z * z, 0.0));
            double a = golden_angle * i;
            vs.camera_dirs.push_back({r * std::cos(a), r * std::sin(a), z});
        }
        return vs;
    }
};

// Per-pixel face id (-1 = background) and interpolated UV.
struct GBuffer {
    int size = 0;
    std::vector<int> face;
    std::vector<float> u, v;
};

struct RenderResult {
    ImageRGB image;
    std::vector<uint8_t> mask;  // coverage
};

namespace detail {

struct CameraBasis {
    Vec3 right, up, dir;  // dir points from the object toward the camera
};

inline CameraBasis camera_basis(const Vec3& camera_dir) {
    CameraBasis cb;
    cb.dir = normalized(camera_dir);
    Vec3 up0 = std::abs(cb.dir.z) < 0.999 ? Vec3{0, 0, 1} : Vec3{1, 0, 0};
    cb.right = normalized(cross(up0, cb.dir));
    cb.up = cross(cb.dir, cb.right);
    return cb;
}

}  // namespace detail

// Orthographic projection along -camera_dir framing the normalized mesh
// (unit bbox diagonal => everything fits in a half-extent of 0.51).
inline GBuffer render_gbuffer(const TriangleMesh& mesh, const std::vector<FaceAttributes>& attrs,
                              const Vec3& camera_dir, int size) {
    detail::CameraBasis cb = detail::camera_basis(camera_dir);
    const double half = 0.51;
    const double px_per_unit = size / (2.0 * half);

    GBuffer gb;
    gb.size = size;
    gb.face.assign((size_t)size * size, -1);
    gb.u.assign((size_t)size * size, 0.0f);
    gb.v.assign((size_t)size * size, 0.0f);
    std::vector<double> depth((size_t)size * size, -1e300);

    for (int f = 0; f < mesh.face_count(); ++f) {
        if (dot(attrs[f].normal, cb.dir) <= 0.0) continue;  // backface
        Vec2 s[3];
        double d[3];
        for (int k = 0; k < 3; ++k) {
            Vec3 p = mesh.corner(f, k);
            s[k] = {(dot(p, cb.right) + half) * px_per_unit,
                    (half - dot(p, cb.up)) * px_per_unit};
            d[k] = dot(p, cb.dir);
        }
        double denom = cross(s[1] - s[0], s[2] - s[0]);
        if (std::abs(denom) < 1e-300) continue;
        int x0 = std::max((int)std::floor(std::min({s[0].x, s[1].x, s[2].x})), 0);
        int x1 = std::min((int)std::ceil(std::max({s[0].x, s[1].x, s[2].x})), size - 1);
        int y0 = std::max((int)std::floor(std::min({s[0].y, s[1].y, s[2].y})), 0);
        int y1 = std::min((int)std::ceil(std::max({s[0].y, s[1].y, s[2].y})), size - 1);
        const auto& uv = mesh.face_uvs[f];
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x) {
                Vec2 p{x + 0.5, y + 0.5};
                double w0 = cross(s[1] - p, s[2] - p) / denom;
                double w1 = cross(s[2] - p, s[0] - p) / denom;
                double w2 = cross(s[0] - p, s[1] - p) / denom;
                if (w0 < -1e-12 || w1 < -1e-12 || w2 < -1e-12) continue;
                double z = w0 * d[0] + w1 * d[1] + w2 * d[2];
                size_t idx = (size_t)y * size + x;
                if (z <= depth[idx]) continue;
                depth[idx] = z;
                gb.face[idx] = f;
                gb.u[idx] = (float)(w0 * uv[0].x + w1 * uv[1].x + w2 * uv[2].x);
                gb.v[idx] = (float)(w0 * uv[0].y + w1 * uv[1].y + w2 * uv[2].y);
            }
    }
    return gb;
}

inline RenderResult shade_gbuffer(const GBuffer& gb, const ImageRGB& texture) {
    RenderResult rr;
    rr.image = ImageRGB(gb.size, gb.size, 0.0f);
    rr.mask.assign((size_t)gb.size * gb.size, 0);
    for (int y = 0; y < gb.size; ++y)
        for (int x = 0; x < gb.size; ++x) {
            size_t idx = (size_t)y * gb.size + x;
            if (gb.face[idx] < 0) continue;
            float rgb[3];
            sample_uv(texture, gb.u[idx], gb.v[idx], rgb);
            rr.image.set(x, y, rgb[0], rgb[1], rgb[2]);
            rr.mask[idx] = 1;
        }
    return rr;
}

inline RenderResult render_view(const TriangleMesh& mesh, const ImageRGB& texture,
                                const Vec3& camera_dir, int size) {
    std::vector<FaceAttributes> attrs = face_attributes(mesh);
    return shade_gbuffer(render_gbuffer(mesh, attrs, camera_dir, size), texture);
}

}  // namespace texlet
