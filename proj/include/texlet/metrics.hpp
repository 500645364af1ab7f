// metrics.hpp — masked PSNR and SSIM plus the multi-view evaluation loop.
// PSNR is computed over RGB with MAX=1 and capped at 99 dB; SSIM uses the
// standard 11x11 Gaussian window (sigma 1.5, C1=0.01^2, C2=0.03^2) on luma,
// restricted to pixels whose window lies fully inside the image.
#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <vector>

#include "texlet/image.hpp"
#include "texlet/render.hpp"

namespace texlet {

inline constexpr double kPsnrCap = 99.0;

inline double psnr(const ImageRGB& a, const ImageRGB& b, const std::vector<uint8_t>& mask) {
    require(a.same_size(b), "psnr: image sizes differ");
    require(mask.size() == (size_t)a.width * a.height, "psnr: mask size mismatch");
    double se = 0;
    long n = 0;
    for (int y = 0; y < a.height; ++y)
        for (int x = 0; x < a.width; ++x) {
            if (!mask[(size_t)y * a.width + x]) continue;
            const float* pa = a.at(x, y);
            const float* pb = b.at(x, y);
            for (int c = 0; c < 3; ++c) {
                double d = (double)pa[c] - pb[c];
                se += d * d;
            }
            ++n;
        }
    require(n > 0, "no covered pixels");
    double mse = se / (3.0 * n);
    if (mse <= 0) return kPsnrCap;
    return std::min(-10.0 * std::log10(mse), kPsnrCap);
}

inline double psnr(const ImageRGB& a, const ImageRGB& b) {
    return psnr(a, b, std::vector<uint8_t>((size_t)a.width * a.height, 1));
}

namespace detail {

// 1D Gaussian taps for the SSIM window.
inline std::vector<double> ssim_kernel() {
    std::vector<double> k(11);
    double sum = 0;
    for (int i = 0; i < 11; ++i) {
        double d = i - 5;
        k[i] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
        sum += k[i];
    }
    for (double& v : k) v /= sum;
    return k;
}

// Separable valid-region filtering of a scalar field.
inline std::vector<double> filter_valid(const std::vector<double>& src, int w, int h,
                                        const std::vector<double>& k) {
    std::vector<double> tmp((size_t)w * h, 0.0);
    for (int y = 0; y < h; ++y)
        for (int x = 5; x < w - 5; ++x) {
            double acc = 0;
            for (int i = -5; i <= 5; ++i) acc += k[i + 5] * src[(size_t)y * w + x + i];
            tmp[(size_t)y * w + x] = acc;
        }
    std::vector<double> out((size_t)w * h, 0.0);
    for (int y = 5; y < h - 5; ++y)
        for (int x = 5; x < w - 5; ++x) {
            double acc = 0;
            for (int i = -5; i <= 5; ++i) acc += k[i + 5] * tmp[(size_t)(y + i) * w + x];
            out[(size_t)y * w + x] = acc;
        }
    return out;
}

}  // namespace detail

inline double ssim(const ImageRGB& a, const ImageRGB& b, const std::vector<uint8_t>& mask) {
    require(a.same_size(b), "ssim: image sizes differ");
    require(a.width >= 11 && a.height >= 11, "ssim: images must be at least 11x11");
    require(mask.size() == (size_t)a.width * a.height, "ssim: mask size mismatch");
    const int w = a.width, h = a.height;

    std::vector<double> la((size_t)w * h), lb((size_t)w * h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            la[(size_t)y * w + x] = luma(a.at(x, y));
            lb[(size_t)y * w + x] = luma(b.at(x, y));
        }
    std::vector<double> laa((size_t)w * h), lbb((size_t)w * h), lab((size_t)w * h);
    for (size_t i = 0; i < la.size(); ++i) {
        laa[i] = la[i] * la[i];
        lbb[i] = lb[i] * lb[i];
        lab[i] = la[i] * lb[i];
    }

    std::vector<double> k = detail::ssim_kernel();
    std::vector<double> mu_a = detail::filter_valid(la, w, h, k);
    std::vector<double> mu_b = detail::filter_valid(lb, w, h, k);
    std::vector<double> m_aa = detail::filter_valid(laa, w, h, k);
    std::vector<double> m_bb = detail::filter_valid(lbb, w, h, k);
    std::vector<double> m_ab = detail::filter_valid(lab, w, h, k);

    const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    double total = 0;
    long n = 0;
    for (int y = 5; y < h - 5; ++y)
        for (int x = 5; x < w - 5; ++x) {
            size_t i = (size_t)y * w + x;
            if (!mask[i]) continue;
            double va = m_aa[i] - mu_a[i] * mu_a[i];
            double vb = m_bb[i] - mu_b[i] * mu_b[i];
            double cov = m_ab[i] - mu_a[i] * mu_b[i];
            double num = (2.0 * mu_a[i] * mu_b[i] + c1) * (2.0 * cov + c2);
            double den = (mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + c1) * (va + vb + c2);
            total += num / den;
            ++n;
        }
    require(n > 0, "no covered pixels");
    return total / n;
}

inline double ssim(const ImageRGB& a, const ImageRGB& b) {
    return ssim(a, b, std::vector<uint8_t>((size_t)a.width * a.height, 1));
}

struct MetricReport {
    double psnr_db = 0;
    double ssim = 0;
    std::vector<std::pair<double, double>> per_view;  // (psnr, ssim)

    std::string to_text(int image_size) const {
        std::ostringstream os;
        char buf[160];
        os << "texlet-metrics v1\n";
        os << "views = " << per_view.size() << "\n";
        os << "image_size = " << image_size << "\n";
        std::snprintf(buf, sizeof(buf), "psnr_db = %.17g\n", psnr_db);
        os << buf;
        std::snprintf(buf, sizeof(buf), "ssim = %.17g\n", ssim);
        os << buf;
        for (size_t i = 0; i < per_view.size(); ++i) {
            std::snprintf(buf, sizeof(buf), "view %zu psnr %.17g ssim %.17g\n", i,
                          per_view[i].first, per_view[i].second);
            os << buf;
        }
        return os.str();
    }
};

// Renders both textures from every view and aggregates masked metrics.
// `dump_dir` optionally receives per-view renders.
inline MetricReport evaluate(const TriangleMesh& mesh, const ImageRGB& texture_a,
                             const ImageRGB& texture_b, const ViewSet& views,
                             const std::string& dump_dir = "") {
    std::vector<FaceAttributes> attrs = face_attributes(mesh);
    MetricReport report;
    for (int i = 0; i < views.count; ++i) {
        GBuffer gb = render_gbuffer(mesh, attrs, views.camera_dirs[i], views.image_size);
        RenderResult ra = shade_gbuffer(gb, texture_a);
        RenderResult rb = shade_gbuffer(gb, texture_b);
        double p = psnr(ra.image, rb.image, ra.mask);
        double s = ssim(ra.image, rb.image, ra.mask);
        report.per_view.emplace_back(p, s);
        if (!dump_dir.empty()) {
            save_png(ra.image, dump_dir + "/view" + std::to_string(i) + "_a.png");
            save_png(rb.image, dump_dir + "/view" + std::to_string(i) + "_b.png");
        }
    }
    for (const auto& [p, s] : report.per_view) {
        report.psnr_db += p;
        report.ssim += s;
    }
    report.psnr_db /= report.per_view.size();
    report.ssim /= report.per_view.size();
    return report;
}

}  // namespace texlet
