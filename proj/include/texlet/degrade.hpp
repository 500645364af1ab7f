// degrade.hpp — synthetic low-quality counterparts for paired training.
// Fixed stage order: Gaussian blur -> bilinear down+up resample -> additive
// Gaussian noise -> baseline JPEG round trip. Output is a pure function of
// (texture, config); noise uses counter-based draws keyed by texel index so
// the result does not depend on evaluation order.
#pragma once

#include <cmath>
#include <vector>

#include "texlet/common.hpp"
#include "texlet/image.hpp"

namespace texlet {

struct DegradeConfig {
    uint64_t seed = 0;
    int downsample_factor = 1;  // {1, 2, 4}
    double blur_sigma = 0.0;    // [0, 3]
    double noise_sigma = 0.0;   // [0, 10], in 8-bit units
    int jpeg_quality = 100;     // [30, 100]; 100 bypasses encoding

    void validate() const {
        require(downsample_factor == 1 || downsample_factor == 2 || downsample_factor == 4,
                "downsample_factor must be 1, 2 or 4");
        require(blur_sigma >= 0.0 && blur_sigma <= 3.0, "blur_sigma must be in [0,3]");
        require(noise_sigma >= 0.0 && noise_sigma <= 10.0, "noise_sigma must be in [0,10]");
        require(jpeg_quality >= 30 && jpeg_quality <= 100, "jpeg_quality must be in [30,100]");
    }
};

namespace detail {

// Separable Gaussian with wrap addressing (tileable textures); kernel radius
// ceil(3*sigma), discretely normalized. Wrap keeps the image mean exact.
inline ImageRGB gaussian_blur_wrap(const ImageRGB& img, double sigma) {
    int radius = (int)std::ceil(3.0 * sigma);
    std::vector<double> kernel(2 * radius + 1);
    double sum = 0;
    for (int i = -radius; i <= radius; ++i) {
        kernel[i + radius] = std::exp(-(double)i * i / (2.0 * sigma * sigma));
        sum += kernel[i + radius];
    }
    for (double& k : kernel) k /= sum;

    auto wrap = [](int i, int n) { return ((i % n) + n) % n; };
    ImageRGB tmp(img.width, img.height);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            double acc[3] = {0, 0, 0};
            for (int i = -radius; i <= radius; ++i) {
                const float* p = img.at(wrap(x + i, img.width), y);
                for (int c = 0; c < 3; ++c) acc[c] += kernel[i + radius] * p[c];
            }
            tmp.set(x, y, (float)acc[0], (float)acc[1], (float)acc[2]);
        }
    ImageRGB out(img.width, img.height);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            double acc[3] = {0, 0, 0};
            for (int i = -radius; i <= radius; ++i) {
                const float* p = tmp.at(x, wrap(y + i, img.height));
                for (int c = 0; c < 3; ++c) acc[c] += kernel[i + radius] * p[c];
            }
            out.set(x, y, (float)acc[0], (float)acc[1], (float)acc[2]);
        }
    return out;
}

inline ImageRGB resize_bilinear(const ImageRGB& img, int w, int h) {
    ImageRGB out(w, h);
    double sx = (double)img.width / w, sy = (double)img.height / h;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            float rgb[3];
            bilinear_sample(img, (x + 0.5) * sx, (y + 0.5) * sy, rgb);
            out.set(x, y, rgb[0], rgb[1], rgb[2]);
        }
    return out;
}

inline double counter_normal(uint64_t seed, uint64_t key) {
    uint64_t s1 = hash_combine(seed, 2 * key);
    uint64_t s2 = hash_combine(seed, 2 * key + 1);
    double u1 = (double)((splitmix64(s1) >> 11) + 1) * 0x1.0p-53;  // (0,1]
    double u2 = (double)(splitmix64(s2) >> 11) * 0x1.0p-53;        // [0,1)
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(6.283185307179586476925286766559 * u2);
}

}  // namespace detail

inline ImageRGB degrade_texture(const ImageRGB& texture, const DegradeConfig& cfg) {
    cfg.validate();
    ImageRGB img = texture;

    if (cfg.blur_sigma > 0.0) img = detail::gaussian_blur_wrap(img, cfg.blur_sigma);

    if (cfg.downsample_factor > 1) {
        int w = std::max(img.width / cfg.downsample_factor, 1);
        int h = std::max(img.height / cfg.downsample_factor, 1);
        img = detail::resize_bilinear(detail::resize_bilinear(img, w, h), texture.width,
                                      texture.height);
    }

    if (cfg.noise_sigma > 0.0) {
        double s = cfg.noise_sigma / 255.0;
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x) {
                float* p = img.at(x, y);
                uint64_t base = ((uint64_t)y * img.width + x) * 3;
                for (int c = 0; c < 3; ++c) {
                    double v = p[c] + s * detail::counter_normal(cfg.seed, base + c);
                    p[c] = (float)std::clamp(v, 0.0, 1.0);
                }
            }
    }

    if (cfg.jpeg_quality < 100) img = jpeg_roundtrip(img, cfg.jpeg_quality);
    return img;
}

}  // namespace texlet
