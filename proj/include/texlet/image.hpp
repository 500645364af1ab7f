// image.hpp — RGB raster with float channels in [0,1], PNG file I/O and an
// in-memory baseline JPEG round trip. Row 0 is the top of the image; UV
// sampling flips v so v=0 is the bottom edge (Wavefront convention).
#pragma once

#include <jpeglib.h>
#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <string>
#include <vector>

#include "texlet/common.hpp"
#include "texlet/vec.hpp"

namespace texlet {

struct ImageRGB {
    int width = 0;
    int height = 0;
    std::vector<float> px;  // row-major, 3 channels per pixel

    ImageRGB() = default;
    ImageRGB(int w, int h, float fill = 0.0f) : width(w), height(h), px((size_t)w * h * 3, fill) {}

    float* at(int x, int y) { return &px[((size_t)y * width + x) * 3]; }
    const float* at(int x, int y) const { return &px[((size_t)y * width + x) * 3]; }

    void set(int x, int y, float r, float g, float b) {
        float* p = at(x, y);
        p[0] = r; p[1] = g; p[2] = b;
    }

    bool same_size(const ImageRGB& o) const { return width == o.width && height == o.height; }

    bool operator==(const ImageRGB& o) const {
        return width == o.width && height == o.height && px == o.px;
    }
};

inline unsigned char to_byte(float v) {
    float s = std::floor(v * 255.0f + 0.5f);
    return (unsigned char)std::clamp(s, 0.0f, 255.0f);
}

inline float from_byte(unsigned char b) { return (float)b / 255.0f; }

// Bilinear sample at a continuous pixel coordinate where texel (i,j) has its
// center at (i+0.5, j+0.5). Coordinates are clamped to the valid domain.
inline void bilinear_sample(const ImageRGB& img, double x, double y, float out[3]) {
    double fx = x - 0.5, fy = y - 0.5;
    fx = std::clamp(fx, 0.0, (double)img.width - 1.0);
    fy = std::clamp(fy, 0.0, (double)img.height - 1.0);
    int x0 = std::min((int)fx, img.width - 1);
    int y0 = std::min((int)fy, img.height - 1);
    int x1 = std::min(x0 + 1, img.width - 1);
    int y1 = std::min(y0 + 1, img.height - 1);
    double tx = fx - x0, ty = fy - y0;
    const float* p00 = img.at(x0, y0);
    const float* p10 = img.at(x1, y0);
    const float* p01 = img.at(x0, y1);
    const float* p11 = img.at(x1, y1);
    for (int c = 0; c < 3; ++c) {
        double a = p00[c] * (1.0 - tx) + p10[c] * tx;
        double b = p01[c] * (1.0 - tx) + p11[c] * tx;
        out[c] = (float)(a * (1.0 - ty) + b * ty);
    }
}

// Sample by UV in [0,1]^2, v=0 at the bottom row.
inline void sample_uv(const ImageRGB& img, double u, double v, float out[3]) {
    bilinear_sample(img, u * img.width, (1.0 - v) * img.height, out);
}

inline double luma(const float* p) { return 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]; }

// ---------------------------------------------------------------------------
// PNG I/O (libpng). Everything is converted to 8-bit RGB on read.

inline ImageRGB load_png(const std::string& path) {
    FILE* fp = std::fopen(path.c_str(), "rb");
    if (!fp) fail("cannot open image file: " + path);

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        if (png) png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        fail("libpng initialization failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        fail("failed to decode PNG: " + path);
    }

    png_init_io(png, fp);
    png_read_info(png, info);

    png_uint_32 w = png_get_image_width(png, info);
    png_uint_32 h = png_get_image_height(png, info);
    int color = png_get_color_type(png, info);
    int depth = png_get_bit_depth(png, info);

    if (depth == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA)
        png_set_gray_to_rgb(png);
    if (color & PNG_COLOR_MASK_ALPHA || png_get_valid(png, info, PNG_INFO_tRNS))
        png_set_strip_alpha(png);
    png_read_update_info(png, info);

    std::vector<unsigned char> row((size_t)w * 3);
    ImageRGB img((int)w, (int)h);
    for (png_uint_32 y = 0; y < h; ++y) {
        png_read_row(png, row.data(), nullptr);
        for (png_uint_32 x = 0; x < w; ++x) {
            float* p = img.at((int)x, (int)y);
            p[0] = from_byte(row[x * 3 + 0]);
            p[1] = from_byte(row[x * 3 + 1]);
            p[2] = from_byte(row[x * 3 + 2]);
        }
    }
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    return img;
}

inline void save_png(const ImageRGB& img, const std::string& path) {
    FILE* fp = std::fopen(path.c_str(), "wb");
    if (!fp) fail("cannot write image file: " + path);

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        if (png) png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        fail("libpng initialization failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        fail("failed to encode PNG: " + path);
    }

    png_init_io(png, fp);
    png_set_IHDR(png, info, img.width, img.height, 8, PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);

    std::vector<unsigned char> row((size_t)img.width * 3);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            const float* p = img.at(x, y);
            row[x * 3 + 0] = to_byte(p[0]);
            row[x * 3 + 1] = to_byte(p[1]);
            row[x * 3 + 2] = to_byte(p[2]);
        }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
}

// ---------------------------------------------------------------------------
// In-memory baseline-sequential JPEG round trip (libjpeg).

namespace detail {

struct JpegErrorMgr {
    jpeg_error_mgr pub;
    std::jmp_buf jump;
};

inline void jpeg_error_exit(j_common_ptr cinfo) {
    auto* mgr = reinterpret_cast<JpegErrorMgr*>(cinfo->err);
    std::longjmp(mgr->jump, 1);
}

}  // namespace detail

// Encode to baseline JPEG at `quality` and decode back. Input/output sizes match.
inline ImageRGB jpeg_roundtrip(const ImageRGB& img, int quality) {
    std::vector<unsigned char> bytes((size_t)img.width * img.height * 3);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            const float* p = img.at(x, y);
            unsigned char* b = &bytes[((size_t)y * img.width + x) * 3];
            b[0] = to_byte(p[0]); b[1] = to_byte(p[1]); b[2] = to_byte(p[2]);
        }

    detail::JpegErrorMgr err;
    unsigned char* encoded = nullptr;
    unsigned long encoded_size = 0;

    {
        jpeg_compress_struct cinfo;
        cinfo.err = jpeg_std_error(&err.pub);
        err.pub.error_exit = detail::jpeg_error_exit;
        if (setjmp(err.jump)) {
            jpeg_destroy_compress(&cinfo);
            if (encoded) free(encoded);
            fail("JPEG encode failed");
        }
        jpeg_create_compress(&cinfo);
        jpeg_mem_dest(&cinfo, &encoded, &encoded_size);
        cinfo.image_width = img.width;
        cinfo.image_height = img.height;
        cinfo.input_components = 3;
        cinfo.in_color_space = JCS_RGB;
        jpeg_set_defaults(&cinfo);
        jpeg_set_quality(&cinfo, quality, TRUE);
        cinfo.optimize_coding = FALSE;  // baseline sequential
        jpeg_start_compress(&cinfo, TRUE);
        while (cinfo.next_scanline < cinfo.image_height) {
            JSAMPROW row = &bytes[(size_t)cinfo.next_scanline * img.width * 3];
            jpeg_write_scanlines(&cinfo, &row, 1);
        }
        jpeg_finish_compress(&cinfo);
        jpeg_destroy_compress(&cinfo);
    }

    ImageRGB out(img.width, img.height);
    {
        jpeg_decompress_struct dinfo;
        dinfo.err = jpeg_std_error(&err.pub);
        err.pub.error_exit = detail::jpeg_error_exit;
        if (setjmp(err.jump)) {
            jpeg_destroy_decompress(&dinfo);
            free(encoded);
            fail("JPEG decode failed");
        }
        jpeg_create_decompress(&dinfo);
        jpeg_mem_src(&dinfo, encoded, encoded_size);
        jpeg_read_header(&dinfo, TRUE);
        dinfo.out_color_space = JCS_RGB;
        jpeg_start_decompress(&dinfo);
        std::vector<unsigned char> row((size_t)dinfo.output_width * 3);
        int y = 0;
        while (dinfo.output_scanline < dinfo.output_height) {
            JSAMPROW rp = row.data();
            jpeg_read_scanlines(&dinfo, &rp, 1);
            for (int x = 0; x < out.width; ++x)
                out.set(x, y, from_byte(row[x * 3]), from_byte(row[x * 3 + 1]),
                        from_byte(row[x * 3 + 2]));
            ++y;
        }
        jpeg_finish_decompress(&dinfo);
        jpeg_destroy_decompress(&dinfo);
    }
    free(encoded);
    return out;
}

}  // namespace texlet
