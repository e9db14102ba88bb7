// Copyright 2026 The pimd Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <csetjmp>
#include <cstdlib>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include <jpeglib.h>
#include <png.h>

#include "pimd/core/errors.hpp"
#include "pimd/core/tensor.hpp"

namespace pimd {

/// Interleaved 8-bit pixels, row-major.
struct Bitmap {
    int width = 0, height = 0, channels = 0;
    std::vector<std::uint8_t> pixels;
};

/// Round-then-clamp quantization of a [0,1] float image.
template <typename T>
Bitmap to_bitmap(const Image<T>& img)
{
    Bitmap b{img.width(), img.height(), img.channels(), {}};
    b.pixels.resize(img.size());
    for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x)
            for (int c = 0; c < img.channels(); ++c) {
                const double v = std::round(static_cast<double>(img(c, y, x)) * 255.0);
                b.pixels[(static_cast<std::size_t>(y) * img.width() + x) * img.channels() + c] =
                    static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
            }
    return b;
}

/// Gray bitmaps expand to three identical channels; alpha is dropped.
template <typename T = float>
Image<T> from_bitmap(const Bitmap& b)
{
    Image<T> img(3, b.height, b.width);
    for (int y = 0; y < b.height; ++y)
        for (int x = 0; x < b.width; ++x) {
            const std::uint8_t* p = &b.pixels[(static_cast<std::size_t>(y) * b.width + x) * b.channels];
            for (int c = 0; c < 3; ++c) img(c, y, x) = static_cast<T>(p[b.channels >= 3 ? c : 0] / 255.0);
        }
    return img;
}

namespace detail {

struct JpegErrorMgr {
    jpeg_error_mgr pub;
    std::jmp_buf jump;
    char message[JMSG_LENGTH_MAX];
};

inline void jpeg_error_exit(j_common_ptr cinfo)
{
    auto* err = reinterpret_cast<JpegErrorMgr*>(cinfo->err);
    (*cinfo->err->format_message)(cinfo, err->message);
    std::longjmp(err->jump, 1);
}

inline void png_error_fn(png_structp png, png_const_charp msg)
{
    auto* text = static_cast<std::string*>(png_get_error_ptr(png));
    if (text) *text = msg;
    png_longjmp(png, 1);
}

inline void png_warning_fn(png_structp, png_const_charp) {}

inline void png_write_fn(png_structp png, png_bytep data, png_size_t len)
{
    auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
    out->insert(out->end(), data, data + len);
}

struct PngReader {
    const std::uint8_t* data;
    std::size_t size, pos;
};

inline void png_read_fn(png_structp png, png_bytep out, png_size_t len)
{
    auto* r = static_cast<PngReader*>(png_get_io_ptr(png));
    if (r->pos + len > r->size) png_error(png, "truncated PNG stream");
    std::copy_n(r->data + r->pos, len, out);
    r->pos += len;
}

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open '" + path.string() + "'");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes)
{
    std::ofstream out(path, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("cannot write '" + path.string() + "'");
}

}  // namespace detail

inline std::vector<std::uint8_t> encode_jpeg(const Bitmap& b, int quality)
{
    detail::require(quality >= 1 && quality <= 100, "encode_jpeg: quality must be in [1, 100]");
    detail::require(b.channels == 1 || b.channels == 3, "encode_jpeg: expected 1 or 3 channels");
    jpeg_compress_struct cinfo;
    detail::JpegErrorMgr err;
    cinfo.err = jpeg_std_error(&err.pub);
    err.pub.error_exit = detail::jpeg_error_exit;
    unsigned char* buf = nullptr;
    unsigned long len = 0;
    if (setjmp(err.jump)) {
        jpeg_destroy_compress(&cinfo);
        std::free(buf);
        throw CodecError(std::string("JPEG encode failed: ") + err.message);
    }
    jpeg_create_compress(&cinfo);
    jpeg_mem_dest(&cinfo, &buf, &len);
    cinfo.image_width = static_cast<JDIMENSION>(b.width);
    cinfo.image_height = static_cast<JDIMENSION>(b.height);
    cinfo.input_components = b.channels;
    cinfo.in_color_space = b.channels == 3 ? JCS_RGB : JCS_GRAYSCALE;
    jpeg_set_defaults(&cinfo);
    jpeg_set_quality(&cinfo, quality, TRUE);
    jpeg_start_compress(&cinfo, TRUE);
    while (cinfo.next_scanline < cinfo.image_height) {
        JSAMPROW row = const_cast<JSAMPROW>(&b.pixels[static_cast<std::size_t>(cinfo.next_scanline) * b.width * b.channels]);
        jpeg_write_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_compress(&cinfo);
    std::vector<std::uint8_t> out(buf, buf + len);
    jpeg_destroy_compress(&cinfo);
    std::free(buf);
    return out;
}

inline Bitmap decode_jpeg(const std::vector<std::uint8_t>& bytes)
{
    jpeg_decompress_struct cinfo;
    detail::JpegErrorMgr err;
    cinfo.err = jpeg_std_error(&err.pub);
    err.pub.error_exit = detail::jpeg_error_exit;
    if (setjmp(err.jump)) {
        jpeg_destroy_decompress(&cinfo);
        throw CodecError(std::string("JPEG decode failed: ") + err.message);
    }
    jpeg_create_decompress(&cinfo);
    jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
    jpeg_read_header(&cinfo, TRUE);
    cinfo.out_color_space = cinfo.num_components == 1 ? JCS_GRAYSCALE : JCS_RGB;
    jpeg_start_decompress(&cinfo);
    Bitmap b{static_cast<int>(cinfo.output_width), static_cast<int>(cinfo.output_height),
             static_cast<int>(cinfo.output_components), {}};
    b.pixels.resize(static_cast<std::size_t>(b.width) * b.height * b.channels);
    while (cinfo.output_scanline < cinfo.output_height) {
        JSAMPROW row = &b.pixels[static_cast<std::size_t>(cinfo.output_scanline) * b.width * b.channels];
        jpeg_read_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_decompress(&cinfo);
    jpeg_destroy_decompress(&cinfo);
    return b;
}

inline std::vector<std::uint8_t> encode_png(const Bitmap& b)
{
    detail::require(b.channels >= 1 && b.channels <= 4, "encode_png: unsupported channel count");
    std::string msg;
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &msg, detail::png_error_fn, detail::png_warning_fn);
    if (!png) throw CodecError("PNG encoder allocation failed");
    png_infop info = png_create_info_struct(png);
    std::vector<std::uint8_t> out;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw CodecError("PNG encode failed: " + msg);
    }
    static constexpr int kColor[] = {PNG_COLOR_TYPE_GRAY, PNG_COLOR_TYPE_GRAY_ALPHA, PNG_COLOR_TYPE_RGB,
                                     PNG_COLOR_TYPE_RGB_ALPHA};
    png_set_write_fn(png, &out, detail::png_write_fn, nullptr);
    png_set_IHDR(png, info, static_cast<png_uint_32>(b.width), static_cast<png_uint_32>(b.height), 8,
                 kColor[b.channels - 1], PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < b.height; ++y)
        png_write_row(png, &b.pixels[static_cast<std::size_t>(y) * b.width * b.channels]);
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    return out;
}

inline Bitmap decode_png(const std::vector<std::uint8_t>& bytes)
{
    std::string msg;
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &msg, detail::png_error_fn, detail::png_warning_fn);
    if (!png) throw CodecError("PNG decoder allocation failed");
    png_infop info = png_create_info_struct(png);
    detail::PngReader reader{bytes.data(), bytes.size(), 0};
    Bitmap b;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw CodecError("PNG decode failed: " + msg);
    }
    png_set_read_fn(png, &reader, detail::png_read_fn);
    png_read_info(png, info);
    png_set_expand(png);
    png_set_strip_16(png);
    png_set_palette_to_rgb(png);
    png_read_update_info(png, info);
    b.width = static_cast<int>(png_get_image_width(png, info));
    b.height = static_cast<int>(png_get_image_height(png, info));
    b.channels = png_get_channels(png, info);
    b.pixels.resize(static_cast<std::size_t>(b.width) * b.height * b.channels);
    std::vector<png_bytep> rows(b.height);
    for (int y = 0; y < b.height; ++y) rows[y] = &b.pixels[static_cast<std::size_t>(y) * b.width * b.channels];
    png_read_image(png, rows.data());
    png_destroy_read_struct(&png, &info, nullptr);
    return b;
}

/// JPEG round trip of a [0,1] image (quantized to 8 bits first).
template <typename T>
Image<T> jpeg_roundtrip(const Image<T>& img, int quality)
{
    return from_bitmap<T>(decode_jpeg(encode_jpeg(to_bitmap(img), quality)));
}

namespace detail {

struct AxisTap {
    int i0, i1;
    double w1;
};

// Source taps along one axis: sample k of n covers [lo, lo+len) of a size-`size` axis.
inline std::vector<AxisTap> axis_taps(int n, double lo, double len, int size)
{
    std::vector<AxisTap> taps(n);
    const double scale = len / n;
    for (int k = 0; k < n; ++k) {
        const double s = std::clamp(lo + (k + 0.5) * scale - 0.5, 0.0, static_cast<double>(size - 1));
        const int i0 = static_cast<int>(std::floor(s));
        taps[k] = {i0, std::min(i0 + 1, size - 1), s - i0};
    }
    return taps;
}

}  // namespace detail

/// Bilinear resample of the box [y0, y0+bh) x [x0, x0+bw) to out_h x out_w,
/// pixel-center aligned. The full image is the box (0, 0, h, w).
template <typename T>
Image<T> resize_bilinear(const Image<T>& src, int out_h, int out_w, double y0 = 0, double x0 = 0, double bh = -1,
                         double bw = -1)
{
    detail::require(out_h > 0 && out_w > 0, "resize_bilinear: empty output");
    if (bh < 0) bh = src.height();
    if (bw < 0) bw = src.width();
    const auto ty = detail::axis_taps(out_h, y0, bh, src.height());
    const auto tx = detail::axis_taps(out_w, x0, bw, src.width());
    Image<T> out(src.channels(), out_h, out_w);
    for (int c = 0; c < src.channels(); ++c)
        for (int y = 0; y < out_h; ++y)
            for (int x = 0; x < out_w; ++x) {
                const auto& a = ty[y];
                const auto& b = tx[x];
                const double top = src(c, a.i0, b.i0) * (1 - b.w1) + src(c, a.i0, b.i1) * b.w1;
                const double bot = src(c, a.i1, b.i0) * (1 - b.w1) + src(c, a.i1, b.i1) * b.w1;
                out(c, y, x) = static_cast<T>(top * (1 - a.w1) + bot * a.w1);
            }
    return out;
}

/// Adjoint of resize_bilinear with the same geometry.
template <typename T>
Image<T> resize_bilinear_adjoint(const Image<T>& grad_out, int src_h, int src_w, double y0 = 0, double x0 = 0,
                                 double bh = -1, double bw = -1)
{
    if (bh < 0) bh = src_h;
    if (bw < 0) bw = src_w;
    const auto ty = detail::axis_taps(grad_out.height(), y0, bh, src_h);
    const auto tx = detail::axis_taps(grad_out.width(), x0, bw, src_w);
    Image<T> g(grad_out.channels(), src_h, src_w);
    for (int c = 0; c < grad_out.channels(); ++c)
        for (int y = 0; y < grad_out.height(); ++y)
            for (int x = 0; x < grad_out.width(); ++x) {
                const auto& a = ty[y];
                const auto& b = tx[x];
                const double v = grad_out(c, y, x);
                g(c, a.i0, b.i0) += static_cast<T>(v * (1 - a.w1) * (1 - b.w1));
                g(c, a.i0, b.i1) += static_cast<T>(v * (1 - a.w1) * b.w1);
                g(c, a.i1, b.i0) += static_cast<T>(v * a.w1 * (1 - b.w1));
                g(c, a.i1, b.i1) += static_cast<T>(v * a.w1 * b.w1);
            }
    return g;
}

/// Reads PNG or JPEG (by content) as a 3-channel [0,1] image; other sizes
/// are bilinearly resized to side x side when side > 0.
template <typename T = float>
Image<T> load_image(const std::filesystem::path& path, int side = kImageSide)
{
    const auto bytes = detail::read_file(path);
    Bitmap b;
    if (bytes.size() >= 8 && bytes[0] == 0x89 && bytes[1] == 'P')
        b = decode_png(bytes);
    else if (bytes.size() >= 3 && bytes[0] == 0xFF && bytes[1] == 0xD8)
        b = decode_jpeg(bytes);
    else
        throw FormatError("'" + path.string() + "' is neither PNG nor JPEG");
    Image<T> img = from_bitmap<T>(b);
    if (side > 0 && (img.height() != side || img.width() != side)) img = resize_bilinear(img, side, side);
    return img;
}

template <typename T>
void save_png(const std::filesystem::path& path, const Image<T>& img)
{
    detail::write_file(path, encode_png(to_bitmap(img)));
}

inline bool is_image_file(const std::filesystem::path& p)
{
    std::string ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

/// Image files directly inside `dir`, sorted by name.
inline std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir)
{
    if (!std::filesystem::is_directory(dir)) throw Error("'" + dir.string() + "' is not a directory");
    std::vector<std::filesystem::path> out;
    for (const auto& e : std::filesystem::directory_iterator(dir))
        if (e.is_regular_file() && is_image_file(e.path())) out.push_back(e.path());
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace pimd
