#include "artadapter/image.hpp"

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>

#include <jpeglib.h>
#include <png.h>

#include "artadapter/common.hpp"

namespace artadapter {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::string& path, const char* mode) {
    FilePtr f(std::fopen(path.c_str(), mode));
    if (!f) throw IoError("cannot open " + path);
    return f;
}

struct PngReader {
    png_structp png = nullptr;
    png_infop info = nullptr;
    ~PngReader() {
        if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
    }
};

struct PngWriter {
    png_structp png = nullptr;
    png_infop info = nullptr;
    ~PngWriter() {
        if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
    }
};

void read_png_file(std::FILE* f, const std::string& path, Image* img,
                   std::map<std::string, std::string>* text) {
    PngReader r;
    r.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!r.png) throw StateError("png_create_read_struct failed");
    r.info = png_create_info_struct(r.png);
    if (!r.info) throw StateError("png_create_info_struct failed");
    if (setjmp(png_jmpbuf(r.png))) throw FormatError("corrupt PNG: " + path);

    png_init_io(r.png, f);
    const int transforms = PNG_TRANSFORM_STRIP_16 | PNG_TRANSFORM_PACKING | PNG_TRANSFORM_EXPAND |
                           PNG_TRANSFORM_STRIP_ALPHA | PNG_TRANSFORM_GRAY_TO_RGB;
    png_read_png(r.png, r.info, transforms, nullptr);

    if (text) {
        png_textp chunks = nullptr;
        int n = 0;
        png_get_text(r.png, r.info, &chunks, &n);
        for (int i = 0; i < n; ++i)
            (*text)[chunks[i].key] = chunks[i].text ? chunks[i].text : "";
    }
    if (img) {
        const png_uint_32 w = png_get_image_width(r.png, r.info);
        const png_uint_32 h = png_get_image_height(r.png, r.info);
        if (png_get_channels(r.png, r.info) != 3)
            throw FormatError("PNG did not decode to RGB: " + path);
        img->width = static_cast<int64_t>(w);
        img->height = static_cast<int64_t>(h);
        img->rgb.resize(static_cast<size_t>(w) * h * 3);
        png_bytepp rows = png_get_rows(r.png, r.info);
        for (png_uint_32 y = 0; y < h; ++y)
            std::memcpy(img->rgb.data() + static_cast<size_t>(y) * w * 3, rows[y],
                        static_cast<size_t>(w) * 3);
    }
}

struct JpegErrorMgr {
    jpeg_error_mgr base;
    std::jmp_buf jump;
};

void jpeg_error_exit(j_common_ptr cinfo) {
    auto* mgr = reinterpret_cast<JpegErrorMgr*>(cinfo->err);
    std::longjmp(mgr->jump, 1);
}

Image read_jpeg_file(std::FILE* f, const std::string& path) {
    jpeg_decompress_struct cinfo;
    JpegErrorMgr err;
    cinfo.err = jpeg_std_error(&err.base);
    err.base.error_exit = jpeg_error_exit;
    if (setjmp(err.jump)) {
        jpeg_destroy_decompress(&cinfo);
        throw FormatError("corrupt JPEG: " + path);
    }
    jpeg_create_decompress(&cinfo);
    jpeg_stdio_src(&cinfo, f);
    jpeg_read_header(&cinfo, TRUE);
    cinfo.out_color_space = JCS_RGB;
    jpeg_start_decompress(&cinfo);

    Image img;
    img.width = cinfo.output_width;
    img.height = cinfo.output_height;
    img.rgb.resize(static_cast<size_t>(img.width) * img.height * 3);
    while (cinfo.output_scanline < cinfo.output_height) {
        JSAMPROW row = img.rgb.data() + static_cast<size_t>(cinfo.output_scanline) * img.width * 3;
        jpeg_read_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_decompress(&cinfo);
    jpeg_destroy_decompress(&cinfo);
    return img;
}

}  // namespace

Image read_image(const std::string& path) {
    FilePtr f = open_file(path, "rb");
    unsigned char magic[8] = {0};
    const size_t got = std::fread(magic, 1, sizeof magic, f.get());
    std::rewind(f.get());
    static const unsigned char png_sig[8] = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
    if (got >= 8 && std::memcmp(magic, png_sig, 8) == 0) {
        Image img;
        read_png_file(f.get(), path, &img, nullptr);
        return img;
    }
    if (got >= 2 && magic[0] == 0xff && magic[1] == 0xd8) return read_jpeg_file(f.get(), path);
    throw FormatError("unrecognized image format: " + path);
}

void write_png(const std::string& path, const Image& img,
               const std::map<std::string, std::string>& text) {
    if (img.width < 1 || img.height < 1 ||
        img.rgb.size() != static_cast<size_t>(img.pixel_count()) * 3)
        throw ShapeError("write_png: raster size does not match dimensions");
    FilePtr f = open_file(path, "wb");

    PngWriter w;
    w.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!w.png) throw StateError("png_create_write_struct failed");
    w.info = png_create_info_struct(w.png);
    if (!w.info) throw StateError("png_create_info_struct failed");
    if (setjmp(png_jmpbuf(w.png))) throw IoError("PNG write failed: " + path);

    png_init_io(w.png, f.get());
    png_set_IHDR(w.png, w.info, static_cast<png_uint_32>(img.width),
                 static_cast<png_uint_32>(img.height), 8, PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);

    std::vector<png_text> chunks;
    std::vector<std::string> keys, values;  // keep storage alive through png_write_info
    keys.reserve(text.size());
    values.reserve(text.size());
    for (const auto& [k, v] : text) {
        keys.push_back(k);
        values.push_back(v);
        png_text t{};
        t.compression = PNG_TEXT_COMPRESSION_NONE;
        t.key = keys.back().data();
        t.text = values.back().data();
        t.text_length = values.back().size();
        chunks.push_back(t);
    }
    if (!chunks.empty())
        png_set_text(w.png, w.info, chunks.data(), static_cast<int>(chunks.size()));

    png_write_info(w.png, w.info);
    for (int64_t y = 0; y < img.height; ++y) {
        png_write_row(w.png,
                      const_cast<png_bytep>(img.rgb.data() + static_cast<size_t>(y) * img.width * 3));
    }
    png_write_end(w.png, w.info);
}

std::map<std::string, std::string> read_png_text(const std::string& path) {
    FilePtr f = open_file(path, "rb");
    std::map<std::string, std::string> text;
    read_png_file(f.get(), path, nullptr, &text);
    return text;
}

Tensor image_to_tensor01(const Image& img) {
    if (img.width < 1 || img.height < 1 ||
        img.rgb.size() != static_cast<size_t>(img.pixel_count()) * 3)
        throw ShapeError("image_to_tensor01: raster size does not match dimensions");
    Tensor t({3, img.height, img.width});
    const int64_t hw = img.height * img.width;
    for (int64_t p = 0; p < hw; ++p)
        for (int64_t c = 0; c < 3; ++c)
            t.at(c * hw + p) = static_cast<scalar_t>(img.rgb[p * 3 + c]) / 255.0;
    return t;
}

Image tensor01_to_image(const Tensor& t) {
    if (t.rank() != 3 || t.dim(0) != 3) throw ShapeError("tensor01_to_image expects (3, H, W)");
    Image img;
    img.height = t.dim(1);
    img.width = t.dim(2);
    img.rgb.resize(static_cast<size_t>(img.pixel_count()) * 3);
    const int64_t hw = img.height * img.width;
    for (int64_t p = 0; p < hw; ++p) {
        for (int64_t c = 0; c < 3; ++c) {
            const scalar_t v = std::clamp(t.at(c * hw + p), 0.0, 1.0);
            img.rgb[p * 3 + c] = static_cast<uint8_t>(std::lround(v * 255.0));
        }
    }
    return img;
}

Tensor resize_bilinear01(const Tensor& x, int64_t out_h, int64_t out_w) {
    if (x.rank() != 3) throw ShapeError("resize_bilinear01 expects (C, H, W)");
    if (out_h < 1 || out_w < 1) throw ArgumentError("resize target must be positive");
    const int64_t C = x.dim(0), H = x.dim(1), W = x.dim(2);
    Tensor out({C, out_h, out_w});
    const scalar_t sy = out_h > 1 ? static_cast<scalar_t>(H - 1) / (out_h - 1) : 0.0;
    const scalar_t sx = out_w > 1 ? static_cast<scalar_t>(W - 1) / (out_w - 1) : 0.0;
    for (int64_t c = 0; c < C; ++c) {
        for (int64_t oy = 0; oy < out_h; ++oy) {
            const scalar_t fy = oy * sy;
            const int64_t y0 = static_cast<int64_t>(fy);
            const int64_t y1 = std::min(y0 + 1, H - 1);
            const scalar_t wy = fy - y0;
            for (int64_t ox = 0; ox < out_w; ++ox) {
                const scalar_t fx = ox * sx;
                const int64_t x0 = static_cast<int64_t>(fx);
                const int64_t x1 = std::min(x0 + 1, W - 1);
                const scalar_t wx = fx - x0;
                const scalar_t v00 = x.at((c * H + y0) * W + x0);
                const scalar_t v01 = x.at((c * H + y0) * W + x1);
                const scalar_t v10 = x.at((c * H + y1) * W + x0);
                const scalar_t v11 = x.at((c * H + y1) * W + x1);
                out.at((c * out_h + oy) * out_w + ox) =
                    (1 - wy) * ((1 - wx) * v00 + wx * v01) + wy * ((1 - wx) * v10 + wx * v11);
            }
        }
    }
    return out;
}

Tensor center_crop01(const Tensor& x, int64_t size) {
    if (x.rank() != 3) throw ShapeError("center_crop01 expects (C, H, W)");
    const int64_t C = x.dim(0), H = x.dim(1), W = x.dim(2);
    if (size < 1 || size > H || size > W)
        throw ArgumentError("crop size exceeds image dimensions");
    const int64_t y0 = (H - size) / 2;
    const int64_t x0 = (W - size) / 2;
    Tensor out({C, size, size});
    for (int64_t c = 0; c < C; ++c)
        for (int64_t y = 0; y < size; ++y)
            for (int64_t xx = 0; xx < size; ++xx)
                out.at((c * size + y) * size + xx) = x.at((c * H + y0 + y) * W + x0 + xx);
    return out;
}

Tensor style_preprocess01(const Tensor& x, int64_t target) {
    if (x.rank() != 3) throw ShapeError("style_preprocess01 expects (C, H, W)");
    const int64_t H = x.dim(1), W = x.dim(2);
    int64_t nh, nw;
    if (H <= W) {
        nh = target;
        nw = std::max<int64_t>(target, (W * target + H / 2) / H);
    } else {
        nw = target;
        nh = std::max<int64_t>(target, (H * target + W / 2) / W);
    }
    return center_crop01(resize_bilinear01(x, nh, nw), target);
}

}  // namespace artadapter
