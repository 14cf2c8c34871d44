#include "nicrb/image.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <memory>
#include <stdexcept>

namespace nicrb {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

Image load_png(const std::string& path) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw std::runtime_error("cannot open " + path);
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                             nullptr, nullptr);
    if (!png) throw std::runtime_error("png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw std::runtime_error("png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("failed to decode PNG " + path);
    }
    png_init_io(png, fp.get());
    png_read_info(png, info);

    png_uint_32 w = png_get_image_width(png, info);
    png_uint_32 h = png_get_image_height(png, info);
    int bit_depth = png_get_bit_depth(png, info);
    int color_type = png_get_color_type(png, info);

    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8)
        png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    png_set_strip_alpha(png);
    if (bit_depth == 16) png_set_swap(png);  // wire is big-endian
    png_read_update_info(png, info);

    int channels = png_get_channels(png, info);
    bit_depth = png_get_bit_depth(png, info);
    std::size_t rowbytes = png_get_rowbytes(png, info);
    std::vector<std::uint8_t> buf(rowbytes * h);
    std::vector<png_bytep> rows(h);
    for (png_uint_32 y = 0; y < h; ++y) rows[y] = buf.data() + y * rowbytes;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    Image im(3, static_cast<int>(h), static_cast<int>(w));
    double scale = bit_depth == 16 ? 1.0 / 65535.0 : 1.0 / 255.0;
    for (png_uint_32 y = 0; y < h; ++y) {
        for (png_uint_32 x = 0; x < w; ++x) {
            for (int c = 0; c < 3; ++c) {
                int src_c = channels >= 3 ? c : 0;
                double v;
                if (bit_depth == 16) {
                    const std::uint16_t* row =
                        reinterpret_cast<const std::uint16_t*>(
                            buf.data() + y * rowbytes);
                    v = row[x * channels + src_c] * scale;
                } else {
                    v = buf[y * rowbytes + x * channels + src_c] * scale;
                }
                im.at(c, static_cast<int>(y), static_cast<int>(x)) = v;
            }
        }
    }
    return im;
}

Image load_ppm(const std::string& path) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw std::runtime_error("cannot open " + path);
    auto next_token = [&]() -> long {
        int c;
        // skip whitespace and comments
        do {
            c = std::fgetc(fp.get());
            if (c == '#')
                while (c != '\n' && c != EOF) c = std::fgetc(fp.get());
        } while (c == ' ' || c == '\t' || c == '\n' || c == '\r');
        long v = 0;
        bool any = false;
        while (c >= '0' && c <= '9') {
            v = v * 10 + (c - '0');
            any = true;
            c = std::fgetc(fp.get());
        }
        if (!any) throw std::runtime_error("malformed PPM header in " + path);
        return v;
    };
    char magic[3] = {0, 0, 0};
    if (std::fread(magic, 1, 2, fp.get()) != 2 || magic[0] != 'P' ||
        magic[1] != '6')
        throw std::runtime_error("not a binary PPM: " + path);
    long w = next_token(), h = next_token(), maxval = next_token();
    if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 65535)
        throw std::runtime_error("bad PPM dimensions in " + path);
    int bytes = maxval > 255 ? 2 : 1;
    std::vector<std::uint8_t> buf(static_cast<std::size_t>(w) * h * 3 * bytes);
    if (std::fread(buf.data(), 1, buf.size(), fp.get()) != buf.size())
        throw std::runtime_error("truncated PPM " + path);
    Image im(3, static_cast<int>(h), static_cast<int>(w));
    double scale = 1.0 / maxval;
    for (long y = 0; y < h; ++y)
        for (long x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) {
                std::size_t i = ((static_cast<std::size_t>(y) * w + x) * 3 + c) *
                                bytes;
                double v = bytes == 2 ? (buf[i] * 256 + buf[i + 1]) * scale
                                      : buf[i] * scale;
                im.at(c, static_cast<int>(y), static_cast<int>(x)) = v;
            }
    return im;
}

}  // namespace

Image load_image(const std::string& path) {
    auto dot = path.find_last_of('.');
    std::string ext = dot == std::string::npos ? "" : path.substr(dot + 1);
    for (auto& c : ext) c = static_cast<char>(std::tolower(c));
    if (ext == "ppm") return load_ppm(path);
    if (ext == "png") return load_png(path);
    throw std::runtime_error("unsupported image format: " + path);
}

void save_png16(const Image& im, const std::string& path) {
    if (im.channels != 3 && im.channels != 1)
        throw std::runtime_error("save_png16: need 1 or 3 channels");
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw std::runtime_error("cannot write " + path);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                              nullptr, nullptr);
    if (!png) throw std::runtime_error("png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw std::runtime_error("png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error("failed to encode PNG " + path);
    }
    png_init_io(png, fp.get());
    int color = im.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY;
    png_set_IHDR(png, info, im.width, im.height, 16, color,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<std::uint8_t> row(static_cast<std::size_t>(im.width) *
                                  im.channels * 2);
    for (int y = 0; y < im.height; ++y) {
        for (int x = 0; x < im.width; ++x)
            for (int c = 0; c < im.channels; ++c) {
                double v = std::min(1.0, std::max(0.0, im.at(c, y, x)));
                auto q = static_cast<std::uint16_t>(
                    std::lround(v * 65535.0));
                row[(static_cast<std::size_t>(x) * im.channels + c) * 2] =
                    static_cast<std::uint8_t>(q >> 8);
                row[(static_cast<std::size_t>(x) * im.channels + c) * 2 + 1] =
                    static_cast<std::uint8_t>(q & 0xff);
            }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

double linf_norm(const Image& a, const Image& b) {
    double m = 0;
    for (std::size_t i = 0; i < a.data.size(); ++i)
        m = std::max(m, std::abs(a.data[i] - b.data[i]));
    return m;
}

double l2_norm(const Image& a, const Image& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        double d = a.data[i] - b.data[i];
        s += d * d;
    }
    return std::sqrt(s);
}

}  // namespace nicrb
