#include "hazeprop/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <memory>
#include <vector>

namespace hazeprop {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::string& path, const char* mode) {
    FilePtr f(std::fopen(path.c_str(), mode));
    if (!f)
        throw IoError(IoError::Kind::open_failed, "cannot open '" + path + "'");
    return f;
}

bool has_suffix(const std::string& s, const std::string& suffix) {
    if (s.size() < suffix.size()) return false;
    std::string tail = s.substr(s.size() - suffix.size());
    std::transform(tail.begin(), tail.end(), tail.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return tail == suffix;
}

// --- raw pixel buffer shared by the decoders -------------------------------

struct RawImage {
    int height = 0;
    int width = 0;
    int channels = 0;  // 1 or 3
    int maxval = 255;  // 255 or 65535
    std::vector<uint32_t> samples;  // row-major, interleaved
};

// --- PNG --------------------------------------------------------------------

void png_error_to_exception(png_structp, png_const_charp msg) {
    throw IoError(IoError::Kind::bad_data, std::string("png: ") + msg);
}

void png_warning_silencer(png_structp, png_const_charp) {}

RawImage decode_png(const std::string& path) {
    FilePtr f = open_file(path, "rb");

    unsigned char sig[8];
    if (std::fread(sig, 1, 8, f.get()) != 8)
        throw IoError(IoError::Kind::truncated, "png: file shorter than signature: " + path);
    if (png_sig_cmp(sig, 0, 8))
        throw IoError(IoError::Kind::unsupported_format, "not a PNG file: " + path);

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                             png_error_to_exception, png_warning_silencer);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError(IoError::Kind::bad_data, "png: allocation failed");
    }

    RawImage out;
    try {
        png_init_io(png, f.get());
        png_set_sig_bytes(png, 8);
        png_read_info(png, info);

        png_set_palette_to_rgb(png);
        png_set_expand_gray_1_2_4_to_8(png);
        png_set_strip_alpha(png);
        if (png_get_bit_depth(png, info) == 16) png_set_swap(png);  // file is big-endian
        png_read_update_info(png, info);

        out.height = static_cast<int>(png_get_image_height(png, info));
        out.width = static_cast<int>(png_get_image_width(png, info));
        const int depth = png_get_bit_depth(png, info);
        out.channels = static_cast<int>(png_get_channels(png, info));
        out.maxval = depth == 16 ? 65535 : 255;
        if (out.channels != 1 && out.channels != 3)
            throw IoError(IoError::Kind::unsupported_format,
                          "png: unsupported channel count " + std::to_string(out.channels));

        const size_t row_bytes = png_get_rowbytes(png, info);
        std::vector<unsigned char> row(row_bytes);
        out.samples.resize(static_cast<size_t>(out.height) * out.width * out.channels);
        for (int i = 0; i < out.height; ++i) {
            png_read_row(png, row.data(), nullptr);
            const size_t base = static_cast<size_t>(i) * out.width * out.channels;
            if (depth == 16) {
                const uint16_t* p = reinterpret_cast<const uint16_t*>(row.data());
                for (int s = 0; s < out.width * out.channels; ++s) out.samples[base + s] = p[s];
            } else {
                for (int s = 0; s < out.width * out.channels; ++s) out.samples[base + s] = row[s];
            }
        }
        png_read_end(png, nullptr);
    } catch (...) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw;
    }
    png_destroy_read_struct(&png, &info, nullptr);
    return out;
}

void encode_png(const RawImage& img, const std::string& path) {
    FilePtr f = open_file(path, "wb");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                              png_error_to_exception, png_warning_silencer);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw IoError(IoError::Kind::write_failed, "png: allocation failed");
    }
    try {
        png_init_io(png, f.get());
        const int depth = img.maxval == 65535 ? 16 : 8;
        const int color = img.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY;
        png_set_IHDR(png, info, img.width, img.height, depth, color, PNG_INTERLACE_NONE,
                     PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
        png_write_info(png, info);
        if (depth == 16) png_set_swap(png);

        std::vector<unsigned char> row(static_cast<size_t>(img.width) * img.channels *
                                       (depth / 8));
        for (int i = 0; i < img.height; ++i) {
            const size_t base = static_cast<size_t>(i) * img.width * img.channels;
            if (depth == 16) {
                uint16_t* p = reinterpret_cast<uint16_t*>(row.data());
                for (int s = 0; s < img.width * img.channels; ++s)
                    p[s] = static_cast<uint16_t>(img.samples[base + s]);
            } else {
                for (int s = 0; s < img.width * img.channels; ++s)
                    row[s] = static_cast<unsigned char>(img.samples[base + s]);
            }
            png_write_row(png, row.data());
        }
        png_write_end(png, nullptr);
    } catch (...) {
        png_destroy_write_struct(&png, &info);
        throw;
    }
    png_destroy_write_struct(&png, &info);
}

// --- binary PPM / PGM -------------------------------------------------------

int pnm_read_token(std::FILE* f, const std::string& path) {
    // Skips whitespace and '#' comments, then reads a decimal token.
    int c = std::fgetc(f);
    while (c != EOF) {
        if (c == '#') {
            while (c != EOF && c != '\n') c = std::fgetc(f);
        } else if (!std::isspace(c)) {
            break;
        }
        c = std::fgetc(f);
    }
    if (c == EOF) throw IoError(IoError::Kind::truncated, "pnm: header ends early: " + path);
    if (!std::isdigit(c))
        throw IoError(IoError::Kind::bad_data, "pnm: malformed header: " + path);
    int value = 0;
    while (c != EOF && std::isdigit(c)) {
        value = value * 10 + (c - '0');
        c = std::fgetc(f);
    }
    return value;
}

RawImage decode_pnm(const std::string& path) {
    FilePtr f = open_file(path, "rb");
    int m0 = std::fgetc(f.get()), m1 = std::fgetc(f.get());
    if (m0 != 'P' || (m1 != '5' && m1 != '6'))
        throw IoError(IoError::Kind::unsupported_format,
                      "pnm: only binary P5/P6 supported: " + path);

    RawImage out;
    out.channels = m1 == '6' ? 3 : 1;
    out.width = pnm_read_token(f.get(), path);
    out.height = pnm_read_token(f.get(), path);
    out.maxval = pnm_read_token(f.get(), path);
    if (out.width <= 0 || out.height <= 0 || out.maxval <= 0 || out.maxval > 65535)
        throw IoError(IoError::Kind::bad_data, "pnm: bad dimensions or maxval: " + path);

    const int bytes_per_sample = out.maxval > 255 ? 2 : 1;
    const size_t n_samples = static_cast<size_t>(out.height) * out.width * out.channels;
    std::vector<unsigned char> buf(n_samples * bytes_per_sample);
    if (std::fread(buf.data(), 1, buf.size(), f.get()) != buf.size())
        throw IoError(IoError::Kind::truncated, "pnm: pixel data ends early: " + path);

    out.samples.resize(n_samples);
    if (bytes_per_sample == 2) {
        for (size_t s = 0; s < n_samples; ++s)
            out.samples[s] = (static_cast<uint32_t>(buf[2 * s]) << 8) | buf[2 * s + 1];
    } else {
        for (size_t s = 0; s < n_samples; ++s) out.samples[s] = buf[s];
    }
    return out;
}

void encode_pnm(const RawImage& img, const std::string& path) {
    FilePtr f = open_file(path, "wb");
    const char magic = img.channels == 3 ? '6' : '5';
    if (std::fprintf(f.get(), "P%c\n%d %d\n%d\n", magic, img.width, img.height, img.maxval) < 0)
        throw IoError(IoError::Kind::write_failed, "pnm: header write failed: " + path);

    const size_t n_samples = static_cast<size_t>(img.height) * img.width * img.channels;
    std::vector<unsigned char> buf;
    if (img.maxval > 255) {
        buf.resize(n_samples * 2);
        for (size_t s = 0; s < n_samples; ++s) {
            buf[2 * s] = static_cast<unsigned char>(img.samples[s] >> 8);
            buf[2 * s + 1] = static_cast<unsigned char>(img.samples[s] & 0xff);
        }
    } else {
        buf.resize(n_samples);
        for (size_t s = 0; s < n_samples; ++s) buf[s] = static_cast<unsigned char>(img.samples[s]);
    }
    if (std::fwrite(buf.data(), 1, buf.size(), f.get()) != buf.size())
        throw IoError(IoError::Kind::write_failed, "pnm: pixel write failed: " + path);
}

// --- format dispatch --------------------------------------------------------

RawImage decode_any(const std::string& path) {
    FilePtr probe = open_file(path, "rb");
    int m0 = std::fgetc(probe.get());
    int m1 = std::fgetc(probe.get());
    probe.reset();
    if (m0 == EOF || m1 == EOF)
        throw IoError(IoError::Kind::truncated, "file too short: " + path);
    if (m0 == 0x89 && m1 == 'P') return decode_png(path);
    if (m0 == 'P' && (m1 == '5' || m1 == '6')) return decode_pnm(path);
    throw IoError(IoError::Kind::unsupported_format,
                  "unrecognized image format (PNG or binary PPM/PGM expected): " + path);
}

uint32_t quantize(double v, int maxval) {
    v = std::clamp(v, 0.0, 1.0);
    return static_cast<uint32_t>(std::lround(v * maxval));
}

RawImage to_raw(const ImageRGB& img, int bit_depth) {
    if (bit_depth != 8 && bit_depth != 16)
        throw IoError(IoError::Kind::write_failed, "bit depth must be 8 or 16");
    RawImage raw;
    raw.height = img.height();
    raw.width = img.width();
    raw.channels = 3;
    raw.maxval = bit_depth == 16 ? 65535 : 255;
    raw.samples.resize(img.pixel_count() * 3);
    for (size_t p = 0; p < img.pixel_count(); ++p)
        for (int c = 0; c < 3; ++c)
            raw.samples[3 * p + c] = quantize(img.channel(c).at(p), raw.maxval);
    return raw;
}

}  // namespace

ImageRGB load_image(const std::string& path) {
    RawImage raw = decode_any(path);
    ImageRGB img(raw.height, raw.width);
    const double maxval = raw.maxval;
    for (size_t p = 0; p < img.pixel_count(); ++p) {
        for (int c = 0; c < 3; ++c) {
            const size_t s = raw.channels == 3 ? 3 * p + c : p;
            img.channel(c).at(p) = raw.samples[s] / maxval;
        }
    }
    return img;
}

ScalarField load_field(const std::string& path) {
    RawImage raw = decode_any(path);
    ScalarField f(raw.height, raw.width);
    const double maxval = raw.maxval;
    for (size_t p = 0; p < f.size(); ++p) {
        if (raw.channels == 3) {
            const double r = raw.samples[3 * p] / maxval, g = raw.samples[3 * p + 1] / maxval,
                         b = raw.samples[3 * p + 2] / maxval;
            f.at(p) = 0.299 * r + 0.587 * g + 0.114 * b;
        } else {
            f.at(p) = raw.samples[p] / maxval;
        }
    }
    return f;
}

void save_image(const ImageRGB& img, const std::string& path, int bit_depth) {
    if (img.empty()) throw IoError(IoError::Kind::write_failed, "save_image: empty image");
    RawImage raw = to_raw(img, bit_depth);
    if (has_suffix(path, ".ppm"))
        encode_pnm(raw, path);
    else
        encode_png(raw, path);
}

void save_field(const ScalarField& f, const std::string& path, int bit_depth) {
    if (f.empty()) throw IoError(IoError::Kind::write_failed, "save_field: empty field");
    RawImage raw;
    raw.height = f.height();
    raw.width = f.width();
    raw.channels = 1;
    raw.maxval = bit_depth == 16 ? 65535 : 255;
    raw.samples.resize(f.size());
    for (size_t p = 0; p < f.size(); ++p) raw.samples[p] = quantize(f.at(p), raw.maxval);
    if (has_suffix(path, ".pgm"))
        encode_pnm(raw, path);
    else
        encode_png(raw, path);
}

}  // namespace hazeprop
