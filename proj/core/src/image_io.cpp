#include "sgma/image_io.hpp"

#include <png.h>

#include <cstdio>
#include <fstream>
#include <memory>
#include <string>

#include "sgma/error.hpp"

namespace sgma {

namespace {

std::string lower_ext(const std::filesystem::path& path) {
    std::string ext = path.extension().string();
    for (char& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return ext;
}

struct FileCloser {
    void operator()(FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

Raster read_png(const std::filesystem::path& path) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw IngestionError("cannot open " + path.string());
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IngestionError("libpng initialization failed for " + path.string());
    }
    Raster r;
    std::vector<png_bytep> rows;
    std::vector<uint8_t> buffer;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IngestionError("malformed PNG: " + path.string());
    }
    png_init_io(png, fp.get());
    png_read_info(png, info);
    const int color = png_get_color_type(png, info);
    const int depth = png_get_bit_depth(png, info);
    if (color == PNG_COLOR_TYPE_PALETTE) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IngestionError("palette PNG not supported (expected 1 or 3 channels): " + path.string());
    }
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    if (depth == 16) png_set_swap(png);  // little-endian host order
    png_read_update_info(png, info);
    r.width = png_get_image_width(png, info);
    r.height = png_get_image_height(png, info);
    r.channels = png_get_channels(png, info);
    r.bit_depth = png_get_bit_depth(png, info);
    const size_t row_bytes = png_get_rowbytes(png, info);
    buffer.resize(row_bytes * static_cast<size_t>(r.height));
    rows.resize(static_cast<size_t>(r.height));
    for (int64_t y = 0; y < r.height; ++y) rows[static_cast<size_t>(y)] = buffer.data() + static_cast<size_t>(y) * row_bytes;
    png_read_image(png, rows.data());
    png_destroy_read_struct(&png, &info, nullptr);

    const size_t n = static_cast<size_t>(r.height * r.width * r.channels);
    r.samples.resize(n);
    if (r.bit_depth == 16) {
        for (size_t i = 0; i < n; ++i) r.samples[i] = static_cast<uint16_t>(buffer[2 * i] | (buffer[2 * i + 1] << 8));
    } else {
        for (size_t i = 0; i < n; ++i) r.samples[i] = buffer[i];
    }
    if (r.channels != 1 && r.channels != 3)
        throw IngestionError("unsupported channel count " + std::to_string(r.channels) + " in " + path.string());
    return r;
}

void write_png(const std::filesystem::path& path, const Raster& r) {
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw IngestionError("cannot create " + path.string());
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw IngestionError("libpng initialization failed for " + path.string());
    }
    const int bytes = r.bit_depth == 16 ? 2 : 1;
    std::vector<uint8_t> buffer(static_cast<size_t>(r.height * r.width * r.channels * bytes));
    for (size_t i = 0; i < r.samples.size(); ++i) {
        if (bytes == 2) {
            buffer[2 * i] = static_cast<uint8_t>(r.samples[i] >> 8);  // PNG is big-endian
            buffer[2 * i + 1] = static_cast<uint8_t>(r.samples[i] & 0xff);
        } else {
            buffer[i] = static_cast<uint8_t>(r.samples[i]);
        }
    }
    std::vector<png_bytep> rows(static_cast<size_t>(r.height));
    const size_t row_bytes = static_cast<size_t>(r.width * r.channels * bytes);
    for (int64_t y = 0; y < r.height; ++y) rows[static_cast<size_t>(y)] = buffer.data() + static_cast<size_t>(y) * row_bytes;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IngestionError("failed writing PNG: " + path.string());
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(r.width), static_cast<png_uint_32>(r.height), r.bit_depth,
                 r.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

Raster read_pnm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IngestionError("cannot open " + path.string());
    std::string magic;
    in >> magic;
    if (magic != "P5" && magic != "P6") throw IngestionError("unsupported PNM variant '" + magic + "' in " + path.string());
    auto next_int = [&]() {
        int64_t v = 0;
        while (in >> std::ws && in.peek() == '#') in.ignore(1 << 20, '\n');
        if (!(in >> v)) throw IngestionError("truncated PNM header in " + path.string());
        return v;
    };
    Raster r;
    r.channels = magic == "P6" ? 3 : 1;
    r.width = next_int();
    r.height = next_int();
    const int64_t maxval = next_int();
    if (maxval <= 0 || maxval > 65535) throw IngestionError("bad PNM maxval in " + path.string());
    r.bit_depth = maxval > 255 ? 16 : 8;
    in.get();
    const size_t n = static_cast<size_t>(r.width * r.height * r.channels);
    r.samples.resize(n);
    if (r.bit_depth == 16) {
        std::vector<uint8_t> buf(2 * n);
        in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
        if (!in) throw IngestionError("truncated PNM data in " + path.string());
        for (size_t i = 0; i < n; ++i) r.samples[i] = static_cast<uint16_t>((buf[2 * i] << 8) | buf[2 * i + 1]);
    } else {
        std::vector<uint8_t> buf(n);
        in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
        if (!in) throw IngestionError("truncated PNM data in " + path.string());
        for (size_t i = 0; i < n; ++i) r.samples[i] = buf[i];
    }
    return r;
}

void write_pnm(const std::filesystem::path& path, const Raster& r) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IngestionError("cannot create " + path.string());
    out << (r.channels == 3 ? "P6" : "P5") << '\n' << r.width << ' ' << r.height << '\n' << r.max_value() << '\n';
    for (uint16_t s : r.samples) {
        if (r.bit_depth == 16) out.put(static_cast<char>(s >> 8));
        out.put(static_cast<char>(s & 0xff));
    }
}

}  // namespace

Raster read_raster(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw IngestionError("missing file " + path.string());
    const std::string ext = lower_ext(path);
    if (ext == ".png") return read_png(path);
    if (ext == ".pgm" || ext == ".ppm" || ext == ".pnm") return read_pnm(path);
    throw IngestionError("unsupported raster format: " + path.string());
}

void write_raster(const std::filesystem::path& path, const Raster& raster) {
    if (raster.channels != 1 && raster.channels != 3) throw IngestionError("rasters must have 1 or 3 channels");
    if (raster.samples.size() != static_cast<size_t>(raster.height * raster.width * raster.channels))
        throw IngestionError("raster sample count does not match its shape");
    const std::string ext = lower_ext(path);
    if (ext == ".png") return write_png(path, raster);
    if (ext == ".pgm" || ext == ".ppm" || ext == ".pnm") return write_pnm(path, raster);
    throw IngestionError("unsupported raster format: " + path.string());
}

}  // namespace sgma
