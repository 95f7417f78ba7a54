#include "glamor/image.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <vector>

#include "glamor/errors.hpp"

namespace glamor {

namespace {

// Reads the next header token, skipping whitespace and '#' comments.
std::string next_token(std::istream& in, const std::string& path) {
    std::string tok;
    int c;
    while ((c = in.get()) != EOF) {
        if (c == '#') {
            while ((c = in.get()) != EOF && c != '\n') {
            }
            continue;
        }
        if (std::isspace(c)) {
            if (!tok.empty())
                return tok;
            continue;
        }
        tok.push_back(static_cast<char>(c));
    }
    if (tok.empty())
        throw FormatError(path + ": truncated header");
    return tok;
}

int64_t parse_dim(const std::string& tok, const std::string& path, const char* what) {
    try {
        const long long v = std::stoll(tok);
        if (v < 1)
            throw FormatError(path + ": nonpositive " + what);
        return v;
    } catch (const FormatError&) {
        throw;
    } catch (...) {
        throw FormatError(path + ": bad " + std::string(what) + " '" + tok + "'");
    }
}

std::vector<uint8_t> read_raster(std::istream& in, size_t count, const std::string& path) {
    std::vector<uint8_t> bytes(count);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(count));
    if (static_cast<size_t>(in.gcount()) != count)
        throw FormatError(path + ": truncated raster, expected " + std::to_string(count) +
                          " bytes, got " + std::to_string(in.gcount()));
    return bytes;
}

TensorF load_pnm(const std::string& path, const char* magic, int64_t channels) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError(path + ": cannot open for reading");
    const std::string m = next_token(in, path);
    if (m != magic)
        throw FormatError(path + ": bad magic '" + m + "', expected " + magic);
    const int64_t w = parse_dim(next_token(in, path), path, "width");
    const int64_t h = parse_dim(next_token(in, path), path, "height");
    const int64_t maxval = parse_dim(next_token(in, path), path, "maxval");
    if (maxval != 255)
        throw FormatError(path + ": only 8-bit images supported, maxval=" +
                          std::to_string(maxval));
    // single whitespace byte after maxval already consumed by tokenizer
    const auto bytes = read_raster(in, static_cast<size_t>(w * h * channels), path);
    TensorF img(channels == 3 ? Shape{3, h, w} : Shape{h, w});
    if (channels == 3) {
        for (int64_t i = 0; i < h * w; ++i)
            for (int64_t c = 0; c < 3; ++c)
                img[c * h * w + i] =
                    static_cast<float>(bytes[static_cast<size_t>(i * 3 + c)]) / 255.0f;
    } else {
        for (int64_t i = 0; i < h * w; ++i)
            img[i] = static_cast<float>(bytes[static_cast<size_t>(i)]) / 255.0f;
    }
    return img;
}

uint8_t to_byte(float v) {
    const float scaled = std::round(v * 255.0f);
    return static_cast<uint8_t>(std::min(255.0f, std::max(0.0f, scaled)));
}

void save_pnm(const TensorF& image, const std::string& path, const char* magic,
              int64_t channels) {
    const int64_t h = channels == 3 ? image.dim(1) : image.dim(0);
    const int64_t w = channels == 3 ? image.dim(2) : image.dim(1);
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw IoError(path + ": cannot open for writing");
    out << magic << "\n" << w << " " << h << "\n255\n";
    std::vector<uint8_t> bytes(static_cast<size_t>(h * w * channels));
    if (channels == 3) {
        for (int64_t i = 0; i < h * w; ++i)
            for (int64_t c = 0; c < 3; ++c)
                bytes[static_cast<size_t>(i * 3 + c)] = to_byte(image[c * h * w + i]);
    } else {
        for (int64_t i = 0; i < h * w; ++i)
            bytes[static_cast<size_t>(i)] = to_byte(image[i]);
    }
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out)
        throw IoError(path + ": write failed");
}

} // namespace

TensorF load_ppm(const std::string& path) { return load_pnm(path, "P6", 3); }

void save_ppm(const TensorF& image, const std::string& path) {
    if (image.rank() != 3 || image.dim(0) != 3)
        throw ShapeError("save_ppm: expected [3,H,W], got " + shape_str(image.shape()));
    save_pnm(image, path, "P6", 3);
}

TensorF load_pgm(const std::string& path) { return load_pnm(path, "P5", 1); }

void save_pgm(const TensorF& image, const std::string& path) {
    if (image.rank() != 2)
        throw ShapeError("save_pgm: expected [H,W], got " + shape_str(image.shape()));
    save_pnm(image, path, "P5", 1);
}

TensorF resize_bilinear(const TensorF& image, int64_t out_h, int64_t out_w) {
    if (out_h < 1 || out_w < 1)
        throw ValueError("resize_bilinear: output dims must be positive");
    const bool has_channels = image.rank() == 3;
    if (!has_channels && image.rank() != 2)
        throw ShapeError("resize_bilinear: expected [C,H,W] or [H,W]");
    const int64_t ch = has_channels ? image.dim(0) : 1;
    const int64_t in_h = has_channels ? image.dim(1) : image.dim(0);
    const int64_t in_w = has_channels ? image.dim(2) : image.dim(1);
    if (in_h == out_h && in_w == out_w)
        return image;

    TensorF out(has_channels ? Shape{ch, out_h, out_w} : Shape{out_h, out_w});
    const double sy = static_cast<double>(in_h) / static_cast<double>(out_h);
    const double sx = static_cast<double>(in_w) / static_cast<double>(out_w);
    for (int64_t i = 0; i < out_h; ++i) {
        double fy = (static_cast<double>(i) + 0.5) * sy - 0.5;
        fy = std::min(std::max(fy, 0.0), static_cast<double>(in_h - 1));
        const int64_t y0 = static_cast<int64_t>(fy);
        const int64_t y1 = std::min(y0 + 1, in_h - 1);
        const double wy = fy - static_cast<double>(y0);
        for (int64_t j = 0; j < out_w; ++j) {
            double fx = (static_cast<double>(j) + 0.5) * sx - 0.5;
            fx = std::min(std::max(fx, 0.0), static_cast<double>(in_w - 1));
            const int64_t x0 = static_cast<int64_t>(fx);
            const int64_t x1 = std::min(x0 + 1, in_w - 1);
            const double wx = fx - static_cast<double>(x0);
            for (int64_t c = 0; c < ch; ++c) {
                const float* plane = image.data() + c * in_h * in_w;
                const double top = (1.0 - wx) * plane[y0 * in_w + x0] + wx * plane[y0 * in_w + x1];
                const double bot = (1.0 - wx) * plane[y1 * in_w + x0] + wx * plane[y1 * in_w + x1];
                out[c * out_h * out_w + i * out_w + j] =
                    static_cast<float>((1.0 - wy) * top + wy * bot);
            }
        }
    }
    return out;
}

TensorF mask_rect(const TensorF& image, int64_t x, int64_t y, int64_t w, int64_t h) {
    if (image.rank() != 3)
        throw ShapeError("mask_rect: expected [C,H,W]");
    const int64_t ih = image.dim(1), iw = image.dim(2);
    if (x < 0 || y < 0 || w < 1 || h < 1 || x + w > iw || y + h > ih)
        throw ValueError("mask_rect: bbox (" + std::to_string(x) + "," + std::to_string(y) + "," +
                         std::to_string(w) + "," + std::to_string(h) + ") outside " +
                         std::to_string(iw) + "x" + std::to_string(ih) + " image");
    TensorF out = image;
    for (int64_t c = 0; c < image.dim(0); ++c)
        for (int64_t i = y; i < y + h; ++i)
            for (int64_t j = x; j < x + w; ++j)
                out[(c * ih + i) * iw + j] = 0.0f;
    return out;
}

TensorF crop(const TensorF& image, int64_t x, int64_t y, int64_t w, int64_t h) {
    if (image.rank() != 3)
        throw ShapeError("crop: expected [C,H,W]");
    const int64_t ih = image.dim(1), iw = image.dim(2);
    if (x < 0 || y < 0 || w < 1 || h < 1 || x + w > iw || y + h > ih)
        throw ValueError("crop: rectangle outside image bounds");
    TensorF out({image.dim(0), h, w});
    for (int64_t c = 0; c < image.dim(0); ++c)
        for (int64_t i = 0; i < h; ++i)
            for (int64_t j = 0; j < w; ++j)
                out[(c * h + i) * w + j] = image[(c * ih + y + i) * iw + x + j];
    return out;
}

} // namespace glamor
