#include "tscam/image.hpp"

#include <cmath>
#include <fstream>
#include <string>

#include "tscam/errors.hpp"

namespace tscam {

namespace {

// Reads one whitespace-delimited token, skipping '#' comments.
std::string next_token(std::istream& in) {
    std::string tok;
    int ch;
    while ((ch = in.get()) != EOF) {
        if (ch == '#') {
            while ((ch = in.get()) != EOF && ch != '\n') {
            }
        } else if (!std::isspace(ch)) {
            tok.push_back(static_cast<char>(ch));
            while ((ch = in.peek()) != EOF && !std::isspace(ch)) {
                tok.push_back(static_cast<char>(in.get()));
            }
            return tok;
        }
    }
    return tok;
}

}  // namespace

Image read_ppm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open image '" + path.string() + "'");
    }
    if (next_token(in) != "P6") {
        throw FormatError("'" + path.string() + "' is not a binary PPM (P6)");
    }
    Image img;
    try {
        img.width = std::stoi(next_token(in));
        img.height = std::stoi(next_token(in));
        const int maxval = std::stoi(next_token(in));
        if (maxval != 255) {
            throw FormatError("'" + path.string() + "': only maxval 255 is supported");
        }
    } catch (const std::logic_error&) {
        throw FormatError("'" + path.string() + "' has a malformed PPM header");
    }
    if (img.width <= 0 || img.height <= 0) {
        throw FormatError("'" + path.string() + "' has non-positive dimensions");
    }
    in.get();  // single whitespace after maxval
    img.rgb.resize(static_cast<std::size_t>(img.width) * img.height * 3);
    in.read(reinterpret_cast<char*>(img.rgb.data()), static_cast<std::streamsize>(img.rgb.size()));
    if (static_cast<std::size_t>(in.gcount()) != img.rgb.size()) {
        throw FormatError("'" + path.string() + "' is truncated");
    }
    return img;
}

void write_ppm(const std::filesystem::path& path, const Image& img) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot open '" + path.string() + "' for writing");
    }
    out << "P6\n" << img.width << " " << img.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(img.rgb.data()),
              static_cast<std::streamsize>(img.rgb.size()));
    if (!out) {
        throw IoError("write failed for '" + path.string() + "'");
    }
}

void write_pgm(const std::filesystem::path& path, const Tensor<double>& map01) {
    if (map01.rank() != 2) {
        throw ShapeError("write_pgm: expected [H,W], got " + shape_str(map01.shape()));
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot open '" + path.string() + "' for writing");
    }
    const index_t h = map01.dim(0), w = map01.dim(1);
    out << "P5\n" << w << " " << h << "\n255\n";
    std::vector<std::uint8_t> row(static_cast<std::size_t>(w));
    for (index_t y = 0; y < h; ++y) {
        for (index_t x = 0; x < w; ++x) {
            const double v = std::min(1.0, std::max(0.0, map01(y, x)));
            row[static_cast<std::size_t>(x)] = static_cast<std::uint8_t>(std::lround(255.0 * v));
        }
        out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(w));
    }
    if (!out) {
        throw IoError("write failed for '" + path.string() + "'");
    }
}

Tensor<float> image_to_tensor(const Image& img) {
    Tensor<float> t({3, img.height, img.width});
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            for (int c = 0; c < 3; ++c) {
                t(c, y, x) = static_cast<float>(img.at(y, x, c)) / 255.0f;
            }
        }
    }
    return t;
}

Image tensor_to_image(const Tensor<float>& chw) {
    if (chw.rank() != 3 || chw.dim(0) != 3) {
        throw ShapeError("tensor_to_image: expected [3,H,W], got " + shape_str(chw.shape()));
    }
    Image img;
    img.height = static_cast<int>(chw.dim(1));
    img.width = static_cast<int>(chw.dim(2));
    img.rgb.resize(static_cast<std::size_t>(img.width) * img.height * 3);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            for (int c = 0; c < 3; ++c) {
                const float v = std::min(1.0f, std::max(0.0f, chw(c, y, x)));
                img.at(y, x, c) = static_cast<std::uint8_t>(std::lround(255.0f * v));
            }
        }
    }
    return img;
}

template <typename T>
Tensor<T> bilinear_resize(const Tensor<T>& chw, index_t out_h, index_t out_w) {
    if (chw.rank() != 3) {
        throw ShapeError("bilinear_resize: expected [C,H,W], got " + shape_str(chw.shape()));
    }
    if (out_h < 1 || out_w < 1) {
        throw ValueError("bilinear_resize: output extent must be positive");
    }
    const index_t C = chw.dim(0), in_h = chw.dim(1), in_w = chw.dim(2);
    Tensor<T> out({C, out_h, out_w});
    const double sy = out_h > 1 ? static_cast<double>(in_h - 1) / static_cast<double>(out_h - 1) : 0.0;
    const double sx = out_w > 1 ? static_cast<double>(in_w - 1) / static_cast<double>(out_w - 1) : 0.0;
    for (index_t y = 0; y < out_h; ++y) {
        const double fy = sy * static_cast<double>(y);
        const index_t y0 = std::min(static_cast<index_t>(fy), in_h - 1);
        const index_t y1 = std::min(y0 + 1, in_h - 1);
        const double wy = fy - static_cast<double>(y0);
        for (index_t x = 0; x < out_w; ++x) {
            const double fx = sx * static_cast<double>(x);
            const index_t x0 = std::min(static_cast<index_t>(fx), in_w - 1);
            const index_t x1 = std::min(x0 + 1, in_w - 1);
            const double wx = fx - static_cast<double>(x0);
            for (index_t c = 0; c < C; ++c) {
                const double v00 = chw(c, y0, x0), v01 = chw(c, y0, x1);
                const double v10 = chw(c, y1, x0), v11 = chw(c, y1, x1);
                const double top = v00 + (v01 - v00) * wx;
                const double bottom = v10 + (v11 - v10) * wx;
                out(c, y, x) = static_cast<T>(top + (bottom - top) * wy);
            }
        }
    }
    return out;
}

template Tensor<float> bilinear_resize<float>(const Tensor<float>&, index_t, index_t);
template Tensor<double> bilinear_resize<double>(const Tensor<double>&, index_t, index_t);

}  // namespace tscam
