#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "tscam/image.hpp"
#include "tscam/rng.hpp"

using namespace tscam;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const char* name) {
    const fs::path dir = fs::temp_directory_path() / "tscam_image_tests";
    fs::create_directories(dir);
    return dir / name;
}

// Independent bilinear formula, corner-aligned: evaluates one output pixel
// directly from the four surrounding source samples.
double bilinear_at(const Tensor<double>& src, index_t c, index_t y, index_t x, index_t out_h,
                   index_t out_w) {
    const index_t in_h = src.dim(1), in_w = src.dim(2);
    const double fy = out_h > 1 ? static_cast<double>(y) * (in_h - 1) / (out_h - 1) : 0.0;
    const double fx = out_w > 1 ? static_cast<double>(x) * (in_w - 1) / (out_w - 1) : 0.0;
    const index_t y0 = static_cast<index_t>(std::floor(fy));
    const index_t x0 = static_cast<index_t>(std::floor(fx));
    const index_t y1 = std::min(y0 + 1, in_h - 1);
    const index_t x1 = std::min(x0 + 1, in_w - 1);
    const double dy = fy - y0, dx = fx - x0;
    return src(c, y0, x0) * (1 - dy) * (1 - dx) + src(c, y0, x1) * (1 - dy) * dx +
           src(c, y1, x0) * dy * (1 - dx) + src(c, y1, x1) * dy * dx;
}

}  // namespace

TEST_SUITE("image") {
    TEST_CASE("ppm round trip") {
        Rng rng(1);
        Image img;
        img.width = 9;
        img.height = 5;
        img.rgb.resize(9 * 5 * 3);
        for (auto& v : img.rgb) {
            v = static_cast<std::uint8_t>(rng.uniform_int(0, 256));
        }
        const fs::path path = temp_file("roundtrip.ppm");
        write_ppm(path, img);
        Image back = read_ppm(path);
        CHECK(back.width == img.width);
        CHECK(back.height == img.height);
        CHECK(back.rgb == img.rgb);
    }

    TEST_CASE("missing image file names the path") {
        try {
            read_ppm("/nonexistent/missing_image.ppm");
            FAIL("expected IoError");
        } catch (const IoError& e) {
            CHECK(std::string(e.what()).find("missing_image.ppm") != std::string::npos);
        }
    }

    TEST_CASE("pgm encodes round(255*v)") {
        Tensor<double> map({1, 3}, {0.0, 0.5, 1.0});
        const fs::path path = temp_file("map.pgm");
        write_pgm(path, map);
        std::ifstream in(path, std::ios::binary);
        std::string header;
        std::getline(in, header);
        CHECK(header == "P5");
        std::string dims, maxval;
        std::getline(in, dims);
        std::getline(in, maxval);
        CHECK(dims == "3 1");
        CHECK(maxval == "255");
        unsigned char px[3];
        in.read(reinterpret_cast<char*>(px), 3);
        CHECK(px[0] == 0);
        CHECK(px[1] == 128);
        CHECK(px[2] == 255);
    }

    TEST_CASE("bilinear 2x2 to 4x4 matches the direct formula") {
        Tensor<double> src({1, 2, 2}, {0, 0, 0, 1});
        Tensor<double> up = bilinear_resize(src, 4, 4);
        for (index_t y = 0; y < 4; ++y) {
            for (index_t x = 0; x < 4; ++x) {
                const double expect = (static_cast<double>(y) / 3.0) * (static_cast<double>(x) / 3.0);
                CHECK(up(0, y, x) == doctest::Approx(expect).epsilon(1e-6));
            }
        }
    }

    TEST_CASE("bilinear matches the independent oracle on random sizes") {
        Rng rng(2);
        for (int trial = 0; trial < 40; ++trial) {
            const index_t c = 1 + rng.uniform_int(0, 3);
            const index_t in_h = 1 + rng.uniform_int(0, 7);
            const index_t in_w = 1 + rng.uniform_int(0, 7);
            const index_t out_h = 1 + rng.uniform_int(0, 12);
            const index_t out_w = 1 + rng.uniform_int(0, 12);
            Tensor<double> src({c, in_h, in_w});
            for (double& v : src.values()) {
                v = rng.uniform(-2.0, 2.0);
            }
            Tensor<double> up = bilinear_resize(src, out_h, out_w);
            for (index_t ch = 0; ch < c; ++ch) {
                for (index_t y = 0; y < out_h; ++y) {
                    for (index_t x = 0; x < out_w; ++x) {
                        CHECK(up(ch, y, x) ==
                              doctest::Approx(bilinear_at(src, ch, y, x, out_h, out_w))
                                  .epsilon(1e-9));
                    }
                }
            }
        }
    }

    TEST_CASE("image tensor conversion stays in range") {
        Rng rng(3);
        Image img;
        img.width = 4;
        img.height = 4;
        img.rgb.resize(48);
        for (auto& v : img.rgb) {
            v = static_cast<std::uint8_t>(rng.uniform_int(0, 256));
        }
        Tensor<float> t = image_to_tensor(img);
        CHECK(t.shape() == std::vector<index_t>{3, 4, 4});
        for (const float v : t.values()) {
            CHECK(v >= 0.0f);
            CHECK(v <= 1.0f);
        }
        Image back = tensor_to_image(t);
        CHECK(back.rgb == img.rgb);
    }
}
