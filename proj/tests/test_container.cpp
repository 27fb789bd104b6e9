#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "tscam/container.hpp"
#include "tscam/rng.hpp"

using namespace tscam;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const char* name) {
    const fs::path dir = fs::temp_directory_path() / "tscam_container_tests";
    fs::create_directories(dir);
    return dir / name;
}

std::string file_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_SUITE("container") {
    TEST_CASE("round trip preserves tensors, dtypes and metadata") {
        Rng rng(1);
        Tensor<float> a({3, 4});
        for (float& v : a.values()) {
            v = static_cast<float>(rng.normal());
        }
        Tensor<double> b({2, 2, 2});
        for (double& v : b.values()) {
            v = rng.normal();
        }

        TensorContainer c;
        c.put("weights.a", a);
        c.put("weights.b", b);
        c.meta["config"] = {{"depth", 4}, {"note", "round trip"}};

        const fs::path path = temp_file("roundtrip.tsc");
        c.save(path);
        TensorContainer loaded = TensorContainer::load(path);

        CHECK(loaded.contains("weights.a"));
        CHECK(loaded.contains("weights.b"));
        CHECK(max_abs_diff(loaded.get<float>("weights.a"), a) == 0.0);
        CHECK(max_abs_diff(loaded.get<double>("weights.b"), b) == 0.0);
        CHECK(loaded.meta["config"]["depth"] == 4);
        CHECK_THROWS_AS(loaded.get<double>("weights.a"), FormatError);
        CHECK_THROWS_AS(loaded.get<float>("missing"), FormatError);
    }

    TEST_CASE("bad magic is rejected") {
        const fs::path path = temp_file("bad_magic.tsc");
        std::ofstream out(path, std::ios::binary);
        out << "NOTATENSORFILE....................";
        out.close();
        CHECK_THROWS_AS(TensorContainer::load(path), FormatError);
    }

    TEST_CASE("truncated payload is rejected without partial state") {
        TensorContainer c;
        Tensor<float> t({16, 16});
        c.put("big", t);
        const fs::path path = temp_file("truncated.tsc");
        c.save(path);

        const std::string bytes = file_bytes(path);
        std::ofstream out(path, std::ios::binary);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 64));
        out.close();
        CHECK_THROWS_AS(TensorContainer::load(path), FormatError);
    }

    TEST_CASE("saving twice is byte identical") {
        Rng rng(2);
        TensorContainer c;
        Tensor<float> t({5, 7});
        for (float& v : t.values()) {
            v = static_cast<float>(rng.normal());
        }
        c.put("x", t);
        c.meta["config"] = {{"seed", 7}};
        const fs::path p1 = temp_file("det1.tsc");
        const fs::path p2 = temp_file("det2.tsc");
        c.save(p1);
        c.save(p2);
        CHECK(file_bytes(p1) == file_bytes(p2));
    }

    TEST_CASE("magic bytes spell the expected tag") {
        TensorContainer c;
        c.put("x", Tensor<float>({1}));
        const fs::path path = temp_file("magic.tsc");
        c.save(path);
        CHECK(file_bytes(path).substr(0, 8) == "TSCAMTEN");
    }
}
