#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "glamor/image.hpp"
#include "glamor/errors.hpp"

using namespace glamor;

namespace {

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

} // namespace

TEST_CASE("ppm: decode known bytes to k/255") {
    const std::string path = temp_path("glamor_test_2x2.ppm");
    {
        std::ofstream out(path, std::ios::binary);
        out << "P6\n2 2\n255\n";
        const uint8_t bytes[12] = {0, 1, 2, 3, 4, 5, 250, 251, 252, 253, 254, 255};
        out.write(reinterpret_cast<const char*>(bytes), 12);
    }
    TensorF img = load_ppm(path);
    CHECK(img.shape() == Shape{3, 2, 2});
    // pixel (0,0): bytes 0,1,2 across channels
    CHECK(img.at(0, 0, 0) == doctest::Approx(0.0f));
    CHECK(img.at(1, 0, 0) == doctest::Approx(1.0f / 255.0f));
    CHECK(img.at(2, 0, 0) == doctest::Approx(2.0f / 255.0f));
    CHECK(img.at(0, 1, 1) == doctest::Approx(253.0f / 255.0f));
    CHECK(img.at(2, 1, 1) == doctest::Approx(1.0f));
    std::remove(path.c_str());
}

TEST_CASE("ppm: encode/decode round trip is identity for 8-bit data") {
    Rng rng(1);
    TensorF img({3, 5, 7});
    for (auto& v : img.vec())
        v = static_cast<float>(rng.below(256)) / 255.0f;
    const std::string path = temp_path("glamor_test_rt.ppm");
    save_ppm(img, path);
    TensorF back = load_ppm(path);
    REQUIRE(back.shape() == img.shape());
    for (int64_t i = 0; i < img.size(); ++i)
        CHECK(back[i] == img[i]);
    std::remove(path.c_str());
}

TEST_CASE("ppm: malformed files raise format errors") {
    const std::string path = temp_path("glamor_test_bad.ppm");
    {
        std::ofstream out(path, std::ios::binary);
        out << "P6\n4 4\n255\n";
        out << "too short";
    }
    CHECK_THROWS_AS(load_ppm(path), FormatError);
    {
        std::ofstream out(path, std::ios::binary);
        out << "P5\n2 2\n255\n....";
    }
    CHECK_THROWS_AS(load_ppm(path), FormatError);
    CHECK_THROWS_AS(load_ppm(temp_path("glamor_does_not_exist.ppm")), IoError);
    std::remove(path.c_str());
}

TEST_CASE("resize: identity and constant cases") {
    Rng rng(2);
    TensorF img = TensorF::uniform({3, 6, 8}, 0.0f, 1.0f, rng);
    TensorF same = resize_bilinear(img, 6, 8);
    for (int64_t i = 0; i < img.size(); ++i)
        CHECK(same[i] == img[i]); // bitwise

    TensorF flat = TensorF::full({3, 4, 4}, 0.625f);
    for (auto dims : {std::pair<int64_t, int64_t>{2, 9}, {13, 3}, {8, 8}}) {
        TensorF r = resize_bilinear(flat, dims.first, dims.second);
        for (int64_t i = 0; i < r.size(); ++i)
            CHECK(r[i] == doctest::Approx(0.625f));
    }
}

TEST_CASE("resize: 2x2 to 4x4 matches the half-pixel-center hand oracle") {
    // source coordinate of output i: (i+0.5)/2 - 0.5, clamped to [0,1]
    // rows: 0 -> 0.0, 1 -> 0.25, 2 -> 0.75, 3 -> 1.0; same for columns
    TensorF img({1, 2, 2}, {1.0f, 2.0f, 3.0f, 4.0f});
    TensorF out = resize_bilinear(img, 4, 4);
    const double ky[4] = {0.0, 0.25, 0.75, 1.0};
    for (int64_t i = 0; i < 4; ++i)
        for (int64_t j = 0; j < 4; ++j) {
            const double top = 1.0 * (1.0 - ky[j]) + 2.0 * ky[j];
            const double bot = 3.0 * (1.0 - ky[j]) + 4.0 * ky[j];
            const double expect = top * (1.0 - ky[i]) + bot * ky[i];
            CHECK(out.at(0, i, j) == doctest::Approx(expect).epsilon(1e-6));
        }
}

TEST_CASE("mask_rect: exact zeros inside, untouched outside, conservation") {
    Rng rng(3);
    TensorF img = TensorF::uniform({3, 10, 12}, 0.1f, 1.0f, rng);

    TensorF all = mask_rect(img, 0, 0, 12, 10);
    for (int64_t i = 0; i < all.size(); ++i)
        CHECK(all[i] == 0.0f);

    TensorF one = mask_rect(img, 5, 4, 1, 1);
    int64_t zeros = 0;
    for (int64_t i = 0; i < one.size(); ++i)
        zeros += one[i] == 0.0f;
    CHECK(zeros == 3); // one pixel per channel

    const double before = sum_all(img.cast<double>());
    double region = 0.0;
    for (int64_t c = 0; c < 3; ++c)
        for (int64_t i = 4; i < 8; ++i)
            for (int64_t j = 2; j < 7; ++j)
                region += img.at(c, i, j);
    TensorF masked = mask_rect(img, 2, 4, 5, 4);
    CHECK(sum_all(masked.cast<double>()) == doctest::Approx(before - region).epsilon(1e-6));

    // untouched outside
    for (int64_t c = 0; c < 3; ++c)
        for (int64_t i = 0; i < 10; ++i)
            for (int64_t j = 0; j < 12; ++j) {
                const bool inside = i >= 4 && i < 8 && j >= 2 && j < 7;
                if (!inside)
                    CHECK(masked.at(c, i, j) == img.at(c, i, j));
            }

    CHECK_THROWS_AS(mask_rect(img, 10, 0, 5, 5), ValueError);
    CHECK_THROWS_AS(mask_rect(img, -1, 0, 5, 5), ValueError);
}
