#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "glamor/checkpoint.hpp"
#include "glamor/model.hpp"

using namespace glamor;

namespace {

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

} // namespace

TEST_CASE("checkpoint: save/load round trip reproduces forwards bitwise") {
    ModelConfig cfg = reduced_model_config();
    GlamorNet<float> net(cfg);
    Rng rng(1);
    net.init(rng);

    const std::string path = temp_path("glamor_ckpt_rt.bin");
    CheckpointMeta meta;
    meta.epoch = 3;
    meta.config_hash = config_hash("test");
    save_params(path, net.named_params(), meta);

    GlamorNet<float> loaded(cfg);
    CheckpointMeta got = load_params(path, loaded.named_params());
    CHECK(got.epoch == 3);
    CHECK(got.config_hash == meta.config_hash);

    TensorF face = TensorF::uniform({1, 3, 16, 16}, 0.0f, 1.0f, rng);
    TensorF ctx = TensorF::uniform({1, 3, 32, 32}, 0.0f, 1.0f, rng);
    auto a = net.forward(face, ctx, Mode::Eval, nullptr);
    auto b = loaded.forward(face, ctx, Mode::Eval, nullptr);
    for (int64_t i = 0; i < a.logits.size(); ++i)
        CHECK(a.logits[i] == b.logits[i]);
    std::remove(path.c_str());
}

TEST_CASE("checkpoint: zero model loads as all zeros") {
    ModelConfig cfg = reduced_model_config();
    GlamorNet<float> net(cfg); // never initialized: weights all zero, gamma one
    const std::string path = temp_path("glamor_ckpt_zero.bin");
    save_params(path, net.named_params(), {});
    GlamorNet<float> loaded(cfg);
    Rng rng(2);
    loaded.init(rng); // scribble first, load must overwrite
    load_params(path, loaded.named_params());
    for (const auto& p : loaded.named_params()) {
        if (p.name.find("gamma") != std::string::npos ||
            p.name.find("running_var") != std::string::npos)
            continue;
        for (int64_t i = 0; i < p.value->size(); ++i)
            CHECK((*p.value)[i] == 0.0f);
    }
    std::remove(path.c_str());
}

TEST_CASE("checkpoint: corruption is rejected with no partial load") {
    ModelConfig cfg = reduced_model_config();
    GlamorNet<float> net(cfg);
    Rng rng(3);
    net.init(rng);
    const std::string path = temp_path("glamor_ckpt_bad.bin");
    save_params(path, net.named_params(), {});

    SUBCASE("bad magic") {
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(0);
        f.put('X');
        f.close();
        GlamorNet<float> loaded(cfg);
        Rng lr(4);
        loaded.init(lr);
        std::vector<float> before;
        for (const auto& p : loaded.named_params())
            before.insert(before.end(), p.value->vec().begin(), p.value->vec().end());
        CHECK_THROWS_AS(load_params(path, loaded.named_params()), FormatError);
        size_t k = 0;
        for (const auto& p : loaded.named_params())
            for (int64_t i = 0; i < p.value->size(); ++i)
                CHECK((*p.value)[i] == before[k++]); // untouched
    }

    SUBCASE("truncation") {
        std::error_code ec;
        const auto full = std::filesystem::file_size(path, ec);
        std::filesystem::resize_file(path, full - 17, ec);
        GlamorNet<float> loaded(cfg);
        CHECK_THROWS_AS(load_params(path, loaded.named_params()), FormatError);
    }

    SUBCASE("bad version") {
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(4);
        f.put(static_cast<char>(9));
        f.close();
        GlamorNet<float> loaded(cfg);
        CHECK_THROWS_AS(load_params(path, loaded.named_params()), FormatError);
    }

    SUBCASE("model shape mismatch") {
        ModelConfig other = cfg;
        other.fusion_hidden = 16;
        GlamorNet<float> loaded(other);
        CHECK_THROWS_AS(load_params(path, loaded.named_params()), FormatError);
    }

    std::remove(path.c_str());
}

TEST_CASE("checkpoint: missing file is an io error") {
    GlamorNet<float> net(reduced_model_config());
    CHECK_THROWS_AS(load_params(temp_path("glamor_no_such_ckpt.bin"), net.named_params()),
                    IoError);
}
