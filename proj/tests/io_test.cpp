#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "pae/config.hpp"
#include "pae/io.hpp"
#include "pae/rng.hpp"
#include "pae/spectral.hpp"
#include "pae/tensor.hpp"

namespace fs = std::filesystem;
using pae::Config;
using pae::Rng;
using pae::Tensor;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("pae_io_test_" + std::to_string(::getpid()) + "_" +
                std::to_string(reinterpret_cast<std::uintptr_t>(this)));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

}  // namespace

TEST_CASE("tensor round trip is bit exact") {
    TempDir tmp;
    Rng rng(3);
    for (auto dims : std::vector<std::vector<std::size_t>>{{7}, {3, 5}, {2, 3, 4}}) {
        Tensor t(dims);
        for (double& v : t.data) v = rng.gaussian() * 1e3;
        t.data[0] = 0.0;
        const std::string p = tmp.file("t.paet");
        pae::io::write_tensor(p, t);
        Tensor back = pae::io::read_tensor(p);
        CHECK(back.dims == t.dims);
        CHECK(back.data == t.data);  // exact, not approximate
    }
}

TEST_CASE("tensor reader rejects corrupt files") {
    TempDir tmp;
    pae::io::write_text(tmp.file("bad1"), "NOPE");
    CHECK_THROWS_AS(pae::io::read_tensor(tmp.file("bad1")), pae::ConfigError);

    Tensor t({2, 2});
    pae::io::write_tensor(tmp.file("bad2"), t);
    std::string raw = pae::io::read_text(tmp.file("bad2"));
    pae::io::write_text(tmp.file("bad2"), raw.substr(0, raw.size() - 4));
    CHECK_THROWS_AS(pae::io::read_tensor(tmp.file("bad2")), pae::ConfigError);

    pae::io::write_text(tmp.file("bad3"), raw + "x");
    CHECK_THROWS_AS(pae::io::read_tensor(tmp.file("bad3")), pae::ConfigError);
}

TEST_CASE("mask save and load keeps geometry") {
    TempDir tmp;
    auto masks = pae::generate_masks(32, 32, 8, 4);
    const auto& m = masks[17];
    pae::io::save_mask(tmp.file("m.paet"), m);
    auto back = pae::io::load_mask(tmp.file("m.paet"));
    CHECK(back.origin_row == m.origin_row);
    CHECK(back.origin_col == m.origin_col);
    CHECK(back.w == m.w);
    CHECK(back.grid.data == m.grid.data);
    const std::string meta = pae::io::read_text(tmp.file("m.paet.meta"));
    CHECK(meta.find("origin=(") == 0);
    CHECK(meta.find("w=8") != std::string::npos);
}

TEST_CASE("sha256 known vectors") {
    CHECK(pae::io::sha256_str("") ==
          "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(pae::io::sha256_str("abc") ==
          "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("dir hash ignores manifest and timings but sees content") {
    TempDir tmp;
    pae::io::write_text(tmp.file("a.csv"), "x,y\n1,2\n");
    pae::io::write_text(tmp.file("summary.json"),
                        "{\"acc\": 0.5, \"timings\": {\"train_s\": 1.23}}");
    pae::io::write_text(tmp.file("manifest.json"), "{\"run\": 1}");
    const std::string h1 = pae::io::dir_content_hash(tmp.path.string());

    pae::io::write_text(tmp.file("summary.json"),
                        "{\"acc\": 0.5, \"timings\": {\"train_s\": 9.99}}");
    pae::io::write_text(tmp.file("manifest.json"), "{\"run\": 2}");
    CHECK(pae::io::dir_content_hash(tmp.path.string()) == h1);

    pae::io::write_text(tmp.file("summary.json"),
                        "{\"acc\": 0.75, \"timings\": {\"train_s\": 9.99}}");
    CHECK(pae::io::dir_content_hash(tmp.path.string()) != h1);

    pae::io::write_text(tmp.file("a.csv"), "x,y\n1,3\n");
    CHECK(pae::io::dir_content_hash(tmp.path.string()) != h1);
}

TEST_CASE("config parsing and typed access") {
    Config c = Config::parse_string(
        "# comment\n"
        "alpha = 0.5\n"
        "epochs=100\n"
        "  mpa_on = true\n"
        "\n"
        "name= run_a \n");
    CHECK(c.get_double("alpha") == 0.5);
    CHECK(c.get_int("epochs") == 100);
    CHECK(c.get_bool("mpa_on"));
    CHECK(c.get_str("name") == "run_a");
    CHECK(c.get_int("missing", 7) == 7);

    try {
        c.get_double("alpha_missing");
        FAIL("expected ConfigError");
    } catch (const pae::ConfigError& e) {
        CHECK(std::string(e.what()).find("alpha_missing") != std::string::npos);
    }
    CHECK_THROWS_AS(c.get_int("name"), pae::ConfigError);
    CHECK_THROWS_AS(Config::parse_string("no_equals_here\n"), pae::ConfigError);
    CHECK_THROWS_AS((void)Config::parse_string("=3\n"), pae::ConfigError);

    Config snap = Config::parse_string(c.to_string());
    CHECK(snap.kv == c.kv);
}
