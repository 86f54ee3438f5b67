#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <set>

#include "talsc/checkpoint.hpp"
#include "talsc/dataset.hpp"
#include "talsc/kb.hpp"
#include "talsc/rng.hpp"

using namespace talsc;

TEST_CASE("flip matrix rows are stochastic with the pinned structure") {
    const FlipSpec spec{0.4, 3};
    const auto m = spec.matrix();
    for (int i = 0; i < 3; ++i) {
        double row = 0.0;
        for (int j = 0; j < 3; ++j) {
            row += m[i][j];
            if (i == j) REQUIRE(m[i][j] == Catch::Approx(0.6));
            else REQUIRE(m[i][j] == Catch::Approx(0.2));
        }
        REQUIRE(std::fabs(row - 1.0) < 1e-12);
    }
    REQUIRE_THROWS_AS((FlipSpec{0.4, 1}).matrix(), ValidationError);
    REQUIRE_THROWS_AS((FlipSpec{1.0, 3}).matrix(), ValidationError);
}

TEST_CASE("zero flipping rate leaves labels unchanged") {
    RngStream rng(81, "flip0");
    RngStream data_rng(81, "data");
    Dataset ds = make_toy_images(4, 8, 8, data_rng);
    KnowledgeBase kb = apply_flip(ds, FlipSpec{0.0, 4}, rng);
    for (std::size_t i = 0; i < kb.size(); ++i) {
        REQUIRE(kb.entries[i].sample.label == ds.samples[i].label);
        REQUIRE(kb.entries[i].shadow_label == ds.samples[i].label);
    }
}

TEST_CASE("empirical flip fraction matches the rate") {
    RngStream rng(83, "flipmc");
    Dataset ds;
    ds.classes = 10;
    ds.channels = 1;
    ds.height = ds.width = 1;
    for (int i = 0; i < 50'000; ++i) {
        Sample s;
        s.id = i;
        s.label = i % 10;
        s.image = Tensor({1, 1, 1});
        ds.samples.push_back(std::move(s));
    }
    KnowledgeBase kb = apply_flip(ds, FlipSpec{0.4, 10}, rng);
    int flipped = 0;
    for (std::size_t i = 0; i < kb.size(); ++i)
        if (kb.entries[i].sample.label != kb.entries[i].shadow_label) ++flipped;
    REQUIRE(flipped / 50'000.0 == Catch::Approx(0.4).margin(0.01));
    // flipped labels always differ from the original
    for (const auto& e : kb.entries)
        REQUIRE((e.sample.label >= 0 && e.sample.label < 10));
}

TEST_CASE("imbalance schedule follows the geometric law") {
    SECTION("factor one keeps all classes full") {
        const auto counts = ImbalanceSpec{1.0, 500, 10}.counts();
        for (int c : counts) REQUIRE(c == 500);
    }
    SECTION("f=100 smallest class is N/f") {
        const auto counts = ImbalanceSpec{100.0, 5000, 10}.counts();
        REQUIRE(counts.front() == 5000);
        REQUIRE(counts.back() == 50);
        for (std::size_t i = 1; i < counts.size(); ++i) REQUIRE(counts[i] <= counts[i - 1]);
    }
    SECTION("f=400 consecutive ratio is f^(1/9)") {
        const auto counts = ImbalanceSpec{400.0, 5000, 10}.counts();
        const double ratio = std::pow(400.0, 1.0 / 9.0);
        REQUIRE(ratio == Catch::Approx(1.945).margin(1e-3));
        for (std::size_t i = 1; i < counts.size(); ++i) {
            REQUIRE(counts[i] < counts[i - 1]);
            // within rounding of the exact geometric value
            const double exact = 5000.0 / std::pow(400.0, i / 9.0);
            REQUIRE(std::fabs(counts[i] - exact) <= 0.5 + 1e-9);
        }
        // endpoint ratio equals f within rounding slack
        REQUIRE(counts.front() / static_cast<double>(counts.back()) ==
                Catch::Approx(400.0).epsilon(0.05));
    }
}

TEST_CASE("imbalance with insufficient source data names the class") {
    RngStream rng(87, "imb");
    RngStream data_rng(87, "data");
    Dataset ds = make_toy_images(3, 5, 8, data_rng);
    try {
        apply_imbalance(ds, ImbalanceSpec{1.0, 50, 3}, rng);
        FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
        REQUIRE(std::string(e.what()).find("class 0") != std::string::npos);
    }
}

TEST_CASE("meta split is exact and identity-disjoint") {
    RngStream data_rng(89, "data");
    Dataset ds = make_toy_images(10, 20, 8, data_rng);
    SECTION("zero split returns everything") {
        RngStream rng(89, "split");
        auto [meta, rest] = split_meta(ds, 0, rng);
        REQUIRE(meta.samples.empty());
        REQUIRE(rest.size() == ds.size());
    }
    SECTION("ten per class over ten classes gives one hundred") {
        RngStream rng(89, "split");
        auto [meta, rest] = split_meta(ds, 10, rng);
        REQUIRE(meta.samples.size() == 100);
        REQUIRE(rest.size() == ds.size() - 100);
        std::set<int> meta_ids, rest_ids;
        for (const auto& s : meta.samples) meta_ids.insert(s.id);
        for (const auto& s : rest.samples) rest_ids.insert(s.id);
        for (int id : meta_ids) REQUIRE(rest_ids.count(id) == 0);
    }
    SECTION("insufficient class size raises") {
        RngStream rng(89, "split");
        REQUIRE_THROWS_AS(split_meta(ds, 21, rng), ValidationError);
    }
}

TEST_CASE("batch sampling is uniform, exhaustive at full size, and seeded") {
    SECTION("full-size draw is a permutation") {
        RngStream rng(97, "batch");
        auto idx = sample_batch(16, 16, rng);
        std::set<std::size_t> seen(idx.begin(), idx.end());
        REQUIRE(seen.size() == 16);
    }
    SECTION("fixed seed reproduces the draw") {
        RngStream a(97, "batch"), b(97, "batch");
        REQUIRE(sample_batch(100, 10, a) == sample_batch(100, 10, b));
    }
    SECTION("inclusion frequency is uniform within three sigma") {
        RngStream rng(97, "mc");
        const int pool = 20, pick = 5, draws = 10'000;
        std::vector<int> count(pool, 0);
        for (int d = 0; d < draws; ++d)
            for (std::size_t i : sample_batch(pool, pick, rng)) count[i]++;
        const double p = static_cast<double>(pick) / pool;
        const double sd = std::sqrt(draws * p * (1 - p));
        for (int c : count) REQUIRE(std::fabs(c - draws * p) < 3.0 * sd);
    }
    SECTION("oversized request raises") {
        RngStream rng(97, "over");
        REQUIRE_THROWS_AS(sample_batch(4, 5, rng), ValidationError);
    }
}

TEST_CASE("toy images are valid unit-range tensors with balanced labels") {
    RngStream rng(101, "toy");
    Dataset ds = make_toy_images(5, 12, 12, rng);
    REQUIRE(ds.size() == 60);
    std::vector<int> per_class(5, 0);
    for (const auto& s : ds.samples) {
        per_class[s.label]++;
        REQUIRE(s.image.shape == std::vector<int>{1, 12, 12});
        for (double v : s.image.data) {
            REQUIRE(v >= 0.0);
            REQUIRE(v <= 1.0);
        }
    }
    for (int c : per_class) REQUIRE(c == 12);
}

TEST_CASE("flat dataset files round-trip exactly within float precision") {
    RngStream rng(103, "io");
    Dataset ds = make_toy_images(3, 4, 8, rng);
    const auto path = std::filesystem::temp_directory_path() / "talsc_ds_test.bin";
    save_flat_dataset(path, ds);
    Dataset back = load_flat_dataset(path);
    REQUIRE(back.size() == ds.size());
    REQUIRE(back.classes == ds.classes);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        REQUIRE(back.samples[i].label == ds.samples[i].label);
        for (std::size_t k = 0; k < ds.samples[i].image.size(); ++k)
            REQUIRE(back.samples[i].image.data[k] ==
                    Catch::Approx(ds.samples[i].image.data[k]).margin(1e-6));
    }
    std::filesystem::remove(path);
}

TEST_CASE("checkpoints round-trip bit-exactly and reject bad magic") {
    Checkpoint ckpt;
    Tensor t({2, 3});
    t.data = {0.1, -0.2, 0.3, 1e-17, 4.0, 5.5};
    ckpt.groups["decoder"] = {t, t};
    ckpt.groups["scm"] = {Tensor({1})};
    const auto path = std::filesystem::temp_directory_path() / "talsc_ckpt_test.bin";
    save_checkpoint(ckpt, path.string());
    Checkpoint back = load_checkpoint(path.string());
    REQUIRE(back.groups.size() == 2);
    REQUIRE(back.groups.at("decoder").size() == 2);
    REQUIRE(back.groups.at("decoder")[0].shape == std::vector<int>{2, 3});
    REQUIRE(back.groups.at("decoder")[0].data == t.data);
    {
        std::ofstream bad(path, std::ios::binary);
        bad << "NOTMAGIC garbage";
    }
    REQUIRE_THROWS_AS(load_checkpoint(path.string()), ValidationError);
    std::filesystem::remove(path);
}

TEST_CASE("rng substreams are independent and reproducible") {
    RngStream a(5, "alpha"), a2(5, "alpha"), b(5, "beta");
    REQUIRE(a.uniform(0.0, 1.0) == a2.uniform(0.0, 1.0));
    RngStream c(5, "alpha"), d(6, "alpha");
    REQUIRE(c.uniform(0.0, 1.0) != d.uniform(0.0, 1.0));
    (void)b;
}
