#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "slantlab/encoder.hpp"

using namespace slantlab;
using Catch::Approx;

namespace {
std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}
} // namespace

TEST_CASE("hashed backend is deterministic", "[encoder]") {
    const HashedNgramEncoder enc(64, 42);
    const Vec a = enc.encode("the quick brown fox");
    const Vec b = enc.encode("the quick brown fox");
    CHECK(a == b); // bitwise
    CHECK(a.size() == 64);
    CHECK(l2_norm(a) == Approx(1.0).epsilon(1e-12));
}

TEST_CASE("one-token difference changes the vector", "[encoder]") {
    const HashedNgramEncoder enc(64, 42);
    CHECK(enc.encode("the quick brown fox") != enc.encode("the quick brown cat"));
}

TEST_CASE("bag-of-ngrams: word permutations give bit-identical vectors", "[encoder]") {
    const HashedNgramEncoder enc(64, 42);
    const Vec a = enc.encode("alpha beta gamma delta");
    const Vec b = enc.encode("delta gamma alpha beta");
    CHECK(a == b);
}

TEST_CASE("short and empty texts still produce usable vectors", "[encoder]") {
    const HashedNgramEncoder enc(32, 7);
    CHECK(l2_norm(enc.encode("ab")) > 0.0); // below the n-gram minimum
    CHECK(l2_norm(enc.encode("")) == 0.0);  // empty input stays zero
    CHECK(l2_norm(enc.encode("   ")) > 0.0);
}

TEST_CASE("different seeds give different embeddings", "[encoder]") {
    const HashedNgramEncoder a(64, 1), b(64, 2);
    CHECK(a.encode("some text here") != b.encode("some text here"));
}

TEST_CASE("url stripping toggle", "[encoder]") {
    const HashedNgramEncoder raw(64, 42, 3, 5, false);
    const HashedNgramEncoder clean(64, 42, 3, 5, true);
    const std::string text = "read this https://example.com/path now";
    CHECK(raw.encode(text) != clean.encode(text));
    CHECK(clean.encode(text) == clean.encode("read this now"));
}

TEST_CASE("cosine similarity fixtures", "[encoder]") {
    const Vec v{0.3, -0.7, 0.1};
    CHECK(cosine_similarity(v, v) == Approx(1.0).margin(1e-12));
    CHECK(cosine_similarity({1, 0}, {0, 1}) == Approx(0.0).margin(1e-15));
    // exact-arithmetic oracle: dot = 32, norms sqrt(14), sqrt(77)
    const long double exact = 32.0L / std::sqrt(14.0L * 77.0L);
    CHECK(cosine_similarity({1, 2, 3}, {4, 5, 6}) ==
          Approx(static_cast<double>(exact)).margin(1e-12));
    CHECK(static_cast<double>(exact) == Approx(0.974631846).margin(5e-10));
}

TEST_CASE("cosine similarity domain errors", "[encoder]") {
    CHECK_THROWS_AS(cosine_similarity({0, 0}, {1, 0}), DomainError);
    CHECK_THROWS_AS(cosine_similarity({1, 0}, {1, 0, 0}), DomainError);
}

TEST_CASE("cosine similarity properties", "[encoder]") {
    Rng rng(3);
    for (int rep = 0; rep < 200; ++rep) {
        Vec a(8), b(8);
        for (auto& x : a) x = rng.normal();
        for (auto& x : b) x = rng.normal();
        const double s = cosine_similarity(a, b);
        CHECK(s >= -1.0);
        CHECK(s <= 1.0);
        CHECK(s == cosine_similarity(b, a));
        // invariance under positive scaling
        Vec a2 = a;
        const double scale = 0.01 + 10.0 * rng.uniform();
        for (auto& x : a2) x *= scale;
        CHECK(cosine_similarity(a2, b) == Approx(s).margin(1e-12));
    }
    // equals 1 iff positive multiples
    const Vec a{0.2, -0.4, 1.0};
    Vec twice = a;
    for (auto& x : twice) x *= 2.0;
    CHECK(cosine_similarity(a, twice) == Approx(1.0).margin(1e-14));
    CHECK(cosine_similarity(a, {0.2, -0.4, 0.9}) < 1.0);
}

TEST_CASE("precomputed table lookups", "[encoder]") {
    PrecomputedTable table;
    table.insert("id1", {1.0, 0.0});
    auto backend = EncoderBackend::precomputed(std::move(table));
    CHECK(backend.encode("id1", "ignored") == Vec{1.0, 0.0});
    try {
        backend.encode("missing", "");
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("missing") != std::string::npos);
    }
}

TEST_CASE("embedding csv loader validates rows", "[encoder]") {
    const std::string path = temp_path("slantlab_test_emb.csv");
    {
        std::ofstream out(path);
        out << "a,1.0,2.0\nb,0.5,-0.5\nc,0,1\n";
    }
    auto table = load_embeddings_csv(path);
    CHECK(table.size() == 3);
    CHECK(table.dim() == 2);

    {
        std::ofstream out(path);
        out << "a,1.0,2.0\nb,0.5\n";
    }
    try {
        load_embeddings_csv(path);
        FAIL("expected ragged-row error");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }

    {
        std::ofstream out(path);
        out << "a,1.0,2.0\nb,nan,0.1\n";
    }
    try {
        load_embeddings_csv(path);
        FAIL("expected non-finite error");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
    std::filesystem::remove(path);
}

TEST_CASE("large embedding file round-trips", "[encoder]") {
    PrecomputedTable table;
    Rng rng(99);
    for (int i = 0; i < 10000; ++i) {
        Vec v(8);
        for (auto& x : v) x = rng.normal();
        table.insert("doc" + std::to_string(i), std::move(v));
    }
    const std::string path = temp_path("slantlab_test_emb_10k.csv");
    save_embeddings_csv(table, path);
    auto loaded = load_embeddings(path);
    REQUIRE(loaded.size() == 10000);
    for (const auto& [id, v] : table.by_id()) {
        const Vec& u = loaded.lookup(id);
        for (size_t d = 0; d < v.size(); ++d) CHECK(u[d] == Approx(v[d]).margin(1e-12));
    }
    // re-serialization is byte-identical
    const std::string path2 = temp_path("slantlab_test_emb_10k_2.csv");
    save_embeddings_csv(loaded, path2);
    std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
    std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(s1 == s2);
    std::filesystem::remove(path);
    std::filesystem::remove(path2);
}

TEST_CASE("binary embedding format round-trips through the id hash", "[encoder]") {
    PrecomputedTable table;
    table.insert("tweet1", {0.25, -1.5, 3.0});
    table.insert("tweet2", {1.0, 2.0, -4.0});
    const std::string path = temp_path("slantlab_test_emb.bin");
    save_embeddings_emb1(table, path);
    auto loaded = load_embeddings(path); // format sniffed from magic bytes
    CHECK(loaded.dim() == 3);
    CHECK(loaded.contains("tweet1"));
    const Vec& v = loaded.lookup("tweet1");
    CHECK(v[0] == Approx(0.25));
    CHECK(v[1] == Approx(-1.5));
    CHECK(v[2] == Approx(3.0));
    CHECK_THROWS_AS(loaded.lookup("absent"), DataError);
    std::filesystem::remove(path);
}
