#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "slantlab/pipeline.hpp"

using namespace slantlab;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) {
        path = fs::temp_directory_path() / name;
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

std::string write_config(const fs::path& dir, const std::string& body,
                         const std::string& name = "study.json") {
    const auto cfg_path = dir / name;
    std::ofstream out(cfg_path);
    out << body;
    return cfg_path.string();
}

std::string default_config_body(const fs::path& out_dir) {
    return std::string(R"({
  "paths": {"output_dir": ")") +
           out_dir.string() + R"("},
  "window": {"start": "2022-02-19", "ban_date": "2022-03-02", "end": "2022-03-15"},
  "synth": {"n_users": 40, "mode": "pole-anchored"},
  "estimation": {
    "outcomes": ["avg_slant", "n_proR_tweets"],
    "samples": [{"name": "all"}, {"name": "interaction", "interaction": true}]
  },
  "seed": 777
})";
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)),
                       std::istreambuf_iterator<char>());
}

} // namespace

TEST_CASE("environment variables override config paths", "[pipeline]") {
    TempDir dir("slantlab_env");
    const auto path = write_config(dir.path, R"({
  "paths": {"banned_handles": "from_config.txt"}
})");
    {
        const auto cfg = load_config(path);
        CHECK(cfg.banned_path == "from_config.txt");
    }
    setenv("SLANTLAB_BANNED_HANDLES", "/tmp/from_env.txt", 1);
    {
        const auto cfg = load_config(path);
        CHECK(cfg.banned_path == "/tmp/from_env.txt");
    }
    unsetenv("SLANTLAB_BANNED_HANDLES");
}

TEST_CASE("config parse errors carry a line number", "[pipeline]") {
    TempDir dir("slantlab_cfg_err");
    const auto path = write_config(dir.path, "{\n  \"paths\": {\n  broken\n}\n");
    try {
        load_config(path);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find(":3") != std::string::npos);
    }
}

TEST_CASE("config validation rejects bad values", "[pipeline]") {
    TempDir dir("slantlab_cfg_bad");
    const auto path = write_config(dir.path, R"({
  "window": {"start": "2022-03-10", "ban_date": "2022-03-02", "end": "2022-03-15"}
})");
    CHECK_THROWS_AS(load_config(path), ConfigError);
    const auto path2 = write_config(dir.path, R"({"thresholds": {"pro_r": 0.5}})");
    CHECK_THROWS_AS(load_config(path2), ConfigError);
}

TEST_CASE("missing upstream artifacts name the producing subcommand", "[pipeline]") {
    TempDir dir("slantlab_missing");
    const auto cfg = load_config(write_config(dir.path, default_config_body(dir.path / "out")));
    std::string msg;

    // estimate with nothing produced: the first missing artifact is the corpus
    int code = run_subcommand("estimate", cfg, msg);
    CHECK(code == 3);
    CHECK(msg.find("ingest") != std::string::npos);

    // after synth, estimate should point at score
    REQUIRE(run_subcommand("synth", cfg, msg) == 0);
    code = run_subcommand("estimate", cfg, msg);
    CHECK(code == 3);
    CHECK(msg.find("`score`") != std::string::npos);
}

TEST_CASE("full pipeline runs and records manifests", "[pipeline]") {
    TempDir dir("slantlab_full");
    const auto cfg = load_config(write_config(dir.path, default_config_body(dir.path / "out")));
    std::string msg;
    for (const char* sub : {"synth", "score", "panel", "estimate", "event-study", "report"}) {
        const int code = run_subcommand(sub, cfg, msg);
        INFO(sub << ": " << msg);
        REQUIRE(code == 0);
    }
    const fs::path out = dir.path / "out";
    for (const char* f :
         {"corpus_clean.csv", "profiles_clean.csv", "poles.csv", "embeddings.csv",
          "scores.csv", "standardization.json", "panel.csv", "flags.csv", "fits.json",
          "event_study.csv", "table_did_all.csv", "table_weekly_interaction.csv",
          "event_study_plot.csv"}) {
        INFO(f);
        CHECK(fs::exists(out / f));
    }
    // manifest records the seed and isolates the timestamp
    const auto manifest = nlohmann::json::parse(slurp(out / "manifest_synth.json"));
    CHECK(manifest.at("seed").get<uint64_t>() == 777);
    CHECK(manifest.contains("timestamp"));
    CHECK(manifest.at("tool_version").get<std::string>() == kToolVersion);

    // fits.json holds the estimate battery for both samples
    const auto fits = nlohmann::json::parse(slurp(out / "fits.json"));
    REQUIRE(fits.contains("all"));
    REQUIRE(fits.contains("interaction"));
    CHECK(fits["all"].contains("avg_slant"));
    CHECK(fits["all"]["avg_slant"].contains("did"));
    CHECK(fits["all"]["avg_slant"]["did"].contains("coefficients"));
}

TEST_CASE("reruns are byte-identical apart from manifest timestamps", "[pipeline]") {
    TempDir dir("slantlab_determinism");
    const auto cfg_a =
        load_config(write_config(dir.path, default_config_body(dir.path / "a")));
    const auto cfg_b =
        load_config(write_config(dir.path, default_config_body(dir.path / "b")));
    std::string msg;
    for (const char* sub : {"synth", "score", "panel", "estimate"}) {
        REQUIRE(run_subcommand(sub, cfg_a, msg) == 0);
        REQUIRE(run_subcommand(sub, cfg_b, msg) == 0);
    }
    for (const char* f : {"corpus_clean.csv", "embeddings.csv", "scores.csv", "panel.csv",
                          "flags.csv", "fits.json"}) {
        INFO(f);
        CHECK(slurp(dir.path / "a" / f) == slurp(dir.path / "b" / f));
    }
    // manifests agree once the timestamp field is removed
    auto ma = nlohmann::json::parse(slurp(dir.path / "a" / "manifest_estimate.json"));
    auto mb = nlohmann::json::parse(slurp(dir.path / "b" / "manifest_estimate.json"));
    ma.erase("timestamp");
    mb.erase("timestamp");
    // input paths differ (a/ vs b/), so compare structure keys and seed only
    CHECK(ma.at("seed") == mb.at("seed"));
    CHECK(ma.at("config_hash") != mb.at("config_hash")); // different output_dir in config
}

TEST_CASE("config variants drive alternative pipeline modes", "[pipeline]") {
    TempDir dir("slantlab_variants");

    auto run_variant = [&](const std::string& name, const std::string& extra) {
        const fs::path out = dir.path / name;
        const std::string body = std::string(R"({
  "paths": {"output_dir": ")") + out.string() + R"("},
  "window": {"start": "2022-02-19", "ban_date": "2022-03-02", "end": "2022-03-15"},
  "synth": {"n_users": 40, "mode": "pole-anchored"},
  "estimation": {"outcomes": ["avg_slant"], "samples": [{"name": "all"}]},
  "seed": 31)" + extra + "\n}";
        const auto cfg = load_config(write_config(dir.path, body, name + ".json"));
        std::string msg;
        for (const char* sub : {"synth", "score", "panel", "estimate"}) {
            const int code = run_subcommand(sub, cfg, msg);
            INFO(name << " " << sub << ": " << msg);
            REQUIRE(code == 0);
        }
        return out;
    };

    const auto rolling_out = run_variant("rolling", "");
    const auto static_out = run_variant("static_poles", R"(,
  "pole": {"mode": "static"})");
    const auto preban_out = run_variant("preban_poles", R"(,
  "pole": {"mode": "static-preban"})");
    const auto pertweet_out = run_variant("per_tweet", R"(,
  "pole": {"mode": "rolling", "weighting": "per-tweet"})");
    const auto zero_thresh_out = run_variant("zero_threshold", R"(,
  "thresholds": {"pro_r": 0.0})");
    run_variant("slopes_dof", R"(,
  "estimation": {"outcomes": ["avg_slant"], "samples": [{"name": "all"}],
                 "dof": "slopes-only"})");
    run_variant("with_controls", R"(,
  "estimation": {"outcomes": ["avg_slant"], "samples": [{"name": "all"}],
                 "controls": true})");

    // pole configurations produce genuinely different scores
    const auto s_roll = slurp(rolling_out / "scores.csv");
    const auto s_stat = slurp(static_out / "scores.csv");
    const auto s_pre = slurp(preban_out / "scores.csv");
    const auto s_pt = slurp(pertweet_out / "scores.csv");
    CHECK(s_roll != s_stat);
    CHECK(s_stat != s_pre);
    CHECK(s_roll != s_pt);

    // the zero threshold never shrinks pro-slant counts
    const auto strict = read_panel_csv((rolling_out / "panel.csv").string());
    const auto loose = read_panel_csv((zero_thresh_out / "panel.csv").string());
    REQUIRE(strict.size() == loose.size());
    size_t strict_total = 0, loose_total = 0;
    for (size_t i = 0; i < strict.size(); ++i) {
        strict_total += static_cast<size_t>(strict[i].n_proR_tweets);
        loose_total += static_cast<size_t>(loose[i].n_proR_tweets);
    }
    CHECK(loose_total >= strict_total);
}

TEST_CASE("heterogeneity samples restrict the estimation cohorts", "[pipeline]") {
    TempDir dir("slantlab_hetero");
    const fs::path out = dir.path / "out";
    const std::string body = std::string(R"({
  "paths": {"output_dir": ")") + out.string() + R"("},
  "window": {"start": "2022-02-19", "ban_date": "2022-03-02", "end": "2022-03-15"},
  "synth": {"n_users": 120, "mode": "pole-anchored", "supplier_share": 0.2},
  "estimation": {
    "outcomes": ["avg_slant"],
    "samples": [
      {"name": "interaction", "interaction": true},
      {"name": "interaction_high", "interaction": true, "slant_group": "high"},
      {"name": "interaction_moderate", "interaction": true, "slant_group": "moderate"},
      {"name": "suppliers", "supplier": true},
      {"name": "suppliers_active", "supplier": true, "activity_group": "high"}
    ]
  },
  "seed": 2023
})";
    const auto cfg = load_config(write_config(dir.path, body));
    std::string msg;
    for (const char* sub : {"synth", "score", "panel", "estimate"}) {
        const int code = run_subcommand(sub, cfg, msg);
        INFO(sub << ": " << msg);
        REQUIRE(code == 0);
    }
    const auto fits = nlohmann::json::parse(slurp(out / "fits.json"));
    auto n_obs = [&](const char* sample) -> size_t {
        const auto& f = fits.at(sample).at("avg_slant").at("did");
        return f.contains("n_obs") ? f.at("n_obs").get<size_t>() : 0;
    };
    // the subgroups nest: high + moderate partition the interaction users
    CHECK(n_obs("interaction_high") > 0);
    CHECK(n_obs("interaction_moderate") > 0);
    CHECK(n_obs("interaction_high") + n_obs("interaction_moderate") ==
          n_obs("interaction"));
    CHECK(n_obs("suppliers_active") > 0);
    CHECK(n_obs("suppliers_active") < n_obs("suppliers"));
}

TEST_CASE("mc subcommand supports every estimator", "[pipeline]") {
    TempDir dir("slantlab_mc_variants");
    for (const char* est : {"did", "weekly", "imputation"}) {
        const fs::path out = dir.path / est;
        const std::string body = std::string(R"({
  "paths": {"output_dir": ")") + out.string() + R"("},
  "window": {"start": "2022-02-19", "ban_date": "2022-03-02", "end": "2022-03-15"},
  "synth": {"n_users": 30, "true_effect": -0.1},
  "mc": {"reps": 50, "estimator": ")" + est + R"("},
  "seed": 7
})";
        const auto cfg = load_config(write_config(dir.path, body, std::string(est) + ".json"));
        std::string msg;
        const int code = run_subcommand("mc", cfg, msg);
        INFO(est << ": " << msg);
        REQUIRE(code == 0);
        const auto results = nlohmann::json::parse(slurp(out / "mc_results.json"));
        CHECK(results.at("n_ok").get<int>() == 50);
        CHECK(results.at("true_effect").get<double>() == -0.1);
        // all three estimators are consistent for the uniform post effect
        CHECK(std::abs(results.at("mean_estimate").get<double>() + 0.1) < 0.05);
    }
}

TEST_CASE("raw-corpus ingest flow with query and region map", "[pipeline]") {
    TempDir dir("slantlab_ingest_flow");
    const fs::path out = dir.path / "out";

    // a small jsonl corpus: two countries, one off-topic document, one
    // malformed line, one off-language document
    {
        std::ofstream f(dir.path / "raw.jsonl");
        const char* days[] = {"2022-02-20", "2022-02-25", "2022-03-03", "2022-03-10"};
        int id = 0;
        for (int u = 0; u < 10; ++u) {
            for (int k = 0; k < 4; ++k) {
                f << R"({"id":"t)" << id++ << R"(","user_id":"user)" << u
                  << R"(","timestamp":")" << days[k] << R"(T10:00:00Z","text":"russia )"
                  << (u % 3 == 0 ? "escalation" : "talks") << R"( day )" << k
                  << R"(","lang":"en","country":")" << (u < 5 ? "DE" : "CH") << R"("})"
                  << "\n";
            }
        }
        f << R"({"id":"off","user_id":"user0","timestamp":"2022-02-21T10:00:00Z",)"
          << R"("text":"cooking pasta tonight","lang":"en","country":"DE"})" << "\n";
        f << "{broken}\n";
        f << R"({"id":"de_lang","user_id":"user1","timestamp":"2022-02-21T10:00:00Z",)"
          << R"("text":"russland bericht","lang":"de","country":"DE"})" << "\n";
    }
    {
        std::ofstream f(dir.path / "profiles.csv");
        f << "user_id,followers,followees,account_created\n";
        for (int u = 0; u < 10; ++u)
            f << "user" << u << "," << 100 + u * 37 << ",400,2021-05-01\n";
    }
    {
        std::ofstream f(dir.path / "banned.txt");
        f << "banned_outlet\n";
    }
    // poles encoded with the same hashed backend the scorer will use
    {
        HashedNgramEncoder enc(48, 7);
        PoleCorpus r{"R", {}}, u{"U", {}};
        for (int d = -7; d <= 25; ++d) {
            const Date day = make_date(2022, 2, 19) + d;
            r.tweets.push_back({day, enc.encode("special operation donbass liberation")});
            r.tweets.push_back({day, enc.encode("western aggression provoked russia")});
            u.tweets.push_back({day, enc.encode("stop the invasion of ukraine")});
            u.tweets.push_back({day, enc.encode("occupiers shell peaceful cities")});
        }
        write_pole_corpora_csv(r, u, (dir.path / "poles.csv").string());
    }

    const auto cfg_path = write_config(dir.path, std::string(R"({
  "paths": {
    "corpus": ")") + (dir.path / "raw.jsonl").string() + R"(",
    "profiles": ")" + (dir.path / "profiles.csv").string() + R"(",
    "poles": ")" + (dir.path / "poles.csv").string() + R"(",
    "banned_handles": ")" + (dir.path / "banned.txt").string() + R"(",
    "output_dir": ")" + out.string() + R"("
  },
  "window": {"start": "2022-02-19", "ban_date": "2022-03-02", "end": "2022-03-15"},
  "query": "russ* OR ukrain* OR nato OR otan",
  "filter": {"langs": ["en"]},
  "region_map": {"DE": true, "CH": false},
  "encoder": {"backend": "hashed", "dim": 48, "seed": 7},
  "estimation": {"outcomes": ["avg_slant"], "samples": [{"name": "all"}]},
  "seed": 99
})");
    const auto cfg = load_config(cfg_path);
    std::string msg;
    for (const char* sub : {"ingest", "score", "panel", "estimate", "report"}) {
        const int code = run_subcommand(sub, cfg, msg);
        INFO(sub << ": " << msg);
        REQUIRE(code == 0);
    }
    // 40 on-topic docs survive; the off-topic, malformed and off-language ones fall out
    const auto corpus = ingest_csv((out / "corpus_clean.csv").string()).corpus;
    CHECK(corpus.size() == 40);
    const auto rejects = slurp(out / "rejects.csv");
    CHECK(rejects.find("malformed json") != std::string::npos);
    CHECK(fs::exists(out / "balance.csv"));
    CHECK(fs::exists(out / "supplier_shares.csv"));
    const auto fits = nlohmann::json::parse(slurp(out / "fits.json"));
    CHECK(fits.at("all").at("avg_slant").at("did").contains("coefficients"));
}

#ifdef SLANTLAB_CLI_PATH
TEST_CASE("the bundled synthetic study config drives the full pipeline", "[pipeline]") {
    TempDir dir("slantlab_bundled");
    const std::string cli = SLANTLAB_CLI_PATH;
    const std::string bundled =
        std::string(SLANTLAB_SOURCE_DIR) + "/configs/synthetic_study.json";
    const std::string out = (dir.path / "out").string();
    auto run = [&](const std::string& sub) {
        const std::string cmd =
            cli + " " + sub + " -c " + bundled + " --out " + out + " >/dev/null 2>&1";
        return WEXITSTATUS(std::system(cmd.c_str()));
    };
    CHECK(run("synth") == 0);
    CHECK(run("score") == 0);
    CHECK(run("panel") == 0);
    CHECK(run("estimate") == 0);
    CHECK(run("event-study") == 0);
    CHECK(run("report") == 0);
    const auto manifest =
        nlohmann::json::parse(slurp(dir.path / "out" / "manifest_synth.json"));
    CHECK(manifest.at("seed").get<uint64_t>() == 20220302);
    CHECK(fs::exists(dir.path / "out" / "event_study_bins.csv"));
    CHECK(fs::exists(dir.path / "out" / "table_weekly_interaction.csv"));
}

TEST_CASE("command line exit codes follow the contract", "[pipeline]") {
    TempDir dir("slantlab_cli");
    const std::string cli = SLANTLAB_CLI_PATH;
    const auto cfg_path = write_config(dir.path, default_config_body(dir.path / "out"));

    auto run = [&](const std::string& args) {
        const std::string cmd = cli + " " + args + " >/dev/null 2>&1";
        const int status = std::system(cmd.c_str());
        return WEXITSTATUS(status);
    };

    // invalid config -> 2
    const auto bad = write_config(dir.path, "{ not json", "broken.json");
    CHECK(run("score -c " + bad) == 2);
    // missing upstream artifact -> 3
    CHECK(run("score -c " + cfg_path) == 3);
    // happy path -> 0
    CHECK(run("synth -c " + cfg_path) == 0);
    CHECK(run("score -c " + cfg_path) == 0);
    CHECK(run("panel -c " + cfg_path) == 0);
    // unknown option -> CLI11 error (not 0)
    CHECK(run("score --definitely-not-a-flag") != 0);
    // --seed overrides the config seed and lands in the manifest
    CHECK(run("synth -c " + cfg_path + " --seed 4242") == 0);
    const auto manifest =
        nlohmann::json::parse(slurp(dir.path / "out" / "manifest_synth.json"));
    CHECK(manifest.at("seed").get<uint64_t>() == 4242);
}
#endif
