#pragma once

#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "slantlab/common.hpp"
#include "slantlab/corpus.hpp"
#include "slantlab/encoder.hpp"
#include "slantlab/estimator.hpp"
#include "slantlab/panel.hpp"
#include "slantlab/slant.hpp"
#include "slantlab/synth.hpp"

namespace slantlab {

inline const char* kToolVersion = "0.1.0";

namespace fs = std::filesystem;
using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Study configuration. One JSON document drives every subcommand; paths can
// be overridden through SLANTLAB_* environment variables and the seed through
// the --seed flag.
// ---------------------------------------------------------------------------

struct SampleSpec {
    std::string name = "all";
    SampleFilter filter;
};

struct StudyConfig {
    // paths
    std::string corpus_path;
    std::string profiles_path;
    std::string embeddings_path;
    std::string poles_path;
    std::string banned_path;
    std::string output_dir = "out";

    StudyWindow window{make_date(2022, 2, 19), make_date(2022, 3, 2), make_date(2022, 3, 15)};
    PoleConfig pole;
    double pro_r_threshold = 1.0; // 1 = main, 0 = robustness
    std::string query;            // optional keyword filter at ingest
    FilterSpec filter;
    bool apply_query = false;
    std::map<std::string, bool> region_map;
    CohortOptions cohorts;

    // encoder
    std::string encoder_backend = "precomputed"; // or "hashed"
    int encoder_dim = 64;
    uint64_t encoder_seed = 1234;
    bool encoder_preprocess = false;

    // estimation battery
    std::vector<Outcome> outcomes{Outcome::AvgSlant, Outcome::ShareTweets,
                                  Outcome::ShareRetweets, Outcome::CountTweets,
                                  Outcome::CountRetweets};
    std::vector<SampleSpec> samples{{"all", {}}};
    bool controls = false;
    DofMode dof_mode = DofMode::AbsorbAdjusted;
    bool pre_mean_treated_only = false;
    Date reference_day = make_date(2022, 3, 1);
    std::vector<DateRange> bins;
    std::string event_study_sample = "all";
    Outcome event_study_outcome = Outcome::AvgSlant;

    SynthConfig synth;
    // monte carlo
    int mc_reps = 200;
    McEstimator mc_estimator = McEstimator::Did;
    Outcome mc_outcome = Outcome::AvgSlant;

    uint64_t seed = 20220302;
    int threads = 1;

    json raw; // effective config document, for hashing and the manifest
};

namespace detail {

inline size_t line_of_offset(const std::string& text, size_t offset) {
    size_t line = 1;
    for (size_t i = 0; i < offset && i < text.size(); ++i)
        if (text[i] == '\n') ++line;
    return line;
}

inline std::string env_override(const std::string& key) {
    std::string var = "SLANTLAB_";
    for (char c : key) var += static_cast<char>(c >= 'a' && c <= 'z' ? c - 'a' + 'A' : c);
    const char* v = std::getenv(var.c_str());
    return v ? std::string(v) : std::string();
}

inline std::string path_from(const json& paths, const char* key) {
    const std::string env = env_override(key);
    if (!env.empty()) return env;
    if (paths.contains(key)) return paths.at(key).get<std::string>();
    return {};
}

} // namespace detail

inline StudyConfig load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError(path + ": cannot open config file");
    std::stringstream buf;
    buf << in.rdbuf();
    const std::string text = buf.str();
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(path + ":" + std::to_string(detail::line_of_offset(text, e.byte)) +
                          ": " + e.what());
    }
    StudyConfig cfg;
    cfg.raw = j;
    try {
        if (j.contains("paths")) {
            const auto& p = j["paths"];
            cfg.corpus_path = detail::path_from(p, "corpus");
            cfg.profiles_path = detail::path_from(p, "profiles");
            cfg.embeddings_path = detail::path_from(p, "embeddings");
            cfg.poles_path = detail::path_from(p, "poles");
            cfg.banned_path = detail::path_from(p, "banned_handles");
            const std::string out = detail::path_from(p, "output_dir");
            if (!out.empty()) cfg.output_dir = out;
        }
        if (j.contains("window")) {
            const auto& w = j["window"];
            cfg.window.start = parse_date(w.at("start").get<std::string>());
            cfg.window.ban_date = parse_date(w.at("ban_date").get<std::string>());
            cfg.window.end = parse_date(w.at("end").get<std::string>());
        }
        cfg.window.validate();
        if (j.contains("pole")) {
            const auto& p = j["pole"];
            if (p.contains("mode")) {
                const std::string m = p["mode"].get<std::string>();
                if (m == "static") cfg.pole.mode = PoleMode::Static;
                else if (m == "static-preban") cfg.pole.mode = PoleMode::StaticPreban;
                else if (m == "rolling") cfg.pole.mode = PoleMode::Rolling;
                else throw ConfigError("pole.mode: unknown mode '" + m + "'");
            }
            if (p.contains("window_days")) cfg.pole.window_days = p["window_days"].get<int>();
            if (p.contains("decay")) cfg.pole.decay = p["decay"].get<double>();
            if (p.contains("smoothing")) cfg.pole.smoothing = p["smoothing"].get<double>();
            if (p.contains("weighting")) {
                const std::string m = p["weighting"].get<std::string>();
                if (m == "day-mean") cfg.pole.weighting = PoleWeighting::DayMean;
                else if (m == "per-tweet") cfg.pole.weighting = PoleWeighting::PerTweet;
                else throw ConfigError("pole.weighting: unknown value '" + m + "'");
            }
        }
        if (j.contains("thresholds") && j["thresholds"].contains("pro_r"))
            cfg.pro_r_threshold = j["thresholds"]["pro_r"].get<double>();
        if (cfg.pro_r_threshold != 0.0 && cfg.pro_r_threshold != 1.0)
            throw ConfigError("thresholds.pro_r must be 0 or 1");
        if (j.contains("query")) {
            cfg.query = j["query"].get<std::string>();
            cfg.apply_query = true;
        }
        if (j.contains("filter")) {
            const auto& f = j["filter"];
            if (f.contains("langs"))
                for (const auto& s : f["langs"]) cfg.filter.langs.insert(s.get<std::string>());
            if (f.contains("countries"))
                for (const auto& s : f["countries"])
                    cfg.filter.countries.insert(s.get<std::string>());
            if (f.contains("date_from"))
                cfg.filter.date_from = parse_date(f["date_from"].get<std::string>());
            if (f.contains("date_to"))
                cfg.filter.date_to = parse_date(f["date_to"].get<std::string>());
            if (f.contains("drop_accounts_created_after"))
                cfg.filter.drop_accounts_created_after =
                    parse_date(f["drop_accounts_created_after"].get<std::string>());
        }
        if (j.contains("region_map"))
            for (const auto& [country, treated] : j["region_map"].items())
                cfg.region_map[country] = treated.get<bool>();
        if (j.contains("cohorts")) {
            const auto& c = j["cohorts"];
            if (c.contains("supplier_threshold"))
                cfg.cohorts.supplier_threshold = c["supplier_threshold"].get<double>();
            if (c.contains("bot_activity_pct"))
                cfg.cohorts.bot_activity_pct = c["bot_activity_pct"].get<double>();
            if (c.contains("bot_reputation_pct"))
                cfg.cohorts.bot_reputation_pct = c["bot_reputation_pct"].get<double>();
            if (c.contains("slant_split"))
                cfg.cohorts.slant_split = c["slant_split"].get<double>();
            if (c.contains("activity_split"))
                cfg.cohorts.activity_split = c["activity_split"].get<double>();
            if (c.contains("top_share")) cfg.cohorts.top_share = c["top_share"].get<double>();
        }
        if (j.contains("encoder")) {
            const auto& e = j["encoder"];
            if (e.contains("backend")) cfg.encoder_backend = e["backend"].get<std::string>();
            if (cfg.encoder_backend != "precomputed" && cfg.encoder_backend != "hashed")
                throw ConfigError("encoder.backend must be 'precomputed' or 'hashed'");
            if (e.contains("dim")) cfg.encoder_dim = e["dim"].get<int>();
            if (e.contains("seed")) cfg.encoder_seed = e["seed"].get<uint64_t>();
            if (e.contains("preprocess")) cfg.encoder_preprocess = e["preprocess"].get<bool>();
        }
        if (j.contains("estimation")) {
            const auto& e = j["estimation"];
            if (e.contains("outcomes")) {
                cfg.outcomes.clear();
                for (const auto& o : e["outcomes"])
                    cfg.outcomes.push_back(outcome_from_name(o.get<std::string>()));
            }
            if (e.contains("samples")) {
                cfg.samples.clear();
                for (const auto& s : e["samples"]) {
                    SampleSpec spec;
                    spec.name = s.at("name").get<std::string>();
                    if (s.contains("interaction"))
                        spec.filter.interaction = s["interaction"].get<bool>();
                    if (s.contains("supplier"))
                        spec.filter.supplier = s["supplier"].get<bool>();
                    if (s.contains("exclude_bots"))
                        spec.filter.exclude_bots = s["exclude_bots"].get<bool>();
                    if (s.contains("exclude_late_accounts"))
                        spec.filter.exclude_late_accounts =
                            s["exclude_late_accounts"].get<bool>();
                    if (s.contains("slant_group")) {
                        const std::string g = s["slant_group"].get<std::string>();
                        spec.filter.slant_group =
                            g == "high" ? SlantGroup::High : SlantGroup::Moderate;
                    }
                    if (s.contains("activity_group")) {
                        const std::string g = s["activity_group"].get<std::string>();
                        spec.filter.activity_group = g == "high"    ? ActivityGroup::High
                                                     : g == "top05" ? ActivityGroup::Top05
                                                                    : ActivityGroup::Moderate;
                    }
                    cfg.samples.push_back(std::move(spec));
                }
            }
            if (e.contains("controls")) cfg.controls = e["controls"].get<bool>();
            if (e.contains("dof")) {
                const std::string d = e["dof"].get<std::string>();
                if (d == "absorb-adjusted") cfg.dof_mode = DofMode::AbsorbAdjusted;
                else if (d == "slopes-only") cfg.dof_mode = DofMode::SlopesOnly;
                else throw ConfigError("estimation.dof: unknown value '" + d + "'");
            }
            if (e.contains("pre_mean_treated_only"))
                cfg.pre_mean_treated_only = e["pre_mean_treated_only"].get<bool>();
            if (e.contains("reference_day"))
                cfg.reference_day = parse_date(e["reference_day"].get<std::string>());
            if (e.contains("bins")) {
                for (const auto& b : e["bins"]) {
                    if (!b.is_array() || b.size() != 2)
                        throw ConfigError("estimation.bins: each bin is [from, to]");
                    cfg.bins.push_back({parse_date(b[0].get<std::string>()),
                                        parse_date(b[1].get<std::string>())});
                }
            }
            if (e.contains("event_study_sample"))
                cfg.event_study_sample = e["event_study_sample"].get<std::string>();
            if (e.contains("event_study_outcome"))
                cfg.event_study_outcome =
                    outcome_from_name(e["event_study_outcome"].get<std::string>());
        }
        if (j.contains("synth")) {
            const auto& s = j["synth"];
            if (s.contains("n_users")) cfg.synth.n_users = s["n_users"].get<int>();
            if (s.contains("share_treated"))
                cfg.synth.share_treated = s["share_treated"].get<double>();
            if (s.contains("tweets_per_user_day"))
                cfg.synth.tweets_per_user_day = s["tweets_per_user_day"].get<double>();
            if (s.contains("true_effect")) cfg.synth.true_effect = s["true_effect"].get<double>();
            if (s.contains("pre_trend")) cfg.synth.pre_trend = s["pre_trend"].get<double>();
            if (s.contains("noise_sd")) cfg.synth.noise_sd = s["noise_sd"].get<double>();
            if (s.contains("hetero_noise")) cfg.synth.hetero_noise = s["hetero_noise"].get<bool>();
            if (s.contains("interaction_share"))
                cfg.synth.interaction_share = s["interaction_share"].get<double>();
            if (s.contains("supplier_share"))
                cfg.synth.supplier_share = s["supplier_share"].get<double>();
            if (s.contains("bot_share")) cfg.synth.bot_share = s["bot_share"].get<double>();
            if (s.contains("embedding_dim"))
                cfg.synth.embedding_dim = s["embedding_dim"].get<int>();
            if (s.contains("anchor_cos")) cfg.synth.anchor_cos = s["anchor_cos"].get<double>();
            if (s.contains("mode")) {
                const std::string m = s["mode"].get<std::string>();
                if (m == "direct-outcome") cfg.synth.mode = SynthMode::DirectOutcome;
                else if (m == "pole-anchored") cfg.synth.mode = SynthMode::PoleAnchored;
                else throw ConfigError("synth.mode: unknown value '" + m + "'");
            }
        }
        cfg.synth.window = cfg.window;
        if (j.contains("mc")) {
            const auto& m = j["mc"];
            if (m.contains("reps")) cfg.mc_reps = m["reps"].get<int>();
            if (m.contains("estimator")) {
                const std::string e = m["estimator"].get<std::string>();
                if (e == "did") cfg.mc_estimator = McEstimator::Did;
                else if (e == "weekly") cfg.mc_estimator = McEstimator::Weekly;
                else if (e == "imputation") cfg.mc_estimator = McEstimator::Imputation;
                else throw ConfigError("mc.estimator: unknown value '" + e + "'");
            }
            if (m.contains("outcome"))
                cfg.mc_outcome = outcome_from_name(m["outcome"].get<std::string>());
        }
        if (j.contains("seed")) cfg.seed = j["seed"].get<uint64_t>();
    } catch (const json::exception& e) {
        throw ConfigError(path + ": " + e.what());
    }
    cfg.synth.master_seed = cfg.seed;
    return cfg;
}

// ---------------------------------------------------------------------------
// Artifacts and manifests
// ---------------------------------------------------------------------------

inline uint64_t hash_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot hash '" + path + "'");
    uint64_t h = 0xcbf29ce484222325ull;
    char buf[65536];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        h = fnv1a64(std::string_view(buf, static_cast<size_t>(in.gcount())), h);
        if (in.gcount() < static_cast<std::streamsize>(sizeof(buf))) break;
    }
    return h;
}

inline std::string config_hash(const StudyConfig& cfg) { return hex64(fnv1a64(cfg.raw.dump())); }

// The timestamp lives in its own field so determinism checks can ignore it.
inline void write_manifest(const StudyConfig& cfg, const std::string& subcommand,
                           const std::vector<std::string>& inputs,
                           const std::vector<std::string>& outputs) {
    json m;
    m["subcommand"] = subcommand;
    m["tool_version"] = kToolVersion;
    m["config_hash"] = config_hash(cfg);
    m["seed"] = cfg.seed;
    json in_hashes = json::object();
    for (const auto& p : inputs) in_hashes[p] = hex64(hash_file(p));
    m["inputs"] = in_hashes;
    m["outputs"] = outputs;
    m["timestamp"] = static_cast<int64_t>(std::time(nullptr));
    const std::string path =
        (fs::path(cfg.output_dir) / ("manifest_" + subcommand + ".json")).string();
    std::ofstream out(path, std::ios::binary);
    out << m.dump(2) << "\n";
}

struct ArtifactDep {
    std::string file;     // relative to output_dir
    std::string producer; // subcommand that writes it
};

inline std::string artifact(const StudyConfig& cfg, const std::string& name) {
    return (fs::path(cfg.output_dir) / name).string();
}

// Walks the dependency chain in pipeline order and names the first missing
// producer, so `estimate` before `score` points at `score`.
inline void require_artifacts(const StudyConfig& cfg, const std::vector<ArtifactDep>& deps) {
    for (const auto& d : deps) {
        const std::string path = artifact(cfg, d.file);
        if (!fs::exists(path))
            throw MissingArtifactError("missing artifact '" + path + "'; run the `" +
                                       d.producer + "` subcommand first");
    }
}

// ---------------------------------------------------------------------------
// Subcommand runners. Each writes its artifacts plus a manifest and returns
// a short human-readable summary.
// ---------------------------------------------------------------------------

inline std::string run_ingest(const StudyConfig& cfg) {
    if (cfg.corpus_path.empty()) throw ConfigError("paths.corpus is required for ingest");
    fs::create_directories(cfg.output_dir);
    IngestResult result = ingest_file(cfg.corpus_path);

    std::unordered_map<std::string, UserProfile> base_profiles;
    if (!cfg.profiles_path.empty()) base_profiles = read_profiles_csv(cfg.profiles_path);

    CorpusStore corpus = std::move(result.corpus);
    FilterCounts counts;
    if (!cfg.filter.langs.empty() || !cfg.filter.countries.empty() || cfg.filter.date_from ||
        cfg.filter.date_to || cfg.filter.drop_accounts_created_after) {
        auto filtered = filter_corpus(corpus, cfg.filter,
                                      cfg.profiles_path.empty() ? nullptr : &base_profiles);
        corpus = std::move(filtered.corpus);
        counts = filtered.counts;
    }
    size_t dropped_query = 0;
    if (cfg.apply_query) {
        const QuerySpec q = QuerySpec::parse(cfg.query);
        std::vector<Tweet> kept;
        for (const auto& t : corpus.tweets()) {
            if (match_query(t.text, q)) kept.push_back(t);
            else ++dropped_query;
        }
        corpus = CorpusStore(std::move(kept));
    }

    std::unordered_map<std::string, UserProfile> profiles;
    if (!cfg.region_map.empty()) {
        profiles = derive_user_profiles(corpus, cfg.region_map,
                                        cfg.profiles_path.empty() ? nullptr : &base_profiles);
    } else {
        profiles = base_profiles;
    }

    write_corpus_csv(corpus, artifact(cfg, "corpus_clean.csv"));
    write_profiles_csv(profiles, artifact(cfg, "profiles_clean.csv"));
    write_rejects_csv(result.rejects, artifact(cfg, "rejects.csv"));

    std::vector<std::string> inputs{cfg.corpus_path};
    if (!cfg.profiles_path.empty()) inputs.push_back(cfg.profiles_path);
    write_manifest(cfg, "ingest", inputs,
                   {"corpus_clean.csv", "profiles_clean.csv", "rejects.csv"});
    std::ostringstream msg;
    msg << "ingested " << corpus.size() << " documents, rejected " << result.rejects.size()
        << ", query-dropped " << dropped_query;
    return msg.str();
}

inline std::string run_synth(const StudyConfig& cfg) {
    fs::create_directories(cfg.output_dir);
    SynthConfig synth_cfg = cfg.synth;
    synth_cfg.mode = SynthMode::PoleAnchored;
    SynthCorpus sc = generate_corpus(synth_cfg, cfg.seed);

    write_corpus_csv(sc.corpus, artifact(cfg, "corpus_clean.csv"));
    write_profiles_csv(sc.profiles, artifact(cfg, "profiles_clean.csv"));
    write_pole_corpora_csv(sc.pole_r, sc.pole_u, artifact(cfg, "poles.csv"));
    save_embeddings_csv(sc.embeddings, artifact(cfg, "embeddings.csv"));
    {
        std::ofstream out(artifact(cfg, "banned_handles.txt"), std::ios::binary);
        for (const auto& h : sc.banned_handles) out << h << "\n";
    }
    json truth;
    auto set_to_json = [](const std::set<std::string>& s) { return json(s); };
    truth["treated_users"] = set_to_json(sc.truth.treated_users);
    truth["interaction_users"] = set_to_json(sc.truth.interaction_users);
    truth["suppliers"] = set_to_json(sc.truth.suppliers);
    truth["bots"] = set_to_json(sc.truth.bots);
    truth["u_anchor_users"] = set_to_json(sc.truth.u_anchor_users);
    truth["late_accounts"] = set_to_json(sc.truth.late_accounts);
    truth["slant_high"] = set_to_json(sc.truth.slant_high);
    truth["slant_moderate"] = set_to_json(sc.truth.slant_moderate);
    truth["activity_high"] = set_to_json(sc.truth.activity_high);
    truth["activity_moderate"] = set_to_json(sc.truth.activity_moderate);
    truth["activity_top05"] = set_to_json(sc.truth.activity_top05);
    {
        std::ofstream out(artifact(cfg, "truth.json"), std::ios::binary);
        out << truth.dump(2) << "\n";
    }
    write_manifest(cfg, "synth", {},
                   {"corpus_clean.csv", "profiles_clean.csv", "poles.csv", "embeddings.csv",
                    "banned_handles.txt", "truth.json"});
    std::ostringstream msg;
    msg << "generated " << sc.corpus.size() << " documents for " << synth_cfg.n_users
        << " users (seed " << cfg.seed << ")";
    return msg.str();
}

inline std::string run_score(const StudyConfig& cfg) {
    require_artifacts(cfg, {{"corpus_clean.csv", "ingest"}});
    const CorpusStore corpus = ingest_csv(artifact(cfg, "corpus_clean.csv")).corpus;

    std::string poles_path = cfg.poles_path;
    if (poles_path.empty() && fs::exists(artifact(cfg, "poles.csv")))
        poles_path = artifact(cfg, "poles.csv");
    if (poles_path.empty()) throw ConfigError("paths.poles is required for score");
    auto [pole_r, pole_u] = read_pole_corpora_csv(poles_path, "R", "U");

    EncoderBackend backend = [&] {
        if (cfg.encoder_backend == "hashed")
            return EncoderBackend::hashed(HashedNgramEncoder(
                cfg.encoder_dim, cfg.encoder_seed, 3, 5, cfg.encoder_preprocess));
        std::string emb_path = cfg.embeddings_path;
        if (emb_path.empty() && fs::exists(artifact(cfg, "embeddings.csv")))
            emb_path = artifact(cfg, "embeddings.csv");
        if (emb_path.empty())
            throw ConfigError("paths.embeddings is required for the precomputed backend");
        return EncoderBackend::precomputed(load_embeddings(emb_path));
    }();

    PoleSet poles;
    if (cfg.pole.mode == PoleMode::Rolling) {
        if (corpus.empty()) throw DataError("score: empty corpus");
        // pole coverage is only required for days the corpus actually spans
        Date lo = corpus.tweets().front().day, hi = lo;
        for (const auto& t : corpus.tweets()) {
            lo = std::min(lo, t.day);
            hi = std::max(hi, t.day);
        }
        poles = make_rolling_pole_set(pole_r, pole_u, lo, hi, cfg.pole);
    } else {
        poles = make_static_pole_set(pole_r, pole_u, cfg.pole, cfg.window.ban_date - 1);
    }

    const ScoreResult scored = score_corpus(corpus, backend, poles, cfg.threads);
    write_scores_csv(scored.scores, artifact(cfg, "scores.csv"));
    write_standardization_json(scored.stats, artifact(cfg, "standardization.json"));

    std::vector<std::string> inputs{artifact(cfg, "corpus_clean.csv"), poles_path};
    write_manifest(cfg, "score", inputs, {"scores.csv", "standardization.json"});
    std::ostringstream msg;
    msg << "scored " << scored.scores.size() << " documents (raw mean "
        << csv::format_double(scored.stats.mean) << ", sd "
        << csv::format_double(scored.stats.sd) << "; ";
    if (backend.is_precomputed())
        msg << "precomputed backend, " << backend.table().size() << " vectors, dim "
            << backend.dim() << ")";
    else
        msg << "hashed backend, dim " << backend.dim() << ")";
    return msg.str();
}

inline std::string run_panel(const StudyConfig& cfg) {
    require_artifacts(cfg, {{"corpus_clean.csv", "ingest"}, {"scores.csv", "score"}});
    const CorpusStore corpus = ingest_csv(artifact(cfg, "corpus_clean.csv")).corpus;
    const auto scores = read_scores_csv(artifact(cfg, "scores.csv"));
    auto profiles = read_profiles_csv(artifact(cfg, "profiles_clean.csv"));
    for (auto& [uid, p] : profiles) {
        if (!cfg.region_map.empty()) {
            auto it = cfg.region_map.find(p.country);
            p.in_treated_region = it != cfg.region_map.end() && it->second;
        } else {
            p.in_treated_region = p.country == "DE"; // synth convention
        }
    }

    std::string banned_path = cfg.banned_path;
    if (banned_path.empty() && fs::exists(artifact(cfg, "banned_handles.txt")))
        banned_path = artifact(cfg, "banned_handles.txt");
    if (banned_path.empty()) throw ConfigError("paths.banned_handles is required for panel");
    const auto banned = read_banned_handles(banned_path);

    const auto threshold =
        cfg.pro_r_threshold == 0.0 ? ProRThreshold::Zero : ProRThreshold::OneSd;
    const auto cells = build_panel(corpus, scores, cfg.window, threshold);
    const auto flags = compute_cohorts(corpus, scores, profiles, banned, cfg.window,
                                       cfg.cohorts);
    write_panel_csv(cells, artifact(cfg, "panel.csv"));
    write_flags_csv(flags, artifact(cfg, "flags.csv"));
    std::vector<std::string> outputs{"panel.csv", "flags.csv"};

    // pre-ban balance of EU vs non-EU users; skipped when a side is degenerate
    std::set<std::string> treated_users, control_users;
    for (const auto& [uid, f] : flags) (f.eu ? treated_users : control_users).insert(uid);
    try {
        const auto rows = balance_table(cells, treated_users, cfg.window,
                                        {"avg_slant", "n_tweets", "n_retweets", "mean_words",
                                         "mean_mentions", "mean_hashtags"});
        csv::Writer w(artifact(cfg, "balance.csv"));
        w.row({"variable", "mean_treated", "mean_control", "diff", "t_stat", "n_treated",
               "n_control"});
        for (const auto& r : rows)
            w.row({r.variable, csv::format_double(r.mean_treated),
                   csv::format_double(r.mean_control), csv::format_double(r.diff),
                   csv::format_double(r.t_stat), std::to_string(r.n_treated),
                   std::to_string(r.n_control)});
        outputs.push_back("balance.csv");
    } catch (const DataError&) {
    }

    // per-period supplier shares by region, all users and plausible bots only
    std::set<std::string> bots;
    for (const auto& [uid, f] : flags)
        if (f.is_bot) bots.insert(uid);
    {
        csv::Writer w(artifact(cfg, "supplier_shares.csv"));
        w.row({"period", "region", "bots_only", "share"});
        for (Period period : {Period::Pre, Period::Post}) {
            for (const bool treated_side : {true, false}) {
                const auto& region = treated_side ? treated_users : control_users;
                for (const bool bots_only : {false, true}) {
                    std::string share;
                    try {
                        share = csv::format_double(
                            supplier_share(corpus, scores, cfg.window, period, region, bots,
                                           bots_only, cfg.cohorts.supplier_threshold));
                    } catch (const DataError&) {
                        share = "";
                    }
                    w.row({period == Period::Pre ? "pre" : "post",
                           treated_side ? "treated" : "control", bots_only ? "1" : "0",
                           share});
                }
            }
        }
        outputs.push_back("supplier_shares.csv");
    }

    write_manifest(cfg, "panel",
                   {artifact(cfg, "corpus_clean.csv"), artifact(cfg, "scores.csv"),
                    artifact(cfg, "profiles_clean.csv"), banned_path},
                   outputs);
    std::ostringstream msg;
    msg << "built " << cells.size() << " user-day cells, " << flags.size() << " users";
    return msg.str();
}

namespace detail {

// every fit document echoes the specification it estimated
inline json spec_echo(const StudyConfig& cfg, const std::string& sample_name,
                      Outcome outcome, const std::string& estimator) {
    return json{{"estimator", estimator},
                {"sample", sample_name},
                {"outcome", outcome_name(outcome)},
                {"controls", cfg.controls},
                {"absorb", json::array({"user", "day"})},
                {"cluster", "user"},
                {"dof", cfg.dof_mode == DofMode::AbsorbAdjusted ? "absorb-adjusted"
                                                                : "slopes-only"},
                {"window", {{"start", to_string(cfg.window.start)},
                            {"ban_date", to_string(cfg.window.ban_date)},
                            {"end", to_string(cfg.window.end)}}}};
}

inline json fit_to_json(const FitResult& fit) {
    json f;
    json coefs = json::object(), ses = json::object(), ci = json::object();
    for (size_t i = 0; i < fit.names.size(); ++i) {
        const auto& name = fit.names[i];
        coefs[name] = fit.beta[static_cast<Eigen::Index>(i)];
        const double se = fit.se(name);
        ses[name] = se;
        ci[name] = json::array(
            {fit.beta[static_cast<Eigen::Index>(i)] - 1.96 * se,
             fit.beta[static_cast<Eigen::Index>(i)] + 1.96 * se});
    }
    f["coefficients"] = coefs;
    f["se"] = ses;
    f["ci95"] = ci;
    f["n_obs"] = fit.n_obs;
    f["n_clusters"] = fit.n_clusters;
    f["r2_within"] = fit.r2_within;
    if (std::isfinite(fit.pre_period_mean)) f["pre_period_mean"] = fit.pre_period_mean;
    if (fit.pct_defined) f["pct_of_mean"] = fit.pct_of_mean;
    f["dropped_terms"] = fit.dropped_terms;
    f["diagnostics"] = {{"demean_iterations", fit.demean_iterations},
                        {"demean_delta", fit.demean_delta}};
    return f;
}

} // namespace detail

inline std::string run_estimate(const StudyConfig& cfg) {
    require_artifacts(cfg, {{"corpus_clean.csv", "ingest"},
                            {"scores.csv", "score"},
                            {"panel.csv", "panel"},
                            {"flags.csv", "panel"}});
    const auto cells = read_panel_csv(artifact(cfg, "panel.csv"));
    const auto flags = read_flags_csv(artifact(cfg, "flags.csv"));

    FitOptions opts;
    opts.window = cfg.window;
    opts.dof_mode = cfg.dof_mode;
    opts.pre_mean_treated_only = cfg.pre_mean_treated_only;

    json all = json::object();
    for (const auto& sample : cfg.samples) {
        json per_sample = json::object();
        for (Outcome outcome : cfg.outcomes) {
            json per_outcome = json::object();
            Dataset ds =
                make_dataset(cells, flags, cfg.window, outcome, cfg.controls, sample.filter);
            try {
                json f = detail::fit_to_json(did_estimate(ds, opts));
                f["spec"] = detail::spec_echo(cfg, sample.name, outcome, "did");
                per_outcome["did"] = std::move(f);
            } catch (const Error& e) {
                per_outcome["did"] = {{"error", e.what()}};
            }
            if (cfg.window.n_post_days() >= 8) {
                try {
                    json f = detail::fit_to_json(weekly_interactions(ds, opts));
                    f["spec"] = detail::spec_echo(cfg, sample.name, outcome, "weekly");
                    per_outcome["weekly"] = std::move(f);
                } catch (const Error& e) {
                    per_outcome["weekly"] = {{"error", e.what()}};
                }
            }
            try {
                const ImputationResult imp = imputation_att(ds, opts, 499, cfg.seed);
                per_outcome["imputation"] = {
                    {"att", imp.att},
                    {"se", imp.se},
                    {"n_treated_post", imp.n_treated_post},
                    {"n_boot_ok", imp.n_boot_ok},
                    {"n_boot_failed", imp.n_boot_failed},
                    {"dropped_users", imp.dropped_users},
                    {"spec", detail::spec_echo(cfg, sample.name, outcome, "imputation")}};
            } catch (const Error& e) {
                per_outcome["imputation"] = {{"error", e.what()}};
            }
            per_sample[outcome_name(outcome)] = per_outcome;
        }
        all[sample.name] = per_sample;
    }
    {
        std::ofstream out(artifact(cfg, "fits.json"), std::ios::binary);
        out << all.dump(2) << "\n";
    }
    write_manifest(cfg, "estimate",
                   {artifact(cfg, "panel.csv"), artifact(cfg, "flags.csv")}, {"fits.json"});
    std::ostringstream msg;
    msg << "estimated " << cfg.samples.size() << " sample(s) x " << cfg.outcomes.size()
        << " outcome(s)";
    return msg.str();
}

inline std::string run_event_study(const StudyConfig& cfg) {
    require_artifacts(cfg, {{"corpus_clean.csv", "ingest"},
                            {"scores.csv", "score"},
                            {"panel.csv", "panel"},
                            {"flags.csv", "panel"}});
    const auto cells = read_panel_csv(artifact(cfg, "panel.csv"));
    const auto flags = read_flags_csv(artifact(cfg, "flags.csv"));

    const SampleSpec* sample = nullptr;
    for (const auto& s : cfg.samples)
        if (s.name == cfg.event_study_sample) sample = &s;
    if (!sample)
        throw ConfigError("event_study_sample '" + cfg.event_study_sample +
                          "' not in estimation.samples");

    FitOptions opts;
    opts.window = cfg.window;
    opts.dof_mode = cfg.dof_mode;

    Dataset ds = make_dataset(cells, flags, cfg.window, cfg.event_study_outcome, cfg.controls,
                              sample->filter);
    // unidentified days/bins are emitted with empty fields, not fake zeros
    const EventStudyResult daily = event_study(ds, cfg.reference_day, {}, opts);
    {
        csv::Writer w(artifact(cfg, "event_study.csv"));
        w.row({"day", "coef", "lo", "hi"});
        for (const auto& p : daily.points) {
            if (p.dropped) w.row({to_string(p.from), "", "", ""});
            else
                w.row({to_string(p.from), csv::format_double(p.coef),
                       csv::format_double(p.lo), csv::format_double(p.hi)});
        }
    }
    std::vector<std::string> outputs{"event_study.csv"};
    if (!cfg.bins.empty()) {
        const EventStudyResult binned = event_study(ds, cfg.reference_day, cfg.bins, opts);
        csv::Writer w(artifact(cfg, "event_study_bins.csv"));
        w.row({"from", "to", "coef", "lo", "hi"});
        for (const auto& p : binned.points) {
            if (p.dropped) w.row({to_string(p.from), to_string(p.to), "", "", ""});
            else
                w.row({to_string(p.from), to_string(p.to), csv::format_double(p.coef),
                       csv::format_double(p.lo), csv::format_double(p.hi)});
        }
        outputs.push_back("event_study_bins.csv");
    }
    write_manifest(cfg, "event-study",
                   {artifact(cfg, "panel.csv"), artifact(cfg, "flags.csv")}, outputs);
    return "event study with " + std::to_string(daily.points.size()) + " points";
}

inline std::string run_mc(const StudyConfig& cfg) {
    fs::create_directories(cfg.output_dir);
    MonteCarloSpec spec;
    spec.dgp = cfg.synth;
    spec.dgp.mode = SynthMode::DirectOutcome;
    spec.estimator = cfg.mc_estimator;
    spec.outcome = cfg.mc_outcome;
    spec.reps = cfg.mc_reps;
    const MonteCarloResult r = monte_carlo(spec, cfg.seed, cfg.threads);
    json out{{"mean_estimate", r.mean_estimate},
             {"bias", r.bias},
             {"mc_se", r.mc_se},
             {"sd_estimates", r.sd_estimates},
             {"coverage_95", r.coverage_95},
             {"n_ok", r.n_ok},
             {"n_failed", r.n_failed},
             {"true_effect", spec.dgp.true_effect},
             {"reps", spec.reps}};
    {
        std::ofstream f(artifact(cfg, "mc_results.json"), std::ios::binary);
        f << out.dump(2) << "\n";
    }
    write_manifest(cfg, "mc", {}, {"mc_results.json"});
    std::ostringstream msg;
    msg << "mc: mean " << r.mean_estimate << ", bias " << r.bias << ", coverage "
        << r.coverage_95 << ", mean runtime " << r.mean_runtime_ms << " ms";
    return msg.str();
}

inline std::string run_report(const StudyConfig& cfg) {
    require_artifacts(cfg, {{"fits.json", "estimate"}});
    std::ifstream in(artifact(cfg, "fits.json"), std::ios::binary);
    json fits = json::parse(in);

    std::vector<std::string> outputs;
    auto table_value = [](const json& fit, const char* field,
                          const std::string& term) -> std::string {
        if (!fit.contains(field)) return "";
        const auto& f = fit[field];
        if (f.is_object()) {
            if (!f.contains(term)) return "";
            return csv::format_double(f[term].get<double>());
        }
        return "";
    };

    for (const auto& [sample_name, per_sample] : fits.items()) {
        // DiD table: rows = term/se/footer, columns = outcomes
        const std::string did_name = "table_did_" + sample_name + ".csv";
        {
            csv::Writer w(artifact(cfg, did_name));
            std::vector<std::string> header{"row"};
            for (const auto& [outcome, _] : per_sample.items()) header.push_back(outcome);
            w.row(header);
            auto emit = [&](const std::string& label,
                            const std::function<std::string(const json&)>& get) {
                std::vector<std::string> row{label};
                for (const auto& [_, per_outcome] : per_sample.items())
                    row.push_back(per_outcome.contains("did") ? get(per_outcome["did"]) : "");
                w.row(row);
            };
            emit("eu_x_post", [&](const json& f) { return table_value(f, "coefficients", kDidTerm); });
            emit("se", [&](const json& f) { return table_value(f, "se", kDidTerm); });
            emit("n_obs", [](const json& f) {
                return f.contains("n_obs") ? std::to_string(f["n_obs"].get<size_t>()) : "";
            });
            emit("n_clusters", [](const json& f) {
                return f.contains("n_clusters") ? std::to_string(f["n_clusters"].get<int>())
                                                : "";
            });
            emit("r2_within", [](const json& f) {
                return f.contains("r2_within") ? csv::format_double(f["r2_within"].get<double>())
                                               : "";
            });
            emit("pre_period_mean", [](const json& f) {
                return f.contains("pre_period_mean")
                           ? csv::format_double(f["pre_period_mean"].get<double>())
                           : "";
            });
            emit("pct_of_mean", [](const json& f) {
                return f.contains("pct_of_mean")
                           ? csv::format_double(f["pct_of_mean"].get<double>())
                           : "";
            });
        }
        outputs.push_back(did_name);

        const std::string weekly_name = "table_weekly_" + sample_name + ".csv";
        {
            csv::Writer w(artifact(cfg, weekly_name));
            std::vector<std::string> header{"row"};
            for (const auto& [outcome, _] : per_sample.items()) header.push_back(outcome);
            w.row(header);
            auto emit = [&](const std::string& label,
                            const std::function<std::string(const json&)>& get) {
                std::vector<std::string> row{label};
                for (const auto& [_, per_outcome] : per_sample.items())
                    row.push_back(per_outcome.contains("weekly") ? get(per_outcome["weekly"])
                                                                 : "");
                w.row(row);
            };
            emit("eu_x_week1",
                 [&](const json& f) { return table_value(f, "coefficients", kWeek1Term); });
            emit("se_week1", [&](const json& f) { return table_value(f, "se", kWeek1Term); });
            emit("eu_x_week2",
                 [&](const json& f) { return table_value(f, "coefficients", kWeek2Term); });
            emit("se_week2", [&](const json& f) { return table_value(f, "se", kWeek2Term); });
            emit("n_obs", [](const json& f) {
                return f.contains("n_obs") ? std::to_string(f["n_obs"].get<size_t>()) : "";
            });
            emit("pre_period_mean", [](const json& f) {
                return f.contains("pre_period_mean")
                           ? csv::format_double(f["pre_period_mean"].get<double>())
                           : "";
            });
            emit("pct_of_mean_week1", [](const json& f) {
                return f.contains("pct_of_mean")
                           ? csv::format_double(f["pct_of_mean"].get<double>())
                           : "";
            });
        }
        outputs.push_back(weekly_name);
    }

    std::vector<std::string> inputs{artifact(cfg, "fits.json")};
    if (fs::exists(artifact(cfg, "event_study.csv"))) {
        // re-emit the event-study series as plot-ready data alongside tables
        fs::copy_file(artifact(cfg, "event_study.csv"),
                      artifact(cfg, "event_study_plot.csv"),
                      fs::copy_options::overwrite_existing);
        inputs.push_back(artifact(cfg, "event_study.csv"));
        outputs.push_back("event_study_plot.csv");
    }
    write_manifest(cfg, "report", inputs, outputs);
    return "report assembled: " + std::to_string(outputs.size()) + " file(s)";
}

// Dispatch with the exit-code contract: 0 ok, 1 internal failure, 2 config
// error, 3 missing upstream artifact.
inline int run_subcommand(const std::string& name, const StudyConfig& cfg, std::string& message) {
    try {
        if (name == "ingest") message = run_ingest(cfg);
        else if (name == "synth") message = run_synth(cfg);
        else if (name == "score") message = run_score(cfg);
        else if (name == "panel") message = run_panel(cfg);
        else if (name == "estimate") message = run_estimate(cfg);
        else if (name == "event-study") message = run_event_study(cfg);
        else if (name == "mc") message = run_mc(cfg);
        else if (name == "report") message = run_report(cfg);
        else {
            message = "unknown subcommand '" + name + "'";
            return 2;
        }
        return 0;
    } catch (const ConfigError& e) {
        message = std::string("config error: ") + e.what();
        return 2;
    } catch (const MissingArtifactError& e) {
        message = e.what();
        return 3;
    } catch (const std::exception& e) {
        message = std::string("error: ") + e.what();
        return 1;
    }
}

} // namespace slantlab
