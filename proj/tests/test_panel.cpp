#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "oracles.hpp"
#include "slantlab/panel.hpp"

using namespace slantlab;
using Catch::Approx;

namespace {

const StudyWindow kWindow{make_date(2022, 2, 19), make_date(2022, 3, 2),
                          make_date(2022, 3, 15)};

Tweet doc(const std::string& id, const std::string& user, Date day, bool retweet = false,
          const std::string& rt_handle = "", const std::string& reply_handle = "") {
    Tweet t;
    t.id = id;
    t.user_id = user;
    t.day = day;
    t.timestamp = static_cast<int64_t>(day.days) * 86400 + 3600;
    t.text = "text";
    t.is_retweet = retweet;
    t.retweeted_handle = retweet ? (rt_handle.empty() ? "someone" : rt_handle) : "";
    t.replied_handle = reply_handle;
    t.n_words = 10;
    t.n_mentions = 1;
    t.n_hashtags = 0;
    return t;
}

SlantScore score_of(const std::string& id, double z) {
    SlantScore s;
    s.tweet_id = id;
    s.raw = z; // raw unused downstream of scoring
    s.z = z;
    s.flag_1sd = z > 1.0;
    s.flag_0 = z > 0.0;
    return s;
}

} // namespace

TEST_CASE("a single pro-slant tweet forms a complete cell", "[panel]") {
    CorpusStore corpus({doc("a", "u1", kWindow.start)});
    const auto cells = build_panel(corpus, {score_of("a", 2.0)}, kWindow);
    REQUIRE(cells.size() == 1);
    const auto& c = cells[0];
    CHECK(c.user_id == "u1");
    CHECK(c.avg_slant == Approx(2.0));
    CHECK(c.n_tweets == 1);
    CHECK(c.n_retweets == 0);
    CHECK(c.n_proR_tweets == 1);
    REQUIRE(c.share_proR_tweets.has_value());
    CHECK(*c.share_proR_tweets == Approx(1.0));
    CHECK_FALSE(c.share_proR_retweets.has_value());
}

TEST_CASE("retweet-only cells have no tweet share", "[panel]") {
    CorpusStore corpus({doc("a", "u1", kWindow.start, true)});
    const auto cells = build_panel(corpus, {score_of("a", 0.5)}, kWindow);
    REQUIRE(cells.size() == 1);
    CHECK_FALSE(cells[0].share_proR_tweets.has_value());
    REQUIRE(cells[0].share_proR_retweets.has_value());
    CHECK(cells[0].n_retweets == 1);
}

TEST_CASE("panel aggregates equal a brute-force group-by", "[panel]") {
    std::vector<Tweet> tweets;
    std::vector<SlantScore> scores;
    Rng rng(31);
    for (int i = 0; i < 20; ++i) {
        const std::string uid = "u" + std::to_string(static_cast<int>(rng.below(4)));
        const Date day = kWindow.start + static_cast<int>(rng.below(10));
        auto t = doc("d" + std::to_string(i), uid, day, rng.uniform() < 0.4);
        t.n_words = static_cast<int>(rng.below(30)) + 1;
        t.n_mentions = static_cast<int>(rng.below(5));
        t.n_hashtags = static_cast<int>(rng.below(3));
        tweets.push_back(t);
        scores.push_back(score_of(t.id, rng.normal() * 1.5));
    }
    CorpusStore corpus(tweets);
    const auto cells = build_panel(corpus, scores, kWindow);

    // oracle: plain maps
    struct Agg {
        std::vector<double> z, words, mentions, hashtags;
        int nt = 0, nrt = 0, pt = 0, prt = 0;
    };
    std::map<std::pair<std::string, Date>, Agg> oracle_cells;
    for (size_t i = 0; i < tweets.size(); ++i) {
        const Tweet* t = corpus.find(scores[i].tweet_id);
        auto& a = oracle_cells[{t->user_id, t->day}];
        a.z.push_back(scores[i].z);
        a.words.push_back(t->n_words);
        a.mentions.push_back(t->n_mentions);
        a.hashtags.push_back(t->n_hashtags);
        if (t->is_retweet) {
            ++a.nrt;
            if (scores[i].z > 1.0) ++a.prt;
        } else {
            ++a.nt;
            if (scores[i].z > 1.0) ++a.pt;
        }
    }
    REQUIRE(cells.size() == oracle_cells.size());
    size_t doc_count = 0;
    for (const auto& c : cells) {
        const auto& a = oracle_cells.at({c.user_id, c.day});
        double zsum = 0;
        for (double z : a.z) zsum += z;
        CHECK(c.avg_slant == Approx(zsum / a.z.size()).margin(1e-12));
        CHECK(c.n_tweets == a.nt);
        CHECK(c.n_retweets == a.nrt);
        CHECK(c.n_proR_tweets == a.pt);
        CHECK(c.n_proR_retweets == a.prt);
        doc_count += static_cast<size_t>(c.n_tweets + c.n_retweets);
    }
    CHECK(doc_count == tweets.size()); // cell counts partition the documents
}

TEST_CASE("panel integrity errors", "[panel]") {
    CorpusStore corpus({doc("a", "u1", kWindow.start)});
    CHECK_THROWS_AS(build_panel(corpus, {score_of("ghost", 1.0)}, kWindow), DataError);
    CHECK_THROWS_AS(
        build_panel(corpus, {score_of("a", 1.0), score_of("a", 1.0)}, kWindow), DataError);
    CorpusStore outside({doc("b", "u1", kWindow.start - 5)});
    CHECK_THROWS_AS(build_panel(outside, {score_of("b", 1.0)}, kWindow), DataError);
}

TEST_CASE("zero-threshold flags widen the pro-slant counts", "[panel]") {
    CorpusStore corpus({doc("a", "u1", kWindow.start)});
    const auto strict = build_panel(corpus, {score_of("a", 0.5)}, kWindow,
                                    ProRThreshold::OneSd);
    const auto loose = build_panel(corpus, {score_of("a", 0.5)}, kWindow, ProRThreshold::Zero);
    CHECK(strict[0].n_proR_tweets == 0);
    CHECK(loose[0].n_proR_tweets == 1);
}

TEST_CASE("interaction users need a pre-ban interaction", "[panel]") {
    CorpusStore corpus({doc("a", "u1", kWindow.start + 1, true, "RT_com"),
                        doc("b", "u2", kWindow.ban_date + 1, true, "RT_com"),
                        doc("c", "u3", kWindow.start + 2, false, "", "rt_COM"),
                        doc("d", "u4", kWindow.start + 3)});
    const auto users = flag_interaction_users(corpus, {"RT_com"}, kWindow);
    CHECK(users == std::set<std::string>{"u1", "u3"}); // case-insensitive, pre-ban only
    CHECK_THROWS_AS(flag_interaction_users(corpus, {}, kWindow), ConfigError);
}

TEST_CASE("interaction flags equal a scan oracle on a 12-user fixture", "[panel]") {
    std::vector<Tweet> tweets;
    Rng rng(41);
    const std::set<std::string> banned{"outlet_one", "outlet_two"};
    for (int i = 0; i < 12; ++i) {
        const std::string uid = "u" + std::to_string(i);
        for (int k = 0; k < 4; ++k) {
            const Date day = kWindow.start + static_cast<int>(rng.below(25));
            const bool banned_hit = rng.uniform() < 0.2;
            tweets.push_back(doc(uid + "_" + std::to_string(k), uid, day, banned_hit,
                                 banned_hit ? "outlet_one" : ""));
        }
    }
    CorpusStore corpus(tweets);
    std::set<std::string> expected;
    for (const auto& t : corpus.tweets())
        if (t.day < kWindow.ban_date &&
            (banned.count(t.retweeted_handle) || banned.count(t.replied_handle)))
            expected.insert(t.user_id);
    CHECK(flag_interaction_users(corpus, banned, kWindow) == expected);
}

TEST_CASE("suppliers are users with a pre-ban document above the threshold", "[panel]") {
    CorpusStore corpus({doc("a", "u1", kWindow.start, true), doc("b", "u2", kWindow.start),
                        doc("c", "u3", kWindow.ban_date + 2)});
    std::vector<SlantScore> scores{score_of("a", 1.2), score_of("b", 0.9),
                                   score_of("c", 3.0)};
    const auto suppliers = flag_suppliers(corpus, scores, kWindow);
    CHECK(suppliers == std::set<std::string>{"u1"}); // u3 is post-ban only
    // threshold 0 gives a superset of threshold 1
    const auto loose = flag_suppliers(corpus, scores, kWindow, 0.0);
    for (const auto& u : suppliers) CHECK(loose.count(u) == 1);
}

TEST_CASE("bot flags follow the two percentile rules", "[panel]") {
    std::unordered_map<std::string, UserProfile> profiles;
    std::map<std::string, double> activity;
    // 8 users: activity 1..8, reputation monotone except u7 (low rep, high act)
    for (int i = 0; i < 8; ++i) {
        UserProfile p;
        p.user_id = "u" + std::to_string(i);
        p.followers = (i == 7) ? 10 : 100 + 100 * i;
        p.followees = 1000;
        profiles[p.user_id] = p;
        activity[p.user_id] = 1.0 + i;
    }
    const auto bots = flag_bots(profiles, activity);
    // oracle: nearest-rank percentiles
    std::vector<double> acts, reps;
    for (const auto& [uid, p] : profiles) {
        acts.push_back(activity[uid]);
        reps.push_back(*p.reputation());
    }
    const double act_cut = oracle::nearest_rank_quantile(acts, 0.75);
    const double rep_cut = oracle::nearest_rank_quantile(reps, 0.25);
    std::set<std::string> expected;
    for (const auto& [uid, p] : profiles)
        if (activity[uid] > act_cut && *p.reputation() < rep_cut) expected.insert(uid);
    CHECK(bots == expected);
    CHECK(bots.count("u7") == 1); // top activity, bottom reputation
}

TEST_CASE("bot edge cases", "[panel]") {
    std::unordered_map<std::string, UserProfile> profiles;
    std::map<std::string, double> activity;
    for (int i = 0; i < 6; ++i) {
        UserProfile p;
        p.user_id = "u" + std::to_string(i);
        p.followers = i == 0 ? 0 : 10;       // u0 reputation undefined
        p.followees = i == 0 ? 0 : 990;
        profiles[p.user_id] = p;
        activity[p.user_id] = i == 5 ? 0.0 : 5.0 + i; // u5 inactive
    }
    const auto bots = flag_bots(profiles, activity);
    CHECK(bots.count("u0") == 0); // undefined reputation excluded
    CHECK(bots.count("u5") == 0); // zero activity is never upper-quartile

    std::unordered_map<std::string, UserProfile> tiny;
    for (int i = 0; i < 3; ++i) {
        UserProfile p;
        p.user_id = "t" + std::to_string(i);
        p.followers = 1;
        p.followees = 1;
        tiny[p.user_id] = p;
    }
    CHECK_THROWS_AS(flag_bots(tiny, {}), DataError);
}

TEST_CASE("percentile split uses nearest-rank with ties below", "[panel]") {
    std::map<std::string, double> stats{{"a", 1}, {"b", 2}, {"c", 3}, {"d", 4}};
    const auto split = percentile_split(stats, 0.75);
    CHECK(split.above == std::set<std::string>{"d"});
    CHECK(split.below == std::set<std::string>{"a", "b", "c"});
    CHECK_FALSE(split.degenerate);
    // partition property
    CHECK(split.above.size() + split.below.size() == stats.size());
}

TEST_CASE("top 0.5 percent of 50 users is at most one user", "[panel]") {
    std::map<std::string, double> stats;
    for (int i = 0; i < 50; ++i) stats["u" + std::to_string(i)] = i;
    const auto split = percentile_split(stats, 0.995);
    CHECK(split.above.size() <= 1);
}

TEST_CASE("all-equal stats degenerate to an empty top slice", "[panel]") {
    std::map<std::string, double> stats{{"a", 2}, {"b", 2}, {"c", 2}};
    const auto split = percentile_split(stats, 0.75);
    CHECK(split.above.empty());
    CHECK(split.degenerate);
}

namespace {

std::vector<PanelCell> balance_fixture(double treat_shift) {
    std::vector<PanelCell> cells;
    Rng rng(53);
    for (int i = 0; i < 20; ++i) {
        const bool treated = i < 10;
        for (int d = 0; d < 8; ++d) {
            PanelCell c;
            c.user_id = (treated ? "t" : "c") + std::to_string(i);
            c.day = kWindow.start + d;
            c.avg_slant = rng.normal() + (treated ? treat_shift : 0.0);
            c.n_tweets = 1 + static_cast<int>(rng.below(4));
            c.mean_words = 20 + rng.normal();
            cells.push_back(c);
        }
    }
    return cells;
}

std::set<std::string> treated_of(const std::vector<PanelCell>& cells) {
    std::set<std::string> out;
    for (const auto& c : cells)
        if (c.user_id[0] == 't') out.insert(c.user_id);
    return out;
}

} // namespace

TEST_CASE("balance table: identical groups give zero diff and t", "[panel]") {
    std::vector<PanelCell> cells;
    for (int i = 0; i < 8; ++i) {
        PanelCell c;
        c.user_id = (i < 4 ? "t" : "c") + std::to_string(i % 4);
        c.day = kWindow.start;
        c.avg_slant = 0.25 * (i % 4); // mirrored across groups
        c.n_tweets = 1;
        cells.push_back(c);
    }
    std::set<std::string> treated{"t0", "t1", "t2", "t3"};
    const auto rows = balance_table(cells, treated, kWindow, {"avg_slant"});
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].diff == Approx(0.0).margin(1e-14));
    CHECK(rows[0].t_stat == Approx(0.0).margin(1e-12));
}

TEST_CASE("balance table matches the closed-form Welch statistic", "[panel]") {
    const auto cells = balance_fixture(1.0);
    const auto treated = treated_of(cells);
    const auto rows = balance_table(cells, treated, kWindow, {"avg_slant", "mean_words"});
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].diff > 0.5);

    // oracle: user-level pre-ban means, Welch t
    std::map<std::string, std::pair<double, int>> acc;
    for (const auto& c : cells) {
        if (kWindow.is_post(c.day)) continue;
        acc[c.user_id].first += c.avg_slant;
        acc[c.user_id].second += 1;
    }
    std::vector<double> t_means, c_means;
    for (const auto& [uid, sn] : acc)
        (treated.count(uid) ? t_means : c_means).push_back(sn.first / sn.second);
    CHECK(rows[0].t_stat == Approx(oracle::welch_t(t_means, c_means)).margin(1e-10));
}

TEST_CASE("balance table errors on degenerate groups", "[panel]") {
    auto cells = balance_fixture(0.0);
    CHECK_THROWS_AS(balance_table(cells, {}, kWindow, {"avg_slant"}), DataError);
    CHECK_THROWS_AS(balance_table(cells, {"t0"}, kWindow, {"avg_slant"}), DataError);
}

TEST_CASE("supplier share counts active users in period and region", "[panel]") {
    std::vector<Tweet> tweets;
    std::vector<SlantScore> scores;
    // 8 treated users active pre-ban, 3 of them supply z > 1
    for (int i = 0; i < 8; ++i) {
        const std::string uid = "u" + std::to_string(i);
        auto t = doc("d" + std::to_string(i), uid, kWindow.start + 1);
        tweets.push_back(t);
        scores.push_back(score_of(t.id, i < 3 ? 1.5 : 0.2));
    }
    CorpusStore corpus(tweets);
    std::set<std::string> region;
    for (int i = 0; i < 8; ++i) region.insert("u" + std::to_string(i));
    const double share =
        supplier_share(corpus, scores, kWindow, Period::Pre, region, {}, false);
    CHECK(share == Approx(0.375));
    CHECK_THROWS_AS(supplier_share(corpus, scores, kWindow, Period::Post, region, {}, false),
                    DataError); // nobody active post-ban
}

TEST_CASE("supplier share extremes", "[panel]") {
    std::vector<Tweet> tweets{doc("a", "u1", kWindow.start), doc("b", "u2", kWindow.start)};
    CorpusStore corpus(tweets);
    std::set<std::string> region{"u1", "u2"};
    CHECK(supplier_share(corpus, {score_of("a", 2.0), score_of("b", 2.0)}, kWindow,
                         Period::Pre, region, {}, false) == Approx(1.0));
    CHECK(supplier_share(corpus, {score_of("a", 0.0), score_of("b", 0.0)}, kWindow,
                         Period::Pre, region, {}, false) == Approx(0.0));
}

TEST_CASE("cohort flags are pre-ban measurable", "[panel]") {
    // build corpus with pre and post docs, compute flags, then delete all
    // post-ban docs and recompute: flag sets must be identical
    std::vector<Tweet> tweets;
    std::vector<SlantScore> scores;
    Rng rng(61);
    for (int i = 0; i < 12; ++i) {
        const std::string uid = "u" + std::to_string(i);
        for (int k = 0; k < 6; ++k) {
            const Date day = kWindow.start + static_cast<int>(rng.below(25));
            const bool interact = i < 3 && k == 0 && day < kWindow.ban_date;
            auto t = doc(uid + "_" + std::to_string(k), uid, day, interact,
                         interact ? "banned_handle" : "");
            tweets.push_back(t);
            scores.push_back(score_of(t.id, i == 5 && k == 1 && day < kWindow.ban_date
                                                ? 2.5
                                                : rng.uniform(-0.8, 0.8)));
        }
    }
    std::unordered_map<std::string, UserProfile> profiles;
    for (int i = 0; i < 12; ++i) {
        UserProfile p;
        p.user_id = "u" + std::to_string(i);
        p.followers = 100 + i * 50;
        p.followees = 500;
        p.account_created = make_date(2021, 1, 1);
        profiles[p.user_id] = p;
    }
    CorpusStore full(tweets);
    const auto flags_full =
        compute_cohorts(full, scores, profiles, {"banned_handle"}, kWindow);

    std::vector<Tweet> pre_only;
    std::vector<SlantScore> pre_scores;
    for (size_t i = 0; i < tweets.size(); ++i) {
        if (kWindow.is_post(tweets[i].day)) continue;
        pre_only.push_back(tweets[i]);
        pre_scores.push_back(scores[i]);
    }
    CorpusStore pre(pre_only);
    const auto flags_pre =
        compute_cohorts(pre, pre_scores, profiles, {"banned_handle"}, kWindow);

    for (const auto& [uid, f] : flags_full) {
        if (!flags_pre.count(uid)) continue; // user had no pre-ban docs at all
        const auto& g = flags_pre.at(uid);
        CHECK(f.is_interaction == g.is_interaction);
        CHECK(f.is_supplier == g.is_supplier);
        CHECK(f.slant_group == g.slant_group);
        CHECK(f.activity_group == g.activity_group);
    }
}

TEST_CASE("panel and flags files round-trip", "[panel]") {
    CorpusStore corpus({doc("a", "u1", kWindow.start), doc("b", "u1", kWindow.start, true)});
    const auto cells =
        build_panel(corpus, {score_of("a", 2.0), score_of("b", -0.5)}, kWindow);
    const auto dir = std::filesystem::temp_directory_path();
    const std::string ppath = (dir / "slantlab_test_panel.csv").string();
    write_panel_csv(cells, ppath);
    const auto cells2 = read_panel_csv(ppath);
    REQUIRE(cells2.size() == cells.size());
    CHECK(cells2[0].avg_slant == Approx(cells[0].avg_slant).margin(1e-15));
    CHECK(cells2[0].share_proR_tweets.has_value() == cells[0].share_proR_tweets.has_value());
    CHECK(cells2[0].n_retweets == cells[0].n_retweets);

    std::map<std::string, CohortFlags> flags;
    CohortFlags f;
    f.user_id = "u1";
    f.eu = true;
    f.is_supplier = true;
    f.slant_group = SlantGroup::High;
    f.activity_group = ActivityGroup::Top05;
    flags["u1"] = f;
    const std::string fpath = (dir / "slantlab_test_flags.csv").string();
    write_flags_csv(flags, fpath);
    const auto flags2 = read_flags_csv(fpath);
    REQUIRE(flags2.count("u1") == 1);
    CHECK(flags2.at("u1").eu);
    CHECK(flags2.at("u1").is_supplier);
    CHECK(flags2.at("u1").slant_group == SlantGroup::High);
    CHECK(flags2.at("u1").activity_group == ActivityGroup::Top05);
    std::filesystem::remove(ppath);
    std::filesystem::remove(fpath);
}
