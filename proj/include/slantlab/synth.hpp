#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "slantlab/common.hpp"
#include "slantlab/corpus.hpp"
#include "slantlab/encoder.hpp"
#include "slantlab/estimator.hpp"
#include "slantlab/panel.hpp"
#include "slantlab/slant.hpp"

namespace slantlab {

enum class SynthMode { DirectOutcome, PoleAnchored };

struct SynthConfig {
    int n_users = 60;
    double share_treated = 0.5;
    StudyWindow window{make_date(2022, 2, 19), make_date(2022, 3, 2), make_date(2022, 3, 15)};
    double tweets_per_user_day = 1.0; // Poisson rate, direct-outcome mode
    double true_effect = 0.0;         // delta on treated x post
    double pre_trend = 0.0;           // differential daily slope for treated
    double noise_sd = 0.1;
    bool hetero_noise = false; // scale noise by a user-specific factor
    double user_sd = 0.5;
    double day_sd = 0.3;
    // cohort mix (pole-anchored corpora)
    double interaction_share = 0.25;
    double supplier_share = 0.08;
    double bot_share = 0.06;
    double u_anchor_share = 0.08; // users given exact U-pole documents
    double late_account_share = 0.03;
    int embedding_dim = 32;
    double anchor_cos = 0.2;
    double vec_noise = 0.002; // bounded per-dimension embedding noise
    int pole_tweets_per_day = 4;
    SynthMode mode = SynthMode::DirectOutcome;
    uint64_t master_seed = 20220302;

    void validate() const {
        window.validate();
        if (n_users <= 0) throw ConfigError("synth: n_users must be positive");
        if (share_treated < 0 || share_treated > 1)
            throw ConfigError("synth: share_treated must be in [0,1]");
        if (tweets_per_user_day <= 0) throw ConfigError("synth: rate must be positive");
        if (noise_sd < 0) throw ConfigError("synth: noise sd must be nonnegative");
        if (anchor_cos > 0.99)
            throw DataError("synth: pole anchors too close (cos > 0.99), not distinguishable");
        if (embedding_dim < 2) throw ConfigError("synth: embedding dim must be >= 2");
    }
};

inline std::string synth_user_id(int i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "u%04d", i);
    return buf;
}

// ---------------------------------------------------------------------------
// Direct-outcome panels: cells carry user effect + day effect + treatment
// + noise, with the full data-generating state recorded as ground truth.
// ---------------------------------------------------------------------------

struct PanelTruth {
    double delta = 0.0;
    std::set<std::string> treated_users;
    std::map<std::string, double> user_effect;
    std::vector<double> day_effect; // by day offset from window.start
    std::map<std::pair<std::string, Date>, double> expected_outcome;
};

struct SynthPanel {
    std::vector<PanelCell> cells;
    std::map<std::string, CohortFlags> flags; // eu flag only
    PanelTruth truth;
};

inline SynthPanel generate_panel(const SynthConfig& cfg, uint64_t seed) {
    cfg.validate();
    Rng rng(seed);
    SynthPanel out;
    out.truth.delta = cfg.true_effect;
    const int n_treated = static_cast<int>(std::lround(cfg.share_treated * cfg.n_users));
    const int n_days = cfg.window.n_days();

    out.truth.day_effect.resize(static_cast<size_t>(n_days));
    for (int d = 0; d < n_days; ++d) out.truth.day_effect[static_cast<size_t>(d)] =
        cfg.day_sd * rng.normal();

    for (int i = 0; i < cfg.n_users; ++i) {
        const std::string uid = synth_user_id(i);
        const bool treated = i < n_treated;
        const double alpha = cfg.user_sd * rng.normal();
        const double noise_scale = cfg.hetero_noise ? 0.5 + rng.uniform() : 1.0;
        out.truth.user_effect[uid] = alpha;
        if (treated) out.truth.treated_users.insert(uid);
        CohortFlags f;
        f.user_id = uid;
        f.eu = treated;
        out.flags[uid] = f;

        for (int d = 0; d < n_days; ++d) {
            const int n_docs = rng.poisson(cfg.tweets_per_user_day);
            if (n_docs < 1) continue;
            const Date day = cfg.window.start + d;
            const bool post = cfg.window.is_post(day);
            double mean = alpha + out.truth.day_effect[static_cast<size_t>(d)];
            if (treated && post) mean += cfg.true_effect;
            if (treated) mean += cfg.pre_trend * (day - cfg.window.ban_date);
            PanelCell cell;
            cell.user_id = uid;
            cell.day = day;
            cell.avg_slant = mean + (cfg.noise_sd > 0
                                         ? cfg.noise_sd * noise_scale * rng.normal()
                                         : 0.0);
            cell.n_tweets = n_docs;
            cell.n_retweets = rng.poisson(0.5 * cfg.tweets_per_user_day);
            // clearly-slanted counts follow a user propensity so count and
            // share outcomes have realistic variation
            const double p = std::min(0.9, std::max(0.05, 0.3 + 0.2 * alpha));
            for (int k = 0; k < cell.n_tweets; ++k)
                if (rng.uniform() < p) ++cell.n_proR_tweets;
            for (int k = 0; k < cell.n_retweets; ++k)
                if (rng.uniform() < p) ++cell.n_proR_retweets;
            if (cell.n_tweets > 0)
                cell.share_proR_tweets =
                    static_cast<double>(cell.n_proR_tweets) / cell.n_tweets;
            if (cell.n_retweets > 0)
                cell.share_proR_retweets =
                    static_cast<double>(cell.n_proR_retweets) / cell.n_retweets;
            cell.mean_words = 10.0 + static_cast<double>(rng.below(30));
            cell.mean_mentions = static_cast<double>(rng.below(4));
            cell.mean_hashtags = static_cast<double>(rng.below(3));
            out.truth.expected_outcome[{uid, day}] = mean;
            out.cells.push_back(std::move(cell));
        }
    }
    std::sort(out.cells.begin(), out.cells.end(), [](const PanelCell& a, const PanelCell& b) {
        if (a.user_id != b.user_id) return a.user_id < b.user_id;
        return a.day < b.day;
    });
    return out;
}

// ---------------------------------------------------------------------------
// Pole-anchored corpora. Documents are convex mixtures of two anchor vectors
// plus bounded noise; cohort memberships are injected with wide margins so
// every downstream flag is recoverable exactly:
//   - interaction users get one pre-ban retweet/reply of a banned handle;
//   - suppliers get one pre-ban document pinned at the R anchor, far above
//     every mixture document, while bulk mixture weights stay in narrow
//     bands, so the z > 1 rule selects exactly the pinned documents;
//   - bots get activity strictly above everyone else and reputation strictly
//     below, while regular users' reputation is monotone in their activity
//     rank, so the two percentile rules intersect only on designated bots;
//   - high-slant interaction users sit in a weight band separated from the
//     moderate band by a gap much larger than any noise.
// Suppliers, bots and U-anchor users are drawn from disjoint user slices so
// the constructions cannot interfere.
// ---------------------------------------------------------------------------

struct CorpusTruth {
    std::set<std::string> treated_users;
    std::set<std::string> interaction_users;
    std::set<std::string> suppliers;
    std::set<std::string> bots;
    std::set<std::string> u_anchor_users;
    std::set<std::string> late_accounts;
    std::set<std::string> slant_high;     // within interaction users
    std::set<std::string> slant_moderate;
    std::set<std::string> activity_high; // within suppliers (includes top05)
    std::set<std::string> activity_moderate;
    std::set<std::string> activity_top05;
    Vec anchor_r, anchor_u;
};

struct SynthCorpus {
    CorpusStore corpus;
    std::unordered_map<std::string, UserProfile> profiles;
    PoleCorpus pole_r{"R", {}};
    PoleCorpus pole_u{"U", {}};
    PrecomputedTable embeddings;
    std::set<std::string> banned_handles;
    CorpusTruth truth;
};

inline Vec mix_anchors(const Vec& anchor_r, const Vec& anchor_u, double weight_r, Rng& rng,
                       double noise) {
    Vec v(anchor_r.size());
    for (size_t d = 0; d < v.size(); ++d) {
        v[d] = weight_r * anchor_r[d] + (1.0 - weight_r) * anchor_u[d];
        if (noise > 0) v[d] += rng.uniform(-noise, noise);
    }
    return v;
}

namespace detail {

inline std::pair<Vec, Vec> make_anchors(int dim, double cos_target, Rng& rng) {
    Vec a(static_cast<size_t>(dim)), w(static_cast<size_t>(dim));
    for (auto& x : a) x = rng.normal();
    for (auto& x : w) x = rng.normal();
    double na = l2_norm(a);
    for (auto& x : a) x /= na;
    // orthogonalize w against a, then combine
    double dot = 0;
    for (size_t d = 0; d < a.size(); ++d) dot += a[d] * w[d];
    for (size_t d = 0; d < a.size(); ++d) w[d] -= dot * a[d];
    double nw = l2_norm(w);
    for (auto& x : w) x /= nw;
    const double s = std::sqrt(1.0 - cos_target * cos_target);
    Vec b(a.size());
    for (size_t d = 0; d < a.size(); ++d) b[d] = cos_target * a[d] + s * w[d];
    return {b, a}; // (R anchor, U anchor)
}

// nearest-rank split over designed per-user statistics; mirrors the
// production percentile rule but runs on generator-side bookkeeping
inline std::set<std::string> top_slice(const std::map<std::string, double>& stats,
                                       double cutoff) {
    std::vector<double> values;
    for (const auto& [_, v] : stats) values.push_back(v);
    std::sort(values.begin(), values.end());
    const size_t rank =
        static_cast<size_t>(std::ceil(cutoff * static_cast<double>(values.size())));
    const double q = values[std::max<size_t>(rank, 1) - 1];
    std::set<std::string> above;
    for (const auto& [uid, v] : stats)
        if (v > q) above.insert(uid);
    return above;
}

} // namespace detail

inline SynthCorpus generate_corpus(const SynthConfig& cfg, uint64_t seed) {
    cfg.validate();
    if (cfg.mode != SynthMode::PoleAnchored)
        throw ConfigError("generate_corpus requires pole-anchored mode");
    Rng rng(seed);
    SynthCorpus out;
    auto [anchor_r, anchor_u] = detail::make_anchors(cfg.embedding_dim, cfg.anchor_cos, rng);
    out.truth.anchor_r = anchor_r;
    out.truth.anchor_u = anchor_u;
    out.banned_handles = {"state_outlet_a", "state_outlet_b"};

    const StudyWindow& w = cfg.window;
    const int n_days = w.n_days();
    const int n_pre = w.ban_date - w.start;

    // pole corpora cover [start-7, end] so every rolling window is populated
    for (Date d = w.start - 7; d <= w.end; d += 1) {
        for (int k = 0; k < cfg.pole_tweets_per_day; ++k) {
            out.pole_r.tweets.push_back({d, mix_anchors(anchor_r, anchor_u, 1.0, rng, cfg.vec_noise)});
            out.pole_u.tweets.push_back({d, mix_anchors(anchor_r, anchor_u, 0.0, rng, cfg.vec_noise)});
        }
    }

    const int n = cfg.n_users;
    const int n_treated = static_cast<int>(std::lround(cfg.share_treated * n));

    // cohort designation along a seeded shuffle, so cohorts are independent
    // of the treated/control split (which follows the raw user index)
    std::vector<int> order(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
    for (int i = n - 1; i > 0; --i)
        std::swap(order[static_cast<size_t>(i)],
                  order[static_cast<size_t>(rng.below(static_cast<uint64_t>(i + 1)))]);

    const int n_int = static_cast<int>(std::lround(cfg.interaction_share * n));
    const int n_sup = static_cast<int>(std::lround(cfg.supplier_share * n));
    const int n_bot = static_cast<int>(std::lround(cfg.bot_share * n));
    const int n_ua = static_cast<int>(std::lround(cfg.u_anchor_share * n));
    if (n_int + n_sup + n_bot + n_ua > n)
        throw ConfigError("synth: cohort shares exceed the user count");

    std::vector<int> role(static_cast<size_t>(n), 0); // 0 regular
    enum { kRegular = 0, kInteraction, kSupplier, kBot, kUAnchor };
    int pos = 0;
    for (int k = 0; k < n_int; ++k) role[static_cast<size_t>(order[static_cast<size_t>(pos++)])] = kInteraction;
    for (int k = 0; k < n_sup; ++k) role[static_cast<size_t>(order[static_cast<size_t>(pos++)])] = kSupplier;
    for (int k = 0; k < n_bot; ++k) role[static_cast<size_t>(order[static_cast<size_t>(pos++)])] = kBot;
    for (int k = 0; k < n_ua; ++k) role[static_cast<size_t>(order[static_cast<size_t>(pos++)])] = kUAnchor;

    // High-slant slice of the interaction cohort: the top (1 - 0.75) of the
    // nearest-rank split. Designated along the shuffle order so the slice is
    // spread across the treated/control divide.
    std::vector<int> interaction_ids;
    for (int pos2 = 0; pos2 < n; ++pos2) {
        const int i = order[static_cast<size_t>(pos2)];
        if (role[static_cast<size_t>(i)] == kInteraction) interaction_ids.push_back(i);
    }
    const int m = static_cast<int>(interaction_ids.size());
    const int n_high =
        m >= 2 ? m - static_cast<int>(std::ceil(0.75 * static_cast<double>(m))) : 0;
    std::set<int> high_slant;
    for (int k = 0; k < n_high; ++k)
        high_slant.insert(interaction_ids[static_cast<size_t>(k)]);

    std::vector<Tweet> tweets;
    std::map<std::string, double> supplier_pre_counts;
    int supplier_rank = 0, bot_rank = 0;
    std::vector<std::pair<double, int>> activity_rank; // (total docs, user)

    const int n_post = w.end - w.ban_date + 1;
    for (int i = 0; i < n; ++i) {
        const std::string uid = synth_user_id(i);
        const bool treated = i < n_treated;
        const int r = role[static_cast<size_t>(i)];
        if (treated) out.truth.treated_users.insert(uid);

        // Mixture-weight bands. With anchor cos 0.2 the moderate band maps
        // to raw ratios near -0.11, the high band near -0.03, the pinned R
        // anchor to +0.667 and the pinned U anchor to -0.4. The pinned
        // documents dominate the corpus standard deviation, which places the
        // z = 1 threshold in the empty region between the high band and the
        // R anchor with margins far above the bounded noise.
        double w_lo = 0.39, w_hi = 0.41;
        if (r == kInteraction && high_slant.count(i)) {
            w_lo = 0.46;
            w_hi = 0.48;
        }

        int total_docs = 4 + (i % 3);
        int pre_docs_forced = -1;
        if (r == kSupplier) {
            // distinct pre-ban counts make the activity percentile splits
            // tie-free
            pre_docs_forced = 5 + supplier_rank;
            total_docs = pre_docs_forced + 5;
            ++supplier_rank;
        } else if (r == kBot) {
            total_docs = 40 + 2 * bot_rank;
            ++bot_rank;
        } else if (r == kInteraction) {
            total_docs = 8 + (i % 3); // denser, so event studies on this
                                      // cohort cover most days
        }

        auto add_doc = [&](int k, Date day, double weight, bool exact_anchor_r,
                           bool exact_anchor_u, bool banned_interaction) {
            Tweet t;
            char idbuf[24];
            std::snprintf(idbuf, sizeof(idbuf), "t%04d_%03d", i, k);
            t.id = idbuf;
            t.user_id = uid;
            t.day = day;
            t.timestamp = static_cast<int64_t>(day.days) * 86400 + 43200 +
                          ((i * 97 + k * 13) % 3600);
            t.lang = "en";
            t.country = treated ? "DE" : "CH";
            if (banned_interaction) {
                // alternate retweet / reply injection
                if (i % 2 == 0) {
                    t.is_retweet = true;
                    t.retweeted_handle = "state_outlet_a";
                } else {
                    t.replied_handle = "state_outlet_b";
                }
            } else if (k % 3 == 1) {
                t.is_retweet = true;
                t.retweeted_handle = "user" + std::to_string((i + 7) % n);
            } else if (k % 5 == 2) {
                t.replied_handle = "user" + std::to_string((i + 3) % n);
            }
            t.text = "synthetic doc " + uid + " " + std::to_string(k);
            t.n_words = 8 + static_cast<int>(rng.below(24));
            t.n_mentions = static_cast<int>(rng.below(4));
            t.n_hashtags = static_cast<int>(rng.below(3));
            double weight_eff = weight + rng.uniform(-0.005, 0.005);
            if (treated && w.is_post(day) && cfg.true_effect != 0.0)
                weight_eff = std::max(0.02, weight_eff + cfg.true_effect);
            Vec v;
            if (exact_anchor_r) v = anchor_r;
            else if (exact_anchor_u) v = anchor_u;
            else v = mix_anchors(anchor_r, anchor_u, weight_eff, rng, cfg.vec_noise);
            out.embeddings.insert(t.id, std::move(v));
            tweets.push_back(std::move(t));
        };

        int k = 0;
        // every user posts at least one pre-ban document
        const int forced_pre = pre_docs_forced > 0 ? pre_docs_forced : 1;
        for (int p = 0; p < forced_pre; ++p, ++k)
            add_doc(k, w.start + ((i + p * 3) % n_pre), (w_lo + w_hi) / 2, false, false,
                    false);
        int pre_count = forced_pre;
        if (r == kInteraction) {
            add_doc(k++, w.start + (i % n_pre), (w_lo + w_hi) / 2, false, false, true);
            ++pre_count;
        }
        if (r == kSupplier) {
            for (int a = 0; a < 3; ++a)
                add_doc(k++, w.start + ((i + a) % n_pre), 1.0, true, false, false);
            pre_count += 3;
        }
        if (r == kUAnchor) {
            for (int a = 0; a < 2; ++a)
                add_doc(k++, w.start + ((i + a) % n_pre), 0.0, false, true, false);
            pre_count += 2;
        }
        // Remaining documents: suppliers post only, so their pre-ban counts
        // stay exactly as designed; bots round-robin over every day, so
        // their pre-ban activity dominates deterministically; everyone else
        // draws days at random.
        for (; k < total_docs; ++k) {
            Date day;
            if (r == kSupplier) day = w.ban_date + ((i + k) % n_post);
            else if (r == kBot) day = w.start + (k % n_days);
            else day = w.start + static_cast<int>(rng.below(static_cast<uint64_t>(n_days)));
            add_doc(k, day, rng.uniform(w_lo, w_hi), false, false, false);
        }

        activity_rank.push_back({static_cast<double>(k), i});
        if (r == kSupplier) supplier_pre_counts[uid] = static_cast<double>(pre_count);

        if (r == kInteraction) {
            out.truth.interaction_users.insert(uid);
            if (high_slant.count(i)) out.truth.slant_high.insert(uid);
            else out.truth.slant_moderate.insert(uid);
        }
        if (r == kSupplier) out.truth.suppliers.insert(uid);
        if (r == kBot) out.truth.bots.insert(uid);
        if (r == kUAnchor) out.truth.u_anchor_users.insert(uid);
    }

    // profiles: bots get reputation in [0.01, 0.06]; everyone else gets
    // reputation monotone in activity rank inside [0.30, 0.85]
    std::sort(activity_rank.begin(), activity_rank.end());
    std::map<int, int> nonbot_rank;
    int rank_counter = 0;
    for (const auto& [_, i] : activity_rank)
        if (role[static_cast<size_t>(i)] != kBot) nonbot_rank[i] = rank_counter++;
    const int n_nonbot = rank_counter;
    int late_budget = static_cast<int>(std::lround(cfg.late_account_share * n));
    for (int i = 0; i < n; ++i) {
        const std::string uid = synth_user_id(i);
        UserProfile p;
        p.user_id = uid;
        p.country = i < n_treated ? "DE" : "CH";
        p.in_treated_region = i < n_treated;
        double rep;
        if (role[static_cast<size_t>(i)] == kBot) {
            rep = 0.01 + 0.05 * (bot_rank > 0 ? static_cast<double>(i % bot_rank) /
                                                    std::max(1, bot_rank)
                                              : 0.0);
        } else {
            rep = n_nonbot > 1 ? 0.30 + 0.55 * static_cast<double>(nonbot_rank[i]) /
                                            static_cast<double>(n_nonbot - 1)
                               : 0.5;
        }
        p.followers = static_cast<int64_t>(std::lround(rep * 1000.0));
        p.followees = 1000 - p.followers;
        if (late_budget > 0 && role[static_cast<size_t>(i)] == kRegular) {
            p.account_created = w.ban_date + 1;
            out.truth.late_accounts.insert(uid);
            --late_budget;
        } else {
            p.account_created = make_date(2021, 1, 15);
        }
        out.profiles[uid] = std::move(p);
    }

    // designed activity splits within the supplier cohort
    if (supplier_pre_counts.size() >= 2) {
        const auto high = detail::top_slice(supplier_pre_counts, 0.75);
        for (const auto& [uid, _] : supplier_pre_counts) {
            if (high.count(uid)) out.truth.activity_high.insert(uid);
            else out.truth.activity_moderate.insert(uid);
        }
        out.truth.activity_top05 = detail::top_slice(supplier_pre_counts, 0.995);
    }

    out.corpus = CorpusStore(std::move(tweets));

    // activity tallies on the finished corpus
    std::map<std::string, bool> region_map{{"DE", true}, {"CH", false}};
    auto derived = derive_user_profiles(out.corpus, region_map, &out.profiles);
    for (auto& [uid, p] : derived) {
        auto it = out.profiles.find(uid);
        if (it != out.profiles.end()) {
            it->second.n_tweets = p.n_tweets;
            it->second.n_retweets = p.n_retweets;
            it->second.n_replies = p.n_replies;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Monte Carlo harness over the direct-outcome DGP.
// ---------------------------------------------------------------------------

enum class McEstimator { Did, Weekly, Imputation };

struct MonteCarloSpec {
    SynthConfig dgp;
    McEstimator estimator = McEstimator::Did;
    Outcome outcome = Outcome::AvgSlant;
    int reps = 200;
};

struct MonteCarloResult {
    double mean_estimate = 0.0;
    double bias = 0.0;
    double mc_se = 0.0; // MC standard error of the mean estimate
    double sd_estimates = 0.0;
    double coverage_95 = 0.0;
    double mean_runtime_ms = 0.0;
    int n_ok = 0;
    int n_failed = 0;
};

// Replications run under derived per-rep seeds in preallocated slots, so the
// aggregate is identical for any worker count.
inline MonteCarloResult monte_carlo(const MonteCarloSpec& spec, uint64_t master_seed,
                                    int threads = 1) {
    if (spec.reps < 50) throw ConfigError("monte carlo: need at least 50 reps");
    const size_t reps = static_cast<size_t>(spec.reps);
    std::vector<double> estimates(reps), ses(reps), runtimes(reps);
    std::vector<char> ok(reps, 0);
    parallel_for(reps, threads, [&](size_t rep) {
        const uint64_t seed = derive_seed(master_seed, static_cast<uint64_t>(rep));
        const auto t0 = std::chrono::steady_clock::now();
        try {
            auto synth = generate_panel(spec.dgp, seed);
            FitOptions opts;
            opts.window = spec.dgp.window;
            Dataset ds =
                make_dataset(synth.cells, synth.flags, spec.dgp.window, spec.outcome, false);
            if (spec.estimator == McEstimator::Did) {
                const FitResult fit = did_estimate(ds, opts);
                estimates[rep] = fit.coef(kDidTerm);
                ses[rep] = fit.se(kDidTerm);
            } else if (spec.estimator == McEstimator::Weekly) {
                const FitResult fit = weekly_interactions(ds, opts);
                estimates[rep] = fit.coef(kWeek1Term);
                ses[rep] = fit.se(kWeek1Term);
            } else {
                const ImputationResult imp = imputation_att(ds, opts, 199, seed);
                estimates[rep] = imp.att;
                ses[rep] = imp.se;
            }
            ok[rep] = 1;
        } catch (const Error&) {
            ok[rep] = 0;
        }
        const auto t1 = std::chrono::steady_clock::now();
        runtimes[rep] =
            std::chrono::duration_cast<std::chrono::microseconds>(t1 - t0).count() / 1000.0;
    });

    MonteCarloResult result;
    std::vector<double> kept;
    int covered = 0;
    for (size_t rep = 0; rep < reps; ++rep) {
        if (!ok[rep]) {
            ++result.n_failed;
            continue;
        }
        kept.push_back(estimates[rep]);
        if (std::abs(estimates[rep] - spec.dgp.true_effect) <= 1.96 * ses[rep]) ++covered;
    }
    result.n_ok = static_cast<int>(kept.size());
    if (!kept.empty()) {
        result.mean_estimate = mean_of(kept);
        result.bias = result.mean_estimate - spec.dgp.true_effect;
        result.sd_estimates = kept.size() >= 2 ? sample_sd(kept) : 0.0;
        result.mc_se = result.sd_estimates / std::sqrt(static_cast<double>(kept.size()));
        result.coverage_95 = static_cast<double>(covered) / static_cast<double>(kept.size());
    }
    result.mean_runtime_ms = mean_of(runtimes);
    return result;
}

} // namespace slantlab
