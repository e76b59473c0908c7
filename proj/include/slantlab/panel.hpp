#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "slantlab/common.hpp"
#include "slantlab/corpus.hpp"
#include "slantlab/dates.hpp"
#include "slantlab/slant.hpp"

namespace slantlab {

// start < ban_date <= end; the ban day itself is the first treated day.
struct StudyWindow {
    Date start;
    Date ban_date;
    Date end;

    void validate() const {
        if (!(start < ban_date && ban_date <= end))
            throw ConfigError("study window: need start < ban_date <= end");
    }
    bool contains(Date d) const { return d >= start && d <= end; }
    bool is_post(Date d) const { return d >= ban_date; }
    int n_days() const { return end - start + 1; }
    int n_post_days() const { return end - ban_date + 1; }
};

struct PanelCell {
    std::string user_id;
    Date day;
    double avg_slant = 0.0;
    int n_tweets = 0;   // original documents (replies included)
    int n_retweets = 0;
    int n_proR_tweets = 0;
    int n_proR_retweets = 0;
    std::optional<double> share_proR_tweets;   // absent when n_tweets == 0
    std::optional<double> share_proR_retweets; // absent when n_retweets == 0
    double mean_words = 0.0;
    double mean_mentions = 0.0;
    double mean_hashtags = 0.0;

    int n_docs() const { return n_tweets + n_retweets; }
};

enum class ProRThreshold { OneSd, Zero };

// One cell per (user, day) with at least one scored document. Aggregates use
// fixed-order pairwise reductions so the panel is byte-stable across runs.
inline std::vector<PanelCell> build_panel(const CorpusStore& corpus,
                                          const std::vector<SlantScore>& scores,
                                          const StudyWindow& window,
                                          ProRThreshold threshold = ProRThreshold::OneSd) {
    window.validate();
    struct DocEntry {
        const Tweet* tweet;
        const SlantScore* score;
    };
    std::map<std::pair<std::string, Date>, std::vector<DocEntry>> groups;
    std::unordered_set<std::string> seen_ids;
    for (const auto& s : scores) {
        const Tweet* t = corpus.find(s.tweet_id);
        if (!t)
            throw DataError("panel: score for unknown document '" + s.tweet_id + "'");
        if (!seen_ids.insert(s.tweet_id).second)
            throw DataError("panel: document '" + s.tweet_id + "' scored more than once");
        if (!window.contains(t->day))
            throw DataError("panel: document '" + s.tweet_id + "' outside study window");
        groups[{t->user_id, t->day}].push_back({t, &s});
    }

    std::vector<PanelCell> cells;
    cells.reserve(groups.size());
    for (auto& [key, docs] : groups) {
        PanelCell cell;
        cell.user_id = key.first;
        cell.day = key.second;
        std::vector<double> zs(docs.size()), words(docs.size()), mentions(docs.size()),
            hashtags(docs.size());
        for (size_t i = 0; i < docs.size(); ++i) {
            const auto& [t, s] = docs[i];
            zs[i] = s->z;
            words[i] = t->n_words;
            mentions[i] = t->n_mentions;
            hashtags[i] = t->n_hashtags;
            const bool pro_r = threshold == ProRThreshold::OneSd ? s->flag_1sd : s->flag_0;
            if (t->is_retweet) {
                ++cell.n_retweets;
                if (pro_r) ++cell.n_proR_retweets;
            } else {
                ++cell.n_tweets;
                if (pro_r) ++cell.n_proR_tweets;
            }
        }
        cell.avg_slant = mean_of(zs);
        cell.mean_words = mean_of(words);
        cell.mean_mentions = mean_of(mentions);
        cell.mean_hashtags = mean_of(hashtags);
        if (cell.n_tweets > 0)
            cell.share_proR_tweets = static_cast<double>(cell.n_proR_tweets) / cell.n_tweets;
        if (cell.n_retweets > 0)
            cell.share_proR_retweets =
                static_cast<double>(cell.n_proR_retweets) / cell.n_retweets;
        cells.push_back(std::move(cell));
    }
    return cells; // std::map iteration keeps (user, day) order
}

// Users with at least one pre-ban retweet of or reply to a banned handle.
// Handle matching is case-insensitive exact.
inline std::set<std::string> flag_interaction_users(const CorpusStore& corpus,
                                                    const std::set<std::string>& banned_handles,
                                                    const StudyWindow& window) {
    if (banned_handles.empty())
        throw ConfigError("interaction flags: banned-handle set is empty");
    std::set<std::string> folded;
    for (const auto& h : banned_handles) folded.insert(fold_case(h));
    std::set<std::string> users;
    for (const auto& t : corpus.tweets()) {
        if (window.is_post(t.day) || t.day < window.start) continue;
        const bool hit =
            (!t.retweeted_handle.empty() && folded.count(fold_case(t.retweeted_handle))) ||
            (!t.replied_handle.empty() && folded.count(fold_case(t.replied_handle)));
        if (hit) users.insert(t.user_id);
    }
    return users;
}

// Users with at least one pre-ban document whose z exceeds the threshold.
inline std::set<std::string> flag_suppliers(const CorpusStore& corpus,
                                            const std::vector<SlantScore>& scores,
                                            const StudyWindow& window, double threshold = 1.0) {
    std::set<std::string> users;
    for (const auto& s : scores) {
        if (s.z <= threshold) continue;
        const Tweet* t = corpus.find(s.tweet_id);
        if (!t) throw DataError("suppliers: score for unknown document '" + s.tweet_id + "'");
        if (t->day >= window.start && !window.is_post(t->day)) users.insert(t->user_id);
    }
    return users;
}

// Nearest-rank quantile: value at rank ceil(q * n) of the ascending sort.
inline double nearest_rank_quantile(std::vector<double> values, double q) {
    if (values.empty()) throw DomainError("quantile of empty set");
    if (q <= 0.0 || q >= 1.0) throw ConfigError("quantile cutoff must be in (0,1)");
    std::sort(values.begin(), values.end());
    const size_t rank = static_cast<size_t>(
        std::ceil(q * static_cast<double>(values.size())));
    return values[std::max<size_t>(rank, 1) - 1];
}

// Mean documents per day over [from, to], per user.
inline std::map<std::string, double> activity_per_day(const CorpusStore& corpus, Date from,
                                                      Date to) {
    if (from > to) throw ConfigError("activity: inverted date range");
    std::map<std::string, double> activity;
    for (const auto& t : corpus.tweets()) {
        if (t.day < from || t.day > to) continue;
        activity[t.user_id] += 1.0;
    }
    const double span = to - from + 1;
    for (auto& [_, a] : activity) a /= span;
    return activity;
}

inline std::map<std::string, double> activity_per_day(const CorpusStore& corpus,
                                                      const StudyWindow& window) {
    return activity_per_day(corpus, window.start, window.end);
}

// Plausible bots: strictly above the activity percentile AND strictly below
// the reputation percentile. Users with undefined reputation never qualify.
inline std::set<std::string> flag_bots(const std::unordered_map<std::string, UserProfile>& profiles,
                                       const std::map<std::string, double>& activity,
                                       double act_pct = 0.75, double rep_pct = 0.25) {
    if (profiles.size() < 4)
        throw DataError("bot flags: need at least 4 users for percentile cutoffs");
    std::vector<double> acts, reps;
    acts.reserve(profiles.size());
    for (const auto& [uid, p] : profiles) {
        auto it = activity.find(uid);
        acts.push_back(it == activity.end() ? 0.0 : it->second);
        if (auto r = p.reputation()) reps.push_back(*r);
    }
    if (reps.size() < 4)
        throw DataError("bot flags: need at least 4 users with defined reputation");
    const double act_cut = nearest_rank_quantile(acts, act_pct);
    const double rep_cut = nearest_rank_quantile(reps, rep_pct);
    std::set<std::string> bots;
    for (const auto& [uid, p] : profiles) {
        const auto r = p.reputation();
        if (!r) continue;
        auto it = activity.find(uid);
        const double a = it == activity.end() ? 0.0 : it->second;
        if (a > act_cut && *r < rep_cut) bots.insert(uid);
    }
    return bots;
}

struct PercentileSplit {
    std::set<std::string> below; // stat <= cutoff value (ties fall below)
    std::set<std::string> above;
    double cutoff_value = 0.0;
    bool degenerate = false; // all stats equal: above is empty
};

inline PercentileSplit percentile_split(const std::map<std::string, double>& user_stats,
                                        double cutoff) {
    if (user_stats.size() < 2) throw DataError("percentile split: need at least 2 users");
    std::vector<double> values;
    values.reserve(user_stats.size());
    for (const auto& [_, v] : user_stats) values.push_back(v);
    PercentileSplit split;
    split.cutoff_value = nearest_rank_quantile(values, cutoff);
    for (const auto& [uid, v] : user_stats) {
        if (v > split.cutoff_value) split.above.insert(uid);
        else split.below.insert(uid);
    }
    if (split.above.empty()) split.degenerate = true;
    return split;
}

struct BalanceRow {
    std::string variable;
    double mean_treated = 0.0;
    double mean_control = 0.0;
    double diff = 0.0;
    double t_stat = 0.0;
    size_t n_treated = 0;
    size_t n_control = 0;
};

using CellValueFn = std::function<std::optional<double>(const PanelCell&)>;

inline CellValueFn panel_column(const std::string& name) {
    if (name == "avg_slant")
        return [](const PanelCell& c) -> std::optional<double> { return c.avg_slant; };
    if (name == "n_tweets")
        return [](const PanelCell& c) -> std::optional<double> { return c.n_tweets; };
    if (name == "n_retweets")
        return [](const PanelCell& c) -> std::optional<double> { return c.n_retweets; };
    if (name == "n_proR_tweets")
        return [](const PanelCell& c) -> std::optional<double> { return c.n_proR_tweets; };
    if (name == "n_proR_retweets")
        return [](const PanelCell& c) -> std::optional<double> { return c.n_proR_retweets; };
    if (name == "share_proR_tweets")
        return [](const PanelCell& c) { return c.share_proR_tweets; };
    if (name == "share_proR_retweets")
        return [](const PanelCell& c) { return c.share_proR_retweets; };
    if (name == "mean_words")
        return [](const PanelCell& c) -> std::optional<double> { return c.mean_words; };
    if (name == "mean_mentions")
        return [](const PanelCell& c) -> std::optional<double> { return c.mean_mentions; };
    if (name == "mean_hashtags")
        return [](const PanelCell& c) -> std::optional<double> { return c.mean_hashtags; };
    throw ConfigError("unknown panel column '" + name + "'");
}

// Welch two-sample t statistics on pre-ban user-level means.
inline std::vector<BalanceRow> balance_table(const std::vector<PanelCell>& panel,
                                             const std::set<std::string>& treated_users,
                                             const StudyWindow& window,
                                             const std::vector<std::string>& vars) {
    std::vector<BalanceRow> rows;
    for (const auto& var : vars) {
        auto value = panel_column(var);
        // user-level means over pre-ban cells
        std::map<std::string, std::pair<double, size_t>> acc;
        for (const auto& cell : panel) {
            if (window.is_post(cell.day)) continue;
            auto v = value(cell);
            if (!v) continue;
            auto& [sum, n] = acc[cell.user_id];
            sum += *v;
            ++n;
        }
        std::vector<double> treated, control;
        for (const auto& [uid, sn] : acc) {
            const double m = sn.first / static_cast<double>(sn.second);
            if (treated_users.count(uid)) treated.push_back(m);
            else control.push_back(m);
        }
        if (treated.empty()) throw DataError("balance: treated group empty for '" + var + "'");
        if (control.empty()) throw DataError("balance: control group empty for '" + var + "'");
        if (treated.size() < 2)
            throw DataError("balance: treated group has a single user, variance undefined");
        if (control.size() < 2)
            throw DataError("balance: control group has a single user, variance undefined");
        BalanceRow row;
        row.variable = var;
        row.n_treated = treated.size();
        row.n_control = control.size();
        row.mean_treated = mean_of(treated);
        row.mean_control = mean_of(control);
        row.diff = row.mean_treated - row.mean_control;
        const double vt = sample_sd(treated) * sample_sd(treated);
        const double vc = sample_sd(control) * sample_sd(control);
        const double denom =
            std::sqrt(vt / static_cast<double>(treated.size()) +
                      vc / static_cast<double>(control.size()));
        row.t_stat = denom > 0.0 ? row.diff / denom : 0.0;
        rows.push_back(std::move(row));
    }
    return rows;
}

enum class Period { Pre, Post };

// Share of active users in (period, region) that supplied pro-R content
// within that same period. With bots_only the numerator is restricted to
// plausible bots; the denominator stays all active users.
inline double supplier_share(const CorpusStore& corpus, const std::vector<SlantScore>& scores,
                             const StudyWindow& window, Period period,
                             const std::set<std::string>& region_users,
                             const std::set<std::string>& bots, bool bots_only,
                             double threshold = 1.0) {
    std::set<std::string> active, suppliers;
    auto in_period = [&](Date d) {
        return window.contains(d) && (period == Period::Post) == window.is_post(d);
    };
    for (const auto& t : corpus.tweets()) {
        if (!in_period(t.day) || !region_users.count(t.user_id)) continue;
        active.insert(t.user_id);
    }
    for (const auto& s : scores) {
        const Tweet* t = corpus.find(s.tweet_id);
        if (!t) throw DataError("supplier share: score for unknown document");
        if (!in_period(t->day) || !region_users.count(t->user_id)) continue;
        if (s.z > threshold) suppliers.insert(t->user_id);
    }
    if (active.empty()) throw DataError("supplier share: no active users in period/region");
    size_t count = 0;
    for (const auto& uid : suppliers) {
        if (bots_only && !bots.count(uid)) continue;
        ++count;
    }
    return static_cast<double>(count) / static_cast<double>(active.size());
}

enum class SlantGroup { None, Moderate, High };
enum class ActivityGroup { None, Moderate, High, Top05 };

struct CohortFlags {
    std::string user_id;
    bool eu = false;
    bool is_interaction = false;
    bool is_supplier = false;
    bool is_bot = false;
    bool created_after_ban = false;
    SlantGroup slant_group = SlantGroup::None;       // within interaction users
    ActivityGroup activity_group = ActivityGroup::None; // within suppliers
};

inline std::string to_string(SlantGroup g) {
    switch (g) {
        case SlantGroup::Moderate: return "moderate";
        case SlantGroup::High: return "high";
        default: return "";
    }
}
inline std::string to_string(ActivityGroup g) {
    switch (g) {
        case ActivityGroup::Moderate: return "moderate";
        case ActivityGroup::High: return "high";
        case ActivityGroup::Top05: return "top05";
        default: return "";
    }
}

struct CohortOptions {
    double supplier_threshold = 1.0;
    double bot_activity_pct = 0.75;
    double bot_reputation_pct = 0.25;
    double slant_split = 0.75;    // top 25% = high
    double activity_split = 0.75; // top 25% = high
    double top_share = 0.995;     // top 0.5% of suppliers by activity
};

// All cohort flags are pre-ban measurable: every input below is computed
// from pre-ban documents only.
inline std::map<std::string, CohortFlags>
compute_cohorts(const CorpusStore& corpus, const std::vector<SlantScore>& scores,
                const std::unordered_map<std::string, UserProfile>& profiles,
                const std::set<std::string>& banned_handles, const StudyWindow& window,
                const CohortOptions& opts = {}) {
    std::map<std::string, CohortFlags> flags;
    for (const auto& t : corpus.tweets()) {
        auto& f = flags[t.user_id];
        f.user_id = t.user_id;
    }
    for (auto& [uid, f] : flags) {
        auto it = profiles.find(uid);
        if (it != profiles.end()) {
            f.eu = it->second.in_treated_region;
            if (it->second.account_created)
                f.created_after_ban = *it->second.account_created >= window.ban_date;
        }
    }

    const auto interaction = flag_interaction_users(corpus, banned_handles, window);
    for (const auto& uid : interaction) flags[uid].is_interaction = true;

    const auto suppliers = flag_suppliers(corpus, scores, window, opts.supplier_threshold);
    for (const auto& uid : suppliers) flags[uid].is_supplier = true;

    // bot classification is undefined below 4 users (percentile degeneracy);
    // activity is measured over the pre-ban span so every flag stays
    // pre-ban measurable
    const auto activity = activity_per_day(corpus, window.start, window.ban_date - 1);
    size_t with_reputation = 0;
    for (const auto& [_, p] : profiles)
        if (p.reputation()) ++with_reputation;
    if (profiles.size() >= 4 && with_reputation >= 4) {
        const auto bots =
            flag_bots(profiles, activity, opts.bot_activity_pct, opts.bot_reputation_pct);
        for (const auto& uid : bots)
            if (flags.count(uid)) flags[uid].is_bot = true;
    }

    // pre-ban mean z per user, for the interaction-user slant split
    std::map<std::string, std::pair<double, size_t>> pre_z;
    std::map<std::string, double> pre_docs;
    for (const auto& s : scores) {
        const Tweet* t = corpus.find(s.tweet_id);
        if (!t || window.is_post(t->day) || t->day < window.start) continue;
        auto& [sum, n] = pre_z[t->user_id];
        sum += s.z;
        ++n;
        pre_docs[t->user_id] += 1.0;
    }

    if (interaction.size() >= 2) {
        std::map<std::string, double> stats;
        for (const auto& uid : interaction) {
            auto it = pre_z.find(uid);
            if (it != pre_z.end())
                stats[uid] = it->second.first / static_cast<double>(it->second.second);
        }
        if (stats.size() >= 2) {
            const auto split = percentile_split(stats, opts.slant_split);
            for (const auto& uid : split.below) flags[uid].slant_group = SlantGroup::Moderate;
            for (const auto& uid : split.above) flags[uid].slant_group = SlantGroup::High;
        }
    }

    if (suppliers.size() >= 2) {
        std::map<std::string, double> stats;
        for (const auto& uid : suppliers) {
            auto it = pre_docs.find(uid);
            stats[uid] = it == pre_docs.end() ? 0.0 : it->second;
        }
        const auto split = percentile_split(stats, opts.activity_split);
        for (const auto& uid : split.below) flags[uid].activity_group = ActivityGroup::Moderate;
        for (const auto& uid : split.above) flags[uid].activity_group = ActivityGroup::High;
        const auto top = percentile_split(stats, opts.top_share);
        for (const auto& uid : top.above) flags[uid].activity_group = ActivityGroup::Top05;
    }
    return flags;
}

inline void write_panel_csv(const std::vector<PanelCell>& cells, const std::string& path) {
    csv::Writer w(path);
    w.row({"user_id", "day", "avg_slant", "n_tweets", "n_retweets", "n_proR_tweets",
           "n_proR_retweets", "share_proR_tweets", "share_proR_retweets", "mean_words",
           "mean_mentions", "mean_hashtags"});
    for (const auto& c : cells) {
        w.row({c.user_id, to_string(c.day), csv::format_double(c.avg_slant),
               std::to_string(c.n_tweets), std::to_string(c.n_retweets),
               std::to_string(c.n_proR_tweets), std::to_string(c.n_proR_retweets),
               c.share_proR_tweets ? csv::format_double(*c.share_proR_tweets) : "",
               c.share_proR_retweets ? csv::format_double(*c.share_proR_retweets) : "",
               csv::format_double(c.mean_words), csv::format_double(c.mean_mentions),
               csv::format_double(c.mean_hashtags)});
    }
}

inline std::vector<PanelCell> read_panel_csv(const std::string& path) {
    auto table = csv::read_file(path);
    std::vector<PanelCell> cells;
    cells.reserve(table.rows.size());
    for (const auto& row : table.rows) {
        PanelCell c;
        c.user_id = row[table.col("user_id")];
        c.day = parse_date(row[table.col("day")]);
        c.avg_slant = std::stod(row[table.col("avg_slant")]);
        c.n_tweets = std::stoi(row[table.col("n_tweets")]);
        c.n_retweets = std::stoi(row[table.col("n_retweets")]);
        c.n_proR_tweets = std::stoi(row[table.col("n_proR_tweets")]);
        c.n_proR_retweets = std::stoi(row[table.col("n_proR_retweets")]);
        if (!row[table.col("share_proR_tweets")].empty())
            c.share_proR_tweets = std::stod(row[table.col("share_proR_tweets")]);
        if (!row[table.col("share_proR_retweets")].empty())
            c.share_proR_retweets = std::stod(row[table.col("share_proR_retweets")]);
        c.mean_words = std::stod(row[table.col("mean_words")]);
        c.mean_mentions = std::stod(row[table.col("mean_mentions")]);
        c.mean_hashtags = std::stod(row[table.col("mean_hashtags")]);
        cells.push_back(std::move(c));
    }
    return cells;
}

inline void write_flags_csv(const std::map<std::string, CohortFlags>& flags,
                            const std::string& path) {
    csv::Writer w(path);
    w.row({"user_id", "eu", "is_interaction", "is_supplier", "is_bot", "created_after_ban",
           "slant_group", "activity_group"});
    for (const auto& [uid, f] : flags) {
        w.row({uid, f.eu ? "1" : "0", f.is_interaction ? "1" : "0", f.is_supplier ? "1" : "0",
               f.is_bot ? "1" : "0", f.created_after_ban ? "1" : "0", to_string(f.slant_group),
               to_string(f.activity_group)});
    }
}

inline std::map<std::string, CohortFlags> read_flags_csv(const std::string& path) {
    auto table = csv::read_file(path);
    std::map<std::string, CohortFlags> flags;
    for (const auto& row : table.rows) {
        CohortFlags f;
        f.user_id = row[table.col("user_id")];
        f.eu = row[table.col("eu")] == "1";
        f.is_interaction = row[table.col("is_interaction")] == "1";
        f.is_supplier = row[table.col("is_supplier")] == "1";
        f.is_bot = row[table.col("is_bot")] == "1";
        f.created_after_ban = row[table.col("created_after_ban")] == "1";
        const auto& sg = row[table.col("slant_group")];
        f.slant_group = sg == "moderate" ? SlantGroup::Moderate
                        : sg == "high"   ? SlantGroup::High
                                         : SlantGroup::None;
        const auto& ag = row[table.col("activity_group")];
        f.activity_group = ag == "moderate" ? ActivityGroup::Moderate
                           : ag == "high"   ? ActivityGroup::High
                           : ag == "top05"  ? ActivityGroup::Top05
                                            : ActivityGroup::None;
        flags[f.user_id] = std::move(f);
    }
    return flags;
}

inline std::set<std::string> read_banned_handles(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open '" + path + "'");
    std::set<std::string> handles;
    std::string line;
    while (std::getline(in, line)) {
        while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
        if (!line.empty()) handles.insert(line);
    }
    return handles;
}

} // namespace slantlab
