#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "slantlab/common.hpp"
#include "slantlab/csv.hpp"
#include "slantlab/dates.hpp"
#include "slantlab/text.hpp"

namespace slantlab {

struct Tweet {
    std::string id;
    std::string user_id;
    int64_t timestamp = 0; // UTC epoch seconds
    Date day;              // UTC date of timestamp
    std::string text;
    std::string lang;
    std::string country;
    bool is_retweet = false;
    std::string retweeted_handle; // empty = absent; present iff is_retweet
    std::string replied_handle;   // empty = absent
    int n_words = 0;
    int n_mentions = 0;
    int n_hashtags = 0;

    bool is_reply() const { return !replied_handle.empty(); }
};

struct UserProfile {
    std::string user_id;
    std::string country;
    bool in_treated_region = false;
    int64_t followers = 0;
    int64_t followees = 0;
    std::optional<Date> account_created;
    int64_t n_tweets = 0;   // original, non-reply
    int64_t n_retweets = 0;
    int64_t n_replies = 0;

    // followers / (followers + followees); undefined when both are zero.
    std::optional<double> reputation() const {
        const int64_t total = followers + followees;
        if (total <= 0) return std::nullopt;
        return static_cast<double>(followers) / static_cast<double>(total);
    }
};

// OR-combined token query. A trailing '*' marks a prefix pattern.
struct QuerySpec {
    std::vector<std::string> terms;

    static QuerySpec parse(std::string_view q) {
        QuerySpec spec;
        for (auto tok : split_whitespace(q)) {
            if (tok == "OR" || tok == "or") continue;
            spec.terms.push_back(fold_case(tok));
        }
        if (spec.terms.empty()) throw ConfigError("query: no terms");
        return spec;
    }
};

inline bool match_query(std::string_view text, const QuerySpec& q) {
    const auto tokens = tokenize(text);
    for (const auto& tok : tokens) {
        for (const auto& term : q.terms) {
            if (!term.empty() && term.back() == '*') {
                const std::string_view prefix(term.data(), term.size() - 1);
                if (tok.size() >= prefix.size() && tok.compare(0, prefix.size(), prefix) == 0)
                    return true;
            } else if (tok == term) {
                return true;
            }
        }
    }
    return false;
}

struct RejectRecord {
    size_t line_no = 0;
    std::string reason;
};

// Immutable once built; iteration order is (day, id).
class CorpusStore {
public:
    CorpusStore() = default;
    explicit CorpusStore(std::vector<Tweet> tweets) : tweets_(std::move(tweets)) {
        sort_and_index();
    }

    const std::vector<Tweet>& tweets() const { return tweets_; }
    size_t size() const { return tweets_.size(); }
    bool empty() const { return tweets_.empty(); }

    const Tweet* find(const std::string& id) const {
        auto it = by_id_.find(id);
        return it == by_id_.end() ? nullptr : &tweets_[it->second];
    }

    bool operator==(const CorpusStore& other) const {
        if (tweets_.size() != other.tweets_.size()) return false;
        for (size_t i = 0; i < tweets_.size(); ++i) {
            const Tweet &a = tweets_[i], &b = other.tweets_[i];
            if (a.id != b.id || a.user_id != b.user_id || a.timestamp != b.timestamp ||
                a.text != b.text || a.lang != b.lang || a.country != b.country ||
                a.is_retweet != b.is_retweet || a.retweeted_handle != b.retweeted_handle ||
                a.replied_handle != b.replied_handle || a.n_words != b.n_words ||
                a.n_mentions != b.n_mentions || a.n_hashtags != b.n_hashtags)
                return false;
        }
        return true;
    }

private:
    void sort_and_index() {
        std::stable_sort(tweets_.begin(), tweets_.end(), [](const Tweet& a, const Tweet& b) {
            if (a.day != b.day) return a.day < b.day;
            return a.id < b.id;
        });
        by_id_.reserve(tweets_.size());
        for (size_t i = 0; i < tweets_.size(); ++i) by_id_[tweets_[i].id] = i;
    }

    std::vector<Tweet> tweets_;
    std::unordered_map<std::string, size_t> by_id_;
};

struct IngestResult {
    CorpusStore corpus;
    std::vector<RejectRecord> rejects;
};

namespace detail {

inline void fill_style_counts(Tweet& t, bool recompute) {
    if (!recompute) return;
    t.n_words = static_cast<int>(tokenize(t.text).size());
    int mentions = 0, hashtags = 0;
    for (auto chunk : split_whitespace(t.text)) {
        if (chunk.size() > 1 && chunk[0] == '@') ++mentions;
        if (chunk.size() > 1 && chunk[0] == '#') ++hashtags;
    }
    t.n_mentions = mentions;
    t.n_hashtags = hashtags;
}

// One raw record, field values as strings. Empty string = absent.
struct RawRecord {
    size_t line_no = 0;
    std::map<std::string, std::string> fields;

    const std::string* get(const std::string& key) const {
        auto it = fields.find(key);
        if (it == fields.end() || it->second.empty()) return nullptr;
        return &it->second;
    }
};

inline std::optional<Tweet> validate_record(const RawRecord& rec, std::string& reason) {
    Tweet t;
    const std::string* f;
    if (!(f = rec.get("id"))) {
        reason = "missing id";
        return std::nullopt;
    }
    t.id = *f;
    if (!(f = rec.get("user_id"))) {
        reason = "missing user_id";
        return std::nullopt;
    }
    t.user_id = *f;
    if (!(f = rec.get("timestamp"))) {
        reason = "missing timestamp";
        return std::nullopt;
    }
    try {
        t.timestamp = parse_timestamp(*f);
    } catch (const DataError&) {
        reason = "unparseable timestamp";
        return std::nullopt;
    }
    t.day = date_of_timestamp(t.timestamp);
    if ((f = rec.get("text"))) t.text = *f;
    if ((f = rec.get("lang"))) t.lang = *f;
    if ((f = rec.get("country"))) t.country = *f;
    if ((f = rec.get("is_retweet"))) t.is_retweet = (*f == "1" || *f == "true" || *f == "True");
    if ((f = rec.get("retweeted_handle"))) t.retweeted_handle = *f;
    if ((f = rec.get("replied_handle"))) t.replied_handle = *f;
    if (t.is_retweet && t.retweeted_handle.empty()) {
        reason = "is_retweet without retweeted_handle";
        return std::nullopt;
    }
    if (!t.is_retweet && !t.retweeted_handle.empty()) {
        reason = "retweeted_handle without is_retweet";
        return std::nullopt;
    }
    bool have_counts = true;
    try {
        if ((f = rec.get("n_words"))) t.n_words = std::stoi(*f);
        else have_counts = false;
        if ((f = rec.get("n_mentions"))) t.n_mentions = std::stoi(*f);
        else have_counts = false;
        if ((f = rec.get("n_hashtags"))) t.n_hashtags = std::stoi(*f);
        else have_counts = false;
    } catch (const std::exception&) {
        reason = "unparseable style count";
        return std::nullopt;
    }
    if (t.n_words < 0 || t.n_mentions < 0 || t.n_hashtags < 0) {
        reason = "negative style count";
        return std::nullopt;
    }
    // recompute when absent, or when a provided word count contradicts the text
    fill_style_counts(t, !have_counts || (!t.text.empty() && t.n_words < 1));
    return t;
}

} // namespace detail

// Core ingest: validates each raw record, rejects bad ones with a reason,
// keeps the first occurrence of a duplicate id. An empty stream is a valid
// empty corpus.
inline IngestResult ingest_records(const std::vector<detail::RawRecord>& records) {
    IngestResult result;
    std::vector<Tweet> accepted;
    std::unordered_set<std::string> seen;
    accepted.reserve(records.size());
    for (const auto& rec : records) {
        std::string reason;
        auto t = detail::validate_record(rec, reason);
        if (!t) {
            result.rejects.push_back({rec.line_no, reason});
            continue;
        }
        if (!seen.insert(t->id).second) {
            result.rejects.push_back({rec.line_no, "duplicate id '" + t->id + "'"});
            continue;
        }
        accepted.push_back(std::move(*t));
    }
    result.corpus = CorpusStore(std::move(accepted));
    return result;
}

inline IngestResult ingest_jsonl(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open '" + path + "'");
    std::vector<detail::RawRecord> records;
    std::string line;
    size_t line_no = 0;
    IngestResult pre;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object()) {
            pre.rejects.push_back({line_no, "malformed json"});
            continue;
        }
        detail::RawRecord rec;
        rec.line_no = line_no;
        for (auto& [key, value] : j.items()) {
            if (value.is_string()) rec.fields[key] = value.get<std::string>();
            else if (value.is_boolean()) rec.fields[key] = value.get<bool>() ? "1" : "0";
            else if (value.is_number_integer())
                rec.fields[key] = std::to_string(value.get<int64_t>());
            else if (value.is_number())
                rec.fields[key] = csv::format_double(value.get<double>());
        }
        records.push_back(std::move(rec));
    }
    auto result = ingest_records(records);
    // merge parse-level rejects, keep line order
    result.rejects.insert(result.rejects.end(), pre.rejects.begin(), pre.rejects.end());
    std::sort(result.rejects.begin(), result.rejects.end(),
              [](const RejectRecord& a, const RejectRecord& b) { return a.line_no < b.line_no; });
    return result;
}

inline IngestResult ingest_csv(const std::string& path) {
    auto table = csv::read_file(path);
    std::vector<detail::RawRecord> records;
    records.reserve(table.rows.size());
    for (size_t r = 0; r < table.rows.size(); ++r) {
        detail::RawRecord rec;
        rec.line_no = r + 2; // header is line 1
        const auto& row = table.rows[r];
        for (size_t c = 0; c < table.header.size() && c < row.size(); ++c) {
            if (!row[c].empty()) rec.fields[table.header[c]] = row[c];
        }
        records.push_back(std::move(rec));
    }
    return ingest_records(records);
}

inline IngestResult ingest_file(const std::string& path) {
    if (path.size() > 6 && path.substr(path.size() - 6) == ".jsonl") return ingest_jsonl(path);
    return ingest_csv(path);
}

inline const std::vector<std::string>& corpus_csv_header() {
    static const std::vector<std::string> header = {
        "id",   "user_id", "timestamp",        "text",           "lang",
        "country", "is_retweet", "retweeted_handle", "replied_handle", "n_words",
        "n_mentions", "n_hashtags"};
    return header;
}

inline std::string format_timestamp(int64_t epoch_seconds) {
    const Date day = date_of_timestamp(epoch_seconds);
    int64_t rem = epoch_seconds - static_cast<int64_t>(day.days) * 86400;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%sT%02d:%02d:%02dZ", to_string(day).c_str(),
                  static_cast<int>(rem / 3600), static_cast<int>((rem / 60) % 60),
                  static_cast<int>(rem % 60));
    return buf;
}

inline void write_corpus_csv(const CorpusStore& corpus, const std::string& path) {
    csv::Writer w(path);
    w.row(corpus_csv_header());
    for (const auto& t : corpus.tweets()) {
        w.row({t.id, t.user_id, format_timestamp(t.timestamp), t.text, t.lang, t.country,
               t.is_retweet ? "1" : "0", t.retweeted_handle, t.replied_handle,
               std::to_string(t.n_words), std::to_string(t.n_mentions),
               std::to_string(t.n_hashtags)});
    }
}

inline void write_rejects_csv(const std::vector<RejectRecord>& rejects, const std::string& path) {
    csv::Writer w(path);
    w.row({"line_no", "reason"});
    for (const auto& r : rejects) w.row({std::to_string(r.line_no), r.reason});
}

struct FilterSpec {
    std::set<std::string> langs;     // keep only these (empty = keep all)
    std::set<std::string> countries; // keep only these
    std::optional<Date> date_from;
    std::optional<Date> date_to; // inclusive
    std::set<std::string> drop_users;
    std::optional<Date> drop_accounts_created_after;
};

struct FilterCounts {
    size_t dropped_lang = 0;
    size_t dropped_country = 0;
    size_t dropped_date = 0;
    size_t dropped_user = 0;
    size_t dropped_late_account = 0;
};

struct FilterResult {
    CorpusStore corpus;
    FilterCounts counts;
};

// Subset of the corpus satisfying every predicate. The late-account predicate
// needs profile creation dates; users without a profile entry are kept.
inline FilterResult filter_corpus(const CorpusStore& c, const FilterSpec& f,
                                  const std::unordered_map<std::string, UserProfile>* profiles = nullptr) {
    if (f.date_from && f.date_to && *f.date_from > *f.date_to)
        throw ConfigError("filter: date range is inverted");
    if (f.drop_accounts_created_after && !profiles)
        throw ConfigError("filter: late-account filter requires profiles");
    FilterResult result;
    std::vector<Tweet> kept;
    kept.reserve(c.size());
    for (const auto& t : c.tweets()) {
        if (!f.langs.empty() && !f.langs.count(t.lang)) {
            ++result.counts.dropped_lang;
            continue;
        }
        if (!f.countries.empty() && !f.countries.count(t.country)) {
            ++result.counts.dropped_country;
            continue;
        }
        if ((f.date_from && t.day < *f.date_from) || (f.date_to && t.day > *f.date_to)) {
            ++result.counts.dropped_date;
            continue;
        }
        if (f.drop_users.count(t.user_id)) {
            ++result.counts.dropped_user;
            continue;
        }
        if (f.drop_accounts_created_after) {
            auto it = profiles->find(t.user_id);
            if (it != profiles->end() && it->second.account_created &&
                *it->second.account_created > *f.drop_accounts_created_after) {
                ++result.counts.dropped_late_account;
                continue;
            }
        }
        kept.push_back(t);
    }
    result.corpus = CorpusStore(std::move(kept));
    return result;
}

// One profile per distinct user_id with activity tallies from the corpus.
// Docs partition into tweet / retweet / reply: a retweet is never a reply,
// a reply is a non-retweet with a replied_handle.
inline std::unordered_map<std::string, UserProfile>
derive_user_profiles(const CorpusStore& c, const std::map<std::string, bool>& region_map,
                     const std::unordered_map<std::string, UserProfile>* base = nullptr) {
    std::set<std::string> unmapped;
    for (const auto& t : c.tweets()) {
        if (!region_map.count(t.country)) unmapped.insert(t.country);
    }
    if (!unmapped.empty()) {
        std::string msg = "unmapped countries:";
        for (const auto& code : unmapped) msg += " '" + code + "'";
        throw DataError(msg);
    }
    std::unordered_map<std::string, UserProfile> profiles;
    for (const auto& t : c.tweets()) {
        auto& p = profiles[t.user_id];
        if (p.user_id.empty()) {
            p.user_id = t.user_id;
            p.country = t.country;
            p.in_treated_region = region_map.at(t.country);
            if (base) {
                auto it = base->find(t.user_id);
                if (it != base->end()) {
                    p.followers = it->second.followers;
                    p.followees = it->second.followees;
                    p.account_created = it->second.account_created;
                }
            }
        }
        if (t.is_retweet) ++p.n_retweets;
        else if (t.is_reply()) ++p.n_replies;
        else ++p.n_tweets;
    }
    return profiles;
}

inline std::unordered_map<std::string, UserProfile>
read_profiles_csv(const std::string& path) {
    auto table = csv::read_file(path);
    std::unordered_map<std::string, UserProfile> profiles;
    const size_t id_col = table.col("user_id");
    for (const auto& row : table.rows) {
        UserProfile p;
        p.user_id = row[id_col];
        if (table.has_col("country")) p.country = row[table.col("country")];
        if (table.has_col("followers") && !row[table.col("followers")].empty())
            p.followers = std::stoll(row[table.col("followers")]);
        if (table.has_col("followees") && !row[table.col("followees")].empty())
            p.followees = std::stoll(row[table.col("followees")]);
        if (table.has_col("account_created") && !row[table.col("account_created")].empty())
            p.account_created = parse_date(row[table.col("account_created")]);
        profiles[p.user_id] = std::move(p);
    }
    return profiles;
}

inline void write_profiles_csv(const std::unordered_map<std::string, UserProfile>& profiles,
                               const std::string& path) {
    std::vector<const UserProfile*> sorted;
    sorted.reserve(profiles.size());
    for (const auto& [_, p] : profiles) sorted.push_back(&p);
    std::sort(sorted.begin(), sorted.end(),
              [](const UserProfile* a, const UserProfile* b) { return a->user_id < b->user_id; });
    csv::Writer w(path);
    w.row({"user_id", "country", "followers", "followees", "account_created", "n_tweets",
           "n_retweets", "n_replies"});
    for (const auto* p : sorted) {
        w.row({p->user_id, p->country, std::to_string(p->followers),
               std::to_string(p->followees),
               p->account_created ? to_string(*p->account_created) : "",
               std::to_string(p->n_tweets), std::to_string(p->n_retweets),
               std::to_string(p->n_replies)});
    }
}

// Share of documents containing at least one token with the stem as prefix.
inline std::map<std::string, double> stem_frequency(const CorpusStore& c,
                                                    const std::vector<std::string>& stems) {
    for (const auto& s : stems) {
        if (s.empty()) throw ConfigError("stem_frequency: empty stem");
        if (s != fold_case(s)) throw ConfigError("stem_frequency: stems must be lowercase");
    }
    std::map<std::string, size_t> hits;
    for (const auto& s : stems) hits[s] = 0;
    for (const auto& t : c.tweets()) {
        const auto tokens = tokenize(t.text);
        for (const auto& s : stems) {
            for (const auto& tok : tokens) {
                if (tok.size() >= s.size() && tok.compare(0, s.size(), s) == 0) {
                    ++hits[s];
                    break;
                }
            }
        }
    }
    std::map<std::string, double> shares;
    for (const auto& s : stems) {
        shares[s] = c.empty() ? 0.0
                              : static_cast<double>(hits[s]) / static_cast<double>(c.size());
    }
    return shares;
}

} // namespace slantlab
