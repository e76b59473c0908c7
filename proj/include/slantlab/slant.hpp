#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "slantlab/common.hpp"
#include "slantlab/corpus.hpp"
#include "slantlab/dates.hpp"
#include "slantlab/encoder.hpp"

namespace slantlab {

struct PoleTweet {
    Date day;
    Vec vec;
};

// Reference corpus for one side (e.g. "R" / "U").
struct PoleCorpus {
    std::string label;
    std::vector<PoleTweet> tweets;
};

struct Pole {
    std::string label;
    std::optional<Date> day; // nullopt = static pole
    Vec vec;
};

enum class PoleMode { Static, StaticPreban, Rolling };
enum class PoleWeighting { DayMean, PerTweet };

struct PoleConfig {
    PoleMode mode = PoleMode::Rolling;
    int window_days = 8;
    double decay = 0.5;
    double smoothing = 1.0; // b in the similarity ratio
    PoleWeighting weighting = PoleWeighting::DayMean;

    std::string hash() const {
        std::string repr = "mode=" + std::to_string(static_cast<int>(mode)) +
                           ";window=" + std::to_string(window_days) +
                           ";decay=" + csv::format_double(decay) +
                           ";b=" + csv::format_double(smoothing) +
                           ";weighting=" + std::to_string(static_cast<int>(weighting));
        return hex64(fnv1a64(repr));
    }
};

namespace detail {

inline Vec mean_vector(const std::vector<const Vec*>& vs) {
    if (vs.empty()) throw DomainError("mean of zero vectors");
    Vec out(vs[0]->size(), 0.0);
    std::vector<double> column(vs.size());
    for (size_t d = 0; d < out.size(); ++d) {
        for (size_t i = 0; i < vs.size(); ++i) column[i] = (*vs[i])[d];
        out[d] = pairwise_sum(column) / static_cast<double>(vs.size());
    }
    return out;
}

} // namespace detail

// Unweighted arithmetic mean of the member vectors, optionally restricted to
// a date range (inclusive).
inline Pole build_static_pole(const PoleCorpus& pc, std::optional<Date> from = std::nullopt,
                              std::optional<Date> to = std::nullopt) {
    std::vector<const Vec*> members;
    for (const auto& t : pc.tweets) {
        if (from && t.day < *from) continue;
        if (to && t.day > *to) continue;
        members.push_back(&t.vec);
    }
    if (members.empty()) {
        std::string range = from || to
            ? " in [" + (from ? to_string(*from) : "..") + ", " + (to ? to_string(*to) : "..") + "]"
            : "";
        throw DataError("pole '" + pc.label + "': no tweets" + range);
    }
    return Pole{pc.label, std::nullopt, detail::mean_vector(members)};
}

// Weight for a day at distance `age` = t - k from the scored day. The decay
// spans the window: age 0 -> 1, age window-1 -> decay.
inline std::vector<double> decay_weights(int window_days = 8, double decay = 0.5) {
    if (window_days < 1) throw ConfigError("pole window must be >= 1 day");
    if (decay <= 0.0) throw ConfigError("pole decay must be > 0");
    std::vector<double> w(static_cast<size_t>(window_days));
    const double span = window_days > 1 ? static_cast<double>(window_days - 1) : 1.0;
    // w[0] is the oldest day in the window, w[window-1] the scored day
    for (int age = window_days - 1; age >= 0; --age)
        w[static_cast<size_t>(window_days - 1 - age)] = std::pow(decay, age / span);
    return w;
}

// One pole per requested day t, combining the per-day mean vectors inside
// [t - window + 1, t] with decay weights renormalized over populated days.
// PerTweet weighting applies each day's weight to individual tweets instead
// of the day mean.
inline std::map<Date, Pole> build_rolling_poles(const PoleCorpus& pc, Date from, Date to,
                                                const PoleConfig& cfg = {}) {
    if (from > to) throw ConfigError("rolling poles: inverted date range");
    const auto weights = decay_weights(cfg.window_days, cfg.decay);

    // bucket member vectors by day once
    std::map<Date, std::vector<const Vec*>> by_day;
    for (const auto& t : pc.tweets) by_day[t.day].push_back(&t.vec);

    std::map<Date, Pole> poles;
    for (Date t = from; t <= to; t += 1) {
        double weight_total = 0.0;
        std::vector<double> acc;
        size_t dim = 0;
        for (int age = 0; age < cfg.window_days; ++age) {
            const Date k = t - age;
            auto it = by_day.find(k);
            if (it == by_day.end()) continue;
            const double w_day = weights[static_cast<size_t>(cfg.window_days - 1 - age)];
            if (dim == 0) {
                dim = it->second[0]->size();
                acc.assign(dim, 0.0);
            }
            if (cfg.weighting == PoleWeighting::DayMean) {
                const Vec day_mean = detail::mean_vector(it->second);
                for (size_t d = 0; d < dim; ++d) acc[d] += w_day * day_mean[d];
                weight_total += w_day;
            } else {
                for (const Vec* v : it->second) {
                    for (size_t d = 0; d < dim; ++d) acc[d] += w_day * (*v)[d];
                    weight_total += w_day;
                }
            }
        }
        if (weight_total == 0.0)
            throw DataError("pole '" + pc.label + "': empty window for day " + to_string(t));
        for (double& x : acc) x /= weight_total;
        poles[t] = Pole{pc.label, t, std::move(acc)};
    }
    return poles;
}

// (sim(d,R) + b) / (sim(d,U) + b) - 1. Positive -> closer to the R pole,
// 0 -> equidistant.
inline double pole_ratio(const Vec& doc, const Pole& pole_r, const Pole& pole_u,
                         double b = 1.0) {
    if (b <= 0.0) throw ConfigError("pole_ratio: smoothing must be > 0");
    const double sim_r = cosine_similarity(doc, pole_r.vec);
    const double sim_u = cosine_similarity(doc, pole_u.vec);
    const double denom = sim_u + b;
    if (denom <= 0.0)
        throw DomainError("pole_ratio: non-positive denominator (sim(d,U) = " +
                          csv::format_double(sim_u) + ", b = " + csv::format_double(b) + ")");
    return (sim_r + b) / denom - 1.0;
}

struct SlantScore {
    std::string tweet_id;
    double raw = 0.0;
    double z = 0.0;
    bool flag_1sd = false; // z > 1
    bool flag_0 = false;   // z > 0
};

struct StandardizationStats {
    double mean = 0.0;
    double sd = 1.0;
    size_t n = 0;
    std::string pole_config_hash;
};

inline int classify(double z, double threshold) {
    if (!std::isfinite(z)) throw DomainError("classify: non-finite z");
    return z > threshold ? 1 : 0;
}

// Pole pair covering the scoring window: either one static pair or per-day
// rolling pairs.
struct PoleSet {
    std::optional<std::pair<Pole, Pole>> static_pair; // (R, U)
    std::map<Date, Pole> rolling_r;
    std::map<Date, Pole> rolling_u;
    double smoothing = 1.0;
    std::string config_hash;

    std::pair<const Pole*, const Pole*> for_day(Date day) const {
        if (static_pair) return {&static_pair->first, &static_pair->second};
        auto ir = rolling_r.find(day);
        auto iu = rolling_u.find(day);
        if (ir == rolling_r.end() || iu == rolling_u.end()) return {nullptr, nullptr};
        return {&ir->second, &iu->second};
    }
};

inline PoleSet make_static_pole_set(const PoleCorpus& r, const PoleCorpus& u,
                                    const PoleConfig& cfg,
                                    std::optional<Date> preban_cutoff = std::nullopt) {
    PoleSet set;
    std::optional<Date> to;
    if (cfg.mode == PoleMode::StaticPreban) {
        if (!preban_cutoff) throw ConfigError("static-preban poles need a cutoff date");
        to = preban_cutoff;
    }
    set.static_pair = {build_static_pole(r, std::nullopt, to),
                       build_static_pole(u, std::nullopt, to)};
    set.smoothing = cfg.smoothing;
    set.config_hash = cfg.hash();
    return set;
}

inline PoleSet make_rolling_pole_set(const PoleCorpus& r, const PoleCorpus& u, Date from,
                                     Date to, const PoleConfig& cfg) {
    PoleSet set;
    set.rolling_r = build_rolling_poles(r, from, to, cfg);
    set.rolling_u = build_rolling_poles(u, from, to, cfg);
    set.smoothing = cfg.smoothing;
    set.config_hash = cfg.hash();
    return set;
}

struct ScoreResult {
    std::vector<SlantScore> scores; // corpus iteration order
    StandardizationStats stats;
};

// Mean/sd over the full raw-score set. z is invariant under any positive
// affine map of the raws, so the binary flags are too.
inline StandardizationStats standardize(std::span<const double> raws,
                                        const std::string& pole_config_hash = "") {
    if (raws.empty()) throw DataError("standardize: no scores");
    const double mean = mean_of(raws);
    double sd = 0.0;
    if (raws.size() > 1) {
        std::vector<double> sq(raws.size());
        for (size_t i = 0; i < raws.size(); ++i) {
            const double d = raws[i] - mean;
            sq[i] = d * d;
        }
        sd = std::sqrt(pairwise_sum(sq) / static_cast<double>(raws.size() - 1));
    }
    if (sd <= 0.0)
        throw DataError("standardize: raw scores are constant, sd is zero");
    return {mean, sd, raws.size(), pole_config_hash};
}

// Score every document with its day's pole pair, then standardize the raw
// ratios over the full scored set and set both binary flags. The stats are
// computed once here and reused verbatim for any later scoring in the study.
// Scoring is a pure map into preallocated slots, so any worker count yields
// the same bytes.
inline ScoreResult score_corpus(const CorpusStore& corpus, const EncoderBackend& backend,
                                const PoleSet& poles, int threads = 1) {
    ScoreResult result;
    if (corpus.empty()) throw DataError("score: empty corpus");

    std::vector<std::string> missing_days;
    for (const auto& t : corpus.tweets()) {
        auto [r, u] = poles.for_day(t.day);
        if (!r) {
            const std::string d = to_string(t.day);
            if (missing_days.empty() || missing_days.back() != d) missing_days.push_back(d);
        }
    }
    if (!missing_days.empty()) {
        std::string msg = "score: no poles for days:";
        for (const auto& d : missing_days) msg += " " + d;
        throw DataError(msg);
    }

    result.scores.resize(corpus.size());
    const auto& tweets = corpus.tweets();
    parallel_for(tweets.size(), threads, [&](size_t i) {
        const auto& t = tweets[i];
        auto [r, u] = poles.for_day(t.day);
        const Vec v = backend.encode(t.id, t.text);
        result.scores[i].tweet_id = t.id;
        result.scores[i].raw = pole_ratio(v, *r, *u, poles.smoothing);
    });

    std::vector<double> raws(result.scores.size());
    for (size_t i = 0; i < raws.size(); ++i) raws[i] = result.scores[i].raw;
    result.stats = standardize(raws, poles.config_hash);
    for (auto& s : result.scores) {
        s.z = (s.raw - result.stats.mean) / result.stats.sd;
        s.flag_1sd = s.z > 1.0;
        s.flag_0 = s.z > 0.0;
    }
    return result;
}

inline void write_scores_csv(const std::vector<SlantScore>& scores, const std::string& path) {
    csv::Writer w(path);
    w.row({"tweet_id", "raw", "z", "flag_1sd", "flag_0"});
    for (const auto& s : scores) {
        w.row({s.tweet_id, csv::format_double(s.raw), csv::format_double(s.z),
               s.flag_1sd ? "1" : "0", s.flag_0 ? "1" : "0"});
    }
}

inline std::vector<SlantScore> read_scores_csv(const std::string& path) {
    auto table = csv::read_file(path);
    std::vector<SlantScore> scores;
    scores.reserve(table.rows.size());
    const size_t id = table.col("tweet_id"), raw = table.col("raw"), z = table.col("z"),
                 f1 = table.col("flag_1sd"), f0 = table.col("flag_0");
    for (const auto& row : table.rows) {
        SlantScore s;
        s.tweet_id = row[id];
        s.raw = std::stod(row[raw]);
        s.z = std::stod(row[z]);
        s.flag_1sd = row[f1] == "1";
        s.flag_0 = row[f0] == "1";
        scores.push_back(std::move(s));
    }
    return scores;
}

inline void write_standardization_json(const StandardizationStats& stats,
                                       const std::string& path) {
    nlohmann::json j{{"mean", stats.mean},
                     {"sd", stats.sd},
                     {"n", stats.n},
                     {"pole_config_hash", stats.pole_config_hash}};
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write '" + path + "'");
    out << j.dump(2) << "\n";
}

inline StandardizationStats read_standardization_json(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open '" + path + "'");
    nlohmann::json j = nlohmann::json::parse(in);
    return {j.at("mean").get<double>(), j.at("sd").get<double>(), j.at("n").get<size_t>(),
            j.at("pole_config_hash").get<std::string>()};
}

// Pole corpus file: CSV label,day,v0,...,v{d-1}, no header.
inline std::pair<PoleCorpus, PoleCorpus> read_pole_corpora_csv(const std::string& path,
                                                               const std::string& label_r,
                                                               const std::string& label_u) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("poles: cannot open '" + path + "'");
    PoleCorpus r{label_r, {}}, u{label_u, {}};
    std::string line;
    size_t line_no = 0;
    size_t expected_fields = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto fields = csv::parse_line(line);
        if (fields.size() < 3)
            throw DataError("poles: line " + std::to_string(line_no) + ": too few fields");
        if (expected_fields == 0) expected_fields = fields.size();
        if (fields.size() != expected_fields)
            throw DataError("poles: line " + std::to_string(line_no) +
                            ": inconsistent vector dimension");
        PoleTweet t;
        t.day = parse_date(fields[1]);
        t.vec.resize(fields.size() - 2);
        for (size_t i = 2; i < fields.size(); ++i) t.vec[i - 2] = std::stod(fields[i]);
        if (!all_finite(t.vec))
            throw DataError("poles: line " + std::to_string(line_no) + ": non-finite value");
        if (fields[0] == label_r) r.tweets.push_back(std::move(t));
        else if (fields[0] == label_u) u.tweets.push_back(std::move(t));
        else
            throw DataError("poles: line " + std::to_string(line_no) + ": unknown label '" +
                            fields[0] + "'");
    }
    return {std::move(r), std::move(u)};
}

inline void write_pole_corpora_csv(const PoleCorpus& r, const PoleCorpus& u,
                                   const std::string& path) {
    csv::Writer w(path);
    auto dump = [&](const PoleCorpus& pc) {
        for (const auto& t : pc.tweets) {
            std::vector<std::string> row{pc.label, to_string(t.day)};
            for (double x : t.vec) row.push_back(csv::format_double(x));
            w.row(row);
        }
    };
    dump(r);
    dump(u);
}

} // namespace slantlab
