#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "slantlab/common.hpp"
#include "slantlab/panel.hpp"

namespace slantlab {

struct IdentificationError : Error {
    using Error::Error;
};
struct InferenceError : Error {
    using Error::Error;
};
struct EstimationError : Error {
    using Error::Error;
};

// ---------------------------------------------------------------------------
// Two-way demeaning by alternating projections. Each sweep subtracts user
// group means then day group means from every column; convergence when the
// largest mean removed in a sweep is below tol, which bounds the residual
// group means of the result by tol.
// ---------------------------------------------------------------------------

struct DemeanInfo {
    int iterations = 0;
    double final_delta = 0.0;
};

inline DemeanInfo demean_two_way(Eigen::MatrixXd& M, const std::vector<int>& user_idx,
                                 int n_users, const std::vector<int>& day_idx, int n_days,
                                 double tol = 1e-10, int max_iter = 10000) {
    const auto n = static_cast<Eigen::Index>(M.rows());
    if (static_cast<size_t>(n) != user_idx.size() || static_cast<size_t>(n) != day_idx.size())
        throw EstimationError("demean: index length mismatch");
    if (!M.allFinite()) throw EstimationError("demean: non-finite input");

    Eigen::VectorXd user_count = Eigen::VectorXd::Zero(n_users);
    Eigen::VectorXd day_count = Eigen::VectorXd::Zero(n_days);
    for (Eigen::Index i = 0; i < n; ++i) {
        user_count[user_idx[i]] += 1.0;
        day_count[day_idx[i]] += 1.0;
    }

    Eigen::MatrixXd user_mean(n_users, M.cols());
    Eigen::MatrixXd day_mean(n_days, M.cols());
    double delta = std::numeric_limits<double>::infinity();
    for (int iter = 1; iter <= max_iter; ++iter) {
        user_mean.setZero();
        for (Eigen::Index i = 0; i < n; ++i) user_mean.row(user_idx[i]) += M.row(i);
        for (int g = 0; g < n_users; ++g)
            if (user_count[g] > 0) user_mean.row(g) /= user_count[g];
        const double delta_user = user_mean.cwiseAbs().maxCoeff();
        for (Eigen::Index i = 0; i < n; ++i) M.row(i) -= user_mean.row(user_idx[i]);

        day_mean.setZero();
        for (Eigen::Index i = 0; i < n; ++i) day_mean.row(day_idx[i]) += M.row(i);
        for (int g = 0; g < n_days; ++g)
            if (day_count[g] > 0) day_mean.row(g) /= day_count[g];
        const double delta_day = day_mean.cwiseAbs().maxCoeff();
        for (Eigen::Index i = 0; i < n; ++i) M.row(i) -= day_mean.row(day_idx[i]);

        delta = std::max(delta_user, delta_day);
        if (delta < tol) return {iter, delta};
    }
    throw EstimationError("demean: no convergence after " + std::to_string(max_iter) +
                          " sweeps, final delta " + csv::format_double(delta));
}

// ---------------------------------------------------------------------------
// OLS with pivoted-QR collinearity handling and the CR1 cluster sandwich.
// ---------------------------------------------------------------------------

struct OlsResult {
    Eigen::VectorXd beta;    // coefficients of kept columns
    std::vector<int> kept;   // original column indices, ascending
    std::vector<int> dropped;
    Eigen::MatrixXd xtx_inv; // (Xk' Xk)^-1
    Eigen::VectorXd residuals;
};

inline OlsResult ols_pivoted(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
    OlsResult out;
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
    qr.setThreshold(1e-9);
    const Eigen::Index rank = qr.rank();
    const auto perm = qr.colsPermutation().indices();
    std::vector<char> keep(static_cast<size_t>(X.cols()), 0);
    for (Eigen::Index i = 0; i < rank; ++i) keep[static_cast<size_t>(perm[i])] = 1;
    for (Eigen::Index c = 0; c < X.cols(); ++c) {
        if (keep[static_cast<size_t>(c)]) out.kept.push_back(static_cast<int>(c));
        else out.dropped.push_back(static_cast<int>(c));
    }
    Eigen::MatrixXd Xk(X.rows(), static_cast<Eigen::Index>(out.kept.size()));
    for (size_t j = 0; j < out.kept.size(); ++j) Xk.col(static_cast<Eigen::Index>(j)) = X.col(out.kept[j]);
    if (out.kept.empty()) {
        out.beta.resize(0);
        out.xtx_inv.resize(0, 0);
        out.residuals = y;
        return out;
    }
    out.beta = Xk.colPivHouseholderQr().solve(y);
    out.residuals = y - Xk * out.beta;
    const Eigen::MatrixXd xtx = Xk.transpose() * Xk;
    out.xtx_inv = xtx.ldlt().solve(
        Eigen::MatrixXd::Identity(xtx.rows(), xtx.cols()));
    return out;
}

enum class DofMode {
    AbsorbAdjusted, // K = slopes + absorbed FE levels - 1 shared redundancy
    SlopesOnly
};

// CR1 sandwich: [G/(G-1)]*[(N-1)/(N-K)] (X'X)^-1 (sum_g s_g s_g') (X'X)^-1
// with s_g = X_g' u_g. Result is symmetrized against accumulation noise.
inline Eigen::MatrixXd cluster_vcov(const Eigen::MatrixXd& Xk, const Eigen::VectorXd& resid,
                                    const Eigen::MatrixXd& xtx_inv,
                                    const std::vector<int>& cluster_idx, int n_clusters,
                                    int k_dof) {
    if (n_clusters < 2) throw InferenceError("cluster vcov: fewer than 2 clusters");
    const Eigen::Index n = Xk.rows(), k = Xk.cols();
    Eigen::MatrixXd scores = Eigen::MatrixXd::Zero(n_clusters, k);
    for (Eigen::Index i = 0; i < n; ++i) scores.row(cluster_idx[i]) += resid[i] * Xk.row(i);
    const Eigen::MatrixXd meat = scores.transpose() * scores;
    const double g = n_clusters;
    const double nn = static_cast<double>(n);
    const double kk = k_dof;
    if (nn - kk <= 0)
        throw InferenceError("cluster vcov: nonpositive residual dof (N=" + std::to_string(n) +
                             ", K=" + std::to_string(k_dof) + ")");
    const double cr1 = (g / (g - 1.0)) * ((nn - 1.0) / (nn - kk));
    Eigen::MatrixXd v = cr1 * xtx_inv * meat * xtx_inv;
    return 0.5 * (v + v.transpose());
}

// ---------------------------------------------------------------------------
// Regression dataset assembled from panel cells.
// ---------------------------------------------------------------------------

enum class Outcome { AvgSlant, ShareTweets, ShareRetweets, CountTweets, CountRetweets };

inline std::string outcome_name(Outcome o) {
    switch (o) {
        case Outcome::AvgSlant: return "avg_slant";
        case Outcome::ShareTweets: return "share_proR_tweets";
        case Outcome::ShareRetweets: return "share_proR_retweets";
        case Outcome::CountTweets: return "n_proR_tweets";
        case Outcome::CountRetweets: return "n_proR_retweets";
    }
    return "";
}

inline Outcome outcome_from_name(const std::string& name) {
    for (Outcome o : {Outcome::AvgSlant, Outcome::ShareTweets, Outcome::ShareRetweets,
                      Outcome::CountTweets, Outcome::CountRetweets})
        if (outcome_name(o) == name) return o;
    throw ConfigError("unknown outcome '" + name + "'");
}

inline std::optional<double> outcome_value(const PanelCell& c, Outcome o) {
    switch (o) {
        case Outcome::AvgSlant: return c.avg_slant;
        case Outcome::ShareTweets: return c.share_proR_tweets;
        case Outcome::ShareRetweets: return c.share_proR_retweets;
        case Outcome::CountTweets: return static_cast<double>(c.n_proR_tweets);
        case Outcome::CountRetweets: return static_cast<double>(c.n_proR_retweets);
    }
    return std::nullopt;
}

// Cohort restriction applied to the estimation sample. High activity matches
// the top-0.5% slice as well (top05 is a subset of high).
struct SampleFilter {
    std::optional<bool> interaction;
    std::optional<bool> supplier;
    bool exclude_bots = false;
    bool exclude_late_accounts = false;
    std::optional<SlantGroup> slant_group;
    std::optional<ActivityGroup> activity_group;
};

inline bool sample_keep(const CohortFlags& f, const SampleFilter& s) {
    if (s.interaction && f.is_interaction != *s.interaction) return false;
    if (s.supplier && f.is_supplier != *s.supplier) return false;
    if (s.exclude_bots && f.is_bot) return false;
    if (s.exclude_late_accounts && f.created_after_ban) return false;
    if (s.slant_group && f.slant_group != *s.slant_group) return false;
    if (s.activity_group) {
        if (*s.activity_group == ActivityGroup::High) {
            if (f.activity_group != ActivityGroup::High &&
                f.activity_group != ActivityGroup::Top05)
                return false;
        } else if (f.activity_group != *s.activity_group) {
            return false;
        }
    }
    return true;
}

struct Dataset {
    Eigen::VectorXd y;
    std::vector<int> user_idx; // dense, also the cluster index
    std::vector<int> day_idx;
    std::vector<Date> date;
    std::vector<uint8_t> treated;
    Eigen::MatrixXd controls; // n x 0 when controls are off
    std::vector<std::string> control_names;
    int n_users = 0;
    int n_days = 0;
    std::vector<std::string> user_ids; // dense index -> id
    std::vector<Date> day_dates;       // dense index -> date

    size_t n() const { return static_cast<size_t>(y.size()); }
};

inline Dataset make_dataset(const std::vector<PanelCell>& cells,
                            const std::map<std::string, CohortFlags>& flags,
                            const StudyWindow& window, Outcome outcome, bool with_controls,
                            const SampleFilter& filter = {}) {
    window.validate();
    struct Row {
        const PanelCell* cell;
        double y;
        bool treated;
    };
    std::vector<Row> rows;
    std::set<Date> days;
    for (const auto& cell : cells) {
        if (!window.contains(cell.day)) continue;
        auto fit = flags.find(cell.user_id);
        if (fit == flags.end()) continue;
        if (!sample_keep(fit->second, filter)) continue;
        auto v = outcome_value(cell, outcome);
        if (!v) continue;
        rows.push_back({&cell, *v, fit->second.eu});
        days.insert(cell.day);
    }
    // canonical row order: estimates are invariant to the input permutation
    std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
        if (a.cell->user_id != b.cell->user_id) return a.cell->user_id < b.cell->user_id;
        return a.cell->day < b.cell->day;
    });
    Dataset ds;
    ds.y.resize(static_cast<Eigen::Index>(rows.size()));
    ds.user_idx.resize(rows.size());
    ds.day_idx.resize(rows.size());
    ds.date.resize(rows.size());
    ds.treated.resize(rows.size());
    std::map<Date, int> day_of;
    for (const auto& d : days) {
        day_of[d] = ds.n_days++;
        ds.day_dates.push_back(d);
    }
    std::map<std::string, int> user_of;
    for (size_t i = 0; i < rows.size(); ++i) {
        const auto& r = rows[i];
        auto [it, inserted] = user_of.try_emplace(r.cell->user_id, ds.n_users);
        if (inserted) {
            ++ds.n_users;
            ds.user_ids.push_back(r.cell->user_id);
        }
        ds.user_idx[i] = it->second;
        ds.day_idx[i] = day_of.at(r.cell->day);
        ds.date[i] = r.cell->day;
        ds.treated[i] = r.treated ? 1 : 0;
        ds.y[static_cast<Eigen::Index>(i)] = r.y;
    }
    if (with_controls) {
        ds.control_names = {"mean_words", "mean_mentions", "mean_hashtags"};
        ds.controls.resize(static_cast<Eigen::Index>(rows.size()), 3);
        for (size_t i = 0; i < rows.size(); ++i) {
            ds.controls(static_cast<Eigen::Index>(i), 0) = rows[i].cell->mean_words;
            ds.controls(static_cast<Eigen::Index>(i), 1) = rows[i].cell->mean_mentions;
            ds.controls(static_cast<Eigen::Index>(i), 2) = rows[i].cell->mean_hashtags;
        }
    } else {
        ds.controls.resize(static_cast<Eigen::Index>(rows.size()), 0);
    }
    return ds;
}

// ---------------------------------------------------------------------------
// Fits
// ---------------------------------------------------------------------------

struct FitOptions {
    StudyWindow window;
    double demean_tol = 1e-10;
    int demean_max_iter = 10000;
    DofMode dof_mode = DofMode::AbsorbAdjusted;
    bool pre_mean_treated_only = false;
};

struct FitResult {
    std::vector<std::string> names; // kept slope terms
    Eigen::VectorXd beta;
    Eigen::MatrixXd vcov;
    std::vector<std::string> dropped_terms;
    size_t n_obs = 0;
    int n_clusters = 0;
    double r2_within = 0.0;
    double pre_period_mean = std::numeric_limits<double>::quiet_NaN();
    double pct_of_mean = std::numeric_limits<double>::quiet_NaN();
    bool pct_defined = false;
    int demean_iterations = 0;
    double demean_delta = 0.0;

    int index(const std::string& name) const {
        for (size_t i = 0; i < names.size(); ++i)
            if (names[i] == name) return static_cast<int>(i);
        return -1;
    }
    bool has(const std::string& name) const { return index(name) >= 0; }
    double coef(const std::string& name) const {
        const int i = index(name);
        if (i < 0) throw EstimationError("no coefficient '" + name + "'");
        return beta[i];
    }
    double se(const std::string& name) const {
        const int i = index(name);
        if (i < 0) throw EstimationError("no coefficient '" + name + "'");
        return std::sqrt(std::max(0.0, vcov(i, i)));
    }
};

// 100 * beta / |pre-period mean|, so the sign of the effect survives a
// negative baseline; undefined when the mean is numerically zero.
inline void summarize_fit(FitResult& fit, const std::string& lead_term) {
    fit.pct_defined = false;
    fit.pct_of_mean = std::numeric_limits<double>::quiet_NaN();
    if (!std::isfinite(fit.pre_period_mean) || std::abs(fit.pre_period_mean) < 1e-12) return;
    if (!fit.has(lead_term)) return;
    fit.pct_of_mean = 100.0 * fit.coef(lead_term) / std::abs(fit.pre_period_mean);
    fit.pct_defined = true;
}

inline double pct_of_mean(double beta, double pre_period_mean) {
    if (std::abs(pre_period_mean) < 1e-12)
        throw DomainError("pct_of_mean: pre-period mean is zero");
    return 100.0 * beta / std::abs(pre_period_mean);
}

// Core TWFE fit: demean [y | T | controls] by user and day, OLS on the
// demeaned system, CR1 cluster vcov. Terms flagged required are
// identification-critical: losing them to collinearity is an error rather
// than a report.
inline FitResult fit_twfe(const Dataset& ds, const Eigen::MatrixXd& terms,
                          const std::vector<std::string>& term_names,
                          const std::vector<bool>& required, const FitOptions& opts) {
    const Eigen::Index n = ds.y.size();
    if (n == 0) throw DataError("fit: empty estimation sample");
    if (ds.n_users < 2) throw InferenceError("fit: fewer than 2 clusters");

    const Eigen::Index k_terms = terms.cols();
    const Eigen::Index k_ctrl = ds.controls.cols();

    for (Eigen::Index c = 0; c < k_terms; ++c) {
        if (required[static_cast<size_t>(c)]) {
            const double spread = terms.col(c).maxCoeff() - terms.col(c).minCoeff();
            if (spread == 0.0)
                throw IdentificationError("fit: term '" + term_names[static_cast<size_t>(c)] +
                                          "' has zero variance");
        }
    }

    Eigen::MatrixXd M(n, 1 + k_terms + k_ctrl);
    M.col(0) = ds.y;
    if (k_terms > 0) M.middleCols(1, k_terms) = terms;
    if (k_ctrl > 0) M.rightCols(k_ctrl) = ds.controls;

    const DemeanInfo info = demean_two_way(M, ds.user_idx, ds.n_users, ds.day_idx, ds.n_days,
                                           opts.demean_tol, opts.demean_max_iter);

    const Eigen::VectorXd yd = M.col(0);
    const Eigen::MatrixXd Xd = M.rightCols(k_terms + k_ctrl);

    std::vector<std::string> all_names = term_names;
    for (const auto& cn : ds.control_names) all_names.push_back(cn);

    OlsResult ols = ols_pivoted(Xd, yd);
    FitResult fit;
    for (int c : ols.dropped) {
        const bool is_term = c < k_terms;
        if (is_term && required[static_cast<size_t>(c)])
            throw IdentificationError("fit: term '" + all_names[static_cast<size_t>(c)] +
                                      "' absorbed by fixed effects or collinear");
        fit.dropped_terms.push_back(all_names[static_cast<size_t>(c)]);
    }
    for (int c : ols.kept) fit.names.push_back(all_names[static_cast<size_t>(c)]);
    fit.beta = ols.beta;
    fit.n_obs = static_cast<size_t>(n);
    fit.n_clusters = ds.n_users;
    fit.demean_iterations = info.iterations;
    fit.demean_delta = info.final_delta;

    const double sst = yd.squaredNorm();
    const double ssr = ols.residuals.squaredNorm();
    fit.r2_within = sst > 1e-24 ? 1.0 - ssr / sst : 0.0;

    Eigen::MatrixXd Xk(n, static_cast<Eigen::Index>(ols.kept.size()));
    for (size_t j = 0; j < ols.kept.size(); ++j)
        Xk.col(static_cast<Eigen::Index>(j)) = Xd.col(ols.kept[j]);
    int k_dof = static_cast<int>(ols.kept.size());
    if (opts.dof_mode == DofMode::AbsorbAdjusted) k_dof += ds.n_users + ds.n_days - 1;
    fit.vcov = cluster_vcov(Xk, ols.residuals, ols.xtx_inv, ds.user_idx, ds.n_users, k_dof);

    // pre-period mean of the raw outcome over the estimation sample
    std::vector<double> pre;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (opts.window.is_post(ds.date[static_cast<size_t>(i)])) continue;
        if (opts.pre_mean_treated_only && !ds.treated[static_cast<size_t>(i)]) continue;
        pre.push_back(ds.y[i]);
    }
    if (!pre.empty()) fit.pre_period_mean = mean_of(pre);
    return fit;
}

inline const char* kDidTerm = "eu_x_post";

// Single EU x Ban interaction.
inline FitResult did_estimate(const Dataset& ds, const FitOptions& opts) {
    if (ds.n_users < 2) throw InferenceError("did: fewer than 2 clusters");
    const Eigen::Index n = ds.y.size();
    Eigen::MatrixXd terms(n, 1);
    for (Eigen::Index i = 0; i < n; ++i) {
        const size_t r = static_cast<size_t>(i);
        terms(i, 0) = (ds.treated[r] && opts.window.is_post(ds.date[r])) ? 1.0 : 0.0;
    }
    bool any_treated = false, any_control = false;
    for (uint8_t t : ds.treated) (t ? any_treated : any_control) = true;
    if (!any_treated || !any_control)
        throw IdentificationError("did: sample lacks treated or control users");
    FitResult fit = fit_twfe(ds, terms, {kDidTerm}, {true}, opts);
    summarize_fit(fit, kDidTerm);
    return fit;
}

inline const char* kWeek1Term = "eu_x_week1";
inline const char* kWeek2Term = "eu_x_week2";

// EU x first post week (7 days from the ban date) and EU x remainder.
inline FitResult weekly_interactions(const Dataset& ds, const FitOptions& opts) {
    if (opts.window.n_post_days() < 8)
        throw ConfigError("weekly interactions: post period shorter than 8 days");
    const Date week2_start = opts.window.ban_date + 7;
    const Eigen::Index n = ds.y.size();
    Eigen::MatrixXd terms(n, 2);
    for (Eigen::Index i = 0; i < n; ++i) {
        const size_t r = static_cast<size_t>(i);
        const bool post = opts.window.is_post(ds.date[r]);
        const bool w1 = post && ds.date[r] < week2_start;
        const bool w2 = post && ds.date[r] >= week2_start;
        terms(i, 0) = (ds.treated[r] && w1) ? 1.0 : 0.0;
        terms(i, 1) = (ds.treated[r] && w2) ? 1.0 : 0.0;
    }
    FitResult fit = fit_twfe(ds, terms, {kWeek1Term, kWeek2Term}, {true, true}, opts);
    summarize_fit(fit, kWeek1Term);
    return fit;
}

struct EventPoint {
    std::string term;
    Date from;
    Date to;
    double coef = 0.0;
    double se = 0.0;
    double lo = 0.0;
    double hi = 0.0;
    bool reference = false;
    bool dropped = false; // bin had no identifying observations
};

struct EventStudyResult {
    std::vector<EventPoint> points; // chronological, reference included
    FitResult fit;
};

using DateRange = std::pair<Date, Date>; // inclusive

// Daily mode is the singleton-bin case; both run through one demeaned design
// path. Bins plus the reference day must tile the study window exactly.
inline EventStudyResult event_study(const Dataset& ds, Date reference_day,
                                    std::vector<DateRange> bins, const FitOptions& opts) {
    const StudyWindow& w = opts.window;
    if (!w.contains(reference_day))
        throw ConfigError("event study: reference day outside the window");
    if (bins.empty()) {
        for (Date d = w.start; d <= w.end; d += 1)
            if (d != reference_day) bins.push_back({d, d});
    }
    std::vector<int> covered(static_cast<size_t>(w.n_days()), 0);
    for (const auto& [from, to] : bins) {
        if (from > to) throw ConfigError("event study: empty bin");
        for (Date d = from; d <= to; d += 1) {
            if (!w.contains(d)) throw ConfigError("event study: bin outside the window");
            if (d == reference_day)
                throw ConfigError("event study: bin contains the reference day");
            ++covered[static_cast<size_t>(d - w.start)];
        }
    }
    for (Date d = w.start; d <= w.end; d += 1) {
        const int c = covered[static_cast<size_t>(d - w.start)];
        if (d == reference_day) continue;
        if (c == 0)
            throw ConfigError("event study: day " + to_string(d) + " not covered by any bin");
        if (c > 1) throw ConfigError("event study: overlapping bins at " + to_string(d));
    }
    bool ref_has_obs = false;
    for (const Date& d : ds.date)
        if (d == reference_day) ref_has_obs = true;
    if (!ref_has_obs) throw DataError("event study: reference day has no observations");

    std::sort(bins.begin(), bins.end());
    const Eigen::Index n = ds.y.size();
    Eigen::MatrixXd terms = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(bins.size()));
    std::vector<std::string> names;
    names.reserve(bins.size());
    for (const auto& [from, to] : bins) {
        std::string name = "eu_x_" + to_string(from);
        if (to != from) name += "_" + to_string(to);
        names.push_back(std::move(name));
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        const size_t r = static_cast<size_t>(i);
        if (!ds.treated[r]) continue;
        for (size_t b = 0; b < bins.size(); ++b) {
            if (ds.date[r] >= bins[b].first && ds.date[r] <= bins[b].second) {
                terms(i, static_cast<Eigen::Index>(b)) = 1.0;
                break;
            }
        }
    }
    // bins with no observations are reported as dropped, not required
    std::vector<bool> required(bins.size(), false);
    EventStudyResult result;
    result.fit = fit_twfe(ds, terms, names, required, opts);

    for (size_t b = 0; b < bins.size(); ++b) {
        EventPoint p;
        p.term = names[b];
        p.from = bins[b].first;
        p.to = bins[b].second;
        if (result.fit.has(names[b])) {
            p.coef = result.fit.coef(names[b]);
            p.se = result.fit.se(names[b]);
            p.lo = p.coef - 1.96 * p.se;
            p.hi = p.coef + 1.96 * p.se;
        } else {
            p.dropped = true;
        }
        result.points.push_back(p);
    }
    EventPoint ref;
    ref.term = "reference";
    ref.from = ref.to = reference_day;
    ref.reference = true; // pinned at 0 with se 0
    result.points.push_back(ref);
    std::sort(result.points.begin(), result.points.end(),
              [](const EventPoint& a, const EventPoint& b) { return a.from < b.from; });
    return result;
}

// ---------------------------------------------------------------------------
// Imputation estimator: user and day effects fitted on untreated cells only
// (control users' cells plus treated users' pre-ban cells), counterfactuals
// imputed for treated post cells, ATT = mean(actual - imputed). Standard
// error from a nonparametric bootstrap over users.
// ---------------------------------------------------------------------------

struct ImputationResult {
    double att = 0.0;
    double se = 0.0;
    size_t n_treated_post = 0;
    int n_boot_ok = 0;
    int n_boot_failed = 0;
    std::vector<std::string> dropped_users; // treated users without pre-ban cells
};

namespace detail {

struct FeFit {
    std::vector<double> alpha; // user effects
    std::vector<double> gamma; // day effects
};

// Backfitting on the untreated subset. Days that never appear untreated stay
// unidentified; callers must check coverage of their imputation targets.
inline FeFit fit_fe_on(const std::vector<double>& y, const std::vector<int>& user,
                       const std::vector<int>& day, const std::vector<char>& use, int n_users,
                       int n_days, double tol, int max_iter) {
    FeFit fe;
    fe.alpha.assign(static_cast<size_t>(n_users), 0.0);
    fe.gamma.assign(static_cast<size_t>(n_days), 0.0);
    std::vector<double> user_sum(n_users), day_sum(n_days);
    std::vector<int> user_cnt(n_users, 0), day_cnt(n_days, 0);
    for (size_t i = 0; i < y.size(); ++i) {
        if (!use[i]) continue;
        ++user_cnt[user[i]];
        ++day_cnt[day[i]];
    }
    for (int iter = 0; iter < max_iter; ++iter) {
        double delta = 0.0;
        std::fill(user_sum.begin(), user_sum.end(), 0.0);
        for (size_t i = 0; i < y.size(); ++i)
            if (use[i]) user_sum[user[i]] += y[i] - fe.gamma[day[i]];
        for (int u = 0; u < n_users; ++u) {
            if (user_cnt[u] == 0) continue;
            const double next = user_sum[u] / user_cnt[u];
            delta = std::max(delta, std::abs(next - fe.alpha[u]));
            fe.alpha[u] = next;
        }
        std::fill(day_sum.begin(), day_sum.end(), 0.0);
        for (size_t i = 0; i < y.size(); ++i)
            if (use[i]) day_sum[day[i]] += y[i] - fe.alpha[user[i]];
        for (int d = 0; d < n_days; ++d) {
            if (day_cnt[d] == 0) continue;
            const double next = day_sum[d] / day_cnt[d];
            delta = std::max(delta, std::abs(next - fe.gamma[d]));
            fe.gamma[d] = next;
        }
        if (delta < tol) return fe;
    }
    throw EstimationError("imputation: fixed-effect fit did not converge");
}

} // namespace detail

inline ImputationResult imputation_att(const Dataset& ds, const FitOptions& opts,
                                       int n_boot = 499, uint64_t seed = 20220302) {
    const size_t n = ds.n();
    if (n == 0) throw DataError("imputation: empty estimation sample");

    // cells of treated users split into pre (untreated) and post (targets)
    std::vector<char> is_target(n, 0);
    std::vector<char> user_has_pre(static_cast<size_t>(ds.n_users), 0);
    std::vector<char> user_treated(static_cast<size_t>(ds.n_users), 0);
    for (size_t i = 0; i < n; ++i) {
        if (ds.treated[i]) {
            user_treated[static_cast<size_t>(ds.user_idx[i])] = 1;
            if (opts.window.is_post(ds.date[i])) is_target[i] = 1;
            else user_has_pre[static_cast<size_t>(ds.user_idx[i])] = 1;
        }
    }

    ImputationResult result;
    std::vector<char> user_dropped(static_cast<size_t>(ds.n_users), 0);
    for (int u = 0; u < ds.n_users; ++u) {
        if (user_treated[static_cast<size_t>(u)] && !user_has_pre[static_cast<size_t>(u)]) {
            user_dropped[static_cast<size_t>(u)] = 1;
            result.dropped_users.push_back(ds.user_ids[static_cast<size_t>(u)]);
        }
    }

    std::vector<double> yv(n);
    for (size_t i = 0; i < n; ++i) yv[i] = ds.y[static_cast<Eigen::Index>(i)];

    // full-sample estimate
    {
        std::vector<char> use(n, 0);
        size_t n_untreated = 0;
        for (size_t i = 0; i < n; ++i) {
            if (user_dropped[static_cast<size_t>(ds.user_idx[i])]) continue;
            if (!is_target[i]) {
                use[i] = 1;
                ++n_untreated;
            }
        }
        if (n_untreated == 0)
            throw DataError("imputation: no untreated cells to fit fixed effects");
        const auto fe = detail::fit_fe_on(yv, ds.user_idx, ds.day_idx, use, ds.n_users,
                                          ds.n_days, opts.demean_tol, opts.demean_max_iter);
        std::vector<int> day_untreated(static_cast<size_t>(ds.n_days), 0);
        for (size_t i = 0; i < n; ++i)
            if (use[i]) ++day_untreated[static_cast<size_t>(ds.day_idx[i])];
        std::vector<double> effects;
        for (size_t i = 0; i < n; ++i) {
            if (!is_target[i] || user_dropped[static_cast<size_t>(ds.user_idx[i])]) continue;
            if (day_untreated[static_cast<size_t>(ds.day_idx[i])] == 0)
                throw DataError("imputation: day " + to_string(ds.date[i]) +
                                " has no untreated cells, effect unidentified");
            effects.push_back(yv[i] - fe.alpha[static_cast<size_t>(ds.user_idx[i])] -
                              fe.gamma[static_cast<size_t>(ds.day_idx[i])]);
        }
        if (effects.empty()) throw DataError("imputation: no treated post-ban cells");
        result.att = mean_of(effects);
        result.n_treated_post = effects.size();
    }

    // cluster bootstrap over users; each draw relabels sampled users as
    // distinct clusters
    std::vector<std::vector<int>> rows_of_user(static_cast<size_t>(ds.n_users));
    for (size_t i = 0; i < n; ++i)
        rows_of_user[static_cast<size_t>(ds.user_idx[i])].push_back(static_cast<int>(i));

    Rng rng(seed);
    std::vector<double> boot_atts;
    boot_atts.reserve(static_cast<size_t>(n_boot));
    for (int b = 0; b < n_boot; ++b) {
        std::vector<double> by;
        std::vector<int> buser, bday;
        std::vector<char> buse, btarget;
        int bu = 0;
        for (int drawn = 0; drawn < ds.n_users; ++drawn) {
            const int u = static_cast<int>(rng.below(static_cast<uint64_t>(ds.n_users)));
            if (user_dropped[static_cast<size_t>(u)]) {
                // keep the draw count aligned; dropped users contribute nothing
                continue;
            }
            for (int row : rows_of_user[static_cast<size_t>(u)]) {
                const size_t r = static_cast<size_t>(row);
                by.push_back(yv[r]);
                buser.push_back(bu);
                bday.push_back(ds.day_idx[r]);
                btarget.push_back(is_target[r]);
                buse.push_back(!is_target[r]);
            }
            ++bu;
        }
        std::vector<int> day_untreated(static_cast<size_t>(ds.n_days), 0);
        for (size_t i = 0; i < by.size(); ++i)
            if (buse[i]) ++day_untreated[static_cast<size_t>(bday[i])];
        bool ok = false;
        for (char t : btarget) ok = ok || t;
        if (!ok) {
            ++result.n_boot_failed;
            continue;
        }
        bool identified = true;
        for (size_t i = 0; i < by.size(); ++i)
            if (btarget[i] && day_untreated[static_cast<size_t>(bday[i])] == 0) identified = false;
        if (!identified || by.empty()) {
            ++result.n_boot_failed;
            continue;
        }
        try {
            const auto fe = detail::fit_fe_on(by, buser, bday, buse, bu, ds.n_days,
                                              opts.demean_tol, opts.demean_max_iter);
            std::vector<double> effects;
            for (size_t i = 0; i < by.size(); ++i)
                if (btarget[i])
                    effects.push_back(by[i] - fe.alpha[static_cast<size_t>(buser[i])] -
                                      fe.gamma[static_cast<size_t>(bday[i])]);
            boot_atts.push_back(mean_of(effects));
        } catch (const EstimationError&) {
            ++result.n_boot_failed;
        }
    }
    result.n_boot_ok = static_cast<int>(boot_atts.size());
    result.se = boot_atts.size() >= 2 ? sample_sd(boot_atts) : 0.0;
    return result;
}

} // namespace slantlab
