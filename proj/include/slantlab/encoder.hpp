#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "slantlab/common.hpp"
#include "slantlab/csv.hpp"
#include "slantlab/text.hpp"

namespace slantlab {

using Vec = std::vector<double>;

inline bool all_finite(const Vec& v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

inline double l2_norm(const Vec& v) {
    std::vector<double> sq(v.size());
    for (size_t i = 0; i < v.size(); ++i) sq[i] = v[i] * v[i];
    return std::sqrt(pairwise_sum(sq));
}

// dot(a,b) / (|a||b|), clamped to [-1, 1]. Pairwise summation keeps the
// result independent of element order to ~1e-13.
inline double cosine_similarity(const Vec& a, const Vec& b) {
    if (a.size() != b.size())
        throw DomainError("cosine: dimension mismatch (" + std::to_string(a.size()) + " vs " +
                          std::to_string(b.size()) + ")");
    std::vector<double> prod(a.size());
    for (size_t i = 0; i < a.size(); ++i) prod[i] = a[i] * b[i];
    const double na = l2_norm(a), nb = l2_norm(b);
    if (na == 0.0 || nb == 0.0) throw DomainError("cosine: zero-norm vector");
    const double sim = pairwise_sum(prod) / (na * nb);
    return std::max(-1.0, std::min(1.0, sim));
}

// Deterministic text encoder: signed feature hashing over character n-grams
// (default 3..5), L2 normalized. Texts shorter than the minimum n-gram
// length contribute the whole text as a single gram so nonempty text never
// maps to the zero vector.
class HashedNgramEncoder {
public:
    HashedNgramEncoder(int dim, uint64_t seed, int ngram_min = 3, int ngram_max = 5,
                       bool preprocess = false)
        : dim_(dim), seed_(seed), ngram_min_(ngram_min), ngram_max_(ngram_max),
          preprocess_(preprocess) {
        if (dim <= 0) throw ConfigError("encoder: dim must be positive");
        if (ngram_min <= 0 || ngram_max < ngram_min)
            throw ConfigError("encoder: bad ngram range");
    }

    int dim() const { return dim_; }
    uint64_t seed() const { return seed_; }

    // Bag of per-word character n-grams: grams never cross word boundaries,
    // and bucket updates are exact integer increments, so any word-order
    // permutation of a bag-equal text produces a bit-identical vector.
    Vec encode(std::string_view text) const {
        std::string cleaned;
        if (preprocess_) {
            cleaned = strip_urls(text);
            text = cleaned;
        }
        Vec v(static_cast<size_t>(dim_), 0.0);
        if (text.empty()) return v;
        for (auto word : split_whitespace(text)) {
            const size_t len = word.size();
            if (len < static_cast<size_t>(ngram_min_)) {
                add_gram(v, word);
                continue;
            }
            for (int n = ngram_min_; n <= ngram_max_; ++n) {
                if (len < static_cast<size_t>(n)) break;
                for (size_t i = 0; i + n <= len; ++i) add_gram(v, word.substr(i, n));
            }
        }
        const double norm = l2_norm(v);
        if (norm == 0.0) {
            // signed buckets cancelled exactly (or whitespace-only text);
            // pin a deterministic slot so the vector is nonzero
            v[static_cast<size_t>(fnv1a64(text, seed_) % dim_)] = 1.0;
            return v;
        }
        for (double& x : v) x /= norm;
        return v;
    }

private:
    void add_gram(Vec& v, std::string_view gram) const {
        const uint64_t h = fnv1a64(gram, seed_ ^ 0x5eedf00d12345678ull);
        const size_t idx = static_cast<size_t>(h % static_cast<uint64_t>(dim_));
        v[idx] += ((h >> 32) & 1) ? 1.0 : -1.0;
    }

    int dim_;
    uint64_t seed_;
    int ngram_min_;
    int ngram_max_;
    bool preprocess_;
};

// id -> vector table loaded from a precomputed-embedding file. CSV rows are
// keyed by the literal id; the binary layout is keyed by fnv1a64(id).
class PrecomputedTable {
public:
    PrecomputedTable() = default;

    int dim() const { return dim_; }
    size_t size() const { return by_id_.size() + by_hash_.size(); }

    void insert(const std::string& id, Vec v) {
        check_dim(v);
        by_id_[id] = std::move(v);
    }
    void insert_hashed(uint64_t id_hash, Vec v) {
        check_dim(v);
        by_hash_[id_hash] = std::move(v);
    }

    const Vec& lookup(const std::string& id) const {
        auto it = by_id_.find(id);
        if (it != by_id_.end()) return it->second;
        auto ith = by_hash_.find(fnv1a64(id));
        if (ith != by_hash_.end()) return ith->second;
        throw DataError("embedding lookup: no vector for id '" + id + "'");
    }

    bool contains(const std::string& id) const {
        return by_id_.count(id) > 0 || by_hash_.count(fnv1a64(id)) > 0;
    }

    const std::unordered_map<std::string, Vec>& by_id() const { return by_id_; }

private:
    void check_dim(const Vec& v) {
        if (dim_ == 0) dim_ = static_cast<int>(v.size());
        else if (dim_ != static_cast<int>(v.size()))
            throw DataError("embedding table: inconsistent dimension");
    }

    int dim_ = 0;
    std::unordered_map<std::string, Vec> by_id_;
    std::unordered_map<uint64_t, Vec> by_hash_;
};

// CSV layout: id,v0,v1,...,v{d-1}, no header.
inline PrecomputedTable load_embeddings_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("embeddings: cannot open '" + path + "'");
    PrecomputedTable table;
    std::string line;
    size_t line_no = 0;
    size_t expected = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto fields = csv::parse_line(line);
        if (fields.size() < 2)
            throw DataError("embeddings: line " + std::to_string(line_no) + ": too few fields");
        if (expected == 0) expected = fields.size();
        if (fields.size() != expected)
            throw DataError("embeddings: line " + std::to_string(line_no) + ": ragged row (" +
                            std::to_string(fields.size() - 1) + " values, expected " +
                            std::to_string(expected - 1) + ")");
        Vec v(fields.size() - 1);
        for (size_t i = 1; i < fields.size(); ++i) {
            try {
                v[i - 1] = std::stod(fields[i]);
            } catch (const std::exception&) {
                throw DataError("embeddings: line " + std::to_string(line_no) +
                                ": unparseable value");
            }
            if (!std::isfinite(v[i - 1]))
                throw DataError("embeddings: line " + std::to_string(line_no) +
                                ": non-finite value");
        }
        table.insert(fields[0], std::move(v));
    }
    return table;
}

inline void save_embeddings_csv(const PrecomputedTable& table, const std::string& path) {
    std::vector<const std::string*> ids;
    ids.reserve(table.by_id().size());
    for (const auto& [id, _] : table.by_id()) ids.push_back(&id);
    std::sort(ids.begin(), ids.end(),
              [](const std::string* a, const std::string* b) { return *a < *b; });
    csv::Writer w(path);
    for (const auto* id : ids) {
        const Vec& v = table.by_id().at(*id);
        std::vector<std::string> row;
        row.reserve(v.size() + 1);
        row.push_back(*id);
        for (double x : v) row.push_back(csv::format_double(x));
        w.row(row);
    }
}

// Binary layout: magic "EMB1", u32 dim, then records of
// (u64 fnv1a64(id), dim little-endian f32).
inline PrecomputedTable load_embeddings_emb1(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("embeddings: cannot open '" + path + "'");
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, "EMB1", 4) != 0)
        throw DataError("embeddings: '" + path + "' is not an EMB1 file");
    uint32_t dim = 0;
    if (!in.read(reinterpret_cast<char*>(&dim), 4) || dim == 0)
        throw DataError("embeddings: bad dimension in '" + path + "'");
    PrecomputedTable table;
    for (;;) {
        uint64_t key = 0;
        if (!in.read(reinterpret_cast<char*>(&key), 8)) break;
        std::vector<float> raw(dim);
        if (!in.read(reinterpret_cast<char*>(raw.data()), dim * sizeof(float)))
            throw DataError("embeddings: truncated record in '" + path + "'");
        Vec v(dim);
        for (uint32_t i = 0; i < dim; ++i) {
            if (!std::isfinite(raw[i]))
                throw DataError("embeddings: non-finite value in '" + path + "'");
            v[i] = static_cast<double>(raw[i]);
        }
        table.insert_hashed(key, std::move(v));
    }
    return table;
}

inline void save_embeddings_emb1(const PrecomputedTable& table, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("embeddings: cannot write '" + path + "'");
    out.write("EMB1", 4);
    const uint32_t dim = static_cast<uint32_t>(table.dim());
    out.write(reinterpret_cast<const char*>(&dim), 4);
    std::vector<const std::string*> ids;
    ids.reserve(table.by_id().size());
    for (const auto& [id, _] : table.by_id()) ids.push_back(&id);
    std::sort(ids.begin(), ids.end(),
              [](const std::string* a, const std::string* b) { return *a < *b; });
    for (const auto* id : ids) {
        const uint64_t key = fnv1a64(*id);
        out.write(reinterpret_cast<const char*>(&key), 8);
        const Vec& v = table.by_id().at(*id);
        for (double x : v) {
            const float f = static_cast<float>(x);
            out.write(reinterpret_cast<const char*>(&f), 4);
        }
    }
}

inline PrecomputedTable load_embeddings(const std::string& path) {
    std::ifstream probe(path, std::ios::binary);
    if (!probe) throw DataError("embeddings: cannot open '" + path + "'");
    char magic[4] = {0, 0, 0, 0};
    probe.read(magic, 4);
    probe.close();
    if (std::memcmp(magic, "EMB1", 4) == 0) return load_embeddings_emb1(path);
    return load_embeddings_csv(path);
}

// Pluggable backend: precomputed table keyed by document id, or the hashed
// n-gram model over the text. Both are immutable and deterministic.
class EncoderBackend {
public:
    static EncoderBackend precomputed(PrecomputedTable table) {
        EncoderBackend b;
        b.table_ = std::move(table);
        return b;
    }
    static EncoderBackend hashed(HashedNgramEncoder enc) {
        EncoderBackend b;
        b.hashed_ = std::move(enc);
        return b;
    }

    bool is_precomputed() const { return table_.has_value(); }

    int dim() const { return table_ ? table_->dim() : hashed_->dim(); }

    // Precomputed backends resolve by id; the hashed backend embeds the text.
    Vec encode(const std::string& id, std::string_view text) const {
        if (table_) return table_->lookup(id);
        return hashed_->encode(text);
    }

    const PrecomputedTable& table() const {
        if (!table_) throw DomainError("encoder: not a precomputed backend");
        return *table_;
    }

private:
    EncoderBackend() = default;
    std::optional<PrecomputedTable> table_;
    std::optional<HashedNgramEncoder> hashed_;
};

} // namespace slantlab
