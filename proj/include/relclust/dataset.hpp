#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "relclust/errors.hpp"
#include "relclust/graph.hpp"
#include "relclust/matrix.hpp"
#include "relclust/rng.hpp"
#include "relclust/textio.hpp"

namespace relclust {

// Dataset directory layout:
//   attributes.tsv  n rows of d tab-separated reals (required)
//   edges.tsv       one "u<TAB>v" pair per line, 0-based, each edge once
//   labels.tsv      optional, one integer per line
//   manifest.txt    optional "key: value" lines; `knn: k` builds the graph
//                   from attributes when edges.tsv is absent

struct DatasetManifest {
    int knn = 0;       // build a k-nearest-neighbor graph when > 0
    int clusters = 0;  // ground-truth cluster count hint for the CLI
    std::map<std::string, std::string> extra;
};

inline Matrix load_attributes(const std::string& path) {
    const auto lines = detail::read_lines(path);
    if (lines.empty()) throw parse_error(path + ": no attribute rows");
    const int cols = static_cast<int>(detail::split(lines[0].second, '\t').size());
    Matrix x(static_cast<int>(lines.size()), cols);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const auto fields = detail::split(lines[i].second, '\t');
        if (static_cast<int>(fields.size()) != cols)
            throw parse_error(path + ": line " + std::to_string(lines[i].first) +
                              ": expected " + std::to_string(cols) + " columns, got " +
                              std::to_string(fields.size()));
        for (int j = 0; j < cols; ++j)
            x(static_cast<int>(i), j) = detail::parse_real(fields[j], path, lines[i].first);
    }
    check_finite(x, "attributes");
    return x;
}

inline std::vector<std::pair<int, int>> load_edges(const std::string& path, int n) {
    std::vector<std::pair<int, int>> edges;
    std::set<std::pair<int, int>> seen;
    bool redundant = false;
    for (const auto& [no, line] : detail::read_lines(path)) {
        const auto fields = detail::split(line, '\t');
        if (fields.size() != 2)
            throw parse_error(path + ": line " + std::to_string(no) +
                              ": expected 2 columns, got " + std::to_string(fields.size()));
        const long u = detail::parse_integer(fields[0], path, no);
        const long v = detail::parse_integer(fields[1], path, no);
        if (u < 0 || u >= n || v < 0 || v >= n)
            throw parse_error(path + ": line " + std::to_string(no) + ": node id out of [0, " +
                              std::to_string(n) + ")");
        if (u == v)
            throw parse_error(path + ": line " + std::to_string(no) + ": self-loop on node " +
                              std::to_string(u));
        const std::pair<int, int> canon{static_cast<int>(std::min(u, v)),
                                        static_cast<int>(std::max(u, v))};
        if (!seen.insert(canon).second) {
            redundant = true;  // listed twice or in both directions
            continue;
        }
        edges.push_back(canon);
    }
    if (redundant)
        warn(path + ": edge list is not symmetric-free; duplicate/reversed pairs merged");
    return edges;
}

inline std::vector<int> load_labels(const std::string& path, int n) {
    std::vector<int> labels;
    for (const auto& [no, line] : detail::read_lines(path))
        labels.push_back(static_cast<int>(detail::parse_integer(line, path, no)));
    if (static_cast<int>(labels.size()) != n)
        throw parse_error(path + ": expected " + std::to_string(n) + " labels, got " +
                          std::to_string(labels.size()));
    return labels;
}

inline DatasetManifest load_manifest(const std::string& path) {
    DatasetManifest m;
    for (const auto& [no, line] : detail::read_lines(path)) {
        if (line[0] == '#') continue;
        const std::size_t colon = line.find(':');
        if (colon == std::string::npos)
            throw parse_error(path + ": line " + std::to_string(no) +
                              ": expected 'key: value'");
        const std::string key = detail::trim(line.substr(0, colon));
        const std::string value = detail::trim(line.substr(colon + 1));
        if (key == "knn")
            m.knn = static_cast<int>(detail::parse_integer(value, path, no));
        else if (key == "clusters")
            m.clusters = static_cast<int>(detail::parse_integer(value, path, no));
        else
            m.extra[key] = value;
    }
    return m;
}

struct Dataset {
    Graph g;
    DatasetManifest manifest;
};

/// Loads a dataset directory; edges come from edges.tsv when present,
/// otherwise from a kNN graph over the attributes per the manifest.
inline Dataset load_dataset(const std::string& dir) {
    namespace fs = std::filesystem;
    const std::string attr_path = dir + "/attributes.tsv";
    if (!fs::exists(attr_path))
        throw structural_error("dataset: missing " + attr_path);

    Dataset ds;
    ds.g.x = load_attributes(attr_path);
    ds.g.n = ds.g.x.rows();

    const std::string manifest_path = dir + "/manifest.txt";
    if (fs::exists(manifest_path)) ds.manifest = load_manifest(manifest_path);

    const std::string edges_path = dir + "/edges.tsv";
    if (fs::exists(edges_path)) {
        ds.g.edges = load_edges(edges_path, ds.g.n);
    } else if (ds.manifest.knn > 0) {
        ds.g.edges = knn_edges(ds.g.x, ds.manifest.knn);
    } else {
        throw structural_error("dataset: " + dir +
                               " has neither edges.tsv nor a 'knn' manifest entry");
    }

    const std::string labels_path = dir + "/labels.tsv";
    if (fs::exists(labels_path)) ds.g.labels = load_labels(labels_path, ds.g.n);

    ds.g.finalize();
    return ds;
}

/// Writes a dataset directory in the exact format load_dataset reads.
inline void save_dataset(const std::string& dir, const Graph& g,
                         const std::vector<std::pair<std::string, std::string>>& manifest = {}) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);

    std::ofstream attrs(dir + "/attributes.tsv");
    for (int i = 0; i < g.n; ++i) {
        for (int j = 0; j < g.x.cols(); ++j) {
            if (j) attrs << '\t';
            attrs << detail::format_real(g.x(i, j));
        }
        attrs << '\n';
    }

    std::ofstream edges(dir + "/edges.tsv");
    for (const auto& [u, v] : g.edges) edges << u << '\t' << v << '\n';

    if (g.has_labels()) {
        std::ofstream labels(dir + "/labels.tsv");
        for (int y : g.labels) labels << y << '\n';
    }

    if (!manifest.empty()) {
        std::ofstream mf(dir + "/manifest.txt");
        for (const auto& [k, v] : manifest) mf << k << ": " << v << '\n';
    }
}

// ---------------------------------------------------------------------------
// Synthetic stochastic-block-model generator
// ---------------------------------------------------------------------------

struct SbmConfig {
    int n = 150;
    int k = 3;
    int d = 16;
    double p_in = 0.2;
    double p_out = 0.01;
    double mean_scale = 1.0;  // stddev of the Gaussian block means
    double noise = 0.6;       // per-coordinate attribute noise around the mean

    void validate() const {
        if (n < 2) throw config_error("sbm: n must be >= 2");
        if (k < 1 || k > n) throw config_error("sbm: k must lie in [1, n]");
        if (d < 1) throw config_error("sbm: d must be >= 1");
        if (p_in < 0.0 || p_in > 1.0 || p_out < 0.0 || p_out > 1.0)
            throw config_error("sbm: edge probabilities must lie in [0,1]");
        if (mean_scale <= 0.0 || noise < 0.0)
            throw config_error("sbm: mean_scale must be > 0 and noise >= 0");
    }
};

/// Blocks of near-equal size with Gaussian block-mean attributes and
/// independent within/between edge probabilities. Deterministic per seed.
inline Graph generate_sbm(const SbmConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Graph g;
    g.n = cfg.n;
    g.labels.resize(cfg.n);
    for (int i = 0; i < cfg.n; ++i)
        g.labels[i] = static_cast<int>((static_cast<long long>(i) * cfg.k) / cfg.n);

    Rng mean_rng = stream_rng(seed, 0x73626d31);
    Matrix means(cfg.k, cfg.d);
    for (std::size_t i = 0; i < means.size(); ++i)
        means.data()[i] = gaussian(mean_rng, 0.0, cfg.mean_scale);

    Rng attr_rng = stream_rng(seed, 0x73626d32);
    g.x = Matrix(cfg.n, cfg.d);
    for (int i = 0; i < cfg.n; ++i)
        for (int j = 0; j < cfg.d; ++j)
            g.x(i, j) = means(g.labels[i], j) + gaussian(attr_rng, 0.0, cfg.noise);

    Rng edge_rng = stream_rng(seed, 0x73626d33);
    for (int i = 0; i < cfg.n; ++i)
        for (int j = i + 1; j < cfg.n; ++j) {
            const double p = g.labels[i] == g.labels[j] ? cfg.p_in : cfg.p_out;
            if (uniform01(edge_rng) < p) g.edges.push_back({i, j});
        }

    g.finalize();
    return g;
}

}  // namespace relclust
