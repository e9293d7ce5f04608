#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "relclust/cluster.hpp"
#include "relclust/errors.hpp"
#include "relclust/matrix.hpp"
#include "relclust/nets.hpp"

namespace relclust {

/// Everything the training pipeline learns. `parameters()` is the stable
/// flat ordering shared by the optimizer, its gradients, and checkpoints.
struct ModelState {
    AeParams ae;
    GaeParams gae;
    FusionParams fusion;
    Matrix centroids;     // k x latent, trainable after initialization
    Matrix centroids_q2;  // separate centroid sets for the auxiliary
    Matrix centroids_q3;  // assignments; empty when centroids are shared
    Matrix z_pre;         // n x latent cached clean latent used for edge scoring

    std::vector<Matrix*> parameters() {
        std::vector<Matrix*> out = ae.parameters();
        for (Matrix* p : gae.parameters()) out.push_back(p);
        for (Matrix* p : fusion.parameters()) out.push_back(p);
        out.push_back(&centroids);
        if (centroids_q2.size() > 0) out.push_back(&centroids_q2);
        if (centroids_q3.size() > 0) out.push_back(&centroids_q3);
        return out;
    }
};

/// A resumable snapshot: the model plus optimizer moments and phase progress.
struct TrainerCheckpoint {
    ModelState model;
    std::string phase;  // which pipeline stage produced this snapshot
    int epoch = 0;      // epochs completed within that stage
    std::int64_t adam_step = 0;
    std::vector<Matrix> adam_m, adam_v;  // aligned with model.parameters(); may be empty
};

namespace detail {

struct TensorRecord {
    std::string name;
    const Matrix* tensor;
};

inline void collect_records(const TrainerCheckpoint& ck, std::vector<TensorRecord>& out) {
    const auto add = [&](const std::string& name, const Matrix& m) {
        out.push_back({name, &m});
    };
    for (std::size_t i = 0; i < ck.model.ae.enc_w.size(); ++i) {
        add("ae.enc_w." + std::to_string(i), ck.model.ae.enc_w[i]);
        add("ae.enc_b." + std::to_string(i), ck.model.ae.enc_b[i]);
    }
    for (std::size_t i = 0; i < ck.model.ae.dec_w.size(); ++i) {
        add("ae.dec_w." + std::to_string(i), ck.model.ae.dec_w[i]);
        add("ae.dec_b." + std::to_string(i), ck.model.ae.dec_b[i]);
    }
    for (std::size_t i = 0; i < ck.model.gae.enc_w.size(); ++i)
        add("gae.enc_w." + std::to_string(i), ck.model.gae.enc_w[i]);
    for (std::size_t i = 0; i < ck.model.gae.dec_w.size(); ++i)
        add("gae.dec_w." + std::to_string(i), ck.model.gae.dec_w[i]);
    add("fusion.w1", ck.model.fusion.w1);
    add("fusion.w2", ck.model.fusion.w2);
    add("fusion.delta", ck.model.fusion.delta);
    if (ck.model.centroids.size() > 0) add("centroids", ck.model.centroids);
    if (ck.model.centroids_q2.size() > 0) add("centroids_q2", ck.model.centroids_q2);
    if (ck.model.centroids_q3.size() > 0) add("centroids_q3", ck.model.centroids_q3);
    if (ck.model.z_pre.size() > 0) add("z_pre", ck.model.z_pre);
    for (std::size_t i = 0; i < ck.adam_m.size(); ++i)
        add("adam.m." + std::to_string(i), ck.adam_m[i]);
    for (std::size_t i = 0; i < ck.adam_v.size(); ++i)
        add("adam.v." + std::to_string(i), ck.adam_v[i]);
}

/// Appends `m` to `list`, requiring the dotted index to arrive in order.
inline void place_indexed(std::vector<Matrix>& list, const std::string& name, std::size_t index,
                          Matrix m) {
    if (index != list.size())
        throw parse_error("checkpoint: tensor '" + name + "' arrived out of order");
    list.push_back(std::move(m));
}

}  // namespace detail

/// Writes manifest.json (names + shapes + counters) and tensors.bin (raw
/// native-endian doubles, manifest order) into `dir`.
inline void save_checkpoint(const std::string& dir, const TrainerCheckpoint& ck) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);

    std::vector<detail::TensorRecord> records;
    detail::collect_records(ck, records);

    nlohmann::json manifest;
    manifest["format"] = "relclust-checkpoint";
    manifest["version"] = 1;
    manifest["phase"] = ck.phase;
    manifest["epoch"] = ck.epoch;
    manifest["adam_step"] = ck.adam_step;
    nlohmann::json tensors = nlohmann::json::array();
    for (const auto& r : records)
        tensors.push_back({{"name", r.name}, {"rows", r.tensor->rows()}, {"cols", r.tensor->cols()}});
    manifest["tensors"] = std::move(tensors);

    std::ofstream mf(dir + "/manifest.json");
    if (!mf) throw structural_error("checkpoint: cannot write " + dir + "/manifest.json");
    mf << manifest.dump(2) << '\n';

    std::ofstream bin(dir + "/tensors.bin", std::ios::binary);
    if (!bin) throw structural_error("checkpoint: cannot write " + dir + "/tensors.bin");
    for (const auto& r : records)
        bin.write(reinterpret_cast<const char*>(r.tensor->data()),
                  static_cast<std::streamsize>(r.tensor->size() * sizeof(double)));
    if (!bin) throw structural_error("checkpoint: short write to " + dir + "/tensors.bin");
}

inline TrainerCheckpoint load_checkpoint(const std::string& dir) {
    const std::string manifest_path = dir + "/manifest.json";
    std::ifstream mf(manifest_path);
    if (!mf) throw structural_error("checkpoint: cannot open " + manifest_path);
    nlohmann::json manifest;
    try {
        mf >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw parse_error(manifest_path + ": " + e.what());
    }
    if (manifest.value("format", "") != "relclust-checkpoint")
        throw parse_error(manifest_path + ": not a checkpoint manifest");
    if (manifest.value("version", 0) != 1)
        throw parse_error(manifest_path + ": unsupported checkpoint version");

    TrainerCheckpoint ck;
    ck.phase = manifest.value("phase", "");
    ck.epoch = manifest.value("epoch", 0);
    ck.adam_step = manifest.value("adam_step", std::int64_t{0});

    const std::string bin_path = dir + "/tensors.bin";
    std::ifstream bin(bin_path, std::ios::binary);
    if (!bin) throw structural_error("checkpoint: cannot open " + bin_path);

    for (const auto& entry : manifest.at("tensors")) {
        const std::string name = entry.at("name").get<std::string>();
        const int rows = entry.at("rows").get<int>();
        const int cols = entry.at("cols").get<int>();
        if (rows < 0 || cols < 0)
            throw parse_error(manifest_path + ": tensor '" + name + "' has negative shape");
        Matrix m(rows, cols);
        bin.read(reinterpret_cast<char*>(m.data()),
                 static_cast<std::streamsize>(m.size() * sizeof(double)));
        if (!bin)
            throw parse_error(bin_path + ": truncated while reading tensor '" + name + "'");
        check_finite(m, "checkpoint tensor");

        const std::size_t dot = name.rfind('.');
        const auto indexed = [&](const char* prefix) {
            return name.rfind(prefix, 0) == 0 && dot != std::string::npos;
        };
        const auto index = [&] {
            return static_cast<std::size_t>(std::stoul(name.substr(dot + 1)));
        };
        if (indexed("ae.enc_w."))
            detail::place_indexed(ck.model.ae.enc_w, name, index(), std::move(m));
        else if (indexed("ae.enc_b."))
            detail::place_indexed(ck.model.ae.enc_b, name, index(), std::move(m));
        else if (indexed("ae.dec_w."))
            detail::place_indexed(ck.model.ae.dec_w, name, index(), std::move(m));
        else if (indexed("ae.dec_b."))
            detail::place_indexed(ck.model.ae.dec_b, name, index(), std::move(m));
        else if (indexed("gae.enc_w."))
            detail::place_indexed(ck.model.gae.enc_w, name, index(), std::move(m));
        else if (indexed("gae.dec_w."))
            detail::place_indexed(ck.model.gae.dec_w, name, index(), std::move(m));
        else if (name == "fusion.w1")
            ck.model.fusion.w1 = std::move(m);
        else if (name == "fusion.w2")
            ck.model.fusion.w2 = std::move(m);
        else if (name == "fusion.delta")
            ck.model.fusion.delta = std::move(m);
        else if (name == "centroids")
            ck.model.centroids = std::move(m);
        else if (name == "centroids_q2")
            ck.model.centroids_q2 = std::move(m);
        else if (name == "centroids_q3")
            ck.model.centroids_q3 = std::move(m);
        else if (name == "z_pre")
            ck.model.z_pre = std::move(m);
        else if (indexed("adam.m."))
            detail::place_indexed(ck.adam_m, name, index(), std::move(m));
        else if (indexed("adam.v."))
            detail::place_indexed(ck.adam_v, name, index(), std::move(m));
        else
            throw parse_error(manifest_path + ": unknown tensor name '" + name + "'");
    }
    bin.peek();
    if (!bin.eof()) throw parse_error(bin_path + ": trailing bytes after last tensor");

    if (ck.model.ae.enc_w.size() != ck.model.ae.enc_b.size() ||
        ck.model.ae.dec_w.size() != ck.model.ae.dec_b.size())
        throw parse_error(manifest_path + ": autoencoder weight/bias counts disagree");
    if (!ck.adam_m.empty() && ck.adam_m.size() != ck.adam_v.size())
        throw parse_error(manifest_path + ": optimizer moment counts disagree");
    return ck;
}

}  // namespace relclust
