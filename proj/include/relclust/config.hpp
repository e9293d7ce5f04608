#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "relclust/errors.hpp"
#include "relclust/textio.hpp"

namespace relclust {

/// Every knob of the training pipeline with its default value. Keys are
/// globally unique; the INI sections in a config file are organizational.
struct RunConfig {
    // problem shape
    std::string dataset;  // dataset directory; may also come from the CLI
    int k = 0;            // number of clusters; must be set before training
    int latent = 20;
    std::string ae_widths = "128,256,512";  // encoder hidden widths, comma-separated
    std::string gae_widths = "128,256";
    bool gae_final_activation = false;  // apply tanh to the last graph-encoder layer

    // structure propagation and view augmentation
    double eta = 0.2;               // restart probability of the diffusion operator
    int diffusion_series_terms = 0;  // 0 = exact dense diffusion; >0 = truncated series
    double sigma_pert = 0.1;        // stddev of the multiplicative attribute noise
    double rho = 0.1;               // fraction of lowest-similarity edges marked per node

    // anchor sampling
    int m1 = 256;            // global anchors per epoch
    int m2 = 8;              // fixed local anchors per node
    double beta = 0.8;       // degree-damping base for sampling weights
    double log_base = 0.0;   // 0 = natural log in the degree damping
    bool symmetric_relation = false;  // second comparison uses view-1 anchors

    // loss weights
    double alpha = 0.1;     // adjacency-reconstruction weight inside the graph loss
    double epsilon = 5e3;   // propagated-smoothness regularizer weight
    double kappa = 10.0;    // self-training clustering loss weight

    // optimization
    double lr = 1e-3;
    int batch = 0;  // 0 = full graph; >0 = quadratic terms restricted to blocks
    int epochs_ae = 30;
    int epochs_gae = 30;
    int epochs_joint = 100;
    int epochs = 300;
    bool joint_include_fusion = true;  // fusion weights sit in the joint-phase optimizer
    bool shared_centroids = true;      // one centroid set serves all three assignments
    bool early_stop = false;
    double early_stop_tol = 1e-5;
    int early_stop_patience = 20;

    // randomness
    std::uint64_t seed_model = 1;
    std::uint64_t seed_augment = 2;
    std::uint64_t seed_sample = 3;

    /// Applies one textual override; throws config_error on unknown keys or
    /// unparseable values.
    void set(const std::string& key, const std::string& value);

    void validate() const;

    std::vector<int> ae_hidden() const { return parse_widths(ae_widths, "ae_widths"); }
    std::vector<int> gae_hidden() const { return parse_widths(gae_widths, "gae_widths"); }

   private:
    static std::vector<int> parse_widths(const std::string& text, const char* key) {
        std::vector<int> widths;
        for (const std::string& part : detail::split(text, ',')) {
            const std::string t = detail::trim(part);
            char* end = nullptr;
            const long w = std::strtol(t.c_str(), &end, 10);
            if (t.empty() || end != t.c_str() + t.size() || w < 1)
                throw config_error(std::string(key) + ": bad width '" + part + "' in '" + text +
                                   "'");
            widths.push_back(static_cast<int>(w));
        }
        if (widths.empty()) throw config_error(std::string(key) + ": no widths given");
        return widths;
    }
};

namespace detail {

inline bool parse_bool(const std::string& key, const std::string& value) {
    const std::string t = trim(value);
    if (t == "true" || t == "1") return true;
    if (t == "false" || t == "0") return false;
    throw config_error(key + ": expected true/false, got '" + value + "'");
}

inline double parse_config_real(const std::string& key, const std::string& value) {
    const std::string t = trim(value);
    char* end = nullptr;
    const double v = std::strtod(t.c_str(), &end);
    if (t.empty() || end != t.c_str() + t.size())
        throw config_error(key + ": expected a number, got '" + value + "'");
    return v;
}

inline long long parse_config_int(const std::string& key, const std::string& value) {
    const std::string t = trim(value);
    char* end = nullptr;
    const long long v = std::strtoll(t.c_str(), &end, 10);
    if (t.empty() || end != t.c_str() + t.size())
        throw config_error(key + ": expected an integer, got '" + value + "'");
    return v;
}

}  // namespace detail

inline void RunConfig::set(const std::string& raw_key, const std::string& value) {
    const std::string key = detail::trim(raw_key);
    const auto real = [&] { return detail::parse_config_real(key, value); };
    const auto integer = [&] { return static_cast<int>(detail::parse_config_int(key, value)); };
    const auto flag = [&] { return detail::parse_bool(key, value); };
    const auto seed = [&] {
        const long long v = detail::parse_config_int(key, value);
        if (v < 0) throw config_error(key + ": seed must be non-negative");
        return static_cast<std::uint64_t>(v);
    };

    if (key == "dataset") dataset = detail::trim(value);
    else if (key == "k") k = integer();
    else if (key == "latent") latent = integer();
    else if (key == "ae_widths") ae_widths = detail::trim(value);
    else if (key == "gae_widths") gae_widths = detail::trim(value);
    else if (key == "gae_final_activation") gae_final_activation = flag();
    else if (key == "eta") eta = real();
    else if (key == "diffusion_series_terms") diffusion_series_terms = integer();
    else if (key == "sigma_pert") sigma_pert = real();
    else if (key == "rho") rho = real();
    else if (key == "m1") m1 = integer();
    else if (key == "m2") m2 = integer();
    else if (key == "beta") beta = real();
    else if (key == "log_base") log_base = real();
    else if (key == "symmetric_relation") symmetric_relation = flag();
    else if (key == "alpha") alpha = real();
    else if (key == "epsilon") epsilon = real();
    else if (key == "kappa") kappa = real();
    else if (key == "lr") lr = real();
    else if (key == "batch") batch = integer();
    else if (key == "epochs_ae") epochs_ae = integer();
    else if (key == "epochs_gae") epochs_gae = integer();
    else if (key == "epochs_joint") epochs_joint = integer();
    else if (key == "epochs") epochs = integer();
    else if (key == "joint_include_fusion") joint_include_fusion = flag();
    else if (key == "shared_centroids") shared_centroids = flag();
    else if (key == "early_stop") early_stop = flag();
    else if (key == "early_stop_tol") early_stop_tol = real();
    else if (key == "early_stop_patience") early_stop_patience = integer();
    else if (key == "seed_model") seed_model = seed();
    else if (key == "seed_augment") seed_augment = seed();
    else if (key == "seed_sample") seed_sample = seed();
    else throw config_error("unknown config key: '" + key + "'");
}

inline void RunConfig::validate() const {
    if (k < 2) throw config_error("k: cluster count must be >= 2 (set it explicitly)");
    if (latent < 1) throw config_error("latent: must be >= 1");
    ae_hidden();
    gae_hidden();
    if (eta <= 0.0 || eta >= 1.0) throw config_error("eta: must lie in (0, 1)");
    if (diffusion_series_terms < 0) throw config_error("diffusion_series_terms: must be >= 0");
    if (sigma_pert < 0.0) throw config_error("sigma_pert: must be >= 0");
    if (rho < 0.0 || rho >= 1.0) throw config_error("rho: must lie in [0, 1)");
    if (m1 < 1) throw config_error("m1: must be >= 1");
    if (m2 < 1) throw config_error("m2: must be >= 1");
    if (beta <= 0.0 || beta >= 1.0) throw config_error("beta: must lie in (0, 1)");
    if (log_base != 0.0 && (log_base <= 0.0 || log_base == 1.0))
        throw config_error("log_base: must be 0 (natural) or positive and != 1");
    if (alpha < 0.0) throw config_error("alpha: must be >= 0");
    if (epsilon < 0.0) throw config_error("epsilon: must be >= 0");
    if (kappa < 0.0) throw config_error("kappa: must be >= 0");
    if (lr <= 0.0) throw config_error("lr: must be > 0");
    if (batch < 0) throw config_error("batch: must be >= 0");
    if (epochs_ae < 0 || epochs_gae < 0 || epochs_joint < 0 || epochs < 0)
        throw config_error("epochs: all phase lengths must be >= 0");
    if (early_stop_tol <= 0.0) throw config_error("early_stop_tol: must be > 0");
    if (early_stop_patience < 1) throw config_error("early_stop_patience: must be >= 1");
}

/// INI-style file: `[section]` headers are ignored, `key = value` per line,
/// `#` starts a comment. Unknown keys are errors.
inline RunConfig load_config(const std::string& path) {
    RunConfig cfg;
    for (const auto& [no, raw] : detail::read_lines(path)) {
        std::string line = raw;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw config_error(path + ": line " + std::to_string(no) +
                                   ": unterminated section header");
            continue;
        }
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw config_error(path + ": line " + std::to_string(no) +
                               ": expected 'key = value'");
        try {
            cfg.set(line.substr(0, eq), line.substr(eq + 1));
        } catch (const config_error& e) {
            throw config_error(path + ": line " + std::to_string(no) + ": " + e.what());
        }
    }
    return cfg;
}

/// Applies `key=value` strings (e.g. from repeated --set flags) in order.
inline void apply_overrides(RunConfig& cfg, const std::vector<std::string>& overrides) {
    for (const std::string& item : overrides) {
        const std::size_t eq = item.find('=');
        if (eq == std::string::npos)
            throw config_error("override '" + item + "': expected key=value");
        cfg.set(item.substr(0, eq), item.substr(eq + 1));
    }
}

}  // namespace relclust
