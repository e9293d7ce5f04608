#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "relclust/checkpoint.hpp"
#include "relclust/config.hpp"
#include "relclust/dataset.hpp"
#include "relclust/pipeline.hpp"
#include "relclust/textio.hpp"

namespace {

using nlohmann::json;
using namespace relclust;

/// Flags shared by every subcommand that trains or runs a model.
struct CommonArgs {
    std::string dataset;
    std::string config_path;
    std::vector<std::string> overrides;
    long long seed = -1;  // -1 = leave the three per-stream seeds untouched
    std::string log_path;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool dataset_required) {
    auto* ds = cmd->add_option("--dataset", args.dataset, "dataset directory");
    if (dataset_required) ds->required();
    cmd->add_option("--config", args.config_path, "key = value configuration file");
    cmd->add_option("--set", args.overrides, "config override, key=value (repeatable)");
    cmd->add_option("--seed", args.seed, "master seed for all randomness streams");
    cmd->add_option("--log", args.log_path, "append one JSON line per epoch to this file");
}

/// Config file, then explicit overrides, then the flags that outrank both.
RunConfig resolve_config(const CommonArgs& args) {
    RunConfig cfg;
    if (!args.config_path.empty()) cfg = load_config(args.config_path);
    apply_overrides(cfg, args.overrides);
    if (!args.dataset.empty()) cfg.dataset = args.dataset;
    if (args.seed >= 0) {
        const auto s = static_cast<std::uint64_t>(args.seed);
        cfg.seed_model = s;
        cfg.seed_augment = s;
        cfg.seed_sample = s;
    }
    return cfg;
}

Dataset load_for(RunConfig& cfg) {
    if (cfg.dataset.empty()) throw config_error("no dataset given (--dataset or config key)");
    Dataset ds = load_dataset(cfg.dataset);
    if (cfg.k == 0 && ds.manifest.clusters > 0) cfg.k = ds.manifest.clusters;
    return ds;
}

std::unique_ptr<std::ofstream> open_log(const std::string& path) {
    if (path.empty()) return nullptr;
    auto out = std::make_unique<std::ofstream>(path);
    if (!*out) throw structural_error("cannot open log file: " + path);
    return out;
}

std::vector<int> read_label_file(const std::string& path) {
    std::vector<int> labels;
    for (const auto& [line_no, text] : detail::read_lines(path))
        labels.push_back(
            static_cast<int>(detail::parse_integer(detail::trim(text), path, line_no)));
    if (labels.empty()) throw parse_error(path + ": no labels");
    return labels;
}

void write_label_file(const std::string& path, const std::vector<int>& labels) {
    std::ofstream out(path);
    if (!out) throw structural_error("cannot open output file: " + path);
    for (int y : labels) out << y << "\n";
}

json metrics_json(const ClusterMetrics& m) {
    return json{{"acc", m.acc}, {"nmi", m.nmi}, {"ari", m.ari}, {"f1", m.f1}};
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

int run_pretrain(const CommonArgs& args, const std::string& out_dir) {
    RunConfig cfg = resolve_config(args);
    Dataset ds = load_for(cfg);
    auto log = open_log(args.log_path);
    PretrainResult pre = pretrain(ds.g, cfg, log.get());
    save_checkpoint(out_dir, pre.checkpoint);

    json summary{{"phase", pre.checkpoint.phase},
                 {"epochs", pre.checkpoint.epoch},
                 {"out", out_dir}};
    std::cout << summary.dump() << "\n";
    return 0;
}

int run_train(const CommonArgs& args, const std::string& from_dir, const std::string& out_dir,
              int repeats) {
    if (repeats < 1) throw config_error("--repeats must be >= 1");
    RunConfig base = resolve_config(args);
    Dataset ds = load_for(base);
    auto log = open_log(args.log_path);

    std::vector<ClusterMetrics> finals;
    json last_summary;
    for (int r = 0; r < repeats; ++r) {
        RunConfig cfg = base;
        cfg.seed_model += static_cast<std::uint64_t>(r);
        cfg.seed_augment += static_cast<std::uint64_t>(r);
        cfg.seed_sample += static_cast<std::uint64_t>(r);

        TrainerCheckpoint start = from_dir.empty()
                                      ? pretrain(ds.g, cfg, log.get()).checkpoint
                                      : load_checkpoint(from_dir);
        TrainResult res = train(ds.g, cfg, std::move(start), log.get());

        if (!out_dir.empty()) {
            const std::string dir =
                repeats == 1 ? out_dir : out_dir + "/run" + std::to_string(r);
            save_checkpoint(dir, res.checkpoint);
            write_label_file(dir + "/labels.tsv", res.labels);
        }

        last_summary = json{{"epochs", res.checkpoint.epoch},
                            {"stopped_early", res.stopped_early},
                            {"loss", res.trace.empty() ? 0.0 : res.trace.back().loss}};
        if (ds.g.has_labels()) {
            const ClusterMetrics m = compute_metrics(res.labels, ds.g.labels);
            finals.push_back(m);
            last_summary["metrics"] = metrics_json(m);
        }
    }

    if (repeats == 1) {
        std::cout << last_summary.dump() << "\n";
        return 0;
    }
    json agg{{"repeats", repeats}};
    if (!finals.empty()) {
        auto stat = [&](const char* name, double ClusterMetrics::*field) {
            double mean = 0.0;
            for (const ClusterMetrics& m : finals) mean += m.*field;
            mean /= static_cast<double>(finals.size());
            double var = 0.0;
            for (const ClusterMetrics& m : finals) var += (m.*field - mean) * (m.*field - mean);
            var /= static_cast<double>(finals.size());
            agg[std::string(name) + "_mean"] = mean;
            agg[std::string(name) + "_std"] = std::sqrt(var);
        };
        stat("acc", &ClusterMetrics::acc);
        stat("nmi", &ClusterMetrics::nmi);
        stat("ari", &ClusterMetrics::ari);
        stat("f1", &ClusterMetrics::f1);
    }
    std::cout << agg.dump() << "\n";
    return 0;
}

int run_eval(const std::string& pred_path, const std::string& truth_path) {
    const std::vector<int> pred = read_label_file(pred_path);
    const std::vector<int> truth = read_label_file(truth_path);
    std::cout << metrics_json(compute_metrics(pred, truth)).dump() << "\n";
    return 0;
}

int run_predict(const CommonArgs& args, const std::string& model_dir,
                const std::string& out_path) {
    RunConfig cfg = resolve_config(args);
    Dataset ds = load_for(cfg);
    TrainerCheckpoint ck = load_checkpoint(model_dir);
    InferenceOutput out = infer(ds.g, cfg, ck.model);

    if (!out_path.empty()) write_label_file(out_path, out.labels);
    std::vector<int> counts(static_cast<std::size_t>(cfg.k), 0);
    for (int y : out.labels) counts[static_cast<std::size_t>(y)]++;
    json summary{{"n", ds.g.n}, {"counts", counts}};
    if (ds.g.has_labels()) summary["metrics"] = metrics_json(compute_metrics(out.labels, ds.g.labels));
    std::cout << summary.dump() << "\n";
    return 0;
}

int run_export(const CommonArgs& args, const std::string& model_dir,
               const std::string& out_path) {
    RunConfig cfg = resolve_config(args);
    Dataset ds = load_for(cfg);
    TrainerCheckpoint ck = load_checkpoint(model_dir);
    InferenceOutput out = infer(ds.g, cfg, ck.model);

    std::ofstream file(out_path);
    if (!file) throw structural_error("cannot open output file: " + out_path);
    for (int i = 0; i < out.z_tilde.rows(); ++i) {
        for (int j = 0; j < out.z_tilde.cols(); ++j) {
            if (j) file << '\t';
            file << detail::format_real(out.z_tilde(i, j));
        }
        file << '\n';
    }
    json summary{{"rows", out.z_tilde.rows()}, {"cols", out.z_tilde.cols()}, {"out", out_path}};
    std::cout << summary.dump() << "\n";
    return 0;
}

int run_gen_synthetic(const SbmConfig& scfg, long long seed, const std::string& out_dir) {
    const Graph g = generate_sbm(scfg, static_cast<std::uint64_t>(seed));
    save_dataset(out_dir, g,
                 {{"clusters", std::to_string(scfg.k)},
                  {"generator", "sbm"},
                  {"seed", std::to_string(seed)}});
    json summary{{"n", g.n},
                 {"k", scfg.k},
                 {"d", scfg.d},
                 {"edges", g.edges.size()},
                 {"out", out_dir}};
    std::cout << summary.dump() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"relclust: self-supervised graph clustering by relational alignment"};
    app.require_subcommand(1);

    CommonArgs pre_args;
    std::string pre_out;
    auto* cmd_pre = app.add_subcommand("pretrain", "train both autoencoders, save a checkpoint");
    add_common(cmd_pre, pre_args, true);
    cmd_pre->add_option("--out", pre_out, "checkpoint output directory")->required();

    CommonArgs train_args;
    std::string train_from, train_out;
    int repeats = 1;
    auto* cmd_train = app.add_subcommand("train", "full run: pretrain (or load) then cluster");
    add_common(cmd_train, train_args, true);
    cmd_train->add_option("--from", train_from, "start from this pretrained checkpoint");
    cmd_train->add_option("--out", train_out, "write checkpoint and labels here");
    cmd_train->add_option("--repeats", repeats, "aggregate metrics over seed-shifted runs");

    std::string eval_pred, eval_truth;
    auto* cmd_eval = app.add_subcommand("eval", "score a predicted labeling against the truth");
    cmd_eval->add_option("--pred", eval_pred, "predicted labels, one per line")->required();
    cmd_eval->add_option("--truth", eval_truth, "ground-truth labels, one per line")->required();

    CommonArgs predict_args;
    std::string predict_model, predict_out;
    auto* cmd_predict = app.add_subcommand("predict", "hard labels from a trained checkpoint");
    add_common(cmd_predict, predict_args, true);
    cmd_predict->add_option("--model", predict_model, "trained checkpoint directory")->required();
    cmd_predict->add_option("--out", predict_out, "write labels.tsv-style output here");

    CommonArgs export_args;
    std::string export_model, export_out;
    auto* cmd_export =
        app.add_subcommand("export-embeddings", "fused embedding as TSV for plotting");
    add_common(cmd_export, export_args, true);
    cmd_export->add_option("--model", export_model, "trained checkpoint directory")->required();
    cmd_export->add_option("--out", export_out, "embedding TSV path")->required();

    SbmConfig scfg;
    long long gen_seed = 1;
    std::string gen_out;
    auto* cmd_gen = app.add_subcommand("gen-synthetic", "emit a block-model dataset directory");
    cmd_gen->add_option("--n", scfg.n, "node count");
    cmd_gen->add_option("--k", scfg.k, "block count");
    cmd_gen->add_option("--d", scfg.d, "attribute width");
    cmd_gen->add_option("--p-in", scfg.p_in, "within-block edge probability");
    cmd_gen->add_option("--p-out", scfg.p_out, "between-block edge probability");
    cmd_gen->add_option("--mean-scale", scfg.mean_scale, "stddev of the block means");
    cmd_gen->add_option("--attr-noise", scfg.noise, "attribute noise around the block mean");
    cmd_gen->add_option("--seed", gen_seed, "generator seed");
    cmd_gen->add_option("--out", gen_out, "dataset output directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (cmd_pre->parsed()) return run_pretrain(pre_args, pre_out);
        if (cmd_train->parsed()) return run_train(train_args, train_from, train_out, repeats);
        if (cmd_eval->parsed()) return run_eval(eval_pred, eval_truth);
        if (cmd_predict->parsed()) return run_predict(predict_args, predict_model, predict_out);
        if (cmd_export->parsed()) return run_export(export_args, export_model, export_out);
        if (cmd_gen->parsed()) return run_gen_synthetic(scfg, gen_seed, gen_out);
    } catch (const std::exception& e) {
        std::cerr << "relclust: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
