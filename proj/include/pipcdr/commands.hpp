#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "pipcdr/config.hpp"
#include "pipcdr/trainer.hpp"

namespace pipcdr {

namespace fs = std::filesystem;

inline Dataset generate_from_config(const ExperimentConfig& cfg) {
    const std::size_t K = cfg.get_size("gen_clusters", 8);
    std::vector<std::size_t> per = cfg.get_sizes("per_cluster", {100});
    if (per.size() == 1) per.assign(K, per[0]);
    if (per.size() != K) throw ConfigInvalid("per_cluster must list 1 or gen_clusters counts");
    const std::uint64_t seed = cfg.get_size("seed", 1);
    Dataset ds = gen_gaussian_mixture(K, per, cfg.get_size("ambient_dim", 32),
                                      cfg.get_double("separation", 10.0),
                                      cfg.get_double("noise", 0.5), seed);
    ds.name = cfg.get_str("name", "mixture");
    const double imbalance = cfg.get_double("imbalance", 1.0);
    if (imbalance < 1.0) ds = long_tail_subsample(ds, imbalance, Rng(seed).fork(99));
    return ds;
}

inline void cmd_gen_data(const ExperimentConfig& cfg, const std::string& out_dir) {
    fs::create_directories(out_dir);
    const Dataset ds = generate_from_config(cfg);
    save_csv(ds.features, out_dir + "/features.csv");
    save_labels_csv(ds.labels->labels, out_dir + "/labels.csv");
    nlohmann::json manifest;
    manifest["name"] = ds.name;
    manifest["rows"] = ds.features.rows;
    manifest["dim"] = ds.features.cols;
    manifest["clusters"] = ds.labels->K;
    manifest["seed"] = cfg.get_size("seed", 1);
    manifest["imbalance"] = cfg.get_double("imbalance", 1.0);
    std::ofstream mf(out_dir + "/manifest.json");
    mf << manifest.dump(2) << '\n';
}

inline Dataset load_dataset_dir(const std::string& dir) {
    const std::string feat = dir + "/features.csv";
    const std::string lab = dir + "/labels.csv";
    std::optional<std::string> labels;
    if (fs::exists(lab)) labels = lab;
    return load_dataset(feat, labels, fs::path(dir).filename().string());
}

inline MetricsReport cmd_train(const ExperimentConfig& cfg, const std::string& out_dir) {
    fs::create_directories(out_dir);
    const std::string data_dir = cfg.get_str("data_dir", out_dir);
    const Dataset ds = load_dataset_dir(data_dir);
    const TrainConfig tc = cfg.train_config();
    const std::size_t checkpoint_every = cfg.get_size("checkpoint_every", 0);

    const auto t0 = std::chrono::steady_clock::now();
    EpochCallback cb = nullptr;
    if (checkpoint_every > 0)
        cb = [&](const TrainState& st, const MetricsReport& rep) {
            if ((static_cast<std::size_t>(rep.epoch) + 1) % checkpoint_every == 0)
                save_checkpoint(st.stack, out_dir + "/checkpoint_" + std::to_string(rep.epoch) +
                                              ".txt");
        };
    TrainResult res = train(ds, tc, cb);
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    std::ofstream metrics(out_dir + "/metrics.csv");
    metrics << MetricsReport::csv_header() << '\n';
    for (const auto& rep : res.history) metrics << rep.csv_row() << '\n';
    metrics.close();

    save_checkpoint(res.state.stack, out_dir + "/checkpoint.txt");
    save_labels_csv(res.final_assign, out_dir + "/pseudo_assign.csv");
    if (res.pseudo) save_csv(res.pseudo->centroids, out_dir + "/pseudo_centroids.csv");

    MetricsReport final = res.history.empty() ? MetricsReport{} : res.history.back();
    nlohmann::json summary;
    summary["name"] = cfg.get_str("name", ds.name);
    summary["config"] = cfg.raw();
    summary["epochs_run"] = res.history.size();
    summary["kmeans_runs"] = res.state.kmeans_runs;
    summary["wall_clock_sec"] = secs;
    summary["final"] = {{"nmi", final.nmi},
                        {"ami", final.ami},
                        {"ari", final.ari},
                        {"acc", final.acc},
                        {"imbalance_ratio", final.imbalance_ratio},
                        {"std_uniformity", final.std_uniformity},
                        {"loss_pip", final.loss_pip},
                        {"loss_cdr", final.loss_cdr}};
    std::ofstream sf(out_dir + "/summary.json");
    sf << summary.dump(2) << '\n';
    return final;
}

inline nlohmann::json eval_labels(const std::string& truth_path, const std::string& pred_path) {
    const std::vector<int> truth_raw = load_labels_csv(truth_path);
    const std::vector<int> pred_raw = load_labels_csv(pred_path);
    if (truth_raw.size() != pred_raw.size())
        throw LengthMismatch("truth has " + std::to_string(truth_raw.size()) + " labels, pred has " +
                             std::to_string(pred_raw.size()));
    const Partition truth = canonicalize(truth_raw);
    const Partition pred = canonicalize(pred_raw);
    nlohmann::json out;
    out["nmi"] = nmi(truth.labels, pred.labels);
    out["ami"] = ami(truth.labels, pred.labels);
    out["ari"] = ari(truth.labels, pred.labels);
    out["acc"] = clustering_accuracy(truth.labels, pred.labels);
    out["imbalance_ratio"] = imbalance_ratio(pred.labels, std::max(truth.K, pred.K));
    return out;
}

inline void cmd_eval(const std::string& truth_path, const std::string& pred_path,
                     std::ostream& os) {
    os << eval_labels(truth_path, pred_path).dump(2) << '\n';
}

inline const std::vector<std::string>& sweep_params() {
    static const std::vector<std::string> params = {"r", "sigma", "w", "K", "queue_capacity"};
    return params;
}

// One training run per value; failures are recorded in the aggregate table
// instead of aborting the remaining runs.
inline void cmd_sweep(const ExperimentConfig& base, const std::string& out_dir,
                      const std::string& param, const std::vector<std::string>& values,
                      bool parallel = false) {
    if (values.empty()) throw ConfigInvalid("sweep needs at least one value");
    bool known = false;
    for (const auto& p : sweep_params()) known = known || p == param;
    if (!known) throw ConfigInvalid("sweep param must be one of r, sigma, w, K, queue_capacity");
    const std::string key = param == "r" ? "kmeans_every" : param;

    fs::create_directories(out_dir);
    std::string data_dir = base.get_str("data_dir", "");
    if (data_dir.empty()) {
        data_dir = out_dir + "/data";
        cmd_gen_data(base, data_dir);
    }

    struct Row {
        std::string value;
        std::string status;
        MetricsReport final;
    };
    std::vector<Row> rows(values.size());
    auto run_one = [&](std::size_t i) {
        ExperimentConfig cfg = base;
        cfg.set(key, values[i]);
        cfg.set("data_dir", data_dir);
        const std::string sub = out_dir + "/sweep_" + param + "_" + values[i];
        Row row;
        row.value = values[i];
        try {
            row.final = cmd_train(cfg, sub);
            row.status = "ok";
        } catch (const std::exception& e) {
            row.status = std::string("failed: ") + e.what();
        }
        rows[i] = std::move(row);
    };
    if (parallel) {
        std::vector<std::future<void>> futs;
        futs.reserve(values.size());
        for (std::size_t i = 0; i < values.size(); ++i)
            futs.push_back(std::async(std::launch::async, run_one, i));
        for (auto& f : futs) f.get();
    } else {
        for (std::size_t i = 0; i < values.size(); ++i) run_one(i);
    }

    std::ofstream agg(out_dir + "/sweep.csv");
    agg << "param,value,status,nmi,ami,ari,acc,imbalance_ratio,std_uniformity\n";
    for (const auto& row : rows) {
        std::string status = row.status;
        for (auto& c : status)
            if (c == ',' || c == '\n') c = ';';
        agg << param << ',' << row.value << ',' << status << ',' << format_double(row.final.nmi)
            << ',' << format_double(row.final.ami) << ',' << format_double(row.final.ari) << ','
            << format_double(row.final.acc) << ',' << format_double(row.final.imbalance_ratio)
            << ',' << format_double(row.final.std_uniformity) << '\n';
    }
}

} // namespace pipcdr
