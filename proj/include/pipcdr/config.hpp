#pragma once

#include <cctype>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "pipcdr/errors.hpp"
#include "pipcdr/trainer.hpp"

namespace pipcdr {

// Flat key = value experiment file; '#' starts a comment, unknown keys are
// hard errors so typos never silently fall back to defaults.
class ExperimentConfig {
public:
    static const std::set<std::string>& known_keys() {
        static const std::set<std::string> keys = {
            "name", "out_dir", "seed", "data_dir",
            // data generation
            "gen_clusters", "per_cluster", "ambient_dim", "separation", "noise", "imbalance",
            // training
            "K", "epochs", "batch_size", "warmup_epochs", "kmeans_every", "queue_capacity",
            "kmeans_n_init", "kmeans_max_iter", "kmeans_tol", "tau", "sigma", "w", "momentum",
            "lr_base", "lr_warmup_epochs", "predictor_lr_mult", "encoder_hidden", "proj_dim",
            "predictor_hidden", "batch_standardize", "predictor_enabled", "feature_source",
            "aug_noise_std", "aug_mask_prob", "aug_scale_jitter", "checkpoint_every"};
        return keys;
    }

    static ExperimentConfig from_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ConfigInvalid("cannot open config: " + path);
        std::stringstream ss;
        ss << in.rdbuf();
        return from_string(ss.str(), path);
    }

    static ExperimentConfig from_string(const std::string& text, const std::string& origin = "") {
        ExperimentConfig cfg;
        std::stringstream in(text);
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line = line.substr(0, hash);
            const std::string trimmed = trim(line);
            if (trimmed.empty()) continue;
            const auto eq = trimmed.find('=');
            if (eq == std::string::npos)
                throw ConfigInvalid(origin + ":" + std::to_string(lineno) +
                                    ": expected key = value, got '" + trimmed + "'");
            const std::string key = trim(trimmed.substr(0, eq));
            const std::string value = trim(trimmed.substr(eq + 1));
            if (!known_keys().count(key))
                throw ConfigInvalid(origin + ":" + std::to_string(lineno) + ": unknown key '" +
                                    key + "'");
            if (cfg.values_.count(key))
                throw ConfigInvalid(origin + ":" + std::to_string(lineno) + ": duplicate key '" +
                                    key + "'");
            cfg.values_[key] = value;
        }
        return cfg;
    }

    bool has(const std::string& key) const { return values_.count(key) != 0; }

    void set(const std::string& key, const std::string& value) {
        if (!known_keys().count(key)) throw ConfigInvalid("unknown key '" + key + "'");
        values_[key] = value;
    }

    std::string get_str(const std::string& key, const std::string& def) const {
        auto it = values_.find(key);
        return it == values_.end() ? def : it->second;
    }

    double get_double(const std::string& key, double def) const {
        auto it = values_.find(key);
        if (it == values_.end()) return def;
        return parse_double(key, it->second);
    }

    std::size_t get_size(const std::string& key, std::size_t def) const {
        auto it = values_.find(key);
        if (it == values_.end()) return def;
        const double v = parse_double(key, it->second);
        if (v < 0 || v != static_cast<double>(static_cast<std::size_t>(v)))
            throw ConfigInvalid(key + " must be a non-negative integer, got '" + it->second + "'");
        return static_cast<std::size_t>(v);
    }

    bool get_bool(const std::string& key, bool def) const {
        auto it = values_.find(key);
        if (it == values_.end()) return def;
        if (it->second == "true" || it->second == "1") return true;
        if (it->second == "false" || it->second == "0") return false;
        throw ConfigInvalid(key + " must be true/false/1/0, got '" + it->second + "'");
    }

    std::vector<std::size_t> get_sizes(const std::string& key,
                                       const std::vector<std::size_t>& def) const {
        auto it = values_.find(key);
        if (it == values_.end()) return def;
        std::vector<std::size_t> out;
        std::stringstream ss(it->second);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            const double v = parse_double(key, trim(cell));
            if (v < 0 || v != static_cast<double>(static_cast<std::size_t>(v)))
                throw ConfigInvalid(key + " entries must be non-negative integers");
            out.push_back(static_cast<std::size_t>(v));
        }
        if (out.empty()) throw ConfigInvalid(key + " must not be an empty list");
        return out;
    }

    const std::map<std::string, std::string>& raw() const { return values_; }

    TrainConfig train_config() const {
        TrainConfig t;
        t.K = get_size("K", t.K);
        t.epochs = get_size("epochs", t.epochs);
        t.batch_size = get_size("batch_size", t.batch_size);
        t.warmup_epochs = get_size("warmup_epochs", t.warmup_epochs);
        t.kmeans_every = get_size("kmeans_every", t.kmeans_every);
        t.queue_capacity = get_size("queue_capacity", t.queue_capacity);
        t.kmeans_n_init = get_size("kmeans_n_init", t.kmeans_n_init);
        t.kmeans_max_iter = get_size("kmeans_max_iter", t.kmeans_max_iter);
        t.kmeans_tol = get_double("kmeans_tol", t.kmeans_tol);
        t.tau = get_double("tau", t.tau);
        t.sigma = get_double("sigma", t.sigma);
        t.w = get_double("w", t.w);
        t.momentum = get_double("momentum", t.momentum);
        t.lr_base = get_double("lr_base", t.lr_base);
        t.lr_warmup_epochs = get_size("lr_warmup_epochs", t.lr_warmup_epochs);
        t.predictor_lr_mult = get_double("predictor_lr_mult", t.predictor_lr_mult);
        t.encoder_hidden = get_sizes("encoder_hidden", t.encoder_hidden);
        t.proj_dim = get_size("proj_dim", t.proj_dim);
        t.predictor_hidden = get_size("predictor_hidden", t.predictor_hidden);
        t.batch_standardize = get_bool("batch_standardize", t.batch_standardize);
        t.predictor_enabled = get_bool("predictor_enabled", t.predictor_enabled);
        t.feature_source = parse_feature_source(get_str("feature_source", "projector"));
        t.aug_noise_std = get_double("aug_noise_std", t.aug_noise_std);
        t.aug_mask_prob = get_double("aug_mask_prob", t.aug_mask_prob);
        t.aug_scale_jitter = get_double("aug_scale_jitter", t.aug_scale_jitter);
        t.seed = get_size("seed", 1);
        return t;
    }

private:
    static std::string trim(const std::string& s) {
        std::size_t a = 0, b = s.size();
        while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
        while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
        return s.substr(a, b - a);
    }

    static double parse_double(const std::string& key, const std::string& value) {
        const char* s = value.c_str();
        char* end = nullptr;
        const double v = std::strtod(s, &end);
        if (end == s || *end != '\0')
            throw ConfigInvalid(key + " must be numeric, got '" + value + "'");
        return v;
    }

    std::map<std::string, std::string> values_;
};

} // namespace pipcdr
