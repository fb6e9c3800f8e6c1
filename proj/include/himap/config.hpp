// Copyright (c) 2026 himap contributors
// SPDX-License-Identifier: Apache-2.0
//
// Flat key=value configuration ("key = value" lines, '#' comments) covering
// the model, training, and generator sections, with CLI overrides and a
// canonical serialization whose FNV-1a hash fingerprints runs and
// checkpoints. `gen.preset` applies a named generator preset when set and is
// not part of the canonical form (the concrete values are).

#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "himap/model_config.hpp"
#include "himap/scenario.hpp"
#include "himap/trainkit.hpp"

namespace himap {

struct AppConfig {
    ModelConfig model;
    TrainConfig train;
    GenSpec gen;

    void set(const std::string& key, const std::string& value) {
        if (key == "gen.preset") {
            gen = gen_spec_preset(value);
            return;
        }
        auto table = fields();
        auto it = table.find(key);
        if (it == table.end()) throw std::invalid_argument("config: unknown key '" + key + "'");
        try {
            it->second.set(*this, value);
        } catch (const std::invalid_argument&) {
            throw std::invalid_argument("config: bad value '" + value + "' for key '" + key + "'");
        }
    }

    std::string get(const std::string& key) const {
        auto table = fields();
        auto it = table.find(key);
        if (it == table.end()) throw std::invalid_argument("config: unknown key '" + key + "'");
        return it->second.get(*this);
    }

    // Sorted "key = value" lines; the reproducibility fingerprint hashes this.
    std::string canonical() const {
        std::string out;
        for (const auto& [key, field] : fields()) out += key + " = " + field.get(*this) + "\n";
        return out;
    }
    std::uint64_t fingerprint() const { return fnv1a64(canonical()); }

    void apply_line(const std::string& raw) {
        std::string line = trim(raw);
        if (line.empty() || line[0] == '#') return;
        std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config: expected 'key = value', got '" + line + "'");
        set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }

    static AppConfig from_text(const std::string& text) {
        AppConfig cfg;
        for (const auto& line : split(text, '\n')) cfg.apply_line(line);
        return cfg;
    }
    static AppConfig from_file(const std::string& path) { return from_text(read_text_file(path)); }

    // "key=value" pairs from the command line.
    void apply_overrides(const std::vector<std::string>& overrides) {
        for (const auto& kv : overrides) {
            std::size_t eq = kv.find('=');
            if (eq == std::string::npos)
                throw std::invalid_argument("config: override '" + kv + "' is not key=value");
            set(trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
        }
    }

    void validate() const {
        model.validate();
        train.validate();
        gen.validate();
        if (model.t_obs != gen.t_obs || model.t_future != gen.t_future)
            throw std::invalid_argument(
                "config: model horizons (model.t_obs/t_future) must match the generator "
                "(gen.t_obs/t_future)");
    }

private:
    struct Field {
        std::function<std::string(const AppConfig&)> get;
        std::function<void(AppConfig&, const std::string&)> set;
    };

    static int to_int(const std::string& s) {
        std::size_t used = 0;
        int v = std::stoi(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    }
    static double to_double(const std::string& s) {
        std::size_t used = 0;
        double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    }
    static std::uint64_t to_u64(const std::string& s) {
        std::size_t used = 0;
        unsigned long long v = std::stoull(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    }
    static bool to_bool(const std::string& s) {
        if (s == "true" || s == "1") return true;
        if (s == "false" || s == "0") return false;
        throw std::invalid_argument(s);
    }

    static const std::map<std::string, Field>& fields() {
        static const std::map<std::string, Field> table = [] {
            std::map<std::string, Field> t;
            auto reg_i = [&t](const std::string& key, std::function<int&(AppConfig&)> ref) {
                t[key] = {[ref](const AppConfig& c) {
                              return std::to_string(ref(const_cast<AppConfig&>(c)));
                          },
                          [ref](AppConfig& c, const std::string& v) { ref(c) = to_int(v); }};
            };
            auto reg_d = [&t](const std::string& key, std::function<double&(AppConfig&)> ref) {
                t[key] = {[ref](const AppConfig& c) {
                              return format_num(ref(const_cast<AppConfig&>(c)));
                          },
                          [ref](AppConfig& c, const std::string& v) { ref(c) = to_double(v); }};
            };
            auto reg_b = [&t](const std::string& key, std::function<bool&(AppConfig&)> ref) {
                t[key] = {[ref](const AppConfig& c) {
                              return ref(const_cast<AppConfig&>(c)) ? std::string("true")
                                                                    : std::string("false");
                          },
                          [ref](AppConfig& c, const std::string& v) { ref(c) = to_bool(v); }};
            };
            auto reg_u = [&t](const std::string& key, std::function<std::uint64_t&(AppConfig&)> ref) {
                t[key] = {[ref](const AppConfig& c) {
                              return std::to_string(ref(const_cast<AppConfig&>(c)));
                          },
                          [ref](AppConfig& c, const std::string& v) { ref(c) = to_u64(v); }};
            };

            reg_i("model.d_model", [](AppConfig& c) -> int& { return c.model.d_model; });
            reg_i("model.heads", [](AppConfig& c) -> int& { return c.model.heads; });
            reg_i("model.t_obs", [](AppConfig& c) -> int& { return c.model.t_obs; });
            reg_i("model.t_future", [](AppConfig& c) -> int& { return c.model.t_future; });
            reg_i("model.t_hist", [](AppConfig& c) -> int& { return c.model.t_hist; });
            reg_i("model.k_modes", [](AppConfig& c) -> int& { return c.model.k_modes; });
            reg_i("model.n_chunks", [](AppConfig& c) -> int& { return c.model.n_chunks; });
            reg_i("model.max_attended", [](AppConfig& c) -> int& { return c.model.max_attended; });
            reg_i("model.fourier_freqs", [](AppConfig& c) -> int& { return c.model.fourier_freqs; });
            reg_d("model.radius", [](AppConfig& c) -> double& { return c.model.radius; });
            reg_d("model.eps_b", [](AppConfig& c) -> double& { return c.model.eps_b; });

            reg_i("train.warmup_steps",
                  [](AppConfig& c) -> int& { return c.train.schedule.warmup_steps; });
            reg_i("train.total_steps",
                  [](AppConfig& c) -> int& { return c.train.schedule.total_steps; });
            reg_d("train.lr_peak", [](AppConfig& c) -> double& { return c.train.schedule.lr_peak; });
            reg_d("train.lr_min", [](AppConfig& c) -> double& { return c.train.schedule.lr_min; });
            reg_d("train.weight_decay",
                  [](AppConfig& c) -> double& { return c.train.adamw.weight_decay; });
            reg_d("train.grad_clip", [](AppConfig& c) -> double& { return c.train.grad_clip; });
            reg_d("train.alpha", [](AppConfig& c) -> double& { return c.train.weights.alpha; });
            reg_d("train.beta", [](AppConfig& c) -> double& { return c.train.weights.beta; });
            reg_i("train.batch_size", [](AppConfig& c) -> int& { return c.train.batch_size; });
            reg_i("train.log_interval", [](AppConfig& c) -> int& { return c.train.log_interval; });
            reg_i("train.ckpt_interval", [](AppConfig& c) -> int& { return c.train.ckpt_interval; });
            reg_d("train.val_fraction", [](AppConfig& c) -> double& { return c.train.val_fraction; });
            reg_d("train.mask_ratio", [](AppConfig& c) -> double& { return c.train.mask_ratio; });
            reg_u("train.seed", [](AppConfig& c) -> std::uint64_t& { return c.train.seed; });

            reg_i("gen.n_agents_min", [](AppConfig& c) -> int& { return c.gen.n_agents_min; });
            reg_i("gen.n_agents_max", [](AppConfig& c) -> int& { return c.gen.n_agents_max; });
            reg_i("gen.n_lanes_min", [](AppConfig& c) -> int& { return c.gen.n_lanes_min; });
            reg_i("gen.n_lanes_max", [](AppConfig& c) -> int& { return c.gen.n_lanes_max; });
            reg_i("gen.t_obs", [](AppConfig& c) -> int& { return c.gen.t_obs; });
            reg_i("gen.t_future", [](AppConfig& c) -> int& { return c.gen.t_future; });
            reg_d("gen.dt", [](AppConfig& c) -> double& { return c.gen.dt; });
            reg_d("gen.speed_min", [](AppConfig& c) -> double& { return c.gen.speed_min; });
            reg_d("gen.speed_max", [](AppConfig& c) -> double& { return c.gen.speed_max; });
            reg_d("gen.accel_sigma", [](AppConfig& c) -> double& { return c.gen.accel_sigma; });
            reg_d("gen.accel_rho", [](AppConfig& c) -> double& { return c.gen.accel_rho; });
            reg_d("gen.lateral_sigma", [](AppConfig& c) -> double& { return c.gen.lateral_sigma; });
            reg_d("gen.branch_prob", [](AppConfig& c) -> double& { return c.gen.branch_prob; });
            reg_d("gen.arc_prob", [](AppConfig& c) -> double& { return c.gen.arc_prob; });
            reg_d("gen.segment_len", [](AppConfig& c) -> double& { return c.gen.segment_len; });
            reg_d("gen.point_spacing", [](AppConfig& c) -> double& { return c.gen.point_spacing; });
            reg_d("gen.min_agent_spacing",
                  [](AppConfig& c) -> double& { return c.gen.min_agent_spacing; });
            reg_b("gen.mixed_categories",
                  [](AppConfig& c) -> bool& { return c.gen.mixed_categories; });
            reg_d("gen.corrupt.drop_prob",
                  [](AppConfig& c) -> double& { return c.gen.corruption.drop_prob; });
            reg_d("gen.corrupt.jitter_sigma",
                  [](AppConfig& c) -> double& { return c.gen.corruption.jitter_sigma; });
            reg_d("gen.corrupt.clutter_rate",
                  [](AppConfig& c) -> double& { return c.gen.corruption.clutter_rate; });
            return t;
        }();
        return table;
    }
};

}  // namespace himap
