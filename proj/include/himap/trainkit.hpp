// Copyright (c) 2026 himap contributors
// SPDX-License-Identifier: Apache-2.0
//
// Training machinery: warmup + cosine learning-rate schedule, AdamW with
// decoupled weight decay, global-norm gradient clipping, binary checkpoints,
// and a deterministic single-threaded training loop. Batch composition is a
// pure function of (seed, step), so resuming from a checkpoint reproduces the
// uninterrupted run exactly.

#pragma once

#include <cstring>
#include <fstream>
#include <functional>
#include <iostream>
#include <string>
#include <vector>

#include "himap/objective.hpp"
#include "himap/scenario.hpp"
#include "himap/tape.hpp"

namespace himap {

// ---------------------------------------------------------------------------
// Learning-rate schedule.

struct Schedule {
    int warmup_steps = 200;
    int total_steps = 5000;
    double lr_peak = 3e-4;
    double lr_min = 1e-6;

    void validate() const {
        if (warmup_steps < 0 || total_steps < warmup_steps)
            throw std::invalid_argument("Schedule: need 0 <= warmup_steps <= total_steps");
        if (lr_min > lr_peak) throw std::invalid_argument("Schedule: lr_min > lr_peak");
    }
};

// Linear ramp to lr_peak over the warmup, then cosine decay to lr_min.
inline double lr_at(int step, const Schedule& s) {
    s.validate();
    if (step < 0 || step > s.total_steps)
        throw std::invalid_argument("lr_at: step " + std::to_string(step) + " outside [0, " +
                                    std::to_string(s.total_steps) + "]");
    if (step <= s.warmup_steps)
        return s.warmup_steps == 0 ? s.lr_peak
                                   : s.lr_peak * static_cast<double>(step) /
                                         static_cast<double>(s.warmup_steps);
    double span = static_cast<double>(s.total_steps - s.warmup_steps);
    double progress = static_cast<double>(step - s.warmup_steps) / span;
    return s.lr_min + 0.5 * (s.lr_peak - s.lr_min) * (1.0 + std::cos(kPi * progress));
}

// ---------------------------------------------------------------------------
// AdamW.

struct AdamWConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-4;
};

struct OptimState {
    std::vector<NdArray> m;
    std::vector<NdArray> v;
    long step = 0;

    static OptimState init(const ParamStore& store) {
        OptimState s;
        for (const auto& e : store.entries) {
            s.m.push_back(NdArray::zeros(e.value.shape));
            s.v.push_back(NdArray::zeros(e.value.shape));
        }
        return s;
    }
};

// Global L2 norm over every gradient array.
inline double grad_norm(const GradientMap& g) {
    double total = 0.0;
    for (const auto& a : g.grads)
        for (double x : a.v) total += x * x;
    return std::sqrt(total);
}

// Scales gradients down to max_norm when they exceed it; never scales up.
// Returns the pre-clip norm.
inline double clip_gradients(GradientMap& g, double max_norm) {
    double norm = grad_norm(g);
    if (max_norm > 0.0 && norm > max_norm && norm > 0.0) {
        double s = max_norm / norm;
        for (auto& a : g.grads)
            for (double& x : a.v) x *= s;
    }
    return norm;
}

// One AdamW step: bias-corrected moments for the adaptive part, decoupled
// decay p <- p - lr*wd*p applied separately. Returns false (and changes
// nothing) when the gradient is non-finite.
inline bool optimizer_step(ParamStore& store, const GradientMap& grads, OptimState& state,
                           double lr, const AdamWConfig& cfg) {
    for (const auto& a : grads.grads)
        for (double x : a.v)
            if (!std::isfinite(x)) return false;
    ++state.step;
    double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < store.entries.size(); ++i) {
        auto& e = store.entries[i];
        if (!e.trainable) continue;
        const NdArray& g = grads.grads[i];
        NdArray& m = state.m[i];
        NdArray& v = state.v[i];
        for (std::size_t j = 0; j < e.value.numel(); ++j) {
            m.v[j] = cfg.beta1 * m.v[j] + (1.0 - cfg.beta1) * g.v[j];
            v.v[j] = cfg.beta2 * v.v[j] + (1.0 - cfg.beta2) * g.v[j] * g.v[j];
            double mh = m.v[j] / bc1;
            double vh = v.v[j] / bc2;
            e.value.v[j] -= lr * cfg.weight_decay * e.value.v[j];  // decoupled decay
            e.value.v[j] -= lr * mh / (std::sqrt(vh) + cfg.eps);
        }
    }
    return true;
}

// ---------------------------------------------------------------------------
// Checkpoints.

struct TrainLogRow {
    long step = 0;
    double lr = 0.0;
    double total = 0.0;
    double reg = 0.0;
    double cls = 0.0;
    double his = 0.0;
    double recon_ade = 0.0;  // held-out slice; NaN-free: -1 when unavailable
    int nonfinite = 0;       // batches rejected for non-finite gradients so far

    static std::vector<std::string> csv_header() {
        return {"step", "lr", "loss_total", "loss_reg", "loss_cls", "loss_his",
                "recon_hi_ade_val", "nonfinite"};
    }
    std::vector<std::string> csv_row() const {
        return {std::to_string(step), format_num(lr),  format_num(total),
                format_num(reg),      format_num(cls), format_num(his),
                format_num(recon_ade), std::to_string(nonfinite)};
    }
};

struct Checkpoint {
    std::uint64_t fingerprint = 0;
    std::string config_text;
    long step = 0;
    ParamStore params;
    OptimState optim;
    bool has_optim = false;
    std::vector<TrainLogRow> history;
};

namespace detail {

inline void put_u32(std::string& out, std::uint32_t x) {
    char b[4];
    std::memcpy(b, &x, 4);
    out.append(b, 4);
}
inline void put_u64(std::string& out, std::uint64_t x) {
    char b[8];
    std::memcpy(b, &x, 8);
    out.append(b, 8);
}
inline void put_f64(std::string& out, double x) {
    char b[8];
    std::memcpy(b, &x, 8);
    out.append(b, 8);
}
inline void put_blob(std::string& out, const std::vector<double>& v) {
    out.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(double));
}

struct Reader {
    const std::string& buf;
    std::size_t pos = 0;
    explicit Reader(const std::string& b) : buf(b) {}
    void need(std::size_t n) const {
        if (pos + n > buf.size()) throw std::invalid_argument("checkpoint: truncated file");
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t x;
        std::memcpy(&x, buf.data() + pos, 4);
        pos += 4;
        return x;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t x;
        std::memcpy(&x, buf.data() + pos, 8);
        pos += 8;
        return x;
    }
    double f64() {
        need(8);
        double x;
        std::memcpy(&x, buf.data() + pos, 8);
        pos += 8;
        return x;
    }
    std::string bytes(std::size_t n) {
        need(n);
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }
    void blob(std::vector<double>& v) {
        need(v.size() * sizeof(double));
        std::memcpy(v.data(), buf.data() + pos, v.size() * sizeof(double));
        pos += v.size() * sizeof(double);
    }
};

}  // namespace detail

// Binary little-endian container, versioned header. Reload reproduces forward
// passes bit-for-bit (doubles are stored exactly).
inline void save_checkpoint(const Checkpoint& ck, const std::string& path) {
    std::string out;
    out += "HMCKPT01";
    detail::put_u32(out, 1);
    detail::put_u64(out, ck.fingerprint);
    detail::put_u64(out, ck.config_text.size());
    out += ck.config_text;
    detail::put_u64(out, static_cast<std::uint64_t>(ck.step));
    detail::put_u32(out, static_cast<std::uint32_t>(ck.params.entries.size()));
    for (const auto& e : ck.params.entries) {
        detail::put_u32(out, static_cast<std::uint32_t>(e.name.size()));
        out += e.name;
        out.push_back(e.trainable ? 1 : 0);
        detail::put_u32(out, static_cast<std::uint32_t>(e.value.shape.size()));
        for (std::size_t d : e.value.shape) detail::put_u64(out, d);
        detail::put_blob(out, e.value.v);
    }
    out.push_back(ck.has_optim ? 1 : 0);
    if (ck.has_optim) {
        detail::put_u64(out, static_cast<std::uint64_t>(ck.optim.step));
        for (std::size_t i = 0; i < ck.params.entries.size(); ++i) {
            detail::put_blob(out, ck.optim.m[i].v);
            detail::put_blob(out, ck.optim.v[i].v);
        }
    }
    detail::put_u32(out, static_cast<std::uint32_t>(ck.history.size()));
    for (const auto& r : ck.history) {
        detail::put_u64(out, static_cast<std::uint64_t>(r.step));
        detail::put_f64(out, r.lr);
        detail::put_f64(out, r.total);
        detail::put_f64(out, r.reg);
        detail::put_f64(out, r.cls);
        detail::put_f64(out, r.his);
        detail::put_f64(out, r.recon_ade);
        detail::put_u32(out, static_cast<std::uint32_t>(r.nonfinite));
    }
    write_text_file(path, out);
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::string buf = read_text_file(path);
    detail::Reader r(buf);
    if (r.bytes(8) != "HMCKPT01") throw std::invalid_argument("checkpoint: bad magic in " + path);
    std::uint32_t version = r.u32();
    if (version != 1)
        throw std::invalid_argument("checkpoint: unsupported version " + std::to_string(version));
    Checkpoint ck;
    ck.fingerprint = r.u64();
    ck.config_text = r.bytes(static_cast<std::size_t>(r.u64()));
    ck.step = static_cast<long>(r.u64());
    std::uint32_t n = r.u32();
    for (std::uint32_t i = 0; i < n; ++i) {
        std::string name = r.bytes(r.u32());
        bool trainable = r.bytes(1)[0] != 0;
        Shape shape(r.u32());
        for (auto& d : shape) d = static_cast<std::size_t>(r.u64());
        NdArray a(shape);
        r.blob(a.v);
        ck.params.add(name, std::move(a), trainable);
    }
    ck.has_optim = r.bytes(1)[0] != 0;
    if (ck.has_optim) {
        ck.optim.step = static_cast<long>(r.u64());
        for (std::uint32_t i = 0; i < n; ++i) {
            NdArray m(ck.params.entries[i].value.shape);
            NdArray v(ck.params.entries[i].value.shape);
            r.blob(m.v);
            r.blob(v.v);
            ck.optim.m.push_back(std::move(m));
            ck.optim.v.push_back(std::move(v));
        }
    }
    std::uint32_t rows = r.u32();
    for (std::uint32_t i = 0; i < rows; ++i) {
        TrainLogRow row;
        row.step = static_cast<long>(r.u64());
        row.lr = r.f64();
        row.total = r.f64();
        row.reg = r.f64();
        row.cls = r.f64();
        row.his = r.f64();
        row.recon_ade = r.f64();
        row.nonfinite = static_cast<int>(r.u32());
        ck.history.push_back(row);
    }
    return ck;
}

// Copy checkpoint parameters into a live store; shape or name mismatches are
// rejected with the differing entry named.
inline void restore_params(ParamStore& store, const ParamStore& saved) {
    if (store.entries.size() != saved.entries.size())
        throw std::invalid_argument("checkpoint restore: expected " +
                                    std::to_string(store.entries.size()) + " parameters, found " +
                                    std::to_string(saved.entries.size()));
    for (auto& e : store.entries) {
        if (!saved.contains(e.name))
            throw std::invalid_argument("checkpoint restore: missing parameter " + e.name);
        const auto& src = saved.at(e.name);
        if (src.value.shape != e.value.shape)
            throw std::invalid_argument("checkpoint restore: shape mismatch for " + e.name + ": " +
                                        shape_str(e.value.shape) + " vs " +
                                        shape_str(src.value.shape));
        e.value = src.value;
    }
}

// ---------------------------------------------------------------------------
// Training loop.

struct TrainConfig {
    Schedule schedule;
    AdamWConfig adamw;
    double grad_clip = 5.0;  // 0 disables
    LossWeights weights;
    int batch_size = 8;
    int log_interval = 100;
    int ckpt_interval = 1000;
    double val_fraction = 0.1;
    double mask_ratio = 0.5;  // masked-finetune baselines only
    std::uint64_t seed = 1;

    void validate() const {
        schedule.validate();
        if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
        if (val_fraction < 0.0 || val_fraction >= 1.0)
            throw std::invalid_argument("TrainConfig: val_fraction outside [0,1)");
        if (mask_ratio < 0.0 || mask_ratio > 1.0)
            throw std::invalid_argument("TrainConfig: mask_ratio outside [0,1]");
    }
};

struct TrainResult {
    std::vector<TrainLogRow> log;
    long final_step = 0;
    std::string final_ckpt_path;
};

// Deterministic split: the trailing fraction of the corpus is held out.
inline std::pair<std::vector<const Scenario*>, std::vector<const Scenario*>> split_corpus(
    const std::vector<Scenario>& corpus, double val_fraction) {
    std::vector<const Scenario*> train, val;
    std::size_t n_val = static_cast<std::size_t>(val_fraction * static_cast<double>(corpus.size()));
    if (val_fraction > 0.0 && n_val == 0 && corpus.size() > 1) n_val = 1;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        if (corpus[i].targets.empty()) continue;  // nothing to supervise
        if (i + n_val >= corpus.size())
            val.push_back(&corpus[i]);
        else
            train.push_back(&corpus[i]);
    }
    return {train, val};
}

// The loop is model-agnostic: `loss_fn` builds the loss graph for one
// scenario (receiving a per-(step, slot) salt for stochastic regularizers
// like history masking), `heldout_fn` reports the held-out reconstruction
// metric for logging, both deterministic given their arguments.
struct Trainer {
    ParamStore* params = nullptr;
    TrainConfig cfg;
    std::function<LossNodes(Graph&, const Scenario&, std::uint64_t salt)> loss_fn;
    std::function<double()> heldout_fn;  // optional
    std::string ckpt_path;               // optional: periodic + final checkpoints
    std::string config_text;             // embedded into checkpoints
    std::uint64_t fingerprint = 0;

    TrainResult run(const std::vector<const Scenario*>& train_set, long start_step = 0,
                    OptimState* resume = nullptr, std::vector<TrainLogRow> history = {}) {
        cfg.validate();
        if (!params) throw std::invalid_argument("Trainer: no parameter store");
        if (train_set.empty())
            throw std::invalid_argument("Trainer: corpus is empty (or has no supervisable scenarios)");

        OptimState state = resume ? *resume : OptimState::init(*params);
        Rng batch_root = Rng(cfg.seed).derive("batch");
        TrainResult result;
        result.log = std::move(history);
        int nonfinite = 0;

        for (long step = start_step + 1; step <= cfg.schedule.total_steps; ++step) {
            Rng srng = batch_root.derive(static_cast<std::uint64_t>(step));
            GradientMap acc;
            for (const auto& e : params->entries) acc.grads.push_back(NdArray::zeros(e.value.shape));
            double sum_total = 0, sum_reg = 0, sum_cls = 0, sum_his = 0;
            for (int b = 0; b < cfg.batch_size; ++b) {
                const Scenario& s =
                    *train_set[static_cast<std::size_t>(srng.uniform_int(train_set.size()))];
                std::uint64_t salt = mix64((static_cast<std::uint64_t>(step) << 8) ^
                                           static_cast<std::uint64_t>(b) ^ cfg.seed);
                Graph g;
                LossNodes ln = loss_fn(g, s, salt);
                GradientMap gm = g.backward(ln.total, *params);
                for (std::size_t i = 0; i < acc.grads.size(); ++i)
                    for (std::size_t j = 0; j < acc.grads[i].numel(); ++j)
                        acc.grads[i].v[j] += gm.grads[i].v[j];
                sum_total += g.val(ln.total).v[0];
                sum_reg += g.val(ln.reg).v[0];
                sum_cls += g.val(ln.cls).v[0];
                sum_his += g.val(ln.his).v[0];
            }
            double inv = 1.0 / static_cast<double>(cfg.batch_size);
            for (auto& a : acc.grads)
                for (double& x : a.v) x *= inv;
            clip_gradients(acc, cfg.grad_clip);
            double lr = lr_at(static_cast<int>(step), cfg.schedule);
            if (!optimizer_step(*params, acc, state, lr, cfg.adamw)) {
                ++nonfinite;
                std::cerr << "[train] step " << step << ": non-finite gradient, step rejected\n";
            }

            if (step % cfg.log_interval == 0 || step == cfg.schedule.total_steps) {
                TrainLogRow row;
                row.step = step;
                row.lr = lr;
                row.total = sum_total * inv;
                row.reg = sum_reg * inv;
                row.cls = sum_cls * inv;
                row.his = sum_his * inv;
                row.recon_ade = heldout_fn ? heldout_fn() : -1.0;
                row.nonfinite = nonfinite;
                result.log.push_back(row);
            }
            if (!ckpt_path.empty() &&
                (step % cfg.ckpt_interval == 0 || step == cfg.schedule.total_steps)) {
                Checkpoint ck;
                ck.fingerprint = fingerprint;
                ck.config_text = config_text;
                ck.step = step;
                ck.params = *params;
                ck.optim = state;
                ck.has_optim = true;
                ck.history = result.log;
                save_checkpoint(ck, ckpt_path);
                result.final_ckpt_path = ckpt_path;
            }
            result.final_step = step;
        }
        return result;
    }
};

inline void write_train_log_csv(const std::vector<TrainLogRow>& rows, const std::string& path) {
    std::string out = join_csv(TrainLogRow::csv_header()) + "\n";
    for (const auto& r : rows) out += join_csv(r.csv_row()) + "\n";
    write_text_file(path, out);
}

}  // namespace himap
