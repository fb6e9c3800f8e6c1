// Copyright (c) 2026 himap contributors
// SPDX-License-Identifier: Apache-2.0
//
// Model hyperparameters and the component toggles used by the ablation
// harness. Toggle dependencies mirror the cumulative build-up of the model:
// each stage only exists on top of the previous one.

#pragma once

#include <stdexcept>
#include <string>

#include "himap/geom.hpp"

namespace himap {

struct ModelConfig {
    int d_model = 32;
    int heads = 8;
    int t_obs = 10;
    int t_future = 12;
    int t_hist = 10;
    int k_modes = 6;
    int n_chunks = 3;      // recurrent decoding chunks; must divide t_future
    int max_attended = 16; // per-step cap for the direct agent-history variant
    int fourier_freqs = 4;
    double radius = 50.0;  // agent-lane connectivity radius, meters
    double eps_b = 1e-3;   // Laplace scale floor

    // Angle channels keep only the harmonics: the raw value is redundant with
    // sin/cos and jumps by 2*pi at the wrap, which would break invariance for
    // poses exactly behind a reference frame. The raw distance channel is
    // dropped as well: unnormalized meters (up to the connectivity radius)
    // swamp the unit-scale harmonics at initialization.
    DescriptorFourier descriptor_fourier() const {
        DescriptorFourier f;
        f.distance = {fourier_freqs, 1.0 / 64.0, false};
        f.azimuth = {fourier_freqs, 1.0 / kTwoPi, false};
        f.rel_heading = {fourier_freqs, 1.0 / kTwoPi, false};
        f.time_gap = {fourier_freqs, 1.0 / 16.0, true};
        return f;
    }
    FourierSpec speed_fourier() const { return {fourier_freqs, 1.0 / 16.0, true}; }
    FourierSpec angle_fourier() const { return {fourier_freqs, 1.0 / kTwoPi, false}; }

    void validate() const {
        if (d_model < 1 || heads < 1 || d_model % heads != 0)
            throw std::invalid_argument("ModelConfig: d_model must be a positive multiple of heads");
        if (t_obs < 1 || t_future < 1 || t_hist < 0)
            throw std::invalid_argument("ModelConfig: invalid horizons");
        if (k_modes < 1) throw std::invalid_argument("ModelConfig: k_modes must be >= 1");
        if (n_chunks < 1 || n_chunks > t_future || t_future % n_chunks != 0)
            throw std::invalid_argument(
                "ModelConfig: n_chunks must divide t_future (shared chunk heads need a fixed width)");
        if (radius <= 0.0) throw std::invalid_argument("ModelConfig: radius must be positive");
        if (eps_b <= 0.0) throw std::invalid_argument("ModelConfig: eps_b must be positive");
        if (fourier_freqs < 1) throw std::invalid_argument("ModelConfig: fourier_freqs must be >= 1");
        if (max_attended < 1) throw std::invalid_argument("ModelConfig: max_attended must be >= 1");
    }
};

struct AblationFlags {
    // history query module stages
    bool recurrent_query = true;
    bool hist_occ_map = true;
    bool hist_query_init = true;
    bool hist_temporal_map = true;
    // decoder inputs
    bool dec_temporal_map = true;
    bool dec_updated_query = true;
    bool dec_recurrent = true;

    void validate() const {
        if (hist_occ_map && !recurrent_query)
            throw std::invalid_argument("AblationFlags: hist_occ_map requires recurrent_query");
        if (hist_query_init && !hist_occ_map)
            throw std::invalid_argument("AblationFlags: hist_query_init requires hist_occ_map");
        if (hist_temporal_map && !hist_query_init)
            throw std::invalid_argument("AblationFlags: hist_temporal_map requires hist_query_init");
        if (dec_temporal_map && !hist_temporal_map)
            throw std::invalid_argument("AblationFlags: dec_temporal_map requires hist_temporal_map");
        if (dec_updated_query && !recurrent_query)
            throw std::invalid_argument("AblationFlags: dec_updated_query requires recurrent_query");
    }

    static AblationFlags all_on() { return {}; }
    static AblationFlags all_off() {
        return {false, false, false, false, false, false, false};
    }

    // Cumulative history-query-module rows 1..5; the decoder uses whatever
    // inputs the enabled stages provide.
    static AblationFlags hqm_row(int row) {
        AblationFlags f = all_off();
        f.dec_recurrent = true;
        if (row >= 2) {
            f.recurrent_query = true;
            f.dec_updated_query = true;
        }
        if (row >= 3) f.hist_occ_map = true;
        if (row >= 4) f.hist_query_init = true;
        if (row >= 5) {
            f.hist_temporal_map = true;
            f.dec_temporal_map = true;
        }
        f.validate();
        return f;
    }

    // Decoder-input rows 1..4 on top of the full history query module.
    static AblationFlags decoder_row(int row) {
        AblationFlags f = all_on();
        f.dec_temporal_map = row >= 2;
        f.dec_updated_query = row >= 3;
        f.dec_recurrent = row != 3;
        f.validate();
        return f;
    }

    std::string describe() const {
        auto b = [](bool x) { return x ? "1" : "0"; };
        return std::string("rq=") + b(recurrent_query) + " occ=" + b(hist_occ_map) +
               " init=" + b(hist_query_init) + " tmap=" + b(hist_temporal_map) +
               " dtm=" + b(dec_temporal_map) + " duq=" + b(dec_updated_query) +
               " drec=" + b(dec_recurrent);
    }
};

}  // namespace himap
