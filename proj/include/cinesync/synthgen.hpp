#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

#include "cinesync/cine.hpp"
#include "cinesync/cine_io.hpp"
#include "cinesync/rng.hpp"

namespace cinesync {

/// Synthetic cine generator. Every member of a pair observes the same latent
/// cardiac phase trajectory through its own fixed random view map, with
/// independently jittered frame counts, so cross-view frame correspondence is
/// known exactly.
struct SynthConfig {
    uint64_t seed = 0;
    int frames_per_cycle = 32;
    int feature_dim = 24;
    std::vector<std::string> views = {"A", "B"};
    double noise_std = 0.05;
    double phase_warp = 0.4;    // 0 = symmetric cycle, larger = shorter systole
    double length_jitter = 0.25;
    int cycles = 1;

    void validate() const {
        if (frames_per_cycle < 8) throw std::invalid_argument("SynthConfig: frames_per_cycle must be >= 8");
        if (feature_dim < 4) throw std::invalid_argument("SynthConfig: feature_dim must be >= 4");
        if (views.empty()) throw std::invalid_argument("SynthConfig: need at least one view tag");
        if (noise_std < 0.0) throw std::invalid_argument("SynthConfig: noise_std must be >= 0");
        if (phase_warp < 0.0 || phase_warp > 0.9)
            throw std::invalid_argument("SynthConfig: phase_warp must lie in [0, 0.9]");
        if (length_jitter < 0.0 || length_jitter > 0.5)
            throw std::invalid_argument("SynthConfig: length_jitter must lie in [0, 0.5]");
        if (cycles < 1) throw std::invalid_argument("SynthConfig: cycles must be >= 1");
    }
};

namespace synth_detail {

constexpr int kHarmonics = 8;
constexpr double kCycleDurationMs = 800.0;
constexpr uint64_t kLengthTag = 0x4C454E47;  // "LENG"
constexpr uint64_t kNoiseTag = 0x4E4F4953;   // "NOIS"

/// Fraction of the cycle spent in systole; phase_warp = 0 gives 1/2.
inline double systole_fraction(double phase_warp) { return 0.5 * (1.0 - phase_warp); }

/// Monotone phase trajectory over one cycle: sweeps [0, pi) during the first
/// `rho` of the cycle and [pi, 2*pi) during the rest.
inline double cycle_phase(double x, double rho) {
    return x < rho ? std::numbers::pi * x / rho
                   : std::numbers::pi * (1.0 + (x - rho) / (1.0 - rho));
}

/// Fixed random sinusoidal rendering map for one (seed, view, pair) triple.
/// Coefficients mix three sources so the learning task mirrors the real one:
/// a seed-wide shared bank (the anatomy every view observes), a view bank
/// (the imaging plane, fixed across pairs), and a small per-pair perturbation
/// (patient variation). Without the shared bank phase-matched frames of two
/// views would be statistically unrelated and no per-frame encoder could
/// bridge them; without the view bank the task would be trivial.
struct ViewMap {
    int feature_dim;
    std::vector<double> amp;      // feature_dim x kHarmonics per bank
    std::vector<int> harmonic;    // integer frequencies keep the map 2*pi periodic
    std::vector<double> offset;

    static constexpr double kSharedFraction = 0.6;
    static constexpr double kPairAmpJitter = 0.3;
    static constexpr double kPairOffsetJitter = 0.25;

    ViewMap(const SynthConfig& cfg, const std::string& view, int pair_index) : feature_dim(cfg.feature_dim) {
        const int n = feature_dim * kHarmonics;
        amp.assign(2 * n, 0.0);
        harmonic.assign(2 * n, 1);
        offset.assign(2 * n, 0.0);
        const double norm = 1.0 / std::sqrt(2.0 * kHarmonics);
        const double w_shared = norm * std::sqrt(2.0 * kSharedFraction);
        const double w_view = norm * std::sqrt(2.0 * (1.0 - kSharedFraction));

        Rng shared_rng(mix_seed(cfg.seed, hash64("__shared__"), 0x56424153));
        Rng view_rng(mix_seed(cfg.seed, hash64(view), 0x56424153));
        for (int i = 0; i < n; ++i) {
            amp[i] = w_shared * shared_rng.normal();
            harmonic[i] = 1 + shared_rng.below_int(4);
            offset[i] = shared_rng.uniform(0.0, 2.0 * std::numbers::pi);
        }
        for (int i = n; i < 2 * n; ++i) {
            amp[i] = w_view * view_rng.normal();
            harmonic[i] = 1 + view_rng.below_int(4);
            offset[i] = view_rng.uniform(0.0, 2.0 * std::numbers::pi);
        }
        Rng pair_rng(mix_seed(cfg.seed, hash64(view), static_cast<uint64_t>(pair_index), 0x50414952));
        for (int i = 0; i < 2 * n; ++i) {
            amp[i] *= 1.0 + kPairAmpJitter * pair_rng.normal();
            offset[i] += kPairOffsetJitter * pair_rng.normal();
        }
    }

    void render(double theta, std::span<double> out) const {
        const int n = feature_dim * kHarmonics;
        for (int f = 0; f < feature_dim; ++f) {
            double v = 0.0;
            for (int bank = 0; bank < 2; ++bank) {
                const int base = bank * n + f * kHarmonics;
                for (int r = 0; r < kHarmonics; ++r)
                    v += amp[base + r] * std::sin(harmonic[base + r] * theta + offset[base + r]);
            }
            out[f] = v;
        }
    }
};

} // namespace synth_detail

/// Generates the `member`-th cine of a pair; members share the latent
/// trajectory but have their own view map, length jitter and noise streams.
/// Frames sample the trajectory at a fixed rate of frames_per_cycle per
/// cycle; the jittered frame count trims the covered span, so a cine spans at
/// most its nominal cycles and usually a little less (like real recordings
/// that stop short of a full beat). Phases therefore never wrap within a
/// cycle count, and the first and last frames are genuinely different states.
inline Cine generate_member(const SynthConfig& cfg, int pair_index, int member) {
    cfg.validate();
    const std::string& view = cfg.views[member % cfg.views.size()];
    const double rho = synth_detail::systole_fraction(cfg.phase_warp);

    Rng len_rng(mix_seed(cfg.seed, synth_detail::kLengthTag, static_cast<uint64_t>(pair_index),
                         static_cast<uint64_t>(member)));
    const int base = cfg.frames_per_cycle * cfg.cycles;
    const double trim = cfg.length_jitter * len_rng.uniform();
    const int t_count = std::max(3, static_cast<int>(std::llround(base * (1.0 - trim))));

    const synth_detail::ViewMap view_map(cfg, view, pair_index);
    Rng noise_rng(mix_seed(cfg.seed, synth_detail::kNoiseTag, static_cast<uint64_t>(pair_index),
                           static_cast<uint64_t>(member)));

    Cine cine;
    cine.view = view;
    cine.cycle_count = cfg.cycles;
    cine.frame_time_ms = synth_detail::kCycleDurationMs / cfg.frames_per_cycle;
    cine.frames = Matrix(t_count, cfg.feature_dim);
    cine.latent_phase.resize(t_count);

    std::vector<int> cycle_of(t_count);
    for (int j = 0; j < t_count; ++j) {
        const double s = static_cast<double>(j) / cfg.frames_per_cycle;
        const int c = static_cast<int>(s);
        const double theta = synth_detail::cycle_phase(s - c, rho);
        cycle_of[j] = c;
        cine.latent_phase[j] = theta;
        view_map.render(theta, cine.frames.row(j));
        if (cfg.noise_std > 0.0)
            for (int f = 0; f < cfg.feature_dim; ++f) cine.frames(j, f) += cfg.noise_std * noise_rng.normal();
    }

    // ED = the frame of minimal |phase| in each cycle (the first, since phase
    // is monotone); ES = the later frame closest to pi, emitted only when the
    // cycle actually reaches maximal contraction.
    for (int c = 0; c < cfg.cycles; ++c) {
        int ed = -1, es = -1;
        double best_es = std::numeric_limits<double>::infinity();
        bool reached_es = false;
        for (int j = 0; j < t_count; ++j) {
            if (cycle_of[j] != c) continue;
            if (ed < 0) ed = j;
            if (cine.latent_phase[j] >= std::numbers::pi) reached_es = true;
            if (j > ed) {
                const double dist = std::abs(cine.latent_phase[j] - std::numbers::pi);
                if (dist < best_es) {
                    best_es = dist;
                    es = j;
                }
            }
        }
        if (ed < 0) continue;
        if (es < 0 || !reached_es) {
            // partial trailing cycle: its ED still anchors the previous
            // cycle's diastole span
            if (!cine.keyframes.empty()) cine.keyframes.push_back({KeyframeKind::ED, ed});
            continue;
        }
        cine.keyframes.push_back({KeyframeKind::ED, ed});
        cine.keyframes.push_back({KeyframeKind::ES, es});
    }

    cine.validate();
    return cine;
}

/// `count` same-heart cines for one pair index, views cycling through
/// cfg.views.
inline std::vector<Cine> generate_group(const SynthConfig& cfg, int pair_index, int count) {
    if (count < 1) throw std::invalid_argument("generate_group: count must be >= 1");
    std::vector<Cine> members;
    members.reserve(count);
    for (int m = 0; m < count; ++m) members.push_back(generate_member(cfg, pair_index, m));
    return members;
}

inline CinePair generate_pair(const SynthConfig& cfg, int pair_index) {
    auto members = generate_group(cfg, pair_index, 2);
    return CinePair{std::move(members[0]), std::move(members[1]), true};
}

/// Writes n_pairs pairs plus a manifest with contiguous train/val/test splits
/// (fraction boundaries rounded to whole pairs). Regeneration with the same
/// config is byte-identical.
inline std::vector<ManifestEntry> generate_dataset(const SynthConfig& cfg, int n_pairs,
                                                   const std::array<double, 3>& split_fractions,
                                                   const std::filesystem::path& out_dir) {
    cfg.validate();
    if (n_pairs < 1) throw std::invalid_argument("generate_dataset: n_pairs must be >= 1");
    const double total = split_fractions[0] + split_fractions[1] + split_fractions[2];
    if (std::abs(total - 1.0) > 1e-9)
        throw std::invalid_argument("generate_dataset: split fractions must sum to 1");

    std::filesystem::create_directories(out_dir);
    const long train_end = std::llround(split_fractions[0] * n_pairs);
    const long val_end = std::llround((split_fractions[0] + split_fractions[1]) * n_pairs);

    std::vector<ManifestEntry> entries;
    entries.reserve(n_pairs);
    for (int i = 0; i < n_pairs; ++i) {
        const CinePair pair = generate_pair(cfg, i);
        char id[32];
        std::snprintf(id, sizeof(id), "pair_%04d", i);
        const std::string stem_a = std::string(id) + "_a";
        const std::string stem_b = std::string(id) + "_b";
        write_cine(pair.a, out_dir / stem_a);
        write_cine(pair.b, out_dir / stem_b);
        ManifestEntry entry;
        entry.pair_id = id;
        entry.a = stem_a + ".json";
        entry.b = stem_b + ".json";
        entry.split = i < train_end ? "train" : (i < val_end ? "val" : "test");
        entries.push_back(std::move(entry));
    }
    write_manifest(entries, out_dir / "manifest.json");
    return entries;
}

// JSON round trip for the generator config (CLI config files).

inline void to_json(json& j, const SynthConfig& cfg) {
    j = json{{"seed", cfg.seed},
             {"frames_per_cycle", cfg.frames_per_cycle},
             {"feature_dim", cfg.feature_dim},
             {"views", cfg.views},
             {"noise_std", cfg.noise_std},
             {"phase_warp", cfg.phase_warp},
             {"length_jitter", cfg.length_jitter},
             {"cycles", cfg.cycles}};
}

inline void from_json(const json& j, SynthConfig& cfg) {
    cfg.seed = j.value("seed", cfg.seed);
    cfg.frames_per_cycle = j.value("frames_per_cycle", cfg.frames_per_cycle);
    cfg.feature_dim = j.value("feature_dim", cfg.feature_dim);
    cfg.views = j.value("views", cfg.views);
    cfg.noise_std = j.value("noise_std", cfg.noise_std);
    cfg.phase_warp = j.value("phase_warp", cfg.phase_warp);
    cfg.length_jitter = j.value("length_jitter", cfg.length_jitter);
    cfg.cycles = j.value("cycles", cfg.cycles);
}

} // namespace cinesync
