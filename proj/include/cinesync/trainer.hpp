#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "cinesync/cine_io.hpp"
#include "cinesync/encoder.hpp"
#include "cinesync/losses.hpp"
#include "cinesync/rng.hpp"

namespace cinesync {

struct TrainConfig {
    int batch_size = 4;
    double lr = 1e-4;
    double lr_decay = 0.1;
    int decay_every = 5000;
    int frames_per_cine = 20;
    int iterations = 2000;
    uint64_t seed = 0;
    LossWeights weights;
    int alpha = 5;
    double lambda_reg = 0.001;
    int triplets_total = 8;
    int triplets_unsorted = 6;
    int triplet_window = 7;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    double eps_var = 1e-6;
    bool symmetric_inter = true;
    double grad_clip = 0.0; // 0 disables clipping
    int checkpoint_every = 0; // 0 = final checkpoint only
    int threads = 1;

    void validate() const {
        if (batch_size < 1 || iterations < 0 || decay_every < 1 || frames_per_cine < 3 ||
            triplets_total < 1 || triplets_unsorted < 0 || triplets_unsorted > triplets_total ||
            triplet_window < 3 || threads < 1)
            throw std::invalid_argument("TrainConfig: invalid counts");
        if (!(lr > 0.0) || !(lr_decay > 0.0) || alpha < 1 || lambda_reg < 0.0 || grad_clip < 0.0 ||
            !(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0) ||
            !(adam_eps > 0.0))
            throw std::invalid_argument("TrainConfig: invalid optimizer settings");
        weights.validate();
    }

    LossConfig loss_config() const { return LossConfig{alpha, lambda_reg, eps_var, symmetric_inter, threads}; }

    /// Exact schedule: lr * lr_decay^floor(iteration / decay_every).
    double lr_at(int iteration) const {
        return lr * std::pow(lr_decay, static_cast<double>(iteration / decay_every));
    }
};

// ---- frame subsampling ----

struct FrameSubsample {
    std::vector<int> indices; // ascending positions in the source cine
    Matrix frames;
};

/// Draws m distinct frames uniformly without replacement (all frames when the
/// cine is short), sorted ascending so losses see chronological order.
inline FrameSubsample subsample_frames(const Cine& cine, Rng& rng, int m = 20) {
    const int t = cine.t();
    FrameSubsample out;
    if (t <= m) {
        out.indices.resize(t);
        std::iota(out.indices.begin(), out.indices.end(), 0);
    } else {
        std::vector<int> all(t);
        std::iota(all.begin(), all.end(), 0);
        for (int i = 0; i < m; ++i) {
            const int j = i + rng.below_int(t - i);
            std::swap(all[i], all[j]);
        }
        out.indices.assign(all.begin(), all.begin() + m);
        std::sort(out.indices.begin(), out.indices.end());
    }
    out.frames = Matrix(static_cast<int>(out.indices.size()), cine.f());
    for (size_t r = 0; r < out.indices.size(); ++r)
        std::copy_n(cine.frames.row(out.indices[r]).data(), cine.f(),
                    out.frames.row(static_cast<int>(r)).data());
    return out;
}

// ---- Adam ----

struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    int64_t t = 0;

    static AdamState zeros(size_t n) { return AdamState{std::vector<double>(n, 0.0), std::vector<double>(n, 0.0), 0}; }
};

/// Bias-corrected Adam update, in place. Rejects non-finite gradients before
/// touching any state so an aborted iteration leaves params and moments
/// untouched.
inline void adam_step(std::vector<double>& params, const std::vector<double>& grads, AdamState& state,
                      double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) {
    if (params.size() != grads.size() || state.m.size() != params.size() || state.v.size() != params.size())
        throw ShapeError("adam_step: size mismatch");
    for (size_t i = 0; i < grads.size(); ++i)
        if (!std::isfinite(grads[i]))
            throw std::runtime_error("adam_step: non-finite gradient at parameter " + std::to_string(i));

    state.t += 1;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
    for (size_t i = 0; i < params.size(); ++i) {
        state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * grads[i];
        state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * grads[i] * grads[i];
        const double mhat = state.m[i] / c1;
        const double vhat = state.v[i] / c2;
        params[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
}

// ---- checkpoints ----

inline void to_json(json& j, const EncoderConfig& cfg) {
    j = json{{"input_dim", cfg.input_dim},   {"hidden_dim", cfg.hidden_dim},
             {"context", cfg.context},       {"agg_hidden", cfg.agg_hidden},
             {"embed_dim", cfg.embed_dim},   {"cls_hidden1", cfg.cls_hidden1},
             {"cls_hidden2", cfg.cls_hidden2}};
}

inline void from_json(const json& j, EncoderConfig& cfg) {
    cfg.input_dim = j.value("input_dim", cfg.input_dim);
    cfg.hidden_dim = j.value("hidden_dim", cfg.hidden_dim);
    cfg.context = j.value("context", cfg.context);
    cfg.agg_hidden = j.value("agg_hidden", cfg.agg_hidden);
    cfg.embed_dim = j.value("embed_dim", cfg.embed_dim);
    cfg.cls_hidden1 = j.value("cls_hidden1", cfg.cls_hidden1);
    cfg.cls_hidden2 = j.value("cls_hidden2", cfg.cls_hidden2);
}

inline void to_json(json& j, const LossWeights& w) {
    j = json{{"w_spatial", w.w_spatial}, {"w_temporal", w.w_temporal}, {"w_inter", w.w_inter}};
}

inline void from_json(const json& j, LossWeights& w) {
    w.w_spatial = j.value("w_spatial", w.w_spatial);
    w.w_temporal = j.value("w_temporal", w.w_temporal);
    w.w_inter = j.value("w_inter", w.w_inter);
}

inline void to_json(json& j, const TrainConfig& cfg) {
    j = json{{"batch_size", cfg.batch_size},
             {"lr", cfg.lr},
             {"lr_decay", cfg.lr_decay},
             {"decay_every", cfg.decay_every},
             {"frames_per_cine", cfg.frames_per_cine},
             {"iterations", cfg.iterations},
             {"seed", cfg.seed},
             {"weights", cfg.weights},
             {"alpha", cfg.alpha},
             {"lambda_reg", cfg.lambda_reg},
             {"triplets_total", cfg.triplets_total},
             {"triplets_unsorted", cfg.triplets_unsorted},
             {"triplet_window", cfg.triplet_window},
             {"adam_beta1", cfg.adam_beta1},
             {"adam_beta2", cfg.adam_beta2},
             {"adam_eps", cfg.adam_eps},
             {"eps_var", cfg.eps_var},
             {"symmetric_inter", cfg.symmetric_inter},
             {"grad_clip", cfg.grad_clip},
             {"checkpoint_every", cfg.checkpoint_every},
             {"threads", cfg.threads}};
}

inline void from_json(const json& j, TrainConfig& cfg) {
    cfg.batch_size = j.value("batch_size", cfg.batch_size);
    cfg.lr = j.value("lr", cfg.lr);
    cfg.lr_decay = j.value("lr_decay", cfg.lr_decay);
    cfg.decay_every = j.value("decay_every", cfg.decay_every);
    cfg.frames_per_cine = j.value("frames_per_cine", cfg.frames_per_cine);
    cfg.iterations = j.value("iterations", cfg.iterations);
    cfg.seed = j.value("seed", cfg.seed);
    if (j.contains("weights")) cfg.weights = j.at("weights").get<LossWeights>();
    cfg.alpha = j.value("alpha", cfg.alpha);
    cfg.lambda_reg = j.value("lambda_reg", cfg.lambda_reg);
    cfg.triplets_total = j.value("triplets_total", cfg.triplets_total);
    cfg.triplets_unsorted = j.value("triplets_unsorted", cfg.triplets_unsorted);
    cfg.triplet_window = j.value("triplet_window", cfg.triplet_window);
    cfg.adam_beta1 = j.value("adam_beta1", cfg.adam_beta1);
    cfg.adam_beta2 = j.value("adam_beta2", cfg.adam_beta2);
    cfg.adam_eps = j.value("adam_eps", cfg.adam_eps);
    cfg.eps_var = j.value("eps_var", cfg.eps_var);
    cfg.symmetric_inter = j.value("symmetric_inter", cfg.symmetric_inter);
    cfg.grad_clip = j.value("grad_clip", cfg.grad_clip);
    cfg.checkpoint_every = j.value("checkpoint_every", cfg.checkpoint_every);
    cfg.threads = j.value("threads", cfg.threads);
}

struct Checkpoint {
    EncoderConfig config;
    EncoderParams params;
    uint64_t seed = 0;
    int64_t iteration = 0;
    std::optional<AdamState> adam;
};

/// Writes `<stem>.json` (metadata) + `<stem>.bin` (flat f64le parameters in
/// flatten order, followed by the Adam moments when present).
inline void save_checkpoint(const Checkpoint& ckpt, const fs::path& stem) {
    json header;
    header["format_version"] = 1;
    header["kind"] = "checkpoint";
    header["config"] = ckpt.config;
    header["seed"] = ckpt.seed;
    header["iteration"] = ckpt.iteration;
    const auto flat = ckpt.params.flatten();
    header["param_count"] = flat.size();
    header["has_adam"] = ckpt.adam.has_value();
    header["adam_t"] = ckpt.adam ? ckpt.adam->t : 0;

    fs::path json_path = stem;
    json_path += ".json";
    fs::path bin_path = stem;
    bin_path += ".bin";
    std::ofstream hout(json_path);
    if (!hout) throw std::runtime_error("cannot write " + json_path.string());
    hout << header.dump(2) << "\n";
    std::ofstream bout(bin_path, std::ios::binary);
    if (!bout) throw std::runtime_error("cannot write " + bin_path.string());
    write_doubles(bout, flat.data(), flat.size());
    if (ckpt.adam) {
        write_doubles(bout, ckpt.adam->m.data(), ckpt.adam->m.size());
        write_doubles(bout, ckpt.adam->v.data(), ckpt.adam->v.size());
    }
}

inline Checkpoint load_checkpoint(const fs::path& path) {
    fs::path stem = path;
    if (stem.extension() == ".json" || stem.extension() == ".bin") stem.replace_extension();
    fs::path json_path = stem;
    json_path += ".json";
    fs::path bin_path = stem;
    bin_path += ".bin";

    std::ifstream hin(json_path);
    if (!hin) throw FormatError("cannot open checkpoint header: " + json_path.string());
    json header;
    try {
        header = json::parse(hin);
    } catch (const json::parse_error& e) {
        throw FormatError("malformed checkpoint header " + json_path.string() + ": " + e.what());
    }
    if (header.value("format_version", -1) != 1 || header.value("kind", "") != std::string("checkpoint"))
        throw FormatError("unsupported checkpoint format in " + json_path.string());

    Checkpoint ckpt;
    ckpt.config = header.at("config").get<EncoderConfig>();
    ckpt.seed = header.at("seed").get<uint64_t>();
    ckpt.iteration = header.at("iteration").get<int64_t>();
    const size_t count = header.at("param_count").get<size_t>();
    if (count != EncoderParams::count(ckpt.config))
        throw FormatError("checkpoint param_count disagrees with its config: " + json_path.string());
    const bool has_adam = header.at("has_adam").get<bool>();

    const auto values = read_all_doubles(bin_path);
    const size_t expected = has_adam ? 3 * count : count;
    if (values.size() != expected)
        throw FormatError("checkpoint payload size mismatch in " + bin_path.string());
    if (!all_finite(std::span<const double>(values)))
        throw FormatError("non-finite values in checkpoint payload: " + bin_path.string());

    ckpt.params = EncoderParams::unflatten(ckpt.config, std::span<const double>(values.data(), count));
    if (has_adam) {
        AdamState adam = AdamState::zeros(count);
        std::copy_n(values.data() + count, count, adam.m.data());
        std::copy_n(values.data() + 2 * count, count, adam.v.data());
        adam.t = header.at("adam_t").get<int64_t>();
        ckpt.adam = std::move(adam);
    }
    return ckpt;
}

// ---- training loop ----

struct IterationLog {
    int iteration;
    double loss;
    double spatial;
    double temporal;
    double inter;
    double lr;
};

struct TrainResult {
    EncoderParams params;
    AdamState adam;
    std::vector<IterationLog> log;
    fs::path checkpoint_stem;
    fs::path metrics_path;
};

/// Iteration-based training over single-cycle pairs: draw a batch with
/// replacement, subsample frames, pre-draw triplets, evaluate the combined
/// loss, Adam-update. All randomness comes from one sequential stream, so a
/// seed pins every byte of the output. Metrics are logged before each update
/// (values describe the pre-update parameters). On a non-finite loss or
/// gradient the last good checkpoint is written before the error propagates.
inline TrainResult train(const std::vector<CinePair>& pairs, EncoderConfig enc_cfg,
                         const TrainConfig& cfg, const fs::path& out_dir) {
    cfg.validate();
    std::vector<const CinePair*> usable;
    for (const auto& p : pairs)
        if (p.a.cycle_count == 1 && p.b.cycle_count == 1) usable.push_back(&p);
    if (static_cast<int>(usable.size()) < cfg.batch_size)
        throw std::invalid_argument("train: need at least batch_size single-cycle training pairs, have " +
                                    std::to_string(usable.size()));
    for (const auto* p : usable)
        if (p->a.f() != p->b.f()) throw ShapeError("train: pair members have different feature widths");
    if (enc_cfg.input_dim == 0) enc_cfg.input_dim = usable.front()->a.f();
    enc_cfg.validate();
    if (usable.front()->a.f() != enc_cfg.input_dim)
        throw ShapeError("train: encoder input_dim does not match cine feature width");

    fs::create_directories(out_dir);
    const fs::path metrics_path = out_dir / "metrics.jsonl";
    std::ofstream metrics(metrics_path);
    if (!metrics) throw std::runtime_error("cannot write " + metrics_path.string());

    TrainResult result;
    result.metrics_path = metrics_path;
    result.params = init_params(enc_cfg, cfg.seed);
    std::vector<double> flat = result.params.flatten();
    result.adam = AdamState::zeros(flat.size());
    Rng rng(mix_seed(cfg.seed, hash64("train-loop")));
    const LossConfig loss_cfg = cfg.loss_config();
    const bool need_triplets = cfg.weights.w_temporal > 0.0;

    auto write_ckpt = [&](const fs::path& stem, int64_t iteration) {
        Checkpoint ckpt{enc_cfg, result.params, cfg.seed, iteration, result.adam};
        save_checkpoint(ckpt, stem);
    };
    auto log_line = [&](const IterationLog& entry) {
        json j{{"iteration", entry.iteration}, {"loss", entry.loss},   {"spatial", entry.spatial},
               {"temporal", entry.temporal},   {"inter", entry.inter}, {"lr", entry.lr}};
        metrics << j.dump() << "\n";
        result.log.push_back(entry);
    };

    for (int it = 0; it < cfg.iterations; ++it) {
        std::vector<PairBatchItem> batch;
        batch.reserve(cfg.batch_size);
        for (int b = 0; b < cfg.batch_size; ++b) {
            const CinePair& pair = *usable[rng.below_int(static_cast<int>(usable.size()))];
            PairBatchItem item;
            item.frames_a = subsample_frames(pair.a, rng, cfg.frames_per_cine).frames;
            item.frames_b = subsample_frames(pair.b, rng, cfg.frames_per_cine).frames;
            if (need_triplets) {
                item.triplets_a = sample_triplets(item.frames_a, rng, cfg.triplets_total,
                                                  cfg.triplets_unsorted, cfg.triplet_window);
                item.triplets_b = sample_triplets(item.frames_b, rng, cfg.triplets_total,
                                                  cfg.triplets_unsorted, cfg.triplet_window);
            }
            batch.push_back(std::move(item));
        }

        const double lr_now = cfg.lr_at(it);
        try {
            auto loss = combined_loss(batch, result.params, cfg.weights, loss_cfg);
            log_line({it, loss.value, loss.spatial, loss.temporal, loss.inter, lr_now});
            if (!std::isfinite(loss.value))
                throw std::runtime_error("train: non-finite loss at iteration " + std::to_string(it));
            if (cfg.grad_clip > 0.0) {
                double norm = 0.0;
                for (double g : loss.grad) norm += g * g;
                norm = std::sqrt(norm);
                if (norm > cfg.grad_clip) {
                    const double s = cfg.grad_clip / norm;
                    for (double& g : loss.grad) g *= s;
                }
            }
            adam_step(flat, loss.grad, result.adam, lr_now, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
            result.params = EncoderParams::unflatten(enc_cfg, flat);
        } catch (const std::exception&) {
            write_ckpt(out_dir / "checkpoint_final", it); // last good parameters
            throw;
        }

        if (cfg.checkpoint_every > 0 && (it + 1) % cfg.checkpoint_every == 0) {
            char name[40];
            std::snprintf(name, sizeof(name), "checkpoint_%06d", it + 1);
            write_ckpt(out_dir / name, it + 1);
        }
    }

    result.checkpoint_stem = out_dir / "checkpoint_final";
    write_ckpt(result.checkpoint_stem, cfg.iterations);
    return result;
}

/// Convenience entry: loads the manifest's train split and runs train().
inline TrainResult train_from_manifest(const fs::path& manifest_path, const EncoderConfig& enc_cfg,
                                       const TrainConfig& cfg, const fs::path& out_dir) {
    const auto entries = read_manifest(manifest_path);
    std::vector<CinePair> pairs;
    for (const auto& e : entries)
        if (e.split == "train") pairs.push_back(load_pair(e, manifest_path));
    if (pairs.empty()) throw std::invalid_argument("train: manifest has no train pairs");
    return train(pairs, enc_cfg, cfg, out_dir);
}

} // namespace cinesync
