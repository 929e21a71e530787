// cinesync: synthesize paired periodic sequences, train synchronization
// embeddings, align and evaluate them. One subcommand per pipeline stage;
// every run drops a run_manifest.json describing how to reproduce it.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cinesync/align.hpp"
#include "cinesync/cine_io.hpp"
#include "cinesync/errors.hpp"
#include "cinesync/eval.hpp"
#include "cinesync/synthgen.hpp"
#include "cinesync/trainer.hpp"
#include "cinesync/version.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace cinesync;

namespace {

enum ExitCode : int {
    kOk = 0,
    kOtherError = 1,
    kMissingFile = 2,
    kMalformedInput = 3,
    kShapeMismatch = 4,
    kDomainViolation = 5,
};

struct RunRecorder {
    std::string command;
    json config = json::object();
    uint64_t seed = 0;
    int threads = 1;
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;
    fs::path out_dir;
    std::chrono::steady_clock::time_point started = std::chrono::steady_clock::now();

    void write() const {
        json doc;
        doc["command"] = command;
        doc["tool_version"] = kVersion;
        doc["config"] = config;
        doc["seed"] = seed;
        doc["threads"] = threads;
        doc["inputs"] = inputs;
        doc["outputs"] = outputs;
        doc["duration_seconds"] =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        const fs::path final_path = out_dir / "run_manifest.json";
        const fs::path tmp_path = out_dir / "run_manifest.json.tmp";
        {
            std::ofstream out(tmp_path);
            if (!out) throw std::runtime_error("cannot write " + tmp_path.string());
            out << doc.dump(2) << "\n";
        }
        fs::rename(tmp_path, final_path);
    }
};

json load_json_file(const std::string& path) {
    if (!fs::exists(path)) throw FormatError("@missing@" + path);
    std::ifstream in(path);
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw FormatError("malformed JSON in " + path + ": " + e.what());
    }
    return doc;
}

void require_exists(const std::string& path) {
    if (!fs::exists(path)) throw FormatError("@missing@" + path);
}

Matrix embed_cine(const Checkpoint& ckpt, const Cine& cine) {
    if (cine.f() != ckpt.config.input_dim)
        throw ShapeError("checkpoint input_dim " + std::to_string(ckpt.config.input_dim) +
                         " does not match cine feature width " + std::to_string(cine.f()));
    return forward(ckpt.params, cine.frames);
}

void write_embedding_csv(const Matrix& emb, const fs::path& csv_path) {
    std::ofstream out(csv_path);
    if (!out) throw std::runtime_error("cannot write " + csv_path.string());
    out << "frame";
    for (int c = 0; c < emb.cols(); ++c) out << ",e_" << c;
    out << "\n";
    char buf[32];
    for (int r = 0; r < emb.rows(); ++r) {
        out << r;
        for (int c = 0; c < emb.cols(); ++c) {
            std::snprintf(buf, sizeof(buf), "%.17g", emb(r, c));
            out << "," << buf;
        }
        out << "\n";
    }
}

Matrix read_embedding_csv(const fs::path& csv_path) {
    std::ifstream in(csv_path);
    if (!in) throw FormatError("@missing@" + csv_path.string());
    std::string line;
    if (!std::getline(in, line)) throw FormatError("empty embedding csv: " + csv_path.string());
    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<double> row;
        size_t pos = 0;
        bool first = true;
        while (pos <= line.size()) {
            size_t comma = line.find(',', pos);
            if (comma == std::string::npos) comma = line.size();
            const std::string cell = line.substr(pos, comma - pos);
            if (!first) row.push_back(std::stod(cell));
            first = false;
            pos = comma + 1;
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw FormatError("embedding csv has no data rows: " + csv_path.string());
    Matrix emb(static_cast<int>(rows.size()), static_cast<int>(rows[0].size()));
    for (size_t r = 0; r < rows.size(); ++r) {
        if (rows[r].size() != rows[0].size())
            throw FormatError("ragged embedding csv: " + csv_path.string());
        for (size_t c = 0; c < rows[r].size(); ++c) emb(static_cast<int>(r), static_cast<int>(c)) = rows[r][c];
    }
    return emb;
}

json path_json(const AlignmentPath& path) {
    json pairs = json::array();
    for (const auto& [i, j] : path.pairs) pairs.push_back(json::array({i, j}));
    return pairs;
}

// ---- subcommand implementations ----

int cmd_synth(const std::string& config_path, const std::string& out_dir, std::optional<uint64_t> seed,
              std::optional<int> pairs_flag, std::optional<std::vector<double>> split_flag, int threads) {
    SynthConfig cfg;
    int n_pairs = 250;
    std::array<double, 3> split{0.8, 0.2, 0.0};
    json cfg_json = json::object();
    if (!config_path.empty()) {
        cfg_json = load_json_file(config_path);
        cfg = cfg_json.get<SynthConfig>();
        n_pairs = cfg_json.value("pairs", n_pairs);
        if (cfg_json.contains("split")) {
            const auto s = cfg_json.at("split").get<std::vector<double>>();
            if (s.size() != 3) throw std::invalid_argument("synth config: split must have 3 fractions");
            split = {s[0], s[1], s[2]};
        }
    }
    if (seed) cfg.seed = *seed;
    if (pairs_flag) n_pairs = *pairs_flag;
    if (split_flag) {
        if (split_flag->size() != 3) throw std::invalid_argument("--split needs 3 fractions");
        split = {(*split_flag)[0], (*split_flag)[1], (*split_flag)[2]};
    }
    cfg.validate();

    RunRecorder rec;
    rec.command = "synth";
    rec.seed = cfg.seed;
    rec.threads = threads;
    rec.out_dir = out_dir;
    fs::create_directories(rec.out_dir);
    to_json(rec.config, cfg);
    rec.config["pairs"] = n_pairs;
    rec.config["split"] = split;
    if (!config_path.empty()) rec.inputs.push_back(config_path);

    const auto entries = generate_dataset(cfg, n_pairs, split, out_dir);
    rec.outputs.push_back((fs::path(out_dir) / "manifest.json").string());
    std::cout << "wrote " << entries.size() << " pairs to " << out_dir << "\n";
    rec.write();
    return kOk;
}

int cmd_train(const std::string& manifest_path, const std::string& out_dir,
              const std::string& config_path, const std::string& encoder_config_path,
              std::optional<uint64_t> seed, std::optional<int> iterations, int threads) {
    require_exists(manifest_path);
    TrainConfig cfg;
    if (!config_path.empty()) cfg = load_json_file(config_path).get<TrainConfig>();
    EncoderConfig enc;
    if (!encoder_config_path.empty()) enc = load_json_file(encoder_config_path).get<EncoderConfig>();
    if (seed) cfg.seed = *seed;
    if (iterations) cfg.iterations = *iterations;
    cfg.threads = threads;

    RunRecorder rec;
    rec.command = "train";
    rec.seed = cfg.seed;
    rec.threads = threads;
    rec.out_dir = out_dir;
    fs::create_directories(rec.out_dir);
    to_json(rec.config["train"], cfg);
    to_json(rec.config["encoder"], enc);
    rec.inputs.push_back(manifest_path);
    if (!config_path.empty()) rec.inputs.push_back(config_path);
    if (!encoder_config_path.empty()) rec.inputs.push_back(encoder_config_path);

    const auto result = train_from_manifest(manifest_path, enc, cfg, out_dir);
    rec.outputs.push_back(result.checkpoint_stem.string() + ".json");
    rec.outputs.push_back(result.checkpoint_stem.string() + ".bin");
    rec.outputs.push_back(result.metrics_path.string());
    if (!result.log.empty())
        std::cout << "trained " << cfg.iterations << " iterations, final loss "
                  << result.log.back().loss << "\n";
    else
        std::cout << "trained 0 iterations (checkpoint equals initialization)\n";
    rec.write();
    return kOk;
}

int cmd_embed(const std::string& checkpoint_path, const std::string& out_dir,
              const std::vector<std::string>& cine_paths, int threads) {
    require_exists(fs::path(checkpoint_path).extension().empty() ? checkpoint_path + ".json"
                                                                 : checkpoint_path);
    const Checkpoint ckpt = load_checkpoint(checkpoint_path);

    RunRecorder rec;
    rec.command = "embed";
    rec.seed = ckpt.seed;
    rec.threads = threads;
    rec.out_dir = out_dir;
    fs::create_directories(rec.out_dir);
    to_json(rec.config["encoder"], ckpt.config);
    rec.inputs.push_back(checkpoint_path);

    for (const auto& cine_path : cine_paths) {
        require_exists(fs::path(cine_path).extension().empty() ? cine_path + ".json" : cine_path);
        const Cine cine = read_cine(cine_path);
        const Matrix emb = embed_cine(ckpt, cine);
        fs::path stem = fs::path(cine_path).filename();
        stem.replace_extension();
        const fs::path csv_path = fs::path(out_dir) / (stem.string() + "_emb.csv");
        write_embedding_csv(emb, csv_path);
        json meta{{"source", cine_path}, {"view", cine.view}, {"t", emb.rows()}, {"d", emb.cols()},
                  {"checkpoint", checkpoint_path}};
        std::ofstream mout(fs::path(out_dir) / (stem.string() + "_emb.meta.json"));
        mout << meta.dump(2) << "\n";
        rec.inputs.push_back(cine_path);
        rec.outputs.push_back(csv_path.string());
    }
    std::cout << "embedded " << cine_paths.size() << " cines\n";
    rec.write();
    return kOk;
}

int cmd_sync(const std::string& checkpoint_path, const std::string& reference_path,
             const std::string& out_dir, const std::vector<std::string>& target_paths, bool normalize,
             int band, int threads) {
    const Checkpoint ckpt = load_checkpoint(checkpoint_path);
    require_exists(fs::path(reference_path).extension().empty() ? reference_path + ".json"
                                                                : reference_path);
    auto maybe_normalize = [normalize](Matrix emb) {
        if (!normalize) return emb;
        for (int r = 0; r < emb.rows(); ++r) {
            const double norm = std::sqrt(dot(emb.row(r), emb.row(r)));
            if (norm > 0.0)
                for (int c = 0; c < emb.cols(); ++c) emb(r, c) /= norm;
        }
        return emb;
    };
    const Cine reference = read_cine(reference_path);
    const Matrix ref_emb = maybe_normalize(embed_cine(ckpt, reference));

    RunRecorder rec;
    rec.command = "sync";
    rec.seed = ckpt.seed;
    rec.threads = threads;
    rec.out_dir = out_dir;
    fs::create_directories(rec.out_dir);
    rec.config["normalize"] = normalize;
    rec.config["band"] = band;
    rec.inputs = {checkpoint_path, reference_path};

    json doc;
    doc["reference"] = reference_path;
    json targets = json::array();
    for (const auto& target_path : target_paths) {
        require_exists(fs::path(target_path).extension().empty() ? target_path + ".json" : target_path);
        const Cine target = read_cine(target_path);
        const Matrix target_emb = maybe_normalize(embed_cine(ckpt, target));
        const AlignmentPath path = dtw(ref_emb, target_emb, band);
        const auto mapping = warp(path, ref_emb.rows());
        targets.push_back({{"path", target_path},
                           {"pairs", path_json(path)},
                           {"total_cost", path.total_cost},
                           {"warp", mapping}});
        rec.inputs.push_back(target_path);
    }
    doc["targets"] = std::move(targets);
    const fs::path out_path = fs::path(out_dir) / "alignment.json";
    std::ofstream out(out_path);
    if (!out) throw std::runtime_error("cannot write " + out_path.string());
    out << doc.dump(2) << "\n";
    rec.outputs.push_back(out_path.string());
    std::cout << "aligned " << target_paths.size() << " targets to " << reference_path << "\n";
    rec.write();
    return kOk;
}

struct SplitData {
    std::vector<ManifestEntry> entries;
    std::vector<CinePair> pairs;
};

SplitData load_split(const std::string& manifest_path, const std::string& split) {
    SplitData data;
    for (const auto& entry : read_manifest(manifest_path)) {
        if (entry.split != split) continue;
        data.pairs.push_back(load_pair(entry, manifest_path));
        data.entries.push_back(entry);
    }
    if (data.pairs.empty())
        throw std::invalid_argument("manifest has no pairs in split '" + split + "'");
    return data;
}

int cmd_eval(const std::string& checkpoint_path, const std::string& manifest_path,
             const std::string& split, const std::string& metric, const std::string& out_dir,
             std::optional<double> systole_fraction, int threads) {
    require_exists(manifest_path);
    const Checkpoint ckpt = load_checkpoint(checkpoint_path);

    RunRecorder rec;
    rec.command = "eval";
    rec.seed = ckpt.seed;
    rec.threads = threads;
    rec.out_dir = out_dir;
    fs::create_directories(rec.out_dir);
    rec.config["metric"] = metric;
    rec.config["split"] = split;
    if (systole_fraction) rec.config["systole_fraction"] = *systole_fraction;
    rec.inputs = {checkpoint_path, manifest_path};

    json doc;
    doc["metric"] = metric;
    doc["split"] = split;

    if (metric == "tau") {
        const auto data = load_split(manifest_path, split);
        json per_pair = json::array();
        double total = 0.0;
        for (size_t i = 0; i < data.pairs.size(); ++i) {
            const double tau = kendalls_tau(embed_cine(ckpt, data.pairs[i].a),
                                            embed_cine(ckpt, data.pairs[i].b));
            per_pair.push_back({{"pair_id", data.entries[i].pair_id}, {"tau", tau}});
            total += tau;
        }
        doc["n_pairs"] = data.pairs.size();
        doc["mean_tau"] = total / data.pairs.size();
        doc["per_pair"] = std::move(per_pair);
        std::cout << "mean tau (" << split << ") = " << doc["mean_tau"].dump() << "\n";
    } else if (metric == "r2") {
        const auto train_data = load_split(manifest_path, "train");
        const auto test_data = load_split(manifest_path, split);
        auto collect = [&](const std::vector<CinePair>& pairs, Matrix& x, std::vector<double>& y) {
            std::vector<std::vector<double>> rows;
            for (const auto& pair : pairs)
                for (const Cine* cine : {&pair.a, &pair.b}) {
                    const Matrix emb = embed_cine(ckpt, *cine);
                    const auto targets = phase_targets(*cine, systole_fraction);
                    for (int t = 0; t < cine->t(); ++t) {
                        if (!targets.mask[t]) continue;
                        std::vector<double> row(emb.cols());
                        for (int c = 0; c < emb.cols(); ++c) row[c] = emb(t, c);
                        rows.push_back(std::move(row));
                        y.push_back(targets.labels[t]);
                    }
                }
            if (rows.empty()) throw std::invalid_argument("eval r2: no labeled frames in split");
            x = Matrix(static_cast<int>(rows.size()), static_cast<int>(rows[0].size()));
            for (size_t r = 0; r < rows.size(); ++r)
                for (size_t c = 0; c < rows[r].size(); ++c)
                    x(static_cast<int>(r), static_cast<int>(c)) = rows[r][c];
        };
        Matrix train_x, test_x;
        std::vector<double> train_y, test_y;
        collect(train_data.pairs, train_x, train_y);
        collect(test_data.pairs, test_x, test_y);
        doc["n_train_rows"] = train_x.rows();
        doc["n_test_rows"] = test_x.rows();
        doc["r2"] = phase_regression_r2(train_x, train_y, test_x, test_y);
        std::cout << "r2 (" << split << ") = " << doc["r2"].dump() << "\n";
    } else if (metric == "oneshot") {
        const auto train_data = load_split(manifest_path, "train");
        const auto test_data = load_split(manifest_path, split);
        // one labeled reference per view: the first train cine of that view
        std::map<std::string, const Cine*> references;
        for (const auto& pair : train_data.pairs)
            for (const Cine* cine : {&pair.a, &pair.b})
                if (!references.count(cine->view) && !cine->keyframes.empty())
                    references.emplace(cine->view, cine);
        std::map<std::string, Matrix> reference_embeddings;
        for (const auto& [view, cine] : references)
            reference_embeddings.emplace(view, embed_cine(ckpt, *cine));

        std::vector<KeyframeError> errors;
        int skipped = 0;
        for (const auto& pair : test_data.pairs)
            for (const Cine* cine : {&pair.a, &pair.b}) {
                const auto ref = references.find(cine->view);
                if (ref == references.end() || cine->keyframes.empty()) {
                    ++skipped;
                    continue;
                }
                const auto predictions = one_shot_keyframes(
                    reference_embeddings.at(cine->view), ref->second->keyframes, embed_cine(ckpt, *cine));
                std::map<KeyframeKind, std::vector<int>> predicted, actual;
                for (const auto& kf : predictions) predicted[kf.kind].push_back(kf.index);
                for (const auto& kf : cine->keyframes) actual[kf.kind].push_back(kf.index);
                for (const auto kind : {KeyframeKind::ED, KeyframeKind::ES}) {
                    const auto& pv = predicted[kind];
                    const auto& av = actual[kind];
                    for (size_t k = 0; k < std::min(pv.size(), av.size()); ++k)
                        errors.push_back({kind, pv[k], av[k], cine->frame_time_ms});
                }
            }
        const auto stats = keyframe_stats(errors);
        doc["n_matched"] = stats.n;
        doc["n_skipped_cines"] = skipped;
        doc["mae_ed_frames"] = stats.mae_ed_frames;
        doc["mae_es_frames"] = stats.mae_es_frames;
        doc["std_ed_frames"] = stats.std_ed_frames;
        doc["std_es_frames"] = stats.std_es_frames;
        doc["mae_ed_ms"] = stats.mae_ed_ms;
        doc["mae_es_ms"] = stats.mae_es_ms;
        doc["std_ed_ms"] = stats.std_ed_ms;
        doc["std_es_ms"] = stats.std_es_ms;
        json refs = json::object();
        for (const auto& [view, cine] : references) refs[view] = cine->view;
        std::cout << "oneshot (" << split << "): mae_ed=" << stats.mae_ed_frames
                  << " mae_es=" << stats.mae_es_frames << " frames over " << stats.n << " labels\n";
    } else {
        throw std::invalid_argument("unknown metric '" + metric + "' (expected tau, r2 or oneshot)");
    }

    const fs::path out_path = fs::path(out_dir) / ("metrics_" + metric + ".json");
    std::ofstream out(out_path);
    if (!out) throw std::runtime_error("cannot write " + out_path.string());
    out << doc.dump(2) << "\n";
    rec.outputs.push_back(out_path.string());
    rec.write();
    return kOk;
}

int cmd_export_plot(const std::string& out_dir, const std::vector<std::string>& embedding_paths,
                    int threads) {
    RunRecorder rec;
    rec.command = "export-plot";
    rec.threads = threads;
    rec.out_dir = out_dir;
    fs::create_directories(rec.out_dir);

    const fs::path out_path = fs::path(out_dir) / "pca.csv";
    std::ofstream out(out_path);
    if (!out) throw std::runtime_error("cannot write " + out_path.string());
    out << "frame,pca_value,view,pair_id\n";
    char buf[32];
    for (const auto& emb_path : embedding_paths) {
        require_exists(emb_path);
        const Matrix emb = read_embedding_csv(emb_path);
        const auto projection = pca_1d(emb);
        std::string view;
        fs::path meta_path = emb_path;
        meta_path.replace_extension();
        meta_path += ".meta.json";
        if (fs::exists(meta_path)) view = load_json_file(meta_path.string()).value("view", "");
        std::string pair_id = fs::path(emb_path).filename().replace_extension().string();
        if (pair_id.size() > 4 && pair_id.ends_with("_emb")) pair_id.resize(pair_id.size() - 4);
        for (size_t t = 0; t < projection.size(); ++t) {
            std::snprintf(buf, sizeof(buf), "%.17g", projection[t]);
            out << t << "," << buf << "," << view << "," << pair_id << "\n";
        }
        rec.inputs.push_back(emb_path);
    }
    rec.outputs.push_back(out_path.string());
    std::cout << "wrote " << out_path.string() << "\n";
    rec.write();
    return kOk;
}

int dispatch(int argc, char** argv) {
    CLI::App app{"synchronization embeddings for periodic multi-view sequences"};
    app.require_subcommand(1);

    std::string config_path, out_dir, manifest_path, checkpoint_path, encoder_config_path;
    std::string reference_path, split = "val", metric = "tau";
    std::vector<std::string> paths;
    std::optional<uint64_t> seed;
    std::optional<int> pairs_flag, iterations;
    std::optional<std::vector<double>> split_fractions;
    std::optional<double> systole_fraction;
    bool normalize = false;
    int band = 0;
    int threads = 1;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--out", out_dir, "output directory")->required();
        cmd->add_option("--seed", seed, "seed override (flags win over config files)");
        cmd->add_option("--threads", threads, "worker threads; 1 guarantees bit-determinism")
            ->check(CLI::PositiveNumber);
    };

    auto* synth = app.add_subcommand("synth", "generate a synthetic paired dataset");
    add_common(synth);
    synth->add_option("--config", config_path, "SynthConfig JSON (plus optional pairs/split)");
    synth->add_option("--pairs", pairs_flag, "number of pairs");
    synth->add_option("--split", split_fractions, "train,val,test fractions")->expected(3)->delimiter(',');

    auto* train_cmd = app.add_subcommand("train", "train the encoder on a dataset manifest");
    add_common(train_cmd);
    train_cmd->add_option("--manifest", manifest_path, "dataset manifest")->required();
    train_cmd->add_option("--config", config_path, "TrainConfig JSON");
    train_cmd->add_option("--encoder-config", encoder_config_path, "EncoderConfig JSON");
    train_cmd->add_option("--iterations", iterations, "iteration override");

    auto* embed = app.add_subcommand("embed", "embed cines with a trained checkpoint");
    add_common(embed);
    embed->add_option("--checkpoint", checkpoint_path, "checkpoint stem or .json path")->required();
    embed->add_option("cines", paths, "cine paths")->required()->expected(-1);

    auto* sync = app.add_subcommand("sync", "align target cines to a reference");
    add_common(sync);
    sync->add_option("--checkpoint", checkpoint_path, "checkpoint stem or .json path")->required();
    sync->add_option("--reference", reference_path, "reference cine")->required();
    sync->add_option("targets", paths, "target cine paths")->required()->expected(-1);
    sync->add_flag("--normalize", normalize, "L2-normalize embeddings before DTW");
    sync->add_option("--band", band, "Sakoe-Chiba band width (0 = exact)")
        ->check(CLI::NonNegativeNumber);

    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a manifest split");
    add_common(eval_cmd);
    eval_cmd->add_option("--checkpoint", checkpoint_path, "checkpoint stem or .json path")->required();
    eval_cmd->add_option("--manifest", manifest_path, "dataset manifest")->required();
    eval_cmd->add_option("--split", split, "split to evaluate (default val)");
    eval_cmd->add_option("--metric", metric, "tau | r2 | oneshot")->required();
    eval_cmd->add_option("--systole-fraction", systole_fraction,
                         "systole fraction for extrapolated phase labels (r2)");

    auto* export_plot = app.add_subcommand("export-plot", "reduce embeddings to 1-D PCA for plotting");
    add_common(export_plot);
    export_plot->add_option("embeddings", paths, "embedding CSV files")->required()->expected(-1);

    CLI11_PARSE(app, argc, argv);

    if (synth->parsed())
        return cmd_synth(config_path, out_dir, seed, pairs_flag, split_fractions, threads);
    if (train_cmd->parsed())
        return cmd_train(manifest_path, out_dir, config_path, encoder_config_path, seed, iterations,
                         threads);
    if (embed->parsed()) return cmd_embed(checkpoint_path, out_dir, paths, threads);
    if (sync->parsed())
        return cmd_sync(checkpoint_path, reference_path, out_dir, paths, normalize, band, threads);
    if (eval_cmd->parsed())
        return cmd_eval(checkpoint_path, manifest_path, split, metric, out_dir, systole_fraction,
                        threads);
    if (export_plot->parsed()) return cmd_export_plot(out_dir, paths, threads);
    return kOtherError;
}

int error_line(int code, const char* kind, const std::string& message) {
    json err{{"error", {{"code", kind}, {"message", message}}}};
    std::cerr << err.dump() << std::endl;
    return code;
}

} // namespace

int main(int argc, char** argv) {
    try {
        return dispatch(argc, argv);
    } catch (const FormatError& e) {
        const std::string what = e.what();
        if (what.starts_with("@missing@"))
            return error_line(kMissingFile, "missing_file", what.substr(9) + ": no such file");
        return error_line(kMalformedInput, "malformed_input", what);
    } catch (const ShapeError& e) {
        return error_line(kShapeMismatch, "shape_mismatch", e.what());
    } catch (const std::domain_error& e) {
        return error_line(kDomainViolation, "domain_error", e.what());
    } catch (const std::invalid_argument& e) {
        return error_line(kDomainViolation, "invalid_argument", e.what());
    } catch (const std::exception& e) {
        return error_line(kOtherError, "error", e.what());
    }
}
