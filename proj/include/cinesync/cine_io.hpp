#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cinesync/cine.hpp"
#include "cinesync/errors.hpp"

namespace cinesync {

namespace fs = std::filesystem;
using json = nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "on-disk formats are little-endian; big-endian hosts are unsupported");

inline void write_doubles(std::ofstream& out, const double* values, size_t count) {
    out.write(reinterpret_cast<const char*>(values), static_cast<std::streamsize>(count * sizeof(double)));
}

inline std::vector<double> read_all_doubles(const fs::path& path) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw FormatError("cannot open binary payload: " + path.string());
    const auto bytes = static_cast<size_t>(in.tellg());
    if (bytes % sizeof(double) != 0)
        throw FormatError("binary payload is not a whole number of f64 values: " + path.string());
    std::vector<double> values(bytes / sizeof(double));
    in.seekg(0);
    in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(bytes));
    if (!in) throw FormatError("short read on binary payload: " + path.string());
    return values;
}

/// `stem` is the path without extension; writes `<stem>.json` + `<stem>.bin`.
inline void write_cine(const Cine& cine, const fs::path& stem) {
    cine.validate();
    json header;
    header["format_version"] = 1;
    header["t"] = cine.t();
    header["f"] = cine.f();
    header["dtype"] = "f64le";
    header["frame_time_ms"] = cine.frame_time_ms;
    header["view"] = cine.view;
    json kfs = json::array();
    for (const auto& kf : cine.keyframes) kfs.push_back(json::array({to_string(kf.kind), kf.index}));
    header["keyframes"] = kfs;
    header["cycle_count"] = cine.cycle_count;
    header["has_latent_phase"] = cine.has_latent_phase();

    fs::path json_path = stem;
    json_path += ".json";
    fs::path bin_path = stem;
    bin_path += ".bin";

    std::ofstream hout(json_path);
    if (!hout) throw std::runtime_error("cannot write " + json_path.string());
    hout << header.dump(2) << "\n";
    hout.close();

    std::ofstream bout(bin_path, std::ios::binary);
    if (!bout) throw std::runtime_error("cannot write " + bin_path.string());
    write_doubles(bout, cine.frames.data(), cine.frames.size());
    if (cine.has_latent_phase()) write_doubles(bout, cine.latent_phase.data(), cine.latent_phase.size());
    if (!bout) throw std::runtime_error("short write on " + bin_path.string());
}

/// Accepts the stem, the `.json` path or the `.bin` path.
inline Cine read_cine(const fs::path& path) {
    fs::path stem = path;
    if (stem.extension() == ".json" || stem.extension() == ".bin") stem.replace_extension();
    fs::path json_path = stem;
    json_path += ".json";
    fs::path bin_path = stem;
    bin_path += ".bin";

    std::ifstream hin(json_path);
    if (!hin) throw FormatError("cannot open cine header: " + json_path.string());
    json header;
    try {
        header = json::parse(hin);
    } catch (const json::parse_error& e) {
        throw FormatError("malformed cine header " + json_path.string() + ": " + e.what());
    }

    if (header.value("format_version", -1) != 1)
        throw FormatError("unsupported cine format version in " + json_path.string());
    if (header.value("dtype", "") != std::string("f64le"))
        throw FormatError("unsupported dtype in " + json_path.string());

    Cine cine;
    const int t = header.at("t").get<int>();
    const int f = header.at("f").get<int>();
    cine.frame_time_ms = header.at("frame_time_ms").get<double>();
    cine.view = header.at("view").get<std::string>();
    cine.cycle_count = header.at("cycle_count").get<int>();
    for (const auto& kf : header.at("keyframes"))
        cine.keyframes.push_back({keyframe_kind_from_string(kf.at(0).get<std::string>()), kf.at(1).get<int>()});
    const bool has_phase = header.at("has_latent_phase").get<bool>();

    const auto values = read_all_doubles(bin_path);
    const size_t expected = static_cast<size_t>(t) * f + (has_phase ? static_cast<size_t>(t) : 0);
    if (values.size() != expected)
        throw FormatError("cine payload size mismatch in " + bin_path.string() + ": header implies " +
                          std::to_string(expected) + " values, file holds " + std::to_string(values.size()));

    cine.frames = Matrix(t, f);
    std::copy(values.begin(), values.begin() + static_cast<ptrdiff_t>(static_cast<size_t>(t) * f),
              cine.frames.data());
    if (has_phase) cine.latent_phase.assign(values.end() - t, values.end());

    if (!all_finite(cine.frames) || !all_finite(std::span<const double>(cine.latent_phase)))
        throw FormatError("non-finite values in cine payload: " + bin_path.string());
    cine.validate();
    return cine;
}

struct ManifestEntry {
    std::string pair_id;
    std::string a; // path relative to the manifest file
    std::string b;
    std::string split; // train | val | test
};

inline void write_manifest(const std::vector<ManifestEntry>& entries, const fs::path& path) {
    json doc = json::array();
    for (const auto& e : entries)
        doc.push_back({{"pair_id", e.pair_id}, {"a", e.a}, {"b", e.b}, {"split", e.split}});
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write manifest: " + path.string());
    out << doc.dump(2) << "\n";
}

inline std::vector<ManifestEntry> read_manifest(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open manifest: " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw FormatError("malformed manifest " + path.string() + ": " + e.what());
    }
    std::vector<ManifestEntry> entries;
    for (const auto& item : doc) {
        ManifestEntry e;
        e.pair_id = item.at("pair_id").get<std::string>();
        e.a = item.at("a").get<std::string>();
        e.b = item.at("b").get<std::string>();
        e.split = item.at("split").get<std::string>();
        if (e.split != "train" && e.split != "val" && e.split != "test")
            throw FormatError("manifest entry " + e.pair_id + " has unknown split: " + e.split);
        entries.push_back(std::move(e));
    }
    return entries;
}

/// Loads the cine pair behind a manifest entry, resolving relative paths
/// against the manifest's directory.
inline CinePair load_pair(const ManifestEntry& entry, const fs::path& manifest_path) {
    const fs::path base = manifest_path.parent_path();
    CinePair pair;
    pair.a = read_cine(fs::path(entry.a).is_absolute() ? fs::path(entry.a) : base / entry.a);
    pair.b = read_cine(fs::path(entry.b).is_absolute() ? fs::path(entry.b) : base / entry.b);
    pair.same_heart = true;
    return pair;
}

} // namespace cinesync
