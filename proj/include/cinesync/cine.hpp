#pragma once

#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "cinesync/errors.hpp"
#include "cinesync/matrix.hpp"

namespace cinesync {

enum class KeyframeKind { ED, ES };

inline const char* to_string(KeyframeKind k) { return k == KeyframeKind::ED ? "ED" : "ES"; }

inline KeyframeKind keyframe_kind_from_string(const std::string& s) {
    if (s == "ED") return KeyframeKind::ED;
    if (s == "ES") return KeyframeKind::ES;
    throw FormatError("unknown keyframe kind: " + s);
}

struct Keyframe {
    KeyframeKind kind;
    int index;
    bool operator==(const Keyframe&) const = default;
};

/// One systole/diastole span: ED -> ES (-> next ED when known).
struct KeyframePair {
    int t_ed = 0;
    int t_es = 0;
    std::optional<int> t_ed_next;

    void validate() const {
        if (t_ed == t_es) throw std::domain_error("KeyframePair: degenerate interval (t_ed == t_es)");
        if (t_ed > t_es) throw std::invalid_argument("KeyframePair: t_ed must precede t_es");
        if (t_ed_next && *t_ed_next <= t_es)
            throw std::invalid_argument("KeyframePair: t_ed_next must follow t_es");
    }
};

/// A frame sequence standing in for an echo cine. Immutable by convention
/// after construction + validate().
struct Cine {
    Matrix frames;                    // T x F
    double frame_time_ms = 1.0;
    std::string view;
    std::vector<Keyframe> keyframes;  // sorted by index
    std::vector<double> latent_phase; // empty, or length T in [0, 2*pi)
    int cycle_count = 1;

    int t() const { return frames.rows(); }
    int f() const { return frames.cols(); }
    bool has_latent_phase() const { return !latent_phase.empty(); }

    void validate() const {
        if (t() < 3) throw std::invalid_argument("Cine: needs at least 3 frames");
        if (f() < 1) throw std::invalid_argument("Cine: needs at least 1 feature");
        if (!(frame_time_ms > 0.0)) throw std::invalid_argument("Cine: frame_time_ms must be positive");
        if (cycle_count < 1) throw std::invalid_argument("Cine: cycle_count must be positive");
        if (!all_finite(frames)) throw std::invalid_argument("Cine: non-finite frame values");
        for (size_t i = 0; i < keyframes.size(); ++i) {
            const auto& kf = keyframes[i];
            if (kf.index < 0 || kf.index >= t())
                throw std::invalid_argument("Cine: keyframe index out of range");
            if (i > 0) {
                if (keyframes[i - 1].index >= kf.index)
                    throw std::invalid_argument("Cine: keyframe indices must be strictly increasing");
                if (keyframes[i - 1].kind == kf.kind)
                    throw std::invalid_argument("Cine: ED and ES keyframes must alternate");
            }
        }
        if (!latent_phase.empty()) {
            if (static_cast<int>(latent_phase.size()) != t())
                throw std::invalid_argument("Cine: latent_phase length must equal frame count");
            for (double p : latent_phase)
                if (!(p >= 0.0 && p < 2.0 * std::numbers::pi))
                    throw std::invalid_argument("Cine: latent_phase values must lie in [0, 2*pi)");
        }
    }
};

struct CinePair {
    Cine a;
    Cine b;
    bool same_heart = false;
};

/// Fine-grained phase target in [0, 1]: mimics ventricle volume, falling as a
/// cubic toward ES and recovering as a cube root toward the next ED. Interval
/// membership is non-strict at both endpoints; the branch switches at t_es.
inline double phase_label(int t, const KeyframePair& kf) {
    kf.validate();
    const bool in_systole = t <= kf.t_es;
    if (t < kf.t_ed) throw std::domain_error("phase_label: frame precedes t_ed");
    if (!in_systole) {
        if (!kf.t_ed_next) throw std::domain_error("phase_label: frame past t_es but t_ed_next absent");
        if (t > *kf.t_ed_next) throw std::domain_error("phase_label: frame past t_ed_next");
    }
    const double num = std::abs(static_cast<double>(t - kf.t_es));
    if (in_systole) {
        const double r = num / std::abs(static_cast<double>(kf.t_es - kf.t_ed));
        return r * r * r;
    }
    const double r = num / std::abs(static_cast<double>(kf.t_es - *kf.t_ed_next));
    return std::cbrt(r);
}

/// Groups a cine's keyframes into per-cycle ED/ES/next-ED spans.
inline std::vector<KeyframePair> cycle_keyframe_pairs(const Cine& cine) {
    std::vector<KeyframePair> out;
    const auto& kfs = cine.keyframes;
    for (size_t i = 0; i + 1 < kfs.size(); ++i) {
        if (kfs[i].kind != KeyframeKind::ED || kfs[i + 1].kind != KeyframeKind::ES) continue;
        KeyframePair pair{kfs[i].index, kfs[i + 1].index, std::nullopt};
        if (i + 2 < kfs.size() && kfs[i + 2].kind == KeyframeKind::ED)
            pair.t_ed_next = kfs[i + 2].index;
        out.push_back(pair);
    }
    return out;
}

} // namespace cinesync
