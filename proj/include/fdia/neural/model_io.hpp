#pragma once

#include <cstdint>
#include <string>

#include "fdia/error.hpp"
#include "fdia/io/binary.hpp"
#include "fdia/neural/dae.hpp"

namespace fdia::neural {

inline constexpr std::string_view kModelMagic = "FDIAMODL";
inline constexpr std::uint32_t kModelVersion = 1;

/// Model file, little-endian:
///   magic "FDIAMODL", u32 version,
///   u32 window, n_states, enc1, enc2, dec1, u8 activation, i64 slack_index,
///   i64 epochs_trained,
///   normalizer: f64 mean[n], f64 std[n], u32 n_clamped, u32 clamped[],
///   every tensor in for_each_tensor order, row-major f64,
///   u32 CRC-32 of all preceding bytes.
inline std::string encode_model(const DaeModel& model) {
    const auto& cfg = model.config;
    validate_config(cfg);
    require_dim(model.normalizer.size() == cfg.n_states, "normalizer size must equal n_states");
    io::ByteWriter out;
    out.raw(kModelMagic);
    out.u32(kModelVersion);
    for (int v : {cfg.window, cfg.n_states, cfg.enc1_units, cfg.enc2_units, cfg.dec1_units}) {
        out.u32(static_cast<std::uint32_t>(v));
    }
    out.u8(cfg.activation == CellActivation::relu ? 0 : 1);
    out.i64(cfg.slack_index);
    out.i64(model.epochs_trained);
    for (Eigen::Index k = 0; k < cfg.n_states; ++k) out.f64(model.normalizer.mean[k]);
    for (Eigen::Index k = 0; k < cfg.n_states; ++k) out.f64(model.normalizer.std[k]);
    out.u32(static_cast<std::uint32_t>(model.normalizer.clamped.size()));
    for (int k : model.normalizer.clamped) out.u32(static_cast<std::uint32_t>(k));
    for_each_tensor(model.params, [&](std::string_view, const auto& t) {
        for (Eigen::Index r = 0; r < t.rows(); ++r) {
            for (Eigen::Index c = 0; c < t.cols(); ++c) out.f64(t(r, c));
        }
    });
    return out.finish();
}

inline DaeModel decode_model(std::string bytes) {
    io::ByteReader in(std::move(bytes));
    if (in.raw(kModelMagic.size()) != kModelMagic) throw FormatError("not a model file");
    const auto version = in.u32();
    if (version != kModelVersion) throw FormatError("unsupported model version " + std::to_string(version));
    in.verify_checksum();
    DaeModel model;
    auto& cfg = model.config;
    cfg.window = static_cast<int>(in.u32());
    cfg.n_states = static_cast<int>(in.u32());
    cfg.enc1_units = static_cast<int>(in.u32());
    cfg.enc2_units = static_cast<int>(in.u32());
    cfg.dec1_units = static_cast<int>(in.u32());
    const auto act = in.u8();
    if (act > 1) throw FormatError("unknown activation code " + std::to_string(act));
    cfg.activation = act == 0 ? CellActivation::relu : CellActivation::tanh;
    cfg.slack_index = static_cast<int>(in.i64());
    model.epochs_trained = static_cast<int>(in.i64());
    try {
        validate_config(cfg);
    } catch (const ValidationError& e) {
        throw FormatError(std::string("invalid model header: ") + e.what());
    }
    model.normalizer.mean.resize(cfg.n_states);
    model.normalizer.std.resize(cfg.n_states);
    for (Eigen::Index k = 0; k < cfg.n_states; ++k) model.normalizer.mean[k] = in.f64();
    for (Eigen::Index k = 0; k < cfg.n_states; ++k) model.normalizer.std[k] = in.f64();
    const auto n_clamped = in.u32();
    if (n_clamped > static_cast<std::uint32_t>(cfg.n_states)) throw FormatError("bad clamped-coordinate count");
    for (std::uint32_t k = 0; k < n_clamped; ++k) model.normalizer.clamped.push_back(static_cast<int>(in.u32()));
    model.params = DaeParams::zeros(cfg);
    for_each_tensor(model.params, [&](std::string_view, auto& t) {
        for (Eigen::Index r = 0; r < t.rows(); ++r) {
            for (Eigen::Index c = 0; c < t.cols(); ++c) t(r, c) = in.f64();
        }
    });
    if (!in.at_end()) throw FormatError("trailing bytes in model file");
    return model;
}

inline void save_model(const std::string& path, const DaeModel& model) { io::write_file(path, encode_model(model)); }

inline DaeModel load_model(const std::string& path) { return decode_model(io::read_file(path)); }

}  // namespace fdia::neural
