#pragma once

#include <cstdint>
#include <string>

#include "fdia/dataset/window.hpp"
#include "fdia/error.hpp"
#include "fdia/io/binary.hpp"

namespace fdia::dataset {

inline constexpr std::string_view kDatasetMagic = "FDIADSET";
inline constexpr std::uint32_t kDatasetVersion = 1;

/// Binary dataset container, little-endian:
///   magic "FDIADSET", u32 version, u32 window, u32 n_states,
///   u64 n_train, u64 n_val, u64 n_test,
///   per sample (train, val, test order): i64 hour, i64 last_hour,
///     f64 inputs[w*n] (row-major), f64 target[w*n], u8 mask[n],
///   u32 CRC-32 of all preceding bytes.
inline std::string encode_dataset(const DatasetSplit& split) {
    const WindowSample* probe = !split.train.empty() ? &split.train.front()
                                : !split.val.empty()  ? &split.val.front()
                                : !split.test.empty() ? &split.test.front()
                                                      : nullptr;
    if (!probe) throw ValidationError("cannot encode an empty dataset");
    const auto w = static_cast<std::uint32_t>(probe->window());
    const auto n = static_cast<std::uint32_t>(probe->state_count());
    io::ByteWriter out;
    out.raw(kDatasetMagic);
    out.u32(kDatasetVersion);
    out.u32(w);
    out.u32(n);
    out.u64(split.train.size());
    out.u64(split.val.size());
    out.u64(split.test.size());
    for (const auto* block : {&split.train, &split.val, &split.test}) {
        for (const auto& s : *block) {
            require_dim(s.window() == static_cast<int>(w) && s.state_count() == static_cast<int>(n),
                        "sample shape differs from dataset header");
            out.i64(s.hour);
            out.i64(s.last_hour);
            for (Eigen::Index i = 0; i < s.inputs.size(); ++i) out.f64(s.inputs.data()[i]);
            for (Eigen::Index i = 0; i < s.target.size(); ++i) out.f64(s.target.data()[i]);
            for (auto m : s.attack_mask) out.u8(m);
        }
    }
    return out.finish();
}

inline DatasetSplit decode_dataset(std::string bytes) {
    io::ByteReader in(std::move(bytes));
    if (in.raw(kDatasetMagic.size()) != kDatasetMagic) throw FormatError("not a dataset container");
    const auto version = in.u32();
    if (version != kDatasetVersion) {
        throw FormatError("unsupported dataset version " + std::to_string(version));
    }
    in.verify_checksum();
    const auto w = static_cast<int>(in.u32());
    const auto n = static_cast<int>(in.u32());
    const std::uint64_t counts[3] = {in.u64(), in.u64(), in.u64()};
    DatasetSplit split;
    std::vector<WindowSample>* blocks[3] = {&split.train, &split.val, &split.test};
    for (int b = 0; b < 3; ++b) {
        blocks[b]->reserve(counts[b]);
        for (std::uint64_t k = 0; k < counts[b]; ++k) {
            WindowSample s;
            s.hour = in.i64();
            s.last_hour = in.i64();
            s.inputs.resize(w, n);
            s.target.resize(w, n);
            for (Eigen::Index i = 0; i < s.inputs.size(); ++i) s.inputs.data()[i] = in.f64();
            for (Eigen::Index i = 0; i < s.target.size(); ++i) s.target.data()[i] = in.f64();
            s.attack_mask.resize(n);
            for (auto& m : s.attack_mask) m = in.u8();
            blocks[b]->push_back(std::move(s));
        }
    }
    if (!in.at_end()) throw FormatError("trailing bytes in dataset container");
    const double total = static_cast<double>(counts[0] + counts[1] + counts[2]);
    if (total > 0) {
        split.fractions = {static_cast<double>(counts[0]) / total, static_cast<double>(counts[1]) / total,
                           static_cast<double>(counts[2]) / total};
    }
    return split;
}

inline void save_dataset(const std::string& path, const DatasetSplit& split) {
    io::write_file(path, encode_dataset(split));
}

inline DatasetSplit load_dataset(const std::string& path) { return decode_dataset(io::read_file(path)); }

}  // namespace fdia::dataset
