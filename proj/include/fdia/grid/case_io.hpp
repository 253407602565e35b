#pragma once

#include <cstddef>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "fdia/error.hpp"
#include "fdia/grid/network.hpp"

namespace fdia::grid {

namespace detail {

inline std::vector<std::string> split_ws(std::string_view text) {
    std::vector<std::string> out;
    std::istringstream in{std::string(text)};
    for (std::string tok; in >> tok;) out.push_back(tok);
    return out;
}

inline double to_double(const std::string& tok, std::size_t line, const char* field) {
    try {
        std::size_t used = 0;
        const double v = std::stod(tok, &used);
        if (used != tok.size()) throw std::invalid_argument(tok);
        return v;
    } catch (const std::exception&) {
        throw ParseError(line, std::string("bad ") + field + " '" + tok + "'");
    }
}

inline int to_int(const std::string& tok, std::size_t line, const char* field) {
    try {
        std::size_t used = 0;
        const int v = std::stoi(tok, &used);
        if (used != tok.size()) throw std::invalid_argument(tok);
        return v;
    } catch (const std::exception&) {
        throw ParseError(line, std::string("bad ") + field + " '" + tok + "'");
    }
}

inline bool starts_with(std::string_view s, std::string_view prefix) {
    return s.substr(0, prefix.size()) == prefix;
}

struct RawBranch {
    int from_id, to_id;
    Branch data;
    std::size_t line;
};

inline NetworkModel assemble(std::vector<Bus> buses, const std::vector<RawBranch>& raw,
                             double base_mva) {
    std::map<int, int> index;
    for (std::size_t i = 0; i < buses.size(); ++i) {
        if (!index.emplace(buses[i].id, static_cast<int>(i)).second) {
            throw ValidationError("duplicate bus id " + std::to_string(buses[i].id));
        }
    }
    std::vector<Branch> branches;
    branches.reserve(raw.size());
    for (const auto& rb : raw) {
        const auto f = index.find(rb.from_id);
        const auto t = index.find(rb.to_id);
        if (f == index.end() || t == index.end()) {
            throw ParseError(rb.line, "branch references unknown bus");
        }
        Branch br = rb.data;
        br.from = f->second;
        br.to = t->second;
        branches.push_back(br);
    }
    return NetworkModel(std::move(buses), std::move(branches), std::nullopt, base_mva);
}

/// IEEE Common Data Format. Bus names occupy fixed columns 6-17; every other
/// field is read as whitespace-separated tokens.
inline NetworkModel parse_cdf(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    double base_mva = 100.0;
    enum class Section { header, none, bus, branch, other } section = Section::header;
    std::vector<Bus> buses;
    std::vector<RawBranch> raw;

    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (section == Section::header) {
            if (line.size() > 37) base_mva = to_double(split_ws(line.substr(31, 6)).at(0), lineno, "base MVA");
            section = Section::none;
            continue;
        }
        if (starts_with(line, "BUS DATA FOLLOWS")) { section = Section::bus; continue; }
        if (starts_with(line, "BRANCH DATA FOLLOWS")) { section = Section::branch; continue; }
        if (starts_with(line, "END OF DATA")) break;
        if (starts_with(line, "-9")) { section = Section::none; continue; }
        if (section == Section::none && split_ws(line).size() > 0 && line.find("FOLLOWS") != std::string::npos) {
            section = Section::other;
            continue;
        }
        if (section == Section::bus) {
            if (line.size() < 19) throw ParseError(lineno, "truncated bus record");
            const auto head = split_ws(line.substr(0, 5));
            if (head.empty()) throw ParseError(lineno, "missing bus number");
            const auto f = split_ws(line.substr(18));
            if (f.size() < 15) throw ParseError(lineno, "bus record has too few fields");
            Bus b;
            b.id = to_int(head[0], lineno, "bus number");
            const int type = to_int(f[2], lineno, "bus type");
            b.kind = type == 3 ? BusKind::slack : type == 2 ? BusKind::pv : BusKind::pq;
            const double v_final = to_double(f[3], lineno, "voltage");
            b.load_p = to_double(f[5], lineno, "load MW") / base_mva;
            b.load_q = to_double(f[6], lineno, "load MVAR") / base_mva;
            b.gen_p = to_double(f[7], lineno, "generation MW") / base_mva;
            const double v_set = to_double(f[10], lineno, "desired voltage");
            b.voltage_setpoint = v_set > 0.0 ? v_set : (v_final > 0.0 ? v_final : 1.0);
            b.shunt_g = to_double(f[13], lineno, "shunt G");
            b.shunt_b = to_double(f[14], lineno, "shunt B");
            buses.push_back(b);
        } else if (section == Section::branch) {
            const auto f = split_ws(line);
            if (f.size() < 15) throw ParseError(lineno, "branch record has too few fields");
            RawBranch rb{to_int(f[0], lineno, "from bus"), to_int(f[1], lineno, "to bus"), {}, lineno};
            rb.data.r = to_double(f[6], lineno, "resistance");
            rb.data.x = to_double(f[7], lineno, "reactance");
            rb.data.b_charging = to_double(f[8], lineno, "charging");
            const double tap = to_double(f[14], lineno, "tap ratio");
            rb.data.tap_ratio = tap > 0.0 ? tap : 1.0;
            raw.push_back(rb);
        }
    }
    if (buses.empty()) throw ParseError(lineno, "no bus data section");
    return assemble(std::move(buses), raw, base_mva);
}

/// Line-oriented case format, values in per-unit:
///   base_mva <MVA>
///   bus <id> <slack|pv|pq> <load_p> <load_q> [gen_p [v_set [shunt_g [shunt_b]]]]
///   branch <from_id> <to_id> <r> <x> [b_charging [tap]]
/// '#' starts a comment.
inline NetworkModel parse_simple(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    double base_mva = 100.0;
    std::vector<Bus> buses;
    std::vector<RawBranch> raw;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const auto f = split_ws(line);
        if (f.empty()) continue;
        if (f[0] == "base_mva") {
            if (f.size() != 2) throw ParseError(lineno, "base_mva takes one value");
            base_mva = to_double(f[1], lineno, "base MVA");
        } else if (f[0] == "bus") {
            if (f.size() < 5 || f.size() > 9) throw ParseError(lineno, "bus record needs 4 to 8 fields");
            Bus b;
            b.id = to_int(f[1], lineno, "bus id");
            if (f[2] == "slack") b.kind = BusKind::slack;
            else if (f[2] == "pv") b.kind = BusKind::pv;
            else if (f[2] == "pq") b.kind = BusKind::pq;
            else throw ParseError(lineno, "unknown bus kind '" + f[2] + "'");
            b.load_p = to_double(f[3], lineno, "load_p");
            b.load_q = to_double(f[4], lineno, "load_q");
            if (f.size() > 5) b.gen_p = to_double(f[5], lineno, "gen_p");
            if (f.size() > 6) b.voltage_setpoint = to_double(f[6], lineno, "v_set");
            if (f.size() > 7) b.shunt_g = to_double(f[7], lineno, "shunt_g");
            if (f.size() > 8) b.shunt_b = to_double(f[8], lineno, "shunt_b");
            buses.push_back(b);
        } else if (f[0] == "branch") {
            if (f.size() < 5 || f.size() > 7) throw ParseError(lineno, "branch record needs 4 to 6 fields");
            RawBranch rb{to_int(f[1], lineno, "from"), to_int(f[2], lineno, "to"), {}, lineno};
            rb.data.r = to_double(f[3], lineno, "r");
            rb.data.x = to_double(f[4], lineno, "x");
            if (f.size() > 5) rb.data.b_charging = to_double(f[5], lineno, "b_charging");
            if (f.size() > 6) rb.data.tap_ratio = to_double(f[6], lineno, "tap");
            raw.push_back(rb);
        } else {
            throw ParseError(lineno, "unknown record '" + f[0] + "'");
        }
    }
    if (buses.empty()) throw ParseError(lineno, "no bus records");
    return assemble(std::move(buses), raw, base_mva);
}

}  // namespace detail

/// Parses case text, auto-detecting IEEE CDF (contains "BUS DATA FOLLOWS") or the
/// simplified record format.
inline NetworkModel load_case(const std::string& text) {
    if (text.find("BUS DATA FOLLOWS") != std::string::npos) return detail::parse_cdf(text);
    return detail::parse_simple(text);
}

inline NetworkModel load_case_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open case file '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return load_case(buf.str());
}

}  // namespace fdia::grid
