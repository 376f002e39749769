#pragma once

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <system_error>
#include <tuple>
#include <utility>
#include <vector>

#include "tensorciq/common.hpp"
#include "tensorciq/harness.hpp"
#include "tensorciq/tensor.hpp"

namespace tensorciq {
namespace io {

// Shortest round-trip decimal representation of a double.
inline std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

// Atomic file write: temp file in the target directory, then rename.
inline void write_atomic(const std::filesystem::path& path, const std::string& contents) {
    const std::filesystem::path tmp = path.parent_path() / (".tmp." + path.filename().string());
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
        out << contents;
        if (!out) throw IoError("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

// --- observations file -----------------------------------------------------
// header:  # tensorciq-obs v1 d=<d> p=<p>
// body:    i j k value   (1-based canonical i <= j <= k)

inline std::string serialize_observations(const ObservationSet& obs) {
    std::string out = "# tensorciq-obs v1 d=" + std::to_string(obs.d()) +
                      " p=" + format_double(obs.p()) + "\n";
    for (const auto& e : obs.entries()) {
        out += std::to_string(e.triple.i + 1);
        out += ' ';
        out += std::to_string(e.triple.j + 1);
        out += ' ';
        out += std::to_string(e.triple.k + 1);
        out += ' ';
        out += format_double(e.value);
        out += '\n';
    }
    return out;
}

namespace detail {

inline IoError parse_error(const std::string& path, std::size_t line, std::size_t byte_offset,
                           const std::string& what) {
    return IoError(path + ":" + std::to_string(line) + " (byte offset " +
                   std::to_string(byte_offset) + "): " + what);
}

inline bool parse_header_field(const std::string& header, const std::string& key,
                               std::string& out) {
    const std::string needle = key + "=";
    const auto pos = header.find(needle);
    if (pos == std::string::npos) return false;
    auto end = header.find(' ', pos);
    if (end == std::string::npos) end = header.size();
    out = header.substr(pos + needle.size(), end - pos - needle.size());
    return true;
}

}  // namespace detail

inline ObservationSet read_observations(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::string line;
    std::size_t line_no = 0, offset = 0;
    if (!std::getline(in, line))
        throw detail::parse_error(path.string(), 1, 0, "empty file (missing header)");
    ++line_no;
    if (line.rfind("# tensorciq-obs v1 ", 0) != 0)
        throw detail::parse_error(path.string(), 1, 0, "bad header, expected '# tensorciq-obs v1'");
    std::string d_str, p_str;
    if (!detail::parse_header_field(line, "d", d_str) ||
        !detail::parse_header_field(line, "p", p_str))
        throw detail::parse_error(path.string(), 1, 0, "header missing d= or p=");
    const int d = std::stoi(d_str);
    const double p = std::stod(p_str);
    offset += line.size() + 1;

    std::vector<Observation> entries;
    while (std::getline(in, line)) {
        ++line_no;
        const std::size_t line_start = offset;
        offset += line.size() + 1;
        if (line.empty()) continue;
        std::istringstream ls(line);
        long i = 0, j = 0, k = 0;
        double v = 0.0;
        if (!(ls >> i >> j >> k >> v))
            throw detail::parse_error(path.string(), line_no, line_start,
                                      "malformed line, expected 'i j k value'");
        std::string extra;
        if (ls >> extra)
            throw detail::parse_error(path.string(), line_no, line_start,
                                      "trailing tokens after value");
        if (i < 1 || j < i || k < j || k > d)
            throw detail::parse_error(path.string(), line_no, line_start,
                                      "indices must satisfy 1 <= i <= j <= k <= d");
        entries.push_back(Observation{
            canonicalize(static_cast<int>(i) - 1, static_cast<int>(j) - 1,
                         static_cast<int>(k) - 1, d),
            v});
    }
    try {
        return ObservationSet(d, p, std::move(entries));
    } catch (const std::invalid_argument& e) {
        throw IoError(path.string() + ": " + e.what());
    }
}

// --- factors file ------------------------------------------------------------
// header:  # tensorciq-factors v1 d=<d> r=<r>
// body:    r blocks of d values, one per line

inline std::string serialize_factors(const FactorMatrix& U) {
    std::string out = "# tensorciq-factors v1 d=" + std::to_string(U.d()) +
                      " r=" + std::to_string(U.r()) + "\n";
    for (int l = 0; l < U.r(); ++l)
        for (int i = 0; i < U.d(); ++i) {
            out += format_double(U.entry(i, l));
            out += '\n';
        }
    return out;
}

inline FactorMatrix read_factors(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::string line;
    std::size_t line_no = 0, offset = 0;
    if (!std::getline(in, line))
        throw detail::parse_error(path.string(), 1, 0, "empty file (missing header)");
    ++line_no;
    if (line.rfind("# tensorciq-factors v1 ", 0) != 0)
        throw detail::parse_error(path.string(), 1, 0,
                                  "bad header, expected '# tensorciq-factors v1'");
    std::string d_str, r_str;
    if (!detail::parse_header_field(line, "d", d_str) ||
        !detail::parse_header_field(line, "r", r_str))
        throw detail::parse_error(path.string(), 1, 0, "header missing d= or r=");
    const int d = std::stoi(d_str), r = std::stoi(r_str);
    offset += line.size() + 1;
    Matrix m(d, r);
    std::size_t count = 0;
    const std::size_t need = static_cast<std::size_t>(d) * r;
    while (std::getline(in, line)) {
        ++line_no;
        const std::size_t line_start = offset;
        offset += line.size() + 1;
        if (line.empty()) continue;
        if (count >= need)
            throw detail::parse_error(path.string(), line_no, line_start,
                                      "more values than d*r declared in header");
        double v = 0.0;
        auto res = std::from_chars(line.data(), line.data() + line.size(), v);
        if (res.ec != std::errc() || res.ptr != line.data() + line.size())
            throw detail::parse_error(path.string(), line_no, line_start, "malformed value");
        m(static_cast<Eigen::Index>(count % d), static_cast<Eigen::Index>(count / d)) = v;
        ++count;
    }
    if (count != need)
        throw detail::parse_error(path.string(), line_no + 1, offset,
                                  "truncated file: got " + std::to_string(count) + " of " +
                                      std::to_string(need) + " values");
    return FactorMatrix(std::move(m));
}

// --- noise spec file ---------------------------------------------------------
// header:  # tensorciq-noise v1 d=<d> sigma=<s> beta=<b>
// body:    i j k variance   (1-based canonical order)

inline std::string serialize_noise_spec(const NoiseSpec& spec) {
    std::string out = "# tensorciq-noise v1 d=" + std::to_string(spec.d()) +
                      " sigma=" + format_double(spec.sigma()) +
                      " beta=" + format_double(spec.beta()) + "\n";
    for_each_canonical(spec.d(), [&](const CanonicalTriple& t) {
        out += std::to_string(t.i + 1);
        out += ' ';
        out += std::to_string(t.j + 1);
        out += ' ';
        out += std::to_string(t.k + 1);
        out += ' ';
        out += format_double(spec.variance(t));
        out += '\n';
    });
    return out;
}

// --- CSV emitters -------------------------------------------------------------

inline std::string csv_factor_cis(
    const std::vector<std::tuple<int, int, double, double>>& rows) {
    std::string out = "l,k,center,half_width\n";
    for (const auto& [l, k, c, h] : rows)
        out += std::to_string(l + 1) + "," + std::to_string(k + 1) + "," + format_double(c) +
               "," + format_double(h) + "\n";
    return out;
}

inline std::string csv_entry_cis(
    const std::vector<std::tuple<CanonicalTriple, double, double>>& rows) {
    std::string out = "i,j,k,center,half_width\n";
    for (const auto& [t, c, h] : rows)
        out += std::to_string(t.i + 1) + "," + std::to_string(t.j + 1) + "," +
               std::to_string(t.k + 1) + "," + format_double(c) + "," + format_double(h) + "\n";
    return out;
}

inline std::string csv_factor_coverage(const AggregateReport& agg, int d) {
    std::string out = "l,k,cr\n";
    for (std::size_t n = 0; n < agg.factor_cr.size(); ++n)
        out += std::to_string(n / d + 1) + "," + std::to_string(n % d + 1) + "," +
               format_double(agg.factor_cr[n]) + "\n";
    return out;
}

inline std::string csv_entry_coverage(const AggregateReport& agg,
                                      const std::vector<CanonicalTriple>& tracked) {
    std::string out = "i,j,k,cr\n";
    for (std::size_t n = 0; n < agg.entry_cr.size(); ++n) {
        const auto& t = tracked[n];
        out += std::to_string(t.i + 1) + "," + std::to_string(t.j + 1) + "," +
               std::to_string(t.k + 1) + "," + format_double(agg.entry_cr[n]) + "\n";
    }
    return out;
}

// Q-Q points, downsampled to at most `cap` evenly spaced order statistics.
inline std::string csv_qq(const std::vector<std::pair<double, double>>& pts,
                          std::size_t cap = 4096) {
    std::string out = "theoretical,empirical\n";
    const std::size_t n = pts.size();
    const std::size_t step = (n > cap) ? (n + cap - 1) / cap : 1;
    for (std::size_t i = 0; i < n; i += step)
        out += format_double(pts[i].first) + "," + format_double(pts[i].second) + "\n";
    return out;
}

inline std::string csv_risk(const std::vector<RiskRow>& rows) {
    std::string out = "quantity,empirical,theoretical,ratio\n";
    for (const auto& r : rows)
        out += r.quantity + "," + format_double(r.empirical) + "," +
               format_double(r.theoretical) + "," + format_double(r.ratio) + "\n";
    return out;
}

}  // namespace io
}  // namespace tensorciq
