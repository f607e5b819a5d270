#pragma once

// File formats and configuration: flat key=value configs, CSV containers
// for spectra, count histograms, and gridded maps, and the versioned JSON
// serialization of fit reports. All floating-point fields are written with
// 17 significant digits so read(write(x)) reproduces x bit for bit.

#include <cctype>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <system_error>
#include <vector>

#include <json.hpp>

#include "cqed/fit.hpp"
#include "cqed/g2.hpp"
#include "cqed/tcspc.hpp"
#include "cqed/version.hpp"

namespace cqed::io {

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

class ParseError : public std::runtime_error {
  public:
    ParseError(const std::string& file, int line, const std::string& message)
        : std::runtime_error(file + ":" + std::to_string(line) + ": " +
                             message),
          file_(file),
          line_(line) {}
    const std::string& file() const { return file_; }
    int line() const { return line_; }

  private:
    std::string file_;
    int line_;
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

inline double parse_double(const std::string& tok, const std::string& file,
                           int line) {
    const std::string t = trim(tok);
    double v = 0.0;
    const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
    if (res.ec != std::errc() || res.ptr != t.data() + t.size())
        throw ParseError(file, line, "expected a number, got '" + tok + "'");
    return v;
}

inline std::uint64_t parse_count(const std::string& tok,
                                 const std::string& file, int line) {
    const std::string t = trim(tok);
    std::uint64_t v = 0;
    const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
    if (res.ec != std::errc() || res.ptr != t.data() + t.size())
        throw ParseError(file, line,
                         "expected a non-negative count, got '" + tok + "'");
    return v;
}

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (true) {
        const auto next = s.find(sep, pos);
        if (next == std::string::npos) {
            out.push_back(s.substr(pos));
            return out;
        }
        out.push_back(s.substr(pos, next - pos));
        pos = next + 1;
    }
}

inline std::ofstream open_out(const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    return f;
}

inline std::ifstream open_in(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open for reading: " + path);
    return f;
}

}  // namespace detail

// Flat key=value configuration. '#' starts a comment, later assignments
// override earlier ones, and command-line flags override the file.
struct Config {
    std::map<std::string, std::string> values;

    bool has(const std::string& key) const { return values.count(key) != 0; }
    void set(const std::string& key, const std::string& v) { values[key] = v; }
    void set_double(const std::string& key, double v) {
        values[key] = format_double(v);
    }

    std::string get(const std::string& key, const std::string& fallback) const {
        const auto it = values.find(key);
        return it == values.end() ? fallback : it->second;
    }
    double get_double(const std::string& key, double fallback) const {
        const auto it = values.find(key);
        if (it == values.end()) return fallback;
        return detail::parse_double(it->second, "<config>", 0);
    }
    int get_int(const std::string& key, int fallback) const {
        return static_cast<int>(get_double(key, fallback));
    }
    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const {
        const auto it = values.find(key);
        if (it == values.end()) return fallback;
        return detail::parse_count(it->second, "<config>", 0);
    }
    bool get_bool(const std::string& key, bool fallback) const {
        const auto it = values.find(key);
        if (it == values.end()) return fallback;
        const std::string v = detail::trim(it->second);
        if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
        if (v == "0" || v == "false" || v == "no" || v == "off") return false;
        throw std::invalid_argument("config: '" + key +
                                    "' is not a boolean: " + v);
    }

    static Config parse(std::istream& in, const std::string& name) {
        Config c;
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            line = detail::trim(line);
            if (line.empty()) continue;
            const auto eq = line.find('=');
            if (eq == std::string::npos)
                throw ParseError(name, lineno,
                                 "expected key=value, got '" + line + "'");
            const std::string key = detail::trim(line.substr(0, eq));
            if (key.empty())
                throw ParseError(name, lineno, "empty key");
            c.values[key] = detail::trim(line.substr(eq + 1));
        }
        return c;
    }
    static Config parse_file(const std::string& path) {
        auto f = detail::open_in(path);
        return parse(f, path);
    }

    // deterministic one-line-per-key form for embedding in outputs
    std::string echo() const {
        std::string out;
        for (const auto& [k, v] : values) out += k + "=" + v + "\n";
        return out;
    }
};

namespace detail {

// shared CSV scaffolding: '#' metadata lines, one optional column header
struct CsvReader {
    std::string file;
    std::map<std::string, std::string> meta;
    std::vector<std::pair<int, std::string>> rows;  // (line number, content)

    explicit CsvReader(std::istream& in, std::string name)
        : file(std::move(name)) {
        std::string line;
        int lineno = 0;
        bool seen_header = false;
        while (std::getline(in, line)) {
            ++lineno;
            std::string t = trim(line);
            if (t.empty()) continue;
            if (t[0] == '#') {
                const std::string body = trim(t.substr(1));
                const auto eq = body.find('=');
                if (eq != std::string::npos)
                    meta[trim(body.substr(0, eq))] = trim(body.substr(eq + 1));
                continue;
            }
            if (!seen_header && !t.empty() &&
                (std::isalpha(static_cast<unsigned char>(t[0])) ||
                 t[0] == '_')) {
                seen_header = true;  // column names, not data
                continue;
            }
            rows.emplace_back(lineno, std::move(t));
        }
    }

    double meta_double(const std::string& key) const {
        const auto it = meta.find(key);
        if (it == meta.end())
            throw ParseError(file, 1, "missing required header '# " + key +
                                          "=...'");
        return parse_double(it->second, file, 1);
    }
    std::string meta_string(const std::string& key) const {
        const auto it = meta.find(key);
        if (it == meta.end())
            throw ParseError(file, 1, "missing required header '# " + key +
                                          "=...'");
        return it->second;
    }
};

inline void write_meta(std::ostream& out,
                       const std::map<std::string, std::string>& meta) {
    if (!meta.count("version"))
        out << "# version=" << version << "\n";
    for (const auto& [k, v] : meta) out << "# " << k << "=" << v << "\n";
}

inline std::vector<double> parse_grid(const std::string& text,
                                      const std::string& file) {
    std::vector<double> grid;
    for (const auto& tok : split(text, ','))
        grid.push_back(parse_double(tok, file, 1));
    return grid;
}

inline std::string join_grid(const std::vector<double>& grid) {
    std::string out;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        if (i) out += ",";
        out += format_double(grid[i]);
    }
    return out;
}

}  // namespace detail

struct SpectrumFile {
    enum class Kind { reflectivity, counts };
    Kind kind = Kind::reflectivity;
    double omega_ref_uev = 0.0;
    std::vector<double> energy_uev;
    std::vector<double> value;
    std::vector<double> sigma;  // empty, or one per point
    std::map<std::string, std::string> meta;

    void validate() const {
        if (energy_uev.size() != value.size())
            throw std::invalid_argument("spectrum file: size mismatch");
        if (!sigma.empty() && sigma.size() != value.size())
            throw std::invalid_argument("spectrum file: sigma size mismatch");
        for (std::size_t i = 1; i < energy_uev.size(); ++i)
            if (!(energy_uev[i] > energy_uev[i - 1]))
                throw std::invalid_argument(
                    "spectrum file: energies must be strictly ascending");
        for (double v : value)
            if (!std::isfinite(v))
                throw std::invalid_argument("spectrum file: non-finite value");
    }
};

inline void write_spectrum(std::ostream& out, const SpectrumFile& s) {
    s.validate();
    detail::write_meta(out, s.meta);
    out << "# kind="
        << (s.kind == SpectrumFile::Kind::reflectivity ? "reflectivity"
                                                       : "counts")
        << "\n";
    out << "# omega_ref_uev=" << format_double(s.omega_ref_uev) << "\n";
    out << (s.sigma.empty() ? "energy_uev,value" : "energy_uev,value,sigma")
        << "\n";
    for (std::size_t i = 0; i < s.energy_uev.size(); ++i) {
        out << format_double(s.energy_uev[i]) << ","
            << format_double(s.value[i]);
        if (!s.sigma.empty()) out << "," << format_double(s.sigma[i]);
        out << "\n";
    }
}

inline void write_spectrum(const std::string& path, const SpectrumFile& s) {
    auto f = detail::open_out(path);
    write_spectrum(f, s);
}

inline SpectrumFile read_spectrum(std::istream& in, const std::string& name) {
    detail::CsvReader csv(in, name);
    SpectrumFile s;
    s.meta = csv.meta;
    const std::string kind = csv.meta_string("kind");
    if (kind == "reflectivity")
        s.kind = SpectrumFile::Kind::reflectivity;
    else if (kind == "counts")
        s.kind = SpectrumFile::Kind::counts;
    else
        throw ParseError(name, 1, "unknown spectrum kind '" + kind + "'");
    s.omega_ref_uev = csv.meta_double("omega_ref_uev");
    if (csv.rows.empty()) throw ParseError(name, 1, "no data rows");
    for (const auto& [lineno, row] : csv.rows) {
        const auto cols = detail::split(row, ',');
        if (cols.size() != 2 && cols.size() != 3)
            throw ParseError(name, lineno,
                             "expected 2 or 3 columns, got " +
                                 std::to_string(cols.size()));
        s.energy_uev.push_back(detail::parse_double(cols[0], name, lineno));
        s.value.push_back(detail::parse_double(cols[1], name, lineno));
        if (cols.size() == 3)
            s.sigma.push_back(detail::parse_double(cols[2], name, lineno));
    }
    if (!s.sigma.empty() && s.sigma.size() != s.value.size())
        throw ParseError(name, csv.rows.back().first,
                         "sigma column present on only some rows");
    s.validate();
    return s;
}

inline SpectrumFile read_spectrum(const std::string& path) {
    auto f = detail::open_in(path);
    return read_spectrum(f, path);
}

// Lifetime versus emitter energy, as measured by tuning across cavity modes.
struct LifetimeScanFile {
    std::vector<double> energy_uev;
    std::vector<double> lifetime_ps;
    std::vector<double> sigma_ps;  // optional, per point
    std::map<std::string, std::string> meta;

    void validate() const {
        if (energy_uev.size() != lifetime_ps.size())
            throw std::invalid_argument("lifetime scan: column length mismatch");
        if (energy_uev.size() < 2)
            throw std::invalid_argument("lifetime scan: need at least 2 points");
        if (!sigma_ps.empty() && sigma_ps.size() != lifetime_ps.size())
            throw std::invalid_argument("lifetime scan: sigma length mismatch");
        for (std::size_t i = 0; i < energy_uev.size(); ++i) {
            if (!std::isfinite(energy_uev[i]) || !std::isfinite(lifetime_ps[i]))
                throw std::invalid_argument("lifetime scan: non-finite entry");
            if (!(lifetime_ps[i] > 0.0))
                throw std::invalid_argument(
                    "lifetime scan: lifetimes must be positive");
            if (i > 0 && !(energy_uev[i] > energy_uev[i - 1]))
                throw std::invalid_argument(
                    "lifetime scan: energies must be strictly ascending");
        }
    }
};

inline void write_lifetime_scan(std::ostream& out, const LifetimeScanFile& s) {
    s.validate();
    detail::write_meta(out, s.meta);
    out << "# kind=lifetime_scan\n";
    out << (s.sigma_ps.empty() ? "energy_uev,lifetime_ps"
                               : "energy_uev,lifetime_ps,sigma_ps")
        << "\n";
    for (std::size_t i = 0; i < s.energy_uev.size(); ++i) {
        out << format_double(s.energy_uev[i]) << ","
            << format_double(s.lifetime_ps[i]);
        if (!s.sigma_ps.empty()) out << "," << format_double(s.sigma_ps[i]);
        out << "\n";
    }
}

inline void write_lifetime_scan(const std::string& path,
                                const LifetimeScanFile& s) {
    auto f = detail::open_out(path);
    write_lifetime_scan(f, s);
}

inline LifetimeScanFile read_lifetime_scan(std::istream& in,
                                           const std::string& name) {
    detail::CsvReader csv(in, name);
    LifetimeScanFile s;
    s.meta = csv.meta;
    const std::string kind = csv.meta_string("kind");
    if (kind != "lifetime_scan")
        throw ParseError(name, 1, "unknown lifetime scan kind '" + kind + "'");
    if (csv.rows.empty()) throw ParseError(name, 1, "no data rows");
    for (const auto& [lineno, row] : csv.rows) {
        const auto cols = detail::split(row, ',');
        if (cols.size() != 2 && cols.size() != 3)
            throw ParseError(name, lineno,
                             "expected 2 or 3 columns, got " +
                                 std::to_string(cols.size()));
        s.energy_uev.push_back(detail::parse_double(cols[0], name, lineno));
        s.lifetime_ps.push_back(detail::parse_double(cols[1], name, lineno));
        if (cols.size() == 3)
            s.sigma_ps.push_back(detail::parse_double(cols[2], name, lineno));
    }
    if (!s.sigma_ps.empty() && s.sigma_ps.size() != s.lifetime_ps.size())
        throw ParseError(name, csv.rows.back().first,
                         "sigma column present on only some rows");
    s.validate();
    return s;
}

inline LifetimeScanFile read_lifetime_scan(const std::string& path) {
    auto f = detail::open_in(path);
    return read_lifetime_scan(f, path);
}

inline void write_decay(std::ostream& out, const tcspc::DecayHistogram& h,
                        const std::map<std::string, std::string>& meta = {}) {
    h.validate();
    detail::write_meta(out, meta);
    out << "# kind=decay_histogram\n";
    out << "# bin_width_ps=" << format_double(h.bin_width_ps) << "\n";
    out << "# t_start_ps=" << format_double(h.t_start_ps) << "\n";
    out << "counts\n";
    for (auto c : h.counts) out << c << "\n";
}

inline void write_decay(const std::string& path, const tcspc::DecayHistogram& h,
                        const std::map<std::string, std::string>& meta = {}) {
    auto f = detail::open_out(path);
    write_decay(f, h, meta);
}

inline tcspc::DecayHistogram read_decay(std::istream& in,
                                        const std::string& name,
                                        std::map<std::string, std::string>*
                                            meta_out = nullptr) {
    detail::CsvReader csv(in, name);
    tcspc::DecayHistogram h;
    h.bin_width_ps = csv.meta_double("bin_width_ps");
    h.t_start_ps = csv.meta_double("t_start_ps");
    for (const auto& [lineno, row] : csv.rows) {
        h.counts.push_back(detail::parse_count(row, name, lineno));
        h.total_counts += h.counts.back();
    }
    if (h.counts.empty()) throw ParseError(name, 1, "no count rows");
    h.validate();
    if (meta_out) *meta_out = csv.meta;
    return h;
}

inline tcspc::DecayHistogram read_decay(const std::string& path,
                                        std::map<std::string, std::string>*
                                            meta_out = nullptr) {
    auto f = detail::open_in(path);
    return read_decay(f, path, meta_out);
}

inline void write_g2(std::ostream& out, const g2::G2Histogram& h,
                     const std::map<std::string, std::string>& meta = {}) {
    h.validate();
    detail::write_meta(out, meta);
    out << "# kind=g2_histogram\n";
    out << "# rep_period_ns=" << format_double(h.rep_period_ns) << "\n";
    out << "# window_ns=" << format_double(h.window_ns) << "\n";
    out << "# bin_width_ns=" << format_double(h.bin_width_ns) << "\n";
    out << "# t_start_ns=" << format_double(h.t_start_ns) << "\n";
    out << "counts\n";
    for (auto c : h.counts) out << c << "\n";
}

inline void write_g2(const std::string& path, const g2::G2Histogram& h,
                     const std::map<std::string, std::string>& meta = {}) {
    auto f = detail::open_out(path);
    write_g2(f, h, meta);
}

inline g2::G2Histogram read_g2(std::istream& in, const std::string& name,
                               std::map<std::string, std::string>* meta_out =
                                   nullptr) {
    detail::CsvReader csv(in, name);
    g2::G2Histogram h;
    h.rep_period_ns = csv.meta_double("rep_period_ns");
    h.window_ns = csv.meta_double("window_ns");
    h.bin_width_ns = csv.meta_double("bin_width_ns");
    h.t_start_ns = csv.meta_double("t_start_ns");
    for (const auto& [lineno, row] : csv.rows)
        h.counts.push_back(detail::parse_count(row, name, lineno));
    if (h.counts.empty()) throw ParseError(name, 1, "no count rows");
    h.validate();
    if (meta_out) *meta_out = csv.meta;
    return h;
}

inline g2::G2Histogram read_g2(const std::string& path,
                               std::map<std::string, std::string>* meta_out =
                                   nullptr) {
    auto f = detail::open_in(path);
    return read_g2(f, path, meta_out);
}

// Gridded map with named axes, e.g. bias rows over energy columns or a
// y/x spatial raster. Written row-major, one CSV row per grid row.
struct GridMapFile {
    std::string row_key;  // e.g. "bias_grid"
    std::string col_key;  // e.g. "energy_grid"
    std::vector<double> rows;
    std::vector<double> cols;
    std::vector<double> values;  // rows.size() x cols.size()
    std::map<std::string, std::string> meta;

    void validate() const {
        if (rows.empty() || cols.empty())
            throw std::invalid_argument("grid map: empty axes");
        if (values.size() != rows.size() * cols.size())
            throw std::invalid_argument("grid map: value count mismatch");
        if (row_key.empty() || col_key.empty())
            throw std::invalid_argument("grid map: axis names required");
    }
};

inline void write_grid_map(std::ostream& out, const GridMapFile& m) {
    m.validate();
    detail::write_meta(out, m.meta);
    out << "# " << m.row_key << "=" << detail::join_grid(m.rows) << "\n";
    out << "# " << m.col_key << "=" << detail::join_grid(m.cols) << "\n";
    for (std::size_t r = 0; r < m.rows.size(); ++r) {
        for (std::size_t c = 0; c < m.cols.size(); ++c) {
            if (c) out << ",";
            out << format_double(m.values[r * m.cols.size() + c]);
        }
        out << "\n";
    }
}

inline void write_grid_map(const std::string& path, const GridMapFile& m) {
    auto f = detail::open_out(path);
    write_grid_map(f, m);
}

inline GridMapFile read_grid_map(std::istream& in, const std::string& name,
                                 const std::string& row_key,
                                 const std::string& col_key) {
    detail::CsvReader csv(in, name);
    GridMapFile m;
    m.row_key = row_key;
    m.col_key = col_key;
    m.meta = csv.meta;
    m.rows = detail::parse_grid(csv.meta_string(row_key), name);
    m.cols = detail::parse_grid(csv.meta_string(col_key), name);
    for (const auto& [lineno, row] : csv.rows) {
        const auto toks = detail::split(row, ',');
        if (toks.size() != m.cols.size())
            throw ParseError(name, lineno,
                             "expected " + std::to_string(m.cols.size()) +
                                 " columns, got " +
                                 std::to_string(toks.size()));
        for (const auto& t : toks)
            m.values.push_back(detail::parse_double(t, name, lineno));
    }
    if (m.values.size() != m.rows.size() * m.cols.size())
        throw ParseError(name, 1, "row count mismatches the row grid");
    m.validate();
    return m;
}

inline GridMapFile read_grid_map(const std::string& path,
                                 const std::string& row_key,
                                 const std::string& col_key) {
    auto f = detail::open_in(path);
    return read_grid_map(f, path, row_key, col_key);
}

// Versioned JSON form of a fit report. The schema string is a contract:
// consumers match on it before touching any other field.
inline nlohmann::ordered_json fit_report_json(
    const fit::FitReport& report,
    const nlohmann::ordered_json& derived = nlohmann::ordered_json::object(),
    const Config& config = {},
    std::uint64_t seed = 0) {
    nlohmann::ordered_json j;
    j["schema"] = "cqed.fit_report/1";
    j["version"] = version;
    j["converged"] = report.converged;
    j["chi2"] = report.chi2;
    j["reduced_chi2"] = report.reduced_chi2;
    j["n_iter"] = report.n_iter;
    j["n_data"] = report.n_data;
    j["n_free"] = report.n_free;
    j["condition_number"] = report.condition_number;
    auto params = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < report.param_names.size(); ++i) {
        nlohmann::ordered_json p;
        p["name"] = report.param_names[i];
        p["value"] = report.values[i];
        p["sigma"] = report.one_sigma[i];
        params.push_back(std::move(p));
    }
    j["params"] = std::move(params);
    auto cov = nlohmann::ordered_json::array();
    for (Eigen::Index r = 0; r < report.covariance.rows(); ++r) {
        auto row = nlohmann::ordered_json::array();
        for (Eigen::Index c = 0; c < report.covariance.cols(); ++c)
            row.push_back(report.covariance(r, c));
        cov.push_back(std::move(row));
    }
    j["covariance"] = std::move(cov);
    j["notes"] = report.notes;
    j["derived"] = derived;
    auto cfg = nlohmann::ordered_json::object();
    for (const auto& [k, v] : config.values) cfg[k] = v;
    j["config"] = std::move(cfg);
    j["seed"] = seed;
    return j;
}

inline void write_json(const std::string& path,
                       const nlohmann::ordered_json& j) {
    auto f = detail::open_out(path);
    f << j.dump(2) << "\n";
}

inline nlohmann::json read_json(const std::string& path) {
    auto f = detail::open_in(path);
    return nlohmann::json::parse(f);
}

}  // namespace cqed::io
