#include "awr/data.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "awr/png_io.hpp"
#include "awr/synth.hpp"

namespace fs = std::filesystem;

namespace awr {

std::vector<std::string> Manifest::kinds() const {
    std::vector<std::string> out;
    for (const auto& r : rows)
        if (std::find(out.begin(), out.end(), r.kind) == out.end()) out.push_back(r.kind);
    return out;
}

std::vector<int> Manifest::rows_of_kind(const std::string& k) const {
    std::vector<int> out;
    for (size_t i = 0; i < rows.size(); ++i)
        if (rows[i].kind == k) out.push_back(static_cast<int>(i));
    return out;
}

namespace {
std::string resolve(const std::string& root, const std::string& p) {
    fs::path path(p);
    if (path.is_absolute() || root.empty()) return p;
    return (fs::path(root) / path).string();
}
}  // namespace

std::string Manifest::degraded_path(int row) const {
    return resolve(root, rows[static_cast<size_t>(row)].degraded);
}
std::string Manifest::clean_path(int row) const {
    return resolve(root, rows[static_cast<size_t>(row)].clean);
}

std::string manifest_to_csv(const Manifest& m) {
    std::string out = "degraded,clean,kind,severity,seed\n";
    char buf[64];
    for (const auto& r : m.rows) {
        std::snprintf(buf, sizeof(buf), "%.10g", r.severity);
        out += r.degraded + "," + r.clean + "," + r.kind + "," + buf + "," + std::to_string(r.seed) + "\n";
    }
    return out;
}

void save_manifest(const Manifest& m, const std::string& csv_path) {
    std::ofstream f(csv_path, std::ios::binary);
    if (!f) throw DataError("cannot write manifest: " + csv_path);
    f << manifest_to_csv(m);
}

Manifest load_manifest(const std::string& csv_path) {
    std::ifstream f(csv_path, std::ios::binary);
    if (!f) throw DataError("cannot open manifest: " + csv_path);
    Manifest m;
    m.root = fs::path(csv_path).parent_path().string();
    std::string line;
    if (!std::getline(f, line)) throw DataError("empty manifest: " + csv_path);
    if (line.size() && line.back() == '\r') line.pop_back();
    if (line != "degraded,clean,kind,severity,seed")
        throw DataError("manifest header mismatch in " + csv_path + ": '" + line + "'");
    int lineno = 1;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.size() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> cols;
        std::stringstream ss(line);
        std::string col;
        while (std::getline(ss, col, ',')) cols.push_back(col);
        if (cols.size() != 5)
            throw DataError("manifest line " + std::to_string(lineno) + ": expected 5 columns");
        ManifestRow r;
        r.degraded = cols[0];
        r.clean = cols[1];
        r.kind = cols[2];
        try {
            r.severity = std::stod(cols[3]);
            r.seed = std::stoull(cols[4]);
        } catch (const std::exception&) {
            throw DataError("manifest line " + std::to_string(lineno) + ": bad number");
        }
        m.rows.push_back(std::move(r));
    }
    return m;
}

void validate_manifest(const Manifest& m) {
    if (m.rows.empty()) throw DataError("manifest has no rows");
    for (size_t i = 0; i < m.rows.size(); ++i) {
        const auto& r = m.rows[i];
        const std::string where = "manifest row " + std::to_string(i + 1);
        try {
            synth::kind_from_string(r.kind);
        } catch (const ConfigError&) {
            throw DataError(where + ": unknown kind '" + r.kind + "'");
        }
        if (r.severity < 0.0 || r.severity > 1.0)
            throw DataError(where + ": severity " + std::to_string(r.severity) + " outside [0,1]");
        for (const std::string& p : {m.degraded_path(static_cast<int>(i)), m.clean_path(static_cast<int>(i))}) {
            if (!fs::is_regular_file(p)) throw DataError(where + ": missing file " + p);
            read_png(p);  // decode check
        }
    }
}

KvMap parse_kv_text(const std::string& text) {
    KvMap kv;
    std::stringstream ss(text);
    std::string line;
    while (std::getline(ss, line)) {
        if (line.size() && line.back() == '\r') line.pop_back();
        size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        size_t eq = line.find('=');
        if (eq == std::string::npos) continue;
        auto trim = [](std::string s) {
            size_t b = s.find_first_not_of(" \t");
            size_t e = s.find_last_not_of(" \t");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        std::string key = trim(line.substr(0, eq));
        std::string val = trim(line.substr(eq + 1));
        if (!key.empty()) kv[key] = val;
    }
    return kv;
}

KvMap load_kv_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot open config file: " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_kv_text(ss.str());
}

std::string kv_to_text(const KvMap& kv) {
    std::string out;
    for (const auto& [k, v] : kv) out += k + "=" + v + "\n";
    return out;
}

double kv_double(const KvMap& kv, const std::string& key, double fallback) {
    auto it = kv.find(key);
    if (it == kv.end()) return fallback;
    try {
        return std::stod(it->second);
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': bad number '" + it->second + "'");
    }
}

int kv_int(const KvMap& kv, const std::string& key, int fallback) {
    auto it = kv.find(key);
    if (it == kv.end()) return fallback;
    try {
        return std::stoi(it->second);
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': bad integer '" + it->second + "'");
    }
}

uint64_t kv_u64(const KvMap& kv, const std::string& key, uint64_t fallback) {
    auto it = kv.find(key);
    if (it == kv.end()) return fallback;
    try {
        return std::stoull(it->second);
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': bad integer '" + it->second + "'");
    }
}

std::string kv_str(const KvMap& kv, const std::string& key, const std::string& fallback) {
    auto it = kv.find(key);
    return it == kv.end() ? fallback : it->second;
}

}  // namespace awr
