#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "awr/tensor.hpp"

namespace awr {

// One (degraded, clean) pair. Paths are stored as written in the CSV;
// resolve_paths() rebases relative entries onto the manifest directory.
struct ManifestRow {
    std::string degraded;
    std::string clean;
    std::string kind;
    double severity = 0.0;
    uint64_t seed = 0;
};

struct Manifest {
    std::vector<ManifestRow> rows;
    std::string root;  // directory the manifest was loaded from ("" if in-memory)

    std::vector<std::string> kinds() const;                    // distinct kinds, first-seen order
    std::vector<int> rows_of_kind(const std::string& k) const; // indices

    std::string degraded_path(int row) const;
    std::string clean_path(int row) const;
};

// CSV with header `degraded,clean,kind,severity,seed`.
Manifest load_manifest(const std::string& csv_path);
void save_manifest(const Manifest& m, const std::string& csv_path);
std::string manifest_to_csv(const Manifest& m);

// Checks every row: files exist and decode, kind is known, severity in [0,1].
// Throws DataError with the offending row on failure.
void validate_manifest(const Manifest& m);

// Flat key=value configuration text (one pair per line, '#' comments).
using KvMap = std::map<std::string, std::string>;
KvMap parse_kv_text(const std::string& text);
KvMap load_kv_file(const std::string& path);
std::string kv_to_text(const KvMap& kv);

double kv_double(const KvMap& kv, const std::string& key, double fallback);
int kv_int(const KvMap& kv, const std::string& key, int fallback);
uint64_t kv_u64(const KvMap& kv, const std::string& key, uint64_t fallback);
std::string kv_str(const KvMap& kv, const std::string& key, const std::string& fallback);

}  // namespace awr
