#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "trajlens/cohort.hpp"
#include "trajlens/csv.hpp"
#include "trajlens/embedder.hpp"
#include "trajlens/error.hpp"

namespace trajlens {

/// Binary clinical markers, one row per snapshot and one column per marker.
struct MarkerMatrix {
    std::vector<SnapshotKey> keys;
    std::vector<int> window_index; ///< per row
    std::vector<std::string> markers;
    std::vector<std::vector<std::uint8_t>> columns; ///< columns[m][row]
    std::size_t unmapped_codes = 0;

    std::size_t rows() const { return keys.size(); }

    bool zero_variance(std::size_t m) const {
        const auto& c = columns[m];
        return std::all_of(c.begin(), c.end(), [&](std::uint8_t v) { return v == c.front(); });
    }
};

/// Raw code to canonical marker name. Codes missing from the table fall back to their description when enabled.
struct MarkerMapping {
    std::unordered_map<std::string, std::string> code_to_marker;
    bool fallback_to_description = true;

    std::optional<std::string> marker_for(const CodeEntry& c) const {
        const auto it = code_to_marker.find(c.code);
        if (it != code_to_marker.end()) {
            return it->second;
        }
        if (fallback_to_description) {
            return c.description;
        }
        return std::nullopt;
    }
};

/**
 * Marks 1 for every marker with at least one mapped occurrence inside the
 * snapshot's window. Codes come from the full record, so codes excluded
 * from model input still count here. Unmapped codes are tallied.
 */
inline MarkerMatrix build_marker_matrix(std::span<const PatientRecord> records, std::span<const Snapshot> snapshots,
                                        const MarkerMapping& mapping) {
    std::unordered_map<std::string, const PatientRecord*> by_id;
    for (const auto& r : records) {
        by_id[r.patient_id] = &r;
    }
    std::vector<std::set<std::string>> present(snapshots.size());
    std::set<std::string> all_markers;
    MarkerMatrix m;
    for (std::size_t s = 0; s < snapshots.size(); ++s) {
        const Snapshot& snap = snapshots[s];
        const auto it = by_id.find(snap.patient_id);
        if (it == by_id.end()) {
            throw DataError("marker matrix: no record for patient '" + snap.patient_id + "'");
        }
        const Date start = snap.anchor.shift_years(snap.window_start);
        const Date end = snap.anchor.shift_years(snap.window_end);
        for (const auto& v : it->second->visits) {
            if (v.date < start || !(v.date < end)) {
                continue;
            }
            for (const auto& c : v.codes) {
                if (auto marker = mapping.marker_for(c)) {
                    present[s].insert(*marker);
                    all_markers.insert(*marker);
                } else {
                    ++m.unmapped_codes;
                }
            }
        }
        m.keys.push_back({snap.patient_id, snap.snapshot_index});
        m.window_index.push_back(snap.window_index);
    }
    m.markers.assign(all_markers.begin(), all_markers.end());
    std::unordered_map<std::string, std::size_t> column_of;
    for (std::size_t c = 0; c < m.markers.size(); ++c) {
        column_of[m.markers[c]] = c;
    }
    m.columns.assign(m.markers.size(), std::vector<std::uint8_t>(snapshots.size(), 0));
    for (std::size_t s = 0; s < snapshots.size(); ++s) {
        for (const auto& marker : present[s]) {
            m.columns[column_of[marker]][s] = 1;
        }
    }
    return m;
}

/// Pearson correlation with population moments.
inline double pearson(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2) {
        throw DataError("pearson: need two equally long series of length >= 2");
    }
    const auto n = static_cast<double>(x.size());
    double mx = 0.0;
    double my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0;
    double sxx = 0.0;
    double syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx <= 0.0 || syy <= 0.0) {
        throw DegenerateInput("pearson: constant series");
    }
    return sxy / std::sqrt(sxx * syy);
}

/**
 * Point-biserial correlation ((M1 - M0) / s_n) * sqrt(p q), where M1 and M0
 * are the means of `u` over f = 1 and f = 0, s_n is the population standard
 * deviation of `u`, and p, q the class proportions.
 */
inline double point_biserial(std::span<const std::uint8_t> f, std::span<const double> u, const std::string& column = "marker") {
    if (f.size() != u.size()) {
        throw DataError("point_biserial: length mismatch for " + column);
    }
    std::size_t n1 = 0;
    double sum1 = 0.0;
    double sum0 = 0.0;
    double mean = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) {
        if (f[i] > 1) {
            throw DataError("point_biserial: column " + column + " is not binary");
        }
        mean += u[i];
        if (f[i]) {
            ++n1;
            sum1 += u[i];
        } else {
            sum0 += u[i];
        }
    }
    const std::size_t n = f.size();
    if (n1 == 0 || n1 == n) {
        throw DegenerateInput("point_biserial: column " + column + " has a single class");
    }
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (double v : u) {
        ss += (v - mean) * (v - mean);
    }
    const double sd = std::sqrt(ss / static_cast<double>(n));
    if (!(sd > 0.0)) {
        throw DegenerateInput("point_biserial: continuous variable is constant for " + column);
    }
    const double p = static_cast<double>(n1) / static_cast<double>(n);
    const double m1 = sum1 / static_cast<double>(n1);
    const double m0 = sum0 / static_cast<double>(n - n1);
    return (m1 - m0) / sd * std::sqrt(p * (1.0 - p));
}

struct CorrelationRecord {
    std::string marker;
    double r_u1 = 0.0;
    double r_u2 = 0.0;
    double l2 = 0.0;
    std::string theme = "other";
    int window = -1; ///< -1 when pooled over all windows
};

/// Distance of (r_u1, r_u2) from the origin.
inline double l2_norm(double r_u1, double r_u2) { return std::sqrt(r_u1 * r_u1 + r_u2 * r_u2); }

inline CorrelationRecord make_record(std::string marker, double r_u1, double r_u2, int window = -1) {
    return CorrelationRecord{std::move(marker), r_u1, r_u2, l2_norm(r_u1, r_u2), "other", window};
}

enum class CorrelationMode { Pooled, PerWindow };

struct CorrelationResult {
    std::vector<CorrelationRecord> records;
    std::vector<std::string> skipped; ///< degenerate columns, reported rather than fatal
};

/// Correlates each marker column with u1 and u2 (aligned to the matrix rows).
inline CorrelationResult correlate(const MarkerMatrix& m, std::span<const double> u1, std::span<const double> u2,
                                   CorrelationMode mode = CorrelationMode::Pooled) {
    if (u1.size() != m.rows() || u2.size() != m.rows()) {
        throw DataError("correlate: coordinates do not align with marker rows");
    }
    CorrelationResult out;
    std::vector<int> windows;
    if (mode == CorrelationMode::Pooled) {
        windows.push_back(-1);
    } else {
        const std::set<int> distinct(m.window_index.begin(), m.window_index.end());
        windows.assign(distinct.begin(), distinct.end());
    }
    for (int w : windows) {
        std::vector<std::size_t> rows;
        for (std::size_t r = 0; r < m.rows(); ++r) {
            if (w < 0 || m.window_index[r] == w) {
                rows.push_back(r);
            }
        }
        std::vector<double> a(rows.size());
        std::vector<double> b(rows.size());
        std::vector<std::uint8_t> f(rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            a[i] = u1[rows[i]];
            b[i] = u2[rows[i]];
        }
        for (std::size_t c = 0; c < m.markers.size(); ++c) {
            for (std::size_t i = 0; i < rows.size(); ++i) {
                f[i] = m.columns[c][rows[i]];
            }
            try {
                const double r1 = point_biserial(f, a, m.markers[c]);
                const double r2 = point_biserial(f, b, m.markers[c]);
                out.records.push_back(make_record(m.markers[c], r1, r2, w));
            } catch (const DegenerateInput&) {
                out.skipped.push_back(w < 0 ? m.markers[c] : m.markers[c] + "@window" + std::to_string(w));
            }
        }
    }
    return out;
}

/// Sorts by descending L2 norm (ties by marker name) and keeps the first `top_k` (0 keeps all).
inline std::vector<CorrelationRecord> l2_rank(std::vector<CorrelationRecord> records, std::size_t top_k = 0) {
    std::stable_sort(records.begin(), records.end(), [](const CorrelationRecord& a, const CorrelationRecord& b) {
        if (a.window != b.window) {
            return a.window < b.window;
        }
        if (a.l2 != b.l2) {
            return a.l2 > b.l2;
        }
        return a.marker < b.marker;
    });
    if (top_k > 0) {
        std::vector<CorrelationRecord> kept;
        std::map<int, std::size_t> per_window;
        for (auto& r : records) {
            if (per_window[r.window]++ < top_k) {
                kept.push_back(std::move(r));
            }
        }
        return kept;
    }
    return records;
}

/// Within each synonym group keeps only the member with the highest L2 norm.
inline std::vector<CorrelationRecord> dedup_synonyms(std::vector<CorrelationRecord> ranked, const std::vector<std::vector<std::string>>& groups) {
    std::unordered_map<std::string, std::size_t> group_of;
    for (std::size_t g = 0; g < groups.size(); ++g) {
        for (const auto& marker : groups[g]) {
            const auto [it, inserted] = group_of.emplace(marker, g);
            if (!inserted && it->second != g) {
                throw ConfigError("marker '" + marker + "' belongs to more than one synonym group");
            }
        }
    }
    // Best member per (group, window).
    std::map<std::pair<std::size_t, int>, std::size_t> best;
    for (std::size_t i = 0; i < ranked.size(); ++i) {
        const auto it = group_of.find(ranked[i].marker);
        if (it == group_of.end()) {
            continue;
        }
        const auto key = std::pair{it->second, ranked[i].window};
        const auto b = best.find(key);
        if (b == best.end() || ranked[i].l2 > ranked[b->second].l2) {
            best[key] = i;
        }
    }
    std::vector<CorrelationRecord> out;
    for (std::size_t i = 0; i < ranked.size(); ++i) {
        const auto it = group_of.find(ranked[i].marker);
        if (it == group_of.end() || best[{it->second, ranked[i].window}] == i) {
            out.push_back(std::move(ranked[i]));
        }
    }
    return out;
}

using ThemeTable = std::unordered_map<std::string, std::string>;

inline std::vector<CorrelationRecord> assign_themes(std::vector<CorrelationRecord> records, const ThemeTable& themes) {
    for (auto& r : records) {
        const auto it = themes.find(r.marker);
        r.theme = it == themes.end() ? "other" : it->second;
    }
    return records;
}

/// Clinical themes of the comorbidity and medication markers reported for type 2 diabetes.
inline ThemeTable default_theme_table() {
    return {
        {"Erectile dysfunction", "Erectile dysfunction"},
        {"Atrial fibrillation", "Cardiovascular disease"},
        {"Atrial fibrillation and flutter", "Cardiovascular disease"},
        {"Coronary heart disease", "Cardiovascular disease"},
        {"Heart failure", "Cardiovascular disease"},
        {"Chronic renal failure", "Renal failure"},
        {"Acute renal failure", "Renal failure"},
        {"Diabetic retinopathy", "T2D complications"},
        {"T2D with neurological complications", "T2D complications"},
        {"Diabetic polyneuropathy", "T2D complications"},
        {"Diabetic nephropathy", "T2D complications"},
        {"T2D without complications", "T2D without complications"},
        {"Aspirin", "Cardiovascular"},
        {"Bisoprolol", "Cardiovascular"},
        {"Simvastatin", "Cardiovascular"},
        {"Furosemide", "Cardiovascular"},
        {"Clopidogrel", "Cardiovascular"},
        {"Glucose testing strips", "Diabetes"},
        {"Insulin", "Diabetes"},
        {"Metformin", "Diabetes"},
        {"Diabetes lancets", "Diabetes"},
        {"Gliclazide", "Diabetes"},
        {"Amoxicillin", "Infection"},
        {"Sildenafil", "Urological"},
        {"Tadalafil", "Urological"},
    };
}

// ---------------------------------------------------------------------------
// Files

inline void write_markers(const std::string& path, const MarkerMatrix& m) {
    csv::Table t;
    t.header = {"patient_id", "snapshot_index", "window_index"};
    t.header.insert(t.header.end(), m.markers.begin(), m.markers.end());
    for (std::size_t r = 0; r < m.rows(); ++r) {
        std::vector<std::string> row{m.keys[r].patient_id, std::to_string(m.keys[r].snapshot_index), std::to_string(m.window_index[r])};
        for (const auto& col : m.columns) {
            row.push_back(col[r] ? "1" : "0");
        }
        t.rows.push_back(std::move(row));
    }
    csv::write(path, t);
}

inline MarkerMatrix read_markers(const std::string& path) {
    const csv::Table t = csv::read(path);
    if (t.header.size() < 2 || t.header[0] != "patient_id" || t.header[1] != "snapshot_index") {
        throw DataError(path + ": header must start with patient_id,snapshot_index");
    }
    const bool has_window = t.header.size() > 2 && t.header[2] == "window_index";
    const std::size_t first = has_window ? 3 : 2;
    MarkerMatrix m;
    m.markers.assign(t.header.begin() + static_cast<long>(first), t.header.end());
    m.columns.assign(m.markers.size(), std::vector<std::uint8_t>(t.rows.size(), 0));
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const auto& row = t.rows[r];
        m.keys.push_back({row[0], static_cast<int>(csv::parse_long(row[1], path))});
        m.window_index.push_back(has_window ? static_cast<int>(csv::parse_long(row[2], path)) : 0);
        for (std::size_t c = 0; c < m.markers.size(); ++c) {
            const std::string& v = row[first + c];
            if (v != "0" && v != "1") {
                throw DataError(path + ": marker " + m.markers[c] + " is not binary for " + m.keys[r].str());
            }
            m.columns[c][r] = v == "1" ? 1 : 0;
        }
    }
    return m;
}

inline void write_correlations(const std::string& path, std::span<const CorrelationRecord> records) {
    const bool per_window = std::any_of(records.begin(), records.end(), [](const CorrelationRecord& r) { return r.window >= 0; });
    csv::Table t;
    t.header = {"theme", "marker", "r_u1", "r_u2", "l2"};
    if (per_window) {
        t.header.push_back("window");
    }
    for (const auto& r : records) {
        std::vector<std::string> row{r.theme, r.marker, csv::format(r.r_u1), csv::format(r.r_u2), csv::format(r.l2)};
        if (per_window) {
            row.push_back(std::to_string(r.window));
        }
        t.rows.push_back(std::move(row));
    }
    csv::write(path, t);
}

/// Synonym groups file: one group per line, members separated by '|'.
inline std::vector<std::vector<std::string>> read_synonym_groups(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open " + path);
    }
    std::vector<std::vector<std::string>> groups;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        std::vector<std::string> group;
        std::size_t start = 0;
        while (true) {
            const auto bar = line.find('|', start);
            group.push_back(line.substr(start, bar - start));
            if (bar == std::string::npos) {
                break;
            }
            start = bar + 1;
        }
        groups.push_back(std::move(group));
    }
    return groups;
}

} // namespace trajlens
