#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "trajlens/cohort.hpp"
#include "trajlens/csv.hpp"
#include "trajlens/date.hpp"
#include "trajlens/error.hpp"
#include "trajlens/interpret.hpp"
#include "trajlens/trajectory.hpp"

namespace trajlens {

struct ClusterMean {
    int cluster = 0;
    double t = 0.0;
    double u1 = 0.0;
    double u2 = 0.0;
    std::size_t count = 0;
};

/// Mean aligned position per cluster and grid time over the patients covering that time.
inline std::vector<ClusterMean> emit_cluster_means(const Labeling& clusters, std::span<const AlignedTrajectory> aligned) {
    std::map<std::pair<int, double>, ClusterMean> acc;
    for (const auto& a : aligned) {
        const auto it = clusters.find(a.patient_id);
        if (it == clusters.end()) {
            continue;
        }
        for (std::size_t i = 0; i < a.grid.size(); ++i) {
            auto& m = acc[{it->second, a.grid[i]}];
            m.cluster = it->second;
            m.t = a.grid[i];
            m.u1 += a.values[i][0];
            m.u2 += a.values[i][1];
            ++m.count;
        }
    }
    std::vector<ClusterMean> out;
    for (auto& [key, m] : acc) {
        m.u1 /= static_cast<double>(m.count);
        m.u2 /= static_cast<double>(m.count);
        out.push_back(m);
    }
    return out;
}

/// A marker occurrence at a signed offset in years from the patient's anchor date.
struct TimedMarker {
    double t = 0.0;
    std::string marker;
};

/// Every mapped code of every anchored record as (offset, marker), per patient.
inline std::map<std::string, std::vector<TimedMarker>> timed_markers(std::span<const PatientRecord> records, const MarkerMapping& mapping) {
    std::map<std::string, std::vector<TimedMarker>> out;
    for (const auto& r : records) {
        const auto anchor = r.anchor();
        if (!anchor) {
            continue;
        }
        auto& list = out[r.patient_id];
        for (const auto& v : r.visits) {
            const double t = years_between(*anchor, v.date);
            for (const auto& c : v.codes) {
                if (auto m = mapping.marker_for(c)) {
                    list.push_back({t, *m});
                }
            }
        }
    }
    return out;
}

enum class PrevalenceMode { Cumulative, PerWindow };

struct PrevalenceRow {
    int cluster = 0;
    std::string theme;
    double t = 0.0;
    double prevalence = 0.0;
    std::size_t patients = 0; ///< cluster size
    std::size_t with_theme = 0;
};

/**
 * Fraction of each cluster's patients with at least one marker of a theme.
 * Cumulative mode counts markers at or before t; per-window mode counts
 * markers in (previous grid point, t], the first window having the width
 * of the first grid step. Markers without a theme are ignored.
 */
inline std::vector<PrevalenceRow> theme_prevalence(const Labeling& clusters, const std::map<std::string, std::vector<TimedMarker>>& markers,
                                                   const ThemeTable& themes, std::span<const double> grid,
                                                   PrevalenceMode mode = PrevalenceMode::Cumulative) {
    if (grid.empty()) {
        throw ConfigError("theme_prevalence: empty grid");
    }
    if (!std::is_sorted(grid.begin(), grid.end()) || std::adjacent_find(grid.begin(), grid.end()) != grid.end()) {
        throw ConfigError("theme_prevalence: grid must be strictly increasing");
    }
    std::set<std::string> theme_names;
    for (const auto& [marker, theme] : themes) {
        theme_names.insert(theme);
    }
    std::map<int, std::vector<std::string>> members;
    for (const auto& [pid, c] : clusters) {
        members[c].push_back(pid);
    }
    const double first_step = grid.size() > 1 ? grid[1] - grid[0] : 1.0;
    std::vector<PrevalenceRow> out;
    for (const auto& [c, pids] : members) {
        for (const auto& theme : theme_names) {
            for (std::size_t g = 0; g < grid.size(); ++g) {
                const double hi = grid[g];
                const double lo = g == 0 ? grid[0] - first_step : grid[g - 1];
                std::size_t hits = 0;
                for (const auto& pid : pids) {
                    const auto it = markers.find(pid);
                    if (it == markers.end()) {
                        continue;
                    }
                    const bool found = std::any_of(it->second.begin(), it->second.end(), [&](const TimedMarker& m) {
                        if (m.t > hi || (mode == PrevalenceMode::PerWindow && m.t <= lo)) {
                            return false;
                        }
                        const auto th = themes.find(m.marker);
                        return th != themes.end() && th->second == theme;
                    });
                    hits += found ? 1 : 0;
                }
                out.push_back({c, theme, hi, static_cast<double>(hits) / static_cast<double>(pids.size()), pids.size(), hits});
            }
        }
    }
    return out;
}

struct DemographicsRow {
    int cluster = 0;
    std::size_t size = 0;
    double mean_age_at_diagnosis = 0.0; ///< over members with a diagnosis date
    std::map<std::string, double> sex_pct;
    std::map<std::string, double> ethnicity_pct;
};

inline std::vector<DemographicsRow> demographics_table(const Labeling& clusters, std::span<const PatientRecord> records) {
    std::map<std::string, const PatientRecord*> by_id;
    for (const auto& r : records) {
        by_id[r.patient_id] = &r;
    }
    std::set<std::string> ethnicities;
    for (const auto& [pid, c] : clusters) {
        const auto it = by_id.find(pid);
        if (it == by_id.end()) {
            throw DataError("demographics: no record for clustered patient '" + pid + "'");
        }
        ethnicities.insert(it->second->ethnicity);
    }
    std::map<int, DemographicsRow> rows;
    std::map<int, std::size_t> aged;
    for (const auto& [pid, c] : clusters) {
        const PatientRecord& r = *by_id.at(pid);
        auto& row = rows[c];
        row.cluster = c;
        ++row.size;
        row.sex_pct[std::string(to_string(r.sex))] += 1.0;
        row.ethnicity_pct[r.ethnicity] += 1.0;
        if (const auto anchor = r.anchor()) {
            row.mean_age_at_diagnosis += anchor->year() - r.birth_year;
            ++aged[c];
        }
    }
    std::vector<DemographicsRow> out;
    for (auto& [c, row] : rows) {
        const auto n = static_cast<double>(row.size);
        row.mean_age_at_diagnosis = aged[c] ? row.mean_age_at_diagnosis / static_cast<double>(aged[c]) : std::nan("");
        for (const char* s : {"F", "M", "U"}) {
            row.sex_pct[s] = 100.0 * row.sex_pct[s] / n;
        }
        for (const auto& e : ethnicities) {
            row.ethnicity_pct[e] = 100.0 * row.ethnicity_pct[e] / n;
        }
        out.push_back(std::move(row));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Files

inline void write_cluster_means(const std::string& path, std::span<const ClusterMean> means) {
    csv::Table t;
    t.header = {"cluster", "t", "u1", "u2", "count"};
    for (const auto& m : means) {
        t.rows.push_back({std::to_string(m.cluster), csv::format(m.t), csv::format(m.u1), csv::format(m.u2), std::to_string(m.count)});
    }
    csv::write(path, t);
}

inline void write_prevalence(const std::string& path, std::span<const PrevalenceRow> rows) {
    csv::Table t;
    t.header = {"cluster", "theme", "t", "prevalence", "with_theme", "patients"};
    for (const auto& r : rows) {
        t.rows.push_back({std::to_string(r.cluster), r.theme, csv::format(r.t), csv::format(r.prevalence), std::to_string(r.with_theme),
                          std::to_string(r.patients)});
    }
    csv::write(path, t);
}

inline void write_demographics(const std::string& path, std::span<const DemographicsRow> rows) {
    csv::Table t;
    t.header = {"cluster", "size", "mean_age_at_diagnosis", "female_pct", "male_pct", "unknown_sex_pct"};
    std::set<std::string> ethnicities;
    for (const auto& r : rows) {
        for (const auto& [e, pct] : r.ethnicity_pct) {
            ethnicities.insert(e);
        }
    }
    for (const auto& e : ethnicities) {
        t.header.push_back("ethnicity_" + e + "_pct");
    }
    for (const auto& r : rows) {
        std::vector<std::string> row{std::to_string(r.cluster), std::to_string(r.size), csv::format(r.mean_age_at_diagnosis),
                                     csv::format(r.sex_pct.at("F")), csv::format(r.sex_pct.at("M")), csv::format(r.sex_pct.at("U"))};
        for (const auto& e : ethnicities) {
            const auto it = r.ethnicity_pct.find(e);
            row.push_back(csv::format(it == r.ethnicity_pct.end() ? 0.0 : it->second));
        }
        t.rows.push_back(std::move(row));
    }
    csv::write(path, t);
}

inline void write_clusters(const std::string& path, const Labeling& clusters) {
    csv::Table t;
    t.header = {"patient_id", "cluster"};
    for (const auto& [pid, c] : clusters) {
        t.rows.push_back({pid, std::to_string(c)});
    }
    csv::write(path, t);
}

inline Labeling read_clusters(const std::string& path) {
    const csv::Table t = csv::read(path);
    const std::size_t pid = t.column("patient_id");
    const std::size_t cl = t.column("cluster");
    Labeling out;
    for (const auto& row : t.rows) {
        if (!out.emplace(row[pid], static_cast<int>(csv::parse_long(row[cl], path))).second) {
            throw DataError(path + ": duplicate patient '" + row[pid] + "'");
        }
    }
    return out;
}

} // namespace trajlens
