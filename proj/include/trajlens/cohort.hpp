#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "json.hpp"
#include "trajlens/date.hpp"
#include "trajlens/error.hpp"
#include "trajlens/random.hpp"
#include "trajlens/tokenizer.hpp"

namespace trajlens {

enum class Ontology { GP, Hospital, Medication };

inline std::string_view to_string(Ontology o) {
    switch (o) {
    case Ontology::GP: return "GP";
    case Ontology::Hospital: return "HOSPITAL";
    case Ontology::Medication: return "MEDICATION";
    }
    return "GP";
}

inline Ontology parse_ontology(std::string_view s) {
    if (s == "GP") return Ontology::GP;
    if (s == "HOSPITAL") return Ontology::Hospital;
    if (s == "MEDICATION") return Ontology::Medication;
    throw DataError("unknown ontology '" + std::string(s) + "'");
}

enum class Sex { Female, Male, Unknown };

inline std::string_view to_string(Sex s) {
    switch (s) {
    case Sex::Female: return "F";
    case Sex::Male: return "M";
    case Sex::Unknown: return "U";
    }
    return "U";
}

inline Sex parse_sex(std::string_view s) {
    if (s == "F" || s == "female" || s == "Female") return Sex::Female;
    if (s == "M" || s == "male" || s == "Male") return Sex::Male;
    if (s == "U" || s == "unknown" || s.empty()) return Sex::Unknown;
    throw DataError("unknown sex '" + std::string(s) + "'");
}

enum class Label { Case, Control, Dropped };

inline std::string_view to_string(Label l) {
    switch (l) {
    case Label::Case: return "case";
    case Label::Control: return "control";
    case Label::Dropped: return "dropped";
    }
    return "dropped";
}

inline Label parse_label(std::string_view s) {
    if (s == "case" || s == "CASE") return Label::Case;
    if (s == "control" || s == "CONTROL") return Label::Control;
    if (s == "dropped" || s == "DROPPED") return Label::Dropped;
    throw DataError("unknown label '" + std::string(s) + "'");
}

struct Event {
    std::string patient_id;
    Date date;
    Ontology ontology = Ontology::GP;
    std::string code;
    std::string description;
};

struct CodeEntry {
    Ontology ontology = Ontology::GP;
    std::string code;
    std::string description;

    friend bool operator==(const CodeEntry&, const CodeEntry&) = default;
};

struct Visit {
    std::string patient_id;
    Date date;
    std::vector<CodeEntry> codes;

    friend bool operator==(const Visit&, const Visit&) = default;
};

struct PatientRecord {
    std::string patient_id;
    Sex sex = Sex::Unknown;
    int birth_year = 0;
    std::string ethnicity;
    std::vector<Visit> visits;
    std::optional<Date> diagnosis_date;
    std::optional<Date> index_date; ///< anchor for controls, copied from the matched case
    Label label = Label::Control;

    /// Date that snapshot windows are measured from.
    std::optional<Date> anchor() const { return diagnosis_date ? diagnosis_date : index_date; }
};

/// Which events obey the <7-day admission merge.
enum class MergeScope { HospitalOnly, AllSources };

/**
 * Code set with exact entries and prefix entries. An entry ending in '*'
 * matches every code that starts with the text before it, which is how a
 * parent code and its ontology children are listed.
 */
class CodeSet {
public:
    CodeSet() = default;
    CodeSet(std::initializer_list<std::string> entries) {
        for (const auto& e : entries) {
            insert(e);
        }
    }
    template <typename Range>
    explicit CodeSet(const Range& entries) {
        for (const auto& e : entries) {
            insert(std::string(e));
        }
    }

    void insert(const std::string& entry) {
        if (!entry.empty() && entry.back() == '*') {
            prefixes_.push_back(entry.substr(0, entry.size() - 1));
        } else {
            exact_.insert(entry);
        }
    }

    bool contains(std::string_view code) const {
        if (exact_.count(std::string(code))) {
            return true;
        }
        return std::any_of(prefixes_.begin(), prefixes_.end(), [&](const std::string& p) { return code.starts_with(p); });
    }

    bool empty() const { return exact_.empty() && prefixes_.empty(); }

private:
    std::unordered_set<std::string> exact_;
    std::vector<std::string> prefixes_;
};

/**
 * Collapses one patient's events into visits.
 *
 * Events sharing a date form one visit. Events in merge scope are grouped in
 * a single left-to-right pass: an event joins the current group when its own
 * date is less than 7 days after the group's earliest date, otherwise it
 * starts a new group keyed by its date. Codes within a visit are unique by
 * (ontology, code), first occurrence kept.
 */
inline std::vector<Visit> aggregate_visits(std::span<const Event> events, MergeScope scope = MergeScope::HospitalOnly) {
    if (events.empty()) {
        return {};
    }
    const std::string& pid = events.front().patient_id;
    for (const auto& e : events) {
        if (e.patient_id != pid) {
            throw DataError("aggregate_visits: events of '" + pid + "' and '" + e.patient_id + "' mixed");
        }
        if (e.description.empty()) {
            throw DataError("event " + e.patient_id + "/" + e.code + " on " + e.date.iso() + " has an empty description");
        }
    }

    std::vector<std::size_t> order(events.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        order[i] = i;
    }
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return events[a].date < events[b].date; });

    auto in_scope = [&](const Event& e) { return scope == MergeScope::AllSources || e.ontology == Ontology::Hospital; };

    std::vector<Date> key(events.size());
    std::optional<Date> group_start;
    for (std::size_t idx : order) {
        const Event& e = events[idx];
        if (!in_scope(e)) {
            key[idx] = e.date;
            continue;
        }
        if (!group_start || days_between(*group_start, e.date) >= 7) {
            group_start = e.date;
        }
        key[idx] = *group_start;
    }

    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return key[a] < key[b]; });

    std::vector<Visit> visits;
    for (std::size_t idx : order) {
        const Event& e = events[idx];
        if (visits.empty() || visits.back().date != key[idx]) {
            visits.push_back(Visit{pid, key[idx], {}});
        }
        auto& codes = visits.back().codes;
        const bool seen = std::any_of(codes.begin(), codes.end(),
                                      [&](const CodeEntry& c) { return c.ontology == e.ontology && c.code == e.code; });
        if (!seen) {
            codes.push_back(CodeEntry{e.ontology, e.code, e.description});
        }
    }
    return visits;
}

/// Flattens visits back to one event per code at the visit date.
inline std::vector<Event> visits_to_events(std::span<const Visit> visits) {
    std::vector<Event> events;
    for (const auto& v : visits) {
        for (const auto& c : v.codes) {
            events.push_back(Event{v.patient_id, v.date, c.ontology, c.code, c.description});
        }
    }
    return events;
}

/// Code lists used to resolve conflicting diabetes records.
struct DiabetesCodeSets {
    CodeSet type1_codes;
    CodeSet type2_codes;
    CodeSet undefined_codes;   ///< diabetes mellitus of unspecified type
    CodeSet case_medications;  ///< prescribed to type 2 patients
    CodeSet type1_medications; ///< prescribed exclusively to type 1 patients
};

namespace detail {
struct DiabetesFlags {
    bool type1 = false;
    bool type2 = false;
    bool undefined = false;
    bool case_med = false;
    bool type1_med = false;
    std::optional<Date> first_diabetes_code;
};

inline DiabetesFlags scan_diabetes(const PatientRecord& record, const DiabetesCodeSets& sets) {
    DiabetesFlags f;
    for (const auto& v : record.visits) {
        for (const auto& c : v.codes) {
            bool diabetes = false;
            if (c.ontology == Ontology::Medication) {
                f.case_med |= sets.case_medications.contains(c.code);
                f.type1_med |= sets.type1_medications.contains(c.code);
                continue;
            }
            if (sets.type1_codes.contains(c.code)) {
                f.type1 = true;
            }
            if (sets.type2_codes.contains(c.code)) {
                f.type2 = diabetes = true;
            }
            if (sets.undefined_codes.contains(c.code)) {
                f.undefined = diabetes = true;
            }
            if (diabetes && (!f.first_diabetes_code || v.date < *f.first_diabetes_code)) {
                f.first_diabetes_code = v.date;
            }
        }
    }
    return f;
}
} // namespace detail

/**
 * Resolves a record with both type 1 and type 2 codes, or an undefined
 * diabetes code, using its prescriptions. A type 2 medication without an
 * exclusively type 1 medication makes it a case; anything else is dropped.
 * Records without conflicting codes are returned unchanged.
 */
inline PatientRecord relabel_by_medication(PatientRecord record, const DiabetesCodeSets& sets) {
    if (sets.case_medications.empty()) {
        throw ConfigError("relabel_by_medication: case medication set is empty");
    }
    const auto f = detail::scan_diabetes(record, sets);
    const bool conflicting = (f.type1 && f.type2) || f.undefined;
    if (!conflicting) {
        return record;
    }
    if (f.case_med && !f.type1_med) {
        record.label = Label::Case;
        if (!record.diagnosis_date) {
            record.diagnosis_date = f.first_diabetes_code;
        }
    } else {
        record.label = Label::Dropped;
    }
    return record;
}

/// Drops control candidates carrying any diabetes code.
inline std::vector<PatientRecord> filter_control_pool(std::vector<PatientRecord> pool, const DiabetesCodeSets& sets) {
    std::erase_if(pool, [&](const PatientRecord& r) {
        const auto f = detail::scan_diabetes(r, sets);
        return f.type1 || f.type2 || f.undefined;
    });
    return pool;
}

struct MatchResult {
    std::vector<PatientRecord> controls; ///< one per matched case, index_date set
    std::vector<std::pair<std::string, std::string>> pairs; ///< (case id, control id)
    std::vector<std::string> unmatched;  ///< case ids without an eligible control
};

/**
 * One control per case with the same sex and a birth year within
 * `year_tolerance`, drawn uniformly without replacement. Cases are processed
 * in input order.
 */
inline MatchResult match_controls(std::span<const PatientRecord> cases, std::span<const PatientRecord> pool, std::uint64_t seed,
                                  int year_tolerance = 2) {
    std::unordered_set<std::string> case_ids;
    for (const auto& c : cases) {
        case_ids.insert(c.patient_id);
    }
    for (const auto& p : pool) {
        if (case_ids.count(p.patient_id)) {
            throw DataError("match_controls: patient '" + p.patient_id + "' is both a case and a control candidate");
        }
    }

    Rng rng(seed);
    std::vector<bool> used(pool.size(), false);
    MatchResult result;
    std::vector<std::size_t> candidates;
    for (const auto& c : cases) {
        candidates.clear();
        for (std::size_t i = 0; i < pool.size(); ++i) {
            if (!used[i] && pool[i].sex == c.sex && std::abs(pool[i].birth_year - c.birth_year) <= year_tolerance) {
                candidates.push_back(i);
            }
        }
        if (candidates.empty()) {
            result.unmatched.push_back(c.patient_id);
            continue;
        }
        const std::size_t pick = candidates[rng.index(candidates.size())];
        used[pick] = true;
        PatientRecord control = pool[pick];
        control.label = Label::Control;
        control.diagnosis_date.reset();
        control.index_date = c.diagnosis_date ? c.diagnosis_date : c.index_date;
        result.pairs.emplace_back(c.patient_id, control.patient_id);
        result.controls.push_back(std::move(control));
    }
    return result;
}

struct SnapshotEntry {
    Date date;
    std::string code;
    std::string description;

    friend bool operator==(const SnapshotEntry&, const SnapshotEntry&) = default;
};

/// Events of one patient inside one time window relative to the anchor date.
struct Snapshot {
    std::string patient_id;
    int snapshot_index = 0;
    int window_index = 0;
    double window_start = 0.0; ///< years relative to the anchor
    double window_end = 0.0;
    Date anchor;
    Label label = Label::Control;
    std::vector<SnapshotEntry> entries; ///< time-ordered
    double mean_time_to_diagnosis = 0.0;

    std::vector<std::string> descriptions() const {
        std::vector<std::string> out;
        out.reserve(entries.size());
        for (const auto& e : entries) {
            out.push_back(e.description);
        }
        return out;
    }
};

/// Midpoint of the first and last entry dates, in signed years from the anchor.
inline double mean_time_to_diagnosis(const Snapshot& snapshot) {
    if (snapshot.entries.empty()) {
        throw DataError("mean_time_to_diagnosis: snapshot " + snapshot.patient_id + "/" + std::to_string(snapshot.snapshot_index) +
                        " is empty");
    }
    const double first = years_between(snapshot.anchor, snapshot.entries.front().date);
    const double last = years_between(snapshot.anchor, snapshot.entries.back().date);
    return 0.5 * (first + last);
}

inline void validate_bounds(std::span<const double> bounds) {
    if (bounds.size() < 2) {
        throw ConfigError("snapshot bounds need at least two values");
    }
    for (std::size_t i = 1; i < bounds.size(); ++i) {
        if (!(bounds[i] > bounds[i - 1])) {
            throw ConfigError("snapshot bounds must be strictly increasing");
        }
    }
}

/**
 * Slices a record into windows [anchor + bounds[w], anchor + bounds[w+1]).
 * Codes in `exclude` are removed; windows left empty produce no snapshot.
 */
inline std::vector<Snapshot> build_snapshots(const PatientRecord& record, std::span<const double> bounds, const CodeSet& exclude) {
    validate_bounds(bounds);
    const auto anchor = record.anchor();
    if (!anchor) {
        throw DataError("build_snapshots: patient '" + record.patient_id + "' has neither a diagnosis nor an index date");
    }
    std::vector<Date> edges;
    for (double b : bounds) {
        edges.push_back(anchor->shift_years(b));
    }

    std::vector<Snapshot> snapshots;
    for (std::size_t w = 0; w + 1 < edges.size(); ++w) {
        Snapshot s;
        s.patient_id = record.patient_id;
        s.window_index = static_cast<int>(w);
        s.window_start = bounds[w];
        s.window_end = bounds[w + 1];
        s.anchor = *anchor;
        s.label = record.label;
        for (const auto& v : record.visits) {
            if (v.date < edges[w] || !(v.date < edges[w + 1])) {
                continue;
            }
            for (const auto& c : v.codes) {
                if (!exclude.contains(c.code)) {
                    s.entries.push_back(SnapshotEntry{v.date, c.code, c.description});
                }
            }
        }
        if (s.entries.empty()) {
            continue;
        }
        s.snapshot_index = static_cast<int>(snapshots.size());
        s.mean_time_to_diagnosis = mean_time_to_diagnosis(s);
        snapshots.push_back(std::move(s));
    }
    return snapshots;
}

/**
 * Splits a snapshot into consecutive pieces that each encode to at most
 * `max_len` tokens including CLS and SEP. Descriptions are never cut; one
 * that alone exceeds the limit is an error. Each piece recomputes its mean
 * time to diagnosis. Snapshot indices are left to the caller.
 */
inline std::vector<Snapshot> split_by_max_len(const Snapshot& snapshot, const Vocabulary& vocab, std::size_t max_len = 64) {
    if (max_len < 3) {
        throw ConfigError("max_len must be at least 3");
    }
    const std::size_t budget = max_len - 2;
    std::vector<Snapshot> parts;
    Snapshot current = snapshot;
    current.entries.clear();
    std::size_t used = 0;
    for (const auto& entry : snapshot.entries) {
        const std::size_t n = encode_pieces(std::span<const std::string>(&entry.description, 1), vocab).size();
        if (n > budget) {
            throw DataError("description '" + entry.description + "' alone needs " + std::to_string(n + 2) +
                            " tokens, more than max_len " + std::to_string(max_len));
        }
        if (used + n > budget && !current.entries.empty()) {
            current.mean_time_to_diagnosis = mean_time_to_diagnosis(current);
            parts.push_back(current);
            current.entries.clear();
            used = 0;
        }
        current.entries.push_back(entry);
        used += n;
    }
    if (!current.entries.empty()) {
        current.mean_time_to_diagnosis = mean_time_to_diagnosis(current);
        parts.push_back(std::move(current));
    }
    return parts;
}

/// Patient-level k-fold partition; model i validates on fold i and tests on fold (i+1) mod k.
class FoldAssignment {
public:
    struct Split {
        std::vector<std::string> train;
        std::vector<std::string> validation;
        std::vector<std::string> test;
    };

    FoldAssignment() = default;
    FoldAssignment(std::map<std::string, int> folds, int k) : folds_(std::move(folds)), k_(k) {}

    int k() const { return k_; }
    const std::map<std::string, int>& folds() const { return folds_; }

    int fold_of(const std::string& patient_id) const {
        const auto it = folds_.find(patient_id);
        if (it == folds_.end()) {
            throw DataError("patient '" + patient_id + "' has no fold");
        }
        return it->second;
    }

    Split split(int model) const {
        if (model < 0 || model >= k_) {
            throw ConfigError("model index out of range");
        }
        const int validation = model;
        const int test = (model + 1) % k_;
        Split s;
        for (const auto& [id, f] : folds_) {
            if (f == validation) {
                s.validation.push_back(id);
            } else if (f == test) {
                s.test.push_back(id);
            } else {
                s.train.push_back(id);
            }
        }
        return s;
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["k"] = k_;
        j["folds"] = nlohmann::json::object();
        for (const auto& [id, f] : folds_) {
            j["folds"][id] = f;
        }
        return j;
    }

    static FoldAssignment from_json(const nlohmann::json& j) {
        std::map<std::string, int> folds;
        for (const auto& [id, f] : j.at("folds").items()) {
            folds[id] = f.get<int>();
        }
        return FoldAssignment(std::move(folds), j.at("k").get<int>());
    }

private:
    std::map<std::string, int> folds_;
    int k_ = 0;
};

/// Seeded shuffle, then round-robin so fold sizes differ by at most one.
inline FoldAssignment assign_folds(std::span<const std::string> patient_ids, int k = 5, std::uint64_t seed = 0) {
    if (k < 3) {
        throw ConfigError("fold scheme needs at least three folds");
    }
    if (static_cast<std::size_t>(k) > patient_ids.size()) {
        throw ConfigError("cannot split " + std::to_string(patient_ids.size()) + " patients into " + std::to_string(k) + " folds");
    }
    std::vector<std::string> ids(patient_ids.begin(), patient_ids.end());
    std::sort(ids.begin(), ids.end());
    if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) {
        throw DataError("assign_folds: duplicate patient id");
    }
    Rng rng(seed);
    rng.shuffle(ids);
    std::map<std::string, int> folds;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        folds[ids[i]] = static_cast<int>(i % static_cast<std::size_t>(k));
    }
    return FoldAssignment(std::move(folds), k);
}

// ---------------------------------------------------------------------------
// JSON lines I/O

namespace io {

inline std::vector<nlohmann::json> read_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open " + path);
    }
    std::vector<nlohmann::json> rows;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        try {
            rows.push_back(nlohmann::json::parse(line));
        } catch (const nlohmann::json::exception& e) {
            throw DataError(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return rows;
}

inline void write_jsonl(const std::string& path, const std::vector<nlohmann::json>& rows) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError("cannot write " + path);
    }
    for (const auto& r : rows) {
        out << r.dump() << '\n';
    }
}

inline Event event_from_json(const nlohmann::json& j, std::size_t line_no) {
    auto where = [&] { return "event on line " + std::to_string(line_no); };
    try {
        Event e;
        e.patient_id = j.at("patient_id").get<std::string>();
        const std::string date = j.at("date").get<std::string>();
        try {
            e.date = Date::parse(date);
        } catch (const DataError&) {
            throw DataError(where() + " (patient " + e.patient_id + "): invalid date '" + date + "'");
        }
        e.ontology = parse_ontology(j.at("ontology").get<std::string>());
        e.code = j.at("code").get<std::string>();
        e.description = j.at("description").get<std::string>();
        if (e.description.empty()) {
            throw DataError(where() + " (patient " + e.patient_id + "): empty description");
        }
        return e;
    } catch (const nlohmann::json::exception& ex) {
        throw DataError(where() + ": " + ex.what());
    }
}

inline nlohmann::json to_json(const Event& e) {
    return {{"patient_id", e.patient_id},
            {"date", e.date.iso()},
            {"ontology", std::string(to_string(e.ontology))},
            {"code", e.code},
            {"description", e.description}};
}

inline std::vector<Event> read_events(const std::string& path) {
    std::vector<Event> events;
    std::size_t line_no = 0;
    for (const auto& j : read_jsonl(path)) {
        events.push_back(event_from_json(j, ++line_no));
    }
    return events;
}

inline nlohmann::json to_json(const PatientRecord& r) {
    nlohmann::json j{{"patient_id", r.patient_id},
                     {"sex", std::string(to_string(r.sex))},
                     {"birth_year", r.birth_year},
                     {"ethnicity", r.ethnicity},
                     {"label", std::string(to_string(r.label))}};
    j["diagnosis_date"] = r.diagnosis_date ? nlohmann::json(r.diagnosis_date->iso()) : nlohmann::json(nullptr);
    return j;
}

inline PatientRecord patient_from_json(const nlohmann::json& j) {
    try {
        PatientRecord r;
        r.patient_id = j.at("patient_id").get<std::string>();
        r.sex = parse_sex(j.value("sex", std::string("U")));
        r.birth_year = j.at("birth_year").get<int>();
        r.ethnicity = j.value("ethnicity", std::string("Unknown"));
        if (j.contains("diagnosis_date") && !j["diagnosis_date"].is_null()) {
            r.diagnosis_date = Date::parse(j["diagnosis_date"].get<std::string>());
        }
        if (j.contains("label") && !j["label"].is_null()) {
            r.label = parse_label(j["label"].get<std::string>());
        } else {
            r.label = r.diagnosis_date ? Label::Case : Label::Control;
        }
        if (r.label == Label::Case && !r.diagnosis_date) {
            throw DataError("case '" + r.patient_id + "' has no diagnosis_date");
        }
        return r;
    } catch (const nlohmann::json::exception& ex) {
        throw DataError(std::string("patient record: ") + ex.what());
    }
}

/// Joins events to demographics and aggregates visits. Output is sorted by patient id.
inline std::vector<PatientRecord> load_records(const std::string& events_path, const std::string& patients_path,
                                               MergeScope scope = MergeScope::HospitalOnly) {
    std::map<std::string, PatientRecord> records;
    for (const auto& j : read_jsonl(patients_path)) {
        auto r = patient_from_json(j);
        const std::string id = r.patient_id;
        if (!records.emplace(id, std::move(r)).second) {
            throw DataError("duplicate patient '" + id + "' in " + patients_path);
        }
    }
    std::map<std::string, std::vector<Event>> by_patient;
    for (auto& e : read_events(events_path)) {
        if (!records.count(e.patient_id)) {
            throw DataError("event for unknown patient '" + e.patient_id + "'");
        }
        by_patient[e.patient_id].push_back(std::move(e));
    }
    std::vector<PatientRecord> out;
    out.reserve(records.size());
    for (auto& [id, r] : records) {
        const auto it = by_patient.find(id);
        if (it != by_patient.end()) {
            r.visits = aggregate_visits(it->second, scope);
        }
        out.push_back(std::move(r));
    }
    return out;
}

inline nlohmann::json to_json(const Snapshot& s) {
    nlohmann::json dates = nlohmann::json::array();
    nlohmann::json codes = nlohmann::json::array();
    nlohmann::json descriptions = nlohmann::json::array();
    for (const auto& e : s.entries) {
        dates.push_back(e.date.iso());
        codes.push_back(e.code);
        descriptions.push_back(e.description);
    }
    return {{"patient_id", s.patient_id},
            {"snapshot_index", s.snapshot_index},
            {"window_index", s.window_index},
            {"window_start", s.window_start},
            {"window_end", s.window_end},
            {"anchor_date", s.anchor.iso()},
            {"label", std::string(to_string(s.label))},
            {"mean_time_to_diagnosis", s.mean_time_to_diagnosis},
            {"dates", dates},
            {"codes", codes},
            {"descriptions", descriptions}};
}

inline Snapshot snapshot_from_json(const nlohmann::json& j) {
    try {
        Snapshot s;
        s.patient_id = j.at("patient_id").get<std::string>();
        s.snapshot_index = j.at("snapshot_index").get<int>();
        s.window_index = j.at("window_index").get<int>();
        s.window_start = j.at("window_start").get<double>();
        s.window_end = j.at("window_end").get<double>();
        s.anchor = Date::parse(j.at("anchor_date").get<std::string>());
        s.label = parse_label(j.at("label").get<std::string>());
        s.mean_time_to_diagnosis = j.at("mean_time_to_diagnosis").get<double>();
        const auto& dates = j.at("dates");
        const auto& codes = j.at("codes");
        const auto& descriptions = j.at("descriptions");
        if (dates.size() != descriptions.size() || codes.size() != descriptions.size()) {
            throw DataError("snapshot " + s.patient_id + "/" + std::to_string(s.snapshot_index) + ": ragged entry arrays");
        }
        for (std::size_t i = 0; i < descriptions.size(); ++i) {
            s.entries.push_back(SnapshotEntry{Date::parse(dates[i].get<std::string>()), codes[i].get<std::string>(),
                                              descriptions[i].get<std::string>()});
        }
        return s;
    } catch (const nlohmann::json::exception& ex) {
        throw DataError(std::string("snapshot record: ") + ex.what());
    }
}

inline std::vector<Snapshot> read_snapshots(const std::string& path) {
    std::vector<Snapshot> out;
    for (const auto& j : read_jsonl(path)) {
        out.push_back(snapshot_from_json(j));
    }
    return out;
}

inline void write_snapshots(const std::string& path, std::span<const Snapshot> snapshots) {
    std::vector<nlohmann::json> rows;
    rows.reserve(snapshots.size());
    for (const auto& s : snapshots) {
        rows.push_back(to_json(s));
    }
    write_jsonl(path, rows);
}

/// Demographics, label, anchors and aggregated visits of one cleaned record.
inline nlohmann::json record_to_json(const PatientRecord& r) {
    nlohmann::json j = to_json(r);
    j["index_date"] = r.index_date ? nlohmann::json(r.index_date->iso()) : nlohmann::json(nullptr);
    nlohmann::json visits = nlohmann::json::array();
    for (const auto& v : r.visits) {
        nlohmann::json codes = nlohmann::json::array();
        for (const auto& c : v.codes) {
            codes.push_back({{"ontology", std::string(to_string(c.ontology))}, {"code", c.code}, {"description", c.description}});
        }
        visits.push_back({{"date", v.date.iso()}, {"codes", codes}});
    }
    j["visits"] = visits;
    return j;
}

inline PatientRecord record_from_json(const nlohmann::json& j) {
    PatientRecord r = patient_from_json(j);
    try {
        if (j.contains("index_date") && !j["index_date"].is_null()) {
            r.index_date = Date::parse(j["index_date"].get<std::string>());
        }
        for (const auto& v : j.value("visits", nlohmann::json::array())) {
            Visit visit{r.patient_id, Date::parse(v.at("date").get<std::string>()), {}};
            for (const auto& c : v.at("codes")) {
                visit.codes.push_back({parse_ontology(c.at("ontology").get<std::string>()), c.at("code").get<std::string>(),
                                       c.at("description").get<std::string>()});
            }
            r.visits.push_back(std::move(visit));
        }
    } catch (const nlohmann::json::exception& ex) {
        throw DataError("record '" + r.patient_id + "': " + ex.what());
    }
    return r;
}

inline std::vector<PatientRecord> read_records(const std::string& path) {
    std::vector<PatientRecord> out;
    for (const auto& j : read_jsonl(path)) {
        out.push_back(record_from_json(j));
    }
    return out;
}

inline void write_records(const std::string& path, std::span<const PatientRecord> records) {
    std::vector<nlohmann::json> rows;
    rows.reserve(records.size());
    for (const auto& r : records) {
        rows.push_back(record_to_json(r));
    }
    write_jsonl(path, rows);
}

} // namespace io

} // namespace trajlens
