#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "trajlens/cohort.hpp"
#include "trajlens/csv.hpp"
#include "trajlens/date.hpp"
#include "trajlens/error.hpp"
#include "trajlens/random.hpp"
#include "trajlens/trajectory.hpp"

namespace trajlens {

/// Codes of one clinical theme.
struct ThemePool {
    std::string name;
    std::vector<CodeEntry> codes;
    bool male_only = false;
};

/// Emission model of one time window: theme probabilities and event rate.
struct WindowEmission {
    std::map<std::string, double> theme_probs;
    double rate_per_year = 1.2;
};

struct ArchetypeSpec {
    int id = 0;
    std::string name;
    std::vector<WindowEmission> windows; ///< one per window of CohortSpec::bounds
    double p_male = 0.5;
    double age_mean = 58.0; ///< age at diagnosis
    double age_sd = 6.0;
    std::array<double, 2> drift{0.0, 0.0}; ///< planted 2D displacement per year after diagnosis
};

struct CohortSpec {
    std::string profile;
    std::vector<double> bounds{-10.0, 0.0, 10.0, 20.0};
    std::vector<ThemePool> pools;
    std::vector<ArchetypeSpec> archetypes;
    ArchetypeSpec control; ///< emission model of control patients
    std::vector<CodeEntry> disease_codes;  ///< recorded at diagnosis, removed from model input
    std::vector<CodeEntry> case_medications;
    std::string disease_exclusion = "E11*";
    int diagnosis_year_min = 1995;
    int diagnosis_year_max = 2004;
    double controls_per_case = 1.5;
    std::vector<std::pair<std::string, double>> ethnicity{{"White", 0.86}, {"Asian", 0.06}, {"Black", 0.04}, {"Mixed", 0.02}, {"Other", 0.02}};

    const ThemePool& pool(const std::string& name) const {
        for (const auto& p : pools) {
            if (p.name == name) {
                return p;
            }
        }
        throw ConfigError("synth: unknown theme '" + name + "'");
    }
};

namespace detail {

inline std::vector<CodeEntry> make_pool(const std::string& prefix, Ontology ontology, const std::vector<std::string>& bases,
                                        const std::vector<std::string>& qualifiers, std::size_t count) {
    std::vector<CodeEntry> out;
    for (std::size_t q = 0; q < qualifiers.size() && out.size() < count; ++q) {
        for (std::size_t b = 0; b < bases.size() && out.size() < count; ++b) {
            char code[32];
            std::snprintf(code, sizeof code, "%s%03zu", prefix.c_str(), out.size() + 1);
            out.push_back({ontology, code, qualifiers[q].empty() ? bases[b] : bases[b] + " " + qualifiers[q]});
        }
    }
    return out;
}

inline std::vector<CodeEntry> concat(std::vector<CodeEntry> a, const std::vector<CodeEntry>& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
}

} // namespace detail

/**
 * Four archetypes shaped after the progression profiles of type 2 diabetes
 * clusters: 0 severe multi-complication, 1 male-dominant complications with
 * erectile dysfunction, 2 older with cardiovascular drift, 3 stable and
 * controlled. All share a background-only pre-diagnosis window.
 */
inline CohortSpec bundled_profile_t2d() {
    using detail::concat;
    using detail::make_pool;
    CohortSpec s;
    s.profile = "t2d";

    const std::vector<std::string> background{
        "acute upper respiratory infection", "seasonal allergic rhinitis", "mechanical lumbar back pain", "osteoarthritis of knee",
        "gastro oesophageal reflux disease", "irritable bowel syndrome", "migraine without aura", "depressive episode",
        "generalised anxiety disorder", "allergic contact dermatitis", "acne vulgaris", "senile nuclear cataract",
        "bacterial conjunctivitis", "acute otitis media", "streptococcal tonsillitis", "chronic maxillary sinusitis",
        "lower urinary tract infection", "benign prostatic hyperplasia", "thrombosed haemorrhoids", "inguinal hernia repair",
        "symptomatic cholelithiasis", "acute appendicitis", "fracture of distal radius", "sprain of lateral ankle ligament",
        "seasonal influenza vaccination", "childhood asthma", "chronic obstructive pulmonary disease", "primary hypothyroidism",
        "iron deficiency anaemia", "vitamin d deficiency", "chronic insomnia", "gouty arthritis of toe", "plaque psoriasis",
        "atopic eczema", "cellulitis of lower limb", "bilateral tinnitus", "benign paroxysmal positional vertigo",
        "carpal tunnel syndrome", "plantar fasciitis", "functional dyspepsia", "chronic constipation", "sigmoid diverticular disease",
        "postmenopausal osteoporosis", "open angle glaucoma", "papulopustular rosacea", "acute bronchitis",
        "community acquired pneumonia", "herpes zoster shingles", "frozen shoulder adhesive capsulitis", "varicose veins of legs",
        "hiatus hernia", "coeliac disease", "rheumatoid arthritis", "polymyalgia rheumatica", "sebaceous cyst excision",
        "ingrowing toenail", "dental abscess", "wax impaction of ear", "pityriasis versicolor", "tension type headache",
        "lateral epicondylitis", "trigeminal neuralgia", "sarcoidosis", "bronchiectasis", "labyrinthitis", "blepharitis",
        "onychomycosis", "urticaria", "fibromyalgia", "endometriosis", "menorrhagia", "hyperhidrosis", "keratoconjunctivitis sicca",
        "spondylolisthesis", "tenosynovitis", "epistaxis", "dysmenorrhoea", "paronychia", "scabies infestation", "impetigo"};
    const std::vector<std::string> management{
        "metformin hydrochloride tablets", "gliclazide modified release", "sitagliptin phosphate", "empagliflozin tablets",
        "dapagliflozin propanediol", "pioglitazone hydrochloride", "glimepiride tablets", "linagliptin tablets",
        "liraglutide pen injection", "dulaglutide weekly injection", "haemoglobin glycated measurement", "retinal photography screening",
        "diabetic foot examination", "structured education programme", "dietetic consultation", "weight management referral",
        "blood glucose testing strips", "capillary glucose monitoring", "annual diabetes review", "atorvastatin calcium",
        "simvastatin tablets", "urine albumin creatinine ratio", "lipid profile fasting", "smoking cessation counselling",
        "exercise on prescription"};
    const std::vector<std::string> cardiovascular{
        "essential primary hypertension", "stable angina pectoris", "acute myocardial infarction", "paroxysmal atrial fibrillation",
        "congestive heart failure", "coronary atherosclerotic disease", "left ventricular hypertrophy", "peripheral arterial disease",
        "cerebral infarction", "transient ischaemic attack", "mixed hyperlipidaemia", "calcific aortic stenosis",
        "mitral valve regurgitation", "dilated cardiomyopathy", "sinus bradycardia", "supraventricular tachycardia",
        "deep vein thrombosis", "pulmonary embolism", "carotid artery stenosis", "percutaneous coronary angioplasty",
        "coronary artery bypass graft", "permanent pacemaker insertion", "amlodipine besilate", "ramipril capsules",
        "bisoprolol fumarate"};
    const std::vector<std::string> renal{
        "chronic kidney disease stage three", "chronic kidney disease stage four", "persistent proteinuria", "microalbuminuria",
        "diabetic nephropathy", "membranous glomerulonephritis", "acute kidney injury", "hyperkalaemia", "nephrotic syndrome",
        "microscopic haematuria", "renal artery stenosis", "haemodialysis dependence", "bilateral hydronephrosis",
        "renal anaemia erythropoietin", "raised serum creatinine", "reduced glomerular filtration", "secondary hyperparathyroidism",
        "nephrology outpatient referral"};
    const std::vector<std::string> complications{
        "background diabetic retinopathy", "proliferative retinopathy", "diabetic maculopathy", "peripheral sensory neuropathy",
        "neuropathic foot ulcer", "amputation of toe", "charcot neuroarthropathy", "diabetic gastroparesis", "autonomic neuropathy",
        "severe hypoglycaemic episode", "diabetic ketoacidosis", "vitreous haemorrhage", "laser photocoagulation",
        "intravitreal injection", "painful polyneuropathy", "foot osteomyelitis", "podiatry high risk", "mononeuropathy",
        "diabetic amyotrophy", "necrobiosis lipoidica"};
    const std::vector<std::string> erectile{"erectile dysfunction", "impotence of organic origin", "sildenafil citrate",
                                            "tadalafil tablets", "vardenafil hydrochloride", "testosterone deficiency",
                                            "hypogonadotrophic hypogonadism", "psychosexual therapy referral"};

    s.pools.push_back({"background", concat(make_pool("BG", Ontology::GP, background, {"", "recurrent"}, 80),
                                            make_pool("BH", Ontology::Hospital, background, {"admission"}, 20)), false});
    s.pools.push_back({"diabetes management", concat(make_pool("DM", Ontology::GP, std::vector<std::string>(management.begin() + 10, management.end()), {"", "review"}, 30),
                                                     make_pool("DR", Ontology::Medication, std::vector<std::string>(management.begin(), management.begin() + 10), {"", "increased dose"}, 20)),
                       false});
    s.pools.push_back({"cardiovascular", concat(make_pool("CV", Ontology::Hospital, cardiovascular, {"", "chronic"}, 40),
                                                make_pool("CG", Ontology::GP, cardiovascular, {"monitoring"}, 10)),
                       false});
    s.pools.push_back({"renal", concat(make_pool("RN", Ontology::Hospital, renal, {"", "progressive"}, 30),
                                       make_pool("RG", Ontology::GP, renal, {"surveillance"}, 5)),
                       false});
    s.pools.push_back({"complications", concat(make_pool("CX", Ontology::Hospital, complications, {"", "bilateral"}, 35),
                                               make_pool("CY", Ontology::GP, complications, {"follow up"}, 5)),
                       false});
    s.pools.push_back({"erectile dysfunction", make_pool("ED", Ontology::GP, erectile, {"", "persistent"}, 15), true});

    s.disease_codes = {{Ontology::Hospital, "E11", "type 2 diabetes mellitus"},
                       {Ontology::Hospital, "E11.9", "type 2 diabetes mellitus without complications"},
                       {Ontology::GP, "E11.0", "non insulin dependent diabetes mellitus"},
                       {Ontology::GP, "E11.8", "type 2 diabetes mellitus with unspecified complications"}};
    s.case_medications = {s.pool("diabetes management").codes[30]};

    const std::map<std::string, double> background_only{{"background", 1.0}};
    auto window = [](std::map<std::string, double> probs, double rate) { return WindowEmission{std::move(probs), rate}; };

    s.archetypes = {
        {0, "severe multi-complication",
         {window(background_only, 1.2),
          window({{"background", 0.15}, {"cardiovascular", 0.15}, {"renal", 0.55}, {"complications", 0.15}}, 1.4),
          window({{"background", 0.1}, {"cardiovascular", 0.2}, {"renal", 0.5}, {"complications", 0.2}}, 1.6)},
         0.55, 58.0, 6.0, {0.5, 0.5}},
        {1, "male complications with erectile dysfunction",
         {window(background_only, 1.2),
          window({{"background", 0.15}, {"diabetes management", 0.1}, {"erectile dysfunction", 0.4}, {"complications", 0.35}}, 1.3),
          window({{"background", 0.1}, {"diabetes management", 0.05}, {"erectile dysfunction", 0.4}, {"complications", 0.45}}, 1.4)},
         0.9, 54.0, 6.0, {-0.5, 0.5}},
        {2, "older cardiovascular",
         {window(background_only, 1.2),
          window({{"background", 0.25}, {"diabetes management", 0.2}, {"cardiovascular", 0.55}}, 1.3),
          window({{"background", 0.15}, {"diabetes management", 0.1}, {"cardiovascular", 0.75}}, 1.4)},
         0.5, 66.0, 5.0, {-0.5, -0.5}},
        {3, "stable controlled",
         {window(background_only, 1.2),
          window({{"background", 0.5}, {"diabetes management", 0.5}}, 1.2),
          window({{"background", 0.5}, {"diabetes management", 0.5}}, 1.2)},
         0.5, 56.0, 7.0, {0.5, -0.5}},
    };
    s.control = {-1, "control", {window(background_only, 1.2), window(background_only, 1.2), window(background_only, 1.2)}, 0.5, 58.0, 8.0, {0.0, 0.0}};
    return s;
}

/// Planted truth behind a generated cohort. Snapshot stage index equals its window index under `bounds`.
struct GroundTruth {
    std::string profile;
    std::uint64_t seed = 0;
    std::vector<double> bounds;
    std::vector<std::string> stage_names;
    std::vector<std::pair<int, std::string>> archetypes;
    std::map<std::string, int> patient_archetype; ///< cases only
    std::map<std::string, std::string> marker_theme;

    nlohmann::json to_json() const {
        nlohmann::json arch = nlohmann::json::array();
        for (const auto& [id, name] : archetypes) {
            arch.push_back({{"id", id}, {"name", name}});
        }
        return {{"profile", profile}, {"seed", seed},           {"bounds", bounds},
                {"stages", stage_names}, {"archetypes", arch}, {"patients", patient_archetype},
                {"markers", marker_theme}};
    }

    static GroundTruth from_json(const nlohmann::json& j) {
        GroundTruth g;
        try {
            g.profile = j.at("profile").get<std::string>();
            g.seed = j.at("seed").get<std::uint64_t>();
            g.bounds = j.at("bounds").get<std::vector<double>>();
            g.stage_names = j.at("stages").get<std::vector<std::string>>();
            for (const auto& a : j.at("archetypes")) {
                g.archetypes.emplace_back(a.at("id").get<int>(), a.at("name").get<std::string>());
            }
            g.patient_archetype = j.at("patients").get<std::map<std::string, int>>();
            g.marker_theme = j.at("markers").get<std::map<std::string, std::string>>();
        } catch (const nlohmann::json::exception& ex) {
            throw DataError(std::string("ground truth: ") + ex.what());
        }
        return g;
    }
};

struct SyntheticCohort {
    std::vector<Event> events;
    std::vector<PatientRecord> patients;
    GroundTruth truth;
};

namespace detail {

inline void validate_spec(const CohortSpec& spec) {
    validate_bounds(spec.bounds);
    if (spec.archetypes.size() < 2) {
        throw ConfigError("synth: need at least two archetypes");
    }
    auto check = [&](const ArchetypeSpec& a) {
        if (a.windows.size() + 1 != spec.bounds.size()) {
            throw ConfigError("synth: archetype '" + a.name + "' needs one emission per window");
        }
        for (const auto& w : a.windows) {
            double total = 0.0;
            for (const auto& [theme, p] : w.theme_probs) {
                if (p < 0.0) {
                    throw ConfigError("synth: negative probability in archetype '" + a.name + "'");
                }
                if (p > 0.0 && spec.pool(theme).codes.empty()) {
                    throw ConfigError("synth: theme '" + theme + "' has no codes");
                }
                total += p;
            }
            if (!(total > 0.0)) {
                throw ConfigError("synth: archetype '" + a.name + "' has a window with all-zero theme probabilities");
            }
            if (!(w.rate_per_year > 0.0)) {
                throw ConfigError("synth: archetype '" + a.name + "' has a non-positive event rate");
            }
        }
        if (a.p_male < 0.0 || a.p_male > 1.0) {
            throw ConfigError("synth: p_male out of [0, 1] in archetype '" + a.name + "'");
        }
    };
    for (const auto& a : spec.archetypes) {
        check(a);
    }
    check(spec.control);
}

inline std::string pick_ethnicity(const CohortSpec& spec, Rng& rng) {
    std::vector<double> w;
    for (const auto& [name, p] : spec.ethnicity) {
        w.push_back(p);
    }
    return spec.ethnicity[rng.categorical(w)].first;
}

/// Poisson event stream of one patient over all windows around `anchor`.
inline void emit_events(const CohortSpec& spec, const ArchetypeSpec& a, const std::string& pid, Sex sex, const Date& anchor, Rng& rng,
                        std::vector<Event>& out) {
    std::vector<Event> events;
    for (std::size_t w = 0; w < a.windows.size(); ++w) {
        const auto& em = a.windows[w];
        std::vector<const ThemePool*> pools;
        std::vector<double> weights;
        for (const auto& [theme, p] : em.theme_probs) {
            const ThemePool& pool = spec.pool(theme);
            if (p > 0.0 && !(pool.male_only && sex != Sex::Male)) {
                pools.push_back(&pool);
                weights.push_back(p);
            }
        }
        if (pools.empty()) {
            continue;
        }
        const double lo = spec.bounds[w];
        const double hi = spec.bounds[w + 1];
        const std::size_t count = rng.poisson(em.rate_per_year * (hi - lo));
        for (std::size_t e = 0; e < count; ++e) {
            const Date date = anchor.shift_years(rng.uniform(lo, hi));
            const ThemePool& pool = *pools[rng.categorical(weights)];
            const CodeEntry& c = pool.codes[rng.index(pool.codes.size())];
            events.push_back({pid, date, c.ontology, c.code, c.description});
        }
    }
    std::stable_sort(events.begin(), events.end(), [](const Event& x, const Event& y) { return x.date < y.date; });
    out.insert(out.end(), events.begin(), events.end());
}

inline int draw_birth_year(int anchor_year, const ArchetypeSpec& a, Rng& rng) {
    return anchor_year - static_cast<int>(std::lround(rng.normal(a.age_mean, a.age_sd)));
}

} // namespace detail

/**
 * Generates `n_patients` cases spread evenly over the archetypes plus a
 * control pool drawn from the background-only model. Controls mirror the
 * sex and birth year (within one year) of a randomly chosen case so the
 * pool supports matching. Each patient uses its own derived seed.
 */
inline SyntheticCohort generate_cohort(const CohortSpec& spec, std::size_t n_patients, std::uint64_t seed) {
    detail::validate_spec(spec);
    const std::size_t n_arch = spec.archetypes.size();
    if (n_patients < 10 * n_arch) {
        throw ConfigError("synth: need at least 10 patients per archetype (" + std::to_string(10 * n_arch) + ")");
    }

    SyntheticCohort out;
    out.truth.profile = spec.profile;
    out.truth.seed = seed;
    out.truth.bounds = spec.bounds;
    for (std::size_t w = 0; w + 1 < spec.bounds.size(); ++w) {
        out.truth.stage_names.push_back("window " + std::to_string(w));
    }
    for (const auto& a : spec.archetypes) {
        out.truth.archetypes.emplace_back(a.id, a.name);
    }
    for (const auto& pool : spec.pools) {
        for (const auto& c : pool.codes) {
            out.truth.marker_theme[c.description] = pool.name;
        }
    }

    std::vector<std::size_t> arch_of(n_patients);
    for (std::size_t i = 0; i < n_patients; ++i) {
        arch_of[i] = i % n_arch;
    }
    Rng assign_rng(derive_seed(seed, "archetypes"));
    assign_rng.shuffle(arch_of);

    const int width = std::max<int>(4, static_cast<int>(std::to_string(n_patients).size()));
    auto make_id = [&](char prefix, std::size_t i) {
        std::string digits = std::to_string(i + 1);
        return std::string(1, prefix) + std::string(static_cast<std::size_t>(width) - std::min<std::size_t>(digits.size(), width), '0') + digits;
    };

    for (std::size_t i = 0; i < n_patients; ++i) {
        const ArchetypeSpec& a = spec.archetypes[arch_of[i]];
        Rng rng(derive_seed(seed, 0x1000000ULL + i));
        PatientRecord p;
        p.patient_id = make_id('P', i);
        p.sex = rng.uniform() < a.p_male ? Sex::Male : Sex::Female;
        const int year = spec.diagnosis_year_min + static_cast<int>(rng.index(static_cast<std::size_t>(spec.diagnosis_year_max - spec.diagnosis_year_min + 1)));
        const Date diagnosis = Date(year, 1, 1).add_days(static_cast<long>(rng.index(365)));
        p.diagnosis_date = diagnosis;
        p.birth_year = detail::draw_birth_year(year, a, rng);
        p.ethnicity = detail::pick_ethnicity(spec, rng);
        p.label = Label::Case;
        detail::emit_events(spec, a, p.patient_id, p.sex, diagnosis, rng, out.events);
        for (const auto& c : spec.disease_codes) {
            if (rng.uniform() < 0.5 || &c == &spec.disease_codes.front()) {
                out.events.push_back({p.patient_id, diagnosis, c.ontology, c.code, c.description});
            }
        }
        for (const auto& c : spec.case_medications) {
            out.events.push_back({p.patient_id, diagnosis.add_days(14), c.ontology, c.code, c.description});
        }
        out.truth.patient_archetype[p.patient_id] = a.id;
        out.patients.push_back(std::move(p));
    }

    const auto n_controls = static_cast<std::size_t>(std::ceil(spec.controls_per_case * static_cast<double>(n_patients)));
    for (std::size_t i = 0; i < n_controls; ++i) {
        Rng rng(derive_seed(seed, 0x2000000ULL + i));
        const PatientRecord& twin = out.patients[i % n_patients];
        PatientRecord c;
        c.patient_id = make_id('C', i);
        c.sex = twin.sex;
        c.birth_year = twin.birth_year + static_cast<int>(rng.index(3)) - 1;
        c.ethnicity = detail::pick_ethnicity(spec, rng);
        c.label = Label::Control;
        detail::emit_events(spec, spec.control, c.patient_id, c.sex, *twin.diagnosis_date, rng, out.events);
        out.patients.push_back(std::move(c));
    }
    return out;
}

/**
 * Reduced-space points with known structure for the cases of a generated
 * cohort. Each window with events yields one point at the midpoint time of
 * its events; its position is the archetype drift times max(t, 0) plus
 * isotropic Gaussian noise.
 */
inline std::vector<TrajectoryInput> planted_trajectories(const SyntheticCohort& cohort, const CohortSpec& spec, double noise_sd,
                                                         std::uint64_t seed) {
    std::map<int, const ArchetypeSpec*> by_id;
    for (const auto& a : spec.archetypes) {
        by_id[a.id] = &a;
    }
    std::map<std::string, Date> diagnosis;
    for (const auto& p : cohort.patients) {
        if (p.diagnosis_date) {
            diagnosis.emplace(p.patient_id, *p.diagnosis_date);
        }
    }
    const CodeSet excluded{spec.disease_exclusion};
    const std::size_t windows = spec.bounds.size() - 1;
    std::map<std::string, std::vector<std::pair<double, double>>> span; // per window: (first, last)
    for (const auto& e : cohort.events) {
        const auto d = diagnosis.find(e.patient_id);
        if (d == diagnosis.end() || excluded.contains(e.code)) {
            continue;
        }
        const double t = years_between(d->second, e.date);
        auto& spans = span.try_emplace(e.patient_id, windows, std::pair{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()})
                          .first->second;
        for (std::size_t w = 0; w < windows; ++w) {
            if (t >= spec.bounds[w] && t < spec.bounds[w + 1]) {
                spans[w].first = std::min(spans[w].first, t);
                spans[w].second = std::max(spans[w].second, t);
            }
        }
    }
    std::vector<TrajectoryInput> out;
    std::size_t patient = 0;
    for (const auto& [pid, arch] : cohort.truth.patient_archetype) {
        Rng rng(derive_seed(seed, patient++));
        const auto it = by_id.find(arch);
        const auto sp = span.find(pid);
        if (it == by_id.end() || sp == span.end()) {
            continue;
        }
        for (std::size_t w = 0; w < windows; ++w) {
            const auto [first, last] = sp->second[w];
            if (first > last) {
                continue;
            }
            const double t = 0.5 * (first + last);
            const double along = std::max(t, 0.0);
            out.push_back({pid, static_cast<int>(w), t, it->second->drift[0] * along + rng.normal(0.0, noise_sd),
                           it->second->drift[1] * along + rng.normal(0.0, noise_sd)});
        }
    }
    return out;
}

inline void write_cohort(const std::string& dir, const SyntheticCohort& cohort) {
    std::filesystem::create_directories(dir);
    std::vector<nlohmann::json> events;
    events.reserve(cohort.events.size());
    for (const auto& e : cohort.events) {
        events.push_back(io::to_json(e));
    }
    io::write_jsonl(dir + "/events.jsonl", events);
    std::vector<nlohmann::json> patients;
    for (const auto& p : cohort.patients) {
        patients.push_back(io::to_json(p));
    }
    io::write_jsonl(dir + "/patients.jsonl", patients);
    std::ofstream gt(dir + "/ground_truth.json");
    if (!gt) {
        throw DataError("cannot write " + dir + "/ground_truth.json");
    }
    gt << cohort.truth.to_json().dump(2) << '\n';
    csv::Table themes;
    themes.header = {"marker", "theme"};
    for (const auto& [marker, theme] : cohort.truth.marker_theme) {
        themes.rows.push_back({marker, theme});
    }
    csv::write(dir + "/themes.csv", themes);
}

} // namespace trajlens
