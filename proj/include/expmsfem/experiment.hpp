#pragma once

// Experiment runner: configuration schema, sweeps over H and m, reference
// solves, decay fits and CSV/JSON writers.

#include "expmsfem/coeffs.hpp"
#include "expmsfem/fem.hpp"
#include "expmsfem/galerkin.hpp"
#include "expmsfem/mesh.hpp"
#include "expmsfem/spectral.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace expmsfem {

using json = nlohmann::json;

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// One fully expanded experiment: a single scenario parameter set, swept over nc and m.
struct ExperimentVariant {
    std::string name;     // experiment name
    std::string scenario; // scenario key passed to make_scenario
    ScenarioParams params;
    std::string tag;      // variant label (e.g. "M=16"), empty if none
    std::vector<int> nc;
    int fine_resolution = 256;
    std::vector<int> m;
    std::vector<bool> online_part{true};
    bool conjugate_enrich = false;
};

struct ExperimentConfig {
    std::vector<ExperimentVariant> variants;
};

inline const char* default_config_text()
{
    return R"({
  "experiments": [
    {
      "name": "periodic",
      "scenario": "periodic",
      "nc": [8, 16, 32],
      "fine_resolution": 256,
      "m": [1, 2, 3, 4, 5, 6],
      "online_part": true,
      "paper": {"nc": [8, 16, 32, 64, 128], "fine_resolution": 1024}
    },
    {
      "name": "high_contrast",
      "scenario": "high_contrast",
      "params": {"M": [16, 64]},
      "nc": [32],
      "fine_resolution": 256,
      "m": [1, 2, 3, 4, 5, 6, 7],
      "online_part": true,
      "paper": {"fine_resolution": 1024}
    },
    {
      "name": "helmholtz_rough",
      "scenario": "helmholtz_rough",
      "params": {"k": 16, "seeds": [1, 2, 3]},
      "nc": [16],
      "fine_resolution": 256,
      "m": [1, 2, 3, 4, 5, 6, 7],
      "online_part": true,
      "conjugate_enrich": false,
      "paper": {"params": {"k": 32}, "nc": [32], "fine_resolution": 1024}
    }
  ]
})";
}

namespace detail {

inline void require(bool ok, const std::string& where, const std::string& what)
{
    if (!ok)
        throw ConfigError(where + ": " + what);
}

inline void check_keys(const json& obj, const std::set<std::string>& allowed, const std::string& where)
{
    for (auto it = obj.begin(); it != obj.end(); ++it)
        require(allowed.count(it.key()) != 0, where, "unknown key '" + it.key() + "'");
}

inline std::vector<int> int_list(const json& v, const std::string& where)
{
    std::vector<int> out;
    if (v.is_number_integer()) {
        out.push_back(v.get<int>());
        return out;
    }
    require(v.is_array() && !v.empty(), where, "expected an integer or a non-empty list of integers");
    for (const auto& x : v) {
        require(x.is_number_integer(), where, "expected integers");
        out.push_back(x.get<int>());
    }
    return out;
}

inline std::vector<double> number_list(const json& v, const std::string& where)
{
    std::vector<double> out;
    if (v.is_number()) {
        out.push_back(v.get<double>());
        return out;
    }
    require(v.is_array() && !v.empty(), where, "expected a number or a non-empty list of numbers");
    for (const auto& x : v) {
        require(x.is_number(), where, "expected numbers");
        out.push_back(x.get<double>());
    }
    return out;
}

inline std::string format_number(double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

} // namespace detail

/// Parses and validates a configuration document. With paper_scale, each
/// experiment's "paper" object is merge-patched over it first.
inline ExperimentConfig parse_config(const json& doc, bool paper_scale = false)
{
    using detail::require;
    require(doc.is_object(), "config", "expected a JSON object");
    detail::check_keys(doc, {"experiments"}, "config");
    require(doc.contains("experiments") && doc["experiments"].is_array() && !doc["experiments"].empty(), "config",
            "'experiments' must be a non-empty list");
    ExperimentConfig cfg;
    std::set<std::string> names;
    for (std::size_t idx = 0; idx < doc["experiments"].size(); ++idx) {
        json exp = doc["experiments"][idx];
        std::string where = "experiments[" + std::to_string(idx) + "]";
        require(exp.is_object(), where, "expected an object");
        if (paper_scale && exp.contains("paper"))
            exp.merge_patch(exp["paper"]);
        exp.erase("paper");
        detail::check_keys(exp, {"name", "scenario", "params", "nc", "fine_resolution", "m", "online_part",
                                 "conjugate_enrich"},
                           where);
        require(exp.contains("scenario") && exp["scenario"].is_string(), where, "'scenario' must be a string");
        ExperimentVariant base;
        base.scenario = exp["scenario"].get<std::string>();
        base.name = exp.value("name", base.scenario);
        where = "experiment '" + base.name + "'";
        require(names.insert(base.name).second, where, "duplicate experiment name");
        require(base.name.find_first_of("/\\ ") == std::string::npos && !base.name.empty(), where,
                "name must be non-empty without spaces or slashes");

        require(exp.contains("nc"), where, "'nc' is required");
        base.nc = detail::int_list(exp["nc"], where + ".nc");
        require(exp.contains("m"), where, "'m' is required");
        base.m = detail::int_list(exp["m"], where + ".m");
        if (exp.contains("fine_resolution")) {
            require(exp["fine_resolution"].is_number_integer(), where, "'fine_resolution' must be an integer");
            base.fine_resolution = exp["fine_resolution"].get<int>();
        }
        require(base.fine_resolution >= 4, where, "'fine_resolution' must be >= 4");
        for (int nc : base.nc) {
            require(nc >= 2, where, "nc = " + std::to_string(nc) + " must be >= 2");
            require(base.fine_resolution % nc == 0, where,
                    "fine_resolution " + std::to_string(base.fine_resolution) + " is not a multiple of nc = " +
                        std::to_string(nc));
            const int refine = base.fine_resolution / nc;
            require(refine >= 2, where, "fine_resolution / nc must be >= 2");
            for (int m : base.m)
                require(m >= 0 && m <= refine - 1, where,
                        "m = " + std::to_string(m) + " outside [0, " + std::to_string(refine - 1) + "] for nc = " +
                            std::to_string(nc));
        }
        std::sort(base.m.begin(), base.m.end());
        require(std::adjacent_find(base.m.begin(), base.m.end()) == base.m.end(), where, "duplicate m values");
        require(std::set<int>(base.nc.begin(), base.nc.end()).size() == base.nc.size(), where,
                "duplicate nc values");

        if (exp.contains("online_part")) {
            const json& op = exp["online_part"];
            base.online_part.clear();
            if (op.is_boolean()) {
                base.online_part.push_back(op.get<bool>());
            } else {
                require(op.is_array() && !op.empty(), where, "'online_part' must be a boolean or a list of booleans");
                for (const auto& b : op) {
                    require(b.is_boolean(), where, "'online_part' entries must be booleans");
                    base.online_part.push_back(b.get<bool>());
                }
            }
        }
        if (exp.contains("conjugate_enrich")) {
            require(exp["conjugate_enrich"].is_boolean(), where, "'conjugate_enrich' must be a boolean");
            base.conjugate_enrich = exp["conjugate_enrich"].get<bool>();
        }

        std::vector<double> contrasts{base.params.contrast};
        const json params = exp.value("params", json::object());
        require(params.is_object(), where, "'params' must be an object");
        detail::check_keys(params, {"M", "k", "seeds", "A", "V", "f", "layout"}, where + ".params");
        if (params.contains("M"))
            contrasts = detail::number_list(params["M"], where + ".params.M");
        if (params.contains("k")) {
            require(params["k"].is_number(), where, "'params.k' must be a number");
            base.params.wavenumber = params["k"].get<double>();
        }
        if (params.contains("seeds")) {
            const json& s = params["seeds"];
            require(s.is_array() && s.size() == 3, where, "'params.seeds' must list 3 integers");
            for (std::size_t k = 0; k < 3; ++k) {
                require(s[k].is_number_unsigned() || (s[k].is_number_integer() && s[k].get<long long>() >= 0), where,
                        "seeds must be non-negative integers");
                base.params.seeds[k] = s[k].get<std::uint64_t>();
            }
        }
        for (const char* key : {"A", "V", "f"})
            if (params.contains(key))
                require(params[key].is_number(), where, std::string("'params.") + key + "' must be a number");
        base.params.A = params.value("A", base.params.A);
        base.params.V = params.value("V", base.params.V);
        base.params.f = params.value("f", base.params.f);
        if (params.contains("layout")) {
            require(params["layout"].is_string(), where, "'params.layout' must be a string");
            try {
                base.params.layout = parse_layout(params["layout"].get<std::string>());
            } catch (const std::exception& err) {
                throw ConfigError(where + ": " + err.what());
            }
        }

        for (double M : contrasts) {
            ExperimentVariant v = base;
            v.params.contrast = M;
            if (contrasts.size() > 1 || params.contains("M"))
                v.tag = "M=" + detail::format_number(M);
            try {
                const ProblemSpec spec = make_scenario(v.scenario, v.params);
                if (spec.scalar_kind == ScalarKind::real)
                    require(!v.conjugate_enrich, where, "'conjugate_enrich' applies to complex scenarios only");
            } catch (const std::invalid_argument& err) {
                throw ConfigError(where + ": " + err.what());
            }
            cfg.variants.push_back(std::move(v));
        }
    }
    return cfg;
}

inline ExperimentConfig default_config(bool paper_scale = false)
{
    return parse_config(json::parse(default_config_text()), paper_scale);
}

struct ResultRow {
    std::string experiment;
    std::string scenario;
    double H = 0.0;
    double h = 0.0;
    int m = 0;
    Index dim = 0;
    double e_l2 = 0.0;
    double e_h = 0.0;
    double t_offline = 0.0;
    double t_online = 0.0;
    double t_coarse = 0.0;
    std::string flags;
    std::optional<std::string> error;
};

struct EdgeDecay {
    std::string experiment;
    std::string tag;
    double H = 0.0;
    Index edge = 0;
    std::vector<double> values;
};

struct ExperimentResult {
    std::vector<ResultRow> rows;
    std::vector<EdgeDecay> decay;
    bool ok() const
    {
        return std::all_of(rows.begin(), rows.end(), [](const ResultRow& r) { return !r.error; });
    }
};

struct RunOptions {
    int threads = 1;
    bool timing = true;
};

namespace detail {

inline std::string variant_flags(const ExperimentVariant& v, bool online)
{
    std::string f;
    if (!v.tag.empty())
        f += v.tag + ";";
    if (v.params.wavenumber)
        f += "k=" + format_number(*v.params.wavenumber) + ";";
    f += std::string("online=") + (online ? "1" : "0") + ";conj=" + (v.conjugate_enrich ? "1" : "0");
    return f;
}

inline std::string sanitize(std::string s)
{
    for (char& c : s)
        if (c == ',' || c == '\n' || c == '\r')
            c = ' ';
    return s;
}

template <class S>
void run_variant(const ExperimentVariant& v, const RunOptions& opts, ExperimentResult& out)
{
    using clock = std::chrono::steady_clock;
    const ProblemSpec spec = make_scenario(v.scenario, v.params);
    const double h = 1.0 / v.fine_resolution;
    auto error_rows = [&](int nc, const std::vector<int>& ms, const std::string& msg) {
        for (int m : ms)
            for (bool online : v.online_part) {
                ResultRow r;
                r.experiment = v.name;
                r.scenario = v.scenario;
                r.H = 1.0 / nc;
                r.h = h;
                r.m = m;
                r.flags = variant_flags(v, online) + ";error=" + sanitize(msg);
                r.error = msg;
                out.rows.push_back(std::move(r));
            }
    };

    // One reference per fine mesh: fine node numbering does not depend on nc.
    std::optional<Vector<S>> u_ref;
    for (int nc : v.nc) {
        const int refine = v.fine_resolution / nc;
        std::optional<AssembledProblem<S>> prob;
        std::optional<OfflineSpace<S>> off;
        Vector<S> load;
        try {
            prob.emplace(TwoLevelMesh(nc, refine, spec.layout), spec);
            load = prob->load();
            if (!u_ref)
                u_ref = solve_reference(*prob, load);
            OfflineOptions oo;
            oo.threads = opts.threads;
            oo.conjugate_enrich = v.conjugate_enrich;
            oo.online_operator = std::find(v.online_part.begin(), v.online_part.end(), true) != v.online_part.end();
            off.emplace(build_offline(*prob, v.m.back(), oo));
        } catch (const std::exception& err) {
            error_rows(nc, v.m, err.what());
            continue;
        }
        for (const auto& ed : off->edges()) {
            if (ed.singular_values.empty())
                continue;
            out.decay.push_back({v.name, v.tag, 1.0 / nc, ed.edge, ed.singular_values});
        }
        for (int m : v.m) {
            std::optional<OfflineSpace<S>> sub;
            double t_trunc = 0.0;
            try {
                const auto t0 = clock::now();
                sub.emplace(off->truncated(m));
                t_trunc = std::chrono::duration<double>(clock::now() - t0).count();
            } catch (const std::exception& err) {
                error_rows(nc, {m}, err.what());
                continue;
            }
            for (bool online : v.online_part) {
                ResultRow r;
                r.experiment = v.name;
                r.scenario = v.scenario;
                r.H = 1.0 / nc;
                r.h = h;
                r.m = m;
                r.dim = sub->dim();
                r.flags = variant_flags(v, online);
                try {
                    const OnlineResult<S> res = solve_online(*sub, load, online, opts.threads);
                    const SolveReport rep = evaluate_errors(*prob, res.u, *u_ref);
                    r.e_l2 = rep.e_l2;
                    r.e_h = rep.e_h;
                    if (opts.timing) {
                        r.t_offline = off->offline_seconds() + t_trunc;
                        r.t_online = res.t_online;
                        r.t_coarse = res.t_coarse;
                    }
                } catch (const std::exception& err) {
                    r.error = err.what();
                    r.flags += ";error=" + sanitize(err.what());
                }
                out.rows.push_back(std::move(r));
            }
        }
    }
}

} // namespace detail

/// Runs every variant. Module errors are recorded per row and the run continues.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg, const RunOptions& opts = {})
{
    ExperimentResult out;
    for (const auto& v : cfg.variants) {
        ProblemSpec spec = make_scenario(v.scenario, v.params);
        if (spec.scalar_kind == ScalarKind::complex)
            detail::run_variant<std::complex<double>>(v, opts, out);
        else
            detail::run_variant<double>(v, opts, out);
    }
    return out;
}

/// Least-squares fits of log e against m and against m^{1/3}.
struct DecayFit {
    std::size_t n = 0;
    double slope = 0.0; // d log e / d m
    double r2 = 1.0;
    double slope_cbrt = 0.0; // d log e / d m^{1/3}
    double r2_cbrt = 1.0;
};

inline DecayFit fit_decay(const std::vector<int>& m, const std::vector<double>& errors)
{
    if (m.size() != errors.size())
        throw std::invalid_argument("fit_decay: m and error lists differ in length");
    std::vector<double> xs, ys;
    for (std::size_t k = 0; k < m.size(); ++k)
        if (errors[k] > 1e-12 && std::isfinite(errors[k])) {
            xs.push_back(double(m[k]));
            ys.push_back(std::log(errors[k]));
        }
    if (xs.size() < 3)
        throw std::invalid_argument("fit_decay: need at least 3 rows with error above 1e-12, got " +
                                    std::to_string(xs.size()));
    auto fit = [&](const std::vector<double>& x, double& slope, double& r2) {
        const double n = double(x.size());
        double mx = 0, my = 0;
        for (std::size_t k = 0; k < x.size(); ++k) {
            mx += x[k];
            my += ys[k];
        }
        mx /= n;
        my /= n;
        double sxx = 0, sxy = 0, syy = 0;
        for (std::size_t k = 0; k < x.size(); ++k) {
            sxx += (x[k] - mx) * (x[k] - mx);
            sxy += (x[k] - mx) * (ys[k] - my);
            syy += (ys[k] - my) * (ys[k] - my);
        }
        if (!(sxx > 0.0))
            throw std::invalid_argument("fit_decay: m values must not all coincide");
        slope = sxy / sxx;
        const double intercept = my - slope * mx;
        double ss = 0;
        for (std::size_t k = 0; k < x.size(); ++k) {
            const double d = ys[k] - (intercept + slope * x[k]);
            ss += d * d;
        }
        r2 = syy > 0.0 ? 1.0 - ss / syy : 1.0;
    };
    DecayFit out;
    out.n = xs.size();
    fit(xs, out.slope, out.r2);
    std::vector<double> cx(xs.size());
    for (std::size_t k = 0; k < xs.size(); ++k)
        cx[k] = std::cbrt(xs[k]);
    fit(cx, out.slope_cbrt, out.r2_cbrt);
    return out;
}

// ---- writers ---------------------------------------------------------------

inline const char* csv_header() { return "scenario,H,h,m,dimS,eL2,eH,t_offline_s,t_online_s,t_coarse_s,flags"; }

inline std::string csv_line(const ResultRow& r)
{
    char buf[512];
    std::snprintf(buf, sizeof buf, "%s,%.10g,%.10g,%d,%lld,%.6e,%.6e,%.3f,%.3f,%.3f,", r.scenario.c_str(), r.H, r.h,
                  r.m, static_cast<long long>(r.dim), r.e_l2, r.e_h, r.t_offline, r.t_online, r.t_coarse);
    return std::string(buf) + r.flags;
}

struct FitRecord {
    std::string experiment;
    std::string scenario;
    double H = 0.0;
    std::string flags;
    std::string metric;
    std::optional<DecayFit> fit;
    std::string error;
};

/// Decay fits per (experiment, H, variant flags) and error metric.
inline std::vector<FitRecord> fit_rows(const std::vector<ResultRow>& rows)
{
    std::map<std::tuple<std::string, double, std::string>, std::vector<const ResultRow*>> groups;
    std::vector<std::tuple<std::string, double, std::string>> order;
    for (const auto& r : rows) {
        if (r.error)
            continue;
        auto key = std::make_tuple(r.experiment, r.H, r.flags);
        if (!groups.count(key))
            order.push_back(key);
        groups[key].push_back(&r);
    }
    std::vector<FitRecord> out;
    for (const auto& key : order) {
        const auto& g = groups[key];
        for (const char* metric : {"eH", "eL2"}) {
            FitRecord rec{std::get<0>(key), g.front()->scenario, std::get<1>(key), std::get<2>(key), metric, {}, {}};
            std::vector<int> ms;
            std::vector<double> es;
            for (const auto* r : g) {
                ms.push_back(r->m);
                es.push_back(std::string(metric) == "eH" ? r->e_h : r->e_l2);
            }
            try {
                rec.fit = fit_decay(ms, es);
            } catch (const std::exception& err) {
                rec.error = err.what();
            }
            out.push_back(std::move(rec));
        }
    }
    return out;
}

/// Writes <name>.csv, <name>_decay.csv and <name>_fit.csv per experiment plus summary.json.
inline void write_outputs(const std::filesystem::path& dir, const ExperimentConfig& cfg, const ExperimentResult& res)
{
    std::filesystem::create_directories(dir);
    std::vector<std::string> names;
    for (const auto& v : cfg.variants)
        if (std::find(names.begin(), names.end(), v.name) == names.end())
            names.push_back(v.name);
    const std::vector<FitRecord> fits = fit_rows(res.rows);
    auto open = [](const std::filesystem::path& p) {
        std::ofstream f(p, std::ios::binary);
        if (!f)
            throw std::runtime_error("cannot write " + p.string());
        return f;
    };
    json summary;
    summary["experiments"] = json::array();
    for (const auto& name : names) {
        std::ofstream csv = open(dir / (name + ".csv"));
        csv << csv_header() << '\n';
        std::size_t total = 0, failed = 0;
        for (const auto& r : res.rows)
            if (r.experiment == name) {
                csv << csv_line(r) << '\n';
                ++total;
                failed += r.error ? 1 : 0;
            }
        std::ofstream dec = open(dir / (name + "_decay.csv"));
        dec << "variant,H,edge,j,lambda\n";
        for (const auto& d : res.decay)
            if (d.experiment == name)
                for (std::size_t j = 0; j < d.values.size(); ++j) {
                    char buf[160];
                    std::snprintf(buf, sizeof buf, ",%.10g,%lld,%zu,%.10e\n", d.H, static_cast<long long>(d.edge),
                                  j + 1, d.values[j]);
                    dec << d.tag << buf;
                }
        std::ofstream fit = open(dir / (name + "_fit.csv"));
        fit << "scenario,H,metric,n,slope_m,r2_m,slope_cbrt_m,r2_cbrt_m,flags\n";
        json jfits = json::array();
        for (const auto& f : fits) {
            if (f.experiment != name)
                continue;
            char buf[256];
            if (f.fit)
                std::snprintf(buf, sizeof buf, "%s,%.10g,%s,%zu,%.6e,%.6f,%.6e,%.6f,", f.scenario.c_str(), f.H,
                              f.metric.c_str(), f.fit->n, f.fit->slope, f.fit->r2, f.fit->slope_cbrt, f.fit->r2_cbrt);
            else
                std::snprintf(buf, sizeof buf, "%s,%.10g,%s,0,,,,,", f.scenario.c_str(), f.H, f.metric.c_str());
            fit << buf << f.flags << (f.fit ? "" : ";error=" + detail::sanitize(f.error)) << '\n';
            json jf{{"H", f.H}, {"metric", f.metric}, {"flags", f.flags}};
            if (f.fit) {
                jf["n"] = f.fit->n;
                jf["slope_m"] = f.fit->slope;
                jf["r2_m"] = f.fit->r2;
                jf["slope_cbrt_m"] = f.fit->slope_cbrt;
                jf["r2_cbrt_m"] = f.fit->r2_cbrt;
            } else {
                jf["error"] = f.error;
            }
            jfits.push_back(std::move(jf));
        }
        summary["experiments"].push_back(
            {{"name", name}, {"rows", total}, {"failed_rows", failed}, {"fits", std::move(jfits)}});
    }
    summary["ok"] = res.ok();
    std::ofstream js = open(dir / "summary.json");
    js << summary.dump(2) << '\n';
}

} // namespace expmsfem
