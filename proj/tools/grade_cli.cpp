// grade: simulate / fit / eval / experiment for sparse additive ODE network
// reconstruction. Exit codes: 0 ok, 2 config error, 3 numerical failure,
// 4 uncertified fits.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "grade/grade.hpp"
#include "grade/io.hpp"
#include "grade/version.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace grade;

namespace {

enum class LogLevel { Error = 0, Warn = 1, Info = 2, Debug = 3 };

LogLevel g_log_level = LogLevel::Warn;

void init_log_level() {
    const char* env = std::getenv("GRADE_LOG");
    if (!env) return;
    const std::string v(env);
    if (v == "error") g_log_level = LogLevel::Error;
    else if (v == "warn") g_log_level = LogLevel::Warn;
    else if (v == "info") g_log_level = LogLevel::Info;
    else if (v == "debug") g_log_level = LogLevel::Debug;
}

void log(LogLevel lvl, const std::string& msg) {
    if (lvl <= g_log_level) std::cerr << "grade: " << msg << "\n";
}

void check_keys(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
    for (auto it = obj.begin(); it != obj.end(); ++it)
        if (!allowed.count(it.key()))
            throw ConfigError("unknown key '" + it.key() + "' in " + where);
}

// ---------------------------------------------------------------------------

struct RunConfig {
    std::uint64_t seed = 0;
    int threads = 1;
    fs::path out;

    // system
    std::string preset = "appendixC";
    int pairs = 0;       // oscillators/lv override; 0 = preset default
    double v = 1.0;      // lv interaction
    json explicit_system;  // explicit additive coefficients, optional

    // simulate
    int n = 200;
    double sigma = 1.0;
    int R = 1;
    double euler_step = 1e-3;

    // smoother
    LocalPolyConfig smoother;

    // basis + fit
    GradeConfig fit;
    std::string method = "grade";  // grade | baseline

    // io
    fs::path dataset_path, truth_path, estimate_path, paths_dir, replicates_dir;

    // experiment
    std::string exp_preset = "fig1";
    int reps = 20;
    std::vector<double> v_grid{0.0, 0.25, 0.5, 1.0};
    int mc_reps = 200;

    json resolved;  // echoed into every output directory
};

KernelType parse_kernel(const std::string& s) {
    if (s == "epanechnikov") return KernelType::Epanechnikov;
    if (s == "gaussian-truncated") return KernelType::GaussianTruncated;
    if (s == "uniform") return KernelType::Uniform;
    throw ConfigError("unknown kernel '" + s + "'");
}

BasisSpec parse_basis(const std::string& family, int param) {
    if (family == "monomial") return BasisSpec::monomial(param);
    if (family == "linear") return BasisSpec::linear();
    if (family == "cubic_spline") return BasisSpec::cubic_spline(param);
    if (family == "trigonometric") return BasisSpec::trigonometric(param);
    throw ConfigError("unknown basis family '" + family + "'");
}

RunConfig load_config(const std::string& config_path) {
    RunConfig rc;
    json j = json::object();
    if (!config_path.empty()) {
        if (!fs::exists(config_path)) throw ConfigError("config file not found: " + config_path);
        j = read_json(config_path);
    }
    check_keys(j, {"seed", "threads", "out", "system", "simulate", "smoother", "basis", "fit", "io",
                   "experiment", "schema_version"},
               "config");
    if (j.contains("seed")) rc.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("threads")) rc.threads = j["threads"].get<int>();
    if (j.contains("out")) rc.out = j["out"].get<std::string>();

    if (j.contains("system")) {
        const json& s = j["system"];
        check_keys(s, {"preset", "pairs", "v", "p", "T", "basis_degree", "drift", "coef", "init"}, "system");
        if (s.contains("preset")) rc.preset = s["preset"].get<std::string>();
        if (s.contains("pairs")) rc.pairs = s["pairs"].get<int>();
        if (s.contains("v")) rc.v = s["v"].get<double>();
        if (s.contains("drift") || s.contains("coef")) rc.explicit_system = s;
    }
    if (j.contains("simulate")) {
        const json& s = j["simulate"];
        check_keys(s, {"n", "sigma", "R", "euler_step"}, "simulate");
        if (s.contains("n")) rc.n = s["n"].get<int>();
        if (s.contains("sigma")) rc.sigma = s["sigma"].get<double>();
        if (s.contains("R")) rc.R = s["R"].get<int>();
        if (s.contains("euler_step")) rc.euler_step = s["euler_step"].get<double>();
    }
    if (j.contains("smoother")) {
        const json& s = j["smoother"];
        check_keys(s, {"degree", "kernel", "bandwidth", "h_grid"}, "smoother");
        if (s.contains("degree")) rc.smoother.degree = s["degree"].get<int>();
        if (s.contains("kernel")) rc.smoother.kernel = parse_kernel(s["kernel"].get<std::string>());
        if (s.contains("bandwidth") && !s["bandwidth"].is_null())
            rc.smoother.bandwidth = s["bandwidth"].get<double>();
        if (s.contains("h_grid")) rc.smoother.h_grid = s["h_grid"].get<std::vector<double>>();
    }
    std::string basis_family = "cubic_spline";
    int basis_param = 2;
    if (j.contains("basis")) {
        const json& s = j["basis"];
        check_keys(s, {"family", "param"}, "basis");
        if (s.contains("family")) basis_family = s["family"].get<std::string>();
        if (s.contains("param")) basis_param = s["param"].get<int>();
    }
    rc.fit.basis = parse_basis(basis_family, basis_param);
    rc.fit.smoother = rc.smoother;
    if (j.contains("fit")) {
        const json& s = j["fit"];
        check_keys(s,
                   {"method", "selection", "lambda", "edges", "lambda_grid_size", "lambda_grid_ratio",
                    "ridge", "tol", "max_iter", "max_edges_on_path", "quad_step", "m_candidates"},
                   "fit");
        if (s.contains("method")) rc.method = s["method"].get<std::string>();
        if (s.contains("selection")) {
            const std::string sel = s["selection"].get<std::string>();
            if (sel == "bic") rc.fit.selection = SelectionMode::Bic;
            else if (sel == "lambda") rc.fit.selection = SelectionMode::FixedLambda;
            else if (sel == "edges") rc.fit.selection = SelectionMode::TargetEdges;
            else throw ConfigError("unknown selection '" + sel + "'");
        }
        if (s.contains("lambda")) rc.fit.fixed_lambda = s["lambda"].get<double>();
        if (s.contains("edges")) rc.fit.target_edges = s["edges"].get<int>();
        if (s.contains("lambda_grid_size")) rc.fit.lambda_grid_size = s["lambda_grid_size"].get<int>();
        if (s.contains("lambda_grid_ratio")) rc.fit.lambda_grid_ratio = s["lambda_grid_ratio"].get<double>();
        if (s.contains("ridge")) rc.fit.ridge = s["ridge"].get<double>();
        if (s.contains("tol")) rc.fit.tol = s["tol"].get<double>();
        if (s.contains("max_iter")) rc.fit.max_iter = s["max_iter"].get<int>();
        if (s.contains("max_edges_on_path")) rc.fit.max_edges_on_path = s["max_edges_on_path"].get<int>();
        if (s.contains("quad_step")) rc.fit.quad_step = s["quad_step"].get<double>();
        if (s.contains("m_candidates")) rc.fit.m_candidates = s["m_candidates"].get<std::vector<int>>();
    }
    if (j.contains("io")) {
        const json& s = j["io"];
        check_keys(s, {"dataset", "truth", "estimate", "paths_dir", "replicates_dir"}, "io");
        if (s.contains("dataset")) rc.dataset_path = s["dataset"].get<std::string>();
        if (s.contains("truth")) rc.truth_path = s["truth"].get<std::string>();
        if (s.contains("estimate")) rc.estimate_path = s["estimate"].get<std::string>();
        if (s.contains("paths_dir")) rc.paths_dir = s["paths_dir"].get<std::string>();
        if (s.contains("replicates_dir")) rc.replicates_dir = s["replicates_dir"].get<std::string>();
    }
    if (j.contains("experiment")) {
        const json& s = j["experiment"];
        check_keys(s, {"preset", "reps", "v_grid", "mc_reps"}, "experiment");
        if (s.contains("preset")) rc.exp_preset = s["preset"].get<std::string>();
        if (s.contains("reps")) rc.reps = s["reps"].get<int>();
        if (s.contains("v_grid")) rc.v_grid = s["v_grid"].get<std::vector<double>>();
        if (s.contains("mc_reps")) rc.mc_reps = s["mc_reps"].get<int>();
    }
    return rc;
}

// Resolved config echoed into every output directory. Execution details that
// must not affect artifacts (threads, out path) are omitted so reruns are
// byte-comparable.
json resolve_config(const RunConfig& rc) {
    json j;
    j["schema_version"] = kSchemaVersion;
    j["tool_version"] = kVersion;
    j["seed"] = rc.seed;
    j["system"] = {{"preset", rc.preset}};
    if (rc.pairs > 0) j["system"]["pairs"] = rc.pairs;
    if (rc.preset == "lv") j["system"]["v"] = rc.v;
    if (!rc.explicit_system.is_null()) j["system"]["explicit"] = rc.explicit_system;
    j["simulate"] = {{"n", rc.n}, {"sigma", rc.sigma}, {"R", rc.R}, {"euler_step", rc.euler_step}};
    j["smoother"] = {{"degree", rc.smoother.degree}, {"kernel", kernel_name(rc.smoother.kernel)}};
    if (rc.smoother.bandwidth) j["smoother"]["bandwidth"] = *rc.smoother.bandwidth;
    if (!rc.smoother.h_grid.empty()) j["smoother"]["h_grid"] = rc.smoother.h_grid;
    j["basis"] = {{"family", rc.fit.basis.family_name()}, {"param", rc.fit.basis.param()}};
    j["fit"] = {{"method", rc.method},
                {"selection", rc.fit.selection == SelectionMode::Bic          ? "bic"
                              : rc.fit.selection == SelectionMode::FixedLambda ? "lambda"
                                                                               : "edges"},
                {"lambda_grid_size", rc.fit.lambda_grid_size},
                {"lambda_grid_ratio", rc.fit.lambda_grid_ratio},
                {"ridge", rc.fit.ridge},
                {"tol", rc.fit.tol},
                {"max_iter", rc.fit.max_iter},
                {"quad_step", rc.fit.quad_step}};
    if (rc.fit.selection == SelectionMode::FixedLambda) j["fit"]["lambda"] = rc.fit.fixed_lambda;
    if (rc.fit.selection == SelectionMode::TargetEdges) j["fit"]["edges"] = rc.fit.target_edges;
    if (rc.fit.max_edges_on_path > 0) j["fit"]["max_edges_on_path"] = rc.fit.max_edges_on_path;
    j["experiment"] = {{"preset", rc.exp_preset}, {"reps", rc.reps}, {"mc_reps", rc.mc_reps}};
    j["experiment"]["v_grid"] = rc.v_grid;
    return j;
}

struct BuiltSystem {
    OdeSystem system;
    Eigen::MatrixXd inits;  // R x p
};

BuiltSystem build_system(const RunConfig& rc) {
    BuiltSystem out;
    if (!rc.explicit_system.is_null()) {
        const json& s = rc.explicit_system;
        OdeSystem sys;
        sys.kind = SystemKind::AdditiveBasis;
        sys.p = s.at("p").get<int>();
        sys.horizon = s.value("T", 1.0);
        sys.basis = BasisSpec::monomial(s.value("basis_degree", 3));
        const auto drift = s.at("drift").get<std::vector<double>>();
        if (static_cast<int>(drift.size()) != sys.p) throw ConfigError("drift length != p");
        sys.drift = Eigen::Map<const Eigen::VectorXd>(drift.data(), sys.p);
        sys.coef.assign(sys.p, std::vector<Eigen::VectorXd>(sys.p));
        const json& coef = s.at("coef");
        for (int j = 0; j < sys.p; ++j)
            for (int k = 0; k < sys.p; ++k) {
                const json& cell = coef.at(j).at(k);
                if (cell.is_null()) continue;
                const auto v = cell.get<std::vector<double>>();
                sys.coef[j][k] = Eigen::Map<const Eigen::VectorXd>(v.data(), v.size());
            }
        const auto init = s.at("init").get<std::vector<double>>();
        if (static_cast<int>(init.size()) != sys.p) throw ConfigError("init length != p");
        out.system = sys;
        out.inits.resize(rc.R, sys.p);
        for (int r = 0; r < rc.R; ++r)
            out.inits.row(r) = Eigen::Map<const Eigen::VectorXd>(init.data(), sys.p);
        return out;
    }
    if (rc.preset == "appendixC") {
        Eigen::VectorXd init;
        out.system = make_appendix_c_system(rc.seed, &init);
        out.inits.resize(rc.R, out.system.p);
        for (int r = 0; r < rc.R; ++r) out.inits.row(r) = init;
        return out;
    }
    if (rc.preset == "oscillators") {
        const int pairs = rc.pairs > 0 ? rc.pairs : 4;
        out.system = make_oscillator_system(pairs);
        out.inits.resize(rc.R, out.system.p);
        for (int r = 0; r < rc.R; ++r)
            out.inits.row(r) = oscillator_initials(pairs, derive_stream(rc.seed, 100 + r));
        return out;
    }
    if (rc.preset == "lv") {
        const int pairs = rc.pairs > 0 ? rc.pairs : 5;
        out.system = make_lv_system(rc.v, pairs);
        out.inits = lv_initials(rc.R, out.system.p, rc.seed);
        return out;
    }
    throw ConfigError("unknown system preset '" + rc.preset + "'");
}

void write_metadata(const fs::path& dir, const RunConfig& rc, const TimeSeriesDataset& data,
                    const json& extra = json::object()) {
    json m;
    m["schema_version"] = kSchemaVersion;
    m["tool_version"] = kVersion;
    m["rng"] = data.rng_name;
    m["seed"] = data.seed;
    m["n"] = data.n;
    m["R"] = data.R;
    m["p"] = data.p;
    m["sigma"] = data.sigma;
    m["horizon"] = data.horizon;
    m["euler_step"] = rc.euler_step;
    m["preset"] = rc.preset;
    if (rc.preset == "lv") {
        m["lv_interaction"] = rc.v;
        m["lv_initials"] = "folded |N(0,2I)| (raw draws leave the invariant orthant and blow up)";
    }
    if (rc.preset == "appendixC")
        m["noise_variables"] = "X7..X10 initials and drifts ~ N(0,1) from the seed's system stream";
    for (auto it = extra.begin(); it != extra.end(); ++it) m[it.key()] = it.value();
    write_json(dir / "metadata.json", m);
}

void ensure_out(const RunConfig& rc) {
    if (rc.out.empty()) throw ConfigError("missing output path (--out or config 'out')");
    fs::create_directories(rc.out);
}

// ---------------------------------------------------------------------------

int cmd_simulate(RunConfig rc) {
    ensure_out(rc);
    BuiltSystem bs = build_system(rc);
    TimeSeriesDataset data = generate_multi_experiment(bs.system, bs.inits, rc.n, rc.sigma, rc.seed,
                                                       rc.euler_step);
    write_dataset_csv(rc.out / "dataset.csv", data);
    write_truth_csv(rc.out / "truth_edges.csv", bs.system.adjacency());
    write_metadata(rc.out, rc, data);
    write_json(rc.out / "resolved_config.json", rc.resolved);
    log(LogLevel::Info, "simulated " + std::to_string(data.R) + " experiment(s) of n=" +
                            std::to_string(data.n) + " into " + rc.out.string());
    return 0;
}

NetworkEstimate run_fit(const RunConfig& rc, const TimeSeriesDataset& data) {
    GradeConfig cfg = rc.fit;
    cfg.threads = rc.threads;
    cfg.smoother = rc.smoother;
    if (rc.method == "grade") return grade_fit(data, cfg);
    if (rc.method == "baseline") return derivative_baseline_fit(data, cfg);
    throw ConfigError("unknown method '" + rc.method + "' (grade|baseline)");
}

int cmd_fit(RunConfig rc) {
    ensure_out(rc);
    if (rc.dataset_path.empty()) throw ConfigError("missing io.dataset");
    TimeSeriesDataset data = read_dataset_csv(rc.dataset_path);
    NetworkEstimate est = run_fit(rc, data);
    write_edges_csv(rc.out / "edges.csv", est);
    fs::create_directories(rc.out / "paths");
    for (int node = 0; node < est.p; ++node) {
        char name[32];
        std::snprintf(name, sizeof(name), "node_%02d.json", node + 1);
        write_json(rc.out / "paths" / name, path_to_json(est, node));
    }
    json kkt;
    kkt["schema_version"] = kSchemaVersion;
    kkt["method"] = est.method;
    kkt["all_certified"] = est.all_certified;
    kkt["alpha"] = est.alpha;
    std::vector<double> sel(est.selected_lambda.data(), est.selected_lambda.data() + est.p);
    kkt["selected_lambda"] = sel;
    kkt["smoother_fingerprint"] = est.smoother_fingerprint;
    write_json(rc.out / "kkt_summary.json", kkt);
    write_json(rc.out / "resolved_config.json", rc.resolved);
    if (!est.all_certified) {
        json manifest;
        manifest["schema_version"] = kSchemaVersion;
        manifest["failure"] = "one or more node fits failed KKT certification or did not converge";
        write_json(rc.out / "failure_manifest.json", manifest);
        log(LogLevel::Error, "fit not certified");
        return 4;
    }
    return 0;
}

int cmd_eval(RunConfig rc) {
    ensure_out(rc);
    if (!rc.replicates_dir.empty()) {
        // pointwise average of per-replicate recovery curves
        std::vector<fs::path> files;
        for (const auto& ent : fs::directory_iterator(rc.replicates_dir))
            if (ent.is_directory() && fs::exists(ent.path() / "recovery_curve.csv"))
                files.push_back(ent.path() / "recovery_curve.csv");
        std::sort(files.begin(), files.end());
        if (files.empty()) throw ConfigError("no recovery_curve.csv found under replicates_dir");
        std::vector<double> tot, tru;
        std::size_t m = 0;
        for (const auto& f : files) {
            std::ifstream in(f);
            std::string line;
            std::getline(in, line);
            std::size_t g = 0;
            while (std::getline(in, line)) {
                auto cells = grade::detail::split_csv_line(line);
                if (cells.size() < 3) throw ConfigError("bad curve row in " + f.string());
                if (g >= tot.size()) {
                    tot.push_back(0);
                    tru.push_back(0);
                }
                tot[g] += parse_double(cells[1], "total", g + 2);
                tru[g] += parse_double(cells[2], "true", g + 2);
                ++g;
            }
            m = std::max(m, g);
        }
        auto f = grade::detail::open_out(rc.out / "mean_curve.csv");
        f << "lambda_index,mean_total,mean_true\n";
        for (std::size_t g = 0; g < m; ++g)
            f << g << "," << fmt_double(tot[g] / files.size()) << "," << fmt_double(tru[g] / files.size())
              << "\n";
        write_json(rc.out / "resolved_config.json", rc.resolved);
        return 0;
    }
    if (rc.estimate_path.empty() || rc.truth_path.empty())
        throw ConfigError("eval needs io.estimate and io.truth");
    // infer p from the truth file
    int p = 0;
    {
        std::ifstream f(rc.truth_path);
        if (!f) throw ConfigError("cannot open truth: " + rc.truth_path.string());
        std::string line;
        std::getline(f, line);
        std::size_t ln = 1;
        while (std::getline(f, line)) {
            ++ln;
            if (line.empty()) continue;
            auto cells = grade::detail::split_csv_line(line);
            if (cells.size() < 2) throw ConfigError("line " + std::to_string(ln) + ": bad edge row");
            p = std::max(p, static_cast<int>(parse_double(cells[0], "from", ln)));
            p = std::max(p, static_cast<int>(parse_double(cells[1], "to", ln)));
        }
    }
    auto [truth, truth_strength] = read_edges_csv(rc.truth_path, p);
    auto [est_adj, est_strength] = read_edges_csv(rc.estimate_path, p);
    RecoveryReport rep;
    rep.auc = strength_auc(est_strength, truth);
    for (int k = 0; k < p; ++k)
        for (int j = 0; j < p; ++j) {
            const bool s = est_adj(k, j) > 0.5, t = truth(k, j) > 0.5;
            rep.tp += s && t;
            rep.fp += s && !t;
            rep.fn += !s && t;
            rep.tn += !s && !t;
        }
    RecoveryPoint pt;
    pt.total = rep.tp + rep.fp;
    pt.true_selected = rep.tp;
    rep.curve.push_back(pt);
    write_recovery_csv(rc.out / "recovery_curve.csv", rep);
    write_json(rc.out / "report.json", recovery_to_json(rep));
    write_json(rc.out / "resolved_config.json", rc.resolved);
    return 0;
}

// Shared replicate runner for fig1/fig2.
void run_replicate(const RunConfig& rc, int rep, const fs::path& dir, bool with_baseline,
                   Eigen::MatrixXd& sum_grade, Eigen::VectorXd& cnt_grade, Eigen::MatrixXd& sum_base,
                   Eigen::VectorXd& cnt_base, std::vector<double>& aucs) {
    RunConfig r = rc;
    r.seed = derive_stream(rc.seed, rep);
    fs::create_directories(dir);
    BuiltSystem bs = build_system(r);
    TimeSeriesDataset data =
        generate_multi_experiment(bs.system, bs.inits, r.n, r.sigma, r.seed, r.euler_step);
    write_dataset_csv(dir / "dataset.csv", data);
    write_truth_csv(dir / "truth_edges.csv", bs.system.adjacency());
    write_metadata(dir, r, data);
    GradeConfig cfg = r.fit;
    cfg.threads = r.threads;
    cfg.smoother = r.smoother;
    auto smooths = smooth_dataset(data, cfg.smoother, cfg.threads);
    NetworkEstimate eg = grade_fit(data, cfg, &smooths);
    write_edges_csv(dir / "grade_edges.csv", eg);
    RecoveryReport rg = evaluate_recovery(eg, *data.truth);
    write_recovery_csv(dir / "grade_curve.csv", rg);
    aucs.push_back(rg.auc);
    for (std::size_t g = 0; g < rg.curve.size(); ++g) {
        if (static_cast<int>(g) >= sum_grade.rows()) break;
        sum_grade(g, 0) += rg.curve[g].total;
        sum_grade(g, 1) += rg.curve[g].true_selected;
        cnt_grade(g) += 1.0;
    }
    if (with_baseline) {
        NetworkEstimate eb = derivative_baseline_fit(data, cfg, &smooths);
        write_edges_csv(dir / "baseline_edges.csv", eb);
        RecoveryReport rb = evaluate_recovery(eb, *data.truth);
        write_recovery_csv(dir / "baseline_curve.csv", rb);
        for (std::size_t g = 0; g < rb.curve.size(); ++g) {
            if (static_cast<int>(g) >= sum_base.rows()) break;
            sum_base(g, 0) += rb.curve[g].total;
            sum_base(g, 1) += rb.curve[g].true_selected;
            cnt_base(g) += 1.0;
        }
    }
}

int cmd_experiment(RunConfig rc) {
    ensure_out(rc);
    if (rc.exp_preset == "fig1" || rc.exp_preset == "fig2") {
        const bool fig1 = rc.exp_preset == "fig1";
        if (fig1) {
            rc.preset = "appendixC";
            rc.sigma = 1.0;
            rc.R = 1;
            if (rc.fit.basis.family() != BasisFamily::CubicSplineKnots)
                rc.fit.basis = BasisSpec::cubic_spline(2);
        } else {
            rc.preset = "oscillators";
            rc.sigma = 0.1;
            rc.R = 1;
            rc.fit.basis = BasisSpec::linear();
        }
        rc.fit.lambda_grid_size = std::max(rc.fit.lambda_grid_size, 60);
        rc.fit.lambda_grid_ratio = std::min(rc.fit.lambda_grid_ratio, 1e-5);
        if (rc.fit.max_edges_on_path == 0) rc.fit.max_edges_on_path = 45;
        rc.resolved = resolve_config(rc);
        write_json(rc.out / "resolved_config.json", rc.resolved);
        const int G = rc.fit.lambda_grid_size;
        Eigen::MatrixXd sum_g = Eigen::MatrixXd::Zero(G, 2), sum_b = Eigen::MatrixXd::Zero(G, 2);
        Eigen::VectorXd cnt_g = Eigen::VectorXd::Zero(G), cnt_b = Eigen::VectorXd::Zero(G);
        std::vector<double> aucs;
        for (int rep = 0; rep < rc.reps; ++rep) {
            char name[32];
            std::snprintf(name, sizeof(name), "rep_%03d", rep);
            run_replicate(rc, rep, rc.out / name, fig1, sum_g, cnt_g, sum_b, cnt_b, aucs);
            log(LogLevel::Info, "replicate " + std::to_string(rep) + " done");
        }
        auto f = grade::detail::open_out(rc.out / (rc.exp_preset + "_curves.csv"));
        f << "method,lambda_index,mean_total,mean_true\n";
        for (int g = 0; g < G; ++g)
            if (cnt_g(g) > 0.5)
                f << "grade," << g << "," << fmt_double(sum_g(g, 0) / cnt_g(g)) << ","
                  << fmt_double(sum_g(g, 1) / cnt_g(g)) << "\n";
        if (fig1)
            for (int g = 0; g < G; ++g)
                if (cnt_b(g) > 0.5)
                    f << "baseline," << g << "," << fmt_double(sum_b(g, 0) / cnt_b(g)) << ","
                      << fmt_double(sum_b(g, 1) / cnt_b(g)) << "\n";
        json summary;
        summary["schema_version"] = kSchemaVersion;
        summary["tool_version"] = kVersion;
        summary["reps"] = rc.reps;
        if (!fig1) {
            double mean_auc = 0;
            for (double a : aucs) mean_auc += a;
            summary["mean_auc"] = mean_auc / aucs.size();
            summary["auc"] = aucs;
        }
        write_json(rc.out / (rc.exp_preset + "_summary.json"), summary);
        return 0;
    }
    if (rc.exp_preset == "fig3") {
        rc.resolved = resolve_config(rc);
        write_json(rc.out / "resolved_config.json", rc.resolved);
        GradeConfig cfg = rc.fit;
        cfg.threads = rc.threads;
        cfg.smoother = rc.smoother;
        if (cfg.basis.family() != BasisFamily::CubicSplineKnots) cfg.basis = BasisSpec::cubic_spline(2);
        const int R = rc.R >= 2 ? rc.R : 2;
        auto rows = lv_robustness_experiment(rc.v_grid, R, rc.seed, rc.reps, cfg, rc.n, rc.mc_reps);
        auto f = grade::detail::open_out(rc.out / "fig3.csv");
        f << "v,self_recovered,nonself_recovered,D1,D2\n";
        for (const auto& r : rows)
            f << fmt_double(r.v) << "," << fmt_double(r.mean_self) << "," << fmt_double(r.mean_nonself)
              << "," << fmt_double(r.d1) << "," << fmt_double(r.d2) << "\n";
        return 0;
    }
    throw ConfigError("unknown experiment preset '" + rc.exp_preset + "' (fig1|fig2|fig3)");
}

}  // namespace

int main(int argc, char** argv) {
    init_log_level();
    CLI::App app{"GRADE: network reconstruction from high-dimensional ODE time-course data"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    std::string config_path, out, method, select;
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "JSON config file");
        sub->add_option("--out", out, "output directory");
        sub->add_option("--seed", seed, "RNG seed");
        sub->add_option("--threads", threads, "worker threads");
        sub->add_option("--method", method, "grade|baseline");
        sub->add_option("--select", select, "bic | lambda=<v> | edges=<k>");
    };
    CLI::App* sim = app.add_subcommand("simulate", "simulate a dataset from a preset system");
    CLI::App* fit = app.add_subcommand("fit", "fit a network to a dataset CSV");
    CLI::App* ev = app.add_subcommand("eval", "evaluate an estimate against ground truth");
    CLI::App* exp = app.add_subcommand("experiment", "run a full experiment preset");
    for (CLI::App* s : {sim, fit, ev, exp}) add_common(s);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help/--version
        std::cerr << "grade: " << e.what() << "\n";
        return 2;
    }

    try {
        RunConfig rc = load_config(config_path);
        if (seed) rc.seed = *seed;
        if (threads) rc.threads = *threads;
        if (!out.empty()) rc.out = out;
        if (!method.empty()) rc.method = method;
        if (!select.empty()) {
            if (select == "bic") rc.fit.selection = SelectionMode::Bic;
            else if (select.rfind("lambda=", 0) == 0) {
                rc.fit.selection = SelectionMode::FixedLambda;
                rc.fit.fixed_lambda = std::stod(select.substr(7));
            } else if (select.rfind("edges=", 0) == 0) {
                rc.fit.selection = SelectionMode::TargetEdges;
                rc.fit.target_edges = std::stoi(select.substr(6));
            } else
                throw ConfigError("bad --select: " + select);
        }
        if (rc.threads < 1) throw ConfigError("threads must be >= 1");
        rc.resolved = resolve_config(rc);

        if (*sim) return cmd_simulate(rc);
        if (*fit) return cmd_fit(rc);
        if (*ev) return cmd_eval(rc);
        if (*exp) return cmd_experiment(rc);
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "grade: config error: " << e.what() << "\n";
        return 2;
    } catch (const IoError& e) {
        std::cerr << "grade: io error: " << e.what() << "\n";
        return 2;
    } catch (const Error& e) {
        std::cerr << "grade: numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "grade: error: " << e.what() << "\n";
        return 3;
    }
}
