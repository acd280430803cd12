// Command-line front end: load metric definitions, run the tensor pipeline,
// classify metrics and verify identities, emitting deterministic reports.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "finsler/calculus.hpp"
#include "finsler/classify.hpp"
#include "finsler/fd_oracle.hpp"
#include "finsler/metric.hpp"
#include "finsler/report.hpp"
#include "finsler/verify.hpp"

namespace fs = std::filesystem;
using namespace finsler;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitCheckFailed = 1;
constexpr int kExitConfig = 2;
constexpr int kExitEval = 3;

struct CommonOpts {
    std::string spec_path;
    int samples = 20;
    std::uint64_t seed = 1;
    int order = 0;  // 0 = choose automatically
    double tol = 1e-7;
    double tol_deg = 1e-6;
    std::string format = "markdown";
    std::string out_dir;
};

void add_common(CLI::App* cmd, CommonOpts& o, bool with_format = true) {
    cmd->add_option("spec", o.spec_path, "metric definition file")->required();
    cmd->add_option("--samples", o.samples, "number of sample points")->check(CLI::PositiveNumber);
    cmd->add_option("--seed", o.seed, "RNG seed");
    cmd->add_option("--order", o.order, "jet truncation order (default: chosen per command)");
    cmd->add_option("--tol", o.tol, "verdict threshold")->check(CLI::PositiveNumber);
    cmd->add_option("--tol-deg", o.tol_deg, "degeneracy threshold for the lambda fit")
        ->check(CLI::PositiveNumber);
    if (with_format)
        cmd->add_option("--format", o.format, "output format")
            ->check(CLI::IsMember({"json", "csv", "markdown"}));
    cmd->add_option("--out", o.out_dir, "directory for report files (with a manifest)");
}

std::vector<double> parse_numbers(const std::string& text, int expected, const char* what) {
    std::vector<double> out;
    std::string cur;
    auto flush = [&]() {
        if (cur.empty()) return;
        try {
            out.push_back(std::stod(cur));
        } catch (...) {
            throw ConfigError(std::string("cannot parse ") + what + ": bad number '" + cur + "'");
        }
        cur.clear();
    };
    for (char c : text) {
        if (c == ',')
            flush();
        else if (!std::isspace(static_cast<unsigned char>(c)))
            cur += c;
    }
    flush();
    if (expected > 0 && static_cast<int>(out.size()) != expected)
        throw ConfigError(std::string(what) + " needs " + std::to_string(expected) + " components, got " +
                          std::to_string(out.size()));
    return out;
}

/// Point syntax on the command line: "x1,..,xn;y1,..,yn".
EvalPoint parse_point(const std::string& text, int dim) {
    auto semi = text.find(';');
    if (semi == std::string::npos) throw ConfigError("point must be written as \"x1,..,xn;y1,..,yn\"");
    EvalPoint p;
    p.x = parse_numbers(text.substr(0, semi), dim, "x");
    p.y = parse_numbers(text.substr(semi + 1), dim, "y");
    return p;
}

struct OutputSink {
    std::string out_dir;
    std::string command;
    Json manifest_files = Json::array();

    void emit(const std::string& filename, const std::string& content) {
        if (out_dir.empty()) {
            std::fwrite(content.data(), 1, content.size(), stdout);
            if (!content.empty() && content.back() != '\n') std::fputc('\n', stdout);
            return;
        }
        fs::create_directories(out_dir);
        std::ofstream f(fs::path(out_dir) / filename, std::ios::binary);
        f << content;
        manifest_files.push_back(filename);
    }

    void finish(const Json& options) {
        if (out_dir.empty()) return;
        Json manifest;
        manifest["command"] = command;
        manifest["options"] = options;
        manifest["files"] = manifest_files;
        std::ofstream f(fs::path(out_dir) / "manifest.json", std::ios::binary);
        f << manifest.dump(2) << "\n";
    }
};

Json options_json(const CommonOpts& o, int effective_order) {
    Json j;
    j["spec"] = o.spec_path;
    j["samples"] = o.samples;
    j["seed"] = o.seed;
    j["order"] = effective_order;
    j["tol"] = o.tol;
    j["tol_deg"] = o.tol_deg;
    j["format"] = o.format;
    return j;
}

/// FINSLER_THREADS sets the default worker count for per-point evaluation.
int threads_from_env() {
    const char* v = std::getenv("FINSLER_THREADS");
    if (!v || !*v) return 1;
    try {
        int t = std::stoi(v);
        if (t < 1) throw std::out_of_range("");
        return t;
    } catch (...) {
        throw ConfigError("FINSLER_THREADS must be a positive integer, got '" + std::string(v) + "'");
    }
}

int min_order_for(const std::string& quantity) {
    static const std::map<std::string, int> need = {
        {"g", 2}, {"h", 2},       {"C", 3}, {"I", 3},     {"G", 2},    {"N", 3},   {"berwald", 4},
        {"L", 4}, {"J", 4},       {"M", 3}, {"Mbar", 4},  {"sigma", 6}, {"riemann", 4}, {"flag", 4},
    };
    auto it = need.find(quantity);
    if (it == need.end()) throw ConfigError("unknown tensor quantity '" + quantity + "'");
    return it->second;
}

int resolve_order(const CommonOpts& o, int automatic) {
    if (o.order == 0) return automatic;
    if (o.order < automatic)
        throw ConfigError("jet order " + std::to_string(o.order) + " is below the minimum " +
                          std::to_string(automatic) + " required here");
    if (o.order > JetSpace::kMaxOrder)
        throw ConfigError("jet order exceeds the configured maximum " +
                          std::to_string(JetSpace::kMaxOrder));
    return o.order;
}

int cmd_inspect(const CommonOpts& o) {
    MetricSpec spec = load_metric_file(o.spec_path);
    int order = resolve_order(o, 2);
    SampleSet set = sample(spec, o.samples, o.seed);

    HomogeneityCheck hom;
    if (spec.kind == MetricKind::Expression) {
        hom = validate_homogeneity(*spec.expression.F, spec.dim, spec.domain.axes, o.samples, o.seed);
    } else {
        // assembled kinds are 1-homogeneous by construction; still verify numerically
        hom.samples = static_cast<int>(set.points.size());
        Rng rng(o.seed ^ 0xabcdef);
        for (const auto& p : set.points) {
            double t = rng.uniform(0.1, 10.0);
            std::vector<double> ty = p.y;
            for (double& v : ty) v *= t;
            double err = std::abs(F_value(spec, p.x, ty) - t * F_value(spec, p.x, p.y));
            double rel = err / (1.0 + t * F_value(spec, p.x, p.y));
            hom.worst = std::max(hom.worst, rel);
            if (rel > 1e-9) hom.pass = false;
        }
    }

    double min_eig = 1e300, max_eig = 0;
    for (const auto& p : set.points) {
        auto c = check_strong_convexity(spec, p);
        min_eig = std::min(min_eig, c.min_eigenvalue);
        max_eig = std::max(max_eig, c.max_eigenvalue);
    }

    Json j;
    j["name"] = spec.name;
    j["dim"] = spec.dim;
    j["kind"] = kind_name(spec.kind);
    Json dom = Json::array();
    for (const auto& a : spec.domain.axes) dom.push_back(Json::array({a[0], a[1]}));
    j["domain"] = dom;
    if (!spec.notes.empty()) j["notes"] = spec.notes;
    j["samples"] = static_cast<int>(set.points.size());
    j["rejections"] = set.rejections;
    j["homogeneity"] = Json{{"pass", hom.pass}, {"worst", hom.worst}, {"eval_failures", hom.eval_failures}};
    j["strong_convexity"] =
        Json{{"pass", min_eig > 0}, {"min_eigenvalue", min_eig}, {"max_eigenvalue", max_eig}};

    OutputSink sink{o.out_dir, "inspect"};
    if (o.format == "json") {
        sink.emit("inspect.json", j.dump(2) + "\n");
    } else {
        std::string md = "# Metric: " + spec.name + "\n\n";
        md += "- dim: " + std::to_string(spec.dim) + "\n- kind: " + std::string(kind_name(spec.kind)) + "\n";
        md += "- samples: " + std::to_string(set.points.size()) +
              " (rejections: " + std::to_string(set.rejections) + ")\n";
        md += "- homogeneity: " + std::string(hom.pass ? "pass" : "FAIL") +
              " (worst " + fmt_sci(hom.worst) + ")\n";
        md += "- strong convexity: " + std::string(min_eig > 0 ? "pass" : "FAIL") + " (min eigenvalue " +
              fmt_sci(min_eig) + ", max " + fmt_sci(max_eig) + ")\n";
        sink.emit(o.format == "csv" ? "inspect.csv" : "inspect.md", md);
    }
    sink.finish(options_json(o, order));
    return (hom.pass && min_eig > 0) ? kExitOk : kExitCheckFailed;
}

int cmd_tensor(const CommonOpts& o, const std::string& quantity, const std::string& at,
               const std::string& flag_u) {
    MetricSpec spec = load_metric_file(o.spec_path);
    int order = resolve_order(o, min_order_for(quantity));

    std::vector<EvalPoint> points;
    if (!at.empty())
        points.push_back(parse_point(at, spec.dim));
    else
        points = sample(spec, o.samples, o.seed).points;

    Rng urng(o.seed ^ 0xf1a6);
    Json arr = Json::array();
    for (const auto& p : points) {
        PointGeometry geo(spec, p, order);
        double F = geo.F();
        Tensor t;
        int fpow = 0;
        bool mixed_first = false;
        if (quantity == "g") {
            t = value_of(geo.g_jets());
            fpow = 0;
        } else if (quantity == "h") {
            t = value_of(geo.h_jets());
        } else if (quantity == "C") {
            t = value_of(geo.cartan_jets());
            fpow = 1;
        } else if (quantity == "I") {
            t = value_of(geo.mean_cartan_jets());
            fpow = 1;
        } else if (quantity == "G") {
            t = value_of(geo.spray_jets());
            mixed_first = true;
            fpow = -2;
        } else if (quantity == "N") {
            t = value_of(geo.nonlinear_connection_jets());
            mixed_first = true;
            fpow = -1;
        } else if (quantity == "berwald") {
            t = value_of(geo.berwald_connection_jets());
            mixed_first = true;
        } else if (quantity == "L") {
            t = value_of(geo.landsberg_jets());
            fpow = 2;
        } else if (quantity == "J") {
            t = value_of(geo.mean_landsberg_jets());
            fpow = 2;
        } else if (quantity == "M") {
            t = value_of(geo.matsumoto_jets());
            fpow = 1;
        } else if (quantity == "Mbar") {
            t = value_of(geo.pbar_jets());
            fpow = 2;
        } else if (quantity == "sigma") {
            t = value_of(geo.stretch_jets());
            fpow = 3;
        } else if (quantity == "riemann") {
            t = value_of(geo.riemann_jets());
            mixed_first = true;
            fpow = -2;
        } else if (quantity == "flag") {
            std::vector<double> u(spec.dim);
            if (!flag_u.empty()) {
                u = parse_numbers(flag_u, spec.dim, "u");
            } else {
                for (double& v : u) v = urng.normal();
            }
            double k = geo.flag_curvature(u);
            Tensor scalar(0, spec.dim);
            arr.push_back(tensor_dump_json("flag", p, scalar, k, k));
            arr.back()["components"] = k;
            arr.back()["u"] = u;
            continue;
        }
        Tensor lowered = mixed_first ? geo.lower_first(t) : t;
        double raw = geo.norm_lower(lowered);
        arr.push_back(tensor_dump_json(quantity, p, t, raw, raw * std::pow(F, fpow)));
    }
    OutputSink sink{o.out_dir, "tensor"};
    sink.emit("tensor_" + quantity + ".json", arr.dump(2) + "\n");
    Json opts = options_json(o, order);
    opts["quantity"] = quantity;
    sink.finish(opts);
    return kExitOk;
}

int cmd_classify(const CommonOpts& o) {
    MetricSpec spec = load_metric_file(o.spec_path);
    int order = resolve_order(o, 6);
    SampleSet set = sample(spec, o.samples, o.seed);
    Thresholds thr{o.tol, o.tol_deg};
    ClassificationReport rep = classify(spec, set, thr, order, threads_from_env());
    Theorem1Report t1 = theorem1_condition(spec, set, thr, order);

    OutputSink sink{o.out_dir, "classify"};
    if (o.format == "json") {
        Json j = classification_json(rep);
        j["theorem1_condition"] = theorem1_json(t1);
        sink.emit("classification.json", j.dump(2) + "\n");
    } else if (o.format == "csv") {
        sink.emit("classification.csv", classification_csv(rep));
    } else {
        std::string md = classification_markdown(rep);
        md += "\ntheorem-1 condition: " +
              std::string(t1.evaluable ? "evaluable" : "not evaluable") +
              (t1.note.empty() ? "" : " (" + t1.note + ")") + "\n";
        sink.emit("classification.md", md);
    }
    sink.finish(options_json(o, order));
    return rep.implication_violations.empty() ? kExitOk : kExitCheckFailed;
}

int cmd_verify(const CommonOpts& o, const std::vector<std::string>& identities) {
    MetricSpec spec = load_metric_file(o.spec_path);
    int order = resolve_order(o, 6);
    for (const auto& id : identities) {
        bool known = false;
        for (const auto& info : identity_catalog()) known = known || (id == info.id);
        if (!known) throw ConfigError("unknown identity '" + id + "'");
    }
    SampleSet set = sample(spec, o.samples, o.seed);
    VerifyOptions vopts;
    vopts.order = order;
    vopts.thresholds = Thresholds{o.tol, o.tol_deg};
    auto checks = run_identities(spec, set, vopts, identities);

    OutputSink sink{o.out_dir, "verify"};
    if (o.format == "json")
        sink.emit("verification.json", verification_json(checks, true).dump(2) + "\n");
    else if (o.format == "csv")
        sink.emit("verification.csv", verification_csv(checks));
    else
        sink.emit("verification.md", verification_markdown(checks));
    Json opts = options_json(o, order);
    opts["identities"] = identities;
    sink.finish(opts);

    for (const auto& c : checks)
        if (c.applied && !c.pass) return kExitCheckFailed;
    return kExitOk;
}

int cmd_geodesic(const CommonOpts& o, const std::string& x0s, const std::string& y0s, int steps,
                 double dt) {
    MetricSpec spec = load_metric_file(o.spec_path);
    auto x0 = parse_numbers(x0s, spec.dim, "x0");
    auto y0 = parse_numbers(y0s, spec.dim, "y0");
    GeodesicPath path = trace_geodesic(spec, x0, y0, steps, dt);
    OutputSink sink{o.out_dir, "geodesic"};
    std::string csv = geodesic_csv(path);
    if (path.exited_domain) csv += "# truncated: path left the domain box\n";
    sink.emit("geodesic.csv", csv);
    Json opts = options_json(o, 2);
    opts["x0"] = x0;
    opts["y0"] = y0;
    opts["steps"] = steps;
    opts["dt"] = dt;
    sink.finish(opts);
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"finsler: a numerical laboratory for Finsler metrics"};
    app.require_subcommand(1);

    CommonOpts inspect_o, tensor_o, classify_o, verify_o, geo_o;
    std::string tensor_quantity, tensor_at, tensor_u;
    std::vector<std::string> verify_ids;
    std::string geo_x0, geo_y0;
    int geo_steps = 100;
    double geo_dt = 0.01;

    CLI::App* c_inspect = app.add_subcommand("inspect", "spec summary and regularity checks");
    add_common(c_inspect, inspect_o);

    CLI::App* c_tensor = app.add_subcommand("tensor", "dump a tensor quantity at points");
    c_tensor->add_option("quantity", tensor_quantity,
                         "one of g,h,C,I,G,N,berwald,L,J,M,Mbar,sigma,riemann,flag")
        ->required();
    add_common(c_tensor, tensor_o, false);
    c_tensor->add_option("--at", tensor_at, "explicit point \"x1,..;y1,..\" (default: sampled)");
    c_tensor->add_option("--u", tensor_u, "flag edge for quantity=flag");

    CLI::App* c_classify = app.add_subcommand("classify", "metric class membership over samples");
    add_common(c_classify, classify_o);

    CLI::App* c_verify = app.add_subcommand("verify", "numerical identity checks");
    add_common(c_verify, verify_o);
    c_verify->add_option("--identity", verify_ids, "restrict to these identity ids (repeatable)");

    CLI::App* c_geodesic = app.add_subcommand("geodesic", "trace a geodesic, CSV output");
    add_common(c_geodesic, geo_o, false);
    c_geodesic->add_option("--x0", geo_x0, "start position")->required();
    c_geodesic->add_option("--y0", geo_y0, "start velocity")->required();
    c_geodesic->add_option("--steps", geo_steps, "number of RK4 steps");
    c_geodesic->add_option("--dt", geo_dt, "step size");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (c_inspect->parsed()) return cmd_inspect(inspect_o);
        if (c_tensor->parsed()) return cmd_tensor(tensor_o, tensor_quantity, tensor_at, tensor_u);
        if (c_classify->parsed()) return cmd_classify(classify_o);
        if (c_verify->parsed()) return cmd_verify(verify_o, verify_ids);
        if (c_geodesic->parsed()) return cmd_geodesic(geo_o, geo_x0, geo_y0, geo_steps, geo_dt);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const EvalError& e) {
        std::cerr << "evaluation error: " << e.what() << "\n";
        return kExitEval;
    } catch (const Error& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return kExitEval;
    }
    return kExitConfig;
}
