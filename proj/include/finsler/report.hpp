#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "finsler/classify.hpp"
#include "finsler/metric.hpp"
#include "finsler/verify.hpp"

namespace finsler {

/// Insertion-ordered JSON keeps report key order deterministic.
using Json = nlohmann::ordered_json;

inline Json components_json(const Tensor& t) {
    std::function<Json(int, std::size_t)> build = [&](int depth, std::size_t base) -> Json {
        Json arr = Json::array();
        if (depth == t.rank() - 1) {
            for (int i = 0; i < t.dim(); ++i) arr.push_back(t.data()[base + i]);
            return arr;
        }
        std::size_t stride = 1;
        for (int s = t.rank() - 1; s > depth; --s) stride *= t.dim();
        for (int i = 0; i < t.dim(); ++i) arr.push_back(build(depth + 1, base + i * stride));
        return arr;
    };
    if (t.rank() == 0) return Json(t.data().empty() ? 0.0 : t.data()[0]);
    return build(0, 0);
}

inline Json point_json(const EvalPoint& p) {
    Json j;
    j["x"] = p.x;
    j["y"] = p.y;
    return j;
}

inline Json tensor_dump_json(const std::string& quantity, const EvalPoint& p, const Tensor& t,
                             double raw_norm, double scale_free_norm) {
    Json j;
    j["quantity"] = quantity;
    j["point"] = point_json(p);
    j["rank"] = t.rank();
    j["dim"] = t.dim();
    j["components"] = components_json(t);
    j["norms"] = Json{{"raw", raw_norm}, {"scale_free", scale_free_norm}};
    return j;
}

inline Json classification_json(const ClassificationReport& r, bool per_point = true) {
    Json j;
    j["spec"] = r.spec_name;
    j["samples"] = r.samples;
    j["seed"] = r.seed;
    j["order"] = r.order;
    j["thresholds"] = Json{{"verdict", r.thresholds.verdict}, {"degenerate", r.thresholds.degenerate}};
    Json verdicts;
    Json residuals;
    for (const auto& [name, v, worst] : r.verdicts) {
        verdicts[name] = v;
        residuals[name] = worst;
    }
    j["verdicts"] = verdicts;
    j["worst_residuals"] = residuals;
    j["failures"] = r.failures;
    j["implication_violations"] = r.implication_violations;
    if (per_point) {
        Json pts = Json::array();
        for (const auto& pc : r.points) {
            Json row;
            row["point"] = point_json(pc.p);
            if (pc.failed) {
                row["error"] = pc.error;
                pts.push_back(row);
                continue;
            }
            row["F"] = pc.F;
            row["norms"] = Json{{"C", pc.C},     {"M", pc.M},         {"Mbar", pc.Mbar},
                                {"L", pc.L},     {"J", pc.J},         {"Sigma", pc.Sigma},
                                {"berwald", pc.B}};
            row["scalar_fit"] = Json{{"K", pc.fit.K}, {"residual", pc.fit.residual}};
            Json gp;
            gp["lambda_defined"] = pc.gp.lambda_defined;
            if (pc.gp.lambda_defined) gp["lambda"] = pc.gp.lambda;
            gp["a"] = pc.gp.a;
            gp["residual"] = pc.gp.residual;
            gp["a_dot_y"] = pc.gp.a_y;
            gp["M_norm"] = pc.gp.MF;
            row["gp_fit"] = gp;
            pts.push_back(row);
        }
        j["points"] = pts;
    }
    return j;
}

inline Json identity_json(const IdentityCheck& c, bool details = false) {
    Json j;
    j["id"] = c.id;
    j["spec"] = c.spec_name;
    j["applicability"] = c.applicability;
    j["applied"] = c.applied;
    if (!c.applied) {
        j["skip_reason"] = c.skip_reason;
        return j;
    }
    j["tolerance"] = c.tolerance;
    j["points"] = c.points;
    j["worst_residual"] = c.worst_residual;
    j["lhs_scale"] = c.max_lhs_scale;
    j["rhs_scale"] = c.max_rhs_scale;
    j["pass"] = c.pass;
    if (!c.branch.empty()) j["branch"] = c.branch;
    if (details) {
        Json rows = Json::array();
        for (const auto& d : c.details)
            rows.push_back(Json{{"index", d.index},
                                {"residual", d.residual},
                                {"lhs_scale", d.lhs_scale},
                                {"rhs_scale", d.rhs_scale}});
        j["details"] = rows;
    }
    return j;
}

inline Json verification_json(const std::vector<IdentityCheck>& checks, bool details = false) {
    Json arr = Json::array();
    for (const auto& c : checks) arr.push_back(identity_json(c, details));
    return arr;
}

inline Json theorem1_json(const Theorem1Report& r) {
    Json j;
    j["spec"] = r.spec_name;
    j["evaluable"] = r.evaluable;
    if (!r.note.empty()) j["note"] = r.note;
    j["nondegenerate_points"] = r.nondegenerate_points;
    Json pts = Json::array();
    for (const auto& row : r.points) {
        Json p;
        p["point"] = point_json(row.p);
        p["lambda_defined"] = row.lambda_defined;
        if (row.lambda_defined) {
            p["lambda"] = row.lambda;
            p["lambda_prime"] = row.lambda_prime;
            p["v"] = *row.v;
        }
        p["K"] = row.K;
        p["M_norm"] = row.MF;
        p["product"] = row.product;
        p["branch"] = row.branch;
        pts.push_back(p);
    }
    j["points"] = pts;
    return j;
}

// ---------------------------------------------------------------------------
// Markdown / CSV renderings
// ---------------------------------------------------------------------------

inline std::string fmt_sci(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3e", v);
    return buf;
}

inline std::string classification_markdown(const ClassificationReport& r) {
    std::string out;
    out += "# Classification: " + r.spec_name + "\n\n";
    out += "samples: " + std::to_string(r.samples) + ", seed: " + std::to_string(r.seed) +
           ", order: " + std::to_string(r.order) + ", threshold: " + fmt_sci(r.thresholds.verdict) +
           ", failures: " + std::to_string(r.failures) + "\n\n";
    out += "| class | verdict | worst residual |\n|---|---|---|\n";
    for (const auto& [name, v, worst] : r.verdicts)
        out += "| " + std::string(name) + " | " + (v ? "yes" : "no") + " | " + fmt_sci(worst) + " |\n";
    if (!r.implication_violations.empty()) {
        out += "\n**internal errors (implication chain)**:\n";
        for (const auto& s : r.implication_violations) out += "- " + s + "\n";
    }
    return out;
}

inline std::string verification_markdown(const std::vector<IdentityCheck>& checks) {
    std::string out;
    out += "| identity | applicability | status | worst residual | tolerance | lhs scale | rhs scale | notes |\n";
    out += "|---|---|---|---|---|---|---|---|\n";
    for (const auto& c : checks) {
        out += "| " + c.id + " | " + c.applicability + " | ";
        if (!c.applied) {
            out += "skipped | - | - | - | - | " + c.skip_reason + " |\n";
            continue;
        }
        out += std::string(c.pass ? "pass" : "FAIL") + " | " + fmt_sci(c.worst_residual) + " | " +
               fmt_sci(c.tolerance) + " | " + fmt_sci(c.max_lhs_scale) + " | " + fmt_sci(c.max_rhs_scale) +
               " | " + c.branch + " |\n";
    }
    return out;
}

inline std::string classification_csv(const ClassificationReport& r) {
    std::string out = "class,verdict,worst_residual\n";
    for (const auto& [name, v, worst] : r.verdicts)
        out += name + "," + (v ? "true" : "false") + "," + fmt_double(worst) + "\n";
    return out;
}

inline std::string verification_csv(const std::vector<IdentityCheck>& checks) {
    std::string out = "identity,applied,pass,worst_residual,tolerance,lhs_scale,rhs_scale,skip_reason\n";
    for (const auto& c : checks) {
        out += c.id + "," + (c.applied ? "true" : "false") + "," + (c.pass ? "true" : "false") + ",";
        if (c.applied)
            out += fmt_double(c.worst_residual) + "," + fmt_double(c.tolerance) + "," +
                   fmt_double(c.max_lhs_scale) + "," + fmt_double(c.max_rhs_scale) + ",";
        else
            out += ",,,,";
        std::string reason = c.skip_reason;
        for (char& ch : reason)
            if (ch == ',') ch = ';';
        out += reason + "\n";
    }
    return out;
}

inline std::string geodesic_csv(const GeodesicPath& path) {
    std::string out = "t";
    if (!path.samples.empty()) {
        for (std::size_t i = 0; i < path.samples[0].x.size(); ++i) out += ",x" + std::to_string(i + 1);
        for (std::size_t i = 0; i < path.samples[0].y.size(); ++i) out += ",y" + std::to_string(i + 1);
    }
    out += ",F\n";
    for (const auto& s : path.samples) {
        out += fmt_double(s.t);
        for (double v : s.x) out += "," + fmt_double(v);
        for (double v : s.y) out += "," + fmt_double(v);
        out += "," + fmt_double(s.F) + "\n";
    }
    return out;
}

}  // namespace finsler
