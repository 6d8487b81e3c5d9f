#ifndef RRL_METRICS_HPP
#define RRL_METRICS_HPP

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "rrl/errors.hpp"
#include "rrl/sac.hpp"

namespace rrl {

// shortest round-trip decimal representation, so rewrites are bit-identical
inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    double back;
    std::sscanf(buf, "%lf", &back);
    for (int prec = 1; prec < 17; ++prec) {
        char shorter[32];
        std::snprintf(shorter, sizeof(shorter), "%.*g", prec, v);
        std::sscanf(shorter, "%lf", &back);
        if (back == v) return shorter;
    }
    return buf;
}

inline std::string metrics_row_json(const MetricsRow& row) {
    std::string s = "{\"step\":" + std::to_string(row.step) +
                    ",\"episode\":" + std::to_string(row.episode) +
                    ",\"tau\":" + format_double(row.tau) +
                    ",\"alpha\":" + format_double(row.alpha);
    if (row.is_eval) {
        s += ",\"eval_success\":" + format_double(row.eval_success) +
             ",\"eval_return\":" + format_double(row.eval_return);
    } else {
        s += ",\"uncertainty_mean\":" + format_double(row.uncertainty_mean) +
             ",\"frac_residual_steps\":" + format_double(row.frac_residual_steps) +
             ",\"critic_loss1\":" + format_double(row.critic_loss1) +
             ",\"critic_loss2\":" + format_double(row.critic_loss2) +
             ",\"actor_loss\":" + format_double(row.actor_loss);
    }
    return s + "}";
}

inline std::vector<MetricsRow> metrics_load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("metrics_load: cannot open " + path);
    std::vector<MetricsRow> rows;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto j = nlohmann::json::parse(line);
        MetricsRow r;
        r.step = j.at("step").get<std::uint64_t>();
        r.episode = j.at("episode").get<std::uint64_t>();
        r.tau = j.at("tau").get<double>();
        r.alpha = j.at("alpha").get<double>();
        if (j.contains("eval_success")) {
            r.is_eval = true;
            r.eval_success = j.at("eval_success").get<double>();
            r.eval_return = j.at("eval_return").get<double>();
        } else {
            r.uncertainty_mean = j.at("uncertainty_mean").get<double>();
            r.frac_residual_steps = j.at("frac_residual_steps").get<double>();
            r.critic_loss1 = j.at("critic_loss1").get<double>();
            r.critic_loss2 = j.at("critic_loss2").get<double>();
            r.actor_loss = j.at("actor_loss").get<double>();
        }
        rows.push_back(r);
    }
    return rows;
}

// --- aggregation ------------------------------------------------------------

struct CurvePoint {
    std::uint64_t step = 0;
    double mean = 0.0;
    double ci_half_width = 0.0;  // 95% t-interval across seeds
};

struct CurveSummary {
    std::string label;
    std::vector<CurvePoint> points;
};

// two-sided 95% t critical values by degrees of freedom
inline double t_critical_95(std::size_t df) {
    static const double table[] = {0,     12.706, 4.303, 3.182, 2.776, 2.571, 2.447,
                                   2.365, 2.306,  2.262, 2.228, 2.201, 2.179, 2.160,
                                   2.145, 2.131,  2.120, 2.110, 2.101, 2.093, 2.086,
                                   2.080, 2.074,  2.069, 2.064, 2.060, 2.056, 2.052,
                                   2.048, 2.045,  2.042};
    if (df == 0) return 0.0;
    if (df <= 30) return table[df];
    return 1.96;
}

inline double median(std::vector<double> v) {
    if (v.empty()) throw ConfigError("median: empty");
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Aligns seed runs on their evaluation steps; when the grids differ the
// curves are resampled to the steps common to all files.
inline CurveSummary aggregate(const std::vector<std::string>& metrics_files,
                              const std::string& label = "", bool* grid_warning = nullptr) {
    if (metrics_files.empty()) throw ConfigError("aggregate: no metrics files");
    std::vector<std::map<std::uint64_t, double>> per_seed;
    for (const auto& f : metrics_files) {
        std::map<std::uint64_t, double> curve;
        for (const auto& r : metrics_load(f))
            if (r.is_eval) curve[r.step] = r.eval_success;
        if (curve.empty()) throw ConfigError("aggregate: no eval rows in " + f);
        per_seed.push_back(std::move(curve));
    }

    std::vector<std::uint64_t> steps;
    for (const auto& [s, _] : per_seed[0]) {
        bool everywhere = true;
        for (const auto& c : per_seed)
            if (!c.count(s)) everywhere = false;
        if (everywhere) steps.push_back(s);
    }
    bool mismatch = false;
    for (const auto& c : per_seed)
        if (c.size() != steps.size()) mismatch = true;
    if (grid_warning) *grid_warning = mismatch;

    CurveSummary sum;
    sum.label = label;
    const std::size_t n = per_seed.size();
    for (std::uint64_t s : steps) {
        CurvePoint p;
        p.step = s;
        for (const auto& c : per_seed) p.mean += c.at(s);
        p.mean /= static_cast<double>(n);
        if (n >= 2) {
            double var = 0.0;
            for (const auto& c : per_seed) {
                const double d = c.at(s) - p.mean;
                var += d * d;
            }
            const double sd = std::sqrt(var / static_cast<double>(n - 1));
            p.ci_half_width = t_critical_95(n - 1) * sd / std::sqrt(static_cast<double>(n));
        }
        sum.points.push_back(p);
    }
    return sum;
}

inline void summary_save_csv(const std::vector<CurveSummary>& curves, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw IoError("summary_save_csv: cannot open " + path);
    os << "step,method,mean,ci\n";
    for (const auto& c : curves)
        for (const auto& p : c.points)
            os << p.step << "," << c.label << "," << format_double(p.mean) << ","
               << format_double(p.ci_half_width) << "\n";
}

// --- SVG learning curves ----------------------------------------------------

// Standalone SVG: success rate vs environment steps, shaded 95% CI bands,
// legend in curve order, optional dashed base-policy reference line. No
// timestamps, so identical inputs give identical files.
inline void emit_svg(const std::vector<CurveSummary>& curves, const std::string& path,
                     const std::string& title = "", double base_reference = -1.0) {
    std::vector<const CurveSummary*> live;
    for (const auto& c : curves)
        if (!c.points.empty()) live.push_back(&c);
    if (live.empty()) throw ConfigError("emit_svg: no curves with data");

    const double W = 640, H = 420;
    const double ml = 60, mr = 160, mt = 40, mb = 50;
    const double pw = W - ml - mr, ph = H - mt - mb;

    std::uint64_t xmax = 1;
    for (const auto* c : live)
        for (const auto& p : c->points) xmax = std::max(xmax, p.step);

    auto X = [&](double step) { return ml + pw * step / static_cast<double>(xmax); };
    auto Y = [&](double v) { return mt + ph * (1.0 - std::clamp(v, 0.0, 1.0)); };

    static const char* palette[] = {"#d62728", "#1f77b4", "#2ca02c", "#9467bd",
                                    "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};

    std::ofstream os(path);
    if (!os) throw IoError("emit_svg: cannot open " + path);
    os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
       << "\" viewBox=\"0 0 " << W << " " << H << "\">\n";
    os << "<rect width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n";
    if (!title.empty())
        os << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">"
           << title << "</text>\n";

    // axes and gridlines
    os << "<line x1=\"" << ml << "\" y1=\"" << mt + ph << "\" x2=\"" << ml + pw << "\" y2=\""
       << mt + ph << "\" stroke=\"black\"/>\n";
    os << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << mt + ph
       << "\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 5; ++i) {
        const double v = i / 5.0;
        os << "<line x1=\"" << ml << "\" y1=\"" << Y(v) << "\" x2=\"" << ml + pw << "\" y2=\""
           << Y(v) << "\" stroke=\"#dddddd\"/>\n";
        os << "<text x=\"" << ml - 8 << "\" y=\"" << Y(v) + 4
           << "\" text-anchor=\"end\" font-size=\"11\">" << format_double(v) << "</text>\n";
    }
    for (int i = 0; i <= 4; ++i) {
        const double s = xmax * i / 4.0;
        os << "<text x=\"" << X(s) << "\" y=\"" << mt + ph + 18
           << "\" text-anchor=\"middle\" font-size=\"11\">" << static_cast<std::uint64_t>(s)
           << "</text>\n";
    }
    os << "<text x=\"" << ml + pw / 2 << "\" y=\"" << H - 12
       << "\" text-anchor=\"middle\" font-size=\"12\">environment steps</text>\n";
    os << "<text x=\"16\" y=\"" << mt + ph / 2
       << "\" font-size=\"12\" transform=\"rotate(-90 16 " << mt + ph / 2
       << ")\" text-anchor=\"middle\">success rate</text>\n";

    if (base_reference >= 0.0)
        os << "<line x1=\"" << ml << "\" y1=\"" << Y(base_reference) << "\" x2=\"" << ml + pw
           << "\" y2=\"" << Y(base_reference)
           << "\" stroke=\"#444444\" stroke-dasharray=\"6,4\"/>\n";

    for (std::size_t ci = 0; ci < live.size(); ++ci) {
        const auto& pts = live[ci]->points;
        const char* color = palette[ci % 8];
        // CI band
        os << "<polygon fill=\"" << color << "\" fill-opacity=\"0.15\" stroke=\"none\" points=\"";
        for (const auto& p : pts) os << X(p.step) << "," << Y(p.mean + p.ci_half_width) << " ";
        for (auto it = pts.rbegin(); it != pts.rend(); ++it)
            os << X(it->step) << "," << Y(it->mean - it->ci_half_width) << " ";
        os << "\"/>\n";
        os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
        for (const auto& p : pts) os << X(p.step) << "," << Y(p.mean) << " ";
        os << "\"/>\n";
        const double ly = mt + 16 + 20 * static_cast<double>(ci);
        os << "<line x1=\"" << ml + pw + 12 << "\" y1=\"" << ly << "\" x2=\"" << ml + pw + 36
           << "\" y2=\"" << ly << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
        os << "<text x=\"" << ml + pw + 42 << "\" y=\"" << ly + 4 << "\" font-size=\"11\">"
           << live[ci]->label << "</text>\n";
    }
    if (base_reference >= 0.0) {
        const double ly = mt + 16 + 20 * static_cast<double>(live.size());
        os << "<line x1=\"" << ml + pw + 12 << "\" y1=\"" << ly << "\" x2=\"" << ml + pw + 36
           << "\" y2=\"" << ly << "\" stroke=\"#444444\" stroke-dasharray=\"6,4\"/>\n";
        os << "<text x=\"" << ml + pw + 42 << "\" y=\"" << ly + 4
           << "\" font-size=\"11\">base policy</text>\n";
    }
    os << "</svg>\n";
}

} // namespace rrl

#endif
