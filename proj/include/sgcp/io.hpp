#pragma once

// CSV and JSON persistence: event sets, inducing inputs, model states,
// training traces, metric reports, configs. CSV events use a `x1[,x2,...]`
// header, one event per row, LF line endings; doubles are written with
// enough digits to round-trip exactly.

#include <charconv>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>
#include <string>
#include <vector>

#include "sgcp/common.hpp"
#include "sgcp/domain.hpp"
#include "sgcp/events.hpp"
#include "sgcp/metrics.hpp"
#include "sgcp/model.hpp"
#include "sgcp/train.hpp"

namespace sgcp {

using json = nlohmann::json;

namespace io {

inline std::string format_double(double v) {
    char buf[40];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline void write_text(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw data_error("cannot open for writing: " + path);
    out << content;
    if (!out) throw data_error("write failed: " + path);
}

inline std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw data_error("cannot open for reading: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline json domain_to_json(const BoxDomain& dom) {
    json j;
    for (int d = 0; d < dom.dim(); ++d) {
        j["lower"].push_back(dom.lower()[d]);
        j["upper"].push_back(dom.upper()[d]);
    }
    return j;
}

inline BoxDomain domain_from_json(const json& j) {
    if (!j.contains("lower") || !j.contains("upper")) throw config_error("domain needs 'lower' and 'upper' arrays");
    const auto lo = j.at("lower").get<std::vector<double>>();
    const auto hi = j.at("upper").get<std::vector<double>>();
    Vec l(lo.size()), u(hi.size());
    for (size_t i = 0; i < lo.size(); ++i) l[i] = lo[i];
    for (size_t i = 0; i < hi.size(); ++i) u[i] = hi[i];
    return BoxDomain(l, u);
}

inline std::string events_to_csv(const EventSet& events) {
    std::ostringstream out;
    for (int d = 0; d < events.domain.dim(); ++d) out << (d ? "," : "") << "x" << (d + 1);
    out << "\n";
    for (Eigen::Index i = 0; i < events.count(); ++i) {
        for (int d = 0; d < events.domain.dim(); ++d) out << (d ? "," : "") << format_double(events.points(i, d));
        out << "\n";
    }
    return out.str();
}

inline void write_events_csv(const std::string& path, const EventSet& events) {
    write_text(path, events_to_csv(events));
}

inline EventSet read_events_csv(const std::string& path, const BoxDomain& domain,
                                EventSet::Label label = EventSet::Label::observed) {
    std::ifstream in(path);
    if (!in) throw data_error("cannot open events CSV: " + path);
    std::string line;
    if (!std::getline(in, line)) throw data_error("events CSV is empty (missing header): " + path);
    std::vector<std::vector<double>> rows;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<double> row;
        size_t pos = 0;
        while (pos <= line.size()) {
            const size_t comma = line.find(',', pos);
            const std::string cell = line.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
            double v = 0.0;
            const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
            if (res.ec != std::errc() || res.ptr != cell.data() + cell.size())
                throw data_error(path + ": malformed CSV value '" + cell + "' at line " + std::to_string(line_no));
            row.push_back(v);
            if (comma == std::string::npos) break;
            pos = comma + 1;
        }
        if (static_cast<int>(row.size()) != domain.dim())
            throw data_error(path + ": wrong column count at line " + std::to_string(line_no));
        rows.push_back(std::move(row));
    }
    Mat pts(rows.size(), domain.dim());
    for (size_t i = 0; i < rows.size(); ++i)
        for (int d = 0; d < domain.dim(); ++d) pts(i, d) = rows[i][d];
    for (Eigen::Index i = 0; i < pts.rows(); ++i)
        if (!domain.contains(pts.row(i).transpose()))
            throw data_error(path + ": event at data row " + std::to_string(i + 1) + " lies outside the domain");
    return EventSet(std::move(pts), domain, label);
}

inline json matrix_to_json(const Mat& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline Mat matrix_from_json(const json& j) {
    const size_t rows = j.size();
    const size_t cols = rows ? j.at(0).size() : 0;
    Mat m(rows, cols);
    for (size_t i = 0; i < rows; ++i)
        for (size_t c = 0; c < cols; ++c) m(i, c) = j.at(i).at(c).get<double>();
    return m;
}

inline json state_to_json(const ModelState& state) {
    json j;
    j["domain"] = domain_to_json(state.domain);
    j["kernel"] = {{"lengthscale", state.kernel.lengthscale}, {"variance", state.kernel.variance}};
    j["inducing"] = matrix_to_json(state.Z.Z);
    j["prior_lambda"] = {{"alpha", state.prior_lambda.alpha}, {"beta", state.prior_lambda.beta}};
    j["q_u"] = {{"m", std::vector<double>(state.q_u.m.data(), state.q_u.m.data() + state.q_u.m.size())},
                {"L", matrix_to_json(state.q_u.L)}};
    j["q_lambda"] = {{"alpha", state.q_lambda.alpha}, {"beta", state.q_lambda.beta}};
    j["mixture"] = {{"weights", std::vector<double>(state.mixture.weights.data(),
                                                    state.mixture.weights.data() + state.mixture.weights.size())},
                    {"means", matrix_to_json(state.mixture.means)},
                    {"stds", matrix_to_json(state.mixture.stds)}};
    if (state.raw.size() > 0) j["raw"] = std::vector<double>(state.raw.data(), state.raw.data() + state.raw.size());
    return j;
}

inline ModelState state_from_json(const json& j) {
    const BoxDomain dom = domain_from_json(j.at("domain"));
    const KernelParams kernel(j.at("kernel").at("lengthscale").get<double>(),
                              j.at("kernel").at("variance").get<double>());
    const InducingSet Z(matrix_from_json(j.at("inducing")));
    const GammaVar prior(j.at("prior_lambda").at("alpha").get<double>(),
                         j.at("prior_lambda").at("beta").get<double>());
    const auto mvec = j.at("q_u").at("m").get<std::vector<double>>();
    Vec m(mvec.size());
    for (size_t i = 0; i < mvec.size(); ++i) m[i] = mvec[i];
    const GaussianVar q_u(m, matrix_from_json(j.at("q_u").at("L")));
    const GammaVar q_lambda(j.at("q_lambda").at("alpha").get<double>(), j.at("q_lambda").at("beta").get<double>());
    const auto wvec = j.at("mixture").at("weights").get<std::vector<double>>();
    Vec w(wvec.size());
    for (size_t i = 0; i < wvec.size(); ++i) w[i] = wvec[i];
    const TruncMixture mixture(w, matrix_from_json(j.at("mixture").at("means")),
                               matrix_from_json(j.at("mixture").at("stds")), dom);
    Vec raw;
    if (j.contains("raw")) {
        const auto rvec = j.at("raw").get<std::vector<double>>();
        raw.resize(rvec.size());
        for (size_t i = 0; i < rvec.size(); ++i) raw[i] = rvec[i];
    }
    return ModelState{q_u, q_lambda, mixture, kernel, Z, prior, dom, raw};
}

inline std::string trace_to_csv(const TrainTrace& trace) {
    std::ostringstream out;
    out << "iter,elbo,grad_norm,seconds\n";
    for (const auto& r : trace.rows)
        out << r.iter << "," << format_double(r.elbo) << "," << format_double(r.grad_norm) << ","
            << format_double(r.seconds) << "\n";
    return out.str();
}

inline json elbo_breakdown_to_json(const ElboBreakdown& b) {
    json j;
    j["data_term"] = b.data_term;
    j["t1"] = b.t1;
    j["t2_surrogate"] = b.t2_surrogate;
    j["t3"] = b.t3;
    j["t4_surrogate"] = b.t4_surrogate;
    j["t5"] = b.t5;
    j["kl_u"] = b.kl_u;
    j["kl_lambda"] = b.kl_lambda;
    j["const_terms"] = b.const_terms;
    j["total"] = b.total;
    j["mu_u"] = b.mu_u;
    j["mu_w"] = b.mu_w;
    j["entropy_mc"] = b.entropy_mc;
    j["mc"] = {{"mu_u_samples", b.mc.mu_u_samples},       {"mu_x_points", b.mc.mu_x_points},
               {"t3_pairs", b.mc.t3_pairs},               {"t5_samples", b.mc.t5_samples},
               {"data_term_draws", b.mc.data_term_draws}, {"fixed_x_grid", b.mc.fixed_x_grid},
               {"freeze_noise", b.mc.freeze_noise}};
    return j;
}

inline json metric_report_to_json(const MetricReport& rep) {
    json j;
    if (rep.l2) j["l2"] = *rep.l2;
    j["ell_test"] = rep.ell_test;
    j["ell_test_floored"] = rep.ell_test_floored;
    j["nlpl"] = rep.nlpl;
    json in = json::object(), out = json::object();
    for (const auto& [lv, c] : rep.ec_in) in[std::to_string(lv)] = c;
    for (const auto& [lv, c] : rep.ec_out) out[std::to_string(lv)] = c;
    j["ec_in"] = in;
    j["ec_out"] = out;
    j["seeds"] = rep.seeds;
    return j;
}

// Metric columns as a flat table row, one data row per report.
inline std::string metric_report_to_csv(const MetricReport& rep) {
    std::ostringstream header, row;
    header << "l2,ell_test,nlpl";
    row << (rep.l2 ? format_double(*rep.l2) : "") << "," << format_double(rep.ell_test) << ","
        << format_double(rep.nlpl);
    for (const auto& [lv, c] : rep.ec_in) {
        header << ",ec_in_" << lv;
        row << "," << format_double(c);
    }
    for (const auto& [lv, c] : rep.ec_out) {
        header << ",ec_out_" << lv;
        row << "," << format_double(c);
    }
    return header.str() + "\n" + row.str() + "\n";
}

// FNV-1a over the canonical (sorted-key) dump.
inline std::string config_hash(const json& config) {
    const std::string dump = config.dump();
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : dump) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[19];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace io
}  // namespace sgcp
