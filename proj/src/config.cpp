#include "mvc/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

namespace mvc {

using nlohmann::json;

namespace {

Vector vector_from_json(const json& j) {
    if (j.is_number()) return Vector::Constant(1, j.get<double>());
    const auto v = j.get<std::vector<double>>();
    return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

InitialLaw initial_law_from_json(const json& j) {
    const std::string kind = j.value("kind", "point");
    InitialLaw law;
    if (j.contains("center")) law.center = vector_from_json(j.at("center"));
    if (kind == "point") {
        law.kind = InitialLaw::Kind::point;
    } else if (kind == "gaussian") {
        law.kind = InitialLaw::Kind::gaussian;
        law.stddev = j.value("stddev", 1.0);
    } else if (kind == "cloud") {
        law.kind = InitialLaw::Kind::cloud;
        std::ifstream in(j.at("file").get<std::string>());
        if (!in) throw Error("cannot open initial cloud " + j.at("file").get<std::string>());
        law.cloud = read_point_cloud_csv(in);
    } else {
        throw Error("unknown initial law kind: " + kind);
    }
    return law;
}

json initial_law_to_json(const InitialLaw& law) {
    json j;
    switch (law.kind) {
    case InitialLaw::Kind::point: j["kind"] = "point"; break;
    case InitialLaw::Kind::gaussian:
        j["kind"] = "gaussian";
        j["stddev"] = law.stddev;
        break;
    case InitialLaw::Kind::cloud: j["kind"] = "cloud"; break;
    }
    if (law.center.size() > 0) j["center"] = std::vector<double>(law.center.data(), law.center.data() + law.center.size());
    return j;
}

} // namespace

void apply_assumption_overrides(AssumptionBundle& b, const json& o) {
    if (o.is_null()) return;
    if (!o.is_object()) throw Error("assumption overrides must be an object");
    for (const auto& [key, value] : o.items()) {
        if (key == "L1") b.L1 = value.get<double>();
        else if (key == "L2") b.L2 = value.get<double>();
        else if (key == "L3") b.L3 = value.get<double>();
        else if (key == "M") b.M = value.get<double>();
        else if (key == "Lambda") b.Lambda = value.get<double>();
        else if (key == "sigma_trace_sup") b.sigma_trace_sup = value.get<double>();
        else if (key == "sigma_at_zero_norm") b.sigma_at_zero_norm = value.get<double>();
        else if (key == "A") b.A_override = value.get<double>();
        else if (key == "kappa_max") {
            const KappaProfile old = b.kappa;
            b.kappa = KappaProfile([old](double r) { return old(r); }, value.get<double>(), old.tail());
        } else if (key == "dissipativity") {
            if (value.is_null()) {
                b.dissipativity.reset();
                continue;
            }
            Dissipativity d = b.dissipativity.value_or(Dissipativity{});
            d.lambda = value.value("lambda", d.lambda);
            d.L4 = value.value("L4", d.L4);
            d.radius = value.value("R", d.radius);
            b.dissipativity = d;
        } else if (key == "kappa_tail") {
            if (value.is_null()) {
                b.kappa_tail.reset();
                continue;
            }
            KappaTail t = b.kappa_tail.value_or(KappaTail{});
            t.R0 = value.value("R0", t.R0);
            t.K = value.value("K", t.K);
            b.kappa_tail = t;
        } else {
            throw Error("unknown assumption override: " + key);
        }
    }
}

ModelParams model_params_from_json(const json& params) {
    ModelParams p;
    if (params.is_null()) return p;
    for (const auto& [key, value] : params.items()) {
        if (key == "sigma") {
            p.sigma = value.is_number() ? std::vector<double>{value.get<double>()} : value.get<std::vector<double>>();
        } else {
            p.scalars[key] = value.get<double>();
        }
    }
    return p;
}

BuiltinModel model_from_json(const json& root) {
    const json& m = root.at("model");
    BuiltinModel bm = builtin_model(m.at("name").get<std::string>(), model_params_from_json(m.value("params", json::object())));
    apply_assumption_overrides(bm.assumptions, root.value("assumptions", json::object()));
    return bm;
}

ExperimentConfig experiment_config_from_json(const json& root) {
    ExperimentConfig c;
    if (root.contains("model")) {
        c.model_name = root["model"].at("name").get<std::string>();
        c.model_params = model_params_from_json(root["model"].value("params", json::object()));
    }
    c.assumption_overrides = root.value("assumptions", json::object());
    c.pipeline = root.value("pipeline", 1);
    const json e = root.value("experiment", json::object());
    c.n = e.value("n", c.n);
    c.h = e.value("h", c.h);
    c.T = e.value("T", c.T);
    c.stride = e.value("stride", c.stride);
    c.seed = e.value("seed", c.seed);
    c.replicates = e.value("replicates", c.replicates);
    c.workers = e.value("workers", c.workers);
    if (e.contains("mu0")) c.mu0 = initial_law_from_json(e["mu0"]);
    if (e.contains("nu0")) c.nu0 = initial_law_from_json(e["nu0"]);
    if (e.contains("mode")) c.mode = coupling_mode_from_string(e["mode"].get<std::string>());
    c.delta = e.value("delta", c.delta);
    c.metric_every = e.value("metric_every", c.metric_every);
    c.metric_subsamples = e.value("metric_subsamples", c.metric_subsamples);
    c.metric_subsample_size = e.value("metric_subsample_size", c.metric_subsample_size);
    c.n_grid = e.value("n_grid", c.n_grid);
    c.n_ref_factor = e.value("n_ref_factor", c.n_ref_factor);
    c.cauchy_lags = e.value("cauchy_lags", c.cauchy_lags);
    c.fit_t_min = e.value("fit_t_min", c.fit_t_min);
    return c;
}

json to_json(const ExperimentConfig& c) {
    json params = json::object();
    for (const auto& [k, v] : c.model_params.scalars) params[k] = v;
    if (!c.model_params.sigma.empty()) params["sigma"] = c.model_params.sigma;
    return {{"model", {{"name", c.model_name}, {"params", params}}},
            {"assumptions", c.assumption_overrides},
            {"pipeline", c.pipeline},
            {"experiment",
             {{"n", c.n},
              {"h", c.h},
              {"T", c.T},
              {"stride", c.stride},
              {"seed", c.seed},
              {"replicates", c.replicates},
              {"workers", c.workers},
              {"mu0", initial_law_to_json(c.mu0)},
              {"nu0", initial_law_to_json(c.nu0)},
              {"mode", to_string(c.mode)},
              {"delta", c.delta},
              {"metric_every", c.metric_every},
              {"metric_subsamples", c.metric_subsamples},
              {"metric_subsample_size", c.metric_subsample_size},
              {"n_grid", c.n_grid},
              {"n_ref_factor", c.n_ref_factor},
              {"cauchy_lags", c.cauchy_lags},
              {"fit_t_min", c.fit_t_min}}}};
}

json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path);
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw Error(path + ": " + e.what());
    }
}

PointCloud read_point_cloud_csv(std::istream& in) {
    std::vector<std::vector<double>> rows;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        bool numeric = true;
        while (std::getline(ss, cell, ',')) {
            char* end = nullptr;
            const double v = std::strtod(cell.c_str(), &end);
            if (end == cell.c_str()) {
                numeric = false;
                break;
            }
            row.push_back(v);
        }
        if (!numeric) {
            if (first) {
                first = false;
                continue;
            }
            throw Error("non-numeric CSV row: " + line);
        }
        first = false;
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw Error("empty point cloud");
    return PointCloud::from_rows(rows);
}

} // namespace mvc
