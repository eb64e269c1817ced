#include "hazeprop/model_io.hpp"

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "hazeprop/image_io.hpp"

namespace hazeprop {

namespace {

constexpr const char* kModelMagic = "hazeprop-model";
constexpr const char* kGmmMagic = "hazeprop-gmm";

// %.17g round-trips IEEE doubles exactly through decimal text.
std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void write_values(std::ostream& os, const std::vector<double>& v) {
    for (size_t i = 0; i < v.size(); ++i) os << (i ? " " : "") << fmt(v[i]);
    os << "\n";
}

class LineReader {
public:
    LineReader(const std::string& path, const char* what) : path_(path), in_(path) {
        if (!in_) throw IoError(IoError::Kind::open_failed,
                                std::string(what) + ": cannot open '" + path + "'");
    }

    // Next non-empty line split into tokens.
    std::vector<std::string> next(const char* context) {
        std::string line;
        while (std::getline(in_, line)) {
            std::istringstream ss(line);
            std::vector<std::string> tokens;
            std::string tok;
            while (ss >> tok) tokens.push_back(tok);
            if (!tokens.empty()) return tokens;
        }
        throw IoError(IoError::Kind::truncated,
                      std::string(context) + ": file ends early: " + path_);
    }

    bool at_end() {
        std::string line;
        while (std::getline(in_, line)) {
            std::istringstream ss(line);
            std::string tok;
            if (ss >> tok) return false;
        }
        return true;
    }

private:
    std::string path_;
    std::ifstream in_;
};

double parse_double(const std::string& s, const char* context) {
    try {
        size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw IoError(IoError::Kind::bad_data,
                      std::string(context) + ": bad number '" + s + "'");
    }
}

long parse_long(const std::string& s, const char* context) {
    try {
        size_t pos = 0;
        const long v = std::stol(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw IoError(IoError::Kind::bad_data,
                      std::string(context) + ": bad integer '" + s + "'");
    }
}

std::vector<double> expect_values(LineReader& reader, const std::string& key, size_t count,
                                  const char* context) {
    auto tokens = reader.next(context);
    if (tokens[0] != key)
        throw IoError(IoError::Kind::bad_data,
                      std::string(context) + ": expected '" + key + "', got '" + tokens[0] + "'");
    if (tokens.size() != count + 1)
        throw IoError(IoError::Kind::bad_data,
                      std::string(context) + ": '" + key + "' expects " +
                          std::to_string(count) + " values");
    std::vector<double> v(count);
    for (size_t i = 0; i < count; ++i) v[i] = parse_double(tokens[i + 1], context);
    return v;
}

std::ofstream open_out(const std::string& path, const char* what) {
    std::ofstream os(path);
    if (!os) throw IoError(IoError::Kind::write_failed,
                           std::string(what) + ": cannot write '" + path + "'");
    return os;
}

}  // namespace

void save_model(const NetworkParams& params, const std::string& path) {
    params.validate();
    std::ofstream os = open_out(path, "save_model");
    os << kModelMagic << " v1\n";
    os << "stages " << params.stage_count() << "\n";
    os << "kernel " << params.kernel_size() << "\n";
    os << "filters " << params.filter_count() << "\n";
    os << "control_points " << params.control_points() << "\n";
    os << "sign " << to_string(params.sign) << "\n";
    os << "tied " << (params.stages[0].tied_rotation ? 1 : 0) << "\n";
    for (int l = 0; l < params.stage_count(); ++l) {
        const StageParams& s = params.stages[l];
        os << "stage " << l << "\n";
        os << "lambda_p " << fmt(s.lambda_p) << "\n";
        for (int k = 0; k < s.filter_count(); ++k) {
            os << "filter " << k << " ";
            write_values(os, s.filters[k].coeffs);
        }
        for (int k = 0; k < s.filter_count(); ++k) {
            os << "activation " << k << " ";
            write_values(os, s.activations[k].values());
        }
    }
    if (!os) throw IoError(IoError::Kind::write_failed, "save_model: write failed: " + path);
}

NetworkParams load_model(const std::string& path) {
    LineReader reader(path, "load_model");
    auto header = reader.next("load_model");
    if (header.size() != 2 || header[0] != kModelMagic || header[1] != "v1")
        throw IoError(IoError::Kind::unsupported_format,
                      "load_model: not a v1 model file: " + path);

    auto read_int_field = [&](const char* key) {
        auto t = reader.next("load_model");
        if (t.size() != 2 || t[0] != key)
            throw IoError(IoError::Kind::bad_data,
                          std::string("load_model: expected '") + key + "'");
        return parse_long(t[1], "load_model");
    };

    const long stages = read_int_field("stages");
    const long kernel = read_int_field("kernel");
    const long filters = read_int_field("filters");
    const long control_points = read_int_field("control_points");

    auto sign_tokens = reader.next("load_model");
    if (sign_tokens.size() != 2 || sign_tokens[0] != "sign")
        throw IoError(IoError::Kind::bad_data, "load_model: expected 'sign'");
    auto tied_tokens = reader.next("load_model");
    if (tied_tokens.size() != 2 || tied_tokens[0] != "tied")
        throw IoError(IoError::Kind::bad_data, "load_model: expected 'tied'");

    if (stages < 1 || kernel < 3 || kernel % 2 == 0 || filters < 1 || control_points < 3)
        throw IoError(IoError::Kind::bad_data, "load_model: invalid shape header");

    NetworkParams params;
    try {
        params.sign = sign_convention_from_string(sign_tokens[1]);
    } catch (const std::invalid_argument& e) {
        throw IoError(IoError::Kind::bad_data, std::string("load_model: ") + e.what());
    }
    const bool tied = parse_long(tied_tokens[1], "load_model") != 0;
    const size_t atoms = static_cast<size_t>(kernel) * kernel - 1;

    for (long l = 0; l < stages; ++l) {
        auto stage_tokens = reader.next("load_model");
        if (stage_tokens.size() != 2 || stage_tokens[0] != "stage" ||
            parse_long(stage_tokens[1], "load_model") != l)
            throw IoError(IoError::Kind::bad_data, "load_model: stage blocks out of order");
        StageParams s;
        s.kernel_size = static_cast<int>(kernel);
        s.tied_rotation = tied;
        s.lambda_p = expect_values(reader, "lambda_p", 1, "load_model")[0];
        for (long k = 0; k < filters; ++k) {
            auto tokens = reader.next("load_model");
            if (tokens.size() != atoms + 2 || tokens[0] != "filter" ||
                parse_long(tokens[1], "load_model") != k)
                throw IoError(IoError::Kind::bad_data, "load_model: bad filter line");
            FilterSpec spec;
            spec.coeffs.resize(atoms);
            for (size_t i = 0; i < atoms; ++i)
                spec.coeffs[i] = parse_double(tokens[i + 2], "load_model");
            s.filters.push_back(std::move(spec));
        }
        for (long k = 0; k < filters; ++k) {
            auto tokens = reader.next("load_model");
            if (tokens.size() != static_cast<size_t>(control_points) + 2 ||
                tokens[0] != "activation" || parse_long(tokens[1], "load_model") != k)
                throw IoError(IoError::Kind::bad_data, "load_model: bad activation line");
            std::vector<double> q(control_points);
            for (long i = 0; i < control_points; ++i)
                q[i] = parse_double(tokens[i + 2], "load_model");
            s.activations.emplace_back(std::move(q));
        }
        params.stages.push_back(std::move(s));
    }
    if (!reader.at_end())
        throw IoError(IoError::Kind::bad_data, "load_model: trailing content: " + path);
    try {
        params.validate();
    } catch (const std::invalid_argument& e) {
        throw IoError(IoError::Kind::bad_data, std::string("load_model: ") + e.what());
    }
    return params;
}

void save_gmm(const GMMModel& model, const std::string& path) {
    if (!model.fitted()) throw std::invalid_argument("save_gmm: model not fitted");
    std::ofstream os = open_out(path, "save_gmm");
    os << kGmmMagic << " v1\n";
    os << "patch " << model.patch << "\n";
    os << "components " << model.component_count() << "\n";
    os << "weights ";
    write_values(os, model.weights);
    for (int k = 0; k < model.component_count(); ++k) {
        os << "mean " << k << " ";
        write_values(os, model.means[k]);
        os << "covariance " << k << " ";
        write_values(os, model.covariances[k]);
    }
    if (!os) throw IoError(IoError::Kind::write_failed, "save_gmm: write failed: " + path);
}

GMMModel load_gmm(const std::string& path) {
    LineReader reader(path, "load_gmm");
    auto header = reader.next("load_gmm");
    if (header.size() != 2 || header[0] != kGmmMagic || header[1] != "v1")
        throw IoError(IoError::Kind::unsupported_format,
                      "load_gmm: not a v1 gmm file: " + path);

    auto patch_tokens = reader.next("load_gmm");
    if (patch_tokens.size() != 2 || patch_tokens[0] != "patch")
        throw IoError(IoError::Kind::bad_data, "load_gmm: expected 'patch'");
    auto comp_tokens = reader.next("load_gmm");
    if (comp_tokens.size() != 2 || comp_tokens[0] != "components")
        throw IoError(IoError::Kind::bad_data, "load_gmm: expected 'components'");

    GMMModel model;
    model.patch = static_cast<int>(parse_long(patch_tokens[1], "load_gmm"));
    const long components = parse_long(comp_tokens[1], "load_gmm");
    if (model.patch < 2 || components < 1)
        throw IoError(IoError::Kind::bad_data, "load_gmm: invalid shape header");
    model.dim = model.patch * model.patch;

    model.weights = expect_values(reader, "weights", components, "load_gmm");
    for (long k = 0; k < components; ++k) {
        auto mean_tokens = reader.next("load_gmm");
        if (mean_tokens.size() != static_cast<size_t>(model.dim) + 2 ||
            mean_tokens[0] != "mean" || parse_long(mean_tokens[1], "load_gmm") != k)
            throw IoError(IoError::Kind::bad_data, "load_gmm: bad mean line");
        std::vector<double> mean(model.dim);
        for (int i = 0; i < model.dim; ++i)
            mean[i] = parse_double(mean_tokens[i + 2], "load_gmm");
        model.means.push_back(std::move(mean));

        auto cov_tokens = reader.next("load_gmm");
        const size_t cov_len = static_cast<size_t>(model.dim) * model.dim;
        if (cov_tokens.size() != cov_len + 2 || cov_tokens[0] != "covariance" ||
            parse_long(cov_tokens[1], "load_gmm") != k)
            throw IoError(IoError::Kind::bad_data, "load_gmm: bad covariance line");
        std::vector<double> cov(cov_len);
        for (size_t i = 0; i < cov_len; ++i)
            cov[i] = parse_double(cov_tokens[i + 2], "load_gmm");
        model.covariances.push_back(std::move(cov));
    }
    if (!reader.at_end())
        throw IoError(IoError::Kind::bad_data, "load_gmm: trailing content: " + path);
    return model;
}

void save_manifest(const std::vector<std::pair<std::string, std::string>>& entries,
                   const std::string& path) {
    std::ofstream os = open_out(path, "save_manifest");
    for (const auto& [obs, target] : entries) os << obs << "\t" << target << "\n";
    if (!os) throw IoError(IoError::Kind::write_failed, "save_manifest: write failed: " + path);
}

std::vector<std::pair<std::string, std::string>> load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError(IoError::Kind::open_failed, "load_manifest: cannot open " + path);
    std::vector<std::pair<std::string, std::string>> entries;
    std::string line;
    while (std::getline(in, line)) {
        std::istringstream ss(line);
        std::string obs, target, extra;
        if (!(ss >> obs)) continue;  // blank line
        if (!(ss >> target) || (ss >> extra))
            throw IoError(IoError::Kind::bad_data,
                          "load_manifest: each line needs exactly two paths: " + path);
        entries.emplace_back(std::move(obs), std::move(target));
    }
    return entries;
}

std::vector<TrainingPair> load_training_pairs(const std::string& manifest_path) {
    const auto entries = load_manifest(manifest_path);
    const std::filesystem::path base = std::filesystem::path(manifest_path).parent_path();
    auto resolve = [&base](const std::string& p) {
        const std::filesystem::path fp(p);
        return fp.is_absolute() ? fp.string() : (base / fp).string();
    };
    std::vector<TrainingPair> pairs;
    pairs.reserve(entries.size());
    for (const auto& [obs, target] : entries)
        pairs.push_back({load_image(resolve(obs)), load_field(resolve(target))});
    return pairs;
}

void save_fit_report(const FitReport& report, const std::string& path) {
    std::ofstream os = open_out(path, "save_fit_report");
    os << "iterations " << report.iterations << "\n";
    os << "terminal_gradient_norm " << fmt(report.terminal_gradient_norm) << "\n";
    os << "wall_seconds " << fmt(report.wall_seconds) << "\n";
    os << "converged " << (report.converged ? 1 : 0) << "\n";
    os << "line_search_failed " << (report.line_search_failed ? 1 : 0) << "\n";
    os << "loss_trajectory ";
    write_values(os, report.loss_trajectory);
    if (!os)
        throw IoError(IoError::Kind::write_failed, "save_fit_report: write failed: " + path);
}

}  // namespace hazeprop
