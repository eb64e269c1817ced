// hazeprop command-line tool: dataset synthesis, training, restoration
// pipelines, metric evaluation and the propagation audit.
//
// Exit codes: 0 success, 1 numeric audit failure, 2 usage or I/O error.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "hazeprop/image_io.hpp"
#include "hazeprop/model_io.hpp"
#include "hazeprop/recovery.hpp"
#include "hazeprop/rng.hpp"
#include "hazeprop/synth.hpp"

namespace fs = std::filesystem;
using namespace hazeprop;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitAuditFailed = 1;
constexpr int kExitUsage = 2;

// Holds an exclusive marker inside the output directory for the lifetime of
// the command, so two concurrent invocations cannot interleave writes.
class OutputDirGuard {
public:
    explicit OutputDirGuard(const std::string& dir) : lock_(fs::path(dir) / ".hazeprop-lock") {
        fs::create_directories(dir);
        std::FILE* f = std::fopen(lock_.c_str(), "wx");
        if (!f)
            throw IoError(IoError::Kind::open_failed,
                          "output directory is in use by another run (stale lock? remove " +
                              lock_.string() + ")");
        std::fclose(f);
    }
    ~OutputDirGuard() {
        std::error_code ec;
        fs::remove(lock_, ec);
    }

private:
    fs::path lock_;
};

std::string default_out_dir() {
    const char* env = std::getenv("HAZEPROP_OUT_DIR");
    return env && *env ? env : "out";
}

// Merge --config keys into argv as trailing long flags; explicitly passed
// flags win, unknown keys fail CLI11 parsing.
std::vector<std::string> merge_config_args(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    std::optional<std::string> config_path;
    for (size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) config_path = args[i + 1];
        else if (args[i].rfind("--config=", 0) == 0) config_path = args[i].substr(9);
    }
    if (!config_path) return args;

    std::ifstream in(*config_path);
    if (!in) throw IoError(IoError::Kind::open_failed, "cannot open config " + *config_path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw IoError(IoError::Kind::bad_data, std::string("config parse error: ") + e.what());
    }
    if (!j.is_object()) throw IoError(IoError::Kind::bad_data, "config must be a JSON object");

    for (const auto& [key, value] : j.items()) {
        const std::string flag = "--" + key;
        bool present = false;
        for (const auto& a : args)
            if (a == flag || a.rfind(flag + "=", 0) == 0) present = true;
        if (present) continue;
        if (value.is_boolean()) {
            if (value.get<bool>()) args.push_back(flag);
        } else if (value.is_string()) {
            args.push_back(flag + "=" + value.get<std::string>());
        } else {
            args.push_back(flag + "=" + value.dump());
        }
    }
    return args;
}

void write_metrics(const std::string& path, double psnr_db, double ssim_value) {
    std::ofstream os(path);
    os << "psnr " << psnr_db << "\n";
    os << "ssim " << ssim_value << "\n";
}

// --- subcommand configuration records ----------------------------------------

struct SynthCmd {
    std::string out = default_out_dir();
    int pairs = 50;
    uint64_t seed = 0;
    int crop = 180;
    int sources = 8;
    int source_size = 240;
};

struct TrainCmd {
    std::string manifest;
    std::string out = default_out_dir();
    int stages = 5;
    int filters = 24;
    int kernel = 5;
    int control_points = 31;
    std::string mode = "greedy_then_joint";
    std::string sign = "unrolled_eq11";
    int iters = 200;
    double grad_tol = 1e-5;
    int threads = 0;
    bool project_lambda = false;
    double alpha_hat = 1.5, alpha_check = 1.5;
    int window = 15;
};

struct RestoreCmd {
    std::string model;
    std::string input;
    std::string out = default_out_dir();
    std::string gt;
    double epsilon = 0.01;
    double alpha_hat = 1.5, alpha_check = 1.5;
    int window = 15;
    // separation knobs (underwater/derain)
    bool no_separation = false;
    double mu_l = 0.1, mu_p = 0.5, eta = 1.05;
    int sep_iters = 500;
    double sep_tol = 1e-4;
    double tau = 0.01;
    int inner_iters = 30;
    std::string gmm;  // derain only
    int gmm_stride = 2;
};

struct FitGmmCmd {
    std::vector<std::string> inputs;
    std::string out = default_out_dir();
    int patch = 8;
    int components = 3;
    int em_iters = 40;
    int stride = 2;
    uint64_t seed = 0;
};

struct EvalCmd {
    std::string a, b;
    std::string out;
};

struct AuditCmd {
    std::string model;
    double tolerance = 1e-4;
    int coord_samples = 200;
    int energy_samples = 100;
    uint64_t seed = 17;
};

// --- subcommand implementations ------------------------------------------------

int run_synth(const SynthCmd& cmd) {
    OutputDirGuard guard(cmd.out);
    const int source_size = std::max(cmd.source_size, cmd.crop);
    const auto sources = procedural_sources(cmd.sources, source_size, source_size, cmd.seed);

    DatasetOptions opts;
    opts.pair_count = cmd.pairs;
    opts.crop = cmd.crop;
    opts.seed = cmd.seed;
    const std::vector<TrainingPair> pairs = build_dataset(sources, opts);

    std::vector<std::pair<std::string, std::string>> entries;
    char name[64];
    for (size_t i = 0; i < pairs.size(); ++i) {
        std::snprintf(name, sizeof(name), "obs_%04zu.png", i);
        const std::string obs = name;
        std::snprintf(name, sizeof(name), "t_%04zu.png", i);
        const std::string target = name;
        save_image(pairs[i].observation, (fs::path(cmd.out) / obs).string(), 8);
        save_field(pairs[i].target, (fs::path(cmd.out) / target).string(), 16);
        entries.emplace_back(obs, target);
    }
    save_manifest(entries, (fs::path(cmd.out) / "manifest.txt").string());
    std::cout << "wrote " << pairs.size() << " pairs to " << cmd.out << "\n";
    return kExitOk;
}

int run_train(const TrainCmd& cmd) {
    OutputDirGuard guard(cmd.out);
    const std::vector<TrainingPair> pairs = load_training_pairs(cmd.manifest);
    if (pairs.empty()) {
        std::cerr << "error: manifest lists no pairs\n";
        return kExitUsage;
    }

    TrainShape shape;
    shape.stage_count = cmd.stages;
    shape.kernel_size = cmd.kernel;
    shape.filter_count = cmd.filters;
    shape.control_points = cmd.control_points;
    shape.sign = sign_convention_from_string(cmd.sign);

    PriorParams prior{cmd.alpha_hat, cmd.alpha_check, cmd.window};
    LbfgsOptions opts;
    opts.max_iterations = cmd.iters;
    opts.gradient_tolerance = cmd.grad_tol;
    opts.threads = cmd.threads;
    opts.project_lambda_nonnegative = cmd.project_lambda;

    const TrainResult result =
        train_schedule(pairs, shape, train_mode_from_string(cmd.mode), prior, opts);

    save_model(result.params, (fs::path(cmd.out) / "model.txt").string());
    if (!result.reports.empty())
        save_fit_report(result.reports.back(), (fs::path(cmd.out) / "fit_report.txt").string());
    double final_loss = 0.0;
    if (!result.reports.empty() && !result.reports.back().loss_trajectory.empty())
        final_loss = result.reports.back().loss_trajectory.back();
    std::cout << "trained " << cmd.stages << " stages on " << pairs.size()
              << " pairs, final loss " << final_loss << "\n";
    std::cout << "model: " << (fs::path(cmd.out) / "model.txt").string() << "\n";
    return kExitOk;
}

int run_dehaze(const RestoreCmd& cmd) {
    OutputDirGuard guard(cmd.out);
    const NetworkParams model = load_model(cmd.model);
    const ImageRGB input = load_image(cmd.input);
    PriorParams prior{cmd.alpha_hat, cmd.alpha_check, cmd.window};
    RecoveryConfig cfg;
    cfg.epsilon = cmd.epsilon;

    const DehazeOutput out = pipeline_dehaze(input, model, prior, cfg);
    save_image(out.radiance, (fs::path(cmd.out) / "radiance.png").string());
    save_field(out.transmission, (fs::path(cmd.out) / "transmission.png").string(), 16);

    if (!cmd.gt.empty()) {
        const ImageRGB gt = load_image(cmd.gt);
        const double p = psnr(out.radiance, gt), s = ssim(out.radiance, gt);
        write_metrics((fs::path(cmd.out) / "metrics.txt").string(), p, s);
        std::cout << "psnr " << p << " ssim " << s << "\n";
    }
    return kExitOk;
}

int run_underwater(const RestoreCmd& cmd) {
    OutputDirGuard guard(cmd.out);
    const NetworkParams model = load_model(cmd.model);
    const ImageRGB input = load_image(cmd.input);
    PriorParams prior{cmd.alpha_hat, cmd.alpha_check, cmd.window};
    RecoveryConfig cfg;
    cfg.epsilon = cmd.epsilon;

    UnderwaterOptions opts;
    opts.use_separation = !cmd.no_separation;
    opts.separation = {cmd.sep_iters, cmd.sep_tol, cmd.mu_l, cmd.mu_p, cmd.eta};
    opts.tau = cmd.tau;
    opts.inner_iters = cmd.inner_iters;

    const UnderwaterOutput out = pipeline_underwater(input, model, prior, opts, cfg);
    save_image(out.radiance, (fs::path(cmd.out) / "radiance.png").string());
    save_image(out.color_shift, (fs::path(cmd.out) / "color_shift.png").string());
    const char* names[3] = {"t_r.png", "t_g.png", "t_b.png"};
    for (int c = 0; c < 3; ++c)
        save_field(out.transmission[c], (fs::path(cmd.out) / names[c]).string(), 16);

    if (opts.use_separation) {
        std::cout << "separation: " << out.separation_report.iterations << " iterations, "
                  << (out.separation_report.cauchy_pass ? "converged" : "not converged")
                  << ", certificate "
                  << (out.separation_report.certificate_pass ? "pass" : "FAIL") << "\n";
    }
    if (!cmd.gt.empty()) {
        const ImageRGB gt = load_image(cmd.gt);
        const double p = psnr(out.radiance, gt), s = ssim(out.radiance, gt);
        write_metrics((fs::path(cmd.out) / "metrics.txt").string(), p, s);
        std::cout << "psnr " << p << " ssim " << s << "\n";
    }
    return kExitOk;
}

int run_derain(const RestoreCmd& cmd) {
    OutputDirGuard guard(cmd.out);
    const NetworkParams model = load_model(cmd.model);
    const GMMModel gmm = load_gmm(cmd.gmm);
    const ImageRGB input = load_image(cmd.input);
    PriorParams prior{cmd.alpha_hat, cmd.alpha_check, cmd.window};
    RecoveryConfig cfg;
    cfg.epsilon = cmd.epsilon;

    DerainOptions opts;
    opts.use_separation = !cmd.no_separation;
    opts.separation = {cmd.sep_iters, cmd.sep_tol, cmd.mu_l, cmd.mu_p, cmd.eta};
    opts.tau = cmd.tau;
    opts.inner_iters = cmd.inner_iters;
    opts.gmm_stride = cmd.gmm_stride;

    const DerainOutput out = pipeline_derain(input, model, prior, gmm, opts, cfg);
    save_image(out.radiance, (fs::path(cmd.out) / "radiance.png").string());
    save_image(out.rain, (fs::path(cmd.out) / "rain.png").string());
    save_field(out.transmission, (fs::path(cmd.out) / "transmission.png").string(), 16);

    if (!cmd.gt.empty()) {
        const ImageRGB gt = load_image(cmd.gt);
        const double p = psnr(out.radiance, gt), s = ssim(out.radiance, gt);
        write_metrics((fs::path(cmd.out) / "metrics.txt").string(), p, s);
        std::cout << "psnr " << p << " ssim " << s << "\n";
    }
    return kExitOk;
}

int run_fit_gmm(const FitGmmCmd& cmd) {
    OutputDirGuard guard(cmd.out);
    std::vector<ScalarField> samples;
    samples.reserve(cmd.inputs.size());
    for (const auto& path : cmd.inputs) samples.push_back(load_field(path));

    GmmFitOptions opts;
    opts.n_components = cmd.components;
    opts.em_iters = cmd.em_iters;
    opts.stride = cmd.stride;
    opts.seed = cmd.seed;
    GmmFitInfo info;
    const GMMModel model = fit_gmm_patches(samples, cmd.patch, opts, &info);
    save_gmm(model, (fs::path(cmd.out) / "gmm.txt").string());
    std::cout << "fitted " << model.component_count() << " components on patches of "
              << cmd.patch << "x" << cmd.patch;
    if (info.degenerate_fallback) std::cout << " (degenerate data, single component)";
    std::cout << "\n";
    return kExitOk;
}

int run_eval(const EvalCmd& cmd) {
    const ImageRGB a = load_image(cmd.a), b = load_image(cmd.b);
    const double p = psnr(a, b), s = ssim(a, b);
    std::cout << "psnr " << p << "\nssim " << s << "\n";
    if (!cmd.out.empty()) write_metrics(cmd.out, p, s);
    return kExitOk;
}

int run_audit(const AuditCmd& cmd) {
    const NetworkParams model = load_model(cmd.model);
    bool ok = true;

    // Instance: a seeded synthetic hazy pair at 16x16.
    Rng rng(cmd.seed);
    const ImageRGB scene = procedural_scene(16, 16, rng.next_u64());
    const ScalarField depth = procedural_depth(DepthKind::perlin, 16, 16, rng.next_u64());
    HazeRecipe recipe;
    recipe.a = 0.85;
    recipe.beta = 1.0;
    recipe.crop = 16;
    recipe.seed = rng.next_u64();
    const HazySample sample = synth_hazy(scene, depth, recipe);
    const TrainingPair pair{sample.observation, sample.transmission};
    const PriorParams prior;

    // Energy identity per stage.
    ScalarField t_probe(16, 16);
    for (size_t i = 0; i < t_probe.size(); ++i) t_probe.at(i) = rng.uniform(0.0, 1.0);
    for (int l = 0; l < model.stage_count(); ++l) {
        const StageParams& s = model.stages[l];
        if (!s.tied_rotation) {
            std::cout << "energy stage " << l << ": skipped (untied)\n";
            continue;
        }
        const EnergyAuditReport rep =
            energy_grad_check(t_probe, s, cmd.energy_samples, rng.next_u64());
        const bool pass = rep.max_rel_error < cmd.tolerance;
        std::cout << "energy stage " << l << ": max rel err " << rep.max_rel_error << " "
                  << (pass ? "pass" : "FAIL") << "\n";
        ok = ok && pass;
    }

    // Analytic gradient vs central differences on a coordinate subsample.
    const BackpropResult analytic = backprop(pair, model, prior);
    GradientVector x = pack_parameters(model);
    const size_t total = x.size();
    const size_t samples = std::min<size_t>(cmd.coord_samples, total);
    NetworkParams probe = model;
    const AtmosphericLight a = estimate_airlight(pair.observation, prior.window);
    const ScalarField prior_map = prior_transmission(pair.observation, a, prior);
    auto eval_loss = [&](const GradientVector& v) {
        unpack_parameters(v, probe);
        return loss(network_forward_field(prior_map, prior_map, probe).back(), pair.target);
    };

    double max_rel = 0.0;
    const double h = 1e-5;
    for (size_t q = 0; q < samples; ++q) {
        const size_t idx = samples == total ? q : rng.next_below(total);
        const double saved = x[idx];
        x[idx] = saved + h;
        const double f_plus = eval_loss(x);
        x[idx] = saved - h;
        const double f_minus = eval_loss(x);
        x[idx] = saved;
        const double fd = (f_plus - f_minus) / (2.0 * h);
        const double rel = std::abs(fd - analytic.grad[idx]) /
                           std::max(std::abs(analytic.grad[idx]), 1e-6);
        max_rel = std::max(max_rel, rel);
    }
    const bool grad_pass = max_rel < cmd.tolerance;
    std::cout << "gradient: " << samples << " coordinates, max rel err " << max_rel << " "
              << (grad_pass ? "pass" : "FAIL") << "\n";
    ok = ok && grad_pass;

    std::cout << (ok ? "audit pass" : "audit FAIL") << "\n";
    return ok ? kExitOk : kExitAuditFailed;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"transmission-propagation image restoration"};
    app.require_subcommand(1);
    std::string config_path;
    auto add_config_option = [&config_path](CLI::App* sub) {
        sub->add_option("--config", config_path, "JSON config; keys mirror long flags");
    };

    SynthCmd synth_cmd;
    auto* synth = app.add_subcommand("synth", "synthesize a hazy training dataset");
    add_config_option(synth);
    synth->add_option("--out", synth_cmd.out, "output directory");
    synth->add_option("--pairs", synth_cmd.pairs, "number of pairs")->check(CLI::PositiveNumber);
    synth->add_option("--seed", synth_cmd.seed, "dataset seed");
    synth->add_option("--crop", synth_cmd.crop, "crop size")->check(CLI::PositiveNumber);
    synth->add_option("--source-count", synth_cmd.sources, "procedural source scenes")
        ->check(CLI::PositiveNumber);
    synth->add_option("--source-size", synth_cmd.source_size, "source scene side length");

    TrainCmd train_cmd;
    auto* train = app.add_subcommand("train", "fit a propagation model");
    add_config_option(train);
    train->add_option("--manifest", train_cmd.manifest, "training manifest")->required();
    train->add_option("--out", train_cmd.out, "output directory");
    train->add_option("--stages", train_cmd.stages, "residual stages")->check(CLI::PositiveNumber);
    train->add_option("--filters", train_cmd.filters, "filters per stage")
        ->check(CLI::PositiveNumber);
    train->add_option("--kernel", train_cmd.kernel, "kernel size (odd)");
    train->add_option("--control-points", train_cmd.control_points, "activation nodes (odd)");
    train->add_option("--mode", train_cmd.mode, "greedy | joint | greedy_then_joint");
    train->add_option("--sign", train_cmd.sign, "paper_eq2 | unrolled_eq11");
    train->add_option("--iters", train_cmd.iters, "max L-BFGS iterations");
    train->add_option("--grad-tol", train_cmd.grad_tol, "relative gradient tolerance");
    train->add_option("--threads", train_cmd.threads, "worker threads (0 = auto)");
    train->add_flag("--project-lambda", train_cmd.project_lambda,
                    "project prior weights to be nonnegative");
    train->add_option("--alpha-hat", train_cmd.alpha_hat, "prior upper scaling");
    train->add_option("--alpha-check", train_cmd.alpha_check, "prior lower scaling");
    train->add_option("--window", train_cmd.window, "airlight min-filter window");

    auto add_restore_options = [](CLI::App* sub, RestoreCmd& cmd, bool separation, bool gmm) {
        sub->add_option("--model", cmd.model, "model file")->required();
        sub->add_option("--input", cmd.input, "input image")->required();
        sub->add_option("--out", cmd.out, "output directory");
        sub->add_option("--gt", cmd.gt, "ground truth for metrics");
        sub->add_option("--epsilon", cmd.epsilon, "transmission floor");
        sub->add_option("--alpha-hat", cmd.alpha_hat, "prior upper scaling");
        sub->add_option("--alpha-check", cmd.alpha_check, "prior lower scaling");
        sub->add_option("--window", cmd.window, "airlight min-filter window");
        if (separation) {
            sub->add_flag("--no-separation", cmd.no_separation, "skip layer separation");
            sub->add_option("--mu-l", cmd.mu_l, "initial penalty on L");
            sub->add_option("--mu-p", cmd.mu_p, "initial penalty on P");
            sub->add_option("--eta", cmd.eta, "penalty growth ratio");
            sub->add_option("--sep-iters", cmd.sep_iters, "max separation iterations");
            sub->add_option("--sep-tol", cmd.sep_tol, "separation RMS tolerance");
            sub->add_option("--tau", cmd.tau, "gradient preservation threshold");
            sub->add_option("--inner-iters", cmd.inner_iters, "CG iterations per operator");
        }
        if (gmm) {
            sub->add_option("--gmm", cmd.gmm, "patch GMM file")->required();
            sub->add_option("--gmm-stride", cmd.gmm_stride, "patch stride");
        }
    };

    RestoreCmd dehaze_cmd, underwater_cmd, derain_cmd;
    auto* dehaze = app.add_subcommand("dehaze", "remove haze from one image");
    add_config_option(dehaze);
    add_restore_options(dehaze, dehaze_cmd, false, false);
    auto* underwater = app.add_subcommand("underwater", "enhance an underwater image");
    add_config_option(underwater);
    add_restore_options(underwater, underwater_cmd, true, false);
    auto* derain = app.add_subcommand("derain", "remove rain streaks and haze");
    add_config_option(derain);
    add_restore_options(derain, derain_cmd, true, true);

    FitGmmCmd fit_gmm_cmd;
    auto* fit_gmm = app.add_subcommand("fit-gmm", "fit a patch GMM on sample images");
    add_config_option(fit_gmm);
    fit_gmm->add_option("--inputs", fit_gmm_cmd.inputs, "sample images")->required();
    fit_gmm->add_option("--out", fit_gmm_cmd.out, "output directory");
    fit_gmm->add_option("--patch", fit_gmm_cmd.patch, "patch side length");
    fit_gmm->add_option("--components", fit_gmm_cmd.components, "mixture components");
    fit_gmm->add_option("--em-iters", fit_gmm_cmd.em_iters, "EM iterations");
    fit_gmm->add_option("--stride", fit_gmm_cmd.stride, "patch stride");
    fit_gmm->add_option("--seed", fit_gmm_cmd.seed, "fit seed");

    EvalCmd eval_cmd;
    auto* eval = app.add_subcommand("eval", "PSNR/SSIM between two images");
    add_config_option(eval);
    eval->add_option("--a", eval_cmd.a, "first image")->required();
    eval->add_option("--b", eval_cmd.b, "second image")->required();
    eval->add_option("--out", eval_cmd.out, "metrics report path");

    AuditCmd audit_cmd;
    auto* audit = app.add_subcommand("audit", "energy and gradient checks on a model");
    add_config_option(audit);
    audit->add_option("--model", audit_cmd.model, "model file")->required();
    audit->add_option("--tolerance", audit_cmd.tolerance, "max relative error");
    audit->add_option("--coord-samples", audit_cmd.coord_samples,
                      "gradient coordinates to check");
    audit->add_option("--energy-samples", audit_cmd.energy_samples,
                      "interior pixels per energy check");
    audit->add_option("--seed", audit_cmd.seed, "audit seed");

    try {
        const std::vector<std::string> merged = merge_config_args(argc, argv);
        // CLI11 parses reversed vectors.
        std::vector<std::string> reversed(merged.rbegin(), merged.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }

    try {
        if (synth->parsed()) return run_synth(synth_cmd);
        if (train->parsed()) return run_train(train_cmd);
        if (dehaze->parsed()) return run_dehaze(dehaze_cmd);
        if (underwater->parsed()) return run_underwater(underwater_cmd);
        if (derain->parsed()) return run_derain(derain_cmd);
        if (fit_gmm->parsed()) return run_fit_gmm(fit_gmm_cmd);
        if (eval->parsed()) return run_eval(eval_cmd);
        if (audit->parsed()) return run_audit(audit_cmd);
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }
    return kExitUsage;
}
