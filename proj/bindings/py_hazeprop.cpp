// Python bindings for the main operations: synthesis, priors, propagation,
// training, separation and metrics. Fields and images cross the boundary as
// numpy arrays (HxW float64 and HxWx3 float64 in [0,1]).

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "hazeprop/image_io.hpp"
#include "hazeprop/model_io.hpp"
#include "hazeprop/recovery.hpp"
#include "hazeprop/synth.hpp"

namespace py = pybind11;
using namespace hazeprop;

namespace {

ScalarField field_from_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    if (a.ndim() != 2) throw std::invalid_argument("expected a 2-D array");
    ScalarField f(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)));
    std::copy(a.data(), a.data() + f.size(), f.data());
    return f;
}

py::array_t<double> field_to_array(const ScalarField& f) {
    py::array_t<double> a({f.height(), f.width()});
    std::copy(f.data(), f.data() + f.size(), a.mutable_data());
    return a;
}

ImageRGB image_from_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    if (a.ndim() != 3 || a.shape(2) != 3)
        throw std::invalid_argument("expected an HxWx3 array");
    const int h = static_cast<int>(a.shape(0)), w = static_cast<int>(a.shape(1));
    ImageRGB img(h, w);
    auto r = a.unchecked<3>();
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j)
            for (int c = 0; c < 3; ++c) img.channel(c)(i, j) = r(i, j, c);
    return img;
}

py::array_t<double> image_to_array(const ImageRGB& img) {
    py::array_t<double> a({img.height(), img.width(), 3});
    auto r = a.mutable_unchecked<3>();
    for (int i = 0; i < img.height(); ++i)
        for (int j = 0; j < img.width(); ++j)
            for (int c = 0; c < 3; ++c) r(i, j, c) = img.channel(c)(i, j);
    return a;
}

PriorParams make_prior(double alpha_hat, double alpha_check, int window) {
    return PriorParams{alpha_hat, alpha_check, window};
}

}  // namespace

PYBIND11_MODULE(_hazeprop, m) {
    m.doc() = "physics-guided transmission propagation for haze removal";

    py::class_<NetworkParams>(m, "NetworkParams")
        .def_property_readonly("stage_count", &NetworkParams::stage_count)
        .def_property_readonly("kernel_size", &NetworkParams::kernel_size)
        .def_property_readonly("filter_count", &NetworkParams::filter_count)
        .def_property_readonly("control_points", &NetworkParams::control_points)
        .def_property_readonly("parameter_count", &NetworkParams::parameter_count);

    py::class_<GMMModel>(m, "GMMModel")
        .def_property_readonly("patch", [](const GMMModel& g) { return g.patch; })
        .def_property_readonly("components", &GMMModel::component_count);

    py::class_<FitReport>(m, "FitReport")
        .def_readonly("iterations", &FitReport::iterations)
        .def_readonly("loss_trajectory", &FitReport::loss_trajectory)
        .def_readonly("terminal_gradient_norm", &FitReport::terminal_gradient_norm)
        .def_readonly("converged", &FitReport::converged);

    py::enum_<SignConvention>(m, "SignConvention")
        .value("paper_eq2", SignConvention::paper_eq2)
        .value("unrolled_eq11", SignConvention::unrolled_eq11);

    m.def("default_network", &default_network, py::arg("stages"), py::arg("kernel"),
          py::arg("filters"), py::arg("control_points"),
          py::arg("sign") = SignConvention::unrolled_eq11);
    m.def("zero_network", &zero_network, py::arg("stages"), py::arg("kernel"),
          py::arg("filters"), py::arg("control_points"),
          py::arg("sign") = SignConvention::unrolled_eq11);

    m.def("load_model", &load_model);
    m.def("save_model", &save_model);
    m.def("load_gmm", &load_gmm);
    m.def("save_gmm", &save_gmm);

    m.def("load_image",
          [](const std::string& path) { return image_to_array(load_image(path)); });
    m.def("save_image",
          [](const py::array_t<double>& a, const std::string& path, int bit_depth) {
              save_image(image_from_array(a), path, bit_depth);
          },
          py::arg("image"), py::arg("path"), py::arg("bit_depth") = 8);
    m.def("load_field",
          [](const std::string& path) { return field_to_array(load_field(path)); });
    m.def("save_field",
          [](const py::array_t<double>& a, const std::string& path, int bit_depth) {
              save_field(field_from_array(a), path, bit_depth);
          },
          py::arg("field"), py::arg("path"), py::arg("bit_depth") = 8);

    m.def("procedural_scene", [](int h, int w, uint64_t seed) {
        return image_to_array(procedural_scene(h, w, seed));
    });
    m.def("procedural_depth", [](const std::string& kind, int h, int w, uint64_t seed) {
        return field_to_array(procedural_depth(depth_kind_from_string(kind), h, w, seed));
    });

    m.def("synth_hazy",
          [](const py::array_t<double>& clean, const py::array_t<double>& depth, double a,
             double beta, int crop, uint64_t seed) {
              HazeRecipe r{a, beta, crop, seed};
              const HazySample s = synth_hazy(image_from_array(clean), field_from_array(depth), r);
              return py::make_tuple(image_to_array(s.observation),
                                    field_to_array(s.transmission));
          },
          py::arg("clean"), py::arg("depth"), py::arg("a") = 0.85, py::arg("beta") = 1.0,
          py::arg("crop") = 1 << 20, py::arg("seed") = 0);

    m.def("estimate_airlight", [](const py::array_t<double>& img, int window) {
        const AtmosphericLight a = estimate_airlight(image_from_array(img), window);
        return py::make_tuple(a[0], a[1], a[2]);
    }, py::arg("image"), py::arg("window") = 15);

    m.def("prior_transmission",
          [](const py::array_t<double>& img, double alpha_hat, double alpha_check, int window) {
              const ImageRGB i = image_from_array(img);
              const PriorParams p = make_prior(alpha_hat, alpha_check, window);
              return field_to_array(prior_transmission(i, estimate_airlight(i, window), p));
          },
          py::arg("image"), py::arg("alpha_hat") = 1.5, py::arg("alpha_check") = 1.5,
          py::arg("window") = 15);

    m.def("network_forward",
          [](const py::array_t<double>& img, const NetworkParams& model, double alpha_hat,
             double alpha_check, int window, double epsilon) {
              const PriorParams p = make_prior(alpha_hat, alpha_check, window);
              const ForwardResult r = network_forward(image_from_array(img), model, p, epsilon);
              return field_to_array(r.t_final);
          },
          py::arg("image"), py::arg("model"), py::arg("alpha_hat") = 1.5,
          py::arg("alpha_check") = 1.5, py::arg("window") = 15, py::arg("epsilon") = 0.01);

    m.def("dehaze",
          [](const py::array_t<double>& img, const NetworkParams& model, double alpha_hat,
             double alpha_check, int window, double epsilon) {
              const PriorParams p = make_prior(alpha_hat, alpha_check, window);
              RecoveryConfig cfg;
              cfg.epsilon = epsilon;
              const DehazeOutput out = pipeline_dehaze(image_from_array(img), model, p, cfg);
              return py::make_tuple(image_to_array(out.radiance),
                                    field_to_array(out.transmission),
                                    py::make_tuple(out.airlight[0], out.airlight[1],
                                                   out.airlight[2]));
          },
          py::arg("image"), py::arg("model"), py::arg("alpha_hat") = 1.5,
          py::arg("alpha_check") = 1.5, py::arg("window") = 15, py::arg("epsilon") = 0.01);

    m.def("underwater",
          [](const py::array_t<double>& img, const NetworkParams& model, bool use_separation,
             int sep_iters, double sep_tol) {
              UnderwaterOptions opts;
              opts.use_separation = use_separation;
              opts.separation.max_iter = sep_iters;
              opts.separation.tolerance = sep_tol;
              const UnderwaterOutput out =
                  pipeline_underwater(image_from_array(img), model, PriorParams{}, opts);
              return py::make_tuple(image_to_array(out.radiance),
                                    image_to_array(out.color_shift),
                                    out.separation_report.certificate_pass);
          },
          py::arg("image"), py::arg("model"), py::arg("use_separation") = true,
          py::arg("sep_iters") = 500, py::arg("sep_tol") = 1e-4);

    m.def("run_separation_identity",
          [](const py::array_t<double>& img, int max_iter, double tol) {
              IdentityOperator identity;
              SeparationOptions opts;
              opts.max_iter = max_iter;
              opts.tolerance = tol;
              const SeparationResult r =
                  run_separation(image_from_array(img), identity, identity, opts);
              return py::make_tuple(image_to_array(r.latent), image_to_array(r.corruption),
                                    r.report.iterations, r.report.cauchy_pass);
          },
          py::arg("image"), py::arg("max_iter") = 500, py::arg("tol") = 1e-4);

    m.def("fit_gmm",
          [](const std::vector<py::array_t<double>>& fields, int patch, int components,
             int em_iters, int stride, uint64_t seed) {
              std::vector<ScalarField> samples;
              samples.reserve(fields.size());
              for (const auto& f : fields) samples.push_back(field_from_array(f));
              GmmFitOptions opts;
              opts.n_components = components;
              opts.em_iters = em_iters;
              opts.stride = stride;
              opts.seed = seed;
              return fit_gmm_patches(samples, patch, opts);
          },
          py::arg("fields"), py::arg("patch") = 8, py::arg("components") = 3,
          py::arg("em_iters") = 40, py::arg("stride") = 2, py::arg("seed") = 0);

    m.def("train",
          [](const std::vector<py::array_t<double>>& observations,
             const std::vector<py::array_t<double>>& targets, int stages, int kernel,
             int filters, int control_points, const std::string& mode, int iters,
             int threads) {
              if (observations.size() != targets.size())
                  throw std::invalid_argument("observations/targets length mismatch");
              std::vector<TrainingPair> pairs;
              pairs.reserve(observations.size());
              for (size_t i = 0; i < observations.size(); ++i)
                  pairs.push_back(
                      {image_from_array(observations[i]), field_from_array(targets[i])});
              TrainShape shape;
              shape.stage_count = stages;
              shape.kernel_size = kernel;
              shape.filter_count = filters;
              shape.control_points = control_points;
              LbfgsOptions opts;
              opts.max_iterations = iters;
              opts.threads = threads;
              TrainResult r = train_schedule(pairs, shape, train_mode_from_string(mode),
                                             PriorParams{}, opts);
              return py::make_tuple(std::move(r.params), r.reports.back());
          },
          py::arg("observations"), py::arg("targets"), py::arg("stages") = 2,
          py::arg("kernel") = 3, py::arg("filters") = 4, py::arg("control_points") = 15,
          py::arg("mode") = "joint", py::arg("iters") = 60, py::arg("threads") = 0);

    m.def("recover_radiance",
          [](const py::array_t<double>& img, const py::array_t<double>& t, double ar, double ag,
             double ab, double epsilon) {
              AtmosphericLight a;
              a[0] = ar;
              a[1] = ag;
              a[2] = ab;
              RecoveryConfig cfg;
              cfg.epsilon = epsilon;
              return image_to_array(
                  recover_radiance(image_from_array(img), field_from_array(t), a, cfg));
          },
          py::arg("image"), py::arg("t"), py::arg("a_r"), py::arg("a_g"), py::arg("a_b"),
          py::arg("epsilon") = 0.01);

    m.def("psnr", [](const py::array_t<double>& a, const py::array_t<double>& b) {
        return psnr(image_from_array(a), image_from_array(b));
    });
    m.def("ssim", [](const py::array_t<double>& a, const py::array_t<double>& b) {
        return ssim(image_from_array(a), image_from_array(b));
    });
}
