#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <stdexcept>

#include "texloc/eval.hpp"
#include "texloc/features.hpp"
#include "texloc/locate.hpp"
#include "texloc/mapdb.hpp"
#include "texloc/pca.hpp"
#include "texloc/stitch.hpp"
#include "texloc/synth.hpp"

namespace py = pybind11;
using namespace texloc;

namespace {

GrayImage image_from_array(const py::array_t<float, py::array::c_style | py::array::forcecast>& a) {
    if (a.ndim() != 2) throw std::invalid_argument("expected a 2-d grayscale array");
    GrayImage img(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)));
    std::memcpy(img.pixels.data(), a.data(), sizeof(float) * img.pixels.size());
    return img;
}

py::array_t<float> array_from_image(const GrayImage& img) {
    py::array_t<float> a({img.height, img.width});
    std::memcpy(a.mutable_data(), img.pixels.data(), sizeof(float) * img.pixels.size());
    return a;
}

py::array_t<double> keypoints_array(const std::vector<Keypoint>& kps) {
    py::array_t<double> a({static_cast<py::ssize_t>(kps.size()), static_cast<py::ssize_t>(5)});
    auto r = a.mutable_unchecked<2>();
    for (size_t i = 0; i < kps.size(); ++i) {
        r(static_cast<py::ssize_t>(i), 0) = kps[i].x;
        r(static_cast<py::ssize_t>(i), 1) = kps[i].y;
        r(static_cast<py::ssize_t>(i), 2) = kps[i].scale;
        r(static_cast<py::ssize_t>(i), 3) = kps[i].orientation;
        r(static_cast<py::ssize_t>(i), 4) = kps[i].response;
    }
    return a;
}

py::array_t<float> descriptors_array(const std::vector<Descriptor>& descs) {
    const py::ssize_t dim = descs.empty() ? 0 : descs[0].dim();
    py::array_t<float> a({static_cast<py::ssize_t>(descs.size()), dim});
    auto r = a.mutable_unchecked<2>();
    for (size_t i = 0; i < descs.size(); ++i) {
        for (py::ssize_t j = 0; j < dim; ++j) {
            r(static_cast<py::ssize_t>(i), j) = descs[i].values[static_cast<size_t>(j)];
        }
    }
    return a;
}

features::DetectorConfig detector_from_kwargs(int octaves, int scales_per_octave, double base_sigma,
                                              double contrast, double edge_ratio, int max_features) {
    features::DetectorConfig cfg;
    cfg.octaves = octaves;
    cfg.scales_per_octave = scales_per_octave;
    cfg.base_sigma = base_sigma;
    cfg.contrast_threshold = contrast;
    cfg.edge_ratio_threshold = edge_ratio;
    cfg.max_features = max_features;
    return cfg;
}

// Database plus its rebuilt search index.
struct PyDatabase {
    mapdb::MapDatabase db;
    index::AnnIndex ann;

    explicit PyDatabase(mapdb::MapDatabase d) : db(std::move(d)) {
        ann = index::AnnIndex::build(db.features, db.buckets, 4, db.meta.seed);
    }

    py::dict localize_array(const py::array_t<float, py::array::c_style | py::array::forcecast>& a,
                            int checks, uint64_t seed, double cell_size, int min_inliers) {
        locate::LocateConfig cfg;
        cfg.checks = checks;
        cfg.seed = seed;
        cfg.cell_size = cell_size;
        cfg.min_inliers = min_inliers;
        const locate::LocalizeOutcome out = locate::localize(db, ann, image_from_array(a), cfg);
        py::dict d;
        d["success"] = out.success;
        d["failure_reason"] = out.success ? py::object(py::none())
                                          : py::object(py::str(locate::to_string(out.reason)));
        if (out.success) d["pose"] = out.result.pose;
        d["inliers"] = out.result.inliers.size();
        d["peak_votes"] = out.result.peak_votes;
        d["second_peak_votes"] = out.result.second_peak_votes;
        d["total_matches"] = out.result.total_matches;
        d["total_ms"] = out.result.timings.total_ms;
        return d;
    }
};

}  // namespace

PYBIND11_MODULE(_texloc, m) {
    m.doc() = "Ground-texture global localization: mapping, compact feature databases, "
              "vote-based pose recovery";

    py::class_<Pose2>(m, "Pose2")
        .def(py::init<>())
        .def(py::init([](double theta, double tx, double ty) {
                 return Pose2{wrap_angle(theta), tx, ty};
             }),
             py::arg("theta"), py::arg("tx"), py::arg("ty"))
        .def_readwrite("theta", &Pose2::theta)
        .def_readwrite("tx", &Pose2::tx)
        .def_readwrite("ty", &Pose2::ty)
        .def("__repr__", [](const Pose2& p) {
            return "Pose2(theta=" + std::to_string(p.theta) + ", tx=" + std::to_string(p.tx) +
                   ", ty=" + std::to_string(p.ty) + ")";
        });
    m.def("compose", &compose, py::arg("a"), py::arg("b"));
    m.def("inverse", &inverse, py::arg("p"));
    m.def(
        "apply",
        [](const Pose2& p, double x, double y) {
            const Vec2 v = apply(p, {x, y});
            return py::make_tuple(v.x, v.y);
        },
        py::arg("p"), py::arg("x"), py::arg("y"));

    py::class_<synth::SyntheticTexture>(m, "SyntheticTexture")
        .def_property_readonly("array",
                               [](const synth::SyntheticTexture& t) { return array_from_image(t.image); })
        .def_readonly("seed", &synth::SyntheticTexture::seed)
        .def_property_readonly("width", [](const synth::SyntheticTexture& t) { return t.image.width; })
        .def_property_readonly("height", [](const synth::SyntheticTexture& t) { return t.image.height; });

    m.def(
        "generate_texture",
        [](uint64_t seed, int width, int height, const std::string& style) {
            return synth::generate_texture(seed, width, height, synth::style_from_string(style));
        },
        py::arg("seed"), py::arg("width"), py::arg("height"), py::arg("style") = "scratchy");

    m.def(
        "sample_query",
        [](const synth::SyntheticTexture& tex, const Pose2& pose, int width, int height,
           double occlusion, double blur, double noise, double impulse, uint64_t seed) {
            synth::Degradation deg;
            deg.occlusion_fraction = occlusion;
            deg.blur_length = blur;
            deg.noise_sigma = noise;
            deg.impulse_density = impulse;
            deg.seed = seed;
            const synth::QuerySample q = synth::sample_query(tex, pose, width, height, deg);
            py::dict d;
            d["image"] = array_from_image(q.image);
            d["truth"] = q.truth;
            d["occluded_fraction"] = q.occluded_fraction;
            return d;
        },
        py::arg("texture"), py::arg("pose"), py::arg("width"), py::arg("height"),
        py::arg("occlusion") = 0.0, py::arg("blur") = 0.0, py::arg("noise") = 0.0,
        py::arg("impulse") = 0.0, py::arg("seed") = 0);

    m.def(
        "detect_and_describe",
        [](const py::array_t<float, py::array::c_style | py::array::forcecast>& image, int octaves,
           int scales_per_octave, double base_sigma, double contrast, double edge_ratio,
           int max_features) {
            const FeatureSet fs = features::detect_and_describe(
                image_from_array(image), detector_from_kwargs(octaves, scales_per_octave, base_sigma,
                                                              contrast, edge_ratio, max_features));
            return py::make_tuple(keypoints_array(fs.keypoints), descriptors_array(fs.descriptors));
        },
        py::arg("image"), py::arg("octaves") = 4, py::arg("scales_per_octave") = 3,
        py::arg("base_sigma") = 1.6, py::arg("contrast") = 0.03, py::arg("edge_ratio") = 10.0,
        py::arg("max_features") = 0,
        "Keypoints as an (N, 5) array of (x, y, scale, orientation, response) plus (N, 128) "
        "descriptors");

    m.def(
        "stitch_frames",
        [](const std::vector<py::array_t<float, py::array::c_style | py::array::forcecast>>& frames,
           uint64_t seed) {
            std::vector<FeatureSet> sets(frames.size());
            std::vector<std::pair<int, int>> sizes(frames.size());
            for (size_t i = 0; i < frames.size(); ++i) {
                const GrayImage img = image_from_array(frames[i]);
                sizes[i] = {img.width, img.height};
                sets[i] = features::detect_and_describe(img);
            }
            stitch::StitchConfig cfg;
            cfg.seed = seed;
            const auto result = stitch::stitch_sequence(sets, sizes, cfg);
            if (std::holds_alternative<stitch::BrokenChain>(result)) {
                throw std::runtime_error(
                    "chain broken at frame " +
                    std::to_string(std::get<stitch::BrokenChain>(result).index));
            }
            const auto& ok = std::get<stitch::StitchResult>(result);
            std::vector<Pose2> poses;
            for (const auto& im : ok.images) poses.push_back(im.pose);
            return poses;
        },
        py::arg("frames"), py::arg("seed") = 0,
        "Stitch capture-ordered frames; returns one pose per frame (frame 0 is the gauge)");

    py::class_<PyDatabase>(m, "Database")
        .def_property_readonly("num_images", [](const PyDatabase& d) { return d.db.images.size(); })
        .def_property_readonly("num_features",
                               [](const PyDatabase& d) { return d.db.features.size(); })
        .def_property_readonly("k", [](const PyDatabase& d) { return d.db.basis.k; })
        .def_property_readonly("mm_per_pixel",
                               [](const PyDatabase& d) { return d.db.meta.mm_per_pixel; })
        .def("save", [](const PyDatabase& d, const std::string& path) { mapdb::save(d.db, path); })
        .def("localize", &PyDatabase::localize_array, py::arg("image"), py::arg("checks") = 32,
             py::arg("seed") = 0, py::arg("cell_size") = 50.0, py::arg("min_inliers") = 5);

    m.def(
        "build_database",
        [](const std::vector<py::array_t<float, py::array::c_style | py::array::forcecast>>& frames,
           const std::vector<Pose2>& poses, int k, int per_image, uint64_t seed,
           const std::string& policy, double mm_per_pixel) {
            if (frames.size() != poses.size()) {
                throw std::invalid_argument("frames and poses must pair up");
            }
            std::vector<mapdb::MapImage> images(frames.size());
            std::vector<FeatureSet> sets(frames.size());
            for (size_t i = 0; i < frames.size(); ++i) {
                const GrayImage img = image_from_array(frames[i]);
                images[i] = {static_cast<uint32_t>(i), poses[i], img.width, img.height, ""};
                sets[i] = features::detect_and_describe(img);
            }
            mapdb::BuildParams bp;
            bp.k = k;
            bp.features_per_image = per_image;
            bp.seed = seed;
            bp.policy = policy == "top_response" ? mapdb::SelectionPolicy::top_response
                                                 : mapdb::SelectionPolicy::random;
            bp.mm_per_pixel = mm_per_pixel;
            return PyDatabase(mapdb::build_database(images, sets, bp));
        },
        py::arg("frames"), py::arg("poses"), py::arg("k") = 16, py::arg("per_image") = 50,
        py::arg("seed") = 0, py::arg("policy") = "random",
        py::arg("mm_per_pixel") = kDefaultMmPerPixel,
        "Build a compact database from posed frames");

    m.def("load_database",
          [](const std::string& path) { return PyDatabase(mapdb::load(path)); },
          py::arg("path"));
}
