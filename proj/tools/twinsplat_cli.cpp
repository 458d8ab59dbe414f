#include "twinsplat/camera.hpp"
#include "twinsplat/coarse_mesh.hpp"
#include "twinsplat/config.hpp"
#include "twinsplat/dataset.hpp"
#include "twinsplat/errors.hpp"
#include "twinsplat/evaluate.hpp"
#include "twinsplat/mesh_raster.hpp"
#include "twinsplat/pipeline.hpp"
#include "twinsplat/remesher.hpp"
#include "twinsplat/splat_renderer.hpp"
#include "twinsplat/training.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

using namespace twinsplat;
namespace fs = std::filesystem;

namespace {

PipelineConfig config_from(const std::string& path) { return path.empty() ? PipelineConfig{} : load_config(path); }

std::string view_name(const std::string& prefix, int i) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s_%02d.png", prefix.c_str(), i);
    return buf;
}

void render_splat_views(const GaussianSet& set, int views, int resolution, const fs::path& out,
                        const std::string& prefix) {
    const Eigen::Vector3d bg = set.kind == GaussianKind::normal ? kNormalBackground : Eigen::Vector3d::Zero();
    const auto cams = orbit_cameras(views, resolution);
    for (std::size_t i = 0; i < cams.size(); ++i)
        write_png(color_image(render(set, cams[i], bg)), out / view_name(prefix, static_cast<int>(i)));
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write " + path.string());
    f << text;
}

void print_step(const StepLog& s, int total) {
    if (s.step % 50 == 0 || s.step + 1 == total)
        std::fprintf(stderr, "step %d/%d  loss %.5f  mse %.5f  mask %.5f  normal %.5f\n", s.step + 1, total, s.total,
                     s.mse, s.mask, s.normal_total);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Single-image human reconstruction with twin Gaussian U-Nets"};
    app.require_subcommand(1);

    std::string config_path, out, data, image_path, mask_path, checkpoint, normal_splat, texture_splat, pred, gt,
        splat, mesh_path, case_name = "case";
    int n = 1, views = 8, resolution = 256;
    std::uint64_t seed = 0;

    auto* synth = app.add_subcommand("synth-data", "Generate synthetic scans and a manifest");
    synth->add_option("--n", n, "Number of scans")->check(CLI::PositiveNumber);
    synth->add_option("--seed", seed, "Dataset seed");
    synth->add_option("--out", out, "Output directory")->required();
    synth->add_option("--config", config_path, "Config file (synth_* keys)");

    auto* train_cmd = app.add_subcommand("train", "Train on the accepted scans of a manifest");
    train_cmd->add_option("--data", data, "Manifest file or dataset directory")->required();
    train_cmd->add_option("--config", config_path, "Config file");
    train_cmd->add_option("--out", out, "Output directory for metrics.csv and checkpoint.bin")->required();

    auto* recon = app.add_subcommand("reconstruct", "Predict texture and normal Gaussians from one image");
    recon->add_option("--image", image_path, "Front image PNG")->required();
    recon->add_option("--mask", mask_path, "Part label PNG")->required();
    recon->add_option("--checkpoint", checkpoint, "Model checkpoint")->required();
    recon->add_option("--out", out, "Output directory")->required();
    recon->add_option("--views", views, "Turntable views")->check(CLI::PositiveNumber);
    recon->add_option("--resolution", resolution, "Turntable render side")->check(CLI::PositiveNumber);

    auto* remesh_cmd = app.add_subcommand("remesh", "Extract and refine a mesh from normal Gaussians");
    remesh_cmd->add_option("--normal-splat", normal_splat, "Normal Gaussian splat file")->required();
    remesh_cmd->add_option("--texture-splat", texture_splat, "Texture splat used to color the vertices");
    remesh_cmd->add_option("--config", config_path, "Config file (remesh_* keys)");
    remesh_cmd->add_option("--out", out, "Output OBJ path")->required();

    auto* eval_cmd = app.add_subcommand("evaluate", "Score a predicted mesh against ground truth");
    eval_cmd->add_option("--pred", pred, "Predicted mesh (OBJ or PLY)")->required();
    eval_cmd->add_option("--gt", gt, "Ground-truth mesh (OBJ or PLY)")->required();
    eval_cmd->add_option("--out", out, "Output CSV path")->required();
    eval_cmd->add_option("--case", case_name, "Case name for the CSV row");
    eval_cmd->add_option("--config", config_path, "Config file (eval_* keys)");

    auto* render_cmd = app.add_subcommand("render", "Render a splat file or mesh on the orbit circle");
    auto* splat_opt = render_cmd->add_option("--splat", splat, "Splat file");
    auto* mesh_opt = render_cmd->add_option("--mesh", mesh_path, "Mesh file (OBJ or PLY)");
    splat_opt->excludes(mesh_opt);
    render_cmd->add_option("--views", views, "Number of views")->check(CLI::PositiveNumber);
    render_cmd->add_option("--resolution", resolution, "Image side")->check(CLI::PositiveNumber);
    render_cmd->add_option("--out", out, "Output directory")->required();

    auto* ablate = app.add_subcommand("ablate", "Train and score the four ablation variants");
    ablate->add_option("--data", data, "Manifest file or dataset directory")->required();
    ablate->add_option("--config", config_path, "Config file");
    ablate->add_option("--out", out, "Output directory")->required();

    auto* config_cmd = app.add_subcommand("config", "Print every config key with its default and meaning");

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth->parsed()) {
            const PipelineConfig c = config_from(config_path);
            const DatasetManifest m = build_dataset(n, seed, out, c.synth);
            std::printf("wrote %zu scans to %s\n", m.entries.size(), out.c_str());
        } else if (train_cmd->parsed()) {
            const PipelineConfig c = config_from(config_path);
            const int total = c.train.steps;
            (void)train(load_manifest(data), c, out, [&](const StepLog& s) { print_step(s, total); });
            std::printf("wrote %s\n", (fs::path(out) / "checkpoint.bin").c_str());
        } else if (recon->parsed()) {
            TwinsModel model = load_checkpoint(checkpoint);
            const Reconstruction r = reconstruct(model, read_png(image_path), read_label_png(mask_path));
            fs::create_directories(out);
            save_splat(r.texture, fs::path(out) / "texture.splat");
            save_splat(r.normal, fs::path(out) / "normal.splat");
            render_splat_views(r.texture, views, resolution, out, "turntable");
            render_splat_views(r.normal, views, resolution, out, "normal");
            std::printf("wrote %s\n", out.c_str());
        } else if (remesh_cmd->parsed()) {
            const PipelineConfig c = config_from(config_path);
            const GaussianSet normals = load_splat(normal_splat);
            if (normals.kind != GaussianKind::normal)
                throw InputError(normal_splat + " holds texture Gaussians, expected normal Gaussians");
            TriMesh mesh = twinsplat::remesh(normals, c.remesh);
            if (!texture_splat.empty()) mesh = transfer_colors(mesh, load_splat(texture_splat));
            if (fs::path(out).has_parent_path()) fs::create_directories(fs::path(out).parent_path());
            save_obj(mesh, out);
            std::printf("wrote %s (%zu vertices, %zu faces)\n", out.c_str(), mesh.vertices.size(), mesh.faces.size());
        } else if (eval_cmd->parsed()) {
            const PipelineConfig c = config_from(config_path);
            const EvalReport r = evaluate(load_mesh(pred), load_mesh(gt), c.eval);
            if (fs::path(out).has_parent_path()) fs::create_directories(fs::path(out).parent_path());
            write_text(out, std::string(kReportHeader) + "\n" + report_row(case_name, r) + "\n");
            std::printf("%s\n%s\n", kReportHeader, report_row(case_name, r).c_str());
        } else if (render_cmd->parsed()) {
            if (splat.empty() == mesh_path.empty()) throw InputError("render: give exactly one of --splat or --mesh");
            fs::create_directories(out);
            if (!splat.empty()) {
                render_splat_views(load_splat(splat), views, resolution, out, "view");
            } else {
                const TriMesh mesh = load_mesh(mesh_path);
                const auto cams = orbit_cameras(views, resolution);
                for (std::size_t i = 0; i < cams.size(); ++i) {
                    const MeshMaps maps = render_mesh_maps(mesh, cams[i]);
                    write_png(mesh.has_colors() ? maps.color : maps.normal,
                              fs::path(out) / view_name("view", static_cast<int>(i)));
                }
            }
            std::printf("wrote %d views to %s\n", views, out.c_str());
        } else if (ablate->parsed()) {
            const PipelineConfig c = config_from(config_path);
            const int total = c.train.steps;
            const auto rows = run_ablation(load_manifest(data), c, out, [&](const std::string& v, const StepLog& s) {
                if (s.step % 50 == 0) std::fprintf(stderr, "[%s] ", v.c_str());
                print_step(s, total);
            });
            std::printf("%s\n", kReportHeader);
            for (const auto& r : rows) std::printf("%s\n", report_row(r.variant + "/" + r.scan_id, r.report).c_str());
        } else if (config_cmd->parsed()) {
            for (const auto& k : config_keys())
                std::printf("# %s\n%s = %s\n", k.description.c_str(), k.name.c_str(), k.default_value.c_str());
        }
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}
