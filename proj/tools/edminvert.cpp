// SPDX-License-Identifier: Apache-2.0
//
// edminvert: inversion-based latent editing from the command line.
//
//   edminvert edit      --input src.vslt --edited frame.vslt --out runs/edit
//   edminvert roundtrip --input src.vslt --denoiser diag-gaussian --denoiser-param s=0.5,2
//   edminvert sample    --input x_T.vslt --record-trajectory
//   edminvert invert    --input src.vslt --mode naive
//   edminvert analyze   --trajectory runs/edit/trajectory_sampling
//
// Exit codes: 0 ok, 2 config, 3 input format, 4 numerical, 5 external denoiser transport.

#include <iostream>
#include <map>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "edminvert/errors.hpp"
#include "edminvert/pipeline.hpp"

namespace {

using namespace edminvert;

struct Overrides {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> steps;
    std::optional<double> sigma_min, sigma_max, rho, sigma_data;
    std::optional<std::string> mode;
    std::optional<double> sigma_threshold;
    bool no_normalize = false;
    bool no_rescale = false;
    std::optional<std::string> rescale_form;
    std::optional<std::string> denoiser;
    std::vector<std::string> denoiser_params;
    std::optional<std::string> endpoint;
    bool record_trajectory = false;
    std::optional<std::string> out;
    std::optional<std::string> input, edited, trajectory, conditioning_extra;
};

void add_shared_flags(CLI::App* cmd, Overrides& o) {
    cmd->add_option("--config", o.config, "JSON config file (or a previous run manifest)");
    cmd->add_option("--seed", o.seed, "RNG seed for the fresh-noise branch");
    cmd->add_option("--steps", o.steps, "Number of noise levels T");
    cmd->add_option("--sigma-min", o.sigma_min);
    cmd->add_option("--sigma-max", o.sigma_max);
    cmd->add_option("--rho", o.rho);
    cmd->add_option("--sigma-data", o.sigma_data);
    cmd->add_option("--mode", o.mode, "naive | extrapolated");
    cmd->add_option("--sigma-threshold", o.sigma_threshold, "Fresh-noise threshold");
    cmd->add_flag("--no-normalize", o.no_normalize, "Skip per-channel normalization");
    cmd->add_flag("--no-rescale", o.no_rescale, "Skip rescaling to the edited frame");
    cmd->add_option("--rescale-form", o.rescale_form, "mean-preserving | as-printed");
    cmd->add_option("--denoiser", o.denoiser, "oracle-constant | iso-gaussian | diag-gaussian | affine-file | external");
    cmd->add_option("--denoiser-param", o.denoiser_params, "k=v, repeatable");
    cmd->add_option("--endpoint", o.endpoint, "host:port of an external denoiser");
    cmd->add_flag("--record-trajectory", o.record_trajectory);
    cmd->add_option("--out", o.out, "Output directory");
    cmd->add_option("--input", o.input, "Source latents (x_T for sample)");
    cmd->add_option("--edited", o.edited, "Edited first-frame latent (conditioning for sample/analyze)");
    cmd->add_option("--trajectory", o.trajectory, "Recorded trajectory directory (analyze)");
    cmd->add_option("--conditioning-extra", o.conditioning_extra, "Opaque bytes for external denoisers");
}

EditJobConfig resolve(const Overrides& o) {
    EditJobConfig cfg = o.config.empty() ? EditJobConfig{} : load_config(o.config);
    if (o.seed) cfg.inversion.rng_seed = *o.seed;
    if (o.steps) cfg.schedule.steps = *o.steps;
    if (o.sigma_min) cfg.schedule.sigma_min = *o.sigma_min;
    if (o.sigma_max) cfg.schedule.sigma_max = *o.sigma_max;
    if (o.rho) cfg.schedule.rho = *o.rho;
    if (o.sigma_data) cfg.schedule.sigma_data = *o.sigma_data;
    if (o.mode) cfg.inversion.mode = inversion_mode_from_string(*o.mode);
    if (o.sigma_threshold) cfg.inversion.sigma_threshold = *o.sigma_threshold;
    if (o.no_normalize) cfg.normalization.enabled = false;
    if (o.no_rescale) cfg.normalization.rescale = false;
    if (o.rescale_form) cfg.normalization.rescale_form = rescale_form_from_string(*o.rescale_form);
    if (o.denoiser) {
        const DenoiserKind kind = denoiser_kind_from_string(*o.denoiser);
        if (kind != cfg.denoiser.kind) cfg.denoiser.params.clear();
        cfg.denoiser.kind = kind;
    }
    for (const auto& kv : o.denoiser_params) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos || eq == 0) throw ConfigError("--denoiser-param expects k=v, got '" + kv + "'");
        cfg.denoiser.params[kv.substr(0, eq)] = kv.substr(eq + 1);
    }
    if (o.endpoint) cfg.denoiser.endpoint = *o.endpoint;
    if (o.record_trajectory) cfg.record_trajectory = true;
    if (o.out) cfg.output_dir = *o.out;
    if (o.input) cfg.inputs.source = *o.input;
    if (o.edited) cfg.inputs.edited = *o.edited;
    if (o.trajectory) cfg.inputs.trajectory = *o.trajectory;
    if (o.conditioning_extra) cfg.inputs.conditioning_extra = *o.conditioning_extra;
    apply_environment(cfg);
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Noise-extrapolated EDM inversion and latent editing"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(edminvert::kEngineVersion));

    Overrides o;
    const std::map<std::string, RunManifest (*)(const EditJobConfig&)> commands = {
        {"edit", &run_edit},         {"roundtrip", &run_roundtrip}, {"sample", &run_sample},
        {"invert", &run_invert},     {"analyze", &run_analyze},
    };
    const std::map<std::string, std::string> help = {
        {"edit", "Invert source latents and re-denoise them conditioned on an edited first frame"},
        {"roundtrip", "Invert then re-sample with the original conditioning; report reconstruction error"},
        {"sample", "Deterministically denoise x_T"},
        {"invert", "Map clean latents to x_T"},
        {"analyze", "Cosine-similarity matrix and linearity statistics of a trajectory"},
    };
    for (const auto& [name, fn] : commands) add_shared_flags(app.add_subcommand(name, help.at(name)), o);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        for (const auto& [name, fn] : commands) {
            if (!app.got_subcommand(name)) continue;
            const RunManifest manifest = fn(resolve(o));
            std::cout << manifest.summaries.dump(2) << '\n';
            std::cout << "wrote " << manifest.outputs.size() << " file(s) and manifest.json to "
                      << manifest.config.output_dir.string() << '\n';
        }
        return 0;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_code_for(e.kind());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
