// SPDX-License-Identifier: Apache-2.0
#pragma once

// Edit pipeline over VSLT latents:
//   normalize -> invert (conditioned on the source first frame)
//   -> sample (conditioned on the edited first frame) -> rescale.
// Pixel-space encode/decode happens outside the engine.

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "edminvert/denoiser.hpp"
#include "edminvert/inversion.hpp"
#include "edminvert/latent.hpp"
#include "edminvert/schedule.hpp"

namespace edminvert {

inline constexpr const char* kEngineVersion = "0.1.0";

struct NormalizationOptions {
    bool enabled = true;
    bool rescale = true;
    RescaleForm rescale_form = RescaleForm::mean_preserving;
};

struct JobInputs {
    std::filesystem::path source;      // latents (x_T for `sample`)
    std::filesystem::path edited;      // edited first frame, 1 x C x H x W
    std::filesystem::path trajectory;  // recorded trajectory directory for `analyze`
    std::filesystem::path conditioning_extra;  // opaque bytes forwarded to external denoisers
};

struct EditJobConfig {
    KarrasParams schedule;
    DenoiserSpec denoiser;
    InversionConfig inversion;
    NormalizationOptions normalization;
    JobInputs inputs;
    std::filesystem::path output_dir = "out";
    bool record_trajectory = false;
};

/// Every field written out, defaults included.
nlohmann::json to_json(const EditJobConfig& cfg);
/// Missing keys take defaults; unknown keys are a ConfigError.
EditJobConfig config_from_json(const nlohmann::json& j);
/// Reads a config file, or the "config" section of a run manifest.
EditJobConfig load_config(const std::filesystem::path& path);

/// Apply EDMINVERT_TIMEOUT_SECS to the denoiser timeout.
void apply_environment(EditJobConfig& cfg);

struct StageTiming {
    std::string stage;
    double seconds;
};

struct RunManifest {
    std::string command;
    EditJobConfig config;
    std::string engine_version = kEngineVersion;
    std::uint64_t rng_seed = 0;
    std::vector<StageTiming> timings;
    std::vector<std::filesystem::path> outputs;
    nlohmann::json summaries = nlohmann::json::object();

    nlohmann::json to_json() const;
};

RunManifest run_edit(const EditJobConfig& cfg);
RunManifest run_roundtrip(const EditJobConfig& cfg);
RunManifest run_sample(const EditJobConfig& cfg);
RunManifest run_invert(const EditJobConfig& cfg);
RunManifest run_analyze(const EditJobConfig& cfg);

}  // namespace edminvert
