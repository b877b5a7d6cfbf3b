// SPDX-License-Identifier: Apache-2.0
#include "edminvert/pipeline.hpp"

#include <chrono>
#include <fstream>
#include <iterator>
#include <type_traits>

#include "edminvert/analysis.hpp"
#include "edminvert/errors.hpp"
#include "edminvert/sampler.hpp"
#include "edminvert/vslt.hpp"
#include "edminvert/wire.hpp"

namespace edminvert {

using nlohmann::json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Config <-> JSON

json to_json(const EditJobConfig& cfg) {
    json params = json::object();
    for (const auto& [k, v] : cfg.denoiser.params) params[k] = v;
    return {
        {"schedule",
         {{"sigma_min", cfg.schedule.sigma_min},
          {"sigma_max", cfg.schedule.sigma_max},
          {"rho", cfg.schedule.rho},
          {"steps", cfg.schedule.steps},
          {"sigma_data", cfg.schedule.sigma_data}}},
        {"denoiser",
         {{"kind", to_string(cfg.denoiser.kind)},
          {"params", params},
          {"endpoint", cfg.denoiser.endpoint},
          {"timeout_secs", cfg.denoiser.timeout_secs}}},
        {"inversion",
         {{"mode", to_string(cfg.inversion.mode)},
          {"sigma_threshold", cfg.inversion.sigma_threshold},
          {"seed", cfg.inversion.rng_seed}}},
        {"normalization",
         {{"enabled", cfg.normalization.enabled},
          {"rescale", cfg.normalization.rescale},
          {"rescale_form", to_string(cfg.normalization.rescale_form)}}},
        {"inputs",
         {{"source", cfg.inputs.source.string()},
          {"edited", cfg.inputs.edited.string()},
          {"trajectory", cfg.inputs.trajectory.string()},
          {"conditioning_extra", cfg.inputs.conditioning_extra.string()}}},
        {"output", cfg.output_dir.string()},
        {"record_trajectory", cfg.record_trajectory},
    };
}

namespace {

void check_keys(const json& j, const char* section, std::initializer_list<const char*> allowed) {
    if (!j.is_object()) throw ConfigError(std::string("config section '") + section + "' must be an object");
    for (const auto& [key, value] : j.items()) {
        bool ok = false;
        for (const char* a : allowed) ok = ok || key == a;
        if (!ok) throw ConfigError(std::string("unknown config key '") + key + "' in section '" + section + "'");
    }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

std::string param_text(const json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    if (v.is_array()) {
        std::string out;
        for (const auto& e : v) out += (out.empty() ? "" : ",") + param_text(e);
        return out;
    }
    return v.dump();
}

}  // namespace

EditJobConfig config_from_json(const json& j) {
    EditJobConfig cfg;
    try {
        check_keys(j, "<root>",
                   {"schedule", "denoiser", "inversion", "normalization", "inputs", "output", "record_trajectory"});
        if (j.contains("schedule")) {
            const auto& s = j.at("schedule");
            check_keys(s, "schedule", {"sigma_min", "sigma_max", "rho", "steps", "sigma_data"});
            read(s, "sigma_min", cfg.schedule.sigma_min);
            read(s, "sigma_max", cfg.schedule.sigma_max);
            read(s, "rho", cfg.schedule.rho);
            read(s, "steps", cfg.schedule.steps);
            read(s, "sigma_data", cfg.schedule.sigma_data);
        }
        if (j.contains("denoiser")) {
            const auto& d = j.at("denoiser");
            check_keys(d, "denoiser", {"kind", "params", "endpoint", "timeout_secs"});
            if (d.contains("kind")) cfg.denoiser.kind = denoiser_kind_from_string(d.at("kind").get<std::string>());
            if (d.contains("params")) {
                for (const auto& [k, v] : d.at("params").items()) cfg.denoiser.params[k] = param_text(v);
            }
            read(d, "endpoint", cfg.denoiser.endpoint);
            read(d, "timeout_secs", cfg.denoiser.timeout_secs);
        }
        if (j.contains("inversion")) {
            const auto& inv = j.at("inversion");
            check_keys(inv, "inversion", {"mode", "sigma_threshold", "seed"});
            if (inv.contains("mode")) cfg.inversion.mode = inversion_mode_from_string(inv.at("mode").get<std::string>());
            read(inv, "sigma_threshold", cfg.inversion.sigma_threshold);
            read(inv, "seed", cfg.inversion.rng_seed);
        }
        if (j.contains("normalization")) {
            const auto& n = j.at("normalization");
            check_keys(n, "normalization", {"enabled", "rescale", "rescale_form"});
            read(n, "enabled", cfg.normalization.enabled);
            read(n, "rescale", cfg.normalization.rescale);
            if (n.contains("rescale_form")) {
                cfg.normalization.rescale_form = rescale_form_from_string(n.at("rescale_form").get<std::string>());
            }
        }
        if (j.contains("inputs")) {
            const auto& in = j.at("inputs");
            check_keys(in, "inputs", {"source", "edited", "trajectory", "conditioning_extra"});
            auto path = [&](const char* key, fs::path& out) {
                if (in.contains(key)) out = in.at(key).get<std::string>();
            };
            path("source", cfg.inputs.source);
            path("edited", cfg.inputs.edited);
            path("trajectory", cfg.inputs.trajectory);
            path("conditioning_extra", cfg.inputs.conditioning_extra);
        }
        if (j.contains("output")) cfg.output_dir = j.at("output").get<std::string>();
        read(j, "record_trajectory", cfg.record_trajectory);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("invalid config: ") + e.what());
    }
    return cfg;
}

EditJobConfig load_config(const fs::path& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config " + path.string());
    json j;
    try {
        j = json::parse(is);
    } catch (const json::exception& e) {
        throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
    }
    if (j.is_object() && j.contains("config") && j.contains("engine_version")) return config_from_json(j.at("config"));
    return config_from_json(j);
}

void apply_environment(EditJobConfig& cfg) {
    cfg.denoiser.timeout_secs = wire::timeout_from_env(cfg.denoiser.timeout_secs);
}

json RunManifest::to_json() const {
    json t = json::array();
    for (const auto& s : timings) t.push_back({{"stage", s.stage}, {"seconds", s.seconds}});
    json files = json::array();
    for (const auto& p : outputs) files.push_back(p.string());
    return {
        {"command", command}, {"engine_version", engine_version}, {"rng_seed", rng_seed},
        {"config", edminvert::to_json(config)}, {"timings", t}, {"outputs", files},
        {"summaries", summaries},
    };
}

// ---------------------------------------------------------------------------
// Job plumbing

namespace {

json stats_json(const ChannelStats& s) { return {{"mean", s.mean}, {"std", s.std}}; }

/// Tracks outputs of one run so a failed stage can remove them.
class Job {
public:
    Job(std::string command, const EditJobConfig& cfg) {
        manifest_.command = std::move(command);
        manifest_.config = cfg;
        manifest_.rng_seed = cfg.inversion.rng_seed;
        out_ = cfg.output_dir;
    }

    template <typename Fn>
    auto stage(const std::string& name, Fn&& fn) -> std::invoke_result_t<Fn> {
        const auto start = std::chrono::steady_clock::now();
        auto record = [&] {
            const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - start;
            manifest_.timings.push_back({name, dt.count()});
        };
        try {
            if constexpr (std::is_void_v<std::invoke_result_t<Fn>>) {
                fn();
                record();
            } else {
                auto result = fn();
                record();
                return result;
            }
        } catch (const Error& e) {
            cleanup();
            throw Error(e.kind(), "stage '" + name + "': " + e.what());
        } catch (const fs::filesystem_error& e) {
            cleanup();
            throw Error(ErrorKind::format, "stage '" + name + "': " + e.what());
        } catch (...) {
            cleanup();
            throw;
        }
    }

    void write_tensor(const std::string& name, const LatentTensor& x) {
        ensure_dir();
        const fs::path p = out_ / name;
        written_.push_back(p);
        save_tensor(x, p);
        manifest_.outputs.push_back(p);
    }

    void write_text(const std::string& name, const std::string& text) {
        ensure_dir();
        const fs::path p = out_ / name;
        written_.push_back(p);
        std::ofstream os(p);
        os << text << '\n';
        if (!os) throw FormatError("cannot write " + p.string());
        manifest_.outputs.push_back(p);
    }

    void write_trajectory(const std::string& name, const TrajectoryRecord& record) {
        ensure_dir();
        const fs::path dir = out_ / name;
        written_.push_back(dir);
        for (auto& p : save_trajectory(record, dir)) manifest_.outputs.push_back(std::move(p));
    }

    RunManifest& manifest() { return manifest_; }

    RunManifest finish() {
        try {
            ensure_dir();
            std::ofstream os(out_ / "manifest.json");
            os << manifest_.to_json().dump(2) << '\n';
            if (!os) throw FormatError("cannot write manifest");
        } catch (...) {
            cleanup();
            throw;
        }
        return manifest_;
    }

private:
    void ensure_dir() {
        if (!fs::exists(out_)) {
            fs::create_directories(out_);
            created_dir_ = true;
        }
    }

    void cleanup() noexcept {
        std::error_code ec;
        for (const auto& p : written_) fs::remove_all(p, ec);
        if (created_dir_) fs::remove(out_, ec);  // only if now empty
        written_.clear();
    }

    RunManifest manifest_;
    fs::path out_;
    std::vector<fs::path> written_;
    bool created_dir_ = false;
};

struct WorkingLatents {
    LatentTensor source;   // as loaded
    LatentTensor working;  // normalized (or the source itself)
    std::vector<double> scale;  // σ_in per channel, or ones
    ChannelStats input_stats;
};

void require_path(const fs::path& p, const char* what) {
    if (p.empty()) throw ConfigError(std::string("missing input: ") + what);
}

void require_distinct(const EditJobConfig& cfg) {
    std::vector<fs::path> paths;
    for (const auto& p : {cfg.inputs.source, cfg.inputs.edited, cfg.inputs.trajectory, cfg.output_dir}) {
        if (p.empty()) continue;
        const fs::path norm = fs::weakly_canonical(p);
        for (const auto& q : paths) {
            if (q == norm) throw ConfigError("input and output paths must be distinct: " + p.string());
        }
        paths.push_back(norm);
    }
}

WorkingLatents prepare(const EditJobConfig& cfg) {
    require_path(cfg.inputs.source, "source latents");
    WorkingLatents w;
    w.source = load_tensor(cfg.inputs.source);
    w.input_stats = channel_stats(w.source, StatsScope::all_frames);
    if (cfg.normalization.enabled) {
        NormalizedLatent n = normalize_input(w.source);
        w.working = std::move(n.latent);
        w.scale = n.stats.std;
    } else {
        w.working = w.source;
        w.scale.assign(w.source.shape().channels, 1.0);
    }
    return w;
}

std::vector<std::uint8_t> load_extra(const EditJobConfig& cfg) {
    if (cfg.inputs.conditioning_extra.empty()) return {};
    std::ifstream is(cfg.inputs.conditioning_extra, std::ios::binary);
    if (!is) throw FormatError("cannot open " + cfg.inputs.conditioning_extra.string());
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

NoiseSchedule schedule_for(const EditJobConfig& cfg) { return build_karras_schedule(cfg.schedule); }

}  // namespace

// ---------------------------------------------------------------------------
// Commands

RunManifest run_edit(const EditJobConfig& cfg) {
    Job job("edit", cfg);
    require_distinct(cfg);
    const NoiseSchedule schedule = job.stage("setup", [&] { return schedule_for(cfg); });

    struct Prepared {
        WorkingLatents latents;
        LatentTensor edited_raw;
        LatentTensor edited_working;
    };
    Prepared prep = job.stage("encode_norm", [&] {
        require_path(cfg.inputs.edited, "edited first frame");
        WorkingLatents w = prepare(cfg);
        LatentTensor edited = load_tensor(cfg.inputs.edited);
        const Shape& s = w.source.shape();
        if (edited.shape() != Shape{1, s.channels, s.height, s.width}) {
            throw ConfigError("edited frame shape " + edited.shape().str() + " must be [1, C, H, W] of source " +
                              s.str());
        }
        LatentTensor edited_working = divide_channels(edited, w.scale);
        return Prepared{std::move(w), std::move(edited), std::move(edited_working)};
    });
    const LatentTensor& x0 = prep.latents.working;
    auto denoiser = job.stage("setup_denoiser",
                              [&] { return make_denoiser(cfg.denoiser, x0.shape(), schedule.sigma_data(), &x0); });
    const std::vector<std::uint8_t> extra = job.stage("load_conditioning", [&] { return load_extra(cfg); });

    InversionResult inverted = job.stage("invert", [&] {
        ConditioningPayload cond{x0.frame(0), extra};
        return invert(x0, schedule, *denoiser, cond, cfg.inversion, cfg.record_trajectory);
    });
    SampleResult sampled = job.stage("diffuse", [&] {
        ConditioningPayload cond{prep.edited_working, extra};
        return sample(inverted.x_T, schedule, *denoiser, cond, cfg.record_trajectory);
    });
    LatentTensor out = job.stage("rescale", [&] {
        if (!cfg.normalization.rescale) return sampled.x0;
        const ChannelStats img = channel_stats(prep.edited_raw, StatsScope::first_frame_only);
        return rescale_output(sampled.x0, img, cfg.normalization.rescale_form);
    });
    job.stage("write", [&] {
        job.write_tensor("output.vslt", out);
        if (cfg.record_trajectory) {
            job.write_trajectory("trajectory_inversion", *inverted.trajectory);
            job.write_trajectory("trajectory_sampling", *sampled.trajectory);
        }
        auto& s = job.manifest().summaries;
        s["input_stats"] = stats_json(prep.latents.input_stats);
        s["output_first_frame_stats"] = stats_json(channel_stats(out, StatsScope::first_frame_only));
        s["inverted_max_abs"] = max_abs_diff(inverted.x_T, LatentTensor::filled(inverted.x_T.shape(), 0.0f));
    });
    return job.finish();
}

RunManifest run_roundtrip(const EditJobConfig& cfg) {
    Job job("roundtrip", cfg);
    require_distinct(cfg);
    const NoiseSchedule schedule = job.stage("setup", [&] { return schedule_for(cfg); });
    WorkingLatents w = job.stage("encode_norm", [&] { return prepare(cfg); });
    const LatentTensor& x0 = w.working;
    auto denoiser = job.stage("setup_denoiser",
                              [&] { return make_denoiser(cfg.denoiser, x0.shape(), schedule.sigma_data(), &x0); });
    const std::vector<std::uint8_t> extra = job.stage("load_conditioning", [&] { return load_extra(cfg); });
    const ConditioningPayload cond{x0.frame(0), extra};

    InversionResult inverted = job.stage(
        "invert", [&] { return invert(x0, schedule, *denoiser, cond, cfg.inversion, cfg.record_trajectory); });
    SampleResult sampled = job.stage(
        "diffuse", [&] { return sample(inverted.x_T, schedule, *denoiser, cond, cfg.record_trajectory); });
    // Undo the normalization exactly; the comparison is against the source as loaded.
    LatentTensor recon = job.stage("denormalize", [&] { return multiply_channels(sampled.x0, w.scale); });
    ReconReport report = job.stage("report", [&] { return reconstruction_report(w.source, recon); });
    job.stage("write", [&] {
        job.write_tensor("reconstruction.vslt", recon);
        job.write_text("reconstruction_report.json", recon_report_json(report));
        if (cfg.record_trajectory) {
            job.write_trajectory("trajectory_inversion", *inverted.trajectory);
            job.write_trajectory("trajectory_sampling", *sampled.trajectory);
        }
        job.manifest().summaries["reconstruction"] = json::parse(recon_report_json(report));
        job.manifest().summaries["input_stats"] = stats_json(w.input_stats);
    });
    return job.finish();
}

RunManifest run_sample(const EditJobConfig& cfg) {
    Job job("sample", cfg);
    require_distinct(cfg);
    const NoiseSchedule schedule = job.stage("setup", [&] { return schedule_for(cfg); });
    struct Inputs {
        LatentTensor x_T;
        ConditioningPayload cond;
    };
    Inputs in = job.stage("load", [&] {
        require_path(cfg.inputs.source, "x_T latents");
        Inputs r{load_tensor(cfg.inputs.source), {}};
        if (!cfg.inputs.edited.empty()) r.cond.first_frame = load_tensor(cfg.inputs.edited);
        r.cond.extra = load_extra(cfg);
        return r;
    });
    auto denoiser = job.stage("setup_denoiser",
                              [&] { return make_denoiser(cfg.denoiser, in.x_T.shape(), schedule.sigma_data()); });
    SampleResult sampled =
        job.stage("diffuse", [&] { return sample(in.x_T, schedule, *denoiser, in.cond, cfg.record_trajectory); });
    job.stage("write", [&] {
        job.write_tensor("x0.vslt", sampled.x0);
        if (cfg.record_trajectory) job.write_trajectory("trajectory_sampling", *sampled.trajectory);
    });
    return job.finish();
}

RunManifest run_invert(const EditJobConfig& cfg) {
    Job job("invert", cfg);
    require_distinct(cfg);
    const NoiseSchedule schedule = job.stage("setup", [&] { return schedule_for(cfg); });
    WorkingLatents w = job.stage("encode_norm", [&] { return prepare(cfg); });
    const LatentTensor& x0 = w.working;
    auto denoiser = job.stage("setup_denoiser",
                              [&] { return make_denoiser(cfg.denoiser, x0.shape(), schedule.sigma_data(), &x0); });
    const std::vector<std::uint8_t> extra = job.stage("load_conditioning", [&] { return load_extra(cfg); });
    InversionResult inverted = job.stage("invert", [&] {
        ConditioningPayload cond{x0.frame(0), extra};
        return invert(x0, schedule, *denoiser, cond, cfg.inversion, cfg.record_trajectory);
    });
    job.stage("write", [&] {
        job.write_tensor("x_T.vslt", inverted.x_T);
        job.write_tensor("normalized.vslt", x0);
        if (cfg.record_trajectory) job.write_trajectory("trajectory_inversion", *inverted.trajectory);
        job.manifest().summaries["input_stats"] = stats_json(w.input_stats);
    });
    return job.finish();
}

RunManifest run_analyze(const EditJobConfig& cfg) {
    Job job("analyze", cfg);
    require_distinct(cfg);
    TrajectoryRecord traj = job.stage("trajectory", [&] {
        if (!cfg.inputs.trajectory.empty()) return load_trajectory(cfg.inputs.trajectory);
        if (cfg.inputs.source.empty()) {
            throw ConfigError("analyze needs a recorded trajectory or x_T latents to sample from");
        }
        const NoiseSchedule schedule = schedule_for(cfg);
        const LatentTensor x_T = load_tensor(cfg.inputs.source);
        ConditioningPayload cond;
        if (!cfg.inputs.edited.empty()) cond.first_frame = load_tensor(cfg.inputs.edited);
        auto denoiser = make_denoiser(cfg.denoiser, x_T.shape(), schedule.sigma_data());
        return *sample(x_T, schedule, *denoiser, cond, true).trajectory;
    });
    CosineMatrix m = job.stage("cosine", [&] {
        const TrajectoryPoint* clean = traj.clean_point();
        if (clean == nullptr) throw ConfigError("trajectory has no sigma = 0 latent to measure against");
        return cosine_matrix(traj, clean->latent);
    });
    const TrajectoryStats stats = trajectory_stats(m);
    job.stage("write", [&] {
        job.write_text("cosine_matrix.csv", cosine_matrix_csv(m));
        job.write_text("trajectory_stats.json", trajectory_stats_json(stats));
        job.manifest().summaries["trajectory_stats"] = json::parse(trajectory_stats_json(stats));
    });
    return job.finish();
}

}  // namespace edminvert
